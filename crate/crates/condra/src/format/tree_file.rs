use std::fs;
use std::path::Path;
use std::sync::Arc;

use condra_core::corpus::Corpus;
use condra_core::tree::{Split, Tree, TreeKind, TreeNode, TreeParts, NO_NODE};
use condra_core::{CondIndex, NodeSet};

use crate::error::{Error, Result};

pub const TREE_MAGIC: &[u8; 4] = b"CTRE";
pub const TREE_VERSION: u32 = 1;
const INDEX_TAG: &[u8; 4] = b"CIDX";

const SPLIT_LEAF: u8 = 0;
const SPLIT_AXIS: u8 = 1;
const SPLIT_PROJECTION: u8 = 2;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

type Short = &'static str;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], Short> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or("unexpected end of file")?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn u8(&mut self) -> std::result::Result<u8, Short> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, Short> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, Short> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, Short> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> std::result::Result<(), Short> {
        let bytes = self.take(n.checked_mul(4).ok_or("length overflow")?)?;
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        Ok(())
    }
    fn str(&mut self) -> std::result::Result<&'a str, Short> {
        let len = self.u32()? as usize;
        std::str::from_utf8(self.take(len)?).map_err(|_| "invalid UTF-8 string")
    }
}

/// The conditional-index section: per attribute its name, then per value
/// the value text, its point count and a length-prefixed bit-array of
/// node ids.
pub fn encode_index(index: &CondIndex) -> Vec<u8> {
    let mut body = Writer::default();
    body.u32(index.attributes().len() as u32);
    for attr in index.attributes() {
        body.str(attr.name());
        let values = index
            .corpus()
            .attribute(attr.name())
            .expect("indexed attribute exists")
            .values();
        body.u32(values.len() as u32);
        for ((value, set), count) in values.iter().zip(attr.node_sets()).zip(attr.counts()) {
            body.str(value);
            body.u64(*count as u64);
            body.u32(set.universe() as u32);
            body.0.extend_from_slice(&set.to_bytes());
        }
    }
    let mut out = Writer::default();
    out.0.extend_from_slice(INDEX_TAG);
    out.u64(body.0.len() as u64);
    out.0.extend(body.0);
    out.0
}

pub fn encode_tree(tree: &Tree, index: Option<&CondIndex>) -> Vec<u8> {
    let parts = tree.parts();
    let d = tree.corpus().dim();
    let mut w = Writer::default();
    w.0.extend_from_slice(TREE_MAGIC);
    w.u32(TREE_VERSION);
    w.u8(parts.kind.code());
    w.u32(parts.leaf_size as u32);
    w.u32(parts.nodes.len() as u32);
    w.u32(tree.corpus().len() as u32);
    w.u32(d as u32);
    for (id, node) in parts.nodes.iter().enumerate() {
        let [left, right] = node.children.unwrap_or([NO_NODE, NO_NODE]);
        for v in [node.parent, left, right, node.start, node.end, node.depth] {
            w.u32(v);
        }
        match node.split {
            Split::Leaf => {
                w.u8(SPLIT_LEAF);
                w.u32(0);
                w.f64(0.0);
            }
            Split::Axis { dim, threshold } => {
                w.u8(SPLIT_AXIS);
                w.u32(dim);
                w.f64(threshold);
            }
            Split::Projection { threshold } => {
                w.u8(SPLIT_PROJECTION);
                w.u32(0);
                w.f64(threshold);
            }
        }
        w.f64(node.radius);
        w.f32s(&parts.centroids[id * d..(id + 1) * d]);
        if parts.kind == TreeKind::RpMax {
            w.f32s(&parts.directions[id * d..(id + 1) * d]);
        }
    }
    w.u32(parts.permutation.len() as u32);
    for p in &parts.permutation {
        w.u32(*p);
    }
    let mut out = w.0;
    if let Some(index) = index {
        out.extend(encode_index(index));
    }
    out
}

fn decode_parts(r: &mut Reader, corpus: &Corpus) -> std::result::Result<TreeParts, String> {
    if r.take(4)? != TREE_MAGIC {
        return Err("missing CTRE header".into());
    }
    let version = r.u32()?;
    if version != TREE_VERSION {
        return Err(format!("unsupported tree version {version}"));
    }
    let kind = TreeKind::from_code(r.u8()?).ok_or("unknown tree kind")?;
    let leaf_size = r.u32()? as usize;
    let node_count = r.u32()? as usize;
    let (n, d) = (r.u32()? as usize, r.u32()? as usize);
    if n != corpus.len() || d != corpus.dim() {
        return Err(format!(
            "tree was built over {n} x {d} points, corpus is {} x {}",
            corpus.len(),
            corpus.dim()
        ));
    }
    let mut nodes = Vec::with_capacity(node_count.min(1 << 24));
    let mut centroids = Vec::new();
    let mut directions = Vec::new();
    for _ in 0..node_count {
        let [parent, left, right, start, end, depth] =
            [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let tag = r.u8()?;
        let dim = r.u32()?;
        let threshold = r.f64()?;
        let split = match tag {
            SPLIT_LEAF => Split::Leaf,
            SPLIT_AXIS => Split::Axis { dim, threshold },
            SPLIT_PROJECTION => Split::Projection { threshold },
            _ => return Err(format!("unknown split tag {tag}")),
        };
        let radius = r.f64()?;
        r.f32s(d, &mut centroids)?;
        if kind == TreeKind::RpMax {
            r.f32s(d, &mut directions)?;
        }
        let children = match (left, right) {
            (NO_NODE, NO_NODE) => None,
            (NO_NODE, _) | (_, NO_NODE) => return Err("node with a single child".into()),
            (l, r) => Some([l, r]),
        };
        nodes.push(TreeNode {
            parent,
            children,
            depth,
            start,
            end,
            radius,
            split,
        });
    }
    let len = r.u32()? as usize;
    if len != n {
        return Err(format!("permutation has {len} entries, expected {n}"));
    }
    let permutation = (0..len)
        .map(|_| r.u32())
        .collect::<std::result::Result<_, _>>()?;
    Ok(TreeParts {
        kind,
        leaf_size,
        nodes,
        centroids,
        directions,
        permutation,
    })
}

fn decode_index(r: &mut Reader, tree: &Tree) -> std::result::Result<CondIndex, String> {
    if r.take(4)? != INDEX_TAG {
        return Err("unknown trailing section".into());
    }
    let len = r.u64()? as usize;
    let body = r.take(len)?;
    let mut r = Reader { bytes: body, at: 0 };
    let corpus = tree.corpus();
    let mut attributes = Vec::new();
    for _ in 0..r.u32()? {
        let name = r.str()?.to_owned();
        let column = corpus
            .attribute(&name)
            .ok_or_else(|| format!("indexed attribute `{name}` is not in the corpus"))?;
        let count = r.u32()? as usize;
        if count != column.values().len() {
            return Err(format!(
                "attribute `{name}` value count differs from the corpus"
            ));
        }
        let mut sets = Vec::with_capacity(count);
        for code in 0..count {
            let value = r.str()?;
            if value != column.values()[code] {
                return Err(format!(
                    "attribute `{name}` value `{value}` differs from the corpus"
                ));
            }
            if r.u64()? as usize != column.count(code as u32) {
                return Err(format!("count of `{name}={value}` differs from the corpus"));
            }
            let nbits = r.u32()? as usize;
            let bytes = r.take(nbits.div_ceil(8))?;
            sets.push(NodeSet::from_bytes(nbits, bytes).ok_or("malformed bit-array")?);
        }
        attributes.push((name, sets));
    }
    if r.at != body.len() {
        return Err("trailing bytes in index section".into());
    }
    CondIndex::from_parts(tree, attributes).map_err(|e| e.to_string())
}

/// Parses a tree file image, reattaching it to `corpus`.
pub fn decode_tree(
    bytes: &[u8],
    corpus: Arc<Corpus>,
    origin: &Path,
) -> Result<(Tree, Option<CondIndex>)> {
    let mut r = Reader { bytes, at: 0 };
    let parts = decode_parts(&mut r, &corpus).map_err(|m| Error::format(origin, m))?;
    let tree = Tree::from_parts(corpus, parts)?;
    let index = if r.at < bytes.len() {
        let index = decode_index(&mut r, &tree).map_err(|m| Error::format(origin, m))?;
        if r.at != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after index section"));
        }
        Some(index)
    } else {
        None
    };
    Ok((tree, index))
}

pub fn save_tree(path: impl AsRef<Path>, tree: &Tree, index: Option<&CondIndex>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tree(tree, index)).map_err(|e| Error::io(path, e))
}

pub fn load_tree(path: impl AsRef<Path>, corpus: Arc<Corpus>) -> Result<(Tree, Option<CondIndex>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tree(&bytes, corpus, path)
}
