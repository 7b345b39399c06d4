use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use condra_core::corpus::{Attribute, Corpus, Metric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VECTORS: &str = "vectors.bin";
const META: &str = "meta.tsv";
const MANIFEST: &str = "corpus.toml";
const MAGIC: &[u8; 4] = b"CNDR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Metadata column carried through to clients without being indexed.
pub const IMAGE_URL: &str = "image_url";

/// A corpus plus the metadata columns that are not conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub corpus: Corpus,
    pub image_urls: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    metric: String,
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_vectors(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing CNDR header"));
    }
    let version = u32_at(&bytes, 4);
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let (n, d) = (u32_at(&bytes, 8) as usize, u32_at(&bytes, 12) as usize);
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::format(
            path,
            format!(
                "header declares {n} x {d} but payload has {} bytes",
                bytes.len() - HEADER_LEN
            ),
        ));
    }
    let points = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, d, points))
}

fn read_meta(path: &Path, n: usize) -> Result<(Vec<Attribute>, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::format(path, "first column must be `id`"));
    }
    let mut columns = vec![Vec::with_capacity(n); header.len() - 1];
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        rows += 1;
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.get(0) != Some(row.to_string().as_str()) {
            return Err(Error::format(
                path,
                format!(
                    "row {} has id {:?}, expected {row}",
                    row + 1,
                    record.get(0).unwrap_or("")
                ),
            ));
        }
        for (j, value) in record.iter().skip(1).enumerate() {
            if value.is_empty() {
                return Err(Error::format(
                    path,
                    format!("point {row} has no value for `{}`", header[j + 1]),
                ));
            }
            columns[j].push(value.to_owned());
        }
    }
    if rows != n {
        return Err(condra_core::Error::Inconsistent(format!(
            "{} has {rows} rows, vectors.bin has {n} points",
            path.display()
        ))
        .into());
    }
    let mut attributes = Vec::new();
    let mut image_urls = None;
    for (name, values) in header.into_iter().skip(1).zip(columns) {
        if name == IMAGE_URL {
            image_urls = Some(values);
        } else {
            attributes.push(Attribute::from_values(name, values)?);
        }
    }
    Ok((attributes, image_urls))
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    let metric: Metric = manifest.metric.parse()?;
    let (n, d, points) = read_vectors(&dir.join(VECTORS))?;
    let (attributes, image_urls) = read_meta(&dir.join(META), n)?;
    let corpus = Corpus::new(d, points, metric, attributes)?;
    Ok(Bundle { corpus, image_urls })
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    Ok(load_bundle(dir)?.corpus)
}

fn check_cell(path: &Path, value: &str) -> Result<()> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(Error::format(
            path,
            format!("value {value:?} contains a tab or newline"),
        ));
    }
    Ok(())
}

/// Writes a bundle directory, creating it if needed.
pub fn save_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let corpus = &bundle.corpus;
    if let Some(urls) = &bundle.image_urls {
        if urls.len() != corpus.len() {
            return Err(Error::format(
                dir,
                "image_url column length differs from corpus",
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(VECTORS);
    let mut bytes = Vec::with_capacity(HEADER_LEN + corpus.points().len() * 4);
    bytes.extend_from_slice(MAGIC);
    for v in [VERSION, corpus.len() as u32, corpus.dim() as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for x in corpus.points() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(META);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = vec!["id"];
    header.extend(corpus.attributes().iter().map(Attribute::name));
    if bundle.image_urls.is_some() {
        header.push(IMAGE_URL);
    }
    let io = |e| Error::io(&path, e);
    writeln!(out, "{}", header.join("\t")).map_err(io)?;
    for id in 0..corpus.len() {
        let mut line = id.to_string();
        let urls = bundle.image_urls.iter().map(|u| u[id].as_str());
        for value in corpus
            .attributes()
            .iter()
            .map(|a| a.value_of(id))
            .chain(urls)
        {
            check_cell(&path, value)?;
            line.push('\t');
            line.push_str(value);
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;

    let path = dir.join(MANIFEST);
    let manifest = toml::to_string(&Manifest {
        metric: corpus.metric().to_string(),
    })
    .map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    save_bundle(
        &Bundle {
            corpus: corpus.clone(),
            image_urls: None,
        },
        dir,
    )
}
