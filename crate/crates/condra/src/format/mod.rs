//! On-disk formats.
//!
//! A corpus bundle is a directory holding `vectors.bin` (header plus
//! little-endian `f32` rows), `meta.tsv` (one row per point, first column
//! `id`) and `corpus.toml` (the metric). A tree file holds one tree and,
//! optionally, its conditional index in a tagged trailing section.

mod bundle;
mod tree_file;

pub use bundle::{load_bundle, load_corpus, save_bundle, save_corpus, Bundle, IMAGE_URL};
pub use tree_file::{
    decode_tree, encode_index, encode_tree, load_tree, save_tree, TREE_MAGIC, TREE_VERSION,
};
