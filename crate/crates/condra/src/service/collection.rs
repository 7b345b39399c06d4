use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use condra_core::tree::build_ball_tree;
use condra_core::{build_cond_index, Engine, DEFAULT_LEAF_SIZE};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{load_bundle, load_tree};

/// `serve.toml`: a list of `[[collections]]` tables.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default)]
    pub collections: Vec<CollectionConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionConfig {
    pub id: String,
    /// Bundle directory.
    pub path: PathBuf,
    /// Prebuilt tree file; a ball tree is built at startup when absent.
    pub tree: Option<PathBuf>,
    pub leaf_size: Option<usize>,
}

impl ServeConfig {
    /// Parses a config file; relative paths are taken from its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ServeConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ServeConfig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut cfg.collections {
            c.path = base.join(&c.path);
            if let Some(t) = &mut c.tree {
                *t = base.join(&*t);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FacetValue {
    pub value: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Facet {
    pub name: String,
    pub values: Vec<FacetValue>,
}

/// A loaded corpus with its engine. Never modified after construction.
#[derive(Debug)]
pub struct Collection {
    pub id: String,
    pub engine: Engine,
    pub image_urls: Option<Vec<String>>,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
    pub facets: Vec<Facet>,
}

impl Collection {
    pub fn new(id: impl Into<String>, engine: Engine, image_urls: Option<Vec<String>>) -> Self {
        let facets = engine
            .corpus()
            .attributes()
            .iter()
            .map(|a| {
                let mut values: Vec<FacetValue> = a
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(code, v)| FacetValue {
                        value: v.clone(),
                        count: a.count(code as u32),
                    })
                    .collect();
                values.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.value.cmp(&y.value)));
                Facet {
                    name: a.name().to_owned(),
                    values,
                }
            })
            .collect();
        let loaded_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Collection {
            id: id.into(),
            engine,
            image_urls,
            loaded_at,
            facets,
        }
    }

    pub fn load(cfg: &CollectionConfig) -> Result<Collection> {
        let named = |e: Error| {
            Error::Config(format!(
                "collection `{}` ({}): {e}",
                cfg.id,
                cfg.path.display()
            ))
        };
        let bundle = load_bundle(&cfg.path).map_err(named)?;
        let corpus = Arc::new(bundle.corpus);
        let leaf_size = cfg.leaf_size.unwrap_or(DEFAULT_LEAF_SIZE);
        let names: Vec<&str> = corpus.attributes().iter().map(|a| a.name()).collect();
        let (tree, index) = match &cfg.tree {
            Some(path) => {
                let (tree, index) = load_tree(path, corpus.clone()).map_err(named)?;
                let index = match index {
                    Some(i) => i,
                    None => {
                        build_cond_index(&tree, &corpus, &names).map_err(|e| named(e.into()))?
                    }
                };
                (tree, index)
            }
            None => {
                let tree =
                    build_ball_tree(corpus.clone(), leaf_size).map_err(|e| named(e.into()))?;
                let index =
                    build_cond_index(&tree, &corpus, &names).map_err(|e| named(e.into()))?;
                (tree, index)
            }
        };
        let engine = Engine::from_parts(Arc::new(tree), index).map_err(|e| named(e.into()))?;
        Ok(Collection::new(cfg.id.clone(), engine, bundle.image_urls))
    }
}

/// Loads every collection; the first failure aborts with its id and path.
pub fn load_collections(cfg: &ServeConfig) -> Result<Vec<Collection>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.collections.len());
    for c in &cfg.collections {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::Config(format!("duplicate collection id `{}`", c.id)));
        }
        out.push(Collection::load(c)?);
    }
    Ok(out)
}
