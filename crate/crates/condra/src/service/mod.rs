//! HTTP retrieval service over loaded collections.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/collections` | ids, sizes and attribute names |
//! | GET | `/collections/{id}/facets` | values per attribute with counts, descending |
//! | POST | `/collections/{id}/query` | conditional neighbors of a point or vector |
//! | GET | `/collections/{id}/points/{pid}` | one point's metadata and vector |
//! | GET | `/collections/{id}/search?q=&limit=` | substring search over metadata |
//!
//! Errors are `{"error": {"code", "message", "position"?}}` with status 400
//! or 404.

mod api;
mod collection;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use api::{router, AppState, DEFAULT_SEARCH_LIMIT, MAX_K, MAX_SEARCH_LIMIT};
pub use collection::{
    load_collections, Collection, CollectionConfig, Facet, FacetValue, ServeConfig,
};

use crate::error::{Error, Result};

/// Loads the collections named in `config` and serves until interrupted.
pub async fn serve(config: impl AsRef<Path>, addr: SocketAddr) -> Result<()> {
    let cfg = ServeConfig::load(config)?;
    let collections = tokio::task::spawn_blocking(move || load_collections(&cfg))
        .await
        .map_err(|e| Error::Config(e.to_string()))??;
    let app = router(Arc::new(AppState::new(collections)));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
    eprintln!(
        "listening on {}",
        listener
            .local_addr()
            .map_err(|e| Error::Config(e.to_string()))?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Config(e.to_string()))
}
