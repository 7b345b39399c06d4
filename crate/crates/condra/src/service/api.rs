use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use condra_core::{parse_condition, Condition, QueryOptions, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::collection::Collection;

/// Largest `k` a query may ask for.
pub const MAX_K: usize = 100;
pub const DEFAULT_SEARCH_LIMIT: usize = 20;
pub const MAX_SEARCH_LIMIT: usize = 1000;

/// Collections by id.
#[derive(Debug, Default)]
pub struct AppState {
    collections: BTreeMap<String, Arc<Collection>>,
    options: QueryOptions,
}

impl AppState {
    pub fn new(collections: impl IntoIterator<Item = Collection>) -> Self {
        AppState {
            collections: collections
                .into_iter()
                .map(|c| (c.id.clone(), Arc::new(c)))
                .collect(),
            options: QueryOptions::default(),
        }
    }

    fn get(&self, id: &str) -> Result<&Arc<Collection>, ApiError> {
        self.collections.get(id).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "collection_not_found",
                format!("no collection `{id}`"),
            )
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    position: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            position: None,
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<condra_core::Error> for ApiError {
    fn from(e: condra_core::Error) -> Self {
        use condra_core::Error as E;
        let code = match &e {
            E::Syntax(p) => {
                return ApiError {
                    position: Some(p.position),
                    ..ApiError::bad("syntax_error", p.message.clone())
                }
            }
            E::DimensionMismatch { .. } => "dimension_mismatch",
            E::UnknownAttribute(_) => "unknown_attribute",
            E::NotIndexed(_) => "unknown_attribute",
            E::ZeroVector | E::NonFinite { .. } => "invalid_vector",
            E::InvalidParameter(_) => "invalid_request",
            _ => {
                return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            }
        };
        ApiError::bad(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(p) = self.position {
            error["position"] = json!(p);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize)]
struct CollectionSummary<'a> {
    id: &'a str,
    n: usize,
    d: usize,
    metric: &'static str,
    attributes: Vec<&'a str>,
    has_images: bool,
    loaded_at: u64,
}

#[derive(Debug, Serialize)]
struct PointRecord {
    id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    attributes: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_url: Option<String>,
}

fn record(c: &Collection, id: u32, distance: Option<f64>) -> PointRecord {
    let corpus = c.engine.corpus();
    PointRecord {
        id,
        distance,
        attributes: corpus
            .attributes()
            .iter()
            .map(|a| (a.name().to_owned(), a.value_of(id as usize).to_owned()))
            .collect(),
        image_url: c.image_urls.as_ref().map(|u| u[id as usize].clone()),
    }
}

async fn list_collections(State(state): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<CollectionSummary> = state
        .collections
        .values()
        .map(|c| {
            let corpus = c.engine.corpus();
            CollectionSummary {
                id: &c.id,
                n: corpus.len(),
                d: corpus.dim(),
                metric: corpus.metric().as_str(),
                attributes: corpus.attributes().iter().map(|a| a.name()).collect(),
                has_images: c.image_urls.is_some(),
                loaded_at: c.loaded_at,
            }
        })
        .collect();
    Json(json!({ "collections": list }))
}

async fn facets(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    let c = state.get(&id)?;
    Ok(Json(json!({ "collection": c.id, "attributes": c.facets })))
}

fn parse_point(c: &Collection, raw: &str) -> Result<u32, ApiError> {
    let id: u32 = raw
        .parse()
        .map_err(|_| ApiError::bad("invalid_point_id", format!("`{raw}` is not a point id")))?;
    if id as usize >= c.engine.corpus().len() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "point_not_found",
            format!("no point {id} in `{}`", c.id),
        ));
    }
    Ok(id)
}

async fn point(
    State(state): State<Arc<AppState>>,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Value> {
    let c = state.get(&id)?;
    let pid = parse_point(c, &pid)?;
    let mut body = serde_json::to_value(record(c, pid, None)).expect("serializable");
    body["vector"] = json!(c.engine.corpus().point(pid as usize));
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    point_id: Option<i64>,
    vector: Option<Vec<f32>>,
    condition: String,
    k: i64,
    strategy: Option<String>,
}

#[derive(Debug, Serialize)]
struct QueryResponse {
    collection: String,
    condition: String,
    strategy: &'static str,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    point_id: Option<u32>,
    matches: Vec<PointRecord>,
}

fn run_query(
    c: &Collection,
    opts: &QueryOptions,
    body: QueryBody,
) -> Result<QueryResponse, ApiError> {
    if !(1..=MAX_K as i64).contains(&body.k) {
        return Err(ApiError::bad(
            "invalid_k",
            format!("k must be between 1 and {MAX_K}, got {}", body.k),
        ));
    }
    let k = body.k as usize;
    let strategy = match &body.strategy {
        None => Strategy::Conditional,
        Some(s) => s
            .parse()
            .map_err(|_| ApiError::bad("invalid_strategy", format!("unknown strategy `{s}`")))?,
    };
    let expr: Condition = parse_condition(&body.condition).map_err(condra_core::Error::from)?;
    let corpus = c.engine.corpus();
    let (q, exclude): (Vec<f32>, Option<u32>) = match (body.point_id, body.vector) {
        (Some(_), Some(_)) => {
            return Err(ApiError::bad(
                "invalid_request",
                "give either point_id or vector, not both",
            ))
        }
        (None, None) => {
            return Err(ApiError::bad(
                "invalid_request",
                "point_id or vector is required",
            ))
        }
        (Some(p), None) => {
            let p = u32::try_from(p).map_err(|_| {
                ApiError::bad("invalid_point_id", format!("`{p}` is not a point id"))
            })?;
            let p = parse_point(c, &p.to_string())?;
            (corpus.point(p as usize).to_vec(), Some(p))
        }
        (None, Some(v)) => (v, None),
    };
    let ask = k + usize::from(exclude.is_some());
    let result = c.engine.query(strategy, &q, &expr, ask, opts)?;
    let matches = result
        .neighbors
        .iter()
        .filter(|n| Some(n.id) != exclude)
        .take(k)
        .map(|n| record(c, n.id, Some(n.distance)))
        .collect();
    Ok(QueryResponse {
        collection: c.id.clone(),
        condition: result.condition,
        strategy: strategy.as_str(),
        k,
        point_id: exclude,
        matches,
    })
}

async fn query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Response {
    let c = match state.get(&id) {
        Ok(c) => c.clone(),
        Err(e) => return e.into_response(),
    };
    let body: QueryBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return ApiError::bad("invalid_request", e.to_string()).into_response(),
    };
    let opts = state.options;
    let outcome = tokio::task::spawn_blocking(move || run_query(&c, &opts, body)).await;
    match outcome {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            .into_response(),
    }
}

#[derive(Debug, Serialize)]
struct SearchHit {
    matched: usize,
    #[serde(flatten)]
    point: PointRecord,
}

async fn search(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Value> {
    let c = state.get(&id)?;
    let q = params.get("q").map(|s| s.trim()).unwrap_or("");
    if q.is_empty() {
        return Err(ApiError::bad("empty_query", "q must be a nonempty string"));
    }
    let limit = match params.get("limit") {
        None => DEFAULT_SEARCH_LIMIT,
        Some(raw) => match raw.parse::<usize>() {
            Ok(l) if (1..=MAX_SEARCH_LIMIT).contains(&l) => l,
            _ => {
                return Err(ApiError::bad(
                    "invalid_limit",
                    format!("limit must be between 1 and {MAX_SEARCH_LIMIT}"),
                ))
            }
        },
    };
    let needle = q.to_lowercase();
    let corpus = c.engine.corpus();
    // Lowercased values per attribute code, so each row costs one lookup.
    let hits_per_code: Vec<Vec<bool>> = corpus
        .attributes()
        .iter()
        .map(|a| {
            a.values()
                .iter()
                .map(|v| v.to_lowercase().contains(&needle))
                .collect()
        })
        .collect();
    let mut ranked: Vec<(usize, u32)> = (0..corpus.len())
        .filter_map(|id| {
            let mut matched = corpus
                .attributes()
                .iter()
                .zip(&hits_per_code)
                .filter(|(a, hits)| hits[a.code_of(id) as usize])
                .count();
            if let Some(urls) = &c.image_urls {
                matched += usize::from(urls[id].to_lowercase().contains(&needle));
            }
            (matched > 0).then_some((matched, id as u32))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let total = ranked.len();
    let results: Vec<SearchHit> = ranked
        .into_iter()
        .take(limit)
        .map(|(matched, id)| SearchHit {
            matched,
            point: record(c, id, None),
        })
        .collect();
    Ok(Json(
        json!({ "collection": c.id, "q": q, "total": total, "results": results }),
    ))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/collections", get(list_collections))
        .route("/collections/{id}/facets", get(facets))
        .route("/collections/{id}/query", post(query))
        .route("/collections/{id}/points/{pid}", get(point))
        .route("/collections/{id}/search", get(search))
        .fallback(fallback)
        .with_state(state)
}
