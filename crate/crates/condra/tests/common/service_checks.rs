//! Request/response checks against the service router, shared by the
//! service tests and the acceptance target.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use condra::condra_core::{parse_condition, Attribute, Corpus, Metric};
use condra::format::{save_bundle, Bundle};
use condra::service::{load_collections, router, AppState, ServeConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use super::{oracle, Fixture};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

/// Writes the art fixture and a three-point `tiny` collection under `dir`
/// and loads both through a config file.
pub fn build_app(fx: &Fixture, dir: &Path) -> Router {
    fx.write(&dir.join("art"));
    let tiny = Corpus::new(
        2,
        vec![0.0, 0.0, 1.0, 0.0, 5.0, 5.0],
        Metric::Euclidean,
        vec![Attribute::from_values("label", ["A", "A", "B"]).unwrap()],
    )
    .unwrap();
    save_bundle(
        &Bundle {
            corpus: tiny,
            image_urls: None,
        },
        dir.join("tiny"),
    )
    .unwrap();
    let cfg_path = dir.join("serve.toml");
    std::fs::write(
        &cfg_path,
        "[[collections]]\nid = \"art\"\npath = \"art\"\n\n[[collections]]\nid = \"tiny\"\npath = \"tiny\"\nleaf_size = 1\n",
    )
    .unwrap();
    let cfg = ServeConfig::load(&cfg_path).unwrap();
    router(Arc::new(AppState::new(load_collections(&cfg).unwrap())))
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(&body.to_string())).await
}

fn error(code: &str, message: &str) -> Value {
    json!({ "error": { "code": code, "message": message } })
}

fn same(label: &str, got: &(StatusCode, Value), status: StatusCode, body: &Value) -> Check {
    ensure!(
        got.0 == status,
        "{label}: status {} instead of {status}, body {}",
        got.0,
        got.1
    );
    ensure!(
        &got.1 == body,
        "{label}: body\n  {}\nexpected\n  {body}",
        got.1
    );
    Ok(())
}

pub async fn collections(app: &Router, fx: &Fixture) -> Check {
    let (status, mut body) = call(app, "GET", "/collections", None).await;
    ensure!(status == StatusCode::OK, "status {status}");
    for c in body["collections"]
        .as_array_mut()
        .ok_or("no collections array")?
    {
        ensure!(
            c["loaded_at"].as_u64().is_some_and(|t| t > 0),
            "missing load time"
        );
        c["loaded_at"] = json!(0);
    }
    let want = json!({ "collections": [
        { "id": "art", "n": fx.n(), "d": 8, "metric": "euclidean",
          "attributes": ["culture", "medium", "title"], "has_images": true, "loaded_at": 0 },
        { "id": "tiny", "n": 3, "d": 2, "metric": "euclidean",
          "attributes": ["label"], "has_images": false, "loaded_at": 0 },
    ]});
    same("collections", &(status, body), StatusCode::OK, &want)
}

pub async fn facets(app: &Router, fx: &Fixture) -> Check {
    let tiny = call(app, "GET", "/collections/tiny/facets", None).await;
    let want = json!({ "collection": "tiny", "attributes": [
        { "name": "label", "values": [ { "value": "A", "count": 2 }, { "value": "B", "count": 1 } ] }
    ]});
    same("tiny facets", &tiny, StatusCode::OK, &want)?;

    let (status, body) = call(app, "GET", "/collections/art/facets", None).await;
    ensure!(status == StatusCode::OK, "art facets status {status}");
    let attrs = body["attributes"].as_array().ok_or("no attributes")?;
    ensure!(
        attrs.len() == 3,
        "expected three attributes, got {}",
        attrs.len()
    );
    for (attr, column) in attrs.iter().zip([&fx.culture, &fx.medium, &fx.title]) {
        let values = attr["values"].as_array().ok_or("no values")?;
        let counts: Vec<u64> = values
            .iter()
            .map(|v| v["count"].as_u64().unwrap())
            .collect();
        ensure!(
            counts.windows(2).all(|w| w[0] >= w[1]),
            "{} counts not descending",
            attr["name"]
        );
        ensure!(
            counts.iter().sum::<u64>() == fx.n() as u64,
            "{} counts do not sum to n",
            attr["name"]
        );
        for v in values {
            let value = v["value"].as_str().unwrap();
            let expected = column.iter().filter(|c| *c == value).count() as u64;
            ensure!(
                v["count"] == json!(expected),
                "{} = {value}: count {} vs {expected}",
                attr["name"],
                v["count"]
            );
        }
    }
    let missing = call(app, "GET", "/collections/nope/facets", None).await;
    same(
        "facets 404",
        &missing,
        StatusCode::NOT_FOUND,
        &error("collection_not_found", "no collection `nope`"),
    )
}

fn check_matches(
    label: &str,
    fx: &Fixture,
    body: &Value,
    want: &[(u32, f64)],
    condition: &str,
) -> Check {
    let expr = parse_condition(condition).map_err(|e| e.to_string())?;
    let matches = body["matches"]
        .as_array()
        .ok_or(format!("{label}: no matches array"))?;
    ensure!(
        matches.len() == want.len(),
        "{label}: {} matches, oracle has {}",
        matches.len(),
        want.len()
    );
    for (m, (id, dist)) in matches.iter().zip(want) {
        let got_id = m["id"].as_u64().ok_or("id")? as u32;
        let got_d = m["distance"].as_f64().ok_or("distance")?;
        ensure!(
            got_id == *id,
            "{label}: id {got_id} where the oracle has {id}"
        );
        ensure!(
            (got_d - dist).abs() <= 1e-5 * dist.max(1e-12),
            "{label}: distance {got_d} vs {dist}"
        );
        let attrs = &m["attributes"];
        let lookup = |name: &str| attrs.get(name).and_then(Value::as_str);
        ensure!(
            expr.matches(&lookup),
            "{label}: match {got_id} violates {condition}"
        );
        let i = *id as usize;
        ensure!(
            attrs
                == &json!({ "culture": fx.culture[i], "medium": fx.medium[i], "title": fx.title[i] }),
            "{label}: wrong metadata for {i}"
        );
        ensure!(
            m["image_url"] == json!(fx.image_url[i]),
            "{label}: wrong image_url for {i}"
        );
    }
    Ok(())
}

pub async fn query(app: &Router, fx: &Fixture) -> Check {
    let uri = "/collections/art/query";
    let cond = r#"culture="Egyptian""#;
    // By point id: the query point is excluded.
    let p = (0..fx.n()).find(|&i| fx.culture[i] == "Egyptian").unwrap();
    let want = oracle(fx, fx.point(p), 5, |i| {
        fx.culture[i] == "Egyptian" && i != p
    });
    for strategy in ["cond", "qtf", "reconf", "brute", "dedicated", "batched"] {
        let (status, body) = post(
            app,
            uri,
            json!({ "point_id": p, "condition": cond, "k": 5, "strategy": strategy }),
        )
        .await;
        ensure!(
            status == StatusCode::OK,
            "{strategy}: status {status} body {body}"
        );
        ensure!(
            body["strategy"] == json!(strategy),
            "{strategy}: echoed {}",
            body["strategy"]
        );
        ensure!(body["point_id"] == json!(p), "{strategy}: point_id echo");
        ensure!(
            body["condition"] == json!(cond),
            "{strategy}: condition echo {}",
            body["condition"]
        );
        check_matches(strategy, fx, &body, &want, cond)?;
    }
    // Default strategy, compound condition, vector query.
    let q: Vec<f32> = vec![0.5; fx.d];
    let cond2 = r#"(culture="Greek" OR culture="Roman") AND NOT medium="stone""#;
    let (status, body) = post(
        app,
        uri,
        json!({ "vector": q, "condition": cond2, "k": 20 }),
    )
    .await;
    ensure!(
        status == StatusCode::OK,
        "vector query status {status}: {body}"
    );
    ensure!(
        body["strategy"] == json!("cond"),
        "default strategy is {}",
        body["strategy"]
    );
    ensure!(
        body.get("point_id").is_none(),
        "vector query echoes a point id"
    );
    let want = oracle(fx, &q, 20, |i| {
        (fx.culture[i] == "Greek" || fx.culture[i] == "Roman") && fx.medium[i] != "stone"
    });
    check_matches("vector", fx, &body, &want, cond2)?;
    // k = 100 is allowed; ALL excludes nothing but the query point.
    let (status, body) = post(
        app,
        uri,
        json!({ "point_id": 3, "condition": "ALL", "k": 100 }),
    )
    .await;
    ensure!(status == StatusCode::OK, "k=100 status {status}");
    check_matches(
        "k=100",
        fx,
        &body,
        &oracle(fx, fx.point(3), 100, |i| i != 3),
        "ALL",
    )?;
    // A value nobody has: empty list, not an error.
    let empty = post(
        app,
        uri,
        json!({ "point_id": 0, "condition": r#"culture="Atlantis""#, "k": 5 }),
    )
    .await;
    same(
        "empty condition",
        &empty,
        StatusCode::OK,
        &json!({
            "collection": "art", "condition": r#"culture="Atlantis""#, "strategy": "cond", "k": 5,
            "point_id": 0, "matches": []
        }),
    )?;
    // Exact body on the tiny collection.
    let tiny = post(
        app,
        "/collections/tiny/query",
        json!({ "vector": [0.0, 0.0], "condition": r#"label="A""#, "k": 3 }),
    )
    .await;
    same(
        "tiny query",
        &tiny,
        StatusCode::OK,
        &json!({
            "collection": "tiny", "condition": r#"label="A""#, "strategy": "cond", "k": 3,
            "matches": [
                { "id": 0, "distance": 0.0, "attributes": { "label": "A" } },
                { "id": 1, "distance": 1.0, "attributes": { "label": "A" } }
            ]
        }),
    )
}

pub async fn query_errors(app: &Router, fx: &Fixture) -> Check {
    let uri = "/collections/art/query";
    let n = fx.n();
    let cases: Vec<(&str, Value, StatusCode, Value)> = vec![
        (
            "k=0",
            json!({ "point_id": 0, "condition": "ALL", "k": 0 }),
            StatusCode::BAD_REQUEST,
            error("invalid_k", "k must be between 1 and 100, got 0"),
        ),
        (
            "k=101",
            json!({ "point_id": 0, "condition": "ALL", "k": 101 }),
            StatusCode::BAD_REQUEST,
            error("invalid_k", "k must be between 1 and 100, got 101"),
        ),
        (
            "syntax",
            json!({ "point_id": 0, "condition": r#"culture = "Greek" AND"#, "k": 5 }),
            StatusCode::BAD_REQUEST,
            json!({ "error": { "code": "syntax_error", "message": "unexpected end of condition", "position": 21 } }),
        ),
        (
            "unknown attribute",
            json!({ "point_id": 0, "condition": r#"era="Bronze""#, "k": 5 }),
            StatusCode::BAD_REQUEST,
            error("unknown_attribute", "unknown attribute `era`"),
        ),
        (
            "dimension",
            json!({ "vector": [1.0, 2.0], "condition": "ALL", "k": 5 }),
            StatusCode::BAD_REQUEST,
            error(
                "dimension_mismatch",
                "dimension mismatch: expected 8, found 2",
            ),
        ),
        (
            "point 404",
            json!({ "point_id": n, "condition": "ALL", "k": 5 }),
            StatusCode::NOT_FOUND,
            error("point_not_found", &format!("no point {n} in `art`")),
        ),
        (
            "negative point",
            json!({ "point_id": -1, "condition": "ALL", "k": 5 }),
            StatusCode::BAD_REQUEST,
            error("invalid_point_id", "`-1` is not a point id"),
        ),
        (
            "neither",
            json!({ "condition": "ALL", "k": 5 }),
            StatusCode::BAD_REQUEST,
            error("invalid_request", "point_id or vector is required"),
        ),
        (
            "both",
            json!({ "point_id": 1, "vector": vec![0.0f32; 8], "condition": "ALL", "k": 5 }),
            StatusCode::BAD_REQUEST,
            error(
                "invalid_request",
                "give either point_id or vector, not both",
            ),
        ),
        (
            "strategy",
            json!({ "point_id": 1, "condition": "ALL", "k": 5, "strategy": "magic" }),
            StatusCode::BAD_REQUEST,
            error("invalid_strategy", "unknown strategy `magic`"),
        ),
    ];
    for (label, body, status, want) in cases {
        let got = post(app, uri, body).await;
        same(label, &got, status, &want)?;
    }
    // The reported position agrees with the parser.
    let text = r#"culture = "Greek" AND"#;
    let pos = parse_condition(text).unwrap_err().position;
    ensure!(pos == 21, "parser reports position {pos}");

    let (status, body) = call(app, "POST", uri, Some("{not json")).await;
    ensure!(
        status == StatusCode::BAD_REQUEST,
        "malformed JSON gives {status}"
    );
    ensure!(
        body["error"]["code"] == json!("invalid_request"),
        "malformed JSON code {}",
        body["error"]["code"]
    );
    let (status, body) = post(app, uri, json!({ "point_id": 1, "k": 5 })).await;
    ensure!(
        status == StatusCode::BAD_REQUEST && body["error"]["code"] == json!("invalid_request"),
        "missing condition: {status} {body}"
    );
    let missing = post(
        app,
        "/collections/nope/query",
        json!({ "point_id": 0, "condition": "ALL", "k": 5 }),
    )
    .await;
    same(
        "query 404",
        &missing,
        StatusCode::NOT_FOUND,
        &error("collection_not_found", "no collection `nope`"),
    )
}

pub async fn points(app: &Router, fx: &Fixture) -> Check {
    let got = call(app, "GET", "/collections/art/points/7", None).await;
    let want = json!({
        "id": 7,
        "attributes": { "culture": fx.culture[7], "medium": fx.medium[7], "title": fx.title[7] },
        "image_url": fx.image_url[7],
        "vector": fx.point(7),
    });
    same("point 7", &got, StatusCode::OK, &want)?;
    let tiny = call(app, "GET", "/collections/tiny/points/2", None).await;
    same(
        "tiny point",
        &tiny,
        StatusCode::OK,
        &json!({ "id": 2, "attributes": { "label": "B" }, "vector": [5.0, 5.0] }),
    )?;
    let n = fx.n();
    let oob = call(app, "GET", &format!("/collections/art/points/{n}"), None).await;
    same(
        "point 404",
        &oob,
        StatusCode::NOT_FOUND,
        &error("point_not_found", &format!("no point {n} in `art`")),
    )?;
    let bad = call(app, "GET", "/collections/art/points/abc", None).await;
    same(
        "point id 400",
        &bad,
        StatusCode::BAD_REQUEST,
        &error("invalid_point_id", "`abc` is not a point id"),
    )?;
    let missing = call(app, "GET", "/collections/nope/points/0", None).await;
    same(
        "points 404",
        &missing,
        StatusCode::NOT_FOUND,
        &error("collection_not_found", "no collection `nope`"),
    )
}

pub async fn search(app: &Router, fx: &Fixture) -> Check {
    let (status, body) = call(
        app,
        "GET",
        "/collections/art/search?q=BoAt&limit=1000",
        None,
    )
    .await;
    ensure!(status == StatusCode::OK, "search status {status}");
    let mut want: Vec<(usize, usize)> = (0..fx.n())
        .filter_map(|i| {
            let m = [
                &fx.culture[i],
                &fx.medium[i],
                &fx.title[i],
                &fx.image_url[i],
            ]
            .iter()
            .filter(|v| v.to_lowercase().contains("boat"))
            .count();
            (m > 0).then_some((m, i))
        })
        .collect();
    want.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let results = body["results"].as_array().ok_or("no results")?;
    ensure!(
        body["total"] == json!(want.len()),
        "total {} vs {}",
        body["total"],
        want.len()
    );
    ensure!(
        results.len() == want.len(),
        "{} results vs {}",
        results.len(),
        want.len()
    );
    for (r, (m, i)) in results.iter().zip(&want) {
        ensure!(
            r["id"] == json!(i) && r["matched"] == json!(m),
            "result {r} where {i} matching {m} expected"
        );
        let title = r["attributes"]["title"].as_str().unwrap_or("");
        ensure!(
            title.to_lowercase().contains("boat"),
            "result {i} title {title:?} lacks boat"
        );
    }
    ensure!(
        want.len() > 10,
        "fixture should contain many boats, found {}",
        want.len()
    );

    let (_, limited) = call(app, "GET", "/collections/art/search?q=boat&limit=3", None).await;
    let ids: Vec<Value> = limited["results"]
        .as_array()
        .ok_or("no results")?
        .iter()
        .map(|r| r["id"].clone())
        .collect();
    let expected: Vec<Value> = want.iter().take(3).map(|(_, i)| json!(i)).collect();
    ensure!(
        ids == expected,
        "limit=3 gave {ids:?}, expected {expected:?}"
    );
    ensure!(
        limited["total"] == json!(want.len()),
        "limit changes the total"
    );

    // Matching several attributes ranks first.
    let (_, multi) = call(app, "GET", "/collections/art/search?q=e&limit=1", None).await;
    let top = &multi["results"][0];
    ensure!(
        top["matched"].as_u64().is_some_and(|m| m >= 3),
        "top hit for `e` matched {}",
        top["matched"]
    );

    let none = call(app, "GET", "/collections/tiny/search?q=zzz", None).await;
    same(
        "no hits",
        &none,
        StatusCode::OK,
        &json!({ "collection": "tiny", "q": "zzz", "total": 0, "results": [] }),
    )?;
    let tiny = call(app, "GET", "/collections/tiny/search?q=a", None).await;
    same(
        "tiny search",
        &tiny,
        StatusCode::OK,
        &json!({ "collection": "tiny", "q": "a", "total": 2, "results": [
            { "id": 0, "matched": 1, "attributes": { "label": "A" } },
            { "id": 1, "matched": 1, "attributes": { "label": "A" } }
        ]}),
    )?;
    let empty = call(app, "GET", "/collections/art/search?q=", None).await;
    same(
        "empty q",
        &empty,
        StatusCode::BAD_REQUEST,
        &error("empty_query", "q must be a nonempty string"),
    )?;
    let absent = call(app, "GET", "/collections/art/search", None).await;
    same(
        "absent q",
        &absent,
        StatusCode::BAD_REQUEST,
        &error("empty_query", "q must be a nonempty string"),
    )?;
    let bad = call(app, "GET", "/collections/art/search?q=boat&limit=0", None).await;
    same(
        "limit 0",
        &bad,
        StatusCode::BAD_REQUEST,
        &error("invalid_limit", "limit must be between 1 and 1000"),
    )?;
    let missing = call(app, "GET", "/collections/nope/search?q=boat", None).await;
    same(
        "search 404",
        &missing,
        StatusCode::NOT_FOUND,
        &error("collection_not_found", "no collection `nope`"),
    )
}

pub async fn unknown_route(app: &Router, _fx: &Fixture) -> Check {
    let got = call(app, "GET", "/nowhere", None).await;
    same(
        "fallback",
        &got,
        StatusCode::NOT_FOUND,
        &error("not_found", "no such endpoint"),
    )
}

/// Identical requests give identical bodies, and concurrent mixed requests
/// give the serial answers.
pub async fn determinism(app: &Router, _fx: &Fixture) -> Check {
    let requests: Vec<(&str, String, Option<String>)> = (0..40)
        .map(|i| match i % 4 {
            0 => ("POST", "/collections/art/query".to_owned(),
                  Some(json!({ "point_id": i * 7, "condition": r#"culture="Greek" OR medium="paper""#, "k": 10 }).to_string())),
            1 => ("GET", "/collections/art/facets".to_owned(), None),
            2 => ("GET", format!("/collections/art/search?q={}&limit=5", ["boat", "lady", "vase", "mirror"][i % 4]), None),
            _ => ("GET", format!("/collections/art/points/{}", i * 3), None),
        })
        .collect();
    let mut serial = Vec::new();
    for (m, u, b) in &requests {
        serial.push(call(app, m, u, b.as_deref()).await);
    }
    for ((m, u, b), first) in requests.iter().zip(&serial) {
        let again = call(app, m, u, b.as_deref()).await;
        ensure!(&again == first, "{m} {u} changed between identical calls");
    }
    let handles: Vec<_> = requests
        .iter()
        .cloned()
        .map(|(m, u, b)| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, m, &u, b.as_deref()).await })
        })
        .collect();
    for (h, want) in handles.into_iter().zip(&serial) {
        let got = h.await.map_err(|e| e.to_string())?;
        ensure!(
            &got == want,
            "concurrent answer differs from the serial one"
        );
    }
    Ok(())
}

pub type CheckFn =
    for<'a> fn(
        &'a Router,
        &'a Fixture,
    ) -> std::pin::Pin<Box<dyn std::future::Future<Output = Check> + Send + 'a>>;

macro_rules! boxed {
    ($f:path) => {{
        fn wrap<'a>(
            app: &'a Router,
            fx: &'a Fixture,
        ) -> std::pin::Pin<Box<dyn std::future::Future<Output = Check> + Send + 'a>> {
            Box::pin($f(app, fx))
        }
        wrap as CheckFn
    }};
}

pub fn all_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("collections", boxed!(collections)),
        ("facets", boxed!(facets)),
        ("query", boxed!(query)),
        ("query_errors", boxed!(query_errors)),
        ("points", boxed!(points)),
        ("search", boxed!(search)),
        ("unknown_route", boxed!(unknown_route)),
        ("determinism", boxed!(determinism)),
    ]
}
