mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::service_checks::{all_checks, build_app, call};
use common::{art_fixture, Fixture};
use condra::condra_core::{build_cond_index, tree::build_kd_tree};
use condra::format::save_tree;
use condra::service::{load_collections, router, AppState, ServeConfig};
use serde_json::json;

fn setup() -> (tempfile::TempDir, Fixture, axum::Router) {
    let dir = tempfile::tempdir().unwrap();
    let fx = art_fixture();
    let app = build_app(&fx, dir.path());
    (dir, fx, app)
}

#[tokio::test]
async fn every_endpoint_check_passes() {
    let (_dir, fx, app) = setup();
    let mut failures = Vec::new();
    for (name, check) in all_checks() {
        if let Err(e) = check(&app, &fx).await {
            failures.push(format!("{name}: {e}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[tokio::test]
async fn collections_route_independently() {
    let (_dir, _fx, app) = setup();
    let body = json!({ "vector": [4.0, 4.0], "condition": "ALL", "k": 1 }).to_string();
    let (status, tiny) = call(&app, "POST", "/collections/tiny/query", Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(tiny["matches"][0]["id"], json!(2));
    let (status, art) = call(&app, "POST", "/collections/art/query", Some(&body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(art["error"]["code"], json!("dimension_mismatch"));
}

#[test]
fn malformed_bundle_names_the_collection() {
    let dir = tempfile::tempdir().unwrap();
    art_fixture().write(&dir.path().join("good"));
    let bad = dir.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::write(bad.join("corpus.toml"), "metric = \"euclidean\"\n").unwrap();
    std::fs::write(bad.join("vectors.bin"), b"XXXX").unwrap();
    std::fs::write(bad.join("meta.tsv"), "id\n").unwrap();
    let cfg_path = dir.path().join("serve.toml");
    std::fs::write(
        &cfg_path,
        "[[collections]]\nid = \"good\"\npath = \"good\"\n[[collections]]\nid = \"broken\"\npath = \"bad\"\n",
    )
    .unwrap();
    let err = load_collections(&ServeConfig::load(&cfg_path).unwrap())
        .unwrap_err()
        .to_string();
    assert!(err.contains("`broken`"), "{err}");
    assert!(err.contains("bad"), "{err}");
}

#[test]
fn config_rejects_unknown_keys_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("serve.toml");
    std::fs::write(
        &p,
        "[[collections]]\nid = \"a\"\npath = \"x\"\ncolour = 1\n",
    )
    .unwrap();
    assert!(ServeConfig::load(&p).is_err());
    art_fixture().write(&dir.path().join("x"));
    std::fs::write(
        &p,
        "[[collections]]\nid = \"a\"\npath = \"x\"\n[[collections]]\nid = \"a\"\npath = \"x\"\n",
    )
    .unwrap();
    let err = load_collections(&ServeConfig::load(&p).unwrap()).unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
}

#[tokio::test]
async fn prebuilt_tree_file_gives_the_same_answers() {
    let dir = tempfile::tempdir().unwrap();
    let fx = art_fixture();
    fx.write(&dir.path().join("art"));
    let corpus = Arc::new(condra::format::load_corpus(dir.path().join("art")).unwrap());
    let tree = build_kd_tree(corpus.clone(), 16).unwrap();
    let index = build_cond_index(&tree, &corpus, &["culture", "medium", "title"]).unwrap();
    save_tree(dir.path().join("art.ctre"), &tree, Some(&index)).unwrap();
    // Without the index section the service builds one itself.
    save_tree(dir.path().join("bare.ctre"), &tree, None).unwrap();
    let p = dir.path().join("serve.toml");
    std::fs::write(
        &p,
        "[[collections]]\nid = \"built\"\npath = \"art\"\n\
         [[collections]]\nid = \"loaded\"\npath = \"art\"\ntree = \"art.ctre\"\n\
         [[collections]]\nid = \"bare\"\npath = \"art\"\ntree = \"bare.ctre\"\n",
    )
    .unwrap();
    let app = router(Arc::new(AppState::new(
        load_collections(&ServeConfig::load(&p).unwrap()).unwrap(),
    )));
    for p in [0, 17, 500] {
        let body = json!({ "point_id": p, "condition": r#"NOT culture="Greek" AND medium="bronze""#, "k": 12 }).to_string();
        let mut answers = Vec::new();
        for id in ["built", "loaded", "bare"] {
            let (status, mut v) = call(
                &app,
                "POST",
                &format!("/collections/{id}/query"),
                Some(&body),
            )
            .await;
            assert_eq!(status, StatusCode::OK, "{v}");
            v["collection"] = json!(null);
            answers.push(v);
        }
        assert_eq!(answers[0], answers[1]);
        assert_eq!(answers[0], answers[2]);
    }
}
