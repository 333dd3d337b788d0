use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};
use si_cli::server::{router, AppState};
use si_core::io::{write_run, ArtifactStore};
use si_core::pipeline;
use si_core::RunConfig;
use tempfile::TempDir;

fn snapshot_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/snapshot")
}

fn base_config() -> Value {
    serde_json::from_str(&std::fs::read_to_string(snapshot_dir().join("run_memo3.json")).unwrap()).unwrap()
}

struct Service {
    base: String,
    client: reqwest::Client,
    _dir: TempDir,
}

impl Service {
    async fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState {
            store: ArtifactStore::open(dir.path()).unwrap(),
            data_root: snapshot_dir(),
            timeout: Duration::from_secs(120),
        };
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, router(Arc::new(state))).await.unwrap() });
        Self {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            _dir: dir,
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Vec<u8>) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status(), resp.bytes().await.unwrap().to_vec())
    }

    async fn get_json(&self, path: &str) -> (StatusCode, Value) {
        let (status, body) = self.get(path).await;
        (status, serde_json::from_slice(&body).unwrap())
    }

    async fn post(&self, body: &str) -> (StatusCode, Value) {
        let resp = self
            .client
            .post(format!("{}/runs", self.base))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap())
    }

    async fn create(&self, config: &Value) -> String {
        let (status, body) = self.post(&config.to_string()).await;
        assert!(status == StatusCode::CREATED || status == StatusCode::OK, "{status} {body}");
        body["id"].as_str().unwrap().to_string()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn posted_run_matches_a_direct_pipeline_run() {
    let svc = Service::start().await;
    let mut config = base_config();
    config.as_object_mut().unwrap().remove("bucket_preset");
    config["buckets"] = json!({ "edges": [0.15, 0.35], "labels": ["low", "moderate", "severe"] });

    let (status, body) = svc.post(&config.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = body["id"].as_str().unwrap().to_string();

    let direct = pipeline::run(&RunConfig::from_json(config.to_string().as_bytes()).unwrap(), &snapshot_dir()).unwrap();
    assert_eq!(id, direct.content_hash);
    let (status, stored) = svc.get(&format!("/runs/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored, write_run(&direct).unwrap());

    let (status, again) = svc.post(&config.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["id"], id);

    let (_, listing) = svc.get_json("/runs").await;
    let runs = listing.as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["id"], id);
    assert_eq!(runs[0]["config"]["buckets"]["edges"], json!([0.15, 0.35]));
}

#[tokio::test(flavor = "multi_thread")]
async fn read_endpoints_serve_the_stored_artifact() {
    let svc = Service::start().await;
    let id = svc.create(&base_config()).await;
    let (_, artifact) = svc.get_json(&format!("/runs/{id}")).await;
    let unit = artifact["panel"]["units"][0]["unit_id"].as_str().unwrap().to_string();

    let (status, cf) = svc.get_json(&format!("/runs/{id}/counterfactuals?unit={unit}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cf["run_id"], id);
    assert_eq!(cf["unit_id"], unit);
    assert_eq!(cf["labels"], json!(["low", "moderate", "severe"]));
    let days = cf["day_labels"].as_array().unwrap();
    assert_eq!(days.len(), 15);
    assert_eq!(days[0], 0);
    assert_eq!(cf["observed"].as_array().unwrap().len(), 15);
    let trajectories = cf["trajectories"].as_object().unwrap();
    assert_eq!(trajectories.len(), 3);
    assert!(trajectories.values().all(|t| t.as_array().unwrap().len() == 15));

    let (status, diagnostics) = svc.get_json(&format!("/runs/{id}/diagnostics")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(diagnostics, artifact["diagnostics"]);

    let (status, all) = svc.get_json(&format!("/runs/{id}/projections")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(all, artifact["diagnostics"]["projections"]);
    let severe = artifact["partition"]["groups"]["severe"][0].as_str().unwrap().to_string();
    let (status, rows) = svc.get_json(&format!("/runs/{id}/projections?unit={severe}")).await;
    assert_eq!(status, StatusCode::OK);
    let labels: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["moderate", "low"]);

    // Reads never change what is stored.
    let first = svc.get(&format!("/runs/{id}")).await;
    let second = svc.get(&format!("/runs/{id}")).await;
    assert_eq!(first, second);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_carry_the_right_status() {
    let svc = Service::start().await;
    let unknown = "0".repeat(64);
    for path in [
        format!("/runs/{unknown}"),
        format!("/runs/{unknown}/diagnostics"),
        format!("/runs/{unknown}/counterfactuals?unit=Arcadia"),
        "/runs/not-a-hash/projections".to_string(),
    ] {
        let (status, body) = svc.get_json(&path).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(body["error"]["status"], 404);
    }

    let id = svc.create(&base_config()).await;
    let (status, _) = svc.get_json(&format!("/runs/{id}/counterfactuals")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = svc.get_json(&format!("/runs/{id}/counterfactuals?unit=Atlantis")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = svc.get_json(&format!("/runs/{id}/projections?unit=Atlantis")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = svc.post("{ not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut unknown_field = base_config();
    unknown_field["surprise"] = json!(1);
    let (status, _) = svc.post(&unknown_field.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut missing = base_config();
    missing["deaths"] = json!("absent.csv");
    let (status, body) = svc.post(&missing.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert!(body["error"]["stage"].is_string());
    assert!(body["error"]["message"].as_str().unwrap().contains("absent.csv"));

    // Failed runs leave nothing behind.
    let (_, listing) = svc.get_json("/runs").await;
    assert_eq!(listing.as_array().unwrap().len(), 1);
}
