use std::collections::BTreeMap;

use serde_json::{json, Value};

use martlens::data;
use martlens::edge::{encode_stream, synthetic_stream, EdgePipeline, FramePacket, SyntheticExtractor};
use martlens::service::{self, RunningService};

struct Fixture {
    svc: RunningService,
    client: reqwest::Client,
    _dir: tempfile::TempDir,
}

impl Fixture {
    async fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let svc = service::start(dir.path(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
        Self {
            svc,
            client: reqwest::Client::new(),
            _dir: dir,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.svc.base_url())
    }

    async fn post_json(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    async fn post_bytes(&self, path: &str, body: Vec<u8>) -> (u16, Value) {
        let r = self.client.post(self.url(path)).body(body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    async fn trained_model(&self, n: usize, seed: u64) -> String {
        let csv = data::gen_synthetic_mart(n, seed).to_csv_string();
        let (status, up) = self.post_bytes("/datasets", csv.into_bytes()).await;
        assert_eq!(status, 201, "{up}");
        let (status, t) = self
            .post_json("/models", json!({ "dataset_id": up["dataset_id"], "target_name": "total_price" }))
            .await;
        assert_eq!(status, 201, "{t}");
        let r2 = t["metrics"]["r2"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r2));
        t["model_id"].as_str().unwrap().to_string()
    }
}

fn sample_instance() -> BTreeMap<String, f64> {
    let d = data::gen_synthetic_mart(1, 99);
    d.schema.map_from_vector(&d.records[0].values)
}

fn assert_api_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()), "{body}");
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let f = Fixture::new().await;
    assert_eq!(f.get("/health").await, (200, json!({ "status": "ok" })));
    let (status, body) = f.get("/nope").await;
    assert_eq!(status, 404);
    assert_api_error(&body, "not_found");
    let r = f.client.delete(f.url("/health")).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 400);
    assert_api_error(&r.json().await.unwrap(), "bad_request");
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn dataset_upload_validation() {
    let f = Fixture::new().await;
    let (status, body) = f.post_bytes("/datasets", b"WT,PPK,total_price\n300,abc,900\n".to_vec()).await;
    assert_eq!(status, 400);
    assert_api_error(&body, "bad_request");
    assert_eq!(body["detail"]["row"], 1);
    assert_eq!(body["detail"]["col"], "PPK");

    let (status, body) = f.post_bytes("/datasets", b"WT,PPK\n300,200\n".to_vec()).await;
    assert_eq!(status, 400, "missing target column: {body}");

    let (status, body) = f.post_bytes("/datasets?target=price", b"WT,PPK,price\n300,200,900\n310,205,950\n".to_vec()).await;
    assert_eq!(status, 201, "{body}");
    assert_eq!(body["rows"], 2);
    assert_eq!(body["features"], json!(["WT", "PPK"]));
    assert_eq!(body["dataset_id"].as_str().unwrap().len(), 64);
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn training_errors() {
    let f = Fixture::new().await;
    let (status, body) = f.post_json("/models", json!({ "dataset_id": "00ff" })).await;
    assert_eq!(status, 404);
    assert_api_error(&body, "not_found");

    let (status, body) = f.post_bytes("/models", b"{oops".to_vec()).await;
    assert_eq!(status, 400);
    assert_api_error(&body, "bad_request");

    // PPK duplicates WT, so the design is rank deficient.
    let mut csv = String::from("WT,PPK,total_price\n");
    for i in 0..30 {
        csv.push_str(&format!("{},{},{}\n", 100 + i, 100 + i, 500 + 3 * i));
    }
    let (_, up) = f.post_bytes("/datasets", csv.into_bytes()).await;
    let (status, body) = f.post_json("/models", json!({ "dataset_id": up["dataset_id"] })).await;
    assert_eq!(status, 422);
    assert_api_error(&body, "unprocessable");
    assert!(body["detail"]["feature"].is_string(), "{body}");
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn predict_explain_and_schema_errors() {
    let f = Fixture::new().await;
    let id = f.trained_model(400, 3).await;
    let instance = sample_instance();

    let (status, p) = f.post_json(&format!("/models/{id}/predict"), json!({ "instance": instance })).await;
    assert_eq!(status, 200);
    assert!(p["price"].as_f64().unwrap().is_finite());

    let (status, e) = f
        .post_json(&format!("/models/{id}/explain"), json!({ "instance": instance, "seed": 5 }))
        .await;
    assert_eq!(status, 200);
    assert_eq!(e["contributions"].as_array().unwrap().len(), martlens::explain::DEFAULT_NUM_FEATURES);
    assert_eq!(e["seed"], 5);
    assert_eq!(e["predicted_value"], p["price"]);

    // Default seed when none is given.
    let (_, e) = f.post_json(&format!("/models/{id}/explain"), json!({ "instance": instance })).await;
    assert_eq!(e["seed"], martlens::explain::DEFAULT_SEED);

    let mut missing = instance.clone();
    missing.remove("WT");
    missing.insert("colour".into(), 1.0);
    for route in ["predict", "explain"] {
        let (status, body) = f.post_json(&format!("/models/{id}/{route}"), json!({ "instance": missing })).await;
        assert_eq!(status, 422, "{route}");
        assert_api_error(&body, "unprocessable");
        assert_eq!(body["detail"]["missing"], json!(["WT"]));
        assert_eq!(body["detail"]["extra"], json!(["colour"]));
    }

    let (status, body) = f.post_json("/models/abc123/explain", json!({ "instance": instance })).await;
    assert_eq!(status, 404);
    assert_api_error(&body, "not_found");
    let (status, _) = f.get("/models/not-hex").await;
    assert_eq!(status, 404);
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn explain_is_byte_identical_for_a_seed() {
    let f = Fixture::new().await;
    let id = f.trained_model(300, 8).await;
    let body = json!({ "instance": sample_instance(), "seed": 11 });
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let r = f
            .client
            .post(f.url(&format!("/models/{id}/explain")))
            .json(&body)
            .send()
            .await
            .unwrap();
        bodies.push(r.bytes().await.unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn whatif_contract() {
    let f = Fixture::new().await;
    let id = f.trained_model(500, 4).await;
    let instance = sample_instance();

    let (status, same) = f
        .post_json(&format!("/models/{id}/whatif"), json!({ "instance": instance, "overrides": {}, "seed": 3 }))
        .await;
    assert_eq!(status, 200);
    assert_eq!(same["delta"], 0.0);
    assert_eq!(same["before"], same["after"]);

    // Read the fitted WT coefficient from the model endpoint first.
    let (_, model) = f.get(&format!("/models/{id}")).await;
    let coefs = model["artifact"]["model"]["coefficients"].as_array().unwrap();
    let wt = coefs.iter().find(|c| c["feature"] == "WT").unwrap()["value"].as_f64().unwrap();
    assert!(wt > 0.0);
    let heavier = instance["WT"] + 50.0;
    let (status, w) = f
        .post_json(
            &format!("/models/{id}/whatif"),
            json!({ "instance": instance, "overrides": { "WT": heavier }, "seed": 3 }),
        )
        .await;
    assert_eq!(status, 200);
    let delta = w["delta"].as_f64().unwrap();
    assert!(delta > 0.0);
    assert!((delta - 50.0 * wt).abs() < 1e-6 * (1.0 + delta.abs()));
    assert_eq!(w["after"]["explanation"]["instance_values"]["WT"], heavier);

    let (status, body) = f
        .post_json(
            &format!("/models/{id}/whatif"),
            json!({ "instance": instance, "overrides": { "color": 1.0 } }),
        )
        .await;
    assert_eq!(status, 422);
    assert_api_error(&body, "unprocessable");
    assert_eq!(body["detail"]["unknown"], json!(["color"]));
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn ingest_frames_features_and_errors() {
    let f = Fixture::new().await;
    let frames = synthetic_stream(60, 16, 12, 2);
    let packets = EdgePipeline::default()
        .package("cam-a", &frames, &SyntheticExtractor::default())
        .unwrap();
    let three = packets[..3].to_vec();
    let (status, r) = f.post_bytes("/ingest/frames", encode_stream(&three)).await;
    assert_eq!(status, 200);
    assert!(r["results"].as_array().unwrap().iter().all(|p| p["status"] == "ack"));
    assert_eq!(r["highest_contiguous"]["cam-a"], 2);

    // Same batch again plus a gap: duplicates ack without new rows.
    let batch = vec![three[1].clone(), packets[4].clone()];
    let (_, r) = f.post_bytes("/ingest/frames", encode_stream(&batch)).await;
    assert_eq!(r["results"][0]["duplicate"], true);
    assert_eq!(r["results"][1]["duplicate"], false);
    assert_eq!(r["highest_contiguous"]["cam-a"], 2);

    let (_, animals) = f.get("/animals").await;
    let seqs: Vec<u64> = animals.as_array().unwrap().iter().map(|a| a["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, vec![0, 1, 2, 4]);
    assert!(animals[0]["features"]["WT"].as_f64().unwrap() >= 50.0);

    // Feature packets must match the stream's columns.
    let bad = FramePacket::from_features("cam-a", 3, &BTreeMap::from([("girth".to_string(), 1.0)]));
    let (_, r) = f.post_bytes("/ingest/frames", encode_stream(&[bad])).await;
    assert_eq!(r["results"][0]["status"], "nack");

    let good = FramePacket::from_features(
        "cam-b",
        0,
        &BTreeMap::from([("WT".to_string(), 412.5), ("height_cm".to_string(), 131.0)]),
    );
    let mut flipped = good.clone();
    flipped.payload[0] ^= 1;
    let (_, r) = f.post_bytes("/ingest/frames", encode_stream(&[flipped, good])).await;
    assert_eq!(r["results"][0]["status"], "nack");
    assert_eq!(r["results"][0]["reason"], "checksum");
    assert_eq!(r["results"][1]["status"], "ack");
    assert_eq!(r["highest_contiguous"]["cam-b"], 0);

    let (status, body) = f.post_bytes("/ingest/frames", vec![0, 0, 0, 9, b'{']).await;
    assert_eq!(status, 400);
    assert_api_error(&body, "bad_request");

    let bad_id = FramePacket::from_features("../etc", 0, &BTreeMap::from([("WT".to_string(), 1.0)]));
    let (_, r) = f.post_bytes("/ingest/frames", encode_stream(&[bad_id])).await;
    assert_eq!(r["results"][0]["status"], "nack");
    f.svc.stop().await.unwrap();
}

#[tokio::test]
async fn concurrent_explains_agree() {
    let f = Fixture::new().await;
    let id = f.trained_model(300, 6).await;
    let body = json!({ "instance": sample_instance(), "seed": 9, "num_samples": 1000 });
    let mut handles = Vec::new();
    for _ in 0..8 {
        let client = f.client.clone();
        let url = f.url(&format!("/models/{id}/explain"));
        let body = body.clone();
        handles.push(tokio::spawn(async move {
            client.post(url).json(&body).send().await.unwrap().bytes().await.unwrap()
        }));
    }
    let mut outs = Vec::new();
    for h in handles {
        outs.push(h.await.unwrap());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
    f.svc.stop().await.unwrap();
}
