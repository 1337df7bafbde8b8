use std::collections::BTreeMap;
use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;

use chrono::Duration;
use serde_json::{json, Value};

use workpulse::annotation::make_batches;
use workpulse::service::{serve, ManualClock, ProjectDefinition, Service, ServiceConfig, TOKEN_HEADER};

struct Server {
    addr: SocketAddr,
    clock: Arc<ManualClock>,
    def: ProjectDefinition,
    _rt: tokio::runtime::Runtime,
    _stop: tokio::sync::oneshot::Sender<()>,
}

fn start() -> Server {
    let ids: Vec<String> = (0..10).map(|i| format!("t{i:02}")).collect();
    let def = ProjectDefinition {
        id: "demo".into(),
        round: 1,
        batches: make_batches(&ids, 5, 1, 4).unwrap(),
        texts: ids.iter().map(|i| (i.clone(), format!("text {i}"))).collect(),
    };
    let clock = Arc::new(ManualClock::new("2014-02-03T10:00:00Z".parse().unwrap()));
    let mut svc = Service::new(
        ServiceConfig {
            token: Some("sesame".into()),
            ..ServiceConfig::default()
        },
        clock.clone(),
    );
    svc.add_project(def.clone()).unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    rt.spawn(serve(listener, Arc::new(svc), async {
        let _ = rx.await;
    }));
    Server {
        addr,
        clock,
        def,
        _rt: rt,
        _stop: tx,
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

impl Server {
    fn url(&self, path: &str) -> String {
        format!("http://{}/v1{path}", self.addr)
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut r = agent().get(self.url(path)).header(TOKEN_HEADER, "sesame").call().unwrap();
        let mut s = String::new();
        r.body_mut().as_reader().read_to_string(&mut s).unwrap();
        (r.status().as_u16(), s)
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut r = agent()
            .post(self.url(path))
            .header(TOKEN_HEADER, "sesame")
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
        let mut s = String::new();
        r.body_mut().as_reader().read_to_string(&mut s).unwrap();
        (r.status().as_u16(), serde_json::from_str(&s).unwrap_or(Value::Null))
    }

    /// Answers every position with `yes(tweet_id)`.
    fn answers(&self, batch_id: &str, yes: impl Fn(&str) -> bool) -> BTreeMap<String, &'static str> {
        let b = self.def.batches.iter().find(|b| b.id == batch_id).unwrap();
        b.items
            .iter()
            .enumerate()
            .map(|(p, t)| (p.to_string(), if yes(t) { "Y" } else { "N" }))
            .collect()
    }
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn token_and_unknown_project() {
    let s = start();
    let r = agent().get(s.url("/projects/demo/status")).call().unwrap();
    assert_eq!(r.status().as_u16(), 401);
    assert_eq!(s.get("/projects/nope/status").0, 404);
    let (code, body) = s.get("/projects/demo/status");
    assert_eq!(code, 200);
    let st = json(&body);
    assert_eq!(st["batches_total"], 2);
    assert_eq!(st["statistics_available"], false);
}

#[test]
fn assignment_submission_and_errors() {
    let s = start();
    let (code, body) = s.get("/projects/demo/next-batch?worker=w1");
    assert_eq!(code, 200);
    let view = json(&body);
    let batch = view["batch_id"].as_str().unwrap().to_string();
    assert_eq!(view["items"].as_array().unwrap().len(), 6);
    assert!(!body.contains("\"t0"), "tweet ids leaked: {body}");

    let (code, body) = s.get("/projects/demo/next-batch?worker=w1");
    assert_eq!(code, 409);
    assert_eq!(json(&body)["assignment"]["batch_id"], batch.as_str());

    let mut partial = s.answers(&batch, |_| true);
    partial.remove("0");
    let (code, body) = s.post(
        &format!("/projects/demo/batches/{batch}/labels"),
        json!({ "worker_id": "w1", "answers": partial }),
    );
    assert_eq!(code, 422);
    assert_eq!((body["answered"].clone(), body["expected"].clone()), (json!(5), json!(6)));

    let (code, receipt) = s.post(
        &format!("/projects/demo/batches/{batch}/labels"),
        json!({ "worker_id": "w1", "answers": s.answers(&batch, |_| true) }),
    );
    assert_eq!(code, 200);
    assert_eq!(receipt["qualified"], true);

    let (code, _) = s.post(
        &format!("/projects/demo/batches/{batch}/labels"),
        json!({ "worker_id": "w2", "answers": s.answers(&batch, |_| true) }),
    );
    assert_eq!(code, 409, "no assignment held");
    let (code, _) = s.post(
        "/projects/demo/batches/missing/labels",
        json!({ "worker_id": "w1", "answers": {} }),
    );
    assert_eq!(code, 404);
}

#[test]
fn expired_assignment_is_gone() {
    let s = start();
    let view = json(&s.get("/projects/demo/next-batch?worker=w1").1);
    let batch = view["batch_id"].as_str().unwrap().to_string();
    s.clock.advance(Duration::minutes(31));
    let (code, _) = s.post(
        &format!("/projects/demo/batches/{batch}/labels"),
        json!({ "worker_id": "w1", "answers": s.answers(&batch, |_| true) }),
    );
    assert_eq!(code, 410);
    // the batch is back in the pool
    let (code, _) = s.get("/projects/demo/next-batch?worker=w2");
    assert_eq!(code, 200);
}

#[test]
fn full_project_export_and_adjudication() {
    let s = start();
    // five workers per batch; w3 and w4 flip t01 and t02 so both land in the 3/5 tier
    for w in 0..7 {
        let worker = format!("w{w}");
        loop {
            let (code, body) = s.get(&format!("/projects/demo/next-batch?worker={worker}"));
            if code == 204 {
                break;
            }
            assert_eq!(code, 200, "{body}");
            let batch = json(&body)["batch_id"].as_str().unwrap().to_string();
            let answers = s.answers(&batch, |t| {
                let truth = t < "t05";
                if w >= 3 && (t == "t01" || t == "t02") {
                    !truth
                } else {
                    truth
                }
            });
            let (code, _) = s.post(
                &format!("/projects/demo/batches/{batch}/labels"),
                json!({ "worker_id": worker, "answers": answers }),
            );
            assert_eq!(code, 200);
        }
    }
    let st = json(&s.get("/projects/demo/status").1);
    assert_eq!(st["batches_complete"], 2);
    assert_eq!(st["statistics_available"], true);

    let r = agent()
        .get(s.url("/projects/demo/export/labels.csv"))
        .header(TOKEN_HEADER, "sesame")
        .call()
        .unwrap();
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/csv"));
    let (_, csv) = s.get("/projects/demo/export/labels.csv");
    // 2 batches x 5 workers x 6 positions, plus the header
    assert_eq!(csv.lines().count(), 61);

    let queue: Vec<Value> = serde_json::from_str(&s.get("/projects/demo/adjudication-queue").1).unwrap();
    let queued: Vec<&str> = queue.iter().map(|q| q["tweet_id"].as_str().unwrap()).collect();
    assert_eq!(queued, ["t01", "t02"]);
    assert_eq!(s.post("/projects/demo/adjudications", json!({"tweet_id": "t07", "expert_id": "e", "job_related": true})).0, 404);
    let (code, out) = s.post(
        "/projects/demo/adjudications",
        json!({ "tweet_id": "t01", "expert_id": "e1", "job_related": true }),
    );
    assert_eq!(code, 200);
    assert_eq!(out["changed"], true);
    let pending: Vec<Value> = serde_json::from_str(&s.get("/projects/demo/adjudication-queue").1).unwrap();
    assert_eq!(pending.len(), 1);
    let all: Vec<Value> =
        serde_json::from_str(&s.get("/projects/demo/adjudication-queue?include_decided=true").1).unwrap();
    assert_eq!(all.len(), 2);
}
