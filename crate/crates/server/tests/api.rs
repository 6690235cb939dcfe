use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vobs_core::engine::{Limits, Model, State};
use vobs_core::refinement::{parse_trace, replay_trace};
use vobs_core::vo::{FixedClock, Ledger, VoManager};
use vobs_server::{router, AppState, ServerConfig};

const NOW: &str = "2026-01-01T00:00:00Z";

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

struct Fixture {
    dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
}

fn fixture_with(name: &str, config: ServerConfig) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&corpus(name), dir.path());
    let _ = fs::remove_dir_all(dir.path().join(".vobs"));
    let state = AppState::load(dir.path(), config, Arc::new(FixedClock(NOW.into()))).unwrap();
    let app = router(state.clone());
    Fixture { dir, state, app }
}

fn fixture(name: &str) -> Fixture {
    fixture_with(name, ServerConfig::default())
}

impl Fixture {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json");
        let req = req
            .body(
                body.map(|b| Body::from(b.to_string()))
                    .unwrap_or_else(Body::empty),
            )
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (
            status,
            serde_json::from_slice(&bytes).unwrap_or(Value::Null),
        )
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    async fn session(&self, machine: &str) -> String {
        let (st, v) = self
            .post("/api/sessions", json!({ "machine": machine }))
            .await;
        assert_eq!(st, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn step(&self, id: &str, event: &str, params: Value) -> (StatusCode, Value) {
        self.post(
            &format!("/api/sessions/{id}/step"),
            json!({ "event": event, "params": params }),
        )
        .await
    }
}

fn events(view: &Value) -> Vec<String> {
    view["enabled"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["event"].as_str().unwrap().to_string())
        .collect()
}

fn assert_error_shape(v: &Value) {
    assert!(v["error"].is_string() && v["detail"].is_string(), "{v}");
}

#[tokio::test]
async fn index_page() {
    let f = fixture("lighting");
    let req = Request::builder().uri("/").body(Body::empty()).unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert!(String::from_utf8_lossy(&body).contains("/api/project"));
}

#[tokio::test]
async fn project_summary() {
    let f = fixture("lighting");
    let (st, v) = f.get("/api/project").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["name"], "lighting");
    assert_eq!(v["models"].as_array().unwrap().len(), 5);
    assert_eq!(v["edges"].as_array().unwrap().len(), 4);
    assert_eq!(v["vos"].as_array().unwrap().len(), 12);
    assert_eq!(v["validated"], false);
    let dimmer = v["models"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == "Dimmer")
        .unwrap();
    assert_eq!(dimmer["generic"], true);
    assert_eq!(dimmer["file"], "models/dimmer.vob");
    let kinds: Vec<&str> = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"views") && kinds.contains(&"instantiates"));
}

#[tokio::test]
async fn vo_listing_and_lookup() {
    let f = fixture("lighting");
    let (_, v) = f.get("/api/vos").await;
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 12);
    assert_eq!(list[0]["id"], "sw_toggle");
    assert_eq!(list[0]["record"]["status"], "unchecked");
    let (st, v) = f.get("/api/vos/blink_inspection").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["automatic"], false);
    let (st, v) = f.get("/api/vos/nosuch").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
}

#[tokio::test]
async fn switch_session_step_and_conflict() {
    let f = fixture("lighting");
    let (st, v) = f
        .post("/api/sessions", json!({ "machine": "Switch" }))
        .await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(v["state"], json!({ "on": false }));
    assert_eq!(events(&v), ["turn_on"]);
    assert_eq!(v["history_len"], 0);
    let id = v["id"].as_str().unwrap().to_string();

    let (st, v) = f.step(&id, "turn_on", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["state"], json!({ "on": true }));
    assert_eq!(events(&v), ["turn_off"]);

    let (st, v) = f.step(&id, "turn_on", json!({})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_error_shape(&v);
    assert_eq!(v["enabled"], json!([{ "event": "turn_off", "params": {} }]));
}

#[tokio::test]
async fn undo_rules() {
    let f = fixture("lighting");
    let id = f.session("Switch").await;
    let (_, initial) = f.get(&format!("/api/sessions/{id}")).await;
    let (st, v) = f.post(&format!("/api/sessions/{id}/undo"), json!({})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_error_shape(&v);

    f.step(&id, "turn_on", json!({})).await;
    let (_, v) = f.post(&format!("/api/sessions/{id}/undo"), json!({})).await;
    assert_eq!(v, initial);

    f.step(&id, "turn_on", json!({})).await;
    f.step(&id, "turn_off", json!({})).await;
    let (_, v) = f.post(&format!("/api/sessions/{id}/undo"), json!({})).await;
    assert_eq!(v["history_len"], 1);
    assert_eq!(v["state"], json!({ "on": true }));
}

#[tokio::test]
async fn session_creation_errors() {
    let f = fixture("lighting");
    let (st, v) = f.post("/api/sessions", json!({ "machine": "Lamp" })).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
    let (st, v) = f
        .post("/api/sessions", json!({ "machine": "Dimmer" }))
        .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"], "unbound_constants");
    assert!(v["detail"].as_str().unwrap().contains("MAX"));
    let (st, _) = f.get("/api/sessions/nope").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn parameter_validation() {
    let f = fixture("basic");
    let id = f.session("Enter").await;
    let (_, v) = f.get(&format!("/api/sessions/{id}")).await;
    let ns: Vec<&Value> = v["enabled"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| &l["params"]["n"])
        .collect();
    assert_eq!(ns, [&json!(1), &json!(2), &json!(3)]);
    for (params, ok) in [
        (json!({ "n": 5 }), false),
        (json!({ "n": "a" }), false),
        (json!({}), false),
        (json!({ "n": 1, "m": 2 }), false),
        (json!({ "n": 2 }), true),
    ] {
        let (st, v) = f.step(&id, "enter", params.clone()).await;
        if ok {
            assert_eq!(st, StatusCode::OK, "{params}");
            assert_eq!(v["state"]["slot"], 2);
        } else {
            assert_eq!(st, StatusCode::BAD_REQUEST, "{params}");
            assert_error_shape(&v);
        }
    }
    let (st, _) = f.step(&id, "jump", json!({})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let id = f.session("Swap").await;
    let (st, v) = f.step(&id, "move", json!({ "x": "b" })).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["state"], json!({ "left": ["a"], "right": ["b"] }));
}

#[tokio::test]
async fn sessions_are_isolated_and_views_consistent() {
    let f = fixture("lighting");
    let a = f.session("Light1").await;
    let b = f.session("Light1").await;
    assert_ne!(a, b);
    f.step(&a, "turn_on", json!({})).await;
    let (_, v) = f.step(&a, "tick", json!({})).await;
    let (_, w) = f.get(&format!("/api/sessions/{b}")).await;
    assert_eq!(w["history_len"], 0);
    assert_eq!(w["state"], json!({ "on": false, "blink": 0 }));

    let m = f.state.manager();
    let model = Model::new(m.project().machine("Light1").unwrap()).unwrap();
    let state = State(vec![
        vobs_core::engine::Value::Bool(true),
        vobs_core::engine::Value::Int(1),
    ]);
    let fresh: Vec<String> = model
        .enabled(&state)
        .unwrap()
        .iter()
        .map(|l| l.event.clone())
        .collect();
    assert_eq!(events(&v), fresh);
    assert_eq!(f.state.session_count(), 2);
}

#[tokio::test]
async fn sessions_expire_when_idle() {
    let f = fixture_with(
        "lighting",
        ServerConfig {
            session_ttl: Duration::ZERO,
            ..ServerConfig::default()
        },
    );
    let id = f.session("Switch").await;
    let (st, _) = f.get(&format!("/api/sessions/{id}")).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn save_trace_and_register() {
    let f = fixture("lighting");
    let id = f.session("Switch").await;
    let (st, _) = f
        .post(
            &format!("/api/sessions/{id}/save"),
            json!({ "name": "smoke" }),
        )
        .await;
    assert_eq!(st, StatusCode::CONFLICT);

    f.step(&id, "turn_on", json!({})).await;
    f.step(&id, "turn_off", json!({})).await;
    let body = json!({ "name": "smoke", "register_as_vo": true, "requirement_tag": "REQ-9" });
    let (st, v) = f
        .post(&format!("/api/sessions/{id}/save"), body.clone())
        .await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    assert_eq!(v, json!({ "path": "traces/smoke.trace", "vo_id": "smoke" }));

    let text = fs::read_to_string(f.dir.path().join("traces/smoke.trace")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("step ")).count(), 2);
    let trace = parse_trace(&text).unwrap();
    let m = f.state.manager();
    let model = Model::new(m.project().machine("Switch").unwrap()).unwrap();
    assert!(replay_trace(&model, &trace).is_pass());

    let (_, list) = f.get("/api/vos").await;
    let new = list
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["id"] == "smoke")
        .unwrap();
    assert_eq!(
        (new["kind"].as_str(), new["record"]["status"].as_str()),
        (Some("trace"), Some("unchecked"))
    );
    assert_eq!(new["requirement_tag"], "REQ-9");
    let (_, p) = f.get("/api/project").await;
    assert_eq!(p["vos"].as_array().unwrap().len(), 13);

    let (st, v) = f.post(&format!("/api/sessions/{id}/save"), body).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"], "name_collision");
    let (st, _) = f
        .post(
            &format!("/api/sessions/{id}/save"),
            json!({ "name": "../evil" }),
        )
        .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let (st, rec) = f.post("/api/vos/smoke/check", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(rec["status"], "discharged");
}

#[tokio::test]
async fn save_without_registering() {
    let f = fixture("basic");
    let id = f.session("Enter").await;
    f.step(&id, "enter", json!({ "n": 3 })).await;
    let (st, v) = f
        .post(
            &format!("/api/sessions/{id}/save"),
            json!({ "name": "enter3" }),
        )
        .await;
    assert_eq!(st, StatusCode::CREATED);
    assert!(v.get("vo_id").is_none());
    let text = fs::read_to_string(f.dir.path().join("traces/enter3.trace")).unwrap();
    assert_eq!(text, "trace for Enter\nstep enter n=3\n");
    assert_eq!(f.get("/api/vos").await.1.as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn run_checks() {
    let f = fixture("basic");
    let (st, rec) = f.post("/api/vos/sw_true/check", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(
        (rec["status"].as_str(), rec["via"]["kind"].as_str()),
        (Some("discharged"), Some("auto"))
    );

    let (_, rec) = f.post("/api/vos/counter_deadlock/check", json!({})).await;
    assert_eq!(rec["status"], "failed");
    assert_eq!(rec["evidence"]["detail"]["valuation"], "{c=3}");

    let (st, _) = f.post("/api/vos/nosuch/check", json!({})).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let ledger = Ledger::load(&f.dir.path().join(".vobs/status.json")).unwrap();
    assert_eq!(
        ledger.get("sw_true").unwrap().status,
        vobs_core::vo::Status::Discharged
    );
    assert_eq!(
        ledger.get("counter_deadlock").unwrap().status,
        vobs_core::vo::Status::Failed
    );
}

#[tokio::test]
async fn check_matches_direct_manager_record() {
    let f = fixture("lighting");
    let (_, rec) = f.post("/api/vos/dimmer_sim/check", json!({})).await;
    let m = VoManager::load(
        f.dir.path(),
        Limits::default(),
        Arc::new(FixedClock("other".into())),
    )
    .unwrap();
    let mut direct = m.check_vo("dimmer_sim", None, &Ledger::default()).unwrap();
    direct.timestamp = Some(NOW.into());
    assert_eq!(rec, serde_json::to_value(direct).unwrap());
}

#[tokio::test]
async fn manual_discharge_via_api() {
    let f = fixture("lighting");
    let (st, v) = f.post("/api/vos/blink_inspection/check", json!({})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert!(v["detail"]
        .as_str()
        .unwrap()
        .contains("/api/vos/blink_inspection/discharge"));

    let (st, v) = f
        .post(
            "/api/vos/blink_inspection/discharge",
            json!({ "note": " ", "actor": "ann" }),
        )
        .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);
    let (st, v) = f
        .post(
            "/api/vos/ltl_blink/discharge",
            json!({ "note": "fine", "actor": "ann" }),
        )
        .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert!(v["detail"].as_str().unwrap().contains("not a manual VO"));

    let note = "blinking matches expectation, inspected via animator";
    let (st, v) = f
        .post(
            "/api/vos/blink_inspection/discharge",
            json!({ "note": note, "actor": "ann" }),
        )
        .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "discharged");
    assert_eq!(v["via"]["kind"], "manual");
    assert_eq!(
        (
            v["actor"].as_str(),
            v["note"].as_str(),
            v["timestamp"].as_str()
        ),
        (Some("ann"), Some(note), Some(NOW))
    );
    let (_, e) = f.get("/api/vos/blink_inspection").await;
    assert_eq!(e["record"]["status"], "discharged");
}

#[tokio::test]
async fn check_budget_overrun_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("project.vobs"),
        "[project]\nname = \"big\"\n[[model]]\nname = \"Grid\"\nfile = \"grid.vob\"\n\
         [[vo]]\nid = \"grid_dl\"\ntarget = \"Grid\"\nkind = \"deadlock\"\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("grid.vob"),
        "machine Grid var x : 0..999 init 0 var y : 0..999 init 0 \
         event right when x < 999 then x := x + 1 end event up when y < 999 then y := y + 1 end end",
    )
    .unwrap();
    let config = ServerConfig {
        budget: Duration::from_millis(5),
        ..ServerConfig::default()
    };
    let state = AppState::load(dir.path(), config, Arc::new(FixedClock(NOW.into()))).unwrap();
    let f = Fixture {
        app: router(state.clone()),
        state,
        dir,
    };
    let (st, rec) = f.post("/api/vos/grid_dl/check", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(rec["status"], "failed");
    assert_eq!(rec["evidence"]["summary"], "inconclusive: budget");
    assert!(rec["dep_hashes"]["Grid"].is_string());
}
