#![cfg(feature = "server")]

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::sync::Arc;

use ctf_core::baselines::{run_all, write_submission, MethodConfig, ReservoirCache};
use ctf_core::bundle::Bundle;
use ctf_core::referee::http::{serve, AppState};
use ctf_core::referee::{leaderboard, BoardView, Ledger};
use ctf_core::synth::Preset;

fn request(addr: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, body.to_string())
}

fn start(state: AppState) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            serve(l, Arc::new(state)).await.unwrap();
        });
    });
    addr
}

fn manifest_json(inbox: &Path, public: &Path, method: &str) -> String {
    let b = Bundle::load_train_only(public).unwrap();
    let m = MethodConfig::from_name(method).unwrap();
    let preds = run_all(&m, &b.train_view(), &ReservoirCache::default());
    let out = inbox.join(method);
    write_submission(&out, b.name(), m.name(), &preds).unwrap();
    // Paths inside the posted manifest are relative to the inbox.
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for p in v["predictions"].as_object_mut().unwrap().values_mut() {
        *p = format!("{method}/{}", p.as_str().unwrap()).into();
    }
    v.to_string()
}

#[test]
fn submit_score_and_board_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = Preset::PulseSmall.bundle(0).unwrap();
    let (reference, public, inbox) = (tmp.path().join("ref"), tmp.path().join("pub"), tmp.path().join("inbox"));
    bundle.save(&reference).unwrap();
    bundle.save_participant(&public).unwrap();
    let ledger_path = tmp.path().join("scores.jsonl");
    let state = AppState::new(&inbox, Ledger::new(&ledger_path), &[reference]).unwrap();
    let addr = start(state);

    let zeros = manifest_json(&inbox, &public, "zeros");
    let (status, body) = request(&addr, "POST", "/v1/submissions", &zeros);
    assert_eq!(status, 200, "{body}");
    let report: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["composite"].as_f64(), Some(0.0));

    let avg = manifest_json(&inbox, &public, "average");
    assert_eq!(request(&addr, "POST", "/v1/submissions", &avg).0, 200);

    let entries = Ledger::new(&ledger_path).read().unwrap();
    assert_eq!(entries.len(), 2);
    let (status, body) = request(&addr, "GET", "/v1/leaderboard?dataset=pulse-small", "");
    assert_eq!(status, 200);
    assert_eq!(body, leaderboard(&entries, "pulse-small", BoardView::Best).to_json());

    let id = &entries[0].submission_id;
    let (status, body) = request(&addr, "GET", &format!("/v1/scores/{id}"), "");
    assert_eq!(status, 200);
    assert_eq!(body, entries[0].to_json() + "\n");

    assert_eq!(request(&addr, "GET", "/v1/scores/nope", "").0, 404);
    assert_eq!(request(&addr, "GET", "/v1/nothing", "").0, 404);
    assert_eq!(request(&addr, "GET", "/v1/leaderboard", "").0, 400);
    assert_eq!(request(&addr, "GET", "/v1/leaderboard?dataset=pulse-small&view=worst", "").0, 400);
    assert_eq!(request(&addr, "POST", "/v1/submissions", "{not json").0, 400);
    let escape = r#"{"dataset":"pulse-small","method":"x","predictions":{"X1pred":"../../etc/passwd"}}"#;
    assert_eq!(request(&addr, "POST", "/v1/submissions", escape).0, 400);
    let other = r#"{"dataset":"elsewhere","method":"x","predictions":{}}"#;
    assert_eq!(request(&addr, "POST", "/v1/submissions", other).0, 404);
    assert_eq!(Ledger::new(&ledger_path).read().unwrap().len(), 2);
}
