//! The session API over a real socket.

mod common;

use std::sync::Arc;

use nrpa_dialogue::action::DialogueAct;
use nrpa_dialogue::cli::{Catalog, CatalogEntry, RunConfig};
use nrpa_dialogue::env::{Assessment, EnvError, Transition};
use nrpa_dialogue::eval::read_episodes;
use nrpa_dialogue::service::{serve, AppState};
use nrpa_dialogue::{
    ActionSpace, Dataset, DialogueState, Environment, NrpaParams, RewardSpec, ScriptedScenario,
};
use rand::RngCore;
use serde_json::{json, Value};
use tokio::sync::oneshot;

/// Scripted scenario whose system side always fails.
struct Unreachable(ScriptedScenario);

impl Environment for Unreachable {
    fn scenario_id(&self) -> &str {
        "broken"
    }
    fn action_space(&self) -> &ActionSpace {
        self.0.action_space()
    }
    fn reward_spec(&self) -> &RewardSpec {
        self.0.reward_spec()
    }
    fn initial_state(&self) -> DialogueState {
        let mut s = self.0.initial_state();
        s.scenario_id = "broken".into();
        s
    }
    fn live_opening(&self) -> DialogueState {
        let mut s = self.0.live_opening();
        s.scenario_id = "broken".into();
        s
    }
    fn step(&self, _: &DialogueState, _: &DialogueAct, _: &mut dyn RngCore) -> Result<Transition, EnvError> {
        Err(EnvError::InvalidConfig("backend offline".into()))
    }
    fn respond(&self, _: &DialogueState, _: &DialogueAct, _: &mut dyn RngCore) -> Result<DialogueState, EnvError> {
        Err(EnvError::InvalidConfig("backend offline".into()))
    }
    fn assess_user(&self, _: &DialogueState) -> Result<Assessment, EnvError> {
        Ok(Assessment::ongoing())
    }
}

struct Server {
    base: String,
    agent: ureq::Agent,
    stop: Option<oneshot::Sender<()>>,
    done: Option<std::thread::JoinHandle<std::io::Result<()>>>,
    flush: std::path::PathBuf,
    _dir: tempfile::TempDir,
}

impl Server {
    fn start() -> Server {
        let cfg = RunConfig::load(&common::repo_dir().join("configs/scripted_smoke.json")).unwrap();
        let mut catalog: Catalog = cfg.catalog().unwrap();
        let esconv = ScriptedScenario::load(&common::smoke_scenarios()[0]).unwrap();
        catalog.entries.push(CatalogEntry {
            env: Arc::new(Unreachable(esconv)),
            dataset: Dataset::EsConv,
            price_targets: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let flush = dir.path().join("sessions.jsonl");
        let params = NrpaParams {
            iterations: 5,
            ..NrpaParams::default()
        };
        let app = AppState::new(catalog, params, Some(flush.clone()));
        let (tx, rx) = oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let done = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, app, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        let addr = addr_rx.recv().unwrap();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Server {
            base: format!("http://{addr}"),
            agent,
            stop: Some(tx),
            done: Some(done),
            flush,
            _dir: dir,
        }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut r = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_json().unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut r = self
            .agent
            .post(&format!("{}{path}", self.base))
            .send_json(body)
            .unwrap();
        (r.status().as_u16(), r.body_mut().read_json().unwrap())
    }

    fn create(&self, scenario: &str) -> String {
        let (code, v) = self.post("/sessions", json!({"scenario_id": scenario}));
        assert_eq!(code, 201, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    fn say(&self, id: &str, text: &str, nonce: &str) -> (u16, Value) {
        self.post(&format!("/sessions/{id}/message"), json!({"text": text, "nonce": nonce}))
    }

    /// Stops the server and returns the flushed session records.
    fn shutdown(mut self) -> Vec<nrpa_dialogue::eval::EpisodeRecord> {
        self.stop.take().unwrap().send(()).unwrap();
        self.done.take().unwrap().join().unwrap().unwrap();
        read_episodes(&self.flush).unwrap()
    }
}

#[test]
fn health_and_catalog() {
    let s = Server::start();
    assert_eq!(s.get("/healthz"), (200, json!({"status": "ok"})));
    let (code, list) = s.get("/scenarios");
    assert_eq!(code, 200);
    let ids: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["scenario_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["esconv-smoke", "cima-smoke", "cb-smoke", "p4g-smoke", "broken"]);
    assert!(!list[0]["acts"].as_array().unwrap().is_empty());
}

#[test]
fn create_validates_its_input() {
    let s = Server::start();
    let (code, v) = s.post("/sessions", json!({"scenario_id": "nope"}));
    assert_eq!(code, 404);
    assert!(v["error"].as_str().unwrap().contains("nope"));
    let (code, _) = s.post("/sessions", json!({"scenario_id": "esconv-smoke", "dataset": "CIMA"}));
    assert_eq!(code, 404);
    let (code, v) = s.post("/sessions", json!({"scenario_id": "esconv-smoke", "params": {"level": 0}}));
    assert_eq!(code, 400, "{v}");

    let (code, v) = s.post("/sessions", json!({"scenario_id": "esconv-smoke", "dataset": "ESConv"}));
    assert_eq!(code, 201);
    assert_eq!(v["opening_message"], "Hello, what brings you here today?");
    assert_eq!(v["session"]["status"], "active");
    assert_eq!(v["session"]["params"]["iterations"], 5);
    assert_eq!(v["session"]["state"]["history"].as_array().unwrap().len(), 1);
}

#[test]
fn a_dialogue_from_first_message_to_the_end() {
    let s = Server::start();
    let id = s.create("esconv-smoke");

    let (code, turn) = s.say(&id, "I lost my job and I can't sleep.", "n1");
    assert_eq!(code, 200, "{turn}");
    assert_eq!(turn["terminal"], false);
    let act = turn["act"].as_str().unwrap();
    assert!(!turn["system_reply"].as_str().unwrap().is_empty());
    assert!(turn["stats"]["playouts_executed"].as_u64().unwrap() >= 1);

    let (_, session) = s.get(&format!("/sessions/{id}"));
    let history = session["state"]["history"].as_array().unwrap();
    let speakers: Vec<&str> = history.iter().map(|u| u["speaker"].as_str().unwrap()).collect();
    assert_eq!(speakers, ["System", "User", "System"]);
    assert_eq!(history[2]["act"], act);
    assert_eq!(session["in_flight"], false);

    // The same nonce again is a replay, not a new turn.
    let (code, _) = s.say(&id, "I lost my job and I can't sleep.", "n1");
    assert_eq!(code, 409);

    // Deepen the search mid-session; the change sticks for later turns.
    let (code, turn) = s.post(
        &format!("/sessions/{id}/message"),
        json!({"text": "It is mostly the rent.", "nonce": "n2", "params": {"level": 2, "iterations": 3}}),
    );
    assert_eq!(code, 200, "{turn}");
    assert_eq!(turn["stats"]["level"], 2);
    let (_, stats) = s.get(&format!("/sessions/{id}/stats"));
    assert_eq!(stats["params"]["level"], 2);
    assert_eq!(stats["turns_planned"], 2);

    let (code, turn) = s.say(&id, "Thanks, I feel better now.", "n3");
    assert_eq!(code, 200, "{turn}");
    assert_eq!(turn["terminal"], true);
    assert_eq!(turn["terminal_class"], "Solved");
    assert!(turn["act"].is_null());
    assert!((turn["reward"].as_f64().unwrap() - 0.998).abs() < 1e-12);

    let (code, v) = s.say(&id, "hello?", "n4");
    assert_eq!(code, 409);
    assert!(v["error"].as_str().unwrap().contains("ended"));

    let records = s.shutdown();
    assert_eq!(records.len(), 1);
    records[0].check().unwrap();
    assert_eq!(records[0].turns_used, 2);
    assert!(records[0].aborted.is_none());
}

#[test]
fn unknown_sessions_are_404() {
    let s = Server::start();
    assert_eq!(s.get("/sessions/s999999").0, 404);
    assert_eq!(s.get("/sessions/s999999/stats").0, 404);
    assert_eq!(s.say("s999999", "hi", "n").0, 404);
}

#[test]
fn malformed_messages_are_rejected() {
    let s = Server::start();
    let id = s.create("cima-smoke");
    assert_eq!(s.say(&id, "   ", "n1").0, 400);
    assert_eq!(s.say(&id, "hi", "").0, 400);
    let (code, v) = s.post(&format!("/sessions/{id}/message"), json!({"text": "hi"}));
    assert_eq!(code, 422);
    assert!(v["error"].as_str().unwrap().contains("nonce"), "{v}");
}

#[test]
fn environment_failure_keeps_the_session() {
    let s = Server::start();
    let id = s.create("broken");
    let (code, v) = s.say(&id, "hello", "n1");
    assert_eq!(code, 502, "{v}");
    assert!(v["error"].as_str().unwrap().contains("backend offline"));
    let (_, session) = s.get(&format!("/sessions/{id}"));
    assert_eq!(session["in_flight"], false);
    assert_eq!(session["status"], "active");
    assert_eq!(session["state"]["history"].as_array().unwrap().len(), 1);
    // Nothing was committed, so the client may retry with the same nonce.
    assert_eq!(s.say(&id, "hello", "n1").0, 502);
}

#[test]
fn shutdown_flushes_unfinished_sessions_as_aborted() {
    let s = Server::start();
    let id = s.create("p4g-smoke");
    assert_eq!(s.say(&id, "Hi, I'm good.", "n1").0, 200);
    s.create("cb-smoke");
    let records = s.shutdown();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].scenario_id, "p4g-smoke");
    assert!(records.iter().all(|r| r.aborted.is_some() && r.reward.is_none()));
    assert_eq!(records[1].price_targets.map(|p| p.seller), Some(350.0));
}
