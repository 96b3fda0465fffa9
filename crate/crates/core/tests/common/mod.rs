#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nrpa_dialogue::dialogue::DialogueState;
use nrpa_dialogue::llm::Role;
use nrpa_dialogue::prompts::{load_scenarios, render, render_judge, PromptSet, TemplateRole};
use nrpa_dialogue::{ActionSpace, Dataset, Environment, ScriptedScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn repo_dir() -> PathBuf {
    crate_dir().join("../..")
}

pub fn golden_path(d: Dataset) -> PathBuf {
    crate_dir().join("tests/golden").join(format!("{}.txt", d.file_stem()))
}

fn role_name(r: Role) -> String {
    serde_json::to_value(r).unwrap().as_str().unwrap().to_string()
}

/// Every bundled template of `d` rendered for its first bundled scenario,
/// as plain text.
pub fn render_golden(d: Dataset) -> String {
    let prompts = PromptSet::bundled(d);
    let scenarios = load_scenarios(
        &crate_dir()
            .join("data/scenarios")
            .join(format!("{}.json", d.file_stem())),
    )
    .unwrap();
    let scenario = &scenarios[0];
    let (system, user) = prompts.render_opening(scenario).unwrap();
    let state = DialogueState::open(scenario.id.clone(), system, user);
    let space = ActionSpace::canonical(d);
    let act = space.act_at(0);
    let mut out = String::new();
    let mut section = |title: &str, messages: Vec<nrpa_dialogue::llm::ChatMessage>| {
        out.push_str(&format!("#### {title}\n"));
        for m in messages {
            out.push_str(&format!("--- {}\n{}\n", role_name(m.role), m.content));
        }
    };
    let t = |r| prompts.template(r).unwrap();
    section(
        &format!("assistant_sim act={}", act.id),
        render(t(TemplateRole::AssistantSim), scenario, Some(act), &state).unwrap(),
    );
    section("user_sim", render(t(TemplateRole::UserSim), scenario, None, &state).unwrap());
    section("critic", render(t(TemplateRole::Critic), scenario, None, &state).unwrap());
    section(
        "judge",
        render_judge(
            t(TemplateRole::Judge),
            "System: Hello.\nUser: Hi.",
            "Response one.",
            "Response two.",
        )
        .unwrap(),
    );
    out
}

pub const ORACLE_ACTS: [&str; 4] = ["a", "b", "c", "d"];

/// Outcome of the oracle decision process after the act prefix `seq`. Every
/// dialogue runs the full three turns; it ends solved when `c` was used at
/// turn 2 or 3 and rejected when `c` was never used.
fn oracle_signal(seq: &[&str]) -> &'static str {
    match seq {
        [_, "c", _] | [_, _, "c"] => "UserSolved",
        [_, _, _] if !seq.contains(&"c") => "DealRejected",
        _ => "UserOngoing",
    }
}

/// Four acts, horizon three, 64 complete sequences. Every prefix has its
/// own table key.
pub fn oracle_env() -> ScriptedScenario {
    oracle_env_with(oracle_signal)
}

pub fn oracle_env_with(signal_of: fn(&[&str]) -> &'static str) -> ScriptedScenario {
    let mut transitions = Vec::new();
    let mut frontier: Vec<Vec<&str>> = vec![vec![]];
    for _ in 0..3 {
        let mut next = Vec::new();
        for prefix in &frontier {
            for act in ORACLE_ACTS {
                let mut seq = prefix.clone();
                seq.push(act);
                let signal = signal_of(&seq);
                transitions.push(serde_json::json!({
                    "key": prefix.concat(),
                    "act": act,
                    "next": seq.concat(),
                    "reply": format!("after {}", seq.join(" ")),
                    "signal": signal,
                }));
                if signal == "UserOngoing" {
                    next.push(seq);
                }
            }
        }
        frontier = next;
    }
    let acts: Vec<_> = ORACLE_ACTS
        .iter()
        .map(|a| serde_json::json!({"id": a, "label": a.to_uppercase(), "prompt_text": a}))
        .collect();
    let json = serde_json::json!({
        "id": "oracle",
        "action_space": {"dataset": "CIMA", "acts": acts},
        "opening": {"system": "hi", "user": "hello"},
        "max_turns": 3,
        "transitions": transitions,
    });
    ScriptedScenario::from_json(&json.to_string(), None).unwrap()
}

pub struct OracleResult {
    pub best: f64,
    pub optimal: Vec<Vec<String>>,
    pub leaves: usize,
}

/// Exhaustive search over every act sequence of the horizon, stepping the
/// environment directly.
pub fn brute_force(env: &dyn Environment) -> OracleResult {
    fn walk(
        env: &dyn Environment,
        state: &DialogueState,
        seq: &mut Vec<String>,
        out: &mut OracleResult,
    ) {
        if !state.is_ongoing() || state.turn_count >= env.reward_spec().max_turns {
            let mut s = state.clone();
            if s.is_ongoing() {
                s.terminal = nrpa_dialogue::Terminal::TurnBudgetExhausted;
            }
            let score = env.reward_spec().evaluate(&s).unwrap();
            out.leaves += 1;
            if score > out.best + 1e-12 {
                out.best = score;
                out.optimal = vec![seq.clone()];
            } else if (score - out.best).abs() <= 1e-12 {
                out.optimal.push(seq.clone());
            }
            return;
        }
        for act in env.action_space().acts() {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let t = env.step(state, act, &mut rng).unwrap();
            seq.push(act.id.clone());
            walk(env, &t.state, seq, out);
            seq.pop();
        }
    }
    let mut out = OracleResult {
        best: f64::NEG_INFINITY,
        optimal: Vec::new(),
        leaves: 0,
    };
    walk(env, &env.initial_state(), &mut Vec::new(), &mut out);
    out
}

pub fn smoke_scenarios() -> Vec<PathBuf> {
    ["esconv_smoke", "cima_smoke", "craigslist_smoke", "p4g_smoke"]
        .iter()
        .map(|s| crate_dir().join("data/scripted").join(format!("{s}.json")))
        .collect()
}
