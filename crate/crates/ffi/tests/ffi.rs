use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use nrpa_dialogue_ffi::*;

fn smoke_path() -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/scripted/esconv_smoke.json");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> Option<String> {
    let p = nrpa_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    nrpa_string_free(s);
    out
}

fn load_env() -> *mut NrpaEnv {
    let mut env = ptr::null_mut();
    let path = smoke_path();
    assert_eq!(unsafe { nrpa_env_load_scripted(path.as_ptr(), &mut env) }, NrpaStatus::Ok);
    env
}

#[test]
fn softmax_through_the_abi() {
    let w = [0.0, 1.0, 2.0];
    let mut p = [0.0; 3];
    assert_eq!(unsafe { nrpa_softmax(w.as_ptr(), 3, p.as_mut_ptr()) }, NrpaStatus::Ok);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((p[2] - 0.665_240_955_774_821_6).abs() < 1e-12);
    assert!(last_error().is_none());
}

#[test]
fn null_and_bad_arguments_set_last_error() {
    let mut p = [0.0; 2];
    assert_eq!(unsafe { nrpa_softmax(ptr::null(), 2, p.as_mut_ptr()) }, NrpaStatus::NullPointer);
    assert!(last_error().unwrap().contains("weights"));

    let w = [f64::NAN, 0.0];
    assert_eq!(unsafe { nrpa_softmax(w.as_ptr(), 2, p.as_mut_ptr()) }, NrpaStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("not finite"));

    let bad = [0xffu8, 0xfe, 0];
    let mut env = ptr::null_mut();
    assert_eq!(
        unsafe { nrpa_env_load_scripted(bad.as_ptr().cast(), &mut env) },
        NrpaStatus::InvalidUtf8
    );
    assert!(env.is_null());

    let missing = CString::new("/no/such/scenario.json").unwrap();
    assert_eq!(unsafe { nrpa_env_load_scripted(missing.as_ptr(), &mut env) }, NrpaStatus::Io);

    let mut sl = 0.0;
    assert_eq!(unsafe { nrpa_compute_sl(1.0, true, 5.0, 5.0, &mut sl) }, NrpaStatus::InvalidArgument);
}

#[test]
fn last_error_is_per_thread() {
    let mut p = [0.0; 1];
    unsafe { nrpa_softmax(ptr::null(), 1, p.as_mut_ptr()) };
    assert!(last_error().is_some());
    std::thread::spawn(|| assert!(last_error().is_none())).join().unwrap();
    // A successful call clears it.
    let w = [1.0];
    unsafe { nrpa_softmax(w.as_ptr(), 1, p.as_mut_ptr()) };
    assert!(last_error().is_none());
}

#[test]
fn sale_to_list() {
    let mut sl = f64::NAN;
    unsafe {
        assert_eq!(nrpa_compute_sl(240.0, true, 350.0, 240.0, &mut sl), NrpaStatus::Ok);
        assert!((sl - 1.0).abs() < 1e-12);
        assert_eq!(nrpa_compute_sl(0.0, false, 350.0, 240.0, &mut sl), NrpaStatus::Ok);
        assert_eq!(sl, 0.0);
    }
}

#[test]
fn adapt_moves_weight_to_the_chosen_act() {
    let env = load_env();
    unsafe {
        let n = nrpa_env_action_count(env);
        assert!(n > 1);
        let mut first = ptr::null_mut();
        assert_eq!(nrpa_env_action_id(env, 0, &mut first), NrpaStatus::Ok);
        let first = take(first);

        let zeros = vec![0.0; n];
        let mut policy = ptr::null_mut();
        assert_eq!(nrpa_policy_new(zeros.as_ptr(), n, &mut policy), NrpaStatus::Ok);
        let act = CString::new(first).unwrap();
        let seq = [act.as_ptr()];
        assert_eq!(nrpa_adapt(policy, env, seq.as_ptr(), 1, 1.0), NrpaStatus::Ok);
        let mut w = vec![0.0; n];
        assert_eq!(nrpa_policy_weights(policy, w.as_mut_ptr(), n), NrpaStatus::Ok);
        let u = 1.0 / n as f64;
        assert!((w[0] - (1.0 - u)).abs() < 1e-12);
        for x in &w[1..] {
            assert!((x + u).abs() < 1e-12);
        }
        assert!(w.iter().sum::<f64>().abs() < 1e-12);

        let bogus = CString::new("no_such_act").unwrap();
        let seq = [bogus.as_ptr()];
        assert_eq!(nrpa_adapt(policy, env, seq.as_ptr(), 1, 1.0), NrpaStatus::InvalidArgument);
        let mut short = [0.0; 1];
        assert_eq!(
            nrpa_policy_weights(policy, short.as_mut_ptr(), 1),
            NrpaStatus::InvalidArgument
        );
        nrpa_policy_free(policy);
        nrpa_env_free(env);
    }
}

#[test]
fn planning_is_seeded_and_steps_advance() {
    let env = load_env();
    unsafe {
        let mut state = ptr::null_mut();
        assert_eq!(nrpa_state_initial(env, &mut state), NrpaStatus::Ok);
        assert!(nrpa_state_is_ongoing(state));
        let plan = |seed| {
            let mut act = ptr::null_mut();
            let mut stats = ptr::null_mut();
            assert_eq!(
                nrpa_plan_next_act(env, state, ptr::null(), seed, &mut act, &mut stats),
                NrpaStatus::Ok
            );
            (take(act), take(stats))
        };
        let (a1, s1) = plan(11);
        let (a2, s2) = plan(11);
        assert_eq!((&a1, &s1), (&a2, &s2));
        let stats: serde_json::Value = serde_json::from_str(&s1).unwrap();
        assert!(stats["playouts_executed"].as_u64().unwrap() >= 1, "{s1}");

        let act = CString::new(a1).unwrap();
        assert_eq!(nrpa_state_step(env, state, act.as_ptr(), 0), NrpaStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(nrpa_state_to_json(state, &mut json), NrpaStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["turn_count"], 1);

        let bad = CString::new("{\"level\": 0}").unwrap();
        let mut act = ptr::null_mut();
        assert_eq!(
            nrpa_plan_next_act(env, state, bad.as_ptr(), 0, &mut act, ptr::null_mut()),
            NrpaStatus::InvalidArgument
        );
        assert!(act.is_null());
        nrpa_state_free(state);
        nrpa_env_free(env);
    }
}

#[test]
fn episode_record_round_trips() {
    let env = load_env();
    unsafe {
        let params = CString::new(r#"{"level":1,"iterations":5,"rng_seed":3}"#).unwrap();
        let run = || {
            let mut out = ptr::null_mut();
            assert_eq!(nrpa_run_episode(env, params.as_ptr(), 9, &mut out), NrpaStatus::Ok);
            take(out)
        };
        let a = run();
        assert_eq!(a, run());
        let rec: nrpa_dialogue::eval::EpisodeRecord = serde_json::from_str(&a).unwrap();
        rec.check().unwrap();
        assert_eq!(rec.scenario_id, "esconv-smoke");
        nrpa_env_free(env);
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        nrpa_policy_free(ptr::null_mut());
        nrpa_env_free(ptr::null_mut());
        nrpa_state_free(ptr::null_mut());
        nrpa_string_free(ptr::null_mut());
        assert_eq!(nrpa_policy_len(ptr::null()), 0);
        assert!(!nrpa_state_is_ongoing(ptr::null()));
    }
    let v = unsafe { CStr::from_ptr(nrpa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
