//! C ABI for the planner.
//!
//! Every fallible function returns an [`NrpaStatus`]. On failure a message is
//! stored per thread and can be read with [`nrpa_last_error`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `_free` function. Strings returned through out-parameters are owned by
//! the caller and released with [`nrpa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nrpa_dialogue::eval::{compute_sl, run_episode};
use nrpa_dialogue::policy::{softmax, Policy};
use nrpa_dialogue::{
    adapt, plan_next_act, AdaptMode, DialogueState, Environment, NrpaParams, ScriptedScenario,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Search = 5,
    Environment = 6,
    Panic = 7,
}

/// Rollout policy: one weight per act.
pub struct NrpaPolicy {
    inner: Policy,
}

/// A loaded scripted scenario.
pub struct NrpaEnv {
    inner: Box<dyn Environment>,
}

/// A dialogue in progress.
pub struct NrpaState {
    inner: DialogueState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NrpaStatus, String);

impl Failure {
    fn new(status: NrpaStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NrpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NrpaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            NrpaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(NrpaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(NrpaStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s)
        .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, format!("interior NUL: {e}")))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn params_arg(p: *const c_char) -> Result<NrpaParams, Failure> {
    let params: NrpaParams = if p.is_null() {
        NrpaParams::default()
    } else {
        serde_json::from_str(str_arg(p, "params_json")?)
            .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, format!("params: {e}")))?
    };
    params
        .validate()
        .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
    Ok(params)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nrpa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nrpa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn nrpa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the softmax of `len` weights into `out`, which must hold `len`
/// doubles.
///
/// # Safety
/// `weights` and `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nrpa_softmax(weights: *const f64, len: usize, out: *mut f64) -> NrpaStatus {
    guard(|| {
        let w = slice_arg(weights, len, "weights")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = softmax(w).map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&p);
        Ok(())
    })
}

/// Sale-to-list ratio. Pass `has_deal = false` when no deal was reached.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn nrpa_compute_sl(
    deal_price: f64,
    has_deal: bool,
    seller_target: f64,
    buyer_target: f64,
    out: *mut f64,
) -> NrpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let deal = has_deal.then_some(deal_price);
        *out = compute_sl(deal, seller_target, buyer_target)
            .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Creates a policy from `len` finite weights.
///
/// # Safety
/// `weights` must be valid for `len` doubles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_policy_new(
    weights: *const f64,
    len: usize,
    out: *mut *mut NrpaPolicy,
) -> NrpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w = slice_arg(weights, len, "weights")?;
        let inner =
            Policy::new(w.to_vec()).map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(NrpaPolicy { inner }));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from [`nrpa_policy_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_policy_free(policy: *mut NrpaPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Number of weights, or 0 for NULL.
///
/// # Safety
/// `policy` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_policy_len(policy: *const NrpaPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.inner.len())
}

/// Copies the weights into `out`, which must hold `len` doubles where `len`
/// equals [`nrpa_policy_len`].
///
/// # Safety
/// `policy` must be live and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nrpa_policy_weights(
    policy: *const NrpaPolicy,
    out: *mut f64,
    len: usize,
) -> NrpaStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != p.inner.len() {
            return Err(Failure::new(
                NrpaStatus::InvalidArgument,
                format!("buffer holds {len} weights, policy has {}", p.inner.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(p.inner.weights());
        Ok(())
    })
}

/// Adapts `policy` in place towards the act sequence `acts` (ids from the
/// action space of `env`), using probabilities frozen before the update.
///
/// # Safety
/// Handles must be live; `acts` must hold `n_acts` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nrpa_adapt(
    policy: *mut NrpaPolicy,
    env: *const NrpaEnv,
    acts: *const *const c_char,
    n_acts: usize,
    alpha: f64,
) -> NrpaStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| null("policy"))?;
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if n_acts > 0 && acts.is_null() {
            return Err(null("acts"));
        }
        let mut seq = Vec::with_capacity(n_acts);
        for i in 0..n_acts {
            seq.push(str_arg(*acts.add(i), "acts[i]")?.to_string());
        }
        p.inner = adapt(
            &p.inner,
            &seq,
            alpha,
            e.inner.action_space(),
            AdaptMode::FrozenReference,
        )
        .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
        Ok(())
    })
}

fn env_handle(out: *mut *mut NrpaEnv, scenario: ScriptedScenario) {
    let handle = NrpaEnv {
        inner: Box::new(scenario),
    };
    // SAFETY: callers check `out` before building the scenario.
    unsafe { *out = Box::into_raw(Box::new(handle)) };
}

/// Loads a scripted scenario file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_env_load_scripted(
    path: *const c_char,
    out: *mut *mut NrpaEnv,
) -> NrpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let s = ScriptedScenario::load(Path::new(path)).map_err(|e| Failure::new(NrpaStatus::Io, e))?;
        env_handle(out, s);
        Ok(())
    })
}

/// Builds a scripted scenario from JSON text.
///
/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_env_from_json(json: *const c_char, out: *mut *mut NrpaEnv) -> NrpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = str_arg(json, "json")?;
        let s = ScriptedScenario::from_json(json, None)
            .map_err(|e| Failure::new(NrpaStatus::InvalidArgument, e))?;
        env_handle(out, s);
        Ok(())
    })
}

/// # Safety
/// `env` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_env_free(env: *mut NrpaEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Size of the action space, or 0 for NULL.
///
/// # Safety
/// `env` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_env_action_count(env: *const NrpaEnv) -> usize {
    env.as_ref().map_or(0, |e| e.inner.action_space().len())
}

/// Id of act `index` as a caller-owned string.
///
/// # Safety
/// `env` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_env_action_id(
    env: *const NrpaEnv,
    index: usize,
    out: *mut *mut c_char,
) -> NrpaStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let space = e.inner.action_space();
        if index >= space.len() {
            return Err(Failure::new(
                NrpaStatus::InvalidArgument,
                format!("act index {index} out of range (0..{})", space.len()),
            ));
        }
        out_string(out, space.act_at(index).id.clone())
    })
}

/// Opening state of a simulated episode.
///
/// # Safety
/// `env` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_state_initial(env: *const NrpaEnv, out: *mut *mut NrpaState) -> NrpaStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(NrpaState {
            inner: e.inner.initial_state(),
        }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_state_free(state: *mut NrpaState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// True while the dialogue has not reached a terminal class.
///
/// # Safety
/// `state` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nrpa_state_is_ongoing(state: *const NrpaState) -> bool {
    state.as_ref().is_some_and(|s| s.inner.is_ongoing())
}

/// Serializes the state as JSON into a caller-owned string.
///
/// # Safety
/// `state` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_state_to_json(state: *const NrpaState, out: *mut *mut c_char) -> NrpaStatus {
    guard(|| {
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(out, to_json(&s.inner)?)
    })
}

/// Advances `state` by one system act and the simulated reply.
///
/// # Safety
/// Handles must be live and `act` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nrpa_state_step(
    env: *const NrpaEnv,
    state: *mut NrpaState,
    act: *const c_char,
    seed: u64,
) -> NrpaStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let s = state.as_mut().ok_or_else(|| null("state"))?;
        let id = str_arg(act, "act")?;
        let act = e
            .inner
            .action_space()
            .get(id)
            .ok_or_else(|| Failure::new(NrpaStatus::InvalidArgument, format!("unknown act `{id}`")))?
            .clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = e
            .inner
            .step(&s.inner, &act, &mut rng)
            .map_err(|err| Failure::new(NrpaStatus::Environment, err))?;
        s.inner = t.state;
        Ok(())
    })
}

/// Plans the next act from `state`. `params_json` may be NULL for defaults.
/// The act id goes to `out_act`; search statistics go to `out_stats_json`
/// unless it is NULL.
///
/// # Safety
/// Handles must be live, strings NUL-terminated, `out_act` writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_plan_next_act(
    env: *const NrpaEnv,
    state: *const NrpaState,
    params_json: *const c_char,
    seed: u64,
    out_act: *mut *mut c_char,
    out_stats_json: *mut *mut c_char,
) -> NrpaStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        if out_act.is_null() {
            return Err(null("out_act"));
        }
        let params = params_arg(params_json)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = plan_next_act(&s.inner, e.inner.as_ref(), &params, &mut rng)
            .map_err(|err| Failure::new(NrpaStatus::Search, err))?;
        let stats = if out_stats_json.is_null() {
            None
        } else {
            Some(to_json(&plan.stats)?)
        };
        out_string(out_act, plan.act.id)?;
        if let Some(stats) = stats {
            if let Err(f) = out_string(out_stats_json, stats) {
                nrpa_string_free(*out_act);
                *out_act = ptr::null_mut();
                return Err(f);
            }
        }
        Ok(())
    })
}

/// Plays a full episode and writes its record as JSON. An episode that the
/// environment aborted still succeeds; its record carries the reason.
///
/// # Safety
/// `env` must be live, `params_json` NUL-terminated or NULL, `out_json`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nrpa_run_episode(
    env: *const NrpaEnv,
    params_json: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> NrpaStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let params = params_arg(params_json)?;
        let mut record = run_episode(e.inner.as_ref(), &params, seed);
        record.wall_clock_ms = None;
        out_string(out_json, to_json(&record)?)
    })
}
