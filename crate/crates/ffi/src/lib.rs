//! C interface to the simulator: environment handles, trained-policy
//! inference and the physical models.
//!
//! Every fallible function returns a [`SkhStatus`]. On failure the message
//! is kept per thread and can be read with [`skh_last_error`]. Handles are
//! created by `*_new`/`*_load` and must be released with the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use skyharvest::channel::{expected_channel_gain, los_probability, ChannelParams};
use skyharvest::ddpg::{check_actor, head_to_action};
use skyharvest::env::{Action, Env, EnvConfig, OBS_DIM};
use skyharvest::geometry::Point;
use skyharvest::harness::RunConfig;
use skyharvest::nn::Mlp;
use skyharvest::power::{harvested_power, propulsion_power, EhParams, PropulsionParams};
use skyharvest::Error;

/// Length of an observation vector.
pub const SKH_OBS_DIM: usize = 6;
const _: () = assert!(SKH_OBS_DIM == OBS_DIM);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    EpisodeFinished = 5,
    Shape = 6,
    NonFinite = 7,
    Checkpoint = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SkhStatus {
    match e {
        Error::Config(_) => SkhStatus::Config,
        Error::InvalidArgument(_) => SkhStatus::InvalidArgument,
        Error::EpisodeFinished => SkhStatus::EpisodeFinished,
        Error::Shape(_) | Error::NoForwardCache => SkhStatus::Shape,
        Error::NonFinite { .. } => SkhStatus::NonFinite,
        Error::Checkpoint { .. } => SkhStatus::Checkpoint,
        Error::Io { .. } => SkhStatus::Io,
        Error::ReplayNotFull { .. } => SkhStatus::InvalidArgument,
    }
}

fn fail(status: SkhStatus, msg: &str) -> SkhStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SkhStatus, String)>) -> SkhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SkhStatus::Ok,
        Ok(Err((s, msg))) => fail(s, &msg),
        Err(_) => fail(SkhStatus::Panic, "internal panic"),
    }
}

fn lift(e: Error) -> (SkhStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SkhStatus, String) {
    (SkhStatus::NullPointer, format!("{what} is null"))
}

/// Message of the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn skh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque simulation environment.
pub struct SkhEnv {
    config: EnvConfig,
    env: Env,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SkhStep {
    pub observation: [f64; SKH_OBS_DIM],
    /// Data collection, energy harvest, energy consumption, auxiliary.
    pub reward: [f64; 4],
    pub done: bool,
    pub hovered: bool,
    /// Hover duration, s; 0 without a hover.
    pub hover_secs: f64,
    /// Uplink rate of the hover, bit/s; 0 without a hover.
    pub rate_bps: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SkhMetrics {
    /// Sum of hover uplink rates, bit/s.
    pub rate_sum_bps: f64,
    pub harvested_j: f64,
    pub consumed_j: f64,
    pub clock_secs: f64,
    pub hovers: u64,
}

unsafe fn read_path<'a>(path: *const c_char) -> Result<Option<&'a Path>, (SkhStatus, String)> {
    if path.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (SkhStatus::InvalidArgument, "path is not valid UTF-8".to_owned()))?;
    Ok(Some(Path::new(s)))
}

unsafe fn write_obs(dst: *mut f64, obs: &[f64; OBS_DIM]) {
    if !dst.is_null() {
        std::ptr::copy_nonoverlapping(obs.as_ptr(), dst, OBS_DIM);
    }
}

/// Creates an environment from a configuration file, or with the default
/// full-scale settings when `config_path` is null, and resets it with `seed`.
/// `desk` selects the small desk-scale settings instead of the file.
///
/// # Safety
/// `config_path` must be null or a NUL-terminated string; `out` must be a
/// valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn skh_env_new(
    config_path: *const c_char,
    desk: bool,
    seed: u64,
    out: *mut *mut SkhEnv,
) -> SkhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let config = match (read_path(config_path)?, desk) {
            (Some(_), true) => {
                return Err((SkhStatus::InvalidArgument, "give either a config path or desk, not both".into()))
            }
            (Some(p), false) => RunConfig::load(p).map_err(|e| lift(e.into()))?.env,
            (None, true) => EnvConfig::desk(),
            (None, false) => EnvConfig::default(),
        };
        let (env, _) = Env::reset(config.clone(), seed).map_err(lift)?;
        *out = Box::into_raw(Box::new(SkhEnv { config, env }));
        Ok(())
    })
}

/// Starts a new episode. Writes the first observation to `obs_out`
/// (`SKH_OBS_DIM` doubles) when it is not null.
///
/// # Safety
/// `env` must come from [`skh_env_new`]; `obs_out` must be null or hold
/// `SKH_OBS_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn skh_env_reset(env: *mut SkhEnv, seed: u64, obs_out: *mut f64) -> SkhStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| null("env"))?;
        let (fresh, obs) = Env::reset(h.config.clone(), seed).map_err(lift)?;
        h.env = fresh;
        write_obs(obs_out, &obs);
        Ok(())
    })
}

/// Applies the velocity command `(vx, vy)` in m/s for one step.
///
/// # Safety
/// `env` must come from [`skh_env_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn skh_env_step(env: *mut SkhEnv, vx: f64, vy: f64, out: *mut SkhStep) -> SkhStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if !(vx.is_finite() && vy.is_finite()) {
            return Err((SkhStatus::InvalidArgument, format!("velocity ({vx}, {vy}) is not finite")));
        }
        let step = h.env.step(Action { vx, vy }).map_err(lift)?;
        *out = SkhStep {
            observation: step.observation,
            reward: step.reward.to_array(),
            done: step.done,
            hovered: step.hover.is_some(),
            hover_secs: step.hover.map_or(0.0, |x| x.secs),
            rate_bps: step.hover.map_or(0.0, |x| x.rate),
        };
        Ok(())
    })
}

/// Current observation.
///
/// # Safety
/// `env` must come from [`skh_env_new`]; `obs_out` must hold `SKH_OBS_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn skh_env_observe(env: *const SkhEnv, obs_out: *mut f64) -> SkhStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        if obs_out.is_null() {
            return Err(null("obs_out"));
        }
        write_obs(obs_out, &h.env.observe());
        Ok(())
    })
}

/// Running totals of the current episode.
///
/// # Safety
/// `env` must come from [`skh_env_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn skh_env_metrics(env: *const SkhEnv, out: *mut SkhMetrics) -> SkhStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = h.env.metrics();
        *out = SkhMetrics {
            rate_sum_bps: m.r_sum,
            harvested_j: m.e_harvest,
            consumed_j: m.e_consume,
            clock_secs: h.env.state().clock,
            hovers: m.hovers as u64,
        };
        Ok(())
    })
}

/// Maximum speed of the environment's UAV, m/s; NaN for a null handle.
///
/// # Safety
/// `env` must be null or come from [`skh_env_new`].
#[no_mangle]
pub unsafe extern "C" fn skh_env_max_speed(env: *const SkhEnv) -> f64 {
    env.as_ref().map_or(f64::NAN, |h| h.config.v_max)
}

/// # Safety
/// `env` must be null or come from [`skh_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skh_env_free(env: *mut SkhEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Opaque trained actor network.
pub struct SkhPolicy {
    actor: Mlp,
}

/// Loads an actor checkpoint written by the trainer.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn skh_policy_load(path: *const c_char, out: *mut *mut SkhPolicy) -> SkhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = read_path(path)?.ok_or_else(|| null("path"))?;
        let actor = Mlp::load(path).map_err(lift)?;
        check_actor(&actor).map_err(lift)?;
        *out = Box::into_raw(Box::new(SkhPolicy { actor }));
        Ok(())
    })
}

/// Deterministic action for `obs` (`SKH_OBS_DIM` doubles), written to
/// `action_out` as `(vx, vy)` in m/s.
///
/// # Safety
/// `policy` must come from [`skh_policy_load`]; `obs` must hold
/// `SKH_OBS_DIM` doubles and `action_out` two.
#[no_mangle]
pub unsafe extern "C" fn skh_policy_act(
    policy: *const SkhPolicy,
    obs: *const f64,
    v_max: f64,
    action_out: *mut f64,
) -> SkhStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        if action_out.is_null() {
            return Err(null("action_out"));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err((SkhStatus::InvalidArgument, format!("v_max {v_max} must be positive")));
        }
        let x = std::slice::from_raw_parts(obs, OBS_DIM);
        if x.iter().any(|v| !v.is_finite()) {
            return Err((SkhStatus::NonFinite, "observation contains a non-finite value".into()));
        }
        let y = p.actor.predict(x).map_err(lift)?;
        let a = head_to_action([y[0], y[1]], v_max);
        *action_out = a.vx;
        *action_out.add(1) = a.vy;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or come from [`skh_policy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skh_policy_free(policy: *mut SkhPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Rotary-wing propulsion power (W) at speed `v` (m/s) with the default airframe.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn skh_propulsion_power(v: f64, out: *mut f64) -> SkhStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = propulsion_power(v, &PropulsionParams::default()).map_err(lift)?;
        Ok(())
    })
}

/// Harvested DC power (W) for received RF power `p_r` (W), default harvester.
#[no_mangle]
pub extern "C" fn skh_harvested_power(p_r: f64) -> f64 {
    harvested_power(p_r, &EhParams::default())
}

/// Line-of-sight probability at elevation `theta_deg`, default environment constants.
#[no_mangle]
pub extern "C" fn skh_los_probability(theta_deg: f64) -> f64 {
    los_probability(theta_deg, &ChannelParams::default())
}

/// Expected channel power gain between a UAV at `(uav_x, uav_y)` and a
/// ground device at `(dev_x, dev_y)`, default channel.
#[no_mangle]
pub extern "C" fn skh_expected_channel_gain(uav_x: f64, uav_y: f64, dev_x: f64, dev_y: f64) -> f64 {
    expected_channel_gain(Point::new(uav_x, uav_y), Point::new(dev_x, dev_y), &ChannelParams::default())
}
