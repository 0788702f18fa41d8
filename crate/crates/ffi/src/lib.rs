//! C ABI for loading pre-trained NAF models, stepping the pendulum plant and
//! running online ensemble weight updates.
//!
//! Conventions: every fallible function returns an `MqStatus`; on failure
//! the message is kept per thread and can be read with
//! `mq_last_error_message`. Handles are opaque and must be released with
//! their `*_free` function. Arrays are passed as pointer + length and the
//! lengths are checked against the handle's dimensions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use multiq::ensemble::{OnlineParams, QEnsemble};
use multiq::naf::{QFunction, QModel};
use multiq::plant::{self, PlantSpec, RewardSpec};
use multiq::replay::Experience;
use multiq::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotPositiveDefinite = 4,
    Diverged = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Opaque pre-trained Q-function.
pub struct MqModel {
    inner: QModel,
}

/// Opaque pendulum plant at a fixed parameter, with the benchmark reward.
pub struct MqPlant {
    spec: PlantSpec,
    reward: RewardSpec,
}

/// Opaque weighted ensemble of models.
pub struct MqEnsemble {
    inner: QEnsemble<QModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MqStatus {
    match e {
        Error::Dimension(_) => MqStatus::Dimension,
        Error::NotPositiveDefinite => MqStatus::NotPositiveDefinite,
        Error::Diverged(_) | Error::NonFinite(_) => MqStatus::Diverged,
        Error::Io { .. } => MqStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Version { .. } => MqStatus::Format,
        _ => MqStatus::InvalidArgument,
    }
}

struct Fail(MqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MqStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MqStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            MqStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len != want {
        return Err(Fail(MqStatus::Dimension, format!("{what}: length {len}, expected {want}")));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len != want {
        return Err(Fail(MqStatus::Dimension, format!("{what}: length {len}, expected {want}")));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MqStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mq_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a model file written by the `pretrain` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mq_model_load(path: *const c_char, out: *mut *mut MqModel) -> MqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = multiq::model_io::load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MqModel { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from `mq_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mq_model_free(m: *mut MqModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mq_model_state_dim(m: *const MqModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.state_dim())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mq_model_action_dim(m: *const MqModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.action_dim())
}

/// Evaluates the head at `x`: writes V(x), μ(x) (`action_len` entries) and
/// P(x) row-major (`p_len` = action_dim² entries).
///
/// # Safety
/// All pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mq_model_eval(
    m: *const MqModel,
    x: *const f64,
    x_len: usize,
    value: *mut f64,
    mu: *mut f64,
    action_len: usize,
    p: *mut f64,
    p_len: usize,
) -> MqStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let (n_x, n_a) = (m.inner.state_dim(), m.inner.action_dim());
        let x = input(x, x_len, n_x, "x")?;
        if value.is_null() {
            return Err(null("value"));
        }
        let mu_out = output(mu, action_len, n_a, "mu")?;
        let p_out = output(p, p_len, n_a * n_a, "p")?;
        let h = m.inner.head(x)?;
        *value = h.value;
        mu_out.copy_from_slice(&h.mu);
        p_out.copy_from_slice(h.p.as_slice());
        Ok(())
    })
}

/// Q(x, a) of a single model.
///
/// # Safety
/// All pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mq_model_q(
    m: *const MqModel,
    x: *const f64,
    x_len: usize,
    a: *const f64,
    a_len: usize,
    q: *mut f64,
) -> MqStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let x = input(x, x_len, m.inner.state_dim(), "x")?;
        let a = input(a, a_len, m.inner.action_dim(), "a")?;
        if q.is_null() {
            return Err(null("q"));
        }
        *q = m.inner.q(x, a)?;
        Ok(())
    })
}

/// Pendulum at parameter (xi1, xi2) with action box [-1, 1] and the
/// benchmark quadratic reward.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mq_plant_pendulum_new(xi1: f64, xi2: f64, out: *mut *mut MqPlant) -> MqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = PlantSpec::pendulum([xi1, xi2]);
        spec.validate()?;
        *out = Box::into_raw(Box::new(MqPlant {
            spec,
            reward: RewardSpec::benchmark(),
        }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live plant handle.
#[no_mangle]
pub unsafe extern "C" fn mq_plant_free(p: *mut MqPlant) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// One plant step. Actions outside the box are clipped first; the reward is
/// evaluated on the clipped action and written to `reward` if non-null.
///
/// # Safety
/// All pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mq_plant_step(
    p: *const MqPlant,
    x: *const f64,
    x_len: usize,
    a: *const f64,
    a_len: usize,
    x_next: *mut f64,
    x_next_len: usize,
    reward: *mut f64,
) -> MqStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("plant"))?;
        let x = input(x, x_len, p.spec.state_dim(), "x")?;
        let a = input(a, a_len, p.spec.action_dim(), "a")?;
        let out = output(x_next, x_next_len, p.spec.state_dim(), "x_next")?;
        let a = plant::clip_action(&p.spec.action_box, a);
        out.copy_from_slice(&plant::step(&p.spec, x, &a)?);
        if !reward.is_null() {
            *reward = plant::reward(&p.reward, x, &a);
        }
        Ok(())
    })
}

/// Builds an ensemble from model files with uniform weights and the default
/// online step sizes.
///
/// # Safety
/// `paths` must point to `n` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_load(
    paths: *const *const c_char,
    n: usize,
    out: *mut *mut MqEnsemble,
) -> MqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if paths.is_null() {
            return Err(null("paths"));
        }
        let members = slice::from_raw_parts(paths, n)
            .iter()
            .map(|&p| Ok(multiq::model_io::load_model(path_arg(p)?)?))
            .collect::<Result<Vec<_>, Fail>>()?;
        let e = QEnsemble::uniform(members, OnlineParams::default())?;
        *out = Box::into_raw(Box::new(MqEnsemble { inner: e }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_free(e: *mut MqEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_len(e: *const MqEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.inner.members().len())
}

/// Maximizer of the weighted ensemble Q at `x`.
///
/// # Safety
/// All pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_greedy(
    e: *const MqEnsemble,
    x: *const f64,
    x_len: usize,
    a: *mut f64,
    a_len: usize,
) -> MqStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("ensemble"))?;
        let x = input(x, x_len, e.inner.state_dim(), "x")?;
        let out = output(a, a_len, e.inner.action_dim(), "a")?;
        out.copy_from_slice(&e.inner.greedy_action(x)?);
        Ok(())
    })
}

/// One online weight update from the transition (x, a, r, x'). Writes the
/// TD error to `delta` if non-null; `skipped` (if non-null) is set to 1
/// when no positive step was found and the weights were left unchanged.
///
/// # Safety
/// All pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_update(
    e: *mut MqEnsemble,
    x: *const f64,
    x_len: usize,
    a: *const f64,
    a_len: usize,
    r: f64,
    x_next: *const f64,
    x_next_len: usize,
    delta: *mut f64,
    skipped: *mut i32,
) -> MqStatus {
    guard(|| {
        let e = e.as_mut().ok_or_else(|| null("ensemble"))?;
        let (n_x, n_a) = (e.inner.state_dim(), e.inner.action_dim());
        let x = input(x, x_len, n_x, "x")?;
        let a = input(a, a_len, n_a, "a")?;
        let xn = input(x_next, x_next_len, n_x, "x_next")?;
        let u = e.inner.update_weights(&Experience::new(x.to_vec(), a.to_vec(), xn.to_vec(), r))?;
        if !delta.is_null() {
            *delta = u.delta;
        }
        if !skipped.is_null() {
            *skipped = i32::from(u.halvings.is_none());
        }
        Ok(())
    })
}

/// Copies the current weights (`len` must equal the member count).
///
/// # Safety
/// `w` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mq_ensemble_weights(e: *const MqEnsemble, w: *mut f64, len: usize) -> MqStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("ensemble"))?;
        let out = output(w, len, e.inner.members().len(), "w")?;
        out.copy_from_slice(e.inner.weights().as_slice());
        Ok(())
    })
}
