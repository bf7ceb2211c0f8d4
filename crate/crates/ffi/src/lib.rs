//! C ABI over the qentropy toolkit.
//!
//! Distributions, joint tables and chains are opaque handles created by a
//! `*_new` or `*_from_json` call and released with the matching `*_free`.
//! Every fallible call returns a [`QeStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`qe_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use qentropy::error::QitError;
use qentropy::laws::{fuzz, LawId, QSpan};
use qentropy::markov::{second_law_report, stationary_default, MarkovChain};
use qentropy::maxent::{solve, MaxEntProblem};
use qentropy::measures::{
    conditional_mutual_q_information, mutual_q_information, q_entropy, relative_q_entropy, tsallis_entropy,
};
use qentropy::prob::{JointTable, ProbVec};
use qentropy::qlog::{exp_q, ln_q, QParam};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    QOutOfRange = 4,
    Convergence = 5,
    Size = 6,
    Parse = 7,
    Sampling = 8,
    ImpossibleTrajectory = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

pub struct QeProbVec(ProbVec);
pub struct QeJointTable(JointTable);
pub struct QeChain(MarkovChain);

/// Aggregate of one fuzz campaign.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QeSlackSummary {
    pub trials: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
}

/// One transition of the second-law table.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QeSecondLawRow {
    pub step: usize,
    pub h_q: f64,
    pub delta_h: f64,
    pub t_q: f64,
    pub lhs: f64,
    pub slack: f64,
}

/// Multipliers and iteration count of a MaxEnt solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QeMaxEntResult {
    pub lambda: f64,
    pub mu: f64,
    pub iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QeStatus, msg: impl Into<String>) -> QeStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &QitError) -> QeStatus {
    match e {
        QitError::Domain { .. } | QitError::ExpDomain { .. } => QeStatus::Domain,
        QitError::QOutOfRange { .. } => QeStatus::QOutOfRange,
        QitError::Argument(_) => QeStatus::InvalidArgument,
        QitError::Convergence { .. } => QeStatus::Convergence,
        QitError::Size(_) => QeStatus::Size,
        QitError::ImpossibleTrajectory { .. } => QeStatus::ImpossibleTrajectory,
        QitError::Sampling(_) => QeStatus::Sampling,
        QitError::Parse(_) => QeStatus::Parse,
    }
}

type Outcome = Result<(), QeStatus>;

impl From<QitError> for QeStatus {
    fn from(e: QitError) -> Self {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Outcome) -> QeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(QeStatus::Panic, "internal panic"),
    }
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), QeStatus> {
    if p.is_null() {
        Err(fail(QeStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], QeStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, QeStatus> {
    nonnull(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(QeStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Outcome {
    nonnull(out as *const T, what)?;
    *out = v;
    Ok(())
}

fn qparam(q: f64) -> Result<QParam, QeStatus> {
    Ok(QParam::new(q)?)
}

/// Message of the last failed call on this thread, or null when none
/// failed. The pointer stays valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn qe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Forgets the last error message of this thread.
#[no_mangle]
pub extern "C" fn qe_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn qe_ln_q(x: f64, q: f64, out: *mut f64) -> QeStatus {
    guard(|| write_out(out, ln_q(x, qparam(q)?)?, "out"))
}

/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn qe_exp_q(x: f64, q: f64, out: *mut f64) -> QeStatus {
    guard(|| write_out(out, exp_q(x, qparam(q)?)?, "out"))
}

/// Copies `n` probabilities into a new distribution handle.
///
/// # Safety
/// `p` must point to `n` readable doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qe_prob_vec_new(p: *const f64, n: usize, out: *mut *mut QeProbVec) -> QeStatus {
    guard(|| {
        let v = ProbVec::new(read_slice(p, n, "p")?.to_vec())?;
        write_out(out, Box::into_raw(Box::new(QeProbVec(v))), "out")
    })
}

/// Parses `{"p":[...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qe_prob_vec_from_json(json: *const c_char, out: *mut *mut QeProbVec) -> QeStatus {
    guard(|| {
        let v = ProbVec::from_json_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(QeProbVec(v))), "out")
    })
}

/// Number of outcomes, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qe_prob_vec_len(p: *const QeProbVec) -> usize {
    p.as_ref().map_or(0, |h| h.0.len())
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qe_prob_vec_free(p: *mut QeProbVec) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Row-major table with the given shape.
///
/// # Safety
/// `shape` must point to `rank` sizes, `data` to their product of doubles.
#[no_mangle]
pub unsafe extern "C" fn qe_joint_table_new(
    shape: *const usize,
    rank: usize,
    data: *const f64,
    out: *mut *mut QeJointTable,
) -> QeStatus {
    guard(|| {
        if rank == 0 {
            return Err(fail(QeStatus::InvalidArgument, "rank must be >= 1"));
        }
        nonnull(shape, "shape")?;
        let shape = slice::from_raw_parts(shape, rank).to_vec();
        let cells = shape
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .ok_or_else(|| fail(QeStatus::Size, "table size overflows"))?;
        let data = read_slice(data, cells, "data")?.to_vec();
        let t = JointTable::new(shape, data)?;
        write_out(out, Box::into_raw(Box::new(QeJointTable(t))), "out")
    })
}

/// Parses `{"table":[[...]]}` of any nesting depth.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qe_joint_table_from_json(json: *const c_char, out: *mut *mut QeJointTable) -> QeStatus {
    guard(|| {
        let t = JointTable::from_json_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(QeJointTable(t))), "out")
    })
}

/// Rank of the table, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qe_joint_table_rank(t: *const QeJointTable) -> usize {
    t.as_ref().map_or(0, |h| h.0.rank())
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qe_joint_table_free(t: *mut QeJointTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Chain from an `m × m` row-major transition matrix and an initial distribution.
///
/// # Safety
/// `transition` must point to `m*m` doubles, `initial` to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn qe_chain_new(
    transition: *const f64,
    m: usize,
    initial: *const f64,
    out: *mut *mut QeChain,
) -> QeStatus {
    guard(|| {
        let cells = m
            .checked_mul(m)
            .ok_or_else(|| fail(QeStatus::Size, "state count overflows"))?;
        let rows = read_slice(transition, cells, "transition")?
            .chunks(m.max(1))
            .map(<[f64]>::to_vec)
            .collect();
        let init = ProbVec::new(read_slice(initial, m, "initial")?.to_vec())?;
        let c = MarkovChain::new(rows, init)?;
        write_out(out, Box::into_raw(Box::new(QeChain(c))), "out")
    })
}

/// Parses `{"transition":[[...]],"initial":[...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qe_chain_from_json(json: *const c_char, out: *mut *mut QeChain) -> QeStatus {
    guard(|| {
        let c = MarkovChain::from_json_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(QeChain(c))), "out")
    })
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qe_chain_states(c: *const QeChain) -> usize {
    c.as_ref().map_or(0, |h| h.0.states())
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qe_chain_free(c: *mut QeChain) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, QeStatus> {
    nonnull(h, what)?;
    Ok(&*h)
}

/// `−Σ p ln_q p`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_q_entropy(p: *const QeProbVec, q: f64, out: *mut f64) -> QeStatus {
    guard(|| write_out(out, q_entropy(&handle(p, "p")?.0, qparam(q)?).value, "out"))
}

/// `(1 − Σ p^q) / (q − 1)`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_tsallis_entropy(p: *const QeProbVec, q: f64, out: *mut f64) -> QeStatus {
    guard(|| write_out(out, tsallis_entropy(&handle(p, "p")?.0, qparam(q)?).value, "out"))
}

/// `Σ p ln_q(p / r)`; `+inf` when `p` is not absolutely continuous w.r.t. `r` and `q <= 1`.
///
/// # Safety
/// `p`, `r` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_relative_q_entropy(
    p: *const QeProbVec,
    r: *const QeProbVec,
    q: f64,
    out: *mut f64,
) -> QeStatus {
    guard(|| {
        let v = relative_q_entropy(&handle(p, "p")?.0, &handle(r, "r")?.0, qparam(q)?)?;
        write_out(out, v.value, "out")
    })
}

/// `I_q(X;Y)` of a rank-2 table.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_mutual_q_information(t: *const QeJointTable, q: f64, out: *mut f64) -> QeStatus {
    guard(|| write_out(out, mutual_q_information(&handle(t, "table")?.0, qparam(q)?)?.value, "out"))
}

/// `I_q(X;Y|Z)` of a rank-3 table with axes `(X, Y, Z)`.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_conditional_mutual_q_information(
    t: *const QeJointTable,
    q: f64,
    out: *mut f64,
) -> QeStatus {
    guard(|| {
        let v = conditional_mutual_q_information(&handle(t, "table")?.0, qparam(q)?)?;
        write_out(out, v.value, "out")
    })
}

/// Maximum q-entropy distribution on `levels` with the given mean. Writes
/// `n` probabilities to `p_out`.
///
/// # Safety
/// `levels` and `p_out` must each hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qe_maxent_solve(
    levels: *const f64,
    n: usize,
    mean: f64,
    q: f64,
    tol: f64,
    max_iters: usize,
    p_out: *mut f64,
    out: *mut QeMaxEntResult,
) -> QeStatus {
    guard(|| {
        let levels = read_slice(levels, n, "levels")?.to_vec();
        nonnull(p_out as *const f64, "p_out")?;
        nonnull(out as *const QeMaxEntResult, "out")?;
        let problem = MaxEntProblem::new(levels, mean, qparam(q)?)?;
        let sol = solve(&problem, tol, max_iters)?;
        slice::from_raw_parts_mut(p_out, n).copy_from_slice(sol.p.as_slice());
        write_out(
            out,
            QeMaxEntResult {
                lambda: sol.lambda,
                mu: sol.mu,
                iterations: sol.iterations,
            },
            "out",
        )
    })
}

/// Randomized slack campaign for the named law with `q` uniform on `[q_lo, q_hi]`.
///
/// # Safety
/// `law` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qe_fuzz(
    law: *const c_char,
    trials: usize,
    q_lo: f64,
    q_hi: f64,
    seed: u64,
    workers: usize,
    out: *mut QeSlackSummary,
) -> QeStatus {
    guard(|| {
        let law: LawId = read_str(law, "law")?.parse()?;
        if q_lo.is_nan() || q_hi.is_nan() || q_lo > q_hi {
            return Err(fail(QeStatus::InvalidArgument, format!("empty q-range {q_lo}:{q_hi}")));
        }
        let r = fuzz(law, trials, QSpan { lo: q_lo, hi: q_hi }, seed, workers.max(1))?;
        write_out(
            out,
            QeSlackSummary {
                trials: r.trials,
                violations: r.violations,
                min_slack: r.min_slack,
                mean_slack: r.mean_slack,
            },
            "out",
        )
    })
}

/// Stationary distribution; writes `len` doubles, which must equal the state count.
///
/// # Safety
/// `c` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qe_stationary(c: *const QeChain, out: *mut f64, len: usize) -> QeStatus {
    guard(|| {
        let c = &handle(c, "chain")?.0;
        if len < c.states() {
            return Err(fail(QeStatus::BufferTooSmall, format!("need {} doubles, got {len}", c.states())));
        }
        nonnull(out as *const f64, "out")?;
        let pi = stationary_default(c)?;
        slice::from_raw_parts_mut(out, len)[..c.states()].copy_from_slice(pi.as_slice());
        Ok(())
    })
}

/// Second-law table of `steps` transitions from the chain's initial
/// distribution. `applicable` is set when the chain is doubly stochastic.
///
/// # Safety
/// `c` must be a live handle, `rows` must hold `capacity` rows, and
/// `applicable` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qe_second_law(
    c: *const QeChain,
    q: f64,
    steps: usize,
    rows: *mut QeSecondLawRow,
    capacity: usize,
    applicable: *mut bool,
) -> QeStatus {
    guard(|| {
        let c = &handle(c, "chain")?.0;
        if capacity < steps {
            return Err(fail(QeStatus::BufferTooSmall, format!("need {steps} rows, got {capacity}")));
        }
        nonnull(applicable as *const bool, "applicable")?;
        if steps > 0 {
            nonnull(rows as *const QeSecondLawRow, "rows")?;
        }
        let report = second_law_report(c, qparam(q)?, steps)?;
        for (i, r) in report.rows.iter().enumerate() {
            *rows.add(i) = QeSecondLawRow {
                step: r.step,
                h_q: r.h_q,
                delta_h: r.delta_h,
                t_q: r.t_q,
                lhs: r.lhs,
                slack: r.slack,
            };
        }
        *applicable = report.applicable;
        Ok(())
    })
}
