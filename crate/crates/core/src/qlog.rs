//! q-deformed logarithm and exponential.
//!
//! `ln_q(x) = (x^(1-q) - 1) / (1 - q)` and its inverse
//! `exp_q(x) = [1 + (1-q) x]^(1/(1-q))`. Both switch to the natural
//! log/exp when `|q - 1| <= 1e-12`. The deformed branch is evaluated as
//! `expm1((1-q) ln x) / (1-q)` so it stays accurate as `q` approaches 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};

/// Width of the band around `q = 1` that uses the natural log/exp.
pub const SHANNON_BAND: f64 = 1e-12;

/// The entropic index.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QParam(f64);

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(QitError::arg(format!("q must be finite, got {q}")));
        }
        Ok(QParam(q))
    }

    /// Shannon value `q = 1`.
    pub const ONE: QParam = QParam(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - q`.
    #[inline]
    pub fn one_minus(self) -> f64 {
        1.0 - self.0
    }

    #[inline]
    pub fn is_shannon(self) -> bool {
        (self.0 - 1.0).abs() <= SHANNON_BAND
    }

    /// Rejects `q` outside `range`, naming `what` in the error.
    pub fn require(self, range: QRange, what: &str) -> Result<Self> {
        if range.contains(self.0) {
            Ok(self)
        } else {
            Err(QitError::QOutOfRange {
                q: self.0,
                range,
                what: what.to_string(),
            })
        }
    }
}

impl fmt::Display for QParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<f64> for QParam {
    type Error = QitError;
    fn try_from(q: f64) -> Result<Self> {
        QParam::new(q)
    }
}

/// An interval of admissible `q` values. The lower end is always closed,
/// the upper end may be open (`[0, 1)`). Infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QRange {
    pub lo: f64,
    pub hi: f64,
    pub hi_open: bool,
}

impl QRange {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        QRange { lo, hi, hi_open: false }
    }

    pub const fn half_open(lo: f64, hi: f64) -> Self {
        QRange { lo, hi, hi_open: true }
    }

    /// `[0, 1)`
    pub const UNIT: QRange = QRange::half_open(0.0, 1.0);
    /// `(-inf, 2]`
    pub const UP_TO_TWO: QRange = QRange::closed(f64::NEG_INFINITY, 2.0);
    pub const ALL: QRange = QRange::closed(f64::NEG_INFINITY, f64::INFINITY);

    pub fn contains(&self, q: f64) -> bool {
        if q.is_nan() || q < self.lo {
            return false;
        }
        if self.hi_open {
            q < self.hi
        } else {
            q <= self.hi
        }
    }
}

impl fmt::Display for QRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open_lo = if self.lo.is_infinite() { "(" } else { "[" };
        let close = if self.hi_open || self.hi.is_infinite() { ")" } else { "]" };
        write!(f, "{open_lo}{}, {}{close}", self.lo, self.hi)
    }
}

/// `ln_q` of a number given through its natural logarithm `l = ln x`.
///
/// Works for any `l` including very negative values where `x` itself would
/// underflow.
#[inline]
pub fn ln_q_of_ln(l: f64, q: QParam) -> f64 {
    if q.is_shannon() {
        return l;
    }
    let a = q.one_minus();
    (a * l).exp_m1() / a
}

/// q-logarithm.
///
/// `x = 0` returns the finite limit `-1/(1-q)` when `q < 1` and negative
/// infinity otherwise.
pub fn ln_q(x: f64, q: QParam) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(QitError::Domain {
            func: "ln_q",
            detail: format!("x = {x} is negative"),
        });
    }
    if x == 0.0 {
        if !q.is_shannon() && q.value() < 1.0 {
            return Ok(-1.0 / q.one_minus());
        }
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_q_of_ln(x.ln(), q))
}

/// q-exponential. Errors with the boundary value `1 + (1-q)x` when it is not positive.
pub fn exp_q(x: f64, q: QParam) -> Result<f64> {
    if x.is_nan() {
        return Err(QitError::Domain {
            func: "exp_q",
            detail: "x is NaN".into(),
        });
    }
    if q.is_shannon() {
        return Ok(x.exp());
    }
    let a = q.one_minus();
    let boundary = 1.0 + a * x;
    if boundary <= 0.0 {
        return Err(QitError::ExpDomain {
            x,
            q: q.value(),
            boundary,
        });
    }
    Ok(((a * x).ln_1p() / a).exp())
}

/// q-exponential with the Tsallis cutoff: returns 0 where `1 + (1-q)x <= 0`
/// for `q < 1`. For `q > 1` the boundary is a pole and still errors.
pub fn exp_q_cutoff(x: f64, q: QParam) -> Result<f64> {
    match exp_q(x, q) {
        Err(QitError::ExpDomain { .. }) if q.value() < 1.0 => Ok(0.0),
        other => other,
    }
}

/// Floating-point residual of `ln_q(xy) = ln_q x + ln_q y + (1-q) ln_q x ln_q y`.
pub fn pseudo_additivity_residual(x: f64, y: f64, q: QParam) -> Result<f64> {
    if x <= 0.0 || y <= 0.0 {
        return Err(QitError::Domain {
            func: "pseudo_additivity_residual",
            detail: format!("arguments must be positive, got x = {x}, y = {y}"),
        });
    }
    let lx = ln_q(x, q)?;
    let ly = ln_q(y, q)?;
    let lxy = ln_q_of_ln(x.ln() + y.ln(), q);
    Ok(lxy - lx - ly - q.one_minus() * lx * ly)
}
