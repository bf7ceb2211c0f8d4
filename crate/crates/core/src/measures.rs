//! q-information measures.
//!
//! Every sum uses the convention `0 · ln_q(·) = 0`. Relative entropies with
//! `p_i > 0, r_i = 0` evaluate `ln_q(+inf)`, which is `+inf` for `q <= 1` and
//! the finite `1/(q-1)` for `q > 1`.

use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};
use crate::prob::{JointTable, ProbVec};
use crate::qlog::{ln_q_of_ln, QParam, QRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    TsallisEntropy,
    QEntropy,
    JointQEntropy,
    ConditionalQEntropy,
    RelativeQEntropy,
    MutualQInformation,
    ConditionalMutualQInformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    #[serde(with = "crate::output::nonfinite")]
    pub value: f64,
    pub q: QParam,
    pub kind: MeasureKind,
}

impl MeasureValue {
    fn new(kind: MeasureKind, value: f64, q: QParam) -> Self {
        MeasureValue { value, q, kind }
    }

    /// The `+inf` sentinel of a relative entropy without absolute continuity.
    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
}

/// `ln_q(x)` for `x` in `[0, +inf]`, with `ln_q(0) = -1/(1-q)` for `q < 1`.
#[inline]
pub(crate) fn lnq(x: f64, q: QParam) -> f64 {
    ln_q_of_ln(x.ln(), q)
}

/// `-Σ p ln_q p` over a slice of weights.
pub(crate) fn entropy_of(p: &[f64], q: QParam) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * lnq(x, q)).sum::<f64>()
}

/// `Σ p ln_q(p / r)` over matching slices.
pub(crate) fn relative_of(p: &[f64], r: &[f64], q: QParam) -> f64 {
    p.iter()
        .zip(r)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * ln_q_of_ln(a.ln() - b.ln(), q))
        .sum()
}

fn cells(shape: &[usize], axes: &[usize]) -> usize {
    axes.iter().map(|&a| shape[a]).product()
}

/// `H_q(T | G) = -Σ p(t,g) ln_q p(t|g)` for disjoint axis sets of a table.
/// An empty `given` yields the joint entropy of `target`.
pub fn conditional_entropy_axes(j: &JointTable, target: &[usize], given: &[usize], q: QParam) -> Result<f64> {
    if target.iter().any(|a| given.contains(a)) {
        return Err(QitError::arg("target and conditioning axes overlap"));
    }
    let order: Vec<usize> = given.iter().chain(target).copied().collect();
    let gt = j.project(&order)?;
    let g = j.project(given)?;
    let inner = cells(j.shape(), target);
    let mut s = 0.0;
    for (k, &pgt) in gt.data().iter().enumerate() {
        if pgt > 0.0 {
            s += pgt * lnq(pgt / g.data()[k / inner], q);
        }
    }
    Ok(-s)
}

/// `I_q(A; B | C) = Σ p(a,b,c) ln_q[p(a,b|c) / (p(a|c) p(b|c))]` for
/// disjoint axis sets. An empty `c` gives the unconditional mutual information.
pub fn conditional_mutual_information_axes(
    j: &JointTable,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    q: QParam,
) -> Result<f64> {
    let disjoint = a.iter().all(|x| !b.contains(x) && !c.contains(x)) && b.iter().all(|x| !c.contains(x));
    if !disjoint {
        return Err(QitError::arg("axis sets must be disjoint"));
    }
    let cab: Vec<usize> = c.iter().chain(a).chain(b).copied().collect();
    let ca: Vec<usize> = c.iter().chain(a).copied().collect();
    let cb: Vec<usize> = c.iter().chain(b).copied().collect();
    let t_cab = j.project(&cab)?;
    let t_ca = j.project(&ca)?;
    let t_cb = j.project(&cb)?;
    let t_c = j.project(c)?;
    let (na, nb) = (cells(j.shape(), a), cells(j.shape(), b));
    let mut s = 0.0;
    for (k, &p) in t_cab.data().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let ic = k / (na * nb);
        let ia = (k / nb) % na;
        let ib = k % nb;
        let ratio = p * t_c.data()[ic] / (t_ca.data()[ic * na + ia] * t_cb.data()[ic * nb + ib]);
        s += p * lnq(ratio, q);
    }
    Ok(s)
}

/// Tsallis entropy `S_q = -Σ p^q ln_q p`.
pub fn tsallis_entropy(p: &ProbVec, q: QParam) -> MeasureValue {
    let v = -p
        .as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x.powf(q.value()) * lnq(x, q))
        .sum::<f64>();
    MeasureValue::new(MeasureKind::TsallisEntropy, v, q)
}

/// q-entropy `H_q = -Σ p ln_q p`.
pub fn q_entropy(p: &ProbVec, q: QParam) -> MeasureValue {
    MeasureValue::new(MeasureKind::QEntropy, entropy_of(p.as_slice(), q), q)
}

/// Joint q-entropy over every cell of the table.
pub fn q_entropy_joint(j: &JointTable, q: QParam) -> MeasureValue {
    MeasureValue::new(MeasureKind::JointQEntropy, entropy_of(j.data(), q), q)
}

/// `H_q(rest | given_axis)`.
pub fn q_entropy_conditional(j: &JointTable, given_axis: usize, q: QParam) -> Result<MeasureValue> {
    if given_axis >= j.rank() || j.rank() < 2 {
        return Err(QitError::arg(format!(
            "conditioning axis {given_axis} invalid for a rank-{} table",
            j.rank()
        )));
    }
    let target: Vec<usize> = (0..j.rank()).filter(|&a| a != given_axis).collect();
    let v = conditional_entropy_axes(j, &target, &[given_axis], q)?;
    Ok(MeasureValue::new(MeasureKind::ConditionalQEntropy, v, q))
}

/// Relative q-entropy `D_q(p || r) = Σ p ln_q(p / r)`.
pub fn relative_q_entropy(p: &ProbVec, r: &ProbVec, q: QParam) -> Result<MeasureValue> {
    if p.len() != r.len() {
        return Err(QitError::arg(format!(
            "length mismatch: {} vs {}",
            p.len(),
            r.len()
        )));
    }
    Ok(MeasureValue::new(
        MeasureKind::RelativeQEntropy,
        relative_of(p.as_slice(), r.as_slice(), q),
        q,
    ))
}

/// `I_q(X; Y)` of a rank-2 table.
pub fn mutual_q_information(j: &JointTable, q: QParam) -> Result<MeasureValue> {
    if j.rank() != 2 {
        return Err(QitError::arg(format!("expected a rank-2 table, got rank {}", j.rank())));
    }
    let v = conditional_mutual_information_axes(j, &[0], &[1], &[], q)?;
    Ok(MeasureValue::new(MeasureKind::MutualQInformation, v, q))
}

/// `I_q(X; Y | Z)` of a rank-3 table with axes `(X, Y, Z)`.
pub fn conditional_mutual_q_information(j: &JointTable, q: QParam) -> Result<MeasureValue> {
    if j.rank() != 3 {
        return Err(QitError::arg(format!("expected a rank-3 table, got rank {}", j.rank())));
    }
    let v = conditional_mutual_information_axes(j, &[0], &[1], &[2], q)?;
    Ok(MeasureValue::new(MeasureKind::ConditionalMutualQInformation, v, q))
}

/// Largest q-entropy on `m` outcomes, `-ln_q(1/m)`, attained at the uniform
/// distribution. Defined for `q <= 2`.
pub fn q_entropy_max(m: usize, q: QParam) -> Result<f64> {
    if m == 0 {
        return Err(QitError::arg("cardinality must be >= 1"));
    }
    q.require(QRange::UP_TO_TWO, "q_entropy_max")?;
    Ok(-ln_q_of_ln(-(m as f64).ln(), q))
}
