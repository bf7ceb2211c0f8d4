//! Signed slacks of the q-information inequalities and residuals of the
//! exact identities, plus a seeded fuzz campaign runner.
//!
//! Every inequality is arranged as `slack = LHS - RHS` so that the law
//! asserts `slack >= 0`. Identities report `-|residual|` as their slack so
//! one predicate (`slack >= -tol`) covers both.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};
use crate::measures::{
    conditional_entropy_axes, conditional_mutual_information_axes, entropy_of, lnq, q_entropy_max,
    relative_of,
};
use crate::prob::{product_dist, random_dist, random_joint, random_markov_triple, JointTable, ProbVec, Rng};
use crate::qlog::{pseudo_additivity_residual, QParam, QRange};

/// Tolerance on inequality slacks.
pub const SLACK_TOL: f64 = 1e-9;
/// Tolerance on identity residuals.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawId {
    /// `H(X,Y) >= H(X) + H(Y|X)`
    JointChain,
    /// `H(X,Y) >= H(X) + H(Y)` for independent `X, Y`
    IndepSuperadd,
    /// `H(X,Y|Z) >= H(X|Z) + H(Y|X,Z)`
    CondChain,
    /// `H(X_1..X_n) >= Σ H(X_i | X_{i-1}..X_1)`
    BlockChain,
    /// q-ln sum inequality
    QlnSum,
    /// `D_q(p||r) >= 0`
    DqNonneg,
    /// `H_q(p) <= -ln_q(1/m)`
    MaxBound,
    /// data processing with the (1-q) correction term
    Dpi,
    /// chain rule for mutual q-information, two variables
    InfoChainRule,
    /// chain rule for relative q-entropy
    RelChainRule,
}

impl LawId {
    pub const ALL: [LawId; 10] = [
        LawId::JointChain,
        LawId::IndepSuperadd,
        LawId::CondChain,
        LawId::BlockChain,
        LawId::QlnSum,
        LawId::DqNonneg,
        LawId::MaxBound,
        LawId::Dpi,
        LawId::InfoChainRule,
        LawId::RelChainRule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LawId::JointChain => "joint-chain",
            LawId::IndepSuperadd => "indep-superadd",
            LawId::CondChain => "cond-chain",
            LawId::BlockChain => "block-chain",
            LawId::QlnSum => "qln-sum",
            LawId::DqNonneg => "dq-nonneg",
            LawId::MaxBound => "max-bound",
            LawId::Dpi => "dpi",
            LawId::InfoChainRule => "info-chain-rule",
            LawId::RelChainRule => "rel-chain-rule",
        }
    }

    /// Range of `q` on which the law is documented to hold.
    pub fn validity(self) -> QRange {
        match self {
            LawId::JointChain
            | LawId::IndepSuperadd
            | LawId::CondChain
            | LawId::BlockChain
            | LawId::Dpi
            | LawId::RelChainRule => QRange::UNIT,
            LawId::QlnSum | LawId::DqNonneg | LawId::MaxBound => QRange::UP_TO_TWO,
            LawId::InfoChainRule => QRange::ALL,
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, LawId::InfoChainRule | LawId::RelChainRule)
    }

    pub fn tolerance(self) -> f64 {
        if self.is_identity() {
            IDENTITY_TOL
        } else {
            SLACK_TOL
        }
    }

    /// Bounded sampling span used when no q-range is given.
    pub fn default_span(self) -> QSpan {
        match self.validity() {
            r if r == QRange::UNIT => QSpan { lo: 0.0, hi: 1.0 },
            _ => QSpan { lo: 0.0, hi: 2.0 },
        }
    }
}

impl fmt::Display for LawId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LawId {
    type Err = QitError;
    fn from_str(s: &str) -> Result<Self> {
        LawId::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LawId::ALL.iter().map(|l| l.as_str()).collect();
                QitError::arg(format!("unknown law '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Exact identities checked by [`identity_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityId {
    PseudoAdd,
    InfoChainRuleN2,
    RelChainRule,
}

/// Inputs for a law, by arity.
#[derive(Debug, Clone, PartialEq)]
pub enum LawInstance {
    Table(JointTable),
    Pair(ProbVec, ProbVec),
    Dist(ProbVec),
    /// Nonnegative, unnormalized sequences for the q-ln sum inequality.
    Weights { r: Vec<f64>, s: Vec<f64> },
    Tables(JointTable, JointTable),
    Point(f64, f64),
}

fn wrong_instance(what: &str) -> QitError {
    QitError::arg(format!("instance does not match law arity: expected {what}"))
}

fn table_of_rank(inst: &LawInstance, rank: usize, what: &str) -> Result<JointTable> {
    match inst {
        LawInstance::Table(t) if t.rank() == rank => Ok(t.clone()),
        _ => Err(wrong_instance(what)),
    }
}

/// `Σ p(x,y,z) ln_q[p(x,z)/(p(x)p(z))] · ln_q[p(x,y|z)/(p(x|z)p(y|z))]` for a
/// rank-3 table with axes `(X, Y, Z)`.
pub fn dpi_cross_sum(j: &JointTable, q: QParam) -> Result<f64> {
    if j.rank() != 3 {
        return Err(wrong_instance("a rank-3 table"));
    }
    let xz = j.project(&[0, 2])?;
    let yz = j.project(&[1, 2])?;
    let x = j.project(&[0])?;
    let z = j.project(&[2])?;
    let s = j.shape();
    let mut acc = 0.0;
    for a in 0..s[0] {
        for b in 0..s[1] {
            for c in 0..s[2] {
                let p = j.get(&[a, b, c]);
                if p <= 0.0 {
                    continue;
                }
                let pxz = xz.get(&[a, c]);
                let pz = z.get(&[c]);
                let first = pxz / (x.get(&[a]) * pz);
                let second = p * pz / (pxz * yz.get(&[b, c]));
                acc += p * lnq(first, q) * lnq(second, q);
            }
        }
    }
    Ok(acc)
}

fn block_chain_slack(j: &JointTable, q: QParam) -> Result<f64> {
    let mut rhs = 0.0;
    for i in 0..j.rank() {
        let past: Vec<usize> = (0..i).collect();
        rhs += conditional_entropy_axes(j, &[i], &past, q)?;
    }
    Ok(entropy_of(j.data(), q) - rhs)
}

/// `LHS - RHS` of the law on `inst`; the law asserts a nonnegative value.
/// Identity laws return `-|residual|`.
pub fn law_slack(law: LawId, inst: &LawInstance, q: QParam) -> Result<f64> {
    q.require(law.validity(), law.as_str())?;
    match law {
        LawId::JointChain => {
            let j = table_of_rank(inst, 2, "a rank-2 table")?;
            let hx = conditional_entropy_axes(&j, &[0], &[], q)?;
            let hy_x = conditional_entropy_axes(&j, &[1], &[0], q)?;
            Ok(entropy_of(j.data(), q) - hx - hy_x)
        }
        LawId::IndepSuperadd => match inst {
            LawInstance::Pair(p, r) => {
                let t = product_dist(p, r);
                Ok(entropy_of(t.data(), q) - entropy_of(p.as_slice(), q) - entropy_of(r.as_slice(), q))
            }
            _ => Err(wrong_instance("a pair of distributions")),
        },
        LawId::CondChain => {
            let j = table_of_rank(inst, 3, "a rank-3 table (X, Y, Z)")?;
            let hxy_z = conditional_entropy_axes(&j, &[0, 1], &[2], q)?;
            let hx_z = conditional_entropy_axes(&j, &[0], &[2], q)?;
            let hy_xz = conditional_entropy_axes(&j, &[1], &[0, 2], q)?;
            Ok(hxy_z - hx_z - hy_xz)
        }
        LawId::BlockChain => match inst {
            LawInstance::Table(j) if (1..=4).contains(&j.rank()) => block_chain_slack(j, q),
            _ => Err(wrong_instance("a table of rank 1 to 4")),
        },
        LawId::QlnSum => match inst {
            LawInstance::Weights { r, s } => qln_sum_slack(r, s, q),
            _ => Err(wrong_instance("two nonnegative sequences")),
        },
        LawId::DqNonneg => match inst {
            LawInstance::Pair(p, r) if p.len() == r.len() => Ok(relative_of(p.as_slice(), r.as_slice(), q)),
            _ => Err(wrong_instance("two distributions of equal length")),
        },
        LawId::MaxBound => match inst {
            LawInstance::Dist(p) => Ok(q_entropy_max(p.len(), q)? - entropy_of(p.as_slice(), q)),
            _ => Err(wrong_instance("a distribution")),
        },
        LawId::Dpi => {
            let j = table_of_rank(inst, 3, "a rank-3 table (X, Y, Z)")?;
            let ixy = conditional_mutual_information_axes(&j, &[0], &[1], &[], q)?;
            let ixz = conditional_mutual_information_axes(&j, &[0], &[2], &[], q)?;
            Ok(ixy - ixz - q.one_minus() * dpi_cross_sum(&j, q)?)
        }
        LawId::InfoChainRule => Ok(-identity_residual(IdentityId::InfoChainRuleN2, inst, q)?),
        LawId::RelChainRule => Ok(-identity_residual(IdentityId::RelChainRule, inst, q)?),
    }
}

fn qln_sum_slack(r: &[f64], s: &[f64], q: QParam) -> Result<f64> {
    if r.len() != s.len() || r.is_empty() {
        return Err(wrong_instance("two nonnegative sequences of equal, nonzero length"));
    }
    if r.iter().chain(s).any(|&v| v.is_nan() || v < 0.0 || !v.is_finite()) {
        return Err(QitError::arg("q-ln sum sequences must be finite and nonnegative"));
    }
    let lhs: f64 = r
        .iter()
        .zip(s)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * lnq(a / b, q))
        .sum();
    let (sr, ss): (f64, f64) = (r.iter().sum(), s.iter().sum());
    let rhs = if sr > 0.0 { sr * lnq(sr / ss, q) } else { 0.0 };
    Ok(lhs - rhs)
}

/// `|LHS - RHS|` of an exact identity. Relative entropies that are infinite
/// make the residual `+inf`.
pub fn identity_residual(id: IdentityId, inst: &LawInstance, q: QParam) -> Result<f64> {
    match id {
        IdentityId::PseudoAdd => match inst {
            LawInstance::Point(x, y) => Ok(pseudo_additivity_residual(*x, *y, q)?.abs()),
            _ => Err(wrong_instance("a pair of positive reals")),
        },
        IdentityId::InfoChainRuleN2 => {
            let j = table_of_rank(inst, 3, "a rank-3 table (X1, X2, Y)")?;
            info_chain_residual(&j, q)
        }
        IdentityId::RelChainRule => match inst {
            LawInstance::Tables(p, r) if p.rank() == 2 && p.shape() == r.shape() => rel_chain_residual(p, r, q),
            _ => Err(wrong_instance("two rank-2 tables of equal shape")),
        },
    }
}

fn info_chain_residual(j: &JointTable, q: QParam) -> Result<f64> {
    let whole = conditional_mutual_information_axes(j, &[0, 1], &[2], &[], q)?;
    let first = conditional_mutual_information_axes(j, &[0], &[2], &[], q)?;
    let second = conditional_mutual_information_axes(j, &[1], &[2], &[0], q)?;
    let x1 = j.project(&[0])?;
    let y = j.project(&[2])?;
    let x1y = j.project(&[0, 2])?;
    let x1x2 = j.project(&[0, 1])?;
    let s = j.shape();
    let mut cross = 0.0;
    for a in 0..s[0] {
        for b in 0..s[1] {
            for c in 0..s[2] {
                let p = j.get(&[a, b, c]);
                if p <= 0.0 {
                    continue;
                }
                let pa = x1.get(&[a]);
                let pay = x1y.get(&[a, c]);
                let r1 = pay / (pa * y.get(&[c]));
                let r2 = p * pa / (x1x2.get(&[a, b]) * pay);
                cross += p * lnq(r1, q) * lnq(r2, q);
            }
        }
    }
    Ok((whole - first - second - q.one_minus() * cross).abs())
}

fn rel_chain_residual(p: &JointTable, r: &JointTable, q: QParam) -> Result<f64> {
    let lhs = relative_of(p.data(), r.data(), q);
    let px = p.project(&[0])?;
    let rx = r.project(&[0])?;
    let marg = relative_of(px.data(), rx.data(), q);
    let cols = p.shape()[1];
    let mut cond = 0.0;
    let mut cross = 0.0;
    for x in 0..p.shape()[0] {
        let (pxv, rxv) = (px.data()[x], rx.data()[x]);
        let marg_ratio = pxv / rxv;
        for y in 0..cols {
            let pxy = p.get(&[x, y]);
            if pxy <= 0.0 {
                continue;
            }
            let cond_ratio = (pxy / pxv) / (r.get(&[x, y]) / rxv);
            let lc = lnq(cond_ratio, q);
            cond += pxy * lc;
            cross += pxy * lnq(marg_ratio, q) * lc;
        }
    }
    if [lhs, marg, cond, cross].iter().any(|v| v.is_infinite()) {
        return Ok(f64::INFINITY);
    }
    Ok((lhs - marg - cond - q.one_minus() * cross).abs())
}

/// Closed sampling interval for `q`; values are drawn as `lo + (hi - lo) u`
/// with `u` in `[0, 1)`, so `hi` itself is only produced when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSpan {
    pub lo: f64,
    pub hi: f64,
}

impl QSpan {
    pub fn point(q: f64) -> Self {
        QSpan { lo: q, hi: q }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.uniform_in(self.lo, self.hi)
        }
    }

    /// Every value this span can produce lies in `range`.
    pub fn within(&self, range: QRange) -> bool {
        if !range.contains(self.lo) {
            return false;
        }
        range.contains(self.hi) || (self.lo < self.hi && range.hi_open && self.hi == range.hi)
    }
}

impl FromStr for QSpan {
    type Err = QitError;
    /// `"a:b"` or a single number.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| QitError::arg(format!("invalid q value '{t}'")))
        };
        let span = match s.split_once(':') {
            Some((a, b)) => QSpan { lo: num(a)?, hi: num(b)? },
            None => QSpan::point(num(s)?),
        };
        if span.lo > span.hi {
            return Err(QitError::arg(format!("empty q-range {s}")));
        }
        Ok(span)
    }
}

impl fmt::Display for QSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

/// Random instance of the arity required by `law`.
pub fn random_instance(law: LawId, rng: &mut Rng) -> Result<LawInstance> {
    let dim = |rng: &mut Rng| rng.int_in(2, 4);
    Ok(match law {
        LawId::JointChain => LawInstance::Table(random_joint(&[dim(rng), dim(rng)], rng)?),
        LawId::IndepSuperadd | LawId::DqNonneg => {
            let (m, n) = (dim(rng), dim(rng));
            let n = if law == LawId::DqNonneg { m } else { n };
            LawInstance::Pair(random_dist(m, rng)?, random_dist(n, rng)?)
        }
        LawId::CondChain | LawId::InfoChainRule => {
            LawInstance::Table(random_joint(&[dim(rng), dim(rng), dim(rng)], rng)?)
        }
        LawId::BlockChain => {
            let rank = rng.int_in(2, 4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.int_in(2, 3)).collect();
            LawInstance::Table(random_joint(&shape, rng)?)
        }
        LawId::QlnSum => {
            let n = dim(rng);
            let scale_r = rng.uniform_in(0.1, 10.0);
            let scale_s = rng.uniform_in(0.1, 10.0);
            let r = random_dist(n, rng)?.into_vec().into_iter().map(|v| v * scale_r).collect();
            let s = random_dist(n, rng)?.into_vec().into_iter().map(|v| v * scale_s).collect();
            LawInstance::Weights { r, s }
        }
        LawId::MaxBound => LawInstance::Dist(random_dist(dim(rng), rng)?),
        LawId::Dpi => LawInstance::Table(random_markov_triple([dim(rng), dim(rng), dim(rng)], rng)?),
        LawId::RelChainRule => {
            let shape = [dim(rng), dim(rng)];
            LawInstance::Tables(random_joint(&shape, rng)?, random_joint(&shape, rng)?)
        }
    })
}

/// Aggregate of one fuzz campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub law: LawId,
    pub trials: usize,
    #[serde(with = "crate::output::nonfinite")]
    pub min_slack: f64,
    #[serde(with = "crate::output::nonfinite")]
    pub mean_slack: f64,
    pub violations: usize,
    pub tolerance: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub q_mean: f64,
    /// `q` at which the smallest slack occurred.
    pub worst_q: f64,
    pub seed: u64,
}

impl SlackReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub const CSV_HEADER: &'static str = "law,trials,min_slack,mean_slack,violations,seed";
}

/// Runs `trials` random instances of `law` with `q` drawn from `span`.
///
/// Trial `i` draws from stream `i` of `seed`, so the report does not depend
/// on `workers`.
pub fn fuzz(law: LawId, trials: usize, span: QSpan, seed: u64, workers: usize) -> Result<SlackReport> {
    if trials == 0 {
        return Err(QitError::arg("trials must be >= 1"));
    }
    if !span.within(law.validity()) {
        return Err(QitError::arg(format!(
            "q-range {span} is not inside the validity range {} of {law}",
            law.validity()
        )));
    }
    let run = |i: usize| -> Result<(f64, f64)> {
        let mut rng = Rng::new(seed, i as u64);
        let q = QParam::new(span.sample(&mut rng))?;
        let inst = random_instance(law, &mut rng)?;
        Ok((q.value(), law_slack(law, &inst, q)?))
    };
    let samples: Vec<(f64, f64)> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| QitError::arg(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..trials).into_par_iter().map(run).collect::<Result<_>>())?
    } else {
        (0..trials).map(run).collect::<Result<_>>()?
    };

    let tol = law.tolerance();
    let (mut min_slack, mut worst_q) = (f64::INFINITY, f64::NAN);
    let (mut sum, mut qsum) = (0.0, 0.0);
    let (mut q_min, mut q_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut violations = 0;
    for &(q, s) in &samples {
        if s < min_slack || worst_q.is_nan() {
            min_slack = s;
            worst_q = q;
        }
        if s < -tol || s.is_nan() {
            violations += 1;
        }
        sum += s;
        qsum += q;
        q_min = q_min.min(q);
        q_max = q_max.max(q);
    }
    Ok(SlackReport {
        law,
        trials,
        min_slack,
        mean_slack: sum / trials as f64,
        violations,
        tolerance: tol,
        q_min,
        q_max,
        q_mean: qsum / trials as f64,
        worst_q,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::q_entropy;
    use crate::qlog::ln_q;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for l in LawId::ALL {
            assert_eq!(l.as_str().parse::<LawId>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.as_str()));
        }
        assert!("nope".parse::<LawId>().is_err());
    }

    #[test]
    fn out_of_range_q_is_rejected_with_range() {
        let inst = LawInstance::Dist(pv(&[0.5, 0.5]));
        match law_slack(LawId::MaxBound, &inst, q(2.5)) {
            Err(QitError::QOutOfRange { range, .. }) => assert_eq!(range, QRange::UP_TO_TWO),
            other => panic!("{other:?}"),
        }
        let t = LawInstance::Table(JointTable::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap());
        assert!(law_slack(LawId::JointChain, &t, q(1.2)).is_err());
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let t = LawInstance::Dist(pv(&[1.0]));
        assert!(law_slack(LawId::JointChain, &t, q(0.5)).is_err());
        assert!(law_slack(LawId::Dpi, &t, q(0.5)).is_err());
        assert!(identity_residual(IdentityId::RelChainRule, &t, q(0.5)).is_err());
    }

    #[test]
    fn joint_chain_on_product_equals_cross_term() {
        // slack = (q - 1) Σ p(x)p(y) ln_q p(x) ln_q p(y)
        let (a, b) = (pv(&[0.3, 0.7]), pv(&[0.2, 0.5, 0.3]));
        let t = product_dist(&a, &b);
        for qq in [0.1, 0.5, 0.9] {
            let mut cross = 0.0;
            for &x in a.as_slice() {
                for &y in b.as_slice() {
                    cross += x * y * ln_q(x, q(qq)).unwrap() * ln_q(y, q(qq)).unwrap();
                }
            }
            let s = law_slack(LawId::JointChain, &LawInstance::Table(t.clone()), q(qq)).unwrap();
            assert!((s - (qq - 1.0) * cross).abs() < 1e-12, "q={qq}");
            let s3 = law_slack(LawId::IndepSuperadd, &LawInstance::Pair(a.clone(), b.clone()), q(qq)).unwrap();
            assert!((s3 - (qq - 1.0) * cross).abs() < 1e-12);
        }
        let near_one = law_slack(LawId::JointChain, &LawInstance::Table(t), q(0.999_999_999_999)).unwrap();
        assert!(near_one.abs() < 1e-6);
    }

    #[test]
    fn qln_sum_proportional_is_tight() {
        let s = vec![0.3, 1.2, 0.5, 2.0];
        let r: Vec<f64> = s.iter().map(|v| v * 2.5).collect();
        for qq in [-0.5, 0.3, 1.0, 1.7, 2.0] {
            let v = law_slack(LawId::QlnSum, &LawInstance::Weights { r: r.clone(), s: s.clone() }, q(qq)).unwrap();
            assert!(v.abs() < 1e-12, "q={qq} slack={v}");
        }
        let bad = LawInstance::Weights { r: vec![-1.0], s: vec![1.0] };
        assert!(law_slack(LawId::QlnSum, &bad, q(0.5)).is_err());
    }

    /// Four-line brute-force sums, independent of the axis-projection code.
    fn dpi_bruteforce(t: &[[[f64; 2]; 2]; 2], qq: f64) -> f64 {
        let l = |x: f64| if x == 0.0 { ln_q(0.0, q(qq)).unwrap() } else { ln_q(x, q(qq)).unwrap() };
        let (mut px, mut pz, mut pxy, mut pxz, mut pyz) = ([0.0; 2], [0.0; 2], [[0.0; 2]; 2], [[0.0; 2]; 2], [[0.0; 2]; 2]);
        let mut py = [0.0; 2];
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let p = t[x][y][z];
                    px[x] += p;
                    py[y] += p;
                    pz[z] += p;
                    pxy[x][y] += p;
                    pxz[x][z] += p;
                    pyz[y][z] += p;
                }
            }
        }
        let (mut ixy, mut ixz, mut cross) = (0.0, 0.0, 0.0);
        for x in 0..2 {
            for y in 0..2 {
                if pxy[x][y] > 0.0 {
                    ixy += pxy[x][y] * l(pxy[x][y] / (px[x] * py[y]));
                }
            }
            for z in 0..2 {
                if pxz[x][z] > 0.0 {
                    ixz += pxz[x][z] * l(pxz[x][z] / (px[x] * pz[z]));
                }
            }
        }
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let p = t[x][y][z];
                    if p > 0.0 {
                        let a = pxz[x][z] / (px[x] * pz[z]);
                        let b = (p / pz[z]) / ((pxz[x][z] / pz[z]) * (pyz[y][z] / pz[z]));
                        cross += p * l(a) * l(b);
                    }
                }
            }
        }
        ixy - ixz - (1.0 - qq) * cross
    }

    #[test]
    fn dpi_diagonal_chain_matches_bruteforce() {
        // X = Y = Z, uniform
        let mut t = [[[0.0; 2]; 2]; 2];
        t[0][0][0] = 0.5;
        t[1][1][1] = 0.5;
        let flat: Vec<f64> = t.iter().flatten().flatten().copied().collect();
        let j = JointTable::new(vec![2, 2, 2], flat).unwrap();
        let s = law_slack(LawId::Dpi, &LawInstance::Table(j), q(0.5)).unwrap();
        let oracle = dpi_bruteforce(&t, 0.5);
        assert!((s - oracle).abs() < 1e-12);
        assert!(s >= 0.0);
        // I(X;Y) = I(X;Z) = ln_q 2 and the cross term is ln_q(2) * ln_q(1) = 0
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn dpi_random_triples_match_bruteforce_and_conditional_information() {
        let mut rng = Rng::new(11, 0);
        for _ in 0..200 {
            let j = random_markov_triple([2, 2, 2], &mut rng).unwrap();
            let qq = rng.uniform();
            let mut t = [[[0.0; 2]; 2]; 2];
            for (k, v) in j.data().iter().enumerate() {
                t[k / 4][(k / 2) % 2][k % 2] = *v;
            }
            let s = law_slack(LawId::Dpi, &LawInstance::Table(j.clone()), q(qq)).unwrap();
            assert!((s - dpi_bruteforce(&t, qq)).abs() < 1e-12);
            // on Markov triples the slack is exactly I_q(X; Y | Z)
            let ixy_z = conditional_mutual_information_axes(&j, &[0], &[1], &[2], q(qq)).unwrap();
            assert!((s - ixy_z).abs() < 1e-12);
        }
    }

    #[test]
    fn dpi_cross_term_sign_is_not_fixed() {
        // The correction term can take either sign on Markov triples.
        let mut rng = Rng::new(2024, 0);
        let (mut pos, mut neg) = (0, 0);
        for _ in 0..500 {
            let j = random_markov_triple([3, 3, 3], &mut rng).unwrap();
            let v = dpi_cross_sum(&j, q(rng.uniform())).unwrap();
            if v > 1e-12 {
                pos += 1;
            } else if v < -1e-12 {
                neg += 1;
            }
        }
        assert!(pos > 0 && neg > 0, "pos={pos} neg={neg}");
    }

    #[test]
    fn cond_chain_equals_cross_term() {
        // slack = (q - 1) Σ p ln_q p(y|x,z) ln_q p(x|z)
        let mut rng = Rng::new(3, 1);
        let j = random_joint(&[2, 2, 2], &mut rng).unwrap();
        let qq = 0.5;
        let l = |x: f64| ln_q(x, q(qq)).unwrap();
        let g = |x: usize, y: usize, z: usize| j.get(&[x, y, z]);
        let mut cross = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let pz: f64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| g(a, b, z)).sum();
                    let pxz: f64 = (0..2).map(|b| g(x, b, z)).sum();
                    cross += g(x, y, z) * l(g(x, y, z) / pxz) * l(pxz / pz);
                }
            }
        }
        let s = law_slack(LawId::CondChain, &LawInstance::Table(j), q(qq)).unwrap();
        assert!((s - (qq - 1.0) * cross).abs() < 1e-12);
    }

    #[test]
    fn block_chain_rank2_coincides_with_joint_chain() {
        let mut rng = Rng::new(8, 8);
        for _ in 0..50 {
            let j = random_joint(&[3, 2], &mut rng).unwrap();
            let qq = q(rng.uniform());
            let a = law_slack(LawId::JointChain, &LawInstance::Table(j.clone()), qq).unwrap();
            let b = law_slack(LawId::BlockChain, &LawInstance::Table(j), qq).unwrap();
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn rel_chain_rule_examples() {
        let mut rng = Rng::new(21, 0);
        let p = random_joint(&[2, 2], &mut rng).unwrap();
        let r = random_joint(&[2, 2], &mut rng).unwrap();
        let same = LawInstance::Tables(p.clone(), p.clone());
        assert_eq!(identity_residual(IdentityId::RelChainRule, &same, q(0.5)).unwrap(), 0.0);
        let pair = LawInstance::Tables(p.clone(), r.clone());
        assert!(identity_residual(IdentityId::RelChainRule, &pair, q(0.5)).unwrap() <= 1e-10);

        // independent two-sided summation of D_q(p_xy || r_xy)
        let l = |x: f64| ln_q(x, q(0.5)).unwrap();
        let lhs: f64 = (0..4).map(|k| p.data()[k] * l(p.data()[k] / r.data()[k])).sum();
        let (px, rx) = (p.marginal(0).unwrap(), r.marginal(0).unwrap());
        let mut rhs = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let a = px[x] / rx[x];
                let b = (p.get(&[x, y]) / px[x]) / (r.get(&[x, y]) / rx[x]);
                rhs += p.get(&[x, y]) * (l(a) + l(b) + 0.5 * l(a) * l(b));
            }
        }
        assert!((lhs - rhs).abs() < 1e-12);

        let zero = JointTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let inf = LawInstance::Tables(p, zero);
        assert_eq!(identity_residual(IdentityId::RelChainRule, &inf, q(0.5)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn info_chain_rule_n2_examples() {
        let mut rng = Rng::new(5, 5);
        for _ in 0..100 {
            let j = random_joint(&[2, 2, 2], &mut rng).unwrap();
            let qq = q(rng.uniform_in(-0.5, 2.5));
            let r = identity_residual(IdentityId::InfoChainRuleN2, &LawInstance::Table(j), qq).unwrap();
            assert!(r <= 1e-10, "{r}");
        }
    }

    #[test]
    fn pseudo_add_identity() {
        let r = identity_residual(IdentityId::PseudoAdd, &LawInstance::Point(0.5, 0.5), q(0.75)).unwrap();
        assert!(r < 1e-12);
    }

    #[test]
    fn max_bound_is_tight_at_uniform() {
        for m in 1..8 {
            let u = ProbVec::uniform(m).unwrap();
            for qq in [0.0, 0.4, 1.0, 1.6, 2.0] {
                let s = law_slack(LawId::MaxBound, &LawInstance::Dist(u.clone()), q(qq)).unwrap();
                assert!(s.abs() < 1e-12);
                assert!((q_entropy(&u, q(qq)).value - q_entropy_max(m, q(qq)).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn span_parsing_and_containment() {
        let s: QSpan = "0:2".parse().unwrap();
        assert_eq!(s, QSpan { lo: 0.0, hi: 2.0 });
        assert_eq!("0.5".parse::<QSpan>().unwrap(), QSpan::point(0.5));
        assert!("2:1".parse::<QSpan>().is_err());
        assert!("a:1".parse::<QSpan>().is_err());
        assert!(QSpan { lo: 0.0, hi: 1.0 }.within(QRange::UNIT));
        assert!(!QSpan::point(1.0).within(QRange::UNIT));
        assert!(!QSpan { lo: 0.0, hi: 2.5 }.within(QRange::UP_TO_TWO));
        assert!(QSpan { lo: -3.0, hi: 2.0 }.within(QRange::UP_TO_TWO));
    }

    #[test]
    fn fuzz_argument_errors() {
        assert!(fuzz(LawId::DqNonneg, 0, QSpan { lo: 0.0, hi: 2.0 }, 1, 1).is_err());
        assert!(fuzz(LawId::DqNonneg, 10, QSpan { lo: 2.5, hi: 3.0 }, 1, 1).is_err());
        assert!(fuzz(LawId::JointChain, 10, QSpan { lo: 0.5, hi: 1.5 }, 1, 1).is_err());
    }

    #[test]
    fn fuzz_is_deterministic_and_worker_independent() {
        let span = QSpan { lo: 0.0, hi: 2.0 };
        let a = fuzz(LawId::DqNonneg, 500, span, 42, 1).unwrap();
        let b = fuzz(LawId::DqNonneg, 500, span, 42, 1).unwrap();
        let c = fuzz(LawId::DqNonneg, 500, span, 42, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_ne!(a, fuzz(LawId::DqNonneg, 500, span, 43, 1).unwrap());
        assert!(a.passed());
    }

    #[test]
    fn fuzz_shannon_limit_joint_chain() {
        let r = fuzz(LawId::JointChain, 1, QSpan::point(0.999_999_999_999), 7, 1).unwrap();
        assert!(r.min_slack.abs() < 1e-6);
        assert_eq!(r.violations, 0);
    }
}
