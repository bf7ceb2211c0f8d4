//! Block probabilities of sampled trajectories under the q-logarithm, k-th
//! order Markov approximations, interaction residuals, conditional q-entropy
//! rates, and a Monte Carlo probe of q-deformed equipartition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};
use crate::markov::{check_budget, stationary_default, MarkovChain};
use crate::measures::{conditional_entropy_axes, entropy_of};
use crate::prob::{ProbVec, Rng};
use crate::qlog::{ln_q_of_ln, QParam};

/// Mean `|T₃/n|` at the largest `n` below which the interaction term counts as vanished.
pub const T3_VANISH_TOL: f64 = 1e-2;
/// A ratio expectation that grows by more than this factor over the n-grid
/// is reported as unbounded.
pub const SUP_GROWTH_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<'a> {
    pub symbols: Vec<usize>,
    pub chain: &'a MarkovChain,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory<'_> {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Ancestral sampling of `n` symbols starting from the chain's initial distribution.
pub fn sample_trajectory<'a>(c: &'a MarkovChain, n: usize, rng: &mut Rng) -> Result<Trajectory<'a>> {
    if n == 0 {
        return Err(QitError::arg("trajectory length must be >= 1"));
    }
    let mut symbols = Vec::with_capacity(n);
    let mut x = rng.categorical(c.initial().as_slice());
    symbols.push(x);
    for _ in 1..n {
        x = rng.categorical(&c.transition()[x]);
        symbols.push(x);
    }
    Ok(Trajectory {
        symbols,
        chain: c,
        seed: rng.seed(),
        stream: rng.stream(),
    })
}

/// `−ln_q p` of a block kept alongside `ln p`, so the strict upper bound
/// `−ln_q p < 1/(1−q)` can be decided even where the difference underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockQLog {
    pub ln_p: f64,
    pub neg_ln_q: f64,
}

impl BlockQLog {
    pub fn from_ln(ln_p: f64, q: QParam) -> Self {
        BlockQLog {
            ln_p,
            neg_ln_q: -ln_q_of_ln(ln_p, q),
        }
    }

    /// `0 <= −ln_q p < 1/(1−q)` for `q < 1`, `−ln_q p >= 0` otherwise. The
    /// strict part uses `1/(1−q) − (−ln_q p) = p^{1−q}/(1−q)`, positive iff `ln p` is finite.
    pub fn within_bound(&self, q: QParam) -> bool {
        let nonneg = self.neg_ln_q >= 0.0;
        if q.is_shannon() || q.value() >= 1.0 {
            return nonneg;
        }
        nonneg && self.neg_ln_q <= 1.0 / q.one_minus() && self.ln_p > f64::NEG_INFINITY
    }
}

fn ln_checked(p: f64, position: usize) -> Result<f64> {
    if p > 0.0 {
        Ok(p.ln())
    } else {
        Err(QitError::ImpossibleTrajectory { position })
    }
}

/// `ln p(x_0, ..., x_{n−1})` under the generating chain.
pub fn block_ln_prob(t: &Trajectory) -> Result<f64> {
    let c = t.chain;
    let mut l = ln_checked(c.initial()[t.symbols[0]], 0)?;
    for (i, w) in t.symbols.windows(2).enumerate() {
        l += ln_checked(c.transition()[w[0]][w[1]], i + 1)?;
    }
    Ok(l)
}

/// `−ln_q p(X_0^{n−1})` accumulated in the natural-log domain.
pub fn block_log_prob_q(t: &Trajectory, q: QParam) -> Result<f64> {
    Ok(BlockQLog::from_ln(block_ln_prob(t)?, q).neg_ln_q)
}

/// Where the conditionals of a k-th order approximation come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalSource {
    /// The generating chain.
    Chain,
    /// Window counts over the trajectory itself.
    Empirical,
}

/// `ln p_k(X_0^{n−1})`. `k = 0` is the product of single-symbol marginals
/// (stationary for [`ConditionalSource::Chain`]).
pub fn markov_k_block_ln_prob(t: &Trajectory, k: usize, source: ConditionalSource) -> Result<f64> {
    let n = t.len();
    if k > n {
        return Err(QitError::arg(format!("order k = {k} exceeds trajectory length {n}")));
    }
    match source {
        ConditionalSource::Chain if k == 0 => {
            let pi = stationary_default(t.chain)?;
            t.symbols
                .iter()
                .enumerate()
                .try_fold(0.0, |acc, (i, &x)| Ok(acc + ln_checked(pi[x], i)?))
        }
        // the chain is order 1, so every window of length k >= 1 conditions exactly
        ConditionalSource::Chain => block_ln_prob(t),
        ConditionalSource::Empirical => empirical_k_ln_prob(&t.symbols, k),
    }
}

fn empirical_k_ln_prob(s: &[usize], k: usize) -> Result<f64> {
    use std::collections::HashMap;
    let n = s.len();
    if k == 0 {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        s.iter().for_each(|&x| *counts.entry(x).or_default() += 1);
        return Ok(s.iter().map(|x| (counts[x] as f64 / n as f64).ln()).sum());
    }
    let mut blocks: HashMap<&[usize], usize> = HashMap::new();
    s.windows(k).for_each(|w| *blocks.entry(w).or_default() += 1);
    let mut extended: HashMap<&[usize], usize> = HashMap::new();
    let mut prefixes: HashMap<&[usize], usize> = HashMap::new();
    for w in s.windows(k + 1) {
        *extended.entry(w).or_default() += 1;
        *prefixes.entry(&w[..k]).or_default() += 1;
    }
    let mut l = (blocks[&s[..k]] as f64 / (n - k + 1) as f64).ln();
    for w in s.windows(k + 1) {
        l += (extended[w] as f64 / prefixes[&w[..k]] as f64).ln();
    }
    Ok(l)
}

/// `−ln_q p_k(X_0^{n−1})`, same accumulation as [`block_log_prob_q`].
pub fn markov_k_block_log_prob_q(t: &Trajectory, k: usize, q: QParam, source: ConditionalSource) -> Result<f64> {
    Ok(BlockQLog::from_ln(markov_k_block_ln_prob(t, k, source)?, q).neg_ln_q)
}

/// `ln_q(Π p_i) − Σ ln_q p_i`: every interaction term of order two and up.
pub fn t3_residual(probs: &[f64], q: QParam) -> Result<f64> {
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(QitError::arg(format!("conditional probabilities must lie in (0, 1], got {p}")));
    }
    let ln_total: f64 = probs.iter().map(|p| p.ln()).sum();
    let parts: f64 = probs.iter().map(|p| ln_q_of_ln(p.ln(), q)).sum();
    Ok(ln_q_of_ln(ln_total, q) - parts)
}

/// `H_q(X_0 | X_{−1}, ..., X_{−k})` for the chain started at stationarity,
/// by exact enumeration of the `(k+1)`-block table.
pub fn h_q_k(c: &MarkovChain, k: usize, q: QParam) -> Result<f64> {
    check_budget(c.states(), k + 1)?;
    let pi = stationary_default(c)?;
    h_q_k_from(c, &pi, k, q)
}

fn h_q_k_from(c: &MarkovChain, pi: &ProbVec, k: usize, q: QParam) -> Result<f64> {
    if k == 0 {
        return Ok(entropy_of(pi.as_slice(), q));
    }
    let t = c.block_table(pi, k + 1)?;
    let past: Vec<usize> = (0..k).collect();
    conditional_entropy_axes(&t, &[k], &past, q)
}

/// `h_q_k` at the smallest `k` where consecutive orders agree within `tol`.
pub fn h_q_inf(c: &MarkovChain, q: QParam, tol: f64) -> Result<f64> {
    let pi = stationary_default(c)?;
    let mut prev = h_q_k_from(c, &pi, 0, q)?;
    let mut before = f64::INFINITY;
    let mut k = 0;
    loop {
        if check_budget(c.states(), k + 2).is_err() {
            return Err(QitError::Size(format!(
                "enumeration budget reached at order {k} before convergence; last bracket [{prev}, {before}]"
            )));
        }
        let next = h_q_k_from(c, &pi, k + 1, q)?;
        if (prev - next).abs() <= tol {
            return Ok(prev);
        }
        before = prev;
        prev = next;
        k += 1;
    }
}

/// Powers of two up to `n_max`, plus `n_max` itself.
pub fn n_grid(n_max: usize) -> Vec<usize> {
    let mut g: Vec<usize> = std::iter::successors(Some(1usize), |&n| n.checked_mul(2))
        .take_while(|&n| n <= n_max)
        .collect();
    if g.last() != Some(&n_max) && n_max > 0 {
        g.push(n_max);
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmbRow {
    pub n: usize,
    /// Mean of `−(1/n) ln_q p(X_0^{n−1})`.
    pub block_mean: f64,
    pub block_sd: f64,
    /// Mean of `−(1/n) ln_q p(X_0^{n−1} | X_{−1})`.
    pub cond_block_mean: f64,
    pub pk_mean: f64,
    pub t3_over_n_mean: f64,
    pub cond_c1_rate: f64,
    pub cond_c2_rate: f64,
    /// Mean of `p(X_0^{n−1} | X_{−1}) / p(X_0^{n−1})`.
    #[serde(with = "crate::output::nonfinite")]
    pub ratio1_mean: f64,
    /// Mean of `p(X_0^{n−1}) / p_k(X_0^{n−1})`.
    #[serde(with = "crate::output::nonfinite")]
    pub ratio2_mean: f64,
    /// `1/((1−q) n)`, the cap on the block estimate for `q < 1`.
    #[serde(with = "crate::output::nonfinite")]
    pub bound: f64,
}

impl SmbRow {
    pub const CSV_HEADER: &'static str =
        "n,block_mean,block_sd,pk_mean,t3_over_n_mean,cond_c1_rate,cond_c2_rate,ratio1_mean,ratio2_mean,h_q_k,h_q_inf";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// Condition (c1) held on every trajectory at every grid point.
    pub c1_holds: bool,
    pub c2_holds: bool,
    /// `|mean T₃/n|` at the largest `n` is within [`T3_VANISH_TOL`].
    pub t3_vanishes: bool,
    /// Ratio expectations stay finite and grow by at most [`SUP_GROWTH_LIMIT`].
    pub sup1_bounded: bool,
    pub sup2_bounded: bool,
    /// Every block satisfied `0 <= −ln_q p < 1/(1−q)` (for `q < 1`).
    pub bounded_blocks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmbCurve {
    pub q: f64,
    pub k: usize,
    pub n_max: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub h_q_k: f64,
    #[serde(with = "crate::output::nonfinite")]
    pub h_q_inf: f64,
    pub rows: Vec<SmbRow>,
    pub flags: HypothesisFlags,
    /// Blocks that broke the boundedness invariant.
    pub bound_violations: usize,
    /// `block_mean` at `n_max` minus `h_q_inf`.
    #[serde(with = "crate::output::nonfinite")]
    pub conclusion_gap: f64,
    pub range_warning: Option<String>,
}

struct PointStats {
    block: f64,
    cond_block: f64,
    pk: f64,
    t3_over_n: f64,
    c1: bool,
    c2: bool,
    ratio1: f64,
    ratio2: f64,
    bounded: bool,
}

/// Per-grid-point statistics of one trajectory whose first symbol is `X_{−1}`.
fn trajectory_stats(
    c: &MarkovChain,
    pi: &ProbVec,
    symbols: &[usize],
    grid: &[usize],
    k: usize,
    q: QParam,
) -> Result<Vec<PointStats>> {
    let r = c.transition();
    let past = symbols[0];
    let xs = &symbols[1..];
    let ln_pi0 = ln_checked(pi[xs[0]], 1)?;
    let ln_cond0 = ln_checked(r[past][xs[0]], 1)?;
    let ln_pk0 = ln_pi0;
    let mut out = Vec::with_capacity(grid.len());
    let (mut l_block, mut l_cond, mut l_k) = (ln_pi0, ln_cond0, ln_pk0);
    // Σ ln_q of the factors of p_k: the leading k-block as one factor, then conditionals
    let mut lnq_factors = if k == 0 { ln_q_of_ln(ln_pi0, q) } else { 0.0 };
    let mut head_done = k == 0;
    let mut next = grid.iter().peekable();
    for i in 1..=xs.len() {
        // all sums now cover x_0 .. x_{i-1}
        if !head_done && i == k {
            lnq_factors += ln_q_of_ln(l_block, q);
            head_done = true;
        }
        if next.peek() == Some(&&i) {
            next.next();
            let n = i as f64;
            let block = BlockQLog::from_ln(l_block, q);
            let cond = BlockQLog::from_ln(l_cond, q);
            let pk = BlockQLog::from_ln(l_k, q);
            let factors = if head_done { lnq_factors } else { ln_q_of_ln(l_block, q) };
            out.push(PointStats {
                block: block.neg_ln_q / n,
                cond_block: cond.neg_ln_q / n,
                pk: pk.neg_ln_q / n,
                t3_over_n: (ln_q_of_ln(l_k, q) - factors) / n,
                c1: ln_cond0 >= l_block,
                c2: l_block >= l_k,
                ratio1: (l_cond - l_block).exp(),
                ratio2: (l_block - l_k).exp(),
                bounded: block.within_bound(q) && cond.within_bound(q) && pk.within_bound(q),
            });
        }
        if i == xs.len() {
            break;
        }
        let x = xs[i];
        let step = ln_checked(r[xs[i - 1]][x], i + 1)?;
        l_block += step;
        l_cond += step;
        if k == 0 {
            let m = ln_checked(pi[x], i + 1)?;
            l_k += m;
            lnq_factors += ln_q_of_ln(m, q);
        } else {
            l_k += step;
            if head_done {
                lnq_factors += ln_q_of_ln(step, q);
            }
        }
    }
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// Samples `trajectories` stationary paths of length `n_max` (plus one
/// leading symbol for `X_{−1}`) and summarizes the block estimates and the
/// equipartition hypotheses on a logarithmic n-grid.
pub fn smb_probe(
    c: &MarkovChain,
    q: QParam,
    n_max: usize,
    k: usize,
    trajectories: usize,
    seed: u64,
    workers: usize,
) -> Result<SmbCurve> {
    if n_max == 0 || trajectories == 0 {
        return Err(QitError::arg("n and trajectories must be >= 1"));
    }
    let range_warning = (!(q.value() > 0.5 && q.value() < 1.0))
        .then(|| format!("q = {} is outside (1/2, 1), where the equipartition statement is made", q.value()));
    let pi = stationary_default(c)?;
    let sc = c.with_initial(pi.clone())?;
    let grid = n_grid(n_max);
    check_budget(c.states(), k + 1)?;
    let hk = h_q_k_from(c, &pi, k, q)?;
    let hinf = h_q_inf(c, q, 1e-12)?;

    let run = |i: usize| -> Result<Vec<PointStats>> {
        let mut rng = Rng::new(seed, i as u64);
        let t = sample_trajectory(&sc, n_max + 1, &mut rng)?;
        trajectory_stats(c, &pi, &t.symbols, &grid, k, q)
    };
    let per: Vec<Vec<PointStats>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| QitError::arg(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..trajectories).into_par_iter().map(run).collect::<Result<_>>())?
    } else {
        (0..trajectories).map(run).collect::<Result<_>>()?
    };

    let tn = trajectories;
    let mut rows = Vec::with_capacity(grid.len());
    for (g, &n) in grid.iter().enumerate() {
        let col = || per.iter().map(move |s| &s[g]);
        let block_mean = mean(col().map(|s| s.block), tn);
        let var = if tn > 1 {
            col().map(|s| (s.block - block_mean).powi(2)).sum::<f64>() / (tn - 1) as f64
        } else {
            0.0
        };
        rows.push(SmbRow {
            n,
            block_mean,
            block_sd: var.sqrt(),
            cond_block_mean: mean(col().map(|s| s.cond_block), tn),
            pk_mean: mean(col().map(|s| s.pk), tn),
            t3_over_n_mean: mean(col().map(|s| s.t3_over_n), tn),
            cond_c1_rate: col().filter(|s| s.c1).count() as f64 / tn as f64,
            cond_c2_rate: col().filter(|s| s.c2).count() as f64 / tn as f64,
            ratio1_mean: mean(col().map(|s| s.ratio1), tn),
            ratio2_mean: mean(col().map(|s| s.ratio2), tn),
            bound: if q.value() < 1.0 && !q.is_shannon() {
                1.0 / (q.one_minus() * n as f64)
            } else {
                f64::INFINITY
            },
        });
    }
    let bound_violations = per.iter().flatten().filter(|s| !s.bounded).count();
    let bounded = |f: fn(&SmbRow) -> f64| {
        let first = f(&rows[0]);
        rows.iter().all(|r| f(r).is_finite() && f(r) <= SUP_GROWTH_LIMIT * first.max(f64::MIN_POSITIVE))
    };
    let last = rows.last().expect("grid is nonempty");
    let flags = HypothesisFlags {
        c1_holds: rows.iter().all(|r| r.cond_c1_rate == 1.0),
        c2_holds: rows.iter().all(|r| r.cond_c2_rate == 1.0),
        t3_vanishes: last.t3_over_n_mean.abs() <= T3_VANISH_TOL,
        sup1_bounded: bounded(|r| r.ratio1_mean),
        sup2_bounded: bounded(|r| r.ratio2_mean),
        bounded_blocks: bound_violations == 0,
    };
    Ok(SmbCurve {
        q: q.value(),
        k,
        n_max,
        trajectories,
        seed,
        h_q_k: hk,
        h_q_inf: hinf,
        conclusion_gap: last.block_mean - hinf,
        rows,
        flags,
        bound_violations,
        range_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlog::ln_q;
    use proptest::prelude::*;
    use super::Rng;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    fn chain(r: &[[f64; 2]; 2], init: &[f64]) -> MarkovChain {
        MarkovChain::new(r.iter().map(|row| row.to_vec()).collect(), pv(init)).unwrap()
    }

    const STICKY: [[f64; 2]; 2] = [[0.9, 0.1], [0.1, 0.9]];
    const FAIR: [[f64; 2]; 2] = [[0.5, 0.5], [0.5, 0.5]];
    const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn identity_chain_trajectory_is_constant() {
        let c = chain(&IDENTITY, &[1.0, 0.0]);
        let t = sample_trajectory(&c, 100, &mut Rng::new(1, 0)).unwrap();
        assert!(t.symbols.iter().all(|&x| x == 0));
        assert!(sample_trajectory(&c, 0, &mut Rng::new(1, 0)).is_err());
    }

    #[test]
    fn trajectories_are_reproducible() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let a = sample_trajectory(&c, 500, &mut Rng::new(9, 3)).unwrap();
        let b = sample_trajectory(&c, 500, &mut Rng::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.seed, a.stream), (9, 3));
    }

    #[test]
    fn empirical_transitions_match() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let t = sample_trajectory(&c, 10_000, &mut Rng::new(2024, 0)).unwrap();
        let mut counts = [[0usize; 2]; 2];
        t.symbols.windows(2).for_each(|w| counts[w[0]][w[1]] += 1);
        for i in 0..2 {
            let row: usize = counts[i].iter().sum();
            for j in 0..2 {
                assert!((counts[i][j] as f64 / row as f64 - STICKY[i][j]).abs() < 0.02);
            }
        }
    }

    fn traj<'a>(c: &'a MarkovChain, s: &[usize]) -> Trajectory<'a> {
        Trajectory {
            symbols: s.to_vec(),
            chain: c,
            seed: 0,
            stream: 0,
        }
    }

    #[test]
    fn block_log_prob_examples() {
        let c = chain(&FAIR, &[0.5, 0.5]);
        let v = block_log_prob_q(&traj(&c, &[1]), q(0.75)).unwrap();
        assert!((v - 0.636_414_338_985_141_8).abs() < 1e-15);
        let v = block_log_prob_q(&traj(&c, &[0, 1]), q(0.75)).unwrap();
        assert!((v - 1.171_572_875_253_809_9).abs() < 1e-15);
        for k in 0..=2 {
            let v = markov_k_block_log_prob_q(&traj(&c, &[0, 1]), k, q(0.75), ConditionalSource::Chain).unwrap();
            assert!((v - 1.171_572_875_253_809_9).abs() < 1e-15, "k={k}");
        }
        let d = chain(&IDENTITY, &[1.0, 0.0]);
        assert_eq!(block_log_prob_q(&traj(&d, &[0, 0, 0]), q(0.75)).unwrap(), 0.0);
    }

    #[test]
    fn impossible_trajectory_reports_position() {
        let d = chain(&IDENTITY, &[1.0, 0.0]);
        match block_log_prob_q(&traj(&d, &[0, 0, 1]), q(0.5)) {
            Err(QitError::ImpossibleTrajectory { position }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            block_log_prob_q(&traj(&d, &[1]), q(0.5)),
            Err(QitError::ImpossibleTrajectory { position: 0 })
        ));
    }

    #[test]
    fn long_blocks_do_not_underflow() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let t = sample_trajectory(&c, 100_000, &mut Rng::new(5, 0)).unwrap();
        let l = block_ln_prob(&t).unwrap();
        assert!(l.is_finite() && l < -1000.0);
        let b = BlockQLog::from_ln(l, q(0.6));
        assert!(b.within_bound(q(0.6)));
        let shannon = block_log_prob_q(&t, QParam::ONE).unwrap();
        assert_eq!(shannon, -l);
    }

    #[test]
    fn bound_check_is_strict_in_log_domain() {
        let qq = q(0.6);
        let b = BlockQLog::from_ln(-5000.0, qq);
        // the float value rounds onto the cap, the log-domain gap is still positive
        assert_eq!(b.neg_ln_q, 1.0 / 0.4);
        assert!(b.within_bound(qq));
        assert!(!BlockQLog::from_ln(f64::NEG_INFINITY, qq).within_bound(qq));
        assert!(BlockQLog::from_ln(0.0, qq).within_bound(qq));
    }

    #[test]
    fn order_one_matches_block_bit_for_bit() {
        let c = chain(&STICKY, &[0.3, 0.7]);
        let t = sample_trajectory(&c, 2000, &mut Rng::new(6, 0)).unwrap();
        let a = block_log_prob_q(&t, q(0.7)).unwrap();
        let b = markov_k_block_log_prob_q(&t, 1, q(0.7), ConditionalSource::Chain).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn empirical_source() {
        let c = chain(&FAIR, &[0.5, 0.5]);
        let t = traj(&c, &[0, 1, 0, 1]);
        // k = 0: frequencies 1/2 each
        let l0 = markov_k_block_ln_prob(&t, 0, ConditionalSource::Empirical).unwrap();
        assert!((l0 - 4.0 * 0.5f64.ln()).abs() < 1e-15);
        // k = 1: p(x_0) from 1-block counts, then deterministic alternation
        let l1 = markov_k_block_ln_prob(&t, 1, ConditionalSource::Empirical).unwrap();
        assert!((l1 - 0.5f64.ln()).abs() < 1e-15);
        assert!(markov_k_block_ln_prob(&t, 5, ConditionalSource::Empirical).is_err());
    }

    #[test]
    fn k_zero_uses_stationary_marginals() {
        let c = chain(&STICKY, &[1.0, 0.0]);
        let t = traj(&c, &[0, 0, 1]);
        let l = markov_k_block_ln_prob(&t, 0, ConditionalSource::Chain).unwrap();
        assert!((l - 3.0 * 0.5f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn t3_examples() {
        assert_eq!(t3_residual(&[0.3], q(0.5)).unwrap(), 0.0);
        let v = t3_residual(&[0.5, 0.5], q(0.75)).unwrap();
        assert!((v - 0.101_255_802_716_473_75).abs() < 1e-15);
        assert_eq!(t3_residual(&[0.2, 0.7, 0.9], QParam::ONE).unwrap().abs(), 0.0);
        assert!(t3_residual(&[0.0, 0.5], q(0.5)).is_err());
        assert!(t3_residual(&[1.5], q(0.5)).is_err());
    }

    /// Σ over subsets of size >= 2 of (1−q)^{|S|−1} Π ln_q p_i, via elementary symmetric polynomials.
    /// Subset expansion of the interaction terms and the sum of their magnitudes.
    fn t3_expansion(p: &[f64], qq: f64) -> (f64, f64) {
        let a = 1.0 - qq;
        let l: Vec<f64> = p.iter().map(|&x| ln_q(x, q(qq)).unwrap()).collect();
        let elementary = |l: &[f64]| {
            let mut e = vec![0.0; l.len() + 1];
            e[0] = 1.0;
            for &li in l {
                for j in (1..e.len()).rev() {
                    e[j] += e[j - 1] * li;
                }
            }
            e
        };
        let e = elementary(&l);
        let abs_l: Vec<f64> = l.iter().map(|x| x.abs()).collect();
        let ea = elementary(&abs_l);
        let value = (2..e.len()).map(|j| a.powi(j as i32 - 1) * e[j]).sum();
        let scale = (2..ea.len()).map(|j| a.abs().powi(j as i32 - 1) * ea[j]).sum();
        (value, scale)
    }

    proptest! {
        #[test]
        fn t3_matches_subset_expansion(
            p in prop::collection::vec(0.05f64..=1.0, 1..12), qq in 0.0f64..2.0
        ) {
            let v = t3_residual(&p, q(qq)).unwrap();
            let (expansion, scale) = t3_expansion(&p, qq);
            prop_assert!((v - expansion).abs() <= 1e-10 + 1e-13 * scale);
        }

        #[test]
        fn h_q_k_is_non_increasing(seed in any::<u64>(), m in 2usize..=3, qq in -0.5f64..=2.0) {
            let mut rng = Rng::new(seed, 0);
            let r: Vec<Vec<f64>> = (0..m).map(|_| crate::prob::random_dist(m, &mut rng).unwrap().into_vec()).collect();
            let c = MarkovChain::new(r, ProbVec::uniform(m).unwrap()).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..4 {
                let h = h_q_k(&c, k, q(qq)).unwrap();
                prop_assert!(h >= -1e-12);
                prop_assert!(h <= prev + 1e-12);
                prev = h;
            }
        }
    }

    #[test]
    fn h_q_k_examples() {
        let c = chain(&STICKY, &[1.0, 0.0]);
        let hand = -(0.9 * ln_q(0.9, q(0.75)).unwrap() + 0.1 * ln_q(0.1, q(0.75)).unwrap());
        for k in 1..5 {
            assert!((h_q_k(&c, k, q(0.75)).unwrap() - hand).abs() < 1e-12);
        }
        let iid = MarkovChain::new(vec![vec![0.2, 0.8], vec![0.2, 0.8]], pv(&[0.5, 0.5])).unwrap();
        let marg = entropy_of(&[0.2, 0.8], q(0.6));
        for k in 0..4 {
            assert!((h_q_k(&iid, k, q(0.6)).unwrap() - marg).abs() < 1e-12);
        }
        assert!(matches!(h_q_k(&c, 12, q(0.5)), Err(QitError::Size(_))));
    }

    #[test]
    fn h_q_inf_examples() {
        let c = chain(&STICKY, &[1.0, 0.0]);
        assert_eq!(h_q_inf(&c, q(0.75), 1e-12).unwrap(), h_q_k(&c, 1, q(0.75)).unwrap());
        let iid = MarkovChain::new(vec![vec![0.2, 0.8], vec![0.2, 0.8]], pv(&[0.5, 0.5])).unwrap();
        assert!((h_q_inf(&iid, q(0.6), 1e-12).unwrap() - entropy_of(&[0.2, 0.8], q(0.6))).abs() < 1e-12);
        let shannon = h_q_inf(&c, QParam::ONE, 1e-12).unwrap();
        assert!((shannon - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn grid_includes_endpoint() {
        assert_eq!(n_grid(1), vec![1]);
        assert_eq!(n_grid(8), vec![1, 2, 4, 8]);
        assert_eq!(n_grid(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(*n_grid(10_000).last().unwrap(), 10_000);
    }

    #[test]
    fn probe_deterministic_chain() {
        let c = chain(&IDENTITY, &[1.0, 0.0]);
        let curve = smb_probe(&c, q(0.75), 64, 1, 5, 1, 1).unwrap();
        for r in &curve.rows {
            assert_eq!(r.block_mean, 0.0);
            assert_eq!(r.pk_mean, 0.0);
            assert_eq!(r.t3_over_n_mean, 0.0);
            assert_eq!(r.cond_c1_rate, 1.0);
            assert_eq!(r.cond_c2_rate, 1.0);
        }
        assert!(curve.flags.c1_holds && curve.flags.c2_holds && curve.flags.t3_vanishes);
        assert!(curve.flags.bounded_blocks);
    }

    #[test]
    fn probe_is_worker_independent() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let a = smb_probe(&c, q(0.75), 300, 1, 8, 11, 1).unwrap();
        let b = smb_probe(&c, q(0.75), 300, 1, 8, 11, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probe_sub_unit_q_decays_and_flags_hypotheses() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let curve = smb_probe(&c, q(0.75), 4096, 1, 20, 3, 1).unwrap();
        let last = curve.rows.last().unwrap();
        assert!(last.block_mean <= last.bound);
        assert!(last.block_mean < 0.01 && curve.h_q_inf > 0.2);
        assert!(!curve.flags.t3_vanishes);
        assert!(!curve.flags.c1_holds || !curve.flags.t3_vanishes);
        assert!(curve.flags.bounded_blocks);
        assert!(curve.range_warning.is_none());
    }

    #[test]
    fn probe_block_estimate_matches_direct_computation() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let curve = smb_probe(&c, q(0.8), 16, 1, 1, 4, 1).unwrap();
        let sc = c.with_initial(stationary_default(&c).unwrap()).unwrap();
        let t = sample_trajectory(&sc, 17, &mut Rng::new(4, 0)).unwrap();
        for row in &curve.rows {
            let block = traj(&sc, &t.symbols[1..=row.n]);
            let direct = block_log_prob_q(&block, q(0.8)).unwrap() / row.n as f64;
            assert!((row.block_mean - direct).abs() < 1e-14);
            let seq: Vec<f64> = std::iter::once(0.5)
                .chain(t.symbols[1..=row.n].windows(2).map(|w| STICKY[w[0]][w[1]]))
                .collect();
            let t3 = t3_residual(&seq, q(0.8)).unwrap() / row.n as f64;
            assert!((row.t3_over_n_mean - t3).abs() < 1e-12, "n={}", row.n);
        }
    }

    #[test]
    fn probe_k_zero_t3_and_ratio() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        let curve = smb_probe(&c, q(0.8), 8, 0, 1, 4, 1).unwrap();
        let sc = c.with_initial(stationary_default(&c).unwrap()).unwrap();
        let t = sample_trajectory(&sc, 9, &mut Rng::new(4, 0)).unwrap();
        for row in &curve.rows {
            let seq = vec![0.5; row.n];
            let t3 = t3_residual(&seq, q(0.8)).unwrap() / row.n as f64;
            assert!((row.t3_over_n_mean - t3).abs() < 1e-12);
            let block = traj(&sc, &t.symbols[1..=row.n]);
            let lb = block_ln_prob(&block).unwrap();
            assert!((row.ratio2_mean - (lb - row.n as f64 * 0.5f64.ln()).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn probe_warns_outside_range() {
        let c = chain(&STICKY, &[0.5, 0.5]);
        assert!(smb_probe(&c, q(0.3), 8, 1, 2, 1, 1).unwrap().range_warning.is_some());
        assert!(smb_probe(&c, q(0.3), 0, 1, 2, 1, 1).is_err());
    }
}
