//! Finite Markov chains: evolution, stationary distributions, entropy-rate
//! approximants by exact block enumeration, and the q-deformed second law.

use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};
use crate::measures::{conditional_entropy_axes, entropy_of, lnq, relative_of};
use crate::prob::{json_error, random_dist, JointTable, ProbVec, Rng};
use crate::qlog::{QParam, QRange};

/// Row sums of a transition matrix must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Column sums within this of 1 count as doubly stochastic.
pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-9;
pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;
/// Largest block table (in cells) that exact enumeration will build.
pub const ENUMERATION_BUDGET: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    initial: ProbVec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl TryFrom<RawChain> for MarkovChain {
    type Error = QitError;
    fn try_from(raw: RawChain) -> Result<Self> {
        MarkovChain::new(raw.transition, ProbVec::new(raw.initial)?)
    }
}

impl From<MarkovChain> for RawChain {
    fn from(c: MarkovChain) -> Self {
        RawChain {
            transition: c.transition,
            initial: c.initial.into_vec(),
        }
    }
}

impl MarkovChain {
    /// `transition[i][j]` is the probability of moving from `i` to `j`.
    pub fn new(transition: Vec<Vec<f64>>, initial: ProbVec) -> Result<Self> {
        let m = transition.len();
        if m == 0 {
            return Err(QitError::arg("transition matrix must have at least one state"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != m {
                return Err(QitError::arg(format!(
                    "transition matrix is not square: row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(QitError::arg(format!("transition row {i} has invalid entry {v}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(QitError::arg(format!("transition row {i} sums to {s}, not 1")));
            }
        }
        if initial.len() != m {
            return Err(QitError::arg(format!(
                "initial distribution has {} states, transition matrix has {m}",
                initial.len()
            )));
        }
        Ok(MarkovChain { transition, initial })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(json_error)
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &ProbVec {
        &self.initial
    }

    /// Same transitions, different starting distribution.
    pub fn with_initial(&self, initial: ProbVec) -> Result<Self> {
        MarkovChain::new(self.transition.clone(), initial)
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        let m = self.states();
        (0..m).all(|j| {
            let s: f64 = self.transition.iter().map(|row| row[j]).sum();
            (s - 1.0).abs() <= DOUBLY_STOCHASTIC_TOL
        })
    }

    fn step(&self, d: &[f64]) -> Vec<f64> {
        let m = self.states();
        let mut out = vec![0.0; m];
        for (i, &w) in d.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &r) in out.iter_mut().zip(&self.transition[i]) {
                *o += w * r;
            }
        }
        out
    }

    /// Table of `p(x_1, ..., x_n)` for the chain started at `start`.
    pub fn block_table(&self, start: &ProbVec, n: usize) -> Result<JointTable> {
        let m = self.states();
        if n == 0 {
            return Err(QitError::arg("block length must be >= 1"));
        }
        if start.len() != m {
            return Err(QitError::arg("start distribution does not match the state count"));
        }
        check_budget(m, n)?;
        let mut data = start.as_slice().to_vec();
        for _ in 1..n {
            let mut next = Vec::with_capacity(data.len() * m);
            for (idx, &p) in data.iter().enumerate() {
                let row = &self.transition[idx % m];
                next.extend(row.iter().map(|&r| p * r));
            }
            data = next;
        }
        JointTable::new(vec![m; n], data)
    }
}

pub(crate) fn check_budget(m: usize, n: usize) -> Result<()> {
    match u32::try_from(n).ok().and_then(|e| m.checked_pow(e)) {
        Some(c) if c <= ENUMERATION_BUDGET => Ok(()),
        _ => Err(QitError::Size(format!(
            "{m}^{n} block cells exceed the enumeration budget of {ENUMERATION_BUDGET}"
        ))),
    }
}

/// One step `d · r`.
pub fn evolve(c: &MarkovChain, d: &ProbVec) -> Result<ProbVec> {
    if d.len() != c.states() {
        return Err(QitError::arg(format!(
            "distribution has {} states, chain has {}",
            d.len(),
            c.states()
        )));
    }
    ProbVec::new(c.step(d.as_slice()))
}

/// Power iteration on the lazy chain `(I + r) / 2`, started at the chain's
/// initial distribution, until `‖ψ r − ψ‖₁ <= tol`.
pub fn stationary(c: &MarkovChain, tol: f64, max_iters: usize) -> Result<ProbVec> {
    let mut d = c.initial.as_slice().to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iters {
        let next = c.step(&d);
        residual = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            return ProbVec::normalize(d);
        }
        let total: f64 = next.iter().zip(&d).map(|(a, b)| a + b).sum();
        d = next.iter().zip(&d).map(|(a, b)| (a + b) / total).collect();
    }
    Err(QitError::Convergence {
        what: "stationary distribution",
        iterations: max_iters,
        residual,
        last: d,
    })
}

/// Stationary distribution with the default tolerance and iteration cap.
pub fn stationary_default(c: &MarkovChain) -> Result<ProbVec> {
    stationary(c, STATIONARY_TOL, STATIONARY_MAX_ITERS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRates {
    /// `(1/n) H_q(X_1, ..., X_n)`
    pub block_rate: f64,
    /// `(1/n) Σ_{i<=n} H_q(X_i | X_{i-1}, ..., X_1)`
    pub cond_rate: f64,
    /// `H_q(X_n | X_{n-1}, ..., X_1)`
    pub last_conditional: f64,
}

/// Finite-`n` entropy-rate approximants of the chain started at its initial
/// distribution, by exact enumeration of the `n`-block table.
pub fn entropy_rate_approximants(c: &MarkovChain, n: usize, q: QParam) -> Result<EntropyRates> {
    let t = c.block_table(&c.initial, n)?;
    let mut sum = 0.0;
    let mut last = 0.0;
    for i in 0..n {
        let past: Vec<usize> = (0..i).collect();
        last = conditional_entropy_axes(&t, &[i], &past, q)?;
        sum += last;
    }
    Ok(EntropyRates {
        block_rate: entropy_of(t.data(), q) / n as f64,
        cond_rate: sum / n as f64,
        last_conditional: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondLawRow {
    pub step: usize,
    /// `H_q(ψ_n)`
    pub h_q: f64,
    /// `H_q(ψ_{n+1}) − H_q(ψ_n)`
    pub delta_h: f64,
    /// Cross term against the uniform reference trajectory.
    pub t_q: f64,
    /// `delta_h · [1 + (1−q) ln_q m]`
    pub lhs: f64,
    /// `lhs − t_q`
    pub slack: f64,
    /// `(1−q) Σ p(x_n, x_{n+1}) ln_q[p(x_{n+1}) m] ln_q[p(x_n, x_{n+1}) m]`
    pub t_q_statement: f64,
    /// `D_q(ψ_n ‖ s_n) − D_q(ψ_{n+1} ‖ s_{n+1})` for the uniform-started reference `s`.
    pub rel_entropy_drop: f64,
}

impl SecondLawRow {
    pub const CSV_HEADER: &'static str = "step,H_q,delta_H,T_q,lhs,slack";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondLawReport {
    pub q: f64,
    pub states: usize,
    /// The chain is doubly stochastic, so the uniform reference is stationary.
    pub applicable: bool,
    pub rows: Vec<SecondLawRow>,
}

impl SecondLawReport {
    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Iterates `ψ_{n+1} = ψ_n r` from the initial distribution for `steps`
/// steps and records the second-law quantities of each transition.
pub fn second_law_report(c: &MarkovChain, q: QParam, steps: usize) -> Result<SecondLawReport> {
    q.require(QRange::UNIT, "second-law report")?;
    let m = c.states();
    let bracket = 1.0 + q.one_minus() * lnq(m as f64, q);
    let mut rows = Vec::with_capacity(steps);
    let mut psi = c.initial.as_slice().to_vec();
    let mut s = vec![1.0 / m as f64; m];
    for step in 0..steps {
        let psi_next = c.step(&psi);
        let s_next = c.step(&s);
        let (h0, h1) = (entropy_of(&psi, q), entropy_of(&psi_next, q));
        let mut cross = 0.0;
        let mut cross_statement = 0.0;
        for a in 0..m {
            for b in 0..m {
                let p = psi[a] * c.transition[a][b];
                if p <= 0.0 {
                    continue;
                }
                let forward = psi_next[b] / s_next[b];
                let backward = (psi[a] / s[a]) / forward;
                cross += p * lnq(forward, q) * lnq(backward, q);
                cross_statement += p * lnq(psi_next[b] * m as f64, q) * lnq(p * m as f64, q);
            }
        }
        let t_q = q.one_minus() * cross;
        let lhs = (h1 - h0) * bracket;
        rows.push(SecondLawRow {
            step,
            h_q: h0,
            delta_h: h1 - h0,
            t_q,
            lhs,
            slack: lhs - t_q,
            t_q_statement: q.one_minus() * cross_statement,
            rel_entropy_drop: relative_of(&psi, &s, q) - relative_of(&psi_next, &s_next, q),
        });
        psi = psi_next;
        s = s_next;
    }
    Ok(SecondLawReport {
        q: q.value(),
        states: m,
        applicable: c.is_doubly_stochastic(),
        rows,
    })
}

/// Random symmetric doubly stochastic matrix: a Dirichlet mixture of random
/// permutation matrices, averaged with its transpose.
pub fn random_doubly_stochastic(m: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(QitError::arg("state count must be >= 1"));
    }
    let k = rng.int_in(1, m + 1);
    let weights = random_dist(k, rng)?;
    let mut p = vec![vec![0.0; m]; m];
    for &w in weights.as_slice() {
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            perm.swap(i, rng.int_in(0, i));
        }
        for (i, &j) in perm.iter().enumerate() {
            p[i][j] += w;
        }
    }
    let mut sym = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            sym[i][j] = 0.5 * (p[i][j] + p[j][i]);
        }
    }
    for row in &mut sym {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(sym)
}

/// Random doubly stochastic chain with a random initial distribution.
pub fn random_doubly_stochastic_chain(m: usize, rng: &mut Rng) -> Result<MarkovChain> {
    let r = random_doubly_stochastic(m, rng)?;
    MarkovChain::new(r, random_dist(m, rng)?)
}
