//! Maximum q-entropy distribution under a normalization and a linear mean
//! constraint, solved by damped Newton on the two Lagrange multipliers.

use serde::{Deserialize, Serialize};

use crate::error::{QitError, Result};
use crate::measures::{entropy_of, lnq};
use crate::prob::{ProbVec, Rng};
use crate::qlog::{exp_q_cutoff, ln_q, QParam};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const MAX_HALVINGS: usize = 60;
pub const SAMPLER_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntProblem {
    levels: Vec<f64>,
    mean: f64,
    q: QParam,
}

impl MaxEntProblem {
    pub fn new(levels: Vec<f64>, mean: f64, q: QParam) -> Result<Self> {
        if levels.iter().any(|e| !e.is_finite()) || !mean.is_finite() {
            return Err(QitError::arg("levels and target mean must be finite"));
        }
        let (lo, hi) = min_max(&levels);
        if levels.len() < 2 || lo == hi {
            return Err(QitError::arg("at least two distinct levels are required"));
        }
        if !(lo..=hi).contains(&mean) {
            return Err(QitError::arg(format!(
                "target mean {mean} is infeasible: levels span [{lo}, {hi}]"
            )));
        }
        if mean == lo || mean == hi {
            return Err(QitError::arg(format!(
                "target mean {mean} sits on the edge of [{lo}, {hi}]: the maximizer puts all mass on the extreme levels and has no finite multipliers"
            )));
        }
        if q.value().is_nan() || q.value() >= 2.0 {
            return Err(QitError::QOutOfRange {
                q: q.value(),
                range: crate::qlog::QRange::half_open(f64::NEG_INFINITY, 2.0),
                what: "maximum q-entropy solve".into(),
            });
        }
        Ok(MaxEntProblem { levels, mean, q })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn q(&self) -> QParam {
        self.q
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub normalization: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntSolution {
    pub p: ProbVec,
    pub lambda: f64,
    pub mu: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// `p_i = exp_q((-λ - μ e_i) / (2 - q))` with the cutoff for `q < 1`;
/// `None` when an argument leaves the domain for `q > 1`.
fn weights(e: &[f64], lambda: f64, mu: f64, q: QParam) -> Option<Vec<f64>> {
    let k = 2.0 - q.value();
    e.iter()
        .map(|&x| exp_q_cutoff((-lambda - mu * x) / k, q).ok().filter(|p| p.is_finite()))
        .collect()
}

fn system(p: &[f64], e: &[f64], target: f64) -> [f64; 2] {
    let s: f64 = p.iter().sum();
    let m: f64 = p.iter().zip(e).map(|(a, b)| a * b).sum();
    [s - 1.0, m - target]
}

fn norm_inf(f: [f64; 2]) -> f64 {
    f[0].abs().max(f[1].abs())
}

/// Solves for the q-exponential maximizer. Levels are shifted and scaled to
/// `[0, 1]` internally and the multipliers mapped back.
pub fn solve(problem: &MaxEntProblem, tol: f64, max_iters: usize) -> Result<MaxEntSolution> {
    let q = problem.q;
    let (lo, hi) = min_max(&problem.levels);
    let scale = hi - lo;
    let e: Vec<f64> = problem.levels.iter().map(|x| (x - lo) / scale).collect();
    let target = (problem.mean - lo) / scale;
    let k = 2.0 - q.value();
    let m = e.len();

    let mut x = [-k * ln_q(1.0 / m as f64, q)?, 0.0];
    let mut p = weights(&e, x[0], x[1], q).ok_or_else(|| QitError::arg("initial point outside the domain"))?;
    let mut f = system(&p, &e, target);
    // residuals in the caller's units
    let original = |f: [f64; 2]| [f[0], lo * f[0] + scale * f[1]];
    let mut iterations = 0;
    while norm_inf(original(f)) > tol {
        if iterations == max_iters {
            return Err(non_convergence(iterations, original(f), x, lo, scale));
        }
        iterations += 1;
        // dp_i/da_i = p_i^q, da_i/dλ = -1/k, da_i/dμ = -e_i/k
        let (mut j00, mut j01, mut j11) = (0.0, 0.0, 0.0);
        for (&pi, &ei) in p.iter().zip(&e) {
            if pi > 0.0 {
                let d = (q.value() * pi.ln()).exp();
                j00 += d;
                j01 += d * ei;
                j11 += d * ei * ei;
            }
        }
        let (j00, j01, j11) = (-j00 / k, -j01 / k, -j11 / k);
        let det = j00 * j11 - j01 * j01;
        let step = if det.abs() > f64::MIN_POSITIVE && det.is_finite() {
            [(-f[0] * j11 + f[1] * j01) / det, (-f[1] * j00 + f[0] * j01) / det]
        } else if j00 != 0.0 {
            [-f[0] / j00, 0.0]
        } else {
            [1.0, 0.0]
        };
        let current = norm_inf(f);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = [x[0] + t * step[0], x[1] + t * step[1]];
            if let Some(pc) = weights(&e, cand[0], cand[1], q) {
                let fc = system(&pc, &e, target);
                if norm_inf(fc) < current {
                    x = cand;
                    p = pc;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(non_convergence(iterations, original(f), x, lo, scale));
        }
    }

    let mu = x[1] / scale;
    let lambda = x[0] - mu * lo;
    let total: f64 = p.iter().sum();
    let normalization = total - 1.0;
    let mean_res = p.iter().zip(&problem.levels).map(|(a, b)| a * b).sum::<f64>() - problem.mean;
    Ok(MaxEntSolution {
        p: ProbVec::new(p)?,
        lambda,
        mu,
        residuals: Residuals {
            normalization,
            mean: mean_res,
        },
        iterations,
    })
}

fn non_convergence(iterations: usize, f: [f64; 2], x: [f64; 2], lo: f64, scale: f64) -> QitError {
    let mu = x[1] / scale;
    QitError::Convergence {
        what: "maximum q-entropy Newton solve",
        iterations,
        residual: norm_inf(f),
        last: vec![x[0] - mu * lo, mu, f[0], f[1]],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// `min_f H_q(p) − H_q(f)` over the sampled feasible `f`.
    #[serde(with = "crate::output::nonfinite")]
    pub min_gap: f64,
    /// Minimum of the closed-form gap `Σ p_i^{1−q} f_i ln_q(f_i / p_i)`.
    #[serde(with = "crate::output::nonfinite")]
    pub min_formula_gap: f64,
    /// Samples where the direct and closed-form gaps differ by more than 1e-9.
    pub formula_mismatches: usize,
    pub samples: usize,
}

/// Closed-form gap `Σ [1 + (1−q) ln_q p_i] f_i ln_q(f_i / p_i)`, written as
/// `Σ f_i (f_i^{1−q} − p_i^{1−q}) / (1−q)` so cut-off levels stay finite.
pub fn gap_formula(p: &[f64], f: &[f64], q: QParam) -> f64 {
    p.iter()
        .zip(f)
        .filter(|(_, &fi)| fi > 0.0)
        .map(|(&pi, &fi)| {
            if q.is_shannon() {
                fi * (fi / pi).ln()
            } else {
                let a = q.one_minus();
                let pa = if pi > 0.0 { (a * pi.ln()).exp() } else { 0.0 };
                fi * ((a * fi.ln()).exp() - pa) / a
            }
        })
        .sum()
}

/// Draws a feasible distribution: a flat-Dirichlet point orthogonally
/// projected onto `{Σ f = 1, Σ f e = mean}`, rejected while any coordinate is negative.
pub fn sample_feasible(problem: &MaxEntProblem, rng: &mut Rng) -> Result<Vec<f64>> {
    let e = &problem.levels;
    let n = e.len() as f64;
    let se: f64 = e.iter().sum();
    let see: f64 = e.iter().map(|x| x * x).sum();
    let det = n * see - se * se;
    for _ in 0..SAMPLER_RETRIES {
        let mut f: Vec<f64> = (0..e.len()).map(|_| rng.exp1()).collect();
        let s: f64 = f.iter().sum();
        f.iter_mut().for_each(|v| *v /= s);
        let r0 = f.iter().sum::<f64>() - 1.0;
        let r1 = f.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() - problem.mean;
        // (A Aᵀ)⁻¹ r with A = [1ᵀ; eᵀ]
        let c0 = (see * r0 - se * r1) / det;
        let c1 = (n * r1 - se * r0) / det;
        f.iter_mut().zip(e).for_each(|(v, x)| *v -= c0 + c1 * x);
        if f.iter().all(|&v| v >= 0.0) {
            return Ok(f);
        }
    }
    Err(QitError::Sampling(format!(
        "no nonnegative feasible point after {SAMPLER_RETRIES} projected draws"
    )))
}

/// Compares the solution's q-entropy with `trials` random feasible distributions.
pub fn verify_optimality(
    sol: &MaxEntSolution,
    problem: &MaxEntProblem,
    trials: usize,
    rng: &mut Rng,
) -> Result<OptimalityReport> {
    let q = problem.q;
    let p = sol.p.as_slice();
    let hp = entropy_of(p, q);
    let mut report = OptimalityReport {
        min_gap: f64::INFINITY,
        min_formula_gap: f64::INFINITY,
        formula_mismatches: 0,
        samples: trials,
    };
    for _ in 0..trials {
        let f = sample_feasible(problem, rng)?;
        let gap = hp - entropy_of(&f, q);
        let formula = gap_formula(p, &f, q);
        if (gap - formula).abs() > 1e-9 {
            report.formula_mismatches += 1;
        }
        report.min_gap = report.min_gap.min(gap);
        report.min_formula_gap = report.min_formula_gap.min(formula);
    }
    Ok(report)
}

/// `[1 − (2−q) p_i^{1−q}] / (1−q) − (λ − 1) − μ e_i`, which vanishes at a
/// stationary point of the Lagrangian wherever `p_i > 0`.
pub fn stationarity_residuals(sol: &MaxEntSolution, problem: &MaxEntProblem) -> Vec<f64> {
    let q = problem.q;
    sol.p
        .as_slice()
        .iter()
        .zip(&problem.levels)
        .map(|(&pi, &e)| {
            if pi <= 0.0 {
                return 0.0;
            }
            let lhs = if q.is_shannon() {
                -1.0 - pi.ln()
            } else {
                -(1.0 + (2.0 - q.value()) * lnq(pi, q))
            };
            lhs - (sol.lambda - 1.0) - sol.mu * e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mean: f64,
    pub lambda: f64,
    pub mu: f64,
    pub h_q: f64,
    pub iterations: usize,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "mean,lambda,mu,h_q,iterations";
}

/// Solves at `points` target means evenly spaced strictly inside the level range.
pub fn mean_sweep(levels: &[f64], q: QParam, points: usize, tol: f64, max_iters: usize) -> Result<Vec<SweepRow>> {
    let (lo, hi) = min_max(levels);
    (1..=points)
        .map(|i| {
            let mean = lo + (hi - lo) * i as f64 / (points + 1) as f64;
            let problem = MaxEntProblem::new(levels.to_vec(), mean, q)?;
            let sol = solve(&problem, tol, max_iters)?;
            Ok(SweepRow {
                mean,
                lambda: sol.lambda,
                mu: sol.mu,
                h_q: entropy_of(sol.p.as_slice(), q),
                iterations: sol.iterations,
            })
        })
        .collect()
}
