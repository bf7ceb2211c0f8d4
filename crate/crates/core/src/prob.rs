//! Discrete distributions, joint tables and the seeded generator used by
//! the fuzz harness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{QitError, Result};

/// Largest accepted deviation of a total mass from 1 at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn check_entries(p: &[f64], what: &str) -> Result<f64> {
    if p.is_empty() {
        return Err(QitError::arg(format!("{what} must have at least one entry")));
    }
    let mut sum = 0.0;
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(QitError::arg(format!("{what} entry {i} is {x}; entries must be finite and >= 0")));
        }
        sum += x;
    }
    Ok(sum)
}

fn check_total(sum: f64, what: &str) -> Result<()> {
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(QitError::arg(format!(
            "{what} sums to {sum}, which differs from 1 by more than {NORMALIZATION_TOL:e}"
        )));
    }
    Ok(())
}

/// A finite probability distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProbVec")]
pub struct ProbVec {
    p: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbVec {
    p: Vec<f64>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

impl TryFrom<RawProbVec> for ProbVec {
    type Error = QitError;
    fn try_from(raw: RawProbVec) -> Result<Self> {
        let pv = ProbVec::new(raw.p)?;
        match raw.labels {
            Some(l) => pv.with_labels(l),
            None => Ok(pv),
        }
    }
}

impl ProbVec {
    /// Validates without rescaling.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum = check_entries(&p, "distribution")?;
        check_total(sum, "distribution")?;
        Ok(ProbVec { p, labels: None })
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalize(weights: Vec<f64>) -> Result<Self> {
        let sum = check_entries(&weights, "weights")?;
        if sum <= 0.0 {
            return Err(QitError::arg("weights have zero total mass"));
        }
        Ok(ProbVec {
            p: weights.into_iter().map(|w| w / sum).collect(),
            labels: None,
        })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(QitError::arg("cardinality must be >= 1"));
        }
        Ok(ProbVec {
            p: vec![1.0 / m as f64; m],
            labels: None,
        })
    }

    /// Point mass at `index`.
    pub fn degenerate(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(QitError::arg(format!("index {index} out of range for cardinality {m}")));
        }
        let mut p = vec![0.0; m];
        p[index] = 1.0;
        Ok(ProbVec { p, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p.len() {
            return Err(QitError::arg(format!(
                "{} labels for {} probabilities",
                labels.len(),
                self.p.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.p.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(json_error)
    }
}

impl std::ops::Index<usize> for ProbVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.p[i]
    }
}

pub(crate) fn json_error(e: serde_json::Error) -> QitError {
    if e.line() > 0 {
        QitError::Parse(format!("{e} (line {}, column {})", e.line(), e.column()))
    } else {
        QitError::Parse(e.to_string())
    }
}

/// A dense nonnegative table of unit mass, stored row-major.
///
/// Rank 2 and 3 are the usual cases; block distributions of stochastic
/// processes use higher ranks. A rank-0 table (the empty marginal) holds a
/// single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl JointTable {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(QitError::arg(format!("invalid table shape {shape:?}")));
        }
        let cells: usize = shape.iter().product();
        if cells != data.len() {
            return Err(QitError::arg(format!(
                "shape {shape:?} needs {cells} cells, got {}",
                data.len()
            )));
        }
        let sum = check_entries(&data, "table")?;
        check_total(sum, "table")?;
        Ok(JointTable { shape, data })
    }

    /// Rank-2 table from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(QitError::arg("ragged rows"));
        }
        JointTable::new(vec![rows.len(), cols], rows.concat())
    }

    /// Rescales a nonnegative table to unit mass.
    pub fn normalize(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let sum = check_entries(&weights, "weights")?;
        if sum <= 0.0 {
            return Err(QitError::arg("weights have zero total mass"));
        }
        JointTable::new(shape, weights.into_iter().map(|w| w / sum).collect())
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let st = strides(&self.shape);
        self.data[index.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for (k, &a) in axes.iter().enumerate() {
            if a >= self.rank() {
                return Err(QitError::arg(format!("axis {a} out of range for rank {}", self.rank())));
            }
            if axes[..k].contains(&a) {
                return Err(QitError::arg(format!("axis {a} repeated")));
            }
        }
        Ok(())
    }

    /// Marginal table over `axes`, with axes in the order given.
    ///
    /// An empty `axes` gives the rank-0 table holding the total mass.
    pub fn project(&self, axes: &[usize]) -> Result<JointTable> {
        self.check_axes(axes)?;
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let out_strides = strides(&out_shape);
        let cells: usize = out_shape.iter().product();
        let mut out = vec![0.0; cells];
        // stride in the output for each input axis (0 for summed-out axes)
        let mut map = vec![0usize; self.rank()];
        for (k, &a) in axes.iter().enumerate() {
            map[a] = out_strides[k];
        }
        let mut idx = vec![0usize; self.rank()];
        let mut o = 0usize;
        for &v in &self.data {
            out[o] += v;
            // odometer increment over the input index
            for ax in (0..self.rank()).rev() {
                idx[ax] += 1;
                o += map[ax];
                if idx[ax] < self.shape[ax] {
                    break;
                }
                o -= map[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
        Ok(JointTable {
            shape: out_shape,
            data: out,
        })
    }

    /// Reorders axes so that output axis `k` is input axis `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<JointTable> {
        if order.len() != self.rank() {
            return Err(QitError::arg("permutation must list every axis"));
        }
        self.project(order)
    }

    pub fn marginal(&self, axis: usize) -> Result<ProbVec> {
        let t = self.project(&[axis])?;
        Ok(ProbVec {
            p: t.data,
            labels: None,
        })
    }

    /// The table read as one distribution over all cells.
    pub fn flatten(&self) -> ProbVec {
        ProbVec {
            p: self.data.clone(),
            labels: None,
        }
    }

    /// `p(rest | given)`: one slice per value of `given_axis`, each slice
    /// being the remaining axes in row-major order. Zero-mass slices are `None`.
    pub fn conditional(&self, given_axis: usize) -> Result<ConditionalTable> {
        self.check_axes(&[given_axis])?;
        let mut order = vec![given_axis];
        order.extend((0..self.rank()).filter(|&a| a != given_axis));
        let t = self.permute(&order)?;
        let inner = t.data.len() / self.shape[given_axis];
        let slices = t
            .data
            .chunks(inner)
            .map(|row| {
                let mass: f64 = row.iter().sum();
                (mass > 0.0).then(|| row.iter().map(|v| v / mass).collect())
            })
            .collect();
        Ok(ConditionalTable {
            given_axis,
            slice_shape: order[1..].iter().map(|&a| self.shape[a]).collect(),
            slices,
        })
    }

    /// Parses `{"table": [[...], ...]}` with any nesting depth >= 1.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(json_error)?;
        Self::from_json_value(&v)
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let table = v
            .get("table")
            .ok_or_else(|| QitError::Parse("expected an object with a \"table\" field".into()))?;
        let mut shape = Vec::new();
        let mut cur = table;
        while let Value::Array(items) = cur {
            shape.push(items.len());
            match items.first() {
                Some(first) => cur = first,
                None => break,
            }
        }
        let mut data = Vec::new();
        flatten_nested(table, &shape, 0, &mut data)?;
        JointTable::new(shape, data)
    }

    pub fn to_json_value(&self) -> Value {
        fn build(data: &[f64], shape: &[usize]) -> Value {
            if shape.len() == 1 {
                return Value::from(data.to_vec());
            }
            let inner = data.len() / shape[0];
            Value::Array(data.chunks(inner).map(|c| build(c, &shape[1..])).collect())
        }
        serde_json::json!({ "table": build(&self.data, &self.shape) })
    }
}

fn flatten_nested(v: &Value, shape: &[usize], depth: usize, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Array(items) => {
            if depth >= shape.len() || items.len() != shape[depth] {
                return Err(QitError::Parse(format!("ragged table at depth {depth}")));
            }
            items.iter().try_for_each(|it| flatten_nested(it, shape, depth + 1, out))
        }
        Value::Number(n) if depth == shape.len() => {
            out.push(n.as_f64().ok_or_else(|| QitError::Parse("non-finite number".into()))?);
            Ok(())
        }
        _ => Err(QitError::Parse(format!("unexpected value at depth {depth}: {v}"))),
    }
}

/// `p(rest | given)` as produced by [`JointTable::conditional`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub given_axis: usize,
    pub slice_shape: Vec<usize>,
    /// `None` marks a conditioning value of zero probability.
    pub slices: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn slice(&self, given: usize) -> Option<&[f64]> {
        self.slices.get(given).and_then(|s| s.as_deref())
    }
}

/// Outer product `t[i][j] = p_i r_j`.
pub fn product_dist(p: &ProbVec, r: &ProbVec) -> JointTable {
    let data = p
        .as_slice()
        .iter()
        .flat_map(|&a| r.as_slice().iter().map(move |&b| a * b))
        .collect();
    JointTable {
        shape: vec![p.len(), r.len()],
        data,
    }
}

/// Deterministic generator keyed by `(seed, stream)`.
///
/// ChaCha8 with the stream id in the cipher nonce, so distinct streams of
/// one seed never overlap and every `(seed, stream)` pair replays exactly.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.inner)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        rand::Rng::random_range(&mut self.inner, lo..=hi)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    /// Index drawn from the weights in `p` (which need not be exactly normalized).
    pub fn categorical(&mut self, p: &[f64]) -> usize {
        let total: f64 = p.iter().sum();
        let u = self.uniform() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in p.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn dirichlet_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.exp1()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Flat-Dirichlet draw on the `m`-simplex.
pub fn random_dist(m: usize, rng: &mut Rng) -> Result<ProbVec> {
    if m == 0 {
        return Err(QitError::arg("cardinality must be >= 1"));
    }
    Ok(ProbVec {
        p: dirichlet_weights(m, rng),
        labels: None,
    })
}

/// Flat-Dirichlet draw over all cells of a table of the given shape.
pub fn random_joint(shape: &[usize], rng: &mut Rng) -> Result<JointTable> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(QitError::arg(format!("invalid table shape {shape:?}")));
    }
    let cells = shape.iter().product();
    Ok(JointTable {
        shape: shape.to_vec(),
        data: dirichlet_weights(cells, rng),
    })
}

/// Rank-3 table `p(x)p(y|x)p(z|y)` with every factor a flat-Dirichlet draw,
/// so `X -> Y -> Z` is Markov by construction.
pub fn random_markov_triple(shape: [usize; 3], rng: &mut Rng) -> Result<JointTable> {
    let [nx, ny, nz] = shape;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(QitError::arg(format!("invalid table shape {shape:?}")));
    }
    let px = dirichlet_weights(nx, rng);
    let py_x: Vec<Vec<f64>> = (0..nx).map(|_| dirichlet_weights(ny, rng)).collect();
    let pz_y: Vec<Vec<f64>> = (0..ny).map(|_| dirichlet_weights(nz, rng)).collect();
    let mut data = Vec::with_capacity(nx * ny * nz);
    for (wx, row) in px.iter().zip(&py_x) {
        for (wy, pz) in row.iter().zip(&pz_y) {
            data.extend(pz.iter().map(|v| wx * wy * v));
        }
    }
    Ok(JointTable {
        shape: shape.to_vec(),
        data,
    })
}
