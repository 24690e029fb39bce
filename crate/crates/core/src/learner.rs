//! Binary RBF support-vector classifier and repeated stratified CV.
//!
//! Training solves the soft-margin dual
//!
//! ```text
//! min ½ αᵀQα - Σα   s.t.  0 ≤ α ≤ C,  yᵀα = 0,   Q_ij = y_i y_j k(x_i, x_j)
//! ```
//!
//! by SMO with second-order working-set selection. Label 1 maps to `y = +1`
//! and label 0 to `y = -1`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::FeatureMatrix;
use crate::trajectory::derive_seed;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_C: f64 = 1.0;
const TAU: f64 = 1e-12;

/// `exp(-γ ‖x - y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma_kernel: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(gamma_kernel > 0.0) {
        return Err(Error::invalid(format!("gamma_kernel must be > 0, got {gamma_kernel}")));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma_kernel * d2).exp())
}

/// Kernel width: a fixed value, or a multiple of `1 / (F · Var[X])` over
/// the standardized training matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelGamma {
    Scale(f64),
    Fixed(f64),
}

impl Default for KernelGamma {
    fn default() -> Self {
        KernelGamma::Scale(1.0)
    }
}

impl fmt::Display for KernelGamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelGamma::Scale(k) if *k == 1.0 => write!(f, "scale"),
            KernelGamma::Scale(k) => write!(f, "{k}*scale"),
            KernelGamma::Fixed(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for KernelGamma {
    type Err = Error;

    /// `scale`, `<k>*scale`, or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("gamma_kernel {s:?}: expected 'scale', '<k>*scale' or a number > 0"));
        let positive = |v: f64| if v > 0.0 && v.is_finite() { Ok(v) } else { Err(bad()) };
        if s == "scale" {
            return Ok(KernelGamma::Scale(1.0));
        }
        if let Some(k) = s.strip_suffix("*scale") {
            return Ok(KernelGamma::Scale(positive(k.parse().map_err(|_| bad())?)?));
        }
        Ok(KernelGamma::Fixed(positive(s.parse().map_err(|_| bad())?)?))
    }
}

impl TryFrom<String> for KernelGamma {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelGamma> for String {
    fn from(g: KernelGamma) -> String {
        g.to_string()
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub c_reg: f64,
    pub gamma: KernelGamma,
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
}

impl Default for SvcParams {
    fn default() -> Self {
        SvcParams {
            c_reg: DEFAULT_C,
            gamma: KernelGamma::default(),
            tol: DEFAULT_TOL,
        }
    }
}

impl SvcParams {
    pub fn new(c_reg: f64, gamma: KernelGamma) -> Self {
        SvcParams {
            c_reg,
            gamma,
            ..Default::default()
        }
    }
}

/// Per-feature affine map fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(fm: &FeatureMatrix) -> Self {
        let (n, f) = (fm.n_samples() as f64, fm.n_features());
        let mut mean = vec![0.0; f];
        for i in 0..fm.n_samples() {
            for (m, v) in mean.iter_mut().zip(fm.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for i in 0..fm.n_samples() {
            for ((s, v), m) in var.iter_mut().zip(fm.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out);
        out
    }
}

/// Solution of the dual problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: `f(x) = Σ α_i y_i k(x_i, x) + bias`.
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Final maximal KKT violation `max_up(-yG) - min_low(-yG)`.
    pub violation: f64,
}

/// Row-wise kernel access for [`solve`].
pub trait KernelRows {
    fn len(&self) -> usize;
    /// Writes `k(x_i, x_t)` for every `t` into `out`.
    fn row(&self, i: usize, out: &mut [f64]);
    fn diag(&self, i: usize) -> f64;
}

/// A dense precomputed kernel matrix.
pub struct DenseKernel<'a> {
    pub n: usize,
    pub k: &'a [f64],
}

impl KernelRows for DenseKernel<'_> {
    fn len(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.k[i * self.n..(i + 1) * self.n]);
    }

    fn diag(&self, i: usize) -> f64 {
        self.k[i * self.n + i]
    }
}

/// RBF rows over a row-major matrix, via `‖x‖² + ‖y‖² - 2x·y`.
struct RbfRows<'a> {
    x: &'a [f64],
    f: usize,
    norms: Vec<f64>,
    gamma: f64,
}

impl<'a> RbfRows<'a> {
    fn new(x: &'a [f64], f: usize, gamma: f64) -> Self {
        let norms = x.chunks_exact(f).map(|r| dot(r, r)).collect();
        RbfRows { x, f, norms, gamma }
    }
}

impl KernelRows for RbfRows<'_> {
    fn len(&self) -> usize {
        self.norms.len()
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        let xi = &self.x[i * self.f..(i + 1) * self.f];
        for (t, (o, xt)) in out.iter_mut().zip(self.x.chunks_exact(self.f)).enumerate() {
            let d2 = if t == i {
                0.0
            } else {
                (self.norms[i] + self.norms[t] - 2.0 * dot(xi, xt)).max(0.0)
            };
            *o = (-self.gamma * d2).exp();
        }
    }

    fn diag(&self, _: usize) -> f64 {
        1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorize
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lazily filled kernel-row cache.
struct RowCache<'a, K: KernelRows> {
    kernel: &'a K,
    rows: Vec<Option<Box<[f64]>>>,
}

impl<'a, K: KernelRows> RowCache<'a, K> {
    fn new(kernel: &'a K) -> Self {
        RowCache {
            kernel,
            rows: vec![None; kernel.len()],
        }
    }

    fn get(&mut self, i: usize) -> &[f64] {
        let n = self.kernel.len();
        let kernel = self.kernel;
        self.rows[i].get_or_insert_with(|| {
            let mut r = vec![0.0; n].into_boxed_slice();
            kernel.row(i, &mut r);
            r
        })
    }
}

/// SMO on the dual with labels `y ∈ {-1, +1}`.
///
/// Working pair: `i` maximizes the violation `-y_i G_i` over the up set, `j`
/// maximizes the second-order decrease over the low set. Fails after
/// `10⁴ · n` iterations with the remaining violation.
pub fn solve<K: KernelRows>(kernel: &K, y: &[f64], c: f64, tol: f64) -> Result<DualSolution> {
    let n = kernel.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !(c > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid(format!("need C > 0 and tol > 0, got C = {c}, tol = {tol}")));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::Learner("training data must contain both classes".into()));
    }
    let qd: Vec<f64> = (0..n).map(|i| kernel.diag(i)).collect();
    let mut cache = RowCache::new(kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = 10_000usize.saturating_mul(n).max(10_000);
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let violation = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            let ki = cache.get(i);
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let a = qd[i] + qd[t] - 2.0 * ki[t];
                    let gain = -(b * b) / if a > 0.0 { a } else { TAU };
                    if gain <= best {
                        best = gain;
                        j = t;
                    }
                }
            }
        }
        let viol = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || viol < tol {
            break viol.max(0.0);
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                what: "SMO dual solver",
                residual: viol,
            });
        }
        iterations += 1;

        let kij = cache.get(i)[j];
        let (ai, aj) = (alpha[i], alpha[j]);
        // K_ii + K_jj - 2 K_ij in both branches since Q_ij = y_i y_j K_ij
        let quad = positive(qd[i] + qd[j] - 2.0 * kij);
        let (mut ni, mut nj);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ni = ai + delta;
            nj = aj + delta;
            if diff > 0.0 {
                if nj < 0.0 {
                    nj = 0.0;
                    ni = diff;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = -diff;
            }
            if diff > 0.0 {
                if ni > c {
                    ni = c;
                    nj = c - diff;
                }
            } else if nj > c {
                nj = c;
                ni = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ni = ai - delta;
            nj = aj + delta;
            if sum > c {
                if ni > c {
                    ni = c;
                    nj = sum - c;
                }
            } else if nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if sum > c {
                if nj > c {
                    nj = c;
                    ni = sum - c;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
        }
        alpha[i] = ni;
        alpha[j] = nj;
        let (dai, daj) = ((ni - ai) * y[i], (nj - aj) * y[j]);
        {
            let ki = cache.get(i);
            for t in 0..n {
                grad[t] += y[t] * ki[t] * dai;
            }
        }
        let kj = cache.get(j);
        for t in 0..n {
            grad[t] += y[t] * kj[t] * daj;
        }
    };

    // objective ½αᵀQα - Σα = ½ Σ α_i (G_i - 1)
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(DualSolution {
        bias: -offset(&alpha, &grad, y, c),
        alpha,
        objective,
        iterations,
        violation,
    })
}

fn positive(q: f64) -> f64 {
    if q > 0.0 {
        q
    } else {
        TAU
    }
}

/// `ρ` with `f(x) = Σ α y k - ρ`: mean of `y_i G_i` over free vectors, or the
/// midpoint of the feasible range when none are free.
fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if (at_upper && y[t] < 0.0) || (at_lower && y[t] > 0.0) {
            ub = ub.min(yg);
        } else if at_upper || at_lower {
            lb = lb.max(yg);
        } else {
            sum += yg;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// A trained classifier. Support vectors and inputs live in standardized
/// space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub n_features: usize,
    /// Row-major, `dual_coefs.len()` rows.
    pub support_vectors: Vec<f64>,
    /// `α_i y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    /// Indices of the support vectors in the training matrix.
    pub support: Vec<usize>,
    pub bias: f64,
    pub gamma_kernel: f64,
    pub c_reg: f64,
    pub standardization: Standardizer,
    pub iterations: usize,
}

impl SvcModel {
    pub fn n_support(&self) -> usize {
        self.dual_coefs.len()
    }

    /// `Σ α_i y_i k(s_i, x) + b` for a raw (unstandardized) input.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.decision_standardized(&self.standardization.apply(x)))
    }

    fn decision_standardized(&self, z: &[f64]) -> f64 {
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.chunks_exact(self.n_features).zip(&self.dual_coefs) {
            let d2: f64 = sv.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            f += coef * (-self.gamma_kernel * d2).exp();
        }
        f
    }

    /// Dual coefficients and bias multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> SvcModel {
        let mut m = self.clone();
        m.dual_coefs.iter_mut().for_each(|c| *c *= k);
        m.bias *= k;
        m
    }

    /// Predictions for every row of `fm`.
    pub fn predict_all(&self, fm: &FeatureMatrix) -> Result<Vec<u8>> {
        (0..fm.n_samples()).map(|i| predict(self, fm.row(i))).collect()
    }

    pub fn accuracy(&self, fm: &FeatureMatrix) -> Result<f64> {
        let pred = self.predict_all(fm)?;
        let hits = pred.iter().zip(fm.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / fm.n_samples().max(1) as f64)
    }
}

/// Label 1 when the decision value is positive, else label 0.
pub fn predict(model: &SvcModel, x: &[f64]) -> Result<u8> {
    Ok(label_of(model.decision_function(x)?))
}

fn label_of(decision: f64) -> u8 {
    u8::from(decision > 0.0)
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Standardizes `features`, resolves γ, and solves the dual.
pub fn train_svc(features: &FeatureMatrix, params: &SvcParams) -> Result<SvcModel> {
    if !(params.c_reg > 0.0) || !params.c_reg.is_finite() {
        return Err(Error::invalid(format!("c_reg must be > 0, got {}", params.c_reg)));
    }
    let f = features.n_features();
    let std = Standardizer::fit(features);
    let mut z = Vec::with_capacity(features.values().len());
    for i in 0..features.n_samples() {
        std.apply_into(features.row(i), &mut z);
    }
    let gamma = match params.gamma {
        KernelGamma::Fixed(g) => g,
        KernelGamma::Scale(k) => {
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            k / (f as f64 * if var > 0.0 { var } else { 1.0 })
        }
    };
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma_kernel must be > 0, got {gamma}")));
    }
    let y: Vec<f64> = features.labels().iter().map(|&l| signed(l)).collect();
    let kernel = RbfRows::new(&z, f, gamma);
    let sol = solve(&kernel, &y, params.c_reg, params.tol)?;

    let support: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    let mut support_vectors = Vec::with_capacity(support.len() * f);
    for &i in &support {
        support_vectors.extend_from_slice(&z[i * f..(i + 1) * f]);
    }
    Ok(SvcModel {
        n_features: f,
        support_vectors,
        dual_coefs: support.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        support,
        bias: sol.bias,
        gamma_kernel: gamma,
        c_reg: params.c_reg,
        standardization: std,
        iterations: sol.iterations,
    })
}

/// Candidate hyperparameters for the optional inner search.
pub fn default_grid() -> Vec<SvcParams> {
    let mut grid = Vec::new();
    for c in [0.1, 1.0, 10.0] {
        for k in [1.0, 0.1, 10.0] {
            grid.push(SvcParams::new(c, KernelGamma::Scale(k)));
        }
    }
    grid
}

/// Options for [`repeated_cv_with`].
#[derive(Clone, Debug, Default)]
pub struct CvOptions {
    /// When set, each outer training split picks its hyperparameters from
    /// this grid by an inner stratified 3-fold CV on that split alone.
    pub grid: Option<Vec<SvcParams>>,
}

/// Accuracies from repeated stratified k-fold cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Rep-major: entry `rep * folds + fold`.
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation over all folds and repetitions.
    pub std_accuracy: f64,
    pub error: f64,
    pub reps: usize,
    pub folds: usize,
    pub seed: u64,
    pub params: SvcParams,
    /// Hyperparameters used in each fit, when a grid was searched.
    pub chosen: Option<Vec<SvcParams>>,
}

impl CvReport {
    fn new(accuracies: Vec<f64>, reps: usize, folds: usize, seed: u64, params: SvcParams) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        CvReport {
            accuracies,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            error: 1.0 - mean,
            reps,
            folds,
            seed,
            params,
            chosen: None,
        }
    }

    /// `rep,fold,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rep,fold,accuracy\n");
        for (k, a) in self.accuracies.iter().enumerate() {
            out.push_str(&format!("{},{},{a}\n", k / self.folds, k % self.folds));
        }
        out
    }

    /// Summary without the per-fold list.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "error": self.error,
            "reps": self.reps,
            "folds": self.folds,
            "seed": self.seed,
            "c_reg": self.params.c_reg,
            "gamma_kernel": self.params.gamma.to_string(),
            "tol": self.params.tol,
            "rep_seeds": (0..self.reps).map(|r| derive_seed(self.seed, 0, r)).collect::<Vec<_>>(),
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` in `dir`.
    pub fn write(&self, dir: &Path, stem: &str, extra: serde_json::Value) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let mut summary = self.summary_json();
        if let (Some(obj), serde_json::Value::Object(more)) = (summary.as_object_mut(), extra) {
            obj.extend(more);
        }
        let json = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::format("cv summary", e))?;
        text.push('\n');
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }
}

/// Fold index of every sample: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[u8], folds: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut assign = vec![0; labels.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Learner(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for (k, &i) in members.iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

fn split(assign: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assign.len()).partition(|&i| assign[i] != fold)
}

pub fn repeated_cv(features: &FeatureMatrix, reps: usize, folds: usize, params: &SvcParams, seed: u64) -> Result<CvReport> {
    repeated_cv_with(features, reps, folds, params, seed, &CvOptions::default())
}

/// `reps` rounds of stratified `folds`-fold CV; repetition `r` shuffles with
/// seed `derive_seed(seed, 0, r)`. Fits run in parallel, each one
/// single-threaded.
pub fn repeated_cv_with(
    features: &FeatureMatrix,
    reps: usize,
    folds: usize,
    params: &SvcParams,
    seed: u64,
    opts: &CvOptions,
) -> Result<CvReport> {
    if folds < 2 || reps == 0 {
        return Err(Error::invalid(format!("need folds >= 2 and reps >= 1, got {folds}, {reps}")));
    }
    let assignments: Vec<Vec<usize>> = (0..reps)
        .map(|r| stratified_folds(features.labels(), folds, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, r))))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..reps).flat_map(|r| (0..folds).map(move |f| (r, f))).collect();
    let results: Vec<(f64, SvcParams)> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let (train_idx, test_idx) = split(&assignments[r], f);
            let train = features.select(&train_idx);
            let test = features.select(&test_idx);
            let chosen = match &opts.grid {
                Some(grid) => select_params(&train, grid, derive_seed(seed, 1, r * folds + f))?,
                None => *params,
            };
            let model = train_svc(&train, &chosen)?;
            Ok((model.accuracy(&test)?, chosen))
        })
        .collect::<Result<_>>()?;
    let mut report = CvReport::new(results.iter().map(|r| r.0).collect(), reps, folds, seed, *params);
    if opts.grid.is_some() {
        report.chosen = Some(results.into_iter().map(|r| r.1).collect());
    }
    Ok(report)
}

/// Best grid entry by one round of stratified 3-fold CV on `train`; ties go
/// to the earlier entry.
fn select_params(train: &FeatureMatrix, grid: &[SvcParams], seed: u64) -> Result<SvcParams> {
    let inner = 3;
    let assign = stratified_folds(train.labels(), inner, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut best = (f64::NEG_INFINITY, grid.first().copied().unwrap_or_default());
    for p in grid {
        let mut acc = 0.0;
        for f in 0..inner {
            let (tr, te) = split(&assign, f);
            acc += train_svc(&train.select(&tr), p)?.accuracy(&train.select(&te))?;
        }
        if acc > best.0 {
            best = (acc, *p);
        }
    }
    Ok(best.1)
}
