//! Feature extraction from measurement records.
//!
//! Every recipe smooths the chosen channel with a causal boxcar of width τ,
//! keeps the points with `t ≤ t_f`, and then either samples them directly
//! (TAB) or summarizes random intervals (RIFE).

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{TrajectoryDataset, TrajectoryRecord};

pub const DEFAULT_N_INTERVALS: usize = 50;
/// TAB keeps at most this many points unless a stride is given.
pub const MAX_TAB_FEATURES: usize = 2000;

/// Which recorded series feeds the features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Conditional `⟨a + a†⟩`.
    #[default]
    XMean,
    /// Homodyne current `dJ/dt`.
    Current,
    /// Conditional `⟨a†a⟩`.
    NMean,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::XMean, Channel::Current, Channel::NMean];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::XMean => "x_mean",
            Channel::Current => "current",
            Channel::NMean => "n_mean",
        }
    }

    /// The raw series of `rec` on its time grid.
    pub fn series(self, rec: &TrajectoryRecord) -> Vec<f64> {
        match self {
            Channel::XMean => rec.x_mean.clone(),
            Channel::NMean => rec.n_mean.clone(),
            Channel::Current => rec.current.iter().map(|dj| dj / rec.dt).collect(),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown channel {s:?} (x_mean, current, n_mean)")))
    }
}

/// Which features a matrix holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Every `stride`-th smoothed point.
    Tab { stride: usize },
    /// `(mean, std, slope)` over each inclusive index interval `[i, j]`.
    Rife { intervals: Vec<(usize, usize)> },
    /// Features supplied by the caller.
    Raw,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Tab { .. } => "tab",
            FeatureKind::Rife { .. } => "rife",
            FeatureKind::Raw => "raw",
        }
    }
}

/// The recipe that produced a [`FeatureMatrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub channel: Channel,
    pub t_f: f64,
    pub tau: f64,
    pub seed: u64,
}

impl FeatureSpec {
    pub fn raw() -> Self {
        FeatureSpec {
            kind: FeatureKind::Raw,
            channel: Channel::default(),
            t_f: 0.0,
            tau: 0.0,
            seed: 0,
        }
    }

    /// The `# kind=…` line used by the CSV form.
    fn header_line(&self) -> String {
        let mut line = format!(
            "# kind={},t_f={},tau={},seed={},channel={}",
            self.kind.name(),
            self.t_f,
            self.tau,
            self.seed,
            self.channel
        );
        match &self.kind {
            FeatureKind::Tab { stride } => line.push_str(&format!(",stride={stride}")),
            FeatureKind::Rife { intervals } => {
                let list: Vec<String> = intervals.iter().map(|(i, j)| format!("{i}-{j}")).collect();
                line.push_str(&format!(",intervals={}", list.join(";")));
            }
            FeatureKind::Raw => {}
        }
        line
    }

    fn parse_header(line: &str) -> Result<Self> {
        let bad = |d: String| Error::format("feature header", d);
        let body = line.strip_prefix("# ").ok_or_else(|| bad("missing '# ' prefix".into()))?;
        let mut kv = std::collections::HashMap::new();
        for item in body.split(',') {
            let (k, v) = item.split_once('=').ok_or_else(|| bad(format!("bad item {item:?}")))?;
            kv.insert(k, v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| bad(format!("{k}: {e}"))) };
        let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|e| bad(format!("{k}: {e}"))) };
        let kind = match get("kind")? {
            "tab" => FeatureKind::Tab {
                stride: int("stride")? as usize,
            },
            "rife" => {
                let list = get("intervals")?;
                let intervals = list
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        let (i, j) = s.split_once('-').ok_or_else(|| bad(format!("interval {s:?}")))?;
                        let p = |x: &str| x.parse::<usize>().map_err(|e| bad(format!("interval {s:?}: {e}")));
                        Ok((p(i)?, p(j)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureKind::Rife { intervals }
            }
            "raw" => FeatureKind::Raw,
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        Ok(FeatureSpec {
            kind,
            channel: get("channel")?.parse()?,
            t_f: num("t_f")?,
            tau: num("tau")?,
            seed: int("seed")?,
        })
    }
}

/// Row-major sample × feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_samples: usize,
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
    spec: FeatureSpec,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, n_features: usize, labels: Vec<u8>, spec: FeatureSpec) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("feature matrix needs at least one feature"));
        }
        if values.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                k / n_features,
                k % n_features
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(FeatureMatrix {
            n_samples: labels.len(),
            n_features,
            values,
            labels,
            spec,
        })
    }

    /// From explicit rows, with a [`FeatureKind::Raw`] spec.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: r.len(),
            });
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        FeatureMatrix::new(rows.concat(), n_features, labels, FeatureSpec::raw())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_samples: idx.len(),
            n_features: self.n_features,
            values,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            spec: self.spec.clone(),
        }
    }

    /// Spec header, `label,f0,f1,…`, then one row per sample.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.spec.header_line())?;
        write!(w, "label")?;
        for k in 0..self.n_features {
            write!(w, ",f{k}")?;
        }
        writeln!(w)?;
        for i in 0..self.n_samples {
            write!(w, "{}", self.labels[i])?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |d: String| Error::format(path.display().to_string(), d);
        let mut lines = text.lines();
        let spec = FeatureSpec::parse_header(lines.next().unwrap_or_default())?;
        let header = lines.next().ok_or_else(|| bad("missing column header".into()))?;
        let n_features = header.split(',').count().saturating_sub(1);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (row, line) in lines.enumerate() {
            let mut cols = line.split(',');
            let label = cols
                .next()
                .unwrap_or_default()
                .parse::<u8>()
                .map_err(|e| bad(format!("row {row}: label: {e}")))?;
            labels.push(label);
            let before = values.len();
            for c in cols {
                values.push(c.parse::<f64>().map_err(|e| bad(format!("row {row}: {e}")))?);
            }
            if values.len() - before != n_features {
                return Err(bad(format!("row {row}: expected {n_features} features")));
            }
        }
        FeatureMatrix::new(values, n_features, labels, spec)
    }
}

/// Causal boxcar: `out[i]` averages the last `w = round(τ/dt)` inputs up to
/// and including `i`, or the whole prefix while `i < w - 1`.
pub fn smooth(series: &[f64], dt: f64, tau: f64) -> Result<Vec<f64>> {
    let w = window(dt, tau)?;
    if w == 1 {
        return Ok(series.to_vec());
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= series[i - w];
        }
        // re-sum once per window so rounding cannot accumulate
        if i >= w && i % w == 0 {
            sum = series[i + 1 - w..=i].iter().sum();
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    Ok(out)
}

fn window(dt: f64, tau: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(tau >= dt * (1.0 - 1e-9)) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau = {tau} must be >= dt = {dt}")));
    }
    Ok(((tau / dt).round() as usize).max(1))
}

/// Index of the last grid point with `t ≤ t_f`.
fn last_index(ds: &TrajectoryDataset, t_f: f64) -> Result<usize> {
    if !(t_f > 0.0) || t_f > ds.t_max * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("t_f = {t_f} must lie in (0, {}]", ds.t_max)));
    }
    Ok(((t_f / ds.dt).round() as usize).min(ds.n_steps()))
}

/// Stride that keeps TAB at or below [`MAX_TAB_FEATURES`] points.
pub fn default_stride(dt: f64, t_f: f64) -> usize {
    let points = (t_f / dt).round() as usize + 1;
    points.div_ceil(MAX_TAB_FEATURES).max(1)
}

/// Smoothed, truncated series for every record, in dataset order.
fn prepared(ds: &TrajectoryDataset, channel: Channel, last: usize, tau: f64) -> Result<Vec<Vec<f64>>> {
    window(ds.dt, tau)?;
    ds.records
        .par_iter()
        .map(|rec| {
            let raw = channel.series(rec);
            let mut s = smooth(&raw[..=last], ds.dt, tau)?;
            s.truncate(last + 1);
            Ok(s)
        })
        .collect()
}

/// TAB: every `stride`-th smoothed point with `t ≤ t_f`, giving
/// `⌊round(t_f/dt)/stride⌋ + 1` features.
pub fn tab_features(
    ds: &TrajectoryDataset,
    channel: Channel,
    t_f: f64,
    tau: f64,
    stride: usize,
) -> Result<FeatureMatrix> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let last = last_index(ds, t_f)?;
    let n_features = last / stride + 1;
    let rows = prepared(ds, channel, last, tau)?;
    let mut values = Vec::with_capacity(rows.len() * n_features);
    for row in &rows {
        values.extend(row.iter().step_by(stride));
    }
    let spec = FeatureSpec {
        kind: FeatureKind::Tab { stride },
        channel,
        t_f,
        tau,
        seed: 0,
    };
    FeatureMatrix::new(values, n_features, ds.labels(), spec)
}

/// `n` index pairs `i < j` drawn uniformly from `0..=last`.
pub fn draw_intervals(last: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if last == 0 {
        return Err(Error::invalid("RIFE needs at least two time points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| loop {
            let a = rng.random_range(0..=last);
            let b = rng.random_range(0..=last);
            if a != b {
                break (a.min(b), a.max(b));
            }
        })
        .collect())
}

/// Mean, population standard deviation, and least-squares slope against `t`
/// of `y[i..=j]` on a grid of spacing `dt`.
pub fn interval_stats(y: &[f64], i: usize, j: usize, dt: f64) -> (f64, f64, f64) {
    let seg = &y[i..=j];
    let n = seg.len() as f64;
    let mean = seg.iter().sum::<f64>() / n;
    let var = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    // index offsets centered on their mean; t = (i + k) dt
    let k_mean = (n - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, v) in seg.iter().enumerate() {
        let x = k as f64 - k_mean;
        sxy += x * (v - mean);
        sxx += x * x;
    }
    (mean, var.sqrt(), sxy / sxx / dt)
}

/// RIFE: `(mean, std, slope)` of the smoothed series over `n_intervals`
/// random intervals shared by every record.
pub fn rife_features(
    ds: &TrajectoryDataset,
    channel: Channel,
    t_f: f64,
    tau: f64,
    n_intervals: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    if n_intervals == 0 {
        return Err(Error::invalid("n_intervals must be >= 1"));
    }
    let last = last_index(ds, t_f)?;
    let intervals = draw_intervals(last, n_intervals, seed)?;
    let rows = prepared(ds, channel, last, tau)?;
    let dt = ds.dt;
    let values: Vec<f64> = rows
        .par_iter()
        .flat_map_iter(|row| {
            intervals.iter().flat_map(move |&(i, j)| {
                let (m, s, b) = interval_stats(row, i, j, dt);
                [m, s, b]
            })
        })
        .collect();
    let spec = FeatureSpec {
        kind: FeatureKind::Rife { intervals },
        channel,
        t_f,
        tau,
        seed,
    };
    FeatureMatrix::new(values, 3 * n_intervals, ds.labels(), spec)
}

/// Recomputes features with the recipe in `spec`, so a second dataset gets
/// the same column layout.
pub fn extract(ds: &TrajectoryDataset, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    match &spec.kind {
        FeatureKind::Tab { stride } => tab_features(ds, spec.channel, spec.t_f, spec.tau, *stride),
        FeatureKind::Rife { intervals } => {
            let last = last_index(ds, spec.t_f)?;
            if let Some(&(i, j)) = intervals.iter().find(|&&(i, j)| !(i < j && j <= last)) {
                return Err(Error::invalid(format!("interval [{i}, {j}] outside 0..={last}")));
            }
            let rows = prepared(ds, spec.channel, last, spec.tau)?;
            let values = rows
                .iter()
                .flat_map(|row| {
                    intervals.iter().flat_map(move |&(i, j)| {
                        let (m, s, b) = interval_stats(row, i, j, ds.dt);
                        [m, s, b]
                    })
                })
                .collect();
            FeatureMatrix::new(values, 3 * intervals.len(), ds.labels(), spec.clone())
        }
        FeatureKind::Raw => Err(Error::invalid("raw features cannot be re-extracted")),
    }
}
