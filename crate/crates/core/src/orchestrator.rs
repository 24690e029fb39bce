//! Experiment configuration and the pipeline commands behind the CLI.
//!
//! Every CSV written here starts with a `# format_version=…,config_hash=…`
//! line; JSON outputs carry the same two fields.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{Model, OpenSystem, Qubit, SystemParams};
use crate::learner::{default_grid, repeated_cv_with, CvOptions, CvReport, KernelGamma, SvcParams};
use crate::master::{evolve_master, DensityMatrix};
use crate::signal::{default_stride, rife_features, tab_features, Channel, FeatureMatrix, DEFAULT_N_INTERVALS};
use crate::trajectory::io::{write_dataset, FORMAT_VERSION, MANIFEST_FILE, RECORDS_FILE};
use crate::trajectory::{generate_dataset_with, io::read_dataset, GenerateOptions, Scheme, SimOptions, TrajectoryDataset};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str = "classifier,t_f,tau,error,std";
pub const SCAN_FILE: &str = "scan.csv";
pub const SCAN_HEADER: &str = "epsilon,omega,error,std,best,status";
pub const AVERAGE_FILE: &str = "average.csv";
pub const AVERAGE_HEADER: &str = "t,n_mean_down,n_mean_up,sz_mean_down,sz_mean_up";
pub const REPORT_FILE: &str = "report.csv";

/// Feature family fed to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Tab,
    Rife,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Tab => "tab",
            Classifier::Rife => "rife",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" => Ok(Classifier::Tab),
            "rife" => Ok(Classifier::Rife),
            other => Err(Error::invalid(format!("unknown feature kind `{other}` (tab, rife)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub classifiers: Vec<Classifier>,
    pub channel: Channel,
    pub t_f: Vec<f64>,
    pub tau: Vec<f64>,
    /// TAB subsampling; `None` keeps at most 2000 points.
    pub stride: Option<usize>,
    pub n_intervals: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            classifiers: vec![Classifier::Tab, Classifier::Rife],
            channel: Channel::XMean,
            t_f: (1..=15).map(f64::from).collect(),
            tau: vec![1e-3, 1e-1],
            stride: None,
            n_intervals: DEFAULT_N_INTERVALS,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub c_reg: f64,
    pub gamma_kernel: KernelGamma,
    pub tol: f64,
    pub reps: usize,
    pub folds: usize,
    pub seed: u64,
    /// Pick `(C, γ)` per training split from a small grid.
    pub grid_search: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        let p = SvcParams::default();
        LearnerConfig {
            c_reg: p.c_reg,
            gamma_kernel: p.gamma,
            tol: p.tol,
            reps: 100,
            folds: 5,
            seed: 1,
            grid_search: false,
        }
    }
}

impl LearnerConfig {
    pub fn params(&self) -> SvcParams {
        SvcParams {
            c_reg: self.c_reg,
            gamma: self.gamma_kernel,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub epsilon: Vec<f64>,
    pub omega: Vec<f64>,
    pub n_per_class: usize,
    pub classifier: Classifier,
    pub t_f: f64,
    pub tau: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let p = SystemParams::reference();
        ScanConfig {
            epsilon: vec![p.epsilon],
            omega: vec![p.omega - 0.5, p.omega, p.omega + 0.5],
            n_per_class: 200,
            classifier: Classifier::Tab,
            t_f: 2.0,
            tau: 1e-3,
        }
    }
}

/// Everything one pipeline run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub params: SystemParams,
    pub model: Model,
    pub dt: f64,
    pub t_max: f64,
    pub n_per_class: usize,
    pub master_seed: u64,
    /// `None` picks the integrator for the model.
    pub scheme: Option<Scheme>,
    pub features: FeatureConfig,
    pub learner: LearnerConfig,
    pub scan: ScanConfig,
    /// `average` keeps every `output_stride`-th grid point.
    pub output_stride: usize,
    pub out: PathBuf,
    /// Worker threads; not part of the hash since output does not depend on it.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: SystemParams::reference(),
            model: Model::Dispersive,
            dt: 1e-3,
            t_max: 15.0,
            n_per_class: 1000,
            master_seed: 1,
            scheme: None,
            features: FeatureConfig::default(),
            learner: LearnerConfig::default(),
            scan: ScanConfig::default(),
            output_stride: 10,
            out: PathBuf::from("out"),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::format("config", e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the config with `out` and `workers` removed and keys
    /// sorted.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
            obj.remove("workers");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_per_class == 0 || self.scan.n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be >= 1"));
        }
        if !(self.dt > 0.0) || !(self.t_max >= self.dt) {
            return Err(Error::invalid(format!("need 0 < dt <= t_max, got dt = {}, t_max = {}", self.dt, self.t_max)));
        }
        let f = &self.features;
        if f.t_f.is_empty() || f.tau.is_empty() || f.classifiers.is_empty() {
            return Err(Error::invalid("t_f, tau and classifier lists must be non-empty"));
        }
        if let Some(t) = f.t_f.iter().find(|&&t| !(t > 0.0 && t <= self.t_max * (1.0 + 1e-12))) {
            return Err(Error::invalid(format!("t_f = {t} must lie in (0, t_max = {}]", self.t_max)));
        }
        if let Some(t) = f.tau.iter().chain([&self.scan.tau]).find(|&&t| !(t >= self.dt * (1.0 - 1e-9))) {
            return Err(Error::invalid(format!("tau = {t} must be >= dt = {}", self.dt)));
        }
        if f.stride == Some(0) || f.n_intervals == 0 || self.output_stride == 0 {
            return Err(Error::invalid("stride, n_intervals and output_stride must be >= 1"));
        }
        if self.learner.reps == 0 || self.learner.folds < 2 {
            return Err(Error::invalid("need reps >= 1 and folds >= 2"));
        }
        if self.scan.epsilon.is_empty() || self.scan.omega.is_empty() {
            return Err(Error::invalid("scan grids must be non-empty"));
        }
        if !(self.scan.t_f >= self.dt) {
            return Err(Error::invalid("scan t_f must be >= dt"));
        }
        Ok(())
    }

    fn stamp(&self) -> String {
        format!("# format_version={FORMAT_VERSION},config_hash={}", self.hash())
    }

    fn generate_options(&self) -> GenerateOptions {
        GenerateOptions {
            sim: SimOptions {
                scheme: self.scheme,
                ..Default::default()
            },
            workers: self.workers,
        }
    }
}

/// Command-line overrides applied on top of a config file or the defaults.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pump amplitude; repeat to give the scan grid.
    #[arg(long)]
    pub epsilon: Vec<f64>,
    /// Pump–resonator detuning; repeat to give the scan grid.
    #[arg(long)]
    pub omega: Vec<f64>,
    #[arg(long = "delta-omega")]
    pub delta_omega: Option<f64>,
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "n-fock")]
    pub n_fock: Option<usize>,
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long = "n-per-class")]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Sets the dataset, feature and CV seeds together.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "tf")]
    pub t_f: Vec<f64>,
    #[arg(long)]
    pub tau: Vec<f64>,
    #[arg(long)]
    pub features: Vec<Classifier>,
    #[arg(long)]
    pub channel: Option<Channel>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long = "c-reg")]
    pub c_reg: Option<f64>,
    /// `scale`, `<k>*scale`, or a number.
    #[arg(long = "gamma-kernel")]
    pub gamma_kernel: Option<KernelGamma>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Select (C, γ) per training split from a small grid.
    #[arg(long = "grid-search")]
    pub grid_search: bool,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long = "n-intervals")]
    pub n_intervals: Option<usize>,
    #[arg(long = "output-stride")]
    pub output_stride: Option<usize>,
}

impl Overrides {
    /// Loads `--config` (or the defaults) and applies the flags. Repeated
    /// `--epsilon`/`--omega` are only accepted when `scan` is set.
    pub fn resolve(&self, scan: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg, scan)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig, scan: bool) -> Result<()> {
        let single = |name: &str, v: &[f64]| -> Result<Option<f64>> {
            match v {
                [] => Ok(None),
                [x] => Ok(Some(*x)),
                _ if scan => Ok(None),
                _ => Err(Error::invalid(format!("--{name} given more than once"))),
            }
        };
        let p = &mut cfg.params;
        if let Some(e) = single("epsilon", &self.epsilon)? {
            p.epsilon = e;
        }
        if let Some(w) = single("omega", &self.omega)? {
            // keep the qubit detuning fixed
            p.omega_q = w + (p.omega_q - p.omega);
            p.omega = w;
        }
        let detuning = p.detuning();
        match (self.g, self.delta_omega) {
            (Some(g), Some(dw)) => {
                p.g = Some(g);
                p.delta_omega = Some(dw);
            }
            (Some(g), None) => {
                p.g = Some(g);
                p.delta_omega = Some(g * g / detuning);
            }
            (None, Some(dw)) => {
                p.delta_omega = Some(dw);
                if p.g.is_some() {
                    p.g = Some((dw * detuning).sqrt());
                }
            }
            (None, None) => {}
        }
        set(&mut p.chi, self.chi);
        set(&mut p.gamma, self.gamma);
        set(&mut p.n_fock, self.n_fock);
        set(&mut cfg.model, self.model);
        if let Some(n) = self.n_per_class {
            cfg.n_per_class = n;
            if scan {
                cfg.scan.n_per_class = n;
            }
        }
        set(&mut cfg.dt, self.dt);
        set(&mut cfg.t_max, self.t_max);
        if let Some(s) = self.seed {
            cfg.master_seed = s;
            cfg.features.seed = s;
            cfg.learner.seed = s;
        }
        if scan {
            if !self.epsilon.is_empty() {
                cfg.scan.epsilon = self.epsilon.clone();
            }
            if !self.omega.is_empty() {
                cfg.scan.omega = self.omega.clone();
            }
            if let Some(&t) = self.t_f.first() {
                cfg.scan.t_f = t;
            }
            if let Some(&t) = self.tau.first() {
                cfg.scan.tau = t;
            }
            if let Some(&c) = self.features.first() {
                cfg.scan.classifier = c;
            }
        }
        if !self.t_f.is_empty() {
            cfg.features.t_f = self.t_f.clone();
        }
        if !self.tau.is_empty() {
            cfg.features.tau = self.tau.clone();
        }
        if !self.features.is_empty() {
            cfg.features.classifiers = self.features.clone();
        }
        set(&mut cfg.features.channel, self.channel);
        if self.stride.is_some() {
            cfg.features.stride = self.stride;
        }
        set(&mut cfg.features.n_intervals, self.n_intervals);
        set(&mut cfg.learner.reps, self.reps);
        set(&mut cfg.learner.folds, self.folds);
        set(&mut cfg.learner.c_reg, self.c_reg);
        set(&mut cfg.learner.gamma_kernel, self.gamma_kernel);
        cfg.learner.grid_search |= self.grid_search;
        set(&mut cfg.output_stride, self.output_stride);
        set(&mut cfg.out, self.out.clone());
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Fails if any of `files` exists in `dir` and `force` is off.
fn claim_outputs(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    if !force {
        if let Some(f) = files.iter().find(|f| dir.join(f).exists()) {
            return Err(Error::invalid(format!(
                "{} already exists; pass --force to overwrite",
                dir.join(f).display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Simulates the dataset described by `cfg`.
pub fn generate(cfg: &ExperimentConfig) -> Result<TrajectoryDataset> {
    generate_dataset_with(
        &cfg.params,
        cfg.model,
        cfg.n_per_class,
        cfg.t_max,
        cfg.dt,
        cfg.master_seed,
        &cfg.generate_options(),
    )
}

/// Writes `manifest.json` and `records.csv` into `cfg.out`.
pub fn cmd_generate(cfg: &ExperimentConfig, force: bool) -> Result<PathBuf> {
    cfg.validate()?;
    claim_outputs(&cfg.out, &[MANIFEST_FILE, RECORDS_FILE], force)?;
    let ds = generate(cfg)?;
    write_dataset(&ds, &cfg.out)?;
    Ok(cfg.out.clone())
}

/// Master-equation `⟨a†a⟩` (and `⟨σ_z⟩` in the full model) for both labels.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedDynamics {
    pub times: Vec<f64>,
    /// Indexed by qubit label.
    pub n_mean: [Vec<f64>; 2],
    pub sz_mean: Option<[Vec<f64>; 2]>,
}

pub fn averaged_dynamics(cfg: &ExperimentConfig) -> Result<AveragedDynamics> {
    cfg.params.validate()?;
    let mut n_mean: [Vec<f64>; 2] = Default::default();
    let mut sz_mean: [Vec<f64>; 2] = Default::default();
    let mut times = Vec::new();
    let full = cfg.model == Model::Full;
    for q in Qubit::BOTH {
        let sys = OpenSystem::for_model(&cfg.params, cfg.model, q)?;
        let rho0 = DensityMatrix::basis(sys.dim(), sys.initial_index(q));
        let number = sys.space.number()?;
        let mut record = vec![("n", &number)];
        let sz = sys.space.sigma_z();
        if let Some(op) = &sz {
            record.push(("sz", op));
        }
        let evo = evolve_master(&rho0, &sys, cfg.t_max, cfg.dt, &record)?;
        let keep = |v: &[f64]| v.iter().step_by(cfg.output_stride).copied().collect::<Vec<_>>();
        times = keep(&evo.series[0].times);
        n_mean[q.label() as usize] = keep(&evo.series[0].values);
        if full {
            sz_mean[q.label() as usize] = keep(&evo.series[1].values);
        }
    }
    Ok(AveragedDynamics {
        times,
        n_mean,
        sz_mean: full.then_some(sz_mean),
    })
}

/// Writes `average.csv` into `cfg.out`.
pub fn cmd_average(cfg: &ExperimentConfig, force: bool) -> Result<AveragedDynamics> {
    cfg.validate()?;
    claim_outputs(&cfg.out, &[AVERAGE_FILE], force)?;
    let avg = averaged_dynamics(cfg)?;
    let mut text = format!("{}\n{AVERAGE_HEADER}\n", cfg.stamp());
    for (i, t) in avg.times.iter().enumerate() {
        let (sd, su) = match &avg.sz_mean {
            Some(sz) => (sz[0][i].to_string(), sz[1][i].to_string()),
            None => (String::new(), String::new()),
        };
        text.push_str(&format!("{t},{},{},{sd},{su}\n", avg.n_mean[0][i], avg.n_mean[1][i]));
    }
    write_text(&cfg.out.join(AVERAGE_FILE), &text)?;
    Ok(avg)
}

/// One `classifier,t_f,tau,error,std` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub classifier: Classifier,
    pub t_f: f64,
    pub tau: f64,
    pub error: f64,
    pub std: f64,
}

impl SummaryRow {
    fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.classifier, self.t_f, self.tau, self.error, self.std)
    }
}

/// Feature matrix for one `(classifier, t_f, τ)` cell.
pub fn features_for(
    ds: &TrajectoryDataset,
    f: &FeatureConfig,
    classifier: Classifier,
    t_f: f64,
    tau: f64,
) -> Result<FeatureMatrix> {
    match classifier {
        Classifier::Tab => {
            let stride = f.stride.unwrap_or_else(|| default_stride(ds.dt, t_f));
            tab_features(ds, f.channel, t_f, tau, stride)
        }
        Classifier::Rife => rife_features(ds, f.channel, t_f, tau, f.n_intervals, f.seed),
    }
}

/// Features → repeated CV for one cell.
pub fn classify_cell(
    ds: &TrajectoryDataset,
    cfg: &ExperimentConfig,
    classifier: Classifier,
    t_f: f64,
    tau: f64,
) -> Result<CvReport> {
    if t_f > ds.t_max * (1.0 + 1e-12) || tau < ds.dt * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "t_f = {t_f}, tau = {tau} do not fit the dataset grid (dt = {}, t_max = {})",
            ds.dt, ds.t_max
        )));
    }
    let fm = features_for(ds, &cfg.features, classifier, t_f, tau)?;
    let opts = CvOptions {
        grid: cfg.learner.grid_search.then(default_grid),
    };
    let l = &cfg.learner;
    let run = || repeated_cv_with(&fm, l.reps, l.folds, &l.params(), l.seed, &opts);
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

fn cells(f: &FeatureConfig) -> Vec<(Classifier, f64, f64)> {
    let mut out = Vec::new();
    for &c in &f.classifiers {
        for &tau in &f.tau {
            for &t_f in &f.t_f {
                out.push((c, t_f, tau));
            }
        }
    }
    out
}

/// Runs every cell of the feature grid on an in-memory dataset.
pub fn classify_dataset(ds: &TrajectoryDataset, cfg: &ExperimentConfig) -> Result<Vec<(SummaryRow, CvReport)>> {
    cells(&cfg.features)
        .into_iter()
        .map(|(c, t_f, tau)| {
            let rep = classify_cell(ds, cfg, c, t_f, tau)?;
            let row = SummaryRow {
                classifier: c,
                t_f,
                tau,
                error: rep.error,
                std: rep.std_accuracy,
            };
            Ok((row, rep))
        })
        .collect()
}

/// Reads the dataset in `dataset_dir`, writes `summary.csv` and per-cell
/// `cv/<kind>_tf<t_f>_tau<tau>.{csv,json}` into `cfg.out`.
pub fn cmd_classify(dataset_dir: &Path, cfg: &ExperimentConfig, force: bool) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    let ds = read_dataset(dataset_dir)?;
    claim_outputs(&cfg.out, &[SUMMARY_FILE], force)?;
    let cv_dir = cfg.out.join("cv");
    fs::create_dir_all(&cv_dir).map_err(|e| Error::io(&cv_dir, e))?;
    let results = classify_dataset(&ds, cfg)?;
    let hash = cfg.hash();
    let mut text = format!("{}\n{SUMMARY_HEADER}\n", cfg.stamp());
    for (row, rep) in &results {
        let stem = format!("{}_tf{}_tau{}", row.classifier, row.t_f, row.tau);
        let extra = serde_json::json!({
            "classifier": row.classifier,
            "t_f": row.t_f,
            "tau": row.tau,
            "channel": cfg.features.channel,
            "format_version": FORMAT_VERSION,
            "config_hash": hash,
        });
        rep.write(&cv_dir, &stem, extra)?;
        text.push_str(&row.csv());
        text.push('\n');
    }
    write_text(&cfg.out.join(SUMMARY_FILE), &text)?;
    Ok(results.into_iter().map(|r| r.0).collect())
}

/// One grid point of a parameter scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub epsilon: f64,
    pub omega: f64,
    /// `Err` holds the failure message; the scan continues past it.
    pub outcome: std::result::Result<(f64, f64), String>,
    pub best: bool,
}

/// Generates and classifies a small dataset at every `(ε, ω)` point.
/// Points share `master_seed`, so they see the same noise draws.
pub fn scan(cfg: &ExperimentConfig) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    let s = &cfg.scan;
    let mut rows = Vec::new();
    for &epsilon in &s.epsilon {
        for &omega in &s.omega {
            let mut point = cfg.clone();
            point.params.epsilon = epsilon;
            point.params.omega_q = omega + (cfg.params.omega_q - cfg.params.omega);
            point.params.omega = omega;
            point.n_per_class = s.n_per_class;
            point.t_max = s.t_f;
            let outcome = generate(&point)
                .and_then(|ds| classify_cell(&ds, &point, s.classifier, s.t_f, s.tau))
                .map(|rep| (rep.error, rep.std_accuracy))
                .map_err(|e| e.to_string());
            rows.push(ScanRow {
                epsilon,
                omega,
                outcome,
                best: false,
            });
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.outcome.as_ref().ok().map(|o| (i, o.0)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((i, _)) = best {
        rows[i].best = true;
    }
    Ok(rows)
}

/// Writes `scan.csv` into `cfg.out`.
pub fn cmd_scan(cfg: &ExperimentConfig, force: bool) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    claim_outputs(&cfg.out, &[SCAN_FILE], force)?;
    let rows = scan(cfg)?;
    let mut text = format!("{}\n{SCAN_HEADER}\n", cfg.stamp());
    for r in &rows {
        let (err, std, status) = match &r.outcome {
            Ok((e, s)) => (e.to_string(), s.to_string(), "ok".to_string()),
            Err(msg) => (String::new(), String::new(), csv_safe(msg)),
        };
        text.push_str(&format!("{},{},{err},{std},{},{status}\n", r.epsilon, r.omega, u8::from(r.best)));
    }
    write_text(&cfg.out.join(SCAN_FILE), &text)?;
    Ok(rows)
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Parses a `summary.csv`, returning its config hash and rows.
pub fn read_summary(path: &Path) -> Result<(String, Vec<SummaryRow>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |d: String| Error::format(path.display().to_string(), d);
    let mut lines = text.lines();
    let stamp = lines.next().unwrap_or_default();
    let hash = stamp
        .strip_prefix(&format!("# format_version={FORMAT_VERSION},config_hash="))
        .ok_or_else(|| bad("missing format stamp".into()))?
        .to_string();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let rows = lines
        .enumerate()
        .map(|(k, line)| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 5 {
                return Err(bad(format!("row {k}: expected 5 columns")));
            }
            let num = |i: usize| c[i].parse::<f64>().map_err(|e| bad(format!("row {k}: {e}")));
            Ok(SummaryRow {
                classifier: c[0].parse()?,
                t_f: num(1)?,
                tau: num(2)?,
                error: num(3)?,
                std: num(4)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((hash, rows))
}

/// Concatenates summaries (files, or directories holding `summary.csv`)
/// into `out/report.csv`, sorted by classifier, τ and t_f.
pub fn cmd_report(inputs: &[PathBuf], out: &Path, force: bool) -> Result<Vec<SummaryRow>> {
    if inputs.is_empty() {
        return Err(Error::invalid("report needs at least one summary"));
    }
    let mut hashes: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for input in inputs {
        let path = if input.is_dir() { input.join(SUMMARY_FILE) } else { input.clone() };
        let (hash, mut r) = read_summary(&path)?;
        if !hashes.contains(&hash) {
            hashes.push(hash);
        }
        rows.append(&mut r);
    }
    rows.sort_by(|a, b| {
        (a.classifier, a.tau, a.t_f)
            .partial_cmp(&(b.classifier, b.tau, b.t_f))
            .expect("finite grid values")
    });
    claim_outputs(out, &[REPORT_FILE], force)?;
    let mut text = format!(
        "# format_version={FORMAT_VERSION},config_hash={}\n{SUMMARY_HEADER}\n",
        hashes.join(";")
    );
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    write_text(&out.join(REPORT_FILE), &text)?;
    Ok(rows)
}
