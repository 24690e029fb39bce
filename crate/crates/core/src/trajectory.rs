//! Diffusive (homodyne) unraveling of the master equation.
//!
//! The collapse operator is `C = √(2Γ) a`, whose dissipator `C ρ C† - ½{C†C, ρ}`
//! is exactly the loss term of the master equation. The local oscillator
//! measures the x quadrature, so the record increment is
//! `dJ = ⟨C + C†⟩ dt + dW` at unit detection efficiency.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Model, OpenSystem, OperatorMatrix, Qubit, SparseOp, SystemParams, C64};

pub mod io;

/// Longest trajectory accepted by [`simulate_trajectory`], in units of 1/Γ.
pub const DEFAULT_T_MAX_CAP: f64 = 15.0;
/// Finest time step accepted by [`simulate_trajectory`], in units of 1/Γ.
pub const DEFAULT_DT_MIN: f64 = 1e-3;

const NORM_BOUNDS: (f64, f64) = (0.5, 2.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState(Vec<C64>);

impl QuantumState {
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[index] = C64::new(1.0, 0.0);
        QuantumState(v)
    }

    /// Normalizes `amplitudes`; rejects the zero vector.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = l2(&amplitudes);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("state vector must have finite nonzero norm"));
        }
        Ok(QuantumState(amplitudes.into_iter().map(|z| z / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    /// `|ψ⟩⟨ψ|` as a dense matrix.
    pub fn projector(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| self.0[r] * self.0[c].conj())
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Integrator for the normalized homodyne equation.
///
/// The drift is `a(ψ) = [A + (m/2)C - m²/8]ψ` with `A = -iH - ½C†C`, and the
/// diffusion is `b(ψ) = (C - m/2)ψ`; every scheme renormalizes after the step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `ψ + a(ψ) dt + b(ψ) dW`: plain Euler–Maruyama.
    Euler,
    /// Euler–Maruyama with the linear part advanced by `exp(A dt)`. Stable
    /// for large `|H| dt` (the full model, with `ω_q ≫ Γ`).
    ExponentialEuler,
    /// Platen's explicit weak order 2.0 scheme.
    #[default]
    Weak2,
}

impl Scheme {
    /// `Weak2` for the dispersive model; `ExponentialEuler` for the full
    /// model, whose qubit frequency makes explicit schemes stiff.
    pub fn default_for(model: Model) -> Self {
        match model {
            Model::Full => Scheme::ExponentialEuler,
            Model::Dispersive => Scheme::Weak2,
        }
    }
}

/// One-step homodyne update for a fixed system and step size.
#[derive(Clone, Debug)]
pub struct HomodyneStepper {
    dim: usize,
    dt: f64,
    collapse_scale: f64,
    scheme: Scheme,
    /// Row-major `I + A dt` or `exp(A dt)`, for the Euler variants.
    propagator: Vec<C64>,
    /// Sparse `A`, for `Weak2`.
    linear: SparseOp,
    lower: SparseOp,
    qubit: bool,
}

/// Result of one accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// `⟨C + C†⟩` at the pre-step state.
    pub m: f64,
    /// Record increment `m dt + dW`.
    pub dj: f64,
}

/// Scratch buffers for one stepper, reused across steps.
struct Workspace {
    next: Vec<C64>,
    drift: Vec<C64>,
    diffusion: Vec<C64>,
    support: Vec<C64>,
    tmp: Vec<C64>,
    lowered: Vec<C64>,
    acc: Vec<C64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let z = || vec![ZERO; d];
        Workspace {
            next: z(),
            drift: z(),
            diffusion: z(),
            support: z(),
            tmp: z(),
            lowered: z(),
            acc: z(),
        }
    }
}

impl HomodyneStepper {
    pub fn new(sys: &OpenSystem, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        let dim = sys.dim();
        let a = sys.annihilation();
        let cdc = (&a.adjoint() * a).scale(2.0 * sys.gamma);
        let linear = sys.hamiltonian.scale(C64::new(0.0, -1.0)) - cdc.scale(0.5);
        let prop = match scheme {
            Scheme::Euler => (OperatorMatrix::identity(dim) + linear.scale(dt)).into_matrix(),
            Scheme::ExponentialEuler => (linear.matrix() * C64::new(dt, 0.0)).exp(),
            Scheme::Weak2 => DMatrix::zeros(0, 0),
        };
        let propagator = (0..prop.nrows())
            .flat_map(|r| (0..prop.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| prop[(r, c)])
            .collect();
        Ok(HomodyneStepper {
            dim,
            dt,
            collapse_scale: (2.0 * sys.gamma).sqrt(),
            scheme,
            propagator,
            linear: SparseOp::from_dense(&linear),
            lower: SparseOp::from_dense(a),
            qubit: sys.space.with_qubit,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `⟨C + C†⟩` of the (possibly unnormalized) `psi`, given `a ψ`.
    fn measured(&self, psi: &[C64], lowered: &[C64]) -> f64 {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        2.0 * self.collapse_scale * dot_re(psi, lowered) / norm2
    }

    /// Drift `a(ψ)` into `out`; `lowered` is scratch for `a ψ`.
    fn drift(&self, psi: &[C64], lowered: &mut [C64], out: &mut [C64]) {
        self.lower.apply_into(psi, lowered);
        let m = self.measured(psi, lowered);
        self.linear.apply_into(psi, out);
        let c_coef = 0.5 * m * self.collapse_scale;
        let psi_coef = -m * m / 8.0;
        for ((o, p), l) in out.iter_mut().zip(psi).zip(lowered.iter()) {
            *o += l * c_coef + p * psi_coef;
        }
    }

    /// Diffusion `b(ψ)` into `out`.
    fn diffusion(&self, psi: &[C64], lowered: &mut [C64], out: &mut [C64]) {
        self.lower.apply_into(psi, lowered);
        let m = self.measured(psi, lowered);
        let s = self.collapse_scale;
        for ((o, p), l) in out.iter_mut().zip(psi).zip(lowered.iter()) {
            *o = l * s - p * (0.5 * m);
        }
    }

    /// Advances `psi` in place given `a ψ` (already computed by the caller
    /// for the observables) and the Wiener increment `dw`.
    fn advance(&self, psi: &mut [C64], a_psi: &[C64], ws: &mut Workspace, dw: f64, step: usize) -> Result<StepOutcome> {
        let s = self.collapse_scale;
        // m = <C + C†> = 2 Re <ψ|C|ψ> for normalized ψ
        let m = 2.0 * s * dot_re(psi, a_psi);
        let dt = self.dt;
        let d = self.dim;
        match self.scheme {
            Scheme::Euler | Scheme::ExponentialEuler => {
                let c_coef = s * (0.5 * m * dt + dw);
                let psi_coef = -(m * m / 8.0 * dt + 0.5 * m * dw);
                for (r, out) in ws.next.iter_mut().enumerate() {
                    let row = &self.propagator[r * d..(r + 1) * d];
                    let mut acc = C64::new(psi_coef, 0.0) * psi[r] + a_psi[r] * c_coef;
                    for (p, v) in row.iter().zip(psi.iter()) {
                        acc += p * v;
                    }
                    *out = acc;
                }
            }
            Scheme::Weak2 => self.weak2(psi, ws, dw),
        }
        let norm = l2(&ws.next);
        if !(norm >= NORM_BOUNDS.0 && norm <= NORM_BOUNDS.1) {
            return Err(Error::NormOutOfRange { step, norm });
        }
        let inv = 1.0 / norm;
        for (dst, src) in psi.iter_mut().zip(ws.next.iter()) {
            *dst = src * inv;
        }
        Ok(StepOutcome { m, dj: m * dt + dw })
    }

    /// Platen's explicit weak 2.0 step, written to `ws.next`:
    ///
    /// ```text
    /// Υ  = ψ + a dt + b dW,   Υ± = ψ + a dt ± b √dt
    /// ψ' = ψ + ½(a(Υ) + a) dt + ¼(b(Υ⁺) + b(Υ⁻) + 2b) dW
    ///        + ¼(b(Υ⁺) - b(Υ⁻)) (dW² - dt) / √dt
    /// ```
    fn weak2(&self, psi: &[C64], ws: &mut Workspace, dw: f64) {
        let dt = self.dt;
        let sq = dt.sqrt();
        self.drift(psi, &mut ws.lowered, &mut ws.drift);
        self.diffusion(psi, &mut ws.lowered, &mut ws.diffusion);

        // ψ' accumulates in ws.acc
        for i in 0..self.dim {
            ws.acc[i] = psi[i] + ws.drift[i] * (0.5 * dt) + ws.diffusion[i] * (0.5 * dw);
        }

        // a(Υ)
        for i in 0..self.dim {
            ws.support[i] = psi[i] + ws.drift[i] * dt + ws.diffusion[i] * dw;
        }
        self.drift(&ws.support, &mut ws.lowered, &mut ws.tmp);
        for i in 0..self.dim {
            ws.acc[i] += ws.tmp[i] * (0.5 * dt);
        }

        let corr = (dw * dw - dt) / sq;
        for sign in [1.0, -1.0] {
            for i in 0..self.dim {
                ws.support[i] = psi[i] + ws.drift[i] * dt + ws.diffusion[i] * (sign * sq);
            }
            self.diffusion(&ws.support, &mut ws.lowered, &mut ws.tmp);
            let coef = 0.25 * dw + sign * 0.25 * corr;
            for i in 0..self.dim {
                ws.acc[i] += ws.tmp[i] * coef;
            }
        }
        ws.next.copy_from_slice(&ws.acc);
    }

    /// One homodyne step from `psi` with increment `dw`.
    pub fn step(&self, psi: &QuantumState, dw: f64) -> Result<(QuantumState, StepOutcome)> {
        if psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: psi.dim(),
            });
        }
        let mut v = psi.0.clone();
        let mut a_psi = vec![ZERO; self.dim];
        let mut ws = Workspace::new(self.dim);
        self.lower.apply_into(&v, &mut a_psi);
        let out = self.advance(&mut v, &a_psi, &mut ws, dw, 0)?;
        Ok((QuantumState(v), out))
    }
}

fn dot_re(u: &[C64], v: &[C64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Plain Itô–Euler homodyne step
///
/// `dψ = [-iH - ½(C†C - mC + m²/4)]ψ dt + (C - m/2)ψ dW`, `m = ⟨C + C†⟩`,
///
/// followed by renormalization. Returns the new state and `dJ = m dt + dW`.
pub fn homodyne_step(psi: &QuantumState, sys: &OpenSystem, dt: f64, dw: f64) -> Result<(QuantumState, f64)> {
    let stepper = HomodyneStepper::new(sys, dt, Scheme::Euler)?;
    let (next, out) = stepper.step(psi, dw)?;
    Ok((next, out.dj))
}

/// One simulated measurement shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub label: Qubit,
    pub seed: u64,
    pub dt: f64,
    /// Conditional `⟨a + a†⟩`.
    pub x_mean: Vec<f64>,
    /// Conditional `⟨a†a⟩`.
    pub n_mean: Vec<f64>,
    /// Conditional `⟨σ_z⟩`; absent in the dispersive model.
    pub sz_mean: Option<Vec<f64>>,
    /// Record increments; `current[i]` is `dJ` over the step ending at
    /// `times[i]`, and `current[0] = 0`.
    pub current: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.x_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_mean.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}

/// Limits and integrator choice for [`simulate_trajectory_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// `None` picks [`Scheme::default_for`] the model.
    pub scheme: Option<Scheme>,
    pub t_max_cap: f64,
    pub dt_min: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            scheme: None,
            t_max_cap: DEFAULT_T_MAX_CAP,
            dt_min: DEFAULT_DT_MIN,
        }
    }
}

fn grid_steps(t_max: f64, dt: f64, gamma: f64, opts: &SimOptions) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if dt < opts.dt_min / gamma * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "dt = {dt} is below the minimum resolution {}",
            opts.dt_min / gamma
        )));
    }
    if !(t_max >= dt * (1.0 - 1e-9)) || t_max > opts.t_max_cap * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "t_max = {t_max} must lie in [dt, {}]",
            opts.t_max_cap
        )));
    }
    Ok((t_max / dt).round() as usize)
}

/// Builds the system a trajectory of `label` evolves under.
fn system_for(p: &SystemParams, model: Model, label: Qubit) -> Result<OpenSystem> {
    OpenSystem::for_model(p, model, label)
}

/// Runs one trajectory with a prebuilt stepper.
pub fn run_trajectory(
    stepper: &HomodyneStepper,
    initial_index: usize,
    label: Qubit,
    steps: usize,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let d = stepper.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = stepper.dt.sqrt();
    let mut psi = vec![ZERO; d];
    psi[initial_index] = C64::new(1.0, 0.0);
    let mut a_psi = vec![ZERO; d];
    let mut ws = Workspace::new(d);

    let len = steps + 1;
    let mut x_mean = Vec::with_capacity(len);
    let mut n_mean = Vec::with_capacity(len);
    let mut sz_mean = stepper.qubit.then(|| Vec::with_capacity(len));
    let mut current = Vec::with_capacity(len);
    current.push(0.0);

    for step in 0..=steps {
        stepper.lower.apply_into(&psi, &mut a_psi);
        x_mean.push(2.0 * dot_re(&psi, &a_psi));
        n_mean.push(a_psi.iter().map(|z| z.norm_sqr()).sum());
        if let Some(sz) = sz_mean.as_mut() {
            let v: f64 = psi
                .chunks_exact(2)
                .map(|pair| pair[1].norm_sqr() - pair[0].norm_sqr())
                .sum();
            sz.push(v);
        }
        if step == steps {
            break;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let out = stepper.advance(&mut psi, &a_psi, &mut ws, z * sqrt_dt, step)?;
        current.push(out.dj);
    }
    Ok(TrajectoryRecord {
        label,
        seed,
        dt: stepper.dt,
        x_mean,
        n_mean,
        sz_mean,
        current,
    })
}

/// Simulates one shot. The full model starts in vacuum⊗|label⟩; the
/// dispersive model starts in vacuum and uses `label` to pick `ω ± δω/2`.
pub fn simulate_trajectory(
    p: &SystemParams,
    model: Model,
    label: Qubit,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    simulate_trajectory_with(p, model, label, t_max, dt, seed, &SimOptions::default())
}

pub fn simulate_trajectory_with(
    p: &SystemParams,
    model: Model,
    label: Qubit,
    t_max: f64,
    dt: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<TrajectoryRecord> {
    let steps = grid_steps(t_max, dt, p.gamma, opts)?;
    let sys = system_for(p, model, label)?;
    let scheme = opts.scheme.unwrap_or(Scheme::default_for(model));
    let stepper = HomodyneStepper::new(&sys, dt, scheme)?;
    run_trajectory(&stepper, sys.initial_index(label), label, steps, seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed: `splitmix64(master ^ splitmix64(class << 32 | index))`.
///
/// Injective in `(class, index)` for `index < 2³²` since every stage is a
/// bijection on `u64`.
pub fn derive_seed(master: u64, class: u8, index: usize) -> u64 {
    let key = ((class as u64) << 32) | (index as u64 & 0xFFFF_FFFF);
    splitmix64(master ^ splitmix64(key))
}

/// The on-disk experiment artifact: labeled shots plus how they were made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub params: SystemParams,
    pub model: Model,
    pub dt: f64,
    pub t_max: f64,
    pub n_per_class: usize,
    pub master_seed: u64,
    pub scheme: Scheme,
    /// Sorted by (class, index).
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryDataset {
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label.label()).collect()
    }

    pub fn class_records(&self, label: Qubit) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(move |r| r.label == label)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GenerateOptions {
    pub sim: SimOptions,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

pub fn generate_dataset(
    p: &SystemParams,
    model: Model,
    n_per_class: usize,
    t_max: f64,
    dt: f64,
    master_seed: u64,
) -> Result<TrajectoryDataset> {
    generate_dataset_with(p, model, n_per_class, t_max, dt, master_seed, &GenerateOptions::default())
}

/// Generates `n_per_class` shots for each qubit state. Output is identical
/// for any worker count.
pub fn generate_dataset_with(
    p: &SystemParams,
    model: Model,
    n_per_class: usize,
    t_max: f64,
    dt: f64,
    master_seed: u64,
    opts: &GenerateOptions,
) -> Result<TrajectoryDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    p.validate()?;
    let steps = grid_steps(t_max, dt, p.gamma, &opts.sim)?;
    let scheme = opts.sim.scheme.unwrap_or(Scheme::default_for(model));
    let mut steppers = Vec::with_capacity(2);
    for label in Qubit::BOTH {
        let sys = system_for(p, model, label)?;
        let stepper = HomodyneStepper::new(&sys, dt, scheme)?;
        steppers.push((stepper, sys.initial_index(label)));
    }
    let jobs: Vec<(Qubit, usize)> = Qubit::BOTH
        .iter()
        .flat_map(|&q| (0..n_per_class).map(move |i| (q, i)))
        .collect();
    let seeds: Vec<u64> = jobs.iter().map(|&(q, i)| derive_seed(master_seed, q.label(), i)).collect();
    debug_assert_eq!(seeds.iter().collect::<HashSet<_>>().len(), seeds.len());

    let work = || -> Result<Vec<TrajectoryRecord>> {
        jobs.par_iter()
            .zip(seeds.par_iter())
            .map(|(&(q, i), &seed)| {
                let (stepper, init) = &steppers[q.label() as usize];
                run_trajectory(stepper, *init, q, steps, seed).map_err(|e| Error::Trajectory {
                    class: q.label(),
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let records = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(TrajectoryDataset {
        params: p.clone(),
        model,
        dt,
        t_max,
        n_per_class,
        master_seed,
        scheme,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Space;
    use crate::master::{lindblad_rhs, DensityMatrix};
    use rand_distr::Normal;

    fn small_params() -> SystemParams {
        let mut p = SystemParams::reference();
        p.n_fock = 10;
        p
    }

    #[test]
    fn vacuum_is_untouched_without_drive() {
        let sys = OpenSystem::new(Space::coupled(4), OperatorMatrix::zeros(8), 1.0).unwrap();
        for idx in [0, 1] {
            let psi = QuantumState::basis(8, idx);
            for dw in [-0.3, 0.0, 0.05] {
                let (next, dj) = homodyne_step(&psi, &sys, 1e-3, dw).unwrap();
                assert_eq!(next, psi);
                assert_eq!(dj, dw);
            }
        }
    }

    #[test]
    fn zero_noise_on_vacuum_gives_zero_record() {
        let sys = OpenSystem::new(Space::resonator(4), OperatorMatrix::zeros(4), 1.0).unwrap();
        let (_, dj) = homodyne_step(&QuantumState::basis(4, 0), &sys, 1e-3, 0.0).unwrap();
        assert_eq!(dj, 0.0);
    }

    #[test]
    fn step_keeps_unit_norm() {
        let p = small_params();
        let sys = OpenSystem::dispersive(&p, Qubit::Down).unwrap();
        let psi = QuantumState::new((0..10).map(|k| C64::new(1.0, 0.1 * k as f64)).collect()).unwrap();
        for scheme in [Scheme::Euler, Scheme::ExponentialEuler, Scheme::Weak2] {
            let stepper = HomodyneStepper::new(&sys, 1e-3, scheme).unwrap();
            let (next, _) = stepper.step(&psi, 0.02).unwrap();
            assert!((next.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn huge_step_is_rejected() {
        let sys = OpenSystem::new(Space::resonator(6), OperatorMatrix::zeros(6), 1.0).unwrap();
        let psi = QuantumState::basis(6, 5);
        let err = homodyne_step(&psi, &sys, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::NormOutOfRange { .. }));
    }

    /// Average of ψψ† over many increments reproduces one Euler step of the
    /// master equation.
    #[test]
    fn ensemble_step_matches_master_equation() {
        for scheme in [Scheme::Euler, Scheme::ExponentialEuler, Scheme::Weak2] {
            ensemble_step_check(scheme);
        }
    }

    fn ensemble_step_check(scheme: Scheme) {
        let mut p = SystemParams::reference();
        p.n_fock = 6;
        let sys = OpenSystem::dispersive(&p, Qubit::Down).unwrap();
        let psi = QuantumState::new(vec![
            C64::new(0.6, 0.0),
            C64::new(0.3, 0.2),
            C64::new(-0.4, 0.1),
            C64::new(0.2, -0.3),
            C64::new(0.1, 0.05),
            C64::new(0.0, 0.1),
        ])
        .unwrap();
        let dt = 1e-3;
        let stepper = HomodyneStepper::new(&sys, dt, scheme).unwrap();
        let normal = Normal::new(0.0, dt.sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = 20_000;
        let d = psi.dim();
        let mut mean = DMatrix::<C64>::zeros(d, d);
        let mut sq = DMatrix::<f64>::zeros(d, d);
        for _ in 0..pairs {
            // antithetic pairs cancel the O(dW) fluctuation exactly
            let z: f64 = normal.sample(&mut rng);
            let (plus, _) = stepper.step(&psi, z).unwrap();
            let (minus, _) = stepper.step(&psi, -z).unwrap();
            let avg = (plus.projector() + minus.projector()) * C64::new(0.5, 0.0);
            for r in 0..d {
                for c in 0..d {
                    mean[(r, c)] += avg[(r, c)];
                    sq[(r, c)] += avg[(r, c)].norm_sqr();
                }
            }
        }
        let nf = pairs as f64;
        let rho0 = DensityMatrix::from_pure(psi.amplitudes());
        let rhs = lindblad_rhs(&rho0, &sys).unwrap();
        for r in 0..d {
            for c in 0..d {
                let avg = mean[(r, c)] / nf;
                let expected = rho0.matrix()[(r, c)] + rhs.get(r, c) * dt;
                let var = sq[(r, c)] / nf - avg.norm_sqr();
                let se = (var.max(0.0) / nf).sqrt();
                let err = (avg - expected).norm();
                assert!(err < 3.0 * se + 20.0 * dt * dt, "{scheme:?} ({r},{c}): err {err:e}, se {se:e}");
            }
        }
    }

    #[test]
    fn undriven_cavity_stays_empty() {
        let mut p = SystemParams::bare(6);
        p.delta_omega = Some(2.3);
        let dt = 1e-3;
        for q in Qubit::BOTH {
            let rec = simulate_trajectory(&p, Model::Dispersive, q, 1.0, dt, 3).unwrap();
            assert!(rec.n_mean.iter().all(|&n| n < 10.0 * dt));
            assert!(rec.sz_mean.is_none());
        }
    }

    #[test]
    fn same_seed_same_record() {
        let p = small_params();
        let a = simulate_trajectory(&p, Model::Dispersive, Qubit::Down, 0.5, 1e-3, 11).unwrap();
        let b = simulate_trajectory(&p, Model::Dispersive, Qubit::Down, 0.5, 1e-3, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&p, Model::Dispersive, Qubit::Down, 0.5, 1e-3, 12).unwrap();
        assert_ne!(a.x_mean, c.x_mean);
    }

    #[test]
    fn record_layout() {
        let p = small_params();
        let rec = simulate_trajectory(&p, Model::Full, Qubit::Up, 0.25, 1e-3, 1).unwrap();
        assert_eq!(rec.len(), 251);
        assert_eq!(rec.current.len(), 251);
        assert_eq!(rec.sz_mean.as_ref().unwrap().len(), 251);
        assert_eq!(rec.sz_mean.as_ref().unwrap()[0], 1.0);
        assert_eq!(rec.current[0], 0.0);
        assert_eq!(rec.times()[250], 0.25);
    }

    #[test]
    fn grid_limits() {
        let p = small_params();
        assert!(simulate_trajectory(&p, Model::Dispersive, Qubit::Up, 16.0, 1e-3, 0).is_err());
        assert!(simulate_trajectory(&p, Model::Dispersive, Qubit::Up, 1.0, 1e-4, 0).is_err());
        assert!(simulate_trajectory(&p, Model::Dispersive, Qubit::Up, 1e-4, 1e-3, 0).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = HashSet::new();
        for class in 0..2u8 {
            for i in 0..5000 {
                assert!(seen.insert(derive_seed(42, class, i)));
            }
        }
        assert_eq!(derive_seed(42, 1, 3), derive_seed(42, 1, 3));
        assert_ne!(derive_seed(42, 1, 3), derive_seed(43, 1, 3));
    }

    #[test]
    fn small_dataset_layout() {
        let p = small_params();
        let ds = generate_dataset(&p, Model::Dispersive, 1, 0.1, 1e-3, 5).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.labels(), vec![0, 1]);
        assert_eq!(ds.records[0].seed, derive_seed(5, 0, 0));
        assert!(generate_dataset(&p, Model::Dispersive, 0, 0.1, 1e-3, 5).is_err());
    }

    #[test]
    fn record_increments_are_drift_plus_noise() {
        let p = small_params();
        let rec = simulate_trajectory(&p, Model::Dispersive, Qubit::Down, 2.0, 1e-3, 9).unwrap();
        let s = (2.0 * p.gamma).sqrt();
        let dt = rec.dt;
        let noise: Vec<f64> = (1..rec.len())
            .map(|i| rec.current[i] - s * rec.x_mean[i - 1] * dt)
            .collect();
        let n = noise.len() as f64;
        let mean = noise.iter().sum::<f64>() / n;
        let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * (var / n).sqrt());
        assert!((var / dt - 1.0).abs() < 0.05);
    }
}
