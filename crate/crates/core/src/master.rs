//! Deterministic Lindblad evolution with single-photon loss,
//!
//! `dρ/dt = -i[H, ρ] + Γ(2aρa† - a†aρ - ρa†a)`,
//!
//! integrated with fixed-step classical RK4.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{OpenSystem, OperatorMatrix, SparseOp, C64};

/// Trace drift that aborts an evolution.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Default master-equation step, shared with the trajectory grid.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    /// Projector onto a basis state.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// `|ψ⟩⟨ψ|`, normalized.
    pub fn from_pure(psi: &[C64]) -> Self {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let n = psi.len();
        DensityMatrix(DMatrix::from_fn(n, n, |r, c| psi[r] * psi[c].conj() / norm2))
    }

    /// Wraps a matrix without checking the state invariants.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        DensityMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        OperatorMatrix::from_matrix(self.0.clone()).hermiticity_defect()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the trace, Hermiticity and positivity invariants.
    pub fn is_physical(&self) -> bool {
        (self.trace() - C64::new(1.0, 0.0)).norm() < 1e-8
            && self.hermiticity_defect() < 1e-10
            && self.min_eigenvalue() >= -1e-8
    }
}

/// Expectation values `Tr(O ρ(t))` on the evolution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub observable_name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ObservableSeries {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("series has at least one point")
    }

    /// Value at the grid point closest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let dt = self.times.get(1).map_or(1.0, |t1| t1 - self.times[0]);
        let i = ((t - self.times[0]) / dt).round().max(0.0) as usize;
        self.values[i.min(self.values.len() - 1)]
    }
}

/// `Tr(O ρ)`.
pub fn expect(op: &OperatorMatrix, rho: &DensityMatrix) -> Result<C64> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: op.dim(),
        });
    }
    Ok(trace_product(op.matrix(), rho.matrix()))
}

fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Precomputed pieces of the generator: `K = -iH - Γ a†a`, so that the
/// right-hand side reads `Kρ + ρK† + 2Γ aρa†`.
struct Generator {
    k: DMatrix<C64>,
    jump: SparseOp,
    two_gamma: f64,
}

impl Generator {
    fn new(sys: &OpenSystem) -> Self {
        let a = sys.annihilation();
        let number = (&a.adjoint() * a).into_matrix();
        let k = sys.hamiltonian.matrix() * C64::new(0.0, -1.0) - number * C64::new(sys.gamma, 0.0);
        Generator {
            k,
            jump: SparseOp::from_dense(a),
            two_gamma: 2.0 * sys.gamma,
        }
    }

    fn general(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        &self.k * rho + rho * self.k.adjoint() + self.jump.conjugate(rho) * C64::new(self.two_gamma, 0.0)
    }

    /// Same as `general` for Hermitian `rho`, with one dense product.
    /// For non-Hermitian input it is not the Lindblad generator.
    fn hermitian(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let m = &self.k * rho;
        let mut out = m.adjoint();
        out += m;
        out += self.jump.conjugate(rho) * C64::new(self.two_gamma, 0.0);
        out
    }

    fn rk4(&self, rho: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
        let h = C64::new(dt, 0.0);
        let half = C64::new(dt / 2.0, 0.0);
        let k1 = self.hermitian(rho);
        let k2 = self.hermitian(&(rho + &k1 * half));
        let k3 = self.hermitian(&(rho + &k2 * half));
        let k4 = self.hermitian(&(rho + &k3 * h));
        let next = rho + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        // `hermitian` is unstable on anti-Hermitian components; drop the
        // rounding-level ones each step.
        (next.adjoint() + &next) * C64::new(0.5, 0.0)
    }
}

/// Lindblad right-hand side `-i[H,ρ] + Γ(2aρa† - a†aρ - ρa†a)`.
///
/// The result is traceless, so it is returned as a plain operator.
pub fn lindblad_rhs(rho: &DensityMatrix, sys: &OpenSystem) -> Result<OperatorMatrix> {
    if rho.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: rho.dim(),
        });
    }
    Ok(OperatorMatrix::from_matrix(Generator::new(sys).general(rho.matrix())))
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Eigenvalue check interval in steps; `None` skips positivity checks.
    pub positivity_every: Option<usize>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            positivity_every: None,
        }
    }
}

/// Worst invariant violations seen along an evolution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    /// `+inf` if positivity was never checked.
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub series: Vec<ObservableSeries>,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
}

fn check_grid(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(t_max >= dt * (1.0 - 1e-9)) {
        return Err(Error::invalid(format!("t_max = {t_max} must be >= dt = {dt}")));
    }
    Ok((t_max / dt).round() as usize)
}

/// Evolves `rho0` to `t_max` recording `Tr(O ρ)` for each named observable
/// at every step, including `t = 0`.
pub fn evolve_master(
    rho0: &DensityMatrix,
    sys: &OpenSystem,
    t_max: f64,
    dt: f64,
    record: &[(&str, &OperatorMatrix)],
) -> Result<Evolution> {
    evolve_master_with(rho0, sys, t_max, dt, record, &EvolveOptions::default())
}

pub fn evolve_master_with(
    rho0: &DensityMatrix,
    sys: &OpenSystem,
    t_max: f64,
    dt: f64,
    record: &[(&str, &OperatorMatrix)],
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let steps = check_grid(t_max, dt)?;
    if rho0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: rho0.dim(),
        });
    }
    for (_, op) in record {
        if op.dim() != sys.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.dim(),
                got: op.dim(),
            });
        }
    }
    let gen = Generator::new(sys);
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); record.len()];
    let mut diag = Diagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut rho = rho0.matrix().clone();

    for step in 0..=steps {
        if step > 0 {
            rho = gen.rk4(&rho, dt);
        }
        let state = DensityMatrix(rho);
        let drift = (state.trace() - C64::new(1.0, 0.0)).norm();
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::TraceDrift {
                step,
                t: times[step],
                drift,
                dt,
            });
        }
        diag.max_trace_drift = diag.max_trace_drift.max(drift);
        diag.max_hermiticity_defect = diag.max_hermiticity_defect.max(state.hermiticity_defect());
        if let Some(every) = opts.positivity_every {
            if every > 0 && (step % every == 0 || step == steps) {
                diag.min_eigenvalue = diag.min_eigenvalue.min(state.min_eigenvalue());
            }
        }
        for ((_, op), vals) in record.iter().zip(values.iter_mut()) {
            vals.push(trace_product(op.matrix(), state.matrix()).re);
        }
        rho = state.0;
    }

    let series = record
        .iter()
        .zip(values)
        .map(|((name, _), values)| ObservableSeries {
            observable_name: name.to_string(),
            times: times.clone(),
            values,
        })
        .collect();
    Ok(Evolution {
        series,
        final_state: DensityMatrix(rho),
        diagnostics: diag,
    })
}

#[derive(Clone, Debug)]
pub struct SteadyStateOptions {
    pub tol: f64,
    pub dt: f64,
    pub max_time: f64,
    /// Steps between residual evaluations.
    pub check_every: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            tol: 1e-9,
            dt: 1e-2,
            max_time: 200.0,
            check_every: 50,
        }
    }
}

/// Evolves from the vacuum (basis index 0) until `max |rhs| < tol`.
pub fn steady_state(sys: &OpenSystem, tol: f64) -> Result<DensityMatrix> {
    steady_state_with(
        sys,
        &DensityMatrix::basis(sys.dim(), 0),
        &SteadyStateOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn steady_state_with(
    sys: &OpenSystem,
    rho0: &DensityMatrix,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tol must be > 0, got {}", opts.tol)));
    }
    let max_steps = check_grid(opts.max_time, opts.dt)?;
    let every = opts.check_every.max(1);
    let gen = Generator::new(sys);
    let mut rho = rho0.matrix().clone();
    let mut residual = f64::INFINITY;
    for step in 0..=max_steps {
        if step % every == 0 || step == max_steps {
            residual = gen.hermitian(&rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if residual < opts.tol {
                return Ok(DensityMatrix(rho));
            }
            let drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
            if drift > TRACE_DRIFT_LIMIT {
                return Err(Error::TraceDrift {
                    step,
                    t: step as f64 * opts.dt,
                    drift,
                    dt: opts.dt,
                });
            }
        }
        if step < max_steps {
            rho = gen.rk4(&rho, opts.dt);
        }
    }
    Err(Error::NonConvergence {
        what: "steady state",
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{qubit_ops, Qubit, Space, SystemParams};

    fn free_resonator(n: usize) -> OpenSystem {
        OpenSystem::new(Space::resonator(n), OperatorMatrix::zeros(n), 1.0).unwrap()
    }

    #[test]
    fn dissipator_on_single_photon() {
        let sys = free_resonator(4);
        let rhs = lindblad_rhs(&DensityMatrix::basis(4, 1), &sys).unwrap();
        let expected = OperatorMatrix::diagonal(&[2.0, -2.0, 0.0, 0.0]);
        assert!((&rhs - &expected).max_abs() < 1e-14);
        assert!(rhs.matrix().trace().norm() < 1e-14);
    }

    #[test]
    fn vacuum_is_free_steady_state() {
        let sys = free_resonator(4);
        let rhs = lindblad_rhs(&DensityMatrix::basis(4, 0), &sys).unwrap();
        assert_eq!(rhs.max_abs(), 0.0);
        let ss = steady_state(&sys, 1e-9).unwrap();
        assert_eq!(ss, DensityMatrix::basis(4, 0));
    }

    #[test]
    fn rhs_is_traceless_for_driven_system() {
        let p = SystemParams::reference();
        let sys = OpenSystem::dispersive(&p, Qubit::Down).unwrap();
        let psi: Vec<C64> = (0..p.n_fock)
            .map(|k| C64::new(1.0 / (1.0 + k as f64), 0.3 * k as f64 / 20.0))
            .collect();
        let rho = DensityMatrix::from_pure(&psi);
        let rhs = lindblad_rhs(&rho, &sys).unwrap();
        assert!(rhs.matrix().trace().norm() < 1e-12);
        assert!(rhs.hermiticity_defect() < 1e-12);
        // the single-product form agrees with the general form
        let g = Generator::new(&sys);
        let d = (g.hermitian(rho.matrix()) - g.general(rho.matrix()))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn rhs_dimension_mismatch() {
        let sys = free_resonator(4);
        assert!(matches!(
            lindblad_rhs(&DensityMatrix::basis(3, 0), &sys),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn expectation_values() {
        let rho = DensityMatrix::basis(5, 2);
        let space = Space::resonator(5);
        assert!((expect(&OperatorMatrix::identity(5), &rho).unwrap().re - 1.0).abs() < 1e-15);
        assert!((expect(&space.number().unwrap(), &rho).unwrap().re - 2.0).abs() < 1e-14);
        let coupled = Space::coupled(3);
        let up = DensityMatrix::basis(6, coupled.index(0, Some(Qubit::Up)));
        let sz = coupled.sigma_z().unwrap();
        assert!((expect(&sz, &up).unwrap().re - 1.0).abs() < 1e-15);
        assert!(expect(&qubit_ops().2, &rho).is_err());
    }

    #[test]
    fn decay_of_single_photon() {
        let sys = free_resonator(3);
        let n = sys.space.number().unwrap();
        let evo = evolve_master(&DensityMatrix::basis(3, 1), &sys, 5.0, 1e-3, &[("n", &n)]).unwrap();
        let s = &evo.series[0];
        assert_eq!(s.values.len(), 5001);
        for (t, v) in s.times.iter().zip(&s.values) {
            assert!((v - (-2.0 * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_time_normalization() {
        let sys = free_resonator(3);
        let id = OperatorMatrix::identity(3);
        let evo = evolve_master(&DensityMatrix::basis(3, 2), &sys, 1e-3, 1e-3, &[("I", &id)]).unwrap();
        assert_eq!(evo.series[0].values.len(), 2);
        assert!(evo.series[0].values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn grid_validation() {
        let sys = free_resonator(3);
        let rho = DensityMatrix::basis(3, 0);
        assert!(evolve_master(&rho, &sys, 1.0, 0.0, &[]).is_err());
        assert!(evolve_master(&rho, &sys, 1e-4, 1e-3, &[]).is_err());
    }

    #[test]
    fn oversized_step_trips_trace_check() {
        let mut p = SystemParams::reference();
        p.n_fock = 12;
        let sys = OpenSystem::dispersive(&p, Qubit::Down).unwrap();
        let psi: Vec<C64> = (0..12).map(|_| C64::new(1.0, 0.0)).collect();
        let err = evolve_master(&DensityMatrix::from_pure(&psi), &sys, 20.0, 0.5, &[]).unwrap_err();
        assert!(matches!(err, Error::TraceDrift { .. }), "{err}");
    }

    #[test]
    fn steady_state_residual_postcondition() {
        let mut p = SystemParams::reference();
        p.n_fock = 12;
        let sys = OpenSystem::dispersive(&p, Qubit::Up).unwrap();
        let ss = steady_state(&sys, 1e-9).unwrap();
        assert!(lindblad_rhs(&ss, &sys).unwrap().max_abs() < 1e-9);
        assert!(ss.is_physical());
    }

    #[test]
    fn steady_state_non_convergence_reports_residual() {
        let p = SystemParams::reference();
        let sys = OpenSystem::dispersive(&p, Qubit::Down).unwrap();
        let opts = SteadyStateOptions {
            tol: 1e-9,
            max_time: 0.5,
            ..Default::default()
        };
        match steady_state_with(&sys, &DensityMatrix::basis(sys.dim(), 0), &opts) {
            Err(Error::NonConvergence { residual, .. }) => assert!(residual > 1e-9),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
