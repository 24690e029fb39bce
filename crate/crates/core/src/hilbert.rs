//! Operators and Hamiltonians of the resonator–qubit system on a truncated
//! Fock basis.
//!
//! The composite basis is ordered resonator⊗qubit: the state |n, s⟩ sits at
//! index `2 * n + s`, with `s = 0` for |↓⟩ and `s = 1` for |↑⟩. All matrices
//! are dense; the largest space used in practice has a few dozen levels.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance for `delta_omega == g² / Δ`.
pub const DISPERSIVE_CONSISTENCY_TOL: f64 = 1e-9;

/// Square complex matrix acting on the resonator, the qubit, or both.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<C64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert!(m.is_square(), "operator matrices are square");
        OperatorMatrix(m)
    }

    /// Builds a `dim × dim` matrix from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        OperatorMatrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Self {
        let c: Vec<C64> = entries.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::from_rows(dim, &c)
    }

    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = DMatrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        OperatorMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix(self.0.adjoint())
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        OperatorMatrix(&self.0 * factor.into())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self * other - other * self
    }

    /// Applies the operator to a column vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim());
        let n = self.dim();
        (0..n)
            .map(|r| (0..n).map(|c| self.0[(r, c)] * v[c]).sum())
            .collect()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |H - H†|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    /// Extracts the sub-block on a list of basis indices.
    pub fn block(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        OperatorMatrix(DMatrix::from_fn(k, k, |r, c| {
            self.0[(indices[r], indices[c])]
        }))
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(self.0 + rhs.0)
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 - &rhs.0)
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(self.0 - rhs.0)
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

impl Mul for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(self.0 * rhs.0)
    }
}

/// Nonzero entries of an operator, for hot loops over structured matrices
/// such as ladder operators.
#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(op: &OperatorMatrix) -> Self {
        let n = op.dim();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = op.get(r, c);
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        SparseOp { dim: n, entries }
    }

    /// `out = A v`
    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for &(r, c, a) in &self.entries {
            out[r] += a * v[c];
        }
    }

    /// `A ρ A†` for a dense `ρ`.
    pub fn conjugate(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for &(j, l, ajl) in &self.entries {
            let ajl = ajl.conj();
            for &(i, k, aik) in &self.entries {
                out[(i, j)] += aik * rho[(k, l)] * ajl;
            }
        }
        out
    }
}

/// Initial qubit state, doubling as the class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    Down = 0,
    Up = 1,
}

impl Qubit {
    pub const BOTH: [Qubit; 2] = [Qubit::Down, Qubit::Up];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(Qubit::Down),
            1 => Ok(Qubit::Up),
            other => Err(Error::invalid(format!("qubit label must be 0 or 1, got {other}"))),
        }
    }

    /// `+1` for |↑⟩ and `-1` for |↓⟩.
    pub fn sign(self) -> f64 {
        match self {
            Qubit::Down => -1.0,
            Qubit::Up => 1.0,
        }
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qubit::Down => "down",
            Qubit::Up => "up",
        })
    }
}

/// Which Hamiltonian drives the resonator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Resonator⊗qubit with the exchange coupling `g`.
    Full,
    /// Resonator alone, with the qubit entering as a frequency shift `±δω/2`.
    #[default]
    Dispersive,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Full => "full",
            Model::Dispersive => "dispersive",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Model::Full),
            "dispersive" => Ok(Model::Dispersive),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// Physical constants, all in units of the dissipation rate Γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    /// Pump–resonator detuning.
    pub omega: f64,
    /// Qubit frequency.
    pub omega_q: f64,
    /// Two-photon pump amplitude.
    pub epsilon: f64,
    /// Kerr non-linearity.
    pub chi: f64,
    /// Qubit–resonator exchange coupling.
    pub g: Option<f64>,
    /// Dissipation rate; sets the time unit.
    pub gamma: f64,
    /// Dispersive shift between the two qubit states.
    pub delta_omega: Option<f64>,
    /// Fock truncation.
    pub n_fock: usize,
}

impl SystemParams {
    /// Pump power and dispersive shift of the reference readout point, with
    /// the resonator tuned to the critical frequency and `g` chosen so that
    /// `g² / Δ = δω` at `Δ = 100 Γ`.
    pub fn reference() -> Self {
        let epsilon = 1.67;
        let gamma = 1.0;
        let delta_omega = 2.3;
        let detuning = 100.0;
        let omega = critical_frequency(epsilon, gamma).expect("reference pump is above threshold");
        SystemParams {
            omega,
            omega_q: omega + detuning,
            epsilon,
            chi: 0.1,
            g: Some((delta_omega * detuning).sqrt()),
            gamma,
            delta_omega: Some(delta_omega),
            n_fock: 25,
        }
    }

    /// All couplings zero, unit dissipation.
    pub fn bare(n_fock: usize) -> Self {
        SystemParams {
            omega: 0.0,
            omega_q: 0.0,
            epsilon: 0.0,
            chi: 0.0,
            g: None,
            gamma: 1.0,
            delta_omega: None,
            n_fock,
        }
    }

    /// Qubit–resonator detuning `|ω_q - ω|`.
    pub fn detuning(&self) -> f64 {
        (self.omega_q - self.omega).abs()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.omega_q, self.epsilon, self.chi, self.gamma]
            .iter()
            .chain(self.g.iter())
            .chain(self.delta_omega.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("system parameters must be finite"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.n_fock < 2 {
            return Err(Error::invalid(format!("n_fock must be >= 2, got {}", self.n_fock)));
        }
        if self.epsilon < 0.0 {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.chi < 0.0 {
            return Err(Error::invalid(format!("chi must be >= 0, got {}", self.chi)));
        }
        if let (Some(g), Some(dw)) = (self.g, self.delta_omega) {
            let detuning = self.detuning();
            if detuning == 0.0 {
                return Err(Error::invalid("dispersive shift needs omega_q != omega"));
            }
            let implied = g * g / detuning;
            let scale = dw.abs().max(implied.abs()).max(f64::MIN_POSITIVE);
            if (implied - dw).abs() > DISPERSIVE_CONSISTENCY_TOL * scale {
                return Err(Error::invalid(format!(
                    "delta_omega = {dw} inconsistent with g²/Δ = {implied}"
                )));
            }
        }
        Ok(())
    }

    /// Resonator frequency seen with the qubit in `qubit`.
    pub fn shifted_omega(&self, qubit: Qubit) -> Result<f64> {
        let dw = self
            .delta_omega
            .ok_or_else(|| Error::invalid("dispersive model requires delta_omega"))?;
        Ok(self.omega + qubit.sign() * dw / 2.0)
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Truncated bosonic lowering operator: `⟨m|a|m+1⟩ = √(m+1)`.
pub fn annihilation(n_fock: usize) -> Result<OperatorMatrix> {
    if n_fock < 2 {
        return Err(Error::invalid(format!("n_fock must be >= 2, got {n_fock}")));
    }
    let mut m = DMatrix::zeros(n_fock, n_fock);
    for k in 0..n_fock - 1 {
        m[(k, k + 1)] = C64::new(((k + 1) as f64).sqrt(), 0.0);
    }
    Ok(OperatorMatrix(m))
}

/// `(σ⁻, σ⁺, σ_z)` in the basis (|↓⟩, |↑⟩).
pub fn qubit_ops() -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let lower = OperatorMatrix::from_rows(2, &[ZERO, ONE, ZERO, ZERO]);
    let raise = lower.adjoint();
    let sz = OperatorMatrix::diagonal(&[-1.0, 1.0]);
    (lower, raise, sz)
}

/// Tensor product `a ⊗ b`.
pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix(a.0.kronecker(&b.0))
}

/// `ω a†a + (ε/2)(a†² + a²) + χ a†²a²` on the resonator alone.
fn resonator_hamiltonian(omega: f64, epsilon: f64, chi: f64, n_fock: usize) -> Result<OperatorMatrix> {
    let a = annihilation(n_fock)?;
    let ad = a.adjoint();
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let number = &ad * &a;
    let pump = &ad2 + &a2;
    let kerr = &ad2 * &a2;
    Ok(number.scale(omega) + pump.scale(epsilon / 2.0) + kerr.scale(chi))
}

/// Driven Kerr resonator coupled to the qubit by exchange, on the
/// `2 * n_fock` dimensional resonator⊗qubit space.
pub fn hamiltonian_full(p: &SystemParams) -> Result<OperatorMatrix> {
    p.validate()?;
    let id_q = OperatorMatrix::identity(2);
    let id_r = OperatorMatrix::identity(p.n_fock);
    let (sm, sp, _) = qubit_ops();
    let a = kron(&annihilation(p.n_fock)?, &id_q);
    let ad = a.adjoint();
    let resonator = kron(&resonator_hamiltonian(p.omega, p.epsilon, p.chi, p.n_fock)?, &id_q);
    let qubit = kron(&id_r, &(&sp * &sm)).scale(p.omega_q);
    let g = p.g.unwrap_or(0.0);
    let exchange = (&ad * &kron(&id_r, &sm)) + (&a * &kron(&id_r, &sp));
    Ok(resonator + qubit + exchange.scale(g))
}

/// Resonator Hamiltonian with the qubit state folded into `ω ± δω/2`.
pub fn hamiltonian_dispersive(p: &SystemParams, qubit: Qubit) -> Result<OperatorMatrix> {
    p.validate()?;
    let omega = p.shifted_omega(qubit)?;
    resonator_hamiltonian(omega, p.epsilon, p.chi, p.n_fock)
}

/// Detuning `√(ε² - Γ²)` at which the two-photon driven resonator switches
/// between its empty and populated phases.
pub fn critical_frequency(epsilon: f64, gamma: f64) -> Result<f64> {
    if !(epsilon >= gamma) || gamma <= 0.0 {
        return Err(Error::invalid(format!(
            "no critical point for epsilon = {epsilon} below gamma = {gamma}"
        )));
    }
    Ok((epsilon * epsilon - gamma * gamma).sqrt())
}

/// The Hilbert space a simulation runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Space {
    pub n_fock: usize,
    pub with_qubit: bool,
}

impl Space {
    pub fn resonator(n_fock: usize) -> Self {
        Space { n_fock, with_qubit: false }
    }

    pub fn coupled(n_fock: usize) -> Self {
        Space { n_fock, with_qubit: true }
    }

    pub fn for_model(model: Model, n_fock: usize) -> Self {
        match model {
            Model::Full => Self::coupled(n_fock),
            Model::Dispersive => Self::resonator(n_fock),
        }
    }

    pub fn dim(&self) -> usize {
        if self.with_qubit {
            2 * self.n_fock
        } else {
            self.n_fock
        }
    }

    fn lift(&self, resonator_op: OperatorMatrix) -> OperatorMatrix {
        if self.with_qubit {
            kron(&resonator_op, &OperatorMatrix::identity(2))
        } else {
            resonator_op
        }
    }

    /// Resonator lowering operator on this space.
    pub fn annihilation(&self) -> Result<OperatorMatrix> {
        Ok(self.lift(annihilation(self.n_fock)?))
    }

    pub fn number(&self) -> Result<OperatorMatrix> {
        let a = self.annihilation()?;
        Ok(&a.adjoint() * &a)
    }

    /// `a + a†`
    pub fn x_quadrature(&self) -> Result<OperatorMatrix> {
        let a = self.annihilation()?;
        Ok(&a + &a.adjoint())
    }

    /// `I ⊗ σ_z`, absent on the bare resonator.
    pub fn sigma_z(&self) -> Option<OperatorMatrix> {
        self.with_qubit
            .then(|| kron(&OperatorMatrix::identity(self.n_fock), &qubit_ops().2))
    }

    /// Basis index of |n⟩ or |n, s⟩.
    pub fn index(&self, n: usize, qubit: Option<Qubit>) -> usize {
        match (self.with_qubit, qubit) {
            (true, Some(q)) => 2 * n + q.label() as usize,
            (true, None) => 2 * n,
            (false, _) => n,
        }
    }
}

/// A Hamiltonian plus single-photon loss at rate `2Γ` from the resonator.
#[derive(Clone, Debug)]
pub struct OpenSystem {
    pub space: Space,
    pub hamiltonian: OperatorMatrix,
    pub gamma: f64,
    annihilation: OperatorMatrix,
}

impl OpenSystem {
    pub fn new(space: Space, hamiltonian: OperatorMatrix, gamma: f64) -> Result<Self> {
        if hamiltonian.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: hamiltonian.dim(),
            });
        }
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        let annihilation = space.annihilation()?;
        Ok(OpenSystem {
            space,
            hamiltonian,
            gamma,
            annihilation,
        })
    }

    pub fn dispersive(p: &SystemParams, qubit: Qubit) -> Result<Self> {
        Self::new(Space::resonator(p.n_fock), hamiltonian_dispersive(p, qubit)?, p.gamma)
    }

    pub fn full(p: &SystemParams) -> Result<Self> {
        Self::new(Space::coupled(p.n_fock), hamiltonian_full(p)?, p.gamma)
    }

    /// The dispersive model needs the qubit state to pick its Hamiltonian; the
    /// full model does not.
    pub fn for_model(p: &SystemParams, model: Model, qubit: Qubit) -> Result<Self> {
        match model {
            Model::Full => Self::full(p),
            Model::Dispersive => Self::dispersive(p, qubit),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn annihilation(&self) -> &OperatorMatrix {
        &self.annihilation
    }

    /// Initial state index: vacuum, tensored with the qubit state in the full model.
    pub fn initial_index(&self, qubit: Qubit) -> usize {
        self.space.index(0, Some(qubit))
    }
}
