//! Ground-truth open-system dynamics.
//!
//! Two reference models are built here. The first is a driven two-level
//! system with spontaneous decay,
//!
//!   dρ/dt = −i[ωσz, ρ] + γ(t)(σ⁻ρσ⁺ − ½{σ⁺σ⁻, ρ}),
//!
//! whose rate γ(t) is Markovian (always positive) for λ > 2γ₀ and can turn
//! negative otherwise. The second couples the qubit coherently to an
//! ancilla qubit that also decays; tracing out the ancilla yields reduced
//! single-qubit dynamics with environment back-action.
//!
//! Basis convention, used everywhere: |0⟩ is the σz eigenvector with
//! eigenvalue +1 (the excited state) and σ⁻ = |1⟩⟨0|, so diag(1,0) decays
//! toward diag(0,1).
//!
//! Ground truth is integrated with classical RK4; the integration error at
//! dt = 0.01 sits far below anything a learner could resolve.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{
    adjoint, anticommutator, commutator, herm_eig, kron, matmul, sigma_minus, sigma_x, sigma_y,
    sigma_z, CMatrix, LinalgError,
};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid decay parameters: gamma0 = {gamma0}, lambda = {lambda} (both must be > 0)")]
    InvalidDecayParams { gamma0: f64, lambda: f64 },
    #[error("decay rate singular at t = {t}: denominator magnitude {denom:.3e} < 1e-14")]
    SingularDecayRate { t: f64, denom: f64 },
    #[error("Hamiltonian is not Hermitian (defect {defect:.3e})")]
    NonHermitianHamiltonian { defect: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

const HERM_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-9;
const MIN_EIG_TOL: f64 = -1e-8;

/// A d×d complex Hermitian positive-semidefinite unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-9), unit trace (1e-9) and positivity
    /// (minimum eigenvalue ≥ −1e-8).
    pub fn new(mat: CMatrix) -> Result<Self, DynamicsError> {
        let dm = Self { mat };
        dm.validate()?;
        Ok(dm)
    }

    /// Skips validation; for constructions that guarantee validity
    /// (e.g. normalized outer products, CPTP channel outputs).
    pub fn new_unchecked(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.mat.is_square() {
            return Err(DynamicsError::InvalidState("matrix not square".into()));
        }
        let herm_defect = self.mat.hermiticity_defect();
        if herm_defect > HERM_TOL {
            return Err(DynamicsError::InvalidState(format!(
                "Hermiticity defect {herm_defect:.3e} exceeds {HERM_TOL:.0e}"
            )));
        }
        let tr = self.mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(DynamicsError::InvalidState(format!(
                "trace {tr} deviates from 1 by more than {TRACE_TOL:.0e}"
            )));
        }
        let sym = self.mat.add(&adjoint(&self.mat)).scaled_re(0.5);
        let eig = herm_eig(&sym)?;
        let min_eig = eig.eigenvalues[0];
        if min_eig < MIN_EIG_TOL {
            return Err(DynamicsError::InvalidState(format!(
                "minimum eigenvalue {min_eig:.3e} below {MIN_EIG_TOL:.0e}"
            )));
        }
        Ok(())
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(d: usize) -> Self {
        Self::new_unchecked(CMatrix::identity(d).scaled_re(1.0 / d as f64))
    }

    /// Computational basis state |k⟩⟨k|.
    pub fn basis_state(d: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(d, d);
        m.set(k, k, Complex64::ONE);
        Self::new_unchecked(m)
    }
}

/// Parameters of the time-dependent decay rate
/// γ(t) = 2γ₀λ sinh(ηt/2) / (η cosh(ηt/2) + λ sinh(ηt/2)),  η = √(λ² − 2γ₀λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    gamma0: f64,
    lambda: f64,
}

impl DecayParams {
    pub fn new(gamma0: f64, lambda: f64) -> Result<Self, DynamicsError> {
        if gamma0 <= 0.0 || lambda <= 0.0 {
            return Err(DynamicsError::InvalidDecayParams { gamma0, lambda });
        }
        Ok(Self { gamma0, lambda })
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// γ(t) is positive for all t > 0 exactly when λ > 2γ₀.
    pub fn is_markovian(&self) -> bool {
        self.lambda > 2.0 * self.gamma0
    }
}

/// Evaluate γ(t).
///
/// For λ < 2γ₀ the parameter η is imaginary and the expression is rewritten
/// with real trigonometric functions (sinh(ix) = i·sin x, cosh(ix) = cos x),
/// which keeps the arithmetic real and avoids spurious imaginary residue.
/// The rewritten denominator can vanish at resonance points; those report a
/// singular-point error.
pub fn decay_rate(t: f64, p: &DecayParams) -> Result<f64, DynamicsError> {
    let eta_sq = p.lambda * p.lambda - 2.0 * p.gamma0 * p.lambda;
    let scale = 2.0 * p.gamma0 * p.lambda;
    if eta_sq >= 0.0 {
        let eta = eta_sq.sqrt();
        let x = eta * t / 2.0;
        // sinh(ηt/2)/η stays finite as η → 0 (λ = 2γ₀ boundary).
        let sinh_over_eta = if x.abs() < 1e-8 {
            (t / 2.0) * (1.0 + x * x / 6.0)
        } else {
            x.sinh() / eta
        };
        let denom = x.cosh() + p.lambda * sinh_over_eta;
        if denom.abs() < 1e-14 {
            return Err(DynamicsError::SingularDecayRate { t, denom });
        }
        Ok(scale * sinh_over_eta / denom)
    } else {
        let eta_im = (-eta_sq).sqrt();
        let x = eta_im * t / 2.0;
        let denom = eta_im * x.cos() + p.lambda * x.sin();
        if denom.abs() < 1e-14 {
            return Err(DynamicsError::SingularDecayRate { t, denom });
        }
        Ok(scale * x.sin() / denom)
    }
}

/// A jump rate as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFn {
    Constant(f64),
    Decay(DecayParams),
}

impl RateFn {
    pub fn eval(&self, t: f64) -> Result<f64, DynamicsError> {
        match self {
            RateFn::Constant(g) => Ok(*g),
            RateFn::Decay(p) => decay_rate(t, p),
        }
    }
}

/// One dissipation channel: operator L_μ with rate γ_μ(t).
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub operator: CMatrix,
    pub rate: RateFn,
}

/// Hamiltonian plus jump operators with time-dependent rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    hamiltonian: CMatrix,
    jumps: Vec<Jump>,
}

impl LindbladModel {
    pub fn new(hamiltonian: CMatrix, jumps: Vec<Jump>) -> Result<Self, DynamicsError> {
        let defect = hamiltonian.hermiticity_defect();
        if defect > 1e-10 {
            return Err(DynamicsError::NonHermitianHamiltonian { defect });
        }
        let d = hamiltonian.rows();
        for j in &jumps {
            assert_eq!(
                (j.operator.rows(), j.operator.cols()),
                (d, d),
                "jump operator dimension mismatch"
            );
        }
        Ok(Self { hamiltonian, jumps })
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }
}

/// Driven two-level system with decay: H = ωσz, single jump σ⁻ at rate γ(t).
pub fn two_level_model(omega: f64, decay: DecayParams) -> LindbladModel {
    LindbladModel::new(
        sigma_z().scaled_re(omega),
        vec![Jump {
            operator: sigma_minus(),
            rate: RateFn::Decay(decay),
        }],
    )
    .expect("σz is Hermitian")
}

/// H = ω σz⊗I + c₁ σx⊗σx + c₂ σy⊗σy + c₃ σz⊗σz.
pub fn two_qubit_hamiltonian(omega: f64, c1: f64, c2: f64, c3: f64) -> CMatrix {
    let i2 = CMatrix::identity(2);
    kron(&sigma_z(), &i2)
        .scaled_re(omega)
        .add(&kron(&sigma_x(), &sigma_x()).scaled_re(c1))
        .add(&kron(&sigma_y(), &sigma_y()).scaled_re(c2))
        .add(&kron(&sigma_z(), &sigma_z()).scaled_re(c3))
}

/// Two qubits under the coupling Hamiltonian, each with its own decay
/// channel σ⁻_i. Qubit 1 is the principal system, qubit 2 the ancilla.
pub fn two_qubit_model(
    omega: f64,
    couplings: [f64; 3],
    decay1: DecayParams,
    decay2: DecayParams,
) -> LindbladModel {
    let i2 = CMatrix::identity(2);
    let h = two_qubit_hamiltonian(omega, couplings[0], couplings[1], couplings[2]);
    LindbladModel::new(
        h,
        vec![
            Jump {
                operator: kron(&sigma_minus(), &i2),
                rate: RateFn::Decay(decay1),
            },
            Jump {
                operator: kron(&i2, &sigma_minus()),
                rate: RateFn::Decay(decay2),
            },
        ],
    )
    .expect("coupling Hamiltonian is Hermitian")
}

/// Right-hand side `−i[H,ρ] + Σ_μ γ_μ(t)(L_μ ρ L_μ† − ½{L_μ†L_μ, ρ})`.
pub fn liouvillian_apply(
    rho: &CMatrix,
    model: &LindbladModel,
    t: f64,
) -> Result<CMatrix, DynamicsError> {
    assert_eq!(
        (rho.rows(), rho.cols()),
        (model.dim(), model.dim()),
        "dimension mismatch between state and model"
    );
    let mut out = commutator(&model.hamiltonian, rho).scaled(Complex64::new(0.0, -1.0));
    for jump in &model.jumps {
        let gamma = jump.rate.eval(t)?;
        if gamma == 0.0 {
            continue;
        }
        let l = &jump.operator;
        let l_dag = adjoint(l);
        let sandwich = matmul(&matmul(l, rho), &l_dag);
        let ldl = matmul(&l_dag, l);
        let dissipator = sandwich.sub(&anticommutator(&ldl, rho).scaled_re(0.5));
        out = out.add(&dissipator.scaled_re(gamma));
    }
    Ok(out)
}

/// One classical 4-stage Runge-Kutta step of `dρ/dt = L_t[ρ]`.
///
/// The result is re-validated; a violation signals that dt is too large
/// for the model at hand.
pub fn rk4_step(
    rho: &DensityMatrix,
    model: &LindbladModel,
    t: f64,
    dt: f64,
) -> Result<DensityMatrix, DynamicsError> {
    assert!(dt > 0.0, "dt must be positive");
    let y = rho.mat();
    let k1 = liouvillian_apply(y, model, t)?;
    let k2 = liouvillian_apply(&y.add(&k1.scaled_re(dt / 2.0)), model, t + dt / 2.0)?;
    let k3 = liouvillian_apply(&y.add(&k2.scaled_re(dt / 2.0)), model, t + dt / 2.0)?;
    let k4 = liouvillian_apply(&y.add(&k3.scaled_re(dt)), model, t + dt)?;
    let increment = k1
        .add(&k2.scaled_re(2.0))
        .add(&k3.scaled_re(2.0))
        .add(&k4)
        .scaled_re(dt / 6.0);
    DensityMatrix::new(y.add(&increment))
}

/// Ordered (time, state) sequence with uniform spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.dim())
    }
}

/// Integrate the model from ρ₀ for `n_steps` RK4 steps; the trajectory
/// holds n_steps + 1 states starting with ρ₀.
pub fn generate_trajectory(
    rho0: DensityMatrix,
    model: &LindbladModel,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, DynamicsError> {
    rho0.validate()?;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(rho0);
    for j in 0..n_steps {
        let t = j as f64 * dt;
        let next = rk4_step(states.last().unwrap(), model, t, dt)?;
        states.push(next);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
    })
}

/// Integrate a 4×4 two-qubit model and return the partial-traced
/// single-qubit sequence for the principal system (qubit 1).
pub fn generate_reduced_trajectory(
    rho12_0: DensityMatrix,
    model4: &LindbladModel,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, DynamicsError> {
    assert_eq!(
        model4.dim(),
        4,
        "reduced trajectory needs a two-qubit model"
    );
    rho12_0.validate()?;
    let mut full = rho12_0;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(DensityMatrix::new(partial_trace_second(full.mat()))?);
    for j in 0..n_steps {
        let t = j as f64 * dt;
        full = rk4_step(&full, model4, t, dt)?;
        states.push(DensityMatrix::new(partial_trace_second(full.mat()))?);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
    })
}

/// ρ ⊗ |1⟩⟨1|: the system joined to an ancilla resting in the decay fixed
/// point, the initial condition for the reduced-dynamics experiments.
pub fn kron_system_ancilla(system: &DensityMatrix) -> DensityMatrix {
    assert_eq!(system.dim(), 2, "system must be a qubit");
    let ancilla = DensityMatrix::basis_state(2, 1);
    DensityMatrix::new_unchecked(kron(system.mat(), ancilla.mat()))
}

/// `Tr₂[ρ₁₂]` with the qubit-1-major index convention (index = 2·i₁ + i₂).
pub fn partial_trace_second(rho12: &CMatrix) -> CMatrix {
    assert_eq!(
        (rho12.rows(), rho12.cols()),
        (4, 4),
        "dimension mismatch: expected 4x4"
    );
    let mut out = CMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::ZERO;
            for k in 0..2 {
                acc += rho12.get(2 * i + k, 2 * j + k);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Mix a base seed with a stream index; splitmix64 finalizer.
///
/// Used to hand every trajectory its own generator so that parallel
/// generation is order-independent.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal_complex_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect()
}

/// Haar-random pure state: normalized complex standard-normal vector,
/// as an outer product |ψ⟩⟨ψ|.
pub fn sample_random_state(d: usize, seed: u64) -> DensityMatrix {
    assert!(d >= 2, "dimension must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = normal_complex_vec(d, &mut rng);
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut psi {
        *z /= norm;
    }
    let mut mat = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            mat.set(i, j, psi[i] * psi[j].conj());
        }
    }
    DensityMatrix::new_unchecked(mat)
}

/// Random mixed state from the Ginibre ensemble: ρ = GG†/Tr[GG†].
pub fn sample_ginibre_state(d: usize, seed: u64) -> DensityMatrix {
    assert!(d >= 2, "dimension must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_vec(d, d, normal_complex_vec(d * d, &mut rng));
    let gg = matmul(&g, &adjoint(&g));
    let tr = gg.trace().re;
    DensityMatrix::new_unchecked(gg.scaled_re(1.0 / tr))
}

/// Trace distance ½ Σ|λ_k| over eigenvalues of the Hermitian difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch in trace distance");
    let diff = a.mat().sub(b.mat());
    // Both inputs are Hermitian within validation tolerance; symmetrize so
    // the eigensolver sees an exactly Hermitian matrix.
    let sym = diff.add(&adjoint(&diff)).scaled_re(0.5);
    let eig = herm_eig(&sym).expect("symmetrized difference is Hermitian");
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markov_params() -> DecayParams {
        DecayParams::new(0.5, 2.0).unwrap()
    }

    #[test]
    fn decay_rate_zero_at_origin() {
        assert_eq!(decay_rate(0.0, &markov_params()).unwrap(), 0.0);
    }

    #[test]
    fn decay_rate_positive_in_markovian_regime() {
        let p = markov_params();
        assert!(p.is_markovian());
        for k in 1..=500 {
            let t = k as f64 * 0.01;
            assert!(decay_rate(t, &p).unwrap() > 0.0, "γ({t}) not positive");
        }
    }

    #[test]
    fn decay_rate_negative_in_non_markovian_regime() {
        // λ < 2γ₀: rate turns negative somewhere on (0, 5].
        let p = DecayParams::new(2.0, 1.0).unwrap();
        assert!(!p.is_markovian());
        let mut saw_negative = false;
        for k in 1..=500 {
            let t = k as f64 * 0.01;
            if let Ok(g) = decay_rate(t, &p) {
                saw_negative |= g < 0.0;
            }
        }
        assert!(saw_negative);
    }

    #[test]
    fn decay_rate_matches_complex_arithmetic_oracle() {
        // Direct evaluation with complex sinh/cosh, independent of the
        // trigonometric rewriting used by the implementation.
        let p = DecayParams::new(2.0, 1.0).unwrap();
        let eta =
            Complex64::new(p.lambda() * p.lambda() - 2.0 * p.gamma0() * p.lambda(), 0.0).sqrt();
        for k in 1..=40 {
            let t = k as f64 * 0.1;
            let arg = eta * t / 2.0;
            let denom = eta * arg.cosh() + p.lambda() * arg.sinh();
            if denom.norm() < 1e-10 {
                continue;
            }
            let oracle = Complex64::new(2.0 * p.gamma0() * p.lambda(), 0.0) * arg.sinh() / denom;
            assert!(oracle.im.abs() < 1e-10);
            let got = decay_rate(t, &p).unwrap();
            assert!(
                (got - oracle.re).abs() < 1e-10,
                "t={t}: {got} vs oracle {}",
                oracle.re
            );
        }
    }

    #[test]
    fn decay_params_validation() {
        assert!(DecayParams::new(0.0, 1.0).is_err());
        assert!(DecayParams::new(1.0, -2.0).is_err());
    }

    #[test]
    fn liouvillian_annihilates_decayed_steady_state() {
        let model = two_level_model(1.0, markov_params());
        let ground = DensityMatrix::basis_state(2, 1);
        let out = liouvillian_apply(ground.mat(), &model, 0.3).unwrap();
        assert!(out.frobenius_norm() < 1e-14);
    }

    #[test]
    fn liouvillian_pure_decay_of_excited_population() {
        let model = LindbladModel::new(
            CMatrix::zeros(2, 2),
            vec![Jump {
                operator: sigma_minus(),
                rate: RateFn::Constant(1.0),
            }],
        )
        .unwrap();
        let excited = DensityMatrix::basis_state(2, 0);
        let out = liouvillian_apply(excited.mat(), &model, 0.0).unwrap();
        let expected =
            CMatrix::from_parts(2, 2, &[(-1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert!(out.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn liouvillian_matches_term_by_term_oracle() {
        let model = two_level_model(1.0, markov_params());
        let t = 0.3;
        let rho = sample_ginibre_state(2, 99);
        let got = liouvillian_apply(rho.mat(), &model, t).unwrap();

        // Assemble the right-hand side independently, term by term.
        let gamma = decay_rate(t, &markov_params()).unwrap();
        let h = sigma_z().scaled_re(1.0);
        let l = sigma_minus();
        let unitary = commutator(&h, rho.mat()).scaled(Complex64::new(0.0, -1.0));
        let sandwich = matmul(&matmul(&l, rho.mat()), &adjoint(&l));
        let ldl = matmul(&adjoint(&l), &l);
        let oracle = unitary.add(
            &sandwich
                .sub(&anticommutator(&ldl, rho.mat()).scaled_re(0.5))
                .scaled_re(gamma),
        );
        assert!(got.approx_eq(&oracle, 1e-12));
    }

    #[test]
    fn two_qubit_hamiltonian_properties() {
        let h = two_qubit_hamiltonian(1.0, 0.3242, 0.6723, 0.1353);
        assert_eq!(h.rows(), 4);
        assert!(h.hermiticity_defect() == 0.0);
        assert!(h.trace().norm() < 1e-15);

        assert!(two_qubit_hamiltonian(0.0, 0.0, 0.0, 0.0).frobenius_norm() == 0.0);

        let zi = two_qubit_hamiltonian(1.0, 0.0, 0.0, 0.0);
        for (i, want) in [1.0, 1.0, -1.0, -1.0].iter().enumerate() {
            assert_eq!(zi.get(i, i).re, *want);
        }
    }

    #[test]
    fn rk4_step_is_identity_for_trivial_model() {
        let model = LindbladModel::new(CMatrix::zeros(2, 2), vec![]).unwrap();
        let rho = sample_random_state(2, 5);
        let next = rk4_step(&rho, &model, 0.0, 0.01).unwrap();
        assert!(next.mat().approx_eq(rho.mat(), 0.0));
    }

    #[test]
    fn rk4_preserves_trace_per_step() {
        let model = two_level_model(1.0, markov_params());
        let mut rho = sample_random_state(2, 11);
        for j in 0..70 {
            rho = rk4_step(&rho, &model, j as f64 * 0.01, 0.01).unwrap();
            assert!((rho.mat().trace().re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Richardson check over a fixed horizon: halving dt divides the
        // error against a much finer reference by ≈ 2⁴.
        let model = two_level_model(1.0, markov_params());
        let rho0 = sample_random_state(2, 17);
        let horizon = 0.32;
        let run = |n_steps: usize| {
            generate_trajectory(rho0.clone(), &model, horizon / n_steps as f64, n_steps)
                .unwrap()
                .states
                .last()
                .unwrap()
                .clone()
        };
        let reference = run(160);
        let coarse = trace_distance(&run(4), &reference);
        let fine = trace_distance(&run(8), &reference);
        let ratio = coarse / fine;
        assert!(
            (10.0..=22.0).contains(&ratio),
            "error ratio {ratio} not consistent with order 4"
        );
    }

    #[test]
    fn partial_trace_factorizes_product_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = CMatrix::from_vec(2, 2, normal_complex_vec(4, &mut rng));
        let b = CMatrix::from_vec(2, 2, normal_complex_vec(4, &mut rng));
        let reduced = partial_trace_second(&kron(&a, &b));
        assert!(reduced.approx_eq(&a.scaled(b.trace()), 1e-13));
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        // |Φ⁺⟩ = (|00⟩ + |11⟩)/√2
        let mut bell = CMatrix::zeros(4, 4);
        for &i in &[0usize, 3] {
            for &j in &[0usize, 3] {
                bell.set(i, j, Complex64::new(0.5, 0.0));
            }
        }
        let reduced = partial_trace_second(&bell);
        assert!(reduced.approx_eq(&CMatrix::identity(2).scaled_re(0.5), 1e-15));
    }

    #[test]
    fn partial_trace_matches_double_sum_oracle() {
        let rho = sample_ginibre_state(4, 31);
        let got = partial_trace_second(rho.mat());
        for i in 0..2 {
            for j in 0..2 {
                let oracle = rho.mat().get(2 * i, 2 * j) + rho.mat().get(2 * i + 1, 2 * j + 1);
                assert!((got.get(i, j) - oracle).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_states_are_valid_rank_one_and_reproducible() {
        let rho = sample_random_state(2, 7);
        rho.validate().unwrap();
        let eig = herm_eig(rho.mat()).unwrap();
        assert!(eig.eigenvalues[0].abs() < 1e-12, "not rank one");
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert_eq!(sample_random_state(2, 7), rho);
        assert_ne!(sample_random_state(2, 8).mat(), rho.mat());
    }

    #[test]
    fn haar_sampling_is_symmetric_in_sigma_z() {
        // ⟨σz⟩ is uniform on [−1,1] for Haar qubit states, so the mean over
        // 10⁴ samples should vanish within 3·√(1/3/10⁴) ≈ 0.0173.
        let n = 10_000;
        let mean = (0..n)
            .map(|k| {
                let rho = sample_random_state(2, derive_seed(123, k));
                rho.mat().get(0, 0).re - rho.mat().get(1, 1).re
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            mean.abs() < 0.0173,
            "⟨σz⟩ mean {mean} outside 3 standard errors"
        );
    }

    #[test]
    fn ginibre_states_are_valid_and_mixed() {
        let rho = sample_ginibre_state(2, 3);
        rho.validate().unwrap();
        let eig = herm_eig(rho.mat()).unwrap();
        assert!(
            eig.eigenvalues[0] > 1e-6,
            "Ginibre state should be full rank"
        );
    }

    #[test]
    fn trajectory_with_zero_steps_holds_only_initial_state() {
        let model = two_level_model(1.0, markov_params());
        let rho0 = sample_random_state(2, 1);
        let traj = generate_trajectory(rho0.clone(), &model, 0.01, 0).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], rho0);
    }

    #[test]
    fn excited_population_decays_monotonically() {
        let model = two_level_model(1.0, markov_params());
        let excited = DensityMatrix::basis_state(2, 0);
        let traj = generate_trajectory(excited.clone(), &model, 0.01, 70).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].mat().get(0, 0).re <= w[0].mat().get(0, 0).re + 1e-12);
        }
        // Agreement with a dt/10 reference at the final time.
        let fine = generate_trajectory(excited, &model, 0.001, 700).unwrap();
        let dist = trace_distance(traj.states.last().unwrap(), fine.states.last().unwrap());
        assert!(dist < 1e-9, "coarse/fine mismatch {dist}");
    }

    #[test]
    fn reduced_trajectory_states_are_valid() {
        let model = two_qubit_model(
            1.0,
            [0.3242, 0.6723, 0.1353],
            DecayParams::new(0.5, 2.0).unwrap(),
            DecayParams::new(0.2, 1.0).unwrap(),
        );
        let system = sample_random_state(2, 41);
        let ancilla_ground = DensityMatrix::basis_state(2, 1);
        let rho12 = DensityMatrix::new(kron(system.mat(), ancilla_ground.mat())).unwrap();
        let traj = generate_reduced_trajectory(rho12, &model, 0.01, 70).unwrap();
        assert_eq!(traj.len(), 71);
        assert_eq!(traj.dim(), 2);
        for s in &traj.states {
            s.validate().unwrap();
        }
    }

    #[test]
    fn trace_distance_reference_values() {
        let a = DensityMatrix::basis_state(2, 0);
        let b = DensityMatrix::basis_state(2, 1);
        assert_eq!(trace_distance(&a, &a), 0.0);
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((trace_distance(&a, &mixed) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn density_matrix_validation_rejects_bad_inputs() {
        // Trace 2.
        let double = CMatrix::identity(2);
        assert!(DensityMatrix::new(double).is_err());
        // Negative eigenvalue.
        let neg = CMatrix::from_parts(2, 2, &[(1.5, 0.0), (0.0, 0.0), (0.0, 0.0), (-0.5, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err());
        // Non-Hermitian.
        let skew = CMatrix::from_parts(2, 2, &[(0.5, 0.0), (0.3, 0.0), (0.0, 0.0), (0.5, 0.0)]);
        assert!(DensityMatrix::new(skew).is_err());
    }
}
