//! Network-parameterized master equation and state prediction.
//!
//! The network emits real vectors; this module gives them meaning. A
//! complex m×m matrix is carried as 2m² reals (real parts row-major, then
//! imaginary parts row-major). Decoded outputs become either a predicted
//! state, via `ρ = AA†/Tr[AA†]`, or the operators of a GKSL-form generator
//!
//!   `L[ρ] = −i[H + H^LS, ρ] + Σ_μ (L^μ ρ L^μ† − ½{L^μ†L^μ, ρ})`
//!
//! with H^LS = A + A† built from the raw output A and rates absorbed into
//! the operator magnitudes. Propagating with the operator exponential
//! e^{Δt·L} is completely positive and trace preserving, so rolled-out
//! states are valid for any parameter values.
//!
//! Two costs are defined. `cost_jp` compares predicted and measured state
//! sequences with the squared Frobenius norm (the differentiable stand-in;
//! trace distance stays an evaluation metric). `cost_j` penalizes the
//! first-order integration residual
//!
//!   ρ(t_{j+1}) − ρ(t_j) − Δt·L_{≤t_j}[ρ(t_j)]
//!
//! using the measured ρ(t_j) on the right-hand side, so the generator is
//! fit to the data rather than to its own rollout. Gradients are
//! hand-derived; with C real and G_kl = ∂C/∂Re f_kl + i·∂C/∂Im f_kl,
//! a term f = M X N contributes M† G N† to the gradient in X and a term
//! f = M X† N contributes N G† M.

use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{DensityMatrix, DynamicsError, Trajectory};
use crate::linalg::{adjoint, anticommutator, commutator, expm, matmul, CMatrix};
use crate::neural::{network_forward_rollout, GruNetwork};

#[derive(Debug, Error)]
pub enum QrnError {
    #[error("degenerate network output: Tr[AA†] = {norm:.3e} ≤ 1e-14")]
    DegenerateOutput { norm: f64 },
    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Encode M = M_Re + i·M_Im as 2m² reals: Re row-major, then Im row-major.
pub fn encode_complex(m: &CMatrix) -> Vec<f64> {
    assert!(m.is_square(), "encoding is defined for square matrices");
    let mut out = Vec::with_capacity(2 * m.entries().len());
    out.extend(m.entries().iter().map(|z| z.re));
    out.extend(m.entries().iter().map(|z| z.im));
    out
}

/// Exact inverse of [`encode_complex`].
pub fn decode_complex(o: &[f64]) -> CMatrix {
    assert!(
        o.len().is_multiple_of(2),
        "encoding length {} is not 2m²",
        o.len()
    );
    let m_sq = o.len() / 2;
    let m = (m_sq as f64).sqrt().round() as usize;
    assert_eq!(m * m, m_sq, "encoding length {} is not 2m²", o.len());
    let data = (0..m_sq)
        .map(|k| Complex64::new(o[k], o[m_sq + k]))
        .collect();
    CMatrix::from_vec(m, m, data)
}

/// A + A†, exactly Hermitian.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    assert!(a.is_square(), "hermitize needs a square matrix");
    a.add(&adjoint(a))
}

/// ρ = AA† / Tr[AA†]; Hermitian, positive semidefinite and unit trace by
/// construction. Vanishing normalization is an error rather than a
/// fallback state, so a collapsed network output shows up in diagnostics.
pub fn density_from_output(a: &CMatrix) -> Result<DensityMatrix, QrnError> {
    let aa = matmul(a, &adjoint(a));
    let norm = aa.trace().re;
    if norm <= 1e-14 {
        return Err(QrnError::DegenerateOutput { norm });
    }
    Ok(DensityMatrix::new_unchecked(aa.scaled_re(1.0 / norm)))
}

/// Σ_kl (Re a ∘ Re b + Im a ∘ Im b), the real inner product of two
/// matrices viewed as real vectors.
fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Gradient of a cost through ρ = AA†/Tr[AA†].
///
/// `grad_rho` carries ∂C/∂Re ρ_kl + i·∂C/∂Im ρ_kl; the result carries the
/// same convention with respect to A.
pub fn density_from_output_backward(a: &CMatrix, grad_rho: &CMatrix) -> CMatrix {
    let aa = matmul(a, &adjoint(a));
    let s = aa.trace().re;
    let rho = aa.scaled_re(1.0 / s);
    // ρ = B/s with B = AA†: the B path gives (G + G†)A/s, the s path
    // (through Tr B = Σ|a|²) gives 2·(∂C/∂s)·A.
    let dc_ds = -re_inner(grad_rho, &rho) / s;
    let sym = grad_rho.add(&adjoint(grad_rho)).scaled_re(1.0 / s);
    matmul(&sym, a).add(&a.scaled_re(2.0 * dc_ds))
}

/// Decoded network output for one time step: the Lamb-shift correction
/// H^LS (zero when disabled) and μ recurrent Lindblad operators.
#[derive(Debug, Clone, PartialEq)]
pub struct QrnOutput {
    pub lamb_shift: CMatrix,
    pub lindblads: Vec<CMatrix>,
}

/// Gradient with the same block structure as [`QrnOutput`]; the
/// `lamb_shift` block is with respect to the Hermitian H^LS itself.
#[derive(Debug, Clone)]
pub struct QrnOutputGrad {
    pub lamb_shift: CMatrix,
    pub lindblads: Vec<CMatrix>,
}

/// Static configuration of the learned master equation.
#[derive(Debug, Clone, PartialEq)]
pub struct QrnConfig {
    pub mu_count: usize,
    pub include_lamb_shift: bool,
    pub rk_order: usize,
    pub dt: f64,
    pub known_hamiltonian: CMatrix,
}

impl QrnConfig {
    pub fn new(
        mu_count: usize,
        include_lamb_shift: bool,
        dt: f64,
        known_hamiltonian: CMatrix,
    ) -> Result<Self, QrnError> {
        if mu_count < 1 {
            return Err(QrnError::InvalidConfig("mu_count must be ≥ 1".into()));
        }
        if dt <= 0.0 {
            return Err(QrnError::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !known_hamiltonian.is_square() {
            return Err(QrnError::InvalidConfig("Hamiltonian must be square".into()));
        }
        Ok(Self {
            mu_count,
            include_lamb_shift,
            rk_order: 1,
            dt,
            known_hamiltonian,
        })
    }

    pub fn dim(&self) -> usize {
        self.known_hamiltonian.rows()
    }

    /// Length of the network output vector: one 2d² block per operator.
    pub fn output_dim(&self) -> usize {
        let d = self.dim();
        2 * d * d * (self.mu_count + usize::from(self.include_lamb_shift))
    }
}

/// Split a raw output vector into H^LS (via A + A†) and the L^μ.
/// Block layout: `[A if enabled][L¹..L^μ]`, each 2d² reals.
pub fn decode_qrn_output(o: &[f64], cfg: &QrnConfig) -> QrnOutput {
    let d = cfg.dim();
    let block = 2 * d * d;
    assert_eq!(o.len(), cfg.output_dim(), "output length mismatch");
    let mut offset = 0;
    let lamb_shift = if cfg.include_lamb_shift {
        let a = decode_complex(&o[..block]);
        offset = block;
        hermitize(&a)
    } else {
        CMatrix::zeros(d, d)
    };
    let lindblads = (0..cfg.mu_count)
        .map(|k| decode_complex(&o[offset + k * block..offset + (k + 1) * block]))
        .collect();
    QrnOutput {
        lamb_shift,
        lindblads,
    }
}

/// Map a [`QrnOutputGrad`] back to a gradient on the raw output vector.
/// The Lamb-shift chain H^LS = A + A† turns ∇_{H^LS} into ∇ + ∇†.
pub fn qrn_output_grad_to_vec(grad: &QrnOutputGrad, cfg: &QrnConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.output_dim());
    if cfg.include_lamb_shift {
        let da = grad.lamb_shift.add(&adjoint(&grad.lamb_shift));
        out.extend(encode_complex(&da));
    }
    for dl in &grad.lindblads {
        out.extend(encode_complex(dl));
    }
    debug_assert_eq!(out.len(), cfg.output_dim());
    out
}

/// −i[H + H^LS, ρ] + Σ_μ (L^μ ρ L^μ† − ½{L^μ†L^μ, ρ}).
///
/// No separate rate factor: magnitudes are carried by the operators.
pub fn qrn_liouvillian_apply(rho: &CMatrix, h: &CMatrix, out: &QrnOutput) -> CMatrix {
    assert_eq!(
        (rho.rows(), rho.cols()),
        (h.rows(), h.cols()),
        "dimension mismatch"
    );
    let h_total = h.add(&out.lamb_shift);
    let mut result = commutator(&h_total, rho).scaled(Complex64::new(0.0, -1.0));
    for l in &out.lindblads {
        let l_dag = adjoint(l);
        let sandwich = matmul(&matmul(l, rho), &l_dag);
        let ldl = matmul(&l_dag, l);
        result = result.add(&sandwich.sub(&anticommutator(&ldl, rho).scaled_re(0.5)));
    }
    result
}

/// Matrix of the generator acting on row-major-flattened states: column
/// (i·d + j) is the flattened image of the canonical basis matrix E_ij,
/// which makes the construction independent of any vectorization identity.
pub fn superoperator_matrix(h: &CMatrix, out: &QrnOutput) -> CMatrix {
    let d = h.rows();
    let mut s = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let mut basis = CMatrix::zeros(d, d);
            basis.set(i, j, Complex64::ONE);
            let image = qrn_liouvillian_apply(&basis, h, out);
            let col = i * d + j;
            for k in 0..d {
                for l in 0..d {
                    s.set(k * d + l, col, image.get(k, l));
                }
            }
        }
    }
    s
}

/// Apply the channel e^{Δt·S} to a state (flatten, multiply, unflatten).
pub fn channel_apply(superop: &CMatrix, dt: f64, rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    assert_eq!(superop.rows(), d * d, "superoperator dimension mismatch");
    let u = expm(&superop.scaled_re(dt));
    let mut flat = vec![Complex64::ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            flat[i * d + j] = rho.mat().get(i, j);
        }
    }
    let mut out_flat = vec![Complex64::ZERO; d * d];
    for r in 0..d * d {
        let mut acc = Complex64::ZERO;
        for c in 0..d * d {
            acc += u.get(r, c) * flat[c];
        }
        out_flat[r] = acc;
    }
    let mut mat = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            mat.set(i, j, out_flat[i * d + j]);
        }
    }
    // CPTP by construction.
    DensityMatrix::new_unchecked(mat)
}

fn check_aligned(a: &Trajectory, b: &Trajectory) -> Result<(), QrnError> {
    if a.len() != b.len() {
        return Err(QrnError::TrajectoryMismatch(format!(
            "lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if (a.dt - b.dt).abs() > 1e-12 || (a.t0 - b.t0).abs() > 1e-12 {
        return Err(QrnError::TrajectoryMismatch(format!(
            "time grids (t0, dt) = ({}, {}) and ({}, {})",
            a.t0, a.dt, b.t0, b.dt
        )));
    }
    if a.dim() != b.dim() {
        return Err(QrnError::TrajectoryMismatch(format!(
            "dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean squared Frobenius distance between predicted and target states.
/// The shared initial state (index 0) is excluded from the mean.
pub fn cost_jp(predicted: &Trajectory, target: &Trajectory) -> Result<f64, QrnError> {
    Ok(cost_jp_with_grads(predicted, target)?.0)
}

/// [`cost_jp`] plus the gradient with respect to each compared predicted
/// state (one matrix per state from index 1 on, in the ∂Re + i·∂Im
/// convention).
pub fn cost_jp_with_grads(
    predicted: &Trajectory,
    target: &Trajectory,
) -> Result<(f64, Vec<CMatrix>), QrnError> {
    check_aligned(predicted, target)?;
    let n = predicted.len().saturating_sub(1);
    if n == 0 {
        return Err(QrnError::TrajectoryMismatch(
            "need at least one state beyond the initial one".into(),
        ));
    }
    let mut cost = 0.0;
    let mut grads = Vec::with_capacity(n);
    for j in 1..predicted.len() {
        let diff = predicted.states[j].mat().sub(target.states[j].mat());
        cost += diff.frobenius_norm().powi(2);
        grads.push(diff.scaled_re(2.0 / n as f64));
    }
    Ok((cost / n as f64, grads))
}

/// Mean squared Frobenius norm of the first-order integration residual,
/// teacher-forced on the measured states.
pub fn cost_j(
    target: &Trajectory,
    outputs: &[QrnOutput],
    cfg: &QrnConfig,
) -> Result<f64, QrnError> {
    Ok(cost_j_with_grads(target, outputs, cfg)?.0)
}

/// Per-step residuals r_j = ρ(t_{j+1}) − ρ(t_j) − Δt·L_{≤t_j}[ρ(t_j)]
/// without the mean, for per-time evaluation curves.
pub fn cost_j_per_step(
    target: &Trajectory,
    outputs: &[QrnOutput],
    cfg: &QrnConfig,
) -> Result<Vec<f64>, QrnError> {
    check_cost_j_inputs(target, outputs, cfg)?;
    let mut out = Vec::with_capacity(outputs.len());
    for (j, qrn_out) in outputs.iter().enumerate() {
        let r = residual(target, j, qrn_out, cfg);
        out.push(r.frobenius_norm().powi(2));
    }
    Ok(out)
}

fn check_cost_j_inputs(
    target: &Trajectory,
    outputs: &[QrnOutput],
    cfg: &QrnConfig,
) -> Result<(), QrnError> {
    if outputs.len() + 1 != target.len() {
        return Err(QrnError::TrajectoryMismatch(format!(
            "{} outputs for {} transitions",
            outputs.len(),
            target.len().saturating_sub(1)
        )));
    }
    if (target.dt - cfg.dt).abs() > 1e-12 {
        return Err(QrnError::TrajectoryMismatch(format!(
            "trajectory dt {} does not match configured Δt {}",
            target.dt, cfg.dt
        )));
    }
    Ok(())
}

fn residual(target: &Trajectory, j: usize, out: &QrnOutput, cfg: &QrnConfig) -> CMatrix {
    let rho_j = target.states[j].mat();
    let rho_next = target.states[j + 1].mat();
    let generator = qrn_liouvillian_apply(rho_j, &cfg.known_hamiltonian, out);
    rho_next.sub(rho_j).sub(&generator.scaled_re(cfg.dt))
}

/// [`cost_j`] plus gradients with respect to every H^LS and L^μ entry.
///
/// The residual is linear in H^LS and quadratic in the L^μ, so the
/// gradients are assembled in closed form from the two product rules in
/// the module docs, with G = −(2Δt/N_T)·r_j.
pub fn cost_j_with_grads(
    target: &Trajectory,
    outputs: &[QrnOutput],
    cfg: &QrnConfig,
) -> Result<(f64, Vec<QrnOutputGrad>), QrnError> {
    check_cost_j_inputs(target, outputs, cfg)?;
    let n = outputs.len();
    let mut cost = 0.0;
    let mut grads = Vec::with_capacity(n);
    for (j, qrn_out) in outputs.iter().enumerate() {
        let r = residual(target, j, qrn_out, cfg);
        cost += r.frobenius_norm().powi(2);

        let rho_dag = adjoint(target.states[j].mat());
        // d cost / d residual = 2r/N_T; the generator enters with −Δt.
        let g = r.scaled_re(-2.0 * cfg.dt / n as f64);
        let g_dag = adjoint(&g);

        // H^LS path: f = −i[H', ρ] ⇒ ∇ = i(Gρ† − ρ†G).
        let d_ls = matmul(&g, &rho_dag)
            .sub(&matmul(&rho_dag, &g))
            .scaled(Complex64::new(0.0, 1.0));

        // L path: f = LρL† − ½{L†L, ρ} ⇒
        // ∇ = GLρ† + G†Lρ − ½(LρG† + LGρ† + LG†ρ + Lρ†G).
        let rho = target.states[j].mat();
        let d_lindblads = qrn_out
            .lindblads
            .iter()
            .map(|l| {
                let pos = matmul(&g, &matmul(l, &rho_dag)).add(&matmul(&g_dag, &matmul(l, rho)));
                let inner = matmul(rho, &g_dag)
                    .add(&matmul(&g, &rho_dag))
                    .add(&matmul(&g_dag, rho))
                    .add(&matmul(&rho_dag, &g));
                pos.sub(&matmul(l, &inner).scaled_re(0.5))
            })
            .collect();

        grads.push(QrnOutputGrad {
            lamb_shift: d_ls,
            lindblads: d_lindblads,
        });
    }
    Ok((cost / n as f64, grads))
}

/// Feed ρ₀ to the network and post-process every output into a valid
/// state: trajectory = [ρ₀, decode(out_0), …, decode(out_{n−1})].
pub fn rollout_state_predictor(
    rho0: &DensityMatrix,
    net: &GruNetwork,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, QrnError> {
    let encoding = encode_complex(rho0.mat());
    let (outputs, _) = network_forward_rollout(net, &encoding, n_steps, None);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(rho0.clone());
    for o in &outputs {
        let a = decode_complex(o);
        states.push(density_from_output(&a)?);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt,
        states,
    })
}

/// Roll the learned master equation forward: at each step the decoded
/// output defines a generator and the state advances through the CPTP
/// channel e^{Δt·S}. Valid states for any network parameters.
pub fn rollout_master_equation(
    rho0: &DensityMatrix,
    net: &GruNetwork,
    cfg: &QrnConfig,
    n_steps: usize,
    extra_input: Option<f64>,
) -> Trajectory {
    let encoding = encode_complex(rho0.mat());
    let (outputs, _) = network_forward_rollout(net, &encoding, n_steps, extra_input);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(rho0.clone());
    for o in &outputs {
        let qrn_out = decode_qrn_output(o, cfg);
        let superop = superoperator_matrix(&cfg.known_hamiltonian, &qrn_out);
        let next = channel_apply(&superop, cfg.dt, states.last().unwrap());
        states.push(next);
    }
    Trajectory {
        t0: 0.0,
        dt: cfg.dt,
        states,
    }
}
