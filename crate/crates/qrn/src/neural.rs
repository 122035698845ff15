//! Two-layer GRU network with a linear head, trained by backpropagation
//! through time and Adam.
//!
//! Cell equations, with σ the logistic function and ∘ the entry-wise
//! product:
//!
//!   z_t = σ(Wz x_t + Uz s_{t−1} + bz)
//!   r_t = σ(Wr x_t + Ur s_{t−1} + br)
//!   s̃_t = tanh(Wh x_t + Uh (r_t ∘ s_{t−1}) + bh)
//!   s_t = (1 − z_t) ∘ s_{t−1} + z_t ∘ s̃_t
//!
//! The rollout is one-to-many: the encoded initial state enters at step 0
//! and later steps receive the zero vector, except for an optional scalar
//! conditioning input that is appended at every step. Everything runs in
//! f64; gradient checks at 1e-4 relative tolerance are not reliable in f32.
//!
//! No general autodiff here — the forward pass records a tape of gate
//! activations and the backward pass replays it with hand-derived
//! vector-Jacobian products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense real matrix, row-major. Internal workhorse for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// out += M x
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[i] += acc;
        }
    }

    /// out += Mᵀ y
    pub fn matvec_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for i in 0..self.rows {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
    }

    /// M += a bᵀ (rank-one gradient accumulation)
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for i in 0..self.rows {
            let ai = a[i];
            if ai == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (m, bj) in row.iter_mut().zip(b) {
                *m += ai * bj;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one GRU cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams {
    pub wz: RealMat,
    pub wr: RealMat,
    pub wh: RealMat,
    pub uz: RealMat,
    pub ur: RealMat,
    pub uh: RealMat,
    pub bz: Vec<f64>,
    pub br: Vec<f64>,
    pub bh: Vec<f64>,
}

impl GruCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wz: RealMat::zeros(hidden, input),
            wr: RealMat::zeros(hidden, input),
            wh: RealMat::zeros(hidden, input),
            uz: RealMat::zeros(hidden, hidden),
            ur: RealMat::zeros(hidden, hidden),
            uh: RealMat::zeros(hidden, hidden),
            bz: vec![0.0; hidden],
            br: vec![0.0; hidden],
            bh: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.bz.len()
    }

    pub fn input_size(&self) -> usize {
        self.wz.cols
    }
}

/// Forward intermediates of one cell application, enough to replay
/// the step and to run the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellCache {
    pub x: Vec<f64>,
    pub s_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub s: Vec<f64>,
}

#[inline]
fn interpolate(z: f64, s_prev: f64, s_tilde: f64) -> f64 {
    (1.0 - z) * s_prev + z * s_tilde
}

/// One GRU cell step.
pub fn gru_cell_forward(x: &[f64], s_prev: &[f64], p: &GruCellParams) -> (Vec<f64>, GruCellCache) {
    let hidden = p.hidden_size();
    assert_eq!(x.len(), p.input_size(), "input size mismatch");
    assert_eq!(s_prev.len(), hidden, "hidden size mismatch");

    let mut az = p.bz.clone();
    p.wz.matvec_add(x, &mut az);
    p.uz.matvec_add(s_prev, &mut az);
    let z: Vec<f64> = az.iter().map(|&a| sigmoid(a)).collect();

    let mut ar = p.br.clone();
    p.wr.matvec_add(x, &mut ar);
    p.ur.matvec_add(s_prev, &mut ar);
    let r: Vec<f64> = ar.iter().map(|&a| sigmoid(a)).collect();

    let gated: Vec<f64> = r.iter().zip(s_prev).map(|(ri, si)| ri * si).collect();
    let mut ah = p.bh.clone();
    p.wh.matvec_add(x, &mut ah);
    p.uh.matvec_add(&gated, &mut ah);
    let s_tilde: Vec<f64> = ah.iter().map(|&a| a.tanh()).collect();

    let s: Vec<f64> = (0..hidden)
        .map(|i| interpolate(z[i], s_prev[i], s_tilde[i]))
        .collect();

    let cache = GruCellCache {
        x: x.to_vec(),
        s_prev: s_prev.to_vec(),
        z,
        r,
        s_tilde,
        s: s.clone(),
    };
    (s, cache)
}

/// Backward pass of one cell given dC/ds. Accumulates parameter gradients
/// into `grads` and returns (dC/dx, dC/ds_prev).
pub fn gru_cell_backward(
    p: &GruCellParams,
    cache: &GruCellCache,
    ds: &[f64],
    grads: &mut GruCellParams,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = p.hidden_size();
    assert_eq!(ds.len(), hidden, "gradient size mismatch");

    // s = (1−z)∘s_prev + z∘s̃
    let dz: Vec<f64> = (0..hidden)
        .map(|i| ds[i] * (cache.s_tilde[i] - cache.s_prev[i]))
        .collect();
    let da_z: Vec<f64> = (0..hidden)
        .map(|i| dz[i] * cache.z[i] * (1.0 - cache.z[i]))
        .collect();

    let ds_tilde: Vec<f64> = (0..hidden).map(|i| ds[i] * cache.z[i]).collect();
    let da_h: Vec<f64> = (0..hidden)
        .map(|i| ds_tilde[i] * (1.0 - cache.s_tilde[i] * cache.s_tilde[i]))
        .collect();

    // s̃ preactivation takes Uh (r ∘ s_prev).
    let mut d_gated = vec![0.0; hidden];
    p.uh.matvec_transpose_add(&da_h, &mut d_gated);
    let dr: Vec<f64> = (0..hidden).map(|i| d_gated[i] * cache.s_prev[i]).collect();
    let da_r: Vec<f64> = (0..hidden)
        .map(|i| dr[i] * cache.r[i] * (1.0 - cache.r[i]))
        .collect();

    let mut ds_prev: Vec<f64> = (0..hidden)
        .map(|i| ds[i] * (1.0 - cache.z[i]) + d_gated[i] * cache.r[i])
        .collect();
    p.uz.matvec_transpose_add(&da_z, &mut ds_prev);
    p.ur.matvec_transpose_add(&da_r, &mut ds_prev);

    let mut dx = vec![0.0; p.input_size()];
    p.wz.matvec_transpose_add(&da_z, &mut dx);
    p.wr.matvec_transpose_add(&da_r, &mut dx);
    p.wh.matvec_transpose_add(&da_h, &mut dx);

    let gated: Vec<f64> = (0..hidden).map(|i| cache.r[i] * cache.s_prev[i]).collect();
    grads.wz.outer_add(&da_z, &cache.x);
    grads.wr.outer_add(&da_r, &cache.x);
    grads.wh.outer_add(&da_h, &cache.x);
    grads.uz.outer_add(&da_z, &cache.s_prev);
    grads.ur.outer_add(&da_r, &cache.s_prev);
    grads.uh.outer_add(&da_h, &gated);
    for i in 0..hidden {
        grads.bz[i] += da_z[i];
        grads.br[i] += da_r[i];
        grads.bh[i] += da_h[i];
    }

    (dx, ds_prev)
}

/// Stacked two-layer GRU followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruNetwork {
    pub cells: Vec<GruCellParams>,
    pub head_w: RealMat,
    pub head_b: Vec<f64>,
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
}

impl GruNetwork {
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        Self {
            cells: vec![
                GruCellParams::zeros(input_size, hidden_size),
                GruCellParams::zeros(hidden_size, hidden_size),
            ],
            head_w: RealMat::zeros(output_size, hidden_size),
            head_b: vec![0.0; output_size],
            input_size,
            hidden_size,
            output_size,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.output_size)
    }

    /// Parameter array names in the declared fixed order
    /// (cell0 then cell1: wz wr wh uz ur uh bz br bh; then head_w head_b).
    /// This order is shared by the optimizer and the checkpoint format.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, _) in self.cells.iter().enumerate() {
            for f in ["wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh"] {
                names.push(format!("cell{i}.{f}"));
            }
        }
        names.push("head_w".into());
        names.push("head_b".into());
        names
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.cells {
            out.push(&c.wz.data);
            out.push(&c.wr.data);
            out.push(&c.wh.data);
            out.push(&c.uz.data);
            out.push(&c.ur.data);
            out.push(&c.uh.data);
            out.push(&c.bz);
            out.push(&c.br);
            out.push(&c.bh);
        }
        out.push(&self.head_w.data);
        out.push(&self.head_b);
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.cells {
            out.push(&mut c.wz.data);
            out.push(&mut c.wr.data);
            out.push(&mut c.wh.data);
            out.push(&mut c.uz.data);
            out.push(&mut c.ur.data);
            out.push(&mut c.uh.data);
            out.push(&mut c.bz);
            out.push(&mut c.br);
            out.push(&mut c.bh);
        }
        out.push(&mut self.head_w.data);
        out.push(&mut self.head_b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// self += other · scale, array by array.
    pub fn add_scaled(&mut self, other: &GruNetwork, scale: f64) {
        for (dst, src) in self
            .param_slices_mut()
            .into_iter()
            .zip(other.param_slices())
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        }
    }

    fn head_forward(&self, s: &[f64]) -> Vec<f64> {
        let mut out = self.head_b.clone();
        self.head_w.matvec_add(s, &mut out);
        out
    }
}

/// Recorded forward intermediates of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub steps: Vec<TapeStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeStep {
    pub cells: Vec<GruCellCache>,
    pub output: Vec<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Recompute the outputs from the recorded gates. Uses the same
    /// arithmetic as the forward pass, so the result is bit-identical.
    pub fn replay(&self, net: &GruNetwork) -> Vec<Vec<f64>> {
        let hidden = net.hidden_size;
        let mut states = vec![vec![0.0; hidden]; net.cells.len()];
        let mut outputs = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            for (layer, cache) in step.cells.iter().enumerate() {
                let s: Vec<f64> = (0..hidden)
                    .map(|i| interpolate(cache.z[i], states[layer][i], cache.s_tilde[i]))
                    .collect();
                states[layer] = s;
            }
            outputs.push(net.head_forward(states.last().unwrap()));
        }
        outputs
    }
}

/// One-to-many rollout: the encoded ρ(0) is the step-0 input, later steps
/// receive zeros; `extra_input` (the conditioning frequency, when present)
/// is appended at every step. Hidden states start at zero.
pub fn network_forward_rollout(
    net: &GruNetwork,
    rho0_encoding: &[f64],
    n_steps: usize,
    extra_input: Option<f64>,
) -> (Vec<Vec<f64>>, Tape) {
    let extra_len = usize::from(extra_input.is_some());
    assert_eq!(
        rho0_encoding.len() + extra_len,
        net.input_size,
        "encoding length {} (+{} extra) does not match network input size {}",
        rho0_encoding.len(),
        extra_len,
        net.input_size
    );

    let mut states: Vec<Vec<f64>> = net
        .cells
        .iter()
        .map(|_| vec![0.0; net.hidden_size])
        .collect();
    let mut outputs = Vec::with_capacity(n_steps);
    let mut steps = Vec::with_capacity(n_steps);

    for j in 0..n_steps {
        let mut x = if j == 0 {
            rho0_encoding.to_vec()
        } else {
            vec![0.0; rho0_encoding.len()]
        };
        if let Some(w) = extra_input {
            x.push(w);
        }

        let mut caches = Vec::with_capacity(net.cells.len());
        let mut layer_input = x;
        for (layer, cell) in net.cells.iter().enumerate() {
            let (s, cache) = gru_cell_forward(&layer_input, &states[layer], cell);
            layer_input = s.clone();
            states[layer] = s;
            caches.push(cache);
        }
        let output = net.head_forward(states.last().unwrap());
        outputs.push(output.clone());
        steps.push(TapeStep {
            cells: caches,
            output,
        });
    }

    (outputs, Tape { steps })
}

/// Full backpropagation through time. `output_grads[j]` is dC/d(output at
/// step j); the return value has the same shape as the network and holds
/// dC/dθ accumulated over all steps.
pub fn backward(net: &GruNetwork, tape: &Tape, output_grads: &[Vec<f64>]) -> GruNetwork {
    assert_eq!(
        output_grads.len(),
        tape.steps.len(),
        "one output gradient per tape step required"
    );
    let mut grads = net.zeros_like();
    let n_layers = net.cells.len();
    // Hidden-state gradients carried across the time loop, per layer.
    let mut carry: Vec<Vec<f64>> = (0..n_layers).map(|_| vec![0.0; net.hidden_size]).collect();

    for (j, step) in tape.steps.iter().enumerate().rev() {
        let dout = &output_grads[j];
        assert_eq!(dout.len(), net.output_size, "output gradient size mismatch");

        let top_state = &step.cells[n_layers - 1].s;
        grads.head_w.outer_add(dout, top_state);
        for (g, d) in grads.head_b.iter_mut().zip(dout) {
            *g += d;
        }

        // dC/ds for the top layer at this step: head contribution plus
        // whatever flowed back from step j+1.
        let mut ds = carry[n_layers - 1].clone();
        net.head_w.matvec_transpose_add(dout, &mut ds);

        for layer in (0..n_layers).rev() {
            let (dx, ds_prev) = gru_cell_backward(
                &net.cells[layer],
                &step.cells[layer],
                &ds,
                &mut grads.cells[layer],
            );
            carry[layer] = ds_prev;
            if layer > 0 {
                // The layer input was the lower layer's state at this step.
                let mut lower = carry[layer - 1].clone();
                for (a, b) in lower.iter_mut().zip(&dx) {
                    *a += b;
                }
                ds = lower;
                carry[layer - 1] = vec![0.0; net.hidden_size];
            }
        }
    }
    grads
}

/// Adam optimizer state; accumulators are shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: GruNetwork,
    pub v: GruNetwork,
}

impl AdamState {
    pub fn new(learning_rate: f64, net: &GruNetwork) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }
}

/// Which parameters receive L2 weight decay, and how much. The decay term
/// 2·l2·w is added to the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDecayMask {
    pub head_weights: bool,
    pub l2: f64,
}

impl WeightDecayMask {
    pub fn none() -> Self {
        Self {
            head_weights: false,
            l2: 0.0,
        }
    }

    pub fn head_only(l2: f64) -> Self {
        Self {
            head_weights: true,
            l2,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut GruNetwork,
    grads: &GruNetwork,
    state: &mut AdamState,
    decay: &WeightDecayMask,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let names = params.param_names();

    let AdamState {
        m,
        v,
        beta1,
        beta2,
        epsilon,
        learning_rate,
        ..
    } = state;
    let p_arrays = params.param_slices_mut();
    let g_arrays = grads.param_slices();
    let m_arrays = m.param_slices_mut();
    let v_arrays = v.param_slices_mut();

    for (((name, p), g), (m_a, v_a)) in names
        .iter()
        .zip(p_arrays)
        .zip(g_arrays)
        .zip(m_arrays.into_iter().zip(v_arrays))
    {
        let decaying = decay.head_weights && name == "head_w";
        for i in 0..p.len() {
            let mut gi = g[i];
            if decaying {
                gi += 2.0 * decay.l2 * p[i];
            }
            m_a[i] = *beta1 * m_a[i] + (1.0 - *beta1) * gi;
            v_a[i] = *beta2 * v_a[i] + (1.0 - *beta2) * gi * gi;
            let m_hat = m_a[i] / bc1;
            let v_hat = v_a[i] / bc2;
            p[i] -= *learning_rate * m_hat / (v_hat.sqrt() + *epsilon);
        }
    }
}

/// Random orthogonal matrix: QR of a standard-normal square matrix with
/// the signs fixed so that diag(R) > 0.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> RealMat {
    let mut a = RealMat::zeros(n, n);
    for v in a.data.iter_mut() {
        *v = StandardNormal.sample(rng);
    }

    // Householder QR; Q accumulated explicitly.
    let mut r = a;
    let mut q = RealMat::zeros(n, n);
    for i in 0..n {
        q.set(i, i, 1.0);
    }
    for k in 0..n {
        let mut norm = 0.0;
        for i in k..n {
            norm += r.get(i, k) * r.get(i, k);
        }
        let norm = norm.sqrt();
        if norm < 1e-300 {
            continue;
        }
        let alpha = if r.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n];
        for i in k..n {
            v[i] = r.get(i, k);
        }
        v[k] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq < 1e-300 {
            continue;
        }
        // R ← (I − 2vvᵀ/‖v‖²) R
        for j in k..n {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i] * r.get(i, j);
            }
            let coef = 2.0 * dot / vnorm_sq;
            for i in k..n {
                let val = r.get(i, j) - coef * v[i];
                r.set(i, j, val);
            }
        }
        // Q ← Q (I − 2vvᵀ/‖v‖²)
        for i in 0..n {
            let mut dot = 0.0;
            for j in k..n {
                dot += q.get(i, j) * v[j];
            }
            let coef = 2.0 * dot / vnorm_sq;
            for j in k..n {
                let val = q.get(i, j) - coef * v[j];
                q.set(i, j, val);
            }
        }
    }
    for j in 0..n {
        if r.get(j, j) < 0.0 {
            for i in 0..n {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }
    q
}

fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMat {
    // Weight matrices are (out × in), so fan_in = cols, fan_out = rows.
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = RealMat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = (2.0 * rng.random::<f64>() - 1.0) * limit;
    }
    m
}

/// Fresh network: Glorot-uniform input and head weights, random orthogonal
/// recurrent matrices, zero biases.
pub fn init_params(
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    seed: u64,
) -> GruNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = GruNetwork::zeros(input_size, hidden_size, output_size);
    for cell in net.cells.iter_mut() {
        let input = cell.input_size();
        cell.wz = glorot_uniform(hidden_size, input, &mut rng);
        cell.wr = glorot_uniform(hidden_size, input, &mut rng);
        cell.wh = glorot_uniform(hidden_size, input, &mut rng);
        cell.uz = random_orthogonal(hidden_size, &mut rng);
        cell.ur = random_orthogonal(hidden_size, &mut rng);
        cell.uh = random_orthogonal(hidden_size, &mut rng);
    }
    net.head_w = glorot_uniform(output_size, hidden_size, &mut rng);
    net
}
