//! Minimal reverse-mode automatic differentiation over dense 2-D tensors,
//! plus the Adam optimizer. A [`Tape`] records one forward pass; parameters
//! live in a [`ParamSet`] that persists across passes.

use crate::error::{Error, Result};

pub type TensorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// A trainable parameter: values plus a gradient accumulator of the same
/// shape.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Owns all trainable parameters of one model.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    grads_ready: bool,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: [usize; 2], values: Vec<f64>) -> ParamId {
        assert_eq!(values.len(), shape[0] * shape[1]);
        let id = ParamId(self.params.len());
        let len = values.len();
        self.params.push(Param {
            name: name.into(),
            shape,
            values,
            grad: vec![0.0; len],
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.grads_ready = false;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    /// Snapshot of all parameter values (for best-epoch checkpoints).
    pub fn values_snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.values.clone()).collect()
    }

    pub fn restore_snapshot(&mut self, snap: &[Vec<f64>]) {
        assert_eq!(snap.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snap) {
            p.values.copy_from_slice(s);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(TensorId, TensorId),
    /// a (m x k) times b^T where b is (n x k)
    MatmulBt(TensorId, TensorId),
    Add(TensorId, TensorId),
    Hadamard(TensorId, TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Relu(TensorId),
    Concat(TensorId, TensorId),
    Slice(TensorId, usize, usize),
    Sum(TensorId),
    MseLoss(TensorId, TensorId),
}

struct Node {
    shape: [usize; 2],
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
    param: Option<ParamId>,
}

/// Records the primitive operations of one forward pass in topological
/// order; consumed by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, shape: [usize; 2], values: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        let id = self.nodes.len();
        let grad = if requires_grad {
            vec![0.0; values.len()]
        } else {
            Vec::new()
        };
        self.nodes.push(Node {
            shape,
            values,
            grad,
            requires_grad,
            op,
            param: None,
        });
        id
    }

    /// A constant leaf that never receives gradient.
    pub fn constant(&mut self, shape: [usize; 2], values: Vec<f64>) -> TensorId {
        assert_eq!(values.len(), shape[0] * shape[1]);
        self.push(shape, values, false, Op::Leaf)
    }

    pub fn leaf(&mut self, shape: [usize; 2], values: Vec<f64>, requires_grad: bool) -> TensorId {
        assert_eq!(values.len(), shape[0] * shape[1]);
        self.push(shape, values, requires_grad, Op::Leaf)
    }

    /// A leaf bound to a parameter; [`Tape::accumulate_param_grads`] routes
    /// its gradient back into the [`ParamSet`].
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> TensorId {
        let p = params.get(id);
        let t = self.push(p.shape, p.values.clone(), true, Op::Leaf);
        self.nodes[t].param = Some(id);
        t
    }

    pub fn shape(&self, t: TensorId) -> [usize; 2] {
        self.nodes[t].shape
    }

    pub fn value(&self, t: TensorId) -> &[f64] {
        &self.nodes[t].values
    }

    pub fn grad(&self, t: TensorId) -> Option<&[f64]> {
        if self.nodes[t].requires_grad {
            Some(&self.nodes[t].grad)
        } else {
            None
        }
    }

    fn req(&self, a: TensorId, b: TensorId) -> bool {
        self.nodes[a].requires_grad || self.nodes[b].requires_grad
    }

    fn shape_err(&self, op: &'static str, a: TensorId, b: TensorId) -> Error {
        Error::Shape {
            op,
            lhs: self.nodes[a].shape.to_vec(),
            rhs: self.nodes[b].shape.to_vec(),
        }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let [m, k] = self.nodes[a].shape;
        let [k2, n] = self.nodes[b].shape;
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = &self.nodes[a].values;
            let bv = &self.nodes[b].values;
            for i in 0..m {
                let a_row = &av[i * k..(i + 1) * k];
                let o_row = &mut out[i * n..(i + 1) * n];
                for (p, &aa) in a_row.iter().enumerate() {
                    let b_row = &bv[p * n..(p + 1) * n];
                    for (o, &bb) in o_row.iter_mut().zip(b_row) {
                        *o += aa * bb;
                    }
                }
            }
        }
        let rg = self.req(a, b);
        Ok(self.push([m, n], out, rg, Op::Matmul(a, b)))
    }

    /// a (m x k) multiplied by the transpose of b (n x k); the usual layout
    /// for `batch x features` times a weight matrix stored as `out x in`.
    pub fn matmul_bt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let [m, k] = self.nodes[a].shape;
        let [n, k2] = self.nodes[b].shape;
        if k != k2 {
            return Err(self.shape_err("matmul_bt", a, b));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = &self.nodes[a].values;
            let bv = &self.nodes[b].values;
            for i in 0..m {
                let a_row = &av[i * k..(i + 1) * k];
                for j in 0..n {
                    let b_row = &bv[j * k..(j + 1) * k];
                    out[i * n + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                }
            }
        }
        let rg = self.req(a, b);
        Ok(self.push([m, n], out, rg, Op::MatmulBt(a, b)))
    }

    /// Elementwise addition; the right operand may be a single row that is
    /// broadcast over the rows of the left (bias addition).
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let [m, n] = self.nodes[a].shape;
        let [mb, nb] = self.nodes[b].shape;
        if !(mb == m && nb == n || (mb == 1 && nb == n)) {
            return Err(self.shape_err("add", a, b));
        }
        let av = &self.nodes[a].values;
        let bv = &self.nodes[b].values;
        let out: Vec<f64> = if mb == m {
            av.iter().zip(bv).map(|(x, y)| x + y).collect()
        } else {
            let mut o = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    o.push(av[i * n + j] + bv[j]);
                }
            }
            o
        };
        let rg = self.req(a, b);
        Ok(self.push([m, n], out, rg, Op::Add(a, b)))
    }

    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.nodes[a].shape != self.nodes[b].shape {
            return Err(self.shape_err("hadamard", a, b));
        }
        let out: Vec<f64> = self.nodes[a]
            .values
            .iter()
            .zip(&self.nodes[b].values)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.req(a, b);
        Ok(self.push(self.nodes[a].shape, out, rg, Op::Hadamard(a, b)))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.nodes[a].values.iter().map(|&x| sigmoid(x)).collect();
        let rg = self.nodes[a].requires_grad;
        self.push(self.nodes[a].shape, out, rg, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.nodes[a].values.iter().map(|&x| x.tanh()).collect();
        let rg = self.nodes[a].requires_grad;
        self.push(self.nodes[a].shape, out, rg, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.nodes[a].values.iter().map(|&x| x.max(0.0)).collect();
        let rg = self.nodes[a].requires_grad;
        self.push(self.nodes[a].shape, out, rg, Op::Relu(a))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let [m, na] = self.nodes[a].shape;
        let [mb, nb] = self.nodes[b].shape;
        if m != mb {
            return Err(self.shape_err("concat", a, b));
        }
        let n = na + nb;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend_from_slice(&self.nodes[a].values[i * na..(i + 1) * na]);
            out.extend_from_slice(&self.nodes[b].values[i * nb..(i + 1) * nb]);
        }
        let rg = self.req(a, b);
        Ok(self.push([m, n], out, rg, Op::Concat(a, b)))
    }

    /// Column slice `start..end` along the last axis.
    pub fn slice(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let [m, n] = self.nodes[a].shape;
        if start >= end || end > n {
            return Err(Error::InvalidArgument(format!(
                "slice {}..{} out of range for width {}",
                start, end, n
            )));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&self.nodes[a].values[i * n + start..i * n + end]);
        }
        let rg = self.nodes[a].requires_grad;
        Ok(self.push([m, w], out, rg, Op::Slice(a, start, end)))
    }

    /// Sum of all elements (scalar output).
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.nodes[a].values.iter().sum();
        let rg = self.nodes[a].requires_grad;
        self.push([1, 1], vec![s], rg, Op::Sum(a))
    }

    /// Mean squared error over all elements (scalar output).
    pub fn mse_loss(&mut self, prediction: TensorId, target: TensorId) -> Result<TensorId> {
        if self.nodes[prediction].shape != self.nodes[target].shape {
            return Err(self.shape_err("mse_loss", prediction, target));
        }
        let n = self.nodes[prediction].values.len() as f64;
        let s: f64 = self.nodes[prediction]
            .values
            .iter()
            .zip(&self.nodes[target].values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let rg = self.req(prediction, target);
        Ok(self.push([1, 1], vec![s / n], rg, Op::MseLoss(prediction, target)))
    }

    /// Reverse pass from a scalar loss; gradients accumulate into every
    /// upstream node with `requires_grad`.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss].values.len() != 1 {
            return Err(Error::InvalidArgument(
                "backward requires a scalar loss".into(),
            ));
        }
        if !self.nodes[loss].requires_grad {
            return Ok(());
        }
        self.nodes[loss].grad[0] += 1.0;
        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let [m, n] = self.nodes[id].shape;
                    let k = self.nodes[a].shape[1];
                    let g = self.nodes[id].grad.clone();
                    if self.nodes[a].requires_grad {
                        // dA += dC * B^T
                        let bv = self.nodes[b].values.clone();
                        let ga = &mut self.nodes[a].grad;
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    if self.nodes[b].requires_grad {
                        // dB += A^T * dC
                        let av = self.nodes[a].values.clone();
                        let gb = &mut self.nodes[b].grad;
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += av[i * k + p] * g[i * n + j];
                                }
                                gb[p * n + j] += acc;
                            }
                        }
                    }
                }
                Op::MatmulBt(a, b) => {
                    let [m, n] = self.nodes[id].shape;
                    let k = self.nodes[a].shape[1];
                    let g = self.nodes[id].grad.clone();
                    if self.nodes[a].requires_grad {
                        // dA += dC * B
                        let bv = self.nodes[b].values.clone();
                        let ga = &mut self.nodes[a].grad;
                        for i in 0..m {
                            for j in 0..n {
                                let gij = g[i * n + j];
                                if gij != 0.0 {
                                    let b_row = &bv[j * k..(j + 1) * k];
                                    let ga_row = &mut ga[i * k..(i + 1) * k];
                                    for (x, &y) in ga_row.iter_mut().zip(b_row) {
                                        *x += gij * y;
                                    }
                                }
                            }
                        }
                    }
                    if self.nodes[b].requires_grad {
                        // dB += dC^T * A
                        let av = self.nodes[a].values.clone();
                        let gb = &mut self.nodes[b].grad;
                        for i in 0..m {
                            let a_row = &av[i * k..(i + 1) * k];
                            for j in 0..n {
                                let gij = g[i * n + j];
                                if gij != 0.0 {
                                    let gb_row = &mut gb[j * k..(j + 1) * k];
                                    for (x, &y) in gb_row.iter_mut().zip(a_row) {
                                        *x += gij * y;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let g = self.nodes[id].grad.clone();
                    let [m, n] = self.nodes[id].shape;
                    if self.nodes[a].requires_grad {
                        for (x, &y) in self.nodes[a].grad.iter_mut().zip(&g) {
                            *x += y;
                        }
                    }
                    if self.nodes[b].requires_grad {
                        if self.nodes[b].shape[0] == 1 && m > 1 {
                            for i in 0..m {
                                for j in 0..n {
                                    self.nodes[b].grad[j] += g[i * n + j];
                                }
                            }
                        } else {
                            for (x, &y) in self.nodes[b].grad.iter_mut().zip(&g) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::Hadamard(a, b) => {
                    let g = self.nodes[id].grad.clone();
                    if self.nodes[a].requires_grad {
                        let bv = self.nodes[b].values.clone();
                        for ((x, &y), &v) in self.nodes[a].grad.iter_mut().zip(&g).zip(&bv) {
                            *x += y * v;
                        }
                    }
                    if self.nodes[b].requires_grad {
                        let av = self.nodes[a].values.clone();
                        for ((x, &y), &v) in self.nodes[b].grad.iter_mut().zip(&g).zip(&av) {
                            *x += y * v;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let g = self.nodes[id].grad.clone();
                    let yv = self.nodes[id].values.clone();
                    for ((x, &gy), &y) in self.nodes[a].grad.iter_mut().zip(&g).zip(&yv) {
                        *x += gy * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let g = self.nodes[id].grad.clone();
                    let yv = self.nodes[id].values.clone();
                    for ((x, &gy), &y) in self.nodes[a].grad.iter_mut().zip(&g).zip(&yv) {
                        *x += gy * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let g = self.nodes[id].grad.clone();
                    let xv = self.nodes[a].values.clone();
                    for ((gx, &gy), &x) in self.nodes[a].grad.iter_mut().zip(&g).zip(&xv) {
                        if x > 0.0 {
                            *gx += gy;
                        }
                    }
                }
                Op::Concat(a, b) => {
                    let g = self.nodes[id].grad.clone();
                    let [m, _] = self.nodes[id].shape;
                    let na = self.nodes[a].shape[1];
                    let nb = self.nodes[b].shape[1];
                    let n = na + nb;
                    if self.nodes[a].requires_grad {
                        for i in 0..m {
                            for j in 0..na {
                                self.nodes[a].grad[i * na + j] += g[i * n + j];
                            }
                        }
                    }
                    if self.nodes[b].requires_grad {
                        for i in 0..m {
                            for j in 0..nb {
                                self.nodes[b].grad[i * nb + j] += g[i * n + na + j];
                            }
                        }
                    }
                }
                Op::Slice(a, start, _end) => {
                    let g = self.nodes[id].grad.clone();
                    let [m, w] = self.nodes[id].shape;
                    let n = self.nodes[a].shape[1];
                    for i in 0..m {
                        for j in 0..w {
                            self.nodes[a].grad[i * n + start + j] += g[i * w + j];
                        }
                    }
                }
                Op::Sum(a) => {
                    let gy = self.nodes[id].grad[0];
                    for x in self.nodes[a].grad.iter_mut() {
                        *x += gy;
                    }
                }
                Op::MseLoss(a, b) => {
                    let gy = self.nodes[id].grad[0];
                    let n = self.nodes[a].values.len() as f64;
                    let av = self.nodes[a].values.clone();
                    let bv = self.nodes[b].values.clone();
                    if self.nodes[a].requires_grad {
                        for (i, x) in self.nodes[a].grad.iter_mut().enumerate() {
                            *x += gy * 2.0 * (av[i] - bv[i]) / n;
                        }
                    }
                    if self.nodes[b].requires_grad {
                        for (i, x) in self.nodes[b].grad.iter_mut().enumerate() {
                            *x -= gy * 2.0 * (av[i] - bv[i]) / n;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds the gradients of parameter-bound leaves into the parameter
    /// accumulators.
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) {
        for node in &self.nodes {
            if let Some(pid) = node.param {
                let p = params.get_mut(pid);
                for (g, &ng) in p.grad.iter_mut().zip(&node.grad) {
                    *g += ng;
                }
            }
        }
        params.grads_ready = true;
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step_count: usize,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Result<Self> {
        if config.learning_rate <= 0.0
            || config.epsilon <= 0.0
            || !(0.0 < config.beta1 && config.beta1 < 1.0)
            || !(0.0 < config.beta2 && config.beta2 < 1.0)
        {
            return Err(Error::InvalidArgument(
                "adam hyperparameters out of range".into(),
            ));
        }
        Ok(Self {
            m: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            step_count: 0,
            config,
        })
    }
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    if !params.grads_ready {
        return Err(Error::State(
            "adam step before gradients were populated".into(),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as f64;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powf(t);
    let bc2 = 1.0 - c.beta2.powf(t);
    for (idx, p) in params.params.iter_mut().enumerate() {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for i in 0..p.values.len() {
            let g = p.grad[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p.values[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
        }
    }
    params.zero_grads();
    Ok(())
}

/// Uniform init on +/- 1/sqrt(fan_in), the conventional scheme for dense and
/// recurrent layers.
pub fn uniform_init(rng: &mut impl rand::Rng, rows: usize, cols: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn primitive_fixed_points() {
        let mut t = Tape::new();
        let z = t.constant([1, 1], vec![0.0]);
        let neg = t.constant([1, 1], vec![-1.0]);
        let s = t.sigmoid(z);
        assert!((t.value(s)[0] - 0.5).abs() < 1e-15);
        let th = t.tanh(z);
        assert_eq!(t.value(th)[0], 0.0);
        let r = t.relu(neg);
        assert_eq!(t.value(r)[0], 0.0);
    }

    #[test]
    fn mse_identical_inputs_is_zero() {
        let mut t = Tape::new();
        let a = t.constant([2, 3], vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = t.constant([2, 3], vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let l = t.mse_loss(a, b).unwrap();
        assert_eq!(t.value(l)[0], 0.0);
    }

    #[test]
    fn matmul_hand_example() {
        let mut t = Tape::new();
        let a = t.constant([2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t.constant([2, 1], vec![1.0, 1.0]);
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut t = Tape::new();
        let a = t.constant([2, 3], vec![0.0; 6]);
        let b = t.constant([2, 2], vec![0.0; 4]);
        match t.matmul(a, b) {
            Err(Error::Shape { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("expected shape error, got {:?}", other),
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut t = Tape::new();
        let w = t.leaf([1, 4], vec![0.3, -1.0, 2.0, 5.0], true);
        let l = t.sum(w);
        t.backward(l).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_mse_scalar() {
        let mut t = Tape::new();
        let w = t.leaf([1, 1], vec![3.0], true);
        let zero = t.constant([1, 1], vec![0.0]);
        let l = t.mse_loss(w, zero).unwrap();
        t.backward(l).unwrap();
        assert!((t.grad(w).unwrap()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_nonscalar() {
        let mut t = Tape::new();
        let w = t.leaf([1, 2], vec![1.0, 2.0], true);
        assert!(t.backward(w).is_err());
    }

    #[test]
    fn no_gradient_leakage() {
        let mut t = Tape::new();
        let a = t.leaf([1, 2], vec![1.0, 2.0], false);
        let b = t.leaf([1, 2], vec![3.0, 4.0], true);
        let h = t.hadamard(a, b).unwrap();
        let l = t.sum(h);
        t.backward(l).unwrap();
        assert!(t.grad(a).is_none());
        assert_eq!(t.grad(b).unwrap(), &[1.0, 2.0]);
    }

    /// Central finite differences through an arbitrary tape-building closure.
    fn finite_diff_check<F>(build: F, input: &[f64], tol: f64)
    where
        F: Fn(&mut Tape, Vec<f64>) -> (TensorId, TensorId),
    {
        let mut t = Tape::new();
        let (leaf, loss) = build(&mut t, input.to_vec());
        t.backward(loss).unwrap();
        let analytic = t.grad(leaf).unwrap().to_vec();
        let h = 1e-6;
        for i in 0..input.len() {
            let mut plus = input.to_vec();
            plus[i] += h;
            let mut minus = input.to_vec();
            minus[i] -= h;
            let mut tp = Tape::new();
            let (_, lp) = build(&mut tp, plus);
            let mut tm = Tape::new();
            let (_, lm) = build(&mut tm, minus);
            let fd = (tp.value(lp)[0] - tm.value(lm)[0]) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            assert!(
                (analytic[i] - fd).abs() / denom < tol,
                "component {}: analytic {} vs fd {}",
                i,
                analytic[i],
                fd
            );
        }
    }

    #[test]
    fn finite_difference_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let input: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fixed: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        finite_diff_check(
            |t, vals| {
                let w = t.leaf([2, 3], vals, true);
                let x = t.constant([2, 3], fixed.clone());
                let cat = t.concat(w, x).unwrap(); // 2 x 6
                let sl = t.slice(cat, 1, 5).unwrap(); // 2 x 4
                let sg = t.sigmoid(sl);
                let th = t.tanh(sg);
                let hp = t.hadamard(th, sg).unwrap();
                let r = t.relu(hp);
                let tgt = t.constant([2, 2], target.clone());
                let wmat = t.slice(r, 0, 2).unwrap();
                let prod = t.matmul(wmat, tgt).unwrap();
                let bias = t.constant([1, 2], vec![0.1, -0.2]);
                let sum = t.add(prod, bias).unwrap();
                let zeros = t.constant([2, 2], vec![0.0; 4]);
                let loss = t.mse_loss(sum, zeros).unwrap();
                (w, loss)
            },
            &input,
            1e-5,
        );
    }

    #[test]
    fn finite_difference_matmul_bt() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let input: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        finite_diff_check(
            |t, vals| {
                let w = t.leaf([2, 3], vals, true); // out x in
                let data = t.constant([2, 3], x.clone()); // batch x in
                let y = t.matmul_bt(data, w).unwrap(); // batch x out
                let s = t.tanh(y);
                let zeros = t.constant([2, 2], vec![0.25; 4]);
                let loss = t.mse_loss(s, zeros).unwrap();
                (w, loss)
            },
            &input,
            1e-5,
        );
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", [1, 2], vec![1.5, -0.5]);
        ps.grads_ready = true;
        let mut st = AdamState::new(&ps, AdamConfig::default()).unwrap();
        adam_step(&mut ps, &mut st).unwrap();
        assert_eq!(ps.get(id).values, vec![1.5, -0.5]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", [1, 3], vec![0.0, 0.0, 0.0]);
        ps.get_mut(id).grad = vec![0.4, -2.0, 7.0];
        ps.grads_ready = true;
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&ps, cfg).unwrap();
        adam_step(&mut ps, &mut st).unwrap();
        for (v, g) in ps.get(id).values.iter().zip([0.4f64, -2.0, 7.0]) {
            assert!((v + 0.01 * g.signum()).abs() < 1e-6);
        }
        // gradients zeroed afterwards
        assert!(ps.get(id).grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_missing_gradients_is_state_error() {
        let mut ps = ParamSet::new();
        ps.add("w", [1, 1], vec![0.0]);
        let mut st = AdamState::new(&ps, AdamConfig::default()).unwrap();
        assert!(matches!(adam_step(&mut ps, &mut st), Err(Error::State(_))));
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize (w - 3)^2 from w = 0
        let mut ps = ParamSet::new();
        let id = ps.add("w", [1, 1], vec![0.0]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&ps, cfg).unwrap();
        for _ in 0..200 {
            let mut t = Tape::new();
            let w = t.param(&ps, id);
            let target = t.constant([1, 1], vec![3.0]);
            let loss = t.mse_loss(w, target).unwrap();
            t.backward(loss).unwrap();
            t.accumulate_param_grads(&mut ps);
            adam_step(&mut ps, &mut st).unwrap();
        }
        assert!((ps.get(id).values[0] - 3.0).abs() < 0.05);
    }
}
