//! Fully connected networks with rectifier hidden layers and exact backprop.

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `scale * tanh(z)`.
    ScaledTanh(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

/// Strided view of a dense matrix: `(rows, cols, row_stride, col_stride)`.
#[derive(Clone, Copy)]
struct View {
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl View {
    fn row_major(rows: usize, cols: usize) -> Self {
        View {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    fn transposed(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn fits(&self, len: usize) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < len
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `C <- A B + beta C` with `C` row-major.
fn gemm(a: &[f64], av: View, b: &[f64], bv: View, beta: f64, c: &mut [f64]) {
    assert_eq!(av.cols, bv.rows, "inner dimensions differ");
    let cv = View::row_major(av.rows, bv.cols);
    assert!(av.fits(a.len()) && bv.fits(b.len()) && cv.fits(c.len()));
    // SAFETY: the three views were checked to lie inside their slices and `c`
    // does not alias `a` or `b` (it is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            av.rows,
            av.cols,
            bv.cols,
            1.0,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Flat view in the same order as [`Mlp::param`].
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for (w, b) in self.weights.iter().zip(&self.bias) {
            if i < w.len() {
                return w[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("gradient index {index} out of range");
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }
}

/// Intermediate values of one (batched) forward pass, kept for backprop.
///
/// Every matrix is row-major with one row per sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: OutputActivation,
}

impl Mlp {
    /// Layers initialised uniformly in `+-1/sqrt(fan_in)`, the last layer in `+-3e-3`.
    pub fn new(widths: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(widths, output);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let bound = if i == last {
                3e-3
            } else {
                1.0 / (layer.inputs as f64).sqrt()
            };
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(widths: &[usize], output: OutputActivation) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        Mlp {
            layers: widths
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
            output,
        }
    }

    /// Policy network: `M -> 16M -> 16M -> M`, output `pi * tanh`.
    pub fn actor(num_antennas: usize, rng: &mut impl Rng) -> Self {
        let h = 16 * num_antennas;
        Self::new(
            &[num_antennas, h, h, num_antennas],
            OutputActivation::ScaledTanh(std::f64::consts::PI),
            rng,
        )
    }

    /// Value network: `2M -> 16M -> 16M -> 1`, linear output.
    pub fn critic(num_antennas: usize, rng: &mut impl Rng) -> Self {
        let h = 16 * num_antennas;
        Self::new(
            &[2 * num_antennas, h, h, 1],
            OutputActivation::Identity,
            rng,
        )
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut i = index;
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, false, i);
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return (li, true, i);
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Flat parameter access: per layer, weights then biases.
    pub fn param(&self, index: usize) -> f64 {
        let (l, is_bias, i) = self.locate(index);
        if is_bias {
            self.layers[l].bias[i]
        } else {
            self.layers[l].weights[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, is_bias, i) = self.locate(index);
        if is_bias {
            self.layers[l].bias[i] = value;
        } else {
            self.layers[l].weights[i] = value;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(self.forward_cached(x).output)
    }

    /// Forward pass keeping the intermediates. `x` must match the input width.
    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        self.forward_batch(x, 1)
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(x.len(), batch * self.input_width(), "input width mismatch");
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(batch * layer.outputs);
            if batch == 1 {
                // packing overhead dominates a single matrix-vector product
                z.extend(
                    layer
                        .weights
                        .chunks_exact(layer.inputs)
                        .zip(&layer.bias)
                        .map(|(row, b)| b + dot(row, &current)),
                );
            } else {
                for _ in 0..batch {
                    z.extend_from_slice(&layer.bias);
                }
                gemm(
                    &current,
                    View::row_major(batch, layer.inputs),
                    &layer.weights,
                    View::row_major(layer.outputs, layer.inputs).transposed(),
                    1.0,
                    &mut z,
                );
            }
            let next = if i + 1 < n {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                match self.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::ScaledTanh(s) => z.iter().map(|&v| s * v.tanh()).collect(),
                }
            };
            inputs.push(current);
            pre.push(z);
            current = next;
        }
        ForwardCache {
            batch,
            inputs,
            pre,
            output: current,
        }
    }

    /// Backpropagates `d_output` (dL/dy, one row per sample) through the cached pass.
    ///
    /// Parameter gradients are accumulated into `grads` when given. Returns dL/dx.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        mut grads: Option<&mut Gradients>,
    ) -> Vec<f64> {
        let n = self.layers.len();
        let batch = cache.batch;
        assert_eq!(
            d_output.len(),
            batch * self.output_width(),
            "output gradient width mismatch"
        );
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => d_output.to_vec(),
            OutputActivation::ScaledTanh(s) => d_output
                .iter()
                .zip(&cache.pre[n - 1])
                .map(|(&g, &z)| {
                    let t = z.tanh();
                    g * s * (1.0 - t * t)
                })
                .collect(),
        };
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            let dv = View::row_major(batch, layer.outputs);
            if let Some(g) = grads.as_deref_mut() {
                gemm(
                    &delta,
                    dv.transposed(),
                    &cache.inputs[li],
                    View::row_major(batch, layer.inputs),
                    1.0,
                    &mut g.weights[li],
                );
                for row in delta.chunks_exact(layer.outputs) {
                    for (gb, d) in g.bias[li].iter_mut().zip(row) {
                        *gb += d;
                    }
                }
            }
            let mut dx = vec![0.0; batch * layer.inputs];
            gemm(
                &delta,
                dv,
                &layer.weights,
                View::row_major(layer.outputs, layer.inputs),
                0.0,
                &mut dx,
            );
            if li > 0 {
                // rectifier of the previous layer
                for (v, &z) in dx.iter_mut().zip(&cache.pre[li - 1]) {
                    if z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = dx;
        }
        delta
    }

    /// `self <- (1 - tau) * self + tau * main`.
    pub fn soft_update(&mut self, main: &Mlp, tau: f64) {
        for (t, m) in self.layers.iter_mut().zip(&main.layers) {
            for (a, b) in t
                .weights
                .iter_mut()
                .chain(t.bias.iter_mut())
                .zip(m.weights.iter().chain(m.bias.iter()))
            {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
    }
}

/// Scalar objective whose gradient [`mlp_gradients`] computes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// `mean_i sum_j (t_ij - y_ij)^2`.
    Mse(&'a [Vec<f64>]),
    /// `mean_i sum_j y_ij`.
    MeanOutput,
}

/// Value and exact parameter gradient of `objective` over `batch`.
pub fn mlp_gradients(
    net: &Mlp,
    objective: Objective<'_>,
    batch: &[Vec<f64>],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if let Objective::Mse(targets) = objective {
        if targets.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                got: targets.len(),
            });
        }
    }
    let width = net.input_width();
    let mut x = Vec::with_capacity(batch.len() * width);
    for row in batch {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        x.extend_from_slice(row);
    }
    let inv = 1.0 / batch.len() as f64;
    let cache = net.forward_batch(&x, batch.len());
    let out_w = net.output_width();
    let mut value = 0.0;
    let dy: Vec<f64> = match objective {
        Objective::Mse(targets) => {
            let mut dy = Vec::with_capacity(cache.output.len());
            for (y, t) in cache.output.chunks_exact(out_w).zip(targets) {
                if t.len() != out_w {
                    return Err(Error::DimensionMismatch {
                        expected: out_w,
                        got: t.len(),
                    });
                }
                for (y, t) in y.iter().zip(t) {
                    value += inv * (t - y) * (t - y);
                    dy.push(-2.0 * inv * (t - y));
                }
            }
            dy
        }
        Objective::MeanOutput => {
            value = inv * cache.output.iter().sum::<f64>();
            vec![inv; cache.output.len()]
        }
    };
    let mut grads = Gradients::zeros_like(net);
    net.backward(&cache, &dy, Some(&mut grads));
    Ok((value, grads))
}
