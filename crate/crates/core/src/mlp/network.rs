//! Fully connected ReLU network with manual backpropagation.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Sub};

use rand::Rng;
use rand_distr::StandardNormal;

/// Element type of a [`Network`]: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Copy + Default + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + AddAssign + 'static
{
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` over strided row/column layouts.
    ///
    /// # Safety
    /// The pointers and strides must describe in-bounds `m x k`, `k x n` and
    /// `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self, c: *mut Self, rsc: isize, csc: isize,
    );
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self, c: *mut Self, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self, c: *mut Self, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major strides of an `rows x cols` matrix, optionally read transposed.
#[derive(Clone, Copy)]
struct View {
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl View {
    fn row_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, rs: cols as isize, cs: 1 }
    }

    fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs as usize + (self.cols - 1) * self.cs as usize + 1
        }
    }
}

/// `c = alpha * a b + beta * c` with bounds checked against the views.
fn matmul<T: Scalar>(alpha: T, a: &[T], va: View, b: &[T], vb: View, beta: T, c: &mut [T], vc: View) {
    assert_eq!(va.cols, vb.rows);
    assert_eq!((va.rows, vb.cols), (vc.rows, vc.cols));
    assert!(a.len() >= va.span() && b.len() >= vb.span() && c.len() >= vc.span());
    // SAFETY: the spans above keep every strided access inside the slices.
    unsafe {
        T::gemm(
            va.rows, va.cols, vb.cols, alpha,
            a.as_ptr(), va.rs, va.cs,
            b.as_ptr(), vb.rs, vb.cs,
            beta, c.as_mut_ptr(), vc.rs, vc.cs,
        );
    }
}

/// One affine layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::ZERO; inputs * outputs],
            bias: vec![T::ZERO; outputs],
        }
    }

    /// He-normal weights with standard deviation `sqrt(2 / inputs)`, zero bias.
    pub fn he<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = crate::math::sqrt(2.0 / inputs as f64);
        let weights = (0..inputs * outputs)
            .map(|_| T::from_f64(std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { inputs, outputs, weights, bias: vec![T::ZERO; outputs] }
    }

    fn w_view(&self) -> View {
        View::row_major(self.outputs, self.inputs)
    }
}

/// ReLU on every hidden layer, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
}

/// Activations kept from the last forward pass.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    /// `acts[0]` is the input batch, `acts[i + 1]` the output of layer `i`
    /// (post-ReLU for hidden layers).
    acts: Vec<Vec<T>>,
    deltas: [Vec<T>; 2],
    batch: usize,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self { acts: Vec::new(), deltas: [Vec::new(), Vec::new()], batch: 0 }
    }
}

impl<T: Scalar> Network<T> {
    /// Network with layer widths `widths[0] -> widths[1] -> ... -> widths[last]`.
    pub fn he_init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let layers = widths.windows(2).map(|w| Layer::he(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Layer widths including the input.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().chain(&l.bias).all(|x| x.to_f64().is_finite())
        })
    }

    /// Forward pass over a row-major `batch x input_dim` matrix; returns the
    /// `batch x output_dim` output, keeping activations in `ws`.
    pub fn forward<'w>(&self, input: &[T], batch: usize, ws: &'w mut Workspace<T>) -> &'w [T] {
        assert_eq!(input.len(), batch * self.input_dim());
        ws.acts.resize_with(self.layers.len() + 1, Vec::new);
        ws.batch = batch;
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let x = &head[i];
            let z = &mut tail[0];
            z.clear();
            for _ in 0..batch {
                z.extend_from_slice(&layer.bias);
            }
            matmul(
                T::from_f64(1.0),
                x, View::row_major(batch, layer.inputs),
                &layer.weights, layer.w_view().t(),
                T::from_f64(1.0),
                z, View::row_major(batch, layer.outputs),
            );
            if i != last {
                for v in z.iter_mut() {
                    if *v < T::ZERO {
                        *v = T::ZERO;
                    }
                }
            }
        }
        &ws.acts[last + 1]
    }

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the outputs of the
    /// last forward pass) and overwrites `grads` with parameter gradients.
    pub fn backward(&self, d_out: &[T], ws: &mut Workspace<T>, grads: &mut Network<T>) {
        let batch = ws.batch;
        assert_eq!(d_out.len(), batch * self.output_dim());
        let [cur, next] = &mut ws.deltas;
        cur.clear();
        cur.extend_from_slice(d_out);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let x = &ws.acts[i];
            // dW = dZ^T X
            matmul(
                T::from_f64(1.0),
                cur, View::row_major(batch, layer.outputs).t(),
                x, View::row_major(batch, layer.inputs),
                T::ZERO,
                &mut g.weights, layer.w_view(),
            );
            g.bias.iter_mut().for_each(|b| *b = T::ZERO);
            for row in cur.chunks_exact(layer.outputs) {
                for (b, &d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if i == 0 {
                break;
            }
            // dX = dZ W, gated by the ReLU of the layer below.
            next.clear();
            next.resize(batch * layer.inputs, T::ZERO);
            matmul(
                T::from_f64(1.0),
                cur, View::row_major(batch, layer.outputs),
                &layer.weights, layer.w_view(),
                T::ZERO,
                next, View::row_major(batch, layer.inputs),
            );
            for (d, &a) in next.iter_mut().zip(x.iter()) {
                if !(a > T::ZERO) {
                    *d = T::ZERO;
                }
            }
            core::mem::swap(cur, next);
        }
    }

    /// A zero-filled network of the same shape, for gradients and momentum.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    /// Mutable view of all parameters in a fixed order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

/// Mean squared error over a batch and its gradient w.r.t. the predictions.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T], grad: &mut Vec<T>) -> f64 {
    let n = pred.len() as f64;
    grad.clear();
    let scale = T::from_f64(2.0 / n);
    let mut total = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let e = p - t;
        total += e.to_f64() * e.to_f64();
        grad.push(scale * e);
    }
    total / n
}

/// Stochastic gradient descent with heavy-ball momentum:
/// `v = momentum * v + g`, `w -= lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Network<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &Network<T>, learning_rate: f64, momentum: f64) -> Self {
        Self { learning_rate, momentum, velocity: net.zeros_like() }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Network<T>) {
        let mu = T::from_f64(self.momentum);
        let lr = T::from_f64(self.learning_rate);
        for ((w, v), &g) in net.params_mut().zip(self.velocity.params_mut()).zip(grads.params()) {
            *v = mu * *v + g;
            *w = *w - lr * *v;
        }
    }
}
