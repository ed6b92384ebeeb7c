//! Fully connected ELU networks with hand-written backpropagation and Adam.
//!
//! Weights are stored `[in, out]` so a batch `X: [B, in]` maps to `X W + b`.
//! Everything is generic over the float type: training runs in `f32`, the
//! gradient checks run in `f64`.

use std::fmt::Debug;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

pub trait Scalar:
    LinalgScalar + ScalarOperand + Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
}
impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn cast<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("float conversion")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// Linear layers with ELU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

/// Activations saved by [`Mlp::forward_cached`].
pub struct MlpCache<F> {
    /// Input of every layer; entry 0 is the network input.
    inputs: Vec<Array2<F>>,
}

fn elu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Orthogonal matrix `[rows, cols]` scaled by `gain`.
fn orthogonal<F: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<F> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| reposer_core::rng::normal(rng));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign correction makes the distribution uniform over orthogonal matrices.
    let q = DMatrix::from_fn(big, small, |i, j| if r[(j, j)] < 0.0 { -q[(i, j)] } else { q[(i, j)] });
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        cast(v * gain)
    })
}

impl<F: Scalar> Mlp<F> {
    /// Orthogonal initialization: `hidden_gain` on hidden layers, `output_gain`
    /// on the last layer, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { output_gain } else { hidden_gain };
                Linear { w: orthogonal(sizes[i], sizes[i + 1], gain, rng), b: Array1::zeros(sizes[i + 1]) }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Linear { w: Array2::zeros((w[0], w[1])), b: Array1::zeros(w[1]) })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.ncols()).unwrap_or(0)
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, MlpCache<F>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w) + &layer.b;
            if i < last {
                z.mapv_inplace(elu);
            }
            inputs.push(h);
            h = z;
        }
        (h, MlpCache { inputs })
    }

    /// Parameter gradients for upstream gradient `dout` of the output.
    pub fn backward(&self, cache: &MlpCache<F>, dout: ArrayView2<F>) -> Mlp<F> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dout.to_owned();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let w = x.t().dot(&delta).as_standard_layout().into_owned();
            grads.push(Linear { w, b: delta.sum_axis(Axis(0)) });
            if i > 0 {
                let mut dx = delta.dot(&self.layers[i].w.t());
                // x is the ELU output of the previous layer: elu'(z) = 1 for z > 0, else elu(z) + 1.
                dx.zip_mut_with(x, |d, &a| {
                    if a <= F::zero() {
                        *d = *d * (a + F::one());
                    }
                });
                delta = dx;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    pub fn tensors(&self) -> Vec<&[F]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("standard layout")])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().expect("standard layout"), l.b.as_slice_mut().expect("standard layout")])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub fn global_norm<F: Scalar>(tensors: &[&[F]]) -> F {
    tensors.iter().flat_map(|t| t.iter()).fold(F::zero(), |acc, &v| acc + v * v).sqrt()
}

/// Scale all tensors so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Scalar>(tensors: &mut [&mut [F]], max_norm: F) -> F {
    let norm = tensors.iter().flat_map(|t| t.iter()).fold(F::zero(), |acc, &v| acc + v * v).sqrt();
    if max_norm > F::zero() && norm > max_norm {
        let s = max_norm / norm;
        for t in tensors.iter_mut() {
            for v in t.iter_mut() {
                *v = *v * s;
            }
        }
    }
    norm
}

/// Adam with bias correction and default moment coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn apply(&mut self, params: &mut [&mut [F]], grads: &[&[F]], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different parameter set");
        self.step += 1;
        let (b1, b2) = (cast::<F>(self.beta1), cast::<F>(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = cast::<F>(lr * c2.sqrt() / c1);
        let eps = cast::<F>(self.eps * c2.sqrt());
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                p[i] = p[i] - step_size * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use reposer_core::rng::{stream, Purpose};

    #[test]
    fn orthogonal_columns() {
        let mut rng = stream(1, Purpose::Init, 0, 0);
        let w: Array2<f64> = orthogonal(16, 6, 2.0, &mut rng);
        let g = w.t().dot(&w);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 4.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
        }
        let wide: Array2<f64> = orthogonal(4, 9, 1.0, &mut rng);
        let g = wide.dot(&wide.t());
        assert!((g - Array2::<f64>::eye(4)).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f32>::zeros(&[5, 8, 3]);
        let y = net.forward(Array2::from_elem((4, 5), 1.7).view());
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(3, Purpose::Init, 0, 0);
        let net = Mlp::<f64>::new(&[3, 5, 4, 2], 1.4, 1.0, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let loss = |n: &Mlp<f64>| n.forward(x.view()).iter().enumerate().map(|(k, v)| v * (k as f64 + 1.0) * 0.1).sum::<f64>();
        let (y, cache) = net.forward_cached(x.view());
        let dout = Array2::from_shape_fn(y.raw_dim(), |(i, j)| (i * 2 + j + 1) as f64 * 0.1);
        let grads = net.backward(&cache, dout.view());
        let analytic: Vec<f64> = grads.tensors().concat();
        let mut idx = 0;
        for t in 0..net.tensors().len() {
            for i in 0..net.tensors()[t].len() {
                let h = 1e-6;
                let mut plus = net.clone();
                plus.tensors_mut()[t][i] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[t][i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((fd - analytic[idx]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {t}/{i}: {fd} vs {}", analytic[idx]);
                idx += 1;
            }
        }
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = vec![1.0f64, -2.0];
        let mut opt = Adam::<f64>::new(&[2]);
        opt.apply(&mut [&mut p[..]], &[&[0.5, -3.0]], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut a = vec![3.0f64, 0.0];
        let mut b = vec![4.0f64];
        let n = clip_global_norm(&mut [&mut a[..], &mut b[..]], 1.0);
        assert_eq!(n, 5.0);
        assert!((global_norm::<f64>(&[&a, &b]) - 1.0).abs() < 1e-12);
    }
}
