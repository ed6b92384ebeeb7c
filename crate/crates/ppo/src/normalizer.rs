//! Running observation statistics.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::nn::{cast, Scalar};

pub const CLIP: f64 = 5.0;

/// Per-feature running mean and variance (parallel Welford merge), kept in
/// `f64` so long runs do not lose precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update<F: Scalar>(&mut self, batch: ArrayView2<F>) {
        let n = batch.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let total = self.count + n;
        for (j, col) in batch.columns().into_iter().enumerate() {
            let m = col.iter().map(|v| v.to_f64().unwrap_or(0.0)).sum::<f64>() / n;
            let v = col.iter().map(|x| (x.to_f64().unwrap_or(0.0) - m).powi(2)).sum::<f64>() / n;
            let delta = m - self.mean[j];
            let m2 = self.var[j] * self.count + v * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    /// `(x - mean) / sqrt(var + 1e-8)`, clipped to `[-5, 5]`. Identity until
    /// the first update.
    pub fn normalize<F: Scalar>(&self, batch: ArrayView2<F>) -> Array2<F> {
        if self.count == 0.0 {
            return batch.to_owned();
        }
        let scale: Vec<f64> = self.var.iter().map(|v| 1.0 / (v + 1e-8).sqrt()).collect();
        Array2::from_shape_fn(batch.raw_dim(), |(i, j)| {
            let x = batch[(i, j)].to_f64().unwrap_or(f64::NAN);
            cast(((x - self.mean[j]) * scale[j]).clamp(-CLIP, CLIP))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_stats_match_direct() {
        let data = Array2::from_shape_fn((100, 2), |(i, j)| (i as f64 * 0.37 + j as f64).sin() * (j as f64 + 1.0));
        let mut rn = RunningNorm::new(2);
        rn.update(data.slice(ndarray::s![..30, ..]));
        rn.update(data.slice(ndarray::s![30.., ..]));
        for j in 0..2 {
            let col = data.column(j);
            let m = col.sum() / 100.0;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 100.0;
            assert!((rn.mean[j] - m).abs() < 1e-12 && (rn.var[j] - v).abs() < 1e-12);
        }
        assert_eq!(rn.count, 100.0);
    }

    #[test]
    fn fresh_normalizer_is_identity() {
        let x = Array2::from_elem((2, 3), 42.0f32);
        assert_eq!(RunningNorm::new(3).normalize(x.view()), x);
    }
}
