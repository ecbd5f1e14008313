use serde::{Deserialize, Serialize};

const CLIP: f64 = 5.0;
const EPS: f64 = 1e-8;

/// Running per-feature mean and variance (parallel Welford merge).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub frozen: bool,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds a batch of rows into the statistics unless frozen.
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        if self.frozen {
            return;
        }
        let dim = self.dim();
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1.0;
            for (s, x) in sum.iter_mut().zip(r.iter()) {
                *s += x;
            }
        }
        if n == 0.0 {
            return;
        }
        let batch_mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for r in &rows {
            for ((q, x), m) in sq.iter_mut().zip(r.iter()).zip(&batch_mean) {
                *q += (x - m).powi(2);
            }
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = batch_mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + sq[i] + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    /// `(x - mean) / sqrt(var + eps)` clipped to [-5, 5].
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(x, (m, v))| ((x - m) / (v + EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }

    pub fn normalize_in_place(&self, x: &mut [f64]) {
        for (x, (m, v)) in x.iter_mut().zip(self.mean.iter().zip(&self.var)) {
            *x = ((*x - m) / (v + EPS).sqrt()).clamp(-CLIP, CLIP);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_batch_statistics() {
        let data: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i % 7) as f64 * 2.0]).collect();
        let mut rms = RunningMeanStd::new(2);
        for chunk in data.chunks(13) {
            rms.update(chunk.iter().map(Vec::as_slice));
        }
        let mean0 = 49.5;
        let var0 = data.iter().map(|r| (r[0] - mean0).powi(2)).sum::<f64>() / 100.0;
        assert!((rms.mean[0] - mean0).abs() < 1e-3);
        assert!((rms.var[0] - var0).abs() / var0 < 1e-3);
    }

    #[test]
    fn frozen_statistics_do_not_move() {
        let mut rms = RunningMeanStd::new(1);
        rms.update([[3.0].as_slice()]);
        rms.frozen = true;
        let snapshot = rms.clone();
        rms.update([[100.0].as_slice()]);
        assert_eq!(rms, snapshot);
    }

    #[test]
    fn output_is_clipped() {
        let rms = RunningMeanStd::new(1);
        assert_eq!(rms.normalize(&[1e6]), vec![5.0]);
        assert_eq!(rms.normalize(&[-1e6]), vec![-5.0]);
    }
}
