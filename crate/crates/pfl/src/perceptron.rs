//! A small two-layer perceptron for regression.
//!
//! Exercises the training library beyond the linear reference objective.
//! Gradients are hand-derived backprop, verified against central finite
//! differences in the test suite. Not used by the acceptance baseline.

use rand::Rng;

use crate::model::LocalDataset;

#[derive(Debug, Clone)]
pub struct TwoLayerPerceptron {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Row-major hidden x input.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl TwoLayerPerceptron {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let scale = (2.0 / (input_dim + hidden_dim) as f64).sqrt();
        TwoLayerPerceptron {
            input_dim,
            hidden_dim,
            w1: (0..hidden_dim * input_dim).map(|_| (rng.random::<f64>() - 0.5) * scale).collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..hidden_dim).map(|_| (rng.random::<f64>() - 0.5) * scale).collect(),
            b2: 0.0,
        }
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim)
            .map(|j| {
                let mut z = self.b1[j];
                for i in 0..self.input_dim {
                    z += self.w1[j * self.input_dim + i] * x[i];
                }
                z.tanh()
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let h = self.hidden(x);
        self.w2.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>() + self.b2
    }

    /// Mean squared-error loss, `(1/2n) * sum (pred - y)^2`.
    pub fn loss(&self, data: &LocalDataset) -> f64 {
        let mut total = 0.0;
        for (x, y) in data.features.iter().zip(&data.targets) {
            let e = self.predict(x) - y;
            total += 0.5 * e * e;
        }
        total / data.targets.len().max(1) as f64
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = self.w1.clone();
        flat.extend(&self.b1);
        flat.extend(&self.w2);
        flat.push(self.b2);
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let (w1, rest) = flat.split_at(self.hidden_dim * self.input_dim);
        let (b1, rest) = rest.split_at(self.hidden_dim);
        let (w2, b2) = rest.split_at(self.hidden_dim);
        self.w1 = w1.to_vec();
        self.b1 = b1.to_vec();
        self.w2 = w2.to_vec();
        self.b2 = b2[0];
    }

    /// Backprop gradient of the loss, flattened in `params()` order.
    pub fn gradient(&self, data: &LocalDataset) -> Vec<f64> {
        let mut gw1 = vec![0.0; self.w1.len()];
        let mut gb1 = vec![0.0; self.b1.len()];
        let mut gw2 = vec![0.0; self.w2.len()];
        let mut gb2 = 0.0;
        for (x, y) in data.features.iter().zip(&data.targets) {
            let h = self.hidden(x);
            let e = self.w2.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>() + self.b2 - y;
            gb2 += e;
            for j in 0..self.hidden_dim {
                gw2[j] += e * h[j];
                let dh = e * self.w2[j] * (1.0 - h[j] * h[j]);
                gb1[j] += dh;
                for i in 0..self.input_dim {
                    gw1[j * self.input_dim + i] += dh * x[i];
                }
            }
        }
        let n = data.targets.len().max(1) as f64;
        let mut flat = gw1;
        flat.extend(gb1);
        flat.extend(gw2);
        flat.push(gb2);
        for g in &mut flat {
            *g /= n;
        }
        flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dataset(rng: &mut ChaCha12Rng, n: usize, dim: usize) -> LocalDataset {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            targets.push(x.iter().sum::<f64>().sin());
            features.push(x);
        }
        LocalDataset { features, targets }
    }

    /// Backprop vs central finite differences at h = 1e-5: relative error
    /// below 1e-4 on every parameter.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let mut mlp = TwoLayerPerceptron::new(3, 4, &mut rng);
        let data = dataset(&mut rng, 16, 3);
        let analytic = mlp.gradient(&data);
        let params = mlp.params();
        let h = 1e-5;
        for index in 0..params.len() {
            let mut plus = params.clone();
            plus[index] += h;
            let mut minus = params.clone();
            minus[index] -= h;
            mlp.set_params(&plus);
            let loss_plus = mlp.loss(&data);
            mlp.set_params(&minus);
            let loss_minus = mlp.loss(&data);
            mlp.set_params(&params);
            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let denom = analytic[index].abs().max(numeric.abs()).max(1e-8);
            let relative = (analytic[index] - numeric).abs() / denom;
            assert!(
                relative < 1e-4,
                "param {index}: analytic {} vs numeric {numeric}",
                analytic[index]
            );
        }
    }

    #[test]
    fn gradient_descent_reduces_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let mut mlp = TwoLayerPerceptron::new(2, 8, &mut rng);
        let data = dataset(&mut rng, 64, 2);
        let before = mlp.loss(&data);
        for _ in 0..200 {
            let grad = mlp.gradient(&data);
            let mut params = mlp.params();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= 0.5 * g;
            }
            mlp.set_params(&params);
        }
        let after = mlp.loss(&data);
        assert!(after < before * 0.5, "before {before}, after {after}");
    }
}
