use ndarray::{ArrayD, Zip};

use super::transformer::MlmWeights;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay. Biases and LayerNorm parameters are
/// not decayed.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<ArrayD<f64>>,
    second: Vec<ArrayD<f64>>,
    decays: Vec<bool>,
}

impl AdamW {
    pub fn new(weights: &MlmWeights, learning_rate: f64, weight_decay: f64) -> Self {
        let tensors = weights.tensors();
        Self {
            learning_rate,
            weight_decay,
            step: 0,
            first: tensors.iter().map(|(_, t)| ArrayD::zeros(t.raw_dim())).collect(),
            second: tensors.iter().map(|(_, t)| ArrayD::zeros(t.raw_dim())).collect(),
            decays: tensors
                .iter()
                .map(|(n, _)| !(n.ends_with("bias") || n.contains("LayerNorm")))
                .collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, weights: &mut MlmWeights, grad: &MlmWeights) {
        self.step += 1;
        let lr = self.learning_rate;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let decay = 1.0 - lr * self.weight_decay;
        let grads = grad.tensors();
        for (i, (_, mut param)) in weights.tensors_mut().into_iter().enumerate() {
            let g = &grads[i].1;
            let scale = if self.decays[i] { decay } else { 1.0 };
            Zip::from(&mut param)
                .and(g)
                .and(&mut self.first[i])
                .and(&mut self.second[i])
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p = *p * scale - lr * (*m / bc1) / ((*v / bc2).sqrt() + EPS);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::MlmConfig;

    #[test]
    fn first_step_moves_each_parameter_by_about_lr() {
        let cfg = MlmConfig::tiny(10);
        let mut w = MlmWeights::init(&cfg, 0);
        let before = w.clone();
        let mut grad = w.zeros_like();
        for (_, mut t) in grad.tensors_mut() {
            t.fill(0.5);
        }
        let mut opt = AdamW::new(&w, 1e-3, 0.0);
        opt.step(&mut w, &grad);
        let delta = &before.decoder_bias - &w.decoder_bias;
        assert!(delta.iter().all(|d| (d - 1e-3).abs() < 1e-9));
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn weight_decay_skips_norms_and_biases() {
        let cfg = MlmConfig::tiny(10);
        let mut w = MlmWeights::init(&cfg, 0);
        let before = w.clone();
        let grad = w.zeros_like();
        let mut opt = AdamW::new(&w, 0.1, 0.5);
        opt.step(&mut w, &grad);
        assert_eq!(w.embed_norm.gamma, before.embed_norm.gamma);
        assert_eq!(w.decoder_bias, before.decoder_bias);
        let expected = &before.head_transform.weight * 0.95;
        assert!(w
            .head_transform
            .weight
            .iter()
            .zip(expected.iter())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
