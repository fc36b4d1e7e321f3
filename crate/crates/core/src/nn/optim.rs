use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Mlp, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
    Rmsprop,
}

/// First/second moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_w: Vec<Array2<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let z = net.zero_grads();
        AdamState {
            m_w: z.weights.clone(),
            m_b: z.biases.clone(),
            v_w: z.weights,
            v_b: z.biases,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn apply(&mut self, net: &mut Mlp, grads: &ParamGrads, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let upd = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for j in 0..net.weights.len() {
            Zip::from(&mut net.weights[j])
                .and(&grads.weights[j])
                .and(&mut self.m_w[j])
                .and(&mut self.v_w[j])
                .for_each(upd);
            Zip::from(&mut net.biases[j])
                .and(&grads.biases[j])
                .and(&mut self.m_b[j])
                .and(&mut self.v_b[j])
                .for_each(upd);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    sq_w: Vec<Array2<f64>>,
    sq_b: Vec<Array1<f64>>,
    pub decay: f64,
    pub eps: f64,
}

impl RmsPropState {
    pub fn new(net: &Mlp) -> Self {
        let z = net.zero_grads();
        RmsPropState {
            sq_w: z.weights,
            sq_b: z.biases,
            decay: 0.99,
            eps: 1e-8,
        }
    }

    fn apply(&mut self, net: &mut Mlp, grads: &ParamGrads, lr: f64) {
        let (rho, eps) = (self.decay, self.eps);
        let upd = |p: &mut f64, g: &f64, s: &mut f64| {
            *s = rho * *s + (1.0 - rho) * g * g;
            *p -= lr * g / (s.sqrt() + eps);
        };
        for j in 0..net.weights.len() {
            Zip::from(&mut net.weights[j])
                .and(&grads.weights[j])
                .and(&mut self.sq_w[j])
                .for_each(upd);
            Zip::from(&mut net.biases[j])
                .and(&grads.biases[j])
                .and(&mut self.sq_b[j])
                .for_each(upd);
        }
    }
}

/// Gradient-descent optimizer. `step` always *minimizes*; callers that
/// ascend negate their gradients first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
    RmsProp(RmsPropState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &Mlp) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(net)),
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Rmsprop => Optimizer::RmsProp(RmsPropState::new(net)),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &ParamGrads, lr: f64) -> Result<()> {
        if !grads.congruent_with(net) {
            return Err(Error::config("gradient shapes do not match the network"));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be >= 0, got {lr}")));
        }
        if !grads.is_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        match self {
            Optimizer::Adam(s) => s.apply(net, grads, lr),
            Optimizer::RmsProp(s) => s.apply(net, grads, lr),
            Optimizer::Sgd => {
                for (w, g) in net.weights.iter_mut().zip(&grads.weights) {
                    w.scaled_add(-lr, g);
                }
                for (b, g) in net.biases.iter_mut().zip(&grads.biases) {
                    b.scaled_add(-lr, g);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use ndarray::array;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_parts(vec![array![[w]]], vec![array![0.0]], 0.1, OutputActivation::Linear).unwrap()
    }

    fn scalar_grad(g: f64) -> ParamGrads {
        ParamGrads {
            weights: vec![array![[g]]],
            biases: vec![array![0.0]],
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut net = scalar_net(0.7);
        let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
        opt.step(&mut net, &scalar_grad(3.0), 0.0).unwrap();
        assert_eq!(net.to_flat(), vec![0.7, 0.0]);
    }

    #[test]
    fn first_adam_step_has_magnitude_lr() {
        // m_hat = g, v_hat = g^2 after one bias-corrected step
        for g in [1e-3, 0.5, -4.0] {
            let mut net = scalar_net(1.0);
            let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
            opt.step(&mut net, &scalar_grad(g), 1e-2).unwrap();
            let expected = 1.0 - 1e-2 * g / (g.abs() + 1e-8);
            assert!((net.weights()[0][[0, 0]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd, OptimizerKind::Rmsprop] {
            let mut net = scalar_net(0.0);
            let mut opt = Optimizer::new(kind, &net);
            let mut prev = 0.0;
            for _ in 0..500 {
                opt.step(&mut net, &scalar_grad(0.3), 1e-3).unwrap();
                let w = net.weights()[0][[0, 0]];
                assert!(w < prev, "{kind:?}");
                prev = w;
            }
        }
    }

    #[test]
    fn non_finite_gradient_is_a_training_fault() {
        let mut net = scalar_net(0.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
        let err = opt.step(&mut net, &scalar_grad(f64::NAN), 1e-3).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }
}
