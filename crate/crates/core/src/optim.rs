//! First-order optimizers and weight-tracking baselines: SGD, Adam with
//! decoupled weight decay, SAM, and an exponential moving average of weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, Batch, MlpSpec};
use crate::param::ParamVector;

pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    if lr <= 0.0 {
        return Err(Error::InvalidArgument(format!("lr must be > 0, got {lr}")));
    }
    ParamVector::axpy(-lr, grad, theta)
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    /// Standard Adam with bias correction. Decoupled weight decay is applied
    /// as theta <- theta - lr*wd*theta before the moment update.
    pub fn step(&mut self, theta: &ParamVector, grad: &ParamVector) -> Result<ParamVector> {
        if theta.dim() != self.m.dim() {
            return Err(Error::DimMismatch {
                left: theta.dim(),
                right: self.m.dim(),
            });
        }
        if theta.dim() != grad.dim() {
            return Err(Error::DimMismatch {
                left: theta.dim(),
                right: grad.dim(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut out = Vec::with_capacity(theta.dim());
        for i in 0..theta.dim() {
            let g = grad.values()[i];
            let m = &mut self.m.values_mut()[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.v.values_mut()[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let mut x = theta.values()[i];
            if self.weight_decay != 0.0 {
                x -= self.lr * self.weight_decay * x;
            }
            out.push(x - self.lr * m_hat / (v_hat.sqrt() + self.eps));
        }
        Ok(ParamVector::new(out))
    }
}

/// Base optimizer a SAM wrapper can drive.
#[derive(Debug, Clone)]
pub enum BaseOptimizer {
    Sgd { lr: f64 },
    Adam(AdamState),
}

impl BaseOptimizer {
    pub fn step(&mut self, theta: &ParamVector, grad: &ParamVector) -> Result<ParamVector> {
        match self {
            BaseOptimizer::Sgd { lr } => sgd_step(theta, grad, *lr),
            BaseOptimizer::Adam(state) => state.step(theta, grad),
        }
    }
}

/// One SAM update: perturb theta by rho along the normalized gradient, take
/// the gradient there, and apply the base step at the original theta.
/// A zero gradient falls back to a plain step.
pub fn sam_step(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    rho: f64,
    inner: &mut BaseOptimizer,
) -> Result<ParamVector> {
    if rho <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rho must be > 0, got {rho}"
        )));
    }
    let (_, g1) = backward(spec, theta, batch)?;
    let norm = g1.l2_norm();
    if norm == 0.0 {
        return inner.step(theta, &g1);
    }
    let perturbed = ParamVector::axpy(rho / norm, &g1, theta)?;
    let (_, g2) = backward(spec, &perturbed, batch)?;
    inner.step(theta, &g2)
}

#[derive(Debug, Clone)]
pub struct EmaState {
    pub shadow: ParamVector,
    pub decay: f64,
}

impl EmaState {
    pub fn new(initial: ParamVector, decay: f64) -> Result<Self> {
        if !(0.0 < decay && decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "EMA decay must be in (0,1), got {decay}"
            )));
        }
        Ok(Self {
            shadow: initial,
            decay,
        })
    }

    /// shadow <- decay*shadow + (1-decay)*theta
    pub fn update(&mut self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.shadow.dim() {
            return Err(Error::DimMismatch {
                left: theta.dim(),
                right: self.shadow.dim(),
            });
        }
        for (s, x) in self.shadow.values_mut().iter_mut().zip(theta.values()) {
            *s = self.decay * *s + (1.0 - self.decay) * x;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant {
        base_lr: f64,
    },
    /// Linear sawtooth from base_lr at a cycle start down to min_lr at the
    /// last iteration of the cycle.
    Cyclic {
        base_lr: f64,
        min_lr: f64,
        cycle_length: usize,
    },
}

impl LrSchedule {
    pub fn lr_at(&self, t: usize) -> f64 {
        match self {
            LrSchedule::Constant { base_lr } => *base_lr,
            LrSchedule::Cyclic {
                base_lr,
                min_lr,
                cycle_length,
            } => {
                if *cycle_length <= 1 {
                    return *base_lr;
                }
                let phase = (t % cycle_length) as f64 / (*cycle_length as f64 - 1.0);
                base_lr - (base_lr - min_lr) * phase
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation};
    use crate::rng::SeededRng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn sgd_definition() {
        let out = sgd_step(&pv(&[1.0, 1.0]), &pv(&[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(out.values(), &[0.5, 1.0]);
    }

    #[test]
    fn sgd_zero_grad_fixed_point() {
        let theta = pv(&[2.0, -3.0]);
        let out = sgd_step(&theta, &pv(&[0.0, 0.0]), 0.1).unwrap();
        assert_eq!(out, theta);
    }

    #[test]
    fn sgd_quadratic_contraction() {
        // loss ||theta||^2/2, grad = theta; after k steps theta = (1-lr)^k
        let mut theta = pv(&[1.0]);
        for _ in 0..10 {
            let grad = theta.clone();
            theta = sgd_step(&theta, &grad, 0.1).unwrap();
        }
        assert!((theta.values()[0] - 0.9f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_matches_reference_trace() {
        // independent trace of the standard update on a 3-dim toy
        let lr = 0.01;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let theta0 = [1.0, -2.0, 0.5];
        let g = [0.3, -0.1, 0.0];
        let mut expect = [0.0; 3];
        for i in 0..3 {
            let m = (1.0 - b1) * g[i];
            let v = (1.0 - b2) * g[i] * g[i];
            let m_hat = m / (1.0 - b1);
            let v_hat: f64 = v / (1.0 - b2);
            expect[i] = theta0[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        let mut state = AdamState::new(3, lr);
        let out = state.step(&pv(&theta0), &pv(&g)).unwrap();
        for (a, e) in out.values().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_multi_step_matches_reference_trace() {
        // straight-line re-implementation of three updates
        let lr = 0.05;
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let grads = [[0.3, -0.2], [0.1, 0.4], [-0.5, 0.05]];
        let mut theta = [0.7, -0.3];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        for (t, g) in grads.iter().enumerate() {
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - b1.powi(t as i32 + 1));
                let v_hat: f64 = v[i] / (1.0 - b2.powi(t as i32 + 1));
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        let mut state = AdamState::new(2, lr);
        let mut actual = pv(&[0.7, -0.3]);
        for g in &grads {
            actual = state.step(&actual, &pv(g)).unwrap();
        }
        for (a, e) in actual.values().iter().zip(&theta) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_zero_grad_fixed_point() {
        let mut state = AdamState::new(2, 0.1);
        let theta = pv(&[1.0, 2.0]);
        let mut cur = theta.clone();
        for _ in 0..5 {
            cur = state.step(&cur, &pv(&[0.0, 0.0])).unwrap();
        }
        assert_eq!(cur, theta);
    }

    #[test]
    fn adam_deterministic() {
        let g = pv(&[0.1, -0.9]);
        let mut s1 = AdamState::new(2, 0.01);
        let mut s2 = AdamState::new(2, 0.01);
        let mut a = pv(&[1.0, 1.0]);
        let mut b = pv(&[1.0, 1.0]);
        for _ in 0..20 {
            a = s1.step(&a, &g).unwrap();
            b = s2.step(&b, &g).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn sam_perturbation_norm_is_rho() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = SeededRng::new(8);
        let theta = init_params(&spec, &mut rng);
        let batch = Batch::new(
            vec![vec![0.4, -1.0], vec![1.2, 0.3]],
            vec![0, 1],
            vec![0, 0],
        )
        .unwrap();
        let (_, g1) = backward(&spec, &theta, &batch).unwrap();
        let norm = g1.l2_norm();
        assert!(norm > 0.0);
        let rho = 0.05;
        let perturbed = ParamVector::axpy(rho / norm, &g1, &theta).unwrap();
        let eps = perturbed.sub(&theta).unwrap();
        assert!((eps.l2_norm() - rho).abs() < 1e-12);
    }

    #[test]
    fn sam_small_rho_approaches_plain_step() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = SeededRng::new(15);
        let theta = init_params(&spec, &mut rng);
        let batch = Batch::new(vec![vec![0.5, 0.5], vec![-0.5, 1.0]], vec![0, 1], vec![0, 0])
            .unwrap();
        let rho = 1e-6;
        let sam = sam_step(&spec, &theta, &batch, rho, &mut BaseOptimizer::Sgd { lr: 0.1 })
            .unwrap();
        let (_, g) = backward(&spec, &theta, &batch).unwrap();
        let plain = sgd_step(&theta, &g, 0.1).unwrap();
        let diff = sam.sub(&plain).unwrap().l2_norm();
        assert!(diff < 10.0 * rho, "diff {diff}");
    }

    #[test]
    fn ema_basic_and_recurrence() {
        let mut ema = EmaState::new(pv(&[0.0]), 0.99).unwrap();
        ema.update(&pv(&[1.0])).unwrap();
        assert!((ema.shadow.values()[0] - 0.01).abs() < 1e-15);

        // alternating +-1, checked against the direct recurrence
        let mut ema = EmaState::new(pv(&[0.0]), 0.9).unwrap();
        let mut direct = 0.0;
        for k in 0..50 {
            let x = if k % 2 == 0 { 1.0 } else { -1.0 };
            ema.update(&pv(&[x])).unwrap();
            direct = 0.9 * direct + 0.1 * x;
        }
        assert!((ema.shadow.values()[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn ema_converges_to_constant_stream() {
        let mut ema = EmaState::new(pv(&[0.0]), 0.9).unwrap();
        for _ in 0..500 {
            ema.update(&pv(&[2.0])).unwrap();
        }
        assert!((ema.shadow.values()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lr_schedule_shapes() {
        let c = LrSchedule::Constant { base_lr: 5e-5 };
        assert_eq!(c.lr_at(0), 5e-5);
        assert_eq!(c.lr_at(12345), 5e-5);

        let cy = LrSchedule::Cyclic {
            base_lr: 1e-3,
            min_lr: 1e-5,
            cycle_length: 100,
        };
        assert_eq!(cy.lr_at(0), 1e-3);
        assert!((cy.lr_at(99) - 1e-5).abs() < 1e-18);
        for t in [0, 7, 42, 99] {
            assert_eq!(cy.lr_at(t), cy.lr_at(t + 100));
        }
        assert!(cy.lr_at(50) > 0.0);
    }
}
