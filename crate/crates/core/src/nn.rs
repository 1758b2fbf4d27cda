//! Minimal multilayer perceptron with hand-written backpropagation.
//! Parameters live in a single flat `ParamVector`, packed layer-major:
//! for each layer, weights row-major by output unit, then the bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output layers".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("zero-size layer".into()));
        }
        if *layer_sizes.last().unwrap() < 2 {
            return Err(Error::InvalidArgument(
                "output layer must cover at least 2 classes".into(),
            ));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn check_params(&self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.param_count() {
            return Err(Error::DimMismatch {
                left: theta.dim(),
                right: self.param_count(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub domain_ids: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, domain_ids: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() || inputs.len() != domain_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "row counts disagree: {} inputs, {} labels, {} domain ids",
                inputs.len(),
                labels.len(),
                domain_ids.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        Ok(Self {
            inputs,
            labels,
            domain_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-batch evaluation summary. `cross_entropy` is the training loss;
/// `zero_one` is the bounded [0,1] loss the divergence diagnostics use.
#[derive(Debug, Clone, Copy)]
pub struct LossStats {
    pub cross_entropy: f64,
    pub accuracy: f64,
    pub zero_one: f64,
}

/// Fan-in scaled uniform weights, zero biases.
pub fn init_params(spec: &MlpSpec, rng: &mut SeededRng) -> ParamVector {
    let mut values = Vec::with_capacity(spec.param_count());
    for w in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.uniform_range(-bound, bound));
        }
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector::new(values)
}

fn activate(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
    }
}

/// Derivative expressed through the activation output.
fn activate_grad(act: Activation, y: f64) -> f64 {
    match act {
        Activation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y * y,
    }
}

/// Softmax with max subtraction, in place.
fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Prediction rule: argmax with ties broken toward the lowest class index.
fn predict(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Forward pass over one sample; returns activations per layer
/// (layer 0 = input, last = softmax probabilities).
fn forward_sample(spec: &MlpSpec, theta: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(spec.layer_sizes.len());
    acts.push(input.to_vec());
    let mut offset = 0;
    let n_layers = spec.layer_sizes.len() - 1;
    for (l, w) in spec.layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &theta[offset..offset + fan_in * fan_out];
        let bias = &theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let prev = acts.last().unwrap();
        let mut out = Vec::with_capacity(fan_out);
        for j in 0..fan_out {
            let row = &weights[j * fan_in..(j + 1) * fan_in];
            let mut z = bias[j];
            for (wk, xk) in row.iter().zip(prev.iter()) {
                z += wk * xk;
            }
            out.push(z);
        }
        if l + 1 == n_layers {
            softmax(&mut out);
        } else {
            for v in out.iter_mut() {
                *v = activate(spec.activation, *v);
            }
        }
        acts.push(out);
    }
    acts
}

/// Mean cross-entropy, accuracy, and mean 0-1 error over the batch.
pub fn forward_loss(spec: &MlpSpec, theta: &ParamVector, batch: &Batch) -> Result<LossStats> {
    spec.check_params(theta)?;
    let mut ce = 0.0;
    let mut correct = 0usize;
    for (input, &label) in batch.inputs.iter().zip(&batch.labels) {
        let acts = forward_sample(spec, theta.values(), input);
        let probs = acts.last().unwrap();
        ce += -(probs[label].max(1e-300)).ln();
        if predict(probs) == label {
            correct += 1;
        }
    }
    let n = batch.len() as f64;
    let accuracy = correct as f64 / n;
    Ok(LossStats {
        cross_entropy: ce / n,
        accuracy,
        zero_one: 1.0 - accuracy,
    })
}

/// Exact gradient of mean cross-entropy with respect to theta.
pub fn backward(spec: &MlpSpec, theta: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
    spec.check_params(theta)?;
    let params = theta.values();
    let mut grad = vec![0.0; theta.dim()];
    let mut ce = 0.0;
    let n_layers = spec.layer_sizes.len() - 1;

    // layer offsets into the flat vector
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in spec.layer_sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }

    for (input, &label) in batch.inputs.iter().zip(&batch.labels) {
        let acts = forward_sample(spec, params, input);
        let probs = acts.last().unwrap();
        ce += -(probs[label].max(1e-300)).ln();

        // softmax-cross-entropy residual at the output
        let mut delta: Vec<f64> = probs.clone();
        delta[label] -= 1.0;

        for l in (0..n_layers).rev() {
            let fan_in = spec.layer_sizes[l];
            let fan_out = spec.layer_sizes[l + 1];
            let w_off = offsets[l];
            let b_off = w_off + fan_in * fan_out;
            let prev = &acts[l];

            for j in 0..fan_out {
                let d = delta[j];
                let g_row = &mut grad[w_off + j * fan_in..w_off + (j + 1) * fan_in];
                for (gk, xk) in g_row.iter_mut().zip(prev.iter()) {
                    *gk += d * xk;
                }
                grad[b_off + j] += d;
            }

            if l > 0 {
                let weights = &params[w_off..b_off];
                let mut next_delta = vec![0.0; fan_in];
                for j in 0..fan_out {
                    let d = delta[j];
                    let row = &weights[j * fan_in..(j + 1) * fan_in];
                    for (nd, wk) in next_delta.iter_mut().zip(row.iter()) {
                        *nd += d * wk;
                    }
                }
                for (nd, &y) in next_delta.iter_mut().zip(acts[l].iter()) {
                    *nd *= activate_grad(spec.activation, y);
                }
                delta = next_delta;
            }
        }
    }

    let inv_n = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    Ok((ce * inv_n, ParamVector::new(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(spec: &MlpSpec, n: usize, rng: &mut SeededRng) -> Batch {
        let inputs = (0..n)
            .map(|_| (0..spec.input_dim()).map(|_| rng.standard_normal()).collect())
            .collect();
        let labels = (0..n).map(|_| rng.gen_index(spec.num_classes())).collect();
        Batch::new(inputs, labels, vec![0; n]).unwrap()
    }

    #[test]
    fn param_count_2_3_2() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Relu).unwrap();
        assert_eq!(spec.param_count(), 2 * 3 + 3 + 3 * 2 + 2);
    }

    #[test]
    fn init_deterministic_and_biases_zero() {
        let spec = MlpSpec::new(vec![4, 5, 3], Activation::Tanh).unwrap();
        let a = init_params(&spec, &mut SeededRng::new(9));
        let b = init_params(&spec, &mut SeededRng::new(9));
        assert_eq!(a, b);
        // bias slices: after each weight block
        let v = a.values();
        assert!(v[4 * 5..4 * 5 + 5].iter().all(|&x| x == 0.0));
        assert!(v[4 * 5 + 5 + 5 * 3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_logits_give_ln2() {
        // zero weights and biases -> uniform softmax over 2 classes
        let spec = MlpSpec::new(vec![3, 2], Activation::Relu).unwrap();
        let theta = ParamVector::zeros(spec.param_count());
        let mut rng = SeededRng::new(1);
        let batch = random_batch(&spec, 16, &mut rng);
        let stats = forward_loss(&spec, &theta, &batch).unwrap();
        assert!((stats.cross_entropy - std::f64::consts::LN_2).abs() < 1e-12);
        // tie-break: class 0 always predicted
        let frac0 = batch.labels.iter().filter(|&&l| l == 0).count() as f64 / 16.0;
        assert!((stats.accuracy - frac0).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_predictions_drive_loss_to_zero() {
        // identity-ish network scaled up: one input dim per class
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        theta.values_mut()[0] = 50.0; // w[0][0]
        theta.values_mut()[3] = 50.0; // w[1][1]
        let batch = Batch::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 1],
            vec![0, 0],
        )
        .unwrap();
        let stats = forward_loss(&spec, &theta, &batch).unwrap();
        assert!(stats.cross_entropy < 1e-10);
        assert_eq!(stats.accuracy, 1.0);
        assert_eq!(stats.zero_one, 0.0);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        // independent straight-line forward pass for a fixed 2-layer tanh net
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = SeededRng::new(77);
        let theta = init_params(&spec, &mut rng);
        let batch = random_batch(&spec, 8, &mut rng);

        let v = theta.values();
        let mut ce = 0.0;
        for (x, &label) in batch.inputs.iter().zip(&batch.labels) {
            let mut h = [0.0f64; 3];
            for j in 0..3 {
                h[j] = (v[j * 2] * x[0] + v[j * 2 + 1] * x[1] + v[6 + j]).tanh();
            }
            let mut z = [0.0f64; 2];
            for j in 0..2 {
                z[j] = v[9 + j * 3] * h[0] + v[9 + j * 3 + 1] * h[1] + v[9 + j * 3 + 2] * h[2]
                    + v[15 + j];
            }
            let m = z[0].max(z[1]);
            let e0 = (z[0] - m).exp();
            let e1 = (z[1] - m).exp();
            let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
            ce += -p[label].ln();
        }
        ce /= batch.len() as f64;

        let stats = forward_loss(&spec, &theta, &batch).unwrap();
        assert!((stats.cross_entropy - ce).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(123);
        for trial in 0..10 {
            let spec = MlpSpec::new(vec![3, 4, 3], Activation::Tanh).unwrap();
            let theta = init_params(&spec, &mut rng);
            let batch = random_batch(&spec, 5, &mut rng);
            let (_, grad) = backward(&spec, &theta, &batch).unwrap();
            let h = 1e-5;
            for k in (0..theta.dim()).step_by(3) {
                let mut tp = theta.clone();
                tp.values_mut()[k] += h;
                let mut tm = theta.clone();
                tm.values_mut()[k] -= h;
                let fp = forward_loss(&spec, &tp, &batch).unwrap().cross_entropy;
                let fm = forward_loss(&spec, &tm, &batch).unwrap().cross_entropy;
                let fd = (fp - fm) / (2.0 * h);
                let g = grad.values()[k];
                let err = (g - fd).abs();
                assert!(
                    err < 1e-7 + 1e-5 * fd.abs(),
                    "trial {trial} coord {k}: grad {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn zero_weight_output_bias_gradient_is_softmax_residual() {
        // single-layer net, zero weights: probs uniform, so the bias gradient
        // is mean(p - onehot(label))
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let theta = ParamVector::zeros(spec.param_count());
        let batch = Batch::new(
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            vec![0, 1],
            vec![0, 0],
        )
        .unwrap();
        let (_, grad) = backward(&spec, &theta, &batch).unwrap();
        // bias entries are the last two coordinates; residual mean is
        // ((0.5-1)+(0.5-0))/2 = 0 per class
        assert!(grad.values()[4].abs() < 1e-15);
        assert!(grad.values()[5].abs() < 1e-15);
    }

    #[test]
    fn duplicated_rows_leave_gradient_unchanged() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Relu).unwrap();
        let mut rng = SeededRng::new(4);
        let theta = init_params(&spec, &mut rng);
        let batch = random_batch(&spec, 4, &mut rng);
        let mut doubled_inputs = batch.inputs.clone();
        doubled_inputs.extend(batch.inputs.clone());
        let mut doubled_labels = batch.labels.clone();
        doubled_labels.extend(batch.labels.clone());
        let doubled = Batch::new(doubled_inputs, doubled_labels, vec![0; 8]).unwrap();
        let (_, g1) = backward(&spec, &theta, &batch).unwrap();
        let (_, g2) = backward(&spec, &theta, &doubled).unwrap();
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let theta = ParamVector::zeros(3);
        let batch = Batch::new(vec![vec![0.0, 0.0]], vec![0], vec![0]).unwrap();
        assert!(forward_loss(&spec, &theta, &batch).is_err());
        assert!(backward(&spec, &theta, &batch).is_err());
    }
}
