//! Synthetic multi-domain datasets and leave-one-domain-out splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
pub struct Domain {
    pub domain_id: usize,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_batch(&self) -> Result<Batch> {
        Batch::new(
            self.inputs.clone(),
            self.labels.clone(),
            vec![self.domain_id; self.labels.len()],
        )
    }

    /// Sub-domain restricted to the given sample indices.
    pub fn subset(&self, indices: &[usize]) -> Domain {
        Domain {
            domain_id: self.domain_id,
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domains: Vec<Domain>,
    pub metadata: DatasetMetadata,
}

impl DomainDataset {
    pub fn input_dim(&self) -> usize {
        self.domains[0].inputs[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.domains
            .iter()
            .flat_map(|d| d.labels.iter())
            .max()
            .map(|m| m + 1)
            .unwrap_or(0)
            .max(2)
    }

    pub fn domain(&self, domain_id: usize) -> Result<&Domain> {
        self.domains
            .iter()
            .find(|d| d.domain_id == domain_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no domain with id {domain_id}")))
    }
}

/// Two interleaved half-circles, rotated per domain.
pub fn gen_rotated_moons(
    n_per_domain: usize,
    angles_degrees: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<DomainDataset> {
    if angles_degrees.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 domain angles".into()));
    }
    if n_per_domain < 4 {
        return Err(Error::InvalidArgument("n_per_domain must be >= 4".into()));
    }
    let mut domains = Vec::with_capacity(angles_degrees.len());
    for (domain_id, &angle_deg) in angles_degrees.iter().enumerate() {
        // one stream per domain so adding domains never reshuffles others
        let mut rng = SeededRng::stream(seed, domain_id as u64);
        let angle = angle_deg.to_radians();
        let (cos_a, sin_a) = (angle.cos(), angle.sin());
        let half = n_per_domain / 2;
        let mut inputs = Vec::with_capacity(2 * half);
        let mut labels = Vec::with_capacity(2 * half);
        for class in 0..2usize {
            for _ in 0..half {
                let t = rng.uniform() * std::f64::consts::PI;
                // standard two-moons layout before rotation
                let (mut x, mut y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                x += noise_sigma * rng.standard_normal();
                y += noise_sigma * rng.standard_normal();
                inputs.push(vec![cos_a * x - sin_a * y, sin_a * x + cos_a * y]);
                labels.push(class);
            }
        }
        domains.push(Domain {
            domain_id,
            inputs,
            labels,
        });
    }
    Ok(DomainDataset {
        domains,
        metadata: DatasetMetadata {
            generator: "rotated_moons".into(),
            params: serde_json::json!({
                "n_per_domain": n_per_domain,
                "angles_degrees": angles_degrees,
                "noise_sigma": noise_sigma,
            }),
            seed,
        },
    })
}

/// Label-dependent Gaussian signal dimensions plus one spurious dimension
/// whose sign agrees with the label with probability (1+corr)/2 per domain.
pub fn gen_spurious_gaussians(
    n_per_domain: usize,
    domain_correlations: &[f64],
    signal_dim: usize,
    seed: u64,
) -> Result<DomainDataset> {
    if domain_correlations.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 domains".into()));
    }
    if signal_dim == 0 || n_per_domain < 4 {
        return Err(Error::InvalidArgument(
            "signal_dim must be >= 1 and n_per_domain >= 4".into(),
        ));
    }
    if domain_correlations.iter().any(|c| !(-1.0..=1.0).contains(c)) {
        return Err(Error::InvalidArgument("correlations must lie in [-1,1]".into()));
    }
    let mut domains = Vec::with_capacity(domain_correlations.len());
    for (domain_id, &corr) in domain_correlations.iter().enumerate() {
        let mut rng = SeededRng::stream(seed, domain_id as u64);
        let agree_prob = (1.0 + corr) / 2.0;
        let half = n_per_domain / 2;
        let mut inputs = Vec::with_capacity(2 * half);
        let mut labels = Vec::with_capacity(2 * half);
        for class in 0..2usize {
            let sign = if class == 0 { -1.0 } else { 1.0 };
            for _ in 0..half {
                let mut row: Vec<f64> = (0..signal_dim)
                    .map(|_| sign * 1.0 + rng.standard_normal())
                    .collect();
                let agree = rng.uniform() < agree_prob;
                let spurious_sign = if agree { sign } else { -sign };
                row.push(spurious_sign * (1.0 + 0.1 * rng.standard_normal().abs()));
                inputs.push(row);
                labels.push(class);
            }
        }
        domains.push(Domain {
            domain_id,
            inputs,
            labels,
        });
    }
    Ok(DomainDataset {
        domains,
        metadata: DatasetMetadata {
            generator: "spurious_gaussians".into(),
            params: serde_json::json!({
                "n_per_domain": n_per_domain,
                "domain_correlations": domain_correlations,
                "signal_dim": signal_dim,
            }),
            seed,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub target_domain: usize,
    /// Train fraction of each source domain; the rest is validation unless
    /// an in-domain test fraction is set.
    pub train_frac: f64,
    pub val_frac: f64,
    /// Optional held-in test fraction (train/val/in-test mode).
    pub in_test_frac: f64,
    pub split_seed: u64,
}

impl SplitPlan {
    pub fn new(target_domain: usize, split_seed: u64) -> Self {
        Self {
            target_domain,
            train_frac: 0.8,
            val_frac: 0.2,
            in_test_frac: 0.0,
            split_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.train_frac + self.val_frac + self.in_test_frac;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        if self.train_frac <= 0.0 || self.val_frac <= 0.0 || self.in_test_frac < 0.0 {
            return Err(Error::InvalidArgument("invalid split fractions".into()));
        }
        Ok(())
    }
}

/// Per-source-domain disjoint index splits plus the untouched target domain.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Vec<Domain>,
    pub val: Vec<Domain>,
    pub in_test: Vec<Domain>,
    pub target: Domain,
}

pub fn split_leave_one_out(dataset: &DomainDataset, plan: &SplitPlan) -> Result<SplitDataset> {
    plan.validate()?;
    let target = dataset.domain(plan.target_domain)?.clone();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut in_test = Vec::new();
    for domain in &dataset.domains {
        if domain.domain_id == plan.target_domain {
            continue;
        }
        let n = domain.len();
        let mut rng = SeededRng::stream(plan.split_seed, domain.domain_id as u64);
        let perm = rng.permutation(n);
        let n_train = (plan.train_frac * n as f64).round() as usize;
        let n_val = if plan.in_test_frac > 0.0 {
            (plan.val_frac * n as f64).round() as usize
        } else {
            n - n_train
        };
        let train_idx = &perm[..n_train];
        let val_idx = &perm[n_train..n_train + n_val];
        train.push(domain.subset(train_idx));
        val.push(domain.subset(val_idx));
        if plan.in_test_frac > 0.0 {
            in_test.push(domain.subset(&perm[n_train + n_val..]));
        }
    }
    if train.is_empty() {
        return Err(Error::Empty("source domains".into()));
    }
    Ok(SplitDataset {
        train,
        val,
        in_test,
        target,
    })
}

/// Pool a list of (sub-)domains into a single batch.
pub fn pooled_batch(domains: &[Domain]) -> Result<Batch> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut domain_ids = Vec::new();
    for d in domains {
        inputs.extend(d.inputs.iter().cloned());
        labels.extend(d.labels.iter().cloned());
        domain_ids.extend(std::iter::repeat_n(d.domain_id, d.len()));
    }
    Batch::new(inputs, labels, domain_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_deterministic_per_seed() {
        let a = gen_rotated_moons(40, &[0.0, 30.0], 0.1, 7).unwrap();
        let b = gen_rotated_moons(40, &[0.0, 30.0], 0.1, 7).unwrap();
        assert_eq!(a.domains[0].inputs, b.domains[0].inputs);
        assert_eq!(a.domains[1].labels, b.domains[1].labels);
    }

    #[test]
    fn moons_full_rotation_equals_zero() {
        let a = gen_rotated_moons(40, &[0.0, 0.0], 0.1, 3).unwrap();
        let b = gen_rotated_moons(40, &[0.0, 360.0], 0.1, 3).unwrap();
        for (x, y) in a.domains[1].inputs.iter().zip(&b.domains[1].inputs) {
            assert!((x[0] - y[0]).abs() < 1e-12);
            assert!((x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn moons_class_balance() {
        let ds = gen_rotated_moons(100, &[0.0, 45.0, 90.0], 0.2, 1).unwrap();
        for d in &ds.domains {
            let c1 = d.labels.iter().filter(|&&l| l == 1).count();
            assert_eq!(c1, 50);
            assert_eq!(d.len(), 100);
        }
    }

    #[test]
    fn moons_rejects_bad_params() {
        assert!(gen_rotated_moons(2, &[0.0, 1.0], 0.1, 0).is_err());
        assert!(gen_rotated_moons(40, &[0.0], 0.1, 0).is_err());
    }

    #[test]
    fn spurious_full_correlation_always_agrees() {
        let ds = gen_spurious_gaussians(200, &[1.0, -0.9], 2, 5).unwrap();
        let d = &ds.domains[0];
        for (row, &label) in d.inputs.iter().zip(&d.labels) {
            let sign = if label == 0 { -1.0 } else { 1.0 };
            assert!(row[2] * sign > 0.0);
        }
    }

    #[test]
    fn spurious_zero_correlation_is_independent() {
        let n = 2000;
        let ds = gen_spurious_gaussians(n, &[0.0, 0.5], 2, 9).unwrap();
        let d = &ds.domains[0];
        let mut agree = 0i64;
        for (row, &label) in d.inputs.iter().zip(&d.labels) {
            let sign = if label == 0 { -1.0 } else { 1.0 };
            if row[2] * sign > 0.0 {
                agree += 1;
            }
        }
        let rate = agree as f64 / n as f64;
        assert!((rate - 0.5).abs() < 4.0 / (n as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn spurious_only_classifier_flips_across_domains() {
        // sign(spurious dim) as a classifier: domain with corr +0.9 gives
        // ~0.95 accuracy, corr -0.9 gives ~0.05
        let ds = gen_spurious_gaussians(4000, &[0.9, -0.9], 1, 13).unwrap();
        for (idx, expect) in [(0usize, 0.95), (1usize, 0.05)] {
            let d = &ds.domains[idx];
            let correct = d
                .inputs
                .iter()
                .zip(&d.labels)
                .filter(|&(row, &label)| {
                    let pred = if row[1] > 0.0 { 1usize } else { 0usize };
                    pred == label
                })
                .count();
            let acc = correct as f64 / d.len() as f64;
            assert!((acc - expect).abs() < 0.03, "domain {idx}: acc {acc}");
        }
    }

    #[test]
    fn split_disjoint_and_target_untouched() {
        let ds = gen_rotated_moons(100, &[0.0, 30.0, 60.0, 90.0], 0.2, 2).unwrap();
        let plan = SplitPlan::new(2, 11);
        let split = split_leave_one_out(&ds, &plan).unwrap();
        assert_eq!(split.target.domain_id, 2);
        assert_eq!(split.target.len(), 100);
        assert_eq!(split.train.len(), 3);
        for (tr, va) in split.train.iter().zip(&split.val) {
            assert_eq!(tr.len() + va.len(), 100);
            assert_ne!(tr.domain_id, 2);
        }
    }

    #[test]
    fn three_way_split_partitions() {
        let ds = gen_rotated_moons(100, &[0.0, 45.0], 0.2, 4).unwrap();
        let plan = SplitPlan {
            target_domain: 1,
            train_frac: 0.6,
            val_frac: 0.2,
            in_test_frac: 0.2,
            split_seed: 1,
        };
        let split = split_leave_one_out(&ds, &plan).unwrap();
        assert_eq!(split.train[0].len(), 60);
        assert_eq!(split.val[0].len(), 20);
        assert_eq!(split.in_test[0].len(), 20);
    }

    #[test]
    fn split_fractions_validated() {
        let plan = SplitPlan {
            target_domain: 0,
            train_frac: 0.5,
            val_frac: 0.2,
            in_test_frac: 0.0,
            split_seed: 0,
        };
        assert!(plan.validate().is_err());
    }
}
