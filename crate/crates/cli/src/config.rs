//! Strict TOML run configuration. Unknown keys are rejected so a typo in a
//! hyperparameter name fails loudly instead of silently using a default.

use serde::{Deserialize, Serialize};
use swad_core::averaging::{StrategyConfig, SwadConfig};
use swad_core::bench::{DomainDataset, MethodKind, MethodSpec, OptimizerKind, TrainerConfig};
use swad_core::averaging::VariantKind;
use swad_core::nn::Activation;
use swad_core::optim::LrSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub trainer: TrainerToml,
    #[serde(default)]
    pub strategy: StrategyToml,
    pub methods: Vec<MethodToml>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bound: BoundToml,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: String,
    pub n_per_domain: usize,
    pub seed: u64,
    #[serde(default)]
    pub angles_degrees: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub domain_correlations: Option<Vec<f64>>,
    #[serde(default)]
    pub signal_dim: Option<usize>,
}

impl DatasetConfig {
    pub fn build(&self) -> Result<DomainDataset, String> {
        match self.generator.as_str() {
            "rotated_moons" => {
                let angles = self
                    .angles_degrees
                    .as_ref()
                    .ok_or("rotated_moons requires angles_degrees")?;
                swad_core::bench::gen_rotated_moons(
                    self.n_per_domain,
                    angles,
                    self.noise_sigma.unwrap_or(0.35),
                    self.seed,
                )
                .map_err(|e| e.to_string())
            }
            "spurious_gaussians" => {
                let corrs = self
                    .domain_correlations
                    .as_ref()
                    .ok_or("spurious_gaussians requires domain_correlations")?;
                swad_core::bench::gen_spurious_gaussians(
                    self.n_per_domain,
                    corrs,
                    self.signal_dim.unwrap_or(2),
                    self.seed,
                )
                .map_err(|e| e.to_string())
            }
            other => Err(format!("unknown dataset generator: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    pub in_test_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.2,
            in_test_frac: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerToml {
    pub iterations: usize,
    pub batch_per_domain: usize,
    pub eval_freq: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: String,
    pub optimizer: String,
    pub weight_decay: f64,
    pub lr_schedule: LrToml,
}

impl Default for TrainerToml {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_per_domain: 32,
            eval_freq: 20,
            hidden_layers: vec![32, 32],
            activation: "relu".into(),
            optimizer: "adam".into(),
            weight_decay: 0.0,
            lr_schedule: LrToml::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrToml {
    pub kind: String,
    pub base_lr: f64,
    #[serde(default)]
    pub min_lr: Option<f64>,
    #[serde(default)]
    pub cycle_length: Option<usize>,
}

impl Default for LrToml {
    fn default() -> Self {
        Self {
            kind: "constant".into(),
            base_lr: 1e-2,
            min_lr: None,
            cycle_length: None,
        }
    }
}

impl TrainerToml {
    pub fn build(&self) -> Result<TrainerConfig, String> {
        let activation = match self.activation.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => return Err(format!("unknown activation: {other}")),
        };
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => return Err(format!("unknown optimizer: {other}")),
        };
        let lr_schedule = match self.lr_schedule.kind.as_str() {
            "constant" => LrSchedule::Constant {
                base_lr: self.lr_schedule.base_lr,
            },
            "cyclic" => LrSchedule::Cyclic {
                base_lr: self.lr_schedule.base_lr,
                min_lr: self
                    .lr_schedule
                    .min_lr
                    .ok_or("cyclic schedule requires min_lr")?,
                cycle_length: self
                    .lr_schedule
                    .cycle_length
                    .ok_or("cyclic schedule requires cycle_length")?,
            },
            other => return Err(format!("unknown lr schedule kind: {other}")),
        };
        Ok(TrainerConfig {
            iterations: self.iterations,
            batch_per_domain: self.batch_per_domain,
            eval_freq: self.eval_freq,
            hidden_layers: self.hidden_layers.clone(),
            activation,
            optimizer,
            lr_schedule,
            weight_decay: self.weight_decay,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyToml {
    pub n_s: usize,
    pub n_e: usize,
    pub r: f64,
    pub sparse_k: usize,
    pub swa_start_frac: f64,
    pub cycle_length: usize,
    pub fixed_start: usize,
    pub fit_cap: usize,
}

impl Default for StrategyToml {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            n_s: s.swad.n_s,
            n_e: s.swad.n_e,
            r: s.swad.r,
            sparse_k: s.sparse_k,
            swa_start_frac: s.swa_start_frac,
            cycle_length: s.cycle_length,
            fixed_start: s.fixed_start,
            fit_cap: s.fit_cap,
        }
    }
}

impl StrategyToml {
    pub fn build(&self, eval_freq: usize) -> StrategyConfig {
        StrategyConfig {
            swad: SwadConfig {
                n_s: self.n_s,
                n_e: self.n_e,
                r: self.r,
                eval_freq,
            },
            sparse_k: self.sparse_k,
            swa_start_frac: self.swa_start_frac,
            cycle_length: self.cycle_length,
            fixed_start: self.fixed_start,
            fit_cap: self.fit_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodToml {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub decay: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
}

impl MethodToml {
    pub fn build(&self) -> Result<MethodSpec, String> {
        match self.kind.as_str() {
            "ema" => Ok(MethodSpec {
                name: self.name.clone().unwrap_or_else(|| "ema".into()),
                kind: MethodKind::Ema {
                    decay: self.decay.unwrap_or(0.99),
                },
            }),
            "sam" => Ok(MethodSpec {
                name: self.name.clone().unwrap_or_else(|| "sam".into()),
                kind: MethodKind::Sam {
                    rho: self.rho.unwrap_or(0.05),
                },
            }),
            variant => {
                let v = VariantKind::parse(variant)
                    .map_err(|_| format!("unknown method kind: {variant}"))?;
                Ok(MethodSpec {
                    name: self.name.clone().unwrap_or_else(|| variant.into()),
                    kind: MethodKind::Variant { variant: v },
                })
            }
        }
    }
}

/// Bound-diagnostic settings used by `run` and `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundToml {
    pub gamma: f64,
    pub bins_per_dim: usize,
    pub probes: usize,
    pub ascent_steps: usize,
}

impl Default for BoundToml {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            bins_per_dim: 20,
            probes: 20,
            ascent_steps: 10,
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn dump_config(config: &RunConfig) -> Result<String, String> {
    toml::to_string_pretty(config).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [1]

[dataset]
generator = "rotated_moons"
n_per_domain = 40
angles_degrees = [0.0, 90.0]
noise_sigma = 0.2
seed = 7

[[methods]]
kind = "swad"
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![1]);
        let ds = cfg.dataset.build().unwrap();
        assert_eq!(ds.domains.len(), 2);
        let m = cfg.methods[0].build().unwrap();
        assert_eq!(m.name, "swad");
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = format!("{MINIMAL}\nunknown_top_level = 3\n");
        assert!(parse_config(&bad).is_err());
        let bad2 = MINIMAL.replace("noise_sigma", "noise_sgima");
        assert!(parse_config(&bad2).is_err());
    }

    #[test]
    fn unknown_method_kind_named_in_error() {
        let cfg = parse_config(&MINIMAL.replace("\"swad\"", "\"swadx\"")).unwrap();
        let err = cfg.methods[0].build().unwrap_err();
        assert!(err.contains("swadx"), "{err}");
    }

    #[test]
    fn dump_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let dumped = dump_config(&cfg).unwrap();
        let back = parse_config(&dumped).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn cyclic_schedule_needs_fields() {
        let t = TrainerToml {
            lr_schedule: LrToml {
                kind: "cyclic".into(),
                base_lr: 1e-3,
                min_lr: None,
                cycle_length: Some(10),
            },
            ..TrainerToml::default()
        };
        assert!(t.build().is_err());
    }
}
