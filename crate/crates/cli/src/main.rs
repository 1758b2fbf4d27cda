//! `swad` command line: runs the benchmark suite and the landscape / bound
//! analysis commands from a single TOML config.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{parse_config, RunConfig};
use swad_core::bench::{
    aggregate_csv, pooled_batch, results_csv, run_suite, Domain, DomainDataset, SuiteSpec,
};
use swad_core::flatness::{flatness_profile, loss_plane, GridSpec};
use swad_core::nn::{forward_loss, MlpSpec};
use swad_core::theory::{lemma1_check, theorem1_report, DiscreteDistribution, HistogramSpec};
use swad_core::{ParamVector, SeededRng};

#[derive(Parser)]
#[command(name = "swad", version, about = "weight-averaging benchmark and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides out_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; replaces the config seed list for `run` and seeds the
    /// analysis RNG otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel suite cells; 1 is the reference for byte-identical outputs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured method across all leave-one-out
    /// cells and seeds.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Local-flatness profile of one or more saved weight vectors.
    Flatness {
        #[command(flatten)]
        common: Common,
        /// Weight files produced by `run` (binary format).
        #[arg(required = true)]
        weights: Vec<PathBuf>,
        /// Perturbation radii, ascending.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 30)]
        n_samples: usize,
        /// Held-out domain excluded from the evaluation loss.
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
    /// Loss surface on the plane spanned by three weight vectors.
    Plane {
        #[command(flatten)]
        common: Common,
        #[arg(required = true, num_args = 3)]
        weights: Vec<PathBuf>,
        #[arg(long, default_value_t = -0.5)]
        alpha_min: f64,
        #[arg(long, default_value_t = 1.5)]
        alpha_max: f64,
        #[arg(long, default_value_t = -0.5)]
        beta_min: f64,
        #[arg(long, default_value_t = 1.5)]
        beta_max: f64,
        #[arg(long, default_value_t = 25)]
        resolution: usize,
        /// Domain treated as the test side of the plane.
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
    /// Generalization-bound diagnostic for one weight vector.
    Bound {
        #[command(flatten)]
        common: Common,
        weights: PathBuf,
        /// Ball radius; falls back to the config's [bound] section.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
    /// Parse the config and echo it back in canonical form.
    DumpConfig {
        #[command(flatten)]
        common: Common,
    },
}

/// Usage/config problems exit 2, everything else that fails exits 1.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common } => cmd_run(&common),
        Command::Flatness {
            common,
            weights,
            gammas,
            n_samples,
            target,
        } => cmd_flatness(&common, &weights, &gammas, n_samples, target),
        Command::Plane {
            common,
            weights,
            alpha_min,
            alpha_max,
            beta_min,
            beta_max,
            resolution,
            target,
        } => cmd_plane(
            &common,
            &weights,
            GridSpec {
                alpha_range: (alpha_min, alpha_max),
                beta_range: (beta_min, beta_max),
                resolution,
            },
            target,
        ),
        Command::Bound {
            common,
            weights,
            gamma,
            target,
        } => cmd_bound(&common, &weights, gamma, target),
        Command::DumpConfig { common } => cmd_dump_config(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", common.config.display())))?;
    parse_config(&text).map_err(|e| usage(format!("{}: {e}", common.config.display())))
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Dataset, model spec, and a (sources, target) view for analysis commands.
struct AnalysisContext {
    dataset: DomainDataset,
    model: MlpSpec,
}

impl AnalysisContext {
    fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let dataset = cfg.dataset.build().map_err(usage)?;
        let trainer = cfg.trainer.build().map_err(usage)?;
        let mut sizes = vec![dataset.input_dim()];
        sizes.extend(trainer.hidden_layers.iter().copied());
        sizes.push(dataset.num_classes());
        let model = MlpSpec::new(sizes, trainer.activation).map_err(usage)?;
        Ok(Self { dataset, model })
    }

    fn split(&self, target: usize) -> Result<(Vec<&Domain>, &Domain), CliError> {
        let tgt = self
            .dataset
            .domains
            .iter()
            .find(|d| d.domain_id == target)
            .ok_or_else(|| usage(format!("no domain with id {target}")))?;
        let sources: Vec<&Domain> = self
            .dataset
            .domains
            .iter()
            .filter(|d| d.domain_id != target)
            .collect();
        if sources.is_empty() {
            return Err(usage("dataset has a single domain; nothing to pool"));
        }
        Ok((sources, tgt))
    }

    fn check_weights(&self, w: &ParamVector) -> Result<(), CliError> {
        if w.dim() != self.model.param_count() {
            return Err(runtime(format!(
                "weights have {} parameters but the configured model needs {}",
                w.dim(),
                self.model.param_count()
            )));
        }
        Ok(())
    }
}

fn load_weights(path: &Path) -> Result<ParamVector, CliError> {
    if !path.exists() {
        return Err(usage(format!("weights file not found: {}", path.display())));
    }
    ParamVector::load_binary(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn cmd_run(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    let dataset = cfg.dataset.build().map_err(usage)?;
    let trainer = cfg.trainer.build().map_err(usage)?;
    let strategy = cfg.strategy.build(trainer.eval_freq);
    let methods = cfg
        .methods
        .iter()
        .map(|m| m.build())
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let seeds = match common.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(usage("seed list is empty"));
    }

    let suite = SuiteSpec {
        methods,
        seeds,
        trainer,
        strategy,
        train_frac: cfg.split.train_frac,
        val_frac: cfg.split.val_frac,
        in_test_frac: cfg.split.in_test_frac,
        jobs: common.jobs.max(1),
    };

    if !common.quiet {
        eprintln!(
            "running {} methods x {} domains x {} seeds ({} jobs)",
            suite.methods.len(),
            dataset.domains.len(),
            suite.seeds.len(),
            suite.jobs
        );
    }
    let started = Instant::now();
    let out = run_suite(&dataset, &suite).map_err(runtime)?;
    let elapsed = started.elapsed().as_secs_f64();

    write_file(&dir.join("results.csv"), &results_csv(&out.results, false))?;
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&out.aggregates))?;

    for r in &out.results {
        let path = dir
            .join("weights")
            .join(format!("{}_t{}_s{}.bin", r.method, r.target_domain, r.seed));
        fs::create_dir_all(path.parent().unwrap()).map_err(runtime)?;
        r.final_weights.save_binary(&path).map_err(runtime)?;
    }

    // bound diagnostic on the first configured method's first cell
    let first = &out.results[0];
    let model = {
        let ctx = AnalysisContext::build(&cfg)?;
        ctx.model
    };
    let sources: Vec<Domain> = dataset
        .domains
        .iter()
        .filter(|d| d.domain_id != first.target_domain)
        .cloned()
        .collect();
    let target = dataset.domain(first.target_domain).map_err(runtime)?;
    let mut rng = SeededRng::stream(first.seed, 9000);
    let bound = theorem1_report(
        &model,
        &first.final_weights,
        &sources,
        target,
        cfg.bound.gamma,
        &HistogramSpec {
            bins_per_dim: cfg.bound.bins_per_dim,
        },
        cfg.bound.probes,
        cfg.bound.ascent_steps,
        &mut rng,
    )
    .map_err(runtime)?;

    let intervals: Vec<serde_json::Value> = out
        .results
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "target_domain": r.target_domain,
                "seed": r.seed,
                "interval": r.interval,
                "wall_clock_s": r.wall_clock_s,
            })
        })
        .collect();
    let summary = json!({
        "config": cfg,
        "aggregates": out.aggregates,
        "intervals": intervals,
        "bound_report": {
            "method": first.method,
            "target_domain": first.target_domain,
            "seed": first.seed,
            "report": bound,
        },
        "metadata": {
            "wall_clock_s": elapsed,
            "finished_unix": unix_now(),
            "jobs": suite.jobs,
        },
    });
    write_file(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(runtime)?,
    )?;

    if !common.quiet {
        for a in &out.aggregates {
            eprintln!(
                "{:<20} avg {:.4} +- {:.4}",
                a.method, a.average, a.average_stderr
            );
        }
        eprintln!("wrote results to {}", dir.display());
    }
    Ok(())
}

fn cmd_flatness(
    common: &Common,
    weights: &[PathBuf],
    gammas: &[f64],
    n_samples: usize,
    target: usize,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    let ctx = AnalysisContext::build(&cfg)?;
    let (sources, _) = ctx.split(target)?;
    let batch = pooled_batch(&sources.iter().map(|d| (*d).clone()).collect::<Vec<_>>())
        .map_err(runtime)?;
    let eval = |w: &ParamVector| -> f64 {
        forward_loss(&ctx.model, w, &batch)
            .map(|s| s.cross_entropy)
            .unwrap_or(f64::INFINITY)
    };

    for path in weights {
        let w = load_weights(path)?;
        ctx.check_weights(&w)?;
        let mut rng = SeededRng::new(common.seed.unwrap_or(0));
        let profile =
            flatness_profile(&w, &eval, gammas, n_samples, &mut rng).map_err(runtime)?;
        let mut csv = String::from("gamma,estimate,stderr,n_samples\n");
        for ((g, v), s) in profile.gammas.iter().zip(&profile.values).zip(&profile.stderr) {
            csv.push_str(&format!("{g},{v},{s},{}\n", profile.n_samples));
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("weights");
        let out_path = dir.join(format!("flatness_{stem}.csv"));
        write_file(&out_path, &csv)?;
        if !common.quiet {
            eprintln!("wrote {}", out_path.display());
        }
    }
    Ok(())
}

fn cmd_plane(
    common: &Common,
    weights: &[PathBuf],
    grid: GridSpec,
    target: usize,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    let ctx = AnalysisContext::build(&cfg)?;
    let (sources, tgt) = ctx.split(target)?;

    let train_batch = pooled_batch(&sources.iter().map(|d| (*d).clone()).collect::<Vec<_>>())
        .map_err(runtime)?;
    let test_batch = tgt.to_batch().map_err(runtime)?;

    let mut thetas = Vec::with_capacity(3);
    for p in weights {
        let w = load_weights(p)?;
        ctx.check_weights(&w)?;
        thetas.push(w);
    }

    let model = &ctx.model;
    let train_eval = |w: &ParamVector| -> f64 {
        forward_loss(model, w, &train_batch)
            .map(|s| s.cross_entropy)
            .unwrap_or(f64::INFINITY)
    };
    let test_eval = |w: &ParamVector| -> f64 {
        forward_loss(model, w, &test_batch)
            .map(|s| s.cross_entropy)
            .unwrap_or(f64::INFINITY)
    };
    let plane = loss_plane(&thetas[0], &thetas[1], &thetas[2], &grid, &train_eval, &test_eval)
        .map_err(runtime)?;

    let mut csv = String::from("alpha,beta,train_loss,test_loss\n");
    let mut k = 0;
    for &a in &plane.alphas {
        for &b in &plane.betas {
            csv.push_str(&format!(
                "{a},{b},{},{}\n",
                plane.train_loss[k], plane.test_loss[k]
            ));
            k += 1;
        }
    }
    write_file(&dir.join("plane.csv"), &csv)?;

    let basis = json!({
        "markers": plane.markers,
        "grid": grid,
        "u_hat_norm": plane.u_hat.l2_norm(),
        "v_hat_norm": plane.v_hat.l2_norm(),
        "weights_files": weights.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    write_file(
        &dir.join("basis.json"),
        &serde_json::to_string_pretty(&basis).map_err(runtime)?,
    )?;
    if !common.quiet {
        eprintln!("wrote {} and {}", dir.join("plane.csv").display(), dir.join("basis.json").display());
    }
    Ok(())
}

fn cmd_bound(
    common: &Common,
    weights: &Path,
    gamma: Option<f64>,
    target: usize,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    let ctx = AnalysisContext::build(&cfg)?;
    let (sources, tgt) = ctx.split(target)?;
    let w = load_weights(weights)?;
    ctx.check_weights(&w)?;

    let gamma = gamma.unwrap_or(cfg.bound.gamma);
    let sources_owned: Vec<Domain> = sources.iter().map(|d| (*d).clone()).collect();
    let mut rng = SeededRng::new(common.seed.unwrap_or(0));
    let report = theorem1_report(
        &ctx.model,
        &w,
        &sources_owned,
        tgt,
        gamma,
        &HistogramSpec {
            bins_per_dim: cfg.bound.bins_per_dim,
        },
        cfg.bound.probes,
        cfg.bound.ascent_steps,
        &mut rng,
    )
    .map_err(runtime)?;

    // randomized exact-enumeration check of the bounded-loss inequality
    let trials = 200;
    let mut violations = 0usize;
    let mut check_rng = SeededRng::stream(common.seed.unwrap_or(0), 77);
    for _ in 0..trials {
        let support: Vec<usize> = (0..6).collect();
        let draw = |rng: &mut SeededRng| -> Vec<f64> {
            let raw: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        };
        let p = DiscreteDistribution::new(support.clone(), draw(&mut check_rng))
            .map_err(runtime)?;
        let q = DiscreteDistribution::new(support.clone(), draw(&mut check_rng))
            .map_err(runtime)?;
        let h1: Vec<usize> = (0..6).map(|_| check_rng.gen_index(2)).collect();
        let h2: Vec<usize> = (0..6).map(|_| check_rng.gen_index(2)).collect();
        let loss = |a: usize, b: usize| if a == b { 0.0 } else { 1.0 };
        let (_, _, holds) = lemma1_check(&p, &q, &h1, &h2, &loss).map_err(runtime)?;
        if !holds {
            violations += 1;
        }
    }

    let out = json!({
        "bound_report": report,
        "lemma1_check": { "trials": trials, "violations": violations },
    });
    write_file(
        &dir.join("bound.json"),
        &serde_json::to_string_pretty(&out).map_err(runtime)?,
    )?;
    if !common.quiet {
        eprintln!("wrote {}", dir.join("bound.json").display());
    }
    Ok(())
}

fn cmd_dump_config(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dumped = config::dump_config(&cfg).map_err(runtime)?;
    print!("{dumped}");
    Ok(())
}
