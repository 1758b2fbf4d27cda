//! Dense, overfit-aware weight averaging and its ablations, plus sparse SWA
//! baselines. The interval detector runs on validation-checkpoint indices
//! (1-based) while weights are averaged densely at every iteration through
//! per-segment running means, so memory stays O(#checkpoints * dim).
//!
//! A checkpoint interval (t_s, t_e) covers raw iterations
//! ((t_s-1)*eval_freq, t_e*eval_freq].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{ParamVector, RunningMean};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwadConfig {
    /// Optimum patience N_s.
    pub n_s: usize,
    /// Overfit patience N_e.
    pub n_e: usize,
    /// Tolerance rate r (> 1).
    pub r: f64,
    /// Iterations per validation checkpoint.
    pub eval_freq: usize,
}

impl SwadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s < 1 || self.n_e < 1 {
            return Err(Error::InvalidArgument(
                "patience parameters must be >= 1".into(),
            ));
        }
        if self.r <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance rate must be > 1, got {}",
                self.r
            )));
        }
        if self.eval_freq == 0 {
            return Err(Error::InvalidArgument("eval_freq must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SwadConfig {
    fn default() -> Self {
        Self {
            n_s: 3,
            n_e: 6,
            r: 1.3,
            eval_freq: 20,
        }
    }
}

/// Time-ordered validation losses at checkpoints 1..=T.
#[derive(Debug, Clone, Default)]
pub struct ValTrace {
    losses: Vec<f64>,
}

impl ValTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_losses(losses: Vec<f64>) -> Self {
        Self { losses }
    }

    pub fn push(&mut self, loss: f64) {
        self.losses.push(loss);
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Loss at 1-based checkpoint index.
    pub fn loss_at(&self, checkpoint: usize) -> f64 {
        self.losses[checkpoint - 1]
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }
}

/// Find the averaging start: scanning i = n_s, n_s+1, ..., the first i where
/// the oldest loss of the window {i-n_s+1 .. i} attains the window minimum
/// (ties count) yields t_s = i-n_s+1 and the threshold
/// l = (r/n_s) * sum of the window.
pub fn detect_start(trace: &ValTrace, n_s: usize, r: f64) -> Option<(usize, f64)> {
    let t = trace.len();
    for i in n_s..=t {
        let window = &trace.losses()[i - n_s..i];
        let oldest = window[0];
        let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
        if oldest <= min {
            let sum: f64 = window.iter().sum();
            return Some((i - n_s + 1, r / n_s as f64 * sum));
        }
    }
    None
}

/// Find the averaging end: the first i >= max(start_scan, n_e) where the
/// minimum of the last n_e losses strictly exceeds the threshold yields
/// t_e = i - n_e. Absent means the caller keeps the final checkpoint.
pub fn detect_end(trace: &ValTrace, threshold: f64, start_scan: usize, n_e: usize) -> Option<usize> {
    let t = trace.len();
    for i in start_scan.max(n_e)..=t {
        let window = &trace.losses()[i - n_e..i];
        let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > threshold {
            return Some(i - n_e);
        }
    }
    None
}

/// Running mean of all raw iterates inside one checkpoint segment.
#[derive(Debug, Clone)]
pub struct SegmentMean {
    pub checkpoint_index: usize,
    pub mean: RunningMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingInterval {
    pub t_s: usize,
    pub t_e: usize,
    /// Loss threshold l when the detector fired.
    pub threshold: Option<f64>,
}

/// Count-weighted merge of the segment means covering t_s..=t_e. Equals the
/// plain mean of every raw iterate in those segments.
pub fn swad_average(segments: &[SegmentMean], interval: &AveragingInterval) -> Result<ParamVector> {
    let mut acc = RunningMean::empty();
    for cp in interval.t_s..=interval.t_e {
        let seg = segments
            .iter()
            .find(|s| s.checkpoint_index == cp)
            .ok_or(Error::MissingSegment { checkpoint: cp })?;
        acc.merge(&seg.mean)?;
    }
    if acc.count() == 0 {
        return Err(Error::Empty("averaging interval".into()));
    }
    Ok(acc.mean().clone())
}

/// Plain mean of sparse snapshots.
pub fn swa_sparse_average(snapshots: &[ParamVector]) -> Result<ParamVector> {
    if snapshots.is_empty() {
        return Err(Error::Empty("snapshot list".into()));
    }
    let mut acc = RunningMean::empty();
    for s in snapshots {
        acc.update(s)?;
    }
    Ok(acc.mean().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Swad,
    SwadNoDense,
    SwadNoOverfit,
    SwadNoOptOverfit,
    SwadFitOnVal,
    SwaCyclic,
    SwaConstant,
    ErmLast,
    ErmBestVal,
}

impl VariantKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "swad" => Self::Swad,
            "swad_no_dense" => Self::SwadNoDense,
            "swad_no_overfit" => Self::SwadNoOverfit,
            "swad_no_opt_overfit" => Self::SwadNoOptOverfit,
            "swad_fit_on_val" => Self::SwadFitOnVal,
            "swa_cyclic" => Self::SwaCyclic,
            "swa_constant" => Self::SwaConstant,
            "erm_last" => Self::ErmLast,
            "erm_best_val" => Self::ErmBestVal,
            other => return Err(Error::UnknownVariant(other.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Swad => "swad",
            Self::SwadNoDense => "swad_no_dense",
            Self::SwadNoOverfit => "swad_no_overfit",
            Self::SwadNoOptOverfit => "swad_no_opt_overfit",
            Self::SwadFitOnVal => "swad_fit_on_val",
            Self::SwaCyclic => "swa_cyclic",
            Self::SwaConstant => "swa_constant",
            Self::ErmLast => "erm_last",
            Self::ErmBestVal => "erm_best_val",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub swad: SwadConfig,
    /// Sample every K checkpoints in sparse modes.
    pub sparse_k: usize,
    /// Fraction of checkpoints skipped before SWA sampling starts.
    pub swa_start_frac: f64,
    /// Iterations per learning-rate cycle; swa_cyclic samples at cycle ends.
    pub cycle_length: usize,
    /// Start checkpoint for the fixed-interval ablation.
    pub fixed_start: usize,
    /// Max interval width (in checkpoints) scanned by fit-on-val.
    pub fit_cap: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            swad: SwadConfig::default(),
            sparse_k: 10,
            swa_start_frac: 0.5,
            cycle_length: 60,
            fixed_start: 1,
            fit_cap: 20,
        }
    }
}

/// Everything a finalization policy needs from one training trajectory:
/// per-segment running means, the raw weight snapshot at each checkpoint,
/// and the validation trace.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    eval_freq: usize,
    current: RunningMean,
    segments: Vec<SegmentMean>,
    snapshots: Vec<ParamVector>,
    trace: ValTrace,
    last_theta: Option<ParamVector>,
}

impl TrajectoryRecord {
    pub fn new(eval_freq: usize) -> Self {
        Self {
            eval_freq,
            current: RunningMean::empty(),
            segments: Vec::new(),
            snapshots: Vec::new(),
            trace: ValTrace::new(),
            last_theta: None,
        }
    }

    /// Feed one iterate. `val_loss` is present exactly at checkpoint
    /// iterations and closes the current segment.
    pub fn observe(&mut self, theta: &ParamVector, val_loss: Option<f64>) -> Result<()> {
        self.current.update(theta)?;
        self.last_theta = Some(theta.clone());
        if let Some(loss) = val_loss {
            let checkpoint_index = self.trace.len() + 1;
            self.segments.push(SegmentMean {
                checkpoint_index,
                mean: std::mem::replace(&mut self.current, RunningMean::empty()),
            });
            self.snapshots.push(theta.clone());
            self.trace.push(loss);
        }
        Ok(())
    }

    pub fn eval_freq(&self) -> usize {
        self.eval_freq
    }

    pub fn n_checkpoints(&self) -> usize {
        self.trace.len()
    }

    pub fn trace(&self) -> &ValTrace {
        &self.trace
    }

    pub fn segments(&self) -> &[SegmentMean] {
        &self.segments
    }

    pub fn snapshots(&self) -> &[ParamVector] {
        &self.snapshots
    }

    pub fn last_theta(&self) -> Option<&ParamVector> {
        self.last_theta.as_ref()
    }
}

/// Interval summary attached to every run result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub variant: String,
    pub t_s: Option<usize>,
    pub t_e: Option<usize>,
    pub l: Option<f64>,
    pub eval_freq: usize,
    pub n_checkpoints: usize,
}

/// Validation evaluator used by fit-on-val: weights -> (loss, accuracy).
pub type ValEval<'a> = &'a dyn Fn(&ParamVector) -> (f64, f64);

/// One averaging policy observing a single trajectory.
#[derive(Debug, Clone)]
pub struct Strategy {
    kind: VariantKind,
    config: StrategyConfig,
    record: TrajectoryRecord,
}

pub fn make_variant(kind: &str, config: StrategyConfig) -> Result<Strategy> {
    let kind = VariantKind::parse(kind)?;
    Ok(Strategy::new(kind, config))
}

impl Strategy {
    pub fn new(kind: VariantKind, config: StrategyConfig) -> Self {
        let eval_freq = config.swad.eval_freq;
        Self {
            kind,
            config,
            record: TrajectoryRecord::new(eval_freq),
        }
    }

    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    pub fn observe(&mut self, theta: &ParamVector, val_loss: Option<f64>) -> Result<()> {
        self.record.observe(theta, val_loss)
    }

    pub fn finalize(&self, val_eval: Option<ValEval<'_>>) -> Result<(ParamVector, IntervalReport)> {
        finalize_from_record(self.kind, &self.config, &self.record, val_eval)
    }
}

fn detected_interval(config: &StrategyConfig, trace: &ValTrace) -> AveragingInterval {
    let t = trace.len();
    match detect_start(trace, config.swad.n_s, config.swad.r) {
        Some((t_s, l)) => {
            // end scan resumes right after the detection checkpoint
            let start_scan = t_s + config.swad.n_s;
            let t_e = detect_end(trace, l, start_scan, config.swad.n_e).unwrap_or(t);
            AveragingInterval {
                t_s,
                t_e,
                threshold: Some(l),
            }
        }
        None => AveragingInterval {
            t_s: 1,
            t_e: t,
            threshold: None,
        },
    }
}

/// Apply one variant's finalization policy to a recorded trajectory.
/// Sharing a record across variants keeps ablations exactly controlled:
/// every policy sees the identical iterates.
pub fn finalize_from_record(
    kind: VariantKind,
    config: &StrategyConfig,
    record: &TrajectoryRecord,
    val_eval: Option<ValEval<'_>>,
) -> Result<(ParamVector, IntervalReport)> {
    let t = record.n_checkpoints();
    if t == 0 {
        // no checkpoint ever closed; only the last iterate is available
        let theta = record
            .last_theta()
            .cloned()
            .ok_or_else(|| Error::Empty("trajectory".into()))?;
        return Ok((
            theta,
            IntervalReport {
                variant: kind.name().into(),
                t_s: None,
                t_e: None,
                l: None,
                eval_freq: record.eval_freq(),
                n_checkpoints: 0,
            },
        ));
    }

    let mut report = IntervalReport {
        variant: kind.name().into(),
        t_s: None,
        t_e: None,
        l: None,
        eval_freq: record.eval_freq(),
        n_checkpoints: t,
    };

    let theta = match kind {
        VariantKind::Swad => {
            let interval = detected_interval(config, record.trace());
            report.t_s = Some(interval.t_s);
            report.t_e = Some(interval.t_e);
            report.l = interval.threshold;
            swad_average(record.segments(), &interval)?
        }
        VariantKind::SwadNoDense => {
            let interval = detected_interval(config, record.trace());
            report.t_s = Some(interval.t_s);
            report.t_e = Some(interval.t_e);
            report.l = interval.threshold;
            let k = config.sparse_k.max(1);
            let picks: Vec<ParamVector> = (interval.t_s..=interval.t_e)
                .step_by(k)
                .map(|cp| record.snapshots()[cp - 1].clone())
                .collect();
            swa_sparse_average(&picks)?
        }
        VariantKind::SwadNoOverfit => {
            let t_s = detect_start(record.trace(), config.swad.n_s, config.swad.r)
                .map(|(t_s, l)| {
                    report.l = Some(l);
                    t_s
                })
                .unwrap_or(1);
            let interval = AveragingInterval {
                t_s,
                t_e: t,
                threshold: report.l,
            };
            report.t_s = Some(t_s);
            report.t_e = Some(t);
            swad_average(record.segments(), &interval)?
        }
        VariantKind::SwadNoOptOverfit => {
            let t_s = config.fixed_start.clamp(1, t);
            let interval = AveragingInterval {
                t_s,
                t_e: t,
                threshold: None,
            };
            report.t_s = Some(t_s);
            report.t_e = Some(t);
            swad_average(record.segments(), &interval)?
        }
        VariantKind::SwadFitOnVal => {
            let eval = val_eval.ok_or_else(|| {
                Error::InvalidArgument("fit_on_val requires a validation evaluator".into())
            })?;
            let (interval, theta) = fit_on_val(config, record, eval)?;
            report.t_s = Some(interval.t_s);
            report.t_e = Some(interval.t_e);
            return Ok((theta, report));
        }
        VariantKind::SwaCyclic => {
            let warmup = swa_warmup(config, t);
            let freq = record.eval_freq();
            let picks: Vec<ParamVector> = (1..=t)
                .filter(|cp| cp > &warmup && (cp * freq).is_multiple_of(config.cycle_length.max(1)))
                .map(|cp| record.snapshots()[cp - 1].clone())
                .collect();
            swa_sparse_average(&picks)?
        }
        VariantKind::SwaConstant => {
            let warmup = swa_warmup(config, t);
            let k = config.sparse_k.max(1);
            let picks: Vec<ParamVector> = (1..=t)
                .filter(|cp| cp > &warmup && (cp - warmup).is_multiple_of(k))
                .map(|cp| record.snapshots()[cp - 1].clone())
                .collect();
            swa_sparse_average(&picks)?
        }
        VariantKind::ErmLast => record
            .last_theta()
            .cloned()
            .ok_or_else(|| Error::Empty("trajectory".into()))?,
        VariantKind::ErmBestVal => {
            let mut best = 1usize;
            for cp in 2..=t {
                if record.trace().loss_at(cp) < record.trace().loss_at(best) {
                    best = cp;
                }
            }
            report.t_s = Some(best);
            report.t_e = Some(best);
            record.snapshots()[best - 1].clone()
        }
    };
    Ok((theta, report))
}

fn swa_warmup(config: &StrategyConfig, t: usize) -> usize {
    ((config.swa_start_frac * t as f64).floor() as usize).min(t.saturating_sub(1))
}

/// Scan all (t_s, t_e) pairs with width <= fit_cap, average densely via
/// prefix sums of segment totals, and keep the pair with the best validation
/// accuracy (loss breaks ties, then the earlier pair).
fn fit_on_val(
    config: &StrategyConfig,
    record: &TrajectoryRecord,
    eval: ValEval<'_>,
) -> Result<(AveragingInterval, ParamVector)> {
    let t = record.n_checkpoints();
    let dim = record.segments()[0].mean.mean().dim();

    // prefix[k] = (total count, coordinate-wise sum) over checkpoints 1..=k
    let mut prefix_counts = vec![0u64; t + 1];
    let mut prefix_sums = vec![vec![0.0f64; dim]; t + 1];
    for k in 1..=t {
        let seg = &record.segments()[k - 1];
        let c = seg.mean.count();
        prefix_counts[k] = prefix_counts[k - 1] + c;
        let prev = prefix_sums[k - 1].clone();
        let dst = &mut prefix_sums[k];
        for (i, (p, m)) in prev.iter().zip(seg.mean.mean().values()).enumerate() {
            dst[i] = p + c as f64 * m;
        }
    }

    let mut best: Option<(f64, f64, usize, usize, ParamVector)> = None;
    for t_s in 1..=t {
        for t_e in t_s..=(t_s + config.fit_cap).min(t) {
            let count = prefix_counts[t_e] - prefix_counts[t_s - 1];
            let inv = 1.0 / count as f64;
            let avg = ParamVector::new(
                prefix_sums[t_e]
                    .iter()
                    .zip(&prefix_sums[t_s - 1])
                    .map(|(b, a)| (b - a) * inv)
                    .collect(),
            );
            let (loss, acc) = eval(&avg);
            let better = match &best {
                None => true,
                Some((bacc, bloss, ..)) => {
                    acc > *bacc || (acc == *bacc && loss < *bloss)
                }
            };
            if better {
                best = Some((acc, loss, t_s, t_e, avg));
            }
        }
    }
    let (_, _, t_s, t_e, avg) = best.ok_or_else(|| Error::Empty("fit-on-val grid".into()))?;
    Ok((
        AveragingInterval {
            t_s,
            t_e,
            threshold: None,
        },
        avg,
    ))
}
