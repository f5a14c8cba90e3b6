//! Monte-Carlo experiment runner: stream → predictors → placement → metrics.
//!
//! Replications run on a worker pool and are reduced in replication order,
//! so output bytes never depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asp::{asp, compute_constants, optimal_placement, AspConstants, DEFAULT_QUAD_TOL};
use crate::data::{
    counts_for_profiles, generate_iid_stream_with, generate_quasi_stream, load_movielens, IidOptions, SynthConfig,
    TimeVariation, DEFAULT_JITTER,
};
use crate::domain::{derive_seed, mse, normalize_column, MetricRecord, NetworkParams, PopularityProfile, ZipfSpec};
use crate::error::{Error, Result};
use crate::kwik::{assemble, kwik_step, KwikConfig, KwikDomain, KwikState};
use crate::ol_predictors::{ol_step, OlModel, OlState, Observation};
use crate::op_predictors::{predict, rpm_predict, CountScale, HistoryWindow, OpConfig, OpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TimeVarying,
    Quasi,
    Movielens,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::TimeVarying => "time-varying",
            Scenario::Quasi => "quasi",
            Scenario::Movielens => "movielens",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    None,
    Tau,
    N,
    S,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SweepAxis::None),
            "tau" => Ok(SweepAxis::Tau),
            "n" => Ok(SweepAxis::N),
            "s" => Ok(SweepAxis::S),
            other => Err(config_err("sweep", format!("unknown axis {other:?}, expected tau, n or s"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Op,
    Ol,
    Kwik,
}

/// A learning family paired with a prediction model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelSpec {
    pub family: Family,
    pub model: OpModel,
}

impl ModelSpec {
    pub const fn new(family: Family, model: OpModel) -> Self {
        Self { family, model }
    }

    pub fn all() -> Vec<ModelSpec> {
        [Family::Op, Family::Ol, Family::Kwik]
            .into_iter()
            .flat_map(|f| OpModel::ALL.into_iter().map(move |m| ModelSpec::new(f, m)))
            .collect()
    }

    pub fn name(&self) -> String {
        let family = match self.family {
            Family::Op => "OP",
            Family::Ol => "OL",
            Family::Kwik => "KWIK",
        };
        format!("{family}-{}", self.model.name())
    }

    /// Online learner backing this spec; ASP-PM shares the profile learner.
    fn ol_model(&self) -> OlModel {
        match self.model {
            OpModel::Ppm | OpModel::AspPm => OlModel::Ppm,
            OpModel::Gpm => OlModel::Gpm,
            OpModel::Rpm => OlModel::Rpm,
            OpModel::Ipm => OlModel::Ipm,
        }
    }

    fn kwik_domain(&self) -> KwikDomain {
        match self.model {
            OpModel::Ppm | OpModel::AspPm => KwikDomain::Profile,
            OpModel::Gpm => KwikDomain::Sqrt,
            OpModel::Rpm => KwikDomain::LogCount,
            OpModel::Ipm => KwikDomain::Information,
        }
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (family, model) = upper
            .split_once('-')
            .ok_or_else(|| config_err("models", format!("{s:?} is not FAMILY-MODEL")))?;
        let family = match family {
            "OP" => Family::Op,
            "OL" => Family::Ol,
            "KWIK" => Family::Kwik,
            other => return Err(config_err("models", format!("unknown family {other:?}"))),
        };
        let model = match model.replace('-', "").as_str() {
            "PPM" => OpModel::Ppm,
            "GPM" => OpModel::Gpm,
            "RPM" => OpModel::Rpm,
            "IPM" => OpModel::Ipm,
            "ASPPM" => OpModel::AspPm,
            other => return Err(config_err("models", format!("unknown model {other:?}"))),
        };
        Ok(ModelSpec { family, model })
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

/// Every field has a default; a config file may set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Model names such as `OP-PPM`, `OL-GPM`, `KWIK-PPM`.
    pub models: Vec<String>,
    pub n_files: usize,
    pub cache_size: usize,
    pub order: usize,
    pub window: usize,
    pub zipf_exponent: f64,
    pub runs: usize,
    pub seed: u64,
    /// Evaluated slots per replication (time-varying scenario).
    pub slots: usize,
    pub sweep: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub out_dir: PathBuf,

    pub bs_density: f64,
    pub path_loss: f64,
    pub bandwidth: f64,
    pub rate_threshold: f64,
    pub tx_power: f64,
    pub noise: f64,

    pub mean_requests: f64,
    pub inter_arrival: f64,
    pub slot_duration: f64,
    /// Shuffle Zipf ranks across files in every slot.
    pub permute: bool,
    /// Dirichlet concentration of per-slot jitter; 0 disables it.
    pub jitter: f64,

    pub block_len: usize,
    pub n_blocks: usize,

    pub ratings: Option<PathBuf>,
    pub slot_days: f64,
    pub id_lo: u32,
    pub id_hi: u32,

    pub kwik_alpha_q: f64,
    pub kwik_alpha_v: f64,
    pub kwik_max_rows: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let net = NetworkParams::default();
        Self {
            scenario: Scenario::TimeVarying,
            models: ModelSpec::all().iter().map(ModelSpec::name).collect(),
            n_files: 3,
            cache_size: 2,
            order: 4,
            window: 10,
            zipf_exponent: 1.5,
            runs: 100,
            seed: 1,
            slots: 50,
            sweep: SweepAxis::None,
            sweep_values: Vec::new(),
            out_dir: PathBuf::from("out"),
            bs_density: net.bs_density,
            path_loss: net.path_loss,
            bandwidth: net.bandwidth,
            rate_threshold: net.rate_threshold,
            tx_power: net.tx_power,
            noise: net.noise,
            mean_requests: 100.0,
            inter_arrival: 0.01,
            slot_duration: 900.0,
            permute: false,
            jitter: DEFAULT_JITTER,
            block_len: 200,
            n_blocks: 2,
            ratings: None,
            slot_days: 30.0,
            id_lo: 1,
            id_hi: 100,
            kwik_alpha_q: 0.5,
            kwik_alpha_v: 0.5,
            kwik_max_rows: 512,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn network(&self) -> NetworkParams {
        NetworkParams {
            bs_density: self.bs_density,
            path_loss: self.path_loss,
            bandwidth: self.bandwidth,
            rate_threshold: self.rate_threshold,
            tx_power: self.tx_power,
            noise: self.noise,
            cache_size: self.cache_size,
        }
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        let specs = self.models.iter().map(|m| m.parse()).collect::<Result<Vec<ModelSpec>>>()?;
        if specs.is_empty() {
            return Err(config_err("models", "at least one model is required"));
        }
        Ok(specs)
    }

    fn synth(&self) -> Result<SynthConfig> {
        let zipf = ZipfSpec::new(self.n_files, self.zipf_exponent).map_err(|e| config_err("zipf_exponent", e.to_string()))?;
        Ok(SynthConfig {
            mean_requests: self.mean_requests,
            inter_arrival: self.inter_arrival,
            slot_duration: self.slot_duration,
            n_events: 1,
            zipf,
            variation: TimeVariation::IidPerSlot(self.iid_options()),
        })
    }

    fn iid_options(&self) -> IidOptions {
        IidOptions { permute: self.permute, jitter: (self.jitter > 0.0).then_some(self.jitter) }
    }

    fn kwik(&self) -> KwikConfig {
        KwikConfig { order: self.order, alpha_q: self.kwik_alpha_q, alpha_v: self.kwik_alpha_v, max_rows: self.kwik_max_rows }
    }

    pub fn validate(&self) -> Result<()> {
        fn wrap(field: &str) -> impl Fn(Error) -> Error + '_ {
            move |e| config_err(field, e.to_string())
        }
        if self.n_files < 2 {
            return Err(config_err("n_files", "need at least 2 files"));
        }
        if self.runs == 0 {
            return Err(config_err("runs", "must be at least 1"));
        }
        if self.slots == 0 {
            return Err(config_err("slots", "must be at least 1"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(config_err("jitter", "must be finite and nonnegative"));
        }
        if !(self.slot_days > 0.0) {
            return Err(config_err("slot_days", "must be positive"));
        }
        self.model_specs()?;
        OpConfig::new(OpModel::Ppm, self.order, self.window).map_err(wrap("window"))?;
        self.network().validate(self.n_files).map_err(wrap("network"))?;
        self.synth()?.validate().map_err(wrap("workload"))?;
        self.kwik().validate().map_err(wrap("kwik"))?;
        if self.scenario == Scenario::Quasi {
            if self.block_len <= self.order {
                return Err(config_err("block_len", "must exceed the order"));
            }
            if self.n_blocks == 0 || self.order + self.n_blocks * self.block_len <= self.window {
                return Err(config_err("n_blocks", "stream too short for the window"));
            }
        }
        if self.scenario == Scenario::Movielens {
            if self.ratings.is_none() {
                return Err(config_err("ratings", "movielens scenario needs a ratings file"));
            }
            if self.id_hi < self.id_lo || (self.id_hi - self.id_lo + 1) as usize != self.n_files {
                return Err(config_err("id_hi", "id range must span exactly n_files items"));
            }
        }
        Ok(())
    }
}

/// Observed data of one replication: profiles with matching request counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub profiles: Vec<PopularityProfile>,
    /// `counts[slot][file]`.
    pub counts: Vec<Vec<u64>>,
    /// Reference count for log-count learners.
    pub n_max: u64,
}

impl Trace {
    fn from_generated(generated: &[PopularityProfile], synth: &SynthConfig, seed: u64) -> Result<Self> {
        let m = counts_for_profiles(generated, synth, seed)?;
        let counts: Vec<Vec<u64>> = (0..m.n_slots()).map(|t| m.column(t)).collect();
        let profiles = counts
            .iter()
            .zip(generated)
            .map(|(c, p)| normalize_column(c).or_else(|_| Ok::<_, Error>(p.clone())))
            .collect::<Result<Vec<_>>>()?;
        let n_max = (synth.mean_requests * synth.events_per_slot()).ceil().max(2.0) as u64;
        Ok(Self { profiles, counts, n_max })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// Builds the observation trace of replication `rep`.
pub fn build_trace(cfg: &ExperimentConfig, rep: usize) -> Result<Trace> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let synth = cfg.synth()?;
    match cfg.scenario {
        Scenario::TimeVarying => {
            let generated = generate_iid_stream_with(synth.zipf, cfg.window + cfg.slots, cfg.iid_options(), seed)?;
            Trace::from_generated(&generated, &synth, derive_seed(seed, 0))
        }
        Scenario::Quasi => {
            let stream = generate_quasi_stream(cfg.order, cfg.block_len, cfg.n_blocks, synth.zipf, seed)?;
            Trace::from_generated(&stream.profiles, &synth, derive_seed(seed, 0))
        }
        Scenario::Movielens => {
            let path = cfg.ratings.as_ref().ok_or_else(|| config_err("ratings", "missing"))?;
            let seconds = (cfg.slot_days * 86_400.0).round() as u64;
            let series = load_movielens(path, seconds, cfg.id_lo, cfg.id_hi)?;
            let counts: Vec<Vec<u64>> = series.sums.iter().map(|s| s.iter().map(|v| v.round() as u64).collect()).collect();
            let n_max = counts.iter().flatten().copied().max().unwrap_or(0).max(2);
            Ok(Trace { profiles: series.profiles, counts, n_max })
        }
    }
}

/// Per-model state while walking one trace.
enum Runner {
    Op(OpConfig),
    Ol(OlState),
    Kwik { state: KwikState, domain: KwikDomain, pending: Option<PopularityProfile> },
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    k: &'a AspConstants,
}

impl Context<'_> {
    fn metrics(&self, model: &str, slot: usize, p: &PopularityProfile, p_hat: &PopularityProfile) -> Result<MetricRecord> {
        let budget = self.cfg.cache_size;
        let best = optimal_placement(p, budget, self.k)?;
        let chosen = optimal_placement(p_hat, budget, self.k)?;
        let truth = asp(p, &best.q, self.k)?;
        Ok(MetricRecord {
            model: model.to_string(),
            slot,
            mse: mse(p, p_hat.as_slice())?,
            asp_diff: truth - asp(p_hat, &chosen.q, self.k)?,
            asp_diff_true_eval: truth - asp(p, &chosen.q, self.k)?,
        })
    }
}

/// Walks one trace and returns `records[model][slot]` for slots `τ..len`.
pub fn run_replication(cfg: &ExperimentConfig, k: &AspConstants, trace: &Trace) -> Result<Vec<Vec<MetricRecord>>> {
    let specs = cfg.model_specs()?;
    let n = cfg.n_files;
    let tau = cfg.window;
    if trace.len() <= tau {
        return Err(Error::DegenerateHistory(format!("trace of {} slots leaves nothing after the window {tau}", trace.len())));
    }
    let ctx = Context { cfg, k };
    let mut runners = specs
        .iter()
        .map(|s| {
            Ok(match s.family {
                Family::Op => {
                    let mut op = OpConfig::new(s.model, cfg.order, tau)?;
                    op.count_scale = CountScale::WindowMax;
                    Runner::Op(op)
                }
                Family::Ol => Runner::Ol(OlState::new(s.ol_model(), n)?),
                Family::Kwik => Runner::Kwik { state: KwikState::new(n, cfg.kwik())?, domain: s.kwik_domain(), pending: None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fallback = OlState::new(OlModel::Ppm, n)?;
    let mut records = vec![Vec::with_capacity(trace.len() - tau); specs.len()];

    for t in 0..trace.len() {
        let p = &trace.profiles[t];
        if t >= tau {
            for ((spec, runner), out) in specs.iter().zip(&runners).zip(records.iter_mut()) {
                let p_hat = match runner {
                    Runner::Op(op) => {
                        let w = HistoryWindow::new(trace.profiles[t - tau..t].to_vec(), t - 1)?
                            .with_counts(trace.counts[t - tau..t].to_vec())?;
                        if op.model == OpModel::Rpm {
                            rpm_predict(&w, op)?.profile
                        } else {
                            predict(&w, op, Some((k, cfg.cache_size)))?
                        }
                    }
                    Runner::Ol(state) => state.readout(),
                    Runner::Kwik { pending, .. } => pending.clone().unwrap_or_else(|| fallback.readout()),
                };
                out.push(ctx.metrics(&spec.name(), t, p, &p_hat)?);
            }
        }
        let obs = Observation { profile: p, counts: Some(&trace.counts[t]), n_max: trace.n_max };
        for runner in runners.iter_mut() {
            match runner {
                Runner::Op(_) => {}
                Runner::Ol(state) => {
                    ol_step(state, obs)?;
                }
                Runner::Kwik { state, domain, pending } => {
                    let encoded = domain.encode(p, Some(&trace.counts[t]), trace.n_max)?;
                    let out = kwik_step(state, &encoded)?;
                    *pending = assemble(&out, *domain);
                }
            }
        }
        ol_step(&mut fallback, obs)?;
    }
    Ok(records)
}

/// One line of the long-format metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub slot: usize,
    pub metric: &'static str,
    pub value: f64,
    pub stderr: f64,
}

/// Replication-level mean of one metric over all evaluated slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub replications: usize,
    pub failed: usize,
}

impl ExperimentResult {
    /// Mean of `metric` for `model` over slots and replications.
    pub fn mean(&self, model: &str, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.model == model && r.metric == metric).map(|r| r.mean)
    }
}

pub const METRICS: [&str; 3] = ["mse", "asp_diff", "asp_diff_true_eval"];

fn metric_value(r: &MetricRecord, metric: &str) -> f64 {
    match metric {
        "mse" => r.mse,
        "asp_diff" => r.asp_diff,
        _ => r.asp_diff_true_eval,
    }
}

/// Sample mean and standard error of the mean.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let k = compute_constants(&cfg.network(), DEFAULT_QUAD_TOL)?;
    let specs = cfg.model_specs()?;
    let runs = if cfg.scenario == Scenario::Movielens { 1 } else { cfg.runs };
    let outcomes: Vec<Result<Vec<Vec<MetricRecord>>>> = (0..runs)
        .into_par_iter()
        .map(|rep| build_trace(cfg, rep).and_then(|trace| run_replication(cfg, &k, &trace)))
        .collect();
    let mut reps = Vec::with_capacity(runs);
    let mut first_err = None;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) if r.iter().flatten().all(MetricRecord::is_finite) => reps.push(r),
            Ok(_) => log::error!("replication {rep} produced non-finite metrics and was dropped"),
            Err(e) => {
                log::error!("replication {rep} aborted: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if reps.is_empty() {
        return Err(first_err.unwrap_or(Error::DegenerateState));
    }
    let failed = runs - reps.len();
    let n_slots = reps[0][0].len();
    let mut rows = Vec::with_capacity(specs.len() * n_slots * METRICS.len());
    let mut summary = Vec::with_capacity(specs.len() * METRICS.len());
    for (m, spec) in specs.iter().enumerate() {
        let name = spec.name();
        for slot in 0..n_slots {
            for metric in METRICS {
                let values: Vec<f64> = reps.iter().map(|r| metric_value(&r[m][slot], metric)).collect();
                let (value, stderr) = mean_stderr(&values);
                rows.push(MetricRow { model: name.clone(), slot: reps[0][m][slot].slot, metric, value, stderr });
            }
        }
        for metric in METRICS {
            let per_rep: Vec<f64> =
                reps.iter().map(|r| r[m].iter().map(|x| metric_value(x, metric)).sum::<f64>() / n_slots as f64).collect();
            let (mean, stderr) = mean_stderr(&per_rep);
            summary.push(SummaryRow { model: name.clone(), metric, mean, stderr });
        }
    }
    Ok(ExperimentResult { scenario: cfg.scenario, rows, summary, replications: reps.len(), failed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub model: String,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub scenario: Scenario,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<(f64, ExperimentResult)>,
}

impl SweepResult {
    /// Means of `metric` for `model` in axis order.
    pub fn series(&self, model: &str, metric: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.model == model && r.metric == metric).map(|r| (r.axis_value, r.mean)).collect()
    }
}

/// Configuration for one axis value.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let as_count = |field: &str| {
        if value.fract() != 0.0 || value < 1.0 {
            Err(config_err(field, format!("{value} is not a positive integer")))
        } else {
            Ok(value as usize)
        }
    };
    match axis {
        SweepAxis::None => {}
        SweepAxis::Tau => cfg.window = as_count("tau")?,
        SweepAxis::N => {
            cfg.n_files = as_count("n")?;
            if cfg.scenario == Scenario::Movielens {
                cfg.id_hi = cfg.id_lo + cfg.n_files as u32 - 1;
            }
        }
        SweepAxis::S => cfg.zipf_exponent = value,
    }
    cfg.sweep = SweepAxis::None;
    cfg.validate()?;
    Ok(cfg)
}

/// One experiment per axis value, all sharing the base seed.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    if axis == SweepAxis::None {
        return Err(config_err("sweep", "an axis is required"));
    }
    if values.is_empty() {
        return Err(config_err("sweep_values", "at least one value is required"));
    }
    let mut rows = Vec::new();
    let mut runs = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = apply_axis(base, axis, v)?;
        let result = run_experiment(&cfg)?;
        for s in &result.summary {
            rows.push(SweepRow { axis_value: v, model: s.model.clone(), metric: s.metric, mean: s.mean, stderr: s.stderr });
        }
        runs.push((v, result));
    }
    Ok(SweepResult { axis, scenario: base.scenario, rows, runs })
}

/// Nine significant digits in scientific notation.
pub fn format_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn metrics_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("scenario,model,slot,metric,value,stderr\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            result.scenario.name(),
            r.model,
            r.slot,
            r.metric,
            format_sig9(r.value),
            format_sig9(r.stderr)
        );
    }
    out
}

pub fn summary_text(result: &ExperimentResult) -> String {
    let mut out = format!(
        "scenario {}: {} replications ({} failed)\n",
        result.scenario.name(),
        result.replications,
        result.failed
    );
    let width = result.summary.iter().map(|r| r.model.len()).max().unwrap_or(0);
    for metric in METRICS {
        let _ = writeln!(out, "\n{metric}");
        for r in result.summary.iter().filter(|r| r.metric == metric) {
            let _ = writeln!(out, "  {:<width$}  {} ± {}", r.model, format_sig9(r.mean), format_sig9(r.stderr));
        }
    }
    out
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let axis = match result.axis {
        SweepAxis::Tau => "tau",
        SweepAxis::N => "n",
        SweepAxis::S => "s",
        SweepAxis::None => "none",
    };
    let mut out = String::from("axis,axis_value,scenario,model,metric,value,stderr\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{axis},{},{},{},{},{},{}",
            r.axis_value,
            result.scenario.name(),
            r.model,
            r.metric,
            format_sig9(r.mean),
            format_sig9(r.stderr)
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Writes `metrics.csv`, `summary.txt` and one SVG chart per metric.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_dir(dir)?;
    let mut written = vec![dir.join("metrics.csv"), dir.join("summary.txt")];
    write_file(&written[0], &metrics_csv(result))?;
    write_file(&written[1], &summary_text(result))?;
    let mut models: Vec<&str> = result.rows.iter().map(|r| r.model.as_str()).collect();
    models.dedup();
    for metric in METRICS {
        let series: Vec<(String, Vec<(f64, f64)>)> = models
            .iter()
            .map(|m| {
                let pts = result.rows.iter().filter(|r| r.model == *m && r.metric == metric).map(|r| (r.slot as f64, r.value)).collect();
                (m.to_string(), pts)
            })
            .collect();
        let path = dir.join(format!("{metric}.svg"));
        crate::chart::line_chart(&path, &format!("{} ({})", metric, result.scenario.name()), "slot", metric, &series)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `sweep.csv`, the per-value summaries and one SVG chart per metric.
pub fn emit_sweep_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_dir(dir)?;
    let mut written = vec![dir.join("sweep.csv")];
    write_file(&written[0], &sweep_csv(result))?;
    let mut summary = String::new();
    for (v, r) in &result.runs {
        let _ = writeln!(summary, "== axis value {v} ==\n{}", summary_text(r));
    }
    written.push(dir.join("summary.txt"));
    write_file(&written[1], &summary)?;
    let mut models: Vec<&str> = result.rows.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let axis = format!("{:?}", result.axis).to_lowercase();
    for metric in METRICS {
        let series: Vec<(String, Vec<(f64, f64)>)> =
            models.iter().map(|m| (m.to_string(), result.series(m, metric))).collect();
        let path = dir.join(format!("sweep_{metric}.svg"));
        crate::chart::line_chart(&path, &format!("{metric} vs {axis}"), &axis, metric, &series)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig { scenario, runs: 2, slots: 5, n_blocks: 1, block_len: 20, ..ExperimentConfig::default() }
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.n_files, cfg.cache_size, cfg.order, cfg.window), (3, 2, 4, 10));
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn config_errors_name_the_field() {
        match ExperimentConfig::from_toml("window = 3") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "window"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Config { .. })));
        assert!(matches!(ExperimentConfig::from_toml("models = [\"OP-XYZ\"]"), Err(Error::Config { .. })));
    }

    #[test]
    fn model_names_parse_back() {
        for spec in ModelSpec::all() {
            assert_eq!(spec.name().parse::<ModelSpec>().unwrap(), spec);
        }
        assert_eq!("kwik-asppm".parse::<ModelSpec>().unwrap(), ModelSpec::new(Family::Kwik, OpModel::AspPm));
    }

    #[test]
    fn constant_stream_is_a_fixed_point() {
        let cfg = ExperimentConfig { runs: 1, ..small(Scenario::TimeVarying) };
        let k = compute_constants(&cfg.network(), DEFAULT_QUAD_TOL).unwrap();
        let p = crate::domain::zipf_pmf(ZipfSpec::new(3, 1.5).unwrap());
        let counts: Vec<u64> = p.as_slice().iter().map(|v| (v * 1e6).round() as u64).collect();
        let q = normalize_column(&counts).unwrap();
        let trace = Trace { profiles: vec![q; 60], counts: vec![counts; 60], n_max: 1_000_000 };
        let records = run_replication(&cfg, &k, &trace).unwrap();
        for (spec, recs) in cfg.model_specs().unwrap().iter().zip(&records) {
            if spec.family == Family::Ol && spec.model == OpModel::Gpm {
                // the uniform initial direction decays like 1/t
                assert!(recs.windows(2).all(|w| w[1].mse <= w[0].mse));
                assert!(recs.last().unwrap().mse < 1e-3);
                continue;
            }
            for r in recs.iter().skip(1) {
                assert!(r.mse < 1e-9, "{} slot {}: mse {}", spec.name(), r.slot, r.mse);
                assert!(r.asp_diff.abs() < 1e-6 && r.asp_diff_true_eval.abs() < 1e-6, "{}: {r:?}", spec.name());
            }
        }
    }

    #[test]
    fn csv_row_count_matches_schema() {
        let cfg = ExperimentConfig { models: vec!["OP-PPM".into(), "OL-PPM".into()], ..small(Scenario::TimeVarying) };
        let result = run_experiment(&cfg).unwrap();
        let csv = metrics_csv(&result);
        assert_eq!(csv.lines().count(), 1 + cfg.slots * 2 * METRICS.len());
        for r in &result.rows {
            if r.metric == "asp_diff_true_eval" {
                assert!(r.value >= -1e-9);
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(Scenario::Quasi);
        assert_eq!(metrics_csv(&run_experiment(&cfg).unwrap()), metrics_csv(&run_experiment(&cfg).unwrap()));
    }

    #[test]
    fn single_value_sweep_matches_experiment() {
        let cfg = ExperimentConfig { models: vec!["OP-GPM".into()], ..small(Scenario::TimeVarying) };
        let sweep = run_sweep(&cfg, SweepAxis::Tau, &[10.0]).unwrap();
        assert_eq!(sweep.runs[0].1, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn empty_table_is_rejected() {
        let empty = ExperimentResult { scenario: Scenario::Quasi, rows: vec![], summary: vec![], replications: 0, failed: 0 };
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_outputs(&empty, dir.path()), Err(Error::EmptyDataset));
    }
}
