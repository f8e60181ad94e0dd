//! Configuration-driven Monte-Carlo campaigns.
//!
//! A campaign runs one method on one problem family over `mc_trials`
//! independent trials. Each trial draws a fresh random graph, fresh problem
//! data and a fresh starting point from streams derived from
//! `(master_seed, trial, purpose)`, runs the method, and writes
//! `trial_XX.csv`. The campaign then writes `summary.json` with the resolved
//! configuration, per-trial outcomes and running-best envelopes.
//!
//! # Configuration format
//!
//! One `key = value` per line; `#` starts a comment. Unknown keys are errors.
//! Only `problem` is required; per-problem defaults for `m_fac`,
//! `alpha_base`, `k_max` and `decay` come from the benchmark table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algo::{self, AgentState, Observer, RunConfig, RunResult, ScheduleParams, StepView, StopReason};
use crate::baselines::{self, BaselineConfig, BaselineRun, Method};
use crate::data::{load_libsvm, synthetic_binary, Dataset};
use crate::graph::{generate_er_graph_capped, metropolis_weights, Graph, MixingMatrix, DEFAULT_RESAMPLE_CAP};
use crate::linalg::{lambda_min, mean_matrices, mean_vectors, Vector};
use crate::metrics::{self, compute_reference, ReferenceOptions, ReferenceValue, RunOutcome, StageBytes};
use crate::objectives::{build_suite, ObjectiveKind, ObjectiveParams, ObjectiveSuite};
use crate::seed::{derive_seed, rng_from_seed};
use crate::variants::{AdaParams, Compression, Family, VariantConfig};
use crate::{Error, Result};

/// Success thresholds reported in every summary.
pub const SUCCESS_LEVELS: [f64; 3] = [1e-3, 1e-6, 1e-9];

pub const SUMMARY_SCHEMA: &str = "disgrem-summary v1";

/// Per-problem `(m_fac, alpha_base, k_max, decay)`.
pub fn table_defaults(kind: ObjectiveKind) -> (f64, f64, usize, bool) {
    match kind {
        ObjectiveKind::Ridge => (0.1, 0.20, 200, false),
        ObjectiveKind::QuadBad => (0.1, 0.10, 1500, false),
        ObjectiveKind::LogSumExp => (5.0, 0.30, 400, false),
        ObjectiveKind::Huber => (1.5, 0.30, 800, false),
        ObjectiveKind::LogRegReal => (3.0, 1.00, 600, false),
        ObjectiveKind::LinLog => (1.0, 0.20, 1500, false),
        ObjectiveKind::Rosenbrock => (3.0, 0.10, 300, true),
        ObjectiveKind::Styblinski => (15.0, 0.05, 100, true),
        ObjectiveKind::LogRegNcvr => (3.0, 1.00, 1000, true),
    }
}

/// Which algorithm a campaign runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Family(Family),
    Baseline(Method),
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Family(fam) => fam.fmt(f),
            MethodSpec::Baseline(m) => m.fmt(f),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(m) = s.parse::<Method>() {
            return Ok(MethodSpec::Baseline(m));
        }
        s.parse::<Family>().map(MethodSpec::Family).map_err(|_| {
            Error::InvalidParameter(format!(
                "unknown method `{s}` (expected disgrem, cedisgrem, adadisgrem, ceadadisgrem, extra or diging)"
            ))
        })
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionKind {
    None,
    TopK,
    LowRank,
}

/// Whether agents start from one shared point or from independent draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Shared,
    PerAgent,
}

/// Fully resolved experiment configuration; serialized verbatim into every
/// summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ObjectiveKind,
    pub method: MethodSpec,
    pub m_fac: f64,
    pub alpha_base: f64,
    pub k_max: usize,
    pub decay: bool,
    pub combo_tol: f64,
    pub n_agents: usize,
    /// Dimension of synthetic problems; logistic kinds use the dataset's.
    pub d: usize,
    pub p_er: f64,
    pub resample_cap: usize,
    pub schedule: ScheduleParams,
    pub compression: CompressionKind,
    pub topk_fraction: f64,
    pub lowrank_rank: usize,
    pub k_lazy: usize,
    pub depth_coupling: bool,
    pub ada: AdaParams,
    pub mc_trials: usize,
    pub master_seed: u64,
    /// Worker threads for trial-level parallelism; 0 uses all cores.
    pub threads: usize,
    pub dataset_path: Option<PathBuf>,
    /// Shape of the synthetic stand-in used when no dataset file is given.
    pub synthetic_samples: usize,
    pub synthetic_dim: usize,
    pub output_dir: Option<PathBuf>,
    pub init_radius: f64,
    /// Every coordinate of the reference initialization.
    pub init_center: f64,
    pub init_mode: InitMode,
    pub reference_restarts: usize,
    pub reference_scale: f64,
    pub objective: ObjectiveParams,
}

impl ExperimentConfig {
    /// Defaults for `problem`, running the plain method.
    pub fn new(problem: ObjectiveKind) -> Self {
        let (m_fac, alpha_base, k_max, decay) = table_defaults(problem);
        Self {
            problem,
            method: MethodSpec::Family(Family::Fixed),
            m_fac,
            alpha_base,
            k_max,
            decay,
            combo_tol: 1e-12,
            n_agents: 10,
            d: 30,
            p_er: 0.5,
            resample_cap: DEFAULT_RESAMPLE_CAP,
            schedule: ScheduleParams::default(),
            compression: CompressionKind::TopK,
            topk_fraction: 0.1,
            lowrank_rank: 3,
            k_lazy: 1,
            depth_coupling: true,
            ada: AdaParams::default(),
            mc_trials: 20,
            master_seed: 0,
            threads: 0,
            dataset_path: None,
            synthetic_samples: 1243,
            synthetic_dim: 22,
            output_dir: None,
            init_radius: 1.0,
            init_center: -2.0,
            init_mode: InitMode::Shared,
            reference_restarts: 50,
            reference_scale: 2.0,
            objective: ObjectiveParams::default(),
        }
    }

    /// Parses the config text, then applies `overrides` (each `key=value`).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.clone(), "override must look like `key=value`"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let problem = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "problem")
            .ok_or_else(|| Error::config("problem", "missing required key"))?;
        let kind: ObjectiveKind = problem.1.parse().map_err(|e: Error| Error::config("problem", e.to_string()))?;
        let mut cfg = Self::new(kind);
        for (k, v) in &pairs {
            if k != "problem" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let Some(p) = &cfg.dataset_path {
            if p.is_relative() {
                cfg.dataset_path = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(cfg)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
            }
        }
        let op = &mut self.objective;
        match key {
            "problem" => self.problem = num(key, value)?,
            "method" => self.method = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "m_fac" => self.m_fac = num(key, value)?,
            "alpha_base" => self.alpha_base = num(key, value)?,
            "k_max" => self.k_max = num(key, value)?,
            "decay" => self.decay = flag(key, value)?,
            "combo_tol" => self.combo_tol = num(key, value)?,
            "n_agents" => self.n_agents = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "p_er" => self.p_er = num(key, value)?,
            "resample_cap" => self.resample_cap = num(key, value)?,
            "schedule_p" => self.schedule.p = num(key, value)?,
            "schedule_c_mix" => self.schedule.c_mix = num(key, value)?,
            "schedule_cap" => {
                self.schedule.depth_cap = match value {
                    "none" | "uncapped" => None,
                    v => Some(num(key, v)?),
                }
            }
            "hess_premix_cap_full" => self.schedule.hess_premix_cap_full = num(key, value)?,
            "hess_premix_cap_compressed" => self.schedule.hess_premix_cap_compressed = num(key, value)?,
            "compression" => {
                self.compression = match value {
                    "none" => CompressionKind::None,
                    "topk" => CompressionKind::TopK,
                    "lowrank" => CompressionKind::LowRank,
                    v => return Err(Error::config(key, format!("expected none, topk or lowrank, got `{v}`"))),
                }
            }
            "topk_fraction" => self.topk_fraction = num(key, value)?,
            "lowrank_rank" => self.lowrank_rank = num(key, value)?,
            "k_lazy" => self.k_lazy = num(key, value)?,
            "depth_coupling" => self.depth_coupling = flag(key, value)?,
            "ada_gamma" => self.ada.gamma = num(key, value)?,
            "ada_zeta" => self.ada.zeta = num(key, value)?,
            "ada_eta_c" => self.ada.eta_c = num(key, value)?,
            "ada_m0_fac" => {
                self.ada.m0_fac = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "mc_trials" => self.mc_trials = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "dataset_path" => self.dataset_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "synthetic_samples" => self.synthetic_samples = num(key, value)?,
            "synthetic_dim" => self.synthetic_dim = num(key, value)?,
            "output_dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "init_radius" => self.init_radius = num(key, value)?,
            "init_center" => self.init_center = num(key, value)?,
            "init_mode" => {
                self.init_mode = match value {
                    "shared" => InitMode::Shared,
                    "per_agent" | "per-agent" => InitMode::PerAgent,
                    v => return Err(Error::config(key, format!("expected shared or per_agent, got `{v}`"))),
                }
            }
            "reference_restarts" => self.reference_restarts = num(key, value)?,
            "reference_scale" => self.reference_scale = num(key, value)?,
            "ridge_rows" => op.ridge_rows = num(key, value)?,
            "ridge_lambda" => op.ridge_lambda = num(key, value)?,
            "ridge_noise" => op.ridge_noise = num(key, value)?,
            "quad_kappa" => op.quad_kappa = num(key, value)?,
            "lse_sigma" => op.lse_sigma = num(key, value)?,
            "huber_rows" => op.huber_rows = num(key, value)?,
            "huber_delta" => op.huber_delta = num(key, value)?,
            "logreg_iota" => op.logreg_iota = num(key, value)?,
            "ncvr_alpha" => op.ncvr_alpha = num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        positive("m_fac", self.m_fac)?;
        positive("combo_tol", self.combo_tol)?;
        if !(self.alpha_base >= 0.0) {
            return Err(Error::config("alpha_base", "must be non-negative"));
        }
        if self.mc_trials == 0 {
            return Err(Error::config("mc_trials", "must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(Error::config("k_max", "must be at least 1"));
        }
        if self.n_agents == 0 {
            return Err(Error::config("n_agents", "must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_er) {
            return Err(Error::config("p_er", "must be in [0, 1]"));
        }
        if !(self.init_radius >= 0.0) || !self.init_center.is_finite() {
            return Err(Error::config("init_radius", "radius must be non-negative and the center finite"));
        }
        self.schedule.validate().map_err(|e| Error::config("schedule_*", e.to_string()))?;
        if let MethodSpec::Family(fam) = self.method {
            if !fam.is_ce() && (self.k_lazy != 1) {
                return Err(Error::config("k_lazy", format!("lazy updates need a compressed family, not {fam}")));
            }
            let d = if self.problem.needs_dataset() { self.synthetic_dim.max(1) } else { self.d };
            self.variant().validate(d.max(self.lowrank_rank)).map_err(|e| Error::config("variant", e.to_string()))?;
        }
        if let Some(p) = &self.dataset_path {
            if !p.exists() {
                return Err(Error::config("dataset_path", format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Variant settings for the algorithm families. Exact-Hessian families
    /// ignore the compression keys.
    pub fn variant(&self) -> VariantConfig {
        let family = match self.method {
            MethodSpec::Family(f) => f,
            MethodSpec::Baseline(_) => Family::Fixed,
        };
        let compression = if family.is_ce() {
            match self.compression {
                CompressionKind::None => Compression::None,
                CompressionKind::TopK => Compression::TopK(self.topk_fraction),
                CompressionKind::LowRank => Compression::LowRank(self.lowrank_rank),
            }
        } else {
            Compression::None
        };
        VariantConfig {
            family,
            compression,
            k_lazy: self.k_lazy,
            ada: self.ada,
            depth_coupling: self.depth_coupling && family.is_ce(),
        }
    }

    /// Dataset for the logistic kinds: the configured file, or the synthetic
    /// stand-in drawn from the master seed.
    pub fn dataset(&self) -> Result<Option<Dataset>> {
        if !self.problem.needs_dataset() {
            return Ok(None);
        }
        match &self.dataset_path {
            Some(p) => load_libsvm(p).map(Some),
            None => synthetic_binary(self.synthetic_samples, self.synthetic_dim, derive_seed(self.master_seed, 0, "dataset"))
                .map(Some),
        }
    }

    /// Open-question resolutions that shape every run, echoed into summaries.
    pub fn decisions(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert(
            "graph_resampling",
            format!("disconnected draws are resampled from the same stream, at most {} samples", self.resample_cap),
        );
        m.insert(
            "ada_defaults",
            format!(
                "gamma={} zeta={} eta_c={} m0={}",
                self.ada.gamma,
                self.ada.zeta,
                self.ada.eta_c,
                self.ada.m0_fac.map_or("m_fac*H_max0".to_string(), |m| format!("{m}*H_max0"))
            ),
        );
        m.insert(
            "topk_encoding",
            "upper-triangle (row u32, col u32, value f64) triples, 16 bytes each; ties by (row, col)".into(),
        );
        m.insert("lowrank_encoding", "r eigenpairs, r(d+1) f64".into());
        m.insert(
            "depth_coupling",
            "topk fraction = base*min(1, depth/cap); k_lazy halved once depth reaches cap".into(),
        );
        m.insert(
            "lazy_increment",
            "skipped iterations keep H = H~; the next update sends the Hessian change since the last update".into(),
        );
        m.insert(
            "initialization",
            format!(
                "uniform in a ball of radius {} around {}*ones ({:?})",
                self.init_radius, self.init_center, self.init_mode
            ),
        );
        m.insert("extra_splitting", "W~ = (I + W)/2; decay enters as a_k*grad^k - a_(k-1)*grad^(k-1)".into());
        m.insert(
            "reference",
            format!(
                "convex: centralized damped Newton from the reference initialization; nonconvex: best of {} damped-Newton restarts",
                self.reference_restarts
            ),
        );
        if self.problem.needs_dataset() && self.dataset_path.is_none() {
            m.insert(
                "dataset",
                format!(
                    "synthetic logistic stand-in, {} samples x {} features",
                    self.synthetic_samples, self.synthetic_dim
                ),
            );
        }
        m
    }

    /// Output directory, defaulting to `<problem>_<method>`.
    pub fn out_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(format!("{}_{}", self.problem, self.method)))
    }

    /// Fields that determine problem instances and reference values.
    fn reference_fingerprint(&self) -> String {
        serde_json::json!({
            "problem": self.problem,
            "n_agents": self.n_agents,
            "d": self.d,
            "master_seed": self.master_seed,
            "dataset_path": self.dataset_path,
            "synthetic": [self.synthetic_samples, self.synthetic_dim],
            "objective": self.objective,
            "init_center": self.init_center,
            "reference": [self.reference_restarts as f64, self.reference_scale],
        })
        .to_string()
    }
}

/// Uniform sample from the ball of radius `r` around `center`.
pub fn sample_ball(center: &Vector, r: f64, rng: &mut crate::seed::Rng) -> Vector {
    let d = center.len();
    let z = Vector::from_fn(d, |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
    let n = z.norm();
    let u: f64 = rng.random();
    if n == 0.0 {
        return center.clone();
    }
    center + z * (r * u.powf(1.0 / d as f64) / n)
}

/// Everything one trial needs before the method runs.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub trial: usize,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub suite: ObjectiveSuite,
    pub x0: Vec<Vector>,
    /// The reference initialization the starting points are drawn around.
    pub center: Vector,
}

pub fn setup_trial(cfg: &ExperimentConfig, dataset: Option<&Dataset>, trial: usize) -> Result<TrialSetup> {
    let t = trial as u64;
    let graph = generate_er_graph_capped(cfg.n_agents, cfg.p_er, derive_seed(cfg.master_seed, t, "graph"), cfg.resample_cap)?;
    let w = metropolis_weights(&graph)?;
    let suite = build_suite(
        cfg.problem,
        cfg.n_agents,
        cfg.d,
        derive_seed(cfg.master_seed, t, "data"),
        &cfg.objective,
        dataset,
    )?;
    let d = suite.dim();
    let center = Vector::from_element(d, cfg.init_center);
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, t, "init"));
    let x0 = match cfg.init_mode {
        InitMode::Shared => vec![sample_ball(&center, cfg.init_radius, &mut rng); cfg.n_agents],
        InitMode::PerAgent => (0..cfg.n_agents).map(|_| sample_ball(&center, cfg.init_radius, &mut rng)).collect(),
    };
    Ok(TrialSetup { trial, graph, w, suite, x0, center })
}

pub fn trial_reference(cfg: &ExperimentConfig, setup: &TrialSetup) -> Result<ReferenceValue> {
    let opts = ReferenceOptions {
        restarts: cfg.reference_restarts,
        seed: derive_seed(cfg.master_seed, setup.trial as u64, "reference"),
        restart_scale: cfg.reference_scale,
        ..ReferenceOptions::default()
    };
    compute_reference(&setup.suite, &setup.center, &opts)
}

/// Runs the configured method on a prepared trial.
pub fn run_trial(cfg: &ExperimentConfig, setup: &TrialSetup, f_ref: Option<f64>) -> Result<RunResult> {
    run_trial_observed(cfg, setup, f_ref, &mut ())
}

pub fn run_trial_observed(
    cfg: &ExperimentConfig,
    setup: &TrialSetup,
    f_ref: Option<f64>,
    obs: &mut dyn Observer,
) -> Result<RunResult> {
    match cfg.method {
        MethodSpec::Family(_) => {
            let rc = RunConfig {
                suite: &setup.suite,
                w: &setup.w,
                variant: cfg.variant(),
                schedule: cfg.schedule,
                m_fac: cfg.m_fac,
                k_max: cfg.k_max,
                combo_tol: cfg.combo_tol,
                x0: setup.x0.clone(),
                f_ref,
            };
            algo::run_with_observer(&rc, obs)
        }
        MethodSpec::Baseline(method) => baselines::run_baseline(&BaselineRun {
            suite: &setup.suite,
            w: &setup.w,
            cfg: BaselineConfig { method, alpha_base: cfg.alpha_base, decay: cfg.decay },
            k_max: cfg.k_max,
            combo_tol: cfg.combo_tol,
            x0: setup.x0.clone(),
            f_ref,
        }),
    }
}

/// Terminal facts of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub rho: f64,
    pub edges: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub min_rel_f: f64,
    pub min_combo: f64,
    pub final_combo: f64,
    pub f_ref: f64,
    pub reference_certified: bool,
    pub h_max0: f64,
    /// `M` for the algorithm families, `α` for baselines.
    pub scale: f64,
    pub compression_fallbacks: usize,
    pub bytes: StageBytes,
    pub bytes_total: u64,
}

impl RunOutcome for TrialSummary {
    fn min_rel_f(&self) -> f64 {
        self.min_rel_f
    }

    fn diverged(&self) -> bool {
        self.stop == StopReason::Diverged
    }
}

/// Median and interquartile range of a running-best metric per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema: String,
    pub config: ExperimentConfig,
    pub decisions: BTreeMap<String, String>,
    pub trials: Vec<TrialSummary>,
    pub diverged: usize,
    /// Keyed by threshold, e.g. `"1e-6"`.
    pub success: BTreeMap<String, f64>,
    pub median_iterations: Option<f64>,
    pub median_min_rel_f: Option<f64>,
    pub median_bytes: Option<f64>,
    /// Running-best relF over completed trials, iteration by iteration.
    pub rel_f: Envelope,
    /// Running-best combo over completed trials.
    pub combo: Envelope,
}

/// Outcome of one trial including its records, before aggregation.
pub struct TrialOutput {
    pub summary: TrialSummary,
    pub result: RunResult,
}

fn execute_trial(
    cfg: &ExperimentConfig,
    dataset: Option<&Dataset>,
    trial: usize,
    cached: Option<&ReferenceValue>,
) -> Result<(TrialOutput, ReferenceValue)> {
    let setup = setup_trial(cfg, dataset, trial)?;
    let reference = match cached {
        Some(r) => r.clone(),
        None => trial_reference(cfg, &setup)?,
    };
    let result = run_trial(cfg, &setup, Some(reference.f_ref))?;
    let mut min_combo = f64::INFINITY;
    for r in &result.records {
        min_combo = min_combo.min(r.combo);
    }
    let last = result.records.last().expect("a run records its start");
    let summary = TrialSummary {
        trial,
        rho: setup.w.rho(),
        edges: setup.graph.edges().len(),
        iterations: result.iterations(),
        stop: result.stop,
        min_rel_f: last.rel_f_min,
        min_combo,
        final_combo: last.combo,
        f_ref: reference.f_ref,
        reference_certified: reference.certified,
        h_max0: result.h_max0,
        scale: result.m,
        compression_fallbacks: result.compression_fallbacks,
        bytes: last.bytes,
        bytes_total: last.bytes.total(),
    };
    Ok((TrialOutput { summary, result }, reference))
}

fn par_map<T: Send, F>(cfg: &ExperimentConfig, n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let work = || (0..n).into_par_iter().map(&f).collect();
        if cfg.threads > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
                return pool.install(work);
            }
        }
        work()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = cfg;
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReferenceCache {
    fingerprint: String,
    values: BTreeMap<usize, ReferenceValue>,
}

const REFERENCE_FILE: &str = "references.json";

fn load_reference_cache(cfg: &ExperimentConfig, dir: &Path) -> BTreeMap<usize, ReferenceValue> {
    let Ok(text) = fs::read_to_string(dir.join(REFERENCE_FILE)) else {
        return BTreeMap::new();
    };
    match serde_json::from_str::<ReferenceCache>(&text) {
        Ok(c) if c.fingerprint == cfg.reference_fingerprint() => c.values,
        _ => BTreeMap::new(),
    }
}

fn store_reference_cache(cfg: &ExperimentConfig, dir: &Path, values: BTreeMap<usize, ReferenceValue>) -> Result<()> {
    let cache = ReferenceCache { fingerprint: cfg.reference_fingerprint(), values };
    fs::write(dir.join(REFERENCE_FILE), serde_json::to_string_pretty(&cache)?)?;
    Ok(())
}

/// Computes (or loads) the reference value of every trial and caches them in
/// `out_dir/references.json`.
pub fn compute_references(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ReferenceValue>> {
    fs::create_dir_all(out_dir)?;
    let dataset = cfg.dataset()?;
    let mut cache = load_reference_cache(cfg, out_dir);
    let missing: Vec<usize> = (0..cfg.mc_trials).filter(|t| !cache.contains_key(t)).collect();
    let fresh = par_map(cfg, missing.len(), |i| {
        let setup = setup_trial(cfg, dataset.as_ref(), missing[i])?;
        trial_reference(cfg, &setup)
    });
    for (t, r) in missing.iter().zip(fresh) {
        cache.insert(*t, r?);
    }
    let out = (0..cfg.mc_trials).map(|t| cache[&t].clone()).collect();
    store_reference_cache(cfg, out_dir, cache)?;
    Ok(out)
}

/// Runs every trial and returns their outputs in trial order, without
/// touching the file system.
pub fn run_trials(cfg: &ExperimentConfig, references: Option<&BTreeMap<usize, ReferenceValue>>) -> Result<Vec<(TrialOutput, ReferenceValue)>> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    par_map(cfg, cfg.mc_trials, |t| execute_trial(cfg, dataset.as_ref(), t, references.and_then(|r| r.get(&t))))
        .into_iter()
        .collect()
}

/// Runs the campaign, writing `trial_XX.csv` and `summary.json` under the
/// output directory.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignSummary> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    let cache = load_reference_cache(cfg, &dir);
    let outputs = run_trials(cfg, Some(&cache))?;
    let mut refs = cache;
    for (out, r) in &outputs {
        let path = dir.join(format!("trial_{:02}.csv", out.summary.trial));
        let file = std::io::BufWriter::new(fs::File::create(path)?);
        metrics::write_csv(file, &out.result.records)?;
        refs.insert(out.summary.trial, r.clone());
    }
    store_reference_cache(cfg, &dir, refs)?;
    let outs: Vec<TrialOutput> = outputs.into_iter().map(|(o, _)| o).collect();
    let summary = summarize(cfg, &outs);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// `"1e-6"`-style key for a threshold.
pub fn level_key(eps: f64) -> String {
    format!("{eps:e}")
}

/// Aggregates trial outputs. Medians and envelopes use completed
/// (non-diverged) trials; divergences are counted separately.
pub fn summarize(cfg: &ExperimentConfig, outs: &[TrialOutput]) -> CampaignSummary {
    let trials: Vec<TrialSummary> = outs.iter().map(|o| o.summary.clone()).collect();
    let completed: Vec<&TrialOutput> = outs.iter().filter(|o| !o.summary.diverged()).collect();
    let success = SUCCESS_LEVELS.iter().map(|&e| (level_key(e), metrics::success_rate(&trials, e))).collect();
    let col = |f: &dyn Fn(&TrialSummary) -> f64| -> Option<f64> {
        metrics::median(&completed.iter().map(|o| f(&o.summary)).collect::<Vec<_>>())
    };
    let k_len = completed.iter().map(|o| o.result.records.len()).max().unwrap_or(0);
    let envelope = |pick: &dyn Fn(&RunResult, usize) -> f64| -> Envelope {
        let mut env = Envelope::default();
        for k in 0..k_len {
            let vals: Vec<f64> = completed.iter().map(|o| pick(&o.result, k)).collect();
            env.median.push(metrics::median(&vals).unwrap_or(f64::NAN));
            env.q25.push(metrics::quantile(&vals, 0.25).unwrap_or(f64::NAN));
            env.q75.push(metrics::quantile(&vals, 0.75).unwrap_or(f64::NAN));
        }
        env
    };
    let best_combo: Vec<Vec<f64>> = completed
        .iter()
        .map(|o| {
            let mut best = f64::INFINITY;
            o.result.records.iter().map(|r| {
                best = best.min(r.combo);
                best
            })
            .collect()
        })
        .collect();
    let rel_f = envelope(&|r, k| r.records[k.min(r.records.len() - 1)].rel_f_min);
    let mut combo = Envelope::default();
    for k in 0..k_len {
        let vals: Vec<f64> = best_combo.iter().map(|c| c[k.min(c.len() - 1)]).collect();
        combo.median.push(metrics::median(&vals).unwrap_or(f64::NAN));
        combo.q25.push(metrics::quantile(&vals, 0.25).unwrap_or(f64::NAN));
        combo.q75.push(metrics::quantile(&vals, 0.75).unwrap_or(f64::NAN));
    }
    CampaignSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        config: cfg.clone(),
        decisions: cfg.decisions().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        diverged: trials.iter().filter(|t| t.diverged()).count(),
        success,
        median_iterations: col(&|t| t.iterations as f64),
        median_min_rel_f: col(&|t| t.min_rel_f),
        median_bytes: col(&|t| t.bytes_total as f64),
        trials,
        rel_f,
        combo,
    }
}

/// Outcome of one candidate in a baseline step-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCandidate {
    pub alpha_base: f64,
    pub median_min_rel_f: f64,
    pub diverged: usize,
}

/// Preliminary-run step-size selection for the first-order baselines: each
/// candidate `alpha_base` runs on the first `trials` trials and the one with
/// the smallest median running-best relF wins (divergent runs count as
/// `+∞`). Returns the candidates in input order and the index of the winner.
pub fn select_alpha(cfg: &ExperimentConfig, candidates: &[f64], trials: usize) -> Result<(Vec<AlphaCandidate>, usize)> {
    if !matches!(cfg.method, MethodSpec::Baseline(_)) {
        return Err(Error::config("method", "step-size selection applies to extra and diging only"));
    }
    if candidates.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("need at least one candidate and one trial".into()));
    }
    let mut out = Vec::with_capacity(candidates.len());
    for &alpha_base in candidates {
        let c = ExperimentConfig { alpha_base, mc_trials: trials, ..cfg.clone() };
        let runs = run_trials(&c, None)?;
        let vals: Vec<f64> = runs
            .iter()
            .map(|(o, _)| if o.summary.diverged() { f64::INFINITY } else { o.summary.min_rel_f })
            .collect();
        out.push(AlphaCandidate {
            alpha_base,
            median_min_rel_f: metrics::median(&vals).filter(|m| !m.is_nan()).unwrap_or(f64::INFINITY),
            diverged: runs.iter().filter(|(o, _)| o.summary.diverged()).count(),
        });
    }
    let best = (0..out.len())
        .min_by(|&a, &b| out[a].median_min_rel_f.total_cmp(&out[b].median_min_rel_f))
        .unwrap_or(0);
    Ok((out, best))
}

// ---------------------------------------------------------------------------
// Profiles

/// Cost of one solver on one problem instance at a fixed accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveCost {
    /// First iteration with running-best relF `≤ ε`, if any.
    pub iterations: Option<usize>,
    /// Cumulative megabytes at that iteration.
    pub megabytes: Option<f64>,
}

/// Per-iteration trace of one trial as read back from its CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rel_f_min: Vec<f64>,
    pub bytes_total: Vec<u64>,
}

impl Trace {
    pub fn cost(&self, eps: f64) -> SolveCost {
        match self.rel_f_min.iter().position(|&v| v <= eps) {
            Some(k) => SolveCost { iterations: Some(k), megabytes: Some(self.bytes_total[k] as f64 / 1e6) },
            None => SolveCost { iterations: None, megabytes: None },
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidParameter(format!("{}: missing column `{name}`", path.display())))
    };
    let (ir, ib) = (idx("rel_f_min")?, idx("bytes_total")?);
    let mut trace = Trace { rel_f_min: Vec::new(), bytes_total: Vec::new() };
    for row in rdr.records() {
        let row = row?;
        let bad = |c: usize| Error::InvalidParameter(format!("{}: bad value `{}`", path.display(), &row[c]));
        trace.rel_f_min.push(row[ir].parse().map_err(|_| bad(ir))?);
        trace.bytes_total.push(row[ib].parse().map_err(|_| bad(ib))?);
    }
    Ok(trace)
}

/// One campaign directory loaded for profiling.
#[derive(Debug, Clone)]
pub struct SolverRuns {
    pub label: String,
    pub problem: ObjectiveKind,
    /// Keyed by trial index.
    pub traces: BTreeMap<usize, Trace>,
    pub diverged: BTreeSet<usize>,
}

pub fn load_solver_runs(dir: &Path) -> Result<SolverRuns> {
    let summary: CampaignSummary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
    let mut traces = BTreeMap::new();
    let mut diverged = BTreeSet::new();
    for t in &summary.trials {
        traces.insert(t.trial, read_trace(&dir.join(format!("trial_{:02}.csv", t.trial)))?);
        if t.diverged() {
            diverged.insert(t.trial);
        }
    }
    Ok(SolverRuns { label: summary.config.method.to_string(), problem: summary.config.problem, traces, diverged })
}

/// Fraction of instances each solver solves, tabulated against a ratio
/// (performance profile) or an absolute budget (data profile).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub axis: Vec<f64>,
    /// `fractions[s][j]` for solver `s` at `axis[j]`.
    pub fractions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub eps: f64,
    pub solvers: Vec<String>,
    /// Instances as `problem#trial`.
    pub instances: Vec<String>,
    pub performance_iterations: ProfileCurve,
    pub performance_megabytes: ProfileCurve,
    pub data_iterations: ProfileCurve,
    pub data_megabytes: ProfileCurve,
}

fn geometric_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if !(hi > lo) || points < 2 {
        return vec![lo.max(hi)];
    }
    let r = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Builds performance and data profiles at accuracy `eps` from solver runs.
/// A diverged run never counts as solved.
pub fn build_profiles(runs: &[SolverRuns], eps: f64) -> ProfileTable {
    let mut labels: Vec<String> = Vec::new();
    for r in runs {
        let mut label = r.label.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{}#{n}", r.label);
            n += 1;
        }
        labels.push(label);
    }
    let instances: BTreeSet<(String, usize)> =
        runs.iter().flat_map(|r| r.traces.keys().map(move |&t| (r.problem.to_string(), t))).collect();
    let instances: Vec<(String, usize)> = instances.into_iter().collect();
    // costs[s][p] = (iterations, megabytes)
    let costs: Vec<Vec<(Option<f64>, Option<f64>)>> = runs
        .iter()
        .map(|r| {
            instances
                .iter()
                .map(|(prob, t)| {
                    if *prob != r.problem.to_string() || r.diverged.contains(t) {
                        return (None, None);
                    }
                    match r.traces.get(t) {
                        Some(tr) => {
                            let c = tr.cost(eps);
                            (c.iterations.map(|k| k as f64), c.megabytes)
                        }
                        None => (None, None),
                    }
                })
                .collect()
        })
        .collect();
    let np = instances.len().max(1) as f64;
    let perf = |pick: &dyn Fn(&(Option<f64>, Option<f64>)) -> Option<f64>| -> ProfileCurve {
        let mut ratios: Vec<Vec<Option<f64>>> = vec![Vec::new(); runs.len()];
        let mut max_ratio: f64 = 1.0;
        for p in 0..instances.len() {
            // iteration 0 solves trivially; shift by one so ratios stay finite
            let best = costs.iter().filter_map(|c| pick(&c[p])).fold(f64::INFINITY, f64::min);
            for (s, c) in costs.iter().enumerate() {
                let r = pick(&c[p]).map(|v| (v + 1.0) / (best + 1.0));
                if let Some(r) = r {
                    max_ratio = max_ratio.max(r);
                }
                ratios[s].push(r);
            }
        }
        let axis = geometric_axis(1.0, max_ratio.max(2.0), 16);
        let fractions = ratios
            .iter()
            .map(|rs| axis.iter().map(|&a| rs.iter().filter(|r| r.is_some_and(|r| r <= a * (1.0 + 1e-12))).count() as f64 / np).collect())
            .collect();
        ProfileCurve { axis, fractions }
    };
    let data = |pick: &dyn Fn(&(Option<f64>, Option<f64>)) -> Option<f64>| -> ProfileCurve {
        let vals: Vec<f64> = costs.iter().flatten().filter_map(pick).collect();
        let lo = vals.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        let mut axis = if lo.is_finite() { geometric_axis(lo, hi, 16) } else { vec![hi] };
        axis.insert(0, 0.0);
        axis.dedup();
        let fractions = costs
            .iter()
            .map(|c| axis.iter().map(|&b| c.iter().filter(|x| pick(x).is_some_and(|v| v <= b * (1.0 + 1e-12))).count() as f64 / np).collect())
            .collect();
        ProfileCurve { axis, fractions }
    };
    let it = |c: &(Option<f64>, Option<f64>)| c.0;
    let mb = |c: &(Option<f64>, Option<f64>)| c.1;
    ProfileTable {
        eps,
        solvers: labels,
        instances: instances.iter().map(|(p, t)| format!("{p}#{t}")).collect(),
        performance_iterations: perf(&it),
        performance_megabytes: perf(&mb),
        data_iterations: data(&it),
        data_megabytes: data(&mb),
    }
}

impl ProfileTable {
    /// Plain-text rendering: one block per profile, one column per solver.
    pub fn render(&self) -> String {
        let mut out = format!("# eps = {:e}, {} instances\n", self.eps, self.instances.len());
        let block = |out: &mut String, title: &str, axis_name: &str, c: &ProfileCurve| {
            out.push_str(&format!("\n## {title}\n{axis_name:>12}"));
            for s in &self.solvers {
                out.push_str(&format!(" {s:>14}"));
            }
            out.push('\n');
            for (j, a) in c.axis.iter().enumerate() {
                out.push_str(&format!("{a:>12.4}"));
                for f in &c.fractions {
                    out.push_str(&format!(" {:>14.3}", f[j]));
                }
                out.push('\n');
            }
        };
        block(&mut out, "performance profile (iterations)", "ratio", &self.performance_iterations);
        block(&mut out, "performance profile (MB)", "ratio", &self.performance_megabytes);
        block(&mut out, "data profile (iterations)", "budget", &self.data_iterations);
        block(&mut out, "data profile (MB)", "budget_mb", &self.data_megabytes);
        out
    }
}

// ---------------------------------------------------------------------------
// Invariant checks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed violation margin (or value), for the log.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Collects per-iteration invariant violations of the algorithm families.
#[derive(Debug, Default)]
pub struct InvariantObserver<'a> {
    suite: Option<&'a ObjectiveSuite>,
    /// Track the mean-gradient / mean-Hessian identities.
    pub exact_tracking: bool,
    pub grad_identity: f64,
    pub hess_identity: f64,
    pub step_bound: f64,
    pub step_radius: f64,
    pub well_posed: f64,
    pub symmetry: f64,
    pub negative: usize,
    pub steps: usize,
}

impl<'a> InvariantObserver<'a> {
    pub fn new(suite: &'a ObjectiveSuite, exact_tracking: bool) -> Self {
        Self { suite: Some(suite), exact_tracking, ..Self::default() }
    }
}

impl Observer for InvariantObserver<'_> {
    fn on_step(&mut self, v: &StepView<'_>) {
        for (st, &m) in v.states.iter().zip(v.m_eff) {
            self.steps += 1;
            if st.lambda < 0.0 || st.delta < 0.0 {
                self.negative += 1;
            }
            let sn = st.s.norm();
            self.step_bound = self.step_bound.max(m * sn - st.lambda);
            self.step_radius = self.step_radius.max(sn - (st.g_tilde.norm() / m).sqrt());
            if st.lambda > 0.0 {
                let mut a = crate::linalg::symmetrize(&st.h_tilde);
                for i in 0..a.nrows() {
                    a[(i, i)] += st.lambda + st.delta;
                }
                let lmin = lambda_min(&a).unwrap_or(f64::NEG_INFINITY);
                self.well_posed = self.well_posed.max(st.lambda - lmin);
            }
            let asym = (&st.h_tilde - st.h_tilde.transpose()).amax() / st.h_tilde.amax().max(1.0);
            self.symmetry = self.symmetry.max(asym);
        }
    }

    fn on_states(&mut self, _k: usize, states: &[AgentState]) {
        if !self.exact_tracking {
            return;
        }
        let Some(suite) = self.suite else { return };
        let mut gs = Vec::with_capacity(states.len());
        let mut hs = Vec::with_capacity(states.len());
        for (i, st) in states.iter().enumerate() {
            let Ok(e) = suite.local(i).value_grad_hess(&st.x) else { return };
            gs.push(e.grad);
            hs.push(e.hess);
        }
        let gbar = mean_vectors(&states.iter().map(|s| s.g.clone()).collect::<Vec<_>>());
        let hbar = mean_matrices(&states.iter().map(|s| s.h.clone()).collect::<Vec<_>>());
        let gerr = (&gbar - mean_vectors(&gs)).norm() / (1.0 + gbar.norm());
        let herr = (&hbar - mean_matrices(&hs)).norm() / (1.0 + hbar.norm());
        self.grad_identity = self.grad_identity.max(gerr);
        self.hess_identity = self.hess_identity.max(herr);
    }
}

/// Runs the invariant suite on the first trials of a configuration.
pub fn check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    let trials = cfg.mc_trials.min(3);
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, worst: f64, detail: String| {
        checks.push(CheckResult { name: name.to_string(), passed, worst, detail });
    };
    for t in 0..trials {
        let setup = setup_trial(cfg, dataset.as_ref(), t)?;
        let reference = trial_reference(cfg, &setup)?;
        let ws = setup.w.weights();
        let row_err = (0..ws.nrows()).map(|i| (ws.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
        push(&format!("trial {t}: mixing matrix doubly stochastic"), row_err <= 1e-12, row_err, format!("rho = {:.4}", setup.w.rho()));
        match cfg.method {
            MethodSpec::Family(fam) => {
                let exact = !fam.is_ce();
                let mut obs = InvariantObserver::new(&setup.suite, exact);
                let res = run_trial_observed(cfg, &setup, Some(reference.f_ref), &mut obs)?;
                if exact {
                    push(&format!("trial {t}: mean gradient tracks local gradients"), obs.grad_identity <= 1e-8, obs.grad_identity, "relative to 1 + |mean g|".into());
                    push(&format!("trial {t}: mean Hessian tracks local Hessians"), obs.hess_identity <= 1e-8, obs.hess_identity, "relative to 1 + |mean H|_F".into());
                }
                push(&format!("trial {t}: M|s| <= lambda"), obs.step_bound <= 1e-10, obs.step_bound, format!("{} agent-steps", obs.steps));
                push(&format!("trial {t}: |s| <= sqrt(|g~|/M)"), obs.step_radius <= 1e-10, obs.step_radius, String::new());
                push(&format!("trial {t}: solve matrix lambda_min >= lambda"), obs.well_posed <= 1e-8, obs.well_posed, String::new());
                push(&format!("trial {t}: lambda, delta >= 0"), obs.negative == 0, obs.negative as f64, String::new());
                push(&format!("trial {t}: H~ symmetric"), obs.symmetry <= 1e-10, obs.symmetry, String::new());
                push(&format!("trial {t}: run finished"), !res.diverged(), res.min_rel_f(), format!("{:?} after {} iterations", res.stop, res.iterations()));
            }
            MethodSpec::Baseline(method) => {
                let run = BaselineRun {
                    suite: &setup.suite,
                    w: &setup.w,
                    cfg: BaselineConfig { method, alpha_base: cfg.alpha_base, decay: cfg.decay },
                    k_max: cfg.k_max,
                    combo_tol: cfg.combo_tol,
                    x0: setup.x0.clone(),
                    f_ref: Some(reference.f_ref),
                };
                if method == Method::DIGing {
                    let mut worst: f64 = 0.0;
                    baselines::diging_run_observed(&run, &mut |_, x, y| {
                        let g: Vec<Vector> = x.iter().enumerate().filter_map(|(i, x)| setup.suite.local(i).gradient(x).ok()).collect();
                        if g.len() == x.len() {
                            let ybar = mean_vectors(y);
                            worst = worst.max((&ybar - mean_vectors(&g)).norm() / (1.0 + ybar.norm()));
                        }
                    })?;
                    push(&format!("trial {t}: DIGing tracker identity"), worst <= 1e-8, worst, String::new());
                }
                let res = baselines::run_baseline(&run)?;
                push(&format!("trial {t}: run finished"), true, res.min_rel_f(), format!("{:?} after {} iterations", res.stop, res.iterations()));
            }
        }
    }
    // determinism: the first trial twice, byte for byte
    let a = run_trials(&ExperimentConfig { mc_trials: 1, ..cfg.clone() }, None)?;
    let b = run_trials(&ExperimentConfig { mc_trials: 1, threads: 1, ..cfg.clone() }, None)?;
    let csv = |o: &TrialOutput| {
        let mut buf = Vec::new();
        metrics::write_csv(&mut buf, &o.result.records).map(|_| buf)
    };
    let same = csv(&a[0].0)? == csv(&b[0].0)?;
    checks.push(CheckResult {
        name: "trial 0: rerun is byte-identical".into(),
        passed: same,
        worst: 0.0,
        detail: String::new(),
    });
    Ok(CheckReport { checks })
}
