//! The decentralized gradient-regularized Newton iteration.
//!
//! Each outer iteration runs four synchronous stages:
//!
//! 1. **pre-mix** `(x, g, H)` over `τ_k` gossip rounds (the Hessian over at
//!    most a small fixed number of rounds);
//! 2. a **local step** `s = −(H̃ + (λ + δ)I)⁻¹ g̃` with `λ = √(M‖g̃‖)` and the
//!    eigenvalue shift `δ = max(0, −λ_min(H̃))`;
//! 3. **post-mix** the trial points `x̃ + s` over `t_k` rounds;
//! 4. **tracker updates** with local gradient and Hessian increments, mixed
//!    over `t_k` rounds.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::graph::{gossip, MixingMatrix};
use crate::linalg::{lambda_min, mean_vectors, symmetrize, Matrix, Vector};
use crate::metrics::{self, comm_bytes, HessianPayload, IterationRecord, RoundPlan, RunOutcome, StageBytes};
use crate::objectives::{h_max0, ObjectiveSuite};
use crate::variants::{adaptive_m_update, compress_increment, lazy_gate, AdaState, VariantConfig};
use crate::{Error, Result};

/// Local state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vector,
    /// Gradient tracker.
    pub g: Vector,
    /// Hessian tracker.
    pub h: Matrix,
    pub x_tilde: Vector,
    pub g_tilde: Vector,
    pub h_tilde: Matrix,
    /// Last local step.
    pub s: Vector,
    pub lambda: f64,
    pub delta: f64,
    /// `x` of the previous iteration.
    pub prev_x: Vector,
    /// `∇f_i(x)` at the current point.
    pub prev_grad: Vector,
    /// `∇²f_i` at the last point whose Hessian entered the tracker.
    pub prev_hess: Matrix,
    /// `∇²f_i(x)` at the current point.
    pub cur_hess: Matrix,
    /// `∇²f_i` at `prev_x`.
    pub prev_point_hess: Matrix,
    pub ada: Option<AdaState>,
}

impl AgentState {
    /// Tracker initialization `g = ∇f_i(x₀)`, `H = ∇²f_i(x₀)`.
    pub fn new(x0: Vector, grad: Vector, hess: Matrix) -> Self {
        let d = x0.len();
        Self {
            x_tilde: x0.clone(),
            g_tilde: grad.clone(),
            h_tilde: hess.clone(),
            prev_x: x0.clone(),
            x: x0,
            g: grad.clone(),
            h: hess.clone(),
            s: Vector::zeros(d),
            lambda: 0.0,
            delta: 0.0,
            prev_grad: grad,
            prev_hess: hess.clone(),
            prev_point_hess: hess.clone(),
            cur_hess: hess,
            ada: None,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.g.iter()).chain(self.h.iter()).all(|v| v.is_finite())
    }
}

/// Logarithmic mixing-depth schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub p: f64,
    pub c_mix: f64,
    /// `None` runs the uncapped schedule.
    pub depth_cap: Option<usize>,
    /// Hessian pre-mixing rounds for the exact-Hessian families.
    pub hess_premix_cap_full: usize,
    /// Hessian pre-mixing rounds for the compressed families.
    pub hess_premix_cap_compressed: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { p: 3.0, c_mix: 2.0, depth_cap: Some(10), hess_premix_cap_full: 3, hess_premix_cap_compressed: 2 }
    }
}

impl ScheduleParams {
    pub fn uncapped() -> Self {
        Self { depth_cap: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0) || !(self.c_mix >= 0.0) {
            return Err(Error::InvalidParameter(format!("schedule needs p > 2 and c_mix >= 0, got {self:?}")));
        }
        if self.depth_cap == Some(0) || self.hess_premix_cap_full == 0 || self.hess_premix_cap_compressed == 0 {
            return Err(Error::InvalidParameter("schedule caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// `min(cap, ⌈(p ln(k+2) + c_mix) / (−ln ρ)⌉)`, or one round when `ρ = 0`.
pub fn schedule_depth(k: usize, sp: &ScheduleParams, rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    let raw = ((sp.p * ((k + 2) as f64).ln() + sp.c_mix) / -rho.ln()).ceil();
    let depth = if raw.is_finite() { (raw as usize).max(1) } else { usize::MAX };
    match sp.depth_cap {
        Some(cap) => depth.min(cap),
        None => depth,
    }
}

/// Step (A): `τ` rounds on `(x, g)` and `hess_rounds` rounds on `H`.
pub fn pre_mix(states: &mut [AgentState], w: &MixingMatrix, tau: usize, hess_rounds: usize) -> Result<()> {
    let xs: Vec<Vector> = states.iter().map(|s| s.x.clone()).collect();
    let gs: Vec<Vector> = states.iter().map(|s| s.g.clone()).collect();
    let hs: Vec<Matrix> = states.iter().map(|s| s.h.clone()).collect();
    let xt = gossip(w, &xs, tau)?;
    let gt = gossip(w, &gs, tau)?;
    let ht = gossip(w, &hs, hess_rounds)?;
    for (st, ((x, g), h)) in states.iter_mut().zip(xt.into_iter().zip(gt).zip(ht)) {
        st.x_tilde = x;
        st.g_tilde = g;
        st.h_tilde = h;
    }
    Ok(())
}

/// Result of the local regularized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep {
    pub s: Vector,
    pub lambda: f64,
    pub delta: f64,
}

/// Step (B): solves `(H̃ + (λ+δ)I) s = −g̃` by Cholesky factorization.
pub fn local_newton_step(g_t: &Vector, h_t: &Matrix, m: f64) -> Result<LocalStep> {
    let h = symmetrize(h_t);
    let delta = match lambda_min(&h) {
        Ok(l) => (-l).max(0.0),
        Err(_) => return Err(Error::IllPosedSolve),
    };
    let gnorm = g_t.norm();
    if !gnorm.is_finite() {
        return Err(Error::IllPosedSolve);
    }
    if gnorm == 0.0 || gnorm < 1e-300 {
        return Ok(LocalStep { s: Vector::zeros(g_t.len()), lambda: 0.0, delta });
    }
    let lambda = (m * gnorm).sqrt();
    let mut a = h;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda + delta;
    }
    let chol = Cholesky::new(a).ok_or(Error::IllPosedSolve)?;
    let s = -chol.solve(g_t);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllPosedSolve);
    }
    Ok(LocalStep { s, lambda, delta })
}

/// Step (C): `x ← gossip^t(x̃ + s)`.
pub fn post_mix(states: &mut [AgentState], w: &MixingMatrix, t: usize) -> Result<()> {
    let ys: Vec<Vector> = states.iter().map(|s| &s.x_tilde + &s.s).collect();
    let xs = gossip(w, &ys, t)?;
    for (st, x) in states.iter_mut().zip(xs) {
        st.prev_x = std::mem::replace(&mut st.x, x);
    }
    Ok(())
}

/// What step (D) sent and whether compression had to be bypassed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerReport {
    pub payload: HessianPayload,
    pub compression_fallbacks: usize,
}

/// Step (D). Expects `x` to hold `x_{k+1}` and `prev_grad` / `cur_hess` the
/// local derivatives at `x_k`.
///
/// With `hessian_enabled == false` the Hessian tracker keeps `H̃` and
/// `prev_hess` stays at the last incorporated point, so the next enabled
/// update carries the accumulated increment.
pub fn tracker_update(
    states: &mut [AgentState],
    suite: &ObjectiveSuite,
    w: &MixingMatrix,
    t: usize,
    hessian_enabled: bool,
    compression: crate::variants::Compression,
) -> Result<TrackerReport> {
    let mut vs = Vec::with_capacity(states.len());
    let mut rs = Vec::with_capacity(states.len());
    let mut payload = if hessian_enabled { HessianPayload::Dense } else { HessianPayload::Skipped };
    let mut fallbacks = 0;
    for (i, st) in states.iter_mut().enumerate() {
        let e = suite.local(i).value_grad_hess(&st.x)?;
        vs.push(&st.g_tilde + &e.grad - &st.prev_grad);
        st.prev_grad = e.grad;
        st.prev_point_hess = std::mem::replace(&mut st.cur_hess, e.hess.clone());
        if hessian_enabled {
            let inc = compress_increment(&e.hess - &st.prev_hess, compression);
            if inc.fell_back {
                fallbacks += 1;
            } else {
                payload = inc.payload;
            }
            rs.push(&st.h_tilde + inc.matrix);
            st.prev_hess = e.hess;
        }
    }
    let gs = gossip(w, &vs, t)?;
    for (st, g) in states.iter_mut().zip(gs) {
        st.g = g;
    }
    if hessian_enabled {
        let hs = gossip(w, &rs, t)?;
        for (st, h) in states.iter_mut().zip(hs) {
            st.h = h;
        }
    } else {
        for st in states.iter_mut() {
            st.h = st.h_tilde.clone();
        }
    }
    Ok(TrackerReport { payload, compression_fallbacks: fallbacks })
}

/// Inputs of one run.
#[derive(Debug, Clone)]
pub struct RunConfig<'a> {
    pub suite: &'a ObjectiveSuite,
    pub w: &'a MixingMatrix,
    pub variant: VariantConfig,
    pub schedule: ScheduleParams,
    pub m_fac: f64,
    pub k_max: usize,
    pub combo_tol: f64,
    /// One starting point per agent.
    pub x0: Vec<Vector>,
    /// Reference optimum value for relF; `None` leaves relF as NaN.
    pub f_ref: Option<f64>,
}

impl<'a> RunConfig<'a> {
    pub fn new(suite: &'a ObjectiveSuite, w: &'a MixingMatrix, x0: Vec<Vector>) -> Self {
        Self {
            suite,
            w,
            variant: VariantConfig::fixed(),
            schedule: ScheduleParams::default(),
            m_fac: 1.0,
            k_max: 100,
            combo_tol: 1e-12,
            x0,
            f_ref: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.suite.n_agents();
        let d = self.suite.dim();
        if self.w.n() != n {
            return Err(Error::DimensionMismatch(format!("{}-agent mixing matrix for {n} agents", self.w.n())));
        }
        if self.x0.len() != n || self.x0.iter().any(|x| x.len() != d) {
            return Err(Error::DimensionMismatch(format!("need {n} starting points of dimension {d}")));
        }
        if self.k_max == 0 || !(self.combo_tol > 0.0) || !(self.m_fac > 0.0) {
            return Err(Error::InvalidParameter("k_max >= 1, combo_tol > 0 and m_fac > 0 are required".into()));
        }
        self.schedule.validate()?;
        self.variant.validate(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    Budget,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Record `k` holds the metrics at `x_k`; its stage diagnostics (depths,
    /// `λ`, `δ`, tracker dispersion) come from the iteration that produced it.
    pub records: Vec<IterationRecord>,
    pub states: Vec<AgentState>,
    pub stop: StopReason,
    pub compression_fallbacks: usize,
    /// Fixed scaling `M = M_fac · H_max⁰`.
    pub m: f64,
    pub h_max0: f64,
}

impl RunResult {
    /// Index of the last recorded iterate.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn total_bytes(&self) -> StageBytes {
        self.records.last().map_or_else(StageBytes::default, |r| r.bytes)
    }
}

impl RunOutcome for RunResult {
    fn min_rel_f(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.rel_f_min)
    }

    fn diverged(&self) -> bool {
        self.stop == StopReason::Diverged
    }
}

/// What an observer sees right after the local solves of iteration `k`.
pub struct StepView<'s> {
    pub k: usize,
    pub tau: usize,
    pub t: usize,
    pub states: &'s [AgentState],
    /// Scaling each agent used (`M`, or `M̂_i` for adaptive runs).
    pub m_eff: &'s [f64],
}

/// Hooks for invariant checks; both default to no-ops.
pub trait Observer {
    /// After step (B) of iteration `k`.
    fn on_step(&mut self, _view: &StepView<'_>) {}
    /// At initialization (`k = 0`) and after each completed iteration, with
    /// the states holding `x_k`, `g_k`, `H_k`.
    fn on_states(&mut self, _k: usize, _states: &[AgentState]) {}
}

impl Observer for () {}

pub fn run(cfg: &RunConfig<'_>) -> Result<RunResult> {
    run_with_observer(cfg, &mut ())
}

pub fn run_with_observer(cfg: &RunConfig<'_>, obs: &mut dyn Observer) -> Result<RunResult> {
    cfg.validate()?;
    let suite = cfg.suite;
    let w = cfg.w;
    let d = suite.dim();
    let n = suite.n_agents();
    let variant = cfg.variant;

    let h_max0 = h_max0(suite, &cfg.x0)?;
    let m = cfg.m_fac * h_max0.max(f64::MIN_POSITIVE);
    let m_hat0 = variant.ada.m0_fac.unwrap_or(cfg.m_fac) * h_max0.max(f64::MIN_POSITIVE);

    let mut states = Vec::with_capacity(n);
    for (i, x0) in cfg.x0.iter().enumerate() {
        let e = suite.local(i).value_grad_hess(x0)?;
        let mut st = AgentState::new(x0.clone(), e.grad, e.hess);
        if variant.family.is_ada() {
            st.ada = Some(AdaState::new(m_hat0));
        }
        states.push(st);
    }
    obs.on_states(0, &states);

    let f_ref = cfg.f_ref.unwrap_or(f64::NAN);
    let c0 = metrics::combo(&cfg.x0, suite)?;
    let f0 = c0.f_bar;
    let rel0 = metrics::rel_f(f0, f_ref, f0).value;
    let mut records = vec![IterationRecord {
        k: 0,
        f_bar: f0,
        grad_norm: c0.grad_norm,
        cons: c0.cons,
        combo: c0.combo,
        rel_f: rel0,
        rel_f_min: rel0,
        disp_g: metrics::dispersion(&states.iter().map(|s| s.g.clone()).collect::<Vec<_>>()),
        disp_h: metrics::dispersion(&states.iter().map(|s| s.h.clone()).collect::<Vec<_>>()),
        lambda_mean: 0.0,
        delta_mean: 0.0,
        m_mean: if variant.family.is_ada() { m_hat0 } else { m },
        tau: 0,
        t: 0,
        bytes: StageBytes::default(),
    }];
    let mut stop = if c0.combo < cfg.combo_tol { StopReason::Converged } else { StopReason::Budget };
    let mut fallbacks = 0;
    let mut bytes = StageBytes::default();
    let hess_cap = if variant.family.is_ce() {
        cfg.schedule.hess_premix_cap_compressed
    } else {
        cfg.schedule.hess_premix_cap_full
    };

    let mut k = 0;
    while stop == StopReason::Budget && k < cfg.k_max {
        let depth = schedule_depth(k, &cfg.schedule, w.rho());
        let (tau, t) = (depth, depth);
        let hess_rounds = tau.min(hess_cap);
        let compression = variant.compression_at(depth, cfg.schedule.depth_cap);
        let hessian_enabled = lazy_gate(k, variant.k_lazy_at(depth, cfg.schedule.depth_cap));

        let step = (|| -> Result<TrackerReport> {
            pre_mix(&mut states, w, tau, hess_rounds)?;
            let mut m_eff = vec![m; n];
            for (st, me) in states.iter_mut().zip(m_eff.iter_mut()) {
                if let Some(ada) = st.ada.as_mut() {
                    if k > 0 {
                        adaptive_m_update(ada, &st.x, &st.prev_x, &st.cur_hess, &st.prev_point_hess, &variant.ada);
                    }
                    *me = ada.m_hat;
                }
                let ls = local_newton_step(&st.g_tilde, &st.h_tilde, *me)?;
                st.s = ls.s;
                st.lambda = ls.lambda;
                st.delta = ls.delta;
            }
            obs.on_step(&StepView { k, tau, t, states: &states, m_eff: &m_eff });
            post_mix(&mut states, w, t)?;
            tracker_update(&mut states, suite, w, t, hessian_enabled, compression)
        })();

        let report = match step {
            Ok(r) if states.iter().all(AgentState::is_finite) => r,
            Ok(_) | Err(Error::IllPosedSolve | Error::NonFiniteInput) => {
                stop = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        fallbacks += report.compression_fallbacks;
        k += 1;
        obs.on_states(k, &states);

        let plan = RoundPlan { tau, t, premix_matrix_rounds: hess_rounds, tracker_hessian: report.payload };
        for i in 0..n {
            bytes += comm_bytes(d, &plan, w.degree(i));
        }

        let xs: Vec<Vector> = states.iter().map(|s| s.x.clone()).collect();
        let c = match metrics::combo(&xs, suite) {
            Ok(c) if c.combo.is_finite() && c.f_bar.is_finite() => c,
            Ok(_) | Err(Error::NonFiniteInput) => {
                stop = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let rel = metrics::rel_f(c.f_bar, f_ref, f0).value;
        let prev_min = records.last().map_or(f64::INFINITY, |r| r.rel_f_min);
        let m_mean = states.iter().map(|s| s.ada.map_or(m, |a| a.m_hat)).sum::<f64>() / n as f64;
        records.push(IterationRecord {
            k,
            f_bar: c.f_bar,
            grad_norm: c.grad_norm,
            cons: c.cons,
            combo: c.combo,
            rel_f: rel,
            rel_f_min: prev_min.min(rel),
            disp_g: metrics::dispersion(&states.iter().map(|s| s.g_tilde.clone()).collect::<Vec<_>>()),
            disp_h: metrics::dispersion(&states.iter().map(|s| s.h_tilde.clone()).collect::<Vec<_>>()),
            lambda_mean: states.iter().map(|s| s.lambda).sum::<f64>() / n as f64,
            delta_mean: states.iter().map(|s| s.delta).sum::<f64>() / n as f64,
            m_mean,
            tau,
            t,
            bytes,
        });
        if c.combo < cfg.combo_tol {
            stop = StopReason::Converged;
        }
    }

    Ok(RunResult { records, states, stop, compression_fallbacks: fallbacks, m, h_max0 })
}

/// Average of the agents' primal points.
pub fn average_point(states: &[AgentState]) -> Vector {
    mean_vectors(&states.iter().map(|s| s.x.clone()).collect::<Vec<_>>())
}
