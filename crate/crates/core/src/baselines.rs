//! First-order comparison methods: EXTRA and DIGing, with the stepsize
//! `α = α_base / H_max⁰` and an optional `1/√(k+1)` decay.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algo::{AgentState, RunResult, StopReason};
use crate::graph::{gossip, MixingMatrix};
use crate::linalg::{Matrix, Vector};
use crate::metrics::{self, IterationRecord, StageBytes, FLOAT_BYTES};
use crate::objectives::{h_max0, ObjectiveSuite};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Extra,
    DIGing,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Extra => "extra",
            Method::DIGing => "diging",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "extra" => Ok(Method::Extra),
            "diging" => Ok(Method::DIGing),
            other => Err(Error::InvalidParameter(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: Method,
    pub alpha_base: f64,
    pub decay: bool,
}

#[derive(Debug, Clone)]
pub struct BaselineRun<'a> {
    pub suite: &'a ObjectiveSuite,
    pub w: &'a MixingMatrix,
    pub cfg: BaselineConfig,
    pub k_max: usize,
    pub combo_tol: f64,
    pub x0: Vec<Vector>,
    pub f_ref: Option<f64>,
}

impl BaselineRun<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.suite.n_agents();
        let d = self.suite.dim();
        if self.w.n() != n || self.x0.len() != n || self.x0.iter().any(|x| x.len() != d) {
            return Err(Error::DimensionMismatch(format!("need {n} starting points of dimension {d}")));
        }
        if !(self.cfg.alpha_base >= 0.0) || self.k_max == 0 || !(self.combo_tol > 0.0) {
            return Err(Error::InvalidParameter("alpha_base >= 0, k_max >= 1 and combo_tol > 0 are required".into()));
        }
        Ok(())
    }
}

pub fn run_baseline(run: &BaselineRun<'_>) -> Result<RunResult> {
    match run.cfg.method {
        Method::Extra => extra_run(run),
        Method::DIGing => diging_run(run),
    }
}

/// Stepsize at iteration `k`.
fn step_size(alpha: f64, decay: bool, k: usize) -> f64 {
    if decay {
        alpha / ((k + 1) as f64).sqrt()
    } else {
        alpha
    }
}

fn gradients(suite: &ObjectiveSuite, xs: &[Vector]) -> Result<Vec<Vector>> {
    xs.iter().enumerate().map(|(i, x)| suite.local(i).gradient(x)).collect()
}

/// Shared bookkeeping: relF, running minimum, stopping and divergence.
struct Recorder<'a> {
    suite: &'a ObjectiveSuite,
    f_ref: f64,
    f0: f64,
    tol: f64,
    records: Vec<IterationRecord>,
}

impl<'a> Recorder<'a> {
    fn new(run: &BaselineRun<'a>, alpha: f64) -> Result<(Self, StopReason)> {
        let c = metrics::combo(&run.x0, run.suite)?;
        let f_ref = run.f_ref.unwrap_or(f64::NAN);
        let rel = metrics::rel_f(c.f_bar, f_ref, c.f_bar).value;
        let rec = IterationRecord {
            k: 0,
            f_bar: c.f_bar,
            grad_norm: c.grad_norm,
            cons: c.cons,
            combo: c.combo,
            rel_f: rel,
            rel_f_min: rel,
            disp_g: 0.0,
            disp_h: 0.0,
            lambda_mean: 0.0,
            delta_mean: 0.0,
            m_mean: alpha,
            tau: 0,
            t: 0,
            bytes: StageBytes::default(),
        };
        let stop = if c.combo < run.combo_tol { StopReason::Converged } else { StopReason::Budget };
        Ok((Self { suite: run.suite, f_ref, f0: c.f_bar, tol: run.combo_tol, records: vec![rec] }, stop))
    }

    /// Records iterate `k`; returns the stop state.
    fn push(&mut self, k: usize, xs: &[Vector], disp_g: f64, alpha: f64, bytes: StageBytes) -> Result<StopReason> {
        if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Ok(StopReason::Diverged);
        }
        let c = match metrics::combo(xs, self.suite) {
            Ok(c) if c.combo.is_finite() && c.f_bar.is_finite() => c,
            Ok(_) | Err(Error::NonFiniteInput) => return Ok(StopReason::Diverged),
            Err(e) => return Err(e),
        };
        let rel = metrics::rel_f(c.f_bar, self.f_ref, self.f0).value;
        let prev = self.records.last().map_or(f64::INFINITY, |r| r.rel_f_min);
        self.records.push(IterationRecord {
            k,
            f_bar: c.f_bar,
            grad_norm: c.grad_norm,
            cons: c.cons,
            combo: c.combo,
            rel_f: rel,
            rel_f_min: prev.min(rel),
            disp_g,
            disp_h: 0.0,
            lambda_mean: 0.0,
            delta_mean: 0.0,
            m_mean: alpha,
            tau: 1,
            t: 1,
            bytes,
        });
        Ok(if c.combo < self.tol { StopReason::Converged } else { StopReason::Budget })
    }

    fn finish(self, xs: Vec<Vector>, stop: StopReason, alpha_base: f64, hmax: f64) -> RunResult {
        let d = xs[0].len();
        let states = xs
            .into_iter()
            .map(|x| AgentState::new(x, Vector::zeros(d), Matrix::zeros(d, d)))
            .collect();
        RunResult { records: self.records, states, stop, compression_fallbacks: 0, m: alpha_base / hmax, h_max0: hmax }
    }
}

/// Per-iteration network bytes when every agent sends `floats` numbers to
/// each neighbor.
fn round_bytes(w: &MixingMatrix, floats: usize) -> u64 {
    FLOAT_BYTES * floats as u64 * w.directed_messages() as u64
}

/// EXTRA: `x¹ = W x⁰ − α ∇F(x⁰)`,
/// `x^{k+2} = (I + W) x^{k+1} − W̃ x^k − α (∇F(x^{k+1}) − ∇F(x^k))` with
/// `W̃ = (I + W)/2`. `W x^k` is cached, so each iteration gossips once.
pub fn extra_run(run: &BaselineRun<'_>) -> Result<RunResult> {
    run.validate()?;
    let hmax = h_max0(run.suite, &run.x0)?.max(f64::MIN_POSITIVE);
    let alpha = run.cfg.alpha_base / hmax;
    let d = run.suite.dim();
    let (mut rec, mut stop) = Recorder::new(run, alpha)?;
    let per_iter = round_bytes(run.w, d);
    let mut bytes = StageBytes::default();

    let mut x = run.x0.clone();
    // caches for the previous iterate: x^{k−1}, W x^{k−1}, ∇F(x^{k−1}), α_{k−1}
    let mut old: Option<(Vec<Vector>, Vec<Vector>, Vec<Vector>, f64)> = None;
    let mut k = 0;
    while stop == StopReason::Budget && k < run.k_max {
        let a_k = step_size(alpha, run.cfg.decay, k);
        let wx = gossip(run.w, &x, 1)?;
        let g = match gradients(run.suite, &x) {
            Ok(g) => g,
            Err(Error::NonFiniteInput) => {
                stop = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let next: Vec<Vector> = match &old {
            None => wx.iter().zip(&g).map(|(w, g)| w - g * a_k).collect(),
            Some((x_old, wx_old, g_old, a_old)) => (0..x.len())
                .map(|i| {
                    let w_tilde = (&x_old[i] + &wx_old[i]) * 0.5;
                    &x[i] + &wx[i] - w_tilde - (&g[i] * a_k - &g_old[i] * *a_old)
                })
                .collect(),
        };
        old = Some((std::mem::replace(&mut x, next), wx, g, a_k));
        k += 1;
        bytes.c += per_iter;
        stop = rec.push(k, &x, 0.0, a_k, bytes)?;
    }
    Ok(rec.finish(x, stop, run.cfg.alpha_base, hmax))
}

/// DIGing: `x⁺ = W x − α y`, `y⁺ = W y + ∇F(x⁺) − ∇F(x)`, `y⁰ = ∇F(x⁰)`.
pub fn diging_run(run: &BaselineRun<'_>) -> Result<RunResult> {
    diging_run_observed(run, &mut |_, _, _| {})
}

/// DIGing with a hook called at every iterate `k` with `(k, x, y)`.
pub fn diging_run_observed(
    run: &BaselineRun<'_>,
    obs: &mut dyn FnMut(usize, &[Vector], &[Vector]),
) -> Result<RunResult> {
    run.validate()?;
    let hmax = h_max0(run.suite, &run.x0)?.max(f64::MIN_POSITIVE);
    let alpha = run.cfg.alpha_base / hmax;
    let d = run.suite.dim();
    let (mut rec, mut stop) = Recorder::new(run, alpha)?;
    let per_iter = round_bytes(run.w, d);
    let mut bytes = StageBytes::default();

    let mut x = run.x0.clone();
    let mut g = gradients(run.suite, &x)?;
    let mut y = g.clone();
    obs(0, &x, &y);
    let mut k = 0;
    while stop == StopReason::Budget && k < run.k_max {
        let a_k = step_size(alpha, run.cfg.decay, k);
        let wx = gossip(run.w, &x, 1)?;
        let wy = gossip(run.w, &y, 1)?;
        let x_next: Vec<Vector> = wx.iter().zip(&y).map(|(w, y)| w - y * a_k).collect();
        let g_next = match gradients(run.suite, &x_next) {
            Ok(g) => g,
            Err(Error::NonFiniteInput) => {
                stop = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        y = (0..x.len()).map(|i| &wy[i] + &g_next[i] - &g[i]).collect();
        x = x_next;
        g = g_next;
        k += 1;
        obs(k, &x, &y);
        bytes.c += per_iter;
        bytes.d_vec += per_iter;
        stop = rec.push(k, &x, metrics::dispersion(&y), a_k, bytes)?;
    }
    Ok(rec.finish(x, stop, run.cfg.alpha_base, hmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{metropolis_weights, Graph};
    use crate::linalg::mean_vectors;
    use crate::metrics::RunOutcome;
    use crate::objectives::{build_suite, ObjectiveKind, ObjectiveParams};

    fn setup(kind: ObjectiveKind) -> (ObjectiveSuite, MixingMatrix, Vec<Vector>) {
        let suite = build_suite(kind, 5, 4, 11, &ObjectiveParams::default(), None).unwrap();
        let w = metropolis_weights(&Graph::path(5)).unwrap();
        let x0 = (0..5).map(|i| Vector::from_element(4, i as f64 * 0.3 - 0.6)).collect();
        (suite, w, x0)
    }

    fn base<'a>(suite: &'a ObjectiveSuite, w: &'a MixingMatrix, x0: Vec<Vector>, method: Method) -> BaselineRun<'a> {
        BaselineRun {
            suite,
            w,
            cfg: BaselineConfig { method, alpha_base: 0.2, decay: false },
            k_max: 300,
            combo_tol: 1e-12,
            x0,
            f_ref: None,
        }
    }

    #[test]
    fn zero_step_is_pure_averaging() {
        let (suite, w, x0) = setup(ObjectiveKind::Ridge);
        let mean0 = mean_vectors(&x0);
        for method in [Method::Extra, Method::DIGing] {
            let mut r = base(&suite, &w, x0.clone(), method);
            r.cfg.alpha_base = 0.0;
            r.k_max = 5000;
            let res = run_baseline(&r).unwrap();
            let xs: Vec<Vector> = res.states.iter().map(|s| s.x.clone()).collect();
            assert!(metrics::dispersion(&xs) < 1e-8, "{method}");
            assert!((mean_vectors(&xs) - &mean0).norm() < 1e-12);
        }
    }

    #[test]
    fn both_methods_solve_ridge() {
        let (suite, w, x0) = setup(ObjectiveKind::Ridge);
        let f_ref = metrics::compute_reference(&suite, &Vector::zeros(4), &Default::default()).unwrap().f_ref;
        for method in [Method::Extra, Method::DIGing] {
            let mut r = base(&suite, &w, x0.clone(), method);
            r.k_max = 5000;
            r.f_ref = Some(f_ref);
            let res = run_baseline(&r).unwrap();
            assert!(!res.diverged());
            assert!(res.min_rel_f() < 1e-9, "{method}: {}", res.min_rel_f());
        }
    }

    #[test]
    fn diging_tracks_the_average_gradient() {
        let (suite, w, x0) = setup(ObjectiveKind::LogSumExp);
        let mut worst: f64 = 0.0;
        diging_run_observed(&base(&suite, &w, x0, Method::DIGing), &mut |_, x, y| {
            let g: Vec<Vector> = x.iter().enumerate().map(|(i, x)| suite.local(i).gradient(x).unwrap()).collect();
            worst = worst.max((mean_vectors(y) - mean_vectors(&g)).norm());
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn stationary_consensus_is_fixed() {
        // identical local functions: every local gradient vanishes at the minimizer
        let suite = build_suite(ObjectiveKind::Rosenbrock, 5, 4, 1, &ObjectiveParams::default(), None).unwrap();
        let w = metropolis_weights(&Graph::path(5)).unwrap();
        let xstar = Vector::from_element(4, 1.0);
        for method in [Method::Extra, Method::DIGing] {
            let mut r = base(&suite, &w, vec![xstar.clone(); 5], method);
            r.combo_tol = 1e-300;
            r.k_max = 20;
            let res = run_baseline(&r).unwrap();
            for s in &res.states {
                assert_eq!(s.x, xstar);
            }
        }
    }

    #[test]
    fn bytes_per_iteration() {
        let (suite, w, x0) = setup(ObjectiveKind::Ridge);
        let mut r = base(&suite, &w, x0, Method::Extra);
        r.k_max = 3;
        let e = run_baseline(&r).unwrap();
        // path on 5 nodes: 8 directed messages of 4 floats
        assert_eq!(e.total_bytes().total(), 3 * 8 * 4 * 8);
        r.cfg.method = Method::DIGing;
        let g = run_baseline(&r).unwrap();
        assert_eq!(g.total_bytes().total(), 2 * 3 * 8 * 4 * 8);
    }

    #[test]
    fn decay_schedule() {
        assert_eq!(step_size(1.0, false, 99), 1.0);
        assert!((step_size(1.0, true, 3) - 0.5).abs() < 1e-15);
    }
}
