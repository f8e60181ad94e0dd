//! Acceptance criteria 1–12. Each test prints one `criterion N: PASS|FAIL`
//! line before asserting; run with `--nocapture` to see them:
//!
//! ```text
//! cargo test -p disgrem --test acceptance -- --nocapture --test-threads 1
//! ```

use std::fs;

use disgrem::algo::{self, AgentState, Observer, RunConfig, ScheduleParams, StepView};
use disgrem::data::synthetic_binary;
use disgrem::graph::{generate_er_graph, gossip, metropolis_weights, Graph, MixingMatrix};
use disgrem::harness::{self, ExperimentConfig, TrialSummary};
use disgrem::linalg::{Matrix, Vector};
use disgrem::metrics::{self, closed_form_bytes, dispersion, RunOutcome};
use disgrem::objectives::{build_suite, ObjectiveKind, ObjectiveParams};
use disgrem::seed::rng_from_seed;
use disgrem::variants::{compress_lowrank, compress_topk, topk_budget, Compression, Family, VariantConfig};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, &[]).expect("valid config")
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| Distribution::<f64>::sample(&StandardNormal, rng))
}

fn random_symmetric(rng: &mut impl Rng, d: usize) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
    (&a + a.transpose()) * 0.5
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut a = m.clone();
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// `‖W − 𝟙𝟙ᵀ/N‖₂` from the Jacobi spectrum.
fn rho_oracle(w: &MixingMatrix) -> f64 {
    let n = w.n();
    let dev = w.weights() - Matrix::from_element(n, n, 1.0 / n as f64);
    jacobi_eigenvalues(&dev).into_iter().map(f64::abs).fold(0.0, f64::max)
}

#[test]
fn mixing_rate_matches_eigenvalue_oracle() {
    // path 0-1-2: W has eigenvalues 1, 2/3, 0
    let w = metropolis_weights(&Graph::path(3)).unwrap();
    assert!((w.rho() - 2.0 / 3.0).abs() <= 1e-10, "{}", w.rho());
    assert!((rho_oracle(&w) - 2.0 / 3.0).abs() <= 1e-10);
    for seed in 0..20 {
        let w = metropolis_weights(&generate_er_graph(8, 0.4, seed).unwrap()).unwrap();
        assert!((w.rho() - rho_oracle(&w)).abs() <= 1e-10);
    }
}

/// Records the averaging identities at every iterate.
struct Identities<'a> {
    suite: &'a disgrem::objectives::ObjectiveSuite,
    grad: f64,
    hess: f64,
    seen: usize,
}

impl Observer for Identities<'_> {
    fn on_states(&mut self, _k: usize, states: &[AgentState]) {
        let n = states.len() as f64;
        let d = states[0].x.len();
        let mut g_bar = Vector::zeros(d);
        let mut true_g = Vector::zeros(d);
        let mut h_bar = Matrix::zeros(d, d);
        let mut true_h = Matrix::zeros(d, d);
        for (i, st) in states.iter().enumerate() {
            let e = self.suite.local(i).value_grad_hess(&st.x).unwrap();
            g_bar += &st.g / n;
            true_g += e.grad / n;
            h_bar += &st.h / n;
            true_h += e.hess / n;
        }
        self.grad = self.grad.max((&g_bar - &true_g).norm() - 1e-8 * (1.0 + g_bar.norm()));
        self.hess = self.hess.max((&h_bar - &true_h).norm());
        self.seen += 1;
    }
}

#[test]
fn criterion_01_averaging_identities() {
    let cfg = config("problem = ridge\nk_max = 50\ncombo_tol = 1e-300\n");
    let setup = harness::setup_trial(&cfg, None, 0).unwrap();
    let mut obs = Identities { suite: &setup.suite, grad: f64::NEG_INFINITY, hess: 0.0, seen: 0 };
    let res = harness::run_trial_observed(&cfg, &setup, None, &mut obs).unwrap();
    let pass = res.iterations() == 50 && obs.seen == 51 && obs.grad <= 0.0 && obs.hess <= 1e-7;
    report(
        1,
        pass,
        format!(
            "{} iterates; gradient margin {:.2e} (≤ 0), Hessian gap {:.2e} (≤ 1e-7)",
            obs.seen, obs.grad, obs.hess
        ),
    );
}

#[test]
fn criterion_02_gossip_contraction() {
    let mut rng = rng_from_seed(2);
    let mut worst = f64::NEG_INFINITY;
    for sample in 0..1000u64 {
        let n = [5, 10, 20][sample as usize % 3];
        let p = rng.random_range(0.2..0.9);
        let w = metropolis_weights(&generate_er_graph(n, p, sample).unwrap()).unwrap();
        let d = rng.random_range(1..6);
        let t = rng.random_range(1..6);
        let z: Vec<Vector> = (0..n).map(|_| gaussian(&mut rng, d) * rng.random_range(0.1..10.0)).collect();
        let mixed = gossip(&w, &z, t).unwrap();
        worst = worst.max(dispersion(&mixed) - (w.rho().powi(t as i32) * dispersion(&z) + 1e-10));
    }
    report(2, worst <= 0.0, format!("1000 samples, worst margin {worst:.3e} (≤ 0)"));
}

struct StepBound {
    bound: f64,
    posed: f64,
    checked: usize,
}

impl Observer for StepBound {
    fn on_step(&mut self, v: &StepView<'_>) {
        for (st, &m) in v.states.iter().zip(v.m_eff) {
            self.bound = self.bound.max(m * st.s.norm() - st.lambda - 1e-10);
            let mut a = (&st.h_tilde + st.h_tilde.transpose()) * 0.5;
            for i in 0..a.nrows() {
                a[(i, i)] += st.lambda + st.delta;
            }
            let lmin = jacobi_eigenvalues(&a)[0];
            self.posed = self.posed.max(st.lambda - 1e-8 - lmin);
            self.checked += 1;
        }
    }
}

#[test]
fn criterion_03_step_bound() {
    let cfg = config("problem = huber\n");
    let setup = harness::setup_trial(&cfg, None, 0).unwrap();
    let mut obs = StepBound { bound: f64::NEG_INFINITY, posed: f64::NEG_INFINITY, checked: 0 };
    let res = harness::run_trial_observed(&cfg, &setup, None, &mut obs).unwrap();
    let pass = obs.checked > 0 && obs.bound <= 0.0 && obs.posed <= 0.0 && !res.diverged();
    report(
        3,
        pass,
        format!(
            "{} agent-steps over {} iterations; step margin {:.2e}, solve margin {:.2e} (both ≤ 0)",
            obs.checked,
            res.iterations(),
            obs.bound,
            obs.posed
        ),
    );
}

fn campaign(text: &str) -> Vec<TrialSummary> {
    harness::run_trials(&config(text), None).unwrap().into_iter().map(|(o, _)| o.summary).collect()
}

fn median_of(ts: &[TrialSummary], f: impl Fn(&TrialSummary) -> f64) -> f64 {
    metrics::median(&ts.iter().map(f).collect::<Vec<_>>()).unwrap()
}

#[test]
fn criterion_04_table3_medians() {
    let huber = campaign("problem = huber\n");
    let hk = median_of(&huber, |t| t.iterations as f64);
    let hf = median_of(&huber, |t| t.min_rel_f);
    let lse = campaign("problem = logsumexp\n");
    let lse_extra = campaign("problem = logsumexp\nmethod = extra\n");
    let lf = median_of(&lse, |t| t.min_rel_f);
    let ef = median_of(&lse_extra, |t| t.min_rel_f);
    let sty = campaign("problem = styblinski\nmethod = adadisgrem\n");
    let sk = median_of(&sty, |t| t.iterations as f64);
    let sf = median_of(&sty, |t| t.min_rel_f);
    let pass = (40.0..=200.0).contains(&hk) && hf <= 1e-10 && lf <= 1e-10 && ef >= 1e-2 && sk <= 40.0 && sf <= 1e-12;
    report(
        4,
        pass,
        format!(
            "Huber K={hk} relF={hf:.1e}; LogSumExp relF={lf:.1e} vs EXTRA {ef:.1e}; Styblinski/Ada K={sk} relF={sf:.1e}"
        ),
    );
}

#[test]
fn criterion_05_robustness() {
    let mut parts = Vec::new();
    let mut pass = true;
    for problem in ["ridge", "logreg_real"] {
        let ours = campaign(&format!("problem = {problem}\nmc_trials = 25\ninit_radius = 1\n"));
        let extra = campaign(&format!("problem = {problem}\nmc_trials = 25\ninit_radius = 1\nmethod = extra\n"));
        let (a, b) = (metrics::success_rate(&ours, 1e-6), metrics::success_rate(&extra, 1e-6));
        pass &= a == 1.0 && b <= 0.10;
        parts.push(format!("{problem}: DisGrem {:.0}%, EXTRA {:.0}%", 100.0 * a, 100.0 * b));
    }
    report(5, pass, format!("{} (need 100% and ≤ 10%)", parts.join("; ")));
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_06_sublinear_rate() {
    let cfg = config("problem = quadbad\nschedule_cap = none\nschedule_p = 3\n");
    let setup = harness::setup_trial(&cfg, None, 0).unwrap();
    let reference = harness::trial_reference(&cfg, &setup).unwrap();
    let res = harness::run_trial(&cfg, &setup, Some(reference.f_ref)).unwrap();
    let phi: Vec<f64> = res.records.iter().map(|r| r.f_bar - reference.f_ref).collect();
    let phi0 = phi[0];
    let start = phi.iter().position(|&p| p <= 0.1 * phi0);
    let end = phi.iter().rposition(|&p| p >= 1e-12 * phi0);
    let (pass, detail) = match (start, end) {
        (Some(s), Some(e)) if e > s + 1 && s >= 1 => {
            let ks: Vec<f64> = (s..=e).map(|k| (k as f64).ln()).collect();
            let ls: Vec<f64> = (s..=e).map(|k| phi[k].max(f64::MIN_POSITIVE).ln()).collect();
            let m = slope(&ks, &ls);
            (m <= -1.8, format!("window k ∈ [{s}, {e}], slope {m:.3} (≤ −1.8)"))
        }
        _ => (false, format!("no descent window (start {start:?}, end {end:?}, {} iterations)", res.iterations())),
    };
    report(6, pass, detail);
}

#[test]
fn criterion_07_superlinear_tail() {
    let cfg = config("problem = ridge\n");
    let setup = harness::setup_trial(&cfg, None, 0).unwrap();
    let res = harness::run_trial(&cfg, &setup, None).unwrap();
    let g: Vec<f64> = res.records.iter().map(|r| r.grad_norm).collect();
    let (pass, detail) = match res.records.iter().position(|r| r.combo < 1e-12) {
        Some(stop) if stop >= 6 => {
            let ratios: Vec<f64> = (stop - 6..stop - 1).map(|k| g[k + 1] / g[k].powf(1.5)).collect();
            let worst = ratios.iter().copied().fold(0.0, f64::max);
            (worst <= 100.0, format!("combo < 1e-12 at k={stop}; ratios {:?}, max {worst:.3e} (≤ 100)", ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()))
        }
        other => {
            let floor = res.records.iter().map(|r| r.combo).fold(f64::INFINITY, f64::min);
            (false, format!("combo < 1e-12 reached at {other:?} ({:?} after {} iterations, smallest combo {floor:.3e})", res.stop, res.iterations()))
        }
    };
    report(7, pass, detail);
}

#[test]
fn criterion_08_communication_accounting() {
    let mut failures = Vec::new();
    let w = metropolis_weights(&generate_er_graph(6, 0.6, 8).unwrap()).unwrap();
    let expected_closed = |d: usize, depth: usize| -> u64 { (0..w.n()).map(|i| closed_form_bytes(d, depth, depth, w.degree(i))).sum() };
    for d in [2usize, 5, 30] {
        for depth in [1usize, 3] {
            // independent count: every directed message carries x, g and the
            // packed upper triangle in both the pre-mix and the tracker stage
            let per_msg = 8 * (2 * d + d * (d + 1) / 2) as u64;
            let by_hand: u64 = (0..w.n()).map(|i| w.degree(i) as u64 * 2 * depth as u64 * per_msg).sum();
            if by_hand != expected_closed(d, depth) {
                failures.push(format!("closed form d={d} depth={depth}"));
            }
            let suite = build_suite(ObjectiveKind::Ridge, w.n(), d, 1, &ObjectiveParams::default(), None).unwrap();
            let mut rc = RunConfig::new(&suite, &w, vec![Vector::from_element(d, 3.0); w.n()]);
            rc.schedule = ScheduleParams { p: 3.0, c_mix: 1e6, depth_cap: Some(depth), ..ScheduleParams::default() };
            rc.k_max = 4;
            rc.combo_tol = 1e-300;
            let res = algo::run(&rc).unwrap();
            let per_iter = by_hand;
            for r in &res.records[1..] {
                if r.tau != depth || r.bytes.total() != per_iter * r.k as u64 {
                    failures.push(format!("run d={d} depth={depth} k={}: {} vs {}", r.k, r.bytes.total(), per_iter * r.k as u64));
                }
            }
        }
    }
    // compressed charges never undercut the dense payload at full budget
    let d = 6;
    let dense_tracker = {
        let suite = build_suite(ObjectiveKind::Rosenbrock, w.n(), d, 1, &ObjectiveParams::default(), None).unwrap();
        let charge = |compression| {
            let mut rc = RunConfig::new(&suite, &w, vec![Vector::from_element(d, -1.5); w.n()]);
            rc.variant = VariantConfig { compression, depth_coupling: false, ..VariantConfig::for_family(Family::Ce) };
            rc.schedule = ScheduleParams { p: 3.0, c_mix: 1e6, depth_cap: Some(2), ..ScheduleParams::default() };
            rc.k_max = 3;
            rc.combo_tol = 1e-300;
            algo::run(&rc).unwrap().total_bytes().d_mat
        };
        let dense = charge(Compression::None);
        for (name, c) in [("topk(1.0)", Compression::TopK(1.0)), ("lowrank(d)", Compression::LowRank(d))] {
            if charge(c) < dense {
                failures.push(format!("{name} charged less than dense"));
            }
        }
        dense
    };
    // lazy tracker updates: one in ten iterations communicates the Hessian
    let suite = build_suite(ObjectiveKind::Ridge, w.n(), d, 1, &ObjectiveParams::default(), None).unwrap();
    let hessian_bytes = |k_lazy| {
        let mut rc = RunConfig::new(&suite, &w, vec![Vector::from_element(d, -1.5); w.n()]);
        rc.variant = VariantConfig { compression: Compression::None, k_lazy, depth_coupling: false, ..VariantConfig::for_family(Family::Ce) };
        rc.schedule = ScheduleParams { p: 3.0, c_mix: 1e6, depth_cap: Some(2), ..ScheduleParams::default() };
        rc.k_max = 100;
        rc.combo_tol = 1e-300;
        let res = algo::run(&rc).unwrap();
        assert_eq!(res.iterations(), 100);
        res.total_bytes().d_mat
    };
    let (eager, lazy) = (hessian_bytes(1), hessian_bytes(10));
    let reduction = 1.0 - lazy as f64 / eager as f64;
    if (reduction - 0.9).abs() > 0.01 {
        failures.push(format!("lazy reduction {reduction:.4}"));
    }
    report(
        8,
        failures.is_empty() && dense_tracker > 0,
        format!("lazy Hessian-tracker reduction {:.1}%; {failures:?}", 100.0 * reduction),
    );
}

#[test]
fn criterion_09_compression() {
    let mut rng = rng_from_seed(9);
    let mut worst_eq: f64 = 0.0;
    let mut bound_violations = 0;
    let mut budget_violations = 0;
    for _ in 0..200 {
        let d = rng.random_range(2..12);
        let r = rng.random_range(1..d);
        let m = random_symmetric(&mut rng, d);
        let lr = compress_lowrank(&m, r).unwrap();
        let err = (&m - lr.reconstruct()).norm();
        let mut mu = jacobi_eigenvalues(&m);
        mu.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        let tail = mu[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_eq = worst_eq.max((err - tail).abs());
        if err > mu[r].abs() * ((d - r) as f64).sqrt() + 1e-9 {
            bound_violations += 1;
        }
        let frac = rng.random_range(0.01..1.0);
        let tk = compress_topk(&m, frac).unwrap();
        let budget = topk_budget(d, frac);
        let kept = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).filter(|&(i, j)| tk.matrix[(i, j)] != 0.0).count();
        if tk.entries != budget || kept > budget {
            budget_violations += 1;
        }
    }
    // ties keep the earliest (row, col) in the upper triangle
    let tied = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let one = compress_topk(&tied, 1.0 / 3.0).unwrap();
    let tie_ok = one.entries == 1 && one.matrix[(0, 0)] == 1.0 && one.matrix[(1, 1)] == 0.0;
    report(
        9,
        worst_eq <= 1e-9 && bound_violations == 0 && budget_violations == 0 && tie_ok,
        format!(
            "200 matrices; low-rank error gap {worst_eq:.2e}, bound violations {bound_violations}, TopK budget violations {budget_violations}, tie-break ok {tie_ok}"
        ),
    );
}

struct TrackerDispersion(Vec<f64>);

impl Observer for TrackerDispersion {
    fn on_step(&mut self, v: &StepView<'_>) {
        let gs: Vec<Vector> = v.states.iter().map(|s| s.g_tilde.clone()).collect();
        self.0.push(dispersion(&gs));
    }
}

#[test]
fn criterion_10_dispersion_decay() {
    let cfg = config("problem = ridge\nschedule_cap = none\nschedule_p = 3\nk_max = 61\ncombo_tol = 1e-300\n");
    let setup = harness::setup_trial(&cfg, None, 0).unwrap();
    let mut obs = TrackerDispersion(Vec::new());
    harness::run_trial_observed(&cfg, &setup, None, &mut obs).unwrap();
    let scaled: Vec<f64> = (5..=60).map(|k| obs.0[k] * ((k + 2) as f64).powi(2)).collect();
    let med = metrics::median(&scaled).unwrap();
    let max = scaled.iter().copied().fold(0.0, f64::max);
    let at = |k: usize| scaled[k - 5];
    report(
        10,
        max <= 10.0 * med,
        format!(
            "max {max:.3e}, median {med:.3e}, ratio {:.2e} (≤ 10); D·(k+2)² at k=5,10,15,30,60: {:.1e} {:.1e} {:.1e} {:.1e} {:.1e}",
            max / med,
            at(5),
            at(10),
            at(15),
            at(30),
            at(60)
        ),
    );
}

#[test]
fn criterion_11_finite_differences() {
    let params = ObjectiveParams::default();
    let ds = synthetic_binary(200, 6, 11).unwrap();
    let mut worst = Vec::new();
    let mut pass = true;
    let h = 1e-5;
    for kind in ObjectiveKind::ALL {
        let suite = build_suite(kind, 3, 6, 11, &params, kind.needs_dataset().then_some(&ds)).unwrap();
        let d = suite.dim();
        let mut rng = rng_from_seed(kind as u64 + 100);
        let (mut gw, mut hw): (f64, f64) = (0.0, 0.0);
        let mut tested = 0;
        while tested < 50 {
            let x = gaussian(&mut rng, d);
            let obj = suite.local(tested % 3);
            if obj.kink_distance(&x).is_some_and(|m| m < 1e-3) {
                continue;
            }
            tested += 1;
            let e = obj.value_grad_hess(&x).unwrap();
            let mut g_fd = Vector::zeros(d);
            let mut h_fd = Matrix::zeros(d, d);
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                g_fd[j] = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h);
                h_fd.set_column(j, &((obj.gradient(&xp).unwrap() - obj.gradient(&xm).unwrap()) / (2.0 * h)));
            }
            gw = gw.max((&g_fd - &e.grad).norm() / e.grad.norm().max(1.0));
            hw = hw.max((&h_fd - &e.hess).norm() / e.hess.norm().max(1.0));
        }
        pass &= gw <= 1e-5 && hw <= 1e-4;
        worst.push(format!("{kind} {gw:.1e}/{hw:.1e}"));
    }
    report(11, pass, format!("gradient/Hessian errors: {}", worst.join(", ")));
}

#[test]
fn criterion_12_determinism() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1, 4]) {
        let text = format!(
            "problem = huber\nmethod = cedisgrem\nmc_trials = 4\nk_max = 40\nthreads = {threads}\noutput_dir = {}\n",
            dir.path().display()
        );
        harness::run_campaign(&config(&text)).unwrap();
    }
    let mut identical = 0;
    let mut differing = Vec::new();
    for t in 0..4 {
        let name = format!("trial_{t:02}.csv");
        let a = fs::read(dirs[0].path().join(&name)).unwrap();
        let b = fs::read(dirs[1].path().join(&name)).unwrap();
        if a == b && !a.is_empty() {
            identical += 1;
        } else {
            differing.push(name);
        }
    }
    report(12, differing.is_empty(), format!("{identical}/4 CSVs byte-identical across 1 and 4 threads {differing:?}"));
}
