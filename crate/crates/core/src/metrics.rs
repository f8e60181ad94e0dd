//! Accuracy metrics, reference values and communication accounting.

use std::ops::{Add, AddAssign};

use nalgebra::Cholesky;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::Payload;
use crate::linalg::{lambda_min, mean_vectors, Matrix, Vector};
use crate::objectives::ObjectiveSuite;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Bytes per transmitted float.
pub const FLOAT_BYTES: u64 = 8;
/// Bytes per transmitted index (Top-k entries carry a row and a column).
pub const INDEX_BYTES: u64 = 4;

/// RMS dispersion `D(Z) = sqrt((1/N) Σ ‖z_i − z̄‖²)`; matrix blocks are
/// measured in the Frobenius norm.
pub fn dispersion<T: Payload>(z: &[T]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let n = z.len() as f64;
    let len = z[0].values().len();
    let mut mean = vec![0.0; len];
    for b in z {
        for (m, v) in mean.iter_mut().zip(b.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let ss: f64 = z
        .iter()
        .map(|b| b.values().iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    (ss / n).sqrt()
}

/// Components of the combined stopping value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub grad_norm: f64,
    pub cons: f64,
    pub combo: f64,
    /// `f(x̄)`, evaluated on the way.
    pub f_bar: f64,
}

/// `‖∇f(x̄)‖ + D(X)` with the gradient freshly evaluated at the average iterate.
pub fn combo(xs: &[Vector], suite: &ObjectiveSuite) -> Result<Combo> {
    let xbar = mean_vectors(xs);
    let (f_bar, g) = suite.value_grad(&xbar)?;
    let grad_norm = g.norm();
    let cons = dispersion(xs);
    Ok(Combo { grad_norm, cons, combo: grad_norm + cons, f_bar })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactConvexSolve,
    MultistartBest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub f_ref: f64,
    pub x_ref: Vec<f64>,
    pub grad_norm: f64,
    pub provenance: Provenance,
    /// Only convex solves are certified; a multistart best is not a proven
    /// global optimum.
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct ReferenceOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Standard deviation of random restart points around the origin.
    pub restart_scale: f64,
    pub max_iter: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { restarts: 50, seed: 0, restart_scale: 2.0, max_iter: 500 }
    }
}

/// Reference optimum of the averaged objective.
///
/// Convex kinds use a centralized Newton solve from `start` and must reach the
/// certificate `‖∇f(x_ref)‖ ≤ 1e-12·max(1, ‖∇f(start)‖)`. Nonconvex kinds
/// keep the best of `restarts` damped-Newton runs, the first two of which start
/// at `start` and at the origin.
pub fn compute_reference(suite: &ObjectiveSuite, start: &Vector, opts: &ReferenceOptions) -> Result<ReferenceValue> {
    let g0 = suite.value_grad(start)?.1.norm();
    if suite.kind().is_convex() {
        let cert = 1e-12 * g0.max(1.0);
        let (x, f, gn) = damped_newton(suite, start.clone(), opts.max_iter, 1e-13_f64.min(cert))?;
        if !(gn <= cert) {
            return Err(Error::Reference(format!(
                "{}: convex solve stalled at ‖∇f‖ = {gn:e}, certificate needs {cert:e}",
                suite.kind()
            )));
        }
        return Ok(ReferenceValue {
            f_ref: f,
            x_ref: x.as_slice().to_vec(),
            grad_norm: gn,
            provenance: Provenance::ExactConvexSolve,
            certified: true,
        });
    }
    let d = suite.dim();
    let mut rng = rng_from_seed(opts.seed);
    let mut best: Option<(Vector, f64, f64)> = None;
    for r in 0..opts.restarts.max(1) {
        let x0 = match r {
            0 => start.clone(),
            1 => Vector::zeros(d),
            _ => Vector::from_fn(d, |_, _| opts.restart_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
        };
        let Ok((x, f, gn)) = damped_newton(suite, x0, opts.max_iter, 1e-13) else { continue };
        if !f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((x, f, gn));
        }
    }
    let (x, f, gn) = best.ok_or_else(|| Error::Reference("every restart failed".into()))?;
    Ok(ReferenceValue {
        f_ref: f,
        x_ref: x.as_slice().to_vec(),
        grad_norm: gn,
        provenance: Provenance::MultistartBest,
        certified: false,
    })
}

/// Newton's method with a Levenberg shift on indefinite Hessians and an
/// Armijo backtracking line search. Returns the point with the smallest
/// gradient norm seen.
fn damped_newton(suite: &ObjectiveSuite, mut x: Vector, max_iter: usize, gtol: f64) -> Result<(Vector, f64, f64)> {
    let d = suite.dim();
    let mut e = suite.value_grad_hess(&x)?;
    let mut best = (x.clone(), e.value, e.grad.norm());
    let mut stall = 0;
    for _ in 0..max_iter {
        let gn = e.grad.norm();
        if gn <= gtol {
            break;
        }
        let lmin = lambda_min(&e.hess)?;
        let scale = e.hess.norm().max(1.0);
        let shift = if lmin > 1e-10 * scale { 0.0 } else { -lmin + 1e-8 * scale + gn.sqrt() };
        let mut k = e.hess.clone();
        for i in 0..d {
            k[(i, i)] += shift;
        }
        let Some(chol) = Cholesky::new(k) else { break };
        let p = -chol.solve(&e.grad);
        let slope = e.grad.dot(&p);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * alpha;
            if let Ok(te) = suite.value_grad_hess(&trial) {
                let armijo = te.value <= e.value + 1e-4 * alpha * slope;
                // once f stops resolving differences, a full step that shrinks
                // the gradient is still progress
                let unresolved = (te.value - e.value).abs() <= 1e-12 * e.value.abs().max(1.0);
                let polish = alpha == 1.0 && shift == 0.0 && unresolved && te.grad.norm() < gn;
                if te.value.is_finite() && (armijo || polish) {
                    accepted = Some((trial, te));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((nx, ne)) = accepted else { break };
        // far from the solution the gradient norm may grow while f drops;
        // only give up once neither improves
        let decreased = ne.value < e.value;
        x = nx;
        e = ne;
        let ng = e.grad.norm();
        if ng < best.2 {
            best = (x.clone(), e.value, ng);
            stall = 0;
        } else if decreased {
            stall = 0;
        } else {
            stall += 1;
            if stall >= 8 {
                break;
            }
        }
    }
    Ok(best)
}

/// Relative objective gap `|f − f_ref| / |f0 − f_ref|`. A start already at the
/// reference value reports `0` with `degenerate = true`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelF {
    pub value: f64,
    pub degenerate: bool,
}

pub fn rel_f(f_bar: f64, f_ref: f64, f0: f64) -> RelF {
    let denom = (f0 - f_ref).abs();
    if denom == 0.0 {
        return RelF { value: 0.0, degenerate: true };
    }
    RelF { value: (f_bar - f_ref).abs() / denom, degenerate: false }
}

/// Bytes sent, split by protocol stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageBytes {
    /// Pre-mixing of the two vectors `(x, g)`.
    pub a_vec: u64,
    /// Pre-mixing of the Hessian tracker.
    pub a_mat: u64,
    /// Post-mixing of the trial point.
    pub c: u64,
    /// Gradient-tracker mixing.
    pub d_vec: u64,
    /// Hessian-tracker mixing.
    pub d_mat: u64,
}

impl StageBytes {
    pub fn total(&self) -> u64 {
        self.a_vec + self.a_mat + self.c + self.d_vec + self.d_mat
    }

    pub fn hessian(&self) -> u64 {
        self.a_mat + self.d_mat
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            a_vec: self.a_vec * k,
            a_mat: self.a_mat * k,
            c: self.c * k,
            d_vec: self.d_vec * k,
            d_mat: self.d_mat * k,
        }
    }
}

impl Add for StageBytes {
    type Output = StageBytes;
    fn add(self, o: Self) -> Self {
        Self {
            a_vec: self.a_vec + o.a_vec,
            a_mat: self.a_mat + o.a_mat,
            c: self.c + o.c,
            d_vec: self.d_vec + o.d_vec,
            d_mat: self.d_mat + o.d_mat,
        }
    }
}

impl AddAssign for StageBytes {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Wire encoding of one Hessian-tracker message in the tracker stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HessianPayload {
    /// Upper triangle, `d(d+1)/2` floats.
    Dense,
    /// `entries` retained `(row, col, value)` triples.
    TopK { entries: usize },
    /// `rank` eigenpairs, `r(d+1)` floats.
    LowRank { rank: usize },
    /// Lazy iteration: no Hessian message.
    Skipped,
}

impl HessianPayload {
    pub fn bytes(self, d: usize) -> u64 {
        let d = d as u64;
        match self {
            HessianPayload::Dense => FLOAT_BYTES * d * (d + 1) / 2,
            HessianPayload::TopK { entries } => (FLOAT_BYTES + 2 * INDEX_BYTES) * entries as u64,
            HessianPayload::LowRank { rank } => FLOAT_BYTES * rank as u64 * (d + 1),
            HessianPayload::Skipped => 0,
        }
    }
}

/// Communication pattern of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundPlan {
    /// Vector pre-mixing rounds `τ_k`.
    pub tau: usize,
    /// Post-mixing and tracker rounds `t_k`.
    pub t: usize,
    /// Hessian pre-mixing rounds (`≤ τ_k`).
    pub premix_matrix_rounds: usize,
    pub tracker_hessian: HessianPayload,
}

/// Bytes one agent with `degree` neighbors sends in one outer iteration.
pub fn comm_bytes(d: usize, plan: &RoundPlan, degree: usize) -> StageBytes {
    let deg = degree as u64;
    let vec_bytes = FLOAT_BYTES * d as u64;
    let dense = HessianPayload::Dense.bytes(d);
    StageBytes {
        a_vec: deg * plan.tau as u64 * 2 * vec_bytes,
        a_mat: deg * plan.premix_matrix_rounds as u64 * dense,
        c: deg * plan.t as u64 * vec_bytes,
        d_vec: deg * plan.t as u64 * vec_bytes,
        d_mat: deg * plan.t as u64 * plan.tracker_hessian.bytes(d),
    }
}

/// `8 |N_i| (τ + t) (2d + d(d+1)/2)`: the uncompressed per-agent total.
pub fn closed_form_bytes(d: usize, tau: usize, t: usize, degree: usize) -> u64 {
    let d = d as u64;
    FLOAT_BYTES * degree as u64 * (tau + t) as u64 * (2 * d + d * (d + 1) / 2)
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f_bar: f64,
    pub grad_norm: f64,
    pub cons: f64,
    pub combo: f64,
    pub rel_f: f64,
    /// Running minimum of `rel_f` up to and including `k`.
    pub rel_f_min: f64,
    /// `D(G̃_k)`, zero where the method has no tracker.
    pub disp_g: f64,
    /// `D(H̃_k)` in the Frobenius norm.
    pub disp_h: f64,
    pub lambda_mean: f64,
    pub delta_mean: f64,
    /// Mean scaling `M` in use (per-agent for adaptive runs).
    pub m_mean: f64,
    pub tau: usize,
    pub t: usize,
    /// Cumulative network-wide bytes after iteration `k`.
    pub bytes: StageBytes,
}

pub const CSV_SCHEMA: &str = "# disgrem-iterations v1";

pub const CSV_COLUMNS: [&str; 20] = [
    "k", "f_bar", "grad_norm", "cons", "combo", "rel_f", "rel_f_min", "disp_g", "disp_h", "lambda_mean",
    "delta_mean", "m_mean", "tau", "t", "bytes_a_vec", "bytes_a_mat", "bytes_c", "bytes_d_vec", "bytes_d_mat",
    "bytes_total",
];

impl IterationRecord {
    pub fn csv_fields(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:e}");
        vec![
            self.k.to_string(),
            f(self.f_bar),
            f(self.grad_norm),
            f(self.cons),
            f(self.combo),
            f(self.rel_f),
            f(self.rel_f_min),
            f(self.disp_g),
            f(self.disp_h),
            f(self.lambda_mean),
            f(self.delta_mean),
            f(self.m_mean),
            self.tau.to_string(),
            self.t.to_string(),
            self.bytes.a_vec.to_string(),
            self.bytes.a_mat.to_string(),
            self.bytes.c.to_string(),
            self.bytes.d_vec.to_string(),
            self.bytes.d_mat.to_string(),
            self.bytes.total().to_string(),
        ]
    }
}

/// Writes the per-iteration CSV: a schema comment line, a header and one row
/// per record.
pub fn write_csv<W: std::io::Write>(mut out: W, records: &[IterationRecord]) -> Result<()> {
    writeln!(out, "{CSV_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Terminal facts about one run that success counting needs.
pub trait RunOutcome {
    fn min_rel_f(&self) -> f64;
    fn diverged(&self) -> bool;
}

/// Fraction of runs whose running-best relF reached `eps` without diverging.
pub fn success_rate<R: RunOutcome>(runs: &[R], eps: f64) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    let ok = runs.iter().filter(|r| !r.diverged() && r.min_rel_f() <= eps).count();
    ok as f64 / runs.len() as f64
}

/// Median of a slice (NaNs are dropped). `None` on empty input.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// `‖mean(H) − target‖_F`, the drift of a stacked Hessian tracker.
pub fn mean_matrix_drift(blocks: &[Matrix], target: &Matrix) -> f64 {
    (crate::linalg::mean_matrices(blocks) - target).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{build_suite, ObjectiveKind, ObjectiveParams};

    struct Out(f64, bool);
    impl RunOutcome for Out {
        fn min_rel_f(&self) -> f64 {
            self.0
        }
        fn diverged(&self) -> bool {
            self.1
        }
    }

    #[test]
    fn dispersion_examples() {
        let z = vec![Vector::from_vec(vec![0.0]), Vector::from_vec(vec![2.0])];
        assert!((dispersion(&z) - 1.0).abs() < 1e-15);
        let same = vec![Vector::from_vec(vec![3.0, 1.0]); 4];
        assert_eq!(dispersion(&same), 0.0);
        let shift = Vector::from_vec(vec![10.0]);
        let moved: Vec<Vector> = z.iter().map(|b| b + &shift).collect();
        assert!((dispersion(&moved) - dispersion(&z)).abs() < 1e-14);
    }

    #[test]
    fn combo_at_consensus_equals_gradient_norm() {
        let s = build_suite(ObjectiveKind::Styblinski, 3, 4, 0, &ObjectiveParams::default(), None).unwrap();
        let x = Vector::from_element(4, 0.3);
        let c = combo(&vec![x.clone(); 3], &s).unwrap();
        assert_eq!(c.cons, 0.0);
        assert_eq!(c.combo, s.value_grad(&x).unwrap().1.norm());
        let spread = vec![x.clone(), x.clone() * 2.0, x * 0.5];
        let c = combo(&spread, &s).unwrap();
        assert!(c.combo >= c.grad_norm.max(c.cons));
        assert_eq!(c.combo, c.grad_norm + c.cons);
    }

    #[test]
    fn rel_f_examples() {
        assert_eq!(rel_f(5.0, 1.0, 5.0).value, 1.0);
        assert_eq!(rel_f(1.0, 1.0, 5.0).value, 0.0);
        let degenerate = rel_f(1.0, 1.0, 1.0);
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.value, 0.0);
    }

    #[test]
    fn two_dimensional_byte_example() {
        let plan = RoundPlan { tau: 1, t: 1, premix_matrix_rounds: 1, tracker_hessian: HessianPayload::Dense };
        assert_eq!(comm_bytes(2, &plan, 1).total(), 112);
        assert_eq!(closed_form_bytes(2, 1, 1, 1), 112);
    }

    #[test]
    fn lazy_skip_drops_only_the_matrix_term() {
        let dense = RoundPlan { tau: 3, t: 3, premix_matrix_rounds: 3, tracker_hessian: HessianPayload::Dense };
        let lazy = RoundPlan { tracker_hessian: HessianPayload::Skipped, ..dense };
        let a = comm_bytes(5, &dense, 2);
        let b = comm_bytes(5, &lazy, 2);
        assert_eq!(b.d_mat, 0);
        assert_eq!((a.a_vec, a.c, a.d_vec), (b.a_vec, b.c, b.d_vec));
    }

    #[test]
    fn low_rank_payload() {
        assert_eq!(HessianPayload::LowRank { rank: 3 }.bytes(10), 8 * 3 * 11);
        assert_eq!(HessianPayload::TopK { entries: 7 }.bytes(10), 16 * 7);
    }

    #[test]
    fn success_rates() {
        let all_div = [Out(0.0, true), Out(1e-9, true)];
        assert_eq!(success_rate(&all_div, 1e-6), 0.0);
        let mixed = [Out(1e-7, false), Out(1e-3, false), Out(1e-9, true), Out(0.5, false)];
        assert_eq!(success_rate(&mixed, 1e-6), 0.25);
        assert_eq!(success_rate(&mixed, 1e300), 0.75);
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn reference_for_ridge_matches_normal_equations() {
        let s = build_suite(ObjectiveKind::Ridge, 3, 6, 5, &ObjectiveParams::default(), None).unwrap();
        let r = compute_reference(&s, &Vector::zeros(6), &ReferenceOptions::default()).unwrap();
        assert_eq!(r.provenance, Provenance::ExactConvexSolve);
        // f is quadratic: x* = −H⁻¹ ∇f(0)
        let e = s.value_grad_hess(&Vector::zeros(6)).unwrap();
        let xs = e.hess.clone().cholesky().unwrap().solve(&(-&e.grad));
        let fs = s.value(&xs).unwrap();
        assert!((r.f_ref - fs).abs() <= 1e-10 * fs.abs().max(1.0));
    }

    #[test]
    fn reference_for_rosenbrock_is_zero() {
        let s = build_suite(ObjectiveKind::Rosenbrock, 2, 4, 0, &ObjectiveParams::default(), None).unwrap();
        let r = compute_reference(&s, &Vector::zeros(4), &ReferenceOptions { restarts: 5, ..Default::default() }).unwrap();
        assert_eq!(r.provenance, Provenance::MultistartBest);
        assert!(!r.certified);
        assert!(r.f_ref.abs() < 1e-20, "{}", r.f_ref);
    }

    #[test]
    fn reference_for_styblinski_is_separable_minimum() {
        // 1-D oracle: golden-section on the left basin of x⁴ − 16x² + 5x
        let f = |x: f64| x.powi(4) - 16.0 * x * x + 5.0 * x;
        let (mut a, mut b) = (-4.0, 0.0);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let per = f(0.5 * (a + b));
        let s = build_suite(ObjectiveKind::Styblinski, 2, 30, 0, &ObjectiveParams::default(), None).unwrap();
        let r = compute_reference(&s, &Vector::zeros(30), &ReferenceOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!((r.f_ref - 30.0 * per).abs() < 1e-9, "{} vs {}", r.f_ref, 30.0 * per);
    }

    #[test]
    fn csv_has_schema_and_header() {
        let rec = IterationRecord {
            k: 0,
            f_bar: 1.5,
            grad_norm: 0.0,
            cons: 0.0,
            combo: 0.0,
            rel_f: 1.0,
            rel_f_min: 1.0,
            disp_g: 0.0,
            disp_h: 0.0,
            lambda_mean: 0.0,
            delta_mean: 0.0,
            m_mean: 2.0,
            tau: 1,
            t: 1,
            bytes: StageBytes::default(),
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_SCHEMA));
        assert!(lines.next().unwrap().starts_with("k,f_bar,grad_norm"));
        assert!(lines.next().unwrap().starts_with("0,1.5e0,"));
    }
}
