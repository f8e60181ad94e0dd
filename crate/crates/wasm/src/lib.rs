//! Browser bindings for three small interactive demos. Every entry point
//! returns a JSON string; `www/index.html` plots it on a canvas.

use disgrem::graph::{generate_er_graph, gossip, metropolis_weights};
use disgrem::harness::{self, ExperimentConfig};
use disgrem::linalg::{Matrix, Vector};
use disgrem::metrics::dispersion;
use disgrem::seed::rng_from_seed;
use disgrem::variants::{compress_lowrank, compress_topk};
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn normal(rng: &mut disgrem::seed::Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Gossip on a random graph: per-round dispersion against the `ρᵗ` bound.
pub fn gossip_json(n: usize, p_er: f64, seed: u64, rounds: usize) -> Result<String, String> {
    let g = generate_er_graph(n, p_er, seed).map_err(|e| e.to_string())?;
    let w = metropolis_weights(&g).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let z0: Vec<Vector> = (0..n).map(|_| Vector::from_element(1, normal(&mut rng))).collect();
    let d0 = dispersion(&z0);
    let mut values = vec![z0.iter().map(|v| v[0]).collect::<Vec<_>>()];
    let mut disp = vec![d0];
    let mut bound = vec![d0];
    let mut z = z0;
    for t in 1..=rounds {
        z = gossip(&w, &z, 1).map_err(|e| e.to_string())?;
        values.push(z.iter().map(|v| v[0]).collect());
        disp.push(dispersion(&z));
        bound.push(w.rho().powi(t as i32) * d0);
    }
    Ok(json!({
        "n": n,
        "rho": w.rho(),
        "edges": g.edges(),
        "values": values,
        "dispersion": disp,
        "bound": bound,
    })
    .to_string())
}

/// One trial of `method` on a small instance of `problem`: running-best relF,
/// combo and cumulative megabytes per iteration.
pub fn run_json(problem: &str, method: &str, seed: u64, k_max: usize) -> Result<String, String> {
    let text = format!(
        "problem = {problem}\nmethod = {method}\nmaster_seed = {seed}\nn_agents = 6\nd = 8\nk_max = {k_max}\n\
         synthetic_samples = 240\nsynthetic_dim = 8\nreference_restarts = 10\nmc_trials = 1\n"
    );
    let cfg = ExperimentConfig::parse(&text, &[]).map_err(|e| e.to_string())?;
    let ds = cfg.dataset().map_err(|e| e.to_string())?;
    let setup = harness::setup_trial(&cfg, ds.as_ref(), 0).map_err(|e| e.to_string())?;
    let reference = harness::trial_reference(&cfg, &setup).map_err(|e| e.to_string())?;
    let res = harness::run_trial(&cfg, &setup, Some(reference.f_ref)).map_err(|e| e.to_string())?;
    let r = &res.records;
    Ok(json!({
        "problem": cfg.problem,
        "method": cfg.method.to_string(),
        "rho": setup.w.rho(),
        "stop": format!("{:?}", res.stop),
        "rel_f": r.iter().map(|x| x.rel_f_min).collect::<Vec<_>>(),
        "combo": r.iter().map(|x| x.combo).collect::<Vec<_>>(),
        "megabytes": r.iter().map(|x| x.bytes.total() as f64 / 1e6).collect::<Vec<_>>(),
    })
    .to_string())
}

/// A random symmetric matrix next to its Top-k and rank-`r` approximations.
pub fn compression_json(d: usize, seed: u64, fraction: f64, rank: usize) -> Result<String, String> {
    if d == 0 || d > 64 {
        return Err("d must be in [1, 64]".into());
    }
    let mut rng = rng_from_seed(seed);
    let a = Matrix::from_fn(d, d, |_, _| normal(&mut rng));
    let m = (&a + a.transpose()) * 0.5;
    let tk = compress_topk(&m, fraction).map_err(|e| e.to_string())?;
    let lr = compress_lowrank(&m, rank).map_err(|e| e.to_string())?;
    let low = lr.reconstruct();
    let rows = |x: &Matrix| (0..d).map(|i| x.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
    Ok(json!({
        "d": d,
        "original": rows(&m),
        "topk": rows(&tk.matrix),
        "topk_entries": tk.entries,
        "topk_error": (&m - &tk.matrix).norm(),
        "lowrank": rows(&low),
        "lowrank_error": (&m - &low).norm(),
        "lowrank_tail": lr.tail_norm(),
        "eigenvalues": lr.values.iter().copied().collect::<Vec<_>>(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn gossip_demo(n: usize, p_er: f64, seed: u64, rounds: usize) -> Result<String, JsValue> {
    gossip_json(n, p_er, seed, rounds).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_demo(problem: &str, method: &str, seed: u64, k_max: usize) -> Result<String, JsValue> {
    run_json(problem, method, seed, k_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compression_demo(d: usize, seed: u64, fraction: f64, rank: usize) -> Result<String, JsValue> {
    compression_json(d, seed, fraction, rank).map_err(|e| JsValue::from_str(&e))
}
