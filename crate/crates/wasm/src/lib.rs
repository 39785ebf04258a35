//! wasm-bindgen entry points for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated bindings beyond the functions themselves.

use serde_json::{json, Value};
use ucorr::forest::stream_rng;
use ucorr::simulate::null_dist_experiment;
use ucorr::{
    generate, rank_training_sample, test_independence, train_tree, ForestConfig, RawSample,
    RelationKind, RelationshipSpec, SplitCriterion, TestOptions,
};
use wasm_bindgen::prelude::*;

fn relation(kind: &str, n: usize, noise: f64, seed: u64) -> Result<RawSample, String> {
    let kind: RelationKind = kind.parse().map_err(|e: ucorr::Error| e.to_string())?;
    generate(&RelationshipSpec { kind, n, noise, seed }).map_err(|e| e.to_string())
}

fn forest(trees: usize, seed: u64) -> ForestConfig {
    ForestConfig {
        tree_count: trees,
        ..ForestConfig::default()
    }
    .with_seed(seed)
}

/// Sample points plus the coefficient and its analytic p-value.
pub fn analyze_json(kind: &str, n: usize, noise: f64, trees: usize, seed: u64) -> Result<Value, String> {
    let sample = relation(kind, n, noise, seed)?;
    let res = test_independence(&sample, &forest(trees, seed), &TestOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "xs": sample.xs(),
        "ys": sample.ys(),
        "rho": res.rho,
        "sigma0": res.sigma0,
        "z": res.z,
        "p_value": res.p_value,
        "n": res.n,
        "m": res.m,
    }))
}

/// One tree's leaves in rank space, alongside the ranked sample.
pub fn partition_json(kind: &str, n: usize, noise: f64, gini: bool, seed: u64) -> Result<Value, String> {
    let sample = relation(kind, n, noise, seed)?;
    let ranked = rank_training_sample(&sample).map_err(|e| e.to_string())?;
    let cfg = ForestConfig {
        random_split_fraction: if gini { 0.0 } else { 1.0 },
        ..ForestConfig::default()
    };
    cfg.validate(n).map_err(|e| e.to_string())?;
    let tree_cfg = cfg.tree_config(n, 0);
    debug_assert_eq!(tree_cfg.criterion == SplitCriterion::GiniGain, gini);
    let tree = train_tree(&sample, &tree_cfg, &mut stream_rng(seed, 1)).map_err(|e| e.to_string())?;
    let leaves: Vec<Value> = tree
        .leaves()
        .map(|l| {
            json!({
                "x_lo": l.rect.x_lo, "x_hi": l.rect.x_hi,
                "y_lo": l.rect.y_lo, "y_hi": l.rect.y_hi,
                "n_obs": l.n_obs, "label": l.label,
            })
        })
        .collect();
    Ok(json!({
        "n": n,
        "rx": ranked.rx(),
        "ry": ranked.ry(),
        "leaves": leaves,
    }))
}

/// Histogram of the coefficient on independent samples, with the predicted normal density.
pub fn null_hist_json(n: usize, m: usize, reps: usize, bins: usize, trees: usize, seed: u64) -> Result<Value, String> {
    let cfg = ForestConfig {
        subset_size: Some(m),
        ..forest(trees, seed)
    };
    let s = null_dist_experiment(n, m, reps, bins, 0.5, &cfg, seed).map_err(|e| e.to_string())?;
    let bins: Vec<Value> = s
        .bins
        .iter()
        .map(|b| json!({"lo": b.lo, "hi": b.hi, "count": b.count, "density": b.density, "predicted": b.predicted_density}))
        .collect();
    Ok(json!({
        "mean": s.mean,
        "std": s.std,
        "predicted_sigma": s.predicted_sigma,
        "q95": s.q95,
        "bins": bins,
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze(kind: &str, n: usize, noise: f64, trees: usize, seed: u64) -> Result<String, JsError> {
    to_js(analyze_json(kind, n, noise, trees, seed))
}

#[wasm_bindgen]
pub fn partition(kind: &str, n: usize, noise: f64, gini: bool, seed: u64) -> Result<String, JsError> {
    to_js(partition_json(kind, n, noise, gini, seed))
}

#[wasm_bindgen]
pub fn null_histogram(n: usize, m: usize, reps: usize, bins: usize, trees: usize, seed: u64) -> Result<String, JsError> {
    to_js(null_hist_json(n, m, reps, bins, trees, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_reports_dependence() {
        let v = analyze_json("circle", 150, 0.0, 50, 1).unwrap();
        assert!(v["rho"].as_f64().unwrap() > 0.5);
        assert_eq!(v["xs"].as_array().unwrap().len(), 150);
        assert!(analyze_json("spiral", 150, 0.0, 50, 1).unwrap_err().contains("circle"));
    }

    #[test]
    fn partition_tiles_rank_square() {
        for gini in [true, false] {
            let v = partition_json("cross", 100, 10.0, gini, 3).unwrap();
            let area: u64 = v["leaves"]
                .as_array()
                .unwrap()
                .iter()
                .map(|l| {
                    let d = |a: &str, b: &str| l[b].as_u64().unwrap() - l[a].as_u64().unwrap();
                    d("x_lo", "x_hi") * d("y_lo", "y_hi")
                })
                .sum();
            assert_eq!(area, 100 * 100);
        }
    }

    #[test]
    fn null_histogram_counts_all_reps() {
        let v = null_hist_json(40, 200, 200, 10, 20, 5).unwrap();
        let total: u64 = v["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
        assert_eq!(total, 200);
    }
}
