//! Browser bindings: KM and P-P for two pasted samples, a bridge-model
//! power curve, and the sup-sign cycle. Every export returns JSON text.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use survcdf::hypothesis::{ks_distance, supsign_cycle_demo};
use survcdf::power::{bridge_power, BridgeModel};
use survcdf::projections::{auc_probability, pp_curve, rmst};
use survcdf::{km_estimate, RngPolicy, StepCdf, SurvivalObservation};
use wasm_bindgen::prelude::*;

/// One pasted observation: `[t, 1]` event, `[t, 0]` censored, `[null, 1]`
/// ghost.
#[derive(Deserialize)]
struct Obs(Option<f64>, u8);

#[derive(Serialize)]
struct Curve {
    knots: Vec<f64>,
    values: Vec<f64>,
    ghost_mass: f64,
    rmst: f64,
}

#[derive(Serialize)]
struct KmPp {
    a: Curve,
    b: Curve,
    pp: Vec<(f64, f64)>,
    auc_pp: f64,
    p_b_before_a: f64,
    ks_d: f64,
    ks_sup_time: f64,
    ks_sign: i8,
}

fn parse_sample(text: &str, tau: f64, label: &str) -> Result<StepCdf, String> {
    let obs: Vec<Obs> = serde_json::from_str(text).map_err(|e| format!("sample {label}: {e}"))?;
    if obs.is_empty() {
        return Err(format!("sample {label} is empty"));
    }
    let mut out = Vec::with_capacity(obs.len());
    for (i, Obs(t, e)) in obs.into_iter().enumerate() {
        // Each observation is its own episode here.
        let id: Arc<str> = Arc::from(format!("{label}{i}"));
        out.push(match (t, e) {
            (None, _) => SurvivalObservation::ghost(id),
            (Some(t), _) if !(t >= 0.0) => return Err(format!("sample {label}: negative or NaN time")),
            (Some(t), 0) => SurvivalObservation::censored(t, id),
            (Some(t), _) => SurvivalObservation::event(t, id),
        });
    }
    Ok(km_estimate(&out, tau))
}

fn curve(f: &StepCdf, tau: f64) -> Result<Curve, String> {
    Ok(Curve {
        knots: f.knots.clone(),
        values: f.values.clone(),
        ghost_mass: f.ghost_mass,
        rmst: rmst(f, tau).map_err(|e| e.to_string())?,
    })
}

pub fn km_pp_json(sample_a: &str, sample_b: &str, tau: f64) -> Result<String, String> {
    if !(tau > 0.0) {
        return Err("tau must be > 0".into());
    }
    let a = parse_sample(sample_a, tau, "a")?;
    let b = parse_sample(sample_b, tau, "b")?;
    let pp = pp_curve(&a, &b, tau);
    let ks = ks_distance(&a, &b, tau);
    let out = KmPp {
        a: curve(&a, tau)?,
        b: curve(&b, tau)?,
        pp: pp.points.iter().map(|p| (p.u, p.v)).collect(),
        auc_pp: pp.auc,
        p_b_before_a: auc_probability(&b, &a, tau),
        ks_d: ks.d,
        ks_sup_time: ks.sup_time,
        ks_sign: ks.sign,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Uniform CDF on `(0, 100]` against the same curve lowered by `gap`.
fn gap_pair(gap: f64) -> Result<(StepCdf, StepCdf), String> {
    let knots: Vec<f64> = (1..=100).map(f64::from).collect();
    let a: Vec<f64> = knots.iter().map(|t| t / 100.0).collect();
    let b: Vec<f64> = a.iter().map(|v| (v - gap).max(0.0)).collect();
    let (kb, vb): (Vec<f64>, Vec<f64>) = knots.iter().zip(&b).filter(|(_, v)| **v > 0.0).map(|(k, v)| (*k, *v)).unzip();
    let fa = StepCdf::from_parts(knots.clone(), a, 0.0, 100.0).map_err(|e| e.to_string())?;
    let fb = StepCdf::from_parts(kb, vb, gap, 100.0).map_err(|e| e.to_string())?;
    Ok((fa, fb))
}

#[derive(Serialize)]
struct PowerOut {
    n_cell: Vec<usize>,
    power: Vec<f64>,
    n80: Option<usize>,
    critical_value: f64,
}

pub fn bridge_power_json(gap: f64, n_objects: usize, m_o: f64, design_effect: f64, n_max: usize, n_sim: usize, seed: u64) -> Result<String, String> {
    if !(gap > 0.0 && gap < 1.0) || n_objects == 0 || n_max == 0 || n_objects > 20 {
        return Err("need 0 < gap < 1, 1 <= objects <= 20 and n_max >= 1".into());
    }
    let (fa, fb) = gap_pair(gap)?;
    let pairs = (0..n_objects).map(|i| (format!("o{i}"), fa.clone(), fb.clone())).collect();
    let model = BridgeModel { pairs, tau: 100.0, m_o, design_effect, grid_size: 512, n_sim: n_sim.clamp(100, 20_000) };
    let n_grid: Vec<usize> = (1..=n_max).collect();
    let curve = bridge_power(&model, &n_grid, 0.05, &RngPolicy::new(seed)).map_err(|e| e.to_string())?;
    let out = PowerOut {
        n_cell: curve.points.iter().map(|p| p.n_cell).collect(),
        power: curve.points.iter().map(|p| p.power).collect(),
        n80: curve.n80,
        critical_value: curve.critical_value,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn supsign_json() -> Result<String, String> {
    let demo = supsign_cycle_demo().map_err(|e| e.to_string())?;
    let cdfs: Vec<serde_json::Value> = demo
        .cdfs
        .iter()
        .map(|(name, f)| serde_json::json!({ "name": name, "knots": f.knots, "values": f.values, "ghost_mass": f.ghost_mass }))
        .collect();
    serde_json::to_string(&serde_json::json!({ "tau": demo.tau, "cdfs": cdfs, "table": demo.table })).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn km_pp(sample_a: &str, sample_b: &str, tau: f64) -> Result<String, JsError> {
    km_pp_json(sample_a, sample_b, tau).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn power_curve(gap: f64, n_objects: usize, m_o: f64, design_effect: f64, n_max: usize, n_sim: usize, seed: u64) -> Result<String, JsError> {
    bridge_power_json(gap, n_objects, m_o, design_effect, n_max, n_sim, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn supsign() -> Result<String, JsError> {
    supsign_json().map_err(|e| JsError::new(&e))
}
