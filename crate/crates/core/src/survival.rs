//! Kaplan-Meier product-limit estimation with ghost atoms.
//!
//! The estimate is a right-continuous step CDF truncated at `tau_cap`.
//! Ghost observations (`T = ∞`) stay in the risk set up to the cap, where
//! their share of the remaining survival becomes `ghost_mass`; that mass is
//! never part of `values`. Finite events beyond the cap stay at risk and do
//! not jump. At tied times events are processed before censorings.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HasObservations, SurvivalObservation};

/// Slack used when comparing probabilities produced by products of ratios.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub ghost_mass: f64,
    pub n_observations: usize,
    pub n_episodes: usize,
    pub tau_cap: f64,
    /// No events of any kind: the estimate is identically zero.
    #[serde(default)]
    pub degenerate: bool,
}

impl StepCdf {
    /// Build a step CDF from explicit parts, checking the invariants.
    pub fn from_parts(knots: Vec<f64>, values: Vec<f64>, ghost_mass: f64, tau_cap: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::invalid("knots and values differ in length"));
        }
        if !(tau_cap > 0.0) {
            return Err(Error::invalid("tau_cap must be > 0"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|&k| !(k > 0.0 && k <= tau_cap)) {
            return Err(Error::invalid("knots must be strictly increasing within (0, tau_cap]"));
        }
        let mut prev = 0.0;
        for &v in &values {
            if !(v >= prev - PROB_EPS && v <= 1.0 + PROB_EPS) {
                return Err(Error::invalid("values must be nondecreasing within [0, 1]"));
            }
            prev = v;
        }
        if !(ghost_mass >= 0.0) || prev + ghost_mass > 1.0 + PROB_EPS {
            return Err(Error::invalid("ghost mass must be >= 0 and leave the total <= 1"));
        }
        let degenerate = values.last().is_none_or(|&v| v <= 0.0) && ghost_mass <= 0.0;
        Ok(Self {
            knots,
            values,
            ghost_mass,
            n_observations: 0,
            n_episodes: 0,
            tau_cap,
            degenerate,
        })
    }

    /// Right-continuous evaluation. Beyond the cap the last value is
    /// returned; ghost mass is never added.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    /// `F(τ)` at the cap, the highest reachable probability.
    pub fn terminal_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Smallest knot `t` with `F(t) ≥ q`; `None` once `q` exceeds the
    /// reachable maximum.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let idx = self.values.partition_point(|&v| v < q - PROB_EPS);
        self.knots.get(idx).copied()
    }

    pub fn median(&self) -> Option<f64> {
        self.quantile(0.5)
    }

    /// Jump sizes at each knot.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut prev = 0.0;
        self.knots.iter().zip(&self.values).map(move |(&t, &v)| {
            let j = v - prev;
            prev = v;
            (t, j)
        })
    }
}

/// Free-function form of [`StepCdf::eval`].
pub fn cdf_eval(f: &StepCdf, t: f64) -> f64 {
    f.eval(t)
}

/// Free-function form of [`StepCdf::quantile`].
pub fn quantile(f: &StepCdf, q: f64) -> Option<f64> {
    f.quantile(q)
}

/// Sorted union of both knot sets within `(0, tau]`, always ending at `tau`.
pub fn pooled_grid(a: &StepCdf, b: &StepCdf, tau: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(a.knots.len() + b.knots.len() + 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let next = match (a.knots.get(i), b.knots.get(j)) {
            (Some(&x), Some(&y)) => {
                if x <= y {
                    i += 1;
                    if x == y {
                        j += 1;
                    }
                    x
                } else {
                    j += 1;
                    y
                }
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => break,
        };
        if next > tau {
            break;
        }
        if next > 0.0 && grid.last().is_none_or(|&l| next > l) {
            grid.push(next);
        }
    }
    if grid.last() != Some(&tau) {
        grid.push(tau);
    }
    grid
}

/// Kaplan-Meier estimate from observations. `n_episodes` counts distinct
/// episode ids.
pub fn km_estimate<'a, I>(obs: I, tau_cap: f64) -> StepCdf
where
    I: IntoIterator<Item = &'a SurvivalObservation>,
{
    let mut points = Vec::new();
    let mut ghosts = 0usize;
    let mut ids: HashSet<&str> = HashSet::new();
    for o in obs {
        ids.insert(&o.episode_id);
        push_point(o, &mut points, &mut ghosts);
    }
    let mut f = product_limit(points, ghosts, tau_cap);
    f.n_episodes = ids.len();
    f
}

/// Kaplan-Meier estimate over a list of episodes (possibly containing
/// repeats, as in a bootstrap resample). `n_episodes` is the list length.
pub fn km_from_episodes<E: HasObservations>(episodes: &[E], tau_cap: f64) -> StepCdf {
    let n: usize = episodes.iter().map(|e| e.observations().len()).sum();
    let mut points = Vec::with_capacity(n);
    let mut ghosts = 0usize;
    for ep in episodes {
        for o in ep.observations() {
            push_point(o, &mut points, &mut ghosts);
        }
    }
    let mut f = product_limit(points, ghosts, tau_cap);
    f.n_episodes = episodes.len();
    f
}

#[inline]
fn push_point(o: &SurvivalObservation, points: &mut Vec<(f64, bool)>, ghosts: &mut usize) {
    if o.ghost || !o.t.is_finite() {
        *ghosts += 1;
    } else {
        points.push((o.t, o.event));
    }
}

fn product_limit(mut points: Vec<(f64, bool)>, ghosts: usize, tau_cap: f64) -> StepCdf {
    assert!(tau_cap > 0.0, "tau_cap must be positive");
    // Events (true) sort before censorings (false) at equal times.
    points.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let n_obs = points.len() + ghosts;
    let mut at_risk = n_obs;
    let mut surv = 1.0f64;
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < points.len() && points[i].0 < tau_cap {
        let t = points[i].0;
        let (mut d, mut c) = (0usize, 0usize);
        while i < points.len() && points[i].0 == t {
            if points[i].1 {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            surv = surv * (at_risk - d) as f64 / at_risk as f64;
            knots.push(t);
            values.push(1.0 - surv);
        }
        at_risk -= d + c;
    }
    // Finite events exactly at the cap tie with the ghosts placed there.
    let surv_before_cap = surv;
    let at_risk_cap = at_risk;
    let d_cap = points[i..]
        .iter()
        .take_while(|p| p.0 == tau_cap)
        .filter(|p| p.1)
        .count();
    if d_cap > 0 {
        surv = surv * (at_risk_cap - d_cap) as f64 / at_risk_cap as f64;
        knots.push(tau_cap);
        values.push(1.0 - surv);
    }
    let ghost_mass = if ghosts > 0 {
        surv_before_cap * ghosts as f64 / at_risk_cap as f64
    } else {
        0.0
    };
    let degenerate = knots.is_empty() && ghosts == 0;
    StepCdf {
        knots,
        values,
        ghost_mass,
        n_observations: n_obs,
        n_episodes: 0,
        tau_cap,
        degenerate,
    }
}
