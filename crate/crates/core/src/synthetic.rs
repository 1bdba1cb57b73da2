//! Parametric cohort generator with closed-form truth.
//!
//! An operation is a ghost with probability `ghost_prob`; otherwise its
//! time is `exp(episode_sigma·Z_episode) · LogNormal(log_mu, log_sigma)`.
//! Marginally the finite part is lognormal with scale
//! `√(log_sigma² + episode_sigma²)`, which gives the true CDF, RMST and
//! raw-time ICC without numeric integration.

use std::collections::HashSet;
use std::io::Read;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::{build_cohort, Cohort, EpisodeLog, Outcome, Side};
use crate::resample::RngPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCell {
    pub policy: String,
    pub object: String,
    pub log_mu: f64,
    pub log_sigma: f64,
    #[serde(default)]
    pub ghost_prob: f64,
    #[serde(default)]
    pub episode_sigma: f64,
    pub ops_per_episode: u32,
    /// Overrides the spec-level episode count for this cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_episodes: Option<usize>,
    /// Overrides the spec-level timeout for this cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_episode: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub reference_policy: String,
    pub n_episodes: usize,
    pub tau_episode: f64,
    pub cells: Vec<SyntheticCell>,
}

impl SyntheticCell {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("cell ({}, {}): {m}", self.policy, self.object)));
        if self.policy.is_empty() || self.object.is_empty() {
            return bad("policy and object must be nonempty");
        }
        if !(self.log_sigma > 0.0) || !self.log_mu.is_finite() {
            return bad("need finite log_mu and log_sigma > 0");
        }
        if !(0.0..=1.0).contains(&self.ghost_prob) {
            return bad("ghost_prob must lie in [0, 1]");
        }
        if !(self.episode_sigma >= 0.0) {
            return bad("episode_sigma must be >= 0");
        }
        if self.ops_per_episode == 0 {
            return bad("ops_per_episode must be >= 1");
        }
        if self.tau_episode.is_some_and(|t| !(t > 0.0)) {
            return bad("tau_episode must be > 0");
        }
        Ok(())
    }

    /// Log-scale spread of a finite operation time after integrating out
    /// the episode effect.
    pub fn marginal_sigma(&self) -> f64 {
        self.log_sigma.hypot(self.episode_sigma)
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::invalid("synthetic spec has no cells"));
        }
        if !(self.tau_episode > 0.0) {
            return Err(Error::invalid("tau_episode must be > 0"));
        }
        let mut seen = HashSet::new();
        for c in &self.cells {
            c.validate()?;
            if !seen.insert((&c.policy, &c.object)) {
                return Err(Error::invalid(format!("duplicate cell ({}, {})", c.policy, c.object)));
            }
        }
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let spec: Self = serde_json::from_reader(reader)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn cell(&self, policy: &str, object: &str) -> Option<&SyntheticCell> {
        self.cells.iter().find(|c| c.policy == policy && c.object == object)
    }

    fn tau_of(&self, c: &SyntheticCell) -> f64 {
        c.tau_episode.unwrap_or(self.tau_episode)
    }

    /// Largest per-cell timeout; used as the cohort's extraction horizon.
    pub fn max_tau_episode(&self) -> f64 {
        self.cells.iter().map(|c| self.tau_of(c)).fold(self.tau_episode, f64::max)
    }
}

fn side<R: Rng>(rng: &mut R) -> Side {
    if rng.random::<bool>() {
        Side::Left
    } else {
        Side::Right
    }
}

fn episode(cell: &SyntheticCell, tau_episode: f64, id: String, rng: &mut ChaCha8Rng) -> EpisodeLog {
    let z: f64 = rng.sample(StandardNormal);
    let effect = (cell.episode_sigma * z).exp();
    let base = LogNormal::new(cell.log_mu, cell.log_sigma).expect("validated lognormal parameters");
    let mut clock = 0.0;
    let mut placements = Vec::new();
    let mut lost = 0;
    let mut timed_out = false;
    for _ in 0..cell.ops_per_episode {
        if rng.random::<f64>() < cell.ghost_prob {
            lost += 1;
            continue;
        }
        let x = effect * base.sample(rng);
        if clock + x > tau_episode {
            timed_out = true;
            break;
        }
        clock += x;
        placements.push(clock);
    }
    let (duration_s, outcome) = if timed_out {
        (tau_episode, Outcome::RanOutOfTime)
    } else {
        ((clock + 1.0).min(tau_episode), Outcome::Success)
    };
    EpisodeLog {
        episode_id: id,
        policy: cell.policy.clone(),
        object: cell.object.clone(),
        duration_s,
        placement_times_s: placements,
        items_total: cell.ops_per_episode,
        items_lost_outside: lost,
        items_dropped_uncollected: 0,
        outcome,
        camera_side: Some(side(rng)),
        tote_side: Some(side(rng)),
    }
}

/// Episode logs for every cell; cell `i` draws from stream
/// `("synthetic", i)`.
pub fn generate_episodes(spec: &SyntheticSpec, rng: &RngPolicy) -> Result<Vec<EpisodeLog>> {
    spec.validate()?;
    let mut out = Vec::new();
    for (i, cell) in spec.cells.iter().enumerate() {
        let mut stream = rng.stream("synthetic", i as u64);
        let tau = spec.tau_of(cell);
        for k in 0..cell.n_episodes.unwrap_or(spec.n_episodes) {
            let id = format!("{}-{}-{:05}", cell.policy, cell.object, k);
            out.push(episode(cell, tau, id, &mut stream));
        }
    }
    Ok(out)
}

pub fn generate_cohort(spec: &SyntheticSpec, rng: &RngPolicy) -> Result<Cohort> {
    build_cohort(generate_episodes(spec, rng)?, &spec.reference_policy, spec.max_tau_episode())
}

/// `(1 − ghost_prob)·Φ((ln t − μ)/σ_m)` at a single time.
pub fn true_cdf_at(cell: &SyntheticCell, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let z = (t.ln() - cell.log_mu) / cell.marginal_sigma();
    (1.0 - cell.ghost_prob) * Normal::standard().cdf(z)
}

pub fn true_cdf(cell: &SyntheticCell, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&t| true_cdf_at(cell, t)).collect()
}

/// `∫₀^τ (1 − F)` from the lognormal partial expectation.
pub fn true_rmst(cell: &SyntheticCell, tau: f64) -> f64 {
    let s = cell.marginal_sigma();
    let z = (tau.ln() - cell.log_mu) / s;
    let phi = Normal::standard();
    let int_f = tau * phi.cdf(z) - (cell.log_mu + s * s / 2.0).exp() * phi.cdf(z - s);
    tau - (1.0 - cell.ghost_prob) * int_f
}

/// `sup_{0<t≤τ} |F_a − F_b|` of the true CDFs, maximized on a fine log
/// grid and refined by golden-section search around the best point.
pub fn true_sup_gap(a: &SyntheticCell, b: &SyntheticCell, tau: f64) -> f64 {
    let gap = |lt: f64| (true_cdf_at(a, lt.exp()) - true_cdf_at(b, lt.exp())).abs();
    let (lo, hi) = ((tau * 1e-6).ln(), tau.ln());
    let n = 20_000;
    let step = (hi - lo) / n as f64;
    let best = (0..=n).map(|i| lo + i as f64 * step).max_by(|x, y| gap(*x).total_cmp(&gap(*y))).unwrap();
    let (mut l, mut r) = ((best - step).max(lo), (best + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (m1, m2) = (r - g * (r - l), l + g * (r - l));
        if gap(m1) < gap(m2) {
            l = m1;
        } else {
            r = m2;
        }
    }
    gap((l + r) / 2.0).max(gap(best))
}

/// Raw-time intra-episode correlation of finite operation times:
/// `(e^{σe²} − 1) / (e^{σe² + σ²} − 1)`.
pub fn true_icc(cell: &SyntheticCell) -> f64 {
    let a = cell.episode_sigma.powi(2);
    let b = cell.log_sigma.powi(2);
    a.exp_m1() / (a + b).exp_m1()
}
