//! Subsampling experiments: detection rate against per-cell episode count,
//! and Type-I calibration of the macro-KS test under constructed nulls.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::macro_ks_arms;
use crate::ingest::{Cohort, EpisodeRecord, Side};
use crate::par;
use crate::projections::{mean, rmst_unchecked};
use crate::resample::{two_sided_multi_p, RngPolicy};
use crate::survival::km_from_episodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    F30,
    F60,
    #[serde(rename = "RMST")]
    Rmst,
    #[serde(rename = "KS")]
    Ks,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::F30, Metric::F60, Metric::Rmst, Metric::Ks];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F30" => Ok(Metric::F30),
            "F60" => Ok(Metric::F60),
            "RMST" => Ok(Metric::Rmst),
            "KS" => Ok(Metric::Ks),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::F30 => "F30",
            Metric::F60 => "F60",
            Metric::Rmst => "RMST",
            Metric::Ks => "KS",
        })
    }
}

fn default_outer() -> usize {
    300
}
fn default_inner() -> usize {
    200
}
fn default_tau_eff() -> f64 {
    120.0
}
fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySpec {
    pub pair: (String, String),
    pub metrics: Vec<Metric>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_outer")]
    pub outer_trials: usize,
    #[serde(default = "default_inner")]
    pub inner_boot: usize,
    #[serde(default = "default_tau_eff")]
    pub tau_eff: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl EfficiencySpec {
    pub fn new(pair: (String, String), n_grid: Vec<usize>) -> Self {
        Self {
            pair,
            metrics: Metric::ALL.to_vec(),
            n_grid,
            outer_trials: default_outer(),
            inner_boot: default_inner(),
            tau_eff: default_tau_eff(),
            alpha: default_alpha(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::invalid("no metrics requested"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] == 0 {
            return Err(Error::invalid("n_grid must be positive and strictly ascending"));
        }
        if self.outer_trials == 0 || self.inner_boot == 0 || !(self.tau_eff > 0.0) {
            return Err(Error::invalid("need outer_trials, inner_boot and tau_eff > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub n: usize,
    pub metric: Metric,
    pub pair: String,
    pub detection_rate: f64,
}

pub fn pair_label(a: &str, b: &str) -> String {
    format!("{a} vs {b}")
}

/// Draw `n` episodes per cell with replacement.
fn subsample<'a, R: Rng>(arm: &[Vec<&'a EpisodeRecord>], n: usize, rng: &mut R) -> Vec<Vec<&'a EpisodeRecord>> {
    arm.iter().map(|cell| (0..n).map(|_| cell[rng.random_range(0..cell.len())]).collect()).collect()
}

/// Macro F(30), F(60) and RMST at `tau` for one arm.
fn scalar_metrics<E: crate::ingest::HasObservations>(arm: &[Vec<E>], tau: f64) -> [f64; 3] {
    let cdfs: Vec<_> = arm.iter().map(|c| km_from_episodes(c, tau)).collect();
    let m = |f: &dyn Fn(&crate::survival::StepCdf) -> f64| mean(&cdfs.iter().map(f).collect::<Vec<_>>());
    [m(&|c| c.eval(30.0)), m(&|c| c.eval(60.0)), m(&|c| rmst_unchecked(c, tau))]
}

/// Inner p-values of one subsampling trial, in `metrics` order.
pub fn trial_p_values(
    objects: &[String],
    a: &[Vec<&EpisodeRecord>],
    b: &[Vec<&EpisodeRecord>],
    metrics: &[Metric],
    tau: f64,
    inner_boot: usize,
    rng: &RngPolicy,
) -> Result<Vec<f64>> {
    let wants_scalar = metrics.iter().any(|m| *m != Metric::Ks);
    let scalar_p = if wants_scalar {
        two_sided_multi_p(a, b, 3, |s| scalar_metrics(s, tau).map(Some).to_vec(), inner_boot, &rng.child("scalar", 0))?
    } else {
        Vec::new()
    };
    metrics
        .iter()
        .map(|m| match m {
            Metric::F30 => Ok(scalar_p[0]),
            Metric::F60 => Ok(scalar_p[1]),
            Metric::Rmst => Ok(scalar_p[2]),
            Metric::Ks => Ok(macro_ks_arms(objects, a, b, tau, inner_boot, &rng.child("ks", 0))?.p_value),
        })
        .collect()
}

/// Fraction of outer trials with `p < alpha` for each `(metric, n)`.
pub fn detection_curve(cohort: &Cohort, objects: &[String], spec: &EfficiencySpec, rng: &RngPolicy) -> Result<Vec<DetectionRow>> {
    spec.validate()?;
    let (pa, pb) = (&spec.pair.0, &spec.pair.1);
    let arm_a = cohort.arm(pa, objects)?;
    let arm_b = cohort.arm(pb, objects)?;
    let label = pair_label(pa, pb);
    let mut rows = Vec::new();
    for (ni, &n) in spec.n_grid.iter().enumerate() {
        let per_n = rng.child("efficiency-n", ni as u64);
        let trials: Vec<Result<Vec<f64>>> = par::map_indexed(spec.outer_trials, |t| {
            let trial = per_n.child("trial", t as u64);
            let mut s = trial.stream("subsample", 0);
            let sa = subsample(&arm_a, n, &mut s);
            let sb = subsample(&arm_b, n, &mut s);
            trial_p_values(objects, &sa, &sb, &spec.metrics, spec.tau_eff, spec.inner_boot, &trial)
        });
        let trials: Vec<Vec<f64>> = trials.into_iter().collect::<Result<_>>()?;
        for (k, &metric) in spec.metrics.iter().enumerate() {
            let hits = trials.iter().filter(|p| p[k] < spec.alpha).count();
            rows.push(DetectionRow {
                n,
                metric,
                pair: label.clone(),
                detection_rate: hits as f64 / spec.outer_trials as f64,
            });
        }
    }
    Ok(rows)
}

/// First grid `n` whose detection rate reaches `target`, per metric and
/// pair; `None` when the grid never gets there.
pub fn smallest_n_table(rows: &[DetectionRow], target: f64) -> BTreeMap<(String, Metric), Option<usize>> {
    let mut out: BTreeMap<(String, Metric), Option<usize>> = BTreeMap::new();
    let mut sorted: Vec<&DetectionRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    for r in sorted {
        let slot = out.entry((r.pair.clone(), r.metric)).or_insert(None);
        if slot.is_none() && r.detection_rate >= target {
            *slot = Some(r.n);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullSetup {
    /// Split one policy's episodes per object into two random halves.
    SameModelSplit { policy: String },
    /// The same split applied to the reference arm.
    ReferenceSplit,
    /// Permute the labels of two policies within (object, tote side)
    /// strata, keeping per-stratum counts.
    StratumPermutation { a: String, b: String },
}

impl NullSetup {
    pub fn label(&self) -> String {
        match self {
            NullSetup::SameModelSplit { policy } => format!("same_model_split({policy})"),
            NullSetup::ReferenceSplit => "reference_split".into(),
            NullSetup::StratumPermutation { a, b } => format!("stratum_permutation({a},{b})"),
        }
    }
}

fn default_trials() -> usize {
    500
}
fn default_inner_null() -> usize {
    500
}
fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalSpec {
    pub setup: NullSetup,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_inner_null")]
    pub inner_boot: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
}

impl NullCalSpec {
    pub fn new(setup: NullSetup) -> Self {
        Self { setup, trials: default_trials(), inner_boot: default_inner_null(), alphas: default_alphas() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionRate {
    pub alpha: f64,
    pub rate: f64,
    /// `1.96·√(rate(1 − rate)/trials)`.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullCalResult {
    pub setup: String,
    pub trials: usize,
    pub mean_p: f64,
    pub rates: Vec<RejectionRate>,
    /// Episodes left out (missing stratum fields).
    pub excluded_episodes: usize,
    pub p_values: Vec<f64>,
}

type Pair<'a> = (Vec<Vec<&'a EpisodeRecord>>, Vec<Vec<&'a EpisodeRecord>>);

fn split_halves<'a, R: Rng>(arm: &[Vec<&'a EpisodeRecord>], rng: &mut R) -> Pair<'a> {
    arm.iter()
        .map(|cell| {
            let mut c = cell.clone();
            c.shuffle(rng);
            let b = c.split_off(c.len() / 2);
            (c, b)
        })
        .unzip()
}

/// Per object, episodes of both policies grouped by tote side with the
/// count of `a` episodes in each group.
struct Strata<'a> {
    per_object: Vec<Vec<(Vec<&'a EpisodeRecord>, usize)>>,
}

impl<'a> Strata<'a> {
    fn permute<R: Rng>(&self, rng: &mut R) -> Pair<'a> {
        self.per_object
            .iter()
            .map(|groups| {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (eps, n_a) in groups {
                    let mut g = eps.clone();
                    g.shuffle(rng);
                    let rest = g.split_off(*n_a);
                    a.extend(g);
                    b.extend(rest);
                }
                (a, b)
            })
            .unzip()
    }
}

fn build_strata<'a>(a: &[Vec<&'a EpisodeRecord>], b: &[Vec<&'a EpisodeRecord>]) -> (Strata<'a>, usize) {
    let mut excluded = 0;
    let per_object = a
        .iter()
        .zip(b)
        .map(|(ca, cb)| {
            [Side::Left, Side::Right]
                .iter()
                .map(|&side| {
                    let mut eps = Vec::new();
                    let mut n_a = 0;
                    for (cell, is_a) in [(ca, true), (cb, false)] {
                        for &e in cell {
                            if e.log.tote_side == Some(side) {
                                eps.push(e);
                                n_a += is_a as usize;
                            }
                        }
                    }
                    (eps, n_a)
                })
                .filter(|(eps, _)| !eps.is_empty())
                .collect()
        })
        .collect();
    for cell in a.iter().chain(b) {
        excluded += cell.iter().filter(|e| e.log.tote_side.is_none()).count();
    }
    (Strata { per_object }, excluded)
}

fn insufficient(setup: &NullSetup, msg: impl fmt::Display) -> Error {
    Error::invalid(format!("{}: {msg}", setup.label()))
}

fn check_split(setup: &NullSetup, arm: &[Vec<&EpisodeRecord>]) -> Result<()> {
    let total: usize = arm.iter().map(Vec::len).sum();
    if total < 30 {
        return Err(insufficient(setup, format!("needs >= 30 episodes to split, found {total}")));
    }
    if arm.iter().any(|c| c.len() < 2) {
        return Err(insufficient(setup, "every object needs >= 2 episodes to split"));
    }
    Ok(())
}

/// Empirical rejection rates of the macro-KS test on constructed null data.
pub fn null_calibration(cohort: &Cohort, objects: &[String], tau: f64, spec: &NullCalSpec, rng: &RngPolicy) -> Result<NullCalResult> {
    if spec.trials < 100 {
        return Err(Error::invalid("null calibration needs >= 100 trials"));
    }
    if spec.inner_boot == 0 || spec.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::invalid("need inner_boot > 0 and alphas in (0, 1)"));
    }
    let setup = &spec.setup;
    enum Source<'a> {
        Split(Vec<Vec<&'a EpisodeRecord>>),
        Permute(Strata<'a>),
    }
    let (source, excluded) = match setup {
        NullSetup::SameModelSplit { policy } => {
            let arm = cohort.arm(policy, objects)?;
            check_split(setup, &arm)?;
            (Source::Split(arm), 0)
        }
        NullSetup::ReferenceSplit => {
            cohort.require_reference()?;
            let arm = cohort.arm(&cohort.reference_policy, objects)?;
            check_split(setup, &arm)?;
            (Source::Split(arm), 0)
        }
        NullSetup::StratumPermutation { a, b } => {
            if a == b {
                return Err(insufficient(setup, "needs two distinct policies"));
            }
            let (arm_a, arm_b) = (cohort.arm(a, objects)?, cohort.arm(b, objects)?);
            let (strata, excluded) = build_strata(&arm_a, &arm_b);
            for groups in &strata.per_object {
                let n_a: usize = groups.iter().map(|g| g.1).sum();
                let n: usize = groups.iter().map(|g| g.0.len()).sum();
                if n_a == 0 || n_a == n {
                    return Err(insufficient(setup, "every object needs both policies with tote_side recorded"));
                }
            }
            (Source::Permute(strata), excluded)
        }
    };
    let p_values: Vec<Result<f64>> = par::map_indexed(spec.trials, |t| {
        let trial = rng.child("nullcal-trial", t as u64);
        let mut s = trial.stream("construct", 0);
        let (a, b) = match &source {
            Source::Split(arm) => split_halves(arm, &mut s),
            Source::Permute(strata) => strata.permute(&mut s),
        };
        Ok(macro_ks_arms(objects, &a, &b, tau, spec.inner_boot, &trial)?.p_value)
    });
    let p_values: Vec<f64> = p_values.into_iter().collect::<Result<_>>()?;
    let n = p_values.len() as f64;
    let rates = spec
        .alphas
        .iter()
        .map(|&alpha| {
            let rate = p_values.iter().filter(|&&p| p < alpha).count() as f64 / n;
            RejectionRate { alpha, rate, half_width: 1.96 * (rate * (1.0 - rate) / n).sqrt() }
        })
        .collect();
    Ok(NullCalResult {
        setup: setup.label(),
        trials: spec.trials,
        mean_p: mean(&p_values),
        rates,
        excluded_episodes: excluded,
        p_values,
    })
}

/// Mean number of observations per episode over the given policies.
pub fn mean_ops_per_episode(cohort: &Cohort, policies: &[&str]) -> f64 {
    let (mut eps, mut ops) = (0usize, 0usize);
    for p in policies {
        for rec in cohort.episodes_of(p) {
            eps += 1;
            ops += rec.observations.len();
        }
    }
    if eps == 0 {
        0.0
    } else {
        ops as f64 / eps as f64
    }
}
