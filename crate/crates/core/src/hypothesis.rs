//! Two-sample comparisons of per-object CDF families: macro-averaged KS
//! with pooled-resample calibration, stratified logrank, Bonferroni, and
//! the pair verdict combining significance, direction and crossing.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::ingest::{Cohort, HasObservations};
use crate::projections::{auc_probability, hrt_ratios, mean, rmst_unchecked, ScalarConfig};
use crate::resample::{cluster_bootstrap_ci, pooled_null_resample, BootstrapResult, RngPolicy};
use crate::survival::{km_from_episodes, pooled_grid, StepCdf};

/// Lobes of `F_a − F_b` smaller than this are treated as KM step noise when
/// looking for crossings.
pub const CROSSING_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsDistance {
    pub d: f64,
    pub sup_time: f64,
    /// Sign of `F_a − F_b` at `sup_time`; 0 only when `d = 0`.
    pub sign: i8,
}

/// `sup |F_a − F_b|` over the pooled grid on `(0, tau]`; the earliest time
/// wins ties.
pub fn ks_distance(a: &StepCdf, b: &StepCdf, tau: f64) -> KsDistance {
    let mut best = KsDistance { d: 0.0, sup_time: tau, sign: 0 };
    for t in pooled_grid(a, b, tau) {
        let diff = a.eval(t) - b.eval(t);
        if diff.abs() > best.d {
            best = KsDistance { d: diff.abs(), sup_time: t, sign: if diff > 0.0 { 1 } else { -1 } };
        }
    }
    best
}

/// Largest positive and most negative value of `F_a − F_b` on the grid.
pub fn signed_extremes(a: &StepCdf, b: &StepCdf, tau: f64) -> (f64, f64) {
    pooled_grid(a, b, tau).into_iter().fold((0.0_f64, 0.0_f64), |(hi, lo), t| {
        let d = a.eval(t) - b.eval(t);
        (hi.max(d), lo.min(d))
    })
}

pub fn crosses(a: &StepCdf, b: &StepCdf, tau: f64) -> bool {
    let (hi, lo) = signed_extremes(a, b, tau);
    hi > CROSSING_FLOOR && lo < -CROSSING_FLOOR
}

fn km_arm<E: HasObservations>(arm: &[Vec<E>], tau: f64) -> Vec<StepCdf> {
    arm.iter().map(|cell| km_from_episodes(cell, tau)).collect()
}

/// Per-object KS distances between two arms (same object order).
pub fn per_object_ks<E: HasObservations>(a: &[Vec<E>], b: &[Vec<E>], tau: f64) -> Vec<KsDistance> {
    a.iter()
        .zip(b)
        .map(|(ca, cb)| ks_distance(&km_from_episodes(ca, tau), &km_from_episodes(cb, tau), tau))
        .collect()
}

/// Equal-weight mean of the per-object KS distances.
pub fn macro_d<E: HasObservations>(a: &[Vec<E>], b: &[Vec<E>], tau: f64) -> f64 {
    let ds: Vec<f64> = per_object_ks(a, b, tau).iter().map(|k| k.d).collect();
    mean(&ds)
}

/// Macro RMST per arm.
pub fn macro_rmst<E: HasObservations>(arm: &[Vec<E>], tau: f64) -> f64 {
    let r: Vec<f64> = arm.iter().map(|c| rmst_unchecked(&km_from_episodes(c, tau), tau)).collect();
    mean(&r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub per_object: BTreeMap<String, KsDistance>,
    pub macro_d: f64,
    pub p_value: f64,
    pub n_boot: usize,
}

/// Macro KS on arbitrary arms; the p-value re-estimates every KM inside
/// each pooled-null replicate.
pub fn macro_ks_arms<E>(
    objects: &[String],
    a: &[Vec<E>],
    b: &[Vec<E>],
    tau: f64,
    n_boot: usize,
    rng: &RngPolicy,
) -> Result<KsResult>
where
    E: HasObservations + Sync,
{
    let per = per_object_ks(a, b, tau);
    let observed = mean(&per.iter().map(|k| k.d).collect::<Vec<_>>());
    let p_value = pooled_null_resample(a, b, |x, y| Some(macro_d(x, y, tau)), observed, n_boot, rng)?;
    Ok(KsResult {
        per_object: objects.iter().cloned().zip(per).collect(),
        macro_d: observed,
        p_value,
        n_boot,
    })
}

pub fn macro_ks_test(
    cohort: &Cohort,
    policy_a: &str,
    policy_b: &str,
    cfg: &ScalarConfig,
    n_boot: usize,
    rng: &RngPolicy,
) -> Result<KsResult> {
    if cfg.objects.is_empty() {
        return Err(Error::invalid("no objects to average over"));
    }
    let a = cohort.arm(policy_a, &cfg.objects)?;
    let b = cohort.arm(policy_b, &cfg.objects)?;
    macro_ks_arms(&cfg.objects, &a, &b, cfg.tau, n_boot, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogrankResult {
    pub chi2: f64,
    pub p: f64,
}

/// Ghosts become events tied at the cap; anything else past the cap is
/// censored there.
fn capped(obs: &crate::ingest::SurvivalObservation, cap: f64) -> (f64, bool) {
    if obs.ghost {
        (cap, true)
    } else if obs.t > cap {
        (cap, false)
    } else {
        (obs.t, obs.event)
    }
}

/// Mantel-Haenszel logrank with one stratum per object.
pub fn logrank_arms<E: HasObservations>(a: &[Vec<E>], b: &[Vec<E>], cap: f64) -> Result<LogrankResult> {
    let (mut o_minus_e, mut var, mut any_event) = (0.0, 0.0, false);
    for (ca, cb) in a.iter().zip(b) {
        // (time, is_event, in_a)
        let mut rows: Vec<(f64, bool, bool)> = Vec::new();
        for (cell, in_a) in [(ca, true), (cb, false)] {
            for ep in cell {
                for o in ep.observations() {
                    let (t, e) = capped(o, cap);
                    rows.push((t, e, in_a));
                }
            }
        }
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut n_a = rows.iter().filter(|r| r.2).count() as f64;
        let mut n_b = rows.len() as f64 - n_a;
        let mut i = 0;
        while i < rows.len() {
            let t = rows[i].0;
            let (mut d_a, mut d_b, mut c_a, mut c_b) = (0.0, 0.0, 0.0, 0.0);
            while i < rows.len() && rows[i].0 == t {
                match (rows[i].1, rows[i].2) {
                    (true, true) => d_a += 1.0,
                    (true, false) => d_b += 1.0,
                    (false, true) => c_a += 1.0,
                    (false, false) => c_b += 1.0,
                }
                i += 1;
            }
            let d = d_a + d_b;
            let n = n_a + n_b;
            if d > 0.0 {
                any_event = true;
                o_minus_e += d_a - d * n_a / n;
                if n > 1.0 {
                    var += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1.0);
                }
            }
            n_a -= d_a + c_a;
            n_b -= d_b + c_b;
        }
    }
    if !any_event {
        return Err(Error::Degenerate("logrank: no events in either arm".into()));
    }
    if var <= 0.0 {
        return Err(Error::Degenerate("logrank: zero variance".into()));
    }
    let chi2 = o_minus_e * o_minus_e / var;
    Ok(LogrankResult { chi2, p: erfc((chi2 / 2.0).sqrt()) })
}

pub fn stratified_logrank(cohort: &Cohort, policy_a: &str, policy_b: &str, cfg: &ScalarConfig) -> Result<LogrankResult> {
    let a = cohort.arm(policy_a, &cfg.objects)?;
    let b = cohort.arm(policy_b, &cfg.objects)?;
    logrank_arms(&a, &b, cfg.tau)
}

/// `p·k` clipped at 1 with `k = ps.len()`.
pub fn bonferroni(ps: &[f64]) -> Vec<f64> {
    let k = ps.len() as f64;
    ps.iter().map(|p| (p * k).min(1.0)).collect()
}

/// Stars for a corrected p-value: `***` < 0.001, `**` < 0.01, `*` < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "n.s."
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    ABetter,
    BBetter,
    DifferCrossing,
    Indistinguishable,
}

impl PairOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            PairOutcome::ABetter => "a_better",
            PairOutcome::BBetter => "b_better",
            PairOutcome::DifferCrossing => "differ_crossing",
            PairOutcome::Indistinguishable => "indistinguishable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub pair: (String, String),
    pub significant: bool,
    /// +1 when `a` has the lower macro RMST (finishes faster), −1 when `b`
    /// does, 0 when the bootstrap interval of the difference spans 0.
    pub direction: i8,
    pub crossing: bool,
    pub outcome: PairOutcome,
    pub ks: KsResult,
    /// `RMST_b − RMST_a`, macro-averaged, with its clustered interval.
    pub delta_rmst: BootstrapResult,
}

pub fn outcome_of(significant: bool, direction: i8, crossing: bool) -> PairOutcome {
    match (significant, direction, crossing) {
        (false, _, _) => PairOutcome::Indistinguishable,
        (true, _, true) | (true, 0, _) => PairOutcome::DifferCrossing,
        (true, d, false) if d > 0 => PairOutcome::ABetter,
        _ => PairOutcome::BBetter,
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// HRT and AUC-vs-reference rank the pair in opposite directions.
fn headline_disagreement(cohort: &Cohort, a: &str, b: &str, cfg: &ScalarConfig) -> Option<bool> {
    let reference = cohort.arm(&cohort.reference_policy, &cfg.objects).ok()?;
    let arm_a = cohort.arm(a, &cfg.objects).ok()?;
    let arm_b = cohort.arm(b, &cfg.objects).ok()?;
    let hrt_a = mean(&hrt_ratios(&reference, &arm_a, cfg.tau)?);
    let hrt_b = mean(&hrt_ratios(&reference, &arm_b, cfg.tau)?);
    let ref_cdfs = km_arm(&reference, cfg.tau);
    let auc = |arm: &[Vec<&crate::ingest::EpisodeRecord>]| {
        let v: Vec<f64> = km_arm(arm, cfg.tau)
            .iter()
            .zip(&ref_cdfs)
            .map(|(m, r)| auc_probability(m, r, cfg.tau))
            .collect();
        mean(&v)
    };
    let (s_hrt, s_auc) = (sign(hrt_a - hrt_b), sign(auc(&arm_a) - auc(&arm_b)));
    Some(s_hrt != 0 && s_auc != 0 && s_hrt != s_auc)
}

pub fn resolve_pair(
    cohort: &Cohort,
    pair: (&str, &str),
    cfg: &ScalarConfig,
    alpha: f64,
    n_boot: usize,
    rng: &RngPolicy,
) -> Result<PairVerdict> {
    let (pa, pb) = pair;
    let ks = macro_ks_test(cohort, pa, pb, cfg, n_boot, &rng.child("macro-ks", 0))?;
    let arm_a = cohort.arm(pa, &cfg.objects)?;
    let arm_b = cohort.arm(pb, &cfg.objects)?;
    let j = arm_a.len();
    let joint: Vec<Vec<_>> = arm_a.iter().chain(&arm_b).cloned().collect();
    let tau = cfg.tau;
    let delta_rmst = cluster_bootstrap_ci(
        &joint,
        |s| Some(macro_rmst(&s[j..], tau) - macro_rmst(&s[..j], tau)),
        n_boot.max(100),
        1.0 - alpha,
        &rng.child("delta-rmst", 0),
    )?;
    let direction = if delta_rmst.ci_low <= 0.0 && delta_rmst.ci_high >= 0.0 { 0 } else { sign(delta_rmst.point) };
    let cdfs_a = km_arm(&arm_a, tau);
    let cdfs_b = km_arm(&arm_b, tau);
    let crossing = cdfs_a.iter().zip(&cdfs_b).any(|(x, y)| crosses(x, y, tau))
        || headline_disagreement(cohort, pa, pb, cfg).unwrap_or(false);
    let significant = ks.p_value < alpha;
    Ok(PairVerdict {
        pair: (pa.to_string(), pb.to_string()),
        significant,
        direction,
        crossing,
        outcome: outcome_of(significant, direction, crossing),
        ks,
        delta_rmst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupsignEntry {
    pub a: String,
    pub b: String,
    pub d: f64,
    pub sup_time: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupsignDemo {
    pub tau: f64,
    pub cdfs: Vec<(String, StepCdf)>,
    pub table: Vec<SupsignEntry>,
}

/// Three defective CDFs on jumps at t = 1, 20, 50 whose pairwise KS signs
/// cycle: A ≻ B decided at t = 1, B ≻ C at t = 20, C ≻ A at t = 50.
pub fn supsign_cycle_demo() -> Result<SupsignDemo> {
    let tau = 100.0;
    let mk = |knots: Vec<f64>, values: Vec<f64>| {
        let last = values.last().copied().unwrap_or(0.0);
        StepCdf::from_parts(knots, values, 1.0 - last, tau)
    };
    let cdfs = vec![
        ("A".to_string(), mk(vec![1.0], vec![0.4])?),
        ("B".to_string(), mk(vec![20.0], vec![0.6])?),
        ("C".to_string(), mk(vec![20.0, 50.0], vec![0.2, 0.9])?),
    ];
    let table: Vec<SupsignEntry> = [(0, 1), (1, 2), (2, 0)]
        .iter()
        .map(|&(i, j)| {
            let k = ks_distance(&cdfs[i].1, &cdfs[j].1, tau);
            SupsignEntry { a: cdfs[i].0.clone(), b: cdfs[j].0.clone(), d: k.d, sup_time: k.sup_time, sign: k.sign }
        })
        .collect();
    let times: Vec<f64> = table.iter().map(|e| e.sup_time).collect();
    if table.iter().any(|e| e.sign != 1) || times != [1.0, 20.0, 50.0] {
        return Err(Error::InvalidInput(format!("sup-sign construction failed its self-check: {table:?}")));
    }
    Ok(SupsignDemo { tau, cdfs, table })
}
