//! Scalar functionals of a time-to-success CDF and the curve families
//! derived from pairs of CDFs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::ks_distance;
use crate::ingest::{Cohort, HasObservations};
use crate::survival::{km_from_episodes, pooled_grid, StepCdf, PROB_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarConfig {
    /// Integration cap for RMST/HRT/KS.
    pub tau: f64,
    /// Protocol timeout horizon.
    pub tau_episode: f64,
    /// Macro-average weights are equal over these objects.
    pub objects: Vec<String>,
}

impl ScalarConfig {
    pub fn new(tau: f64, tau_episode: f64, objects: Vec<String>) -> Result<Self> {
        if !(tau > 0.0 && tau_episode > 0.0) {
            return Err(Error::invalid("tau and tau_episode must be > 0"));
        }
        Ok(Self { tau, tau_episode, objects })
    }

    /// 240 s / 240 s over every object of the cohort.
    pub fn for_cohort(c: &Cohort) -> Self {
        Self { tau: 240.0, tau_episode: 240.0, objects: c.objects.clone() }
    }
}

pub fn success_rate_at(f: &StepCdf, tau: f64) -> f64 {
    f.eval(tau)
}

pub fn completion_fraction(f: &StepCdf, tau_episode: f64) -> f64 {
    f.eval(tau_episode)
}

pub fn median_tts(f: &StepCdf) -> Option<f64> {
    f.median()
}

/// `∫₀^τ (1 − F(t)) dt`, exact for the step function. Ghosts keep
/// survival at 1 up to the cap.
pub fn rmst(f: &StepCdf, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || tau > f.tau_cap * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "RMST horizon {tau} must lie in (0, tau_cap = {}]",
            f.tau_cap
        )));
    }
    Ok(rmst_unchecked(f, tau))
}

pub(crate) fn rmst_unchecked(f: &StepCdf, tau: f64) -> f64 {
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_f = 0.0;
    for (&t, &v) in f.knots.iter().zip(&f.values) {
        if t > tau {
            break;
        }
        area += (t - prev_t) * (1.0 - prev_f);
        prev_t = t;
        prev_f = v;
    }
    area + (tau - prev_t) * (1.0 - prev_f)
}

/// Units per hour, `3600 / RMST(τ_episode)`.
pub fn uph(f: &StepCdf, tau_episode: f64) -> Result<f64> {
    let r = rmst(f, tau_episode)?;
    if r <= 0.0 {
        return Err(Error::Degenerate("zero RMST".into()));
    }
    Ok(3600.0 / r)
}

/// `RMST(τ_episode) / (1 − F(τ_episode))`; infinite when nothing fails
/// within the window.
pub fn mtbfa(f: &StepCdf, tau_episode: f64) -> Result<f64> {
    let r = rmst(f, tau_episode)?;
    let fail = 1.0 - f.eval(tau_episode);
    Ok(if fail <= PROB_EPS { f64::INFINITY } else { r / fail })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HrtResult {
    pub per_object: BTreeMap<String, f64>,
    /// Equal-weight mean of the per-object ratios.
    pub macro_hrt: f64,
}

/// Per-object `RMST_ref / RMST_model` ratios from per-object episode lists
/// (same object order in both arms). `None` if a model RMST is zero.
pub fn hrt_ratios<E: HasObservations>(reference: &[Vec<E>], model: &[Vec<E>], tau: f64) -> Option<Vec<f64>> {
    reference
        .iter()
        .zip(model)
        .map(|(r, m)| {
            let rr = rmst_unchecked(&km_from_episodes(r, tau), tau);
            let rm = rmst_unchecked(&km_from_episodes(m, tau), tau);
            (rm > 0.0).then(|| rr / rm)
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Human-relative throughput of `policy` against the cohort's reference.
pub fn hrt(cohort: &Cohort, policy: &str, cfg: &ScalarConfig) -> Result<HrtResult> {
    cohort.require_reference()?;
    if cfg.objects.is_empty() {
        return Err(Error::invalid("no objects to average over"));
    }
    let reference = cohort.arm(&cohort.reference_policy, &cfg.objects)?;
    let model = cohort.arm(policy, &cfg.objects)?;
    let ratios = hrt_ratios(&reference, &model, cfg.tau)
        .ok_or_else(|| Error::Degenerate(format!("zero model RMST for {policy}")))?;
    Ok(HrtResult {
        macro_hrt: mean(&ratios),
        per_object: cfg.objects.iter().cloned().zip(ratios).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpPoint {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpCurve {
    pub points: Vec<PpPoint>,
    /// `∫ v du` along the traced curve, trapezoidal across joint jumps so
    /// ties get half credit.
    pub auc: f64,
    pub ks_distance: f64,
    pub sup_time: f64,
}

/// `(F_ref(t), F_model(t))` traced over the pooled grid, starting at the
/// origin.
pub fn pp_curve(reference: &StepCdf, model: &StepCdf, tau: f64) -> PpCurve {
    let mut points = vec![PpPoint { t: 0.0, u: 0.0, v: 0.0 }];
    let mut auc = 0.0;
    for t in pooled_grid(reference, model, tau) {
        let p = PpPoint { t, u: reference.eval(t), v: model.eval(t) };
        let last = points.last().unwrap();
        auc += (p.u - last.u) * (p.v + last.v) / 2.0;
        points.push(p);
    }
    let ks = ks_distance(reference, model, tau);
    PpCurve { points, auc, ks_distance: ks.d, sup_time: ks.sup_time }
}

/// `P(T_a < T_b) + ½·P(T_a = T_b)` over jump masses up to `tau`. Mass that
/// does not finish by `tau` loses to any finisher; two unfinished draws
/// count for neither side.
pub fn auc_probability(a: &StepCdf, b: &StepCdf, tau: f64) -> f64 {
    let mut total = 0.0;
    let mut prev_b = 0.0;
    let mut bi = 0;
    for (t, ja) in a.jumps() {
        if t > tau {
            break;
        }
        while bi < b.knots.len() && b.knots[bi] < t {
            prev_b = b.values[bi];
            bi += 1;
        }
        let tie = if bi < b.knots.len() && b.knots[bi] == t { b.values[bi] - prev_b } else { 0.0 };
        total += ja * ((1.0 - prev_b - tie) + 0.5 * tie);
    }
    total
}

/// Probability that neither draw finishes by `tau`.
pub fn unresolved_mass(a: &StepCdf, b: &StepCdf, tau: f64) -> f64 {
    (1.0 - a.eval(tau)) * (1.0 - b.eval(tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub q: f64,
    pub t_ref: f64,
    pub t_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqCurve {
    pub points: Vec<QqPoint>,
    /// Highest quantile the model reaches, `1 − p_fail`.
    pub terminal_quantile: f64,
}

/// `q ∈ {0.05, 0.10, …, 0.95}`.
pub fn default_q_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 * 0.05).collect()
}

pub fn qq_curve(reference: &StepCdf, model: &StepCdf, q_grid: &[f64]) -> QqCurve {
    let terminal = model.terminal_value();
    let points = q_grid
        .iter()
        .filter(|&&q| q > 0.0 && q < 1.0 && q <= terminal + PROB_EPS)
        .filter_map(|&q| Some(QqPoint { q, t_ref: reference.quantile(q)?, t_model: model.quantile(q)? }))
        .collect();
    QqCurve { points, terminal_quantile: terminal }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub tau_episode: f64,
    pub uph: f64,
    pub mtbfa: f64,
}

/// UPH and MTBF/A on a uniform `τ_episode` grid of `n_steps` points
/// spanning `[tau_min, tau_max]`.
pub fn uph_mtbf_trajectory(f: &StepCdf, tau_min: f64, tau_max: f64, n_steps: usize) -> Result<Vec<TrajectoryPoint>> {
    if !(tau_min > 0.0 && tau_min < tau_max && tau_max <= f.tau_cap) || n_steps < 2 {
        return Err(Error::invalid("need 0 < tau_min < tau_max <= tau_cap and n_steps >= 2"));
    }
    (0..n_steps)
        .map(|k| {
            let tau = tau_min + (tau_max - tau_min) * k as f64 / (n_steps - 1) as f64;
            Ok(TrajectoryPoint { tau_episode: tau, uph: uph(f, tau)?, mtbfa: mtbfa(f, tau)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SurvivalObservation;
    use crate::survival::km_estimate;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ev(t: f64) -> SurvivalObservation {
        SurvivalObservation::event(t, Arc::from("e"))
    }
    fn ghost() -> SurvivalObservation {
        SurvivalObservation::ghost(Arc::from("e"))
    }
    fn cens(t: f64) -> SurvivalObservation {
        SurvivalObservation::censored(t, Arc::from("e"))
    }
    fn unit(t: f64, cap: f64) -> StepCdf {
        StepCdf::from_parts(vec![t], vec![1.0], 0.0, cap).unwrap()
    }
    fn all_ghost(cap: f64) -> StepCdf {
        km_estimate(&[ghost(), ghost()], cap)
    }

    #[test]
    fn success_rate_cases() {
        assert_eq!(success_rate_at(&unit(5.0, 30.0), 30.0), 1.0);
        assert_eq!(success_rate_at(&all_ghost(30.0), 30.0), 0.0);
        let f = km_estimate(&[ev(10.0), ev(15.0), cens(20.0), ev(30.0)], 240.0);
        assert_eq!(success_rate_at(&f, 12.0), 0.25);
        assert_eq!(completion_fraction(&f, 12.0), 0.25);
    }

    #[test]
    fn rmst_cases() {
        assert_eq!(rmst(&unit(5.0, 10.0), 10.0).unwrap(), 5.0);
        assert_eq!(rmst(&all_ghost(240.0), 240.0).unwrap(), 240.0);
        let f = km_estimate(&[ev(5.0), ev(5.0), ghost()], 10.0);
        assert!((rmst(&f, 10.0).unwrap() - (5.0 + 5.0 / 3.0)).abs() < 1e-12);
        assert!(rmst(&f, 11.0).is_err());
    }

    #[test]
    fn uph_cases() {
        let f = StepCdf::from_parts(vec![10.5], vec![1.0], 0.0, 240.0).unwrap();
        assert!((uph(&f, 240.0).unwrap() - 342.857).abs() < 1e-3);
        assert_eq!(uph(&all_ghost(240.0), 240.0).unwrap(), 15.0);
        let slow = StepCdf::from_parts(vec![3600.0], vec![1.0], 0.0, 3600.0).unwrap();
        assert_eq!(uph(&slow, 3600.0).unwrap(), 1.0);
    }

    #[test]
    fn mtbfa_cases() {
        assert_eq!(mtbfa(&unit(5.0, 30.0), 30.0).unwrap(), f64::INFINITY);
        assert_eq!(mtbfa(&all_ghost(240.0), 240.0).unwrap(), 240.0);
        // Half the mass at 50 on a 150 s window: RMST = 50 + 0.5·100 = 100.
        let f = StepCdf::from_parts(vec![50.0], vec![0.5], 0.5, 150.0).unwrap();
        assert!((rmst(&f, 150.0).unwrap() - 100.0).abs() < 1e-12);
        assert!((mtbfa(&f, 150.0).unwrap() - 200.0).abs() < 1e-12);
    }

    #[test]
    fn median_delegates_to_quantile() {
        assert_eq!(median_tts(&unit(12.0, 20.0)), Some(12.0));
        assert_eq!(median_tts(&all_ghost(20.0)), None);
    }

    #[test]
    fn pp_identity_and_extremes() {
        let f = km_estimate(&[ev(3.0), ev(5.0), ev(9.0), ev(12.0)], 20.0);
        let pp = pp_curve(&f, &f, 20.0);
        assert!(pp.points.iter().all(|p| p.u == p.v));
        assert_eq!(pp.points[0], PpPoint { t: 0.0, u: 0.0, v: 0.0 });
        assert!((pp.auc - 0.5).abs() < 1e-12);
        assert_eq!(pp.ks_distance, 0.0);

        let pp = pp_curve(&f, &all_ghost(20.0), 20.0);
        assert!(pp.points.iter().all(|p| p.v == 0.0));
        assert_eq!(pp.auc, 0.0);

        let pp = pp_curve(&unit(5.0, 20.0), &unit(10.0, 20.0), 20.0);
        assert_eq!(pp.auc, 0.0);
        assert_eq!(pp.ks_distance, 1.0);
        assert_eq!(pp.sup_time, 5.0);
    }

    #[test]
    fn pp_points_nondecreasing() {
        let a = km_estimate(&[ev(3.0), cens(4.0), ev(8.0), ghost()], 20.0);
        let b = km_estimate(&[ev(2.0), ev(8.0), ev(15.0)], 20.0);
        let pp = pp_curve(&a, &b, 20.0);
        assert!(pp.points.windows(2).all(|w| w[1].u >= w[0].u && w[1].v >= w[0].v && w[1].t > w[0].t));
    }

    #[test]
    fn auc_simple_cases() {
        assert_eq!(auc_probability(&all_ghost(20.0), &unit(5.0, 20.0), 20.0), 0.0);
        assert_eq!(auc_probability(&unit(5.0, 20.0), &unit(10.0, 20.0), 20.0), 1.0);
        assert_eq!(auc_probability(&unit(5.0, 20.0), &unit(5.0, 20.0), 20.0), 0.5);
        assert_eq!(auc_probability(&unit(5.0, 20.0), &all_ghost(20.0), 20.0), 1.0);
    }

    #[test]
    fn qq_cases() {
        let f = km_estimate(&[ev(2.0), ev(4.0), ev(6.0), ev(8.0)], 20.0);
        let qq = qq_curve(&f, &f, &default_q_grid());
        assert_eq!(qq.points.len(), 19);
        assert!(qq.points.iter().all(|p| p.t_ref == p.t_model));

        let shifted = km_estimate(&[ev(12.0), ev(14.0), ev(16.0), ev(18.0)], 30.0);
        let qq = qq_curve(&f, &shifted, &default_q_grid());
        assert!(qq.points.iter().all(|p| (p.t_model - p.t_ref - 10.0).abs() < 1e-12));

        let defective = km_estimate(&[ev(2.0), ev(4.0), ev(6.0), ghost()], 20.0);
        let qq = qq_curve(&f, &defective, &default_q_grid());
        assert!((qq.terminal_quantile - 0.75).abs() < 1e-12);
        assert!(qq.points.iter().all(|p| p.q <= 0.75 + 1e-12));
        assert!((qq.points.last().unwrap().q - 0.75).abs() < 1e-12);
        assert!(qq.points.windows(2).all(|w| w[1].t_ref >= w[0].t_ref && w[1].t_model >= w[0].t_model));
    }

    #[test]
    fn trajectory_cases() {
        let traj = uph_mtbf_trajectory(&unit(5.0, 240.0), 30.0, 240.0, 8).unwrap();
        assert!(traj.iter().all(|p| p.uph == 720.0 && p.mtbfa.is_infinite()));
        assert_eq!(traj.first().unwrap().tau_episode, 30.0);
        assert_eq!(traj.last().unwrap().tau_episode, 240.0);

        let traj = uph_mtbf_trajectory(&all_ghost(240.0), 30.0, 240.0, 8).unwrap();
        for p in &traj {
            assert!((p.uph - 3600.0 / p.tau_episode).abs() < 1e-9);
            assert!((p.mtbfa - p.tau_episode).abs() < 1e-9);
        }

        let mixed = km_estimate(&[ev(5.0), ev(5.0), ghost()], 10.0);
        let at10 = *uph_mtbf_trajectory(&mixed, 6.0, 10.0, 5).unwrap().last().unwrap();
        let r = 5.0 + 5.0 / 3.0;
        assert!((at10.uph - 3600.0 / r).abs() < 1e-9);
        assert!((at10.mtbfa - r * 3.0).abs() < 1e-9);
        assert!(uph_mtbf_trajectory(&mixed, 6.0, 11.0, 5).is_err());
    }

    #[test]
    fn hrt_arithmetic() {
        let r = vec![vec![vec![ev(10.5)]]];
        let m = vec![vec![vec![ev(77.7)]]];
        let ratios = hrt_ratios(&r, &m, 240.0).unwrap();
        assert!((ratios[0] - 0.1351).abs() < 1e-4);
        assert!((mean(&[0.10, 0.20]) - 0.15).abs() < 1e-15);
    }

    /// Random step CDF with up to `k` jumps on integer times in [1, 30] and
    /// some leftover ghost mass.
    fn arb_cdf(k: usize) -> impl Strategy<Value = StepCdf> {
        prop::collection::btree_map(1u32..30, 1u32..10, 1..=k).prop_flat_map(|m| {
            (Just(m), 0u32..10).prop_map(|(m, ghost_w)| {
                let total: u32 = m.values().sum::<u32>() + ghost_w;
                let mut acc = 0;
                let (mut knots, mut values) = (vec![], vec![]);
                for (t, w) in m {
                    acc += w;
                    knots.push(t as f64);
                    values.push(acc as f64 / total as f64);
                }
                let g = ghost_w as f64 / total as f64;
                StepCdf::from_parts(knots, values, g, 40.0).unwrap()
            })
        })
    }

    /// Riemann sum of `1 − F` on a fine grid; exact here because knots sit
    /// on integers and the grid step divides 1.
    fn rmst_oracle(f: &StepCdf, tau: f64) -> f64 {
        let h = 1.0 / 64.0;
        let n = (tau / h).round() as usize;
        (0..n).map(|i| (1.0 - f.eval(i as f64 * h)) * h).sum()
    }

    fn auc_oracle(a: &StepCdf, b: &StepCdf, tau: f64) -> f64 {
        let ja: Vec<_> = a.jumps().filter(|j| j.0 <= tau).collect();
        let jb: Vec<_> = b.jumps().filter(|j| j.0 <= tau).collect();
        let rb = 1.0 - jb.iter().map(|j| j.1).sum::<f64>();
        let mut s = 0.0;
        for &(ta, pa) in &ja {
            for &(tb, pb) in &jb {
                if ta < tb {
                    s += pa * pb;
                } else if ta == tb {
                    s += 0.5 * pa * pb;
                }
            }
            s += pa * rb;
        }
        s
    }

    proptest! {
        #[test]
        fn rmst_matches_numeric_oracle(f in arb_cdf(6), tau in 1u32..=40) {
            let tau = tau as f64;
            prop_assert!((rmst(&f, tau).unwrap() - rmst_oracle(&f, tau)).abs() < 1e-9);
        }

        #[test]
        fn rmst_uph_mtbfa_monotone(f in arb_cdf(6)) {
            let mut prev: Option<(f64, f64, f64)> = None;
            for k in 1..=40 {
                let tau = k as f64;
                let cur = (rmst(&f, tau).unwrap(), uph(&f, tau).unwrap(), mtbfa(&f, tau).unwrap());
                if let Some(p) = prev {
                    prop_assert!(cur.0 >= p.0);
                    prop_assert!(cur.1 <= p.1 + 1e-12);
                    prop_assert!(cur.2 >= p.2 - 1e-9);
                }
                prev = Some(cur);
            }
        }

        #[test]
        fn auc_matches_pairing_oracle(a in arb_cdf(6), b in arb_cdf(6), tau in 1u32..=40) {
            let tau = tau as f64;
            let ab = auc_probability(&a, &b, tau);
            prop_assert!((ab - auc_oracle(&a, &b, tau)).abs() < 1e-12);
            let ba = auc_probability(&b, &a, tau);
            prop_assert!((ab + ba + unresolved_mass(&a, &b, tau) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pp_auc_equals_model_first_probability(a in arb_cdf(5), b in arb_cdf(5)) {
            // Area under v(u) counts model-before-reference plus half-ties,
            // restricted to draws where the reference finishes in window.
            let pp = pp_curve(&a, &b, 40.0);
            let expected = auc_probability(&b, &a, 40.0) - b.eval(40.0) * (1.0 - a.eval(40.0));
            prop_assert!((pp.auc - expected).abs() < 1e-12);
        }
    }
}
