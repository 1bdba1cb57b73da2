//! Sample-size budgets: Wilson single-arm sizing, Connor/McNemar paired
//! sizing, and a Brownian-bridge model of macro-KS power with design-effect
//! calibration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::par;
use crate::resample::{quantile_sorted, RngPolicy};
use crate::survival::{pooled_grid, StepCdf};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// Standard normal quantile.
pub fn z_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Half-width of the Wilson score interval.
pub fn wilson_half_width(p: f64, n: u64, z: f64) -> f64 {
    let n = n as f64;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WilsonN {
    /// Solve at the supplied `p_hat`.
    pub n: u64,
    /// Solve at `p = 0.5`.
    pub n_worst_case: u64,
}

fn wilson_solve(p: f64, half_width: f64, z: f64) -> u64 {
    if wilson_half_width(p, 1, z) <= half_width {
        return 1;
    }
    let mut hi = 2;
    while wilson_half_width(p, hi, z) > half_width {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if wilson_half_width(p, mid, z) <= half_width {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest `N` whose Wilson interval half-width is at most `half_width`.
pub fn wilson_n(p_hat: f64, half_width: f64, confidence: f64) -> Result<WilsonN> {
    check_prob("p_hat", p_hat)?;
    check_prob("half_width", half_width)?;
    check_prob("confidence", confidence)?;
    let z = z_quantile(1.0 - (1.0 - confidence) / 2.0);
    Ok(WilsonN { n: wilson_solve(p_hat, half_width, z), n_worst_case: wilson_solve(0.5, half_width, z) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McnemarN {
    /// Unrounded formula value.
    pub exact: f64,
    pub pairs: u64,
    /// One rollout per arm per pair.
    pub rollouts: u64,
}

/// `N ≈ (z_{α/2}√p_d + z_β√(p_d − Δ²))² / Δ²` paired rollouts.
pub fn mcnemar_n(p_d: f64, delta: f64, alpha: f64, power: f64) -> Result<McnemarN> {
    check_prob("p_d", p_d)?;
    check_prob("alpha", alpha)?;
    check_prob("power", power)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    // Δ = p10 − p01 can never exceed the discordance rate p10 + p01.
    if delta > p_d {
        return Err(Error::invalid(format!("delta {delta} exceeds the discordance rate {p_d}")));
    }
    let radicand = p_d - delta * delta;
    if radicand <= 0.0 {
        return Err(Error::invalid(format!("p_d − delta² = {radicand} must be > 0")));
    }
    let za = z_quantile(1.0 - alpha / 2.0);
    let zb = z_quantile(power);
    let exact = (za * p_d.sqrt() + zb * radicand.sqrt()).powi(2) / (delta * delta);
    let pairs = exact.ceil() as u64;
    Ok(McnemarN { exact, pairs, rollouts: 2 * pairs })
}

/// Per-object CDF pairs plus the sizing constants of the bridge model.
#[derive(Debug, Clone)]
pub struct BridgeModel {
    pub pairs: Vec<(String, StepCdf, StepCdf)>,
    pub tau: f64,
    /// Mean operations per episode.
    pub m_o: f64,
    pub design_effect: f64,
    pub grid_size: usize,
    pub n_sim: usize,
}

impl BridgeModel {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::invalid("bridge model needs at least one object"));
        }
        if !(self.design_effect >= 1.0) {
            return Err(Error::invalid("design effect must be >= 1"));
        }
        if self.grid_size < 256 {
            return Err(Error::invalid("grid_size must be >= 256"));
        }
        if !(self.m_o > 0.0) || self.n_sim < 100 || !(self.tau > 0.0) {
            return Err(Error::invalid("need m_o > 0, tau > 0 and n_sim >= 100"));
        }
        Ok(())
    }

    /// Bridge drift scale `√(n_o/2)` for a per-cell episode count.
    pub fn scale(&self, n_cell: f64, design_effect: f64) -> f64 {
        (n_cell * self.m_o / design_effect / 2.0).sqrt()
    }
}

/// Drift `F_a − F_b` as a function of `u = (F_a + F_b)/2`, interpolated
/// linearly across jumps, on `u_k = k/G`. Points beyond `H(τ)` are dropped.
fn warped_drift(a: &StepCdf, b: &StepCdf, tau: f64, grid_size: usize) -> Vec<f64> {
    let mut us = vec![0.0];
    let mut ds = vec![0.0];
    for t in pooled_grid(a, b, tau) {
        let (fa, fb) = (a.eval(t), b.eval(t));
        let u = (fa + fb) / 2.0;
        if u > *us.last().unwrap() {
            us.push(u);
            ds.push(fa - fb);
        }
    }
    let h_tau = *us.last().unwrap();
    let mut out = Vec::with_capacity(grid_size);
    let mut j = 0;
    for k in 1..=grid_size {
        let u = k as f64 / grid_size as f64;
        if u > h_tau + 1e-12 {
            break;
        }
        while j + 1 < us.len() && us[j + 1] < u {
            j += 1;
        }
        let d = if j + 1 < us.len() {
            let w = (u - us[j]) / (us[j + 1] - us[j]);
            ds[j] + w * (ds[j + 1] - ds[j])
        } else {
            ds[j]
        };
        out.push(d);
    }
    out
}

/// Simulates bridges once per call and evaluates many drift scales on the
/// same paths.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    drifts: Vec<Vec<f64>>,
    grid_size: usize,
    n_sim: usize,
}

fn bridge<R: Rng>(rng: &mut R, grid_size: usize, buf: &mut Vec<f64>) {
    buf.clear();
    let sd = (1.0 / grid_size as f64).sqrt();
    let mut w = 0.0;
    for _ in 0..grid_size {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        buf.push(w);
    }
    let end = w;
    for (k, x) in buf.iter_mut().enumerate() {
        *x -= (k + 1) as f64 / grid_size as f64 * end;
    }
}

impl BridgeSampler {
    pub fn new(pairs: &[(String, StepCdf, StepCdf)], tau: f64, grid_size: usize, n_sim: usize) -> Self {
        let drifts = pairs.iter().map(|(_, a, b)| warped_drift(a, b, tau, grid_size)).collect();
        Self { drifts, grid_size, n_sim }
    }

    /// Zero-drift sampler for `n_objects` objects on the full unit interval.
    pub fn null(n_objects: usize, grid_size: usize, n_sim: usize) -> Self {
        Self { drifts: vec![vec![0.0; grid_size]; n_objects], grid_size, n_sim }
    }

    fn macro_sups(&self, rng: &RngPolicy, purpose: &str, scales: &[f64]) -> Vec<Vec<f64>> {
        let j = self.drifts.len() as f64;
        par::map_indexed(self.n_sim, |r| {
            let mut stream = rng.stream(purpose, r as u64);
            let mut path = Vec::with_capacity(self.grid_size);
            let mut acc = vec![0.0; scales.len()];
            for drift in &self.drifts {
                bridge(&mut stream, self.grid_size, &mut path);
                for (slot, &c) in acc.iter_mut().zip(scales) {
                    let sup = path.iter().zip(drift).fold(0.0_f64, |m, (b, d)| m.max((b + c * d).abs()));
                    *slot += sup / j;
                }
            }
            acc
        })
    }

    /// Sorted H0 draws of `mean_o sup |B_o|` (the `√(n_o/2)` factor is
    /// common to every object and cancels against H1).
    pub fn null_draws(&self, rng: &RngPolicy) -> Vec<f64> {
        let mut v: Vec<f64> = self.macro_sups(rng, "bridge-h0", &[0.0]).into_iter().map(|x| x[0]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Critical value and rejection rate for each drift scale `√(n_o/2)`.
    pub fn power(&self, scales: &[f64], alpha: f64, rng: &RngPolicy) -> (f64, Vec<f64>) {
        let crit = quantile_sorted(&self.null_draws(rng), 1.0 - alpha);
        let h1 = self.macro_sups(rng, "bridge-h1", scales);
        let n = h1.len() as f64;
        let power = (0..scales.len())
            .map(|i| h1.iter().filter(|row| row[i] > crit).count() as f64 / n)
            .collect();
        (crit, power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub n_cell: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    pub points: Vec<PowerPoint>,
    /// Smallest grid `n` with power ≥ 0.8.
    pub n80: Option<usize>,
    /// Simulated `(1 − α)` quantile of the H0 macro statistic, on the
    /// `√(n_o/2)·D̄` scale.
    pub critical_value: f64,
}

pub fn power_curve(n_grid: &[usize], power: Vec<f64>, critical_value: f64) -> PowerCurve {
    let points: Vec<PowerPoint> = n_grid.iter().zip(power).map(|(&n_cell, power)| PowerPoint { n_cell, power }).collect();
    let n80 = points.iter().find(|p| p.power >= 0.8).map(|p| p.n_cell);
    PowerCurve { points, n80, critical_value }
}

pub fn bridge_power(model: &BridgeModel, n_grid: &[usize], alpha: f64, rng: &RngPolicy) -> Result<PowerCurve> {
    model.validate()?;
    check_prob("alpha", alpha)?;
    let sampler = BridgeSampler::new(&model.pairs, model.tau, model.grid_size, model.n_sim);
    let scales: Vec<f64> = n_grid.iter().map(|&n| model.scale(n as f64, model.design_effect)).collect();
    let (crit, power) = sampler.power(&scales, alpha, rng);
    Ok(power_curve(n_grid, power, crit))
}

/// Fine-grid least squares for `D ∈ [1, 4]` at step 0.01; ties go to the
/// smallest `D`. `predicted(D)` must return values aligned with `empirical`.
pub fn calibrate_design_effect<F>(predicted: F, empirical: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> Vec<f64>,
{
    if empirical.len() < 2 {
        return Err(Error::invalid("need at least two empirical points"));
    }
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=300 {
        let d = 1.0 + k as f64 * 0.01;
        let pred = predicted(d);
        if pred.len() != empirical.len() {
            return Err(Error::invalid("prediction length does not match the empirical points"));
        }
        let sse: f64 = pred.iter().zip(empirical).map(|(p, e)| (p - e).powi(2)).sum();
        if !sse.is_finite() {
            return Err(Error::invalid(format!("non-finite objective at D = {d}")));
        }
        if best.is_none_or(|(_, b)| sse < b - 1e-15) {
            best = Some((d, sse));
        }
    }
    Ok(best.unwrap().0)
}

/// Predicted power for `(n_cell, D)` points on shared paths, interpolating
/// linearly in the drift scale over a log-spaced table.
pub struct PowerTable {
    scales: Vec<f64>,
    power: Vec<f64>,
    pub critical_value: f64,
}

impl PowerTable {
    pub fn build(sampler: &BridgeSampler, min_scale: f64, max_scale: f64, n_points: usize, alpha: f64, rng: &RngPolicy) -> Self {
        let (lo, hi) = (min_scale.ln(), max_scale.ln());
        let scales: Vec<f64> = (0..n_points)
            .map(|i| (lo + (hi - lo) * i as f64 / (n_points - 1).max(1) as f64).exp())
            .collect();
        let (critical_value, power) = sampler.power(&scales, alpha, rng);
        Self { scales, power, critical_value }
    }

    pub fn at(&self, scale: f64) -> f64 {
        let i = self.scales.partition_point(|&s| s < scale);
        if i == 0 {
            return self.power[0];
        }
        if i == self.scales.len() {
            return *self.power.last().unwrap();
        }
        let (s0, s1) = (self.scales[i - 1].ln(), self.scales[i].ln());
        let w = (scale.ln() - s0) / (s1 - s0);
        self.power[i - 1] + w * (self.power[i] - self.power[i - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Icc {
    pub rho: f64,
    /// No variance at all; `rho` is reported as 0.
    pub degenerate: bool,
}

/// One-way ANOVA intra-cluster correlation on finite times, clipped to
/// `[0, 1]`. `None` when no cluster has two observations.
pub fn icc(clusters: &[Vec<f64>]) -> Option<Icc> {
    let clusters: Vec<Vec<f64>> = clusters
        .iter()
        .map(|c| c.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>())
        .filter(|c| !c.is_empty())
        .collect();
    let k = clusters.len();
    let n: usize = clusters.iter().map(Vec::len).sum();
    if k < 2 || n <= k {
        return None;
    }
    let grand = clusters.iter().flatten().sum::<f64>() / n as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for c in &clusters {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        ssb += c.len() as f64 * (m - grand).powi(2);
        ssw += c.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let msb = ssb / (k - 1) as f64;
    let msw = ssw / (n - k) as f64;
    let m_bar = n as f64 / k as f64;
    let denom = msb + (m_bar - 1.0) * msw;
    if denom <= 0.0 {
        return Some(Icc { rho: 0.0, degenerate: true });
    }
    Some(Icc { rho: ((msb - msw) / denom).clamp(0.0, 1.0), degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_cases() {
        let w = wilson_n(0.70, 0.05, 0.95).unwrap();
        assert_eq!(w.n, 320);
        assert_eq!(w.n_worst_case, 381);
        assert_eq!(wilson_n(0.70, 0.5, 0.95).unwrap().n, 1);
        assert_eq!(wilson_n(0.5, 0.5, 0.95).unwrap().n, 1);
    }

    #[test]
    fn wilson_monotone_in_half_width() {
        let mut prev = u64::MAX;
        for k in 1..40 {
            let n = wilson_n(0.7, k as f64 * 0.01, 0.95).unwrap().n;
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn mcnemar_cases() {
        let m = mcnemar_n(0.10, 0.05, 0.05, 0.80).unwrap();
        assert!((m.exact - 311.587).abs() < 1e-2);
        assert_eq!((m.pairs, m.rollouts), (312, 624));
        let m = mcnemar_n(0.25, 0.05, 0.05, 0.80).unwrap();
        assert!((m.exact - 782.53).abs() < 1e-2);
        assert_eq!((m.pairs, m.rollouts), (783, 1566));
        assert!(mcnemar_n(0.25, 0.49, 0.05, 0.80).is_err());
        assert!(mcnemar_n(0.25, 0.5, 0.05, 0.80).is_err());
        let mut prev = 0;
        for k in 1..20 {
            let n = mcnemar_n(0.01 + 0.04 * k as f64, 0.05, 0.05, 0.8).unwrap().pairs;
            assert!(n > prev);
            prev = n;
        }
    }

    fn unit_pair(fa: &[(f64, f64)], fb: &[(f64, f64)]) -> (String, StepCdf, StepCdf) {
        let mk = |v: &[(f64, f64)]| {
            let last = v.last().map_or(0.0, |x| x.1);
            StepCdf::from_parts(v.iter().map(|x| x.0).collect(), v.iter().map(|x| x.1).collect(), 1.0 - last, 100.0).unwrap()
        };
        ("o".into(), mk(fa), mk(fb))
    }

    #[test]
    fn drift_interpolates_across_jumps() {
        // Both jump to 1 at t = 10: H goes 0 → 1 with zero drift throughout.
        let (_, a, b) = unit_pair(&[(10.0, 1.0)], &[(10.0, 1.0)]);
        assert!(warped_drift(&a, &b, 100.0, 256).iter().all(|&d| d == 0.0));
        // a jumps at 10, b at 20: H = 0.5 at t = 10 with drift 1.
        let (_, a, b) = unit_pair(&[(10.0, 1.0)], &[(20.0, 1.0)]);
        let d = warped_drift(&a, &b, 100.0, 256);
        assert_eq!(d.len(), 256);
        assert!((d[127] - 1.0).abs() < 1e-12);
        assert!((d[63] - 0.5).abs() < 1e-12);
        assert!(d[255].abs() < 1e-12);
        // Defective pair: H(τ) = 0.5 truncates the grid.
        let (_, a, b) = unit_pair(&[(10.0, 0.5)], &[(20.0, 0.5)]);
        assert_eq!(warped_drift(&a, &b, 100.0, 256).len(), 128);
    }

    #[test]
    fn zero_drift_power_is_alpha() {
        let pair = unit_pair(&[(10.0, 0.5), (20.0, 1.0)], &[(10.0, 0.5), (20.0, 1.0)]);
        let model = BridgeModel { pairs: vec![pair.clone(), pair], tau: 100.0, m_o: 4.0, design_effect: 2.0, grid_size: 256, n_sim: 4000 };
        let curve = bridge_power(&model, &[5, 10, 20], 0.05, &RngPolicy::new(3)).unwrap();
        for p in &curve.points {
            assert!((p.power - 0.05).abs() <= 0.02, "{p:?}");
        }
        assert_eq!(curve.n80, None);
    }

    #[test]
    fn power_monotone_and_design_effect_equivalence() {
        let pair = unit_pair(&[(10.0, 0.4), (20.0, 0.9)], &[(10.0, 0.2), (20.0, 0.7), (30.0, 0.9)]);
        let model = BridgeModel { pairs: vec![pair], tau: 100.0, m_o: 4.0, design_effect: 1.0, grid_size: 256, n_sim: 4000 };
        let rng = RngPolicy::new(5);
        let grid = [5, 10, 20, 40, 80];
        let c1 = bridge_power(&model, &grid, 0.05, &rng).unwrap();
        assert!(c1.points.windows(2).all(|w| w[1].power >= w[0].power - 0.02));
        assert!(c1.points.last().unwrap().power > 0.9);
        let doubled = BridgeModel { design_effect: 2.0, ..model.clone() };
        let c2 = bridge_power(&doubled, &[10, 20, 40, 80], 0.05, &rng).unwrap();
        for (p2, p1) in c2.points.iter().zip(&c1.points) {
            assert!((p2.power - p1.power).abs() <= 0.03, "{p2:?} vs {p1:?}");
        }
    }

    #[test]
    fn calibration_recovers_its_own_design_effect() {
        let pair = unit_pair(&[(10.0, 0.4), (20.0, 0.9)], &[(10.0, 0.2), (20.0, 0.7), (30.0, 0.9)]);
        let model = BridgeModel { pairs: vec![pair], tau: 100.0, m_o: 4.4, design_effect: 1.0, grid_size: 256, n_sim: 4000 };
        let sampler = BridgeSampler::new(&model.pairs, model.tau, model.grid_size, model.n_sim);
        let table = PowerTable::build(&sampler, 0.5, 20.0, 64, 0.05, &RngPolicy::new(9));
        let grid = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        let predict = |d: f64| grid.iter().map(|&n| table.at(model.scale(n, d))).collect::<Vec<_>>();
        for truth in [1.0, 2.25] {
            let d = calibrate_design_effect(predict, &predict(truth)).unwrap();
            assert!((d - truth).abs() <= 0.05, "{d} vs {truth}");
        }
        // One flat point repeated: every D fits equally, lowest wins.
        assert_eq!(calibrate_design_effect(|_| vec![0.5, 0.5], &[0.5, 0.5]).unwrap(), 1.0);
        assert!(calibrate_design_effect(|_| vec![0.5], &[0.5]).is_err());
    }

    #[test]
    fn icc_cases() {
        let same = vec![vec![3.0, 3.0], vec![3.0, 3.0, 3.0]];
        assert_eq!(icc(&same), Some(Icc { rho: 0.0, degenerate: true }));
        let between = vec![vec![1.0, 1.0], vec![5.0, 5.0], vec![9.0, 9.0]];
        assert_eq!(icc(&between).unwrap().rho, 1.0);
        assert_eq!(icc(&[vec![1.0], vec![2.0]]), None);
        let with_ghosts = vec![vec![1.0, f64::INFINITY, 1.0], vec![5.0, 5.0]];
        assert_eq!(icc(&with_ghosts).unwrap().rho, 1.0);
    }
}
