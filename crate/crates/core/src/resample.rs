//! Episode-clustered resampling and deterministic random streams.
//!
//! # Stream derivation
//!
//! A [`RngPolicy`] holds a 64-bit master seed. The stream for
//! `(purpose, index)` is ChaCha8 keyed with the 32 bytes
//! `master_seed (LE) ‖ fnv1a64(purpose) (LE) ‖ index (LE) ‖ "survcdf\0"`.
//! A child policy takes the first `u64` of its parent's
//! `(purpose, index)` stream as master seed. Every replicate and every outer
//! trial owns one stream, so results are independent of scheduling and of
//! which other trials ran.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, purpose: &str, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a64(purpose).to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..].copy_from_slice(b"survcdf\0");
        ChaCha8Rng::from_seed(key)
    }

    pub fn child(&self, purpose: &str, index: u64) -> RngPolicy {
        RngPolicy::new(self.stream(purpose, index).next_u64())
    }
}

impl std::fmt::Display for RngPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "chacha8 master_seed={} (stream key: seed|fnv1a64(purpose)|index)", self.master_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot: usize,
    pub n_degenerate: usize,
}

/// Resample each cell's clusters with replacement to its original size.
pub fn resample_cells<'a, T, R: Rng>(cells: &'a [Vec<T>], rng: &mut R) -> Vec<Vec<&'a T>> {
    cells
        .iter()
        .map(|cell| (0..cell.len()).map(|_| &cell[rng.random_range(0..cell.len())]).collect())
        .collect()
}

fn as_refs<T>(cells: &[Vec<T>]) -> Vec<Vec<&T>> {
    cells.iter().map(|c| c.iter().collect()).collect()
}

fn check_nonempty<T>(cells: &[Vec<T>]) -> Result<()> {
    if cells.is_empty() || cells.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every resampling cell must be nonempty"));
    }
    Ok(())
}

/// Evaluate `f` on `n_boot` clustered resamples, replicate `r` drawing from
/// stream `(purpose, r)`.
pub fn replicates<T, R, F>(cells: &[Vec<T>], n_boot: usize, rng: &RngPolicy, purpose: &str, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[Vec<&T>]) -> R + Sync + Send,
{
    par::map_indexed(n_boot, |r| {
        let mut stream = rng.stream(purpose, r as u64);
        let sample = resample_cells(cells, &mut stream);
        f(&sample)
    })
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_stability(undefined: usize, total: usize) -> Result<()> {
    if undefined * 2 > total {
        Err(Error::Unstable { undefined, total })
    } else {
        Ok(())
    }
}

/// Percentile interval for a statistic of per-cell episode lists.
///
/// `statistic` returns `None` where it is undefined; such replicates are
/// counted in `n_degenerate` and dropped.
pub fn cluster_bootstrap_ci<T, S>(
    cells: &[Vec<T>],
    statistic: S,
    n_boot: usize,
    level: f64,
    rng: &RngPolicy,
) -> Result<BootstrapResult>
where
    T: Sync,
    S: Fn(&[Vec<&T>]) -> Option<f64> + Sync + Send,
{
    check_nonempty(cells)?;
    if n_boot < 100 {
        return Err(Error::invalid(format!("n_boot must be >= 100, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must be in (0, 1), got {level}")));
    }
    let point = statistic(&as_refs(cells))
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Degenerate("statistic undefined on the original data".into()))?;
    let reps = replicates(cells, n_boot, rng, "bootstrap-ci", |s| statistic(s));
    let mut valid: Vec<f64> = reps.into_iter().flatten().filter(|v| v.is_finite()).collect();
    let n_degenerate = n_boot - valid.len();
    check_stability(n_degenerate, n_boot)?;
    valid.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(BootstrapResult {
        point,
        ci_low: quantile_sorted(&valid, alpha / 2.0),
        ci_high: quantile_sorted(&valid, 1.0 - alpha / 2.0),
        n_boot,
        n_degenerate,
    })
}

fn check_arms<T>(arm_a: &[Vec<T>], arm_b: &[Vec<T>]) -> Result<()> {
    check_nonempty(arm_a)?;
    check_nonempty(arm_b)?;
    if arm_a.len() != arm_b.len() {
        return Err(Error::invalid("arms must cover the same objects"));
    }
    Ok(())
}

/// One-sided p-value of `observed` against the pooled-resample null.
///
/// Per object the two arms' episodes are pooled and redrawn with
/// replacement into arms of the original sizes;
/// `p = (1 + #{replicate ≥ observed}) / (1 + n_valid)`.
pub fn pooled_null_resample<T, S>(
    arm_a: &[Vec<T>],
    arm_b: &[Vec<T>],
    statistic: S,
    observed: f64,
    n_boot: usize,
    rng: &RngPolicy,
) -> Result<f64>
where
    T: Sync,
    S: Fn(&[Vec<&T>], &[Vec<&T>]) -> Option<f64> + Sync + Send,
{
    check_arms(arm_a, arm_b)?;
    if n_boot == 0 {
        return Err(Error::invalid("n_boot must be positive"));
    }
    let pooled: Vec<Vec<&T>> = arm_a
        .iter()
        .zip(arm_b)
        .map(|(a, b)| a.iter().chain(b.iter()).collect())
        .collect();
    let reps = par::map_indexed(n_boot, |r| {
        let mut stream = rng.stream("pooled-null", r as u64);
        let mut star_a = Vec::with_capacity(pooled.len());
        let mut star_b = Vec::with_capacity(pooled.len());
        for ((pool, a), b) in pooled.iter().zip(arm_a).zip(arm_b) {
            let draw = |n: usize, s: &mut ChaCha8Rng| -> Vec<&T> {
                (0..n).map(|_| pool[s.random_range(0..pool.len())]).collect()
            };
            star_a.push(draw(a.len(), &mut stream));
            star_b.push(draw(b.len(), &mut stream));
        }
        statistic(&star_a, &star_b)
    });
    let valid: Vec<f64> = reps.into_iter().flatten().filter(|v| v.is_finite()).collect();
    check_stability(n_boot - valid.len(), n_boot)?;
    let exceed = valid.iter().filter(|&&v| v >= observed - 1e-12).count();
    Ok((1 + exceed) as f64 / (1 + valid.len()) as f64)
}

/// Two-sided p-values for the differences of several scalars, sharing the
/// same within-arm clustered resamples.
///
/// For each scalar, `Δ* = s(a*) − s(b*)` and
/// `p = 2·min(frac(Δ* ≤ 0), frac(Δ* ≥ 0))`, clipped to `[1/(1+n_boot), 1]`.
pub fn two_sided_multi_p<T, S>(
    arm_a: &[Vec<T>],
    arm_b: &[Vec<T>],
    n_scalars: usize,
    scalars: S,
    n_boot: usize,
    rng: &RngPolicy,
) -> Result<Vec<f64>>
where
    T: Sync,
    S: Fn(&[Vec<&T>]) -> Vec<Option<f64>> + Sync + Send,
{
    check_arms(arm_a, arm_b)?;
    if n_boot == 0 {
        return Err(Error::invalid("n_boot must be positive"));
    }
    let diffs: Vec<Vec<Option<f64>>> = par::map_indexed(n_boot, |r| {
        let mut stream = rng.stream("two-sided-diff", r as u64);
        let a = resample_cells(arm_a, &mut stream);
        let b = resample_cells(arm_b, &mut stream);
        let (sa, sb) = (scalars(&a), scalars(&b));
        debug_assert_eq!(sa.len(), n_scalars);
        sa.iter()
            .zip(&sb)
            .map(|(x, y)| x.zip(*y).map(|(x, y)| x - y).filter(|d| d.is_finite()))
            .collect()
    });
    let floor = 1.0 / (1 + n_boot) as f64;
    (0..n_scalars)
        .map(|k| {
            let valid: Vec<f64> = diffs.iter().filter_map(|d| d[k]).collect();
            check_stability(n_boot - valid.len(), n_boot)?;
            let n = valid.len() as f64;
            let le = valid.iter().filter(|&&d| d <= 0.0).count() as f64 / n;
            let ge = valid.iter().filter(|&&d| d >= 0.0).count() as f64 / n;
            Ok((2.0 * le.min(ge)).clamp(floor, 1.0))
        })
        .collect()
}

pub fn two_sided_scalar_p<T, S>(arm_a: &[Vec<T>], arm_b: &[Vec<T>], scalar: S, n_boot: usize, rng: &RngPolicy) -> Result<f64>
where
    T: Sync,
    S: Fn(&[Vec<&T>]) -> Option<f64> + Sync + Send,
{
    two_sided_multi_p(arm_a, arm_b, 1, |s| vec![scalar(s)], n_boot, rng).map(|v| v[0])
}
