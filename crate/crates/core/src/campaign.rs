//! Reproducible report campaigns: load a cohort, run one analysis, and
//! write fixed-header CSV tables plus SVG charts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    detection_curve, mean_ops_per_episode, null_calibration, pair_label, smallest_n_table, DetectionRow, EfficiencySpec,
    Metric, NullCalResult, NullCalSpec,
};
use crate::hypothesis::{bonferroni, resolve_pair, significance_stars, stratified_logrank};
use crate::ingest::{
    build_cohort, failure_decomposition, parse_episode_logs_with_warnings, spatial_sensitivity, write_episode_logs,
    Cohort, EpisodeLog, EpisodeRecord, Outcome,
};
use crate::power::{bridge_power, calibrate_design_effect, mcnemar_n, wilson_n, BridgeModel, BridgeSampler, PowerCurve, PowerTable};
use crate::projections::{
    auc_probability, default_q_grid, hrt_ratios, mean, pp_curve, qq_curve, rmst_unchecked, uph_mtbf_trajectory, ScalarConfig,
};
use crate::resample::{cluster_bootstrap_ci, quantile_sorted, replicates, BootstrapResult, RngPolicy};
use crate::survival::{km_from_episodes, StepCdf};
use crate::svg::{Chart, Series};
use crate::synthetic::{generate_episodes, SyntheticSpec};

fn d_reference() -> String {
    "human".into()
}
fn d_tau() -> f64 {
    240.0
}
fn d_n_boot() -> usize {
    1000
}
fn d_alpha() -> f64 {
    0.05
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "d_reference")]
    pub reference_policy: String,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_tau")]
    pub tau_episode: f64,
    #[serde(default = "d_n_boot")]
    pub n_boot: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Restrict and order the macro-average objects.
    #[serde(default)]
    pub objects: Option<Vec<String>>,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    /// 0 lets the runtime decide.
    #[serde(default)]
    pub threads: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl CampaignConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn rng(&self) -> RngPolicy {
        RngPolicy::new(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau_episode > 0.0) {
            return Err(Error::invalid("tau and tau_episode must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if self.n_boot < 100 {
            return Err(Error::invalid("n_boot must be >= 100"));
        }
        Ok(())
    }
}

pub struct Loaded {
    pub cohort: Cohort,
    pub scalar: ScalarConfig,
    pub warnings: Vec<String>,
}

pub fn load_cohort(cfg: &CampaignConfig) -> Result<Loaded> {
    cfg.validate()?;
    if cfg.inputs.is_empty() {
        return Err(Error::invalid("no input episode logs given"));
    }
    let mut episodes = Vec::new();
    let mut warnings = Vec::new();
    for path in &cfg.inputs {
        let (eps, warns) = parse_episode_logs_with_warnings(BufReader::new(File::open(path)?))?;
        episodes.extend(eps);
        warnings.extend(warns.into_iter().map(|w| format!("{}: {w}", path.display())));
    }
    let mut cohort = build_cohort(episodes, &cfg.reference_policy, cfg.tau_episode)?;
    if let Some(objects) = &cfg.objects {
        cohort = cohort.with_objects(objects)?;
    }
    let scalar = ScalarConfig::new(cfg.tau, cfg.tau_episode, cohort.objects.clone())?;
    Ok(Loaded { cohort, scalar, warnings })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Write a CSV with a fixed header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<usize>) -> String {
    x.map_or_else(|| "—".to_string(), |n| n.to_string())
}

/// File-name-safe version of a label.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub policy: String,
    pub object: String,
    pub episodes: usize,
    pub events: usize,
    pub ghosts: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub cells: Vec<CellSummary>,
    pub warnings: Vec<String>,
}

/// Cell counts, failure-mode decomposition and spatial sensitivity.
pub fn cmd_ingest(cfg: &CampaignConfig) -> Result<IngestReport> {
    let Loaded { cohort, warnings, .. } = load_cohort(cfg)?;
    ensure_dir(&cfg.out)?;
    let cells: Vec<CellSummary> = cohort
        .cells()
        .map(|(k, eps)| {
            let obs = eps.iter().flat_map(|e| &e.observations);
            let (mut events, mut ghosts, mut censored) = (0, 0, 0);
            for o in obs {
                match (o.ghost, o.event) {
                    (true, _) => ghosts += 1,
                    (false, true) => events += 1,
                    (false, false) => censored += 1,
                }
            }
            CellSummary { policy: k.policy.clone(), object: k.object.clone(), episodes: eps.len(), events, ghosts, censored }
        })
        .collect();
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![c.policy.clone(), c.object.clone(), c.episodes.to_string(), c.events.to_string(), c.ghosts.to_string(), c.censored.to_string()]
        })
        .collect();
    write_csv(&cfg.out.join("cells.csv"), &["policy", "object", "episodes", "events", "ghosts", "censored"], &rows)?;

    let rows: Vec<Vec<String>> = failure_decomposition(&cohort)
        .into_iter()
        .map(|r| {
            vec![
                r.policy,
                r.episodes.to_string(),
                r.operations.to_string(),
                fmt_f(r.dropout_rate_per_operation),
                fmt_f(r.safety_stop_rate_per_episode),
                fmt_f(r.timeout_rate_per_episode),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("failure_modes.csv"),
        &["policy", "episodes", "operations", "dropout_rate_per_operation", "safety_stop_rate_per_episode", "timeout_rate_per_episode"],
        &rows,
    )?;

    let opt = |x: Option<f64>| x.map_or_else(|| "absent".to_string(), fmt_f);
    let rows: Vec<Vec<String>> = spatial_sensitivity(&cohort)
        .into_iter()
        .map(|r| {
            vec![
                r.policy,
                opt(r.same_side_completion),
                opt(r.opposite_side_completion),
                opt(r.delta_pp),
                r.same_side_episodes.to_string(),
                r.opposite_side_episodes.to_string(),
                r.excluded_episodes.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("spatial.csv"),
        &["policy", "same_side_completion", "opposite_side_completion", "delta_pp", "same_side_episodes", "opposite_side_episodes", "excluded_episodes"],
        &rows,
    )?;
    Ok(IngestReport { cells, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadlineRow {
    pub policy: String,
    /// RMST of the KM pooled over all objects.
    pub rmst: BootstrapResult,
    /// Macro mean of per-object reference/model RMST ratios.
    pub hrt: BootstrapResult,
    /// Macro mean of per-object `P(T_model < T_ref)` (+½ ties).
    pub auc_vs_reference: f64,
    /// Safety-stop episodes ÷ episodes; drops are not included.
    pub intervention_rate: f64,
    pub episodes: usize,
}

fn flat_rmst<E: crate::ingest::HasObservations>(cells: &[Vec<E>], tau: f64) -> f64 {
    let all: Vec<&E> = cells.iter().flatten().collect();
    rmst_unchecked(&km_from_episodes(&all, tau), tau)
}

pub fn headline(cohort: &Cohort, sc: &ScalarConfig, n_boot: usize, rng: &RngPolicy) -> Result<Vec<HeadlineRow>> {
    cohort.require_reference()?;
    let reference = cohort.arm(&cohort.reference_policy, &sc.objects)?;
    let j = reference.len();
    let ref_cdfs: Vec<StepCdf> = reference.iter().map(|c| km_from_episodes(c, sc.tau)).collect();
    let mut policies = vec![cohort.reference_policy.clone()];
    policies.extend(cohort.evaluated_policies());
    policies
        .iter()
        .enumerate()
        .map(|(i, policy)| {
            let arm = cohort.arm(policy, &sc.objects)?;
            let tau = sc.tau;
            let rmst = cluster_bootstrap_ci(&arm, |s| Some(flat_rmst(s, tau)), n_boot, 0.95, &rng.child("headline-rmst", i as u64))?;
            let hrt = if *policy == cohort.reference_policy {
                cluster_bootstrap_ci(&arm, |s| hrt_ratios(s, s, tau).map(|r| mean(&r)), n_boot, 0.95, &rng.child("headline-hrt", i as u64))?
            } else {
                let joint: Vec<Vec<&EpisodeRecord>> = reference.iter().chain(&arm).cloned().collect();
                cluster_bootstrap_ci(
                    &joint,
                    |s| hrt_ratios(&s[..j], &s[j..], tau).map(|r| mean(&r)),
                    n_boot,
                    0.95,
                    &rng.child("headline-hrt", i as u64),
                )?
            };
            let aucs: Vec<f64> = arm
                .iter()
                .zip(&ref_cdfs)
                .map(|(c, r)| auc_probability(&km_from_episodes(c, tau), r, tau))
                .collect();
            let eps: Vec<&EpisodeRecord> = arm.iter().flatten().copied().collect();
            let safety = eps.iter().filter(|e| e.log.outcome == Outcome::Safety).count();
            Ok(HeadlineRow {
                policy: policy.clone(),
                rmst,
                hrt,
                auc_vs_reference: mean(&aucs),
                intervention_rate: safety as f64 / eps.len() as f64,
                episodes: eps.len(),
            })
        })
        .collect()
}

pub const HEADLINE_HEADER: [&str; 11] = [
    "policy",
    "rmst",
    "rmst_ci_low",
    "rmst_ci_high",
    "hrt",
    "hrt_ci_low",
    "hrt_ci_high",
    "auc_vs_reference",
    "intervention_rate_lower_bound",
    "episodes",
    "n_degenerate",
];

pub fn cmd_headline(cfg: &CampaignConfig) -> Result<Vec<HeadlineRow>> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let rows = headline(&cohort, &scalar, cfg.n_boot, &cfg.rng())?;
    ensure_dir(&cfg.out)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.policy.clone(),
                fmt_f(r.rmst.point),
                fmt_f(r.rmst.ci_low),
                fmt_f(r.rmst.ci_high),
                fmt_f(r.hrt.point),
                fmt_f(r.hrt.ci_low),
                fmt_f(r.hrt.ci_high),
                fmt_f(r.auc_vs_reference),
                fmt_f(r.intervention_rate),
                r.episodes.to_string(),
                (r.rmst.n_degenerate + r.hrt.n_degenerate).to_string(),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("headline.csv"), &HEADLINE_HEADER, &csv_rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub pair_a: String,
    pub pair_b: String,
    pub macro_d: f64,
    pub ks_p_raw: f64,
    pub ks_p_bonferroni: f64,
    pub logrank_chi2: f64,
    pub logrank_p_raw: f64,
    pub logrank_p_bonferroni: f64,
    pub significance: String,
    pub direction: i8,
    pub crossing: bool,
    pub verdict: String,
}

pub const COMPARE_HEADER: [&str; 12] = [
    "pair_a",
    "pair_b",
    "macro_d",
    "ks_p_raw",
    "ks_p_bonferroni",
    "logrank_chi2",
    "logrank_p_raw",
    "logrank_p_bonferroni",
    "significance",
    "direction",
    "crossing",
    "verdict",
];

/// Every unordered pair of evaluated policies, in name order.
pub fn all_pairs(cohort: &Cohort) -> Vec<(String, String)> {
    let p = cohort.evaluated_policies();
    let mut out = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            out.push((p[i].clone(), p[j].clone()));
        }
    }
    out
}

pub fn compare(cohort: &Cohort, sc: &ScalarConfig, pairs: &[(String, String)], alpha: f64, n_boot: usize, rng: &RngPolicy) -> Result<Vec<CompareRow>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to compare"));
    }
    let mut rows = Vec::new();
    let mut ks_p = Vec::new();
    let mut lr_p = Vec::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        let v = resolve_pair(cohort, (a, b), sc, alpha, n_boot, &rng.child("compare", i as u64))?;
        let lr = stratified_logrank(cohort, a, b, sc)?;
        ks_p.push(v.ks.p_value);
        lr_p.push(lr.p);
        rows.push(CompareRow {
            pair_a: a.clone(),
            pair_b: b.clone(),
            macro_d: v.ks.macro_d,
            ks_p_raw: v.ks.p_value,
            ks_p_bonferroni: 0.0,
            logrank_chi2: lr.chi2,
            logrank_p_raw: lr.p,
            logrank_p_bonferroni: 0.0,
            significance: String::new(),
            direction: v.direction,
            crossing: v.crossing,
            verdict: v.outcome.as_str().to_string(),
        });
    }
    for ((row, k), l) in rows.iter_mut().zip(bonferroni(&ks_p)).zip(bonferroni(&lr_p)) {
        row.ks_p_bonferroni = k;
        row.logrank_p_bonferroni = l;
        row.significance = significance_stars(l).to_string();
    }
    Ok(rows)
}

pub fn cmd_compare(cfg: &CampaignConfig, pairs: Option<Vec<(String, String)>>) -> Result<Vec<CompareRow>> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let pairs = pairs.unwrap_or_else(|| all_pairs(&cohort));
    let rows = compare(&cohort, &scalar, &pairs, cfg.alpha, cfg.n_boot, &cfg.rng())?;
    ensure_dir(&cfg.out)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.pair_a.clone(),
                r.pair_b.clone(),
                fmt_f(r.macro_d),
                fmt_f(r.ks_p_raw),
                fmt_f(r.ks_p_bonferroni),
                fmt_f(r.logrank_chi2),
                fmt_f(r.logrank_p_raw),
                fmt_f(r.logrank_p_bonferroni),
                r.significance.clone(),
                r.direction.to_string(),
                r.crossing.to_string(),
                r.verdict.clone(),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("compare.csv"), &COMPARE_HEADER, &csv_rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeOptions {
    pub pair: (String, String),
    pub design_effect: f64,
    pub n_grid: Vec<usize>,
    pub grid_size: usize,
    pub n_sim: usize,
    /// Mean operations per episode; measured from the pair when absent.
    pub m_o: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSummary {
    pub n80: Option<usize>,
    pub alpha: f64,
    #[serde(rename = "D")]
    pub design_effect: f64,
    pub m_o: f64,
    pub critical_value: f64,
}

pub fn bridge_model_for(cohort: &Cohort, sc: &ScalarConfig, pair: (&str, &str), m_o: Option<f64>, design_effect: f64, grid_size: usize, n_sim: usize) -> Result<BridgeModel> {
    let a = cohort.arm(pair.0, &sc.objects)?;
    let b = cohort.arm(pair.1, &sc.objects)?;
    let pairs = sc
        .objects
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(o, (ca, cb))| (o.clone(), km_from_episodes(ca, sc.tau), km_from_episodes(cb, sc.tau)))
        .collect();
    let m_o = m_o.unwrap_or_else(|| mean_ops_per_episode(cohort, &[pair.0, pair.1]));
    Ok(BridgeModel { pairs, tau: sc.tau, m_o, design_effect, grid_size, n_sim })
}

pub fn write_power_curve(dir: &Path, curve: &PowerCurve, summary: &PowerSummary) -> Result<()> {
    let rows: Vec<Vec<String>> = curve.points.iter().map(|p| vec![p.n_cell.to_string(), fmt_f(p.power)]).collect();
    write_csv(&dir.join("power.csv"), &["n_cell", "power"], &rows)?;
    write_json(&dir.join("power_summary.json"), summary)?;
    let mut chart = Chart::new("Predicted macro-KS power", "episodes per cell", "power");
    chart.y_range = Some((0.0, 1.0));
    chart.h_line = Some(0.8);
    chart.series.push(Series::line("bridge model", curve.points.iter().map(|p| (p.n_cell as f64, p.power)).collect()));
    write_text(&dir.join("power.svg"), &chart.render())
}

pub fn cmd_power_bridge(cfg: &CampaignConfig, opts: &BridgeOptions) -> Result<(PowerCurve, PowerSummary)> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let model = bridge_model_for(&cohort, &scalar, (&opts.pair.0, &opts.pair.1), opts.m_o, opts.design_effect, opts.grid_size, opts.n_sim)?;
    let curve = bridge_power(&model, &opts.n_grid, cfg.alpha, &cfg.rng())?;
    let summary = PowerSummary { n80: curve.n80, alpha: cfg.alpha, design_effect: model.design_effect, m_o: model.m_o, critical_value: curve.critical_value };
    ensure_dir(&cfg.out)?;
    write_power_curve(&cfg.out, &curve, &summary)?;
    Ok((curve, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub pair: String,
    pub n: usize,
    pub empirical: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    #[serde(rename = "D")]
    pub design_effect: f64,
    pub points: Vec<CalibrationPoint>,
    pub max_abs_error: f64,
}

pub fn read_detection_csv(path: &Path) -> Result<Vec<DetectionRow>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::invalid(format!("{}: short row", path.display())));
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse::<f64>().map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
        };
        rows.push(DetectionRow {
            n: num(0)? as usize,
            metric: Metric::parse(field(1)?)?,
            pair: field(2)?.to_string(),
            detection_rate: num(3)?,
        });
    }
    Ok(rows)
}

/// Fit `D` so the bridge model reproduces empirical KS detection rates.
/// Each pair label must read `"a vs b"`.
pub fn calibrate(
    cohort: &Cohort,
    sc: &ScalarConfig,
    empirical: &[DetectionRow],
    alpha: f64,
    grid_size: usize,
    n_sim: usize,
    rng: &RngPolicy,
) -> Result<Calibration> {
    let ks: Vec<&DetectionRow> = empirical.iter().filter(|r| r.metric == Metric::Ks).collect();
    let mut by_pair: BTreeMap<&str, Vec<&DetectionRow>> = BTreeMap::new();
    for r in &ks {
        by_pair.entry(r.pair.as_str()).or_default().push(r);
    }
    let mut tables = Vec::new();
    for (i, (label, rows)) in by_pair.iter().enumerate() {
        let (a, b) = label
            .split_once(" vs ")
            .ok_or_else(|| Error::invalid(format!("pair label {label:?} is not of the form \"a vs b\"")))?;
        let model = bridge_model_for(cohort, sc, (a, b), None, 1.0, grid_size, n_sim)?;
        let sampler = BridgeSampler::new(&model.pairs, model.tau, grid_size, n_sim);
        let n_max = rows.iter().map(|r| r.n).max().unwrap_or(1) as f64;
        let n_min = rows.iter().map(|r| r.n).min().unwrap_or(1) as f64;
        let table = PowerTable::build(&sampler, model.scale(n_min, 4.0) * 0.9, model.scale(n_max, 1.0) * 1.1, 96, alpha, &rng.child("calibrate", i as u64));
        tables.push((model, table, rows.clone()));
    }
    let predict = |d: f64| -> Vec<f64> {
        tables.iter().flat_map(|(m, t, rows)| rows.iter().map(move |r| t.at(m.scale(r.n as f64, d)))).collect()
    };
    let emp: Vec<f64> = tables.iter().flat_map(|(_, _, rows)| rows.iter().map(|r| r.detection_rate)).collect();
    let d = calibrate_design_effect(predict, &emp)?;
    let pred = predict(d);
    let points: Vec<CalibrationPoint> = tables
        .iter()
        .flat_map(|(_, _, rows)| rows.iter())
        .zip(&pred)
        .map(|(r, &p)| CalibrationPoint { pair: r.pair.clone(), n: r.n, empirical: r.detection_rate, predicted: p })
        .collect();
    let max_abs_error = points.iter().map(|p| (p.empirical - p.predicted).abs()).fold(0.0, f64::max);
    Ok(Calibration { design_effect: d, points, max_abs_error })
}

pub fn cmd_power_calibrate(cfg: &CampaignConfig, detection_csv: &Path, grid_size: usize, n_sim: usize) -> Result<Calibration> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let rows = read_detection_csv(detection_csv)?;
    let cal = calibrate(&cohort, &scalar, &rows, cfg.alpha, grid_size, n_sim, &cfg.rng())?;
    ensure_dir(&cfg.out)?;
    write_json(&cfg.out.join("calibration.json"), &cal)?;
    let rows: Vec<Vec<String>> = cal.points.iter().map(|p| vec![p.pair.clone(), p.n.to_string(), fmt_f(p.empirical), fmt_f(p.predicted)]).collect();
    write_csv(&cfg.out.join("calibration.csv"), &["pair", "n", "empirical", "predicted"], &rows)?;
    Ok(cal)
}

#[derive(Debug, Clone, Serialize)]
pub struct WilsonReport {
    pub p_hat: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub n: u64,
    pub n_worst_case: u64,
}

pub fn power_wilson(p_hat: f64, half_width: f64, confidence: f64) -> Result<WilsonReport> {
    let w = wilson_n(p_hat, half_width, confidence)?;
    Ok(WilsonReport { p_hat, half_width, confidence, n: w.n, n_worst_case: w.n_worst_case })
}

#[derive(Debug, Clone, Serialize)]
pub struct McnemarReport {
    pub p_d: f64,
    pub delta: f64,
    pub alpha: f64,
    pub power: f64,
    pub exact: f64,
    pub pairs: u64,
    pub rollouts: u64,
}

pub fn power_mcnemar(p_d: f64, delta: f64, alpha: f64, power: f64) -> Result<McnemarReport> {
    let m = mcnemar_n(p_d, delta, alpha, power)?;
    Ok(McnemarReport { p_d, delta, alpha, power, exact: m.exact, pairs: m.pairs, rollouts: m.rollouts })
}

pub const DETECTION_HEADER: [&str; 4] = ["n", "metric", "pair", "detection_rate"];

pub fn write_detection(dir: &Path, rows: &[DetectionRow]) -> Result<()> {
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), r.metric.to_string(), r.pair.clone(), fmt_f(r.detection_rate)])
        .collect();
    write_csv(&dir.join("detection.csv"), &DETECTION_HEADER, &csv_rows)?;
    let table = smallest_n_table(rows, 0.8);
    let csv_rows: Vec<Vec<String>> = table.iter().map(|((pair, m), n)| vec![pair.clone(), m.to_string(), fmt_opt(*n)]).collect();
    write_csv(&dir.join("smallest_n.csv"), &["pair", "metric", "smallest_n_at_0.8"], &csv_rows)?;
    for (pair, chart) in detection_charts(rows) {
        write_text(&dir.join(format!("detection_{}.svg", slug(&pair))), &chart.render())?;
    }
    Ok(())
}

fn detection_charts(rows: &[DetectionRow]) -> Vec<(String, Chart)> {
    let mut by_pair: BTreeMap<&str, BTreeMap<Metric, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in rows {
        by_pair.entry(&r.pair).or_default().entry(r.metric).or_default().push((r.n as f64, r.detection_rate));
    }
    by_pair
        .into_iter()
        .map(|(pair, metrics)| {
            let mut chart = Chart::new(format!("Detection rate: {pair}"), "episodes per cell", "detection rate");
            chart.y_range = Some((0.0, 1.0));
            chart.h_line = Some(0.8);
            for (m, mut pts) in metrics {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                chart.series.push(Series::line(m.to_string(), pts));
            }
            (pair.to_string(), chart)
        })
        .collect()
}

/// Detection curves for several pairs; pair `i` uses child stream `i`.
pub fn efficiency(cohort: &Cohort, objects: &[String], specs: &[EfficiencySpec], rng: &RngPolicy) -> Result<Vec<DetectionRow>> {
    let mut rows = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        rows.extend(detection_curve(cohort, objects, spec, &rng.child("efficiency-pair", i as u64))?);
    }
    Ok(rows)
}

pub fn cmd_efficiency(cfg: &CampaignConfig, specs: &[EfficiencySpec]) -> Result<Vec<DetectionRow>> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let rows = efficiency(&cohort, &scalar.objects, specs, &cfg.rng())?;
    ensure_dir(&cfg.out)?;
    write_detection(&cfg.out, &rows)?;
    Ok(rows)
}

pub fn nullcal_header(alphas: &[f64]) -> Vec<String> {
    let mut h = vec!["setup".to_string(), "trials".into(), "mean_p".into()];
    for a in alphas {
        h.push(format!("reject_{a}"));
        h.push(format!("reject_{a}_pm"));
    }
    h.push("excluded_episodes".into());
    h
}

pub fn cmd_nullcal(cfg: &CampaignConfig, specs: &[NullCalSpec]) -> Result<Vec<NullCalResult>> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    let mut results = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        results.push(null_calibration(&cohort, &scalar.objects, scalar.tau, spec, &cfg.rng().child("nullcal-setup", i as u64))?);
    }
    ensure_dir(&cfg.out)?;
    let alphas = specs.first().map(|s| s.alphas.clone()).unwrap_or_default();
    if specs.iter().any(|s| s.alphas != alphas) {
        return Err(Error::invalid("all null-calibration setups must share one alpha list"));
    }
    let header = nullcal_header(&alphas);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.setup.clone(), r.trials.to_string(), fmt_f(r.mean_p)];
            for rate in &r.rates {
                row.push(fmt_f(rate.rate));
                row.push(fmt_f(rate.half_width));
            }
            row.push(r.excluded_episodes.to_string());
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&cfg.out.join("nullcal.csv"), &header_refs, &rows)?;
    Ok(results)
}

/// Pointwise percentile band of `F(t)` on `grid` under clustered resampling.
pub fn cdf_band(cell: &[&EpisodeRecord], tau: f64, grid: &[f64], n_boot: usize, rng: &RngPolicy) -> Vec<(f64, f64)> {
    let cells = vec![cell.to_vec()];
    let reps: Vec<Vec<f64>> = replicates(&cells, n_boot, rng, "cdf-band", |s| {
        let f = km_from_episodes(&s[0], tau);
        grid.iter().map(|&t| f.eval(t)).collect()
    });
    (0..grid.len())
        .map(|k| {
            let mut col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975))
        })
        .collect()
}

fn step_points(f: &StepCdf, tau: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(f.knots.iter().zip(&f.values).filter(|(t, _)| **t <= tau).map(|(&t, &v)| (t, v)));
    pts.push((tau, f.eval(tau)));
    pts
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PlotBundle {
    pub files: Vec<PathBuf>,
}

/// CDFs with bootstrap bands, P-P and Q-Q against the reference, UPH vs
/// MTBF/A trajectories, and detection curves when a detection CSV is given.
pub fn cmd_plots(cfg: &CampaignConfig, detection_csv: Option<&Path>) -> Result<PlotBundle> {
    let Loaded { cohort, scalar, .. } = load_cohort(cfg)?;
    ensure_dir(&cfg.out)?;
    let rng = cfg.rng();
    let tau = scalar.tau;
    let mut bundle = PlotBundle::default();
    let mut emit = |name: String, text: String| -> Result<()> {
        let p = cfg.out.join(name);
        write_text(&p, &text)?;
        bundle.files.push(p);
        Ok(())
    };
    let csv_text = |header: &[&str], rows: Vec<Vec<String>>| -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).map_err(|e| Error::invalid(e.to_string()))
    };
    let policies = cohort.policies();
    let grid: Vec<f64> = (0..=120).map(|k| tau * k as f64 / 120.0).collect();
    let has_ref = cohort.has_policy(&cohort.reference_policy);

    for (oi, object) in scalar.objects.iter().enumerate() {
        let mut chart = Chart::new(format!("Time-to-success CDF: {object}"), "t (s)", "F(t)");
        chart.x_range = Some((0.0, tau));
        chart.y_range = Some((0.0, 1.0));
        let mut rows = Vec::new();
        let mut cdfs: BTreeMap<&str, StepCdf> = BTreeMap::new();
        for (pi, policy) in policies.iter().enumerate() {
            let Ok(cell) = cohort.cell(policy, object) else { continue };
            let refs: Vec<&EpisodeRecord> = cell.iter().collect();
            let f = km_from_episodes(&refs, tau);
            let band = cdf_band(&refs, tau, &grid, cfg.n_boot, &rng.child("plot-band", (oi * policies.len() + pi) as u64));
            for (t, (lo, hi)) in grid.iter().zip(&band) {
                rows.push(vec![policy.clone(), fmt_f(*t), fmt_f(f.eval(*t)), fmt_f(*lo), fmt_f(*hi)]);
            }
            let mut s = Series::steps(policy.clone(), step_points(&f, tau));
            s.band = grid.iter().zip(&band).map(|(&t, &(lo, hi))| (t, lo, hi)).collect();
            chart.series.push(s);
            cdfs.insert(policy, f);
        }
        let base = slug(object);
        emit(format!("cdf_{base}.csv"), csv_text(&["policy", "t", "F", "ci_low", "ci_high"], rows)?)?;
        emit(format!("cdf_{base}.svg"), chart.render())?;

        if !has_ref {
            continue;
        }
        let Some(reference) = cdfs.get(cohort.reference_policy.as_str()) else { continue };
        for (policy, f) in cdfs.iter().filter(|(p, _)| **p != cohort.reference_policy) {
            let tag = format!("{}_{base}", slug(policy));
            let pp = pp_curve(reference, f, tau);
            let rows = pp.points.iter().map(|p| vec![fmt_f(p.t), fmt_f(p.u), fmt_f(p.v)]).collect();
            emit(format!("pp_{tag}.csv"), csv_text(&["t", "u", "v"], rows)?)?;
            let mut chart = Chart::new(
                format!("P-P {policy} vs {} on {object} (AUC {:.3}, KS {:.3})", cohort.reference_policy, pp.auc, pp.ks_distance),
                format!("F_{}(t)", cohort.reference_policy),
                format!("F_{policy}(t)"),
            );
            chart.x_range = Some((0.0, 1.0));
            chart.y_range = Some((0.0, 1.0));
            chart.diagonal = true;
            chart.series.push(Series::line(policy.to_string(), pp.points.iter().map(|p| (p.u, p.v)).collect()));
            emit(format!("pp_{tag}.svg"), chart.render())?;

            let qq = qq_curve(reference, f, &default_q_grid());
            let rows = qq.points.iter().map(|p| vec![fmt_f(p.q), fmt_f(p.t_ref), fmt_f(p.t_model)]).collect();
            emit(format!("qq_{tag}.csv"), csv_text(&["q", "t_ref", "t_model"], rows)?)?;
            let mut chart = Chart::new(
                format!("Q-Q {policy} vs {} on {object} (last q {:.2})", cohort.reference_policy, qq.terminal_quantile),
                format!("T_{}(q) (s)", cohort.reference_policy),
                format!("T_{policy}(q) (s)"),
            );
            chart.diagonal = true;
            chart.series.push(Series::line(policy.to_string(), qq.points.iter().map(|p| (p.t_ref, p.t_model)).collect()));
            emit(format!("qq_{tag}.svg"), chart.render())?;
        }
    }

    let tau_max = scalar.tau_episode.min(tau);
    if tau_max > 30.0 {
        let n_steps = ((tau_max - 30.0) / 5.0).round() as usize + 1;
        let mut chart = Chart::new("UPH vs MTBF/A as the episode timeout varies", "MTBF/A (s)", "UPH");
        for policy in &policies {
            let eps: Vec<&EpisodeRecord> = cohort.episodes_of(policy).collect();
            let f = km_from_episodes(&eps, tau_max);
            let traj = uph_mtbf_trajectory(&f, 30.0, tau_max, n_steps.max(2))?;
            let rows = traj.iter().map(|p| vec![fmt_f(p.tau_episode), fmt_f(p.uph), fmt_f(p.mtbfa)]).collect();
            emit(format!("trajectory_{}.csv", slug(policy)), csv_text(&["tau_episode", "uph", "mtbfa"], rows)?)?;
            chart.series.push(Series::line(policy.clone(), traj.iter().map(|p| (p.mtbfa, p.uph)).collect()));
        }
        emit("trajectory.svg".into(), chart.render())?;
    }

    if let Some(path) = detection_csv {
        for (pair, chart) in detection_charts(&read_detection_csv(path)?) {
            emit(format!("detection_{}.svg", slug(&pair)), chart.render())?;
        }
    }
    Ok(bundle)
}

/// Generate a synthetic cohort and write it as episode JSONL.
pub fn cmd_simulate(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<Vec<EpisodeLog>> {
    let episodes = generate_episodes(spec, &RngPolicy::new(seed))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    write_episode_logs(&mut w, &episodes)?;
    w.flush()?;
    Ok(episodes)
}

/// Label used in detection tables for a pair.
pub fn label(a: &str, b: &str) -> String {
    pair_label(a, b)
}
