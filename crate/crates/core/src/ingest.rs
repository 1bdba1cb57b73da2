//! Episode logs, extraction of `(T, E)` observations, and cohort grouping.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Safety,
    RanOutOfTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// One rollout as recorded by the operator plus post-hoc placement times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode_id: String,
    pub policy: String,
    pub object: String,
    pub duration_s: f64,
    pub placement_times_s: Vec<f64>,
    pub items_total: u32,
    pub items_lost_outside: u32,
    pub items_dropped_uncollected: u32,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tote_side: Option<Side>,
}

const KNOWN_FIELDS: &[&str] = &[
    "episode_id",
    "policy",
    "object",
    "duration_s",
    "placement_times_s",
    "items_total",
    "items_lost_outside",
    "items_dropped_uncollected",
    "outcome",
    "camera_side",
    "tote_side",
];

impl EpisodeLog {
    pub fn placed(&self) -> u32 {
        self.placement_times_s.len() as u32
    }

    pub fn ghost_items(&self) -> u32 {
        self.items_lost_outside + self.items_dropped_uncollected
    }

    /// An operation is in flight when some items are neither placed, lost
    /// nor dropped.
    pub fn has_operation_in_flight(&self) -> bool {
        self.placed() + self.ghost_items() < self.items_total
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &'static str, message: String| Error::Validation {
            episode_id: self.episode_id.clone(),
            field,
            message,
        };
        if self.episode_id.is_empty() {
            return Err(fail("episode_id", "must be nonempty".into()));
        }
        if self.policy.is_empty() {
            return Err(fail("policy", "must be nonempty".into()));
        }
        if self.object.is_empty() {
            return Err(fail("object", "must be nonempty".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(fail("duration_s", format!("must be > 0, got {}", self.duration_s)));
        }
        let mut prev = 0.0;
        for &t in &self.placement_times_s {
            if !t.is_finite() || t <= 0.0 {
                return Err(fail("placement_times_s", format!("placement at {t} is not positive")));
            }
            if t > self.duration_s {
                return Err(fail(
                    "placement_times_s",
                    format!("placement exceeds duration ({t} > {})", self.duration_s),
                ));
            }
            if t <= prev {
                return Err(fail("placement_times_s", "must be strictly increasing".into()));
            }
            prev = t;
        }
        let accounted = self.placed() as u64
            + self.items_lost_outside as u64
            + self.items_dropped_uncollected as u64;
        if accounted > self.items_total as u64 {
            return Err(fail(
                "items_total",
                format!("{accounted} items placed, lost or dropped but only {} in total", self.items_total),
            ));
        }
        Ok(())
    }
}

/// Parse line-delimited JSON episode logs, returning warnings (unknown
/// fields) alongside the records.
pub fn parse_episode_logs_with_warnings<R: BufRead>(reader: R) -> Result<(Vec<EpisodeLog>, Vec<String>)> {
    let mut episodes = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let Some(map) = value.as_object() else {
            return Err(Error::Parse {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        for key in map.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) {
                warnings.push(format!("line {line_no}: ignoring unknown field {key:?}"));
            }
        }
        let ep: EpisodeLog = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        ep.validate()?;
        if !seen.insert(ep.episode_id.clone()) {
            return Err(Error::Validation {
                episode_id: ep.episode_id,
                field: "episode_id",
                message: format!("duplicate id on line {line_no}"),
            });
        }
        episodes.push(ep);
    }
    Ok((episodes, warnings))
}

/// Parse line-delimited JSON episode logs. Unknown fields are logged and
/// otherwise ignored.
pub fn parse_episode_logs<R: BufRead>(reader: R) -> Result<Vec<EpisodeLog>> {
    let (episodes, warnings) = parse_episode_logs_with_warnings(reader)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(episodes)
}

pub fn write_episode_logs<W: std::io::Write>(mut w: W, episodes: &[EpisodeLog]) -> Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One `(T, E)` pair. Ghosts carry `t = ∞` and `event = true`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalObservation {
    pub t: f64,
    pub event: bool,
    pub ghost: bool,
    pub episode_id: Arc<str>,
}

impl SurvivalObservation {
    pub fn event(t: f64, episode_id: Arc<str>) -> Self {
        Self { t, event: true, ghost: false, episode_id }
    }

    pub fn censored(t: f64, episode_id: Arc<str>) -> Self {
        Self { t, event: false, ghost: false, episode_id }
    }

    pub fn ghost(episode_id: Arc<str>) -> Self {
        Self { t: f64::INFINITY, event: true, ghost: true, episode_id }
    }
}

/// Turn one episode into survival observations.
///
/// Placements yield inter-placement times with `E = 1`; lost and
/// still-uncollected dropped items yield one ghost each. If items remain
/// unaccounted, the in-flight operation becomes a ghost after a safety stop
/// and otherwise a right-censored tail measured up to
/// `min(duration_s, tau_episode)`.
pub fn extract_observations(ep: &EpisodeLog, tau_episode: f64) -> Vec<SurvivalObservation> {
    let id: Arc<str> = Arc::from(ep.episode_id.as_str());
    let mut out = Vec::with_capacity(ep.items_total as usize + 1);
    let mut prev = 0.0;
    for &t in &ep.placement_times_s {
        out.push(SurvivalObservation::event(t - prev, id.clone()));
        prev = t;
    }
    for _ in 0..ep.ghost_items() {
        out.push(SurvivalObservation::ghost(id.clone()));
    }
    if ep.has_operation_in_flight() {
        if ep.outcome == Outcome::Safety {
            out.push(SurvivalObservation::ghost(id));
        } else {
            let tail = ep.duration_s.min(tau_episode) - prev;
            if tail > 0.0 {
                out.push(SurvivalObservation::censored(tail, id));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub policy: String,
    pub object: String,
}

impl CellKey {
    pub fn new(policy: impl Into<String>, object: impl Into<String>) -> Self {
        Self { policy: policy.into(), object: object.into() }
    }
}

/// An episode together with its extracted observations. This is the
/// resampling unit: observations of one episode always move together.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub log: EpisodeLog,
    pub observations: Vec<SurvivalObservation>,
}

/// Anything that yields the observations of a single episode.
pub trait HasObservations {
    fn observations(&self) -> &[SurvivalObservation];
}

impl HasObservations for EpisodeRecord {
    fn observations(&self) -> &[SurvivalObservation] {
        &self.observations
    }
}

impl HasObservations for [SurvivalObservation] {
    fn observations(&self) -> &[SurvivalObservation] {
        self
    }
}

impl HasObservations for Vec<SurvivalObservation> {
    fn observations(&self) -> &[SurvivalObservation] {
        self
    }
}

impl<T: HasObservations + ?Sized> HasObservations for &T {
    fn observations(&self) -> &[SurvivalObservation] {
        (**self).observations()
    }
}

/// Per-object episode lists for one policy, in `Cohort::objects` order.
pub type Arm<'a> = Vec<Vec<&'a EpisodeRecord>>;

#[derive(Debug, Clone)]
pub struct Cohort {
    cells: BTreeMap<CellKey, Vec<EpisodeRecord>>,
    pub reference_policy: String,
    /// Macro-average weights are equal over this list.
    pub objects: Vec<String>,
    pub tau_episode: f64,
}

pub fn build_cohort(episodes: Vec<EpisodeLog>, reference_policy: &str, tau_episode: f64) -> Result<Cohort> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes"));
    }
    if !(tau_episode > 0.0) {
        return Err(Error::invalid(format!("tau_episode must be > 0, got {tau_episode}")));
    }
    let mut cells: BTreeMap<CellKey, Vec<EpisodeRecord>> = BTreeMap::new();
    let mut objects = BTreeSet::new();
    for log in episodes {
        let observations = extract_observations(&log, tau_episode);
        objects.insert(log.object.clone());
        cells
            .entry(CellKey::new(&log.policy, &log.object))
            .or_default()
            .push(EpisodeRecord { log, observations });
    }
    Ok(Cohort {
        cells,
        reference_policy: reference_policy.to_string(),
        objects: objects.into_iter().collect(),
        tau_episode,
    })
}

impl Cohort {
    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &[EpisodeRecord])> {
        self.cells.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn cell(&self, policy: &str, object: &str) -> Result<&[EpisodeRecord]> {
        self.cells
            .get(&CellKey::new(policy, object))
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingCell {
                policy: policy.to_string(),
                object: object.to_string(),
            })
    }

    /// Sorted policy names, the reference included if present.
    pub fn policies(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cells.keys().map(|k| &k.policy).collect();
        set.into_iter().cloned().collect()
    }

    /// Policies other than the reference.
    pub fn evaluated_policies(&self) -> Vec<String> {
        self.policies()
            .into_iter()
            .filter(|p| *p != self.reference_policy)
            .collect()
    }

    pub fn has_policy(&self, policy: &str) -> bool {
        self.cells.keys().any(|k| k.policy == policy)
    }

    pub fn require_reference(&self) -> Result<()> {
        if self.has_policy(&self.reference_policy) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "reference policy {:?} not present in the cohort",
                self.reference_policy
            )))
        }
    }

    /// Episodes of `policy`, one list per entry of `objects`.
    pub fn arm<'a>(&'a self, policy: &str, objects: &[String]) -> Result<Arm<'a>> {
        objects
            .iter()
            .map(|o| self.cell(policy, o).map(|c| c.iter().collect()))
            .collect()
    }

    pub fn episodes_of<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a EpisodeRecord> + 'a {
        self.cells
            .iter()
            .filter(move |(k, _)| k.policy == policy)
            .flat_map(|(_, v)| v.iter())
    }

    /// Restrict the macro-average object list. Unknown objects are an error.
    pub fn with_objects(mut self, objects: &[String]) -> Result<Self> {
        for o in objects {
            if !self.objects.contains(o) {
                return Err(Error::invalid(format!("object {o:?} not present in the cohort")));
            }
        }
        self.objects = objects.to_vec();
        Ok(self)
    }

    pub fn n_episodes(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub policy: String,
    pub episodes: usize,
    pub operations: usize,
    pub dropout_rate_per_operation: f64,
    pub safety_stop_rate_per_episode: f64,
    pub timeout_rate_per_episode: f64,
}

/// Drop-outs, safety stops and timeouts per policy, kept separate.
pub fn failure_decomposition(c: &Cohort) -> Vec<FailureRow> {
    c.policies()
        .into_iter()
        .map(|policy| {
            let (mut episodes, mut ops, mut drops, mut safety, mut timeouts) = (0usize, 0usize, 0usize, 0usize, 0usize);
            for rec in c.episodes_of(&policy) {
                episodes += 1;
                ops += rec.observations.len();
                drops += rec.log.ghost_items() as usize;
                match rec.log.outcome {
                    Outcome::Safety => safety += 1,
                    Outcome::RanOutOfTime => timeouts += 1,
                    Outcome::Success => {}
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            FailureRow {
                dropout_rate_per_operation: ratio(drops, ops),
                safety_stop_rate_per_episode: ratio(safety, episodes),
                timeout_rate_per_episode: ratio(timeouts, episodes),
                policy,
                episodes,
                operations: ops,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialRow {
    pub policy: String,
    pub same_side_completion: Option<f64>,
    pub opposite_side_completion: Option<f64>,
    pub delta_pp: Option<f64>,
    pub same_side_episodes: usize,
    pub opposite_side_episodes: usize,
    /// Episodes lacking camera or tote side.
    pub excluded_episodes: usize,
}

/// Completion rate (placed ÷ total items) split by whether the camera and
/// the outbound tote share a side.
pub fn spatial_sensitivity(c: &Cohort) -> Vec<SpatialRow> {
    c.policies()
        .into_iter()
        .map(|policy| {
            let mut same = (0usize, 0u64, 0u64);
            let mut opposite = (0usize, 0u64, 0u64);
            let mut excluded = 0;
            for rec in c.episodes_of(&policy) {
                let (Some(cam), Some(tote)) = (rec.log.camera_side, rec.log.tote_side) else {
                    excluded += 1;
                    continue;
                };
                let group = if cam == tote { &mut same } else { &mut opposite };
                group.0 += 1;
                group.1 += rec.log.placed() as u64;
                group.2 += rec.log.items_total as u64;
            }
            let completion = |g: (usize, u64, u64)| (g.0 > 0 && g.2 > 0).then(|| g.1 as f64 / g.2 as f64);
            let s = completion(same);
            let o = completion(opposite);
            SpatialRow {
                policy,
                same_side_completion: s,
                opposite_side_completion: o,
                delta_pp: s.zip(o).map(|(s, o)| (s - o) * 100.0),
                same_side_episodes: same.0,
                opposite_side_episodes: opposite.0,
                excluded_episodes: excluded,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(id: &str, placements: &[f64], duration: f64, total: u32, lost: u32, outcome: Outcome) -> EpisodeLog {
        EpisodeLog {
            episode_id: id.into(),
            policy: "p".into(),
            object: "o".into(),
            duration_s: duration,
            placement_times_s: placements.to_vec(),
            items_total: total,
            items_lost_outside: lost,
            items_dropped_uncollected: 0,
            outcome,
            camera_side: None,
            tote_side: None,
        }
    }

    fn pairs(obs: &[SurvivalObservation]) -> Vec<(f64, bool, bool)> {
        obs.iter().map(|o| (o.t, o.event, o.ghost)).collect()
    }

    #[test]
    fn parses_valid_line() {
        let line = r#"{"episode_id":"e1","policy":"act","object":"towel","duration_s":60,"placement_times_s":[10,25],"items_total":3,"items_lost_outside":0,"items_dropped_uncollected":0,"outcome":"ran_out_of_time","camera_side":"left"}"#;
        let eps = parse_episode_logs(line.as_bytes()).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].placement_times_s.len(), 2);
        assert_eq!(eps[0].camera_side, Some(Side::Left));
        assert_eq!(eps[0].tote_side, None);
    }

    #[test]
    fn placement_beyond_duration_is_rejected() {
        let line = r#"{"episode_id":"e1","policy":"a","object":"o","duration_s":240,"placement_times_s":[300],"items_total":3,"items_lost_outside":0,"items_dropped_uncollected":0,"outcome":"success"}"#;
        let err = parse_episode_logs(line.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("placement exceeds duration"), "{err}");
        assert!(err.to_string().contains("e1"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let line = r#"{"episode_id":"e1","policy":"a","object":"o","duration_s":10,"placement_times_s":[],"items_total":1,"items_lost_outside":0,"items_dropped_uncollected":0,"outcome":"ran_out_of_time"}"#;
        let text = format!("{line}\n{line}\n");
        let err = parse_episode_logs(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "episode_id", .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "\n{\"episode_id\": \n";
        match parse_episode_logs(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_fields_warn() {
        let line = r#"{"episode_id":"e1","policy":"a","object":"o","duration_s":10,"placement_times_s":[],"items_total":1,"items_lost_outside":0,"items_dropped_uncollected":0,"outcome":"ran_out_of_time","operator":"x"}"#;
        let (eps, warnings) = parse_episode_logs_with_warnings(line.as_bytes()).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("operator"));
    }

    #[test]
    fn overcounted_items_are_rejected() {
        let mut ep = log("e", &[1.0, 2.0], 10.0, 2, 1, Outcome::Success);
        assert!(ep.validate().is_err());
        ep.items_total = 3;
        assert!(ep.validate().is_ok());
    }

    #[test]
    fn extraction_timeout_tail() {
        let ep = log("e", &[10.0, 25.0], 60.0, 3, 0, Outcome::RanOutOfTime);
        assert_eq!(
            pairs(&extract_observations(&ep, 240.0)),
            vec![(10.0, true, false), (15.0, true, false), (35.0, false, false)]
        );
    }

    #[test]
    fn extraction_zero_success_single_censor() {
        let ep = log("e", &[], 240.0, 4, 0, Outcome::RanOutOfTime);
        assert_eq!(pairs(&extract_observations(&ep, 240.0)), vec![(240.0, false, false)]);
    }

    #[test]
    fn extraction_safety_stop_ghosts() {
        let ep = log("e", &[12.0], 30.0, 4, 1, Outcome::Safety);
        let inf = f64::INFINITY;
        assert_eq!(
            pairs(&extract_observations(&ep, 240.0)),
            vec![(12.0, true, false), (inf, true, true), (inf, true, true)]
        );
    }

    #[test]
    fn extraction_completed_episode_has_no_tail() {
        let ep = log("e", &[3.0, 7.0], 9.0, 2, 0, Outcome::Success);
        assert_eq!(pairs(&extract_observations(&ep, 240.0)), vec![(3.0, true, false), (4.0, true, false)]);
    }

    #[test]
    fn tail_is_bounded_by_episode_horizon() {
        let ep = log("e", &[10.0], 300.0, 2, 0, Outcome::RanOutOfTime);
        assert_eq!(
            pairs(&extract_observations(&ep, 240.0)),
            vec![(10.0, true, false), (230.0, false, false)]
        );
    }

    fn grouped(policy: &str, object: &str, id: usize) -> EpisodeLog {
        let mut e = log(&format!("{policy}-{object}-{id}"), &[5.0], 10.0, 1, 0, Outcome::Success);
        e.policy = policy.into();
        e.object = object.into();
        e
    }

    #[test]
    fn cohort_grouping() {
        let mut eps = Vec::new();
        for p in ["human", "a", "b"] {
            for o in ["spoon", "towel"] {
                for i in 0..3 {
                    eps.push(grouped(p, o, i));
                }
            }
        }
        eps.push(grouped("a", "mystery", 0));
        let c = build_cohort(eps, "human", 240.0).unwrap();
        assert_eq!(c.cells().count(), 7);
        assert_eq!(c.objects, vec!["mystery", "spoon", "towel"]);
        assert_eq!(c.cell("a", "spoon").unwrap().len(), 3);
        assert_eq!(c.evaluated_policies(), vec!["a", "b"]);
        assert!(c.require_reference().is_ok());
        assert!(matches!(c.cell("b", "mystery"), Err(Error::MissingCell { .. })));
        assert!(build_cohort(vec![], "human", 240.0).is_err());
    }

    #[test]
    fn failure_rates() {
        let mut eps = Vec::new();
        for i in 0..100 {
            let outcome = if i < 4 { Outcome::Safety } else { Outcome::Success };
            let mut e = log(&format!("e{i}"), &[5.0], 10.0, 1, 0, outcome);
            if outcome == Outcome::Safety {
                e.placement_times_s.clear();
            }
            eps.push(e);
        }
        let c = build_cohort(eps, "human", 240.0).unwrap();
        let rows = failure_decomposition(&c);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].safety_stop_rate_per_episode - 0.04).abs() < 1e-12);
        assert_eq!(rows[0].timeout_rate_per_episode, 0.0);
        assert_eq!(rows[0].dropout_rate_per_operation, 0.0);
    }

    #[test]
    fn all_success_cohort_has_zero_failure_rates() {
        let eps = (0..10).map(|i| grouped("a", "o", i)).collect();
        let c = build_cohort(eps, "human", 240.0).unwrap();
        let r = &failure_decomposition(&c)[0];
        assert_eq!(
            (r.dropout_rate_per_operation, r.safety_stop_rate_per_episode, r.timeout_rate_per_episode),
            (0.0, 0.0, 0.0)
        );
    }

    fn sided(id: usize, cam: Side, tote: Side, placed: usize, total: u32) -> EpisodeLog {
        let times: Vec<f64> = (1..=placed).map(|k| k as f64).collect();
        let mut e = log(&format!("s{id}"), &times, 100.0, total, 0, Outcome::RanOutOfTime);
        e.camera_side = Some(cam);
        e.tote_side = Some(tote);
        e
    }

    #[test]
    fn spatial_delta_in_percentage_points() {
        // 578/1000 same-side vs 356/1000 opposite-side.
        let mut eps = vec![
            sided(0, Side::Left, Side::Left, 578, 1000),
            sided(1, Side::Left, Side::Right, 356, 1000),
        ];
        let mut no_sides = log("x", &[], 10.0, 1, 0, Outcome::RanOutOfTime);
        no_sides.camera_side = None;
        eps.push(no_sides);
        let c = build_cohort(eps, "human", 240.0).unwrap();
        let row = &spatial_sensitivity(&c)[0];
        assert!((row.delta_pp.unwrap() - 22.2).abs() < 1e-9);
        assert_eq!(row.excluded_episodes, 1);
    }

    #[test]
    fn spatial_missing_group_is_absent() {
        let eps = vec![sided(0, Side::Left, Side::Left, 2, 4), sided(1, Side::Right, Side::Right, 1, 4)];
        let c = build_cohort(eps, "human", 240.0).unwrap();
        let row = &spatial_sensitivity(&c)[0];
        assert_eq!(row.opposite_side_completion, None);
        assert_eq!(row.delta_pp, None);
        assert!((row.same_side_completion.unwrap() - 3.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn spatial_symmetric_groups_have_zero_delta() {
        let eps = vec![sided(0, Side::Left, Side::Left, 2, 4), sided(1, Side::Left, Side::Right, 2, 4)];
        let c = build_cohort(eps, "human", 240.0).unwrap();
        assert_eq!(spatial_sensitivity(&c)[0].delta_pp, Some(0.0));
    }
}
