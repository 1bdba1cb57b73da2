use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survcdf::campaign::{self, CampaignConfig, COMPARE_HEADER, HEADLINE_HEADER};
use survcdf::synthetic::{SyntheticCell, SyntheticSpec};

fn survcdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survcdf")).args(args).output().expect("spawn survcdf")
}

fn cell(policy: &str, object: &str, log_mu: f64) -> SyntheticCell {
    SyntheticCell {
        policy: policy.into(),
        object: object.into(),
        log_mu,
        log_sigma: 0.6,
        ghost_prob: 0.02,
        episode_sigma: 0.3,
        ops_per_episode: 4,
        n_episodes: None,
        tau_episode: None,
    }
}

fn spec() -> SyntheticSpec {
    let mut cells = Vec::new();
    for (object, off) in [("box", 0.0), ("bottle", 0.3)] {
        cells.push(cell("human", object, 2.5 + off));
        cells.push(cell("alpha", object, 3.0 + off));
        cells.push(cell("beta", object, 3.0 + off));
        cells.push(cell("slow", object, 4.2 + off));
    }
    SyntheticSpec { reference_policy: "human".into(), n_episodes: 30, tau_episode: 240.0, cells }
}

/// Simulate the test cohort into `dir` and return the JSONL path.
fn simulate(dir: &Path) -> PathBuf {
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, serde_json::to_string(&spec()).unwrap()).unwrap();
    let out = survcdf(&["simulate", "--spec", spec_path.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("episodes.jsonl")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_then_ingest_reports_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let out = tmp.path().join("r");
    let o = survcdf(&["ingest", "-i", eps.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = read_csv(&out.join("cells.csv"));
    assert_eq!(header, ["policy", "object", "episodes", "events", "ghosts", "censored"]);
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[2] == "30"));
    assert!(out.join("failure_modes.csv").exists() && out.join("spatial.csv").exists());
}

#[test]
fn headline_puts_reference_first_and_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let out = tmp.path().join("h");
    let o = survcdf(&["headline", "-i", eps.to_str().unwrap(), "--n-boot", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("master_seed=0"));
    let (header, rows) = read_csv(&out.join("headline.csv"));
    assert_eq!(header, HEADLINE_HEADER);
    assert_eq!(rows[0][0], "human");
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), 1.0);

    let cfg = CampaignConfig { inputs: vec![eps], n_boot: 200, out: tmp.path().join("lib"), ..Default::default() };
    let direct = campaign::cmd_headline(&cfg).unwrap();
    for (row, d) in rows.iter().zip(&direct) {
        assert_eq!(row[0], d.policy);
        assert_eq!(row[1].parse::<f64>().unwrap(), d.rmst.point);
        assert_eq!(row[2].parse::<f64>().unwrap(), d.rmst.ci_low);
        assert_eq!(row[4].parse::<f64>().unwrap(), d.hrt.point);
    }
}

#[test]
fn compare_all_pairs_and_saturated_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let out = tmp.path().join("c");
    let o = survcdf(&["compare", "-i", eps.to_str().unwrap(), "--n-boot", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("compare.csv"));
    assert_eq!(header, COMPARE_HEADER);
    // Three evaluated policies: 3·2/2 pairs.
    assert_eq!(rows.len(), 3);
    let slow = rows.iter().find(|r| r[0] == "alpha" && r[1] == "slow").unwrap();
    assert_eq!(slow[8], "***");
    assert_eq!(slow[11], "a_better");
    for r in &rows {
        let raw: f64 = r[6].parse().unwrap();
        let adj: f64 = r[7].parse().unwrap();
        assert!((adj - (3.0 * raw).min(1.0)).abs() < 1e-15);
    }
}

#[test]
fn identical_policies_are_not_significant_and_plot_on_the_diagonal() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    // Duplicate the reference arm under a new policy name.
    let mut text = fs::read_to_string(&eps).unwrap();
    let twins: Vec<String> = text
        .lines()
        .filter(|l| l.contains("\"policy\":\"human\""))
        .map(|l| l.replace("\"policy\":\"human\"", "\"policy\":\"twin\"").replace("\"episode_id\":\"human-", "\"episode_id\":\"twin-"))
        .collect();
    text.push_str(&twins.join("\n"));
    text.push('\n');
    let twin_path = tmp.path().join("twin.jsonl");
    fs::write(&twin_path, text).unwrap();
    let out = tmp.path().join("t");
    let (i, o) = (twin_path.to_str().unwrap(), out.to_str().unwrap());

    let r = survcdf(&["compare", "-i", i, "--pair", "human,twin", "--n-boot", "200", "--out", o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (_, rows) = read_csv(&out.join("compare.csv"));
    assert_eq!(rows[0][8], "n.s.");
    assert_eq!(rows[0][11], "indistinguishable");

    let r = survcdf(&["plots", "-i", i, "--objects", "box", "--n-boot", "100", "--out", o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (header, rows) = read_csv(&out.join("pp_twin_box.csv"));
    assert_eq!(header, ["t", "u", "v"]);
    assert!(rows.iter().all(|r| r[1] == r[2]));
    assert!(out.join("pp_twin_box.svg").exists());
    assert!(!out.join("cdf_bottle.csv").exists());
}

#[test]
fn plot_csvs_reload_to_library_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let out = tmp.path().join("p");
    let r = survcdf(&["plots", "-i", eps.to_str().unwrap(), "--n-boot", "100", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());

    let cfg = CampaignConfig { inputs: vec![eps], ..Default::default() };
    let loaded = campaign::load_cohort(&cfg).unwrap();
    let cell = |p: &str| {
        let c: Vec<_> = loaded.cohort.cell(p, "box").unwrap().iter().collect();
        survcdf::km_from_episodes(&c, 240.0)
    };
    let pp = survcdf::projections::pp_curve(&cell("human"), &cell("alpha"), 240.0);
    let (_, rows) = read_csv(&out.join("pp_alpha_box.csv"));
    assert_eq!(rows.len(), pp.points.len());
    for (r, p) in rows.iter().zip(&pp.points) {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, [p.t, p.u, p.v]);
    }
    let (header, rows) = read_csv(&out.join("qq_alpha_box.csv"));
    assert_eq!(header, ["q", "t_ref", "t_model"]);
    assert!(!rows.is_empty());
    let (header, _) = read_csv(&out.join("trajectory_alpha.csv"));
    assert_eq!(header, ["tau_episode", "uph", "mtbfa"]);
    let (header, _) = read_csv(&out.join("cdf_box.csv"));
    assert_eq!(header, ["policy", "t", "F", "ci_low", "ci_high"]);
}

#[test]
fn power_formulas() {
    let o = survcdf(&["power", "mcnemar", "--p-d", "0.25", "--delta", "0.05"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rollouts"], 1566);
    let o = survcdf(&["power", "wilson", "--p-hat", "0.5", "--half-width", "0.05"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 381);
}

#[test]
fn bridge_writes_curve_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let out = tmp.path().join("b");
    let o = survcdf(&[
        "power", "bridge", "-i", eps.to_str().unwrap(), "--pair", "alpha,slow", "--n-sim", "1000", "--grid-size", "256",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("power.csv"));
    assert_eq!(header, ["n_cell", "power"]);
    assert_eq!(rows.len(), 6);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("power_summary.json")).unwrap()).unwrap();
    for key in ["n80", "alpha", "D", "m_o"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = simulate(tmp.path());
    let cfg_path = tmp.path().join("campaign.json");
    fs::write(&cfg_path, serde_json::json!({ "inputs": [eps], "n_boot": 150, "seed": 9, "tau": 120.0 }).to_string()).unwrap();
    let out = tmp.path().join("cfg");
    let o = survcdf(&["headline", "--config", cfg_path.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("master_seed=4"));
    let (_, rows) = read_csv(&out.join("headline.csv"));
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() <= 120.0));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();

    // Unreadable input and bad flags are validation errors.
    assert_eq!(survcdf(&["headline", "-i", "/nonexistent.jsonl", "--out", o]).status.code(), Some(1));
    assert_eq!(survcdf(&["headline", "--alpha", "2", "--out", o]).status.code(), Some(1));
    assert_eq!(survcdf(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(survcdf(&["power", "mcnemar", "--p-d", "0.1", "--delta", "0.2"]).status.code(), Some(1));

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(survcdf(&["plots", "-i", empty.to_str().unwrap(), "--out", o]).status.code(), Some(1));

    // Every episode times out before its first placement: no events, so
    // the logrank statistic is undefined.
    let mut lines = Vec::new();
    for policy in ["human", "alpha", "beta"] {
        for k in 0..5 {
            lines.push(
                serde_json::json!({
                    "episode_id": format!("{policy}-{k}"), "policy": policy, "object": "box", "duration_s": 240.0,
                    "placement_times_s": [], "items_total": 3, "items_lost_outside": 0,
                    "items_dropped_uncollected": 0, "outcome": "ran_out_of_time"
                })
                .to_string(),
            );
        }
    }
    let stuck = tmp.path().join("stuck.jsonl");
    fs::write(&stuck, lines.join("\n") + "\n").unwrap();
    let r = survcdf(&["compare", "-i", stuck.to_str().unwrap(), "--n-boot", "100", "--out", o]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}
