use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survcdf::campaign::{self, BridgeOptions, CampaignConfig};
use survcdf::harness::{EfficiencySpec, Metric, NullCalSpec, NullSetup};
use survcdf::synthetic::SyntheticSpec;
use survcdf::Result;

#[derive(Parser, Debug)]
#[command(name = "survcdf", version, about = "Time-to-success CDF evaluation of operation streams")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON campaign config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Episode JSONL files (replaces the config's input list).
    #[arg(long = "input", short = 'i', global = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    tau_episode: Option<f64>,
    #[arg(long, global = true)]
    n_boot: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated object list.
    #[arg(long, global = true, value_delimiter = ',')]
    objects: Option<Vec<String>>,
    #[arg(long, global = true)]
    reference: Option<String>,
    /// Worker threads, 0 = all cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cell counts, failure-mode decomposition and spatial sensitivity.
    Ingest,
    /// Per-policy RMST and HRT with clustered-bootstrap CIs.
    Headline,
    /// Pairwise macro-KS and logrank table with verdicts.
    Compare {
        /// `a,b`; repeatable. Default: every pair of evaluated policies.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(String, String)>,
    },
    /// Sample-size budgets: Wilson, McNemar and the bridge model.
    #[command(subcommand)]
    Power(PowerCmd),
    /// Detection rate vs episodes per cell by subsampling.
    Efficiency {
        #[arg(long = "pair", value_parser = parse_pair, required = true)]
        pairs: Vec<(String, String)>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30")]
        n_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "F30,F60,RMST,KS")]
        metrics: Vec<String>,
        #[arg(long, default_value_t = 300)]
        outer_trials: usize,
        #[arg(long, default_value_t = 200)]
        inner_boot: usize,
        #[arg(long, default_value_t = 120.0)]
        tau_eff: f64,
    },
    /// Rejection rates of the macro-KS test under constructed nulls.
    Nullcal {
        /// `same-model:POLICY`, `reference` or `permutation:A,B`; repeatable.
        #[arg(long = "setup", value_parser = parse_setup, required = true)]
        setups: Vec<NullSetup>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 500)]
        inner_boot: usize,
    },
    /// CDF, P-P, Q-Q, trajectory and detection charts with data CSVs.
    Plots {
        /// Detection CSV from `efficiency` to chart as well.
        #[arg(long)]
        detection: Option<PathBuf>,
    },
    /// Generate a synthetic cohort as episode JSONL.
    Simulate {
        /// Synthetic spec JSON.
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum PowerCmd {
    /// Episodes needed for a Wilson interval of given half-width.
    Wilson {
        #[arg(long)]
        p_hat: f64,
        #[arg(long)]
        half_width: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Paired rollouts for McNemar's test.
    Mcnemar {
        #[arg(long)]
        p_d: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
    },
    /// Macro-KS power curve from the Brownian-bridge model.
    Bridge {
        #[arg(long, value_parser = parse_pair)]
        pair: (String, String),
        #[arg(long, default_value_t = 1.0)]
        design_effect: f64,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 2048)]
        grid_size: usize,
        #[arg(long, default_value_t = 10_000)]
        n_sim: usize,
        /// Operations per episode; measured from the data when omitted.
        #[arg(long)]
        m_o: Option<f64>,
    },
    /// Fit the design effect to an empirical detection CSV.
    Calibrate {
        #[arg(long)]
        detection: PathBuf,
        #[arg(long, default_value_t = 1024)]
        grid_size: usize,
        #[arg(long, default_value_t = 4000)]
        n_sim: usize,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected two distinct policies as `a,b`, got {s:?}")),
    }
}

fn parse_setup(s: &str) -> std::result::Result<NullSetup, String> {
    match s.split_once(':') {
        None if s == "reference" => Ok(NullSetup::ReferenceSplit),
        Some(("same-model", p)) if !p.is_empty() => Ok(NullSetup::SameModelSplit { policy: p.to_string() }),
        Some(("permutation", ab)) => parse_pair(ab).map(|(a, b)| NullSetup::StratumPermutation { a, b }),
        _ => Err(format!("unknown null setup {s:?}")),
    }
}

fn config(c: &Common) -> Result<CampaignConfig> {
    let mut cfg = match &c.config {
        Some(p) => CampaignConfig::from_json_file(p)?,
        None => CampaignConfig::default(),
    };
    if !c.inputs.is_empty() {
        cfg.inputs = c.inputs.clone();
    }
    if let Some(v) = c.tau {
        cfg.tau = v;
    }
    if let Some(v) = c.tau_episode {
        cfg.tau_episode = v;
    }
    if let Some(v) = c.n_boot {
        cfg.n_boot = v;
    }
    if let Some(v) = c.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.objects {
        cfg.objects = Some(v.clone());
    }
    if let Some(v) = &c.reference {
        cfg.reference_policy = v.clone();
    }
    if let Some(v) = c.threads {
        cfg.threads = v;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn announce_rng(cfg: &CampaignConfig) {
    eprintln!("rng: {}", cfg.rng());
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    let threads = cfg.threads;
    survcdf::par::with_threads(threads, move || dispatch(cli.command, cfg))
}

fn dispatch(command: Command, cfg: CampaignConfig) -> Result<()> {
    match command {
        Command::Ingest => {
            let report = campaign::cmd_ingest(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} cells written to {}", report.cells.len(), cfg.out.display());
        }
        Command::Headline => {
            announce_rng(&cfg);
            let rows = campaign::cmd_headline(&cfg)?;
            for r in rows {
                println!(
                    "{:<16} RMST {:8.2} [{:.2}, {:.2}]  HRT {:6.1}% [{:.1}, {:.1}]  interventions >= {:.3}  n={}",
                    r.policy,
                    r.rmst.point,
                    r.rmst.ci_low,
                    r.rmst.ci_high,
                    100.0 * r.hrt.point,
                    100.0 * r.hrt.ci_low,
                    100.0 * r.hrt.ci_high,
                    r.intervention_rate,
                    r.episodes
                );
            }
        }
        Command::Compare { pairs } => {
            announce_rng(&cfg);
            let pairs = (!pairs.is_empty()).then_some(pairs);
            for r in campaign::cmd_compare(&cfg, pairs)? {
                println!(
                    "{} vs {}: D={:.3} logrank p_bonf={:.3e} {}  verdict {}",
                    r.pair_a, r.pair_b, r.macro_d, r.logrank_p_bonferroni, r.significance, r.verdict
                );
            }
        }
        Command::Power(p) => power(p, &cfg)?,
        Command::Efficiency { pairs, n_grid, metrics, outer_trials, inner_boot, tau_eff } => {
            announce_rng(&cfg);
            let metrics = metrics.iter().map(|m| Metric::parse(m)).collect::<Result<Vec<_>>>()?;
            let specs: Vec<EfficiencySpec> = pairs
                .into_iter()
                .map(|pair| EfficiencySpec {
                    metrics: metrics.clone(),
                    outer_trials,
                    inner_boot,
                    tau_eff,
                    alpha: cfg.alpha,
                    ..EfficiencySpec::new(pair, n_grid.clone())
                })
                .collect();
            let rows = campaign::cmd_efficiency(&cfg, &specs)?;
            println!("{} detection rows written to {}", rows.len(), cfg.out.display());
        }
        Command::Nullcal { setups, trials, inner_boot } => {
            announce_rng(&cfg);
            let specs: Vec<NullCalSpec> =
                setups.into_iter().map(|s| NullCalSpec { trials, inner_boot, ..NullCalSpec::new(s) }).collect();
            for r in campaign::cmd_nullcal(&cfg, &specs)? {
                let rates: Vec<String> = r.rates.iter().map(|x| format!("Pr(p<{})={:.3}", x.alpha, x.rate)).collect();
                println!("{}: mean p {:.3}  {}", r.setup, r.mean_p, rates.join("  "));
            }
        }
        Command::Plots { detection } => {
            announce_rng(&cfg);
            let bundle = campaign::cmd_plots(&cfg, detection.as_deref())?;
            println!("{} files written to {}", bundle.files.len(), cfg.out.display());
        }
        Command::Simulate { spec } => {
            announce_rng(&cfg);
            let spec = SyntheticSpec::from_json(std::io::BufReader::new(std::fs::File::open(&spec)?))?;
            let path = cfg.out.join("episodes.jsonl");
            let eps = campaign::cmd_simulate(&spec, cfg.seed, &path)?;
            println!("{} episodes written to {}", eps.len(), path.display());
        }
    }
    Ok(())
}

fn power(cmd: PowerCmd, cfg: &CampaignConfig) -> Result<()> {
    match cmd {
        PowerCmd::Wilson { p_hat, half_width, confidence } => {
            let r = campaign::power_wilson(p_hat, half_width, confidence)?;
            print_json(&r)?;
        }
        PowerCmd::Mcnemar { p_d, delta, power } => {
            let r = campaign::power_mcnemar(p_d, delta, cfg.alpha, power)?;
            print_json(&r)?;
        }
        PowerCmd::Bridge { pair, design_effect, n_grid, grid_size, n_sim, m_o } => {
            announce_rng(cfg);
            let opts = BridgeOptions { pair, design_effect, n_grid, grid_size, n_sim, m_o };
            let (_, summary) = campaign::cmd_power_bridge(cfg, &opts)?;
            print_json(&summary)?;
        }
        PowerCmd::Calibrate { detection, grid_size, n_sim } => {
            announce_rng(cfg);
            let cal = campaign::cmd_power_calibrate(cfg, &detection, grid_size, n_sim)?;
            println!("D = {}  (max |empirical - predicted| = {:.3})", cal.design_effect, cal.max_abs_error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degeneracy() { 2 } else { 1 })
        }
    }
}
