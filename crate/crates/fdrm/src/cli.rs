//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 when a checked property fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdrm_core::{MatchPolicy, Minutes, PreferenceMode, ReceiverSort, Thresholds};

use crate::emit::{bar_chart, csv_bytes, line_chart, num, Series};
use crate::experiments::{
    allocation_vs_volunteers, end_vs_start_sorting, eligible_vs_raw_preferences, manipulation, PairedPoint,
};
use crate::oracle::{brute_force_pareto_oracle, gamma_violations, random_instance, strategyproof_probe, SmallInstance};
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig};
use crate::sim::{run_simulation, AcceptanceModel, SimOptions, SimReport};

#[derive(Parser, Debug)]
#[command(name = "fdrm", version, about = "Surplus food matching: scenarios, runs, experiments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a random scenario file.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        requests: usize,
        /// Base configuration (JSON); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Simulate a scenario file and report metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        acceptance: AcceptanceArgs,
        #[arg(long, default_value_t = 5)]
        tick: Minutes,
        /// Directory for report.json, summary.csv and deliveries.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Allocation experiments.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCmd,
    },
    /// Brute-force checks on small instances.
    Oracle {
        #[command(subcommand)]
        which: OracleCmd,
    },
    /// Simulate a scenario and check every delivery's off-route overhead.
    CheckGamma {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct BaseArgs {
    /// Scenario file whose configuration seeds the experiment.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub requests: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCmd {
    /// Allocation against volunteer availability.
    Fig8a {
        #[command(flatten)]
        base: BaseArgs,
        /// Volunteer counts as multiples of the donor count.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        multiples: Vec<f64>,
    },
    /// End-time against start-time receiver sorting.
    Fig8b {
        #[command(flatten)]
        base: BaseArgs,
        /// Number of consecutive seeds starting at the base seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Eligibility-updated against submitted preferences.
    Fig8c {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Misreported preferences against the truthful run.
    Fig8d {
        #[command(flatten)]
        base: BaseArgs,
        /// Percentage of donors and receivers that misreport.
        #[arg(long, default_value_t = 20.0)]
        fraction: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum OracleCmd {
    /// Check the mechanism's donor assignment for Pareto domination.
    Pareto {
        #[arg(long, required_unless_present = "random")]
        instance: Option<PathBuf>,
        /// Check this many random instances instead.
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Try every unilateral misreport.
    Strategyproof {
        #[arg(long, required_unless_present = "random")]
        instance: Option<PathBuf>,
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SortArg {
    Start,
    End,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum PrefArg {
    Raw,
    Eligible,
}

#[derive(Args, Debug, Clone)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value = "end")]
    pub receiver_sort: SortArg,
    #[arg(long, value_enum, default_value = "eligible")]
    pub preferences: PrefArg,
}

impl PolicyArgs {
    fn policy(&self) -> MatchPolicy {
        MatchPolicy {
            receiver_sort: match self.receiver_sort {
                SortArg::Start => ReceiverSort::Start,
                SortArg::End => ReceiverSort::End,
            },
            preferences: match self.preferences {
                PrefArg::Raw => PreferenceMode::Raw,
                PrefArg::Eligible => PreferenceMode::Eligible,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct AcceptanceArgs {
    #[arg(long, default_value_t = 0.0)]
    pub reject_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ignore_prob: f64,
    /// Longest response delay in minutes.
    #[arg(long, default_value_t = 0)]
    pub max_delay: Minutes,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Overrides for individual thresholds; unset flags keep the file's or
/// the default value.
#[derive(Args, Debug, Clone, Default)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub t_o: Option<Minutes>,
    #[arg(long)]
    pub t_l: Option<f64>,
    #[arg(long)]
    pub t_m: Option<u64>,
    #[arg(long)]
    pub t_a: Option<f64>,
    #[arg(long)]
    pub t_p_nm: Option<f64>,
    #[arg(long)]
    pub t_p_m: Option<f64>,
    #[arg(long)]
    pub t_np: Option<f64>,
    #[arg(long)]
    pub t_d: Option<Minutes>,
    #[arg(long)]
    pub t_r: Option<Minutes>,
    #[arg(long)]
    pub t_w: Option<Minutes>,
}

impl ThresholdArgs {
    pub fn apply(&self, mut th: Thresholds) -> Result<Thresholds, CliError> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { th.$f = v; })* };
        }
        set!(t_o, t_l, t_m, t_a, t_p_nm, t_p_m, t_np, t_d, t_r, t_w);
        th.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(th)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 2,
            _ => 1,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    csv_bytes(header, rows).map_err(invalid)
}

/// Parses `argv` (program name first), runs it and returns the exit code.
/// `FDRM_SEED` from the environment replaces every `--seed`.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with_seed(argv, std::env::var("FDRM_SEED").ok(), out, err)
}

pub fn run_command_with_seed<I, T>(argv: I, seed_env: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render().ansi());
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(s) = seed_env {
        match s.trim().parse::<u64>() {
            Ok(seed) => override_seed(&mut cli.command, seed),
            Err(_) => {
                let _ = writeln!(err, "error: FDRM_SEED is not an unsigned integer: {s:?}");
                return 1;
            }
        }
    }
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn override_seed(cmd: &mut Command, seed: u64) {
    match cmd {
        Command::Generate { seed: s, .. } => *s = seed,
        Command::Run { acceptance, .. } => acceptance.seed = seed,
        Command::Experiment { which } => match which {
            ExperimentCmd::Fig8a { base, .. }
            | ExperimentCmd::Fig8b { base, .. }
            | ExperimentCmd::Fig8c { base, .. }
            | ExperimentCmd::Fig8d { base, .. } => base.seed = seed,
        },
        Command::Oracle { which } => match which {
            OracleCmd::Pareto { seed: s, .. } | OracleCmd::Strategyproof { seed: s, .. } => *s = seed,
        },
        Command::CheckGamma { .. } => {}
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Generate { seed, requests, config, out: path, thresholds } => {
            let mut c = match config {
                Some(p) => serde_json::from_str::<ScenarioConfig>(&read(&p)?).map_err(invalid)?,
                None => ScenarioConfig::default(),
            };
            c.seed = seed;
            c.n_requests = requests;
            c.thresholds = thresholds.apply(c.thresholds)?;
            let s = generate_scenario(&c).map_err(invalid)?;
            write(&path, s.to_json())?;
            let _ = writeln!(out, "wrote {} requests to {}", s.requests.len(), path.display());
            Ok(())
        }
        Command::Run { scenario, policy, acceptance, tick, out: dir, thresholds } => {
            let mut s = load_scenario(&scenario)?;
            s.config.thresholds = thresholds.apply(s.config.thresholds)?;
            let model = AcceptanceModel {
                reject_prob: acceptance.reject_prob,
                ignore_prob: acceptance.ignore_prob,
                max_delay: acceptance.max_delay,
                seed: acceptance.seed,
            };
            let opts = SimOptions { tick, ..SimOptions::default() };
            let r = run_simulation(&s, policy.policy(), model, opts).map_err(invalid)?;
            let summary = serde_json::to_string_pretty(&r).map_err(invalid)?;
            if let Some(dir) = dir {
                out_dir(&dir)?;
                write(&dir.join("report.json"), &summary)?;
                write(&dir.join("summary.csv"), table(&["metric", "value"], &summary_rows(&r))?)?;
                write(&dir.join("deliveries.csv"), deliveries_csv(&r)?)?;
            } else {
                let _ = writeln!(out, "{summary}");
            }
            gamma_ok(&r, &s.config.thresholds, out)
        }
        Command::CheckGamma { scenario, thresholds } => {
            let mut s = load_scenario(&scenario)?;
            s.config.thresholds = thresholds.apply(s.config.thresholds)?;
            let r = run_simulation(&s, MatchPolicy::default(), AcceptanceModel::default(), SimOptions::default())
                .map_err(invalid)?;
            gamma_ok(&r, &s.config.thresholds, out)
        }
        Command::Experiment { which } => experiment(which, out),
        Command::Oracle { which } => oracle(which, out),
    }
}

fn gamma_ok(r: &SimReport, th: &Thresholds, out: &mut dyn Write) -> Result<(), CliError> {
    let bad = gamma_violations(&r.deliveries, th);
    let max = r.deliveries.iter().map(|d| d.overhead_pct).fold(0.0, f64::max);
    if bad.is_empty() {
        let _ = writeln!(out, "gamma-ok deliveries={} max_overhead_pct={}", r.deliveries.len(), num(max));
        Ok(())
    } else {
        Err(CliError::Property(format!(
            "{} of {} deliveries exceed {}% off-route overhead (max {})",
            bad.len(),
            r.deliveries.len(),
            4.0 * th.t_l,
            num(max)
        )))
    }
}

fn summary_rows(r: &SimReport) -> Vec<Vec<String>> {
    let a = &r.allocation;
    [
        ("donors", r.counts.donors as f64),
        ("receivers", r.counts.receivers as f64),
        ("volunteers", r.counts.volunteers as f64),
        ("donor_meals", r.donor_meals as f64),
        ("allocation_pct", a.overall),
        ("donor_allocation_pct", a.donors),
        ("receiver_allocation_pct", a.receivers),
        ("volunteer_allocation_pct", a.volunteers),
        ("perishable_allocation_pct", a.perishable),
        ("non_perishable_allocation_pct", a.non_perishable),
        ("donated_g", r.donated_g as f64),
        ("donor_side_g", r.donor_side_g as f64),
        ("receiver_side_g", r.receiver_side_g as f64),
        ("deliveries", r.deliveries.len() as f64),
        ("iterations", r.iterations as f64),
    ]
    .into_iter()
    .map(|(k, v)| vec![k.to_string(), num(v)])
    .collect()
}

fn deliveries_csv(r: &SimReport) -> Result<Vec<u8>, CliError> {
    let rows: Vec<Vec<String>> = r
        .deliveries
        .iter()
        .map(|d| {
            vec![
                num(d.pickup.x),
                num(d.pickup.y),
                num(d.dropoff.x),
                num(d.dropoff.y),
                num(d.route.length()),
                num(d.overhead_km),
                num(d.overhead_pct),
            ]
        })
        .collect();
    table(&["pickup_x", "pickup_y", "dropoff_x", "dropoff_y", "route_km", "overhead_km", "overhead_pct"], &rows)
}

fn base_config(b: &BaseArgs) -> Result<ScenarioConfig, CliError> {
    let mut c = match &b.scenario {
        Some(p) => load_scenario(p)?.config,
        None => ScenarioConfig { seed: b.seed, n_requests: b.requests, ..ScenarioConfig::default() },
    };
    c.thresholds = b.thresholds.apply(c.thresholds)?;
    c.validate().map_err(invalid)?;
    Ok(c)
}

fn emit(dir: &Path, name: &str, csv: Vec<u8>, svg: String) -> Result<(), CliError> {
    out_dir(dir)?;
    write(&dir.join(format!("{name}.csv")), csv)?;
    write(&dir.join(format!("{name}.svg")), svg)
}

fn paired_out(
    name: &str,
    labels: (&str, &str),
    title: &str,
    points: &[PairedPoint],
    dir: &Path,
    tolerance: f64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.seed.to_string(), num(p.first), num(p.second), num(p.first - p.second)])
        .collect();
    let csv = table(&["seed", labels.0, labels.1, "difference"], &rows)?;
    let series = vec![
        Series { name: labels.0.into(), points: points.iter().map(|p| (p.seed as f64, p.first)).collect() },
        Series { name: labels.1.into(), points: points.iter().map(|p| (p.seed as f64, p.second)).collect() },
    ];
    let svg = line_chart(title, "seed", "allocation (%)", &series);
    emit(dir, name, csv, svg)?;
    let wins = points.iter().filter(|p| p.first_at_least_second(tolerance)).count();
    let _ = writeln!(out, "{name}: {} at least {} on {wins} of {} seeds", labels.0, labels.1, points.len());
    Ok(())
}

fn experiment(which: ExperimentCmd, out: &mut dyn Write) -> Result<(), CliError> {
    match which {
        ExperimentCmd::Fig8a { base, multiples } => {
            let c = base_config(&base)?;
            let pts = allocation_vs_volunteers(&c, &multiples, MatchPolicy::default()).map_err(invalid)?;
            let rows: Vec<Vec<String>> = pts
                .iter()
                .map(|p| {
                    vec![
                        num(p.multiple),
                        p.volunteers.to_string(),
                        num(p.allocation),
                        num(p.donors),
                        num(p.receivers),
                        num(p.perishable),
                        num(p.non_perishable),
                    ]
                })
                .collect();
            let csv = table(
                &["multiple", "volunteers", "allocation_pct", "donor_pct", "receiver_pct", "perishable_pct", "non_perishable_pct"],
                &rows,
            )?;
            let series = vec![Series { name: "allocation".into(), points: pts.iter().map(|p| (p.multiple, p.allocation)).collect() }];
            let svg = line_chart("Allocation vs volunteer availability", "volunteers / donors", "allocation (%)", &series);
            emit(&base.out, "fig8a", csv, svg)?;
            let _ = writeln!(out, "fig8a: {} points", pts.len());
            Ok(())
        }
        ExperimentCmd::Fig8b { base, seeds } => {
            let c = base_config(&base)?;
            let s: Vec<u64> = (0..seeds).map(|k| c.seed + k).collect();
            let pts = end_vs_start_sorting(&c, &s).map_err(invalid)?;
            paired_out("fig8b", ("end_sort_pct", "start_sort_pct"), "End vs start receiver sorting", &pts, &base.out, 0.5, out)
        }
        ExperimentCmd::Fig8c { base, seeds } => {
            let c = base_config(&base)?;
            let s: Vec<u64> = (0..seeds).map(|k| c.seed + k).collect();
            let pts = eligible_vs_raw_preferences(&c, &s).map_err(invalid)?;
            paired_out("fig8c", ("eligible_pct", "raw_pct"), "Eligible vs submitted preferences", &pts, &base.out, 0.0, out)
        }
        ExperimentCmd::Fig8d { base, fraction } => {
            let c = base_config(&base)?;
            let rep = manipulation(&c, fraction, base.seed).map_err(invalid)?;
            let rows: Vec<Vec<String>> = rep
                .results
                .iter()
                .map(|m| {
                    vec![
                        m.agent.to_string(),
                        format!("{:?}", m.side).to_lowercase(),
                        m.truthful_rank.to_string(),
                        m.manipulated_rank.to_string(),
                        m.delta.to_string(),
                        m.exception.to_string(),
                    ]
                })
                .collect();
            let csv = table(&["agent", "side", "truthful_rank", "manipulated_rank", "delta", "exception"], &rows)?;
            let mut hist = std::collections::BTreeMap::<i64, usize>::new();
            for m in &rep.results {
                *hist.entry(m.delta).or_default() += 1;
            }
            let bars: Vec<(String, f64)> = hist.into_iter().map(|(d, n)| (d.to_string(), n as f64)).collect();
            let svg = bar_chart("Rank change under misreporting", "rank gained by misreporting", "manipulators", &bars);
            emit(&base.out, "fig8d", csv, svg)?;
            let _ = writeln!(
                out,
                "fig8d: manipulators={} improved={} worsened={} exceptions={} violations={} exception_rate_pct={} mean_delta={}",
                rep.manipulators,
                rep.improved,
                rep.worsened,
                rep.exceptions,
                rep.violations,
                num(rep.exception_rate),
                num(rep.mean_delta)
            );
            Ok(())
        }
    }
}

fn instances(path: Option<PathBuf>, random: Option<u64>, seed: u64, max: usize) -> Result<Vec<SmallInstance>, CliError> {
    match (path, random) {
        (_, Some(n)) => Ok((0..n).map(|k| random_instance(seed + k, max, max, 3)).collect()),
        (Some(p), None) => Ok(vec![serde_json::from_str(&read(&p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?]),
        (None, None) => Err(invalid("either --instance or --random is required")),
    }
}

fn oracle(which: OracleCmd, out: &mut dyn Write) -> Result<(), CliError> {
    match which {
        OracleCmd::Pareto { instance, random, seed } => {
            let all = instances(instance, random, seed, 5)?;
            let mut failed = 0;
            for (k, inst) in all.iter().enumerate() {
                let rep = brute_force_pareto_oracle(inst).map_err(invalid)?;
                if rep.certificate.is_ok() {
                    let _ = writeln!(out, "pareto-ok");
                } else {
                    failed += 1;
                    let _ = writeln!(out, "dominated (instance {k}): {}", serde_json::to_string(&rep.certificate).map_err(invalid)?);
                }
            }
            if failed > 0 {
                return Err(CliError::Property(format!("{failed} of {} instances dominated", all.len())));
            }
            Ok(())
        }
        OracleCmd::Strategyproof { instance, random, seed } => {
            let all = instances(instance, random, seed, 4)?;
            let (mut runs, mut exceptions, mut violations) = (0, 0, 0);
            for inst in &all {
                let rep = strategyproof_probe(inst).map_err(invalid)?;
                runs += rep.runs;
                exceptions += rep.exceptions;
                violations += rep.violations.len();
                for v in &rep.violations {
                    let _ = writeln!(out, "gain: {}", serde_json::to_string(v).map_err(invalid)?);
                }
            }
            let _ = writeln!(out, "misreports={runs} exceptions={exceptions} violations={violations}");
            if violations > 0 {
                return Err(CliError::Property(format!("{violations} misreports improved the manipulator's outcome")));
            }
            Ok(())
        }
    }
}
