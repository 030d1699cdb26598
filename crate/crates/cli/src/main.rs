use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use vrsched::baselines::PolicyKind;
use vrsched::metrics::{self, mean_std, Summary};
use vrsched::sim::{self, parse_override, Regime, RunOutput, SimConfig};
use vrsched::traffic::{generate_trace, TraceParams};
use vrsched::{ConfigError, Micros};

/// Deadline-aware VR flow scheduling simulator.
#[derive(Parser)]
#[command(name = "vrsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics.csv and summary.csv.
    Run(RunArgs),
    /// Run the bandwidth x policy x seed grid and aggregate over seeds.
    Sweep(SweepArgs),
    /// Write one flow's generated trace.
    GenTrace(GenTraceArgs),
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    config: Option<PathBuf>,
    /// `key=value` overrides; dotted keys reach into sections.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write lt_decisions.csv and st_decisions.csv.
    #[arg(long)]
    log_decisions: bool,
    /// Also write events.csv.
    #[arg(long)]
    log_events: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// proposed, rr and edf.
    Main,
    /// proposed, no-order and the single-timescale variants.
    Ablation,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Bottleneck rates in Mbps.
    #[arg(long, value_delimiter = ',', default_value = "25,30,35")]
    bandwidths: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    policies: Vec<PolicyKind>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Seed list such as `1,2,3` or `1-5`.
    #[arg(long, default_value = "1-5")]
    seeds: String,
    #[arg(long, value_delimiter = ',')]
    regimes: Vec<Regime>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    /// Parallel runs; defaults to VRSCHED_WORKERS, then the CPU count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    flow: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<SimConfig, ConfigError> {
    let overrides = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    match &common.config {
        Some(path) => SimConfig::load(path, &overrides),
        None => SimConfig::from_toml_str("", &overrides),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    metrics::write_metrics_csv(create(&dir.join("metrics.csv"))?, &out.metrics)?;
    metrics::write_summary_csv(create(&dir.join("summary.csv"))?, std::slice::from_ref(&out.summary))?;
    if out.config.log_decisions {
        sim::write_lt_log(create(&dir.join("lt_decisions.csv"))?, &out.lt_log)?;
        sim::write_st_log(create(&dir.join("st_decisions.csv"))?, &out.st_log)?;
    }
    if out.config.log_events {
        sim::write_event_log(create(&dir.join("events.csv"))?, &out.event_log)?;
    }
    Ok(())
}

fn report_diagnostics(out: &RunOutput) {
    let d = &out.diagnostics;
    if d.budget_violations + d.conservation_violations + d.time_regressions > 0 {
        eprintln!(
            "warning: {} budget, {} conservation and {} ordering violations",
            d.budget_violations, d.conservation_violations, d.time_regressions
        );
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load(&args.common)?;
    cfg.log_decisions |= args.log_decisions;
    cfg.log_events |= args.log_events;
    let policy = args.policy.unwrap_or(cfg.policy);
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = sim::run(&cfg, policy, seed)?;
    report_diagnostics(&out);
    write_run(&out, &args.out)?;
    let s = &out.summary;
    println!(
        "{} seed {} at {} Mbps: total loss {:.4}, loss std {:.4}, drop rate {:.4}",
        s.policy, s.seed, s.bottleneck_mbps, s.total_quality_loss, s.loss_std, s.avg_drop_rate
    );
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range `{part}`");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn workers(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var("VRSCHED_WORKERS") {
        Ok(v) => Ok(v
            .parse::<usize>()
            .with_context(|| format!("VRSCHED_WORKERS=`{v}` is not a count"))?
            .max(1)),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

const AGGREGATE_HEADER: &str = "bottleneck_mbps,regime,policy,runs,total_quality_loss_mean,total_quality_loss_std,loss_std_mean,loss_std_std,avg_drop_rate_mean,avg_drop_rate_std,c2_fraction_mean,c2_fraction_std";

fn aggregate(rows: &[Summary]) -> Vec<String> {
    let mut cells: BTreeMap<(String, String, String), Vec<&Summary>> = BTreeMap::new();
    let mut order = Vec::new();
    for s in rows {
        let key = (s.bottleneck_mbps.to_string(), s.regime.clone(), s.policy.clone());
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(s);
    }
    order
        .into_iter()
        .map(|key| {
            let runs = &cells[&key];
            let stat = |f: fn(&Summary) -> f64| {
                let v: Vec<f64> = runs.iter().map(|s| f(s)).collect();
                let (m, sd) = mean_std(&v);
                format!("{m},{sd}")
            };
            format!(
                "{},{},{},{},{},{},{},{}",
                key.0,
                key.1,
                key.2,
                runs.len(),
                stat(|s| s.total_quality_loss),
                stat(|s| s.loss_std),
                stat(|s| s.avg_drop_rate),
                stat(|s| s.c2_fraction)
            )
        })
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load(&args.common)?;
    let seeds = parse_seeds(&args.seeds)?;
    let mut policies = args.policies.clone();
    match args.preset {
        Some(Preset::Main) => policies.extend([PolicyKind::Proposed, PolicyKind::RoundRobin, PolicyKind::Edf]),
        Some(Preset::Ablation) => policies.extend([
            PolicyKind::Proposed,
            PolicyKind::NoOrdering,
            PolicyKind::SingleTimescale(Micros::from_ms(1000)),
            PolicyKind::SingleTimescale(Micros::from_ms(500)),
            PolicyKind::SingleTimescale(Micros::from_ms(50)),
        ]),
        None => {}
    }
    if policies.is_empty() {
        policies.push(cfg.policy);
    }
    let mut seen = std::collections::HashSet::new();
    policies.retain(|p| seen.insert(*p));
    let regimes = if args.regimes.is_empty() { vec![cfg.regime] } else { args.regimes.clone() };

    let mut cells = Vec::new();
    for &bw in &args.bandwidths {
        for &regime in &regimes {
            for &p in &policies {
                for &seed in &seeds {
                    let mut c = cfg.clone();
                    c.bottleneck_mbps = bw;
                    c.regime = regime;
                    cells.push((c, p, seed));
                }
            }
        }
    }
    let runs_dir = args.out.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("cannot create {}", runs_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers(args.workers)?)
        .build()?;
    let results: Vec<Result<Summary>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(c, p, seed)| {
                let out = sim::run(c, *p, *seed)?;
                report_diagnostics(&out);
                let name = format!("{}_{}mbps_{}_s{}.csv", p, c.bottleneck_mbps, c.regime, seed);
                metrics::write_metrics_csv(create(&runs_dir.join(name))?, &out.metrics)?;
                Ok(out.summary)
            })
            .collect()
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    metrics::write_summary_csv(create(&args.out.join("runs.csv"))?, &summaries)?;
    let mut w = create(&args.out.join("aggregate.csv"))?;
    writeln!(w, "{AGGREGATE_HEADER}")?;
    let rows = aggregate(&summaries);
    for row in &rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    println!("{AGGREGATE_HEADER}");
    for row in rows {
        println!("{row}");
    }
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<()> {
    let cfg = load(&args.common)?;
    let params = TraceParams {
        traffic: cfg.traffic.clone(),
        flow: args.flow,
        request_delay: Micros::from_ms_f64(cfg.request_delay_ms),
    };
    let trace = generate_trace(&params, args.seed.unwrap_or(cfg.seed))?;
    match args.out {
        Some(path) => {
            let mut w = create(&path)?;
            trace.write_to(&mut w)?;
            w.flush()?;
        }
        None => trace.write_to(std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenTrace(a) => cmd_gen_trace(a),
        Command::DefaultConfig => {
            print!("{}", SimConfig::default().to_toml_string());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
