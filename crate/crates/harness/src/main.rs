use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eqdiff_harness::config::{BatchSection, ConfigFile, IntegratorSection};
use eqdiff_harness::scenario::registry;
use eqdiff_harness::{run_suite, Group, HarnessError, Report, RunConfig};

/// Numerical verification of equivariant diffusions, their skew products
/// and derivative flows.
#[derive(Parser, Debug)]
#[command(name = "eqdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Symbol diagram, horizontal lifts, delta axioms, LeJan-Watanabe metricity and Ricci.
    VerifyGeometry(RunArgs),
    /// Horizontal/vertical decomposition of the bundle generator and the Weitzenböck term.
    Decompose(RunArgs),
    /// Pathwise skew products, derivative flows and the small-time action.
    Skew(RunArgs),
    /// Flows of point clouds, noise splitting and the composite identity.
    Diffeo(RunArgs),
    /// All groups; every registered scenario unless one is given.
    Report(RunArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML file with keys scenario, seed, [integrator], [batch], [tolerances].
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Finest step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Paths per refinement level.
    #[arg(long = "N")]
    paths: Option<usize>,
    /// Size of the diffeo grid.
    #[arg(long = "J")]
    cloud: Option<usize>,
    /// Concatenation split as a fraction of T.
    #[arg(long)]
    split: Option<f64>,
    /// Monte Carlo paths of the small-time check.
    #[arg(long)]
    mc_paths: Option<usize>,
    /// Paths of the noise correlation check.
    #[arg(long)]
    correlation_paths: Option<usize>,
    /// Directory for report.json, report.csv and traces.
    #[arg(long, default_value = "eqdiff-out")]
    out: PathBuf,
}

impl RunArgs {
    fn file(&self) -> Result<ConfigFile, HarnessError> {
        let base = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            scenario: self.scenario.clone(),
            seed: self.seed,
            integrator: IntegratorSection { dt: self.dt, t_end: self.t_end, levels: None },
            batch: BatchSection {
                paths: self.paths,
                mc_paths: self.mc_paths,
                correlation_paths: self.correlation_paths,
                cloud: self.cloud,
                small_time: None,
                split: self.split,
            },
            tolerances: Default::default(),
        };
        Ok(base.merged(flags))
    }
}

fn default_scenario(group: Group) -> &'static str {
    match group {
        Group::Geometry => "s2-gradient",
        Group::Decompose | Group::Skew | Group::SmallTime => "s2-frames",
        Group::Diffeo => "s1-rank1",
    }
}

fn execute(cli: Cli) -> Result<Report, HarnessError> {
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let (args, groups): (RunArgs, Vec<Group>) = match cli.command {
        Command::VerifyGeometry(a) => (a, vec![Group::Geometry]),
        Command::Decompose(a) => (a, vec![Group::Decompose]),
        Command::Skew(a) => (a, vec![Group::Skew, Group::SmallTime]),
        Command::Diffeo(a) => (a, vec![Group::Diffeo]),
        Command::Report(a) => (a, Group::ALL.to_vec()),
        Command::Scenarios => unreachable!("handled before"),
    };
    let file = args.file()?;
    let report = if groups.len() > 1 && file.scenario.is_none() {
        let mut all: Option<Report> = None;
        for sc in registry() {
            let cfg = RunConfig::resolve(ConfigFile { scenario: Some(sc.name.to_string()), ..file.clone() }, sc.name)?;
            let mut r = run_suite(&cfg, &command, &groups);
            r.skipped = r.skipped.into_iter().map(|s| format!("{}: {s}", sc.name)).collect();
            for t in &mut r.traces {
                t.name = format!("{}_{}", sc.name, t.name);
            }
            match &mut all {
                None => all = Some(r),
                Some(acc) => {
                    acc.records.extend(r.records);
                    acc.skipped.extend(r.skipped);
                    acc.traces.extend(r.traces);
                }
            }
        }
        all.expect("registry is not empty")
    } else {
        let cfg = RunConfig::resolve(file, default_scenario(groups[0]))?;
        run_suite(&cfg, &command, &groups)
    };
    report.write(&args.out)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Command::Scenarios = cli.command {
        for s in registry() {
            println!("{:<20} {}", s.name, s.summary);
        }
        return ExitCode::SUCCESS;
    }
    match execute(cli) {
        Ok(report) => {
            for r in &report.records {
                println!("{}", r.line());
            }
            for s in &report.skipped {
                println!("SKIP {s}");
            }
            let failed: Vec<_> = report.failures().collect();
            if failed.is_empty() {
                println!("all {} checks passed", report.records.len());
                ExitCode::SUCCESS
            } else {
                eprintln!("{} of {} checks failed:", failed.len(), report.records.len());
                for r in failed {
                    eprintln!("  {}", r.line());
                }
                ExitCode::from(1)
            }
        }
        Err(e @ (HarnessError::Usage(_) | HarnessError::Toml(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
