use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roadmark::bayesopt::Strategy;
use roadmark::controller::Command;
use roadmark::harness::{
    emit_report, record_target, run_baseline, run_search, ExperimentConfig, HarnessError, RunControl, RunOutcome,
    OUT_ENV,
};
use roadmark::objective::ObjectiveKind;
use roadmark::pattern::PatternFamily;
use roadmark::simulate::infractions;
use roadmark::world::Scenario;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Search for road markings that derail a closed-loop driving controller.
#[derive(Parser)]
#[command(name = "roadmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record (or load) the attack-free reference run of a scenario.
    Baseline(ExpArgs),
    /// Record (or load) the attack-free run under the attacker's command.
    Target(ExpArgs),
    /// Search for patterns that maximize an objective.
    Search(SearchArgs),
    /// Search for patterns that make the vehicle take the --target exit.
    Hijack(SearchArgs),
    /// Summarize result files as CSV tables and SVG plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    pattern: Option<PatternFamily>,
    #[arg(long)]
    objective: Option<ObjectiveKind>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Canvas slot name.
    #[arg(long)]
    slot: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Attacker's command: left, right or straight.
    #[arg(long)]
    target: Option<Command>,
    /// Grid counts per dimension, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Run directory name under <out>/runs.
    #[arg(long)]
    name: Option<String>,
    /// Output root.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// Discard an existing result file instead of resuming it.
    #[arg(long)]
    fresh: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Result files or run directories; every run under <out>/runs when empty.
    files: Vec<PathBuf>,
    /// Output root.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Report directory; <out>/report by default.
    #[arg(long)]
    dest: Option<PathBuf>,
}

impl ExpArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.scenario {
            c.scenario = v;
        }
        if let Some(v) = self.pattern {
            c.pattern = v;
        }
        if let Some(v) = self.objective {
            c.objective = v;
        }
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        if let Some(v) = self.warmup {
            c.warmup = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.slot {
            c.slot = Some(v.clone());
        }
        if let Some(v) = self.workers {
            c.search.workers = v;
        }
        if let Some(v) = self.target {
            c.target = Some(v);
        }
        if let Some(v) = &self.grid {
            c.grid = Some(v.clone());
        }
        if let Some(v) = &self.name {
            c.name = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}

fn run(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Baseline(args) => {
            let cfg = args.config()?;
            cfg.check()?;
            let b = run_baseline(&cfg)?;
            let r = infractions(&b.trace, &cfg.sim.thresholds)?;
            let steer: f64 = b.trace.steering().iter().sum();
            println!(
                "{} baseline: {} frames, severity {}, steering sum {steer:.4}{}",
                cfg.scenario,
                b.trace.len(),
                r.severity.name(),
                if b.from_cache { " (cached)" } else { "" }
            );
            println!("{}", b.path.display());
        }
        Cmd::Target(args) => {
            let cfg = args.config()?;
            let target = cfg
                .target
                .ok_or_else(|| HarnessError::Config("--target is required".into()))?;
            let t = record_target(&cfg, target)?;
            println!(
                "{} target {}: {} frames, exit {:?}{}",
                cfg.scenario,
                t.command,
                t.trace.len(),
                t.exit,
                if t.from_cache { " (cached)" } else { "" }
            );
            println!("{}", t.path.display());
        }
        Cmd::Search(args) => {
            let cfg = args.exp.config()?;
            print_outcome(&run_search(&cfg, &control(args.fresh))?);
        }
        Cmd::Hijack(args) => {
            let mut cfg = args.exp.config()?;
            if args.exp.objective.is_none() {
                cfg.objective = ObjectiveKind::HijackDistance;
            }
            if cfg.target.is_none() {
                return Err(HarnessError::Config("hijack needs --target".into()));
            }
            print_outcome(&run_search(&cfg, &control(args.fresh))?);
        }
        Cmd::Report(args) => {
            let out = args.out.unwrap_or_else(roadmark::harness::default_out);
            let files = if args.files.is_empty() {
                discover(&out.join("runs"))?
            } else {
                args.files
                    .iter()
                    .map(|f| if f.is_dir() { f.join("results.jsonl") } else { f.clone() })
                    .collect()
            };
            let dest = args.dest.unwrap_or_else(|| out.join("report"));
            let report = emit_report(&files, &dest)?;
            for (path, why) in &report.skipped {
                eprintln!("skipped {}: {why}", path.display());
            }
            for path in &report.written {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn control(fresh: bool) -> RunControl {
    RunControl {
        resume: !fresh,
        ..Default::default()
    }
}

fn discover(runs: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let entries = match std::fs::read_dir(runs) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(HarnessError::Config(format!("no runs under {}", runs.display())));
        }
        Err(e) => return Err(HarnessError::Io { path: runs.to_path_buf(), source: e }),
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("results.jsonl"))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn print_outcome(o: &RunOutcome) {
    let s = &o.summary;
    println!(
        "{} evaluated ({} resumed, {} simulated), {} failed",
        s.evaluated, o.resumed, o.simulated, s.failed
    );
    if let (Some(i), Some(score)) = (s.best_iteration, s.best_score) {
        println!("best score {score:.6} at iteration {i}");
    }
    if let Some(sev) = s.worst_severity {
        println!("worst severity {}", sev.name());
    }
    if o.target.is_some() {
        println!("hijack successes {}", s.hijack_successes);
    }
    println!("{}", o.path.display());
}
