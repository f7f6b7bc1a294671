use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use defectlab::experiments::{run, ExperimentConfig, ExperimentKind, RunManifest};
use defectlab::{Error, ErrorClass};

/// Reproducible cellular-automaton experiments.
///
/// Every run writes its CSV files, images and a `manifest.txt` into the output
/// directory. A manifest is itself a config: `defectlab run --config
/// out/manifest.txt` repeats the run.
#[derive(Parser, Debug)]
#[command(name = "defectlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment file (key = value lines, `[section]`s, `include = path`).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`, default `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// `key=value` applied after the config file; repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run whatever kind the config names.
    Run(Common),
    /// Cylinder frequencies along a time grid, and particle densities with `system`.
    Simulate(Common),
    /// Space-time diagram as PPM, plus a PGM defect field with `decomposition`.
    Render(Common),
    /// Verify a particle system's axioms or the argmin lemma (`system = lemma:a,b`).
    CheckSystem(Common),
    /// Defect density and forbidden-word frequency along a time grid.
    Defects(Common),
    /// Entry times of gliders and their ECDF against the limit law.
    EntryTime(Common),
    /// Particle density decay of gliders automata.
    Density(Common),
    /// Cylinder distance to a target measure along a time grid.
    Convergence(Common),
    /// Per-class particle densities and the surviving class.
    QualitativeMonitor(Common),
}

impl Command {
    fn split(self) -> (Option<ExperimentKind>, Common) {
        match self {
            Command::Run(c) => (None, c),
            Command::Simulate(c) => (Some(ExperimentKind::Simulate), c),
            Command::Render(c) => (Some(ExperimentKind::Render), c),
            Command::CheckSystem(c) => (Some(ExperimentKind::CheckSystem), c),
            Command::Defects(c) => (Some(ExperimentKind::Defects), c),
            Command::EntryTime(c) => (Some(ExperimentKind::EntryTime), c),
            Command::Density(c) => (Some(ExperimentKind::Density), c),
            Command::Convergence(c) => (Some(ExperimentKind::Convergence), c),
            Command::QualitativeMonitor(c) => (Some(ExperimentKind::QualitativeMonitor), c),
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_FEASIBILITY: u8 = 3;
const EXIT_CHECK: u8 = 4;
const EXIT_IO: u8 = 1;

fn build_config(kind: Option<ExperimentKind>, common: &Common) -> defectlab::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(),
    };
    if let Some(kind) = kind {
        cfg.set("kind", kind.name())?;
    } else if cfg.get("kind").is_none() {
        return Err(Error::Config("`run` needs a config that sets kind".into()));
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", seed.to_string())?;
    }
    let out = match &common.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.get("out").unwrap_or("out")),
    };
    cfg.set("out", out.display().to_string())?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        cfg.set("threads", n.to_string())?;
    }
    Ok((cfg, out))
}

fn execute(kind: Option<ExperimentKind>, common: &Common) -> defectlab::Result<(RunManifest, PathBuf)> {
    let (cfg, out) = build_config(kind, common)?;
    let manifest = match cfg.parse_or("threads", 0usize)? {
        0 => run(&cfg, &out)?,
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run(&cfg, &out))?,
    };
    Ok((manifest, out))
}

fn report(m: &RunManifest, out: &std::path::Path) {
    println!("kind: {}", m.kind);
    println!("config_hash: {}", m.config_hash);
    println!("seed: {}", m.seed);
    for (k, v) in &m.summary {
        println!("{k}: {v}");
    }
    for f in &m.outputs {
        println!("wrote {}", out.join(f).display());
    }
    println!("wrote {}", out.join("manifest.txt").display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.split();
    match execute(kind, &common) {
        Ok((m, out)) => {
            report(&m, &out);
            if m.check_passed == Some(false) {
                eprintln!("check failed");
                return ExitCode::from(EXIT_CHECK);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (label, code) = match e.class() {
                ErrorClass::Config => ("config error", EXIT_CONFIG),
                ErrorClass::Feasibility => ("feasibility error", EXIT_FEASIBILITY),
                ErrorClass::Io => ("i/o error", EXIT_IO),
            };
            eprintln!("{label}: {e}");
            ExitCode::from(code)
        }
    }
}
