//! Reproducible experiment runs: a config in, CSV files, images and a
//! manifest out.
//!
//! Every CSV starts with a header row and ends with `# config_hash=<hex>`.
//! Outputs depend only on the config (seed included), never on the thread
//! count or the output directory.

pub mod config;
pub mod monitor;
pub mod render;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::defects::{classify, defect_field, Decomposition, Language, SftSpec};
use crate::error::{Error, Result};
use crate::lattice::{glider, window_sample, Configuration, Symbol};
use crate::measures::{parse_measure, MeasureSpec};
use crate::particles::{
    check_particle_system, check_particle_system_sampled, check_per_rule, soundness_length, system_by_name,
    trace_densities, CheckReport, ParticleSystem,
};
use crate::rng::stream;
use crate::rules::{builtin, make_gliders, Dynamics};
use crate::walk::{
    convergence_rate, cylinder_series, density_decay, ecdf_report, entry_samples_csv, entry_times, fit_slope,
    lemma_min_check, limit_cdf, sabotaged_gliders, DensityPoint, Evolution, GliderSource,
    LimitLaw, Species,
};

pub use config::{ExperimentConfig, ExperimentKind};
pub use monitor::{qualitative_monitor, MonitorReport, MonitorRow, Thresholds, Verdict};
pub use render::{render_spacetime, Palette, Spacetime};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    /// File names relative to the output directory, in write order.
    pub outputs: Vec<String>,
    /// Headline numbers, in insertion order.
    pub summary: Vec<(String, String)>,
    /// `Some(false)` when a verification experiment found a violation.
    pub check_passed: Option<bool>,
}

impl RunManifest {
    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// The config followed by a `[manifest]` section; loading it as a config
    /// ignores that section and reproduces the run.
    pub fn to_text(&self, config: &ExperimentConfig) -> String {
        let mut out = config.to_text();
        out += "\n[manifest]\n";
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "version = {}", self.version);
        let _ = writeln!(out, "wall_time_s = {:.3}", self.wall_time_s);
        let _ = writeln!(out, "outputs = {}", self.outputs.join(","));
        if let Some(p) = self.check_passed {
            let _ = writeln!(out, "check_passed = {p}");
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "summary.{k} = {v}");
        }
        out
    }
}

/// Files produced by a run before they are written.
struct Outputs {
    hash: String,
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<(String, String)>,
    check_passed: Option<bool>,
}

impl Outputs {
    fn csv(&mut self, name: &str, body: String) {
        debug_assert!(body.ends_with('\n'));
        let text = format!("{body}# config_hash={}\n", self.hash);
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn binary(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

/// Runs an experiment and writes its files and `manifest.txt` into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let kind = config.kind()?;
    let mut out = Outputs { hash: config.hash(), files: Vec::new(), summary: Vec::new(), check_passed: None };
    match kind {
        ExperimentKind::Simulate => simulate(config, &mut out)?,
        ExperimentKind::Render => render(config, &mut out)?,
        ExperimentKind::CheckSystem => check_system(config, &mut out)?,
        ExperimentKind::Defects => defects(config, &mut out)?,
        ExperimentKind::EntryTime => entry_time(config, &mut out)?,
        ExperimentKind::Density => density(config, &mut out)?,
        ExperimentKind::Convergence => convergence(config, &mut out)?,
        ExperimentKind::QualitativeMonitor => monitor(config, &mut out)?,
    }
    std::fs::create_dir_all(out_dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(out_dir.join(name), bytes)?;
    }
    let manifest = RunManifest {
        kind,
        config_hash: out.hash,
        seed: config.seed()?,
        version: VERSION.to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: out.files.iter().map(|(n, _)| n.clone()).collect(),
        summary: out.summary,
        check_passed: out.check_passed,
    };
    std::fs::write(out_dir.join("manifest.txt"), manifest.to_text(config))?;
    Ok(manifest)
}

// ---------------------------------------------------------------- inputs

fn measure(cfg: &ExperimentConfig, key: &str) -> Result<MeasureSpec> {
    parse_measure(cfg.require(key)?)
}

/// Dynamics from `system` (with its particle system) or `rule`.
fn dynamics(cfg: &ExperimentConfig) -> Result<(Dynamics, Option<ParticleSystem>)> {
    if let Some(name) = cfg.get("system") {
        let (d, ps) = system_by_name(name)?;
        return Ok((d, Some(ps)));
    }
    Ok((builtin(cfg.require("rule")?)?, None))
}

/// Parses `monochrome:N`, `fates`, `checkerboard`, `orbit:WORD/N` or `full:N`.
pub fn parse_decomposition(text: &str) -> Result<Decomposition> {
    let text = text.trim();
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    let size = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad alphabet size in {text:?}")));
    match kind {
        "monochrome" => Decomposition::monochrome(size(arg)?),
        "fates" => Ok(Decomposition::zeros_ones_checkerboard()),
        "checkerboard" => Decomposition::new(vec![SftSpec::checkerboard()]),
        "full" => Decomposition::new(vec![SftSpec::full_shift(size(arg)?)?]),
        "orbit" => {
            let (word, n) = arg.split_once('/').ok_or_else(|| Error::Config(format!("orbit needs WORD/N in {text:?}")))?;
            let word = word
                .chars()
                .map(|c| c.to_digit(36).map(|d| d as Symbol).ok_or_else(|| Error::Config(format!("bad symbol in {text:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Decomposition::new(vec![SftSpec::orbit(size(n)?, &word)?])
        }
        _ => Err(Error::Config(format!("unknown decomposition {text:?}"))),
    }
}

/// Speeds and source of gliders configurations: either `rule = gliders:V-,V+`
/// with a measure on the gliders alphabet, or `system = factor:...` with a
/// measure on the factored automaton's alphabet.
fn glider_setup(cfg: &ExperimentConfig) -> Result<(i64, i64, GliderSource)> {
    let m = measure(cfg, "measure")?;
    if let Some(name) = cfg.get("system") {
        let (_, ps) = system_by_name(name)?;
        let speed = |label: &str| ps.classes().iter().find(|c| c.name == label).and_then(|c| c.speed);
        let factor = ps.morphism();
        return match (speed("-1"), speed("+1")) {
            (Some(vm), Some(vp)) if factor.output().size() == 3 => {
                Ok((vm, vp, GliderSource::Factor { factor: factor.clone(), measure: m }))
            }
            _ => Err(Error::Infeasible(format!("system {name:?} is not a gliders factor"))),
        };
    }
    let rule = cfg.require("rule")?;
    let speeds = rule.trim().strip_prefix("gliders:").and_then(|s| {
        let (a, b) = s.split_once(',')?;
        Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?))
    });
    match speeds {
        Some((vm, vp)) => {
            make_gliders(vm, vp)?;
            Ok((vm, vp, GliderSource::Direct(m)))
        }
        None => {
            builtin(rule)?;
            Err(Error::Infeasible(format!("rule {rule:?} is not a gliders automaton (use a gliders rule or a factor system)")))
        }
    }
}

fn word_text(w: &[Symbol]) -> String {
    w.iter().map(|&s| char::from_digit(u32::from(s), 36).unwrap_or('?')).collect()
}

// ---------------------------------------------------------------- kinds

fn simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (dynamics, ps) = dynamics(cfg)?;
    let m = measure(cfg, "measure")?;
    let grid = cfg.t_grid("t_grid", "dyadic:8")?;
    let len: usize = cfg.parse_or("L", 1)?;
    let n_traj: usize = cfg.parse_or("trajectories", 1)?;
    let cells: usize = cfg.parse_or("cells", 1000)?;
    let seed = cfg.seed()?;
    let ev = Evolution::Stepped { dynamics: dynamics.clone(), measure: m.clone() };
    let series = cylinder_series(&ev, &grid, len, n_traj, cells, seed)?;
    let mut csv = String::from("t,word,length,count,freq,half_width\n");
    for (t, cyl) in grid.iter().zip(&series) {
        for (w, l, count, f, hw) in cyl.rows() {
            let _ = writeln!(csv, "{t},{},{l},{count},{f:.9},{hw:.9}", word_text(&w));
        }
    }
    out.csv("frequencies.csv", csv);
    if let Some(ps) = ps {
        let t_max = *grid.last().unwrap() as usize;
        let trace = trace_densities(&dynamics, &ps, &m, t_max, n_traj, cells, seed)?;
        let mut csv = trace.csv_header() + "\n";
        for row in trace.csv_rows() {
            csv += &row;
            csv.push('\n');
        }
        out.csv("densities.csv", csv);
        out.note("inequality_failures", trace.inequality_failures);
        out.note("monotonicity_failures", trace.monotonicity_failures);
        out.check_passed = Some(trace.inequalities_hold());
    }
    Ok(())
}

fn render(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (dynamics, _) = dynamics(cfg)?;
    let m = measure(cfg, "measure")?;
    let width: usize = cfg.parse_or("width", 400)?;
    let height: usize = cfg.parse_or("height", 300)?;
    let st = render_spacetime(&dynamics, &m, width, height, cfg.seed()?)?;
    out.binary("spacetime.ppm", st.to_ppm(&Palette::standard(dynamics.alphabet().size()))?);
    if let Some(d) = cfg.get("decomposition") {
        let d = parse_decomposition(d)?;
        out.binary("defects.pgm", st.defects_pgm(&d, dynamics.alphabet())?);
    }
    out.note("width", width);
    out.note("height", height);
    Ok(())
}

fn check_rows(csv: &mut String, part: &str, rep: &CheckReport) {
    for c in &rep.conditions {
        let witness = c.witness.as_ref().map(|w| w.to_string().replace(',', ";")).unwrap_or_default();
        let _ = writeln!(csv, "{part},{},{},{},{witness}", c.condition, c.instances, c.violations);
    }
}

fn check_system(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let name = cfg.require("system")?;
    if let Some(speeds) = name.trim().strip_prefix("lemma:") {
        return check_lemma(cfg, speeds, out);
    }
    let (dynamics, ps) = system_by_name(name)?;
    let len: usize = cfg.parse_or("enum_len", soundness_length(&dynamics, &ps))?;
    let mode = cfg.get("mode").unwrap_or("exhaustive");
    let reports: Vec<(String, CheckReport)> = match mode {
        "exhaustive" => vec![("all".into(), check_particle_system(&dynamics, &ps, len)?)],
        "per-rule" => check_per_rule(&dynamics, &ps, len)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| (format!("rule{i}"), r))
            .collect(),
        "sampled" => {
            let samples: u64 = cfg.parse_or("samples", 10_000)?;
            vec![("sampled".into(), check_particle_system_sampled(&dynamics, &ps, len, samples, cfg.seed()?)?)]
        }
        other => return Err(Error::Config(format!("unknown check mode {other:?}"))),
    };
    let mut csv = String::from("part,condition,instances,violations,witness\n");
    let mut text = String::new();
    for (part, rep) in &reports {
        check_rows(&mut csv, part, rep);
        let _ = writeln!(text, "[{part}]\n{rep}");
    }
    let passed = reports.iter().all(|(_, r)| r.passed());
    out.csv("check.csv", csv);
    out.binary("check.txt", text.into_bytes());
    out.note("enum_len", len);
    out.note("result", if passed { "all pass" } else { "failure" });
    out.check_passed = Some(passed);
    Ok(())
}

fn check_lemma(cfg: &ExperimentConfig, speeds: &str, out: &mut Outputs) -> Result<()> {
    let (vm, vp) = speeds
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
        .ok_or_else(|| Error::Config(format!("bad lemma speeds {speeds:?}")))?;
    let max_len: usize = cfg.parse_or("max_len", 12)?;
    let max_t: usize = cfg.parse_or("max_t", 4)?;
    let rule = if cfg.parse_or("sabotaged", false)? { sabotaged_gliders(vm, vp)? } else { make_gliders(vm, vp)? };
    let rep = lemma_min_check(&rule, vm, vp, max_len, max_t)?;
    let witness = rep
        .witness
        .as_ref()
        .map(|w| format!("{:?} word {} t={} cell={} n={}", w.statement, word_text(&w.word), w.t, w.cell, w.n))
        .unwrap_or_default();
    out.csv(
        "check.csv",
        format!("words,checks,mismatches,witness\n{},{},{},{witness}\n", rep.words, rep.checks, rep.mismatches),
    );
    out.note("result", if rep.passed() { "all pass" } else { "failure" });
    out.check_passed = Some(rep.passed());
    Ok(())
}

fn defects(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (dynamics, _) = dynamics(cfg)?;
    let m = measure(cfg, "measure")?;
    let d = parse_decomposition(cfg.require("decomposition")?)?;
    let grid = cfg.t_grid("t_grid", "dyadic:8")?;
    let n_traj: usize = cfg.parse_or("trajectories", 1)?;
    let cells: usize = cfg.parse_or("cells", 1000)?;
    let word_len: usize = cfg.parse_or("word_len", 4)?;
    let seed = cfg.seed()?;
    if cells < word_len || n_traj == 0 {
        return Err(Error::Infeasible("defect statistics need trajectories and cells >= word_len".into()));
    }
    let t_max = *grid.last().unwrap() as usize;
    let margin = dynamics.radius() * t_max;
    let alphabet = dynamics.alphabet().clone();
    // Per trajectory and grid time: defects in [0, cells), forbidden words starting in [0, cells - word_len].
    let mut defect_counts = vec![0u64; grid.len()];
    let mut forbidden_counts = vec![0u64; grid.len()];
    let mut labels = String::new();
    for i in 0..n_traj {
        let mut rng = stream(seed, i as u64);
        let c = window_sample(&m, &alphabet, cells, margin, &mut rng)?;
        let mut snapshots: Vec<Configuration> = Vec::new();
        let mut keep = |s: usize, c: &Configuration| {
            if grid.binary_search(&(s as u64)).is_ok() {
                snapshots.push(c.clone());
            }
        };
        keep(0, &c);
        dynamics.iterate(c, t_max, &mut rng, &mut keep)?;
        for (k, snap) in snapshots.iter().enumerate() {
            let view = snap.restrict_exact(0, cells as i64 - 1)?;
            defect_counts[k] += defect_field(&d, &view)?.defects().len() as u64;
            let reach = d.reach(view.exact_cells());
            forbidden_counts[k] += (0..=cells - word_len).filter(|&p| reach[p] < p + word_len).count() as u64;
        }
        if i == 0 {
            let last = snapshots.last().unwrap().restrict_exact(0, cells as i64 - 1)?;
            labels = classify(&d, &last)?.to_csv();
        }
    }
    let mut csv = String::from("t,defect_density,forbidden_freq\n");
    let windows = (n_traj * (cells - word_len + 1)) as f64;
    for (k, t) in grid.iter().enumerate() {
        let dd = defect_counts[k] as f64 / (n_traj * cells) as f64;
        let ff = forbidden_counts[k] as f64 / windows;
        let _ = writeln!(csv, "{t},{dd:.9},{ff:.9}");
    }
    out.csv("defects.csv", csv);
    out.csv("labels.csv", labels);
    out.note("alpha", d.alpha());
    Ok(())
}

fn entry_time(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (vm, vp, source) = glider_setup(cfg)?;
    let law = LimitLaw::new(vm, vp)?;
    let n: u64 = cfg.parse_required("n")?;
    let samples: usize = cfg.parse_or("samples", 1000)?;
    let t_max: u64 = cfg.parse_or("tmax", 64 * n.max(1))?;
    let species = match cfg.get("species").unwrap_or("minus") {
        "minus" | "-" => Species::Minus,
        "plus" | "+" => Species::Plus,
        other => return Err(Error::Config(format!("unknown species {other:?}"))),
    };
    let s = entry_times(&source, law, species, n, samples, t_max, cfg.seed()?)?;
    let alpha_max: f64 = cfg.parse_or("alpha_max", (t_max as f64 / n.max(1) as f64).min(16.0))?;
    let step: f64 = cfg.parse_or("alpha_step", 0.25)?;
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Config("alpha_step must be positive".into()));
    }
    let grid: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&a| a <= alpha_max + 1e-12).collect();
    // The limit law describes the `-` species; the `+` one follows by mirror symmetry.
    let mirrored = match species {
        Species::Minus => law,
        Species::Plus => LimitLaw::new(-vp, -vm).map_err(|_| Error::Infeasible("the + species needs v_- < 0 <= v_+ after mirroring".into()))?,
    };
    let rep = ecdf_report(&s, &grid, |a| limit_cdf(mirrored, a).unwrap_or(f64::NAN))?;
    out.csv("entry_times.csv", entry_samples_csv(&s));
    out.csv("ecdf.csv", rep.csv());
    out.note("ks", format!("{:.6}", rep.ks));
    out.note("ks_sup", format!("{:.6}", rep.ks_sup));
    out.note("censored", rep.censored.iter().filter(|&&c| c).count());
    out.note("samples", s.len());
    Ok(())
}

fn density(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (vm, vp, source) = glider_setup(cfg)?;
    let grid = cfg.t_grid("t_grid", "dyadic:10")?;
    let n_traj: usize = cfg.parse_or("trajectories", 100)?;
    let cells: usize = cfg.parse_or("cells", 100_000)?;
    let series = density_decay((vm, vp), &source, &grid, n_traj, cells, cfg.seed()?)?;
    out.csv("density.csv", series.csv());
    let from: u64 = cfg.parse_or("fit_from", grid[grid.len() / 2])?;
    let tail: Vec<DensityPoint> = series.minus.iter().filter(|p| p.t >= from).copied().collect();
    if let Some(s) = fit_slope(&tail, true) {
        out.note("slope_minus", format!("{s:.6}"));
    }
    if let Some(s) = fit_slope(&tail, false) {
        out.note("log_linear_rate_minus", format!("{s:.6}"));
    }
    Ok(())
}

fn convergence(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let is_gliders = cfg.get("rule").is_some_and(|r| r.trim().starts_with("gliders:"))
        || cfg.get("system").is_some_and(|s| s.trim().starts_with("factor:"));
    let evolution = if is_gliders {
        let (v_minus, v_plus, source) = glider_setup(cfg)?;
        Evolution::Gliders { v_minus, v_plus, source }
    } else {
        Evolution::Stepped { dynamics: dynamics(cfg)?.0, measure: measure(cfg, "measure")? }
    };
    let target = match cfg.get("target") {
        Some(t) => parse_measure(t)?,
        None if is_gliders => MeasureSpec::periodic_dirac(vec![glider::ZERO], 3)?,
        None => return Err(Error::Config("missing key \"target\"".into())),
    };
    let grid = cfg.t_grid("t_grid", "dyadic:8")?;
    let len: usize = cfg.parse_or("L", 6)?;
    let n_traj: usize = cfg.parse_or("trajectories", 20)?;
    let cells: usize = cfg.parse_or("cells", 10_000)?;
    let series = convergence_rate(&evolution, &target, &grid, len, n_traj, cells, cfg.seed()?)?;
    out.csv("convergence.csv", series.csv());
    if let Some(e) = series.exponent {
        out.note("exponent", format!("{e:.6}"));
    }
    out.note("sandwiched", series.sandwiched);
    Ok(())
}

fn monitor(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (dynamics, ps) = dynamics(cfg)?;
    let ps = ps.ok_or_else(|| Error::Config("missing key \"system\"".into()))?;
    let m = measure(cfg, "measure")?;
    let grid = cfg.t_grid("t_grid", "dyadic:10")?;
    let th = Thresholds {
        share: cfg.parse_or("share", Thresholds::default().share)?,
        floor: cfg.parse_or("floor", Thresholds::default().floor)?,
    };
    let rep = qualitative_monitor(
        &dynamics,
        &ps,
        &m,
        &grid,
        cfg.parse_or("trajectories", 4)?,
        cfg.parse_or("cells", 10_000)?,
        cfg.seed()?,
        th,
    )?;
    out.csv("monitor.csv", rep.csv());
    out.note("verdict", &rep.verdict);
    Ok(())
}

#[cfg(test)]
mod tests;
