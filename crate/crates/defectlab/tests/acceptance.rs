//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Every criterion goes through `experiments::run`, so each leaves a manifest
//! behind; criterion 12 replays all of them. `ACCEPTANCE_ONLY=4,5` restricts
//! the run to a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use defectlab::experiments::{run, ExperimentConfig, RunManifest};
use defectlab::rng::stream;
use defectlab::rules::random_one_sided_captive;
use defectlab::walk::{ks_two_sample, EntryTimeSample, Species};

const SEED: u64 = 20_240_601;

type Outcome = Result<(bool, String), String>;

struct Suite {
    root: PathBuf,
    /// Completed runs by name, in execution order for the replay.
    runs: BTreeMap<String, (usize, RunManifest, PathBuf)>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().ok_or("empty csv")?.split(',').map(str::to_string).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize, String> {
        self.header.iter().position(|h| h == name).ok_or(format!("no column {name}"))
    }

    fn num(&self, row: &[String], name: &str) -> Result<f64, String> {
        let v = &row[self.col(name)?];
        v.parse().map_err(|_| format!("bad number {v:?} in {name}"))
    }

    /// Row whose first column equals `key`.
    fn row(&self, key: &str) -> Result<&Vec<String>, String> {
        self.rows.iter().find(|r| r[0] == key).ok_or(format!("no row {key}"))
    }
}

impl Suite {
    fn run(&mut self, name: &str, text: &str) -> Result<(RunManifest, PathBuf), String> {
        if let Some((_, m, dir)) = self.runs.get(name) {
            return Ok((m.clone(), dir.clone()));
        }
        let cfg = ExperimentConfig::parse(&format!("seed = {SEED}\n{text}"), None).map_err(|e| e.to_string())?;
        let dir = self.root.join(name);
        let _ = std::fs::remove_dir_all(&dir);
        let m = run(&cfg, &dir).map_err(|e| format!("{name}: {e}"))?;
        let order = self.runs.len();
        self.runs.insert(name.to_string(), (order, m.clone(), dir.clone()));
        Ok((m, dir))
    }

    fn summary(m: &RunManifest, key: &str) -> Result<f64, String> {
        m.summary_value(key).ok_or(format!("no summary {key}"))?.parse().map_err(|_| format!("bad summary {key}"))
    }
}

fn captive_table(size: usize) -> String {
    random_one_sided_captive(size, &mut stream(SEED, size as u64)).iter().map(|s| s.to_string()).collect()
}

/// A random 3-symbol captive system and the gliders factor of a random binary
/// one; on three symbols merging walls can survive, which gliders cannot mimic.
fn captive_systems() -> (String, String) {
    (format!("captive:{}/3", captive_table(3)), format!("factor:captive:{}/2", captive_table(2)))
}

fn criterion_1(s: &mut Suite) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut total = 0.0;
    for (name, speeds) in [("c1-lemma-10", "-1,0"), ("c1-lemma-11", "-1,1")] {
        let (m, _) = s.run(name, &format!("kind = check-system\nsystem = lemma:{speeds}\nmax_len = 12\nmax_t = 4\n"))?;
        let pass = m.check_passed == Some(true);
        ok &= pass;
        total += m.wall_time_s;
        notes.push(format!("({speeds}) {}", if pass { "0 mismatches" } else { "mismatch" }));
    }
    ok &= total < 60.0;
    notes.push(format!("{total:.1}s < 60s"));
    Ok((ok, notes.join(", ")))
}

fn criterion_2(s: &mut Suite) -> Outcome {
    let (captive, factor_captive) = captive_systems();
    let sound: [(&str, &str); 15] = [
        ("traffic", "enum_len = 9\n"),
        ("cyclic:3", ""),
        ("cyclic:4", ""),
        (&captive, ""),
        ("gliders:-1,0", ""),
        ("gliders:-1,1", ""),
        ("random-walk", ""),
        ("fates:0.75", ""),
        ("fates:0.75", "mode = per-rule\n"),
        ("fates:0.75", "mode = sampled\nsamples = 20000\n"),
        ("line", ""),
        ("factor:traffic", ""),
        ("factor:cyclic3", ""),
        (&factor_captive, ""),
        ("factor:product", ""),
    ];
    let faulty = ["traffic-mirrored", "cyclic-frozen:3", "random-walk-mirrored", "line-frozen"]
        .map(String::from)
        .into_iter()
        .chain([captive.replace("captive:", "captive-dropping:")]);
    let mut bad = Vec::new();
    for (i, (system, extra)) in sound.iter().enumerate() {
        let (m, _) = s.run(&format!("c2-ok-{i}"), &format!("kind = check-system\nsystem = {system}\n{extra}"))?;
        if m.check_passed != Some(true) {
            bad.push(format!("{system} failed"));
        }
    }
    let mut n_faulty = 0;
    for (i, system) in faulty.enumerate() {
        n_faulty += 1;
        let (m, dir) = s.run(&format!("c2-fault-{i}"), &format!("kind = check-system\nsystem = {system}\n"))?;
        let t = Table::read(&dir.join("check.csv"))?;
        let w = t.col("witness")?;
        let witnessed = t.rows.iter().any(|r| !r[w].is_empty());
        if m.check_passed != Some(false) || !witnessed {
            bad.push(format!("{system} not caught"));
        }
    }
    let detail = format!("{} systems pass, {n_faulty} fault variants caught with witnesses ({captive}, {factor_captive})", sound.len());
    Ok(if bad.is_empty() { (true, detail) } else { (false, bad.join("; ")) })
}

fn criterion_3(s: &mut Suite) -> Outcome {
    let (captive, factor_captive) = captive_systems();
    let systems: [(&str, &str); 14] = [
        ("traffic", "bernoulli:0.5,0.5"),
        ("cyclic:3", "uniform:3"),
        ("cyclic:4", "uniform:4"),
        ("cyclic:5", "uniform:5"),
        (&captive, "uniform:3"),
        ("gliders:-1,0", "bernoulli:0.4,0.3,0.3"),
        ("gliders:-1,1", "bernoulli:0.4,0.3,0.3"),
        ("random-walk", "uniform:4"),
        ("fates:0.75", "uniform:2"),
        ("line", "bernoulli:0.5,0.5"),
        ("factor:traffic", "bernoulli:0.5,0.5"),
        ("factor:cyclic3", "uniform:3"),
        (&factor_captive, "uniform:2"),
        ("factor:product", "bernoulli:0.3,0.7"),
    ];
    let mut failures = Vec::new();
    for (i, (system, measure)) in systems.iter().enumerate() {
        let (m, _) = s.run(
            &format!("c3-{i}"),
            &format!("kind = simulate\nsystem = {system}\nmeasure = {measure}\nt_grid = range:0..64\ntrajectories = 100\ncells = 1000\n"),
        )?;
        if m.check_passed != Some(true) {
            failures.push(format!("{system}: {} violations", m.summary_value("inequality_failures").unwrap_or("?")));
        }
    }
    Ok(if failures.is_empty() {
        (true, format!("{} systems x 100 trajectories x 64 steps, no violation", systems.len()))
    } else {
        (false, failures.join("; "))
    })
}

fn entry_run(s: &mut Suite, name: &str, rule: &str, measure: &str) -> Result<(RunManifest, PathBuf), String> {
    s.run(name, &format!("kind = entry-time\nrule = {rule}\nmeasure = {measure}\nn = 4096\nsamples = 10000\n"))
}

const BALANCED_HALF: &str = "bernoulli:0,0.5,0.5";
const BALANCED_FIFTH: &str = "bernoulli:0.6,0.2,0.2";

fn criterion_4(s: &mut Suite) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rule) in [("c4-entry-10", "gliders:-1,0"), ("c4-entry-11", "gliders:-1,1")] {
        let (m, _) = entry_run(s, name, rule, BALANCED_HALF)?;
        let ks = Suite::summary(&m, "ks_sup")?;
        ok &= ks <= 0.03;
        notes.push(format!("{rule} KS={ks:.4} (censored {})", m.summary_value("censored").unwrap_or("?")));
    }
    notes.push("limit <= 0.03".into());
    Ok((ok, notes.join(", ")))
}

fn read_samples(dir: &Path) -> Result<Vec<EntryTimeSample>, String> {
    let t = Table::read(&dir.join("entry_times.csv"))?;
    t.rows
        .iter()
        .map(|r| {
            Ok(EntryTimeSample {
                n: t.num(r, "n")? as u64,
                value: t.num(r, "T")? as u64,
                censored: t.num(r, "censored")? != 0.0,
                species: if r[t.col("species")?] == "+" { Species::Plus } else { Species::Minus },
            })
        })
        .collect()
}

fn criterion_5(s: &mut Suite) -> Outcome {
    let (half, half_dir) = entry_run(s, "c4-entry-10", "gliders:-1,0", BALANCED_HALF)?;
    let (fifth, fifth_dir) = entry_run(s, "c5-entry-fifth", "gliders:-1,0", BALANCED_FIFTH)?;
    let ks_half = Suite::summary(&half, "ks_sup")?;
    let ks_fifth = Suite::summary(&fifth, "ks_sup")?;
    let pair = ks_two_sample(&read_samples(&half_dir)?, &read_samples(&fifth_dir)?).map_err(|e| e.to_string())?;
    let ok = ks_half <= 0.03 && ks_fifth <= 0.03 && pair <= 0.04;
    Ok((ok, format!("p=0.5 KS={ks_half:.4}, p=0.2 KS={ks_fifth:.4} (<= 0.03), pairwise KS={pair:.4} (<= 0.04)")))
}

fn density_run(s: &mut Suite) -> Result<(RunManifest, PathBuf), String> {
    s.run(
        "c6-density",
        &format!(
            "kind = density\nrule = gliders:-1,0\nmeasure = {BALANCED_HALF}\nt_grid = dyadic:12\ntrajectories = 100\ncells = 100000\nfit_from = 64\n"
        ),
    )
}

fn criterion_6(s: &mut Suite) -> Outcome {
    let (m, dir) = density_run(s)?;
    let t = Table::read(&dir.join("density.csv"))?;
    let d1 = t.num(t.row("1")?, "d_minus")?;
    let slope = Suite::summary(&m, "slope_minus")?;
    let ok = (d1 - 0.25).abs() <= 0.005 && (slope + 0.5).abs() <= 0.07;
    Ok((ok, format!("d(1)={d1:.5} (0.25 +- 0.005), slope over [2^6, 2^12]={slope:.4} (-0.5 +- 0.07)")))
}

fn criterion_7(s: &mut Suite) -> Outcome {
    let (_, density_dir) = density_run(s)?;
    let (m, dir) = s.run(
        "c7-convergence",
        &format!(
            "kind = convergence\nrule = gliders:-1,0\nmeasure = {BALANCED_HALF}\nt_grid = dyadic:12\nL = 6\ntrajectories = 100\ncells = 100000\n"
        ),
    )?;
    let dens = Table::read(&density_dir.join("density.csv"))?;
    let conv = Table::read(&dir.join("convergence.csv"))?;
    let mut below = Vec::new();
    for r in &conv.rows {
        let dm = conv.num(r, "dm")?;
        let d = dens.num(dens.row(&r[0])?, "d_minus")?;
        if dm < 0.5 * d {
            below.push(r[0].clone());
        }
    }
    let e = Suite::summary(&m, "exponent")?;
    let ok = below.is_empty() && (-0.6..=-0.2).contains(&e);
    Ok((
        ok,
        format!(
            "d_M >= 0.5 d_-(t) at {}/{} grid times, exponent={e:.4} (in [-0.6, -0.2])",
            conv.rows.len() - below.len(),
            conv.rows.len()
        ),
    ))
}

fn monitor(s: &mut Suite, name: &str, system: &str, measure: &str) -> Result<(RunManifest, Table), String> {
    let (m, dir) = s.run(
        name,
        &format!("kind = qualitative-monitor\nsystem = {system}\nmeasure = {measure}\nt_grid = dyadic:12\ntrajectories = 16\ncells = 10000\n"),
    )?;
    Ok((m, Table::read(&dir.join("monitor.csv"))?))
}

fn criterion_8(s: &mut Suite) -> Outcome {
    let (traffic, t) = monitor(s, "c8-traffic", "traffic", "bernoulli:0.6,0.4")?;
    let last = t.row("4096")?;
    let (p01, p10) = (t.num(last, "p01")?, t.num(last, "p10")?);
    let traffic_ok = p10 < 0.01 && (p01 - 0.2).abs() <= 0.02 && traffic.summary_value("verdict") == Some("p01");
    let (_, c3) = monitor(s, "c8-cyclic3", "cyclic:3", "uniform:3")?;
    let last = c3.row("4096")?;
    let (right, left) = (c3.num(last, "right")?, c3.num(last, "left")?);
    let c3_ok = right < 0.01 && left < 0.01;
    let (_, c5) = monitor(s, "c8-cyclic5", "cyclic:5", "uniform:5")?;
    let last = c5.row("4096")?;
    let share = c5.num(last, "still")? / c5.num(last, "total")?;
    let c5_ok = share > 0.99;
    Ok((
        traffic_ok && c3_ok && c5_ok,
        format!(
            "#184: p10={p10:.4} (< 0.01), p01={p01:.4} (0.2 +- 0.02); 3-cyclic: +={right:.4}, -={left:.4} (< 0.01); 5-cyclic: p0 share={share:.4} (> 0.99)"
        ),
    ))
}

fn criterion_9(s: &mut Suite) -> Outcome {
    let (_, dir) = s.run(
        "c9-cyclic3-limit",
        "kind = simulate\nrule = cyclic:3\nmeasure = bernoulli:0.5,0.3,0.2\nt_grid = 4096\nL = 1\ntrajectories = 1500\ncells = 256\n",
    )?;
    let t = Table::read(&dir.join("frequencies.csv"))?;
    let expected = [0.2, 0.5, 0.3];
    let mut ok = true;
    let mut got = Vec::new();
    for (sym, e) in expected.iter().enumerate() {
        let r = t.rows.iter().find(|r| r[1] == sym.to_string()).ok_or("missing symbol")?;
        let f = t.num(r, "freq")?;
        ok &= (f - e).abs() <= 0.05;
        got.push(format!("[{sym}]={f:.4}"));
    }
    Ok((ok, format!("{} vs (0.2, 0.5, 0.3) +- 0.05", got.join(" "))))
}

fn criterion_10(s: &mut Suite) -> Outcome {
    let (m, dir) = s.run(
        "c10-product-density",
        "kind = density\nsystem = factor:product\nmeasure = bernoulli:0.3,0.7\nt_grid = range:0..20\ntrajectories = 100\ncells = 100000\nfit_from = 1\n",
    )?;
    let t = Table::read(&dir.join("density.csv"))?;
    let d20 = t.num(t.row("20")?, "d_minus")?;
    let rate = Suite::summary(&m, "log_linear_rate_minus")?;
    // Survival needs a block of ones of length about 2t.
    let expected = 2.0 * 0.7f64.ln();
    let density_ok = d20 < 1e-3 && (rate / expected - 1.0).abs() <= 0.1;
    let ns = [2u64, 4, 8, 16, 32];
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for n in ns {
        let (_, dir) = s.run(
            &format!("c10-product-entry-{n}"),
            &format!("kind = entry-time\nsystem = factor:product\nmeasure = bernoulli:0.3,0.7\nn = {n}\nsamples = 4000\nalpha_max = 16\n"),
        )?;
        let e = Table::read(&dir.join("ecdf.csv"))?;
        curves.push(e.rows.iter().map(|r| e.num(r, "ecdf")).collect::<Result<_, _>>()?);
    }
    let monotone = curves.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b <= a));
    let tail = curves.last().unwrap().iter().cloned().fold(0.0, f64::max);
    let heads: Vec<String> = curves.iter().map(|c| format!("{:.4}", c.last().unwrap())).collect();
    Ok((
        density_ok && monotone && tail <= 0.01,
        format!(
            "d(20)={d20:.2e} (< 1e-3), log-linear rate={rate:.4} (2 ln 0.7={expected:.4} +- 10%); entry mass at alpha=16 for n={ns:?}: {} (nonincreasing at every alpha: {monotone}, last <= 0.01)",
            heads.join(" ")
        ),
    ))
}

fn criterion_11(s: &mut Suite) -> Outcome {
    let (_, dir) = s.run(
        "c11-line",
        "kind = simulate\nrule = line\nmeasure = bernoulli:0.5,0.5\nt_grid = 0,64,512,4096\nL = 2\ntrajectories = 8\ncells = 10000\n",
    )?;
    let t = Table::read(&dir.join("frequencies.csv"))?;
    let freq = |w: &str| -> Result<f64, String> {
        let r = t.rows.iter().find(|r| r[0] == "4096" && r[1] == w).ok_or(format!("missing {w}"))?;
        t.num(r, "freq")
    };
    let bad_pairs = freq("00")? + freq("11")?;
    let line_ok = bad_pairs < 0.02;
    let (_, dir) = s.run(
        "c11-fates",
        "kind = defects\nrule = fates:0.75\nmeasure = uniform:2\ndecomposition = fates\nt_grid = dyadic:10\ntrajectories = 8\ncells = 10000\nword_len = 4\n",
    )?;
    let d = Table::read(&dir.join("defects.csv"))?;
    let ff: Vec<f64> = d.rows.iter().map(|r| d.num(r, "forbidden_freq")).collect::<Result<_, _>>()?;
    let decreasing = ff.windows(2).all(|w| w[1] < w[0]);
    Ok((
        line_ok && decreasing,
        format!(
            "line PCA: [00]+[11] at t=4096 = {bad_pairs:.4} (< 0.02); Fates: forbidden length-4 words {:.4} -> {:.4}, strictly decreasing: {decreasing}",
            ff[0],
            ff.last().unwrap()
        ),
    ))
}

fn criterion_12(s: &mut Suite) -> Outcome {
    let mut runs: Vec<_> = s.runs.iter().map(|(name, (order, m, dir))| (*order, name.clone(), m.clone(), dir.clone())).collect();
    runs.sort_by_key(|r| r.0);
    if runs.is_empty() {
        return Err("no runs to replay".into());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    let mut files = 0;
    for (_, name, m, dir) in &runs {
        let cfg = ExperimentConfig::load(dir.join("manifest.txt")).map_err(|e| e.to_string())?;
        let again = s.root.join(format!("{name}-replay"));
        let _ = std::fs::remove_dir_all(&again);
        pool.install(|| run(&cfg, &again)).map_err(|e| format!("{name}: {e}"))?;
        for f in m.outputs.iter().filter(|f| f.ends_with(".csv")) {
            files += 1;
            let a = std::fs::read(dir.join(f)).map_err(|e| e.to_string())?;
            let b = std::fs::read(again.join(f)).map_err(|e| e.to_string())?;
            if a != b {
                differing.push(format!("{name}/{f}"));
            }
        }
    }
    Ok(if differing.is_empty() {
        (true, format!("{} runs replayed from manifests on 2 threads, {files} CSVs byte-identical", runs.len()))
    } else {
        (false, format!("differing: {}", differing.join(", ")))
    })
}

type Criterion = (u32, &'static str, fn(&mut Suite) -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "argmin lemma oracle", criterion_1),
        (2, "particle-system axioms", criterion_2),
        (3, "density inequalities", criterion_3),
        (4, "entry-time law", criterion_4),
        (5, "independence from the measure", criterion_5),
        (6, "density decay", criterion_6),
        (7, "convergence rate", criterion_7),
        (8, "qualitative monitors", criterion_8),
        (9, "3-cyclic limit coefficients", criterion_9),
        (10, "rule #128 counterexample", criterion_10),
        (11, "PCA organisation", criterion_11),
        (12, "reproducibility", criterion_12),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut suite = Suite { root, runs: BTreeMap::new() };
    let mut failed = Vec::new();
    for (id, title, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let (passed, detail) = check(&mut suite).unwrap_or_else(|e| (false, format!("error: {e}")));
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {title}: {detail} [{:.1}s]", started.elapsed().as_secs_f64());
        if !passed {
            failed.push(id);
        }
    }
    println!("outputs under {}", suite.root.display());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
