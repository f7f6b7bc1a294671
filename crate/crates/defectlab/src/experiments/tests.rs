use super::*;
use crate::error::ErrorClass;
use std::path::PathBuf;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("defectlab-unit-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, None).unwrap()
}

#[test]
fn config_sections_comments_and_overrides() {
    let mut c = cfg("# top\nkind = density\nseed=7\n\n[walk]\ncells = 10\n[]\nrule = gliders:-1,0\nseed = 8\n");
    assert_eq!(c.get("seed"), Some("8"));
    assert_eq!(c.get("walk.cells"), Some("10"));
    assert_eq!(c.kind().unwrap(), ExperimentKind::Density);
    c.apply_override("walk.cells=20").unwrap();
    assert_eq!(c.parse_or::<usize>("walk.cells", 0).unwrap(), 20);
    assert!(c.apply_override("novalue").is_err());
    assert!(c.set("bad key", "x").is_err());
    assert!(ExperimentConfig::parse("just words\n", None).is_err());
    assert!(ExperimentConfig::parse("[bad section!]\n", None).is_err());
    let e = cfg("kind = teleport\n").kind().unwrap_err();
    assert_eq!(e.class(), ErrorClass::Config);
}

#[test]
fn config_round_trips_and_hash_ignores_outputs() {
    let c = cfg("kind = render\nrule = 184\nmeasure = bernoulli:0.5,0.5\nwidth = 40\n[x]\ny = a b  c\n");
    let back = ExperimentConfig::parse(&c.to_text(), None).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    let mut moved = c.clone();
    moved.set("out", "/elsewhere").unwrap();
    moved.set("threads", "4").unwrap();
    assert_eq!(moved.hash(), c.hash());
    moved.set("seed", "1").unwrap();
    assert_ne!(moved.hash(), c.hash());
    assert_eq!(c.hash().len(), 64);
}

#[test]
fn config_includes_resolve_relative_and_detect_cycles() {
    let dir = scratch("include");
    std::fs::create_dir_all(dir.join("sub")).unwrap();
    std::fs::write(dir.join("sub/base.cfg"), "measure = uniform:2\ncells = 5\n").unwrap();
    std::fs::write(dir.join("main.cfg"), "kind = simulate\ninclude = sub/base.cfg\ncells = 9\n").unwrap();
    let c = ExperimentConfig::load(dir.join("main.cfg")).unwrap();
    assert_eq!(c.get("measure"), Some("uniform:2"));
    assert_eq!(c.get("cells"), Some("9"));
    std::fs::write(dir.join("a.cfg"), "include = b.cfg\n").unwrap();
    std::fs::write(dir.join("b.cfg"), "include = a.cfg\n").unwrap();
    let e = ExperimentConfig::load(dir.join("a.cfg")).unwrap_err();
    assert!(e.to_string().contains("cycle"), "{e}");
    assert!(ExperimentConfig::load(dir.join("missing.cfg")).is_err());
}

#[test]
fn grids() {
    let c = cfg("a = dyadic:3\nb = range:2..4\nc = 1, 5, 9\nd = 3,2\n");
    assert_eq!(c.t_grid("a", "").unwrap(), vec![1, 2, 4, 8]);
    assert_eq!(c.t_grid("b", "").unwrap(), vec![2, 3, 4]);
    assert_eq!(c.t_grid("c", "").unwrap(), vec![1, 5, 9]);
    assert!(c.t_grid("d", "").is_err());
    assert_eq!(c.t_grid("missing", "0,1").unwrap(), vec![0, 1]);
}

#[test]
fn palette_convention() {
    let p = Palette::standard(4);
    assert_eq!(p.colour(0).unwrap(), [255, 255, 255]);
    assert_eq!(p.colour(1).unwrap(), [0, 0, 0]);
    assert_eq!(p.colour(2).unwrap(), [255, 0, 0]);
    assert_eq!(p.colour(3).unwrap(), [0, 0, 255]);
    assert!(p.colour(4).is_err());
    assert_eq!(Palette::standard(6).colour(5).unwrap(), [230, 200, 0]);
}

#[test]
fn fixed_point_renders_constant() {
    let d = builtin("184").unwrap();
    let zeros = MeasureSpec::periodic_dirac(vec![0], 2).unwrap();
    let st = render_spacetime(&d, &zeros, 30, 12, 3).unwrap();
    let ppm = st.to_ppm(&Palette::standard(2)).unwrap();
    let header = b"P6\n30 12\n255\n";
    assert!(ppm.starts_with(header));
    assert!(ppm[header.len()..].iter().all(|&b| b == 255));
}

#[test]
fn left_gliders_draw_diagonals() {
    let d = builtin("gliders:-1,0").unwrap();
    let mut word = vec![glider::ZERO; 20];
    word[0] = glider::MINUS;
    let m = MeasureSpec::periodic_dirac(word, 3).unwrap();
    let st = render_spacetime(&d, &m, 60, 25, 0).unwrap();
    let phase = st.rows[0].iter().position(|&s| s == glider::MINUS).unwrap();
    for (t, row) in st.rows.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            let expect = (j + t) % 20 == phase % 20;
            assert_eq!(s == glider::MINUS, expect, "t={t} j={j}");
        }
    }
}

#[test]
fn renders_depend_only_on_seed() {
    let d = builtin("cyclic:3").unwrap();
    let m = MeasureSpec::uniform(3).unwrap();
    let a = render_spacetime(&d, &m, 50, 20, 9).unwrap();
    assert_eq!(a, render_spacetime(&d, &m, 50, 20, 9).unwrap());
    assert_ne!(a, render_spacetime(&d, &m, 50, 20, 10).unwrap());
    let pgm = a.defects_pgm(&Decomposition::monochrome(3).unwrap(), d.alphabet()).unwrap();
    assert!(pgm.starts_with(b"P5\n50 20\n255\n"));
}

#[test]
fn verdicts() {
    let names = vec!["a".to_string(), "b".to_string()];
    let row = |total, a, b| MonitorRow { t: 1, total, classes: vec![a, b] };
    let th = Thresholds::default();
    assert_eq!(monitor::verdict(&names, &row(0.2, 0.199, 0.001), th), Verdict::Dominant("a".into()));
    assert_eq!(monitor::verdict(&names, &row(0.2, 0.1, 0.1), th), Verdict::Undecided);
    assert_eq!(monitor::verdict(&names, &row(5e-4, 0.0, 5e-4), th), Verdict::Vanishing);
    assert_eq!(Verdict::Vanishing.to_string(), "none");
}

fn run_in(name: &str, text: &str) -> (RunManifest, PathBuf) {
    let dir = scratch(name);
    let m = run(&cfg(text), &dir).unwrap();
    (m, dir)
}

fn assert_csvs_well_formed(m: &RunManifest, dir: &Path) {
    for name in m.outputs.iter().filter(|n| n.ends_with(".csv")) {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.len() >= 2, "{name}");
        assert!(!lines[0].starts_with('#') && lines[0].contains(','), "{name} header");
        assert_eq!(*lines.last().unwrap(), format!("# config_hash={}", m.config_hash), "{name}");
    }
}

#[test]
fn every_kind_runs_and_reruns_identically() {
    let configs = [
        ("simulate", "kind = simulate\nsystem = traffic\nmeasure = bernoulli:0.6,0.4\nt_grid = 0,1,4,8\nL = 2\ncells = 200\ntrajectories = 2\n"),
        ("render", "kind = render\nrule = cyclic:3\nmeasure = uniform:3\nwidth = 40\nheight = 10\ndecomposition = monochrome:3\n"),
        ("check", "kind = check-system\nsystem = traffic\nenum_len = 9\n"),
        ("lemma", "kind = check-system\nsystem = lemma:-1,0\nmax_len = 7\nmax_t = 2\n"),
        ("defects", "kind = defects\nrule = fates:0.75\nmeasure = uniform:2\ndecomposition = fates\nt_grid = 0,2,8\ncells = 300\ntrajectories = 2\n"),
        ("entry", "kind = entry-time\nrule = gliders:-1,0\nmeasure = bernoulli:0,0.5,0.5\nn = 8\nsamples = 200\n"),
        ("density", "kind = density\nsystem = factor:traffic\nmeasure = bernoulli:0.5,0.5\nt_grid = dyadic:5\ntrajectories = 3\ncells = 2000\n"),
        ("convergence", "kind = convergence\nrule = gliders:-1,0\nmeasure = bernoulli:0,0.5,0.5\nt_grid = dyadic:4\nL = 3\ntrajectories = 3\ncells = 500\n"),
        ("monitor", "kind = qualitative-monitor\nsystem = cyclic:5\nmeasure = uniform:5\nt_grid = 0,8,32\ntrajectories = 2\ncells = 300\n"),
    ];
    for (name, text) in configs {
        let (m, dir) = run_in(name, text);
        assert!(!m.outputs.is_empty(), "{name}");
        assert_csvs_well_formed(&m, &dir);
        let again = scratch(&format!("{name}-again"));
        // Rerun from the written manifest, on a different thread count.
        let from_manifest = ExperimentConfig::load(dir.join("manifest.txt")).unwrap();
        assert_eq!(from_manifest, cfg(text), "{name}");
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let m2 = pool.install(|| run(&from_manifest, &again)).unwrap();
        assert_eq!(m2.outputs, m.outputs);
        for f in &m.outputs {
            assert_eq!(std::fs::read(dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{name}/{f}");
        }
    }
}

#[test]
fn check_results_reach_the_manifest() {
    let (ok, _) = run_in("check-ok", "kind = check-system\nsystem = traffic\nenum_len = 9\n");
    assert_eq!(ok.check_passed, Some(true));
    assert_eq!(ok.summary_value("result"), Some("all pass"));
    let (bad, dir) = run_in("check-bad", "kind = check-system\nsystem = traffic-mirrored\nenum_len = 9\n");
    assert_eq!(bad.check_passed, Some(false));
    let csv = std::fs::read_to_string(dir.join("check.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains("word ")), "{csv}");
    let (lemma, _) = run_in("lemma-bad", "kind = check-system\nsystem = lemma:-1,1\nmax_len = 6\nmax_t = 2\nsabotaged = true\n");
    assert_eq!(lemma.check_passed, Some(false));
}

#[test]
fn errors_are_classified() {
    let dir = scratch("errors");
    let e = run(&cfg("kind = entry-time\nrule = identity\nmeasure = uniform:2\nn = 4\n"), &dir).unwrap_err();
    assert_eq!(e.class(), ErrorClass::Feasibility, "{e}");
    let e = run(&cfg("kind = density\nrule = gliders:-1,0\nmeasure = nonsense\n"), &dir).unwrap_err();
    assert_eq!(e.class(), ErrorClass::Config, "{e}");
    let e = run(&cfg("kind = render\nmeasure = uniform:2\n"), &dir).unwrap_err();
    assert_eq!(e.class(), ErrorClass::Config, "{e}");
    let e = run(&cfg("kind = render\nrule = 184\nmeasure = uniform:3\n"), &dir).unwrap_err();
    assert_eq!(e.class(), ErrorClass::Feasibility, "{e}");
}

#[test]
fn decompositions_parse() {
    assert_eq!(parse_decomposition("monochrome:3").unwrap().domains().len(), 3);
    assert_eq!(parse_decomposition("fates").unwrap().alpha(), 2);
    assert_eq!(parse_decomposition("orbit:011/2").unwrap().periods()[0].period(), 3);
    assert!(parse_decomposition("orbit:0x1/2").is_err());
    assert!(parse_decomposition("spiral").is_err());
}
