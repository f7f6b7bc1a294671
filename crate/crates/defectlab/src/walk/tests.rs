use super::*;
use proptest::prelude::*;
use rand::Rng;

fn gliders_config(values: &[i32], origin: i64) -> Configuration {
    let cells = values.iter().map(|&v| glider::from_value(v)).collect();
    Configuration::new(Alphabet::gliders(), cells, origin).unwrap()
}

fn random_gliders(len: usize, origin: i64, rng: &mut Stream) -> Configuration {
    let cells = (0..len).map(|_| rng.random_range(0..3u8)).collect();
    Configuration::new(Alphabet::gliders(), cells, origin).unwrap()
}

fn stepped(rule: &LocalRule, x: &Configuration, t: usize) -> Configuration {
    (0..t).fold(x.clone(), |c, _| rule.apply(&c).unwrap())
}

#[test]
fn walk_of_small_word() {
    let w = walk_of(&gliders_config(&[1, 0, -1, -1, 1], 3)).unwrap();
    assert_eq!(w.origin(), 3);
    assert_eq!(w.end(), 8);
    assert_eq!(w.sums(), &[0, 1, 1, 0, -1, 0]);
    let centred = walk_of(&gliders_config(&[1, 1, -1], -1)).unwrap();
    assert_eq!(centred.sums(), &[-1, 0, 1, 0]);
    assert_eq!(centred.at(0), Some(0));
    assert_eq!(walk_of(&gliders_config(&[0; 5], 0)).unwrap().sums(), &[0; 6]);
    assert_eq!(w.at(6), Some(0));
    assert_eq!(w.at(2), None);
    assert_eq!(w.interpolate(3.5), Some(0.5));
    assert_eq!(w.rescaled(4.0, 1.0), Some(0.5));
    assert_eq!(w.strict_argmin(3, 8), Some(7));
    assert_eq!(w.strict_argmin(3, 6), None);
}

#[test]
fn walk_increments_are_window_sums() {
    let mut rng = stream(2, 0);
    let x = random_gliders(60, -20, &mut rng);
    let w = walk_of(&x).unwrap();
    for _ in 0..100 {
        let j = rng.random_range(-20..40i64);
        let k = rng.random_range(j..=40);
        let sum: i64 = (j..k).map(|i| glider::value(x.at(i)) as i64).sum();
        assert_eq!(w.at(k).unwrap() - w.at(j).unwrap(), sum);
    }
}

#[test]
fn monotone_records() {
    let s = [3, 1, 2, 1, 0, 4];
    assert_eq!(previous_le(&s), vec![None, None, Some(1), Some(1), None, Some(4)]);
    assert_eq!(next_le(&s), vec![Some(1), Some(3), Some(3), Some(4), None, None]);
}

#[test]
fn records_match_stepping() {
    let mut rng = stream(11, 0);
    for &(vm, vp) in &[(-1, 0), (-1, 1), (-2, 1), (-2, -1), (0, 2)] {
        let rule = make_gliders(vm, vp).unwrap();
        for _ in 0..200 {
            let x = random_gliders(40, -7, &mut rng);
            let walk = walk_of(&x).unwrap();
            for t in 0..=4 {
                let direct = glider_configuration(&walk, (vm, vp), t).unwrap();
                let slow = stepped(&rule, &x, t);
                let (lo, hi) = slow.exact();
                assert!(direct.exact().0 <= lo && hi <= direct.exact().1, "({vm},{vp}) t={t}");
                for j in lo..=hi {
                    assert_eq!(direct.at(j), slow.at(j), "({vm},{vp}) t={t} j={j}");
                }
            }
        }
    }
}

#[test]
fn lemma_holds_for_true_rules() {
    for &(vm, vp) in &[(-1, 0), (-1, 1), (-2, 1)] {
        let rep = lemma_min_oracle(vm, vp, 8, 3).unwrap();
        assert!(rep.passed(), "({vm},{vp}) {:?}", rep.witness);
        assert_eq!(rep.words, 3u64.pow(8));
        assert!(rep.checks > rep.words);
    }
}

#[test]
fn sabotaged_rule_yields_witness() {
    for &(vm, vp) in &[(-1, 0), (-1, 1)] {
        let bad = sabotaged_gliders(vm, vp).unwrap();
        let rep = lemma_min_check(&bad, vm, vp, 6, 2).unwrap();
        assert!(!rep.passed());
        let w = rep.witness.expect("witness");
        // The witness must be a genuine disagreement with the true rule.
        let x = Configuration::new(Alphabet::gliders(), w.word.clone(), 0).unwrap();
        let good = make_gliders(vm, vp).unwrap();
        assert!(w.t >= 1);
        let differs = (1..=w.t).any(|t| {
            let (a, b) = (stepped(&good, &x, t), stepped(&bad, &x, t));
            a.exact_cells() != b.exact_cells()
        });
        assert!(differs, "{w:?}");
    }
}

#[test]
fn lemma_rejects_bad_arguments() {
    assert!(lemma_min_oracle(0, 0, 5, 1).is_err());
    assert!(lemma_min_oracle(-1, 0, 0, 1).is_err());
    assert!(lemma_min_oracle(-1, 0, 17, 1).is_err());
}

#[test]
fn limit_cdf_values() {
    let ga = LimitLaw::new(-1, 0).unwrap();
    assert_eq!(limit_cdf(ga, 0.0).unwrap(), 0.0);
    assert!((limit_cdf(ga, 1.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((limit_cdf(ga, f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
    assert!(limit_cdf(ga, 1e12).unwrap() > 0.999);
    let sym = LimitLaw::new(-1, 1).unwrap();
    // alpha / (2 + alpha) = 1/3 at alpha = 1; atan(1/sqrt 3) = pi/6.
    assert!((limit_cdf(sym, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((limit_cdf(sym, f64::INFINITY).unwrap() - 0.5).abs() < 1e-12);
    assert!(limit_cdf(sym, -1.0).is_err());
    assert!(LimitLaw::new(0, 1).is_err());
    assert!(LimitLaw::new(-1, -1).is_err());
}

#[test]
fn entry_time_on_walk_matches_stepping() {
    let mut rng = stream(5, 1);
    for &(vm, vp) in &[(-1, 0), (-1, 1), (-2, 1)] {
        let law = LimitLaw::new(vm, vp).unwrap();
        let species: &[Species] = if vp > 0 { &[Species::Minus, Species::Plus] } else { &[Species::Minus] };
        for _ in 0..60 {
            let n = rng.random_range(0..6u64);
            let t_max = rng.random_range(0..6u64);
            let reach = (vp - vm) as u64 * (n + t_max) + 4;
            let x = random_gliders(2 * reach as usize + 2, -(reach as i64), &mut rng);
            let walk = walk_of(&x).unwrap();
            for &sp in species {
                let fast = entry_time_on_walk(&walk, law, sp, n, t_max).unwrap();
                let slow = entry_time_by_stepping(&x, law, sp, n, t_max).unwrap();
                assert_eq!(fast, slow, "({vm},{vp}) {sp:?} n={n} tmax={t_max}");
            }
        }
    }
}

#[test]
fn entry_time_on_short_walk_fails() {
    let law = LimitLaw::new(-1, 0).unwrap();
    let walk = walk_of(&gliders_config(&[0; 6], -3)).unwrap();
    assert!(entry_time_on_walk(&walk, law, Species::Minus, 10, 10).is_err());
}

#[test]
fn stationary_species_has_no_entry_time() {
    let law = LimitLaw::new(-1, 0).unwrap();
    let walk = walk_of(&gliders_config(&[0; 20], -10)).unwrap();
    assert!(entry_time_on_walk(&walk, law, Species::Plus, 1, 1).is_err());
}

#[test]
fn source_factor_cells_match_factor_image() {
    // 00 -> +1, 11 -> -1 on the window [0, 1].
    let factor = LocalRule::from_fn(Alphabet::new(2).unwrap(), Alphabet::gliders(), 0, 2, |w| match (w[0], w[1]) {
        (0, 0) => glider::PLUS,
        (1, 1) => glider::MINUS,
        _ => glider::ZERO,
    })
    .unwrap();
    let source = GliderSource::Factor { factor: factor.clone(), measure: MeasureSpec::bernoulli(vec![0.4, 0.6]).unwrap() };
    let mut rng = stream(3, 0);
    let mut line = source.line(&mut rng).unwrap();
    let right: Vec<Symbol> = (0..30).map(|_| line.next_right(&mut rng)).collect();
    let left: Vec<Symbol> = (0..30).map(|_| line.next_left(&mut rng)).collect();
    let x: Vec<Symbol> = line.buf.iter().copied().collect();
    let c = Configuration::new(Alphabet::new(2).unwrap(), x, line.buf_origin).unwrap();
    let image = factor.apply(&c).unwrap();
    for (j, s) in right.iter().enumerate() {
        assert_eq!(image.at(j as i64), *s);
    }
    for (j, s) in left.iter().enumerate() {
        assert_eq!(image.at(-(j as i64) - 1), *s);
    }
}

#[test]
fn entry_times_are_reproducible_and_censored() {
    let law = LimitLaw::new(-1, 0).unwrap();
    let src = GliderSource::Direct(MeasureSpec::balanced_gliders(0.5).unwrap());
    let a = entry_times(&src, law, Species::Minus, 16, 200, 32, 9).unwrap();
    let b = entry_times(&src, law, Species::Minus, 16, 200, 32, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|s| s.n == 16 && s.value <= 32));
    assert!(a.iter().all(|s| !s.censored || s.value == 32));
    assert!(a.iter().any(|s| s.censored));
    assert!(a.iter().any(|s| !s.censored));
    let wrong = GliderSource::Direct(MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap());
    assert!(entry_times(&wrong, law, Species::Minus, 4, 2, 4, 0).is_err());
}

#[test]
fn ecdf_and_ks_on_a_hand_sample() {
    let s = |v, censored| EntryTimeSample { n: 2, value: v, censored, species: Species::Minus };
    let samples = [s(1, false), s(2, false), s(4, false), s(6, true)];
    // T / n = 0.5, 1, 2 and a censored 3; reference is uniform on [0, 4].
    let rep = ecdf_report(&samples, &[0.5, 1.0, 2.5, 3.0, 3.5], |a| (a / 4.0).min(1.0)).unwrap();
    assert_eq!(rep.values, vec![0.5, 1.0, 2.0, 3.0]);
    assert_eq!(rep.censored, vec![false, false, false, true]);
    assert_eq!(rep.alpha_max, 3.0);
    assert_eq!(rep.grid, vec![0.5, 1.0, 2.5, 3.0]);
    assert_eq!(rep.ecdf, vec![0.25, 0.5, 0.75, 0.75]);
    // Largest gap is just after 2: 0.75 - 0.5. On the grid it is at 1.0: 0.5 - 0.25.
    assert!((rep.ks_sup - 0.25).abs() < 1e-12);
    assert!((rep.ks - 0.25).abs() < 1e-12);
    let coarse = ecdf_report(&samples, &[0.5], |a| (a / 4.0).min(1.0)).unwrap();
    assert!((coarse.ks - 0.125).abs() < 1e-12);
    assert!((coarse.ks_sup - 0.25).abs() < 1e-12);
    assert!(rep.csv().starts_with("alpha,ecdf,reference\n0.5,0.250000000,0.125000000\n"));
    let other = [s(1, false), s(1, false), s(1, false), s(1, false)];
    assert!((ks_two_sample(&samples, &other).unwrap() - 0.75).abs() < 1e-12);
    assert!(entry_samples_csv(&samples).ends_with("2,-,6,1\n"));
}

#[test]
fn slope_of_exact_power_law() {
    let pts: Vec<DensityPoint> = dyadic_grid(10)
        .into_iter()
        .map(|t| DensityPoint { t, mean: 3.0 * (t as f64).powf(-0.5), half_width: 0.01 })
        .collect();
    assert!((fit_slope(&pts, true).unwrap() + 0.5).abs() < 1e-9);
    let lin: Vec<DensityPoint> =
        (1..10).map(|t| DensityPoint { t, mean: (-0.7 * t as f64).exp(), half_width: 1e-3 }).collect();
    assert!((fit_slope(&lin, false).unwrap() + 0.7).abs() < 1e-9);
    assert_eq!(upper_half(&pts).len(), 6);
    assert!(fit_slope(&pts[..1], true).is_none());
}

#[test]
fn comoving_density_counts_particles_of_the_image() {
    let src = GliderSource::Direct(MeasureSpec::gliders_bernoulli(0.3, 0.3, 0.4).unwrap());
    for &(vm, vp) in &[(-1, 0), (-1, 1), (-2, 1)] {
        let grid = [0, 1, 3, 8];
        let cells = 300usize;
        let series = density_decay((vm, vp), &src, &grid, 1, cells, 17).unwrap();
        let reach = vp - vm;
        let margin = reach * 8 + 2;
        let walk = sample_walk(&src, cells, margin, &mut stream(17, 0)).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let img = glider_configuration(&walk, (vm, vp), t as usize).unwrap();
            let t = t as i64;
            let count = |lo: i64, sym| (lo..lo + cells as i64).filter(|&j| img.at(j) == sym).count() as f64;
            assert_eq!(series.minus[k].mean, count(vm * t, glider::MINUS) / cells as f64, "({vm},{vp}) t={t}");
            assert_eq!(series.plus[k].mean, count(vp * t, glider::PLUS) / cells as f64, "({vm},{vp}) t={t}");
        }
    }
}

#[test]
fn density_at_one_step_is_a_quarter() {
    let src = GliderSource::Direct(MeasureSpec::balanced_gliders(0.5).unwrap());
    let series = density_decay((-1, 0), &src, &[0, 1], 40, 20_000, 2).unwrap();
    assert!((series.minus[0].mean - 0.5).abs() < 0.01);
    let d1 = series.minus[1];
    assert!((d1.mean - 0.25).abs() < 3.0 * d1.half_width.max(1e-3), "{d1:?}");
    assert!(series.csv().starts_with("t,d_minus,hw_minus,d_plus,hw_plus\n0,"));
}

#[test]
fn convergence_paths_agree() {
    let measure = MeasureSpec::balanced_gliders(0.5).unwrap();
    let target = MeasureSpec::periodic_dirac(vec![glider::ZERO], 3).unwrap();
    let grid = [0, 2, 8];
    let fast = convergence_rate(
        &Evolution::Gliders { v_minus: -1, v_plus: 0, source: GliderSource::Direct(measure.clone()) },
        &target,
        &grid,
        4,
        20,
        2000,
        1,
    )
    .unwrap();
    let slow = convergence_rate(
        &Evolution::Stepped { dynamics: Dynamics::Deterministic(make_gliders(-1, 0).unwrap()), measure },
        &target,
        &grid,
        4,
        20,
        2000,
        1,
    )
    .unwrap();
    for (f, s) in fast.points.iter().zip(&slow.points) {
        assert!((f.dm - s.dm).abs() < 0.03, "{f:?} {s:?}");
    }
    assert!(fast.points.windows(2).all(|w| w[0].dm > w[1].dm));
    assert!(fast.csv().starts_with("t,dm\n0,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_never_increase(seed in 0u64..1000, vm in -2i64..0, vp in 0i64..2) {
        let src = GliderSource::Direct(MeasureSpec::gliders_bernoulli(0.35, 0.2, 0.45).unwrap());
        let series = density_decay((vm, vp), &src, &dyadic_grid(5), 1, 400, seed).unwrap();
        prop_assert!(series.minus.windows(2).all(|w| w[1].mean <= w[0].mean));
        prop_assert!(series.plus.windows(2).all(|w| w[1].mean <= w[0].mean));
    }

    #[test]
    fn one_step_of_a_fast_automaton_is_a_shifted_slow_one(
        cells in proptest::collection::vec(0u8..3, 30..50), vm in -2i64..0, vp in 0i64..2,
    ) {
        let x = Configuration::new(Alphabet::gliders(), cells, 0).unwrap();
        let walk = walk_of(&x).unwrap();
        let fast = glider_configuration(&walk, (vm, vp), 1).unwrap();
        let slow = glider_configuration(&walk, (-1, 0), (vp - vm) as usize).unwrap();
        let (lo, hi) = fast.exact();
        for j in lo..=hi {
            prop_assert_eq!(fast.at(j), slow.at(j - vp));
        }
    }
}
