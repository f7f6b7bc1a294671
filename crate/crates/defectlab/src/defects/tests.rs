use proptest::prelude::*;

use super::*;
use crate::lattice::Alphabet;
use crate::measures::MeasureSpec;
use crate::particles::{project, traffic_system};
use crate::rng::stream;
use crate::rules::{make_cyclic, make_elementary};

fn config(size: usize, cells: Vec<Symbol>, origin: i64) -> Configuration {
    Configuration::new(Alphabet::new(size).unwrap(), cells, origin).unwrap()
}

fn digits(size: usize, s: &str) -> Configuration {
    Configuration::from_digits(Alphabet::new(size).unwrap(), s).unwrap()
}

fn sft(size: usize, forbidden: &[&[Symbol]]) -> SftSpec {
    SftSpec::new(size, forbidden.iter().map(|w| w.to_vec()).collect()).unwrap()
}

/// Admissible iff the word extends by `m` cells on each side without a
/// forbidden factor, with `m` at least the number of graph vertices.
fn admits_by_extension(s: &SftSpec, word: &[Symbol]) -> bool {
    let a = s.alphabet_size();
    let m = a.pow(s.order() as u32 - 1) + 1;
    let clean = |w: &[Symbol]| !s.forbidden().iter().any(|f| w.windows(f.len()).any(|x| x == f.as_slice()));
    // Sets of reachable suffixes (right) and prefixes (left) of length order-1.
    let k = s.order() - 1;
    let grow = |seed: Vec<Symbol>, right: bool| -> bool {
        let mut frontier = vec![seed];
        for _ in 0..m {
            let mut next = Vec::new();
            for w in &frontier {
                for b in 0..a as Symbol {
                    let ext: Vec<Symbol> = if right {
                        w.iter().copied().chain([b]).collect()
                    } else {
                        [b].into_iter().chain(w.iter().copied()).collect()
                    };
                    if clean(&ext) {
                        let keep = if right { ext[ext.len().saturating_sub(k)..].to_vec() } else { ext[..k.min(ext.len())].to_vec() };
                        if !next.contains(&keep) {
                            next.push(keep);
                        }
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            frontier = next;
        }
        true
    };
    // Pad short words on the right so the two sides cannot share a forbidden factor.
    let mut padded = vec![word.to_vec()];
    while padded[0].len() < k {
        padded = padded
            .iter()
            .flat_map(|w| (0..a as Symbol).map(move |b| w.iter().copied().chain([b]).collect::<Vec<_>>()))
            .collect();
    }
    padded.into_iter().any(|u| clean(&u) && grow(u.clone(), true) && grow(u, false))
}

fn zoo() -> Vec<(&'static str, SftSpec)> {
    vec![
        ("mono2", Decomposition::monochrome(2).unwrap().domains()[0].clone()),
        ("full2", SftSpec::full_shift(2).unwrap()),
        ("checker", SftSpec::checkerboard()),
        ("golden", sft(2, &[&[1, 1]])),
        ("no-000-111", sft(2, &[&[0, 0, 0], &[1, 1, 1]])),
        ("no-010-11", sft(2, &[&[0, 1, 0], &[1, 1]])),
        ("no-0000-101", sft(2, &[&[0, 0, 0, 0], &[1, 0, 1]])),
        ("orbit011", SftSpec::orbit(2, &[0, 1, 1]).unwrap()),
        ("tail", sft(2, &[&[1, 0]])),
        ("mono3-union", sft(3, &[&[0, 1], &[0, 2], &[1, 0], &[1, 2], &[2, 0], &[2, 1]])),
    ]
}

#[test]
fn admits_matches_extension_oracle() {
    for (name, s) in zoo() {
        let a = s.alphabet_size();
        for len in 0..=7 {
            for i in 0..a.pow(len as u32) {
                let w = index_word(i, len, a);
                assert_eq!(s.admits(&w), admits_by_extension(&s, &w), "{name} {w:?}");
            }
        }
    }
}

#[test]
fn reach_matches_admits() {
    let mut rng = stream(5, 0);
    for (name, s) in zoo() {
        let a = s.alphabet_size();
        for _ in 0..50 {
            let cells: Vec<Symbol> = (0..20).map(|_| rand::Rng::random_range(&mut rng, 0..a as Symbol)).collect();
            let reach = s.reach(&cells);
            for (start, &end) in reach.iter().enumerate() {
                assert!(s.admits(&cells[start..end]), "{name} {cells:?} {start}");
                if end < cells.len() {
                    assert!(!s.admits(&cells[start..=end]), "{name} {cells:?} {start}");
                }
            }
        }
    }
}

#[test]
fn field_dips_at_the_foreign_cell() {
    let s = SftSpec::monochrome(2, 0).unwrap();
    let f = defect_field(&s, &digits(2, "000100")).unwrap();
    assert_eq!(f.values()[3], FieldValue { value: 0, saturated: false });
    assert_eq!(f.defects(), vec![3]);
}

#[test]
fn admissible_configuration_has_no_defects() {
    let s = SftSpec::checkerboard();
    let f = defect_field(&s, &digits(2, "0101010101")).unwrap();
    assert!(f.values().iter().all(|v| v.saturated));
    assert!(f.defects().is_empty());
    let d = Decomposition::monochrome(3).unwrap();
    assert!(classify_interfaces(&d, &digits(3, "2222222")).unwrap().positions.is_empty());
}

/// Cells -10..=25: ones up to 2, zeros 3..=7, twos 8..=12, zeros after.
fn interface_word() -> Configuration {
    let cells: Vec<Symbol> = (-10..=25)
        .map(|k| match k {
            ..=2 => 1,
            3..=7 => 0,
            8..=12 => 2,
            _ => 0,
        })
        .collect();
    config(3, cells, -10)
}

#[test]
fn interface_figure_values_and_labels() {
    let c = interface_word();
    let d = Decomposition::monochrome(3).unwrap();
    assert_eq!(d.alpha(), 1);
    let f = defect_field(&d, &c).unwrap();
    let expected = [7, 5, 3, 1, 2, 4, 5, 3, 1, 2, 4, 5, 3, 1, 2, 4, 6];
    for (i, &e) in expected.iter().enumerate() {
        let v = f.values()[(i as i64 - 1 - f.origin()) as usize];
        assert_eq!(v, FieldValue { value: e, saturated: false }, "cell {}", i as i64 - 1);
    }
    let r = classify_interfaces(&d, &c).unwrap();
    assert_eq!(r.positions, vec![2, 7, 12]);
    let labels: Vec<String> = (0..3).map(|i| r.label_text(i)).collect();
    assert_eq!(labels, ["1-0", "0-2", "2-0"]);
}

#[test]
fn monochrome_step_is_one_particle() {
    let d = Decomposition::monochrome(2).unwrap();
    let r = classify_interfaces(&d, &digits(2, "0011")).unwrap();
    assert_eq!(r.positions, vec![1]);
    assert_eq!(r.label_text(0), "0-1");
}

/// Black is 0 and white is 1; cells -9..=24 around the pictured word.
fn dislocation_word() -> Configuration {
    let pictured: [Symbol; 18] = [0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0];
    let mut cells: Vec<Symbol> = (0..8).map(|i| (i % 2) as Symbol).collect();
    cells.extend_from_slice(&pictured);
    cells.extend((0..8).map(|i| ((i + 1) % 2) as Symbol));
    config(2, cells, -9)
}

#[test]
fn dislocation_figure_values_and_labels() {
    let c = dislocation_word();
    assert_eq!(c.at(-1), 0);
    assert_eq!(c.at(16), 0);
    let s = SftSpec::checkerboard();
    let f = defect_field(&s, &c).unwrap();
    let expected = [7, 5, 3, 1, 2, 4, 6, 5, 3, 1, 2, 4, 5, 3, 1, 2, 4, 6];
    for (i, &e) in expected.iter().enumerate() {
        let v = f.values()[(i as i64 - 1 - f.origin()) as usize];
        assert_eq!(v.value, e, "cell {}", i as i64 - 1);
    }
    let r = classify_dislocations(&s, &c).unwrap();
    assert_eq!(r.kind, ReadingKind::Dislocations);
    assert_eq!(r.positions, vec![2, 8, 13]);
    let labels: Vec<String> = (0..3).map(|i| r.label_text(i)).collect();
    assert_eq!(labels, ["1-0", "0-1", "0-1"]);
}

#[test]
fn periods() {
    let p = compute_period(&SftSpec::checkerboard()).unwrap();
    assert_eq!(p.period(), 2);
    assert_eq!(p.classes(&SftSpec::checkerboard()), vec![vec![vec![0]], vec![vec![1]]]);
    assert_eq!(compute_period(&SftSpec::full_shift(2).unwrap()).unwrap().period(), 1);
    assert_eq!(compute_period(&SftSpec::full_shift(3).unwrap()).unwrap().period(), 1);
    let orbit = SftSpec::orbit(2, &[0, 1, 1]).unwrap();
    assert_eq!(compute_period(&orbit).unwrap().period(), 3);
    assert_eq!(compute_period(&SftSpec::orbit(2, &[0, 1, 0, 1]).unwrap()).unwrap().period(), 2);
    assert_eq!(compute_period(&SftSpec::orbit(3, &[0, 1, 2, 2, 1]).unwrap()).unwrap().period(), 5);
    // 0*1* is not transitive.
    assert!(matches!(compute_period(&sft(2, &[&[1, 0]])), Err(Error::InvalidSubshift(_))));
    assert!(classify_dislocations(&SftSpec::full_shift(2).unwrap(), &digits(2, "01")).is_err());
}

#[test]
fn decomposition_lengths_and_invariance() {
    let d = Decomposition::zeros_ones_checkerboard();
    assert_eq!(d.alpha(), 2);
    assert_eq!(d.kind(), ReadingKind::Mixed);
    assert!(Decomposition::new(vec![SftSpec::full_shift(2).unwrap(), SftSpec::checkerboard()]).is_err());
    let checker = Decomposition::new(vec![SftSpec::checkerboard()]).unwrap();
    assert!(checker.invariant_up_to(&make_elementary(184), 8).unwrap());
    assert!(!checker.invariant_up_to(&make_elementary(0), 4).unwrap());
    assert!(Decomposition::monochrome(3).unwrap().invariant_up_to(&make_cyclic(3).unwrap(), 6).unwrap());
}

#[test]
fn traffic_dislocations_match_morphism() {
    let s = SftSpec::checkerboard();
    let ps = traffic_system();
    let mu = MeasureSpec::uniform(2).unwrap();
    let sampler = mu.sampler().unwrap();
    let mut rng = stream(17, 0);
    for _ in 0..1000 {
        let c = config(2, sampler.sample(40, &mut rng), 0);
        let reading = classify_dislocations(&s, &c).unwrap();
        let projected = project(&ps, &c).unwrap();
        for k in 2..37 {
            let particle = projected.at(k);
            let found = reading.positions.iter().position(|&p| p == k);
            match found {
                None => assert_eq!(particle, 0, "{c} at {k}"),
                Some(i) => assert_eq!(format!("p{}", reading.label_text(i).replace('-', "")), ps.particle_name(particle)),
            }
        }
    }
}

/// Centres of the minimal non-admissible factors of `word`.
fn forbidden_centres(s: &SftSpec, word: &[Symbol]) -> Vec<i64> {
    let mut out = Vec::new();
    for a in 0..word.len() {
        for b in a..word.len() {
            let u = &word[a..=b];
            if !s.admits(u) && s.admits(&u[1..]) && s.admits(&u[..u.len() - 1]) {
                out.push((a + (u.len() - 1) / 2) as i64);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[test]
fn defects_sit_at_forbidden_centres() {
    for (name, s) in zoo() {
        let a = s.alphabet_size();
        let two_letter = s.forbidden().iter().all(|w| w.len() <= 2) && name != "tail";
        let max_len = if a == 2 { 12 } else { 8 };
        for len in 1..=max_len {
            for i in 0..a.pow(len as u32) {
                let w = index_word(i, len, a);
                let defects = defect_field(&s, &config(a, w.clone(), 0)).unwrap().defects();
                let centres = forbidden_centres(&s, &w);
                assert!(defects.iter().all(|d| centres.contains(d)), "{name} {w:?}");
                let isolated = centres.iter().filter(|&&c| !centres.contains(&(c - 1)) && !centres.contains(&(c + 1)));
                assert!(isolated.clone().all(|c| defects.contains(c)), "{name} {w:?}");
                if two_letter {
                    assert_eq!(defects, centres, "{name} {w:?}");
                }
            }
        }
    }
}

#[test]
fn csv_and_pgm() {
    let d = Decomposition::monochrome(2).unwrap();
    let c = digits(2, "0011");
    let r = classify_interfaces(&d, &c).unwrap();
    assert_eq!(r.to_csv(), "position,left,right\n1,0,1\n");
    let pgm = defect_field(&d, &c).unwrap().to_pgm(2).unwrap();
    assert!(pgm.starts_with(b"P5\n4 2\n255\n"));
    assert_eq!(pgm.len(), b"P5\n4 2\n255\n".len() + 8);
}

proptest! {
    #[test]
    fn labels_are_translation_invariant(cells in prop::collection::vec(0u8..2, 1..40), shift in -50i64..50) {
        let d = Decomposition::zeros_ones_checkerboard();
        let a = classify(&d, &config(2, cells.clone(), 0)).unwrap();
        let b = classify(&d, &config(2, cells, shift)).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        let moved: Vec<i64> = a.positions.iter().map(|p| p + shift).collect();
        prop_assert_eq!(moved, b.positions);
    }

    #[test]
    fn regions_between_defects_are_admissible(cells in prop::collection::vec(0u8..3, 2..40)) {
        for d in [Decomposition::monochrome(3).unwrap()] {
            let c = config(3, cells.clone(), 0);
            let r = classify(&d, &c).unwrap();
            for pair in r.positions.windows(2) {
                let region = &cells[(pair[0] + 1) as usize..=pair[1] as usize];
                prop_assert!(d.domains().iter().any(|s| s.admits(region)), "{:?} {:?}", cells, pair);
            }
        }
    }

    #[test]
    fn checkerboard_regions_are_admissible(cells in prop::collection::vec(0u8..2, 2..40)) {
        let s = SftSpec::checkerboard();
        let r = classify_dislocations(&s, &config(2, cells.clone(), 0)).unwrap();
        for pair in r.positions.windows(2) {
            prop_assert!(s.admits(&cells[(pair[0] + 1) as usize..=pair[1] as usize]));
        }
    }
}
