//! Alphabets, finite windows onto the infinite lattice, and pattern counts.
//!
//! A [`Configuration`] is a finite window of cells together with an *exact
//! region*: the lattice coordinates on which the window agrees with the
//! evolution of the bi-infinite configuration it was cut from. Each step of a
//! radius-`r` map shrinks the exact region by `r` on both sides, so sampling
//! `N + 2rT` cells leaves `N` trustworthy cells after `T` steps.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::rng::Stream;

pub type Symbol = u8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    names: Arc<[String]>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > 256 {
            return Err(Error::Config(format!("alphabet size {size} outside 1..=256")));
        }
        Ok(Self { names: (0..size).map(|i| i.to_string()).collect() })
    }

    pub fn with_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Arc<[String]> = names.into_iter().map(Into::into).collect();
        if names.is_empty() || names.len() > 256 {
            return Err(Error::Config(format!("alphabet size {} outside 1..=256", names.len())));
        }
        Ok(Self { names })
    }

    /// `{0, +1, -1}` stored as symbols `0, 1, 2`.
    pub fn gliders() -> Self {
        Self::with_names(["0", "+1", "-1"]).expect("three names")
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, symbol: Symbol) -> &str {
        &self.names[symbol as usize]
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        (symbol as usize) < self.size()
    }

    /// Parses a symbol either by display name or by its integer index.
    pub fn parse_symbol(&self, token: &str) -> Option<Symbol> {
        if let Some(i) = self.names.iter().position(|n| n == token) {
            return Some(i as Symbol);
        }
        token.parse::<usize>().ok().filter(|&i| i < self.size()).map(|i| i as Symbol)
    }
}

/// Encoding of the gliders alphabet.
pub mod glider {
    use super::Symbol;

    pub const ZERO: Symbol = 0;
    pub const PLUS: Symbol = 1;
    pub const MINUS: Symbol = 2;

    #[inline]
    pub fn value(symbol: Symbol) -> i32 {
        match symbol {
            PLUS => 1,
            MINUS => -1,
            _ => 0,
        }
    }

    #[inline]
    pub fn from_value(v: i32) -> Symbol {
        match v {
            1 => PLUS,
            -1 => MINUS,
            _ => ZERO,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    alphabet: Alphabet,
    cells: Vec<Symbol>,
    origin: i64,
    exact_lo: i64,
    exact_hi: i64,
}

impl Configuration {
    /// A window whose every cell is exact.
    pub fn new(alphabet: Alphabet, cells: Vec<Symbol>, origin: i64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Infeasible("empty configuration window".into()));
        }
        let hi = origin + cells.len() as i64 - 1;
        Self::with_exact(alphabet, cells, origin, origin, hi)
    }

    pub fn with_exact(
        alphabet: Alphabet,
        cells: Vec<Symbol>,
        origin: i64,
        exact_lo: i64,
        exact_hi: i64,
    ) -> Result<Self> {
        if let Some(&bad) = cells.iter().find(|&&s| !alphabet.contains(s)) {
            return Err(Error::SymbolOutOfRange { symbol: bad, size: alphabet.size() });
        }
        let last = origin + cells.len() as i64 - 1;
        if exact_lo > exact_hi || exact_lo < origin || exact_hi > last {
            return Err(Error::Infeasible(format!(
                "exact region [{exact_lo}, {exact_hi}] not inside window [{origin}, {last}]"
            )));
        }
        Ok(Self { alphabet, cells, origin, exact_lo, exact_hi })
    }

    /// Builds a configuration from already validated parts.
    pub(crate) fn from_parts(
        alphabet: Alphabet,
        cells: Vec<Symbol>,
        origin: i64,
        exact_lo: i64,
        exact_hi: i64,
    ) -> Self {
        debug_assert!(exact_lo <= exact_hi);
        debug_assert!(exact_lo >= origin && exact_hi < origin + cells.len() as i64);
        Self { alphabet, cells, origin, exact_lo, exact_hi }
    }

    /// Parses a word such as `"0110"` (one digit per cell) with origin 0.
    pub fn from_digits(alphabet: Alphabet, digits: &str) -> Result<Self> {
        let cells = digits
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as Symbol)
                    .ok_or_else(|| Error::Config(format!("bad cell character {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, cells, 0)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn cells(&self) -> &[Symbol] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<Symbol> {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// Last lattice coordinate held by the window.
    pub fn end(&self) -> i64 {
        self.origin + self.cells.len() as i64 - 1
    }

    pub fn exact(&self) -> (i64, i64) {
        (self.exact_lo, self.exact_hi)
    }

    pub fn exact_width(&self) -> usize {
        (self.exact_hi - self.exact_lo + 1) as usize
    }

    pub fn exact_cells(&self) -> &[Symbol] {
        let a = (self.exact_lo - self.origin) as usize;
        let b = (self.exact_hi - self.origin) as usize;
        &self.cells[a..=b]
    }

    pub fn get(&self, coord: i64) -> Option<Symbol> {
        let i = coord - self.origin;
        if i < 0 {
            return None;
        }
        self.cells.get(i as usize).copied()
    }

    /// Cell at lattice coordinate `coord`; panics outside the window.
    #[inline]
    pub fn at(&self, coord: i64) -> Symbol {
        self.cells[(coord - self.origin) as usize]
    }

    /// Restricts the exact region to `[lo, hi]` (must lie inside the current one).
    pub fn restrict_exact(&self, lo: i64, hi: i64) -> Result<Self> {
        if lo > hi || lo < self.exact_lo || hi > self.exact_hi {
            return Err(Error::Infeasible(format!(
                "[{lo}, {hi}] is not inside the exact region [{}, {}]",
                self.exact_lo, self.exact_hi
            )));
        }
        Ok(Self { exact_lo: lo, exact_hi: hi, ..self.clone() })
    }

    /// Light-cone contract: one step of a radius-`r` map loses `r` exact cells per side.
    pub fn shrink_exact(&self, r: usize) -> Result<Self> {
        let (lo, hi) = shrunk_region(self.exact_lo, self.exact_hi, r)?;
        Ok(Self { exact_lo: lo, exact_hi: hi, ..self.clone() })
    }
}

pub(crate) fn shrunk_region(lo: i64, hi: i64, r: usize) -> Result<(i64, i64)> {
    let width = hi - lo + 1;
    if r > 0 && width <= 2 * r as i64 {
        return Err(Error::RegionExhausted { lo, hi, radius: r });
    }
    Ok((lo + r as i64, hi - r as i64))
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = self.alphabet.size() > 10;
        for (i, &s) in self.cells.iter().enumerate() {
            if wide && i > 0 {
                f.write_str(" ")?;
            }
            if wide {
                write!(f, "{}", self.alphabet.name(s))?;
            } else {
                write!(f, "{s}")?;
            }
        }
        Ok(())
    }
}

/// A nonempty finite word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<Symbol>);

impl Pattern {
    pub fn new(word: Vec<Symbol>) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::Config("patterns must be nonempty".into()));
        }
        Ok(Self(word))
    }

    pub fn from_digits(digits: &str) -> Result<Self> {
        let word = digits
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as Symbol)
                    .ok_or_else(|| Error::Config(format!("bad pattern character {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(word)
    }

    pub fn word(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Occurrence count over a number of admissible left ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frequency {
    pub count: u64,
    pub positions: u64,
}

impl Frequency {
    pub fn value(&self) -> f64 {
        self.count as f64 / self.positions as f64
    }
}

/// Frequency of a set of patterns inside the exact region of `c`.
///
/// Left ends range over `[exact_lo, exact_hi - m + 1]` where `m` is the
/// longest pattern; a position counts once if any pattern occurs there.
pub fn freq(patterns: &[Pattern], c: &Configuration) -> Result<Frequency> {
    let m = patterns.iter().map(Pattern::len).max().ok_or_else(|| {
        Error::Config("frequency of an empty pattern set".into())
    })?;
    let region = c.exact_cells();
    if m > region.len() {
        return Err(Error::PatternTooLong { len: m, width: region.len() });
    }
    let positions = region.len() - m + 1;
    let count = (0..positions)
        .filter(|&i| patterns.iter().any(|p| region[i..].starts_with(p.word())))
        .count();
    Ok(Frequency { count: count as u64, positions: positions as u64 })
}

/// Samples `n_cells + 2 * margin` cells from `measure`.
///
/// The window occupies `[-margin, n_cells + margin - 1]`, fully exact, so that
/// after absorbing `margin` cells of light cone the exact region is `[0, n_cells - 1]`.
pub fn window_sample(
    measure: &MeasureSpec,
    alphabet: &Alphabet,
    n_cells: usize,
    margin: usize,
    rng: &mut Stream,
) -> Result<Configuration> {
    if measure.alphabet_size() != alphabet.size() {
        return Err(Error::AlphabetMismatch {
            expected: alphabet.size(),
            found: measure.alphabet_size(),
        });
    }
    if n_cells == 0 {
        return Err(Error::Infeasible("window_sample needs at least one cell".into()));
    }
    let total = n_cells + 2 * margin;
    let cells = measure.sampler()?.sample(total, rng);
    let origin = -(margin as i64);
    let hi = origin + total as i64 - 1;
    Ok(Configuration::from_parts(alphabet.clone(), cells, origin, origin, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn binary() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    #[test]
    fn shrink_examples() {
        let c = Configuration::new(binary(), vec![0; 100], 0).unwrap();
        assert_eq!(c.shrink_exact(1).unwrap().exact(), (1, 98));
        assert_eq!(c.shrink_exact(0).unwrap().exact(), (0, 99));
        let d = Configuration::new(binary(), vec![0; 4], 0).unwrap();
        assert!(matches!(d.shrink_exact(2), Err(Error::RegionExhausted { .. })));
    }

    #[test]
    fn freq_examples() {
        let c = Configuration::from_digits(binary(), "110110").unwrap();
        let f = freq(&[Pattern::from_digits("11").unwrap()], &c).unwrap();
        assert_eq!((f.count, f.positions), (2, 5));

        let z = Configuration::from_digits(binary(), "0000000").unwrap();
        assert_eq!(freq(&[Pattern::from_digits("0").unwrap()], &z).unwrap().value(), 1.0);

        let alt = Configuration::from_digits(binary(), "0101").unwrap();
        let set = [Pattern::from_digits("01").unwrap(), Pattern::from_digits("10").unwrap()];
        let f = freq(&set, &alt).unwrap();
        assert_eq!((f.count, f.positions), (3, 3));
    }

    #[test]
    fn freq_rejects_long_patterns() {
        let c = Configuration::from_digits(binary(), "01").unwrap();
        assert!(freq(&[Pattern::from_digits("010").unwrap()], &c).is_err());
    }

    #[test]
    fn exact_region_must_lie_in_window() {
        assert!(Configuration::with_exact(binary(), vec![0; 5], 0, 1, 5).is_err());
        assert!(Configuration::with_exact(binary(), vec![0; 5], 0, 3, 2).is_err());
        assert!(Configuration::with_exact(binary(), vec![0, 2], 0, 0, 1).is_err());
    }

    #[test]
    fn bernoulli_without_zero_mass_never_samples_zero() {
        let m = MeasureSpec::gliders_bernoulli(0.5, 0.0, 0.5).unwrap();
        let c = window_sample(&m, &Alphabet::gliders(), 4, 0, &mut stream(3, 0)).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.cells().iter().all(|&s| s != glider::ZERO));
    }

    #[test]
    fn periodic_dirac_window_is_a_factor_of_the_orbit() {
        let m = MeasureSpec::periodic_dirac(vec![0, 1], 2).unwrap();
        for seed in 0..10 {
            let c = window_sample(&m, &binary(), 4, 1, &mut stream(seed, 0)).unwrap();
            assert_eq!(c.len(), 6);
            assert_eq!(c.exact(), (-1, 4));
            assert!(c.cells().windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn bernoulli_symbol_frequency() {
        let m = MeasureSpec::bernoulli(vec![0.6, 0.4]).unwrap();
        let c = window_sample(&m, &binary(), 1_000_000, 0, &mut stream(11, 0)).unwrap();
        let f = freq(&[Pattern::from_digits("0").unwrap()], &c).unwrap().value();
        // 3 sigma for n = 1e6 is about 0.0015
        assert!((f - 0.6).abs() < 0.002, "{f}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let a = window_sample(&m, &binary(), 500, 7, &mut stream(5, 2)).unwrap();
        let b = window_sample(&m, &binary(), 500, 7, &mut stream(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn measure_alphabet_mismatch_is_reported() {
        let m = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let r = window_sample(&m, &Alphabet::gliders(), 4, 0, &mut stream(0, 0));
        assert!(matches!(r, Err(Error::AlphabetMismatch { .. })));
    }
}
