//! Local rules, deterministic and probabilistic stepping, and the named automata.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{glider, shrunk_region, Alphabet, Configuration, Symbol};
use crate::measures::{MarkovSpec, MeasureSpec, Sampler};
use crate::rng::Stream;

const MAX_TABLE: usize = 1 << 24;

/// A local map `A^N -> B` stored over the contiguous span `[lo, hi]` of `N`.
///
/// The table index of a neighborhood word is its base-`|A|` value with the
/// leftmost cell most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalRule {
    input: Alphabet,
    output: Alphabet,
    lo: i64,
    hi: i64,
    table: Vec<Symbol>,
}

impl LocalRule {
    /// Builds a rule from an arbitrary finite neighborhood.
    ///
    /// `table` is listed in lexicographic order of `offsets` (first offset most
    /// significant). Offsets need not be contiguous or sorted.
    pub fn new(input: Alphabet, output: Alphabet, offsets: &[i64], table: Vec<Symbol>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidRule("empty neighborhood".into()));
        }
        let mut sorted = offsets.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != offsets.len() {
            return Err(Error::InvalidRule("repeated neighborhood offset".into()));
        }
        let a = input.size();
        let expected = table_len(a, offsets.len())?;
        if table.len() != expected {
            return Err(Error::InvalidRule(format!(
                "table has {} entries, expected {expected}",
                table.len()
            )));
        }
        if let Some(&s) = table.iter().find(|&&s| !output.contains(s)) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: output.size() });
        }
        let lo = sorted[0];
        let hi = *sorted.last().unwrap();
        let span = (hi - lo + 1) as usize;
        let full = table_len(a, span)?;
        let mut expanded = Vec::with_capacity(full);
        for idx in 0..full {
            let word = digits(idx, span, a);
            let sub = offsets.iter().fold(0usize, |acc, &o| acc * a + word[(o - lo) as usize] as usize);
            expanded.push(table[sub]);
        }
        Ok(Self { input, output, lo, hi, table: expanded })
    }

    /// Builds a rule on the contiguous neighborhood `[lo, lo + len - 1]` from a function of the window.
    pub fn from_fn(
        input: Alphabet,
        output: Alphabet,
        lo: i64,
        len: usize,
        f: impl Fn(&[Symbol]) -> Symbol,
    ) -> Result<Self> {
        let a = input.size();
        let n = table_len(a, len)?;
        let table = (0..n).map(|i| f(&digits(i, len, a))).collect();
        let offsets: Vec<i64> = (lo..lo + len as i64).collect();
        Self::new(input, output, &offsets, table)
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    /// Contiguous neighborhood offsets `lo..=hi`.
    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub fn span(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn radius(&self) -> usize {
        self.lo.unsigned_abs().max(self.hi.unsigned_abs()) as usize
    }

    pub fn table(&self) -> &[Symbol] {
        &self.table
    }

    /// Output for a neighborhood word of length `span()`.
    #[inline]
    pub fn eval(&self, word: &[Symbol]) -> Symbol {
        let a = self.input.size();
        self.table[word.iter().fold(0usize, |acc, &s| acc * a + s as usize)]
    }

    /// Image of every full neighborhood inside `cells`; output `i` uses `cells[i..i + span]`.
    pub fn apply_cells(&self, cells: &[Symbol]) -> Vec<Symbol> {
        let m = self.span();
        if cells.len() < m {
            return Vec::new();
        }
        let table = &self.table;
        let mut out = Vec::with_capacity(cells.len() - m + 1);
        rolling_indices(cells, m, self.input.size(), |idx| out.push(table[idx]));
        out
    }

    /// Applies the rule to a configuration, shrinking its exact region by the radius.
    pub fn apply(&self, c: &Configuration) -> Result<Configuration> {
        if c.alphabet().size() != self.input.size() {
            return Err(Error::AlphabetMismatch { expected: self.input.size(), found: c.alphabet().size() });
        }
        let (lo, hi) = c.exact();
        let (lo, hi) = shrunk_region(lo, hi, self.radius())?;
        let cells = self.apply_cells(c.cells());
        Ok(Configuration::from_parts(self.output.clone(), cells, c.origin() - self.lo, lo, hi))
    }

    /// Text form: `alphabet`, `output`, `offsets` and `table` lines.
    pub fn to_text(&self) -> String {
        let offsets: Vec<String> = self.offsets().map(|o| o.to_string()).collect();
        let table: Vec<String> = self.table.iter().map(|s| s.to_string()).collect();
        format!(
            "alphabet {}\noutput {}\noffsets {}\ntable {}\n",
            self.input.size(),
            self.output.size(),
            offsets.join(" "),
            table.join(" ")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut alphabet = None;
        let mut output = None;
        let mut offsets = None;
        let mut table = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let nums = |what: &str| -> Result<Vec<i64>> {
                rest.split_whitespace()
                    .map(|t| t.parse::<i64>().map_err(|_| Error::InvalidRule(format!("bad {what} entry {t:?}"))))
                    .collect()
            };
            match key {
                "alphabet" => alphabet = nums("alphabet")?.first().copied(),
                "output" => output = nums("output")?.first().copied(),
                "offsets" => offsets = Some(nums("offsets")?),
                "table" => table = Some(nums("table")?),
                other => return Err(Error::InvalidRule(format!("unknown rule key {other:?}"))),
            }
        }
        let a = alphabet.ok_or_else(|| Error::InvalidRule("missing alphabet line".into()))?;
        let size = |n: i64| usize::try_from(n).map_err(|_| Error::InvalidRule("negative size".into()));
        let input = Alphabet::new(size(a)?)?;
        let output = Alphabet::new(size(output.unwrap_or(a))?)?;
        let offsets = offsets.ok_or_else(|| Error::InvalidRule("missing offsets line".into()))?;
        let table = table
            .ok_or_else(|| Error::InvalidRule("missing table line".into()))?
            .into_iter()
            .map(|s| Symbol::try_from(s).map_err(|_| Error::InvalidRule(format!("bad table symbol {s}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(input, output, &offsets, table)
    }
}

fn table_len(a: usize, len: usize) -> Result<usize> {
    a.checked_pow(len as u32)
        .filter(|&n| n <= MAX_TABLE)
        .ok_or_else(|| Error::InvalidRule(format!("table of {a}^{len} entries is too large")))
}

fn digits(mut idx: usize, len: usize, a: usize) -> Vec<Symbol> {
    let mut w = vec![0; len];
    for slot in w.iter_mut().rev() {
        *slot = (idx % a) as Symbol;
        idx /= a;
    }
    w
}

/// Calls `emit` with the index of every length-`m` window of `cells`, left to right.
#[inline]
fn rolling_indices(cells: &[Symbol], m: usize, a: usize, mut emit: impl FnMut(usize)) {
    let high = a.pow(m as u32 - 1);
    let mut idx = cells[..m - 1].iter().fold(0usize, |acc, &s| acc * a + s as usize);
    for i in 0..=cells.len() - m {
        idx = idx * a + cells[i + m - 1] as usize;
        emit(idx);
        idx -= cells[i] as usize * high;
    }
}

// ---------------------------------------------------------------- PCA

/// Law of the field of rule indices drawn at each step.
#[derive(Clone, Debug, PartialEq)]
pub enum RuleLaw {
    /// Each cell draws rule `i` independently with probability `p_i`.
    Independent(Vec<f64>),
    /// Stationary Markov chain along the line; `forbidden` pairs must have zero transition mass.
    MarkovField { chain: MarkovSpec, forbidden: Vec<(usize, usize)> },
}

/// A generalized probabilistic CA: a finite family of rules and a law on rule fields.
#[derive(Clone, Debug)]
pub struct PcaSpec {
    rules: Vec<LocalRule>,
    law: RuleLaw,
    lo: i64,
    hi: i64,
    combined: Vec<Symbol>,
    field: Sampler,
}

impl PartialEq for PcaSpec {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.law == other.law
    }
}

impl PcaSpec {
    pub fn new(rules: Vec<LocalRule>, law: RuleLaw) -> Result<Self> {
        let first = rules.first().ok_or_else(|| Error::InvalidRule("PCA needs at least one rule".into()))?;
        let alphabet = first.input.clone();
        if rules.iter().any(|r| r.input.size() != alphabet.size() || r.output.size() != alphabet.size()) {
            return Err(Error::InvalidRule("PCA rules must share one alphabet".into()));
        }
        let field_measure = match &law {
            RuleLaw::Independent(p) => {
                if p.len() != rules.len() {
                    return Err(Error::InvalidRule("one probability per rule is required".into()));
                }
                MeasureSpec::bernoulli(p.clone())?
            }
            RuleLaw::MarkovField { chain, forbidden } => {
                if chain.alphabet_size() != rules.len() || chain.memory() != 1 {
                    return Err(Error::InvalidRule("rule field chain must be first order over the rules".into()));
                }
                for &(i, j) in forbidden {
                    if i >= rules.len() || j >= rules.len() {
                        return Err(Error::InvalidRule(format!("forbidden pair ({i}, {j}) out of range")));
                    }
                    if chain.transition()[i * rules.len() + j] != 0.0 {
                        return Err(Error::InvalidRule(format!("forbidden pair ({i}, {j}) has positive mass")));
                    }
                }
                MeasureSpec::Markov(chain.clone())
            }
        };
        let lo = rules.iter().map(|r| r.lo).min().unwrap().min(0);
        let hi = rules.iter().map(|r| r.hi).max().unwrap().max(0);
        let span = (hi - lo + 1) as usize;
        let a = alphabet.size();
        let per_rule = table_len(a, span)?;
        let mut combined = Vec::with_capacity(per_rule * rules.len());
        for r in &rules {
            for idx in 0..per_rule {
                let w = digits(idx, span, a);
                let start = (r.lo - lo) as usize;
                combined.push(r.eval(&w[start..start + r.span()]));
            }
        }
        let field = field_measure.sampler()?;
        Ok(Self { rules, law, lo, hi, combined, field })
    }

    pub fn rules(&self) -> &[LocalRule] {
        &self.rules
    }

    pub fn law(&self) -> &RuleLaw {
        &self.law
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.rules[0].input
    }

    /// Common contiguous neighborhood of all rules.
    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub fn radius(&self) -> usize {
        self.lo.unsigned_abs().max(self.hi.unsigned_abs()) as usize
    }

    /// Draws a rule field of length `n`.
    pub fn sample_field(&self, n: usize, rng: &mut Stream) -> Vec<Symbol> {
        self.field.sample(n, rng)
    }

    /// Applies a given rule field; `field[i]` is the rule at output cell `i`.
    pub fn apply_with_field(&self, c: &Configuration, field: &[Symbol]) -> Result<Configuration> {
        let a = self.alphabet().size();
        if c.alphabet().size() != a {
            return Err(Error::AlphabetMismatch { expected: a, found: c.alphabet().size() });
        }
        let (lo, hi) = c.exact();
        let (lo, hi) = shrunk_region(lo, hi, self.radius())?;
        let m = (self.hi - self.lo + 1) as usize;
        let n_out = c.len().saturating_sub(m - 1);
        if field.len() != n_out {
            return Err(Error::Infeasible(format!("rule field has {} cells, expected {n_out}", field.len())));
        }
        let per_rule = a.pow(m as u32);
        let mut out = Vec::with_capacity(n_out);
        let mut i = 0;
        rolling_indices(c.cells(), m, a, |idx| {
            out.push(self.combined[field[i] as usize * per_rule + idx]);
            i += 1;
        });
        Ok(Configuration::from_parts(c.alphabet().clone(), out, c.origin() - self.lo, lo, hi))
    }
}

// ---------------------------------------------------------------- dynamics

/// A deterministic CA or a generalized PCA.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Deterministic(LocalRule),
    Probabilistic(PcaSpec),
}

/// One step together with the rule field that produced it (PCA only).
#[derive(Clone, Debug)]
pub struct Step {
    pub config: Configuration,
    pub field: Option<Vec<Symbol>>,
}

impl Dynamics {
    pub fn alphabet(&self) -> &Alphabet {
        match self {
            Self::Deterministic(r) => &r.input,
            Self::Probabilistic(p) => p.alphabet(),
        }
    }

    pub fn radius(&self) -> usize {
        match self {
            Self::Deterministic(r) => r.radius(),
            Self::Probabilistic(p) => p.radius(),
        }
    }

    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        match self {
            Self::Deterministic(r) => r.offsets(),
            Self::Probabilistic(p) => p.offsets(),
        }
    }

    /// The deterministic constituent rules (one for a CA).
    pub fn constituents(&self) -> Vec<&LocalRule> {
        match self {
            Self::Deterministic(r) => vec![r],
            Self::Probabilistic(p) => p.rules().iter().collect(),
        }
    }

    pub fn step(&self, c: &Configuration, rng: &mut Stream) -> Result<Step> {
        match self {
            Self::Deterministic(r) => Ok(Step { config: step(r, c)?, field: None }),
            Self::Probabilistic(p) => {
                let (config, field) = step_pca(p, c, rng)?;
                Ok(Step { config, field: Some(field) })
            }
        }
    }

    /// `t` composed steps; `observer(s, &c)` sees the configuration after step `s` for `s = 1..=t`.
    pub fn iterate(
        &self,
        c: Configuration,
        t: usize,
        rng: &mut Stream,
        mut observer: impl FnMut(usize, &Configuration),
    ) -> Result<Configuration> {
        let mut c = c;
        for s in 1..=t {
            c = self.step(&c, rng)?.config;
            observer(s, &c);
        }
        Ok(c)
    }
}

pub fn step(rule: &LocalRule, c: &Configuration) -> Result<Configuration> {
    if rule.input.size() != rule.output.size() {
        return Err(Error::InvalidRule("a CA rule must map the alphabet to itself".into()));
    }
    rule.apply(c)
}

pub fn step_pca(pca: &PcaSpec, c: &Configuration, rng: &mut Stream) -> Result<(Configuration, Vec<Symbol>)> {
    let m = (pca.hi - pca.lo + 1) as usize;
    let n_out = c.len().saturating_sub(m - 1);
    let (lo, hi) = c.exact();
    shrunk_region(lo, hi, pca.radius())?;
    let field = pca.sample_field(n_out, rng);
    let next = pca.apply_with_field(c, &field)?;
    Ok((next, field))
}

// ---------------------------------------------------------------- built-ins

fn binary() -> Alphabet {
    Alphabet::new(2).expect("nonzero size")
}

/// Elementary CA number `n` on `{0, 1}` with neighborhood `{-1, 0, 1}`.
pub fn make_elementary(n: u8) -> LocalRule {
    let table = (0..8).map(|i| (n >> i) & 1).collect();
    LocalRule::new(binary(), binary(), &[-1, 0, 1], table).expect("elementary table is well formed")
}

/// `x_0 + 1 mod n` if a neighbor holds `x_0 + 1`, else `x_0`.
pub fn make_cyclic(n: usize) -> Result<LocalRule> {
    if !(2..=36).contains(&n) {
        return Err(Error::InvalidRule(format!("cyclic CA needs 2..=36 states, got {n}")));
    }
    let a = Alphabet::new(n)?;
    LocalRule::from_fn(a.clone(), a, -1, 3, |w| {
        let next = ((w[1] as usize + 1) % n) as Symbol;
        if w[0] == next || w[2] == next {
            next
        } else {
            w[1]
        }
    })
}

/// `(v_-, v_+)`-gliders automaton on `{0, +1, -1}` with neighborhood `[-v_+, -v_-]`.
pub fn make_gliders(v_minus: i64, v_plus: i64) -> Result<LocalRule> {
    if v_minus >= v_plus {
        return Err(Error::InvalidRule(format!("gliders need v_- < v_+, got ({v_minus}, {v_plus})")));
    }
    let span = (v_plus - v_minus + 1) as usize;
    let a = Alphabet::gliders();
    LocalRule::from_fn(a.clone(), a, -v_plus, span, |w| {
        let x = |j: usize| glider::value(w[j]);
        let last = span - 1;
        // +1 arriving from the left end: every partial sum to its right stays >= 0.
        if x(0) == 1 {
            let mut s = 0;
            if (1..=last).all(|j| {
                s += x(j);
                s >= 0
            }) {
                return glider::PLUS;
            }
        }
        // -1 arriving from the right end: every partial sum to its left stays <= 0.
        if x(last) == -1 {
            let mut s = 0;
            if (0..last).rev().all(|j| {
                s += x(j);
                s <= 0
            }) {
                return glider::MINUS;
            }
        }
        glider::ZERO
    })
}

/// One-sided captive rule from `f(a, b)` given as a row-major `A x A` table.
pub fn make_one_sided_captive(size: usize, f: &[Symbol]) -> Result<LocalRule> {
    if f.len() != size * size {
        return Err(Error::InvalidRule(format!("captive table needs {} entries", size * size)));
    }
    for a in 0..size {
        for b in 0..size {
            let v = f[a * size + b] as usize;
            if v != a && v != b {
                return Err(Error::InvalidRule(format!("f({a}, {b}) = {v} is not captive")));
            }
        }
    }
    let alpha = Alphabet::new(size)?;
    LocalRule::new(alpha.clone(), alpha, &[0, 1], f.to_vec())
}

/// A uniformly random one-sided captive table.
pub fn random_one_sided_captive(size: usize, rng: &mut Stream) -> Vec<Symbol> {
    let mut f = Vec::with_capacity(size * size);
    for a in 0..size {
        for b in 0..size {
            f.push(if rng.random_bool(0.5) { a as Symbol } else { b as Symbol });
        }
    }
    f
}

/// Random-walk CA on `(Z/2Z)^2`, symbol `(a, b)` encoded as `a + 2b`.
pub fn make_random_walk_ca() -> LocalRule {
    let a = Alphabet::new(4).expect("nonzero size");
    LocalRule::from_fn(a.clone(), a, -2, 5, |w| {
        let layer = |s: Symbol| (s & 1, s >> 1);
        let top = layer(w[0]).0 ^ layer(w[4]).0;
        let particle = layer(w[1]) == (0, 1) || layer(w[2]) == (1, 1);
        top + 2 * u8::from(particle)
    })
    .expect("random-walk table is well formed")
}

/// Traffic (#184, probability `p`) and majority (#232, probability `1 - p`) drawn per cell.
pub fn make_fates_pca(p: f64) -> Result<PcaSpec> {
    PcaSpec::new(vec![make_elementary(184), make_elementary(232)], RuleLaw::Independent(vec![p, 1.0 - p]))
}

/// Rule indices of the line-stabilization PCA.
pub mod line {
    pub const IDENTITY: u8 = 0;
    pub const RIGHT: u8 = 1;
    pub const LEFT: u8 = 2;
    /// `(left rule, right rule)` pairs that never occur side by side.
    pub const FORBIDDEN: [(usize, usize); 5] = [(0, 2), (1, 1), (1, 0), (2, 2), (2, 1)];
}

/// Line-stabilization PCA of slope 1/2 with the max-entropy Markov rule field.
pub fn make_line_pca() -> Result<PcaSpec> {
    let b = binary();
    let identity = LocalRule::new(b.clone(), b.clone(), &[0], vec![0, 1])?;
    let alternating = |w: &[Symbol]| w == [0, 1, 0, 1] || w == [1, 0, 1, 0];
    // Takes the right neighbor unless the cell sits inside 0101 / 1010.
    let right = LocalRule::from_fn(b.clone(), b.clone(), -1, 4, |w| if alternating(w) { w[1] } else { w[2] })?;
    // Takes the left neighbor unless the cell sits inside 0101 / 1010.
    let left = LocalRule::from_fn(b.clone(), b, -2, 4, |w| if alternating(w) { w[2] } else { w[1] })?;
    let mut allowed = [[1.0f64; 3]; 3];
    for (i, j) in line::FORBIDDEN {
        allowed[i][j] = 0.0;
    }
    let (transition, stationary) = parry_measure(&allowed)?;
    let chain = MarkovSpec::with_stationary(3, 1, transition, stationary)?;
    PcaSpec::new(
        vec![identity, right, left],
        RuleLaw::MarkovField { chain, forbidden: line::FORBIDDEN.to_vec() },
    )
}

/// Max-entropy Markov chain on a 0/1 adjacency matrix: `(transition, stationary)`.
pub fn parry_measure<const N: usize>(adjacency: &[[f64; N]; N]) -> Result<(Vec<f64>, Vec<f64>)> {
    let power = |left: bool| -> Result<(f64, Vec<f64>)> {
        let mut v = vec![1.0; N];
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let mut w = vec![0.0; N];
            for i in 0..N {
                for j in 0..N {
                    let m = if left { adjacency[j][i] } else { adjacency[i][j] };
                    w[i] += m * v[j];
                }
            }
            // Lazy iteration (A + I) avoids oscillation on periodic graphs.
            w.iter_mut().zip(&v).for_each(|(x, y)| *x += y);
            let norm = w.iter().cloned().fold(0.0, f64::max);
            if norm == 0.0 {
                return Err(Error::InvalidRule("adjacency matrix has no cycle".into()));
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let err = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = norm - 1.0;
            if err < 1e-15 {
                break;
            }
        }
        Ok((lambda, v))
    };
    let (_, right) = power(false)?;
    let (_, left) = power(true)?;
    // Rayleigh quotient for the eigenvalue.
    let av: Vec<f64> = (0..N).map(|i| (0..N).map(|j| adjacency[i][j] * right[j]).sum()).collect();
    let lambda = av.iter().sum::<f64>() / right.iter().sum::<f64>();
    let mut transition = vec![0.0; N * N];
    for i in 0..N {
        for j in 0..N {
            transition[i * N + j] = adjacency[i][j] * right[j] / (lambda * right[i]);
        }
        let s: f64 = transition[i * N..(i + 1) * N].iter().sum();
        transition[i * N..(i + 1) * N].iter_mut().for_each(|x| *x /= s);
    }
    let mut stationary: Vec<f64> = left.iter().zip(&right).map(|(u, v)| u * v).collect();
    let s: f64 = stationary.iter().sum();
    stationary.iter_mut().for_each(|x| *x /= s);
    Ok((transition, stationary))
}

/// Resolves a named rule or PCA: `elementary:N` (or bare `N`), `cyclic:N`,
/// `gliders:V-,V+`, `captive:TABLE/SIZE`, `random-walk`, `fates:P`, `line`.
pub fn builtin(name: &str) -> Result<Dynamics> {
    let name = name.trim();
    let (kind, arg) = name.split_once(':').unwrap_or((name, ""));
    let bad = |what: &str| Error::Config(format!("bad {what} in rule {name:?}"));
    Ok(match kind {
        "elementary" | "eca" => Dynamics::Deterministic(make_elementary(arg.parse().map_err(|_| bad("rule number"))?)),
        "cyclic" => Dynamics::Deterministic(make_cyclic(arg.parse().map_err(|_| bad("state count"))?)?),
        "gliders" => {
            let (m, p) = arg.split_once(',').ok_or_else(|| bad("speed pair"))?;
            Dynamics::Deterministic(make_gliders(
                m.trim().parse().map_err(|_| bad("speed"))?,
                p.trim().parse().map_err(|_| bad("speed"))?,
            )?)
        }
        "captive" => {
            let (table, size) = arg.split_once('/').ok_or_else(|| bad("captive table"))?;
            let size: usize = size.parse().map_err(|_| bad("alphabet size"))?;
            let table = table
                .chars()
                .map(|c| c.to_digit(36).map(|d| d as Symbol).ok_or_else(|| bad("captive table")))
                .collect::<Result<Vec<_>>>()?;
            Dynamics::Deterministic(make_one_sided_captive(size, &table)?)
        }
        "identity" => {
            let n: usize = if arg.is_empty() { 2 } else { arg.parse().map_err(|_| bad("alphabet size"))? };
            let a = Alphabet::new(n)?;
            Dynamics::Deterministic(LocalRule::new(a.clone(), a, &[0], (0..n as Symbol).collect())?)
        }
        "random-walk" => Dynamics::Deterministic(make_random_walk_ca()),
        "fates" => Dynamics::Probabilistic(make_fates_pca(arg.parse().map_err(|_| bad("probability"))?)?),
        "line" => Dynamics::Probabilistic(make_line_pca()?),
        n if n.parse::<u8>().is_ok() && arg.is_empty() => Dynamics::Deterministic(make_elementary(n.parse().unwrap())),
        other => return Err(Error::Config(format!("unknown rule {other:?}"))),
    })
}

impl fmt::Display for LocalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
