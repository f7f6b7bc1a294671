//! Initial measures, cylinder valuations and the `d_M` distance.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{window_sample, Symbol};
use crate::rng::{stream, Stream};
use crate::rules::Dynamics;

const SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// A shift-invariant sampling law on configurations.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    Bernoulli { probs: Vec<f64> },
    Markov(MarkovSpec),
    /// Orbit measure of the periodic configuration `...uuu...`, uniform random phase.
    PeriodicDirac { word: Vec<Symbol>, alphabet_size: usize },
    /// Independent layers; composite symbol is `sum layer_i * stride_i`, first layer least significant.
    Product { layers: Vec<MeasureSpec> },
}

/// Markov measure with memory `k`: the next symbol depends on the previous `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSpec {
    alphabet_size: usize,
    memory: usize,
    /// Row `s` (a `k`-block in base `A`) gives the law of the next symbol.
    transition: Vec<f64>,
    /// Stationary law of `k`-blocks.
    stationary: Vec<f64>,
}

fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
        return Err(Error::InvalidMeasure(format!("{what} has entries outside [0, 1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidMeasure(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl MarkovSpec {
    /// `transition` has `A^memory` rows of length `A`; the stationary law is computed.
    pub fn new(alphabet_size: usize, memory: usize, transition: Vec<f64>) -> Result<Self> {
        let states = Self::state_count(alphabet_size, memory)?;
        if transition.len() != states * alphabet_size {
            return Err(Error::InvalidMeasure(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                states * alphabet_size
            )));
        }
        for row in transition.chunks(alphabet_size) {
            check_probability_vector(row, "transition row")?;
        }
        let stationary = stationary_law(alphabet_size, memory, &transition)?;
        Ok(Self { alphabet_size, memory, transition, stationary })
    }

    /// As [`MarkovSpec::new`] but with a caller-supplied stationary law, which is verified.
    pub fn with_stationary(
        alphabet_size: usize,
        memory: usize,
        transition: Vec<f64>,
        stationary: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::new(alphabet_size, memory, transition)?;
        if stationary.len() != m.stationary.len() {
            return Err(Error::InvalidMeasure("stationary vector has the wrong length".into()));
        }
        check_probability_vector(&stationary, "stationary vector")?;
        let pushed = m.push_forward(&stationary);
        let err = pushed.iter().zip(&stationary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > STATIONARY_TOL {
            return Err(Error::InvalidMeasure(format!(
                "stationary vector is not invariant (error {err:.3e})"
            )));
        }
        m.stationary = stationary;
        Ok(m)
    }

    fn state_count(alphabet_size: usize, memory: usize) -> Result<usize> {
        if memory == 0 {
            return Err(Error::InvalidMeasure("Markov memory must be at least 1".into()));
        }
        alphabet_size
            .checked_pow(memory as u32)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::InvalidMeasure("Markov state space too large".into()))
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    fn states(&self) -> usize {
        self.stationary.len()
    }

    fn push_forward(&self, law: &[f64]) -> Vec<f64> {
        push_forward(self.alphabet_size, self.states(), &self.transition, law)
    }

    fn prob(&self, state: usize, next: usize) -> f64 {
        self.transition[state * self.alphabet_size + next]
    }
}

fn push_forward(a: usize, states: usize, transition: &[f64], law: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; states];
    for (s, &w) in law.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let base = (s * a) % states;
        for b in 0..a {
            out[base + b] += w * transition[s * a + b];
        }
    }
    out
}

fn stationary_law(a: usize, memory: usize, transition: &[f64]) -> Result<Vec<f64>> {
    let states = a.pow(memory as u32);
    // Lazy chain (I + P) / 2 converges for periodic chains too.
    let mut law = vec![1.0 / states as f64; states];
    for _ in 0..200_000 {
        let pushed = push_forward(a, states, transition, &law);
        let next: Vec<f64> = law.iter().zip(&pushed).map(|(x, y)| 0.5 * (x + y)).collect();
        let err = next.iter().zip(&law).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        law = next;
        if err < 1e-15 {
            let s: f64 = law.iter().sum();
            law.iter_mut().for_each(|x| *x /= s);
            return Ok(law);
        }
    }
    Err(Error::InvalidMeasure("stationary law did not converge".into()))
}

impl MeasureSpec {
    pub fn bernoulli(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidMeasure("Bernoulli measure needs at least one symbol".into()));
        }
        check_probability_vector(&probs, "Bernoulli parameters")?;
        Ok(Self::Bernoulli { probs })
    }

    pub fn uniform(alphabet_size: usize) -> Result<Self> {
        Self::bernoulli(vec![1.0 / alphabet_size as f64; alphabet_size])
    }

    /// Bernoulli on the gliders alphabet from the masses of `-1`, `0`, `+1`.
    pub fn gliders_bernoulli(minus: f64, zero: f64, plus: f64) -> Result<Self> {
        Self::bernoulli(vec![zero, plus, minus])
    }

    /// `Ber(p, 1 - 2p, p)` on the gliders alphabet.
    pub fn balanced_gliders(p: f64) -> Result<Self> {
        Self::bernoulli(vec![1.0 - 2.0 * p, p, p])
    }

    pub fn periodic_dirac(word: Vec<Symbol>, alphabet_size: usize) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::InvalidMeasure("periodic word must be nonempty".into()));
        }
        if let Some(&s) = word.iter().find(|&&s| s as usize >= alphabet_size) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: alphabet_size });
        }
        Ok(Self::PeriodicDirac { word, alphabet_size })
    }

    pub fn markov(spec: MarkovSpec) -> Self {
        Self::Markov(spec)
    }

    pub fn product(layers: Vec<MeasureSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidMeasure("product needs at least one layer".into()));
        }
        let size: usize = layers.iter().map(MeasureSpec::alphabet_size).product();
        if size > 256 {
            return Err(Error::InvalidMeasure("product alphabet exceeds 256 symbols".into()));
        }
        Ok(Self::Product { layers })
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            Self::Bernoulli { probs } => probs.len(),
            Self::Markov(m) => m.alphabet_size,
            Self::PeriodicDirac { alphabet_size, .. } => *alphabet_size,
            Self::Product { layers } => layers.iter().map(MeasureSpec::alphabet_size).product(),
        }
    }

    pub fn sampler(&self) -> Result<Sampler> {
        Sampler::new(self)
    }

    /// Analytic membership in the mixing class used by the entry-time law.
    pub fn mix_tag(&self) -> MixTag {
        match self {
            Self::Bernoulli { probs } if probs.len() == 3 => {
                let (plus, minus) = (probs[1], probs[2]);
                if plus > 0.0 && (plus - minus).abs() <= SUM_TOL {
                    MixTag { is_mix: true, note: "balanced Bernoulli: i.i.d., zero mean, positive variance".into() }
                } else if plus == 0.0 && minus == 0.0 {
                    MixTag { is_mix: false, note: "degenerate: zero asymptotic variance".into() }
                } else {
                    MixTag { is_mix: false, note: "nonzero mean".into() }
                }
            }
            Self::Bernoulli { .. } => MixTag { is_mix: false, note: "not on the gliders alphabet".into() },
            Self::PeriodicDirac { .. } => {
                MixTag { is_mix: false, note: "periodic: bounded partial sums, zero asymptotic variance".into() }
            }
            Self::Markov(_) => MixTag {
                is_mix: false,
                note: "Markov: membership is not decided analytically; assert it explicitly".into(),
            },
            Self::Product { .. } => MixTag { is_mix: false, note: "not on the gliders alphabet".into() },
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Self::Bernoulli { probs } => {
                f.write_str("bernoulli:")?;
                list(f, probs)
            }
            Self::Markov(m) => {
                write!(f, "markov:{}:", m.memory)?;
                for (i, row) in m.transition.chunks(m.alphabet_size).enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    list(f, row)?;
                }
                Ok(())
            }
            Self::PeriodicDirac { word, alphabet_size } => {
                f.write_str("dirac:")?;
                for s in word {
                    write!(f, "{}", char::from_digit(u32::from(*s), 36).unwrap_or('?'))?;
                }
                write!(f, "/{alphabet_size}")
            }
            Self::Product { layers } => {
                f.write_str("product:")?;
                for (i, l) in layers.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{l}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses the textual form produced by `Display`, e.g. `bernoulli:0.5,0,0.5`,
/// `uniform:3`, `markov:1:0.9,0.1;0.1,0.9`, `dirac:01/2`, `product:uniform:2|uniform:2`.
pub fn parse_measure(text: &str) -> Result<MeasureSpec> {
    let text = text.trim();
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("measure {text:?} lacks a kind prefix")))?;
    let floats = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad probability {t:?} in measure {text:?}")))
            })
            .collect()
    };
    match kind.trim() {
        "bernoulli" => MeasureSpec::bernoulli(floats(rest)?),
        "uniform" => {
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad alphabet size in {text:?}")))?;
            MeasureSpec::uniform(n)
        }
        "markov" => {
            let (mem, rows) = rest
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("markov measure {text:?} needs memory:rows")))?;
            let memory = mem
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad Markov memory in {text:?}")))?;
            let rows: Vec<Vec<f64>> = rows.split(';').map(floats).collect::<Result<_>>()?;
            let a = rows.first().map_or(0, Vec::len);
            Ok(MeasureSpec::Markov(MarkovSpec::new(a, memory, rows.concat())?))
        }
        "dirac" => {
            let (word, size) = rest
                .split_once('/')
                .ok_or_else(|| Error::Config(format!("dirac measure {text:?} needs word/alphabet_size")))?;
            let size = size
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad alphabet size in {text:?}")))?;
            let word = word
                .trim()
                .chars()
                .map(|c| {
                    c.to_digit(36)
                        .map(|d| d as Symbol)
                        .ok_or_else(|| Error::Config(format!("bad symbol {c:?} in {text:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            MeasureSpec::periodic_dirac(word, size)
        }
        "product" => MeasureSpec::product(rest.split('|').map(parse_measure).collect::<Result<_>>()?),
        other => Err(Error::Config(format!("unknown measure kind {other:?}"))),
    }
}

/// Analytic mixing-class flag with a human-readable justification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixTag {
    pub is_mix: bool,
    pub note: String,
}

impl MixTag {
    /// Membership asserted by the caller for a measure the artifact cannot decide.
    pub fn asserted_by_user(is_mix: bool) -> Self {
        Self { is_mix, note: "asserted by user".into() }
    }
}

// ---------------------------------------------------------------- sampling

/// Cumulative thresholds on `u64` for drawing one symbol.
#[derive(Clone, Debug)]
struct Categorical {
    thresholds: Vec<u64>,
    fallback: Symbol,
}

impl Categorical {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let thresholds = probs
            .iter()
            .map(|&p| {
                acc += p;
                if acc >= 1.0 {
                    u64::MAX
                } else {
                    (acc * 18_446_744_073_709_551_616.0) as u64
                }
            })
            .collect();
        let fallback = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as Symbol;
        Self { thresholds, fallback }
    }

    #[inline]
    fn draw(&self, rng: &mut Stream) -> Symbol {
        let x: u64 = rng.random();
        for (i, &t) in self.thresholds.iter().enumerate() {
            if x < t {
                return i as Symbol;
            }
        }
        self.fallback
    }
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Bernoulli(Categorical),
    Markov {
        a: usize,
        states: usize,
        initial: Categorical,
        forward: Vec<Categorical>,
        backward: Vec<Categorical>,
    },
    Dirac(Vec<Symbol>),
    Product { layers: Vec<Sampler>, strides: Vec<usize> },
}

/// Draws cells from a [`MeasureSpec`], to the right or lazily in both directions.
#[derive(Clone, Debug)]
pub struct Sampler {
    kind: SamplerKind,
    memory: usize,
}

impl Sampler {
    fn new(m: &MeasureSpec) -> Result<Self> {
        Ok(match m {
            MeasureSpec::Bernoulli { probs } => {
                Self { kind: SamplerKind::Bernoulli(Categorical::new(probs)), memory: 0 }
            }
            MeasureSpec::Markov(mk) => {
                let a = mk.alphabet_size;
                let states = mk.states();
                let forward = mk.transition.chunks(a).map(Categorical::new).collect();
                // Reverse kernel on k-blocks: P(prev = c | block B) ∝ π(c·B[..k-1]) P(c·B[..k-1] → B[k-1]).
                let high = states / a;
                let backward = (0..states)
                    .map(|b| {
                        let head = b / a;
                        let last = b % a;
                        let w: Vec<f64> =
                            (0..a).map(|c| mk.stationary[c * high + head] * mk.prob(c * high + head, last)).collect();
                        let s: f64 = w.iter().sum();
                        if s > 0.0 {
                            Categorical::new(&w.iter().map(|x| x / s).collect::<Vec<_>>())
                        } else {
                            Categorical::new(&vec![1.0 / a as f64; a])
                        }
                    })
                    .collect();
                Self {
                    kind: SamplerKind::Markov {
                        a,
                        states,
                        initial: Categorical::new(&mk.stationary),
                        forward,
                        backward,
                    },
                    memory: mk.memory,
                }
            }
            MeasureSpec::PeriodicDirac { word, .. } => {
                Self { kind: SamplerKind::Dirac(word.clone()), memory: 0 }
            }
            MeasureSpec::Product { layers } => {
                let mut strides = Vec::with_capacity(layers.len());
                let mut s = 1;
                for l in layers {
                    strides.push(s);
                    s *= l.alphabet_size();
                }
                let layers = layers.iter().map(Sampler::new).collect::<Result<_>>()?;
                Self { kind: SamplerKind::Product { layers, strides }, memory: 0 }
            }
        })
    }

    /// `n` consecutive cells of a stationary sample.
    pub fn sample(&self, n: usize, rng: &mut Stream) -> Vec<Symbol> {
        if let SamplerKind::Bernoulli(cat) = &self.kind {
            return (0..n).map(|_| cat.draw(rng)).collect();
        }
        let mut line = self.line(rng);
        (0..n).map(|_| line.right(rng)).collect()
    }

    /// A two-sided lazy sample: `right` yields `x_0, x_1, ...`, `left` yields `x_-1, x_-2, ...`.
    pub fn line(&self, rng: &mut Stream) -> LineSampler {
        let state = match &self.kind {
            SamplerKind::Bernoulli(_) => LineState::Iid,
            SamplerKind::Markov { a, states, initial, .. } => {
                let block = initial.draw_index(rng);
                let mut pending = Vec::with_capacity(self.memory);
                let mut b = block;
                for _ in 0..self.memory {
                    pending.push((b % a) as Symbol);
                    b /= a;
                }
                // pending holds the block reversed; pop() yields x_0 first.
                LineState::Markov { right: block, left: block, pending, states: *states }
            }
            SamplerKind::Dirac(word) => {
                let phase = rng.random_range(0..word.len());
                LineState::Dirac { right: phase, left: phase }
            }
            SamplerKind::Product { layers, .. } => {
                LineState::Product(layers.iter().map(|l| l.line(rng)).collect())
            }
        };
        LineSampler { sampler: self.clone(), state }
    }
}

impl Categorical {
    fn draw_index(&self, rng: &mut Stream) -> usize {
        self.draw(rng) as usize
    }
}

#[derive(Clone, Debug)]
enum LineState {
    Iid,
    Markov { right: usize, left: usize, pending: Vec<Symbol>, states: usize },
    Dirac { right: usize, left: usize },
    Product(Vec<LineSampler>),
}

#[derive(Clone, Debug)]
pub struct LineSampler {
    sampler: Sampler,
    state: LineState,
}

impl LineSampler {
    pub fn right(&mut self, rng: &mut Stream) -> Symbol {
        match (&self.sampler.kind, &mut self.state) {
            (SamplerKind::Bernoulli(cat), _) => cat.draw(rng),
            (SamplerKind::Markov { a, forward, .. }, LineState::Markov { right, pending, states, .. }) => {
                if let Some(s) = pending.pop() {
                    return s;
                }
                let s = forward[*right].draw(rng);
                *right = (*right * a + s as usize) % *states;
                s
            }
            (SamplerKind::Dirac(word), LineState::Dirac { right, .. }) => {
                let s = word[*right];
                *right = (*right + 1) % word.len();
                s
            }
            (SamplerKind::Product { strides, .. }, LineState::Product(lines)) => lines
                .iter_mut()
                .zip(strides)
                .map(|(l, &st)| l.right(rng) as usize * st)
                .sum::<usize>() as Symbol,
            _ => unreachable!("sampler and line state always match"),
        }
    }

    pub fn left(&mut self, rng: &mut Stream) -> Symbol {
        match (&self.sampler.kind, &mut self.state) {
            (SamplerKind::Bernoulli(cat), _) => cat.draw(rng),
            (SamplerKind::Markov { a, backward, .. }, LineState::Markov { left, states, .. }) => {
                let s = backward[*left].draw(rng);
                *left = s as usize * (*states / a) + *left / a;
                s
            }
            (SamplerKind::Dirac(word), LineState::Dirac { left, .. }) => {
                *left = (*left + word.len() - 1) % word.len();
                word[*left]
            }
            (SamplerKind::Product { strides, .. }, LineState::Product(lines)) => lines
                .iter_mut()
                .zip(strides)
                .map(|(l, &st)| l.left(rng) as usize * st)
                .sum::<usize>() as Symbol,
            _ => unreachable!("sampler and line state always match"),
        }
    }
}

// ---------------------------------------------------------------- cylinders

/// Anything assigning probabilities to words of length `1..=max_len`.
pub trait Valuation {
    fn alphabet_size(&self) -> usize;
    fn max_len(&self) -> usize;
    /// Probability of the word whose base-`A` index (first symbol most significant) is `index`.
    fn value(&self, len: usize, index: usize) -> f64;
}

pub fn word_index(word: &[Symbol], alphabet_size: usize) -> usize {
    word.iter().fold(0, |acc, &s| acc * alphabet_size + s as usize)
}

pub fn index_word(mut index: usize, len: usize, alphabet_size: usize) -> Vec<Symbol> {
    let mut w = vec![0; len];
    for slot in w.iter_mut().rev() {
        *slot = (index % alphabet_size) as Symbol;
        index /= alphabet_size;
    }
    w
}

/// Closed-form cylinder probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderTable {
    alphabet_size: usize,
    values: Vec<Vec<f64>>,
}

impl CylinderTable {
    pub fn get(&self, word: &[Symbol]) -> f64 {
        self.values[word.len() - 1][word_index(word, self.alphabet_size)]
    }

    pub fn row(&self, len: usize) -> &[f64] {
        &self.values[len - 1]
    }
}

impl Valuation for CylinderTable {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }
    fn max_len(&self) -> usize {
        self.values.len()
    }
    fn value(&self, len: usize, index: usize) -> f64 {
        self.values[len - 1][index]
    }
}

fn word_count(a: usize, len: usize) -> Result<usize> {
    a.checked_pow(len as u32)
        .filter(|&n| n <= 1 << 24)
        .ok_or_else(|| Error::Infeasible(format!("{a}^{len} cylinders is too many to tabulate")))
}

pub fn exact_cylinders(measure: &MeasureSpec, max_len: usize) -> Result<CylinderTable> {
    let a = measure.alphabet_size();
    let mut values = Vec::with_capacity(max_len);
    for len in 1..=max_len {
        let n = word_count(a, len)?;
        let row = (0..n).map(|i| cylinder(measure, &index_word(i, len, a))).collect();
        values.push(row);
    }
    Ok(CylinderTable { alphabet_size: a, values })
}

fn cylinder(measure: &MeasureSpec, word: &[Symbol]) -> f64 {
    match measure {
        MeasureSpec::Bernoulli { probs } => word.iter().map(|&s| probs[s as usize]).product(),
        MeasureSpec::Markov(m) => {
            let a = m.alphabet_size;
            let k = m.memory;
            if word.len() <= k {
                // Marginal of the stationary k-block law.
                let prefix = word_index(word, a);
                let span = a.pow((k - word.len()) as u32);
                (0..span).map(|tail| m.stationary[prefix * span + tail]).sum()
            } else {
                let mut state = word_index(&word[..k], a);
                let mut p = m.stationary[state];
                for &s in &word[k..] {
                    p *= m.prob(state, s as usize);
                    state = (state * a + s as usize) % m.states();
                }
                p
            }
        }
        MeasureSpec::PeriodicDirac { word: u, .. } => {
            let p = u.len();
            let hits = (0..p)
                .filter(|&phase| word.iter().enumerate().all(|(i, &s)| u[(phase + i) % p] == s))
                .count();
            hits as f64 / p as f64
        }
        MeasureSpec::Product { layers } => {
            let mut stride = 1;
            let mut p = 1.0;
            for l in layers {
                let sz = l.alphabet_size();
                let proj: Vec<Symbol> = word.iter().map(|&s| ((s as usize / stride) % sz) as Symbol).collect();
                p *= cylinder(l, &proj);
                stride *= sz;
            }
            p
        }
    }
}

/// Pooled occurrence counts of every word of length `1..=max_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalCylinders {
    alphabet_size: usize,
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
    trajectories: u64,
}

impl EmpiricalCylinders {
    pub fn new(alphabet_size: usize, max_len: usize) -> Result<Self> {
        let counts = (1..=max_len).map(|l| word_count(alphabet_size, l).map(|n| vec![0; n])).collect::<Result<_>>()?;
        Ok(Self { alphabet_size, counts, totals: vec![0; max_len], trajectories: 0 })
    }

    /// Adds every occurrence fully inside `cells` (one trajectory's exact region).
    pub fn add_region(&mut self, cells: &[Symbol]) {
        let a = self.alphabet_size;
        let l = self.counts.len();
        for i in 0..cells.len() {
            let mut idx = 0usize;
            for len in 1..=l.min(cells.len() - i) {
                idx = idx * a + cells[i + len - 1] as usize;
                self.counts[len - 1][idx] += 1;
            }
        }
        for len in 1..=l {
            self.totals[len - 1] += cells.len().saturating_sub(len - 1) as u64;
        }
        self.trajectories += 1;
    }

    /// Associative merge.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.alphabet_size, other.alphabet_size);
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.totals.iter_mut().zip(&other.totals).for_each(|(x, y)| *x += y);
        self.trajectories += other.trajectories;
    }

    pub fn count(&self, word: &[Symbol]) -> u64 {
        self.counts[word.len() - 1][word_index(word, self.alphabet_size)]
    }

    pub fn count_at(&self, len: usize, index: usize) -> u64 {
        self.counts[len - 1][index]
    }

    pub fn total(&self, len: usize) -> u64 {
        self.totals[len - 1]
    }

    pub fn trajectories(&self) -> u64 {
        self.trajectories
    }

    pub fn freq(&self, word: &[Symbol]) -> f64 {
        self.value(word.len(), word_index(word, self.alphabet_size))
    }

    /// Effective sample size used for confidence reporting.
    pub fn n_effective(&self, len: usize) -> u64 {
        self.totals[len - 1]
    }

    /// Two-sigma binomial half-width of the frequency estimate.
    pub fn half_width(&self, len: usize, index: usize) -> f64 {
        let n = self.n_effective(len);
        if n == 0 {
            return f64::INFINITY;
        }
        let f = self.value(len, index);
        2.0 * (f * (1.0 - f) / n as f64).sqrt()
    }

    /// Rows `(word, length, count, freq, half_width)`.
    pub fn rows(&self) -> impl Iterator<Item = (Vec<Symbol>, usize, u64, f64, f64)> + '_ {
        (1..=self.counts.len()).flat_map(move |len| {
            (0..self.counts[len - 1].len()).map(move |i| {
                (
                    index_word(i, len, self.alphabet_size),
                    len,
                    self.counts[len - 1][i],
                    self.value(len, i),
                    self.half_width(len, i),
                )
            })
        })
    }
}

impl Valuation for EmpiricalCylinders {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }
    fn max_len(&self) -> usize {
        self.counts.len()
    }
    fn value(&self, len: usize, index: usize) -> f64 {
        let t = self.totals[len - 1];
        if t == 0 {
            0.0
        } else {
            self.counts[len - 1][index] as f64 / t as f64
        }
    }
}

/// `sum_{n=1..L} 2^-n max_u |a([u]) - b([u])|`; the neglected tail is at most `2^-L`.
pub fn dm_distance(a: &dyn Valuation, b: &dyn Valuation, max_len: usize) -> Result<f64> {
    if a.alphabet_size() != b.alphabet_size() {
        return Err(Error::AlphabetMismatch { expected: a.alphabet_size(), found: b.alphabet_size() });
    }
    if max_len == 0 || a.max_len() < max_len || b.max_len() < max_len {
        return Err(Error::Infeasible(format!(
            "d_M truncation {max_len} exceeds tabulated lengths {} and {}",
            a.max_len(),
            b.max_len()
        )));
    }
    let mut d = 0.0;
    let mut weight = 1.0;
    for len in 1..=max_len {
        weight *= 0.5;
        let n = a.alphabet_size().pow(len as u32);
        let worst = (0..n).map(|i| (a.value(len, i) - b.value(len, i)).abs()).fold(0.0, f64::max);
        d += weight * worst;
    }
    Ok(d)
}

/// Monte Carlo estimate of the cylinders of `F^t_* mu`.
///
/// Each trajectory samples `cells_per_traj + 2 rho t` cells, runs `t` steps and
/// counts words inside the remaining `cells_per_traj` exact cells.
pub fn estimate_cylinders(
    dynamics: &Dynamics,
    measure: &MeasureSpec,
    t: usize,
    max_len: usize,
    n_traj: usize,
    cells_per_traj: usize,
    seed: u64,
) -> Result<EmpiricalCylinders> {
    if cells_per_traj < max_len {
        return Err(Error::Infeasible(format!(
            "{cells_per_traj} exact cells cannot hold words of length {max_len}"
        )));
    }
    let alphabet = dynamics.alphabet().clone();
    let margin = dynamics.radius() * t;
    let a = alphabet.size();
    let parts: Vec<Result<EmpiricalCylinders>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let c = window_sample(measure, &alphabet, cells_per_traj, margin, &mut rng)?;
            let c = dynamics.iterate(c, t, &mut rng, |_, _| {})?;
            let mut e = EmpiricalCylinders::new(a, max_len)?;
            e.add_region(c.exact_cells());
            Ok(e)
        })
        .collect();
    let mut total = EmpiricalCylinders::new(a, max_len)?;
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}
