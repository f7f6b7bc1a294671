//! Partial-sum walks of gliders configurations and the statistics built on
//! them: strict-argmin characterisation of particles, entry times, density
//! decay and convergence to the particle-free configuration.
//!
//! For the `(v-, v+)` gliders automaton write `a = -v-` and `b = v+`. A `-1`
//! sits at `j` at time `t` iff `S(j + a t + 1)` is strictly below `S` on
//! `[j - b t, j + a t]`, and a `+1` iff `S(j - b t)` is strictly below `S` on
//! `[j - b t + 1, j + a t + 1]`. Both reduce to distances to the previous or
//! next lower-or-equal point of the walk, found with a monotone stack.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{glider, Alphabet, Configuration, Symbol};
use crate::measures::{dm_distance, exact_cylinders, EmpiricalCylinders, LineSampler, MeasureSpec};
use crate::rng::{stream, Stream};
use crate::rules::{make_gliders, Dynamics, LocalRule};

/// Speeds of a gliders automaton with `v_minus < 0 <= v_plus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LimitLaw {
    v_minus: i64,
    v_plus: i64,
}

impl LimitLaw {
    pub fn new(v_minus: i64, v_plus: i64) -> Result<Self> {
        if v_minus >= 0 || v_plus < 0 {
            return Err(Error::Infeasible(format!("need v_- < 0 <= v_+, got ({v_minus}, {v_plus})")));
        }
        Ok(Self { v_minus, v_plus })
    }

    pub fn v_minus(&self) -> i64 {
        self.v_minus
    }

    pub fn v_plus(&self) -> i64 {
        self.v_plus
    }

    /// `a = -v_-`, the leftward speed of `-1` particles.
    fn a(&self) -> i64 {
        -self.v_minus
    }

    fn b(&self) -> i64 {
        self.v_plus
    }

    fn reach(&self) -> i64 {
        self.a() + self.b()
    }
}

/// Limit of `P(T_n^- / n <= alpha)`.
pub fn limit_cdf(law: LimitLaw, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::Infeasible(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha.is_infinite() {
        let (vm, vp) = (law.v_minus as f64, law.v_plus as f64);
        return Ok(if law.v_plus == 0 { 1.0 } else { 2.0 / PI * (-vm / vp).sqrt().atan() });
    }
    let (vm, vp) = (law.v_minus as f64, law.v_plus as f64);
    Ok(2.0 / PI * ((-vm * alpha) / (vp - vm + vp * alpha)).sqrt().atan())
}

/// `S(origin + i) = sums[i]`, with `S(k + 1) - S(k) = x_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkProcess {
    origin: i64,
    sums: Vec<i64>,
}

impl WalkProcess {
    /// Walk of the increments `steps`, read as `x_origin, x_origin+1, ...`.
    /// Anchored at `S(0) = 0` when 0 is in range, else at `S(origin) = 0`.
    pub fn from_steps(origin: i64, steps: impl IntoIterator<Item = i64>) -> Self {
        let mut sums = vec![0];
        let mut s = 0;
        for x in steps {
            s += x;
            sums.push(s);
        }
        if let Some(&base) = usize::try_from(-origin).ok().and_then(|i| sums.get(i)) {
            sums.iter_mut().for_each(|v| *v -= base);
        }
        Self { origin, sums }
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// Last coordinate at which the walk is defined.
    pub fn end(&self) -> i64 {
        self.origin + self.sums.len() as i64 - 1
    }

    pub fn sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn at(&self, k: i64) -> Option<i64> {
        usize::try_from(k - self.origin).ok().and_then(|i| self.sums.get(i)).copied()
    }

    /// Piecewise-linear extension to real arguments.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let lo = t.floor();
        let a = self.at(lo as i64)? as f64;
        if lo == t {
            return Some(a);
        }
        let b = self.at(lo as i64 + 1)? as f64;
        Some(a + (t - lo) * (b - a))
    }

    /// `S(k t) / sqrt(k)`.
    pub fn rescaled(&self, k: f64, t: f64) -> Option<f64> {
        self.interpolate(k * t).map(|v| v / k.sqrt())
    }

    /// Strict argmin over the integer points of `[lo, hi]`, if the minimum is unique.
    pub fn strict_argmin(&self, lo: i64, hi: i64) -> Option<i64> {
        strict_argmin((lo..=hi).map(|k| (k, self.at(k).expect("argmin inside the walk"))))
    }
}

fn strict_argmin(points: impl Iterator<Item = (i64, i64)>) -> Option<i64> {
    let mut best: Option<(i64, i64)> = None;
    let mut unique = false;
    for (k, v) in points {
        match best {
            Some((_, b)) if v > b => {}
            Some((_, b)) if v == b => unique = false,
            _ => {
                best = Some((k, v));
                unique = true;
            }
        }
    }
    best.filter(|_| unique).map(|(k, _)| k)
}

/// Walk of the exact region of a gliders configuration.
pub fn walk_of(c: &Configuration) -> Result<WalkProcess> {
    if c.alphabet().size() != 3 {
        return Err(Error::AlphabetMismatch { expected: 3, found: c.alphabet().size() });
    }
    let (lo, _) = c.exact();
    Ok(WalkProcess::from_steps(lo, c.exact_cells().iter().map(|&s| glider::value(s) as i64)))
}

/// Index of the previous point with a lower or equal value, per point.
fn previous_le(s: &[i64]) -> Vec<Option<usize>> {
    let mut stack: Vec<usize> = Vec::new();
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            while stack.last().is_some_and(|&j| s[j] > v) {
                stack.pop();
            }
            let found = stack.last().copied();
            stack.push(i);
            found
        })
        .collect()
}

/// Index of the next point with a lower or equal value, per point.
fn next_le(s: &[i64]) -> Vec<Option<usize>> {
    let mut out = vec![None; s.len()];
    let mut stack: Vec<usize> = Vec::new();
    for i in (0..s.len()).rev() {
        while stack.last().is_some_and(|&j| s[j] > s[i]) {
            stack.pop();
        }
        out[i] = stack.last().copied();
        stack.push(i);
    }
    out
}

/// Distances to the previous and next lower-or-equal point; `i64::MAX` when
/// there is none inside the walk.
struct Records {
    back: Vec<i64>,
    ahead: Vec<i64>,
}

impl Records {
    fn of(sums: &[i64]) -> Self {
        let back = previous_le(sums)
            .iter()
            .enumerate()
            .map(|(i, p)| p.map_or(i64::MAX, |p| (i - p) as i64))
            .collect();
        let ahead = next_le(sums)
            .iter()
            .enumerate()
            .map(|(i, q)| q.map_or(i64::MAX, |q| (q - i) as i64))
            .collect();
        Self { back, ahead }
    }
}

/// `G^t(x)` on every cell determined by the walk, computed from records.
pub fn glider_configuration(walk: &WalkProcess, law_speeds: (i64, i64), t: usize) -> Result<Configuration> {
    let (v_minus, v_plus) = law_speeds;
    if v_minus >= v_plus {
        return Err(Error::InvalidRule(format!("gliders need v_- < v_+, got ({v_minus}, {v_plus})")));
    }
    // Cell j needs S on [j - v_+ t, j - v_- t + 1].
    let t = t as i64;
    let lo = walk.origin() + v_plus * t;
    let hi = walk.end() - 1 + v_minus * t;
    if lo > hi {
        return Err(Error::RegionExhausted { lo: walk.origin(), hi: walk.end() - 1, radius: (v_plus - v_minus) as usize * t as usize });
    }
    let rec = Records::of(walk.sums());
    let span = (v_plus - v_minus) * t + 2;
    let idx = |k: i64| (k - walk.origin()) as usize;
    let cells: Vec<Symbol> = (lo..=hi)
        .map(|j| {
            if rec.back[idx(j - v_minus * t + 1)] >= span {
                glider::MINUS
            } else if rec.ahead[idx(j - v_plus * t)] >= span {
                glider::PLUS
            } else {
                glider::ZERO
            }
        })
        .collect();
    Configuration::new(Alphabet::gliders(), cells, lo)
}

// ---------------------------------------------------------------- lemma oracle

/// Which equivalence a lemma witness breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaStatement {
    MinusAtTime,
    PlusAtTime,
    ForwardTransport,
    BackwardTransport,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaWitness {
    pub word: Vec<Symbol>,
    pub t: usize,
    pub cell: i64,
    /// Window length for the transport statements, zero otherwise.
    pub n: i64,
    pub statement: LemmaStatement,
}

#[derive(Clone, Debug, Default)]
pub struct LemmaReport {
    pub words: u64,
    pub checks: u64,
    pub mismatches: u64,
    pub witness: Option<LemmaWitness>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.checks > 0
    }

    fn record(&mut self, ok: bool, w: impl FnOnce() -> LemmaWitness) {
        self.checks += 1;
        if !ok {
            self.mismatches += 1;
            if self.witness.is_none() {
                self.witness = Some(w());
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.words += other.words;
        self.checks += other.checks;
        self.mismatches += other.mismatches;
        if self.witness.is_none() {
            self.witness = other.witness;
        }
        self
    }
}

/// Exhaustive check of the strict-argmin characterisation for the gliders automaton.
pub fn lemma_min_oracle(v_minus: i64, v_plus: i64, max_len: usize, max_t: usize) -> Result<LemmaReport> {
    lemma_min_check(&make_gliders(v_minus, v_plus)?, v_minus, v_plus, max_len, max_t)
}

/// Gliders automaton with a planted fault: a `+1` arriving from the left end
/// of the neighborhood survives where the true rule leaves a `0`.
pub fn sabotaged_gliders(v_minus: i64, v_plus: i64) -> Result<LocalRule> {
    let rule = make_gliders(v_minus, v_plus)?;
    let a = Alphabet::gliders();
    LocalRule::from_fn(a.clone(), a, -v_plus, rule.span(), |w| match rule.eval(w) {
        glider::ZERO if w[0] == glider::PLUS => glider::PLUS,
        s => s,
    })
}

/// Checks, for every word of length `max_len` and every `t <= max_t`, that
/// `rule` agrees with the strict-argmin characterisation of `(v_minus, v_plus)`
/// gliders on each cell where both sides are determined, and that one step of
/// `rule` transports strict argmins of the walk.
pub fn lemma_min_check(rule: &LocalRule, v_minus: i64, v_plus: i64, max_len: usize, max_t: usize) -> Result<LemmaReport> {
    if rule.input().size() != 3 || rule.output().size() != 3 {
        return Err(Error::AlphabetMismatch { expected: 3, found: rule.input().size() });
    }
    if v_minus >= v_plus {
        return Err(Error::InvalidRule(format!("gliders need v_- < v_+, got ({v_minus}, {v_plus})")));
    }
    if max_len == 0 || max_len > 16 {
        return Err(Error::Infeasible(format!("lemma oracle supports words of length 1..=16, got {max_len}")));
    }
    let total = 3usize.pow(max_len as u32);
    let alphabet = Alphabet::gliders();
    let a = -v_minus;
    let b = v_plus;
    let report = (0..total)
        .into_par_iter()
        .fold(LemmaReport::default, |mut rep, index| {
            let word = crate::measures::index_word(index, max_len, 3);
            rep.words += 1;
            let x = Configuration::new(alphabet.clone(), word.clone(), 0).expect("valid word");
            let walk = walk_of(&x).expect("gliders alphabet");
            let witness = |t, cell, n, statement| LemmaWitness { word: word.clone(), t, cell, n, statement };
            let mut c = x.clone();
            for t in 0..=max_t {
                if t > 0 {
                    match rule.apply(&c) {
                        Ok(next) => c = next,
                        Err(_) => break,
                    }
                }
                let ti = t as i64;
                let (lo, hi) = c.exact();
                for j in lo..=hi {
                    let (l, r) = (j - b * ti, j + a * ti + 1);
                    if l < walk.origin() || r > walk.end() {
                        continue;
                    }
                    let m = walk.strict_argmin(l, r);
                    let cell = c.at(j);
                    rep.record((cell == glider::MINUS) == (m == Some(r)), || witness(t, j, 0, LemmaStatement::MinusAtTime));
                    rep.record((cell == glider::PLUS) == (m == Some(l)), || witness(t, j, 0, LemmaStatement::PlusAtTime));
                }
                if t == 1 {
                    let next = walk_of(&c).expect("gliders alphabet");
                    let (lo, hi) = (next.origin(), next.end());
                    for j in lo..=hi {
                        for n in 1..=(hi - lo) {
                            if j + n <= hi && j - b >= walk.origin() && j + n + a <= walk.end() {
                                let lhs = next.strict_argmin(j, j + n) == Some(j);
                                let rhs = walk.strict_argmin(j - b, j + n + a) == Some(j - b);
                                rep.record(lhs == rhs, || witness(1, j, n, LemmaStatement::ForwardTransport));
                            }
                            if j - n >= lo && j - n - b >= walk.origin() && j + a <= walk.end() {
                                let lhs = next.strict_argmin(j - n, j) == Some(j);
                                let rhs = walk.strict_argmin(j - n - b, j + a) == Some(j + a);
                                rep.record(lhs == rhs, || witness(1, j, n, LemmaStatement::BackwardTransport));
                            }
                        }
                    }
                }
            }
            rep
        })
        .reduce(LemmaReport::default, LemmaReport::merge);
    Ok(report)
}

// ---------------------------------------------------------------- sources

/// Where gliders configurations come from: a measure on the gliders alphabet,
/// or a measure on another alphabet pushed through a factor map.
#[derive(Clone, Debug)]
pub enum GliderSource {
    Direct(MeasureSpec),
    Factor { factor: LocalRule, measure: MeasureSpec },
}

impl GliderSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Direct(m) => {
                if m.alphabet_size() != 3 {
                    return Err(Error::AlphabetMismatch { expected: 3, found: m.alphabet_size() });
                }
            }
            Self::Factor { factor, measure } => {
                if factor.output().size() != 3 {
                    return Err(Error::AlphabetMismatch { expected: 3, found: factor.output().size() });
                }
                if measure.alphabet_size() != factor.input().size() {
                    return Err(Error::AlphabetMismatch {
                        expected: factor.input().size(),
                        found: measure.alphabet_size(),
                    });
                }
            }
        }
        Ok(())
    }

    fn line(&self, rng: &mut Stream) -> Result<SourceLine> {
        self.validate()?;
        let (measure, factor) = match self {
            Self::Direct(m) => (m, None),
            Self::Factor { factor, measure } => (measure, Some(factor.clone())),
        };
        Ok(SourceLine { line: measure.sampler()?.line(rng), factor, buf: VecDeque::new(), buf_origin: 0, right: 0, left: 0 })
    }
}

/// Lazily sampled gliders cells `y_0, y_1, ...` and `y_-1, y_-2, ...`.
struct SourceLine {
    line: LineSampler,
    factor: Option<LocalRule>,
    buf: VecDeque<Symbol>,
    buf_origin: i64,
    right: i64,
    left: i64,
}

impl SourceLine {
    /// Extends the buffer, which always holds `x` on a window containing 0, to `[lo, hi]`.
    fn cover(&mut self, lo: i64, hi: i64, rng: &mut Stream) {
        while self.buf_origin + (self.buf.len() as i64) <= hi {
            let s = self.line.right(rng);
            self.buf.push_back(s);
        }
        while self.buf_origin > lo {
            let s = self.line.left(rng);
            self.buf.push_front(s);
            self.buf_origin -= 1;
        }
    }

    fn cell(&mut self, j: i64, rng: &mut Stream) -> Symbol {
        match self.factor.clone() {
            None => {
                self.cover(j, j, rng);
                self.buf[(j - self.buf_origin) as usize]
            }
            Some(f) => {
                let offs = f.offsets();
                let (lo, hi) = (j + offs.start(), j + offs.end());
                self.cover(lo, hi, rng);
                let start = (lo - self.buf_origin) as usize;
                let window: Vec<Symbol> = self.buf.range(start..start + f.span()).copied().collect();
                f.eval(&window)
            }
        }
    }

    /// Next cell to the right, starting at `y_0`.
    fn next_right(&mut self, rng: &mut Stream) -> Symbol {
        let j = self.right;
        self.right += 1;
        self.cell(j, rng)
    }

    /// Next cell to the left, starting at `y_-1`.
    fn next_left(&mut self, rng: &mut Stream) -> Symbol {
        self.left -= 1;
        let j = self.left;
        self.cell(j, rng)
    }

    /// Cells `y_lo..=y_hi` with `lo <= 0 <= hi + 1`, sampled outward from 0.
    fn window(&mut self, lo: i64, hi: i64, rng: &mut Stream) -> Vec<Symbol> {
        let right: Vec<Symbol> = (0..=hi).map(|_| self.next_right(rng)).collect();
        let mut left: Vec<Symbol> = (lo..0).map(|_| self.next_left(rng)).collect();
        left.reverse();
        left.extend(right);
        left
    }
}

// ---------------------------------------------------------------- entry times

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Species {
    Minus,
    Plus,
}

impl Species {
    pub fn sign(self) -> char {
        match self {
            Species::Minus => '-',
            Species::Plus => '+',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryTimeSample {
    pub n: u64,
    /// Entry time, or `t_max` when censored.
    pub value: u64,
    pub censored: bool,
    pub species: Species,
}

/// A walk grown on demand around 0 with running minima.
struct GrowingWalk<'a> {
    right: Vec<i64>,
    left: Vec<i64>,
    left_min: Vec<i64>,
    /// `right_min[c][q - c]` is the minimum of `S` on `[c, q]`.
    right_min: Vec<Vec<i64>>,
    step: Box<dyn FnMut(bool) -> Result<i64> + 'a>,
}

impl<'a> GrowingWalk<'a> {
    fn new(starts: usize, step: Box<dyn FnMut(bool) -> Result<i64> + 'a>) -> Self {
        let mut right_min = vec![Vec::new(); starts + 1];
        right_min[0].push(0);
        Self { right: vec![0], left: vec![0], left_min: vec![0], right_min, step }
    }

    fn grow_right(&mut self, q: i64) -> Result<()> {
        while (self.right.len() as i64) <= q {
            let x = (self.step)(true)?;
            let s = self.right.last().unwrap() + x;
            let k = self.right.len();
            self.right.push(s);
            for (c, mins) in self.right_min.iter_mut().enumerate() {
                if c == k {
                    mins.push(s);
                } else if c < k {
                    let m = *mins.last().unwrap();
                    mins.push(m.min(s));
                }
            }
        }
        Ok(())
    }

    fn grow_left(&mut self, p: i64) -> Result<()> {
        while (self.left.len() as i64) <= p {
            let x = (self.step)(false)?;
            let s = self.left.last().unwrap() - x;
            self.left.push(s);
            let m = *self.left_min.last().unwrap();
            self.left_min.push(m.min(s));
        }
        Ok(())
    }

    fn at(&mut self, k: i64) -> Result<i64> {
        if k >= 0 {
            self.grow_right(k)?;
            Ok(self.right[k as usize])
        } else {
            self.grow_left(-k)?;
            Ok(self.left[(-k) as usize])
        }
    }

    fn min(&mut self, lo: i64, hi: i64) -> Result<i64> {
        self.grow_right(hi.max(0))?;
        if lo <= 0 {
            self.grow_left(-lo)?;
            Ok(self.left_min[(-lo) as usize].min(self.right_min[0][hi as usize]))
        } else {
            let c = lo as usize;
            Ok(self.right_min[c][(hi - lo) as usize])
        }
    }
}

fn entry_time_on(walk: &mut GrowingWalk<'_>, law: LimitLaw, species: Species, n: u64, t_max: u64) -> Result<Option<u64>> {
    let (a, b) = (law.a(), law.b());
    let window = match species {
        Species::Minus => a,
        Species::Plus => b,
    };
    if window == 0 {
        return Err(Error::Infeasible("entry times need a moving particle species".into()));
    }
    for k in 0..=t_max {
        let s = (n + k) as i64;
        for i in 0..window {
            let hit = match species {
                Species::Minus => {
                    let m = i + a * s + 1;
                    walk.at(m)? < walk.min(i - b * s, m - 1)?
                }
                Species::Plus => {
                    let p = i - b * s;
                    walk.at(p)? < walk.min(p + 1, i + a * s + 1)?
                }
            };
            if hit {
                return Ok(Some(k));
            }
        }
    }
    Ok(None)
}

fn sample_of(value: Option<u64>, n: u64, t_max: u64, species: Species) -> EntryTimeSample {
    EntryTimeSample { n, value: value.unwrap_or(t_max), censored: value.is_none(), species }
}

/// Entry time read off a fixed walk; fails if the walk is too short.
pub fn entry_time_on_walk(
    walk: &WalkProcess,
    law: LimitLaw,
    species: Species,
    n: u64,
    t_max: u64,
) -> Result<EntryTimeSample> {
    let origin = walk.origin();
    let end = walk.end();
    let sums = walk.sums();
    let base = walk.at(0).ok_or_else(|| Error::Infeasible("walk does not contain the origin".into()))?;
    let _ = base;
    let mut right = 0i64;
    let mut left = 0i64;
    let step = move |to_right: bool| -> Result<i64> {
        let (k0, k1) = if to_right {
            right += 1;
            (right - 1, right)
        } else {
            left -= 1;
            (left, left + 1)
        };
        if k0 < origin || k1 > end {
            return Err(Error::RegionExhausted { lo: origin, hi: end - 1, radius: 0 });
        }
        Ok(sums[(k1 - origin) as usize] - sums[(k0 - origin) as usize])
    };
    let mut g = GrowingWalk::new((law.a().max(law.b()) + 1) as usize, Box::new(step));
    let v = entry_time_on(&mut g, law, species, n, t_max)?;
    Ok(sample_of(v, n, t_max, species))
}

/// Entry time found by explicitly stepping the gliders automaton.
pub fn entry_time_by_stepping(
    x: &Configuration,
    law: LimitLaw,
    species: Species,
    n: u64,
    t_max: u64,
) -> Result<EntryTimeSample> {
    let rule = make_gliders(law.v_minus, law.v_plus)?;
    let (target, window) = match species {
        Species::Minus => (glider::MINUS, law.a()),
        Species::Plus => (glider::PLUS, law.b()),
    };
    if window == 0 {
        return Err(Error::Infeasible("entry times need a moving particle species".into()));
    }
    let mut c = x.clone();
    for _ in 0..n {
        c = rule.apply(&c)?;
    }
    for k in 0..=t_max {
        if k > 0 {
            c = rule.apply(&c)?;
        }
        let (lo, hi) = c.exact();
        if lo > 0 || hi < window - 1 {
            return Err(Error::RegionExhausted { lo, hi, radius: rule.radius() });
        }
        if (0..window).any(|i| c.at(i) == target) {
            return Ok(sample_of(Some(k), n, t_max, species));
        }
    }
    Ok(sample_of(None, n, t_max, species))
}

/// Independent entry-time samples, one ChaCha stream per sample.
pub fn entry_times(
    source: &GliderSource,
    law: LimitLaw,
    species: Species,
    n: u64,
    n_samples: usize,
    t_max: u64,
    seed: u64,
) -> Result<Vec<EntryTimeSample>> {
    source.validate()?;
    let cells = (n + t_max + 2).checked_mul(law.reach() as u64 + 1);
    if cells.is_none_or(|c| c > 1 << 34) {
        return Err(Error::Infeasible(format!("light cone of n={n}, Tmax={t_max} is too large")));
    }
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut line = source.line(&mut rng)?;
            let rng_cell = std::cell::RefCell::new(rng);
            let step = |to_right: bool| -> Result<i64> {
                let mut r = rng_cell.borrow_mut();
                let s = if to_right { line.next_right(&mut r) } else { line.next_left(&mut r) };
                Ok(glider::value(s) as i64)
            };
            let mut g = GrowingWalk::new((law.a().max(law.b()) + 1) as usize, Box::new(step));
            let v = entry_time_on(&mut g, law, species, n, t_max)?;
            Ok(sample_of(v, n, t_max, species))
        })
        .collect()
}

// ---------------------------------------------------------------- ECDF

#[derive(Clone, Debug, PartialEq)]
pub struct EcdfReport {
    /// Sorted `T / n`, censored samples last.
    pub values: Vec<f64>,
    pub censored: Vec<bool>,
    pub grid: Vec<f64>,
    pub ecdf: Vec<f64>,
    pub reference: Vec<f64>,
    /// Largest `|ecdf - reference|` over the grid.
    pub ks: f64,
    /// Supremum of `|ecdf - reference|` over `[0, alpha_max]`, on both sides of every jump.
    pub ks_sup: f64,
    pub alpha_max: f64,
}

fn scaled(samples: &[EntryTimeSample]) -> Result<(Vec<f64>, Vec<bool>, f64)> {
    let first = samples.first().ok_or_else(|| Error::Infeasible("no entry-time samples".into()))?;
    let n = first.n.max(1) as f64;
    let mut rows: Vec<(bool, f64)> = samples.iter().map(|s| (s.censored, s.value as f64 / n)).collect();
    rows.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let alpha_max = samples.iter().filter(|s| s.censored).map(|s| s.value as f64 / n).fold(f64::INFINITY, f64::min);
    Ok((rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.0).collect(), alpha_max))
}

fn ecdf_at(values: &[f64], censored: &[bool], alpha: f64) -> f64 {
    let hits = values.iter().zip(censored).filter(|(v, c)| !**c && **v <= alpha).count();
    hits as f64 / values.len() as f64
}

/// Empirical CDF of `T / n` compared with `reference` on `grid`.
pub fn ecdf_report(samples: &[EntryTimeSample], grid: &[f64], reference: impl Fn(f64) -> f64) -> Result<EcdfReport> {
    let (values, censored, alpha_max) = scaled(samples)?;
    let total = values.len() as f64;
    let mut ks: f64 = 0.0;
    let mut below = 0usize;
    let finite: Vec<f64> = values.iter().zip(&censored).filter(|(_, c)| !**c).map(|(v, _)| *v).collect();
    let mut i = 0;
    while i < finite.len() && finite[i] <= alpha_max {
        let v = finite[i];
        let r = reference(v);
        ks = ks.max((below as f64 / total - r).abs());
        while i < finite.len() && finite[i] == v {
            i += 1;
            below += 1;
        }
        ks = ks.max((below as f64 / total - r).abs());
    }
    if alpha_max.is_finite() {
        ks = ks.max((below as f64 / total - reference(alpha_max)).abs());
    }
    let grid: Vec<f64> = grid.iter().copied().filter(|&g| g <= alpha_max).collect();
    let ecdf: Vec<f64> = grid.iter().map(|&g| ecdf_at(&values, &censored, g)).collect();
    let reference_values: Vec<f64> = grid.iter().map(|&g| reference(g)).collect();
    let on_grid = ecdf.iter().zip(&reference_values).map(|(e, r)| (e - r).abs()).fold(0.0, f64::max);
    Ok(EcdfReport { values, censored, grid, ecdf, reference: reference_values, ks: on_grid, ks_sup: ks, alpha_max })
}

/// Two-sample Kolmogorov-Smirnov distance of `T / n` over the common uncensored range.
pub fn ks_two_sample(a: &[EntryTimeSample], b: &[EntryTimeSample]) -> Result<f64> {
    let (va, ca, ma) = scaled(a)?;
    let (vb, cb, mb) = scaled(b)?;
    let limit = ma.min(mb);
    let mut points: Vec<f64> = va.iter().chain(&vb).copied().filter(|&v| v <= limit).collect();
    points.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    points.dedup();
    Ok(points
        .iter()
        .map(|&p| (ecdf_at(&va, &ca, p) - ecdf_at(&vb, &cb, p)).abs())
        .fold(0.0, f64::max))
}

impl EcdfReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("alpha,ecdf,reference\n");
        for ((g, e), r) in self.grid.iter().zip(&self.ecdf).zip(&self.reference) {
            out += &format!("{g},{},{}\n", fmt9(*e), fmt9(*r));
        }
        out
    }
}

pub fn entry_samples_csv(samples: &[EntryTimeSample]) -> String {
    let mut out = String::from("n,species,T,censored\n");
    for s in samples {
        out += &format!("{},{},{},{}\n", s.n, s.species.sign(), s.value, s.censored as u8);
    }
    out
}

fn fmt9(x: f64) -> String {
    format!("{x:.9}")
}

// ---------------------------------------------------------------- densities

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityPoint {
    pub t: u64,
    pub mean: f64,
    /// 1.96 standard errors across trajectories.
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensitySeries {
    pub minus: Vec<DensityPoint>,
    pub plus: Vec<DensityPoint>,
    pub trajectories: usize,
    pub cells: usize,
}

/// Weighted least-squares slope of `ln y` against `ln t` (or `t` when
/// `log_t` is false) over points with positive mean.
pub fn fit_slope(points: &[DensityPoint], log_t: bool) -> Option<f64> {
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.mean > 0.0 && p.t > 0)
        .map(|p| {
            let x = if log_t { (p.t as f64).ln() } else { p.t as f64 };
            let rel = (p.half_width / 1.96 / p.mean).max(1e-12);
            (x, p.mean.ln(), 1.0 / (rel * rel))
        })
        .collect();
    if rows.len() < 2 {
        return None;
    }
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let mx = rows.iter().map(|r| r.0 * r.2).sum::<f64>() / sw;
    let my = rows.iter().map(|r| r.1 * r.2).sum::<f64>() / sw;
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - mx) * (r.1 - my)).sum();
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - mx) * (r.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// The points from the middle of the grid onward.
pub fn upper_half<T>(points: &[T]) -> &[T] {
    &points[points.len() / 2..]
}

impl DensitySeries {
    /// Log-log slope of `d_-` over the upper half of the grid.
    pub fn slope_minus(&self) -> Option<f64> {
        fit_slope(upper_half(&self.minus), true)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,d_minus,hw_minus,d_plus,hw_plus\n");
        for (m, p) in self.minus.iter().zip(&self.plus) {
            out += &format!("{},{},{},{},{}\n", m.t, fmt9(m.mean), fmt9(m.half_width), fmt9(p.mean), fmt9(p.half_width));
        }
        out
    }
}

/// Dyadic grid `1, 2, 4, ..., 2^max_exp`.
pub fn dyadic_grid(max_exp: u32) -> Vec<u64> {
    (0..=max_exp).map(|e| 1u64 << e).collect()
}

fn summarize(t: u64, values: &[f64]) -> DensityPoint {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    DensityPoint { t, mean, half_width: 1.96 * (var / n).sqrt() }
}

/// Samples the walk of one trajectory on `[-margin, cells + margin]`.
fn sample_walk(source: &GliderSource, cells: usize, margin: i64, rng: &mut Stream) -> Result<WalkProcess> {
    let mut line = source.line(rng)?;
    let ys = line.window(-margin, cells as i64 + margin - 1, rng);
    Ok(WalkProcess::from_steps(-margin, ys.iter().map(|&s| glider::value(s) as i64)))
}

/// Particle densities along the grid, following each initial particle.
///
/// For every trajectory the `-1` particles starting in `[0, cells)` are
/// followed at speed `v_-` and the `+1` ones at speed `v_+`; the density at
/// `t` is the fraction still alive. This is nonincreasing in `t` along each
/// trajectory and has the same expectation as the density at a fixed place.
pub fn density_decay(
    law_speeds: (i64, i64),
    source: &GliderSource,
    t_grid: &[u64],
    n_traj: usize,
    cells: usize,
    seed: u64,
) -> Result<DensitySeries> {
    let (v_minus, v_plus) = law_speeds;
    if v_minus >= v_plus {
        return Err(Error::InvalidRule(format!("gliders need v_- < v_+, got ({v_minus}, {v_plus})")));
    }
    source.validate()?;
    if cells == 0 || n_traj == 0 {
        return Err(Error::Infeasible("density decay needs cells and trajectories".into()));
    }
    let reach = v_plus - v_minus;
    let t_max = t_grid.iter().copied().max().unwrap_or(0) as i64;
    let margin = reach * t_max + 2;
    if (cells as i64 + 2 * margin) > 1 << 32 {
        return Err(Error::Infeasible("density window too large".into()));
    }
    let per_traj: Vec<(Vec<f64>, Vec<f64>)> = (0..n_traj)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = stream(seed, i as u64);
            let walk = sample_walk(source, cells, margin, &mut rng)?;
            let rec = Records::of(walk.sums());
            let off = margin as usize;
            // -1 starting at m-1 is tracked through S(m); +1 starting at p through S(p).
            let mut backs: Vec<i64> = (1..=cells).map(|m| rec.back[off + m]).collect();
            let mut aheads: Vec<i64> = (0..cells).map(|p| rec.ahead[off + p]).collect();
            backs.sort_unstable();
            aheads.sort_unstable();
            let alive = |sorted: &[i64], t: u64| {
                let need = reach * t as i64 + 2;
                (sorted.len() - sorted.partition_point(|&d| d < need)) as f64 / cells as f64
            };
            Ok((t_grid.iter().map(|&t| alive(&backs, t)).collect(), t_grid.iter().map(|&t| alive(&aheads, t)).collect()))
        })
        .collect::<Result<_>>()?;
    let column = |k: usize, minus: bool| -> Vec<f64> {
        per_traj.iter().map(|(m, p)| if minus { m[k] } else { p[k] }).collect()
    };
    Ok(DensitySeries {
        minus: t_grid.iter().enumerate().map(|(k, &t)| summarize(t, &column(k, true))).collect(),
        plus: t_grid.iter().enumerate().map(|(k, &t)| summarize(t, &column(k, false))).collect(),
        trajectories: n_traj,
        cells,
    })
}

// ---------------------------------------------------------------- convergence

/// How time-`t` configurations are produced for the convergence series.
#[derive(Clone, Debug)]
pub enum Evolution {
    /// Gliders automaton read off the walk of the source.
    Gliders { v_minus: i64, v_plus: i64, source: GliderSource },
    /// Explicit stepping of a CA or PCA from a measure.
    Stepped { dynamics: Dynamics, measure: MeasureSpec },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub t: u64,
    pub dm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSeries {
    pub points: Vec<ConvergencePoint>,
    pub max_len: usize,
    /// Log-log slope over the upper half of the grid.
    pub exponent: Option<f64>,
    /// Whether the upper half lies between `c1 t^-1/2` and `c2 t^(-1/4 + eps)`
    /// with both envelopes pinned at the grid midpoint.
    pub sandwiched: bool,
}

impl ConvergenceSeries {
    pub fn csv(&self) -> String {
        let mut out = String::from("t,dm\n");
        for p in &self.points {
            out += &format!("{},{}\n", p.t, fmt9(p.dm));
        }
        out
    }
}

/// Empirical cylinders of the time-`t` configurations, one entry per grid point.
pub fn cylinder_series(
    evolution: &Evolution,
    t_grid: &[u64],
    max_len: usize,
    n_traj: usize,
    cells: usize,
    seed: u64,
) -> Result<Vec<EmpiricalCylinders>> {
    if cells < max_len || n_traj == 0 {
        return Err(Error::Infeasible(format!("{cells} cells cannot hold words of length {max_len}")));
    }
    let t_max = t_grid.iter().copied().max().unwrap_or(0);
    let (alphabet_size, margin) = match evolution {
        Evolution::Gliders { v_minus, v_plus, source } => {
            source.validate()?;
            (3, (v_plus - v_minus) * t_max as i64 + 2)
        }
        Evolution::Stepped { dynamics, measure } => {
            if measure.alphabet_size() != dynamics.alphabet().size() {
                return Err(Error::AlphabetMismatch { expected: dynamics.alphabet().size(), found: measure.alphabet_size() });
            }
            (dynamics.alphabet().size(), (dynamics.radius() as u64 * t_max) as i64)
        }
    };
    let parts: Vec<Vec<EmpiricalCylinders>> = (0..n_traj)
        .into_par_iter()
        .map(|i| -> Result<Vec<EmpiricalCylinders>> {
            let mut rng = stream(seed, i as u64);
            let mut out: Vec<EmpiricalCylinders> =
                t_grid.iter().map(|_| EmpiricalCylinders::new(alphabet_size, max_len)).collect::<Result<_>>()?;
            match evolution {
                Evolution::Gliders { v_minus, v_plus, source } => {
                    let walk = sample_walk(source, cells, margin, &mut rng)?;
                    for (k, &t) in t_grid.iter().enumerate() {
                        let c = glider_configuration(&walk, (*v_minus, *v_plus), t as usize)?;
                        let region: Vec<Symbol> = (0..cells as i64).map(|j| c.at(j)).collect();
                        out[k].add_region(&region);
                    }
                }
                Evolution::Stepped { dynamics, measure } => {
                    let alphabet = dynamics.alphabet().clone();
                    let c = crate::lattice::window_sample(measure, &alphabet, cells, margin as usize, &mut rng)?;
                    let mut record = |s: usize, c: &Configuration| {
                        for (k, &t) in t_grid.iter().enumerate() {
                            if t as usize == s {
                                let region: Vec<Symbol> = (0..cells as i64).map(|j| c.at(j)).collect();
                                out[k].add_region(&region);
                            }
                        }
                    };
                    record(0, &c);
                    dynamics.iterate(c, t_max as usize, &mut rng, &mut record)?;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<EmpiricalCylinders> =
        t_grid.iter().map(|_| EmpiricalCylinders::new(alphabet_size, max_len)).collect::<Result<_>>()?;
    for p in &parts {
        for (acc, e) in total.iter_mut().zip(p) {
            acc.merge(e);
        }
    }
    Ok(total)
}

/// `d_M` between the time-`t` measure and `target`, truncated at `max_len`.
pub fn convergence_rate(
    evolution: &Evolution,
    target: &MeasureSpec,
    t_grid: &[u64],
    max_len: usize,
    n_traj: usize,
    cells: usize,
    seed: u64,
) -> Result<ConvergenceSeries> {
    let reference = exact_cylinders(target, max_len)?;
    let series = cylinder_series(evolution, t_grid, max_len, n_traj, cells, seed)?;
    let points: Vec<ConvergencePoint> = t_grid
        .iter()
        .zip(&series)
        .map(|(&t, e)| Ok(ConvergencePoint { t, dm: dm_distance(e, &reference, max_len)? }))
        .collect::<Result<_>>()?;
    let as_density: Vec<DensityPoint> =
        points.iter().map(|p| DensityPoint { t: p.t, mean: p.dm, half_width: 0.0 }).collect();
    let exponent = fit_slope(upper_half(&as_density), true);
    let upper = upper_half(&points);
    let mid = upper.first().copied();
    let sandwiched = mid.is_some_and(|m| {
        let tm = m.t.max(1) as f64;
        let c1 = 0.5 * m.dm * tm.sqrt();
        let c2 = 2.0 * m.dm * tm.powf(0.25 - 0.05);
        upper.iter().all(|p| {
            let t = p.t.max(1) as f64;
            c1 * t.powf(-0.5) <= p.dm && p.dm <= c2 * t.powf(-0.25 + 0.05)
        })
    });
    Ok(ConvergenceSeries { points, max_len, exponent, sandwiched })
}

#[cfg(test)]
mod tests;
