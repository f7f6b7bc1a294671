//! Particle systems `(P, pi, phi)`: exhaustive axiom checking, step
//! classification and density tracing.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{window_sample, Alphabet, Configuration, Symbol};
use crate::measures::MeasureSpec;
use crate::rng::stream;
use crate::rules::{Dynamics, LocalRule, PcaSpec, RuleLaw};

mod builtins;
pub use builtins::*;

/// Largest offset an update function may emit.
pub const MAX_OFFSET: i64 = 16;

/// A finite set of offsets in `[-16, 16]` relative to the particle's coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Images(u64);

impl Images {
    pub const EMPTY: Images = Images(0);

    pub fn at(offset: i64) -> Self {
        Self::EMPTY.with(offset)
    }

    pub fn with(self, offset: i64) -> Self {
        assert!(offset.abs() <= MAX_OFFSET, "image offset {offset} out of range");
        Images(self.0 | 1 << (offset + MAX_OFFSET))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn offsets(self) -> impl Iterator<Item = i64> {
        (0..64).filter(move |b| self.0 >> b & 1 == 1).map(|b| b as i64 - MAX_OFFSET)
    }

    pub fn min(self) -> Option<i64> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as i64 - MAX_OFFSET)
    }

    pub fn max(self) -> Option<i64> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as i64 - MAX_OFFSET)
    }

    /// Whether `self` at coordinate `k` and `other` at `k2` denote the same absolute set.
    pub fn same_set(self, k: i64, other: Images, k2: i64) -> bool {
        if self.is_empty() || other.is_empty() {
            return self.is_empty() && other.is_empty();
        }
        let d = k2 - k;
        if d < 0 {
            return other.same_set(k2, self, k);
        }
        if d >= 64 {
            return false;
        }
        let shifted = other.0 << d;
        shifted >> d == other.0 && shifted == self.0
    }

    pub fn absolute(self, k: i64) -> impl Iterator<Item = i64> {
        self.offsets().map(move |o| k + o)
    }
}

/// Read-only neighborhood of a coordinate `k` handed to an update function.
///
/// `x(d)`, `pi(d)` and `rule(d)` read the configuration, its projection and the
/// rule field at `k + d`.
pub struct View<'a> {
    k: i64,
    cells: &'a [Symbol],
    cells_origin: i64,
    pi: &'a [Symbol],
    pi_origin: i64,
    next_pi: &'a [Symbol],
    next_pi_origin: i64,
    field: Option<(&'a [Symbol], i64)>,
}

impl View<'_> {
    pub fn coordinate(&self) -> i64 {
        self.k
    }

    #[inline]
    pub fn x(&self, d: i64) -> Symbol {
        self.cells[(self.k + d - self.cells_origin) as usize]
    }

    #[inline]
    pub fn pi(&self, d: i64) -> Symbol {
        self.pi[(self.k + d - self.pi_origin) as usize]
    }

    /// Projection of the next configuration at `k + d`, for `|d| <= lookahead()`.
    #[inline]
    pub fn next_pi(&self, d: i64) -> Symbol {
        self.next_pi[(self.k + d - self.next_pi_origin) as usize]
    }

    /// Rule index applied at `k + d`; panics for deterministic dynamics.
    #[inline]
    pub fn rule(&self, d: i64) -> Symbol {
        let (f, o) = self.field.expect("rule field requested for a deterministic CA");
        f[(self.k + d - o) as usize]
    }
}

/// The update function `phi` as a local map.
///
/// `images` may read `pi` on `[k - w, k + w]`, the configuration on the cells
/// those projections depend on, and (for PCAs) the rule field on `[k - w, k + w]`.
pub trait UpdateFn: Send + Sync {
    fn window(&self) -> usize;
    /// Locality radius: every offset lies in `[-r, r]`.
    fn radius(&self) -> usize;
    fn images(&self, view: &View) -> Images;
    /// Offsets (relative to `k`) of the rule field that `images` may read.
    fn field_reach(&self) -> (i64, i64) {
        let w = self.window() as i64;
        (-w, w)
    }
    /// Radius on which `images` reads the projection of the next configuration.
    fn lookahead(&self) -> Option<usize> {
        None
    }
    /// Whether the value at this coordinate was fixed by a tie-break rule.
    fn ambiguous(&self, _view: &View) -> bool {
        false
    }
}

/// A group of particle symbols sharing a nominal speed.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedClass {
    pub name: String,
    pub members: Vec<Symbol>,
    pub speed: Option<i64>,
}

#[derive(Clone)]
pub struct ParticleSystem {
    name: String,
    particles: Vec<String>,
    morphism: LocalRule,
    update: Arc<dyn UpdateFn>,
    classes: Vec<SpeedClass>,
}

impl fmt::Debug for ParticleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParticleSystem")
            .field("name", &self.name)
            .field("particles", &self.particles)
            .field("window", &self.update.window())
            .field("radius", &self.update.radius())
            .finish()
    }
}

impl ParticleSystem {
    /// `morphism` maps into `{0} ∪ {1..=|P|}`, symbol `i` standing for `particles[i - 1]`.
    pub fn new(
        name: impl Into<String>,
        particles: Vec<String>,
        morphism: LocalRule,
        update: Arc<dyn UpdateFn>,
        classes: Vec<SpeedClass>,
    ) -> Result<Self> {
        if morphism.output().size() != particles.len() + 1 {
            return Err(Error::InvalidSystem(format!(
                "morphism has {} output symbols for {} particles",
                morphism.output().size(),
                particles.len()
            )));
        }
        if update.radius() as i64 > MAX_OFFSET {
            return Err(Error::InvalidSystem("update radius exceeds 16".into()));
        }
        for c in &classes {
            if c.members.iter().any(|&m| m == 0 || m as usize > particles.len()) {
                return Err(Error::InvalidSystem(format!("class {} names a non-particle", c.name)));
            }
        }
        Ok(Self { name: name.into(), particles, morphism, update, classes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn particles(&self) -> &[String] {
        &self.particles
    }

    pub fn particle_name(&self, symbol: Symbol) -> &str {
        if symbol == 0 {
            "0"
        } else {
            &self.particles[symbol as usize - 1]
        }
    }

    pub fn morphism(&self) -> &LocalRule {
        &self.morphism
    }

    pub fn update(&self) -> &dyn UpdateFn {
        &*self.update
    }

    pub fn classes(&self) -> &[SpeedClass] {
        &self.classes
    }

    pub fn window(&self) -> usize {
        self.update.window()
    }

    pub fn radius(&self) -> usize {
        self.update.radius()
    }

    /// Replaces the update function, keeping particles and morphism.
    pub fn with_update(&self, name: impl Into<String>, update: Arc<dyn UpdateFn>) -> Self {
        Self { name: name.into(), update, ..self.clone() }
    }

    /// Cells of `x` on either side of `k` that `phi(x, k)` may depend on.
    fn footprint(&self) -> (i64, i64) {
        let w = self.window() as i64;
        let offs = self.morphism.offsets();
        (-w + offs.start(), w + offs.end())
    }
}

/// Componentwise projection `pi(c)`.
pub fn project(ps: &ParticleSystem, c: &Configuration) -> Result<Configuration> {
    ps.morphism.apply(c)
}

// ---------------------------------------------------------------- frames

/// One step of a window together with projections and updates, on plain coordinates.
struct Frame {
    cells: Vec<Symbol>,
    origin: i64,
    field: Option<(Vec<Symbol>, i64)>,
    pi: Vec<Symbol>,
    pi_origin: i64,
    next_pi: Vec<Symbol>,
    next_pi_origin: i64,
    phi: Vec<Option<Images>>,
    phi_origin: i64,
    ambiguous: u64,
}

impl Frame {
    fn build(
        ps: &ParticleSystem,
        cells: Vec<Symbol>,
        origin: i64,
        field: Option<(Vec<Symbol>, i64)>,
        next: &[Symbol],
        next_origin: i64,
    ) -> Self {
        let m = &ps.morphism;
        let lo = *m.offsets().start();
        let pi = m.apply_cells(&cells);
        let pi_origin = origin - lo;
        let next_pi = m.apply_cells(next);
        let next_pi_origin = next_origin - lo;
        let (fl, fh) = ps.footprint();
        let first = origin - fl;
        let last = origin + cells.len() as i64 - 1 - fh;
        let (first, last) = match &field {
            Some((f, fo)) => {
                let (rl, rh) = ps.update.field_reach();
                (first.max(fo - rl), last.min(fo + f.len() as i64 - 1 - rh))
            }
            None => (first, last),
        };
        let (first, last) = match ps.update.lookahead() {
            Some(h) => {
                let h = h as i64;
                (first.max(next_pi_origin + h), last.min(next_pi_origin + next_pi.len() as i64 - 1 - h))
            }
            None => (first, last),
        };
        let mut phi = Vec::new();
        let mut ambiguous = 0;
        for k in first..=last {
            let view = View {
                k,
                cells: &cells,
                cells_origin: origin,
                pi: &pi,
                pi_origin,
                next_pi: &next_pi,
                next_pi_origin,
                field: field.as_ref().map(|(f, o)| (f.as_slice(), *o)),
            };
            phi.push(Some(ps.update.images(&view)));
            if ps.update.ambiguous(&view) {
                ambiguous += 1;
            }
        }
        Frame { cells, origin, field, pi, pi_origin, next_pi, next_pi_origin, phi, phi_origin: first, ambiguous }
    }

    fn phi(&self, k: i64) -> Option<Images> {
        let i = k - self.phi_origin;
        if i < 0 {
            return None;
        }
        self.phi.get(i as usize).copied().flatten()
    }

    fn pi_at(&self, k: i64) -> Option<Symbol> {
        let i = k - self.pi_origin;
        (i >= 0).then(|| self.pi.get(i as usize).copied()).flatten()
    }

    fn next_pi_at(&self, k: i64) -> Option<Symbol> {
        let i = k - self.next_pi_origin;
        (i >= 0).then(|| self.next_pi.get(i as usize).copied()).flatten()
    }

    fn phi_range(&self) -> std::ops::Range<i64> {
        self.phi_origin..self.phi_origin + self.phi.len() as i64
    }

    /// Coordinates sharing the nonempty image `img` of `k`; `None` if not all are computable.
    fn preimage(&self, k: i64, img: Images, r: i64) -> Option<Vec<i64>> {
        let hi = img.max()? + k;
        let lo = img.min()? + k;
        let mut pre = Vec::new();
        for k2 in hi - r..=lo + r {
            let i2 = self.phi(k2)?;
            if i2.same_set(k2, img, k) {
                pre.push(k2);
            }
        }
        Some(pre)
    }
}

/// Per-coordinate coalescence tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    None,
    Progressing,
    Interacting,
    /// Neither behavior: the system is not coalescent here.
    Violating,
}

fn classify(frame: &Frame, ps: &ParticleSystem, k: i64) -> Option<Tag> {
    let p = frame.pi_at(k)?;
    if p == 0 {
        return Some(Tag::None);
    }
    let img = frame.phi(k)?;
    if img.is_empty() {
        return Some(Tag::Interacting);
    }
    let pre = frame.preimage(k, img, ps.radius() as i64)?;
    if img.len() == 1 && pre.len() == 1 {
        let m = k + img.min().unwrap();
        let q = frame.next_pi_at(m)?;
        return Some(if q == p { Tag::Progressing } else { Tag::Violating });
    }
    Some(if img.len() < pre.len() { Tag::Interacting } else { Tag::Violating })
}

// ---------------------------------------------------------------- checking

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    Locality,
    Surjectivity,
    ParticleControl,
    Disjunction,
    Coalescence,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Locality,
        Condition::Surjectivity,
        Condition::ParticleControl,
        Condition::Disjunction,
        Condition::Coalescence,
    ];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Locality => "locality",
            Condition::Surjectivity => "surjectivity",
            Condition::ParticleControl => "particle-control",
            Condition::Disjunction => "disjunction",
            Condition::Coalescence => "coalescence",
        })
    }
}

/// A finite word (and rule field) reproducing a violation at `coordinate`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub word: Vec<Symbol>,
    pub word_origin: i64,
    pub field: Option<Vec<Symbol>>,
    pub field_origin: i64,
    pub coordinate: i64,
    pub detail: String,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word: String = self.word.iter().map(|s| char::from_digit(u32::from(*s), 36).unwrap_or('?')).collect();
        write!(f, "word {word} (origin {}) at {}: {}", self.word_origin, self.coordinate, self.detail)?;
        if let Some(field) = &self.field {
            let field: String = field.iter().map(|s| char::from_digit(u32::from(*s), 36).unwrap_or('?')).collect();
            write!(f, "; rules {field} (origin {})", self.field_origin)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionResult {
    pub condition: Condition,
    /// Number of (word, coordinate) instances at which the condition was determined.
    pub instances: u64,
    pub violations: u64,
    pub witness: Option<Witness>,
}

impl ConditionResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    pub system: String,
    pub mode: CheckMode,
    pub enum_len: usize,
    pub words: u64,
    pub fields: u64,
    pub conditions: Vec<ConditionResult>,
    /// Coordinates where the update function fell back on a tie-break.
    pub ambiguous: u64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(ConditionResult::passed)
    }

    pub fn condition(&self, c: Condition) -> &ConditionResult {
        self.conditions.iter().find(|r| r.condition == c).expect("all conditions are reported")
    }

    pub fn first_failure(&self) -> Option<&ConditionResult> {
        self.conditions.iter().find(|r| !r.passed())
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            CheckMode::Exhaustive => writeln!(
                f,
                "{}: {} words x {} rule fields at length {}",
                self.system, self.words, self.fields, self.enum_len
            )?,
            CheckMode::Sampled { seed } => writeln!(
                f,
                "{}: {} sampled windows of length {} (seed {seed})",
                self.system, self.words, self.enum_len
            )?,
        }
        for c in &self.conditions {
            match &c.witness {
                None => writeln!(f, "  {:<16} pass ({} instances)", c.condition.to_string(), c.instances)?,
                Some(w) => writeln!(f, "  {:<16} FAIL ({} violations) {w}", c.condition.to_string(), c.violations)?,
            }
        }
        if self.ambiguous > 0 {
            writeln!(f, "  ambiguous tie-breaks: {}", self.ambiguous)?;
        }
        Ok(())
    }
}

/// How the words of a check were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    /// Every word of the length and every admissible rule field.
    Exhaustive,
    /// Uniform random words with rule fields drawn from the PCA's law.
    Sampled { seed: u64 },
}

#[derive(Default)]
struct Tally {
    instances: [u64; 5],
    counts: [u64; 5],
    witnesses: [Option<(u64, Witness)>; 5],
    ambiguous: u64,
}

impl Tally {
    fn seen(&mut self, c: Condition) {
        self.instances[c as usize] += 1;
    }

    fn record(&mut self, c: Condition, order: u64, frame: &Frame, k: i64, detail: impl FnOnce() -> String) {
        let i = c as usize;
        self.counts[i] += 1;
        if self.witnesses[i].as_ref().is_none_or(|(o, _)| order < *o) {
            let (field, field_origin) = match &frame.field {
                Some((f, o)) => (Some(f.clone()), *o),
                None => (None, 0),
            };
            self.witnesses[i] = Some((
                order,
                Witness {
                    word: frame.cells.clone(),
                    word_origin: frame.origin,
                    field,
                    field_origin,
                    coordinate: k,
                    detail: detail(),
                },
            ));
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for i in 0..5 {
            self.instances[i] += other.instances[i];
            self.counts[i] += other.counts[i];
            if let Some((o, w)) = other.witnesses[i].clone() {
                if self.witnesses[i].as_ref().is_none_or(|(so, _)| o < *so) {
                    self.witnesses[i] = Some((o, w));
                }
            }
        }
        self.ambiguous += other.ambiguous;
        self
    }
}

/// Checks all five conditions at every coordinate of `frame` whose footprint is determined.
fn check_frame(frame: &Frame, ps: &ParticleSystem, order: u64, tally: &mut Tally) {
    let r = ps.radius() as i64;
    let name = |s: Symbol| ps.particle_name(s).to_string();
    tally.ambiguous += frame.ambiguous;
    for k in frame.phi_range() {
        let img = frame.phi(k).unwrap();
        let p = frame.pi_at(k).unwrap();
        tally.seen(Condition::Locality);
        tally.seen(Condition::ParticleControl);
        // Locality.
        if img.offsets().any(|o| o.abs() > r) {
            tally.record(Condition::Locality, order, frame, k, || format!("image offsets {:?} exceed radius {r}", img.offsets().collect::<Vec<_>>()));
        }
        // Particle control.
        if p == 0 && !img.is_empty() {
            tally.record(Condition::ParticleControl, order, frame, k, || "non-particle has an image".into());
        }
        if p != 0 {
            for m in img.absolute(k) {
                if frame.next_pi_at(m) == Some(0) {
                    tally.record(Condition::ParticleControl, order, frame, k, || {
                        format!("{} sent to {m}, which holds no particle", name(p))
                    });
                }
            }
        }
        // Disjunction with later coordinates that could cross.
        for k2 in k + 1..=k + 2 * r {
            let Some(img2) = frame.phi(k2) else { break };
            tally.seen(Condition::Disjunction);
            if img.is_empty() || img2.is_empty() || img.same_set(k, img2, k2) {
                continue;
            }
            if k + img.max().unwrap() >= k2 + img2.min().unwrap() {
                tally.record(Condition::Disjunction, order, frame, k, || {
                    format!("images of {k} and {k2} overlap or cross without being equal")
                });
            }
        }
        // Coalescence.
        if p != 0 {
            if let Some(tag) = classify(frame, ps, k) {
                tally.seen(Condition::Coalescence);
                if tag == Tag::Violating {
                    tally.record(Condition::Coalescence, order, frame, k, || {
                        format!("{} neither progresses with its type nor interacts destructively", name(p))
                    });
                }
            }
        }
    }
    // Surjectivity: each particle of pi(F(x)) is the image of some coordinate.
    let range = frame.phi_range();
    for (i, &q) in frame.next_pi.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let m = frame.next_pi_origin + i as i64;
        if m - r < range.start || m + r >= range.end {
            continue;
        }
        tally.seen(Condition::Surjectivity);
        let hit = (m - r..=m + r).any(|k| frame.phi(k).unwrap().absolute(k).any(|x| x == m));
        if !hit {
            tally.record(Condition::Surjectivity, order, frame, m, || format!("{} at {m} has no preimage", name(q)));
        }
    }
}

/// All rule fields of length `n` in the support of the PCA's law, in lexicographic order.
fn admissible_fields(law: &RuleLaw, rules: usize, n: usize) -> Vec<Vec<Symbol>> {
    let (start, allowed): (Vec<bool>, Vec<Vec<bool>>) = match law {
        RuleLaw::Independent(p) => {
            let s: Vec<bool> = p.iter().map(|&x| x > 0.0).collect();
            (s.clone(), vec![s; rules])
        }
        RuleLaw::MarkovField { chain, .. } => (
            chain.stationary().iter().map(|&x| x > 0.0).collect(),
            chain.transition().chunks(rules).map(|row| row.iter().map(|&x| x > 0.0).collect()).collect(),
        ),
    };
    let mut out: Vec<Vec<Symbol>> = (0..rules).filter(|&i| start[i]).map(|i| vec![i as Symbol]).collect();
    for _ in 1..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().unwrap() as usize;
                (0..rules).filter(|&j| allowed[last][j]).map(move |j| {
                    let mut v = w.clone();
                    v.push(j as Symbol);
                    v
                }).collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// Minimal enumeration length for which every condition has at least one determined instance.
pub fn soundness_length(dynamics: &Dynamics, ps: &ParticleSystem) -> usize {
    2 * (ps.window() + ps.radius() + dynamics.radius()) + 1
}

/// Verifies the five axioms on every word of length `enum_len` (and, for a PCA,
/// every rule field in the support of its law).
pub fn check_particle_system(dynamics: &Dynamics, ps: &ParticleSystem, enum_len: usize) -> Result<CheckReport> {
    let needed = soundness_length(dynamics, ps);
    if enum_len < needed {
        return Err(Error::Infeasible(format!(
            "enumeration length {enum_len} is below the soundness bound {needed}"
        )));
    }
    if dynamics.alphabet().size() != ps.morphism.input().size() {
        return Err(Error::AlphabetMismatch {
            expected: dynamics.alphabet().size(),
            found: ps.morphism.input().size(),
        });
    }
    let a = dynamics.alphabet().size();
    let words = a
        .checked_pow(enum_len as u32)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| Error::Infeasible(format!("{a}^{enum_len} words is too many to enumerate")))?;
    let offsets = dynamics.offsets();
    let (lo, span) = (*offsets.start(), (offsets.end() - offsets.start() + 1) as usize);
    let n_out = enum_len + 1 - span;
    let fields = match dynamics {
        Dynamics::Deterministic(_) => vec![],
        Dynamics::Probabilistic(p) => admissible_fields(p.law(), p.rules().len(), n_out),
    };
    let n_fields = fields.len().max(1) as u64;
    let tally = (0..words)
        .into_par_iter()
        .fold(Tally::default, |mut tally, idx| {
            let mut cells = vec![0; enum_len];
            let mut v = idx;
            for c in cells.iter_mut().rev() {
                *c = (v % a) as Symbol;
                v /= a;
            }
            match dynamics {
                Dynamics::Deterministic(rule) => {
                    let next = rule.apply_cells(&cells);
                    let frame = Frame::build(ps, cells, 0, None, &next, -lo);
                    check_frame(&frame, ps, idx as u64, &mut tally);
                }
                Dynamics::Probabilistic(pca) => {
                    let c = Configuration::new(dynamics.alphabet().clone(), cells.clone(), 0)
                        .expect("enumerated word is valid");
                    for (fi, field) in fields.iter().enumerate() {
                        let next = pca.apply_with_field(&c, field).expect("field length matches");
                        let frame =
                            Frame::build(ps, cells.clone(), 0, Some((field.clone(), -lo)), next.cells(), -lo);
                        check_frame(&frame, ps, idx as u64 * n_fields + fi as u64, &mut tally);
                    }
                }
            }
            tally
        })
        .reduce(Tally::default, Tally::merge);
    Ok(report(ps, CheckMode::Exhaustive, enum_len, words as u64, n_fields, tally))
}

fn report(ps: &ParticleSystem, mode: CheckMode, enum_len: usize, words: u64, fields: u64, tally: Tally) -> CheckReport {
    let conditions = Condition::ALL
        .iter()
        .map(|&c| ConditionResult {
            condition: c,
            instances: tally.instances[c as usize],
            violations: tally.counts[c as usize],
            witness: tally.witnesses[c as usize].clone().map(|(_, w)| w),
        })
        .collect();
    CheckReport { system: ps.name.clone(), mode, enum_len, words, fields, conditions, ambiguous: tally.ambiguous }
}

/// Exhaustive check with the rule field held constant, once per constituent rule.
pub fn check_per_rule(dynamics: &Dynamics, ps: &ParticleSystem, enum_len: usize) -> Result<Vec<CheckReport>> {
    let Dynamics::Probabilistic(pca) = dynamics else {
        return Ok(vec![check_particle_system(dynamics, ps, enum_len)?]);
    };
    let n = pca.rules().len();
    (0..n)
        .map(|i| {
            let mut p = vec![0.0; n];
            p[i] = 1.0;
            let only = PcaSpec::new(pca.rules().to_vec(), RuleLaw::Independent(p))?;
            let mut rep = check_particle_system(&Dynamics::Probabilistic(only), ps, enum_len)?;
            rep.system = format!("{} (rule {i} only)", ps.name);
            Ok(rep)
        })
        .collect()
}

/// Checks the axioms on `samples` uniform random windows of length `len`,
/// with rule fields drawn from the PCA's law.
pub fn check_particle_system_sampled(
    dynamics: &Dynamics,
    ps: &ParticleSystem,
    len: usize,
    samples: u64,
    seed: u64,
) -> Result<CheckReport> {
    let needed = soundness_length(dynamics, ps);
    if len < needed {
        return Err(Error::Infeasible(format!("window length {len} is below the soundness bound {needed}")));
    }
    if dynamics.alphabet().size() != ps.morphism.input().size() {
        return Err(Error::AlphabetMismatch {
            expected: dynamics.alphabet().size(),
            found: ps.morphism.input().size(),
        });
    }
    let alphabet = dynamics.alphabet().clone();
    let uniform = MeasureSpec::uniform(alphabet.size())?;
    let lo = *dynamics.offsets().start();
    let tally = (0..samples)
        .into_par_iter()
        .fold(Tally::default, |mut tally, i| {
            let mut rng = stream(seed, i);
            let c = window_sample(&uniform, &alphabet, len, 0, &mut rng).expect("window is nonempty");
            let step = dynamics.step(&c, &mut rng).expect("window absorbs one step");
            let frame = Frame::build(
                ps,
                c.cells().to_vec(),
                c.origin(),
                step.field.map(|f| (f, c.origin() - lo)),
                step.config.cells(),
                step.config.origin(),
            );
            check_frame(&frame, ps, i, &mut tally);
            tally
        })
        .reduce(Tally::default, Tally::merge);
    Ok(report(ps, CheckMode::Sampled { seed }, len, samples, 1, tally))
}

/// Tags every coordinate of `c` at which the classification is determined.
///
/// Returns `(first coordinate, tags)`.
pub fn classify_step(dynamics: &Dynamics, ps: &ParticleSystem, c: &Configuration, field: Option<&[Symbol]>) -> Result<(i64, Vec<Tag>)> {
    let lo = *dynamics.offsets().start();
    let next = match (dynamics, field) {
        (Dynamics::Deterministic(r), _) => r.apply(c)?,
        (Dynamics::Probabilistic(p), Some(f)) => p.apply_with_field(c, f)?,
        (Dynamics::Probabilistic(_), None) => {
            return Err(Error::Infeasible("classifying a PCA step needs its rule field".into()))
        }
    };
    let frame = Frame::build(
        ps,
        c.cells().to_vec(),
        c.origin(),
        field.map(|f| (f.to_vec(), c.origin() - lo)),
        next.cells(),
        next.origin(),
    );
    let range = frame.phi_range();
    let mut tags = Vec::new();
    let mut first = None;
    for k in range {
        if let Some(t) = classify(&frame, ps, k) {
            first.get_or_insert(k);
            tags.push(t);
        } else if first.is_some() {
            break;
        }
    }
    Ok((first.unwrap_or(c.origin()), tags))
}

/// Commutation check `pi(F(x)) = G(pi(x))` on every word of length `enum_len`.
///
/// Returns the first violating word and coordinate, if any.
pub fn check_factor(
    rule: &LocalRule,
    factor: &LocalRule,
    target: &LocalRule,
    enum_len: usize,
) -> Result<Option<(Vec<Symbol>, i64)>> {
    if factor.output().size() != target.input().size() {
        return Err(Error::AlphabetMismatch { expected: target.input().size(), found: factor.output().size() });
    }
    let a = rule.input().size();
    let words = a
        .checked_pow(enum_len as u32)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| Error::Infeasible(format!("{a}^{enum_len} words is too many to enumerate")))?;
    let found = (0..words).into_par_iter().find_first(|&idx| {
        let mut cells = vec![0; enum_len];
        let mut v = idx;
        for c in cells.iter_mut().rev() {
            *c = (v % a) as Symbol;
            v /= a;
        }
        // pi(F(x)) on coordinates starting at -lo_F - lo_pi.
        let fx = rule.apply_cells(&cells);
        let left = factor.apply_cells(&fx);
        let left_origin = -rule.offsets().start() - factor.offsets().start();
        let px = factor.apply_cells(&cells);
        let right = target.apply_cells(&px);
        let right_origin = -factor.offsets().start() - target.offsets().start();
        (0..left.len()).any(|i| {
            let m = left_origin + i as i64;
            let j = m - right_origin;
            j >= 0 && (j as usize) < right.len() && right[j as usize] != left[i]
        })
    });
    Ok(found.map(|idx| {
        let mut cells = vec![0; enum_len];
        let mut v = idx;
        for c in cells.iter_mut().rev() {
            *c = (v % a) as Symbol;
            v /= a;
        }
        (cells, 0)
    }))
}

// ---------------------------------------------------------------- densities

/// One step's densities on a fixed observation region, averaged over trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub t: usize,
    pub total: f64,
    pub per_particle: Vec<f64>,
    pub progressing: f64,
    pub interacting: f64,
    /// Density of interaction groups (shared images, or runs of vanishing particles).
    pub interactions: f64,
    /// Smallest slack of `D(Fx) <= D(x) - D_inter/(r+1) + correction` over trajectories.
    pub slack_total: f64,
    /// Smallest slack of `D_p(Fx) <= D_p(x) + D_inter + correction` over particles and trajectories.
    pub slack_particle: f64,
    /// Coordinates classified as neither progressing nor interacting.
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityTrace {
    pub system: String,
    pub particles: Vec<String>,
    pub region: usize,
    pub trajectories: usize,
    pub rows: Vec<DensityRow>,
    /// Boundary correction `(2r + 2) / region`.
    pub correction: f64,
    /// Number of (trajectory, step) pairs on which an inequality failed.
    pub inequality_failures: u64,
    /// Number of (trajectory, step) pairs on which `D` increased beyond the correction.
    pub monotonicity_failures: u64,
}

impl DensityTrace {
    pub fn inequalities_hold(&self) -> bool {
        self.inequality_failures == 0
    }

    pub fn csv_header(&self) -> String {
        let mut h = vec!["t".to_string(), "D".into(), "D_inter".into(), "D_prog".into()];
        h.extend(self.particles.iter().map(|p| format!("D_{p}")));
        h.extend(["interactions".into(), "slack_total".into(), "slack_particle".into(), "violations".into()]);
        h.join(",")
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.t.to_string(), fmt_f(r.total), fmt_f(r.interacting), fmt_f(r.progressing)];
                v.extend(r.per_particle.iter().map(|&x| fmt_f(x)));
                v.extend([fmt_f(r.interactions), fmt_f(r.slack_total), fmt_f(r.slack_particle), r.violations.to_string()]);
                v.join(",")
            })
            .collect()
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.9}")
}

struct StepCounts {
    total: u64,
    per_particle: Vec<u64>,
    progressing: u64,
    interacting: u64,
    interactions: u64,
    violations: u64,
}

fn count_step(frame: &Frame, ps: &ParticleSystem, lo: i64, hi: i64) -> StepCounts {
    let n = ps.particles.len();
    let r = ps.radius() as i64;
    let mut s = StepCounts {
        total: 0,
        per_particle: vec![0; n],
        progressing: 0,
        interacting: 0,
        interactions: 0,
        violations: 0,
    };
    let mut last_vanishing: Option<i64> = None;
    for k in lo..=hi {
        let p = frame.pi_at(k).expect("observation region inside projection");
        if p == 0 {
            continue;
        }
        s.total += 1;
        s.per_particle[p as usize - 1] += 1;
        match classify(frame, ps, k).expect("observation region fully determined") {
            Tag::Progressing => s.progressing += 1,
            Tag::Interacting => {
                s.interacting += 1;
                let img = frame.phi(k).unwrap();
                if img.is_empty() {
                    if last_vanishing.is_none_or(|j| k - j > 2 * r) {
                        s.interactions += 1;
                    }
                    last_vanishing = Some(k);
                } else {
                    // Count a shared image once, at its leftmost preimage.
                    let pre = frame.preimage(k, img, r).unwrap();
                    if pre.first() == Some(&k) {
                        s.interactions += 1;
                    }
                }
            }
            Tag::Violating => s.violations += 1,
            Tag::None => {}
        }
    }
    s
}

/// Monte Carlo densities of particles over `t_max` steps.
///
/// Every trajectory observes the fixed region `[0, cells - 1]`; the sampled
/// window carries enough margin that projections, updates and preimages are
/// determined there at every step.
pub fn trace_densities(
    dynamics: &Dynamics,
    ps: &ParticleSystem,
    measure: &MeasureSpec,
    t_max: usize,
    n_traj: usize,
    cells: usize,
    seed: u64,
) -> Result<DensityTrace> {
    if cells == 0 || n_traj == 0 {
        return Err(Error::Infeasible("density trace needs cells and trajectories".into()));
    }
    let rho = dynamics.radius();
    let (fl, fh) = ps.footprint();
    let r = ps.radius();
    let (rl, rh) = ps.update.field_reach();
    let reach = [fl.abs(), fh.abs(), rl.abs(), rh.abs(), ps.update.lookahead().unwrap_or(0) as i64 + 3]
        .into_iter()
        .max()
        .unwrap() as usize;
    let extra = reach + 2 * r + 2 * rho + 4;
    let margin = rho * (t_max + 1) + extra;
    let alphabet = dynamics.alphabet().clone();
    let n = ps.particles.len();
    let lo = *dynamics.offsets().start();
    let correction = (2 * r + 2) as f64 / cells as f64;
    type Traj = Result<(Vec<StepCounts>, u64, u64, Vec<(f64, f64)>)>;
    let runs: Vec<Traj> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut c = window_sample(measure, &alphabet, cells, margin, &mut rng)?;
            let mut counts = Vec::with_capacity(t_max + 1);
            let mut ineq_fail = 0;
            let mut mono_fail = 0;
            let mut slacks = Vec::with_capacity(t_max);
            for _ in 0..=t_max {
                let step = dynamics.step(&c, &mut rng)?;
                let frame = Frame::build(
                    ps,
                    c.cells().to_vec(),
                    c.origin(),
                    step.field.clone().map(|f| (f, c.origin() - lo)),
                    step.config.cells(),
                    step.config.origin(),
                );
                counts.push(count_step(&frame, ps, 0, cells as i64 - 1));
                c = step.config;
            }
            for t in 0..t_max {
                let (now, next) = (&counts[t], &counts[t + 1]);
                let len = cells as f64;
                let d = now.total as f64 / len;
                let d_next = next.total as f64 / len;
                let inter = now.interacting as f64 / len;
                let slack_total = d - inter / (r as f64 + 1.0) + correction - d_next;
                let slack_particle = (0..n)
                    .map(|p| {
                        now.per_particle[p] as f64 / len + inter + correction - next.per_particle[p] as f64 / len
                    })
                    .fold(f64::INFINITY, f64::min);
                if slack_total < -1e-12 || slack_particle < -1e-12 {
                    ineq_fail += 1;
                }
                if d_next > d + correction + 1e-12 {
                    mono_fail += 1;
                }
                slacks.push((slack_total, slack_particle));
            }
            Ok((counts, ineq_fail, mono_fail, slacks))
        })
        .collect();
    let mut rows: Vec<DensityRow> = (0..=t_max)
        .map(|t| DensityRow {
            t,
            total: 0.0,
            per_particle: vec![0.0; n],
            progressing: 0.0,
            interacting: 0.0,
            interactions: 0.0,
            slack_total: f64::INFINITY,
            slack_particle: f64::INFINITY,
            violations: 0,
        })
        .collect();
    let mut inequality_failures = 0;
    let mut monotonicity_failures = 0;
    let scale = 1.0 / (cells as f64 * n_traj as f64);
    for run in runs {
        let (counts, ineq, mono, slacks) = run?;
        inequality_failures += ineq;
        monotonicity_failures += mono;
        for (row, s) in rows.iter_mut().zip(&counts) {
            row.total += s.total as f64 * scale;
            row.progressing += s.progressing as f64 * scale;
            row.interacting += s.interacting as f64 * scale;
            row.interactions += s.interactions as f64 * scale;
            row.violations += s.violations;
            for (a, &b) in row.per_particle.iter_mut().zip(&s.per_particle) {
                *a += b as f64 * scale;
            }
        }
        for (row, (st, sp)) in rows.iter_mut().zip(slacks) {
            row.slack_total = row.slack_total.min(st);
            row.slack_particle = row.slack_particle.min(sp);
        }
    }
    Ok(DensityTrace {
        system: ps.name.clone(),
        particles: ps.particles.clone(),
        region: cells,
        trajectories: n_traj,
        rows,
        correction,
        inequality_failures,
        monotonicity_failures,
    })
}

/// Helper for building morphisms on contiguous neighborhoods.
pub(crate) fn morphism(
    input: &Alphabet,
    particles: usize,
    lo: i64,
    len: usize,
    f: impl Fn(&[Symbol]) -> Symbol,
) -> Result<LocalRule> {
    LocalRule::from_fn(input.clone(), Alphabet::new(particles + 1)?, lo, len, f)
}
