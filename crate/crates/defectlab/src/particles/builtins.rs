//! Built-in particle systems and glider factors.

use std::sync::Arc;

use super::{check_factor, morphism, Images, ParticleSystem, SpeedClass, UpdateFn, View};
use crate::error::{Error, Result};
use crate::lattice::{glider, Alphabet, Symbol};
use crate::rules::{self, line, Dynamics, LocalRule};

fn binary() -> Alphabet {
    Alphabet::new(2).expect("nonzero size")
}

fn class(name: &str, members: Vec<Symbol>, speed: Option<i64>) -> SpeedClass {
    SpeedClass { name: name.into(), members, speed }
}

// ---------------------------------------------------------------- traffic

const P01: Symbol = 1;
const P10: Symbol = 2;

/// Holes `00` drift right and jams `11` drift left; neighbors heading into each other vanish.
struct TrafficUpdate {
    /// Swapped directions (a deliberately wrong variant used to exercise the checker).
    mirrored: bool,
}

impl UpdateFn for TrafficUpdate {
    fn window(&self) -> usize {
        2
    }

    fn radius(&self) -> usize {
        1
    }

    fn images(&self, v: &View) -> Images {
        let (right, left) = if self.mirrored { (P10, P01) } else { (P01, P10) };
        match v.pi(0) {
            p if p == right && v.pi(1) != left && v.pi(2) != left => Images::at(1),
            p if p == left && v.pi(-1) != right && v.pi(-2) != right => Images::at(-1),
            _ => Images::EMPTY,
        }
    }
}

fn traffic_morphism() -> LocalRule {
    morphism(&binary(), 2, 0, 2, |w| match w {
        [0, 0] => P01,
        [1, 1] => P10,
        _ => 0,
    })
    .expect("traffic morphism is well formed")
}

/// Rule #184 with `00 -> p01` (speed +1) and `11 -> p10` (speed -1).
pub fn traffic_system() -> ParticleSystem {
    ParticleSystem::new(
        "traffic",
        vec!["p01".into(), "p10".into()],
        traffic_morphism(),
        Arc::new(TrafficUpdate { mirrored: false }),
        vec![class("p01", vec![P01], Some(1)), class("p10", vec![P10], Some(-1))],
    )
    .expect("traffic system is well formed")
}

/// Rule #184 with the particle directions swapped; fails the axioms.
pub fn traffic_system_mirrored() -> ParticleSystem {
    traffic_system().with_update("traffic-mirrored", Arc::new(TrafficUpdate { mirrored: true }))
}

// ---------------------------------------------------------------- cyclic

/// Walls `ab` of the n-cyclic CA.
///
/// A wall where `b = a - 1` moves right, one where `b = a + 1` moves left,
/// any other wall stays. Right- and left-movers meeting head-on vanish;
/// a mover running into a stationary wall merges with it in place.
struct CyclicUpdate {
    kind: Vec<i8>,
    /// Stationary walls frozen as well as movers (a deliberately wrong variant).
    frozen: bool,
}

impl UpdateFn for CyclicUpdate {
    fn window(&self) -> usize {
        2
    }

    fn radius(&self) -> usize {
        1
    }

    fn images(&self, v: &View) -> Images {
        let kind = |d: i64| self.kind[v.pi(d) as usize];
        if self.frozen {
            return if v.pi(0) == 0 { Images::EMPTY } else { Images::at(0) };
        }
        match kind(0) {
            1 => {
                if kind(1) == -1 || (v.pi(1) == 0 && kind(2) == -1) {
                    Images::EMPTY
                } else {
                    Images::at(1)
                }
            }
            -1 => {
                if kind(-1) == 1 || (v.pi(-1) == 0 && kind(-2) == 1) {
                    Images::EMPTY
                } else {
                    Images::at(-1)
                }
            }
            _ if v.pi(0) != 0 => Images::at(0),
            _ => Images::EMPTY,
        }
    }
}

/// Particle names, labelling morphism, direction of each particle symbol and speed classes.
type Parts = (Vec<String>, LocalRule, Vec<i8>, Vec<SpeedClass>);

fn cyclic_parts(n: usize) -> Result<Parts> {
    if !(3..=36).contains(&n) {
        return Err(Error::InvalidSystem(format!("cyclic particle system needs 3..=36 states, got {n}")));
    }
    let digit = |a: usize| char::from_digit(a as u32, 36).unwrap();
    let mut names = Vec::new();
    let mut kind = vec![0i8];
    let mut classes = vec![class("right", vec![], Some(1)), class("left", vec![], Some(-1)), class("still", vec![], Some(0))];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            names.push(format!("p{}{}", digit(a), digit(b)));
            let sym = names.len() as Symbol;
            let k = if (a + n - 1) % n == b {
                1
            } else if (a + 1) % n == b {
                -1
            } else {
                0
            };
            kind.push(k);
            classes[match k {
                1 => 0,
                -1 => 1,
                _ => 2,
            }]
            .members
            .push(sym);
        }
    }
    let index = move |a: Symbol, b: Symbol| -> Symbol {
        let (a, b) = (a as usize, b as usize);
        (1 + a * (n - 1) + if b < a { b } else { b - 1 }) as Symbol
    };
    let m = morphism(&Alphabet::new(n)?, names.len(), 0, 2, |w| if w[0] == w[1] { 0 } else { index(w[0], w[1]) })?;
    classes.retain(|c| !c.members.is_empty());
    Ok((names, m, kind, classes))
}

/// Interface particles `p_ab` (`a != b`) of the n-cyclic CA.
pub fn cyclic_system(n: usize) -> Result<ParticleSystem> {
    let (names, m, kind, classes) = cyclic_parts(n)?;
    ParticleSystem::new(format!("cyclic-{n}"), names, m, Arc::new(CyclicUpdate { kind, frozen: false }), classes)
}

/// Every wall mapped to itself; fails surjectivity and particle control.
pub fn cyclic_system_frozen(n: usize) -> Result<ParticleSystem> {
    let (names, m, kind, classes) = cyclic_parts(n)?;
    ParticleSystem::new(format!("cyclic-{n}-frozen"), names, m, Arc::new(CyclicUpdate { kind, frozen: true }), classes)
}

// ---------------------------------------------------------------- one-sided captive

/// Walls `ab` of a one-sided captive CA: stationary when `f(a, b) = a`,
/// moving left when `f(a, b) = b`. A left-mover reaching a stationary wall
/// merges into a wall `ac` at the stationary position, or both vanish if `a = c`.
struct CaptiveUpdate {
    /// `kind[s]`: 0 stationary, -1 left-moving, for particle symbol `s`.
    kind: Vec<i8>,
    /// Merged walls dropped instead of kept (a deliberately wrong variant).
    drop_merges: bool,
}

impl UpdateFn for CaptiveUpdate {
    fn window(&self) -> usize {
        1
    }

    fn radius(&self) -> usize {
        1
    }

    fn images(&self, v: &View) -> Images {
        let p = v.pi(0);
        if p == 0 {
            return Images::EMPTY;
        }
        let moving = |d: i64| v.pi(d) != 0 && self.kind[v.pi(d) as usize] == -1;
        let still = |d: i64| v.pi(d) != 0 && self.kind[v.pi(d) as usize] == 0;
        if self.kind[p as usize] == 0 {
            if moving(1) && (self.drop_merges || v.x(0) == v.x(2)) {
                Images::EMPTY
            } else {
                Images::at(0)
            }
        } else if still(-1) && (self.drop_merges || v.x(-1) == v.x(1)) {
            Images::EMPTY
        } else {
            Images::at(-1)
        }
    }
}

fn captive_parts(size: usize, f: &[Symbol]) -> Result<Parts> {
    rules::make_one_sided_captive(size, f)?;
    let digit = |a: usize| char::from_digit(a as u32, 36).unwrap();
    let mut names = Vec::new();
    let mut kind = vec![0i8];
    let mut still = vec![];
    let mut moving = vec![];
    let mut index = vec![0 as Symbol; size * size];
    for a in 0..size {
        for b in 0..size {
            if a == b {
                continue;
            }
            names.push(format!("p{}{}", digit(a), digit(b)));
            let sym = names.len() as Symbol;
            index[a * size + b] = sym;
            if f[a * size + b] as usize == a {
                kind.push(0);
                still.push(sym);
            } else {
                kind.push(-1);
                moving.push(sym);
            }
        }
    }
    let m = morphism(&Alphabet::new(size)?, names.len(), 0, 2, |w| index[w[0] as usize * size + w[1] as usize])?;
    let mut classes = vec![class("stationary", still, Some(0)), class("left", moving, Some(-1))];
    classes.retain(|c| !c.members.is_empty());
    Ok((names, m, kind, classes))
}

/// Interface particles of the one-sided captive CA with table `f` (row-major `f(a, b)`).
pub fn captive_system(size: usize, f: &[Symbol]) -> Result<ParticleSystem> {
    let (names, m, kind, classes) = captive_parts(size, f)?;
    ParticleSystem::new("captive", names, m, Arc::new(CaptiveUpdate { kind, drop_merges: false }), classes)
}

/// Captive system that discards merged walls; fails surjectivity on three or more symbols.
pub fn captive_system_dropping_merges(size: usize, f: &[Symbol]) -> Result<ParticleSystem> {
    let (names, m, kind, classes) = captive_parts(size, f)?;
    ParticleSystem::new("captive-dropping", names, m, Arc::new(CaptiveUpdate { kind, drop_merges: true }), classes)
}

// ---------------------------------------------------------------- random walk

/// A particle `(a, 1)` steps right when `a = 0` and stays when `a = 1`.
struct RandomWalkUpdate {
    /// Directions swapped (a deliberately wrong variant).
    mirrored: bool,
}

impl UpdateFn for RandomWalkUpdate {
    fn window(&self) -> usize {
        0
    }

    fn radius(&self) -> usize {
        1
    }

    fn images(&self, v: &View) -> Images {
        if v.pi(0) == 0 {
            return Images::EMPTY;
        }
        let top = v.x(0) & 1;
        Images::at(i64::from((top == 0) != self.mirrored))
    }
}

/// The random-walk CA with particles on the second layer.
pub fn random_walk_system() -> ParticleSystem {
    let m = morphism(&Alphabet::new(4).unwrap(), 1, 0, 1, |w| w[0] >> 1).expect("projection is well formed");
    ParticleSystem::new(
        "random-walk",
        vec!["walker".into()],
        m,
        Arc::new(RandomWalkUpdate { mirrored: false }),
        vec![class("walker", vec![1], None)],
    )
    .expect("random-walk system is well formed")
}

/// Random-walk system with `(1, 1)` stepping and `(0, 1)` staying; fails the axioms.
pub fn random_walk_system_mirrored() -> ParticleSystem {
    random_walk_system().with_update("random-walk-mirrored", Arc::new(RandomWalkUpdate { mirrored: true }))
}

// ---------------------------------------------------------------- gliders

/// Gliders-automaton update read off projected glider values.
struct GliderUpdate {
    v_minus: i64,
    v_plus: i64,
}

impl UpdateFn for GliderUpdate {
    fn window(&self) -> usize {
        (self.v_plus - self.v_minus) as usize
    }

    fn radius(&self) -> usize {
        self.v_minus.unsigned_abs().max(self.v_plus.unsigned_abs()) as usize
    }

    fn images(&self, v: &View) -> Images {
        let w = self.window() as i64;
        let val = |d: i64| glider::value(v.pi(d));
        match val(0) {
            1 => {
                let mut s = 0;
                if (1..=w).all(|n| {
                    s += val(n);
                    s >= 0
                }) {
                    return Images::at(self.v_plus);
                }
            }
            -1 => {
                let mut s = 0;
                if (1..=w).all(|n| {
                    s += val(-n);
                    s <= 0
                }) {
                    return Images::at(self.v_minus);
                }
            }
            _ => {}
        }
        Images::EMPTY
    }
}

fn glider_classes(v_minus: i64, v_plus: i64) -> Vec<SpeedClass> {
    vec![class("+1", vec![glider::PLUS], Some(v_plus)), class("-1", vec![glider::MINUS], Some(v_minus))]
}

/// The `(v_-, v_+)`-gliders automaton as its own particle system.
pub fn gliders_system(v_minus: i64, v_plus: i64) -> Result<ParticleSystem> {
    rules::make_gliders(v_minus, v_plus)?;
    let g = Alphabet::gliders();
    let m = morphism(&g, 2, 0, 1, |w| w[0])?;
    ParticleSystem::new(
        format!("gliders({v_minus},{v_plus})"),
        vec!["+1".into(), "-1".into()],
        m,
        Arc::new(GliderUpdate { v_minus, v_plus }),
        glider_classes(v_minus, v_plus),
    )
}

/// A particle system obtained from a factor map onto the `(v_-, v_+)`-gliders automaton.
pub fn glider_factor_system(
    name: impl Into<String>,
    factor: LocalRule,
    v_minus: i64,
    v_plus: i64,
) -> Result<ParticleSystem> {
    rules::make_gliders(v_minus, v_plus)?;
    if factor.output().size() != 3 {
        return Err(Error::InvalidSystem("a glider factor maps into {0, +1, -1}".into()));
    }
    ParticleSystem::new(
        name,
        vec!["+1".into(), "-1".into()],
        factor,
        Arc::new(GliderUpdate { v_minus, v_plus }),
        glider_classes(v_minus, v_plus),
    )
}

fn glider_map(input: &Alphabet, len: usize, f: impl Fn(&[Symbol]) -> i32) -> LocalRule {
    LocalRule::from_fn(input.clone(), Alphabet::gliders(), 0, len, |w| glider::from_value(f(w)))
        .expect("factor table is well formed")
}

/// Rule #184 onto the `(-1, 1)`-gliders automaton: `00 -> +1`, `11 -> -1`.
pub fn traffic_factor() -> LocalRule {
    glider_map(&binary(), 2, |w| match w {
        [0, 0] => 1,
        [1, 1] => -1,
        _ => 0,
    })
}

/// 3-cyclic CA onto the `(-1, 1)`-gliders automaton: `ab -> +1` if `a = b + 1`, `-1` if `a = b - 1`.
pub fn cyclic3_factor() -> LocalRule {
    glider_map(&Alphabet::new(3).unwrap(), 2, |w| {
        let (a, b) = (w[0] as i32, w[1] as i32);
        if a == (b + 1) % 3 {
            1
        } else if a == (b + 2) % 3 {
            -1
        } else {
            0
        }
    })
}

/// One-sided captive CA onto the `(-1, 0)`-gliders automaton: stationary walls to `+1`, moving walls to `-1`.
///
/// Fails when the table has a stationary wall `ab` and a moving wall `bc`
/// whose merge leaves a wall `ac`: gliders annihilate there, so the map is
/// not a factor. Binary tables always qualify.
pub fn captive_factor(size: usize, f: &[Symbol]) -> Result<LocalRule> {
    let rule = rules::make_one_sided_captive(size, f)?;
    let table = f.to_vec();
    let factor = glider_map(&Alphabet::new(size)?, 2, move |w| {
        let (a, b) = (w[0], w[1]);
        if a == b {
            0
        } else if table[a as usize * size + b as usize] == a {
            1
        } else {
            -1
        }
    });
    if let Some((word, at)) = check_factor(&rule, &factor, &rules::make_gliders(-1, 0)?, 4)? {
        return Err(Error::Infeasible(format!(
            "captive table does not factor onto the (-1,0) gliders automaton: word {word:?} differs at {at}"
        )));
    }
    Ok(factor)
}

/// Product rule #128 onto the `(-1, 1)`-gliders automaton: `01 -> +1`, `10 -> -1`.
pub fn product_factor() -> LocalRule {
    glider_map(&binary(), 2, |w| match w {
        [0, 1] => 1,
        [1, 0] => -1,
        _ => 0,
    })
}

// ---------------------------------------------------------------- Fatès

const F01: Symbol = 1;
const F02: Symbol = 2;
const F21: Symbol = 3;
const F12: Symbol = 4;
const F20: Symbol = 5;
/// Rule indices in the Fatès PCA.
const TRAFFIC: Symbol = 0;

/// Domain on each side of a Fatès particle: 0 (all zeros), 1 (all ones), 2 (checkerboard).
fn fates_sides(p: Symbol) -> (u8, u8) {
    match p {
        F01 => (0, 1),
        F02 => (0, 2),
        F21 => (2, 1),
        F12 => (1, 2),
        F20 => (2, 0),
        _ => unreachable!("not a particle"),
    }
}

/// Update of the traffic-majority PCA, built from nominal displacements.
///
/// `p01`, `p02`, `p21` move by 0, +1, -1. `p12` moves -1 when the traffic rule
/// acts two cells to its right and +1 otherwise; `p20` mirrors it. A `p12`
/// heading right into a `p20` heading left blocks both. The domain between two
/// consecutive particles vanishes when their nominal new separation drops below
/// the least separation that pair can have; a run of vanishing domains
/// collapses to the new particles of the outer type found inside its hull, or
/// to nothing when both outer domains agree.
struct FatesUpdate;

/// Runs are searched within this distance of the particle.
const FATES_HORIZON: i64 = 3;

impl FatesUpdate {
    fn displacement(v: &View, d: i64) -> i64 {
        match v.pi(d) {
            F01 => 0,
            F02 => 1,
            F21 => -1,
            F12 => {
                if v.rule(d + 2) == TRAFFIC {
                    -1
                } else if v.pi(d + 1) == F20 && v.rule(d + 3) != TRAFFIC {
                    0
                } else {
                    1
                }
            }
            F20 => {
                if v.rule(d + 2) == TRAFFIC {
                    1
                } else if v.pi(d - 1) == F12 && v.rule(d + 1) != TRAFFIC {
                    0
                } else {
                    -1
                }
            }
            _ => 0,
        }
    }

    /// Least distance between consecutive particles of these types.
    fn min_gap(a: Symbol, b: Symbol) -> Option<i64> {
        Some(match (a, b) {
            (F01, F12) | (F02, F20) | (F12, F20) | (F21, F12) => 1,
            (F02, F21) | (F12, F21) | (F20, F01) | (F20, F02) => 2,
            _ => return None,
        })
    }

    fn collapses(v: &View, a: i64, b: i64) -> bool {
        let (pa, pb) = (v.pi(a), v.pi(b));
        if pa == F12 && pb == F20 && b == a + 1 {
            return false;
        }
        Self::min_gap(pa, pb)
            .is_some_and(|g| b + Self::displacement(v, b) - a - Self::displacement(v, a) < g)
    }

    fn next(v: &View, d: i64, dir: i64) -> Option<i64> {
        (1..=3).map(|s| d + s * dir).take_while(|e| e.abs() <= FATES_HORIZON).find(|&e| v.pi(e) != 0)
    }

    /// The run of collapsing neighbors containing the particle at 0.
    fn run(v: &View) -> (i64, i64) {
        let (mut lo, mut hi) = (0, 0);
        while let Some(e) = Self::next(v, lo, -1).filter(|&e| Self::collapses(v, e, lo)) {
            lo = e;
        }
        while let Some(e) = Self::next(v, hi, 1).filter(|&e| Self::collapses(v, hi, e)) {
            hi = e;
        }
        (lo, hi)
    }

    fn collapse(v: &View, lo: i64, hi: i64) -> (Images, bool) {
        let (i, _) = fates_sides(v.pi(lo));
        let (_, k) = fates_sides(v.pi(hi));
        if i == k {
            return (Images::EMPTY, false);
        }
        let wanted: &[Symbol] = if (i, k) == (1, 0) { &[F12, F20] } else { &[fates_particle(i, k)] };
        let members = (lo..=hi).filter(|&e| v.pi(e) != 0);
        let targets: Vec<i64> = members.flat_map(|e| [e, e + Self::displacement(v, e)]).collect();
        let from = *targets.iter().min().unwrap();
        let to = *targets.iter().max().unwrap();
        let mut img = Images::EMPTY;
        for m in from..=to {
            if wanted.contains(&v.next_pi(m)) {
                img = img.with(m);
            }
        }
        (img, img.len() > wanted.len())
    }
}

fn fates_particle(i: u8, k: u8) -> Symbol {
    match (i, k) {
        (0, 1) => F01,
        (0, 2) => F02,
        (2, 1) => F21,
        (1, 2) => F12,
        (2, 0) => F20,
        // A 1|0 wall is the exploded pair p12 p20; it has no symbol of its own.
        _ => 0,
    }
}

impl UpdateFn for FatesUpdate {
    fn window(&self) -> usize {
        4
    }

    fn radius(&self) -> usize {
        2
    }

    fn field_reach(&self) -> (i64, i64) {
        (-4, 6)
    }

    fn lookahead(&self) -> Option<usize> {
        Some(4)
    }

    fn images(&self, v: &View) -> Images {
        if v.pi(0) == 0 {
            return Images::EMPTY;
        }
        match Self::run(v) {
            (0, 0) => Images::at(Self::displacement(v, 0)),
            (lo, hi) => Self::collapse(v, lo, hi).0,
        }
    }

    fn ambiguous(&self, v: &View) -> bool {
        if v.pi(0) == 0 {
            return false;
        }
        match Self::run(v) {
            (0, 0) => false,
            (lo, hi) => Self::collapse(v, lo, hi).1,
        }
    }
}

/// Particles of the traffic-majority PCA, with `1|0` walls split as `p12 p20`.
pub fn fates_system() -> ParticleSystem {
    let m = morphism(&binary(), 5, 0, 4, |w| match w {
        [0, 0, 1, 1] => F01,
        [0, 0, 1, 0] => F02,
        [1, 0, 1, 1] => F21,
        [_, 1, 1, 0] => F12,
        [_, 1, 0, 0] => F20,
        _ => 0,
    })
    .expect("Fatès morphism is well formed");
    ParticleSystem::new(
        "fates",
        ["p01", "p02", "p21", "p12", "p20"].map(String::from).to_vec(),
        m,
        Arc::new(FatesUpdate),
        vec![
            class("p01", vec![F01], Some(0)),
            class("p02", vec![F02], Some(1)),
            class("p21", vec![F21], Some(-1)),
            class("p12", vec![F12], None),
            class("p20", vec![F20], None),
        ],
    )
    .expect("Fatès system is well formed")
}

// ---------------------------------------------------------------- line

const P00: Symbol = 1;
const P11: Symbol = 2;

/// Defects `00` / `11` of the checkerboard under the line PCA.
///
/// A swap on the cell pair just right of the defect carries it two cells
/// right (or annihilates it against an opposite defect there); symmetrically
/// on the left. Otherwise it stays.
struct LineUpdate {
    /// Defects never move (a deliberately wrong variant).
    frozen: bool,
}

impl LineUpdate {
    fn swaps(v: &View, d: i64) -> bool {
        v.rule(d) == line::RIGHT && v.rule(d + 1) == line::LEFT && v.x(d) != v.x(d + 1)
    }
}

impl UpdateFn for LineUpdate {
    fn window(&self) -> usize {
        2
    }

    fn radius(&self) -> usize {
        2
    }

    fn images(&self, v: &View) -> Images {
        if v.pi(0) == 0 {
            return Images::EMPTY;
        }
        if self.frozen {
            return Images::at(0);
        }
        if Self::swaps(v, 1) {
            if v.x(3) == v.x(2) {
                Images::EMPTY
            } else {
                Images::at(2)
            }
        } else if Self::swaps(v, -1) {
            if v.x(-2) == v.x(-1) {
                Images::EMPTY
            } else {
                Images::at(-2)
            }
        } else {
            Images::at(0)
        }
    }
}

fn line_parts() -> LocalRule {
    morphism(&binary(), 2, 0, 2, |w| match w {
        [0, 0] => P00,
        [1, 1] => P11,
        _ => 0,
    })
    .expect("line morphism is well formed")
}

/// Checkerboard defects of the line-stabilization PCA.
pub fn line_system() -> ParticleSystem {
    ParticleSystem::new(
        "line",
        vec!["p00".into(), "p11".into()],
        line_parts(),
        Arc::new(LineUpdate { frozen: false }),
        vec![class("p00", vec![P00], None), class("p11", vec![P11], None)],
    )
    .expect("line system is well formed")
}

/// Line system whose defects never move; fails the axioms.
pub fn line_system_frozen() -> ParticleSystem {
    line_system().with_update("line-frozen", Arc::new(LineUpdate { frozen: true }))
}

// ---------------------------------------------------------------- lookup

/// Resolves a named system together with its dynamics.
///
/// Names: `traffic`, `cyclic:N`, `captive:TABLE/SIZE`, `random-walk`,
/// `gliders:V-,V+`, `fates:P`, `line`, the factors `factor:traffic`,
/// `factor:cyclic3`, `factor:captive:TABLE/SIZE`, `factor:product`, and the
/// broken variants `traffic-mirrored`, `cyclic-frozen:N`,
/// `captive-dropping:TABLE/SIZE`, `random-walk-mirrored`, `line-frozen`.
pub fn system_by_name(name: &str) -> Result<(Dynamics, ParticleSystem)> {
    let name = name.trim();
    let (kind, arg) = name.split_once(':').unwrap_or((name, ""));
    let bad = |what: &str| Error::Config(format!("bad {what} in particle system {name:?}"));
    let captive = |arg: &str| -> Result<(usize, Vec<Symbol>)> {
        let (table, size) = arg.split_once('/').ok_or_else(|| bad("captive table"))?;
        let size: usize = size.parse().map_err(|_| bad("alphabet size"))?;
        let table = table
            .chars()
            .map(|c| c.to_digit(36).map(|d| d as Symbol).ok_or_else(|| bad("captive table")))
            .collect::<Result<Vec<_>>>()?;
        Ok((size, table))
    };
    let det = Dynamics::Deterministic;
    Ok(match kind {
        "traffic" => (det(rules::make_elementary(184)), traffic_system()),
        "traffic-mirrored" => (det(rules::make_elementary(184)), traffic_system_mirrored()),
        "cyclic" | "cyclic-frozen" => {
            let n: usize = arg.parse().map_err(|_| bad("state count"))?;
            let ps = if kind == "cyclic" { cyclic_system(n)? } else { cyclic_system_frozen(n)? };
            (det(rules::make_cyclic(n)?), ps)
        }
        "captive" | "captive-dropping" => {
            let (size, f) = captive(arg)?;
            let ps = if kind == "captive" {
                captive_system(size, &f)?
            } else {
                captive_system_dropping_merges(size, &f)?
            };
            (det(rules::make_one_sided_captive(size, &f)?), ps)
        }
        "random-walk" => (det(rules::make_random_walk_ca()), random_walk_system()),
        "random-walk-mirrored" => (det(rules::make_random_walk_ca()), random_walk_system_mirrored()),
        "gliders" => {
            let (m, p) = arg.split_once(',').ok_or_else(|| bad("speed pair"))?;
            let m: i64 = m.trim().parse().map_err(|_| bad("speed"))?;
            let p: i64 = p.trim().parse().map_err(|_| bad("speed"))?;
            (det(rules::make_gliders(m, p)?), gliders_system(m, p)?)
        }
        "fates" => {
            let p: f64 = arg.parse().map_err(|_| bad("probability"))?;
            (Dynamics::Probabilistic(rules::make_fates_pca(p)?), fates_system())
        }
        "line" => (Dynamics::Probabilistic(rules::make_line_pca()?), line_system()),
        "line-frozen" => (Dynamics::Probabilistic(rules::make_line_pca()?), line_system_frozen()),
        "factor" => {
            let (which, rest) = arg.split_once(':').unwrap_or((arg, ""));
            match which {
                "traffic" => (
                    det(rules::make_elementary(184)),
                    glider_factor_system("factor:traffic", traffic_factor(), -1, 1)?,
                ),
                "cyclic3" => (
                    det(rules::make_cyclic(3)?),
                    glider_factor_system("factor:cyclic3", cyclic3_factor(), -1, 1)?,
                ),
                "captive" => {
                    let (size, f) = captive(rest)?;
                    (
                        det(rules::make_one_sided_captive(size, &f)?),
                        glider_factor_system("factor:captive", captive_factor(size, &f)?, -1, 0)?,
                    )
                }
                "product" => (
                    det(rules::make_elementary(128)),
                    glider_factor_system("factor:product", product_factor(), -1, 1)?,
                ),
                _ => return Err(bad("factor")),
            }
        }
        _ => return Err(Error::Config(format!("unknown particle system {name:?}"))),
    })
}
