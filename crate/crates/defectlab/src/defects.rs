//! Defects relative to subshifts of finite type.
//!
//! A defect is a local minimum of the defect field, the length of the longest
//! admissible word centred on each cell. Defects are labelled by the domain
//! and local phase of the admissible regions on either side.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Symbol};
use crate::measures::{index_word, word_index};
use crate::raster;
use crate::rules::LocalRule;

/// Largest table (alphabet size to the power of the order) an SFT may use.
pub const MAX_TABLE: usize = 1 << 22;

/// Longest word length searched when looking for the disjointness length.
const MAX_ALPHA: usize = 24;

fn table_size(alphabet_size: usize, len: usize) -> Option<usize> {
    alphabet_size.checked_pow(len as u32).filter(|&n| n <= MAX_TABLE)
}

/// A subshift of finite type given by an alphabet and forbidden words.
///
/// The order is the longest forbidden length, at least 2. Words whose paths in
/// the de Bruijn graph cannot be extended forever in both directions are not
/// part of the language.
#[derive(Clone, Debug)]
pub struct SftSpec {
    alphabet_size: usize,
    forbidden: Vec<Vec<Symbol>>,
    order: usize,
    vertices: Vec<bool>,
    edges: Vec<bool>,
    short: Vec<Vec<bool>>,
}

impl SftSpec {
    pub fn new(alphabet_size: usize, forbidden: Vec<Vec<Symbol>>) -> Result<Self> {
        if alphabet_size == 0 || alphabet_size > 256 {
            return Err(Error::InvalidSubshift(format!("alphabet size {alphabet_size} outside 1..=256")));
        }
        for w in &forbidden {
            if w.is_empty() {
                return Err(Error::InvalidSubshift("empty forbidden word".into()));
            }
            if let Some(&s) = w.iter().find(|&&s| s as usize >= alphabet_size) {
                return Err(Error::SymbolOutOfRange { symbol: s, size: alphabet_size });
            }
        }
        let order = forbidden.iter().map(Vec::len).max().unwrap_or(0).max(2);
        let n_edges = table_size(alphabet_size, order).ok_or_else(|| {
            Error::Infeasible(format!("SFT of order {order} over {alphabet_size} symbols is too large"))
        })?;
        let clean = |w: &[Symbol]| !forbidden.iter().any(|f| w.windows(f.len()).any(|x| x == f.as_slice()));
        let k = order - 1;
        let n_vertices = n_edges / alphabet_size;
        let a = alphabet_size;

        let mut vertices: Vec<bool> = (0..n_vertices).map(|i| clean(&index_word(i, k, a))).collect();
        let clean_edges: Vec<bool> = (0..n_edges).map(|i| clean(&index_word(i, order, a))).collect();
        // Edge i goes from vertex i / a to vertex i % n_vertices.
        loop {
            let mut has_out = vec![false; n_vertices];
            let mut has_in = vec![false; n_vertices];
            for (i, _) in clean_edges.iter().enumerate().filter(|(_, &e)| e) {
                let (u, v) = (i / a, i % n_vertices);
                if vertices[u] && vertices[v] {
                    has_out[u] = true;
                    has_in[v] = true;
                }
            }
            let mut changed = false;
            for v in 0..n_vertices {
                if vertices[v] && !(has_out[v] && has_in[v]) {
                    vertices[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !vertices.iter().any(|&v| v) {
            return Err(Error::InvalidSubshift("the language is empty".into()));
        }
        let edges: Vec<bool> = clean_edges
            .iter()
            .enumerate()
            .map(|(i, &e)| e && vertices[i / a] && vertices[i % n_vertices])
            .collect();
        let mut short: Vec<Vec<bool>> = (0..k).map(|l| vec![false; a.pow(l as u32)]).collect();
        for v in (0..n_vertices).filter(|&v| vertices[v]) {
            let word = index_word(v, k, a);
            for (l, row) in short.iter_mut().enumerate() {
                for start in 0..=k - l {
                    row[word_index(&word[start..start + l], a)] = true;
                }
            }
        }
        Ok(Self { alphabet_size, forbidden, order, vertices, edges, short })
    }

    pub fn full_shift(alphabet_size: usize) -> Result<Self> {
        Self::new(alphabet_size, Vec::new())
    }

    /// The single configuration `...aaa...`.
    pub fn monochrome(alphabet_size: usize, symbol: Symbol) -> Result<Self> {
        let forbidden = (0..alphabet_size as Symbol).filter(|&b| b != symbol).map(|b| vec![b]).collect();
        Self::new(alphabet_size, forbidden)
    }

    /// `{...0101..., ...1010...}`.
    pub fn checkerboard() -> Self {
        Self::new(2, vec![vec![0, 0], vec![1, 1]]).expect("checkerboard is a valid SFT")
    }

    /// The shift orbit of the periodic configuration `...uuu...`.
    pub fn orbit(alphabet_size: usize, word: &[Symbol]) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::InvalidSubshift("orbit of the empty word".into()));
        }
        let root = primitive_root(word);
        let len = root.len() + 1;
        let total = table_size(alphabet_size, len)
            .ok_or_else(|| Error::Infeasible(format!("orbit of a word of period {} is too large", root.len())))?;
        let cyclic: Vec<Symbol> = root.iter().cycle().take(root.len() + len).copied().collect();
        let factors: Vec<&[Symbol]> = cyclic.windows(len).take(root.len()).collect();
        let forbidden = (0..total)
            .map(|i| index_word(i, len, alphabet_size))
            .filter(|w| !factors.contains(&w.as_slice()))
            .collect();
        Self::new(alphabet_size, forbidden)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn forbidden(&self) -> &[Vec<Symbol>] {
        &self.forbidden
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn vertex_len(&self) -> usize {
        self.order - 1
    }

    /// Whether `word` occurs in some configuration of the subshift.
    pub fn admits(&self, word: &[Symbol]) -> bool {
        let a = self.alphabet_size;
        if word.iter().any(|&s| s as usize >= a) {
            return false;
        }
        let k = self.vertex_len();
        match word.len().cmp(&k) {
            std::cmp::Ordering::Less => self.short[word.len()][word_index(word, a)],
            std::cmp::Ordering::Equal => self.vertices[word_index(word, a)],
            std::cmp::Ordering::Greater => word.windows(self.order).all(|w| self.edges[word_index(w, a)]),
        }
    }

    /// All admissible words of length `len`, in lexicographic order.
    pub fn words(&self, len: usize) -> Result<Vec<Vec<Symbol>>> {
        let total = table_size(self.alphabet_size, len)
            .ok_or_else(|| Error::Infeasible(format!("cannot enumerate words of length {len}")))?;
        Ok((0..total)
            .map(|i| index_word(i, len, self.alphabet_size))
            .filter(|w| self.admits(w))
            .collect())
    }

    /// Whether `rule` maps admissible words of length `len` plus its span
    /// onto admissible words of length `len`.
    pub fn invariant_up_to(&self, rule: &LocalRule, len: usize) -> Result<bool> {
        if rule.input().size() != self.alphabet_size || rule.output().size() != self.alphabet_size {
            return Err(Error::AlphabetMismatch { expected: self.alphabet_size, found: rule.input().size() });
        }
        let words = self.words(len + rule.span() - 1)?;
        Ok(words.iter().all(|w| self.admits(&rule.apply_cells(w))))
    }

    fn is_vertex(&self, index: usize) -> bool {
        self.vertices[index]
    }

    fn vertex_count(&self) -> usize {
        self.vertices.len()
    }
}

fn primitive_root(word: &[Symbol]) -> &[Symbol] {
    let n = word.len();
    (1..=n)
        .find(|&p| n.is_multiple_of(p) && (p..n).all(|i| word[i] == word[i - p]))
        .map(|p| &word[..p])
        .unwrap_or(word)
}

/// Anything that can report, for each start cell, how far an admissible word
/// extends to the right.
pub trait Language {
    fn alphabet_size(&self) -> usize;

    /// `reach[a]` is the largest `e` such that `cells[a..e]` is admissible.
    fn reach(&self, cells: &[Symbol]) -> Vec<usize>;
}

impl Language for SftSpec {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn reach(&self, cells: &[Symbol]) -> Vec<usize> {
        let n = cells.len();
        let a = self.alphabet_size;
        let k = self.vertex_len();
        let r = self.order;
        // run[p]: number of consecutive admissible order-r windows starting at p.
        let mut run = vec![0usize; n + 1];
        if n >= r {
            for p in (0..=n - r).rev() {
                if self.edges[word_index(&cells[p..p + r], a)] {
                    run[p] = run[p + 1] + 1;
                }
            }
        }
        (0..n)
            .map(|start| {
                if start + k <= n && self.is_vertex(word_index(&cells[start..start + k], a)) {
                    return start + k + run[start];
                }
                let limit = (k - 1).min(n - start);
                let l = (1..=limit)
                    .take_while(|&l| self.short[l][word_index(&cells[start..start + l], a)])
                    .last()
                    .unwrap_or(0);
                start + l
            })
            .collect()
    }
}

/// Period of a transitive SFT with the phase class of every admissible word
/// of length `order - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Periodicity {
    period: usize,
    phases: Vec<Option<usize>>,
}

impl Periodicity {
    pub fn period(&self) -> usize {
        self.period
    }

    /// Phase class of an admissible word of length `order - 1`.
    pub fn phase_of(&self, sft: &SftSpec, block: &[Symbol]) -> Option<usize> {
        if block.len() != sft.vertex_len() {
            return None;
        }
        self.phases[word_index(block, sft.alphabet_size)]
    }

    /// Phase classes as lists of words, class 0 first.
    pub fn classes(&self, sft: &SftSpec) -> Vec<Vec<Vec<Symbol>>> {
        let mut classes = vec![Vec::new(); self.period];
        for (i, p) in self.phases.iter().enumerate() {
            if let Some(p) = p {
                classes[*p].push(index_word(i, sft.vertex_len(), sft.alphabet_size));
            }
        }
        classes
    }

    /// Whether a word of length `order` is admissible exactly when its prefix
    /// and suffix lie in consecutive classes.
    pub fn satisfies_adjacency(&self, sft: &SftSpec) -> bool {
        let a = sft.alphabet_size;
        let nv = sft.vertex_count();
        (0..sft.edges.len()).all(|e| match (self.phases[e / a], self.phases[e % nv]) {
            (Some(p), Some(q)) => sft.edges[e] == ((p + 1) % self.period == q),
            _ => !sft.edges[e],
        })
    }
}

/// Period and phase partition of a transitive SFT.
///
/// The period is the gcd of cycle lengths in the graph of admissible words of
/// length `order - 1`; phases are distances from the least word modulo it.
pub fn compute_period(sft: &SftSpec) -> Result<Periodicity> {
    let a = sft.alphabet_size;
    let nv = sft.vertex_count();
    let succ = |u: usize| (0..a).map(move |s| u * a + s).filter(|&e| sft.edges[e]).map(move |e| e % nv);
    let pred = |v: usize| (0..a).map(move |s| s * nv + v).filter(|&e| sft.edges[e]).map(move |e| e / a);
    let alive: Vec<usize> = (0..nv).filter(|&v| sft.is_vertex(v)).collect();
    let base = alive[0];

    let mut dist = vec![usize::MAX; nv];
    dist[base] = 0;
    let mut queue = VecDeque::from([base]);
    while let Some(u) = queue.pop_front() {
        for v in succ(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut back = vec![false; nv];
    back[base] = true;
    let mut queue = VecDeque::from([base]);
    while let Some(v) = queue.pop_front() {
        for u in pred(v) {
            if !back[u] {
                back[u] = true;
                queue.push_back(u);
            }
        }
    }
    if alive.iter().any(|&v| dist[v] == usize::MAX || !back[v]) {
        return Err(Error::InvalidSubshift("SFT is not transitive".into()));
    }
    let mut period = 0usize;
    for &u in &alive {
        for v in succ(u) {
            period = gcd(period, (dist[u] + 1).abs_diff(dist[v]));
        }
    }
    let phases = (0..nv).map(|v| sft.is_vertex(v).then(|| dist[v] % period)).collect();
    Ok(Periodicity { period, phases })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A disjoint union of transitive SFTs, the domains.
#[derive(Clone, Debug)]
pub struct Decomposition {
    domains: Vec<SftSpec>,
    periods: Vec<Periodicity>,
    alpha: usize,
}

impl Decomposition {
    /// Validates the domains and finds the least length at which their
    /// languages are pairwise disjoint.
    pub fn new(domains: Vec<SftSpec>) -> Result<Self> {
        let Some(first) = domains.first() else {
            return Err(Error::InvalidSubshift("decomposition without domains".into()));
        };
        let a = first.alphabet_size;
        if let Some(d) = domains.iter().find(|d| d.alphabet_size != a) {
            return Err(Error::AlphabetMismatch { expected: a, found: d.alphabet_size });
        }
        let periods = domains.iter().map(compute_period).collect::<Result<Vec<_>>>()?;
        for (i, (d, p)) in domains.iter().zip(&periods).enumerate() {
            if p.period > 1 && !p.satisfies_adjacency(d) {
                return Err(Error::InvalidSubshift(format!(
                    "domain {i} has period {} but its phase partition does not determine adjacency",
                    p.period
                )));
            }
        }
        let alpha = if domains.len() == 1 {
            1
        } else {
            (1..=MAX_ALPHA)
                .map(|len| -> Result<Option<usize>> {
                    let total = table_size(a, len)
                        .ok_or_else(|| Error::Infeasible("domains share long words".into()))?;
                    let disjoint = (0..total).all(|i| {
                        let w = index_word(i, len, a);
                        domains.iter().filter(|d| d.admits(&w)).count() <= 1
                    });
                    Ok(disjoint.then_some(len))
                })
                .find_map(|r| r.transpose())
                .transpose()?
                .ok_or_else(|| Error::InvalidSubshift(format!("domains share words of every length up to {MAX_ALPHA}")))?
        };
        Ok(Self { domains, periods, alpha })
    }

    /// Monochromatic domains `...aaa...`, one per symbol.
    pub fn monochrome(alphabet_size: usize) -> Result<Self> {
        Self::new(
            (0..alphabet_size as Symbol)
                .map(|s| SftSpec::monochrome(alphabet_size, s))
                .collect::<Result<_>>()?,
        )
    }

    /// All-0, all-1 and checkerboard domains on two symbols.
    pub fn zeros_ones_checkerboard() -> Self {
        Self::new(vec![
            SftSpec::monochrome(2, 0).expect("valid"),
            SftSpec::monochrome(2, 1).expect("valid"),
            SftSpec::checkerboard(),
        ])
        .expect("the three domains are disjoint")
    }

    pub fn domains(&self) -> &[SftSpec] {
        &self.domains
    }

    pub fn periods(&self) -> &[Periodicity] {
        &self.periods
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Length of the flanking words read when labelling a defect.
    pub fn horizon(&self) -> usize {
        self.domains.iter().map(|d| d.order - 1).max().unwrap_or(1).max(self.alpha)
    }

    pub fn kind(&self) -> ReadingKind {
        if self.periods.iter().all(|p| p.period == 1) {
            ReadingKind::Interfaces
        } else if self.domains.len() == 1 {
            ReadingKind::Dislocations
        } else {
            ReadingKind::Mixed
        }
    }

    /// Whether every domain is invariant under `rule` on words of length `len`.
    pub fn invariant_up_to(&self, rule: &LocalRule, len: usize) -> Result<bool> {
        for d in &self.domains {
            if !d.invariant_up_to(rule, len)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn domain_reaches(&self, cells: &[Symbol]) -> Vec<Vec<usize>> {
        self.domains.iter().map(|d| d.reach(cells)).collect()
    }

    /// Least local phase of `word` read in domain `i`, with the defect sitting
    /// `shift` cells right of the word's first cell.
    fn local_phase(&self, i: usize, word: &[Symbol], shift: i64) -> usize {
        let p = &self.periods[i];
        if p.period == 1 {
            return 0;
        }
        let sft = &self.domains[i];
        let k = sft.vertex_len();
        let m = p.period as i64;
        let phase = |class: usize| (class as i64 + shift).rem_euclid(m) as usize;
        if word.len() >= k {
            return phase(p.phase_of(sft, &word[..k]).expect("admissible block has a phase"));
        }
        (0..sft.vertex_count())
            .filter_map(|v| p.phases[v].map(|c| (v, c)))
            .filter(|&(v, _)| index_word(v, k, sft.alphabet_size).starts_with(word))
            .map(|(_, c)| phase(c))
            .min()
            .unwrap_or(0)
    }
}

impl Language for Decomposition {
    fn alphabet_size(&self) -> usize {
        self.domains[0].alphabet_size
    }

    fn reach(&self, cells: &[Symbol]) -> Vec<usize> {
        let all = self.domain_reaches(cells);
        (0..cells.len()).map(|i| all.iter().map(|r| r[i]).max().unwrap_or(i)).collect()
    }
}

/// One cell of a defect field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldValue {
    pub value: usize,
    /// The centred word reached the edge of the exact region while still
    /// admissible, so `value` is only a lower bound.
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefectField {
    origin: i64,
    values: Vec<FieldValue>,
}

impl DefectField {
    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn values(&self) -> &[FieldValue] {
        &self.values
    }

    /// Local minima of the field, saturated cells and cells beyond the region
    /// counting as infinite.
    pub fn defects(&self) -> Vec<i64> {
        let v = &self.values;
        let at = |i: Option<usize>| match i.and_then(|i| v.get(i)) {
            Some(f) if !f.saturated => f.value,
            _ => usize::MAX,
        };
        (0..v.len())
            .filter(|&k| !v[k].saturated && v[k].value <= at(k.checked_sub(1)) && v[k].value <= at(Some(k + 1)))
            .map(|k| self.origin + k as i64)
            .collect()
    }

    /// Grayscale strip of `height` identical rows; saturated cells are white.
    pub fn to_pgm(&self, height: usize) -> Result<Vec<u8>> {
        let top = self.values.iter().filter(|f| !f.saturated).map(|f| f.value).max().unwrap_or(0).max(1);
        let row: Vec<u8> = self
            .values
            .iter()
            .map(|f| if f.saturated { 255 } else { (f.value.min(top) * 254 / top) as u8 })
            .collect();
        let rows = row.repeat(height);
        raster::pgm(row.len(), height, &rows)
    }
}

fn check_alphabet(lang: &dyn Language, c: &Configuration) -> Result<()> {
    if c.alphabet().size() != lang.alphabet_size() {
        return Err(Error::AlphabetMismatch { expected: lang.alphabet_size(), found: c.alphabet().size() });
    }
    Ok(())
}

/// Length of the longest admissible word centred on each exact cell.
///
/// The word of length `n` centred on `k` covers `[k - (n-1)/2, k + n/2]`,
/// rounding so that even lengths extend one cell further right.
pub fn defect_field(lang: &dyn Language, c: &Configuration) -> Result<DefectField> {
    check_alphabet(lang, c)?;
    let cells = c.exact_cells();
    let reach = lang.reach(cells);
    let last = cells.len() - 1;
    let values = (0..cells.len())
        .map(|k| {
            let fits = |n: usize| -> bool { n == 0 || reach[k - (n - 1) / 2] > k + n / 2 };
            let max_n = (2 * k + 2).min(2 * (last - k) + 1);
            if fits(max_n) {
                return FieldValue { value: max_n, saturated: true };
            }
            let (mut lo, mut hi) = (0, max_n);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            FieldValue { value: lo, saturated: false }
        })
        .collect();
    Ok(DefectField { origin: c.exact().0, values })
}

/// Domain and local phase of the region on one side of a defect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Side {
    pub domain: usize,
    pub phase: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DefectLabel {
    pub left: Side,
    pub right: Side,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadingKind {
    Interfaces,
    Dislocations,
    Mixed,
}

impl ReadingKind {
    fn side(self, s: Side) -> String {
        match self {
            ReadingKind::Interfaces => s.domain.to_string(),
            ReadingKind::Dislocations => s.phase.to_string(),
            ReadingKind::Mixed => format!("{}.{}", s.domain, s.phase),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefectReading {
    pub kind: ReadingKind,
    pub positions: Vec<i64>,
    pub labels: Vec<DefectLabel>,
}

impl DefectReading {
    /// Label text such as `1-0`.
    pub fn label_text(&self, i: usize) -> String {
        let l = self.labels[i];
        format!("{}-{}", self.kind.side(l.left), self.kind.side(l.right))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,left,right\n");
        for (p, l) in self.positions.iter().zip(&self.labels) {
            out += &format!("{p},{},{}\n", self.kind.side(l.left), self.kind.side(l.right));
        }
        out
    }
}

impl fmt::Display for DefectReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            (0..self.positions.len()).map(|i| format!("{}:{}", self.positions[i], self.label_text(i))).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Labels every defect by the domain and local phase of its flanking regions.
///
/// The left region ends at the defect and the right one starts just after it;
/// each is read up to [`Decomposition::horizon`] cells. Ties between domains
/// or phases go to the least index.
pub fn classify(d: &Decomposition, c: &Configuration) -> Result<DefectReading> {
    let field = defect_field(d, c)?;
    let cells = c.exact_cells();
    let lo = c.exact().0;
    let reaches = d.domain_reaches(cells);
    let reach: Vec<usize> = (0..cells.len()).map(|i| reaches.iter().map(|r| r[i]).max().unwrap_or(i)).collect();
    let h = d.horizon();
    let side = |start: usize, end: usize, shift: i64| -> Side {
        let domain = if start >= end { 0 } else { (0..reaches.len()).find(|&i| reaches[i][start] >= end).unwrap_or(0) };
        Side { domain, phase: d.local_phase(domain, &cells[start..end], shift) }
    };
    let positions = field.defects();
    let labels = positions
        .iter()
        .map(|&p| {
            let j = (p - lo) as usize;
            let start = (j.saturating_sub(h)..=j).find(|&a| reach[a] > j).unwrap_or(j + 1);
            let left = side(start, j + 1, j as i64 - start as i64);
            let r0 = (j + 1).min(cells.len());
            let end = reach.get(r0).map_or(r0, |&e| e.min(r0 + h));
            let right = side(r0, end, -1);
            DefectLabel { left, right }
        })
        .collect();
    Ok(DefectReading { kind: d.kind(), positions, labels })
}

pub fn classify_interfaces(d: &Decomposition, c: &Configuration) -> Result<DefectReading> {
    classify(d, c)
}

/// Dislocations of a single periodic SFT.
pub fn classify_dislocations(sft: &SftSpec, c: &Configuration) -> Result<DefectReading> {
    let d = Decomposition::new(vec![sft.clone()])?;
    if d.periods[0].period < 2 {
        return Err(Error::InvalidSubshift("dislocations need a period of at least 2".into()));
    }
    classify(&d, c)
}

#[cfg(test)]
mod tests;
