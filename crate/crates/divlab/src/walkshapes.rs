//! Walk shapes and the combinatorics attached to them.
//!
//! A closed walk of length `2k` on the divisibility graph is described by a
//! prime tuple `p⃗` and a sign tuple `σ⃗`. Its *shape* forgets the actual
//! primes and keeps only which positions share a prime. This module builds
//! shapes, reduces their words in the free group, derives the induced walk
//! graph, classifies indices (lone primes and the special sets attached to
//! them), encodes cancelling letters as balanced parentheses, models sieve
//! graphs with their validity conditions, runs the family census behind the
//! five-letter coding bound, and evaluates the walk sums `S₁`, `S₂`.
//!
//! Positions are 0-based internally. Everything that mirrors the indexing
//! of walks (blocks, index sets, recurrence pairs, text output) is 1-based.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arith::{build_factor_table, PrimeWindow};
use crate::divgraph::{compute_x0_mask, compute_yl_mask, SupportMask, DEFAULT_NODE_BUDGET};
use crate::error::{capacity, param, validation, DivlabError, Result};
use crate::sievekit::Progression;

/// Largest walk half-length accepted by [`classify_indices`].
pub const MAX_CLASSIFY_K: usize = 6;
/// Largest walk half-length accepted by [`shape_family_census`].
pub const MAX_CENSUS_K: usize = 3;
/// Work limit `|𝐏|^{2k}·4^{2k}` for exact walk sums.
pub const EXACT_WALK_BUDGET: f64 = 1e8;

/// A shape `(∼, σ⃗)`: an equivalence relation on the positions of a walk
/// together with the step signs.
///
/// Class labels are canonical: classes are numbered `0, 1, …` in order of
/// first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape {
    labels: Vec<usize>,
    signs: Vec<i8>,
}

fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

impl Shape {
    /// Builds a shape from arbitrary class labels (equal labels mean
    /// equivalent positions) and signs in `{−1, +1}`.
    pub fn new(labels: &[usize], signs: &[i8]) -> Result<Self> {
        if labels.len() != signs.len() {
            return param("labels and signs must have the same length");
        }
        if labels.len() % 2 != 0 {
            return param("a shape has an even number of positions");
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return param("signs must be +1 or -1");
        }
        Ok(Self { labels: canonical_labels(labels), signs: signs.to_vec() })
    }

    /// Builds a shape from 1-based blocks that must partition `{1,…,2k}`.
    pub fn from_blocks(blocks: &[Vec<usize>], signs: &[i8]) -> Result<Self> {
        let len = signs.len();
        let mut labels = vec![usize::MAX; len];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return validation("blocks must be non-empty");
            }
            for &i in block {
                if i == 0 || i > len {
                    return validation(format!("position {i} outside 1..={len}"));
                }
                if labels[i - 1] != usize::MAX {
                    return validation(format!("position {i} appears in two blocks"));
                }
                labels[i - 1] = b;
            }
        }
        if let Some(i) = labels.iter().position(|l| *l == usize::MAX) {
            return validation(format!("position {} is not covered", i + 1));
        }
        Self::new(&labels, signs)
    }

    /// Walk half-length.
    pub fn k(&self) -> usize {
        self.labels.len() / 2
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The 0-based positions of class `c`.
    pub fn positions_of(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == c).collect()
    }

    /// Blocks as sorted lists of 1-based positions, ordered by class label.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count()];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i + 1);
        }
        out
    }

    /// Labels of the singleton classes.
    pub fn singletons(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.class_count()];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        (0..sizes.len()).filter(|&c| sizes[c] == 1).collect()
    }
}

impl fmt::Display for Shape {
    /// Line format: sorted blocks, then the sign string, e.g.
    /// `{1,3} {2} {4} +--+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks()
            .iter()
            .map(|b| format!("{{{}}}", b.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        let signs: String = self.signs.iter().map(|s| if *s > 0 { '+' } else { '-' }).collect();
        if blocks.is_empty() {
            write!(f, "{{}} {signs}")
        } else {
            write!(f, "{} {signs}", blocks.join(" "))
        }
    }
}

impl FromStr for Shape {
    type Err = DivlabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fmt_err = |m: &str| DivlabError::Format(format!("shape `{s}`: {m}"));
        let sign_start = s.rfind('}').ok_or_else(|| fmt_err("missing blocks"))? + 1;
        let (block_part, sign_part) = s.split_at(sign_start);
        let signs: Vec<i8> = sign_part
            .trim()
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(fmt_err("signs must be + or -")),
            })
            .collect::<Result<_>>()?;
        let mut blocks = Vec::new();
        for raw in block_part.split('}') {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let inner = raw.strip_prefix('{').ok_or_else(|| fmt_err("expected `{`"))?;
            if inner.trim().is_empty() {
                continue;
            }
            let block: Vec<usize> = inner
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| fmt_err("bad position")))
                .collect::<Result<_>>()?;
            blocks.push(block);
        }
        Shape::from_blocks(&blocks, &signs).map_err(|e| fmt_err(&e.to_string()))
    }
}

/// The shape of a walk: `i ∼ j` exactly when `p_i = p_j`.
pub fn shape_of(p_vec: &[u64], sigma_vec: &[i8]) -> Result<Shape> {
    let labels: Vec<usize> = p_vec.iter().map(|&p| p as usize).collect();
    Shape::new(&labels, sigma_vec)
}

/// Free reduction of the word of a shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedShape {
    /// Shape of the reduced word `w′`.
    pub reduced: Shape,
    /// Original class labels whose letters all cancel.
    pub yellow: Vec<usize>,
    /// `iota[j]` is the 0-based original position of reduced position `j`.
    pub iota: Vec<usize>,
    /// Original class label of each reduced class.
    pub class_map: Vec<usize>,
}

impl ReducedShape {
    /// Reduced word length `2k′`.
    pub fn reduced_len(&self) -> usize {
        self.reduced.len()
    }

    pub fn is_yellow(&self, class: usize) -> bool {
        self.yellow.binary_search(&class).is_ok()
    }
}

/// Free reduction of `x_{[1]}^{σ₁} ⋯ x_{[2k]}^{σ_{2k}}` by stack cancellation.
pub fn reduce_shape(shape: &Shape) -> ReducedShape {
    let mut stack: Vec<usize> = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        if let Some(&top) = stack.last() {
            if shape.labels[top] == shape.labels[i] && shape.signs[top] == -shape.signs[i] {
                stack.pop();
                continue;
            }
        }
        stack.push(i);
    }
    let surviving: BTreeSet<usize> = stack.iter().map(|&i| shape.labels[i]).collect();
    let yellow: Vec<usize> = (0..shape.class_count()).filter(|c| !surviving.contains(c)).collect();
    let labels: Vec<usize> = stack.iter().map(|&i| shape.labels[i]).collect();
    let signs: Vec<i8> = stack.iter().map(|&i| shape.signs[i]).collect();
    let reduced = Shape::new(&labels, &signs).expect("reduction preserves parity");
    let mut class_map = vec![0; reduced.class_count()];
    for (j, &i) in stack.iter().enumerate() {
        class_map[reduced.labels[j]] = shape.labels[i];
    }
    ReducedShape { reduced, yellow, iota: stack, class_map }
}

/// The undirected graph induced by a shape, with the cyclic successor
/// arrows of the reduced word superimposed.
///
/// Vertices are the non-yellow classes, named by their original labels.
/// Arrows never join a vertex to itself, so a one-vertex graph has none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkGraph {
    pub vertices: Vec<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    pub arrows: BTreeSet<(usize, usize)>,
}

impl WalkGraph {
    pub fn neighbours(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.arrows.iter().filter(|&&(_, b)| b == v).count()
    }

    /// Connectivity of the undirected part.
    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.vertices.first() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbours(v) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    /// Out-boundary: vertices outside `set` receiving an arrow from it.
    pub fn out_boundary(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.arrows
            .iter()
            .filter(|(a, b)| set.contains(a) && !set.contains(b))
            .map(|&(_, b)| b)
            .collect()
    }
}

/// Builds the graph induced by a shape.
///
/// Two distinct non-yellow classes are adjacent when some of their
/// positions are separated only by positions of yellow classes.
pub fn induced_walk_graph(shape: &Shape) -> WalkGraph {
    let red = reduce_shape(shape);
    let kept: Vec<usize> = (0..shape.len()).filter(|&i| !red.is_yellow(shape.labels[i])).collect();
    let vertices: Vec<usize> = (0..shape.class_count()).filter(|c| !red.is_yellow(*c)).collect();
    let mut edges = BTreeSet::new();
    for w in kept.windows(2) {
        let (a, b) = (shape.labels[w[0]], shape.labels[w[1]]);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut arrows = BTreeSet::new();
    let m = red.reduced.len();
    for j in 0..m {
        let from = red.class_map[red.reduced.labels[j]];
        let to = red.class_map[red.reduced.labels[(j + 1) % m]];
        if from != to {
            arrows.insert((from, to));
        }
    }
    WalkGraph { vertices, edges, arrows }
}

/// A pair of consecutive occurrences `i < i′` of the same prime with at
/// least one position strictly between them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecurrencePair {
    pub i: usize,
    pub i_prime: usize,
    pub intervening: Vec<usize>,
}

/// Lone primes and the special index sets of a walk, all 1-based.
///
/// Maps send each member `i` to the smallest witnessing `ȷ`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IndexClassification {
    pub lone: BTreeSet<usize>,
    pub s: BTreeMap<usize, usize>,
    pub s0: BTreeMap<usize, usize>,
    pub s1: BTreeMap<usize, usize>,
    pub recurrence_pairs: Vec<RecurrencePair>,
}

/// Partial sums `β_0 = 0, β_i = σ₁p₁ + … + σ_ip_i`.
pub fn partial_sums(p_vec: &[u64], sigma_vec: &[i8]) -> Vec<i128> {
    let mut beta = Vec::with_capacity(p_vec.len() + 1);
    beta.push(0i128);
    for (p, s) in p_vec.iter().zip(sigma_vec) {
        let last = *beta.last().unwrap();
        beta.push(last + *s as i128 * *p as i128);
    }
    beta
}

fn lone_set(p_vec: &[u64]) -> BTreeSet<usize> {
    (1..=p_vec.len())
        .filter(|&i| p_vec.iter().filter(|&&q| q == p_vec[i - 1]).count() == 1)
        .collect()
}

fn divides(p: u64, x: i128) -> bool {
    x.rem_euclid(p as i128) == 0
}

/// The set 𝐒: lone `i` with some `ȷ ∉ {i−1, i}` such that either
/// `p_i | β_i − β_ȷ` with `β_ȷ ∉ {β_{i−1}, β_i}`, or `β_i = β_ȷ` with `ȷ` lone.
fn s_set(p: &[u64], beta: &[i128], lone: &BTreeSet<usize>) -> BTreeMap<usize, usize> {
    let len = p.len();
    let mut out = BTreeMap::new();
    for &i in lone {
        let pi = p[i - 1];
        let hit = (1..=len).filter(|&j| j != i && j + 1 != i).find(|&j| {
            (divides(pi, beta[i] - beta[j]) && beta[j] != beta[i - 1] && beta[j] != beta[i])
                || (beta[i] == beta[j] && lone.contains(&j))
        });
        if let Some(j) = hit {
            out.insert(i, j);
        }
    }
    out
}

fn lone_between(lone: &BTreeSet<usize>, i: usize, j: usize) -> bool {
    if i < j {
        lone.range(i + 1..=j).next().is_some()
    } else if j + 1 < i {
        lone.range(j + 1..i).next().is_some()
    } else {
        false
    }
}

fn signed_count(p: &[u64], sigma: &[i8], q: u64, upto: usize) -> i64 {
    (0..upto).filter(|&t| p[t] == q).map(|t| sigma[t] as i64).sum()
}

/// Lone primes, the sets 𝐒, 𝐒₀, 𝐒₁ and the recurrence pairs of a walk.
pub fn classify_indices(p_vec: &[u64], sigma_vec: &[i8], pw: &PrimeWindow) -> Result<IndexClassification> {
    if p_vec.len() != sigma_vec.len() || p_vec.is_empty() || p_vec.len() % 2 != 0 {
        return param("p_vec and sigma_vec must have equal, positive, even length");
    }
    if p_vec.len() > 2 * MAX_CLASSIFY_K {
        return capacity(format!("2k ≤ {} required for exhaustive scans", 2 * MAX_CLASSIFY_K));
    }
    if let Some(p) = p_vec.iter().find(|p| !pw.contains(**p)) {
        return param(format!("{p} is not in the prime window"));
    }
    if sigma_vec.iter().any(|s| *s != 1 && *s != -1) {
        return param("signs must be +1 or -1");
    }
    let len = p_vec.len();
    let beta = partial_sums(p_vec, sigma_vec);
    let lone = lone_set(p_vec);
    let s = s_set(p_vec, &beta, &lone);

    let mut s0 = BTreeMap::new();
    let mut s1 = BTreeMap::new();
    for &i in &lone {
        let pi = p_vec[i - 1];
        if let Some(j) = (1..=len).find(|&j| divides(pi, beta[i] - beta[j]) && lone_between(&lone, i, j)) {
            s0.insert(i, j);
        }
        let hit = (1..=len).filter(|&j| j != i && j + 1 != i).find(|&j| {
            divides(pi, beta[i] - beta[j])
                && !lone_between(&lone, i, j)
                && pw
                    .primes()
                    .iter()
                    .any(|&q| q != pi && signed_count(p_vec, sigma_vec, q, j) != signed_count(p_vec, sigma_vec, q, i))
        });
        if let Some(j) = hit {
            s1.insert(i, j);
        }
    }

    let mut recurrence_pairs = Vec::new();
    for i in 1..=len {
        if let Some(ip) = (i + 1..=len).find(|&t| p_vec[t - 1] == p_vec[i - 1]) {
            if ip > i + 1 {
                recurrence_pairs.push(RecurrencePair { i, i_prime: ip, intervening: (i + 1..ip).collect() });
            }
        }
    }
    Ok(IndexClassification { lone, s, s0, s1, recurrence_pairs })
}

/// A longest chain `i₁ < i₁′ ≤ i₂ < i₂′ ≤ …` of equal-prime pairs, each
/// spanning some index outside `l` (1-based), found by earliest-end greedy
/// selection.
pub fn max_disjoint_recurrences(p_vec: &[u64], l: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let len = p_vec.len();
    let mut out = Vec::new();
    let mut floor = 1usize;
    for ip in 1..=len {
        let found = (floor..ip).find(|&i| p_vec[i - 1] == p_vec[ip - 1] && (i..=ip).any(|j| !l.contains(&j)));
        if let Some(i) = found {
            out.push((i, ip));
            floor = ip;
        }
    }
    out
}

/// Balanced-parenthesis code of the letters of `yellow` classes.
///
/// Each letter that cancels against the current top of the stack closes a
/// parenthesis; every other letter opens one.
pub fn dyck_code(shape: &Shape, yellow: &[usize]) -> Result<String> {
    let mut stack: Vec<usize> = Vec::new();
    let mut code = String::new();
    for i in (0..shape.len()).filter(|&i| yellow.contains(&shape.labels[i])) {
        match stack.last() {
            Some(&t) if shape.labels[t] == shape.labels[i] && shape.signs[t] == -shape.signs[i] => {
                stack.pop();
                code.push(')');
            }
            _ => {
                stack.push(i);
                code.push('(');
            }
        }
    }
    if !stack.is_empty() {
        return validation("the restriction to the given classes does not reduce to the empty word");
    }
    Ok(code)
}

/// Catalan number `C_m`.
pub fn catalan(m: u64) -> u128 {
    let mut c: u128 = 1;
    for i in 0..m as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

/// Kind of a thread in a sieve graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreadKind {
    Open,
    Closed,
}

/// A thread attached at horizontal vertex `anchor` (0..=2k) with `length`
/// edges, witnesses excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThreadSpec {
    pub kind: ThreadKind,
    pub anchor: usize,
    pub length: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SieveEdge {
    pub tail: usize,
    pub head: usize,
    pub thread: Option<usize>,
    pub witness: bool,
}

/// A sieve graph with an equivalence relation on its edges.
///
/// Edge numbering: horizontal edges `0..2k` (edge `e` joins horizontal
/// vertices `e` and `e+1` and stands for step `e+1` of the walk), then for
/// each thread its edges in order along the thread followed, for open
/// threads, by the witness at the anchor and the witness at the far end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SieveGraph {
    k: usize,
    threads: Vec<ThreadSpec>,
    vertex_count: usize,
    edges: Vec<SieveEdge>,
    classes: Vec<usize>,
    thread_edges: Vec<Vec<usize>>,
    witnesses: Vec<Option<(usize, usize)>>,
}

/// Number of edges of the sieve graph with these threads.
pub fn sieve_edge_count(k: usize, threads: &[ThreadSpec]) -> usize {
    2 * k
        + threads
            .iter()
            .map(|t| t.length + if t.kind == ThreadKind::Open { 2 } else { 0 })
            .sum::<usize>()
}

fn cyclic_contiguous(positions: &[usize], len: usize) -> bool {
    if positions.len() <= 1 || positions.len() == len {
        return true;
    }
    let gaps = (0..positions.len())
        .filter(|&t| {
            let next = positions[(t + 1) % positions.len()];
            (next + len - positions[t]) % len != 1
        })
        .count();
    gaps == 1
}

/// Builds a sieve graph and checks the thread conditions on `equivalence`
/// (one class label per edge, in the numbering described on [`SieveGraph`]).
pub fn build_sieve_graph(k: usize, ell: usize, threads: &[ThreadSpec], equivalence: &[usize]) -> Result<SieveGraph> {
    if k == 0 {
        return param("k must be positive");
    }
    let mut edges: Vec<SieveEdge> = (0..2 * k)
        .map(|e| SieveEdge { tail: e, head: e + 1, thread: None, witness: false })
        .collect();
    let mut vertex_count = 2 * k + 1;
    let mut thread_edges = Vec::new();
    let mut witnesses = Vec::new();
    for (t, spec) in threads.iter().enumerate() {
        if spec.anchor > 2 * k {
            return validation(format!("thread {t} anchored outside the horizontal path"));
        }
        if spec.length == 0 || spec.length > ell {
            return validation(format!("thread {t} has length {} outside 1..={ell}", spec.length));
        }
        if spec.kind == ThreadKind::Closed && spec.length < 2 {
            return validation(format!("closed thread {t} needs at least two edges"));
        }
        let mut ids = Vec::new();
        let mut prev = spec.anchor;
        for step in 0..spec.length {
            let head = if spec.kind == ThreadKind::Closed && step + 1 == spec.length {
                spec.anchor
            } else {
                vertex_count += 1;
                vertex_count - 1
            };
            ids.push(edges.len());
            edges.push(SieveEdge { tail: prev, head, thread: Some(t), witness: false });
            prev = head;
        }
        if spec.kind == ThreadKind::Open {
            let w1 = edges.len();
            edges.push(SieveEdge { tail: spec.anchor, head: vertex_count, thread: Some(t), witness: true });
            edges.push(SieveEdge { tail: prev, head: vertex_count + 1, thread: Some(t), witness: true });
            vertex_count += 2;
            witnesses.push(Some((w1, w1 + 1)));
        } else {
            witnesses.push(None);
        }
        thread_edges.push(ids);
    }
    if equivalence.len() != edges.len() {
        return validation(format!("equivalence has {} labels for {} edges", equivalence.len(), edges.len()));
    }
    let classes = canonical_labels(equivalence);
    for (t, ids) in thread_edges.iter().enumerate() {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, &e) in ids.iter().enumerate() {
            by_class.entry(classes[e]).or_default().push(pos);
        }
        for positions in by_class.values() {
            let ok = match threads[t].kind {
                ThreadKind::Open => positions.last().unwrap() - positions[0] + 1 == positions.len(),
                ThreadKind::Closed => cyclic_contiguous(positions, ids.len()),
            };
            if !ok {
                return validation(format!("an equivalence class is disconnected inside thread {t}"));
            }
        }
        if let Some((w1, w2)) = witnesses[t] {
            if classes[w1] != classes[w2] {
                return validation(format!("the witnesses of thread {t} are not equivalent"));
            }
            if by_class.contains_key(&classes[w1]) {
                return validation(format!("the witnesses of thread {t} share a class with a thread edge"));
            }
        }
    }
    Ok(SieveGraph { k, threads: threads.to_vec(), vertex_count, edges, classes, thread_edges, witnesses })
}

/// Which validity conditions hold for a tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TupleValidity {
    pub divisibility: bool,
    pub sums: bool,
    pub signs: bool,
}

impl TupleValidity {
    pub fn is_valid(&self) -> bool {
        self.divisibility && self.sums && self.signs
    }
}

impl SieveGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threads(&self) -> &[ThreadSpec] {
        &self.threads
    }

    pub fn edges(&self) -> &[SieveEdge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.iter().max().map_or(0, |m| m + 1)
    }

    /// Non-witness edges of thread `t`, in order.
    pub fn thread_edges(&self, t: usize) -> &[usize] {
        &self.thread_edges[t]
    }

    pub fn witnesses(&self, t: usize) -> Option<(usize, usize)> {
        self.witnesses[t]
    }

    fn all_thread_edges(&self, t: usize) -> Vec<usize> {
        let mut v = self.thread_edges[t].clone();
        if let Some((a, b)) = self.witnesses[t] {
            v.extend([a, b]);
        }
        v
    }

    /// Cost κ: number of classes with at least one thread edge.
    pub fn cost(&self) -> usize {
        (0..self.threads.len())
            .flat_map(|t| self.all_thread_edges(t))
            .map(|e| self.classes[e])
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Every thread owns an edge whose class meets no other thread.
    pub fn is_non_redundant(&self) -> bool {
        (0..self.threads.len()).all(|t| {
            let others: BTreeSet<usize> = (0..self.threads.len())
                .filter(|&u| u != t)
                .flat_map(|u| self.all_thread_edges(u))
                .map(|e| self.classes[e])
                .collect();
            self.all_thread_edges(t).iter().any(|&e| !others.contains(&self.classes[e]))
        })
    }

    /// Checks the three validity conditions for `l` (1-based horizontal
    /// steps), per-edge signs and one prime per class.
    pub fn validate_tuple(&self, l_set: &BTreeSet<usize>, sigma: &[i8], primes: &[u64]) -> Result<TupleValidity> {
        if sigma.len() != self.edges.len() || sigma.iter().any(|s| *s != 1 && *s != -1) {
            return param("one sign in {-1,+1} per edge is required");
        }
        if primes.len() != self.class_count() || primes.iter().any(|p| *p < 2) {
            return param("one prime per equivalence class is required");
        }
        let weight = |e: usize| sigma[e] as i128 * primes[self.classes[e]] as i128;

        // Potentials along a BFS spanning tree; every cycle is a closed thread.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.vertex_count];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.tail].push((edge.head, e));
            adj[edge.head].push((edge.tail, e));
        }
        let mut phi: Vec<Option<i128>> = vec![None; self.vertex_count];
        phi[0] = Some(0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &(w, e) in &adj[v] {
                if phi[w].is_none() {
                    let d = if self.edges[e].tail == v { weight(e) } else { -weight(e) };
                    phi[w] = Some(phi[v].unwrap() + d);
                    queue.push_back(w);
                }
            }
        }
        let phi: Vec<i128> = phi.into_iter().map(|x| x.expect("sieve graphs are connected")).collect();

        let mut cycle_sums = Vec::new();
        let mut sums = true;
        for (t, spec) in self.threads.iter().enumerate() {
            let total: i128 = self.thread_edges[t].iter().map(|&e| weight(e)).sum();
            match spec.kind {
                ThreadKind::Closed => {
                    cycle_sums.push(total);
                    sums &= total == 0;
                }
                ThreadKind::Open => sums &= total != 0,
            }
        }

        let counted = |e: usize| self.edges[e].thread.is_some() || l_set.contains(&(e + 1));
        let mut divisibility = true;
        'outer: for e1 in 0..self.edges.len() {
            if !counted(e1) {
                continue;
            }
            for e2 in e1 + 1..self.edges.len() {
                if !counted(e2) || self.classes[e1] != self.classes[e2] {
                    continue;
                }
                let p = primes[self.classes[e1]];
                let base = phi[self.edges[e2].tail] - phi[self.edges[e1].tail];
                if !divides(p, base) || cycle_sums.iter().any(|c| !divides(p, *c)) {
                    divisibility = false;
                    break 'outer;
                }
            }
        }

        let mut signs = true;
        for (t, spec) in self.threads.iter().enumerate() {
            let ids = &self.thread_edges[t];
            let pairs = if spec.kind == ThreadKind::Closed { ids.len() } else { ids.len() - 1 };
            for a in 0..pairs {
                let (e1, e2) = (ids[a], ids[(a + 1) % ids.len()]);
                if self.classes[e1] == self.classes[e2] && sigma[e1] != sigma[e2] {
                    signs = false;
                }
            }
        }
        Ok(TupleValidity { divisibility, sums, signs })
    }
}

/// Result of an exhaustive family census.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CensusResult {
    pub k: usize,
    pub n_set: Vec<usize>,
    pub kappa: usize,
    pub rho: usize,
    /// Number of partitions of `n_set` inspected.
    pub partitions: u64,
    /// Number of them in the family.
    pub count: u64,
    /// `5^{|𝐧|}·(2k)^{(κ−1)ρ+2}`.
    pub bound: u128,
}

impl CensusResult {
    /// Line format, e.g. `k=2 n={1,2} kappa=1 rho=0 partitions=2 count=2 bound=400`.
    pub fn to_line(&self) -> String {
        let n: Vec<String> = self.n_set.iter().map(|i| i.to_string()).collect();
        format!(
            "k={} n={{{}}} kappa={} rho={} partitions={} count={} bound={}",
            self.k,
            n.join(","),
            self.kappa,
            self.rho,
            self.partitions,
            self.count,
            self.bound
        )
    }
}

/// All set partitions of `{0,…,n−1}` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max {
            cur.push(c);
            rec(i + 1, n, cur, max.max(c + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Adjacency of the graph 𝒢_{𝐧,∼}: classes of consecutive elements of `𝐧`
/// are joined when distinct. `labels[t]` is the class of the `t`-th element.
pub fn restricted_graph(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let mut adj = vec![BTreeSet::new(); c];
    for w in labels.windows(2) {
        if w[0] != w[1] {
            adj[w[0]].insert(w[1]);
            adj[w[1]].insert(w[0]);
        }
    }
    adj
}

/// Membership in `S_{k,𝐧,κ}(ρ)` for a partition given by labels on the
/// sorted elements of `𝐧`.
pub fn in_census_family(labels: &[usize], kappa: usize, rho: usize) -> bool {
    let adj = restricted_graph(labels);
    let heavy: Vec<usize> = (0..adj.len()).filter(|&c| adj[c].len() > 2).collect();
    if heavy.len() > rho {
        return false;
    }
    heavy.iter().all(|&c| {
        let exits = labels.windows(2).filter(|w| w[0] == c && w[1] != c).count();
        exits <= kappa
    })
}

/// Letters of the five-letter code of a partition of `𝐧`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeLetter {
    /// A class seen for the first time.
    New,
    /// Same class as the preceding element.
    Repeat,
    /// First or second neighbour already seen next to a low-degree class.
    Known(u8),
    /// Any other case; the class must be spelled out.
    Dot,
}

/// Writes the code string of a partition, reading `𝐧` left to right.
pub fn census_code(labels: &[usize]) -> Vec<CodeLetter> {
    let adj = restricted_graph(labels);
    let mut seen_next: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut seen_class = BTreeSet::new();
    let mut out = Vec::with_capacity(labels.len());
    for t in 0..labels.len() {
        let c = labels[t];
        let letter = if !seen_class.contains(&c) {
            CodeLetter::New
        } else {
            let prev = labels[t - 1];
            if prev == c {
                CodeLetter::Repeat
            } else {
                let known = seen_next.get(&prev).and_then(|v| v.iter().position(|x| *x == c));
                match known {
                    Some(pos) if adj[prev].len() <= 2 => CodeLetter::Known(pos as u8 + 1),
                    _ => CodeLetter::Dot,
                }
            }
        };
        out.push(letter);
        seen_class.insert(c);
        if t > 0 && labels[t - 1] != c {
            for (a, b) in [(labels[t - 1], c), (c, labels[t - 1])] {
                let v = seen_next.entry(a).or_default();
                if !v.contains(&b) {
                    v.push(b);
                }
            }
        }
    }
    out
}

/// Exact count of `S_{k,𝐧,κ}(ρ)` by filtering every partition of `𝐧`.
pub fn shape_family_census(k: usize, n_set: &[usize], kappa: usize, rho: usize) -> Result<CensusResult> {
    if k == 0 || kappa == 0 {
        return param("k and kappa must be positive");
    }
    if k > MAX_CENSUS_K {
        return capacity(format!("exhaustive census needs k ≤ {MAX_CENSUS_K}"));
    }
    let mut n: Vec<usize> = n_set.to_vec();
    n.sort_unstable();
    n.dedup();
    if n.len() != n_set.len() || n.iter().any(|&i| i == 0 || i > 2 * k) {
        return param("n_set must be distinct positions in 1..=2k");
    }
    let parts = set_partitions(n.len());
    let count = parts.iter().filter(|p| in_census_family(p, kappa, rho)).count() as u64;
    let exponent = ((kappa - 1) * rho + 2) as u32;
    let bound = 5u128
        .checked_pow(n.len() as u32)
        .and_then(|a| (2 * k as u128).checked_pow(exponent).and_then(|b| a.checked_mul(b)))
        .ok_or_else(|| DivlabError::Capacity("census bound overflows u128".into()))?;
    let result = CensusResult { k, n_set: n, kappa, rho, partitions: parts.len() as u64, count, bound };
    if count as u128 > bound {
        return Err(DivlabError::Verification {
            message: format!("census count exceeds the coding bound: {}", result.to_line()),
            witness: Vec::new(),
        });
    }
    Ok(result)
}

/// Evaluation mode for [`evaluate_walk_sums`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkSumMode {
    Exact,
    /// Uniform sampling of `(p⃗, σ⃗)` with inner sums evaluated exactly.
    MonteCarlo { samples: usize },
}

/// The two walk sums together with their standard errors (zero when exact).
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSums {
    pub s1: f64,
    pub s2: f64,
    pub s1_std_error: f64,
    pub s2_std_error: f64,
    pub mode: WalkSumMode,
    pub seed: u64,
    /// The threshold `2k / log 𝓛` on `|𝐒|`.
    pub s2_cutoff: f64,
    pub support_size: usize,
}

/// First `n` of the support with every `n + β_i` in the support and
/// `p_i | n + β_i` for each 1-based `i` in `divisible`.
pub fn c_membership_witness(
    support: &SupportMask,
    p_vec: &[u64],
    sigma_vec: &[i8],
    divisible: &BTreeSet<usize>,
) -> Option<u64> {
    let beta = partial_sums(p_vec, sigma_vec);
    let start = support.window_start() as i128 + 1;
    let len = support.len() as i128;
    let inside = |m: i128| {
        let i = m - start;
        i >= 0 && i < len && support.get(i as usize)
    };
    (0..support.len()).find_map(|i| {
        if !support.get(i) {
            return None;
        }
        let n = start + i as i128;
        let ok = beta.iter().all(|b| inside(n + b))
            && divisible.iter().all(|&j| divides(p_vec[j - 1], n + beta[j]));
        ok.then_some(n as u64)
    })
}

struct TermContext<'a> {
    support: &'a SupportMask,
    mertens: f64,
    cutoff: f64,
}

fn class_masks(p: &[u64]) -> Vec<(u64, u64)> {
    let mut by_prime: BTreeMap<u64, u64> = BTreeMap::new();
    for (i, &q) in p.iter().enumerate() {
        *by_prime.entry(q).or_insert(0) |= 1 << i;
    }
    by_prime.into_iter().map(|(q, m)| (m, q)).collect()
}

/// Weight `Π_{i∉l} 1/p_i · Π_{[i] meeting l} 1/p_{[i]}`.
fn l_weight(p: &[u64], classes: &[(u64, u64)], l: u64) -> f64 {
    let mut w = 1.0;
    for (i, &q) in p.iter().enumerate() {
        if l & (1 << i) == 0 {
            w /= q as f64;
        }
    }
    for &(m, q) in classes {
        if m & l != 0 {
            w /= q as f64;
        }
    }
    w
}

fn count_in_progression(support: &SupportMask, prog: Progression) -> u64 {
    let Progression::Class { q, a } = prog else {
        return 0;
    };
    if q == 1 {
        return support.count() as u64;
    }
    let first = support.window_start() + 1;
    let mut n = first + (a + q - first % q) % q;
    let end = support.window_start() + support.len() as u64;
    let mut c = 0;
    while n <= end {
        if support.get((n - first) as usize) {
            c += 1;
        }
        n += q;
    }
    c
}

/// Contributions of one pair `(p⃗, σ⃗)` to `S₁` and to `N·S₂`.
fn pair_terms(ctx: &TermContext<'_>, p: &[u64], sigma: &[i8]) -> (f64, f64) {
    let len = p.len();
    let beta = partial_sums(p, sigma);
    let classes = class_masks(p);
    let lone = lone_set(p);
    let lone_mask: u64 = lone.iter().map(|i| 1u64 << (i - 1)).sum();
    let full: u64 = (1u64 << len) - 1;

    let mut s1 = 0.0;
    if beta[len] == 0 {
        let start = ctx.support.window_start() as i128 + 1;
        let wlen = ctx.support.len() as i128;
        let inside = |m: i128| {
            let i = m - start;
            i >= 0 && i < wlen && ctx.support.get(i as usize)
        };
        let mut dsets: BTreeSet<u64> = BTreeSet::new();
        for i in 0..ctx.support.len() {
            if !ctx.support.get(i) {
                continue;
            }
            let n = start + i as i128;
            if !beta.iter().all(|b| inside(n + b)) {
                continue;
            }
            let d: u64 = (0..len)
                .filter(|&j| lone_mask & (1 << j) == 0 && divides(p[j], n + beta[j + 1]))
                .map(|j| 1u64 << j)
                .sum();
            dsets.insert(d);
        }
        if !dsets.is_empty() {
            let scale = ctx.mertens.powf(-(lone.len() as f64) / 2.0);
            for l in 0..=full {
                let need = l & !lone_mask;
                if dsets.iter().any(|d| need & !d == 0) {
                    s1 += scale * l_weight(p, &classes, l);
                }
            }
        }
    }

    let mut s2 = 0.0;
    if (s_set(p, &beta, &lone).len() as f64) > ctx.cutoff {
        for l in 0..=full {
            let mut prog = Progression::whole();
            for j in 0..len {
                if l & (1 << j) != 0 {
                    let r = Progression::new(p[j], -beta[j + 1]).expect("primes are squarefree");
                    prog = prog.intersect(&r);
                }
            }
            let c = count_in_progression(ctx.support, prog);
            if c > 0 {
                let w: f64 = (0..len).filter(|&j| l & (1 << j) == 0).map(|j| 1.0 / p[j] as f64).product();
                s2 += c as f64 * w;
            }
        }
    }
    (s1, s2)
}

fn decode_pair(idx: u64, primes: &[u64], len: usize) -> (Vec<u64>, Vec<i8>) {
    let signs: Vec<i8> = (0..len).map(|j| if idx >> j & 1 == 1 { -1 } else { 1 }).collect();
    let mut rest = idx >> len;
    let m = primes.len() as u64;
    let p: Vec<u64> = (0..len)
        .map(|_| {
            let q = primes[(rest % m) as usize];
            rest /= m;
            q
        })
        .collect();
    (p, signs)
}

/// `S₁` and `S₂` on the window `(window_start, window_start + window_len]`
/// with support `X₀ ∩ Y_ℓ`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_walk_sums(
    pw: &PrimeWindow,
    window_start: u64,
    window_len: u64,
    k_factor: f64,
    ell: usize,
    k: usize,
    mode: WalkSumMode,
    seed: u64,
) -> Result<WalkSums> {
    check_walk_budget(pw, k, mode)?;
    let table = build_factor_table(window_start, window_len, pw)?;
    let x0 = compute_x0_mask(&table, pw, k_factor)?;
    let yl = compute_yl_mask(&table, pw, ell, DEFAULT_NODE_BUDGET)?;
    let support = x0.intersect(&yl.mask)?;
    evaluate_walk_sums_on_support(pw, &support, k, mode, seed)
}

fn check_walk_budget(pw: &PrimeWindow, k: usize, mode: WalkSumMode) -> Result<()> {
    if k == 0 {
        return param("k must be positive");
    }
    if pw.is_empty() {
        return param("the prime window is empty");
    }
    let work = (pw.len() as f64).powi(2 * k as i32) * 4f64.powi(2 * k as i32);
    match mode {
        WalkSumMode::Exact if work > EXACT_WALK_BUDGET => {
            capacity(format!("exact walk sums need |P|^(2k)·4^(2k) ≤ 1e8, got {work:.3e}"))
        }
        WalkSumMode::MonteCarlo { samples } if samples < 2 => param("at least two samples are required"),
        _ if 2 * k > 62 => capacity("2k must fit in a 64-bit index mask"),
        _ => Ok(()),
    }
}

/// Walk sums with an explicit support mask in place of `X₀ ∩ Y_ℓ`.
///
/// The integers `n` counted in `S₂` range over the support as well, so an
/// empty support gives `S₁ = S₂ = 0`; with a full support `S₂` is the sum
/// over the whole window.
pub fn evaluate_walk_sums_on_support(
    pw: &PrimeWindow,
    support: &SupportMask,
    k: usize,
    mode: WalkSumMode,
    seed: u64,
) -> Result<WalkSums> {
    evaluate_walk_sums_in_order(pw.primes(), support, k, mode, seed)
}

/// Same as [`evaluate_walk_sums_on_support`] with the primes enumerated in
/// the given order, which must list distinct primes. Exact sums do not
/// depend on the order; sampled ones depend on it through the stream.
pub fn evaluate_walk_sums_in_order(
    primes: &[u64],
    support: &SupportMask,
    k: usize,
    mode: WalkSumMode,
    seed: u64,
) -> Result<WalkSums> {
    let mut sorted = primes.to_vec();
    sorted.sort_unstable();
    let lo = sorted.first().copied().unwrap_or(2);
    let hi = sorted.last().copied().unwrap_or(2);
    let pw = PrimeWindow::from_primes(lo, hi, sorted)?;
    check_walk_budget(&pw, k, mode)?;
    let len = 2 * k;
    let mertens = pw.mertens_f64();
    let cutoff = if mertens == 1.0 { f64::INFINITY } else { len as f64 / mertens.ln() };
    let ctx = TermContext { support, mertens, cutoff };
    let n_len = support.len() as f64;
    let total_pairs = (pw.len() as f64).powi(len as i32) * 2f64.powi(len as i32);

    let (s1, s2, e1, e2) = match mode {
        WalkSumMode::Exact => {
            let count = (pw.len() as u64).pow(len as u32) << len;
            let (a, b) = (0..count)
                .into_par_iter()
                .map(|idx| {
                    let (p, s) = decode_pair(idx, primes, len);
                    pair_terms(&ctx, &p, &s)
                })
                .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
            (a, b / n_len, 0.0, 0.0)
        }
        WalkSumMode::MonteCarlo { samples } => {
            const BLOCK: usize = 1024;
            let count = (pw.len() as u64).pow(len as u32) << len;
            let draws: Vec<u64> = (0..samples.div_ceil(BLOCK))
                .into_par_iter()
                .flat_map_iter(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(b as u64);
                    let n = BLOCK.min(samples - b * BLOCK);
                    (0..n).map(move |_| rng.random_range(0..count))
                })
                .collect();
            let distinct: BTreeSet<u64> = draws.iter().copied().collect();
            let terms: HashMap<u64, (f64, f64)> = distinct
                .into_par_iter()
                .map(|idx| {
                    let (p, s) = decode_pair(idx, primes, len);
                    (idx, pair_terms(&ctx, &p, &s))
                })
                .collect();
            let m = samples as f64;
            let (mut sum1, mut sq1, mut sum2, mut sq2) = (0.0, 0.0, 0.0, 0.0);
            for idx in &draws {
                let (a, b) = terms[idx];
                let b = b / n_len;
                sum1 += a;
                sq1 += a * a;
                sum2 += b;
                sq2 += b * b;
            }
            let (mean1, mean2) = (sum1 / m, sum2 / m);
            let var1 = ((sq1 - m * mean1 * mean1) / (m - 1.0)).max(0.0);
            let var2 = ((sq2 - m * mean2 * mean2) / (m - 1.0)).max(0.0);
            (
                total_pairs * mean1,
                total_pairs * mean2,
                total_pairs * (var1 / m).sqrt(),
                total_pairs * (var2 / m).sqrt(),
            )
        }
    };
    Ok(WalkSums {
        s1,
        s2,
        s1_std_error: e1,
        s2_std_error: e2,
        mode,
        seed,
        s2_cutoff: cutoff,
        support_size: support.count(),
    })
}
