//! Graph and exact linear-algebra tools for the counting arguments on walks.
//!
//! The graph half works with small undirected simple graphs that may carry a
//! directed overlay of arrows. It provides spanning trees with many leaves
//! (via the degree-one and degree-two reductions followed by an exact search
//! on small cores), the one-third selection of vertices with an incoming
//! arrow from outside, and the connected set with a large out-boundary built
//! from those two. Small graphs can also be enumerated up to isomorphism.
//!
//! The algebra half computes ranks over ℚ by fraction-free elimination, the
//! red/blue span dimensions attached to a coloured shape, the column-sparsity
//! rank bound, and brute-force lattice counts in boxes.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{capacity, hypothesis, param, validation, DivlabError, Result};
use crate::walkshapes::{induced_walk_graph, reduce_shape, Shape};

/// Largest graph handled by the exact max-leaf search.
pub const EXACT_CORE_LIMIT: usize = 16;
/// Largest vertex count for [`graphs_up_to_isomorphism`].
pub const MAX_ISO_VERTICES: usize = 10;
/// Largest box volume for [`lattice_count`].
pub const MAX_LATTICE_POINTS: f64 = 1e8;

/// Finite undirected graph without loops or multiple edges, with an
/// optional set of arrows between distinct vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<BTreeSet<usize>>,
    arrows: BTreeSet<(usize, usize)>,
}

impl SimpleGraph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![BTreeSet::new(); n], arrows: BTreeSet::new() }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 0..n {
            for b in a + 1..n {
                g.add_edge(a, b).unwrap();
            }
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 1..n {
            g.add_edge(a - 1, a).unwrap();
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        if n >= 3 {
            g.add_edge(n - 1, 0).unwrap();
        }
        g
    }

    /// The Petersen graph: outer 5-cycle, inner pentagram, spokes.
    pub fn petersen() -> Self {
        let mut g = Self::new(10);
        for i in 0..5 {
            g.add_edge(i, (i + 1) % 5).unwrap();
            g.add_edge(5 + i, 5 + (i + 2) % 5).unwrap();
            g.add_edge(i, 5 + i).unwrap();
        }
        g
    }

    /// Adds an undirected edge; adding an existing edge is a no-op.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let n = self.adj.len();
        if a >= n || b >= n {
            return param(format!("edge ({a},{b}) outside 0..{n}"));
        }
        if a == b {
            return validation(format!("loop at vertex {a}"));
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        Ok(())
    }

    pub fn add_arrow(&mut self, from: usize, to: usize) -> Result<()> {
        let n = self.adj.len();
        if from >= n || to >= n {
            return param(format!("arrow ({from},{to}) outside 0..{n}"));
        }
        if from == to {
            return validation(format!("arrow loop at vertex {from}"));
        }
        self.arrows.insert((from, to));
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adj.iter().enumerate() {
            out.extend(nb.range(a + 1..).map(|&b| (a, b)));
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj.get(a).is_some_and(|s| s.contains(&b))
    }

    pub fn neighbours(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn min_degree(&self) -> usize {
        self.adj.iter().map(|s| s.len()).min().unwrap_or(0)
    }

    /// Number of vertices of degree at least 3.
    pub fn high_degree_count(&self) -> usize {
        self.adj.iter().filter(|s| s.len() >= 3).count()
    }

    pub fn arrows(&self) -> &BTreeSet<(usize, usize)> {
        &self.arrows
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.arrows.iter().filter(|a| a.1 == v).count()
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_subset(&(0..self.vertex_count()).collect())
    }

    /// Connectivity of the subgraph induced on `set`; the empty set counts
    /// as connected.
    pub fn is_connected_subset(&self, set: &BTreeSet<usize>) -> bool {
        let Some(&start) = set.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if set.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == set.len()
    }

    /// Out-boundary: vertices outside `set` receiving an arrow from `set`.
    pub fn out_boundary(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.arrows.iter().filter(|(a, b)| set.contains(a) && !set.contains(b)).map(|a| a.1).collect()
    }

    /// Relabels a walk graph to `0..n`; the returned vector gives the class
    /// label of each new vertex.
    pub fn from_walk_graph(g: &crate::walkshapes::WalkGraph) -> (Self, Vec<usize>) {
        let labels = g.vertices.clone();
        let idx = |c: usize| labels.binary_search(&c).expect("edge endpoints are vertices");
        let mut out = Self::new(labels.len());
        for &(a, b) in &g.edges {
            out.add_edge(idx(a), idx(b)).unwrap();
        }
        for &(a, b) in &g.arrows {
            out.add_arrow(idx(a), idx(b)).unwrap();
        }
        (out, labels)
    }

    fn adjacency_bits(&self) -> Vec<u32> {
        self.adj.iter().map(|s| s.iter().fold(0u32, |m, &b| m | 1 << b)).collect()
    }
}

impl fmt::Display for SimpleGraph {
    /// Adjacency-list text: one `v: a b c` line per vertex, then one
    /// `-> v: w …` line per vertex with outgoing arrows.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (v, nb) in self.adj.iter().enumerate() {
            let list: Vec<String> = nb.iter().map(|w| w.to_string()).collect();
            writeln!(f, "{v}: {}", list.join(" "))?;
        }
        for v in 0..self.adj.len() {
            let outs: Vec<String> =
                self.arrows.iter().filter(|a| a.0 == v).map(|a| a.1.to_string()).collect();
            if !outs.is_empty() {
                writeln!(f, "-> {v}: {}", outs.join(" "))?;
            }
        }
        Ok(())
    }
}

impl FromStr for SimpleGraph {
    type Err = DivlabError;

    fn from_str(s: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut arrows = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| DivlabError::Format(format!("line {}: {m}", lineno + 1));
            let (is_arrow, body) = match line.strip_prefix("->") {
                Some(rest) => (true, rest.trim()),
                None => (false, line),
            };
            let (head, tail) = body.split_once(':').ok_or_else(|| err("expected `v: …`"))?;
            let v: usize = head.trim().parse().map_err(|_| err("bad vertex"))?;
            n = n.max(v + 1);
            for tok in tail.split_whitespace() {
                let w: usize = tok.parse().map_err(|_| err("bad neighbour"))?;
                n = n.max(w + 1);
                if is_arrow {
                    arrows.push((v, w));
                } else {
                    edges.push((v, w));
                }
            }
        }
        let mut g = SimpleGraph::new(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        for (a, b) in arrows {
            g.add_arrow(a, b)?;
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Enumeration up to isomorphism

fn refine(adj: &[u32], cells: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut cells = cells;
    loop {
        let mut cell_of = vec![0usize; n];
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                cell_of[v] = c;
            }
        }
        let mut next = Vec::with_capacity(cells.len());
        for cell in &cells {
            let mut keyed: Vec<(Vec<usize>, usize)> = cell
                .iter()
                .map(|&v| {
                    let mut counts = vec![0usize; cells.len()];
                    for w in 0..n {
                        if adj[v] >> w & 1 == 1 {
                            counts[cell_of[w]] += 1;
                        }
                    }
                    (counts, v)
                })
                .collect();
            keyed.sort();
            let mut start = 0;
            for t in 1..=keyed.len() {
                if t == keyed.len() || keyed[t].0 != keyed[start].0 {
                    next.push(keyed[start..t].iter().map(|x| x.1).collect());
                    start = t;
                }
            }
        }
        if next.len() == cells.len() {
            return next;
        }
        cells = next;
    }
}

fn code_of(adj: &[u32], order: &[usize]) -> u64 {
    let mut code = 0u64;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            code = code << 1 | u64::from(adj[order[i]] >> order[j] & 1);
        }
    }
    code
}

fn canon_search(adj: &[u32], cells: Vec<Vec<usize>>, best: &mut Option<u64>) {
    let cells = refine(adj, cells);
    let Some(target) = cells.iter().position(|c| c.len() > 1) else {
        let order: Vec<usize> = cells.iter().map(|c| c[0]).collect();
        let code = code_of(adj, &order);
        if best.is_none_or(|b| code < b) {
            *best = Some(code);
        }
        return;
    };
    let cell = &cells[target];
    let mut tried: Vec<usize> = Vec::new();
    for &v in cell {
        // Twins are exchanged by an automorphism fixing everything else.
        let twin = tried.iter().any(|&u| {
            let mask = !(1u32 << u | 1u32 << v);
            adj[u] & mask == adj[v] & mask
        });
        if twin {
            continue;
        }
        tried.push(v);
        let mut split = cells[..target].to_vec();
        split.push(vec![v]);
        split.push(cell.iter().copied().filter(|&w| w != v).collect());
        split.extend(cells[target + 1..].iter().cloned());
        canon_search(adj, split, best);
    }
}

/// Canonical code of a graph on at most 11 vertices: equal codes exactly
/// for isomorphic graphs of the same order.
pub fn canonical_code(g: &SimpleGraph) -> u64 {
    let adj = g.adjacency_bits();
    let mut best = None;
    canon_search(&adj, vec![(0..adj.len()).collect()], &mut best);
    best.unwrap_or(0)
}

fn graph_from_code(n: usize, code: u64) -> SimpleGraph {
    let mut g = SimpleGraph::new(n);
    let total = n * n.saturating_sub(1) / 2;
    let mut bit = total;
    for i in 0..n {
        for j in i + 1..n {
            bit -= 1;
            if code >> bit & 1 == 1 {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    g
}

/// One representative of every isomorphism class of graphs on `n`
/// vertices, built by adding a vertex to each class on `n − 1` vertices.
pub fn graphs_up_to_isomorphism(n: usize) -> Result<Vec<SimpleGraph>> {
    if n > MAX_ISO_VERTICES {
        return capacity(format!("isomorphism classes are enumerated for n ≤ {MAX_ISO_VERTICES}"));
    }
    let mut level: Vec<SimpleGraph> = vec![SimpleGraph::new(0)];
    for m in 1..=n {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for g in &level {
            for nb in 0u32..(1 << (m - 1)) {
                let mut h = g.clone();
                h.adj.push(BTreeSet::new());
                for w in 0..m - 1 {
                    if nb >> w & 1 == 1 {
                        h.add_edge(m - 1, w).unwrap();
                    }
                }
                let code = canonical_code(&h);
                if seen.insert(code) {
                    next.push(graph_from_code(m, code));
                }
            }
        }
        level = next;
    }
    Ok(level)
}

// ---------------------------------------------------------------------------
// Spanning trees with many leaves

/// A spanning tree together with the data of the leaf bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanningTree {
    pub edges: Vec<(usize, usize)>,
    pub leaves: Vec<usize>,
    /// Vertices of degree ≥ 3 in the input graph.
    pub high_degree: usize,
    /// `high_degree / 4 + 2`.
    pub bound: f64,
    /// False when a core too large for exact search was expanded greedily;
    /// the bound is then reported and not asserted.
    pub exact: bool,
}

/// Structural check: `edges` form a spanning tree of `g`.
pub fn is_spanning_tree(g: &SimpleGraph, edges: &[(usize, usize)]) -> bool {
    let n = g.vertex_count();
    if n == 0 {
        return edges.is_empty();
    }
    if edges.len() != n - 1 || edges.iter().any(|&(a, b)| !g.has_edge(a, b)) {
        return false;
    }
    let mut t = SimpleGraph::new(n);
    for &(a, b) in edges {
        if t.has_edge(a, b) {
            return false;
        }
        t.add_edge(a, b).unwrap();
    }
    t.is_connected()
}

fn tree_leaves(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0usize; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    (0..n).filter(|&v| deg[v] == 1).collect()
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Maximum-leaf spanning tree by minimum connected dominating set.
fn exact_max_leaf(g: &SimpleGraph) -> Vec<(usize, usize)> {
    let n = g.vertex_count();
    if n <= 1 {
        return Vec::new();
    }
    if n == 2 {
        return vec![(0, 1)];
    }
    let adj = g.adjacency_bits();
    let full: u32 = (1u32 << n) - 1;
    let closed: Vec<u32> = (0..n).map(|v| adj[v] | 1 << v).collect();
    let connected = |set: u32| {
        let start = set.trailing_zeros() as usize;
        let mut seen = 1u32 << start;
        let mut frontier = seen;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = adj[v] & set & !seen;
            seen |= new;
            frontier |= new;
        }
        seen == set
    };
    for size in 1..=n as u32 {
        let mut set: u32 = (1u32 << size) - 1;
        while set <= full {
            let dom = (0..n).filter(|v| set >> v & 1 == 1).fold(0u32, |m, v| m | closed[v]);
            if dom == full && connected(set) {
                return tree_from_backbone(g, set);
            }
            // Gosper's hack: next subset of the same size.
            let c = set & set.wrapping_neg();
            let r = set + c;
            set = (((r ^ set) >> 2) / c) | r;
        }
    }
    unreachable!("a connected graph is dominated by its full vertex set")
}

fn tree_from_backbone(g: &SimpleGraph, set: u32) -> Vec<(usize, usize)> {
    let n = g.vertex_count();
    let inside: Vec<usize> = (0..n).filter(|v| set >> v & 1 == 1).collect();
    let mut edges = Vec::new();
    let mut seen = BTreeSet::from([inside[0]]);
    let mut queue = VecDeque::from([inside[0]]);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbours(v) {
            if set >> w & 1 == 1 && seen.insert(w) {
                edges.push(norm(v, w));
                queue.push_back(w);
            }
        }
    }
    for v in (0..n).filter(|v| set >> v & 1 == 0) {
        let u = *g.neighbours(v).iter().find(|&&u| set >> u & 1 == 1).expect("dominated");
        edges.push(norm(u, v));
    }
    edges
}

/// Greedy leaf expansion used for cores above the exact limit.
fn greedy_max_leaf(g: &SimpleGraph) -> Vec<(usize, usize)> {
    let n = g.vertex_count();
    let root = (0..n).max_by_key(|&v| g.degree(v)).unwrap();
    let mut inside = BTreeSet::from([root]);
    let mut edges = Vec::new();
    let mut expandable = vec![root];
    while inside.len() < n {
        let (pos, _) = expandable
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, g.neighbours(v).iter().filter(|w| !inside.contains(w)).count()))
            .max_by_key(|&(i, c)| (c, std::cmp::Reverse(i)))
            .unwrap();
        let v = expandable.swap_remove(pos);
        for &w in g.neighbours(v) {
            if inside.insert(w) {
                edges.push(norm(v, w));
                expandable.push(w);
            }
        }
    }
    edges
}

/// Connects the components of a forest spanning `g` with edges of `g`.
fn complete_forest(g: &SimpleGraph, mut edges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let n = g.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    for (a, b) in g.edges() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            edges.push((a, b));
        }
    }
    edges
}

/// Builds `g` minus `removed`, returning the graph and old→new labels.
fn without(g: &SimpleGraph, removed: &[usize]) -> (SimpleGraph, Vec<Option<usize>>) {
    let n = g.vertex_count();
    let mut map = vec![None; n];
    let mut next = 0;
    for (v, slot) in map.iter_mut().enumerate() {
        if !removed.contains(&v) {
            *slot = Some(next);
            next += 1;
        }
    }
    let mut h = SimpleGraph::new(next);
    for (a, b) in g.edges() {
        if let (Some(x), Some(y)) = (map[a], map[b]) {
            h.add_edge(x, y).unwrap();
        }
    }
    (h, map)
}

fn pull_back(map: &[Option<usize>], edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut inverse = vec![0; map.len()];
    for (v, m) in map.iter().enumerate() {
        if let Some(x) = m {
            inverse[*x] = v;
        }
    }
    edges.iter().map(|&(a, b)| norm(inverse[a], inverse[b])).collect()
}

fn max_leaf_rec(g: &SimpleGraph, exact: &mut bool) -> Vec<(usize, usize)> {
    let n = g.vertex_count();
    if n <= EXACT_CORE_LIMIT {
        return exact_max_leaf(g);
    }
    let ones: Vec<usize> = (0..n).filter(|&v| g.degree(v) == 1).collect();
    if ones.len() >= 2 {
        // Identify two degree-one vertices.
        let (v1, v2) = (ones[0], ones[1]);
        let (mut h, map) = without(g, &[v2]);
        let v = map[v1].unwrap();
        let u2 = *g.neighbours(v2).iter().next().unwrap();
        h.add_edge(v, map[u2].unwrap()).unwrap();
        let th = max_leaf_rec(&h, exact);
        let mut edges = Vec::new();
        for (a, b) in pull_back(&map, &th) {
            // Edges at the merged vertex go back to whichever original owns them.
            let (x, y) = if a == v1 { (b, a) } else { (a, b) };
            if y == v1 && !g.has_edge(x, v1) {
                edges.push(norm(x, v2));
            } else {
                edges.push(norm(x, y));
            }
        }
        return complete_forest(g, edges);
    }
    if let [v] = ones[..] {
        // A lone pendant vertex is removed and hung back on its neighbour.
        let u = *g.neighbours(v).iter().next().unwrap();
        let (h, map) = without(g, &[v]);
        let mut edges = pull_back(&map, &max_leaf_rec(&h, exact));
        edges.push(norm(u, v));
        return complete_forest(g, edges);
    }
    if let Some(w) = (0..n).find(|&w| g.degree(w) == 2) {
        let nb: Vec<usize> = g.neighbours(w).iter().copied().collect();
        let (v1, v2) = (nb[0], nb[1]);
        if !g.has_edge(v1, v2) {
            // Suppress w into an edge v1–v2.
            let (mut h, map) = without(g, &[w]);
            h.add_edge(map[v1].unwrap(), map[v2].unwrap()).unwrap();
            let th = pull_back(&map, &max_leaf_rec(&h, exact));
            let mut edges: Vec<(usize, usize)> = th.iter().copied().filter(|&e| e != norm(v1, v2)).collect();
            if th.contains(&norm(v1, v2)) {
                edges.extend([norm(v1, w), norm(w, v2)]);
            } else {
                edges.push(norm(v1, w));
            }
            return complete_forest(g, edges);
        }
        let (d1, d2) = (g.degree(v1), g.degree(v2));
        if d1 > 3 && d2 > 3 || d1 < 3 || d2 < 3 {
            let (h, map) = without(g, &[w]);
            let mut edges = pull_back(&map, &max_leaf_rec(&h, exact));
            edges.push(norm(if d2 > d1 { v2 } else { v1 }, w));
            return complete_forest(g, edges);
        }
        // One neighbour has degree exactly 3: drop it together with w.
        let (v1, v2) = if d1 == 3 { (v1, v2) } else { (v2, v1) };
        let u = *g.neighbours(v1).iter().find(|&&x| x != w && x != v2).unwrap();
        let (mut h, map) = without(g, &[v1, w]);
        h.add_edge(map[u].unwrap(), map[v2].unwrap()).unwrap();
        let th = pull_back(&map, &max_leaf_rec(&h, exact));
        let mut edges: Vec<(usize, usize)> = th.iter().copied().filter(|&e| e != norm(u, v2)).collect();
        if th.contains(&norm(u, v2)) {
            edges.extend([norm(u, v1), norm(v1, v2), norm(v1, w)]);
        } else {
            edges.extend([norm(v1, v2), norm(v2, w)]);
        }
        return complete_forest(g, edges);
    }
    *exact = false;
    greedy_max_leaf(g)
}

/// A spanning tree with at least `n/4 + 2` leaves when `n` vertices have
/// degree ≥ 3.
///
/// Degree-one and degree-two vertices are reduced away until at most
/// [`EXACT_CORE_LIMIT`] vertices remain, where a maximum-leaf tree is
/// found exactly; the reductions are then undone. The bound is asserted
/// when the exact search was reached and at least one vertex has degree ≥ 3.
pub fn max_leaf_spanning_tree(g: &SimpleGraph) -> Result<SpanningTree> {
    if !g.is_connected() {
        return validation("max-leaf spanning trees need a connected graph");
    }
    let mut exact = true;
    let edges = if g.vertex_count() == 0 { Vec::new() } else { max_leaf_rec(g, &mut exact) };
    if !is_spanning_tree(g, &edges) {
        return Err(DivlabError::Verification {
            message: "tree reconstruction did not produce a spanning tree".into(),
            witness: Vec::new(),
        });
    }
    let leaves = tree_leaves(g.vertex_count(), &edges);
    let high_degree = g.high_degree_count();
    let bound = high_degree as f64 / 4.0 + 2.0;
    if exact && high_degree >= 1 && (leaves.len() as f64) < bound {
        return Err(DivlabError::Verification {
            message: format!("spanning tree has {} leaves, below the bound {bound}", leaves.len()),
            witness: leaves.iter().map(|&v| v as f64).collect(),
        });
    }
    Ok(SpanningTree { edges, leaves, high_degree, bound, exact })
}

// ---------------------------------------------------------------------------
// Arrows and boundaries

/// A subset `S′ ⊂ S` with `|S′| ≥ |S|/3` such that every member receives an
/// arrow from a vertex outside `S′`.
///
/// One incoming arrow is kept per vertex (from its smallest source), giving
/// a predecessor map. Inside `S` the predecessor links form a pseudoforest,
/// which is coloured with three colours so that no vertex shares a colour
/// with its predecessor; the largest colour class is returned.
pub fn inboundary_subset(g: &SimpleGraph, s: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    let n = g.vertex_count();
    if let Some(v) = s.iter().find(|&&v| v >= n) {
        return param(format!("vertex {v} outside the graph"));
    }
    let mut pred = vec![usize::MAX; n];
    for &(a, b) in g.arrows().iter().rev() {
        pred[b] = a;
    }
    if let Some(v) = (0..n).find(|&v| pred[v] == usize::MAX) {
        return validation(format!("vertex {v} has no incoming arrow"));
    }
    let inner = |v: usize| s.contains(&pred[v]);
    let mut colour = vec![u8::MAX; n];
    // Cycles of the predecessor map inside S.
    for &start in s {
        if colour[start] != u8::MAX {
            continue;
        }
        let mut path = vec![start];
        let mut cur = start;
        while inner(cur) && colour[pred[cur]] == u8::MAX && !path.contains(&pred[cur]) {
            cur = pred[cur];
            path.push(cur);
        }
        if inner(cur) && colour[pred[cur]] == u8::MAX {
            let begin = path.iter().position(|&x| x == pred[cur]).unwrap();
            let cycle = &path[begin..];
            for (i, &c) in cycle.iter().rev().enumerate() {
                colour[c] = (i % 2) as u8;
            }
            if cycle.len() % 2 == 1 && cycle.len() > 1 {
                colour[cycle[0]] = 2;
            }
        }
    }
    // Remaining vertices hang off a coloured vertex or off the outside.
    fn assign(v: usize, pred: &[usize], s: &BTreeSet<usize>, colour: &mut [u8]) -> u8 {
        if colour[v] != u8::MAX {
            return colour[v];
        }
        let c = if s.contains(&pred[v]) {
            let pc = assign(pred[v], pred, s, colour);
            if pc == 0 {
                1
            } else {
                0
            }
        } else {
            0
        };
        colour[v] = c;
        c
    }
    for &v in s {
        assign(v, &pred, s, &mut colour);
    }
    let best = (0..3u8).max_by_key(|&c| (s.iter().filter(|&&v| colour[v] == c).count(), std::cmp::Reverse(c))).unwrap();
    Ok(s.iter().copied().filter(|&v| colour[v] == best).collect())
}

/// Result of [`blue_selection`].
#[derive(Clone, Debug, PartialEq)]
pub struct BlueSelection {
    pub v_prime: BTreeSet<usize>,
    pub out_boundary: BTreeSet<usize>,
    pub tree: SpanningTree,
    /// `n3/12 + 4/3`.
    pub bound: f64,
    /// `n3/12 + 2/3`, which the construction guarantees.
    pub construction_bound: f64,
    /// Whether `bound` was asserted (enough vertices outside `V′`).
    pub asserted: bool,
}

/// The connected set `V′ = V ∖ S′`, where `S′` is the one-third selection
/// applied to the leaves of a max-leaf spanning tree.
pub fn blue_selection(g: &SimpleGraph, n3: usize) -> Result<BlueSelection> {
    let tree = max_leaf_spanning_tree(g)?;
    let leaves: BTreeSet<usize> = tree.leaves.iter().copied().collect();
    let s_prime = inboundary_subset(g, &leaves)?;
    let v_prime: BTreeSet<usize> = (0..g.vertex_count()).filter(|v| !s_prime.contains(v)).collect();
    if !g.is_connected_subset(&v_prime) {
        return Err(DivlabError::Verification {
            message: "V′ does not induce a connected subgraph".into(),
            witness: v_prime.iter().map(|&v| v as f64).collect(),
        });
    }
    let out_boundary = g.out_boundary(&v_prime);
    let bound = n3 as f64 / 12.0 + 4.0 / 3.0;
    let construction_bound = n3 as f64 / 12.0 + 2.0 / 3.0;
    let asserted = s_prime.len() as f64 >= bound.ceil();
    if asserted && (out_boundary.len() as f64) < bound {
        return Err(DivlabError::Verification {
            message: format!("out-boundary {} below {bound}", out_boundary.len()),
            witness: Vec::new(),
        });
    }
    if tree.exact && n3 <= tree.high_degree && n3 >= 1 && (out_boundary.len() as f64) < construction_bound {
        return Err(DivlabError::Verification {
            message: format!("out-boundary {} below {construction_bound}", out_boundary.len()),
            witness: Vec::new(),
        });
    }
    Ok(BlueSelection { v_prime, out_boundary, tree, bound, construction_bound, asserted })
}

/// Largest out-boundary over all non-empty connected vertex sets, by
/// exhaustive search (at most [`EXACT_CORE_LIMIT`] vertices).
pub fn max_connected_out_boundary(g: &SimpleGraph) -> Result<(BTreeSet<usize>, usize)> {
    let n = g.vertex_count();
    if n > EXACT_CORE_LIMIT {
        return capacity(format!("exhaustive boundary search needs at most {EXACT_CORE_LIMIT} vertices"));
    }
    let mut best = (BTreeSet::new(), 0);
    for mask in 1u32..(1u32 << n) {
        let set: BTreeSet<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        if g.is_connected_subset(&set) {
            let b = g.out_boundary(&set).len();
            if b > best.1 {
                best = (set, b);
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Exact linear algebra

/// Dense matrix of rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<BigRational>) -> Result<Self> {
        if data.len() != rows * cols {
            return param("data length must equal rows × cols");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_integers(rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return param("rows must have equal length");
        }
        let data = rows.iter().flatten().map(|&x| BigRational::from_integer(BigInt::from(x))).collect();
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.cols + c]
    }

    /// Rank over ℚ by fraction-free (Bareiss) elimination.
    pub fn rank(&self) -> usize {
        // Clear denominators row by row.
        let mut m: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
                row.iter().map(|x| x.numer() * (&l / x.denom())).collect()
            })
            .collect();
        bareiss_rank(&mut m, self.cols)
    }

    /// Rows with at least one non-zero entry, and the largest number of
    /// non-zero entries in a column.
    pub fn sparsity(&self) -> (bool, usize) {
        let rows_ok = (0..self.rows).all(|r| (0..self.cols).any(|c| !self.get(r, c).is_zero()));
        let col_max = (0..self.cols).map(|c| (0..self.rows).filter(|&r| !self.get(r, c).is_zero()).count()).max();
        (rows_ok, col_max.unwrap_or(0))
    }
}

fn bareiss_rank(m: &mut [Vec<BigInt>], cols: usize) -> usize {
    let rows = m.len();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for cc in c + 1..cols {
                let v = (&m[rank][c] * &m[r][cc] - &m[r][c] * &m[rank][cc]) / &prev;
                m[r][cc] = v;
            }
            m[r][c] = BigInt::zero();
        }
        prev = m[rank][c].clone();
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Rank of an integer matrix given by rows.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    bareiss_rank(&mut m, cols)
}

/// Colour of a class in [`red_blue_rank`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassColor {
    Red,
    Blue,
    Neither,
}

/// Span dimensions for a coloured shape.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    /// Dimension of the span of `v(i₂) − v(i₁)` over pairs in one blue class.
    pub dim_pairs: usize,
    /// Dimension of the span over all pairs of blue indices.
    pub dim_all: usize,
    /// Reduced positions `j` coloured blue followed by a red `j+1`.
    pub s: usize,
    pub kappa: usize,
    /// `s/κ − 1`.
    pub rank_bound: f64,
    /// Longest forbidden succession found in the reduced shape.
    pub max_succession: usize,
    /// The succession hypothesis holds (`max_succession < κ`).
    pub hypothesis_holds: bool,
}

/// Longest chain `i₁ < ȷ₁ < i₁′ ≤ i₂ < ȷ₂ < i₂′ ≤ …` in a shape with
/// `i_t ∼ i_t′` and `i_t ≁ ȷ_t`.
pub fn max_succession(shape: &Shape) -> usize {
    let lab = shape.labels();
    let len = lab.len();
    let mut count = 0;
    let mut floor = 0usize;
    for ip in 0..len {
        let ok = (floor..ip).any(|i| lab[i] == lab[ip] && (i + 1..ip).any(|j| lab[j] != lab[i]));
        if ok {
            count += 1;
            floor = ip;
        }
    }
    count
}

/// Exact span dimensions `dim_pairs`, `dim_all`, the count `s` and the
/// rank bound for a red/blue colouring of the classes of `shape`.
///
/// Coloured classes must be vertices of the walk graph (non-yellow), and
/// the blue classes must induce a connected subgraph.
pub fn red_blue_rank(shape: &Shape, coloring: &[ClassColor], kappa: usize) -> Result<RankReport> {
    if coloring.len() != shape.class_count() {
        return param("one colour per class is required");
    }
    if kappa == 0 {
        return param("kappa must be positive");
    }
    let red = reduce_shape(shape);
    if red.yellow.iter().any(|&c| coloring[c] != ClassColor::Neither) {
        return validation("yellow classes cannot be coloured");
    }
    let g = induced_walk_graph(shape);
    let blue: BTreeSet<usize> = (0..coloring.len()).filter(|&c| coloring[c] == ClassColor::Blue).collect();
    let (sg, labels) = SimpleGraph::from_walk_graph(&g);
    let blue_idx: BTreeSet<usize> = labels.iter().enumerate().filter(|(_, c)| blue.contains(c)).map(|(i, _)| i).collect();
    if !sg.is_connected_subset(&blue_idx) {
        return hypothesis("blue classes do not induce a connected subgraph");
    }
    let reds: Vec<usize> = (0..coloring.len()).filter(|&c| coloring[c] == ClassColor::Red).collect();
    let lab = shape.labels();
    let sig = shape.signs();
    // v(i) for i = 1..=2k, stored 0-based.
    let mut v: Vec<Vec<i64>> = Vec::with_capacity(lab.len());
    let mut acc = vec![0i64; reds.len()];
    for i in 0..lab.len() {
        v.push(acc.clone());
        if let Some(pos) = reds.iter().position(|&c| c == lab[i]) {
            acc[pos] += sig[i] as i64;
        }
    }
    let diff = |a: usize, b: usize| -> Vec<i64> { v[b].iter().zip(&v[a]).map(|(x, y)| x - y).collect() };
    let blue_pos: Vec<usize> = (0..lab.len()).filter(|&i| blue.contains(&lab[i])).collect();
    let mut pairs = Vec::new();
    let mut all = Vec::new();
    for (t, &a) in blue_pos.iter().enumerate() {
        for &b in &blue_pos[t + 1..] {
            let d = diff(a, b);
            if lab[a] == lab[b] {
                pairs.push(d.clone());
            }
            all.push(d);
        }
    }
    let rank_of = |rows: &[Vec<i64>]| if rows.is_empty() || reds.is_empty() { 0 } else { integer_rank(rows) };
    let dim_pairs = rank_of(&pairs);
    let dim_all = rank_of(&all);

    let rl = red.reduced.labels();
    let colour_at = |j: usize| coloring[red.class_map[rl[j]]];
    let s = (0..rl.len().saturating_sub(1))
        .filter(|&j| colour_at(j) == ClassColor::Blue && colour_at(j + 1) == ClassColor::Red)
        .count();
    let succession = max_succession(&red.reduced);
    let report = RankReport {
        dim_pairs,
        dim_all,
        s,
        kappa,
        rank_bound: s as f64 / kappa as f64 - 1.0,
        max_succession: succession,
        hypothesis_holds: succession < kappa,
    };
    if dim_pairs != dim_all {
        return Err(DivlabError::Verification {
            message: format!("span dimensions differ: pairs {dim_pairs}, all {dim_all}"),
            witness: Vec::new(),
        });
    }
    if report.hypothesis_holds && ((kappa * dim_pairs) as i64) < s as i64 - kappa as i64 {
        return Err(DivlabError::Verification {
            message: format!("dimension {dim_pairs} below s/κ − 1 = {}", report.rank_bound),
            witness: Vec::new(),
        });
    }
    Ok(report)
}

/// Rank of a column-sparse matrix against the bound `rows/κ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseRankReport {
    pub rank: usize,
    pub rows: usize,
    pub kappa: usize,
}

/// Checks `rank(A) ≥ rows/κ` for a matrix whose rows are non-zero and whose
/// columns have at most `κ` non-zero entries.
pub fn sparse_rank_bound(m: &RationalMatrix, kappa: usize) -> Result<SparseRankReport> {
    if kappa == 0 {
        return param("kappa must be positive");
    }
    let (rows_ok, col_max) = m.sparsity();
    if !rows_ok {
        return hypothesis("some row is zero");
    }
    if col_max > kappa {
        return hypothesis(format!("a column has {col_max} non-zero entries, more than κ = {kappa}"));
    }
    let rank = m.rank();
    if rank * kappa < m.rows() {
        return Err(DivlabError::Verification {
            message: format!("rank {rank} below rows/κ = {}/{kappa}", m.rows()),
            witness: Vec::new(),
        });
    }
    Ok(SparseRankReport { rank, rows: m.rows(), kappa })
}

/// Lattice-point count in a box against the geometry-of-numbers bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeReport {
    pub count: u64,
    pub bound: f64,
    /// Largest absolute entry, used as `C`.
    pub c_max: i64,
    /// `M = min(min r_i, min N_i)`.
    pub m_min: u64,
}

fn determinant_is_zero(matrix: &[Vec<i64>]) -> bool {
    integer_rank(matrix) < matrix.len()
}

/// Counts `n⃗` with `N_i ≤ n_i ≤ 2N_i` and `r_i | (M n⃗ + c⃗)_i` for all `i`,
/// and compares with `(2Cm/M)^m Π N_i`.
pub fn lattice_count(matrix: &[Vec<i64>], c: &[i64], r: &[u64], n_box: &[u64]) -> Result<LatticeReport> {
    let m = matrix.len();
    if m == 0 || matrix.iter().any(|row| row.len() != m) || c.len() != m || r.len() != m || n_box.len() != m {
        return param("a square matrix with matching c, r and box vectors is required");
    }
    if determinant_is_zero(matrix) {
        return hypothesis("the matrix is singular");
    }
    let m_min = r.iter().chain(n_box).copied().min().unwrap();
    if m_min < 1 {
        return hypothesis("moduli and box sizes must be at least 1");
    }
    let volume: f64 = n_box.iter().map(|&n| n as f64 + 1.0).product();
    if volume > MAX_LATTICE_POINTS {
        return capacity("box too large for brute force");
    }
    let c_max = matrix.iter().flatten().map(|x| x.abs()).max().unwrap().max(1);
    let mut count = 0u64;
    let mut point: Vec<i64> = n_box.iter().map(|&n| n as i64).collect();
    'outer: loop {
        let ok = (0..m).all(|i| {
            let val: i128 = (0..m).map(|j| matrix[i][j] as i128 * point[j] as i128).sum::<i128>() + c[i] as i128;
            val.rem_euclid(r[i] as i128) == 0
        });
        count += u64::from(ok);
        for d in 0..m {
            if point[d] < 2 * n_box[d] as i64 {
                point[d] += 1;
                continue 'outer;
            }
            point[d] = n_box[d] as i64;
        }
        break;
    }
    let bound = (2.0 * c_max as f64 * m as f64 / m_min as f64).powi(m as i32)
        * n_box.iter().map(|&n| n as f64).product::<f64>();
    if count as f64 > bound {
        return Err(DivlabError::Verification {
            message: format!("lattice count {count} exceeds bound {bound}"),
            witness: Vec::new(),
        });
    }
    Ok(LatticeReport { count, bound, c_max, m_min })
}
