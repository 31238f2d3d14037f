//! Weighted graphs, lattice builders and boundary-condition surgery.
//!
//! Edges are stored in their enumeration order: the index of an edge in
//! [`WeightedGraph::edges`] is its rank in the fixed total order that the
//! exploration decision trees rely on.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unionfind::UnionFind;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<S> {
    pub u: usize,
    pub v: usize,
    pub coupling: S,
}

impl<S> Edge<S> {
    pub fn is_loop(&self) -> bool {
        self.u == self.v
    }

    pub fn touches(&self, x: usize) -> bool {
        self.u == x || self.v == x
    }

    /// The endpoint opposite to `x` (or `x` itself for a self-loop).
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// Free-text description carried into reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub name: String,
    /// True when the construction guarantees vertex transitivity (tori, cycles, complete graphs).
    pub transitive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph<S> {
    n_vertices: usize,
    edges: Vec<Edge<S>>,
    incident: Vec<Vec<usize>>,
    meta: GraphMeta,
}

impl<S: Scalar> WeightedGraph<S> {
    /// Builds a graph from an edge list given in enumeration order.
    pub fn new(n_vertices: usize, edges: Vec<Edge<S>>) -> Result<Self> {
        for (i, e) in edges.iter().enumerate() {
            if e.u >= n_vertices || e.v >= n_vertices {
                return Err(Error::InvalidSpec(format!(
                    "edge {i} ({}, {}) references a vertex outside 0..{n_vertices}",
                    e.u, e.v
                )));
            }
            if !(e.coupling > S::zero()) || !e.coupling.is_finite() {
                return Err(Error::InvalidSpec(format!("edge {i} has non-positive coupling {}", e.coupling)));
            }
        }
        let mut incident = vec![Vec::new(); n_vertices];
        for (i, e) in edges.iter().enumerate() {
            incident[e.u].push(i);
            if !e.is_loop() {
                incident[e.v].push(i);
            }
        }
        Ok(Self { n_vertices, edges, incident, meta: GraphMeta::default() })
    }

    /// Convenience constructor from `(u, v, J)` triples.
    pub fn from_triples(n_vertices: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(n_vertices, triples.iter().map(|&(u, v, j)| Edge { u, v, coupling: S::lit(j) }).collect())
    }

    pub fn with_meta(mut self, name: impl Into<String>, transitive: bool) -> Self {
        self.meta = GraphMeta { name: name.into(), transitive };
        self
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge<S> {
        &self.edges[e]
    }

    /// Indices of edges incident to `x`, in edge order. Self-loops appear once.
    pub fn incident(&self, x: usize) -> &[usize] {
        &self.incident[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.incident[x].len()
    }

    /// Returns a copy whose edge order is `perm`: new edge `i` is old edge `perm[i]`.
    pub fn reorder_edges(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_edges()];
        if perm.len() != self.n_edges() {
            return Err(Error::Shape { expected: self.n_edges(), got: perm.len() });
        }
        for &p in perm {
            if p >= self.n_edges() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidSpec("edge order is not a permutation".into()));
            }
        }
        let edges = perm.iter().map(|&p| self.edges[p]).collect();
        Ok(Self::new(self.n_vertices, edges)?.with_meta(self.meta.name.clone(), self.meta.transitive))
    }

    /// Distinct coupling constants, sorted ascending.
    pub fn couplings(&self) -> Vec<S> {
        let mut js: Vec<S> = self.edges.iter().map(|e| e.coupling).collect();
        js.sort_by(|a, b| a.partial_cmp(b).expect("finite couplings"));
        js.dedup();
        js
    }

    /// Ambient graph distances from `source` (over all edges); `usize::MAX` if unreachable.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(x) = queue.pop_front() {
            for &e in &self.incident[x] {
                let y = self.edges[e].other(x);
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n_vertices == 0 || self.distances_from(0).iter().all(|&d| d != usize::MAX)
    }

    /// Serializes to the edge-list text format (`u v J` per line).
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# vertices {}", self.n_vertices)?;
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.u, e.v, e.coupling)?;
        }
        Ok(())
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# vertices {}\n", self.n_vertices);
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.coupling);
        }
        s
    }

    /// Parses the edge-list format. A `# vertices N` header fixes the vertex
    /// count; otherwise it is one more than the largest index seen.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("vertices") {
                    let n = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| Error::Parse { line: line_no, msg: "malformed vertices header".into() })?;
                    declared = Some(n);
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: line_no, msg: "expected `u v J`".into() });
            }
            let bad = |what: &str| Error::Parse { line: line_no, msg: format!("bad {what}") };
            let u = fields[0].parse::<usize>().map_err(|_| bad("vertex"))?;
            let v = fields[1].parse::<usize>().map_err(|_| bad("vertex"))?;
            let j = fields[2].parse::<f64>().map_err(|_| bad("coupling"))?;
            edges.push(Edge { u, v, coupling: S::lit(j) });
        }
        let inferred = edges.iter().map(|e| e.u.max(e.v) + 1).max().unwrap_or(0);
        Self::new(declared.unwrap_or(inferred), edges)
    }
}

/// Shape of a hypercubic lattice with per-axis periodicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec<S> {
    pub sides: Vec<usize>,
    pub wrap: Vec<bool>,
    pub coupling: S,
}

impl<S: Scalar> LatticeSpec<S> {
    pub fn torus(sides: &[usize], coupling: S) -> Self {
        Self { sides: sides.to_vec(), wrap: vec![true; sides.len()], coupling }
    }

    pub fn boxed(sides: &[usize], coupling: S) -> Self {
        Self { sides: sides.to_vec(), wrap: vec![false; sides.len()], coupling }
    }
}

/// Nearest-neighbour lattice. Vertex `x` has coordinates in mixed radix with
/// axis 0 varying fastest; edges are ordered by (vertex index, axis). A
/// wrapped axis of length 2 yields a parallel pair and of length 1 a self-loop,
/// so a full torus always has `d · ∏ L_i` edges.
pub fn build_lattice<S: Scalar>(spec: &LatticeSpec<S>) -> Result<WeightedGraph<S>> {
    let d = spec.sides.len();
    if d == 0 {
        return Err(Error::InvalidSpec("lattice dimension must be positive".into()));
    }
    if spec.wrap.len() != d {
        return Err(Error::Shape { expected: d, got: spec.wrap.len() });
    }
    if spec.sides.contains(&0) {
        return Err(Error::InvalidSpec("lattice side lengths must be at least 1".into()));
    }
    let n: usize = spec.sides.iter().product();
    let mut strides = vec![1usize; d];
    for a in 1..d {
        strides[a] = strides[a - 1] * spec.sides[a - 1];
    }
    let mut edges = Vec::with_capacity(n * d);
    for x in 0..n {
        for a in 0..d {
            let len = spec.sides[a];
            let coord = x / strides[a] % len;
            let target = if coord + 1 < len {
                x + strides[a]
            } else if spec.wrap[a] {
                x + strides[a] - len * strides[a]
            } else {
                continue;
            };
            edges.push(Edge { u: x, v: target, coupling: spec.coupling });
        }
    }
    let dims = spec.sides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("x");
    let all_wrapped = spec.wrap.iter().all(|&w| w);
    let kind = if all_wrapped { "torus" } else { "box" };
    Ok(WeightedGraph::new(n, edges)?.with_meta(format!("{kind}-{dims}"), all_wrapped))
}

pub fn complete_graph<S: Scalar>(n: usize, coupling: S) -> Result<WeightedGraph<S>> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for u in 0..n {
        for v in u + 1..n {
            edges.push(Edge { u, v, coupling });
        }
    }
    Ok(WeightedGraph::new(n, edges)?.with_meta(format!("complete-{n}"), true))
}

pub fn cycle_graph<S: Scalar>(n: usize, coupling: S) -> Result<WeightedGraph<S>> {
    let g = build_lattice(&LatticeSpec::torus(&[n], coupling))?;
    Ok(g.with_meta(format!("cycle-{n}"), true))
}

pub fn path_graph<S: Scalar>(n: usize, coupling: S) -> Result<WeightedGraph<S>> {
    let g = build_lattice(&LatticeSpec::boxed(&[n], coupling))?;
    Ok(g.with_meta(format!("path-{n}"), n <= 2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Free,
    Wired,
}

/// Result of boundary surgery: the new graph and where each old vertex went.
#[derive(Clone, Debug)]
pub struct Surgery<S> {
    pub graph: WeightedGraph<S>,
    /// `vertex_map[old]` is the new index, `None` for vertices deleted by a free boundary.
    pub vertex_map: Vec<Option<usize>>,
    /// New index of the identified boundary vertex, if one was created.
    pub hub: Option<usize>,
}

/// Restricts `g` to `retained` with a free or wired boundary.
///
/// Free: the induced subgraph. Wired: every non-retained vertex is identified
/// into one hub (taking the smallest merged index), edges inside the hub are
/// deleted and parallel edges are kept. New vertex indices follow the order
/// of the original (representative) indices; edge order is inherited.
pub fn apply_boundary<S: Scalar>(g: &WeightedGraph<S>, kind: BoundaryKind, retained: &[usize]) -> Result<Surgery<S>> {
    if retained.is_empty() {
        return Err(Error::InvalidSpec("retained vertex set is empty".into()));
    }
    let n = g.n_vertices();
    let mut keep = vec![false; n];
    for &x in retained {
        if x >= n {
            return Err(Error::InvalidSpec(format!("retained vertex {x} out of range")));
        }
        keep[x] = true;
    }
    match kind {
        BoundaryKind::Free => {
            let mut vertex_map = vec![None; n];
            let mut next = 0;
            for x in 0..n {
                if keep[x] {
                    vertex_map[x] = Some(next);
                    next += 1;
                }
            }
            let edges = g
                .edges()
                .iter()
                .filter_map(|e| Some(Edge { u: vertex_map[e.u]?, v: vertex_map[e.v]?, coupling: e.coupling }))
                .collect();
            let graph = WeightedGraph::new(next, edges)?.with_meta(format!("{}|free", g.meta().name), false);
            Ok(Surgery { graph, vertex_map, hub: None })
        }
        BoundaryKind::Wired => {
            let outside: Vec<usize> = (0..n).filter(|&x| !keep[x]).collect();
            if outside.is_empty() {
                return Ok(Surgery { graph: g.clone(), vertex_map: (0..n).map(Some).collect(), hub: None });
            }
            let mut uf = UnionFind::new(n);
            for w in outside.windows(2) {
                uf.union(w[0], w[1]);
            }
            let mut smallest = vec![usize::MAX; n];
            for x in 0..n {
                let r = uf.find(x);
                smallest[r] = smallest[r].min(x);
            }
            let rep: Vec<usize> = (0..n).map(|x| smallest[uf.find(x)]).collect();
            let mut vertex_map = vec![None; n];
            let mut next = 0;
            for x in 0..n {
                if rep[x] == x {
                    vertex_map[x] = Some(next);
                    next += 1;
                }
            }
            for x in 0..n {
                vertex_map[x] = vertex_map[rep[x]];
            }
            let hub_index = vertex_map[outside[0]];
            let edges = g
                .edges()
                .iter()
                .filter(|e| keep[e.u] || keep[e.v])
                .map(|e| Edge {
                    u: vertex_map[e.u].expect("mapped"),
                    v: vertex_map[e.v].expect("mapped"),
                    coupling: e.coupling,
                })
                .collect();
            let graph = WeightedGraph::new(next, edges)?.with_meta(format!("{}|wired", g.meta().name), false);
            Ok(Surgery { graph, vertex_map, hub: hub_index })
        }
    }
}

/// `C(β) = max_e (e^{βJ_e} − 1) / J_e`; zero for an edgeless graph.
pub fn susceptibility_constant<S: Scalar>(g: &WeightedGraph<S>, beta: S) -> S {
    g.edges().iter().map(|e| (beta * e.coupling).exp_m1() / e.coupling).fold(S::zero(), S::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    type G = WeightedGraph<f64>;

    #[test]
    fn lattice_counts() {
        let cyc = build_lattice(&LatticeSpec::torus(&[3], 1.0)).unwrap();
        assert_eq!((cyc.n_vertices(), cyc.n_edges()), (3, 3));
        let grid = build_lattice(&LatticeSpec::boxed(&[2, 2], 1.0)).unwrap();
        assert_eq!((grid.n_vertices(), grid.n_edges()), (4, 4));
        let torus = build_lattice(&LatticeSpec::torus(&[4, 4], 1.0)).unwrap();
        assert_eq!((torus.n_vertices(), torus.n_edges()), (16, 32));
        assert!(torus.meta().transitive);
        assert!(!grid.meta().transitive);
    }

    #[test]
    fn short_wrapped_axes_keep_parallel_edges() {
        let g = build_lattice(&LatticeSpec::torus(&[2, 2], 1.0)).unwrap();
        assert_eq!(g.n_edges(), 8);
        assert!(g.edges().iter().all(|e| !e.is_loop()));
        let one = build_lattice(&LatticeSpec::torus(&[1], 1.0)).unwrap();
        assert_eq!(one.n_edges(), 1);
        assert!(one.edge(0).is_loop());
    }

    #[test]
    fn zero_dimension_rejected() {
        let spec = LatticeSpec::<f64> { sides: vec![], wrap: vec![], coupling: 1.0 };
        assert!(matches!(build_lattice(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn lattice_edge_order_is_vertex_then_axis() {
        let g = build_lattice(&LatticeSpec::torus(&[3, 3], 1.0)).unwrap();
        let keys: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(&keys[..4], &[(0, 1), (0, 3), (1, 2), (1, 4)]);
    }

    #[test]
    fn torus_is_regular() {
        for sides in [vec![3, 4], vec![2, 3], vec![5], vec![2, 2, 2]] {
            let g = build_lattice(&LatticeSpec::torus(&sides, 0.7)).unwrap();
            let d0 = g.degree(0);
            assert!((0..g.n_vertices()).all(|x| g.degree(x) == d0), "{sides:?}");
            assert_eq!(d0, 2 * sides.len());
        }
    }

    #[test]
    fn free_boundary_is_induced_subgraph() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let s = apply_boundary(&tri, BoundaryKind::Free, &[0, 2]).unwrap();
        assert_eq!(s.graph.n_vertices(), 2);
        assert_eq!(s.graph.n_edges(), 1);
        assert_eq!(s.vertex_map, vec![Some(0), None, Some(1)]);
    }

    #[test]
    fn wired_path_gives_parallel_hub_edges() {
        let p = path_graph::<f64>(3, 1.0).unwrap();
        let s = apply_boundary(&p, BoundaryKind::Wired, &[1]).unwrap();
        assert_eq!(s.graph.n_vertices(), 2);
        assert_eq!(s.graph.n_edges(), 2);
        assert_eq!(s.hub, Some(0));
        for e in s.graph.edges() {
            assert!(!e.is_loop());
            assert!(e.touches(0) && e.touches(1));
        }
    }

    #[test]
    fn wired_deletes_created_loops() {
        let g = build_lattice(&LatticeSpec::boxed(&[3, 3], 1.0)).unwrap();
        let s = apply_boundary(&g, BoundaryKind::Wired, &[4]).unwrap();
        assert_eq!(s.graph.n_vertices(), 2);
        assert_eq!(s.graph.n_edges(), 4);
        assert!(s.graph.edges().iter().all(|e| !e.is_loop()));
    }

    #[test]
    fn wired_retaining_everything_is_identity() {
        let g = build_lattice(&LatticeSpec::boxed(&[2, 3], 1.5)).unwrap();
        let all: Vec<usize> = (0..g.n_vertices()).collect();
        let s = apply_boundary(&g, BoundaryKind::Wired, &all).unwrap();
        assert_eq!(s.graph, g);
        assert_eq!(s.hub, None);
    }

    #[test]
    fn empty_retained_rejected() {
        let g = cycle_graph::<f64>(3, 1.0).unwrap();
        assert!(apply_boundary(&g, BoundaryKind::Free, &[]).is_err());
        assert!(apply_boundary(&g, BoundaryKind::Wired, &[]).is_err());
    }

    #[test]
    fn susceptibility_constant_values() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        assert!((susceptibility_constant(&tri, 2f64.ln()) - 1.0).abs() < 1e-15);
        assert_eq!(susceptibility_constant(&tri, 0.0), 0.0);
        let mixed = G::from_triples(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let expected = (1f64.exp().powi(2) - 1.0) / 2.0;
        assert!((susceptibility_constant(&mixed, 1.0) - expected).abs() < 1e-12);
        assert!((expected - 3.1945).abs() < 1e-4);
    }

    #[test]
    fn susceptibility_constant_monotone_in_beta() {
        let g = G::from_triples(3, &[(0, 1, 0.3), (1, 2, 2.0), (0, 2, 1.1)]).unwrap();
        let mut prev = 0.0;
        for i in 0..200 {
            let c = susceptibility_constant(&g, i as f64 * 0.05);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn rejects_bad_couplings() {
        assert!(G::from_triples(2, &[(0, 1, 0.0)]).is_err());
        assert!(G::from_triples(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = G::from_triples(4, &[(0, 1, 1.0), (1, 1, 0.5), (1, 2, 2.25)]).unwrap();
        let text = g.to_edge_list();
        let back = G::read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(back.n_vertices(), 4);
        assert_eq!(back.edges(), g.edges());
        assert!(matches!(G::read_edge_list("0 1".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn reorder_edges_permutes() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let r = tri.reorder_edges(&[2, 0, 1]).unwrap();
        assert_eq!(r.edge(0), tri.edge(2));
        assert!(tri.reorder_edges(&[0, 0, 1]).is_err());
    }
}
