//! Ghost field, the cluster-exploring decision forest, revealments and the
//! exact checks of the OSSS inequality and the volume differential inequality
//! that it implies.
//!
//! Coordinates of the product space are edges (`ω`) and vertices (`η`). The
//! tree `T^u` first reads `η(u)`; if `u` is green it explores the cluster of
//! `u` by always reading the smallest unread edge touching the explored set.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{decompose_with, Histogram, Provenance};
use crate::config::EdgeConfig;
use crate::error::{Error, Result};
use crate::exact::{ExactMeasure, DEFAULT_ENUMERATION_CAP};
use crate::graph::{GraphMeta, WeightedGraph};
use crate::scalar::{ksum, CompensatedSum, Scalar};
use crate::stats::two_sided_z;
use crate::unionfind::UnionFind;

/// Absolute slack for the exact inequality assertions.
pub const EXACT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhostParams<S> {
    pub lambda: S,
    pub n: usize,
}

impl<S: Scalar> GhostParams<S> {
    pub fn new(lambda: S, n: usize) -> Result<Self> {
        if !(lambda > S::zero()) || !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be positive and finite, got {lambda}")));
        }
        if n == 0 {
            return Err(Error::Domain("ghost parameter n must be at least 1".into()));
        }
        Ok(Self { lambda, n })
    }

    /// Inclusion probability `h = 1 − e^{−λ/n}`.
    pub fn h(&self) -> S {
        -(-self.lambda / S::from_count(self.n)).exp_m1()
    }

    /// `1 − e^{−λ s/n}`: probability that a set of `s` vertices contains a green one.
    pub fn hit_probability(&self, s: usize) -> S {
        -(-self.lambda * S::from_count(s) / S::from_count(self.n)).exp_m1()
    }
}

/// Green/white colouring of the vertices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct GhostField(Vec<bool>);

impl GhostField {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_mask(mask: u64, len: usize) -> Self {
        Self((0..len).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn is_green(&self, u: usize) -> bool {
        self.0[u]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_in(&self, vertices: &[usize]) -> usize {
        vertices.iter().filter(|&&u| self.0[u]).count()
    }
}

/// I.i.d. Bernoulli(h) bits, one per vertex.
pub fn sample_ghost<S: Scalar, R: Rng + ?Sized>(n_vertices: usize, gp: &GhostParams<S>, rng: &mut R) -> GhostField {
    let h = gp.h().as_f64().clamp(0.0, 1.0);
    GhostField((0..n_vertices).map(|_| rng.random_bool(h)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    Vertex(usize),
    Edge(usize),
}

/// Reads a coordinate of `(ω, η)`.
pub fn read_input(omega: &EdgeConfig, eta: &GhostField, c: Coordinate) -> bool {
    match c {
        Coordinate::Vertex(u) => eta.is_green(u),
        Coordinate::Edge(e) => omega.is_open(e),
    }
}

/// A deterministic query procedure.
///
/// `next` sees only the revealed `(coordinate, value)` history and returns the
/// next coordinate to read, or `None` once the tree has halted. Trees must
/// halt on every input for [`DecisionTree::run`] to terminate.
pub trait DecisionTree {
    fn next(&self, history: &[(Coordinate, bool)]) -> Option<Coordinate>;

    fn run(&self, input: &dyn Fn(Coordinate) -> bool) -> Vec<(Coordinate, bool)> {
        let mut history = Vec::new();
        while let Some(c) = self.next(&history) {
            history.push((c, input(c)));
        }
        history
    }
}

/// The tree `T^u`.
#[derive(Clone, Copy, Debug)]
pub struct ExplorationTree<'g, S> {
    graph: &'g WeightedGraph<S>,
    root: usize,
}

impl<'g, S: Scalar> ExplorationTree<'g, S> {
    pub fn new(graph: &'g WeightedGraph<S>, root: usize) -> Self {
        assert!(root < graph.n_vertices(), "root {root} out of range");
        Self { graph, root }
    }

    pub fn root(&self) -> usize {
        self.root
    }
}

impl<S: Scalar> DecisionTree for ExplorationTree<'_, S> {
    fn next(&self, history: &[(Coordinate, bool)]) -> Option<Coordinate> {
        match history.first() {
            None => return Some(Coordinate::Vertex(self.root)),
            Some(&(_, false)) => return None,
            Some(_) => {}
        }
        let g = self.graph;
        let mut explored = vec![false; g.n_vertices()];
        explored[self.root] = true;
        let mut read = vec![false; g.n_edges()];
        for &(c, open) in &history[1..] {
            if let Coordinate::Edge(e) = c {
                read[e] = true;
                if open {
                    let edge = g.edge(e);
                    explored[edge.u] = true;
                    explored[edge.v] = true;
                }
            }
        }
        (0..g.n_edges()).find(|&e| !read[e] && (explored[g.edge(e).u] || explored[g.edge(e).v])).map(Coordinate::Edge)
    }

    fn run(&self, input: &dyn Fn(Coordinate) -> bool) -> Vec<(Coordinate, bool)> {
        let root = Coordinate::Vertex(self.root);
        let mut history = vec![(root, input(root))];
        if !history[0].1 {
            return history;
        }
        let g = self.graph;
        let mut explored = vec![false; g.n_vertices()];
        let mut read = vec![false; g.n_edges()];
        // Every unread edge touching the explored set is in the heap, so its
        // minimum is the next query.
        let mut frontier = BinaryHeap::new();
        explored[self.root] = true;
        frontier.extend(g.incident(self.root).iter().map(|&e| Reverse(e)));
        while let Some(Reverse(e)) = frontier.pop() {
            if read[e] {
                continue;
            }
            read[e] = true;
            let open = input(Coordinate::Edge(e));
            history.push((Coordinate::Edge(e), open));
            if open {
                let edge = g.edge(e);
                for x in [edge.u, edge.v] {
                    if !explored[x] {
                        explored[x] = true;
                        frontier.extend(g.incident(x).iter().map(|&f| Reverse(f)));
                    }
                }
            }
        }
        history
    }
}

pub fn exploration_forest<S: Scalar>(g: &WeightedGraph<S>) -> Vec<ExplorationTree<'_, S>> {
    (0..g.n_vertices()).map(|u| ExplorationTree::new(g, u)).collect()
}

/// Query trace of `T^u` on `(ω, η)`.
pub fn explore_forest<S: Scalar>(
    g: &WeightedGraph<S>,
    omega: &EdgeConfig,
    eta: &GhostField,
    u: usize,
) -> Vec<(Coordinate, bool)> {
    ExplorationTree::new(g, u).run(&|c| read_input(omega, eta, c))
}

/// Vertices known to lie in the root's cluster after a trace of `T^u`.
fn explored_vertices<S: Scalar>(g: &WeightedGraph<S>, trace: &[(Coordinate, bool)], out: &mut [bool]) {
    out.fill(false);
    if let Some(&(Coordinate::Vertex(u), _)) = trace.first() {
        out[u] = true;
    }
    for &(c, open) in trace {
        if let (Coordinate::Edge(e), true) = (c, open) {
            out[g.edge(e).u] = true;
            out[g.edge(e).v] = true;
        }
    }
}

/// Probability, per coordinate, that the forest reads it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealmentProfile<S> {
    pub vertex: Vec<S>,
    pub edge: Vec<S>,
    pub vertex_half_widths: Vec<S>,
    pub edge_half_widths: Vec<S>,
    pub samples: u64,
    pub provenance: Provenance,
}

impl<S: Scalar> RevealmentProfile<S> {
    pub fn get(&self, c: Coordinate) -> S {
        match c {
            Coordinate::Vertex(u) => self.vertex[u],
            Coordinate::Edge(e) => self.edge[e],
        }
    }

    pub fn half_width(&self, c: Coordinate) -> S {
        match c {
            Coordinate::Vertex(u) => self.vertex_half_widths[u],
            Coordinate::Edge(e) => self.edge_half_widths[e],
        }
    }

    pub fn max_edge(&self) -> Option<(usize, S)> {
        self.edge.iter().copied().enumerate().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    }
}

/// Accumulators from one pass over every `(ω, η)`.
#[derive(Clone, Debug)]
struct JointAcc<S> {
    /// Vertices then edges.
    revealed: Vec<CompensatedSum<S>>,
    /// `[v][s]`: `P(|K_v| = s)`.
    size: Vec<Vec<CompensatedSum<S>>>,
    /// `[v][s]`: `P(|K_v| = s, g_v = 1)` with `g_v` read off the forest's traces.
    size_g: Vec<Vec<CompensatedSum<S>>>,
    /// `[v][s][u]`: `P(|K_v| = s, η(u) = 1)`.
    size_eta: Vec<Vec<Vec<CompensatedSum<S>>>>,
    /// `[v][s][e]`: `P(|K_v| = s, ω(e) = 1)`.
    size_edge: Vec<Vec<Vec<CompensatedSum<S>>>>,
    /// `g_v` recomputed directly as `1{η(K_v) ≥ 1}` disagreed with the forest.
    forest_mismatch: bool,
}

impl<S: Scalar> JointAcc<S> {
    fn new(nv: usize, ne: usize) -> Self {
        let grid = || vec![vec![CompensatedSum::new(); nv + 1]; nv];
        Self {
            revealed: vec![CompensatedSum::new(); nv + ne],
            size: grid(),
            size_g: grid(),
            size_eta: vec![vec![vec![CompensatedSum::new(); nv]; nv + 1]; nv],
            size_edge: vec![vec![vec![CompensatedSum::new(); ne]; nv + 1]; nv],
            forest_mismatch: false,
        }
    }

    fn merge(&mut self, other: &Self) {
        fn merge_all<S: Scalar>(a: &mut [CompensatedSum<S>], b: &[CompensatedSum<S>]) {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        merge_all(&mut self.revealed, &other.revealed);
        for v in 0..self.size.len() {
            merge_all(&mut self.size[v], &other.size[v]);
            merge_all(&mut self.size_g[v], &other.size_g[v]);
            for s in 0..self.size[v].len() {
                merge_all(&mut self.size_eta[v][s], &other.size_eta[v][s]);
                merge_all(&mut self.size_edge[v][s], &other.size_edge[v][s]);
            }
        }
        self.forest_mismatch |= other.forest_mismatch;
    }
}

/// Number of fixed work chunks; a fixed split keeps sums reproducible across thread counts.
const JOINT_CHUNKS: u64 = 64;

fn joint_pass<S: Scalar>(m: &ExactMeasure<S>, gp: &GhostParams<S>) -> Result<JointAcc<S>> {
    let g = m.graph();
    let (nv, ne) = (g.n_vertices(), g.n_edges());
    if nv + ne > DEFAULT_ENUMERATION_CAP {
        return Err(Error::TooLarge { needed: nv + ne, cap: DEFAULT_ENUMERATION_CAP });
    }
    let h = gp.h();
    let ghost_probs: Vec<S> = (0..1u64 << nv)
        .map(|mask| {
            let green = mask.count_ones() as i32;
            h.powi(green) * (S::one() - h).powi(nv as i32 - green)
        })
        .collect();
    let forest = exploration_forest(g);
    let n_omega = 1u64 << ne;
    let chunk = n_omega.div_ceil(JOINT_CHUNKS).max(1);
    let partials: Vec<JointAcc<S>> = (0..n_omega.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = JointAcc::new(nv, ne);
            let mut uf = UnionFind::new(nv);
            let mut explored = vec![false; nv];
            let mut revealed = vec![false; nv + ne];
            let mut g_forest = vec![false; nv];
            for mask in c * chunk..((c + 1) * chunk).min(n_omega) {
                let p_omega = m.prob(mask);
                if p_omega <= S::zero() {
                    continue;
                }
                let omega = m.config(mask);
                let clusters = decompose_with(g, &omega, &mut uf)?;
                for v in 0..nv {
                    let s = clusters.cluster_size(v);
                    acc.size[v][s].add(p_omega);
                    for e in (0..ne).filter(|&e| omega.is_open(e)) {
                        acc.size_edge[v][s][e].add(p_omega);
                    }
                }
                for (eta_mask, &p_eta) in ghost_probs.iter().enumerate() {
                    let w = p_omega * p_eta;
                    if w <= S::zero() {
                        continue;
                    }
                    let eta = GhostField::from_mask(eta_mask as u64, nv);
                    revealed.fill(false);
                    g_forest.fill(false);
                    for tree in &forest {
                        let trace = tree.run(&|c| read_input(&omega, &eta, c));
                        for &(c, _) in &trace {
                            match c {
                                Coordinate::Vertex(u) => revealed[u] = true,
                                Coordinate::Edge(e) => revealed[nv + e] = true,
                            }
                        }
                        if eta.is_green(tree.root()) {
                            explored_vertices(g, &trace, &mut explored);
                            for (gv, &x) in g_forest.iter_mut().zip(&explored) {
                                *gv |= x;
                            }
                        }
                    }
                    for (acc_x, _) in acc.revealed.iter_mut().zip(&revealed).filter(|(_, &r)| r) {
                        acc_x.add(w);
                    }
                    for v in 0..nv {
                        let s = clusters.cluster_size(v);
                        let direct = clusters.members(v).iter().any(|&u| eta.is_green(u));
                        acc.forest_mismatch |= direct != g_forest[v];
                        if g_forest[v] {
                            acc.size_g[v][s].add(w);
                        }
                        for u in (0..nv).filter(|&u| eta.is_green(u)) {
                            acc.size_eta[v][s][u].add(w);
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = JointAcc::new(nv, ne);
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

fn profile_from<S: Scalar>(acc: &JointAcc<S>, nv: usize) -> RevealmentProfile<S> {
    let values: Vec<S> = acc.revealed.iter().map(|c| c.value().min(S::one())).collect();
    let ne = values.len() - nv;
    RevealmentProfile {
        vertex: values[..nv].to_vec(),
        edge: values[nv..].to_vec(),
        vertex_half_widths: vec![S::zero(); nv],
        edge_half_widths: vec![S::zero(); ne],
        samples: 0,
        provenance: Provenance::Exact,
    }
}

/// Exact revealments of the exploration forest under `φ ⊗ P_h`, summing over every `(ω, η)`.
pub fn revealment_exact<S: Scalar>(m: &ExactMeasure<S>, gp: &GhostParams<S>) -> Result<RevealmentProfile<S>> {
    Ok(profile_from(&joint_pass(m, gp)?, m.graph().n_vertices()))
}

/// Monte Carlo revealments together with per-vertex cluster-size histograms.
#[derive(Clone, Debug)]
pub struct MonteCarloRevealment<S> {
    pub profile: RevealmentProfile<S>,
    pub cluster_sizes: Vec<Histogram>,
}

/// Revealments estimated from sampled configurations, drawing a fresh ghost field for each.
pub fn revealment_monte_carlo<S, I, R>(
    g: &WeightedGraph<S>,
    configs: I,
    gp: &GhostParams<S>,
    rng: &mut R,
    confidence: f64,
) -> Result<MonteCarloRevealment<S>>
where
    S: Scalar,
    I: IntoIterator<Item = EdgeConfig>,
    R: Rng + ?Sized,
{
    let (nv, ne) = (g.n_vertices(), g.n_edges());
    let mut counts = vec![0u64; nv + ne];
    let mut cluster_sizes = vec![Histogram::new(); nv];
    let mut uf = UnionFind::new(nv);
    let mut revealed = vec![false; nv + ne];
    let mut samples = 0u64;
    for omega in configs {
        let eta = sample_ghost(nv, gp, rng);
        let clusters = decompose_with(g, &omega, &mut uf)?;
        for (u, hist) in cluster_sizes.iter_mut().enumerate() {
            hist.record(clusters.cluster_size(u));
        }
        revealed.fill(false);
        for u in 0..nv {
            for (c, _) in explore_forest(g, &omega, &eta, u) {
                match c {
                    Coordinate::Vertex(x) => revealed[x] = true,
                    Coordinate::Edge(e) => revealed[nv + e] = true,
                }
            }
        }
        for (c, &r) in counts.iter_mut().zip(&revealed) {
            *c += r as u64;
        }
        samples += 1;
    }
    if samples < 2 {
        return Err(Error::InsufficientData(format!("revealment estimate needs ≥ 2 samples, got {samples}")));
    }
    let z = two_sided_z(confidence);
    let est: Vec<S> = counts.iter().map(|&c| S::lit(c as f64 / samples as f64)).collect();
    let hw: Vec<S> = counts.iter().map(|&c| S::lit(crate::cluster::proportion_half_width(c, samples, z))).collect();
    Ok(MonteCarloRevealment {
        profile: RevealmentProfile {
            vertex: est[..nv].to_vec(),
            edge: est[nv..].to_vec(),
            vertex_half_widths: hw[..nv].to_vec(),
            edge_half_widths: hw[nv..].to_vec(),
            samples,
            provenance: Provenance::MonteCarlo,
        },
        cluster_sizes,
    })
}

/// `μ[1 − e^{−λ|K|/n}]` from the law `law[s] = P(|K| = s)`.
pub fn truncated_magnetization<S: Scalar>(law: &[S], gp: &GhostParams<S>) -> S {
    ksum(law.iter().enumerate().map(|(s, &p)| p * gp.hit_probability(s)))
}

/// Monte Carlo estimate of the truncated magnetization with its half-width.
pub fn truncated_magnetization_mc<S: Scalar>(hist: &Histogram, gp: &GhostParams<S>, confidence: f64) -> Result<(S, S)> {
    let total = hist.total();
    if total < 2 {
        return Err(Error::InsufficientData(format!("magnetization needs ≥ 2 samples, got {total}")));
    }
    let n = S::from_count(total as usize);
    let top = hist.max_value().unwrap_or(0);
    let term = |s: usize, power: i32| S::from_count(hist.count(s) as usize) * gp.hit_probability(s).powi(power);
    let mean = ksum((0..=top).map(|s| term(s, 1))) / n;
    let second = ksum((0..=top).map(|s| term(s, 2))) / n;
    let var = (second - mean * mean).max(S::zero()) * n / (n - S::one());
    Ok((mean, S::lit(two_sided_z(confidence)) * (var / n).sqrt()))
}

/// `(λ/n) Σ_{m=1}^{⌈n/λ⌉} P(|K| ≥ m)`, an upper bound for the truncated magnetization.
pub fn magnetization_majorant<S: Scalar>(law: &[S], gp: &GhostParams<S>) -> S {
    let cutoff = (S::from_count(gp.n) / gp.lambda).ceil().to_usize().unwrap_or(usize::MAX);
    let scale = gp.lambda / S::from_count(gp.n);
    ksum(law.iter().enumerate().map(|(s, &p)| p * scale * S::from_count(s.min(cutoff))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevealmentBoundReport<S> {
    /// `2 · sup_u μ[1 − e^{−λ|K_u|/n}]`.
    pub bound: S,
    pub bound_half_width: S,
    pub worst_edge: Option<usize>,
    pub worst_revealment: S,
    pub holds: bool,
}

/// Checks `δ_e ≤ 2 sup_u M_u` for every edge, where `sup_magnetization`
/// carries its own half-width (zero when exact).
pub fn revealment_bound_check<S: Scalar>(
    profile: &RevealmentProfile<S>,
    sup_magnetization: S,
    sup_half_width: S,
) -> RevealmentBoundReport<S> {
    let two = S::lit(2.0);
    let bound = two * sup_magnetization;
    let bound_half_width = two * sup_half_width;
    let tol = S::lit(EXACT_TOLERANCE);
    let holds =
        profile.edge.iter().zip(&profile.edge_half_widths).all(|(&d, &hw)| d - hw <= bound + bound_half_width + tol);
    let (worst_edge, worst_revealment) = match profile.max_edge() {
        Some((e, d)) => (Some(e), d),
        None => (None, S::zero()),
    };
    RevealmentBoundReport { bound, bound_half_width, worst_edge, worst_revealment, holds }
}

fn is_binary<S: Scalar>(xs: &[S]) -> bool {
    xs.iter().all(|&x| x == S::zero() || x == S::one())
}

/// `μ⊗μ|f(ω₁) − g(ω₂)| − μ|f(ω) − g(ω)|` over a finite law given as aligned
/// slices of probabilities and function values.
pub fn covr<S: Scalar>(probs: &[S], f: &[S], g: &[S]) -> S {
    assert!(probs.len() == f.len() && f.len() == g.len(), "covr slices must align");
    if is_binary(f) && is_binary(g) {
        let ef = ksum(probs.iter().zip(f).map(|(&p, &x)| p * x));
        let eg = ksum(probs.iter().zip(g).map(|(&p, &y)| p * y));
        let efg = ksum(probs.iter().zip(f).zip(g).map(|((&p, &x), &y)| p * x * y));
        S::lit(2.0) * (efg - ef * eg)
    } else {
        covr_direct(probs, f, g)
    }
}

/// The defining double sum, without the binary shortcut.
pub fn covr_direct<S: Scalar>(probs: &[S], f: &[S], g: &[S]) -> S {
    let mut product = CompensatedSum::new();
    for (&pi, &fi) in probs.iter().zip(f) {
        for (&pj, &gj) in probs.iter().zip(g) {
            product.add(pi * pj * (fi - gj).abs());
        }
    }
    product.value() - ksum(probs.iter().zip(f).zip(g).map(|((&p, &x), &y)| p * (x - y).abs()))
}

fn model_fields<S: Scalar>(m: &ExactMeasure<S>) -> (Option<S>, Option<S>) {
    match m.params() {
        Some(p) => (Some(p.beta), Some(p.q)),
        None => (None, None),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OsssReport<S> {
    pub graph: GraphMeta,
    pub beta: Option<S>,
    pub q: Option<S>,
    pub lambda: S,
    pub n: usize,
    pub v: usize,
    /// `½|CoVr[f, g]|`.
    pub lhs: S,
    /// `Σ_x δ_x Cov[f, x]` over edges and vertices.
    pub rhs: S,
    pub margin: S,
    pub holds: bool,
    /// Largest `|Cov[f, η(u)]|`; zero up to rounding since `f` ignores `η`.
    pub max_vertex_covariance: S,
    /// The forest's answer agreed with `1{η(K_v) ≥ 1}` on every input.
    pub forest_computes_g: bool,
}

/// Joint-law tables for the OSSS check at every `(v, n)` of one graph and parameter set.
#[derive(Clone, Debug)]
pub struct OsssTable<S> {
    graph: GraphMeta,
    beta: Option<S>,
    q: Option<S>,
    gp: GhostParams<S>,
    profile: RevealmentProfile<S>,
    acc: JointAcc<S>,
}

impl<S: Scalar> OsssTable<S> {
    pub fn compute(m: &ExactMeasure<S>, gp: &GhostParams<S>) -> Result<Self> {
        let acc = joint_pass(m, gp)?;
        let (beta, q) = model_fields(m);
        Ok(Self {
            graph: m.graph().meta().clone(),
            beta,
            q,
            gp: *gp,
            profile: profile_from(&acc, m.graph().n_vertices()),
            acc,
        })
    }

    pub fn profile(&self) -> &RevealmentProfile<S> {
        &self.profile
    }

    /// The check for `f = 1{|K_v| ≥ n}` and `g = 1{η(K_v) ≥ 1}`; `n` here is the
    /// cluster-size threshold and is independent of the ghost parameter.
    pub fn verify(&self, v: usize, n: usize) -> Result<OsssReport<S>> {
        let nv = self.profile.vertex.len();
        if v >= nv {
            return Err(Error::Range(format!("vertex {v} out of range 0..{nv}")));
        }
        let tail = |table: &[CompensatedSum<S>]| ksum(table.iter().skip(n).map(|c| c.value()));
        let ef = tail(&self.acc.size[v]);
        let eg = ksum(self.acc.size_g[v].iter().map(|c| c.value()));
        let efg = tail(&self.acc.size_g[v]);
        // Binary f and g: ½|CoVr| = |Cov|.
        let lhs = (efg - ef * eg).abs();
        let cov_coord = |sums: &dyn Fn(usize) -> S, all: S| -> S { sums(n) - ef * all };
        let mut rhs = CompensatedSum::new();
        let mut max_vertex_covariance = S::zero();
        let h = self.gp.h();
        for u in 0..nv {
            let joint = |from: usize| ksum(self.acc.size_eta[v][from..].iter().map(|s| s[u].value()));
            let cov = cov_coord(&joint, h);
            max_vertex_covariance = max_vertex_covariance.max(cov.abs());
            rhs.add(self.profile.vertex[u] * cov);
        }
        for e in 0..self.profile.edge.len() {
            let joint = |from: usize| ksum(self.acc.size_edge[v][from..].iter().map(|s| s[e].value()));
            let marginal = joint(0);
            rhs.add(self.profile.edge[e] * cov_coord(&joint, marginal));
        }
        let rhs = rhs.value();
        let margin = rhs - lhs;
        Ok(OsssReport {
            graph: self.graph.clone(),
            beta: self.beta,
            q: self.q,
            lambda: self.gp.lambda,
            n,
            v,
            lhs,
            rhs,
            margin,
            holds: margin >= -S::lit(EXACT_TOLERANCE),
            max_vertex_covariance,
            forest_computes_g: !self.acc.forest_mismatch,
        })
    }
}

/// Exact OSSS check for the exploration forest; see [`OsssTable::verify`].
pub fn verify_osss<S: Scalar>(m: &ExactMeasure<S>, gp: &GhostParams<S>, v: usize, n: usize) -> Result<OsssReport<S>> {
    OsssTable::compute(m, gp)?.verify(v, n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop31Report<S> {
    pub graph: GraphMeta,
    pub beta: Option<S>,
    pub q: Option<S>,
    pub lambda: S,
    pub n: usize,
    pub v: usize,
    /// `Σ_e Cov[1{|K_v| ≥ n}, ω(e)]`.
    pub lhs: S,
    pub rhs: S,
    pub margin: S,
    pub holds: bool,
    pub magnetization: S,
    pub sup_magnetization: S,
    pub tail: S,
}

/// Exact check of `Σ_e Cov[1{|K_v|≥n}, ω(e)] ≥ ((1−e^{−λ}) − M_v) / (2 sup_u M_u) · μ(|K_v| ≥ n)`
/// with `M_u = μ[1 − e^{−λ|K_u|/n}]`.
pub fn verify_prop31<S: Scalar>(m: &ExactMeasure<S>, lambda: S, v: usize, n: usize) -> Result<Prop31Report<S>> {
    let gp = GhostParams::new(lambda, n)?;
    let g = m.graph();
    let nv = g.n_vertices();
    if v >= nv {
        return Err(Error::Range(format!("vertex {v} out of range 0..{nv}")));
    }
    let laws: Vec<Vec<S>> = (0..nv).map(|u| m.cluster_size_law(u)).collect();
    let magnetizations: Vec<S> = laws.iter().map(|law| truncated_magnetization(law, &gp)).collect();
    let sup_magnetization = magnetizations.iter().copied().fold(S::zero(), S::max);
    let tail = ksum(laws[v].iter().skip(n).copied());
    let lhs = ksum((0..g.n_edges()).map(|e| {
        crate::exact::exact_covariance(
            m,
            |c| {
                if crate::cluster::cluster_size_bfs(g, c, v) >= n {
                    S::one()
                } else {
                    S::zero()
                }
            },
            e,
        )
    }));
    let numerator = -(-lambda).exp_m1() - magnetizations[v];
    let rhs = numerator / (S::lit(2.0) * sup_magnetization) * tail;
    let margin = lhs - rhs;
    let (beta, q) = model_fields(m);
    Ok(Prop31Report {
        graph: g.meta().clone(),
        beta,
        q,
        lambda,
        n,
        v,
        lhs,
        rhs,
        margin,
        holds: margin >= -S::lit(EXACT_TOLERANCE),
        magnetization: magnetizations[v],
        sup_magnetization,
        tail,
    })
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(k);
    let mut c = 2u64;
    while primes.len() < k {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// Single tree that runs step `j` of the `i`-th tree at time `p_i^j` and
/// re-reads the first tree's root at every other time.
///
/// `next` rebuilds everything from the history, so it is only practical for
/// small forests; [`serialize_trace`] produces the same first-query record
/// without walking the idle times.
pub struct SerializedForest<'a, T> {
    trees: &'a [T],
    primes: Vec<u64>,
}

impl<'a, T: DecisionTree> SerializedForest<'a, T> {
    pub fn new(trees: &'a [T]) -> Self {
        Self { trees, primes: first_primes(trees.len()) }
    }

    /// History of tree `i` and its next query, as seen before time `t`.
    fn sub_history(&self, i: usize, history: &[(Coordinate, bool)]) -> (Vec<(Coordinate, bool)>, Option<Coordinate>) {
        let p = self.primes[i];
        let mut sub = Vec::new();
        let mut time = p;
        loop {
            let next = self.trees[i].next(&sub);
            match next {
                Some(c) if (time as usize) <= history.len() => {
                    let (hc, value) = history[time as usize - 1];
                    debug_assert_eq!(hc, c, "serialized history out of step with tree {i}");
                    sub.push((c, value));
                }
                _ => return (sub, next),
            }
            time = match time.checked_mul(p) {
                Some(t) => t,
                None => return (sub, next),
            };
        }
    }

    fn filler(&self) -> Option<Coordinate> {
        self.trees.iter().find_map(|t| t.next(&[]))
    }
}

/// `t = p^j` with `j ≥ 1`.
fn prime_power_exponent(t: u64, p: u64) -> Option<u32> {
    let mut x = t;
    let mut j = 0;
    while x > 1 && x.is_multiple_of(p) {
        x /= p;
        j += 1;
    }
    (x == 1 && j > 0).then_some(j)
}

impl<T: DecisionTree> DecisionTree for SerializedForest<'_, T> {
    fn next(&self, history: &[(Coordinate, bool)]) -> Option<Coordinate> {
        let t = history.len() as u64 + 1;
        let mut active = None;
        let mut any_running = false;
        for i in 0..self.trees.len() {
            let (_, next) = self.sub_history(i, history);
            if next.is_some() {
                any_running = true;
                if prime_power_exponent(t, self.primes[i]).is_some() {
                    active = next;
                }
            }
        }
        if !any_running {
            return None;
        }
        active.or_else(|| self.filler())
    }
}

/// First read of a coordinate by the serialized tree.
#[derive(Clone, Debug, PartialEq)]
pub struct SerializedQuery {
    pub coordinate: Coordinate,
    pub value: bool,
    pub tree: usize,
    /// 1-based step within the tree.
    pub step: u32,
    /// `p_tree^step`; `None` if it overflows `u128`.
    pub time: Option<u128>,
}

/// First-query record of the serialized tree, visiting only prime-power times.
///
/// Re-reads (by a later tree or by the idle-time filler) are not recorded.
pub fn serialize_trace<T: DecisionTree>(trees: &[T], input: &dyn Fn(Coordinate) -> bool) -> Vec<SerializedQuery> {
    let primes = first_primes(trees.len());
    let mut steps = Vec::new();
    for (i, tree) in trees.iter().enumerate() {
        for (j, (c, value)) in tree.run(input).into_iter().enumerate() {
            let step = j as u32 + 1;
            let time = (primes[i] as u128).checked_pow(step);
            let log_time = step as f64 * (primes[i] as f64).ln();
            steps.push((time, log_time, SerializedQuery { coordinate: c, value, tree: i, step, time }));
        }
    }
    steps.sort_by(|a, b| match (a.0, b.0) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.1.total_cmp(&b.1),
    });
    let mut seen = std::collections::HashSet::new();
    // Time 1 is idle, so the filler reads the first root before anything else.
    if let Some(root) = trees.iter().find_map(|t| t.next(&[])) {
        seen.insert(root);
        let first = steps.iter().position(|s| s.2.coordinate == root);
        let mut out = Vec::new();
        if let Some(pos) = first {
            let mut q = steps[pos].2.clone();
            q.tree = 0;
            q.step = 0;
            q.time = Some(1);
            out.push(q);
        }
        out.extend(steps.into_iter().map(|s| s.2).filter(|q| seen.insert(q.coordinate)));
        return out;
    }
    steps.into_iter().map(|s| s.2).filter(|q| seen.insert(q.coordinate)).collect()
}
