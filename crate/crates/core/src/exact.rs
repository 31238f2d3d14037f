//! Exact random-cluster measures on small graphs by full enumeration.
//!
//! A configuration is addressed by a bit mask: bit `i` is the state of edge
//! `i` in the graph's edge order. The unnormalised weight of `ω` is
//! `q^{#clusters(ω)} · ∏_e (e^{βJ_e} − 1)^{ω(e)}`, where isolated vertices
//! count as clusters; weights are kept in log space.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_radius, decompose_with, RadiusMetric, TailCurve};
use crate::config::EdgeConfig;
use crate::error::{Error, Result};
use crate::graph::{BoundaryKind, WeightedGraph};
use crate::scalar::{ksum, log_sum_exp, Scalar};
use crate::unionfind::UnionFind;

/// Default largest edge count accepted by [`enumerate_measure`].
pub const DEFAULT_ENUMERATION_CAP: usize = 22;

/// Edge counts at or above this enumerate in parallel.
const PARALLEL_THRESHOLD: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub beta: S,
    pub q: S,
    pub boundary: BoundaryKind,
}

impl<S: Scalar> ModelParams<S> {
    /// Free-boundary parameters; rejects `q < 1` and negative `β`.
    pub fn new(beta: S, q: S) -> Result<Self> {
        Self::with_boundary(beta, q, BoundaryKind::Free)
    }

    pub fn with_boundary(beta: S, q: S, boundary: BoundaryKind) -> Result<Self> {
        if !(beta >= S::zero()) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be finite and ≥ 0, got {beta}")));
        }
        if !(q >= S::one()) || !q.is_finite() {
            return Err(Error::Domain(format!("q must be finite and ≥ 1, got {q}")));
        }
        Ok(Self { beta, q, boundary })
    }

    /// Bernoulli percolation with retention probability `p` on unit couplings.
    pub fn percolation(p: S) -> Result<Self> {
        if !(p >= S::zero() && p < S::one()) {
            return Err(Error::Domain(format!("p must lie in [0, 1), got {p}")));
        }
        Self::new(-(-p).ln_1p(), S::one())
    }

    /// Edge weight `e^{βJ} − 1`.
    pub fn edge_weight(&self, coupling: S) -> S {
        (self.beta * coupling).exp_m1()
    }

    /// `1 − e^{−βJ}`, the open probability of an edge whose endpoints are already joined.
    pub fn edge_probability(&self, coupling: S) -> S {
        -(-self.beta * coupling).exp_m1()
    }
}

/// Probability table over all `2^|E|` configurations.
#[derive(Clone, Debug)]
pub struct ExactMeasure<S> {
    graph: WeightedGraph<S>,
    params: Option<ModelParams<S>>,
    log_weights: Vec<S>,
    log_z: S,
    probs: Vec<S>,
}

fn cluster_count<S: Scalar>(g: &WeightedGraph<S>, mask: u64, uf: &mut UnionFind) -> usize {
    uf.reset();
    let mut merges = 0;
    for (i, e) in g.edges().iter().enumerate() {
        if mask >> i & 1 == 1 && uf.union(e.u, e.v) {
            merges += 1;
        }
    }
    g.n_vertices() - merges
}

pub fn enumerate_measure<S: Scalar>(g: &WeightedGraph<S>, params: ModelParams<S>) -> Result<ExactMeasure<S>> {
    enumerate_measure_capped(g, params, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_measure_capped<S: Scalar>(
    g: &WeightedGraph<S>,
    params: ModelParams<S>,
    cap: usize,
) -> Result<ExactMeasure<S>> {
    let m = g.n_edges();
    if m > cap || m >= 64 {
        return Err(Error::TooLarge { needed: m, cap });
    }
    let ln_q = params.q.ln();
    let ln_w: Vec<S> = g.edges().iter().map(|e| params.edge_weight(e.coupling).ln()).collect();
    let log_weight = |mask: u64, uf: &mut UnionFind| {
        let mut lw = S::from_count(cluster_count(g, mask, uf)) * ln_q;
        for (i, &w) in ln_w.iter().enumerate() {
            if mask >> i & 1 == 1 {
                lw += w;
            }
        }
        lw
    };
    let n_configs = 1u64 << m;
    let log_weights: Vec<S> = if m >= PARALLEL_THRESHOLD {
        (0..n_configs)
            .into_par_iter()
            .map_init(|| UnionFind::new(g.n_vertices()), |uf, mask| log_weight(mask, uf))
            .collect()
    } else {
        let mut uf = UnionFind::new(g.n_vertices());
        (0..n_configs).map(|mask| log_weight(mask, &mut uf)).collect()
    };
    Ok(ExactMeasure::from_log_weights(g.clone(), Some(params), log_weights))
}

impl<S: Scalar> ExactMeasure<S> {
    /// Measure from an arbitrary nonnegative weight table indexed by mask.
    /// Used for planted (possibly non-monotonic) test measures.
    pub fn from_weights(graph: WeightedGraph<S>, weights: &[S]) -> Result<Self> {
        let expected = 1usize << graph.n_edges();
        if weights.len() != expected {
            return Err(Error::Shape { expected, got: weights.len() });
        }
        if weights.iter().any(|&w| !(w >= S::zero())) || weights.iter().all(|&w| w == S::zero()) {
            return Err(Error::InvalidSpec("weights must be nonnegative and not all zero".into()));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self::from_log_weights(graph, None, log_weights))
    }

    fn from_log_weights(graph: WeightedGraph<S>, params: Option<ModelParams<S>>, log_weights: Vec<S>) -> Self {
        let log_z = log_sum_exp(&log_weights);
        let probs = log_weights.iter().map(|&lw| (lw - log_z).exp()).collect();
        Self { graph, params, log_weights, log_z, probs }
    }

    pub fn graph(&self) -> &WeightedGraph<S> {
        &self.graph
    }

    pub fn params(&self) -> Option<&ModelParams<S>> {
        self.params.as_ref()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn n_configs(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, mask: u64) -> S {
        self.probs[mask as usize]
    }

    pub fn probabilities(&self) -> &[S] {
        &self.probs
    }

    pub fn log_weight(&self, mask: u64) -> S {
        self.log_weights[mask as usize]
    }

    pub fn weight(&self, mask: u64) -> S {
        self.log_weight(mask).exp()
    }

    pub fn log_partition_function(&self) -> S {
        self.log_z
    }

    /// `Z`; may overflow to infinity for very large `β` even though the table is fine.
    pub fn partition_function(&self) -> S {
        self.log_z.exp()
    }

    pub fn config(&self, mask: u64) -> EdgeConfig {
        EdgeConfig::from_mask(mask, self.n_edges())
    }

    /// `(mask, probability)` for every configuration.
    pub fn iter(&self) -> impl Iterator<Item = (u64, S)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (i as u64, p))
    }

    pub fn expectation<F: Fn(&EdgeConfig) -> S>(&self, f: F) -> S {
        ksum(self.iter().map(|(mask, p)| if p > S::zero() { p * f(&self.config(mask)) } else { S::zero() }))
    }

    /// `P(ω(e) = 1)`.
    pub fn edge_marginal(&self, e: usize) -> S {
        ksum(self.iter().filter(|(mask, _)| mask >> e & 1 == 1).map(|(_, p)| p))
    }

    /// Law of `|K_v|`: entry `s` is `P(|K_v| = s)`, `s = 0..=|V|`.
    pub fn cluster_size_law(&self, v: usize) -> Vec<S> {
        let mut law = vec![S::zero(); self.graph.n_vertices() + 1];
        let mut uf = UnionFind::new(self.graph.n_vertices());
        for (mask, p) in self.iter() {
            let d = decompose_with(&self.graph, &self.config(mask), &mut uf).expect("shape matches");
            law[d.cluster_size(v)] += p;
        }
        law
    }

    /// Law of the radius of `K_v`: entry `r` is `P(R = r)`, `r = 0..|V|`.
    pub fn radius_law(&self, v: usize, metric: RadiusMetric) -> Vec<S> {
        let mut law = vec![S::zero(); self.graph.n_vertices()];
        for (mask, p) in self.iter() {
            law[cluster_radius(&self.graph, &self.config(mask), v, metric)] += p;
        }
        law
    }

    /// CSV with columns `configuration,weight,probability`; the bitstring lists edge 0 first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "configuration,weight,probability")?;
        for (mask, p) in self.iter() {
            writeln!(out, "{},{},{}", self.config(mask), self.weight(mask), p)?;
        }
        Ok(())
    }
}

pub fn exact_event_prob<S: Scalar, P: Fn(&EdgeConfig) -> bool>(m: &ExactMeasure<S>, event: P) -> S {
    ksum(m.iter().filter(|&(mask, _)| event(&m.config(mask))).map(|(_, p)| p))
}

/// `Cov[f, ω(e)] = μ(f·ω(e)) − μ(f)·μ(ω(e))`.
pub fn exact_covariance<S: Scalar, F: Fn(&EdgeConfig) -> S>(m: &ExactMeasure<S>, f: F, e: usize) -> S {
    let mut joint = Vec::with_capacity(m.n_configs());
    let mut mean = Vec::with_capacity(m.n_configs());
    let mut edge = Vec::with_capacity(m.n_configs());
    for (mask, p) in m.iter() {
        let fv = f(&m.config(mask));
        let open = mask >> e & 1 == 1;
        mean.push(p * fv);
        if open {
            joint.push(p * fv);
            edge.push(p);
        }
    }
    ksum(joint) - ksum(mean) * ksum(edge)
}

pub fn exact_tail<S: Scalar>(m: &ExactMeasure<S>, v: usize) -> TailCurve<S> {
    TailCurve::from_law(&m.cluster_size_law(v), m.graph().n_vertices())
}

/// Outcome of the FKG lattice-condition check.
#[derive(Clone, Debug, PartialEq)]
pub enum LatticeCheck<S> {
    Pass {
        pairs_checked: u64,
    },
    /// First pair (in mask order) with `μ(a∨b)μ(a∧b) < μ(a)μ(b)`.
    Counterexample {
        a: u64,
        b: u64,
        join_meet: S,
        product: S,
    },
    /// Some configuration carries no mass, so the condition is not equivalent to monotonicity.
    Inapplicable {
        zero_mass: u64,
    },
}

impl<S> LatticeCheck<S> {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass { .. })
    }
}

/// Relative slack for comparisons of products of probabilities.
const RELATIVE_SLACK: f64 = 1e-10;

pub fn check_fkg_lattice<S: Scalar>(m: &ExactMeasure<S>) -> LatticeCheck<S> {
    if let Some((mask, _)) = m.iter().find(|&(_, p)| p <= S::zero()) {
        return LatticeCheck::Inapplicable { zero_mass: mask };
    }
    let slack = S::lit(RELATIVE_SLACK);
    let n = m.n_configs() as u64;
    let mut pairs = 0;
    for a in 0..n {
        for b in a + 1..n {
            // Comparable pairs satisfy the condition with equality.
            if a & b == a || a & b == b {
                continue;
            }
            pairs += 1;
            let lhs = m.log_weight(a | b) + m.log_weight(a & b);
            let rhs = m.log_weight(a) + m.log_weight(b);
            if lhs < rhs - slack * S::one().max(rhs.abs()) {
                return LatticeCheck::Counterexample {
                    a,
                    b,
                    join_meet: m.prob(a | b) * m.prob(a & b),
                    product: m.prob(a) * m.prob(b),
                };
            }
        }
    }
    LatticeCheck::Pass { pairs_checked: pairs }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MonotonicCheck<S> {
    Pass {
        comparisons: u64,
        /// Conditioning events of probability zero that were skipped.
        skipped: u64,
        exhaustive: bool,
    },
    /// `μ(ω(e)=1 | ω_F = ξ) < μ(ω(e)=1 | ω_F = ζ)` with `ξ ≥ ζ`.
    Counterexample { edge: usize, conditioning_set: u64, xi: u64, zeta: u64, p_xi: S, p_zeta: S },
}

impl<S> MonotonicCheck<S> {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass { .. })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MonotonicOptions {
    /// Largest edge count checked exhaustively.
    pub exhaustive_limit: usize,
    /// Random spot checks above the limit.
    pub random_trials: usize,
    pub seed: u64,
}

impl Default for MonotonicOptions {
    fn default() -> Self {
        Self { exhaustive_limit: 12, random_trials: 200, seed: 0x5eed }
    }
}

pub fn check_monotonic<S: Scalar>(m: &ExactMeasure<S>) -> MonotonicCheck<S> {
    check_monotonic_with(m, MonotonicOptions::default())
}

/// Checks monotonicity of single-edge conditionals.
///
/// Any `ξ ≥ ζ` on `F` is joined by a chain of single-coordinate raises, so it
/// suffices to compare conditionings that differ in exactly one edge of `F`.
pub fn check_monotonic_with<S: Scalar>(m: &ExactMeasure<S>, opts: MonotonicOptions) -> MonotonicCheck<S> {
    let n_edges = m.n_edges();
    let mut comparisons = 0;
    let mut skipped = 0;
    let mut table = vec![S::zero(); m.n_configs()];
    let marginal = |sel: u64, table: &mut Vec<S>| {
        table.fill(S::zero());
        for (mask, p) in m.iter() {
            table[(mask & sel) as usize] += p;
        }
    };
    let mut compare = |e: usize, f_set: u64, xi: u64, zeta: u64, table: &[S]| -> Option<MonotonicCheck<S>> {
        let bit = 1u64 << e;
        let (a0, a1) = (table[xi as usize], table[(xi | bit) as usize]);
        let (b0, b1) = (table[zeta as usize], table[(zeta | bit) as usize]);
        if a0 + a1 <= S::zero() || b0 + b1 <= S::zero() {
            skipped += 1;
            return None;
        }
        comparisons += 1;
        // a1/(a0+a1) ≥ b1/(b0+b1)  ⇔  a1·b0 ≥ b1·a0
        let (lhs, rhs) = (a1 * b0, b1 * a0);
        if lhs < rhs - S::lit(RELATIVE_SLACK) * (lhs + rhs) {
            return Some(MonotonicCheck::Counterexample {
                edge: e,
                conditioning_set: f_set,
                xi,
                zeta,
                p_xi: a1 / (a0 + a1),
                p_zeta: b1 / (b0 + b1),
            });
        }
        None
    };
    let full = (1u64 << n_edges) - 1;
    if n_edges <= opts.exhaustive_limit {
        for e in 0..n_edges {
            let others = full & !(1u64 << e);
            let mut f_set = others;
            loop {
                marginal(f_set | 1 << e, &mut table);
                let mut zeta = f_set;
                loop {
                    for f in 0..n_edges {
                        let fb = 1u64 << f;
                        if f_set & fb != 0 && zeta & fb == 0 {
                            if let Some(ce) = compare(e, f_set, zeta | fb, zeta, &table) {
                                return ce;
                            }
                        }
                    }
                    if zeta == 0 {
                        break;
                    }
                    zeta = (zeta - 1) & f_set;
                }
                if f_set == 0 {
                    break;
                }
                f_set = (f_set - 1) & others;
            }
        }
        MonotonicCheck::Pass { comparisons, skipped, exhaustive: true }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_trials {
            let e = rng.random_range(0..n_edges);
            let others = full & !(1u64 << e);
            let f_set = rng.random::<u64>() & others;
            if f_set == 0 {
                continue;
            }
            let zeta = rng.random::<u64>() & f_set;
            let candidates: Vec<usize> = (0..n_edges).filter(|&f| f_set >> f & 1 == 1 && zeta >> f & 1 == 0).collect();
            if candidates.is_empty() {
                continue;
            }
            let f = candidates[rng.random_range(0..candidates.len())];
            marginal(f_set | 1 << e, &mut table);
            if let Some(ce) = compare(e, f_set, zeta | 1 << f, zeta, &table) {
                return ce;
            }
        }
        MonotonicCheck::Pass { comparisons, skipped, exhaustive: false }
    }
}

/// Coefficient of `Cov[F, ω(e)]` in `d/dβ φ_β[F]`: `J / (1 − e^{−βJ})`.
///
/// Differentiating the weight `(e^{βJ}−1)^{ω(e)}` gives `J e^{βJ}/(e^{βJ}−1)`,
/// which is this expression; it dominates `J / (e^{βJ} − 1)` so every lower
/// bound derived with the latter remains valid.
pub fn derivative_coefficient<S: Scalar>(coupling: S, beta: S) -> S {
    coupling / -(-beta * coupling).exp_m1()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeReport<S> {
    pub beta: S,
    pub step: S,
    pub covariance_sum: S,
    /// Central difference with `step`.
    pub finite_difference: S,
    pub gap: S,
    /// Central difference with `step / 2`.
    pub finite_difference_half: S,
    pub gap_half: S,
    /// `gap / gap_half`; near 4 for a second-order scheme. `None` when both gaps vanish.
    pub ratio: Option<S>,
}

/// Compares a central finite difference of `β ↦ φ_β[F]` with the covariance
/// sum `Σ_e J_e/(1−e^{−βJ_e}) · Cov[F, ω(e)]`, at `step` and `step/2`.
pub fn verify_derivative_formula<S: Scalar, F: Fn(&EdgeConfig) -> S>(
    g: &WeightedGraph<S>,
    params: ModelParams<S>,
    f: F,
    step: S,
) -> Result<DerivativeReport<S>> {
    let beta = params.beta;
    if !(beta > S::zero()) {
        return Err(Error::Domain("derivative formula is evaluated at β > 0 only".into()));
    }
    if !(step > S::zero()) || beta - step < S::zero() {
        return Err(Error::Domain(format!("step must satisfy 0 < step ≤ β, got {step}")));
    }
    let at = |b: S| -> Result<S> {
        let m = enumerate_measure(g, ModelParams { beta: b, ..params })?;
        Ok(m.expectation(&f))
    };
    let m = enumerate_measure(g, params)?;
    let covariance_sum = ksum(
        g.edges()
            .iter()
            .enumerate()
            .map(|(i, e)| derivative_coefficient(e.coupling, beta) * exact_covariance(&m, &f, i)),
    );
    let two = S::lit(2.0);
    let finite_difference = (at(beta + step)? - at(beta - step)?) / (two * step);
    let half = step / two;
    let finite_difference_half = (at(beta + half)? - at(beta - half)?) / (two * half);
    let gap = (finite_difference - covariance_sum).abs();
    let gap_half = (finite_difference_half - covariance_sum).abs();
    let ratio = if gap_half > S::zero() { Some(gap / gap_half) } else { None };
    Ok(DerivativeReport { beta, step, covariance_sum, finite_difference, gap, finite_difference_half, gap_half, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, cycle_graph, LatticeSpec};

    fn single_edge() -> WeightedGraph<f64> {
        WeightedGraph::from_triples(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn single_edge_q2_hand_enumeration() {
        let m = enumerate_measure(&single_edge(), ModelParams::new(3f64.ln(), 2.0).unwrap()).unwrap();
        assert!((m.weight(0) - 4.0).abs() < 1e-12);
        assert!((m.weight(1) - 4.0).abs() < 1e-12);
        assert!((m.partition_function() - 8.0).abs() < 1e-12);
        assert!((m.prob(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_edge_percolation_marginal() {
        for beta in [0.1, 0.7, 2.5] {
            let m = enumerate_measure(&single_edge(), ModelParams::new(beta, 1.0).unwrap()).unwrap();
            assert!((m.prob(1) - (1.0 - (-beta).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_graph_partition_function_is_q() {
        let g = WeightedGraph::<f64>::new(1, vec![]).unwrap();
        let m = enumerate_measure(&g, ModelParams::new(0.8, 2.5).unwrap()).unwrap();
        assert_eq!(m.n_configs(), 1);
        assert!((m.partition_function() - 2.5).abs() < 1e-14);
        assert_eq!(m.prob(0), 1.0);
    }

    #[test]
    fn rejects_small_q_and_large_graphs() {
        assert!(ModelParams::<f64>::new(1.0, 0.5).is_err());
        assert!(ModelParams::<f64>::new(-1.0, 2.0).is_err());
        let g = build_lattice(&LatticeSpec::<f64>::torus(&[4, 4], 1.0)).unwrap();
        let err = enumerate_measure(&g, ModelParams::new(1.0, 2.0).unwrap()).unwrap_err();
        assert_eq!(err, Error::TooLarge { needed: 32, cap: DEFAULT_ENUMERATION_CAP });
    }

    #[test]
    fn probabilities_normalised() {
        let g = build_lattice(&LatticeSpec::<f64>::boxed(&[3, 3], 1.0)).unwrap();
        for (beta, q) in [(0.3, 1.0), (1.0, 2.0), (4.0, 3.0), (40.0, 5.0)] {
            let m = enumerate_measure(&g, ModelParams::new(beta, q).unwrap()).unwrap();
            let total = ksum(m.probabilities().iter().copied());
            assert!((total - 1.0).abs() < 1e-12, "beta={beta}");
        }
    }

    #[test]
    fn event_probabilities() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let m = enumerate_measure(&tri, ModelParams::new(3f64.ln(), 2.0).unwrap()).unwrap();
        assert!((exact_event_prob(&m, |_| true) - 1.0).abs() < 1e-15);
        // Oracle: weights 2^{ω}·q^{k}; |K_0| = 3 iff at least two edges open.
        let w = |open: i32, clusters: i32| 2f64.powi(open) * 2f64.powi(clusters);
        let z = w(0, 3) + 3.0 * w(1, 2) + 3.0 * w(2, 1) + w(3, 1);
        let expected = (3.0 * w(2, 1) + w(3, 1)) / z;
        let p = exact_event_prob(&m, |c| c.open_count() >= 2);
        assert!((p - expected).abs() < 1e-14);
        let p = 0.3f64;
        let m = enumerate_measure(&single_edge(), ModelParams::percolation(p).unwrap()).unwrap();
        assert!((exact_event_prob(&m, |c| c.is_open(0)) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn covariance_examples() {
        let m = enumerate_measure(&single_edge(), ModelParams::percolation(0.5).unwrap()).unwrap();
        assert!(exact_covariance(&m, |_| 3.0, 0).abs() < 1e-15);
        assert!((exact_covariance(&m, |c| if c.is_open(0) { 1.0 } else { 0.0 }, 0) - 0.25).abs() < 1e-14);
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let m = enumerate_measure(&tri, ModelParams::new(1.0, 1.5).unwrap()).unwrap();
        let f = |c: &EdgeConfig| if crate::cluster::cluster_size_bfs(&tri, c, 0) >= 2 { 1.0 } else { 0.0 };
        for e in 0..3 {
            assert!(exact_covariance(&m, f, e) > 0.0);
        }
    }

    #[test]
    fn percolation_factorises() {
        let g = build_lattice(&LatticeSpec::<f64>::boxed(&[2, 3], 1.0)).unwrap();
        let m = enumerate_measure(&g, ModelParams::new(0.9, 1.0).unwrap()).unwrap();
        let p = 1.0 - (-0.9f64).exp();
        for e in 0..g.n_edges() {
            assert!((m.edge_marginal(e) - p).abs() < 1e-12);
            for f in e + 1..g.n_edges() {
                let joint = exact_event_prob(&m, |c| c.is_open(e) && c.is_open(f));
                assert!((joint - p * p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fkg_lattice_examples() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let m = enumerate_measure(&tri, ModelParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!(check_fkg_lattice(&m).passed());
        let m = enumerate_measure(&tri, ModelParams::new(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(check_fkg_lattice(&m), LatticeCheck::Pass { pairs_checked: 9 });
        // Odd-parity configurations favoured: (01, 10) violates the lattice condition.
        let two = WeightedGraph::<f64>::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let parity = ExactMeasure::from_weights(two, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        match check_fkg_lattice(&parity) {
            LatticeCheck::Counterexample { a, b, join_meet, product } => {
                assert_eq!((a, b), (1, 2));
                assert!(join_meet < product);
            }
            other => panic!("expected counterexample, got {other:?}"),
        }
        let m = enumerate_measure(&tri, ModelParams::new(0.0, 2.0).unwrap()).unwrap();
        assert!(matches!(check_fkg_lattice(&m), LatticeCheck::Inapplicable { .. }));
    }

    #[test]
    fn monotonic_examples() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        for (beta, q) in [(1.0, 1.0), (0.7, 3.0)] {
            let m = enumerate_measure(&tri, ModelParams::new(beta, q).unwrap()).unwrap();
            assert!(check_monotonic(&m).passed());
        }
        let m = enumerate_measure(&single_edge(), ModelParams::new(0.4, 2.0).unwrap()).unwrap();
        assert!(check_monotonic(&m).passed());
        let two = WeightedGraph::<f64>::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let parity = ExactMeasure::from_weights(two, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(!check_monotonic(&parity).passed());
    }

    #[test]
    fn monotonic_random_mode_runs() {
        let g = build_lattice(&LatticeSpec::<f64>::boxed(&[3, 3], 1.0)).unwrap();
        let m = enumerate_measure(&g, ModelParams::new(0.6, 2.0).unwrap()).unwrap();
        let opts = MonotonicOptions { exhaustive_limit: 4, random_trials: 50, seed: 1 };
        match check_monotonic_with(&m, opts) {
            MonotonicCheck::Pass { exhaustive, comparisons, .. } => {
                assert!(!exhaustive);
                assert!(comparisons > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn derivative_formula_examples() {
        let g = single_edge();
        let r = verify_derivative_formula(&g, ModelParams::new(1.0, 1.0).unwrap(), |_| 1.0, 1e-3).unwrap();
        assert!(r.covariance_sum.abs() < 1e-14 && r.finite_difference.abs() < 1e-12);
        // d/dβ (1 − e^{−β}) = e^{−β}
        let r = verify_derivative_formula(
            &g,
            ModelParams::new(0.8, 1.0).unwrap(),
            |c| if c.is_open(0) { 1.0 } else { 0.0 },
            1e-3,
        )
        .unwrap();
        assert!((r.covariance_sum - (-0.8f64).exp()).abs() < 1e-13);
        assert!((r.finite_difference - (-0.8f64).exp()).abs() < 1e-6);
        let grid = build_lattice(&LatticeSpec::<f64>::boxed(&[2, 2], 1.0)).unwrap();
        let f = |c: &EdgeConfig| if crate::cluster::cluster_size_bfs(&grid, c, 0) >= 2 { 1.0 } else { 0.0 };
        let r = verify_derivative_formula(&grid, ModelParams::new(1.0, 2.0).unwrap(), f, 1e-3).unwrap();
        assert!(r.gap < 1e-6);
        assert!(verify_derivative_formula(&grid, ModelParams::new(0.0, 2.0).unwrap(), f, 1e-3).is_err());
    }

    #[test]
    fn tail_examples() {
        let p = 0.35;
        let m = enumerate_measure(&single_edge(), ModelParams::percolation(p).unwrap()).unwrap();
        let t = exact_tail(&m, 0);
        assert_eq!(t.at(1).unwrap(), 1.0);
        assert!((t.at(2).unwrap() - p).abs() < 1e-14);
        assert!(t.is_exact());
    }

    #[test]
    fn tail_increasing_in_beta() {
        let g = build_lattice(&LatticeSpec::<f64>::boxed(&[2, 3], 1.0)).unwrap();
        for q in [1.0, 2.0, 4.0] {
            let lo = exact_tail(&enumerate_measure(&g, ModelParams::new(0.5, q).unwrap()).unwrap(), 0);
            let hi = exact_tail(&enumerate_measure(&g, ModelParams::new(0.6, q).unwrap()).unwrap(), 0);
            for n in 1..=g.n_vertices() {
                assert!(hi.at(n).unwrap() >= lo.at(n).unwrap() - 1e-14);
            }
        }
    }

    #[test]
    fn f32_engine_agrees() {
        let tri = cycle_graph::<f32>(3, 1.0).unwrap();
        let m = enumerate_measure(&tri, ModelParams::new(1.0f32, 2.0).unwrap()).unwrap();
        let total: f32 = m.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(check_monotonic(&m).passed());
    }

    #[test]
    fn csv_lists_every_configuration() {
        let m = enumerate_measure(&single_edge(), ModelParams::new(3f64.ln(), 2.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("1,"));
    }
}
