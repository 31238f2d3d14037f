//! Cluster decomposition of configurations and aggregation into tail curves and moments.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::EdgeConfig;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::scalar::{ksum, Scalar};
use crate::stats::two_sided_z;
use crate::unionfind::UnionFind;

/// Connected components of `(V, open edges)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDecomposition {
    /// Component label per vertex; labels are numbered by first appearance.
    pub labels: Vec<usize>,
    /// Size of each component, indexed by label.
    pub sizes: Vec<usize>,
}

impl ClusterDecomposition {
    pub fn cluster_size(&self, v: usize) -> usize {
        self.sizes[self.labels[v]]
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn largest(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Vertices in the cluster of `v`, ascending.
    pub fn members(&self, v: usize) -> Vec<usize> {
        let l = self.labels[v];
        (0..self.labels.len()).filter(|&x| self.labels[x] == l).collect()
    }
}

pub fn decompose<S: Scalar>(g: &WeightedGraph<S>, omega: &EdgeConfig) -> Result<ClusterDecomposition> {
    let mut uf = UnionFind::new(g.n_vertices());
    decompose_with(g, omega, &mut uf)
}

/// As [`decompose`], reusing a union-find buffer of size `|V|`.
pub fn decompose_with<S: Scalar>(
    g: &WeightedGraph<S>,
    omega: &EdgeConfig,
    uf: &mut UnionFind,
) -> Result<ClusterDecomposition> {
    if omega.len() != g.n_edges() {
        return Err(Error::Shape { expected: g.n_edges(), got: omega.len() });
    }
    uf.reset();
    for (i, e) in g.edges().iter().enumerate() {
        if omega.is_open(i) {
            uf.union(e.u, e.v);
        }
    }
    let n = g.n_vertices();
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for x in 0..n {
        let r = uf.find(x);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = sizes.len();
            sizes.push(0);
        }
        let l = label_of_root[r];
        labels.push(l);
        sizes[l] += 1;
    }
    Ok(ClusterDecomposition { labels, sizes })
}

/// Size of the cluster of `v` found by breadth-first search over open edges.
pub fn cluster_size_bfs<S: Scalar>(g: &WeightedGraph<S>, omega: &EdgeConfig, v: usize) -> usize {
    cluster_members_bfs(g, omega, v).len()
}

pub fn cluster_members_bfs<S: Scalar>(g: &WeightedGraph<S>, omega: &EdgeConfig, v: usize) -> Vec<usize> {
    let mut seen = vec![false; g.n_vertices()];
    let mut out = vec![v];
    seen[v] = true;
    let mut head = 0;
    while head < out.len() {
        let x = out[head];
        head += 1;
        for &e in g.incident(x) {
            if omega.is_open(e) {
                let y = g.edge(e).other(x);
                if !seen[y] {
                    seen[y] = true;
                    out.push(y);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMetric {
    /// Graph distance in the ambient graph `G`.
    #[default]
    Ambient,
    /// Chemical distance inside the open cluster.
    Intrinsic,
}

/// Largest distance from `v` to a vertex of its cluster.
pub fn cluster_radius<S: Scalar>(g: &WeightedGraph<S>, omega: &EdgeConfig, v: usize, metric: RadiusMetric) -> usize {
    match metric {
        RadiusMetric::Ambient => {
            let dist = g.distances_from(v);
            cluster_members_bfs(g, omega, v).into_iter().map(|u| dist[u]).max().unwrap_or(0)
        }
        RadiusMetric::Intrinsic => {
            let mut dist = vec![usize::MAX; g.n_vertices()];
            dist[v] = 0;
            let mut queue = VecDeque::from([v]);
            let mut far = 0;
            while let Some(x) = queue.pop_front() {
                far = far.max(dist[x]);
                for &e in g.incident(x) {
                    let y = g.edge(e).other(x);
                    if omega.is_open(e) && dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
            far
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
}

/// Integer-valued histogram of observations (cluster sizes or radii).
///
/// Counts are exact integers, so merging replicas is associative and
/// order-independent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples<I: IntoIterator<Item = usize>>(samples: I) -> Self {
        let mut h = Self::new();
        for s in samples {
            h.record(s);
        }
        h
    }

    pub fn record(&mut self, value: usize) {
        if value >= self.counts.len() {
            self.counts.resize(value + 1, 0);
        }
        self.counts[value] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn merged(mut self, other: Self) -> Self {
        self.merge(&other);
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, value: usize) -> u64 {
        self.counts.get(value).copied().unwrap_or(0)
    }

    pub fn max_value(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }

    /// Number of observations `≥ n`.
    pub fn count_at_least(&self, n: usize) -> u64 {
        self.counts.iter().skip(n).sum()
    }

    pub fn mean<S: Scalar>(&self) -> S {
        let t = S::from_count(self.total as usize);
        ksum(self.counts.iter().enumerate().map(|(s, &c)| S::from_count(s) * S::from_count(c as usize))) / t
    }
}

/// Half-width of a normal-approximation interval for a proportion.
///
/// At an observed proportion of exactly 0 or 1 the binomial variance is
/// replaced by that of `p̃ = 1/(2(N+1))`, keeping every Monte Carlo interval
/// strictly positive.
pub fn proportion_half_width(successes: u64, trials: u64, z: f64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let var = if successes == 0 || successes == trials {
        let pt = 0.5 / (n + 1.0);
        pt * (1.0 - pt)
    } else {
        p * (1.0 - p)
    };
    z * (var / n).sqrt()
}

/// Estimates of `P(X ≥ n)` for `n = 1..=n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve<S> {
    pub values: Vec<S>,
    pub half_widths: Vec<S>,
    pub samples: u64,
    pub provenance: Provenance,
}

impl<S: Scalar> TailCurve<S> {
    /// Exact curve from a law `law[s] = P(X = s)`, `s = 0, 1, ...`.
    pub fn from_law(law: &[S], n_max: usize) -> Self {
        let values = (1..=n_max).map(|n| ksum(law.iter().skip(n).copied()).min(S::one())).collect();
        Self { values, half_widths: vec![S::zero(); n_max], samples: 0, provenance: Provenance::Exact }
    }

    pub fn from_values(values: Vec<S>, half_widths: Vec<S>, samples: u64, provenance: Provenance) -> Self {
        assert_eq!(values.len(), half_widths.len());
        Self { values, half_widths, samples, provenance }
    }

    pub fn n_max(&self) -> usize {
        self.values.len()
    }

    /// `P(X ≥ n)`; `n = 0` gives 1.
    pub fn at(&self, n: usize) -> Result<S> {
        match n {
            0 => Ok(S::one()),
            n if n <= self.values.len() => Ok(self.values[n - 1]),
            _ => Err(Error::Range(format!("tail requested at n={n} beyond n_max={}", self.values.len()))),
        }
    }

    pub fn half_width(&self, n: usize) -> Result<S> {
        match n {
            0 => Ok(S::zero()),
            n if n <= self.values.len() => Ok(self.half_widths[n - 1]),
            _ => Err(Error::Range(format!("tail requested at n={n} beyond n_max={}", self.values.len()))),
        }
    }

    /// `Σ_{m=1}^{upto} P(X ≥ m)` with the summed half-width.
    pub fn partial_sum(&self, upto: usize) -> Result<(S, S)> {
        if upto > self.values.len() {
            return Err(Error::Range(format!("partial sum to {upto} beyond n_max={}", self.values.len())));
        }
        Ok((ksum(self.values[..upto].iter().copied()), ksum(self.half_widths[..upto].iter().copied())))
    }

    pub fn is_exact(&self) -> bool {
        self.provenance == Provenance::Exact
    }

    /// CSV with columns `n,estimate,half_width,N`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,estimate,half_width,N")?;
        for (i, (v, h)) in self.values.iter().zip(&self.half_widths).enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, v, h, self.samples)?;
        }
        Ok(())
    }
}

/// Empirical survival function of the observations.
pub fn tail_curve<S: Scalar>(hist: &Histogram, n_max: usize, confidence: f64) -> Result<TailCurve<S>> {
    if hist.total() < 2 {
        return Err(Error::InsufficientData(format!("tail curve needs ≥ 2 samples, got {}", hist.total())));
    }
    let z = two_sided_z(confidence);
    let total = hist.total();
    let mut values = Vec::with_capacity(n_max);
    let mut half_widths = Vec::with_capacity(n_max);
    let mut at_least = hist.count_at_least(1);
    for n in 1..=n_max {
        if n > 1 {
            at_least -= hist.count(n - 1);
        }
        values.push(S::lit(at_least as f64 / total as f64));
        half_widths.push(S::lit(proportion_half_width(at_least, total, z)));
    }
    Ok(TailCurve { values, half_widths, samples: total, provenance: Provenance::MonteCarlo })
}

/// `E[min(X, truncation)^k]` for `k = 1..=k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable<S> {
    pub values: Vec<S>,
    pub half_widths: Vec<S>,
    pub samples: u64,
    pub truncation: usize,
    pub provenance: Provenance,
}

impl<S: Scalar> MomentTable<S> {
    pub fn k_max(&self) -> usize {
        self.values.len()
    }

    /// The `k`-th moment, `k ≥ 1`.
    pub fn moment(&self, k: usize) -> S {
        self.values[k - 1]
    }

    pub fn from_law(law: &[S], k_max: usize, truncation: usize) -> Self {
        let values = (1..=k_max)
            .map(|k| ksum(law.iter().enumerate().map(|(s, &p)| p * S::from_count(s.min(truncation)).powi(k as i32))))
            .collect();
        Self { values, half_widths: vec![S::zero(); k_max], samples: 0, truncation, provenance: Provenance::Exact }
    }

    /// CSV with columns `k,estimate,half_width,N`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,estimate,half_width,N")?;
        for (i, (v, h)) in self.values.iter().zip(&self.half_widths).enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, v, h, self.samples)?;
        }
        Ok(())
    }
}

/// Moments above this order are computed but flagged as noisy.
pub const MOMENT_WARN_ORDER: usize = 8;

pub fn empirical_moments<S: Scalar>(
    hist: &Histogram,
    k_max: usize,
    truncation: usize,
    confidence: f64,
) -> Result<MomentTable<S>> {
    if truncation == 0 {
        return Err(Error::Domain("moment truncation must be at least 1".into()));
    }
    if hist.total() == 0 {
        return Err(Error::InsufficientData("no samples for moments".into()));
    }
    if k_max > MOMENT_WARN_ORDER {
        log::warn!("moments of order {k_max} > {MOMENT_WARN_ORDER} have exploding variance");
    }
    let z = S::lit(two_sided_z(confidence));
    let n = S::from_count(hist.total() as usize);
    let mut values = Vec::with_capacity(k_max);
    let mut half_widths = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let term = |s: usize, c: u64, power: usize| {
            S::from_count(c as usize) * S::from_count(s.min(truncation)).powi(power as i32)
        };
        let m = ksum(hist.counts.iter().enumerate().map(|(s, &c)| term(s, c, k))) / n;
        let m2 = ksum(hist.counts.iter().enumerate().map(|(s, &c)| term(s, c, 2 * k))) / n;
        let var = (m2 - m * m).max(S::zero());
        values.push(m);
        half_widths.push(z * (var / n).sqrt());
    }
    Ok(MomentTable { values, half_widths, samples: hist.total(), truncation, provenance: Provenance::MonteCarlo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_lattice;
    use crate::graph::{cycle_graph, path_graph, LatticeSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decompose_extremes() {
        let g = build_lattice(&LatticeSpec::<f64>::torus(&[3, 3], 1.0)).unwrap();
        let closed = decompose(&g, &EdgeConfig::closed(g.n_edges())).unwrap();
        assert!(closed.sizes.iter().all(|&s| s == 1));
        assert_eq!(closed.count(), 9);
        let open = decompose(&g, &EdgeConfig::open(g.n_edges())).unwrap();
        assert_eq!(open.sizes, vec![9]);
    }

    #[test]
    fn decompose_triangle_one_edge() {
        let tri = cycle_graph::<f64>(3, 1.0).unwrap();
        let d = decompose(&tri, &EdgeConfig::from_mask(0b001, 3)).unwrap();
        let mut sizes = d.sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        assert!(decompose(&tri, &EdgeConfig::closed(2)).is_err());
    }

    #[test]
    fn decompose_matches_bfs_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let sides = [2 + trial % 3, 2 + trial % 4];
            let g = build_lattice(&LatticeSpec::<f64>::torus(&sides, 1.0)).unwrap();
            let omega = EdgeConfig::from_bits((0..g.n_edges()).map(|_| rng.random_bool(0.45)).collect());
            let d = decompose(&g, &omega).unwrap();
            for v in 0..g.n_vertices() {
                let members = cluster_members_bfs(&g, &omega, v);
                assert_eq!(d.cluster_size(v), members.len());
                assert!(members.iter().all(|&u| d.labels[u] == d.labels[v]));
            }
            assert_eq!(d.sizes.iter().sum::<usize>(), g.n_vertices());
        }
    }

    #[test]
    fn radius_examples() {
        let p = path_graph::<f64>(3, 1.0).unwrap();
        assert_eq!(cluster_radius(&p, &EdgeConfig::closed(2), 0, RadiusMetric::Ambient), 0);
        assert_eq!(cluster_radius(&p, &EdgeConfig::from_mask(0b01, 2), 0, RadiusMetric::Ambient), 1);
        assert_eq!(cluster_radius(&p, &EdgeConfig::open(2), 0, RadiusMetric::Ambient), 2);
        // On a 4-cycle the open path 0-1-2 reaches 2 at ambient distance 2.
        let c = cycle_graph::<f64>(4, 1.0).unwrap();
        let omega = EdgeConfig::from_mask(0b0111, 4);
        assert_eq!(cluster_radius(&c, &omega, 0, RadiusMetric::Ambient), 2);
        assert_eq!(cluster_radius(&c, &omega, 0, RadiusMetric::Intrinsic), 3);
    }

    #[test]
    fn radius_bounded_by_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = build_lattice(&LatticeSpec::<f64>::torus(&[5, 5], 1.0)).unwrap();
        for _ in 0..300 {
            let omega = EdgeConfig::from_bits((0..g.n_edges()).map(|_| rng.random_bool(0.5)).collect());
            let v = rng.random_range(0..g.n_vertices());
            let r = cluster_radius(&g, &omega, v, RadiusMetric::Ambient);
            assert!(cluster_size_bfs(&g, &omega, v) > r);
        }
    }

    #[test]
    fn tail_examples() {
        let c = tail_curve::<f64>(&Histogram::from_samples([5, 5, 5]), 5, 0.997).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.0));
        let c = tail_curve::<f64>(&Histogram::from_samples([1, 2]), 2, 0.997).unwrap();
        assert_eq!(c.at(2).unwrap(), 0.5);
        assert!(matches!(tail_curve::<f64>(&Histogram::new(), 3, 0.997), Err(Error::InsufficientData(_))));
        assert!(c.at(3).is_err());
    }

    #[test]
    fn monte_carlo_half_widths_positive() {
        let c = tail_curve::<f64>(&Histogram::from_samples([1, 1, 3, 4]), 6, 0.997).unwrap();
        assert!(c.half_widths.iter().all(|&h| h > 0.0));
        let exact = TailCurve::<f64>::from_law(&[0.0, 0.5, 0.5], 2);
        assert!(exact.half_widths.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn bernoulli_single_edge_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hist = Histogram::from_samples((0..100_000).map(|_| if rng.random_bool(0.3) { 2 } else { 1 }));
        let c = tail_curve::<f64>(&hist, 2, 0.997).unwrap();
        let sigma = (0.3f64 * 0.7 / 1e5).sqrt();
        assert!((c.at(2).unwrap() - 0.3).abs() < 3.0 * sigma);
    }

    #[test]
    fn moment_examples() {
        let m = empirical_moments::<f64>(&Histogram::from_samples([4, 4, 4]), 3, 100, 0.997).unwrap();
        assert_eq!(m.values, vec![4.0, 16.0, 64.0]);
        let m = empirical_moments::<f64>(&Histogram::from_samples([1, 3]), 2, 100, 0.997).unwrap();
        assert_eq!(m.moment(2), 5.0);
        let law = [0.0, 0.5, 0.5];
        assert!((MomentTable::<f64>::from_law(&law, 1, 10).moment(1) - 1.5).abs() < 1e-15);
        let m = empirical_moments::<f64>(&Histogram::from_samples([1, 9]), 1, 3, 0.997).unwrap();
        assert_eq!(m.moment(1), 2.0);
        assert!(empirical_moments::<f64>(&Histogram::from_samples([1]), 1, 0, 0.997).is_err());
    }

    #[test]
    fn histogram_merge_is_order_free() {
        let a = Histogram::from_samples([1, 2, 2, 7]);
        let b = Histogram::from_samples([3, 1]);
        let c = Histogram::from_samples([9]);
        let left = a.clone().merged(b.clone()).merged(c.clone());
        let right = c.merged(b).merged(a);
        assert_eq!(left, right);
    }

    proptest! {
        #[test]
        fn mean_equals_sum_of_tail(samples in prop::collection::vec(1usize..40, 2..200)) {
            let hist = Histogram::from_samples(samples.iter().copied());
            let n_max = *samples.iter().max().unwrap();
            let tail = tail_curve::<f64>(&hist, n_max, 0.997).unwrap();
            let moments = empirical_moments::<f64>(&hist, 1, n_max, 0.997).unwrap();
            let (sum, _) = tail.partial_sum(n_max).unwrap();
            prop_assert!((sum - moments.moment(1)).abs() <= 1e-12 * moments.moment(1));
            prop_assert!(tail.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(tail.at(1).unwrap(), 1.0);
        }

        #[test]
        fn moments_log_convex(samples in prop::collection::vec(1usize..30, 2..100)) {
            let hist = Histogram::from_samples(samples);
            let m = empirical_moments::<f64>(&hist, 5, 1000, 0.997).unwrap();
            for k in 2..5 {
                let lhs = m.moment(k).ln() * 2.0;
                let rhs = m.moment(k - 1).ln() + m.moment(k + 1).ln();
                prop_assert!(lhs <= rhs + 1e-9);
            }
        }
    }
}
