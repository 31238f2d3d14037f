//! The exhaustive small-graph oracle suite: OSSS, the edge-covariance lower
//! bound, the derivative formula, monotonicity and planted fits.

use serde::Serialize;

use crate::cluster::{cluster_size_bfs, decompose, MomentTable, Provenance, TailCurve};
use crate::config::EdgeConfig;
use crate::error::Result;
use crate::exact::{
    check_fkg_lattice, check_monotonic, enumerate_measure, verify_derivative_formula, DerivativeReport, ExactMeasure,
    ModelParams,
};
use crate::ghost::{verify_prop31, GhostParams, OsssReport, OsssTable, Prop31Report};
use crate::graph::WeightedGraph;
use crate::inequality::{fit_big_delta, fit_delta, fit_gamma, FitOptions};

pub const SUITE_Q: [f64; 4] = [1.0, 1.5, 2.0, 3.0];
pub const SUITE_BETA: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const SUITE_LAMBDA: [f64; 3] = [0.5, 1.0, 2.0];
/// Margin floor for the exact suites.
pub const SUITE_TOLERANCE: f64 = 1e-9;

/// Every connected simple graph on at most 4 vertices with at most 5 edges,
/// one per isomorphism class, plus a triangle with one doubled edge.
pub fn small_graphs() -> Vec<WeightedGraph<f64>> {
    let mut out = Vec::new();
    for nv in 1..=4usize {
        let pairs: Vec<(usize, usize)> = (0..nv).flat_map(|a| (a + 1..nv).map(move |b| (a, b))).collect();
        let mut seen: Vec<u64> = Vec::new();
        for mask in 0u64..1 << pairs.len() {
            if mask.count_ones() > 5 {
                continue;
            }
            let edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p).collect();
            let triples: Vec<(usize, usize, f64)> = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
            let g = WeightedGraph::from_triples(nv, &triples).expect("valid simple graph");
            if !g.is_connected() {
                continue;
            }
            let key = canonical_key(nv, &edges);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let name = format!("v{nv}-{}", edges.iter().map(|(a, b)| format!("{a}{b}")).collect::<Vec<_>>().join("."));
            out.push(g.with_meta(name, false));
        }
    }
    let multi = WeightedGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (0, 1, 1.0)])
        .expect("valid multigraph")
        .with_meta("triangle+parallel-01", false);
    out.push(multi);
    out
}

/// Smallest adjacency bitmask over all vertex relabellings.
fn canonical_key(nv: usize, edges: &[(usize, usize)]) -> u64 {
    let mut perm: Vec<usize> = (0..nv).collect();
    let mut best = u64::MAX;
    loop {
        let mut key = 0u64;
        for &(a, b) in edges {
            let (x, y) = (perm[a].min(perm[b]), perm[a].max(perm[b]));
            key |= 1 << (x * 4 + y);
        }
        best = best.min(key);
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// The enumerated measures of the suite grid, as `(graph index, β, q, measure)`.
pub fn suite_measures(graphs: &[WeightedGraph<f64>]) -> Result<Vec<(usize, ExactMeasure<f64>)>> {
    let mut out = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        for &q in &SUITE_Q {
            for &beta in &SUITE_BETA {
                out.push((i, enumerate_measure(g, ModelParams::new(beta, q)?)?));
            }
        }
    }
    Ok(out)
}

/// OSSS reports for every measure of the grid, `λ`, vertex and `n ≤ |V|`.
pub fn osss_suite(measures: &[(usize, ExactMeasure<f64>)]) -> Result<Vec<OsssReport<f64>>> {
    let mut out = Vec::new();
    for (_, m) in measures {
        let nv = m.graph().n_vertices();
        for &lambda in &SUITE_LAMBDA {
            for n in 1..=nv {
                let table = OsssTable::compute(m, &GhostParams::new(lambda, n)?)?;
                for v in 0..nv {
                    out.push(table.verify(v, n)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn prop31_suite(measures: &[(usize, ExactMeasure<f64>)]) -> Result<Vec<Prop31Report<f64>>> {
    let mut out = Vec::new();
    for (_, m) in measures {
        let nv = m.graph().n_vertices();
        for &lambda in &SUITE_LAMBDA {
            for n in 1..=nv {
                for v in 0..nv {
                    out.push(verify_prop31(m, lambda, v, n)?);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeCase {
    pub graph: String,
    pub observable: &'static str,
    pub report: DerivativeReport<f64>,
}

pub type Observable = (&'static str, fn(&WeightedGraph<f64>, &EdgeConfig) -> f64);

/// Observables of the derivative suite, by name.
pub fn observables() -> [Observable; 3] {
    [
        ("cluster-of-0-at-least-2", |g, c| if cluster_size_bfs(g, c, 0) >= 2 { 1.0 } else { 0.0 }),
        ("cluster-count", |g, c| decompose(g, c).expect("shape").count() as f64),
        ("open-edges", |_, c| c.open_count() as f64),
    ]
}

/// Finite difference against the covariance sum, at `step` and `step/2`,
/// on a fixed set of (graph, parameters, observable) instances.
pub fn derivative_suite(graphs: &[WeightedGraph<f64>], step: f64) -> Result<Vec<DerivativeCase>> {
    let mut out = Vec::new();
    let picks = graphs.iter().filter(|g| g.n_edges() >= 2).take(4);
    for (k, g) in picks.enumerate() {
        for (j, (name, f)) in observables().into_iter().enumerate() {
            let q = SUITE_Q[(k + j) % SUITE_Q.len()];
            let beta = [0.5, 1.0][(k + j) % 2];
            let report = verify_derivative_formula(g, ModelParams::new(beta, q)?, |c| f(g, c), step)?;
            out.push(DerivativeCase { graph: g.meta().name.clone(), observable: name, report });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicitySuite {
    pub measures: usize,
    pub lattice_failures: Vec<String>,
    pub monotonic_failures: Vec<String>,
    /// The planted parity measure was rejected by both checks.
    pub parity_detected: bool,
}

pub fn monotonicity_suite(measures: &[(usize, ExactMeasure<f64>)]) -> Result<MonotonicitySuite> {
    let label = |m: &ExactMeasure<f64>| {
        let p = m.params().expect("enumerated");
        format!("{} β={} q={}", m.graph().meta().name, p.beta, p.q)
    };
    let mut lattice_failures = Vec::new();
    let mut monotonic_failures = Vec::new();
    for (_, m) in measures {
        if !check_fkg_lattice(m).passed() {
            lattice_failures.push(label(m));
        }
        if !check_monotonic(m).passed() {
            monotonic_failures.push(label(m));
        }
    }
    // Two edges, odd-parity configurations favoured.
    let path = WeightedGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)])?;
    let parity = ExactMeasure::from_weights(path, &[1.0, 2.0, 2.0, 1.0])?;
    let parity_detected = !check_fkg_lattice(&parity).passed() && !check_monotonic(&parity).passed();
    Ok(MonotonicitySuite { measures: measures.len(), lattice_failures, monotonic_failures, parity_detected })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedFit {
    pub exponent: &'static str,
    pub planted: f64,
    pub recovered: f64,
}

/// Noiseless synthetic curves with known exponents.
pub fn planted_fit_suite() -> Result<Vec<PlantedFit>> {
    let mut out = Vec::new();
    for delta in [2.0, 91.0 / 5.0, 3.0] {
        let values: Vec<f64> = (1..=2000).map(|n| (n as f64).powf(-1.0 / delta)).collect();
        let tail = TailCurve::from_values(values, vec![0.0; 2000], 0, Provenance::Exact);
        out.push(PlantedFit {
            exponent: "delta",
            planted: delta,
            recovered: fit_delta(&tail, &FitOptions::default())?.exponent,
        });
    }
    let beta_c = 0.5;
    let betas: Vec<f64> = (0..12).map(|i| 0.1 + 0.03 * i as f64).collect();
    for (gamma, big_delta) in [(1.0, 2.0), (43.0 / 18.0, 91.0 / 36.0)] {
        let tables: Vec<MomentTable<f64>> = betas
            .iter()
            .map(|b| {
                let values = (1..=4).map(|k| (beta_c - b).powf(-((k as f64 - 1.0) * big_delta + gamma))).collect();
                MomentTable {
                    values,
                    half_widths: vec![0.0; 4],
                    samples: 0,
                    truncation: 0,
                    provenance: Provenance::Exact,
                }
            })
            .collect();
        let means: Vec<f64> = tables.iter().map(|t| t.moment(1)).collect();
        out.push(PlantedFit {
            exponent: "gamma",
            planted: gamma,
            recovered: fit_gamma(&betas, &means, beta_c)?.exponent,
        });
        out.push(PlantedFit {
            exponent: "Delta",
            planted: big_delta,
            recovered: fit_big_delta(&betas, &tables, beta_c)?.exponent,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_census() {
        let gs = small_graphs();
        // 1 + 1 + 2 + 5 simple classes (K4 has six edges) and the multigraph.
        assert_eq!(gs.len(), 10);
        assert!(gs.iter().all(|g| g.is_connected() && g.n_edges() <= 5));
        let per_size: Vec<usize> = (1..=4).map(|k| gs.iter().filter(|g| g.n_vertices() == k).count()).collect();
        assert_eq!(per_size, vec![1, 1, 3, 5]);
    }

    #[test]
    fn planted_fits_to_three_decimals() {
        for f in planted_fit_suite().unwrap() {
            assert!((f.recovered - f.planted).abs() < 5e-4, "{f:?}");
        }
    }

    #[test]
    fn derivative_suite_has_enough_instances() {
        let cases = derivative_suite(&small_graphs(), 0.05).unwrap();
        assert!(cases.len() >= 10);
        for c in &cases {
            let r = c.report.ratio.unwrap();
            assert!((3.5..=4.5).contains(&r), "{c:?}");
        }
    }
}
