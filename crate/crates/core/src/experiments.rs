//! Sampling pipelines shared by the command-line tool and the acceptance tests.

use serde::{Deserialize, Serialize};

use crate::cluster::{
    cluster_radius, cluster_size_bfs, empirical_moments, tail_curve, Histogram, RadiusMetric, TailCurve,
};
use crate::error::{Error, Result};
use crate::graph::{BoundaryKind, GraphMeta, WeightedGraph};
use crate::inequality::{
    check_exponent_inequalities, fit_big_delta, fit_delta, fit_gamma, BetaGridCurves, CriticalPoint, CriticalSource,
    ExponentEstimates, ExponentReport, FitOptions, PowerFit,
};
use crate::samplers::{grid_seed, mean_field_histogram, sample_grid, SamplingPlan};
use crate::scalar::Scalar;
use crate::stats::batch_standard_error;

/// Monte Carlo curves for vertex `v` at every `β` of a grid.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_curves<S: Scalar>(
    g: &WeightedGraph<S>,
    q: S,
    boundary: BoundaryKind,
    betas: &[S],
    plan: &SamplingPlan,
    v: usize,
    with_radius: bool,
    k_max: usize,
    confidence: f64,
) -> Result<BetaGridCurves<S>> {
    if v >= g.n_vertices() {
        return Err(Error::InvalidSpec(format!("vertex {v} not in a graph with {} vertices", g.n_vertices())));
    }
    let draws = sample_grid(g, q, betas, plan, |omega| {
        let size = cluster_size_bfs(g, omega, v);
        let radius = if with_radius { cluster_radius(g, omega, v, RadiusMetric::Ambient) } else { 0 };
        (size, radius)
    })?;
    let sizes: Vec<Histogram> = draws.iter().map(|d| Histogram::from_samples(d.iter().map(|x| x.0))).collect();
    let radii: Option<Vec<Histogram>> =
        with_radius.then(|| draws.iter().map(|d| Histogram::from_samples(d.iter().map(|x| x.1))).collect());
    BetaGridCurves::from_histograms(g, q, boundary, betas, v, &sizes, radii.as_deref(), k_max, confidence)
}

/// Bernoulli percolation on `K_N`: a critical tail at `p = 1/N` for `δ` and a
/// subcritical grid `p = c/N` for `γ` and `Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldConfig {
    pub n_vertices: usize,
    /// Cluster samples at `p = 1/N`.
    pub critical_samples: u64,
    /// Tail range for the `δ` fit; default `⌈N^{2/3}⌉`, the critical-window scale.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub fit: FitOptions,
    /// Multipliers `c` of the subcritical grid `p = c/N`, all below 1.
    pub grid: Vec<f64>,
    pub grid_samples: u64,
    pub k_max: usize,
    /// Independent batches for the batch-means standard errors.
    pub batches: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldRun {
    pub critical_tail: TailCurve<f64>,
    pub grid_p: Vec<f64>,
    pub means: Vec<f64>,
    pub moments: Vec<crate::cluster::MomentTable<f64>>,
    pub estimates: ExponentEstimates<f64>,
    pub inequalities: ExponentReport<f64>,
}

pub fn mean_field_run(cfg: &MeanFieldConfig, confidence: f64) -> Result<MeanFieldRun> {
    let n = cfg.n_vertices;
    if n < 2 || cfg.batches < 2 || cfg.grid.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return Err(Error::InvalidSpec(
            "mean-field run needs N ≥ 2, ≥ 2 batches and grid multipliers in (0, 1)".into(),
        ));
    }
    let nf = n as f64;
    let p_c = 1.0 / nf;
    let n_max = cfg.n_max.unwrap_or_else(|| nf.powf(2.0 / 3.0).ceil() as usize).min(n);
    let per_batch = |total: u64| total.div_ceil(cfg.batches as u64);

    let critical_batches: Vec<Histogram> = (0..cfg.batches)
        .map(|b| mean_field_histogram(n, p_c, per_batch(cfg.critical_samples), grid_seed(cfg.seed, b)))
        .collect();
    let batch_deltas = critical_batches
        .iter()
        .map(|h| Ok(fit_delta(&tail_curve::<f64>(h, n_max, confidence)?, &cfg.fit)?.exponent))
        .collect::<Result<Vec<_>>>()?;
    let critical = critical_batches.iter().fold(Histogram::new(), |acc, h| acc.merged(h.clone()));
    let critical_tail = tail_curve::<f64>(&critical, n_max, confidence)?;
    let delta = fit_delta(&critical_tail, &cfg.fit)?.with_stderr(batch_standard_error(&batch_deltas)?);

    let grid_p: Vec<f64> = cfg.grid.iter().map(|c| c / nf).collect();
    // [batch][grid point]
    let grid_batches: Vec<Vec<Histogram>> = (0..cfg.batches)
        .map(|b| {
            grid_p
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let seed = grid_seed(grid_seed(cfg.seed ^ 0x4D46, j), b);
                    mean_field_histogram(n, p, per_batch(cfg.grid_samples), seed)
                })
                .collect()
        })
        .collect();
    let moments_of = |hs: &[Histogram]| -> Result<Vec<crate::cluster::MomentTable<f64>>> {
        hs.iter().map(|h| empirical_moments(h, cfg.k_max, n, confidence)).collect()
    };
    let mut batch_gammas = Vec::with_capacity(cfg.batches);
    let mut batch_big_deltas = Vec::with_capacity(cfg.batches);
    for hs in &grid_batches {
        let ms = moments_of(hs)?;
        let means: Vec<f64> = ms.iter().map(|m| m.moment(1)).collect();
        batch_gammas.push(fit_gamma(&grid_p, &means, p_c)?.exponent);
        if cfg.k_max >= 2 {
            batch_big_deltas.push(fit_big_delta(&grid_p, &ms, p_c)?.exponent);
        }
    }
    let merged: Vec<Histogram> = (0..grid_p.len())
        .map(|j| grid_batches.iter().fold(Histogram::new(), |acc, hs| acc.merged(hs[j].clone())))
        .collect();
    let moments = moments_of(&merged)?;
    let means: Vec<f64> = moments.iter().map(|m| m.moment(1)).collect();
    let gamma = fit_gamma(&grid_p, &means, p_c)?.with_stderr(batch_standard_error(&batch_gammas)?);
    let big_delta: Option<PowerFit<f64>> = if cfg.k_max >= 2 {
        Some(fit_big_delta(&grid_p, &moments, p_c)?.with_stderr(batch_standard_error(&batch_big_deltas)?))
    } else {
        None
    };

    let estimates = ExponentEstimates {
        delta: Some(delta),
        gamma: Some(gamma),
        big_delta,
        critical: CriticalPoint { value: p_c, source: CriticalSource::Config },
    };
    let meta = GraphMeta { name: format!("complete-{n}"), transitive: true };
    let inequalities = check_exponent_inequalities(&estimates, meta, 1.0);
    Ok(MeanFieldRun { critical_tail, grid_p, means, moments, estimates, inequalities })
}
