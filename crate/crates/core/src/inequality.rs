//! Numerical checks of the differential, integrated, sharpness, Menshikov
//! and exponent inequalities, from exact or Monte Carlo tail data.
//!
//! Differential inequalities are never checked pointwise. Over a grid interval
//! `[x_i, x_{i+1}]` the forward difference of `log P(|K| ≥ n)` is the mean of
//! the derivative, and every right-hand side used here is a decreasing
//! function of the parameter once it is positive, so evaluating it at the
//! right endpoint gives a valid lower bound for that mean.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{empirical_moments, tail_curve, Histogram, MomentTable, Provenance, RadiusMetric, TailCurve};
use crate::error::{Error, Result};
use crate::exact::{enumerate_measure, ModelParams};
use crate::graph::{BoundaryKind, GraphMeta, WeightedGraph};
use crate::scalar::Scalar;
use crate::stats::fit_line;

/// Relative slack under which exact margins still count as "holds".
pub const EXACT_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    HoldsWithinNoise,
    Violated,
    /// A zero tail estimate left the check undefined.
    Undetermined,
}

/// Classifies `margin = LHS − RHS` against its combined half-width.
/// `scale` sets the floating-point slack for exact inputs.
pub fn verdict<S: Scalar>(margin: S, half_width: S, scale: S) -> Verdict {
    if !margin.is_finite() {
        return if margin > S::zero() { Verdict::Holds } else { Verdict::Undetermined };
    }
    let slack = S::lit(EXACT_SLACK) * scale.abs().max(S::one());
    if margin >= -slack {
        Verdict::Holds
    } else if margin >= -(half_width + slack) {
        Verdict::HoldsWithinNoise
    } else {
        Verdict::Violated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// `C(β)·D⁺ log φ(|K| ≥ n) ≥ ½[...]`, in `β`.
    DiffIneq,
    /// The `q = 1` form in `p`, with `p(1 − p)` in place of `C(β)`.
    DiffIneqPercolation,
    /// The `λ ↓ 0` limit, with `E|K|` in the bracket.
    DiffIneqLimit,
    IntegratedTail,
    IntegratedMean,
    Menshikov,
    /// Sharpness lower bound against the finite-volume proxy for `φ(|K| = ∞)`.
    SharpnessProxy,
    GammaDelta,
    DeltaGamma,
}

/// One evaluated inequality `LHS ≥ RHS`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord<S> {
    pub check: CheckKind,
    /// Grid interval in the check's own parameter (`β` or `p`); equal ends for pointwise checks.
    pub interval: (S, S),
    pub n: Option<usize>,
    pub lambda: Option<S>,
    pub lhs: S,
    pub rhs: S,
    pub margin: S,
    pub half_width: S,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl<S: Scalar> CheckRecord<S> {
    fn new(check: CheckKind, interval: (S, S), lhs: S, rhs: S, half_width: S) -> Self {
        let margin = lhs - rhs;
        let scale = lhs.abs().max(rhs.abs());
        Self {
            check,
            interval,
            n: None,
            lambda: None,
            lhs,
            rhs,
            margin,
            half_width,
            verdict: verdict(margin, half_width, scale),
            note: None,
        }
    }

    fn undetermined(check: CheckKind, interval: (S, S), rhs: S, note: &str) -> Self {
        Self {
            check,
            interval,
            n: None,
            lambda: None,
            lhs: S::nan(),
            rhs,
            margin: S::nan(),
            half_width: S::nan(),
            verdict: Verdict::Undetermined,
            note: Some(note.into()),
        }
    }

    fn at(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn with_lambda(mut self, lambda: S) -> Self {
        self.lambda = Some(lambda);
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerdictCounts {
    pub holds: usize,
    pub holds_within_noise: usize,
    pub violated: usize,
    pub undetermined: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Holds => self.holds += 1,
            Verdict::HoldsWithinNoise => self.holds_within_noise += 1,
            Verdict::Violated => self.violated += 1,
            Verdict::Undetermined => self.undetermined += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.holds + self.holds_within_noise + self.violated + self.undetermined
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport<S> {
    pub graph: GraphMeta,
    pub q: S,
    pub records: Vec<CheckRecord<S>>,
}

impl<S: Scalar> InequalityReport<S> {
    pub fn new(graph: GraphMeta, q: S) -> Self {
        Self { graph, q, records: Vec::new() }
    }

    pub fn extend(&mut self, other: InequalityReport<S>) {
        self.records.extend(other.records);
    }

    pub fn counts(&self) -> VerdictCounts {
        let mut c = VerdictCounts::default();
        for r in &self.records {
            c.add(r.verdict);
        }
        c
    }

    pub fn violations(&self) -> impl Iterator<Item = &CheckRecord<S>> {
        self.records.iter().filter(|r| r.verdict == Verdict::Violated)
    }

    pub fn has_violations(&self) -> bool {
        self.violations().next().is_some()
    }

    /// Smallest finite margin, if any.
    pub fn worst_margin(&self) -> Option<S> {
        self.records.iter().map(|r| r.margin).filter(|m| m.is_finite()).reduce(S::min)
    }

    /// One line per check kind: verdict counts and the worst margin.
    pub fn summary_table(&self) -> String {
        let mut kinds: Vec<CheckKind> = self.records.iter().map(|r| r.check).collect();
        kinds.sort();
        kinds.dedup();
        let mut out = format!(
            "{:<22} {:>8} {:>8} {:>8} {:>8} {:>14}\n",
            "check", "holds", "noise", "violated", "undet", "worst margin"
        );
        for k in kinds {
            let mut c = VerdictCounts::default();
            let mut worst: Option<S> = None;
            for r in self.records.iter().filter(|r| r.check == k) {
                c.add(r.verdict);
                if r.margin.is_finite() {
                    worst = Some(worst.map_or(r.margin, |w| w.min(r.margin)));
                }
            }
            let worst = worst.map_or("-".to_string(), |w| format!("{:.6e}", w.as_f64()));
            let name = serde_json_name(k);
            let _ = writeln!(
                out,
                "{:<22} {:>8} {:>8} {:>8} {:>8} {:>14}",
                name, c.holds, c.holds_within_noise, c.violated, c.undetermined, worst
            );
        }
        out
    }
}

fn serde_json_name(k: CheckKind) -> &'static str {
    match k {
        CheckKind::DiffIneq => "diff-ineq",
        CheckKind::DiffIneqPercolation => "diff-ineq-percolation",
        CheckKind::DiffIneqLimit => "diff-ineq-limit",
        CheckKind::IntegratedTail => "integrated-tail",
        CheckKind::IntegratedMean => "integrated-mean",
        CheckKind::Menshikov => "menshikov",
        CheckKind::SharpnessProxy => "sharpness-proxy",
        CheckKind::GammaDelta => "gamma-delta",
        CheckKind::DeltaGamma => "delta-gamma",
    }
}

/// Tails, radius tails and moments of `|K_v|` across a sorted `β` grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaGridCurves<S> {
    pub graph: GraphMeta,
    pub n_vertices: usize,
    /// Distinct coupling constants, needed for `C(β)`.
    pub couplings: Vec<S>,
    pub q: S,
    pub boundary: BoundaryKind,
    pub betas: Vec<S>,
    pub tails: Vec<TailCurve<S>>,
    pub radius_tails: Option<Vec<TailCurve<S>>>,
    pub moments: Vec<MomentTable<S>>,
}

fn distinct_couplings<S: Scalar>(g: &WeightedGraph<S>) -> Vec<S> {
    let mut js = g.couplings();
    js.sort_by(|a, b| a.partial_cmp(b).expect("finite couplings"));
    js.dedup();
    js
}

fn eccentricity<S: Scalar>(g: &WeightedGraph<S>, v: usize) -> usize {
    g.distances_from(v).into_iter().filter(|&d| d != usize::MAX).max().unwrap_or(0)
}

impl<S: Scalar> BetaGridCurves<S> {
    /// Curves for vertex `v` from exhaustive enumeration at every grid point.
    pub fn exact(
        g: &WeightedGraph<S>,
        q: S,
        boundary: BoundaryKind,
        betas: &[S],
        v: usize,
        k_max: usize,
    ) -> Result<Self> {
        if v >= g.n_vertices() {
            return Err(Error::InvalidSpec(format!("vertex {v} not in a graph with {} vertices", g.n_vertices())));
        }
        let nv = g.n_vertices();
        let eccentricity = eccentricity(g, v);
        let mut tails = Vec::with_capacity(betas.len());
        let mut radius_tails = Vec::with_capacity(betas.len());
        let mut moments = Vec::with_capacity(betas.len());
        for &beta in betas {
            let m = enumerate_measure(g, ModelParams::with_boundary(beta, q, boundary)?)?;
            let law = m.cluster_size_law(v);
            tails.push(TailCurve::from_law(&law, nv));
            moments.push(MomentTable::from_law(&law, k_max, nv));
            radius_tails.push(TailCurve::from_law(&m.radius_law(v, RadiusMetric::Ambient), eccentricity));
        }
        Self::assemble(g, q, boundary, betas.to_vec(), tails, Some(radius_tails), moments)
    }

    /// Curves from per-grid-point histograms of cluster sizes (and optionally radii).
    #[allow(clippy::too_many_arguments)]
    pub fn from_histograms(
        g: &WeightedGraph<S>,
        q: S,
        boundary: BoundaryKind,
        betas: &[S],
        v: usize,
        sizes: &[Histogram],
        radii: Option<&[Histogram]>,
        k_max: usize,
        confidence: f64,
    ) -> Result<Self> {
        if sizes.len() != betas.len() || radii.is_some_and(|r| r.len() != betas.len()) {
            return Err(Error::Shape { expected: betas.len(), got: sizes.len() });
        }
        let nv = g.n_vertices();
        let tails = sizes.iter().map(|h| tail_curve(h, nv, confidence)).collect::<Result<Vec<_>>>()?;
        let moments = sizes.iter().map(|h| empirical_moments(h, k_max, nv, confidence)).collect::<Result<Vec<_>>>()?;
        let radius_tails = radii
            .map(|rs| rs.iter().map(|h| tail_curve(h, eccentricity(g, v), confidence)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Self::assemble(g, q, boundary, betas.to_vec(), tails, radius_tails, moments)
    }

    fn assemble(
        g: &WeightedGraph<S>,
        q: S,
        boundary: BoundaryKind,
        betas: Vec<S>,
        tails: Vec<TailCurve<S>>,
        radius_tails: Option<Vec<TailCurve<S>>>,
        moments: Vec<MomentTable<S>>,
    ) -> Result<Self> {
        if betas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("β grid must be strictly increasing".into()));
        }
        Ok(Self {
            graph: g.meta().clone(),
            n_vertices: g.n_vertices(),
            couplings: distinct_couplings(g),
            q,
            boundary,
            betas,
            tails,
            radius_tails,
            moments,
        })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// `C(β) = max_J (e^{βJ} − 1)/J`.
    pub fn c_at(&self, beta: S) -> S {
        self.couplings.iter().map(|&j| (beta * j).exp_m1() / j).fold(S::zero(), S::max)
    }

    pub fn uniform_coupling(&self) -> Option<S> {
        match self.couplings.as_slice() {
            [j] => Some(*j),
            _ => None,
        }
    }

    /// Edge probability `1 − e^{−βJ}` at grid point `i`; needs a uniform coupling.
    pub fn p_at(&self, i: usize) -> Result<S> {
        let j = self
            .uniform_coupling()
            .ok_or_else(|| Error::Inapplicable("p parametrisation needs a single coupling constant".into()))?;
        Ok(-(-self.betas[i] * j).exp_m1())
    }

    /// `(E|K|, half-width)` at grid point `i`.
    pub fn mean(&self, i: usize) -> (S, S) {
        (self.moments[i].values[0], self.moments[i].half_widths[0])
    }

    /// Number of `(i, n)` cells where the tail drops from `β_i` to `β_{i+1}`
    /// by more than the two half-widths combined.
    pub fn domination_violations(&self) -> usize {
        let mut bad = 0;
        for i in 1..self.len() {
            let (a, b) = (&self.tails[i - 1], &self.tails[i]);
            for k in 0..a.values.len().min(b.values.len()) {
                let slack = a.half_widths[k] + b.half_widths[k] + S::lit(EXACT_SLACK);
                if b.values[k] + slack < a.values[k] {
                    bad += 1;
                }
            }
        }
        bad
    }

    fn check_interval_count(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientData(format!("need ≥ 2 grid points, got {}", self.len())));
        }
        Ok(())
    }
}

/// `½[(1 − e^{−λ})·n / (λ·Σ_{m=1}^{⌈n/λ⌉} P(|K| ≥ m)) − 1]` with its half-width.
pub fn diffineq_rhs<S: Scalar>(tail: &TailCurve<S>, n: usize, lambda: S) -> Result<(S, S)> {
    if n == 0 || !(lambda > S::zero()) {
        return Err(Error::Domain(format!("need n ≥ 1 and λ > 0, got n={n}, λ={lambda}")));
    }
    let upto = (S::from_count(n) / lambda).ceil().to_usize().ok_or_else(|| Error::Range("⌈n/λ⌉ overflow".into()))?;
    let (sum, sum_hw) = tail.partial_sum(upto)?;
    let a = -(-lambda).exp_m1() * S::from_count(n) / lambda;
    let half = S::lit(0.5);
    Ok((half * (a / sum - S::one()), half * a * sum_hw / (sum * sum)))
}

/// The `λ ↓ 0` limit `½[n/E|K| − 1]`.
pub fn diffineq_rhs_limit<S: Scalar>(mean: S, n: usize) -> S {
    S::lit(0.5) * (S::from_count(n) / mean - S::one())
}

/// Forward difference of `log P(|K| ≥ n)` over one grid interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiniteDifference<S> {
    pub lo: S,
    pub hi: S,
    /// `None` when either tail estimate is zero.
    pub value: Option<S>,
    pub half_width: S,
}

fn log_difference<S: Scalar>(
    x: (S, S),
    tail_lo: &TailCurve<S>,
    tail_hi: &TailCurve<S>,
    n: usize,
) -> Result<FiniteDifference<S>> {
    let (a, b) = (tail_lo.at(n)?, tail_hi.at(n)?);
    let (ha, hb) = (tail_lo.half_width(n)?, tail_hi.half_width(n)?);
    let dx = x.1 - x.0;
    if !(a > S::zero() && b > S::zero()) {
        return Ok(FiniteDifference { lo: x.0, hi: x.1, value: None, half_width: S::nan() });
    }
    Ok(FiniteDifference { lo: x.0, hi: x.1, value: Some((b.ln() - a.ln()) / dx), half_width: (ha / a + hb / b) / dx })
}

/// Forward differences in `β` of `log P_β(|K| ≥ n)`, one per grid interval.
///
/// Each is the mean of the derivative over its interval; half-widths add the
/// two endpoint half-widths, which is conservative under positive correlation.
pub fn log_tail_derivative<S: Scalar>(curves: &BetaGridCurves<S>, n: usize) -> Result<Vec<FiniteDifference<S>>> {
    curves.check_interval_count()?;
    (0..curves.len() - 1)
        .map(|i| log_difference((curves.betas[i], curves.betas[i + 1]), &curves.tails[i], &curves.tails[i + 1], n))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffIneqForm {
    /// In `β`, LHS multiplied by `C(β_{i+1})`.
    #[default]
    FortuinKasteleyn,
    /// For `q = 1`, in `p`, LHS multiplied by `max p(1 − p)` over the interval.
    Percolation,
}

/// Where the right-hand side is evaluated over a grid interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsEndpoint {
    /// Valid lower bound for the interval mean.
    #[default]
    Right,
    /// Heuristic: can exceed the interval mean on coarse grids.
    Left,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffIneqOptions<S> {
    pub lambda: S,
    pub form: DiffIneqForm,
    pub endpoint: RhsEndpoint,
}

impl<S: Scalar> Default for DiffIneqOptions<S> {
    fn default() -> Self {
        Self { lambda: S::one(), form: DiffIneqForm::default(), endpoint: RhsEndpoint::default() }
    }
}

fn max_p_one_minus_p<S: Scalar>(lo: S, hi: S) -> S {
    let half = S::lit(0.5);
    if hi <= half {
        hi * (S::one() - hi)
    } else if lo >= half {
        lo * (S::one() - lo)
    } else {
        S::lit(0.25)
    }
}

/// Checks the differential inequality over every grid interval and every `n` in `ns`.
pub fn check_diffineq<S: Scalar>(
    curves: &BetaGridCurves<S>,
    ns: &[usize],
    opts: &DiffIneqOptions<S>,
) -> Result<InequalityReport<S>> {
    curves.check_interval_count()?;
    let intervals = curves.len() - 1;
    let (kind, xs, multipliers): (CheckKind, Vec<S>, Vec<S>) = match opts.form {
        DiffIneqForm::FortuinKasteleyn => {
            for i in 0..intervals {
                let (a, b) = (curves.c_at(curves.betas[i]), curves.c_at(curves.betas[i + 1]));
                if a > S::zero() && b / a > S::lit(1.05) {
                    log::warn!(
                        "C(β) changes by {:.1}% over [{}, {}]; refine the grid",
                        (b / a - S::one()).as_f64() * 100.0,
                        curves.betas[i],
                        curves.betas[i + 1]
                    );
                }
            }
            let ms = (0..intervals).map(|i| curves.c_at(curves.betas[i + 1])).collect();
            (CheckKind::DiffIneq, curves.betas.clone(), ms)
        }
        DiffIneqForm::Percolation => {
            if curves.q != S::one() {
                return Err(Error::Inapplicable(format!("percolation form needs q = 1, got q = {}", curves.q)));
            }
            let ps: Vec<S> = (0..curves.len()).map(|i| curves.p_at(i)).collect::<Result<_>>()?;
            let ms = (0..intervals).map(|i| max_p_one_minus_p(ps[i], ps[i + 1])).collect();
            (CheckKind::DiffIneqPercolation, ps, ms)
        }
    };
    let cells: Vec<(usize, usize)> = (0..intervals).flat_map(|i| ns.iter().map(move |&n| (i, n))).collect();
    let records = cells
        .par_iter()
        .map(|&(i, n)| -> Result<CheckRecord<S>> {
            let eval = match opts.endpoint {
                RhsEndpoint::Right => i + 1,
                RhsEndpoint::Left => i,
            };
            let (rhs, rhs_hw) = diffineq_rhs(&curves.tails[eval], n, opts.lambda)?;
            let x = (xs[i], xs[i + 1]);
            let fd = log_difference(x, &curves.tails[i], &curves.tails[i + 1], n)?;
            let rec = match fd.value {
                Some(d) => {
                    let m = multipliers[i];
                    CheckRecord::new(kind, x, m * d, rhs, m * fd.half_width + rhs_hw)
                }
                None => CheckRecord::undetermined(kind, x, rhs, "zero tail estimate"),
            };
            Ok(rec.at(n).with_lambda(opts.lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InequalityReport { graph: curves.graph.clone(), q: curves.q, records })
}

/// The `λ ↓ 0` limit: `C(β_{i+1})·(forward difference) ≥ ½[n/E_{β_{i+1}}|K| − 1]`.
pub fn check_diffineq_limit<S: Scalar>(curves: &BetaGridCurves<S>, ns: &[usize]) -> Result<InequalityReport<S>> {
    curves.check_interval_count()?;
    let mut records = Vec::new();
    for i in 0..curves.len() - 1 {
        let x = (curves.betas[i], curves.betas[i + 1]);
        let c = curves.c_at(x.1);
        let (mean, mean_hw) = curves.mean(i + 1);
        for &n in ns {
            let rhs = diffineq_rhs_limit(mean, n);
            let rhs_hw = S::lit(0.5) * S::from_count(n) * mean_hw / (mean * mean);
            let fd = log_difference(x, &curves.tails[i], &curves.tails[i + 1], n)?;
            let rec = match fd.value {
                Some(d) => CheckRecord::new(CheckKind::DiffIneqLimit, x, c * d, rhs, c * fd.half_width + rhs_hw),
                None => CheckRecord::undetermined(CheckKind::DiffIneqLimit, x, rhs, "zero tail estimate"),
            };
            records.push(rec.at(n));
        }
    }
    Ok(InequalityReport { graph: curves.graph.clone(), q: curves.q, records })
}

fn integrated_check_args<S: Scalar>(beta: S, beta0: S, c0: S) -> Result<S> {
    if beta > beta0 {
        return Err(Error::Domain(format!("integrated bound needs β ≤ β₀, got β={beta}, β₀={beta0}")));
    }
    if beta < beta0 && !(c0 > S::zero()) {
        return Err(Error::Domain(format!("C(β₀) must be positive, got {c0}")));
    }
    Ok(beta0 - beta)
}

/// Upper bound on `φ_β(|K| ≥ n)`, `n = 1..=n_max`, from the tail at `β₀ ≥ β`:
/// `P₀(n)·exp[−(1 − e^{−1})(β₀ − β)n / (2C(β₀)Σ_{m≤n}P₀(m)) + (β₀ − β)/(2C(β₀))]`.
pub fn integrated_bound_tail<S: Scalar>(tail0: &TailCurve<S>, beta: S, beta0: S, c0: S) -> Result<TailCurve<S>> {
    let gap = integrated_check_args(beta, beta0, c0)?;
    if gap == S::zero() {
        return Ok(tail0.clone());
    }
    let two_c = S::lit(2.0) * c0;
    let a = -(-S::one()).exp_m1() * gap / two_c;
    let offset = gap / two_c;
    let mut values = Vec::with_capacity(tail0.n_max());
    let mut half_widths = Vec::with_capacity(tail0.n_max());
    for n in 1..=tail0.n_max() {
        let (sum, sum_hw) = tail0.partial_sum(n)?;
        let p = tail0.at(n)?;
        let factor = (-a * S::from_count(n) / sum + offset).exp();
        let bound = p * factor;
        values.push(bound);
        half_widths.push(factor * tail0.half_width(n)? + bound * a * S::from_count(n) * sum_hw / (sum * sum));
    }
    Ok(TailCurve::from_values(values, half_widths, tail0.samples, tail0.provenance))
}

/// As [`integrated_bound_tail`] with exponent `−(β₀ − β)n/(2C(β₀)E_{β₀}|K|) + (β₀ − β)/(2C(β₀))`.
pub fn integrated_bound_mean<S: Scalar>(
    tail0: &TailCurve<S>,
    mean0: (S, S),
    beta: S,
    beta0: S,
    c0: S,
) -> Result<TailCurve<S>> {
    let gap = integrated_check_args(beta, beta0, c0)?;
    if gap == S::zero() {
        return Ok(tail0.clone());
    }
    let two_c = S::lit(2.0) * c0;
    let (mean, mean_hw) = mean0;
    let a = gap / two_c;
    let mut values = Vec::with_capacity(tail0.n_max());
    let mut half_widths = Vec::with_capacity(tail0.n_max());
    for n in 1..=tail0.n_max() {
        let p = tail0.at(n)?;
        let factor = (-a * S::from_count(n) / mean + a).exp();
        let bound = p * factor;
        values.push(bound);
        half_widths.push(factor * tail0.half_width(n)? + bound * a * S::from_count(n) * mean_hw / (mean * mean));
    }
    Ok(TailCurve::from_values(values, half_widths, tail0.samples, tail0.provenance))
}

/// Compares both integrated bounds from grid point `beta0_index` against the
/// measured tails at every smaller `β` of the grid.
pub fn check_integrated<S: Scalar>(curves: &BetaGridCurves<S>, beta0_index: usize) -> Result<InequalityReport<S>> {
    if beta0_index >= curves.len() {
        return Err(Error::Range(format!("β₀ index {beta0_index} outside a grid of {}", curves.len())));
    }
    let beta0 = curves.betas[beta0_index];
    let c0 = curves.c_at(beta0);
    let tail0 = &curves.tails[beta0_index];
    let mut records = Vec::new();
    for i in 0..beta0_index {
        let beta = curves.betas[i];
        let measured = &curves.tails[i];
        let by_tail = integrated_bound_tail(tail0, beta, beta0, c0)?;
        let by_mean = integrated_bound_mean(tail0, curves.mean(beta0_index), beta, beta0, c0)?;
        for (kind, bound) in [(CheckKind::IntegratedTail, by_tail), (CheckKind::IntegratedMean, by_mean)] {
            for n in 1..=bound.n_max().min(measured.n_max()) {
                let hw = bound.half_width(n)? + measured.half_width(n)?;
                records.push(CheckRecord::new(kind, (beta, beta0), bound.at(n)?, measured.at(n)?, hw).at(n));
            }
        }
    }
    Ok(InequalityReport { graph: curves.graph.clone(), q: curves.q, records })
}

/// Menshikov's inequality `D log P_p(R ≥ n) ≥ (1/p)[n/Σ_{m=0}^n P_p(R ≥ m) − 1]`
/// over each `p` interval, right-hand side at the right endpoint.
pub fn menshikov_check<S: Scalar>(curves: &BetaGridCurves<S>) -> Result<InequalityReport<S>> {
    if curves.q != S::one() {
        return Err(Error::Inapplicable(format!("Menshikov's inequality is for q = 1, got q = {}", curves.q)));
    }
    let radii =
        curves.radius_tails.as_ref().ok_or_else(|| Error::InsufficientData("radius tails were not recorded".into()))?;
    curves.check_interval_count()?;
    let ps: Vec<S> = (0..curves.len()).map(|i| curves.p_at(i)).collect::<Result<_>>()?;
    let mut records = Vec::new();
    for i in 0..curves.len() - 1 {
        let x = (ps[i], ps[i + 1]);
        let right = &radii[i + 1];
        let n_max = radii[i].n_max().min(right.n_max());
        for n in 0..=n_max {
            let (sum, sum_hw) = right.partial_sum(n)?;
            let total = S::one() + sum;
            let inv_p = S::one() / x.1;
            let rhs = inv_p * (S::from_count(n) / total - S::one());
            let rhs_hw = inv_p * S::from_count(n) * sum_hw / (total * total);
            let fd = log_difference(x, &radii[i], right, n)?;
            let rec = match fd.value {
                Some(d) => CheckRecord::new(CheckKind::Menshikov, x, d, rhs, fd.half_width + rhs_hw),
                None => CheckRecord::undetermined(CheckKind::Menshikov, x, rhs, "zero tail estimate"),
            };
            records.push(rec.at(n));
        }
    }
    Ok(InequalityReport { graph: curves.graph.clone(), q: curves.q, records })
}

/// `(β − β_c)/(2C(β) + β − β_c)`.
pub fn sharpness_lower_bound<S: Scalar>(beta: S, beta_c: S, c_beta: S) -> Result<S> {
    if !(beta > beta_c) {
        return Err(Error::Domain(format!("sharpness bound needs β > β_c, got β={beta}, β_c={beta_c}")));
    }
    let gap = beta - beta_c;
    Ok(gap / (S::lit(2.0) * c_beta + gap))
}

/// Sharpness bound against `P(|K_v| ≥ ⌈|V|^exponent⌉)` at each grid point above `β_c`.
pub fn check_sharpness_proxy<S: Scalar>(
    curves: &BetaGridCurves<S>,
    beta_c: S,
    exponent: f64,
) -> Result<InequalityReport<S>> {
    let target = (curves.n_vertices as f64).powf(exponent).ceil() as usize;
    let mut records = Vec::new();
    for (i, &beta) in curves.betas.iter().enumerate() {
        if beta <= beta_c {
            continue;
        }
        let tail = &curves.tails[i];
        let n = target.clamp(1, tail.n_max());
        let bound = sharpness_lower_bound(beta, beta_c, curves.c_at(beta))?;
        let rec = CheckRecord::new(CheckKind::SharpnessProxy, (beta, beta), tail.at(n)?, bound, tail.half_width(n)?)
            .at(n)
            .with_note(format!("finite-volume proxy P(|K| ≥ |V|^{exponent})"));
        records.push(rec);
    }
    Ok(InequalityReport { graph: curves.graph.clone(), q: curves.q, records })
}

/// Least-squares power-law fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit<S> {
    pub exponent: S,
    pub stderr: S,
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
    /// Range of the independent variable actually fitted.
    pub window: (S, S),
    pub points: usize,
    /// Half the gap between fits on the lower and upper halves of the window
    /// (split at the midpoint in log scale); a proxy for curvature the model ignores.
    pub systematic: S,
    /// The fitted quantity barely grows: exponent below 0.1 or less than a
    /// factor 2 between its smallest and largest value.
    pub non_divergent: bool,
}

impl<S: Scalar> PowerFit<S> {
    /// `√(stderr² + systematic²)`.
    pub fn error(&self) -> S {
        (self.stderr * self.stderr + self.systematic * self.systematic).sqrt()
    }

    /// Replaces the statistical error, e.g. with a batch-means estimate.
    pub fn with_stderr(mut self, stderr: S) -> Self {
        self.stderr = stderr;
        self
    }
}

/// Half the difference between slopes fitted on either half of the `x` range.
fn split_systematic<S: Scalar>(xs: &[S], ys: &[S], exponent: impl Fn(S) -> S) -> Result<S> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let mid = S::lit(0.5) * (lo + hi);
    let half = |keep: &dyn Fn(S) -> bool| -> (Vec<S>, Vec<S>) {
        xs.iter().zip(ys).filter(|(x, _)| keep(**x)).map(|(x, y)| (*x, *y)).unzip()
    };
    let (ax, ay) = half(&|x| x <= mid);
    let (bx, by) = half(&|x| x >= mid);
    if ax.len() < 2 || bx.len() < 2 {
        return Ok(S::zero());
    }
    let a = exponent(fit_line(&ax, &ay)?.slope);
    let b = exponent(fit_line(&bx, &by)?.slope);
    Ok(S::lit(0.5) * (a - b).abs())
}

/// Window and sampling of the fitted `n` values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Inclusive `n` window; default `[⌈n_max^0.3⌉, ⌊n_max^0.8⌋]`.
    pub window: Option<(usize, usize)>,
    /// Geometrically spaced points instead of every integer in the window.
    pub points_per_decade: Option<usize>,
}

pub fn default_fit_window(n_max: usize) -> (usize, usize) {
    let n = n_max as f64;
    ((n.powf(0.3).ceil() as usize).max(1), n.powf(0.8).floor() as usize)
}

fn window_points(lo: usize, hi: usize, per_decade: Option<usize>) -> Vec<usize> {
    match per_decade {
        None => (lo..=hi).collect(),
        Some(k) => {
            let mut out: Vec<usize> = Vec::new();
            let mut j = 0;
            loop {
                let n = (lo as f64 * 10f64.powf(j as f64 / k as f64)).round() as usize;
                if n > hi {
                    break;
                }
                if out.last() != Some(&n) {
                    out.push(n);
                }
                j += 1;
            }
            out
        }
    }
}

const NON_DIVERGENT_EXPONENT: f64 = 0.1;

fn growth_is_small<S: Scalar>(values: &[S]) -> bool {
    let (lo, hi) = values.iter().fold((S::infinity(), S::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
    hi < S::lit(2.0) * lo
}

/// `P(|K| ≥ n) ≈ n^{−1/δ}`: slope of `log P` against `log n`, giving `δ̂ = −1/slope`.
pub fn fit_delta<S: Scalar>(tail: &TailCurve<S>, opts: &FitOptions) -> Result<PowerFit<S>> {
    let (lo, hi) = opts.window.unwrap_or_else(|| default_fit_window(tail.n_max()));
    let hi = hi.min(tail.n_max());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = Vec::new();
    for n in window_points(lo.max(1), hi, opts.points_per_decade) {
        let p = tail.at(n)?;
        if p > S::zero() {
            used.push(n);
            xs.push(S::from_count(n).ln());
            ys.push(p.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "fit window [{lo}, {hi}] has {} usable points, need ≥ 3",
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &ys)?;
    let exponent = -S::one() / fit.slope;
    let systematic = split_systematic(&xs, &ys, |s| -S::one() / s)?;
    Ok(PowerFit {
        systematic,
        exponent,
        stderr: fit.slope_stderr / (fit.slope * fit.slope),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        window: (S::from_count(used[0]), S::from_count(used[used.len() - 1])),
        points: xs.len(),
        non_divergent: !(fit.slope < S::zero()),
    })
}

fn distances_below<S: Scalar>(betas: &[S], beta_c: S) -> Result<Vec<S>> {
    if let Some(b) = betas.iter().find(|&&b| b >= beta_c) {
        return Err(Error::Domain(format!("grid point {b} is not below the critical point {beta_c}")));
    }
    Ok(betas.iter().map(|&b| (beta_c - b).ln()).collect())
}

/// `E|K| ≈ (β_c − β)^{−γ}` on a subcritical grid.
pub fn fit_gamma<S: Scalar>(betas: &[S], means: &[S], beta_c: S) -> Result<PowerFit<S>> {
    if betas.len() != means.len() {
        return Err(Error::Shape { expected: betas.len(), got: means.len() });
    }
    let xs = distances_below(betas, beta_c)?;
    if means.iter().any(|&m| !(m > S::zero())) {
        return Err(Error::Domain("means must be positive".into()));
    }
    let ys: Vec<S> = means.iter().map(|m| m.ln()).collect();
    let fit = fit_line(&xs, &ys)?;
    let exponent = -fit.slope;
    let systematic = split_systematic(&xs, &ys, |s| -s)?;
    Ok(PowerFit {
        systematic,
        exponent,
        stderr: fit.slope_stderr,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        window: x_range(betas),
        points: xs.len(),
        non_divergent: exponent < S::lit(NON_DIVERGENT_EXPONENT) || growth_is_small(means),
    })
}

fn x_range<S: Scalar>(betas: &[S]) -> (S, S) {
    (betas[0], betas[betas.len() - 1])
}

/// Gap exponent: slope of `log(E|K|^{k+1}/E|K|^k)` against `log(β_c − β)`
/// is `−Δ`; averaged over every `k` the tables allow.
pub fn fit_big_delta<S: Scalar>(betas: &[S], moments: &[MomentTable<S>], beta_c: S) -> Result<PowerFit<S>> {
    if betas.len() != moments.len() {
        return Err(Error::Shape { expected: betas.len(), got: moments.len() });
    }
    let xs = distances_below(betas, beta_c)?;
    let k_avail = moments.iter().map(|m| m.k_max()).min().unwrap_or(0);
    if k_avail < 2 {
        return Err(Error::InsufficientData(format!("need ≥ 2 moments, got {k_avail}")));
    }
    let mut fits = Vec::with_capacity(k_avail - 1);
    let mut systematic = S::zero();
    let mut first_ratios = Vec::new();
    for k in 1..k_avail {
        let ratios: Vec<S> = moments.iter().map(|m| m.moment(k + 1) / m.moment(k)).collect();
        if ratios.iter().any(|&r| !(r > S::zero())) {
            return Err(Error::Domain(format!("moment ratio of order {k} is not positive")));
        }
        if k == 1 {
            first_ratios = ratios.clone();
        }
        let ys: Vec<S> = ratios.iter().map(|r| r.ln()).collect();
        systematic += split_systematic(&xs, &ys, |s| -s)?;
        fits.push(fit_line(&xs, &ys)?);
    }
    let count = S::from_count(fits.len());
    let exponent = -fits.iter().map(|f| f.slope).sum::<S>() / count;
    let stderr = fits.iter().map(|f| f.slope_stderr * f.slope_stderr).sum::<S>().sqrt() / count;
    let r_squared = fits.iter().map(|f| f.r_squared).fold(S::one(), S::min);
    let intercept = fits.iter().map(|f| f.intercept).sum::<S>() / count;
    Ok(PowerFit {
        systematic: systematic / count,
        exponent,
        stderr,
        slope: -exponent,
        intercept,
        r_squared,
        window: x_range(betas),
        points: xs.len(),
        non_divergent: exponent < S::lit(NON_DIVERGENT_EXPONENT) || growth_is_small(&first_ratios),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalSource {
    Config,
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint<S> {
    pub value: S,
    pub source: CriticalSource,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentEstimates<S> {
    pub delta: Option<PowerFit<S>>,
    pub gamma: Option<PowerFit<S>>,
    pub big_delta: Option<PowerFit<S>>,
    pub critical: CriticalPoint<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport<S> {
    pub report: InequalityReport<S>,
    /// `|δ̂ − 1 − γ̂|` within twice the combined standard error.
    pub gamma_delta_saturated: Option<bool>,
    pub delta_gamma_saturated: Option<bool>,
    /// Both inequalities saturated, as at the mean-field values.
    pub mean_field: bool,
}

fn exponent_record<S: Scalar>(kind: CheckKind, small: &PowerFit<S>, big: &PowerFit<S>) -> (CheckRecord<S>, bool) {
    // small ≤ big + 1 - 1 or + 1 depending on kind; recorded as big-side ≥ small-side
    let shift = match kind {
        CheckKind::GammaDelta => -S::one(),
        _ => S::one(),
    };
    let (a, b) = (small.error(), big.error());
    let hw = S::lit(2.0) * (a * a + b * b).sqrt();
    let rhs_side = big.exponent + shift;
    let rec = CheckRecord::new(kind, (S::zero(), S::zero()), rhs_side, small.exponent, hw);
    let saturated = rec.margin.abs() <= hw + S::lit(EXACT_SLACK);
    (rec, saturated)
}

/// `γ ≤ δ − 1` and `Δ ≤ γ + 1`, each allowed twice the combined error
/// (statistical and window-split systematic, see [`PowerFit::error`]).
///
/// Records put the larger side in `lhs`: for `γ ≤ δ − 1`, `lhs = δ̂ − 1`, `rhs = γ̂`.
pub fn check_exponent_inequalities<S: Scalar>(est: &ExponentEstimates<S>, graph: GraphMeta, q: S) -> ExponentReport<S> {
    let mut report = InequalityReport::new(graph, q);
    let mut gd = None;
    let mut dg = None;
    if let (Some(g), Some(d)) = (&est.gamma, &est.delta) {
        let (rec, sat) = exponent_record(CheckKind::GammaDelta, g, d);
        report.records.push(rec.with_note("gamma <= delta - 1"));
        gd = Some(sat);
    }
    if let (Some(bd), Some(g)) = (&est.big_delta, &est.gamma) {
        let (rec, sat) = exponent_record(CheckKind::DeltaGamma, bd, g);
        report.records.push(rec.with_note("Delta <= gamma + 1"));
        dg = Some(sat);
    }
    ExponentReport {
        report,
        gamma_delta_saturated: gd,
        delta_gamma_saturated: dg,
        mean_field: gd == Some(true) && dg == Some(true),
    }
}

/// Tail hypothesis behind a moment bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentHypothesis<S> {
    /// `P(|K| ≥ n) ≤ C n^{−1/δ}`; exponent `(δ − 1) + (k − 1)δ`.
    Delta(S),
    /// `E|K| ≤ C(β₀ − β)^{−γ}`; exponent `γ + (k − 1)(γ + 1)`.
    Gamma(S),
}

impl<S: Scalar> MomentHypothesis<S> {
    pub fn exponent(&self, k: usize) -> S {
        let k1 = S::from_count(k - 1);
        match *self {
            Self::Delta(d) => (d - S::one()) + k1 * d,
            Self::Gamma(g) => g + k1 * (g + S::one()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentConstantReport<S> {
    /// `constants[k − 1][i]`: smallest `C″` with `E|K|^k ≤ k!·[C″/(β₀ − β_i)]^{e_k}`.
    pub constants: Vec<Vec<S>>,
    pub sup: S,
    pub inf: S,
    /// `sup/inf − 1`.
    pub variation: S,
    /// Variation below 50%.
    pub stable: bool,
    pub hypothesis: MomentHypothesis<S>,
    /// How the hypothesis was read, carried into the report text.
    pub reading: &'static str,
}

/// Fits the constant of the moment bound `E|K|^k ≤ k!·[C″/(β₀ − β)]^{e_k}` for `k = 1..=k_max`.
pub fn moment_bound_constant<S: Scalar>(
    betas: &[S],
    moments: &[MomentTable<S>],
    beta0: S,
    hypothesis: MomentHypothesis<S>,
    k_max: usize,
) -> Result<MomentConstantReport<S>> {
    if betas.len() != moments.len() {
        return Err(Error::Shape { expected: betas.len(), got: moments.len() });
    }
    if betas.is_empty() || k_max == 0 {
        return Err(Error::InsufficientData("no grid points or no moments".into()));
    }
    if let Some(b) = betas.iter().find(|&&b| b >= beta0) {
        return Err(Error::Domain(format!("grid point {b} is not below β₀ = {beta0}")));
    }
    if moments.iter().any(|m| m.k_max() < k_max) {
        return Err(Error::InsufficientData(format!("moment tables stop before k = {k_max}")));
    }
    let mut constants = Vec::with_capacity(k_max);
    let mut factorial = S::one();
    for k in 1..=k_max {
        factorial *= S::from_count(k);
        let e = hypothesis.exponent(k);
        if !(e > S::zero()) {
            return Err(Error::Domain(format!("bound exponent {e} at k = {k} is not positive")));
        }
        constants.push(
            betas.iter().zip(moments).map(|(&b, m)| (beta0 - b) * (m.moment(k) / factorial).powf(e.recip())).collect(),
        );
    }
    let all = constants.iter().flatten().copied();
    let (inf, sup) = all.fold((S::infinity(), S::neg_infinity()), |(a, b), c: S| (a.min(c), b.max(c)));
    let variation = sup / inf - S::one();
    let reading = match hypothesis {
        MomentHypothesis::Delta(_) => "tail hypothesis P(|K| ≥ n) ≤ C n^(−1/δ)",
        MomentHypothesis::Gamma(_) => "mean hypothesis E|K| ≤ C(β₀ − β)^(−γ), read with γ and an expectation",
    };
    Ok(MomentConstantReport { constants, sup, inf, variation, stable: variation < S::lit(0.5), hypothesis, reading })
}

/// Fit of `log P(|K| ≥ n) = log C − c·n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpTailFit<S> {
    pub rate: S,
    pub log_prefactor: S,
    pub r_squared: S,
    pub window: (usize, usize),
    pub points: usize,
    /// Fewer than 3 usable points.
    pub degenerate: bool,
    /// Non-decaying fit, or more than 5% of mass at half the tail range.
    pub supercritical: bool,
    /// `R² ≥ 0.98`, `c > 0` and not degenerate.
    pub passes: bool,
}

/// Minimum count at the top of a Monte Carlo exponential-tail window.
pub const EXP_TAIL_MIN_COUNT: u64 = 50;

/// Fits the large-`n` decay of a subcritical tail. The window ends at the
/// largest `n` with at least [`EXP_TAIL_MIN_COUNT`] observations (exact
/// curves: positive probability) and starts at `max(2, ⌈n_hi/3⌉)`.
pub fn check_exponential_tail<S: Scalar>(tail: &TailCurve<S>) -> Result<ExpTailFit<S>> {
    let usable = |v: S| match tail.provenance {
        Provenance::Exact => v > S::zero(),
        Provenance::MonteCarlo => (v.as_f64() * tail.samples as f64).round() as u64 >= EXP_TAIL_MIN_COUNT,
    };
    let n_hi = (1..=tail.n_max()).rev().find(|&n| usable(tail.values[n - 1])).unwrap_or(0);
    let n_lo = 2.max(n_hi.div_ceil(3));
    let half = tail.n_max().div_ceil(2).max(1);
    let heavy = tail.n_max() > 0 && tail.at(half)? > S::lit(0.05);
    let degenerate_fit = |window| ExpTailFit {
        rate: S::nan(),
        log_prefactor: S::nan(),
        r_squared: S::nan(),
        window,
        points: 0,
        degenerate: true,
        supercritical: heavy,
        passes: false,
    };
    if n_hi < n_lo + 2 {
        return Ok(degenerate_fit((n_lo, n_hi)));
    }
    let xs: Vec<S> = (n_lo..=n_hi).map(S::from_count).collect();
    let ys: Vec<S> = (n_lo..=n_hi).map(|n| tail.values[n - 1].ln()).collect();
    let fit = fit_line(&xs, &ys)?;
    let rate = -fit.slope;
    let supercritical = heavy || !(rate > S::zero());
    Ok(ExpTailFit {
        rate,
        log_prefactor: fit.intercept,
        r_squared: fit.r_squared,
        window: (n_lo, n_hi),
        points: xs.len(),
        degenerate: false,
        supercritical,
        passes: rate > S::zero() && fit.r_squared >= S::lit(0.98) && !supercritical,
    })
}

/// Bisection for the `β` where the mean largest cluster crosses
/// `0.5·|V|^{2/3}`. A heuristic; the result is labelled estimated.
pub fn estimate_critical_point<S, F>(
    mut mean_largest: F,
    n_vertices: usize,
    bracket: (S, S),
    iterations: usize,
) -> Result<CriticalPoint<S>>
where
    S: Scalar,
    F: FnMut(S) -> Result<S>,
{
    let target = S::lit(0.5 * (n_vertices as f64).powf(2.0 / 3.0));
    let (mut lo, mut hi) = bracket;
    if !(mean_largest(lo)? < target && mean_largest(hi)? >= target) {
        return Err(Error::Domain(format!("bracket [{lo}, {hi}] does not straddle the crossing")));
    }
    for _ in 0..iterations {
        let mid = S::lit(0.5) * (lo + hi);
        if mean_largest(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalPoint { value: S::lit(0.5) * (lo + hi), source: CriticalSource::Estimated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, complete_graph, cycle_graph, path_graph, LatticeSpec};
    use proptest::prelude::*;

    fn exact_tail_from(values: Vec<f64>) -> TailCurve<f64> {
        let n = values.len();
        TailCurve::from_values(values, vec![0.0; n], 0, Provenance::Exact)
    }

    fn single_edge() -> WeightedGraph<f64> {
        path_graph(2, 1.0).unwrap()
    }

    #[test]
    fn rhs_saturated_tail() {
        let ones = exact_tail_from(vec![1.0; 10]);
        let expect = -(-1f64).exp() / 2.0;
        for n in [1, 3, 7] {
            let (v, hw) = diffineq_rhs(&ones, n, 1.0).unwrap();
            assert!((v - expect).abs() < 1e-15);
            assert_eq!(hw, 0.0);
        }
        assert!(matches!(diffineq_rhs(&ones, 11, 1.0), Err(Error::Range(_))));
        assert!(matches!(diffineq_rhs(&ones, 6, 0.5), Err(Error::Range(_))));
        assert!(diffineq_rhs(&ones, 0, 1.0).is_err());
    }

    #[test]
    fn rhs_triangle_oracle() {
        // Independent enumeration of the triangle at q = 2, β = 1: edges 01, 12, 02.
        let (q, w) = (2.0f64, 1f64.exp() - 1.0);
        let mut weight = [0.0f64; 4];
        let mut z = 0.0;
        for mask in 0u32..8 {
            let open = mask.count_ones();
            let clusters = match open {
                0 => 3,
                1 => 2,
                _ => 1,
            };
            let touches_zero = mask & 0b101 != 0;
            let size = match open {
                0 => 1,
                1 if touches_zero => 2,
                1 => 1,
                _ => 3,
            };
            let x = q.powi(clusters) * w.powi(open as i32);
            weight[size] += x;
            z += x;
        }
        let tail = |m: usize| weight[m..].iter().sum::<f64>() / z;
        let expect = 0.5 * ((1.0 - (-1f64).exp()) * 3.0 / (tail(1) + tail(2) + tail(3)) - 1.0);
        let g = cycle_graph(3, 1.0).unwrap();
        let m = enumerate_measure(&g, ModelParams::new(1.0, 2.0).unwrap()).unwrap();
        let (v, _) = diffineq_rhs(&crate::exact::exact_tail(&m, 0), 3, 1.0).unwrap();
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn rhs_limit_examples() {
        assert_eq!(diffineq_rhs_limit(2.5f64, 0) + 0.5, 0.0);
        assert!(diffineq_rhs_limit(4.0f64, 4).abs() < 1e-15);
        assert!((diffineq_rhs_limit(1.0f64, 2) - 0.5).abs() < 1e-15);
        assert!((diffineq_rhs_limit(1.5f64, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rhs_tends_to_limit_as_lambda_shrinks() {
        let g = cycle_graph(5, 1.0).unwrap();
        let m = enumerate_measure(&g, ModelParams::<f64>::new(0.7, 2.0).unwrap()).unwrap();
        let tail = crate::exact::exact_tail(&m, 0);
        let mean = tail.partial_sum(5).unwrap().0;
        // n/λ must stay within the tail, so take n = 1 and λ with ⌈1/λ⌉ ≤ 5.
        let (v, _) = diffineq_rhs(&tail, 1, 0.2).unwrap();
        let (v1, _) = diffineq_rhs(&tail, 1, 1.0).unwrap();
        let lim = diffineq_rhs_limit(mean, 1);
        assert!((v - lim).abs() < (v1 - lim).abs());
    }

    #[test]
    fn log_derivative_examples() {
        let g = single_edge();
        let betas = [0.5, 0.5 + 1e-4];
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &betas, 0, 2).unwrap();
        let d = log_tail_derivative(&c, 2).unwrap();
        let b = 0.5f64;
        let closed = (-b).exp() / (1.0 - (-b).exp());
        assert!((d[0].value.unwrap() - closed).abs() < 1e-3);
        assert_eq!(log_tail_derivative(&c, 1).unwrap()[0].value, Some(0.0));

        let flat = BetaGridCurves { tails: vec![c.tails[0].clone(), c.tails[0].clone()], ..c.clone() };
        assert_eq!(log_tail_derivative(&flat, 2).unwrap()[0].value, Some(0.0));

        let zero = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &[0.0, 0.1], 0, 2).unwrap();
        let d = log_tail_derivative(&zero, 2).unwrap();
        assert_eq!(d[0].value, None);

        let one = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &[0.1], 0, 2).unwrap();
        assert!(matches!(log_tail_derivative(&one, 1), Err(Error::InsufficientData(_))));
    }

    fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect()
    }

    #[test]
    fn single_edge_diffineq_holds_exactly() {
        let g = single_edge();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &grid(0.05, 3.0, 30), 0, 2).unwrap();
        for form in [DiffIneqForm::FortuinKasteleyn, DiffIneqForm::Percolation] {
            let r = check_diffineq(&c, &[1, 2], &DiffIneqOptions { form, ..Default::default() }).unwrap();
            assert_eq!(r.counts().holds, r.records.len(), "{:?}", r.violations().next());
            assert!(r.records.iter().all(|x| x.half_width == 0.0));
        }
    }

    #[test]
    fn saturated_tail_interval_holds() {
        let g = complete_graph(4, 1.0).unwrap();
        let c = BetaGridCurves::exact(&g, 2.0, BoundaryKind::Free, &[6.0, 6.5], 0, 2).unwrap();
        assert!(c.tails[0].at(4).unwrap() > 0.99);
        let r = check_diffineq(&c, &[1, 2, 3, 4], &DiffIneqOptions::default()).unwrap();
        for rec in &r.records {
            assert!(rec.rhs < 0.0 && rec.lhs >= -1e-9, "{rec:?}");
            assert_eq!(rec.verdict, Verdict::Holds);
        }
    }

    fn transitive_graphs() -> Vec<WeightedGraph<f64>> {
        vec![
            cycle_graph(3, 1.0).unwrap(),
            cycle_graph(4, 1.0).unwrap(),
            cycle_graph(6, 1.0).unwrap(),
            complete_graph(4, 1.0).unwrap(),
            cycle_graph(5, 0.7).unwrap(),
        ]
    }

    #[test]
    fn exact_reports_hold_on_transitive_graphs() {
        for g in transitive_graphs() {
            let nv = g.n_vertices();
            let ns: Vec<usize> = (1..=nv).collect();
            for q in [1.0, 2.0, 3.5] {
                let betas = grid(0.1, 2.5, 16);
                let c = BetaGridCurves::exact(&g, q, BoundaryKind::Free, &betas, 0, 3).unwrap();
                assert_eq!(c.domination_violations(), 0);
                let mut all = InequalityReport::new(c.graph.clone(), q);
                for lambda in [0.5, 1.0, 2.0] {
                    let ns: Vec<usize> =
                        ns.iter().copied().filter(|&n| (n as f64 / lambda).ceil() as usize <= nv).collect();
                    all.extend(check_diffineq(&c, &ns, &DiffIneqOptions { lambda, ..Default::default() }).unwrap());
                    if q == 1.0 && c.uniform_coupling().is_some() {
                        let opts = DiffIneqOptions { lambda, form: DiffIneqForm::Percolation, ..Default::default() };
                        all.extend(check_diffineq(&c, &ns, &opts).unwrap());
                    }
                }
                all.extend(check_diffineq_limit(&c, &ns).unwrap());
                all.extend(check_integrated(&c, c.len() - 1).unwrap());
                all.extend(check_integrated(&c, 8).unwrap());
                if q == 1.0 && c.uniform_coupling().is_some() {
                    all.extend(menshikov_check(&c).unwrap());
                }
                let counts = all.counts();
                assert_eq!(counts.holds, counts.total(), "{} q={q}: {:?}", g.meta().name, all.violations().next());
                assert!(all.records.iter().all(|r| r.half_width == 0.0));
            }
        }
    }

    #[test]
    fn exact_torus_reports_hold() {
        let g = build_lattice(&LatticeSpec::torus(&[3, 3], 1.0)).unwrap();
        let ns: Vec<usize> = (1..=9).collect();
        for q in [1.0, 2.0] {
            let c = BetaGridCurves::exact(&g, q, BoundaryKind::Free, &grid(0.2, 1.4, 4), 0, 2).unwrap();
            let mut all = check_diffineq(&c, &ns, &DiffIneqOptions::default()).unwrap();
            all.extend(check_integrated(&c, 4).unwrap());
            if q == 1.0 {
                all.extend(menshikov_check(&c).unwrap());
            }
            assert_eq!(all.counts().holds, all.records.len());
        }
    }

    #[test]
    fn verdicts_stable_under_grid_refinement() {
        for g in transitive_graphs().into_iter().take(4) {
            let ns: Vec<usize> = (1..=g.n_vertices()).collect();
            for q in [1.0, 2.0] {
                let coarse = BetaGridCurves::exact(&g, q, BoundaryKind::Free, &grid(0.2, 2.2, 4), 0, 1).unwrap();
                let fine = BetaGridCurves::exact(&g, q, BoundaryKind::Free, &grid(0.2, 2.2, 40), 0, 1).unwrap();
                let rc = check_diffineq(&coarse, &ns, &DiffIneqOptions::default()).unwrap();
                let rf = check_diffineq(&fine, &ns, &DiffIneqOptions::default()).unwrap();
                assert!(!rc.has_violations() && !rf.has_violations());
                // Every coarse interval is a union of fine ones; the coarse forward
                // difference is the mean of the fine ones and so never smaller than the smallest.
                for n in &ns {
                    let dc = log_tail_derivative(&coarse, *n).unwrap();
                    let df = log_tail_derivative(&fine, *n).unwrap();
                    for (i, d) in dc.iter().enumerate() {
                        let parts = &df[i * 10..(i + 1) * 10];
                        let mean = parts.iter().map(|p| p.value.unwrap()).sum::<f64>() / 10.0;
                        assert!((d.value.unwrap() - mean).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn integrated_identity_and_vacuous_n1() {
        let g = cycle_graph(4, 1.0).unwrap();
        let c = BetaGridCurves::exact(&g, 2.0, BoundaryKind::Free, &[0.5, 1.0], 0, 1).unwrap();
        let c0 = c.c_at(1.0);
        assert_eq!(integrated_bound_tail(&c.tails[1], 1.0, 1.0, c0).unwrap(), c.tails[1]);
        assert_eq!(integrated_bound_mean(&c.tails[1], c.mean(1), 1.0, 1.0, c0).unwrap(), c.tails[1]);
        let b = integrated_bound_tail(&c.tails[1], 0.5, 1.0, c0).unwrap();
        let expect = ((-1f64).exp() * 0.5 / (2.0 * c0)).exp();
        assert!((b.at(1).unwrap() - expect).abs() < 1e-12);
        assert!(b.at(1).unwrap() >= 1.0);
        assert!(integrated_bound_tail(&c.tails[1], 1.5, 1.0, c0).is_err());
    }

    #[test]
    fn integrated_triangle_dominates() {
        let g = cycle_graph(3, 1.0).unwrap();
        let c = BetaGridCurves::exact(&g, 2.0, BoundaryKind::Free, &[0.5, 1.0], 0, 1).unwrap();
        let c0 = (1f64).exp() - 1.0;
        let b = integrated_bound_tail(&c.tails[1], 0.5, 1.0, c0).unwrap();
        let bm = integrated_bound_mean(&c.tails[1], c.mean(1), 0.5, 1.0, c0).unwrap();
        for n in 1..=3 {
            assert!(b.at(n).unwrap() >= c.tails[0].at(n).unwrap());
            assert!(bm.at(n).unwrap() >= c.tails[0].at(n).unwrap());
        }
    }

    #[test]
    fn integrated_mean_single_edge_closed_form() {
        // p₀ = 1/2 is β₀ = ln 2 with C(β₀) = 1 and E|K| = 3/2.
        let g = single_edge();
        let b0 = 2f64.ln();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &[0.0, b0], 0, 1).unwrap();
        assert!((c.mean(1).0 - 1.5).abs() < 1e-12);
        let bm = integrated_bound_mean(&c.tails[1], c.mean(1), 0.0, b0, 1.0).unwrap();
        let expect = 0.5 * (-b0 * 2.0 / 3.0 + b0 / 2.0).exp();
        assert!((bm.at(2).unwrap() - expect).abs() < 1e-12);
        assert!((bm.at(2).unwrap() - 0.5 * 2f64.powf(-1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn menshikov_examples() {
        let g = single_edge();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &grid(0.1, 2.0, 10), 0, 1).unwrap();
        let r = menshikov_check(&c).unwrap();
        assert_eq!(r.counts().holds, r.records.len());
        let n0: Vec<_> = r.records.iter().filter(|x| x.n == Some(0)).collect();
        assert!(n0.iter().all(|x| x.rhs < 0.0 && x.lhs == 0.0));
        // n = 1: RHS = (1/p)[1/(1 + p) − 1] with p at the right endpoint.
        let rec = r.records.iter().find(|x| x.n == Some(1)).unwrap();
        let p = rec.interval.1;
        assert!((rec.rhs - (1.0 / p) * (1.0 / (1.0 + p) - 1.0)).abs() < 1e-12);

        let fk = BetaGridCurves::exact(&g, 2.0, BoundaryKind::Free, &[0.1, 0.2], 0, 1).unwrap();
        assert!(matches!(menshikov_check(&fk), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn sharpness_examples() {
        let c = 1f64.exp() - 1.0;
        let b = sharpness_lower_bound(1.0, 0.5, c).unwrap();
        assert!((b - 0.1270).abs() < 5e-5, "{b}");
        assert!((sharpness_lower_bound(1.0 + 2.0 * c, 1.0, c).unwrap() - 0.5).abs() < 1e-15);
        assert!(sharpness_lower_bound(0.5 + 1e-9, 0.5, c).unwrap() < 1e-8);
        assert!(sharpness_lower_bound(0.5, 0.5, c).is_err());
    }

    #[test]
    fn sharpness_proxy_on_small_torus() {
        let g = build_lattice(&LatticeSpec::torus(&[3, 3], 1.0)).unwrap();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &[0.5, 1.0, 1.5], 0, 1).unwrap();
        let r = check_sharpness_proxy(&c, 0.69, 2.0 / 3.0).unwrap();
        assert_eq!(r.records.len(), 2);
        assert!(r.records.iter().all(|x| x.n == Some(5) && x.note.is_some()));
    }

    fn power_tail(n_max: usize, power: f64) -> TailCurve<f64> {
        exact_tail_from((1..=n_max).map(|n| (n as f64).powf(-power)).collect())
    }

    #[test]
    fn fit_delta_recovers_power_laws() {
        let f = fit_delta(&power_tail(1000, 0.5), &FitOptions::default()).unwrap();
        assert!((f.exponent - 2.0).abs() < 5e-4);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.systematic < 1e-9);
        assert_eq!(f.window, (8.0, 251.0));
        let f = fit_delta(&power_tail(1000, 5.0 / 91.0), &FitOptions::default()).unwrap();
        assert!((f.exponent - 18.2).abs() < 5e-4);
        let geo = FitOptions { points_per_decade: Some(10), ..Default::default() };
        let f = fit_delta(&power_tail(1000, 0.5), &geo).unwrap();
        assert!((f.exponent - 2.0).abs() < 5e-4);
        assert!(f.points < 20);
        let narrow = FitOptions { window: Some((5, 6)), ..Default::default() };
        assert!(matches!(fit_delta(&power_tail(10, 0.5), &narrow), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_gamma_and_big_delta() {
        let bc = 0.5;
        let betas = grid(0.1, 0.45, 8);
        let means: Vec<f64> = betas.iter().map(|b| 1.0 / (bc - b)).collect();
        let f = fit_gamma(&betas, &means, bc).unwrap();
        assert!((f.exponent - 1.0).abs() < 5e-4 && !f.non_divergent);
        assert!(matches!(fit_gamma(&betas, &means, 0.3), Err(Error::Domain(_))));

        let tables: Vec<MomentTable<f64>> = betas
            .iter()
            .map(|b| {
                let values = (1..=4).map(|k| (bc - b).powf(-((k as f64 - 1.0) * 2.0 + 1.0))).collect();
                MomentTable {
                    values,
                    half_widths: vec![0.0; 4],
                    samples: 0,
                    truncation: 0,
                    provenance: Provenance::Exact,
                }
            })
            .collect();
        let f = fit_big_delta(&betas, &tables, bc).unwrap();
        assert!((f.exponent - 2.0).abs() < 5e-4 && !f.non_divergent);

        let flat: Vec<MomentTable<f64>> = betas.iter().map(|_| tables[0].clone()).collect();
        let f = fit_big_delta(&betas, &flat, bc).unwrap();
        assert!(f.exponent.abs() < 1e-12 && f.non_divergent);
    }

    #[test]
    fn curvature_shows_up_as_systematic() {
        // Pure power law times a slowly varying correction.
        let t = exact_tail_from((1..=1000).map(|n| (n as f64).powf(-0.5) * (1.0 + 2.0 / n as f64)).collect());
        let f = fit_delta(&t, &FitOptions::default()).unwrap();
        assert!(f.systematic > 1e-3);
        assert!(f.error() >= f.stderr);
    }

    #[test]
    fn single_edge_mean_is_non_divergent() {
        let g = single_edge();
        let betas = grid(0.1, 3.0, 10);
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &betas, 0, 2).unwrap();
        let means: Vec<f64> = (0..c.len()).map(|i| c.mean(i).0).collect();
        assert!(fit_gamma(&betas, &means, 3.5).unwrap().non_divergent);
    }

    fn planted(exponent: f64, stderr: f64) -> PowerFit<f64> {
        PowerFit {
            exponent,
            stderr,
            slope: 0.0,
            intercept: 0.0,
            r_squared: 1.0,
            window: (0.0, 0.0),
            points: 0,
            systematic: 0.0,
            non_divergent: false,
        }
    }

    fn estimates(g: f64, d: f64, bd: Option<f64>) -> ExponentEstimates<f64> {
        ExponentEstimates {
            delta: Some(planted(d, 0.0)),
            gamma: Some(planted(g, 0.0)),
            big_delta: bd.map(|x| planted(x, 0.0)),
            critical: CriticalPoint { value: 0.5, source: CriticalSource::Config },
        }
    }

    #[test]
    fn exponent_inequality_examples() {
        let r = check_exponent_inequalities(&estimates(1.0, 2.0, Some(2.0)), GraphMeta::default(), 1.0);
        assert!(r.mean_field);
        assert_eq!(r.report.counts().holds, 2);

        let r = check_exponent_inequalities(&estimates(43.0 / 18.0, 91.0 / 5.0, None), GraphMeta::default(), 1.0);
        assert_eq!(r.report.records[0].verdict, Verdict::Holds);
        assert!((r.report.records[0].margin - (86.0 / 5.0 - 43.0 / 18.0)).abs() < 1e-12);
        assert_eq!(r.gamma_delta_saturated, Some(false));
        assert!(!r.mean_field);

        let r = check_exponent_inequalities(&estimates(3.0, 2.0, None), GraphMeta::default(), 1.0);
        assert_eq!(r.report.records[0].verdict, Verdict::Violated);

        let mut noisy = estimates(1.05, 2.0, None);
        noisy.gamma = Some(planted(1.05, 0.03));
        let r = check_exponent_inequalities(&noisy, GraphMeta::default(), 1.0);
        assert_eq!(r.report.records[0].verdict, Verdict::HoldsWithinNoise);
        assert_eq!(r.gamma_delta_saturated, Some(true));
    }

    #[test]
    fn moment_constant_examples() {
        let b0 = 1.0;
        let hyp = MomentHypothesis::Delta(2.0);
        let betas = grid(0.1, 0.9, 8);
        let tables: Vec<MomentTable<f64>> = betas
            .iter()
            .map(|b| {
                let mut f = 1.0;
                let values = (1..=4)
                    .map(|k| {
                        f *= k as f64;
                        f * (1.0 / (b0 - b)).powf(hyp.exponent(k))
                    })
                    .collect();
                MomentTable {
                    values,
                    half_widths: vec![0.0; 4],
                    samples: 0,
                    truncation: 0,
                    provenance: Provenance::Exact,
                }
            })
            .collect();
        let r = moment_bound_constant(&betas, &tables, b0, hyp, 4).unwrap();
        assert!((r.sup - 1.0).abs() < 1e-12 && (r.inf - 1.0).abs() < 1e-12 && r.stable);

        let g = single_edge();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &betas, 0, 4).unwrap();
        let r = moment_bound_constant(&c.betas, &c.moments, 1.5, MomentHypothesis::Gamma(1.0), 4).unwrap();
        assert!(r.sup.is_finite() && r.inf > 0.0);
        assert!(moment_bound_constant(&c.betas, &c.moments, 0.5, hyp, 4).is_err());
    }

    #[test]
    fn exponential_tail_examples() {
        let t = exact_tail_from((1..=30).map(|n| (-(n as f64)).exp()).collect());
        let f = check_exponential_tail(&t).unwrap();
        assert!((f.rate - 1.0).abs() < 1e-9 && (f.r_squared - 1.0).abs() < 1e-12 && f.passes);
        assert_eq!(f.window, (10, 30));

        let g = build_lattice(&LatticeSpec::torus(&[2, 2], 1.0)).unwrap();
        let c = BetaGridCurves::exact(&g, 1.0, BoundaryKind::Free, &[0.0], 0, 1).unwrap();
        let f = check_exponential_tail(&c.tails[0]).unwrap();
        assert!(f.degenerate && !f.passes);

        let flat = exact_tail_from(vec![0.9; 30]);
        assert!(check_exponential_tail(&flat).unwrap().supercritical);
    }

    #[test]
    fn monte_carlo_window_respects_counts() {
        let samples = 10_000u64;
        let values: Vec<f64> =
            (1..=40).map(|n| ((samples as f64) * (-(n as f64) / 3.0).exp()).floor() / samples as f64).collect();
        let t = TailCurve::from_values(values.clone(), vec![0.0; 40], samples, Provenance::MonteCarlo);
        let f = check_exponential_tail(&t).unwrap();
        let n_hi = f.window.1;
        assert!((values[n_hi - 1] * samples as f64).round() >= 50.0);
        assert!((values[n_hi] * samples as f64).round() < 50.0);
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(verdict(0.1, 0.0, 1.0), Verdict::Holds);
        assert_eq!(verdict(-1e-12, 0.0, 1.0), Verdict::Holds);
        assert_eq!(verdict(-0.05, 0.1, 1.0), Verdict::HoldsWithinNoise);
        assert_eq!(verdict(-0.2, 0.1, 1.0), Verdict::Violated);
        assert_eq!(verdict(f64::NAN, 0.1, 1.0), Verdict::Undetermined);
    }

    #[test]
    fn critical_point_bisection() {
        let n = 1000usize;
        let target = 0.5 * (n as f64).powf(2.0 / 3.0);
        let cp = estimate_critical_point(|b: f64| Ok(100.0 * b), n, (0.0, 1.0), 40).unwrap();
        assert!((cp.value - target / 100.0).abs() < 1e-9);
        assert_eq!(cp.source, CriticalSource::Estimated);
        assert!(estimate_critical_point(|b: f64| Ok(b), n, (0.0, 1.0), 10).is_err());
    }

    proptest! {
        #[test]
        fn rhs_decreases_in_partial_sums(
            values in proptest::collection::vec(0.01f64..1.0, 12),
            bump_at in 0usize..12,
            bump in 0.0f64..0.5,
            n in 1usize..=6,
            lambda in prop_oneof![Just(0.5f64), Just(1.0), Just(2.0)],
        ) {
            let t = exact_tail_from(values.clone());
            let mut raised = values;
            raised[bump_at] += bump;
            let t2 = exact_tail_from(raised);
            let (a, _) = diffineq_rhs(&t, n, lambda).unwrap();
            let (b, _) = diffineq_rhs(&t2, n, lambda).unwrap();
            prop_assert!(b <= a + 1e-15);
        }

        #[test]
        fn integrated_identity(values in proptest::collection::vec(0.01f64..1.0, 1..20), c0 in 0.1f64..5.0) {
            let t = exact_tail_from(values);
            let b = integrated_bound_tail(&t, 0.8, 0.8, c0).unwrap();
            prop_assert_eq!(&b, &t);
        }
    }
}
