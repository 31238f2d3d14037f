//! Experiment configuration, read from TOML.

use std::path::Path;

use anyhow::{bail, Context, Result};
use fklab_core::experiments::MeanFieldConfig;
use fklab_core::graph::{complete_graph, cycle_graph, path_graph};
use fklab_core::inequality::{DiffIneqForm, RhsEndpoint};
use fklab_core::samplers::{ConditionalRule, SamplerKind, SamplingPlan, DEFAULT_CFTP_MAX_UPDATES};
use fklab_core::{build_lattice, BoundaryKind, Graph, Lattice};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Parent of the run directories; `--out` overrides it.
    #[serde(default = "default_output")]
    pub output: String,
    /// Optional only for runs that just fit mean-field exponents.
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub ghost: GhostSpec,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub diffineq: DiffIneqSpec,
    #[serde(default)]
    pub critical: Option<CriticalSpec>,
    #[serde(default)]
    pub mean_field: Option<MeanFieldConfig>,
}

fn default_confidence() -> f64 {
    fklab_core::stats::DEFAULT_CONFIDENCE
}

fn default_output() -> String {
    "runs".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Torus {
        sides: Vec<usize>,
        #[serde(default = "one")]
        coupling: f64,
    },
    Box {
        sides: Vec<usize>,
        #[serde(default = "one")]
        coupling: f64,
    },
    Complete {
        n: usize,
        #[serde(default = "one")]
        coupling: f64,
    },
    Cycle {
        n: usize,
        #[serde(default = "one")]
        coupling: f64,
    },
    Path {
        n: usize,
        #[serde(default = "one")]
        coupling: f64,
    },
    /// Explicit `[u, v, J]` triples.
    Edges {
        vertices: usize,
        edges: Vec<(usize, usize, f64)>,
        #[serde(default)]
        name: Option<String>,
    },
}

fn one() -> f64 {
    1.0
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        let g = match self {
            GraphSpec::Torus { sides, coupling } => build_lattice(&Lattice::torus(sides, *coupling))?,
            GraphSpec::Box { sides, coupling } => build_lattice(&Lattice::boxed(sides, *coupling))?,
            GraphSpec::Complete { n, coupling } => complete_graph(*n, *coupling)?,
            GraphSpec::Cycle { n, coupling } => cycle_graph(*n, *coupling)?,
            GraphSpec::Path { n, coupling } => path_graph(*n, *coupling)?,
            GraphSpec::Edges { vertices, edges, name } => {
                let g = Graph::from_triples(*vertices, edges)?;
                g.with_meta(name.clone().unwrap_or_else(|| format!("edges-{vertices}")), false)
            }
        };
        Ok(g)
    }
}

/// Grid of values: `{ start, stop, step }` (inclusive) or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Grid::List(v) => Ok(v.clone()),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    bail!("grid needs step > 0 and stop ≥ start");
                }
                // Index-based so the endpoints do not drift.
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=count).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "one")]
    pub q: f64,
    /// `β` grid; exclusive with `p`.
    #[serde(default)]
    pub beta: Option<Grid>,
    /// Edge probabilities `p = 1 − e^{−βJ}`; needs uniform couplings.
    #[serde(default)]
    pub p: Option<Grid>,
    #[serde(default = "free")]
    pub boundary: BoundaryKind,
    /// Vertex whose cluster is tracked.
    #[serde(default)]
    pub vertex: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn free() -> BoundaryKind {
    BoundaryKind::Free
}

fn default_k_max() -> usize {
    3
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { q: 1.0, beta: None, p: None, boundary: BoundaryKind::Free, vertex: 0, k_max: default_k_max() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerName {
    Exact,
    Bernoulli,
    Cftp,
    Glauber,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(default = "exact")]
    pub kind: SamplerName,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default = "default_max_updates")]
    pub max_updates: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "one_u64")]
    pub thin: u64,
    #[serde(default = "one_u64")]
    pub per_replica: u64,
    #[serde(default)]
    pub rule: ConditionalRule,
    /// Total variation allowed by the `tv` check.
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
}

fn exact() -> SamplerName {
    SamplerName::Exact
}
fn default_replicas() -> u64 {
    10_000
}
fn default_max_updates() -> u64 {
    DEFAULT_CFTP_MAX_UPDATES
}
fn default_burn_in() -> u64 {
    100
}
fn one_u64() -> u64 {
    1
}
fn default_tv_tolerance() -> f64 {
    0.015
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            kind: SamplerName::Exact,
            replicas: default_replicas(),
            max_updates: default_max_updates(),
            burn_in: default_burn_in(),
            thin: 1,
            per_replica: 1,
            rule: ConditionalRule::Exact,
            tv_tolerance: default_tv_tolerance(),
        }
    }
}

impl SamplerSpec {
    /// `None` for the exact engine.
    pub fn plan(&self, seed: u64) -> Option<SamplingPlan> {
        let kind = match self.kind {
            SamplerName::Exact => return None,
            SamplerName::Bernoulli => SamplerKind::Bernoulli,
            SamplerName::Cftp => SamplerKind::Cftp { max_updates: self.max_updates },
            SamplerName::Glauber => {
                SamplerKind::Glauber { burn_in: self.burn_in, thin: self.thin, per_replica: self.per_replica }
            }
        };
        Some(SamplingPlan { kind, replicas: self.replicas, seed, connectivity: Default::default(), rule: self.rule })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostSpec {
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    /// Largest `n`; defaults to `|V|`.
    #[serde(default)]
    pub n_max: Option<usize>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl Default for GhostSpec {
    fn default() -> Self {
        Self { lambda: default_lambdas(), n_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffIneqSpec {
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub form: DiffIneqForm,
    #[serde(default)]
    pub endpoint: RhsEndpoint,
    /// Largest `n` checked; defaults to the tail length.
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Grid index of `β₀` for the integrated bounds; default every index but the first.
    #[serde(default)]
    pub beta0_index: Option<usize>,
}

impl Default for DiffIneqSpec {
    fn default() -> Self {
        Self { lambda: 1.0, form: Default::default(), endpoint: Default::default(), n_max: None, beta0_index: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    /// `β_c` (or `p_c` when the model grid is in `p`).
    pub value: f64,
    /// Tail proxy `P(|K| ≥ ⌈|V|^exponent⌉)` for the sharpness check.
    #[serde(default = "default_proxy_exponent")]
    pub proxy_exponent: f64,
}

fn default_proxy_exponent() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Writes the full probability table per grid point.
    Measure,
    /// Writes tail, moment and radius CSVs.
    Curves,
    Osss,
    Prop31,
    Derivative,
    Monotonicity,
    Diffineq,
    DiffineqLimit,
    Integrated,
    Menshikov,
    ExpTail,
    Sharpness,
    /// Sampler against the enumeration oracle.
    Tv,
    Exponents,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Measure => "measure",
            Check::Curves => "curves",
            Check::Osss => "osss",
            Check::Prop31 => "prop31",
            Check::Derivative => "derivative",
            Check::Monotonicity => "monotonicity",
            Check::Diffineq => "diffineq",
            Check::DiffineqLimit => "diffineq-limit",
            Check::Integrated => "integrated",
            Check::Menshikov => "menshikov",
            Check::ExpTail => "exp-tail",
            Check::Sharpness => "sharpness",
            Check::Tv => "tv",
            Check::Exponents => "exponents",
        }
    }

    /// Needs the full probability table.
    pub fn exact_only(self) -> bool {
        matches!(self, Check::Measure | Check::Osss | Check::Prop31 | Check::Derivative | Check::Monotonicity)
    }

    pub fn needs_curves(self) -> bool {
        matches!(
            self,
            Check::Curves
                | Check::Diffineq
                | Check::DiffineqLimit
                | Check::Integrated
                | Check::Menshikov
                | Check::ExpTail
                | Check::Sharpness
        )
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config field `{path}`: {}", e.into_inner().message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Semantic checks the schema cannot express; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("config field `name`: must be a non-empty file-name-safe string");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            bail!("config field `confidence`: must lie in (0, 1)");
        }
        let m = &self.model;
        if !(m.q >= 1.0) {
            bail!("config field `model.q`: must be ≥ 1, got {}", m.q);
        }
        let needs_grid = self.checks.iter().any(|c| !matches!(c, Check::Exponents));
        if needs_grid && self.graph.is_none() {
            bail!("config field `graph`: required by every check except `exponents`");
        }
        match (&m.beta, &m.p) {
            (Some(_), Some(_)) => bail!("config field `model`: give `beta` or `p`, not both"),
            (None, None) if needs_grid => bail!("config field `model.beta`: a β or p grid is required"),
            _ => {}
        }
        if let Some(b) = &m.beta {
            let v = b.values().context("config field `model.beta`")?;
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) || v.windows(2).any(|w| w[0] >= w[1]) {
                bail!("config field `model.beta`: must be non-empty, positive and increasing");
            }
        }
        if let Some(p) = &m.p {
            let v = p.values().context("config field `model.p`")?;
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && *x < 1.0)) || v.windows(2).any(|w| w[0] >= w[1]) {
                bail!("config field `model.p`: must be non-empty, inside (0, 1) and increasing");
            }
        }
        if self.sampler.kind == SamplerName::Bernoulli && m.q != 1.0 {
            bail!("config field `sampler.kind`: bernoulli needs model.q = 1");
        }
        if self.sampler.kind != SamplerName::Exact && self.sampler.replicas == 0 {
            bail!("config field `sampler.replicas`: must be positive");
        }
        if self.ghost.lambda.iter().any(|l| !(*l > 0.0)) {
            bail!("config field `ghost.lambda`: every λ must be positive");
        }
        if !(self.diffineq.lambda > 0.0) {
            bail!("config field `diffineq.lambda`: must be positive");
        }
        if self.checks.contains(&Check::Exponents) && self.mean_field.is_none() {
            bail!("config field `mean_field`: required by the `exponents` check");
        }
        if self.checks.contains(&Check::Sharpness) && self.critical.is_none() {
            bail!("config field `critical`: required by the `sharpness` check");
        }
        let mut seen = self.checks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.checks.len() {
            bail!("config field `checks`: duplicate entries");
        }
        Ok(())
    }

    /// The `β` grid, converting `p` through the (uniform) coupling.
    pub fn betas(&self, g: &Graph) -> Result<Vec<f64>> {
        match (&self.model.beta, &self.model.p) {
            (Some(b), _) => b.values(),
            (None, Some(p)) => {
                let js = g.couplings();
                let j = js[0];
                if js.iter().any(|&x| x != j) {
                    bail!("config field `model.p`: needs uniform couplings");
                }
                Ok(p.values()?.into_iter().map(|p| -(-p).ln_1p() / j).collect())
            }
            (None, None) => Ok(Vec::new()),
        }
    }
}
