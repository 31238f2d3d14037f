//! Executes the checks of a configuration and writes the result files.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use fklab_core::exact::ExactMeasure;
use fklab_core::experiments::{mean_field_run, monte_carlo_curves};
use fklab_core::ghost::{verify_prop31, GhostParams, OsssTable};
use fklab_core::inequality::{
    check_diffineq, check_diffineq_limit, check_exponential_tail, check_integrated, check_sharpness_proxy,
    menshikov_check, DiffIneqOptions, Verdict,
};
use fklab_core::samplers::{grid_seed, validate_sampler};
use fklab_core::suite::observables;
use fklab_core::{
    check_fkg_lattice, check_monotonic, enumerate_measure, verify_derivative_formula, Curves, Graph, GraphMeta, Params,
    Report,
};
use serde::Serialize;

use crate::config::{Check, ExperimentConfig, SamplerName};
use crate::output::{sha256_hex, RunDir, RunManifest, SeedSource, TaskEntry, TaskStatus};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Finite-difference step of the `derivative` check.
pub const DERIVATIVE_STEP: f64 = 0.05;
/// Accepted range for the gap ratio under step halving.
pub const DERIVATIVE_RATIO: (f64, f64) = (3.5, 4.5);

/// Seed of one named task, independent of which other tasks run.
pub fn task_seed(master: u64, task: &str) -> u64 {
    let d = sha256_hex(task.as_bytes());
    let tag = u64::from_str_radix(&d[..16], 16).expect("hex digest");
    grid_seed(master ^ tag, 0)
}

/// One line of a `.jsonl` result file.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    check: &'a str,
    graph: &'a GraphMeta,
    q: f64,
    seed: u64,
    version: &'a str,
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    half_width: Option<f64>,
    record: T,
}

/// Output files of one task, held in memory until the task has succeeded.
#[derive(Default)]
struct TaskOutput {
    files: Vec<(String, Vec<u8>)>,
}

impl TaskOutput {
    fn csv(&mut self, name: String, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name, buf));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.files.push((name.to_string(), (serde_json::to_string_pretty(value)? + "\n").into_bytes()));
        Ok(())
    }
}

/// Accumulates one `.jsonl` file.
struct Lines<'a> {
    ctx: &'a Ctx<'a>,
    seed: u64,
    buf: Vec<u8>,
}

impl<'a> Lines<'a> {
    fn new(ctx: &'a Ctx<'a>, seed: u64) -> Self {
        Self { ctx, seed, buf: Vec::new() }
    }

    fn push<T: Serialize>(
        &mut self,
        check: &str,
        verdict: Verdict,
        margin: Option<f64>,
        half_width: Option<f64>,
        record: T,
    ) -> Result<()> {
        let env = Envelope {
            check,
            graph: self.ctx.graph.meta(),
            q: self.ctx.cfg.model.q,
            seed: self.seed,
            version: VERSION,
            verdict,
            margin,
            half_width,
            record,
        };
        serde_json::to_writer(&mut self.buf, &env)?;
        self.buf.push(b'\n');
        Ok(())
    }

    fn report(&mut self, report: &Report) -> Result<()> {
        for r in &report.records {
            let name = serde_json::to_value(r.check)?;
            let name = name.as_str().unwrap_or("check");
            self.push(name, r.verdict, Some(r.margin), Some(r.half_width), r)?;
        }
        Ok(())
    }

    fn into_file(self, out: &mut TaskOutput, name: &str) {
        out.files.push((format!("{name}.jsonl"), self.buf));
    }
}

fn holds(ok: bool) -> Verdict {
    if ok {
        Verdict::Holds
    } else {
        Verdict::Violated
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    graph: Graph,
    betas: Vec<f64>,
}

impl Ctx<'_> {
    fn params(&self, beta: f64) -> Result<Params> {
        Ok(Params::with_boundary(beta, self.cfg.model.q, self.cfg.model.boundary)?)
    }

    fn measures(&self) -> Result<Vec<ExactMeasure<f64>>> {
        self.betas.iter().map(|&b| Ok(enumerate_measure(&self.graph, self.params(b)?)?)).collect()
    }

    fn beta_of_p(&self, p: f64) -> f64 {
        -(-p).ln_1p() / self.graph.couplings()[0]
    }
}

/// Outcome of [`run_config`].
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub struct RunOptions {
    pub seed: u64,
    pub seed_source: SeedSource,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut effective = cfg.clone();
    effective.seed = opts.seed;
    let config_hash = sha256_hex(serde_json::to_string(&effective)?.as_bytes());
    let graph = match &cfg.graph {
        Some(spec) => spec.build().context("building graph")?,
        // Exponent-only runs never touch the graph; K_N itself would be too large.
        None => Graph::from_triples(1, &[])?.with_meta(mean_field_name(cfg), true),
    };
    if cfg.model.vertex >= graph.n_vertices() {
        bail!(
            "config field `model.vertex`: {} is not a vertex of a {}-vertex graph",
            cfg.model.vertex,
            graph.n_vertices()
        );
    }
    let betas = cfg.betas(&graph)?;
    let ctx = Ctx { cfg: &effective, graph, betas };
    let mut dir = RunDir::create(&opts.out, &cfg.name)?;
    let mut tasks = BTreeMap::new();

    // Shared Monte Carlo or exact curves, computed once for every check that needs them.
    let needs_curves = cfg.checks.iter().any(|c| c.needs_curves());
    let curves: Option<std::result::Result<Curves, String>> = needs_curves.then(|| {
        let seed = task_seed(opts.seed, "curves");
        let t = Instant::now();
        let r = isolate(|| build_curves(&ctx, seed));
        let entry = task_entry(seed, t, r.as_ref().err().cloned());
        tasks.insert("curves".to_string(), entry);
        r
    });

    for &check in &cfg.checks {
        let seed = task_seed(opts.seed, check.name());
        let t = Instant::now();
        let r = isolate(|| run_check(&ctx, check, seed, curves.as_ref()));
        let err = match r {
            Ok(out) => {
                let mut err = None;
                for (name, bytes) in out.files {
                    if let Err(e) = dir.write(&name, &bytes) {
                        err = Some(format!("{e:#}"));
                        break;
                    }
                }
                err
            }
            Err(e) => Some(e),
        };
        if let Some(e) = &err {
            log::error!("check {} failed: {e}", check.name());
        }
        tasks.insert(check.name().to_string(), task_entry(seed, t, err));
    }

    let partial = tasks.values().any(|t: &TaskEntry| t.status == TaskStatus::Failed);
    let manifest = RunManifest {
        name: cfg.name.clone(),
        version: VERSION.to_string(),
        config_hash,
        seed: opts.seed,
        seed_source: opts.seed_source,
        workers: opts.workers,
        tasks,
        partial,
        total_millis: started.elapsed().as_millis() as u64,
        files: Vec::new(),
    };
    let (dir, manifest) = dir.finish(manifest)?;
    Ok(RunOutcome { dir, manifest })
}

fn mean_field_name(cfg: &ExperimentConfig) -> String {
    cfg.mean_field.as_ref().map_or("none".into(), |m| format!("complete-{}", m.n_vertices))
}

fn task_entry(seed: u64, t: Instant, err: Option<String>) -> TaskEntry {
    TaskEntry {
        seed,
        status: if err.is_some() { TaskStatus::Failed } else { TaskStatus::Ok },
        millis: t.elapsed().as_millis() as u64,
        error: err,
    }
}

/// Runs `f`, turning both errors and panics into a message.
fn isolate<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(format!("{e:#}")),
        Err(p) => Err(p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into())),
    }
}

fn build_curves(ctx: &Ctx, seed: u64) -> Result<Curves> {
    let cfg = ctx.cfg;
    let m = &cfg.model;
    let with_radius = cfg.checks.contains(&Check::Menshikov) || cfg.checks.contains(&Check::Curves);
    match cfg.sampler.plan(seed) {
        None => Ok(Curves::exact(&ctx.graph, m.q, m.boundary, &ctx.betas, m.vertex, m.k_max)?),
        Some(plan) => Ok(monte_carlo_curves(
            &ctx.graph,
            m.q,
            m.boundary,
            &ctx.betas,
            &plan,
            m.vertex,
            with_radius,
            m.k_max,
            cfg.confidence,
        )?),
    }
}

fn run_check(
    ctx: &Ctx,
    check: Check,
    seed: u64,
    curves: Option<&std::result::Result<Curves, String>>,
) -> Result<TaskOutput> {
    let mut out = TaskOutput::default();
    let curves = || -> Result<&Curves> {
        match curves {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(anyhow!("curves unavailable: {e}")),
            None => Err(anyhow!("curves were not computed")),
        }
    };
    let cfg = ctx.cfg;
    if check.needs_curves() && !ctx.graph.meta().transitive && check != Check::Curves {
        log::warn!(
            "{}: graph is not marked vertex-transitive; bounds for a single vertex are not guaranteed",
            check.name()
        );
    }
    match check {
        Check::Measure => {
            for (i, m) in ctx.measures()?.iter().enumerate() {
                out.csv(format!("measure-b{i}.csv"), |w| m.write_csv(w))?;
            }
        }
        Check::Curves => {
            let c = curves()?;
            out.csv("grid.csv".into(), |w| {
                use std::io::Write;
                writeln!(w, "index,beta")?;
                for (i, b) in c.betas.iter().enumerate() {
                    writeln!(w, "{i},{b}")?;
                }
                Ok(())
            })?;
            for i in 0..c.len() {
                out.csv(format!("tail-b{i}.csv"), |w| c.tails[i].write_csv(w))?;
                out.csv(format!("moments-b{i}.csv"), |w| c.moments[i].write_csv(w))?;
                if let Some(r) = &c.radius_tails {
                    out.csv(format!("radius-b{i}.csv"), |w| r[i].write_csv(w))?;
                }
            }
        }
        Check::Osss => {
            let mut lines = Lines::new(ctx, seed);
            let nv = ctx.graph.n_vertices();
            let n_max = cfg.ghost.n_max.unwrap_or(nv);
            for m in ctx.measures()? {
                for &lambda in &cfg.ghost.lambda {
                    for n in 1..=n_max {
                        let table = OsssTable::compute(&m, &GhostParams::new(lambda, n)?)?;
                        for v in 0..nv {
                            let r = table.verify(v, n)?;
                            lines.push("osss", holds(r.holds), Some(r.margin), None, &r)?;
                        }
                    }
                }
            }
            lines.into_file(&mut out, "osss");
        }
        Check::Prop31 => {
            let mut lines = Lines::new(ctx, seed);
            let nv = ctx.graph.n_vertices();
            let n_max = cfg.ghost.n_max.unwrap_or(nv);
            for m in ctx.measures()? {
                for &lambda in &cfg.ghost.lambda {
                    for n in 1..=n_max {
                        for v in 0..nv {
                            let r = verify_prop31(&m, lambda, v, n)?;
                            lines.push("prop31", holds(r.holds), Some(r.margin), None, &r)?;
                        }
                    }
                }
            }
            lines.into_file(&mut out, "prop31");
        }
        Check::Derivative => {
            #[derive(Serialize)]
            struct Rec<'a> {
                observable: &'a str,
                #[serde(flatten)]
                report: fklab_core::exact::DerivativeReport<f64>,
            }
            let mut lines = Lines::new(ctx, seed);
            let (lo, hi) = DERIVATIVE_RATIO;
            for &beta in &ctx.betas {
                for (name, f) in observables() {
                    let g = &ctx.graph;
                    let report = verify_derivative_formula(g, ctx.params(beta)?, |c| f(g, c), DERIVATIVE_STEP)?;
                    let (verdict, margin) = match report.ratio {
                        Some(r) => (holds((lo..=hi).contains(&r)), Some((r - lo).min(hi - r))),
                        None => (Verdict::Undetermined, None),
                    };
                    lines.push("derivative", verdict, margin, None, Rec { observable: name, report })?;
                }
            }
            lines.into_file(&mut out, "derivative");
        }
        Check::Monotonicity => {
            #[derive(Serialize)]
            struct Rec {
                beta: f64,
                fkg_lattice: bool,
                monotonic: bool,
            }
            let mut lines = Lines::new(ctx, seed);
            for (m, &beta) in ctx.measures()?.iter().zip(&ctx.betas) {
                let rec =
                    Rec { beta, fkg_lattice: check_fkg_lattice(m).passed(), monotonic: check_monotonic(m).passed() };
                lines.push("monotonicity", holds(rec.fkg_lattice && rec.monotonic), None, None, rec)?;
            }
            lines.into_file(&mut out, "monotonicity");
        }
        Check::Diffineq => {
            let c = curves()?;
            let opts = DiffIneqOptions {
                lambda: cfg.diffineq.lambda,
                form: cfg.diffineq.form,
                endpoint: cfg.diffineq.endpoint,
            };
            let report = check_diffineq(c, &ns(ctx, c), &opts)?;
            let mut lines = Lines::new(ctx, seed);
            lines.report(&report)?;
            lines.into_file(&mut out, "diffineq");
        }
        Check::DiffineqLimit => {
            let c = curves()?;
            let report = check_diffineq_limit(c, &ns(ctx, c))?;
            let mut lines = Lines::new(ctx, seed);
            lines.report(&report)?;
            lines.into_file(&mut out, "diffineq-limit");
        }
        Check::Integrated => {
            let c = curves()?;
            let indices: Vec<usize> = match cfg.diffineq.beta0_index {
                Some(j) => vec![j],
                None => (1..c.len()).collect(),
            };
            let mut lines = Lines::new(ctx, seed);
            for j in indices {
                lines.report(&check_integrated(c, j)?)?;
            }
            lines.into_file(&mut out, "integrated");
        }
        Check::Menshikov => {
            let report = menshikov_check(curves()?)?;
            let mut lines = Lines::new(ctx, seed);
            lines.report(&report)?;
            lines.into_file(&mut out, "menshikov");
        }
        Check::ExpTail => {
            #[derive(Serialize)]
            struct Rec {
                beta: f64,
                #[serde(flatten)]
                fit: fklab_core::inequality::ExpTailFit<f64>,
            }
            let c = curves()?;
            let mut lines = Lines::new(ctx, seed);
            for (tail, &beta) in c.tails.iter().zip(&c.betas) {
                let fit = check_exponential_tail(tail)?;
                let verdict = if fit.passes {
                    Verdict::Holds
                } else if fit.degenerate || fit.supercritical {
                    Verdict::Undetermined
                } else {
                    Verdict::Violated
                };
                lines.push("exp-tail", verdict, Some(fit.r_squared - 0.98), None, Rec { beta, fit })?;
            }
            lines.into_file(&mut out, "exp-tail");
        }
        Check::Sharpness => {
            let crit = cfg.critical.as_ref().expect("validated");
            let beta_c = if cfg.model.p.is_some() { ctx.beta_of_p(crit.value) } else { crit.value };
            let report = check_sharpness_proxy(curves()?, beta_c, crit.proxy_exponent)?;
            let mut lines = Lines::new(ctx, seed);
            lines.report(&report)?;
            lines.into_file(&mut out, "sharpness");
        }
        Check::Tv => {
            #[derive(Serialize)]
            struct Rec {
                beta: f64,
                tolerance: f64,
                rule: fklab_core::samplers::ConditionalRule,
                #[serde(flatten)]
                tv: fklab_core::samplers::TvReport,
            }
            if cfg.sampler.kind == SamplerName::Exact {
                bail!("the tv check needs a Monte Carlo sampler");
            }
            let tol = cfg.sampler.tv_tolerance;
            let mut lines = Lines::new(ctx, seed);
            for (i, &beta) in ctx.betas.iter().enumerate() {
                let plan = cfg.sampler.plan(grid_seed(seed, i)).expect("not exact");
                let tv = validate_sampler(&ctx.graph, &ctx.params(beta)?, &plan, cfg.confidence)?;
                let margin = tol - tv.total_variation;
                let verdict = if margin >= 0.0 {
                    Verdict::Holds
                } else if margin >= -tv.half_width {
                    Verdict::HoldsWithinNoise
                } else {
                    Verdict::Violated
                };
                let hw = tv.half_width;
                lines.push(
                    "tv",
                    verdict,
                    Some(margin),
                    Some(hw),
                    Rec { beta, tolerance: tol, rule: cfg.sampler.rule, tv },
                )?;
            }
            lines.into_file(&mut out, "tv");
        }
        Check::Exponents => {
            let mut mf = cfg.mean_field.clone().expect("validated");
            mf.seed = seed;
            let run = mean_field_run(&mf, cfg.confidence)?;
            out.csv("mean-field-tail.csv".into(), |w| run.critical_tail.write_csv(w))?;
            out.json("exponents.json", &ExponentsFile::from_run(&run))?;
            let mut lines = Lines::new(ctx, seed);
            lines.report(&run.inequalities.report)?;
            lines.into_file(&mut out, "exponents");
        }
    }
    Ok(out)
}

fn ns(ctx: &Ctx, c: &Curves) -> Vec<usize> {
    let top = c.tails.iter().map(|t| t.n_max()).min().unwrap_or(0);
    (1..=ctx.cfg.diffineq.n_max.unwrap_or(top).min(top)).collect()
}

/// Contents of `exponents.json`.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct ExponentsFile {
    pub critical: f64,
    pub critical_source: String,
    pub exponents: Vec<ExponentRow>,
    pub gamma_delta_saturated: Option<bool>,
    pub delta_gamma_saturated: Option<bool>,
    pub mean_field: bool,
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct ExponentRow {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub systematic: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl ExponentsFile {
    fn from_run(run: &fklab_core::experiments::MeanFieldRun) -> Self {
        let e = &run.estimates;
        let rows = [("delta", e.delta), ("gamma", e.gamma), ("Delta", e.big_delta)]
            .into_iter()
            .filter_map(|(name, f)| {
                f.map(|f| ExponentRow {
                    name: name.into(),
                    estimate: f.exponent,
                    stderr: f.stderr,
                    systematic: f.systematic,
                    r_squared: f.r_squared,
                    window: f.window,
                    points: f.points,
                })
            })
            .collect();
        let source = serde_json::to_value(e.critical.source).ok().and_then(|v| v.as_str().map(String::from));
        Self {
            critical: e.critical.value,
            critical_source: source.unwrap_or_default(),
            exponents: rows,
            gamma_delta_saturated: run.inequalities.gamma_delta_saturated,
            delta_gamma_saturated: run.inequalities.delta_gamma_saturated,
            mean_field: run.inequalities.mean_field,
        }
    }
}

/// Resolves the seed: flag, then `FKLAB_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<(u64, SeedSource)> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(e) = env {
        let s = e.trim().parse().map_err(|_| anyhow!("FKLAB_SEED is not a u64: {e:?}"))?;
        return Ok((s, SeedSource::Env));
    }
    Ok((config, SeedSource::Config))
}

pub fn default_out(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output))
}
