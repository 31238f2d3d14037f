//! The exhaustive small-graph oracle suite as a run directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use fklab_core::inequality::Verdict;
use fklab_core::suite::{
    derivative_suite, monotonicity_suite, osss_suite, planted_fit_suite, prop31_suite, small_graphs, suite_measures,
    SUITE_TOLERANCE,
};
use serde::Serialize;

use crate::output::{sha256_hex, RunDir, RunManifest, SeedSource, TaskEntry, TaskStatus};
use crate::pipeline::{DERIVATIVE_RATIO, DERIVATIVE_STEP, VERSION};

#[derive(Serialize)]
struct Line<'a, T> {
    check: &'a str,
    version: &'a str,
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    record: T,
}

fn push<T: Serialize>(buf: &mut Vec<u8>, check: &str, ok: bool, margin: Option<f64>, record: T) -> Result<()> {
    let verdict = if ok { Verdict::Holds } else { Verdict::Violated };
    serde_json::to_writer(&mut *buf, &Line { check, version: VERSION, verdict, margin, record })?;
    buf.push(b'\n');
    Ok(())
}

pub struct VerifyOutcome {
    pub dir: std::path::PathBuf,
    /// `(suite, passed, detail)`.
    pub suites: Vec<(String, bool, String)>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.1)
    }
}

pub fn run_verify(out: &Path, workers: Option<usize>) -> Result<VerifyOutcome> {
    let started = Instant::now();
    let mut dir = RunDir::create(out, "verify")?;
    let mut tasks = BTreeMap::new();
    let mut suites = Vec::new();
    let graphs = small_graphs();
    let measures = suite_measures(&graphs)?;
    let floor = -SUITE_TOLERANCE;

    let mut timed = |name: &str, f: &mut dyn FnMut() -> Result<(bool, String, Vec<u8>)>| -> Result<()> {
        let t = Instant::now();
        let (ok, detail, bytes) = f()?;
        dir.write(&format!("{name}.jsonl"), &bytes)?;
        tasks.insert(
            name.to_string(),
            TaskEntry { seed: 0, status: TaskStatus::Ok, millis: t.elapsed().as_millis() as u64, error: None },
        );
        suites.push((name.to_string(), ok, detail));
        Ok(())
    };

    timed("osss", &mut || {
        let reports = osss_suite(&measures)?;
        let mut buf = Vec::new();
        let mut ok = true;
        for r in &reports {
            let pass = r.holds && r.margin >= floor && r.forest_computes_g;
            ok &= pass;
            push(&mut buf, "osss", pass, Some(r.margin), r)?;
        }
        Ok((ok, format!("{} instances", reports.len()), buf))
    })?;
    timed("prop31", &mut || {
        let reports = prop31_suite(&measures)?;
        let mut buf = Vec::new();
        let mut ok = true;
        for r in &reports {
            let pass = r.holds && r.margin >= floor;
            ok &= pass;
            push(&mut buf, "prop31", pass, Some(r.margin), r)?;
        }
        Ok((ok, format!("{} instances", reports.len()), buf))
    })?;
    timed("derivative", &mut || {
        let cases = derivative_suite(&graphs, DERIVATIVE_STEP)?;
        let (lo, hi) = DERIVATIVE_RATIO;
        let mut buf = Vec::new();
        let mut ok = cases.len() >= 10;
        for c in &cases {
            let pass = c.report.ratio.is_some_and(|r| (lo..=hi).contains(&r));
            ok &= pass;
            push(&mut buf, "derivative", pass, c.report.ratio.map(|r| (r - lo).min(hi - r)), c)?;
        }
        Ok((ok, format!("{} instances", cases.len()), buf))
    })?;
    timed("monotonicity", &mut || {
        let m = monotonicity_suite(&measures)?;
        let ok = m.lattice_failures.is_empty() && m.monotonic_failures.is_empty() && m.parity_detected;
        let mut buf = Vec::new();
        push(&mut buf, "monotonicity", ok, None, &m)?;
        Ok((ok, format!("{} measures, parity counterexample detected: {}", m.measures, m.parity_detected), buf))
    })?;
    timed("planted-fits", &mut || {
        let fits = planted_fit_suite()?;
        let mut buf = Vec::new();
        let mut ok = true;
        for f in &fits {
            let err = (f.recovered - f.planted).abs();
            let pass = err < 5e-4;
            ok &= pass;
            push(&mut buf, "planted-fit", pass, Some(5e-4 - err), f)?;
        }
        Ok((ok, format!("{} planted exponents", fits.len()), buf))
    })?;

    let manifest = RunManifest {
        name: "verify".into(),
        version: VERSION.into(),
        config_hash: sha256_hex(b"builtin oracle suite"),
        seed: 0,
        seed_source: SeedSource::Config,
        workers,
        tasks,
        partial: false,
        total_millis: started.elapsed().as_millis() as u64,
        files: Vec::new(),
    };
    let (dir, _) = dir.finish(manifest)?;
    Ok(VerifyOutcome { dir, suites })
}
