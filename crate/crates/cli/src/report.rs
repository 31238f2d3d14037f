//! Summaries of finished run directories.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::output::{load_verified, RunManifest};
use crate::pipeline::ExponentsFile;

/// Fields of a result line that the summary needs.
#[derive(Deserialize)]
struct Line {
    check: String,
    verdict: String,
    #[serde(default)]
    margin: Option<f64>,
    record: serde_json::Value,
}

#[derive(Default)]
struct Tally {
    counts: BTreeMap<String, usize>,
    worst: Option<f64>,
}

pub struct Summary {
    pub text: String,
    pub violations: usize,
    pub failures: usize,
}

/// Verifies the directory against its manifest and summarizes it.
pub fn report(path: &Path) -> Result<Summary> {
    let (dir, manifest) = load_verified(path)?;
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut violations: Vec<(String, String)> = Vec::new();
    for f in manifest.files.iter().filter(|f| f.path.ends_with(".jsonl")) {
        let text = std::fs::read_to_string(dir.join(&f.path))?;
        for (i, raw) in text.lines().enumerate() {
            let line: Line = serde_json::from_str(raw).with_context(|| format!("{} line {}", f.path, i + 1))?;
            let t = tallies.entry(line.check.clone()).or_default();
            *t.counts.entry(line.verdict.clone()).or_default() += 1;
            if let Some(m) = line.margin.filter(|m| m.is_finite()) {
                t.worst = Some(t.worst.map_or(m, |w: f64| w.min(m)));
            }
            if line.verdict == "violated" {
                violations.push((format!("{}:{}", f.path, i + 1), compact(&line)));
            }
        }
    }
    let exponents: Option<ExponentsFile> = match manifest.files.iter().find(|f| f.path == "exponents.json") {
        Some(f) => Some(serde_json::from_str(&std::fs::read_to_string(dir.join(&f.path))?)?),
        None => None,
    };
    let text = render(&manifest, &tallies, &violations, exponents.as_ref());
    Ok(Summary { text, violations: violations.len(), failures: manifest.failures().count() })
}

fn compact(line: &Line) -> String {
    let mut s = format!("{} margin={}", line.check, line.margin.map_or("-".into(), |m| format!("{m:.6e}")));
    if let Some(obj) = line.record.as_object() {
        for key in ["interval", "beta", "n", "v", "lambda", "total_variation", "observable"] {
            if let Some(v) = obj.get(key).filter(|v| !v.is_null()) {
                let _ = write!(s, " {key}={v}");
            }
        }
    }
    s
}

fn render(
    manifest: &RunManifest,
    tallies: &BTreeMap<String, Tally>,
    violations: &[(String, String)],
    exponents: Option<&ExponentsFile>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run {} (version {}, seed {} from {:?})",
        manifest.name, manifest.version, manifest.seed, manifest.seed_source
    );
    let _ = writeln!(out, "config {}", manifest.config_hash);
    let _ = writeln!(out, "{} files verified", manifest.files.len());
    if violations.is_empty() {
        let _ = writeln!(out, "\n0 violations");
    } else {
        let _ = writeln!(out, "\n!!! {} VIOLATIONS !!!", violations.len());
        for (loc, what) in violations.iter().take(25) {
            let _ = writeln!(out, "  {loc}  {what}");
        }
        if violations.len() > 25 {
            let _ = writeln!(out, "  ... and {} more", violations.len() - 25);
        }
    }
    let failures: Vec<_> = manifest.failures().collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\nPARTIAL RUN: {} task(s) failed", failures.len());
        for (name, t) in failures {
            let _ = writeln!(out, "  {name}: {}", t.error.as_deref().unwrap_or("unknown error"));
        }
    }
    if !tallies.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<22} {:>8} {:>8} {:>8} {:>8} {:>14}",
            "check", "holds", "noise", "violated", "undet", "worst margin"
        );
        for (name, t) in tallies {
            let c = |k: &str| t.counts.get(k).copied().unwrap_or(0);
            let worst = t.worst.map_or("-".into(), |w| format!("{w:.6e}"));
            let _ = writeln!(
                out,
                "{:<22} {:>8} {:>8} {:>8} {:>8} {:>14}",
                name,
                c("holds"),
                c("holds-within-noise"),
                c("violated"),
                c("undetermined"),
                worst
            );
        }
    }
    if let Some(e) = exponents {
        let _ = writeln!(out, "\ncritical point {} ({})", e.critical, e.critical_source);
        let _ = writeln!(out, "{:<8} {:>10} {:>10} {:>10} {:>8}", "exponent", "estimate", "stderr", "system.", "R²");
        for r in &e.exponents {
            let _ = writeln!(
                out,
                "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>8.5}",
                r.name, r.estimate, r.stderr, r.systematic, r.r_squared
            );
        }
        let flag = |b: Option<bool>| b.map_or("n/a", |b| if b { "saturated" } else { "not saturated" });
        let _ = writeln!(out, "γ ≤ δ − 1: {}", flag(e.gamma_delta_saturated));
        let _ = writeln!(out, "Δ ≤ γ + 1: {}", flag(e.delta_gamma_saturated));
    }
    out
}
