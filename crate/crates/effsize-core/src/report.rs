//! Report documents and their serializations.
//!
//! Two rules are enforced mechanically at render time: p-values appear in
//! scientific notation at full precision, and the strings `"p <"` / `"p >"`
//! never occur in any output.

use serde_json::{json, Map, Value};

use crate::effectsize::EffectSizeReport;
use crate::error::Result;
use crate::resampling::{BootstrapInterval, StabilitySummary};

/// Run provenance embedded in every report.
#[derive(Debug, Clone, Default)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Caller-supplied timestamp; never wall clock, so identical invocations
    /// stay byte-identical.
    pub timestamp: Option<String>,
    /// FNV-1a 64 digest of the input bytes, when a dataset was read.
    pub dataset_digest: Option<String>,
}

/// What a command produced.
#[derive(Debug, Clone)]
pub enum ReportBody {
    EffectSize(EffectSizeReport),
    Bootstrap(BootstrapInterval),
    Stability(StabilitySummary),
}

#[derive(Debug, Clone)]
pub struct ReportDocument {
    pub metadata: ReportMetadata,
    /// Model-class tag: ols | multilevel | blackbox.
    pub variant: String,
    pub body: ReportBody,
    pub warnings: Vec<String>,
}

/// FNV-1a 64-bit content digest, hex encoded.
pub fn content_digest(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Exact p-value rendering: scientific notation, full f64 precision.
pub fn format_p(p: f64) -> String {
    format!("{p:.15e}")
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn opt_num(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

/// Renders one number exactly as serde_json would inside a document, so
/// Markdown cells and JSON fields agree byte for byte.
pub fn render_number(v: f64) -> String {
    num(v).to_string()
}

const NOT_APPLICABLE: &str = "not applicable";

fn effect_size_value(r: &EffectSizeReport) -> Value {
    let intervals: Vec<Value> = r
        .coefficient_intervals
        .iter()
        .map(|iv| {
            json!({
                "name": iv.name,
                "estimate": num(iv.estimate),
                "low": num(iv.low),
                "high": num(iv.high),
            })
        })
        .collect();

    let mut body = Map::new();
    body.insert("r2_A".into(), num(r.r2_a));
    body.insert("r2_AB".into(), num(r.r2_ab));
    body.insert(
        "adj_r2".into(),
        json!({
            "ezekiel": num(r.adj_r2_ezekiel),
            "olkin_pratt": num(r.adj_r2_olkin_pratt),
        }),
    );
    body.insert("f2_global".into(), num(r.f2_global));
    body.insert("f2_local".into(), num(r.f2_local));
    body.insert("label".into(), Value::String(r.label.as_str().into()));
    body.insert("F".into(), opt_num(r.f_stat));
    body.insert(
        "p".into(),
        match r.p_exact {
            Some(p) => Value::String(format_p(p)),
            None => Value::String(NOT_APPLICABLE.into()),
        },
    );
    body.insert(
        "df".into(),
        match (r.df1, r.df2) {
            (Some(a), Some(b)) => json!([a, b]),
            _ => Value::Null,
        },
    );
    body.insert(
        "intervals".into(),
        if intervals.is_empty() {
            Value::String(NOT_APPLICABLE.into())
        } else {
            Value::Array(intervals)
        },
    );
    body.insert("ci_level".into(), num(r.ci_level));
    body.insert(
        "ci_f2_local".into(),
        match r.ci_f2_local {
            Some((lo, hi)) => json!([num(lo), num(hi)]),
            None => Value::Null,
        },
    );
    body.insert("n".into(), json!(r.n));
    body.insert("q".into(), json!(r.q));
    body.insert("p_AB".into(), json!(r.p_ab));
    if let Some(tag) = &r.pseudo_r2_definition {
        body.insert("pseudo_r2_definition".into(), Value::String(tag.clone()));
    }
    Value::Object(body)
}

fn bootstrap_value(iv: &BootstrapInterval) -> Value {
    json!({
        "f2_local_point": num(iv.point),
        "ci_low": num(iv.low),
        "ci_high": num(iv.high),
        "level": num(iv.level),
        "replicates_used": iv.replicates_used,
        "replicates_skipped": iv.skipped,
    })
}

fn stability_value(s: &StabilitySummary) -> Value {
    let rows: Vec<Value> = s
        .rows
        .iter()
        .map(|r| {
            json!({
                "estimator": r.estimator,
                "n": r.n,
                "mean": num(r.mean),
                "sd": num(r.sd),
                "bias": num(r.bias),
                "population": num(r.population_value),
            })
        })
        .collect();
    json!({ "rows": rows })
}

/// Asserts the mechanical output rules before anything leaves the process.
fn check_output_rules(rendered: &str) {
    assert!(
        !rendered.contains("p <") && !rendered.contains("p >"),
        "threshold language must never appear in a report"
    );
}

impl ReportDocument {
    pub fn to_value(&self) -> Value {
        let meta = json!({
            "tool": self.metadata.tool,
            "version": self.metadata.version,
            "seed": self.metadata.seed,
            "timestamp": self.metadata.timestamp,
            "dataset_digest": self.metadata.dataset_digest,
        });
        let body = match &self.body {
            ReportBody::EffectSize(r) => effect_size_value(r),
            ReportBody::Bootstrap(iv) => bootstrap_value(iv),
            ReportBody::Stability(s) => stability_value(s),
        };
        json!({
            "metadata": meta,
            "variant": self.variant,
            "body": body,
            "warnings": self.warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let rendered = serde_json::to_string_pretty(&self.to_value())
            .expect("report values contain no non-serializable data");
        check_output_rules(&rendered);
        Ok(rendered)
    }

    pub fn to_markdown(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("# effsize report ({})\n\n", self.variant));
        match &self.body {
            ReportBody::EffectSize(r) => {
                out.push_str("| metric | value |\n|---|---|\n");
                out.push_str(&format!("| r2_A | {} |\n", render_number(r.r2_a)));
                out.push_str(&format!("| r2_AB | {} |\n", render_number(r.r2_ab)));
                out.push_str(&format!(
                    "| adj_r2_ezekiel | {} |\n",
                    render_number(r.adj_r2_ezekiel)
                ));
                out.push_str(&format!(
                    "| adj_r2_olkin_pratt | {} |\n",
                    render_number(r.adj_r2_olkin_pratt)
                ));
                out.push_str(&format!("| f2_global | {} |\n", render_number(r.f2_global)));
                out.push_str(&format!("| f2_local | {} |\n", render_number(r.f2_local)));
                out.push_str(&format!("| label | {} |\n", r.label));
                out.push_str(&format!(
                    "| F | {} |\n",
                    r.f_stat.map(render_number).unwrap_or_else(|| NOT_APPLICABLE.into())
                ));
                out.push_str(&format!(
                    "| p | {} |\n",
                    r.p_exact.map(format_p).unwrap_or_else(|| NOT_APPLICABLE.into())
                ));
                out.push_str(&format!("| n | {} |\n", r.n));
                out.push_str(&format!("| q | {} |\n", r.q));
                out.push_str(&format!("| p_AB | {} |\n", r.p_ab));
                if let Some(tag) = &r.pseudo_r2_definition {
                    out.push_str(&format!("| pseudo_r2_definition | {tag} |\n"));
                }
                if let Some((lo, hi)) = r.ci_f2_local {
                    out.push_str(&format!(
                        "| ci_f2_local | [{}, {}] |\n",
                        render_number(lo),
                        render_number(hi)
                    ));
                }
                out.push('\n');
                if r.coefficient_intervals.is_empty() {
                    out.push_str(&format!("Coefficient intervals: {NOT_APPLICABLE}\n"));
                } else {
                    out.push_str(&format!(
                        "## Coefficient intervals (level {})\n\n",
                        render_number(r.ci_level)
                    ));
                    out.push_str("| name | estimate | low | high |\n|---|---|---|---|\n");
                    for iv in &r.coefficient_intervals {
                        out.push_str(&format!(
                            "| {} | {} | {} | {} |\n",
                            iv.name,
                            render_number(iv.estimate),
                            render_number(iv.low),
                            render_number(iv.high)
                        ));
                    }
                }
            }
            ReportBody::Bootstrap(iv) => {
                out.push_str("| metric | value |\n|---|---|\n");
                out.push_str(&format!(
                    "| f2_local_point | {} |\n",
                    render_number(iv.point)
                ));
                out.push_str(&format!("| ci_low | {} |\n", render_number(iv.low)));
                out.push_str(&format!("| ci_high | {} |\n", render_number(iv.high)));
                out.push_str(&format!("| level | {} |\n", render_number(iv.level)));
                out.push_str(&format!("| replicates_used | {} |\n", iv.replicates_used));
                out.push_str(&format!("| replicates_skipped | {} |\n", iv.skipped));
            }
            ReportBody::Stability(s) => {
                out.push_str("| estimator | n | mean | sd | bias | population |\n");
                out.push_str("|---|---|---|---|---|---|\n");
                for r in &s.rows {
                    out.push_str(&format!(
                        "| {} | {} | {} | {} | {} | {} |\n",
                        r.estimator,
                        r.n,
                        render_number(r.mean),
                        render_number(r.sd),
                        render_number(r.bias),
                        render_number(r.population_value)
                    ));
                }
            }
        }
        if !self.warnings.is_empty() {
            out.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                out.push_str(&format!("- {w}\n"));
            }
        }
        let meta = &self.metadata;
        out.push_str(&format!(
            "\n---\ntool: {} {} | seed: {} | timestamp: {} | dataset digest: {}\n",
            meta.tool,
            meta.version,
            meta.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
            meta.timestamp.as_deref().unwrap_or("none"),
            meta.dataset_digest.as_deref().unwrap_or("none"),
        ));
        check_output_rules(&out);
        Ok(out)
    }

    /// CSV rendering; only defined for stability summaries.
    pub fn to_csv(&self) -> Option<String> {
        match &self.body {
            ReportBody::Stability(s) => {
                let rendered = s.to_csv();
                check_output_rules(&rendered);
                Some(rendered)
            }
            _ => None,
        }
    }

    /// Deduplicated warning list: module order preserved, repeats dropped.
    pub fn dedup_warnings(&mut self) {
        let mut seen = std::collections::HashSet::new();
        self.warnings.retain(|w| seen.insert(w.clone()));
    }
}
