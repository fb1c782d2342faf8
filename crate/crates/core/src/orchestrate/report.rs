//! Per-call report rows, JSON emission and the human-readable table.

use serde::Serialize;

use crate::callx::InvocationForm;
use crate::compat::{Overall, ParamVerdict};
use crate::validate::RepairStatus;

/// Where the signatures behind a verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Both versions reflected in their environments.
    Dynamic,
    /// Static index used for at least one version.
    Static,
    /// No signature found for at least one version.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub invocation_form: InvocationForm,
    pub api: String,
    pub call: String,
    pub coverage: Coverage,
    pub old_signature: Option<String>,
    pub new_signature: Option<String>,
    /// Number of candidate signature pairs considered.
    pub candidates: usize,
    pub per_param: Vec<ParamVerdict>,
    pub overall: Overall,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unknown_reason: Option<String>,
    pub vpp_warning: bool,
    pub repair: RepairStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repaired_call: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mirror: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Index into `Report::files` of the diff that contains this repair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_ref: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDiff {
    pub file: String,
    pub diff: String,
    pub written: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportDiagnostic {
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub calls: usize,
    pub compatible: usize,
    pub incompatible: usize,
    pub unknown: usize,
    pub repaired: usize,
    pub repair_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub library: String,
    pub current_version: String,
    pub target_version: String,
    pub static_only: bool,
    pub rng_seed: u64,
    pub summary: Summary,
    pub rows: Vec<ReportRow>,
    pub files: Vec<FileDiff>,
    pub diagnostics: Vec<ReportDiagnostic>,
}

impl Report {
    pub fn summarize(rows: &[ReportRow]) -> Summary {
        let mut s = Summary {
            calls: rows.len(),
            ..Summary::default()
        };
        for r in rows {
            match r.overall {
                Overall::Compatible => s.compatible += 1,
                Overall::Incompatible => s.incompatible += 1,
                Overall::Unknown => s.unknown += 1,
            }
            match r.repair {
                RepairStatus::Successful | RepairStatus::SuccessfulStaticOnly => s.repaired += 1,
                RepairStatus::Failed => s.repair_failed += 1,
                RepairStatus::NotAttempted => {}
            }
        }
        s
    }

    pub fn has_incompatibilities(&self) -> bool {
        self.summary.incompatible > 0
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Fixed-column table, one line per call.
    pub fn to_table(&self) -> String {
        let header = ["location", "form", "api", "coverage", "status", "repair", "incompatible params"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let params: Vec<String> = r
                    .per_param
                    .iter()
                    .filter(|v| v.verdict == crate::compat::Verdict::Incompatible)
                    .map(|v| format!("{}({},{},{})", v.param, v.p, v.e, v.m))
                    .collect();
                [
                    format!("{}:{}", r.file, r.line),
                    r.invocation_form.as_str().to_string(),
                    r.api.clone(),
                    serde_json::to_value(r.coverage)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    r.overall.to_string(),
                    r.repair.to_string(),
                    params.join(" "),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(header.to_vec());
        for row in &body {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "{} calls: {} compatible, {} incompatible, {} unknown; {} repaired, {} repair failures\n",
            s.calls, s.compatible, s.incompatible, s.unknown, s.repaired, s.repair_failed
        ));
        out
    }
}
