//! End-to-end run: extraction, signature acquisition, assessment, repair,
//! validation and report assembly. Each project file is an independent task.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use walkdir::WalkDir;

use crate::benchgen::{build_corpus, compute_metrics, percent, score_corpus, ApiPair, MetricCounts};
use crate::callx::{bind_args, extract_calls, CallSite};
use crate::compat::{assess_call, CallVerdict, Overall};
use crate::libindex::{self, lookup_candidates, ApiIndex};
use crate::par::{self, ExecMode};
use crate::parammap::{establish_mapping_with, TypeChangeRules};
use crate::repair::{apply_repair, plan_repair, prune_candidates, rewrite_file, RepairPlan};
use crate::sidecar::{ReflectOutcome, SidecarClient};
use crate::sigmodel::{parse_signature, strip_receiver, ApiSignature, SignatureOrigin};
use crate::validate::{build_mirror, validate_dynamic, validate_static, DynamicCheck, DynamicEnv, RepairStatus, StaticCheck};

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use report::{Coverage, FileDiff, Report, ReportDiagnostic, ReportRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Fix,
}

/// Signature sources for both library versions.
pub struct Acquirer {
    pub current_index: Option<ApiIndex>,
    pub target_index: Option<ApiIndex>,
    pub reflect: Option<Reflect>,
}

pub struct Reflect {
    pub client: SidecarClient,
    pub current_env: PathBuf,
    pub target_env: PathBuf,
}

struct Candidates {
    pairs: Vec<(ApiSignature, ApiSignature)>,
    coverage: Coverage,
    notes: Vec<String>,
    missing: Option<String>,
}

impl Acquirer {
    pub fn from_config(config: &RunConfig, mode: ExecMode) -> Result<Acquirer> {
        let index = |source: &Option<PathBuf>, version: &str| -> Result<Option<ApiIndex>> {
            let Some(root) = source else { return Ok(None) };
            if !root.is_dir() {
                anyhow::bail!("library source {} is not a directory", root.display());
            }
            Ok(Some(match &config.index_cache_dir {
                Some(cache) => libindex::load_or_build(root, version, cache, mode)
                    .with_context(|| format!("indexing {}", root.display()))?,
                None => libindex::index_library_with(root, version, mode),
            }))
        };
        let reflect = if config.static_only {
            None
        } else {
            match (&config.sidecar_script, &config.current_env_path, &config.target_env_path) {
                (Some(script), Some(cur), Some(tgt)) => Some(Reflect {
                    client: SidecarClient::new(script),
                    current_env: cur.clone(),
                    target_env: tgt.clone(),
                }),
                _ => None,
            }
        };
        Ok(Acquirer {
            current_index: index(&config.current_library_source, &config.current_version)?,
            target_index: index(&config.target_library_source, &config.target_version)?,
            reflect,
        })
    }

    fn reflect_one(&self, r: &Reflect, env: &Path, site: &CallSite) -> Result<ApiSignature, String> {
        let (module, chain) = site.restored_path.split_once('.').unwrap_or((&site.restored_path, ""));
        match r.client.reflect_signature(env, module, chain) {
            Ok(ReflectOutcome::Signature(mut sig)) => {
                if site.receiver_chain.is_some() && !sig.self_stripped {
                    sig.self_stripped = strip_receiver(&mut sig.parameters);
                }
                Ok(sig)
            }
            Ok(ReflectOutcome::NoSignature(msg)) => Err(format!("no signature: {msg}")),
            Ok(ReflectOutcome::Failed(e)) => Err(format!("{}: {}", e.kind, e.message)),
            Err(e) => Err(e.to_string()),
        }
    }

    fn candidates(&self, site: &CallSite) -> Candidates {
        let mut notes = Vec::new();
        if let Some(r) = &self.reflect {
            let old = self.reflect_one(r, &r.current_env, site);
            let new = self.reflect_one(r, &r.target_env, site);
            match (old, new) {
                (Ok(o), Ok(n)) => {
                    return Candidates {
                        pairs: vec![(o, n)],
                        coverage: Coverage::Dynamic,
                        notes,
                        missing: None,
                    }
                }
                (o, n) => {
                    for e in [o.err(), n.err()].into_iter().flatten() {
                        notes.push(format!("reflection failed, static fallback: {e}"));
                    }
                }
            }
        }
        let empty = Vec::new();
        let old = self
            .current_index
            .as_ref()
            .map(|i| lookup_candidates(i, &site.restored_path))
            .unwrap_or_else(|| empty.clone());
        let new = self
            .target_index
            .as_ref()
            .map(|i| lookup_candidates(i, &site.restored_path))
            .unwrap_or(empty);
        let missing = match (old.is_empty(), new.is_empty()) {
            (true, true) => Some("no signature found in either version".to_string()),
            (true, false) => Some("no signature found in the current version".to_string()),
            (false, true) => Some("API not found in the target version".to_string()),
            (false, false) => None,
        };
        let mut pairs: Vec<(ApiSignature, ApiSignature)> = Vec::new();
        for o in &old {
            let same: Vec<_> = new.iter().filter(|n| n.actual_name == o.actual_name).collect();
            let partners = if same.is_empty() { new.iter().collect() } else { same };
            for n in partners {
                let dup = pairs
                    .iter()
                    .any(|(a, b)| a.parameters == o.signature.parameters && b.parameters == n.signature.parameters);
                if !dup {
                    pairs.push((o.signature.clone(), n.signature.clone()));
                }
            }
        }
        Candidates {
            pairs,
            coverage: if missing.is_some() { Coverage::None } else { Coverage::Static },
            notes,
            missing,
        }
    }
}

struct Planned {
    row: ReportRow,
    plan: Option<((usize, usize), RepairPlan)>,
}

fn unknown_row(site: &CallSite, file: &str, c: &Candidates, reason: String) -> ReportRow {
    ReportRow {
        file: file.to_string(),
        line: site.line,
        column: site.column,
        invocation_form: site.invocation_form,
        api: site.restored_path.clone(),
        call: site.call_text.clone(),
        coverage: c.coverage,
        old_signature: c.pairs.first().map(|p| p.0.render()),
        new_signature: c.pairs.first().map(|p| p.1.render()),
        candidates: c.pairs.len(),
        per_param: Vec::new(),
        overall: Overall::Unknown,
        unknown_reason: Some(reason),
        vpp_warning: false,
        repair: RepairStatus::NotAttempted,
        repaired_call: None,
        mirror: None,
        notes: c.notes.clone(),
        diff_ref: None,
    }
}

fn verdict_row(site: &CallSite, file: &str, c: &Candidates, pair: usize, verdict: &CallVerdict) -> ReportRow {
    let (old, new) = &c.pairs[pair];
    ReportRow {
        old_signature: Some(old.render()),
        new_signature: Some(new.render()),
        per_param: verdict.per_param.clone(),
        overall: verdict.overall,
        unknown_reason: verdict.unknown_reason.clone(),
        vpp_warning: verdict.vpp_warning(),
        ..unknown_row(site, file, c, String::new())
    }
}

/// Assess one call and, for `fix`, plan and validate its repair.
fn process_site(site: &CallSite, file: &str, acq: &Acquirer, command: Command, dynamic: Option<&DynamicEnv>) -> Planned {
    let c = acq.candidates(site);
    if let Some(reason) = &c.missing {
        return Planned {
            row: unknown_row(site, file, &c, reason.clone()),
            plan: None,
        };
    }
    if site.args.iter().any(|a| a.is_unpacking()) {
        return Planned {
            row: unknown_row(site, file, &c, "argument unpacking hides the passing method".into()),
            plan: None,
        };
    }
    let rules = TypeChangeRules::new();
    let pruned = prune_candidates(&c.pairs, &site.args, &rules);
    if pruned.bound == 0 {
        return Planned {
            row: unknown_row(site, file, &c, "call does not bind to any current-version signature".into()),
            plan: None,
        };
    }
    if pruned.survivors.is_empty() {
        // every binding candidate is unchanged or compatible: report the first
        let (idx, verdict) = c
            .pairs
            .iter()
            .enumerate()
            .find_map(|(i, (old, new))| {
                let binding = bind_args(&site.args, old).ok()?;
                Some((i, assess_call(&establish_mapping_with(old, new, &rules), &binding)))
            })
            .expect("bound > 0");
        return Planned {
            row: verdict_row(site, file, &c, idx, &verdict),
            plan: None,
        };
    }
    let first = &pruned.survivors[0];
    let mut row = verdict_row(site, file, &c, first.candidate, &first.verdict);
    if first.verdict.overall != Overall::Incompatible || command == Command::Check {
        return Planned { row, plan: None };
    }
    // try survivors in order; the first repair that validates wins
    let mut failures = Vec::new();
    for s in &pruned.survivors {
        let new_sig = &c.pairs[s.candidate].1;
        let attempt = plan_repair(&site.args, &s.binding, &s.dict, &s.verdict, new_sig, &[])
            .map_err(|e| e.to_string())
            .and_then(|mut plan| {
                plan.candidate_id = s.candidate;
                let repaired = apply_repair(&site.call_text, &plan).map_err(|e| e.to_string())?;
                let mirror = build_mirror(&repaired, new_sig, s.candidate).map_err(|e| e.to_string())?;
                Ok((plan, repaired, mirror))
            });
        let (plan, repaired, mirror) = match attempt {
            Ok(v) => v,
            Err(e) => {
                failures.push(e);
                continue;
            }
        };
        let static_check = validate_static(&mirror, new_sig);
        let dynamic_check = if static_check.passed() {
            validate_dynamic(&site.restored_path, site.receiver_chain.as_deref(), &repaired, dynamic)
        } else {
            DynamicCheck::Unavailable("static validation failed".into())
        };
        let status = if plan.partial {
            RepairStatus::Failed
        } else {
            RepairStatus::combine(&static_check, &dynamic_check)
        };
        match status {
            RepairStatus::Successful | RepairStatus::SuccessfulStaticOnly => {
                if s.candidate != first.candidate {
                    row = verdict_row(site, file, &c, s.candidate, &s.verdict);
                }
                if let DynamicCheck::Unavailable(why) = &dynamic_check {
                    row.notes.push(format!("dynamic validation unavailable: {why}"));
                }
                row.notes.extend(plan.suggestions.iter().cloned());
                row.repair = status;
                row.repaired_call = Some(repaired.text.clone());
                row.mirror = Some(mirror.render());
                return Planned {
                    row,
                    plan: Some((site.span, plan)),
                };
            }
            _ => {
                let mut why = match (&static_check, &dynamic_check) {
                    (StaticCheck::Fail(m), _) => format!("static validation: {m}"),
                    (_, DynamicCheck::Fail(m)) => format!("dynamic validation: {m}"),
                    _ => "partial repair".to_string(),
                };
                if plan.partial {
                    why = format!("partial repair: {}", plan.suggestions.join("; "));
                }
                failures.push(why);
            }
        }
    }
    row.repair = RepairStatus::Failed;
    row.notes.extend(failures);
    Planned { row, plan: None }
}

fn project_files(root: &Path) -> Vec<PathBuf> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !e
                    .file_name()
                    .to_str()
                    .is_some_and(|n| n.starts_with('.') || n == "__pycache__" || n == "site-packages")
        })
        .filter_map(std::result::Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "py"))
        .map(|e| e.into_path())
        .collect()
}

fn rel_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

struct FileResult {
    rows: Vec<ReportRow>,
    diff: Option<FileDiff>,
    diagnostics: Vec<ReportDiagnostic>,
}

fn process_file(
    root: &Path,
    path: &Path,
    acq: &Acquirer,
    config: &RunConfig,
    command: Command,
    dynamic: Option<&DynamicEnv>,
) -> FileResult {
    let name = rel_name(root, path);
    let mut result = FileResult {
        rows: Vec::new(),
        diff: None,
        diagnostics: Vec::new(),
    };
    let source = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            result.diagnostics.push(ReportDiagnostic {
                file: name,
                message: format!("unreadable: {e}"),
            });
            return result;
        }
    };
    let extraction = extract_calls(Path::new(&name), &source, &config.library_name);
    result.diagnostics.extend(extraction.diagnostics.iter().map(|d| ReportDiagnostic {
        file: name.clone(),
        message: d.message.clone(),
    }));
    let planned: Vec<Planned> = extraction
        .sites
        .iter()
        .map(|site| process_site(site, &name, acq, command, dynamic))
        .collect();
    let plans: Vec<((usize, usize), &RepairPlan)> =
        planned.iter().filter_map(|p| p.plan.as_ref().map(|(s, p)| (*s, p))).collect();
    let mut rows: Vec<ReportRow> = planned.iter().map(|p| p.row.clone()).collect();
    if !plans.is_empty() {
        match rewrite_file(&name, &source, &plans) {
            Ok(rw) => {
                let written = !config.dry_run && fs::write(path, &rw.content).is_ok();
                if !config.dry_run && !written {
                    result.diagnostics.push(ReportDiagnostic {
                        file: name.clone(),
                        message: "could not write repaired file".into(),
                    });
                }
                for (row, p) in rows.iter_mut().zip(&planned) {
                    if p.plan.is_some() {
                        row.diff_ref = Some(0);
                    }
                }
                result.diff = Some(FileDiff {
                    file: name.clone(),
                    diff: rw.diff,
                    written,
                });
            }
            Err(e) => {
                for (row, p) in rows.iter_mut().zip(&planned) {
                    if p.plan.is_some() {
                        row.repair = RepairStatus::Failed;
                        row.repaired_call = None;
                        row.notes.push(format!("rewrite failed: {e}"));
                    }
                }
            }
        }
    }
    result.rows = rows;
    result
}

/// Run `command` over the configured project.
pub fn run(config: &RunConfig, command: Command) -> Result<Report> {
    run_with(config, command, ExecMode::default())
}

pub fn run_with(config: &RunConfig, command: Command, mode: ExecMode) -> Result<Report> {
    config.validate()?;
    let root = &config.project_path;
    if !root.is_dir() {
        anyhow::bail!("project path {} is not a readable directory", root.display());
    }
    let acq = Acquirer::from_config(config, mode)?;
    let dynamic_env = match (&acq.reflect, command) {
        (Some(r), Command::Fix) => Some(DynamicEnv {
            client: &r.client,
            env_path: &r.target_env,
        }),
        _ => None,
    };
    let files = project_files(root);
    let results = par::with_threads(config.parallelism, || {
        par::map(mode, &files, |path| process_file(root, path, &acq, config, command, dynamic_env.as_ref()))
    });

    let mut rows = Vec::new();
    let mut diffs = Vec::new();
    let mut diagnostics = Vec::new();
    for mut r in results {
        if let Some(d) = r.diff {
            for row in &mut r.rows {
                row.diff_ref = row.diff_ref.map(|_| diffs.len());
            }
            diffs.push(d);
        }
        rows.extend(r.rows);
        diagnostics.extend(r.diagnostics);
    }
    for index in [&acq.current_index, &acq.target_index].into_iter().flatten() {
        diagnostics.extend(index.diagnostics.iter().map(|d| ReportDiagnostic {
            file: format!("{}@{}", d.path, index.version_tag),
            message: d.message.clone(),
        }));
    }
    Ok(Report {
        library: config.library_name.clone(),
        current_version: config.current_version.clone(),
        target_version: config.target_version.clone(),
        static_only: config.static_only,
        rng_seed: config.rng_seed,
        summary: Report::summarize(&rows),
        rows,
        files: diffs,
        diagnostics,
    })
}

/// One API entry of a bench input file.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchApi {
    pub name: String,
    pub old: String,
    pub new: String,
    pub base_values: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchReport {
    pub apis: usize,
    pub cases: usize,
    pub incompatible_cases: usize,
    pub counts: MetricCounts,
    pub precision: String,
    pub recall: String,
    pub f1: String,
    pub repair_precision: String,
}

/// Parse bench input: a JSON array of `{name, old, new, base_values}`.
pub fn parse_bench_apis(text: &str, config: &RunConfig) -> Result<Vec<ApiPair>> {
    let apis: Vec<BenchApi> = serde_json::from_str(text).context("bench input")?;
    apis.into_iter()
        .map(|a| {
            let sig = |text: &str, version: &str| {
                parse_signature(text, &a.name, version, SignatureOrigin::StaticSource, false)
                    .with_context(|| format!("signature of {}", a.name))
            };
            Ok(ApiPair {
                old: sig(&a.old, &config.current_version)?,
                new: sig(&a.new, &config.target_version)?,
                base_values: a.base_values,
            })
        })
        .collect()
}

/// Generate, label and score a mutation corpus from `bench_apis`.
pub fn run_bench(config: &RunConfig, mode: ExecMode) -> Result<BenchReport> {
    let input = config
        .bench_apis
        .as_ref()
        .ok_or_else(|| ConfigError {
            key: "bench_apis".into(),
            message: "required for bench".into(),
        })?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let apis = parse_bench_apis(&text, config)?;
    let cases = build_corpus(&apis, config.rng_seed, mode);
    if let Some(out) = &config.bench_corpus {
        let mut lines = String::new();
        for c in &cases {
            lines.push_str(&serde_json::to_string(c)?);
            lines.push('\n');
        }
        fs::write(out, lines).with_context(|| format!("writing {}", out.display()))?;
    }
    let counts = score_corpus(&cases, &apis, mode);
    let m = compute_metrics(&counts);
    Ok(BenchReport {
        apis: apis.len(),
        cases: cases.len(),
        incompatible_cases: cases.iter().filter(|c| c.label == Overall::Incompatible).count(),
        counts,
        precision: percent(m.precision),
        recall: percent(m.recall),
        f1: percent(m.f1),
        repair_precision: percent(m.repair_precision),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(root: &Path, rel: &str, text: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    fn fixture() -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        write(r, "old/networkx/__init__.py", "from .algorithms import *\n");
        write(r, "old/networkx/algorithms/__init__.py", "from .matching import *\n");
        write(
            r,
            "old/networkx/algorithms/matching.py",
            "def min_weight_matching(G, maxcardinality=False, weight=\"weight\"):\n    pass\n\ndef is_matching(G, matching):\n    pass\n",
        );
        write(r, "new/networkx/__init__.py", "from .algorithms import *\n");
        write(r, "new/networkx/algorithms/__init__.py", "from .matching import *\n");
        write(
            r,
            "new/networkx/algorithms/matching.py",
            "def min_weight_matching(G, weight=\"weight\"):\n    pass\n\ndef is_matching(G, matching):\n    pass\n",
        );
        write(
            r,
            "proj/main.py",
            "import networkx as nx\n\nG = nx.Graph()\nm = nx.min_weight_matching(G, None)\nok = nx.is_matching(G, m)\nw = nx.min_weight_matching(G)\n",
        );
        let config = parse_config(&format!(
            "project_path = {}\nlibrary_name = networkx\ncurrent_version = 2.8.8\ntarget_version = 3.0\nstatic_only = true\ncurrent_library_source = {}\ntarget_library_source = {}\n",
            r.join("proj").display(),
            r.join("old").display(),
            r.join("new").display()
        ))
        .unwrap();
        (dir, config)
    }

    #[test]
    fn listing4_project_is_detected_and_repaired() {
        let (dir, mut config) = fixture();
        let check = run(&config, Command::Check).unwrap();
        assert_eq!(check.rows.len(), 4);
        let bad: Vec<_> = check.rows.iter().filter(|r| r.overall == Overall::Incompatible).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].line, 4);
        assert_eq!(bad[0].repair, RepairStatus::NotAttempted);
        assert!(check.has_incompatibilities());

        config.dry_run = false;
        let fix = run(&config, Command::Fix).unwrap();
        let row = fix.rows.iter().find(|r| r.line == 4).unwrap();
        assert_eq!(row.repair, RepairStatus::SuccessfulStaticOnly);
        assert_eq!(row.repaired_call.as_deref(), Some("nx.min_weight_matching(G)"));
        assert_eq!(fix.files.len(), 1);
        assert!(fix.files[0].written);
        let text = fs::read_to_string(dir.path().join("proj/main.py")).unwrap();
        assert!(text.contains("m = nx.min_weight_matching(G)\n"));
        let again = run(&config, Command::Check).unwrap();
        assert!(!again.has_incompatibilities());
    }

    #[test]
    fn graph_constructor_without_signature_is_unknown() {
        let (_dir, config) = fixture();
        let report = run(&config, Command::Check).unwrap();
        let graph = report.rows.iter().find(|r| r.api == "networkx.Graph").unwrap();
        assert_eq!(graph.overall, Overall::Unknown);
        assert_eq!(graph.coverage, Coverage::None);
    }

    #[test]
    fn empty_project_and_bad_root() {
        let (dir, mut config) = fixture();
        fs::remove_file(dir.path().join("proj/main.py")).unwrap();
        let report = run(&config, Command::Check).unwrap();
        assert!(report.rows.is_empty());
        config.project_path = dir.path().join("missing");
        assert!(run(&config, Command::Check).is_err());
    }

    #[test]
    fn modes_produce_identical_reports() {
        let (_dir, config) = fixture();
        let a = run_with(&config, Command::Fix, ExecMode::Sequential).unwrap().to_json();
        let b = run_with(&config, Command::Fix, ExecMode::Parallel).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn bench_scores_fig18_api() {
        let (dir, mut config) = fixture();
        let input = dir.path().join("apis.json");
        fs::write(
            &input,
            r#"[{"name": "m.foo", "old": "(u, v, w=3, *, x, y=5, z=6)", "new": "(u, v, *, x, y=5)",
                "base_values": {"u": "1", "v": "2", "w": "3", "x": "4", "y": "5", "z": "6"}}]"#,
        )
        .unwrap();
        config.bench_apis = Some(input);
        config.bench_corpus = Some(dir.path().join("corpus.jsonl"));
        let report = run_bench(&config, ExecMode::Parallel).unwrap();
        assert_eq!(report.cases, 28);
        assert_eq!(fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap().lines().count(), 28);
        assert!(report.incompatible_cases > 0);
        assert_eq!(report.counts.fp + report.counts.fn_, 0);
    }
}
