//! Edit plans for incompatible calls, syntax-level application of a plan to a
//! call expression, candidate pruning, and textual splicing into files.

use serde::{Deserialize, Serialize};
use similar::TextDiff;
use thiserror::Error;

use crate::callx::{bind_args, parse_call, ArgBinding, ArgPassing, ArgTarget, ArgUse, Passing};
use crate::compat::{assess_call, CallVerdict, Overall, Verdict};
use crate::parammap::{establish_mapping_with, ChangeDict, ChangeKind, TypeChangeRules};
use crate::sigmodel::{ApiSignature, ParamKind};

/// Reference to one argument of the original call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgRef {
    Position(usize),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum EditOp {
    Delete { target: ArgRef },
    Rename { target: String, patch: String },
    #[serde(rename = "pos2key")]
    Pos2Key { target: usize, patch: String },
    PosChange { target: usize, patch: usize },
    Replace { target: ArgRef, patch: String },
}

/// User-supplied value migration: an argument bound to `param` whose text is
/// exactly `from` is rewritten to `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRule {
    pub param: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairPlan {
    pub candidate_id: usize,
    pub ops: Vec<EditOp>,
    /// Intended target in the new signature of each original argument;
    /// `None` for deleted arguments.
    pub intents: Vec<Option<ArgTarget>>,
    /// Some incompatibilities are left in place (added required parameters, type changes).
    pub partial: bool,
    pub suggestions: Vec<String>,
}

impl RepairPlan {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RepairError {
    #[error("unrepairable: {0}")]
    Unrepairable(String),
    #[error("target call not found: {0}")]
    TargetNotFound(String),
    #[error("conflicting edits at bytes {0}..{1}")]
    ConflictingEdits(usize, usize),
}

/// Derive the minimal edit plan for a call judged incompatible.
pub fn plan_repair(
    args: &[ArgUse],
    binding: &ArgBinding,
    dict: &ChangeDict,
    verdict: &CallVerdict,
    new_sig: &ApiSignature,
    rules: &[ValueRule],
) -> Result<RepairPlan, RepairError> {
    let incompatible = |name: &str, kind: ChangeKind| {
        verdict
            .per_param
            .iter()
            .any(|v| v.param == name && v.e == kind && v.verdict == Verdict::Incompatible)
    };
    let mut ops = Vec::new();
    let mut intents = vec![None; args.len()];
    let mut suggestions = Vec::new();
    let mut partial = false;

    // Positional pass: decide the final slot of every kept positional argument.
    let mut named_slots: Vec<(usize, usize, usize)> = Vec::new(); // (new index, position, arg)
    let mut var_slots: Vec<(usize, usize)> = Vec::new(); // (position, arg)
    for (i, arg) in args.iter().enumerate().filter(|(_, a)| a.passing == ArgPassing::Positional) {
        let j = arg.position;
        let old_name = match &binding.targets[i] {
            ArgTarget::Param(p) => p.clone(),
            _ => old_var_name(dict, ParamKind::VarPositional),
        };
        let target = dict.entry(&old_name).and_then(|e| e.mapped_to.clone());
        match target.as_deref().and_then(|t| new_sig.param(t)) {
            Some(n) if n.kind == ParamKind::KeywordOnly => {
                ops.push((i, EditOp::Pos2Key { target: j, patch: n.name.clone() }));
                intents[i] = Some(ArgTarget::Param(n.name.clone()));
            }
            Some(n) if n.kind == ParamKind::Positional => {
                named_slots.push((n.index, j, i));
                intents[i] = Some(ArgTarget::Param(n.name.clone()));
            }
            Some(_) => {
                var_slots.push((j, i));
                intents[i] = Some(ArgTarget::VarPositional);
            }
            None if dict.new_has_var_positional => {
                var_slots.push((j, i));
                intents[i] = Some(ArgTarget::VarPositional);
            }
            None => ops.push((i, EditOp::Delete { target: ArgRef::Position(j) })),
        }
    }
    named_slots.sort();
    let mut kept = 0;
    for &(new_index, j, i) in &named_slots {
        if new_index == kept {
            if new_index != j {
                ops.push((i, EditOp::PosChange { target: j, patch: new_index }));
            }
            kept += 1;
            continue;
        }
        // A gap before this slot: only a keyword can still reach the parameter.
        let Some(ArgTarget::Param(name)) = intents[i].clone() else { continue };
        if new_sig.param(&name).is_some_and(|p| p.positional_only) {
            partial = true;
            suggestions.push(format!("positional-only parameter '{name}' cannot be realigned"));
        } else {
            ops.push((i, EditOp::Pos2Key { target: j, patch: name }));
        }
    }
    if !var_slots.is_empty() && kept != new_sig.positional().count() {
        partial = true;
        suggestions.push("variadic positional arguments cannot be realigned".to_string());
    }

    // Keyword pass.
    for (i, arg) in args.iter().enumerate().filter(|(_, a)| a.passing == ArgPassing::Keyword) {
        let name = arg.keyword_name.clone().unwrap_or_default();
        let (old_name, through_var) = match &binding.targets[i] {
            ArgTarget::Param(p) => (p.clone(), false),
            _ => (old_var_name(dict, ParamKind::VarKeyword), true),
        };
        let entry = dict.entry(&old_name);
        let mapped = entry.and_then(|e| e.mapped_to.clone());
        match mapped {
            None => {
                if dict.new_has_var_keyword {
                    intents[i] = Some(ArgTarget::VarKeyword);
                } else {
                    ops.push((i, EditOp::Delete { target: ArgRef::Keyword(name) }));
                }
            }
            Some(_) if through_var => {
                let lands = new_sig.param(&name).filter(|p| p.accepts_keyword());
                intents[i] = Some(match lands {
                    Some(p) => ArgTarget::Param(p.name.clone()),
                    None => ArgTarget::VarKeyword,
                });
            }
            Some(to) if to != name => {
                if incompatible(&old_name, ChangeKind::Rename) {
                    ops.push((i, EditOp::Rename { target: name, patch: to.clone() }));
                    intents[i] = Some(ArgTarget::Param(to));
                } else {
                    intents[i] = Some(ArgTarget::VarKeyword);
                }
            }
            Some(to) => intents[i] = Some(ArgTarget::Param(to)),
        }
    }

    for rule in rules {
        for (i, arg) in args.iter().enumerate() {
            let bound_to = match &binding.targets[i] {
                ArgTarget::Param(p) => p.as_str(),
                _ => continue,
            };
            if bound_to == rule.param && arg.expr_text == rule.from && intents[i].is_some() {
                let target = match arg.passing {
                    ArgPassing::Keyword => ArgRef::Keyword(arg.keyword_name.clone().unwrap_or_default()),
                    _ => ArgRef::Position(arg.position),
                };
                ops.push((i, EditOp::Replace { target, patch: rule.to.clone() }));
            }
        }
    }
    ops.sort_by_key(|(i, _)| *i);

    // Incompatibilities no edit can fix.
    let mut fixable = 0;
    for v in verdict.incompatible_params() {
        match v.e {
            ChangeKind::AddedRequired => {
                partial = true;
                let ann = new_sig
                    .param(&v.param)
                    .or_else(|| dict.entry(&v.param).and_then(|e| e.mapped_to.as_deref()).and_then(|t| new_sig.param(t)))
                    .and_then(|p| p.annotation_text.clone());
                suggestions.push(match ann {
                    Some(a) => format!("supply required parameter '{}: {a}'", v.param),
                    None => format!("supply required parameter '{}'", v.param),
                });
            }
            ChangeKind::TypeChange => {
                partial = true;
                suggestions.push(format!("check the value passed to '{}' against its new type", v.param));
            }
            _ => fixable += 1,
        }
    }
    if fixable == 0 && verdict.overall == Overall::Incompatible {
        return Err(RepairError::Unrepairable(suggestions.join("; ")));
    }
    Ok(RepairPlan {
        candidate_id: 0,
        ops: ops.into_iter().map(|(_, op)| op).collect(),
        intents,
        partial,
        suggestions,
    })
}

fn old_var_name(dict: &ChangeDict, kind: ParamKind) -> String {
    dict.entries
        .iter()
        .find(|e| e.old_kind == kind)
        .map(|e| e.key.name.clone())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairedArg {
    pub value_text: String,
    pub keyword: Option<String>,
    pub intent: Option<ArgTarget>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairedCall {
    pub text: String,
    /// Callee text without the argument list.
    pub callee: String,
    pub args: Vec<RepairedArg>,
}

/// Apply a plan to the text of one call expression.
pub fn apply_repair(call_text: &str, plan: &RepairPlan) -> Result<RepairedCall, RepairError> {
    let call = parse_call(call_text).map_err(|e| RepairError::TargetNotFound(e.to_string()))?;
    if call.args.len() != plan.intents.len() {
        return Err(RepairError::TargetNotFound(format!(
            "expected {} arguments, found {}",
            plan.intents.len(),
            call.args.len()
        )));
    }
    let callee = call.head.trim_end_matches('(').trim_end().to_string();
    let verbatim = |a: &ArgUse| call_text[a.span.0..a.span.1].to_string();
    let replaced = |a: &ArgUse| {
        plan.ops.iter().find_map(|op| match op {
            EditOp::Replace { target, patch } if refers(target, a) => Some(patch.clone()),
            _ => None,
        })
    };

    // (is variadic, final slot, original position) orders the positional list
    let mut positional: Vec<((bool, usize, usize), String, RepairedArg)> = Vec::new();
    let mut generated: Vec<(String, RepairedArg)> = Vec::new();
    let mut keywords: Vec<(String, RepairedArg)> = Vec::new();

    for (i, a) in call.args.iter().enumerate() {
        let intent = plan.intents[i].clone();
        let value = replaced(a).unwrap_or_else(|| a.expr_text.clone());
        let deleted = plan
            .ops
            .iter()
            .any(|op| matches!(op, EditOp::Delete { target } if refers(target, a)));
        if deleted {
            continue;
        }
        match a.passing {
            ArgPassing::Positional | ArgPassing::StarArgs => {
                let j = a.position;
                let mut slot = (intent == Some(ArgTarget::VarPositional), j, j);
                let mut to_keyword = None;
                for op in &plan.ops {
                    match op {
                        EditOp::Pos2Key { target, patch } if *target == j => to_keyword = Some(patch.clone()),
                        EditOp::PosChange { target, patch } if *target == j => slot.1 = *patch,
                        _ => {}
                    }
                }
                if let Some(name) = to_keyword {
                    let text = format!("{name}={value}");
                    generated.push((text, RepairedArg { value_text: value, keyword: Some(name), intent }));
                } else {
                    let text = if a.passing == ArgPassing::StarArgs { verbatim(a) } else { value.clone() };
                    positional.push((slot, text, RepairedArg { value_text: value, keyword: None, intent }));
                }
            }
            ArgPassing::Keyword | ArgPassing::StarKwargs => {
                let name = a.keyword_name.clone();
                let renamed = plan.ops.iter().find_map(|op| match op {
                    EditOp::Rename { target, patch } if Some(target) == name.as_ref() => Some(patch.clone()),
                    _ => None,
                });
                let text = match (&renamed, replaced(a)) {
                    (None, None) => verbatim(a),
                    _ => format!("{}={value}", renamed.as_ref().or(name.as_ref()).cloned().unwrap_or_default()),
                };
                let keyword = renamed.or(name);
                keywords.push((text, RepairedArg { value_text: value, keyword, intent }));
            }
        }
    }

    if plan.ops.is_empty() {
        let args = positional.into_iter().map(|(_, _, a)| a).chain(keywords.into_iter().map(|(_, a)| a));
        return Ok(RepairedCall {
            text: call_text.to_string(),
            callee,
            args: args.collect(),
        });
    }
    positional.sort_by_key(|(slot, _, _)| *slot);
    let mut texts = Vec::new();
    let mut args = Vec::new();
    for (_, text, arg) in positional {
        texts.push(text);
        args.push(arg);
    }
    // keywords produced by pos2key precede the existing ones
    for (text, arg) in generated.into_iter().chain(keywords) {
        texts.push(text);
        args.push(arg);
    }
    Ok(RepairedCall {
        text: format!("{}{})", call.head, texts.join(", ")),
        callee,
        args,
    })
}

fn refers(target: &ArgRef, a: &ArgUse) -> bool {
    match target {
        ArgRef::Position(j) => a.passing == ArgPassing::Positional && a.position == *j,
        ArgRef::Keyword(k) => a.keyword_name.as_deref() == Some(k.as_str()),
    }
}

/// A candidate (old, new) signature pair that needs repair for a call.
#[derive(Debug, Clone)]
pub struct Survivor {
    pub candidate: usize,
    pub dict: ChangeDict,
    pub binding: ArgBinding,
    pub verdict: CallVerdict,
}

#[derive(Debug, Clone, Default)]
pub struct PruneResult {
    pub survivors: Vec<Survivor>,
    /// Number of candidate pairs whose old signature binds the call.
    pub bound: usize,
}

/// Discard candidate pairs that do not bind the call, are unchanged, or are
/// compatible for it.
pub fn prune_candidates(
    candidates: &[(ApiSignature, ApiSignature)],
    args: &[ArgUse],
    rules: &TypeChangeRules,
) -> PruneResult {
    let mut result = PruneResult::default();
    for (idx, (old, new)) in candidates.iter().enumerate() {
        let Ok(binding) = bind_args(args, old) else { continue };
        result.bound += 1;
        if old.parameters == new.parameters {
            continue;
        }
        let dict = establish_mapping_with(old, new, rules);
        let verdict = assess_call(&dict, &binding);
        if verdict.overall == Overall::Compatible {
            continue;
        }
        result.survivors.push(Survivor {
            candidate: idx,
            dict,
            binding,
            verdict,
        });
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRewrite {
    pub content: String,
    pub diff: String,
    pub hunks: usize,
}

/// Apply plans to their call spans in `source`. Nested calls are rewritten
/// inner first; the enclosing span grows or shrinks with each inner edit.
pub fn rewrite_file(name: &str, source: &str, plans: &[((usize, usize), &RepairPlan)]) -> Result<FileRewrite, RepairError> {
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(plans[i].0 .0), plans[i].0 .1));
    for w in 0..plans.len() {
        for v in w + 1..plans.len() {
            let (a, b) = (plans[w].0, plans[v].0);
            let nested = (a.0 <= b.0 && b.1 <= a.1) || (b.0 <= a.0 && a.1 <= b.1);
            let disjoint = a.1 <= b.0 || b.1 <= a.0;
            if a == b || !(nested || disjoint) {
                return Err(RepairError::ConflictingEdits(a.0.max(b.0), a.1.min(b.1)));
            }
        }
    }
    let mut content = source.to_string();
    let mut ends: Vec<usize> = plans.iter().map(|p| p.0 .1).collect();
    for &i in &order {
        let start = plans[i].0 .0;
        let end = ends[i];
        let repaired = apply_repair(&content[start..end], plans[i].1)?;
        content.replace_range(start..end, &repaired.text);
        let delta = repaired.text.len() as isize - (end - start) as isize;
        for (k, p) in plans.iter().enumerate() {
            if k != i && p.0 .0 <= start && plans[i].0 .1 <= p.0 .1 {
                ends[k] = (ends[k] as isize + delta) as usize;
            }
        }
    }
    let diff = TextDiff::from_lines(source, &content)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{name}"), &format!("b/{name}"))
        .to_string();
    let hunks = diff.lines().filter(|l| l.starts_with("@@")).count();
    Ok(FileRewrite { content, diff, hunks })
}

/// Passing method recorded for a parameter in a verdict (first match).
pub fn passing_in(verdict: &CallVerdict, param: &str) -> Option<Passing> {
    verdict.per_param.iter().find(|v| v.param == param).map(|v| v.m)
}
