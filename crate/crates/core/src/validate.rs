//! Validation of repaired calls: the static full-parameter mirror check and
//! dynamic execution through the sidecar.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rustpython_parser::ast::{self, Expr};
use serde::Serialize;
use thiserror::Error;

use crate::callx::{ArgBinding, ArgTarget, ArgUse};
use crate::parammap::ChangeDict;
use crate::pysrc;
use crate::repair::RepairedCall;
use crate::sidecar::{call_snippet, ExecOutcome, SidecarClient};
use crate::sigmodel::ApiSignature;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MirrorArg {
    pub name: String,
    pub value_text: String,
    /// Slot index for positionally passed arguments.
    pub position_claimed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MirrorCall {
    pub callee: String,
    pub args: Vec<MirrorArg>,
    pub plan_id: usize,
}

impl MirrorCall {
    pub fn render(&self) -> String {
        let args: Vec<String> = self.args.iter().map(|a| format!("{}={}", a.name, a.value_text)).collect();
        format!("{}({})", self.callee, args.join(", "))
    }
}

impl fmt::Display for MirrorCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("positional argument {position} has no parameter to bind to")]
pub struct ArityMismatch {
    pub position: usize,
}

/// Name every argument of a repaired call. Positional arguments take the name
/// of their intended parameter, or the parameter at their slot when no intent
/// is recorded.
pub fn build_mirror(call: &RepairedCall, new_sig: &ApiSignature, plan_id: usize) -> Result<MirrorCall, ArityMismatch> {
    let positional: Vec<_> = new_sig.positional().collect();
    let var = new_sig.var_positional().map(|v| format!("*{}", v.name));
    let mut args = Vec::with_capacity(call.args.len());
    let mut slot = 0;
    for a in &call.args {
        let (name, position_claimed) = match &a.keyword {
            Some(k) => (k.clone(), None),
            None => {
                let name = match &a.intent {
                    Some(ArgTarget::Param(n)) => n.clone(),
                    Some(ArgTarget::VarPositional) => var.clone().unwrap_or_else(|| "*".to_string()),
                    _ => match positional.get(slot) {
                        Some(p) => p.name.clone(),
                        None => var.clone().ok_or(ArityMismatch { position: slot })?,
                    },
                };
                slot += 1;
                (name, Some(slot - 1))
            }
        };
        args.push(MirrorArg {
            name,
            value_text: a.value_text.clone(),
            position_claimed,
        });
    }
    Ok(MirrorCall {
        callee: call.callee.clone(),
        args,
        plan_id,
    })
}

/// Intended targets of an unrepaired call: mapped parameters for surviving
/// arguments, the old name for arguments whose parameter was removed.
pub fn intents_without_repair(args: &[ArgUse], binding: &ArgBinding, dict: &ChangeDict) -> Vec<Option<ArgTarget>> {
    args.iter()
        .zip(&binding.targets)
        .map(|(_, t)| match t {
            ArgTarget::Param(old) => Some(ArgTarget::Param(
                dict.entry(old)
                    .and_then(|e| e.mapped_to.clone())
                    .unwrap_or_else(|| old.clone()),
            )),
            other => Some(other.clone()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "reason", rename_all = "snake_case")]
pub enum StaticCheck {
    Pass,
    Fail(String),
}

impl StaticCheck {
    pub fn passed(&self) -> bool {
        *self == StaticCheck::Pass
    }
}

pub fn validate_static(mirror: &MirrorCall, new_sig: &ApiSignature) -> StaticCheck {
    let positional: Vec<_> = new_sig.positional().collect();
    let mut seen = HashSet::new();
    for a in &mirror.args {
        if !seen.insert(a.name.as_str()) && !a.name.starts_with('*') {
            return StaticCheck::Fail(format!("duplicate argument '{}'", a.name));
        }
        match a.position_claimed {
            Some(slot) if a.name.starts_with('*') => {
                let declared = new_sig.var_positional().map(|v| format!("*{}", v.name));
                if declared.as_deref() != Some(a.name.as_str()) || slot < positional.len() {
                    return StaticCheck::Fail(format!("positional slot {slot} does not reach variadic '{}'", a.name));
                }
            }
            Some(slot) => {
                if new_sig.param(&a.name).is_none() {
                    return StaticCheck::Fail(format!("unknown name '{}'", a.name));
                }
                match positional.get(slot) {
                    Some(p) if p.name == a.name => {}
                    Some(p) => {
                        return StaticCheck::Fail(format!("position {slot} binds '{}', not '{}'", p.name, a.name))
                    }
                    None => return StaticCheck::Fail(format!("position {slot} exceeds positional parameters")),
                }
            }
            None => {
                let named = new_sig
                    .param(&a.name)
                    .filter(|p| !p.kind.is_variadic())
                    .is_some_and(|p| p.accepts_keyword());
                if !named && new_sig.var_keyword().is_none() {
                    return StaticCheck::Fail(format!("unknown name '{}'", a.name));
                }
            }
        }
    }
    if let Some(p) = new_sig
        .parameters
        .iter()
        .find(|p| p.is_required() && !seen.contains(p.name.as_str()))
    {
        return StaticCheck::Fail(format!("missing required parameter '{}'", p.name));
    }
    StaticCheck::Pass
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "detail", rename_all = "snake_case")]
pub enum DynamicCheck {
    Pass,
    Fail(String),
    Unavailable(String),
}

/// Environment handle for dynamic validation; `None` disables it.
pub struct DynamicEnv<'a> {
    pub client: &'a SidecarClient,
    pub env_path: &'a Path,
}

/// Execute the repaired call in the target environment. Only calls whose
/// callee is importable and whose arguments are literals can be rebuilt.
pub fn validate_dynamic(restored_path: &str, receiver: Option<&str>, repaired: &RepairedCall, env: Option<&DynamicEnv>) -> DynamicCheck {
    let Some(env) = env else {
        return DynamicCheck::Unavailable("dynamic validation off".into());
    };
    if receiver.is_some() {
        return DynamicCheck::Unavailable("receiver object cannot be reconstructed".into());
    }
    if let Some(a) = repaired.args.iter().find(|a| !is_literal(&a.value_text)) {
        return DynamicCheck::Unavailable(format!("argument '{}' is not a literal", a.value_text));
    }
    let args: Vec<String> = repaired
        .args
        .iter()
        .map(|a| match &a.keyword {
            Some(k) => format!("{k}={}", a.value_text),
            None => a.value_text.clone(),
        })
        .collect();
    let (module, chain) = restored_path.split_once('.').unwrap_or((restored_path, ""));
    let snippet = call_snippet(module, chain, &args.join(", "));
    match env.client.execute_snippet(env.env_path, &snippet) {
        Ok(ExecOutcome::Ok) => DynamicCheck::Pass,
        Ok(ExecOutcome::Error(e)) if e.kind == "ImportError" || e.kind == "ModuleNotFoundError" => {
            DynamicCheck::Unavailable(format!("{}: {}", e.kind, e.message))
        }
        Ok(ExecOutcome::Error(e)) => DynamicCheck::Fail(format!("{}: {}", e.kind, e.message)),
        Err(e) => DynamicCheck::Unavailable(e.to_string()),
    }
}

fn is_literal(text: &str) -> bool {
    fn lit(e: &Expr) -> bool {
        match e {
            Expr::Constant(_) => true,
            Expr::UnaryOp(u) => matches!(u.op, ast::UnaryOp::USub | ast::UnaryOp::UAdd) && lit(&u.operand),
            Expr::List(l) => l.elts.iter().all(lit),
            Expr::Tuple(t) => t.elts.iter().all(lit),
            Expr::Set(s) => s.elts.iter().all(lit),
            Expr::Dict(d) => d.keys.iter().flatten().all(lit) && d.values.iter().all(lit),
            _ => false,
        }
    }
    pysrc::parse_expr(text).map(|e| lit(&e)).unwrap_or(false)
}

/// Terminal repair status of one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RepairStatus {
    Successful,
    #[serde(rename = "Successful*")]
    SuccessfulStaticOnly,
    Failed,
    NotAttempted,
}

impl RepairStatus {
    pub fn combine(static_check: &StaticCheck, dynamic: &DynamicCheck) -> RepairStatus {
        match (static_check, dynamic) {
            (StaticCheck::Fail(_), _) | (_, DynamicCheck::Fail(_)) => RepairStatus::Failed,
            (StaticCheck::Pass, DynamicCheck::Pass) => RepairStatus::Successful,
            (StaticCheck::Pass, DynamicCheck::Unavailable(_)) => RepairStatus::SuccessfulStaticOnly,
        }
    }
}

impl fmt::Display for RepairStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairStatus::Successful => "Successful",
            RepairStatus::SuccessfulStaticOnly => "Successful*",
            RepairStatus::Failed => "Failed",
            RepairStatus::NotAttempted => "NotAttempted",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callx::{bind_args, parse_call};
    use crate::compat::assess_call;
    use crate::parammap::establish_mapping;
    use crate::repair::{apply_repair, plan_repair, RepairPlan};
    use crate::sigmodel::{parse_signature, SignatureOrigin};

    fn sig(text: &str) -> ApiSignature {
        parse_signature(text, "f", "v", SignatureOrigin::StaticSource, false).unwrap()
    }

    fn unplanned(n: usize) -> RepairPlan {
        RepairPlan {
            candidate_id: 0,
            ops: vec![],
            intents: vec![None; n],
            partial: false,
            suggestions: vec![],
        }
    }

    #[test]
    fn mirror_of_repaired_example() {
        let old = sig("(x: int, y: int, e: bool, u: float, *, z: str)");
        let new = sig("(y: int, x: int, *, e: bool, w: str)");
        let call = "f(1, 2, True, 3.14, z='hello')";
        let args = parse_call(call).unwrap().args;
        let binding = bind_args(&args, &old).unwrap();
        let dict = establish_mapping(&old, &new);
        let verdict = assess_call(&dict, &binding);
        let plan = plan_repair(&args, &binding, &dict, &verdict, &new, &[]).unwrap();
        let repaired = apply_repair(call, &plan).unwrap();
        let mirror = build_mirror(&repaired, &new, 0).unwrap();
        assert_eq!(mirror.render(), "f(y=2, x=1, e=True, w='hello')");
        assert_eq!(validate_static(&mirror, &new), StaticCheck::Pass);
    }

    #[test]
    fn removed_name_fails_static() {
        let old = sig("(G, maxcardinality=None, weight='weight')");
        let new = sig("(G, weight='weight')");
        let call = "nx.min_weight_matching(G, None)";
        let args = parse_call(call).unwrap().args;
        let binding = bind_args(&args, &old).unwrap();
        let dict = establish_mapping(&old, &new);
        let mut plan = unplanned(args.len());
        plan.intents = intents_without_repair(&args, &binding, &dict);
        let mirror = build_mirror(&apply_repair(call, &plan).unwrap(), &new, 0).unwrap();
        assert_eq!(mirror.render(), "nx.min_weight_matching(G=G, maxcardinality=None)");
        assert_eq!(validate_static(&mirror, &new), StaticCheck::Fail("unknown name 'maxcardinality'".into()));
    }

    #[test]
    fn empty_mirror() {
        let new = sig("(a=1)");
        let repaired = apply_repair("f()", &unplanned(0)).unwrap();
        let mirror = build_mirror(&repaired, &new, 0).unwrap();
        assert!(mirror.args.is_empty());
        assert!(validate_static(&mirror, &new).passed());
        assert!(!validate_static(&mirror, &sig("(a)")).passed());
    }

    #[test]
    fn arity_mismatch() {
        let repaired = apply_repair("f(1, 2)", &unplanned(2)).unwrap();
        assert_eq!(build_mirror(&repaired, &sig("(a)"), 0), Err(ArityMismatch { position: 1 }));
    }

    #[test]
    fn dynamic_off_and_literals() {
        let repaired = apply_repair("f(1)", &unplanned(1)).unwrap();
        assert_eq!(
            validate_dynamic("lib.f", None, &repaired, None),
            DynamicCheck::Unavailable("dynamic validation off".into())
        );
        assert!(is_literal("-1.5"));
        assert!(is_literal("{'a': (1, None)}"));
        assert!(!is_literal("x"));
    }

    #[test]
    fn status_combination() {
        let off = DynamicCheck::Unavailable("off".into());
        assert_eq!(RepairStatus::combine(&StaticCheck::Pass, &off), RepairStatus::SuccessfulStaticOnly);
        assert_eq!(RepairStatus::combine(&StaticCheck::Pass, &DynamicCheck::Pass), RepairStatus::Successful);
        assert_eq!(
            RepairStatus::combine(&StaticCheck::Pass, &DynamicCheck::Fail("TypeError".into())),
            RepairStatus::Failed
        );
        assert_eq!(RepairStatus::SuccessfulStaticOnly.to_string(), "Successful*");
    }
}
