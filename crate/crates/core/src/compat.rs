//! Compatibility judgement: per-parameter f(P, E, M) lookup and the per-call
//! conjunction, with the variadic override.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::callx::{ArgBinding, Passing};
use crate::parammap::{ChangeDict, ChangeKind};
use crate::sigmodel::ParamKind;

/// Parameter class in the old signature (the P dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamClass {
    #[serde(rename = "p")]
    Positional,
    #[serde(rename = "k")]
    Keyword,
}

impl ParamClass {
    pub const ALL: [ParamClass; 2] = [ParamClass::Positional, ParamClass::Keyword];

    pub fn of(kind: ParamKind) -> ParamClass {
        match kind {
            ParamKind::Positional | ParamKind::VarPositional => ParamClass::Positional,
            ParamKind::KeywordOnly | ParamKind::VarKeyword => ParamClass::Keyword,
        }
    }
}

impl fmt::Display for ParamClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamClass::Positional => "p",
            ParamClass::Keyword => "k",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Compatible,
    Incompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Overall {
    Compatible,
    Incompatible,
    Unknown,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overall::Compatible => "Compatible",
            Overall::Incompatible => "Incompatible",
            Overall::Unknown => "Unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSource {
    Table,
    VariadicOverride,
    Rule1Untouched,
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("illegal combination ({p}, {e}, {m})")]
pub struct IllegalCombination {
    pub p: ParamClass,
    pub e: ChangeKind,
    pub m: Passing,
}

/// Table lookup for one parameter.
pub fn assess_parameter(p: ParamClass, e: ChangeKind, m: Passing) -> Result<Verdict, IllegalCombination> {
    use ChangeKind::*;
    use Passing::*;
    use Verdict::{Compatible as C, Incompatible as I};
    let illegal = IllegalCombination { p, e, m };
    let v = match (p, e) {
        (ParamClass::Keyword, _) if m == Positional => return Err(illegal),
        (_, AddedRequired) if m == NotPassed => I,
        (_, AddedOptional) if m == NotPassed => C,
        (_, AddedRequired | AddedOptional) => return Err(illegal),
        (ParamClass::Positional, KeyToPos) | (ParamClass::Keyword, Reorder | PosToKey) => return Err(illegal),
        (_, Unchanged) => C,
        (ParamClass::Positional, _) => match (e, m) {
            (Removal, NotPassed) => C,
            (Removal, _) => I,
            (Reorder, Positional) => I,
            (Reorder, _) => C,
            (Rename, Keyword) => I,
            (Rename, _) => C,
            (PosToKey, Positional) => I,
            (PosToKey, _) => C,
            (TypeChange, NotPassed) => C,
            (TypeChange, _) => I,
            _ => unreachable!("positional arms cover all legal kinds"),
        },
        (ParamClass::Keyword, _) => match (e, m) {
            (Removal | Rename | TypeChange, Keyword) => I,
            (Removal | Rename | TypeChange | KeyToPos, _) => C,
            _ => unreachable!("keyword arms cover all legal kinds"),
        },
    };
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamVerdict {
    pub param: String,
    #[serde(rename = "P")]
    pub p: ParamClass,
    #[serde(rename = "E")]
    pub e: ChangeKind,
    #[serde(rename = "M")]
    pub m: Passing,
    pub verdict: Verdict,
    pub rule_source: RuleSource,
    /// Set when a variadic catch-all absorbed a removed or renamed argument.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub vpp_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallVerdict {
    pub per_param: Vec<ParamVerdict>,
    pub overall: Overall,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unknown_reason: Option<String>,
}

impl CallVerdict {
    pub fn unknown(reason: impl Into<String>) -> Self {
        CallVerdict {
            per_param: Vec::new(),
            overall: Overall::Unknown,
            unknown_reason: Some(reason.into()),
        }
    }

    pub fn incompatible_params(&self) -> impl Iterator<Item = &ParamVerdict> {
        self.per_param.iter().filter(|v| v.verdict == Verdict::Incompatible)
    }

    pub fn vpp_warning(&self) -> bool {
        self.per_param.iter().any(|v| v.vpp_warning)
    }
}

/// Conjunction over every parameter of the old signature plus the additions.
/// `binding` is the call bound against the old signature.
pub fn assess_call(dict: &ChangeDict, binding: &ArgBinding) -> CallVerdict {
    let mut per_param = Vec::new();
    for entry in &dict.entries {
        let p = ParamClass::of(entry.old_kind);
        let m = binding.passing_of(&entry.key.name);
        for change in &entry.changes {
            per_param.push(param_verdict(&entry.key.name, p, change.kind, m, dict));
        }
        if entry.became_required && m == Passing::NotPassed {
            per_param.push(ParamVerdict {
                param: entry.key.name.clone(),
                p,
                e: ChangeKind::AddedRequired,
                m,
                verdict: Verdict::Incompatible,
                rule_source: RuleSource::Table,
                vpp_warning: false,
            });
        }
    }
    for add in &dict.additions {
        let name = add.new_name.clone().unwrap_or_default();
        let p = if add.detail == ParamKind::KeywordOnly.as_str() {
            ParamClass::Keyword
        } else {
            ParamClass::Positional
        };
        let verdict = assess_parameter(p, add.kind, Passing::NotPassed).expect("additions are assessed with ↑n");
        per_param.push(ParamVerdict {
            param: name,
            p,
            e: add.kind,
            m: Passing::NotPassed,
            verdict,
            rule_source: RuleSource::Table,
            vpp_warning: false,
        });
    }
    let overall = if per_param.iter().all(|v| v.verdict == Verdict::Compatible) {
        Overall::Compatible
    } else {
        Overall::Incompatible
    };
    CallVerdict {
        per_param,
        overall,
        unknown_reason: None,
    }
}

fn param_verdict(name: &str, p: ParamClass, e: ChangeKind, m: Passing, dict: &ChangeDict) -> ParamVerdict {
    let mut v = ParamVerdict {
        param: name.to_string(),
        p,
        e,
        m,
        verdict: Verdict::Compatible,
        rule_source: RuleSource::Table,
        vpp_warning: false,
    };
    if e == ChangeKind::Unchanged && m == Passing::NotPassed {
        v.rule_source = RuleSource::Rule1Untouched;
        return v;
    }
    let absorbed = matches!(e, ChangeKind::Removal | ChangeKind::Rename)
        && ((m == Passing::Keyword && dict.new_has_var_keyword)
            || (m == Passing::Positional && dict.new_has_var_positional));
    if absorbed {
        v.rule_source = RuleSource::VariadicOverride;
        v.vpp_warning = true;
        return v;
    }
    // A passing method the table rejects as impossible cannot come from a real binding.
    v.verdict = assess_parameter(p, e, m).unwrap_or(Verdict::Incompatible);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callx::{bind_args, parse_call};
    use crate::parammap::establish_mapping;
    use crate::sigmodel::{parse_signature, ApiSignature, SignatureOrigin};

    fn sig(text: &str) -> ApiSignature {
        parse_signature(text, "f", "v", SignatureOrigin::StaticSource, false).unwrap()
    }

    fn judge(old: &str, new: &str, call: &str) -> CallVerdict {
        let (old, new) = (sig(old), sig(new));
        let args = parse_call(call).unwrap().args;
        let binding = bind_args(&args, &old).unwrap();
        assess_call(&establish_mapping(&old, &new), &binding)
    }

    #[test]
    fn documented_cells() {
        use ChangeKind::*;
        use ParamClass::*;
        assert_eq!(assess_parameter(Positional, Removal, Passing::Positional), Ok(Verdict::Incompatible));
        assert_eq!(assess_parameter(Positional, Rename, Passing::Positional), Ok(Verdict::Compatible));
        assert_eq!(assess_parameter(Keyword, KeyToPos, Passing::Keyword), Ok(Verdict::Compatible));
        assert_eq!(assess_parameter(Positional, Unchanged, Passing::Positional), Ok(Verdict::Compatible));
        assert!(assess_parameter(Keyword, Removal, Passing::Positional).is_err());
        assert!(assess_parameter(Positional, AddedOptional, Passing::Keyword).is_err());
    }

    #[test]
    fn correlate_removed_parameter() {
        let v = judge("(a, v, mode='valid', old_behavior=False)", "(a, v, mode='valid')", "np.correlate(a, v, 'valid', False)");
        assert_eq!(v.overall, Overall::Incompatible);
        let bad: Vec<_> = v.incompatible_params().map(|p| p.param.as_str()).collect();
        assert_eq!(bad, vec!["old_behavior"]);
    }

    #[test]
    fn runnable_but_incompatible() {
        let v = judge(
            "(G, maxcardinality=None, weight='weight')",
            "(G, weight='weight')",
            "nx.min_weight_matching(G, None)",
        );
        assert_eq!(v.overall, Overall::Incompatible);
    }

    #[test]
    fn pdist_variadic_override() {
        let v = judge(
            "(X, metric='euclidean', p=None, w=None, V=None, VI=None)",
            "(X, metric='euclidean', *args, **kwargs)",
            "pdist(X, 'euclidean', None, None, V=None, VI=None)",
        );
        assert_eq!(v.overall, Overall::Compatible);
        assert!(v.vpp_warning());
        assert!(v.per_param.iter().any(|p| p.rule_source == RuleSource::VariadicOverride));
    }

    #[test]
    fn untouched_parameters_follow_rule1() {
        let v = judge("(a, b=1)", "(a, b=1, c=2)", "f(1)");
        assert_eq!(v.overall, Overall::Compatible);
        assert_eq!(v.per_param[1].rule_source, RuleSource::Rule1Untouched);
    }

    #[test]
    fn lost_default_breaks_unpassed_calls() {
        assert_eq!(judge("(a, b=1)", "(a, b)", "f(1)").overall, Overall::Incompatible);
        assert_eq!(judge("(a, b=1)", "(a, b)", "f(1, 2)").overall, Overall::Compatible);
    }
}
