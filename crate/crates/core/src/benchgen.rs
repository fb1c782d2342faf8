//! Labeled test corpora by parameter mutation, and detection/repair metrics.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::callx::{bind_args, missing_required, parse_call};
use crate::compat::{assess_call, Overall};
use crate::parammap::{establish_mapping_with, TypeChangeRules};
use crate::par::{self, ExecMode};
use crate::repair::{apply_repair, plan_repair};
use crate::sigmodel::{ApiSignature, ParamKind, Parameter, SignatureOrigin};
use crate::validate::{build_mirror, validate_static};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Op1,
    Op2,
    Op3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub call_text: String,
    pub ops: Vec<MutationOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationCase {
    pub api: String,
    pub call_text: String,
    pub ops: Vec<MutationOp>,
    pub label: Overall,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("domain error: n={n} exceeds N={big_n}")]
pub struct DomainError {
    pub big_n: usize,
    pub n: usize,
}

fn callee(sig: &ApiSignature) -> &str {
    sig.qualified_name.rsplit('.').next().unwrap_or(&sig.qualified_name)
}

/// Optional keyword selections of Op3: none, each one alone, then growing prefixes.
fn keyword_selections(m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    out.extend((0..m).map(|i| vec![i]));
    out.extend((2..=m).map(|len| (0..len).collect()));
    out
}

/// Call variants of `old_sig` produced by the three mutation operators.
/// Parameters without a base value are treated as unusable; a required one
/// without a value yields no variants.
pub fn mutate(old_sig: &ApiSignature, base_values: &BTreeMap<String, String>, rng_seed: u64) -> Vec<Mutant> {
    let value = |p: &Parameter| base_values.get(&p.name).cloned();
    let positional: Vec<&Parameter> = old_sig.positional().collect();
    let required = positional.iter().take_while(|p| p.is_required()).count();
    if positional[..required].iter().any(|p| value(p).is_none()) {
        return Vec::new();
    }
    let usable = required
        + positional[required..]
            .iter()
            .take_while(|p| value(p).is_some())
            .count();
    let mut kw_required = Vec::new();
    let mut kw_optional = Vec::new();
    for p in old_sig.keyword_only() {
        match (p.is_required(), value(p)) {
            (true, Some(v)) => kw_required.push(format!("{}={v}", p.name)),
            (true, None) => return Vec::new(),
            (false, Some(v)) => kw_optional.push(format!("{}={v}", p.name)),
            (false, None) => {}
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let name = callee(old_sig);
    for used in required..=usable {
        let prefix = &positional[..used];
        let convertible = prefix.iter().rev().take_while(|p| !p.positional_only).count();
        for converted in 0..=convertible {
            let split = used - converted;
            for selection in keyword_selections(kw_optional.len()) {
                let mut unnamed: Vec<String> = prefix[..split].iter().filter_map(|p| value(p)).collect();
                let mut named: Vec<String> = prefix[split..]
                    .iter()
                    .map(|p| format!("{}={}", p.name, value(p).unwrap_or_default()))
                    .collect();
                named.extend(kw_required.iter().cloned());
                named.extend(selection.iter().map(|&i| kw_optional[i].clone()));
                if !selection.is_empty() {
                    named.shuffle(&mut rng);
                }
                let mut ops = vec![MutationOp::Op1];
                if converted > 0 {
                    ops.push(MutationOp::Op2);
                }
                if !selection.is_empty() {
                    ops.push(MutationOp::Op3);
                }
                unnamed.append(&mut named);
                let text = format!("{name}({})", unnamed.join(", "));
                if seen.insert(text.clone()) {
                    out.push(Mutant { call_text: text, ops });
                }
            }
        }
    }
    out
}

/// Σ_{i=n}^{N} (i+1)·k where k is the number of keyword selections (2m, or 1 when m = 0).
pub fn count_combinations(big_n: usize, n: usize, m: usize) -> Result<u64, DomainError> {
    if n > big_n {
        return Err(DomainError { big_n, n });
    }
    let k = if m == 0 { 1 } else { 2 * m as u64 };
    Ok((n..=big_n).map(|i| (i as u64 + 1) * k).sum())
}

/// Label a call text under an old/new signature pair; calls that do not
/// parse or bind under `old_sig` are labeled Unknown.
pub fn label(call_text: &str, old_sig: &ApiSignature, new_sig: &ApiSignature, rules: &TypeChangeRules) -> Overall {
    let Ok(call) = parse_call(call_text) else {
        return Overall::Unknown;
    };
    let Ok(binding) = bind_args(&call.args, old_sig) else {
        return Overall::Unknown;
    };
    if !missing_required(&binding, old_sig).is_empty() {
        return Overall::Unknown;
    }
    let dict = establish_mapping_with(old_sig, new_sig, rules);
    assess_call(&dict, &binding).overall
}

/// One API of a mutation corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiPair {
    pub old: ApiSignature,
    pub new: ApiSignature,
    pub base_values: BTreeMap<String, String>,
}

/// Mutate and label every API; APIs are independent so run under `mode`.
pub fn build_corpus(apis: &[ApiPair], rng_seed: u64, mode: ExecMode) -> Vec<MutationCase> {
    let rules = TypeChangeRules::new();
    let per_api = par::map(mode, apis, |api| {
        mutate(&api.old, &api.base_values, rng_seed)
            .into_iter()
            .map(|m| MutationCase {
                api: api.old.qualified_name.clone(),
                label: label(&m.call_text, &api.old, &api.new, &rules),
                call_text: m.call_text,
                ops: m.ops,
            })
            .collect::<Vec<_>>()
    });
    per_api.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub sr: u64,
    pub icp: u64,
    pub cp: u64,
}

impl MetricCounts {
    pub fn merge(mut self, other: MetricCounts) -> MetricCounts {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.sr += other.sr;
        self.icp += other.icp;
        self.cp += other.cp;
        self
    }
}

/// Ratios in [0, 1]; `None` when a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub repair_precision: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &MetricCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        f1,
        repair_precision: ratio(c.sr, c.sr + c.icp + c.cp),
    }
}

pub fn percent(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "N/A".into())
}

/// Detection and repair outcome of one case against its expected label.
pub fn evaluate_case(case: &MutationCase, api: &ApiPair) -> MetricCounts {
    let mut c = MetricCounts::default();
    let Ok(call) = parse_call(&case.call_text) else { return c };
    let Ok(binding) = bind_args(&call.args, &api.old) else { return c };
    let dict = establish_mapping_with(&api.old, &api.new, &TypeChangeRules::new());
    let verdict = assess_call(&dict, &binding);
    let expected = case.label == Overall::Incompatible;
    let predicted = verdict.overall == Overall::Incompatible;
    match (expected, predicted) {
        (true, true) => c.tp += 1,
        (false, true) => c.fp += 1,
        (true, false) => c.fn_ += 1,
        (false, false) => {}
    }
    if !predicted {
        return c;
    }
    let repaired = plan_repair(&call.args, &binding, &dict, &verdict, &api.new, &[])
        .and_then(|plan| apply_repair(&case.call_text, &plan).map(|r| (plan, r)));
    let ok = repaired.is_ok_and(|(plan, r)| {
        build_mirror(&r, &api.new, plan.candidate_id).is_ok_and(|m| validate_static(&m, &api.new).passed())
    });
    match (expected, ok) {
        (true, true) => c.sr += 1,
        (true, false) => c.icp += 1,
        (false, _) => c.cp += 1,
    }
    c
}

/// Score a corpus built from `apis` (cases are matched to APIs by qualified name).
pub fn score_corpus(cases: &[MutationCase], apis: &[ApiPair], mode: ExecMode) -> MetricCounts {
    let by_name: BTreeMap<&str, &ApiPair> = apis.iter().map(|a| (a.old.qualified_name.as_str(), a)).collect();
    par::map(mode, cases, |case| {
        by_name
            .get(case.api.as_str())
            .map(|api| evaluate_case(case, api))
            .unwrap_or_default()
    })
    .into_iter()
    .fold(MetricCounts::default(), MetricCounts::merge)
}

/// A random (old, new, call) triple: at most five parameters, no variadics,
/// no positional-only parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub old: ApiSignature,
    pub new: ApiSignature,
    pub call_text: String,
}

const NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

#[derive(Clone)]
struct Spec {
    name: &'static str,
    keyword_only: bool,
    default: Option<String>,
}

fn build_sig(name: &str, version: &str, specs: &[Spec]) -> ApiSignature {
    // Positionals first, then keyword-only; a defaulted positional forces defaults after it.
    let mut params = Vec::new();
    let mut defaulted = false;
    let ordered = specs.iter().filter(|s| !s.keyword_only).chain(specs.iter().filter(|s| s.keyword_only));
    let mut counts = [0usize; 2];
    for s in ordered {
        let index = counts[s.keyword_only as usize];
        counts[s.keyword_only as usize] += 1;
        let kind = if s.keyword_only {
            ParamKind::KeywordOnly
        } else {
            ParamKind::Positional
        };
        let mut default = s.default.clone();
        if !s.keyword_only {
            if defaulted && default.is_none() {
                default = Some("0".into());
            }
            defaulted |= default.is_some();
        }
        let mut p = Parameter::new(s.name, kind, index);
        if let Some(d) = default {
            p = p.with_default(d);
        }
        params.push(p);
    }
    ApiSignature::new(name, version, SignatureOrigin::StaticSource, params)
}

fn random_default(rng: &mut impl Rng) -> Option<String> {
    rng.gen_bool(0.4).then(|| rng.gen_range(0..10).to_string())
}

pub fn random_triple(rng: &mut impl Rng) -> Triple {
    let count = rng.gen_range(0..=5);
    let mut names: Vec<&'static str> = NAMES.to_vec();
    names.shuffle(rng);
    let mut old: Vec<Spec> = (0..count)
        .map(|i| Spec {
            name: names[i],
            keyword_only: rng.gen_bool(0.3),
            default: random_default(rng),
        })
        .collect();
    let old_sig = build_sig("f", "1", &old);
    old = old_sig
        .parameters
        .iter()
        .map(|p| Spec {
            name: NAMES.iter().find(|n| **n == p.name).copied().unwrap_or("a"),
            keyword_only: p.kind == ParamKind::KeywordOnly,
            default: p.default_text.clone(),
        })
        .collect();

    let mut new = old.clone();
    let mut spare: Vec<&'static str> = names[count..].to_vec();
    for _ in 0..rng.gen_range(0..=3) {
        match rng.gen_range(0..6) {
            0 if !new.is_empty() => {
                let i = rng.gen_range(0..new.len());
                new.remove(i);
            }
            1 if !spare.is_empty() && new.len() < 5 => {
                let i = rng.gen_range(0..=new.len());
                new.insert(
                    i,
                    Spec {
                        name: spare.pop().unwrap_or("h"),
                        keyword_only: rng.gen_bool(0.3),
                        default: random_default(rng),
                    },
                );
            }
            2 if !spare.is_empty() && !new.is_empty() => {
                let i = rng.gen_range(0..new.len());
                new[i].name = spare.pop().unwrap_or("h");
            }
            3 if new.len() > 1 => {
                let i = rng.gen_range(0..new.len());
                let j = rng.gen_range(0..new.len());
                new.swap(i, j);
            }
            4 if !new.is_empty() => {
                let i = rng.gen_range(0..new.len());
                new[i].keyword_only = !new[i].keyword_only;
            }
            5 if !new.is_empty() => {
                let i = rng.gen_range(0..new.len());
                new[i].default = random_default(rng);
            }
            _ => {}
        }
    }
    let new_sig = build_sig("f", "2", &new);
    let call_text = random_call(&old_sig, rng);
    Triple {
        old: old_sig,
        new: new_sig,
        call_text,
    }
}

/// A random call that binds under `sig`.
pub fn random_call(sig: &ApiSignature, rng: &mut impl Rng) -> String {
    let positional: Vec<&Parameter> = sig.positional().collect();
    let required = positional.iter().take_while(|p| p.is_required()).count();
    let used = rng.gen_range(required..=positional.len());
    let by_position = rng.gen_range(0..=used);
    let mut args: Vec<String> = (0..by_position).map(|i| format!("{}", 10 + i)).collect();
    let mut named: Vec<String> = Vec::new();
    for (i, p) in positional.iter().enumerate().skip(by_position) {
        if i < used || (p.is_required()) || rng.gen_bool(0.3) {
            named.push(format!("{}={}", p.name, 10 + i));
        }
    }
    for (i, p) in sig.keyword_only().enumerate() {
        if p.is_required() || rng.gen_bool(0.5) {
            named.push(format!("{}={}", p.name, 20 + i));
        }
    }
    named.shuffle(rng);
    args.extend(named);
    format!("f({})", args.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::parse_signature;

    fn sig(text: &str) -> ApiSignature {
        parse_signature(text, "m.foo", "1", SignatureOrigin::StaticSource, false).unwrap()
    }

    fn values(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn fig18_foo_has_28_variants() {
        let s = sig("(u, v, w=3, *, x, y=5, z=6)");
        let vals = values(&[("u", "1"), ("v", "2"), ("w", "3"), ("x", "4"), ("y", "5"), ("z", "6")]);
        let got = mutate(&s, &vals, 7);
        assert_eq!(got.len(), 28);
        let texts: Vec<_> = got.iter().map(|m| m.call_text.as_str()).collect();
        for expected in ["foo(1, 2, x=4)", "foo(1, 2, 3, x=4)", "foo(1, v=2, x=4)", "foo(u=1, v=2, x=4)"] {
            assert!(texts.contains(&expected), "{expected}");
        }
        assert_eq!(count_combinations(3, 2, 2), Ok(28));
        assert_eq!(got, mutate(&s, &vals, 7));
    }

    #[test]
    fn small_signatures() {
        let one = mutate(&sig("(a)"), &values(&[("a", "1")]), 0);
        let texts: Vec<_> = one.iter().map(|m| m.call_text.as_str()).collect();
        assert_eq!(texts, vec!["foo(1)", "foo(a=1)"]);
        let none = mutate(&sig("()"), &BTreeMap::new(), 0);
        assert_eq!(none[0].call_text, "foo()");
        assert_eq!(none.len(), 1);
        assert!(mutate(&sig("(a)"), &BTreeMap::new(), 0).is_empty());
    }

    #[test]
    fn unusable_optional_positional_stops_chain() {
        let s = sig("(a, b=1, c=2)");
        let got = mutate(&s, &values(&[("a", "1"), ("c", "3")]), 0);
        assert_eq!(got.len() as u64, count_combinations(1, 1, 0).unwrap());
    }

    #[test]
    fn count_formula() {
        assert_eq!(count_combinations(2, 3, 1), Err(DomainError { big_n: 2, n: 3 }));
        assert_eq!(count_combinations(4, 4, 3), Ok(5 * 6));
        assert_eq!(count_combinations(0, 0, 0), Ok(1));
    }

    #[test]
    fn labels_follow_rules() {
        let rules = TypeChangeRules::new();
        let old = sig("(a, b, c=1)");
        let removed_c = sig("(a, b)");
        assert_eq!(label("foo(1, 2)", &old, &removed_c, &rules), Overall::Compatible);
        assert_eq!(label("foo(1, 2, 3)", &old, &removed_c, &rules), Overall::Incompatible);
        let with_kwargs = sig("(a, b, **kw)");
        assert_eq!(label("foo(1, 2, c=3)", &old, &with_kwargs, &rules), Overall::Compatible);
        assert_eq!(label("foo(1)", &old, &removed_c, &rules), Overall::Unknown);
    }

    #[test]
    fn reference_metrics() {
        let m = compute_metrics(&MetricCounts {
            tp: 11737,
            fp: 6,
            fn_: 842,
            sr: 11112,
            icp: 848,
            cp: 0,
        });
        assert_eq!(percent(m.precision), "99.95%");
        assert_eq!(percent(m.recall), "93.31%");
        assert_eq!(percent(m.f1), "96.51%");
        assert_eq!(percent(m.repair_precision), "92.91%");
        assert_eq!(percent(compute_metrics(&MetricCounts::default()).precision), "N/A");
    }

    #[test]
    fn corpus_scores_consistently() {
        let apis = vec![ApiPair {
            old: sig("(u, v, w=3, *, x, y=5, z=6)"),
            new: sig("(v, u, *, x, z=6)"),
            base_values: values(&[("u", "1"), ("v", "2"), ("w", "3"), ("x", "4"), ("y", "5"), ("z", "6")]),
        }];
        let seq = build_corpus(&apis, 3, ExecMode::Sequential);
        assert_eq!(seq, build_corpus(&apis, 3, ExecMode::Parallel));
        let counts = score_corpus(&seq, &apis, ExecMode::Parallel);
        let positives = seq.iter().filter(|c| c.label == Overall::Incompatible).count() as u64;
        assert_eq!(counts.tp, positives);
        assert_eq!(counts.fp + counts.fn_, 0);
        assert_eq!(counts.sr + counts.icp, positives);
    }

    #[test]
    fn random_calls_bind() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let t = random_triple(&mut rng);
            t.old.validate().unwrap();
            t.new.validate().unwrap();
            let call = parse_call(&t.call_text).unwrap();
            assert!(bind_args(&call.args, &t.old).is_ok(), "{} vs {}", t.call_text, t.old.render());
        }
    }
}
