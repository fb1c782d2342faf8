//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use param_mend::sigmodel::{ApiSignature, ParamKind, Parameter, SignatureOrigin};

pub fn sig(text: &str) -> ApiSignature {
    param_mend::sigmodel::parse_signature(text, "f", "v", SignatureOrigin::StaticSource, false).unwrap()
}

/// Arguments of a generated call `f(v1, v2, k=v3)`: positional values and (name, value) keywords.
/// Values are simple literals without commas.
pub fn split_call(text: &str) -> (Vec<String>, Vec<(String, String)>) {
    let open = text.find('(').unwrap();
    let inner = &text[open + 1..text.len() - 1];
    let mut positional = Vec::new();
    let mut keywords = Vec::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some((k, v)) => keywords.push((k.trim().to_string(), v.trim().to_string())),
            None => positional.push(part.to_string()),
        }
    }
    (positional, keywords)
}

/// Brute-force binder over plain signatures: parameter name per argument,
/// positionals first then keywords, or None if the call does not bind.
pub fn brute_bind(sig: &ApiSignature, positional: usize, keywords: &[String]) -> Option<Vec<String>> {
    let pos: Vec<&Parameter> = sig.parameters.iter().filter(|p| p.kind == ParamKind::Positional).collect();
    if positional > pos.len() {
        return None;
    }
    let mut out: Vec<String> = pos[..positional].iter().map(|p| p.name.clone()).collect();
    for k in keywords {
        let p = sig
            .parameters
            .iter()
            .find(|p| &p.name == k && matches!(p.kind, ParamKind::Positional | ParamKind::KeywordOnly) && !p.positional_only)?;
        if out.contains(&p.name) {
            return None;
        }
        out.push(p.name.clone());
    }
    let all_required_bound = sig
        .parameters
        .iter()
        .filter(|p| !p.kind.is_variadic() && p.default_text.is_none())
        .all(|p| out.contains(&p.name));
    all_required_bound.then_some(out)
}

/// Old-to-new parameter mapping: name within kind, name across kinds,
/// then same-index positionals and lowest-index keyword-only leftovers.
pub fn oracle_mapping(old: &ApiSignature, new: &ApiSignature) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut taken: Vec<String> = Vec::new();
    let plain = |s: &ApiSignature| -> Vec<Parameter> { s.parameters.iter().filter(|p| !p.kind.is_variadic()).cloned().collect() };
    let (olds, news) = (plain(old), plain(new));
    for same_kind in [true, false] {
        for o in &olds {
            if map.contains_key(&o.name) {
                continue;
            }
            if let Some(n) = news
                .iter()
                .find(|n| n.name == o.name && (n.kind == o.kind) == same_kind && !taken.contains(&n.name))
            {
                map.insert(o.name.clone(), n.name.clone());
                taken.push(n.name.clone());
            }
        }
    }
    for o in &olds {
        if map.contains_key(&o.name) {
            continue;
        }
        let mut cands: Vec<&Parameter> = news
            .iter()
            .filter(|n| n.kind == o.kind && !taken.contains(&n.name))
            .filter(|n| o.kind != ParamKind::Positional || n.index == o.index)
            .collect();
        cands.sort_by_key(|n| n.index);
        if let Some(n) = cands.first() {
            map.insert(o.name.clone(), n.name.clone());
            taken.push(n.name.clone());
        }
    }
    map
}

/// A call is incompatible iff it stops binding under `new`, or some argument
/// lands on a parameter other than the image of its old parameter.
pub fn oracle_incompatible(old: &ApiSignature, new: &ApiSignature, call_text: &str) -> bool {
    let (positional, keywords) = split_call(call_text);
    let names: Vec<String> = keywords.iter().map(|(k, _)| k.clone()).collect();
    let before = brute_bind(old, positional.len(), &names).expect("call binds under the old signature");
    let Some(after) = brute_bind(new, positional.len(), &names) else {
        return true;
    };
    let map = oracle_mapping(old, new);
    before
        .iter()
        .zip(&after)
        .any(|(o, n)| map.get(o) != Some(n))
}

/// Does a repaired call bind under `new` with every value at the image of
/// the parameter it was bound to before? Values identify arguments.
pub fn repair_is_sound(old: &ApiSignature, new: &ApiSignature, original: &str, repaired: &str) -> bool {
    let (p0, k0) = split_call(original);
    let (p1, k1) = split_call(repaired);
    let names0: Vec<String> = k0.iter().map(|(k, _)| k.clone()).collect();
    let names1: Vec<String> = k1.iter().map(|(k, _)| k.clone()).collect();
    let Some(before) = brute_bind(old, p0.len(), &names0) else { return false };
    let Some(after) = brute_bind(new, p1.len(), &names1) else { return false };
    let values0: Vec<&String> = p0.iter().chain(k0.iter().map(|(_, v)| v)).collect();
    let values1: Vec<&String> = p1.iter().chain(k1.iter().map(|(_, v)| v)).collect();
    let map = oracle_mapping(old, new);
    let landed: BTreeMap<&String, &String> = values1.into_iter().zip(&after).collect();
    values0.iter().zip(&before).all(|(v, o)| match map.get(o) {
        Some(target) => landed.get(v) == Some(&target),
        None => !landed.contains_key(v),
    })
}

pub fn write(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, text).unwrap();
}

/// One re-export statement in a generated package tree.
#[derive(Debug, Clone)]
pub enum Reexport {
    Star { module: Vec<String> },
    Named { module: Vec<String>, name: String, alias: Option<String> },
}

/// A random tree `root/l1/l2/mod.py` with re-exports at each package level.
#[derive(Debug, Clone)]
pub struct Tree {
    /// Package segments from the top: [root, l1, l2], then the module name.
    pub packages: Vec<String>,
    pub module: String,
    pub defs: Vec<String>,
    /// Re-exports per package depth (0 = top), in file order, with the
    /// absolute-import flag.
    pub reexports: Vec<Vec<(Reexport, bool)>>,
}

const SEGMENTS: [&str; 5] = ["core", "base", "ops", "util", "api"];
const FUNCS: [&str; 4] = ["amax", "amin", "run", "core"];
const ALIASES: [&str; 4] = ["max", "min", "go", "run"];

pub fn random_tree(rng: &mut impl Rng) -> Tree {
    let mut packages = vec!["pkg".to_string()];
    for _ in 0..2 {
        packages.push(SEGMENTS.choose(rng).unwrap().to_string());
    }
    let module = SEGMENTS.choose(rng).unwrap().to_string();
    let count = rng.gen_range(1..=3);
    let mut defs: Vec<String> = FUNCS.choose_multiple(rng, count).map(|s| s.to_string()).collect();
    defs.sort();
    let mut reexports = Vec::new();
    for depth in 0..packages.len() {
        // descendants of this package, relative: deeper packages and the module
        let mut below: Vec<Vec<String>> = Vec::new();
        for end in depth + 1..packages.len() {
            below.push(packages[depth + 1..=end].to_vec());
        }
        let mut module_path = packages[depth + 1..].to_vec();
        module_path.push(module.clone());
        below.push(module_path.clone());
        let mut stmts = Vec::new();
        for _ in 0..rng.gen_range(0..=3) {
            let absolute = rng.gen_bool(0.25);
            let r = if rng.gen_bool(0.5) {
                Reexport::Star {
                    module: below.choose(rng).unwrap().clone(),
                }
            } else {
                Reexport::Named {
                    module: module_path.clone(),
                    name: defs.choose(rng).unwrap().clone(),
                    alias: rng.gen_bool(0.6).then(|| ALIASES.choose(rng).unwrap().to_string()),
                }
            };
            stmts.push((r, absolute));
        }
        reexports.push(stmts);
    }
    Tree {
        packages,
        module,
        defs,
        reexports,
    }
}

impl Tree {
    pub fn materialize(&self, root: &Path) {
        for depth in 0..self.packages.len() {
            let dir = self.packages[..=depth].join("/");
            let mut text = String::new();
            for (r, absolute) in &self.reexports[depth] {
                let module = match r {
                    Reexport::Star { module } | Reexport::Named { module, .. } => module.join("."),
                };
                let from = if *absolute {
                    format!("{}.{module}", self.packages[..=depth].join("."))
                } else {
                    format!(".{module}")
                };
                match r {
                    Reexport::Star { .. } => text.push_str(&format!("from {from} import *\n")),
                    Reexport::Named { name, alias: Some(a), .. } => text.push_str(&format!("from {from} import {name} as {a}\n")),
                    Reexport::Named { name, alias: None, .. } => text.push_str(&format!("from {from} import {name}\n")),
                }
            }
            write(root, &format!("{dir}/__init__.py"), &text);
        }
        let body: String = self.defs.iter().map(|d| format!("def {d}(x):\n    return x\n\n")).collect();
        write(root, &format!("{}/{}.py", self.packages.join("/"), self.module), &body);
    }

    pub fn fqn(&self, def: &str) -> String {
        format!("{}.{}.{def}", self.packages.join("."), self.module)
    }

    /// Exhaustive substitution over segment lists: at each package level,
    /// from the deepest up, every re-export is tried; the first named one
    /// occurring in the name wins, otherwise the last occurring star one.
    pub fn expected(&self, def: &str) -> String {
        let mut name: Vec<String> = self.fqn(def).split('.').map(str::to_string).collect();
        for depth in (0..self.packages.len()).rev() {
            let mut chosen: Option<(Vec<String>, Vec<String>, bool)> = None;
            for (r, _) in &self.reexports[depth] {
                match r {
                    Reexport::Named { module, name: n, alias } => {
                        let mut key = module.clone();
                        key.push(n.clone());
                        if occurs(&name, &key, false) {
                            chosen = Some((key, vec![alias.clone().unwrap_or_else(|| n.clone())], false));
                            break;
                        }
                    }
                    Reexport::Star { module } => {
                        if occurs(&name, module, true) {
                            chosen = Some((module.clone(), Vec::new(), true));
                        }
                    }
                }
            }
            if let Some((key, value, star)) = chosen {
                name = substitute(&name, &key, &value, star);
            }
        }
        name.join(".")
    }
}

/// A star re-export only matches when more segments follow it.
fn at(hay: &[String], needle: &[String], i: usize, star: bool) -> bool {
    let end = i + needle.len();
    end <= hay.len() && hay[i..end] == *needle && (!star || end < hay.len())
}

fn occurs(hay: &[String], needle: &[String], star: bool) -> bool {
    !needle.is_empty() && (0..hay.len()).any(|i| at(hay, needle, i, star))
}

fn substitute(hay: &[String], needle: &[String], value: &[String], star: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < hay.len() {
        if at(hay, needle, i, star) {
            out.extend(value.iter().cloned());
            i += needle.len();
        } else {
            out.push(hay[i].clone());
            i += 1;
        }
    }
    out
}

/// Count `@overload`-decorated defs in stub text by scanning lines.
pub fn count_overloads(text: &str) -> usize {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    lines
        .iter()
        .enumerate()
        .filter(|(i, l)| (l.starts_with("def ") || l.starts_with("async def ")) && *i > 0 && lines[i - 1].ends_with("overload"))
        .count()
}
