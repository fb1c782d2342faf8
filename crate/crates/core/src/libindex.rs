//! Index of API definitions in a library source tree, with actual paths
//! adjusted to user-facing names through `__init__.py` re-exports.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rustpython_parser::ast::{self, Expr, Stmt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::par::{self, ExecMode};
use crate::pysrc;
use crate::sigmodel::{parameters_from_arguments, strip_receiver, ApiSignature, SignatureOrigin};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub signature: ApiSignature,
    /// Dotted definition path derived from the file location.
    pub actual_name: String,
    /// File path relative to the source root, `/`-separated.
    pub actual_path: String,
    pub is_overload_stub: bool,
}

/// Re-export pairs harvested from one `__init__.py`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportMap {
    pub init_file_path: String,
    /// (key, alias) in file order; star imports have a key ending in `*` and an empty alias.
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDiagnostic {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiIndex {
    pub version_tag: String,
    /// Simplified name -> candidates.
    pub entries: BTreeMap<String, Vec<IndexEntry>>,
    /// Package directory (relative, `/`-separated) -> its import map.
    pub import_maps: BTreeMap<String, ImportMap>,
    pub diagnostics: Vec<IndexDiagnostic>,
}

impl ApiIndex {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IndexEntry)> {
        self.entries.iter().flat_map(|(k, v)| v.iter().map(move |e| (k.as_str(), e)))
    }
}

struct ParsedFile {
    rel: String,
    outcome: Result<(Vec<RawDef>, Option<ImportMap>), String>,
}

struct RawDef {
    name: String,
    signature: ApiSignature,
    overload: bool,
}

fn module_name(rel: &str) -> String {
    let stem = rel
        .strip_suffix(".pyi")
        .or_else(|| rel.strip_suffix(".py"))
        .unwrap_or(rel);
    let stem = stem.strip_suffix("/__init__").unwrap_or(stem);
    stem.replace('/', ".")
}

fn source_files(root: &Path) -> Vec<(String, PathBuf)> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            e.path()
                .extension()
                .is_some_and(|x| x == "py" || x == "pyi")
        })
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?;
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Some((rel, e.path().to_path_buf()))
        })
        .collect()
}

/// Index every function, method and class initializer under `source_root`.
pub fn index_library(source_root: &Path, version_tag: &str) -> ApiIndex {
    index_library_with(source_root, version_tag, ExecMode::default())
}

pub fn index_library_with(source_root: &Path, version_tag: &str, mode: ExecMode) -> ApiIndex {
    let files = source_files(source_root);
    let parsed = par::map(mode, &files, |(rel, path)| parse_file(rel, path, version_tag));
    let mut index = ApiIndex {
        version_tag: version_tag.to_string(),
        ..ApiIndex::default()
    };
    let mut defs = Vec::new();
    for file in parsed {
        match file.outcome {
            Ok((raw, map)) => {
                if let Some(map) = map {
                    let dir = file.rel.rsplit_once('/').map(|(d, _)| d).unwrap_or("").to_string();
                    index.import_maps.insert(dir, map);
                }
                defs.push((file.rel, raw));
            }
            Err(message) => index.diagnostics.push(IndexDiagnostic { path: file.rel, message }),
        }
    }
    for (rel, raw) in defs {
        for def in raw {
            let simplified = simplify_qualified_name(&def.name, &rel, &index.import_maps);
            index.entries.entry(simplified).or_default().push(IndexEntry {
                signature: def.signature,
                actual_name: def.name,
                actual_path: rel.clone(),
                is_overload_stub: def.overload,
            });
        }
    }
    index
}

fn parse_file(rel: &str, path: &Path, version_tag: &str) -> ParsedFile {
    let module = module_name(rel);
    let outcome = fs::read_to_string(path)
        .map_err(|e| format!("read failure: {e}"))
        .and_then(|source| {
            let suite = pysrc::parse_module(&source, rel).map_err(|e| format!("parse failure: {e}"))?;
            let stub = rel.ends_with(".pyi");
            let mut defs = Vec::new();
            collect_defs(&source, &suite, &module, false, stub, version_tag, &mut defs);
            let map = rel
                .ends_with("__init__.py")
                .then(|| import_map(rel, &module, &suite));
            Ok((defs, map))
        });
    ParsedFile {
        rel: rel.to_string(),
        outcome,
    }
}

fn has_decorator(decorators: &[Expr], name: &str) -> bool {
    decorators.iter().any(|d| match d {
        Expr::Name(n) => n.id.as_str() == name,
        Expr::Attribute(a) => a.attr.as_str() == name,
        _ => false,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_def(
    source: &str,
    name: &str,
    args: &ast::Arguments,
    decorators: &[Expr],
    in_class: bool,
    stub: bool,
    version_tag: &str,
    out: &mut Vec<RawDef>,
) -> String {
    let mut params = parameters_from_arguments(source, args, &|s| s.to_string());
    let method = in_class && !has_decorator(decorators, "staticmethod");
    let stripped = method && strip_receiver(&mut params);
    let origin = if stub {
        SignatureOrigin::PyiStub
    } else {
        SignatureOrigin::StaticSource
    };
    let overload = stub && has_decorator(decorators, "overload");
    let mut push = |qualified: &str| {
        let mut sig = ApiSignature::new(qualified, version_tag, origin, params.clone());
        sig.self_stripped = stripped;
        out.push(RawDef {
            name: qualified.to_string(),
            signature: sig,
            overload,
        });
    };
    if in_class && name.ends_with(".__init__") {
        push(name.trim_end_matches(".__init__"));
    }
    push(name);
    name.to_string()
}

fn collect_defs(
    source: &str,
    stmts: &[Stmt],
    prefix: &str,
    in_class: bool,
    stub: bool,
    version_tag: &str,
    out: &mut Vec<RawDef>,
) {
    for stmt in stmts {
        match stmt {
            Stmt::FunctionDef(f) => {
                let name = format!("{prefix}.{}", f.name);
                push_def(source, &name, &f.args, &f.decorator_list, in_class, stub, version_tag, out);
                collect_defs(source, &f.body, &name, false, stub, version_tag, out);
            }
            Stmt::AsyncFunctionDef(f) => {
                let name = format!("{prefix}.{}", f.name);
                push_def(source, &name, &f.args, &f.decorator_list, in_class, stub, version_tag, out);
                collect_defs(source, &f.body, &name, false, stub, version_tag, out);
            }
            Stmt::ClassDef(c) => {
                let name = format!("{prefix}.{}", c.name);
                collect_defs(source, &c.body, &name, true, stub, version_tag, out);
            }
            Stmt::If(s) => {
                collect_defs(source, &s.body, prefix, in_class, stub, version_tag, out);
                collect_defs(source, &s.orelse, prefix, in_class, stub, version_tag, out);
            }
            Stmt::Try(s) => {
                collect_defs(source, &s.body, prefix, in_class, stub, version_tag, out);
                for h in &s.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = h;
                    collect_defs(source, &h.body, prefix, in_class, stub, version_tag, out);
                }
                collect_defs(source, &s.orelse, prefix, in_class, stub, version_tag, out);
            }
            _ => {}
        }
    }
}

/// Re-export pairs of an `__init__.py`, keyed relative to its package.
fn import_map(rel: &str, package: &str, suite: &[Stmt]) -> ImportMap {
    let mut pairs = Vec::new();
    for stmt in suite {
        let Stmt::ImportFrom(s) = stmt else { continue };
        let level = s.level.as_ref().map(|l| l.to_usize()).unwrap_or(0);
        let module = s.module.as_ref().map(|m| m.to_string());
        let relative = match (level, module) {
            (0, Some(m)) => match m.strip_prefix(package).and_then(|r| r.strip_prefix('.')) {
                Some(r) => r.to_string(),
                None => continue,
            },
            (0, None) => continue,
            (_, Some(m)) => m,
            (_, None) => String::new(),
        };
        for alias in &s.names {
            let name = alias.name.as_str();
            let key = if relative.is_empty() {
                name.to_string()
            } else {
                format!("{relative}.{name}")
            };
            if name == "*" {
                pairs.push((key, String::new()));
            } else {
                let value = alias.asname.as_ref().map(|a| a.to_string()).unwrap_or_else(|| name.to_string());
                pairs.push((key, value));
            }
        }
    }
    ImportMap {
        init_file_path: rel.to_string(),
        pairs,
    }
}

/// Byte offsets where `key` occurs in `name` aligned to dotted segments.
fn segment_matches(name: &str, key: &str, open_end: bool) -> Vec<usize> {
    if key.is_empty() {
        return Vec::new();
    }
    name.match_indices(key)
        .map(|(i, _)| i)
        .filter(|&i| i == 0 || name.as_bytes()[i - 1] == b'.')
        .filter(|&i| open_end || i + key.len() == name.len() || name.as_bytes()[i + key.len()] == b'.')
        .collect()
}

fn replace_segments(name: &str, key: &str, value: &str, open_end: bool) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last = 0;
    for i in segment_matches(name, key, open_end) {
        if i < last {
            continue;
        }
        out.push_str(&name[last..i]);
        out.push_str(value);
        last = i + key.len();
    }
    out.push_str(&name[last..]);
    out
}

/// Walk from the definition's directory up to the root; at each package
/// level, a named re-export matching the name is applied (first one wins),
/// otherwise the last matching star re-export strips its prefix.
pub fn simplify_qualified_name(fqn: &str, actual_path: &str, import_maps: &BTreeMap<String, ImportMap>) -> String {
    let mut name = fqn.to_string();
    let mut path = actual_path;
    while let Some(pos) = path.rfind('/') {
        let parent = &path[..pos];
        if let Some(map) = import_maps.get(parent) {
            let mut rep: Option<(&str, &str, bool)> = None;
            for (key, value) in &map.pairs {
                if let Some(prefix) = key.strip_suffix('*') {
                    if !segment_matches(&name, prefix, true).is_empty() {
                        rep = Some((prefix, "", true));
                    }
                } else if !segment_matches(&name, key, false).is_empty() {
                    rep = Some((key, value, false));
                    break;
                }
            }
            if let Some((k, v, open)) = rep {
                name = replace_segments(&name, k, v, open);
            }
        }
        path = parent;
    }
    name
}

/// Candidates for a call path: exact simplified or actual-name matches
/// first, then entries sharing the terminal segment.
pub fn lookup_candidates<'a>(index: &'a ApiIndex, call_path: &str) -> Vec<&'a IndexEntry> {
    let mut out: Vec<&IndexEntry> = Vec::new();
    if let Some(v) = index.entries.get(call_path) {
        out.extend(v);
    }
    for (_, e) in index.iter() {
        if e.actual_name == call_path && !out.iter().any(|o| std::ptr::eq(*o, e)) {
            out.push(e);
        }
    }
    if !out.is_empty() {
        return out;
    }
    let terminal = call_path.rsplit('.').next().unwrap_or(call_path);
    for (name, e) in index.iter() {
        if name.rsplit('.').next() == Some(terminal) {
            out.push(e);
        }
    }
    out
}

/// Every overload (or plain def) of a stub file, with its qualified name.
pub fn parse_stub_overloads(stub_file: &Path, module: &str, version_tag: &str) -> Result<Vec<IndexEntry>, IndexDiagnostic> {
    let rel = stub_file.to_string_lossy().to_string();
    let diag = |message: String| IndexDiagnostic {
        path: rel.clone(),
        message,
    };
    let source = fs::read_to_string(stub_file).map_err(|e| diag(format!("read failure: {e}")))?;
    let suite = pysrc::parse_module(&source, &rel).map_err(|e| diag(format!("parse failure: {e}")))?;
    let mut defs = Vec::new();
    collect_defs(&source, &suite, module, false, true, version_tag, &mut defs);
    Ok(defs
        .into_iter()
        .map(|d| IndexEntry {
            signature: d.signature,
            actual_name: d.name,
            actual_path: rel.clone(),
            is_overload_stub: d.overload,
        })
        .collect())
}

/// Content hash of the indexable files of a tree.
pub fn tree_hash(root: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    for (rel, path) in source_files(root) {
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(&path)?);
        hasher.update([0]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Serialize, Deserialize)]
struct CacheDoc {
    tree_hash: String,
    index: ApiIndex,
}

/// Load the index from `cache_dir` when its tree hash matches, otherwise
/// build it and write the cache.
pub fn load_or_build(source_root: &Path, version_tag: &str, cache_dir: &Path, mode: ExecMode) -> io::Result<ApiIndex> {
    let hash = tree_hash(source_root)?;
    let file = cache_dir.join(format!("index-{version_tag}-{}.json", &hash[..16]));
    if let Ok(text) = fs::read_to_string(&file) {
        if let Ok(doc) = serde_json::from_str::<CacheDoc>(&text) {
            if doc.tree_hash == hash && doc.index.version_tag == version_tag {
                return Ok(doc.index);
            }
        }
    }
    let index = index_library_with(source_root, version_tag, mode);
    fs::create_dir_all(cache_dir)?;
    let doc = CacheDoc { tree_hash: hash, index };
    fs::write(&file, serde_json::to_string(&doc).map_err(io::Error::other)?)?;
    Ok(doc.index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(root: &Path, rel: &str, text: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    fn numpy_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        write(r, "numpy/__init__.py", "from .core import *\n");
        write(r, "numpy/core/__init__.py", "from .fromnumeric import amax as max\n");
        write(r, "numpy/core/fromnumeric.py", "def amax(a, axis=None, out=None, keepdims=False):\n    pass\n");
        dir
    }

    #[test]
    fn amax_simplifies_to_numpy_max() {
        let dir = numpy_tree();
        let index = index_library(dir.path(), "1.0");
        let got = lookup_candidates(&index, "numpy.max");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].actual_name, "numpy.core.fromnumeric.amax");
        assert_eq!(got[0].actual_path, "numpy/core/fromnumeric.py");
    }

    #[test]
    fn no_init_files_leaves_name() {
        assert_eq!(simplify_qualified_name("a.b.c", "a/b.py", &BTreeMap::new()), "a.b.c");
    }

    #[test]
    fn segment_boundaries() {
        let mut maps = BTreeMap::new();
        maps.insert(
            "pkg".to_string(),
            ImportMap {
                init_file_path: "pkg/__init__.py".into(),
                pairs: vec![("core.*".into(), String::new())],
            },
        );
        assert_eq!(simplify_qualified_name("pkg.score.f", "pkg/score.py", &maps), "pkg.score.f");
        assert_eq!(simplify_qualified_name("pkg.core.f", "pkg/core.py", &maps), "pkg.f");
    }

    #[test]
    fn nested_and_class_definitions() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "lib/m.py",
            "def outer(a):\n    def inner(b, *, c=1):\n        pass\nclass K:\n    def __init__(self, x, y=2):\n        pass\n    @staticmethod\n    def s(p):\n        pass\nclass NoInit:\n    pass\n",
        );
        let index = index_library(dir.path(), "1");
        let names: Vec<_> = index.iter().map(|(n, _)| n.to_string()).collect();
        assert_eq!(names, vec!["lib.m.K", "lib.m.K.__init__", "lib.m.K.s", "lib.m.outer", "lib.m.outer.inner"]);
        let k = &lookup_candidates(&index, "lib.m.K")[0].signature;
        assert!(k.self_stripped);
        assert_eq!(k.render(), "(x, y=2)");
        assert_eq!(lookup_candidates(&index, "lib.m.K.s")[0].signature.render(), "(p)");
    }

    #[test]
    fn empty_and_broken_trees() {
        let dir = tempfile::tempdir().unwrap();
        assert!(index_library(dir.path(), "1").is_empty());
        write(dir.path(), "lib/old.py", "async = 1\n");
        write(dir.path(), "lib/ok.py", "def f():\n    pass\n");
        let index = index_library(dir.path(), "1");
        assert_eq!(index.len(), 1);
        assert_eq!(index.diagnostics.len(), 1);
        assert_eq!(index.diagnostics[0].path, "lib/old.py");
    }

    #[test]
    fn stub_overloads() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "torch/__init__.pyi",
            "from typing import overload\nclass _TensorBase:\n    @overload\n    def max(self, dim: _int, keepdim: _bool=False, *, out=None) -> Tensor: ...\n    @overload\n    def max(self, dim: Union[str, None], keepdim: _bool=False, *, out=None) -> Tensor: ...\n    @overload\n    def max(self, other: Tensor) -> Tensor: ...\n    @overload\n    def max(self) -> Tensor: ...\n",
        );
        let stubs = parse_stub_overloads(&dir.path().join("torch/__init__.pyi"), "torch", "1.5.0").unwrap();
        assert_eq!(stubs.len(), 4);
        assert!(stubs.iter().all(|s| s.is_overload_stub && s.actual_name == "torch._TensorBase.max"));
        let index = index_library(dir.path(), "1.5.0");
        assert_eq!(lookup_candidates(&index, "torch._TensorBase.max").len(), 4);
    }

    #[test]
    fn same_name_fallback_orders_exact_first() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "np/a.py", "def mean(x):\n    pass\n");
        write(dir.path(), "np/b.py", "def mean(x, axis=None):\n    pass\n");
        write(dir.path(), "np/c.py", "def mean(x, w):\n    pass\n");
        let index = index_library(dir.path(), "1");
        let got = lookup_candidates(&index, "np.b.mean");
        assert_eq!(got.len(), 1);
        let fallback = lookup_candidates(&index, "np.mean");
        assert_eq!(fallback.len(), 3);
        assert!(lookup_candidates(&ApiIndex::default(), "np.mean").is_empty());
    }

    #[test]
    fn cache_round_trip() {
        let dir = numpy_tree();
        let cache = tempfile::tempdir().unwrap();
        let a = load_or_build(dir.path(), "1.0", cache.path(), ExecMode::Sequential).unwrap();
        let b = load_or_build(dir.path(), "1.0", cache.path(), ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(fs::read_dir(cache.path()).unwrap().count(), 1);
    }
}
