//! Call-site extraction for one target library.
//!
//! A first pass over a file collects imports, class definitions and
//! assignments; a second, depth-first pass emits every call whose restored
//! path belongs to the library, inner calls before the calls consuming them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rustpython_parser::ast::{self, Expr, Stmt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pysrc::{self, LineIndex};
use crate::sigmodel::{ApiSignature, ParamKind};

/// How a parameter is supplied by a call (the M dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passing {
    NotPassed,
    Positional,
    Keyword,
}

impl Passing {
    pub const ALL: [Passing; 3] = [Passing::NotPassed, Passing::Positional, Passing::Keyword];

    pub fn symbol(self) -> &'static str {
        match self {
            Passing::NotPassed => "↑n",
            Passing::Positional => "↑p",
            Passing::Keyword => "↑k",
        }
    }
}

impl fmt::Display for Passing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Syntactic form of one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgPassing {
    Positional,
    Keyword,
    /// `*expr`
    StarArgs,
    /// `**expr`
    StarKwargs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgUse {
    /// Verbatim value text (without `name=` for keywords).
    pub expr_text: String,
    pub passing: ArgPassing,
    pub keyword_name: Option<String>,
    /// Ordinal among positional arguments, or among keyword arguments.
    pub position: usize,
    /// Byte span of the whole argument in the file, `name=` included.
    #[serde(skip)]
    pub span: (usize, usize),
}

impl ArgUse {
    pub fn is_unpacking(&self) -> bool {
        matches!(self.passing, ArgPassing::StarArgs | ArgPassing::StarKwargs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvocationForm {
    Direct,
    ClassObject,
    ReturnValue,
    Argument,
    Inheritance,
    Decorator,
    AsyncAwait,
    ContextManager,
}

impl InvocationForm {
    pub fn as_str(self) -> &'static str {
        match self {
            InvocationForm::Direct => "direct",
            InvocationForm::ClassObject => "class_object",
            InvocationForm::ReturnValue => "return_value",
            InvocationForm::Argument => "argument",
            InvocationForm::Inheritance => "inheritance",
            InvocationForm::Decorator => "decorator",
            InvocationForm::AsyncAwait => "async_await",
            InvocationForm::ContextManager => "context_manager",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub file: PathBuf,
    pub line: usize,
    pub column: usize,
    /// Single-line form of the call expression.
    pub call_text: String,
    pub restored_path: String,
    pub receiver_chain: Option<String>,
    pub args: Vec<ArgUse>,
    pub invocation_form: InvocationForm,
    /// Byte span of the call expression in the original file.
    #[serde(skip)]
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: PathBuf,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Extraction {
    pub sites: Vec<CallSite>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Extract every call into `library_name` from one source file.
pub fn extract_calls(file: &Path, source: &str, library_name: &str) -> Extraction {
    let suite = match pysrc::parse_module(source, &file.to_string_lossy()) {
        Ok(s) => s,
        Err(e) => {
            return Extraction {
                sites: Vec::new(),
                diagnostics: vec![Diagnostic {
                    file: file.to_path_buf(),
                    message: format!("parse failure: {e}"),
                }],
            }
        }
    };
    let mut facts = Facts::default();
    collect_facts(&suite, &mut facts, &Scope::default(), library_name);
    let mut walker = Walker {
        source,
        file,
        library: library_name,
        facts: &facts,
        lines: LineIndex::new(source),
        scope: Scope::default(),
        out: Extraction::default(),
    };
    walker.stmts(&suite);
    walker.out
}

/// Resolved meaning of an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Res {
    /// A module, function or class object reachable by dotted path.
    Path(String),
    /// A value produced by calling the path (instance or return value).
    Value(String),
    LocalClass(String),
    LocalValue(String),
    /// `self` inside a method of the named local class.
    SelfRef(String),
    /// `super()` inside a method of the named local class.
    SuperRef(String),
}

#[derive(Debug, Default)]
struct LocalClass {
    bases: Vec<Res>,
    methods: HashSet<String>,
}

#[derive(Debug, Default)]
struct Facts {
    imports: HashMap<String, Res>,
    classes: HashMap<String, LocalClass>,
    /// (scope key, name) -> binding; last assignment wins.
    assigns: HashMap<(String, String), Res>,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    /// Enclosing def/class names.
    path: Vec<String>,
    /// Innermost enclosing class and the receiver name of the current method.
    class: Option<(String, Option<String>)>,
}

impl Scope {
    fn key(&self) -> String {
        self.path.join(".")
    }

    fn enter(&self, name: &str) -> Scope {
        let mut s = self.clone();
        s.path.push(name.to_string());
        s
    }
}

fn belongs(path: &str, library: &str) -> bool {
    path == library || path.strip_prefix(library).is_some_and(|rest| rest.starts_with('.'))
}

impl Facts {
    fn lookup(&self, scope: &Scope, name: &str) -> Option<Res> {
        if let Some((class, Some(receiver))) = &scope.class {
            if name == receiver {
                return Some(Res::SelfRef(class.clone()));
            }
        }
        let mut path = scope.path.clone();
        loop {
            if let Some(r) = self.assigns.get(&(path.join("."), name.to_string())) {
                return Some(r.clone());
            }
            if path.pop().is_none() {
                break;
            }
        }
        if let Some(r) = self.imports.get(name) {
            return Some(r.clone());
        }
        if self.classes.contains_key(name) {
            return Some(Res::LocalClass(name.to_string()));
        }
        None
    }

    fn resolve(&self, scope: &Scope, expr: &Expr) -> Option<Res> {
        match expr {
            Expr::Name(n) => self.lookup(scope, n.id.as_str()),
            Expr::Attribute(a) => {
                if let (Expr::Name(n), Some((class, Some(receiver)))) = (a.value.as_ref(), &scope.class) {
                    if n.id.as_str() == receiver {
                        let key = (class.clone(), format!("{receiver}.{}", a.attr));
                        if let Some(r) = self.assigns.get(&key) {
                            return Some(r.clone());
                        }
                    }
                }
                let base = self.resolve(scope, &a.value)?;
                self.member(&base, a.attr.as_str()).map(|(r, _)| r)
            }
            Expr::Call(c) => {
                if let Expr::Name(n) = c.func.as_ref() {
                    if n.id.as_str() == "super" && self.lookup(scope, "super").is_none() {
                        return scope.class.as_ref().map(|(class, _)| Res::SuperRef(class.clone()));
                    }
                }
                match self.resolve(scope, &c.func)? {
                    Res::Path(p) => Some(Res::Value(p)),
                    Res::LocalClass(c) => Some(Res::LocalValue(c)),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Attribute lookup; the flag is set when the member is inherited from a library base.
    fn member(&self, base: &Res, attr: &str) -> Option<(Res, bool)> {
        match base {
            Res::Path(p) | Res::Value(p) => Some((Res::Path(format!("{p}.{attr}")), false)),
            Res::LocalClass(c) | Res::LocalValue(c) | Res::SelfRef(c) => self.inherited(c, attr, false, 0),
            Res::SuperRef(c) => self.inherited(c, attr, true, 0),
        }
    }

    fn inherited(&self, class: &str, attr: &str, skip_own: bool, depth: usize) -> Option<(Res, bool)> {
        let info = self.classes.get(class)?;
        if depth > 16 || (!skip_own && info.methods.contains(attr)) {
            return None;
        }
        for base in &info.bases {
            match base {
                Res::Path(p) => return Some((Res::Path(format!("{p}.{attr}")), true)),
                Res::LocalClass(c) => {
                    if let Some(found) = self.inherited(c, attr, false, depth + 1) {
                        return Some(found);
                    }
                }
                _ => {}
            }
        }
        None
    }

    /// Constructor path for instantiating a local class without its own initializer.
    fn constructor(&self, class: &str, depth: usize) -> Option<String> {
        let info = self.classes.get(class)?;
        if depth > 16 || info.methods.contains("__init__") {
            return None;
        }
        info.bases.iter().find_map(|b| match b {
            Res::Path(p) => Some(p.clone()),
            Res::LocalClass(c) => self.constructor(c, depth + 1),
            _ => None,
        })
    }
}

fn collect_facts(stmts: &[Stmt], facts: &mut Facts, scope: &Scope, library: &str) {
    for stmt in stmts {
        match stmt {
            Stmt::Import(s) => {
                for alias in &s.names {
                    let full = alias.name.to_string();
                    match &alias.asname {
                        Some(asname) => facts.imports.insert(asname.to_string(), Res::Path(full)),
                        None => {
                            let head = full.split('.').next().unwrap_or(&full).to_string();
                            facts.imports.insert(head.clone(), Res::Path(head))
                        }
                    };
                }
            }
            Stmt::ImportFrom(s) => {
                let level = s.level.as_ref().map(|l| l.to_usize()).unwrap_or(0);
                let Some(module) = &s.module else { continue };
                if level > 0 {
                    continue;
                }
                for alias in &s.names {
                    if alias.name.as_str() == "*" {
                        continue;
                    }
                    let bound = alias.asname.as_ref().unwrap_or(&alias.name).to_string();
                    facts
                        .imports
                        .insert(bound, Res::Path(format!("{module}.{}", alias.name)));
                }
            }
            Stmt::ClassDef(c) => {
                let bases = c.bases.iter().filter_map(|b| facts.resolve(scope, b)).collect();
                let methods = c
                    .body
                    .iter()
                    .filter_map(|s| match s {
                        Stmt::FunctionDef(f) => Some(f.name.to_string()),
                        Stmt::AsyncFunctionDef(f) => Some(f.name.to_string()),
                        _ => None,
                    })
                    .collect();
                facts.classes.insert(c.name.to_string(), LocalClass { bases, methods });
                let mut inner = scope.enter(c.name.as_str());
                inner.class = Some((c.name.to_string(), None));
                collect_facts(&c.body, facts, &inner, library);
            }
            Stmt::FunctionDef(f) => {
                let inner = function_scope(scope, f.name.as_str(), &f.args);
                collect_facts(&f.body, facts, &inner, library);
            }
            Stmt::AsyncFunctionDef(f) => {
                let inner = function_scope(scope, f.name.as_str(), &f.args);
                collect_facts(&f.body, facts, &inner, library);
            }
            Stmt::Assign(s) => {
                if let Some(r) = facts.resolve(scope, &s.value) {
                    for target in &s.targets {
                        bind_target(facts, scope, target, r.clone());
                    }
                }
            }
            Stmt::AnnAssign(s) => {
                if let Some(value) = &s.value {
                    if let Some(r) = facts.resolve(scope, value) {
                        bind_target(facts, scope, &s.target, r);
                    }
                }
            }
            Stmt::With(s) => {
                with_items(facts, scope, &s.items);
                collect_facts(&s.body, facts, scope, library);
            }
            Stmt::AsyncWith(s) => {
                with_items(facts, scope, &s.items);
                collect_facts(&s.body, facts, scope, library);
            }
            _ => {
                for body in nested_bodies(stmt) {
                    collect_facts(body, facts, scope, library);
                }
            }
        }
    }
}

fn function_scope(scope: &Scope, name: &str, args: &ast::Arguments) -> Scope {
    let mut inner = scope.enter(name);
    inner.class = match &scope.class {
        // a def directly inside a class body: its first parameter is the receiver
        Some((class, None)) if scope.path.last() == Some(class) => {
            let receiver = args.posonlyargs.iter().chain(&args.args).next();
            Some((class.clone(), receiver.map(|a| a.def.arg.to_string())))
        }
        other => other.clone(),
    };
    inner
}

fn with_items(facts: &mut Facts, scope: &Scope, items: &[ast::WithItem]) {
    for item in items {
        if let (Some(target), Some(r)) = (&item.optional_vars, facts.resolve(scope, &item.context_expr)) {
            let r = match r {
                Res::Path(p) => Res::Value(p),
                other => other,
            };
            bind_target(facts, scope, target, r);
        }
    }
}

fn bind_target(facts: &mut Facts, scope: &Scope, target: &Expr, r: Res) {
    match target {
        Expr::Name(n) => {
            facts.assigns.insert((scope.key(), n.id.to_string()), r);
        }
        Expr::Attribute(a) => {
            if let (Expr::Name(n), Some((class, Some(receiver)))) = (a.value.as_ref(), &scope.class) {
                if n.id.as_str() == receiver {
                    facts.assigns.insert((class.clone(), format!("{receiver}.{}", a.attr)), r);
                }
            }
        }
        _ => {}
    }
}

/// Statement bodies nested without opening a new scope.
fn nested_bodies(stmt: &Stmt) -> Vec<&[Stmt]> {
    match stmt {
        Stmt::For(s) => vec![&s.body, &s.orelse],
        Stmt::AsyncFor(s) => vec![&s.body, &s.orelse],
        Stmt::While(s) => vec![&s.body, &s.orelse],
        Stmt::If(s) => vec![&s.body, &s.orelse],
        Stmt::With(s) => vec![&s.body],
        Stmt::AsyncWith(s) => vec![&s.body],
        Stmt::Match(s) => s.cases.iter().map(|c| c.body.as_slice()).collect(),
        Stmt::Try(s) => try_bodies(&s.body, &s.handlers, &s.orelse, &s.finalbody),
        Stmt::TryStar(s) => try_bodies(&s.body, &s.handlers, &s.orelse, &s.finalbody),
        _ => Vec::new(),
    }
}

fn try_bodies<'a>(
    body: &'a [Stmt],
    handlers: &'a [ast::ExceptHandler],
    orelse: &'a [Stmt],
    finalbody: &'a [Stmt],
) -> Vec<&'a [Stmt]> {
    let mut out = vec![body];
    for h in handlers {
        let ast::ExceptHandler::ExceptHandler(h) = h;
        out.push(&h.body);
    }
    out.push(orelse);
    out.push(finalbody);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Plain,
    Decorator,
    Awaited,
    WithItem,
    Argument,
}

struct Walker<'a> {
    source: &'a str,
    file: &'a Path,
    library: &'a str,
    facts: &'a Facts,
    lines: LineIndex,
    scope: Scope,
    out: Extraction,
}

impl<'a> Walker<'a> {
    fn stmts(&mut self, stmts: &[Stmt]) {
        for stmt in stmts {
            self.stmt(stmt);
        }
    }

    fn with_scope(&mut self, scope: Scope, body: &[Stmt]) {
        let saved = std::mem::replace(&mut self.scope, scope);
        self.stmts(body);
        self.scope = saved;
    }

    fn function(&mut self, name: &str, args: &ast::Arguments, decorators: &[Expr], returns: Option<&Expr>, body: &[Stmt]) {
        for d in decorators {
            self.expr(d, Ctx::Decorator);
        }
        for d in pysrc::arg_defaults(args) {
            self.expr(d, Ctx::Plain);
        }
        if let Some(r) = returns {
            self.expr(r, Ctx::Plain);
        }
        let inner = function_scope(&self.scope, name, args);
        self.with_scope(inner, body);
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::FunctionDef(f) => {
                self.function(f.name.as_str(), &f.args, &f.decorator_list, f.returns.as_deref(), &f.body)
            }
            Stmt::AsyncFunctionDef(f) => {
                self.function(f.name.as_str(), &f.args, &f.decorator_list, f.returns.as_deref(), &f.body)
            }
            Stmt::ClassDef(c) => {
                for d in &c.decorator_list {
                    self.expr(d, Ctx::Decorator);
                }
                for b in &c.bases {
                    self.expr(b, Ctx::Plain);
                }
                for k in &c.keywords {
                    self.expr(&k.value, Ctx::Plain);
                }
                let mut inner = self.scope.enter(c.name.as_str());
                inner.class = Some((c.name.to_string(), None));
                self.with_scope(inner, &c.body);
            }
            Stmt::Return(s) => self.opt(s.value.as_deref()),
            Stmt::Delete(s) => s.targets.iter().for_each(|t| self.expr(t, Ctx::Plain)),
            Stmt::Assign(s) => {
                s.targets.iter().for_each(|t| self.expr(t, Ctx::Plain));
                self.expr(&s.value, Ctx::Plain);
            }
            Stmt::TypeAlias(s) => self.expr(&s.value, Ctx::Plain),
            Stmt::AugAssign(s) => {
                self.expr(&s.target, Ctx::Plain);
                self.expr(&s.value, Ctx::Plain);
            }
            Stmt::AnnAssign(s) => {
                self.expr(&s.target, Ctx::Plain);
                self.expr(&s.annotation, Ctx::Plain);
                self.opt(s.value.as_deref());
            }
            Stmt::For(s) => {
                self.expr(&s.target, Ctx::Plain);
                self.expr(&s.iter, Ctx::Plain);
                self.stmts(&s.body);
                self.stmts(&s.orelse);
            }
            Stmt::AsyncFor(s) => {
                self.expr(&s.target, Ctx::Plain);
                self.expr(&s.iter, Ctx::Plain);
                self.stmts(&s.body);
                self.stmts(&s.orelse);
            }
            Stmt::While(s) => {
                self.expr(&s.test, Ctx::Plain);
                self.stmts(&s.body);
                self.stmts(&s.orelse);
            }
            Stmt::If(s) => {
                self.expr(&s.test, Ctx::Plain);
                self.stmts(&s.body);
                self.stmts(&s.orelse);
            }
            Stmt::With(s) => {
                self.with_items(&s.items);
                self.stmts(&s.body);
            }
            Stmt::AsyncWith(s) => {
                self.with_items(&s.items);
                self.stmts(&s.body);
            }
            Stmt::Match(s) => {
                self.expr(&s.subject, Ctx::Plain);
                for case in &s.cases {
                    self.opt(case.guard.as_deref());
                    self.stmts(&case.body);
                }
            }
            Stmt::Raise(s) => {
                self.opt(s.exc.as_deref());
                self.opt(s.cause.as_deref());
            }
            Stmt::Try(s) => self.try_stmt(&s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::TryStar(s) => self.try_stmt(&s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::Assert(s) => {
                self.expr(&s.test, Ctx::Plain);
                self.opt(s.msg.as_deref());
            }
            Stmt::Expr(s) => self.expr(&s.value, Ctx::Plain),
            Stmt::Import(_)
            | Stmt::ImportFrom(_)
            | Stmt::Global(_)
            | Stmt::Nonlocal(_)
            | Stmt::Pass(_)
            | Stmt::Break(_)
            | Stmt::Continue(_) => {}
        }
    }

    fn try_stmt(&mut self, body: &[Stmt], handlers: &[ast::ExceptHandler], orelse: &[Stmt], finalbody: &[Stmt]) {
        self.stmts(body);
        for h in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = h;
            self.opt(h.type_.as_deref());
            self.stmts(&h.body);
        }
        self.stmts(orelse);
        self.stmts(finalbody);
    }

    fn with_items(&mut self, items: &[ast::WithItem]) {
        for item in items {
            self.expr(&item.context_expr, Ctx::WithItem);
            self.opt(item.optional_vars.as_deref());
        }
    }

    fn opt(&mut self, e: Option<&Expr>) {
        if let Some(e) = e {
            self.expr(e, Ctx::Plain);
        }
    }

    fn expr(&mut self, e: &Expr, ctx: Ctx) {
        match e {
            Expr::Call(call) => {
                self.expr(&call.func, Ctx::Plain);
                for a in &call.args {
                    self.expr(a, Ctx::Argument);
                }
                for k in &call.keywords {
                    self.expr(&k.value, Ctx::Argument);
                }
                self.emit(call, ctx);
            }
            Expr::Await(a) => self.expr(&a.value, Ctx::Awaited),
            _ => {
                let mut children = Vec::new();
                pysrc::for_each_child(e, &mut |c| children.push(c));
                let inner = if ctx == Ctx::Argument { Ctx::Argument } else { Ctx::Plain };
                for c in children {
                    self.expr(c, inner);
                }
            }
        }
    }

    fn emit(&mut self, call: &ast::ExprCall, ctx: Ctx) {
        let (path, inherited) = match self.callee(&call.func) {
            Some(found) => found,
            None => return,
        };
        if !belongs(&path, self.library) {
            return;
        }
        let receiver = match call.func.as_ref() {
            Expr::Attribute(a) => match self.facts.resolve(&self.scope, &a.value) {
                Some(Res::Path(_)) | None => None,
                Some(_) => Some(pysrc::single_line(pysrc::slice(self.source, a.value.as_ref()))),
            },
            _ => None,
        };
        let form = match ctx {
            Ctx::Decorator => InvocationForm::Decorator,
            Ctx::Awaited => InvocationForm::AsyncAwait,
            Ctx::WithItem => InvocationForm::ContextManager,
            Ctx::Argument => InvocationForm::Argument,
            Ctx::Plain if inherited => InvocationForm::Inheritance,
            Ctx::Plain => match call.func.as_ref() {
                Expr::Attribute(a) if matches!(a.value.as_ref(), Expr::Call(_)) => InvocationForm::ReturnValue,
                Expr::Attribute(a) => match self.facts.resolve(&self.scope, &a.value) {
                    Some(Res::Value(_)) | Some(Res::LocalValue(_)) => InvocationForm::ClassObject,
                    _ => InvocationForm::Direct,
                },
                _ => InvocationForm::Direct,
            },
        };
        let span = pysrc::span(call);
        let (line, column) = self.lines.line_col(self.source, span.0);
        let args = call_args(self.source, call);
        self.out.sites.push(CallSite {
            file: self.file.to_path_buf(),
            line,
            column,
            call_text: pysrc::single_line(&self.source[span.0..span.1]),
            restored_path: path,
            receiver_chain: receiver,
            args,
            invocation_form: form,
            span,
        });
    }

    fn callee(&self, func: &Expr) -> Option<(String, bool)> {
        match func {
            Expr::Attribute(a) => {
                let base = self.facts.resolve(&self.scope, &a.value)?;
                match self.facts.member(&base, a.attr.as_str())? {
                    (Res::Path(p), inherited) => Some((p, inherited)),
                    _ => None,
                }
            }
            _ => match self.facts.resolve(&self.scope, func)? {
                Res::Path(p) => Some((p, false)),
                Res::LocalClass(c) => self.facts.constructor(&c, 0).map(|p| (p, true)),
                _ => None,
            },
        }
    }
}

/// Arguments of a call in source order.
fn call_args(source: &str, call: &ast::ExprCall) -> Vec<ArgUse> {
    let open = pysrc::call_open_paren(source, call);
    let close = pysrc::span(call).1.saturating_sub(1);
    let bounds = (open + 1, close);
    let mut out = Vec::new();
    let mut npos = 0;
    for a in &call.args {
        let span = pysrc::grouped_span(source, pysrc::span(a), bounds);
        let (passing, text) = match a {
            Expr::Starred(s) => (ArgPassing::StarArgs, pysrc::slice(source, s.value.as_ref())),
            _ => (ArgPassing::Positional, &source[span.0..span.1]),
        };
        out.push(ArgUse {
            expr_text: text.to_string(),
            passing,
            keyword_name: None,
            position: npos,
            span,
        });
        npos += 1;
    }
    let mut nkw = 0;
    for k in &call.keywords {
        let value = pysrc::grouped_span(source, pysrc::span(&k.value), bounds);
        let span = (pysrc::span(k).0.min(value.0), pysrc::span(k).1.max(value.1));
        let (passing, name) = match &k.arg {
            Some(name) => (ArgPassing::Keyword, Some(name.to_string())),
            None => (ArgPassing::StarKwargs, None),
        };
        out.push(ArgUse {
            expr_text: source[value.0..value.1].to_string(),
            passing,
            keyword_name: name,
            position: nkw,
            span,
        });
        nkw += 1;
    }
    out.sort_by_key(|a| a.span.0);
    out
}

/// A call expression split into callee text and arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCall {
    /// Source text up to and including the opening parenthesis.
    pub head: String,
    pub args: Vec<ArgUse>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CallParseError {
    #[error("not a call expression: {0}")]
    NotACall(String),
    #[error("syntax error: {0}")]
    Syntax(String),
}

/// Parse standalone call text such as `f(1, b=2)`.
pub fn parse_call(text: &str) -> Result<ParsedCall, CallParseError> {
    let expr = pysrc::parse_expr(text).map_err(|e| CallParseError::Syntax(e.to_string()))?;
    let Expr::Call(call) = &expr else {
        return Err(CallParseError::NotACall(text.to_string()));
    };
    let (start, _) = pysrc::span(call);
    let open = pysrc::call_open_paren(text, call);
    Ok(ParsedCall {
        head: text[start..=open].to_string(),
        args: call_args(text, call),
    })
}

/// Where an argument lands when the call is bound to a signature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgTarget {
    Param(String),
    VarPositional,
    VarKeyword,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgBinding {
    /// Target of each argument, parallel to the argument list.
    pub targets: Vec<ArgTarget>,
    /// Passing method of every signature parameter, variadics included.
    pub passing: BTreeMap<String, Passing>,
}

impl ArgBinding {
    pub fn passing_of(&self, name: &str) -> Passing {
        self.passing.get(name).copied().unwrap_or(Passing::NotPassed)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("takes {max} positional arguments but {given} were given")]
    TooManyPositional { max: usize, given: usize },
    #[error("got an unexpected keyword argument '{0}'")]
    UnexpectedKeyword(String),
    #[error("got multiple values for argument '{0}'")]
    MultipleValues(String),
    #[error("argument unpacking prevents static binding")]
    Unpacking,
}

/// Bind arguments to parameters the way the interpreter does, without
/// checking that required parameters are present.
pub fn bind_args(args: &[ArgUse], sig: &ApiSignature) -> Result<ArgBinding, BindingError> {
    if args.iter().any(ArgUse::is_unpacking) {
        return Err(BindingError::Unpacking);
    }
    let positional: Vec<_> = sig.positional().collect();
    let given = args.iter().filter(|a| a.passing == ArgPassing::Positional).count();
    let mut passing: BTreeMap<String, Passing> =
        sig.parameters.iter().map(|p| (p.name.clone(), Passing::NotPassed)).collect();
    let mut targets = Vec::with_capacity(args.len());
    let mut i = 0;
    for arg in args {
        let target = match arg.passing {
            ArgPassing::Positional => {
                let t = if let Some(p) = positional.get(i) {
                    passing.insert(p.name.clone(), Passing::Positional);
                    ArgTarget::Param(p.name.clone())
                } else if let Some(v) = sig.var_positional() {
                    passing.insert(v.name.clone(), Passing::Positional);
                    ArgTarget::VarPositional
                } else {
                    return Err(BindingError::TooManyPositional {
                        max: positional.len(),
                        given,
                    });
                };
                i += 1;
                t
            }
            _ => {
                let name = arg.keyword_name.as_deref().unwrap_or_default();
                match sig.param(name).filter(|p| p.accepts_keyword()) {
                    Some(p) => {
                        if passing[&p.name] != Passing::NotPassed {
                            return Err(BindingError::MultipleValues(p.name.clone()));
                        }
                        passing.insert(p.name.clone(), Passing::Keyword);
                        ArgTarget::Param(p.name.clone())
                    }
                    None => match sig.var_keyword() {
                        Some(v) => {
                            passing.insert(v.name.clone(), Passing::Keyword);
                            ArgTarget::VarKeyword
                        }
                        None => return Err(BindingError::UnexpectedKeyword(name.to_string())),
                    },
                }
            }
        };
        targets.push(target);
    }
    Ok(ArgBinding { targets, passing })
}

/// Passing method of every parameter of `sig` for this call site.
pub fn classify_passing(site: &CallSite, sig: &ApiSignature) -> Result<BTreeMap<String, Passing>, BindingError> {
    bind_args(&site.args, sig).map(|b| b.passing)
}

/// Required parameters of `sig` not supplied by a binding.
pub fn missing_required(binding: &ArgBinding, sig: &ApiSignature) -> Vec<String> {
    sig.parameters
        .iter()
        .filter(|p| p.is_required() && binding.passing_of(&p.name) == Passing::NotPassed)
        .filter(|p| !matches!(p.kind, ParamKind::VarPositional | ParamKind::VarKeyword))
        .map(|p| p.name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::{parse_signature, SignatureOrigin};

    fn sites(src: &str, lib: &str) -> Vec<(String, String, InvocationForm)> {
        extract_calls(Path::new("t.py"), src, lib)
            .sites
            .into_iter()
            .map(|s| (s.call_text, s.restored_path, s.invocation_form))
            .collect()
    }

    fn sig(text: &str) -> ApiSignature {
        parse_signature(text, "f", "v", SignatureOrigin::StaticSource, false).unwrap()
    }

    #[test]
    fn regular_api_with_alias_and_instance() {
        let src = "from Lib.pkg.module import M as A\na = A(x)\na.b(y, z)\n";
        assert_eq!(
            sites(src, "Lib"),
            vec![
                ("A(x)".into(), "Lib.pkg.module.M".into(), InvocationForm::Direct),
                ("a.b(y, z)".into(), "Lib.pkg.module.M.b".into(), InvocationForm::ClassObject),
            ]
        );
    }

    #[test]
    fn argument_invocation_inner_first() {
        let src = "from lib import f, foo\nf(x, foo(y, z))\n";
        let got = sites(src, "lib");
        assert_eq!(got[0].0, "foo(y, z)");
        assert_eq!(got[0].2, InvocationForm::Argument);
        assert_eq!(got[1].0, "f(x, foo(y, z))");
    }

    #[test]
    fn inherited_call_resolves_to_base() {
        let src = "from pkg.module import C\nclass Custom(C):\n    def custom_method(self, x, y):\n        self.c_method(x, y)\n        self.custom_method(1, 2)\n";
        assert_eq!(
            sites(src, "pkg"),
            vec![("self.c_method(x, y)".into(), "pkg.module.C.c_method".into(), InvocationForm::Inheritance)]
        );
    }

    #[test]
    fn other_forms() {
        let src = "import lib\nfrom lib import foo\n@foo(param)\ndef bar(x, y):\n    return x + y\nasync def task():\n    return await foo(x, y)\nwith lib.open(x) as r:\n    r.bar(y)\nlib.f(x).g(y)\n";
        let got = sites(src, "lib");
        let forms: Vec<_> = got.iter().map(|s| (s.1.as_str(), s.2)).collect();
        assert_eq!(
            forms,
            vec![
                ("lib.foo", InvocationForm::Decorator),
                ("lib.foo", InvocationForm::AsyncAwait),
                ("lib.open", InvocationForm::ContextManager),
                ("lib.open.bar", InvocationForm::ClassObject),
                ("lib.f", InvocationForm::Direct),
                ("lib.f.g", InvocationForm::ReturnValue),
            ]
        );
    }

    #[test]
    fn no_library_references() {
        assert!(sites("import os\nos.path.join('a', 'b')\n", "numpy").is_empty());
        assert!(sites("import numpyx\nnumpyx.f()\n", "numpy").is_empty());
    }

    #[test]
    fn multiline_call_text_is_single_line() {
        let src = "import numpy as np\nnp.correlate(a,\n\tv)\n";
        let ex = extract_calls(Path::new("t.py"), src, "numpy");
        assert_eq!(ex.sites[0].call_text, "np.correlate(a, v)");
        assert_eq!((ex.sites[0].line, ex.sites[0].column), (2, 1));
        assert_eq!(ex.sites[0].args[1].expr_text, "v");
    }

    #[test]
    fn parse_failure_is_a_diagnostic() {
        let ex = extract_calls(Path::new("bad.py"), "def f(:\n", "x");
        assert!(ex.sites.is_empty());
        assert_eq!(ex.diagnostics.len(), 1);
    }

    #[test]
    fn last_assignment_wins() {
        let src = "import lib\na = lib.A()\na = lib.B()\na.m()\n";
        assert_eq!(sites(src, "lib")[2].1, "lib.B.m");
    }

    #[test]
    fn classify_rule_listing() {
        let call = parse_call("Rule('', None, 'rule.line')").unwrap();
        let s = sig("(title='', character=None, style='rule.line')");
        let b = bind_args(&call.args, &s).unwrap();
        assert!(b.passing.values().all(|p| *p == Passing::Positional));
    }

    #[test]
    fn classify_proxy_listing() {
        let call = parse_call("Proxy(proxy_url, headers=h, mode='DEFAULT')").unwrap();
        let s = sig("(url, headers=None, mode='DEFAULT')");
        let b = bind_args(&call.args, &s).unwrap();
        assert_eq!(b.passing_of("url"), Passing::Positional);
        assert_eq!(b.passing_of("headers"), Passing::Keyword);
        assert_eq!(b.passing_of("mode"), Passing::Keyword);
    }

    #[test]
    fn nothing_passed() {
        let b = bind_args(&[], &sig("(a=1, b=2)")).unwrap();
        assert_eq!(b.passing_of("a"), Passing::NotPassed);
        assert_eq!(b.passing_of("b"), Passing::NotPassed);
    }

    #[test]
    fn binding_errors() {
        let s = sig("(a, *, b)");
        let args = |t: &str| parse_call(t).unwrap().args;
        assert!(matches!(bind_args(&args("f(1, 2)"), &s), Err(BindingError::TooManyPositional { .. })));
        assert_eq!(bind_args(&args("f(c=1)"), &s), Err(BindingError::UnexpectedKeyword("c".into())));
        assert_eq!(bind_args(&args("f(1, a=1)"), &s), Err(BindingError::MultipleValues("a".into())));
        assert_eq!(bind_args(&args("f(*x)"), &s), Err(BindingError::Unpacking));
        let v = sig("(a, *rest, **kw)");
        let b = bind_args(&args("f(1, 2, c=3)"), &v).unwrap();
        assert_eq!(b.targets, vec![ArgTarget::Param("a".into()), ArgTarget::VarPositional, ArgTarget::VarKeyword]);
        assert_eq!(b.passing_of("rest"), Passing::Positional);
    }

    #[test]
    fn parse_call_keeps_grouping_and_head() {
        let c = parse_call("obj.f ((a), b=(1, 2))").unwrap();
        assert_eq!(c.head, "obj.f (");
        assert_eq!(c.args[0].expr_text, "(a)");
        assert_eq!(c.args[1].expr_text, "(1, 2)");
    }
}
