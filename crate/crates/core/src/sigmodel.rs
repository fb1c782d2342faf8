//! Canonical model of Python API signatures.
//!
//! A signature is an ordered parameter list partitioned into four kinds:
//! positional (passable by position, and by name unless positional-only),
//! keyword-only, `*args` and `**kwargs`. Defaults and annotations are kept as
//! verbatim source text and never evaluated.

use std::collections::HashSet;
use std::fmt;

use rustpython_parser::ast;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pysrc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Positional,
    KeywordOnly,
    VarPositional,
    VarKeyword,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Positional => "positional",
            ParamKind::KeywordOnly => "keyword_only",
            ParamKind::VarPositional => "var_positional",
            ParamKind::VarKeyword => "var_keyword",
        }
    }

    pub fn is_variadic(self) -> bool {
        matches!(self, ParamKind::VarPositional | ParamKind::VarKeyword)
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    /// Ordinal within its kind group.
    pub index: usize,
    pub has_default: bool,
    #[serde(rename = "default")]
    pub default_text: Option<String>,
    #[serde(rename = "annotation")]
    pub annotation_text: Option<String>,
    /// Declared before a `/` marker.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub positional_only: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, kind: ParamKind, index: usize) -> Self {
        Parameter {
            name: name.into(),
            kind,
            index,
            has_default: false,
            default_text: None,
            annotation_text: None,
            positional_only: false,
        }
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.has_default = true;
        self.default_text = Some(text.into());
        self
    }

    pub fn with_annotation(mut self, text: impl Into<String>) -> Self {
        self.annotation_text = Some(text.into());
        self
    }

    pub fn is_required(&self) -> bool {
        !self.has_default && !self.kind.is_variadic()
    }

    /// Whether a call may bind this parameter by name.
    pub fn accepts_keyword(&self) -> bool {
        match self.kind {
            ParamKind::Positional => !self.positional_only,
            ParamKind::KeywordOnly => true,
            _ => false,
        }
    }

    fn render(&self) -> String {
        let mut out = match self.kind {
            ParamKind::VarPositional => format!("*{}", self.name),
            ParamKind::VarKeyword => format!("**{}", self.name),
            _ => self.name.clone(),
        };
        if let Some(ann) = &self.annotation_text {
            out.push_str(": ");
            out.push_str(ann);
        }
        if let Some(default) = self.default_text.as_deref().filter(|_| self.has_default) {
            if self.annotation_text.is_some() {
                out.push_str(" = ");
            } else {
                out.push('=');
            }
            out.push_str(default);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureOrigin {
    Reflected,
    StaticSource,
    PyiStub,
}

impl SignatureOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            SignatureOrigin::Reflected => "reflected",
            SignatureOrigin::StaticSource => "static_source",
            SignatureOrigin::PyiStub => "pyi_stub",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ApiSignature {
    pub qualified_name: String,
    pub parameters: Vec<Parameter>,
    pub origin: SignatureOrigin,
    pub version_tag: String,
    pub self_stripped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("syntax error in signature at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("invalid signature: {0}")]
    Invalid(String),
}

impl ApiSignature {
    pub fn new(
        qualified_name: impl Into<String>,
        version_tag: impl Into<String>,
        origin: SignatureOrigin,
        parameters: Vec<Parameter>,
    ) -> Self {
        ApiSignature {
            qualified_name: qualified_name.into(),
            parameters,
            origin,
            version_tag: version_tag.into(),
            self_stripped: false,
        }
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn positional(&self) -> impl Iterator<Item = &Parameter> {
        self.parameters.iter().filter(|p| p.kind == ParamKind::Positional)
    }

    pub fn keyword_only(&self) -> impl Iterator<Item = &Parameter> {
        self.parameters.iter().filter(|p| p.kind == ParamKind::KeywordOnly)
    }

    pub fn var_positional(&self) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.kind == ParamKind::VarPositional)
    }

    pub fn var_keyword(&self) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.kind == ParamKind::VarKeyword)
    }

    pub fn has_variadics(&self) -> bool {
        self.var_positional().is_some() || self.var_keyword().is_some()
    }

    /// Checks the structural invariants: unique names, kind ordering, at most
    /// one of each variadic, default ordering among positionals, and indices
    /// matching the position within each kind group.
    pub fn validate(&self) -> Result<(), SignatureError> {
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(SignatureError::DuplicateParam(p.name.clone()));
            }
        }
        let rank = |k: ParamKind| match k {
            ParamKind::Positional => 0,
            ParamKind::VarPositional => 1,
            ParamKind::KeywordOnly => 2,
            ParamKind::VarKeyword => 3,
        };
        let mut last_rank = 0;
        let mut counts = [0usize; 4];
        let mut saw_default = false;
        let mut saw_keyword_capable = false;
        for p in &self.parameters {
            let r = rank(p.kind);
            if r < last_rank || (p.kind.is_variadic() && counts[r] > 0) {
                return Err(SignatureError::Invalid(format!("parameter `{}` out of order", p.name)));
            }
            if p.index != counts[r] {
                return Err(SignatureError::Invalid(format!(
                    "parameter `{}` has index {} but is #{} of its kind",
                    p.name, p.index, counts[r]
                )));
            }
            if p.kind == ParamKind::Positional {
                if p.has_default {
                    saw_default = true;
                } else if saw_default {
                    return Err(SignatureError::Invalid(format!(
                        "required positional `{}` follows a defaulted one",
                        p.name
                    )));
                }
                if p.positional_only && saw_keyword_capable {
                    return Err(SignatureError::Invalid(format!(
                        "positional-only `{}` follows a regular positional",
                        p.name
                    )));
                }
                saw_keyword_capable |= !p.positional_only;
            }
            if p.kind.is_variadic() && p.has_default {
                return Err(SignatureError::Invalid(format!("variadic `{}` has a default", p.name)));
            }
            counts[r] += 1;
            last_rank = r;
        }
        Ok(())
    }

    /// Parameter list in Python syntax, e.g. `(a, b=1, *, c, **kw)`.
    pub fn render(&self) -> String {
        render_signature(self)
    }
}

impl fmt::Display for ApiSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.qualified_name, self.render())
    }
}

/// Parse a parenthesized parameter list such as `(x, metric='euclidean', *args, **kwargs)`.
///
/// A trailing return annotation is accepted and ignored. Reflection-style
/// default reprs like `<no_default>` are tolerated and kept verbatim. With
/// `method_context`, the leading receiver parameter is removed.
pub fn parse_signature(
    text: &str,
    qualified_name: &str,
    version_tag: &str,
    origin: SignatureOrigin,
    method_context: bool,
) -> Result<ApiSignature, SignatureError> {
    let (sanitized, reprs) = mask_reprs(text.trim());
    if !sanitized.starts_with('(') {
        return Err(SignatureError::Syntax {
            position: 0,
            message: "expected `(`".into(),
        });
    }
    const PREFIX: &str = "def __sig__";
    let source = format!("{PREFIX}{sanitized}:\n    pass\n");
    let suite = pysrc::parse_module(&source, "<signature>").map_err(|e| {
        let offset = e.offset.to_usize().saturating_sub(PREFIX.len());
        match &e.error {
            rustpython_parser::ParseErrorType::Lexical(
                rustpython_parser::lexer::LexicalErrorType::DuplicateArgumentError(name),
            ) => SignatureError::DuplicateParam(name.to_string()),
            _ => SignatureError::Syntax {
                position: offset,
                message: e.error.to_string(),
            },
        }
    })?;
    let func = match suite.as_slice() {
        [ast::Stmt::FunctionDef(f)] => f,
        _ => {
            return Err(SignatureError::Syntax {
                position: 0,
                message: "not a single parameter list".into(),
            })
        }
    };
    let unmask = |s: &str| -> String {
        let mut out = s.to_string();
        for (placeholder, original) in &reprs {
            out = out.replace(placeholder, original);
        }
        out
    };
    let mut params = parameters_from_arguments(&source, &func.args, &unmask);
    let mut self_stripped = false;
    if method_context {
        self_stripped = strip_receiver(&mut params);
    }
    let sig = ApiSignature {
        qualified_name: qualified_name.to_string(),
        parameters: params,
        origin,
        version_tag: version_tag.to_string(),
        self_stripped,
    };
    sig.validate()?;
    Ok(sig)
}

/// Build the parameter list of a parsed `def`.
pub(crate) fn parameters_from_arguments(
    source: &str,
    args: &ast::Arguments,
    text_map: &dyn Fn(&str) -> String,
) -> Vec<Parameter> {
    let mut params = Vec::new();
    let convert = |a: &ast::ArgWithDefault, kind: ParamKind, index: usize, pos_only: bool| {
        let mut p = Parameter::new(a.def.arg.as_str(), kind, index);
        p.positional_only = pos_only;
        if let Some(ann) = &a.def.annotation {
            p.annotation_text = Some(text_map(pysrc::slice(source, ann.as_ref())));
        }
        if let Some(d) = &a.default {
            p.has_default = true;
            p.default_text = Some(text_map(pysrc::slice(source, d.as_ref())));
        }
        p
    };
    for (i, a) in args.posonlyargs.iter().enumerate() {
        params.push(convert(a, ParamKind::Positional, i, true));
    }
    let offset = args.posonlyargs.len();
    for (i, a) in args.args.iter().enumerate() {
        params.push(convert(a, ParamKind::Positional, offset + i, false));
    }
    if let Some(v) = &args.vararg {
        let mut p = Parameter::new(v.arg.as_str(), ParamKind::VarPositional, 0);
        p.annotation_text = v.annotation.as_ref().map(|a| text_map(pysrc::slice(source, a.as_ref())));
        params.push(p);
    }
    for (i, a) in args.kwonlyargs.iter().enumerate() {
        params.push(convert(a, ParamKind::KeywordOnly, i, false));
    }
    if let Some(v) = &args.kwarg {
        let mut p = Parameter::new(v.arg.as_str(), ParamKind::VarKeyword, 0);
        p.annotation_text = v.annotation.as_ref().map(|a| text_map(pysrc::slice(source, a.as_ref())));
        params.push(p);
    }
    params
}

/// Drop the leading receiver (`self`/`cls`) and renumber positionals.
pub(crate) fn strip_receiver(params: &mut Vec<Parameter>) -> bool {
    match params.first() {
        Some(p) if p.kind == ParamKind::Positional => {
            params.remove(0);
            for p in params.iter_mut().filter(|p| p.kind == ParamKind::Positional) {
                p.index -= 1;
            }
            true
        }
        _ => false,
    }
}

/// Replace `<...>` default reprs (as printed by reflection) with string
/// placeholders so the text parses; returns the placeholder map.
fn mask_reprs(text: &str) -> (String, Vec<(String, String)>) {
    let mut out = String::with_capacity(text.len());
    let mut reprs = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut quote: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = quote {
            out.push(c);
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 2;
                continue;
            }
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        if c == '\'' || c == '"' {
            quote = Some(c);
            out.push(c);
            i += 1;
            continue;
        }
        if c == '<' && out.trim_end().ends_with('=') && !out.trim_end().ends_with("==") {
            let mut depth = 0;
            let mut j = i;
            while j < chars.len() {
                match chars[j] {
                    '<' => depth += 1,
                    '>' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            if j < chars.len() {
                let original: String = chars[i..=j].iter().collect();
                let placeholder = format!("'__repr_{}__'", reprs.len());
                out.push_str(&placeholder);
                reprs.push((placeholder, original));
                i = j + 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    (out, reprs)
}

/// Render the parameter list in Python syntax. Inverse of [`parse_signature`]
/// up to whitespace.
pub fn render_signature(sig: &ApiSignature) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut pos_only_open = false;
    for p in sig.positional() {
        if !p.positional_only && pos_only_open {
            parts.push("/".into());
            pos_only_open = false;
        }
        pos_only_open |= p.positional_only;
        parts.push(p.render());
    }
    if pos_only_open {
        parts.push("/".into());
    }
    match sig.var_positional() {
        Some(v) => parts.push(v.render()),
        None if sig.keyword_only().next().is_some() => parts.push("*".into()),
        None => {}
    }
    parts.extend(sig.keyword_only().map(Parameter::render));
    if let Some(v) = sig.var_keyword() {
        parts.push(v.render());
    }
    format!("({})", parts.join(", "))
}

/// Whitespace- and quote-insensitive form of an annotation, used for comparisons.
pub fn normalize_annotation(text: &str) -> String {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let trimmed = compact.as_str();
    let unquoted = if trimmed.len() >= 2
        && ((trimmed.starts_with('\'') && trimmed.ends_with('\''))
            || (trimmed.starts_with('"') && trimmed.ends_with('"')))
    {
        &trimmed[1..trimmed.len() - 1]
    } else {
        trimmed
    };
    unquoted.to_string()
}

/// The signature exchange format shared with the reflection sidecar and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureJson {
    pub qualified_name: String,
    pub version: String,
    pub origin: SignatureOrigin,
    pub params: Vec<Parameter>,
}

impl From<&ApiSignature> for SignatureJson {
    fn from(sig: &ApiSignature) -> Self {
        SignatureJson {
            qualified_name: sig.qualified_name.clone(),
            version: sig.version_tag.clone(),
            origin: sig.origin,
            params: sig.parameters.clone(),
        }
    }
}

impl TryFrom<SignatureJson> for ApiSignature {
    type Error = SignatureError;

    fn try_from(json: SignatureJson) -> Result<Self, Self::Error> {
        let sig = ApiSignature {
            qualified_name: json.qualified_name,
            parameters: json.params,
            origin: json.origin,
            version_tag: json.version,
            self_stripped: false,
        };
        sig.validate()?;
        Ok(sig)
    }
}

impl Serialize for ApiSignature {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SignatureJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ApiSignature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = SignatureJson::deserialize(deserializer)?;
        ApiSignature::try_from(json).map_err(serde::de::Error::custom)
    }
}
