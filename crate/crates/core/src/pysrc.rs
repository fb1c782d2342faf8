//! Thin helpers over the Python parser: parsing, byte-offset to line mapping,
//! verbatim source slicing, and a child-expression walker.

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::Parse;

pub use rustpython_parser::ParseError;

/// Parse a whole module.
pub fn parse_module(source: &str, path: &str) -> Result<Vec<ast::Stmt>, ParseError> {
    ast::Suite::parse(source, path)
}

/// Parse a single expression.
pub fn parse_expr(source: &str) -> Result<ast::Expr, ParseError> {
    ast::Expr::parse(source, "<expr>")
}

pub fn span<T: Ranged>(node: &T) -> (usize, usize) {
    let r = node.range();
    (r.start().to_usize(), r.end().to_usize())
}

pub fn slice<'a, T: Ranged>(source: &'a str, node: &T) -> &'a str {
    let (s, e) = span(node);
    &source[s..e]
}

/// Maps byte offsets to 1-based line and column numbers.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(source.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    pub fn line_col(&self, source: &str, offset: usize) -> (usize, usize) {
        let line = match self.starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let col = source[self.starts[line]..offset].chars().count();
        (line + 1, col + 1)
    }
}

/// Span of an argument expression including any redundant grouping
/// parentheses around it, stopping at the call's own parentheses.
pub fn grouped_span(source: &str, inner: (usize, usize), bounds: (usize, usize)) -> (usize, usize) {
    let bytes = source.as_bytes();
    let (mut s, mut e) = inner;
    loop {
        let mut l = s;
        while l > bounds.0 && bytes[l - 1].is_ascii_whitespace() {
            l -= 1;
        }
        let mut r = e;
        while r < bounds.1 && bytes[r].is_ascii_whitespace() {
            r += 1;
        }
        if l > bounds.0 && r < bounds.1 && bytes[l - 1] == b'(' && bytes[r] == b')' {
            s = l - 1;
            e = r + 1;
        } else {
            return (s, e);
        }
    }
}

/// Byte offset of the opening parenthesis of a call's argument list.
pub fn call_open_paren(source: &str, call: &ast::ExprCall) -> usize {
    let (_, func_end) = span(call.func.as_ref());
    let (_, call_end) = span(call);
    let bytes = source.as_bytes();
    let mut i = func_end;
    while i < call_end {
        match bytes[i] {
            b'(' => return i,
            // skip comments between callee and argument list
            b'#' => {
                while i < call_end && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    func_end
}

/// Collapse a possibly multi-line source fragment into a single-line key:
/// tabs become four spaces, each line is trimmed and lines are joined by one space.
pub fn single_line(text: &str) -> String {
    let expanded = text.replace('\t', "    ");
    let mut out = String::with_capacity(expanded.len());
    for (i, line) in expanded.lines().enumerate() {
        let piece = if i == 0 { line.trim_end() } else { line.trim() };
        if piece.is_empty() {
            continue;
        }
        if !out.is_empty() && i > 0 {
            let last = out.chars().last().unwrap_or(' ');
            let first = piece.chars().next().unwrap_or(' ');
            if !(last == '(' || last == '[' || last == '{' || first == ')' || first == ']' || first == '}') {
                out.push(' ');
            }
        }
        out.push_str(piece);
    }
    out
}

/// Calls `f` for every direct child expression of `expr`, in source order.
pub fn for_each_child<'a>(expr: &'a ast::Expr, f: &mut dyn FnMut(&'a ast::Expr)) {
    use ast::Expr::*;
    match expr {
        BoolOp(e) => e.values.iter().for_each(|v| f(v)),
        NamedExpr(e) => {
            f(&e.target);
            f(&e.value);
        }
        BinOp(e) => {
            f(&e.left);
            f(&e.right);
        }
        UnaryOp(e) => f(&e.operand),
        Lambda(e) => {
            for d in arg_defaults(&e.args) {
                f(d);
            }
            f(&e.body);
        }
        IfExp(e) => {
            f(&e.test);
            f(&e.body);
            f(&e.orelse);
        }
        Dict(e) => {
            for (k, v) in e.keys.iter().zip(&e.values) {
                if let Some(k) = k {
                    f(k);
                }
                f(v);
            }
        }
        Set(e) => e.elts.iter().for_each(|v| f(v)),
        ListComp(e) => {
            f(&e.elt);
            comprehension_children(&e.generators, f);
        }
        SetComp(e) => {
            f(&e.elt);
            comprehension_children(&e.generators, f);
        }
        GeneratorExp(e) => {
            f(&e.elt);
            comprehension_children(&e.generators, f);
        }
        DictComp(e) => {
            f(&e.key);
            f(&e.value);
            comprehension_children(&e.generators, f);
        }
        Await(e) => f(&e.value),
        Yield(e) => {
            if let Some(v) = &e.value {
                f(v);
            }
        }
        YieldFrom(e) => f(&e.value),
        Compare(e) => {
            f(&e.left);
            e.comparators.iter().for_each(|v| f(v));
        }
        Call(e) => {
            f(&e.func);
            e.args.iter().for_each(|v| f(v));
            e.keywords.iter().for_each(|k| f(&k.value));
        }
        FormattedValue(e) => {
            f(&e.value);
            if let Some(spec) = &e.format_spec {
                f(spec);
            }
        }
        JoinedStr(e) => e.values.iter().for_each(|v| f(v)),
        Constant(_) | Name(_) => {}
        Attribute(e) => f(&e.value),
        Subscript(e) => {
            f(&e.value);
            f(&e.slice);
        }
        Starred(e) => f(&e.value),
        List(e) => e.elts.iter().for_each(|v| f(v)),
        Tuple(e) => e.elts.iter().for_each(|v| f(v)),
        Slice(e) => {
            for part in [&e.lower, &e.upper, &e.step].into_iter().flatten() {
                f(part);
            }
        }
    }
}

fn comprehension_children<'a>(gens: &'a [ast::Comprehension], f: &mut dyn FnMut(&'a ast::Expr)) {
    for g in gens {
        f(&g.iter);
        f(&g.target);
        g.ifs.iter().for_each(|v| f(v));
    }
}

/// Default-value expressions of a parameter list.
pub fn arg_defaults(args: &ast::Arguments) -> impl Iterator<Item = &ast::Expr> {
    args.posonlyargs
        .iter()
        .chain(&args.args)
        .chain(&args.kwonlyargs)
        .filter_map(|a| a.default.as_deref())
}

/// Dotted name of a `Name`/`Attribute` chain, e.g. `np.linalg.norm`.
pub fn dotted_name(expr: &ast::Expr) -> Option<String> {
    match expr {
        ast::Expr::Name(n) => Some(n.id.to_string()),
        ast::Expr::Attribute(a) => dotted_name(&a.value).map(|base| format!("{base}.{}", a.attr)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_is_one_based() {
        let src = "a\nbc\n";
        let idx = LineIndex::new(src);
        assert_eq!(idx.line_col(src, 0), (1, 1));
        assert_eq!(idx.line_col(src, 3), (2, 2));
    }

    #[test]
    fn single_line_joins_continuations() {
        assert_eq!(single_line("f(a,\n      b)"), "f(a, b)");
        assert_eq!(single_line("f(\n    a,\n    b,\n)"), "f(a, b,)");
        assert_eq!(single_line("f(\ta)"), "f(    a)");
    }

    #[test]
    fn grouped_span_expands_redundant_parens() {
        let src = "f((a), b)";
        assert_eq!(grouped_span(src, (3, 4), (2, 8)), (2, 5));
        assert_eq!(grouped_span(src, (7, 8), (2, 8)), (7, 8));
    }
}
