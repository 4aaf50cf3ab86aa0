//! Random PENCIL programs for property tests. Enabled by the `testgen`
//! feature; every generator yields source text plus the binding it needs.

use proptest::prelude::*;

use crate::summaries::ParamBinding;

/// Extent of every data array in generated loops.
pub const LOOP_ARRAY_EXTENT: i64 = 40;
/// Extent of every array in generated summaries.
pub const SUMMARY_ARRAY_EXTENT: i64 = 16;

#[derive(Debug, Clone)]
pub struct GeneratedLoop {
    pub source: String,
    pub binding: ParamBinding,
    /// Name of the function holding the loop; it has exactly one loop.
    pub function: &'static str,
}

#[derive(Debug, Clone)]
enum Index {
    Affine(i64, i64),
    Table(&'static str, i64),
}

impl Index {
    fn render(&self) -> String {
        match self {
            Index::Affine(0, b) => b.to_string(),
            Index::Affine(a, b) => format!("{a} * i + {b}"),
            Index::Table(t, 0) => format!("{t}[i]"),
            Index::Table(t, b) => format!("{t}[i] + {b}"),
        }
    }
}

fn index() -> impl Strategy<Value = Index> {
    prop_oneof![
        (-2i64..=2, 0i64..=16).prop_map(|(a, b)| Index::Affine(a, if a < 0 { b + 16 } else { b })),
        (prop_oneof![Just("t"), Just("u")], 0i64..=4).prop_map(|(t, b)| Index::Table(t, b)),
    ]
}

fn array() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("A"), Just("B")]
}

fn loop_stmt() -> impl Strategy<Value = String> {
    (array(), index(), array(), index(), any::<bool>(), 0i64..5).prop_map(|(w, wi, r, ri, update, c)| {
        if update {
            format!("{w}[{}] += {r}[{}];", wi.render(), ri.render())
        } else {
            format!("{w}[{}] = {r}[{}] + {c};", wi.render(), ri.render())
        }
    })
}

/// A single `for` loop with at most 8 iterations over affine or
/// table-indexed accesses. Tables `t` and `u` are bound to values in `0..8`.
pub fn bounded_loop() -> impl Strategy<Value = GeneratedLoop> {
    (
        0i64..=3,
        0i64..=8,
        prop::collection::vec(loop_stmt(), 1..=3),
        prop::collection::vec(0i64..8, 8),
        prop::collection::vec(0i64..8, 8),
    )
        .prop_map(|(lo, n, body, t, u)| {
            let ext = LOOP_ARRAY_EXTENT;
            let source = format!(
                "void k(int n, int A[const restrict static {ext}], int B[const restrict static {ext}],\n\
                 \x20      int t[const restrict static 8], int u[const restrict static 8])\n\
                 {{\n  for (int i = {lo}; i < n; i++) {{\n    {}\n  }}\n}}\n",
                body.join("\n    ")
            );
            let binding = ParamBinding::new().scalar("n", n).array("t", t).array("u", u);
            GeneratedLoop {
                source,
                binding,
                function: "k",
            }
        })
}

#[derive(Debug, Clone)]
enum SStmt {
    Access(&'static str, &'static str, i64, i64),
    For(i64, Vec<SStmt>),
    IfN(i64, Vec<SStmt>, Vec<SStmt>),
    IfEven(Vec<SStmt>),
}

fn summary_stmt() -> impl Strategy<Value = SStmt> {
    summary_stmt_leaf().prop_recursive(3, 24, 4, |inner| {
        let block = prop::collection::vec(inner, 1..=3);
        prop_oneof![
            (0i64..=5, block.clone()).prop_map(|(b, s)| SStmt::For(b, s)),
            (
                0i64..=5,
                block.clone(),
                prop::collection::vec(summary_stmt_leaf(), 0..=2)
            )
                .prop_map(|(c, t, e)| SStmt::IfN(c, t, e)),
            block.prop_map(SStmt::IfEven),
        ]
    })
}

fn summary_stmt_leaf() -> impl Strategy<Value = SStmt> {
    (
        prop_oneof![Just("DEF"), Just("USE"), Just("MAY_DEF")],
        prop_oneof![Just("A"), Just("B")],
        0i64..=3,
        0i64..=15,
    )
        .prop_map(|(k, a, c, d)| SStmt::Access(k, a, c, d))
}

fn render_summary(stmts: &[SStmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth + 1);
    // Innermost enclosing loop counter; `n` at the top level.
    let var = if depth == 0 {
        "n".to_string()
    } else {
        format!("v{}", depth - 1)
    };
    for s in stmts {
        match s {
            SStmt::Access(kind, a, c, d) => {
                out.push_str(&format!(
                    "{pad}{kind}({a}[({c} * {var} + {d}) % {SUMMARY_ARRAY_EXTENT}]);\n"
                ));
            }
            SStmt::For(bound, body) => {
                let v = format!("v{depth}");
                let bound = if *bound == 0 {
                    "n".to_string()
                } else {
                    bound.to_string()
                };
                out.push_str(&format!("{pad}for (int {v} = 0; {v} < {bound}; {v}++) {{\n"));
                render_summary(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            SStmt::IfN(c, then, otherwise) => {
                out.push_str(&format!("{pad}if (n < {c}) {{\n"));
                render_nested(then, depth, out);
                out.push_str(&format!("{pad}}} else {{\n"));
                render_nested(otherwise, depth, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            SStmt::IfEven(then) => {
                out.push_str(&format!("{pad}if ({var} % 2 == 0) {{\n"));
                render_nested(then, depth, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

/// Renders a branch body one level deeper while keeping the enclosing
/// loop counter in scope.
fn render_nested(stmts: &[SStmt], depth: usize, out: &mut String) {
    let mut inner = String::new();
    render_summary(stmts, depth, &mut inner);
    for line in inner.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedSummary {
    /// A unit holding the summary `s` and the annotated function `f`.
    pub source: String,
    pub binding: ParamBinding,
}

/// An access-summary function with nested loops and data-independent
/// branches, plus a function whose `ACCESS` annotation points at it.
pub fn summary_program() -> impl Strategy<Value = GeneratedSummary> {
    (prop::collection::vec(summary_stmt(), 1..=4), 0i64..=6).prop_map(|(body, n)| {
        let ext = SUMMARY_ARRAY_EXTENT;
        let params = format!("int n, int A[const restrict static {ext}], int B[const restrict static {ext}]");
        let mut text = String::new();
        render_summary(&body, 0, &mut text);
        let source = format!("void s({params})\n{{\n{text}}}\n\nvoid f({params})\n  ACCESS(s(n, A, B))\n{{\n}}\n");
        GeneratedSummary {
            source,
            binding: ParamBinding::new().scalar("n", n),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    #[test]
    fn generated_programs_parse() {
        let mut runner = TestRunner::deterministic();
        for _ in 0..50 {
            let l = bounded_loop().new_tree(&mut runner).unwrap().current();
            parse_source("k.c", &l.source).unwrap_or_else(|d| panic!("{}\n{d:?}", l.source));
            let s = summary_program().new_tree(&mut runner).unwrap().current();
            parse_source("s.c", &s.source).unwrap_or_else(|d| panic!("{}\n{d:?}", s.source));
        }
    }
}
