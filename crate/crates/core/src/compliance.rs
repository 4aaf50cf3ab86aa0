//! Coding-rule checks.
//!
//! Rules R1..R8 are all errors except an array parameter that is only missing
//! `static`, which is a warning. The checker never fails; violations are data.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::diag::{sort_diagnostics, Code, Diagnostic, Loc};
use crate::frontend::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    pub loc: Loc,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    /// Functions defined in the unit, in definition order.
    pub nodes: Vec<String>,
    /// One edge per textual call site.
    pub edges: Vec<CallEdge>,
}

impl CallGraph {
    pub fn successors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.caller == node)
            .map(|e| e.callee.as_str())
    }

    pub fn has_edge(&self, caller: &str, callee: &str) -> bool {
        self.edges.iter().any(|e| e.caller == caller && e.callee == callee)
    }
}

/// Builds the direct call graph. `ACCESS` bindings are not calls. Calls to
/// names that are neither defined nor whitelisted produce `E-UNDEF`.
pub fn build_call_graph(ast: &Ast) -> (CallGraph, Vec<Diagnostic>) {
    let mut graph = CallGraph {
        nodes: ast.functions.iter().map(|f| f.name.clone()).collect(),
        edges: Vec::new(),
    };
    let mut diags = Vec::new();
    for f in &ast.functions {
        for_each_call(&f.body, &mut |callee, loc| {
            if SummaryKind::from_name(callee).is_some() {
                return;
            }
            if ast.function(callee).is_none() && !is_whitelisted_external(callee) {
                diags.push(Diagnostic::error(
                    Code::Undef,
                    loc,
                    format!("call to undefined function `{callee}` in `{}`", f.name),
                ));
                return;
            }
            graph.edges.push(CallEdge {
                caller: f.name.clone(),
                callee: callee.to_string(),
                loc,
            });
        });
    }
    (graph, diags)
}

/// Calls `f(callee, loc)` for every call site, statement or expression.
fn for_each_call(body: &[Stmt], f: &mut impl FnMut(&str, Loc)) {
    for s in body {
        s.walk(&mut |s| {
            let loc = s.loc;
            if let StmtKind::Call { callee, .. } = &s.kind {
                f(callee, loc);
            }
            for e in stmt_exprs(s) {
                e.visit(&mut |e| {
                    if let Expr::Call { callee, .. } = e {
                        f(callee, loc);
                    }
                });
            }
        });
    }
}

/// Expressions owned directly by a statement (not by nested statements).
pub(crate) fn stmt_exprs(s: &Stmt) -> Vec<&Expr> {
    fn lvalue_exprs(lv: &LValue) -> Vec<&Expr> {
        match lv {
            LValue::Index { indices, .. } => indices.iter().collect(),
            _ => Vec::new(),
        }
    }
    match &s.kind {
        StmtKind::Assign { target, value, .. } => {
            let mut v = lvalue_exprs(target);
            v.push(value);
            v
        }
        StmtKind::Decl(d) => {
            let mut v: Vec<&Expr> = d.init.iter().collect();
            let mut ty = &d.ty;
            while let CType::Array { elem, dim } = ty {
                v.extend(dim.extent.iter());
                ty = elem;
            }
            v
        }
        StmtKind::For(l) => vec![&l.lower, &l.bound],
        StmtKind::While(w) => vec![&w.cond],
        StmtKind::If { cond, .. } => vec![cond],
        StmtKind::Call { args, .. } => args.iter().collect(),
        StmtKind::Return(e) => e.iter().collect(),
        StmtKind::SummaryAccess { target, .. } => lvalue_exprs(target),
        StmtKind::Block(_) | StmtKind::Labeled { .. } | StmtKind::Goto(_) => Vec::new(),
    }
}

/// One `R6` per strongly connected component that forms a cycle.
pub fn check_no_recursion(graph: &CallGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for scc in strongly_connected_components(graph) {
        let cyclic = scc.len() > 1 || graph.has_edge(&scc[0], &scc[0]);
        if !cyclic {
            continue;
        }
        let members: BTreeSet<&str> = scc.iter().map(String::as_str).collect();
        let first_edge = graph
            .edges
            .iter()
            .filter(|e| members.contains(e.caller.as_str()) && members.contains(e.callee.as_str()))
            .min_by_key(|e| e.loc);
        let loc = first_edge.map(|e| e.loc).unwrap_or_default();
        let names: Vec<&str> = members.into_iter().collect();
        let msg = if names.len() == 1 {
            format!("function `{}` calls itself", names[0])
        } else {
            format!("recursive cycle through {{{}}}", names.join(", "))
        };
        out.push(Diagnostic::error(Code::R6, loc, msg));
    }
    sort_diagnostics(&mut out);
    out
}

/// Tarjan's algorithm over the in-unit nodes. Components come out in reverse
/// topological order; members of each are in discovery order.
pub fn strongly_connected_components(graph: &CallGraph) -> Vec<Vec<String>> {
    struct State<'g> {
        graph: &'g CallGraph,
        ids: HashMap<&'g str, usize>,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<String>>,
    }

    fn visit(st: &mut State<'_>, v: usize) {
        st.index[v] = Some(st.next);
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        let name = st.graph.nodes[v].as_str();
        let succ: Vec<usize> = st
            .graph
            .successors(name)
            .filter_map(|s| st.ids.get(s).copied())
            .collect();
        for w in succ {
            match st.index[w] {
                None => {
                    visit(st, w);
                    st.low[v] = st.low[v].min(st.low[w]);
                }
                Some(iw) if st.on_stack[w] => st.low[v] = st.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(st.low[v]) == st.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack[w] = false;
                comp.push(st.graph.nodes[w].clone());
                if w == v {
                    break;
                }
            }
            comp.reverse();
            st.out.push(comp);
        }
    }

    let n = graph.nodes.len();
    let mut st = State {
        graph,
        ids: graph.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect(),
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(&mut st, v);
        }
    }
    st.out
}

/// Runs every coding rule over the unit. An empty result means the unit is
/// compliant.
pub fn check_compliance(ast: &Ast) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for f in &ast.functions {
        check_params(f, &mut diags);
        check_body(ast, f, &mut diags);
    }
    let (graph, undef) = build_call_graph(ast);
    diags.extend(undef);
    diags.extend(check_no_recursion(&graph));
    sort_diagnostics(&mut diags);
    diags
}

fn check_params(f: &FunctionDef, diags: &mut Vec<Diagnostic>) {
    for p in &f.params {
        match p.kind() {
            ParamKind::Scalar => {}
            ParamKind::Array => {
                let dims = p.ty.array_dims().expect("array param has dims");
                let lead = dims[0];
                let missing: Vec<&str> = [
                    (!lead.is_restrict).then_some("restrict"),
                    (!lead.is_const).then_some("const"),
                    (!lead.is_static).then_some("static"),
                ]
                .into_iter()
                .flatten()
                .collect();
                if missing.is_empty() {
                    continue;
                }
                let msg = format!(
                    "array parameter `{}` must be qualified restrict const static; missing {}",
                    p.name,
                    missing.join(", ")
                );
                diags.push(if missing == ["static"] {
                    Diagnostic::warning(Code::R1, p.loc, msg)
                } else {
                    Diagnostic::error(Code::R1, p.loc, msg)
                });
            }
            ParamKind::ScalarPointer => {
                let CType::Pointer {
                    is_const, is_restrict, ..
                } = &p.ty
                else {
                    unreachable!()
                };
                if !(*is_const && *is_restrict) {
                    diags.push(Diagnostic::error(
                        Code::R2,
                        p.loc,
                        format!("pointer parameter `{}` must be declared `* const restrict`", p.name),
                    ));
                }
            }
            ParamKind::OtherPointer => diags.push(Diagnostic::error(
                Code::R2,
                p.loc,
                format!(
                    "parameter `{}` is a pointer to a non-scalar; only scalars may be passed by pointer",
                    p.name
                ),
            )),
            ParamKind::ArrayOfPointers => diags.push(Diagnostic::error(
                Code::R8,
                p.loc,
                format!("parameter `{}` is an array of pointers", p.name),
            )),
        }
    }
}

fn check_body(ast: &Ast, f: &FunctionDef, diags: &mut Vec<Diagnostic>) {
    let is_summary = ast.is_summary_function(&f.name);
    let mut pointers: BTreeSet<String> = f
        .params
        .iter()
        .filter(|p| p.ty.contains_pointer())
        .map(|p| p.name.clone())
        .collect();
    let mut labels: BTreeMap<&str, Loc> = BTreeMap::new();
    for s in &f.body {
        s.walk(&mut |s| {
            if let StmtKind::Labeled { label, .. } = &s.kind {
                labels.entry(label).or_insert(s.loc);
            }
            if let StmtKind::Decl(d) = &s.kind {
                if d.ty.contains_pointer() {
                    pointers.insert(d.name.clone());
                }
            }
        });
    }
    for s in &f.body {
        s.walk(&mut |s| {
            match &s.kind {
                StmtKind::Decl(d) if d.ty.contains_pointer() => diags.push(Diagnostic::error(
                    Code::R3,
                    s.loc,
                    format!("local pointer `{}` is not allowed", d.name),
                )),
                StmtKind::Goto(label) => {
                    let mut d =
                        Diagnostic::error(Code::R5, s.loc, format!("`goto {label}` is unstructured control flow"));
                    if let Some(l) = labels.get(label.as_str()) {
                        d = d.with_related(*l);
                    }
                    diags.push(d);
                }
                StmtKind::SummaryAccess { kind, .. } if !is_summary => diags.push(Diagnostic::error(
                    Code::R7,
                    s.loc,
                    format!("`{}` may only appear in an access-summary function", kind.as_str()),
                )),
                StmtKind::Assign {
                    target: LValue::Var(v), ..
                } if pointers.contains(v) => diags.push(Diagnostic::error(
                    Code::R4,
                    s.loc,
                    format!("pointer `{v}` may not be reseated"),
                )),
                StmtKind::Assign {
                    target: LValue::Index { array, .. },
                    ..
                } if pointers.contains(array) => diags.push(Diagnostic::error(
                    Code::R4,
                    s.loc,
                    format!("subscripting pointer `{array}` is pointer arithmetic"),
                )),
                _ => {}
            }
            for e in stmt_exprs(s) {
                check_expr(e, s.loc, &pointers, diags);
            }
        });
    }
}

fn check_expr(e: &Expr, loc: Loc, pointers: &BTreeSet<String>, diags: &mut Vec<Diagnostic>) {
    let is_ptr = |e: &Expr| matches!(e, Expr::Var(v) if pointers.contains(v));
    e.visit(&mut |e| match e {
        Expr::AddrOf(_) => diags.push(Diagnostic::error(Code::R4, loc, "address-of is not allowed")),
        Expr::Binary {
            op: BinOp::Add | BinOp::Sub,
            lhs,
            rhs,
        } if is_ptr(lhs) || is_ptr(rhs) => {
            diags.push(Diagnostic::error(Code::R4, loc, "pointer arithmetic is not allowed"))
        }
        Expr::Index { array, .. } if pointers.contains(array) => diags.push(Diagnostic::error(
            Code::R4,
            loc,
            format!("subscripting pointer `{array}` is pointer arithmetic"),
        )),
        _ => {}
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn codes(src: &str) -> Vec<Code> {
        let ast = parse_source("t", src).unwrap_or_else(|d| panic!("{d:#?}"));
        check_compliance(&ast).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn listing_foo_is_compliant() {
        let src = "void foo (int a[restrict const static 5]) {\n  a[0] = 1;\n  int c[2];\n}";
        assert_eq!(codes(src), []);
    }

    #[test]
    fn listing_bar_violates_r8_and_r3() {
        let ast = parse_source("t", "void bar (int *(d[4])) {\n  int *e;\n}").unwrap();
        let diags = check_compliance(&ast);
        assert_eq!(diags.iter().map(|d| d.code).collect::<Vec<_>>(), [Code::R8, Code::R3]);
        assert_eq!(diags[0].loc, Loc::new(1, 11));
        assert_eq!(diags[1].loc, Loc::new(2, 3));
    }

    #[test]
    fn mutual_recursion() {
        let ast = parse_source("t", "void f(int n) { g(n); }\nvoid g(int n) { f(n); }").unwrap();
        let diags = check_compliance(&ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::R6);
        assert!(diags[0].message.contains("{f, g}"), "{}", diags[0].message);
    }

    #[test]
    fn qualifier_rules() {
        assert_eq!(codes("void f(int n, int a[restrict const n]) {}"), [Code::R1]);
        let ast = parse_source("t", "void f(int n, int a[restrict const n]) {}").unwrap();
        assert!(!check_compliance(&ast)[0].is_error());
        let ast = parse_source("t", "void f(int n, int a[n]) {}").unwrap();
        assert!(check_compliance(&ast)[0].is_error());
        assert_eq!(codes("void f(int * const restrict p) { *p = 1; }"), []);
        assert_eq!(codes("void f(int *p) { *p = 1; }"), [Code::R2]);
        assert_eq!(codes("void f(int **p) { }"), [Code::R2]);
    }

    #[test]
    fn pointer_arithmetic_and_reseating() {
        assert_eq!(codes("void f(int * const restrict p, int x) { x = *p + 1; }"), []);
        assert_eq!(
            codes("void f(int x) { f2(&x); }\nvoid f2(int * const restrict p) { }"),
            [Code::R4]
        );
        assert_eq!(
            codes("void f(int * const restrict p, int * const restrict q) { p = q; }"),
            [Code::R4]
        );
        assert_eq!(codes("void f(int * const restrict p) { p[1] = 0; }"), [Code::R4]);
    }

    #[test]
    fn goto_is_r5() {
        let ast = parse_source("t", "void f(int n) {\n  top: n = n - 1;\n  if (n > 0) goto top;\n}").unwrap();
        let d = check_compliance(&ast);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::R5);
        assert_eq!(d[0].related, Some(Loc::new(2, 3)));
    }

    #[test]
    fn summary_macros_outside_summaries() {
        let src = "void s(int n, int A[restrict const static n]) { DEF(A[0]); }\n\
                   void f(int n, int A[restrict const static n]) ACCESS(s(n, A)) { A[0] = 1; }";
        assert_eq!(codes(src), []);
        assert_eq!(
            codes("void f(int n, int A[restrict const static n]) { DEF(A[0]); }"),
            [Code::R7]
        );
    }

    #[test]
    fn undefined_calls() {
        assert_eq!(codes("void f(int n) { g(n); }"), [Code::Undef]);
        assert_eq!(codes("double f(int n) { return exp(n); }"), []);
    }

    #[test]
    fn call_graph_edges() {
        let ast = parse_source(
            "t",
            "void kernel(int n) { }\nvoid main_loop(int n) { int i; for (i = 0; i < n; i++) kernel(i); }",
        )
        .unwrap();
        let (g, d) = build_call_graph(&ast);
        assert!(d.is_empty());
        assert_eq!(g.edges.len(), 1);
        assert_eq!(
            (g.edges[0].caller.as_str(), g.edges[0].callee.as_str()),
            ("main_loop", "kernel")
        );

        let ast = parse_source("t", "void f(void) { f(); }").unwrap();
        let (g, _) = build_call_graph(&ast);
        assert!(g.has_edge("f", "f"));

        let ast = parse_source(
            "t",
            "void foo_summary(int n, int A[restrict const static n]) { DEF(A[0]); }\n\
             void foo(int n, int A[restrict const static n]) ACCESS(foo_summary(n, A)) { A[0] = 0; }",
        )
        .unwrap();
        let (g, _) = build_call_graph(&ast);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn recursion_by_scc() {
        let graph = |edges: &[(&str, &str)]| CallGraph {
            nodes: ["f", "g", "h", "k"].map(String::from).to_vec(),
            edges: edges
                .iter()
                .enumerate()
                .map(|(i, (a, b))| CallEdge {
                    caller: a.to_string(),
                    callee: b.to_string(),
                    loc: Loc::new(i as u32 + 1, 1),
                })
                .collect(),
        };
        assert!(check_no_recursion(&graph(&[("f", "g"), ("g", "h")])).is_empty());
        assert_eq!(check_no_recursion(&graph(&[("f", "g"), ("g", "f")])).len(), 1);
        // f->f and g->h->g: components {f}, {g,h}, {k}.
        let d = check_no_recursion(&graph(&[("f", "f"), ("g", "h"), ("h", "g"), ("k", "g")]));
        assert_eq!(d.len(), 2);
        assert!(d[0].message.contains("`f` calls itself"));
        assert!(d[1].message.contains("{g, h}"));
    }
}
