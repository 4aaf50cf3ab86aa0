//! OpenMP-annotated C emission.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::print::{expr_to_string, Printer};
use crate::depanalysis::{DependenceReport, Verdict};
use crate::diag::{Code, Diagnostic, Loc};
use crate::frontend::*;

/// Emitted C plus the origin of every line the emitter added.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoweredSource {
    pub text: String,
    pub pragma_map: Vec<PragmaOrigin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PragmaOrigin {
    /// 1-based line of the emitted pragma or marker comment.
    pub line: usize,
    pub loop_id: String,
}

pub const INDEPENDENT_MARKER: &str = "/* pencil:independent */";

/// Definitions that let emitted code compile as plain C: summary macros
/// expand to nothing and `rand` follows the interpreter's generator.
pub const C_PRELUDE: &str = "\
#include <math.h>
#include <stdlib.h>
#define ACCESS(call)
#define DEF(x) ((void)0)
#define USE(x) ((void)0)
#define MAY_DEF(x) ((void)0)
static unsigned long long pencil_rand_state = 1;
static int pencil_rand(void)
{
  pencil_rand_state = pencil_rand_state * 6364136223846793005ULL + 1442695040888963407ULL;
  return (int)((pencil_rand_state >> 33) & 0x7fffffff);
}
#define rand pencil_rand
";

/// What the emitter needs to know about one loop.
#[derive(Debug, Clone)]
pub(crate) struct LoopSite {
    pub id: String,
    pub loc: Loc,
    /// Names visible right before the loop, innermost binding wins.
    pub scope: HashMap<String, CType>,
    pub reductions: Vec<(ReductionOp, Vec<String>)>,
    /// Counters of nested `for` loops that are declared outside the loop.
    pub inner_counters: BTreeSet<String>,
}

/// Loop sites of `f` in the pre-order used for loop ids.
pub(crate) fn loop_sites(f: &FunctionDef) -> Vec<LoopSite> {
    let mut scope: Vec<(String, CType)> = f.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
    let mut out = Vec::new();
    for s in &f.body {
        visit(s, &f.name, &mut scope, &mut out);
    }
    out
}

fn visit(s: &Stmt, func: &str, scope: &mut Vec<(String, CType)>, out: &mut Vec<LoopSite>) {
    match &s.kind {
        StmtKind::Decl(d) => scope.push((d.name.clone(), d.ty.clone())),
        StmtKind::For(l) => {
            let site = LoopSite {
                id: format!("{func}#{}", out.len()),
                loc: s.loc,
                scope: scope.iter().cloned().collect(),
                reductions: reductions(&l.directives),
                inner_counters: inner_counters(&l.body),
            };
            out.push(site);
            let mark = scope.len();
            if let Some(t) = l.declares {
                scope.push((l.var.clone(), CType::scalar(t)));
            }
            visit(&l.body, func, scope, out);
            scope.truncate(mark);
        }
        StmtKind::While(w) => {
            out.push(LoopSite {
                id: format!("{func}#{}", out.len()),
                loc: s.loc,
                scope: scope.iter().cloned().collect(),
                reductions: reductions(&w.directives),
                inner_counters: BTreeSet::new(),
            });
            visit(&w.body, func, scope, out);
        }
        StmtKind::Block(b) => {
            let mark = scope.len();
            for s in b {
                visit(s, func, scope, out);
            }
            scope.truncate(mark);
        }
        _ => {
            for c in s.children() {
                visit(c, func, scope, out);
            }
        }
    }
}

fn reductions(ds: &[Directive]) -> Vec<(ReductionOp, Vec<String>)> {
    ds.iter()
        .filter_map(|d| match &d.kind {
            DirectiveKind::Reduction { op, vars } => Some((*op, vars.clone())),
            _ => None,
        })
        .collect()
}

fn inner_counters(body: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    body.walk(&mut |s| {
        if let StmtKind::For(l) = &s.kind {
            if l.declares.is_none() {
                out.insert(l.var.clone());
            }
        }
    });
    out
}

fn leaves_early(s: &Stmt) -> bool {
    let mut found = false;
    s.walk(&mut |s| found |= matches!(s.kind, StmtKind::Return(_) | StmtKind::Goto(_)));
    found
}

/// Builds the `#pragma omp parallel for` line for a parallel `for` loop.
fn omp_pragma(site: &LoopSite) -> Result<String, Diagnostic> {
    let mut text = "#pragma omp parallel for".to_string();
    let private: Vec<&str> = site
        .inner_counters
        .iter()
        .filter(|v| site.scope.contains_key(*v))
        .map(String::as_str)
        .collect();
    if !private.is_empty() {
        text.push_str(&format!(" private({})", private.join(", ")));
    }
    let mut by_op: BTreeMap<ReductionOp, Vec<String>> = BTreeMap::new();
    for (op, vars) in &site.reductions {
        for v in vars {
            by_op.entry(*op).or_default().push(reduction_item(site, v)?);
        }
    }
    for (op, items) in by_op {
        text.push_str(&format!(" reduction({op}:{})", items.join(", ")));
    }
    Ok(text)
}

/// A reduction list item: the scalar name, or a full array section.
fn reduction_item(site: &LoopSite, var: &str) -> Result<String, Diagnostic> {
    let err = |why: &str| {
        Diagnostic::error(
            Code::Emit,
            site.loc,
            format!("reduction variable `{var}` of loop {} {why}", site.id),
        )
    };
    match site.scope.get(var) {
        None => Err(err("is not in scope at the loop")),
        Some(CType::Scalar { .. }) => Ok(var.to_string()),
        Some(ty) => {
            let dims = ty
                .array_dims()
                .ok_or_else(|| err("is neither a scalar nor an array of scalars"))?;
            let mut item = var.to_string();
            for d in dims {
                let e = d.extent.as_ref().ok_or_else(|| err("has a dimension without extent"))?;
                item.push_str(&format!("[0:{}]", expr_to_string(e)));
            }
            Ok(item)
        }
    }
}

/// Prints `ast` as C, adding OpenMP pragmas to parallel `for` loops and a
/// marker comment to `while` loops assumed parallel. Loops without a report,
/// or with a SERIAL or UNKNOWN verdict, are printed unchanged.
pub fn emit_openmp(ast: &Ast, reports: &[DependenceReport]) -> Result<LoweredSource, Vec<Diagnostic>> {
    let verdicts: HashMap<&str, Verdict> = reports.iter().map(|r| (r.loop_id.as_str(), r.verdict)).collect();
    let mut extra: HashMap<String, String> = HashMap::new();
    let mut diags = Vec::new();
    for f in &ast.functions {
        let sites = loop_sites(f);
        let loops = crate::depanalysis::loops_of(f);
        for (site, lr) in sites.iter().zip(&loops) {
            let Some(&v) = verdicts.get(site.id.as_str()) else {
                continue;
            };
            if !v.is_parallel() {
                continue;
            }
            match &lr.stmt.kind {
                StmtKind::While(_) if v == Verdict::AssumedParallel => {
                    extra.insert(site.id.clone(), INDEPENDENT_MARKER.to_string());
                }
                StmtKind::While(_) => {}
                // OpenMP loop bodies must be structured blocks.
                _ if leaves_early(lr.stmt) => {}
                _ => match omp_pragma(site) {
                    Ok(p) => {
                        extra.insert(site.id.clone(), p);
                    }
                    Err(d) => diags.push(d),
                },
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let mut hook = |id: &str| extra.get(id).cloned().into_iter().collect::<Vec<_>>();
    let mut p = Printer::new(Some(&mut hook));
    p.unit(ast);
    let (text, hooked) = p.finish();
    Ok(LoweredSource {
        text,
        pragma_map: hooked
            .into_iter()
            .map(|(line, loop_id)| PragmaOrigin { line, loop_id })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depanalysis::{analyze_function, AnalyzeOptions};
    use crate::frontend::{parse_source, parse_source_with, ParseOptions};
    use crate::summaries::ParamBinding;

    fn lower(src: &str) -> LoweredSource {
        let ast = parse_source("t.c", src).unwrap();
        let mut reports = Vec::new();
        for f in &ast.functions {
            reports.extend(analyze_function(&ast, f, &ParamBinding::new(), AnalyzeOptions::default()).0);
        }
        let out = emit_openmp(&ast, &reports).unwrap();
        let back = parse_source_with(
            "t.omp.c",
            &out.text,
            ParseOptions {
                skip_foreign_pragmas: true,
            },
        )
        .unwrap_or_else(|d| panic!("{d:?}\n{}", out.text));
        assert_eq!(back.without_locations(), ast.without_locations());
        out
    }

    fn line(text: &str, n: usize) -> &str {
        text.lines().nth(n - 1).unwrap().trim()
    }

    #[test]
    fn scalar_reduction_gets_clause() {
        let out = lower(
            "double f(void) {
               double x = exp(0);
               #pragma pencil reduction (+:x)
               for (int i = 1; i <= 100; i++) x += exp(i);
               return x;
             }",
        );
        assert_eq!(out.pragma_map.len(), 1);
        assert_eq!(out.pragma_map[0].loop_id, "f#0");
        assert_eq!(
            line(&out.text, out.pragma_map[0].line),
            "#pragma omp parallel for reduction(+:x)"
        );
        let p = out.text.find("#pragma omp").unwrap();
        assert!(out.text[p..].lines().nth(1).unwrap().trim_start().starts_with("for"));
    }

    #[test]
    fn unknown_loop_is_unchanged() {
        let src = "void f(int n, int A[const restrict static n], int t[const restrict static n]) {
               for (int i = 0; i < n; i++) A[t[i]]++;
             }";
        let out = lower(src);
        assert!(out.pragma_map.is_empty());
        assert_eq!(out.text, super::super::pretty_print(&parse_source("t.c", src).unwrap()));
    }

    #[test]
    fn assumed_parallel_while_gets_marker_only() {
        let out = lower(
            "void f(int n, int A[const restrict static n]) {
               int k = 0;
               #pragma pencil independent
               while (k < n) { A[k] = 0; k += 1; }
             }",
        );
        assert_eq!(out.pragma_map.len(), 1);
        assert_eq!(line(&out.text, out.pragma_map[0].line), INDEPENDENT_MARKER);
        assert!(!out.text.contains("#pragma omp"));
    }

    #[test]
    fn parallel_and_assumed_loops_get_pragma() {
        let out = lower(
            "void f(int n, int A[const restrict static n], int t[const restrict static n]) {
               int j;
               for (int i = 0; i < n; i++) A[i] = 2 * i;
               #pragma pencil independent
               for (int i = 0; i < n; i++) A[t[i]] += 1;
               for (int i = 0; i < n; i++) A[i] = A[i + 1];
               for (int i = 0; i < 4; i++) { for (j = 0; j < 3; j++) A[i * 3 + j] = j; }
             }",
        );
        let ids: Vec<&str> = out.pragma_map.iter().map(|p| p.loop_id.as_str()).collect();
        assert_eq!(ids, ["f#0", "f#1", "f#3", "f#4"]);
        assert_eq!(
            line(&out.text, out.pragma_map[2].line),
            "#pragma omp parallel for private(j)"
        );
    }

    #[test]
    fn array_reduction_uses_sections() {
        let out = lower(
            "void f(int n, int m, int c[const restrict static m], int e[const restrict static n], int map[const restrict static n]) {
               #pragma pencil reduction (+:c)
               for (int i = 0; i < 4; i++) c[map[i]] += e[i];
             }",
        );
        assert_eq!(
            line(&out.text, out.pragma_map[0].line),
            "#pragma omp parallel for reduction(+:c[0:m])"
        );
    }

    #[test]
    fn labeled_loop_pragma_follows_label() {
        let out = lower(
            "void f(int n, int A[const restrict static n]) {
               #pragma pencil independent
               top: for (int i = 0; i < n; i++) A[i] = 1;
             }",
        );
        let l = out.pragma_map[0].line;
        assert_eq!(line(&out.text, l - 1), "top:");
        assert_eq!(line(&out.text, l - 2), "#pragma pencil independent");
    }

    #[test]
    fn out_of_scope_reduction_is_rejected() {
        let mut ast = parse_source("t.c", "void f(int n) { for (int i = 0; i < n; i++) ; }").unwrap();
        let StmtKind::For(l) = &mut ast.functions[0].body[0].kind else {
            panic!()
        };
        l.directives
            .push(Directive::reduction(ReductionOp::Add, vec!["ghost".into()]));
        let f = &ast.functions[0];
        let (reports, _) = analyze_function(&ast, f, &ParamBinding::new(), AnalyzeOptions::default());
        assert!(reports[0].verdict.is_parallel());
        let errs = emit_openmp(&ast, &reports).unwrap_err();
        assert_eq!(errs[0].code, Code::Emit);
    }
}
