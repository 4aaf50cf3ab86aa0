//! The versioned JSON analysis report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::openmp::loop_sites;
use crate::depanalysis::DependenceReport;
use crate::diag::{sort_diagnostics, Diagnostic, Loc};
use crate::frontend::{Ast, CType, ScalarType};
use crate::summaries::{AccessRelationTriple, ParamBinding};

pub const REPORT_SCHEMA: &str = "pencilc-report-v1";

/// Set when a parallel loop reduces into a floating-point variable, so its
/// result depends on the reduction order.
pub const FLAG_FP_REDUCTION: &str = "fp-reduction-reorders-results";
/// Set when a reduction directive names an array rather than a scalar.
pub const FLAG_ARRAY_REDUCTION: &str = "array-reduction";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub source: String,
    pub binding: ParamBinding,
    /// Diagnostics outside every function, e.g. from a failed parse.
    pub diagnostics: Vec<Diagnostic>,
    pub functions: Vec<FunctionReport>,
    pub flags: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionReport {
    pub name: String,
    pub loc: Loc,
    pub is_summary: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub summary: Option<AccessRelationTriple>,
    pub loops: Vec<DependenceReport>,
}

/// Identifies the input of a report.
#[derive(Debug, Clone, Default)]
pub struct ReportMeta {
    pub source: String,
    pub binding: ParamBinding,
}

impl Report {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .chain(self.functions.iter().flat_map(|f| &f.diagnostics))
            .any(Diagnostic::is_error)
    }

    pub fn loops(&self) -> impl Iterator<Item = &DependenceReport> {
        self.functions.iter().flat_map(|f| &f.loops)
    }

    pub fn all_diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .chain(self.functions.iter().flat_map(|f| &f.diagnostics))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable rendering used by `--format text`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in self.all_diagnostics() {
            let _ = writeln!(out, "{}:{}: {}", self.source, d.loc, describe(d));
        }
        for f in &self.functions {
            if let Some(t) = &f.summary {
                let _ = writeln!(out, "summary {}:", f.name);
                for (label, set) in [
                    ("must-write", &t.must_write),
                    ("may-write", &t.may_write),
                    ("read", &t.read),
                ] {
                    let mut elems: Vec<String> = set.iter().map(|r| r.to_string()).collect();
                    elems.dedup();
                    let _ = writeln!(out, "  {label}: {{{}}}", elems.join(", "));
                }
            }
            for l in &f.loops {
                let _ = write!(out, "loop {} at {}:{}: {}", l.loop_id, self.source, l.loc, l.verdict);
                if let Some(b) = l.basis {
                    let _ = write!(
                        out,
                        " ({})",
                        serde_json::to_value(b).unwrap().as_str().unwrap_or_default()
                    );
                }
                if !l.reduction_vars.is_empty() {
                    let _ = write!(out, " reduction: {}", l.reduction_vars.join(", "));
                }
                if let Some(n) = &l.note {
                    let _ = write!(out, "; {n}");
                }
                out.push('\n');
                for w in &l.witnesses {
                    let _ = writeln!(out, "  {w}");
                }
                if l.witnesses_truncated {
                    let _ = writeln!(out, "  ...");
                }
            }
        }
        for (k, v) in self.flags.iter().filter(|(_, v)| **v) {
            let _ = writeln!(out, "flag {k}={v}");
        }
        out
    }
}

fn describe(d: &Diagnostic) -> String {
    let sev = if d.is_error() { "error" } else { "warning" };
    format!("{sev} {}: {}", d.code, d.message)
}

/// Assembles the report. Diagnostics are attributed to the function whose
/// text contains their location; `triples` is keyed by function name.
pub fn emit_report(
    meta: &ReportMeta,
    ast: Option<&Ast>,
    diagnostics: &[Diagnostic],
    triples: &BTreeMap<String, AccessRelationTriple>,
    reports: &[DependenceReport],
) -> Report {
    let mut unit_diags = Vec::new();
    let mut functions: Vec<FunctionReport> = ast
        .map(|ast| {
            ast.functions
                .iter()
                .map(|f| FunctionReport {
                    name: f.name.clone(),
                    loc: f.loc,
                    is_summary: ast.is_summary_function(&f.name),
                    diagnostics: Vec::new(),
                    summary: triples.get(&f.name).cloned(),
                    loops: reports.iter().filter(|r| r.function == f.name).cloned().collect(),
                })
                .collect()
        })
        .unwrap_or_default();
    for d in diagnostics {
        let owner = functions
            .iter()
            .rposition(|f| f.loc <= d.loc && f.loc != Loc::default());
        match owner {
            Some(k) => functions[k].diagnostics.push(d.clone()),
            None => unit_diags.push(d.clone()),
        }
    }
    sort_diagnostics(&mut unit_diags);
    for f in &mut functions {
        sort_diagnostics(&mut f.diagnostics);
        f.loops.sort_by_key(|l| loop_index(&l.loop_id));
    }
    let mut flags = BTreeMap::from([
        (FLAG_FP_REDUCTION.to_string(), false),
        (FLAG_ARRAY_REDUCTION.to_string(), false),
    ]);
    if let Some(ast) = ast {
        for f in &ast.functions {
            for site in loop_sites(f) {
                let parallel = reports.iter().any(|r| r.loop_id == site.id && r.verdict.is_parallel());
                for v in site.reductions.iter().flat_map(|(_, vars)| vars) {
                    let Some(ty) = site.scope.get(v) else { continue };
                    if !matches!(ty, CType::Scalar { .. }) {
                        flags.insert(FLAG_ARRAY_REDUCTION.to_string(), true);
                    }
                    if parallel && ty.base() != ScalarType::Int {
                        flags.insert(FLAG_FP_REDUCTION.to_string(), true);
                    }
                }
            }
        }
    }
    Report {
        schema: REPORT_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION"),
        source: meta.source.clone(),
        binding: meta.binding.clone(),
        diagnostics: unit_diags,
        functions,
        flags,
    }
}

fn loop_index(id: &str) -> usize {
    id.rsplit('#').next().and_then(|k| k.parse().ok()).unwrap_or(usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::check_compliance;
    use crate::depanalysis::{analyze_function, AnalyzeOptions, Verdict};
    use crate::diag::Code;
    use crate::frontend::parse_source;

    fn report_for(src: &str) -> Report {
        let ast = parse_source("t.c", src).unwrap();
        let mut diags = check_compliance(&ast);
        let mut loops = Vec::new();
        for f in &ast.functions {
            let (r, d) = analyze_function(&ast, f, &ParamBinding::new(), AnalyzeOptions::default());
            loops.extend(r);
            diags.extend(d);
        }
        let meta = ReportMeta {
            source: "t.c".into(),
            ..Default::default()
        };
        emit_report(&meta, Some(&ast), &diags, &BTreeMap::new(), &loops)
    }

    #[test]
    fn compliant_parallel_unit() {
        let r = report_for("void f(int n, int A[const restrict static n]) { for (int i = 0; i < n; i++) A[i] = i; }");
        assert!(r.all_diagnostics().next().is_none());
        let loops: Vec<_> = r.loops().collect();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].verdict, Verdict::Parallel);
        assert!(r.to_json().contains("\"verdict\": \"PARALLEL\""));
        assert!(!r.flags[FLAG_FP_REDUCTION]);
    }

    #[test]
    fn bar_listing_carries_r8_and_r3() {
        let r = report_for("void bar (int *(d[4])) {\n  int *e;\n}");
        let mut codes: Vec<Code> = r.functions[0].diagnostics.iter().map(|d| d.code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes, [Code::R3, Code::R8]);
        assert!(r.has_errors());
    }

    #[test]
    fn floating_reduction_sets_flag() {
        let r = report_for(
            "double f(void) {
               double x = exp(0);
               #pragma pencil reduction (+:x)
               for (int i = 1; i <= 100; i++) x += exp(i);
               return x;
             }",
        );
        assert_eq!(r.loops().next().unwrap().verdict, Verdict::ParallelWithReduction);
        assert!(r.flags[FLAG_FP_REDUCTION]);
        assert!(!r.flags[FLAG_ARRAY_REDUCTION]);
    }

    #[test]
    fn integer_reduction_leaves_flag_clear() {
        let r = report_for(
            "int f(void) {
               int x = 0;
               #pragma pencil reduction (+:x)
               for (int i = 1; i <= 10; i++) x += i;
               return x;
             }",
        );
        assert!(!r.flags[FLAG_FP_REDUCTION]);
    }

    #[test]
    fn json_is_deterministic_and_ordered() {
        let src = "void f(int n, int A[const restrict static n], int t[const restrict static n]) {
               for (int i = 0; i < n; i++) A[t[i]] += 1;
               while (n > 0) n -= 1;
             }";
        let a = report_for(src).to_json();
        let b = report_for(src).to_json();
        assert_eq!(a, b);
        let keys = [
            "\"schema\"",
            "\"tool_version\"",
            "\"source\"",
            "\"binding\"",
            "\"diagnostics\"",
            "\"functions\"",
            "\"flags\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| a.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(a.contains("\"verdict\": \"UNKNOWN\""));
    }

    #[test]
    fn unit_diagnostics_without_ast() {
        let d = Diagnostic::error(Code::Syntax, Loc::new(1, 1), "bad");
        let r = emit_report(&ReportMeta::default(), None, &[d], &BTreeMap::new(), &[]);
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.functions.is_empty());
        assert!(r.has_errors());
    }
}
