//! The end-to-end pipeline behind every `pencilc` subcommand.

use std::collections::BTreeMap;

use crate::compliance::check_compliance;
use crate::depanalysis::{analyze_function, AnalyzeOptions};
use crate::diag::{Code, Diagnostic, Loc};
use crate::dslfront::{load_op2_model, lower_op2_model, lower_optiml, Op2Model, OptimlConstruct};
use crate::frontend::{parse_source, Ast, ParamKind};
use crate::lowering::{emit_openmp, emit_report, pretty_print, LoweredSource, Report, ReportMeta};
use crate::summaries::{summarize_function, AccessRelationTriple, Limits, ParamBinding};

/// How far the pipeline runs. Each stage includes the ones before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Check,
    Summarize,
    Analyze,
    Lower,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub stage: Stage,
    pub binding: ParamBinding,
    pub exact: bool,
    pub limits: Limits,
}

impl PipelineOptions {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            binding: ParamBinding::new(),
            exact: false,
            limits: Limits::from_env(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub ast: Option<Ast>,
    /// Present only when the `Lower` stage ran without errors.
    pub lowered: Option<LoweredSource>,
}

impl PipelineOutput {
    /// A report for an input that never reached the frontend.
    pub fn failed(source: &str, binding: ParamBinding, diags: Vec<Diagnostic>) -> Self {
        let meta = ReportMeta {
            source: source.to_string(),
            binding,
        };
        Self {
            report: emit_report(&meta, None, &diags, &BTreeMap::new(), &[]),
            ast: None,
            lowered: None,
        }
    }

    /// 2 for usage or I/O failures, 1 for any other error, else 0.
    pub fn exit_code(&self) -> i32 {
        exit_code_for(self.report.all_diagnostics())
    }
}

pub fn exit_code_for<'a>(diags: impl IntoIterator<Item = &'a Diagnostic>) -> i32 {
    let mut code = 0;
    for d in diags.into_iter().filter(|d| d.is_error()) {
        if matches!(d.code, Code::Io | Code::Usage) {
            return 2;
        }
        code = 1;
    }
    code
}

/// Runs the pipeline over one PENCIL source text. Stops after the first
/// stage that reports an error; the report is produced regardless.
pub fn run_pipeline(source_name: &str, text: &str, opts: &PipelineOptions) -> PipelineOutput {
    let meta = ReportMeta {
        source: source_name.to_string(),
        binding: opts.binding.clone(),
    };
    let ast = match parse_source(source_name, text) {
        Ok(ast) => ast,
        Err(diags) => return PipelineOutput::failed(source_name, opts.binding.clone(), diags),
    };
    let mut diags = check_compliance(&ast);
    let mut triples = BTreeMap::new();
    let mut loops = Vec::new();
    let mut lowered = None;
    let blocked = |d: &[Diagnostic]| d.iter().any(Diagnostic::is_error);

    if opts.stage >= Stage::Summarize && !blocked(&diags) {
        summarize_all(&ast, opts, &mut triples, &mut diags);
    }
    if opts.stage >= Stage::Analyze && !blocked(&diags) {
        let aopts = AnalyzeOptions {
            exact: opts.exact,
            limits: opts.limits,
        };
        for f in ast.functions.iter().filter(|f| !ast.is_summary_function(&f.name)) {
            let (r, d) = analyze_function(&ast, f, &opts.binding, aopts);
            loops.extend(r);
            diags.extend(d);
        }
    }
    if opts.stage >= Stage::Lower && !blocked(&diags) {
        match emit_openmp(&ast, &loops) {
            Ok(l) => lowered = Some(l),
            Err(d) => diags.extend(d),
        }
    }
    let report = emit_report(&meta, Some(&ast), &diags, &triples, &loops);
    PipelineOutput {
        report,
        ast: Some(ast),
        lowered,
    }
}

/// Computes the triple of every function that carries an `ACCESS`
/// annotation. Without `exact`, a function whose summary needs a scalar the
/// binding lacks is left without a triple instead of failing.
fn summarize_all(
    ast: &Ast,
    opts: &PipelineOptions,
    triples: &mut BTreeMap<String, AccessRelationTriple>,
    diags: &mut Vec<Diagnostic>,
) {
    for f in ast.functions.iter().filter(|f| f.access.is_some()) {
        match summarize_function(ast, &f.name, &opts.binding, opts.limits) {
            Ok(out) => {
                diags.extend(out.warnings);
                triples.insert(f.name.clone(), out.triple);
            }
            Err(d) => {
                let unbound = f
                    .params
                    .iter()
                    .any(|p| p.kind() == ParamKind::Scalar && !opts.binding.scalars.contains_key(&p.name));
                if opts.exact || !unbound || d.code != Code::NonAffine {
                    let loc = if d.loc == Loc::default() { f.loc } else { d.loc };
                    diags.push(Diagnostic { loc, ..d });
                }
            }
        }
    }
}

/// Translation of a DSL document into PENCIL text.
#[derive(Debug, Clone)]
pub struct Translation {
    pub pencil: String,
    /// Array bindings implied by the document, e.g. OP2 map tables.
    pub binding: ParamBinding,
}

pub fn translate_op2(document: &str) -> Result<(Op2Model, Translation), Vec<Diagnostic>> {
    let model = load_op2_model(document)?;
    let ast = lower_op2_model(&model)?;
    let binding = model
        .maps
        .iter()
        .fold(ParamBinding::new(), |b, m| b.array(&m.name, m.table.clone()));
    let pencil = pretty_print(&ast);
    Ok((model, Translation { pencil, binding }))
}

pub fn translate_optiml(document: &str) -> Result<(OptimlConstruct, Translation), Vec<Diagnostic>> {
    let construct: OptimlConstruct = serde_json::from_str(document).map_err(|e| {
        vec![Diagnostic::error(
            Code::Usage,
            Loc::new(e.line() as u32, e.column() as u32),
            format!("not an OptiML construct: {e}"),
        )]
    })?;
    let lowered = lower_optiml(&construct)?;
    Ok((
        construct,
        Translation {
            pencil: pretty_print(&lowered.ast),
            binding: ParamBinding::new(),
        },
    ))
}

/// Merges `extra` into `base`; entries already in `base` win.
pub fn merge_bindings(mut base: ParamBinding, extra: &ParamBinding) -> ParamBinding {
    for (k, v) in &extra.scalars {
        base.scalars.entry(k.clone()).or_insert(*v);
    }
    for (k, v) in &extra.arrays {
        base.arrays.entry(k.clone()).or_insert_with(|| v.clone());
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depanalysis::Verdict;

    const FOO: &str = "void foo_summary(int n, int A[const restrict static n], int C[const restrict static 1])
{
  for (int i = 0; i < n; i++)
    DEF(A[i]);
  DEF(C[0]);
}

void foo(int n, int A[const restrict static n], int C[const restrict static 1])
ACCESS(foo_summary(n, A, C))
{
  for (int i = 0; i < n; i++)
    A[i] = i;
  C[0] = n;
}
";

    #[test]
    fn summary_skipped_without_binding_unless_exact() {
        let mut opts = PipelineOptions::new(Stage::Summarize);
        let out = run_pipeline("foo.c", FOO, &opts);
        assert_eq!(out.exit_code(), 0);
        assert!(out.report.functions.iter().all(|f| f.summary.is_none()));

        opts.exact = true;
        let out = run_pipeline("foo.c", FOO, &opts);
        assert_eq!(out.exit_code(), 1);

        opts.binding = ParamBinding::new().scalar("n", 3);
        let out = run_pipeline("foo.c", FOO, &opts);
        assert_eq!(out.exit_code(), 0);
        let t = out.report.functions[1].summary.as_ref().unwrap();
        assert_eq!(t.must_write_elements().len(), 4);
    }

    #[test]
    fn stages_stop_at_errors() {
        let src = "void g(int n) { goto end; end: n = 1; }";
        let out = run_pipeline("g.c", src, &PipelineOptions::new(Stage::Lower));
        assert_eq!(out.exit_code(), 1);
        assert!(out.lowered.is_none());
        assert!(out.report.loops().next().is_none());
    }

    #[test]
    fn parse_failure_still_reports() {
        let out = run_pipeline("x.c", "void f( {", &PipelineOptions::new(Stage::Check));
        assert_eq!(out.exit_code(), 1);
        assert!(out.ast.is_none());
        assert!(!out.report.diagnostics.is_empty());
    }

    #[test]
    fn usage_errors_exit_two() {
        let d = Diagnostic::error(Code::Usage, Loc::default(), "bad flag");
        assert_eq!(exit_code_for([&d]), 2);
        let w = Diagnostic::warning(Code::Bounds, Loc::default(), "w");
        assert_eq!(exit_code_for([&w]), 0);
    }

    #[test]
    fn op2_translation_analyzes_as_reduction() {
        let doc = r#"{
          "sets": [{"name": "cells", "size": 3}, {"name": "edges", "size": 2}],
          "maps": [{"name": "pecell", "from": "edges", "to": "cells", "arity": 2, "table": [0, 1, 1, 2]}],
          "dats": [
            {"name": "dcells", "set": "cells", "data": [1, 2, 3]},
            {"name": "dedges", "set": "edges", "data": [10, 20]}
          ],
          "kernels": {"op2_kernel": "void op2_kernel(double e[], int i0, double c0[], int i1, double c1[], int i2) { c0[i1] += e[i0]; c1[i2] += e[i0]; }"},
          "par_loops": [{"kernel": "op2_kernel", "set": "edges", "args": [
            {"dat": "dedges", "index": -1, "map": "OP_ID", "access": "OP_READ"},
            {"dat": "dcells", "index": 0, "map": "pecell", "access": "OP_INC"},
            {"dat": "dcells", "index": 1, "map": "pecell", "access": "OP_INC"}
          ]}]
        }"#;
        let (_, tr) = translate_op2(doc).unwrap();
        let mut opts = PipelineOptions::new(Stage::Lower);
        opts.binding = tr.binding.clone();
        let out = run_pipeline("mesh.pencil.c", &tr.pencil, &opts);
        assert_eq!(out.exit_code(), 0, "{}", out.report.to_text());
        let l = out.report.loops().find(|l| l.function == "op2_par_loop_0").unwrap();
        assert_eq!(l.verdict, Verdict::ParallelWithReduction);
        assert!(out.lowered.unwrap().text.contains("reduction(+:dcells[0:3])"));
    }

    #[test]
    fn optiml_json_is_parsed() {
        let (c, tr) = translate_optiml(r#"{"sum": {"target": "x", "lo": 0, "hi": 100, "body": "exp(i)"}}"#).unwrap();
        assert_eq!(c.kind_name(), "sum");
        assert!(tr.pencil.contains("#pragma pencil reduction (+:x)"));
        let err = translate_optiml("{\"nope\": 1}").unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
    }
}
