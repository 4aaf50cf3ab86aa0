//! Access relations derived from summary functions.
//!
//! A summary function is executed at concrete scalar bindings; each executed
//! `DEF`, `USE` or `MAY_DEF` contributes one record to the read, must-write or
//! may-write relation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::collect::{Collector, RawRecord};
use crate::diag::{Code, Diagnostic};
use crate::frontend::ast::*;

/// One subscript of an access. `Unknown` marks an index the analyzer could not
/// evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subscript {
    Known(i64),
    Unknown,
}

impl Subscript {
    pub fn known(self) -> Option<i64> {
        match self {
            Subscript::Known(v) => Some(v),
            Subscript::Unknown => None,
        }
    }
}

impl From<i64> for Subscript {
    fn from(v: i64) -> Self {
        Subscript::Known(v)
    }
}

impl fmt::Display for Subscript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subscript::Known(v) => write!(f, "{v}"),
            Subscript::Unknown => f.write_str("?"),
        }
    }
}

impl Serialize for Subscript {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Subscript::Known(v) => s.serialize_i64(*v),
            Subscript::Unknown => s.serialize_str("UNKNOWN"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AccessKind {
    Read,
    MustWrite,
    MayWrite,
}

impl AccessKind {
    pub fn is_write(self) -> bool {
        self != AccessKind::Read
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AccessRecord {
    pub array: String,
    pub index: Vec<Subscript>,
    pub kind: AccessKind,
    /// Values of the enclosing loop counters, outermost first.
    pub iter: Vec<i64>,
}

impl AccessRecord {
    pub fn new(array: impl Into<String>, index: Vec<i64>, kind: AccessKind) -> Self {
        Self {
            array: array.into(),
            index: index.into_iter().map(Subscript::Known).collect(),
            kind,
            iter: Vec::new(),
        }
    }

    /// The accessed element, ignoring kind and iteration.
    pub fn element(&self) -> (String, Vec<Subscript>) {
        (self.array.clone(), self.index.clone())
    }
}

impl fmt::Display for AccessRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.array)?;
        for i in &self.index {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AccessRelationTriple {
    pub read: BTreeSet<AccessRecord>,
    pub must_write: BTreeSet<AccessRecord>,
    pub may_write: BTreeSet<AccessRecord>,
}

pub type Element = (String, Vec<Subscript>);

impl AccessRelationTriple {
    pub fn insert(&mut self, r: AccessRecord) {
        match r.kind {
            AccessKind::Read => self.read.insert(r),
            AccessKind::MustWrite => self.must_write.insert(r),
            AccessKind::MayWrite => self.may_write.insert(r),
        };
    }

    pub fn is_empty(&self) -> bool {
        self.read.is_empty() && self.must_write.is_empty() && self.may_write.is_empty()
    }

    pub fn len(&self) -> usize {
        self.read.len() + self.must_write.len() + self.may_write.len()
    }

    pub fn read_elements(&self) -> BTreeSet<Element> {
        self.read.iter().map(AccessRecord::element).collect()
    }

    pub fn must_write_elements(&self) -> BTreeSet<Element> {
        self.must_write.iter().map(AccessRecord::element).collect()
    }

    pub fn may_write_elements(&self) -> BTreeSet<Element> {
        self.may_write.iter().map(AccessRecord::element).collect()
    }

    /// Every must-write record has a may-write twin at the same iteration.
    pub fn must_within_may(&self) -> bool {
        self.must_write.iter().all(|r| {
            let twin = AccessRecord {
                kind: AccessKind::MayWrite,
                ..r.clone()
            };
            self.may_write.contains(&twin)
        })
    }

    fn rename_arrays(self, map: &BTreeMap<String, String>) -> Self {
        let ren = |set: BTreeSet<AccessRecord>| {
            set.into_iter()
                .map(|mut r| {
                    if let Some(n) = map.get(&r.array) {
                        r.array = n.clone();
                    }
                    r
                })
                .collect()
        };
        Self {
            read: ren(self.read),
            must_write: ren(self.must_write),
            may_write: ren(self.may_write),
        }
    }
}

impl FromIterator<AccessRecord> for AccessRelationTriple {
    fn from_iter<T: IntoIterator<Item = AccessRecord>>(iter: T) -> Self {
        let mut t = Self::default();
        iter.into_iter().for_each(|r| t.insert(r));
        t
    }
}

/// Values for scalar parameters and, optionally, contents for arrays.
///
/// Summaries only consult `scalars`; array contents matter to the dependence
/// analysis of loops that index through tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParamBinding {
    pub scalars: BTreeMap<String, i64>,
    pub arrays: BTreeMap<String, Vec<i64>>,
}

impl ParamBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(mut self, name: &str, v: i64) -> Self {
        self.scalars.insert(name.to_string(), v);
        self
    }

    pub fn array(mut self, name: &str, v: Vec<i64>) -> Self {
        self.arrays.insert(name.to_string(), v);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.scalars.is_empty() && self.arrays.is_empty()
    }
}

/// Caps on abstract execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub records: usize,
    pub steps: u64,
}

pub const DEFAULT_RECORD_BUDGET: usize = 1_000_000;

impl Default for Limits {
    fn default() -> Self {
        Self::with_records(DEFAULT_RECORD_BUDGET)
    }
}

impl Limits {
    pub fn with_records(records: usize) -> Self {
        Self {
            records,
            steps: (records as u64).saturating_mul(20).max(1_000_000),
        }
    }

    /// Default limits, with the record cap taken from `PENCILC_BUDGET` when set.
    pub fn from_env() -> Self {
        std::env::var("PENCILC_BUDGET")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map(Self::with_records)
            .unwrap_or_default()
    }
}

/// The summary a function's `ACCESS` annotation points to, with the argument
/// expressions that instantiate the summary's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAccess {
    pub summary: String,
    /// Summary parameter name to the caller-side expression bound to it.
    pub args: Vec<(String, Expr)>,
}

pub fn resolve_access_bindings(ast: &Ast) -> Result<BTreeMap<String, ResolvedAccess>, Vec<Diagnostic>> {
    let mut out = BTreeMap::new();
    let mut errs = Vec::new();
    for f in &ast.functions {
        let Some(acc) = &f.access else { continue };
        match resolve_one(ast, f, acc) {
            Ok(r) => {
                out.insert(f.name.clone(), r);
            }
            Err(d) => errs.push(d),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}

pub(crate) fn resolve_one(ast: &Ast, f: &FunctionDef, acc: &AccessBinding) -> Result<ResolvedAccess, Diagnostic> {
    let Some(s) = ast.function(&acc.callee) else {
        return Err(Diagnostic::error(
            Code::SummaryUndef,
            f.loc,
            format!(
                "`{}` names summary function `{}`, which is not defined",
                f.name, acc.callee
            ),
        ));
    };
    if s.params.len() != acc.args.len() {
        return Err(Diagnostic::error(
            Code::SummaryArity,
            f.loc,
            format!(
                "summary `{}` takes {} parameters but the ACCESS annotation of `{}` passes {}",
                s.name,
                s.params.len(),
                f.name,
                acc.args.len()
            ),
        ));
    }
    Ok(ResolvedAccess {
        summary: s.name.clone(),
        args: s
            .params
            .iter()
            .map(|p| p.name.clone())
            .zip(acc.args.iter().cloned())
            .collect(),
    })
}

/// Result of running a summary: the triple plus any out-of-range warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryOutcome {
    pub triple: AccessRelationTriple,
    pub warnings: Vec<Diagnostic>,
}

pub(crate) fn records_to_triple(records: Vec<RawRecord>) -> AccessRelationTriple {
    records
        .into_iter()
        .map(|r| AccessRecord {
            array: r.array,
            index: r.index,
            kind: r.kind,
            iter: r.iter,
        })
        .collect()
}

/// Executes `summary` at `binding`, enumerating its DEF/USE/MAY_DEF accesses.
pub fn interpret_summary(
    ast: &Ast,
    summary: &FunctionDef,
    binding: &ParamBinding,
    limits: Limits,
) -> Result<SummaryOutcome, Diagnostic> {
    let mut c = Collector::for_summary(ast, limits);
    c.run_summary(summary, binding)?;
    let warnings = std::mem::take(&mut c.warnings);
    Ok(SummaryOutcome {
        triple: records_to_triple(c.records),
        warnings,
    })
}

/// Accesses performed by the call `callee(args)` where the argument
/// expressions are evaluated in `binding`. Array arguments must be plain
/// names; records are expressed over those names.
pub fn summarize_call(
    ast: &Ast,
    callee: &str,
    args: &[Expr],
    binding: &ParamBinding,
    limits: Limits,
) -> Result<SummaryOutcome, Diagnostic> {
    if is_whitelisted_external(callee) {
        return Ok(SummaryOutcome::default());
    }
    let mut c = Collector::for_summary(ast, limits);
    c.run_call(callee, args, binding)?;
    let warnings = std::mem::take(&mut c.warnings);
    Ok(SummaryOutcome {
        triple: records_to_triple(c.records),
        warnings,
    })
}

/// Triple of the function `name` as seen through its `ACCESS` annotation,
/// with the function's own parameters bound by `binding`.
pub fn summarize_function(
    ast: &Ast,
    name: &str,
    binding: &ParamBinding,
    limits: Limits,
) -> Result<SummaryOutcome, Diagnostic> {
    let f = ast
        .function(name)
        .ok_or_else(|| Diagnostic::error(Code::Undef, Default::default(), format!("no function `{name}`")))?;
    let args: Vec<Expr> = f.params.iter().map(|p| Expr::var(&p.name)).collect();
    summarize_call(ast, name, &args, binding, limits)
}

/// Renames arrays in a triple; used when re-expressing a summary over a
/// caller's argument names.
pub fn substitute_arrays(triple: AccessRelationTriple, map: &BTreeMap<String, String>) -> AccessRelationTriple {
    triple.rename_arrays(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    pub(crate) const FOO: &str = "\
void foo_summary(int n, int A[restrict const static n], int B[restrict const static n],
                 int C[restrict const static n])
{
  for (int i = 0; i < n; i++) {
    DEF(A[i]); USE(B[i]); MAY_DEF(B[i]);
  }
  if (n < 4) DEF(C[0]);
  USE(A[n-1]);
}

void foo(int n, int A[restrict const static n], int B[restrict const static n],
         int C[restrict const static n])
  ACCESS(foo_summary(n, A, B, C))
{
  int i;
  for (i = 0; i < n; i++) {
    A[i] = B[i];
    B[rand() % n] = A[i];
  }
  if (n < 4) C[0] = A[n-1];
}
";

    /// Hand enumeration of `foo_summary`, written independently of the engine.
    fn foo_oracle(n: i64) -> [BTreeSet<Element>; 3] {
        let (mut must, mut may, mut read) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
        for i in 0..n {
            must.insert(el("A", i));
            may.insert(el("A", i));
            read.insert(el("B", i));
            may.insert(el("B", i));
        }
        if n < 4 {
            must.insert(el("C", 0));
            may.insert(el("C", 0));
        }
        read.insert(el("A", n - 1));
        [must, may, read]
    }

    fn el(a: &str, i: i64) -> Element {
        (a.to_string(), vec![Subscript::Known(i)])
    }

    fn set(items: &[(&str, i64)]) -> BTreeSet<Element> {
        items.iter().map(|(a, i)| el(a, *i)).collect()
    }

    fn run(n: i64) -> SummaryOutcome {
        let ast = parse_source("foo.c", FOO).unwrap();
        let s = ast.function("foo_summary").unwrap();
        interpret_summary(&ast, s, &ParamBinding::new().scalar("n", n), Limits::default()).unwrap()
    }

    #[test]
    fn foo_summary_at_three() {
        let out = run(3);
        let t = &out.triple;
        assert_eq!(t.must_write_elements(), set(&[("A", 0), ("A", 1), ("A", 2), ("C", 0)]));
        assert_eq!(
            t.may_write_elements(),
            set(&[("A", 0), ("A", 1), ("A", 2), ("C", 0), ("B", 0), ("B", 1), ("B", 2)])
        );
        assert_eq!(t.read_elements(), set(&[("B", 0), ("B", 1), ("B", 2), ("A", 2)]));
        assert!(t.must_within_may());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn foo_summary_at_five_skips_guarded_def() {
        let t = run(5).triple;
        assert_eq!(t.must_write_elements(), (0..5).map(|i| el("A", i)).collect());
        assert!(t.read_elements().contains(&el("A", 4)));
    }

    #[test]
    fn foo_summary_at_zero_reads_out_of_range() {
        // The guarded DEF(C[0]) still fires at n = 0; both it and USE(A[-1])
        // fall outside the zero extent.
        let out = run(0);
        assert_eq!(out.triple.must_write_elements(), set(&[("C", 0)]));
        assert_eq!(out.triple.read_elements(), set(&[("A", -1)]));
        let mut warned: Vec<&str> = out.warnings.iter().map(|w| w.message.as_str()).collect();
        warned.sort();
        assert_eq!(out.warnings.len(), 2);
        assert!(out.warnings.iter().all(|w| w.code == Code::Bounds));
        assert!(warned[0].contains("A[-1]") && warned[1].contains("C[0]"));
    }

    #[test]
    fn foo_summary_matches_hand_oracle() {
        for n in [0, 1, 2, 3, 4, 5, 9] {
            let t = run(n).triple;
            let [must, may, read] = foo_oracle(n);
            assert_eq!(t.must_write_elements(), must, "n={n}");
            assert_eq!(t.may_write_elements(), may, "n={n}");
            assert_eq!(t.read_elements(), read, "n={n}");
        }
    }

    #[test]
    fn records_carry_iteration_vectors() {
        let t = run(2).triple;
        let a1 = t
            .must_write
            .iter()
            .find(|r| r.array == "A" && r.index == [Subscript::Known(1)])
            .unwrap();
        assert_eq!(a1.iter, vec![1]);
        let c0 = t.must_write.iter().find(|r| r.array == "C").unwrap();
        assert!(c0.iter.is_empty());
    }

    #[test]
    fn resolves_foo_access() {
        let ast = parse_source("foo.c", FOO).unwrap();
        let m = resolve_access_bindings(&ast).unwrap();
        assert_eq!(m.len(), 1);
        let r = &m["foo"];
        assert_eq!(r.summary, "foo_summary");
        let names: Vec<(&str, Expr)> = r.args.iter().map(|(a, e)| (a.as_str(), e.clone())).collect();
        assert_eq!(
            names,
            vec![
                ("n", Expr::var("n")),
                ("A", Expr::var("A")),
                ("B", Expr::var("B")),
                ("C", Expr::var("C"))
            ]
        );
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let src = "void s(int n, int A[restrict const static n], int B[restrict const static n]) { USE(A[0]); }\n\
                   void f(int n, int A[restrict const static n], int B[restrict const static n], int C[restrict const static n]) ACCESS(s(n, A, B, C)) { }";
        let ast = parse_source("t.c", src).unwrap();
        let e = resolve_access_bindings(&ast).unwrap_err();
        assert_eq!(e[0].code, Code::SummaryArity);
    }

    #[test]
    fn call_substitutes_caller_names() {
        let ast = parse_source("foo.c", FOO).unwrap();
        let args: Vec<Expr> = vec![Expr::Int(3), Expr::var("X"), Expr::var("Y"), Expr::var("Z")];
        let t = summarize_call(&ast, "foo", &args, &ParamBinding::new(), Limits::default())
            .unwrap()
            .triple;
        let direct = run(3).triple;
        let map: BTreeMap<String, String> = [("A", "X"), ("B", "Y"), ("C", "Z")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(t, substitute_arrays(direct, &map));
    }

    #[test]
    fn pure_external_has_empty_triple() {
        let ast = parse_source("foo.c", FOO).unwrap();
        let t = summarize_call(&ast, "exp", &[Expr::var("i")], &ParamBinding::new(), Limits::default()).unwrap();
        assert!(t.triple.is_empty());
    }

    #[test]
    fn opaque_callee_has_no_summary() {
        let ast = parse_source("foo.c", FOO).unwrap();
        let e = summarize_call(&ast, "mystery", &[], &ParamBinding::new(), Limits::default()).unwrap_err();
        assert_eq!(e.code, Code::NoSummary);
    }

    #[test]
    fn data_dependent_control_is_nonaffine() {
        let src = "void s(int n, int A[restrict const static n]) { if (A[0] > 0) DEF(A[1]); }";
        let ast = parse_source("t.c", src).unwrap();
        let e = interpret_summary(
            &ast,
            &ast.functions[0],
            &ParamBinding::new().scalar("n", 2),
            Limits::default(),
        )
        .unwrap_err();
        assert_eq!(e.code, Code::NonAffine);
    }

    #[test]
    fn unbound_scalar_is_nonaffine_only_when_used() {
        let src = "void s(int n, int m, int A[restrict const static n]) { for (int i = 0; i < n; i++) DEF(A[i]); }";
        let ast = parse_source("t.c", src).unwrap();
        let ok = interpret_summary(
            &ast,
            &ast.functions[0],
            &ParamBinding::new().scalar("n", 2),
            Limits::default(),
        );
        assert_eq!(ok.unwrap().triple.must_write.len(), 2);
        let e = interpret_summary(&ast, &ast.functions[0], &ParamBinding::new(), Limits::default()).unwrap_err();
        assert_eq!(e.code, Code::NonAffine);
    }

    #[test]
    fn budget_is_enforced() {
        let src = "void s(int n, int A[restrict const static n]) { for (int i = 0; i < n; i++) USE(A[i]); }";
        let ast = parse_source("t.c", src).unwrap();
        let e = interpret_summary(
            &ast,
            &ast.functions[0],
            &ParamBinding::new().scalar("n", 100),
            Limits::with_records(10),
        )
        .unwrap_err();
        assert_eq!(e.code, Code::Budget);
    }

    #[test]
    fn nested_summary_call_is_rejected() {
        let src = "void t(int n, int A[restrict const static n]) { USE(A[0]); }\n\
                   void s(int n, int A[restrict const static n]) { t(n, A); }";
        let ast = parse_source("t.c", src).unwrap();
        let e = interpret_summary(
            &ast,
            &ast.functions[1],
            &ParamBinding::new().scalar("n", 1),
            Limits::default(),
        )
        .unwrap_err();
        assert_eq!(e.code, Code::NestedSummary);
    }

    #[test]
    fn deterministic() {
        assert_eq!(run(4), run(4));
    }
}
