//! Per-loop parallelism verdicts.
//!
//! A loop is first tried against a binding-free affine test. Otherwise its
//! iterations are enumerated under the given binding and every pair of
//! accesses to the same element from distinct iterations is a dependence
//! witness. `independent` and `reduction` directives then discard the
//! witnesses they vouch for.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::collect::{Collector, RawRecord, Stop};
use crate::diag::{Code, Diagnostic, Loc};
use crate::frontend::ast::*;
use crate::summaries::{AccessRecord, AccessRelationTriple, Limits, ParamBinding, Subscript};

/// One access together with where in the loop body it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SitedAccess {
    pub record: AccessRecord,
    /// Labels enclosing the originating statement inside the loop body.
    pub labels: Vec<String>,
    /// Operator when the access is half of an `x op= e` style update.
    pub update: Option<ReductionOp>,
    pub site: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationAccess {
    /// Which execution of the loop this iteration belongs to, for loops
    /// nested in other loops.
    pub instance: usize,
    pub iteration: i64,
    pub accesses: Vec<SitedAccess>,
}

impl IterationAccess {
    pub fn triple(&self) -> AccessRelationTriple {
        self.accesses.iter().map(|a| a.record.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DepKind {
    #[serde(rename = "RAW")]
    Raw,
    #[serde(rename = "WAR")]
    War,
    #[serde(rename = "WAW")]
    Waw,
}

impl DepKind {
    fn between(src_write: bool, sink_write: bool) -> Option<Self> {
        match (src_write, sink_write) {
            (true, true) => Some(DepKind::Waw),
            (true, false) => Some(DepKind::Raw),
            (false, true) => Some(DepKind::War),
            (false, false) => None,
        }
    }
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepKind::Raw => "RAW",
            DepKind::War => "WAR",
            DepKind::Waw => "WAW",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DependenceWitness {
    pub kind: DepKind,
    pub source: i64,
    pub sink: i64,
    pub array: String,
    pub index: Vec<Subscript>,
    #[serde(skip_serializing_if = "is_zero")]
    pub instance: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl DependenceWitness {
    pub fn new(kind: DepKind, source: i64, sink: i64, array: &str, index: Vec<i64>) -> Self {
        Self {
            kind,
            source,
            sink,
            array: array.to_string(),
            index: index.into_iter().map(Subscript::Known).collect(),
            instance: 0,
        }
    }
}

impl fmt::Display for DependenceWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.array)?;
        for i in &self.index {
            write!(f, "[{i}]")?;
        }
        write!(f, " iteration {} -> {}", self.source, self.sink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Parallel,
    ParallelWithReduction,
    Serial,
    Unknown,
    AssumedParallel,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Parallel => "PARALLEL",
            Verdict::ParallelWithReduction => "PARALLEL_WITH_REDUCTION",
            Verdict::Serial => "SERIAL",
            Verdict::Unknown => "UNKNOWN",
            Verdict::AssumedParallel => "ASSUMED_PARALLEL",
        }
    }

    /// Whether the loop may run its iterations concurrently.
    pub fn is_parallel(self) -> bool {
        matches!(
            self,
            Verdict::Parallel | Verdict::ParallelWithReduction | Verdict::AssumedParallel
        )
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Basis {
    Enumeration,
    Affine,
    Directive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    For,
    While,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub loop_id: String,
    pub function: String,
    pub loc: Loc,
    pub kind: LoopKind,
    pub verdict: Verdict,
    pub basis: Option<Basis>,
    pub witnesses: Vec<DependenceWitness>,
    pub witnesses_truncated: bool,
    pub reduction_vars: Vec<String>,
    pub note: Option<String>,
}

/// Most witnesses kept in a report.
pub const WITNESS_CAP: usize = 16;
const EXAMPLES_PER_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    /// Demand an exact verdict; an unenumerable loop with no other evidence
    /// becomes an E-BINDING-REQUIRED error.
    pub exact: bool,
    pub limits: Limits,
}

/// Why accesses could not be collected.
#[derive(Debug, Clone, PartialEq)]
pub enum CollectError {
    Diagnostic(Diagnostic),
    NotEnumerable(String),
}

impl fmt::Display for CollectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectError::Diagnostic(d) => write!(f, "{d}"),
            CollectError::NotEnumerable(why) => f.write_str(why),
        }
    }
}

fn sited(r: RawRecord) -> (Option<(usize, i64)>, SitedAccess) {
    (
        r.at,
        SitedAccess {
            record: AccessRecord {
                array: r.array,
                index: r.index,
                kind: r.kind,
                iter: r.iter,
            },
            labels: r.labels,
            update: r.update,
            site: r.site,
        },
    )
}

/// Runs `func` under `binding` and returns, per iteration of `target`, the
/// accesses it makes to storage that outlives the iteration.
pub fn collect_iteration_accesses(
    ast: &Ast,
    func: &FunctionDef,
    target: &ForLoop,
    binding: &ParamBinding,
    limits: Limits,
) -> Result<Vec<IterationAccess>, CollectError> {
    let mut c = Collector::for_target(ast, target, limits);
    match c.run_function(func, binding) {
        Ok(()) | Err(Stop::Done) => {}
        Err(Stop::Diag(d)) => return Err(CollectError::Diagnostic(d)),
        Err(Stop::NotEnumerable(w)) => return Err(CollectError::NotEnumerable(w)),
    }
    let mut out: Vec<IterationAccess> = Vec::new();
    let mut slot: HashMap<(usize, i64), usize> = HashMap::new();
    for (inst, iters) in c.instances.iter().enumerate() {
        for &i in iters {
            slot.entry((inst, i)).or_insert_with(|| {
                out.push(IterationAccess {
                    instance: inst,
                    iteration: i,
                    accesses: Vec::new(),
                });
                out.len() - 1
            });
        }
    }
    for r in std::mem::take(&mut c.records) {
        let (at, a) = sited(r);
        if let Some(k) = at.and_then(|at| slot.get(&at)) {
            out[*k].accesses.push(a);
        }
    }
    Ok(out)
}

/// Exhaustive pairwise dependence check over enumerated iterations.
pub fn brute_force_dependences(accesses: &[IterationAccess]) -> Result<Vec<DependenceWitness>, Diagnostic> {
    for it in accesses {
        if let Some(a) = it
            .accesses
            .iter()
            .find(|a| a.record.index.contains(&Subscript::Unknown))
        {
            return Err(Diagnostic::error(
                Code::UnknownIndex,
                a.site,
                format!(
                    "`{}` is accessed at an index unknown under this binding",
                    a.record.array
                ),
            ));
        }
    }
    let mut out = BTreeSet::new();
    for (p, first) in accesses.iter().enumerate() {
        for second in &accesses[p + 1..] {
            if first.instance != second.instance || first.iteration == second.iteration {
                continue;
            }
            for a in &first.accesses {
                for b in &second.accesses {
                    if a.record.array != b.record.array || a.record.index != b.record.index {
                        continue;
                    }
                    if let Some(kind) = DepKind::between(a.record.kind.is_write(), b.record.kind.is_write()) {
                        out.insert(DependenceWitness {
                            kind,
                            source: first.iteration,
                            sink: second.iteration,
                            array: a.record.array.clone(),
                            index: a.record.index.clone(),
                            instance: first.instance,
                        });
                    }
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// How directives regard one access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Class {
    write: bool,
    covered: bool,
    reducible: bool,
}

#[derive(Debug, Clone)]
struct Group {
    kind: DepKind,
    array: String,
    index: Vec<Subscript>,
    instance: usize,
    certain: bool,
    src: Class,
    sink: Class,
    examples: Vec<(i64, i64)>,
}

/// Pairs `(p, q)` with `p` from `a`, `q` from `b`, `p < q`, smallest first.
fn ordered_examples(a: &BTreeSet<i64>, b: &BTreeSet<i64>, limit: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for &p in a {
        for &q in b.range(p + 1..) {
            out.push((p, q));
            if out.len() >= limit {
                return out;
            }
        }
    }
    out
}

/// Pairs with `p != q` in either order, as (earlier, later, earlier-is-from-a).
fn unordered_examples(a: &BTreeSet<i64>, b: &BTreeSet<i64>, limit: usize) -> Vec<(i64, i64, bool)> {
    let mut out: Vec<(i64, i64, bool)> = ordered_examples(a, b, limit)
        .into_iter()
        .map(|(p, q)| (p, q, true))
        .collect();
    out.extend(ordered_examples(b, a, limit).into_iter().map(|(p, q)| (p, q, false)));
    out.sort();
    out.truncate(limit);
    out
}

type ClassSets = BTreeMap<Class, BTreeSet<i64>>;

/// Groups every cross-iteration conflict by element and the directive classes
/// of its two endpoints. Keys with unknown subscripts produce uncertain
/// groups against every access of the same array.
fn conflict_groups(accesses: &[IterationAccess], classify: &dyn Fn(&SitedAccess) -> Class) -> Vec<Group> {
    type Key = (usize, String, Vec<Subscript>);
    let mut known: BTreeMap<Key, ClassSets> = BTreeMap::new();
    let mut unknown: BTreeMap<(usize, String), ClassSets> = BTreeMap::new();
    let mut whole: BTreeMap<(usize, String), ClassSets> = BTreeMap::new();
    for it in accesses {
        for a in &it.accesses {
            let c = classify(a);
            let r = &a.record;
            let arr = (it.instance, r.array.clone());
            whole
                .entry(arr.clone())
                .or_default()
                .entry(c)
                .or_default()
                .insert(it.iteration);
            if r.index.contains(&Subscript::Unknown) {
                unknown
                    .entry(arr)
                    .or_default()
                    .entry(c)
                    .or_default()
                    .insert(it.iteration);
            } else {
                known
                    .entry((it.instance, r.array.clone(), r.index.clone()))
                    .or_default()
                    .entry(c)
                    .or_default()
                    .insert(it.iteration);
            }
        }
    }
    let mut groups = Vec::new();
    for ((instance, array, index), classes) in &known {
        for (cs, ps) in classes {
            for (ct, qs) in classes {
                let Some(kind) = DepKind::between(cs.write, ct.write) else {
                    continue;
                };
                let examples = ordered_examples(ps, qs, EXAMPLES_PER_GROUP);
                if !examples.is_empty() {
                    groups.push(Group {
                        kind,
                        array: array.clone(),
                        index: index.clone(),
                        instance: *instance,
                        certain: true,
                        src: *cs,
                        sink: *ct,
                        examples,
                    });
                }
            }
        }
    }
    for ((instance, array), uclasses) in &unknown {
        let all = &whole[&(*instance, array.clone())];
        let rank = accesses
            .iter()
            .flat_map(|it| &it.accesses)
            .find(|a| &a.record.array == array)
            .map_or(0, |a| a.record.index.len());
        for (cu, us) in uclasses {
            for (ca, xs) in all {
                for (p, q, u_first) in unordered_examples(us, xs, EXAMPLES_PER_GROUP) {
                    let (src, sink) = if u_first { (*cu, *ca) } else { (*ca, *cu) };
                    let Some(kind) = DepKind::between(src.write, sink.write) else {
                        continue;
                    };
                    groups.push(Group {
                        kind,
                        array: array.clone(),
                        index: vec![Subscript::Unknown; rank],
                        instance: *instance,
                        certain: false,
                        src,
                        sink,
                        examples: vec![(p, q)],
                    });
                }
            }
        }
    }
    groups
}

fn witnesses_of(groups: &[&Group]) -> (Vec<DependenceWitness>, bool) {
    let mut all = BTreeSet::new();
    for g in groups {
        for &(p, q) in &g.examples {
            all.insert(DependenceWitness {
                kind: g.kind,
                source: p,
                sink: q,
                array: g.array.clone(),
                index: g.index.clone(),
                instance: g.instance,
            });
        }
    }
    let truncated = all.len() > WITNESS_CAP || groups.iter().any(|g| g.examples.len() >= EXAMPLES_PER_GROUP);
    (all.into_iter().take(WITNESS_CAP).collect(), truncated)
}

/// Coefficients `(a, b)` when `e` is `a * var + b` with integer constants.
pub fn affine_in(e: &Expr, var: &str) -> Option<(i64, i64)> {
    match e {
        Expr::Int(c) => Some((0, *c)),
        Expr::Var(v) if v == var => Some((1, 0)),
        Expr::Unary { op: UnOp::Neg, operand } => {
            let (a, b) = affine_in(operand, var)?;
            Some((a.checked_neg()?, b.checked_neg()?))
        }
        Expr::Binary { op, lhs, rhs } => {
            let (a1, b1) = affine_in(lhs, var)?;
            let (a2, b2) = affine_in(rhs, var)?;
            match op {
                BinOp::Add => Some((a1.checked_add(a2)?, b1.checked_add(b2)?)),
                BinOp::Sub => Some((a1.checked_sub(a2)?, b1.checked_sub(b2)?)),
                BinOp::Mul if a1 == 0 => Some((b1.checked_mul(a2)?, b1.checked_mul(b2)?)),
                BinOp::Mul if a2 == 0 => Some((a1.checked_mul(b2)?, b1.checked_mul(b2)?)),
                _ => None,
            }
        }
        _ => None,
    }
}

type Tuple = Vec<(i64, i64)>;

#[derive(Default)]
struct AffineScan {
    private: BTreeSet<String>,
    writes: BTreeMap<String, Vec<Tuple>>,
    reads: BTreeMap<String, Vec<Tuple>>,
}

impl AffineScan {
    fn tuple(&self, indices: &[Expr], var: &str) -> Option<Tuple> {
        indices.iter().map(|e| affine_in(e, var)).collect()
    }

    fn expr(&mut self, e: &Expr, var: &str) -> Option<()> {
        match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Var(_) | Expr::Deref(_) => Some(()),
            Expr::Index { array, indices } => {
                if !self.private.contains(array) {
                    let t = self.tuple(indices, var)?;
                    self.reads.entry(array.clone()).or_default().push(t);
                }
                indices.iter().try_for_each(|i| self.expr(i, var))
            }
            Expr::Call { callee, args } if is_whitelisted_external(callee) => {
                args.iter().try_for_each(|a| self.expr(a, var))
            }
            Expr::Call { .. } | Expr::AddrOf(_) => None,
            Expr::Unary { operand, .. } => self.expr(operand, var),
            Expr::Binary { lhs, rhs, .. } => {
                self.expr(lhs, var)?;
                self.expr(rhs, var)
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, var: &str) -> Option<()> {
        match &s.kind {
            StmtKind::Assign { target, op, value } => {
                self.expr(value, var)?;
                match target {
                    LValue::Var(v) if v != var && self.private.contains(v) => Some(()),
                    LValue::Index { array, indices } if self.private.contains(array) => {
                        indices.iter().try_for_each(|i| self.expr(i, var))
                    }
                    LValue::Index { array, indices } => {
                        indices.iter().try_for_each(|i| self.expr(i, var))?;
                        let t = self.tuple(indices, var)?;
                        if *op != AssignOp::Set {
                            self.reads.entry(array.clone()).or_default().push(t.clone());
                        }
                        self.writes.entry(array.clone()).or_default().push(t);
                        Some(())
                    }
                    _ => None,
                }
            }
            StmtKind::Decl(d) => {
                if let Some(init) = &d.init {
                    self.expr(init, var)?;
                }
                if d.name == var {
                    return None;
                }
                self.private.insert(d.name.clone());
                Some(())
            }
            StmtKind::Block(b) => b.iter().try_for_each(|s| self.stmt(s, var)),
            StmtKind::If { cond, then, otherwise } => {
                self.expr(cond, var)?;
                self.stmt(then, var)?;
                otherwise.as_deref().map_or(Some(()), |o| self.stmt(o, var))
            }
            StmtKind::Labeled { stmt, .. } => self.stmt(stmt, var),
            _ => None,
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Whether `w(i) == r(i')` forces `i == i'` or is impossible.
fn never_overlaps_across(w: &Tuple, r: &Tuple) -> bool {
    if w.len() != r.len() {
        return false;
    }
    w.iter().zip(r).any(|(&(aw, bw), &(ar, br))| {
        let diff = br - bw;
        if aw == 0 && ar == 0 {
            return diff != 0;
        }
        if aw == ar {
            // aw * (i - i') = diff
            return diff % aw != 0 || diff / aw == 0;
        }
        let g = gcd(aw, ar);
        g != 0 && diff % g != 0
    })
}

/// Binding-free parallelism proof for loops whose every access is affine in
/// the loop counter.
pub fn affine_fast_path(l: &ForLoop) -> Option<Verdict> {
    let mut scan = AffineScan::default();
    scan.stmt(&l.body, &l.var)?;
    for (array, ws) in &scan.writes {
        let w = &ws[0];
        if ws.iter().any(|t| t != w) || w.iter().all(|(a, _)| *a == 0) {
            return None;
        }
        for r in scan.reads.get(array).into_iter().flatten() {
            if r != w && !never_overlaps_across(w, r) {
                return None;
            }
        }
    }
    Some(Verdict::Parallel)
}

struct Directives {
    independent: Option<Vec<String>>,
    reductions: Vec<(ReductionOp, String)>,
}

fn directives_of(ds: &[Directive]) -> Directives {
    let mut independent: Option<Vec<String>> = None;
    let mut all = false;
    let mut reductions = Vec::new();
    for d in ds {
        match &d.kind {
            DirectiveKind::Independent { labels } => {
                all |= labels.is_empty();
                independent.get_or_insert_with(Vec::new).extend(labels.iter().cloned());
            }
            DirectiveKind::Reduction { op, vars } => reductions.extend(vars.iter().map(|v| (*op, v.clone()))),
        }
    }
    if all {
        independent = Some(Vec::new());
    }
    Directives {
        independent,
        reductions,
    }
}

impl Directives {
    fn reduction_vars(&self) -> Vec<String> {
        let mut v: Vec<String> = self.reductions.iter().map(|(_, n)| n.clone()).collect();
        v.dedup();
        v
    }

    fn classify(&self, a: &SitedAccess) -> Class {
        let covered = match &self.independent {
            None => false,
            Some(labels) if labels.is_empty() => true,
            Some(labels) => a.labels.iter().any(|l| labels.contains(l)),
        };
        let reducible = a
            .update
            .is_some_and(|op| self.reductions.iter().any(|(o, v)| *o == op && *v == a.record.array));
        Class {
            write: a.record.kind.is_write(),
            covered,
            reducible,
        }
    }

    fn any(&self) -> bool {
        self.independent.is_some() || !self.reductions.is_empty()
    }
}

/// Decides the verdict of one `for` loop of `func`.
pub fn analyze_loop(
    ast: &Ast,
    func: &FunctionDef,
    l: &ForLoop,
    loop_id: &str,
    loc: Loc,
    binding: &ParamBinding,
    opts: AnalyzeOptions,
) -> (DependenceReport, Vec<Diagnostic>) {
    let dirs = directives_of(&l.directives);
    let mut report = DependenceReport {
        loop_id: loop_id.to_string(),
        function: func.name.clone(),
        loc,
        kind: LoopKind::For,
        verdict: Verdict::Unknown,
        basis: None,
        witnesses: Vec::new(),
        witnesses_truncated: false,
        reduction_vars: dirs.reduction_vars(),
        note: None,
    };
    let mut diags = Vec::new();
    if affine_fast_path(l) == Some(Verdict::Parallel) {
        report.verdict = Verdict::Parallel;
        report.basis = Some(Basis::Affine);
        return (report, diags);
    }
    let why = match collect_iteration_accesses(ast, func, l, binding, opts.limits) {
        Ok(accesses) => {
            decide(&mut report, &accesses, &dirs);
            return (report, diags);
        }
        Err(CollectError::NotEnumerable(why)) => why,
        Err(CollectError::Diagnostic(d)) => {
            let why = d.message.clone();
            diags.push(d);
            why
        }
    };
    if dirs.independent.as_ref().is_some_and(Vec::is_empty) {
        report.verdict = Verdict::AssumedParallel;
        report.basis = Some(Basis::Directive);
        return (report, diags);
    }
    report.note = Some(format!("not enumerated: {why}"));
    if opts.exact && !dirs.any() {
        diags.push(Diagnostic::error(
            Code::BindingRequired,
            loc,
            format!("an exact verdict for loop {loop_id} needs a binding: {why}"),
        ));
    }
    (report, diags)
}

fn decide(report: &mut DependenceReport, accesses: &[IterationAccess], dirs: &Directives) {
    let groups = conflict_groups(accesses, &|a| dirs.classify(a));
    if groups.is_empty() {
        report.verdict = Verdict::Parallel;
        report.basis = Some(Basis::Enumeration);
        return;
    }
    let after_independent: Vec<&Group> = groups.iter().filter(|g| !g.src.covered && !g.sink.covered).collect();
    let removed_by_independent = after_independent.len() < groups.len();
    let remaining: Vec<&Group> = after_independent
        .iter()
        .copied()
        .filter(|g| !(g.src.reducible && g.sink.reducible))
        .collect();
    let removed_by_reduction = remaining.len() < after_independent.len();
    let certain: Vec<&Group> = remaining.iter().copied().filter(|g| g.certain).collect();
    if !certain.is_empty() {
        let (w, t) = witnesses_of(&certain);
        report.verdict = Verdict::Serial;
        report.basis = Some(Basis::Enumeration);
        report.witnesses = w;
        report.witnesses_truncated = t;
    } else if !remaining.is_empty() {
        let (w, t) = witnesses_of(&remaining);
        report.verdict = Verdict::Unknown;
        report.witnesses = w;
        report.witnesses_truncated = t;
        report.note = Some("some indices are unknown under this binding".into());
    } else if removed_by_independent {
        report.verdict = Verdict::AssumedParallel;
        report.basis = Some(Basis::Directive);
    } else {
        debug_assert!(removed_by_reduction);
        report.verdict = Verdict::ParallelWithReduction;
        report.basis = Some(Basis::Enumeration);
    }
}

/// While loops are never enumerated; only an `independent` directive makes
/// them parallel.
pub fn analyze_while(w: &WhileLoop, func: &str, loop_id: &str, loc: Loc) -> DependenceReport {
    let independent = w
        .directives
        .iter()
        .any(|d| matches!(d.kind, DirectiveKind::Independent { .. }));
    DependenceReport {
        loop_id: loop_id.to_string(),
        function: func.to_string(),
        loc,
        kind: LoopKind::While,
        verdict: if independent {
            Verdict::AssumedParallel
        } else {
            Verdict::Unknown
        },
        basis: independent.then_some(Basis::Directive),
        witnesses: Vec::new(),
        witnesses_truncated: false,
        reduction_vars: Vec::new(),
        note: (!independent).then(|| "while loops are not enumerated".to_string()),
    }
}

/// A loop statement with its stable id (`function#k`, pre-order).
#[derive(Debug, Clone, Copy)]
pub struct LoopRef<'a> {
    pub index: usize,
    pub stmt: &'a Stmt,
}

impl LoopRef<'_> {
    pub fn id(&self, func: &str) -> String {
        format!("{func}#{}", self.index)
    }
}

pub fn loops_of(f: &FunctionDef) -> Vec<LoopRef<'_>> {
    let mut out = Vec::new();
    for s in &f.body {
        s.walk(&mut |s| {
            if s.is_loop() {
                out.push(LoopRef {
                    index: out.len(),
                    stmt: s,
                });
            }
        });
    }
    out
}

/// Analyzes every loop of `func`.
pub fn analyze_function(
    ast: &Ast,
    func: &FunctionDef,
    binding: &ParamBinding,
    opts: AnalyzeOptions,
) -> (Vec<DependenceReport>, Vec<Diagnostic>) {
    let mut reports = Vec::new();
    let mut diags = Vec::new();
    for lr in loops_of(func) {
        let id = lr.id(&func.name);
        match &lr.stmt.kind {
            StmtKind::For(l) => {
                let (r, d) = analyze_loop(ast, func, l, &id, lr.stmt.loc, binding, opts);
                reports.push(r);
                diags.extend(d);
            }
            StmtKind::While(w) => reports.push(analyze_while(w, &func.name, &id, lr.stmt.loc)),
            _ => unreachable!(),
        }
    }
    (reports, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn single_loop(src: &str, binding: ParamBinding) -> DependenceReport {
        let ast = parse_source("t.c", src).unwrap();
        let f = ast.functions.last().unwrap();
        let (mut r, d) = analyze_function(&ast, f, &binding, AnalyzeOptions::default());
        assert!(d.is_empty(), "{d:?}");
        r.remove(0)
    }

    fn accesses(src: &str, binding: ParamBinding) -> Vec<IterationAccess> {
        let ast = parse_source("t.c", src).unwrap();
        let f = ast.functions.last().unwrap();
        let lr = loops_of(f)[0];
        let StmtKind::For(l) = &lr.stmt.kind else { panic!() };
        collect_iteration_accesses(&ast, f, l, &binding, Limits::default()).unwrap()
    }

    const INDIRECT: &str = "void f(int n, int A[restrict const static n], int t[restrict const static n]) {\n  for (int i = 0; i < n; i++)\n    A[t[i]]++;\n}";

    const INDIRECT_PRAGMA: &str = "void f(int n, int A[restrict const static n], int t[restrict const static n]) {\n#pragma pencil independent\n  for (int i = 0; i < n; i++)\n    A[t[i]]++;\n}";

    #[test]
    fn copy_loop_has_no_witnesses() {
        let acc = accesses(
            "void f(int A[restrict const static 3], int B[restrict const static 3]) { for (int i = 0; i < 3; i++) A[i] = B[i]; }",
            ParamBinding::new(),
        );
        assert_eq!(acc.len(), 3);
        for (k, it) in acc.iter().enumerate() {
            let t = it.triple();
            assert_eq!(
                t.must_write_elements(),
                [("A".to_string(), vec![Subscript::Known(k as i64)])].into()
            );
            assert_eq!(
                t.read_elements(),
                [("B".to_string(), vec![Subscript::Known(k as i64)])].into()
            );
        }
        assert!(brute_force_dependences(&acc).unwrap().is_empty());
    }

    #[test]
    fn indirect_increment_witnesses() {
        let acc = accesses(INDIRECT, ParamBinding::new().scalar("n", 3).array("t", vec![0, 0, 1]));
        let w = brute_force_dependences(&acc).unwrap();
        let expect: Vec<DependenceWitness> = vec![
            DependenceWitness::new(DepKind::Raw, 0, 1, "A", vec![0]),
            DependenceWitness::new(DepKind::War, 0, 1, "A", vec![0]),
            DependenceWitness::new(DepKind::Waw, 0, 1, "A", vec![0]),
        ];
        assert_eq!(w, expect);
    }

    #[test]
    fn indirect_with_permutation_table() {
        let acc = accesses(INDIRECT, ParamBinding::new().scalar("n", 3).array("t", vec![0, 1, 2]));
        for (k, it) in acc.iter().enumerate() {
            let t = it.triple();
            let a = [("A".to_string(), vec![Subscript::Known(k as i64)])].into();
            assert_eq!(t.must_write_elements(), a);
            assert!(t.read_elements().is_superset(&a));
        }
    }

    #[test]
    fn shifted_read_is_raw() {
        let acc = accesses(
            "void f(int B[restrict const static 4]) { for (int i = 1; i < 4; i++) B[i] = B[i - 1]; }",
            ParamBinding::new(),
        );
        let w = brute_force_dependences(&acc).unwrap();
        assert_eq!(
            w,
            vec![
                DependenceWitness::new(DepKind::Raw, 1, 2, "B", vec![1]),
                DependenceWitness::new(DepKind::Raw, 2, 3, "B", vec![2]),
            ]
        );
    }

    #[test]
    fn brute_force_rejects_unknown_indices() {
        let acc = accesses(INDIRECT, ParamBinding::new().scalar("n", 3));
        assert_eq!(brute_force_dependences(&acc).unwrap_err().code, Code::UnknownIndex);
    }

    #[test]
    fn directive_verdicts() {
        assert_eq!(single_loop(INDIRECT, ParamBinding::new()).verdict, Verdict::Unknown);
        let r = single_loop(INDIRECT_PRAGMA, ParamBinding::new());
        assert_eq!((r.verdict, r.basis), (Verdict::AssumedParallel, Some(Basis::Directive)));
        let r = single_loop(INDIRECT, ParamBinding::new().scalar("n", 3).array("t", vec![0, 0, 1]));
        assert_eq!(r.verdict, Verdict::Serial);
        assert!(!r.witnesses.is_empty());
        let r = single_loop(INDIRECT, ParamBinding::new().scalar("n", 3).array("t", vec![2, 0, 1]));
        assert_eq!((r.verdict, r.basis), (Verdict::Parallel, Some(Basis::Enumeration)));
        let r = single_loop(
            INDIRECT_PRAGMA,
            ParamBinding::new().scalar("n", 3).array("t", vec![2, 0, 1]),
        );
        assert_eq!(r.verdict, Verdict::Parallel);
    }

    #[test]
    fn sum_reduction() {
        let src = "double f(void) {\n  double x;\n  int i;\n  x = exp(0);\n#pragma pencil reduction (+:x)\n  for (i = 1; i <= 100; i++)\n    x += exp(i);\n  return x;\n}";
        let r = single_loop(src, ParamBinding::new());
        assert_eq!(r.verdict, Verdict::ParallelWithReduction);
        assert_eq!(r.reduction_vars, ["x"]);
        let plain = src.replace("#pragma pencil reduction (+:x)\n", "");
        assert_eq!(single_loop(&plain, ParamBinding::new()).verdict, Verdict::Serial);
        let wrong_op = src.replace("(+:x)", "(*:x)");
        assert_eq!(single_loop(&wrong_op, ParamBinding::new()).verdict, Verdict::Serial);
    }

    #[test]
    fn reduction_var_read_elsewhere_stays_serial() {
        let src = "void f(int A[restrict const static 8]) {\n  int x;\n  x = 0;\n#pragma pencil reduction (+:x)\n  for (int i = 0; i < 8; i++) {\n    x += A[i];\n    A[i] = x;\n  }\n}";
        assert_eq!(single_loop(src, ParamBinding::new()).verdict, Verdict::Serial);
    }

    #[test]
    fn while_loops() {
        let src = "void f(int n) { int k; k = 0; while (k < n) k += 1; }";
        assert_eq!(single_loop(src, ParamBinding::new()).verdict, Verdict::Unknown);
        let src = "void f(int n) { int k; k = 0;\n#pragma pencil independent\nwhile (k < n) k += 1; }";
        assert_eq!(single_loop(src, ParamBinding::new()).verdict, Verdict::AssumedParallel);
    }

    #[test]
    fn labeled_independent_keeps_unlisted_pairs() {
        let src = "void f(int A[restrict const static 9], int B[restrict const static 9], int t[restrict const static 9]) {\n#pragma pencil independent (l1)\n  for (int i = 0; i < 8; i++) {\n    l1: A[t[i]] = 1;\n    B[i + 1] = B[i];\n  }\n}";
        let r = single_loop(src, ParamBinding::new());
        assert_eq!(r.verdict, Verdict::Serial);
        assert!(r.witnesses.iter().all(|w| w.array == "B"));
        let fixed = src.replace("B[i + 1] = B[i];", "B[i] = 2;");
        assert_eq!(
            single_loop(&fixed, ParamBinding::new()).verdict,
            Verdict::AssumedParallel
        );
    }

    #[test]
    fn fast_path_examples() {
        let parse = |body: &str| {
            let src = format!("void f(int n, int A[restrict const static n], int B[restrict const static n]) {{ int i; for (i = 1; i < n; i++) {body} }}");
            let ast = parse_source("t.c", &src).unwrap();
            let StmtKind::For(l) = &ast.functions[0].body[1].kind else {
                panic!()
            };
            affine_fast_path(l)
        };
        assert_eq!(parse("A[i] = 0;"), Some(Verdict::Parallel));
        assert_eq!(parse("A[i] = A[i] + 1;"), Some(Verdict::Parallel));
        assert_eq!(parse("A[i] = A[i - 1];"), None);
        assert_eq!(parse("A[2 * i] = A[2 * i + 1];"), Some(Verdict::Parallel));
        assert_eq!(parse("A[0] = B[i];"), None);
        assert_eq!(parse("A[B[i]] = 0;"), None);
        assert_eq!(parse("{ int t; t = B[i]; A[i] = t; }"), Some(Verdict::Parallel));
        assert_eq!(parse("n = 2;"), None);
    }

    #[test]
    fn fast_path_reports_affine_basis() {
        let src = "void f(int end, int my_vector[restrict const static end + 1]) {\n  int i;\n  for (i = 0; i <= end; i++)\n    my_vector[i] = 0;\n}";
        let r = single_loop(src, ParamBinding::new());
        assert_eq!((r.verdict, r.basis), (Verdict::Parallel, Some(Basis::Affine)));
    }

    #[test]
    fn exact_demands_binding() {
        let ast = parse_source("t.c", INDIRECT).unwrap();
        let f = &ast.functions[0];
        let opts = AnalyzeOptions {
            exact: true,
            ..Default::default()
        };
        let (r, d) = analyze_function(&ast, f, &ParamBinding::new(), opts);
        assert_eq!(r[0].verdict, Verdict::Unknown);
        assert_eq!(d[0].code, Code::BindingRequired);
    }

    #[test]
    fn nested_target_has_instances() {
        let src = "void f(int A[restrict const static 4][4]) {\n  for (int j = 0; j < 4; j++)\n    for (int i = 1; i < 4; i++)\n      A[j][i] = A[j][i - 1];\n}";
        let ast = parse_source("t.c", src).unwrap();
        let f = &ast.functions[0];
        let (r, _) = analyze_function(&ast, f, &ParamBinding::new(), AnalyzeOptions::default());
        // Outer loop: rows are independent. Inner loop: carried along i.
        assert_eq!(r[0].verdict, Verdict::Parallel);
        assert_eq!(r[1].verdict, Verdict::Serial);
        assert!(r[1].witnesses.iter().any(|w| w.instance == 3));
    }

    #[test]
    fn loop_ids_are_preorder() {
        let ast = parse_source(
            "t.c",
            "void g(int n) { int i, j; for (i = 0; i < n; i++) for (j = 0; j < n; j++) ; while (n > 0) n = n - 1; }",
        )
        .unwrap();
        let ids: Vec<String> = loops_of(&ast.functions[0]).iter().map(|l| l.id("g")).collect();
        assert_eq!(ids, ["g#0", "g#1", "g#2"]);
    }
}
