//! Abstract execution that enumerates array accesses.
//!
//! Integer scalars and bound table contents are tracked exactly; floating
//! point values, `rand()` results and unbound data are unknown. Two modes
//! share the engine:
//!
//! * summary mode runs summary functions strictly: any control decision or
//!   index that depends on an unknown value is an error;
//! * loop mode runs a whole function and records the accesses each iteration
//!   of one target loop makes to storage that outlives the iteration. Unknown
//!   conditions run both branches with writes demoted to may-writes, unknown
//!   trip counts run the body twice with the counter unknown, and unknown
//!   subscripts become [`Subscript::Unknown`].

use std::collections::{HashMap, HashSet};

use crate::diag::{Code, Diagnostic, Loc};
use crate::frontend::ast::*;
use crate::summaries::{AccessKind, Limits, ParamBinding, Subscript};

pub(crate) type AVal = Option<i64>;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawRecord {
    pub array: String,
    pub index: Vec<Subscript>,
    pub kind: AccessKind,
    pub iter: Vec<i64>,
    /// `(instance, iteration)` of the target loop.
    pub at: Option<(usize, i64)>,
    /// Labels enclosing the access inside the target loop body.
    pub labels: Vec<String>,
    /// Set for both halves of `x op= e` (and `x = fmax(x, e)`) updates.
    pub update: Option<ReductionOp>,
    /// Location of the statement of the analyzed function that caused it.
    pub site: Loc,
}

#[derive(Debug)]
pub(crate) enum Stop {
    Diag(Diagnostic),
    /// Enumeration is impossible here; the reason is for reports.
    NotEnumerable(String),
    /// The target loop finished and cannot run again.
    Done,
}

impl From<Diagnostic> for Stop {
    fn from(d: Diagnostic) -> Self {
        Stop::Diag(d)
    }
}

type R<T> = Result<T, Stop>;

struct Storage {
    name: String,
    /// Extents, leading first; empty for scalars.
    dims: Vec<AVal>,
    /// `None` when contents are unknown.
    cells: Option<Vec<AVal>>,
}

#[derive(Debug, Clone)]
enum Bind {
    Scalar(usize),
    Pointer(usize),
    /// Array view; `dims` are the extents declared at this binding site.
    Array {
        sid: usize,
        dims: Vec<AVal>,
    },
}

struct Frame {
    scopes: Vec<HashMap<String, Bind>>,
    summary: bool,
    top: bool,
    extra_may: usize,
}

impl Frame {
    fn new(summary: bool, top: bool) -> Self {
        Self {
            scopes: vec![HashMap::new()],
            summary,
            top,
            extra_may: 0,
        }
    }

    fn lookup(&self, name: &str) -> Option<&Bind> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn declare(&mut self, name: &str, b: Bind) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), b);
    }
}

enum Flow {
    Normal,
    Return(AVal),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Summary,
    Loop,
}

const MAX_CALL_DEPTH: usize = 64;

pub(crate) struct Collector<'a> {
    ast: &'a Ast,
    mode: Mode,
    limits: Limits,
    storages: Vec<Storage>,
    pub records: Vec<RawRecord>,
    pub warnings: Vec<Diagnostic>,
    warned: HashSet<usize>,
    /// Storage ids below this are shared with the caller of a summarized call.
    shared_limit: usize,
    target: Option<*const ForLoop>,
    current: Option<(usize, i64)>,
    instance_start: usize,
    /// Iterations executed by each instance of the target loop.
    pub instances: Vec<Vec<i64>>,
    counters: Vec<usize>,
    may_depth: usize,
    quiet: usize,
    labels: Vec<String>,
    update: Option<ReductionOp>,
    site: Loc,
    top_loop_depth: usize,
    call_depth: usize,
    steps: u64,
}

fn wrap(v: i64) -> i64 {
    v as i32 as i64
}

fn fold(op: BinOp, l: AVal, r: AVal) -> AVal {
    use BinOp::*;
    let (a, b) = (l? as i32, r? as i32);
    Some(match op {
        Add => a.wrapping_add(b) as i64,
        Sub => a.wrapping_sub(b) as i64,
        Mul => a.wrapping_mul(b) as i64,
        Div | Rem if b == 0 => return None,
        Div => a.wrapping_div(b) as i64,
        Rem => a.wrapping_rem(b) as i64,
        Lt => (a < b) as i64,
        Le => (a <= b) as i64,
        Gt => (a > b) as i64,
        Ge => (a >= b) as i64,
        Eq => (a == b) as i64,
        Ne => (a != b) as i64,
        And => (a != 0 && b != 0) as i64,
        Or => (a != 0 || b != 0) as i64,
    })
}

fn flatten(idx: &[Subscript], inner: &[AVal]) -> Option<i64> {
    let mut flat = idx.first()?.known()?;
    for (i, d) in idx[1..].iter().zip(inner) {
        flat = flat.checked_mul((*d)?)?.checked_add(i.known()?)?;
    }
    Some(flat)
}

fn unflatten(mut flat: i64, inner: &[AVal]) -> Option<Vec<Subscript>> {
    let mut out = Vec::with_capacity(inner.len() + 1);
    for d in inner.iter().rev() {
        let d = (*d)?;
        if d <= 0 {
            return None;
        }
        out.push(Subscript::Known(flat.rem_euclid(d)));
        flat = flat.div_euclid(d);
    }
    out.push(Subscript::Known(flat));
    out.reverse();
    Some(out)
}

/// Detects `x = fmax(x, e)` / `x = fmin(x, e)`, returning the operator and `e`.
fn minmax_update<'e>(target: &LValue, value: &'e Expr) -> Option<(ReductionOp, &'e Expr)> {
    let Expr::Call { callee, args } = value else {
        return None;
    };
    let op = match callee.as_str() {
        "fmax" => ReductionOp::Max,
        "fmin" => ReductionOp::Min,
        _ => return None,
    };
    let [a, b] = args.as_slice() else { return None };
    let t = target.to_expr();
    if *a == t {
        Some((op, b))
    } else if *b == t {
        Some((op, a))
    } else {
        None
    }
}

impl<'a> Collector<'a> {
    fn new(ast: &'a Ast, mode: Mode, limits: Limits) -> Self {
        Self {
            ast,
            mode,
            limits,
            storages: Vec::new(),
            records: Vec::new(),
            warnings: Vec::new(),
            warned: HashSet::new(),
            shared_limit: usize::MAX,
            target: None,
            current: None,
            instance_start: 0,
            instances: Vec::new(),
            counters: Vec::new(),
            may_depth: 0,
            quiet: 0,
            labels: Vec::new(),
            update: None,
            site: Loc::default(),
            top_loop_depth: 0,
            call_depth: 0,
            steps: 0,
        }
    }

    pub fn for_summary(ast: &'a Ast, limits: Limits) -> Self {
        Self::new(ast, Mode::Summary, limits)
    }

    pub fn for_target(ast: &'a Ast, target: &'a ForLoop, limits: Limits) -> Self {
        let mut c = Self::new(ast, Mode::Loop, limits);
        c.target = Some(target as *const ForLoop);
        c
    }

    fn strict(&self) -> bool {
        self.mode == Mode::Summary
    }

    fn nonaffine(&self, what: &str) -> Stop {
        Stop::Diag(Diagnostic::error(
            Code::NonAffine,
            self.site,
            format!("{what} depends on a value that is unknown at this binding"),
        ))
    }

    fn alloc(&mut self, name: &str, dims: Vec<AVal>, cells: Option<Vec<AVal>>, float: bool) -> usize {
        let cells = if float { None } else { cells };
        self.storages.push(Storage {
            name: name.to_string(),
            dims,
            cells,
        });
        self.storages.len() - 1
    }

    fn alloc_scalar(&mut self, name: &str, v: AVal, ty: ScalarType) -> usize {
        let float = ty != ScalarType::Int;
        self.alloc(name, Vec::new(), Some(vec![if float { None } else { v }]), float)
    }

    fn alloc_array(&mut self, name: &str, dims: Vec<AVal>, contents: Option<&[i64]>, ty: ScalarType) -> usize {
        let float = ty != ScalarType::Int;
        let cells = match contents {
            Some(data) if !float => Some(data.iter().map(|v| Some(*v)).collect()),
            _ => None,
        };
        self.alloc(name, dims, cells, float)
    }

    fn step(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.limits.steps {
            return Err(Stop::Diag(Diagnostic::error(
                Code::Budget,
                self.site,
                format!("abstract execution exceeded {} steps", self.limits.steps),
            )));
        }
        Ok(())
    }

    fn iter_vector(&self) -> Vec<i64> {
        self.counters
            .iter()
            .filter_map(|sid| self.storages[*sid].cells.as_ref().and_then(|c| c[0]))
            .collect()
    }

    fn push_record(&mut self, sid: usize, index: Vec<Subscript>, kind: AccessKind) -> R<()> {
        if self.records.len() >= self.limits.records {
            return Err(Stop::Diag(Diagnostic::error(
                Code::Budget,
                self.site,
                format!(
                    "enumeration exceeded the budget of {} access records",
                    self.limits.records
                ),
            )));
        }
        self.records.push(RawRecord {
            array: self.storages[sid].name.clone(),
            index,
            kind,
            iter: self.iter_vector(),
            at: self.current,
            labels: self.labels.clone(),
            update: self.update,
            site: self.site,
        });
        Ok(())
    }

    fn records_plain(&self, frame: &Frame, sid: usize) -> bool {
        if frame.summary || self.quiet > 0 || self.counters.contains(&sid) {
            return false;
        }
        match self.mode {
            Mode::Summary => sid < self.shared_limit,
            Mode::Loop => self.current.is_some() && sid < self.instance_start,
        }
    }

    fn records_summary(&self, sid: usize) -> bool {
        match self.mode {
            Mode::Summary => sid < self.shared_limit || self.call_depth == 0,
            Mode::Loop => self.current.is_some() && sid < self.instance_start,
        }
    }

    fn cell_index(&self, sid: usize, idx: &[Subscript]) -> Option<usize> {
        let s = &self.storages[sid];
        let cells = s.cells.as_ref()?;
        let flat = if s.dims.is_empty() {
            0
        } else {
            flatten(idx, &s.dims[1..])?
        };
        (flat >= 0 && (flat as usize) < cells.len()).then_some(flat as usize)
    }

    fn load(&self, sid: usize, idx: &[Subscript]) -> AVal {
        let i = self.cell_index(sid, idx)?;
        self.storages[sid].cells.as_ref()?[i]
    }

    fn store(&mut self, sid: usize, idx: &[Subscript], v: AVal) {
        let v = if self.may_depth > 0 { None } else { v };
        match self.cell_index(sid, idx) {
            Some(i) => self.storages[sid].cells.as_mut().unwrap()[i] = v,
            None if idx.contains(&Subscript::Unknown) => {
                if let Some(c) = self.storages[sid].cells.as_mut() {
                    c.iter_mut().for_each(|x| *x = None);
                }
            }
            None => {}
        }
    }

    fn write_kind(&self) -> AccessKind {
        if self.may_depth > 0 {
            AccessKind::MayWrite
        } else {
            AccessKind::MustWrite
        }
    }

    fn read_access(&mut self, frame: &Frame, sid: usize, idx: Vec<Subscript>) -> R<AVal> {
        let v = self.load(sid, &idx);
        if self.records_plain(frame, sid) {
            self.push_record(sid, idx, AccessKind::Read)?;
        }
        Ok(v)
    }

    fn write_access(&mut self, frame: &Frame, sid: usize, idx: Vec<Subscript>, v: AVal) -> R<()> {
        self.store(sid, &idx, v);
        if self.records_plain(frame, sid) {
            let kind = self.write_kind();
            self.push_record(sid, idx, kind)?;
        }
        Ok(())
    }

    /// Maps an index expressed against a view onto the storage's own shape.
    fn to_storage(&self, sid: usize, view: &[AVal], idx: Vec<Subscript>) -> Vec<Subscript> {
        let sdims = &self.storages[sid].dims;
        if view.len() == sdims.len() || sdims.is_empty() {
            return idx;
        }
        let unknown = || vec![Subscript::Unknown; sdims.len()];
        match flatten(&idx, view.get(1..).unwrap_or(&[])) {
            Some(flat) => unflatten(flat, &sdims[1..]).unwrap_or_else(unknown),
            None => unknown(),
        }
    }

    fn eval_quiet(&mut self, frame: &mut Frame, e: &Expr) -> R<AVal> {
        self.quiet += 1;
        let r = self.eval(frame, e);
        self.quiet -= 1;
        r
    }

    fn subscripts(&mut self, frame: &mut Frame, indices: &[Expr]) -> R<Vec<Subscript>> {
        let mut out = Vec::with_capacity(indices.len());
        for e in indices {
            let saved = self.update.take();
            let v = self.eval(frame, e);
            self.update = saved;
            match v? {
                Some(v) => out.push(Subscript::Known(v)),
                None if self.strict() => return Err(self.nonaffine("an array index")),
                None => out.push(Subscript::Unknown),
            }
        }
        Ok(out)
    }

    /// Resolves an lvalue to a storage and storage-relative index.
    fn place(&mut self, frame: &mut Frame, lv: &LValue) -> R<Option<(usize, Vec<Subscript>)>> {
        Ok(match lv {
            LValue::Var(n) => match frame.lookup(n) {
                Some(Bind::Scalar(sid)) | Some(Bind::Pointer(sid)) => Some((*sid, Vec::new())),
                Some(Bind::Array { sid, .. }) => {
                    let sid = *sid;
                    let rank = self.storages[sid].dims.len();
                    Some((sid, vec![Subscript::Unknown; rank]))
                }
                None => None,
            },
            LValue::Deref(n) => match frame.lookup(n) {
                Some(Bind::Pointer(sid)) | Some(Bind::Scalar(sid)) => Some((*sid, Vec::new())),
                _ => None,
            },
            LValue::Index { array, indices } => {
                let idx = self.subscripts(frame, indices)?;
                match frame.lookup(array).cloned() {
                    Some(Bind::Array { sid, dims }) => Some((sid, self.to_storage(sid, &dims, idx))),
                    _ => None,
                }
            }
        })
    }

    fn eval(&mut self, frame: &mut Frame, e: &Expr) -> R<AVal> {
        match e {
            Expr::Int(v) => Ok(Some(wrap(*v))),
            Expr::Float(_) => Ok(None),
            Expr::Var(n) => match frame.lookup(n).cloned() {
                Some(Bind::Scalar(sid)) => self.read_access(frame, sid, Vec::new()),
                _ => Ok(None),
            },
            Expr::Deref(n) => match frame.lookup(n).cloned() {
                Some(Bind::Pointer(sid)) => self.read_access(frame, sid, Vec::new()),
                _ => Ok(None),
            },
            Expr::Index { array, indices } => {
                let idx = self.subscripts(frame, indices)?;
                match frame.lookup(array).cloned() {
                    Some(Bind::Array { sid, dims }) => {
                        let idx = self.to_storage(sid, &dims, idx);
                        self.read_access(frame, sid, idx)
                    }
                    _ => Ok(None),
                }
            }
            Expr::Call { callee, args } => self.call(frame, callee, args),
            Expr::Unary { op, operand } => {
                let v = self.eval(frame, operand)?;
                Ok(match op {
                    UnOp::Neg => v.map(|x| wrap(-x)),
                    UnOp::Not => v.map(|x| (x == 0) as i64),
                })
            }
            Expr::Binary {
                op: BinOp::And,
                lhs,
                rhs,
            } => match self.eval(frame, lhs)? {
                Some(0) => Ok(Some(0)),
                l => {
                    let r = self.eval(frame, rhs)?;
                    Ok(match (l, r) {
                        (_, Some(0)) => Some(0),
                        (Some(_), Some(_)) => Some(1),
                        _ => None,
                    })
                }
            },
            Expr::Binary {
                op: BinOp::Or,
                lhs,
                rhs,
            } => match self.eval(frame, lhs)? {
                Some(x) if x != 0 => Ok(Some(1)),
                l => {
                    let r = self.eval(frame, rhs)?;
                    Ok(match (l, r) {
                        (_, Some(x)) if x != 0 => Some(1),
                        (Some(_), Some(_)) => Some(0),
                        _ => None,
                    })
                }
            },
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(frame, lhs)?;
                let r = self.eval(frame, rhs)?;
                Ok(fold(*op, l, r))
            }
            Expr::AddrOf(inner) => {
                self.eval(frame, inner)?;
                Ok(None)
            }
        }
    }

    fn cond(&mut self, frame: &mut Frame, e: &Expr, what: &str) -> R<Option<bool>> {
        match self.eval(frame, e)? {
            Some(v) => Ok(Some(v != 0)),
            None if self.strict() => Err(self.nonaffine(what)),
            None => Ok(None),
        }
    }

    fn block(&mut self, frame: &mut Frame, body: &'a [Stmt]) -> R<Flow> {
        frame.scopes.push(HashMap::new());
        let mut flow = Flow::Normal;
        for s in body {
            match self.stmt(frame, s) {
                Ok(Flow::Normal) => {}
                Ok(f) => {
                    flow = f;
                    break;
                }
                Err(e) => {
                    frame.scopes.pop();
                    return Err(e);
                }
            }
        }
        frame.scopes.pop();
        Ok(flow)
    }

    /// Runs `body` in may-mode: once, or twice when modelling an unknown
    /// number of repetitions.
    fn may_run(&mut self, frame: &mut Frame, body: &'a Stmt, passes: usize) -> R<()> {
        self.may_depth += 1;
        let mut r = Ok(());
        for _ in 0..passes {
            if let Err(e) = self.stmt(frame, body) {
                r = Err(e);
                break;
            }
        }
        self.may_depth -= 1;
        r
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'a Stmt) -> R<Flow> {
        self.step()?;
        if frame.top {
            self.site = s.loc;
        }
        match &s.kind {
            StmtKind::Assign { target, op, value } => self.assign(frame, target, *op, value)?,
            StmtKind::Decl(d) => self.decl(frame, d)?,
            StmtKind::For(l) => {
                if frame.top {
                    self.top_loop_depth += 1;
                }
                let r = self.for_loop(frame, l);
                if frame.top {
                    self.top_loop_depth -= 1;
                }
                return r;
            }
            StmtKind::While(w) => {
                if frame.top {
                    self.top_loop_depth += 1;
                }
                let r = self.while_loop(frame, w);
                if frame.top {
                    self.top_loop_depth -= 1;
                }
                return r;
            }
            StmtKind::If { cond, then, otherwise } => match self.cond(frame, cond, "a condition")? {
                Some(true) => return self.stmt(frame, then),
                Some(false) => {
                    if let Some(o) = otherwise {
                        return self.stmt(frame, o);
                    }
                }
                None => {
                    self.may_run(frame, then, 1)?;
                    if let Some(o) = otherwise {
                        self.may_run(frame, o, 1)?;
                    }
                }
            },
            StmtKind::Call { callee, args } => {
                self.call(frame, callee, args)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(frame, e)?,
                    None => None,
                };
                if self.may_depth > 0 {
                    // A return that may or may not happen: the rest of the
                    // function becomes conditional.
                    frame.extra_may += 1;
                    self.may_depth += 1;
                    return Ok(Flow::Normal);
                }
                return Ok(Flow::Return(v));
            }
            StmtKind::Block(b) => return self.block(frame, b),
            StmtKind::Labeled { label, stmt } => {
                let tracked = frame.top && self.current.is_some();
                if tracked {
                    self.labels.push(label.clone());
                }
                let r = self.stmt(frame, stmt);
                if tracked {
                    self.labels.pop();
                }
                return r;
            }
            StmtKind::Goto(_) => return Err(Stop::NotEnumerable("goto".into())),
            StmtKind::SummaryAccess { kind, target } => self.summary_access(frame, *kind, target)?,
        }
        Ok(Flow::Normal)
    }

    fn assign(&mut self, frame: &mut Frame, target: &LValue, op: AssignOp, value: &Expr) -> R<()> {
        let minmax = if op == AssignOp::Set {
            minmax_update(target, value)
        } else {
            None
        };
        let tag = match (op, minmax) {
            (AssignOp::Add, _) => Some(ReductionOp::Add),
            (AssignOp::Mul, _) => Some(ReductionOp::Mul),
            (_, Some((m, _))) => Some(m),
            _ => None,
        };
        let rhs = match minmax {
            Some((_, other)) => {
                self.eval(frame, other)?;
                None
            }
            None => self.eval(frame, value)?,
        };
        let Some((sid, idx)) = self.place(frame, target)? else {
            return Ok(());
        };
        if frame.summary && !matches!(frame.lookup(target.root()), Some(Bind::Scalar(_))) {
            // Summaries only drive enumeration; their stores are not modelled.
            return Ok(());
        }
        self.update = tag;
        let r = (|| {
            let v = if minmax.is_some() || op != AssignOp::Set {
                let cur = self.read_access(frame, sid, idx.clone())?;
                op.binop().and_then(|b| fold(b, cur, rhs))
            } else {
                rhs
            };
            self.write_access(frame, sid, idx, v)
        })();
        self.update = None;
        r
    }

    fn decl(&mut self, frame: &mut Frame, d: &LocalDecl) -> R<()> {
        match &d.ty {
            CType::Scalar { ty, .. } => {
                let v = match &d.init {
                    Some(e) => self.eval(frame, e)?,
                    None => None,
                };
                let sid = self.alloc_scalar(&d.name, v, *ty);
                frame.declare(&d.name, Bind::Scalar(sid));
            }
            CType::Array { .. } => {
                let dims = self.declared_dims(frame, &d.ty)?;
                let len = dims
                    .iter()
                    .try_fold(1i64, |acc, d| d.and_then(|d| acc.checked_mul(d.max(0))));
                let cells = match len {
                    Some(n) if n <= 1 << 24 => Some(vec![None; n as usize]),
                    _ => None,
                };
                let float = d.ty.base() != ScalarType::Int;
                let sid = self.alloc(&d.name, dims.clone(), cells, float);
                frame.declare(&d.name, Bind::Array { sid, dims });
            }
            CType::Pointer { .. } => {
                let sid = self.alloc_scalar(&d.name, None, ScalarType::Int);
                frame.declare(&d.name, Bind::Pointer(sid));
            }
        }
        Ok(())
    }

    fn declared_dims(&mut self, frame: &mut Frame, ty: &CType) -> R<Vec<AVal>> {
        let Some(dims) = ty.array_dims() else {
            return Err(Stop::NotEnumerable("array of pointers".into()));
        };
        let mut out = Vec::new();
        for d in dims {
            out.push(match &d.extent {
                Some(e) => self.eval_quiet(frame, e)?,
                None => None,
            });
        }
        Ok(out)
    }

    fn summary_access(&mut self, frame: &mut Frame, kind: SummaryKind, target: &LValue) -> R<()> {
        let Some((sid, idx)) = self.place(frame, target)? else {
            return Ok(());
        };
        if self.strict() && idx.contains(&Subscript::Unknown) {
            return Err(self.nonaffine("a summary access"));
        }
        if self.strict() {
            self.check_bounds(sid, &idx);
        }
        if !self.records_summary(sid) {
            return Ok(());
        }
        match kind {
            SummaryKind::Use => self.push_record(sid, idx, AccessKind::Read)?,
            SummaryKind::MayDef => self.push_record(sid, idx, AccessKind::MayWrite)?,
            SummaryKind::Def => {
                if self.may_depth == 0 {
                    self.push_record(sid, idx.clone(), AccessKind::MustWrite)?;
                }
                self.push_record(sid, idx, AccessKind::MayWrite)?;
            }
        }
        Ok(())
    }

    fn check_bounds(&mut self, sid: usize, idx: &[Subscript]) {
        let s = &self.storages[sid];
        let out = idx.iter().zip(&s.dims).any(|(i, d)| match (i.known(), d) {
            (Some(i), Some(d)) => i < 0 || i >= *d,
            _ => false,
        });
        if out && self.warned.insert(sid) {
            let shown: Vec<String> = idx.iter().map(|i| format!("[{i}]")).collect();
            self.warnings.push(Diagnostic::warning(
                Code::Bounds,
                self.site,
                format!("access {}{} is outside the declared extent", s.name, shown.join("")),
            ));
        }
    }

    fn for_loop(&mut self, frame: &mut Frame, l: &'a ForLoop) -> R<Flow> {
        frame.scopes.push(HashMap::new());
        let r = self.for_loop_inner(frame, l);
        frame.scopes.pop();
        r
    }

    fn for_loop_inner(&mut self, frame: &mut Frame, l: &'a ForLoop) -> R<Flow> {
        let is_target = self.target == Some(l as *const ForLoop);
        let lo = if is_target {
            self.eval_quiet(frame, &l.lower)?
        } else {
            self.eval(frame, &l.lower)?
        };
        let sid = match (l.declares, frame.lookup(&l.var)) {
            (Some(ty), _) => {
                let sid = self.alloc_scalar(&l.var, lo, ty);
                frame.declare(&l.var, Bind::Scalar(sid));
                sid
            }
            (None, Some(Bind::Scalar(sid))) => *sid,
            _ => return Err(Stop::NotEnumerable(format!("loop counter `{}` is not a scalar", l.var))),
        };
        self.storages[sid].cells = Some(vec![lo]);
        self.counters.push(sid);
        let r = if is_target {
            self.target_loop(frame, l, sid)
        } else {
            self.plain_loop(frame, l, sid)
        };
        self.counters.pop();
        r
    }

    fn counter(&self, sid: usize) -> AVal {
        self.storages[sid].cells.as_ref().and_then(|c| c[0])
    }

    fn set_counter(&mut self, sid: usize, v: AVal) {
        self.storages[sid].cells = Some(vec![v]);
    }

    fn plain_loop(&mut self, frame: &mut Frame, l: &'a ForLoop, sid: usize) -> R<Flow> {
        let upper = l.upper_exclusive();
        loop {
            self.step()?;
            let hi = self.eval(frame, &upper)?;
            let (Some(i), Some(hi)) = (self.counter(sid), hi) else {
                if self.strict() {
                    return Err(self.nonaffine("a loop bound"));
                }
                self.set_counter(sid, None);
                self.may_run(frame, &l.body, 2)?;
                self.set_counter(sid, None);
                return Ok(Flow::Normal);
            };
            if i >= hi {
                return Ok(Flow::Normal);
            }
            if let Flow::Return(v) = self.stmt(frame, &l.body)? {
                return Ok(Flow::Return(v));
            }
            let next = self.counter(sid).map(|v| wrap(v + 1));
            self.set_counter(sid, next);
        }
    }

    fn target_loop(&mut self, frame: &mut Frame, l: &'a ForLoop, sid: usize) -> R<Flow> {
        let instance = self.instances.len();
        self.instances.push(Vec::new());
        let saved_start = self.instance_start;
        let saved_labels = std::mem::take(&mut self.labels);
        self.instance_start = self.storages.len();
        let upper = l.upper_exclusive();
        let result = (|| loop {
            self.step()?;
            let hi = self.eval_quiet(frame, &upper)?;
            let (Some(i), Some(hi)) = (self.counter(sid), hi) else {
                return Err(Stop::NotEnumerable(
                    "the loop bounds are unknown under this binding".into(),
                ));
            };
            if i >= hi {
                return Ok(Flow::Normal);
            }
            self.current = Some((instance, i));
            self.instances[instance].push(i);
            let flow = self.stmt(frame, &l.body);
            self.current = None;
            if let Flow::Return(v) = flow? {
                return Ok(Flow::Return(v));
            }
            let next = self.counter(sid).map(|v| wrap(v + 1));
            self.set_counter(sid, next);
        })();
        self.current = None;
        self.labels = saved_labels;
        self.instance_start = saved_start;
        let flow = result?;
        // Only enclosing loops (or an unknown branch) could run it again.
        if self.top_loop_depth <= 1 && self.may_depth == 0 {
            return Err(Stop::Done);
        }
        Ok(flow)
    }

    fn while_loop(&mut self, frame: &mut Frame, w: &'a WhileLoop) -> R<Flow> {
        loop {
            self.step()?;
            match self.cond(frame, &w.cond, "a loop condition")? {
                Some(false) => return Ok(Flow::Normal),
                Some(true) => {
                    if let Flow::Return(v) = self.stmt(frame, &w.body)? {
                        return Ok(Flow::Return(v));
                    }
                }
                None => {
                    self.may_run(frame, &w.body, 2)?;
                    self.eval(frame, &w.cond)?;
                    return Ok(Flow::Normal);
                }
            }
        }
    }

    fn call(&mut self, frame: &mut Frame, callee: &str, args: &[Expr]) -> R<AVal> {
        if is_whitelisted_external(callee) {
            for a in args {
                self.eval(frame, a)?;
            }
            return Ok(None);
        }
        if frame.summary {
            return Err(Stop::Diag(Diagnostic::error(
                Code::NestedSummary,
                self.site,
                format!("summary code calls `{callee}`; calls inside summaries are not supported"),
            )));
        }
        let ast = self.ast;
        let Some(f) = ast.function(callee) else {
            let inside = self.mode == Mode::Summary || self.current.is_some();
            if inside {
                return Err(Stop::Diag(Diagnostic::error(
                    Code::NoSummary,
                    self.site,
                    format!("`{callee}` has neither a body nor an access summary"),
                )));
            }
            // Outside the analyzed loop an opaque call only clobbers data.
            for a in args {
                if let Expr::Var(n) = a {
                    if let Some(Bind::Array { sid, .. }) = frame.lookup(n) {
                        self.storages[*sid].cells = None;
                    }
                }
                self.eval(frame, a)?;
            }
            return Ok(None);
        };
        if f.params.len() != args.len() {
            return Err(Stop::NotEnumerable(format!(
                "`{callee}` called with the wrong number of arguments"
            )));
        }
        if self.call_depth >= MAX_CALL_DEPTH {
            return Err(Stop::NotEnumerable("call nesting too deep".into()));
        }
        let mut callee_frame = Frame::new(false, false);
        for (p, a) in f.params.iter().zip(args) {
            self.bind_param(frame, &mut callee_frame, p, a)?;
        }
        self.call_depth += 1;
        let r = match &f.access {
            Some(acc) => self.run_access(&mut callee_frame, f, acc).map(|_| None),
            None => self.run_body(&mut callee_frame, f),
        };
        self.call_depth -= 1;
        r
    }

    fn bind_param(&mut self, caller: &mut Frame, callee: &mut Frame, p: &Param, a: &Expr) -> R<()> {
        match p.kind() {
            ParamKind::Scalar => {
                let v = self.eval(caller, a)?;
                let sid = self.alloc_scalar(&p.name, v, p.ty.base());
                callee.declare(&p.name, Bind::Scalar(sid));
            }
            ParamKind::Array => {
                let target = match a {
                    Expr::Var(n) => caller.lookup(n).cloned(),
                    _ => None,
                };
                let Some(Bind::Array { sid, .. }) = target else {
                    return Err(Stop::NotEnumerable(format!(
                        "array argument for `{}` is not an array name",
                        p.name
                    )));
                };
                let dims = self.declared_dims(callee, &p.ty)?;
                callee.declare(&p.name, Bind::Array { sid, dims });
            }
            ParamKind::ScalarPointer => {
                let sid = match a {
                    Expr::Var(n) | Expr::Deref(n) => match caller.lookup(n) {
                        Some(Bind::Pointer(s)) | Some(Bind::Scalar(s)) => Some(*s),
                        _ => None,
                    },
                    Expr::AddrOf(inner) => match inner.as_ref() {
                        Expr::Var(n) => match caller.lookup(n) {
                            Some(Bind::Scalar(s)) => Some(*s),
                            _ => None,
                        },
                        _ => None,
                    },
                    _ => None,
                };
                let Some(sid) = sid else {
                    return Err(Stop::NotEnumerable(format!("pointer argument for `{}`", p.name)));
                };
                callee.declare(&p.name, Bind::Pointer(sid));
            }
            ParamKind::ArrayOfPointers | ParamKind::OtherPointer => {
                return Err(Stop::NotEnumerable(format!(
                    "parameter `{}` has an unsupported type",
                    p.name
                )));
            }
        }
        Ok(())
    }

    fn run_body(&mut self, frame: &mut Frame, f: &'a FunctionDef) -> R<AVal> {
        let saved_may = self.may_depth;
        let r = self.block(frame, &f.body);
        self.may_depth = saved_may;
        match r? {
            Flow::Return(v) if frame.extra_may == 0 => Ok(v),
            _ => Ok(None),
        }
    }

    /// Runs the summary named by `acc` on behalf of `f`, whose parameters are
    /// bound in `frame`.
    fn run_access(&mut self, frame: &mut Frame, f: &FunctionDef, acc: &AccessBinding) -> R<()> {
        let ast = self.ast;
        let resolved = crate::summaries::resolve_one(ast, f, acc)?;
        let s = ast.function(&resolved.summary).expect("resolved summary exists");
        let mut sframe = Frame::new(true, false);
        for (p, a) in s.params.iter().zip(&acc.args) {
            self.bind_param(frame, &mut sframe, p, a)?;
        }
        let saved_may = self.may_depth;
        let r = self.block(&mut sframe, &s.body);
        self.may_depth = saved_may;
        r.map(|_| ())
    }

    fn bind_top(&mut self, frame: &mut Frame, f: &FunctionDef, binding: &ParamBinding) -> R<()> {
        for p in &f.params {
            match p.kind() {
                ParamKind::Scalar => {
                    let v = binding.scalars.get(&p.name).map(|v| wrap(*v));
                    let sid = self.alloc_scalar(&p.name, v, p.ty.base());
                    frame.declare(&p.name, Bind::Scalar(sid));
                }
                ParamKind::Array => {
                    let dims = self.declared_dims(frame, &p.ty)?;
                    let contents = if self.mode == Mode::Loop {
                        binding.arrays.get(&p.name).map(Vec::as_slice)
                    } else {
                        None
                    };
                    let sid = self.alloc_array(&p.name, dims.clone(), contents, p.ty.base());
                    frame.declare(&p.name, Bind::Array { sid, dims });
                }
                ParamKind::ScalarPointer => {
                    let sid = self.alloc_scalar(&p.name, None, p.ty.base());
                    frame.declare(&p.name, Bind::Pointer(sid));
                }
                ParamKind::ArrayOfPointers | ParamKind::OtherPointer => {
                    return Err(Stop::NotEnumerable(format!(
                        "parameter `{}` has an unsupported type",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn finish(r: R<()>) -> Result<(), Diagnostic> {
        match r {
            Ok(()) | Err(Stop::Done) => Ok(()),
            Err(Stop::Diag(d)) => Err(d),
            Err(Stop::NotEnumerable(why)) => Err(Diagnostic::error(
                Code::NonAffine,
                Loc::default(),
                format!("cannot enumerate accesses: {why}"),
            )),
        }
    }

    /// Summary mode: run `s` with its parameters taken from `binding`.
    pub fn run_summary(&mut self, s: &'a FunctionDef, binding: &ParamBinding) -> Result<(), Diagnostic> {
        self.site = s.loc;
        let mut frame = Frame::new(true, true);
        let r = self
            .bind_top(&mut frame, s, binding)
            .and_then(|_| self.block(&mut frame, &s.body).map(|_| ()));
        Self::finish(r)
    }

    /// Summary mode: run the call `callee(args)` from a context where
    /// `binding` provides scalar values and every array argument is a name.
    pub fn run_call(&mut self, callee: &str, args: &[Expr], binding: &ParamBinding) -> Result<(), Diagnostic> {
        let mut frame = Frame::new(false, true);
        for (n, v) in &binding.scalars {
            let sid = self.alloc_scalar(n, Some(wrap(*v)), ScalarType::Int);
            frame.declare(n, Bind::Scalar(sid));
        }
        let mut names = HashSet::new();
        for a in args {
            a.visit(&mut |e| {
                if let Expr::Var(n) = e {
                    names.insert(n.clone());
                }
            });
        }
        let mut names: Vec<String> = names.into_iter().collect();
        names.sort();
        for n in names {
            if frame.lookup(&n).is_none() {
                let sid = self.alloc(&n, vec![None], None, false);
                frame.declare(&n, Bind::Array { sid, dims: vec![None] });
            }
        }
        self.shared_limit = self.storages.len();
        self.call_depth = 1;
        // Scalars of the calling context are not part of the call's footprint.
        let scalar_ids: Vec<usize> = (0..self.shared_limit)
            .filter(|&i| self.storages[i].dims.is_empty())
            .collect();
        self.counters.extend(scalar_ids);
        let r = self.call(&mut frame, callee, args).map(|_| ());
        Self::finish(r)
    }

    /// Loop mode: run `f` under `binding`, enumerating the target loop.
    pub fn run_function(&mut self, f: &'a FunctionDef, binding: &ParamBinding) -> R<()> {
        self.site = f.loc;
        let mut frame = Frame::new(false, true);
        self.bind_top(&mut frame, f, binding)?;
        match self.block(&mut frame, &f.body) {
            Ok(_) | Err(Stop::Done) => Ok(()),
            Err(e) => Err(e),
        }
    }
}
