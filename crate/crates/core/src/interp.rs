//! Concrete, sequential interpreter for PENCIL functions.
//!
//! Values follow C semantics for the supported types: `int` is 32-bit with
//! wrapping arithmetic, `float` is single precision, `double` double
//! precision, and mixed arithmetic uses the usual conversions. The interpreter
//! can record a trace of every element read and written, tagged with the
//! iteration of a chosen loop; tests use it as an oracle for the static
//! analyses.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::frontend::ast::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i32),
    Float(f32),
    Double(f64),
}

impl Value {
    pub fn zero(ty: ScalarType) -> Self {
        match ty {
            ScalarType::Int => Value::Int(0),
            ScalarType::Float => Value::Float(0.0),
            ScalarType::Double => Value::Double(0.0),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Float(v) => v as f64,
            Value::Double(v) => v,
        }
    }

    pub fn as_i64(self) -> i64 {
        match self {
            Value::Int(v) => v as i64,
            Value::Float(v) => v as i64,
            Value::Double(v) => v as i64,
        }
    }

    pub fn truthy(self) -> bool {
        match self {
            Value::Int(v) => v != 0,
            Value::Float(v) => v != 0.0,
            Value::Double(v) => v != 0.0,
        }
    }

    pub fn convert(self, ty: ScalarType) -> Value {
        match ty {
            ScalarType::Int => Value::Int(match self {
                Value::Int(v) => v,
                Value::Float(v) => v as i32,
                Value::Double(v) => v as i32,
            }),
            ScalarType::Float => Value::Float(match self {
                Value::Int(v) => v as f32,
                Value::Float(v) => v,
                Value::Double(v) => v as f32,
            }),
            ScalarType::Double => Value::Double(self.as_f64()),
        }
    }

    fn rank(self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Double(_) => 2,
        }
    }

    fn ty(self) -> ScalarType {
        match self {
            Value::Int(_) => ScalarType::Int,
            Value::Float(_) => ScalarType::Float,
            Value::Double(_) => ScalarType::Double,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Double(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("`{0}` is not an array")]
    NotAnArray(String),
    #[error("index {index} out of bounds for `{array}` of length {len}")]
    OutOfBounds { array: String, index: i64, len: usize },
    #[error("integer division by zero")]
    DivByZero,
    #[error("step limit exceeded")]
    StepLimit,
    #[error("argument mismatch calling `{0}`")]
    Arity(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

/// Argument passed to [`Machine::call`].
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Scalar(Value),
    /// A host array registered with [`Machine::alloc_array`].
    Array(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceEvent {
    pub kind: TraceKind,
    /// Variable name at allocation (host array name or local scalar name).
    pub name: String,
    /// Flattened element index; empty for scalars.
    pub index: Vec<i64>,
    /// `(instance, iteration)` of the traced loop, if inside it.
    pub iteration: Option<(usize, i64)>,
    /// Whether the storage existed before the traced loop instance began.
    pub shared: bool,
}

#[derive(Debug, Clone)]
struct Slot {
    value: Value,
    name: String,
    index: Option<i64>,
}

#[derive(Debug, Clone)]
enum Binding {
    Scalar(usize),
    Pointer(usize),
    Array {
        base: usize,
        len: usize,
        dims: Vec<usize>,
        name: String,
    },
}

enum Flow {
    Normal,
    Return(Option<Value>),
}

struct Frame {
    scopes: Vec<HashMap<String, Binding>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn declare(&mut self, name: &str, b: Binding) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), b);
    }
}

#[derive(Default)]
struct Tracer {
    target: Option<*const ForLoop>,
    all: bool,
    events: Vec<TraceEvent>,
    current: Option<(usize, i64)>,
    instance_start: usize,
    instances: usize,
    counters: HashSet<usize>,
}

/// Executes functions of one translation unit over host-allocated arrays.
pub struct Machine<'a> {
    ast: &'a Ast,
    memory: Vec<Slot>,
    hosts: BTreeMap<String, (usize, usize)>,
    rand_seq: Vec<i32>,
    rand_pos: usize,
    rand_state: u64,
    steps: u64,
    pub max_steps: u64,
    tracer: Option<Tracer>,
}

impl<'a> Machine<'a> {
    pub fn new(ast: &'a Ast) -> Self {
        Self {
            ast,
            memory: Vec::new(),
            hosts: BTreeMap::new(),
            rand_seq: Vec::new(),
            rand_pos: 0,
            rand_state: 1,
            steps: 0,
            max_steps: 50_000_000,
            tracer: None,
        }
    }

    /// Makes `rand()` return the given values in order, cycling.
    pub fn with_rand_sequence(mut self, seq: Vec<i32>) -> Self {
        self.rand_seq = seq;
        self
    }

    /// Records every element access (outside any particular loop).
    pub fn trace_all(&mut self) {
        self.tracer = Some(Tracer {
            all: true,
            ..Tracer::default()
        });
    }

    /// Records accesses made while executing `target`, tagged by iteration.
    pub fn trace_loop(&mut self, target: &'a ForLoop) {
        self.tracer = Some(Tracer {
            target: Some(target as *const ForLoop),
            ..Tracer::default()
        });
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.tracer
            .as_mut()
            .map(|t| std::mem::take(&mut t.events))
            .unwrap_or_default()
    }

    pub fn alloc_array(&mut self, name: &str, data: Vec<Value>) {
        let base = self.memory.len();
        let len = data.len();
        self.memory.extend(data.into_iter().enumerate().map(|(i, value)| Slot {
            value,
            name: name.to_string(),
            index: Some(i as i64),
        }));
        self.hosts.insert(name.to_string(), (base, len));
    }

    pub fn array(&self, name: &str) -> Option<Vec<Value>> {
        let (base, len) = *self.hosts.get(name)?;
        Some(self.memory[base..base + len].iter().map(|s| s.value).collect())
    }

    pub fn call(&mut self, func: &str, args: Vec<Arg>) -> Result<Option<Value>, ExecError> {
        let f = self
            .ast
            .function(func)
            .ok_or_else(|| ExecError::UnknownFunction(func.into()))?;
        if f.params.len() != args.len() {
            return Err(ExecError::Arity(func.into()));
        }
        let mut bound = Vec::new();
        for (p, a) in f.params.iter().zip(args) {
            bound.push(match a {
                Arg::Scalar(v) => CallArg::Value(v),
                Arg::Array(name) => {
                    let (base, len) = *self.hosts.get(&name).ok_or(ExecError::Unbound(name.clone()))?;
                    let _ = p;
                    CallArg::Array { base, len, name }
                }
            });
        }
        self.invoke(f, bound)
    }

    fn step(&mut self) -> Result<(), ExecError> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(ExecError::StepLimit);
        }
        Ok(())
    }

    fn alloc_scalar(&mut self, name: &str, value: Value) -> usize {
        self.memory.push(Slot {
            value,
            name: name.to_string(),
            index: None,
        });
        self.memory.len() - 1
    }

    fn record(&mut self, kind: TraceKind, slot: usize) {
        let Some(t) = self.tracer.as_mut() else { return };
        if !t.all && t.current.is_none() {
            return;
        }
        if t.counters.contains(&slot) {
            return;
        }
        let s = &self.memory[slot];
        t.events.push(TraceEvent {
            kind,
            name: s.name.clone(),
            index: s.index.into_iter().collect(),
            iteration: t.current,
            shared: slot < t.instance_start || t.all,
        });
    }

    fn read(&mut self, slot: usize) -> Value {
        self.record(TraceKind::Read, slot);
        self.memory[slot].value
    }

    fn write(&mut self, slot: usize, v: Value) {
        self.record(TraceKind::Write, slot);
        let ty = self.memory[slot].value.ty();
        self.memory[slot].value = v.convert(ty);
    }

    fn invoke(&mut self, f: &'a FunctionDef, args: Vec<CallArg>) -> Result<Option<Value>, ExecError> {
        let mut frame = Frame {
            scopes: vec![HashMap::new()],
        };
        for (p, a) in f.params.iter().zip(args) {
            match (p.kind(), a) {
                (ParamKind::Scalar, CallArg::Value(v)) => {
                    let slot = self.alloc_scalar(&p.name, v.convert(p.ty.base()));
                    frame.declare(&p.name, Binding::Scalar(slot));
                }
                (ParamKind::ScalarPointer, CallArg::Slot(slot)) => frame.declare(&p.name, Binding::Pointer(slot)),
                (ParamKind::Array, CallArg::Array { base, len, name }) => {
                    let dims = self.param_dims(&frame, &p.ty)?;
                    frame.declare(&p.name, Binding::Array { base, len, dims, name });
                }
                _ => return Err(ExecError::Arity(f.name.clone())),
            }
        }
        let flow = self.block(&mut frame, &f.body)?;
        let ret = match flow {
            Flow::Return(v) => v,
            Flow::Normal => None,
        };
        Ok(match (f.ret, ret) {
            (ReturnType::Scalar(ty), Some(v)) => Some(v.convert(ty)),
            _ => None,
        })
    }

    /// Inner extents (all but the leading one) for row-major indexing.
    fn param_dims(&mut self, frame: &Frame, ty: &CType) -> Result<Vec<usize>, ExecError> {
        let dims = ty
            .array_dims()
            .ok_or(ExecError::Unsupported("non-scalar array".into()))?;
        let mut out = Vec::new();
        for d in dims.iter().skip(1) {
            let e = d
                .extent
                .as_ref()
                .ok_or(ExecError::Unsupported("inner dimension without extent".into()))?;
            let v = self.eval_pure(frame, e)?;
            out.push(v.as_i64().max(0) as usize);
        }
        Ok(out)
    }

    /// Evaluates without tracing (used for declared extents).
    fn eval_pure(&mut self, frame: &Frame, e: &Expr) -> Result<Value, ExecError> {
        let saved = self.tracer.take();
        let mut f = Frame {
            scopes: frame.scopes.clone(),
        };
        let r = self.eval(&mut f, e);
        self.tracer = saved;
        r
    }

    fn block(&mut self, frame: &mut Frame, body: &'a [Stmt]) -> Result<Flow, ExecError> {
        frame.scopes.push(HashMap::new());
        let mut flow = Flow::Normal;
        for s in body {
            flow = self.stmt(frame, s)?;
            if matches!(flow, Flow::Return(_)) {
                break;
            }
        }
        frame.scopes.pop();
        Ok(flow)
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'a Stmt) -> Result<Flow, ExecError> {
        self.step()?;
        match &s.kind {
            StmtKind::Assign { target, op, value } => {
                let rhs = self.eval(frame, value)?;
                let slot = self.lvalue_slot(frame, target)?;
                let v = match op.binop() {
                    None => rhs,
                    Some(b) => {
                        let cur = self.read(slot);
                        arith(b, cur, rhs)?
                    }
                };
                self.write(slot, v);
            }
            StmtKind::Decl(d) => match &d.ty {
                CType::Scalar { ty, .. } => {
                    let init = match &d.init {
                        Some(e) => self.eval(frame, e)?.convert(*ty),
                        None => Value::zero(*ty),
                    };
                    let slot = self.alloc_scalar(&d.name, init);
                    frame.declare(&d.name, Binding::Scalar(slot));
                }
                CType::Array { .. } => {
                    let dims =
                        d.ty.array_dims()
                            .ok_or(ExecError::Unsupported("array of pointers".into()))?;
                    let mut extents = Vec::new();
                    for dim in dims {
                        let e = dim
                            .extent
                            .as_ref()
                            .ok_or(ExecError::Unsupported("local array without extent".into()))?;
                        extents.push(self.eval_pure(frame, e)?.as_i64().max(0) as usize);
                    }
                    let len: usize = extents.iter().product();
                    let base = self.memory.len();
                    let zero = Value::zero(d.ty.base());
                    for i in 0..len {
                        self.memory.push(Slot {
                            value: zero,
                            name: d.name.clone(),
                            index: Some(i as i64),
                        });
                    }
                    frame.declare(
                        &d.name,
                        Binding::Array {
                            base,
                            len,
                            dims: extents[1..].to_vec(),
                            name: d.name.clone(),
                        },
                    );
                }
                CType::Pointer { .. } => return Err(ExecError::Unsupported("local pointer".into())),
            },
            StmtKind::For(l) => return self.for_loop(frame, l),
            StmtKind::While(w) => loop {
                self.step()?;
                if !self.eval(frame, &w.cond)?.truthy() {
                    break;
                }
                if let Flow::Return(v) = self.stmt(frame, &w.body)? {
                    return Ok(Flow::Return(v));
                }
            },
            StmtKind::If { cond, then, otherwise } => {
                if self.eval(frame, cond)?.truthy() {
                    return self.stmt(frame, then);
                } else if let Some(o) = otherwise {
                    return self.stmt(frame, o);
                }
            }
            StmtKind::Call { callee, args } => {
                self.call_expr(frame, callee, args)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => Some(self.eval(frame, e)?),
                    None => None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Block(b) => return self.block(frame, b),
            StmtKind::Labeled { stmt, .. } => return self.stmt(frame, stmt),
            StmtKind::Goto(_) => return Err(ExecError::Unsupported("goto".into())),
            StmtKind::SummaryAccess { .. } => {}
        }
        Ok(Flow::Normal)
    }

    fn for_loop(&mut self, frame: &mut Frame, l: &'a ForLoop) -> Result<Flow, ExecError> {
        frame.scopes.push(HashMap::new());
        let lower = self.eval(frame, &l.lower)?;
        let slot = match (l.declares, frame.lookup(&l.var)) {
            (Some(ty), _) => {
                let slot = self.alloc_scalar(&l.var, lower.convert(ty));
                frame.declare(&l.var, Binding::Scalar(slot));
                slot
            }
            (None, Some(Binding::Scalar(slot))) => {
                let slot = *slot;
                let ty = self.memory[slot].value.ty();
                self.memory[slot].value = lower.convert(ty);
                slot
            }
            _ => return Err(ExecError::Unbound(l.var.clone())),
        };
        let is_target = self
            .tracer
            .as_ref()
            .is_some_and(|t| t.target == Some(l as *const ForLoop));
        let outer_counter = self.tracer.as_mut().map(|t| t.counters.insert(slot));
        let saved = self.tracer.as_ref().map(|t| (t.current, t.instance_start));
        let instance = if is_target {
            let t = self.tracer.as_mut().unwrap();
            t.instance_start = self.memory.len();
            t.instances += 1;
            t.instances - 1
        } else {
            0
        };
        let mut result = Flow::Normal;
        loop {
            self.step()?;
            let upper = if is_target {
                self.eval_untraced(frame, &l.upper_exclusive())?
            } else {
                self.eval(frame, &l.upper_exclusive())?
            };
            let i = self.memory[slot].value;
            if !(i.as_i64() < upper.as_i64()) {
                break;
            }
            if is_target {
                self.tracer.as_mut().unwrap().current = Some((instance, i.as_i64()));
            }
            if let Flow::Return(v) = self.stmt(frame, &l.body)? {
                result = Flow::Return(v);
                break;
            }
            let next = arith(BinOp::Add, self.memory[slot].value, Value::Int(1))?;
            self.memory[slot].value = next;
        }
        if let (Some(t), Some((cur, start))) = (self.tracer.as_mut(), saved) {
            if is_target {
                t.current = cur;
                t.instance_start = start;
            }
            if outer_counter == Some(true) {
                t.counters.remove(&slot);
            }
        }
        frame.scopes.pop();
        Ok(result)
    }

    fn eval_untraced(&mut self, frame: &mut Frame, e: &Expr) -> Result<Value, ExecError> {
        let saved = self.tracer.as_mut().map(|t| t.current.take());
        let all = self.tracer.as_mut().map(|t| std::mem::replace(&mut t.all, false));
        let r = self.eval(frame, e);
        if let Some(t) = self.tracer.as_mut() {
            t.current = saved.flatten();
            t.all = all.unwrap_or(false);
        }
        r
    }

    fn lvalue_slot(&mut self, frame: &mut Frame, lv: &LValue) -> Result<usize, ExecError> {
        match lv {
            LValue::Var(n) => match frame.lookup(n) {
                Some(Binding::Scalar(s)) => Ok(*s),
                Some(_) => Err(ExecError::Unsupported(format!("assignment to non-scalar `{n}`"))),
                None => Err(ExecError::Unbound(n.clone())),
            },
            LValue::Deref(n) => match frame.lookup(n) {
                Some(Binding::Pointer(s)) => Ok(*s),
                _ => Err(ExecError::Unbound(n.clone())),
            },
            LValue::Index { array, indices } => self.element_slot(frame, array, indices),
        }
    }

    fn element_slot(&mut self, frame: &mut Frame, array: &str, indices: &[Expr]) -> Result<usize, ExecError> {
        let mut idx = Vec::with_capacity(indices.len());
        for e in indices {
            idx.push(self.eval(frame, e)?.as_i64());
        }
        let Some(Binding::Array { base, len, dims, name }) = frame.lookup(array).cloned() else {
            return match frame.lookup(array) {
                None => Err(ExecError::Unbound(array.into())),
                Some(_) => Err(ExecError::NotAnArray(array.into())),
            };
        };
        if idx.len() != dims.len() + 1 {
            return Err(ExecError::Unsupported(format!(
                "`{array}` indexed with {} subscripts",
                idx.len()
            )));
        }
        let mut flat = idx[0];
        for (k, d) in dims.iter().enumerate() {
            let i = idx[k + 1];
            if i < 0 || i >= *d as i64 {
                return Err(ExecError::OutOfBounds {
                    array: name,
                    index: i,
                    len: *d,
                });
            }
            flat = flat * *d as i64 + i;
        }
        if flat < 0 || flat >= len as i64 {
            return Err(ExecError::OutOfBounds {
                array: name,
                index: flat,
                len,
            });
        }
        Ok(base + flat as usize)
    }

    fn eval(&mut self, frame: &mut Frame, e: &Expr) -> Result<Value, ExecError> {
        match e {
            Expr::Int(v) => Ok(Value::Int(*v as i32)),
            Expr::Float(s) => Ok(parse_float(s)),
            Expr::Var(n) => match frame.lookup(n) {
                Some(Binding::Scalar(s)) => {
                    let s = *s;
                    Ok(self.read(s))
                }
                Some(_) => Err(ExecError::Unsupported(format!("`{n}` used as a value"))),
                None => Err(ExecError::Unbound(n.clone())),
            },
            Expr::Deref(n) => match frame.lookup(n) {
                Some(Binding::Pointer(s)) => {
                    let s = *s;
                    Ok(self.read(s))
                }
                _ => Err(ExecError::Unbound(n.clone())),
            },
            Expr::Index { array, indices } => {
                let slot = self.element_slot(frame, array, indices)?;
                Ok(self.read(slot))
            }
            Expr::Call { callee, args } => self
                .call_expr(frame, callee, args)?
                .ok_or_else(|| ExecError::Unsupported(format!("`{callee}` returns no value"))),
            Expr::Unary { op, operand } => {
                let v = self.eval(frame, operand)?;
                Ok(match op {
                    UnOp::Not => Value::Int(!v.truthy() as i32),
                    UnOp::Neg => match v {
                        Value::Int(x) => Value::Int(x.wrapping_neg()),
                        Value::Float(x) => Value::Float(-x),
                        Value::Double(x) => Value::Double(-x),
                    },
                })
            }
            Expr::Binary {
                op: BinOp::And,
                lhs,
                rhs,
            } => {
                let l = self.eval(frame, lhs)?.truthy();
                Ok(Value::Int((l && self.eval(frame, rhs)?.truthy()) as i32))
            }
            Expr::Binary {
                op: BinOp::Or,
                lhs,
                rhs,
            } => {
                let l = self.eval(frame, lhs)?.truthy();
                Ok(Value::Int((l || self.eval(frame, rhs)?.truthy()) as i32))
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(frame, lhs)?;
                let r = self.eval(frame, rhs)?;
                arith(*op, l, r)
            }
            Expr::AddrOf(_) => Err(ExecError::Unsupported("address-of".into())),
        }
    }

    fn call_expr(&mut self, frame: &mut Frame, callee: &str, args: &[Expr]) -> Result<Option<Value>, ExecError> {
        if let Some(v) = self.builtin(frame, callee, args)? {
            return Ok(Some(v));
        }
        let f = self
            .ast
            .function(callee)
            .ok_or_else(|| ExecError::UnknownFunction(callee.into()))?;
        if f.params.len() != args.len() {
            return Err(ExecError::Arity(callee.into()));
        }
        let mut bound = Vec::new();
        for (p, a) in f.params.iter().zip(args) {
            bound.push(match p.kind() {
                ParamKind::Array => {
                    let Expr::Var(n) = a else {
                        return Err(ExecError::Unsupported(format!(
                            "array argument to `{callee}` must be a name"
                        )));
                    };
                    match frame.lookup(n) {
                        Some(Binding::Array { base, len, name, .. }) => CallArg::Array {
                            base: *base,
                            len: *len,
                            name: name.clone(),
                        },
                        _ => return Err(ExecError::NotAnArray(n.clone())),
                    }
                }
                ParamKind::ScalarPointer => match a {
                    Expr::Var(n) => match frame.lookup(n) {
                        Some(Binding::Pointer(s)) => CallArg::Slot(*s),
                        _ => return Err(ExecError::Unsupported(format!("pointer argument `{n}`"))),
                    },
                    _ => return Err(ExecError::Unsupported("pointer argument".into())),
                },
                _ => CallArg::Value(self.eval(frame, a)?),
            });
        }
        self.invoke(f, bound)
    }

    fn builtin(&mut self, frame: &mut Frame, callee: &str, args: &[Expr]) -> Result<Option<Value>, ExecError> {
        let mut vals = Vec::new();
        let arity = match callee {
            "rand" => 0,
            "exp" | "sqrt" | "fabs" => 1,
            "fmax" | "fmin" => 2,
            _ => return Ok(None),
        };
        if args.len() != arity {
            return Err(ExecError::Arity(callee.into()));
        }
        for a in args {
            vals.push(self.eval(frame, a)?.as_f64());
        }
        Ok(Some(match callee {
            "rand" => Value::Int(self.next_rand()),
            "exp" => Value::Double(vals[0].exp()),
            "sqrt" => Value::Double(vals[0].sqrt()),
            "fabs" => Value::Double(vals[0].abs()),
            "fmax" => Value::Double(vals[0].max(vals[1])),
            "fmin" => Value::Double(vals[0].min(vals[1])),
            _ => unreachable!(),
        }))
    }

    fn next_rand(&mut self) -> i32 {
        if !self.rand_seq.is_empty() {
            let v = self.rand_seq[self.rand_pos % self.rand_seq.len()];
            self.rand_pos += 1;
            return v;
        }
        self.rand_state = self
            .rand_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.rand_state >> 33) & 0x7fff_ffff) as i32
    }
}

enum CallArg {
    Value(Value),
    Slot(usize),
    Array { base: usize, len: usize, name: String },
}

pub fn parse_float(s: &str) -> Value {
    match s.strip_suffix(['f', 'F']) {
        Some(t) => Value::Float(t.parse().unwrap_or(0.0)),
        None => Value::Double(s.parse().unwrap_or(0.0)),
    }
}

/// Binary arithmetic under the usual arithmetic conversions.
pub fn arith(op: BinOp, l: Value, r: Value) -> Result<Value, ExecError> {
    use BinOp::*;
    let rank = l.rank().max(r.rank());
    if let (Value::Int(a), Value::Int(b)) = (l, r) {
        return Ok(Value::Int(match op {
            Add => a.wrapping_add(b),
            Sub => a.wrapping_sub(b),
            Mul => a.wrapping_mul(b),
            Div | Rem if b == 0 => return Err(ExecError::DivByZero),
            Div => a.wrapping_div(b),
            Rem => a.wrapping_rem(b),
            Lt => (a < b) as i32,
            Le => (a <= b) as i32,
            Gt => (a > b) as i32,
            Ge => (a >= b) as i32,
            Eq => (a == b) as i32,
            Ne => (a != b) as i32,
            And => (a != 0 && b != 0) as i32,
            Or => (a != 0 || b != 0) as i32,
        }));
    }
    macro_rules! float_op {
        ($a:expr, $b:expr, $wrap:expr) => {
            match op {
                Add => $wrap($a + $b),
                Sub => $wrap($a - $b),
                Mul => $wrap($a * $b),
                Div => $wrap($a / $b),
                Rem => return Err(ExecError::Unsupported("% on floating point".into())),
                Lt => Value::Int(($a < $b) as i32),
                Le => Value::Int(($a <= $b) as i32),
                Gt => Value::Int(($a > $b) as i32),
                Ge => Value::Int(($a >= $b) as i32),
                Eq => Value::Int(($a == $b) as i32),
                Ne => Value::Int(($a != $b) as i32),
                And => Value::Int(($a != 0.0 && $b != 0.0) as i32),
                Or => Value::Int(($a != 0.0 || $b != 0.0) as i32),
            }
        };
    }
    Ok(if rank == 1 {
        let (a, b) = (l.convert(ScalarType::Float), r.convert(ScalarType::Float));
        let (Value::Float(a), Value::Float(b)) = (a, b) else {
            unreachable!()
        };
        float_op!(a, b, Value::Float)
    } else {
        let (a, b) = (l.as_f64(), r.as_f64());
        float_op!(a, b, Value::Double)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn ints(v: &[i32]) -> Vec<Value> {
        v.iter().map(|x| Value::Int(*x)).collect()
    }

    #[test]
    fn runs_loops_and_calls() {
        let ast = parse_source(
            "t",
            "void inc(int n, int A[restrict const static n], int k) { A[k] += 1; }\n\
             void f(int n, int A[restrict const static n]) { int i; for (i = 0; i < n; i++) { A[i] = i * i; inc(n, A, i); } }",
        )
        .unwrap();
        let mut m = Machine::new(&ast);
        m.alloc_array("A", ints(&[0; 4]));
        m.call("f", vec![Arg::Scalar(Value::Int(4)), Arg::Array("A".into())])
            .unwrap();
        assert_eq!(m.array("A").unwrap(), ints(&[1, 2, 5, 10]));
    }

    #[test]
    fn c_integer_semantics() {
        assert_eq!(
            arith(BinOp::Div, Value::Int(-7), Value::Int(2)).unwrap(),
            Value::Int(-3)
        );
        assert_eq!(
            arith(BinOp::Rem, Value::Int(-7), Value::Int(2)).unwrap(),
            Value::Int(-1)
        );
        assert_eq!(
            arith(BinOp::Add, Value::Int(i32::MAX), Value::Int(1)).unwrap(),
            Value::Int(i32::MIN)
        );
        assert_eq!(
            arith(BinOp::Div, Value::Int(1), Value::Int(0)),
            Err(ExecError::DivByZero)
        );
        assert_eq!(
            arith(BinOp::Add, Value::Int(1), Value::Double(0.5)).unwrap(),
            Value::Double(1.5)
        );
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let ast = parse_source("t", "void f(int n, int A[restrict const static n]) { A[n] = 1; }").unwrap();
        let mut m = Machine::new(&ast);
        m.alloc_array("A", ints(&[0; 2]));
        let e = m
            .call("f", vec![Arg::Scalar(Value::Int(2)), Arg::Array("A".into())])
            .unwrap_err();
        assert!(matches!(e, ExecError::OutOfBounds { .. }));
    }

    #[test]
    fn returns_and_math() {
        let ast = parse_source(
            "t",
            "double f(void) { double x; int i; x = exp(0);\n#pragma pencil reduction (+:x)\nfor (i=1; i<=3; i++) x += exp(i); return x; }",
        )
        .unwrap();
        let mut m = Machine::new(&ast);
        let v = m.call("f", vec![]).unwrap().unwrap();
        let expect = (0..=3).map(|i| (i as f64).exp()).fold(0.0, |a, b| a + b);
        assert_eq!(v, Value::Double(expect));
    }

    #[test]
    fn loop_trace_tags_iterations() {
        let ast = parse_source(
            "t",
            "void f(int n, int A[restrict const static n], int t[restrict const static n]) { int i; for (i = 0; i < n; i++) A[t[i]] += 1; }",
        )
        .unwrap();
        let StmtKind::For(l) = &ast.functions[0].body[1].kind else {
            panic!()
        };
        let mut m = Machine::new(&ast);
        m.alloc_array("A", ints(&[0; 3]));
        m.alloc_array("t", ints(&[0, 0, 1]));
        m.trace_loop(l);
        m.call(
            "f",
            vec![
                Arg::Scalar(Value::Int(3)),
                Arg::Array("A".into()),
                Arg::Array("t".into()),
            ],
        )
        .unwrap();
        let trace = m.take_trace();
        // Per iteration: read t[i], read A[t[i]], write A[t[i]].
        assert_eq!(trace.len(), 9);
        assert!(trace.iter().all(|e| e.iteration.is_some() && e.shared));
        assert_eq!(m.array("A").unwrap(), ints(&[2, 1, 0]));
    }
}
