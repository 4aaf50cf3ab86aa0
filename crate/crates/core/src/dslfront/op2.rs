//! OP2 unstructured-mesh loops.
//!
//! A model declares sets, maps between sets, data attached to sets and a
//! sequence of parallel loops. Each `par_loop` becomes a PENCIL `for` loop
//! over its iteration set that calls the kernel with an (array, index) pair
//! per argument; the kernel is written pointer-free, e.g.
//! `void kernel(double edge[], int ie, double cell0[], int i0, ...)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::diag::{Code, Diagnostic, Loc};
use crate::frontend::*;
use crate::interp::{Arg, Machine, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum Op2Access {
    #[serde(rename = "OP_READ")]
    Read,
    #[serde(rename = "OP_WRITE")]
    Write,
    #[serde(rename = "OP_RW")]
    Rw,
    #[serde(rename = "OP_INC")]
    Inc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Set {
    pub name: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Map {
    pub name: String,
    pub from: String,
    pub to: String,
    pub arity: usize,
    /// `table[arity * e + k]` is the `k`-th target of element `e`.
    pub table: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Dat {
    pub name: String,
    pub set: String,
    pub dim: usize,
    pub ty: ScalarType,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op2Index {
    /// `OP_ID`: the loop index addresses the dat directly.
    Identity,
    Offset(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Arg {
    pub dat: String,
    /// `None` for `OP_ID`.
    pub map: Option<String>,
    pub index: Op2Index,
    pub dim: usize,
    pub access: Op2Access,
}

impl Op2Arg {
    pub fn is_indirect(&self) -> bool {
        self.map.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Loop {
    pub kernel: String,
    pub set: String,
    pub args: Vec<Op2Arg>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op2Model {
    pub sets: Vec<Op2Set>,
    pub maps: Vec<Op2Map>,
    pub dats: Vec<Op2Dat>,
    /// Kernel name to PENCIL source defining it.
    pub kernels: BTreeMap<String, String>,
    pub par_loops: Vec<Op2Loop>,
}

/// Final contents of every dat, by name.
pub type DatValues = BTreeMap<String, Vec<Value>>;

impl Op2Model {
    pub fn set(&self, name: &str) -> Option<&Op2Set> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn map(&self, name: &str) -> Option<&Op2Map> {
        self.maps.iter().find(|m| m.name == name)
    }

    pub fn dat(&self, name: &str) -> Option<&Op2Dat> {
        self.dats.iter().find(|d| d.name == name)
    }

    fn dat_len(&self, name: &str) -> usize {
        self.dat(name).map_or(0, |d| d.data.len())
    }

    /// Reverses the element order of `set`, renumbering every map and dat
    /// defined on it. Loops over the set then visit elements in reverse.
    pub fn reverse_set(&mut self, set: &str) {
        for m in self.maps.iter_mut().filter(|m| m.from == set) {
            let rows: Vec<Vec<i64>> = m.table.chunks(m.arity.max(1)).map(<[i64]>::to_vec).rev().collect();
            m.table = rows.concat();
        }
        for d in self.dats.iter_mut().filter(|d| d.set == set) {
            let rows: Vec<Vec<f64>> = d.data.chunks(d.dim.max(1)).map(<[f64]>::to_vec).rev().collect();
            d.data = rows.concat();
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    sets: Vec<RawSet>,
    #[serde(default)]
    maps: Vec<RawMap>,
    #[serde(default)]
    dats: Vec<RawDat>,
    #[serde(default)]
    kernels: BTreeMap<String, String>,
    #[serde(default)]
    par_loops: Vec<RawLoop>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    name: String,
    size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    name: String,
    from: String,
    to: String,
    arity: usize,
    table: Vec<i64>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawType {
    Int,
    Float,
    #[default]
    Double,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDat {
    name: String,
    set: String,
    #[serde(default = "one")]
    dim: usize,
    #[serde(rename = "type", default)]
    ty: RawType,
    data: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawIndex {
    Int(i64),
    Name(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArg {
    dat: String,
    index: RawIndex,
    map: String,
    #[serde(default = "one")]
    dim: usize,
    access: Op2Access,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoop {
    kernel: String,
    set: String,
    args: Vec<RawArg>,
}

fn one() -> usize {
    1
}

const IDENTITY: &str = "OP_ID";

fn err(code: Code, msg: String) -> Diagnostic {
    Diagnostic::error(code, Loc::default(), msg)
}

/// Parses and validates a model document (see `docs/op2-input.md`).
pub fn load_op2_model(document: &str) -> Result<Op2Model, Vec<Diagnostic>> {
    let raw: RawModel = serde_json::from_str(document).map_err(|e| {
        vec![Diagnostic::error(
            Code::Op2Shape,
            Loc::new(e.line() as u32, e.column() as u32),
            format!("malformed OP2 model: {e}"),
        )]
    })?;
    let mut diags = Vec::new();
    let mut names = BTreeSet::new();
    for n in raw
        .sets
        .iter()
        .map(|s| &s.name)
        .chain(raw.maps.iter().map(|m| &m.name))
        .chain(raw.dats.iter().map(|d| &d.name))
    {
        if !names.insert(n.clone()) || n == IDENTITY {
            diags.push(err(
                Code::Op2Shape,
                format!("name `{n}` is declared more than once or reserved"),
            ));
        }
    }
    let sets: Vec<Op2Set> = raw
        .sets
        .into_iter()
        .map(|s| Op2Set {
            name: s.name,
            size: s.size,
        })
        .collect();
    let size_of = |name: &str| sets.iter().find(|s| s.name == name).map(|s| s.size);

    let mut maps = Vec::new();
    for m in raw.maps {
        let (Some(from), Some(to)) = (size_of(&m.from), size_of(&m.to)) else {
            diags.push(err(
                Code::Op2Shape,
                format!("map `{}` connects undeclared sets", m.name),
            ));
            continue;
        };
        if m.arity == 0 || m.table.len() != from * m.arity {
            diags.push(err(
                Code::Op2Shape,
                format!(
                    "map `{}` has {} entries; expected size({}) x arity = {}",
                    m.name,
                    m.table.len(),
                    m.from,
                    from * m.arity
                ),
            ));
        }
        for (k, &e) in m.table.iter().enumerate() {
            if e < 0 || e as usize >= to {
                diags.push(err(
                    Code::Op2Range,
                    format!("map `{}` entry {k} is {e}, outside set `{}` of size {to}", m.name, m.to),
                ));
            }
        }
        maps.push(Op2Map {
            name: m.name,
            from: m.from,
            to: m.to,
            arity: m.arity,
            table: m.table,
        });
    }

    let mut dats = Vec::new();
    for d in raw.dats {
        let Some(size) = size_of(&d.set) else {
            diags.push(err(
                Code::Op2Shape,
                format!("dat `{}` is attached to undeclared set `{}`", d.name, d.set),
            ));
            continue;
        };
        if d.dim == 0 || d.data.len() != size * d.dim {
            diags.push(err(
                Code::Op2Shape,
                format!(
                    "dat `{}` has {} values; expected size({}) x dim = {}",
                    d.name,
                    d.data.len(),
                    d.set,
                    size * d.dim
                ),
            ));
        }
        let ty = match d.ty {
            RawType::Int => ScalarType::Int,
            RawType::Float => ScalarType::Float,
            RawType::Double => ScalarType::Double,
        };
        if ty == ScalarType::Int && d.data.iter().any(|v| v.fract() != 0.0 || v.abs() > i32::MAX as f64) {
            diags.push(err(
                Code::Op2Shape,
                format!("dat `{}` of type int has non-integer data", d.name),
            ));
        }
        dats.push(Op2Dat {
            name: d.name,
            set: d.set,
            dim: d.dim,
            ty,
            data: d.data,
        });
    }

    let mut par_loops = Vec::new();
    for (k, l) in raw.par_loops.into_iter().enumerate() {
        if size_of(&l.set).is_none() {
            diags.push(err(
                Code::Op2Shape,
                format!("par_loop {k} iterates over undeclared set `{}`", l.set),
            ));
        }
        let mut args = Vec::new();
        for (j, a) in l.args.into_iter().enumerate() {
            let at = format!("argument {j} of par_loop {k}");
            let Some(dat) = dats.iter().find(|d| d.name == a.dat) else {
                diags.push(err(Code::Op2Shape, format!("{at} names undeclared dat `{}`", a.dat)));
                continue;
            };
            if a.dim != dat.dim {
                diags.push(err(
                    Code::Op2Shape,
                    format!("{at} passes dim {} of dat `{}` with dim {}", a.dim, dat.name, dat.dim),
                ));
            }
            let (map, index) = if a.map == IDENTITY {
                if !matches!(a.index, RawIndex::Int(-1)) && !matches!(&a.index, RawIndex::Name(n) if n == IDENTITY) {
                    diags.push(err(
                        Code::Op2Range,
                        format!("{at} uses OP_ID, so its index must be -1 or \"OP_ID\""),
                    ));
                }
                if dat.set != l.set {
                    diags.push(err(
                        Code::Op2Shape,
                        format!(
                            "{at} addresses dat `{}` on set `{}` directly from a loop over `{}`",
                            dat.name, dat.set, l.set
                        ),
                    ));
                }
                (None, Op2Index::Identity)
            } else {
                let Some(m) = maps.iter().find(|m| m.name == a.map) else {
                    diags.push(err(Code::Op2Shape, format!("{at} names undeclared map `{}`", a.map)));
                    continue;
                };
                if m.from != l.set || m.to != dat.set {
                    diags.push(err(
                        Code::Op2Shape,
                        format!("{at}: map `{}` goes from `{}` to `{}`, but the loop is over `{}` and the dat lives on `{}`", m.name, m.from, m.to, l.set, dat.set),
                    ));
                }
                let off = match a.index {
                    RawIndex::Int(i) if i >= 0 && (i as usize) < m.arity => i as usize,
                    _ => {
                        diags.push(err(
                            Code::Op2Range,
                            format!("{at}: index must lie in 0..{} for map `{}`", m.arity, m.name),
                        ));
                        0
                    }
                };
                (Some(m.name.clone()), Op2Index::Offset(off))
            };
            args.push(Op2Arg {
                dat: a.dat,
                map,
                index,
                dim: a.dim,
                access: a.access,
            });
        }
        par_loops.push(Op2Loop {
            kernel: l.kernel,
            set: l.set,
            args,
        });
    }
    if diags.is_empty() {
        Ok(Op2Model {
            sets,
            maps,
            dats,
            kernels: raw.kernels,
            par_loops,
        })
    } else {
        Err(diags)
    }
}

/// Parses the kernel of `l` and checks it against the argument list.
fn kernel_def(model: &Op2Model, l: &Op2Loop) -> Result<FunctionDef, Diagnostic> {
    let kerr = |msg: String| err(Code::Op2Kernel, msg);
    let src = model
        .kernels
        .get(&l.kernel)
        .ok_or_else(|| kerr(format!("kernel `{}` is not defined", l.kernel)))?;
    let ast =
        parse_source(&l.kernel, src).map_err(|d| kerr(format!("kernel `{}` does not parse: {}", l.kernel, d[0])))?;
    let [f] = <[FunctionDef; 1]>::try_from(ast.functions).map_err(|_| {
        kerr(format!(
            "source of kernel `{}` must define exactly one function",
            l.kernel
        ))
    })?;
    if f.name != l.kernel {
        return Err(kerr(format!("source of kernel `{}` defines `{}`", l.kernel, f.name)));
    }
    if f.ret != ReturnType::Void || f.access.is_some() {
        return Err(kerr(format!(
            "kernel `{}` must return void and carry no ACCESS annotation",
            l.kernel
        )));
    }
    if f.params.len() != 2 * l.args.len() {
        return Err(kerr(format!(
            "kernel `{}` takes {} parameters; {} arguments need an (array, index) pair each",
            l.kernel,
            f.params.len(),
            l.args.len()
        )));
    }
    for (k, a) in l.args.iter().enumerate() {
        let (arr, idx) = (&f.params[2 * k], &f.params[2 * k + 1]);
        let ty = model.dat(&a.dat).map(|d| d.ty);
        let one_dim = arr.ty.array_dims().is_some_and(|d| d.len() == 1);
        if !one_dim || Some(arr.ty.base()) != ty {
            return Err(kerr(format!(
                "parameter `{}` of kernel `{}` must be a one-dimensional {} array for dat `{}`",
                arr.name,
                l.kernel,
                ty.map_or("?", ScalarType::as_str),
                a.dat
            )));
        }
        if idx.ty != CType::scalar(ScalarType::Int) {
            return Err(kerr(format!(
                "parameter `{}` of kernel `{}` must be an int index",
                idx.name, l.kernel
            )));
        }
    }
    let mut calls_out = None;
    for s in &f.body {
        s.walk(&mut |s| {
            let mut note = |c: &str| {
                if !is_whitelisted_external(c) {
                    calls_out.get_or_insert(c.to_string());
                }
            };
            if let StmtKind::Call { callee, .. } = &s.kind {
                note(callee);
            }
            for_each_expr(s, &mut |e: &Expr| {
                e.visit(&mut |e| {
                    if let Expr::Call { callee, .. } = e {
                        note(callee);
                    }
                })
            });
        });
    }
    if let Some(c) = calls_out {
        return Err(kerr(format!(
            "kernel `{}` calls `{c}`; kernels may only call math externals",
            l.kernel
        )));
    }
    Ok(f)
}

fn for_each_expr(s: &Stmt, f: &mut impl FnMut(&Expr)) {
    match &s.kind {
        StmtKind::Assign { target, value, .. } => {
            f(&target.to_expr());
            f(value);
        }
        StmtKind::Decl(d) => d.init.iter().for_each(&mut *f),
        StmtKind::For(l) => {
            f(&l.lower);
            f(&l.bound);
        }
        StmtKind::While(w) => f(&w.cond),
        StmtKind::If { cond, .. } => f(cond),
        StmtKind::Call { args, .. } => args.iter().for_each(&mut *f),
        StmtKind::Return(Some(e)) => f(e),
        StmtKind::SummaryAccess { target, .. } => f(&target.to_expr()),
        _ => {}
    }
}

/// Rejects a dat that one loop both increments and writes or updates
/// through other arguments.
fn check_conflicts(l: &Op2Loop, k: usize) -> Result<(), Diagnostic> {
    for inc in l.args.iter().filter(|a| a.access == Op2Access::Inc) {
        if let Some(other) = l
            .args
            .iter()
            .find(|a| a.dat == inc.dat && matches!(a.access, Op2Access::Rw | Op2Access::Write))
        {
            return Err(err(
                Code::Op2Conflict,
                format!(
                    "par_loop {k} passes dat `{}` both as OP_INC and as {:?}; mixing increments with other updates is not supported",
                    inc.dat, other.access
                ),
            ));
        }
    }
    Ok(())
}

fn sized_array(ty: ScalarType, len: usize) -> CType {
    CType::qualified_array(ty, vec![Expr::Int(len as i64)])
}

/// Index expression for argument `a`: `i`, or `map[arity * i + offset]`,
/// scaled by the dat dimension.
fn index_expr(model: &Op2Model, a: &Op2Arg, var: &str) -> Expr {
    let i = Expr::var(var);
    let base = match (&a.map, a.index) {
        (Some(m), Op2Index::Offset(off)) => {
            let arity = model.map(m).map_or(1, |m| m.arity) as i64;
            let mut pos = if arity == 1 {
                i
            } else {
                Expr::binary(BinOp::Mul, Expr::Int(arity), i)
            };
            if off > 0 {
                pos = Expr::binary(BinOp::Add, pos, Expr::Int(off as i64));
            }
            Expr::index(m.clone(), vec![pos])
        }
        _ => i,
    };
    if a.dim > 1 {
        Expr::binary(BinOp::Mul, base, Expr::Int(a.dim as i64))
    } else {
        base
    }
}

/// Lowered loop `k`: the specialized kernel followed by the loop function.
struct LoweredLoop {
    kernel: FunctionDef,
    function: FunctionDef,
}

fn lower_loop(model: &Op2Model, k: usize, kernel_name: &str) -> Result<LoweredLoop, Diagnostic> {
    let l = model
        .par_loops
        .get(k)
        .ok_or_else(|| err(Code::Op2Shape, format!("there is no par_loop {k}")))?;
    let mut kernel = kernel_def(model, l)?;
    check_conflicts(l, k)?;
    kernel.name = kernel_name.to_string();
    for (p, a) in kernel.params.chunks_mut(2).zip(&l.args) {
        p[0].ty = sized_array(p[0].ty.base(), model.dat_len(&a.dat));
    }

    let mut params: Vec<Param> = Vec::new();
    let mut seen = BTreeSet::new();
    for a in &l.args {
        if seen.insert(a.dat.clone()) {
            let d = model.dat(&a.dat).expect("validated");
            params.push(Param {
                name: d.name.clone(),
                ty: sized_array(d.ty, d.data.len()),
                loc: Loc::default(),
            });
        }
    }
    for m in l.args.iter().filter_map(|a| a.map.as_deref()) {
        if seen.insert(m.to_string()) {
            let m = model.map(m).expect("validated");
            params.push(Param {
                name: m.name.clone(),
                ty: sized_array(ScalarType::Int, m.table.len()),
                loc: Loc::default(),
            });
        }
    }
    let var = ["i", "op2_i", "op2_index"]
        .into_iter()
        .find(|v| !seen.contains(*v) && *v != kernel_name)
        .unwrap();

    let mut call_args = Vec::new();
    for a in &l.args {
        call_args.push(Expr::var(a.dat.clone()));
        call_args.push(index_expr(model, a, var));
    }
    let mut directives = Vec::new();
    let mut inc: Vec<String> = Vec::new();
    for a in l.args.iter().filter(|a| a.access == Op2Access::Inc) {
        if !inc.contains(&a.dat) {
            inc.push(a.dat.clone());
        }
    }
    if !inc.is_empty() {
        directives.push(Directive::reduction(ReductionOp::Add, inc));
    }
    let indirect: Vec<&Op2Arg> = l.args.iter().filter(|a| a.is_indirect()).collect();
    if !indirect.is_empty()
        && indirect
            .iter()
            .all(|a| matches!(a.access, Op2Access::Write | Op2Access::Rw))
    {
        directives.push(Directive::independent(Vec::new()));
    }
    let size = model.set(&l.set).map_or(0, |s| s.size);
    let body = Stmt::new(StmtKind::Call {
        callee: kernel_name.to_string(),
        args: call_args,
    });
    let lp = Stmt::new(StmtKind::For(ForLoop {
        var: var.to_string(),
        declares: Some(ScalarType::Int),
        lower: Expr::Int(0),
        bound: Expr::Int(size as i64),
        inclusive: false,
        body: Box::new(body),
        directives,
    }));
    Ok(LoweredLoop {
        kernel,
        function: FunctionDef {
            name: format!("op2_par_loop_{k}"),
            ret: ReturnType::Void,
            params,
            access: None,
            body: vec![lp],
            loc: Loc::default(),
        },
    })
}

/// Lowers `par_loops[k]` to a unit holding the size-specialized kernel and
/// a function `op2_par_loop_k` whose parameters are the dats and maps used.
pub fn lower_op2_par_loop(model: &Op2Model, k: usize) -> Result<Ast, Vec<Diagnostic>> {
    let name = model.par_loops.get(k).map(|l| l.kernel.clone()).unwrap_or_default();
    let l = lower_loop(model, k, &name).map_err(|d| vec![d])?;
    Ok(Ast {
        functions: vec![l.kernel, l.function],
    })
}

/// Lowers every loop. A kernel reused with differently sized dats gets one
/// copy per distinct signature.
pub fn lower_op2_model(model: &Op2Model) -> Result<Ast, Vec<Diagnostic>> {
    let mut kernels: Vec<FunctionDef> = Vec::new();
    let mut loops = Vec::new();
    let mut diags = Vec::new();
    for (k, l) in model.par_loops.iter().enumerate() {
        let lowered = lower_loop(model, k, &l.kernel).and_then(|x| match kernels.iter().find(|f| f.name == l.kernel) {
            None => {
                kernels.push(x.kernel.clone());
                Ok(x)
            }
            Some(f) if f.params == x.kernel.params => Ok(x),
            Some(_) => {
                let x = lower_loop(model, k, &format!("{}_{k}", l.kernel))?;
                kernels.push(x.kernel.clone());
                Ok(x)
            }
        });
        match lowered {
            Ok(x) => loops.push(x.function),
            Err(d) => diags.push(d),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    kernels.extend(loops);
    Ok(Ast { functions: kernels })
}

fn values(ty: ScalarType, data: &[f64]) -> Vec<Value> {
    data.iter()
        .map(|&v| match ty {
            ScalarType::Int => Value::Int(v as i32),
            ScalarType::Float => Value::Float(v as f32),
            ScalarType::Double => Value::Double(v),
        })
        .collect()
}

fn exec_err(e: impl std::fmt::Display) -> Vec<Diagnostic> {
    vec![err(Code::Op2Kernel, format!("kernel execution failed: {e}"))]
}

fn load_arrays(m: &mut Machine, model: &Op2Model) {
    for d in &model.dats {
        m.alloc_array(&d.name, values(d.ty, &d.data));
    }
}

fn read_dats(m: &Machine, model: &Op2Model) -> DatValues {
    model
        .dats
        .iter()
        .map(|d| (d.name.clone(), m.array(&d.name).unwrap_or_default()))
        .collect()
}

/// Runs every `par_loop` sequentially in declaration order, computing each
/// argument's index directly from the map tables, and returns all dats.
pub fn interpret_op2_reference(model: &Op2Model) -> Result<DatValues, Vec<Diagnostic>> {
    let mut unit = Ast::default();
    for l in &model.par_loops {
        if unit.function(&l.kernel).is_none() {
            unit.functions.push(kernel_def(model, l).map_err(|d| vec![d])?);
        }
    }
    let mut m = Machine::new(&unit);
    load_arrays(&mut m, model);
    for l in &model.par_loops {
        let size = model.set(&l.set).map_or(0, |s| s.size);
        for e in 0..size {
            let mut args = Vec::new();
            for a in &l.args {
                let target = match (&a.map, a.index) {
                    (Some(map), Op2Index::Offset(off)) => {
                        let map = model.map(map).expect("validated");
                        map.table[map.arity * e + off] as usize
                    }
                    _ => e,
                };
                args.push(Arg::Array(a.dat.clone()));
                args.push(Arg::Scalar(Value::Int((target * a.dim) as i32)));
            }
            m.call(&l.kernel, args).map_err(exec_err)?;
        }
    }
    Ok(read_dats(&m, model))
}

/// Executes a unit produced by [`lower_op2_model`] with the concrete
/// interpreter, calling each loop function in order.
pub fn execute_lowered_op2(model: &Op2Model, unit: &Ast) -> Result<DatValues, Vec<Diagnostic>> {
    let mut m = Machine::new(unit);
    load_arrays(&mut m, model);
    for map in &model.maps {
        m.alloc_array(&map.name, map.table.iter().map(|&v| Value::Int(v as i32)).collect());
    }
    for k in 0..model.par_loops.len() {
        let name = format!("op2_par_loop_{k}");
        let f = unit
            .function(&name)
            .ok_or_else(|| exec_err(format!("missing `{name}`")))?;
        let args = f.params.iter().map(|p| Arg::Array(p.name.clone())).collect();
        m.call(&name, args).map_err(exec_err)?;
    }
    Ok(read_dats(&m, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::check_compliance;
    use crate::depanalysis::{analyze_function, AnalyzeOptions, Verdict};
    use crate::lowering::{expr_to_string, pretty_print};
    use crate::summaries::ParamBinding;

    pub(crate) const SAMPLE_MESH: &str = r#"{
      "sets": [{"name": "cells", "size": 3}, {"name": "edges", "size": 2}],
      "maps": [{"name": "pecell", "from": "edges", "to": "cells", "arity": 2, "table": [0, 1, 1, 2]}],
      "dats": [
        {"name": "dcells", "set": "cells", "dim": 1, "type": "double", "data": [1, 2, 3]},
        {"name": "dedges", "set": "edges", "dim": 1, "type": "double", "data": [10, 20]}
      ],
      "kernels": {
        "kernel": "void kernel(double edge[], int ie, double cell0[], int i0, double cell1[], int i1)\n{ cell1[i1] += edge[ie];\n  cell0[i0] += edge[ie]; }"
      },
      "par_loops": [{
        "kernel": "kernel", "set": "edges",
        "args": [
          {"dat": "dedges", "index": -1, "map": "OP_ID", "dim": 1, "access": "OP_READ"},
          {"dat": "dcells", "index": 0, "map": "pecell", "dim": 1, "access": "OP_INC"},
          {"dat": "dcells", "index": 1, "map": "pecell", "dim": 1, "access": "OP_INC"}
        ]
      }]
    }"#;

    fn mesh() -> Op2Model {
        load_op2_model(SAMPLE_MESH).unwrap()
    }

    fn as_f64(v: &[Value]) -> Vec<f64> {
        v.iter().map(|v| v.as_f64()).collect()
    }

    fn with(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE_MESH).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn sample_mesh_loads() {
        let m = mesh();
        assert_eq!(m.set("cells").unwrap().size, 3);
        assert_eq!(m.set("edges").unwrap().size, 2);
        assert_eq!(m.map("pecell").unwrap().arity, 2);
    }

    #[test]
    fn out_of_range_map_entry() {
        let doc = with(|v| v["maps"][0]["table"][3] = 5.into());
        assert_eq!(load_op2_model(&doc).unwrap_err()[0].code, Code::Op2Range);
    }

    #[test]
    fn dat_length_mismatch() {
        let doc = with(|v| v["dats"][0]["data"] = serde_json::json!([1, 2, 3, 4]));
        assert_eq!(load_op2_model(&doc).unwrap_err()[0].code, Code::Op2Shape);
    }

    #[test]
    fn bad_offset_is_range_error() {
        let doc = with(|v| v["par_loops"][0]["args"][1]["index"] = 2.into());
        assert_eq!(load_op2_model(&doc).unwrap_err()[0].code, Code::Op2Range);
    }

    #[test]
    fn sample_loop_lowering_shape() {
        let ast = lower_op2_par_loop(&mesh(), 0).unwrap();
        assert!(
            check_compliance(&ast).is_empty(),
            "{:?}\n{}",
            check_compliance(&ast),
            pretty_print(&ast)
        );
        let f = ast.function("op2_par_loop_0").unwrap();
        let StmtKind::For(l) = &f.body[0].kind else { panic!() };
        let StmtKind::Call { callee, args } = &l.body.kind else {
            panic!()
        };
        assert_eq!(callee, "kernel");
        let args: Vec<String> = args.iter().map(expr_to_string).collect();
        assert_eq!(
            args,
            ["dedges", "i", "dcells", "pecell[2 * i]", "dcells", "pecell[2 * i + 1]"]
        );
        assert_eq!(l.directives.len(), 1);
        assert_eq!(
            l.directives[0].kind,
            DirectiveKind::Reduction {
                op: ReductionOp::Add,
                vars: vec!["dcells".into()]
            }
        );
        let back = parse_source("x.c", &pretty_print(&ast)).unwrap();
        assert_eq!(back.without_locations(), ast.without_locations());
    }

    #[test]
    fn sample_mesh_reference_and_lowered_agree() {
        let m = mesh();
        let reference = interpret_op2_reference(&m).unwrap();
        assert_eq!(as_f64(&reference["dcells"]), [11.0, 32.0, 23.0]);
        let lowered = execute_lowered_op2(&m, &lower_op2_model(&m).unwrap()).unwrap();
        assert_eq!(lowered, reference);
    }

    #[test]
    fn sample_loop_analyzes_with_reduction() {
        let ast = lower_op2_par_loop(&mesh(), 0).unwrap();
        let f = ast.function("op2_par_loop_0").unwrap();
        let binding = ParamBinding::new().array("pecell", vec![0, 1, 1, 2]);
        for b in [ParamBinding::new(), binding] {
            let (r, d) = analyze_function(&ast, f, &b, AnalyzeOptions::default());
            assert!(d.is_empty(), "{d:?}");
            assert_eq!(r[0].verdict, Verdict::ParallelWithReduction, "{r:?}");
        }
    }

    #[test]
    fn no_edges_leaves_cells() {
        let doc = with(|v| {
            v["sets"][1]["size"] = 0.into();
            v["maps"][0]["table"] = serde_json::json!([]);
            v["dats"][1]["data"] = serde_json::json!([]);
        });
        let r = interpret_op2_reference(&load_op2_model(&doc).unwrap()).unwrap();
        assert_eq!(as_f64(&r["dcells"]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn edge_touching_one_cell_twice() {
        let doc = with(|v| v["maps"][0]["table"] = serde_json::json!([0, 0, 1, 2]));
        let r = interpret_op2_reference(&load_op2_model(&doc).unwrap()).unwrap();
        assert_eq!(as_f64(&r["dcells"]), [21.0, 22.0, 23.0]);
    }

    #[test]
    fn reversing_edges_keeps_cells() {
        let mut m = mesh();
        let before = interpret_op2_reference(&m).unwrap();
        m.reverse_set("edges");
        assert_eq!(interpret_op2_reference(&m).unwrap()["dcells"], before["dcells"]);
    }

    #[test]
    fn directive_mapping_by_access() {
        let read_only = with(|v| {
            v["par_loops"][0]["args"][1]["access"] = "OP_READ".into();
            v["par_loops"][0]["args"][2]["access"] = "OP_READ".into();
        });
        let ast = lower_op2_par_loop(&load_op2_model(&read_only).unwrap(), 0).unwrap();
        let StmtKind::For(l) = &ast.functions[1].body[0].kind else {
            panic!()
        };
        assert!(l.directives.is_empty());

        let write = with(|v| {
            v["par_loops"][0]["args"][1]["access"] = "OP_WRITE".into();
            v["par_loops"][0]["args"][2]["access"] = "OP_RW".into();
        });
        let ast = lower_op2_par_loop(&load_op2_model(&write).unwrap(), 0).unwrap();
        let StmtKind::For(l) = &ast.functions[1].body[0].kind else {
            panic!()
        };
        assert_eq!(l.directives.len(), 1);
        assert!(matches!(l.directives[0].kind, DirectiveKind::Independent { ref labels } if labels.is_empty()));
    }

    #[test]
    fn kernel_signature_mismatch() {
        let doc = with(|v| v["kernels"]["kernel"] = "void kernel(double edge[], int ie) { }".into());
        let e = lower_op2_par_loop(&load_op2_model(&doc).unwrap(), 0).unwrap_err();
        assert_eq!(e[0].code, Code::Op2Kernel);
        let doc = with(|v| {
            v["kernels"]["kernel"] =
                "void kernel(int edge[], int ie, double c0[], int i0, double c1[], int i1) { }".into()
        });
        assert_eq!(
            lower_op2_par_loop(&load_op2_model(&doc).unwrap(), 0).unwrap_err()[0].code,
            Code::Op2Kernel
        );
    }

    #[test]
    fn increment_mixed_with_update_is_rejected() {
        let doc = with(|v| v["par_loops"][0]["args"][2]["access"] = "OP_RW".into());
        let e = lower_op2_par_loop(&load_op2_model(&doc).unwrap(), 0).unwrap_err();
        assert_eq!(e[0].code, Code::Op2Conflict);
    }
}
