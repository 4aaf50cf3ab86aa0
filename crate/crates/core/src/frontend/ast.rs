//! Typed syntax tree for a PENCIL translation unit.

use std::fmt;

use crate::diag::Loc;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    pub functions: Vec<FunctionDef>,
}

impl Ast {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Names of functions referenced by some `ACCESS(...)` annotation.
    pub fn summary_function_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .functions
            .iter()
            .filter_map(|f| f.access.as_ref().map(|a| a.callee.as_str()))
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn is_summary_function(&self, name: &str) -> bool {
        self.functions
            .iter()
            .any(|f| f.access.as_ref().is_some_and(|a| a.callee == name))
    }

    /// Returns a copy with every source location zeroed, for structural
    /// comparison of trees parsed from different texts.
    pub fn without_locations(&self) -> Ast {
        let mut ast = self.clone();
        for f in &mut ast.functions {
            f.loc = Loc::default();
            for p in &mut f.params {
                p.loc = Loc::default();
            }
            for s in &mut f.body {
                s.erase_locations();
            }
        }
        ast
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Int,
    Float,
    Double,
}

impl ScalarType {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalarType::Int => "int",
            ScalarType::Float => "float",
            ScalarType::Double => "double",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnType {
    Void,
    Scalar(ScalarType),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub ret: ReturnType,
    pub params: Vec<Param>,
    pub access: Option<AccessBinding>,
    pub body: Vec<Stmt>,
    pub loc: Loc,
}

impl FunctionDef {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// `ACCESS(summary(args...))` placed between a parameter list and a body.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessBinding {
    pub callee: String,
    pub args: Vec<Expr>,
}

/// A declarator type. Arrays nest outermost dimension first.
#[derive(Debug, Clone, PartialEq)]
pub enum CType {
    Scalar {
        ty: ScalarType,
        is_const: bool,
    },
    Pointer {
        to: Box<CType>,
        is_const: bool,
        is_restrict: bool,
    },
    Array {
        elem: Box<CType>,
        dim: ArrayDim,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrayDim {
    pub extent: Option<Expr>,
    pub is_restrict: bool,
    pub is_const: bool,
    pub is_static: bool,
}

impl CType {
    pub fn scalar(ty: ScalarType) -> Self {
        CType::Scalar { ty, is_const: false }
    }

    /// A compliant array parameter type: qualifiers on the leading dimension.
    pub fn qualified_array(elem: ScalarType, extents: Vec<Expr>) -> Self {
        let mut ty = CType::scalar(elem);
        let n = extents.len();
        for (k, e) in extents.into_iter().rev().enumerate() {
            let leading = k + 1 == n;
            ty = CType::Array {
                elem: Box::new(ty),
                dim: ArrayDim {
                    extent: Some(e),
                    is_restrict: leading,
                    is_const: leading,
                    is_static: leading,
                },
            };
        }
        ty
    }

    pub fn plain_array(elem: ScalarType, extents: Vec<Expr>) -> Self {
        extents
            .into_iter()
            .rev()
            .fold(CType::scalar(elem), |ty, e| CType::Array {
                elem: Box::new(ty),
                dim: ArrayDim {
                    extent: Some(e),
                    ..ArrayDim::default()
                },
            })
    }

    /// Innermost non-array, non-pointer type.
    pub fn base(&self) -> ScalarType {
        match self {
            CType::Scalar { ty, .. } => *ty,
            CType::Pointer { to, .. } => to.base(),
            CType::Array { elem, .. } => elem.base(),
        }
    }

    pub fn contains_pointer(&self) -> bool {
        match self {
            CType::Scalar { .. } => false,
            CType::Pointer { .. } => true,
            CType::Array { elem, .. } => elem.contains_pointer(),
        }
    }

    /// Array dimensions, outermost first, if this is an array of scalars.
    pub fn array_dims(&self) -> Option<Vec<&ArrayDim>> {
        let mut dims = Vec::new();
        let mut ty = self;
        while let CType::Array { elem, dim } = ty {
            dims.push(dim);
            ty = elem;
        }
        match ty {
            CType::Scalar { .. } if !dims.is_empty() => Some(dims),
            _ => None,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, CType::Scalar { .. })
    }
}

/// How a parameter is passed, as far as the coding rules are concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Scalar,
    Array,
    /// `T *` to a scalar.
    ScalarPointer,
    /// Array whose elements are pointers.
    ArrayOfPointers,
    /// Any other pointer shape (pointer to pointer, pointer to array).
    OtherPointer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: CType,
    pub loc: Loc,
}

impl Param {
    pub fn kind(&self) -> ParamKind {
        match &self.ty {
            CType::Scalar { .. } => ParamKind::Scalar,
            CType::Pointer { to, .. } if to.is_scalar() => ParamKind::ScalarPointer,
            CType::Pointer { .. } => ParamKind::OtherPointer,
            CType::Array { .. } if self.ty.array_dims().is_some() => ParamKind::Array,
            CType::Array { .. } => ParamKind::ArrayOfPointers,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: LValue,
        op: AssignOp,
        value: Expr,
    },
    Decl(LocalDecl),
    For(ForLoop),
    While(WhileLoop),
    If {
        cond: Expr,
        then: Box<Stmt>,
        otherwise: Option<Box<Stmt>>,
    },
    Call {
        callee: String,
        args: Vec<Expr>,
    },
    Return(Option<Expr>),
    Block(Vec<Stmt>),
    Labeled {
        label: String,
        stmt: Box<Stmt>,
    },
    Goto(String),
    SummaryAccess {
        kind: SummaryKind,
        target: LValue,
    },
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Self {
            kind,
            loc: Loc::default(),
        }
    }

    pub fn assign(target: LValue, op: AssignOp, value: Expr) -> Self {
        Self::new(StmtKind::Assign { target, op, value })
    }

    pub fn is_loop(&self) -> bool {
        matches!(self.kind, StmtKind::For(_) | StmtKind::While(_))
    }

    /// Child statements in source order.
    pub fn children(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::For(f) => vec![&f.body],
            StmtKind::While(w) => vec![&w.body],
            StmtKind::If { then, otherwise, .. } => {
                let mut v = vec![then.as_ref()];
                v.extend(otherwise.as_deref());
                v
            }
            StmtKind::Block(b) => b.iter().collect(),
            StmtKind::Labeled { stmt, .. } => vec![stmt],
            _ => Vec::new(),
        }
    }

    /// Pre-order walk over this statement and everything nested in it.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    fn erase_locations(&mut self) {
        self.loc = Loc::default();
        match &mut self.kind {
            StmtKind::For(f) => {
                f.directives.iter_mut().for_each(|d| d.loc = Loc::default());
                f.body.erase_locations();
            }
            StmtKind::While(w) => {
                w.directives.iter_mut().for_each(|d| d.loc = Loc::default());
                w.body.erase_locations();
            }
            StmtKind::If { then, otherwise, .. } => {
                then.erase_locations();
                if let Some(o) = otherwise {
                    o.erase_locations();
                }
            }
            StmtKind::Block(b) => b.iter_mut().for_each(Stmt::erase_locations),
            StmtKind::Labeled { stmt, .. } => stmt.erase_locations(),
            _ => {}
        }
    }
}

/// A `for` loop normalized to `var` running from `lower` (inclusive) up to
/// [`ForLoop::upper_exclusive`] with step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ForLoop {
    pub var: String,
    /// Set when the init clause declares the counter (`for (int i = ...`).
    pub declares: Option<ScalarType>,
    pub lower: Expr,
    /// Bound as written; `<=` bounds have `inclusive` set.
    pub bound: Expr,
    pub inclusive: bool,
    pub body: Box<Stmt>,
    pub directives: Vec<Directive>,
}

impl ForLoop {
    pub fn upper_exclusive(&self) -> Expr {
        if self.inclusive {
            Expr::binary(BinOp::Add, self.bound.clone(), Expr::Int(1))
        } else {
            self.bound.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhileLoop {
    pub cond: Expr,
    pub body: Box<Stmt>,
    pub directives: Vec<Directive>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDecl {
    pub name: String,
    pub ty: CType,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SummaryKind {
    Def,
    Use,
    MayDef,
}

impl SummaryKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "DEF" => Some(SummaryKind::Def),
            "USE" => Some(SummaryKind::Use),
            "MAY_DEF" => Some(SummaryKind::MayDef),
            _ => None,
        }
    }

    /// The macro spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            SummaryKind::Def => "DEF",
            SummaryKind::Use => "USE",
            SummaryKind::MayDef => "MAY_DEF",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Var(String),
    Index { array: String, indices: Vec<Expr> },
    Deref(String),
}

impl LValue {
    pub fn root(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Deref(n) => n,
            LValue::Index { array, .. } => array,
        }
    }

    pub fn index(array: impl Into<String>, indices: Vec<Expr>) -> Self {
        LValue::Index {
            array: array.into(),
            indices,
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            LValue::Var(n) => Expr::Var(n.clone()),
            LValue::Deref(n) => Expr::Deref(n.clone()),
            LValue::Index { array, indices } => Expr::Index {
                array: array.clone(),
                indices: indices.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl AssignOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
            AssignOp::Rem => "%=",
        }
    }

    pub fn binop(self) -> Option<BinOp> {
        match self {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
            AssignOp::Div => Some(BinOp::Div),
            AssignOp::Rem => Some(BinOp::Rem),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    /// Float literal kept in its source spelling.
    Float(String),
    Var(String),
    Index {
        array: String,
        indices: Vec<Expr>,
    },
    Call {
        callee: String,
        args: Vec<Expr>,
    },
    Unary {
        op: UnOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Deref(String),
    AddrOf(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn call(callee: impl Into<String>, args: Vec<Expr>) -> Self {
        Expr::Call {
            callee: callee.into(),
            args,
        }
    }

    pub fn index(array: impl Into<String>, indices: Vec<Expr>) -> Self {
        Expr::Index {
            array: array.into(),
            indices,
        }
    }

    /// Pre-order visit of every sub-expression.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Index { indices, .. } => indices.iter().for_each(|e| e.visit(f)),
            Expr::Call { args, .. } => args.iter().for_each(|e| e.visit(f)),
            Expr::Unary { operand, .. } => operand.visit(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::AddrOf(e) => e.visit(f),
            _ => {}
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        let mut found = false;
        self.visit(&mut |e| match e {
            Expr::Var(n) | Expr::Deref(n) => found |= n == name,
            Expr::Index { array, .. } => found |= array == name,
            _ => {}
        });
        found
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::And => 2,
            BinOp::Or => 1,
        }
    }

    pub fn from_punct(p: &str) -> Option<Self> {
        Some(match p {
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }
}

/// A parsed `#pragma pencil` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub kind: DirectiveKind,
    /// Pragma text, reprinted verbatim.
    pub text: String,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveKind {
    Independent { labels: Vec<String> },
    Reduction { op: ReductionOp, vars: Vec<String> },
}

impl Directive {
    pub fn independent(labels: Vec<String>) -> Self {
        let text = if labels.is_empty() {
            "#pragma pencil independent".to_string()
        } else {
            format!("#pragma pencil independent ({})", labels.join(", "))
        };
        Self {
            kind: DirectiveKind::Independent { labels },
            text,
            loc: Loc::default(),
        }
    }

    pub fn reduction(op: ReductionOp, vars: Vec<String>) -> Self {
        let text = format!("#pragma pencil reduction ({}:{})", op, vars.join(", "));
        Self {
            kind: DirectiveKind::Reduction { op, vars },
            text,
            loc: Loc::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReductionOp {
    Add,
    Mul,
    Max,
    Min,
}

impl ReductionOp {
    pub fn as_str(self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Mul => "*",
            ReductionOp::Max => "max",
            ReductionOp::Min => "min",
        }
    }
}

impl fmt::Display for ReductionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Externals callable without a definition in the unit. All are pure except
/// `rand`, whose result the analyzer treats as unknown.
pub const WHITELISTED_EXTERNALS: &[&str] = &["exp", "rand", "sqrt", "fabs", "fmax", "fmin"];

pub fn is_whitelisted_external(name: &str) -> bool {
    WHITELISTED_EXTERNALS.contains(&name)
}
