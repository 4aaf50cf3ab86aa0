//! Canonical PENCIL printer.
//!
//! Layout: functions separated by a blank line, braces of function bodies on
//! their own lines, K&R braces inside bodies, two-space indentation.

use crate::frontend::*;

/// Prints `ast` as PENCIL source that parses back to the same tree.
pub fn pretty_print(ast: &Ast) -> String {
    let mut p = Printer::new(None);
    p.unit(ast);
    p.finish().0
}

/// Prints a statement sequence at indentation zero, as it would appear in
/// a function body.
pub fn print_statements(stmts: &[Stmt]) -> String {
    let mut p = Printer::new(None);
    for s in stmts {
        p.stmt(s, 0, true);
    }
    p.finish().0
}

/// Renders an expression with minimal parentheses.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e);
    s
}

pub fn lvalue_to_string(lv: &LValue) -> String {
    expr_to_string(&lv.to_expr())
}

/// Renders a declaration of `name` with type `ty`, e.g. `double A[restrict const static n]`.
pub fn declaration_to_string(ty: &CType, name: &str) -> String {
    declarator(ty, name.to_string())
}

/// Called with the id of every loop (`func#k`, pre-order) before its
/// keyword is printed; the returned lines go right above it.
pub(crate) type LoopHook<'h> = &'h mut dyn FnMut(&str) -> Vec<String>;

pub(crate) struct Printer<'h> {
    lines: Vec<String>,
    hook: Option<LoopHook<'h>>,
    /// (1-based line, loop id) for every hook-supplied line.
    hooked: Vec<(usize, String)>,
    func: String,
    loops: usize,
}

impl<'h> Printer<'h> {
    pub(crate) fn new(hook: Option<LoopHook<'h>>) -> Self {
        Self {
            lines: Vec::new(),
            hook,
            hooked: Vec::new(),
            func: String::new(),
            loops: 0,
        }
    }

    pub(crate) fn finish(self) -> (String, Vec<(usize, String)>) {
        let mut text = self.lines.join("\n");
        text.push('\n');
        (text, self.hooked)
    }

    fn line(&mut self, depth: usize, text: impl AsRef<str>) {
        self.lines.push(format!("{}{}", "  ".repeat(depth), text.as_ref()));
    }

    pub(crate) fn unit(&mut self, ast: &Ast) {
        for (k, f) in ast.functions.iter().enumerate() {
            if k > 0 {
                self.lines.push(String::new());
            }
            self.function(f);
        }
    }

    fn function(&mut self, f: &FunctionDef) {
        self.func = f.name.clone();
        self.loops = 0;
        let params = if f.params.is_empty() {
            "void".to_string()
        } else {
            f.params
                .iter()
                .map(|p| declarator(&p.ty, p.name.clone()))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let ret = match f.ret {
            ReturnType::Void => "void",
            ReturnType::Scalar(t) => t.as_str(),
        };
        self.line(0, format!("{ret} {}({params})", f.name));
        if let Some(a) = &f.access {
            self.line(0, format!("ACCESS({}({}))", a.callee, args(&a.args)));
        }
        self.line(0, "{");
        for s in &f.body {
            self.stmt(s, 1, true);
        }
        self.line(0, "}");
    }

    /// Prints `s` starting on a fresh line.
    fn stmt(&mut self, s: &Stmt, depth: usize, with_directives: bool) {
        match &s.kind {
            StmtKind::Assign { target, op, value } => self.line(
                depth,
                format!(
                    "{} {} {};",
                    lvalue_to_string(target),
                    op.as_str(),
                    expr_to_string(value)
                ),
            ),
            StmtKind::Decl(d) => {
                let mut text = declarator(&d.ty, d.name.clone());
                if let Some(init) = &d.init {
                    text.push_str(" = ");
                    text.push_str(&expr_to_string(init));
                }
                text.push(';');
                self.line(depth, text);
            }
            StmtKind::For(l) => {
                if with_directives {
                    self.directives(&l.directives, depth);
                }
                self.loop_hook(depth);
                let decl = l.declares.map(|t| format!("{} ", t.as_str())).unwrap_or_default();
                let cmp = if l.inclusive { "<=" } else { "<" };
                let head = format!(
                    "for ({decl}{v} = {}; {v} {cmp} {}; {v}++)",
                    expr_to_string(&l.lower),
                    bound_to_string(&l.bound),
                    v = l.var
                );
                self.body(head, &l.body, depth);
            }
            StmtKind::While(w) => {
                if with_directives {
                    self.directives(&w.directives, depth);
                }
                self.loop_hook(depth);
                self.body(format!("while ({})", expr_to_string(&w.cond)), &w.body, depth);
            }
            StmtKind::If { cond, then, otherwise } => self.if_chain(
                format!("if ({})", expr_to_string(cond)),
                then,
                otherwise.as_deref(),
                depth,
            ),
            StmtKind::Call { callee, args: a } => self.line(depth, format!("{callee}({});", args(a))),
            StmtKind::Return(None) => self.line(depth, "return;"),
            StmtKind::Return(Some(e)) => self.line(depth, format!("return {};", expr_to_string(e))),
            StmtKind::Block(b) => {
                self.line(depth, "{");
                for s in b {
                    self.stmt(s, depth + 1, true);
                }
                self.line(depth, "}");
            }
            StmtKind::Labeled { label, stmt } => {
                // Loop directives bind through the label, so they go above it.
                if with_directives {
                    if let Some(ds) = labeled_loop_directives(stmt) {
                        self.directives(ds, depth);
                    }
                }
                self.line(depth, format!("{label}:"));
                self.stmt(stmt, depth, false);
            }
            StmtKind::Goto(l) => self.line(depth, format!("goto {l};")),
            StmtKind::SummaryAccess { kind, target } => {
                self.line(depth, format!("{}({});", kind.as_str(), lvalue_to_string(target)))
            }
        }
    }

    fn directives(&mut self, ds: &[Directive], depth: usize) {
        for d in ds {
            self.line(depth, &d.text);
        }
    }

    fn loop_hook(&mut self, depth: usize) {
        let id = format!("{}#{}", self.func, self.loops);
        self.loops += 1;
        if let Some(h) = self.hook.as_mut() {
            for l in h(&id) {
                self.line(depth, l);
                self.hooked.push((self.lines.len(), id.clone()));
            }
        }
    }

    /// `head` followed by a loop or branch body.
    fn body(&mut self, head: String, body: &Stmt, depth: usize) {
        if let StmtKind::Block(b) = &body.kind {
            self.line(depth, format!("{head} {{"));
            for s in b {
                self.stmt(s, depth + 1, true);
            }
            self.line(depth, "}");
        } else {
            self.line(depth, head);
            self.stmt(body, depth + 1, true);
        }
    }

    fn if_chain(&mut self, head: String, then: &Stmt, otherwise: Option<&Stmt>, depth: usize) {
        let Some(other) = otherwise else {
            self.body(head, then, depth);
            return;
        };
        // A bare `if` without `else` in the then-branch would capture our `else`.
        let dangling = ends_with_open_if(then);
        if let (StmtKind::Block(_), false) | (_, true) = (&then.kind, dangling) {
            self.line(depth, format!("{head} {{"));
            match &then.kind {
                StmtKind::Block(b) => b.iter().for_each(|s| self.stmt(s, depth + 1, true)),
                _ => self.stmt(then, depth + 1, true),
            }
            self.else_part(other, depth, true);
        } else {
            self.line(depth, head);
            self.stmt(then, depth + 1, true);
            self.else_part(other, depth, false);
        }
    }

    fn else_part(&mut self, other: &Stmt, depth: usize, after_brace: bool) {
        let prefix = if after_brace { "} else" } else { "else" };
        match &other.kind {
            StmtKind::If { cond, then, otherwise } => self.if_chain(
                format!("{prefix} if ({})", expr_to_string(cond)),
                then,
                otherwise.as_deref(),
                depth,
            ),
            _ => self.body(prefix.to_string(), other, depth),
        }
    }
}

fn ends_with_open_if(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::If { otherwise: None, .. } => true,
        StmtKind::If { otherwise: Some(o), .. } => ends_with_open_if(o),
        StmtKind::For(l) => ends_with_open_if(&l.body),
        StmtKind::While(w) => ends_with_open_if(&w.body),
        StmtKind::Labeled { stmt, .. } => ends_with_open_if(stmt),
        _ => false,
    }
}

fn labeled_loop_directives(s: &Stmt) -> Option<&[Directive]> {
    match &s.kind {
        StmtKind::For(l) => Some(&l.directives),
        StmtKind::While(w) => Some(&w.directives),
        StmtKind::Labeled { stmt, .. } => labeled_loop_directives(stmt),
        _ => None,
    }
}

fn args(a: &[Expr]) -> String {
    a.iter().map(expr_to_string).collect::<Vec<_>>().join(", ")
}

fn bound_to_string(e: &Expr) -> String {
    match e {
        Expr::Binary { op, .. } if op.precedence() <= BinOp::Lt.precedence() => format!("({})", expr_to_string(e)),
        _ => expr_to_string(e),
    }
}

fn declarator(ty: &CType, inner: String) -> String {
    match ty {
        CType::Scalar { ty, is_const } => {
            let c = if *is_const { "const " } else { "" };
            if inner.is_empty() {
                format!("{c}{}", ty.as_str())
            } else {
                format!("{c}{} {inner}", ty.as_str())
            }
        }
        CType::Pointer {
            to,
            is_const,
            is_restrict,
        } => {
            let mut s = "*".to_string();
            if *is_const {
                s.push_str("const ");
            }
            if *is_restrict {
                s.push_str("restrict ");
            }
            s.push_str(&inner);
            let s = s.trim_end().to_string();
            if matches!(**to, CType::Array { .. }) {
                declarator(to, format!("({s})"))
            } else {
                declarator(to, s)
            }
        }
        CType::Array { elem, dim } => {
            let mut quals = Vec::new();
            if dim.is_const {
                quals.push("const".to_string());
            }
            if dim.is_restrict {
                quals.push("restrict".to_string());
            }
            if dim.is_static {
                quals.push("static".to_string());
            }
            if let Some(e) = &dim.extent {
                quals.push(expr_to_string(e));
            }
            declarator(elem, format!("{inner}[{}]", quals.join(" ")))
        }
    }
}

fn expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Int(v) => out.push_str(&v.to_string()),
        Expr::Float(s) => out.push_str(s),
        Expr::Var(n) => out.push_str(n),
        Expr::Deref(n) => {
            out.push('*');
            out.push_str(n);
        }
        Expr::Index { array, indices } => {
            out.push_str(array);
            for i in indices {
                out.push('[');
                expr(out, i);
                out.push(']');
            }
        }
        Expr::Call { callee, args: a } => {
            out.push_str(callee);
            out.push('(');
            out.push_str(&args(a));
            out.push(')');
        }
        Expr::Unary { op, operand } => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            let wrap = match &**operand {
                Expr::Binary { .. } => true,
                Expr::Unary { op: UnOp::Neg, .. } => *op == UnOp::Neg,
                Expr::Int(v) => *v < 0,
                Expr::Float(s) => s.starts_with('-'),
                _ => false,
            };
            operand_in(out, operand, wrap);
        }
        Expr::AddrOf(inner) => {
            out.push('&');
            operand_in(out, inner, matches!(**inner, Expr::Binary { .. } | Expr::Unary { .. }));
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            let lwrap = matches!(&**lhs, Expr::Binary { op: l, .. } if l.precedence() < p);
            let rwrap = matches!(&**rhs, Expr::Binary { op: r, .. } if r.precedence() <= p);
            operand_in(out, lhs, lwrap);
            out.push(' ');
            out.push_str(op.as_str());
            out.push(' ');
            operand_in(out, rhs, rwrap);
        }
    }
}

fn operand_in(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
    }
    expr(out, e);
    if wrap {
        out.push(')');
    }
}
