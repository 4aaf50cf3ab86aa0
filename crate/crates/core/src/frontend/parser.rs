//! Recursive-descent parser for the PENCIL subset of C99.
//!
//! Errors are collected rather than returned at the first failure: the parser
//! resynchronizes at the next statement boundary and keeps going, so one run
//! reports every syntax error in the unit.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use crate::diag::{Code, Diagnostic, Loc};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Skip `#pragma` lines that are not `#pragma pencil` (e.g. OpenMP lines
    /// in emitted code) instead of rejecting them.
    pub skip_foreign_pragmas: bool,
}

/// A directive together with the location of the statement it precedes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedDirective {
    pub directive: Directive,
    pub target: Option<Loc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedUnit {
    pub ast: Ast,
    pub directives: Vec<PlacedDirective>,
}

type PResult<T> = Result<T, ()>;

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    diags: Vec<Diagnostic>,
    directives: Vec<PlacedDirective>,
    options: ParseOptions,
}

/// Tokenizes, parses, and attaches directives in one go.
pub fn parse_source(file: &str, source: &str) -> Result<Ast, Vec<Diagnostic>> {
    parse_source_with(file, source, ParseOptions::default())
}

pub fn parse_source_with(file: &str, source: &str, options: ParseOptions) -> Result<Ast, Vec<Diagnostic>> {
    let tokens = tokenize(file, source).map_err(|d| vec![d])?;
    let unit = parse_translation_unit_with(&tokens, options)?;
    attach_directives(unit.ast, unit.directives)
}

pub fn parse_translation_unit(tokens: &[Token]) -> Result<ParsedUnit, Vec<Diagnostic>> {
    parse_translation_unit_with(tokens, ParseOptions::default())
}

pub fn parse_translation_unit_with(tokens: &[Token], options: ParseOptions) -> Result<ParsedUnit, Vec<Diagnostic>> {
    let mut p = Parser {
        tokens,
        pos: 0,
        diags: Vec::new(),
        directives: Vec::new(),
        options,
    };
    let mut ast = Ast::default();
    while !p.at_end() {
        if let Ok(f) = p.function() {
            ast.functions.push(f);
        }
    }
    let mut seen = HashSet::new();
    for f in &ast.functions {
        if !seen.insert(f.name.as_str()) {
            p.diags.push(Diagnostic::error(
                Code::Redefined,
                f.loc,
                format!("function `{}` is defined more than once", f.name),
            ));
        }
    }
    for f in &ast.functions {
        if let Some(acc) = &f.access {
            if ast.function(&acc.callee).is_none() {
                p.diags.push(Diagnostic::error(
                    Code::SummaryUndef,
                    f.loc,
                    format!("ACCESS names `{}`, which is not defined in this unit", acc.callee),
                ));
            }
        }
    }
    if p.diags.is_empty() {
        Ok(ParsedUnit {
            ast,
            directives: p.directives,
        })
    } else {
        Err(p.diags)
    }
}

impl<'t> Parser<'t> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + n)
    }

    fn loc(&self) -> Loc {
        self.peek()
            .or_else(|| self.tokens.last())
            .map(|t| t.loc)
            .unwrap_or_default()
    }

    fn next(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn is_keyword(&self, k: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(k))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, k: &str) -> bool {
        if self.is_keyword(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error<T>(&mut self, loc: Loc, msg: impl Into<String>) -> PResult<T> {
        self.diags.push(Diagnostic::error(Code::Syntax, loc, msg));
        Err(())
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => format!("`{}`", t.text),
            None => "end of input".to_string(),
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            return Ok(());
        }
        let msg = match self.peek() {
            Some(t) if t.is_punct(",") => "the comma operator is not supported".to_string(),
            Some(t) if t.is_punct("?") => "the conditional operator is not supported".to_string(),
            Some(t) if ["&", "|", "^", "<<", ">>", "~"].iter().any(|o| t.is_punct(o)) => {
                format!("bitwise operator `{}` is not supported", t.text)
            }
            _ => format!("expected `{p}`, found {}", self.found()),
        };
        let loc = self.loc();
        self.error(loc, msg)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => {
                let (loc, msg) = (self.loc(), format!("expected identifier, found {}", self.found()));
                self.error(loc, msg)
            }
        }
    }

    /// Skip to the end of the current statement.
    fn synchronize(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                if depth == 0 {
                    return;
                }
                depth -= 1;
                if depth == 0 {
                    self.pos += 1;
                    return;
                }
            } else if t.is_punct(";") && depth == 0 {
                self.pos += 1;
                return;
            }
            self.pos += 1;
        }
    }

    /// Skip the rest of a malformed function definition.
    fn synchronize_function(&mut self) {
        while let Some(t) = self.peek() {
            if t.is_punct("{") {
                break;
            }
            if t.is_punct(";") {
                self.pos += 1;
                return;
            }
            self.pos += 1;
        }
        let mut depth = 0usize;
        while let Some(t) = self.next() {
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return;
                }
            }
        }
    }

    fn scalar_type(&mut self) -> Option<ScalarType> {
        let ty = match self.peek() {
            Some(t) if t.is_keyword("int") => ScalarType::Int,
            Some(t) if t.is_keyword("float") => ScalarType::Float,
            Some(t) if t.is_keyword("double") => ScalarType::Double,
            _ => return None,
        };
        self.pos += 1;
        Some(ty)
    }

    fn unsupported_type_keyword(&self) -> Option<&'t Token> {
        self.peek().filter(|t| {
            t.kind == TokenKind::Keyword
                && matches!(
                    t.text.as_str(),
                    "char" | "long" | "short" | "unsigned" | "signed" | "struct" | "union" | "enum" | "typedef"
                )
        })
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let at_line = self.peek().is_some_and(|t| t.kind == TokenKind::PragmaLine);
        let r = self.function_inner();
        if r.is_err() && !at_line {
            self.synchronize_function();
        }
        r
    }

    fn function_inner(&mut self) -> PResult<FunctionDef> {
        let loc = self.loc();
        if let Some(t) = self.peek().filter(|t| t.kind == TokenKind::PragmaLine) {
            self.pos += 1;
            let what = if super::lexer::pragma_words(&t.text)[0] == "#pragma" {
                "pragma"
            } else {
                "preprocessor line"
            };
            return self.error(
                t.loc,
                format!("{what} `{}` is not supported outside a function body", t.text),
            );
        }
        let ret = if self.eat_keyword("void") {
            ReturnType::Void
        } else if let Some(ty) = self.scalar_type() {
            ReturnType::Scalar(ty)
        } else {
            let msg = match self.unsupported_type_keyword() {
                Some(t) => format!("type `{}` is not supported", t.text),
                None => format!("expected a function definition, found {}", self.found()),
            };
            return self.error(loc, msg);
        };
        if self.is_punct("*") {
            let loc = self.loc();
            return self.error(loc, "functions returning pointers are not supported");
        }
        let name = self.ident()?;
        self.expect_punct("(")?;
        let params = self.params()?;
        let access = if self
            .peek()
            .is_some_and(|t| t.kind == TokenKind::Identifier && t.text == "ACCESS")
        {
            self.pos += 1;
            self.expect_punct("(")?;
            let callee = self.ident()?;
            self.expect_punct("(")?;
            let args = self.call_args()?;
            self.expect_punct(")")?;
            Some(AccessBinding { callee, args })
        } else {
            None
        };
        if self.is_punct(";") {
            let loc = self.loc();
            return self.error(loc, "function declarations without a body are not supported");
        }
        if !self.is_punct("{") {
            let (loc, msg) = (self.loc(), format!("expected function body, found {}", self.found()));
            return self.error(loc, msg);
        }
        let body = match self.block()?.kind {
            StmtKind::Block(b) => b,
            _ => unreachable!(),
        };
        Ok(FunctionDef {
            name,
            ret,
            params,
            access,
            body,
            loc,
        })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        let mut params: Vec<Param> = Vec::new();
        if self.is_keyword("void") && self.peek_at(1).is_some_and(|t| t.is_punct(")")) {
            self.pos += 2;
            return Ok(params);
        }
        if self.eat_punct(")") {
            return Ok(params);
        }
        loop {
            let loc = self.loc();
            let (name, ty) = self.declaration_head()?;
            let earlier: HashSet<&str> = params
                .iter()
                .filter(|p| p.ty.is_scalar())
                .map(|p| p.name.as_str())
                .collect();
            if let Some(bad) = extent_names(&ty).into_iter().find(|n| !earlier.contains(n.as_str())) {
                return self.error(
                    loc,
                    format!("extent of `{name}` refers to `{bad}`, which is not an earlier scalar parameter"),
                );
            }
            params.push(Param { name, ty, loc });
            if self.eat_punct(")") {
                return Ok(params);
            }
            self.expect_punct(",")?;
        }
    }

    /// Parses `[const] type [const] declarator`.
    fn declaration_head(&mut self) -> PResult<(String, CType)> {
        let mut is_const = self.eat_keyword("const");
        let Some(ty) = self.scalar_type() else {
            let loc = self.loc();
            let msg = match self.unsupported_type_keyword() {
                Some(t) => format!("type `{}` is not supported", t.text),
                None => format!("expected a type, found {}", self.found()),
            };
            return self.error(loc, msg);
        };
        is_const |= self.eat_keyword("const");
        let decl = self.declarator()?;
        Ok(decl.resolve(CType::Scalar { ty, is_const }))
    }

    fn declarator(&mut self) -> PResult<Declarator> {
        if self.eat_punct("*") {
            let mut is_const = false;
            let mut is_restrict = false;
            loop {
                if self.eat_keyword("const") {
                    is_const = true;
                } else if self.eat_keyword("restrict") {
                    is_restrict = true;
                } else {
                    break;
                }
            }
            let inner = self.declarator()?;
            return Ok(Declarator::Pointer {
                is_const,
                is_restrict,
                inner: Box::new(inner),
            });
        }
        let mut node = if self.eat_punct("(") {
            let inner = self.declarator()?;
            self.expect_punct(")")?;
            inner
        } else {
            Declarator::Name(self.ident()?)
        };
        if self.is_punct("(") {
            let loc = self.loc();
            return self.error(loc, "function pointers are not supported");
        }
        while self.eat_punct("[") {
            let mut dim = ArrayDim::default();
            loop {
                if self.eat_keyword("restrict") {
                    dim.is_restrict = true;
                } else if self.eat_keyword("const") {
                    dim.is_const = true;
                } else if self.eat_keyword("static") {
                    dim.is_static = true;
                } else {
                    break;
                }
            }
            if !self.is_punct("]") {
                dim.extent = Some(self.expr()?);
            }
            self.expect_punct("]")?;
            node = Declarator::Array {
                dim,
                inner: Box::new(node),
            };
        }
        Ok(node)
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(")") {
                return Ok(args);
            }
            self.expect_punct(",")?;
        }
    }

    fn block(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            if self.at_end() {
                return self.error(loc, "unterminated block");
            }
            self.stmt_into(&mut stmts);
        }
        Ok(Stmt {
            kind: StmtKind::Block(stmts),
            loc,
        })
    }

    /// Parses one statement (declarations may expand to several) into `out`,
    /// recovering from errors.
    fn stmt_into(&mut self, out: &mut Vec<Stmt>) {
        if let Some(tok) = self.peek().filter(|t| t.kind == TokenKind::PragmaLine) {
            self.pos += 1;
            self.pragma_line(tok);
            return;
        }
        let start = self.pos;
        let is_decl =
            self.is_keyword("const") || self.is_keyword("int") || self.is_keyword("float") || self.is_keyword("double");
        let r = if is_decl {
            self.declaration().map(|ds| out.extend(ds))
        } else {
            self.stmt().map(|s| out.push(s))
        };
        if r.is_err() {
            if self.pos == start {
                self.pos += 1;
            }
            self.synchronize();
        }
    }

    fn declaration(&mut self) -> PResult<Vec<Stmt>> {
        let loc = self.loc();
        let mut is_const = self.eat_keyword("const");
        let Some(ty) = self.scalar_type() else {
            let loc = self.loc();
            return self.error(loc, format!("expected a type, found {}", self.found()));
        };
        is_const |= self.eat_keyword("const");
        let base = CType::Scalar { ty, is_const };
        let mut out = Vec::new();
        loop {
            let (name, ty) = self.declarator()?.resolve(base.clone());
            let init = if self.eat_punct("=") {
                if !ty.is_scalar() && !matches!(ty, CType::Pointer { .. }) {
                    let loc = self.loc();
                    return self.error(loc, "array initializers are not supported");
                }
                Some(self.expr()?)
            } else {
                None
            };
            out.push(Stmt {
                kind: StmtKind::Decl(LocalDecl { name, ty, init }),
                loc,
            });
            if self.eat_punct(";") {
                return Ok(out);
            }
            self.expect_punct(",")?;
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let Some(tok) = self.peek() else {
            let loc = self.loc();
            return self.error(loc, "unexpected end of input");
        };
        let loc = tok.loc;
        if tok.kind == TokenKind::PragmaLine {
            self.pos += 1;
            self.pragma_line(tok);
            return self.sub_stmt();
        }
        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "for" => return self.for_loop(),
                "while" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let cond = self.expr()?;
                    self.expect_punct(")")?;
                    let body = Box::new(self.sub_stmt()?);
                    return Ok(Stmt {
                        kind: StmtKind::While(WhileLoop {
                            cond,
                            body,
                            directives: Vec::new(),
                        }),
                        loc,
                    });
                }
                "if" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let cond = self.expr()?;
                    self.expect_punct(")")?;
                    let then = Box::new(self.sub_stmt()?);
                    let otherwise = if self.eat_keyword("else") {
                        Some(Box::new(self.sub_stmt()?))
                    } else {
                        None
                    };
                    return Ok(Stmt {
                        kind: StmtKind::If { cond, then, otherwise },
                        loc,
                    });
                }
                "return" => {
                    self.pos += 1;
                    let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
                    self.expect_punct(";")?;
                    return Ok(Stmt {
                        kind: StmtKind::Return(value),
                        loc,
                    });
                }
                "goto" => {
                    self.pos += 1;
                    let label = self.ident()?;
                    self.expect_punct(";")?;
                    return Ok(Stmt {
                        kind: StmtKind::Goto(label),
                        loc,
                    });
                }
                "switch" | "case" | "default" | "do" | "break" | "continue" => {
                    return self.error(loc, format!("`{}` statements are not supported", tok.text));
                }
                "int" | "float" | "double" | "const" => {
                    return self.error(loc, "a declaration is not allowed here");
                }
                _ => return self.error(loc, format!("unexpected keyword `{}`", tok.text)),
            }
        }
        if tok.is_punct("{") {
            return self.block();
        }
        if tok.is_punct(";") {
            self.pos += 1;
            return Ok(Stmt {
                kind: StmtKind::Block(Vec::new()),
                loc,
            });
        }
        if tok.kind == TokenKind::Identifier && self.peek_at(1).is_some_and(|t| t.is_punct(":")) {
            self.pos += 2;
            let stmt = Box::new(self.sub_stmt()?);
            return Ok(Stmt {
                kind: StmtKind::Labeled {
                    label: tok.text.clone(),
                    stmt,
                },
                loc,
            });
        }
        if tok.kind == TokenKind::Identifier && self.peek_at(1).is_some_and(|t| t.is_punct("(")) {
            self.pos += 2;
            let args = self.call_args()?;
            self.expect_punct(";")?;
            let kind = match SummaryKind::from_name(&tok.text) {
                Some(kind) => {
                    let [arg] = <[Expr; 1]>::try_from(args).map_err(|_| {
                        self.diags.push(Diagnostic::error(
                            Code::Syntax,
                            loc,
                            format!("`{}` takes exactly one argument", tok.text),
                        ));
                    })?;
                    let Some(target) = lvalue_of(arg) else {
                        return self.error(loc, format!("argument of `{}` must be an lvalue", tok.text));
                    };
                    StmtKind::SummaryAccess { kind, target }
                }
                None => StmtKind::Call {
                    callee: tok.text.clone(),
                    args,
                },
            };
            return Ok(Stmt { kind, loc });
        }
        // Assignment or increment.
        if self.is_punct("++") || self.is_punct("--") {
            let inc = self.next().unwrap().text == "++";
            let target = self.lvalue()?;
            self.expect_punct(";")?;
            return Ok(increment(target, inc, loc));
        }
        let target = self.lvalue()?;
        if self.is_punct("++") || self.is_punct("--") {
            let inc = self.next().unwrap().text == "++";
            self.expect_punct(";")?;
            return Ok(increment(target, inc, loc));
        }
        let op = match self.peek().map(|t| t.text.as_str()) {
            Some("=") => AssignOp::Set,
            Some("+=") => AssignOp::Add,
            Some("-=") => AssignOp::Sub,
            Some("*=") => AssignOp::Mul,
            Some("/=") => AssignOp::Div,
            Some("%=") => AssignOp::Rem,
            _ => {
                let (loc, msg) = (self.loc(), format!("expected assignment, found {}", self.found()));
                return self.error(loc, msg);
            }
        };
        self.pos += 1;
        let value = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt {
            kind: StmtKind::Assign { target, op, value },
            loc,
        })
    }

    /// A statement in a position where declarations are not allowed
    /// (loop bodies, branches, labeled statements).
    fn sub_stmt(&mut self) -> PResult<Stmt> {
        if self.is_keyword("int") || self.is_keyword("float") || self.is_keyword("double") {
            let loc = self.loc();
            return self.error(loc, "a declaration is not allowed here; use a block");
        }
        self.stmt()
    }

    /// Records a directive (or rejects a foreign `#` line). Pragmas are not
    /// statements; the directive targets whatever token follows.
    fn pragma_line(&mut self, tok: &'t Token) {
        if tok.is_pencil_pragma() {
            match parse_pragma(tok) {
                Ok(d) => {
                    let target = self.tokens[self.pos..]
                        .iter()
                        .find(|t| t.kind != TokenKind::PragmaLine)
                        .filter(|t| !t.is_punct("}"))
                        .map(|t| t.loc);
                    self.directives.push(PlacedDirective { directive: d, target });
                }
                Err(d) => self.diags.push(d),
            }
        } else if !(self.options.skip_foreign_pragmas && super::lexer::pragma_words(&tok.text)[0] == "#pragma") {
            self.diags.push(Diagnostic::error(
                Code::Syntax,
                tok.loc,
                format!("preprocessor line `{}` is not supported", tok.text),
            ));
        }
    }

    fn for_loop(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        self.pos += 1;
        self.expect_punct("(")?;
        let declares = self.scalar_type();
        let var = self.ident()?;
        self.expect_punct("=")?;
        let lower = self.expr()?;
        self.expect_punct(";")?;
        let cond_loc = self.loc();
        let cond_var = self.ident()?;
        let inclusive = if self.eat_punct("<") {
            false
        } else if self.eat_punct("<=") {
            true
        } else {
            return self.error(cond_loc, "for-loop condition must be `i < hi` or `i <= hi`");
        };
        if cond_var != var {
            return self.error(cond_loc, format!("for-loop condition must test the counter `{var}`"));
        }
        let bound = self.expr()?;
        self.expect_punct(";")?;
        let step_loc = self.loc();
        if !self.unit_step(&var) {
            return self.error(step_loc, format!("for-loop step must increment `{var}` by one"));
        }
        self.expect_punct(")")?;
        let body = Box::new(self.sub_stmt()?);
        Ok(Stmt {
            kind: StmtKind::For(ForLoop {
                var,
                declares,
                lower,
                bound,
                inclusive,
                body,
                directives: Vec::new(),
            }),
            loc,
        })
    }

    /// Accepts `i++`, `++i`, `i += 1` and `i = i + 1`.
    fn unit_step(&mut self, var: &str) -> bool {
        let is_var = |t: Option<&Token>| t.is_some_and(|t| t.kind == TokenKind::Identifier && t.text == var);
        let is_one = |t: Option<&Token>| t.is_some_and(|t| t.kind == TokenKind::IntLiteral && t.text == "1");
        let p = |n: usize| self.peek_at(n);
        let len = if (is_var(p(0)) && p(1).is_some_and(|t| t.is_punct("++")))
            || (p(0).is_some_and(|t| t.is_punct("++")) && is_var(p(1)))
        {
            2
        } else if is_var(p(0)) && p(1).is_some_and(|t| t.is_punct("+=")) && is_one(p(2)) {
            3
        } else if is_var(p(0))
            && p(1).is_some_and(|t| t.is_punct("="))
            && is_var(p(2))
            && p(3).is_some_and(|t| t.is_punct("+"))
            && is_one(p(4))
        {
            5
        } else {
            return false;
        };
        self.pos += len;
        true
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let loc = self.loc();
        if self.eat_punct("*") {
            return Ok(LValue::Deref(self.ident()?));
        }
        let e = self.postfix()?;
        match lvalue_of(e) {
            Some(lv) => Ok(lv),
            None => self.error(loc, "expected an assignable expression"),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Punctuator)
            .and_then(|t| BinOp::from_punct(&t.text))
        {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        if self.eat_punct("-") {
            let e = self.unary()?;
            return Ok(match e {
                Expr::Int(v) => Expr::Int(-v),
                Expr::Float(s) if !s.starts_with('-') => Expr::Float(format!("-{s}")),
                e => Expr::Unary {
                    op: UnOp::Neg,
                    operand: Box::new(e),
                },
            });
        }
        if self.eat_punct("+") {
            return self.unary();
        }
        if self.eat_punct("!") {
            let e = self.unary()?;
            return Ok(Expr::Unary {
                op: UnOp::Not,
                operand: Box::new(e),
            });
        }
        if self.eat_punct("&") {
            let e = self.unary()?;
            return Ok(Expr::AddrOf(Box::new(e)));
        }
        if self.eat_punct("*") {
            return Ok(Expr::Deref(self.ident()?));
        }
        if self.is_punct("++") || self.is_punct("--") {
            return self.error(loc, "increments are only supported as statements");
        }
        if self.is_keyword("sizeof") {
            return self.error(loc, "`sizeof` is not supported");
        }
        if self.is_punct("(")
            && self
                .peek_at(1)
                .is_some_and(|t| t.kind == TokenKind::Keyword && !matches!(t.text.as_str(), "sizeof"))
        {
            return self.error(loc, "casts are not supported");
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let e = self.primary()?;
        if self.is_punct("++") || self.is_punct("--") {
            let loc = self.loc();
            if self.peek_at(1).is_some_and(|t| !t.is_punct(";")) {
                return self.error(loc, "increments are only supported as statements");
            }
        }
        if self.is_punct(".") || self.is_punct("->") {
            let loc = self.loc();
            return self.error(loc, "member access is not supported");
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let Some(tok) = self.next() else {
            return self.error(loc, "unexpected end of input in expression");
        };
        match tok.kind {
            TokenKind::IntLiteral => {
                let v = if let Some(hex) = tok.text.strip_prefix("0x").or_else(|| tok.text.strip_prefix("0X")) {
                    i64::from_str_radix(hex, 16)
                } else {
                    tok.text.parse()
                };
                match v {
                    Ok(v) => Ok(Expr::Int(v)),
                    Err(_) => self.error(loc, format!("integer literal `{}` is out of range", tok.text)),
                }
            }
            TokenKind::FloatLiteral => Ok(Expr::Float(tok.text.clone())),
            TokenKind::Identifier => {
                if self.eat_punct("(") {
                    let args = self.call_args()?;
                    return Ok(Expr::Call {
                        callee: tok.text.clone(),
                        args,
                    });
                }
                let mut indices = Vec::new();
                while self.eat_punct("[") {
                    indices.push(self.expr()?);
                    self.expect_punct("]")?;
                }
                if indices.is_empty() {
                    Ok(Expr::Var(tok.text.clone()))
                } else {
                    Ok(Expr::Index {
                        array: tok.text.clone(),
                        indices,
                    })
                }
            }
            TokenKind::Punctuator if tok.text == "(" => {
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokenKind::StringLiteral => self.error(loc, "string literals are not supported"),
            _ => self.error(loc, format!("expected an expression, found `{}`", tok.text)),
        }
    }
}

fn increment(target: LValue, inc: bool, loc: Loc) -> Stmt {
    Stmt {
        kind: StmtKind::Assign {
            target,
            op: if inc { AssignOp::Add } else { AssignOp::Sub },
            value: Expr::Int(1),
        },
        loc,
    }
}

fn lvalue_of(e: Expr) -> Option<LValue> {
    match e {
        Expr::Var(n) => Some(LValue::Var(n)),
        Expr::Index { array, indices } => Some(LValue::Index { array, indices }),
        Expr::Deref(n) => Some(LValue::Deref(n)),
        _ => None,
    }
}

enum Declarator {
    Name(String),
    Pointer {
        is_const: bool,
        is_restrict: bool,
        inner: Box<Declarator>,
    },
    Array {
        dim: ArrayDim,
        inner: Box<Declarator>,
    },
}

impl Declarator {
    fn resolve(self, base: CType) -> (String, CType) {
        match self {
            Declarator::Name(n) => (n, base),
            Declarator::Pointer {
                is_const,
                is_restrict,
                inner,
            } => inner.resolve(CType::Pointer {
                to: Box::new(base),
                is_const,
                is_restrict,
            }),
            Declarator::Array { dim, inner } => inner.resolve(CType::Array {
                elem: Box::new(base),
                dim,
            }),
        }
    }
}

fn extent_names(ty: &CType) -> Vec<String> {
    let mut names = Vec::new();
    let mut ty = ty;
    loop {
        match ty {
            CType::Array { elem, dim } => {
                if let Some(e) = &dim.extent {
                    e.visit(&mut |e| match e {
                        Expr::Var(n) | Expr::Deref(n) => names.push(n.clone()),
                        Expr::Index { array, .. } => names.push(array.clone()),
                        _ => {}
                    });
                }
                ty = elem;
            }
            CType::Pointer { to, .. } => ty = to,
            CType::Scalar { .. } => return names,
        }
    }
}

/// Parses a `#pragma pencil ...` line.
pub fn parse_pragma(tok: &Token) -> Result<Directive, Diagnostic> {
    let bad = |msg: String| Diagnostic::error(Code::Pragma, tok.loc, msg);
    let words = super::lexer::pragma_words(&tok.text);
    if !words.starts_with(&["#pragma", "pencil"]) {
        return Err(bad(format!("`{}` is not a pencil pragma", tok.text)));
    }
    // Re-lex everything after `pencil`.
    let after = tok
        .text
        .find("pencil")
        .map(|i| &tok.text[i + "pencil".len()..])
        .unwrap_or("");
    let inner = tokenize(&tok.file, after).map_err(|d| bad(format!("malformed pragma: {}", d.message)))?;
    let mut it = inner.iter().peekable();
    let kind = it.next().map(|t| t.text.as_str());
    let names = |it: &mut std::iter::Peekable<std::slice::Iter<'_, Token>>| -> Result<Vec<String>, Diagnostic> {
        let mut out = Vec::new();
        loop {
            match it.next() {
                Some(t) if t.kind == TokenKind::Identifier => out.push(t.text.clone()),
                other => {
                    return Err(bad(format!(
                        "expected a name in pragma list, found {}",
                        other.map_or("end of line".to_string(), |t| format!("`{}`", t.text))
                    )))
                }
            }
            match it.next() {
                Some(t) if t.is_punct(",") => continue,
                Some(t) if t.is_punct(")") => return Ok(out),
                _ => return Err(bad("malformed list in pragma; expected `,` or `)`".to_string())),
            }
        }
    };
    let kind = match kind {
        Some("independent") => {
            let labels = match it.next() {
                None => Vec::new(),
                Some(t) if t.is_punct("(") => {
                    if it.peek().is_some_and(|t| t.is_punct(")")) {
                        it.next();
                        Vec::new()
                    } else {
                        names(&mut it)?
                    }
                }
                Some(t) => return Err(bad(format!("unexpected `{}` after `independent`", t.text))),
            };
            DirectiveKind::Independent { labels }
        }
        Some("reduction") => {
            if !it.next().is_some_and(|t| t.is_punct("(")) {
                return Err(bad("expected `(` after `reduction`".to_string()));
            }
            let op = match it.next().map(|t| t.text.as_str()) {
                Some("+") => ReductionOp::Add,
                Some("*") => ReductionOp::Mul,
                Some("max") => ReductionOp::Max,
                Some("min") => ReductionOp::Min,
                Some(o) => return Err(bad(format!("unsupported reduction operator `{o}`"))),
                None => return Err(bad("missing reduction operator".to_string())),
            };
            if !it.next().is_some_and(|t| t.is_punct(":")) {
                return Err(bad("expected `:` after the reduction operator".to_string()));
            }
            let vars = names(&mut it)?;
            DirectiveKind::Reduction { op, vars }
        }
        Some(k) => return Err(bad(format!("unknown pencil pragma `{k}`"))),
        None => return Err(bad("empty pencil pragma".to_string())),
    };
    if let Some(t) = it.next() {
        return Err(bad(format!("trailing `{}` in pragma", t.text)));
    }
    Ok(Directive {
        kind,
        text: tok.text.clone(),
        loc: tok.loc,
    })
}

/// Binds each directive to the loop that follows it.
///
/// `independent` may govern a `for` or `while` loop, `reduction` only a `for`
/// loop. A labeled statement is looked through to the loop it labels.
pub fn attach_directives(mut ast: Ast, directives: Vec<PlacedDirective>) -> Result<Ast, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    for placed in directives {
        let d = placed.directive;
        let Some(target) = placed.target else {
            diags.push(Diagnostic::error(
                Code::Attach,
                d.loc,
                "pragma is not followed by a statement",
            ));
            continue;
        };
        let mut outcome = None;
        for f in &mut ast.functions {
            let visible = visible_names(f, target);
            for s in &mut f.body {
                if let Some(r) = attach_in(s, target, &d, &visible) {
                    outcome = Some(r);
                    break;
                }
            }
            if outcome.is_some() {
                break;
            }
        }
        match outcome {
            Some(Ok(())) => {}
            Some(Err(diag)) => diags.push(diag),
            None => diags.push(Diagnostic::error(
                Code::Attach,
                d.loc,
                "pragma is not followed by a statement",
            )),
        }
    }
    if diags.is_empty() {
        Ok(ast)
    } else {
        crate::diag::sort_diagnostics(&mut diags);
        Err(diags)
    }
}

/// Names of parameters and locals declared before `at` in `f`.
fn visible_names(f: &FunctionDef, at: Loc) -> Vec<(String, bool)> {
    let mut out: Vec<(String, bool)> = f.params.iter().map(|p| (p.name.clone(), p.ty.is_scalar())).collect();
    for s in &f.body {
        s.walk(&mut |s| match &s.kind {
            StmtKind::Decl(d) if s.loc < at => out.push((d.name.clone(), d.ty.is_scalar())),
            StmtKind::For(l) if l.declares.is_some() && s.loc < at => out.push((l.var.clone(), true)),
            _ => {}
        });
    }
    out
}

fn attach_in(s: &mut Stmt, target: Loc, d: &Directive, visible: &[(String, bool)]) -> Option<Result<(), Diagnostic>> {
    if s.loc == target {
        return Some(attach_to(s, d, visible));
    }
    match &mut s.kind {
        StmtKind::For(f) => attach_in(&mut f.body, target, d, visible),
        StmtKind::While(w) => attach_in(&mut w.body, target, d, visible),
        StmtKind::If { then, otherwise, .. } => attach_in(then, target, d, visible)
            .or_else(|| otherwise.as_mut().and_then(|o| attach_in(o, target, d, visible))),
        StmtKind::Block(b) => b.iter_mut().find_map(|s| attach_in(s, target, d, visible)),
        StmtKind::Labeled { stmt, .. } => attach_in(stmt, target, d, visible),
        _ => None,
    }
}

fn attach_to(s: &mut Stmt, d: &Directive, visible: &[(String, bool)]) -> Result<(), Diagnostic> {
    let loc = s.loc;
    if let StmtKind::Labeled { stmt, .. } = &mut s.kind {
        if stmt.is_loop() {
            return attach_to(stmt, d, visible);
        }
    }
    let (body, directives, is_for) = match &mut s.kind {
        StmtKind::For(f) => (&*f.body, &mut f.directives, true),
        StmtKind::While(w) => (&*w.body, &mut w.directives, false),
        _ => {
            return Err(
                Diagnostic::error(Code::Attach, d.loc, "a pencil pragma must be followed by a loop").with_related(loc),
            )
        }
    };
    match &d.kind {
        DirectiveKind::Independent { labels } => {
            let mut defined = Vec::new();
            body.walk(&mut |s| {
                if let StmtKind::Labeled { label, .. } = &s.kind {
                    defined.push(label.clone());
                }
            });
            if let Some(missing) = labels.iter().find(|l| !defined.contains(l)) {
                return Err(Diagnostic::error(
                    Code::Label,
                    d.loc,
                    format!("label `{missing}` does not occur in the loop body"),
                )
                .with_related(loc));
            }
        }
        DirectiveKind::Reduction { vars, .. } => {
            if !is_for {
                return Err(Diagnostic::error(
                    Code::Attach,
                    d.loc,
                    "a reduction pragma must be followed by a for loop",
                )
                .with_related(loc));
            }
            if let Some(v) = vars.iter().find(|v| !visible.iter().any(|(n, _)| n == *v)) {
                return Err(Diagnostic::error(
                    Code::Attach,
                    d.loc,
                    format!("reduction variable `{v}` is not in scope at the loop"),
                )
                .with_related(loc));
            }
        }
    }
    directives.push(d.clone());
    Ok(())
}
