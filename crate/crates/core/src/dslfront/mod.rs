//! Translation of DSL programs into PENCIL.
//!
//! [`op2`] reifies OP2 mesh loops from a JSON model and [`optiml`] expands
//! OptiML control structures through fixed templates.

pub mod op2;
pub mod optiml;

use crate::diag::Diagnostic;
use crate::frontend::{parse_source, Expr, StmtKind};

pub use op2::{
    execute_lowered_op2, interpret_op2_reference, load_op2_model, lower_op2_model, lower_op2_par_loop, DatValues,
    Op2Access, Op2Arg, Op2Dat, Op2Index, Op2Loop, Op2Map, Op2Model, Op2Set,
};
pub use optiml::{lower_optiml, GradientVariant, Operand, OptimlConstruct, OptimlLowering};

/// Parses a standalone PENCIL expression.
pub fn parse_expr(text: &str) -> Result<Expr, Vec<Diagnostic>> {
    let src = format!("void expr(void)\n{{\n  return {text};\n}}\n");
    let ast = parse_source("<expr>", &src)?;
    match ast.functions.first().and_then(|f| f.body.first()).map(|s| &s.kind) {
        Some(StmtKind::Return(Some(e))) if ast.functions[0].body.len() == 1 => Ok(e.clone()),
        _ => Err(vec![Diagnostic::error(
            crate::diag::Code::Syntax,
            Default::default(),
            format!("`{text}` is not a single expression"),
        )]),
    }
}

/// Replaces every read of variable `name` in `e` by `with`.
pub fn substitute(e: &Expr, name: &str, with: &Expr) -> Expr {
    let sub = |x: &Expr| substitute(x, name, with);
    match e {
        Expr::Var(n) if n == name => with.clone(),
        Expr::Index { array, indices } => Expr::Index {
            array: array.clone(),
            indices: indices.iter().map(sub).collect(),
        },
        Expr::Call { callee, args } => Expr::Call {
            callee: callee.clone(),
            args: args.iter().map(sub).collect(),
        },
        Expr::Unary { op, operand } => Expr::Unary {
            op: *op,
            operand: Box::new(sub(operand)),
        },
        Expr::Binary { op, lhs, rhs } => Expr::binary(*op, sub(lhs), sub(rhs)),
        Expr::AddrOf(x) => Expr::AddrOf(Box::new(sub(x))),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::BinOp;
    use crate::lowering::expr_to_string;

    #[test]
    fn parses_and_substitutes() {
        let e = parse_expr("exp(i) + A[i] * 2").unwrap();
        let e0 = substitute(&e, "i", &Expr::Int(0));
        assert_eq!(expr_to_string(&e0), "exp(0) + A[0] * 2");
        assert!(matches!(e, Expr::Binary { op: BinOp::Add, .. }));
        assert!(parse_expr("1; x = 2").is_err());
    }
}
