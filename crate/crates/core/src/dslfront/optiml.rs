//! OptiML control structures as PENCIL templates.
//!
//! | construct        | lowering                                           |
//! |------------------|----------------------------------------------------|
//! | `sum`            | first term, then a `reduction (+:x)` loop          |
//! | vector           | plain affine `for`, no directive                   |
//! | `untilconverged` | sequential `while`                                 |
//! | gradient, batch  | `independent` map loop plus a summing reduction    |
//! | gradient, stoch. | plain sequential `for`                             |

use std::collections::BTreeSet;

use serde::Deserialize;

use super::{parse_expr, substitute};
use crate::diag::{Code, Diagnostic, Loc};
use crate::frontend::*;
use crate::lowering::print_statements;

/// An integer literal or a PENCIL expression.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Int(i64),
    Expr(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientVariant {
    #[serde(alias = "BATCH")]
    Batch,
    #[serde(alias = "STOCHASTIC")]
    Stochastic,
}

fn default_index() -> String {
    "i".into()
}

fn default_sample_index() -> String {
    "j".into()
}

fn double() -> ScalarType {
    ScalarType::Double
}

/// JSON form: `{"sum": {...}}`, `{"vector": {...}}`,
/// `{"until_converged": {...}}` or `{"gradient": {...}}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimlConstruct {
    /// `val target = sum(lo, hi) { index => body }`
    #[serde(alias = "SUM")]
    Sum {
        target: String,
        #[serde(default = "default_index")]
        index: String,
        lo: Operand,
        hi: Operand,
        body: String,
        #[serde(rename = "type", default = "double")]
        ty: ScalarType,
    },
    /// `val target = (lo::hi) { index => init }`
    #[serde(alias = "VECTOR_CONSTRUCT", alias = "vector_construct")]
    Vector {
        target: String,
        #[serde(default = "default_index")]
        index: String,
        lo: Operand,
        hi: Operand,
        init: String,
        #[serde(rename = "type", default = "double")]
        ty: ScalarType,
    },
    /// Iterates `state = step` from `init` until two consecutive values
    /// differ by less than `threshold`.
    #[serde(alias = "UNTIL_CONVERGED", alias = "untilconverged")]
    UntilConverged {
        state: String,
        init: String,
        step: String,
        threshold: String,
        #[serde(rename = "type", default = "double")]
        ty: ScalarType,
    },
    /// One descent pass over `samples` training examples. `term` is the
    /// per-sample gradient; it may read `theta`, `alpha` and `input[index]`.
    #[serde(alias = "GRADIENT")]
    Gradient {
        variant: GradientVariant,
        samples: Operand,
        #[serde(default = "default_sample_index")]
        index: String,
        #[serde(default)]
        inputs: Vec<String>,
        term: String,
    },
}

impl OptimlConstruct {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimlConstruct::Sum { .. } => "sum",
            OptimlConstruct::Vector { .. } => "vector",
            OptimlConstruct::UntilConverged { .. } => "until_converged",
            OptimlConstruct::Gradient {
                variant: GradientVariant::Batch,
                ..
            } => "gradient_batch",
            OptimlConstruct::Gradient { .. } => "gradient_stochastic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimlLowering {
    /// A unit with the single function `function`.
    pub ast: Ast,
    pub function: String,
    /// The construct's statements as printed inside that function.
    pub fragment: String,
}

fn usage(msg: String) -> Vec<Diagnostic> {
    vec![Diagnostic::error(Code::Usage, Loc::default(), msg)]
}

fn expr(text: &str) -> Result<Expr, Vec<Diagnostic>> {
    parse_expr(text).map_err(|d| usage(format!("`{text}` is not a PENCIL expression: {}", d[0].message)))
}

fn operand(o: &Operand) -> Result<Expr, Vec<Diagnostic>> {
    match o {
        Operand::Int(v) => Ok(Expr::Int(*v)),
        Operand::Expr(t) => expr(t),
    }
}

fn plus_one(e: &Expr) -> Expr {
    match e {
        Expr::Int(v) => Expr::Int(v + 1),
        e => Expr::binary(BinOp::Add, e.clone(), Expr::Int(1)),
    }
}

fn var(n: &str) -> LValue {
    LValue::Var(n.to_string())
}

fn decl(name: &str, ty: CType) -> Stmt {
    Stmt::new(StmtKind::Decl(LocalDecl {
        name: name.to_string(),
        ty,
        init: None,
    }))
}

fn counted_loop(
    index: &str,
    lower: Expr,
    bound: Expr,
    inclusive: bool,
    body: Stmt,
    directives: Vec<Directive>,
) -> Stmt {
    Stmt::new(StmtKind::For(ForLoop {
        var: index.to_string(),
        declares: None,
        lower,
        bound,
        inclusive,
        body: Box::new(body),
        directives,
    }))
}

/// Scalar names read by `exprs` other than `bound`; they become `int`
/// parameters. Calls must target math externals and arrays must be bound.
fn free_scalars(exprs: &[&Expr], bound: &[&str], arrays: &[&str]) -> Result<Vec<String>, Vec<Diagnostic>> {
    let mut names = BTreeSet::new();
    let mut bad = None;
    for e in exprs {
        e.visit(&mut |e| match e {
            Expr::Var(n) if !bound.contains(&n.as_str()) => {
                names.insert(n.clone());
            }
            Expr::Index { array, .. } if !arrays.contains(&array.as_str()) => {
                bad.get_or_insert(format!("array `{array}` is not an input of the construct"));
            }
            Expr::Call { callee, .. } if !is_whitelisted_external(callee) => {
                bad.get_or_insert(format!("`{callee}` is not a math external"));
            }
            Expr::Deref(_) | Expr::AddrOf(_) => {
                bad.get_or_insert("pointers are not allowed in constructs".to_string());
            }
            _ => {}
        });
    }
    match bad {
        Some(m) => Err(usage(m)),
        None => Ok(names.into_iter().collect()),
    }
}

fn int_params(names: &[String]) -> Vec<Param> {
    names
        .iter()
        .map(|n| Param {
            name: n.clone(),
            ty: CType::scalar(ScalarType::Int),
            loc: Loc::default(),
        })
        .collect()
}

fn scalar_param(name: &str, ty: ScalarType) -> Param {
    Param {
        name: name.to_string(),
        ty: CType::scalar(ty),
        loc: Loc::default(),
    }
}

fn array_param(name: &str, ty: ScalarType, extent: Expr) -> Param {
    Param {
        name: name.to_string(),
        ty: CType::qualified_array(ty, vec![extent]),
        loc: Loc::default(),
    }
}

fn function(
    name: &str,
    ret: ReturnType,
    params: Vec<Param>,
    decls: Vec<Stmt>,
    fragment: Vec<Stmt>,
    tail: Vec<Stmt>,
) -> OptimlLowering {
    let text = print_statements(&fragment);
    let mut body = decls;
    body.extend(fragment);
    body.extend(tail);
    let f = FunctionDef {
        name: name.to_string(),
        ret,
        params,
        access: None,
        body,
        loc: Loc::default(),
    };
    OptimlLowering {
        ast: Ast { functions: vec![f] },
        function: name.to_string(),
        fragment: text,
    }
}

fn ret(e: Expr) -> Stmt {
    Stmt::new(StmtKind::Return(Some(e)))
}

/// Expands one construct into a PENCIL function named `optiml_<kind>`.
pub fn lower_optiml(construct: &OptimlConstruct) -> Result<OptimlLowering, Vec<Diagnostic>> {
    let name = format!("optiml_{}", construct.kind_name());
    match construct {
        OptimlConstruct::Sum {
            target,
            index,
            lo,
            hi,
            body,
            ty,
        } => {
            let (lo, hi, f) = (operand(lo)?, operand(hi)?, expr(body)?);
            if let (Expr::Int(l), Expr::Int(h)) = (&lo, &hi) {
                if h < l {
                    return Err(vec![Diagnostic::error(
                        Code::OptimlRange,
                        Loc::default(),
                        format!("sum over the empty range {l}..{h}"),
                    )]);
                }
            }
            let params = free_scalars(&[&lo, &hi, &f], &[index, target], &[])?;
            let first = Stmt::assign(var(target), AssignOp::Set, substitute(&f, index, &lo));
            let step = Stmt::assign(var(target), AssignOp::Add, f.clone());
            let lp = counted_loop(
                index,
                plus_one(&lo),
                hi,
                true,
                step,
                vec![Directive::reduction(ReductionOp::Add, vec![target.clone()])],
            );
            Ok(function(
                &name,
                ReturnType::Scalar(*ty),
                int_params(&params),
                vec![
                    decl(target, CType::scalar(*ty)),
                    decl(index, CType::scalar(ScalarType::Int)),
                ],
                vec![first, lp],
                vec![ret(Expr::var(target.clone()))],
            ))
        }
        OptimlConstruct::Vector {
            target,
            index,
            lo,
            hi,
            init,
            ty,
        } => {
            let (lo, hi, v) = (operand(lo)?, operand(hi)?, expr(init)?);
            let params = free_scalars(&[&lo, &hi, &v], &[index], &[])?;
            let mut ps = int_params(&params);
            ps.push(array_param(target, *ty, plus_one(&hi)));
            let store = Stmt::assign(
                LValue::index(target.clone(), vec![Expr::var(index.clone())]),
                AssignOp::Set,
                v,
            );
            Ok(function(
                &name,
                ReturnType::Void,
                ps,
                vec![decl(index, CType::scalar(ScalarType::Int))],
                vec![counted_loop(index, lo, hi, true, store, Vec::new())],
                Vec::new(),
            ))
        }
        OptimlConstruct::UntilConverged {
            state,
            init,
            step,
            threshold,
            ty,
        } => {
            let (init, step, thr) = (expr(init)?, expr(step)?, expr(threshold)?);
            let prev = format!("{state}_prev");
            let done = format!("{state}_converged");
            let params = free_scalars(&[&init, &step, &thr], &[state], &[])?;
            let diff = Expr::call(
                "fabs",
                vec![Expr::binary(
                    BinOp::Sub,
                    Expr::var(state.clone()),
                    Expr::var(prev.clone()),
                )],
            );
            let body = Stmt::new(StmtKind::Block(vec![
                Stmt::assign(var(&prev), AssignOp::Set, Expr::var(state.clone())),
                Stmt::assign(var(state), AssignOp::Set, step),
                Stmt::new(StmtKind::If {
                    cond: Expr::binary(BinOp::Lt, diff, thr),
                    then: Box::new(Stmt::assign(var(&done), AssignOp::Set, Expr::Int(1))),
                    otherwise: None,
                }),
            ]));
            let lp = Stmt::new(StmtKind::While(WhileLoop {
                cond: Expr::Unary {
                    op: UnOp::Not,
                    operand: Box::new(Expr::var(done.clone())),
                },
                body: Box::new(body),
                directives: Vec::new(),
            }));
            Ok(function(
                &name,
                ReturnType::Scalar(*ty),
                int_params(&params),
                vec![
                    decl(state, CType::scalar(*ty)),
                    decl(&prev, CType::scalar(*ty)),
                    decl(&done, CType::scalar(ScalarType::Int)),
                ],
                vec![
                    Stmt::assign(var(state), AssignOp::Set, init),
                    Stmt::assign(var(&done), AssignOp::Set, Expr::Int(0)),
                    lp,
                ],
                vec![ret(Expr::var(state.clone()))],
            ))
        }
        OptimlConstruct::Gradient {
            variant,
            samples,
            index,
            inputs,
            term,
        } => {
            let (m, t) = (operand(samples)?, expr(term)?);
            let arrays: Vec<&str> = inputs.iter().map(String::as_str).collect();
            let mut bound = vec![index.as_str(), "theta", "alpha"];
            bound.extend(&arrays);
            let params = free_scalars(&[&m, &t], &bound, &arrays)?;
            let mut ps = int_params(&params);
            ps.push(scalar_param("alpha", ScalarType::Double));
            ps.push(scalar_param("theta", ScalarType::Double));
            for a in inputs {
                ps.push(array_param(a, ScalarType::Double, m.clone()));
            }
            let j = Expr::var(index.clone());
            let counter = decl(index, CType::scalar(ScalarType::Int));
            match variant {
                GradientVariant::Batch => {
                    ps.push(array_param("grad", ScalarType::Double, m.clone()));
                    let map = counted_loop(
                        index,
                        Expr::Int(0),
                        m.clone(),
                        false,
                        Stmt::assign(LValue::index("grad", vec![j.clone()]), AssignOp::Set, t),
                        vec![Directive::independent(Vec::new())],
                    );
                    let sum = counted_loop(
                        index,
                        Expr::Int(0),
                        m,
                        false,
                        Stmt::assign(var("step"), AssignOp::Add, Expr::index("grad", vec![j])),
                        vec![Directive::reduction(ReductionOp::Add, vec!["step".into()])],
                    );
                    let update = Expr::binary(
                        BinOp::Add,
                        Expr::var("theta"),
                        Expr::binary(BinOp::Mul, Expr::var("alpha"), Expr::var("step")),
                    );
                    Ok(function(
                        &name,
                        ReturnType::Scalar(ScalarType::Double),
                        ps,
                        vec![counter, decl("step", CType::scalar(ScalarType::Double))],
                        vec![
                            map,
                            Stmt::assign(var("step"), AssignOp::Set, Expr::Float("0.0".into())),
                            sum,
                        ],
                        vec![ret(update)],
                    ))
                }
                GradientVariant::Stochastic => {
                    let upd = Stmt::assign(
                        var("theta"),
                        AssignOp::Add,
                        Expr::binary(BinOp::Mul, Expr::var("alpha"), t),
                    );
                    Ok(function(
                        &name,
                        ReturnType::Scalar(ScalarType::Double),
                        ps,
                        vec![counter],
                        vec![counted_loop(index, Expr::Int(0), m, false, upd, Vec::new())],
                        vec![ret(Expr::var("theta"))],
                    ))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::check_compliance;
    use crate::depanalysis::{analyze_function, AnalyzeOptions, Basis, Verdict};
    use crate::frontend::tokenize;
    use crate::interp::{Arg, Machine, Value};
    use crate::lowering::pretty_print;
    use crate::summaries::ParamBinding;

    fn construct(json: &str) -> OptimlConstruct {
        serde_json::from_str(json).unwrap()
    }

    fn verdicts(l: &OptimlLowering) -> Vec<(Verdict, Option<Basis>)> {
        verdicts_with(l, &ParamBinding::new())
    }

    fn verdicts_with(l: &OptimlLowering, b: &ParamBinding) -> Vec<(Verdict, Option<Basis>)> {
        let f = l.ast.function(&l.function).unwrap();
        let (r, _) = analyze_function(&l.ast, f, b, AnalyzeOptions::default());
        r.iter().map(|r| (r.verdict, r.basis)).collect()
    }

    fn compliant(l: &OptimlLowering) {
        let d = check_compliance(&l.ast);
        assert!(d.iter().all(|d| !d.is_error()), "{d:?}\n{}", pretty_print(&l.ast));
        let back = parse_source("o.c", &pretty_print(&l.ast)).unwrap();
        assert_eq!(back.without_locations(), l.ast.without_locations());
    }

    fn tokens(s: &str) -> Vec<String> {
        tokenize("t", s).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn sum_matches_translation_shape() {
        let l = lower_optiml(&construct(
            r#"{"sum": {"target": "x", "lo": 0, "hi": 100, "body": "exp(i)"}}"#,
        ))
        .unwrap();
        compliant(&l);
        let expected = "x = exp(0);\n#pragma pencil reduction (+:x)\nfor (i=1; i<=100; i++)\n  x += exp(i);";
        assert_eq!(tokens(&l.fragment), tokens(expected), "{}", l.fragment);
        assert_eq!(
            verdicts(&l),
            [(Verdict::ParallelWithReduction, Some(Basis::Enumeration))]
        );
        let v = Machine::new(&l.ast).call("optiml_sum", vec![]).unwrap().unwrap();
        let oracle: f64 = (0..=100).map(|i| (i as f64).exp()).sum();
        assert!((v.as_f64() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn empty_sum_is_rejected() {
        let e = lower_optiml(&construct(r#"{"sum": {"target": "x", "lo": 5, "hi": 4, "body": "i"}}"#)).unwrap_err();
        assert_eq!(e[0].code, Code::OptimlRange);
    }

    #[test]
    fn vector_construction_is_plain_affine_loop() {
        let l = lower_optiml(&construct(
            r#"{"vector": {"target": "my_vector", "lo": 0, "hi": "end", "init": "0", "type": "int"}}"#,
        ))
        .unwrap();
        compliant(&l);
        assert_eq!(tokens(&l.fragment), tokens("for (i=0; i<=end; i++) my_vector[i] = 0;"));
        assert_eq!(verdicts(&l), [(Verdict::Parallel, Some(Basis::Affine))]);
        let f = l.ast.function(&l.function).unwrap();
        let StmtKind::For(lp) = &f.body[1].kind else { panic!() };
        assert!(lp.directives.is_empty());
    }

    #[test]
    fn until_converged_is_sequential_while() {
        let l = lower_optiml(&construct(
            r#"{"until_converged": {"state": "x", "init": "1.0", "step": "(x + 2.0 / x) / 2.0", "threshold": "1e-12"}}"#,
        ))
        .unwrap();
        compliant(&l);
        assert_eq!(verdicts(&l), [(Verdict::Unknown, None)]);
        let v = Machine::new(&l.ast).call(&l.function, vec![]).unwrap().unwrap();
        assert!((v.as_f64() - 2f64.sqrt()).abs() < 1e-12);
    }

    const TERM: &str = "(y[j] - theta * x[j]) * x[j]";

    #[test]
    fn batch_gradient_is_independent() {
        let json = format!(
            r#"{{"gradient": {{"variant": "batch", "samples": "m", "inputs": ["x", "y"], "term": "{TERM}"}}}}"#
        );
        let l = lower_optiml(&construct(&json)).unwrap();
        compliant(&l);
        let f = l.ast.function(&l.function).unwrap();
        let StmtKind::For(map) = &f.body[2].kind else { panic!() };
        assert!(matches!(map.directives[0].kind, DirectiveKind::Independent { .. }));
        let v = verdicts_with(&l, &ParamBinding::new().scalar("m", 4));
        assert_eq!(v[0].0, Verdict::Parallel);
        assert_eq!(v[1].0, Verdict::ParallelWithReduction);
    }

    #[test]
    fn stochastic_gradient_is_plain_loop() {
        let json = format!(
            r#"{{"gradient": {{"variant": "STOCHASTIC", "samples": 4, "inputs": ["x", "y"], "term": "{TERM}"}}}}"#
        );
        let l = lower_optiml(&construct(&json)).unwrap();
        compliant(&l);
        let f = l.ast.function(&l.function).unwrap();
        let StmtKind::For(lp) = &f.body[1].kind else { panic!() };
        assert!(lp.directives.is_empty());
        let mut m = Machine::new(&l.ast);
        m.alloc_array("x", [1.0, 2.0, 3.0, 4.0].map(Value::Double).to_vec());
        m.alloc_array("y", [2.0, 4.0, 6.0, 8.0].map(Value::Double).to_vec());
        let args = vec![
            Arg::Scalar(Value::Double(0.01)),
            Arg::Scalar(Value::Double(0.0)),
            Arg::Array("x".into()),
            Arg::Array("y".into()),
        ];
        let got = m.call(&l.function, args).unwrap().unwrap().as_f64();
        let mut theta = 0.0f64;
        for (x, y) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0), (4.0, 8.0)] {
            theta += 0.01 * ((y - theta * x) * x);
        }
        assert_eq!(got, theta);
    }

    #[test]
    fn unknown_array_in_body_is_usage_error() {
        let e = lower_optiml(&construct(
            r#"{"sum": {"target": "x", "lo": 0, "hi": 3, "body": "A[i]"}}"#,
        ))
        .unwrap_err();
        assert_eq!(e[0].code, Code::Usage);
    }
}
