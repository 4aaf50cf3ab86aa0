use std::collections::{BTreeSet, HashSet};

use pencil_core::compliance::{build_call_graph, check_compliance, strongly_connected_components};
use pencil_core::depanalysis::{
    affine_fast_path, analyze_loop, brute_force_dependences, collect_iteration_accesses, loops_of, AnalyzeOptions,
    Verdict,
};
use pencil_core::dslfront::{execute_lowered_op2, interpret_op2_reference, load_op2_model, lower_op2_model};
use pencil_core::frontend::{parse_source, Ast, ForLoop, StmtKind};
use pencil_core::interp::{Arg, Machine, TraceKind, Value};
use pencil_core::lowering::pretty_print;
use pencil_core::summaries::{interpret_summary, summarize_function, Limits, ParamBinding};
use pencil_core::testgen::{bounded_loop, summary_program, GeneratedLoop};
use pencil_core::Code;
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn the_loop(ast: &Ast) -> (&pencil_core::frontend::FunctionDef, &ForLoop, pencil_core::Loc) {
    let f = &ast.functions[0];
    let lr = loops_of(f).into_iter().next().expect("one loop");
    match &lr.stmt.kind {
        StmtKind::For(l) => (f, l, lr.stmt.loc),
        _ => unreachable!(),
    }
}

fn verdict_and_oracle(g: &GeneratedLoop) -> (Verdict, bool, Option<Verdict>) {
    let ast = parse_source("k.c", &g.source).unwrap();
    let (f, l, loc) = the_loop(&ast);
    let (report, diags) = analyze_loop(&ast, f, l, "k#0", loc, &g.binding, AnalyzeOptions::default());
    assert!(diags.is_empty(), "{diags:?}");
    let accesses = collect_iteration_accesses(&ast, f, l, &g.binding, Limits::default()).unwrap();
    let deps = brute_force_dependences(&accesses).unwrap();
    (report.verdict, deps.is_empty(), affine_fast_path(l))
}

fn with_independent(src: &str) -> String {
    src.replacen("  for (", "#pragma pencil independent\n  for (", 1)
}

fn graph_source(n: usize, edges: &[(usize, usize)]) -> String {
    let mut s = String::new();
    for v in 0..n {
        s.push_str(&format!("void f{v}(void)\n{{\n"));
        for &(_, b) in edges.iter().filter(|e| e.0 == v) {
            s.push_str(&format!("  f{b}();\n"));
        }
        s.push_str("}\n\n");
    }
    s
}

fn reachable(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn mesh_json(ncells: usize, table: &[usize], edge_data: &[i64], cell_data: &[i64]) -> String {
    format!(
        r#"{{
  "sets": [{{"name": "cells", "size": {ncells}}}, {{"name": "edges", "size": {}}}],
  "maps": [{{"name": "pecell", "from": "edges", "to": "cells", "arity": 2, "table": {table:?}}}],
  "dats": [
    {{"name": "dcells", "set": "cells", "data": {cell_data:?}}},
    {{"name": "dedges", "set": "edges", "data": {edge_data:?}}}
  ],
  "kernels": {{"kernel": "void kernel(double e[], int ie, double c0[], int i0, double c1[], int i1) {{ c0[i0] += e[ie]; c1[i1] += e[ie]; }}"}},
  "par_loops": [{{"kernel": "kernel", "set": "edges", "args": [
    {{"dat": "dedges", "index": -1, "map": "OP_ID", "access": "OP_READ"}},
    {{"dat": "dcells", "index": 0, "map": "pecell", "access": "OP_INC"}},
    {{"dat": "dcells", "index": 1, "map": "pecell", "access": "OP_INC"}}
  ]}}]
}}"#,
        edge_data.len()
    )
}

fn mesh() -> impl Strategy<Value = (usize, Vec<usize>, Vec<i64>, Vec<i64>, Vec<usize>)> {
    (1usize..=6, 0usize..=8).prop_flat_map(|(ncells, nedges)| {
        (
            Just(ncells),
            prop::collection::vec(0..ncells, 2 * nedges),
            prop::collection::vec(-50i64..50, nedges),
            prop::collection::vec(-50i64..50, ncells),
            Just((0..nedges).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #![proptest_config(config(512))]

    #[test]
    fn oracle_agrees_with_analyzer(g in bounded_loop()) {
        let (verdict, independent, _) = verdict_and_oracle(&g);
        let expected = if independent { Verdict::Parallel } else { Verdict::Serial };
        prop_assert_eq!(verdict, expected, "{}", g.source);
    }

    #[test]
    fn affine_fast_path_is_sound(g in bounded_loop()) {
        let (_, independent, fast) = verdict_and_oracle(&g);
        if fast == Some(Verdict::Parallel) {
            prop_assert!(independent, "{}", g.source);
        }
    }

    #[test]
    fn independent_directive_never_yields_serial(g in bounded_loop()) {
        let src = with_independent(&g.source);
        let ast = parse_source("k.c", &src).unwrap();
        let (f, l, loc) = the_loop(&ast);
        let (r, _) = analyze_loop(&ast, f, l, "k#0", loc, &g.binding, AnalyzeOptions::default());
        prop_assert!(r.verdict.is_parallel(), "{:?}", r.verdict);
    }

    #[test]
    fn must_write_within_may_write(s in summary_program()) {
        let ast = parse_source("s.c", &s.source).unwrap();
        let out = interpret_summary(&ast, &ast.functions[0], &s.binding, Limits::default()).unwrap();
        prop_assert!(out.triple.must_within_may());
        let via_call = summarize_function(&ast, "f", &s.binding, Limits::default()).unwrap();
        prop_assert_eq!(via_call.triple.must_write_elements(), out.triple.must_write_elements());
        prop_assert_eq!(via_call.triple.may_write_elements(), out.triple.may_write_elements());
        prop_assert_eq!(via_call.triple.read_elements(), out.triple.read_elements());
    }

    #[test]
    fn generated_programs_round_trip(g in bounded_loop(), s in summary_program()) {
        for src in [g.source, s.source] {
            let ast = parse_source("a.c", &src).unwrap();
            let printed = pretty_print(&ast);
            let again = parse_source("b.c", &printed).unwrap();
            prop_assert_eq!(ast.without_locations(), again.without_locations());
        }
    }

    #[test]
    fn recursion_reported_iff_cycle(n in 1usize..=8, raw in prop::collection::vec((0usize..8, 0usize..8), 0..16)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let ast = parse_source("g.c", &graph_source(n, &edges)).unwrap();
        let reach = reachable(n, &edges);
        let cyclic = (0..n).any(|v| reach[v][v]);
        let r6 = check_compliance(&ast).iter().any(|d| d.code == Code::R6);
        prop_assert_eq!(r6, cyclic);

        let (graph, _) = build_call_graph(&ast);
        let sccs = strongly_connected_components(&graph);
        let mut seen = HashSet::new();
        for comp in &sccs {
            let ids: Vec<usize> = comp.iter().map(|c| c[1..].parse().unwrap()).collect();
            for &a in &ids {
                prop_assert!(seen.insert(a));
                for &b in &ids {
                    prop_assert!(a == b || (reach[a][b] && reach[b][a]));
                }
            }
            let rep = ids[0];
            for a in (0..n).filter(|a| !ids.contains(a)) {
                prop_assert!(!(reach[a][rep] && reach[rep][a]));
            }
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn op_inc_result_independent_of_edge_order((ncells, table, edata, cdata, perm) in mesh()) {
        let base = load_op2_model(&mesh_json(ncells, &table, &edata, &cdata)).unwrap();
        let ptable: Vec<usize> = perm.iter().flat_map(|&e| [table[2 * e], table[2 * e + 1]]).collect();
        let pdata: Vec<i64> = perm.iter().map(|&e| edata[e]).collect();
        let permuted = load_op2_model(&mesh_json(ncells, &ptable, &pdata, &cdata)).unwrap();
        let a = interpret_op2_reference(&base).unwrap();
        let b = interpret_op2_reference(&permuted).unwrap();
        prop_assert_eq!(&a["dcells"], &b["dcells"]);
        let lowered = execute_lowered_op2(&permuted, &lower_op2_model(&permuted).unwrap()).unwrap();
        prop_assert_eq!(&a["dcells"], &lowered["dcells"]);
    }
}

const FOO: &str = include_str!("../../../corpus/listings/foo.pencil.c");

fn elem(name: &str, index: &[i64]) -> (String, i64) {
    (name.to_string(), index[0])
}

proptest! {
    #![proptest_config(config(128))]

    /// Runs `foo` concretely with scripted `rand()` results and checks the
    /// traced accesses against the summary of `foo_summary`.
    #[test]
    fn summary_covers_concrete_trace(n in 1i64..=6, seq in prop::collection::vec(0i32..1000, 6)) {
        let ast = parse_source("foo.c", FOO).unwrap();
        let binding = ParamBinding::new().scalar("n", n);
        let t = summarize_function(&ast, "foo", &binding, Limits::default()).unwrap().triple;
        let known = |set: BTreeSet<(String, Vec<pencil_core::summaries::Subscript>)>| -> BTreeSet<(String, i64)> {
            set.into_iter().filter_map(|(a, ix)| ix[0].known().map(|i| (a, i))).collect()
        };
        let must = known(t.must_write_elements());
        let may = known(t.may_write_elements());
        let read = known(t.read_elements());

        let mut m = Machine::new(&ast).with_rand_sequence(seq);
        for a in ["A", "B", "C"] {
            m.alloc_array(a, vec![Value::Int(0); n as usize]);
        }
        m.trace_all();
        m.call("foo", vec![
            Arg::Scalar(Value::Int(n as i32)),
            Arg::Array("A".into()),
            Arg::Array("B".into()),
            Arg::Array("C".into()),
        ]).unwrap();
        let trace = m.take_trace();
        let written: BTreeSet<_> = trace.iter().filter(|e| e.kind == TraceKind::Write && !e.index.is_empty()).map(|e| elem(&e.name, &e.index)).collect();
        let reads: BTreeSet<_> = trace.iter().filter(|e| e.kind == TraceKind::Read && !e.index.is_empty()).map(|e| elem(&e.name, &e.index)).collect();
        prop_assert!(must.is_subset(&written), "must {must:?} written {written:?}");
        prop_assert!(written.is_subset(&may), "written {written:?} may {may:?}");
        let covered: BTreeSet<_> = read.union(&may).cloned().collect();
        prop_assert!(reads.is_subset(&covered), "reads {reads:?}");
    }
}
