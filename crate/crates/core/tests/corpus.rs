use std::fs;
use std::path::{Path, PathBuf};

use pencil_core::driver::{run_pipeline, translate_op2, translate_optiml, PipelineOptions, Stage};
use pencil_core::frontend::parse_source;
use pencil_core::lowering::pretty_print;

fn corpus_files(ext: &str) -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut out = Vec::new();
    let mut dirs = vec![root];
    while let Some(d) = dirs.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                dirs.push(p);
            } else if p.to_string_lossy().ends_with(ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Every parseable corpus program, including the PENCIL generated from the
/// DSL inputs.
fn corpus_programs() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = corpus_files(".pencil.c")
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read_to_string(&p).unwrap()))
        .collect();
    for p in corpus_files(".optiml.json") {
        let (_, tr) = translate_optiml(&fs::read_to_string(&p).unwrap()).unwrap();
        out.push((p.display().to_string(), tr.pencil));
    }
    for p in corpus_files("mesh.json") {
        let (_, tr) = translate_op2(&fs::read_to_string(&p).unwrap()).unwrap();
        out.push((p.display().to_string(), tr.pencil));
    }
    out
}

#[test]
fn corpus_is_large_enough() {
    assert!(corpus_files(".pencil.c").len() >= 60);
}

#[test]
fn parse_print_round_trip_on_corpus() {
    for (name, src) in corpus_programs() {
        let Ok(ast) = parse_source(&name, &src) else { continue };
        let printed = pretty_print(&ast);
        let again = parse_source(&name, &printed).unwrap_or_else(|d| panic!("{name}: {d:?}\n{printed}"));
        assert_eq!(ast.without_locations(), again.without_locations(), "{name}");
        assert_eq!(pretty_print(&again), printed, "{name}: printing is not a fixed point");
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let mut opts = PipelineOptions::new(Stage::Lower);
    opts.binding = opts.binding.scalar("n", 4).scalar("N", 4);
    for (name, src) in corpus_programs() {
        let a = run_pipeline(&name, &src, &opts);
        let b = run_pipeline(&name, &src, &opts);
        assert_eq!(a.report.to_json(), b.report.to_json(), "{name}");
        assert_eq!(a.lowered.map(|l| l.text), b.lowered.map(|l| l.text), "{name}");
    }
}
