//! `pencilc`: checks, summarizes, analyzes and lowers PENCIL programs, and
//! translates OP2 and OptiML inputs through the same pipeline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pencil_core::driver::{
    exit_code_for, merge_bindings, run_pipeline, translate_op2, translate_optiml, PipelineOptions, PipelineOutput,
    Stage,
};
use pencil_core::dslfront::interpret_op2_reference;
use pencil_core::lowering::C_PRELUDE;
use pencil_core::summaries::ParamBinding;
use pencil_core::{Code, Diagnostic, Loc};

#[derive(Parser, Debug)]
#[command(
    name = "pencilc",
    version,
    about = "Coding-rule checker, dependence analyzer and OpenMP lowering for PENCIL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check the coding rules.
    Check(Common),
    /// Check, then evaluate the access summaries of annotated functions.
    Summarize(Common),
    /// Summarize, then classify every loop.
    Analyze(Common),
    /// Analyze, then emit C with OpenMP pragmas.
    Lower(Transform),
    /// Translate an OP2 JSON model to PENCIL and lower it.
    Op2 {
        #[command(flatten)]
        t: Transform,
        /// Also run the model with the reference interpreter and print every dat.
        #[arg(long)]
        run_reference: bool,
    },
    /// Expand an OptiML construct given as JSON and lower it.
    Optiml(Transform),
}

#[derive(Args, Debug)]
struct Common {
    /// Input file.
    input: PathBuf,
    /// Bind a scalar parameter, `name=value`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Bind an integer array, `name=v0,v1,...`. Repeatable.
    #[arg(long = "array", value_name = "NAME=V0,V1,...")]
    arrays: Vec<String>,
    /// Write the primary output here instead of stdout.
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Demand exact verdicts and summaries; missing bindings become errors.
    #[arg(long)]
    exact: bool,
    /// Also write the JSON report to this path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Transform {
    #[command(flatten)]
    common: Common,
    /// Prepend definitions that make the output compile as plain C.
    #[arg(long)]
    standalone: bool,
    /// Which artifact to write.
    #[arg(long, value_enum, default_value_t = Emit::Openmp)]
    emit: Emit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Openmp,
    Pencil,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check(c) => analysis(&c, Stage::Check),
        Command::Summarize(c) => analysis(&c, Stage::Summarize),
        Command::Analyze(c) => analysis(&c, Stage::Analyze),
        Command::Lower(t) => transform(&t, Input::Pencil, false),
        Command::Op2 { t, run_reference } => transform(&t, Input::Op2, run_reference),
        Command::Optiml(t) => transform(&t, Input::Optiml, false),
    };
    ExitCode::from(code as u8)
}

fn usage(msg: String) -> Diagnostic {
    Diagnostic::error(Code::Usage, Loc::default(), msg)
}

fn io_error(path: &Path, e: std::io::Error) -> Diagnostic {
    Diagnostic::error(Code::Io, Loc::default(), format!("{}: {e}", path.display()))
}

fn parse_binding(c: &Common) -> Result<ParamBinding, Diagnostic> {
    let mut b = ParamBinding::new();
    for p in &c.params {
        let (name, v) = p
            .split_once('=')
            .ok_or_else(|| usage(format!("--param expects NAME=VALUE, got `{p}`")))?;
        let v: i64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("--param {name}: `{v}` is not an integer")))?;
        b = b.scalar(name.trim(), v);
    }
    for a in &c.arrays {
        let (name, vs) = a
            .split_once('=')
            .ok_or_else(|| usage(format!("--array expects NAME=V0,V1,..., got `{a}`")))?;
        let vs = vs
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| usage(format!("--array {name}: values must be integers")))?;
        b = b.array(name.trim(), vs);
    }
    Ok(b)
}

fn source_name(c: &Common) -> String {
    c.input.display().to_string()
}

/// Reads the input and parses the bindings, or yields the failure report.
fn prepare(c: &Common) -> Result<(String, ParamBinding), Box<PipelineOutput>> {
    let name = source_name(c);
    let binding =
        parse_binding(c).map_err(|d| Box::new(PipelineOutput::failed(&name, ParamBinding::new(), vec![d])))?;
    let text = fs::read_to_string(&c.input).map_err(|e| {
        Box::new(PipelineOutput::failed(
            &name,
            binding.clone(),
            vec![io_error(&c.input, e)],
        ))
    })?;
    Ok((text, binding))
}

fn options(c: &Common, stage: Stage, binding: ParamBinding) -> PipelineOptions {
    let mut o = PipelineOptions::new(stage);
    o.binding = binding;
    o.exact = c.exact;
    o
}

fn rendered(out: &PipelineOutput, format: Format) -> String {
    match format {
        Format::Json => out.report.to_json(),
        Format::Text => out.report.to_text(),
    }
}

fn write_to(path: &Path, text: &str) -> Result<(), Diagnostic> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Writes the `--report` file; returns the resulting exit code.
fn finish(c: &Common, out: &PipelineOutput, mut extra: Vec<Diagnostic>) -> i32 {
    if let Some(path) = &c.report {
        if let Err(d) = write_to(path, &out.report.to_json()) {
            extra.push(d);
        }
    }
    for d in &extra {
        eprintln!("pencilc: {}: {}", d.code, d.message);
    }
    exit_code_for(out.report.all_diagnostics().chain(&extra))
}

fn analysis(c: &Common, stage: Stage) -> i32 {
    let out = match prepare(c) {
        Ok((text, binding)) => run_pipeline(&source_name(c), &text, &options(c, stage, binding)),
        Err(out) => *out,
    };
    let body = rendered(&out, c.format);
    let mut extra = Vec::new();
    match &c.output {
        Some(path) => extra.extend(write_to(path, &body).err()),
        None => print!("{body}"),
    }
    finish(c, &out, extra)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Input {
    Pencil,
    Op2,
    Optiml,
}

fn transform(t: &Transform, kind: Input, run_reference: bool) -> i32 {
    let c = &t.common;
    let name = source_name(c);
    let mut reference = Vec::new();
    let mut pencil_text = None;
    let out = match prepare(c) {
        Err(out) => *out,
        Ok((text, binding)) => {
            let translated = match kind {
                Input::Pencil => Ok((name.clone(), text, ParamBinding::new())),
                Input::Op2 => translate_op2(&text).map(|(model, tr)| {
                    if run_reference {
                        reference = match interpret_op2_reference(&model) {
                            Ok(values) => values
                                .iter()
                                .map(|(dat, vs)| {
                                    let vs: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                                    format!("{dat} = [{}]", vs.join(", "))
                                })
                                .collect(),
                            Err(d) => d
                                .iter()
                                .map(|d| format!("reference run failed: {}", d.message))
                                .collect(),
                        };
                    }
                    (format!("{name}.pencil.c"), tr.pencil, tr.binding)
                }),
                Input::Optiml => {
                    translate_optiml(&text).map(|(_, tr)| (format!("{name}.pencil.c"), tr.pencil, tr.binding))
                }
            };
            match translated {
                Err(d) => PipelineOutput::failed(&name, binding, d),
                Ok((src_name, pencil, implied)) => {
                    let binding = merge_bindings(binding, &implied);
                    let out = run_pipeline(&src_name, &pencil, &options(c, Stage::Lower, binding));
                    pencil_text = Some(pencil);
                    out
                }
            }
        }
    };
    let artifact = match t.emit {
        Emit::Pencil if !out.report.has_errors() => pencil_text,
        Emit::Pencil => None,
        Emit::Openmp => out.lowered.as_ref().map(|l| {
            if t.standalone {
                format!("{C_PRELUDE}\n{}", l.text)
            } else {
                l.text.clone()
            }
        }),
    };
    let mut extra = Vec::new();
    let report = rendered(&out, c.format);
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    match (&c.output, c.format) {
        (Some(path), _) => {
            if let Some(a) = &artifact {
                extra.extend(write_to(path, a).err());
            }
            let _ = stdout.write_all(report.as_bytes());
        }
        (None, Format::Json) => {
            let _ = stdout.write_all(report.as_bytes());
        }
        (None, Format::Text) => {
            eprint!("{report}");
            if let (Some(a), false) = (&artifact, run_reference) {
                let _ = stdout.write_all(a.as_bytes());
            }
        }
    }
    for line in &reference {
        if c.format == Format::Json {
            eprintln!("{line}");
        } else {
            let _ = writeln!(stdout, "{line}");
        }
    }
    drop(stdout);
    finish(c, &out, extra)
}
