//! Output stages: canonical PENCIL printing, OpenMP-annotated C and the
//! JSON analysis report.

mod openmp;
mod print;
mod report;

pub use openmp::{emit_openmp, LoweredSource, PragmaOrigin, C_PRELUDE, INDEPENDENT_MARKER};
pub use print::{declaration_to_string, expr_to_string, lvalue_to_string, pretty_print, print_statements};
pub use report::{
    emit_report, FunctionReport, Report, ReportMeta, FLAG_ARRAY_REDUCTION, FLAG_FP_REDUCTION, REPORT_SCHEMA,
};
