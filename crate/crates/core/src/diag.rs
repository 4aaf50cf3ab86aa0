//! Diagnostics shared by every stage of the pipeline.
//!
//! Codes `R1`..`R8` are coding-rule violations reported by the compliance
//! checker; every other code is prefixed `E-` and names the stage-specific
//! failure. The full catalog lives in `docs/diagnostics.md`.

use std::fmt;

use serde::{Serialize, Serializer};

/// A position in a source file. Lines and columns are 1-based.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Loc {
    pub line: u32,
    pub column: u32,
}

impl Loc {
    pub const fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Code {
    /// Array parameter missing `restrict`, `const` or `static`.
    R1,
    /// Pointer parameter that is not a `const restrict` scalar pointer.
    R2,
    /// Local pointer declaration.
    R3,
    /// Pointer arithmetic, address-of, or reseating a pointer.
    R4,
    /// `goto`.
    R5,
    /// Direct or indirect recursion.
    R6,
    /// `DEF`/`USE`/`MAY_DEF` outside an access-summary function.
    R7,
    /// Array-of-pointers parameter.
    R8,
    Lex,
    Syntax,
    Pragma,
    Attach,
    Label,
    Redefined,
    Undef,
    SummaryArity,
    SummaryUndef,
    NestedSummary,
    NonAffine,
    Budget,
    Bounds,
    NoSummary,
    UnknownIndex,
    BindingRequired,
    Emit,
    Op2Range,
    Op2Shape,
    Op2Kernel,
    Op2Conflict,
    OptimlRange,
    Io,
    Usage,
}

impl Code {
    pub const fn as_str(self) -> &'static str {
        match self {
            Code::R1 => "R1",
            Code::R2 => "R2",
            Code::R3 => "R3",
            Code::R4 => "R4",
            Code::R5 => "R5",
            Code::R6 => "R6",
            Code::R7 => "R7",
            Code::R8 => "R8",
            Code::Lex => "E-LEX",
            Code::Syntax => "E-SYNTAX",
            Code::Pragma => "E-PRAGMA",
            Code::Attach => "E-ATTACH",
            Code::Label => "E-LABEL",
            Code::Redefined => "E-REDEF",
            Code::Undef => "E-UNDEF",
            Code::SummaryArity => "E-SUMMARY-ARITY",
            Code::SummaryUndef => "E-SUMMARY-UNDEF",
            Code::NestedSummary => "E-NESTED-SUMMARY",
            Code::NonAffine => "E-NONAFFINE",
            Code::Budget => "E-BUDGET",
            Code::Bounds => "E-BOUNDS",
            Code::NoSummary => "E-NO-SUMMARY",
            Code::UnknownIndex => "E-UNKNOWN-INDEX",
            Code::BindingRequired => "E-BINDING-REQUIRED",
            Code::Emit => "E-EMIT",
            Code::Op2Range => "E-OP2-RANGE",
            Code::Op2Shape => "E-OP2-SHAPE",
            Code::Op2Kernel => "E-OP2-KERNEL",
            Code::Op2Conflict => "E-OP2-CONFLICT",
            Code::OptimlRange => "E-OPTIML-RANGE",
            Code::Io => "E-IO",
            Code::Usage => "E-USAGE",
        }
    }

    /// Whether the code is one of the coding rules `R1`..`R8`.
    pub const fn is_rule(self) -> bool {
        matches!(
            self,
            Code::R1 | Code::R2 | Code::R3 | Code::R4 | Code::R5 | Code::R6 | Code::R7 | Code::R8
        )
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Code {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{loc}: {severity:?} {code}: {message}")]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub message: String,
    pub loc: Loc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub related: Option<Loc>,
}

impl Diagnostic {
    pub fn error(code: Code, loc: Loc, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            message: message.into(),
            loc,
            related: None,
        }
    }

    pub fn warning(code: Code, loc: Loc, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(code, loc, message)
        }
    }

    pub fn with_related(mut self, loc: Loc) -> Self {
        self.related = Some(loc);
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Sorts diagnostics by location, then code, so output is order-stable.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| (a.loc, a.code, &a.message).cmp(&(b.loc, b.code, &b.message)));
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
