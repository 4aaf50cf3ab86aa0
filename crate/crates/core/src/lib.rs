pub(crate) mod collect;
pub mod compliance;
pub mod depanalysis;
pub mod diag;
pub mod driver;
pub mod dslfront;
pub mod frontend;
pub mod interp;
pub mod lowering;
pub mod summaries;
#[cfg(feature = "testgen")]
pub mod testgen;

pub use diag::{Code, Diagnostic, Loc, Severity};
