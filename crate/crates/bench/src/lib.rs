//! Workloads shared by the benchmarks.

use pencil_core::summaries::ParamBinding;

pub const FOO: &str = include_str!("../../../corpus/listings/foo.pencil.c");
pub const MESH: &str = include_str!("../../../corpus/dsl/mesh.json");
pub const MATMUL: &str = include_str!("../../../corpus/harness/h27_matmul.pencil.c");

/// A table-indexed scatter over `n` iterations, with its table bound so the
/// loop is fully enumerable.
pub fn scatter(n: i64) -> (String, ParamBinding) {
    let src = "void scatter(int n, int A[const restrict static n], int t[const restrict static n])
{
  for (int i = 0; i < n; i++)
    A[t[i]] += i;
}
"
    .to_string();
    let table = (0..n).map(|i| (i * 7 + 3) % n).collect();
    (src, ParamBinding::new().scalar("n", n).array("t", table))
}
