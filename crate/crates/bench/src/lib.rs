//! Criterion benchmarks for the refinement stages; see `benches/`.
