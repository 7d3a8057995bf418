//! Criterion benchmarks for the flowmatch solvers; see `benches/`.
