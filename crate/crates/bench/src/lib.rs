//! Criterion benchmarks for the surrogate and batch selection; see `benches/`.
