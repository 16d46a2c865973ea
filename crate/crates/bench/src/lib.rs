//! Criterion benchmarks for the core estimators live in `benches/`.
