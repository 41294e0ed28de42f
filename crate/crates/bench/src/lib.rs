//! Criterion benchmarks for the estimators; see `benches/estimators.rs`.
