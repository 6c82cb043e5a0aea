//! Criterion benchmarks for the cashband solver live under `benches/`.
