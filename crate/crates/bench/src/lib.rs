//! Criterion benchmarks for the qrl kernels live under `benches/`.
