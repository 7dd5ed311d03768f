//! Benchmarks for the core crate live in `benches/`.
