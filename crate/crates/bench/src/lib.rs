//! Criterion benchmarks for fbdof-core; see `benches/`.
