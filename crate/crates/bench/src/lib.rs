//! Criterion benchmarks for the assessment pipeline live in `benches/`.
