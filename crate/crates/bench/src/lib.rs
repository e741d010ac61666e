//! Criterion benchmarks for the vslab solvers live in `benches/`.
