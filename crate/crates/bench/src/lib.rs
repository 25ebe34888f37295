//! Criterion benchmarks for the controller pipeline and the simulator live in `benches/`.
