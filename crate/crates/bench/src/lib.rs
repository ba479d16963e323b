//! Criterion benchmarks for graph generation, the adoption dynamics and the
//! exact flip probability; see `benches/simulation.rs`.
