//! Benchmark-only crate; see `benches/distance.rs`.
