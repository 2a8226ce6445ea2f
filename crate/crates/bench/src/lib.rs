//! Benchmark-only crate; see `benches/lab.rs`.
