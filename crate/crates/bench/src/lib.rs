//! Criterion benchmarks live in `benches/`; the end-to-end acceptance suite in `tests/acceptance.rs`.
