//! Benchmarks for `doc-coord-core` live under `benches/`.
