//! Criterion benchmarks for the `locgraph` planners and matcher; see `benches/`.
