//! Criterion benchmarks for the training and scoring hot paths; see `benches/`.
