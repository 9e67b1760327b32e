//! Criterion benchmarks for the calibration routines, additive releases and
//! end-to-end query handling. Run with `cargo bench -p dprov-bench`.
