//! Benchmark harness support; see benches/.
