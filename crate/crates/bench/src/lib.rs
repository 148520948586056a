//! Benchmark-only crate; see benches/audit.rs.
