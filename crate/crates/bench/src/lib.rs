//! Criterion benchmark crate; see benches/pipelines.rs.
