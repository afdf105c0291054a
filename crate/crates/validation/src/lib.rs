//! Holds the acceptance gate in `tests/acceptance.rs`. It is a separate
//! package so that a failing criterion does not stop `cargo test` before the
//! unit and integration suites of the other crates have run.
