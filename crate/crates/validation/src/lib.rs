//! Test-only package. The acceptance gate lives in `tests/acceptance.rs` and
//! prints one PASS/FAIL line per criterion:
//!
//! ```text
//! cargo test -p efx-validation --test acceptance
//! ```
