//! Holds the end-to-end acceptance suite; see `tests/acceptance.rs`.
