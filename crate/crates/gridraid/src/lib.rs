//! Case files, attack files, the experiment harness and the command-line
//! front end built on `gridraid-core`.
//!
//! Everything a user sees (CLI arguments, CSV columns, attack files) uses
//! one-based measurement indices in the global order: from-flows, to-flows,
//! injections.

pub mod attack_file;
pub mod case;
pub mod commands;
pub mod exit;
pub mod experiments;
pub mod manifest;
pub mod table;
