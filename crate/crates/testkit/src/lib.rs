//! Independent reference implementations and fixtures for testing the
//! pipeline. Everything here favours the obvious algorithm over the fast one.

pub mod fixtures;
pub mod gen;
pub mod oracle;
