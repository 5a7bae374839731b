//! Rule mining, directive rules and chained knowledge-edit expansion.

pub mod alignment;
pub mod chain;
pub mod cli;
pub mod dataset;
pub mod dsl;
pub mod eval;
pub mod miner;
pub mod oracle;
pub mod store;
