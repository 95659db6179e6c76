#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod decision;
pub mod lob;
pub mod sim;
pub mod analytics;
pub mod parallel;
pub mod single_turn;
pub mod config_file;
pub mod cli;
