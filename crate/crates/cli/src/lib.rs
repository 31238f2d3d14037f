//! Configuration, orchestration, persistence and reporting for `fklab`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod verify;
