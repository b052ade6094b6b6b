#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod cime_io;
pub mod contingency;
mod dsu;
pub mod estimation;
pub mod factor_graph;
pub mod grid_model;
pub mod ntp;
pub mod powerflow;
