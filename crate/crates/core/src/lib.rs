//! Joint planning of low-altitude air corridors and ISAC base-station
//! deployment over channel knowledge maps.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ckm;
pub mod grid;
pub mod ilp;
pub mod metrics;
pub mod scene;
pub mod planner;
pub mod cli;
