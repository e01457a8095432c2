//! Rolling-origin conformal prediction intervals for time series, with
//! data-driven window selection and a synthetic lab for window scaling laws.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod calibration;
pub mod io;
pub mod lab;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod rolling;
pub mod selection;
pub mod series;
pub mod theory;
