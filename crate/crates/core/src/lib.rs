pub mod asp;
pub(crate) mod chart;
pub mod data;
pub mod domain;
pub mod error;
pub mod harness;
pub mod kwik;
pub mod nnls;
pub mod ol_predictors;
pub mod op_predictors;
pub mod placement_oracle;
pub mod quad;
