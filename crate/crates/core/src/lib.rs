//! Hybrid machine-learning and eigenspace-perturbation uncertainty
//! quantification for RANS Reynolds stresses.

pub mod cli;
pub mod data;
pub mod epm;
pub mod ml;
pub mod pipeline;
pub mod tensor;
