//! Concrete finite-sum problems.

mod linear_model;
mod quadratic;

pub use linear_model::{
    logistic_component, logistic_derivative, logistic_loss, logistic_smoothness,
    nonconvex_regularizer, regularizer_smoothness, LinearModelProblem, Loss, RegularizerParams,
};
pub use quadratic::{make_pl_quadratic, PlQuadratic};
