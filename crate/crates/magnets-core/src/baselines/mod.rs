//! Reference predictors: mean, linear family, and the capacity-matched CNN
//! with integrated-gradients attributions.

pub mod cnn;
pub mod linear;

pub use cnn::{integrated_gradients, CnnModel};
pub use linear::{fit_lasso, fit_ols, fit_ridge, LinearBaseline, MeanModel, Regularization};
