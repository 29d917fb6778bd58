//! Rate perturbations of the input streams and the predicted-rate responses.

mod export;
mod inject;
mod regions;
mod regression;
mod response;

pub use export::{write_regression_csv, write_regression_text, write_sign_csv, write_surface_csv, write_tile_response_csv, SURFACE_CSV_HEADER};
pub use inject::{feasible_range, inject, inject_slice, theta, Injection};
pub use regions::{Region, Regions};
pub use regression::{ols_standardized, ses_regression, Coefficient, RegressionReport, SES_COVARIATES};
pub use response::{
    baseline, incident_inputs, perturbed_set, response, sign_pattern, sweep_surface, Baseline, ClassResponse, MeanSe,
    PerturbationSpec, Response, ResponseSurface, SignEntry, SurfaceCell, SurfaceParams,
};
