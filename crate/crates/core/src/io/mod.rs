// SPDX-License-Identifier: MIT OR Apache-2.0

//! File formats, manifests, reports and the batch pipeline.

pub mod json;
pub mod manifest;
pub mod matrix_file;
pub mod pipeline;

pub use manifest::{Manifest, ManifestEntry};
pub use matrix_file::{read_matrix, write_matrix, Dtype};
pub use pipeline::{
    run_diagnose, run_eval, run_gen, run_landscape, run_oracle, BinsOption, DiagnoseOptions,
    DiagnoseReport, EvalOptions, EvalReport, LandscapeOptions, LandscapeReport, LandscapeSource,
    OracleReport,
};
