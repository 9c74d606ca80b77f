//! Matrix files, dataset manifests, model files, images and reports.

pub mod manifest;
pub mod matrix;
pub mod model;
pub mod report;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use matrix::{load_matrix, load_matrix_bin, load_matrix_csv, render_pgm, save_matrix, save_matrix_bin, save_matrix_csv};
pub use model::{load_model, save_model, ModelFile};
pub use report::{Report, Section};
