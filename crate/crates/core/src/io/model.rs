use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::{DiscriminantModel, FitDiagnostics};
use crate::matcore::Mat;

pub const MODEL_VERSION: u32 = 1;

/// On-disk form of a fitted discriminant model. Floats are written in
/// shortest round-trip form, so loading reproduces every bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub p: usize,
    pub q: usize,
    /// Row-major entries of the coefficient matrix.
    pub b_hat: Vec<f64>,
    pub beta0_tilde: f64,
    pub omega: f64,
    pub rank: usize,
    pub singulars: Vec<f64>,
    pub loss: String,
    pub penalty: String,
    pub iterations: usize,
    pub converged: bool,
    pub beta0_hat: f64,
    pub final_objective: f64,
    pub final_grad_map_norm: f64,
    pub seed: u64,
}

impl ModelFile {
    pub fn from_model(m: &DiscriminantModel) -> Self {
        ModelFile {
            format_version: MODEL_VERSION,
            p: m.b_hat.rows(),
            q: m.b_hat.cols(),
            b_hat: m.b_hat.to_row_major(),
            beta0_tilde: m.beta0_tilde,
            omega: m.omega,
            rank: m.rank,
            singulars: m.singulars.clone(),
            loss: m.loss.to_string(),
            penalty: m.penalty.to_string(),
            iterations: m.diagnostics.iterations,
            converged: m.diagnostics.converged,
            beta0_hat: m.diagnostics.beta0_hat,
            final_objective: m.diagnostics.final_objective,
            final_grad_map_norm: m.diagnostics.final_grad_map_norm,
            seed: m.seed,
        }
    }

    pub fn to_model(&self) -> Result<DiscriminantModel> {
        Ok(DiscriminantModel {
            b_hat: Mat::from_row_major(self.p, self.q, self.b_hat.clone())?,
            beta0_tilde: self.beta0_tilde,
            omega: self.omega,
            rank: self.rank,
            singulars: self.singulars.clone(),
            loss: self.loss.parse()?,
            penalty: self.penalty.parse()?,
            seed: self.seed,
            diagnostics: FitDiagnostics {
                beta0_hat: self.beta0_hat,
                iterations: self.iterations,
                converged: self.converged,
                final_objective: self.final_objective,
                final_grad_map_norm: self.final_grad_map_norm,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ModelFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if m.format_version != MODEL_VERSION {
            return Err(Error::parse(path, format!("unsupported model format_version {}", m.format_version)));
        }
        m.to_model().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(m)
    }
}

pub fn save_model(m: &DiscriminantModel, path: impl AsRef<Path>) -> Result<()> {
    ModelFile::from_model(m).save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DiscriminantModel> {
    ModelFile::load(path)?.to_model()
}
