//! Matrix linear discriminant analysis by nuclear-norm penalized least squares.
//!
//! Two-class image covariates `X_i` (each `p x q`) are regressed on coded
//! class labels with a nuclear-norm penalty on the coefficient matrix, the
//! fit is solved by accelerated proximal gradient with singular value
//! thresholding, and the intercept is replaced by the closed-form LDA
//! intercept before classifying with `<X, B> + beta0 > 0`.
//!
//! Modules:
//! - [`matcore`]: `vec` convention, norms, proximal operators
//! - [`solver`]: FISTA for squared/logistic loss with nuclear/lasso penalty
//! - [`lda`]: datasets, response coding, intercept correction, classification
//! - [`tuning`]: regularization paths and BIC selection
//! - [`simgen`]: synthetic studies and Monte Carlo evaluation
//! - [`io`]: matrix, manifest, model and report files; PGM rendering

pub mod error;
pub mod io;
pub mod lda;
pub mod matcore;
pub mod simgen;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use lda::{classify, fit_matrix_lda, Class, Dataset, DiscriminantModel};
pub use matcore::{Mat, SvdFactors};
pub use simgen::{run_monte_carlo, EvalReport, Shape, SignalSpec, StudySpec};
pub use solver::{fit_penalized, FitConfig, InterceptRule, Loss, Penalty, SolverResult, StepRule};
pub use tuning::{fit_path, PathResult};
