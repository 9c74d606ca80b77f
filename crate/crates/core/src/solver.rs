//! Accelerated proximal gradient (FISTA) for penalized empirical risk over
//! an unpenalized intercept and a matrix coefficient.
//!
//! The smooth part is either the halved mean squared error or the mean
//! logistic loss; the penalty is `omega * ||B||_*` (handled by singular value
//! thresholding) or `omega * ||B||_{1,1}` (entrywise soft thresholding). The
//! intercept rides along in the same gradient step and is never shrunk.
//!
//! With `restart` enabled the iteration is the monotone variant: a candidate
//! that raises the objective is rejected, momentum is reset, and the next
//! step is a plain proximal step from the last accepted point. The recorded
//! objective trace is then nonincreasing.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lda::Dataset;
use crate::matcore::{self, Mat, SvdFactors};

const POWER_REL_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 5_000;
const LIPSCHITZ_INFLATION: f64 = 1.01;
const CONSECUTIVE_HITS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loss {
    Squared,
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Penalty {
    Nuclear,
    Lasso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepRule {
    FixedLipschitz,
    Backtracking,
}

/// Which intercept a fitted discriminant model classifies with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InterceptRule {
    /// Closed-form training-error-optimal intercept computed after the fit.
    Optimal,
    /// The intercept returned by the solver, unchanged.
    Solver,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::InvalidInput(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Loss { Squared => "squared", Logistic => "logistic" });
text_enum!(Penalty { Nuclear => "nuclear", Lasso => "lasso" });
text_enum!(StepRule { FixedLipschitz => "fixed_lipschitz", Backtracking => "backtracking" });
text_enum!(InterceptRule { Optimal => "optimal", Solver => "solver" });

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub loss: Loss,
    pub penalty: Penalty,
    pub omega: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub step_rule: StepRule,
    pub backtrack_factor: f64,
    pub restart: bool,
    /// `false` drops the momentum term, giving plain ISTA.
    pub accelerated: bool,
    pub intercept: InterceptRule,
    /// Number of regularization values on a tuning path.
    pub grid_size: usize,
    /// Smallest path value as a fraction of the null-solution threshold.
    pub grid_span: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            loss: Loss::Squared,
            penalty: Penalty::Nuclear,
            omega: 1e-2,
            max_iter: 2000,
            rel_tol: 1e-7,
            step_rule: StepRule::FixedLipschitz,
            backtrack_factor: 0.5,
            restart: true,
            accelerated: true,
            intercept: InterceptRule::Optimal,
            grid_size: 20,
            grid_span: 0.01,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_omega(&self, omega: f64) -> Self {
        FitConfig {
            omega,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidInput("rel_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput("backtrack_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub b_hat: Mat,
    pub beta0_hat: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_map_norm: f64,
    /// Singular values of `b_hat`, nonincreasing.
    pub singulars: Vec<f64>,
    /// Step-size constant in effect at termination.
    pub lipschitz: f64,
}

impl SolverResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting objective")
    }

    pub fn rank(&self) -> usize {
        matcore::numerical_rank(&self.singulars)
    }
}

fn check_inputs(data: &Dataset, y: &[f64], b: &Mat) -> Result<()> {
    if y.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "response length {} does not match {} samples",
            y.len(),
            data.n()
        )));
    }
    if b.shape() != (data.p(), data.q()) {
        return Err(Error::DimensionMismatch {
            expected: (data.p(), data.q()),
            found: b.shape(),
        });
    }
    Ok(())
}

fn check_responses(y: &[f64], loss: Loss) -> Result<()> {
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("response {k} is not finite")));
    }
    if loss == Loss::Logistic {
        if let Some(k) = y.iter().position(|v| v.abs() != 1.0) {
            return Err(Error::InvalidInput(format!(
                "logistic responses must be -1 or +1, response {k} is {}",
                y[k]
            )));
        }
    }
    Ok(())
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth part of the objective evaluated from fitted values `beta0 + <X_i, B>`.
fn smooth_from_fitted(y: &[f64], fitted: &DVector<f64>, loss: Loss) -> f64 {
    let n = y.len() as f64;
    match loss {
        Loss::Squared => {
            y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - fi).powi(2)).sum::<f64>() / (2.0 * n)
        }
        Loss::Logistic => {
            y.iter().zip(fitted.iter()).map(|(yi, fi)| softplus(-yi * fi)).sum::<f64>() / n
        }
    }
}

/// Generalized residuals `w_i`; the smooth gradient is `-(1/n) sum w_i (1, X_i)`.
fn working_residuals(y: &[f64], fitted: &DVector<f64>, loss: Loss) -> DVector<f64> {
    DVector::from_iterator(
        y.len(),
        y.iter().zip(fitted.iter()).map(|(yi, fi)| match loss {
            Loss::Squared => yi - fi,
            Loss::Logistic => yi * sigmoid(-yi * fi),
        }),
    )
}

fn fitted_values(data: &Dataset, beta0: f64, b: &DVector<f64>) -> DVector<f64> {
    let mut f = data.design() * b;
    f.add_scalar_mut(beta0);
    f
}

fn penalty_value(b: &Mat, penalty: Penalty) -> f64 {
    match penalty {
        Penalty::Nuclear => matcore::nuclear_norm(b),
        Penalty::Lasso => b.l1_norm(),
    }
}

/// Smooth part of the objective alone.
pub fn smooth_loss(data: &Dataset, y: &[f64], beta0: f64, b: &Mat, loss: Loss) -> Result<f64> {
    check_inputs(data, y, b)?;
    check_responses(y, loss)?;
    let bv = DVector::from_column_slice(b.as_col_major());
    Ok(smooth_from_fitted(y, &fitted_values(data, beta0, &bv), loss))
}

/// Penalized empirical risk at `(beta0, B)`.
pub fn objective(data: &Dataset, y: &[f64], beta0: f64, b: &Mat, cfg: &FitConfig) -> Result<f64> {
    let smooth = smooth_loss(data, y, beta0, b, cfg.loss)?;
    Ok(smooth + cfg.omega * penalty_value(b, cfg.penalty))
}

/// Gradient of the smooth part with respect to `B` and `beta0`.
pub fn smooth_gradient(data: &Dataset, y: &[f64], beta0: f64, b: &Mat, loss: Loss) -> Result<(Mat, f64)> {
    check_inputs(data, y, b)?;
    check_responses(y, loss)?;
    let bv = DVector::from_column_slice(b.as_col_major());
    let w = working_residuals(y, &fitted_values(data, beta0, &bv), loss);
    let (gb, g0) = gradient_from_residuals(data, &w);
    let gb = Mat::wrap(DMatrix::from_column_slice(data.p(), data.q(), gb.as_slice()));
    Ok((gb, g0))
}

fn gradient_from_residuals(data: &Dataset, w: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = data.n() as f64;
    let gb = data.design().tr_mul(w) * (-1.0 / n);
    (gb, -w.sum() / n)
}

/// `(1/n) * lambda_max` of the Gram operator of the rows `[1, vec(X_i)]`,
/// inflated by 1%, computed matrix-free by power iteration.
pub fn lipschitz_estimate(data: &Dataset) -> f64 {
    LIPSCHITZ_INFLATION * design_operator_norm(data, true)
}

/// `lambda_max(Z^T Z) / n` for `Z = [1, X]` (or `Z = X` without the intercept column),
/// by power iteration on `Z Z^T` in sample space.
pub fn design_operator_norm(data: &Dataset, intercept: bool) -> f64 {
    let x = data.design();
    let n = data.n();
    let apply = |u: &DVector<f64>| -> DVector<f64> {
        let mut out = x * x.tr_mul(u);
        if intercept {
            out.add_scalar_mut(u.sum());
        }
        out
    };
    let mut u = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666_246_692_7).fract());
    u.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = apply(&u);
        let next = u.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        u = w / norm;
        let done = (next - lambda).abs() <= POWER_REL_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(u.dot(&apply(&u))) / n as f64
}

/// Starting point for a warm-started fit.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub beta0: f64,
    pub b: Mat,
}

/// Minimizes the penalized objective from a cold start.
pub fn fit_penalized(data: &Dataset, y: &[f64], cfg: &FitConfig) -> Result<SolverResult> {
    fit_penalized_from(data, y, cfg, None, None)
}

/// Default intercept at `B = 0`: the minimizer of the smooth part over `beta0` alone.
fn null_intercept(y: &[f64], loss: Loss) -> f64 {
    let n = y.len() as f64;
    match loss {
        Loss::Squared => y.iter().sum::<f64>() / n,
        Loss::Logistic => {
            let pos = y.iter().filter(|v| **v > 0.0).count() as f64;
            let neg = n - pos;
            if pos == 0.0 || neg == 0.0 {
                0.0
            } else {
                (pos / neg).ln()
            }
        }
    }
}

struct Iterate {
    beta0: f64,
    b: DVector<f64>,
    fitted: DVector<f64>,
}

impl Iterate {
    /// `self + m * (self - prev)`, fitted values included (they are affine in the parameters).
    fn extrapolate(&self, prev: &Iterate, m: f64) -> Iterate {
        Iterate {
            beta0: self.beta0 + m * (self.beta0 - prev.beta0),
            b: &self.b + (&self.b - &prev.b) * m,
            fitted: &self.fitted + (&self.fitted - &prev.fitted) * m,
        }
    }

    fn clone_point(&self) -> Iterate {
        Iterate {
            beta0: self.beta0,
            b: self.b.clone(),
            fitted: self.fitted.clone(),
        }
    }
}

/// Proximal map of `tau * penalty` on a column-major coefficient vector;
/// returns the result and its penalty value (without `tau`).
fn prox(v: &DVector<f64>, p: usize, q: usize, tau: f64, penalty: Penalty) -> (DVector<f64>, f64) {
    match penalty {
        Penalty::Nuclear => {
            let m = Mat::wrap(DMatrix::from_column_slice(p, q, v.as_slice()));
            let (out, shrunk) = matcore::svt_with_singulars(&m, tau);
            let norm = shrunk.iter().sum();
            (DVector::from_column_slice(out.as_col_major()), norm)
        }
        Penalty::Lasso => {
            let out = v.map(|x| matcore::soft(x, tau));
            let norm = out.iter().map(|x| x.abs()).sum();
            (out, norm)
        }
    }
}

/// Full-control entry point: optional warm start and a precomputed step constant
/// (`lipschitz_estimate`, before any loss-specific curvature scaling).
pub fn fit_penalized_from(
    data: &Dataset,
    y: &[f64],
    cfg: &FitConfig,
    start: Option<&WarmStart>,
    design_lipschitz: Option<f64>,
) -> Result<SolverResult> {
    cfg.validate()?;
    if data.n() < 2 {
        return Err(Error::InvalidInput("at least two samples are required".into()));
    }
    let (p, q) = (data.p(), data.q());
    if y.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "response length {} does not match {} samples",
            y.len(),
            data.n()
        )));
    }
    check_responses(y, cfg.loss)?;

    let curvature = match cfg.loss {
        Loss::Squared => 1.0,
        Loss::Logistic => 0.25,
    };
    let fixed_l = curvature * design_lipschitz.unwrap_or_else(|| lipschitz_estimate(data));
    let mut lip = match cfg.step_rule {
        StepRule::FixedLipschitz => fixed_l,
        // Largest squared row norm of [1, X] is a lower bound on lambda_max(Z^T Z).
        StepRule::Backtracking => {
            let x = data.design();
            let max_row = (0..data.n())
                .map(|i| 1.0 + x.row(i).norm_squared())
                .fold(0.0, f64::max);
            curvature * max_row / data.n() as f64
        }
    };
    if !(lip > 0.0 && lip.is_finite()) {
        return Err(Error::DegenerateData("step-size constant is not positive".into()));
    }

    let (beta0, b) = match start {
        Some(ws) => {
            if ws.b.shape() != (p, q) {
                return Err(Error::DimensionMismatch {
                    expected: (p, q),
                    found: ws.b.shape(),
                });
            }
            (ws.beta0, DVector::from_column_slice(ws.b.as_col_major()))
        }
        None => (null_intercept(y, cfg.loss), DVector::zeros(p * q)),
    };
    let fitted = fitted_values(data, beta0, &b);
    let mut x = Iterate { beta0, b, fitted };
    let start_mat = Mat::wrap(DMatrix::from_column_slice(p, q, x.b.as_slice()));
    let mut fx = smooth_from_fitted(y, &x.fitted, cfg.loss) + cfg.omega * penalty_value(&start_mat, cfg.penalty);
    if !fx.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut trace = vec![fx];
    let mut yk = x.clone_point();
    let mut t = 1.0_f64;
    let mut hits = 0;
    let mut rejected_last = false;
    let mut converged = false;
    let mut grad_map = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let w = working_residuals(y, &yk.fitted, cfg.loss);
        let (gb, g0) = gradient_from_residuals(data, &w);
        let smooth_y = smooth_from_fitted(y, &yk.fitted, cfg.loss);

        let (z, pen_z, smooth_z) = loop {
            let beta0_z = yk.beta0 - g0 / lip;
            let (b_z, pen) = prox(&(&yk.b - &gb / lip), p, q, cfg.omega / lip, cfg.penalty);
            let fitted_z = fitted_values(data, beta0_z, &b_z);
            let smooth_z = smooth_from_fitted(y, &fitted_z, cfg.loss);
            let z = Iterate {
                beta0: beta0_z,
                b: b_z,
                fitted: fitted_z,
            };
            if cfg.step_rule == StepRule::Backtracking && smooth_z.is_finite() {
                let db0 = z.beta0 - yk.beta0;
                let db = &z.b - &yk.b;
                let model = smooth_y + g0 * db0 + gb.dot(&db) + 0.5 * lip * (db0 * db0 + db.norm_squared());
                if smooth_z > model + 1e-12 * model.abs() {
                    lip /= cfg.backtrack_factor;
                    continue;
                }
            }
            break (z, pen, smooth_z);
        };

        let fz = smooth_z + cfg.omega * pen_z;
        if !fz.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        let step_b0 = z.beta0 - yk.beta0;
        grad_map = lip * (step_b0 * step_b0 + (&z.b - &yk.b).norm_squared()).sqrt();

        if cfg.restart && fz > fx {
            // Reject, reset momentum and take a plain proximal step from x next time.
            trace.push(fx);
            if rejected_last {
                converged = true;
                break;
            }
            rejected_last = true;
            t = 1.0;
            yk = x.clone_point();
            continue;
        }
        rejected_last = false;

        let rel = (fx - fz).abs() / fx.abs().max(f64::MIN_POSITIVE);
        let x_prev = std::mem::replace(&mut x, z);
        fx = fz;
        trace.push(fx);

        if cfg.accelerated {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            yk = x.extrapolate(&x_prev, (t - 1.0) / t_next);
            t = t_next;
        } else {
            yk = x.clone_point();
        }

        if rel < cfg.rel_tol {
            hits += 1;
            if hits >= CONSECUTIVE_HITS {
                converged = true;
                break;
            }
        } else {
            hits = 0;
        }
    }

    let b_hat = Mat::wrap(DMatrix::from_column_slice(p, q, x.b.as_slice()));
    let singulars = if b_hat.is_zero() {
        vec![0.0; p.min(q)]
    } else {
        SvdFactors::of(&b_hat).singulars
    };
    Ok(SolverResult {
        b_hat,
        beta0_hat: x.beta0,
        objective_trace: trace,
        iterations,
        converged,
        final_grad_map_norm: grad_map,
        singulars,
        lipschitz: lip,
    })
}
