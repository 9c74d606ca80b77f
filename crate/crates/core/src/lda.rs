//! Matrix LDA: response coding, penalized fit, closed-form intercept
//! correction and the linear classification rule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore::{self, Mat};
use crate::solver::{self, FitConfig, InterceptRule, Loss, Penalty, SolverResult};

/// Relative size below which the mean-difference projection counts as zero.
const DEGENERATE_PROJECTION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub fn from_label(label: i64) -> Result<Self> {
        match label {
            1 => Ok(Class::One),
            2 => Ok(Class::Two),
            other => Err(Error::InvalidInput(format!("class label must be 1 or 2, got {other}"))),
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Class::One => 1,
            Class::Two => 2,
        }
    }
}

/// Labelled `p x q` samples stored as an `n x pq` design whose row `i` is `vec(X_i)`.
#[derive(Clone, Debug)]
pub struct Dataset {
    p: usize,
    q: usize,
    design: DMatrix<f64>,
    labels: Vec<Class>,
    n1: usize,
    n2: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Mat>, labels: Vec<Class>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no samples".into()))?;
        let (p, q) = first.shape();
        if let Some(bad) = samples.iter().find(|s| s.shape() != (p, q)) {
            return Err(Error::DimensionMismatch {
                expected: (p, q),
                found: bad.shape(),
            });
        }
        let n = samples.len();
        let mut design = DMatrix::zeros(n, p * q);
        for (i, s) in samples.iter().enumerate() {
            for (k, v) in s.as_col_major().iter().enumerate() {
                design[(i, k)] = *v;
            }
        }
        Self::from_design(p, q, design, labels)
    }

    pub fn from_design(p: usize, q: usize, design: DMatrix<f64>, labels: Vec<Class>) -> Result<Self> {
        if design.ncols() != p * q {
            return Err(Error::InvalidInput(format!(
                "design has {} columns, expected {}",
                design.ncols(),
                p * q
            )));
        }
        if design.nrows() == 0 {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        if labels.len() != design.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} samples",
                labels.len(),
                design.nrows()
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate value".into()));
        }
        let n1 = labels.iter().filter(|c| **c == Class::One).count();
        let n2 = labels.len() - n1;
        Ok(Dataset {
            p,
            q,
            design,
            labels,
            n1,
            n2,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn sample(&self, i: usize) -> Mat {
        let row: Vec<f64> = self.design.row(i).iter().copied().collect();
        Mat::wrap(DMatrix::from_vec(self.p, self.q, row))
    }

    /// `<X_i, B>` for every sample.
    pub fn projections(&self, b: &Mat) -> Result<Vec<f64>> {
        self.check_shape(b)?;
        let v = DVector::from_column_slice(b.as_col_major());
        Ok((&self.design * v).iter().copied().collect())
    }

    pub fn check_shape(&self, m: &Mat) -> Result<()> {
        if m.shape() != (self.p, self.q) {
            return Err(Error::DimensionMismatch {
                expected: (self.p, self.q),
                found: m.shape(),
            });
        }
        Ok(())
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidInput(format!(
                "both classes must be present (n1 = {}, n2 = {})",
                self.n1, self.n2
            )));
        }
        Ok(())
    }
}

/// `y_i = -n/n1` for class 1 and `+n/n2` for class 2.
pub fn encode_responses(d: &Dataset) -> Result<Vec<f64>> {
    d.require_both_classes()?;
    let n = d.n() as f64;
    let neg = -n / d.n1() as f64;
    let pos = n / d.n2() as f64;
    Ok(d.labels().iter().map(|c| if *c == Class::One { neg } else { pos }).collect())
}

/// `-1` for class 1 and `+1` for class 2, the coding the logistic loss expects.
pub fn signed_responses(d: &Dataset) -> Result<Vec<f64>> {
    d.require_both_classes()?;
    Ok(d.labels().iter().map(|c| if *c == Class::One { -1.0 } else { 1.0 }).collect())
}

/// Responses appropriate for the given loss.
pub fn responses_for(d: &Dataset, loss: Loss) -> Result<Vec<f64>> {
    match loss {
        Loss::Squared => encode_responses(d),
        Loss::Logistic => signed_responses(d),
    }
}

pub fn class_means(d: &Dataset) -> Result<(Mat, Mat)> {
    d.require_both_classes()?;
    let pq = d.p() * d.q();
    let mut sums = [vec![0.0; pq], vec![0.0; pq]];
    for (i, c) in d.labels().iter().enumerate() {
        let acc = &mut sums[(*c == Class::Two) as usize];
        for (k, a) in acc.iter_mut().enumerate() {
            *a += d.design()[(i, k)];
        }
    }
    let [s1, s2] = sums;
    let mean = |s: Vec<f64>, count: usize| {
        Mat::wrap(DMatrix::from_vec(d.p(), d.q(), s.into_iter().map(|v| v / count as f64).collect()))
    };
    Ok((mean(s1, d.n1()), mean(s2, d.n2())))
}

/// `vec(B)^T Sigma vec(B)` for the pooled within-class covariance with
/// denominator `n - 2`, without forming `Sigma`.
pub fn pooled_quadratic_form(d: &Dataset, b: &Mat) -> Result<f64> {
    d.require_both_classes()?;
    if d.n() <= 2 {
        return Err(Error::InvalidInput(format!(
            "pooled covariance needs more than two samples, got {}",
            d.n()
        )));
    }
    let (mu1, mu2) = class_means(d)?;
    let proj = d.projections(b)?;
    let centers = [mu1.inner(b), mu2.inner(b)];
    let ss: f64 = proj
        .iter()
        .zip(d.labels())
        .map(|(s, c)| (s - centers[(*c == Class::Two) as usize]).powi(2))
        .sum();
    Ok(ss / (d.n() - 2) as f64)
}

/// Closed-form LDA intercept for direction `B`, orienting `B` so the class-2
/// mean projects above the class-1 mean. Returns `(beta0_tilde, b_oriented)`.
pub fn optimal_intercept(d: &Dataset, b: &Mat) -> Result<(f64, Mat)> {
    d.check_shape(b)?;
    let (mu1, mu2) = class_means(d)?;
    let diff = &mu2 - &mu1;
    let proj = diff.inner(b);
    let scale = diff.frobenius_norm() * b.frobenius_norm();
    if scale == 0.0 || proj.abs() <= DEGENERATE_PROJECTION * scale {
        return Err(Error::DegenerateDirection);
    }
    let (b, proj) = if proj > 0.0 { (b.clone(), proj) } else { (b.scale(-1.0), -proj) };
    let quad = pooled_quadratic_form(d, &b)?;
    let midpoint = (&mu1 + &mu2).inner(&b) / 2.0;
    let shift = quad / proj * (d.n2() as f64 / d.n1() as f64).ln();
    Ok((-midpoint + shift, b))
}

/// Summary of the solver run behind a model.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDiagnostics {
    pub beta0_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub final_grad_map_norm: f64,
}

impl From<&SolverResult> for FitDiagnostics {
    fn from(r: &SolverResult) -> Self {
        FitDiagnostics {
            beta0_hat: r.beta0_hat,
            iterations: r.iterations,
            converged: r.converged,
            final_objective: r.final_objective(),
            final_grad_map_norm: r.final_grad_map_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminantModel {
    pub b_hat: Mat,
    pub beta0_tilde: f64,
    pub omega: f64,
    pub rank: usize,
    pub singulars: Vec<f64>,
    pub loss: Loss,
    pub penalty: Penalty,
    pub seed: u64,
    pub diagnostics: FitDiagnostics,
}

impl DiscriminantModel {
    /// `<X, B> + beta0`.
    pub fn score(&self, x: &Mat) -> Result<f64> {
        if x.shape() != self.b_hat.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.b_hat.shape(),
                found: x.shape(),
            });
        }
        Ok(x.inner(&self.b_hat) + self.beta0_tilde)
    }

    pub fn scores(&self, d: &Dataset) -> Result<Vec<f64>> {
        let mut s = d.projections(&self.b_hat)?;
        s.iter_mut().for_each(|v| *v += self.beta0_tilde);
        Ok(s)
    }

    pub fn predict(&self, d: &Dataset) -> Result<Vec<Class>> {
        Ok(self.scores(d)?.into_iter().map(class_of_score).collect())
    }

    /// Fraction of samples in `d` whose predicted class differs from the label.
    pub fn error_rate(&self, d: &Dataset) -> Result<f64> {
        let pred = self.predict(d)?;
        let wrong = pred.iter().zip(d.labels()).filter(|(a, b)| a != b).count();
        Ok(wrong as f64 / d.n() as f64)
    }
}

/// Class 2 iff the score is strictly positive.
pub fn class_of_score(score: f64) -> Class {
    if score > 0.0 {
        Class::Two
    } else {
        Class::One
    }
}

pub fn classify(m: &DiscriminantModel, x: &Mat) -> Result<Class> {
    m.score(x).map(class_of_score)
}

/// Turns a solver result into a classifier, applying the configured intercept rule.
/// A zero direction keeps the solver intercept: the rule is then a constant.
pub fn model_from_fit(d: &Dataset, cfg: &FitConfig, res: &SolverResult) -> Result<DiscriminantModel> {
    let (beta0_tilde, b_hat) = if res.b_hat.is_zero() || cfg.intercept == InterceptRule::Solver {
        (res.beta0_hat, res.b_hat.clone())
    } else {
        optimal_intercept(d, &res.b_hat)?
    };
    Ok(DiscriminantModel {
        b_hat,
        beta0_tilde,
        omega: cfg.omega,
        rank: matcore::numerical_rank(&res.singulars),
        singulars: res.singulars.clone(),
        loss: cfg.loss,
        penalty: cfg.penalty,
        seed: cfg.seed,
        diagnostics: FitDiagnostics::from(res),
    })
}

/// Response coding, penalized fit and intercept correction at a single `omega`.
pub fn fit_matrix_lda(d: &Dataset, cfg: &FitConfig) -> Result<DiscriminantModel> {
    let y = responses_for(d, cfg.loss)?;
    let res = solver::fit_penalized(d, &y, cfg)?;
    model_from_fit(d, cfg, &res)
}
