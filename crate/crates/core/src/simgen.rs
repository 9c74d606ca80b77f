//! Synthetic two-class matrix data: binary image signals, separable AR(1)
//! covariance, and the Monte Carlo evaluation loop.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lda::{Class, Dataset};
use crate::matcore::Mat;
use crate::solver::FitConfig;
use crate::tuning;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Cross,
    Triangle,
    Butterfly,
}

impl Shape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::Cross => "cross",
            Shape::Triangle => "triangle",
            Shape::Butterfly => "butterfly",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(Shape::Cross),
            "triangle" => Ok(Shape::Triangle),
            "butterfly" => Ok(Shape::Butterfly),
            other => Err(Error::InvalidInput(format!("unknown shape '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalSpec {
    pub shape: Shape,
    pub p: usize,
    pub q: usize,
    pub amplitude: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            shape: Shape::Cross,
            p: 64,
            q: 64,
            amplitude: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySpec {
    pub signal: SignalSpec,
    pub n: usize,
    pub pi1: f64,
    pub pi2: f64,
    pub rho: f64,
    pub test_size: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            signal: SignalSpec::default(),
            n: 200,
            pi1: 0.5,
            pi2: 0.5,
            rho: 0.5,
            test_size: 1000,
            replicates: 100,
            seed: 0,
        }
    }
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.pi1) || !in_unit(self.pi2) || (self.pi1 + self.pi2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "class weights must lie in (0, 1) and sum to 1, got ({}, {})",
                self.pi1, self.pi2
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !self.signal.amplitude.is_finite() {
            return Err(Error::InvalidInput("signal amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Deterministic split: `n1 = round(pi1 * count)`.
    pub fn class_sizes(&self, count: usize) -> Result<(usize, usize)> {
        let n1 = (self.pi1 * count as f64).round() as usize;
        let n1 = n1.min(count);
        let n2 = count - n1;
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput(format!(
                "class split of {count} samples with pi1 = {} leaves a class empty",
                self.pi1
            )));
        }
        Ok((n1, n2))
    }
}

/// Binary image signal with entries in `{0, amplitude}`.
pub fn make_signal(spec: &SignalSpec) -> Result<Mat> {
    let (p, q) = (spec.p, spec.q);
    if p < 8 || q < 8 {
        return Err(Error::InvalidInput(format!("signal needs p, q >= 8, got {p}x{q}")));
    }
    let (pf, qf) = (p as f64, q as f64);
    let band = |v: usize, len: f64| (v as f64) >= 0.45 * len && (v as f64) < 0.55 * len;
    let mask = |i: usize, j: usize| -> bool {
        let (ci, cj) = (i as f64 + 0.5, j as f64 + 0.5);
        match spec.shape {
            // A full-length row band plus a full-length column band: rank 2.
            Shape::Cross => band(i, pf) || band(j, qf),
            Shape::Triangle => {
                let top = 0.2 * pf;
                let bottom = 0.8 * pf;
                if (i as f64) < top || (i as f64) >= bottom {
                    return false;
                }
                let t = (i as f64 - top) / (bottom - top);
                (cj - 0.5 * qf).abs() <= t * 0.3 * qf + 0.5
            }
            Shape::Butterfly => {
                let left = 0.2 * qf;
                let right = 0.8 * qf;
                if (j as f64) < left || (j as f64) >= right {
                    return false;
                }
                let s = (cj - 0.5 * qf).abs() / (0.3 * qf);
                (ci - 0.5 * pf).abs() <= s * 0.2 * pf + 0.5
            }
        }
    };
    Ok(Mat::from_fn(p, q, |i, j| if mask(i, j) { spec.amplitude } else { 0.0 }))
}

/// `K[i, j] = rho^|i - j|`.
pub fn ar_cov(m: usize, rho: f64) -> Mat {
    Mat::from_fn(m, m, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Closed-form lower Cholesky factor of the AR(1) correlation matrix.
pub fn ar_chol(m: usize, rho: f64) -> Result<Mat> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("AR parameter must satisfy |rho| < 1, got {rho}")));
    }
    let tail = (1.0 - rho * rho).sqrt();
    Ok(Mat::from_fn(m, m, |i, j| {
        if j > i {
            0.0
        } else if j == 0 {
            rho.powi(i as i32)
        } else {
            tail * rho.powi((i - j) as i32)
        }
    }))
}

/// `count` draws of `mean + Lp Z Lq^T` with `Z` standard normal, so that
/// `cov(vec X) = (Lq Lq^T) kron (Lp Lp^T)`.
pub fn sample_class<R: Rng + ?Sized>(count: usize, mean: &Mat, lp: &Mat, lq: &Mat, rng: &mut R) -> Result<Vec<Mat>> {
    let (p, q) = mean.shape();
    if lp.shape() != (p, p) {
        return Err(Error::DimensionMismatch {
            expected: (p, p),
            found: lp.shape(),
        });
    }
    if lq.shape() != (q, q) {
        return Err(Error::DimensionMismatch {
            expected: (q, q),
            found: lq.shape(),
        });
    }
    let lq_t = lq.as_matrix().transpose();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DMatrix::<f64>::from_fn(p, q, |_, _| rng.sample(StandardNormal));
        let x = lp.as_matrix() * z * &lq_t + mean.as_matrix();
        out.push(Mat::wrap(x));
    }
    Ok(out)
}

/// Quantities shared by every replicate of a study.
#[derive(Clone, Debug)]
pub struct StudyModel {
    pub signal: Mat,
    /// Class-2 mean `Kp B0 Kq`, the matrix form of `Sigma vec(B0)`.
    pub mean2: Mat,
    pub lp: Mat,
    pub lq: Mat,
}

impl StudyModel {
    pub fn new(spec: &StudySpec) -> Result<Self> {
        spec.validate()?;
        let signal = make_signal(&spec.signal)?;
        let (p, q) = signal.shape();
        let mean2 = &(&ar_cov(p, spec.rho) * &signal) * &ar_cov(q, spec.rho);
        Ok(StudyModel {
            signal,
            mean2,
            lp: ar_chol(p, spec.rho)?,
            lq: ar_chol(q, spec.rho)?,
        })
    }

    /// Squared Mahalanobis distance between the class means, `vec(B0)^T Sigma vec(B0)`.
    pub fn separation_sq(&self) -> f64 {
        self.signal.inner(&self.mean2)
    }

    pub fn draw<R: Rng + ?Sized>(&self, spec: &StudySpec, count: usize, rng: &mut R) -> Result<Dataset> {
        let (n1, n2) = spec.class_sizes(count)?;
        let zero = Mat::zeros(self.signal.rows(), self.signal.cols());
        let mut samples = sample_class(n1, &zero, &self.lp, &self.lq, rng)?;
        samples.extend(sample_class(n2, &self.mean2, &self.lp, &self.lq, rng)?);
        let labels = std::iter::repeat(Class::One).take(n1).chain(std::iter::repeat(Class::Two).take(n2)).collect();
        Dataset::new(samples, labels)
    }
}

/// Training set of `spec.n` and test set of `spec.test_size` samples from the study law.
pub fn simulate_dataset<R: Rng + ?Sized>(spec: &StudySpec, rng: &mut R) -> Result<(Dataset, Dataset)> {
    let model = StudyModel::new(spec)?;
    simulate_with(&model, spec, rng)
}

pub fn simulate_with<R: Rng + ?Sized>(model: &StudyModel, spec: &StudySpec, rng: &mut R) -> Result<(Dataset, Dataset)> {
    let train = model.draw(spec, spec.n, rng)?;
    let test = model.draw(spec, spec.test_size, rng)?;
    Ok((train, test))
}

fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

/// Misclassification risk of the Bayes rule for the two-Gaussian study law.
pub fn bayes_error(spec: &StudySpec) -> Result<f64> {
    let model = StudyModel::new(spec)?;
    let delta = model.separation_sq().max(0.0).sqrt();
    if delta == 0.0 {
        return Ok(spec.pi1.min(spec.pi2));
    }
    // The rule calls class 2 when the discriminant plus log(pi2 / pi1) is
    // positive, which moves the threshold away from the likelier class.
    let shift = (spec.pi2 / spec.pi1).ln() / delta;
    Ok(spec.pi1 * std_normal_cdf(-delta / 2.0 + shift) + spec.pi2 * std_normal_cdf(-delta / 2.0 - shift))
}

/// Per-replicate seed stream.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(replicate as u64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub rate: f64,
    pub rank: usize,
    pub frob_error: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_rate: f64,
    /// `None` when fewer than two replicates succeeded.
    pub std_error: Option<f64>,
    pub per_replicate_rates: Vec<f64>,
    pub mean_rank: f64,
    pub mean_frob_error: f64,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<(usize, String)>,
}

impl EvalReport {
    pub fn from_outcomes(replicates: Vec<ReplicateOutcome>, failures: Vec<(usize, String)>) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::DegenerateData(format!(
                "all {} replicates failed",
                failures.len()
            )));
        }
        let k = replicates.len() as f64;
        let rates: Vec<f64> = replicates.iter().map(|r| r.rate).collect();
        let mean_rate = rates.iter().sum::<f64>() / k;
        let std_error = (replicates.len() > 1).then(|| {
            let var = rates.iter().map(|r| (r - mean_rate).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        });
        Ok(EvalReport {
            mean_rate,
            std_error,
            per_replicate_rates: rates,
            mean_rank: replicates.iter().map(|r| r.rank as f64).sum::<f64>() / k,
            mean_frob_error: replicates.iter().map(|r| r.frob_error).sum::<f64>() / k,
            replicates,
            failures,
        })
    }

    /// Mean of `||B_hat - B0||_F^2` over replicates.
    pub fn mean_sq_frob_error(&self) -> f64 {
        self.replicates.iter().map(|r| r.frob_error.powi(2)).sum::<f64>() / self.replicates.len() as f64
    }

    /// Fraction of replicates whose fitted rank equals `rank`.
    pub fn rank_hit_rate(&self, rank: usize) -> f64 {
        self.replicates.iter().filter(|r| r.rank == rank).count() as f64 / self.replicates.len() as f64
    }
}

/// One replicate: simulate, tune over the BIC path, evaluate on the test set.
pub fn run_replicate(model: &StudyModel, spec: &StudySpec, cfg: &FitConfig, index: usize) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(spec.seed, index);
    let (train, test) = simulate_with(model, spec, &mut rng)?;
    let path = tuning::tune(&train, cfg)?;
    let fitted = &path.selected;
    Ok(ReplicateOutcome {
        index,
        rate: fitted.error_rate(&test)?,
        rank: fitted.rank,
        frob_error: (&fitted.b_hat - &model.signal).frobenius_norm(),
        omega: fitted.omega,
    })
}

pub fn run_monte_carlo(spec: &StudySpec, cfg: &FitConfig) -> Result<EvalReport> {
    if spec.replicates == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    cfg.validate()?;
    let model = StudyModel::new(spec)?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&model, spec, cfg, r))
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    EvalReport::from_outcomes(ok, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar_chol_small_cases() {
        let l = ar_chol(2, 0.5).unwrap();
        let expected = Mat::from_rows(&[[1.0, 0.0], [0.5, 0.75f64.sqrt()]]).unwrap();
        assert!((&l - &expected).frobenius_norm() < 1e-15);
        assert_eq!(ar_chol(5, 0.0).unwrap(), Mat::identity(5));
        assert!(ar_chol(3, 1.0).is_err());
        assert!(ar_chol(3, -1.2).is_err());
    }

    #[test]
    fn signals_are_binary() {
        for shape in [Shape::Cross, Shape::Triangle, Shape::Butterfly] {
            let s = make_signal(&SignalSpec {
                shape,
                ..SignalSpec::default()
            })
            .unwrap();
            assert!(s.as_col_major().iter().all(|v| *v == 0.0 || *v == 0.05));
            assert!(s.count_nonzero() > 0);
        }
        assert!(make_signal(&SignalSpec {
            p: 7,
            ..SignalSpec::default()
        })
        .is_err());
    }

    #[test]
    fn cross_is_symmetric_rank_two() {
        let s = make_signal(&SignalSpec::default()).unwrap();
        assert_eq!(s, s.transpose());
        assert_eq!(s.rank(), 2);
    }

    #[test]
    fn triangle_and_butterfly_are_not_low_rank() {
        for shape in [Shape::Triangle, Shape::Butterfly] {
            let s = make_signal(&SignalSpec {
                shape,
                ..SignalSpec::default()
            })
            .unwrap();
            assert!(s.rank() > 10, "{shape} rank {}", s.rank());
        }
    }

    #[test]
    fn zero_factors_reproduce_mean() {
        let mean = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = sample_class(4, &mean, &Mat::zeros(3, 3), &Mat::zeros(2, 2), &mut rng).unwrap();
        assert!(draws.iter().all(|d| *d == mean));
    }

    #[test]
    fn class_split_is_deterministic() {
        let spec = StudySpec {
            pi1: 0.75,
            pi2: 0.25,
            ..StudySpec::default()
        };
        assert_eq!(spec.class_sizes(200).unwrap(), (150, 50));
        assert_eq!(spec.class_sizes(1000).unwrap(), (750, 250));
        assert!(spec.class_sizes(1).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = StudySpec {
            pi1: 0.6,
            pi2: 0.6,
            ..StudySpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = StudySpec {
            rho: 1.0,
            ..StudySpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_covariance_mean_is_signal() {
        let spec = StudySpec {
            signal: SignalSpec {
                p: 8,
                q: 8,
                ..SignalSpec::default()
            },
            rho: 0.0,
            ..StudySpec::default()
        };
        let m = StudyModel::new(&spec).unwrap();
        assert_eq!(m.mean2, m.signal);
    }

    #[test]
    fn bayes_error_limits() {
        let zero = StudySpec {
            signal: SignalSpec {
                amplitude: 0.0,
                p: 8,
                q: 8,
                ..SignalSpec::default()
            },
            ..StudySpec::default()
        };
        assert_eq!(bayes_error(&zero).unwrap(), 0.5);
        let unbalanced = StudySpec {
            pi1: 0.75,
            pi2: 0.25,
            ..zero.clone()
        };
        assert_eq!(bayes_error(&unbalanced).unwrap(), 0.25);
        let strong = StudySpec {
            signal: SignalSpec {
                amplitude: 50.0,
                p: 8,
                q: 8,
                ..SignalSpec::default()
            },
            ..StudySpec::default()
        };
        assert!(bayes_error(&strong).unwrap() < 1e-12);

        // Knowing the priors can only help, and never does worse than always
        // guessing the likelier class.
        let weak = StudySpec {
            signal: SignalSpec {
                p: 8,
                q: 8,
                ..SignalSpec::default()
            },
            ..StudySpec::default()
        };
        let skewed = StudySpec {
            pi1: 0.75,
            pi2: 0.25,
            ..weak.clone()
        };
        let (b, s) = (bayes_error(&weak).unwrap(), bayes_error(&skewed).unwrap());
        assert!(s < b && s < 0.25, "balanced {b}, skewed {s}");
    }

    #[test]
    fn report_statistics() {
        let outcome = |index, rate| ReplicateOutcome {
            index,
            rate,
            rank: 2,
            frob_error: 1.0,
            omega: 0.1,
        };
        let single = EvalReport::from_outcomes(vec![outcome(0, 0.1)], vec![]).unwrap();
        assert_eq!(single.std_error, None);
        let r = EvalReport::from_outcomes(vec![outcome(0, 0.1), outcome(1, 0.3)], vec![(2, "x".into())]).unwrap();
        assert!((r.mean_rate - 0.2).abs() < 1e-15);
        // sample sd = 0.1414..., divided by sqrt(2)
        assert!((r.std_error.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r.failures.len(), 1);
        assert!(EvalReport::from_outcomes(vec![], vec![(0, "x".into())]).is_err());
    }
}
