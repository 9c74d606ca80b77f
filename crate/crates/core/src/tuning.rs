//! Regularization paths over a decreasing `omega` grid with BIC selection.

use crate::error::{Error, Result};
use crate::lda::{self, Dataset, DiscriminantModel};
use crate::matcore::{self, Mat};
use crate::solver::{self, FitConfig, InterceptRule, Loss, Penalty, SolverResult, WarmStart};

/// Relative inflation of the null threshold so the first grid point is
/// null even after power-iteration round-off.
const NULL_THRESHOLD_MARGIN: f64 = 1e-9;

/// Smallest `omega` at which the penalized fit is `B = 0`: the dual norm of
/// the smooth gradient at the intercept-only fit.
pub fn null_threshold(d: &Dataset, loss: Loss, penalty: Penalty) -> Result<f64> {
    let y = lda::responses_for(d, loss)?;
    let n = d.n() as f64;
    let weights: Vec<f64> = match loss {
        Loss::Squared => {
            let ybar = y.iter().sum::<f64>() / n;
            y.iter().map(|v| v - ybar).collect()
        }
        Loss::Logistic => {
            let frac2 = d.n2() as f64 / n;
            y.iter().map(|v| if *v > 0.0 { 1.0 - frac2 } else { -frac2 }).collect()
        }
    };
    let w = nalgebra::DVector::from_vec(weights);
    let corr = d.design().tr_mul(&w) / n;
    let corr = Mat::from_col_major(d.p(), d.q(), corr.as_slice().to_vec())?;
    let dual = match penalty {
        Penalty::Nuclear => matcore::spectral_norm(&corr),
        Penalty::Lasso => corr.max_abs(),
    };
    Ok(dual * (1.0 + NULL_THRESHOLD_MARGIN))
}

/// `k` values log-spaced from the null threshold down to `span` times it.
pub fn omega_grid(d: &Dataset, loss: Loss, penalty: Penalty, k: usize, span: f64) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("grid needs at least 2 points, got {k}")));
    }
    if !(span > 0.0 && span < 1.0) {
        return Err(Error::InvalidInput(format!("grid span must lie in (0, 1), got {span}")));
    }
    let top = null_threshold(d, loss, penalty)?;
    if !(top > 0.0) {
        return Err(Error::DegenerateData(
            "responses are uncorrelated with every covariate; the null model is optimal for all omega".into(),
        ));
    }
    let step = span.ln() / (k - 1) as f64;
    let mut grid: Vec<f64> = (0..k).map(|i| top * (step * i as f64).exp()).collect();
    grid[k - 1] = top * span;
    Ok(grid)
}

/// `n log(rss / n) + log(n) df` with `df = rank (p + q - rank) + 1`.
pub fn bic_score(rss: f64, n: usize, rank: usize, p: usize, q: usize) -> Result<f64> {
    if rank > p.min(q) {
        return Err(Error::InvalidInput(format!("rank {rank} exceeds min({p}, {q})")));
    }
    bic_from_df(rss, n, nuclear_df(rank, p, q))
}

pub fn nuclear_df(rank: usize, p: usize, q: usize) -> f64 {
    (rank * (p + q - rank) + 1) as f64
}

/// `n log(rss / n) + log(n) df`.
pub fn bic_from_df(rss: f64, n: usize, df: f64) -> Result<f64> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::InvalidInput(format!("rss must be positive, got {rss}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let n_f = n as f64;
    Ok(n_f * (rss / n_f).ln() + n_f.ln() * df)
}

/// Parameter count of a rank-`r` fit plus the intercept.
pub fn degrees_of_freedom(res: &SolverResult, penalty: Penalty) -> f64 {
    let (p, q) = res.b_hat.shape();
    match penalty {
        Penalty::Nuclear => nuclear_df(res.rank(), p, q),
        Penalty::Lasso => (res.b_hat.count_nonzero() + 1) as f64,
    }
}

/// Average eigenvalue of the loss Hessian in coefficient space, i.e. the
/// curvature of an orthogonal design with the same total signal.
pub fn mean_curvature(d: &Dataset, loss: Loss) -> f64 {
    let x = d.design();
    let n = d.n() as f64;
    let mut total = 0.0;
    for col in x.column_iter() {
        let mean = col.sum() / n;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let c = total / (n * x.ncols() as f64);
    match loss {
        Loss::Squared => c,
        Loss::Logistic => 0.25 * c,
    }
}

/// Divergence of singular value thresholding at level `lambda`, given all
/// `min(p, q)` singular values of the matrix being thresholded.
pub fn svt_divergence(singulars: &[f64], lambda: f64, p: usize, q: usize) -> f64 {
    let gap = p.abs_diff(q) as f64;
    let mut df = 0.0;
    for (i, &si) in singulars.iter().enumerate() {
        if si <= lambda {
            continue;
        }
        df += 1.0 + gap * (1.0 - lambda / si);
        for (j, &sj) in singulars.iter().enumerate() {
            let denom = si * si - sj * sj;
            if j != i && denom.abs() > f64::EPSILON * si * si {
                df += 2.0 * si * (si - lambda) / denom;
            }
        }
    }
    df
}

/// Effective degrees of freedom of a nuclear-norm fit plus the intercept.
///
/// At a stationary point `B = svt(B - G / c, omega / c)` for any `c > 0`,
/// where `G` is the smooth gradient. Taking `c` as the mean curvature and
/// counting the divergence of that thresholding map gives the unbiased
/// estimate for orthogonal designs, which shrinks with the penalty instead
/// of charging every retained direction in full.
pub fn effective_df(d: &Dataset, y: &[f64], res: &SolverResult, loss: Loss, omega: f64) -> Result<f64> {
    let rank = res.rank();
    if rank == 0 {
        return Ok(1.0);
    }
    let c = mean_curvature(d, loss);
    if !(c > 0.0) {
        return Err(Error::DegenerateData("covariates have zero variance".into()));
    }
    let (p, q) = res.b_hat.shape();
    let lambda = omega / c;
    let (g, _) = solver::smooth_gradient(d, y, res.beta0_hat, &res.b_hat, loss)?;
    let pre = &res.b_hat - &g.scale(1.0 / c);
    let mut singulars = pre.singular_values();
    // Retained directions sit exactly lambda above the fitted values at
    // convergence; the rest are at most lambda.
    for (s, fitted) in singulars.iter_mut().zip(&res.singulars).take(rank) {
        *s = fitted + lambda;
    }
    for s in singulars.iter_mut().skip(rank) {
        *s = s.min(lambda);
    }
    Ok(1.0 + svt_divergence(&singulars, lambda, p, q))
}

#[derive(Clone, Debug)]
pub struct PathEntry {
    pub omega: f64,
    /// Model carrying the solver's own intercept.
    pub model: DiscriminantModel,
    /// Residual sum of squares (squared loss) or deviance (logistic loss).
    pub rss: f64,
    pub df: f64,
    pub bic: f64,
}

#[derive(Clone, Debug)]
pub struct PathFailure {
    pub omega: f64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub entries: Vec<PathEntry>,
    pub failures: Vec<PathFailure>,
    pub selected_index: usize,
    /// The minimum-BIC model after intercept correction.
    pub selected: DiscriminantModel,
}

impl PathResult {
    pub fn selected_entry(&self) -> &PathEntry {
        &self.entries[self.selected_index]
    }
}

fn goodness_of_fit(d: &Dataset, y: &[f64], res: &SolverResult, loss: Loss) -> Result<f64> {
    let smooth = solver::smooth_loss(d, y, res.beta0_hat, &res.b_hat, loss)?;
    // smooth = rss / 2n for squared loss, mean log-loss for logistic.
    Ok(2.0 * d.n() as f64 * smooth)
}

fn entry_bic(d: &Dataset, goodness: f64, df: f64, loss: Loss) -> Result<f64> {
    match loss {
        Loss::Squared => bic_from_df(goodness, d.n(), df),
        Loss::Logistic => Ok(goodness + (d.n() as f64).ln() * df),
    }
}

/// Warm-started path over `grid` with BIC selection.
pub fn fit_path(d: &Dataset, base_cfg: &FitConfig, grid: &[f64]) -> Result<PathResult> {
    fit_path_with(d, base_cfg, grid, true)
}

pub fn fit_path_with(d: &Dataset, base_cfg: &FitConfig, grid: &[f64], warm: bool) -> Result<PathResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("omega grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("omega grid must be strictly decreasing".into()));
    }
    let y = lda::responses_for(d, base_cfg.loss)?;
    let lipschitz = solver::lipschitz_estimate(d);

    let mut entries = Vec::new();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut start: Option<WarmStart> = None;
    for &omega in grid {
        let cfg = base_cfg.with_omega(omega);
        let outcome = solver::fit_penalized_from(d, &y, &cfg, start.as_ref(), Some(lipschitz)).and_then(|res| {
            let rss = goodness_of_fit(d, &y, &res, cfg.loss)?;
            let df = match cfg.penalty {
                Penalty::Nuclear => effective_df(d, &y, &res, cfg.loss, omega)?,
                Penalty::Lasso => degrees_of_freedom(&res, cfg.penalty),
            };
            let bic = entry_bic(d, rss, df, cfg.loss)?;
            let solver_cfg = FitConfig {
                intercept: InterceptRule::Solver,
                ..cfg.clone()
            };
            let model = lda::model_from_fit(d, &solver_cfg, &res)?;
            Ok((res, PathEntry { omega, model, rss, df, bic }))
        });
        match outcome {
            Ok((res, entry)) => {
                if warm {
                    start = Some(WarmStart {
                        beta0: res.beta0_hat,
                        b: res.b_hat.clone(),
                    });
                }
                entries.push(entry);
                results.push(res);
            }
            Err(e @ (Error::Divergence { .. } | Error::DegenerateData(_))) => failures.push(PathFailure {
                omega,
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if entries.is_empty() {
        return Err(Error::DegenerateData("every fit on the path failed".into()));
    }
    let selected_index = entries
        .iter()
        .enumerate()
        .fold(0, |best, (i, e)| if e.bic < entries[best].bic { i } else { best });
    let cfg = base_cfg.with_omega(entries[selected_index].omega);
    let selected = lda::model_from_fit(d, &cfg, &results[selected_index])?;
    Ok(PathResult {
        entries,
        failures,
        selected_index,
        selected,
    })
}

/// Builds the default grid from `cfg.grid_size`/`cfg.grid_span` and fits the path.
pub fn tune(d: &Dataset, cfg: &FitConfig) -> Result<PathResult> {
    let grid = omega_grid(d, cfg.loss, cfg.penalty, cfg.grid_size, cfg.grid_span)?;
    fit_path(d, cfg, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::Class;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, p: usize, q: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Class> = (0..n).map(|i| if i < n / 2 { Class::One } else { Class::Two }).collect();
        let samples = labels
            .iter()
            .map(|c| {
                let shift = if *c == Class::Two { 0.5 } else { 0.0 };
                Mat::from_fn(p, q, |i, _| rng.gen_range(-1.0..1.0) + if i == 0 { shift } else { 0.0 })
            })
            .collect();
        Dataset::new(samples, labels).unwrap()
    }

    #[test]
    fn bic_degrees_of_freedom() {
        let n = 50;
        let base = 50.0 * (2.0f64 / 50.0).ln();
        let ln_n = 50f64.ln();
        assert!((bic_score(2.0, n, 0, 2, 2).unwrap() - (base + ln_n)).abs() < 1e-12);
        assert!((bic_score(2.0, n, 1, 2, 2).unwrap() - (base + 4.0 * ln_n)).abs() < 1e-12);
        assert!((bic_score(2.0, n, 3, 5, 3).unwrap() - (base + 16.0 * ln_n)).abs() < 1e-12);
        assert!(bic_score(0.0, n, 0, 2, 2).is_err());
        assert!(bic_score(-1.0, n, 0, 2, 2).is_err());
        assert!(bic_score(1.0, n, 3, 2, 2).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let d = dataset(30, 3, 3, 1);
        let top = null_threshold(&d, Loss::Squared, Penalty::Nuclear).unwrap();
        let g = omega_grid(&d, Loss::Squared, Penalty::Nuclear, 2, 0.01).unwrap();
        assert_eq!(g, vec![top, 0.01 * top]);
        let g = omega_grid(&d, Loss::Squared, Penalty::Nuclear, 5, 0.1).unwrap();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!((g[2] / g[0] - 0.1f64.sqrt()).abs() < 1e-12);
        assert!(omega_grid(&d, Loss::Squared, Penalty::Nuclear, 1, 0.1).is_err());
        assert!(omega_grid(&d, Loss::Squared, Penalty::Nuclear, 3, 1.0).is_err());
    }

    #[test]
    fn constant_covariates_are_degenerate() {
        let labels = vec![Class::One, Class::One, Class::Two, Class::Two];
        let d = Dataset::new(vec![Mat::identity(2); 4], labels).unwrap();
        assert!(matches!(
            omega_grid(&d, Loss::Squared, Penalty::Nuclear, 4, 0.1),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn first_grid_point_is_null_for_every_method() {
        let d = dataset(40, 3, 4, 2);
        for loss in [Loss::Squared, Loss::Logistic] {
            for penalty in [Penalty::Nuclear, Penalty::Lasso] {
                let cfg = FitConfig {
                    loss,
                    penalty,
                    ..FitConfig::default()
                };
                let grid = omega_grid(&d, loss, penalty, 4, 0.05).unwrap();
                let path = fit_path(&d, &cfg, &grid[..1]).unwrap();
                assert_eq!(path.entries.len(), 1);
                assert_eq!(path.selected_index, 0);
                assert_eq!(path.entries[0].model.rank, 0, "{loss} {penalty}");
                assert_eq!(path.entries[0].df, 1.0);
                // Just below the threshold the fit leaves zero.
                let below = fit_path(&d, &cfg, &[grid[0] * 0.9]).unwrap();
                assert!(below.entries[0].model.rank >= 1, "{loss} {penalty}");
            }
        }
    }

    #[test]
    fn selection_is_argmin_with_first_tie() {
        let d = dataset(60, 3, 3, 3);
        let cfg = FitConfig::default();
        let grid = omega_grid(&d, Loss::Squared, Penalty::Nuclear, 6, 0.01).unwrap();
        let path = fit_path(&d, &cfg, &grid).unwrap();
        let best = path.entries.iter().map(|e| e.bic).fold(f64::INFINITY, f64::min);
        let first = path.entries.iter().position(|e| e.bic == best).unwrap();
        assert_eq!(path.selected_index, first);
        assert_eq!(path.selected.omega, path.entries[first].omega);
    }

    #[test]
    fn rejects_bad_grids() {
        let d = dataset(20, 2, 2, 4);
        let cfg = FitConfig::default();
        assert!(fit_path(&d, &cfg, &[]).is_err());
        assert!(fit_path(&d, &cfg, &[0.1, 0.2]).is_err());
        assert!(fit_path(&d, &cfg, &[0.1, 0.1]).is_err());
    }
}
