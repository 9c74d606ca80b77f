use matlda::lda::{self, Dataset};
use matlda::matcore;
use matlda::simgen::{self, Shape, SignalSpec, StudySpec};
use matlda::solver::{FitConfig, Loss, Penalty};
use matlda::tuning::{self, bic_from_df, fit_path, fit_path_with, nuclear_df, omega_grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cross_train(n: usize, p: usize, seed: u64) -> Dataset {
    let spec = StudySpec {
        signal: SignalSpec {
            shape: Shape::Cross,
            p,
            q: p,
            amplitude: 0.15,
        },
        n,
        test_size: 10,
        ..StudySpec::default()
    };
    simgen::simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().0
}

fn methods() -> Vec<(Loss, Penalty)> {
    vec![
        (Loss::Squared, Penalty::Nuclear),
        (Loss::Squared, Penalty::Lasso),
        (Loss::Logistic, Penalty::Nuclear),
        (Loss::Logistic, Penalty::Lasso),
    ]
}

fn penalty_value(e: &tuning::PathEntry, penalty: Penalty) -> f64 {
    match penalty {
        Penalty::Nuclear => matcore::nuclear_norm(&e.model.b_hat),
        Penalty::Lasso => e.model.b_hat.l1_norm(),
    }
}

#[test]
fn fit_and_penalty_are_monotone_along_the_path() {
    let mut pairs = 0;
    let mut rank_drops = 0;
    for seed in 0..3 {
        let d = cross_train(80, 10, seed);
        for (loss, penalty) in methods() {
            let cfg = FitConfig {
                loss,
                penalty,
                rel_tol: 1e-10,
                max_iter: 20_000,
                ..FitConfig::default()
            };
            let path = tuning::tune(&d, &cfg).unwrap();
            assert!(path.failures.is_empty());
            for w in path.entries.windows(2) {
                // Entries run from large to small omega.
                assert!(w[1].rss <= w[0].rss * (1.0 + 1e-8), "{loss}/{penalty}: rss {} -> {}", w[0].rss, w[1].rss);
                let (a, b) = (penalty_value(&w[0], penalty), penalty_value(&w[1], penalty));
                assert!(b >= a * (1.0 - 1e-6), "{loss}/{penalty}: penalty {a} -> {b}");
                if penalty == Penalty::Nuclear {
                    pairs += 1;
                    if w[1].model.rank < w[0].model.rank {
                        // Nuclear-norm paths are not rank-monotone in general; a
                        // drop may only discard a direction that was already tiny.
                        rank_drops += 1;
                        let s = &w[0].model.singulars;
                        let lost = s[w[1].model.rank];
                        assert!(lost < 0.05 * s[0], "{loss}: dropped a direction of size {lost} vs top {}", s[0]);
                    }
                }
            }
        }
    }
    assert!(rank_drops * 10 < pairs, "{rank_drops} rank drops in {pairs} steps");
}

#[test]
fn warm_and_cold_paths_select_the_same_omega() {
    for seed in 0..3 {
        let d = cross_train(80, 10, 10 + seed);
        for (loss, penalty) in methods() {
            let cfg = FitConfig {
                loss,
                penalty,
                rel_tol: 1e-10,
                max_iter: 20_000,
                ..FitConfig::default()
            };
            let grid = omega_grid(&d, loss, penalty, cfg.grid_size, cfg.grid_span).unwrap();
            let warm = fit_path_with(&d, &cfg, &grid, true).unwrap();
            let cold = fit_path_with(&d, &cfg, &grid, false).unwrap();
            assert_eq!(warm.selected_index, cold.selected_index, "{loss}/{penalty} seed {seed}");
        }
    }
}

#[test]
fn single_point_grid_is_the_null_model() {
    let d = cross_train(50, 8, 1);
    let top = tuning::null_threshold(&d, Loss::Squared, Penalty::Nuclear).unwrap();
    let path = fit_path(&d, &FitConfig::default(), &[top]).unwrap();
    assert_eq!(path.entries.len(), 1);
    assert_eq!(path.selected_index, 0);
    assert_eq!(path.selected.rank, 0);
    assert!(path.selected.b_hat.is_zero());
}

#[test]
fn selection_follows_recomputed_bic() {
    let d = cross_train(60, 8, 2);
    let top = tuning::null_threshold(&d, Loss::Squared, Penalty::Nuclear).unwrap();
    let path = fit_path(&d, &FitConfig::default(), &[top, 0.4 * top]).unwrap();
    let n = d.n();
    let bics: Vec<f64> = path
        .entries
        .iter()
        .map(|e| bic_from_df(e.rss, n, e.df).unwrap())
        .collect();
    assert_eq!(bics[0], path.entries[0].bic);
    assert_eq!(bics[1], path.entries[1].bic);
    let expected = if bics[1] < bics[0] { 1 } else { 0 };
    assert_eq!(path.selected_index, expected);

    // The reported rss is the squared residual sum with the solver intercept.
    let y = lda::encode_responses(&d).unwrap();
    let e = &path.entries[1];
    let proj = d.projections(&e.model.b_hat).unwrap();
    let rss: f64 = y
        .iter()
        .zip(&proj)
        .map(|(yi, s)| (yi - e.model.diagnostics.beta0_hat - s).powi(2))
        .sum();
    assert!((rss - e.rss).abs() < 1e-9 * rss);
}

#[test]
fn effective_df_is_between_one_and_the_parameter_count() {
    let d = cross_train(100, 12, 3);
    let path = tuning::tune(&d, &FitConfig::default()).unwrap();
    let mut last = 0.0;
    for e in &path.entries {
        let cap = nuclear_df(e.model.rank, 12, 12);
        assert!(e.df >= 1.0 && e.df <= cap + 1e-9, "df {} rank {}", e.df, e.model.rank);
        assert!(e.df >= last - 1e-6, "df fell from {last} to {}", e.df);
        last = e.df;
    }
    assert_eq!(path.entries[0].df, 1.0);
}

#[test]
fn selected_model_carries_the_corrected_intercept() {
    let d = cross_train(90, 10, 4);
    let path = tuning::tune(&d, &FitConfig::default()).unwrap();
    let entry = path.selected_entry();
    assert_eq!(entry.omega, path.selected.omega);
    if path.selected.rank > 0 {
        let (beta0, b) = lda::optimal_intercept(&d, &entry.model.b_hat).unwrap();
        assert_eq!(path.selected.beta0_tilde, beta0);
        assert_eq!(path.selected.b_hat, b);
    }
}
