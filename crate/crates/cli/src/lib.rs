//! Command-line front end for fitting, tuning and simulating matrix LDA models.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use matlda::io::{self, DatasetManifest, Report};
use matlda::lda;
use matlda::simgen::{self, Shape, SignalSpec, StudySpec};
use matlda::{Error, FitConfig, Loss, Penalty};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "matlda", version, about = "Nuclear-norm penalized LDA for matrix-valued covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a training and a test set from a simulation study and write them with manifests.
    Simulate {
        #[command(flatten)]
        study: StudyArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit at a single omega and write the model plus a PGM rendering of its coefficients.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        omega: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
        /// PGM image path; defaults to the model path with a .pgm extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every sample of a manifest with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Predictions CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a predictions CSV with the labels of a manifest.
    Evaluate {
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a BIC-tuned regularization path and write the path table and the selected model.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Path table CSV.
        #[arg(long)]
        out: PathBuf,
        /// Selected model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Monte Carlo evaluation of a tuned method on a simulation study.
    Mc {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long, default_value = "cross")]
    shape: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    p: usize,
    #[arg(long, default_value_t = 64)]
    q: usize,
    #[arg(long, default_value_t = 0.5)]
    pi1: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    amplitude: f64,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value = "squared")]
    loss: String,
    #[arg(long, default_value = "nuclear")]
    penalty: String,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    rel_tol: f64,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value_t = 20)]
    grid_size: usize,
    #[arg(long, default_value_t = 0.01)]
    grid_span: f64,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(r: matlda::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

impl StudyArgs {
    fn spec(&self, replicates: usize) -> CliResult<StudySpec> {
        let shape: Shape = usage(self.shape.parse())?;
        let spec = StudySpec {
            signal: SignalSpec {
                shape,
                p: self.p,
                q: self.q,
                amplitude: self.amplitude,
            },
            n: self.n,
            pi1: self.pi1,
            pi2: 1.0 - self.pi1,
            rho: self.rho,
            test_size: self.test_size,
            replicates,
            seed: self.seed,
        };
        usage(spec.validate())?;
        usage(spec.class_sizes(spec.n))?;
        usage(spec.class_sizes(spec.test_size))?;
        if spec.signal.p < 8 || spec.signal.q < 8 {
            return Err(Failure::Usage(format!("--p and --q must be at least 8, got {}x{}", self.p, self.q)));
        }
        Ok(spec)
    }
}

fn fit_config(solver: &SolverArgs, grid: Option<&GridArgs>, omega: Option<f64>, seed: u64) -> CliResult<FitConfig> {
    let defaults = FitConfig::default();
    let loss: Loss = usage(solver.loss.parse())?;
    let penalty: Penalty = usage(solver.penalty.parse())?;
    let cfg = FitConfig {
        loss,
        penalty,
        omega: omega.unwrap_or(defaults.omega),
        max_iter: solver.max_iter,
        rel_tol: solver.rel_tol,
        grid_size: grid.map_or(defaults.grid_size, |g| g.grid_size),
        grid_span: grid.map_or(defaults.grid_span, |g| g.grid_span),
        seed,
        ..defaults
    };
    usage(cfg.validate())?;
    if grid.is_some() && (cfg.grid_size < 2 || !(cfg.grid_span > 0.0 && cfg.grid_span < 1.0)) {
        return Err(Failure::Usage(format!(
            "--grid-size must be at least 2 and --grid-span in (0, 1), got {} and {}",
            cfg.grid_size, cfg.grid_span
        )));
    }
    Ok(cfg)
}

fn load_manifest(path: &Path) -> CliResult<(DatasetManifest, PathBuf)> {
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, base))
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(Error::Io {
            path: p.to_path_buf(),
            source: e,
        })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| {
        Failure::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn simulate(study: &StudyArgs, out: &Path) -> CliResult<()> {
    let spec = study.spec(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let model = simgen::StudyModel::new(&spec)?;
    let (train, test) = simgen::simulate_with(&model, &spec, &mut rng)?;
    create_dir(out)?;
    DatasetManifest::write_dataset(&train, out, "train", "bin")?.save(out.join("train.json"))?;
    DatasetManifest::write_dataset(&test, out, "test", "bin")?.save(out.join("test.json"))?;
    io::save_matrix_csv(&model.signal, out.join("signal.csv"))?;
    io::render_pgm(&model.signal, out.join("signal.pgm"))?;
    let mut report = Report::new();
    report.add_study(&spec);
    report.pairs(
        "truth",
        [
            ("signal_rank", model.signal.rank().to_string()),
            ("bayes_error", simgen::bayes_error(&spec)?.to_string()),
        ],
    );
    report.save(out.join("study.txt"))?;
    println!("wrote {} training and {} test samples to {}", train.n(), test.n(), out.display());
    Ok(())
}

fn fit(manifest: &Path, cfg: &FitConfig, model_path: &Path, image: Option<&Path>) -> CliResult<()> {
    let (m, base) = load_manifest(manifest)?;
    let data = m.load_dataset(&base)?;
    let model = lda::fit_matrix_lda(&data, cfg)?;
    io::save_model(&model, model_path)?;
    let image = image.map_or_else(|| model_path.with_extension("pgm"), Path::to_path_buf);
    io::render_pgm(&model.b_hat, &image)?;
    println!(
        "rank {} after {} iterations (converged: {}); training error {}",
        model.rank,
        model.diagnostics.iterations,
        model.diagnostics.converged,
        model.error_rate(&data)?
    );
    Ok(())
}

fn predict(model_path: &Path, manifest: &Path, out: Option<&Path>) -> CliResult<()> {
    let model = io::load_model(model_path)?;
    let (m, base) = load_manifest(manifest)?;
    let data = m.load_dataset(&base)?;
    let scores = model.scores(&data)?;
    let mut text = String::from("index,path,score,label\n");
    for (i, (entry, score)) in m.entries.iter().zip(&scores).enumerate() {
        let label = lda::class_of_score(*score).label();
        let _ = writeln!(text, "{i},{},{score},{label}", entry.path);
    }
    write_text(out, &text)
}

struct Prediction {
    path: String,
    label: u8,
}

fn read_predictions(path: &Path) -> CliResult<Vec<Prediction>> {
    let bad = |msg: String| Failure::Data(Error::Parse {
        path: path.to_path_buf(),
        message: msg,
    });
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "index,path,score,label" => {}
        _ => return Err(bad("missing 'index,path,score,label' header".into())),
    }
    lines
        .map(|(k, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(bad(format!("line {}: expected 4 columns", k + 1)));
            }
            let label = match cells[3] {
                "1" => 1,
                "2" => 2,
                other => return Err(bad(format!("line {}: label '{other}' is not 1 or 2", k + 1))),
            };
            Ok(Prediction {
                path: cells[1].to_string(),
                label,
            })
        })
        .collect()
}

fn evaluate(predictions: &Path, manifest: &Path, out: Option<&Path>) -> CliResult<()> {
    let preds = read_predictions(predictions)?;
    let (m, _) = load_manifest(manifest)?;
    if preds.len() != m.entries.len() {
        return Err(Failure::Data(Error::Parse {
            path: predictions.to_path_buf(),
            message: format!("{} predictions for {} manifest entries", preds.len(), m.entries.len()),
        }));
    }
    // counts[truth][predicted]
    let mut counts = [[0usize; 2]; 2];
    for (pred, entry) in preds.iter().zip(&m.entries) {
        if pred.path != entry.path {
            return Err(Failure::Data(Error::Parse {
                path: predictions.to_path_buf(),
                message: format!("prediction for '{}' does not match manifest entry '{}'", pred.path, entry.path),
            }));
        }
        counts[usize::from(entry.label - 1)][usize::from(pred.label - 1)] += 1;
    }
    let n = preds.len();
    let errors = counts[0][1] + counts[1][0];
    let rate = if n == 0 { 0.0 } else { errors as f64 / n as f64 };
    let mut report = Report::new();
    report.pairs(
        "evaluation",
        [
            ("samples", n.to_string()),
            ("errors", errors.to_string()),
            ("rate", rate.to_string()),
            ("true1_pred1", counts[0][0].to_string()),
            ("true1_pred2", counts[0][1].to_string()),
            ("true2_pred1", counts[1][0].to_string()),
            ("true2_pred2", counts[1][1].to_string()),
        ],
    );
    write_text(out, &report.render())
}

fn tune(manifest: &Path, cfg: &FitConfig, out: &Path, model_path: &Path) -> CliResult<()> {
    let (m, base) = load_manifest(manifest)?;
    let data = m.load_dataset(&base)?;
    let path = matlda::tuning::tune(&data, cfg)?;
    let mut text = String::from("omega,rank,rss,df,bic,iterations,converged,selected\n");
    for (i, e) in path.entries.iter().enumerate() {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            e.omega,
            e.model.rank,
            e.rss,
            e.df,
            e.bic,
            e.model.diagnostics.iterations,
            e.model.diagnostics.converged,
            u8::from(i == path.selected_index)
        );
    }
    write_text(Some(out), &text)?;
    io::save_model(&path.selected, model_path)?;
    io::render_pgm(&path.selected.b_hat, model_path.with_extension("pgm"))?;
    for f in &path.failures {
        eprintln!("omega {}: {}", f.omega, f.message);
    }
    println!(
        "selected omega {} (rank {}) from {} path entries",
        path.selected.omega,
        path.selected.rank,
        path.entries.len()
    );
    Ok(())
}

fn monte_carlo(spec: &StudySpec, cfg: &FitConfig, out: Option<&Path>) -> CliResult<()> {
    let eval = simgen::run_monte_carlo(spec, cfg)?;
    let mut report = Report::new();
    report.add_study(spec);
    report.add_fit_config(cfg);
    report.add_eval(&eval, Some(simgen::bayes_error(spec)?));
    write_text(out, &report.render())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { study, out } => simulate(&study, &out),
        Command::Fit {
            manifest,
            omega,
            solver,
            model,
            out,
        } => {
            let cfg = fit_config(&solver, None, Some(omega), 0)?;
            fit(&manifest, &cfg, &model, out.as_deref())
        }
        Command::Predict { model, manifest, out } => predict(&model, &manifest, out.as_deref()),
        Command::Evaluate {
            predictions,
            manifest,
            out,
        } => evaluate(&predictions, &manifest, out.as_deref()),
        Command::Tune {
            manifest,
            solver,
            grid,
            out,
            model,
        } => {
            let cfg = fit_config(&solver, Some(&grid), None, 0)?;
            tune(&manifest, &cfg, &out, &model)
        }
        Command::Mc {
            study,
            replicates,
            solver,
            grid,
            out,
        } => {
            if replicates == 0 {
                return Err(Failure::Usage("--replicates must be at least 1".into()));
            }
            let spec = study.spec(replicates)?;
            let cfg = fit_config(&solver, Some(&grid), None, spec.seed)?;
            monte_carlo(&spec, &cfg, out.as_deref())
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the process
/// exit code: 0 success, 1 usage error, 2 data error, 3 solver divergence.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Data(e) => eprintln!("error: {e}"),
            }
            exit_code(&failure)
        }
    }
}

fn exit_code(failure: &Failure) -> i32 {
    match failure {
        Failure::Usage(_) => EXIT_USAGE,
        Failure::Data(Error::Divergence { .. }) => EXIT_DIVERGENCE,
        Failure::Data(_) => EXIT_DATA,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_kind() {
        assert_eq!(exit_code(&Failure::Usage("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Failure::Data(Error::Divergence { iteration: 3 })), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Failure::Data(Error::DegenerateDirection)), EXIT_DATA);
        assert_eq!(exit_code(&Failure::Data(Error::InvalidInput("x".into()))), EXIT_DATA);
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(run_cli(["matlda", "--help"]), EXIT_OK);
        assert_eq!(run_cli(["matlda", "mc", "--no-such-flag"]), EXIT_USAGE);
        assert_eq!(run_cli(["matlda", "fit", "--omega", "abc"]), EXIT_USAGE);
        assert_eq!(run_cli(["matlda"]), EXIT_USAGE);
    }
}
