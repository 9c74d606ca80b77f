//! Flat text reports made of `[name]` key/value sections and
//! `[table name]` CSV sections.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simgen::{EvalReport, SignalSpec, StudySpec};
use crate::solver::FitConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Pairs {
        name: String,
        pairs: Vec<(String, String)>,
    },
    Table {
        name: String,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    },
}

impl Section {
    pub fn name(&self) -> &str {
        match self {
            Section::Pairs { name, .. } | Section::Table { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn pairs<K: Into<String>, V: ToString>(&mut self, name: &str, pairs: impl IntoIterator<Item = (K, V)>) {
        self.sections.push(Section::Pairs {
            name: name.into(),
            pairs: pairs.into_iter().map(|(k, v)| (k.into(), v.to_string())).collect(),
        });
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        self.sections.push(Section::Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        });
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name() == name)
    }

    /// Value of `key` in the key/value section `name`.
    pub fn value(&self, name: &str, key: &str) -> Option<&str> {
        match self.section(name)? {
            Section::Pairs { pairs, .. } => pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()),
            Section::Table { .. } => None,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            match s {
                Section::Pairs { name, pairs } => {
                    let _ = writeln!(out, "[{name}]");
                    for (k, v) in pairs {
                        let _ = writeln!(out, "{k} = {v}");
                    }
                }
                Section::Table { name, header, rows } => {
                    let _ = writeln!(out, "[table {name}]");
                    let _ = writeln!(out, "{}", header.join(","));
                    for row in rows {
                        let _ = writeln!(out, "{}", row.join(","));
                    }
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = Report::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |msg: &str| Error::InvalidInput(format!("report line {}: {msg}", line_no + 1));
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                report.sections.push(match inner.strip_prefix("table ") {
                    Some(name) => Section::Table {
                        name: name.trim().into(),
                        header: Vec::new(),
                        rows: Vec::new(),
                    },
                    None => Section::Pairs {
                        name: inner.trim().into(),
                        pairs: Vec::new(),
                    },
                });
                continue;
            }
            match report.sections.last_mut() {
                None => return Err(bad("content before the first section")),
                Some(Section::Pairs { pairs, .. }) => {
                    let (k, v) = line.split_once('=').ok_or_else(|| bad("expected 'key = value'"))?;
                    pairs.push((k.trim().into(), v.trim().into()));
                }
                Some(Section::Table { header, rows, .. }) => {
                    let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
                    if header.is_empty() {
                        *header = cells;
                    } else if cells.len() != header.len() {
                        return Err(bad("row width differs from the table header"));
                    } else {
                        rows.push(cells);
                    }
                }
            }
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Report::parse(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn add_study(&mut self, spec: &StudySpec) {
        self.pairs(
            "study",
            [
                ("shape", spec.signal.shape.to_string()),
                ("p", spec.signal.p.to_string()),
                ("q", spec.signal.q.to_string()),
                ("amplitude", spec.signal.amplitude.to_string()),
                ("n", spec.n.to_string()),
                ("pi1", spec.pi1.to_string()),
                ("pi2", spec.pi2.to_string()),
                ("rho", spec.rho.to_string()),
                ("test_size", spec.test_size.to_string()),
                ("replicates", spec.replicates.to_string()),
                ("seed", spec.seed.to_string()),
            ],
        );
    }

    pub fn add_fit_config(&mut self, cfg: &FitConfig) {
        self.pairs(
            "fit_config",
            [
                ("loss", cfg.loss.to_string()),
                ("penalty", cfg.penalty.to_string()),
                ("omega", cfg.omega.to_string()),
                ("max_iter", cfg.max_iter.to_string()),
                ("rel_tol", cfg.rel_tol.to_string()),
                ("step_rule", cfg.step_rule.to_string()),
                ("backtrack_factor", cfg.backtrack_factor.to_string()),
                ("restart", cfg.restart.to_string()),
                ("accelerated", cfg.accelerated.to_string()),
                ("intercept", cfg.intercept.to_string()),
                ("grid_size", cfg.grid_size.to_string()),
                ("grid_span", cfg.grid_span.to_string()),
                ("seed", cfg.seed.to_string()),
            ],
        );
    }

    pub fn add_eval(&mut self, report: &EvalReport, bayes_error: Option<f64>) {
        let mut pairs = vec![
            ("mean_rate", report.mean_rate.to_string()),
            ("std_error", report.std_error.map_or_else(|| "NA".into(), |s| s.to_string())),
            ("mean_rank", report.mean_rank.to_string()),
            ("mean_frob_error", report.mean_frob_error.to_string()),
            ("mean_sq_frob_error", report.mean_sq_frob_error().to_string()),
            ("succeeded", report.replicates.len().to_string()),
            ("failed", report.failures.len().to_string()),
        ];
        if let Some(b) = bayes_error {
            pairs.push(("bayes_error", b.to_string()));
        }
        self.pairs("summary", pairs);
        let rows = report
            .replicates
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.rate.to_string(),
                    r.rank.to_string(),
                    r.frob_error.to_string(),
                    r.omega.to_string(),
                ]
            })
            .collect();
        self.table("replicates", &["index", "rate", "rank", "frob_error", "omega"], rows);
        if !report.failures.is_empty() {
            let rows = report
                .failures
                .iter()
                .map(|(i, msg)| vec![i.to_string(), msg.replace(',', ";")])
                .collect();
            self.table("failures", &["index", "message"], rows);
        }
    }

    /// Rebuilds the study recorded by [`Report::add_study`].
    pub fn study(&self) -> Result<StudySpec> {
        Ok(StudySpec {
            signal: SignalSpec {
                shape: self.field("study", "shape")?,
                p: self.field("study", "p")?,
                q: self.field("study", "q")?,
                amplitude: self.field("study", "amplitude")?,
            },
            n: self.field("study", "n")?,
            pi1: self.field("study", "pi1")?,
            pi2: self.field("study", "pi2")?,
            rho: self.field("study", "rho")?,
            test_size: self.field("study", "test_size")?,
            replicates: self.field("study", "replicates")?,
            seed: self.field("study", "seed")?,
        })
    }

    /// Rebuilds the configuration recorded by [`Report::add_fit_config`].
    pub fn fit_config(&self) -> Result<FitConfig> {
        Ok(FitConfig {
            loss: self.field("fit_config", "loss")?,
            penalty: self.field("fit_config", "penalty")?,
            omega: self.field("fit_config", "omega")?,
            max_iter: self.field("fit_config", "max_iter")?,
            rel_tol: self.field("fit_config", "rel_tol")?,
            step_rule: self.field("fit_config", "step_rule")?,
            backtrack_factor: self.field("fit_config", "backtrack_factor")?,
            restart: self.field("fit_config", "restart")?,
            accelerated: self.field("fit_config", "accelerated")?,
            intercept: self.field("fit_config", "intercept")?,
            grid_size: self.field("fit_config", "grid_size")?,
            grid_span: self.field("fit_config", "grid_span")?,
            seed: self.field("fit_config", "seed")?,
        })
    }

    fn field<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        let raw = self
            .value(section, key)
            .ok_or_else(|| Error::InvalidInput(format!("report has no {section}.{key}")))?;
        raw.parse()
            .map_err(|_| Error::InvalidInput(format!("report field {section}.{key} = '{raw}' does not parse")))
    }
}
