use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{run_corpus, summarize};
use super::{CorpusClip, PipelineConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Gnsdr,
    Rpa,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnsdr" => Ok(Self::Gnsdr),
            "rpa" => Ok(Self::Rpa),
            other => Err(Error::invalid(format!("objective must be gnsdr or rpa, got {other:?}"))),
        }
    }
}

/// Inclusive arithmetic range over one configuration parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

const AXIS_NAMES: [&str; 7] = ["lambda", "lambda_sep", "lambda_f0", "w", "alpha", "n_partials", "gamma"];

impl Axis {
    pub fn new(name: &str, start: f64, stop: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            start,
            stop,
            step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !AXIS_NAMES.contains(&self.name.as_str()) {
            return Err(Error::invalid(format!(
                "unknown axis {:?}; expected one of {}",
                self.name,
                AXIS_NAMES.join(", ")
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("axis {}: step must be positive", self.name)));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.start <= self.stop) {
            return Err(Error::invalid(format!("axis {}: need start <= stop", self.name)));
        }
        Ok(())
    }

    /// Grid points, rounded to 1e-9 so decimal steps land on clean values.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }

    fn apply(&self, cfg: &mut PipelineConfig, v: f64) -> Result<()> {
        match self.name.as_str() {
            "lambda" => {
                cfg.lambda_sep = v;
                cfg.lambda_f0 = v;
            }
            "lambda_sep" => cfg.lambda_sep = v,
            "lambda_f0" => cfg.lambda_f0 = v,
            "w" => cfg.w = v,
            "alpha" => cfg.alpha = v,
            "gamma" => cfg.gamma = v,
            "n_partials" => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::invalid(format!("n_partials must be a positive integer, got {v}")));
                }
                cfg.n_partials = v as usize;
            }
            other => return Err(Error::invalid(format!("unknown axis {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchSpec {
    pub axes: Vec<Axis>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    /// Build harmonic masks from the reference F0 contour.
    #[serde(default)]
    pub ground_truth_f0: bool,
    #[serde(default)]
    pub snr_db: Option<f64>,
}

fn default_objective() -> Objective {
    Objective::Gnsdr
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::invalid("grid search needs at least one axis"));
        }
        for (i, a) in self.axes.iter().enumerate() {
            a.validate()?;
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::invalid(format!("axis {} listed twice", a.name)));
            }
        }
        Ok(())
    }

    /// Axis value lists, first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, axis| {
            acc.iter()
                .flat_map(|prefix| {
                    axis.values().into_iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub values: Vec<f64>,
    pub objective: Option<f64>,
    pub gnsdr: Option<f64>,
    pub gsir: Option<f64>,
    pub gsar: Option<f64>,
    pub mean_rpa: Option<f64>,
    pub failed_clips: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub axes: Vec<String>,
    pub objective: Objective,
    /// Best objective first; failed cells last, in grid order.
    pub cells: Vec<GridCell>,
}

impl GridTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.axes.clone();
        header.extend(
            ["objective", "gnsdr", "gsir", "gsar", "mean_rpa", "failed_clips", "error"].map(String::from),
        );
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let mut row: Vec<String> = c.values.iter().map(|v| v.to_string()).collect();
            row.extend([
                opt(c.objective),
                opt(c.gnsdr),
                opt(c.gsir),
                opt(c.gsar),
                opt(c.mean_rpa),
                c.failed_clips.to_string(),
                c.error.clone().unwrap_or_default(),
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the objective at every grid point. Clip failures are recorded
/// in their cells; only malformed specs are errors.
pub fn grid_search(
    corpus: &[CorpusClip],
    spec: &GridSearchSpec,
    base: &PipelineConfig,
    threads: usize,
) -> Result<GridTable> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    spec.validate()?;
    let points = spec.points();
    let cfgs: Vec<PipelineConfig> = points
        .iter()
        .map(|values| {
            let mut cfg = base.clone();
            for (axis, &v) in spec.axes.iter().zip(values) {
                axis.apply(&mut cfg, v)?;
            }
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    let mut sorted: Vec<CorpusClip> = corpus.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let table = run_corpus(&sorted, spec.snr_db, &cfgs, spec.ground_truth_f0, threads)?;

    let mut cells: Vec<GridCell> = points
        .into_iter()
        .enumerate()
        .map(|(k, values)| {
            let section = summarize(
                String::new(),
                spec.snr_db,
                sorted.iter().zip(&table).map(|(c, row)| (c.id.as_str(), &row[k])),
            );
            let gnsdr = section.vocal.as_ref().map(|s| s.gnsdr);
            let objective = match spec.objective {
                Objective::Gnsdr => gnsdr,
                Objective::Rpa => section.mean_rpa,
            };
            let error = objective.is_none().then(|| {
                section
                    .errors
                    .first()
                    .map(|e| format!("{}: {}", e.id, e.message))
                    .unwrap_or_else(|| "no clip produced a score".to_string())
            });
            GridCell {
                values,
                objective,
                gnsdr,
                gsir: section.vocal.as_ref().map(|s| s.gsir),
                gsar: section.vocal.as_ref().map(|s| s.gsar),
                mean_rpa: section.mean_rpa,
                failed_clips: section.errors.len(),
                error,
            }
        })
        .collect();
    // Stable sort keeps grid order among equal objectives.
    cells.sort_by(|a, b| match (a.objective, b.objective) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(GridTable {
        axes: spec.axes.iter().map(|a| a.name.clone()).collect(),
        objective: spec.objective,
        cells,
    })
}
