//! Grid sweeps over depth, init scheme and algorithm.
//!
//! Each grid point is an independent run with its own output directory;
//! points execute in parallel (they share nothing but the read-only
//! datasets) and a failed point is recorded without stopping the sweep.
//! Results consolidate into one comparison CSV with a row per run and epoch.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{train_with_data, ExperimentConfig, RunResult};
use crate::algos::AlgoId;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Grid axes; empty axes inherit the base config's value.
#[derive(Debug, Clone, Default)]
pub struct SweepAxes {
    pub depths: Vec<usize>,
    /// Init scheme names (`gaussian`, `glorot`, `orthogonal` or aliases).
    pub inits: Vec<String>,
    pub algorithms: Vec<AlgoId>,
}

/// One grid point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub algorithm: AlgoId,
    pub depth: usize,
    pub init: Option<String>,
}

impl SweepPoint {
    pub fn run_id(&self) -> String {
        format!(
            "{}_d{}_{}",
            self.algorithm,
            self.depth,
            self.init.as_deref().unwrap_or("default")
        )
    }
}

/// All sweep results plus the consolidated CSV path.
#[derive(Debug)]
pub struct SweepOutcome {
    pub runs: Vec<(SweepPoint, std::result::Result<RunResult, String>)>,
    pub comparison_path: PathBuf,
}

impl SweepOutcome {
    pub fn succeeded(&self) -> impl Iterator<Item = (&SweepPoint, &RunResult)> {
        self.runs
            .iter()
            .filter_map(|(p, r)| r.as_ref().ok().map(|res| (p, res)))
    }
}

fn grid(base: &ExperimentConfig, axes: &SweepAxes) -> Vec<SweepPoint> {
    let depths = if axes.depths.is_empty() {
        vec![base.depth]
    } else {
        axes.depths.clone()
    };
    let algorithms = if axes.algorithms.is_empty() {
        vec![base.algorithm]
    } else {
        axes.algorithms.clone()
    };
    let inits: Vec<Option<String>> = if axes.inits.is_empty() {
        vec![base.init.clone()]
    } else {
        axes.inits.iter().cloned().map(Some).collect()
    };
    let mut points = Vec::new();
    for algo in &algorithms {
        for depth in &depths {
            for init in &inits {
                points.push(SweepPoint {
                    algorithm: *algo,
                    depth: *depth,
                    init: init.clone(),
                });
            }
        }
    }
    points
}

/// Run the full grid against shared datasets and consolidate metrics.
pub fn sweep(
    base: &ExperimentConfig,
    axes: &SweepAxes,
    full_train: &Dataset,
    test: Option<&Dataset>,
) -> Result<SweepOutcome> {
    std::fs::create_dir_all(&base.output_dir)?;
    let points = grid(base, axes);
    let runs: Vec<(SweepPoint, std::result::Result<RunResult, String>)> = points
        .into_par_iter()
        .map(|point| {
            let mut cfg = base.clone();
            cfg.algorithm = point.algorithm;
            cfg.depth = point.depth;
            cfg.init = point.init.clone();
            cfg.output_dir = base.output_dir.join(point.run_id());
            let result = train_with_data(&cfg, full_train, test).map_err(|e| e.to_string());
            (point, result)
        })
        .collect();

    let comparison_path = base.output_dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(
        std::fs::File::create(&comparison_path).map_err(Error::Io)?,
    );
    w.write_record([
        "run_id",
        "algorithm",
        "depth",
        "init",
        "epoch",
        "val_error",
        "output_loss",
        "total_discrepancy",
    ])?;
    for (point, result) in &runs {
        if let Ok(res) = result {
            for rec in &res.records {
                // one row per trained epoch, matching runs x epochs
                if rec.batch.is_some() || rec.epoch == 0 || rec.val_error.is_none() {
                    continue;
                }
                if rec.test_error.is_some() {
                    continue; // summary row
                }
                w.write_record([
                    point.run_id(),
                    point.algorithm.to_string(),
                    point.depth.to_string(),
                    point.init.clone().unwrap_or_else(|| "default".into()),
                    rec.epoch.to_string(),
                    format!("{:.6}", rec.val_error.unwrap()),
                    format!("{:.6}", rec.output_loss),
                    format!("{:.6}", rec.total_discrepancy),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::Io(e))?;
    Ok(SweepOutcome {
        runs,
        comparison_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let base = ExperimentConfig::default();
        let axes = SweepAxes {
            depths: vec![5, 8],
            inits: vec!["ortho".into(), "gloro".into(), "g".into()],
            algorithms: vec![AlgoId::Dtp, AlgoId::DtpSigma],
        };
        assert_eq!(grid(&base, &axes).len(), 12);
        let empty = SweepAxes::default();
        assert_eq!(grid(&base, &empty).len(), 1);
    }

    #[test]
    fn sweep_runs_grid_and_writes_rows_per_epoch() {
        let ds = crate::harness::tests::synthetic_dataset(240, 9);
        let dir = tempfile::tempdir().unwrap();
        let base = ExperimentConfig {
            dataset: "synthetic".into(),
            algorithm: AlgoId::Backprop,
            depth: 3,
            width: 8,
            epochs: 2,
            batch_size: 30,
            validation_count: 40,
            output_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let axes = SweepAxes {
            depths: vec![3],
            inits: vec!["g".into(), "gloro".into()],
            algorithms: vec![AlgoId::Backprop, AlgoId::LraE],
        };
        let outcome = sweep(&base, &axes, &ds, None).unwrap();
        assert_eq!(outcome.runs.len(), 4);
        assert_eq!(outcome.succeeded().count(), 4);
        let text = std::fs::read_to_string(&outcome.comparison_path).unwrap();
        // header + runs * epochs rows
        assert_eq!(text.lines().count(), 1 + 4 * 2);
    }

    #[test]
    fn individual_failure_is_recorded_and_sweep_continues() {
        let ds = crate::harness::tests::synthetic_dataset(240, 10);
        let dir = tempfile::tempdir().unwrap();
        let base = ExperimentConfig {
            dataset: "synthetic".into(),
            depth: 3,
            width: 8,
            epochs: 1,
            batch_size: 30,
            validation_count: 40,
            output_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let axes = SweepAxes {
            depths: vec![3],
            inits: vec!["g".into(), "not-a-scheme".into()],
            algorithms: vec![AlgoId::Backprop],
        };
        let outcome = sweep(&base, &axes, &ds, None).unwrap();
        assert_eq!(outcome.runs.len(), 2);
        assert_eq!(outcome.succeeded().count(), 1);
        let failed = outcome
            .runs
            .iter()
            .find(|(p, _)| p.init.as_deref() == Some("not-a-scheme"))
            .unwrap();
        assert!(failed.1.is_err());
    }
}
