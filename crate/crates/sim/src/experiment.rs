//! Repeated braking runs across speed levels and estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{preset_braking, ConfigError, EstimatorKind, ScenarioConfig};
use crate::run::run;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingRun {
    pub v_level: f64,
    pub estimator: EstimatorKind,
    pub rep: usize,
    /// `None` if the follower never stopped or the leader left the view.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingCell {
    pub v_level: f64,
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub std: f64,
    /// Runs that produced a distance.
    pub completed: usize,
}

/// Runs `reps` seeded runs for every (level, estimator) pair. `make` builds the
/// scenario for a level; the estimator and seed (the rep index) are set here.
/// Results come back ordered by (level, estimator, rep).
pub fn braking_runs<F>(
    levels: &[f64],
    estimators: &[EstimatorKind],
    reps: usize,
    make: F,
) -> Result<Vec<BrakingRun>, ConfigError>
where
    F: Fn(f64) -> ScenarioConfig + Sync,
{
    let jobs: Vec<(f64, EstimatorKind, usize)> = levels
        .iter()
        .flat_map(|&v| estimators.iter().flat_map(move |&e| (0..reps).map(move |r| (v, e, r))))
        .collect();
    jobs.par_iter()
        .map(|&(v_level, estimator, rep)| {
            let cfg = make(v_level).with_estimator(estimator).with_seed(rep as u64);
            let out = run(&cfg)?;
            let distance = if out.metrics.visibility_lost.is_some() {
                None
            } else {
                out.metrics.braking_distance
            };
            Ok(BrakingRun {
                v_level,
                estimator,
                rep,
                distance,
            })
        })
        .collect()
}

/// Mean and standard deviation per (level, estimator), in input order.
pub fn summarize(runs: &[BrakingRun]) -> Vec<BrakingCell> {
    let mut cells: Vec<BrakingCell> = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let (v, e) = (runs[i].v_level, runs[i].estimator);
        let j = i + runs[i..]
            .iter()
            .take_while(|r| r.v_level == v && r.estimator == e)
            .count();
        let d: Vec<f64> = runs[i..j].iter().filter_map(|r| r.distance).collect();
        let n = d.len().max(1) as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        cells.push(BrakingCell {
            v_level: v,
            estimator: e,
            mean: if d.is_empty() { f64::NAN } else { mean },
            std: var.sqrt(),
            completed: d.len(),
        });
        i = j;
    }
    cells
}

/// The standard sweep on the braking preset.
pub fn braking_experiment(levels: &[f64], reps: usize) -> Result<Vec<BrakingCell>, ConfigError> {
    let runs = braking_runs(
        levels,
        &[EstimatorKind::Oisac, EstimatorKind::Ekf],
        reps,
        preset_braking,
    )?;
    Ok(summarize(&runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_groups_in_order() {
        let mk = |v, e, rep, d| BrakingRun {
            v_level: v,
            estimator: e,
            rep,
            distance: d,
        };
        let runs = [
            mk(0.1, EstimatorKind::Oisac, 0, Some(1.0)),
            mk(0.1, EstimatorKind::Oisac, 1, Some(3.0)),
            mk(0.1, EstimatorKind::Ekf, 0, None),
            mk(0.2, EstimatorKind::Oisac, 0, Some(2.0)),
        ];
        let cells = summarize(&runs);
        assert_eq!(cells.len(), 3);
        assert_eq!((cells[0].mean, cells[0].std, cells[0].completed), (2.0, 1.0, 2));
        assert!(cells[1].mean.is_nan());
        assert_eq!(cells[2].v_level, 0.2);
    }
}
