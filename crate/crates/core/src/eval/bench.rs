use serde::{Deserialize, Serialize};

use crate::dno::{train, Architecture, CombineMode, Dataset, ModelSpec, TrainConfig, TrainMode, TrainReport};
use crate::{Error, Result};

/// Wall time to threshold of one training mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: TrainMode,
    pub wall_time_secs: f64,
    pub iterations: usize,
    /// Output entries consumed by all steps.
    pub entries_seen: u64,
    pub final_loss: f64,
    pub reached_threshold: bool,
    pub timed_out: bool,
}

impl From<&TrainReport> for ModeRun {
    fn from(r: &TrainReport) -> Self {
        ModeRun {
            mode: r.mode,
            wall_time_secs: r.wall_time_secs,
            iterations: r.iterations,
            entries_seen: r.entries_seen,
            final_loss: r.final_loss,
            reached_threshold: r.reached_threshold,
            timed_out: r.timed_out,
        }
    }
}

/// Sequence versus point-wise training of one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCell {
    pub arch: String,
    pub threshold: f64,
    pub sequence: ModeRun,
    pub pointwise: ModeRun,
    /// Point-wise over sequence wall time.
    pub speedup: f64,
    /// Set when the point-wise run stopped before the threshold, so the true
    /// ratio is at least `speedup`.
    pub speedup_is_lower_bound: bool,
}

/// Trains a dot-mode model of each architecture to `threshold` in both modes
/// from the same initialization and shuffling seed. Cells run one after the
/// other. `cap_secs` bounds each run; a run that hits it ends the benchmark
/// with a timeout error carrying every cell measured so far.
pub fn training_mode_benchmark(
    train_set: &Dataset,
    archs: &[Architecture],
    threshold: f64,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    cap_secs: Option<f64>,
) -> Result<Vec<ModeCell>> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("the benchmark needs a positive loss threshold"));
    }
    if spec.mode != CombineMode::Dot {
        return Err(Error::InvalidMode { expected: "dot" });
    }
    let mut cells = Vec::with_capacity(archs.len());
    for arch in archs {
        let s = ModelSpec {
            arch: arch.clone(),
            ..spec.clone()
        };
        let model = s.build(train_set.grid, train_set.norm_stats())?;
        let base = TrainConfig {
            loss_threshold: threshold,
            time_limit_secs: cap_secs,
            ..cfg.clone()
        };
        let run = |mode| {
            let c = TrainConfig { mode, ..base.clone() };
            train(&model, train_set, &c).map(|(_, r)| ModeRun::from(&r))
        };
        let sequence = run(TrainMode::Sequence)?;
        let pointwise = run(TrainMode::Pointwise)?;
        let timed_out = sequence.timed_out || pointwise.timed_out;
        cells.push(ModeCell {
            arch: arch.to_string(),
            threshold,
            speedup: pointwise.wall_time_secs / sequence.wall_time_secs,
            speedup_is_lower_bound: !pointwise.reached_threshold,
            sequence,
            pointwise,
        });
        if timed_out {
            return Err(Error::Timeout {
                cell: arch.to_string(),
                cap_secs: cap_secs.unwrap_or(f64::INFINITY),
                partial: cells,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TimeGrid;
    use ndarray::Array2;

    fn data() -> Dataset {
        let g = TimeGrid::new(0.0, 1.0, 9).unwrap();
        // separable in sample and time, so a small latent width suffices
        let x = Array2::from_shape_fn((24, 9), |(i, j)| (i as f64 * 0.37).cos() * (j as f64 * 0.4).sin());
        let y = x.mapv(|v| 2.0 * v);
        Dataset::new(g, x, y).unwrap()
    }

    fn spec() -> ModelSpec {
        ModelSpec {
            mode: CombineMode::Dot,
            arch: "16".parse().unwrap(),
            latent: 12,
            seed: 1,
        }
    }

    #[test]
    fn both_modes_reach_a_loose_threshold() {
        let cfg = TrainConfig {
            batch_size: 4,
            log_interval: 10,
            max_iterations: 20_000,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let cells = training_mode_benchmark(&data(), &["16".parse().unwrap()], 0.05, &spec(), &cfg, None).unwrap();
        let c = &cells[0];
        assert!(c.sequence.reached_threshold && c.pointwise.reached_threshold);
        assert!(c.speedup > 0.0);
        assert!(!c.speedup_is_lower_bound);
    }

    #[test]
    fn hadamard_is_rejected() {
        let s = ModelSpec {
            mode: CombineMode::Hadamard,
            ..spec()
        };
        let r = training_mode_benchmark(&data(), &["10".parse().unwrap()], 0.05, &s, &TrainConfig::default(), None);
        assert!(matches!(r, Err(Error::InvalidMode { .. })));
    }

    #[test]
    fn cap_yields_partial_results() {
        let cfg = TrainConfig {
            max_iterations: usize::MAX,
            ..Default::default()
        };
        let r = training_mode_benchmark(&data(), &["10".parse().unwrap()], 1e-12, &spec(), &cfg, Some(0.05));
        match r {
            Err(Error::Timeout { partial, cap_secs, .. }) => {
                assert_eq!(partial.len(), 1);
                assert_eq!(cap_secs, 0.05);
                assert!(partial[0].speedup_is_lower_bound);
            }
            other => panic!("expected a timeout, got {other:?}"),
        }
    }
}
