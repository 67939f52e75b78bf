use std::path::Path;

use ppm_core::checkpoint::{Checkpoint, TrainingSummary};
use ppm_core::eventlog::{TimeScaler, Vocabulary};
use ppm_core::nn::{GeneratorModel, Topology};
use ppm_core::train::TrainConfig;

/// Untrained generator over activities A, B, C saved to `path`.
pub fn write_checkpoint(path: &Path) -> Checkpoint {
    let vocab = Vocabulary::from_labels(["A", "B", "C"]).unwrap();
    let topology = Topology {
        vocab_size: vocab.size(),
        hidden_size: 8,
        num_layers: 1,
    };
    let ck = Checkpoint {
        generator: GeneratorModel::new(topology, 11),
        vocab,
        scaler: TimeScaler::new(2.0).unwrap(),
        max_length: 6,
        config: TrainConfig::desk(),
        seed: 11,
        summary: TrainingSummary {
            iterations_run: 0,
            best_iteration: 0,
            best_validation_loss: 0.0,
            stopped_early: false,
        },
    };
    ck.save(path).unwrap();
    ck
}
