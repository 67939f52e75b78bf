//! From a parsed log to a trained generator.

use std::time::Duration;

use crate::eventlog::{
    build_vocabulary, generate_pairs, temporal_split, EventLog, LogError, PrefixSuffixPair, Split, TimeScaler,
    Vocabulary,
};
use crate::nn::{GeneratorModel, Topology};
use crate::train::{fit_with, IterationRecord, LossReport, PreparedPair, TrainConfig, TrainError};

/// Split, vocabulary, time scale and pairs of one log.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub split: Split,
    pub vocab: Vocabulary,
    pub scaler: TimeScaler,
    pub train: Vec<PrefixSuffixPair>,
    pub validation: Vec<PrefixSuffixPair>,
    pub test: Vec<PrefixSuffixPair>,
}

impl Dataset {
    pub fn prepare(log: &EventLog) -> Result<Self, LogError> {
        let split = temporal_split(log)?;
        let vocab = build_vocabulary(&split.train)?;
        let scaler = TimeScaler::fit(&split.train);
        let train = generate_pairs(&split.train, &vocab)?;
        let validation = generate_pairs(&split.validation, &vocab)?;
        let test = generate_pairs(&split.test, &vocab)?;
        Ok(Self {
            split,
            vocab,
            scaler,
            train,
            validation,
            test,
        })
    }

    /// Decode cap: twice the longest training suffix (`[EOS]` included).
    pub fn max_length(&self) -> usize {
        2 * self.train.iter().map(|p| p.suffix.len()).max().unwrap_or(1)
    }

    pub fn topology(&self, cfg: &TrainConfig) -> Topology {
        Topology {
            vocab_size: self.vocab.size(),
            hidden_size: cfg.hidden_size,
            num_layers: cfg.num_layers,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub generator: GeneratorModel,
    pub vocab: Vocabulary,
    pub scaler: TimeScaler,
    pub max_length: usize,
    pub config: TrainConfig,
    pub report: LossReport,
    pub iteration_times: Vec<Duration>,
}

/// Prepares `dataset`, initialises a generator from `cfg.seed` and fits it.
pub fn train_on(
    dataset: &Dataset,
    cfg: &TrainConfig,
    observer: impl FnMut(&IterationRecord),
) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    let train = PreparedPair::prepare_all(&dataset.train, &dataset.vocab, &dataset.scaler)?;
    let validation = PreparedPair::prepare_all(&dataset.validation, &dataset.vocab, &dataset.scaler)?;
    let g = GeneratorModel::new(dataset.topology(cfg), cfg.seed);
    let out = fit_with(g, &train, &validation, cfg, observer)?;
    Ok(TrainedModel {
        generator: out.generator,
        vocab: dataset.vocab.clone(),
        scaler: dataset.scaler,
        max_length: dataset.max_length(),
        config: cfg.clone(),
        report: out.report,
        iteration_times: out.iteration_times,
    })
}
