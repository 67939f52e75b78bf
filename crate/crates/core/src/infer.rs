//! Greedy and beam-search decoding of activity suffixes.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eventlog::{EncodedEvent, TimeScaler, Vocabulary, EOS_ID, SOS_ID};
use crate::nn::{start_event, GeneratorModel, ModelError, StateValues};

/// Anything that can be decoded step by step.
pub trait StepModel {
    type State: Clone;

    /// Number of activities `m`, including `[SOS]` and `[EOS]`.
    fn vocab_size(&self) -> usize;

    fn start(&self, prefix: &[EncodedEvent]) -> Result<Self::State, ModelError>;

    /// `(π, t, next state)` for one decoder input.
    fn step(&self, input: &EncodedEvent, state: &Self::State) -> Result<(Vec<f64>, f64, Self::State), ModelError>;
}

impl StepModel for GeneratorModel {
    type State = StateValues;

    fn vocab_size(&self) -> usize {
        GeneratorModel::vocab_size(self)
    }

    fn start(&self, prefix: &[EncodedEvent]) -> Result<StateValues, ModelError> {
        GeneratorModel::start(self, prefix)
    }

    fn step(&self, input: &EncodedEvent, state: &StateValues) -> Result<(Vec<f64>, f64, StateValues), ModelError> {
        GeneratorModel::step(self, input, state)
    }
}

/// One decoded suffix. Durations are in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub activities: Vec<usize>,
    pub durations: Vec<f64>,
    /// Sum of `ln π` over the chosen activities, `[EOS]` included.
    pub log_prob: f64,
    /// Hit the length cap before `[EOS]`.
    pub truncated: bool,
}

impl Prediction {
    pub fn durations_days(&self, scaler: &TimeScaler) -> Vec<f64> {
        self.durations.iter().map(|&d| scaler.denormalize(d)).collect()
    }

    /// Sum of the per-step durations, in days.
    pub fn remaining_time(&self, scaler: &TimeScaler) -> f64 {
        self.durations_days(scaler).iter().sum()
    }

    /// Activities without the trailing `[EOS]`.
    pub fn activities_without_eos(&self) -> Vec<usize> {
        self.activities.iter().copied().filter(|&a| a != EOS_ID).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_length: usize,
}

impl BeamConfig {
    pub fn new(beam_size: usize, max_length: usize) -> Self {
        assert!(
            beam_size >= 1 && max_length >= 1,
            "beam size and cap must be at least 1"
        );
        Self { beam_size, max_length }
    }
}

fn log_prob(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

/// Candidate ordering: higher score, then lower activity, then older parent.
fn rank(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// 1-best decoding: the most probable activity at every step until `[EOS]`
/// or `cap` steps. `[SOS]` is never emitted.
pub fn greedy_decode<M: StepModel>(model: &M, prefix: &[EncodedEvent], cap: usize) -> Result<Prediction, ModelError> {
    let m = model.vocab_size();
    let mut state = model.start(prefix)?;
    let mut input = start_event(m);
    let mut pred = Prediction {
        activities: Vec::new(),
        durations: Vec::new(),
        log_prob: 0.0,
        truncated: true,
    };
    while pred.activities.len() < cap {
        let (probs, t, next) = model.step(&input, &state)?;
        let (score, a, _) = (0..m)
            .filter(|&a| a != SOS_ID)
            .map(|a| (pred.log_prob + log_prob(probs[a]), a, 0))
            .min_by(rank)
            .expect("at least one activity");
        pred.activities.push(a);
        pred.durations.push(t);
        pred.log_prob = score;
        if a == EOS_ID {
            pred.truncated = false;
            break;
        }
        input = EncodedEvent::one_hot(a, m, t);
        state = next;
    }
    Ok(pred)
}

struct Hypothesis<S> {
    pred: Prediction,
    state: S,
    input: EncodedEvent,
}

/// Beam search returning up to `beam_size` suffixes: completed ones by
/// descending log-probability, then any cap-truncated ones.
///
/// Each step expands every live hypothesis over all activities and keeps the
/// best `width` candidates; a candidate ending in `[EOS]` is moved to the
/// completed set and shrinks `width` by one.
pub fn beam_search<M: StepModel>(
    model: &M,
    prefix: &[EncodedEvent],
    cfg: BeamConfig,
) -> Result<Vec<Prediction>, ModelError> {
    let m = model.vocab_size();
    let mut live = vec![Hypothesis {
        pred: Prediction {
            activities: Vec::new(),
            durations: Vec::new(),
            log_prob: 0.0,
            truncated: false,
        },
        state: model.start(prefix)?,
        input: start_event(m),
    }];
    let mut width = cfg.beam_size;
    let mut completed = Vec::new();
    let mut truncated = Vec::new();

    while !live.is_empty() && width > 0 {
        let mut expansions = Vec::with_capacity(live.len());
        let mut candidates = Vec::with_capacity(live.len() * m);
        for (hi, h) in live.iter().enumerate() {
            let (probs, t, next) = model.step(&h.input, &h.state)?;
            for a in (0..m).filter(|&a| a != SOS_ID) {
                candidates.push((h.pred.log_prob + log_prob(probs[a]), a, hi));
            }
            expansions.push((t, next));
        }
        candidates.sort_by(rank);
        candidates.truncate(width);

        let mut next_live = Vec::with_capacity(candidates.len());
        for (score, a, hi) in candidates {
            let (t, ref state) = expansions[hi];
            let mut pred = live[hi].pred.clone();
            pred.activities.push(a);
            pred.durations.push(t);
            pred.log_prob = score;
            if a == EOS_ID {
                completed.push(pred);
                width -= 1;
            } else if pred.activities.len() >= cfg.max_length {
                pred.truncated = true;
                truncated.push(pred);
            } else {
                next_live.push(Hypothesis {
                    pred,
                    state: state.clone(),
                    input: EncodedEvent::one_hot(a, m, t),
                });
            }
        }
        live = next_live;
    }

    completed.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    truncated.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    completed.extend(truncated);
    completed.truncate(cfg.beam_size);
    Ok(completed)
}

/// Serialized form of one ranked prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub prefix_id: String,
    pub rank: usize,
    pub activities: Vec<String>,
    pub durations_days: Vec<f64>,
    pub remaining_time_days: f64,
    pub log_prob: f64,
    pub truncated: bool,
}

impl PredictionRecord {
    pub fn new(prefix_id: &str, rank: usize, pred: &Prediction, vocab: &Vocabulary, scaler: &TimeScaler) -> Self {
        Self {
            prefix_id: prefix_id.to_string(),
            rank,
            activities: pred.activities.iter().map(|&a| vocab.label(a).to_string()).collect(),
            durations_days: pred.durations_days(scaler),
            remaining_time_days: pred.remaining_time(scaler),
            log_prob: pred.log_prob,
            truncated: pred.truncated,
        }
    }
}

/// Writes records as JSON lines.
pub fn write_records<W: Write>(records: &[PredictionRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
