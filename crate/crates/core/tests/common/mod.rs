#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppm_core::autodiff::{finite_difference_check, Binding, ParamStore, Tape, Tensor, TensorError, Var};
use ppm_core::eventlog::{generate_synthetic_log, EncodedEvent, EventLog, SyntheticSpec, EOS_ID, SOS_ID};
use ppm_core::infer::{Prediction, StepModel};
use ppm_core::nn::{
    gumbel_softmax, lstm_step, processing_block, sample_gumbel, smooth_real_suffix, start_event, DiscriminatorModel,
    GeneratorModel, ModelError, Topology,
};
use ppm_core::pipeline::{train_on, Dataset, TrainedModel};
use ppm_core::train::{
    adversarial_rollout, discriminator_loss, generator_adversarial_loss, supervised_loss, PreparedPair, TrainConfig,
    TrainMode,
};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_POINTS: usize = 10;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn two_variant_spec() -> SyntheticSpec {
    let text = std::fs::read_to_string(data_dir().join("two_variants.toml")).unwrap();
    SyntheticSpec::from_toml(&text).unwrap()
}

/// The 100-trace log with variants ⟨A,B,C⟩ and ⟨A,D,C⟩.
pub fn two_variant_log(seed: u64) -> EventLog {
    generate_synthetic_log(&two_variant_spec(), 100, seed).unwrap()
}

pub fn train_desk(log: &EventLog, mode: TrainMode, seed: u64) -> (Dataset, TrainedModel) {
    let dataset = Dataset::prepare(log).unwrap();
    let cfg = TrainConfig {
        mode,
        seed,
        ..TrainConfig::desk()
    };
    let trained = train_on(&dataset, &cfg, |_| {}).unwrap();
    (dataset, trained)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// A random event vector over `m` activities: a one-hot or a soft block, plus a duration.
pub fn random_event(rng: &mut ChaCha8Rng, m: usize, soft: bool) -> EncodedEvent {
    if soft {
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
        v.push(rng.gen_range(0.0..1.0));
        EncodedEvent(v)
    } else {
        EncodedEvent::one_hot(rng.gen_range(2..m), m, rng.gen_range(0.0..1.0))
    }
}

fn weighted_sum<'t>(v: Var<'t>, weights: &Tensor) -> ppm_core::autodiff::Result<Var<'t>> {
    let w = v.tape().constant(weights.clone())?;
    v.mul(w)?.sum()
}

fn lift<T, E: std::fmt::Display>(r: Result<T, E>) -> ppm_core::autodiff::Result<T> {
    r.map_err(|e| TensorError::Invalid(e.to_string()))
}

/// Worst finite-difference relative error for one network component at one
/// random point drawn from `rng`.
pub type GradientCheck = fn(&mut ChaCha8Rng) -> f64;

pub fn gradient_components() -> Vec<(&'static str, GradientCheck)> {
    vec![
        ("lstm step", check_lstm_step),
        ("activity head", check_activity_head),
        ("time head", check_time_head),
        ("gumbel-softmax", check_gumbel_softmax),
        ("discriminator", check_discriminator),
        ("supervised loss", check_supervised_loss),
        ("discriminator adversarial loss", check_discriminator_loss),
        ("generator adversarial loss", check_generator_loss),
    ]
}

fn check_lstm_step(rng: &mut ChaCha8Rng) -> f64 {
    let (input, hidden) = (3, 4);
    let params = [
        random_tensor(rng, &[4 * hidden, input + hidden], 0.8),
        random_tensor(rng, &[4 * hidden], 0.5),
        random_tensor(rng, &[input], 1.0),
        random_tensor(rng, &[hidden], 0.9),
        random_tensor(rng, &[hidden], 1.5),
    ];
    let rh = random_tensor(rng, &[hidden], 1.0);
    let rc = random_tensor(rng, &[hidden], 1.0);
    finite_difference_check(&params, FD_STEP, |_, v| {
        let (h, c) = lift(lstm_step(v[0], v[1], v[2], v[3], v[4]))?;
        weighted_sum(h, &rh)?.add(weighted_sum(c, &rc)?)
    })
    .unwrap()
}

fn check_activity_head(rng: &mut ChaCha8Rng) -> f64 {
    let (m, hidden) = (5, 4);
    let params = [
        random_tensor(rng, &[m, hidden], 1.0),
        random_tensor(rng, &[m], 0.5),
        random_tensor(rng, &[hidden], 1.0),
    ];
    let target = rng.gen_range(0..m);
    let r = random_tensor(rng, &[m], 1.0);
    finite_difference_check(&params, FD_STEP, |_, v| {
        let logits = v[0].matmul(v[2])?.add(v[1])?;
        let ce = lift(ppm_core::nn::log_softmax(logits))?
            .slice(target, target + 1)?
            .sum()?
            .neg()?;
        ce.add(weighted_sum(logits.softmax()?, &r)?)
    })
    .unwrap()
}

fn check_time_head(rng: &mut ChaCha8Rng) -> f64 {
    let hidden = 4;
    let w = random_tensor(rng, &[1, hidden], 1.0);
    let y = random_tensor(rng, &[hidden], 1.0);
    // keep the pre-activation clear of the ReLU kink and mostly positive
    let pre: f64 = w.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let bias = if pre.abs() < 0.05 {
        0.3 - pre
    } else {
        rng.gen_range(0.0..0.5)
    };
    let params = [w, Tensor::vector(vec![bias]), y];
    let target = rng.gen_range(0.0..2.0);
    finite_difference_check(&params, FD_STEP, |tape, v| {
        let t = v[0].matmul(v[2])?.add(v[1])?.relu()?;
        t.squared_error(tape.constant(Tensor::vector(vec![target]))?)
    })
    .unwrap()
}

fn check_gumbel_softmax(rng: &mut ChaCha8Rng) -> f64 {
    let m = 5;
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs = Tensor::vector(raw.iter().map(|x| x / total).collect());
    let noise = sample_gumbel(rng, m);
    let tau = rng.gen_range(0.2..2.0);
    let r = random_tensor(rng, &[m], 1.0);
    finite_difference_check(&[probs], FD_STEP, |_, v| {
        weighted_sum(lift(gumbel_softmax(v[0], &noise, tau))?, &r)
    })
    .unwrap()
}

fn random_discriminator(rng: &mut ChaCha8Rng, event_dim: usize) -> DiscriminatorModel {
    DiscriminatorModel::new(event_dim, 4, 2, rng.gen())
}

fn check_discriminator(rng: &mut ChaCha8Rng) -> f64 {
    let m = 4;
    let d = random_discriminator(rng, m + 1);
    let suffix: Vec<Tensor> = (0..3).map(|_| Tensor::vector(random_event(rng, m, true).0)).collect();
    let mut params: Vec<Tensor> = d.params.iter().map(|(_, p)| p.value.clone()).collect();
    let n = params.len();
    params.extend(suffix);
    finite_difference_check(&params, FD_STEP, |tape, v| {
        let binding = Binding::from_vars(tape, v[..n].to_vec());
        lift(d.discriminate(&binding, &v[n..]))?.sum()
    })
    .unwrap()
}

fn toy_generator(rng: &mut ChaCha8Rng) -> GeneratorModel {
    GeneratorModel::new(
        Topology {
            vocab_size: 5,
            hidden_size: 4,
            num_layers: 2,
        },
        rng.gen(),
    )
}

fn random_pair(rng: &mut ChaCha8Rng, m: usize) -> PreparedPair {
    let prefix = (0..rng.gen_range(1..4)).map(|_| random_event(rng, m, false)).collect();
    let mut suffix: Vec<EncodedEvent> = (0..rng.gen_range(1..4)).map(|_| random_event(rng, m, false)).collect();
    suffix.push(EncodedEvent::one_hot(EOS_ID, m, 0.0));
    PreparedPair {
        prefix,
        targets: suffix.iter().map(|e| e.activity()).collect(),
        remaining: suffix.iter().map(|e| e.duration()).sum(),
        suffix,
    }
}

fn store_values(g: &ParamStore) -> Vec<Tensor> {
    g.iter().map(|(_, p)| p.value.clone()).collect()
}

/// Loss value and parameter gradients of `loss` evaluated on `store`.
fn value_and_gradient<F>(store: &ParamStore, loss: F) -> (f64, Vec<Tensor>)
where
    F: for<'t> Fn(&Binding<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let binding = store.bind(&tape, true).unwrap();
    let l = loss(&binding);
    let grads = tape.backward(l).unwrap();
    let g = binding.gradient(&grads);
    (l.item(), g.iter().map(|(_, t)| t.clone()).collect())
}

/// The decoder inputs a rollout feeds back after each of `steps - 1` steps:
/// the ground truth where `teacher` says so, the processed prediction elsewhere.
#[allow(clippy::needless_range_loop)]
fn feedback_inputs(
    g: &GeneratorModel,
    prefix: &[EncodedEvent],
    truth: &[EncodedEvent],
    teacher: &[bool],
    steps: usize,
) -> Vec<EncodedEvent> {
    let mut state = g.start(prefix).unwrap();
    let mut input = start_event(g.vocab_size());
    let mut feeds = Vec::new();
    for j in 0..steps.saturating_sub(1) {
        let (probs, t, next) = g.step(&input, &state).unwrap();
        let feed = if teacher.get(j).copied().unwrap_or(false) {
            truth[j].clone()
        } else {
            processing_block(&probs, t)
        };
        feeds.push(feed.clone());
        input = feed;
        state = next;
    }
    feeds
}

// Fed-back inputs are detached by design (the activity part is an argmax),
// so the numeric side holds them fixed at the values of the unperturbed run.
fn check_supervised_loss(rng: &mut ChaCha8Rng) -> f64 {
    let g = toy_generator(rng);
    let pair = random_pair(rng, g.vocab_size());
    let teacher: Vec<bool> = (0..pair.suffix.len()).map(|_| rng.gen_bool(0.5)).collect();
    let (w_a, w_t) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));

    let mut frozen = pair.clone();
    frozen.suffix = feedback_inputs(&g, &pair.prefix, &pair.suffix, &teacher, pair.suffix.len());
    frozen.suffix.push(pair.suffix.last().unwrap().clone());
    let forced = vec![true; pair.suffix.len()];

    let original = value_and_gradient(&g.params, |b| {
        supervised_loss(&g, b, &pair, &teacher, w_a, w_t).unwrap().total
    });
    let replay = value_and_gradient(&g.params, |b| {
        supervised_loss(&g, b, &frozen, &forced, w_a, w_t).unwrap().total
    });
    assert_eq!(original, replay, "frozen replay differs from the free-running loss");

    finite_difference_check(&store_values(&g.params), FD_STEP, |tape, v| {
        let binding = Binding::from_vars(tape, v.to_vec());
        Ok(lift(supervised_loss(&g, &binding, &frozen, &forced, w_a, w_t))?.total)
    })
    .unwrap()
}

fn check_discriminator_loss(rng: &mut ChaCha8Rng) -> f64 {
    let m = 4;
    let d = random_discriminator(rng, m + 1);
    let real_hard: Vec<EncodedEvent> = (0..3).map(|_| random_event(rng, m, false)).collect();
    let real = smooth_real_suffix(&real_hard, m).unwrap();
    let fake: Vec<EncodedEvent> = (0..3).map(|_| random_event(rng, m, true)).collect();
    finite_difference_check(&store_values(&d.params), FD_STEP, |tape, v| {
        let binding = Binding::from_vars(tape, v.to_vec());
        let enc = |s: &[EncodedEvent]| {
            s.iter()
                .map(|e| tape.constant(Tensor::vector(e.0.clone())))
                .collect::<ppm_core::autodiff::Result<Vec<_>>>()
        };
        let d_real = lift(d.discriminate(&binding, &enc(&real)?))?;
        let d_fake = lift(d.discriminate(&binding, &enc(&fake)?))?;
        lift(discriminator_loss(d_real, d_fake))
    })
    .unwrap()
}

/// Rollout with fixed decoder inputs and fixed Gumbel noise.
fn frozen_rollout<'t>(
    g: &GeneratorModel,
    params: &Binding<'t>,
    prefix: &[EncodedEvent],
    feeds: &[EncodedEvent],
    noise: &[Vec<f64>],
    tau: f64,
) -> ppm_core::autodiff::Result<Vec<Var<'t>>> {
    let tape = params.tape();
    let xs = prefix
        .iter()
        .map(|e| tape.constant(Tensor::vector(e.0.clone())))
        .collect::<ppm_core::autodiff::Result<Vec<_>>>()?;
    let mut state = lift(g.encode_prefix(params, &xs))?;
    let mut input = tape.constant(Tensor::vector(start_event(g.vocab_size()).0))?;
    let mut fake = Vec::new();
    for (j, g_noise) in noise.iter().enumerate() {
        let out = lift(g.decoder_step(params, input, &state))?;
        let alpha = lift(gumbel_softmax(out.probs, g_noise, tau))?;
        fake.push(Var::concat(&[alpha, out.time])?);
        if let Some(f) = feeds.get(j) {
            input = tape.constant(Tensor::vector(f.0.clone()))?;
        }
        state = out.state;
    }
    Ok(fake)
}

fn check_generator_loss(rng: &mut ChaCha8Rng) -> f64 {
    let g = toy_generator(rng);
    let d = random_discriminator(rng, g.topology.event_dim());
    let pair = random_pair(rng, g.vocab_size());
    let steps = pair.suffix.len();
    let tau = rng.gen_range(0.3..1.0);
    let noise_seed: u64 = rng.gen();

    let mut r = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise: Vec<Vec<f64>> = (0..steps).map(|_| sample_gumbel(&mut r, g.vocab_size())).collect();
    let feeds = feedback_inputs(&g, &pair.prefix, &pair.suffix, &[], steps);
    let original = value_and_gradient(&g.params, |b| {
        let mut r = ChaCha8Rng::seed_from_u64(noise_seed);
        let fake = adversarial_rollout(&g, b, &pair.prefix, steps, tau, &mut r).unwrap();
        let db = d.params.bind(b.tape(), false).unwrap();
        generator_adversarial_loss(d.discriminate(&db, &fake).unwrap()).unwrap()
    });
    let replay = value_and_gradient(&g.params, |b| {
        let fake = frozen_rollout(&g, b, &pair.prefix, &feeds, &noise, tau).unwrap();
        let db = d.params.bind(b.tape(), false).unwrap();
        generator_adversarial_loss(d.discriminate(&db, &fake).unwrap()).unwrap()
    });
    assert_eq!(original, replay, "frozen replay differs from the adversarial rollout");

    finite_difference_check(&store_values(&g.params), FD_STEP, |tape, v| {
        let binding = Binding::from_vars(tape, v.to_vec());
        let fake = frozen_rollout(&g, &binding, &pair.prefix, &feeds, &noise, tau)?;
        let db = d.params.bind(tape, false)?;
        let d_fake = lift(d.discriminate(&db, &fake))?;
        lift(generator_adversarial_loss(d_fake))
    })
    .unwrap()
}

/// Optimal-string-alignment distance by exhaustive search over edit scripts.
///
/// A script reads both sequences left to right with five moves: match (free),
/// substitute, delete, insert, or swap an adjacent pair (each cost 1). The
/// search is depth-first with a branch-and-bound cut on the best script found.
pub fn osa_by_scripts<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], cost: usize, best: &mut usize) {
        if cost + a.len().abs_diff(b.len()) >= *best {
            return;
        }
        if a.is_empty() && b.is_empty() {
            *best = cost;
            return;
        }
        if !a.is_empty() && !b.is_empty() {
            if a[0] == b[0] {
                go(&a[1..], &b[1..], cost, best);
            }
            go(&a[1..], &b[1..], cost + 1, best);
        }
        if a.len() >= 2 && b.len() >= 2 && a[0] == b[1] && a[1] == b[0] {
            go(&a[2..], &b[2..], cost + 1, best);
        }
        if !a.is_empty() {
            go(&a[1..], b, cost + 1, best);
        }
        if !b.is_empty() {
            go(a, &b[1..], cost + 1, best);
        }
    }
    let mut best = a.len() + b.len() + 1;
    go(a, b, 0, &mut best);
    best
}

/// Step model whose distribution is a fixed pseudo-random function of the
/// emitted history. State is the history itself.
pub struct HistoryModel {
    pub m: usize,
    pub seed: u64,
}

impl HistoryModel {
    pub fn distribution(&self, history: &[usize]) -> Vec<f64> {
        let key = history
            .iter()
            .fold(self.seed, |k, &a| k.wrapping_mul(31).wrapping_add(a as u64 + 1));
        let mut r = ChaCha8Rng::seed_from_u64(key);
        let raw: Vec<f64> = (0..self.m).map(|_| r.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    }

    pub fn duration(&self, history: &[usize]) -> f64 {
        0.1 * history.len() as f64 + 0.05
    }
}

impl StepModel for HistoryModel {
    type State = Vec<usize>;

    fn vocab_size(&self) -> usize {
        self.m
    }

    fn start(&self, prefix: &[EncodedEvent]) -> Result<Vec<usize>, ModelError> {
        Ok(prefix.iter().map(|e| e.activity() + 100).collect())
    }

    fn step(&self, input: &EncodedEvent, state: &Vec<usize>) -> Result<(Vec<f64>, f64, Vec<usize>), ModelError> {
        let mut next = state.clone();
        if input.activity() != SOS_ID {
            next.push(input.activity());
        }
        Ok((self.distribution(&next), self.duration(&next), next))
    }
}

/// Every suffix a decoder could emit from `model` with `cap` steps: completed
/// ones by descending score, then truncated ones by descending score.
pub fn enumerate_suffixes(model: &HistoryModel, prefix: &[EncodedEvent], cap: usize) -> Vec<Prediction> {
    let base = model.start(prefix).unwrap();
    let mut complete = Vec::new();
    let mut truncated = Vec::new();
    let mut stack = vec![(Vec::<usize>::new(), Vec::<f64>::new(), 0.0)];
    while let Some((acts, durs, score)) = stack.pop() {
        let mut history = base.clone();
        history.extend(&acts);
        let probs = model.distribution(&history);
        let t = model.duration(&history);
        for a in (0..model.m).filter(|&a| a != SOS_ID) {
            let mut acts2 = acts.clone();
            acts2.push(a);
            let mut durs2 = durs.clone();
            durs2.push(t);
            let s = score + probs[a].ln();
            let p = Prediction {
                activities: acts2.clone(),
                durations: durs2.clone(),
                log_prob: s,
                truncated: false,
            };
            if a == EOS_ID {
                complete.push(p);
            } else if acts2.len() == cap {
                truncated.push(Prediction { truncated: true, ..p });
            } else {
                stack.push((acts2, durs2, s));
            }
        }
    }
    complete.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    truncated.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    complete.extend(truncated);
    complete
}
