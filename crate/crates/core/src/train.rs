//! Supervised and adversarial training of the generator.
//!
//! Per training pair, MLE mode performs one supervised update. MLMME mode
//! first updates the discriminator on a real/fake suffix pair, then updates
//! the generator against the refreshed discriminator, and finally applies
//! the supervised update.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Binding, Gradient, ParamStore, Tape, Tensor, TensorError, Var};
use crate::eventlog::{encode_sequence, LogError, PrefixSuffixPair, TimeScaler, Vocabulary};
use crate::nn::{
    gumbel_softmax, log_softmax, processing_block, sample_gumbel, smooth_real_suffix, start_event, DiscriminatorModel,
    GeneratorModel, ModelError,
};

/// Floor on probabilities inside the adversarial log terms.
pub const ADV_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split has no prefix/suffix pairs")]
    EmptySplit(&'static str),
    #[error("non-finite {what} at iteration {iteration}")]
    Diverged { iteration: usize, what: String },
    #[error("non-finite gradient in parameter {0:?}")]
    NonFiniteGradient(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Mle,
    Mlmme,
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(TrainMode::Mle),
            "mlmme" => Ok(TrainMode::Mlmme),
            other => Err(format!("unknown training mode {other:?} (expected mle or mlmme)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Passes over the training pairs.
    pub iterations: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub teacher_forcing_ratio: f64,
    pub w_a: f64,
    pub w_t: f64,
    pub tau_start: f64,
    pub tau_min: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Mlmme,
            iterations: 500,
            patience: 30,
            learning_rate: 5e-5,
            clip_norm: 1.0,
            teacher_forcing_ratio: 0.1,
            w_a: 1.0,
            w_t: 1.0,
            tau_start: 0.9,
            tau_min: 0.05,
            rho: 0.9,
            epsilon: 1e-8,
            hidden_size: 200,
            num_layers: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small CPU-friendly network and schedule.
    pub fn desk() -> Self {
        Self {
            iterations: 50,
            hidden_size: 32,
            num_layers: 1,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("w_a", self.w_a),
            ("w_t", self.w_t),
            ("tau_start", self.tau_start),
            ("tau_min", self.tau_min),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rho >= 1.0 {
            return Err(TrainError::Config("rho must be below 1".into()));
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_ratio) {
            return Err(TrainError::Config("teacher_forcing_ratio must lie in [0, 1]".into()));
        }
        if self.tau_min > self.tau_start {
            return Err(TrainError::Config("tau_min exceeds tau_start".into()));
        }
        if self.iterations == 0 || self.patience == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(TrainError::Config(
                "iterations, patience, hidden_size and num_layers must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A pair encoded against a vocabulary and time scale.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPair {
    pub prefix: Vec<crate::eventlog::EncodedEvent>,
    pub suffix: Vec<crate::eventlog::EncodedEvent>,
    pub targets: Vec<usize>,
    /// Scaled ground-truth remaining time.
    pub remaining: f64,
}

impl PreparedPair {
    pub fn new(pair: &PrefixSuffixPair, vocab: &Vocabulary, scaler: &TimeScaler) -> Result<Self> {
        let prefix = encode_sequence(&pair.prefix, vocab, scaler)?;
        let suffix = encode_sequence(&pair.suffix, vocab, scaler)?;
        Ok(Self {
            targets: pair.suffix.iter().map(|e| e.activity_id).collect(),
            remaining: suffix.iter().map(|e| e.duration()).sum(),
            prefix,
            suffix,
        })
    }

    pub fn prepare_all(pairs: &[PrefixSuffixPair], vocab: &Vocabulary, scaler: &TimeScaler) -> Result<Vec<Self>> {
        pairs.iter().map(|p| Self::new(p, vocab, scaler)).collect()
    }
}

fn constant<'t>(tape: &'t Tape, v: &[f64]) -> Result<Var<'t>> {
    Ok(tape.constant(Tensor::new(vec![v.len()], v.to_vec())?)?)
}

pub struct SupervisedLoss<'t> {
    pub total: Var<'t>,
    pub activity: Var<'t>,
    pub time: Var<'t>,
}

/// `Σ_j −log π_j[target_j]` from per-step logits.
pub fn activity_loss<'t>(logits: &[Var<'t>], targets: &[usize]) -> Result<Var<'t>> {
    let terms = logits
        .iter()
        .zip(targets)
        .map(|(l, &a)| Ok(log_softmax(*l)?.slice(a, a + 1)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Var::concat(&terms)?.sum()?.neg()?)
}

/// `(Σ predicted − truth)²`.
pub fn time_loss<'t>(predicted: &[Var<'t>], truth_total: f64) -> Result<Var<'t>> {
    let tape = predicted[0].tape();
    let total = Var::concat(predicted)?.sum()?;
    Ok(total.squared_error(tape.constant(Tensor::scalar(truth_total))?)?)
}

/// Open-loop supervised loss over a target-length rollout.
///
/// `teacher[j]` replaces the fed-back prediction after step `j` with the
/// ground-truth event; missing entries count as `false`.
pub fn supervised_loss<'t>(
    g: &GeneratorModel,
    params: &Binding<'t>,
    pair: &PreparedPair,
    teacher: &[bool],
    w_a: f64,
    w_t: f64,
) -> Result<SupervisedLoss<'t>> {
    let tape = params.tape();
    let m = g.vocab_size();
    let prefix = pair
        .prefix
        .iter()
        .map(|e| constant(tape, &e.0))
        .collect::<Result<Vec<_>>>()?;
    let mut state = g.encode_prefix(params, &prefix)?;
    let mut input = constant(tape, &start_event(m).0)?;
    let steps = pair.suffix.len();
    let mut logits = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    for j in 0..steps {
        let out = g.decoder_step(params, input, &state)?;
        if j + 1 < steps {
            let next = if teacher.get(j).copied().unwrap_or(false) {
                pair.suffix[j].clone()
            } else {
                processing_block(out.probs.value().data(), out.time.item())
            };
            input = constant(tape, &next.0)?;
        }
        logits.push(out.logits);
        times.push(out.time);
        state = out.state;
    }
    let activity = activity_loss(&logits, &pair.targets)?;
    let time = time_loss(&times, pair.remaining)?;
    let total = activity.scale(w_a)?.add(time.scale(w_t)?)?;
    Ok(SupervisedLoss { total, activity, time })
}

/// `−log D(real) − log(1 − D(fake))`, both terms floored.
pub fn discriminator_loss<'t>(d_real: Var<'t>, d_fake: Var<'t>) -> Result<Var<'t>> {
    let real = d_real.clamp_min(ADV_FLOOR)?.ln()?;
    let fake = d_fake.affine(-1.0, 1.0)?.clamp_min(ADV_FLOOR)?.ln()?;
    Ok(real.add(fake)?.neg()?)
}

/// `−[log D(fake) − log(1 − D(fake))]`, both terms floored.
pub fn generator_adversarial_loss<'t>(d_fake: Var<'t>) -> Result<Var<'t>> {
    let a = d_fake.clamp_min(ADV_FLOOR)?.ln()?;
    let b = d_fake.affine(-1.0, 1.0)?.clamp_min(ADV_FLOOR)?.ln()?;
    Ok(a.sub(b)?.neg()?)
}

/// Generator rollout whose emitted events carry Gumbel-relaxed activity
/// vectors. The decoder is fed the hard processed prediction, as at inference.
pub fn adversarial_rollout<'t, R: Rng>(
    g: &GeneratorModel,
    params: &Binding<'t>,
    prefix: &[crate::eventlog::EncodedEvent],
    steps: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<Var<'t>>> {
    let tape = params.tape();
    let m = g.vocab_size();
    let xs = prefix
        .iter()
        .map(|e| constant(tape, &e.0))
        .collect::<Result<Vec<_>>>()?;
    let mut state = g.encode_prefix(params, &xs)?;
    let mut input = constant(tape, &start_event(m).0)?;
    let mut fake = Vec::with_capacity(steps);
    for j in 0..steps {
        let out = g.decoder_step(params, input, &state)?;
        let noise = sample_gumbel(rng, m);
        let alpha = gumbel_softmax(out.probs, &noise, temperature)?;
        fake.push(Var::concat(&[alpha, out.time])?);
        if j + 1 < steps {
            input = constant(tape, &processing_block(out.probs.value().data(), out.time.item()).0)?;
        }
        state = out.state;
    }
    Ok(fake)
}

/// RMSprop with per-layer gradient-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    mean_square: Vec<Tensor>,
}

/// Largest per-layer gradient norm before and after clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipStats {
    pub max_norm: f64,
    pub max_clipped_norm: f64,
}

impl RmsProp {
    pub fn new(store: &ParamStore, learning_rate: f64, rho: f64, epsilon: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            rho,
            epsilon,
            clip_norm,
            mean_square: store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn from_config(store: &ParamStore, cfg: &TrainConfig) -> Self {
        Self::new(store, cfg.learning_rate, cfg.rho, cfg.epsilon, cfg.clip_norm)
    }

    pub fn mean_square(&self) -> &[Tensor] {
        &self.mean_square
    }

    /// Clips each layer's gradient to `clip_norm`, then applies
    /// `v ← ρv + (1−ρ)g²; p ← p − lr·g/√(v+ε)`.
    pub fn update(&mut self, store: &mut ParamStore, grad: &Gradient) -> Result<ClipStats> {
        for ((_, p), (_, g)) in store.iter().zip(grad.iter()) {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient(p.name.clone()));
            }
        }
        let mut group_sq: BTreeMap<&str, f64> = BTreeMap::new();
        for ((_, p), (_, g)) in store.iter().zip(grad.iter()) {
            *group_sq.entry(p.group.as_str()).or_default() += g.norm_sq();
        }
        let factors: BTreeMap<String, (f64, f64)> = group_sq
            .into_iter()
            .map(|(k, sq)| {
                let norm = sq.sqrt();
                let f = if norm > self.clip_norm {
                    self.clip_norm / norm
                } else {
                    1.0
                };
                (k.to_string(), (f, norm))
            })
            .collect();
        let mut stats = ClipStats {
            max_norm: 0.0,
            max_clipped_norm: 0.0,
        };
        for &(f, norm) in factors.values() {
            stats.max_norm = stats.max_norm.max(norm);
            stats.max_clipped_norm = stats.max_clipped_norm.max(norm * f);
        }
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for ((id, p), v) in store.iter_mut().zip(self.mean_square.iter_mut()) {
            let f = factors[&p.group].0;
            let g = grad.get(id).data();
            let vs = v.data_mut();
            let ps = p.value.data_mut();
            for i in 0..ps.len() {
                let gi = g[i] * f;
                vs[i] = rho * vs[i] + (1.0 - rho) * gi * gi;
                ps[i] -= lr * gi / (vs[i] + eps).sqrt();
            }
        }
        Ok(stats)
    }
}

/// `max(τ_start · r^i, τ_min)` with `r = (τ_min/τ_start)^(1/iterations)`.
pub fn anneal_temperature(iteration: usize, cfg: &TrainConfig) -> f64 {
    let r = (cfg.tau_min / cfg.tau_start).powf(1.0 / cfg.iterations as f64);
    (cfg.tau_start * r.powf(iteration as f64)).max(cfg.tau_min)
}

/// Discriminator and generator adversarial losses of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialLosses {
    pub discriminator: f64,
    pub generator: f64,
}

/// One discriminator update followed by one adversarial generator update.
pub fn adversarial_step<R: Rng>(
    g: &mut GeneratorModel,
    d: &mut DiscriminatorModel,
    pair: &PreparedPair,
    temperature: f64,
    rng: &mut R,
    g_opt: &mut RmsProp,
    d_opt: &mut RmsProp,
) -> Result<AdversarialLosses> {
    let m = g.vocab_size();
    let steps = pair.suffix.len();
    let real = smooth_real_suffix(&pair.suffix, m)?;

    let d_loss = {
        let tape = Tape::new();
        let gp = g.params.bind(&tape, false)?;
        let dp = d.params.bind(&tape, true)?;
        let fake = adversarial_rollout(g, &gp, &pair.prefix, steps, temperature, rng)?;
        let real_vars = real.iter().map(|e| constant(&tape, &e.0)).collect::<Result<Vec<_>>>()?;
        let d_real = d.discriminate(&dp, &real_vars)?;
        let d_fake = d.discriminate(&dp, &fake)?;
        let loss = discriminator_loss(d_real, d_fake)?;
        let grads = tape.backward(loss)?;
        d_opt.update(&mut d.params, &dp.gradient(&grads))?;
        loss.item()
    };

    let g_loss = {
        let tape = Tape::new();
        let gp = g.params.bind(&tape, true)?;
        let dp = d.params.bind(&tape, false)?;
        let fake = adversarial_rollout(g, &gp, &pair.prefix, steps, temperature, rng)?;
        let d_fake = d.discriminate(&dp, &fake)?;
        let loss = generator_adversarial_loss(d_fake)?;
        let grads = tape.backward(loss)?;
        g_opt.update(&mut g.params, &gp.gradient(&grads))?;
        loss.item()
    };

    Ok(AdversarialLosses {
        discriminator: d_loss,
        generator: g_loss,
    })
}

/// Value and components of one supervised update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupervisedStep {
    pub total: f64,
    pub activity: f64,
    pub time: f64,
    pub clip: ClipStats,
}

pub fn supervised_step(
    g: &mut GeneratorModel,
    pair: &PreparedPair,
    teacher: &[bool],
    cfg: &TrainConfig,
    opt: &mut RmsProp,
) -> Result<SupervisedStep> {
    let tape = Tape::new();
    let params = g.params.bind(&tape, true)?;
    let loss = supervised_loss(g, &params, pair, teacher, cfg.w_a, cfg.w_t)?;
    let grads = tape.backward(loss.total)?;
    let clip = opt.update(&mut g.params, &params.gradient(&grads))?;
    Ok(SupervisedStep {
        total: loss.total.item(),
        activity: loss.activity.item(),
        time: loss.time.item(),
        clip,
    })
}

/// Mean supervised loss without teacher forcing.
pub fn validation_loss(g: &GeneratorModel, pairs: &[PreparedPair], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let tape = Tape::new();
        let params = g.params.bind(&tape, false)?;
        total += supervised_loss(g, &params, p, &[], cfg.w_a, cfg.w_t)?.total.item();
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub temperature: f64,
    pub supervised_loss: f64,
    pub activity_loss: f64,
    pub time_loss: f64,
    pub discriminator_loss: Option<f64>,
    pub generator_adversarial_loss: Option<f64>,
    pub validation_loss: f64,
    pub discriminator_updates: usize,
    pub generator_updates: usize,
    /// Largest per-layer gradient norm after clipping, over all updates.
    pub max_clipped_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iterations: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

impl LossReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "iteration,temperature,supervised_loss,activity_loss,time_loss,discriminator_loss,generator_adversarial_loss,validation_loss,discriminator_updates,generator_updates"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.iterations {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{},{},{:e},{},{}",
                r.iteration,
                r.temperature,
                r.supervised_loss,
                r.activity_loss,
                r.time_loss,
                opt(r.discriminator_loss),
                opt(r.generator_adversarial_loss),
                r.validation_loss,
                r.discriminator_updates,
                r.generator_updates
            )?;
        }
        Ok(())
    }
}

pub struct FitOutcome {
    /// Parameters from the iteration with the lowest validation loss.
    pub generator: GeneratorModel,
    pub discriminator: Option<DiscriminatorModel>,
    pub report: LossReport,
    /// Wall-clock time of each training pass, validation excluded.
    pub iteration_times: Vec<Duration>,
}

pub fn fit(
    g: GeneratorModel,
    train: &[PreparedPair],
    validation: &[PreparedPair],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    fit_with(g, train, validation, cfg, |_| {})
}

/// [`fit`] with a callback after every iteration.
pub fn fit_with(
    mut g: GeneratorModel,
    train: &[PreparedPair],
    validation: &[PreparedPair],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut gumbel_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    gumbel_rng.set_stream(2);

    let mut g_opt = RmsProp::from_config(&g.params, cfg);
    let mut disc = match cfg.mode {
        TrainMode::Mle => None,
        TrainMode::Mlmme => {
            let d = DiscriminatorModel::new(
                g.topology.event_dim(),
                cfg.hidden_size,
                cfg.num_layers,
                cfg.seed.wrapping_add(0x5EED),
            );
            let opt = RmsProp::from_config(&d.params, cfg);
            Some((d, opt))
        }
    };

    let mut report = LossReport {
        best_validation_loss: f64::INFINITY,
        ..LossReport::default()
    };
    let mut best = g.clone();
    let mut stale = 0;
    let mut times = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for it in 0..cfg.iterations {
        let iteration = it + 1;
        let tau = anneal_temperature(it, cfg);
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sup, mut act, mut tim, mut dl, mut gl) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut d_updates, mut g_updates) = (0, 0);
        let mut max_clipped: f64 = 0.0;
        for &i in &order {
            let pair = &train[i];
            if let Some((d, d_opt)) = disc.as_mut() {
                let adv = adversarial_step(&mut g, d, pair, tau, &mut gumbel_rng, &mut g_opt, d_opt)?;
                if !(adv.discriminator.is_finite() && adv.generator.is_finite()) {
                    return Err(TrainError::Diverged {
                        iteration,
                        what: "adversarial loss".into(),
                    });
                }
                dl += adv.discriminator;
                gl += adv.generator;
                d_updates += 1;
                g_updates += 1;
            }
            let teacher: Vec<bool> = (1..pair.suffix.len())
                .map(|_| rng.gen::<f64>() < cfg.teacher_forcing_ratio)
                .collect();
            let step = supervised_step(&mut g, pair, &teacher, cfg, &mut g_opt)?;
            if !step.total.is_finite() {
                return Err(TrainError::Diverged {
                    iteration,
                    what: "supervised loss".into(),
                });
            }
            g_updates += 1;
            max_clipped = max_clipped.max(step.clip.max_clipped_norm);
            sup += step.total;
            act += step.activity;
            tim += step.time;
        }
        times.push(started.elapsed());

        let val = validation_loss(&g, validation, cfg)?;
        if !val.is_finite() {
            return Err(TrainError::Diverged {
                iteration,
                what: "validation loss".into(),
            });
        }
        let n = train.len() as f64;
        let adversarial = disc.is_some();
        let record = IterationRecord {
            iteration,
            temperature: tau,
            supervised_loss: sup / n,
            activity_loss: act / n,
            time_loss: tim / n,
            discriminator_loss: adversarial.then_some(dl / n),
            generator_adversarial_loss: adversarial.then_some(gl / n),
            validation_loss: val,
            discriminator_updates: d_updates,
            generator_updates: g_updates,
            max_clipped_norm: max_clipped,
        };
        observer(&record);
        report.iterations.push(record);

        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_iteration = iteration;
            best = g.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    Ok(FitOutcome {
        generator: best,
        discriminator: disc.map(|(d, _)| d),
        report,
        iteration_times: times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::EncodedEvent;
    use crate::nn::Topology;

    fn tiny(m: usize) -> GeneratorModel {
        GeneratorModel::new(
            Topology {
                vocab_size: m,
                hidden_size: 4,
                num_layers: 1,
            },
            5,
        )
    }

    #[test]
    fn single_step_half_probability_loss() {
        // m = 3: [SOS], [EOS], A. Logits (0, ln 2, 0) put 0.5 on [EOS].
        let mut g = tiny(3);
        let (aw, ab) = g.activity_head_ids();
        *g.params.get_mut(aw) = Tensor::zeros(&[3, 4]);
        *g.params.get_mut(ab) = Tensor::vector(vec![0.0, 2f64.ln(), 0.0]);
        let (tw, tb) = g.time_head_ids();
        *g.params.get_mut(tw) = Tensor::zeros(&[1, 4]);
        *g.params.get_mut(tb) = Tensor::zeros(&[1]);
        let pair = PreparedPair {
            prefix: vec![EncodedEvent::one_hot(2, 3, 0.0), EncodedEvent::one_hot(2, 3, 0.5)],
            suffix: vec![EncodedEvent::one_hot(1, 3, 0.0)],
            targets: vec![1],
            remaining: 0.0,
        };
        let tape = Tape::new();
        let params = g.params.bind(&tape, false).unwrap();
        let loss = supervised_loss(&g, &params, &pair, &[], 1.0, 1.0).unwrap();
        assert!((loss.total.item() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(loss.time.item(), 0.0);
    }

    #[test]
    fn time_loss_arithmetic() {
        let tape = Tape::new();
        let t = [
            tape.constant(Tensor::scalar(1.0)).unwrap(),
            tape.constant(Tensor::scalar(2.0)).unwrap(),
        ];
        assert_eq!(time_loss(&t, 4.0).unwrap().item(), 1.0);
    }

    #[test]
    fn adversarial_losses_at_half() {
        let tape = Tape::new();
        let half = tape.constant(Tensor::scalar(0.5)).unwrap();
        let ld = discriminator_loss(half, half).unwrap().item();
        assert!((ld - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(generator_adversarial_loss(half).unwrap().item(), 0.0);
    }

    #[test]
    fn adversarial_floor_bounds_generator_reward() {
        let tape = Tape::new();
        let one = tape.constant(Tensor::scalar(1.0)).unwrap();
        let lg = generator_adversarial_loss(one).unwrap().item();
        assert!((lg - ADV_FLOOR.ln()).abs() < 1e-12);
        let zero = tape.constant(Tensor::scalar(0.0)).unwrap();
        let ld = discriminator_loss(zero, one).unwrap().item();
        assert!((ld + 2.0 * ADV_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_hand_calculation() {
        let mut store = ParamStore::new();
        let id = store.add("p", "layer", Tensor::scalar(0.0));
        let mut opt = RmsProp::new(&store, 5e-5, 0.9, 1e-8, 1.0);
        let mut grad = Gradient::zeros_like(&store);
        *grad.get_mut(id) = Tensor::scalar(1.0);
        opt.update(&mut store, &grad).unwrap();
        assert!((opt.mean_square()[0].item() - 0.1).abs() < 1e-15);
        let expected = -5e-5 / (0.1f64 + 1e-8).sqrt();
        assert!((store.get(id).item() - expected).abs() < 1e-15);
        assert!((store.get(id).item() + 1.5811e-4).abs() < 1e-8);
    }

    #[test]
    fn clipping_is_per_layer() {
        let mut store = ParamStore::new();
        let a = store.add("a.w", "a", Tensor::vector(vec![0.0, 0.0]));
        let b = store.add("b.w", "b", Tensor::vector(vec![0.0]));
        let mut opt = RmsProp::new(&store, 1e-3, 0.9, 1e-8, 1.0);
        let mut grad = Gradient::zeros_like(&store);
        *grad.get_mut(a) = Tensor::vector(vec![0.0, 4.0]);
        *grad.get_mut(b) = Tensor::vector(vec![0.5]);
        let stats = opt.update(&mut store, &grad).unwrap();
        assert_eq!(stats.max_norm, 4.0);
        assert!((stats.max_clipped_norm - 1.0).abs() < 1e-12);
        // clipped gradient is (0, 1): v = 0.1 exactly
        assert!((opt.mean_square()[0].data()[1] - 0.1).abs() < 1e-15);
        assert!((opt.mean_square()[1].item() - 0.1 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.add("p", "l", Tensor::vector(vec![0.3, -0.2]));
        let before = store.clone();
        let mut opt = RmsProp::new(&store, 1e-2, 0.9, 1e-8, 1.0);
        opt.update(&mut store, &Gradient::zeros_like(&before)).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn temperature_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(anneal_temperature(0, &cfg), 0.9);
        assert!((anneal_temperature(500, &cfg) - 0.05).abs() < 1e-12);
        assert_eq!(anneal_temperature(900, &cfg), 0.05);
        for i in 0..600 {
            assert!(anneal_temperature(i + 1, &cfg) <= anneal_temperature(i, &cfg));
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = TrainConfig::from_toml("mode = \"mle\"\niterations = 10\n").unwrap();
        assert_eq!(cfg.mode, TrainMode::Mle);
        assert_eq!(cfg.iterations, 10);
        assert_eq!(cfg.learning_rate, 5e-5);
        assert!(TrainConfig::from_toml("teacher_forcing_ratio = 1.5").is_err());
        assert!(TrainConfig::from_toml("nope = 1").is_err());
        assert!(TrainConfig::from_toml("learning_rate = 0.0").is_err());
    }
}
