//! Recurrent building blocks: stacked LSTMs, the encoder-decoder generator
//! with its activity and time heads, Gumbel-softmax relaxation, and the
//! LSTM discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Binding, ParamId, ParamStore, Tape, Tensor, TensorError, Var};
use crate::eventlog::{argmax, EncodedEvent, SOS_ID};

/// Floor applied to probabilities before taking logs in the relaxation.
pub const PROB_FLOOR: f64 = 1e-12;

/// Probability mass on the correct activity of a smoothed real suffix.
pub const REAL_SMOOTHING: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0} must not be empty")]
    EmptySequence(&'static str),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("expected input of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least 2 activities, got {0}")]
    TooFewActivities(usize),
    #[error("parameter {0:?} missing or mis-shaped")]
    BadParameter(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Uniform in `[-1/√fan_in, 1/√fan_in]`.
fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite init")
}

/// Recurrent `(hidden, cell)` per layer, on a tape.
#[derive(Clone, Debug)]
pub struct LstmState<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> LstmState<'t> {
    pub fn zeros(tape: &'t Tape, num_layers: usize, hidden: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|_| {
                Ok((
                    tape.constant(Tensor::zeros(&[hidden]))?,
                    tape.constant(Tensor::zeros(&[hidden]))?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn top_hidden(&self) -> Var<'t> {
        self.layers.last().expect("at least one layer").0
    }

    pub fn to_values(&self) -> StateValues {
        StateValues {
            layers: self.layers.iter().map(|(h, c)| (h.value(), c.value())).collect(),
        }
    }
}

/// Tape-independent copy of an [`LstmState`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateValues {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl StateValues {
    pub fn bind<'t>(&self, tape: &'t Tape) -> Result<LstmState<'t>> {
        let layers = self
            .layers
            .iter()
            .map(|(h, c)| Ok((tape.constant(h.clone())?, tape.constant(c.clone())?)))
            .collect::<Result<_>>()?;
        Ok(LstmState { layers })
    }
}

/// One LSTM update with fused gate weights.
///
/// `w` is `[4h, in + h]` and `b` is `[4h]`; gate rows are ordered input,
/// forget, candidate, output.
pub fn lstm_step<'t>(w: Var<'t>, b: Var<'t>, x: Var<'t>, h: Var<'t>, c: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let hidden = h.shape()[0];
    let ws = w.shape();
    let expected = ws.get(1).copied().unwrap_or(0).saturating_sub(hidden);
    let got = x.shape()[0];
    if ws.len() != 2 || ws[0] != 4 * hidden || got != expected {
        return Err(ModelError::Dimension { expected, got });
    }
    let z = w.matmul(Var::concat(&[x, h])?)?.add(b)?;
    let i = z.slice(0, hidden)?.sigmoid()?;
    let f = z.slice(hidden, 2 * hidden)?.sigmoid()?;
    let g = z.slice(2 * hidden, 3 * hidden)?.tanh()?;
    let o = z.slice(3 * hidden, 4 * hidden)?.sigmoid()?;
    let c_next = f.mul(c)?.add(i.mul(g)?)?;
    let h_next = o.mul(c_next.tanh()?)?;
    Ok((h_next, c_next))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackedLstm {
    pub layers: Vec<LstmLayer>,
}

impl StackedLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { hidden_size };
                let group = format!("{name}.l{l}");
                let fan_in = inp + hidden_size;
                let weight = store.add(
                    format!("{group}.weight"),
                    &group,
                    uniform_init(rng, &[4 * hidden_size, fan_in], fan_in),
                );
                let bias = store.add(
                    format!("{group}.bias"),
                    &group,
                    uniform_init(rng, &[4 * hidden_size], fan_in),
                );
                LstmLayer {
                    weight,
                    bias,
                    input_size: inp,
                    hidden_size,
                }
            })
            .collect();
        Self { layers }
    }

    /// Looks up existing parameters by name (checkpoint restore).
    pub fn from_store(
        store: &ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
    ) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { hidden_size };
                let group = format!("{name}.l{l}");
                Ok(LstmLayer {
                    weight: expect_param(store, &format!("{group}.weight"), &[4 * hidden_size, inp + hidden_size])?,
                    bias: expect_param(store, &format!("{group}.bias"), &[4 * hidden_size])?,
                    input_size: inp,
                    hidden_size,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn step<'t>(&self, params: &Binding<'t>, x: Var<'t>, state: &LstmState<'t>) -> Result<LstmState<'t>> {
        let mut input = x;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (layer, &(h, c)) in self.layers.iter().zip(&state.layers) {
            let (h2, c2) = lstm_step(params.var(layer.weight), params.var(layer.bias), input, h, c)?;
            layers.push((h2, c2));
            input = h2;
        }
        Ok(LstmState { layers })
    }
}

fn expect_param(store: &ParamStore, name: &str, shape: &[usize]) -> Result<ParamId> {
    store
        .find(name)
        .filter(|&id| store.get(id).shape() == shape)
        .ok_or_else(|| ModelError::BadParameter(name.to_string()))
}

/// Sizes of the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// Number of activities `m`, including `[SOS]` and `[EOS]`.
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
}

impl Topology {
    pub fn event_dim(&self) -> usize {
        self.vocab_size + 1
    }
}

/// Result of one decoder step.
pub struct DecoderOutput<'t> {
    pub logits: Var<'t>,
    /// Softmax over the `m` activities.
    pub probs: Var<'t>,
    /// Non-negative scaled duration.
    pub time: Var<'t>,
    pub state: LstmState<'t>,
}

/// Encoder-decoder with a softmax activity head and a ReLU time head.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub params: ParamStore,
    pub topology: Topology,
    pub encoder: StackedLstm,
    pub decoder: StackedLstm,
    act_weight: ParamId,
    act_bias: ParamId,
    time_weight: ParamId,
    time_bias: ParamId,
}

impl GeneratorModel {
    pub fn new(topology: Topology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let Topology {
            vocab_size: m,
            hidden_size: h,
            num_layers: n,
        } = topology;
        let encoder = StackedLstm::new(&mut p, "encoder", m + 1, h, n, &mut rng);
        let decoder = StackedLstm::new(&mut p, "decoder", m + 1, h, n, &mut rng);
        let act_weight = p.add(
            "activity_head.weight",
            "activity_head",
            uniform_init(&mut rng, &[m, h], h),
        );
        let act_bias = p.add("activity_head.bias", "activity_head", uniform_init(&mut rng, &[m], h));
        let time_weight = p.add("time_head.weight", "time_head", uniform_init(&mut rng, &[1, h], h));
        let time_bias = p.add("time_head.bias", "time_head", uniform_init(&mut rng, &[1], h));
        Self {
            params: p,
            topology,
            encoder,
            decoder,
            act_weight,
            act_bias,
            time_weight,
            time_bias,
        }
    }

    /// Wraps restored parameters, checking every name and shape.
    pub fn from_params(topology: Topology, params: ParamStore) -> Result<Self> {
        let Topology {
            vocab_size: m,
            hidden_size: h,
            num_layers: n,
        } = topology;
        if m < 2 {
            return Err(ModelError::TooFewActivities(m));
        }
        let encoder = StackedLstm::from_store(&params, "encoder", m + 1, h, n)?;
        let decoder = StackedLstm::from_store(&params, "decoder", m + 1, h, n)?;
        let act_weight = expect_param(&params, "activity_head.weight", &[m, h])?;
        let act_bias = expect_param(&params, "activity_head.bias", &[m])?;
        let time_weight = expect_param(&params, "time_head.weight", &[1, h])?;
        let time_bias = expect_param(&params, "time_head.bias", &[1])?;
        let expected = 4 * n + 4;
        if params.len() != expected {
            return Err(ModelError::BadParameter(format!(
                "expected {expected} tensors, found {}",
                params.len()
            )));
        }
        Ok(Self {
            params,
            topology,
            encoder,
            decoder,
            act_weight,
            act_bias,
            time_weight,
            time_bias,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.topology.vocab_size
    }

    pub fn time_head_ids(&self) -> (ParamId, ParamId) {
        (self.time_weight, self.time_bias)
    }

    pub fn activity_head_ids(&self) -> (ParamId, ParamId) {
        (self.act_weight, self.act_bias)
    }

    fn check_dim(&self, v: &Var<'_>) -> Result<()> {
        let got = v.shape()[0];
        let expected = self.topology.event_dim();
        if got != expected {
            return Err(ModelError::Dimension { expected, got });
        }
        Ok(())
    }

    /// Runs the encoder over the prefix; its final state seeds the decoder.
    pub fn encode_prefix<'t>(&self, params: &Binding<'t>, prefix: &[Var<'t>]) -> Result<LstmState<'t>> {
        let first = prefix.first().ok_or(ModelError::EmptySequence("prefix"))?;
        let mut state = LstmState::zeros(first.tape(), self.topology.num_layers, self.topology.hidden_size)?;
        for &x in prefix {
            self.check_dim(&x)?;
            state = self.encoder.step(params, x, &state)?;
        }
        Ok(state)
    }

    pub fn decoder_step<'t>(
        &self,
        params: &Binding<'t>,
        input: Var<'t>,
        state: &LstmState<'t>,
    ) -> Result<DecoderOutput<'t>> {
        self.check_dim(&input)?;
        let state = self.decoder.step(params, input, state)?;
        let y = state.top_hidden();
        let logits = params.var(self.act_weight).matmul(y)?.add(params.var(self.act_bias))?;
        let probs = logits.softmax()?;
        let time = params
            .var(self.time_weight)
            .matmul(y)?
            .add(params.var(self.time_bias))?
            .relu()?;
        Ok(DecoderOutput {
            logits,
            probs,
            time,
            state,
        })
    }

    /// Encodes `prefix` without recording gradients.
    pub fn start(&self, prefix: &[EncodedEvent]) -> Result<StateValues> {
        let tape = Tape::new();
        let params = self.params.bind(&tape, false)?;
        let xs = prefix
            .iter()
            .map(|e| tape.constant(Tensor::vector(e.0.clone())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(self.encode_prefix(&params, &xs)?.to_values())
    }

    /// One decoder step without recording gradients: `(π, t, next state)`.
    pub fn step(&self, input: &EncodedEvent, state: &StateValues) -> Result<(Vec<f64>, f64, StateValues)> {
        let tape = Tape::new();
        let params = self.params.bind(&tape, false)?;
        let x = tape.constant(Tensor::new(vec![input.0.len()], input.0.clone())?)?;
        let out = self.decoder_step(&params, x, &state.bind(&tape)?)?;
        Ok((out.probs.value().to_vec(), out.time.item(), out.state.to_values()))
    }
}

/// The `[SOS]` event vector that starts every decoding.
pub fn start_event(m: usize) -> EncodedEvent {
    EncodedEvent::one_hot(SOS_ID, m, 0.0)
}

/// One-hot of the most probable activity (lowest index on ties) with `t` appended.
pub fn processing_block(probs: &[f64], time: f64) -> EncodedEvent {
    EncodedEvent::one_hot(argmax(probs), probs.len(), time)
}

/// Numerically stable `log(softmax(x))` built from tape primitives.
pub fn log_softmax<'t>(logits: Var<'t>) -> Result<Var<'t>> {
    let v = logits.value();
    let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted = logits.affine(1.0, -max)?;
    let lse = shifted.exp()?.sum()?.ln()?;
    let n = v.len();
    let lse_b = Var::concat(&vec![lse; n])?;
    Ok(shifted.sub(lse_b)?)
}

/// Draws `g_i = -ln(-ln u_i)` with `u_i ∈ (0, 1)`.
pub fn sample_gumbel<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Relaxed categorical sample `softmax((log π + g) / τ)`, differentiable in `π`.
pub fn gumbel_softmax<'t>(probs: Var<'t>, noise: &[f64], temperature: f64) -> Result<Var<'t>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ModelError::BadTemperature(temperature));
    }
    let tape = probs.tape();
    let g = tape.constant(Tensor::new(vec![noise.len()], noise.to_vec())?)?;
    Ok(probs
        .clamp_min(PROB_FLOOR)?
        .ln()?
        .add(g)?
        .scale(1.0 / temperature)?
        .softmax()?)
}

/// Seeded source of Gumbel noise at a given temperature.
pub struct GumbelSampler {
    temperature: f64,
    rng: ChaCha8Rng,
}

impl GumbelSampler {
    pub fn new(temperature: f64, seed: u64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ModelError::BadTemperature(temperature));
        }
        Ok(Self {
            temperature,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ModelError::BadTemperature(temperature));
        }
        self.temperature = temperature;
        Ok(())
    }

    pub fn sample<'t>(&mut self, probs: Var<'t>) -> Result<Var<'t>> {
        let noise = sample_gumbel(&mut self.rng, probs.shape()[0]);
        gumbel_softmax(probs, &noise, self.temperature)
    }
}

/// Replaces each one-hot block with 0.9 on the true activity and
/// `0.1 / (m - 1)` elsewhere; durations are kept.
pub fn smooth_real_suffix(suffix: &[EncodedEvent], m: usize) -> Result<Vec<EncodedEvent>> {
    if m < 2 {
        return Err(ModelError::TooFewActivities(m));
    }
    let off = (1.0 - REAL_SMOOTHING) / (m - 1) as f64;
    suffix
        .iter()
        .map(|e| {
            if e.0.len() != m + 1 {
                return Err(ModelError::Dimension {
                    expected: m + 1,
                    got: e.0.len(),
                });
            }
            let hot = e.activity();
            let mut v = vec![off; m + 1];
            v[hot] = REAL_SMOOTHING;
            v[m] = e.duration();
            Ok(EncodedEvent(v))
        })
        .collect()
}

/// LSTM over suffix event vectors followed by a sigmoid unit.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorModel {
    pub params: ParamStore,
    pub lstm: StackedLstm,
    out_weight: ParamId,
    out_bias: ParamId,
}

impl DiscriminatorModel {
    pub fn new(event_dim: usize, hidden_size: usize, num_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let lstm = StackedLstm::new(&mut p, "disc", event_dim, hidden_size, num_layers, &mut rng);
        let out_weight = p.add(
            "disc_head.weight",
            "disc_head",
            uniform_init(&mut rng, &[1, hidden_size], hidden_size),
        );
        let out_bias = p.add("disc_head.bias", "disc_head", uniform_init(&mut rng, &[1], hidden_size));
        Self {
            params: p,
            lstm,
            out_weight,
            out_bias,
        }
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        (self.out_weight, self.out_bias)
    }

    /// Probability that `suffix` is a real continuation.
    pub fn discriminate<'t>(&self, params: &Binding<'t>, suffix: &[Var<'t>]) -> Result<Var<'t>> {
        let first = suffix.first().ok_or(ModelError::EmptySequence("suffix"))?;
        let mut state = LstmState::zeros(first.tape(), self.lstm.num_layers(), self.lstm.hidden_size())?;
        for &x in suffix {
            state = self.lstm.step(params, x, &state)?;
        }
        Ok(params
            .var(self.out_weight)
            .matmul(state.top_hidden())?
            .add(params.var(self.out_bias))?
            .sigmoid()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn zero_lstm_gives_zero_hidden() {
        let tape = Tape::new();
        let w = tape.constant(Tensor::zeros(&[8, 5])).unwrap();
        let b = tape.constant(Tensor::zeros(&[8])).unwrap();
        let x = tape.constant(Tensor::zeros(&[3])).unwrap();
        let h = tape.constant(Tensor::zeros(&[2])).unwrap();
        let c = tape.constant(Tensor::zeros(&[2])).unwrap();
        let (h2, c2) = lstm_step(w, b, x, h, c).unwrap();
        assert_eq!(h2.value().data(), &[0.0, 0.0]);
        assert_eq!(c2.value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_step_rejects_bad_input() {
        let tape = Tape::new();
        let w = tape.constant(Tensor::zeros(&[8, 5])).unwrap();
        let b = tape.constant(Tensor::zeros(&[8])).unwrap();
        let x = tape.constant(Tensor::zeros(&[4])).unwrap();
        let h = tape.constant(Tensor::zeros(&[2])).unwrap();
        let c = tape.constant(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            lstm_step(w, b, x, h, c),
            Err(ModelError::Dimension { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn lstm_step_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = vec![
            random_tensor(&mut rng, &[12, 7], 0.5),
            random_tensor(&mut rng, &[12], 0.5),
            random_tensor(&mut rng, &[4], 1.0),
            random_tensor(&mut rng, &[3], 0.5),
            random_tensor(&mut rng, &[3], 0.5),
        ];
        let err = finite_difference_check(&params, 1e-5, |_, v| {
            let (h, c) = lstm_step(v[0], v[1], v[2], v[3], v[4]).map_err(|e| match e {
                ModelError::Tensor(t) => t,
                other => TensorError::Invalid(other.to_string()),
            })?;
            h.add(c.scale(0.5)?)?.sum()
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn tiny() -> GeneratorModel {
        GeneratorModel::new(
            Topology {
                vocab_size: 5,
                hidden_size: 6,
                num_layers: 2,
            },
            3,
        )
    }

    fn ev(a: usize, t: f64) -> EncodedEvent {
        EncodedEvent::one_hot(a, 5, t)
    }

    #[test]
    fn encoder_state_shapes_and_order_sensitivity() {
        let g = tiny();
        let s1 = g.start(&[ev(2, 0.0), ev(3, 0.4)]).unwrap();
        assert_eq!(s1.layers.len(), 2);
        for (h, c) in &s1.layers {
            assert_eq!(h.shape(), &[6]);
            assert_eq!(c.shape(), &[6]);
        }
        let s2 = g.start(&[ev(3, 0.4), ev(2, 0.0)]).unwrap();
        assert_ne!(s1, s2);
        assert_eq!(s1, g.start(&[ev(2, 0.0), ev(3, 0.4)]).unwrap());
        assert!(matches!(g.start(&[]), Err(ModelError::EmptySequence(_))));
    }

    #[test]
    fn decoder_outputs_are_valid() {
        let g = tiny();
        let mut state = g.start(&[ev(2, 0.1), ev(4, 0.2)]).unwrap();
        let mut input = start_event(5);
        for _ in 0..6 {
            let (pi, t, next) = g.step(&input, &state).unwrap();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pi.iter().all(|&p| p >= 0.0));
            assert!(t >= 0.0);
            input = processing_block(&pi, t);
            state = next;
        }
        assert!(g.step(&EncodedEvent(vec![0.0; 3]), &state).is_err());
    }

    #[test]
    fn zero_time_head_gives_zero_time() {
        let mut g = tiny();
        let (w, b) = g.time_head_ids();
        *g.params.get_mut(w) = Tensor::zeros(&[1, 6]);
        *g.params.get_mut(b) = Tensor::zeros(&[1]);
        let state = g.start(&[ev(2, 0.1), ev(3, 0.2)]).unwrap();
        let (_, t, _) = g.step(&start_event(5), &state).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn processing_block_examples() {
        assert_eq!(processing_block(&[0.1, 0.7, 0.2], 0.5).0, vec![0.0, 1.0, 0.0, 0.5]);
        assert_eq!(processing_block(&[0.5, 0.5], 0.0).0, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.2, -0.3, 1.1, 4.0])).unwrap();
        let a = log_softmax(x).unwrap().value();
        let b = x.softmax().unwrap().ln().unwrap().value();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gumbel_with_zero_noise_is_identity() {
        let tape = Tape::new();
        let pi = vec![0.1, 0.2, 0.3, 0.4];
        let p = tape.constant(Tensor::vector(pi.clone())).unwrap();
        let a = gumbel_softmax(p, &[0.0; 4], 1.0).unwrap().value();
        for (x, y) in a.data().iter().zip(&pi) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            gumbel_softmax(p, &[0.0; 4], 0.0),
            Err(ModelError::BadTemperature(_))
        ));
        assert!(GumbelSampler::new(-1.0, 0).is_err());
    }

    #[test]
    fn smoothing_example() {
        let out = smooth_real_suffix(&[EncodedEvent::one_hot(2, 5, 0.7)], 5).unwrap();
        let expect = [0.025, 0.025, 0.9, 0.025, 0.025];
        for (a, b) in out[0].activity_block().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(out[0].duration(), 0.7);
        assert!(smooth_real_suffix(&[EncodedEvent::one_hot(0, 1, 0.0)], 1).is_err());
    }

    #[test]
    fn zero_head_discriminator_outputs_half() {
        let mut d = DiscriminatorModel::new(4, 5, 1, 9);
        let (w, b) = d.head_ids();
        *d.params.get_mut(w) = Tensor::zeros(&[1, 5]);
        *d.params.get_mut(b) = Tensor::zeros(&[1]);
        let tape = Tape::new();
        let params = d.params.bind(&tape, false).unwrap();
        let x = tape.constant(Tensor::vector(vec![0.1, 0.7, 0.2, 0.3])).unwrap();
        assert_eq!(d.discriminate(&params, &[x, x]).unwrap().item(), 0.5);
        assert!(matches!(
            d.discriminate(&params, &[]),
            Err(ModelError::EmptySequence(_))
        ));
    }

    #[test]
    fn from_params_round_trip_and_mismatch() {
        let g = tiny();
        let back = GeneratorModel::from_params(g.topology, g.params.clone()).unwrap();
        assert_eq!(back, g);
        let wrong = Topology {
            vocab_size: 6,
            ..g.topology
        };
        assert!(GeneratorModel::from_params(wrong, g.params.clone()).is_err());
    }
}
