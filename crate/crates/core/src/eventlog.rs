//! Event logs: CSV ingestion, durations, temporal splits, vocabulary,
//! one-hot event encoding and prefix/suffix pair generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SOS: &str = "[SOS]";
pub const EOS: &str = "[EOS]";
pub const SOS_ID: usize = 0;
pub const EOS_ID: usize = 1;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: cannot parse timestamp {value:?}")]
    Timestamp { line: u64, value: String },
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("event log is empty")]
    Empty,
    #[error("need at least 10 traces for a 7:1:2 split, got {0}")]
    TooFewTraces(usize),
    #[error("activity {0:?} is not in the training vocabulary")]
    UnknownActivity(String),
    #[error("activity label {0:?} collides with a reserved token")]
    ReservedLabel(String),
    #[error("invalid synthetic log spec: {0}")]
    InvalidSpec(String),
}

/// Column names of the input CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
        }
    }
}

/// One recorded event, before vocabulary lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEvent {
    pub activity: String,
    pub timestamp: NaiveDateTime,
    /// Days since the previous event of the same case (0 for the first).
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<LogEvent>,
}

impl Trace {
    pub fn start_time(&self) -> NaiveDateTime {
        self.events[0].timestamp
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of durations, in days.
    pub fn cycle_time(&self) -> f64 {
        self.events.iter().map(|e| e.duration).sum()
    }
}

/// Traces ordered by start time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub traces: Vec<Trace>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }
}

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff][Z|±HH:MM]`, a space separator, or a bare date.
/// Offsets are normalised to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Some(dt.naive_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%.3f").to_string()
}

pub fn parse_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<EventLog, LogError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads a log from any reader; groups by case and sorts events by timestamp.
/// Durations are derived before returning.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<EventLog, LogError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| LogError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(LogError::Empty);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let (ci, ai, ti) = (col(&schema.case_id)?, col(&schema.activity)?, col(&schema.timestamp)?);

    let mut order: Vec<String> = Vec::new();
    let mut cases: HashMap<String, Vec<LogEvent>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| LogError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| LogError::Malformed {
                line,
                message: format!("expected at least {} fields", i + 1),
            })
        };
        let case = field(ci)?;
        let activity = field(ai)?;
        let raw_ts = field(ti)?;
        if case.is_empty() || activity.is_empty() {
            return Err(LogError::Malformed {
                line,
                message: "empty case id or activity".into(),
            });
        }
        if activity == SOS || activity == EOS {
            return Err(LogError::ReservedLabel(activity.to_string()));
        }
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| LogError::Timestamp {
            line,
            value: raw_ts.to_string(),
        })?;
        let events = cases.entry(case.to_string()).or_insert_with(|| {
            order.push(case.to_string());
            Vec::new()
        });
        events.push(LogEvent {
            activity: activity.to_string(),
            timestamp,
            duration: 0.0,
        });
    }
    if order.is_empty() {
        return Err(LogError::Empty);
    }
    let mut traces: Vec<Trace> = order
        .into_iter()
        .map(|case_id| {
            let mut events = cases.remove(&case_id).unwrap();
            events.sort_by_key(|e| e.timestamp);
            Trace { case_id, events }
        })
        .collect();
    traces.sort_by(|a, b| {
        a.start_time()
            .cmp(&b.start_time())
            .then_with(|| a.case_id.cmp(&b.case_id))
    });
    Ok(derive_durations(EventLog { traces }))
}

pub fn write_csv<W: Write>(log: &EventLog, writer: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| LogError::Io(std::io::Error::other(e));
    w.write_record(["case_id", "activity", "timestamp"]).map_err(io)?;
    for t in &log.traces {
        for e in &t.events {
            w.write_record([t.case_id.as_str(), e.activity.as_str(), &format_timestamp(&e.timestamp)])
                .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sets each event's duration to the gap from the previous event of its case.
pub fn derive_durations(mut log: EventLog) -> EventLog {
    for trace in &mut log.traces {
        let mut prev: Option<NaiveDateTime> = None;
        for e in &mut trace.events {
            e.duration = match prev {
                None => 0.0,
                Some(p) => days_between(p, e.timestamp),
            };
            prev = Some(e.timestamp);
        }
    }
    log
}

fn days_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    let d = b - a;
    match d.num_microseconds() {
        Some(us) => us as f64 / 1e6 / SECONDS_PER_DAY,
        None => d.num_seconds() as f64 / SECONDS_PER_DAY,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: EventLog,
    pub validation: EventLog,
    pub test: EventLog,
}

/// Chronological 7:1:2 split by trace start time.
pub fn temporal_split(log: &EventLog) -> Result<Split, LogError> {
    let n = log.len();
    if n < 10 {
        return Err(LogError::TooFewTraces(n));
    }
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let take = |r: std::ops::Range<usize>| EventLog {
        traces: log.traces[r].to_vec(),
    };
    Ok(Split {
        train: take(0..n_train),
        validation: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n),
    })
}

/// Activity label ↔ index map. `[SOS]` is 0, `[EOS]` is 1, the rest follow
/// in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(labels: Vec<String>) -> Self {
        Self::from_ordered(labels)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.labels
    }
}

impl Vocabulary {
    pub fn from_labels<I, S>(labels: I) -> Result<Self, LogError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for l in labels {
            let l = l.into();
            if l == SOS || l == EOS {
                return Err(LogError::ReservedLabel(l));
            }
            set.insert(l);
        }
        let mut all = vec![SOS.to_string(), EOS.to_string()];
        all.extend(set);
        Ok(Self::from_ordered(all))
    }

    /// Rebuilds from the full ordered label list (reserved tokens included).
    pub fn from_ordered(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    /// Number of activities `m`, including `[SOS]` and `[EOS]`.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn id(&self, label: &str) -> Result<usize, LogError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| LogError::UnknownActivity(label.to_string()))
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

pub fn build_vocabulary(train: &EventLog) -> Result<Vocabulary, LogError> {
    if train.num_events() == 0 {
        return Err(LogError::Empty);
    }
    Vocabulary::from_labels(
        train
            .traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.activity.clone())),
    )
}

/// Divides durations by the largest duration seen in training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScaler {
    max_duration: f64,
}

impl TimeScaler {
    pub fn new(max_duration: f64) -> Result<Self, LogError> {
        if !(max_duration > 0.0 && max_duration.is_finite()) {
            return Err(LogError::InvalidSpec(format!(
                "max duration must be positive, got {max_duration}"
            )));
        }
        Ok(Self { max_duration })
    }

    /// Fits on a training split. A split with only zero durations scales by 1 day.
    pub fn fit(train: &EventLog) -> Self {
        let max = train
            .traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.duration))
            .fold(0.0, f64::max);
        Self {
            max_duration: if max > 0.0 { max } else { 1.0 },
        }
    }

    pub fn max_duration(&self) -> f64 {
        self.max_duration
    }

    pub fn normalize(&self, days: f64) -> f64 {
        days / self.max_duration
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.max_duration
    }
}

/// An event after vocabulary lookup. `duration` is in days.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub activity_id: usize,
    pub duration: f64,
}

impl Event {
    pub fn eos() -> Self {
        Self {
            activity_id: EOS_ID,
            duration: 0.0,
        }
    }

    pub fn sos() -> Self {
        Self {
            activity_id: SOS_ID,
            duration: 0.0,
        }
    }
}

/// Activity block of length `m` followed by one normalised duration.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedEvent(pub Vec<f64>);

impl EncodedEvent {
    /// Builds a hard one-hot encoding.
    pub fn one_hot(activity_id: usize, m: usize, scaled_duration: f64) -> Self {
        let mut v = vec![0.0; m + 1];
        v[activity_id] = 1.0;
        v[m] = scaled_duration;
        Self(v)
    }

    pub fn activity_block(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Index of the largest activity entry; ties go to the lowest index.
    pub fn activity(&self) -> usize {
        argmax(self.activity_block())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn encode_event(e: &Event, vocab: &Vocabulary, scaler: &TimeScaler) -> Result<EncodedEvent, LogError> {
    if e.activity_id >= vocab.size() {
        return Err(LogError::UnknownActivity(format!("#{}", e.activity_id)));
    }
    Ok(EncodedEvent::one_hot(
        e.activity_id,
        vocab.size(),
        scaler.normalize(e.duration),
    ))
}

pub fn encode_sequence(seq: &[Event], vocab: &Vocabulary, scaler: &TimeScaler) -> Result<Vec<EncodedEvent>, LogError> {
    seq.iter().map(|e| encode_event(e, vocab, scaler)).collect()
}

/// Activity projection of a sequence.
pub fn activity_sequence(seq: &[Event]) -> Vec<usize> {
    seq.iter().map(|e| e.activity_id).collect()
}

/// Duration projection of a sequence.
pub fn duration_sequence(seq: &[Event]) -> Vec<f64> {
    seq.iter().map(|e| e.duration).collect()
}

pub fn encoded_activities(seq: &[EncodedEvent]) -> Vec<usize> {
    seq.iter().map(EncodedEvent::activity).collect()
}

pub fn encoded_durations(seq: &[EncodedEvent]) -> Vec<f64> {
    seq.iter().map(EncodedEvent::duration).collect()
}

/// One prefix of length `k` with the remainder of its trace as target.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixSuffixPair {
    pub case_id: String,
    pub prefix: Vec<Event>,
    /// Remaining events followed by `[EOS]`.
    pub suffix: Vec<Event>,
}

impl PrefixSuffixPair {
    pub fn k(&self) -> usize {
        self.prefix.len()
    }

    /// Ground-truth remaining time in days.
    pub fn remaining_time(&self) -> f64 {
        self.suffix.iter().map(|e| e.duration).sum()
    }

    /// Suffix activities without the trailing `[EOS]`.
    pub fn suffix_activities(&self) -> Vec<usize> {
        self.suffix
            .iter()
            .map(|e| e.activity_id)
            .filter(|&a| a != EOS_ID)
            .collect()
    }
}

pub fn lookup_trace(trace: &Trace, vocab: &Vocabulary) -> Result<Vec<Event>, LogError> {
    trace
        .events
        .iter()
        .map(|e| {
            Ok(Event {
                activity_id: vocab.id(&e.activity)?,
                duration: e.duration,
            })
        })
        .collect()
}

/// Every `(σ≤k, σ>k)` with `2 ≤ k < n` for each trace of length `n`.
pub fn generate_pairs(log: &EventLog, vocab: &Vocabulary) -> Result<Vec<PrefixSuffixPair>, LogError> {
    let mut pairs = Vec::new();
    for trace in &log.traces {
        let events = lookup_trace(trace, vocab)?;
        let n = events.len();
        for k in 2..n {
            let mut suffix = events[k..].to_vec();
            suffix.push(Event::eos());
            pairs.push(PrefixSuffixPair {
                case_id: trace.case_id.clone(),
                prefix: events[..k].to_vec(),
                suffix,
            });
        }
    }
    Ok(pairs)
}

/// Declarative description of a synthetic process, read from TOML.
///
/// ```toml
/// traces = 100
/// start = "2021-01-01T00:00:00"
/// interarrival_days = 0.5
///
/// [[variant]]
/// activities = ["A", "B", "C"]
///
/// [[variant]]
/// activities = ["A", "D", "C"]
/// weight = 2.0
///
/// [durations]
/// B = { kind = "uniform", low = 1.0, high = 3.0 }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub traces: Option<usize>,
    #[serde(default = "default_start")]
    pub start: String,
    #[serde(default = "default_interarrival")]
    pub interarrival_days: f64,
    #[serde(rename = "variant", default)]
    pub variants: Vec<VariantSpec>,
    #[serde(default)]
    pub durations: BTreeMap<String, DurationSpec>,
    #[serde(default = "default_duration")]
    pub default_duration: DurationSpec,
}

fn default_start() -> String {
    "2021-01-01T00:00:00".into()
}

fn default_interarrival() -> f64 {
    1.0
}

fn default_duration() -> DurationSpec {
    DurationSpec::Fixed { days: 1.0 }
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub activities: Vec<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

/// Days between an activity and its predecessor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DurationSpec {
    Fixed { days: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
}

impl DurationSpec {
    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            DurationSpec::Fixed { days } => days.is_finite() && days >= 0.0,
            DurationSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && 0.0 <= low && low <= high,
            DurationSpec::Exponential { mean } => mean.is_finite() && mean > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("bad duration distribution {self:?}"))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            DurationSpec::Fixed { days } => days,
            DurationSpec::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            DurationSpec::Exponential { mean } => -mean * (1.0 - rng.gen::<f64>()).ln(),
        }
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self, LogError> {
        toml::from_str(text).map_err(|e| LogError::InvalidSpec(e.to_string()))
    }

    fn validate(&self) -> Result<NaiveDateTime, LogError> {
        let bad = |m: String| LogError::InvalidSpec(m);
        if self.variants.is_empty() {
            return Err(bad("at least one [[variant]] is required".into()));
        }
        for v in &self.variants {
            if v.activities.is_empty() {
                return Err(bad("variant with no activities".into()));
            }
            if !(v.weight.is_finite() && v.weight > 0.0) {
                return Err(bad(format!("variant weight must be positive, got {}", v.weight)));
            }
            for a in &v.activities {
                if a.is_empty() {
                    return Err(bad("empty activity label".into()));
                }
                if a == SOS || a == EOS {
                    return Err(LogError::ReservedLabel(a.clone()));
                }
            }
        }
        if !(self.interarrival_days.is_finite() && self.interarrival_days >= 0.0) {
            return Err(bad("interarrival_days must be non-negative".into()));
        }
        self.default_duration.validate().map_err(bad)?;
        for d in self.durations.values() {
            d.validate().map_err(bad)?;
        }
        parse_timestamp(&self.start).ok_or_else(|| bad(format!("bad start timestamp {:?}", self.start)))
    }
}

/// Samples `n_traces` cases; identical output for identical `(spec, n_traces, seed)`.
pub fn generate_synthetic_log(spec: &SyntheticSpec, n_traces: usize, seed: u64) -> Result<EventLog, LogError> {
    let start = spec.validate()?;
    if n_traces == 0 {
        return Err(LogError::InvalidSpec("n_traces must be at least 1".into()));
    }
    let weights =
        WeightedIndex::new(spec.variants.iter().map(|v| v.weight)).map_err(|e| LogError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_traces.to_string().len().max(4);
    let millis = |days: f64| chrono::Duration::milliseconds((days * SECONDS_PER_DAY * 1000.0).round() as i64);

    let mut traces = Vec::with_capacity(n_traces);
    for i in 0..n_traces {
        let variant = &spec.variants[weights.sample(&mut rng)];
        let mut ts = start + millis(spec.interarrival_days * i as f64);
        let mut events = Vec::with_capacity(variant.activities.len());
        for (j, a) in variant.activities.iter().enumerate() {
            let dist = spec.durations.get(a).unwrap_or(&spec.default_duration);
            let d = dist.sample(&mut rng);
            if j > 0 {
                ts += millis(d);
            }
            events.push(LogEvent {
                activity: a.clone(),
                timestamp: ts,
                duration: 0.0,
            });
        }
        traces.push(Trace {
            case_id: format!("case-{i:0width$}"),
            events,
        });
    }
    Ok(derive_durations(EventLog { traces }))
}
