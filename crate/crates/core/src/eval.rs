//! Suffix similarity, remaining-time error and paired t-tests.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{encode_sequence, LogError, PrefixSuffixPair, TimeScaler, Vocabulary};
use crate::infer::{beam_search, greedy_decode, BeamConfig, Prediction, StepModel};
use crate::nn::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("no pairs to evaluate")]
    Empty,
    #[error("paired t-test needs at least 2 differences, got {0}")]
    TooFewSamples(usize),
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("sample sizes differ: {0} vs {1}")]
    Unpaired(usize, usize),
}

/// Optimal string alignment distance: unit-cost insertion, deletion,
/// substitution and adjacent transposition, no substring edited twice.
pub fn damerau_levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

/// `1 − DL(a, b) / max(|a|, |b|)`; two empty sequences score 1.
pub fn sdl<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - damerau_levenshtein(a, b) as f64 / longest as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prefix_id: String,
    pub truth: Vec<String>,
    pub predicted: Vec<String>,
    pub sdl: f64,
    pub truth_remaining_days: f64,
    pub predicted_remaining_days: f64,
    /// Absolute remaining-time error of the reported (max-SDL) candidate.
    pub abs_error: f64,
    /// Smallest absolute error over all beam candidates.
    pub min_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beam_size: usize,
    pub count: usize,
    pub mean_sdl: f64,
    pub mae_days: f64,
    pub mae_min_days: f64,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn sdl_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sdl).collect()
    }

    pub fn abs_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.abs_error).collect()
    }
}

/// Prefix id used in reports: `<case>#<k>`.
pub fn prefix_id(pair: &PrefixSuffixPair) -> String {
    format!("{}#{}", pair.case_id, pair.k())
}

/// Decodes every pair and scores it. With `beam_size > 1` the candidate with
/// the highest SDL is reported (earliest-ranked on ties).
pub fn evaluate<M: StepModel>(
    model: &M,
    pairs: &[PrefixSuffixPair],
    vocab: &Vocabulary,
    scaler: &TimeScaler,
    beam: BeamConfig,
) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels = |ids: &[usize]| ids.iter().map(|&a| vocab.label(a).to_string()).collect::<Vec<_>>();
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let prefix = encode_sequence(&pair.prefix, vocab, scaler)?;
        let candidates: Vec<Prediction> = if beam.beam_size == 1 {
            vec![greedy_decode(model, &prefix, beam.max_length)?]
        } else {
            beam_search(model, &prefix, beam)?
        };
        let truth = pair.suffix_activities();
        let truth_rt = pair.remaining_time();
        let mut best: Option<(f64, &Prediction)> = None;
        let mut min_ae = f64::INFINITY;
        for c in &candidates {
            let s = sdl(&truth, &c.activities_without_eos());
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, c));
            }
            min_ae = min_ae.min((c.remaining_time(scaler) - truth_rt).abs());
        }
        let (s, chosen) = best.expect("beam search returns at least one candidate");
        let predicted_rt = chosen.remaining_time(scaler);
        records.push(EvalRecord {
            prefix_id: prefix_id(pair),
            truth: labels(&truth),
            predicted: labels(&chosen.activities_without_eos()),
            sdl: s,
            truth_remaining_days: truth_rt,
            predicted_remaining_days: predicted_rt,
            abs_error: (predicted_rt - truth_rt).abs(),
            min_abs_error: min_ae,
        });
    }
    let n = records.len() as f64;
    Ok(EvalReport {
        beam_size: beam.beam_size,
        count: records.len(),
        mean_sdl: records.iter().map(|r| r.sdl).sum::<f64>() / n,
        mae_days: records.iter().map(|r| r.abs_error).sum::<f64>() / n,
        mae_min_days: records.iter().map(|r| r.min_abs_error).sum::<f64>() / n,
        records,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Alternative: mean difference > 0.
    Upper,
    /// Alternative: mean difference < 0.
    Lower,
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tail::Upper => "upper",
            Tail::Lower => "lower",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub tail: Tail,
}

impl fmt::Display for TTestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mean_d={:.6} t={:.4} df={} p={:.6} ({})",
            self.mean_difference, self.t, self.df, self.p_value, self.tail
        )
    }
}

/// One-sided paired t-test on differences `d`.
pub fn paired_t_test(d: &[f64], tail: Tail) -> Result<TTestResult, EvalError> {
    let n = d.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    let upper = student_t_sf(t, df as f64);
    let p_value = match tail {
        Tail::Upper => upper,
        Tail::Lower => 1.0 - upper,
    };
    Ok(TTestResult {
        mean_difference: mean,
        t,
        df,
        p_value,
        tail,
    })
}

/// Pairs two samples as `a − b` and tests them.
pub fn paired_t_test_samples(a: &[f64], b: &[f64], tail: Tail) -> Result<TTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Unpaired(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    paired_t_test(&d, tail)
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` via the Lentz continued fraction, using the symmetry
/// `I_x(a, b) = 1 − I_{1−x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_costs_one() {
        assert_eq!(damerau_levenshtein(&[1, 2, 3], &[1, 3, 2]), 1);
        let s = sdl(&[1, 2, 3], &[1, 3, 2]);
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distance_basics() {
        let s = [0, 1, 2, 1];
        assert_eq!(damerau_levenshtein(&s, &s), 0);
        assert_eq!(damerau_levenshtein::<i32>(&[], &s), 4);
        assert_eq!(damerau_levenshtein::<i32>(&s, &[]), 4);
        // OSA cannot edit the transposed pair again
        assert_eq!(damerau_levenshtein(b"CA", b"ABC"), 3);
    }

    #[test]
    fn sdl_extremes() {
        assert_eq!(sdl(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(sdl(&[1, 2, 3], &[4, 5, 6]), 0.0);
        assert_eq!(sdl::<u8>(&[], &[]), 1.0);
    }

    #[test]
    fn t_test_reference() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], Tail::Upper).unwrap();
        assert!((r.t - 4.242_640_687).abs() < 1e-6);
        assert_eq!(r.df, 4);
        assert!((r.p_value - 0.0066).abs() < 5e-4);
    }

    #[test]
    fn symmetric_sample_has_half_p() {
        for tail in [Tail::Upper, Tail::Lower] {
            let r = paired_t_test(&[-1.0, 1.0], tail).unwrap();
            assert_eq!(r.t, 0.0);
            assert!((r.p_value - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_tests_error() {
        assert!(matches!(
            paired_t_test(&[1.0; 4], Tail::Upper),
            Err(EvalError::ZeroVariance)
        ));
        assert!(matches!(
            paired_t_test(&[1.0], Tail::Upper),
            Err(EvalError::TooFewSamples(1))
        ));
    }

    #[test]
    fn lower_tail_is_complement() {
        let d = [-0.3, -1.2, 0.4, -0.8, -0.5];
        let up = paired_t_test(&d, Tail::Upper).unwrap().p_value;
        let lo = paired_t_test(&d, Tail::Lower).unwrap().p_value;
        assert!((up + lo - 1.0).abs() < 1e-12);
        assert!(lo < 0.5);
    }

    #[test]
    fn gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}
