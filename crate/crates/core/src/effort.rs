//! Sequence-level effort and confidence measures.
//!
//! Every measure is oriented so that larger means "more effort" or "more
//! confident", except [`Measure::TokenLength`], which is reported raw.
//! Confidence measures are in nats and average over the first
//! `min(prefix_len, T)` tokens; length measures always count the whole
//! sequence.

use serde::{Deserialize, Serialize};

use crate::distributions::{entropy, entropy_slice, self_certainty_slice, self_certainty_term, LogBase};
use crate::error::{Error, Result};
use crate::settling::{
    classify, compute_dtr, curve_distances, deep_regime_start, dtr_from_outcomes, prefix_span, settling_depth_of,
    DistanceMetric, DtrReport, SettlingConfig,
};
use crate::trace::{LayerLensFrame, LayerPayload, SequenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    TokenLength,
    ReverseTokenLength,
    LogProb,
    NegPerplexity,
    NegEntropy,
    SelfCertainty,
    Dtr,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::TokenLength,
        Measure::ReverseTokenLength,
        Measure::LogProb,
        Measure::NegPerplexity,
        Measure::NegEntropy,
        Measure::SelfCertainty,
        Measure::Dtr,
    ];

    /// Stable identifier used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Measure::TokenLength => "token_length",
            Measure::ReverseTokenLength => "reverse_token_length",
            Measure::LogProb => "log_prob",
            Measure::NegPerplexity => "neg_perplexity",
            Measure::NegEntropy => "neg_entropy",
            Measure::SelfCertainty => "self_certainty",
            Measure::Dtr => "dtr",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self != Measure::TokenLength
    }

    pub fn needs_lens(self) -> bool {
        self == Measure::Dtr
    }

    pub fn needs_final_distributions(self) -> bool {
        matches!(self, Measure::NegEntropy | Measure::SelfCertainty)
    }

    pub fn parse_list(s: &str) -> Result<Vec<Measure>> {
        if s == "all" {
            return Ok(Measure::ALL.to_vec());
        }
        s.split(',').map(|m| m.trim().parse()).collect()
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown measure `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffortScore {
    pub measure: Measure,
    pub value: f64,
    pub prefix_len_used: usize,
    pub higher_is_better_rank: bool,
}

fn score(measure: Measure, value: f64, prefix_len_used: usize) -> EffortScore {
    EffortScore {
        measure,
        value,
        prefix_len_used,
        higher_is_better_rank: measure.higher_is_better(),
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Entropy and self-certainty of a frame's final distribution, in nats.
pub(crate) fn final_terms(frame: &LayerLensFrame) -> Result<(f64, f64)> {
    match &frame.final_dist {
        LayerPayload::Dense(p) if p.len() == frame.vocab_size => Ok((entropy_slice(p), self_certainty_slice(p))),
        _ => {
            let p = frame.final_distribution()?;
            Ok((entropy(&p), self_certainty_term(&p)))
        }
    }
}

/// Scores one record directly from its lens data.
pub fn effort_score(
    record: &SequenceRecord,
    measure: Measure,
    config: &SettlingConfig,
    prefix_len: Option<usize>,
) -> Result<EffortScore> {
    let t = record.len();
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    let span = prefix_span(t, prefix_len);
    let log_prob = || mean(record.sampled_token_logprob[..span].iter().map(|&x| x as f64), span);
    let finals = || -> Result<Vec<(f64, f64)>> {
        if record.frames.is_empty() {
            return Err(Error::MissingData(format!(
                "record {}#{} has no final distributions",
                record.question_id, record.sample_index
            )));
        }
        record.frames[..span].iter().map(final_terms).collect()
    };
    let value = match measure {
        Measure::TokenLength => return Ok(score(measure, t as f64, t)),
        Measure::ReverseTokenLength => return Ok(score(measure, -(t as f64), t)),
        Measure::LogProb => log_prob(),
        Measure::NegPerplexity => -(-log_prob()).exp(),
        Measure::NegEntropy => -mean(finals()?.into_iter().map(|x| x.0), span),
        Measure::SelfCertainty => mean(finals()?.into_iter().map(|x| x.1), span),
        Measure::Dtr => compute_dtr(record, config, prefix_len)?.dtr,
    };
    Ok(score(measure, value, span))
}

/// Layer-wise curves stored for every token of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurves {
    pub metric: DistanceMetric,
    pub log_base: LogBase,
    pub num_layers: usize,
    /// Row-major `tokens x layers`.
    pub distances: Vec<f64>,
}

impl ProfileCurves {
    pub fn fingerprint(&self) -> String {
        format!("metric={};log_base={}", self.metric.as_str(), self.log_base.as_str())
    }

    pub fn token(&self, t: usize) -> &[f64] {
        &self.distances[t * self.num_layers..(t + 1) * self.num_layers]
    }
}

/// Per-token quantities of one record, enough to score every measure
/// without the raw lens payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordProfile {
    pub model_id: String,
    pub seed: u64,
    pub question_id: String,
    pub sample_index: u32,
    pub dataset_tag: String,
    pub answer: String,
    pub is_correct: bool,
    pub token_count: usize,
    pub token_ids: Vec<u32>,
    pub logprob: Vec<f64>,
    pub entropy: Option<Vec<f64>>,
    pub self_certainty: Option<Vec<f64>>,
    pub curves: Option<ProfileCurves>,
}

impl RecordProfile {
    /// Builds a profile; curves are computed only when `curve_spec` is given
    /// and the record carries per-layer payloads.
    pub fn from_record(
        record: &SequenceRecord,
        model_id: &str,
        seed: u64,
        curve_spec: Option<(DistanceMetric, LogBase)>,
    ) -> Result<Self> {
        let (entropy, self_certainty) = if record.frames.is_empty() {
            (None, None)
        } else {
            let terms: Vec<(f64, f64)> = record.frames.iter().map(final_terms).collect::<Result<_>>()?;
            let (e, s) = terms.into_iter().unzip();
            (Some(e), Some(s))
        };
        let curves = match curve_spec {
            Some((metric, log_base)) if record.frames.first().is_some_and(|f| f.has_lens()) => {
                let num_layers = record.frames[0].num_layers();
                let mut distances = Vec::with_capacity(num_layers * record.frames.len());
                for frame in &record.frames {
                    let d = curve_distances(frame, metric, log_base)?;
                    if d.len() != num_layers {
                        return Err(Error::MalformedFrame("layer count varies within a record".into()));
                    }
                    distances.extend(d);
                }
                Some(ProfileCurves {
                    metric,
                    log_base,
                    num_layers,
                    distances,
                })
            }
            _ => None,
        };
        Ok(Self {
            model_id: model_id.to_owned(),
            seed,
            question_id: record.question_id.clone(),
            sample_index: record.sample_index,
            dataset_tag: record.dataset_tag.clone(),
            answer: record.answer.clone(),
            is_correct: record.is_correct,
            token_count: record.len(),
            token_ids: record.token_ids.clone(),
            logprob: record.sampled_token_logprob.iter().map(|&x| x as f64).collect(),
            entropy,
            self_certainty,
            curves,
        })
    }

    fn curves_for(&self, config: &SettlingConfig) -> Result<&ProfileCurves> {
        let curves = self.curves.as_ref().ok_or_else(|| {
            Error::MissingData(format!(
                "record {}#{} has no layer-wise curves",
                self.question_id, self.sample_index
            ))
        })?;
        if curves.metric != config.metric || curves.log_base != config.log_base {
            return Err(Error::FingerprintMismatch {
                cached: curves.fingerprint(),
                requested: config.curve_fingerprint(),
            });
        }
        Ok(curves)
    }

    pub fn settling_depths(&self, config: &SettlingConfig) -> Result<Vec<usize>> {
        let curves = self.curves_for(config)?;
        Ok((0..self.token_count)
            .map(|t| settling_depth_of(curves.token(t), config.g))
            .collect())
    }

    pub fn dtr(&self, config: &SettlingConfig, prefix_len: Option<usize>) -> Result<DtrReport> {
        if self.token_count == 0 {
            return Err(Error::EmptySequence);
        }
        let curves = self.curves_for(config)?;
        let span = prefix_span(self.token_count, prefix_len);
        let start = deep_regime_start(curves.num_layers, config.rho, config.regime_convention);
        let outcomes = (0..span)
            .map(|t| classify(settling_depth_of(curves.token(t), config.g), start))
            .collect();
        Ok(dtr_from_outcomes(outcomes))
    }

    pub fn score(&self, measure: Measure, config: &SettlingConfig, prefix_len: Option<usize>) -> Result<EffortScore> {
        let t = self.token_count;
        if t == 0 {
            return Err(Error::EmptySequence);
        }
        let span = prefix_span(t, prefix_len);
        let per_token = |v: &Option<Vec<f64>>| -> Result<f64> {
            let v = v.as_ref().ok_or_else(|| {
                Error::MissingData(format!(
                    "record {}#{} has no final distributions",
                    self.question_id, self.sample_index
                ))
            })?;
            Ok(mean(v[..span].iter().copied(), span))
        };
        let log_prob = || mean(self.logprob[..span].iter().copied(), span);
        let value = match measure {
            Measure::TokenLength => return Ok(score(measure, t as f64, t)),
            Measure::ReverseTokenLength => return Ok(score(measure, -(t as f64), t)),
            Measure::LogProb => log_prob(),
            Measure::NegPerplexity => -(-log_prob()).exp(),
            Measure::NegEntropy => -per_token(&self.entropy)?,
            Measure::SelfCertainty => per_token(&self.self_certainty)?,
            Measure::Dtr => self.dtr(config, prefix_len)?.dtr,
        };
        Ok(score(measure, value, span))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(finals: &[Vec<f32>], sampled: &[u32]) -> SequenceRecord {
        let frames: Vec<LayerLensFrame> = finals
            .iter()
            .map(|p| LayerLensFrame::dense(vec![p.clone(), p.clone()]).unwrap())
            .collect();
        SequenceRecord {
            question_id: "q".into(),
            sample_index: 0,
            dataset_tag: "d".into(),
            token_ids: sampled.to_vec(),
            sampled_token_logprob: sampled
                .iter()
                .zip(finals)
                .map(|(&y, p)| (p[y as usize] as f64).ln() as f32)
                .collect(),
            frames,
            answer: String::new(),
            is_correct: true,
            answer_start: None,
        }
    }

    fn both(r: &SequenceRecord, m: Measure) -> f64 {
        let cfg = SettlingConfig::default();
        let direct = effort_score(r, m, &cfg, None).unwrap().value;
        let profile = RecordProfile::from_record(r, "m", 0, Some((cfg.metric, cfg.log_base)))
            .unwrap()
            .score(m, &cfg, None)
            .unwrap()
            .value;
        assert_eq!(direct.to_bits(), profile.to_bits(), "{m}");
        direct
    }

    #[test]
    fn uniform_steps() {
        let u = vec![0.25f32; 4];
        let r = record(&[u.clone(), u.clone(), u], &[0, 3, 1]);
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        close(both(&r, Measure::LogProb), 0.25f64.ln());
        close(both(&r, Measure::NegPerplexity), -4.0);
        close(both(&r, Measure::NegEntropy), -(4f64.ln()));
        assert_eq!(both(&r, Measure::SelfCertainty), 0.0);
    }

    #[test]
    fn lengths() {
        let u = vec![0.5f32; 2];
        let r = record(&vec![u; 120], &[0; 120]);
        assert_eq!(both(&r, Measure::TokenLength), 120.0);
        assert_eq!(both(&r, Measure::ReverseTokenLength), -120.0);
        let s = effort_score(&r, Measure::TokenLength, &SettlingConfig::default(), Some(10)).unwrap();
        assert_eq!(
            (s.value, s.prefix_len_used, s.higher_is_better_rank),
            (120.0, 120, false)
        );
    }

    #[test]
    fn two_step_log_prob() {
        let r = record(&[vec![0.75, 0.25], vec![0.25, 0.75]], &[0, 1]);
        let lp = both(&r, Measure::LogProb);
        assert!((lp - 0.75f64.ln()).abs() < 1e-7);
        assert!((both(&r, Measure::NegPerplexity) + 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn neg_perplexity_identity_is_exact() {
        let r = record(&[vec![0.6, 0.4], vec![0.1, 0.9], vec![0.3, 0.7]], &[1, 1, 0]);
        let cfg = SettlingConfig::default();
        let lp = effort_score(&r, Measure::LogProb, &cfg, None).unwrap().value;
        let ppl = effort_score(&r, Measure::NegPerplexity, &cfg, None).unwrap().value;
        assert_eq!(ppl, -(-lp).exp());
    }

    #[test]
    fn prefix_longer_than_sequence_is_identical() {
        let r = record(&[vec![0.6, 0.4], vec![0.1, 0.9]], &[1, 1]);
        let cfg = SettlingConfig::default();
        for m in Measure::ALL {
            let full = effort_score(&r, m, &cfg, None).unwrap();
            let long = effort_score(&r, m, &cfg, Some(99)).unwrap();
            assert_eq!(full.value.to_bits(), long.value.to_bits());
        }
        let p = effort_score(&r, Measure::LogProb, &cfg, Some(1)).unwrap();
        assert_eq!(p.prefix_len_used, 1);
        assert!((p.value - 0.4f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn missing_data_and_empty() {
        let cfg = SettlingConfig::default();
        let mut r = record(&[vec![0.5, 0.5]], &[0]);
        r.frames.clear();
        assert!(effort_score(&r, Measure::LogProb, &cfg, None).is_ok());
        assert!(matches!(
            effort_score(&r, Measure::NegEntropy, &cfg, None),
            Err(Error::MissingData(_))
        ));
        assert!(matches!(
            effort_score(&r, Measure::Dtr, &cfg, None),
            Err(Error::MissingData(_))
        ));
        r.token_ids.clear();
        r.sampled_token_logprob.clear();
        assert!(matches!(
            effort_score(&r, Measure::TokenLength, &cfg, None),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn profile_rejects_other_metric() {
        let r = record(&[vec![0.5, 0.5]], &[0]);
        let p = RecordProfile::from_record(&r, "m", 0, Some((DistanceMetric::Jsd, LogBase::Natural))).unwrap();
        let kl = SettlingConfig {
            metric: DistanceMetric::Kl,
            ..SettlingConfig::default()
        };
        assert!(matches!(p.dtr(&kl, None), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn measure_names_round_trip() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
        }
        assert_eq!(
            Measure::parse_list("dtr,log_prob").unwrap(),
            vec![Measure::Dtr, Measure::LogProb]
        );
        assert!(Measure::parse_list("dtr,nope").is_err());
    }
}
