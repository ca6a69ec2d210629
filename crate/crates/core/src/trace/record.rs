use serde::{Deserialize, Serialize};

use crate::distributions::{softmax_project, LogBase, LogitVector, ProbVector, PROB_SUM_TOLERANCE};
use crate::error::{Error, Result};

/// Current on-disk schema version of `.lens.jsonl` traces.
pub const SCHEMA_VERSION: u32 = 1;

/// Whether the final normalization was applied before unembedding
/// intermediate hidden states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensNormalization {
    #[default]
    None,
    FinalNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            seed: 0,
        }
    }
}

/// First line of every trace file. Field names are a frozen contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub model_id: String,
    pub num_layers: usize,
    pub vocab_size: usize,
    /// 0 when hidden vectors are absent.
    pub hidden_dim: usize,
    pub log_base: LogBase,
    pub lens_normalization: LensNormalization,
    /// 0 for dense payloads.
    pub sparse_k: usize,
    pub sampling: SamplingParams,
}

impl TraceHeader {
    pub fn new(model_id: impl Into<String>, num_layers: usize, vocab_size: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model_id: model_id.into(),
            num_layers,
            vocab_size,
            hidden_dim: 0,
            log_base: LogBase::Natural,
            lens_normalization: LensNormalization::None,
            sparse_k: 0,
            sampling: SamplingParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema {
                found: self.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        if self.num_layers < 2 {
            return Err(Error::Schema(format!("num_layers {} < 2", self.num_layers)));
        }
        if self.vocab_size < 2 {
            return Err(Error::Schema(format!("vocab_size {} < 2", self.vocab_size)));
        }
        if self.sparse_k >= self.vocab_size {
            return Err(Error::Schema(format!(
                "sparse_k {} must be below vocab_size {}",
                self.sparse_k, self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn payload_kind(&self) -> PayloadKind {
        if self.sparse_k == 0 {
            PayloadKind::Dense
        } else {
            PayloadKind::Sparse
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Dense,
    Sparse,
}

/// One layer's next-token prediction as stored in a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerPayload {
    /// Full probability vector over the vocabulary.
    Dense(Vec<f32>),
    /// Top-k logits plus the log-sum-exp of every omitted logit.
    Sparse {
        ids: Vec<u32>,
        logits: Vec<f32>,
        tail_logsumexp: f32,
    },
}

impl LayerPayload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            LayerPayload::Dense(_) => PayloadKind::Dense,
            LayerPayload::Sparse { .. } => PayloadKind::Sparse,
        }
    }

    /// Projects the payload to a validated distribution.
    pub fn distribution(&self, vocab_size: usize) -> Result<ProbVector> {
        match self {
            LayerPayload::Dense(p) => {
                if p.len() != vocab_size {
                    return Err(Error::MalformedFrame(format!(
                        "dense payload has {} entries, vocabulary is {vocab_size}",
                        p.len()
                    )));
                }
                ProbVector::dense(p.iter().map(|&x| x as f64).collect())
            }
            LayerPayload::Sparse {
                ids,
                logits,
                tail_logsumexp,
            } => {
                let z = LogitVector::sparse(
                    vocab_size,
                    ids.clone(),
                    logits.iter().map(|&x| x as f64).collect(),
                    *tail_logsumexp as f64,
                )?;
                softmax_project(&z)
            }
        }
    }

    /// Absolute deviation of the stored mass from 1 (always 0 for logits).
    pub fn mass_error(&self) -> f64 {
        match self {
            LayerPayload::Dense(p) => (p.iter().map(|&x| x as f64).sum::<f64>() - 1.0).abs(),
            LayerPayload::Sparse { .. } => 0.0,
        }
    }
}

/// Per-token lens data: one payload per layer `1..=L`, the model's final
/// distribution, and optionally the hidden state after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLensFrame {
    pub vocab_size: usize,
    /// Empty when the trace carries only final distributions.
    pub layers: Vec<LayerPayload>,
    pub final_dist: LayerPayload,
    pub hidden: Option<Vec<Vec<f32>>>,
}

impl LayerLensFrame {
    /// Dense frame whose final distribution is the last layer's.
    pub fn dense(layers: Vec<Vec<f32>>) -> Result<Self> {
        let last = layers
            .last()
            .cloned()
            .ok_or_else(|| Error::MalformedFrame("frame without layers".into()))?;
        let vocab_size = last.len();
        Ok(Self {
            vocab_size,
            layers: layers.into_iter().map(LayerPayload::Dense).collect(),
            final_dist: LayerPayload::Dense(last),
            hidden: None,
        })
    }

    pub fn with_hidden(mut self, hidden: Vec<Vec<f32>>) -> Self {
        self.hidden = Some(hidden);
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn has_lens(&self) -> bool {
        !self.layers.is_empty()
    }

    pub fn final_distribution(&self) -> Result<ProbVector> {
        self.final_dist.distribution(self.vocab_size)
    }

    /// Structural checks against the expected layer count and payload kind.
    pub fn check_shape(&self, num_layers: usize, kind: PayloadKind, hidden_dim: usize) -> Result<()> {
        if self.has_lens() && self.layers.len() != num_layers {
            return Err(Error::MalformedFrame(format!(
                "frame has {} layers, expected {num_layers}",
                self.layers.len()
            )));
        }
        for payload in self.layers.iter().chain(std::iter::once(&self.final_dist)) {
            if payload.kind() != kind {
                return Err(Error::MalformedFrame("payload kind differs from header".into()));
            }
            match payload {
                LayerPayload::Dense(p) if p.len() != self.vocab_size => {
                    return Err(Error::MalformedFrame(format!(
                        "dense payload has {} entries, vocabulary is {}",
                        p.len(),
                        self.vocab_size
                    )));
                }
                LayerPayload::Sparse { ids, logits, .. } if ids.len() != logits.len() => {
                    return Err(Error::MalformedFrame("sparse ids and logits differ in length".into()));
                }
                LayerPayload::Sparse { ids, .. } if ids.iter().any(|&i| i as usize >= self.vocab_size) => {
                    return Err(Error::MalformedFrame("sparse id outside vocabulary".into()));
                }
                _ => {}
            }
        }
        if let Some(hidden) = &self.hidden {
            if hidden.len() != num_layers {
                return Err(Error::MalformedFrame(format!(
                    "frame has {} hidden vectors, expected {num_layers}",
                    hidden.len()
                )));
            }
            if hidden.iter().any(|h| h.len() != hidden_dim) {
                return Err(Error::MalformedFrame(format!(
                    "hidden vector dimension differs from {hidden_dim}"
                )));
            }
        }
        Ok(())
    }
}

/// One sampled generation with its lens data and grading.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub question_id: String,
    pub sample_index: u32,
    pub dataset_tag: String,
    pub token_ids: Vec<u32>,
    /// Natural-log probability of each sampled token under the final distribution.
    pub sampled_token_logprob: Vec<f32>,
    /// One frame per token, or empty when no distributions were captured.
    pub frames: Vec<LayerLensFrame>,
    pub answer: String,
    pub is_correct: bool,
    /// Index of the first token of the final-answer segment, when known.
    pub answer_start: Option<u32>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Record-local invariants against a header.
    pub fn check(&self, header: &TraceHeader) -> Result<()> {
        let t = self.token_ids.len();
        if self.sampled_token_logprob.len() != t {
            return Err(Error::Schema(format!(
                "{} sampled log-probabilities for {t} tokens",
                self.sampled_token_logprob.len()
            )));
        }
        if !self.frames.is_empty() && self.frames.len() != t {
            return Err(Error::Schema(format!("{} frames for {t} tokens", self.frames.len())));
        }
        if let Some(bad) = self.token_ids.iter().find(|&&id| id as usize >= header.vocab_size) {
            return Err(Error::Schema(format!("token id {bad} outside vocabulary")));
        }
        if let Some(bad) = self
            .sampled_token_logprob
            .iter()
            .find(|lp| !lp.is_finite() || **lp > PROB_SUM_TOLERANCE as f32)
        {
            return Err(Error::Schema(format!("invalid sampled log-probability {bad}")));
        }
        let kind = header.payload_kind();
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.vocab_size != header.vocab_size {
                return Err(Error::MalformedFrame(format!(
                    "frame {i} vocabulary differs from header"
                )));
            }
            frame
                .check_shape(header.num_layers, kind, header.hidden_dim)
                .map_err(|e| Error::MalformedFrame(format!("token {i}: {e}")))?;
        }
        Ok(())
    }
}
