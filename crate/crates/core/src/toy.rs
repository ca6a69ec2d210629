//! Seeded miniature layered model, plus generators whose settling depths are
//! planted by construction.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::settling::{deep_regime_start, RegimeConvention, DEFAULT_G, DEFAULT_RHO};
use crate::trace::{LayerLensFrame, SamplingParams, SequenceRecord, TraceHeader, TraceWriter};

/// Stable per-sequence seed from `(seed, question_id, sample_index)`:
/// FNV-1a over the bytes, then a splitmix64 finalizer.
pub fn sequence_seed(seed: u64, question_id: &str, sample_index: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(question_id.bytes())
        .chain([0xff])
        .chain(sample_index.to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn rng_for(seed: u64, question_id: &str, sample_index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sequence_seed(seed, question_id, sample_index))
}

fn to_f32(p: &[f64]) -> Vec<f32> {
    p.iter().map(|&x| x as f32).collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn rms_normalize(h: &mut [f64]) {
    let rms = (h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64).sqrt();
    if rms > 0.0 {
        h.iter_mut().for_each(|x| *x /= rms);
    }
}

/// Draws an index from unnormalized non-negative weights.
fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub eos_token_id: Option<u32>,
    /// Always take the most likely token (lowest id on ties).
    pub greedy: bool,
}

impl Default for ToySampling {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 64,
            eos_token_id: None,
            greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub sampling: ToySampling,
    /// Scale of the random perturbation in `A_l = I + s/sqrt(d) G`.
    pub mixing_scale: f64,
    /// Logit scale of the unembedding for a unit-RMS state.
    pub unembed_scale: f64,
    /// Decay of the running token context fed to layer 1.
    pub context_decay: f64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 8,
            hidden_dim: 16,
            vocab_size: 32,
            seed: 0,
            sampling: ToySampling::default(),
            mixing_scale: 0.8,
            unembed_scale: 3.0,
            context_decay: 0.5,
        }
    }
}

impl ToyModelConfig {
    pub fn new(num_layers: usize, hidden_dim: usize, vocab_size: usize, seed: u64) -> Self {
        Self {
            num_layers,
            hidden_dim,
            vocab_size,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        let problem = if self.num_layers < 2 {
            "num_layers must be at least 2"
        } else if self.hidden_dim < 2 {
            "hidden_dim must be at least 2"
        } else if self.vocab_size < 4 {
            "vocab_size must be at least 4"
        } else if s.max_tokens < 1 {
            "max_tokens must be at least 1"
        } else if !(s.temperature > 0.0 && s.temperature.is_finite()) && !s.greedy {
            "temperature must be positive unless sampling is greedy"
        } else if !(s.top_p > 0.0 && s.top_p <= 1.0) {
            "top_p must lie in (0, 1]"
        } else if s.eos_token_id.is_some_and(|e| e as usize >= self.vocab_size) {
            "eos_token_id outside vocabulary"
        } else {
            return Ok(());
        };
        Err(Error::Configuration(problem.into()))
    }
}

/// Frozen random weights: embeddings, `L` residual-style layer maps and a
/// shared unembedding applied after every layer.
#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyModelConfig,
    embed: Vec<f64>,
    maps: Vec<(Vec<f64>, Vec<f64>)>,
    unembed: Vec<f64>,
}

/// One forward pass: unit-RMS hidden state and lens distribution per layer.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hidden: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl ToyModel {
    pub fn new(config: ToyModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, v) = (config.hidden_dim, config.vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let embed = normal(v * d, 1.0);
        let step = config.mixing_scale / (d as f64).sqrt();
        let maps = (0..config.num_layers)
            .map(|_| {
                let mut a = normal(d * d, step);
                for i in 0..d {
                    a[i * d + i] += 1.0;
                }
                (a, normal(d, 0.1))
            })
            .collect();
        let unembed = normal(v * d, config.unembed_scale / (d as f64).sqrt());
        Ok(Self {
            config,
            embed,
            maps,
            unembed,
        })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn header(&self, model_id: impl Into<String>) -> TraceHeader {
        let mut h = TraceHeader::new(model_id, self.config.num_layers, self.config.vocab_size);
        h.hidden_dim = self.config.hidden_dim;
        h.sampling = SamplingParams {
            temperature: self.config.sampling.temperature,
            top_p: self.config.sampling.top_p,
            seed: self.config.seed,
        };
        h
    }

    fn embedding(&self, id: u32) -> &[f64] {
        let d = self.config.hidden_dim;
        &self.embed[id as usize * d..(id as usize + 1) * d]
    }

    pub fn forward(&self, input: &[f64]) -> ForwardPass {
        let d = self.config.hidden_dim;
        let mut h = input.to_vec();
        rms_normalize(&mut h);
        let mut hidden = Vec::with_capacity(self.maps.len());
        let mut probs = Vec::with_capacity(self.maps.len());
        for (a, b) in &self.maps {
            let mut next: Vec<f64> = (0..d)
                .map(|i| b[i] + a[i * d..(i + 1) * d].iter().zip(&h).map(|(x, y)| x * y).sum::<f64>())
                .collect();
            rms_normalize(&mut next);
            let logits: Vec<f64> = self
                .unembed
                .chunks_exact(d)
                .map(|w| w.iter().zip(&next).map(|(x, y)| x * y).sum())
                .collect();
            probs.push(softmax(&logits));
            hidden.push(next.clone());
            h = next;
        }
        ForwardPass { hidden, probs }
    }

    /// Token ids eligible under top-p, most likely first.
    pub fn nucleus(probs: &[f64], top_p: f64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let mut acc = 0.0;
        let mut keep = 0;
        for &i in &order {
            keep += 1;
            acc += probs[i];
            if acc >= top_p {
                break;
            }
        }
        order.truncate(keep);
        order
    }

    fn sample(&self, rng: &mut ChaCha8Rng, probs: &[f64]) -> u32 {
        let s = &self.config.sampling;
        if s.greedy {
            return Self::nucleus(probs, f64::MIN_POSITIVE)[0] as u32;
        }
        let tempered: Vec<f64> = if s.temperature == 1.0 {
            probs.to_vec()
        } else {
            let logits: Vec<f64> = probs
                .iter()
                .map(|p| p.max(f64::MIN_POSITIVE).ln() / s.temperature)
                .collect();
            softmax(&logits)
        };
        let nucleus = Self::nucleus(&tempered, s.top_p);
        let weights: Vec<f64> = nucleus.iter().map(|&i| tempered[i]).collect();
        nucleus[draw(rng, &weights)] as u32
    }

    /// Generates one sequence; the sampling stream depends only on the model
    /// seed, `question_id` and `sample_index`.
    pub fn generate(&self, prompt: &[u32], question_id: &str, sample_index: u32) -> Result<SequenceRecord> {
        if prompt.is_empty() {
            return Err(Error::InvalidInput("prompt must not be empty".into()));
        }
        if let Some(bad) = prompt.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!("prompt token {bad} outside vocabulary")));
        }
        let d = self.config.hidden_dim;
        let decay = self.config.context_decay;
        let mut context = vec![0.0; d];
        let absorb = |ctx: &mut Vec<f64>, id: u32| {
            for (c, e) in ctx.iter_mut().zip(self.embedding(id)) {
                *c = decay * *c + (1.0 - decay) * e;
            }
        };
        for &id in prompt {
            absorb(&mut context, id);
        }
        let mut rng = rng_for(self.config.seed, question_id, sample_index);
        let (mut tokens, mut logprobs, mut frames) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.config.sampling.max_tokens {
            let pass = self.forward(&context);
            let stored: Vec<Vec<f32>> = pass.probs.iter().map(|p| to_f32(p)).collect();
            let final_probs: Vec<f64> = stored[stored.len() - 1].iter().map(|&x| x as f64).collect();
            let y = self.sample(&mut rng, &final_probs);
            tokens.push(y);
            logprobs.push((final_probs[y as usize]).ln() as f32);
            let hidden = pass.hidden.iter().map(|h| to_f32(h)).collect();
            frames.push(LayerLensFrame::dense(stored)?.with_hidden(hidden));
            absorb(&mut context, y);
            if self.config.sampling.eos_token_id == Some(y) {
                break;
            }
        }
        Ok(SequenceRecord {
            question_id: question_id.to_owned(),
            sample_index,
            dataset_tag: "toy".into(),
            token_ids: tokens,
            sampled_token_logprob: logprobs,
            frames,
            answer: String::new(),
            is_correct: false,
            answer_start: None,
        })
    }
}

pub fn generate_sequence(config: &ToyModelConfig, prompt: &[u32]) -> Result<SequenceRecord> {
    ToyModel::new(config.clone())?.generate(prompt, "q0", 0)
}

/// A batch of toy-model generations with synthetic answer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRunSpec {
    pub model: ToyModelConfig,
    pub num_questions: usize,
    pub samples_per_question: usize,
    pub prompt_len: usize,
    pub model_id: String,
    pub dataset_tag: String,
}

impl Default for ToyRunSpec {
    fn default() -> Self {
        Self {
            model: ToyModelConfig::default(),
            num_questions: 10,
            samples_per_question: 4,
            prompt_len: 4,
            model_id: "toy".into(),
            dataset_tag: "toy".into(),
        }
    }
}

fn question_id(q: usize) -> String {
    format!("q{q:04}")
}

/// Records of one question. The prompt and a gold digit come from the
/// question's own stream; the answer is the last token id modulo 10.
fn toy_question(model: &ToyModel, spec: &ToyRunSpec, q: usize) -> Result<Vec<SequenceRecord>> {
    let qid = question_id(q);
    let mut qrng = rng_for(model.config.seed, &qid, u32::MAX);
    let prompt: Vec<u32> = (0..spec.prompt_len.max(1))
        .map(|_| qrng.gen_range(0..model.config.vocab_size as u32))
        .collect();
    let gold = qrng.gen_range(0..10u32);
    (0..spec.samples_per_question as u32)
        .map(|s| {
            let mut r = model.generate(&prompt, &qid, s)?;
            let last = r.token_ids.last().copied().unwrap_or(0);
            r.answer = (last % 10).to_string();
            r.is_correct = last % 10 == gold;
            r.dataset_tag = spec.dataset_tag.clone();
            Ok(r)
        })
        .collect()
}

/// What a generator wrote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub records: usize,
    pub tokens: usize,
    pub bytes: u64,
}

fn write_questions(
    header: TraceHeader,
    num_questions: usize,
    destination: &Path,
    threads: Option<usize>,
    make: impl Fn(usize) -> Result<Vec<SequenceRecord>> + Sync + Send,
) -> Result<SynthSummary> {
    const CHUNK: usize = 16;
    let mut writer = TraceWriter::create(destination, header)?;
    let (mut records, mut tokens) = (0, 0);
    parallel::install(threads, || -> Result<()> {
        let ids: Vec<usize> = (0..num_questions).collect();
        for chunk in ids.chunks(CHUNK) {
            for question in parallel::map_ordered(chunk, |&q| make(q))? {
                for r in &question {
                    writer.write_record(r)?;
                    records += 1;
                    tokens += r.len();
                }
            }
        }
        Ok(())
    })??;
    let bytes = writer.finish()?;
    Ok(SynthSummary { records, tokens, bytes })
}

pub fn synth_toy_trace(
    spec: &ToyRunSpec,
    destination: impl AsRef<Path>,
    threads: Option<usize>,
) -> Result<SynthSummary> {
    let model = ToyModel::new(spec.model.clone())?;
    let header = model.header(spec.model_id.clone());
    write_questions(header, spec.num_questions, destination.as_ref(), threads, |q| {
        toy_question(&model, spec, q)
    })
}

/// Prescribed settling layers for a planted record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSchedule {
    /// `c*_t` for every token, 1-based.
    pub settling_layers: Vec<usize>,
    pub vocab_size: usize,
    /// Exponent applied to exponential weights; larger means peakier priors.
    pub sharpness: f64,
    /// Weight of the final distribution mixed into layers before `c*_t`.
    /// 0 gives a clean jump.
    pub leak: f64,
    /// Largest threshold the plant must survive.
    pub g_max: f64,
}

impl PlantedSchedule {
    pub fn new(settling_layers: Vec<usize>, vocab_size: usize) -> Self {
        Self {
            settling_layers,
            vocab_size,
            sharpness: 1.0,
            leak: 0.0,
            g_max: DEFAULT_G,
        }
    }

    /// Divergence (nats) of every layer before `c*_t` from the final layer.
    pub fn margin(&self) -> f64 {
        planted_margin(self.leak)
    }

    fn validate(&self, num_layers: usize) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::Construction("vocab_size must be at least 4".into()));
        }
        if let Some(bad) = self.settling_layers.iter().find(|&&c| c < 1 || c > num_layers) {
            return Err(Error::Construction(format!(
                "settling layer {bad} outside 1..={num_layers}"
            )));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return Err(Error::Construction(format!("leak {} must lie in [0, 1)", self.leak)));
        }
        let margin = self.margin();
        if margin <= self.g_max {
            return Err(Error::Construction(format!(
                "construction margin {margin:.6} does not exceed g_max = {}",
                self.g_max
            )));
        }
        Ok(())
    }
}

/// JSD in nats between `(1 - a) q + a p` and `p` for disjoint `p`, `q`.
pub fn planted_margin(leak: f64) -> f64 {
    let a = leak;
    let ln2 = std::f64::consts::LN_2;
    let p_side = if a > 0.0 {
        0.5 * a * (2.0 * a / (1.0 + a)).ln()
    } else {
        0.0
    };
    0.5 * (1.0 - a) * ln2 + p_side + 0.5 * (2.0 / (1.0 + a)).ln()
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, sharpness: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|_| (-(1.0 - rng.gen::<f64>()).ln()).powf(sharpness).max(1e-6))
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// A record whose layer distributions jump from a prior `q_t` to the final
/// `p_t` exactly at `c*_t`, with `q_t` and `p_t` on disjoint supports.
/// Returns the record and its ground-truth settling depths.
pub fn synth_planted_trace(
    num_layers: usize,
    schedule: &PlantedSchedule,
    seed: u64,
) -> Result<(SequenceRecord, Vec<usize>)> {
    schedule.validate(num_layers)?;
    let v = schedule.vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tokens, mut logprobs, mut frames) = (Vec::new(), Vec::new(), Vec::new());
    for &c in &schedule.settling_layers {
        let mut ids: Vec<usize> = (0..v).collect();
        for i in (1..v).rev() {
            ids.swap(i, rng.gen_range(0..=i));
        }
        let (p_ids, q_ids) = ids.split_at(v.div_ceil(2));
        let mut p = vec![0.0; v];
        let mut q = vec![0.0; v];
        for (&i, w) in p_ids
            .iter()
            .zip(random_weights(&mut rng, p_ids.len(), schedule.sharpness))
        {
            p[i] = w;
        }
        for (&i, w) in q_ids
            .iter()
            .zip(random_weights(&mut rng, q_ids.len(), schedule.sharpness))
        {
            q[i] = w;
        }
        let p32 = to_f32(&p);
        let prior = to_f32(
            &q.iter()
                .zip(&p)
                .map(|(qi, pi)| (1.0 - schedule.leak) * qi + schedule.leak * pi)
                .collect::<Vec<_>>(),
        );
        let layers: Vec<Vec<f32>> = (1..=num_layers)
            .map(|l| if l < c { prior.clone() } else { p32.clone() })
            .collect();
        let final64: Vec<f64> = p32.iter().map(|&x| x as f64).collect();
        let y = draw(&mut rng, &final64);
        tokens.push(y as u32);
        logprobs.push(final64[y].ln() as f32);
        frames.push(LayerLensFrame::dense(layers)?);
    }
    let record = SequenceRecord {
        question_id: "planted".into(),
        sample_index: 0,
        dataset_tag: "planted".into(),
        token_ids: tokens,
        sampled_token_logprob: logprobs,
        frames,
        answer: String::new(),
        is_correct: false,
        answer_start: None,
    };
    Ok((record, schedule.settling_layers.clone()))
}

/// Probability of a correct answer as a clamped linear function of DTR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessModel {
    pub intercept: f64,
    pub slope: f64,
}

impl CorrectnessModel {
    pub fn probability(&self, dtr: f64) -> f64 {
        (self.intercept + self.slope * dtr).clamp(0.0, 1.0)
    }
}

/// Sequence length `round(U(min, max) * (1 - coupling * dtr))`, at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthModel {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub dtr_coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBenchmarkSpec {
    pub num_questions: usize,
    pub samples_per_question: usize,
    pub num_layers: usize,
    pub vocab_size: usize,
    pub rho: f64,
    pub regime_convention: RegimeConvention,
    /// Range of per-question mean DTR.
    pub difficulty: (f64, f64),
    /// Half-width of per-sample DTR jitter around the question mean.
    pub sample_spread: f64,
    pub correctness: CorrectnessModel,
    pub lengths: LengthModel,
    pub answer_alphabet: Vec<String>,
    pub leak: f64,
    pub g_max: f64,
    pub seed: u64,
    pub model_id: String,
    pub dataset_tag: String,
}

impl Default for PlantedBenchmarkSpec {
    fn default() -> Self {
        Self {
            num_questions: 100,
            samples_per_question: 25,
            num_layers: 8,
            vocab_size: 8,
            rho: DEFAULT_RHO,
            regime_convention: RegimeConvention::TopFraction,
            difficulty: (0.1, 0.9),
            sample_spread: 0.3,
            correctness: CorrectnessModel {
                intercept: 0.05,
                slope: 0.9,
            },
            lengths: LengthModel {
                min_tokens: 200,
                max_tokens: 600,
                dtr_coupling: 0.5,
            },
            answer_alphabet: ["A", "B", "C", "D", "E"].iter().map(|s| s.to_string()).collect(),
            leak: 0.0,
            g_max: DEFAULT_G,
            seed: 0,
            model_id: "planted".into(),
            dataset_tag: "planted".into(),
        }
    }
}

impl PlantedBenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let start = deep_regime_start(self.num_layers, self.rho, self.regime_convention);
        let problem = if self.samples_per_question < 2 {
            "samples_per_question must be at least 2".to_owned()
        } else if self.num_layers < 2 {
            "num_layers must be at least 2".to_owned()
        } else if start < 2 {
            format!("deep regime starts at layer {start}; shallow tokens need it to start at 2 or later")
        } else if self.answer_alphabet.len() < 2 {
            "answer alphabet needs at least two answers".to_owned()
        } else if !(0.0..=1.0).contains(&self.correctness.probability(0.0))
            || !(self.correctness.intercept.is_finite() && self.correctness.slope.is_finite())
        {
            "correctness model must be finite".to_owned()
        } else if self.lengths.min_tokens < 1 || self.lengths.max_tokens < self.lengths.min_tokens {
            "length range must satisfy 1 <= min <= max".to_owned()
        } else if !(0.0..=1.0).contains(&self.lengths.dtr_coupling) {
            "dtr_coupling must lie in [0, 1]".to_owned()
        } else {
            return Ok(());
        };
        Err(Error::Configuration(problem))
    }

    pub fn header(&self) -> TraceHeader {
        let mut h = TraceHeader::new(self.model_id.clone(), self.num_layers, self.vocab_size);
        h.sampling.seed = self.seed;
        h
    }
}

/// A benchmark sample with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSample {
    pub record: SequenceRecord,
    pub planted_depths: Vec<usize>,
    pub planted_dtr: f64,
}

/// All samples of question `q`.
pub fn synth_question(spec: &PlantedBenchmarkSpec, q: usize) -> Result<Vec<PlantedSample>> {
    spec.validate()?;
    let qid = question_id(q);
    let l = spec.num_layers;
    let start = deep_regime_start(l, spec.rho, spec.regime_convention);
    let mut qrng = rng_for(spec.seed, &qid, u32::MAX);
    let (lo, hi) = spec.difficulty;
    let mean = lo + (hi - lo) * qrng.gen::<f64>();
    let alphabet = &spec.answer_alphabet;
    let gold = qrng.gen_range(0..alphabet.len());
    // Wrong answers in a fixed per-question order with weights 1, 1/2, 1/3, ...
    let wrong: Vec<usize> = (1..alphabet.len()).map(|k| (gold + k) % alphabet.len()).collect();
    let wrong_weights: Vec<f64> = (1..=wrong.len()).map(|k| 1.0 / k as f64).collect();

    (0..spec.samples_per_question as u32)
        .map(|s| {
            let mut rng = rng_for(spec.seed, &qid, s);
            let target = (mean + spec.sample_spread * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0);
            let lm = spec.lengths;
            let base = lm.min_tokens as f64 + (lm.max_tokens - lm.min_tokens) as f64 * rng.gen::<f64>();
            let t = ((base * (1.0 - lm.dtr_coupling * target)).round() as usize).max(1);
            let deep = ((target * t as f64).round() as usize).min(t);
            let mut depths: Vec<usize> = (0..t).map(|_| rng.gen_range(1..start)).collect();
            for i in index::sample(&mut rng, t, deep) {
                depths[i] = rng.gen_range(start..=l);
            }
            let planted_dtr = deep as f64 / t as f64;
            let correct = rng.gen::<f64>() < spec.correctness.probability(planted_dtr);
            let answer = if correct {
                gold
            } else {
                wrong[draw(&mut rng, &wrong_weights)]
            };
            let schedule = PlantedSchedule {
                leak: spec.leak,
                g_max: spec.g_max,
                ..PlantedSchedule::new(depths, spec.vocab_size)
            };
            let (mut record, planted_depths) = synth_planted_trace(l, &schedule, rng.gen())?;
            record.question_id = qid.clone();
            record.sample_index = s;
            record.dataset_tag = spec.dataset_tag.clone();
            record.answer = alphabet[answer].clone();
            record.is_correct = correct;
            Ok(PlantedSample {
                record,
                planted_depths,
                planted_dtr,
            })
        })
        .collect()
}

/// Writes the whole planted benchmark as one trace.
pub fn synth_benchmark(
    spec: &PlantedBenchmarkSpec,
    destination: impl AsRef<Path>,
    threads: Option<usize>,
) -> Result<SynthSummary> {
    spec.validate()?;
    write_questions(spec.header(), spec.num_questions, destination.as_ref(), threads, |q| {
        Ok(synth_question(spec, q)?.into_iter().map(|s| s.record).collect())
    })
}
