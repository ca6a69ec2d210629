//! `.curves.jsonl`: per-token divergence curves and settling depths derived
//! from a trace, so threshold sweeps and reports skip the lens payloads.
//!
//! Line 1 is a [`CacheHeader`]; each later line holds one record's profile.
//! Curves are stored as packed little-endian `f64`, so every quantity
//! computed from a cache equals the one computed from the trace bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codec::{pack_f64, unpack_f64};
use super::format::TraceReader;
use super::record::SequenceRecord;
use crate::effort::{ProfileCurves, RecordProfile};
use crate::error::{Error, Result};
use crate::parallel;
use crate::settling::SettlingConfig;

pub const CACHE_VERSION: u32 = 1;

/// Records decoded per parallel batch while building a cache.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub cache_version: u32,
    pub fingerprint: String,
    pub settling: SettlingConfig,
    pub model_id: String,
    pub seed: u64,
    pub num_layers: usize,
    pub vocab_size: usize,
}

/// A cached record: its profile plus the depths and DTR under the cache's
/// own settling configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedRecord {
    pub profile: RecordProfile,
    pub settling_depths: Vec<usize>,
    pub dtr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveCache {
    pub header: CacheHeader,
    pub records: Vec<CachedRecord>,
}

impl CurveCache {
    pub fn fingerprint(&self) -> &str {
        &self.header.fingerprint
    }

    /// Settling depths of record `i`, reusing stored values when `config`
    /// carries the cache's fingerprint.
    pub fn settling_depths(&self, i: usize, config: &SettlingConfig) -> Result<Vec<usize>> {
        let record = &self.records[i];
        let depths = record.profile.settling_depths(config)?;
        if config.fingerprint() == self.header.fingerprint {
            debug_assert_eq!(depths, record.settling_depths);
            return Ok(record.settling_depths.clone());
        }
        Ok(depths)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCached {
    question_id: String,
    sample_index: u32,
    dataset_tag: String,
    answer: String,
    is_correct: bool,
    token_ids: Vec<u32>,
    logprob: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entropy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    self_certainty: Option<String>,
    curves: String,
    settling_depths: Vec<usize>,
    dtr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheSummary {
    pub records: usize,
    pub tokens: usize,
    pub bytes: u64,
}

fn cached_from_record(record: &SequenceRecord, header: &CacheHeader, config: &SettlingConfig) -> Result<CachedRecord> {
    if !record.is_empty() && !record.frames.first().is_some_and(|f| f.has_lens()) {
        return Err(Error::MissingData(format!(
            "record {}#{} carries no per-layer distributions",
            record.question_id, record.sample_index
        )));
    }
    let profile = RecordProfile::from_record(
        record,
        &header.model_id,
        header.seed,
        Some((config.metric, config.log_base)),
    )?;
    let (settling_depths, dtr) = if profile.token_count == 0 {
        (Vec::new(), 0.0)
    } else {
        (profile.settling_depths(config)?, profile.dtr(config, None)?.dtr)
    };
    Ok(CachedRecord {
        profile,
        settling_depths,
        dtr,
    })
}

fn encode(record: &CachedRecord) -> WireCached {
    let p = &record.profile;
    WireCached {
        question_id: p.question_id.clone(),
        sample_index: p.sample_index,
        dataset_tag: p.dataset_tag.clone(),
        answer: p.answer.clone(),
        is_correct: p.is_correct,
        token_ids: p.token_ids.clone(),
        logprob: pack_f64(&p.logprob),
        entropy: p.entropy.as_deref().map(pack_f64),
        self_certainty: p.self_certainty.as_deref().map(pack_f64),
        curves: p.curves.as_ref().map_or_else(String::new, |c| pack_f64(&c.distances)),
        settling_depths: record.settling_depths.clone(),
        dtr: record.dtr,
    }
}

fn decode(wire: WireCached, header: &CacheHeader, line: usize) -> Result<CachedRecord> {
    let invalid = |message: String| Error::Validation {
        line,
        question_id: wire.question_id.clone(),
        message,
    };
    let t = wire.token_ids.len();
    let per_token = |s: &str, what: &str| -> Result<Vec<f64>> {
        let v = unpack_f64(s).map_err(&invalid)?;
        if v.len() != t {
            return Err(invalid(format!("{what} holds {} values for {t} tokens", v.len())));
        }
        Ok(v)
    };
    let logprob = per_token(&wire.logprob, "logprob")?;
    let entropy = wire.entropy.as_deref().map(|s| per_token(s, "entropy")).transpose()?;
    let self_certainty = wire
        .self_certainty
        .as_deref()
        .map(|s| per_token(s, "self_certainty"))
        .transpose()?;
    let distances = unpack_f64(&wire.curves).map_err(&invalid)?;
    if distances.len() != t * header.num_layers {
        return Err(invalid(format!(
            "{} curve values for {t} tokens of {} layers",
            distances.len(),
            header.num_layers
        )));
    }
    if wire.settling_depths.len() != t {
        return Err(invalid(format!(
            "{} settling depths for {t} tokens",
            wire.settling_depths.len()
        )));
    }
    Ok(CachedRecord {
        profile: RecordProfile {
            model_id: header.model_id.clone(),
            seed: header.seed,
            question_id: wire.question_id,
            sample_index: wire.sample_index,
            dataset_tag: wire.dataset_tag,
            answer: wire.answer,
            is_correct: wire.is_correct,
            token_count: t,
            token_ids: wire.token_ids,
            logprob,
            entropy,
            self_certainty,
            curves: Some(ProfileCurves {
                metric: header.settling.metric,
                log_base: header.settling.log_base,
                num_layers: header.num_layers,
                distances,
            }),
        },
        settling_depths: wire.settling_depths,
        dtr: wire.dtr,
    })
}

/// Derives a curve cache from a trace.
pub fn build_curve_cache(
    source: impl AsRef<Path>,
    config: &SettlingConfig,
    destination: impl AsRef<Path>,
    threads: Option<usize>,
) -> Result<CacheSummary> {
    let config = config.validated()?;
    let mut reader = TraceReader::open(source)?;
    let trace = reader.header().clone();
    let header = CacheHeader {
        cache_version: CACHE_VERSION,
        fingerprint: config.fingerprint(),
        settling: config,
        model_id: trace.model_id.clone(),
        seed: trace.sampling.seed,
        num_layers: trace.num_layers,
        vocab_size: trace.vocab_size,
    };
    let dest = destination.as_ref();
    let file = File::create(dest).map_err(|e| Error::io(dest, e))?;
    let mut out = BufWriter::new(file);
    let mut bytes = 0u64;
    let mut emit = |line: String, out: &mut BufWriter<File>| -> Result<()> {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(dest, e))?;
        bytes += line.len() as u64 + 1;
        Ok(())
    };
    emit(
        serde_json::to_string(&header).map_err(|e| Error::Schema(e.to_string()))?,
        &mut out,
    )?;
    let (mut records, mut tokens) = (0, 0);
    parallel::install(threads, || -> Result<()> {
        loop {
            let batch: Vec<SequenceRecord> = reader.by_ref().take(BATCH).collect::<Result<_>>()?;
            if batch.is_empty() {
                return Ok(());
            }
            let cached = parallel::map_ordered(&batch, |r| cached_from_record(r, &header, &config))?;
            for c in &cached {
                records += 1;
                tokens += c.profile.token_count;
                emit(
                    serde_json::to_string(&encode(c)).map_err(|e| Error::Schema(e.to_string()))?,
                    &mut out,
                )?;
            }
        }
    })??;
    out.flush().map_err(|e| Error::io(dest, e))?;
    Ok(CacheSummary { records, tokens, bytes })
}

fn parse_cache_header(line: &str) -> Result<CacheHeader> {
    let header: CacheHeader = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.cache_version != CACHE_VERSION {
        return Err(Error::UnsupportedSchema {
            found: header.cache_version,
            supported: CACHE_VERSION,
        });
    }
    Ok(header)
}

pub fn read_curve_cache(source: impl AsRef<Path>) -> Result<CurveCache> {
    let path = source.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => parse_cache_header(&line.map_err(|e| Error::io(path, e))?)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireCached = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(decode(wire, &header, i + 1)?);
    }
    Ok(CurveCache { header, records })
}

/// What an input file turned out to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Trace,
    Cache,
}

/// Profiles loaded from a trace or a cache, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProfiles {
    pub kind: InputKind,
    pub model_id: String,
    pub seed: u64,
    pub num_layers: usize,
    pub profiles: Vec<RecordProfile>,
}

/// Tells traces and caches apart by their header line.
pub fn detect_input(source: impl AsRef<Path>) -> Result<InputKind> {
    let path = source.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(first.trim_end()).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if value.get("cache_version").is_some() {
        Ok(InputKind::Cache)
    } else if value.get("schema_version").is_some() {
        Ok(InputKind::Trace)
    } else {
        Err(Error::Parse {
            line: 1,
            message: "header has neither schema_version nor cache_version".into(),
        })
    }
}

/// Loads per-record profiles from either input kind. Curves from a trace are
/// computed for `config`; a cache must have been built with the same metric
/// and log base.
pub fn load_profiles(
    source: impl AsRef<Path>,
    config: &SettlingConfig,
    threads: Option<usize>,
) -> Result<LoadedProfiles> {
    let source = source.as_ref();
    match detect_input(source)? {
        InputKind::Cache => {
            let cache = read_curve_cache(source)?;
            if cache.header.settling.curve_fingerprint() != config.curve_fingerprint() {
                return Err(Error::FingerprintMismatch {
                    cached: cache.header.fingerprint.clone(),
                    requested: config.fingerprint(),
                });
            }
            Ok(LoadedProfiles {
                kind: InputKind::Cache,
                model_id: cache.header.model_id,
                seed: cache.header.seed,
                num_layers: cache.header.num_layers,
                profiles: cache.records.into_iter().map(|r| r.profile).collect(),
            })
        }
        InputKind::Trace => {
            let mut reader = TraceReader::open(source)?;
            let header = reader.header().clone();
            let spec = Some((config.metric, config.log_base));
            let profiles = parallel::install(threads, || -> Result<Vec<RecordProfile>> {
                let mut profiles = Vec::new();
                loop {
                    let batch: Vec<SequenceRecord> = reader.by_ref().take(BATCH).collect::<Result<_>>()?;
                    if batch.is_empty() {
                        return Ok(profiles);
                    }
                    profiles.extend(parallel::map_ordered(&batch, |r| {
                        RecordProfile::from_record(r, &header.model_id, header.sampling.seed, spec)
                    })?);
                }
            })??;
            Ok(LoadedProfiles {
                kind: InputKind::Trace,
                model_id: header.model_id,
                seed: header.sampling.seed,
                num_layers: header.num_layers,
                profiles,
            })
        }
    }
}
