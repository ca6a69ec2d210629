//! Line-delimited `.lens.jsonl` reading and writing.
//!
//! Line 1 holds the [`TraceHeader`]; every following line holds one record.
//! Numeric payloads are little-endian arrays packed as base-64 strings:
//!
//! ```text
//! {"question_id":..,"sample_index":..,"dataset_tag":..,"answer":..,"is_correct":..,
//!  "answer_start":..,"token_ids":[..],"logprobs":"<f32>","frames":[
//!    {"layers":{"probs":"<f32 L*V>"},"final":{"probs":"<f32 V>"},"hidden":"<f32 L*d>"}, ..]}
//! ```
//!
//! Sparse traces replace `probs` with `ids` (`u32`), `logits` (`f32`, both
//! `k` per layer) and `tail_lse` (`f32`, one per layer; `-inf` for an empty
//! tail).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codec::{pack_f32, pack_u32, unpack_f32, unpack_u32};
use super::record::{LayerLensFrame, LayerPayload, PayloadKind, SequenceRecord, TraceHeader, SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct WireBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail_lse: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<WireBlock>,
    #[serde(rename = "final")]
    final_dist: WireBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    question_id: String,
    sample_index: u32,
    dataset_tag: String,
    answer: String,
    is_correct: bool,
    answer_start: Option<u32>,
    token_ids: Vec<u32>,
    logprobs: String,
    frames: Vec<WireFrame>,
}

fn encode_block(payloads: &[LayerPayload]) -> Result<WireBlock> {
    let mut block = WireBlock {
        probs: None,
        ids: None,
        logits: None,
        tail_lse: None,
    };
    match payloads.first() {
        Some(LayerPayload::Dense(_)) => {
            let mut probs = Vec::new();
            for p in payloads {
                match p {
                    LayerPayload::Dense(v) => probs.extend_from_slice(v),
                    _ => return Err(Error::Schema("mixed payload kinds in one frame".into())),
                }
            }
            block.probs = Some(pack_f32(&probs));
        }
        Some(LayerPayload::Sparse { .. }) => {
            let (mut ids, mut logits, mut tails) = (Vec::new(), Vec::new(), Vec::new());
            for p in payloads {
                match p {
                    LayerPayload::Sparse {
                        ids: i,
                        logits: l,
                        tail_logsumexp,
                    } => {
                        ids.extend_from_slice(i);
                        logits.extend_from_slice(l);
                        tails.push(*tail_logsumexp);
                    }
                    _ => return Err(Error::Schema("mixed payload kinds in one frame".into())),
                }
            }
            block.ids = Some(pack_u32(&ids));
            block.logits = Some(pack_f32(&logits));
            block.tail_lse = Some(pack_f32(&tails));
        }
        None => {}
    }
    Ok(block)
}

fn decode_block(block: &WireBlock, header: &TraceHeader, count: usize) -> Result<Vec<LayerPayload>, String> {
    match header.payload_kind() {
        PayloadKind::Dense => {
            let probs = unpack_f32(block.probs.as_deref().ok_or("dense block without `probs`")?)?;
            let v = header.vocab_size;
            if probs.len() != count * v {
                return Err(format!("expected {} probabilities, found {}", count * v, probs.len()));
            }
            Ok(probs.chunks_exact(v).map(|c| LayerPayload::Dense(c.to_vec())).collect())
        }
        PayloadKind::Sparse => {
            let k = header.sparse_k;
            let ids = unpack_u32(block.ids.as_deref().ok_or("sparse block without `ids`")?)?;
            let logits = unpack_f32(block.logits.as_deref().ok_or("sparse block without `logits`")?)?;
            let tails = unpack_f32(block.tail_lse.as_deref().ok_or("sparse block without `tail_lse`")?)?;
            if ids.len() != count * k || logits.len() != count * k || tails.len() != count {
                return Err(format!("sparse block does not hold {count} layers of {k} entries"));
            }
            Ok((0..count)
                .map(|l| LayerPayload::Sparse {
                    ids: ids[l * k..(l + 1) * k].to_vec(),
                    logits: logits[l * k..(l + 1) * k].to_vec(),
                    tail_logsumexp: tails[l],
                })
                .collect())
        }
    }
}

fn encode_record(record: &SequenceRecord) -> Result<WireRecord> {
    let frames = record
        .frames
        .iter()
        .map(|f| {
            Ok(WireFrame {
                layers: if f.has_lens() {
                    Some(encode_block(&f.layers)?)
                } else {
                    None
                },
                final_dist: encode_block(std::slice::from_ref(&f.final_dist))?,
                hidden: f.hidden.as_ref().map(|h| pack_f32(&h.concat())),
            })
        })
        .collect::<Result<_>>()?;
    Ok(WireRecord {
        question_id: record.question_id.clone(),
        sample_index: record.sample_index,
        dataset_tag: record.dataset_tag.clone(),
        answer: record.answer.clone(),
        is_correct: record.is_correct,
        answer_start: record.answer_start,
        token_ids: record.token_ids.clone(),
        logprobs: pack_f32(&record.sampled_token_logprob),
        frames,
    })
}

fn decode_record(wire: WireRecord, header: &TraceHeader) -> Result<SequenceRecord, String> {
    let l = header.num_layers;
    let frames = wire
        .frames
        .iter()
        .map(|f| {
            let layers = match &f.layers {
                Some(b) => decode_block(b, header, l)?,
                None => Vec::new(),
            };
            let final_dist = decode_block(&f.final_dist, header, 1)?.pop().expect("one payload");
            let hidden = match &f.hidden {
                Some(h) => {
                    let flat = unpack_f32(h)?;
                    let d = header.hidden_dim;
                    if d == 0 || flat.len() != l * d {
                        return Err(format!("hidden payload has {} values, expected {}", flat.len(), l * d));
                    }
                    Some(flat.chunks_exact(d).map(<[f32]>::to_vec).collect())
                }
                None => None,
            };
            Ok(LayerLensFrame {
                vocab_size: header.vocab_size,
                layers,
                final_dist,
                hidden,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(SequenceRecord {
        question_id: wire.question_id,
        sample_index: wire.sample_index,
        dataset_tag: wire.dataset_tag,
        token_ids: wire.token_ids,
        sampled_token_logprob: unpack_f32(&wire.logprobs)?,
        frames,
        answer: wire.answer,
        is_correct: wire.is_correct,
        answer_start: wire.answer_start,
    })
}

struct CountingWriter<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Streaming trace writer. Output is deterministic for identical input.
pub struct TraceWriter<W: Write> {
    out: CountingWriter<W>,
    header: TraceHeader,
    label: String,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: TraceHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::with_label(BufWriter::new(file), header, path.display().to_string())
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(inner: W, header: TraceHeader) -> Result<Self> {
        Self::with_label(inner, header, "<stream>".into())
    }

    fn with_label(inner: W, header: TraceHeader, label: String) -> Result<Self> {
        header.validate()?;
        let mut w = Self {
            out: CountingWriter { inner, bytes: 0 },
            header,
            label,
        };
        let line = serde_json::to_string(&w.header).map_err(|e| Error::Schema(e.to_string()))?;
        w.write_line(&line)?;
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let label = &self.label;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(label.as_str(), e))
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn write_record(&mut self, record: &SequenceRecord) -> Result<()> {
        record
            .check(&self.header)
            .map_err(|e| Error::Schema(format!("record {}#{}: {e}", record.question_id, record.sample_index)))?;
        let line = serde_json::to_string(&encode_record(record)?).map_err(|e| Error::Schema(e.to_string()))?;
        self.write_line(&line)
    }

    /// Flushes and returns the number of bytes written.
    pub fn finish(mut self) -> Result<u64> {
        let label = self.label.clone();
        self.out.flush().map_err(|e| Error::io(label, e))?;
        Ok(self.out.bytes)
    }
}

/// Writes a complete trace file and returns its size in bytes.
pub fn write_trace<'a>(
    header: &TraceHeader,
    records: impl IntoIterator<Item = &'a SequenceRecord>,
    destination: impl AsRef<Path>,
) -> Result<u64> {
    let mut w = TraceWriter::create(destination, header.clone())?;
    for r in records {
        w.write_record(r)?;
    }
    w.finish()
}

/// Streaming reader; records are validated against the header as they are yielded.
pub struct TraceReader<R: BufRead> {
    input: R,
    header: TraceHeader,
    line_no: usize,
    buf: String,
    done: bool,
}

/// Parses the header line of a trace.
pub(crate) fn parse_header(line: &str) -> Result<TraceHeader> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "header lacks schema_version".into(),
        })?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::UnsupportedSchema {
            found: version as u32,
            supported: SCHEMA_VERSION,
        });
    }
    let header: TraceHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    header.validate()?;
    Ok(header)
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut buf = String::new();
        input.read_line(&mut buf).map_err(|e| Error::io("<trace>", e))?;
        if buf.trim().is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            });
        }
        let header = parse_header(buf.trim_end())?;
        Ok(Self {
            input,
            header,
            line_no: 1,
            buf,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    /// Line number of the most recently yielded record.
    pub fn line(&self) -> usize {
        self.line_no
    }

    /// Reads the next non-empty line, without decoding it.
    pub(crate) fn next_line(&mut self) -> Option<Result<&str>> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {
                    self.line_no += 1;
                    if !self.buf.trim().is_empty() {
                        return Some(Ok(self.buf.trim_end()));
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::Parse {
                        line: self.line_no + 1,
                        message: e.to_string(),
                    }));
                }
            }
        }
    }
}

/// Decodes one record line without record-level validation.
pub(crate) fn decode_line(header: &TraceHeader, line_no: usize, line: &str) -> Result<SequenceRecord> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let question_id = wire.question_id.clone();
    decode_record(wire, header).map_err(|message| Error::Validation {
        line: line_no,
        question_id,
        message,
    })
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<SequenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.next_line()? {
            Ok(l) => l.to_owned(),
            Err(e) => return Some(Err(e)),
        };
        let line_no = self.line_no;
        let record = match decode_line(&self.header, line_no, &line) {
            Ok(r) => r,
            Err(e) => return Some(Err(e)),
        };
        Some(match record.check(&self.header) {
            Ok(()) => Ok(record),
            Err(e) => Err(Error::Validation {
                line: line_no,
                question_id: record.question_id,
                message: e.to_string(),
            }),
        })
    }
}

/// Opens a trace for streaming iteration.
pub fn read_trace(source: impl AsRef<Path>) -> Result<TraceReader<BufReader<File>>> {
    TraceReader::open(source)
}
