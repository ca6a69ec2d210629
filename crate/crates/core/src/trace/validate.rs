use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use super::format::{decode_line, TraceReader};
use super::record::{LayerPayload, SequenceRecord, TraceHeader};
use crate::distributions::{jsd, PROB_SUM_TOLERANCE};
use crate::error::Error;

/// Every `SPOT_CHECK_STRIDE`-th token is checked for a zero final-layer divergence.
pub const SPOT_CHECK_STRIDE: usize = 100;

/// Largest accepted divergence between layer `L` and the stored final distribution.
pub const FINAL_LAYER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub line: usize,
    pub question_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.question_id {
            Some(q) => write!(f, "line {} ({q}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub header: Option<TraceHeader>,
    pub records_total: usize,
    pub records_ok: usize,
    pub tokens: usize,
    pub spot_checked_tokens: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn first_error(&self) -> Option<&Finding> {
        self.findings.first()
    }
}

fn finding(line: usize, question_id: Option<&str>, message: impl Into<String>) -> Finding {
    Finding {
        line,
        question_id: question_id.map(str::to_owned),
        message: message.into(),
    }
}

/// Full pass over a trace. Problems become findings; reading continues past
/// bad records.
pub fn validate_trace(source: impl AsRef<Path>) -> ValidationReport {
    let mut report = ValidationReport {
        header: None,
        records_total: 0,
        records_ok: 0,
        tokens: 0,
        spot_checked_tokens: 0,
        findings: Vec::new(),
    };
    let mut reader = match TraceReader::open(source) {
        Ok(r) => r,
        Err(e) => {
            report.findings.push(finding(1, None, e.to_string()));
            return report;
        }
    };
    let header = reader.header().clone();
    let mut seen: HashMap<String, HashSet<u32>> = HashMap::new();
    let mut global_token = 0usize;
    loop {
        let line = match reader.next_line() {
            None => break,
            Some(Err(e)) => {
                report.records_total += 1;
                report.findings.push(finding(reader.line(), None, e.to_string()));
                break;
            }
            Some(Ok(l)) => l.to_owned(),
        };
        let line_no = reader.line();
        report.records_total += 1;
        let record = match decode_line(&header, line_no, &line) {
            Ok(r) => r,
            Err(Error::Validation {
                question_id, message, ..
            }) => {
                report.findings.push(finding(line_no, Some(&question_id), message));
                continue;
            }
            Err(e) => {
                report.findings.push(finding(line_no, None, e.to_string()));
                continue;
            }
        };
        let before = report.findings.len();
        check_record(&header, &record, line_no, &mut global_token, &mut report);
        if !seen
            .entry(record.question_id.clone())
            .or_default()
            .insert(record.sample_index)
        {
            report.findings.push(finding(
                line_no,
                Some(&record.question_id),
                format!("duplicate sample_index {}", record.sample_index),
            ));
        }
        report.tokens += record.len();
        if report.findings.len() == before {
            report.records_ok += 1;
        }
    }
    report.header = Some(header);
    report
}

fn check_record(
    header: &TraceHeader,
    record: &SequenceRecord,
    line: usize,
    global_token: &mut usize,
    report: &mut ValidationReport,
) {
    let qid = Some(record.question_id.as_str());
    if let Err(e) = record.check(header) {
        report.findings.push(finding(line, qid, e.to_string()));
        return;
    }
    for (t, frame) in record.frames.iter().enumerate() {
        let payloads = frame.layers.iter().chain(std::iter::once(&frame.final_dist));
        for (l, payload) in payloads.enumerate() {
            let err = payload.mass_error();
            if err > PROB_SUM_TOLERANCE {
                let which = if l < frame.layers.len() {
                    format!("layer {}", l + 1)
                } else {
                    "final distribution".to_owned()
                };
                report.findings.push(finding(
                    line,
                    qid,
                    format!(
                        "token {t}, {which}: probabilities sum to {:.6}",
                        1.0 + signed_mass(payload)
                    ),
                ));
                return;
            }
        }
        let sampled = (*global_token).is_multiple_of(SPOT_CHECK_STRIDE);
        *global_token += 1;
        if !sampled || !frame.has_lens() {
            continue;
        }
        report.spot_checked_tokens += 1;
        let last = frame.layers.last().expect("frame has layers");
        let divergence = last
            .distribution(header.vocab_size)
            .and_then(|p| jsd(&p, &frame.final_distribution()?));
        match divergence {
            Ok(d) if d <= FINAL_LAYER_TOLERANCE => {}
            Ok(d) => report.findings.push(finding(
                line,
                qid,
                format!("token {t}: final layer diverges from stored final distribution (JSD {d:.3e})"),
            )),
            Err(e) => report.findings.push(finding(line, qid, format!("token {t}: {e}"))),
        }
    }
}

fn signed_mass(payload: &LayerPayload) -> f64 {
    match payload {
        LayerPayload::Dense(p) => p.iter().map(|&x| x as f64).sum::<f64>() - 1.0,
        LayerPayload::Sparse { .. } => 0.0,
    }
}
