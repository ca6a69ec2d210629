use std::path::Path;

use lens_effort::effort::Measure;
use lens_effort::settling::{DistanceMetric, SettlingConfig};
use lens_effort::toy::{synth_toy_trace, ToyModel, ToyModelConfig, ToyRunSpec};
use lens_effort::trace::{
    build_curve_cache, detect_input, load_profiles, read_curve_cache, read_trace, validate_trace, write_trace,
    InputKind, LayerLensFrame, LayerPayload, SequenceRecord, TraceHeader, TraceWriter,
};
use lens_effort::Error;

fn toy_records(n: usize) -> (TraceHeader, Vec<SequenceRecord>) {
    let mut config = ToyModelConfig::new(4, 6, 10, 11);
    config.sampling.max_tokens = 5;
    let model = ToyModel::new(config).unwrap();
    let records = (0..n)
        .map(|i| model.generate(&[1, 2], &format!("q{}", i / 2), (i % 2) as u32).unwrap())
        .collect();
    (model.header("toy"), records)
}

fn read_all(path: &Path) -> lens_effort::Result<Vec<SequenceRecord>> {
    read_trace(path)?.collect()
}

fn dense_record(qid: &str, sample_index: u32, frames: Vec<LayerLensFrame>) -> SequenceRecord {
    let t = frames.len();
    SequenceRecord {
        question_id: qid.into(),
        sample_index,
        dataset_tag: "unit".into(),
        token_ids: vec![0; t],
        sampled_token_logprob: vec![-0.5; t],
        frames,
        answer: "x".into(),
        is_correct: true,
        answer_start: None,
    }
}

#[test]
fn ten_records_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lens.jsonl");
    let (header, records) = toy_records(10);
    write_trace(&header, &records, &path).unwrap();
    let reader = read_trace(&path).unwrap();
    assert_eq!(reader.header(), &header);
    let back: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
    assert_eq!(back, records);
}

#[test]
fn sparse_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.lens.jsonl");
    let mut header = TraceHeader::new("sparse", 2, 50);
    header.sparse_k = 2;
    let payload = |a: u32, b: u32, tail: f32| LayerPayload::Sparse {
        ids: vec![a, b],
        logits: vec![3.0, 1.5],
        tail_logsumexp: tail,
    };
    let frame = LayerLensFrame {
        vocab_size: 50,
        layers: vec![payload(4, 9, 2.0), payload(9, 4, 0.25)],
        final_dist: payload(9, 4, 0.25),
        hidden: None,
    };
    let mut record = dense_record("q", 0, vec![frame.clone(), frame]);
    record.token_ids = vec![9, 4];
    write_trace(&header, std::slice::from_ref(&record), &path).unwrap();
    assert_eq!(read_all(&path).unwrap(), vec![record]);
    assert!(validate_trace(&path).is_clean());
}

#[test]
fn writing_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (header, records) = toy_records(6);
    let a = dir.path().join("a.lens.jsonl");
    let b = dir.path().join("b.lens.jsonl");
    write_trace(&header, &records, &a).unwrap();
    write_trace(&header, &records, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn writer_reports_bytes_and_rejects_foreign_shapes() {
    let (header, records) = toy_records(2);
    let mut buf = Vec::new();
    let mut writer = TraceWriter::new(&mut buf, header.clone()).unwrap();
    writer.write_record(&records[0]).unwrap();
    let mut other = TraceHeader::new("other", 3, 10);
    other.hidden_dim = header.hidden_dim;
    assert!(TraceWriter::new(Vec::new(), other)
        .unwrap()
        .write_record(&records[1])
        .is_err());
    let bytes = writer.finish().unwrap();
    assert_eq!(bytes as usize, buf.len());
}

#[test]
fn empty_trace_reads_validates_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.lens.jsonl");
    write_trace(&TraceHeader::new("m", 3, 4), &[], &path).unwrap();
    assert!(read_all(&path).unwrap().is_empty());
    let report = validate_trace(&path);
    assert!(report.is_clean());
    assert_eq!(report.records_total, 0);

    let cache = dir.path().join("e.curves.jsonl");
    let summary = build_curve_cache(&path, &SettlingConfig::default(), &cache, Some(1)).unwrap();
    assert_eq!(summary.records, 0);
    assert!(read_curve_cache(&cache).unwrap().records.is_empty());
}

#[test]
fn truncated_last_line_is_a_parse_error_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lens.jsonl");
    let (header, records) = toy_records(3);
    write_trace(&header, &records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() - 40]).unwrap();

    let results: Vec<_> = read_trace(&path).unwrap().collect();
    assert_eq!(results.len(), 3);
    assert_eq!(results[0].as_ref().unwrap(), &records[0]);
    assert_eq!(results[1].as_ref().unwrap(), &records[1]);
    assert!(
        matches!(results[2], Err(Error::Parse { line: 4, .. })),
        "{:?}",
        results[2]
    );

    let report = validate_trace(&path);
    assert_eq!(report.records_ok, 2);
    assert_eq!(report.first_error().unwrap().line, 4);
}

#[test]
fn layer_count_mismatch_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lens.jsonl");
    let (header, records) = toy_records(2);
    write_trace(&header, &records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"num_layers\":4", "\"num_layers\":5", 1)).unwrap();
    match read_all(&path) {
        Err(Error::Validation { line, question_id, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(question_id, "q0");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn unknown_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lens.jsonl");
    let (header, records) = toy_records(1);
    write_trace(&header, &records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"schema_version\":1", "\"schema_version\":99", 1)).unwrap();
    assert!(matches!(
        read_trace(&path),
        Err(Error::UnsupportedSchema { found: 99, .. })
    ));
    assert!(validate_trace(&path).first_error().is_some());
}

#[test]
fn validator_flags_mass_and_final_layer_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.lens.jsonl");
    let header = TraceHeader::new("m", 2, 2);
    let heavy = LayerLensFrame::dense(vec![vec![0.51, 0.5], vec![0.51, 0.5]]).unwrap();
    let mut drifted = LayerLensFrame::dense(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
    drifted.final_dist = LayerPayload::Dense(vec![0.25, 0.75]);
    let records = vec![dense_record("a", 0, vec![heavy]), dense_record("b", 0, vec![drifted])];
    write_trace(&header, &records, &path).unwrap();

    let report = validate_trace(&path);
    assert_eq!(report.records_total, 2);
    assert_eq!(report.findings.len(), 2, "{:?}", report.findings);
    assert!(report.findings[0].message.contains("sum"), "{}", report.findings[0]);
    assert_eq!(report.findings[1].question_id.as_deref(), Some("b"));
}

#[test]
fn duplicate_sample_index_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.lens.jsonl");
    let frame = LayerLensFrame::dense(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let records = vec![
        dense_record("a", 3, vec![frame.clone()]),
        dense_record("a", 3, vec![frame]),
    ];
    write_trace(&TraceHeader::new("m", 2, 2), &records, &path).unwrap();
    let report = validate_trace(&path);
    assert_eq!(report.findings.len(), 1);
    assert_eq!(report.findings[0].line, 3);
}

#[test]
fn cache_scores_equal_trace_scores_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.lens.jsonl");
    let cache = dir.path().join("t.curves.jsonl");
    let mut model = ToyModelConfig::new(6, 8, 16, 5);
    model.sampling.max_tokens = 30;
    let spec = ToyRunSpec {
        model,
        num_questions: 4,
        samples_per_question: 3,
        ..ToyRunSpec::default()
    };
    synth_toy_trace(&spec, &trace, Some(2)).unwrap();
    let settling = SettlingConfig::default();
    build_curve_cache(&trace, &settling, &cache, Some(3)).unwrap();
    assert_eq!(detect_input(&trace).unwrap(), InputKind::Trace);
    assert_eq!(detect_input(&cache).unwrap(), InputKind::Cache);

    for cfg in [settling, settling.with_g(0.25).with_rho(0.9)] {
        let a = load_profiles(&trace, &cfg, Some(1)).unwrap().profiles;
        let b = load_profiles(&cache, &cfg, Some(4)).unwrap().profiles;
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            for m in Measure::ALL {
                let (sx, sy) = (x.score(m, &cfg, Some(7)).unwrap(), y.score(m, &cfg, Some(7)).unwrap());
                assert_eq!(sx.value.to_bits(), sy.value.to_bits(), "{m:?}");
            }
        }
    }
}

#[test]
fn cache_with_other_metric_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.lens.jsonl");
    let cache = dir.path().join("t.curves.jsonl");
    let (header, records) = toy_records(2);
    write_trace(&header, &records, &trace).unwrap();
    build_curve_cache(&trace, &SettlingConfig::default(), &cache, None).unwrap();
    let kl = SettlingConfig {
        metric: DistanceMetric::Kl,
        ..SettlingConfig::default()
    };
    assert!(matches!(
        load_profiles(&cache, &kl, None),
        Err(Error::FingerprintMismatch { .. })
    ));
    assert!(load_profiles(&trace, &kl, None).is_ok());
}

#[test]
fn cosine_needs_hidden_states() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nohidden.lens.jsonl");
    let frame = LayerLensFrame::dense(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
    write_trace(
        &TraceHeader::new("m", 2, 2),
        &[dense_record("a", 0, vec![frame])],
        &path,
    )
    .unwrap();
    let cosine = SettlingConfig {
        metric: DistanceMetric::Cosine,
        ..SettlingConfig::default()
    };
    assert!(matches!(
        load_profiles(&path, &cosine, None),
        Err(Error::MissingData(_))
    ));
    let cache = dir.path().join("c.curves.jsonl");
    assert!(matches!(
        build_curve_cache(&path, &cosine, &cache, None),
        Err(Error::MissingData(_))
    ));
}

#[test]
fn zero_threads_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lens.jsonl");
    let (header, records) = toy_records(1);
    write_trace(&header, &records, &path).unwrap();
    assert!(matches!(
        load_profiles(&path, &SettlingConfig::default(), Some(0)),
        Err(Error::Configuration(_))
    ));
}
