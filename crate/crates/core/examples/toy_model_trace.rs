//! Generates a small toy-model trace, validates it and reads it back.

use lens_effort::toy::{synth_toy_trace, ToyModelConfig, ToyRunSpec};
use lens_effort::trace::{read_trace, validate_trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("lens-effort-examples");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("toy.lens.jsonl");

    let mut model = ToyModelConfig::new(6, 16, 24, 42);
    model.sampling.max_tokens = 12;
    let spec = ToyRunSpec {
        model,
        num_questions: 3,
        samples_per_question: 2,
        ..ToyRunSpec::default()
    };
    let summary = synth_toy_trace(&spec, &path, None)?;
    println!(
        "wrote {} records / {} tokens / {} bytes",
        summary.records, summary.tokens, summary.bytes
    );

    let report = validate_trace(&path);
    println!(
        "validation: {} of {} records ok, {} findings",
        report.records_ok,
        report.records_total,
        report.findings.len()
    );

    let reader = read_trace(&path)?;
    println!(
        "header: L={} |V|={} d={}",
        reader.header().num_layers,
        reader.header().vocab_size,
        reader.header().hidden_dim
    );
    for record in reader {
        let record = record?;
        println!(
            "{} #{}: answer {} correct {} tokens {:?}",
            record.question_id, record.sample_index, record.answer, record.is_correct, record.token_ids
        );
    }
    Ok(())
}
