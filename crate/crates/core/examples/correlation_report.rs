//! Binned correlation of every measure with accuracy on a planted benchmark.

use lens_effort::analysis::{correlation_table, CorrelationConfig};
use lens_effort::effort::{Measure, RecordProfile};
use lens_effort::report::{correlation_report, RenderOptions, ReportFormat};
use lens_effort::settling::SettlingConfig;
use lens_effort::toy::{synth_question, PlantedBenchmarkSpec};

fn main() -> lens_effort::Result<()> {
    let spec = PlantedBenchmarkSpec {
        num_questions: 40,
        samples_per_question: 10,
        lengths: lens_effort::toy::LengthModel {
            min_tokens: 40,
            max_tokens: 120,
            dtr_coupling: 0.5,
        },
        ..PlantedBenchmarkSpec::default()
    };
    let settling = SettlingConfig::default();
    let curves = (settling.metric, settling.log_base);
    let mut profiles = Vec::new();
    for q in 0..spec.num_questions {
        for sample in synth_question(&spec, q)? {
            profiles.push(RecordProfile::from_record(
                &sample.record,
                &spec.model_id,
                spec.seed,
                Some(curves),
            )?);
        }
    }
    let table = correlation_table(
        &profiles,
        &Measure::ALL,
        &CorrelationConfig {
            settling,
            ..CorrelationConfig::default()
        },
        None,
    )?;
    print!(
        "{}",
        correlation_report(&table).render(ReportFormat::Text, RenderOptions::default())
    );
    Ok(())
}
