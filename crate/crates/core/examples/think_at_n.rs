//! Think@n against the other selection methods on a planted benchmark.

use lens_effort::aggregation::{build_pools, evaluate, AggregationConfig, Method};
use lens_effort::effort::RecordProfile;
use lens_effort::report::{aggregate_report, RenderOptions, ReportFormat};
use lens_effort::settling::SettlingConfig;
use lens_effort::toy::{synth_question, PlantedBenchmarkSpec};

fn main() -> lens_effort::Result<()> {
    let spec = PlantedBenchmarkSpec {
        num_questions: 40,
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
    let pools = build_pools(&profiles, &settling, 50)?;
    let configs: Vec<AggregationConfig> = Method::ALL.iter().map(|&m| AggregationConfig::new(m)).collect();
    let rows = evaluate(&pools, &configs, None)?;
    print!(
        "{}",
        aggregate_report(&rows).render(ReportFormat::Text, RenderOptions { thousands: true })
    );
    Ok(())
}
