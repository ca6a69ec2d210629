//! Mean DTR and its correlation with accuracy over the g x rho grid.

use lens_effort::analysis::{hyperparam_sweep, CorrelationConfig};
use lens_effort::effort::RecordProfile;
use lens_effort::report::{sweep_report, RenderOptions, ReportFormat};
use lens_effort::settling::SettlingConfig;
use lens_effort::settling::{DEFAULT_G_GRID, DEFAULT_RHO_GRID};
use lens_effort::toy::{synth_question, LengthModel, PlantedBenchmarkSpec};

fn main() -> lens_effort::Result<()> {
    let spec = PlantedBenchmarkSpec {
        num_questions: 30,
        samples_per_question: 8,
        lengths: LengthModel {
            min_tokens: 30,
            max_tokens: 80,
            dtr_coupling: 0.0,
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
    let points = hyperparam_sweep(
        &profiles,
        &DEFAULT_G_GRID,
        &DEFAULT_RHO_GRID,
        &CorrelationConfig {
            settling,
            ..CorrelationConfig::default()
        },
        None,
    )?;
    print!(
        "{}",
        sweep_report(&points).render(ReportFormat::Text, RenderOptions::default())
    );
    Ok(())
}
