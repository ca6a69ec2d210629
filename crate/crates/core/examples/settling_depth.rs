//! Plants settling depths into a synthetic trace and recovers them.

use lens_effort::settling::{compute_dtr, deep_regime_start, RegimeConvention, SettlingConfig};
use lens_effort::toy::{synth_planted_trace, PlantedSchedule};

fn main() -> lens_effort::Result<()> {
    let num_layers = 12;
    let planted = vec![1, 4, 11, 12, 7, 12, 2, 10];
    let (record, depths) = synth_planted_trace(num_layers, &PlantedSchedule::new(planted.clone(), 32), 7)?;
    assert_eq!(depths, planted);

    let config = SettlingConfig::new(0.5, 0.85)?;
    let start = deep_regime_start(num_layers, config.rho, RegimeConvention::TopFraction);
    let report = compute_dtr(&record, &config, None)?;
    println!("deep regime starts at layer {start}");
    for (t, outcome) in report.outcomes.iter().enumerate() {
        println!(
            "token {t}: planted {:>2}  recovered {:>2}  deep {}",
            planted[t], outcome.settling_depth, outcome.is_deep
        );
    }
    println!(
        "DTR = {}/{} = {:.3}",
        report.deep_tokens, report.evaluated_tokens, report.dtr
    );
    Ok(())
}
