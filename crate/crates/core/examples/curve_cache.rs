//! Builds a curve cache and checks it scores the same as the trace.

use lens_effort::effort::Measure;
use lens_effort::settling::SettlingConfig;
use lens_effort::toy::{synth_toy_trace, ToyRunSpec};
use lens_effort::trace::{build_curve_cache, load_profiles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("lens-effort-examples");
    std::fs::create_dir_all(&dir)?;
    let trace = dir.join("cache-demo.lens.jsonl");
    let cache = dir.join("cache-demo.curves.jsonl");

    synth_toy_trace(&ToyRunSpec::default(), &trace, None)?;
    let settling = SettlingConfig::default();
    let summary = build_curve_cache(&trace, &settling, &cache, None)?;
    println!(
        "trace {} bytes, cache {} bytes",
        std::fs::metadata(&trace)?.len(),
        summary.bytes
    );

    let strict = settling.with_g(0.25);
    let from_trace = load_profiles(&trace, &strict, None)?.profiles;
    let from_cache = load_profiles(&cache, &strict, None)?.profiles;
    for (a, b) in from_trace.iter().zip(&from_cache) {
        let (x, y) = (
            a.score(Measure::Dtr, &strict, None)?,
            b.score(Measure::Dtr, &strict, None)?,
        );
        assert_eq!(x.value.to_bits(), y.value.to_bits());
    }
    println!("{} records agree bit-for-bit at g = 0.25", from_cache.len());
    Ok(())
}
