//! Token x layer JSD matrix for one toy-model sequence, as CSV.

use lens_effort::analysis::heatmap_matrix;
use lens_effort::settling::SettlingConfig;
use lens_effort::toy::{generate_sequence, ToyModelConfig};

fn main() -> lens_effort::Result<()> {
    let mut config = ToyModelConfig::new(10, 16, 32, 3);
    config.sampling.max_tokens = 6;
    let record = generate_sequence(&config, &[1, 2, 3])?;
    let map = heatmap_matrix(&record, &SettlingConfig::default())?;
    print!("{}", map.to_csv());
    Ok(())
}
