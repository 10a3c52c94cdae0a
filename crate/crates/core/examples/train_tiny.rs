//! Trains the tiny joint model on synthetic examples and prints the log.

use dereverb::models::{ModelKind, Scale};
use dereverb::trainer::{train, Dataset, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Dataset::synthetic_tiny(16, 4, 0);
    let config = TrainConfig {
        kind: ModelKind::Joint,
        scale: Scale::Tiny,
        epochs: 40,
        batch_size: 4,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let outcome = train(&config, &data)?;
    for row in outcome.log.iter().filter(|r| r.epoch % 10 == 0 || r.epoch == 1) {
        let l = &row.loss;
        println!(
            "epoch {:>2} {:<5} total {:.4}  dry {:.4}  rir {:.4}  rec {:.4}",
            row.epoch, row.split, l.total, l.l_dry, l.l_rir, l.l_rec
        );
    }
    Ok(())
}
