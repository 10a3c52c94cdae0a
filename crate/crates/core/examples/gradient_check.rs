//! Finite-difference gradient check of every tiny model.

use dereverb::models::{check_model_gradients, ModelConfig, ModelKind, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for kind in ModelKind::ALL {
        let config = ModelConfig::preset(kind, Scale::Tiny);
        let report = check_model_gradients(&config, 0, None)?;
        println!(
            "{:<8} {:>5} elements checked, max relative error {:.2e}",
            kind.to_string(),
            report.checked,
            report.max_rel_err
        );
    }
    Ok(())
}
