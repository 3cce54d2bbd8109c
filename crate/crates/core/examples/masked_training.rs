//! Trains an unmasked baseline and a mask-aware Swish network on the same
//! generated dataset and compares their test mAUROC.

use std::path::Path;

use reachmask::eval::{
    evaluate_model, prepare_dataset, train_variant, ExperimentConfig, RunMeta, VariantId,
};

const CONFIG: &str = r#"
seed = 3
[training]
max_epochs = 12

[[datasets]]
name = "xor-heavy"
[datasets.generate]
depth = 4
trace_count = 600
nesting_probability = 0.75
weights = { sequence = 1.0, xor = 3.0, and = 1.0, loop = 1.0 }
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::from_toml(CONFIG)?;
    let ds = prepare_dataset(&config, 0, Path::new("."))?;
    println!(
        "{}: {} places, {} events; {} / {} / {} samples",
        ds.name,
        ds.net.num_places(),
        ds.net.alphabet().len(),
        ds.train.labels.len(),
        ds.validation.labels.len(),
        ds.test.labels.len()
    );
    for id in [VariantId::Baseline, VariantId::MS] {
        let variant = id.spec();
        let (model, history) =
            train_variant(&config.training, variant, &ds.train, &ds.validation, 17)?;
        let meta = RunMeta {
            dataset: ds.name.clone(),
            variant: id.to_string(),
            seed: 17,
        };
        let report = evaluate_model(&model, variant.mask_enabled, &ds.test, meta)?;
        println!(
            "{:<9} {} epochs (best {}), weighted mAUROC {:.4}, unweighted {:.4}",
            id.as_str(),
            history.epochs.len(),
            history.best_epoch,
            report.mauroc_weighted,
            report.mauroc_unweighted
        );
    }
    Ok(())
}
