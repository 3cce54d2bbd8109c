//! Runs a small multi-run experiment and prints confidence intervals of each
//! variant's mAUROC difference to the baseline.

use std::path::Path;

use reachmask::eval::{run_experiment, write_ci_csv, ExperimentConfig};

const CONFIG: &str = r#"
seed = 12
runs = 3
variants = ["BASELINE", "S", "M-S"]
precision = ["pair"]

[training]
max_epochs = 6

[[datasets]]
name = "parallel"
[datasets.generate]
depth = 3
trace_count = 300
weights = { sequence = 1.0, xor = 1.0, and = 3.0, loop = 1.0 }

[[datasets]]
name = "loan"
pnml = "tests/fixtures/loan.pnml"
log = "tests/fixtures/loan_applications.xes"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::from_toml(CONFIG)?;
    let result = run_experiment(&config, Path::new(env!("CARGO_MANIFEST_DIR")))?;
    for report in result.reports() {
        println!(
            "{:<9} {:<10} seed {:>20}  weighted {:.4}  unweighted {:.4}",
            report.meta.dataset,
            report.meta.variant,
            report.meta.seed,
            report.mauroc_weighted,
            report.mauroc_unweighted
        );
    }
    println!();
    write_ci_csv(&result.ci, std::io::stdout())?;
    Ok(())
}
