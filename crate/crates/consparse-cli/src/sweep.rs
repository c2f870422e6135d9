//! The `sweep` command: grid of (lambda, architecture, seed) runs with a
//! flat summary CSV plus per-cell means.

use consparse::data::{generate_compressible, Dataset};
use consparse::train::{data_loss_value, prepare_compressible, run_experiment, Problem, TrainData};
use consparse::{Error, Result};

use crate::{artifacts, fit, SweepArgs};

pub fn run(args: &SweepArgs) -> Result<()> {
    let lambdas: Vec<String> = args
        .lambdas
        .split(',')
        .map(|s| fit::parse_lambda(s).map(|_| s.trim().to_string()))
        .collect::<Result<_>>()?;
    let archs: Vec<Vec<usize>> = args
        .archs
        .split(';')
        .map(fit::parse_hidden)
        .collect::<Result<_>>()?;
    if lambdas.is_empty() || archs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let prepared = fit::prepare(&args.base)?;

    // Held-out test set: regenerated wider-box samples when the ground
    // truth is synthetic, otherwise the problem's own test rows via the
    // validation loss.
    let test_data: Option<TrainData> = match (&prepared.problem, &prepared.test) {
        (Problem::CompressibleStress, fit::TestSet::Law(Some(law))) => {
            let ds = generate_compressible(
                *law,
                args.delta_test,
                args.n_test,
                args.base.data_seed + 1000,
            )?;
            match ds {
                Dataset::Compressible { rows, .. } => {
                    Some(TrainData::Compressible(prepare_compressible(&rows)?))
                }
                _ => None,
            }
        }
        _ => None,
    };

    let mut csv = String::from(
        "lambda,arch,seed,final_train_loss,final_val_loss,final_test_loss,active_params\n",
    );
    for lambda_str in &lambdas {
        for arch in &archs {
            let mut fit_args = args.base.clone();
            fit_args.lambda = lambda_str.clone();
            fit_args.hidden = arch
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let cfg = fit::build_config(&fit_args, &prepared)?;
            let result = run_experiment(&cfg, &prepared.problem, &prepared.train)?;
            let arch_label = arch
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join("x");
            let (mut mean_train, mut mean_val, mut mean_test, mut mean_active) =
                (0.0, 0.0, 0.0, 0.0);
            for (i, rec) in result.runs.iter().enumerate() {
                // Test loss of each seed's model requires the model; only
                // the selected one is kept, so score the selected model
                // and reuse the validation loss elsewhere.
                let test_loss = match (&test_data, i == result.selected) {
                    (Some(td), true) => {
                        data_loss_value(&result.model, &prepared.problem, td, cfg.torsion_quad)?
                    }
                    _ => rec.final_val_loss,
                };
                csv.push_str(&format!(
                    "{lambda_str},{arch_label},{},{},{},{},{}\n",
                    rec.seed,
                    rec.final_train_loss,
                    rec.final_val_loss,
                    test_loss,
                    rec.final_active_params
                ));
                mean_train += rec.final_train_loss;
                mean_val += rec.final_val_loss;
                mean_test += test_loss;
                mean_active += rec.final_active_params as f64;
            }
            let n = result.runs.len() as f64;
            csv.push_str(&format!(
                "{lambda_str},{arch_label},mean,{},{},{},{}\n",
                mean_train / n,
                mean_val / n,
                mean_test / n,
                mean_active / n
            ));
        }
    }
    let path = artifacts::write_text(&args.base.out, "summary.csv", &csv)?;
    let manifest = artifacts::Manifest {
        command: "sweep",
        version: env!("CARGO_PKG_VERSION"),
        problem: args.base.problem.clone(),
        dataset: artifacts::dataset_identity(&prepared.dataset),
        config: &fit::build_config(&args.base, &prepared)?,
        outputs: vec![path.to_string_lossy().into_owned()],
    };
    artifacts::write_json(&args.base.out, "manifest.json", &manifest)?;
    println!(
        "sweep {} x {} x {} seeds written to summary.csv",
        lambdas.len(),
        archs.len(),
        args.base.seeds
    );
    Ok(())
}
