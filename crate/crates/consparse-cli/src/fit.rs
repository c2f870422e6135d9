//! The `fit` command: resolve a dataset, train with multi-seed median
//! selection, score the held-out data, and write all artifacts.

use std::path::Path;

use consparse::data::{self, CsvKind, Dataset, ModeRow};
use consparse::hyper::{
    model_mode_stress, model_second_pk, model_torsion_torque, HyperLaw, Mat3, Mode,
};
use consparse::plast::{
    model_surface_radius, plastic_pairs, uniaxial_curve, ElasticConstants, NetHardening,
};
use consparse::symbolic::{extract_expression, simplify, Wrapper};
use consparse::train::{
    self, prepare_compressible, r_squared, relative_l2, run_experiment, Checkpoint,
    ExperimentResult, Problem, ProblemInfo, TrainConfig, TrainData,
};
use consparse::{Error, Result};
use serde::Serialize;

use crate::artifacts;
use crate::FitArgs;

/// Everything the trainer and the scorer need for one run.
pub struct Prepared {
    pub problem: Problem,
    pub problem_info: ProblemInfo,
    pub dataset: Dataset,
    pub train: TrainData,
    pub test: TestSet,
    pub wrapper: Wrapper,
    pub symbols: Vec<&'static str>,
    pub stem: String,
}

pub enum TestSet {
    Modes(Vec<ModeRow>),
    Yield(Vec<[f64; 2]>),
    Hardening {
        rows: Vec<[f64; 2]>,
        ec: ElasticConstants,
    },
    Law(Option<HyperLaw>),
}

pub fn parse_lambda(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
        .ok_or_else(|| Error::Io(format!("bad lambda '{s}'")))
}

pub fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| Error::Io(format!("bad hidden width '{t}'")))
        })
        .collect()
}

fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    s.split(',')
        .map(|t| Mode::parse(t.trim()).ok_or_else(|| Error::Io(format!("unknown mode '{t}'"))))
        .collect()
}

/// Paper-reported elastic constants for the embedded hardening tables.
pub fn known_elastic_constants(name: &str) -> Option<ElasticConstants> {
    match name.to_ascii_lowercase().as_str() {
        "u71mn" => Some(ElasticConstants {
            e: 220e3,
            nu: 0.3,
            sigma_y: 484.5,
        }),
        "ss316l" => Some(ElasticConstants {
            e: 190e3,
            nu: 0.35,
            sigma_y: 200.0,
        }),
        "40cr3mov" => Some(ElasticConstants {
            e: 207e3,
            nu: 0.3,
            sigma_y: 1000.0,
        }),
        _ => None,
    }
}

pub fn prepare(args: &FitArgs) -> Result<Prepared> {
    match args.problem.as_str() {
        "hyper-compressible" => {
            let (dataset, law) = if let Some(csv) = &args.csv {
                (data::ingest_csv(csv, CsvKind::Compressible)?, None)
            } else {
                let law_name = args.law.as_deref().unwrap_or("gent-gent");
                let law = HyperLaw::parse(law_name)
                    .ok_or_else(|| Error::UnknownDataset(law_name.into()))?;
                (
                    data::generate_compressible(law, args.delta, args.n_train, args.data_seed)?,
                    Some(law),
                )
            };
            let rows = match &dataset {
                Dataset::Compressible { rows, .. } => rows.clone(),
                _ => return Err(Error::UnknownDataset("expected compressible data".into())),
            };
            let stem = format!("hyper-compressible-{}", dataset.name());
            Ok(Prepared {
                problem: Problem::CompressibleStress,
                problem_info: ProblemInfo::CompressibleStress {
                    law: law.map(|l| l.name().to_string()),
                },
                train: TrainData::Compressible(prepare_compressible(&rows)?),
                test: TestSet::Law(law),
                dataset,
                wrapper: Wrapper::Compressible,
                symbols: vec!["I1", "I2", "J"],
                stem,
            })
        }
        "hyper-incompressible" => {
            let dataset = resolve_mode_dataset(args)?;
            let rows = match &dataset {
                Dataset::ModeCurves { rows, .. } => rows.clone(),
                _ => return Err(Error::UnknownDataset("expected mode-curve data".into())),
            };
            let train_modes = match &args.train_modes {
                Some(s) => parse_modes(s)?,
                None => vec![Mode::Ut, Mode::Et, Mode::Ps, Mode::Ss, Mode::St],
            };
            let test_modes = match &args.test_modes {
                Some(s) => parse_modes(s)?,
                None => Vec::new(),
            };
            let train_rows: Vec<ModeRow> = rows
                .iter()
                .filter(|r| train_modes.contains(&r.mode))
                .copied()
                .collect();
            let test_rows: Vec<ModeRow> = rows
                .iter()
                .filter(|r| test_modes.contains(&r.mode))
                .copied()
                .collect();
            let stem = format!("hyper-incompressible-{}", dataset.name());
            Ok(Prepared {
                problem: Problem::IncompressibleModes,
                problem_info: ProblemInfo::IncompressibleModes,
                train: TrainData::Modes(train_rows),
                test: TestSet::Modes(test_rows),
                dataset,
                wrapper: Wrapper::Incompressible,
                symbols: vec!["I1", "I2"],
                stem,
            })
        }
        "yield" => {
            let dataset = if let Some(csv) = &args.csv {
                data::ingest_csv(csv, CsvKind::YieldPoints)?
            } else {
                data::load_embedded(args.data.as_deref().ok_or(Error::EmptyDataset)?)?
            };
            let points = match &dataset {
                Dataset::YieldPoints { points, .. } => points.clone(),
                _ => return Err(Error::UnknownDataset("expected yield-point data".into())),
            };
            let stem = format!("yield-{}", dataset.name());
            Ok(Prepared {
                problem: Problem::YieldSurface {
                    anchor_weight: args.anchor_weight,
                },
                problem_info: ProblemInfo::YieldSurface {
                    anchor_weight: args.anchor_weight,
                },
                train: TrainData::Yield(points.clone()),
                test: TestSet::Yield(points),
                dataset,
                wrapper: Wrapper::Raw,
                symbols: vec!["pi1", "pi2"],
                stem,
            })
        }
        "hardening" => {
            let dataset = if let Some(csv) = &args.csv {
                data::ingest_csv(csv, CsvKind::Hardening)?
            } else {
                data::load_embedded(args.data.as_deref().ok_or(Error::EmptyDataset)?)?
            };
            let rows = match &dataset {
                Dataset::Hardening { rows, .. } => rows.clone(),
                _ => return Err(Error::UnknownDataset("expected hardening data".into())),
            };
            let defaults = known_elastic_constants(dataset.name());
            let e = args.e_modulus.or(defaults.map(|d| d.e)).ok_or_else(|| {
                Error::Io("hardening needs --e-modulus (no default for this dataset)".into())
            })?;
            let nu = args.nu.or(defaults.map(|d| d.nu)).unwrap_or(0.3);
            let sigma_y = args
                .sigma_y
                .or(defaults.map(|d| d.sigma_y))
                .ok_or_else(|| {
                    Error::Io("hardening needs --sigma-y (no default for this dataset)".into())
                })?;
            let ec = ElasticConstants::new(e, nu, sigma_y)?;
            let pairs = plastic_pairs(&rows, &ec);
            if pairs.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let stem = format!("hardening-{}", dataset.name());
            Ok(Prepared {
                problem: Problem::IsotropicHardening {
                    r0_weight: args.r0_weight,
                },
                problem_info: ProblemInfo::IsotropicHardening {
                    e,
                    nu,
                    sigma_y,
                    r0_weight: args.r0_weight,
                },
                train: TrainData::HardeningPairs(pairs),
                test: TestSet::Hardening { rows, ec },
                dataset,
                wrapper: Wrapper::Raw,
                symbols: vec!["r"],
                stem,
            })
        }
        other => Err(Error::UnknownDataset(format!("unknown problem '{other}'"))),
    }
}

fn resolve_mode_dataset(args: &FitArgs) -> Result<Dataset> {
    if let Some(csv) = &args.csv {
        data::ingest_csv(csv, CsvKind::ModeCurve)
    } else {
        data::load_embedded(args.data.as_deref().ok_or(Error::EmptyDataset)?)
    }
}

pub fn build_config(args: &FitArgs, prepared: &Prepared) -> Result<TrainConfig> {
    let split_fraction = if args.no_split {
        None
    } else {
        match prepared.problem {
            Problem::CompressibleStress | Problem::IncompressibleModes => Some(args.split),
            // Yield and hardening fits use every point by default; the
            // surfaces are scored against all data angles.
            _ => None,
        }
    };
    let mut cfg = TrainConfig {
        lambda: parse_lambda(&args.lambda)?,
        epochs: args.epochs.max(1),
        lr: args.lr,
        seeds: (0..args.seeds.max(1) as u64).collect(),
        mc_samples: args.mc_samples.max(1),
        split_fraction,
        split_seed: args.data_seed,
        hidden: parse_hidden(&args.hidden)?,
        log_every: args.log_every.max(1),
        torsion_quad: args.torsion_quad.max(2),
        gate_lr_scale: args.gate_lr_scale,
        ..TrainConfig::default()
    };
    if !args.no_input_scale {
        cfg.input_scale = train::suggest_input_scale(&prepared.problem, &prepared.train);
    }
    Ok(cfg)
}

#[derive(Serialize)]
pub struct Metrics {
    pub problem: String,
    pub dataset: String,
    pub lambda: f64,
    pub epochs: usize,
    pub selected_seed: u64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub active_params: usize,
    pub test: serde_json::Value,
    pub per_seed: Vec<artifacts::SeedSummary>,
}

/// Problem-specific held-out scores of the selected model.
pub fn score(
    prepared: &Prepared,
    result: &ExperimentResult,
    torsion_quad: usize,
) -> Result<serde_json::Value> {
    let model = &result.model;
    Ok(match &prepared.test {
        TestSet::Modes(rows) => {
            if rows.is_empty() {
                serde_json::json!({})
            } else {
                let mut by_mode: std::collections::BTreeMap<&str, (Vec<f64>, Vec<f64>)> =
                    Default::default();
                for r in rows {
                    let pred = match r.mode {
                        Mode::St => model_torsion_torque(model, r.x, torsion_quad)?,
                        m => model_mode_stress(model, m, r.x)?.0,
                    };
                    let slot = by_mode.entry(r.mode.label()).or_default();
                    slot.0.push(pred);
                    slot.1.push(r.p);
                }
                let mut r2 = serde_json::Map::new();
                for (mode, (pred, meas)) in &by_mode {
                    r2.insert(mode.to_string(), serde_json::json!(r_squared(pred, meas)));
                }
                serde_json::json!({ "r2": r2 })
            }
        }
        TestSet::Yield(points) => {
            let mut worst: f64 = 0.0;
            let mut sum = 0.0;
            let mut unclosed = 0usize;
            for p in points {
                let r_data = (p[0] * p[0] + p[1] * p[1]).sqrt();
                match model_surface_radius(model, *p, r_data) {
                    Ok(r_hat) => {
                        let err = ((r_hat - r_data) / r_data).abs();
                        worst = worst.max(err);
                        sum += err;
                    }
                    // A surface that never crosses zero along this ray is a
                    // degenerate fit; report it instead of failing the run.
                    Err(_) => unclosed += 1,
                }
            }
            serde_json::json!({
                "worst_radial_error": worst,
                "mean_radial_error": sum / (points.len() - unclosed).max(1) as f64,
                "unclosed_rays": unclosed,
            })
        }
        TestSet::Hardening { rows, ec } => {
            let h = NetHardening(model);
            let grid: Vec<f64> = rows.iter().map(|r| r[0] / 100.0).collect();
            let sigma = uniaxial_curve(&h, ec, &grid)?;
            let meas: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            let r0 = model.eval_test(&[0.0])?[0];
            serde_json::json!({
                "r2_stress": r_squared(&sigma, &meas),
                "r_at_zero": r0,
            })
        }
        TestSet::Law(Some(law)) => {
            // Uniaxial sweep against the analytic law on the inner box.
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for i in 0..=80 {
                let f11 = 0.8 + 0.005 * i as f64;
                let f = Mat3::diag(f11, 1.0, 1.0);
                pred.push(model_second_pk(model, &f)?.0[0][0]);
                truth.push(law.second_pk(&f)?.0[0][0]);
            }
            serde_json::json!({ "ut_rel_l2_f11_0.8_1.2": relative_l2(&pred, &truth) })
        }
        TestSet::Law(None) => serde_json::json!({}),
    })
}

pub fn run(args: &FitArgs) -> Result<()> {
    let prepared = prepare(args)?;
    let cfg = build_config(args, &prepared)?;
    let result = run_experiment(&cfg, &prepared.problem, &prepared.train)?;
    let test = score(&prepared, &result, args.torsion_quad.max(2))?;
    write_artifacts(&args.out, args, &prepared, &cfg, &result, test)
}

fn write_artifacts(
    out: &Path,
    args: &FitArgs,
    prepared: &Prepared,
    cfg: &TrainConfig,
    result: &ExperimentResult,
    test: serde_json::Value,
) -> Result<()> {
    let selected = &result.runs[result.selected];
    let metrics = Metrics {
        problem: args.problem.clone(),
        dataset: prepared.dataset.name().to_string(),
        lambda: cfg.lambda,
        epochs: cfg.epochs,
        selected_seed: selected.seed,
        final_train_loss: selected.final_train_loss,
        final_val_loss: selected.final_val_loss,
        active_params: result.model.active_params(),
        test,
        per_seed: artifacts::seed_summaries(&result.runs),
    };

    let checkpoint = Checkpoint::new(
        prepared.problem_info.clone(),
        prepared.dataset.name(),
        result.model.clone(),
    );
    let expr = simplify(&extract_expression(
        &result.model,
        prepared.wrapper,
        &prepared.symbols,
    )?);

    let mut outputs = Vec::new();
    outputs.push(artifacts::write_text(
        out,
        "checkpoint.json",
        &checkpoint.to_json(),
    )?);
    outputs.push(artifacts::write_json(out, "metrics.json", &metrics)?);
    outputs.push(artifacts::write_text(
        out,
        "runlog.csv",
        &artifacts::run_log_csv(selected),
    )?);
    outputs.extend(artifacts::write_expression(out, &prepared.stem, &expr)?);

    let manifest = artifacts::Manifest {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        problem: args.problem.clone(),
        dataset: artifacts::dataset_identity(&prepared.dataset),
        config: cfg,
        outputs: outputs
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
    };
    artifacts::write_json(out, "manifest.json", &manifest)?;
    println!(
        "fit {} on {}: selected seed {} (train loss {:.6e}), {} active parameters",
        args.problem,
        prepared.dataset.name(),
        metrics.selected_seed,
        metrics.final_train_loss,
        metrics.active_params
    );
    Ok(())
}
