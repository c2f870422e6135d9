//! Datasets: embedded experimental tables, synthetic stress data from the
//! ground-truth laws, yield-surface sampling, and CSV ingestion.
//!
//! Embedded tables are exact transcriptions; their row counts are part of
//! the contract. Synthetic compressible data cannot reproduce the original
//! sample set (the published sampler is external), so a low-discrepancy
//! box sampler regenerates it and the published invariant table serves as
//! a coverage envelope instead.

pub mod embedded;

use serde::{Deserialize, Serialize};

use crate::hyper::{HyperLaw, Mat3, Mode, SYM_INDICES};
use crate::plast::{trace_yield_surface, YieldLaw};
use crate::random::Stream;
use crate::{Error, Result};

/// One homogeneous-mode observation. `x` is the stretch (UT/ET/PS), the
/// shear amount (SS), or the twist (ST); `p` is the measured stress or
/// torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: Mode,
    pub x: f64,
    pub p: f64,
}

/// One synthetic stress sample: deformation gradient and the six unique
/// components of the symmetric second Piola-Kirchhoff stress, ordered
/// (11, 22, 33, 12, 13, 23).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressibleRow {
    pub f: [[f64; 3]; 3],
    pub s: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dataset {
    ModeCurves {
        name: String,
        units: String,
        rows: Vec<ModeRow>,
    },
    YieldPoints {
        name: String,
        units: String,
        points: Vec<[f64; 2]>,
    },
    Hardening {
        name: String,
        units: String,
        rows: Vec<[f64; 2]>,
    },
    Compressible {
        name: String,
        units: String,
        rows: Vec<CompressibleRow>,
    },
    InvariantTriples {
        name: String,
        rows: Vec<[f64; 3]>,
    },
}

impl Dataset {
    pub fn name(&self) -> &str {
        match self {
            Dataset::ModeCurves { name, .. }
            | Dataset::YieldPoints { name, .. }
            | Dataset::Hardening { name, .. }
            | Dataset::Compressible { name, .. }
            | Dataset::InvariantTriples { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::ModeCurves { rows, .. } => rows.len(),
            Dataset::YieldPoints { points, .. } => points.len(),
            Dataset::Hardening { rows, .. } => rows.len(),
            Dataset::Compressible { rows, .. } => rows.len(),
            Dataset::InvariantTriples { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names accepted by [`load_embedded`].
pub const REGISTRY: [&str; 13] = [
    "compressible-invariants-50",
    "treloar-20C",
    "treloar-50C",
    "cortex",
    "corona-radiata",
    "midbrain-1",
    "midbrain-2",
    "drucker",
    "cazacu",
    "tresca",
    "40Cr3MoV",
    "SS316L",
    "U71Mn",
];

fn mode_rows(parts: &[(Mode, &[[f64; 2]])]) -> Vec<ModeRow> {
    let mut rows = Vec::new();
    for (mode, table) in parts {
        for r in *table {
            rows.push(ModeRow {
                mode: *mode,
                x: r[0],
                p: r[1],
            });
        }
    }
    rows
}

/// Look up an embedded dataset by registry name (case-insensitive).
pub fn load_embedded(name: &str) -> Result<Dataset> {
    let key = name.to_ascii_lowercase();
    let mode_set = |name: &str, units: &str, parts: &[(Mode, &[[f64; 2]])]| Dataset::ModeCurves {
        name: name.into(),
        units: units.into(),
        rows: mode_rows(parts),
    };
    Ok(match key.as_str() {
        "compressible-invariants-50" => Dataset::InvariantTriples {
            name: "compressible-invariants-50".into(),
            rows: embedded::COMPRESSIBLE_INVARIANTS_50.to_vec(),
        },
        "treloar-20c" => mode_set(
            "treloar-20C",
            "MPa",
            &[
                (Mode::Ut, &embedded::TRELOAR_20C_UT),
                (Mode::Et, &embedded::TRELOAR_20C_ET),
                (Mode::Ps, &embedded::TRELOAR_20C_PS),
            ],
        ),
        "treloar-50c" => mode_set(
            "treloar-50C",
            "MPa",
            &[
                (Mode::Ut, &embedded::TRELOAR_50C_UT),
                (Mode::Et, &embedded::TRELOAR_50C_ET),
                (Mode::Ps, &embedded::TRELOAR_50C_PS),
            ],
        ),
        // Uniaxial compression rows reuse the UT closed form at λ < 1.
        "cortex" => mode_set(
            "cortex",
            "MPa",
            &[
                (Mode::Ut, &embedded::CORTEX_UT),
                (Mode::Ut, &embedded::CORTEX_UC),
                (Mode::Ss, &embedded::CORTEX_SS),
            ],
        ),
        "corona-radiata" => mode_set(
            "corona-radiata",
            "MPa",
            &[
                (Mode::Ut, &embedded::CORONA_RADIATA_UT),
                (Mode::Ut, &embedded::CORONA_RADIATA_UC),
                (Mode::Ss, &embedded::CORONA_RADIATA_SS),
            ],
        ),
        "midbrain-1" => mode_set(
            "midbrain-1",
            "normalized",
            &[
                (Mode::Ut, &embedded::MIDBRAIN_1_UT),
                (Mode::St, &embedded::MIDBRAIN_1_ST),
            ],
        ),
        "midbrain-2" => mode_set(
            "midbrain-2",
            "normalized",
            &[
                (Mode::Ut, &embedded::MIDBRAIN_2_UT),
                (Mode::St, &embedded::MIDBRAIN_2_ST),
            ],
        ),
        "drucker" => Dataset::YieldPoints {
            name: "drucker".into(),
            units: "MPa".into(),
            points: embedded::DRUCKER_POINTS.to_vec(),
        },
        "cazacu" => Dataset::YieldPoints {
            name: "cazacu".into(),
            units: "MPa".into(),
            points: embedded::CAZACU_POINTS.to_vec(),
        },
        "tresca" => Dataset::YieldPoints {
            name: "tresca".into(),
            units: "MPa".into(),
            points: embedded::TRESCA_POINTS.to_vec(),
        },
        "40cr3mov" => Dataset::Hardening {
            name: "40Cr3MoV".into(),
            units: "percent,MPa".into(),
            rows: embedded::HARDENING_40CR3MOV.to_vec(),
        },
        "ss316l" => Dataset::Hardening {
            name: "SS316L".into(),
            units: "percent,MPa".into(),
            rows: embedded::HARDENING_SS316L.to_vec(),
        },
        "u71mn" => Dataset::Hardening {
            name: "U71Mn".into(),
            units: "percent,MPa".into(),
            rows: embedded::HARDENING_U71MN.to_vec(),
        },
        _ => return Err(Error::UnknownDataset(name.into())),
    })
}

/// Additive-recurrence low-discrepancy sequence over the unit hypercube
/// (generalized golden-ratio increments), offset by a seeded start point.
pub struct QuasiRandom {
    alphas: Vec<f64>,
    state: Vec<f64>,
}

impl QuasiRandom {
    pub fn new(dim: usize, seed: u64) -> Self {
        // Unique positive root of x^(d+1) = x + 1.
        let mut phi = 1.5f64;
        for _ in 0..80 {
            let f = phi.powi(dim as i32 + 1) - phi - 1.0;
            let df = (dim as f64 + 1.0) * phi.powi(dim as i32) - 1.0;
            phi -= f / df;
        }
        let mut stream = Stream::new(seed);
        let alphas: Vec<f64> = (1..=dim).map(|i| phi.powi(-(i as i32))).collect();
        let state: Vec<f64> = (0..dim).map(|_| stream.uniform()).collect();
        Self { alphas, state }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        for (s, a) in self.state.iter_mut().zip(&self.alphas) {
            *s = (*s + *a).fract();
        }
        self.state.clone()
    }
}

/// Synthetic compressible dataset: deformation gradients quasi-randomly
/// filling the box F_ii ∈ [1−δ, 1+δ], F_ij ∈ [−δ, δ], rejected until
/// det F > 0, with stresses from the normalized ground-truth law.
pub fn generate_compressible(law: HyperLaw, delta: f64, n: usize, seed: u64) -> Result<Dataset> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::SamplingError(format!(
            "delta {delta} outside [0, 0.5)"
        )));
    }
    let mut seq = QuasiRandom::new(9, seed);
    let mut rows = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = 100 * n + 1000;
    while rows.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(Error::SamplingError(format!(
                "rejection rate too high: {} accepted of {attempts}",
                rows.len()
            )));
        }
        let u = seq.next_point();
        let mut f = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let v = u[3 * i + j];
                f[i][j] = if i == j {
                    1.0 - delta + 2.0 * delta * v
                } else {
                    -delta + 2.0 * delta * v
                };
            }
        }
        let mat = Mat3(f);
        if mat.det() <= 0.0 {
            continue;
        }
        let stress = match law.second_pk(&mat) {
            Ok(s) => s,
            Err(_) => continue, // outside the law's domain
        };
        let mut s6 = [0.0; 6];
        for (k, (a, b)) in SYM_INDICES.iter().enumerate() {
            s6[k] = stress.0[*a][*b];
        }
        rows.push(CompressibleRow { f, s: s6 });
    }
    Ok(Dataset::Compressible {
        name: format!("{}-delta{}-n{}", law.name(), delta, n),
        units: "dimensionless".into(),
        rows,
    })
}

/// Points on a ground-truth yield surface, one per uniform ray angle
/// (first and last ray coincide, matching the embedded tables).
pub fn yield_points_from_law(law: YieldLaw, n: usize) -> Result<Dataset> {
    let points = trace_yield_surface(|a, b| law.value_pi(a, b), n)?;
    Ok(Dataset::YieldPoints {
        name: format!("{}-traced-{n}", law.name()),
        units: "MPa".into(),
        points,
    })
}

/// Componentwise [min, max] of (I1, I2, J) over invariant triples.
pub fn invariant_envelope(rows: &[[f64; 3]]) -> [[f64; 2]; 3] {
    let mut env = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
    for r in rows {
        for k in 0..3 {
            env[k][0] = env[k][0].min(r[k]);
            env[k][1] = env[k][1].max(r[k]);
        }
    }
    env
}

/// Invariants of every sample in a compressible dataset.
pub fn compressible_invariants(rows: &[CompressibleRow]) -> Result<Vec<[f64; 3]>> {
    rows.iter()
        .map(|r| {
            let (i1, i2, j) = crate::hyper::invariants(&Mat3(r.f))?;
            Ok([i1, i2, j])
        })
        .collect()
}

// ---------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------

/// Schema selector for [`ingest_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// Header `mode,lambda_or_gamma,P`, or `phi,tau` for torsion-only data.
    ModeCurve,
    /// Header `pi1,pi2`.
    YieldPoints,
    /// Header `strain_percent,stress_mpa`, strain strictly nondecreasing.
    Hardening,
    /// Header `F11,...,F33,S11,S12,S13,S22,S23,S33`.
    Compressible,
}

pub fn ingest_csv(path: &std::path::Path, kind: CsvKind) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    parse_csv(&text, &name, kind)
}

pub fn parse_csv(text: &str, name: &str, kind: CsvKind) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::EmptyDataset)?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let require = |cols: &[&str]| -> Result<()> {
        for c in cols {
            if !header.iter().any(|h| h.eq_ignore_ascii_case(c)) {
                return Err(Error::MissingColumn((*c).into()));
            }
        }
        Ok(())
    };
    let parse_field = |field: &str, row: usize, col: usize| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::NonNumeric { row, col })
    };

    match kind {
        CsvKind::ModeCurve => {
            let torsion = header.len() == 2
                && header[0].eq_ignore_ascii_case("phi")
                && header[1].eq_ignore_ascii_case("tau");
            if !torsion {
                require(&["mode", "lambda_or_gamma", "P"])?;
            }
            let mut rows = Vec::new();
            for (i, line) in lines.enumerate() {
                let fields: Vec<&str> = line.split(',').collect();
                if torsion {
                    rows.push(ModeRow {
                        mode: Mode::St,
                        x: parse_field(fields.first().unwrap_or(&""), i + 1, 0)?,
                        p: parse_field(fields.get(1).unwrap_or(&""), i + 1, 1)?,
                    });
                } else {
                    let mode = Mode::parse(fields.first().unwrap_or(&"").trim())
                        .ok_or(Error::NonNumeric { row: i + 1, col: 0 })?;
                    rows.push(ModeRow {
                        mode,
                        x: parse_field(fields.get(1).unwrap_or(&""), i + 1, 1)?,
                        p: parse_field(fields.get(2).unwrap_or(&""), i + 1, 2)?,
                    });
                }
            }
            Ok(Dataset::ModeCurves {
                name: name.into(),
                units: "user".into(),
                rows,
            })
        }
        CsvKind::YieldPoints => {
            require(&["pi1", "pi2"])?;
            let mut points = Vec::new();
            for (i, line) in lines.enumerate() {
                let fields: Vec<&str> = line.split(',').collect();
                points.push([
                    parse_field(fields.first().unwrap_or(&""), i + 1, 0)?,
                    parse_field(fields.get(1).unwrap_or(&""), i + 1, 1)?,
                ]);
            }
            Ok(Dataset::YieldPoints {
                name: name.into(),
                units: "user".into(),
                points,
            })
        }
        CsvKind::Hardening => {
            require(&["strain_percent", "stress_mpa"])?;
            let mut rows: Vec<[f64; 2]> = Vec::new();
            for (i, line) in lines.enumerate() {
                let fields: Vec<&str> = line.split(',').collect();
                let eps = parse_field(fields.first().unwrap_or(&""), i + 1, 0)?;
                let sig = parse_field(fields.get(1).unwrap_or(&""), i + 1, 1)?;
                if let Some(prev) = rows.last() {
                    if eps < prev[0] {
                        return Err(Error::NonMonotoneStrain { row: i + 1 });
                    }
                }
                rows.push([eps, sig]);
            }
            Ok(Dataset::Hardening {
                name: name.into(),
                units: "percent,MPa".into(),
                rows,
            })
        }
        CsvKind::Compressible => {
            let f_cols = [
                "F11", "F12", "F13", "F21", "F22", "F23", "F31", "F32", "F33",
            ];
            let s_cols = ["S11", "S12", "S13", "S22", "S23", "S33"];
            require(&f_cols)?;
            require(&s_cols)?;
            let mut rows = Vec::new();
            for (i, line) in lines.enumerate() {
                let fields: Vec<&str> = line.split(',').collect();
                let mut vals = [0.0f64; 15];
                for (c, slot) in vals.iter_mut().enumerate() {
                    *slot = parse_field(fields.get(c).unwrap_or(&""), i + 1, c)?;
                }
                let f = [
                    [vals[0], vals[1], vals[2]],
                    [vals[3], vals[4], vals[5]],
                    [vals[6], vals[7], vals[8]],
                ];
                // CSV stress order (11,12,13,22,23,33) mapped to the
                // internal (11,22,33,12,13,23).
                let s = [vals[9], vals[12], vals[14], vals[10], vals[11], vals[13]];
                rows.push(CompressibleRow { f, s });
            }
            Ok(Dataset::Compressible {
                name: name.into(),
                units: "user".into(),
                rows,
            })
        }
    }
}
