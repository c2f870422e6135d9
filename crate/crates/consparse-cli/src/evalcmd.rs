//! The `eval` command: turn a checkpoint into plot-ready response curves.

use consparse::hyper::{
    model_mode_stress, model_second_pk, model_torsion_torque, HyperLaw, Mat3, Mode,
};
use consparse::plast::{model_surface_radius, uniaxial_curve, ElasticConstants, NetHardening};
use consparse::train::{Checkpoint, ProblemInfo};
use consparse::{Error, Result};

use crate::{artifacts, EvalArgs};

struct Range {
    start: f64,
    stop: f64,
    count: usize,
}

impl Range {
    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Io(format!("range '{s}' must be start:stop:count")));
        }
        let start = parts[0]
            .parse()
            .map_err(|_| Error::Io(format!("bad range start '{s}'")))?;
        let stop = parts[1]
            .parse()
            .map_err(|_| Error::Io(format!("bad range stop '{s}'")))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| Error::Io(format!("bad range count '{s}'")))?;
        if count < 2 || stop <= start {
            return Err(Error::Io(format!("empty range '{s}'")));
        }
        Ok(Self { start, stop, count })
    }

    fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(move |i| self.start + h * i as f64)
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.checkpoint).map_err(|e| Error::Io(e.to_string()))?;
    let ck = Checkpoint::from_json(&text)?;
    let csv = match &ck.problem {
        ProblemInfo::CompressibleStress { law } => compressible_curve(args, &ck, law.as_deref())?,
        ProblemInfo::IncompressibleModes => mode_curves(args, &ck)?,
        ProblemInfo::YieldSurface { .. } => yield_curve(args, &ck)?,
        ProblemInfo::IsotropicHardening { e, nu, sigma_y, .. } => {
            hardening_curve(args, &ck, ElasticConstants::new(*e, *nu, *sigma_y)?)?
        }
    };
    let path = artifacts::write_text(&args.out, "curves.csv", &csv)?;
    println!("curves written to {}", path.display());
    Ok(())
}

fn compressible_curve(args: &EvalArgs, ck: &Checkpoint, law: Option<&str>) -> Result<String> {
    let range = match &args.range {
        Some(r) => Range::parse(r)?,
        None => Range {
            start: 0.6,
            stop: 1.4,
            count: 81,
        },
    };
    let law = law.and_then(HyperLaw::parse);
    let mut csv = String::from("f11,s11_pred,s11_truth,in_train_domain\n");
    for f11 in range.points() {
        let f = Mat3::diag(f11, 1.0, 1.0);
        let pred = model_second_pk(&ck.model, &f)?.0[0][0];
        let truth = match law {
            Some(l) => l.second_pk(&f).map(|s| s.0[0][0]).ok(),
            None => None,
        };
        let in_domain = (0.8..=1.2).contains(&f11) as u8;
        match truth {
            Some(t) => csv.push_str(&format!("{f11},{pred},{t},{in_domain}\n")),
            None => csv.push_str(&format!("{f11},{pred},,{in_domain}\n")),
        }
    }
    Ok(csv)
}

fn mode_curves(args: &EvalArgs, ck: &Checkpoint) -> Result<String> {
    let modes: Vec<Mode> = match &args.modes {
        Some(s) => s
            .split(',')
            .map(|t| Mode::parse(t.trim()).ok_or_else(|| Error::Io(format!("unknown mode '{t}'"))))
            .collect::<Result<_>>()?,
        None => vec![Mode::Ut, Mode::Et, Mode::Ps],
    };
    let mut csv = String::from("mode,x,p1_pred,p2_pred\n");
    for mode in modes {
        let range = match &args.range {
            Some(r) => Range::parse(r)?,
            None => match mode {
                Mode::Ss => Range {
                    start: 0.0,
                    stop: 1.0,
                    count: 51,
                },
                Mode::St => Range {
                    start: 0.0,
                    stop: 1.0,
                    count: 51,
                },
                _ => Range {
                    start: 1.0,
                    stop: 7.5,
                    count: 66,
                },
            },
        };
        for x in range.points() {
            match mode {
                Mode::St => {
                    let tau = model_torsion_torque(&ck.model, x, args.torsion_quad.max(2))?;
                    csv.push_str(&format!("ST,{x},{tau},\n"));
                }
                m => {
                    let (p1, p2) = model_mode_stress(&ck.model, m, x)?;
                    match p2 {
                        Some(p2) => csv.push_str(&format!("{},{x},{p1},{p2}\n", m.label())),
                        None => csv.push_str(&format!("{},{x},{p1},\n", m.label())),
                    }
                }
            }
        }
    }
    Ok(csv)
}

fn yield_curve(args: &EvalArgs, ck: &Checkpoint) -> Result<String> {
    let rays = args.rays.max(3);
    let mut csv = String::from("angle,pi1,pi2\n");
    for k in 0..rays {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let (dy, dx) = theta.sin_cos();
        // Rays where the fitted surface never crosses zero (degenerate
        // fits) leave their fields empty rather than failing the export.
        match model_surface_radius(&ck.model, [dx, dy], 1.0) {
            Ok(r) => csv.push_str(&format!("{theta},{},{}\n", r * dx, r * dy)),
            Err(_) => csv.push_str(&format!("{theta},,\n")),
        }
    }
    Ok(csv)
}

fn hardening_curve(args: &EvalArgs, ck: &Checkpoint, ec: ElasticConstants) -> Result<String> {
    let range = match &args.range {
        Some(r) => Range::parse(r)?,
        None => Range {
            start: 0.0,
            stop: 0.08,
            count: 81,
        },
    };
    let grid: Vec<f64> = range.points().collect();
    let h = NetHardening(&ck.model);
    let sigma = uniaxial_curve(&h, &ec, &grid)?;
    let mut csv = String::from("strain,stress_pred,big_r\n");
    for (eps, s) in grid.iter().zip(&sigma) {
        let r = eps - s / ec.e;
        let big_r = ck.model.eval_test(&[r.max(0.0)])?[0];
        csv.push_str(&format!("{eps},{s},{big_r}\n"));
    }
    Ok(csv)
}
