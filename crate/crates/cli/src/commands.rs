//! The four subcommands. Each returns the JSON it prints or an exit failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use morrey_ns::grid::{make_grid, VectorField};
use morrey_ns::io::{read_field, write_field, write_trajectory};
use morrey_ns::lab::{self, BilinearSetup, CheckOutcome, LabConfig, LinearSetup};
use morrey_ns::lpdecomp::{build_partition, dyadic_block, DyadicPartition};
use morrey_ns::norms::{
    mixed_morrey_values, scaling_exponent, space_norm_scalar, NormReport, SpaceParams, TimeBlockTable,
};
use morrey_ns::operators::MultiplierSymbol;
use morrey_ns::solver::{admissibility, anisotropic_initial_data, picard_solve, taylor_green, SolverConfig};
use morrey_ns::{Error, Field, Grid, Representation};
use serde_json::{json, Value};

use crate::config::{DataSpec, ExperimentConfig, GridSpec, NormKind, SolveSpec, VerifySpec};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Other = 1,
    Malformed = 2,
    Invalid = 3,
    Diverged = 4,
    CheckFailed = 5,
}

/// A failure carrying its exit code and a diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Format(_) | Error::Json(_) => Exit::Malformed,
            Error::Io(_) => Exit::Other,
            _ => Exit::Invalid,
        };
        Failure::new(exit, e.to_string())
    }
}

pub type Outcome = std::result::Result<Exit, Failure>;

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    s.as_ref()
        .ok_or_else(|| Failure::new(Exit::Invalid, format!("config has no \"{name}\" section")))
}

/// Reads a field file; a missing or unreadable file is malformed input.
fn load_field(path: &Path) -> Result<Field, Failure> {
    read_field(path).map_err(|e| Failure::new(Exit::Malformed, format!("{}: {e}", path.display())))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::new(Exit::Other, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes through a temporary file so readers never see partial output.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("partial");
    let fail = |e: std::io::Error| Failure::new(Exit::Other, format!("{}: {e}", path.display()));
    fs::write(&tmp, contents).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

fn grid_of(spec: &Option<GridSpec>) -> Result<Grid, Failure> {
    let g = section(spec, "grid")?;
    Ok(make_grid(g.dim, g.n, g.length)?)
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

pub fn norm(cfg: &ExperimentConfig, print: &mut dyn Write) -> Outcome {
    let spec = section(&cfg.norm, "norm")?;
    spec.space.validate()?;
    if spec.fields.is_empty() {
        return Err(Failure::new(Exit::Invalid, "norm needs at least one field"));
    }
    let mut values = Vec::new();
    for path in &spec.fields {
        let f = load_field(path)?;
        spec.space.check_dimension(f.grid().dim())?;
        let report = match spec.kind {
            NormKind::Space => space_norm_scalar(&f, &spec.space, &build_partition(f.grid())?)?,
            NormKind::Morrey => {
                let moduli: Vec<f64> = f.to_physical().data().iter().map(|c| c.norm()).collect();
                let m = mixed_morrey_values(f.grid(), &moduli, &spec.space.q, &spec.space.lambda)?;
                NormReport {
                    value: m.value,
                    per_scale: Default::default(),
                    ball_argmax: Some(m.ball),
                }
            }
        };
        values.push(report.value);
        emit(print, &serde_json::to_value(&report).map_err(Error::from)?)?;
    }
    if let Some(radii) = &spec.radii {
        if radii.len() != spec.fields.len() {
            return Err(Failure::new(Exit::Invalid, "radii must match fields one to one"));
        }
        if radii.len() >= 2 {
            if radii.iter().chain(&values).any(|v| !(*v > 0.0)) {
                return Err(Failure::new(Exit::Invalid, "the exponent fit needs positive radii and norms"));
            }
            let pts: Vec<(f64, f64)> = radii.iter().zip(&values).map(|(r, v)| (r.ln(), v.ln())).collect();
            let fit = json!({
                "exponent_fit": slope(&pts),
                "scaling_exponent": scaling_exponent(&spec.space.q, &spec.space.lambda),
            });
            emit(print, &fit)?;
        }
    }
    Ok(Exit::Ok)
}

fn emit(print: &mut dyn Write, v: &Value) -> Result<(), Failure> {
    writeln!(print, "{v}").map_err(|e| Failure::new(Exit::Other, e.to_string()))
}

pub fn decompose(cfg: &ExperimentConfig, print: &mut dyn Write) -> Outcome {
    let spec = section(&cfg.decompose, "decompose")?;
    let f = load_field(&spec.field)?;
    let p = build_partition(f.grid())?;
    let dir = out_dir(cfg)?;
    let mut blocks = Vec::new();
    for l in p.scales() {
        let b = dyadic_block(&f, l, &p)?;
        let path = dir.join(format!("block_{l}.anf"));
        write_field(&path, &b)?;
        blocks.push(json!({"scale": l, "file": path, "sup": b.to_physical().max_abs()}));
    }
    let low = f.apply_table(p.psi_table());
    let low_path = dir.join("low.anf");
    write_field(&low_path, &low)?;
    let summary = json!({
        "l_min": p.l_min(),
        "l_max": p.l_max(),
        "out_of_band": p.out_of_band_amplitude(&f),
        "low": {"file": low_path, "sup": low.to_physical().max_abs()},
        "blocks": blocks,
    });
    write_atomic(&dir.join("decomposition.json"), &format!("{summary:#}\n"))?;
    emit(print, &summary)?;
    Ok(Exit::Ok)
}

fn initial_data(grid: &Grid, spec: &SolveSpec) -> Result<VectorField, Failure> {
    Ok(match &spec.data {
        DataSpec::Zero => VectorField::zeros(*grid, Representation::Spectral),
        DataSpec::TaylorGreen { amplitude } => taylor_green(grid, *amplitude)?,
        DataSpec::Anisotropic { eps, variant } => {
            anisotropic_initial_data(grid, &spec.params.q, &spec.params.lambda, *eps, *variant)?
        }
        DataSpec::Files { components } => {
            let comps = components.iter().map(|p| load_field(p)).collect::<Result<Vec<_>, _>>()?;
            if comps.iter().any(|c| c.grid() != grid) {
                return Err(Failure::new(Exit::Invalid, "component files do not match the configured grid"));
            }
            VectorField::new(comps)?
        }
    })
}

/// Bilinear constant from the config or fitted by the lab.
fn bilinear_constant(spec: &SolveSpec, p: &DyadicPartition, seed: u64) -> Result<f64, Failure> {
    if let Some(k) = spec.k_estimate {
        return Ok(k);
    }
    let setup = BilinearSetup {
        nu: spec.nu,
        horizon: spec.horizon,
        steps: spec.steps,
    };
    let lab_cfg = LabConfig {
        samples: spec.k_samples.max(1),
        seed,
        ..Default::default()
    };
    Ok(lab::estimate_bilinear_constant(&spec.params, &setup, p, &lab_cfg)?.report.fitted_c)
}

pub fn solve(cfg: &ExperimentConfig, require_admissible: bool, print: &mut dyn Write) -> Outcome {
    let spec = section(&cfg.solve, "solve")?;
    let grid = grid_of(&cfg.grid)?;
    spec.params.check_solver_admissible()?;
    spec.params.check_dimension(grid.dim())?;
    let u0 = initial_data(&grid, spec)?;
    let p = build_partition(&grid)?;
    let solver = SolverConfig {
        nu: spec.nu,
        horizon: spec.horizon,
        steps: spec.steps,
        max_picard: spec.max_picard,
        tol: spec.tol,
        params: spec.params.clone(),
        k_estimate: bilinear_constant(spec, &p, cfg.seed)?,
    };
    solver.validate()?;
    let adm = admissibility(&u0, &solver)?;
    if require_admissible && !adm.ok {
        return Err(Failure::new(
            Exit::Invalid,
            format!("data are not small: z0 = {:e} exceeds 1/(4K) = {:e}", adm.z0, adm.threshold),
        ));
    }
    let (traj, report) = picard_solve(&u0, &solver)?;
    let dir = out_dir(cfg)?;
    write_trajectory(&dir.join("trajectory.anf"), &traj, solver.nu)?;
    let table = TimeBlockTable::build(&traj, &solver.params.block_norm(), &p)?;
    let mut csv = String::from("t");
    for l in &table.scales {
        csv.push_str(&format!(",l={l}"));
    }
    csv.push('\n');
    for (t, row) in traj.times().iter().zip(&table.rows) {
        csv.push_str(&format!("{t:.17e}"));
        for v in row {
            csv.push_str(&format!(",{v:.17e}"));
        }
        csv.push('\n');
    }
    write_atomic(&dir.join("block_norms.csv"), &csv)?;
    let doc = json!({
        "report": report,
        "admissibility": adm,
        "config": solver,
        "note": format!("time norms are truncated to [0, {}]", solver.horizon),
    });
    write_atomic(&dir.join("report.json"), &format!("{doc:#}\n"))?;
    emit(print, &serde_json::to_value(&report).map_err(Error::from)?)?;
    Ok(if report.converged() { Exit::Ok } else { Exit::Diverged })
}

/// Every selectable check, in default-suite order.
pub const CHECKS: [&str; 14] = [
    "bernstein-physical",
    "bernstein-fourier",
    "bernstein-fourier-indices",
    "embeddings",
    "sandwich",
    "multiplier-riesz",
    "r-monotonicity",
    "holder-lebesgue",
    "holder-morrey",
    "young",
    "heat-decay",
    "linear-physical",
    "linear-fourier",
    "bilinear-constant",
];

/// Checks run when none are selected; the bilinear fit is an estimate and
/// is only run on request.
pub fn default_suite() -> Vec<String> {
    CHECKS[..CHECKS.len() - 1].iter().map(|s| s.to_string()).collect()
}

fn run_check(name: &str, spec: &VerifySpec, p: &DyadicPartition, lab_cfg: &LabConfig) -> Result<Vec<CheckOutcome>, Failure> {
    use morrey_ns::norms::Flavor;
    let (q, l) = (&spec.q, &spec.lambda);
    let time_cfg = LabConfig {
        samples: spec.time_samples.max(1),
        ..*lab_cfg
    };
    let critical = |flavor| SpaceParams::critical(q.clone(), l.clone(), 2.0, flavor);
    Ok(match name {
        "bernstein-physical" => vec![lab::check_bernstein_physical(q, l, p, lab_cfg)?],
        "bernstein-fourier" => vec![lab::check_bernstein_fourier(q, l, p, lab_cfg)?],
        "bernstein-fourier-indices" => {
            let (qq, ll) = (vec![2.0; q.len()], vec![0.5; q.len()]);
            vec![lab::check_bernstein_fourier_indices(&qq, &ll, &spec.r, &spec.mu, p, lab_cfg)?]
        }
        "embeddings" => {
            let cases = spec.embeddings.clone().unwrap_or_else(|| spec.default_embeddings());
            cases
                .iter()
                .map(|c| lab::check_embedding(c, p, lab_cfg))
                .collect::<Result<Vec<_>, _>>()?
        }
        "sandwich" => lab::check_sandwich(q, l, p, lab_cfg)?.into(),
        "multiplier-riesz" => vec![lab::check_multiplier("riesz-0", &MultiplierSymbol::riesz(0), q, l, p, lab_cfg)?],
        "r-monotonicity" => spec
            .flavors
            .iter()
            .map(|&f| {
                let params = SpaceParams::new(q.clone(), l.clone(), 1.0, 0.0, f)?;
                lab::check_r_monotonicity(&params, f64::INFINITY, p, lab_cfg)
            })
            .collect::<Result<Vec<_>, _>>()?,
        "holder-lebesgue" => vec![lab::check_holder_lebesgue(p, lab_cfg)?],
        "holder-morrey" => vec![lab::check_holder_morrey(p, lab_cfg)?],
        "young" => vec![lab::check_young(p, lab_cfg)?],
        "heat-decay" => vec![lab::check_heat_decay(q, l, 1.0, p, &time_cfg)?],
        "linear-physical" | "linear-fourier" => {
            let flavor = if name == "linear-physical" { Flavor::PhysicalBesov } else { Flavor::FourierBesov };
            let setup = LinearSetup {
                nus: spec.nus.clone(),
                ..Default::default()
            };
            lab::check_linear_estimates(&critical(flavor)?, &setup, p, &time_cfg)?
        }
        "bilinear-constant" => spec
            .flavors
            .iter()
            .map(|&f| {
                let setup = BilinearSetup {
                    nu: 1.0,
                    horizon: 1.0,
                    steps: 16,
                };
                lab::estimate_bilinear_constant(&SpaceParams::critical(q.clone(), l.clone(), 1.0, f)?, &setup, p, &time_cfg)
            })
            .collect::<Result<Vec<_>, _>>()?,
        other => {
            return Err(Failure::new(
                Exit::Invalid,
                format!("unknown check \"{other}\"; known checks: {}", CHECKS.join(", ")),
            ))
        }
    })
}

pub fn verify(cfg: &ExperimentConfig, print: &mut dyn Write) -> Outcome {
    let default_spec = VerifySpec::default();
    let spec = cfg.verify.as_ref().unwrap_or(&default_spec);
    let grid = grid_of(&cfg.grid)?;
    let p = build_partition(&grid)?;
    let lab_cfg = LabConfig {
        samples: spec.samples,
        seed: cfg.seed,
        spread_ceiling: spec.spread_ceiling,
    };
    lab_cfg.validate()?;
    let names = spec.checks.clone().unwrap_or_else(default_suite);
    for n in &names {
        if !CHECKS.contains(&n.as_str()) {
            return Err(Failure::new(
                Exit::Invalid,
                format!("unknown check \"{n}\"; known checks: {}", CHECKS.join(", ")),
            ));
        }
    }
    let mut lines = String::new();
    let mut failed = Vec::new();
    for name in &names {
        for outcome in run_check(name, spec, &p, &lab_cfg)? {
            let reports: Vec<_> = if spec.controls_only {
                outcome.control.iter().collect()
            } else {
                outcome.reports().collect()
            };
            for r in reports {
                let line = r.to_json_line();
                lines.push_str(&line);
                lines.push('\n');
                emit(print, &serde_json::from_str(&line).map_err(Error::from)?)?;
                if !r.meets_expectation() {
                    failed.push(r.id.clone());
                }
            }
        }
    }
    let dir = out_dir(cfg)?;
    write_atomic(&dir.join("verify.jsonl"), &lines)?;
    if failed.is_empty() {
        Ok(Exit::Ok)
    } else {
        Err(Failure::new(Exit::CheckFailed, format!("failing checks: {}", failed.join(", "))))
    }
}
