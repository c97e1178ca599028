//! Picard iteration for the mild Navier-Stokes formulation
//! `u = S_ν(t)u_0 + B(u, u)` on a truncated horizon, with the smallness test
//! of the contraction argument and generators for anisotropic initial data.
//!
//! Iterates live in the Galerkin space of modes `0 < |ξ| < (8/3)·2^{l_max}`:
//! every Duhamel output is cut to that ball, which keeps the quadratic term
//! alias-free under the 2/3 rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VectorField};
use crate::lpdecomp::{build_partition, DyadicPartition};
use crate::norms::{scaling_exponent, SpaceParams, TimeBlockTable};
use crate::operators::{
    bilinear_b, fractional_laplacian, heat_trajectory, leray_project, Trajectory,
};

/// Iterates whose Z-norm exceeds this multiple of the data norm count as
/// diverged.
const BLOW_UP_FACTOR: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    pub max_picard: usize,
    pub tol: f64,
    pub params: SpaceParams,
    #[serde(rename = "K_estimate")]
    pub k_estimate: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("T", self.horizon),
            ("tol", self.tol),
            ("K_estimate", self.k_estimate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.steps == 0 || self.max_picard == 0 {
            return Err(Error::InvalidParameter(
                "M and max_picard must be at least 1".into(),
            ));
        }
        self.params.check_solver_admissible()
    }

    /// Bilinear constant including the viscosity factor, `K_0·max(1, 1/ν)`.
    pub fn bilinear_constant(&self) -> f64 {
        self.k_estimate * (1.0f64).max(1.0 / self.nu)
    }

    /// Largest admissible Z-norm of the free evolution, `1 / (4K)`.
    pub fn smallness_threshold(&self) -> f64 {
        1.0 / (4.0 * self.bilinear_constant())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub z0_norm: f64,
    pub final_norm: f64,
    pub threshold: f64,
    pub admissible: bool,
    pub contraction_estimate: Option<f64>,
    /// `final_norm ≤ 2·z0_norm + tol`.
    pub within_bound: bool,
    pub horizon: f64,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Which singular profile seeds the initial datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataVariant {
    /// `∏_j |x_j|^{−(1−λ_j)/q_j}`.
    Product,
    /// `|x_1|^{−m}` with `m = Σ(1−λ_i)/q_i`.
    SingleAxis,
}

/// Shared per-grid state of a solve.
pub struct SolverContext {
    pub partition: DyadicPartition,
    galerkin: Vec<f64>,
}

impl SolverContext {
    pub fn new(grid: &Grid) -> Result<Self> {
        let partition = build_partition(grid)?;
        let radius = DyadicPartition::annulus(partition.l_max()).1;
        let galerkin = (0..grid.len())
            .map(|i| {
                let r = grid.frequency_norm(i);
                if i != 0 && r < radius {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { partition, galerkin })
    }

    /// Restriction to the Galerkin modes.
    pub fn project(&self, u: &VectorField) -> VectorField {
        u.apply_table(&self.galerkin)
    }

    pub fn project_trajectory(&self, t: &Trajectory) -> Trajectory {
        t.map(|s| self.project(s))
    }

    pub fn z_norm(&self, traj: &Trajectory, params: &SpaceParams) -> Result<f64> {
        TimeBlockTable::build(traj, &params.block_norm(), &self.partition)?
            .z_norm(params.regularity, params.r)
    }
}

fn periodic_distance(x: f64, length: f64) -> f64 {
    let r = x.rem_euclid(length);
    r.min(length - r)
}

/// Divergence-free datum `ε·P(0, …, 0, g)` with `g = (−Δ)^{σ/2} f` for a
/// clamped power singularity `f` and `σ = −1 + Σ(1−λ_i)/q_i`, smoothly
/// band-limited below the top annulus.
pub fn anisotropic_initial_data(
    grid: &Grid,
    q: &[f64],
    lambda: &[f64],
    eps: f64,
    variant: DataVariant,
) -> Result<VectorField> {
    let d = grid.dim();
    if d < 2 {
        return Err(Error::InvalidParameter(
            "divergence-free data need at least two dimensions".into(),
        ));
    }
    if q.len() != d || lambda.len() != d {
        return Err(Error::InvalidParameter(format!("need {d} indices per axis")));
    }
    if q.iter().any(|x| !(x.is_finite() && *x >= 1.0)) || lambda.iter().any(|x| !(*x >= 0.0 && *x < 1.0)) {
        return Err(Error::InvalidParameter("need q in [1, inf) and lambda in [0, 1)".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
    }
    let m = scaling_exponent(q, lambda);
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sum (1-lambda_i)/q_i must be positive, got {m}"
        )));
    }
    let exponents: Vec<f64> = match variant {
        DataVariant::Product => {
            if lambda.iter().any(|&l| l <= 0.0) {
                return Err(Error::InvalidParameter(
                    "the product profile needs every lambda_i > 0".into(),
                ));
            }
            q.iter().zip(lambda).map(|(q, l)| (1.0 - l) / q).collect()
        }
        DataVariant::SingleAxis => {
            if m >= 1.0 / q[0] {
                return Err(Error::InvalidParameter(format!(
                    "the single-axis profile needs sum (1-lambda_i)/q_i < 1/q_1, got {m}"
                )));
            }
            let mut e = vec![0.0; d];
            e[0] = m;
            e
        }
    };
    let h = grid.spacing();
    let length = grid.length();
    let f = Field::from_fn(*grid, |x| {
        exponents
            .iter()
            .enumerate()
            .map(|(j, &a)| periodic_distance(x[j], length).max(h / 2.0).powf(-a))
            .product()
    });
    let sigma = -1.0 + m;
    let partition = build_partition(grid)?;
    let smooth = partition.low_pass_table(partition.l_max() + 1);
    let g = fractional_laplacian(&f.without_mean(), sigma)
        .apply_table(&smooth)
        .scale(eps);
    let mut comps: Vec<Field> = (0..d)
        .map(|_| Field::zeros(*grid, g.repr()))
        .collect();
    comps[d - 1] = g;
    Ok(leray_project(&VectorField::new(comps)?).to_spectral())
}

/// `(sin x cos y, −cos x sin y)` scaled by `amplitude` on a `2π` box.
pub fn taylor_green(grid: &Grid, amplitude: f64) -> Result<VectorField> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParameter("Taylor-Green data are two-dimensional".into()));
    }
    let unit = grid.frequency_unit();
    VectorField::new(vec![
        Field::from_fn(*grid, |x| amplitude * (unit * x[0]).sin() * (unit * x[1]).cos()),
        Field::from_fn(*grid, |x| -amplitude * (unit * x[0]).cos() * (unit * x[1]).sin()),
    ])
}

pub fn free_evolution(u0: &VectorField, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    heat_trajectory(u0, cfg.nu, cfg.horizon, cfg.steps)
}

/// Outcome of the smallness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// Z-norm of the free evolution.
    pub z0: f64,
    /// `1 / (4·K_0·max(1, 1/ν))`: the largest admissible `z0`.
    pub threshold: f64,
    pub ok: bool,
}

pub fn admissibility(u0: &VectorField, cfg: &SolverConfig) -> Result<Admissibility> {
    let ctx = SolverContext::new(u0.grid())?;
    let z0 = ctx.z_norm(&free_evolution(u0, cfg)?, &cfg.params)?;
    let threshold = cfg.smallness_threshold();
    Ok(Admissibility {
        z0,
        threshold,
        ok: z0 < threshold,
    })
}

/// Geometric rate fitted to the positive residuals by least squares on
/// their logarithms.
pub fn fit_contraction(residuals: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0 && r.is_finite())
        .map(|(i, r)| (i as f64, r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

pub fn picard_solve(u0: &VectorField, cfg: &SolverConfig) -> Result<(Trajectory, ConvergenceReport)> {
    cfg.validate()?;
    cfg.params.check_dimension(u0.grid().dim())?;
    let ctx = SolverContext::new(u0.grid())?;
    let u0 = ctx.project(&u0.to_spectral());
    let free = heat_trajectory(&u0, cfg.nu, cfg.horizon, cfg.steps)?;
    let z0 = ctx.z_norm(&free, &cfg.params)?;
    let threshold = cfg.smallness_threshold();
    let cap = BLOW_UP_FACTOR * z0.max(f64::MIN_POSITIVE);

    let mut u = free.clone();
    let mut residuals = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    for _ in 0..cfg.max_picard {
        let duhamel = ctx.project_trajectory(&bilinear_b(&u, &u, cfg.nu)?);
        let next = free.lin_comb(1.0, &duhamel, 1.0)?;
        if !next.is_finite() {
            status = SolveStatus::Diverged;
            break;
        }
        let residual = ctx.z_norm(&next.lin_comb(1.0, &u, -1.0)?, &cfg.params)?;
        residuals.push(residual);
        u = next;
        if !residual.is_finite() || residual > cap {
            status = SolveStatus::Diverged;
            break;
        }
        if residual <= cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    let final_norm = if u.is_finite() {
        ctx.z_norm(&u, &cfg.params)?
    } else {
        f64::INFINITY
    };
    let report = ConvergenceReport {
        status,
        iterations: residuals.len(),
        contraction_estimate: fit_contraction(&residuals),
        residuals,
        z0_norm: z0,
        final_norm,
        threshold,
        admissible: z0 < threshold,
        within_bound: final_norm <= 2.0 * z0 + cfg.tol,
        horizon: cfg.horizon,
    };
    Ok((u, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `‖u − ũ‖_Z / ‖z_0 − z̃_0‖_Z`, reported as 0 when both vanish.
    pub ratio: f64,
    /// `(1 − 4Kε)^{−1}` with `ε` the larger of the two data norms.
    pub ceiling: f64,
    pub solution_difference: f64,
    pub data_difference: f64,
    pub eps: f64,
}

pub fn continuity_experiment(
    u0: &VectorField,
    perturbation: &VectorField,
    cfg: &SolverConfig,
) -> Result<ContinuityReport> {
    let other = u0.lin_comb(1.0, perturbation, 1.0)?;
    let (u, ru) = picard_solve(u0, cfg)?;
    let (v, rv) = picard_solve(&other, cfg)?;
    for (name, r) in [("unperturbed", &ru), ("perturbed", &rv)] {
        if r.status == SolveStatus::Diverged {
            return Err(Error::Hypothesis(format!("the {name} solve diverged")));
        }
    }
    let ctx = SolverContext::new(u0.grid())?;
    let free_u = heat_trajectory(&ctx.project(&u0.to_spectral()), cfg.nu, cfg.horizon, cfg.steps)?;
    let free_v = heat_trajectory(&ctx.project(&other.to_spectral()), cfg.nu, cfg.horizon, cfg.steps)?;
    let data_difference = ctx.z_norm(&free_u.lin_comb(1.0, &free_v, -1.0)?, &cfg.params)?;
    let solution_difference = ctx.z_norm(&u.lin_comb(1.0, &v, -1.0)?, &cfg.params)?;
    let ratio = if data_difference == 0.0 && solution_difference == 0.0 {
        0.0
    } else {
        solution_difference / data_difference
    };
    let eps = ru.z0_norm.max(rv.z0_norm);
    let contraction = 4.0 * cfg.bilinear_constant() * eps;
    let ceiling = if contraction < 1.0 {
        1.0 / (1.0 - contraction)
    } else {
        f64::INFINITY
    };
    Ok(ContinuityReport {
        ratio,
        ceiling,
        solution_difference,
        data_difference,
        eps,
    })
}

/// Pairings `⟨u(t_m), φ_k⟩` with three fixed smooth test fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub pairings: Vec<Vec<f64>>,
    /// Largest `|⟨u(t_{m+1}) − u(t_m), φ_k⟩| / Δt` over `m` and `k`.
    pub lipschitz: f64,
    /// Largest jump between consecutive times relative to the pairing scale.
    pub max_relative_jump: f64,
}

pub fn weak_pairing_check(traj: &Trajectory) -> Result<PairingReport> {
    let g = *traj.grid();
    let d = g.dim();
    let unit = g.frequency_unit();
    let tests: Vec<VectorField> = (0..3)
        .map(|k| {
            let comps = (0..d)
                .map(|j| {
                    Field::from_fn(g, |x| {
                        let phase: f64 = (0..d).map(|a| unit * x[a] * (1 + (a + j + k) % 3) as f64).sum();
                        (phase + k as f64).cos() * (unit * x[j]).sin().exp()
                    })
                })
                .collect();
            VectorField::new(comps)
        })
        .collect::<Result<Vec<_>>>()?;
    let h = g.spacing().powi(d as i32);
    let pairings: Vec<Vec<f64>> = tests
        .iter()
        .map(|phi| {
            traj.states()
                .iter()
                .map(|s| {
                    let s = s.to_physical();
                    (0..d)
                        .map(|j| {
                            s.component(j)
                                .data()
                                .iter()
                                .zip(phi.component(j).data())
                                .map(|(a, b)| (a * b.conj()).re)
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        * h
                })
                .collect()
        })
        .collect();
    let dt = traj.dt();
    let mut lipschitz: f64 = 0.0;
    let mut jump: f64 = 0.0;
    for series in &pairings {
        let scale = series.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        for w in series.windows(2) {
            let diff = (w[1] - w[0]).abs();
            lipschitz = lipschitz.max(diff / dt);
            jump = jump.max(diff / scale);
        }
    }
    Ok(PairingReport {
        pairings,
        lipschitz,
        max_relative_jump: jump,
    })
}

/// Maximum over states of the pointwise divergence modulus.
pub fn max_divergence(traj: &Trajectory) -> f64 {
    traj.states()
        .iter()
        .map(|s| crate::operators::divergence(s).to_physical().max_abs())
        .fold(0.0, f64::max)
}

/// Maximum over states of the mean-mode modulus.
pub fn max_mean(traj: &Trajectory) -> f64 {
    traj.states()
        .iter()
        .flat_map(|s| s.components().iter().map(|c| c.data()[0].norm()))
        .fold(0.0, f64::max)
}

/// Largest physical-space difference from `t ↦ e^{−2νt}·u_0` (the Taylor-Green
/// solution when `u_0` has unit wavenumbers).
pub fn taylor_green_error(traj: &Trajectory, u0: &VectorField, nu: f64) -> f64 {
    let u0 = u0.to_physical();
    traj.states()
        .iter()
        .zip(traj.times())
        .map(|(s, t)| {
            let decay = (-2.0 * nu * t * traj.grid().frequency_unit().powi(2)).exp();
            s.to_physical().max_diff(&u0.scale(decay))
        })
        .fold(0.0, f64::max)
}
