//! Fourier multipliers of the incompressible Navier-Stokes mild formulation:
//! heat semigroup, Leray projection, Riesz transforms, homogeneous
//! multipliers, the projected nonlinearity and the Duhamel integrals.
//!
//! Every multiplier sends the mean mode to zero except the heat semigroup,
//! whose symbol is 1 there.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation, VectorField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniformly sampled time history `t_m = m·dt`, states kept spectral.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid,
    dt: f64,
    states: Vec<VectorField>,
}

impl Trajectory {
    /// Builds a trajectory from explicit sample times, which must start at 0
    /// and be uniformly spaced.
    pub fn new(times: &[f64], states: Vec<VectorField>) -> Result<Self> {
        if times.len() != states.len() || times.len() < 2 {
            return Err(Error::Trajectory(format!(
                "need matching times and states (at least two), got {} and {}",
                times.len(),
                states.len()
            )));
        }
        if times[0].abs() > 1e-14 {
            return Err(Error::Trajectory("time grid must start at 0".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::Trajectory("time grid must increase".into()));
        }
        for (m, &t) in times.iter().enumerate() {
            if (t - m as f64 * dt).abs() > 1e-9 * dt.max(t.abs()) {
                return Err(Error::Trajectory(format!(
                    "time grid is not uniform at index {m} (t = {t})"
                )));
            }
        }
        Self::from_states(dt, states)
    }

    pub fn from_states(dt: f64, states: Vec<VectorField>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Trajectory(format!("time step must be positive, got {dt}")));
        }
        let first = states
            .first()
            .ok_or_else(|| Error::Trajectory("trajectory has no states".into()))?;
        let grid = *first.grid();
        if states.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            dt,
            states: states.iter().map(VectorField::to_spectral).collect(),
        })
    }

    /// `steps + 1` copies of one state.
    pub fn constant(u: &VectorField, horizon: f64, steps: usize) -> Result<Self> {
        Self::from_states(horizon / steps as f64, vec![u.to_spectral(); steps + 1])
    }

    pub fn zeros(grid: Grid, horizon: f64, steps: usize) -> Result<Self> {
        Self::constant(&VectorField::zeros(grid, Representation::Spectral), horizon, steps)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|m| m as f64 * self.dt).collect()
    }

    pub fn states(&self) -> &[VectorField] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &VectorField {
        &self.states[m]
    }

    pub fn last(&self) -> &VectorField {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn map(&self, f: impl Fn(&VectorField) -> VectorField) -> Trajectory {
        Self {
            grid: self.grid,
            dt: self.dt,
            states: self.states.iter().map(|s| f(s).to_spectral()).collect(),
        }
    }

    fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.states.len() != other.states.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Trajectory("time grids differ".into()));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Trajectory, b: f64) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(x, y)| x.lin_comb(a, y, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            dt: self.dt,
            states,
        })
    }

    pub fn scale(&self, a: f64) -> Trajectory {
        self.map(|s| s.scale(a))
    }

    /// Largest sample modulus over all states.
    pub fn max_abs(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.to_physical().max_abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.states
            .iter()
            .all(|s| s.components().iter().all(|c| c.data().iter().all(|z| z.is_finite())))
    }
}

/// Homogeneous Fourier multiplier `P(ξ)` with its degree.
#[derive(Clone)]
pub struct MultiplierSymbol {
    eval: Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>,
    degree: f64,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol")
            .field("degree", &self.degree)
            .finish_non_exhaustive()
    }
}

fn euclid(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl MultiplierSymbol {
    pub fn new(degree: f64, eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            degree,
        }
    }

    /// `|ξ|^γ`.
    pub fn power(gamma: f64) -> Self {
        Self::new(gamma, move |xi| Complex64::new(euclid(xi).powf(gamma), 0.0))
    }

    /// `i ξ_axis / |ξ|` (axis counted from 0).
    pub fn riesz(axis: usize) -> Self {
        Self::new(0.0, move |xi| Complex64::new(0.0, xi[axis] / euclid(xi)))
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        (self.eval)(xi)
    }
}

/// Spectral multiplication by `P(ξ)`, with the mean mode set to zero.
pub fn apply_multiplier(f: &Field, symbol: &MultiplierSymbol) -> Result<Field> {
    let g = *f.grid();
    let d = g.dim();
    let mut spec = f.to_spectral();
    for (i, c) in spec.data_mut().iter_mut().enumerate() {
        if i == 0 {
            *c = ZERO;
            continue;
        }
        let xi = g.wavevector(i);
        let m = symbol.eval(&xi[..d]);
        if !m.is_finite() {
            return Err(Error::SymbolNotFinite(xi[..d].to_vec()));
        }
        *c *= m;
    }
    Ok(spec.to_repr(f.repr()))
}

/// `e^{−ν t |ξ|²}` table.
fn heat_table(g: &Grid, nu: f64, t: f64) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            let r = g.frequency_norm(i);
            (-nu * t * r * r).exp()
        })
        .collect()
}

fn check_heat_args(nu: f64, t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    Ok(())
}

pub fn heat_semigroup(f: &Field, nu: f64, t: f64) -> Result<Field> {
    check_heat_args(nu, t)?;
    Ok(f.apply_table(&heat_table(f.grid(), nu, t)))
}

pub fn heat_semigroup_vector(u: &VectorField, nu: f64, t: f64) -> Result<VectorField> {
    check_heat_args(nu, t)?;
    Ok(u.apply_table(&heat_table(u.grid(), nu, t)))
}

/// Mode-wise `δ_ij − ξ_i ξ_j / |ξ|²`, mean mode zeroed.
pub fn leray_project(u: &VectorField) -> VectorField {
    let g = *u.grid();
    let d = g.dim();
    let spec = u.to_spectral();
    let mut out: Vec<Field> = spec.components().to_vec();
    for i in 0..g.len() {
        if i == 0 {
            out.iter_mut().for_each(|c| c.data_mut()[0] = ZERO);
            continue;
        }
        let xi = g.wavevector(i);
        let r2: f64 = xi[..d].iter().map(|x| x * x).sum();
        let dot: Complex64 = (0..d).map(|j| spec.component(j).data()[i] * xi[j]).sum::<Complex64>() / r2;
        for (j, c) in out.iter_mut().enumerate() {
            c.data_mut()[i] -= dot * xi[j];
        }
    }
    let v = VectorField::new(out).expect("components share one grid");
    match u.repr() {
        Representation::Spectral => v,
        Representation::Physical => v.to_physical(),
    }
}

pub fn riesz_transform(f: &Field, axis: usize) -> Result<Field> {
    let d = f.grid().dim();
    if axis >= d {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for dimension {d}"
        )));
    }
    apply_multiplier(f, &MultiplierSymbol::riesz(axis))
}

/// `|ξ|^s` with the mean mode removed.
pub fn fractional_laplacian(f: &Field, s: f64) -> Field {
    apply_multiplier(f, &MultiplierSymbol::power(s)).expect("power symbol is finite off the origin")
}

/// Spectral divergence `Σ_j i ξ_j û_j`.
pub fn divergence(u: &VectorField) -> Field {
    let g = *u.grid();
    let d = g.dim();
    let spec = u.to_spectral();
    let mut out = Field::zeros(g, Representation::Spectral);
    for (i, c) in out.data_mut().iter_mut().enumerate() {
        let xi = g.wavevector(i);
        *c = (0..d)
            .map(|j| spec.component(j).data()[i] * Complex64::new(0.0, xi[j]))
            .sum();
    }
    out.to_repr(u.repr())
}

/// Spectral gradient `(i ξ_j f̂)_j`.
pub fn gradient(f: &Field) -> VectorField {
    let g = *f.grid();
    let comps = (0..g.dim())
        .map(|j| f.map_spectral(|i, c| c * Complex64::new(0.0, g.wavevector(i)[j])))
        .collect();
    VectorField::new(comps).expect("components share one grid")
}

fn check_dealiased(u: &VectorField, name: &str) -> Result<()> {
    let scale = u.components().iter().map(|c| c.max_abs()).fold(0.0, f64::max);
    let out = u
        .components()
        .iter()
        .map(|c| c.out_of_box_amplitude())
        .fold(0.0, f64::max);
    if out > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::BandViolation(format!(
            "{name} has amplitude {out:e} outside the 2/3-rule box"
        )));
    }
    Ok(())
}

/// `P div(u ⊗ v)` with `(u ⊗ v)_{ij} = u_i v_j` and divergence taken along
/// rows; spectral output.
pub fn nonlinear_term(u: &VectorField, v: &VectorField) -> Result<VectorField> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    check_dealiased(u, "u")?;
    check_dealiased(v, "v")?;
    let g = *u.grid();
    let d = g.dim();
    let up = u.to_physical();
    let vp = if std::ptr::eq(u, v) { up.clone() } else { v.to_physical() };
    let mut rows: Vec<Field> = (0..d).map(|_| Field::zeros(g, Representation::Spectral)).collect();
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..d {
            let prod = up.component(i).pointwise_mul(vp.component(j))?.to_spectral();
            for (k, c) in row.data_mut().iter_mut().enumerate() {
                if g.in_dealiased_box(k) {
                    *c += prod.data()[k] * Complex64::new(0.0, g.wavevector(k)[j]);
                }
            }
        }
    }
    Ok(leray_project(&VectorField::new(rows)?))
}

/// Per-mode coefficients of the exponential integrator for one step.
struct StepWeights {
    decay: Vec<f64>,
    old: Vec<f64>,
    new: Vec<f64>,
}

/// `(1 − (1 + z)e^{−z}) / z²`, with its Taylor series near zero.
fn second_phi(z: f64) -> f64 {
    if z < 1e-3 {
        0.5 - z / 3.0 + z * z / 8.0 - z.powi(3) / 30.0 + z.powi(4) / 144.0
    } else {
        (1.0 - (1.0 + z) * (-z).exp()) / (z * z)
    }
}

/// `(1 − e^{−z}) / z`.
fn first_phi(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

impl StepWeights {
    fn new(g: &Grid, nu: f64, dt: f64) -> Self {
        let len = g.len();
        let mut decay = Vec::with_capacity(len);
        let mut old = Vec::with_capacity(len);
        let mut new = Vec::with_capacity(len);
        for i in 0..len {
            let r = g.frequency_norm(i);
            let z = nu * r * r * dt;
            let w = second_phi(z);
            decay.push((-z).exp());
            old.push(dt * w);
            new.push(dt * (first_phi(z) - w));
        }
        Self { decay, old, new }
    }
}

/// `A(g)(t) = ∫_0^t S_ν(t − s) g(s) ds` with `g` linear in time on each step.
pub fn duhamel(forcing: &Trajectory, nu: f64) -> Result<Trajectory> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    let g = *forcing.grid();
    let w = StepWeights::new(&g, nu, forcing.dt());
    let mut states = Vec::with_capacity(forcing.states.len());
    let mut current: Vec<Field> = (0..g.dim()).map(|_| Field::zeros(g, Representation::Spectral)).collect();
    states.push(VectorField::new(current.clone())?);
    for pair in forcing.states.windows(2) {
        for (j, c) in current.iter_mut().enumerate() {
            let a = pair[0].component(j).data();
            let b = pair[1].component(j).data();
            for (i, x) in c.data_mut().iter_mut().enumerate() {
                *x = *x * w.decay[i] + a[i] * w.old[i] + b[i] * w.new[i];
            }
        }
        states.push(VectorField::new(current.clone())?);
    }
    Trajectory::from_states(forcing.dt(), states)
}

/// Pointwise-in-time `P div(v ⊗ w)`.
pub fn nonlinear_trajectory(v: &Trajectory, w: &Trajectory) -> Result<Trajectory> {
    v.check_compatible(w)?;
    let states = v
        .states
        .iter()
        .zip(&w.states)
        .map(|(a, b)| nonlinear_term(a, b))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_states(v.dt, states)
}

/// `B(v, w)(t) = −∫_0^t S_ν(t − s) P div(v ⊗ w)(s) ds`.
///
/// The minus sign makes `u = S_ν u_0 + B(u, u)` the incompressible
/// Navier-Stokes equations `∂_t u + div(u ⊗ u) = νΔu − ∇p`.
pub fn bilinear_b(v: &Trajectory, w: &Trajectory, nu: f64) -> Result<Trajectory> {
    Ok(duhamel(&nonlinear_trajectory(v, w)?, nu)?.scale(-1.0))
}

/// `t ↦ S_ν(t) u_0` on `steps + 1` uniform times over `[0, horizon]`.
pub fn heat_trajectory(u0: &VectorField, nu: f64, horizon: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidParameter("need a positive horizon and at least one step".into()));
    }
    let dt = horizon / steps as f64;
    let states = (0..=steps)
        .map(|m| heat_semigroup_vector(u0, nu, m as f64 * dt))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_states(dt, states)
}
