//! Periodic sampling grids, scalar/vector fields and the discrete Fourier
//! transform between physical samples and Fourier-series coefficients.
//!
//! Storage is row-major with axis 0 (`x_1`) fastest and the last axis slowest.
//! The forward transform carries the `1/N` factor, so the spectral samples are
//! exactly the Fourier-series coefficients of the periodic function and a
//! symbol `m(ξ)` acts on them verbatim. Integer mode `k` has physical
//! frequency `ξ = (2π/L)·k`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Imaginary parts above this (relative to the field's magnitude) make a
/// field "not real".
pub const REAL_TOLERANCE: f64 = 1e-10;

/// Uniform periodic grid with the same number of points on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3 (got {dim})"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even (got {n})")));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("n must be at least 8 (got {n})")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side length must be positive (got {length})"
            )));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Physical spacing `h = L / n`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical frequency of the unit integer mode, `2π/L`.
    pub fn frequency_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// The frequency lattice viewed as a periodic grid of spacing `2π/L`.
    pub fn frequency_grid(&self) -> Grid {
        Grid {
            dim: self.dim,
            n: self.n,
            length: self.n as f64 * self.frequency_unit(),
        }
    }

    /// Per-axis indices of a flat offset (unused axes are zero).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = flat;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &i| acc * self.n + i)
    }

    /// Signed integer wavenumber of an FFT-ordered index, in `[-n/2, n/2)`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Integer mode vector of a flat spectral offset.
    pub fn mode(&self, flat: usize) -> [i64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    /// Flat spectral offset of an integer mode vector.
    pub fn mode_offset(&self, k: &[i64]) -> usize {
        let n = self.n as i64;
        let idx: Vec<usize> = k
            .iter()
            .take(self.dim)
            .map(|&ki| ki.rem_euclid(n) as usize)
            .collect();
        self.flat_index(&idx)
    }

    /// Physical frequency vector `ξ` of a flat spectral offset.
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let k = self.mode(flat);
        let unit = self.frequency_unit();
        [k[0] as f64 * unit, k[1] as f64 * unit, k[2] as f64 * unit]
    }

    /// `|ξ|` of a flat spectral offset.
    pub fn frequency_norm(&self, flat: usize) -> f64 {
        let xi = self.wavevector(flat);
        (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
    }

    /// Physical coordinates of a flat physical offset.
    pub fn coordinates(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
    }

    /// Whether a spectral offset survives the 2/3 rule (every `|k_i| <= n/3`).
    pub fn in_dealiased_box(&self, flat: usize) -> bool {
        let cutoff = self.n as f64 / 3.0;
        self.mode(flat)
            .iter()
            .take(self.dim)
            .all(|&k| (k.abs() as f64) <= cutoff)
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn make_grid(dim: usize, n: usize, length: f64) -> Result<Grid> {
    Grid::new(dim, n, length)
}

/// Whether samples are point values or Fourier coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Representation::Physical => 0,
            Representation::Spectral => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Representation::Physical),
            1 => Some(Representation::Spectral),
            _ => None,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Complex samples on a grid, tagged with their representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<Complex64>,
    repr: Representation,
}

impl Field {
    pub fn zeros(grid: Grid, repr: Representation) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid,
            repr,
        }
    }

    pub fn from_data(grid: Grid, data: Vec<Complex64>, repr: Representation) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "sample count {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data, repr })
    }

    /// Real physical field sampled from a function of the coordinates.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64; 3]) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|i| Complex64::new(f(&grid.coordinates(i)), 0.0))
            .collect();
        Self {
            grid,
            data,
            repr: Representation::Physical,
        }
    }

    /// Spectral field with coefficients given per integer mode.
    pub fn from_modes(grid: Grid, mut f: impl FnMut(&[i64; 3]) -> Complex64) -> Self {
        let data = (0..grid.len()).map(|i| f(&grid.mode(i))).collect();
        Self {
            grid,
            data,
            repr: Representation::Spectral,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn repr(&self) -> Representation {
        self.repr
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn to_spectral(&self) -> Field {
        match self.repr {
            Representation::Spectral => self.clone(),
            Representation::Physical => transform(self, Direction::Forward),
        }
    }

    pub fn to_physical(&self) -> Field {
        match self.repr {
            Representation::Physical => self.clone(),
            Representation::Spectral => transform(self, Direction::Inverse),
        }
    }

    pub fn to_repr(&self, repr: Representation) -> Field {
        match repr {
            Representation::Physical => self.to_physical(),
            Representation::Spectral => self.to_spectral(),
        }
    }

    /// Multiplies every coefficient by `symbol(offset, value)` in spectral
    /// space; the result comes back in the caller's representation.
    pub fn map_spectral(&self, symbol: impl Fn(usize, Complex64) -> Complex64) -> Field {
        let mut spec = self.to_spectral();
        for (i, c) in spec.data.iter_mut().enumerate() {
            *c = symbol(i, *c);
        }
        spec.to_repr(self.repr)
    }

    /// Multiplies the spectrum by a real table of per-mode weights.
    pub fn apply_table(&self, table: &[f64]) -> Field {
        self.map_spectral(|i, c| c * table[i])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Real part of the samples; errors when an imaginary part is not
    /// negligible.
    pub fn real_part(&self) -> Result<Vec<f64>> {
        let scale = self.max_abs().max(1.0);
        let worst = self.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if worst > REAL_TOLERANCE * scale {
            return Err(Error::NotReal(worst));
        }
        Ok(self.data.iter().map(|c| c.re).collect())
    }

    /// Spatial mean (the `k = 0` coefficient).
    pub fn mean(&self) -> Complex64 {
        match self.repr {
            Representation::Spectral => self.data[0],
            Representation::Physical => {
                self.data.iter().sum::<Complex64>() / self.data.len() as f64
            }
        }
    }

    /// Copy with the `k = 0` mode removed.
    pub fn without_mean(&self) -> Field {
        match self.repr {
            Representation::Spectral => {
                let mut out = self.clone();
                out.data[0] = Complex64::new(0.0, 0.0);
                out
            }
            Representation::Physical => {
                let m = self.mean();
                let mut out = self.clone();
                out.data.iter_mut().for_each(|c| *c -= m);
                out
            }
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// `a·self + b·other`, in the representation of `self`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let other = other.to_repr(self.repr);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Field {
            grid: self.grid,
            data,
            repr: self.repr,
        })
    }

    /// Pointwise product of two physical fields.
    pub fn pointwise_mul(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let a = self.to_physical();
        let b = other.to_physical();
        let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
        Ok(Field {
            grid: self.grid,
            data,
            repr: Representation::Physical,
        })
    }

    /// Largest modulus among modes the 2/3 rule would discard.
    pub fn out_of_box_amplitude(&self) -> f64 {
        let spec = self.to_spectral();
        spec.data
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.grid.in_dealiased_box(*i))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    /// Zeroes every mode with some `|k_i| > n/3`.
    pub fn dealias(&self) -> Field {
        let grid = self.grid;
        self.map_spectral(|i, c| {
            if grid.in_dealiased_box(i) {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

impl Add for &Field {
    type Output = Field;

    /// Panics when the grids differ.
    fn add(self, rhs: &Field) -> Field {
        self.lin_comb(1.0, rhs, 1.0).expect("grid mismatch in Field addition")
    }
}

impl Sub for &Field {
    type Output = Field;

    /// Panics when the grids differ.
    fn sub(self, rhs: &Field) -> Field {
        self.lin_comb(1.0, rhs, -1.0)
            .expect("grid mismatch in Field subtraction")
    }
}

impl Mul<f64> for &Field {
    type Output = Field;

    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

pub fn forward_transform(f: &Field) -> Result<Field> {
    if f.repr != Representation::Physical {
        return Err(Error::WrongRepresentation {
            expected: "physical",
            found: f.repr.name(),
        });
    }
    Ok(transform(f, Direction::Forward))
}

pub fn inverse_transform(f: &Field) -> Result<Field> {
    if f.repr != Representation::Spectral {
        return Err(Error::WrongRepresentation {
            expected: "spectral",
            found: f.repr.name(),
        });
    }
    Ok(transform(f, Direction::Inverse))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, Direction), Arc<dyn Fft<f64>>>>> =
        OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("fft plan cache poisoned");
    cache
        .entry((n, direction))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match direction {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

fn transform(f: &Field, direction: Direction) -> Field {
    let grid = f.grid;
    let n = grid.n;
    let fft = plan(n, direction);
    let mut data = f.data.clone();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let total = grid.len();
    for axis in 0..grid.dim {
        let stride = n.pow(axis as u32);
        let block = stride * n;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                if stride == 1 {
                    fft.process_with_scratch(&mut data[base..base + n], &mut scratch);
                } else {
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, value) in line.iter().enumerate() {
                        data[base + j * stride] = *value;
                    }
                }
            }
        }
    }
    let repr = match direction {
        Direction::Forward => {
            let norm = 1.0 / total as f64;
            data.iter_mut().for_each(|c| *c *= norm);
            Representation::Spectral
        }
        Direction::Inverse => Representation::Physical,
    };
    Field { grid, data, repr }
}

/// `d` scalar fields sharing one grid and one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("vector field needs components".into()))?;
        if components.len() != first.grid.dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} components, got {}",
                first.grid.dim,
                components.len()
            )));
        }
        for c in &components[1..] {
            first.grid.check_same(&c.grid)?;
            if c.repr != first.repr {
                return Err(Error::WrongRepresentation {
                    expected: first.repr.name(),
                    found: c.repr.name(),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: Grid, repr: Representation) -> Self {
        Self {
            components: (0..grid.dim).map(|_| Field::zeros(grid, repr)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.components[0].grid
    }

    pub fn repr(&self) -> Representation {
        self.components[0].repr
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    pub fn map(&self, f: impl Fn(&Field) -> Field) -> VectorField {
        Self {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn to_spectral(&self) -> VectorField {
        self.map(Field::to_spectral)
    }

    pub fn to_physical(&self) -> VectorField {
        self.map(Field::to_physical)
    }

    pub fn scale(&self, a: f64) -> VectorField {
        self.map(|c| c.scale(a))
    }

    pub fn apply_table(&self, table: &[f64]) -> VectorField {
        self.map(|c| c.apply_table(table))
    }

    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField> {
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch);
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.lin_comb(a, y, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    /// Pointwise Euclidean modulus `sqrt(Σ_i |u_i|²)` in the current
    /// representation.
    pub fn magnitude(&self) -> Vec<f64> {
        let len = self.grid().len();
        (0..len)
            .map(|j| {
                self.components
                    .iter()
                    .map(|c| c.data[j].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// Largest componentwise sample difference, compared in physical space.
    pub fn max_diff(&self, other: &VectorField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (&a.to_physical() - &b.to_physical()).max_abs())
            .fold(0.0, f64::max)
    }
}
