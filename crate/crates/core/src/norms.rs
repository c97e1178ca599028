//! Mixed-Lebesgue, mixed-Morrey, Besov-type and time-space norms of
//! discrete fields.
//!
//! The Morrey supremum runs over grid centers (a power-of-two sub-lattice
//! once there would be more than 4096 of them) and over the radii
//! `h, 2h, …, (n/2)h` plus one radius `(L/2)·√d` that covers the whole torus.
//! Balls are closed and use the torus metric.
//!
//! Vector fields are measured through their pointwise Euclidean magnitude.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation, VectorField};
use crate::lpdecomp::DyadicPartition;
use crate::operators::Trajectory;

/// Upper bound on the number of ball centers in a Morrey supremum.
pub const MAX_CENTERS: usize = 4096;

const BALL_TOLERANCE: f64 = 1e-9;

/// JSON value of an exponent, with `"inf"` for infinity.
pub fn inf_value(v: f64) -> serde_json::Value {
    if v.is_infinite() && v > 0.0 {
        serde_json::Value::from("inf")
    } else {
        serde_json::Value::from(v)
    }
}

/// Serde helpers writing infinite exponents as the string `"inf"`.
pub mod serde_inf {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                    other => other
                        .parse()
                        .map_err(|_| E::custom(format!("invalid exponent {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }

    /// Same convention for vectors of exponents.
    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|&x| Wrap(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
        }
    }
}

/// Which side of the Fourier transform the block norms are taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    PhysicalBesov,
    FourierBesov,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::PhysicalBesov => "physical-besov",
            Flavor::FourierBesov => "fourier-besov",
        })
    }
}

/// Index bundle `(q, λ, r, regularity)` naming one Besov-type space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(with = "serde_inf")]
    pub r: f64,
    pub regularity: f64,
    pub flavor: Flavor,
}

/// `Σ (1 − λ_i)/q_i`.
pub fn scaling_exponent(q: &[f64], lambda: &[f64]) -> f64 {
    q.iter().zip(lambda).map(|(q, l)| (1.0 - l) / q).sum()
}

/// `Σ (1 − (1 − λ_i)/q_i)`.
pub fn dual_scaling_exponent(q: &[f64], lambda: &[f64]) -> f64 {
    q.iter().zip(lambda).map(|(q, l)| 1.0 - (1.0 - l) / q).sum()
}

fn validate_indices(q: &[f64], lambda: &[f64]) -> Result<()> {
    if q.len() != lambda.len() || q.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "q has {} entries but lambda has {}",
            q.len(),
            lambda.len()
        )));
    }
    if let Some(x) = q.iter().find(|x| !(x.is_finite() && **x >= 1.0)) {
        return Err(Error::InvalidParameter(format!("q entries must lie in [1, inf), got {x}")));
    }
    if let Some(x) = lambda.iter().find(|x| !(**x >= 0.0 && **x < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "lambda entries must lie in [0, 1), got {x}"
        )));
    }
    Ok(())
}

impl SpaceParams {
    pub fn new(q: Vec<f64>, lambda: Vec<f64>, r: f64, regularity: f64, flavor: Flavor) -> Result<Self> {
        let p = Self {
            q,
            lambda,
            r,
            regularity,
            flavor,
        };
        p.validate()?;
        Ok(p)
    }

    /// The scaling-critical space for the given indices: regularity
    /// `−1 + Σ(1−λ_i)/q_i` (physical) or `−1 + Σ(1 − (1−λ_i)/q_i)` (Fourier).
    pub fn critical(q: Vec<f64>, lambda: Vec<f64>, r: f64, flavor: Flavor) -> Result<Self> {
        validate_indices(&q, &lambda)?;
        let regularity = match flavor {
            Flavor::PhysicalBesov => -1.0 + scaling_exponent(&q, &lambda),
            Flavor::FourierBesov => -1.0 + dual_scaling_exponent(&q, &lambda),
        };
        let p = Self::new(q, lambda, r, regularity, flavor)?;
        p.check_solver_admissible()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        validate_indices(&self.q, &self.lambda)?;
        if !(self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!("r must lie in [1, inf], got {}", self.r)));
        }
        if !self.regularity.is_finite() {
            return Err(Error::InvalidParameter("regularity must be finite".into()));
        }
        Ok(())
    }

    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if self.q.len() != d {
            return Err(Error::InvalidParameter(format!(
                "parameters have {} axes but the grid has {d}",
                self.q.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn scaling_exponent(&self) -> f64 {
        scaling_exponent(&self.q, &self.lambda)
    }

    pub fn dual_scaling_exponent(&self) -> f64 {
        dual_scaling_exponent(&self.q, &self.lambda)
    }

    /// Regularity tied to the indices by the Navier-Stokes scaling.
    pub fn critical_regularity(&self) -> f64 {
        match self.flavor {
            Flavor::PhysicalBesov => -1.0 + self.scaling_exponent(),
            Flavor::FourierBesov => -1.0 + self.dual_scaling_exponent(),
        }
    }

    /// Requirements for the fixed-point solver: critical regularity and a
    /// positive scaling sum.
    pub fn check_solver_admissible(&self) -> Result<()> {
        self.validate()?;
        let (sum, name) = match self.flavor {
            Flavor::PhysicalBesov => (self.scaling_exponent(), "sum (1-lambda_i)/q_i"),
            Flavor::FourierBesov => (self.dual_scaling_exponent(), "sum (1-(1-lambda_i)/q_i)"),
        };
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {sum}")));
        }
        let expected = -1.0 + sum;
        if (self.regularity - expected).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "regularity {} differs from the critical value {expected}",
                self.regularity
            )));
        }
        Ok(())
    }

    pub fn with_regularity(&self, regularity: f64) -> Self {
        Self {
            regularity,
            ..self.clone()
        }
    }

    pub fn with_r(&self, r: f64) -> Self {
        Self { r, ..self.clone() }
    }

    /// Block norm matching the flavor.
    pub fn block_norm(&self) -> BlockNorm {
        match self.flavor {
            Flavor::PhysicalBesov => BlockNorm::Morrey {
                q: self.q.clone(),
                lambda: self.lambda.clone(),
            },
            Flavor::FourierBesov => BlockNorm::FourierMorrey {
                q: self.q.clone(),
                lambda: self.lambda.clone(),
            },
        }
    }
}

/// Ball attaining a Morrey supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallArgmax {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Besov-type norm with its per-scale weighted block norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub per_scale: BTreeMap<i32, f64>,
    pub ball_argmax: Option<BallArgmax>,
}

/// Morrey supremum together with its maximizing ball.
#[derive(Debug, Clone, PartialEq)]
pub struct MorreyValue {
    pub value: f64,
    pub ball: BallArgmax,
}

/// `ℓ^r` norm of nonnegative values, computed relative to the maximum.
pub fn lr_norm(values: &[f64], r: f64) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    if r.is_infinite() || max == 0.0 || !max.is_finite() {
        return max;
    }
    max * values.iter().map(|v| (v / max).powf(r)).sum::<f64>().powf(1.0 / r)
}

fn check_exponents(p: &[f64], d: usize) -> Result<()> {
    if p.len() != d {
        return Err(Error::InvalidParameter(format!(
            "expected {d} exponents, got {}",
            p.len()
        )));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 1.0)) {
        return Err(Error::InvalidParameter(format!("exponents must be at least 1, got {x}")));
    }
    Ok(())
}

fn require_physical(f: &Field) -> Result<()> {
    if f.repr() != Representation::Physical {
        return Err(Error::WrongRepresentation {
            expected: "physical",
            found: f.repr().name(),
        });
    }
    Ok(())
}

fn moduli(f: &Field) -> Vec<f64> {
    f.data().iter().map(|c| c.norm()).collect()
}

/// Iterated discrete norm of grid values with spacing `h`, axis 0 innermost.
pub fn mixed_lebesgue_values(values: &[f64], n: usize, h: f64, p: &[f64]) -> f64 {
    let mut current: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    for &pa in p {
        current = current
            .chunks(n)
            .map(|row| {
                if pa.is_infinite() {
                    row.iter().copied().fold(0.0, f64::max)
                } else {
                    let m = row.iter().copied().fold(0.0, f64::max);
                    if m == 0.0 {
                        0.0
                    } else {
                        m * (h * row.iter().map(|v| (v / m).powf(pa)).sum::<f64>()).powf(1.0 / pa)
                    }
                }
            })
            .collect();
    }
    current[0]
}

pub fn mixed_lebesgue_norm(f: &Field, p: &[f64]) -> Result<f64> {
    require_physical(f)?;
    let g = f.grid();
    check_exponents(p, g.dim())?;
    Ok(mixed_lebesgue_values(&moduli(f), g.n(), g.spacing(), p))
}

pub fn mixed_lebesgue_norm_vector(u: &VectorField, p: &[f64]) -> Result<f64> {
    let u = u.to_physical();
    let g = u.grid();
    check_exponents(p, g.dim())?;
    Ok(mixed_lebesgue_values(&u.magnitude(), g.n(), g.spacing(), p))
}

/// Radii of the Morrey supremum in grid units.
pub fn morrey_radii(n: usize, d: usize) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut rho = 1usize;
    while rho <= n / 2 {
        radii.push(rho as f64);
        rho *= 2;
    }
    let cover = (n as f64 / 2.0) * (d as f64).sqrt();
    if cover > *radii.last().unwrap_or(&0.0) + 1e-12 {
        radii.push(cover);
    }
    radii
}

/// Center stride: smallest power of two keeping at most `MAX_CENTERS`.
pub fn center_stride(n: usize, d: usize) -> usize {
    let mut s = 1;
    while (n / s).pow(d as u32) > MAX_CENTERS && s < n {
        s *= 2;
    }
    s
}

struct BallEngine {
    n: usize,
    dim: usize,
    h: f64,
    q: [f64; 3],
    prefix: Vec<f64>,
}

impl BallEngine {
    fn new(values: &[f64], n: usize, dim: usize, h: f64, q: &[f64]) -> Self {
        let mut qq = [1.0; 3];
        qq[..dim].copy_from_slice(q);
        let rows = values.len() / n;
        let mut prefix = vec![0.0; rows * (n + 1)];
        for r in 0..rows {
            let base = r * (n + 1);
            for j in 0..n {
                prefix[base + j + 1] = prefix[base + j] + values[r * n + j].powf(qq[0]);
            }
        }
        Self {
            n,
            dim,
            h,
            q: qq,
            prefix,
        }
    }

    /// `Σ |f|^{q_0}` over the cyclic chord `c - w ..= c + w` of one row.
    fn chord(&self, row: usize, c: usize, w: usize) -> f64 {
        let n = self.n;
        let p = &self.prefix[row * (n + 1)..(row + 1) * (n + 1)];
        if 2 * w + 1 >= n {
            return p[n];
        }
        let lo = c as isize - w as isize;
        let hi = c + w;
        if lo < 0 {
            let lo = (lo + n as isize) as usize;
            p[hi + 1] + (p[n] - p[lo])
        } else if hi >= n {
            (p[n] - p[lo as usize]) + p[hi - n + 1]
        } else {
            p[hi + 1] - p[lo as usize]
        }
    }

    /// Indices along one axis within squared distance `rem` of `c`, with
    /// their squared torus distance.
    fn axis_offsets(&self, c: usize, rem: f64) -> Vec<(usize, f64)> {
        let n = self.n;
        let w = (rem + BALL_TOLERANCE).sqrt().floor() as usize;
        if 2 * w + 1 >= n {
            (0..n)
                .filter_map(|j| {
                    let d = (j as isize - c as isize).unsigned_abs();
                    let d = d.min(n - d) as f64;
                    (d * d <= rem + BALL_TOLERANCE).then_some((j, d * d))
                })
                .collect()
        } else {
            (-(w as isize)..=w as isize)
                .map(|o| {
                    let j = (c as isize + o).rem_euclid(n as isize) as usize;
                    (j, (o * o) as f64)
                })
                .collect()
        }
    }

    /// Mixed norm of `f·χ_B` for the ball of squared radius `rho2` (grid
    /// units) around `center`.
    fn ball_norm(&self, center: &[usize; 3], rho2: f64) -> f64 {
        let h = self.h;
        let n = self.n;
        let q = self.q;
        let row_width = |rem: f64| (rem + BALL_TOLERANCE).sqrt().floor() as usize;
        match self.dim {
            1 => (h * self.chord(0, center[0], row_width(rho2))).powf(1.0 / q[0]),
            2 => {
                let e = q[1] / q[0];
                let acc: f64 = self
                    .axis_offsets(center[1], rho2)
                    .into_iter()
                    .map(|(j1, d1)| (h * self.chord(j1, center[0], row_width(rho2 - d1))).powf(e))
                    .sum();
                (h * acc).powf(1.0 / q[1])
            }
            _ => {
                let e1 = q[1] / q[0];
                let e2 = q[2] / q[1];
                let acc: f64 = self
                    .axis_offsets(center[2], rho2)
                    .into_iter()
                    .map(|(j2, d2)| {
                        let inner: f64 = self
                            .axis_offsets(center[1], rho2 - d2)
                            .into_iter()
                            .map(|(j1, d1)| {
                                let w = row_width(rho2 - d2 - d1);
                                (h * self.chord(j1 + n * j2, center[0], w)).powf(e1)
                            })
                            .sum();
                        (h * inner).powf(e2)
                    })
                    .sum();
                (h * acc).powf(1.0 / q[2])
            }
        }
    }
}

/// Mixed-Morrey supremum of nonnegative grid values.
pub fn mixed_morrey_values(grid: &Grid, values: &[f64], q: &[f64], lambda: &[f64]) -> Result<MorreyValue> {
    validate_indices(q, lambda)?;
    let d = grid.dim();
    check_exponents(q, d)?;
    let n = grid.n();
    let h = grid.spacing();
    let weight_exp: f64 = lambda.iter().zip(q).map(|(l, q)| l / q).sum();
    let engine = BallEngine::new(values, n, d, h, q);
    let radii = morrey_radii(n, d);
    let stride = center_stride(n, d);
    let per_axis = n / stride;
    let count = per_axis.pow(d as u32);

    let best: Vec<(f64, usize)> = (0..count)
        .into_par_iter()
        .map(|ci| {
            let mut center = [0usize; 3];
            let mut rest = ci;
            for slot in center.iter_mut().take(d) {
                *slot = (rest % per_axis) * stride;
                rest /= per_axis;
            }
            let mut top = (f64::NEG_INFINITY, 0usize);
            for (ri, &rho) in radii.iter().enumerate() {
                let v = engine.ball_norm(&center, rho * rho) * (rho * h).powf(-weight_exp);
                if v > top.0 {
                    top = (v, ri);
                }
            }
            top
        })
        .collect();

    let (mut value, mut arg) = (f64::NEG_INFINITY, (0usize, 0usize));
    for (ci, &(v, ri)) in best.iter().enumerate() {
        if v > value {
            value = v;
            arg = (ci, ri);
        }
    }
    let mut center = Vec::with_capacity(d);
    let mut rest = arg.0;
    for _ in 0..d {
        center.push(((rest % per_axis) * stride) as f64 * h);
        rest /= per_axis;
    }
    Ok(MorreyValue {
        value: value.max(0.0),
        ball: BallArgmax {
            center,
            radius: radii[arg.1] * h,
        },
    })
}

pub fn mixed_morrey_norm(f: &Field, q: &[f64], lambda: &[f64]) -> Result<f64> {
    require_physical(f)?;
    Ok(mixed_morrey_values(f.grid(), &moduli(f), q, lambda)?.value)
}

pub fn mixed_morrey_norm_vector(u: &VectorField, q: &[f64], lambda: &[f64]) -> Result<f64> {
    let u = u.to_physical();
    Ok(mixed_morrey_values(u.grid(), &u.magnitude(), q, lambda)?.value)
}

/// Norm applied to each dyadic piece of a Besov-type norm.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockNorm {
    /// Mixed-Morrey norm of the block in physical space.
    Morrey { q: Vec<f64>, lambda: Vec<f64> },
    /// Mixed-Lebesgue norm of the block in physical space.
    Lebesgue { p: Vec<f64> },
    /// Mixed-Morrey norm of `φ_l ĝ` on the frequency grid.
    FourierMorrey { q: Vec<f64>, lambda: Vec<f64> },
    /// Mixed-Lebesgue norm of `φ_l ĝ` on the frequency grid.
    FourierLebesgue { p: Vec<f64> },
}

impl BlockNorm {
    fn dim(&self) -> usize {
        match self {
            BlockNorm::Morrey { q, .. } | BlockNorm::FourierMorrey { q, .. } => q.len(),
            BlockNorm::Lebesgue { p } | BlockNorm::FourierLebesgue { p } => p.len(),
        }
    }

    fn exponents(&self) -> &[f64] {
        match self {
            BlockNorm::Morrey { q, .. } | BlockNorm::FourierMorrey { q, .. } => q,
            BlockNorm::Lebesgue { p } | BlockNorm::FourierLebesgue { p } => p,
        }
    }

    fn is_fourier(&self) -> bool {
        matches!(self, BlockNorm::FourierMorrey { .. } | BlockNorm::FourierLebesgue { .. })
    }

    /// Norm of the localized pieces `table · ĝ_i` of all components.
    fn measure(&self, spectra: &[&Field], table: &[f64]) -> Result<MorreyValue> {
        let grid = *spectra[0].grid();
        let silent = spectra.iter().all(|f| {
            f.data()
                .iter()
                .zip(table)
                .all(|(c, &w)| w == 0.0 || (c.re == 0.0 && c.im == 0.0))
        });
        if silent {
            check_exponents(self.exponents(), grid.dim())?;
            return Ok(MorreyValue {
                value: 0.0,
                ball: BallArgmax {
                    center: vec![0.0; grid.dim()],
                    radius: 0.0,
                },
            });
        }
        let values: Vec<f64> = if self.is_fourier() {
            (0..grid.len())
                .map(|j| {
                    let s: f64 = spectra.iter().map(|f| f.data()[j].norm_sqr()).sum();
                    table[j] * s.sqrt()
                })
                .collect()
        } else {
            let blocks: Vec<Field> = spectra
                .iter()
                .map(|f| f.apply_table(table).to_physical())
                .collect();
            (0..grid.len())
                .map(|j| blocks.iter().map(|b| b.data()[j].norm_sqr()).sum::<f64>().sqrt())
                .collect()
        };
        let target = if self.is_fourier() {
            grid.frequency_grid()
        } else {
            grid
        };
        match self {
            BlockNorm::Morrey { q, lambda } | BlockNorm::FourierMorrey { q, lambda } => {
                mixed_morrey_values(&target, &values, q, lambda)
            }
            BlockNorm::Lebesgue { p } | BlockNorm::FourierLebesgue { p } => {
                check_exponents(p, grid.dim())?;
                Ok(MorreyValue {
                    value: mixed_lebesgue_values(&values, grid.n(), target.spacing(), p),
                    ball: BallArgmax {
                        center: vec![0.0; grid.dim()],
                        radius: f64::INFINITY,
                    },
                })
            }
        }
    }
}

/// Unweighted block norms `‖Δ̇_l g‖` for every supported scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNorms {
    pub scales: Vec<i32>,
    pub values: Vec<MorreyValue>,
}

impl BlockNorms {
    /// Weight by `2^{l·regularity}` and aggregate in `ℓ^r`.
    pub fn report(&self, regularity: f64, r: f64) -> NormReport {
        let weighted: Vec<f64> = self
            .scales
            .iter()
            .zip(&self.values)
            .map(|(&l, v)| 2f64.powf(l as f64 * regularity) * v.value)
            .collect();
        let arg = weighted
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        NormReport {
            value: lr_norm(&weighted, r),
            per_scale: self.scales.iter().copied().zip(weighted.iter().copied()).collect(),
            ball_argmax: self.values.get(arg).map(|v| v.ball.clone()),
        }
    }

    pub fn raw(&self, l: i32) -> Option<f64> {
        self.scales.iter().position(|&s| s == l).map(|i| self.values[i].value)
    }
}

fn check_components(comps: &[Field], p: &DyadicPartition, block: &BlockNorm) -> Result<()> {
    if comps.is_empty() {
        return Err(Error::InvalidParameter("no field components".into()));
    }
    if comps.iter().any(|c| c.grid() != p.grid()) {
        return Err(Error::GridMismatch);
    }
    if block.dim() != p.grid().dim() {
        return Err(Error::InvalidParameter(format!(
            "exponents have {} axes but the grid has {}",
            block.dim(),
            p.grid().dim()
        )));
    }
    Ok(())
}

/// Block norms of a scalar or vector field (given by its components).
pub fn block_norms(comps: &[Field], block: &BlockNorm, p: &DyadicPartition) -> Result<BlockNorms> {
    check_components(comps, p, block)?;
    let spectra: Vec<Field> = comps.iter().map(|c| c.to_spectral()).collect();
    let refs: Vec<&Field> = spectra.iter().collect();
    let scales: Vec<i32> = p.scales().collect();
    let values = scales
        .iter()
        .map(|&l| block.measure(&refs, p.phi_table(l)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockNorms { scales, values })
}

/// General Besov-type norm `‖(2^{l·reg} ‖block_l‖)_l‖_{ℓ^r}`.
pub fn besov_type_norm(
    comps: &[Field],
    block: &BlockNorm,
    regularity: f64,
    r: f64,
    p: &DyadicPartition,
) -> Result<NormReport> {
    Ok(block_norms(comps, block, p)?.report(regularity, r))
}

fn flavored(comps: &[Field], params: &SpaceParams, p: &DyadicPartition, flavor: Flavor) -> Result<NormReport> {
    params.validate()?;
    if params.flavor != flavor {
        return Err(Error::InvalidParameter(format!(
            "expected {flavor} parameters, got {}",
            params.flavor
        )));
    }
    besov_type_norm(comps, &params.block_norm(), params.regularity, params.r, p)
}

pub fn besov_mixed_morrey_norm(f: &Field, params: &SpaceParams, p: &DyadicPartition) -> Result<NormReport> {
    flavored(std::slice::from_ref(f), params, p, Flavor::PhysicalBesov)
}

pub fn fourier_besov_mixed_morrey_norm(
    f: &Field,
    params: &SpaceParams,
    p: &DyadicPartition,
) -> Result<NormReport> {
    flavored(std::slice::from_ref(f), params, p, Flavor::FourierBesov)
}

/// Norm of a vector field in the space named by `params` (either flavor).
pub fn space_norm(u: &VectorField, params: &SpaceParams, p: &DyadicPartition) -> Result<NormReport> {
    flavored(u.components(), params, p, params.flavor)
}

/// Same for a scalar field.
pub fn space_norm_scalar(f: &Field, params: &SpaceParams, p: &DyadicPartition) -> Result<NormReport> {
    flavored(std::slice::from_ref(f), params, p, params.flavor)
}

/// Unweighted block norms of every state of a trajectory: `table[t][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBlockTable {
    pub scales: Vec<i32>,
    pub dt: f64,
    pub rows: Vec<Vec<f64>>,
}

impl TimeBlockTable {
    pub fn build(traj: &Trajectory, block: &BlockNorm, p: &DyadicPartition) -> Result<Self> {
        if traj.grid() != p.grid() {
            return Err(Error::GridMismatch);
        }
        let rows = traj
            .states()
            .par_iter()
            .map(|u| {
                block_norms(u.components(), block, p)
                    .map(|b| b.values.into_iter().map(|v| v.value).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scales: p.scales().collect(),
            dt: traj.dt(),
            rows,
        })
    }

    /// Time norm of each scale's block norm (`a = ∞` max, `a = 1` trapezoid).
    pub fn time_norms(&self, a: f64) -> Result<Vec<f64>> {
        let count = self.scales.len();
        if a.is_infinite() {
            Ok((0..count)
                .map(|k| self.rows.iter().map(|r| r[k]).fold(0.0, f64::max))
                .collect())
        } else if a == 1.0 {
            let m = self.rows.len();
            Ok((0..count)
                .map(|k| {
                    if m < 2 {
                        return 0.0;
                    }
                    let inner: f64 = self.rows[1..m - 1].iter().map(|r| r[k]).sum();
                    self.dt * (inner + 0.5 * (self.rows[0][k] + self.rows[m - 1][k]))
                })
                .collect())
        } else {
            Err(Error::InvalidParameter(format!(
                "time exponent must be 1 or inf, got {a}"
            )))
        }
    }

    /// `‖(2^{l·reg} ‖block_l‖_{L^a_t})_l‖_{ℓ^r}`.
    pub fn norm(&self, a: f64, regularity: f64, r: f64) -> Result<f64> {
        let per_scale = self.time_norms(a)?;
        let weighted: Vec<f64> = self
            .scales
            .iter()
            .zip(per_scale)
            .map(|(&l, v)| 2f64.powf(l as f64 * regularity) * v)
            .collect();
        Ok(lr_norm(&weighted, r))
    }

    /// `max(L^∞_t at reg, L^1_t at reg + 2)`.
    pub fn z_norm(&self, regularity: f64, r: f64) -> Result<f64> {
        Ok(self
            .norm(f64::INFINITY, regularity, r)?
            .max(self.norm(1.0, regularity + 2.0, r)?))
    }
}

pub fn timespace_norm(traj: &Trajectory, a: f64, params: &SpaceParams, p: &DyadicPartition) -> Result<f64> {
    params.validate()?;
    if !(a.is_infinite() || a == 1.0) {
        return Err(Error::InvalidParameter(format!(
            "time exponent must be 1 or inf, got {a}"
        )));
    }
    TimeBlockTable::build(traj, &params.block_norm(), p)?.norm(a, params.regularity, params.r)
}

/// Norm of the solution space: the larger of the `L^∞_t` norm at the critical
/// regularity and the `L^1_t` norm two derivatives up.
pub fn z_norm(traj: &Trajectory, params: &SpaceParams, p: &DyadicPartition, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    params.check_solver_admissible()?;
    TimeBlockTable::build(traj, &params.block_norm(), p)?.z_norm(params.regularity, params.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::lpdecomp::build_partition;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;
    use std::f64::consts::PI;

    fn random_values(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    fn real_field(grid: Grid, values: &[f64]) -> Field {
        Field::from_data(
            grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            Representation::Physical,
        )
        .unwrap()
    }

    /// Brute-force Morrey supremum: every center, every radius, explicit
    /// indicator and explicit iterated sums.
    fn brute_morrey(grid: &Grid, values: &[f64], q: &[f64], lambda: &[f64]) -> f64 {
        let n = grid.n();
        let d = grid.dim();
        let h = grid.spacing();
        let w: f64 = lambda.iter().zip(q).map(|(l, q)| l / q).sum();
        let mut best: f64 = 0.0;
        for c in 0..grid.len() {
            let cm = grid.multi_index(c);
            for rho in morrey_radii(n, d) {
                let masked: Vec<f64> = (0..grid.len())
                    .map(|j| {
                        let jm = grid.multi_index(j);
                        let dist2: f64 = (0..d)
                            .map(|a| {
                                let t = (jm[a] as isize - cm[a] as isize).unsigned_abs();
                                let t = t.min(n - t) as f64;
                                t * t
                            })
                            .sum();
                        if dist2 <= rho * rho + 1e-9 {
                            values[j].abs()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let v = mixed_lebesgue_values(&masked, n, h, q) * (rho * h).powf(-w);
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn lr_norm_cases() {
        assert_eq!(lr_norm(&[3.0, 4.0], 2.0), 5.0);
        assert_eq!(lr_norm(&[3.0, 4.0], f64::INFINITY), 4.0);
        assert_eq!(lr_norm(&[0.0, 0.0], 1.0), 0.0);
        assert!((lr_norm(&[1e300, 1e300], 1.0) - 2e300).abs() < 1e286);
    }

    #[test]
    fn uniform_exponents_give_plain_lp() {
        let g = make_grid(2, 16, 2.0).unwrap();
        let v = random_values(g.len(), 1);
        let f = real_field(g, &v);
        let h = g.spacing();
        let direct = (v.iter().map(|x| x.abs().powi(3)).sum::<f64>() * h * h).powf(1.0 / 3.0);
        let mixed = mixed_lebesgue_norm(&f, &[3.0, 3.0]).unwrap();
        assert!((mixed - direct).abs() < 1e-12 * direct);
        let sup = mixed_lebesgue_norm(&f, &[f64::INFINITY, f64::INFINITY]).unwrap();
        assert_eq!(sup, v.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }

    #[test]
    fn box_indicator_norm() {
        let g = make_grid(2, 32, 1.0).unwrap();
        let h = g.spacing();
        let (a0, a1) = (5usize, 12usize);
        let f = Field::from_fn(g, |x| {
            if x[0] < a0 as f64 * h - 1e-12 && x[1] < a1 as f64 * h - 1e-12 {
                1.0
            } else {
                0.0
            }
        });
        let p = [2.0, 5.0];
        let expected = (a0 as f64 * h).powf(1.0 / p[0]) * (a1 as f64 * h).powf(1.0 / p[1]);
        assert!((mixed_lebesgue_norm(&f, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn exponent_validation() {
        let g = make_grid(2, 8, 1.0).unwrap();
        let f = Field::zeros(g, Representation::Physical);
        assert!(mixed_lebesgue_norm(&f, &[0.5, 2.0]).is_err());
        assert!(mixed_lebesgue_norm(&f, &[2.0]).is_err());
        assert!(mixed_morrey_norm(&f, &[2.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(mixed_lebesgue_norm(&Field::zeros(g, Representation::Spectral), &[2.0, 2.0]).is_err());
    }

    #[test]
    fn morrey_engine_matches_brute_force() {
        for (d, n, seed) in [(1usize, 16usize, 1u64), (2, 8, 2), (2, 16, 3), (3, 8, 4)] {
            let g = make_grid(d, n, 1.7).unwrap();
            let v = random_values(g.len(), seed);
            let q: Vec<f64> = [1.5, 3.0, 2.0][..d].to_vec();
            let l: Vec<f64> = [0.3, 0.6, 0.1][..d].to_vec();
            let fast = mixed_morrey_values(&g, &v.iter().map(|x| x.abs()).collect::<Vec<_>>(), &q, &l)
                .unwrap()
                .value;
            let slow = brute_morrey(&g, &v, &q, &l);
            assert!((fast - slow).abs() <= 1e-12 * slow, "d={d} n={n}: {fast} vs {slow}");
        }
    }

    #[test]
    fn morrey_with_zero_lambda_is_lebesgue() {
        let g = make_grid(2, 16, 2.0 * PI).unwrap();
        let f = real_field(g, &random_values(g.len(), 5));
        let q = [2.0, 4.0];
        let m = mixed_morrey_norm(&f, &q, &[0.0, 0.0]).unwrap();
        let l = mixed_lebesgue_norm(&f, &q).unwrap();
        assert!((m - l).abs() < 1e-12 * l);
    }

    #[test]
    fn center_stride_budget() {
        assert_eq!(center_stride(64, 2), 1);
        assert_eq!(center_stride(128, 2), 2);
        assert_eq!(center_stride(32, 3), 2);
    }

    #[test]
    fn params_serialize_infinite_r() {
        let p = SpaceParams::new(vec![2.0, 3.0], vec![0.5, 0.25], f64::INFINITY, -0.5, Flavor::PhysicalBesov)
            .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"r\":\"inf\""), "{s}");
        let back: SpaceParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn critical_params() {
        let p = SpaceParams::critical(vec![2.0, 2.0], vec![0.5, 0.5], 1.0, Flavor::PhysicalBesov).unwrap();
        assert!((p.regularity + 0.5).abs() < 1e-15);
        let f = SpaceParams::critical(vec![2.0, 2.0], vec![0.5, 0.5], 1.0, Flavor::FourierBesov).unwrap();
        assert!((f.regularity - 0.5).abs() < 1e-15);
        assert!(SpaceParams::critical(vec![1.0, 1.0], vec![0.9, 0.95], 1.0, Flavor::PhysicalBesov).is_ok());
        assert!(p.with_regularity(0.3).check_solver_admissible().is_err());
    }

    #[test]
    fn besov_of_zero_and_single_mode() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let p = build_partition(&g).unwrap();
        let params = SpaceParams::new(vec![2.0, 3.0], vec![0.5, 0.2], 2.0, 0.7, Flavor::PhysicalBesov).unwrap();
        let zero = Field::zeros(g, Representation::Physical);
        assert_eq!(besov_mixed_morrey_norm(&zero, &params, &p).unwrap().value, 0.0);

        // k = (1, 0) has |ξ| = 1, inside the annuli of scales -1 and 0 only.
        let k = [1i64, 0, 0];
        let mode = Field::from_modes(g, |m| if *m == k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        let at = g.mode_offset(&k);
        let report = besov_mixed_morrey_norm(&mode, &params, &p).unwrap();
        let plain = mixed_morrey_norm(&mode.to_physical(), &params.q, &params.lambda).unwrap();
        let mut expected = Vec::new();
        for l in p.scales() {
            let phi = p.phi_table(l).unwrap()[at];
            let w = 2f64.powf(l as f64 * params.regularity) * phi * plain;
            assert!((report.per_scale[&l] - w).abs() < 1e-12 * plain);
            expected.push(w);
        }
        assert!((report.value - lr_norm(&expected, 2.0)).abs() < 1e-12);

        let fparams = params.with_regularity(0.4);
        let fparams = SpaceParams { flavor: Flavor::FourierBesov, ..fparams };
        let coef = Complex64::new(0.6, -0.8) * 2.5;
        let scaled = Field::from_modes(g, |m| if *m == k { coef } else { Complex64::new(0.0, 0.0) });
        let fr = fourier_besov_mixed_morrey_norm(&scaled, &fparams, &p).unwrap();
        let fg = g.frequency_grid();
        let mut one_point = vec![0.0; g.len()];
        one_point[at] = 1.0;
        let indicator = brute_morrey(&fg, &one_point, &fparams.q, &fparams.lambda);
        for l in p.scales() {
            let phi = p.phi_table(l).unwrap()[at];
            let w = 2f64.powf(l as f64 * 0.4) * phi * 2.5 * indicator;
            assert!((fr.per_scale[&l] - w).abs() < 1e-12 * indicator.max(1.0));
        }
        assert!(besov_mixed_morrey_norm(&mode, &fparams, &p).is_err());
    }

    fn random_band_field(g: Grid, seed: u64) -> Field {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let spec = Field::from_modes(g, |k| {
            let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            if r > 0.0 && r < 6.0 {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let phys = spec.to_physical();
        let re: Vec<f64> = phys.data().iter().map(|c| c.re).collect();
        real_field(g, &re)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn report_is_consistent_and_monotone_in_r(seed in 0u64..100_000) {
            let g = make_grid(2, 16, 2.0 * PI).unwrap();
            let p = build_partition(&g).unwrap();
            let f = random_band_field(g, seed);
            let params = SpaceParams::new(vec![2.0, 1.5], vec![0.4, 0.1], 1.0, -0.3, Flavor::PhysicalBesov).unwrap();
            let one = besov_mixed_morrey_norm(&f, &params, &p).unwrap();
            let two = besov_mixed_morrey_norm(&f, &params.with_r(2.0), &p).unwrap();
            let inf = besov_mixed_morrey_norm(&f, &params.with_r(f64::INFINITY), &p).unwrap();
            prop_assert!(inf.value <= two.value && two.value <= one.value);
            let per: Vec<f64> = one.per_scale.values().copied().collect();
            prop_assert!((lr_norm(&per, 1.0) - one.value).abs() <= 1e-12 * one.value);
        }

        #[test]
        fn morrey_homogeneity_and_triangle(seed in 0u64..100_000, a in -3.0f64..3.0) {
            let g = make_grid(2, 16, 1.0).unwrap();
            let f = real_field(g, &random_values(g.len(), seed));
            let k = real_field(g, &random_values(g.len(), seed + 1));
            let q = [2.0, 3.0];
            let l = [0.5, 0.25];
            let nf = mixed_morrey_norm(&f, &q, &l).unwrap();
            let nk = mixed_morrey_norm(&k, &q, &l).unwrap();
            let scaled = mixed_morrey_norm(&f.scale(a), &q, &l).unwrap();
            prop_assert!((scaled - a.abs() * nf).abs() <= 1e-10 * nf.max(1.0));
            let sum = mixed_morrey_norm(&(&f + &k), &q, &l).unwrap();
            prop_assert!(sum <= nf + nk + 1e-10);
        }
    }
}
