//! Homogeneous dyadic partition of unity on the frequency grid, the block
//! operators built from it and the Bony paraproduct split of a product.
//!
//! The bump profile is `χ(ρ) = 1` on `[0, 3/4]`, `0` on `[4/3, ∞)` and a
//! smooth step in between. The block symbol is `φ(ξ) = χ(|ξ|/2) − χ(|ξ|)`,
//! supported in `3/4 ≤ |ξ| ≤ 8/3`, and `φ_l(ξ) = φ(2^{-l}ξ)`. The low lump
//! `ψ(2^{-l_min}ξ)` collects everything below the lowest annulus. On the
//! torus it only touches the mean mode.

use std::ops::RangeInclusive;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation};

const INNER: f64 = 3.0 / 4.0;
const OUTER: f64 = 4.0 / 3.0;

/// Smooth step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// Radial cutoff equal to 1 on `[0, 3/4]` and 0 beyond `4/3`.
pub fn cutoff(rho: f64) -> f64 {
    smooth_step((OUTER - rho) / (OUTER - INNER))
}

/// Annulus symbol `φ(ρ) = χ(ρ/2) − χ(ρ)`.
pub fn annulus_symbol(rho: f64) -> f64 {
    (cutoff(rho / 2.0) - cutoff(rho)).clamp(0.0, 1.0)
}

/// Tabulated partition of unity for one grid.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    grid: Grid,
    l_min: i32,
    l_max: i32,
    phi: Vec<Vec<f64>>,
    psi: Vec<f64>,
}

/// The three pieces of `v·w = T_v w + T_w v + R(v, w)`.
#[derive(Debug, Clone)]
pub struct ParaproductParts {
    pub t_vw: Field,
    pub t_wv: Field,
    pub r_vw: Field,
}

impl ParaproductParts {
    pub fn sum(&self) -> Field {
        &(&self.t_vw + &self.t_wv) + &self.r_vw
    }
}

pub fn build_partition(grid: &Grid) -> Result<DyadicPartition> {
    DyadicPartition::new(grid)
}

impl DyadicPartition {
    pub fn new(grid: &Grid) -> Result<Self> {
        let unit = grid.frequency_unit();
        let dealias_radius = grid.n() as f64 / 3.0 * unit * (1.0 + 1e-12);
        let top = 8.0 / 3.0;
        // Largest annulus that stays inside the 2/3-rule radius.
        let mut l_max = (dealias_radius / top).log2().floor() as i32 + 1;
        while top * 2f64.powi(l_max) > dealias_radius {
            l_max -= 1;
        }
        // Lowest annulus still reaching the first nonzero frequency.
        let mut l_min = (unit / top).log2().floor() as i32 - 1;
        while top * 2f64.powi(l_min) <= unit {
            l_min += 1;
        }
        if l_max - l_min + 1 < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid too coarse for two dyadic annuli (n = {}, scales {}..={})",
                grid.n(),
                l_min,
                l_max
            )));
        }
        let radii: Vec<f64> = (0..grid.len()).map(|i| grid.frequency_norm(i)).collect();
        let phi = (l_min..=l_max)
            .map(|l| {
                let s = 2f64.powi(-l);
                radii.iter().map(|&r| annulus_symbol(r * s)).collect()
            })
            .collect();
        let s = 2f64.powi(-l_min);
        let psi = radii.iter().map(|&r| cutoff(r * s)).collect();
        Ok(Self {
            grid: *grid,
            l_min,
            l_max,
            phi,
            psi,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn l_min(&self) -> i32 {
        self.l_min
    }

    pub fn l_max(&self) -> i32 {
        self.l_max
    }

    pub fn scales(&self) -> RangeInclusive<i32> {
        self.l_min..=self.l_max
    }

    pub fn num_scales(&self) -> usize {
        (self.l_max - self.l_min + 1) as usize
    }

    /// Radius below which the tables sum to one: `(3/2)·2^{l_max}`.
    pub fn band_radius(&self) -> f64 {
        1.5 * 2f64.powi(self.l_max)
    }

    /// Inner and outer radius of the annulus carrying `φ_l`.
    pub fn annulus(l: i32) -> (f64, f64) {
        (INNER * 2f64.powi(l), 8.0 / 3.0 * 2f64.powi(l))
    }

    fn check_scale(&self, l: i32, max: i32) -> Result<()> {
        if l < self.l_min || l > max {
            Err(Error::ScaleOutOfRange {
                l,
                min: self.l_min,
                max,
            })
        } else {
            Ok(())
        }
    }

    /// `φ_l` on the FFT-ordered frequency grid.
    pub fn phi_table(&self, l: i32) -> Result<&[f64]> {
        self.check_scale(l, self.l_max)?;
        Ok(&self.phi[(l - self.l_min) as usize])
    }

    /// The low-frequency lump attached at `l_min`.
    pub fn psi_table(&self) -> &[f64] {
        &self.psi
    }

    /// `ψ + Σ_l φ_l` at one spectral offset.
    pub fn partition_sum(&self, flat: usize) -> f64 {
        self.psi[flat] + self.phi.iter().map(|t| t[flat]).sum::<f64>()
    }

    /// Table of `ψ + Σ_{l' < l} φ_{l'}`; empty sums give zero.
    pub fn low_pass_table(&self, l: i32) -> Vec<f64> {
        let mut table = if l >= self.l_min {
            self.psi.clone()
        } else {
            vec![0.0; self.grid.len()]
        };
        for lp in self.l_min..l.min(self.l_max + 1) {
            let t = &self.phi[(lp - self.l_min) as usize];
            table.iter_mut().zip(t).for_each(|(a, b)| *a += b);
        }
        table
    }

    /// Largest spectral amplitude outside the partition band.
    pub fn out_of_band_amplitude(&self, f: &Field) -> f64 {
        let spec = f.to_spectral();
        let radius = self.band_radius() * (1.0 + 1e-12);
        spec.data()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.frequency_norm(*i) > radius)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    /// Zeroes every mode outside the partition band.
    pub fn band_limit(&self, f: &Field) -> Field {
        let radius = self.band_radius() * (1.0 + 1e-12);
        let grid = self.grid;
        f.map_spectral(|i, c| {
            if grid.frequency_norm(i) <= radius {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

pub fn dyadic_block(f: &Field, l: i32, p: &DyadicPartition) -> Result<Field> {
    if f.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(f.apply_table(p.phi_table(l)?))
}

pub fn low_pass(f: &Field, l: i32, p: &DyadicPartition) -> Result<Field> {
    if f.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    p.check_scale(l, p.l_max + 1)?;
    Ok(f.apply_table(&p.low_pass_table(l)))
}

/// `ψ(D)f + Σ_l Δ̇_l f`.
pub fn reconstruct(f: &Field, p: &DyadicPartition) -> Result<Field> {
    low_pass(f, p.l_max + 1, p)
}

/// Bony decomposition of the dealiased product `v·w`.
///
/// The low lump is treated as the block just below `l_min`, so the three
/// parts add up to the full product for inputs inside the partition band.
pub fn paraproduct(v: &Field, w: &Field, p: &DyadicPartition) -> Result<ParaproductParts> {
    if v.grid() != p.grid() || w.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    let scale = v.max_abs().max(w.max_abs()).max(f64::MIN_POSITIVE);
    for (name, f) in [("v", v), ("w", w)] {
        let out = p.out_of_band_amplitude(f);
        if out > 1e-10 * scale {
            return Err(Error::BandViolation(format!(
                "{name} has spectral amplitude {out:e} beyond radius {:.4}",
                p.band_radius()
            )));
        }
    }
    // Blocks indexed from l_min - 1 (the lump) to l_max, in physical space.
    let blocks = |f: &Field| -> Vec<Field> {
        let spec = f.to_spectral();
        std::iter::once(p.psi_table())
            .chain(p.phi.iter().map(|t| t.as_slice()))
            .map(|t| spec.apply_table(t).to_physical())
            .collect()
    };
    let vb = blocks(v);
    let wb = blocks(w);
    let count = vb.len();
    let zero = Field::zeros(*p.grid(), Representation::Physical);

    // Low-pass sums S_{k-1} = Σ_{j ≤ k-2} b_j for every block index k.
    let prefix = |b: &[Field]| -> Vec<Field> {
        let mut out = Vec::with_capacity(count);
        let mut acc = zero.clone();
        for k in 0..count {
            if k >= 2 {
                acc = &acc + &b[k - 2];
            }
            out.push(acc.clone());
        }
        out
    };
    let vs = prefix(&vb);
    let ws = prefix(&wb);

    let mut t_vw = zero.clone();
    let mut t_wv = zero.clone();
    let mut r_vw = zero.clone();
    for k in 0..count {
        t_vw = &t_vw + &vs[k].pointwise_mul(&wb[k])?;
        t_wv = &t_wv + &ws[k].pointwise_mul(&vb[k])?;
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(count - 1);
        let mut neighbours = wb[lo].clone();
        for b in &wb[lo + 1..=hi] {
            neighbours = &neighbours + b;
        }
        r_vw = &r_vw + &vb[k].pointwise_mul(&neighbours)?;
    }
    let repr = v.repr();
    Ok(ParaproductParts {
        t_vw: t_vw.dealias().to_repr(repr),
        t_wv: t_wv.dealias().to_repr(repr),
        r_vw: r_vw.dealias().to_repr(repr),
    })
}
