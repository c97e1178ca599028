//! Binary field records and trajectory files.
//!
//! A record is the magic `ANF1`, `u32` dimension, one `u32` point count per
//! axis, `f64` side length, `u8` representation tag (0 physical, 1 spectral),
//! then the complex samples as little-endian `f64` pairs with the last axis
//! slowest. A trajectory file is one header followed by every state's
//! components back to back; a JSON sidecar next to it records `nu`, `T` and
//! `steps`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation, VectorField};
use crate::operators::Trajectory;

pub const MAGIC: &[u8; 4] = b"ANF1";

fn write_header<W: Write>(w: &mut W, grid: &Grid, repr: Representation) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for _ in 0..grid.dim() {
        w.write_all(&(grid.n() as u32).to_le_bytes())?;
    }
    w.write_all(&grid.length().to_le_bytes())?;
    w.write_all(&[repr.tag()])?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated {what}: {e}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<(Grid, Representation)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let d = read_u32(r, "dimension")? as usize;
    if !(1..=3).contains(&d) {
        return Err(Error::Format(format!("unsupported dimension {d}")));
    }
    let ns = (0..d)
        .map(|_| read_u32(r, "axis length").map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    if ns.iter().any(|&n| n != ns[0]) {
        return Err(Error::Format(format!("unequal axis lengths {ns:?}")));
    }
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "side length")?;
    let length = f64::from_le_bytes(b);
    let mut tag = [0u8; 1];
    read_exact(r, &mut tag, "representation tag")?;
    let repr = Representation::from_tag(tag[0])
        .ok_or_else(|| Error::Format(format!("unknown representation tag {}", tag[0])))?;
    let grid = Grid::new(d, ns[0], length).map_err(|e| Error::Format(e.to_string()))?;
    Ok((grid, repr))
}

fn write_samples<W: Write>(w: &mut W, data: &[Complex64]) -> Result<()> {
    for c in data {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_samples<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; 16 * count];
    read_exact(r, &mut buf, "samples")?;
    Ok(buf
        .chunks_exact(16)
        .map(|b| {
            Complex64::new(
                f64::from_le_bytes(b[..8].try_into().unwrap()),
                f64::from_le_bytes(b[8..].try_into().unwrap()),
            )
        })
        .collect())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after samples".into())),
    }
}

pub fn write_field_to<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    write_header(w, f.grid(), f.repr())?;
    write_samples(w, f.data())
}

pub fn read_field_from<R: Read>(r: &mut R) -> Result<Field> {
    let (grid, repr) = read_header(r)?;
    let data = read_samples(r, grid.len())?;
    expect_eof(r)?;
    Field::from_data(grid, data, repr)
}

pub fn write_field(path: &Path, f: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field_to(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    read_field_from(&mut BufReader::new(File::open(path)?))
}

/// Time-grid metadata stored beside a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub nu: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, nu: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, traj.grid(), Representation::Spectral)?;
    for s in traj.states() {
        for c in s.components() {
            write_samples(&mut w, c.data())?;
        }
    }
    w.flush()?;
    let meta = TrajectoryMeta {
        nu,
        horizon: traj.horizon(),
        steps: traj.steps(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<(Trajectory, TrajectoryMeta)> {
    let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut r = BufReader::new(File::open(path)?);
    let (grid, repr) = read_header(&mut r)?;
    if repr != Representation::Spectral {
        return Err(Error::Format("trajectory states must be spectral".into()));
    }
    let states = (0..=meta.steps)
        .map(|_| {
            let comps = (0..grid.dim())
                .map(|_| Field::from_data(grid, read_samples(&mut r, grid.len())?, repr))
                .collect::<Result<Vec<_>>>()?;
            VectorField::new(comps)
        })
        .collect::<Result<Vec<_>>>()?;
    expect_eof(&mut r)?;
    if meta.steps == 0 {
        return Err(Error::Format("trajectory needs at least one step".into()));
    }
    let traj = Trajectory::from_states(meta.horizon / meta.steps as f64, states)?;
    Ok((traj, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn header_layout_is_exact() {
        let g = make_grid(2, 8, 2.5).unwrap();
        let mut f = Field::zeros(g, Representation::Spectral);
        f.data_mut()[1] = Complex64::new(1.5, -2.0);
        let mut bytes = Vec::new();
        write_field_to(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"ANF1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &8u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &8u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &2.5f64.to_le_bytes());
        assert_eq!(bytes[24], 1);
        assert_eq!(bytes.len(), 25 + 64 * 16);
        assert_eq!(&bytes[25 + 16..25 + 24], &1.5f64.to_le_bytes());
        let back = read_field_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn malformed_records_are_rejected() {
        let g = make_grid(1, 8, 1.0).unwrap();
        let mut bytes = Vec::new();
        write_field_to(&mut bytes, &Field::zeros(g, Representation::Physical)).unwrap();
        assert!(matches!(read_field_from(&mut &bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_field_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_field_from(&mut long.as_slice()).is_err());
        let mut tag = bytes;
        tag[4 + 4 + 4 + 8] = 7;
        assert!(read_field_from(&mut tag.as_slice()).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(2, 8, 1.0).unwrap();
        let u = VectorField::new(vec![
            Field::from_fn(g, |x| x[0]),
            Field::from_fn(g, |x| x[1] * 2.0),
        ])
        .unwrap();
        let traj = Trajectory::constant(&u, 0.5, 3).unwrap();
        let path = dir.path().join("traj.anf");
        write_trajectory(&path, &traj, 0.7).unwrap();
        let (back, meta) = read_trajectory(&path).unwrap();
        assert_eq!(meta, TrajectoryMeta { nu: 0.7, horizon: 0.5, steps: 3 });
        assert_eq!(back, traj);
    }
}
