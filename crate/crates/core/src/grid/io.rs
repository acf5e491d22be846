//! `ASVG` grid files, little-endian:
//!
//! ```text
//! "ASVG" u32 nx u32 ny u32 ntheta
//! f32 x_min x_max y_min y_max
//! f32 gamma u32 iterations f32 residual
//! f32 epsilon (NaN when the margin is not an origin disc)
//! f32 values[nx*ny*ntheta], index ((i*ny)+j)*ntheta+k
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{GridSpec, ValueGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ASVG";

pub fn write_grid<W: Write>(g: &ValueGrid, mut w: W) -> Result<()> {
    let s = &g.spec;
    w.write_all(MAGIC)?;
    for n in [s.nx, s.ny, s.ntheta] {
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    for e in [s.x_min, s.x_max, s.y_min, s.y_max] {
        w.write_f32::<LittleEndian>(e as f32)?;
    }
    w.write_f32::<LittleEndian>(g.gamma as f32)?;
    w.write_u32::<LittleEndian>(g.iterations as u32)?;
    w.write_f32::<LittleEndian>(g.residual as f32)?;
    w.write_f32::<LittleEndian>(g.epsilon.map_or(f32::NAN, |e| e as f32))?;
    for &v in &g.values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

/// Reads a grid; the convergence flag is recomputed from the stored residual against `tol`.
pub fn read_grid<R: Read>(mut r: R, tol: f64) -> Result<ValueGrid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ASVG grid file".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut ext = [0f64; 4];
    for e in &mut ext {
        *e = r.read_f32::<LittleEndian>()? as f64;
    }
    let spec = GridSpec {
        nx: dims[0],
        ny: dims[1],
        ntheta: dims[2],
        x_min: ext[0],
        x_max: ext[1],
        y_min: ext[2],
        y_max: ext[3],
    };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    if spec.len() > 1 << 28 {
        return Err(Error::Format("grid too large".into()));
    }
    let gamma = r.read_f32::<LittleEndian>()? as f64;
    let iterations = r.read_u32::<LittleEndian>()? as usize;
    let residual = r.read_f32::<LittleEndian>()? as f64;
    let eps = r.read_f32::<LittleEndian>()?;
    let mut raw = vec![0f32; spec.len()];
    r.read_f32_into::<LittleEndian>(&mut raw)?;
    Ok(ValueGrid {
        spec,
        values: raw.into_iter().map(f64::from).collect(),
        gamma,
        // Radii are decimal settings; undo the f32 rounding so 0.3 reads back as 0.3.
        epsilon: (!eps.is_nan()).then(|| (eps as f64 * 1e6).round() / 1e6),
        iterations,
        residual,
        converged: residual < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_f32() {
        let spec = GridSpec::cube(5, 1.5);
        let g = ValueGrid {
            spec,
            values: (0..spec.len()).map(|n| (n as f64 * 0.37).sin()).collect(),
            gamma: 0.9999,
            epsilon: Some(0.3),
            iterations: 42,
            residual: 3e-7,
            converged: true,
        };
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 16 + 16 + 4 * spec.len());
        let back = read_grid(buf.as_slice(), 1e-6).unwrap();
        assert_eq!(back.spec.nx, 5);
        assert_eq!(back.iterations, 42);
        assert!(back.converged);
        assert_eq!(back.epsilon, Some(0.3));
        for (a, b) in g.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(read_grid(&buf[..buf.len() - 1], 1e-6).is_err());
    }
}
