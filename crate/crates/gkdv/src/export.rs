//! Snapshot export formats.
//!
//! CSV: header `t,x,u`, one row per grid point, 17 significant digits.
//!
//! Binary dump layout (all integers/floats little-endian):
//!
//! ```text
//! bytes 0..8   magic b"GKDVBIN1"
//! bytes 8..16  n_points as u64
//! bytes 16..24 length as f64
//! bytes 24..32 count (number of snapshots) as u64
//! then per snapshot: time as f64, then n_points samples as f64
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::solver::Trajectory;
use crate::spectral::{make_grid, Field};

pub const BINARY_MAGIC: &[u8; 8] = b"GKDVBIN1";

/// One snapshot as `t,x,u` rows.
pub fn write_field_csv<W: Write>(out: &mut W, field: &Field, t: f64) -> Result<()> {
    writeln!(out, "t,x,u")?;
    write_field_rows(out, field, t)?;
    Ok(())
}

fn write_field_rows<W: Write>(out: &mut W, field: &Field, t: f64) -> Result<()> {
    let grid = field.grid();
    for (j, &u) in field.samples().iter().enumerate() {
        writeln!(out, "{t:.16e},{:.16e},{u:.16e}", grid.point(j))?;
    }
    Ok(())
}

/// All stored snapshots of a trajectory as one `t,x,u` table.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    writeln!(out, "t,x,u")?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write_field_rows(out, state, *t)?;
    }
    Ok(())
}

/// Compact binary dump of a trajectory (see the module docs for the layout).
pub fn write_trajectory_bin<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    let grid = traj.states[0].grid();
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(grid.n_points() as u64).to_le_bytes())?;
    out.write_all(&grid.length().to_le_bytes())?;
    out.write_all(&(traj.times.len() as u64).to_le_bytes())?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        out.write_all(&t.to_le_bytes())?;
        for &v in state.samples() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a binary dump back into timestamped fields.
pub fn read_trajectory_bin<R: Read>(input: &mut R) -> Result<Vec<(f64, Field)>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::InvalidArgument(
            "not a trajectory dump (bad magic)".into(),
        ));
    }
    let n_points = read_u64(input)? as usize;
    let length = read_f64(input)?;
    let count = read_u64(input)? as usize;
    let grid = make_grid(n_points, length)?;
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        let t = read_f64(input)?;
        let mut samples = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            samples.push(read_f64(input)?);
        }
        snapshots.push((t, Field::from_samples(&grid, samples)?));
    }
    Ok(snapshots)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
