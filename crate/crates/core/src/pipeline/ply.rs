use std::io::Write;
use std::path::Path;

use super::ReconstructionOutput;
use crate::error::Result;

pub const CAMERA_COLOR: [u8; 3] = [255, 0, 0];
pub const POINT_COLOR: [u8; 3] = [0, 0, 255];

/// Writes camera centres (red) and scene points (blue) as an ASCII PLY.
pub fn write_ply<W: Write>(out: &ReconstructionOutput, mut w: W) -> Result<()> {
    let n = out.cameras.len() + out.points.len();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment cameras first, then scene points")?;
    writeln!(w, "element vertex {n}")?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    for channel in ["red", "green", "blue"] {
        writeln!(w, "property uchar {channel}")?;
    }
    writeln!(w, "end_header")?;
    let cams = out.cameras.iter().map(|c| (c.center, CAMERA_COLOR));
    let pts = out.points.iter().map(|p| (p.position, POINT_COLOR));
    for ([x, y, z], [r, g, b]) in cams.chain(pts) {
        // `{:?}` prints the shortest representation that parses back exactly.
        writeln!(w, "{x:?} {y:?} {z:?} {r} {g} {b}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_ply(out: &ReconstructionOutput, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_ply(out, std::io::BufWriter::new(file))
}
