use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{Facing, Rotation};

/// Fixed-point iterations used to invert the distortion model.
const UNDISTORT_ITERS: usize = 10;
/// Fraction of the image size an observation may lie outside the frame.
const BOUNDS_MARGIN: f64 = 0.1;

/// Pinhole intrinsics with OpenCV-style `[k1, k2, p1, p2, k3]` distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub pp: [f64; 2],
    #[serde(default)]
    pub dist: Vec<f64>,
    pub size: [f64; 2],
}

impl Intrinsics {
    pub fn new(focal: f64, pp: [f64; 2], size: [f64; 2]) -> Self {
        Intrinsics { focal, pp, dist: Vec::new(), size }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::InvalidInput(format!("focal length {} must be positive", self.focal)));
        }
        let [w, h] = self.size;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidInput(format!("image size {w}x{h} must be positive")));
        }
        let [cx, cy] = self.pp;
        if !(0.0..=w).contains(&cx) || !(0.0..=h).contains(&cy) {
            return Err(Error::InvalidInput(format!("principal point ({cx}, {cy}) outside the image")));
        }
        if self.dist.len() > 5 {
            return Err(Error::InvalidInput(format!(
                "expected at most 5 distortion coefficients, got {}",
                self.dist.len()
            )));
        }
        Ok(())
    }

    fn coeffs(&self) -> [f64; 5] {
        std::array::from_fn(|i| self.dist.get(i).copied().unwrap_or(0.0))
    }

    fn distortion_offset(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let [k1, k2, p1, p2, k3] = self.coeffs();
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        (radial, dx, dy)
    }

    /// Applies distortion to an ideal normalized point.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let (radial, dx, dy) = self.distortion_offset(x, y);
        (x * radial + dx, y * radial + dy)
    }

    /// Pixel to undistorted normalized homogeneous point.
    pub fn normalize(&self, px: f64, py: f64) -> Vector3<f64> {
        let xd = (px - self.pp[0]) / self.focal;
        let yd = (py - self.pp[1]) / self.focal;
        if self.dist.iter().all(|&c| c == 0.0) {
            return Vector3::new(xd, yd, 1.0);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_ITERS {
            let (radial, dx, dy) = self.distortion_offset(x, y);
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        Vector3::new(x, y, 1.0)
    }

    /// Normalized homogeneous point to (distorted) pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        let (x, y) = self.distort(p.x / p.z, p.y / p.z);
        (self.focal * x + self.pp[0], self.focal * y + self.pp[1])
    }

    pub fn in_frame(&self, px: f64, py: f64) -> bool {
        (0.0..=self.size[0]).contains(&px) && (0.0..=self.size[1]).contains(&py)
    }

    fn check_bounds(&self, frame: usize, px: f64, py: f64) -> Result<()> {
        let [w, h] = self.size;
        let (mx, my) = (BOUNDS_MARGIN * w, BOUNDS_MARGIN * h);
        if px < -mx || px > w + mx || py < -my || py > h + my || !px.is_finite() || !py.is_finite() {
            return Err(Error::CalibrationMismatch {
                frame,
                x: px,
                y: py,
                width: w,
                height: h,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u64,
    /// `[frame, px, py]` triples.
    pub obs: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracksFile {
    pub frames: usize,
    pub tracks: Vec<TrackRecord>,
}

impl TracksFile {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for t in &self.tracks {
            if !ids.insert(t.id) {
                return Err(Error::InvalidInput(format!("duplicate track id {}", t.id)));
            }
            if t.obs.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidInput(format!("track {} frames are not increasing", t.id)));
            }
            if let Some(&(f, _, _)) = t.obs.iter().find(|o| o.0 >= self.frames) {
                return Err(Error::InvalidInput(format!(
                    "track {} observes frame {f} of {}",
                    t.id, self.frames
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopCandidate {
    pub frame_a: usize,
    pub frame_b: usize,
    /// `[xa, ya, xb, yb]` pixel matches.
    pub matches: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopCandidatesFile {
    pub candidates: Vec<LoopCandidate>,
}

/// Ground truth emitted alongside synthetic sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub facing: Facing,
    pub rotations: Vec<Rotation>,
    pub points: Vec<[f64; 3]>,
    /// Index into `points` for each track id.
    pub track_points: Vec<usize>,
}

/// Track with observations as normalized homogeneous points.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrack {
    pub id: u64,
    pub obs: Vec<(usize, Vector3<f64>)>,
}

impl NormalizedTrack {
    pub fn at(&self, frame: usize) -> Option<&Vector3<f64>> {
        self.obs.iter().find(|(f, _)| *f == frame).map(|(_, p)| p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTracks {
    pub frames: usize,
    pub tracks: Vec<NormalizedTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCandidate {
    pub frame_a: usize,
    pub frame_b: usize,
    pub u: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
}

/// Byte offset of a 1-based (line, column) position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Undistorts and normalizes every observation.
pub fn normalize_tracks(tracks: &TracksFile, intrinsics: &Intrinsics) -> Result<NormalizedTracks> {
    intrinsics.validate()?;
    tracks.validate()?;
    let tracks_out = tracks
        .tracks
        .iter()
        .map(|t| {
            let obs = t
                .obs
                .iter()
                .map(|&(f, px, py)| {
                    intrinsics.check_bounds(f, px, py)?;
                    Ok((f, intrinsics.normalize(px, py)))
                })
                .collect::<Result<_>>()?;
            Ok(NormalizedTrack { id: t.id, obs })
        })
        .collect::<Result<_>>()?;
    Ok(NormalizedTracks {
        frames: tracks.frames,
        tracks: tracks_out,
    })
}

pub fn normalize_candidates(
    file: &LoopCandidatesFile,
    intrinsics: &Intrinsics,
    frames: usize,
) -> Result<Vec<NormalizedCandidate>> {
    file.candidates
        .iter()
        .map(|c| {
            if c.frame_a >= frames || c.frame_b >= frames || c.frame_a == c.frame_b {
                return Err(Error::InvalidInput(format!(
                    "loop candidate ({}, {}) invalid for {frames} frames",
                    c.frame_a, c.frame_b
                )));
            }
            let mut u = Vec::with_capacity(c.matches.len());
            let mut v = Vec::with_capacity(c.matches.len());
            for &[xa, ya, xb, yb] in &c.matches {
                intrinsics.check_bounds(c.frame_a, xa, ya)?;
                intrinsics.check_bounds(c.frame_b, xb, yb)?;
                u.push(intrinsics.normalize(xa, ya));
                v.push(intrinsics.normalize(xb, yb));
            }
            Ok(NormalizedCandidate {
                frame_a: c.frame_a,
                frame_b: c.frame_b,
                u,
                v,
            })
        })
        .collect()
}

/// Reads and normalizes a tracks file against its intrinsics.
pub fn ingest(tracks_path: &Path, intrinsics_path: &Path) -> Result<(NormalizedTracks, Intrinsics)> {
    let intrinsics: Intrinsics = read_json(intrinsics_path)?;
    let tracks: TracksFile = read_json(tracks_path)?;
    Ok((normalize_tracks(&tracks, &intrinsics)?, intrinsics))
}
