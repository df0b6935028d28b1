use nalgebra::Vector3;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{essential_from_relative, Facing, RelativePose, SphericalEssential};
use crate::solver::{decompose_essential, solve_essentials, CorrespondenceSet, SolverMethod};

/// Denominator below which the Sampson error is undefined.
const SAMPSON_DENOM_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub hypothesis_count: usize,
    pub block_size: usize,
    pub inlier_threshold_px: f64,
    pub focal_px: f64,
    pub seed: u64,
    pub method: SolverMethod,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            hypothesis_count: 200,
            block_size: 100,
            inlier_threshold_px: 2.0,
            focal_px: 600.0,
            seed: 0,
            method: SolverMethod::default(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hypothesis_count == 0 || self.block_size == 0 {
            return Err(Error::InvalidInput(
                "hypothesis_count and block_size must be positive".into(),
            ));
        }
        if !(self.inlier_threshold_px > 0.0) || !(self.focal_px > 0.0) {
            return Err(Error::InvalidInput(
                "inlier threshold and focal length must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: RelativePose,
    /// Unit-norm essential matrix of `pose`; the inlier mask is computed from it.
    pub essential: SphericalEssential,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
}

/// Sampson distance of `v` to the epipolar line of `u`, in pixels.
pub fn sampson_error(e: &SphericalEssential, u: &Vector3<f64>, v: &Vector3<f64>, focal_px: f64) -> f64 {
    let m = e.matrix();
    let eu = m * u;
    let etv = m.transpose() * v;
    let denom = eu.x * eu.x + eu.y * eu.y + etv.x * etv.x + etv.y * etv.y;
    if denom < SAMPSON_DENOM_TOL {
        return f64::INFINITY;
    }
    focal_px * v.dot(&eu).abs() / denom.sqrt()
}

struct Sample {
    model: [usize; 3],
    check: usize,
}

struct Hypothesis {
    index: usize,
    pose: RelativePose,
    essential: SphericalEssential,
    score: f64,
}

fn draw_sample(rng: &mut ChaCha8Rng, n: usize) -> Sample {
    let picked = index::sample(rng, n, 3);
    let model = [picked.index(0), picked.index(1), picked.index(2)];
    // Uniform draw from the n - 3 remaining indices.
    let mut check = rng.random_range(0..n - 3);
    let mut sorted = model;
    sorted.sort_unstable();
    for m in sorted {
        if check >= m {
            check += 1;
        }
    }
    Sample { model, check }
}

fn hypothesize(
    c: &CorrespondenceSet,
    sample: &Sample,
    facing: Facing,
    cfg: &RansacConfig,
) -> Option<(RelativePose, SphericalEssential)> {
    let set = solve_essentials(&c.subset(&sample.model), cfg.method).ok()?;
    let (u, v) = (&c.u[sample.check], &c.v[sample.check]);
    let best = set
        .iter()
        .map(|cand| (sampson_error(&cand.essential, u, v, cfg.focal_px), cand))
        .filter(|(err, _)| err.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))?
        .1;
    let pose = decompose_essential(&best.essential, facing).ok()?;
    let essential = essential_from_relative(&pose).ok()?.normalized();
    Some((pose, essential))
}

/// Preemptive RANSAC over 3-point hypotheses, disambiguated by a 4th point.
pub fn preemptive_ransac(c: &CorrespondenceSet, facing: Facing, cfg: &RansacConfig) -> Result<RansacResult> {
    cfg.validate()?;
    let n = c.len();
    if n < 4 {
        return Err(Error::NoValidHypothesis);
    }

    // All randomness is drawn up front so scoring order never affects it.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<Sample> = (0..cfg.hypothesis_count).map(|_| draw_sample(&mut rng, n)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut alive: Vec<Hypothesis> = samples
        .iter()
        .enumerate()
        .filter_map(|(index, s)| {
            hypothesize(c, s, facing, cfg).map(|(pose, essential)| Hypothesis {
                index,
                pose,
                essential,
                score: 0.0,
            })
        })
        .collect();
    if alive.is_empty() {
        return Err(Error::NoValidHypothesis);
    }

    let thr = cfg.inlier_threshold_px;
    for block in order.chunks(cfg.block_size) {
        for h in alive.iter_mut() {
            for &i in block {
                h.score += sampson_error(&h.essential, &c.u[i], &c.v[i], cfg.focal_px).min(thr);
            }
        }
        alive.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.index.cmp(&b.index)));
        if alive.len() == 1 {
            break;
        }
        alive.truncate(alive.len().div_ceil(2));
    }
    let best = &alive[0];

    let inlier_mask: Vec<bool> = c
        .pairs()
        .map(|(u, v)| sampson_error(&best.essential, u, v, cfg.focal_px) <= thr)
        .collect();
    let inlier_count = inlier_mask.iter().filter(|&&b| b).count();
    Ok(RansacResult {
        pose: best.pose,
        essential: best.essential,
        inlier_mask,
        inlier_count,
    })
}
