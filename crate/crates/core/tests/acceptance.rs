//! Acceptance criteria 1 to 9, each reported as one PASS/FAIL line.

use std::collections::HashMap;
use std::io::Write;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spherical_sfm::averaging::{
    average_rotations_l1, end_to_end_drift, spanning_tree_init, AveragingConfig, Edge, GlobalRotations, RotationGraph,
};
use spherical_sfm::ba::{cost_and_gradient, initialize_inverse_depths, reprojection_cost, BaState, Observation, Track, TrackGraph};
use spherical_sfm::pipeline::io::{normalize_candidates, normalize_tracks, read_json, Intrinsics};
use spherical_sfm::pipeline::{reconstruct, PipelineConfig, ReconstructionOutput};
use spherical_sfm::ransac::{preemptive_ransac, sampson_error, RansacConfig};
use spherical_sfm::so3::{essential_from_relative, exp_so3, AxisAngle, Facing, RelativePose, Rotation};
use spherical_sfm::solver::{
    build_cubic_constraints, build_epipolar_system, compute_nullspace, solve_essentials, ConstraintSystem,
    CorrespondenceSet, MonomialOrder, SolverMethod,
};
use spherical_sfm::synth::{
    generate_sequence, generate_trial, run_benchmark, solve_trial, ProblemSpec, SequenceSpec, FRAME_HEIGHT,
    FRAME_WIDTH,
};

const FACINGS: [Facing; 2] = [Facing::Inward, Facing::Outward];
const METHODS: [SolverMethod; 2] = [SolverMethod::Action, SolverMethod::Poly];

/// Writes straight to stderr so the line shows even when test output is captured.
fn report(criterion: u32, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance criterion {criterion}: {verdict} ({detail})");
    pass
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    values[idx]
}

fn random_rotation(rng: &mut ChaCha8Rng, angle: f64) -> Rotation {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    exp_so3(&AxisAngle(axis * angle))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_1() -> bool {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for facing in FACINGS {
        let spec = ProblemSpec::new(facing, 1.0, 0.0, 4, 1);
        let problems: Vec<_> = (0..1000).map(|t| generate_trial(&spec, t).unwrap()).collect();
        for method in METHODS {
            let mut frob: Vec<f64> = problems
                .iter()
                .map(|p| solve_trial(p, method, spec.focal_px).map_or(f64::INFINITY, |o| o.frobenius))
                .collect();
            let median = percentile(&mut frob, 0.5);
            let p99 = percentile(&mut frob, 0.99);
            pass &= median <= 1e-8 && p99 <= 1e-6;
            detail.push(format!("{facing:?}/{method}: median {median:.1e}, p99 {p99:.1e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    report(1, pass, &format!("{}; {secs:.2} s", detail.join("; ")))
}

/// Greedy one-to-one matching of real roots within a relative tolerance.
fn roots_match(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|&(x, y)| {
        let tol = 1e-6 * 1f64.max(x.abs()).max(y.abs());
        let hit = b
            .iter()
            .enumerate()
            .filter(|(k, &(bx, by))| !used[*k] && (bx - x).abs() <= tol && (by - y).abs() <= tol)
            .map(|(k, _)| k)
            .next();
        hit.map(|k| used[k] = true).is_some()
    })
}

fn roots_of(c: &CorrespondenceSet, method: SolverMethod) -> Vec<(f64, f64)> {
    solve_essentials(c, method)
        .map(|s| s.iter().map(|cand| (cand.x, cand.y)).collect())
        .unwrap_or_default()
}

fn criterion_2() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 10_000;
    let mut agree = 0;
    for t in 0..trials {
        let facing = FACINGS[t % 2];
        let spec = ProblemSpec::new(facing, rng.random_range(0.5..30.0), 0.0, 3, 2);
        let p = generate_trial(&spec, t as u64).unwrap();
        let a = roots_of(&p.correspondences, SolverMethod::Action);
        let b = roots_of(&p.correspondences, SolverMethod::Poly);
        agree += roots_match(&a, &b) as usize;
    }
    let rate = agree as f64 / trials as f64;
    report(2, rate >= 0.999, &format!("{agree}/{trials} root multisets agree ({:.2}%)", 100.0 * rate))
}

fn criterion_3() -> bool {
    let sigmas: Vec<f64> = (0..=10).map(f64::from).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for facing in FACINGS {
        let specs: Vec<ProblemSpec> = sigmas.iter().map(|&s| ProblemSpec::new(facing, 1.0, s, 5, 3)).collect();
        let rows = run_benchmark(&specs, 1000, &METHODS).unwrap();
        for method in METHODS {
            let medians: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.median_ang_deg.to_radians())
                .collect();
            let rho = spearman(&sigmas, &medians);
            pass &= rho >= 0.95 && medians[0] < 1e-6;
            detail.push(format!(
                "{facing:?}/{method}: rho {rho:.3}, median at 0 px {:.1e} rad, at 10 px {:.2} deg",
                medians[0],
                medians[10].to_degrees()
            ));
        }
    }
    report(3, pass, &detail.join("; "))
}

fn criterion_4() -> bool {
    let mut pass = true;
    let mut detail = Vec::new();
    for method in METHODS {
        let spec = ProblemSpec::new(Facing::Inward, 1.0, 0.0, 4, 4);
        let start = Instant::now();
        let rows = run_benchmark(&[spec], 10_000, &[method]).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let mean = rows[0].mean_time_us;
        pass &= mean <= 100.0 && secs < 5.0;
        detail.push(format!("{method}: mean {mean:.2} us per solve, 10000-solve benchmark {secs:.2} s"));
    }
    report(4, pass, &detail.join("; "))
}

/// Half inliers from the synthetic generator, half uniformly random pixel pairs.
fn outlier_problem(seed: u64) -> (RelativePose, Facing, CorrespondenceSet, Vec<bool>) {
    let facing = FACINGS[(seed % 2) as usize];
    let spec = ProblemSpec::new(facing, 10.0, 1.0, 100, seed);
    let p = generate_trial(&spec, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let mut random_point = || {
        let (px, py) = (rng.random_range(0.0..FRAME_WIDTH), rng.random_range(0.0..FRAME_HEIGHT));
        Vector3::new((px - FRAME_WIDTH / 2.0) / 600.0, (py - FRAME_HEIGHT / 2.0) / 600.0, 1.0)
    };
    let mut rows: Vec<(Vector3<f64>, Vector3<f64>, bool)> =
        p.correspondences.pairs().map(|(u, v)| (*u, *v, true)).collect();
    for _ in 0..100 {
        rows.push((random_point(), random_point(), false));
    }
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let c = CorrespondenceSet::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect()).unwrap();
    (p.ground_truth, facing, c, rows.iter().map(|r| r.2).collect())
}

fn criterion_5() -> bool {
    let seeds = 100;
    let threshold = RansacConfig::default().inlier_threshold_px;
    let (mut good, mut accurate, mut recalled, mut oracle_recalled) = (0, 0, 0, 0);
    let mut recalls = Vec::new();
    let mut oracle_recalls = Vec::new();
    for seed in 0..seeds {
        let (truth, facing, c, is_inlier) = outlier_problem(seed);
        let inliers = is_inlier.iter().filter(|t| **t).count() as f64;
        // Recall of the ground-truth essential matrix itself: a ceiling for any estimate.
        let e_true = essential_from_relative(&truth).unwrap();
        let oracle = c
            .pairs()
            .zip(&is_inlier)
            .filter(|((u, v), t)| **t && sampson_error(&e_true, u, v, 600.0) <= threshold)
            .count() as f64
            / inliers;
        oracle_recalls.push(oracle);
        oracle_recalled += (oracle >= 0.95) as usize;
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        let Ok(r) = preemptive_ransac(&c, facing, &cfg) else { continue };
        let found = r.inlier_mask.iter().zip(&is_inlier).filter(|(m, t)| **m && **t).count();
        let recall = found as f64 / inliers;
        let err = r.pose.rotation.angle_to(&truth.rotation).to_degrees();
        recalls.push(recall);
        accurate += (err < 0.5) as usize;
        recalled += (recall >= 0.95) as usize;
        good += (err < 0.5 && recall >= 0.95) as usize;
    }
    report(
        5,
        good * 100 >= 95 * seeds as usize,
        &format!(
            "{good}/{seeds} seeds meet both; rotation < 0.5 deg in {accurate}, recall >= 95% in {recalled}, median recall {:.1}%; the true essential matrix reaches 95% recall in only {oracle_recalled}/{seeds} seeds (median {:.1}%)",
            100.0 * percentile(&mut recalls, 0.5),
            100.0 * percentile(&mut oracle_recalls, 0.5)
        ),
    )
}

fn circle_graph(n: usize, noise_deg: f64, closure_weight: f64, seed: u64) -> (RotationGraph, Vec<Rotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<Rotation> = (0..n)
        .map(|k| Rotation::about_y(std::f64::consts::TAU * k as f64 / n as f64).transpose())
        .collect();
    let noise = noise_deg.to_radians();
    let mut g = RotationGraph::new(n);
    for k in 0..n {
        let j = (k + 1) % n;
        let measured = random_rotation(&mut rng, noise) * truth[j] * truth[k].transpose();
        let w = if j == 0 { closure_weight } else { 1.0 };
        g.add_edge(Edge::new(k, j, measured).with_weight(w)).unwrap();
    }
    (g, truth)
}

fn averaged(g: &RotationGraph) -> (GlobalRotations, GlobalRotations) {
    let init = spanning_tree_init(g).unwrap();
    let out = average_rotations_l1(g, &init, &AveragingConfig::default()).unwrap();
    (init, out.rotations)
}

fn criterion_6() -> bool {
    // A closure verified with 200 inliers gets weight 2 in the pipeline.
    let seeds = 50;
    let mut better = 0;
    for seed in 0..seeds {
        let (g, truth) = circle_graph(100, 0.5, 2.0, seed);
        let (init, out) = averaged(&g);
        better += (end_to_end_drift(&out, &truth) < end_to_end_drift(&init, &truth)) as usize;
    }
    let (g, truth) = circle_graph(100, 0.0, 2.0, 0);
    let (_, out) = averaged(&g);
    let r0t = truth[0].transpose();
    let exact = out
        .rotations
        .iter()
        .zip(&truth)
        .map(|(e, t)| e.angle_to(&(*t * r0t)))
        .fold(0.0, f64::max);
    report(
        6,
        better * 100 >= 95 * seeds as usize && exact < 1e-8,
        &format!("drift reduced in {better}/{seeds} seeds; noise-free max error {exact:.1e} rad"),
    )
}

fn ba_state_from_sequence(frames: usize, points: usize, sigma: f64, seed: u64) -> (BaState, Intrinsics) {
    let seq = generate_sequence(&SequenceSpec::new(frames, points, Facing::Outward, sigma, seed)).unwrap();
    let tracks = normalize_tracks(&seq.tracks, &seq.intrinsics).unwrap();
    let tracks = tracks
        .tracks
        .iter()
        .map(|t| Track::new(t.id, t.obs.iter().map(|&(camera, point)| Observation { camera, point }).collect()).unwrap())
        .collect();
    let graph = TrackGraph { num_cameras: frames, facing: Facing::Outward, tracks };
    let rotations = GlobalRotations { rotations: seq.truth.rotations.clone() };
    let mut state = BaState::new(graph, &rotations).unwrap();
    initialize_inverse_depths(&mut state, 0.01);
    (state, seq.intrinsics)
}

fn central_differences(state: &BaState, focal: f64) -> DVector<f64> {
    let p = state.parameters();
    let h = 1e-6;
    let mut s = state.clone();
    DVector::from_fn(p.len(), |k, _| {
        let mut q = p.clone();
        q[k] = p[k] + h;
        s.set_parameters(&q);
        let plus = reprojection_cost(&s, 2.0, focal);
        q[k] = p[k] - h;
        s.set_parameters(&q);
        let minus = reprojection_cost(&s, 2.0, focal);
        (plus - minus) / (2.0 * h)
    })
}

fn criterion_7() -> bool {
    let (base, k) = ba_state_from_sequence(5, 12, 1.0, 70);
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut s = base.clone();
        for r in s.rotation_params.iter_mut().skip(1) {
            r.0 += Vector3::from_fn(|_, _| rng.random_range(-0.01..0.01));
        }
        for t in s.tracks.iter_mut() {
            t.inverse_depth *= rng.random_range(0.8..1.25);
        }
        let (_, analytic) = cost_and_gradient(&s, 2.0, k.focal);
        let numeric = central_differences(&s, k.focal);
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm().max(1e-12));
    }

    let seq = generate_sequence(&SequenceSpec::new(20, 500, Facing::Outward, 1.0, 72)).unwrap();
    let tracks = normalize_tracks(&seq.tracks, &seq.intrinsics).unwrap();
    let cands = normalize_candidates(&seq.loops, &seq.intrinsics, tracks.frames).unwrap();
    let cfg = PipelineConfig::new(Facing::Outward, seq.intrinsics.focal);
    let out = reconstruct(&tracks, &cands, &cfg, Some(&seq.truth.rotations)).unwrap();
    let d = &out.diagnostics;
    let monotone = d.ba.cost_history.windows(2).all(|w| w[1] <= w[0]);
    let reproj = d.reprojection;
    report(
        7,
        worst < 1e-4 && reproj.mean_px < 1.5 && reproj.mean_non_reference_px < 1.5 && monotone,
        &format!(
            "worst gradient relative error {worst:.1e}; mean reprojection {:.3} px ({:.3} px excluding reference observations); {} accepted costs non-increasing: {monotone}; mean rotation error {:.3} deg",
            reproj.mean_px,
            reproj.mean_non_reference_px,
            d.ba.cost_history.len(),
            d.mean_rotation_error_deg.unwrap()
        ),
    )
}

fn criterion_8() -> bool {
    let bin = env!("CARGO_BIN_EXE_spherical-sfm");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let start = Instant::now();
    let synth = Command::new(bin)
        .args(["synth", "sequence", "--frames", "20", "--facing", "outward", "--seed", "8", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let sfm = Command::new(bin)
        .args(["sfm", "--facing", "outward", "--tracks"])
        .arg(p("tracks.json"))
        .arg("--intrinsics")
        .arg(p("intrinsics.json"))
        .arg("--loops")
        .arg(p("loops.json"))
        .arg("--out")
        .arg(p("rec.json"))
        .output()
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    if !sfm.status.success() {
        return report(8, false, &format!("sfm failed: {}", String::from_utf8_lossy(&sfm.stderr)));
    }
    let out: ReconstructionOutput = read_json(&p("rec.json")).unwrap();
    let worst_norm = out
        .cameras
        .iter()
        .map(|c| (Vector3::from(c.center).norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let closure = out
        .diagnostics
        .closures
        .iter()
        .filter(|c| c.accepted && c.inliers >= 100)
        .map(|c| c.inliers)
        .max();
    report(
        8,
        out.cameras.len() == 20 && worst_norm <= 1e-9 && closure.is_some() && secs < 60.0,
        &format!(
            "{} cameras, max | |c| - 1 | = {worst_norm:.1e}, best closure {} inliers, {secs:.2} s",
            out.cameras.len(),
            closure.unwrap_or(0)
        ),
    )
}

const GRID: usize = 2000;
const HALF_WIDTH: f64 = 5.0;

/// Row `k` of the constraint system as a cubic in x for fixed y.
fn cubic_in_x(sys: &ConstraintSystem, k: usize, y: f64) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (col, (ex, ey)) in sys.order.exponents().iter().enumerate() {
        c[*ex as usize] += sys.a[(k, col)] * y.powi(*ey as i32);
    }
    c
}

/// Cells of the grid where every polynomial changes sign (or vanishes) at the corners.
fn flagged_cells(sys: &ConstraintSystem) -> Vec<(usize, usize)> {
    let h = 2.0 * HALF_WIDTH / GRID as f64;
    let sign_row = |y: f64| -> Vec<[i8; 6]> {
        let coef: Vec<[f64; 4]> = (0..6).map(|k| cubic_in_x(sys, k, y)).collect();
        (0..=GRID)
            .map(|i| {
                let x = -HALF_WIDTH + i as f64 * h;
                std::array::from_fn(|k| {
                    let c = &coef[k];
                    let v = ((c[3] * x + c[2]) * x + c[1]) * x + c[0];
                    v.partial_cmp(&0.0).map_or(0, |o| o as i8)
                })
            })
            .collect()
    };
    let mut cells = Vec::new();
    let mut below = sign_row(-HALF_WIDTH);
    for j in 0..GRID {
        let above = sign_row(-HALF_WIDTH + (j + 1) as f64 * h);
        for i in 0..GRID {
            let all = (0..6).all(|k| {
                let s = [below[i][k], below[i + 1][k], above[i][k], above[i + 1][k]];
                s.iter().any(|&v| v == 0) || s.iter().any(|&v| v != s[0])
            });
            if all {
                cells.push((i, j));
            }
        }
        below = above;
    }
    cells
}

/// Polynomial values scaled by their coefficient norms, with the Jacobian.
fn scaled_residual(sys: &ConstraintSystem, x: f64, y: f64) -> ([f64; 6], [[f64; 2]; 6]) {
    let mut r = [0.0; 6];
    let mut jac = [[0.0; 2]; 6];
    for k in 0..6 {
        let norm = sys.a.row(k).norm();
        for (col, &(ex, ey)) in sys.order.exponents().iter().enumerate() {
            let (ex, ey) = (ex as i32, ey as i32);
            let c = sys.a[(k, col)] / norm;
            r[k] += c * x.powi(ex) * y.powi(ey);
            if ex > 0 {
                jac[k][0] += c * ex as f64 * x.powi(ex - 1) * y.powi(ey);
            }
            if ey > 0 {
                jac[k][1] += c * ey as f64 * x.powi(ex) * y.powi(ey - 1);
            }
        }
    }
    (r, jac)
}

/// Damped Gauss-Newton on the six scaled polynomials; a point where all of
/// them vanish, if the descent from `start` reaches one.
fn common_zero(sys: &ConstraintSystem, start: (f64, f64)) -> Option<(f64, f64)> {
    let cost = |x: f64, y: f64| scaled_residual(sys, x, y).0.iter().map(|v| v * v).sum::<f64>();
    let (mut x, mut y) = start;
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (r, jac) = scaled_residual(sys, x, y);
        let c = r.iter().map(|v| v * v).sum::<f64>();
        if c.sqrt() < 1e-12 {
            break;
        }
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for k in 0..6 {
            for a in 0..2 {
                jtr[a] += jac[k][a] * r[k];
                for b in 0..2 {
                    jtj[a][b] += jac[k][a] * jac[k][b];
                }
            }
        }
        let (a00, a11) = (jtj[0][0] * (1.0 + lambda), jtj[1][1] * (1.0 + lambda));
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = -(a11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dy = -(a00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        if cost(x + dx, y + dy) < c {
            x += dx;
            y += dy;
            lambda = (lambda / 10.0).max(1e-12);
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (cost(x, y).sqrt() < 1e-9).then_some((x, y))
}

/// Connected groups of flagged cells under 8-neighbourhood.
fn basins(cells: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let index: HashMap<(usize, usize), usize> = cells.iter().enumerate().map(|(k, c)| (*c, k)).collect();
    let mut seen = vec![false; cells.len()];
    let mut groups = Vec::new();
    for start in 0..cells.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut group = Vec::new();
        while let Some(k) = stack.pop() {
            let (i, j) = cells[k];
            group.push((i, j));
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let key = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if let Some(&n) = index.get(&key) {
                        if !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
        groups.push(group);
    }
    groups
}

fn criterion_9() -> bool {
    let h = 2.0 * HALF_WIDTH / GRID as f64;
    let cell_of = |v: f64| ((v + HALF_WIDTH) / h).floor() as i64;
    let (mut unconfirmed, mut missed, mut resolved, mut near_misses, mut roots_in_box, mut basin_total) = (0, 0, 0, 0, 0, 0);
    let mut problems = 0;
    let mut seed = 0u64;
    while problems < 100 {
        seed += 1;
        let facing = FACINGS[(seed % 2) as usize];
        let spec = ProblemSpec::new(facing, 10.0, 0.0, 3, 9);
        let p = generate_trial(&spec, seed).unwrap();
        let Ok(basis) = build_epipolar_system(&p.correspondences).and_then(|m| compute_nullspace(&m)) else {
            continue;
        };
        problems += 1;
        let sys = build_cubic_constraints(&basis, MonomialOrder::GrevlexXY);
        let groups = basins(&flagged_cells(&sys));
        basin_total += groups.len();
        let mut roots = roots_of(&p.correspondences, SolverMethod::Action);
        roots.extend(roots_of(&p.correspondences, SolverMethod::Poly));
        let inside: Vec<(i64, i64)> = roots
            .iter()
            .filter(|(x, y)| x.abs() < HALF_WIDTH - 2.0 * h && y.abs() < HALF_WIDTH - 2.0 * h)
            .map(|&(x, y)| (cell_of(x), cell_of(y)))
            .collect();
        roots_in_box += inside.len();
        let near = |(ci, cj): (i64, i64), (i, j): (usize, usize)| (ci - i as i64).abs() <= 1 && (cj - j as i64).abs() <= 1;
        for &root in &inside {
            if !groups.iter().flatten().any(|&cell| near(root, cell)) {
                unconfirmed += 1;
            }
        }
        for g in &groups {
            if g.iter().any(|&cell| inside.iter().any(|&root| near(root, cell))) {
                continue;
            }
            let (i, j) = g[g.len() / 2];
            let start = (-HALF_WIDTH + (i as f64 + 0.5) * h, -HALF_WIDTH + (j as f64 + 0.5) * h);
            match common_zero(&sys, start) {
                Some((x, y)) if !roots.iter().any(|&(rx, ry)| (rx - x).hypot(ry - y) <= 1e-6 * 1f64.max(x.hypot(y))) => {
                    missed += 1
                }
                Some(_) => resolved += 1,
                None => near_misses += 1,
            }
        }
    }
    report(
        9,
        unconfirmed == 0 && missed == 0,
        &format!(
            "{problems} problems, {roots_in_box} returned roots inside the grid, {basin_total} sign-change basins, {resolved} of them reached a returned root only by descent, {near_misses} hold no common zero; {unconfirmed} roots unconfirmed, {missed} real roots missed"
        ),
    )
}

#[test]
fn acceptance() {
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(k, _)| k + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
