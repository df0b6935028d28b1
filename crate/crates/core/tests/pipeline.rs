//! File-level round trips: tracks ingestion and PLY export.

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spherical_sfm::pipeline::io::{ingest, normalize_candidates, normalize_tracks, write_json, Intrinsics, TrackRecord, TracksFile};
use spherical_sfm::pipeline::ply::write_ply;
use spherical_sfm::pipeline::{export_ply, reconstruct, CameraPose, PipelineConfig, ReconstructionOutput, ScenePoint};
use spherical_sfm::so3::{Facing, Rotation};
use spherical_sfm::synth::{generate_sequence, SequenceSpec};

/// Vertices of an ASCII PLY with double xyz and uchar rgb properties.
fn read_ply(text: &str) -> (usize, Vec<([f64; 3], [u8; 3])>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ply"));
    assert_eq!(lines.next(), Some("format ascii 1.0"));
    let mut count = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["element", "vertex", n] => count = Some(n.parse::<usize>().unwrap()),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            _ => {}
        }
    }
    let names: Vec<&str> = props.iter().map(|p| p.1.as_str()).collect();
    assert_eq!(names, ["x", "y", "z", "red", "green", "blue"]);
    let vertices = lines
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 6, "{l}");
            let xyz = [0, 1, 2].map(|k| f[k].parse::<f64>().unwrap());
            let rgb = [3, 4, 5].map(|k| f[k].parse::<u8>().unwrap());
            (xyz, rgb)
        })
        .collect();
    (count.unwrap(), vertices)
}

fn small_reconstruction() -> ReconstructionOutput {
    let seq = generate_sequence(&SequenceSpec::new(6, 120, Facing::Inward, 0.5, 11)).unwrap();
    let tracks = normalize_tracks(&seq.tracks, &seq.intrinsics).unwrap();
    let cands = normalize_candidates(&seq.loops, &seq.intrinsics, tracks.frames).unwrap();
    reconstruct(&tracks, &cands, &PipelineConfig::new(Facing::Inward, seq.intrinsics.focal), None).unwrap()
}

fn ply_text(out: &ReconstructionOutput) -> String {
    let mut buf = Vec::new();
    write_ply(out, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn ingest_recovers_normalized_points() {
    let k = Intrinsics {
        focal: 700.0,
        pp: [950.0, 530.0],
        dist: vec![-0.12, 0.03],
        size: [1920.0, 1080.0],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut truth = Vec::new();
    let mut tracks = Vec::new();
    for id in 0..50u64 {
        let mut obs = Vec::new();
        let mut pts = Vec::new();
        for frame in 0..3 {
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.6..0.6), 1.0);
            let (px, py) = k.project(&p);
            obs.push((frame, px, py));
            pts.push(p);
        }
        tracks.push(TrackRecord { id, obs });
        truth.push(pts);
    }
    let dir = tempfile::tempdir().unwrap();
    let (tp, kp) = (dir.path().join("tracks.json"), dir.path().join("intrinsics.json"));
    write_json(&tp, &TracksFile { frames: 3, tracks }).unwrap();
    write_json(&kp, &k).unwrap();
    let (norm, k2) = ingest(&tp, &kp).unwrap();
    assert_eq!(k2, k);
    for (t, pts) in norm.tracks.iter().zip(&truth) {
        for ((_, got), want) in t.obs.iter().zip(pts) {
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn ply_round_trip_preserves_coordinates() {
    let out = small_reconstruction();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.ply");
    export_ply(&out, &path).unwrap();
    let (count, vertices) = read_ply(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(count, out.cameras.len() + out.points.len());
    assert_eq!(vertices.len(), count);
    let expected = out
        .cameras
        .iter()
        .map(|c| (c.center, [255, 0, 0]))
        .chain(out.points.iter().map(|p| (p.position, [0, 0, 255])));
    for (got, want) in vertices.iter().zip(expected) {
        assert_eq!(*got, want);
    }
}

#[test]
fn empty_reconstruction_has_no_vertices() {
    let mut out = small_reconstruction();
    out.cameras.clear();
    out.points.clear();
    let (count, vertices) = read_ply(&ply_text(&out));
    assert_eq!(count, 0);
    assert!(vertices.is_empty());
}

#[test]
fn one_camera_one_point_counts_two() {
    let mut out = small_reconstruction();
    out.cameras.truncate(1);
    out.points.truncate(1);
    let (count, vertices) = read_ply(&ply_text(&out));
    assert_eq!(count, 2);
    assert_eq!(vertices[0].1, [255, 0, 0]);
    assert_eq!(vertices[1].1, [0, 0, 255]);
}

#[test]
fn reconstruction_json_round_trip() {
    let out = small_reconstruction();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.json");
    write_json(&path, &out).unwrap();
    let back: ReconstructionOutput = spherical_sfm::pipeline::io::read_json(&path).unwrap();
    assert_eq!(back, out);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ply_coordinates_survive_formatting(
        cams in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 0..5),
        pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 0..20),
    ) {
        let mut out = small_reconstruction_cached();
        out.cameras = cams
            .iter()
            .enumerate()
            .map(|(frame, c)| CameraPose { frame, rotation: Rotation::identity(), translation: [0.0, 0.0, 1.0], center: *c })
            .collect();
        out.points = pts.iter().enumerate().map(|(k, p)| ScenePoint { track_id: k as u64, position: *p }).collect();
        let (count, vertices) = read_ply(&ply_text(&out));
        prop_assert_eq!(count, cams.len() + pts.len());
        let want: Vec<[f64; 3]> = cams.iter().chain(&pts).copied().collect();
        let got: Vec<[f64; 3]> = vertices.iter().map(|v| v.0).collect();
        prop_assert_eq!(got, want);
    }
}

fn small_reconstruction_cached() -> ReconstructionOutput {
    static CACHE: std::sync::OnceLock<ReconstructionOutput> = std::sync::OnceLock::new();
    CACHE.get_or_init(small_reconstruction).clone()
}
