use std::path::Path;
use std::process::{Command, Output};

use mmn_core::io::{read_fs_surface, read_subject, write_atlas_csv, write_fs_curv, write_fs_surface};
use mmn_core::mesh::{icosphere, AtlasLabels, Hemisphere};

const TINY: &str = "order = 2
channels = [4, 8]
L = 2
epochs = 2
n_train = 8
n_val = 4
n_controls = 6
n_patients = 6
";

fn mmn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmn"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mmn(dir, args);
    assert!(
        out.status.success(),
        "mmn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(dir: &Path, seed: &str) {
    std::fs::write(dir.join("tiny.toml"), TINY).unwrap();
    let with = |rest: &[&'static str]| -> Vec<&str> { [&["--config", "tiny.toml", "--seed", seed][..], rest].concat() };
    ok(dir, &with(&["--out", "data", "synth"]));
    ok(
        dir,
        &with(&["--out", "run", "train", "--manifest", "data/manifest.json"]),
    );
    for group in ["control", "patient"] {
        ok(
            dir,
            &with(&[
                "--out",
                "run",
                "detect",
                "--manifest",
                "data/manifest.json",
                "--model",
                "run/model.smmn",
                "--group",
                group,
            ]),
        );
    }
    ok(
        dir,
        &with(&[
            "--out",
            "run",
            "stats",
            "--a",
            "run/scores_control.csv",
            "--b",
            "run/scores_patient.csv",
        ]),
    );
    ok(dir, &with(&["--out", "run", "report", "--stats", "run/stats.csv"]));
}

#[test]
fn full_pipeline_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "3");
    pipeline(b.path(), "3");
    for f in [
        "run/model.smmn",
        "run/history.json",
        "run/scores_patient.csv",
        "run/stats.csv",
        "run/report.csv",
        "run/report.json",
        "run/report.svg",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
    let report = std::fs::read_to_string(a.path().join("run/report.csv")).unwrap();
    assert!(report.starts_with("hemisphere,"));
}

#[test]
fn icosphere_command_writes_surface() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "o", "icosphere", "--order", "2"]);
    let mesh = read_fs_surface(dir.path().join("o/icosphere-2.surf")).unwrap();
    assert_eq!(mesh.vertex_count(), 162);
    assert_eq!(mesh.facet_count(), 320);
}

#[test]
fn resample_maps_curv_and_atlas_onto_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // a radius-100 sphere, as registered surfaces are stored
    let src = icosphere(3).unwrap();
    let scaled = mmn_core::mesh::TriMesh::new(
        src.vertices().iter().map(|p| p.map(|x| x * 100.0)).collect(),
        src.facets().to_vec(),
    )
    .unwrap();
    write_fs_surface(d.join("lh.sphere.reg"), &scaled, "created by test").unwrap();
    let z: Vec<f32> = src.vertices().iter().map(|p| p[2] as f32).collect();
    write_fs_curv(d.join("lh.z"), &z, src.facet_count()).unwrap();
    let labels = src.vertices().iter().map(|p| if p[0] > 0.0 { 1 } else { 2 }).collect();
    let atlas = AtlasLabels::new(labels, Default::default(), Hemisphere::Left).unwrap();
    write_atlas_csv(&atlas, std::fs::File::create(d.join("atlas.csv")).unwrap(), None).unwrap();
    ok(
        d,
        &[
            "--out",
            "o",
            "resample",
            "--surface",
            "lh.sphere.reg",
            "--curv",
            "lh.z",
            "--name",
            "height",
            "--order",
            "2",
            "--id",
            "s1",
            "--atlas",
            "atlas.csv",
        ],
    );
    let subject = read_subject(d.join("o/s1.smmn")).unwrap();
    assert_eq!(subject.channel_names, vec!["height"]);
    // order-2 vertices are order-3 vertices, so values carry over exactly
    let dst = icosphere(2).unwrap();
    for (v, p) in dst.vertices().iter().enumerate() {
        assert!((subject.features.get(0, v) - p[2]).abs() < 1e-6);
    }
    assert!(d.join("o/s1.atlas.csv").exists());
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mmn(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mmn(d, &["--help"]).status.code(), Some(0));

    std::fs::write(d.join("bad.toml"), "order = 2\nwarp_factor = 9\n").unwrap();
    let out = mmn(d, &["--config", "bad.toml", "synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_factor"));

    std::fs::write(d.join("s.surf"), [0xFF, 0xFF, 0xFE, 0x00]).unwrap();
    std::fs::write(d.join("c.curv"), [0u8; 3]).unwrap();
    let out = mmn(d, &["resample", "--surface", "s.surf", "--curv", "c.curv", "--id", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset 3"));

    let out = mmn(d, &["stats", "--a", "missing.csv", "--b", "missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
