//! End-to-end exercises of the `flamefit` binary: the synth -> render ->
//! optimize pipeline, exit codes, and output determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flamefit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flamefit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("flamefit-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = flamefit(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "render", "optimize", "analyze", "tonemap", "scene-demo"] {
        assert!(text.contains(sub), "help does not mention {sub}");
    }
}

#[test]
fn synth_render_optimize_end_to_end() {
    let dir = tmp("e2e");
    let synth_dir = dir.join("synth");

    // Small recipe keeps the whole pipeline desk-scale.
    let recipe = serde_json::json!({
        "kind": "candle-ellipsoid",
        "dims": {"nx": 16, "ny": 16, "nz": 16},
        "seed": 3,
        "voxel_size": 0.012
    });
    let recipe_path = dir.join("recipe.json");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&recipe_path, recipe.to_string()).unwrap();

    let out = flamefit(&[
        "synth",
        "--recipe",
        path_str(&recipe_path),
        "--output-dir",
        path_str(&synth_dir),
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
    assert!(synth_dir.join("fire.fvol").exists());
    assert!(synth_dir.join("rgb.fvol").exists());

    // Render the ground truth from one view.
    let job = serde_json::json!({
        "volume": {"path": synth_dir.join("fire.fvol")},
        "views": [{
            "width": 48, "height": 36, "focal": 62.0,
            "pose": [[1.0, 0.0, 0.0, 0.0],
                     [0.0, 1.0, 0.0, 0.0],
                     [0.0, 0.0, 1.0, -0.55]]
        }],
        "render": {"exposure": 2.0},
        "output_dir": dir.join("render")
    });
    let job_path = dir.join("render.json");
    std::fs::write(&job_path, job.to_string()).unwrap();
    let out = flamefit(&["render", "--config", path_str(&job_path)]);
    assert!(out.status.success(), "render failed: {out:?}");
    let pfm = dir.join("render/view0.pfm");
    assert!(pfm.exists());

    // Byte-identical re-render.
    let first = std::fs::read(&pfm).unwrap();
    assert!(flamefit(&["render", "--config", path_str(&job_path)])
        .status
        .success());
    assert_eq!(first, std::fs::read(&pfm).unwrap());

    // Optimize against goals generated from the synthetic source.
    let opt_job = serde_json::json!({
        "volume": {"synthetic": {
            "kind": "candle-ellipsoid",
            "dims": {"nx": 16, "ny": 16, "nz": 16},
            "seed": 3,
            "voxel_size": 0.012
        }},
        "views": [
            {"width": 48, "height": 36, "focal": 62.0,
             "pose": [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -0.55]]},
            {"width": 48, "height": 36, "focal": 62.0,
             "pose": [[0.0, 0.0, 1.0, -0.55], [0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]]}
        ],
        "optimizer": {"max_outer_iters": 3, "seed": 9},
        "output_dir": dir.join("optimize")
    });
    let opt_path = dir.join("optimize.json");
    std::fs::write(&opt_path, opt_job.to_string()).unwrap();
    let out = flamefit(&["optimize", "--config", path_str(&opt_path)]);
    assert!(out.status.success(), "optimize failed: {out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final energy"));
    for name in ["fire.fvol", "trace.csv", "snapshots.fvol", "config_resolved.json"] {
        assert!(dir.join("optimize").join(name).exists(), "missing {name}");
    }

    // Analyze the run.
    let out = flamefit(&[
        "analyze",
        "--trace",
        path_str(&dir.join("optimize/trace.csv")),
        "--snapshots",
        path_str(&dir.join("optimize/snapshots.fvol")),
        "--output-dir",
        path_str(&dir.join("analysis")),
    ]);
    assert!(out.status.success(), "analyze failed: {out:?}");
    assert!(dir.join("analysis/mds.csv").exists());
    assert!(dir.join("analysis/mds.svg").exists());

    // Tone map a rendered PFM.
    let out = flamefit(&[
        "tonemap",
        "--input",
        path_str(&pfm),
        "--key",
        "0.18",
        "--output",
        path_str(&dir.join("tonemapped.ppm")),
    ]);
    assert!(out.status.success(), "tonemap failed: {out:?}");
    assert!(dir.join("tonemapped.ppm").exists());

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn optimize_without_views_exits_2_naming_the_field() {
    let dir = tmp("noviews");
    std::fs::create_dir_all(&dir).unwrap();
    let job = serde_json::json!({
        "volume": {"synthetic": {
            "kind": "gaussian-plume",
            "dims": {"nx": 8, "ny": 8, "nz": 8},
            "seed": 1
        }},
        "views": [],
        "output_dir": dir.join("out")
    });
    let job_path = dir.join("job.json");
    std::fs::write(&job_path, job.to_string()).unwrap();
    let out = flamefit(&["optimize", "--config", path_str(&job_path)]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("views"), "diagnostic must name the field: {stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tmp("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let job_path = dir.join("job.json");
    std::fs::write(&job_path, "{ not json").unwrap();
    let out = flamefit(&["optimize", "--config", path_str(&job_path)]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_file_exits_3() {
    let out = flamefit(&["optimize", "--config", "/nonexistent/job.json"]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");

    let out = flamefit(&[
        "tonemap",
        "--input",
        "/nonexistent/image.pfm",
        "--output",
        "/tmp/flamefit-nowhere.ppm",
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn scene_demo_runs_from_files() {
    let dir = tmp("scene");
    std::fs::create_dir_all(&dir).unwrap();
    let recipe = serde_json::json!({
        "kind": "candle-ellipsoid",
        "dims": {"nx": 12, "ny": 12, "nz": 12},
        "seed": 4,
        "voxel_size": 0.02
    });
    let recipe_path = dir.join("recipe.json");
    std::fs::write(&recipe_path, recipe.to_string()).unwrap();
    assert!(flamefit(&[
        "synth",
        "--recipe",
        path_str(&recipe_path),
        "--output-dir",
        path_str(&dir.join("synth")),
    ])
    .status
    .success());

    let scene = serde_json::json!({
        "quads": [{
            "corner": [-1.0, -0.4, -1.0],
            "edge_u": [2.0, 0.0, 0.0],
            "edge_v": [0.0, 0.0, 2.0],
            "albedo": [0.8, 0.8, 0.8]
        }],
        "emitter": "volume",
        "view": {
            "width": 32, "height": 24, "focal": 30.0,
            "pose": [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.2], [0.0, 0.0, 1.0, -1.0]]
        },
        "samples": 64
    });
    let scene_path = dir.join("scene.json");
    std::fs::write(&scene_path, scene.to_string()).unwrap();
    let out = flamefit(&[
        "scene-demo",
        "--volume",
        path_str(&dir.join("synth/fire.fvol")),
        "--scene",
        path_str(&scene_path),
        "--output-dir",
        path_str(&dir.join("demo")),
    ]);
    assert!(out.status.success(), "scene-demo failed: {out:?}");
    assert!(dir.join("demo/demo.ppm").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_flag_controls_synthetic_output() {
    let dir = tmp("seeds");
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.join(sub);
        assert!(flamefit(&[
            "synth",
            "--kind",
            "gaussian-plume",
            "--dims",
            "12",
            "--seed",
            seed,
            "--output-dir",
            path_str(&out_dir),
        ])
        .status
        .success());
        std::fs::read(out_dir.join("fire.fvol")).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b, "same seed must give identical volumes");
    assert_ne!(a, c, "different seeds must differ");
    let _ = std::fs::remove_dir_all(&dir);
}
