use std::path::Path;
use std::process::{Command, Output};

use lidarmotion::pcio::{read_flow, write_velodyne_bin, PointCloud};
use nalgebra::Vector3;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidarmotion")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn equivariance_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&run(&["experiment-equivariance", "--thetas", "0.2,0.4"], dir.path()));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "theta,world_spread,local_spread,closed_form");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - v[3]).abs() < 1e-9 && v[2] == 0.0, "{l}");
    }
    let written = stdout(&run(&["experiment-equivariance", "--out", "res"], dir.path()));
    assert!(written.trim().ends_with("equivariance.csv"));
    assert_eq!(std::fs::read_to_string(dir.path().join("res/equivariance.csv")).unwrap().lines().count(), 11);
}

fn cube_cloud(shift: Vector3<f64>) -> PointCloud {
    let mut pts = Vec::new();
    for i in 0..12 {
        for j in 0..8 {
            for k in 0..3 {
                pts.push(Vector3::new(i as f64 * 0.75 + (j as f64 * 0.37).sin(), j as f64 * 0.5, k as f64 * 0.4 + 0.05 * i as f64) + shift);
            }
        }
    }
    PointCloud::from_points(pts).unwrap().quantized()
}

#[test]
fn icp_flow_writes_motion_and_flow() {
    let dir = tempfile::tempdir().unwrap();
    write_velodyne_bin(&cube_cloud(Vector3::zeros()), dir.path().join("a.bin")).unwrap();
    write_velodyne_bin(&cube_cloud(Vector3::new(0.25, -0.125, 0.0)), dir.path().join("b.bin")).unwrap();
    stdout(&run(&["icp-flow", "a.bin", "b.bin", "--out", "o"], dir.path()));
    let motion: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/motion.json")).unwrap()).unwrap();
    let t = motion["translation"].as_array().unwrap();
    assert!((t[0].as_f64().unwrap() - 0.25).abs() < 1e-5, "{motion}");
    assert!((t[1].as_f64().unwrap() + 0.125).abs() < 1e-5);
    let flow = read_flow(dir.path().join("o/flow.bin")).unwrap();
    assert_eq!(flow.len(), 288);
    assert!(flow.iter().all(|v| (v - Vector3::new(0.25, -0.125, 0.0)).norm() < 1e-4));
}

#[test]
fn voxelize_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_velodyne_bin(&cube_cloud(Vector3::new(5.0, 0.0, -1.0)), dir.path().join("s.bin")).unwrap();
    let out = stdout(&run(&["voxelize", "s.bin"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let total = v["retained_points"].as_u64().unwrap() + v["subsampled_away"].as_u64().unwrap() + v["outside_grid"].as_u64().unwrap();
    assert_eq!(total, 288);
    assert!(v["occupied_voxels"].as_u64().unwrap() > 0);
}

#[test]
fn bad_inputs_fail_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["voxelize", "missing.bin"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.bin"));

    std::fs::write(dir.path().join("bad.toml"), "[nonsense]\n").unwrap();
    let o = run(&["experiment-equivariance", "--config", "bad.toml"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));

    std::fs::write(dir.path().join("s.bin"), [0u8; 16]).unwrap();
    let o = run(&["augment", "--scan", "s.bin", "--meshes", "."], dir.path());
    assert!(!o.status.success(), "augment without --out must fail");
}
