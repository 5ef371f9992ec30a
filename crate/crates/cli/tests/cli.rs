use std::path::Path;
use std::process::{Command, Output};

use fracpat_core::io::read_field;
use fracpat_core::manifest::RunManifest;

const SMALL: &str = "grid.h = 0.0625
alpha = 0.5
T = 0.5
source.kind = bump
source.cx = 0.1
source.radius = 0.5
medium.damping = bump
medium.a_amp = 0.05
medium.a_radius = 0.3
record.snapshots = 0, 0.25
";

fn fracpat(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fracpat"));
    cmd.args(args).env_remove("FRACPAT_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    let m = RunManifest::read(&dir.join("manifest.json")).unwrap();
    m.verify(dir).unwrap();
    m
}

#[test]
fn forward_writes_every_advertised_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "f.cfg", SMALL);
    let out = dir.path().join("run");
    let o = fracpat(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("default: cfl = 0.45"));
    let m = manifest(&out);
    let names: Vec<&str> = m.outputs.iter().map(|e| e.path.as_str()).collect();
    for want in ["config.cfg", "trace.csv", "u_final.f64", "u_final.pgm", "snapshot_000.f64", "snapshot_001.pgm", "energy.csv"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert!(m.outputs.iter().all(|e| e.bytes > 0));
    let energy = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,E,pairing\n"));
    let (u, h) = read_field::<f64>(&out.join("u_final.f64")).unwrap();
    assert_eq!(h, 0.0625);
    assert!(u.is_finite());
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", &SMALL.replace("alpha = 0.5", "alpha = 1.0"));
    let o = fracpat(&["forward", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2: alpha must lie strictly in (0,1)"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "b.cfg", &format!("{SMALL}grid.spacing = 2\n"));
    let o = fracpat(&["forward", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 11: unknown key"));

    let cfg = write_config(dir.path(), "c.cfg", &SMALL.replace("0.0625", "-0.0625"));
    assert_eq!(fracpat(&["forward", "--config", &cfg], &[]).status.code(), Some(2));

    let o = fracpat(&["check", "--only", "42"], &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "d.cfg", SMALL);
    let o = fracpat(&["forward", "--config", &cfg], &[("FRACPAT_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FRACPAT_THREADS"));
}

#[test]
fn reconstruct_from_a_recorded_trace() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("T = 0.5", "T = 2.5").replace("record.snapshots = 0, 0.25", "record.snapshots = 0");
    let cfg = write_config(dir.path(), "r.cfg", &text);
    let fwd = dir.path().join("fwd");
    let o = fracpat(&["forward", "--config", &cfg, "--out", fwd.to_str().unwrap()], &[("FRACPAT_THREADS", "1")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let rec = dir.path().join("rec");
    let o = fracpat(
        &[
            "reconstruct",
            "--config",
            &cfg,
            "--trace",
            fwd.join("trace.csv").to_str().unwrap(),
            "--truth",
            fwd.join("snapshot_000.f64").to_str().unwrap(),
            "--out",
            rec.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&rec);
    assert!(!m.diverged);
    let err: f64 = m.checks.iter().find(|c| c.name == "relative_l2_error").unwrap().detail.parse().unwrap();
    assert!(err < 0.05, "{err}");
    let report = std::fs::read_to_string(rec.join("report.csv")).unwrap();
    assert!(report.starts_with("m,term_norm,sum_norm,ratio,error\n"));
    assert!(rec.join("reconstruction.pgm").exists());
}

#[test]
fn divergent_series_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = "grid.h = 0.03125
alpha = 0.5
T = 2.5
source.kind = bump
source.cx = 0.1
source.cy = -0.1
source.radius = 0.5
medium.c0 = 1.0
medium.damping = bump
medium.a_amp = 200
medium.a_radius = 0.9
";
    let cfg = write_config(dir.path(), "d.cfg", text);
    let out = dir.path().join("div");
    let o = fracpat(&["reconstruct", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(manifest(&out).diverged);
}

#[test]
fn geometry_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = "grid.h = 0.0625\nT = 0.3\ngeometry.s_lo = 0.3\ngeometry.leaves = 3\ngeometry.directions = 8\n";
    let cfg = write_config(dir.path(), "g.cfg", text);
    let out = dir.path().join("geo");
    let o = fracpat(&["geometry", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    manifest(&out);
    let leaves = std::fs::read_to_string(out.join("leaves.csv")).unwrap();
    let rows: Vec<&str> = leaves.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        // Euclidean circles: kappa = 1/s
        assert!((cells[1] * cells[0] - 1.0).abs() < 0.05, "{row}");
        assert_eq!(cells[3], 1.0);
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("t1_failures = 0"));
    assert!(out.join("tau.f64").exists());
}

#[test]
fn study_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = "alpha = 0.5\nT = 1.5\nsource.kind = bump\nsource.radius = 0.5\nmedium.damping = bump\nmedium.a_amp = 0.05\nmedium.a_radius = 0.3\n";
    let cfg = write_config(dir.path(), "s.cfg", text);
    let out = dir.path().join("study");
    let o = fracpat(&["study", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(manifest(&out).checks.iter().all(|c| c.passed));

    let out = dir.path().join("check");
    let o = fracpat(&["check", "--only", "1,2", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    assert_eq!(manifest(&out).checks.len(), 2);
}
