use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gastroem::mesh::read_native;
use gastroem::mesh::vtk::{read_vtk, FieldData};

fn gastroem(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gastroem"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GASTROEM_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Runs and returns the run directory printed on success.
fn ok_run(out: &Path, args: &[&str]) -> (PathBuf, Output) {
    let o = gastroem(out, args);
    assert_eq!(code(&o), 0, "{args:?}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let dir = stdout.lines().find_map(|l| l.strip_prefix("output: ")).expect("output line");
    (PathBuf::from(dir), o)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn scalar(data: &BTreeMap<String, FieldData>, name: &str) -> Vec<f64> {
    match data.get(name) {
        Some(FieldData::Scalar(v)) => v.clone(),
        other => panic!("field {name}: {other:?}"),
    }
}

#[test]
fn fields_on_the_line_are_uniform_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, o) = ok_run(tmp.path(), &["fields", "--preset", "line250"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sigma_icc  min 6.000000e-1  max 6.000000e-1"));
    let data = read_vtk(a.join("fields.vtk")).unwrap();
    assert!(scalar(&data.cell_fields, "sigma_icc").iter().all(|&s| s == 0.6));
    let phi = scalar(&data.point_fields, "phi_ep");
    assert_eq!((phi[0], phi[phi.len() - 1]), (0.0, 1.0));

    let (b, _) = ok_run(tmp.path(), &["fields", "--preset", "line250"]);
    assert_ne!(a, b);
    for f in ["fields.vtk", "mesh.msh", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn torus_fields_have_largest_sigma_on_the_greater_curvature() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "coarse.toml", "[mesh]\nh_mm = 8.0\n");
    let (dir, _) = ok_run(tmp.path(), &["fields", "--preset", "torus90", "--config", cfg.to_str().unwrap()]);
    let mesh = read_native(dir.join("mesh.msh")).unwrap();
    let data = read_vtk(dir.join("fields.vtk")).unwrap();
    let sigma = scalar(&data.cell_fields, "sigma_icc");
    assert!(matches!(data.cell_fields.get("fiber_long"), Some(FieldData::Vector(v)) if v.len() == mesh.n_elements()));
    let band = |set: &str| {
        let nodes = mesh.boundary_set(set).unwrap();
        let v: Vec<f64> =
            (0..mesh.n_elements()).filter(|&e| mesh.element(e).iter().any(|i| nodes.contains(i))).map(|e| sigma[e]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(band("greater") > 1.3 * band("lesser"));
}

#[test]
fn missing_boundary_set_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[fields]\nphi_fp = { prox = 0.0, antrum = 1.0 }\n");
    let o = gastroem(tmp.path(), &["fields", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("antrum"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.toml", "[ep]\ndt_s = 0.1\ntime_step = 0.1\n");
    let wrong_type = write_config(tmp.path(), "w.toml", "[mech]\nalpha_c = \"high\"\n");
    let cases: [&[&str]; 4] = [
        &["fields", "--config", unknown.to_str().unwrap()],
        &["fields", "--config", wrong_type.to_str().unwrap()],
        &["fields", "--preset", "stomach"],
        &["fields", "--config", "/nonexistent/run.toml"],
    ];
    for args in cases {
        let o = gastroem(tmp.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(String::from_utf8_lossy(&gastroem(tmp.path(), cases[0]).stderr).contains("time_step"));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 0);
}

#[test]
fn analyze_of_a_missing_recording_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let o = gastroem(tmp.path(), &["analyze", "--preset", "line250", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ep_smoke_run_and_empty_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", "[mesh]\nh_mm = 5.0\n[ep]\nt_end_s = 1.0\nsnapshot_every_s = 0.5\n");
    let (run, _) = ok_run(tmp.path(), &["ep-run", "--config", cfg.to_str().unwrap()]);

    let index = csv_rows(&run.join("snapshots/index.csv"));
    assert_eq!(index.len(), 2);
    assert_eq!(index[1][1], "1.0");
    let snap = read_vtk(run.join("snapshots").join(&index[0][2])).unwrap();
    assert_eq!(scalar(&snap.point_fields, "v_smc").len(), 51);
    let mut probes: Vec<String> = fs::read_dir(run.join("probes")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into()).collect();
    probes.sort();
    assert_eq!(probes, ["probe_12.csv", "probe_25.csv", "probe_37.csv"]);
    assert_eq!(csv_rows(&run.join("probes/probe_25.csv")).len(), 11);
    assert!(csv_rows(&run.join("peaks.csv")).is_empty());

    // the manifest echoes every default key
    let manifest: toml::Table = fs::read_to_string(run.join("manifest.toml")).unwrap().parse().unwrap();
    let defaults: toml::Table = include_str!("../config/defaults.toml").parse().unwrap();
    fn keys(t: &toml::Table, prefix: &str, out: &mut Vec<String>) {
        for (k, v) in t {
            let p = format!("{prefix}{k}");
            match v {
                toml::Value::Table(sub) if !k.starts_with("phi_") => keys(sub, &format!("{p}."), out),
                _ => out.push(p),
            }
        }
    }
    let (mut want, mut got) = (Vec::new(), Vec::new());
    keys(&defaults, "", &mut want);
    keys(manifest["config"].as_table().unwrap(), "", &mut got);
    assert!(!want.is_empty());
    assert_eq!(got, want);
    assert_eq!(manifest["config"]["ep"]["t_end_s"].as_float(), Some(1.0));
    let outputs: Vec<&str> = manifest["run"]["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"peaks.csv") && outputs.contains(&"snapshots/snap_00001.vtk"));
    let hash = manifest["run"]["config_hash"].as_str().unwrap();
    assert!(run.file_name().unwrap().to_string_lossy().contains(&hash[..8]));

    // rerunning from the recorded config reproduces the outputs bit for bit
    let (again, _) = ok_run(tmp.path(), &["ep-run", "--config", run.join("config.toml").to_str().unwrap()]);
    for f in ["peaks.csv", "probes/probe_25.csv", "snapshots/snap_00001.vtk", "config.toml"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let o = gastroem(tmp.path(), &["analyze", run.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let out = PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().find_map(|l| l.strip_prefix("output: ")).unwrap());
    let freq = csv_rows(&out.join("frequencies.csv"));
    assert_eq!(freq.len(), 51);
    assert!(freq.iter().all(|r| r[2] == "NaN" && r[3] == "false"));
    assert!(!out.join("isochrones.vtk").exists());
}

#[test]
fn entrained_line_shares_one_frequency() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, _) = ok_run(tmp.path(), &["ep-run", "--preset", "line250"]);
    let (out, _) = ok_run(tmp.path(), &["analyze", run.to_str().unwrap()]);
    let freq = csv_rows(&out.join("frequencies.csv"));
    assert_eq!(freq.len(), 5 * 501);
    let last: Vec<f64> = freq.iter().filter(|r| r[1] == "4").map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(last.len(), 501);
    assert!(last.iter().all(|f| (f - 3.2).abs() <= 0.15), "{:?}", last.iter().fold((f64::MAX, f64::MIN), |a, &f| (a.0.min(f), a.1.max(f))));
    // line meshes get isochrones but no triangle velocity field
    assert!(out.join("isochrones.vtk").exists() && out.join("isochrones.csv").exists());
    assert!(!out.join("cv.csv").exists());
}

#[test]
fn torus_analysis_writes_velocity_and_isochrones() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.toml",
        "[mesh]\nh_mm = 6.0\n[ep]\nt_end_s = 60.0\n[output]\nactivation_window_s = [20.0, 60.0]\nfrequency_window_s = 60.0\n",
    );
    let (run, _) = ok_run(tmp.path(), &["ep-run", "--preset", "torus90", "--config", cfg.to_str().unwrap()]);
    let (out, _) = ok_run(tmp.path(), &["analyze", run.to_str().unwrap()]);
    let mesh = read_native(run.join("mesh.msh")).unwrap();
    let cv = csv_rows(&out.join("cv.csv"));
    assert_eq!(cv.len(), mesh.n_elements());
    assert!(cv.iter().any(|r| r[5] == "true"));
    let iso = read_vtk(out.join("isochrones.vtk")).unwrap();
    assert_eq!(scalar(&iso.point_fields, "activation_time").len(), mesh.n_nodes());
}

#[test]
fn coupled_sweep_writes_sixteen_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[mesh]\nh_mm = 5.0\n[ep]\nt_end_s = 2.0\nsnapshot_every_s = 1.0\n[mech]\nt_start_s = 1.0\n");
    let (run, _) = ok_run(tmp.path(), &["coupled-run", "--preset", "cyl250", "--config", cfg.to_str().unwrap(), "--sweep", "--threads", "4"]);
    let rows = csv_rows(&run.join("sweep.csv"));
    assert_eq!(rows.len(), 16);
    let grid: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(grid[0], ("0.0".into(), "0.0".into()));
    assert_eq!(grid[15], ("0.6".into(), "0.6".into()));
    // the resting SMC potential is below threshold, so nothing contracts
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() < 0.1));
}

#[test]
fn coupled_run_from_a_recording() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[mesh]\nh_mm = 5.0\n[ep]\nt_end_s = 2.0\nsnapshot_every_s = 1.0\n[mech]\nt_start_s = 1.0\n");
    let c = cfg.to_str().unwrap();
    let (rec, _) = ok_run(tmp.path(), &["ep-run", "--preset", "cyl250", "--config", c]);
    let (run, _) = ok_run(tmp.path(), &["coupled-run", "--preset", "cyl250", "--config", c, "--recording", rec.to_str().unwrap()]);
    let metrics = csv_rows(&run.join("metrics.csv"));
    assert_eq!(metrics.len(), 4);
    assert!(run.join("profile.csv").exists() && run.join("surface.vtk").exists());

    let traj = write_config(tmp.path(), "t.toml", "[mesh]\nh_mm = 5.0\n[ep]\nt_end_s = 2.0\nsnapshot_every_s = 1.0\n[mech]\nt_start_s = 1.0\ncoupling = \"trajectory\"\n");
    let (run, _) = ok_run(tmp.path(), &["coupled-run", "--preset", "cyl250", "--config", traj.to_str().unwrap(), "--recording", rec.to_str().unwrap()]);
    let times: Vec<String> = csv_rows(&run.join("metrics.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(times, ["1", "2"]);

    // the structure is longer than the recorded domain
    let longer = write_config(tmp.path(), "l.toml", "[mesh]\nh_mm = 5.0\nlength_mm = 300.0\n[mech]\nt_start_s = 1.0\n");
    let o = gastroem(tmp.path(), &["coupled-run", "--preset", "cyl250", "--config", longer.to_str().unwrap(), "--recording", rec.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not cover"));

    let o = gastroem(tmp.path(), &["coupled-run", "--preset", "torus90"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn converge_single_cell_grid_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[sweep]\ndt_s = [0.2]\nh_mm = [2.0]\nt_end_s = 200.0\nt_after_s = 100.0\n");
    let (run, _) = ok_run(tmp.path(), &["converge", "--config", cfg.to_str().unwrap()]);
    let rows = csv_rows(&run.join("converge.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..2], ["0.2".to_string(), "2.0".to_string()]);
    let v: f64 = rows[0][2].parse().unwrap();
    assert!(v > 0.0, "{rows:?}");
    assert_eq!((rows[0][3].as_str(), rows[0][4].as_str()), ("0.0", "true"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_gastroem"))
        .args(["fields", "--preset", "line250"])
        .env("GASTROEM_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let runs: Vec<_> = fs::read_dir(&root).unwrap().collect();
    assert_eq!(runs.len(), 1);
}
