//! Subcommand implementations. Each one resolves its inputs, creates a run
//! directory, writes its files and returns the directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use gastroem::analysis::{
    activation_times, cv_triangulation, frequencies_from_peaks, isochrone_export, read_peaks_csv, two_probe_velocity,
    write_cv_csv, write_frequencies_csv, write_peaks_csv, write_probe_csv,
};
use gastroem::axisym::{write_metrics_csv, ActivationFrame, AxisymModel, Trajectory};
use gastroem::ep::{EpConfig, EpRecording, EpSolver};
use gastroem::harmonic::fiber_directions;
use gastroem::mesh::vtk::{read_vtk, write_vtk, FieldData, Fields};
use gastroem::mesh::{read_native, write_native, DimKind, Mesh, Point};
use gastroem::mixture::MixtureParams;
use gastroem::params::ParameterFields;
use gastroem::presets::{nearest_nodes, Geometry};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, CouplingMode, RunConfig};
use crate::output::RunDir;

/// Resolved configuration plus the global flags.
pub struct Session {
    pub cfg: RunConfig,
    pub out_root: PathBuf,
    pub threads: usize,
}

/// Applies `f` to every item on up to `threads` scoped threads, keeping the
/// input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = items.iter().map(|_| None).collect();
    std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(item) = items.get(i) else { break };
                        done.push((i, f(item)));
                    }
                    done
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index visited")).collect()
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn build_mesh(cfg: &RunConfig, geometry: Geometry) -> anyhow::Result<Mesh> {
    Ok(match &cfg.mesh.path {
        Some(p) => read_native(p).with_context(|| format!("reading mesh {}", p.display()))?,
        None => geometry.build()?,
    })
}

fn minmax(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Laplace coordinates, excitability, weights, diffusivities and (on
/// surfaces) the fiber frame, written to `fields.vtk`.
pub fn fields(ctx: &Session) -> anyhow::Result<PathBuf> {
    let s = ctx.cfg.scenario();
    let mesh = build_mesh(&ctx.cfg, s.geometry)?;
    let f = ParameterFields::build(&mesh, &s.fields)?;
    let run = RunDir::create(&ctx.out_root, "fields", &ctx.cfg)?;

    let mut point: Vec<(&str, Vec<f64>)> = vec![("phi_ep", f.phi_ep.clone()), ("phi_fp", f.phi_fp.clone())];
    if let Some(gl) = &f.phi_gl {
        point.push(("phi_gl", gl.clone()));
    }
    point.extend([
        ("xi_l", f.coords.xi_l.clone()),
        ("xi_c", f.coords.xi_c.clone()),
        ("a_icc", f.a_icc.clone()),
        ("chi_icc", f.chi.icc.clone()),
        ("chi_gap", f.chi.gap.clone()),
        ("chi_smc", f.chi.smc.clone()),
    ]);
    let cell = [("sigma_icc", f.sigma.icc.clone()), ("sigma_smc", f.sigma.smc.clone())];
    for (name, v) in point.iter().chain(&cell) {
        let (lo, hi) = minmax(v);
        println!("{name:<10} min {lo:.6e}  max {hi:.6e}");
    }

    let point_fields: Fields = point.into_iter().map(|(n, v)| (n.to_string(), FieldData::Scalar(v))).collect();
    let mut cell_fields: Fields = cell.into_iter().map(|(n, v)| (n.to_string(), FieldData::Scalar(v))).collect();
    if mesh.dim_kind() == DimKind::Surface {
        let fr = fiber_directions(&mesh, &f.phi_ep, &f.phi_fp)?;
        cell_fields.push(("fiber_long".into(), FieldData::Vector(fr.long)));
        cell_fields.push(("fiber_circ".into(), FieldData::Vector(fr.circ)));
        cell_fields.push(("normal".into(), FieldData::Vector(fr.normal)));
    }
    write_vtk(&mesh, &point_fields, &cell_fields, run.file("fields.vtk"))?;
    write_native(&mesh, run.file("mesh.msh"))?;
    run.finish(&ctx.cfg)
}

fn run_ep(cfg: &RunConfig, geometry: Geometry, ep: EpConfig, probe_points: &[Point]) -> anyhow::Result<(Mesh, EpRecording)> {
    let s = cfg.scenario();
    let mesh = build_mesh(cfg, geometry)?;
    let f = ParameterFields::build(&mesh, &s.fields)?;
    let ep = EpConfig { probes: nearest_nodes(&mesh, probe_points), ..ep };
    let rec = EpSolver::new(&mesh, &(&f).into(), ep)?.run()?;
    Ok((mesh, rec))
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRow {
    index: usize,
    t: f64,
    file: String,
}

/// Monodomain run: mesh, snapshots, probe series and the peak log.
pub fn ep_run(ctx: &Session) -> anyhow::Result<PathBuf> {
    let s = ctx.cfg.scenario();
    let (mesh, rec) = run_ep(&ctx.cfg, s.geometry, s.ep.clone(), &s.probe_points)?;
    let run = RunDir::create(&ctx.out_root, "ep-run", &ctx.cfg)?;
    write_native(&mesh, run.file("mesh.msh"))?;

    let snaps = run.subdir("snapshots")?;
    let mut index = csv::Writer::from_path(snaps.join("index.csv"))?;
    for (k, sn) in rec.snapshots.iter().enumerate() {
        let file = format!("snap_{k:05}.vtk");
        let fields: Fields =
            vec![("v_icc".into(), FieldData::Scalar(sn.v_icc.clone())), ("v_smc".into(), FieldData::Scalar(sn.v_smc.clone()))];
        write_vtk(&mesh, &fields, &Fields::new(), snaps.join(&file))?;
        index.serialize(SnapshotRow { index: k, t: sn.t, file })?;
    }
    index.flush()?;

    let probes = run.subdir("probes")?;
    for p in &rec.probes {
        write_probe_csv(&probes.join(format!("probe_{}.csv", p.node)), p)?;
    }
    write_peaks_csv(&run.file("peaks.csv"), &rec.peaks)?;
    let active = rec.peaks.iter().filter(|p| !p.is_empty()).count();
    println!(
        "{} nodes, {} snapshots to t = {} s, {active} nodes with peaks",
        mesh.n_nodes(),
        rec.snapshots.len(),
        rec.final_state.t
    );
    run.finish(&ctx.cfg)
}

/// Frequency map, activation-based CV and isochrones of an `ep-run`
/// recording.
pub fn analyze(ctx: &Session, recording: &Path) -> anyhow::Result<PathBuf> {
    let mesh = read_native(recording.join("mesh.msh")).with_context(|| format!("reading recording {}", recording.display()))?;
    let peaks = read_peaks_csv(&recording.join("peaks.csv"), mesh.n_nodes())?;
    let out = &ctx.cfg.output;
    let run = RunDir::create(&ctx.out_root, "analyze", &ctx.cfg)?;

    // short runs get a single window spanning the whole recording
    let t_end = ctx.cfg.ep.t_end_s;
    let freq = frequencies_from_peaks(&peaks, 0.0, t_end, out.frequency_window_s.min(t_end))?;
    write_frequencies_csv(&run.file("frequencies.csv"), &freq)?;
    for (k, win) in freq.iter().enumerate() {
        let active: Vec<f64> = win.iter().flatten().copied().collect();
        let (lo, hi) = minmax(&active);
        match active.is_empty() {
            true => println!("window {k}: no active nodes"),
            false => println!("window {k}: {} of {} nodes active, {lo:.4} to {hi:.4} cpm", active.len(), win.len()),
        }
    }

    let [a0, a1] = out.activation_window_s;
    let act = activation_times(&peaks, a0, a1);
    if peaks.iter().all(Vec::is_empty) {
        eprintln!("warning: recording has no activity; frequency map is inactive");
    } else if act.iter().all(Vec::is_empty) {
        eprintln!("warning: no activations in [{a0}, {a1}) s; skipping velocity and isochrones");
    } else {
        isochrone_export(&mesh, &act, out.isochrone_interval_s, &run.file("isochrones"))?;
        if mesh.dim_kind() == DimKind::Surface {
            let cv = cv_triangulation(&mesh, &act, None)?;
            write_cv_csv(&run.file("cv.csv"), &cv)?;
            let speeds: Vec<f64> = cv.speed.iter().zip(&cv.valid).filter(|(_, ok)| **ok).map(|(s, _)| *s).collect();
            let mean = speeds.iter().sum::<f64>() / speeds.len().max(1) as f64;
            println!("{} of {} triangles with a valid velocity, mean speed {mean:.4} mm/s", speeds.len(), cv.valid.len());
        } else {
            eprintln!("warning: velocity fields need a triangle mesh; skipping cv.csv");
        }
    }
    run.finish(&ctx.cfg)
}

/// SMC potential snapshots along the axis, sorted by position.
struct AxialRecording {
    x: Vec<f64>,
    frames: Vec<(f64, Vec<f64>)>,
}

impl AxialRecording {
    fn new(mesh: &Mesh, frames: Vec<(f64, Vec<f64>)>) -> anyhow::Result<Self> {
        let on_axis = mesh.nodes().iter().all(|p| p.y.abs() < 1e-9 && p.z.abs() < 1e-9);
        if mesh.dim_kind() != DimKind::Line || !on_axis {
            return Err(config_error("coupled runs need a line or cylinder electrophysiology mesh along the x axis"));
        }
        let mut order: Vec<usize> = (0..mesh.n_nodes()).collect();
        order.sort_by(|&a, &b| mesh.node(a).x.total_cmp(&mesh.node(b).x));
        let x: Vec<f64> = order.iter().map(|&i| mesh.node(i).x).collect();
        let frames = frames.into_iter().map(|(t, v)| (t, order.iter().map(|&i| v[i]).collect())).collect();
        Ok(Self { x, frames })
    }

    fn load(dir: &Path) -> anyhow::Result<Self> {
        let mesh = read_native(dir.join("mesh.msh")).with_context(|| format!("reading recording {}", dir.display()))?;
        let mut index = csv::Reader::from_path(dir.join("snapshots/index.csv"))?;
        let mut frames = Vec::new();
        for row in index.deserialize() {
            let row: SnapshotRow = row?;
            let data = read_vtk(dir.join("snapshots").join(&row.file))?;
            match data.point_fields.get("v_smc") {
                Some(FieldData::Scalar(v)) if v.len() == mesh.n_nodes() => frames.push((row.t, v.clone())),
                _ => return Err(gastroem::Error::Parse(format!("{} lacks a nodal v_smc field", row.file)).into()),
            }
        }
        Self::new(&mesh, frames)
    }

    /// Frames at or after `t_start`.
    fn after(&self, t_start: f64) -> anyhow::Result<Vec<&(f64, Vec<f64>)>> {
        let frames: Vec<_> = self.frames.iter().filter(|(t, _)| *t >= t_start - 1e-9).collect();
        if frames.is_empty() {
            return Err(config_error(format!("recording has no snapshot at or after mech.t_start_s = {t_start}")));
        }
        Ok(frames)
    }

    /// The frame with the largest SMC potential inside the window.
    fn strongest(&self, t_start: f64, window: (f64, f64)) -> anyhow::Result<&(f64, Vec<f64>)> {
        let peak = |v: &[f64]| {
            v.iter().zip(&self.x).filter(|(_, x)| (window.0..=window.1).contains(*x)).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max)
        };
        let frames = self.after(t_start)?;
        Ok(frames.into_iter().max_by(|a, b| peak(&a.1).total_cmp(&peak(&b.1))).expect("non-empty"))
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    alpha_c: f64,
    alpha_l: f64,
    a_c_mm: f64,
    h_t_max_mm: f64,
}

fn write_outputs(run: &RunDir, model: &AxisymModel, traj: &Trajectory, n_theta: usize) -> anyhow::Result<()> {
    write_metrics_csv(&run.file("metrics.csv"), &traj.times, &traj.metrics)?;
    if let Some(last) = traj.states.last() {
        model.write_profile_csv(last, &run.file("profile.csv"))?;
        model.write_surface_vtk(last, n_theta, &run.file("surface.vtk"))?;
    }
    if let Some(m) = traj.metrics.last() {
        println!("A_c {:.4} mm, h_t,max {:.4} mm", m.a_c, m.h_t_max);
    }
    Ok(())
}

/// Prestressed cylinder driven by SMC activation, from a recording or a
/// fresh EP run.
pub fn coupled_run(ctx: &Session, recording: Option<&Path>, sweep: bool) -> anyhow::Result<PathBuf> {
    let s = ctx.cfg.scenario();
    if recording.is_none() && matches!(s.geometry, Geometry::Torus { .. }) {
        return Err(config_error("coupled runs need a line or cylinder electrophysiology mesh along the x axis"));
    }
    let ep = match recording {
        Some(dir) => AxialRecording::load(dir)?,
        None => {
            let (mesh, rec) = run_ep(&ctx.cfg, s.geometry, s.ep.clone(), &[])?;
            AxialRecording::new(&mesh, rec.snapshots.into_iter().map(|sn| (sn.t, sn.v_smc)).collect())?
        }
    };
    let c = &s.coupling;
    let base = AxisymModel::new(s.axisym.clone(), s.material.clone())?;
    let pre = base.prestress_solve()?;
    println!("prestress: {} iterations, |u| {:.3e} mm", pre.iterations, pre.u_inf);
    let run = RunDir::create(&ctx.out_root, "coupled-run", &ctx.cfg)?;
    let n_theta = ctx.cfg.output.surface_n_theta;

    if sweep {
        let (t, v) = ep.strongest(c.t_start, c.window)?;
        let gamma = base.gamma_from_potential(&ep.x, v)?;
        println!("frozen activation from t = {t} s");
        let sw = &ctx.cfg.sweep;
        let grid: Vec<(f64, f64)> = sw.alpha_c.iter().flat_map(|&ac| sw.alpha_l.iter().map(move |&al| (ac, al))).collect();
        let rows = par_map(&grid, ctx.threads, |&(alpha_c, alpha_l)| -> anyhow::Result<SweepRow> {
            let model = AxisymModel::new(s.axisym.clone(), MixtureParams { alpha_c, alpha_l, ..s.material.clone() })?;
            let traj = model.frozen_activation(&pre.state, &gamma, c.frozen_steps, c.window)?;
            let m = traj.metrics.last().copied().context("empty trajectory")?;
            Ok(SweepRow { alpha_c, alpha_l, a_c_mm: m.a_c, h_t_max_mm: m.h_t_max })
        });
        let mut w = csv::Writer::from_path(run.file("sweep.csv"))?;
        for row in rows {
            let row = row?;
            println!("alpha_c {:.2} alpha_l {:.2}: A_c {:.4} mm, h_t,max {:.4} mm", row.alpha_c, row.alpha_l, row.a_c_mm, row.h_t_max_mm);
            w.serialize(row)?;
        }
        w.flush()?;
        return run.finish(&ctx.cfg);
    }

    let traj = match ctx.cfg.mech.coupling {
        CouplingMode::Frozen => {
            let (t, v) = ep.strongest(c.t_start, c.window)?;
            println!("frozen activation from t = {t} s");
            let gamma = base.gamma_from_potential(&ep.x, v)?;
            base.frozen_activation(&pre.state, &gamma, c.frozen_steps, c.window)?
        }
        CouplingMode::Trajectory => {
            let frames = ep
                .after(c.t_start)?
                .into_iter()
                .map(|(t, v)| Ok(ActivationFrame { t: *t, gamma: base.gamma_from_potential(&ep.x, v)? }))
                .collect::<anyhow::Result<Vec<_>>>()?;
            base.coupled_run(&pre.state, &frames, c.window)?
        }
    };
    write_outputs(&run, &base, &traj, n_theta)?;
    run.finish(&ctx.cfg)
}

#[derive(Debug, Serialize)]
struct ConvergeRow {
    dt_s: f64,
    h_mm: f64,
    v_c_mm_s: f64,
    rel_err: f64,
    within_tol: bool,
}

/// Two-probe conduction velocity over the dt x h grid, compared with the
/// finest run.
pub fn converge(ctx: &Session) -> anyhow::Result<PathBuf> {
    let s = ctx.cfg.scenario();
    let sw = &ctx.cfg.sweep;
    if ctx.cfg.mesh.path.is_some() {
        return Err(config_error("converge regenerates the mesh per spacing; remove mesh.path"));
    }
    let with_h = |h: f64| match s.geometry {
        Geometry::Line { length, .. } => Ok(Geometry::Line { length, h }),
        Geometry::Cylinder { length, radius, .. } => Ok(Geometry::Cylinder { length, radius, h }),
        Geometry::Torus { .. } => Err(config_error("converge needs a line or cylinder geometry")),
    };
    let grid: Vec<(f64, f64)> = sw.dt_s.iter().flat_map(|&dt| sw.h_mm.iter().map(move |&h| (dt, h))).collect();
    let [x1, x2] = sw.probe_x_mm;
    let probes = [Point::new(x1, 0.0, 0.0), Point::new(x2, 0.0, 0.0)];
    let speeds = par_map(&grid, ctx.threads, |&(dt, h)| -> anyhow::Result<Option<f64>> {
        let ep = EpConfig { dt, t_end: sw.t_end_s, snapshot_every: sw.t_end_s, ..s.ep.clone() };
        let (mesh, rec) = run_ep(&ctx.cfg, with_h(h)?, ep, &probes)?;
        let (t, v1): (Vec<f64>, Vec<f64>) = rec.probes[0].samples.iter().map(|p| (p.t, p.v_icc)).unzip();
        let v2: Vec<f64> = rec.probes[1].samples.iter().map(|p| p.v_icc).collect();
        let (p1, p2) = (mesh.node(rec.probes[0].node).x, mesh.node(rec.probes[1].node).x);
        Ok(two_probe_velocity(&t, &v1, &v2, p1, p2, sw.level, sw.t_after_s))
    })
    .into_iter()
    .collect::<anyhow::Result<Vec<_>>>()?;

    let finest = (0..grid.len())
        .min_by(|&a, &b| grid[a].0.total_cmp(&grid[b].0).then(grid[a].1.total_cmp(&grid[b].1)))
        .context("empty convergence grid")?;
    let reference = speeds[finest];
    if reference.is_none() {
        eprintln!("warning: the finest run has no front crossing both probes");
    }
    let run = RunDir::create(&ctx.out_root, "converge", &ctx.cfg)?;
    let mut w = csv::Writer::from_path(run.file("converge.csv"))?;
    for (&(dt_s, h_mm), v) in grid.iter().zip(&speeds) {
        let v_c = v.unwrap_or(f64::NAN);
        let rel_err = reference.map_or(f64::NAN, |r| (v_c - r).abs() / r.abs());
        let within_tol = rel_err < sw.tolerance;
        println!("dt {dt_s} s, h {h_mm} mm: v_c {v_c:.4} mm/s, relative error {:.2}%", 100.0 * rel_err);
        w.serialize(ConvergeRow { dt_s, h_mm, v_c_mm_s: v_c, rel_err, within_tol })?;
    }
    w.flush()?;
    run.finish(&ctx.cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_for_any_thread_count() {
        let items: Vec<u64> = (0..37).collect();
        let serial: Vec<u64> = items.iter().map(|x| x * x).collect();
        for t in [1, 2, 5, 64] {
            assert_eq!(par_map(&items, t, |x| x * x), serial);
        }
        assert!(par_map(&Vec::<u64>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn axial_recording_sorts_nodes_and_rejects_surfaces() {
        let mesh = Mesh::new(
            vec![Point::new(2.0, 0.0, 0.0), Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)],
            gastroem::mesh::Topology::Lines(vec![[1, 2], [2, 0]]),
            Default::default(),
        )
        .unwrap();
        let rec = AxialRecording::new(&mesh, vec![(1.0, vec![0.2, 0.0, 0.1]), (2.0, vec![0.0, 0.9, 0.0])]).unwrap();
        assert_eq!(rec.x, [0.0, 1.0, 2.0]);
        assert_eq!(rec.frames[0].1, [0.0, 0.1, 0.2]);
        assert_eq!(rec.strongest(0.0, (0.0, 2.0)).unwrap().0, 2.0);
        assert_eq!(rec.strongest(0.0, (1.5, 2.0)).unwrap().0, 1.0);
        assert!(rec.after(3.0).unwrap_err().downcast_ref::<ConfigError>().is_some());

        let torus = Geometry::Torus { r1: 10.0, r2: 4.0, opening_deg: 90.0, h: 3.0 }.build().unwrap();
        let err = AxialRecording::new(&torus, vec![]).err().unwrap();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }
}
