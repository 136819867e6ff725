//! Post-processing of EP recordings: peaks, frequencies, activation times,
//! conduction velocity and isochrones.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ep::ProbeSeries;
use crate::mesh::vtk::{write_vtk, FieldData, Fields};
use crate::mesh::{Mesh, Point, Topology};

/// Streaming peak detector: local maxima at or above `threshold`, refined by
/// a parabola through the three samples around each discrete maximum. Peaks
/// closer than `min_separation` collapse onto the higher one.
#[derive(Debug, Clone)]
pub struct PeakTracker {
    threshold: f64,
    min_separation: f64,
    window: [(f64, f64); 3],
    seen: usize,
    peaks: Vec<(f64, f64)>,
}

impl PeakTracker {
    pub fn new(threshold: f64, min_separation: f64) -> Self {
        Self { threshold, min_separation, window: [(0.0, 0.0); 3], seen: 0, peaks: Vec::new() }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.window = [self.window[1], self.window[2], (t, v)];
        self.seen += 1;
        if self.seen < 3 {
            return;
        }
        let [(t0, y0), (t1, y1), (t2, y2)] = self.window;
        if !(y1 > y0 && y1 >= y2 && y1 >= self.threshold) {
            return;
        }
        let (tp, vp) = parabola_vertex((t0, y0), (t1, y1), (t2, y2));
        match self.peaks.last_mut() {
            Some(last) if tp - last.0 < self.min_separation => {
                if vp > last.1 {
                    *last = (tp, vp);
                }
            }
            _ => self.peaks.push((tp, vp)),
        }
    }

    /// Refined peak times.
    pub fn finish(self) -> Vec<f64> {
        self.peaks.into_iter().map(|p| p.0).collect()
    }
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let (d0, d2) = (a.0 - b.0, c.0 - b.0);
    let (e0, e2) = (a.1 - b.1, c.1 - b.1);
    // y - y1 = p s + q s^2 with s = t - t1
    let det = d0 * d2 * (d2 - d0);
    if det == 0.0 {
        return b;
    }
    let q = (e2 * d0 - e0 * d2) / det;
    let p = (e0 * d2 * d2 - e2 * d0 * d0) / det;
    if q >= 0.0 {
        return b;
    }
    let s = (-p / (2.0 * q)).clamp(d0, d2);
    (b.0 + s, b.1 + p * s + q * s * s)
}

/// Peak times of one sampled signal.
pub fn find_peaks(times: &[f64], values: &[f64], threshold: f64, min_separation: f64) -> Vec<f64> {
    let mut tr = PeakTracker::new(threshold, min_separation);
    times.iter().zip(values).for_each(|(&t, &v)| tr.push(t, v));
    tr.finish()
}

/// Frequency in cycles per minute from peak times, `None` below two peaks.
pub fn frequency_cpm(peaks: &[f64]) -> Option<f64> {
    match peaks {
        [first, .., last] if last > first => Some((peaks.len() - 1) as f64 / (last - first) * 60.0),
        _ => None,
    }
}

/// Per-window, per-node frequencies: `result[window][node]`.
pub type FrequencyMap = Vec<Vec<Option<f64>>>;

/// Splits `[t0, t0 + k w)` into consecutive windows of width `w` and
/// estimates each node's frequency from its peaks in each window.
pub fn frequencies_from_peaks(peaks: &[Vec<f64>], t0: f64, t1: f64, window: f64) -> Result<FrequencyMap> {
    if !(window > 0.0) || !(t1 > t0) {
        return Err(Error::invalid("need window > 0 and t1 > t0"));
    }
    let n_win = ((t1 - t0) / window + 1e-9).floor() as usize;
    Ok((0..n_win)
        .map(|k| {
            let (a, b) = (t0 + k as f64 * window, t0 + (k + 1) as f64 * window);
            peaks.iter().map(|p| frequency_cpm(&in_window(p, a, b))).collect()
        })
        .collect())
}

fn in_window(p: &[f64], a: f64, b: f64) -> Vec<f64> {
    p.iter().copied().filter(|&t| t >= a && t < b).collect()
}

/// Frequencies from uniformly sampled nodal series (`series[node][sample]`).
pub fn detect_frequencies(
    times: &[f64],
    series: &[Vec<f64>],
    window: f64,
    threshold: f64,
    min_separation: f64,
) -> Result<FrequencyMap> {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Ok(Vec::new());
    };
    if series.iter().any(|s| s.len() != times.len()) {
        return Err(Error::invalid("series length differs from time axis"));
    }
    let peaks: Vec<Vec<f64>> = series.iter().map(|s| find_peaks(times, s, threshold, min_separation)).collect();
    // the last sample closes the final window
    frequencies_from_peaks(&peaks, t0, t1 + 1e-9 * (t1 - t0).abs().max(1.0), window)
}

/// Per-node activation times.
pub type ActivationMap = Vec<Vec<f64>>;

/// Restricts per-node peak times to `[t0, t1)`.
pub fn activation_times(peaks: &[Vec<f64>], t0: f64, t1: f64) -> ActivationMap {
    peaks.iter().map(|p| in_window(p, t0, t1)).collect()
}

/// Activation times from sampled series.
pub fn activation_times_from_series(
    times: &[f64],
    series: &[Vec<f64>],
    t0: f64,
    t1: f64,
    threshold: f64,
    min_separation: f64,
) -> ActivationMap {
    series
        .iter()
        .map(|s| in_window(&find_peaks(times, s, threshold, min_separation), t0, t1))
        .collect()
}

/// Times where `v` rises through `level`, linearly interpolated.
pub fn upcrossings(times: &[f64], v: &[f64], level: f64) -> Vec<f64> {
    times
        .windows(2)
        .zip(v.windows(2))
        .filter(|(_, w)| w[0] < level && w[1] >= level)
        .map(|(t, w)| t[0] + (level - w[0]) / (w[1] - w[0]) * (t[1] - t[0]))
        .collect()
}

/// Mean speed of rising fronts between two probes at positions `x1 < x2`,
/// using the crossings at probe 1 after `t_after` each paired with the next
/// crossing at probe 2. Fronts must take less than one cycle to cross
/// between the probes.
pub fn two_probe_velocity(times: &[f64], v1: &[f64], v2: &[f64], x1: f64, x2: f64, level: f64, t_after: f64) -> Option<f64> {
    let c1: Vec<f64> = upcrossings(times, v1, level).into_iter().filter(|&t| t >= t_after).collect();
    let c2 = upcrossings(times, v2, level);
    let speeds: Vec<f64> = c1
        .iter()
        .filter_map(|&a| c2.iter().find(|&&b| b > a).map(|&b| (x2 - x1) / (b - a)))
        .collect();
    (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64)
}

/// Per-triangle conduction velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct CvField {
    pub velocity: Vec<Point>,
    pub speed: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Plane-wave velocity through points p, q, r given arrival delays
/// `t_pq = t_q - t_p`, `t_pr = t_r - t_p`. `None` for simultaneous arrival
/// or a degenerate triangle.
pub fn plane_wave_velocity(p: Point, q: Point, r: Point, t_pq: f64, t_pr: f64) -> Option<Point> {
    let (mut xq, mut xr, mut tq, mut tr) = (q - p, r - p, t_pq, t_pr);
    if tq.abs() < tr.abs() {
        std::mem::swap(&mut xq, &mut xr);
        std::mem::swap(&mut tq, &mut tr);
    }
    if tq == 0.0 {
        return None;
    }
    let (lq, lr) = (xq.norm(), xr.norm());
    let cos_t = xq.dot(&xr) / (lq * lr);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let n = xr.cross(&xq).try_normalize(1e-12 * lq * lr)?;
    if !(sin_t > 1e-12) {
        return None;
    }
    let tan_a = (tr * lq / (tq * lr) - cos_t) / sin_t;
    let alpha = tan_a.atan();
    let vc = lq * alpha.cos() / tq;
    let dir = (xq - n.cross(&xq) * tan_a).try_normalize(0.0)?;
    Some(dir * vc)
}

/// Conduction velocity per triangle from the earliest activation at each
/// vertex. A triangle is invalid when a vertex has no activation, all three
/// times coincide, or the spread of its vertex times exceeds a fifth of the
/// local cycle length (the vertices then belong to different wavefronts).
/// The cycle is `cycle_hint` or, failing that, the shortest interval between
/// successive activations at the triangle's vertices.
pub fn cv_triangulation(mesh: &Mesh, activation: &ActivationMap, cycle_hint: Option<f64>) -> Result<CvField> {
    let Topology::Triangles(tris) = mesh.topology() else {
        return Err(Error::invalid("conduction velocity needs a triangle mesh"));
    };
    if activation.len() != mesh.n_nodes() {
        return Err(Error::invalid("activation map does not match the mesh"));
    }
    let mut out = CvField {
        velocity: Vec::with_capacity(tris.len()),
        speed: Vec::with_capacity(tris.len()),
        valid: Vec::with_capacity(tris.len()),
    };
    for tri in tris {
        let first: Vec<Option<f64>> = tri.iter().map(|&i| activation[i].first().copied()).collect();
        let result = match (first[0], first[1], first[2]) {
            (Some(tp), Some(tq), Some(tr)) => {
                let spread = tp.max(tq).max(tr) - tp.min(tq).min(tr);
                let cycle = cycle_hint.or_else(|| {
                    tri.iter()
                        .flat_map(|&i| activation[i].windows(2).map(|w| w[1] - w[0]))
                        .reduce(f64::min)
                });
                if cycle.is_some_and(|c| spread > 0.2 * c) {
                    None
                } else {
                    let x = |k: usize| *mesh.node(tri[k]);
                    plane_wave_velocity(x(0), x(1), x(2), tq - tp, tr - tp)
                }
            }
            _ => None,
        };
        match result {
            Some(v) if v.iter().all(|c| c.is_finite()) => {
                out.speed.push(v.norm());
                out.velocity.push(v);
                out.valid.push(true);
            }
            _ => {
                out.speed.push(f64::NAN);
                out.velocity.push(Point::repeat(f64::NAN));
                out.valid.push(false);
            }
        }
    }
    Ok(out)
}

/// Earliest activation per node and its isochrone level floor(t / interval).
pub fn isochrones(activation: &ActivationMap, interval: f64) -> Result<(Vec<f64>, Vec<i64>)> {
    if !(interval > 0.0) {
        return Err(Error::invalid("isochrone interval must be positive"));
    }
    let t: Vec<f64> = activation.iter().map(|a| a.first().copied().unwrap_or(f64::NAN)).collect();
    let level = t.iter().map(|&t| if t.is_finite() { (t / interval).floor() as i64 } else { -1 }).collect();
    Ok((t, level))
}

/// Writes `<stem>.vtk` (nodal activation time and level) and `<stem>.csv`
/// (node_id, t, level). Nodes without activation get t = NaN, level = -1.
pub fn isochrone_export(mesh: &Mesh, activation: &ActivationMap, interval: f64, stem: &Path) -> Result<()> {
    if activation.iter().all(Vec::is_empty) {
        return Err(Error::invalid("activation map is empty"));
    }
    let (t, level) = isochrones(activation, interval)?;
    let fields: Fields = vec![
        ("activation_time".into(), FieldData::Scalar(t.clone())),
        ("isochrone".into(), FieldData::Scalar(level.iter().map(|&l| l as f64).collect())),
    ];
    write_vtk(mesh, &fields, &Fields::new(), stem.with_extension("vtk"))?;
    let mut w = csv::Writer::from_path(stem.with_extension("csv"))?;
    w.write_record(["node_id", "t", "level"])?;
    for (i, (t, l)) in t.iter().zip(&level).enumerate() {
        w.write_record([i.to_string(), t.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares line y = m x + c.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("linear fit needs at least two (x, y) pairs"));
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("linear fit needs distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let m = sxy / sxx;
    Ok((m, my - m * mx))
}

pub fn write_frequencies_csv(path: &Path, freq: &FrequencyMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "window_index", "cpm", "active"])?;
    for (k, win) in freq.iter().enumerate() {
        for (i, f) in win.iter().enumerate() {
            let cpm = f.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            w.write_record([i.to_string(), k.to_string(), cpm, f.is_some().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cv_csv(path: &Path, cv: &CvField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tri_id", "vx", "vy", "vz", "speed", "valid"])?;
    for (i, (v, (s, ok))) in cv.velocity.iter().zip(cv.speed.iter().zip(&cv.valid)).enumerate() {
        w.write_record([i.to_string(), v.x.to_string(), v.y.to_string(), v.z.to_string(), s.to_string(), ok.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_probe_csv(path: &Path, probe: &ProbeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "v_icc", "v_smc", "h_icc", "h_smc"])?;
    for s in &probe.samples {
        w.write_record([s.t, s.v_icc, s.v_smc, s.h_icc, s.h_smc].map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Peak log as (node_id, t) rows.
pub fn write_peaks_csv(path: &Path, peaks: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "t"])?;
    for (i, p) in peaks.iter().enumerate() {
        for t in p {
            w.write_record([i.to_string(), t.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_peaks_csv(path: &Path, n_nodes: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut peaks = vec![Vec::new(); n_nodes];
    for rec in r.records() {
        let rec = rec?;
        let parse = |k: usize| rec.get(k).ok_or_else(|| Error::Parse("short peaks row".into()));
        let i: usize = parse(0)?.parse().map_err(|_| Error::Parse("bad node id".into()))?;
        let t: f64 = parse(1)?.parse().map_err(|_| Error::Parse("bad peak time".into()))?;
        peaks
            .get_mut(i)
            .ok_or_else(|| Error::Parse(format!("peak for node {i} outside mesh")))?
            .push(t);
    }
    for p in &mut peaks {
        p.sort_by(f64::total_cmp);
    }
    Ok(peaks)
}
