//! Axisymmetric thin-wall model of the cylinder benchmark.
//!
//! Nodes sit on the axis coordinate `x in [0, L]` and carry `(u_r, u_x,
//! lambda_t)`. Each element sees the diagonal deformation `diag(lambda_l,
//! lambda_c, lambda_t)` in the local `(l, c, t)` frame with fibers along `l`
//! and `c`. The membrane energy is integrated with one point in the axial
//! direction and a two-point nodal rule in the thickness stretch, so every
//! nodal `lambda_t` has its own stiffness. Energies are per radian of
//! circumference: kPa * mm^3.

use std::path::Path;

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{dot, BandMatrix};
use crate::mesh::vtk::{write_vtk, FieldData, Fields};
use crate::mesh::{Mesh, Point, Topology};
use crate::mixture::{activation_gamma, prestress_update_relaxed, principal_response, MixtureParams, PrincipalPoint};
use crate::MMHG_TO_KPA;

const DOFS: usize = 3;
const BAND: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisymConfig {
    /// Cylinder length (mm).
    pub length: f64,
    /// Reference radius (mm).
    pub radius: f64,
    /// Wall thickness (mm).
    pub thickness: f64,
    /// Axial element size (mm).
    pub h: f64,
    /// Luminal pressure (kPa).
    pub pressure: f64,
    /// Radial spring stiffness (kPa/mm).
    pub spring_k: f64,
    /// Penalty on the squared axial curvature of `u_r` (kPa mm^3).
    pub kappa_b: f64,
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub max_line_cuts: usize,
    /// Load-ramp iterations of the prestress loop.
    pub prestress_ramp: usize,
    /// Displacement tolerance of the prestress loop (mm).
    pub prestress_tol: f64,
    /// Largest admissible Frobenius change of the prestretch in the final
    /// prestress iteration.
    pub prestress_stationarity: f64,
    pub prestress_max_iter: usize,
    /// Exponent applied to the stretch part of `F` in the prestress update;
    /// 1 is the full update.
    pub prestress_relaxation: f64,
}

impl Default for AxisymConfig {
    fn default() -> Self {
        Self {
            length: 250.0,
            radius: 50.93,
            thickness: 3.5,
            h: 1.0,
            pressure: 25.0 * MMHG_TO_KPA,
            spring_k: 0.0,
            kappa_b: 1e-3,
            newton_rtol: 1e-8,
            newton_atol: 1e-10,
            newton_max_iter: 50,
            max_line_cuts: 20,
            prestress_ramp: 10,
            prestress_tol: 1e-3,
            prestress_stationarity: 1e-7,
            prestress_max_iter: 100,
            prestress_relaxation: 0.5,
        }
    }
}

impl AxisymConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.radius > 0.0 && self.thickness > 0.0) {
            return Err(Error::invalid("length, radius and thickness must be positive"));
        }
        if !(self.h > 0.0 && self.h <= self.length) {
            return Err(Error::invalid("element size must lie in (0, length]"));
        }
        if !(self.pressure.is_finite() && self.spring_k >= 0.0 && self.kappa_b >= 0.0) {
            return Err(Error::invalid("pressure must be finite, spring and bending moduli non-negative"));
        }
        if !(self.newton_rtol > 0.0 && self.newton_atol > 0.0 && self.newton_max_iter > 0) {
            return Err(Error::invalid("Newton tolerances and iteration cap must be positive"));
        }
        if !(self.prestress_relaxation > 0.0 && self.prestress_relaxation <= 1.0) {
            return Err(Error::invalid("prestress relaxation must lie in (0, 1]"));
        }
        if !(self.prestress_ramp > 0 && self.prestress_tol > 0.0 && self.prestress_max_iter > 0) {
            return Err(Error::invalid("prestress ramp, tolerance and cap must be positive"));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        ((self.length / self.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Mechanical state. `points` and `gamma` are per element.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymState {
    pub u_r: Vec<f64>,
    pub u_x: Vec<f64>,
    pub lambda_t: Vec<f64>,
    pub points: Vec<PrincipalPoint>,
    pub gamma: Vec<f64>,
    /// Pressure currently applied (kPa).
    pub pressure: f64,
}

impl AxisymState {
    pub fn max_displacement(&self) -> f64 {
        self.u_r.iter().zip(&self.u_x).map(|(r, x)| r.hypot(*x)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrestressOutcome {
    pub state: AxisymState,
    pub iterations: usize,
    /// Displacement norm of the last iteration (mm).
    pub u_inf: f64,
    /// Largest Frobenius change of the prestretch in the last iteration.
    pub change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionMetrics {
    /// Range of normal displacement over the window (mm).
    pub a_c: f64,
    /// Largest wall thickness over the window (mm).
    pub h_t_max: f64,
}

/// Activation per element at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFrame {
    pub t: f64,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AxisymState>,
    pub metrics: Vec<ContractionMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Energy,
    Gradient,
    Full,
}

struct Evaluation {
    pi: f64,
    grad: Vec<f64>,
    hess: Option<BandMatrix>,
}

#[derive(Debug, Clone)]
pub struct AxisymModel {
    cfg: AxisymConfig,
    mat: MixtureParams,
    x: Vec<f64>,
    dx: f64,
}

impl AxisymModel {
    pub fn new(cfg: AxisymConfig, mat: MixtureParams) -> Result<Self> {
        cfg.validate()?;
        mat.validate()?;
        let n = cfg.n_elements();
        let dx = cfg.length / n as f64;
        let x = (0..=n).map(|i| i as f64 * dx).collect();
        Ok(Self { cfg, mat, x, dx })
    }

    pub fn config(&self) -> &AxisymConfig {
        &self.cfg
    }

    pub fn material(&self) -> &MixtureParams {
        &self.mat
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn n_elements(&self) -> usize {
        self.x.len() - 1
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Undeformed state with homeostatic fibers, no ground-matrix prestretch,
    /// no activation and the configured pressure.
    pub fn reference_state(&self) -> AxisymState {
        let (n, ne) = (self.n_nodes(), self.n_elements());
        AxisymState {
            u_r: vec![0.0; n],
            u_x: vec![0.0; n],
            lambda_t: vec![1.0; n],
            points: vec![PrincipalPoint::homeostatic(&self.mat); ne],
            gamma: vec![0.0; ne],
            pressure: self.cfg.pressure,
        }
    }

    /// Undeformed, unloaded state without any prestretch.
    pub fn stress_free_state(&self) -> AxisymState {
        let free = PrincipalPoint { g: Vector3::repeat(1.0), lambda_gr_l: 1.0, lambda_gr_c: 1.0 };
        AxisymState { points: vec![free; self.n_elements()], pressure: 0.0, ..self.reference_state() }
    }

    fn check_state(&self, st: &AxisymState) -> Result<()> {
        let (n, ne) = (self.n_nodes(), self.n_elements());
        if st.u_r.len() != n || st.u_x.len() != n || st.lambda_t.len() != n || st.points.len() != ne || st.gamma.len() != ne {
            return Err(Error::invalid("state does not match the model discretisation"));
        }
        Ok(())
    }

    fn stretches(&self, st: &AxisymState, e: usize) -> Result<(f64, f64, f64, f64)> {
        let lc = 1.0 + 0.5 * (st.u_r[e] + st.u_r[e + 1]) / self.cfg.radius;
        if !(lc > 0.0) {
            return Err(Error::CollapsedRadius { element: e, stretch: lc });
        }
        let a = 1.0 + (st.u_x[e + 1] - st.u_x[e]) / self.dx;
        let b = (st.u_r[e + 1] - st.u_r[e]) / self.dx;
        Ok((a.hypot(b), lc, a, b))
    }

    /// Element deformation gradient in the local `(l, c, t)` frame.
    pub fn local_deformation(&self, st: &AxisymState, e: usize) -> Result<Matrix3<f64>> {
        self.check_state(st)?;
        if e >= self.n_elements() {
            return Err(Error::invalid(format!("element {e} out of range")));
        }
        let (ll, lc, _, _) = self.stretches(st, e)?;
        let lt = 0.5 * (st.lambda_t[e] + st.lambda_t[e + 1]);
        Ok(Matrix3::from_diagonal(&Vector3::new(ll, lc, lt)))
    }

    fn fixed_dofs(&self) -> [usize; 2] {
        [1, DOFS * (self.n_nodes() - 1) + 1]
    }

    fn evaluate(&self, st: &AxisymState, level: Level) -> Result<Evaluation> {
        self.check_state(st)?;
        let (n, ne, dx, r0) = (self.n_nodes(), self.n_elements(), self.dx, self.cfg.radius);
        let nd = DOFS * n;
        let grad_on = level != Level::Energy;
        let mut grad = vec![0.0; if grad_on { nd } else { 0 }];
        let mut hess = (level == Level::Full).then(|| BandMatrix::zeros(nd, BAND, BAND));
        let vref = self.cfg.thickness * r0 * dx;
        let p = st.pressure;
        let mut pi = 0.0;

        for e in 0..ne {
            let (ll, lc, a, b) = self.stretches(st, e)?;
            let base = DOFS * e;
            for k in 0..2 {
                let lt = st.lambda_t[e + k];
                if !(lt > 0.0) {
                    return Err(Error::InvertedState(lt));
                }
                let resp = principal_response(&Vector3::new(ll, lc, lt), &st.points[e], &self.mat, st.gamma[e])?;
                pi += 0.5 * vref * resp.psi;
                if !grad_on {
                    continue;
                }
                // local dofs: [u_r0, u_x0, lt0, u_r1, u_x1, lt1]
                let mut jac = SMatrix::<f64, 3, 6>::zeros();
                let s = 1.0 / (ll * dx);
                jac[(0, 0)] = -b * s;
                jac[(0, 3)] = b * s;
                jac[(0, 1)] = -a * s;
                jac[(0, 4)] = a * s;
                jac[(1, 0)] = 0.5 / r0;
                jac[(1, 3)] = 0.5 / r0;
                jac[(2, 2 + 3 * k)] = 1.0;
                let gl = jac.transpose() * resp.grad * (0.5 * vref);
                for i in 0..6 {
                    grad[base + i] += gl[i];
                }
                if let Some(h) = hess.as_mut() {
                    let mut hl = jac.transpose() * resp.hess * jac;
                    let c = resp.grad[0] / (ll * ll * ll * dx * dx);
                    let da = [0.0, -1.0, 0.0, 0.0, 1.0, 0.0];
                    let db = [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
                    for i in 0..6 {
                        for j in 0..6 {
                            hl[(i, j)] += c * (b * b * da[i] * da[j] - a * b * (da[i] * db[j] + db[i] * da[j]) + a * a * db[i] * db[j]);
                        }
                    }
                    for i in 0..6 {
                        for j in 0..6 {
                            if hl[(i, j)] != 0.0 {
                                h.add(base + i, base + j, 0.5 * vref * hl[(i, j)]);
                            }
                        }
                    }
                }
            }

            // enclosed volume per radian of the frustum between the two nodes
            let (ra, rb) = (r0 + st.u_r[e], r0 + st.u_r[e + 1]);
            let sq = ra * ra + ra * rb + rb * rb;
            let z = dx + st.u_x[e + 1] - st.u_x[e];
            pi -= p * (sq * z / 6.0 - 0.5 * r0 * r0 * dx);
            if grad_on && p != 0.0 {
                let dv = [(2.0 * ra + rb) * z / 6.0, -sq / 6.0, 0.0, (ra + 2.0 * rb) * z / 6.0, sq / 6.0, 0.0];
                for i in 0..6 {
                    grad[base + i] -= p * dv[i];
                }
                if let Some(h) = hess.as_mut() {
                    let (qa, qb) = ((2.0 * ra + rb) / 6.0, (ra + 2.0 * rb) / 6.0);
                    let entries = [
                        (0, 0, 2.0 * z / 6.0),
                        (3, 3, 2.0 * z / 6.0),
                        (0, 3, z / 6.0),
                        (3, 0, z / 6.0),
                        (0, 4, qa),
                        (4, 0, qa),
                        (0, 1, -qa),
                        (1, 0, -qa),
                        (3, 4, qb),
                        (4, 3, qb),
                        (3, 1, -qb),
                        (1, 3, -qb),
                    ];
                    for (i, j, v) in entries {
                        h.add(base + i, base + j, -p * v);
                    }
                }
            }
        }

        if self.cfg.spring_k > 0.0 {
            for i in 0..n {
                let w = r0 * dx * if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let (k, u) = (self.cfg.spring_k * w, st.u_r[i]);
                pi += 0.5 * k * u * u;
                if grad_on {
                    grad[DOFS * i] += k * u;
                }
                if let Some(h) = hess.as_mut() {
                    h.add(DOFS * i, DOFS * i, k);
                }
            }
        }

        if self.cfg.kappa_b > 0.0 {
            let coef = [1.0 / (dx * dx), -2.0 / (dx * dx), 1.0 / (dx * dx)];
            for i in 1..n.saturating_sub(1) {
                let curv = (st.u_r[i - 1] - 2.0 * st.u_r[i] + st.u_r[i + 1]) / (dx * dx);
                let w = self.cfg.kappa_b * dx;
                pi += w * curv * curv;
                if grad_on {
                    for (k, c) in coef.iter().enumerate() {
                        grad[DOFS * (i - 1 + k)] += 2.0 * w * curv * c;
                    }
                }
                if let Some(h) = hess.as_mut() {
                    for (k, ck) in coef.iter().enumerate() {
                        for (l, cl) in coef.iter().enumerate() {
                            h.add(DOFS * (i - 1 + k), DOFS * (i - 1 + l), 2.0 * w * ck * cl);
                        }
                    }
                }
            }
        }
        Ok(Evaluation { pi, grad, hess })
    }

    /// Total potential per radian: stored energy minus pressure work plus
    /// spring and bending penalties.
    pub fn total_potential(&self, st: &AxisymState) -> Result<f64> {
        Ok(self.evaluate(st, Level::Energy)?.pi)
    }

    /// Gradient of the total potential, dofs ordered `(u_r, u_x, lambda_t)`
    /// per node. Constrained dofs are included.
    pub fn gradient(&self, st: &AxisymState) -> Result<Vec<f64>> {
        Ok(self.evaluate(st, Level::Gradient)?.grad)
    }

    /// Dense copy of the Hessian, for checks on small models.
    pub fn hessian_dense(&self, st: &AxisymState) -> Result<Vec<Vec<f64>>> {
        let h = self.evaluate(st, Level::Full)?.hess.expect("full evaluation");
        Ok((0..h.n()).map(|i| (0..h.n()).map(|j| h.get(i, j)).collect()).collect())
    }

    pub fn dofs(&self, st: &AxisymState) -> Vec<f64> {
        (0..self.n_nodes()).flat_map(|i| [st.u_r[i], st.u_x[i], st.lambda_t[i]]).collect()
    }

    pub fn set_dofs(&self, st: &mut AxisymState, q: &[f64]) {
        for i in 0..self.n_nodes() {
            st.u_r[i] = q[DOFS * i];
            st.u_x[i] = q[DOFS * i + 1];
            st.lambda_t[i] = q[DOFS * i + 2];
        }
    }

    fn constrained_gradient(&self, mut g: Vec<f64>) -> (Vec<f64>, f64) {
        for d in self.fixed_dofs() {
            g[d] = 0.0;
        }
        let r = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (g, r)
    }

    /// Newton iteration with backtracking on the total potential. The axial
    /// displacement is held at zero on both ends.
    pub fn newton_solve(&self, st: &mut AxisymState) -> Result<NewtonStats> {
        for d in self.fixed_dofs() {
            st.u_x[d / DOFS] = 0.0;
        }
        let mut r0 = None;
        let mut residual = f64::INFINITY;
        for it in 0..=self.cfg.newton_max_iter {
            let ev = self.evaluate(st, Level::Full)?;
            let (g, r) = self.constrained_gradient(ev.grad);
            residual = r;
            let r0 = *r0.get_or_insert(r);
            if r <= (self.cfg.newton_rtol * r0).max(self.cfg.newton_atol) {
                return Ok(NewtonStats { iterations: it, residual: r });
            }
            if it == self.cfg.newton_max_iter {
                break;
            }
            let mut h = ev.hess.expect("full evaluation");
            let diag_scale = (0..h.n()).map(|i| h.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
            for d in self.fixed_dofs() {
                h.set_identity_row(d, diag_scale);
                h.set_identity_col(d, diag_scale);
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut dir = match h.solve(&rhs) {
                Ok(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => rhs.clone(),
            };
            let mut slope = dot(&g, &dir);
            if !(slope < 0.0) {
                dir = rhs;
                slope = dot(&g, &dir);
            }
            // correction below the resolution of the dofs: residual is at its roundoff floor
            let q0 = self.dofs(st);
            let qmax = q0.iter().fold(1.0_f64, |m, q| m.max(q.abs()));
            if dir.iter().all(|d| d.abs() <= NEWTON_STEP_FLOOR * qmax) {
                return Ok(NewtonStats { iterations: it, residual: r });
            }
            let mut accepted = false;
            let mut step = 1.0;
            for _ in 0..=self.cfg.max_line_cuts {
                let mut trial = st.clone();
                let q: Vec<f64> = q0.iter().zip(&dir).map(|(q, d)| q + step * d).collect();
                self.set_dofs(&mut trial, &q);
                if let Ok(tv) = self.evaluate(&trial, Level::Gradient) {
                    let (_, rt) = self.constrained_gradient(tv.grad);
                    let armijo = tv.pi <= ev.pi + 1e-4 * step * slope;
                    if tv.pi.is_finite() && (armijo || (step == 1.0 && rt < r)) {
                        *st = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence { iterations: it + 1, residual: r });
            }
        }
        Err(Error::NonConvergence { iterations: self.cfg.newton_max_iter, residual })
    }

    /// One outer prestress iteration at the given load: equilibrium solve,
    /// then the ground-matrix prestretch update in every element. Returns
    /// the largest Frobenius change of the prestretch.
    pub fn prestress_iteration(&self, st: &mut AxisymState) -> Result<f64> {
        self.newton_solve(st)?;
        let targets = self.prestress_targets(st)?;
        let change = prestretch_change(st, &targets);
        for (pt, g) in st.points.iter_mut().zip(targets) {
            pt.g = g;
        }
        Ok(change)
    }

    fn prestress_targets(&self, st: &AxisymState) -> Result<Vec<Vector3<f64>>> {
        (0..self.n_elements())
            .map(|e| {
                // membrane part of F; the through-thickness volume change is left to the material
                let f = self.local_deformation(st, e)?;
                let (l, c) = (f[(0, 0)], f[(1, 1)]);
                let f = Matrix3::from_diagonal(&Vector3::new(l, c, 1.0 / (l * c)));
                let g_old = Matrix3::from_diagonal(&st.points[e].g);
                Ok(prestress_update_relaxed(&f, &g_old, self.cfg.prestress_relaxation)?.diagonal())
            })
            .collect()
    }

    /// Fixed point for the ground-matrix prestretch: pressure and fiber
    /// prestretch ramp up over the first iterations, then iterations continue
    /// until the displacement drops below the tolerance and the prestretch is
    /// stationary. The returned state is in equilibrium with the final
    /// prestretch.
    pub fn prestress_solve(&self) -> Result<PrestressOutcome> {
        let mut st = self.reference_state();
        let kp = self.cfg.prestress_ramp;
        let (mut u_inf, mut change) = (f64::INFINITY, f64::INFINITY);
        for k in 1..=self.cfg.prestress_max_iter {
            let ramp = k.min(kp) as f64 / kp as f64;
            st.pressure = ramp * self.cfg.pressure;
            let (lhc, lhl) = (1.0 + ramp * (self.mat.lambda_h_c - 1.0), 1.0 + ramp * (self.mat.lambda_h_l - 1.0));
            for pt in &mut st.points {
                pt.lambda_gr_c = 1.0 / lhc;
                pt.lambda_gr_l = 1.0 / lhl;
            }
            self.newton_solve(&mut st)?;
            let targets = self.prestress_targets(&st)?;
            change = prestretch_change(&st, &targets);
            u_inf = st.max_displacement();
            if k >= kp && u_inf < self.cfg.prestress_tol && change < self.cfg.prestress_stationarity {
                return Ok(PrestressOutcome { state: st, iterations: k, u_inf, change });
            }
            for (pt, g) in st.points.iter_mut().zip(targets) {
                pt.g = g;
            }
        }
        Err(Error::NonConvergence { iterations: self.cfg.prestress_max_iter, residual: u_inf.max(change) })
    }

    /// Activation per element from SMC potentials sampled at axial positions
    /// `ep_x` (ascending), by linear interpolation at element midpoints.
    pub fn gamma_from_potential(&self, ep_x: &[f64], v_smc: &[f64]) -> Result<Vec<f64>> {
        if ep_x.len() != v_smc.len() || ep_x.len() < 2 {
            return Err(Error::invalid("need at least two potential samples with matching positions"));
        }
        if ep_x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("potential sample positions must be strictly increasing"));
        }
        let tol = 1e-6 * self.cfg.length;
        if ep_x[0] > tol || ep_x[ep_x.len() - 1] < self.cfg.length - tol {
            return Err(Error::invalid(format!(
                "electrophysiology domain [{}, {}] does not cover the structure [0, {}]",
                ep_x[0],
                ep_x[ep_x.len() - 1],
                self.cfg.length
            )));
        }
        Ok(self
            .midpoints()
            .iter()
            .map(|&x| {
                let k = ep_x.partition_point(|&p| p <= x).clamp(1, ep_x.len() - 1);
                let w = ((x - ep_x[k - 1]) / (ep_x[k] - ep_x[k - 1])).clamp(0.0, 1.0);
                activation_gamma((1.0 - w) * v_smc[k - 1] + w * v_smc[k], &self.mat)
            })
            .collect())
    }

    fn advance(&self, st: &mut AxisymState, target: &[f64], depth: usize) -> Result<()> {
        let mut trial = st.clone();
        trial.gamma = target.to_vec();
        match self.newton_solve(&mut trial) {
            Ok(_) => {
                *st = trial;
                Ok(())
            }
            Err(e) if depth < 10 && recoverable(&e) => {
                let mid: Vec<f64> = st.gamma.iter().zip(target).map(|(a, b)| 0.5 * (a + b)).collect();
                self.advance(st, &mid, depth + 1)?;
                self.advance(st, target, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    /// Quasi-static trajectory through a sequence of activation frames, each
    /// solved from the previous equilibrium. Steps that fail are bisected in
    /// the activation.
    pub fn coupled_run(&self, start: &AxisymState, frames: &[ActivationFrame], window: (f64, f64)) -> Result<Trajectory> {
        self.check_state(start)?;
        let mut st = start.clone();
        let mut out = Trajectory { times: Vec::new(), states: Vec::new(), metrics: Vec::new() };
        for fr in frames {
            if fr.gamma.len() != self.n_elements() {
                return Err(Error::invalid("activation frame does not match the element count"));
            }
            self.advance(&mut st, &fr.gamma, 0)?;
            out.metrics.push(self.contraction_metrics(&st, window)?);
            out.times.push(fr.t);
            out.states.push(st.clone());
        }
        Ok(out)
    }

    /// Ramps a frozen activation profile up in `steps` equal increments.
    pub fn frozen_activation(&self, start: &AxisymState, gamma: &[f64], steps: usize, window: (f64, f64)) -> Result<Trajectory> {
        let frames: Vec<ActivationFrame> = (1..=steps.max(1))
            .map(|k| {
                let s = k as f64 / steps.max(1) as f64;
                ActivationFrame { t: s, gamma: gamma.iter().map(|g| s * g).collect() }
            })
            .collect();
        self.coupled_run(start, &frames, window)
    }

    pub fn contraction_metrics(&self, st: &AxisymState, window: (f64, f64)) -> Result<ContractionMetrics> {
        self.check_state(st)?;
        let (lo, hi) = window;
        if !(lo <= hi) || lo < -1e-9 || hi > self.cfg.length + 1e-9 {
            return Err(Error::invalid(format!("window [{lo}, {hi}] must lie within [0, {}]", self.cfg.length)));
        }
        let inside: Vec<usize> = (0..self.n_nodes()).filter(|&i| self.x[i] >= lo - 1e-9 && self.x[i] <= hi + 1e-9).collect();
        if inside.is_empty() {
            return Err(Error::invalid("contraction window contains no nodes"));
        }
        let un = inside.iter().map(|&i| st.u_r[i]);
        let max = un.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = un.fold(f64::INFINITY, f64::min);
        let lt = inside.iter().map(|&i| st.lambda_t[i]).fold(f64::NEG_INFINITY, f64::max);
        Ok(ContractionMetrics { a_c: max - min, h_t_max: self.cfg.thickness * lt })
    }

    /// Activation averaged onto nodes.
    pub fn nodal_gamma(&self, st: &AxisymState) -> Vec<f64> {
        let ne = self.n_elements();
        (0..self.n_nodes())
            .map(|i| match (i.checked_sub(1), (i < ne).then_some(i)) {
                (Some(a), Some(b)) => 0.5 * (st.gamma[a] + st.gamma[b]),
                (Some(a), None) => st.gamma[a],
                (None, Some(b)) => st.gamma[b],
                (None, None) => 0.0,
            })
            .collect()
    }

    /// Columns: x, u_r, u_x, h_t, gamma.
    pub fn write_profile_csv(&self, st: &AxisymState, path: &Path) -> Result<()> {
        let gamma = self.nodal_gamma(st);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "u_r", "u_x", "h_t", "gamma"])?;
        for (i, g) in gamma.iter().enumerate() {
            let row = [self.x[i], st.u_r[i], st.u_x[i], self.cfg.thickness * st.lambda_t[i], *g];
            w.write_record(row.map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Deformed surface of revolution with `n_theta` segments around the axis.
    pub fn surface_mesh(&self, st: &AxisymState, n_theta: usize) -> Result<(Mesh, Fields)> {
        if n_theta < 3 {
            return Err(Error::invalid("need at least three circumferential segments"));
        }
        let n = self.n_nodes();
        let mut nodes = Vec::with_capacity(n * n_theta);
        for i in 0..n {
            let r = self.cfg.radius + st.u_r[i];
            for j in 0..n_theta {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
                nodes.push(Point::new(self.x[i] + st.u_x[i], r * th.cos(), r * th.sin()));
            }
        }
        let id = |i: usize, j: usize| i * n_theta + j % n_theta;
        let tris = (0..n - 1)
            .flat_map(|i| (0..n_theta).flat_map(move |j| [[id(i, j), id(i + 1, j), id(i + 1, j + 1)], [id(i, j), id(i + 1, j + 1), id(i, j + 1)]]))
            .collect();
        let mesh = Mesh::new(nodes, Topology::Triangles(tris), Default::default())?;
        let gamma = self.nodal_gamma(st);
        let rep = |v: Vec<f64>| v.into_iter().flat_map(|x| std::iter::repeat_n(x, n_theta)).collect::<Vec<f64>>();
        let fields: Fields = vec![
            ("u_r".into(), FieldData::Scalar(rep(st.u_r.clone()))),
            ("u_x".into(), FieldData::Scalar(rep(st.u_x.clone()))),
            ("h_t".into(), FieldData::Scalar(rep(st.lambda_t.iter().map(|l| l * self.cfg.thickness).collect()))),
            ("gamma".into(), FieldData::Scalar(rep(gamma))),
        ];
        Ok((mesh, fields))
    }

    pub fn write_surface_vtk(&self, st: &AxisymState, n_theta: usize, path: &Path) -> Result<()> {
        let (mesh, fields) = self.surface_mesh(st, n_theta)?;
        write_vtk(&mesh, &fields, &Fields::new(), path)
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::NonConvergence { .. } | Error::EnergyOverflow(_) | Error::CollapsedRadius { .. } | Error::InvertedState(_)
    )
}

/// Columns: t, A_c, h_t_max.
pub fn write_metrics_csv(path: &Path, times: &[f64], metrics: &[ContractionMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "A_c", "h_t_max"])?;
    for (t, m) in times.iter().zip(metrics) {
        w.write_record([t.to_string(), m.a_c.to_string(), m.h_t_max.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const NEWTON_STEP_FLOOR: f64 = 1e-10;

fn prestretch_change(st: &AxisymState, targets: &[Vector3<f64>]) -> f64 {
    st.points.iter().zip(targets).map(|(p, g)| (g - p.g).norm()).fold(0.0, f64::max)
}
