//! Coupled ICC/SMC monodomain solver.
//!
//! Per species, with lumped mass M and P1 stiffness K:
//!
//! (chi M/dt + theta K) v+ = chi M/dt v* - (1 - theta) K v -/+ chi_gap M D_gap (v_icc - v_smc)
//!
//! where v* is the cell model advanced over dt in `n_sub` explicit substeps
//! (one substep reproduces the plain explicit reaction term). The gate h is
//! advanced inside the same substeps.

use crate::analysis::PeakTracker;
use crate::cell_model::{ionic_current, relax_gate, CellParams, CellState};
use crate::error::{Error, Result};
use crate::fem::{lumped_mass, stiffness};
use crate::linalg::{pcg, CsrMatrix};
use crate::mesh::Mesh;
use crate::params::ParameterFields;

/// Spatial coefficients entering the monodomain system.
#[derive(Debug, Clone, PartialEq)]
pub struct EpCoefficients {
    pub a_icc: Vec<f64>,
    pub chi_icc: Vec<f64>,
    pub chi_gap: Vec<f64>,
    pub chi_smc: Vec<f64>,
    pub sigma_icc: Vec<f64>,
    pub sigma_smc: Vec<f64>,
}

impl From<&ParameterFields> for EpCoefficients {
    fn from(f: &ParameterFields) -> Self {
        Self {
            a_icc: f.a_icc.clone(),
            chi_icc: f.chi.icc.clone(),
            chi_gap: f.chi.gap.clone(),
            chi_smc: f.chi.smc.clone(),
            sigma_icc: f.sigma.icc.clone(),
            sigma_smc: f.sigma.smc.clone(),
        }
    }
}

impl EpCoefficients {
    /// Spatially uniform coefficients.
    pub fn uniform(mesh: &Mesh, a_icc: f64, chi: f64, sigma_icc: f64, sigma_smc: f64) -> Self {
        let (n, e) = (mesh.n_nodes(), mesh.n_elements());
        Self {
            a_icc: vec![a_icc; n],
            chi_icc: vec![chi; n],
            chi_gap: vec![chi; n],
            chi_smc: vec![chi; n],
            sigma_icc: vec![sigma_icc; e],
            sigma_smc: vec![sigma_smc; e],
        }
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        let n = mesh.n_nodes();
        let e = mesh.n_elements();
        let nodal = [&self.a_icc, &self.chi_icc, &self.chi_gap, &self.chi_smc];
        if nodal.iter().any(|v| v.len() != n) || self.sigma_icc.len() != e || self.sigma_smc.len() != e {
            return Err(Error::invalid("coefficient arrays do not match the mesh"));
        }
        if self.chi_icc.iter().chain(&self.chi_smc).any(|&c| !(c > 0.0)) {
            return Err(Error::invalid("chi_icc and chi_smc must be positive"));
        }
        if self.sigma_icc.iter().chain(&self.sigma_smc).any(|&s| !(s >= 0.0)) {
            return Err(Error::invalid("diffusivities must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Icc,
    Smc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpConfig {
    pub dt: f64,
    pub t_end: f64,
    pub theta: f64,
    /// Snapshot cadence in seconds; the final state is always recorded.
    pub snapshot_every: f64,
    pub d_gap: f64,
    /// ICC constants; `a` is replaced by the nodal excitability field.
    pub icc: CellParams,
    pub smc: CellParams,
    pub init_icc: CellState,
    pub init_smc: CellState,
    /// Largest explicit reaction substep (s).
    pub reaction_dt_max: f64,
    pub linear_tol: f64,
    /// Nodes whose full (v, h) history is kept.
    pub probes: Vec<usize>,
    pub peak_threshold: f64,
    pub peak_min_separation: f64,
    pub peak_species: Species,
    /// Cadence of the full nodal series of the peak species, if wanted.
    pub series_every: Option<f64>,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 500.0,
            theta: 1.0,
            snapshot_every: 10.0,
            d_gap: 0.5,
            icc: CellParams::icc(),
            smc: CellParams::smc(),
            init_icc: CellState::INITIAL,
            init_smc: CellState::INITIAL,
            reaction_dt_max: 0.01,
            linear_tol: 1e-8,
            probes: Vec::new(),
            peak_threshold: 0.7,
            peak_min_separation: 5.0,
            peak_species: Species::Icc,
            series_every: None,
        }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt * (1.0 - 1e-9)) {
            return Err(Error::invalid(format!("need dt > 0 and t_end >= dt, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0, 1]"));
        }
        if !(self.reaction_dt_max > 0.0) || !(self.linear_tol > 0.0) || !(self.snapshot_every > 0.0) {
            return Err(Error::invalid("reaction_dt_max, linear_tol and snapshot_every must be positive"));
        }
        if !(self.d_gap >= 0.0) {
            return Err(Error::invalid("D_gap must be non-negative"));
        }
        self.icc.validate()?;
        self.smc.validate()
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) * (1.0 + 1e-12)).floor().max(1.0) as usize
    }

    pub fn substeps(&self) -> usize {
        ((self.dt / self.reaction_dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    fn stride(&self, every: f64) -> usize {
        (every / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    pub t: f64,
    pub icc: Vec<CellState>,
    pub smc: Vec<CellState>,
}

impl EpState {
    pub fn uniform(n: usize, icc: CellState, smc: CellState) -> Self {
        Self { t: 0.0, icc: vec![icc; n], smc: vec![smc; n] }
    }

    pub fn v(&self, species: Species) -> Vec<f64> {
        self.cells(species).iter().map(|c| c.v).collect()
    }

    pub fn cells(&self, species: Species) -> &[CellState] {
        match species {
            Species::Icc => &self.icc,
            Species::Smc => &self.smc,
        }
    }
}

/// Lumped mass and stiffness for one diffusivity field.
pub fn assemble(mesh: &Mesh, sigma: &[f64]) -> Result<(Vec<f64>, CsrMatrix)> {
    if sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::invalid("diffusivity must be non-negative"));
    }
    Ok((lumped_mass(mesh), stiffness(mesh, sigma)?))
}

struct SpeciesOps {
    k: CsrMatrix,
    system: CsrMatrix,
    chi_m_dt: Vec<f64>,
}

/// Assembled operators plus per-node cell constants for one mesh.
pub struct EpSolver {
    config: EpConfig,
    mass: Vec<f64>,
    chi_gap: Vec<f64>,
    icc_params: Vec<CellParams>,
    icc: SpeciesOps,
    smc: SpeciesOps,
}

impl EpSolver {
    pub fn new(mesh: &Mesh, coeffs: &EpCoefficients, config: EpConfig) -> Result<Self> {
        config.validate()?;
        coeffs.check(mesh)?;
        if let Some(&p) = config.probes.iter().find(|&&p| p >= mesh.n_nodes()) {
            return Err(Error::invalid(format!("probe node {p} outside mesh")));
        }
        let (mass, k_icc) = assemble(mesh, &coeffs.sigma_icc)?;
        let k_smc = stiffness(mesh, &coeffs.sigma_smc)?;
        let ops = |k: CsrMatrix, chi: &[f64]| {
            let chi_m_dt: Vec<f64> = chi.iter().zip(&mass).map(|(c, m)| c * m / config.dt).collect();
            let system = k.scaled_plus_diagonal(config.theta, &chi_m_dt);
            SpeciesOps { k, system, chi_m_dt }
        };
        let icc = ops(k_icc, &coeffs.chi_icc);
        let smc = ops(k_smc, &coeffs.chi_smc);
        let icc_params = coeffs.a_icc.iter().map(|&a| config.icc.with_a(a)).collect();
        Ok(Self { chi_gap: coeffs.chi_gap.clone(), mass, icc_params, icc, smc, config })
    }

    pub fn config(&self) -> &EpConfig {
        &self.config
    }

    pub fn initial_state(&self) -> EpState {
        EpState::uniform(self.mass.len(), self.config.init_icc, self.config.init_smc)
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut EpState) -> Result<()> {
        let c = &self.config;
        let n_sub = c.substeps();
        let h = c.dt / n_sub as f64;
        let react = |s: CellState, p: &CellParams| {
            let mut s = s;
            for _ in 0..n_sub {
                let v = s.v + h * ionic_current(s.v, s.h, p);
                s = CellState { v, h: relax_gate(s.h, s.v, p, h) };
            }
            s
        };

        let v_icc: Vec<f64> = state.icc.iter().map(|s| s.v).collect();
        let v_smc: Vec<f64> = state.smc.iter().map(|s| s.v).collect();
        let star_icc: Vec<CellState> = state.icc.iter().zip(&self.icc_params).map(|(&s, p)| react(s, p)).collect();
        let star_smc: Vec<CellState> = state.smc.iter().map(|&s| react(s, &c.smc)).collect();

        let gap: Vec<f64> = (0..v_icc.len())
            .map(|i| self.chi_gap[i] * self.mass[i] * c.d_gap * (v_icc[i] - v_smc[i]))
            .collect();

        let solve = |ops: &SpeciesOps, v: &[f64], star: &[CellState], sign: f64| -> Result<Vec<f64>> {
            let mut rhs: Vec<f64> = (0..v.len()).map(|i| ops.chi_m_dt[i] * star[i].v + sign * gap[i]).collect();
            if c.theta < 1.0 {
                let kv = ops.k.mul_vec(v);
                rhs.iter_mut().zip(&kv).for_each(|(r, k)| *r -= (1.0 - c.theta) * k);
            }
            let mut x: Vec<f64> = star.iter().map(|s| s.v).collect();
            pcg(&ops.system, &rhs, &mut x, c.linear_tol, 10 * v.len() + 1000)?;
            Ok(x)
        };
        let new_icc = solve(&self.icc, &v_icc, &star_icc, -1.0)?;
        let new_smc = solve(&self.smc, &v_smc, &star_smc, 1.0)?;

        for (s, (star, v)) in state.icc.iter_mut().zip(star_icc.iter().zip(new_icc)) {
            *s = CellState { v, h: star.h };
        }
        for (s, (star, v)) in state.smc.iter_mut().zip(star_smc.iter().zip(new_smc)) {
            *s = CellState { v, h: star.h };
        }
        state.t += c.dt;
        Ok(())
    }

    /// Integrates from the configured initial state to `t_end`.
    pub fn run(&self) -> Result<EpRecording> {
        self.run_from(self.initial_state())
    }

    pub fn run_from(&self, mut state: EpState) -> Result<EpRecording> {
        let c = &self.config;
        let n = self.mass.len();
        let n_steps = c.n_steps();
        let snap_stride = c.stride(c.snapshot_every);
        let series_stride = c.series_every.map(|e| c.stride(e));
        let mut rec = EpRecording {
            dt: c.dt,
            snapshots: Vec::new(),
            probes: c.probes.iter().map(|&node| ProbeSeries { node, samples: Vec::new() }).collect(),
            peaks: Vec::new(),
            series: series_stride.map(|s| NodalSeries { dt: c.dt * s as f64, times: Vec::new(), values: Vec::new() }),
            final_state: state.clone(),
        };
        let mut trackers = vec![PeakTracker::new(c.peak_threshold, c.peak_min_separation); n];

        let mut observe = |state: &EpState, k: usize, rec: &mut EpRecording| {
            for p in &mut rec.probes {
                p.samples.push(ProbeSample::of(state, p.node));
            }
            for (tr, cell) in trackers.iter_mut().zip(state.cells(c.peak_species)) {
                tr.push(state.t, cell.v);
            }
            if let (Some(stride), Some(series)) = (series_stride, rec.series.as_mut()) {
                if k.is_multiple_of(stride) {
                    series.times.push(state.t);
                    series.values.push(state.v(c.peak_species));
                }
            }
        };
        observe(&state, 0, &mut rec);
        for k in 1..=n_steps {
            self.step(&mut state)?;
            // avoid drift in the accumulated time
            state.t = k as f64 * c.dt;
            observe(&state, k, &mut rec);
            if k % snap_stride == 0 || k == n_steps {
                rec.snapshots.push(Snapshot { t: state.t, v_icc: state.v(Species::Icc), v_smc: state.v(Species::Smc) });
            }
        }
        rec.peaks = trackers.into_iter().map(PeakTracker::finish).collect();
        rec.final_state = state;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub v_icc: Vec<f64>,
    pub v_smc: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub v_icc: f64,
    pub v_smc: f64,
    pub h_icc: f64,
    pub h_smc: f64,
}

impl ProbeSample {
    fn of(s: &EpState, i: usize) -> Self {
        Self { t: s.t, v_icc: s.icc[i].v, v_smc: s.smc[i].v, h_icc: s.icc[i].h, h_smc: s.smc[i].h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub node: usize,
    pub samples: Vec<ProbeSample>,
}

/// Uniformly sampled nodal values: `values[k][node]` at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalSeries {
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl NodalSeries {
    pub fn node(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpRecording {
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub probes: Vec<ProbeSeries>,
    /// Per-node refined peak times of the tracked species.
    pub peaks: Vec<Vec<f64>>,
    pub series: Option<NodalSeries>,
    pub final_state: EpState,
}
