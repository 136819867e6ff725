//! Two-variable Mitchell-Schaeffer type cell model for ICC and SMC.
//!
//! dv/dt = I_ion(v, h),  dh/dt = (h_inf(v) - h) / tau_h(v)

use crate::error::{Error, Result};

/// Per-species model constants. Times in seconds, everything else dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub a: f64,
    pub lambda: f64,
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
    pub eta_gate: f64,
}

/// Maximum primary ICC excitability.
pub const A_MAX: f64 = 3.31600e-2;

impl CellParams {
    pub fn icc() -> Self {
        Self {
            a: A_MAX,
            lambda: 1.25e-2,
            tau_in: 2.29274e-2,
            tau_out: 4.70719e-1,
            tau_open: 9.232,
            tau_close: 4.77082,
            v_gate: 1.03825e-1,
            eta_gate: 4.50362e-2,
        }
    }

    pub fn smc() -> Self {
        Self { a: 0.0, tau_in: 1.14637e-1, ..Self::icc() }
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let taus = [self.tau_in, self.tau_out, self.tau_open, self.tau_close];
        if taus.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::invalid("cell time constants must be positive"));
        }
        if !(self.eta_gate > 0.0) {
            return Err(Error::invalid("eta_gate must be positive"));
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) {
            return Err(Error::invalid("v_gate must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub v: f64,
    pub h: f64,
}

impl CellState {
    /// Initial state of both species.
    pub const INITIAL: CellState = CellState { v: 3.41438e-2, h: 6.78747e-1 };

    pub fn new(v: f64, h: f64) -> Self {
        Self { v, h }
    }
}

impl Default for CellState {
    fn default() -> Self {
        Self::INITIAL
    }
}

/// Smoothed gate: 1/2 (1 - tanh((v - v_gate) / eta_gate)).
pub fn h_inf(v: f64, p: &CellParams) -> f64 {
    0.5 * (1.0 - ((v - p.v_gate) / p.eta_gate).tanh())
}

/// Gate time constant, interpolating between tau_open (h_inf = 1) and tau_close (h_inf = 0).
pub fn tau_h(v: f64, p: &CellParams) -> f64 {
    p.tau_open * p.tau_close / (p.tau_open + h_inf(v, p) * (p.tau_close - p.tau_open))
}

pub fn ionic_current(v: f64, h: f64, p: &CellParams) -> f64 {
    let va = v + p.a;
    h / p.tau_in * va * (va - p.lambda) * (1.0 - v) - v / p.tau_out
}

/// Exact relaxation of h towards h_inf(v) over `dt` with v frozen.
pub fn relax_gate(h: f64, v: f64, p: &CellParams, dt: f64) -> f64 {
    let hi = h_inf(v, p);
    hi + (h - hi) * (-dt / tau_h(v, p)).exp()
}

/// Forward Euler in v, exponential integrator in h, both from the old state.
pub fn step_cell(s: CellState, p: &CellParams, dt: f64) -> CellState {
    CellState { v: s.v + dt * ionic_current(s.v, s.h, p), h: relax_gate(s.h, s.v, p, dt) }
}

/// Integrates an isolated cell, returning samples every `record_every` steps.
pub fn simulate(s0: CellState, p: &CellParams, dt: f64, t_end: f64, record_every: usize) -> Vec<(f64, CellState)> {
    let n = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut out = Vec::with_capacity(n / every + 2);
    let mut s = s0;
    out.push((0.0, s));
    for k in 1..=n {
        s = step_cell(s, p, dt);
        if k % every == 0 {
            out.push((k as f64 * dt, s));
        }
    }
    out
}
