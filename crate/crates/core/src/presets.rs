//! The three benchmark scenarios: a 250 mm line, the 250 mm cylinder and a
//! quarter torus. Each bundles geometry, field recipe, EP settings and the
//! cylinder mechanics.

use crate::axisym::AxisymConfig;
use crate::ep::EpConfig;
use crate::error::{Error, Result};
use crate::mesh::{generate_cylinder_strip, generate_line, generate_torus, Mesh, Point};
use crate::mixture::MixtureParams;
use crate::params::{FieldSpec, SigmaParams};

pub const NAMES: [&str; 3] = ["line250", "cyl250", "torus90"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Line { length: f64, h: f64 },
    Cylinder { length: f64, radius: f64, h: f64 },
    Torus { r1: f64, r2: f64, opening_deg: f64, h: f64 },
}

impl Geometry {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            Geometry::Line { length, h } => generate_line(length, h),
            Geometry::Cylinder { length, radius, h } => generate_cylinder_strip(length, radius, h),
            Geometry::Torus { r1, r2, opening_deg, h } => generate_torus(r1, r2, opening_deg, h),
        }
    }

    pub fn h(&self) -> f64 {
        match *self {
            Geometry::Line { h, .. } | Geometry::Cylinder { h, .. } | Geometry::Torus { h, .. } => h,
        }
    }
}

/// How the mechanics consumes an EP recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    /// Snapshots at or after this time drive the trajectory (s).
    pub t_start: f64,
    /// Load increments used to apply a frozen activation snapshot.
    pub frozen_steps: usize,
    /// Axial window for A_c and h_t,max (mm).
    pub window: (f64, f64),
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { t_start: 400.0, frozen_steps: 4, window: (50.0, 200.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub geometry: Geometry,
    pub fields: FieldSpec,
    pub ep: EpConfig,
    /// Probe locations (mm); each maps to its nearest node.
    pub probe_points: Vec<Point>,
    pub axisym: AxisymConfig,
    pub material: MixtureParams,
    pub coupling: CouplingConfig,
}

/// Nearest node to each point.
pub fn nearest_nodes(mesh: &Mesh, points: &[Point]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            (0..mesh.n_nodes())
                .min_by(|&a, &b| (mesh.node(a) - p).norm().total_cmp(&(mesh.node(b) - p).norm()))
                .unwrap_or(0)
        })
        .collect()
}

fn axial_probes(length: f64) -> Vec<Point> {
    [0.25, 0.5, 0.75].iter().map(|f| Point::new(f * length, 0.0, 0.0)).collect()
}

/// 250 mm line, distal excitability gradient from the pacemaker end, uniform
/// sigma = 0.6 mm^2/s.
pub fn line250() -> Scenario {
    Scenario {
        name: "line250".into(),
        geometry: Geometry::Line { length: 250.0, h: 0.5 },
        fields: FieldSpec::default(),
        ep: EpConfig::default(),
        probe_points: axial_probes(250.0),
        axisym: AxisymConfig::default(),
        material: MixtureParams::default(),
        coupling: CouplingConfig::default(),
    }
}

/// Cylinder benchmark: line EP along the axis with sigma_icc = 1.2,
/// sigma_smc = 0.12, chi = 1, and the cylinder mixture with
/// alpha_c = alpha_l = 0.5 at 25 mmHg.
pub fn cyl250() -> Scenario {
    let radius = 50.93;
    Scenario {
        name: "cyl250".into(),
        geometry: Geometry::Cylinder { length: 250.0, radius, h: 0.5 },
        fields: FieldSpec {
            heterogeneous_chi: false,
            sigma: SigmaParams { sigma_lesser: 1.2, ..SigmaParams::default() },
            ..FieldSpec::default()
        },
        ep: EpConfig { t_end: 496.0, peak_threshold: 0.7, ..EpConfig::default() },
        probe_points: axial_probes(250.0),
        axisym: AxisymConfig { radius, ..AxisymConfig::default() },
        material: MixtureParams::cylinder(),
        coupling: CouplingConfig::default(),
    }
}

/// Quarter torus (R1 = 159.155 mm, R2 = 50.93 mm). With
/// `heterogeneous_sigma` the ICC diffusivity follows the curvature closed
/// form referenced to the lesser curvature; otherwise it is uniform.
pub fn torus90(heterogeneous_sigma: bool) -> Scenario {
    let (r1, r2) = (159.155, 50.93);
    let theta = [22.5f64, 45.0, 67.5];
    Scenario {
        name: "torus90".into(),
        geometry: Geometry::Torus { r1, r2, opening_deg: 90.0, h: 2.0 },
        fields: FieldSpec {
            phi_gl: Some(vec![("greater".into(), 0.0), ("lesser".into(), 1.0)]),
            lesser_set: heterogeneous_sigma.then(|| "lesser".to_string()),
            ..FieldSpec::default()
        },
        ep: EpConfig::default(),
        probe_points: theta
            .iter()
            .map(|t| {
                let t = t.to_radians();
                Point::new((r1 + r2) * t.cos(), (r1 + r2) * t.sin(), 0.0)
            })
            .collect(),
        axisym: AxisymConfig::default(),
        material: MixtureParams::default(),
        coupling: CouplingConfig::default(),
    }
}

pub fn by_name(name: &str) -> Result<Scenario> {
    match name {
        "line250" => Ok(line250()),
        "cyl250" => Ok(cyl250()),
        "torus90" => Ok(torus90(true)),
        _ => Err(Error::invalid(format!("unknown preset '{name}', expected one of {NAMES:?}"))),
    }
}
