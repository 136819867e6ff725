//! Run configuration: embedded defaults, preset overlays and user files,
//! merged key by key and mapped onto a core [`Scenario`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use gastroem::axisym::AxisymConfig;
use gastroem::cell_model::{CellParams, CellState};
use gastroem::ep::{EpConfig, Species};
use gastroem::mesh::Point;
use gastroem::mixture::{FiberFamily, MixtureParams};
use gastroem::params::{ExcitabilityBounds, FieldSpec, RegionShaping, Shaping, ShapingParams, SigmaParams};
use gastroem::presets::{CouplingConfig, Geometry, Scenario};
use gastroem::MMHG_TO_KPA;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULTS: &str = include_str!("../config/defaults.toml");

const PRESETS: [(&str, &str); 3] = [
    ("line250", include_str!("../config/presets/line250.toml")),
    ("cyl250", include_str!("../config/presets/cyl250.toml")),
    ("torus90", include_str!("../config/presets/torus90.toml")),
];

/// Tables merged key by key; anything deeper is replaced as a whole.
const SECTIONS: [&str; 9] = ["mesh", "cell", "cell.icc", "cell.smc", "fields", "ep", "mech", "sweep", "output"];

/// Invalid or inconsistent user input.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Line,
    Cylinder,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub geometry: GeometryKind,
    pub length_mm: f64,
    pub h_mm: f64,
    pub radius_mm: f64,
    pub r1_mm: f64,
    pub r2_mm: f64,
    pub opening_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub a: f64,
    pub lambda: f64,
    pub tau_in_s: f64,
    pub tau_out_s: f64,
    pub tau_open_s: f64,
    pub tau_close_s: f64,
    pub v_gate: f64,
    pub eta_gate: f64,
    pub v0: f64,
    pub h0: f64,
}

impl CellSection {
    fn params(&self) -> CellParams {
        CellParams {
            a: self.a,
            lambda: self.lambda,
            tau_in: self.tau_in_s,
            tau_out: self.tau_out_s,
            tau_open: self.tau_open_s,
            tau_close: self.tau_close_s,
            v_gate: self.v_gate,
            eta_gate: self.eta_gate,
        }
    }

    fn initial(&self) -> CellState {
        CellState { v: self.v0, h: self.h0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cells {
    pub icc: CellSection,
    pub smc: CellSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    pub phi_ep: BTreeMap<String, f64>,
    pub phi_fp: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_gl: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_star: Option<f64>,
    pub a_max: f64,
    pub a_min_prox: f64,
    pub a_min_distal: f64,
    pub b_l_prox: f64,
    pub c_l_prox: f64,
    pub b_c_prox: f64,
    pub c_c_prox: f64,
    pub b_l_distal: f64,
    pub c_l_distal: f64,
    pub b_c_distal: f64,
    pub c_c_distal: f64,
    pub chi_min: f64,
    pub heterogeneous_chi: bool,
    pub sigma_lesser_mm2_s: f64,
    pub m_sigma: f64,
    pub c_sigma: f64,
    pub sigma_smc_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lesser_set: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeciesName {
    Icc,
    Smc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpSection {
    pub dt_s: f64,
    pub t_end_s: f64,
    pub theta: f64,
    pub snapshot_every_s: f64,
    pub d_gap_per_s: f64,
    pub reaction_dt_max_s: f64,
    pub linear_tol: f64,
    pub peak_threshold: f64,
    pub peak_min_separation_s: f64,
    pub peak_species: SpeciesName,
    pub probes_mm: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_every_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    Frozen,
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechSection {
    pub thickness_mm: f64,
    pub h_mm: f64,
    pub pressure_mmhg: f64,
    pub spring_k_kpa_mm: f64,
    pub kappa_b_kpa_mm3: f64,
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub max_line_cuts: usize,
    pub prestress_ramp: usize,
    pub prestress_tol_mm: f64,
    pub prestress_stationarity: f64,
    pub prestress_max_iter: usize,
    pub prestress_relaxation: f64,
    pub xi_c: f64,
    pub xi_l: f64,
    pub xi_gm: f64,
    pub k1_c_j_kg: f64,
    pub k2_c: f64,
    pub k1_l_j_kg: f64,
    pub k2_l: f64,
    pub mu_gm_j_kg: f64,
    pub nu_gm: f64,
    pub lambda_h_c: f64,
    pub lambda_h_l: f64,
    pub alpha_c: f64,
    pub alpha_l: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub v_thr: f64,
    pub rho0_kg_m3: f64,
    pub coupling: CouplingMode,
    pub t_start_s: f64,
    pub frozen_steps: usize,
    pub window_mm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_c: Vec<f64>,
    pub alpha_l: Vec<f64>,
    pub dt_s: Vec<f64>,
    pub h_mm: Vec<f64>,
    pub probe_x_mm: [f64; 2],
    pub t_end_s: f64,
    pub t_after_s: f64,
    pub level: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub label: String,
    pub frequency_window_s: f64,
    pub activation_window_s: [f64; 2],
    pub isochrone_interval_s: f64,
    pub surface_n_theta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub cell: Cells,
    pub fields: FieldsSection,
    pub ep: EpSection,
    pub mech: MechSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn parse_table(text: &str, origin: &str) -> anyhow::Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| config_err(format!("{origin}: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str) {
    for (key, value) in over {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if SECTIONS.contains(&path.as_str()) => merge(b, o, &path),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn preset_overlay(name: &str) -> anyhow::Result<toml::Table> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        config_err(format!("unknown preset '{name}', expected one of {:?}", preset_names().collect::<Vec<_>>()))
    })?;
    parse_table(text, name)
}

impl RunConfig {
    /// Defaults, then the preset overlay, then the user file.
    pub fn load(preset: Option<&str>, file: Option<&Path>) -> anyhow::Result<Self> {
        let mut table = parse_table(DEFAULTS, "embedded defaults")?;
        if let Some(p) = preset {
            merge(&mut table, preset_overlay(p)?, "");
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            merge(&mut table, parse_table(&text, &path.display().to_string())?, "");
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("mesh.h_mm", self.mesh.h_mm),
            ("ep.dt_s", self.ep.dt_s),
            ("mech.h_mm", self.mech.h_mm),
            ("output.frequency_window_s", self.output.frequency_window_s),
            ("output.isochrone_interval_s", self.output.isochrone_interval_s),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(config_err(format!("{k} must be positive, got {v}")));
        }
        let [a, b] = self.output.activation_window_s;
        if !(b > a) {
            return Err(config_err(format!("output.activation_window_s must be increasing, got [{a}, {b}]")));
        }
        if self.sweep.dt_s.iter().chain(&self.sweep.h_mm).any(|v| !(*v > 0.0)) {
            return Err(config_err("sweep.dt_s and sweep.h_mm entries must be positive"));
        }
        let [x1, x2] = self.sweep.probe_x_mm;
        if !(x2 > x1) {
            return Err(config_err(format!("sweep.probe_x_mm must be increasing, got [{x1}, {x2}]")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> anyhow::Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn geometry(&self) -> Geometry {
        let m = &self.mesh;
        match m.geometry {
            GeometryKind::Line => Geometry::Line { length: m.length_mm, h: m.h_mm },
            GeometryKind::Cylinder => Geometry::Cylinder { length: m.length_mm, radius: m.radius_mm, h: m.h_mm },
            GeometryKind::Torus => Geometry::Torus { r1: m.r1_mm, r2: m.r2_mm, opening_deg: m.opening_deg, h: m.h_mm },
        }
    }

    pub fn field_spec(&self) -> FieldSpec {
        let f = &self.fields;
        let pairs = |m: &BTreeMap<String, f64>| m.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>();
        let sh = |b, c| Shaping { b, c };
        FieldSpec {
            phi_ep: pairs(&f.phi_ep),
            phi_fp: pairs(&f.phi_fp),
            phi_gl: f.phi_gl.as_ref().map(pairs),
            phi_star: f.phi_star,
            shaping: ShapingParams {
                prox: RegionShaping { long: sh(f.b_l_prox, f.c_l_prox), circ: sh(f.b_c_prox, f.c_c_prox) },
                distal: RegionShaping { long: sh(f.b_l_distal, f.c_l_distal), circ: sh(f.b_c_distal, f.c_c_distal) },
            },
            excitability: ExcitabilityBounds { a_max: f.a_max, a_min_prox: f.a_min_prox, a_min_distal: f.a_min_distal },
            chi_min: f.chi_min,
            heterogeneous_chi: f.heterogeneous_chi,
            sigma: SigmaParams { sigma_lesser: f.sigma_lesser_mm2_s, m: f.m_sigma, c: f.c_sigma, smc_ratio: f.sigma_smc_ratio },
            lesser_set: f.lesser_set.clone().filter(|s| !s.is_empty()),
        }
    }

    pub fn ep_config(&self) -> EpConfig {
        let e = &self.ep;
        EpConfig {
            dt: e.dt_s,
            t_end: e.t_end_s,
            theta: e.theta,
            snapshot_every: e.snapshot_every_s,
            d_gap: e.d_gap_per_s,
            icc: self.cell.icc.params(),
            smc: self.cell.smc.params(),
            init_icc: self.cell.icc.initial(),
            init_smc: self.cell.smc.initial(),
            reaction_dt_max: e.reaction_dt_max_s,
            linear_tol: e.linear_tol,
            probes: Vec::new(),
            peak_threshold: e.peak_threshold,
            peak_min_separation: e.peak_min_separation_s,
            peak_species: match e.peak_species {
                SpeciesName::Icc => Species::Icc,
                SpeciesName::Smc => Species::Smc,
            },
            series_every: e.series_every_s,
        }
    }

    pub fn axisym_config(&self) -> AxisymConfig {
        let m = &self.mech;
        AxisymConfig {
            length: self.mesh.length_mm,
            radius: self.mesh.radius_mm,
            thickness: m.thickness_mm,
            h: m.h_mm,
            pressure: m.pressure_mmhg * MMHG_TO_KPA,
            spring_k: m.spring_k_kpa_mm,
            kappa_b: m.kappa_b_kpa_mm3,
            newton_rtol: m.newton_rtol,
            newton_atol: m.newton_atol,
            newton_max_iter: m.newton_max_iter,
            max_line_cuts: m.max_line_cuts,
            prestress_ramp: m.prestress_ramp,
            prestress_tol: m.prestress_tol_mm,
            prestress_stationarity: m.prestress_stationarity,
            prestress_max_iter: m.prestress_max_iter,
            prestress_relaxation: m.prestress_relaxation,
        }
    }

    pub fn material(&self) -> MixtureParams {
        let m = &self.mech;
        MixtureParams {
            xi_c: m.xi_c,
            xi_l: m.xi_l,
            xi_gm: m.xi_gm,
            circ: FiberFamily { k1: m.k1_c_j_kg, k2: m.k2_c },
            long: FiberFamily { k1: m.k1_l_j_kg, k2: m.k2_l },
            mu_gm: m.mu_gm_j_kg,
            nu_gm: m.nu_gm,
            lambda_h_c: m.lambda_h_c,
            lambda_h_l: m.lambda_h_l,
            alpha_c: m.alpha_c,
            alpha_l: m.alpha_l,
            beta1: m.beta1,
            beta2: m.beta2,
            v_thr: m.v_thr,
            rho0: m.rho0_kg_m3,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            name: self.output.label.clone(),
            geometry: self.geometry(),
            fields: self.field_spec(),
            ep: self.ep_config(),
            probe_points: self.ep.probes_mm.iter().map(|p| Point::new(p[0], p[1], p[2])).collect(),
            axisym: self.axisym_config(),
            material: self.material(),
            coupling: CouplingConfig {
                t_start: self.mech.t_start_s,
                frozen_steps: self.mech.frozen_steps,
                window: (self.mech.window_mm[0], self.mech.window_mm[1]),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gastroem::presets;

    #[test]
    fn presets_match_the_core_scenarios() {
        for name in preset_names() {
            let cfg = RunConfig::load(Some(name), None).unwrap();
            let mut got = cfg.scenario();
            let want = presets::by_name(name).unwrap();
            for (a, b) in got.probe_points.iter().zip(&want.probe_points) {
                assert!((a - b).norm() < 1e-9, "{name}: probe {a} vs {b}");
            }
            assert_eq!(got.probe_points.len(), want.probe_points.len());
            got.probe_points = want.probe_points.clone();
            assert_eq!(got, want, "{name}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[ep]\ndt = 0.1\n").unwrap();
        let err = RunConfig::load(None, Some(&p)).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn user_keys_override_single_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[ep]\nt_end_s = 12.0\n[cell.icc]\ntau_in_s = 0.03\n[fields]\nphi_fp = { a = 0.0, b = 1.0 }\n").unwrap();
        let cfg = RunConfig::load(Some("cyl250"), Some(&p)).unwrap();
        assert_eq!(cfg.ep.t_end_s, 12.0);
        assert_eq!(cfg.ep.dt_s, 0.1);
        assert_eq!(cfg.cell.icc.tau_in_s, 0.03);
        assert_eq!(cfg.cell.icc.tau_out_s, 4.70719e-1);
        assert_eq!(cfg.mech.alpha_c, 0.5);
        // boundary data is replaced, not merged
        assert_eq!(cfg.fields.phi_fp.keys().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn resolved_config_round_trips_and_hashes_stably() {
        let cfg = RunConfig::load(Some("torus90"), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("resolved.toml");
        std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
        let back = RunConfig::load(None, Some(&p)).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_ne!(RunConfig::load(Some("line250"), None).unwrap().hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn unknown_preset_and_bad_values() {
        assert!(RunConfig::load(Some("stomach"), None).unwrap_err().downcast_ref::<ConfigError>().is_some());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[ep]\ndt_s = -1.0\n").unwrap();
        assert!(RunConfig::load(None, Some(&p)).unwrap_err().to_string().contains("ep.dt_s"));
    }
}
