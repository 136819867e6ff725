//! Heterogeneous excitability, weighting and diffusivity fields built from
//! harmonic coordinates.

use crate::error::{Error, Result};
use crate::harmonic::{element_gradient, solve_laplace};
use crate::mesh::{DimKind, Mesh};

/// Shape of one decay profile: f(0) = 1, f(1) = c, spread b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shaping {
    pub b: f64,
    pub c: f64,
}

impl Shaping {
    pub fn eval(&self, xi: f64) -> f64 {
        shaping_f(xi, self.b, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionShaping {
    pub long: Shaping,
    pub circ: Shaping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingParams {
    pub prox: RegionShaping,
    pub distal: RegionShaping,
}

impl ShapingParams {
    const PROX: RegionShaping = RegionShaping {
        long: Shaping { b: 316.22, c: 0.0 },
        circ: Shaping { b: 10.0, c: 0.9 },
    };

    /// No circumferential variation in the distal region.
    pub fn unidirectional() -> Self {
        Self {
            prox: Self::PROX,
            distal: RegionShaping {
                long: Shaping { b: 3.1622, c: 0.0 },
                circ: Shaping { b: 3.1622, c: 1.0 },
            },
        }
    }

    pub fn anisotropic() -> Self {
        Self {
            prox: Self::PROX,
            distal: RegionShaping {
                long: Shaping { b: 3.1622, c: 0.0 },
                circ: Shaping { b: 0.1, c: 0.9 },
            },
        }
    }

    fn region(&self, r: Region) -> &RegionShaping {
        match r {
            Region::Prox => &self.prox,
            Region::Distal => &self.distal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [self.prox.long, self.prox.circ, self.distal.long, self.distal.circ] {
            if !(s.b > 0.0) || !(0.0..=1.0).contains(&s.c) {
                return Err(Error::invalid(format!("shaping needs b > 0 and c in [0, 1], got {s:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Prox,
    Distal,
}

/// Normalised longitudinal and circumferential coordinates with region tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCoords {
    pub xi_l: Vec<f64>,
    pub xi_c: Vec<f64>,
    pub region: Vec<Region>,
}

/// Splits phi_fp at `phi_star` into a proximal and a distal coordinate, both
/// rising from 0 at the split to 1 at the ends. With `phi_star = None` the
/// whole domain is distal and xi_l = phi_fp.
pub fn control_coords(phi_fp: &[f64], phi_gl: Option<&[f64]>, phi_star: Option<f64>) -> Result<ControlCoords> {
    if let Some(gl) = phi_gl {
        if gl.len() != phi_fp.len() {
            return Err(Error::invalid("phi_gl and phi_fp lengths differ"));
        }
    }
    let star = match phi_star {
        Some(s) if s > 0.0 && s < 1.0 => s,
        Some(s) => return Err(Error::invalid(format!("phi* must lie in (0, 1), got {s}"))),
        None => 0.0,
    };
    let mut cc = ControlCoords {
        xi_l: Vec::with_capacity(phi_fp.len()),
        xi_c: phi_gl.map_or_else(|| vec![0.0; phi_fp.len()], <[f64]>::to_vec),
        region: Vec::with_capacity(phi_fp.len()),
    };
    for &p in phi_fp {
        if p >= star {
            cc.xi_l.push((p - star) / (1.0 - star));
            cc.region.push(Region::Distal);
        } else {
            cc.xi_l.push((star - p) / star);
            cc.region.push(Region::Prox);
        }
    }
    Ok(cc)
}

/// f(xi) = 1 - (c - 1)/(exp(-b) - 1) (1 - exp(-b xi^2)).
pub fn shaping_f(xi: f64, b: f64, c: f64) -> f64 {
    1.0 - (c - 1.0) / ((-b).exp() - 1.0) * (1.0 - (-b * xi * xi).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitabilityBounds {
    pub a_max: f64,
    pub a_min_prox: f64,
    pub a_min_distal: f64,
}

impl Default for ExcitabilityBounds {
    fn default() -> Self {
        Self { a_max: crate::cell_model::A_MAX, a_min_prox: 0.0, a_min_distal: 2.23075e-2 }
    }
}

/// a = a_min(r) + (a_max - a_min(r)) f_l(xi_l) f_c(xi_c).
pub fn excitability_field(cc: &ControlCoords, shaping: &ShapingParams, bounds: &ExcitabilityBounds) -> Result<Vec<f64>> {
    if bounds.a_min_prox > bounds.a_max || bounds.a_min_distal > bounds.a_max {
        return Err(Error::invalid("minimum excitability exceeds a_max"));
    }
    Ok((0..cc.xi_l.len())
        .map(|i| {
            let r = cc.region[i];
            let s = shaping.region(r);
            let a_min = match r {
                Region::Prox => bounds.a_min_prox,
                Region::Distal => bounds.a_min_distal,
            };
            a_min + (bounds.a_max - a_min) * s.long.eval(cc.xi_l[i]) * s.circ.eval(cc.xi_c[i])
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiFields {
    pub icc: Vec<f64>,
    pub gap: Vec<f64>,
    pub smc: Vec<f64>,
}

/// Regional weights. Distal nodes get 1; proximal nodes get f_l f_c, with
/// only the ICC weight clamped from below at `chi_min`.
pub fn chi_fields(cc: &ControlCoords, shaping: &ShapingParams, chi_min: f64) -> Result<ChiFields> {
    if !(chi_min > 0.0 && chi_min < 1.0) {
        return Err(Error::invalid(format!("chi_min must lie in (0, 1), got {chi_min}")));
    }
    let n = cc.xi_l.len();
    let gap: Vec<f64> = (0..n)
        .map(|i| match cc.region[i] {
            Region::Distal => 1.0,
            Region::Prox => shaping.prox.long.eval(cc.xi_l[i]) * shaping.prox.circ.eval(cc.xi_c[i]),
        })
        .collect();
    let icc = gap.iter().map(|&g| g.max(chi_min)).collect();
    Ok(ChiFields { icc, gap, smc: vec![1.0; n] })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaParams {
    /// ICC diffusivity on the lesser curvature (mm^2/s).
    pub sigma_lesser: f64,
    /// Slope of the velocity-diffusivity line (mm/s per mm^2/s).
    pub m: f64,
    /// Intercept of the velocity-diffusivity line (mm/s).
    pub c: f64,
    pub smc_ratio: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        Self { sigma_lesser: 0.6, m: 1.62, c: 2.155, smc_ratio: 0.1 }
    }
}

/// Closed-form diffusivity for a gradient ratio r = |grad phi(lesser)| / |grad phi(X)|.
pub fn sigma_from_ratio(r: f64, p: &SigmaParams) -> f64 {
    let k = p.c / p.m;
    p.sigma_lesser + (r - 1.0) * (p.sigma_lesser + k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFields {
    pub icc: Vec<f64>,
    pub smc: Vec<f64>,
}

/// Per-element diffusivities. Each element is matched to the lesser-curvature
/// element (one with at least one node in `lesser_set`) whose mean phi_fp is
/// closest. Line meshes and meshes without the set get r = 1 everywhere.
pub fn sigma_fields(mesh: &Mesh, phi_fp: &[f64], lesser_set: Option<&str>, p: &SigmaParams) -> Result<SigmaFields> {
    if !(p.m > 0.0) {
        return Err(Error::invalid("velocity-diffusivity slope must be positive"));
    }
    let ne = mesh.n_elements();
    let lesser = match (mesh.dim_kind(), lesser_set.and_then(|s| mesh.boundary_set(s))) {
        (DimKind::Surface, Some(set)) if !set.is_empty() => Some(set),
        _ => None,
    };
    let ratio: Vec<f64> = match lesser {
        None => vec![1.0; ne],
        Some(set) => {
            let grads = element_gradient(mesh, phi_fp)?;
            let mid = |e: usize| {
                let el = mesh.element(e);
                el.iter().map(|&i| phi_fp[i]).sum::<f64>() / el.len() as f64
            };
            let mut on_set = vec![false; mesh.n_nodes()];
            set.iter().for_each(|&i| on_set[i] = true);
            let is_ref: Vec<bool> = (0..ne).map(|e| mesh.element(e).iter().any(|&i| on_set[i])).collect();
            let mut refs: Vec<(f64, usize)> = (0..ne).filter(|&e| is_ref[e]).map(|e| (mid(e), e)).collect();
            refs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (0..ne)
                .map(|e| {
                    let r = if is_ref[e] { e } else { nearest(&refs, mid(e)) };
                    let (gr, ge) = (grads[r].norm(), grads[e].norm());
                    if !(gr > 0.0 && ge > 0.0) {
                        return Err(Error::DegenerateDirection { element: if ge > 0.0 { r } else { e } });
                    }
                    Ok(gr / ge)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut icc = Vec::with_capacity(ne);
    for &r in &ratio {
        let s = sigma_from_ratio(r, p);
        if !(s > 0.0) {
            return Err(Error::ParameterInconsistency(format!(
                "gradient ratio {r:.4} gives non-positive diffusivity {s:.4}"
            )));
        }
        icc.push(s);
    }
    let smc = icc.iter().map(|s| s * p.smc_ratio).collect();
    Ok(SigmaFields { icc, smc })
}

fn nearest(sorted: &[(f64, usize)], x: f64) -> usize {
    let k = sorted.partition_point(|&(v, _)| v < x);
    let lo = k.checked_sub(1).map(|j| sorted[j]);
    let hi = sorted.get(k).copied();
    match (lo, hi) {
        (Some(a), Some(b)) => if x - a.0 <= b.0 - x { a.1 } else { b.1 },
        (Some(a), None) => a.1,
        (None, Some(b)) => b.1,
        (None, None) => unreachable!("reference set is non-empty"),
    }
}

/// Dirichlet data for one harmonic coordinate: (set, value) pairs.
pub type Dirichlet = Vec<(String, f64)>;

/// Everything needed to derive the parameter fields on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub phi_ep: Dirichlet,
    pub phi_fp: Dirichlet,
    pub phi_gl: Option<Dirichlet>,
    pub phi_star: Option<f64>,
    pub shaping: ShapingParams,
    pub excitability: ExcitabilityBounds,
    pub chi_min: f64,
    /// When false every node carries chi = 1.
    pub heterogeneous_chi: bool,
    pub sigma: SigmaParams,
    /// Lesser-curvature set for the diffusivity closed form; `None` gives uniform sigma.
    pub lesser_set: Option<String>,
}

impl Default for FieldSpec {
    fn default() -> Self {
        let ends = vec![("prox".to_string(), 0.0), ("pyl".to_string(), 1.0)];
        Self {
            phi_ep: ends.clone(),
            phi_fp: ends,
            phi_gl: None,
            phi_star: None,
            shaping: ShapingParams::unidirectional(),
            excitability: ExcitabilityBounds::default(),
            chi_min: 1e-3,
            heterogeneous_chi: true,
            sigma: SigmaParams::default(),
            lesser_set: None,
        }
    }
}

/// All spatially varying model inputs on one mesh.
#[derive(Debug, Clone)]
pub struct ParameterFields {
    pub phi_ep: Vec<f64>,
    pub phi_fp: Vec<f64>,
    pub phi_gl: Option<Vec<f64>>,
    pub coords: ControlCoords,
    pub a_icc: Vec<f64>,
    pub chi: ChiFields,
    pub sigma: SigmaFields,
}

fn solve(mesh: &Mesh, d: &Dirichlet) -> Result<Vec<f64>> {
    let pairs: Vec<(&str, f64)> = d.iter().map(|(s, v)| (s.as_str(), *v)).collect();
    solve_laplace(mesh, &pairs)
}

impl ParameterFields {
    pub fn build(mesh: &Mesh, spec: &FieldSpec) -> Result<Self> {
        spec.shaping.validate()?;
        let phi_ep = solve(mesh, &spec.phi_ep)?;
        let phi_fp = if spec.phi_fp == spec.phi_ep { phi_ep.clone() } else { solve(mesh, &spec.phi_fp)? };
        let phi_gl = spec.phi_gl.as_ref().map(|d| solve(mesh, d)).transpose()?;
        let coords = control_coords(&phi_fp, phi_gl.as_deref(), spec.phi_star)?;
        let a_icc = excitability_field(&coords, &spec.shaping, &spec.excitability)?;
        let chi = if spec.heterogeneous_chi {
            chi_fields(&coords, &spec.shaping, spec.chi_min)?
        } else {
            let n = mesh.n_nodes();
            ChiFields { icc: vec![1.0; n], gap: vec![1.0; n], smc: vec![1.0; n] }
        };
        let sigma = sigma_fields(mesh, &phi_fp, spec.lesser_set.as_deref(), &spec.sigma)?;
        Ok(Self { phi_ep, phi_fp, phi_gl, coords, a_icc, chi, sigma })
    }
}
