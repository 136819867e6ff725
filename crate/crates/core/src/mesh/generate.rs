use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{Mesh, Point, Topology};
use crate::error::{Error, Result};

/// Number of uniform segments covering `length` with spacing at most `h`.
fn segments(length: f64, h: f64) -> usize {
    // guard against 250/0.5 landing a hair above an integer
    ((length / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Uniform line mesh on `[0, length]` along x with end sets `prox` and `pyl`.
pub fn generate_line(length: f64, h: f64) -> Result<Mesh> {
    check_positive("length", length)?;
    check_positive("h", h)?;
    if h > length {
        return Err(Error::invalid(format!("h = {h} exceeds length = {length}")));
    }
    let n = segments(length, h);
    let nodes = (0..=n)
        .map(|i| Point::new(length * i as f64 / n as f64, 0.0, 0.0))
        .collect();
    let elems = (0..n).map(|i| [i, i + 1]).collect();
    let sets = BTreeMap::from([("prox".to_string(), vec![0]), ("pyl".to_string(), vec![n])]);
    Mesh::new(nodes, Topology::Lines(elems), sets)
}

/// Axial line mesh of a cylinder. The radius is carried as metadata.
pub fn generate_cylinder_strip(length: f64, radius: f64, h: f64) -> Result<Mesh> {
    check_positive("radius", radius)?;
    Ok(generate_line(length, h)?.with_cylinder_radius(radius))
}

/// Structured triangulation of a torus sector.
///
/// Node `(i, j)` sits at toroidal angle `theta_i` and poloidal angle
/// `psi_j`; psi = 0 is the outer equator. Open sectors carry the sets
/// `prox` (theta = 0), `pyl` (theta = opening), `greater` (outer equator)
/// and `lesser` (inner equator). A full revolution is closed and untagged.
pub fn generate_torus(r1: f64, r2: f64, opening_angle_deg: f64, h: f64) -> Result<Mesh> {
    check_positive("R2", r2)?;
    check_positive("h", h)?;
    if !(r1 > r2) {
        return Err(Error::invalid(format!("major radius {r1} must exceed minor radius {r2}")));
    }
    if !(opening_angle_deg > 0.0 && opening_angle_deg <= 360.0) {
        return Err(Error::invalid(format!(
            "opening angle must lie in (0, 360], got {opening_angle_deg}"
        )));
    }
    let closed = opening_angle_deg >= 360.0;
    let theta_max = opening_angle_deg.to_radians();
    let n_theta = segments(r1 * theta_max, h).max(if closed { 3 } else { 1 });
    let mut n_psi = segments(2.0 * PI * r2, h).max(4);
    n_psi += n_psi % 2;

    let rings = if closed { n_theta } else { n_theta + 1 };
    let id = |i: usize, j: usize| (i % rings) * n_psi + (j % n_psi);

    let mut nodes = Vec::with_capacity(rings * n_psi);
    for i in 0..rings {
        let theta = theta_max * i as f64 / n_theta as f64;
        for j in 0..n_psi {
            let psi = 2.0 * PI * j as f64 / n_psi as f64;
            let rho = r1 + r2 * psi.cos();
            nodes.push(Point::new(rho * theta.cos(), rho * theta.sin(), r2 * psi.sin()));
        }
    }
    let mut tris = Vec::with_capacity(2 * n_theta * n_psi);
    for i in 0..n_theta {
        for j in 0..n_psi {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut sets = BTreeMap::new();
    if !closed {
        sets.insert("prox".to_string(), (0..n_psi).map(|j| id(0, j)).collect());
        sets.insert("pyl".to_string(), (0..n_psi).map(|j| id(n_theta, j)).collect());
        sets.insert("greater".to_string(), (0..rings).map(|i| id(i, 0)).collect());
        sets.insert("lesser".to_string(), (0..rings).map(|i| id(i, n_psi / 2)).collect());
    }
    Mesh::new(nodes, Topology::Triangles(tris), sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_counts() {
        let m = generate_line(250.0, 0.5).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements()), (501, 500));
        let m = generate_line(250.0, 250.0).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements()), (2, 1));
        let m = generate_line(10.0, 3.0).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements()), (5, 4));
        for e in 0..4 {
            assert!((m.measure(e) - 2.5).abs() < 1e-12);
        }
        assert_eq!(m.boundary_set("prox"), Some(&[0][..]));
        assert_eq!(m.boundary_set("pyl"), Some(&[4][..]));
    }

    #[test]
    fn line_rejects_bad_arguments() {
        assert!(generate_line(0.0, 1.0).is_err());
        assert!(generate_line(10.0, -1.0).is_err());
        assert!(generate_line(10.0, 11.0).is_err());
    }

    #[test]
    fn cylinder_strip_metadata() {
        let m = generate_cylinder_strip(250.0, 50.930, 0.5).unwrap();
        assert_eq!(m.n_elements(), 500);
        assert_eq!(m.cylinder_radius(), Some(50.930));
        assert_eq!(m.boundary_sets().keys().collect::<Vec<_>>(), ["prox", "pyl"]);
        assert_eq!(generate_cylinder_strip(250.0, 50.930, 125.0).unwrap().n_elements(), 2);
        assert!(generate_cylinder_strip(250.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_torus_has_no_sets() {
        let m = generate_torus(10.0, 5.0, 360.0, 2.0).unwrap();
        assert!(m.boundary_sets().is_empty());
        assert!(m.is_edge_manifold());
        // closed orientable surface: every directed edge has its reverse
        assert_eq!(m.n_nodes() * 2, m.n_elements());
    }

    #[test]
    fn torus_rejects_fat_tube() {
        assert!(generate_torus(5.0, 5.0, 90.0, 1.0).is_err());
        assert!(generate_torus(10.0, 5.0, 0.0, 1.0).is_err());
        assert!(generate_torus(10.0, 5.0, 400.0, 1.0).is_err());
    }

    #[test]
    fn quarter_torus_sets_and_outward_normals() {
        let m = generate_torus(159.155, 50.93, 90.0, 4.0).unwrap();
        for s in ["prox", "pyl", "greater", "lesser"] {
            assert!(!m.boundary_set(s).unwrap().is_empty(), "{s}");
        }
        assert!(m.is_edge_manifold());
        for e in 0..m.n_elements() {
            let c = m.centroid(e);
            let axis = Point::new(c.x, c.y, 0.0).normalize() * 159.155;
            assert!(m.element_normal(e).unwrap().dot(&(c - axis)) > 0.0);
        }
        for &i in m.boundary_set("prox").unwrap() {
            assert!(m.node(i).y.abs() < 1e-9);
        }
    }

    #[test]
    fn torus_area_converges() {
        let (r1, r2) = (159.155, 50.93);
        let m = generate_torus(r1, r2, 90.0, r2 / 20.0).unwrap();
        let exact = 4.0 * PI * PI * r1 * r2 * 0.25;
        assert!((m.total_measure() - exact).abs() / exact < 0.01);
    }

    proptest! {
        #[test]
        fn line_length_preserved(len in 0.1f64..1000.0, frac in 0.001f64..1.0) {
            let m = generate_line(len, len * frac).unwrap();
            prop_assert!(m.validate().is_ok());
            prop_assert!((m.total_measure() - len).abs() <= 1e-9 * len);
        }

        #[test]
        fn torus_always_valid(r2 in 1.0f64..10.0, extra in 0.5f64..20.0, ang in 5.0f64..360.0, hf in 0.1f64..0.6) {
            let m = generate_torus(r2 + extra, r2, ang, r2 * hf).unwrap();
            prop_assert!(m.validate().is_ok());
            prop_assert!(m.is_edge_manifold());
        }
    }
}
