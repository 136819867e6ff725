//! Linear (P1) element kernels on line and triangle meshes.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Mesh, Point};

/// Measure and basis-function gradients of one element. For lines only the
/// first two gradients are meaningful.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub measure: f64,
    pub grads: [Point; 3],
    pub arity: usize,
}

pub fn element_geometry(mesh: &Mesh, e: usize) -> Result<ElementGeometry> {
    let el = mesh.element(e);
    let x: Vec<Point> = el.iter().map(|&i| *mesh.node(i)).collect();
    let degenerate = |r: &str| Error::DegenerateGeometry { element: e, reason: r.to_string() };
    if el.len() == 2 {
        let d = x[1] - x[0];
        let len = d.norm();
        if !(len > 0.0) {
            return Err(degenerate("zero-length line"));
        }
        let g = d / (len * len);
        return Ok(ElementGeometry { measure: len, grads: [-g, g, Point::zeros()], arity: 2 });
    }
    let c = (x[1] - x[0]).cross(&(x[2] - x[0]));
    let twice_area = c.norm();
    if !(twice_area > 0.0) || !twice_area.is_finite() {
        return Err(degenerate("zero-area triangle"));
    }
    let n = c / twice_area;
    let grad = |i: usize| n.cross(&(x[(i + 2) % 3] - x[(i + 1) % 3])) / twice_area;
    Ok(ElementGeometry { measure: 0.5 * twice_area, grads: [grad(0), grad(1), grad(2)], arity: 3 })
}

/// P1 stiffness matrix with one diffusivity per element.
pub fn stiffness(mesh: &Mesh, sigma: &[f64]) -> Result<CsrMatrix> {
    if sigma.len() != mesh.n_elements() {
        return Err(Error::invalid(format!(
            "{} element coefficients for {} elements",
            sigma.len(),
            mesh.n_elements()
        )));
    }
    let mut trip = Vec::with_capacity(mesh.n_elements() * 9);
    for (e, &s) in sigma.iter().enumerate() {
        let g = element_geometry(mesh, e)?;
        let el = mesh.element(e);
        for a in 0..g.arity {
            for b in 0..g.arity {
                trip.push((el[a], el[b], s * g.measure * g.grads[a].dot(&g.grads[b])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &trip)
}

/// Row-sum lumped mass: each node receives measure/arity from every element.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let el = mesh.element(e);
        let share = mesh.measure(e) / el.len() as f64;
        for &i in el {
            m[i] += share;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_line, generate_torus};

    #[test]
    fn line_stiffness_is_textbook() {
        let m = generate_line(10.0, 2.0).unwrap();
        let k = stiffness(&m, &[0.6; 5]).unwrap();
        assert!((k.get(1, 2) + 0.6 / 2.0).abs() < 1e-14);
        assert!((k.get(1, 1) - 2.0 * 0.6 / 2.0).abs() < 1e-14);
        assert!((k.get(0, 0) - 0.3).abs() < 1e-14);
        assert_eq!(k.get(0, 2), 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_psd() {
        let m = generate_torus(15.0, 5.0, 80.0, 1.5).unwrap();
        let sigma: Vec<f64> = (0..m.n_elements()).map(|e| 0.5 + (e % 7) as f64 * 0.1).collect();
        let k = stiffness(&m, &sigma).unwrap();
        let ones = vec![1.0; m.n_nodes()];
        assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        for s in 0..5 {
            let u: Vec<f64> = (0..m.n_nodes()).map(|i| ((i * 31 + s * 17) as f64).sin()).collect();
            assert!(crate::linalg::dot(&u, &k.mul_vec(&u)) >= 0.0);
        }
    }

    #[test]
    fn lumped_mass_sums_to_measure() {
        let m = generate_torus(15.0, 5.0, 80.0, 1.5).unwrap();
        let total: f64 = lumped_mass(&m).iter().sum();
        assert!((total - m.total_measure()).abs() < 1e-9 * total);
    }

    #[test]
    fn basis_gradients_sum_to_zero() {
        let m = generate_torus(15.0, 5.0, 80.0, 1.5).unwrap();
        for e in 0..m.n_elements() {
            let g = element_geometry(&m, e).unwrap();
            assert!((g.grads[0] + g.grads[1] + g.grads[2]).norm() < 1e-12);
        }
    }
}
