//! Laplace-Dirichlet coordinates, element gradients and fiber frames.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fem::{element_geometry, stiffness};
use crate::linalg::pcg;
use crate::mesh::{Mesh, Point};

const LAPLACE_TOL: f64 = 1e-10;

/// Solves the Laplace equation with prescribed values on named node sets.
/// Nodes outside all sets carry natural (zero-flux) boundary conditions.
pub fn solve_laplace(mesh: &Mesh, dirichlet: &[(&str, f64)]) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = dirichlet.iter().map(|d| d.1).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if dirichlet.len() < 2 || values.len() < 2 {
        return Err(Error::invalid("need at least two boundary sets with distinct values"));
    }

    let n = mesh.n_nodes();
    let mut fixed: HashMap<usize, (f64, &str)> = HashMap::new();
    for &(name, val) in dirichlet {
        let set = mesh
            .boundary_set(name)
            .ok_or_else(|| Error::invalid(format!("boundary set '{name}' not found")))?;
        if set.is_empty() {
            return Err(Error::invalid(format!("boundary set '{name}' is empty")));
        }
        for &i in set {
            if let Some(&(old, other)) = fixed.get(&i) {
                if old != val {
                    return Err(Error::ConstraintConflict(format!(
                        "node {i} is in '{other}' = {old} and '{name}' = {val}"
                    )));
                }
            }
            fixed.insert(i, (val, name));
        }
    }

    let k = stiffness(mesh, &vec![1.0; mesh.n_elements()])?;
    let mut phi = vec![0.0; n];
    for (&i, &(v, _)) in &fixed {
        phi[i] = v;
    }
    let keep: Vec<bool> = (0..n).map(|i| !fixed.contains_key(&i)).collect();
    let (kff, map) = k.principal_submatrix(&keep);
    if kff.nrows() == 0 {
        return Ok(phi);
    }
    let mut rhs = vec![0.0; kff.nrows()];
    for (i, m) in map.iter().enumerate() {
        let Some(ii) = *m else { continue };
        rhs[ii] = -k.row(i).filter(|&(j, _)| !keep[j]).map(|(j, v)| v * phi[j]).sum::<f64>();
    }
    // warm start from the mean of the data
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut x = vec![mean; kff.nrows()];
    pcg(&kff, &rhs, &mut x, LAPLACE_TOL, 20 * kff.nrows() + 1000)?;
    for i in 0..n {
        if let Some(ii) = map[i] {
            phi[i] = x[ii];
        }
    }
    Ok(phi)
}

/// Constant P1 gradient on each element (tangential for lines, in-plane for triangles).
pub fn element_gradient(mesh: &Mesh, field: &[f64]) -> Result<Vec<Point>> {
    if field.len() != mesh.n_nodes() {
        return Err(Error::invalid(format!(
            "field has {} values for {} nodes",
            field.len(),
            mesh.n_nodes()
        )));
    }
    (0..mesh.n_elements())
        .map(|e| {
            let g = element_geometry(mesh, e)?;
            Ok(mesh
                .element(e)
                .iter()
                .zip(&g.grads)
                .map(|(&i, gi)| gi * field[i])
                .sum())
        })
        .collect()
}

/// Per-element orthonormal frame: longitudinal and circumferential fiber
/// directions and the element normal.
#[derive(Debug, Clone)]
pub struct FiberFrame {
    pub long: Vec<Point>,
    pub circ: Vec<Point>,
    pub normal: Vec<Point>,
}

/// f_long = grad(phi_ep)/|.|, f_circ = n x grad(phi_fp)/|.|.
pub fn fiber_directions(mesh: &Mesh, phi_ep: &[f64], phi_fp: &[f64]) -> Result<FiberFrame> {
    let g_ep = element_gradient(mesh, phi_ep)?;
    let g_fp = element_gradient(mesh, phi_fp)?;
    let ne = mesh.n_elements();
    let mut frame = FiberFrame {
        long: Vec::with_capacity(ne),
        circ: Vec::with_capacity(ne),
        normal: Vec::with_capacity(ne),
    };
    for e in 0..ne {
        let n = mesh.element_normal(e)?;
        let unit = |v: Point| v.try_normalize(1e-300).ok_or(Error::DegenerateDirection { element: e });
        frame.long.push(unit(g_ep[e])?);
        frame.circ.push(unit(n.cross(&unit(g_fp[e])?))?);
        frame.normal.push(n);
    }
    Ok(frame)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::{generate_cylinder_strip, generate_line, generate_torus, Topology};
    use nalgebra::{Matrix2, Rotation3, Vector2};
    use std::collections::BTreeMap;

    /// Flat rectangle [0, a] x [0, b] with sets on x = 0 and x = a.
    pub(crate) fn rectangle(a: f64, b: f64, nx: usize, ny: usize) -> Mesh {
        let id = |i: usize, j: usize| i * (ny + 1) + j;
        let mut nodes = Vec::new();
        for i in 0..=nx {
            for j in 0..=ny {
                nodes.push(Point::new(a * i as f64 / nx as f64, b * j as f64 / ny as f64, 0.0));
            }
        }
        let mut tris = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let sets = BTreeMap::from([
            ("left".to_string(), (0..=ny).map(|j| id(0, j)).collect()),
            ("right".to_string(), (0..=ny).map(|j| id(nx, j)).collect()),
        ]);
        Mesh::new(nodes, Topology::Triangles(tris), sets).unwrap()
    }

    #[test]
    fn line_solution_is_linear() {
        let m = generate_line(250.0, 0.5).unwrap();
        let phi = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        for (p, v) in m.nodes().iter().zip(&phi) {
            assert!((v - p.x / 250.0).abs() < 1e-10);
        }
        let g = element_gradient(&m, &phi).unwrap();
        assert!(g.iter().all(|g| (g - Point::x() / 250.0).norm() < 1e-12));
    }

    #[test]
    fn strip_solution_is_a_ramp() {
        let m = rectangle(30.0, 10.0, 15, 6);
        let phi = solve_laplace(&m, &[("left", 0.0), ("right", 1.0)]).unwrap();
        for (p, v) in m.nodes().iter().zip(&phi) {
            assert!((v - p.x / 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn torus_respects_maximum_principle_and_is_monotone() {
        let m = generate_torus(40.0, 10.0, 90.0, 2.0).unwrap();
        let phi = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        assert!(phi.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        // along one meridian (fixed psi) phi increases with theta
        let n_psi = m.boundary_set("prox").unwrap().len();
        let meridian: Vec<f64> = (0..m.n_nodes() / n_psi).map(|i| phi[i * n_psi + 3]).collect();
        assert!(meridian.windows(2).all(|w| w[1] > w[0]));
        for &i in m.boundary_set("pyl").unwrap() {
            assert_eq!(phi[i], 1.0);
        }
    }

    #[test]
    fn conflicting_and_missing_sets() {
        let mut m = generate_line(10.0, 1.0).unwrap();
        m.set_boundary_set("both", vec![0, 10]).unwrap();
        assert!(matches!(
            solve_laplace(&m, &[("prox", 0.0), ("both", 1.0)]),
            Err(Error::ConstraintConflict(_))
        ));
        assert!(solve_laplace(&m, &[("prox", 0.0), ("nope", 1.0)]).is_err());
        assert!(solve_laplace(&m, &[("prox", 0.0), ("pyl", 0.0)]).is_err());
        assert!(solve_laplace(&m, &[("prox", 0.0)]).is_err());
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let m = generate_torus(20.0, 5.0, 60.0, 2.0).unwrap();
        let g = element_gradient(&m, &vec![3.7; m.n_nodes()]).unwrap();
        assert!(g.iter().all(|g| g.norm() < 1e-12));
    }

    /// Barycentric coordinates by least squares on the triangle's edge basis.
    fn barycentric(x: &[Point; 3], p: &Point) -> [f64; 3] {
        let (e1, e2, d) = (x[1] - x[0], x[2] - x[0], p - x[0]);
        let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
        let s = g.try_inverse().unwrap() * Vector2::new(e1.dot(&d), e2.dot(&d));
        [1.0 - s.x - s.y, s.x, s.y]
    }

    #[test]
    fn gradient_matches_barycentric_finite_difference() {
        let m = generate_torus(20.0, 6.0, 70.0, 1.3).unwrap();
        let field: Vec<f64> = (0..m.n_nodes()).map(|i| ((i * 7919) % 1000) as f64 / 997.0).collect();
        let grads = element_gradient(&m, &field).unwrap();
        for e in (0..m.n_elements()).step_by(13) {
            let el = m.element(e);
            let x = [*m.node(el[0]), *m.node(el[1]), *m.node(el[2])];
            let interp = |p: &Point| {
                let l = barycentric(&x, p);
                (0..3).map(|k| l[k] * field[el[k]]).sum::<f64>()
            };
            let c = m.centroid(e);
            let n = m.element_normal(e).unwrap();
            assert!(grads[e].dot(&n).abs() < 1e-10 * grads[e].norm().max(1.0));
            for d in [(x[1] - x[0]).normalize(), (x[2] - x[0]).normalize()] {
                let eps = 1e-4;
                let fd = (interp(&(c + d * eps)) - interp(&(c - d * eps))) / (2.0 * eps);
                assert!((fd - grads[e].dot(&d)).abs() < 1e-9, "element {e}");
            }
        }
    }

    #[test]
    fn rigid_motion_and_scaling() {
        let m = generate_torus(25.0, 8.0, 90.0, 2.5).unwrap();
        let phi = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Point::new(5.0, -7.0, 11.0);
        let moved = |s: f64| {
            let nodes = m.nodes().iter().map(|p| rot * (p * s) + shift).collect();
            let tris = match m.topology() {
                Topology::Triangles(t) => t.clone(),
                _ => unreachable!(),
            };
            Mesh::new(nodes, Topology::Triangles(tris), m.boundary_sets().clone()).unwrap()
        };
        let phi_r = solve_laplace(&moved(1.0), &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        assert!(phi.iter().zip(&phi_r).all(|(a, b)| (a - b).abs() < 1e-10));

        let g = element_gradient(&m, &phi).unwrap();
        let g2 = element_gradient(&moved(2.5), &phi).unwrap();
        for (a, b) in g.iter().zip(&g2) {
            assert!((a.norm() / 2.5 - b.norm()).abs() < 1e-12 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn cylinder_strip_fibers_are_axial_and_circumferential() {
        let m = generate_cylinder_strip(250.0, 50.93, 5.0).unwrap();
        let phi = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        let f = fiber_directions(&m, &phi, &phi).unwrap();
        for e in 0..m.n_elements() {
            assert!((f.long[e] - Point::x()).norm() < 1e-12);
            assert!(f.circ[e].x.abs() < 1e-12 && (f.circ[e].norm() - 1.0).abs() < 1e-12);
            assert!(f.circ[e].dot(&f.normal[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_fibers_orthonormal() {
        let m = generate_torus(159.155, 50.93, 90.0, 6.0).unwrap();
        let ep = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        let f = fiber_directions(&m, &ep, &ep).unwrap();
        for e in 0..m.n_elements() {
            assert!((f.long[e].norm() - 1.0).abs() < 1e-12);
            assert!((f.circ[e].norm() - 1.0).abs() < 1e-12);
            assert!(f.circ[e].dot(&f.normal[e]).abs() < 1e-12);
            assert!(f.long[e].dot(&f.circ[e]).abs() < 0.05);
        }
    }

    #[test]
    fn zero_gradient_names_element() {
        let m = generate_line(10.0, 1.0).unwrap();
        let phi = solve_laplace(&m, &[("prox", 0.0), ("pyl", 1.0)]).unwrap();
        let mut flat = phi.clone();
        flat[4] = flat[3];
        let err = fiber_directions(&m, &flat, &phi).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { element: 3 }));
    }
}
