//! Line and triangle meshes with named boundary node sets.

mod generate;
mod native;
pub mod vtk;

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use generate::{generate_cylinder_strip, generate_line, generate_torus};
pub use native::{read_native, write_native};

pub type Point = Vector3<f64>;

/// Element connectivity. A mesh is either all 2-node lines or all 3-node triangles.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Lines(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind {
    Line,
    Surface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    topology: Topology,
    boundary_sets: BTreeMap<String, Vec<usize>>,
    cylinder_radius: Option<f64>,
}

impl Mesh {
    /// Builds and validates a mesh.
    pub fn new(
        nodes: Vec<Point>,
        topology: Topology,
        boundary_sets: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let mesh = Self { nodes, topology, boundary_sets, cylinder_radius: None };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_cylinder_radius(mut self, radius: f64) -> Self {
        self.cylinder_radius = Some(radius);
        self
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        match &self.topology {
            Topology::Lines(e) => e.len(),
            Topology::Triangles(e) => e.len(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn dim_kind(&self) -> DimKind {
        match self.topology {
            Topology::Lines(_) => DimKind::Line,
            Topology::Triangles(_) => DimKind::Surface,
        }
    }

    pub fn element(&self, e: usize) -> &[usize] {
        match &self.topology {
            Topology::Lines(v) => &v[e],
            Topology::Triangles(v) => &v[e],
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.n_elements()).map(move |e| self.element(e))
    }

    pub fn boundary_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.boundary_sets
    }

    pub fn boundary_set(&self, name: &str) -> Option<&[usize]> {
        self.boundary_sets.get(name).map(Vec::as_slice)
    }

    /// Adds or replaces a named node set.
    pub fn set_boundary_set(&mut self, name: impl Into<String>, nodes: Vec<usize>) -> Result<()> {
        let name = name.into();
        check_set(&name, &nodes, self.nodes.len())?;
        self.boundary_sets.insert(name, nodes);
        Ok(())
    }

    pub fn cylinder_radius(&self) -> Option<f64> {
        self.cylinder_radius
    }

    /// Length of a line element or area of a triangle.
    pub fn measure(&self, e: usize) -> f64 {
        let n = self.element(e);
        match n.len() {
            2 => (self.nodes[n[1]] - self.nodes[n[0]]).norm(),
            _ => {
                let a = self.nodes[n[1]] - self.nodes[n[0]];
                let b = self.nodes[n[2]] - self.nodes[n[0]];
                0.5 * a.cross(&b).norm()
            }
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.measure(e)).sum()
    }

    pub fn centroid(&self, e: usize) -> Point {
        let n = self.element(e);
        n.iter().map(|&i| self.nodes[i]).sum::<Point>() / n.len() as f64
    }

    /// Unit normal of a triangle (right-hand rule on its node order). For a
    /// line element, the unit vector obtained by orthogonalising e_y (or e_z
    /// when e_y is nearly parallel) against the tangent.
    pub fn element_normal(&self, e: usize) -> Result<Point> {
        let n = self.element(e);
        let a = self.nodes[n[1]] - self.nodes[n[0]];
        if n.len() == 2 {
            let t = a
                .try_normalize(0.0)
                .ok_or_else(|| degenerate(e, "zero-length line"))?;
            let pick = if t.y.abs() < 0.9 { Point::y() } else { Point::z() };
            return (pick - t * t.dot(&pick))
                .try_normalize(1e-300)
                .ok_or_else(|| degenerate(e, "normal undefined"));
        }
        let b = self.nodes[n[2]] - self.nodes[n[0]];
        a.cross(&b)
            .try_normalize(0.0)
            .ok_or_else(|| degenerate(e, "zero-area triangle"))
    }

    /// Checks index bounds, strictly positive element measures and set uniqueness.
    pub fn validate(&self) -> Result<()> {
        let nn = self.nodes.len();
        if self.n_elements() == 0 {
            return Err(Error::invalid("mesh has no elements"));
        }
        for e in 0..self.n_elements() {
            let el = self.element(e);
            if let Some(&bad) = el.iter().find(|&&i| i >= nn) {
                return Err(Error::invalid(format!(
                    "element {e} references node {bad} but the mesh has {nn} nodes"
                )));
            }
            let m = self.measure(e);
            if !(m > 0.0) || !m.is_finite() {
                return Err(degenerate(e, "non-positive measure"));
            }
        }
        for (name, set) in &self.boundary_sets {
            check_set(name, set, nn)?;
        }
        Ok(())
    }

    /// True when every triangle edge is shared by at most two triangles and
    /// neighbouring triangles traverse their shared edge in opposite directions.
    pub fn is_edge_manifold(&self) -> bool {
        let Topology::Triangles(tris) = &self.topology else {
            return true;
        };
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in tris {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)).copied().unwrap_or(0) <= 1)
    }

    /// Per-node adjacency: sorted unique neighbours sharing an element.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for el in self.elements() {
            for &a in el {
                for &b in el {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for v in &mut adj {
            v.sort_unstable();
            v.dedup();
        }
        adj
    }
}

fn degenerate(element: usize, reason: &str) -> Error {
    Error::DegenerateGeometry { element, reason: reason.to_string() }
}

fn check_set(name: &str, set: &[usize], nn: usize) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(set.len());
    for &i in set {
        if i >= nn {
            return Err(Error::invalid(format!("set '{name}' references missing node {i}")));
        }
        if !seen.insert(i) {
            return Err(Error::invalid(format!("set '{name}' lists node {i} twice")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_triangle() -> Mesh {
        Mesh::new(
            vec![Point::zeros(), Point::new(2.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)],
            Topology::Triangles(vec![[0, 1, 2]]),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn triangle_measure_and_normal() {
        let m = single_triangle();
        assert!((m.measure(0) - 1.0).abs() < 1e-15);
        assert_eq!(m.element_normal(0).unwrap(), Point::z());
        assert_eq!(m.dim_kind(), DimKind::Surface);
    }

    #[test]
    fn line_normal_is_orthogonal_unit() {
        let m = Mesh::new(
            vec![Point::zeros(), Point::new(1.0, 2.0, 0.5)],
            Topology::Lines(vec![[0, 1]]),
            BTreeMap::new(),
        )
        .unwrap();
        let n = m.element_normal(0).unwrap();
        let t = (m.node(1) - m.node(0)).normalize();
        assert!((n.norm() - 1.0).abs() < 1e-14);
        assert!(n.dot(&t).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_index_and_zero_area() {
        let pts = vec![Point::zeros(), Point::x(), Point::new(2.0, 0.0, 0.0)];
        assert!(Mesh::new(pts.clone(), Topology::Triangles(vec![[0, 1, 3]]), BTreeMap::new()).is_err());
        let err = Mesh::new(pts, Topology::Triangles(vec![[0, 1, 2]]), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { element: 0, .. }));
    }

    #[test]
    fn rejects_duplicate_set_entries() {
        let mut m = single_triangle();
        assert!(m.set_boundary_set("x", vec![0, 0]).is_err());
        assert!(m.set_boundary_set("x", vec![0, 7]).is_err());
        m.set_boundary_set("x", vec![0, 2]).unwrap();
        assert_eq!(m.boundary_set("x"), Some(&[0, 2][..]));
    }

    #[test]
    fn flipped_neighbour_breaks_manifoldness() {
        let pts = vec![Point::zeros(), Point::x(), Point::y(), Point::new(1.0, 1.0, 0.0)];
        let good = Mesh::new(pts.clone(), Topology::Triangles(vec![[0, 1, 2], [1, 3, 2]]), BTreeMap::new()).unwrap();
        assert!(good.is_edge_manifold());
        let bad = Mesh::new(pts, Topology::Triangles(vec![[0, 1, 2], [1, 2, 3]]), BTreeMap::new()).unwrap();
        assert!(!bad.is_edge_manifold());
    }
}
