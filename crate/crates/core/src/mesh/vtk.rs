//! Legacy ASCII VTK unstructured-grid output and a reader for files written here.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, Point, Topology};
use crate::error::{Error, Result};

/// A named nodal or element array.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar(Vec<f64>),
    Vector(Vec<Point>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Scalar(v) => v.len(),
            FieldData::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered collection of named arrays.
pub type Fields = Vec<(String, FieldData)>;

fn num(x: f64) -> String {
    // nine significant digits
    format!("{x:.8e}")
}

fn check(kind: &str, fields: &Fields, n: usize) -> Result<()> {
    for (name, f) in fields {
        if f.len() != n {
            return Err(Error::invalid(format!(
                "{kind} field '{name}' has {} entries, expected {n}",
                f.len()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("field name '{name}' must be a single token")));
        }
    }
    Ok(())
}

fn write_fields(s: &mut String, header: &str, n: usize, fields: &Fields) {
    if fields.is_empty() {
        return;
    }
    let _ = writeln!(s, "{header} {n}");
    for (name, f) in fields {
        match f {
            FieldData::Scalar(v) => {
                let _ = writeln!(s, "SCALARS {name} float 1\nLOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{}", num(*x));
                }
            }
            FieldData::Vector(v) => {
                let _ = writeln!(s, "VECTORS {name} float");
                for p in v {
                    let _ = writeln!(s, "{} {} {}", num(p.x), num(p.y), num(p.z));
                }
            }
        }
    }
}

/// Writes `mesh` with nodal and element arrays. Array lengths are checked
/// before anything touches the filesystem.
pub fn write_vtk(mesh: &Mesh, point_fields: &Fields, cell_fields: &Fields, path: impl AsRef<Path>) -> Result<()> {
    check("point", point_fields, mesh.n_nodes())?;
    check("cell", cell_fields, mesh.n_elements())?;

    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ngastroem\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} float", mesh.n_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {} {}", num(p.x), num(p.y), num(p.z));
    }
    let (arity, cell_type) = match mesh.topology() {
        Topology::Lines(_) => (2, 3),
        Topology::Triangles(_) => (3, 5),
    };
    let ne = mesh.n_elements();
    let _ = writeln!(s, "CELLS {ne} {}", ne * (arity + 1));
    for el in mesh.elements() {
        let _ = write!(s, "{arity}");
        for i in el {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "{cell_type}");
    }
    write_fields(&mut s, "POINT_DATA", mesh.n_nodes(), point_fields);
    write_fields(&mut s, "CELL_DATA", ne, cell_fields);
    std::fs::write(path, s)?;
    Ok(())
}

/// Contents of a VTK file produced by [`write_vtk`].
#[derive(Debug, Clone)]
pub struct VtkData {
    pub mesh: Mesh,
    pub point_fields: BTreeMap<String, FieldData>,
    pub cell_fields: BTreeMap<String, FieldData>,
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData> {
    let text = std::fs::read_to_string(path)?;
    let mut tok = text.split_whitespace().peekable();
    let perr = |m: &str| Error::Parse(format!("vtk: {m}"));

    macro_rules! next {
        () => {
            tok.next().ok_or_else(|| perr("unexpected end of file"))?
        };
    }
    macro_rules! num {
        ($t:ty) => {{
            let s = next!();
            s.parse::<$t>().map_err(|_| perr(&format!("cannot parse '{s}'")))?
        }};
    }

    // skip to POINTS
    for t in tok.by_ref() {
        if t == "POINTS" {
            break;
        }
    }
    let np = num!(usize);
    let _ = next!();
    let mut nodes = Vec::with_capacity(np);
    for _ in 0..np {
        nodes.push(Point::new(num!(f64), num!(f64), num!(f64)));
    }
    if next!() != "CELLS" {
        return Err(perr("expected CELLS"));
    }
    let ne = num!(usize);
    let _ = next!();
    let mut conn = Vec::with_capacity(ne);
    for _ in 0..ne {
        let k = num!(usize);
        let mut c = Vec::with_capacity(k);
        for _ in 0..k {
            c.push(num!(usize));
        }
        conn.push(c);
    }
    if next!() != "CELL_TYPES" {
        return Err(perr("expected CELL_TYPES"));
    }
    let _ = num!(usize);
    let mut types = Vec::with_capacity(ne);
    for _ in 0..ne {
        types.push(num!(u8));
    }
    let topology = if types.iter().all(|&t| t == 3) && conn.iter().all(|c| c.len() == 2) {
        Topology::Lines(conn.iter().map(|c| [c[0], c[1]]).collect())
    } else if types.iter().all(|&t| t == 5) && conn.iter().all(|c| c.len() == 3) {
        Topology::Triangles(conn.iter().map(|c| [c[0], c[1], c[2]]).collect())
    } else {
        return Err(perr("only pure line or triangle grids are supported"));
    };

    let mut point_fields = BTreeMap::new();
    let mut cell_fields = BTreeMap::new();
    let mut target = None;
    while let Some(t) = tok.next() {
        match t {
            "POINT_DATA" => {
                let _ = num!(usize);
                target = Some((true, np));
            }
            "CELL_DATA" => {
                let _ = num!(usize);
                target = Some((false, ne));
            }
            "SCALARS" | "VECTORS" => {
                let (is_point, n) = target.ok_or_else(|| perr("data before POINT_DATA/CELL_DATA"))?;
                let name = next!().to_string();
                let _ = next!();
                let data = if t == "SCALARS" {
                    if tok.peek().is_some_and(|s| s.parse::<usize>().is_ok()) {
                        tok.next();
                    }
                    if tok.peek() == Some(&"LOOKUP_TABLE") {
                        tok.next();
                        tok.next();
                    }
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        v.push(num!(f64));
                    }
                    FieldData::Scalar(v)
                } else {
                    let mut v = Vec::with_capacity(n);
                    for _ in 0..n {
                        v.push(Point::new(num!(f64), num!(f64), num!(f64)));
                    }
                    FieldData::Vector(v)
                };
                if is_point {
                    point_fields.insert(name, data);
                } else {
                    cell_fields.insert(name, data);
                }
            }
            other => return Err(perr(&format!("unexpected token '{other}'"))),
        }
    }
    Ok(VtkData { mesh: Mesh::new(nodes, topology, BTreeMap::new())?, point_fields, cell_fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_line, generate_torus};

    fn round9(x: f64) -> f64 {
        format!("{x:.8e}").parse().unwrap()
    }

    #[test]
    fn round_trip_scalar_and_vector() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_torus(12.0, 4.0, 120.0, 1.7).unwrap();
        let phi: Vec<f64> = mesh.nodes().iter().map(|p| p.x.sin() / 3.0).collect();
        let cells: Vec<Point> = (0..mesh.n_elements()).map(|e| mesh.centroid(e)).collect();
        let pf = vec![("phi".to_string(), FieldData::Scalar(phi.clone()))];
        let cf = vec![("centroid".to_string(), FieldData::Vector(cells.clone()))];
        let p = dir.path().join("t.vtk");
        write_vtk(&mesh, &pf, &cf, &p).unwrap();

        let back = read_vtk(&p).unwrap();
        assert_eq!(back.mesh.topology(), mesh.topology());
        for (a, b) in back.mesh.nodes().iter().zip(mesh.nodes()) {
            assert_eq!(a, &b.map(round9));
        }
        let FieldData::Scalar(v) = &back.point_fields["phi"] else { panic!() };
        assert!(v.iter().zip(&phi).all(|(a, b)| *a == round9(*b)));
        let FieldData::Vector(v) = &back.cell_fields["centroid"] else { panic!() };
        assert!(v.iter().zip(&cells).all(|(a, b)| *a == b.map(round9)));
    }

    #[test]
    fn geometry_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_line(10.0, 3.0).unwrap();
        let p = dir.path().join("g.vtk");
        write_vtk(&mesh, &Fields::new(), &Fields::new(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains("POINT_DATA"));
        let back = read_vtk(&p).unwrap();
        assert_eq!(back.mesh.n_elements(), 4);
        assert!(back.point_fields.is_empty());
    }

    #[test]
    fn wrong_length_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_line(10.0, 3.0).unwrap();
        let p = dir.path().join("bad.vtk");
        let pf = vec![("v".to_string(), FieldData::Scalar(vec![0.0; 3]))];
        assert!(matches!(write_vtk(&mesh, &pf, &Fields::new(), &p), Err(Error::InvalidArgument(_))));
        assert!(!p.exists());
    }
}
