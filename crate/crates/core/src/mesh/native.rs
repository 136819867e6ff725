//! Whitespace-separated native mesh format.
//!
//! ```text
//! gastroem-mesh 1
//! kind line|triangle
//! nodes <N>
//! <x> <y> <z>            (N lines)
//! elements <M>
//! <i> <j> [<k>]          (M lines, zero-based)
//! sets <K>
//! <name> <count> <i>...  (K lines)
//! radius <r>             (optional)
//! ```
//!
//! Lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, Point, Topology};
use crate::error::{Error, Result};

const MAGIC: &str = "gastroem-mesh";

pub fn write_native(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    let kind = match mesh.topology() {
        Topology::Lines(_) => "line",
        Topology::Triangles(_) => "triangle",
    };
    let _ = writeln!(s, "{MAGIC} 1\nkind {kind}\nnodes {}", mesh.n_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "elements {}", mesh.n_elements());
    for el in mesh.elements() {
        let row: Vec<String> = el.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "sets {}", mesh.boundary_sets().len());
    for (name, set) in mesh.boundary_sets() {
        let _ = write!(s, "{name} {}", set.len());
        for i in set {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    if let Some(r) = mesh.cylinder_radius() {
        let _ = writeln!(s, "radius {r:?}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

struct Tokens<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self { lines: it.peekable() }
    }

    fn line(&mut self) -> Result<(usize, Vec<&'a str>)> {
        self.lines
            .next()
            .map(|(n, l)| (n, l.split_whitespace().collect()))
            .ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let (n, f) = self.line()?;
        if f.len() != 2 || f[0] != key {
            return Err(Error::Parse(format!("line {n}: expected '{key} <count>'")));
        }
        parse(f[1], n)
    }
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("line {line}: cannot parse '{s}'")))
}

pub fn read_native(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut t = Tokens::new(&text);

    let (n, f) = t.line()?;
    if f.first() != Some(&MAGIC) {
        return Err(Error::Parse(format!("line {n}: missing '{MAGIC}' header")));
    }
    let (n, f) = t.line()?;
    let arity = match f.as_slice() {
        ["kind", "line"] => 2,
        ["kind", "triangle"] => 3,
        _ => return Err(Error::Parse(format!("line {n}: expected 'kind line|triangle'"))),
    };

    let nn = t.header("nodes")?;
    let mut nodes = Vec::with_capacity(nn);
    for _ in 0..nn {
        let (n, f) = t.line()?;
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {n}: expected 3 coordinates")));
        }
        nodes.push(Point::new(parse(f[0], n)?, parse(f[1], n)?, parse(f[2], n)?));
    }

    let ne = t.header("elements")?;
    let mut conn: Vec<Vec<usize>> = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (n, f) = t.line()?;
        if f.len() != arity {
            return Err(Error::Parse(format!("line {n}: expected {arity} node indices")));
        }
        conn.push(f.iter().map(|s| parse(s, n)).collect::<Result<_>>()?);
    }
    let topology = if arity == 2 {
        Topology::Lines(conn.iter().map(|c| [c[0], c[1]]).collect())
    } else {
        Topology::Triangles(conn.iter().map(|c| [c[0], c[1], c[2]]).collect())
    };

    let ns = t.header("sets")?;
    let mut sets = BTreeMap::new();
    for _ in 0..ns {
        let (n, f) = t.line()?;
        if f.len() < 2 {
            return Err(Error::Parse(format!("line {n}: expected '<name> <count> ...'")));
        }
        let count: usize = parse(f[1], n)?;
        if f.len() != count + 2 {
            return Err(Error::Parse(format!("line {n}: set '{}' declares {count} entries", f[0])));
        }
        let ids = f[2..].iter().map(|s| parse(s, n)).collect::<Result<Vec<usize>>>()?;
        sets.insert(f[0].to_string(), ids);
    }

    let mut mesh = Mesh::new(nodes, topology, sets)?;
    if let Some((n, l)) = t.lines.next() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["radius", r] => mesh = mesh.with_cylinder_radius(parse(r, n)?),
            _ => return Err(Error::Parse(format!("line {n}: unexpected trailing content"))),
        }
    }
    Ok(mesh)
}
