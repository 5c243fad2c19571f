//! Plain-text mesh format.
//!
//! ```text
//! vertices N
//! edges M
//! elements K
//! <N lines: id x y>
//! <M lines: id v0 v1>
//! <K lines: id v0 v1 ... vm>   (counterclockwise)
//! ```
//!
//! Edges are listed explicitly so that slit topologies (duplicated edges at
//! identical coordinates) survive a round trip.

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scalar::Real;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_mesh_text<T: Real>(mesh: &Mesh<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "vertices {}", mesh.n_vertices()).unwrap();
    writeln!(out, "edges {}", mesh.n_edges()).unwrap();
    writeln!(out, "elements {}", mesh.n_elements()).unwrap();
    for v in &mesh.vertices {
        writeln!(
            out,
            "{} {:.17e} {:.17e}",
            v.id,
            v.position.x.to_f64_lossy(),
            v.position.y.to_f64_lossy()
        )
        .unwrap();
    }
    for e in &mesh.edges {
        writeln!(out, "{} {} {}", e.id, e.vertex_ids[0], e.vertex_ids[1]).unwrap();
    }
    for el in &mesh.elements {
        write!(out, "{}", el.id).unwrap();
        for v in &el.vertex_ids {
            write!(out, " {v}").unwrap();
        }
        writeln!(out).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_mesh_text<T: Real>(path: &Path) -> Result<Mesh<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh_text(&text)
}

pub(crate) fn parse_mesh_text<T: Real>(text: &str) -> Result<Mesh<T>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut header = |name: &str| -> Result<usize> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Mesh(format!("missing '{name}' header")))?;
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some(word), Some(count)) if word == name => count
                .parse()
                .map_err(|_| Error::Mesh(format!("bad count in '{line}'"))),
            _ => Err(Error::Mesh(format!("expected '{name} N', got '{line}'"))),
        }
    };
    let n_vertices = header("vertices")?;
    let n_edges = header("edges")?;
    let n_elements = header("elements")?;

    let mut positions = vec![Point2::new(T::zero(), T::zero()); n_vertices];
    for _ in 0..n_vertices {
        let line = lines
            .next()
            .ok_or_else(|| Error::Mesh("truncated vertex section".into()))?;
        let mut it = line.split_whitespace();
        let id: usize = parse_field(it.next(), line)?;
        let x: f64 = parse_field(it.next(), line)?;
        let y: f64 = parse_field(it.next(), line)?;
        if id >= n_vertices {
            return Err(Error::Mesh(format!("vertex id {id} out of range")));
        }
        positions[id] = Point2::new(T::of(x), T::of(y));
    }

    let mut file_edges: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n_edges];
    for _ in 0..n_edges {
        let line = lines
            .next()
            .ok_or_else(|| Error::Mesh("truncated edge section".into()))?;
        let mut it = line.split_whitespace();
        let id: usize = parse_field(it.next(), line)?;
        let a: usize = parse_field(it.next(), line)?;
        let b: usize = parse_field(it.next(), line)?;
        if id >= n_edges {
            return Err(Error::Mesh(format!("edge id {id} out of range")));
        }
        file_edges[id] = (a, b);
    }

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); n_elements];
    for _ in 0..n_elements {
        let line = lines
            .next()
            .ok_or_else(|| Error::Mesh("truncated element section".into()))?;
        let mut it = line.split_whitespace();
        let id: usize = parse_field(it.next(), line)?;
        if id >= n_elements {
            return Err(Error::Mesh(format!("element id {id} out of range")));
        }
        let cell: Vec<usize> = it
            .map(|tok| {
                tok.parse()
                    .map_err(|_| Error::Mesh(format!("bad vertex index in '{line}'")))
            })
            .collect::<Result<_>>()?;
        cells[id] = cell;
    }

    let mut mesh = Mesh::from_cells(positions, cells)?;

    // reconcile the derived edges with the file's edge list so that edge ids
    // in the loaded mesh match the file
    if mesh.n_edges() != n_edges {
        return Err(Error::Mesh(format!(
            "file declares {} edges but elements imply {}",
            n_edges,
            mesh.n_edges()
        )));
    }
    let mut derived: HashMap<(usize, usize), usize> = HashMap::new();
    for e in &mesh.edges {
        derived.insert(
            (
                e.vertex_ids[0].min(e.vertex_ids[1]),
                e.vertex_ids[0].max(e.vertex_ids[1]),
            ),
            e.id,
        );
    }
    let mut perm = vec![usize::MAX; n_edges]; // derived id -> file id
    for (file_id, &(a, b)) in file_edges.iter().enumerate() {
        let key = (a.min(b), a.max(b));
        let derived_id = *derived.get(&key).ok_or_else(|| {
            Error::Mesh(format!("edge {file_id} ({a},{b}) not used by any element"))
        })?;
        if perm[derived_id] != usize::MAX {
            return Err(Error::Mesh(format!("edge ({a},{b}) listed twice")));
        }
        perm[derived_id] = file_id;
        // keep the file's endpoint order as the parametrisation
        mesh.edges[derived_id].vertex_ids = [a, b];
        let (pa, pb) = (
            mesh.vertices[a].position,
            mesh.vertices[b].position,
        );
        mesh.edges[derived_id].midpoint = pa.midpoint(pb);
    }
    let mut new_edges = mesh.edges.clone();
    for e in &mesh.edges {
        let mut moved = e.clone();
        moved.id = perm[e.id];
        new_edges[perm[e.id]] = moved;
    }
    mesh.edges = new_edges;
    for el in &mut mesh.elements {
        for eid in &mut el.edge_ids {
            *eid = perm[*eid];
        }
    }
    Ok(mesh)
}

fn parse_field<F: std::str::FromStr>(tok: Option<&str>, line: &str) -> Result<F> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Mesh(format!("malformed line '{line}'")))
}
