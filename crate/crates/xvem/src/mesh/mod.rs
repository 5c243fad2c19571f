//! Polygonal mesh data model with explicit vertex/edge/element incidence.
//!
//! Slit (fractured) domains are represented by duplicating the vertices and
//! edges along the crack: two topological edges share identical coordinates,
//! the crack tip vertex is shared. The mesh is immutable after construction.

mod generators;
mod io;
mod validate;

pub use generators::{
    build_cartesian_fractured_mesh, build_cartesian_lshape_mesh, build_cartesian_lshape_mesh_tr,
    build_hexagonal_lshape_mesh,
};
pub use io::{read_mesh_text, write_mesh_text};
pub use validate::{validate_mesh, QualityReport};

use crate::error::{Error, Result};
use crate::geometry::{self, Point2};
use crate::scalar::Real;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct Vertex<T> {
    pub id: usize,
    pub position: Point2<T>,
    pub on_boundary: bool,
}

#[derive(Debug, Clone)]
pub struct Edge<T> {
    pub id: usize,
    /// Endpoint vertex ids; the edge parametrisation runs from the first to
    /// the second and is shared by both adjacent elements.
    pub vertex_ids: [usize; 2],
    pub adjacent_element_ids: Vec<usize>,
    pub on_boundary: bool,
    pub length: T,
    pub midpoint: Point2<T>,
}

#[derive(Debug, Clone)]
pub struct Element<T> {
    pub id: usize,
    /// Counterclockwise vertex cycle.
    pub vertex_ids: Vec<usize>,
    /// `edge_ids[i]` joins `vertex_ids[i]` to `vertex_ids[i+1]` (cyclically).
    pub edge_ids: Vec<usize>,
    pub area: T,
    pub centroid: Point2<T>,
    pub diameter: T,
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub vertices: Vec<Vertex<T>>,
    pub edges: Vec<Edge<T>>,
    pub elements: Vec<Element<T>>,
    /// max over elements of the element diameter
    pub mesh_size: T,
    /// one adjacent element per vertex, used to resolve branch cuts when
    /// evaluating enrichment fields at duplicated slit vertices
    vertex_element: Vec<usize>,
}

/// Shoelace area, area-weighted centroid and max pairwise vertex distance of
/// a simple polygon.
pub fn element_geometry<T: Real>(vertices: &[Point2<T>]) -> Result<(T, Point2<T>, T)> {
    let area = geometry::signed_area(vertices);
    if area.abs() <= T::default_epsilon() * geometry::diameter(vertices).powi(2) {
        return Err(Error::Mesh("degenerate (zero-area) polygon".into()));
    }
    Ok((
        area.abs(),
        geometry::centroid(vertices),
        geometry::diameter(vertices),
    ))
}

impl<T: Real> Mesh<T> {
    /// Build a mesh from vertex positions and counterclockwise element vertex
    /// cycles. Edges, adjacency, boundary flags and geometric quantities are
    /// derived. Cycles given clockwise are reversed.
    pub fn from_cells(positions: Vec<Point2<T>>, cells: Vec<Vec<usize>>) -> Result<Self> {
        for (i, p) in positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Mesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let mut elements = Vec::with_capacity(cells.len());
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge<T>> = Vec::new();

        for (eid, mut cell) in cells.into_iter().enumerate() {
            if cell.len() < 3 {
                return Err(Error::Mesh(format!("element {eid} has fewer than 3 vertices")));
            }
            for &v in &cell {
                if v >= positions.len() {
                    return Err(Error::Mesh(format!("element {eid} references vertex {v} out of range")));
                }
            }
            let mut pts: Vec<Point2<T>> = cell.iter().map(|&v| positions[v]).collect();
            if geometry::signed_area(&pts) < T::zero() {
                cell.reverse();
                pts.reverse();
            }
            let (area, centroid, diameter) = element_geometry(&pts)
                .map_err(|e| Error::Mesh(format!("element {eid}: {e}")))?;
            let n = cell.len();
            let mut edge_ids = Vec::with_capacity(n);
            for i in 0..n {
                let a = cell[i];
                let b = cell[(i + 1) % n];
                if a == b {
                    return Err(Error::Mesh(format!("element {eid} repeats vertex {a}")));
                }
                let key = (a.min(b), a.max(b));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    let id = edges.len();
                    edges.push(Edge {
                        id,
                        vertex_ids: [a, b],
                        adjacent_element_ids: Vec::new(),
                        on_boundary: false,
                        length: positions[a].dist(positions[b]),
                        midpoint: positions[a].midpoint(positions[b]),
                    });
                    id
                });
                edges[id].adjacent_element_ids.push(eid);
                if edges[id].adjacent_element_ids.len() > 2 {
                    return Err(Error::Mesh(format!(
                        "edge {id} ({a},{b}) is shared by more than two elements"
                    )));
                }
                edge_ids.push(id);
            }
            elements.push(Element {
                id: eid,
                vertex_ids: cell,
                edge_ids,
                area,
                centroid,
                diameter,
            });
        }

        let mut vertex_on_boundary = vec![false; positions.len()];
        for e in &mut edges {
            e.on_boundary = e.adjacent_element_ids.len() == 1;
            if e.on_boundary {
                vertex_on_boundary[e.vertex_ids[0]] = true;
                vertex_on_boundary[e.vertex_ids[1]] = true;
            }
        }

        let mut vertex_element = vec![usize::MAX; positions.len()];
        for el in &elements {
            for &v in &el.vertex_ids {
                if vertex_element[v] == usize::MAX {
                    vertex_element[v] = el.id;
                }
            }
        }
        if let Some(v) = vertex_element.iter().position(|&e| e == usize::MAX) {
            return Err(Error::Mesh(format!("vertex {v} is not referenced by any element")));
        }

        let mesh_size = elements
            .iter()
            .map(|e| e.diameter)
            .fold(T::zero(), |a, b| a.max(b));

        let vertices = positions
            .into_iter()
            .enumerate()
            .map(|(id, position)| Vertex {
                id,
                position,
                on_boundary: vertex_on_boundary[id],
            })
            .collect();

        Ok(Mesh {
            vertices,
            edges,
            elements,
            mesh_size,
            vertex_element,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_vertex_positions(&self, element: usize) -> Vec<Point2<T>> {
        self.elements[element]
            .vertex_ids
            .iter()
            .map(|&v| self.vertices[v].position)
            .collect()
    }

    pub fn edge_endpoints(&self, edge: usize) -> (Point2<T>, Point2<T>) {
        let e = &self.edges[edge];
        (
            self.vertices[e.vertex_ids[0]].position,
            self.vertices[e.vertex_ids[1]].position,
        )
    }

    /// Outward unit normal of the `local_edge`-th edge of `element`.
    pub fn outward_normal(&self, element: usize, local_edge: usize) -> Point2<T> {
        let el = &self.elements[element];
        let n = el.vertex_ids.len();
        let a = self.vertices[el.vertex_ids[local_edge]].position;
        let b = self.vertices[el.vertex_ids[(local_edge + 1) % n]].position;
        let d = b.sub(a);
        let len = d.norm();
        Point2::new(d.y / len, -d.x / len)
    }

    /// A point interior to one adjacent element of the vertex; used as a
    /// branch-cut hint when evaluating enrichment fields at slit vertices.
    pub fn vertex_hint(&self, vertex: usize) -> Point2<T> {
        self.elements[self.vertex_element[vertex]].centroid
    }

    /// Hint point for an edge: the centroid of its first adjacent element.
    pub fn edge_hint(&self, edge: usize) -> Point2<T> {
        self.elements[self.edges[edge].adjacent_element_ids[0]].centroid
    }

    pub fn total_area(&self) -> T {
        self.elements
            .iter()
            .fold(T::zero(), |acc, e| acc + e.area)
    }

    /// Index of an element containing the point (linear scan).
    pub fn locate(&self, p: Point2<T>) -> Option<usize> {
        self.elements.iter().position(|e| {
            geometry::point_in_polygon(p, &self.element_vertex_positions(e.id))
        })
    }

    /// Graph distance between two elements where steps cross interior edges.
    pub fn element_graph_distance(&self, from: usize, to: usize) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.elements.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(e) = queue.pop_front() {
            if e == to {
                return Some(dist[e]);
            }
            for &edge in &self.elements[e].edge_ids {
                for &nb in &self.edges[edge].adjacent_element_ids {
                    if nb != e && dist[nb] == usize::MAX {
                        dist[nb] = dist[e] + 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
        None
    }
}
