//! Mesh invariant checks and per-element shape-regularity estimates.

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::{
    is_simple_polygon, min_edge_distance, point_in_kernel, signed_area, Point2,
};
use crate::scalar::Real;

/// Shape-quality summary produced by [`validate_mesh`].
#[derive(Debug, Clone)]
pub struct QualityReport<T> {
    /// Per-element estimate of the star-shapedness ratio: the radius of the
    /// largest ball centred at a kernel point, divided by the diameter.
    pub rho: Vec<T>,
    /// min over elements and their edges of h_E / h_P
    pub min_edge_diameter_ratio: T,
    pub total_area: T,
    pub mesh_size: T,
}

impl<T: Real> QualityReport<T> {
    pub fn min_rho(&self) -> T {
        self.rho.iter().fold(T::one(), |a, &b| a.min(b))
    }
}

/// Verify every mesh invariant and estimate per-element shape regularity.
/// Reports the first violated invariant with the offending entity id.
pub fn validate_mesh<T: Real>(mesh: &Mesh<T>) -> Result<QualityReport<T>> {
    for (i, v) in mesh.vertices.iter().enumerate() {
        if v.id != i {
            return Err(Error::Mesh(format!("vertex ids not dense at {i}")));
        }
        if !v.position.is_finite() {
            return Err(Error::Mesh(format!("vertex {i} not finite")));
        }
    }
    for (i, e) in mesh.edges.iter().enumerate() {
        if e.id != i {
            return Err(Error::Mesh(format!("edge ids not dense at {i}")));
        }
        if e.length <= T::zero() {
            return Err(Error::Mesh(format!("edge {i} has non-positive length")));
        }
        let n_adj = e.adjacent_element_ids.len();
        if !(n_adj == 1 || n_adj == 2) {
            return Err(Error::Mesh(format!("edge {i} has {n_adj} adjacent elements")));
        }
        if e.on_boundary != (n_adj == 1) {
            return Err(Error::Mesh(format!("edge {i} boundary flag inconsistent")));
        }
        for &el in &e.adjacent_element_ids {
            if !mesh.elements[el].edge_ids.contains(&i) {
                return Err(Error::Mesh(format!(
                    "incidence asymmetry: edge {i} lists element {el} but not vice versa"
                )));
            }
        }
    }

    let mut max_diam = T::zero();
    let mut min_edge_ratio = T::max_value().unwrap();
    let mut rho = Vec::with_capacity(mesh.n_elements());

    for el in &mesh.elements {
        let pts = mesh.element_vertex_positions(el.id);
        let area = signed_area(&pts);
        if area <= T::zero() {
            return Err(Error::Mesh(format!(
                "element {} is clockwise or degenerate (signed area {area:e})",
                el.id
            )));
        }
        if !is_simple_polygon(&pts) {
            return Err(Error::Mesh(format!("element {} self-intersects", el.id)));
        }
        if (area - el.area).abs() > T::of(1e-12) * area.max(T::one()) {
            return Err(Error::Mesh(format!("element {} stored area inconsistent", el.id)));
        }
        let n = el.vertex_ids.len();
        if el.edge_ids.len() != n {
            return Err(Error::Mesh(format!(
                "element {}: edge cycle length mismatch",
                el.id
            )));
        }
        for i in 0..n {
            let a = el.vertex_ids[i];
            let b = el.vertex_ids[(i + 1) % n];
            let edge = &mesh.edges[el.edge_ids[i]];
            let mut ids = edge.vertex_ids;
            ids.sort_unstable();
            let mut want = [a.min(b), a.max(b)];
            want.sort_unstable();
            if ids != want {
                return Err(Error::Mesh(format!(
                    "element {}: edge {} does not join vertices {a},{b}",
                    el.id, edge.id
                )));
            }
            min_edge_ratio = min_edge_ratio.min(edge.length / el.diameter);
        }
        max_diam = max_diam.max(el.diameter);
        rho.push(estimate_rho(&pts, el.centroid, el.diameter));
    }

    if (max_diam - mesh.mesh_size).abs() > T::of(1e-12) * max_diam {
        return Err(Error::Mesh("mesh size is not the max element diameter".into()));
    }

    Ok(QualityReport {
        rho,
        min_edge_diameter_ratio: min_edge_ratio,
        total_area: mesh.total_area(),
        mesh_size: mesh.mesh_size,
    })
}

/// Estimate the star-shapedness ratio by maximising the inscribed-ball radius
/// over kernel points: grid candidates seeded from the centroid, then a short
/// pattern search.
fn estimate_rho<T: Real>(pts: &[Point2<T>], centroid: Point2<T>, diameter: T) -> T {
    let score = |p: Point2<T>| -> T {
        if point_in_kernel(p, pts) {
            min_edge_distance(p, pts)
        } else {
            T::zero()
        }
    };
    let mut best_p = centroid;
    let mut best = score(centroid);
    let (mut xmin, mut xmax) = (pts[0].x, pts[0].x);
    let (mut ymin, mut ymax) = (pts[0].y, pts[0].y);
    for p in pts {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let steps = 9;
    for i in 1..steps {
        for j in 1..steps {
            let p = Point2::new(
                xmin + (xmax - xmin) * T::of(i as f64 / steps as f64),
                ymin + (ymax - ymin) * T::of(j as f64 / steps as f64),
            );
            let s = score(p);
            if s > best {
                best = s;
                best_p = p;
            }
        }
    }
    let mut step = diameter * T::of(0.1);
    for _ in 0..30 {
        let mut improved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let p = Point2::new(best_p.x + step * T::of(dx), best_p.y + step * T::of(dy));
            let s = score(p);
            if s > best {
                best = s;
                best_p = p;
                improved = true;
            }
        }
        if !improved {
            step *= T::of(0.5);
        }
    }
    best / diameter
}
