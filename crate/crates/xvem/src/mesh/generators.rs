//! Built-in mesh families: Cartesian meshes of the fractured square and the
//! two L-shaped domains, and a hexagon-dominated family for the L-shape.

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scalar::Real;
use std::collections::HashMap;

/// Which quadrant of (-1,1)^2 is removed to make an L-shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovedQuadrant {
    /// [0,1) x [0,1)
    TopRight,
    /// [0,1) x (-1,0]
    BottomRight,
}

struct GridVertices<T> {
    positions: Vec<Point2<T>>,
    map: HashMap<(usize, usize, u8), usize>,
}

impl<T: Real> GridVertices<T> {
    fn new() -> Self {
        Self {
            positions: Vec::new(),
            map: HashMap::new(),
        }
    }

    fn get(&mut self, key: (usize, usize, u8), position: Point2<T>) -> usize {
        if let Some(&id) = self.map.get(&key) {
            return id;
        }
        let id = self.positions.len();
        self.positions.push(position);
        self.map.insert(key, id);
        id
    }
}

fn grid_coord<T: Real>(i: usize, n: usize) -> T {
    T::of(-1.0 + 2.0 * i as f64 / n as f64)
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Mesh(format!(
            "subdivision count must be even and at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Uniform n-by-n Cartesian mesh of (-1,1)^2 with the slit {y = 0, x > 0}.
///
/// Vertices strictly inside the slit and the endpoint (1, 0) are duplicated
/// into an upper and a lower copy; the tip (0, 0) is shared. Elements above
/// the slit reference the upper copies, elements below the lower copies, so
/// the two crack faces carry independent boundary edges.
pub fn build_cartesian_fractured_mesh<T: Real>(n: usize) -> Result<Mesh<T>> {
    check_even(n)?;
    let half = n / 2;
    let mut verts = GridVertices::new();
    let mut cells = Vec::with_capacity(n * n);
    for cj in 0..n {
        for ci in 0..n {
            let corners = [(ci, cj), (ci + 1, cj), (ci + 1, cj + 1), (ci, cj + 1)];
            let cell: Vec<usize> = corners
                .iter()
                .map(|&(i, j)| {
                    let duplicated = j == half && i > half;
                    // 0 = shared/upper copy, 1 = lower copy
                    let side = if duplicated && cj < half { 1 } else { 0 };
                    verts.get((i, j, side), Point2::new(grid_coord(i, n), grid_coord(j, n)))
                })
                .collect();
            cells.push(cell);
        }
    }
    Mesh::from_cells(verts.positions, cells)
}

/// Uniform Cartesian mesh of the L-shape with the bottom-right quadrant
/// removed: (-1,1)^2 \ [0,1) x (-1,0]. Has 3n^2/4 elements.
pub fn build_cartesian_lshape_mesh<T: Real>(n: usize) -> Result<Mesh<T>> {
    build_cartesian_lshape(n, RemovedQuadrant::BottomRight)
}

/// Uniform Cartesian mesh of the L-shape with the top-right quadrant removed:
/// (-1,1)^2 \ [0,1)^2.
pub fn build_cartesian_lshape_mesh_tr<T: Real>(n: usize) -> Result<Mesh<T>> {
    build_cartesian_lshape(n, RemovedQuadrant::TopRight)
}

fn build_cartesian_lshape<T: Real>(n: usize, removed: RemovedQuadrant) -> Result<Mesh<T>> {
    check_even(n)?;
    let half = n / 2;
    let mut verts = GridVertices::new();
    let mut cells = Vec::new();
    for cj in 0..n {
        for ci in 0..n {
            let dropped = match removed {
                RemovedQuadrant::TopRight => ci >= half && cj >= half,
                RemovedQuadrant::BottomRight => ci >= half && cj < half,
            };
            if dropped {
                continue;
            }
            let corners = [(ci, cj), (ci + 1, cj), (ci + 1, cj + 1), (ci, cj + 1)];
            let cell: Vec<usize> = corners
                .iter()
                .map(|&(i, j)| {
                    verts.get((i, j, 0), Point2::new(grid_coord(i, n), grid_coord(j, n)))
                })
                .collect();
            cells.push(cell);
        }
    }
    Mesh::from_cells(verts.positions, cells)
}

/// Hexagon-dominated mesh of the L-shape (-1,1)^2 \ [0,1)^2.
///
/// Rows of bricks are offset by half a cell so every interior cell is a
/// hexagon (the two extra vertices on the horizontal lines are displaced
/// vertically to open the flat angles); cells along the boundary degenerate
/// to quads/pentagons. Refining by one level halves the cell dimensions.
pub fn build_hexagonal_lshape_mesh<T: Real>(level: usize) -> Result<Mesh<T>> {
    if level < 1 {
        return Err(Error::Mesh("hexagonal mesh level must be at least 1".into()));
    }
    let nx: usize = 4 << level; // cells per axis of the underlying grid
    let ny = nx;
    let half_l = ny / 2;
    let m_mid = nx; // m index of the line x = 0 (m counts half-cells)
    let m_max_lower = 2 * nx;
    let sy = 2.0 / ny as f64;
    let delta = 0.25; // vertical displacement of split vertices, in units of sy

    let on_domain_boundary = |m: usize, l: usize| -> bool {
        m == 0 || m == m_max_lower || l == 0 || l == ny
            || (l == half_l && m >= m_mid)
            || (m == m_mid && l >= half_l)
    };

    let mut verts: GridVertices<T> = GridVertices::new();
    let mut vertex = |m: usize, l: usize| -> usize {
        let x = -1.0 + m as f64 / nx as f64;
        let mut y = -1.0 + l as f64 * sy;
        if !on_domain_boundary(m, l) {
            let up = m % 2 == l % 2;
            y += if up { delta * sy } else { -delta * sy };
        }
        verts.get((m, l, 0), Point2::new(T::of(x), T::of(y)))
    };

    // m-intervals of the cells in row r (row r spans lines r..r+1)
    let row_cells = |r: usize| -> Vec<(usize, usize)> {
        let m_max = if r >= half_l { m_mid } else { m_max_lower };
        let mut cells = Vec::new();
        if r.is_multiple_of(2) {
            let mut m = 0;
            while m + 2 <= m_max {
                cells.push((m, m + 2));
                m += 2;
            }
        } else {
            cells.push((0, 1));
            let mut m = 1;
            while m + 2 <= m_max {
                cells.push((m, m + 2));
                m += 2;
            }
            if m < m_max {
                cells.push((m, m_max));
            }
        }
        cells
    };

    // extra vertices on a horizontal chain of a cell, contributed by the
    // adjacent row on the other side of the line
    let chain_splits = |m_lo: usize, m_hi: usize, other_row: Option<usize>| -> Vec<usize> {
        let Some(r) = other_row else {
            return Vec::new();
        };
        let m_max = if r >= half_l { m_mid } else { m_max_lower };
        let mut splits: Vec<usize> = ((m_lo + 1)..m_hi)
            .filter(|&m| m % 2 == r % 2 && m <= m_max)
            .collect();
        // clipped offset rows in the upper half end with a corner at x = 0
        // that the parity rule misses
        if r >= half_l && r % 2 == 1 && m_lo < m_mid && m_mid < m_hi && !splits.contains(&m_mid) {
            splits.push(m_mid);
            splits.sort_unstable();
        }
        splits
    };

    let mut cells = Vec::new();
    for r in 0..ny {
        let below = if r > 0 { Some(r - 1) } else { None };
        let above = if r + 1 < ny { Some(r + 1) } else { None };
        for (m_lo, m_hi) in row_cells(r) {
            let mut cycle = Vec::with_capacity(6);
            cycle.push(vertex(m_lo, r));
            for m in chain_splits(m_lo, m_hi, below) {
                cycle.push(vertex(m, r));
            }
            cycle.push(vertex(m_hi, r));
            cycle.push(vertex(m_hi, r + 1));
            for m in chain_splits(m_lo, m_hi, above).into_iter().rev() {
                cycle.push(vertex(m, r + 1));
            }
            cycle.push(vertex(m_lo, r + 1));
            cells.push(cycle);
        }
    }
    Mesh::from_cells(verts.positions, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractured_n2_counts() {
        let mesh = build_cartesian_fractured_mesh::<f64>(2).unwrap();
        assert_eq!(mesh.n_elements(), 4);
        assert_eq!(mesh.n_vertices(), 10); // 9 grid + 1 duplicate at (1, 0)
        assert_eq!(mesh.n_edges(), 13); // 12 grid + 1 duplicated slit edge
    }

    #[test]
    fn fractured_tip_is_single() {
        let mesh = build_cartesian_fractured_mesh::<f64>(2).unwrap();
        let at_tip: Vec<_> = mesh
            .vertices
            .iter()
            .filter(|v| v.position.x.abs() < 1e-14 && v.position.y.abs() < 1e-14)
            .collect();
        assert_eq!(at_tip.len(), 1);
        assert!(at_tip[0].on_boundary);
    }

    #[test]
    fn fractured_duplicates_share_position() {
        let mesh = build_cartesian_fractured_mesh::<f64>(4).unwrap();
        // (0.5, 0) and (1, 0) are duplicated
        for x in [0.5, 1.0] {
            let copies: Vec<_> = mesh
                .vertices
                .iter()
                .filter(|v| (v.position.x - x).abs() < 1e-14 && v.position.y.abs() < 1e-14)
                .collect();
            assert_eq!(copies.len(), 2, "expected 2 copies at ({x}, 0)");
            assert!(copies.iter().all(|v| v.on_boundary));
        }
        // slit edges are boundary edges with one adjacent element each
        let slit_edges: Vec<_> = mesh
            .edges
            .iter()
            .filter(|e| {
                e.midpoint.y.abs() < 1e-14 && e.midpoint.x > 0.0 && e.midpoint.x < 1.0
            })
            .collect();
        assert_eq!(slit_edges.len(), 4); // 2 per face
        assert!(slit_edges.iter().all(|e| e.on_boundary));
    }

    #[test]
    fn fractured_mesh_size() {
        let mesh = build_cartesian_fractured_mesh::<f64>(4).unwrap();
        assert!((mesh.mesh_size - 2.0_f64.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn fractured_area_is_four() {
        for n in [2, 4, 8] {
            let mesh = build_cartesian_fractured_mesh::<f64>(n).unwrap();
            assert!((mesh.total_area() - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn odd_subdivision_rejected() {
        assert!(build_cartesian_fractured_mesh::<f64>(3).is_err());
        assert!(build_cartesian_lshape_mesh::<f64>(5).is_err());
        assert!(build_cartesian_fractured_mesh::<f64>(0).is_err());
    }

    #[test]
    fn lshape_n2_counts() {
        let mesh = build_cartesian_lshape_mesh::<f64>(2).unwrap();
        assert_eq!(mesh.n_elements(), 3);
        assert_eq!(mesh.n_vertices(), 8);
        assert_eq!(mesh.n_edges(), 10);
        // re-entrant corner is a boundary vertex
        let corner = mesh
            .vertices
            .iter()
            .find(|v| v.position.x.abs() < 1e-14 && v.position.y.abs() < 1e-14)
            .unwrap();
        assert!(corner.on_boundary);
    }

    #[test]
    fn lshape_element_count_formula() {
        for n in [2, 4, 8] {
            let mesh = build_cartesian_lshape_mesh::<f64>(n).unwrap();
            assert_eq!(mesh.n_elements(), 3 * n * n / 4);
            assert!((mesh.total_area() - 3.0).abs() < 1e-10);
            let tr = build_cartesian_lshape_mesh_tr::<f64>(n).unwrap();
            assert_eq!(tr.n_elements(), 3 * n * n / 4);
        }
    }

    #[test]
    fn cartesian_h_halves_on_refinement() {
        for n in [2, 4, 8] {
            let coarse = build_cartesian_fractured_mesh::<f64>(n).unwrap();
            let fine = build_cartesian_fractured_mesh::<f64>(2 * n).unwrap();
            assert!((fine.mesh_size - 0.5 * coarse.mesh_size).abs() < 1e-14);
        }
    }

    #[test]
    fn slit_forces_detour() {
        for n in [2, 8] {
            let slit = build_cartesian_fractured_mesh::<f64>(n).unwrap();
            let above = slit.locate(Point2::new(0.4, 0.1)).unwrap();
            let below = slit.locate(Point2::new(0.4, -0.1)).unwrap();
            let d_slit = slit.element_graph_distance(above, below).unwrap();
            // without the slit the two cells would be one step apart; the
            // detour must round the tip
            assert!(d_slit >= 3, "n={n}: detour length {d_slit}");
        }
    }

    #[test]
    fn hexagonal_mesh_is_valid_partition() {
        for level in [1, 2] {
            let mesh = build_hexagonal_lshape_mesh::<f64>(level).unwrap();
            assert!(
                (mesh.total_area() - 3.0).abs() < 1e-10,
                "level {level}: area {}",
                mesh.total_area()
            );
            for e in &mesh.edges {
                let n_adj = e.adjacent_element_ids.len();
                assert!(n_adj == 1 || n_adj == 2);
                assert_eq!(e.on_boundary, n_adj == 1);
            }
        }
    }

    #[test]
    fn hexagonal_h_ratio_band() {
        let mut prev: Option<f64> = None;
        for level in 1..=3 {
            let mesh = build_hexagonal_lshape_mesh::<f64>(level).unwrap();
            if let Some(h_prev) = prev {
                let ratio = mesh.mesh_size / h_prev;
                assert!(
                    (0.4..=0.6).contains(&ratio),
                    "level {level}: ratio {ratio}"
                );
            }
            prev = Some(mesh.mesh_size);
        }
    }

    #[test]
    fn hexagonal_mesh_dominated_by_hexagons() {
        let mesh = build_hexagonal_lshape_mesh::<f64>(2).unwrap();
        let hexes = mesh
            .elements
            .iter()
            .filter(|e| e.vertex_ids.len() == 6)
            .count();
        assert!(
            hexes * 2 > mesh.n_elements(),
            "{hexes} hexagons of {}",
            mesh.n_elements()
        );
        // the re-entrant corner (0,0) is a mesh vertex on the boundary
        let corner = mesh
            .vertices
            .iter()
            .find(|v| v.position.x.abs() < 1e-14 && v.position.y.abs() < 1e-14)
            .expect("corner vertex");
        assert!(corner.on_boundary);
    }
}
