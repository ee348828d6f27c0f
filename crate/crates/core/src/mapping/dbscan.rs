//! Density-based clustering of accumulated LiDAR hits.
//!
//! Standard DBSCAN over 3D points with an inclusive `eps` ball (a point is its
//! own neighbor). Points are scanned in index order; a new cluster starts at
//! the first unassigned core point and is expanded breadth-first. A border
//! point reachable from several clusters stays with the first cluster that
//! claims it. Neighborhood queries use a uniform hash grid with `eps` cells.

use std::collections::{HashMap, VecDeque};

use crate::geometry::Vec3;

/// Cluster membership as point indices. Each cluster is sorted ascending and
/// clusters appear in creation order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

type Cell = (i64, i64, i64);

struct Grid<'a> {
    points: &'a [Vec3],
    inv_cell: f64,
    eps_sq: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vec3], eps: f64) -> Self {
        let inv_cell = 1.0 / eps;
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, inv_cell)).or_default().push(i);
        }
        Self {
            points,
            inv_cell,
            eps_sq: eps * eps,
            cells,
        }
    }

    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        let p = &self.points[i];
        let (cx, cy, cz) = cell_of(p, self.inv_cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if (self.points[j] - p).norm_squared() <= self.eps_sq {
                            f(j);
                        }
                    }
                }
            }
        }
    }

    fn neighbor_count(&self, i: usize) -> usize {
        let mut n = 0;
        self.for_each_neighbor(i, |_| n += 1);
        n
    }
}

fn cell_of(p: &Vec3, inv_cell: f64) -> Cell {
    (
        (p.x * inv_cell).floor() as i64,
        (p.y * inv_cell).floor() as i64,
        (p.z * inv_cell).floor() as i64,
    )
}

/// Clusters `points` with neighborhood radius `eps` (meters, inclusive) and
/// core threshold `min_pts` (neighbors counted including the point itself).
///
/// # Panics
///
/// If `eps` is not positive or `min_pts` is zero.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let grid = Grid::new(points, eps);
    let mut core: Vec<Option<bool>> = vec![None; n];
    let is_core = |i: usize, core: &mut Vec<Option<bool>>| -> bool {
        *core[i].get_or_insert_with(|| grid.neighbor_count(i) >= min_pts)
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut found = Vec::new();

    for i in 0..n {
        if label[i].is_some() || !is_core(i, &mut core) {
            continue;
        }
        let c = clusters.len();
        let mut members = vec![i];
        label[i] = Some(c);
        queue.push_back(i);
        while let Some(p) = queue.pop_front() {
            found.clear();
            grid.for_each_neighbor(p, |q| found.push(q));
            for &q in &found {
                if label[q].is_some() {
                    continue;
                }
                label[q] = Some(c);
                members.push(q);
                if is_core(q, &mut core) {
                    queue.push_back(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    let noise = (0..n).filter(|&i| label[i].is_none()).collect();
    Clustering { clusters, noise }
}

/// Arithmetic mean of the indexed points.
pub fn centroid(points: &[Vec3], members: &[usize]) -> Vec3 {
    let sum: Vec3 = members.iter().map(|&i| points[i]).sum();
    sum / members.len() as f64
}
