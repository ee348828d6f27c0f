//! Slow, obviously-correct reference implementations used by tests.
#![allow(dead_code)]

use tlr_core::geometry::Vec3;

/// DBSCAN via the full neighborhood graph. Clusters are the connected
/// components of core points (core-core edges within eps), ordered by their
/// smallest core index; each border point joins the first such component
/// that contains one of its core neighbors. Returns sorted clusters and
/// sorted noise.
pub fn brute_dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm_squared() <= eps * eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // component order = order of first core index
    let mut order: Vec<usize> = Vec::new();
    let mut comp_of_root = std::collections::HashMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            comp_of_root.entry(r).or_insert_with(|| {
                order.push(r);
                order.len() - 1
            });
        }
    }
    let mut clusters = vec![Vec::new(); order.len()];
    let mut noise = Vec::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            clusters[comp_of_root[&r]].push(i);
            continue;
        }
        let owner = neighbors[i]
            .iter()
            .filter(|&&j| core[j])
            .map(|&j| {
                let r = find(&mut parent, j);
                comp_of_root[&r]
            })
            .min();
        match owner {
            Some(c) => clusters[c].push(i),
            None => noise.push(i),
        }
    }
    (clusters, noise)
}

/// 11-point AP by enumerating every distinct confidence as a threshold.
/// `ranked` holds (confidence, is_tp). Assumes distinct confidences.
pub fn exhaustive_ap11(ranked: &[(f64, bool)], n_gt: usize) -> f64 {
    let mut thresholds: Vec<f64> = ranked.iter().map(|r| r.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&thr| {
            let kept: Vec<&(f64, bool)> = ranked.iter().filter(|r| r.0 >= thr).collect();
            let tp = kept.iter().filter(|r| r.1).count() as f64;
            (tp / n_gt as f64, tp / kept.len() as f64)
        })
        .collect();
    let mut total = 0.0;
    for level in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        let mut best = 0.0f64;
        for &(r, p) in &points {
            // recall values are k / n_gt; compare on the integer scale
            if (r * n_gt as f64).round() * 10.0 >= (level * 10.0f64).round() * n_gt as f64 {
                best = best.max(p);
            }
        }
        total += best;
    }
    total / 11.0
}

/// Single-linkage components by union-find over all pairs within `radius`.
/// Returns each component as a sorted list of input indices, components
/// sorted by their first element.
pub fn union_find_groups(positions: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if (positions[i] - positions[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = comps.into_values().collect();
    out.sort();
    out
}

/// Pinhole projection written out by hand: vehicle point -> pixel, or None
/// when behind the camera or outside the image.
pub fn hand_project(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    cam_pos_vehicle: Vec3,
    p_vehicle: Vec3,
) -> Option<(f64, f64)> {
    // camera axes for a forward-looking camera: x_c = -y_v, y_c = -z_v, z_c = x_v
    let d = p_vehicle - cam_pos_vehicle;
    let (xc, yc, zc) = (-d.y, -d.z, d.x);
    if zc <= 0.0 {
        return None;
    }
    let u = fx * xc / zc + cx;
    let v = fy * yc / zc + cy;
    (u >= 0.0 && u < w && v >= 0.0 && v < h).then_some((u, v))
}

/// World point into the vehicle frame for a Z-Y-X (yaw, pitch, roll) pose,
/// with the rotation matrix expanded by hand.
pub fn hand_world_to_vehicle(pos: Vec3, roll: f64, pitch: f64, yaw: f64, p: Vec3) -> Vec3 {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // columns of R = Rz * Ry * Rx are the vehicle axes in the world
    let x_axis = Vec3::new(cy * cp, sy * cp, -sp);
    let y_axis = Vec3::new(cy * sp * sr - sy * cr, sy * sp * sr + cy * cr, cp * sr);
    let z_axis = Vec3::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr);
    let d = p - pos;
    Vec3::new(d.dot(&x_axis), d.dot(&y_axis), d.dot(&z_axis))
}

/// A light as the gate oracle sees it: pixel, gate radius in px.
#[derive(Debug, Clone, Copy)]
pub struct OracleGate {
    pub u: f64,
    pub v: f64,
    pub radius: f64,
}

/// Reference selection: among boxes whose center lies in at least one
/// gate, the one whose center is nearest to any gate center. Returns the
/// candidate distances so callers can accept ties.
pub fn oracle_in_gate(centers: &[(f64, f64)], gates: &[OracleGate]) -> Vec<Option<f64>> {
    centers
        .iter()
        .map(|&(u, v)| {
            let d = |g: &OracleGate| ((u - g.u).powi(2) + (v - g.v).powi(2)).sqrt();
            let inside = gates.iter().any(|g| d(g) <= g.radius);
            inside.then(|| gates.iter().map(d).fold(f64::INFINITY, f64::min))
        })
        .collect()
}
