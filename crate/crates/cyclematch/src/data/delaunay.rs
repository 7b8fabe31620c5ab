//! Bowyer-Watson incremental Delaunay triangulation with a super-triangle.
//!
//! The in-circumcircle predicate evaluates the 3x3 determinant with
//! error-compensated products (fused multiply-add splits) and compensated
//! summation, plus a relative degeneracy guard of 1e-12: near-cocircular and
//! near-collinear cases are treated as boundary rather than inside.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

const DEGENERACY_EPS: f64 = 1e-12;

/// Edges of a Delaunay triangulation of the points (undirected, `i < j`,
/// sorted, deduplicated). Collinear input degrades to a path graph in
/// coordinate order.
pub fn delaunay(points: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "delaunay triangulation needs at least 3 points, got {n}"
        )));
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Config("non-finite point coordinate".into()));
    }
    if all_collinear(points) {
        return Ok(collinear_path(points));
    }

    // Super-triangle vertices far enough away that the circumcircle of any
    // non-degenerate real triangle (guarded at 1e-12) cannot reach them; the
    // compensated predicate keeps its sign reliable at this scale.
    let (min_x, max_x) = min_max(points.iter().map(|p| p.0));
    let (min_y, max_y) = min_max(points.iter().map(|p| p.1));
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let far = 1.0e6 * span;
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let mut verts: Vec<(f64, f64)> = points.to_vec();
    verts.push((cx - 2.0 * far, cy - far));
    verts.push((cx + 2.0 * far, cy - far));
    verts.push((cx, cy + 2.0 * far));

    let mut triangles: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for p in 0..n {
        let point = verts[p];
        let mut bad: Vec<usize> = triangles
            .iter()
            .enumerate()
            .filter(|(_, t)| in_circumcircle(verts[t[0]], verts[t[1]], verts[t[2]], point))
            .map(|(idx, _)| idx)
            .collect();
        if bad.is_empty() {
            // Degeneracy guard kept the containing triangle out; force it.
            if let Some(idx) = triangles
                .iter()
                .position(|t| contains(verts[t[0]], verts[t[1]], verts[t[2]], point))
            {
                bad.push(idx);
            } else {
                continue;
            }
        }

        // Boundary of the carved cavity: edges used by exactly one bad triangle.
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for &idx in &bad {
            let t = triangles[idx];
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let bad_set: BTreeSet<usize> = bad.iter().copied().collect();
        let mut kept: Vec<[usize; 3]> = triangles
            .iter()
            .enumerate()
            .filter(|(idx, _)| !bad_set.contains(idx))
            .map(|(_, t)| *t)
            .collect();
        let mut boundary: Vec<(usize, usize)> = edge_count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            kept.push([a, b, p]);
        }
        triangles = kept;
    }

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for t in &triangles {
        if t.iter().any(|&v| v >= n) {
            continue;
        }
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    Ok(edges.into_iter().collect())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn all_collinear(points: &[(f64, f64)]) -> bool {
    let (a, b) = (points[0], points[1]);
    points[2..].iter().all(|&c| {
        let (det, mag) = orient_det(a, b, c);
        det.abs() <= DEGENERACY_EPS * mag.max(1.0)
    })
}

/// Path graph over the points sorted by coordinates.
fn collinear_path(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .partial_cmp(&points[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut edges: Vec<(usize, usize)> = order
        .windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect();
    edges.sort_unstable();
    edges
}

/// Error-free product split: returns `(p, e)` with `a * b == p + e` exactly.
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `a*d - b*c` with one compensation term (Kahan's accurate 2x2 determinant).
fn det2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let (bc, err) = two_product(b, c);
    a.mul_add(d, -bc) - err
}

/// Signed orientation determinant of (a, b, c) and a magnitude estimate.
fn orient_det(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let det = det2(b.0 - a.0, b.1 - a.1, c.0 - a.0, c.1 - a.1);
    let mag = (b.0 - a.0).abs() * (c.1 - a.1).abs() + (b.1 - a.1).abs() * (c.0 - a.0).abs();
    (det, mag)
}

/// Strict in-circumcircle test of `d` against the circle through `a, b, c`,
/// independent of the triangle's orientation.
fn in_circumcircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (orient, omag) = orient_det(a, b, c);
    if orient.abs() <= DEGENERACY_EPS * omag.max(1.0) {
        return false; // degenerate triangle: no interior
    }
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;

    // det of [[ax, ay, a2], [bx, by, b2], [cx, cy, c2]] via accurate cofactors
    // and compensated accumulation of the three products.
    let c0 = det2(by, b2, cy, c2);
    let c1 = det2(bx, b2, cx, c2);
    let c2f = det2(bx, by, cx, cy);
    let terms = [
        two_product(ax, c0),
        two_product(-ay, c1),
        two_product(a2, c2f),
    ];
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (p, e) in terms {
        let t = sum + p;
        comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
        comp += e;
        sum = t;
    }
    let det = sum + comp;
    let mag = (ax * c0).abs() + (ay * c1).abs() + (a2 * c2f).abs();
    if det.abs() <= DEGENERACY_EPS * mag.max(1.0) {
        return false; // on-circle within guard: treat as boundary
    }
    (det > 0.0) == (orient > 0.0)
}

/// True if `p` lies inside or on the triangle `(a, b, c)`.
fn contains(a: (f64, f64), b: (f64, f64), c: (f64, f64), p: (f64, f64)) -> bool {
    let (o, _) = orient_det(a, b, c);
    let side = |u: (f64, f64), v: (f64, f64)| orient_det(u, v, p).0 * o.signum();
    side(a, b) >= 0.0 && side(b, c) >= 0.0 && side(c, a) >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_has_three_edges() {
        let edges = delaunay(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn unit_square_has_five_edges() {
        let edges =
            delaunay(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(edges.len(), 5);
    }

    #[test]
    fn collinear_points_fall_back_to_a_path() {
        let edges = delaunay(&[(2.0, 2.0), (0.0, 0.0), (1.0, 1.0), (3.0, 3.0)]).unwrap();
        assert_eq!(edges, vec![(0, 2), (0, 3), (1, 2)]);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(delaunay(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn planar_edge_bound_holds() {
        let mut x = 0.42f64;
        let mut points = Vec::new();
        for _ in 0..40 {
            // Weyl sequence keeps this deterministic without an RNG.
            x = (x + 0.754_877_666).fract();
            let y = (x * 7.13).fract();
            points.push((x, y));
        }
        let edges = delaunay(&points).unwrap();
        assert!(edges.len() <= 3 * points.len() - 6);
    }
}
