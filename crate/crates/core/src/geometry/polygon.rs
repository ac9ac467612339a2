/// Even-odd point-in-polygon test; the polygon is implicitly closed.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from `p` to the segment `ab`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

pub(crate) fn boundary_distance(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    match n {
        0 => f64::INFINITY,
        1 => segment_distance(p, poly[0], poly[0]),
        _ => (0..n)
            .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Convex hull (Andrew's monotone chain), counter-clockwise in a y-up frame.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Pixels whose centers are inside `poly` or within `margin` of its boundary,
/// as an `h × w` flag vector.
pub(crate) fn rasterize_polygon(
    poly: &[[f64; 2]],
    margin: f64,
    height: usize,
    width: usize,
) -> Vec<bool> {
    let mut out = vec![false; height * width];
    if poly.is_empty() {
        return out;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in poly {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let clamp = |v: f64, len: usize| v.max(0.0).min((len - 1) as f64);
    let xs =
        clamp((x0 - margin).floor(), width) as usize..=clamp((x1 + margin).ceil(), width) as usize;
    let ys = clamp((y0 - margin).floor(), height) as usize
        ..=clamp((y1 + margin).ceil(), height) as usize;
    for y in ys {
        for x in xs.clone() {
            let p = [x as f64, y as f64];
            if point_in_polygon(p, poly) || boundary_distance(p, poly) <= margin {
                out[y * width + x] = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_membership() {
        let sq = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        assert!(point_in_polygon([2.0, 2.0], &sq));
        assert!(!point_in_polygon([5.0, 2.0], &sq));
        assert_eq!(boundary_distance([2.0, 2.0], &sq), 2.0);
    }

    #[test]
    fn hull_drops_interior_points() {
        let pts = [
            [0.0, 0.0],
            [2.0, 0.0],
            [1.0, 1.0],
            [2.0, 2.0],
            [0.0, 2.0],
            [1.0, 0.5],
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(!hull.contains(&[1.0, 1.0]));
    }

    #[test]
    fn rasterize_with_margin() {
        let tri = [[2.0, 2.0], [6.0, 2.0], [2.0, 6.0]];
        let flags = rasterize_polygon(&tri, 0.0, 8, 8);
        assert!(flags[3 * 8 + 3]);
        assert!(!flags[6 * 8 + 6]);
        let wide = rasterize_polygon(&tri, 1.0, 8, 8);
        assert!(wide[8 + 2]);
    }
}
