//! Planar polygon helpers for floor plans (XY plane, meters).

use nalgebra::Vector2;

pub type Point2 = Vector2<f64>;

pub fn to_points(raw: &[[f64; 2]]) -> Vec<Point2> {
    raw.iter().map(|p| Point2::new(p[0], p[1])).collect()
}

/// Shoelace area, positive for counter-clockwise winding.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Area centroid. Falls back to the vertex mean for zero-area input.
pub fn centroid(poly: &[Point2]) -> Point2 {
    let area = signed_area(poly);
    let n = poly.len();
    if area.abs() < 1e-12 {
        return poly.iter().sum::<Point2>() / n as f64;
    }
    let mut c = Point2::zeros();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = a.x * b.y - b.x * a.y;
        c += (a + b) * cross;
    }
    c / (6.0 * area)
}

pub fn bounds(poly: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::repeat(f64::INFINITY);
    let mut hi = Point2::repeat(f64::NEG_INFINITY);
    for p in poly {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Even-odd point-in-polygon test. Points exactly on the boundary may land on
/// either side; callers needing a margin use [`distance_to_boundary`].
pub fn contains(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn closest_point_on_segment(a: Point2, b: Point2, p: Point2) -> Point2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn edges(poly: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    let n = poly.len();
    (0..n).map(move |i| (poly[i], poly[(i + 1) % n]))
}

/// Nearest point on the polygon outline.
pub fn nearest_boundary_point(poly: &[Point2], p: Point2) -> Point2 {
    edges(poly)
        .map(|(a, b)| closest_point_on_segment(a, b, p))
        .min_by(|x, y| (x - p).norm().total_cmp(&(y - p).norm()))
        .expect("polygon has vertices")
}

pub fn distance_to_boundary(poly: &[Point2], p: Point2) -> f64 {
    (nearest_boundary_point(poly, p) - p).norm()
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).perp(&(c - a))
}

/// Segments cross at a point strictly interior to both (by more than `tol`).
pub fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2, tol: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if !(((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)))
    {
        return false;
    }
    let t = d1 / (d1 - d2);
    let x = a + (b - a) * t;
    [a, b, c, d].iter().all(|v| (x - v).norm() > tol)
}

/// Segments share at least one point (including touching and collinear overlap).
pub fn segments_touch(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let on = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

/// No two non-adjacent edges touch, no adjacent edges fold back, and the
/// area is non-zero.
pub fn is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 || signed_area(poly).abs() < 1e-12 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (b - a).norm() == 0.0 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if adjacent {
                // Consecutive edges may only share their common vertex.
                let shared = if j == i + 1 { b } else { a };
                let (far_self, far_other) = if j == i + 1 { (a, d) } else { (b, c) };
                let e1 = far_self - shared;
                let e2 = far_other - shared;
                if e1.perp(&e2) == 0.0 && e1.dot(&e2) > 0.0 {
                    return false;
                }
            } else if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Interiors of two simple polygons overlap by more than `tol`: the
/// intersection area exceeds that of a `tol`-deep strip along a quarter of
/// the smaller perimeter. Shared edges and gaps never count.
pub fn interiors_overlap(p: &[Point2], q: &[Point2], tol: f64) -> bool {
    let (plo, phi) = bounds(p);
    let (qlo, qhi) = bounds(q);
    if plo.x >= qhi.x || qlo.x >= phi.x || plo.y >= qhi.y || qlo.y >= phi.y {
        return false;
    }
    let perimeter = |poly: &[Point2]| edges(poly).map(|(a, b)| (b - a).norm()).sum::<f64>();
    let threshold = tol * 0.25 * perimeter(p).min(perimeter(q));
    intersection_area(p, q) > threshold
}

/// Area of the intersection of two simple polygons.
pub fn intersection_area(p: &[Point2], q: &[Point2]) -> f64 {
    let tp = triangulate(p);
    let tq = triangulate(q);
    let mut area = 0.0;
    for a in &tp {
        for b in &tq {
            let clipped = clip_convex(a, b);
            if clipped.len() >= 3 {
                area += signed_area(&clipped);
            }
        }
    }
    area
}

/// Ear-clipping triangulation; triangles come out counter-clockwise.
pub fn triangulate(poly: &[Point2]) -> Vec<[Point2; 3]> {
    let mut v: Vec<Point2> = poly.to_vec();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    let mut tris = Vec::with_capacity(v.len().saturating_sub(2));
    while v.len() > 3 {
        let n = v.len();
        let ear = (0..n).find(|&i| {
            let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
            if orient(a, b, c) <= 0.0 {
                return false;
            }
            !v.iter().enumerate().any(|(k, &p)| {
                k != i
                    && k != (i + n - 1) % n
                    && k != (i + 1) % n
                    && orient(a, b, p) >= 0.0
                    && orient(b, c, p) >= 0.0
                    && orient(c, a, p) >= 0.0
            })
        });
        // Numerically degenerate leftovers: drop the flattest vertex.
        let i = ear.unwrap_or_else(|| {
            (0..n)
                .min_by(|&x, &y| {
                    let f = |i: usize| orient(v[(i + n - 1) % n], v[i], v[(i + 1) % n]).abs();
                    f(x).total_cmp(&f(y))
                })
                .expect("non-empty")
        });
        let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
        if ear.is_some() {
            tris.push([a, b, c]);
        }
        v.remove(i);
    }
    if v.len() == 3 && orient(v[0], v[1], v[2]) > 0.0 {
        tris.push([v[0], v[1], v[2]]);
    }
    tris
}

/// Clip convex CCW `subject` against convex CCW `clip` (Sutherland-Hodgman).
fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = subject.to_vec();
    for (a, b) in edges(clip) {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let dc = orient(a, b, cur);
            let dp = orient(a, b, prev);
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(prev + (cur - prev) * (dp / (dp - dc)));
            }
        }
    }
    out
}
