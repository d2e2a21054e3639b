//! Oriented boxes and small 2D polygon helpers.

use nalgebra::{Isometry3, Matrix3, Point3, Vector2, Vector3};

/// Oriented bounding box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vector3<f64>,
    /// Columns are the box's unit axes.
    pub axes: Matrix3<f64>,
    pub half: Vector3<f64>,
}

impl Obb {
    pub fn new(pose: &Isometry3<f64>, half: Vector3<f64>) -> Self {
        Self {
            center: pose.translation.vector,
            axes: *pose.rotation.to_rotation_matrix().matrix(),
            half,
        }
    }

    #[inline]
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.axes.column(i).into_owned()
    }

    pub fn vertices(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (k, v) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if k & 1 == 0 { -1.0 } else { 1.0 },
                if k & 2 == 0 { -1.0 } else { 1.0 },
                if k & 4 == 0 { -1.0 } else { 1.0 },
            );
            *v = self.center + self.axes * s.component_mul(&self.half);
        }
        out
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let ext = self.axes.abs() * self.half;
        (self.center - ext, self.center + ext)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = self.axes.transpose() * (p - self.center);
        (0..3).all(|i| d[i].abs() <= self.half[i])
    }

    /// Highest z at which the vertical line through `(x, y)` meets the
    /// box, if it does.
    pub fn top_at(&self, x: f64, y: f64) -> Option<f64> {
        // slab test for the ray p(t) = (x, y, t), t ∈ ℝ
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        let p = Vector3::new(x, y, 0.0) - self.center;
        for i in 0..3 {
            let a = self.axis(i);
            let o = a.dot(&p);
            let dz = a.z;
            let h = self.half[i];
            if dz.abs() < 1e-12 {
                if o.abs() > h {
                    return None;
                }
            } else {
                let t1 = (-h - o) / dz;
                let t2 = (h - o) / dz;
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                t_min = t_min.max(lo);
                t_max = t_max.min(hi);
                if t_min > t_max {
                    return None;
                }
            }
        }
        Some(t_max)
    }

    /// Horizontal footprint polygon (convex hull of the projected
    /// vertices, counter-clockwise).
    pub fn footprint(&self) -> Vec<Vector2<f64>> {
        let pts: Vec<Vector2<f64>> = self.vertices().iter().map(|v| Vector2::new(v.x, v.y)).collect();
        convex_hull(&pts)
    }
}

pub fn aabb_overlap(a: &(Vector3<f64>, Vector3<f64>), b: &(Vector3<f64>, Vector3<f64>), margin: f64) -> bool {
    (0..3).all(|i| a.0[i] - margin <= b.1[i] && b.0[i] - margin <= a.1[i])
}

pub fn transform_point(iso: &Isometry3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    (iso * Point3::from(*p)).coords
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Monotone-chain convex hull, counter-clockwise, no repeated endpoint.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Shoelace area (positive for counter-clockwise).
pub fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    a / 2.0
}

/// Intersection of two convex counter-clockwise polygons
/// (Sutherland–Hodgman).
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut out);
        let m = input.len();
        for k in 0..m {
            let p = input[k];
            let q = input[(k + 1) % m];
            let dp = cross2(&a, &b, &p);
            let dq = cross2(&a, &b, &q);
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push(p + (q - p) * t);
            }
        }
    }
    out
}

/// Even–odd point-in-polygon test.
pub fn point_in_polygon(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Closest points between segments `p1–q1` and `p2–q2`.
pub fn closest_segment_points(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= 1e-15 && e <= 1e-15 {
        return (*p1, *p2);
    }
    if a <= 1e-15 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-15 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-15 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};

    #[test]
    fn hull_and_area_of_rotated_square() {
        let pose = Isometry3::from_parts(
            Translation3::new(1.0, 2.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.3),
        );
        let b = Obb::new(&pose, Vector3::new(1.0, 0.5, 0.2));
        let fp = b.footprint();
        assert_eq!(fp.len(), 4);
        assert!((polygon_area(&fp) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clip_overlapping_squares() {
        let sq = |cx: f64, cy: f64| {
            vec![
                Vector2::new(cx - 1.0, cy - 1.0),
                Vector2::new(cx + 1.0, cy - 1.0),
                Vector2::new(cx + 1.0, cy + 1.0),
                Vector2::new(cx - 1.0, cy + 1.0),
            ]
        };
        let inter = clip_convex(&sq(0.0, 0.0), &sq(1.0, 0.5));
        assert!((polygon_area(&inter) - 1.5).abs() < 1e-12);
        assert!(clip_convex(&sq(0.0, 0.0), &sq(5.0, 0.0)).len() < 3);
    }

    #[test]
    fn top_of_tilted_box() {
        let pose = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 1.0),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_4),
        );
        let b = Obb::new(&pose, Vector3::new(1.0, 0.1, 0.1));
        let top = b.top_at(0.0, 0.0).unwrap();
        assert!((top - (1.0 + 0.1 * 2f64.sqrt())).abs() < 1e-12);
        assert!(b.top_at(0.0, 0.2).is_none());
        assert!(b.top_at(1.1, 0.0).is_none());
    }

    #[test]
    fn segment_closest_points_crossing() {
        let (a, b) = closest_segment_points(
            &Vector3::new(-1.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, -1.0, 1.0),
            &Vector3::new(0.0, 1.0, 1.0),
        );
        assert!(a.norm() < 1e-12);
        assert!((b - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }
}
