//! Narrow-phase contact generation: box–box by separating axes with face
//! clipping, box–heightfield by sampling box vertices and edges.

use nalgebra::Vector3;

use crate::geometry::{closest_segment_points, Obb};
use crate::terrain::Heightfield;

/// One contact point. `normal` points from the second shape towards the
/// first; `depth` is positive when penetrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub depth: f64,
}

// edge axes must beat the best face axis by this much to be selected
const EDGE_PREFERENCE: f64 = 1e-3;

enum Axis {
    FaceA(usize),
    FaceB(usize),
    Edge(usize, usize),
}

/// Contacts between two boxes, keeping points with depth ≥ −`margin`.
pub fn box_box(a: &Obb, b: &Obb, margin: f64, out: &mut Vec<ContactPoint>) {
    let d = b.center - a.center;
    let mut best_face = f64::NEG_INFINITY;
    let mut best_face_axis = Axis::FaceA(0);
    let mut best_face_n = Vector3::zeros();

    let mut abs_r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            abs_r[i][j] = a.axis(i).dot(&b.axis(j)).abs() + 1e-12;
        }
    }

    for i in 0..3 {
        let l = a.axis(i);
        let rb: f64 = (0..3).map(|j| b.half[j] * abs_r[i][j]).sum();
        let s = d.dot(&l);
        let sep = s.abs() - a.half[i] - rb;
        if sep > margin {
            return;
        }
        if sep > best_face {
            best_face = sep;
            best_face_axis = Axis::FaceA(i);
            best_face_n = if s >= 0.0 { l } else { -l };
        }
    }
    for j in 0..3 {
        let l = b.axis(j);
        let ra: f64 = (0..3).map(|i| a.half[i] * abs_r[i][j]).sum();
        let s = d.dot(&l);
        let sep = s.abs() - ra - b.half[j];
        if sep > margin {
            return;
        }
        if sep > best_face {
            best_face = sep;
            best_face_axis = Axis::FaceB(j);
            best_face_n = if s >= 0.0 { l } else { -l };
        }
    }

    let mut best_edge = f64::NEG_INFINITY;
    let mut best_edge_axis = (0, 0);
    let mut best_edge_n = Vector3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let l = a.axis(i).cross(&b.axis(j));
            let len = l.norm();
            if len < 1e-6 {
                continue;
            }
            let l = l / len;
            let ra: f64 = (0..3).map(|k| a.half[k] * a.axis(k).dot(&l).abs()).sum();
            let rb: f64 = (0..3).map(|k| b.half[k] * b.axis(k).dot(&l).abs()).sum();
            let s = d.dot(&l);
            let sep = s.abs() - ra - rb;
            if sep > margin {
                return;
            }
            if sep > best_edge {
                best_edge = sep;
                best_edge_axis = (i, j);
                best_edge_n = if s >= 0.0 { l } else { -l };
            }
        }
    }

    let (axis, n) = if best_edge > best_face + EDGE_PREFERENCE {
        (Axis::Edge(best_edge_axis.0, best_edge_axis.1), best_edge_n)
    } else {
        (best_face_axis, best_face_n)
    };
    // n points from A towards B
    match axis {
        Axis::FaceA(i) => face_contacts(a, i, b, n, margin, -1.0, out),
        Axis::FaceB(j) => face_contacts(b, j, a, -n, margin, 1.0, out),
        Axis::Edge(i, j) => {
            let mut pa = a.center;
            for k in 0..3 {
                if k != i {
                    let ak = a.axis(k);
                    pa += ak * a.half[k] * n.dot(&ak).signum();
                }
            }
            let mut pb = b.center;
            for k in 0..3 {
                if k != j {
                    let bk = b.axis(k);
                    pb -= bk * b.half[k] * n.dot(&bk).signum();
                }
            }
            let ea = a.axis(i) * a.half[i];
            let eb = b.axis(j) * b.half[j];
            let (ca, cb) = closest_segment_points(&(pa - ea), &(pa + ea), &(pb - eb), &(pb + eb));
            let depth = -best_edge;
            out.push(ContactPoint {
                point: (ca + cb) / 2.0,
                normal: -n,
                depth,
            });
        }
    }
}

/// Clips the incident face of `inc` against the reference face `axis` of
/// `reference`. `n` is the reference face normal (towards `inc`);
/// `normal_sign` maps it to the output convention (second → first shape).
fn face_contacts(
    reference: &Obb,
    axis: usize,
    inc: &Obb,
    n: Vector3<f64>,
    margin: f64,
    normal_sign: f64,
    out: &mut Vec<ContactPoint>,
) {
    // incident face: most anti-parallel to n
    let mut k = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..3 {
        let v = n.dot(&inc.axis(i)).abs();
        if v > best {
            best = v;
            k = i;
        }
    }
    let kn = inc.axis(k);
    let face_n = if n.dot(&kn) > 0.0 { -kn } else { kn };
    let fc = inc.center + face_n * inc.half[k];
    let (u, v) = ((k + 1) % 3, (k + 2) % 3);
    let (au, av) = (inc.axis(u) * inc.half[u], inc.axis(v) * inc.half[v]);
    let mut poly: Vec<Vector3<f64>> = vec![fc + au + av, fc - au + av, fc - au - av, fc + au - av];

    for side in [(axis + 1) % 3, (axis + 2) % 3] {
        let s = reference.axis(side);
        let off = s.dot(&reference.center);
        let h = reference.half[side];
        poly = clip_plane(&poly, s, off + h);
        poly = clip_plane(&poly, -s, -(off - h));
        if poly.is_empty() {
            return;
        }
    }
    let ref_c = reference.center + n * reference.half[axis];
    let start = out.len();
    for p in poly {
        let depth = (ref_c - p).dot(&n);
        if depth >= -margin {
            out.push(ContactPoint {
                point: p + n * (depth / 2.0),
                normal: n * normal_sign,
                depth,
            });
        }
    }
    reduce_manifold(out, start, 4);
}

/// Keeps points `p` of `poly` with `p · normal ≤ offset`.
fn clip_plane(poly: &[Vector3<f64>], normal: Vector3<f64>, offset: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let m = poly.len();
    for i in 0..m {
        let p = poly[i];
        let q = poly[(i + 1) % m];
        let dp = p.dot(&normal) - offset;
        let dq = q.dot(&normal) - offset;
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp <= 0.0) != (dq <= 0.0) {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Reduces `out[start..]` to at most `max` points. Penetrating points are
/// kept first (deepest, the one farthest from it, then points maximizing
/// spread); remaining slots go to the closest speculative points.
pub fn reduce_manifold(out: &mut Vec<ContactPoint>, start: usize, max: usize) {
    let n = out.len() - start;
    if n <= max {
        return;
    }
    let pts: Vec<ContactPoint> = out.drain(start..).collect();
    let touching: Vec<usize> = (0..n).filter(|&i| pts[i].depth >= 0.0).collect();
    let mut chosen = spread_subset(&pts, &touching, max);
    if chosen.len() < max {
        let mut rest: Vec<usize> = (0..n).filter(|i| pts[*i].depth < 0.0).collect();
        rest.sort_by(|&i, &j| pts[j].depth.total_cmp(&pts[i].depth).then(i.cmp(&j)));
        chosen.extend(rest.into_iter().take(max - chosen.len()));
    }
    chosen.sort_unstable();
    out.extend(chosen.into_iter().map(|i| pts[i]));
}

fn spread_subset(pts: &[ContactPoint], candidates: &[usize], max: usize) -> Vec<usize> {
    if candidates.len() <= max {
        return candidates.to_vec();
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(max);
    let deepest = *candidates
        .iter()
        .max_by(|&&i, &&j| pts[i].depth.total_cmp(&pts[j].depth).then(j.cmp(&i)))
        .unwrap();
    chosen.push(deepest);
    while chosen.len() < max {
        let score = |i: usize| -> f64 {
            match chosen.len() {
                1 => (pts[i].point - pts[chosen[0]].point).norm_squared(),
                2 => {
                    let (p0, p1) = (pts[chosen[0]].point, pts[chosen[1]].point);
                    (pts[i].point - p0).cross(&(p1 - p0)).norm_squared()
                }
                _ => chosen
                    .iter()
                    .map(|&c| (pts[i].point - pts[c].point).norm())
                    .fold(f64::INFINITY, f64::min),
            }
        };
        let next = candidates
            .iter()
            .copied()
            .filter(|i| !chosen.contains(i))
            .max_by(|&i, &j| score(i).total_cmp(&score(j)).then(j.cmp(&i)));
        match next {
            Some(i) => chosen.push(i),
            None => break,
        }
    }
    chosen
}

/// Sample points in box-local coordinates: the 8 vertices plus points
/// along each edge no further than `spacing` apart.
pub fn box_samples(half: &Vector3<f64>, spacing: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for k in 0..8 {
        out.push(Vector3::new(
            if k & 1 == 0 { -half.x } else { half.x },
            if k & 2 == 0 { -half.y } else { half.y },
            if k & 4 == 0 { -half.z } else { half.z },
        ));
    }
    for axis in 0..3 {
        let len = 2.0 * half[axis];
        let segments = (len / spacing).ceil().max(1.0) as usize;
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for su in [-1.0, 1.0] {
            for sv in [-1.0, 1.0] {
                for s in 1..segments {
                    let mut p = Vector3::zeros();
                    p[axis] = -half[axis] + len * s as f64 / segments as f64;
                    p[u] = su * half[u];
                    p[v] = sv * half[v];
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Contacts between a box and the terrain surface. `samples` are
/// box-local points (see [`box_samples`]).
pub fn box_heightfield(
    obb: &Obb,
    samples: &[Vector3<f64>],
    terrain: &Heightfield,
    margin: f64,
    max_points: usize,
    out: &mut Vec<ContactPoint>,
) {
    let start = out.len();
    for s in samples {
        let p = obb.center + obb.axes * s;
        let (h, n) = terrain.height_and_normal(p.x, p.y);
        let depth = (h - p.z) * n.z;
        if depth >= -margin {
            out.push(ContactPoint {
                point: p,
                normal: n,
                depth,
            });
        }
    }
    reduce_manifold(out, start, max_points);
}
