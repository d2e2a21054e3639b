//! Sequential-impulse row solver over a flat generalized-velocity vector.

use nalgebra::{Matrix3, Vector3};

use crate::crane::JointMatrix;

/// One body's share of a constraint row: `j` is the row Jacobian over
/// `len` consecutive DOFs starting at `offset`, `w = M⁻¹ jᵀ`.
#[derive(Debug, Clone, Copy)]
pub struct Side {
    offset: usize,
    len: usize,
    j: [f64; 8],
    w: [f64; 8],
}

impl Side {
    pub fn crane(j: &[f64; 8], minv: &JointMatrix) -> Self {
        let mut w = [0.0; 8];
        for (r, wr) in w.iter_mut().enumerate() {
            *wr = (0..8).map(|c| minv[(r, c)] * j[c]).sum();
        }
        Self { offset: 0, len: 8, j: *j, w }
    }

    pub fn free(offset: usize, lin: &Vector3<f64>, ang: &Vector3<f64>, inv_mass: f64, inv_inertia: &Matrix3<f64>) -> Self {
        let wa = inv_inertia * ang;
        let mut j = [0.0; 8];
        let mut w = [0.0; 8];
        for k in 0..3 {
            j[k] = lin[k];
            j[k + 3] = ang[k];
            w[k] = lin[k] * inv_mass;
            w[k + 3] = wa[k];
        }
        Self { offset, len: 6, j, w }
    }

    #[inline]
    fn dot(&self, v: &[f64]) -> f64 {
        let s = &v[self.offset..self.offset + self.len];
        s.iter().zip(&self.j[..self.len]).map(|(a, b)| a * b).sum()
    }

    #[inline]
    fn apply(&self, v: &mut [f64], impulse: f64) {
        let s = &mut v[self.offset..self.offset + self.len];
        for (x, w) in s.iter_mut().zip(&self.w[..self.len]) {
            *x += w * impulse;
        }
    }

    fn effective_mass(&self) -> f64 {
        self.j[..self.len].iter().zip(&self.w[..self.len]).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Plain,
    /// Normal row followed by its two tangent rows.
    Contact { friction: f64 },
    Tangent,
}

#[derive(Debug, Clone)]
pub struct Row {
    a: Option<Side>,
    b: Option<Side>,
    target: f64,
    lo: f64,
    hi: f64,
    inv_k: f64,
    kind: Kind,
    pub lambda: f64,
}

impl Row {
    pub fn new(a: Side, b: Option<Side>, target: f64, lo: f64, hi: f64) -> Self {
        Self::new_pair(Some(a), b, target, lo, hi)
    }

    pub fn new_pair(a: Option<Side>, b: Option<Side>, target: f64, lo: f64, hi: f64) -> Self {
        let k = a.map_or(0.0, |s| s.effective_mass()) + b.map_or(0.0, |s| s.effective_mass());
        Self {
            a,
            b,
            target,
            lo,
            hi,
            inv_k: if k > 1e-12 { 1.0 / k } else { 0.0 },
            kind: Kind::Plain,
            lambda: 0.0,
        }
    }

    #[inline]
    fn velocity(&self, v: &[f64]) -> f64 {
        self.a.map_or(0.0, |s| s.dot(v)) + self.b.map_or(0.0, |s| s.dot(v))
    }

    #[inline]
    fn apply(&self, v: &mut [f64], impulse: f64) {
        if let Some(s) = &self.a {
            s.apply(v, impulse);
        }
        if let Some(s) = &self.b {
            s.apply(v, impulse);
        }
    }
}

pub struct Solver {
    pub v: Vec<f64>,
    pub rows: Vec<Row>,
}

impl Solver {
    pub fn new(v: Vec<f64>) -> Self {
        Self { v, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    /// Marks `base` as a contact normal with tangent rows at `base + 1`
    /// and `base + 2`.
    pub fn mark_contact(&mut self, base: usize, friction: f64) {
        self.rows[base].kind = Kind::Contact { friction };
        self.rows[base + 1].kind = Kind::Tangent;
        self.rows[base + 2].kind = Kind::Tangent;
    }

    pub fn warm_start(&mut self) {
        for row in &self.rows {
            if row.lambda != 0.0 {
                row.apply(&mut self.v, row.lambda);
            }
        }
    }

    /// Runs `iterations` sweeps; returns the largest impulse change of
    /// the last sweep.
    pub fn solve(&mut self, iterations: usize) -> f64 {
        let mut residual = 0.0;
        for _ in 0..iterations {
            residual = 0.0f64;
            let n = self.rows.len();
            let mut i = 0;
            while i < n {
                match self.rows[i].kind {
                    Kind::Plain => {
                        residual = residual.max(self.solve_row(i));
                        i += 1;
                    }
                    Kind::Contact { friction } => {
                        residual = residual.max(self.solve_row(i));
                        let limit = friction * self.rows[i].lambda;
                        residual = residual.max(self.solve_friction(i + 1, limit));
                        i += 3;
                    }
                    Kind::Tangent => i += 1,
                }
            }
        }
        residual
    }

    fn solve_row(&mut self, i: usize) -> f64 {
        let row = &self.rows[i];
        let dl = (row.target - row.velocity(&self.v)) * row.inv_k;
        let new = (row.lambda + dl).clamp(row.lo, row.hi);
        let applied = new - row.lambda;
        if applied != 0.0 {
            row.apply(&mut self.v, applied);
            self.rows[i].lambda = new;
        }
        applied.abs()
    }

    /// Tangent pair with the impulse projected onto the friction disk.
    fn solve_friction(&mut self, t: usize, limit: f64) -> f64 {
        let (r1, r2) = (&self.rows[t], &self.rows[t + 1]);
        let d1 = -r1.velocity(&self.v) * r1.inv_k;
        let d2 = -r2.velocity(&self.v) * r2.inv_k;
        let (old1, old2) = (r1.lambda, r2.lambda);
        let (mut l1, mut l2) = (old1 + d1, old2 + d2);
        let mag = (l1 * l1 + l2 * l2).sqrt();
        if mag > limit {
            let s = if mag > 0.0 { limit.max(0.0) / mag } else { 0.0 };
            l1 *= s;
            l2 *= s;
        }
        let (a1, a2) = (l1 - old1, l2 - old2);
        self.rows[t].apply(&mut self.v, a1);
        self.rows[t + 1].apply(&mut self.v, a2);
        self.rows[t].lambda = l1;
        self.rows[t + 1].lambda = l2;
        a1.abs().max(a2.abs())
    }

    /// Position-correction velocities for `(row, bias)` pairs, returned as
    /// a pseudo-velocity vector that does not feed back into `v`.
    pub fn solve_pseudo(&self, rows: &[(usize, f64)], iterations: usize) -> Vec<f64> {
        let mut pv = vec![0.0; self.v.len()];
        if rows.is_empty() {
            return pv;
        }
        let mut lambda = vec![0.0; rows.len()];
        for _ in 0..iterations {
            for (k, &(i, bias)) in rows.iter().enumerate() {
                let row = &self.rows[i];
                let dl = (bias - row.velocity(&pv)) * row.inv_k;
                let new = (lambda[k] + dl).max(0.0);
                let applied = new - lambda[k];
                if applied != 0.0 {
                    row.apply(&mut pv, applied);
                    lambda[k] = new;
                }
            }
        }
        pv
    }
}
