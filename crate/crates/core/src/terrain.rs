//! Rasterized terrain elevation and its Perlin-noise synthesis.

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Parameters for the fractal Perlin synthesis and the span rescale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    /// Side of the square patch (m).
    pub size: f64,
    pub cell_size: f64,
    pub octaves: u32,
    pub lacunarity: f64,
    pub persistence: f64,
    /// Wavelength of the first octave (m).
    pub base_wavelength: f64,
    pub span_mean: f64,
    pub span_std: f64,
    pub span_min: f64,
    pub span_max: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            size: 8.0,
            cell_size: 0.125,
            octaves: 3,
            lacunarity: 2.0,
            persistence: 0.5,
            base_wavelength: 2.5,
            span_mean: 0.4,
            span_std: 0.12,
            span_min: 0.2,
            span_max: 0.8,
        }
    }
}

/// Regular elevation grid. Row-major, `elevations[iy * nx + ix]`, sample
/// `(ix, iy)` located at `origin + cell_size * (ix, iy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub elevations: Vec<f32>,
    pub seed: u64,
}

impl Heightfield {
    pub fn flat(origin: Vector2<f64>, cell_size: f64, nx: usize, ny: usize, z: f32) -> Self {
        Self {
            origin,
            cell_size,
            nx,
            ny,
            elevations: vec![z; nx * ny],
            seed: 0,
        }
    }

    /// Planar grid `z = z0 + slope · (x, y)`; used for incline fixtures.
    pub fn plane(
        origin: Vector2<f64>,
        cell_size: f64,
        nx: usize,
        ny: usize,
        z0: f64,
        slope: Vector2<f64>,
    ) -> Self {
        let mut elevations = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let p = origin + Vector2::new(ix as f64, iy as f64) * cell_size;
                elevations.push((z0 + slope.dot(&p)) as f32);
            }
        }
        Self {
            origin,
            cell_size,
            nx,
            ny,
            elevations,
            seed: 0,
        }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.elevations[iy * self.nx + ix] as f64
    }

    pub fn width(&self) -> f64 {
        (self.nx - 1) as f64 * self.cell_size
    }

    pub fn depth(&self) -> f64 {
        (self.ny - 1) as f64 * self.cell_size
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.elevations
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z as f64), hi.max(z as f64))
            })
    }

    /// Elevation difference max − min.
    pub fn span(&self) -> f64 {
        let (lo, hi) = self.min_max();
        hi - lo
    }

    /// Locates `(x, y)` in the grid. Points outside are clamped onto the
    /// border, so the surface extends flat beyond the patch.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64, bool) {
        let gx = (x - self.origin.x) / self.cell_size;
        let gy = (y - self.origin.y) / self.cell_size;
        let maxx = (self.nx - 1) as f64;
        let maxy = (self.ny - 1) as f64;
        let outside = gx < 0.0 || gy < 0.0 || gx > maxx || gy > maxy;
        let gx = gx.clamp(0.0, maxx);
        let gy = gy.clamp(0.0, maxy);
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iy = (gy.floor() as usize).min(self.ny - 2);
        (ix, iy, gx - ix as f64, gy - iy as f64, outside)
    }

    /// Elevation on the triangulated surface (each cell split along its
    /// (1,0)–(0,1) diagonal).
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.height_and_normal(x, y).0
    }

    /// Elevation and unit upward surface normal at `(x, y)`.
    pub fn height_and_normal(&self, x: f64, y: f64) -> (f64, Vector3<f64>) {
        let (ix, iy, u, v, outside) = self.locate(x, y);
        let h00 = self.at(ix, iy);
        let h10 = self.at(ix + 1, iy);
        let h01 = self.at(ix, iy + 1);
        let h11 = self.at(ix + 1, iy + 1);
        let (h, dhdu, dhdv) = if u + v <= 1.0 {
            (h00 + u * (h10 - h00) + v * (h01 - h00), h10 - h00, h01 - h00)
        } else {
            (
                h11 + (1.0 - u) * (h01 - h11) + (1.0 - v) * (h10 - h11),
                h11 - h01,
                h11 - h10,
            )
        };
        if outside {
            return (h, Vector3::z());
        }
        let n = Vector3::new(-dhdu / self.cell_size, -dhdv / self.cell_size, 1.0).normalize();
        (h, n)
    }
}

/// Classic 2D gradient noise over a seeded permutation table.
struct Perlin {
    perm: [u8; 512],
}

impl Perlin {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut p: Vec<u8> = (0..=255).collect();
        p.shuffle(rng);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i & 255];
        }
        Self { perm }
    }

    fn fade(t: f64) -> f64 {
        t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    }

    fn grad(hash: u8, x: f64, y: f64) -> f64 {
        match hash & 7 {
            0 => x + y,
            1 => -x + y,
            2 => x - y,
            3 => -x - y,
            4 => x,
            5 => -x,
            6 => y,
            _ => -y,
        }
    }

    fn noise(&self, x: f64, y: f64) -> f64 {
        let xf = x.floor();
        let yf = y.floor();
        let xi = (xf as i64 & 255) as usize;
        let yi = (yf as i64 & 255) as usize;
        let x = x - xf;
        let y = y - yf;
        let u = Self::fade(x);
        let v = Self::fade(y);
        let p = &self.perm;
        let aa = p[p[xi] as usize + yi];
        let ab = p[p[xi] as usize + yi + 1];
        let ba = p[p[xi + 1] as usize + yi];
        let bb = p[p[xi + 1] as usize + yi + 1];
        let l1 = lerp(Self::grad(aa, x, y), Self::grad(ba, x - 1.0, y), u);
        let l2 = lerp(Self::grad(ab, x, y - 1.0), Self::grad(bb, x - 1.0, y - 1.0), u);
        lerp(l1, l2, v)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Synthesizes a square patch centred on the origin. Elevations are
/// rescaled so max − min equals a per-seed span drawn around
/// `span_mean`, then shifted to zero mean.
pub fn gen_terrain(seed: u64, params: &TerrainParams) -> Heightfield {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e44_a1f0_0d5e_ed01);
    let perlin = Perlin::new(&mut rng);
    let offset = Vector2::new(rng.random_range(0.0..64.0), rng.random_range(0.0..64.0));
    let span_dist = Normal::new(params.span_mean, params.span_std).expect("finite std");
    let span = span_dist
        .sample(&mut rng)
        .clamp(params.span_min, params.span_max);

    let n = (params.size / params.cell_size).round() as usize + 1;
    let origin = Vector2::new(-params.size / 2.0, -params.size / 2.0);
    let mut raw = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let p = origin + Vector2::new(ix as f64, iy as f64) * params.cell_size;
            let mut freq = 1.0 / params.base_wavelength;
            let mut amp = 1.0;
            let mut h = 0.0;
            for _ in 0..params.octaves {
                h += amp * perlin.noise(p.x * freq + offset.x, p.y * freq + offset.y);
                freq *= params.lacunarity;
                amp *= params.persistence;
            }
            raw.push(h);
        }
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { span / (hi - lo) } else { 0.0 };
    let scaled: Vec<f64> = raw.iter().map(|h| (h - lo) * scale).collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let elevations = scaled.iter().map(|h| (h - mean) as f32).collect();
    Heightfield {
        origin,
        cell_size: params.cell_size,
        nx: n,
        ny: n,
        elevations,
        seed,
    }
}
