//! Frozen top-down RGB-D reconstruction of a pile and the grapple-mounted
//! virtual camera that samples it.

use nalgebra::{Isometry3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Obb;
use crate::logs;
use crate::terrain::Heightfield;

pub const FRAME_SIZE: usize = 64;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;
pub const GROUND_COLOUR: [f32; 3] = [0.9, 0.9, 0.8];
pub const S_NEAR: f64 = 3.0;
pub const S_FAR: f64 = 15.0;
pub const Z_FAR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureParams {
    pub extent: f64,
    pub resolution: usize,
}

impl Default for CaptureParams {
    fn default() -> Self {
        Self {
            extent: 16.0,
            resolution: 512,
        }
    }
}

/// Immutable orthographic capture. Row 0 is the +y edge, column 0 the −x
/// edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub extent: f64,
    pub centre: Vector2<f64>,
    pub resolution: usize,
    pub rgb: Vec<[f32; 3]>,
    pub surface_z: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub grey: Vec<f32>,
    pub depth: Vec<f32>,
    pub r_rel: Vector3<f64>,
    pub phi_rel: f64,
    pub extent: f64,
}

pub fn to_greyscale(rgb: [f32; 3]) -> f32 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Side of the rendered square at height `z_rel` above the anchor.
pub fn view_extent(z_rel: f64) -> f64 {
    S_NEAR + (S_FAR - S_NEAR) * (z_rel / Z_FAR).clamp(0.0, 1.0)
}

/// Per-log grey colours: channel-wise N(0.5, 0.1), clipped to 0.5 ± 0.3.
pub fn log_colours<R: Rng>(n: usize, rng: &mut R) -> Vec<[f32; 3]> {
    let normal = Normal::new(0.5f64, 0.1).expect("valid normal");
    (0..n)
        .map(|_| {
            let mut c = [0.0f32; 3];
            for ch in &mut c {
                *ch = normal.sample(rng).clamp(0.2, 0.8) as f32;
            }
            c
        })
        .collect()
}

impl Reconstruction {
    /// Rasterizes terrain and logs seen from straight above.
    pub fn capture(
        terrain: &Heightfield,
        log_poses: &[Isometry3<f64>],
        colours: &[[f32; 3]],
        centre: Vector2<f64>,
        params: &CaptureParams,
    ) -> Self {
        let n = params.resolution;
        let e = params.extent;
        let cell = e / n as f64;
        let mut rgb = vec![GROUND_COLOUR; n * n];
        let mut surface_z = vec![0.0f32; n * n];
        let boxes: Vec<(usize, Obb, (Vector3<f64>, Vector3<f64>))> = log_poses
            .iter()
            .enumerate()
            .flat_map(|(i, p)| logs::world_boxes(p).into_iter().map(move |b| (i, b, b.aabb())))
            .collect();
        for row in 0..n {
            let y = centre.y + e / 2.0 - (row as f64 + 0.5) * cell;
            for col in 0..n {
                let x = centre.x - e / 2.0 + (col as f64 + 0.5) * cell;
                let mut z = terrain.height(x, y);
                let mut colour = GROUND_COLOUR;
                for (i, b, (lo, hi)) in &boxes {
                    if x < lo.x || x > hi.x || y < lo.y || y > hi.y {
                        continue;
                    }
                    if let Some(top) = b.top_at(x, y) {
                        if top > z {
                            z = top;
                            colour = colours[*i];
                        }
                    }
                }
                rgb[row * n + col] = colour;
                surface_z[row * n + col] = z as f32;
            }
        }
        Self {
            extent: e,
            centre,
            resolution: n,
            rgb,
            surface_z,
        }
    }

    /// Nearest cell for a world point, or `None` outside the capture.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let n = self.resolution as f64;
        let fc = (x - (self.centre.x - self.extent / 2.0)) / self.extent * n;
        let fr = ((self.centre.y + self.extent / 2.0) - y) / self.extent * n;
        if fc < 0.0 || fr < 0.0 || fc >= n || fr >= n {
            None
        } else {
            Some((fr as usize, fc as usize))
        }
    }

    fn clamped_cell(&self, x: f64, y: f64) -> usize {
        let n = self.resolution as f64;
        let fc = ((x - (self.centre.x - self.extent / 2.0)) / self.extent * n).clamp(0.0, n - 1.0);
        let fr = (((self.centre.y + self.extent / 2.0) - y) / self.extent * n).clamp(0.0, n - 1.0);
        fr as usize * self.resolution + fc as usize
    }

    /// Colour and surface elevation seen at a world point. Outside the
    /// capture: ground colour, elevation of the nearest edge cell.
    pub fn sample(&self, x: f64, y: f64) -> ([f32; 3], f32) {
        match self.cell_at(x, y) {
            Some((r, c)) => {
                let k = r * self.resolution + c;
                (self.rgb[k], self.surface_z[k])
            }
            None => (GROUND_COLOUR, self.surface_z[self.clamped_cell(x, y)]),
        }
    }

    /// Renders the 64×64 grey and depth frame for a camera at `anchor +
    /// r_rel` with heading `phi_rel`.
    pub fn render(&self, anchor: &Vector3<f64>, r_rel: &Vector3<f64>, phi_rel: f64) -> CameraFrame {
        let ext = view_extent(r_rel.z);
        let cam = anchor + r_rel;
        let (s, c) = phi_rel.sin_cos();
        let mut grey = vec![0.0f32; FRAME_PIXELS];
        let mut depth = vec![0.0f32; FRAME_PIXELS];
        let n = FRAME_SIZE as f64;
        for i in 0..FRAME_SIZE {
            let v = (0.5 - (i as f64 + 0.5) / n) * ext;
            for j in 0..FRAME_SIZE {
                let u = ((j as f64 + 0.5) / n - 0.5) * ext;
                let x = cam.x + c * u - s * v;
                let y = cam.y + s * u + c * v;
                let (rgb, z) = self.sample(x, y);
                let k = i * FRAME_SIZE + j;
                grey[k] = to_greyscale(rgb);
                depth[k] = ((cam.z - z as f64).max(0.0)) as f32;
            }
        }
        CameraFrame {
            grey,
            depth,
            r_rel: *r_rel,
            phi_rel,
            extent: ext,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greyscale_fixed_points() {
        assert_eq!(to_greyscale([0.0; 3]), 0.0);
        assert!((to_greyscale([1.0; 3]) - 1.0).abs() < 1e-6);
        assert!((to_greyscale([0.5; 3]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn extent_endpoints() {
        assert_eq!(view_extent(5.0), 15.0);
        assert_eq!(view_extent(0.0), 3.0);
        assert_eq!(view_extent(2.5), 9.0);
        assert_eq!(view_extent(-1.0), 3.0);
        assert_eq!(view_extent(9.0), 15.0);
    }

    #[test]
    fn outside_samples_fall_back_to_ground() {
        let t = Heightfield::flat(Vector2::new(-4.0, -4.0), 0.125, 65, 65, 0.3);
        let r = Reconstruction::capture(&t, &[], &[], Vector2::zeros(), &CaptureParams { extent: 4.0, resolution: 32 });
        let (c, z) = r.sample(50.0, -50.0);
        assert_eq!(c, GROUND_COLOUR);
        assert!((z - 0.3).abs() < 1e-6);
    }
}
