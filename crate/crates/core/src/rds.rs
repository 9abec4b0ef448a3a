//! Random-dot stereograms with exact ground truth.
//!
//! A noise texture is drawn in right-view coordinates, on a strip that
//! extends past the left image border so every left pixel has texture. The
//! right image is the in-image part of the strip and the left image samples
//! it at `x − d(x, y)` with linear interpolation, so sub-pixel disparities
//! are exact. Ground truth is invalid where the source column lies outside
//! the right image or where a nearer surface hides the point in the right
//! view.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::image::{DisparityMap, Image};
use crate::math;

/// Baseline in metres of the reference rig used by [`SceneKind::TwoPlane`].
pub const RIG_BASELINE: f64 = 0.54;
/// Focal length in pixels of the reference rig.
pub const RIG_FOCAL: f64 = 3578.0;

/// Shape of the ground-truth disparity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    /// `d(x, y) = d0`.
    Constant { d0: f64 },
    /// `d(x, y) = a·x + b·y + c`.
    Plane { a: f64, b: f64, c: f64 },
    /// A fronto-parallel rectangle covering the central half of each axis
    /// at `near_m` metres in front of a background at `far_m` metres.
    TwoPlane {
        near_m: f64,
        far_m: f64,
        baseline: f64,
        focal: f64,
    },
    /// `far` left of column `edge`, `near` from it on.
    Step { far: f64, near: f64, edge: usize },
}

impl SceneKind {
    /// The two-plane scene at 10 m and 100 m on the reference rig.
    pub fn two_plane_default() -> Self {
        SceneKind::TwoPlane {
            near_m: 10.0,
            far_m: 100.0,
            baseline: RIG_BASELINE,
            focal: RIG_FOCAL,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Constant { .. } => "constant",
            SceneKind::Plane { .. } => "plane",
            SceneKind::TwoPlane { .. } => "two-plane",
            SceneKind::Step { .. } => "step",
        }
    }

    /// Disparity at pixel `(x, y)` of a `width × height` left view.
    pub fn disparity(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        match *self {
            SceneKind::Constant { d0 } => d0,
            SceneKind::Plane { a, b, c } => a * x as f64 + b * y as f64 + c,
            SceneKind::TwoPlane {
                near_m,
                far_m,
                baseline,
                focal,
            } => {
                let inside = (width / 4..width - width / 4).contains(&x)
                    && (height / 4..height - height / 4).contains(&y);
                baseline * focal / if inside { near_m } else { far_m }
            }
            SceneKind::Step { far, near, edge } => {
                if x < edge {
                    far
                } else {
                    near
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SceneKind::Constant { d0 } => d0.is_finite(),
            SceneKind::Plane { a, b, c } => a.is_finite() && b.is_finite() && c.is_finite(),
            SceneKind::TwoPlane {
                near_m,
                far_m,
                baseline,
                focal,
            } => near_m > 0.0 && far_m > 0.0 && baseline > 0.0 && focal > 0.0 && far_m.is_finite(),
            SceneKind::Step { far, near, .. } => far.is_finite() && near.is_finite(),
        };
        if !ok {
            bail!(Domain, "invalid scene parameters {self:?}");
        }
        Ok(())
    }
}

/// Everything needed to regenerate a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Dot sizes `1, 2, 4, …, 2^(octaves−1)` pixels are summed with equal
    /// weight, so every pyramid level sees texture. One octave is a plain
    /// one-pixel random-dot pattern.
    pub octaves: usize,
    /// 3×3 box passes applied to the noise.
    pub smoothing: usize,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize, seed: u64) -> Self {
        Self {
            kind,
            width,
            height,
            seed,
            octaves: 7,
            smoothing: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub left: Image,
    pub right: Image,
    pub gt: DisparityMap,
    pub spec: SceneSpec,
}

impl SyntheticScene {
    /// Ground truth with a `margin`-pixel frame removed.
    pub fn interior_gt(&self, margin: usize) -> DisparityMap {
        interior(&self.gt, margin)
    }
}

/// Invalidates every pixel closer than `margin` to a border.
pub fn interior(gt: &DisparityMap, margin: usize) -> DisparityMap {
    let (w, h) = (gt.width(), gt.height());
    let keep: Vec<bool> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            x >= margin && y >= margin && x + margin < w && y + margin < h
        })
        .collect();
    gt.masked(&keep)
}

/// Linear interpolation along a row at column `x` (in `[0, w−1]`).
fn lerp_row(row: &[f32], x: f64) -> f64 {
    let x0 = math::floor(x);
    let i = x0 as usize;
    let t = x - x0;
    let a = row[i] as f64;
    if t == 0.0 || i + 1 >= row.len() {
        return a;
    }
    a + t * (row[i + 1] as f64 - a)
}

fn box3(data: &mut [f32], w: usize, h: usize) {
    let mut tmp = vec![0.0f32; data.len()];
    for y in 0..h {
        let r = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let l = r[x.saturating_sub(1)];
            let c = r[x];
            let rr = r[(x + 1).min(w - 1)];
            tmp[y * w + x] = (l + c + rr) / 3.0;
        }
    }
    for y in 0..h {
        let (u, d) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            data[y * w + x] = (tmp[u * w + x] + tmp[y * w + x] + tmp[d * w + x]) / 3.0;
        }
    }
}

/// Sum of uniform dot patterns with dot sizes `1, 2, …, 2^(octaves−1)`,
/// each bilinearly interpolated between dot centres, scaled to `[0, 1]`.
fn octave_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, octaves: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; w * h];
    for o in 0..octaves {
        let cell = 1usize << o;
        let gw = w / cell + 2;
        let gh = h / cell + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        let inv = 1.0 / cell as f64;
        for y in 0..h {
            let fy = y as f64 * inv;
            let y0 = fy as usize;
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = x as f64 * inv;
                let x0 = fx as usize;
                let tx = fx - x0 as f64;
                let g = |xx: usize, yy: usize| grid[yy * gw + xx];
                let top = g(x0, y0) + tx * (g(x0 + 1, y0) - g(x0, y0));
                let bot = g(x0, y0 + 1) + tx * (g(x0 + 1, y0 + 1) - g(x0, y0 + 1));
                acc[y * w + x] += top + ty * (bot - top);
            }
        }
    }
    let k = 1.0 / octaves as f64;
    acc.into_iter().map(|v| (v * k) as f32).collect()
}

/// Synthesises the scene described by `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    let (w, h) = (spec.width, spec.height);
    if w < 4 || h < 1 {
        bail!(Shape, "scene must be at least 4x1, got {w}x{h}");
    }
    spec.kind.validate()?;
    let mut disp = vec![0.0f64; w * h];
    let mut d_max = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let d = spec.kind.disparity(x, y, w, h);
            if d < 0.0 {
                bail!(Domain, "negative disparity {d} at ({x}, {y})");
            }
            d_max = d_max.max(d);
            disp[y * w + x] = d;
        }
    }
    if d_max * 4.0 >= w as f64 {
        bail!(
            Domain,
            "maximum disparity {d_max} must stay below a quarter of the width {w}"
        );
    }

    // Texture strip in right-view columns [-margin, w).
    let margin = math::ceil(d_max) as usize + 1;
    let tw = w + margin;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tex = octave_noise(&mut rng, tw, h, spec.octaves.max(1));
    for _ in 0..spec.smoothing {
        box3(&mut tex, tw, h);
    }

    let mut right = vec![0.0f32; w * h];
    for y in 0..h {
        right[y * w..(y + 1) * w].copy_from_slice(&tex[y * tw + margin..(y + 1) * tw]);
    }
    let mut left = vec![0.0f32; w * h];
    let mut gt = DisparityMap::new_invalid(w, h);
    for y in 0..h {
        let row = &tex[y * tw..(y + 1) * tw];
        let drow = &disp[y * w..(y + 1) * w];
        // Smallest right-view column reached by any pixel to the right.
        let mut reach = f64::INFINITY;
        for x in (0..w).rev() {
            let d = drow[x];
            let src = x as f64 - d;
            left[y * w + x] = lerp_row(row, src + margin as f64) as f32;
            let visible = src >= 0.0 && reach > src;
            if visible {
                gt.set(x, y, Some(d as f32));
            }
            reach = reach.min(src);
        }
    }
    Ok(SyntheticScene {
        left: Image::new(w, h, 1, left)?,
        right: Image::new(w, h, 1, right)?,
        gt,
        spec: *spec,
    })
}

/// A deterministic mix of constant and planar scenes, `n` of them, with
/// disparities inside `[d_lo, d_hi]`.
pub fn mixed_suite(n: usize, width: usize, height: usize, d_lo: f64, d_hi: f64, seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s = rng.random::<u64>();
            let kind = if i % 2 == 0 {
                SceneKind::Constant {
                    d0: rng.random_range(d_lo..=d_hi),
                }
            } else {
                // Endpoints of the plane along x and y stay in range.
                let span = d_hi - d_lo;
                let c = rng.random_range(d_lo..=d_lo + 0.5 * span);
                let gx = rng.random_range(0.0..=0.3 * span);
                let gy = rng.random_range(0.0..=0.2 * span);
                SceneKind::Plane {
                    a: gx / width as f64,
                    b: gy / height as f64,
                    c,
                }
            };
            SceneSpec::new(kind, width, height, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scene_is_a_shift() {
        let s = generate(&SceneSpec::new(SceneKind::Constant { d0: 16.0 }, 128, 32, 7)).unwrap();
        for y in 0..32 {
            for x in 16..128 {
                assert_eq!(s.left.get(0, x, y), s.right.get(0, x - 16, y));
                assert_eq!(s.gt.get(x, y), Some(16.0));
            }
            for x in 0..16 {
                assert_eq!(s.gt.get(x, y), None);
            }
        }
    }

    #[test]
    fn flat_plane_matches_constant() {
        let c = generate(&SceneSpec::new(SceneKind::Constant { d0: 9.5 }, 96, 24, 3)).unwrap();
        let p = generate(&SceneSpec::new(SceneKind::Plane { a: 0.0, b: 0.0, c: 9.5 }, 96, 24, 3)).unwrap();
        assert_eq!(c.left, p.left);
        assert_eq!(c.right, p.right);
        assert_eq!(c.gt, p.gt);
    }

    #[test]
    fn two_plane_disparities() {
        let s = generate(&SceneSpec::new(SceneKind::two_plane_default(), 1024, 64, 1)).unwrap();
        let near = s.gt.get(512, 32).unwrap();
        let far = s.gt.get(1000, 2).unwrap();
        assert!((near - 193.212).abs() < 0.01, "{near}");
        assert!((far - 19.3212).abs() < 0.001, "{far}");
    }

    #[test]
    fn step_occludes_the_far_side() {
        let kind = SceneKind::Step { far: 4.0, near: 12.0, edge: 60 };
        let s = generate(&SceneSpec::new(kind, 128, 4, 5)).unwrap();
        // Far pixels projecting at or right of the near edge's projection.
        for x in 52..60 {
            assert_eq!(s.gt.get(x, 0), None, "x={x}");
        }
        assert_eq!(s.gt.get(51, 0), Some(4.0));
        assert_eq!(s.gt.get(60, 0), Some(12.0));
    }

    #[test]
    fn large_disparity_is_rejected() {
        let spec = SceneSpec::new(SceneKind::Constant { d0: 40.0 }, 128, 8, 0);
        assert!(generate(&spec).is_err());
        let spec = SceneSpec::new(SceneKind::Constant { d0: -1.0 }, 128, 8, 0);
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn interior_frame() {
        let g = interior(&DisparityMap::constant(10, 10, 1.0), 2);
        assert_eq!(g.valid_count(), 36);
    }

    #[test]
    fn subpixel_warp_is_consistent() {
        let kind = SceneKind::Plane { a: 0.013, b: 0.021, c: 5.3 };
        let s = generate(&SceneSpec::new(kind, 160, 40, 11)).unwrap();
        let w = 160;
        for y in 0..40 {
            let row = &s.right.plane(0)[y * w..(y + 1) * w];
            for x in 0..w {
                if let Some(d) = s.gt.get(x, y) {
                    let want = s.left.get(0, x, y) as f64;
                    let src = x as f64 - s.spec.kind.disparity(x, y, w, 40);
                    assert!((lerp_row(row, src) - want).abs() < 1e-6);
                    assert!((d as f64 - s.spec.kind.disparity(x, y, w, 40)).abs() < 1e-5);
                }
            }
        }
    }
}
