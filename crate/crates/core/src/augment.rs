//! Asymmetric augmentations (y-disparity warp, per-view chromatic change,
//! target-view masking) and the symmetric scale/crop.
//!
//! The left image is the reference view and the right image the target.
//! Asymmetric operations touch the target only, except chromatic changes,
//! which are drawn independently for each view.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::image::{resize_bilinear, DisparityMap, Image};
use crate::math;

/// Rigid in-plane miscalibration of the target view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YDisparity {
    /// Rotation about the image centre, in degrees.
    pub rotation_deg: f64,
    /// Vertical translation in pixels (positive moves content down).
    pub ty: f64,
}

impl YDisparity {
    /// Where the content at `(x, y)` ends up: rotation about `centre`, then
    /// the y-translation.
    pub fn apply_point(&self, centre: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let (s, c) = math::sincos(self.rotation_deg.to_radians());
        let (dx, dy) = (p.0 - centre.0, p.1 - centre.1);
        (
            centre.0 + c * dx - s * dy,
            centre.1 + s * dx + c * dy + self.ty,
        )
    }

    fn inverse_point(&self, centre: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let (s, c) = math::sincos(self.rotation_deg.to_radians());
        let (dx, dy) = (p.0 - centre.0, p.1 - centre.1 - self.ty);
        (centre.0 + c * dx + s * dy, centre.1 - s * dx + c * dy)
    }
}

/// Brightness, gamma and contrast applied as
/// `clamp01(((b·v)^g − 0.5)·c + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromatic {
    pub brightness: f64,
    pub gamma: f64,
    pub contrast: f64,
}

impl Chromatic {
    pub const IDENTITY: Chromatic = Chromatic {
        brightness: 1.0,
        gamma: 1.0,
        contrast: 1.0,
    };
}

/// Axis-aligned rectangle in pixels; may extend past the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    /// Intersection with a `width × height` image as `(x0, y0, x1, y1)`
    /// half-open bounds, or `None` when empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i64);
        let y1 = (self.y + self.h).min(height as i64);
        (x1 > x0 && y1 > y0).then(|| (x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// Symmetric rescale followed by a crop applied to both views and the
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleCrop {
    pub scale: f64,
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_w: usize,
    pub crop_h: usize,
}

/// A fully drawn augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub ydisp: Option<YDisparity>,
    pub chromatic_left: Option<Chromatic>,
    pub chromatic_right: Option<Chromatic>,
    pub mask: Option<Rect>,
    pub symmetric: Option<ScaleCrop>,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn identity(seed: u64) -> Self {
        Self {
            ydisp: None,
            chromatic_left: None,
            chromatic_right: None,
            mask: None,
            symmetric: None,
            seed,
        }
    }
}

/// Rotates (about the centre) and then translates the target view.
/// Bilinear sampling with clamp-to-edge; pixels mapped from outside the
/// source keep the clamped edge value.
pub fn ydisparity_warp(target: &Image, rotation_deg: f64, ty: f64) -> Result<Image> {
    if !(rotation_deg.is_finite() && ty.is_finite()) {
        bail!(Domain, "warp parameters must be finite");
    }
    if rotation_deg == 0.0 && ty == 0.0 {
        return Ok(target.clone());
    }
    let t = YDisparity { rotation_deg, ty };
    let (w, h) = (target.width(), target.height());
    let centre = ((w as f64 - 1.0) * 0.5, (h as f64 - 1.0) * 0.5);
    let mut out = target.clone();
    for c in 0..target.channels() {
        let src = target.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = t.inverse_point(centre, (x as f64, y as f64));
                dst[y * w + x] = crate::image::sample_bilinear(src, w, h, sx as f32, sy as f32);
            }
        }
    }
    Ok(out)
}

/// Applies brightness, then gamma, then contrast around 0.5, and clamps to
/// `[0, 1]`.
pub fn asymmetric_chromatic(img: &Image, brightness: f64, gamma: f64, contrast: f64) -> Result<Image> {
    if !(brightness > 0.0 && gamma > 0.0 && contrast > 0.0) {
        bail!(Domain, "brightness, gamma and contrast must be > 0");
    }
    if brightness == 1.0 && gamma == 1.0 && contrast == 1.0 {
        return Ok(img.clone());
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        let base = (brightness * *v as f64).max(0.0);
        let g = if gamma == 1.0 { base } else { libm::pow(base, gamma) };
        *v = ((g - 0.5) * contrast + 0.5).clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Fills the clipped rectangle with the per-channel mean of the whole
/// original image.
pub fn asymmetric_mask(target: &Image, rect: Rect) -> Result<Image> {
    let Some((x0, y0, x1, y1)) = rect.clip(target.width(), target.height()) else {
        bail!(Domain, "mask {rect:?} does not intersect the image");
    };
    let means = target.channel_means();
    let w = target.width();
    let mut out = target.clone();
    for (c, &m) in means.iter().enumerate() {
        let p = out.plane_mut(c);
        for y in y0..y1 {
            p[y * w + x0..y * w + x1].fill(m);
        }
    }
    Ok(out)
}

/// Rescales both views and the ground truth by `scale`, multiplies the
/// disparities by the realised horizontal factor, and crops all three.
pub fn symmetric_scale_crop(
    left: &Image,
    right: &Image,
    gt: &DisparityMap,
    sc: ScaleCrop,
) -> Result<(Image, Image, DisparityMap)> {
    if !(sc.scale.is_finite() && sc.scale > 0.0) {
        bail!(Domain, "scale must be finite and > 0");
    }
    if left.width() != right.width()
        || left.height() != right.height()
        || left.width() != gt.width()
        || left.height() != gt.height()
    {
        bail!(Shape, "views and ground truth must share dimensions");
    }
    let sw = math::round(left.width() as f64 * sc.scale).max(1.0) as usize;
    let sh = math::round(left.height() as f64 * sc.scale).max(1.0) as usize;
    if sc.crop_w == 0 || sc.crop_h == 0 || sc.crop_x + sc.crop_w > sw || sc.crop_y + sc.crop_h > sh {
        bail!(
            Domain,
            "crop {}x{} at ({}, {}) exceeds the scaled {sw}x{sh} image",
            sc.crop_w,
            sc.crop_h,
            sc.crop_x,
            sc.crop_y
        );
    }
    let l = resize_bilinear(left, sw, sh)?;
    let r = resize_bilinear(right, sw, sh)?;
    let fx = sw as f32 / left.width() as f32;
    let g = resize_nearest(gt, sw, sh).scaled(fx);
    Ok((
        crop_image(&l, sc)?,
        crop_image(&r, sc)?,
        crop_map(&g, sc),
    ))
}

fn resize_nearest(m: &DisparityMap, w: usize, h: usize) -> DisparityMap {
    if w == m.width() && h == m.height() {
        return m.clone();
    }
    let sx = m.width() as f64 / w as f64;
    let sy = m.height() as f64 / h as f64;
    let mut out = DisparityMap::new_invalid(w, h);
    for y in 0..h {
        let yy = (((y as f64 + 0.5) * sy) as usize).min(m.height() - 1);
        for x in 0..w {
            let xx = (((x as f64 + 0.5) * sx) as usize).min(m.width() - 1);
            out.set(x, y, m.get(xx, yy));
        }
    }
    out
}

fn crop_image(img: &Image, sc: ScaleCrop) -> Result<Image> {
    if sc.crop_x == 0 && sc.crop_y == 0 && sc.crop_w == img.width() && sc.crop_h == img.height() {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(sc.crop_w * sc.crop_h * img.channels());
    for c in 0..img.channels() {
        let p = img.plane(c);
        for y in sc.crop_y..sc.crop_y + sc.crop_h {
            let row = y * img.width();
            data.extend_from_slice(&p[row + sc.crop_x..row + sc.crop_x + sc.crop_w]);
        }
    }
    Image::new(sc.crop_w, sc.crop_h, img.channels(), data)
}

fn crop_map(m: &DisparityMap, sc: ScaleCrop) -> DisparityMap {
    let mut out = DisparityMap::new_invalid(sc.crop_w, sc.crop_h);
    for y in 0..sc.crop_h {
        for x in 0..sc.crop_w {
            out.set(x, y, m.get(sc.crop_x + x, sc.crop_y + y));
        }
    }
    out
}

/// Sampling ranges and gate probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub ydisp_prob: f64,
    pub rotation_deg: (f64, f64),
    pub ty: (f64, f64),
    pub chromatic: bool,
    pub brightness: (f64, f64),
    pub gamma: (f64, f64),
    pub contrast: (f64, f64),
    pub mask_prob: f64,
    pub mask_w: (i64, i64),
    pub mask_h: (i64, i64),
    /// Symmetric scale range; `None` disables scale/crop.
    pub scale: Option<(f64, f64)>,
    /// Crop `(height, width)`, shrunk to the scaled image when larger.
    pub crop: (usize, usize),
}

impl AugmentConfig {
    /// Training ranges.
    pub fn training() -> Self {
        Self {
            ydisp_prob: 0.5,
            rotation_deg: (0.0, 0.1),
            ty: (0.0, 2.0),
            chromatic: true,
            brightness: (0.5, 2.0),
            gamma: (0.8, 1.2),
            contrast: (0.8, 1.2),
            mask_prob: 0.5,
            mask_w: (50, 150),
            mask_h: (50, 150),
            scale: None,
            crop: (576, 768),
        }
    }

    /// Wider miscalibration used for robustness sweeps.
    pub fn sweep() -> Self {
        Self {
            rotation_deg: (0.0, 0.4),
            ty: (0.0, 4.0),
            ..Self::training()
        }
    }

    /// Draws nothing; applying the result is a no-op.
    pub fn identity() -> Self {
        Self {
            ydisp_prob: 0.0,
            chromatic: false,
            mask_prob: 0.0,
            scale: None,
            ..Self::training()
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws an augmentation for a `width × height` pair. Deterministic in
/// `seed`.
pub fn sample_spec(seed: u64, cfg: &AugmentConfig, width: usize, height: usize) -> AugmentationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = AugmentationSpec::identity(seed);
    // Every draw happens regardless of the gates so that the stream layout
    // does not depend on earlier outcomes.
    let ydisp_on = rng.random_bool(cfg.ydisp_prob.clamp(0.0, 1.0));
    let yd = YDisparity {
        rotation_deg: uniform(&mut rng, cfg.rotation_deg),
        ty: uniform(&mut rng, cfg.ty),
    };
    let mut chroma = || Chromatic {
        brightness: uniform(&mut rng, cfg.brightness),
        gamma: uniform(&mut rng, cfg.gamma),
        contrast: uniform(&mut rng, cfg.contrast),
    };
    let cl = chroma();
    let cr = chroma();
    let mask_on = rng.random_bool(cfg.mask_prob.clamp(0.0, 1.0));
    let mw = rng.random_range(cfg.mask_w.0..=cfg.mask_w.1);
    let mh = rng.random_range(cfg.mask_h.0..=cfg.mask_h.1);
    let mx = rng.random_range(0..=(width as i64 - mw).max(0));
    let my = rng.random_range(0..=(height as i64 - mh).max(0));
    let scale = cfg.scale.map(|r| uniform(&mut rng, r));
    let u_crop: (f64, f64) = (rng.random(), rng.random());

    if ydisp_on {
        spec.ydisp = Some(yd);
    }
    if cfg.chromatic {
        spec.chromatic_left = Some(cl);
        spec.chromatic_right = Some(cr);
    }
    if mask_on {
        spec.mask = Some(Rect {
            x: mx,
            y: my,
            w: mw,
            h: mh,
        });
    }
    if let Some(s) = scale {
        let sw = math::round(width as f64 * s).max(1.0) as usize;
        let sh = math::round(height as f64 * s).max(1.0) as usize;
        let crop_h = cfg.crop.0.min(sh);
        let crop_w = cfg.crop.1.min(sw);
        spec.symmetric = Some(ScaleCrop {
            scale: s,
            crop_x: (u_crop.0 * (sw - crop_w + 1) as f64) as usize,
            crop_y: (u_crop.1 * (sh - crop_h + 1) as f64) as usize,
            crop_w,
            crop_h,
        });
    }
    spec
}

/// Applies a spec: symmetric scale/crop, per-view chromatic change, then the
/// target-view warp and mask.
pub fn apply_spec(
    left: &Image,
    right: &Image,
    gt: Option<&DisparityMap>,
    spec: &AugmentationSpec,
) -> Result<(Image, Image, Option<DisparityMap>)> {
    let (mut l, mut r, mut g) = (left.clone(), right.clone(), gt.cloned());
    if let Some(sc) = spec.symmetric {
        let base = g
            .clone()
            .unwrap_or_else(|| DisparityMap::new_invalid(left.width(), left.height()));
        let (a, b, c) = symmetric_scale_crop(&l, &r, &base, sc)?;
        l = a;
        r = b;
        g = g.map(|_| c);
    }
    if let Some(c) = spec.chromatic_left {
        l = asymmetric_chromatic(&l, c.brightness, c.gamma, c.contrast)?;
    }
    if let Some(c) = spec.chromatic_right {
        r = asymmetric_chromatic(&r, c.brightness, c.gamma, c.contrast)?;
    }
    if let Some(y) = spec.ydisp {
        r = ydisparity_warp(&r, y.rotation_deg, y.ty)?;
    }
    if let Some(rect) = spec.mask {
        if rect.clip(r.width(), r.height()).is_some() {
            r = asymmetric_mask(&r, rect)?;
        }
    }
    Ok((l, r, g))
}
