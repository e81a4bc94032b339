use super::{HeatmapVolume, KeypointSequence, Layout};
use crate::error::{Error, Result};

/// 2 px at 128 px resolution, scaled with the smaller image side.
pub fn default_sigma(height: usize, width: usize) -> f64 {
    2.0 * height.min(width) as f64 / 128.0
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn check_dims(kp: &KeypointSequence, dims: usize) -> Result<()> {
    if kp.dims() != dims {
        return Err(Error::arg(format!(
            "expected {dims}D keypoints, got {}D",
            kp.dims()
        )));
    }
    Ok(())
}

/// One `height × width` Gaussian map per joint per frame. Invalid joints
/// render as all-zero maps; joints outside the image contribute whatever
/// part of their tail falls inside.
pub fn render2d(
    kp: &KeypointSequence,
    height: usize,
    width: usize,
    sigma: f64,
) -> Result<HeatmapVolume> {
    check_dims(kp, 2)?;
    check_sigma(sigma)?;
    let layout = Layout::Planar {
        frames: kp.frames(),
        channels: kp.joints(),
        height,
        width,
    };
    let denom = 2.0 * sigma * sigma;
    let mut values = vec![0.0; layout.numel()];
    let plane = height * width;
    for f in 0..kp.frames() {
        for k in 0..kp.joints() {
            if !kp.is_valid(f, k) {
                continue;
            }
            let p = kp.point(f, k);
            let (x, y) = (p[0], p[1]);
            let out = &mut values[(f * kp.joints() + k) * plane..][..plane];
            for h in 0..height {
                let dy = h as f64 - y;
                for w in 0..width {
                    let dx = w as f64 - x;
                    out[h * width + w] = (-(dx * dx + dy * dy) / denom).exp();
                }
            }
        }
    }
    HeatmapVolume::new(layout, values, sigma)
}

/// Squared distance from `(px, py)` to the segment `a`–`b`.
fn segment_dist2(px: f64, py: f64, a: &[f64], b: &[f64]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((px - a[0]) * vx + (py - a[1]) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (px - (a[0] + t * vx), py - (a[1] + t * vy));
    dx * dx + dy * dy
}

/// Joint maps followed by one limb map per `(a, b)` joint pair, where a limb
/// map is a Gaussian of the distance to the segment between the two joints.
/// A limb renders as zeros unless both its joints are valid.
pub fn render2d_limbs(
    kp: &KeypointSequence,
    limbs: &[(usize, usize)],
    height: usize,
    width: usize,
    sigma: f64,
) -> Result<HeatmapVolume> {
    let joints = render2d(kp, height, width, sigma)?;
    if let Some(&(a, b)) = limbs.iter().find(|&&(a, b)| a >= kp.joints() || b >= kp.joints()) {
        return Err(Error::arg(format!(
            "limb ({a}, {b}) refers to a joint beyond {}",
            kp.joints()
        )));
    }
    let (k, e) = (kp.joints(), limbs.len());
    let plane = height * width;
    let layout = Layout::Planar {
        frames: kp.frames(),
        channels: k + e,
        height,
        width,
    };
    let denom = 2.0 * sigma * sigma;
    let mut values = vec![0.0; layout.numel()];
    for f in 0..kp.frames() {
        for c in 0..k {
            values[(f * (k + e) + c) * plane..][..plane].copy_from_slice(joints.image(f, c));
        }
        for (li, &(a, b)) in limbs.iter().enumerate() {
            if !(kp.is_valid(f, a) && kp.is_valid(f, b)) {
                continue;
            }
            let (pa, pb) = (kp.point(f, a), kp.point(f, b));
            let out = &mut values[(f * (k + e) + k + li) * plane..][..plane];
            for h in 0..height {
                for w in 0..width {
                    out[h * width + w] = (-segment_dist2(w as f64, h as f64, pa, pb) / denom).exp();
                }
            }
        }
    }
    HeatmapVolume::new(layout, values, sigma)
}

/// One `depth × height × width` Gaussian volume per joint per frame.
pub fn render3d(
    kp: &KeypointSequence,
    depth: usize,
    height: usize,
    width: usize,
    sigma: f64,
) -> Result<HeatmapVolume> {
    check_dims(kp, 3)?;
    check_sigma(sigma)?;
    let layout = Layout::Volume {
        frames: kp.frames(),
        channels: kp.joints(),
        depth,
        height,
        width,
    };
    let denom = 2.0 * sigma * sigma;
    let vol = depth * height * width;
    let mut values = vec![0.0; layout.numel()];
    for f in 0..kp.frames() {
        for k in 0..kp.joints() {
            if !kp.is_valid(f, k) {
                continue;
            }
            let p = kp.point(f, k);
            let (x, y, z) = (p[0], p[1], p[2]);
            let out = &mut values[(f * kp.joints() + k) * vol..][..vol];
            for d in 0..depth {
                let dz = d as f64 - z;
                for h in 0..height {
                    let dy = h as f64 - y;
                    for w in 0..width {
                        let dx = w as f64 - x;
                        out[(d * height + h) * width + w] =
                            (-(dx * dx + dy * dy + dz * dz) / denom).exp();
                    }
                }
            }
        }
    }
    HeatmapVolume::new(layout, values, sigma)
}

/// Max-projects every joint volume onto three planes: XY (max over depth,
/// indexed `[h][w]`), YZ (max over width, `[d][h]`) and XZ (max over height,
/// `[d][w]`). Channels are ordered plane-major: all XY maps, then all YZ,
/// then all XZ. The three planes share extents only for cubic volumes, so
/// `depth == height == width` is required.
pub fn project_triplane(vol: &HeatmapVolume) -> Result<HeatmapVolume> {
    let Layout::Volume {
        frames,
        channels: joints,
        depth,
        height,
        width,
    } = vol.layout()
    else {
        return Err(Error::arg("tri-plane projection needs a 3D volume"));
    };
    if depth != height || height != width {
        return Err(Error::arg(format!(
            "tri-plane projection needs a cubic volume, got {depth}×{height}×{width}"
        )));
    }
    let n = width;
    let layout = Layout::Triplane {
        frames,
        joints,
        height: n,
        width: n,
    };
    let plane = n * n;
    let mut values = vec![0.0f64; layout.numel()];
    for f in 0..frames {
        for k in 0..joints {
            let src = vol.image(f, k);
            let base = f * 3 * joints;
            let (xy, rest) = values[(base + k) * plane..].split_at_mut(plane);
            let yz_start = (joints - 1) * plane;
            let (yz, rest) = rest[yz_start..].split_at_mut(plane);
            let xz = &mut rest[(joints - 1) * plane..][..plane];
            for d in 0..n {
                for h in 0..n {
                    for w in 0..n {
                        let v = src[(d * n + h) * n + w];
                        let cell = &mut xy[h * n + w];
                        *cell = cell.max(v);
                        let cell = &mut yz[d * n + h];
                        *cell = cell.max(v);
                        let cell = &mut xz[d * n + w];
                        *cell = cell.max(v);
                    }
                }
            }
        }
    }
    HeatmapVolume::new(layout, values, vol.sigma())
}
