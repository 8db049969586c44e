//! Benchmark data generation: seeded image degradations and the synthetic
//! sinusoidal-warp sequence with exact ground-truth flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

pub const OCCLUSION_RADIUS: f64 = 20.0;
pub const GAUSSIAN_SIGMA: f64 = 0.2;
pub const SALT_PEPPER_DENSITY: f64 = 0.10;

/// Kind of sequence degradation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradeKind {
    Occlusion,
    Gaussian,
    SaltPepper,
}

/// Centers of the two occluding discs for a frame: both orbit the frame
/// center at radius 0.3*min(W,H), a half-turn apart, advancing by
/// 2*pi/frame_count per frame.
pub fn occluder_centers(
    width: usize,
    height: usize,
    frame_idx: usize,
    frame_count: usize,
) -> [(f64, f64); 2] {
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    let orbit = 0.3 * width.min(height) as f64;
    let angle = std::f64::consts::TAU * frame_idx as f64 / frame_count.max(1) as f64;
    [
        (cx + orbit * angle.cos(), cy + orbit * angle.sin()),
        (cx - orbit * angle.cos(), cy - orbit * angle.sin()),
    ]
}

/// Black out two radius-20 discs orbiting the frame center.
pub fn degrade_occlusion(img: &Image, frame_idx: usize, frame_count: usize) -> Image {
    let centers = occluder_centers(img.width(), img.height(), frame_idx, frame_count);
    let r2 = OCCLUSION_RADIUS * OCCLUSION_RADIUS;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let inside = centers.iter().any(|(cx, cy)| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            dx * dx + dy * dy <= r2
        });
        if inside {
            0.0
        } else {
            img.get(x, y)
        }
    })
}

/// Additive Gaussian noise with sigma relative to the [0,1] intensity range,
/// clamped back into range.
pub fn degrade_gaussian(img: &Image, rng: &mut ChaCha8Rng) -> Image {
    let mut out = img.clone();
    for v in out.data_mut() {
        // Box-Muller from two uniforms keeps the rng dependency surface small
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        *v = (*v + GAUSSIAN_SIGMA * z).clamp(0.0, 1.0);
    }
    out
}

/// Salt & pepper noise at 10% density: affected pixels become 0 or 1 with
/// equal probability.
pub fn degrade_salt_pepper(img: &Image, rng: &mut ChaCha8Rng) -> Image {
    let mut out = img.clone();
    for v in out.data_mut() {
        if rng.gen_bool(SALT_PEPPER_DENSITY) {
            *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Apply a degradation to one frame of a sequence, deterministically seeded
/// per (seed, frame).
pub fn degrade_frame(
    img: &Image,
    kind: DegradeKind,
    seed: u64,
    frame_idx: usize,
    frame_count: usize,
) -> Image {
    match kind {
        DegradeKind::Occlusion => degrade_occlusion(img, frame_idx, frame_count),
        DegradeKind::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (frame_idx as u64).wrapping_mul(0x9e3779b97f4a7c15));
            degrade_gaussian(img, &mut rng)
        }
        DegradeKind::SaltPepper => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (frame_idx as u64).wrapping_mul(0x9e3779b97f4a7c15));
            degrade_salt_pepper(img, &mut rng)
        }
    }
}

/// Band-limited analytic texture: a seeded sum of sinusoids with
/// wavelengths in [8, 64] px, normalized into [0.1, 0.9]. Evaluable at any
/// real coordinate, which keeps the warped frames exact.
pub struct BandLimitedTexture {
    waves: Vec<(f64, f64, f64, f64)>, // (kx, ky, phase, amplitude)
}

impl BandLimitedTexture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = 24;
        let mut raw: Vec<(f64, f64, f64, f64)> = (0..count)
            .map(|_| {
                let wavelength = rng.gen_range(8.0..64.0);
                let dir = rng.gen_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                let amp = rng.gen_range(0.3..1.0);
                (k * dir.cos(), k * dir.sin(), rng.gen_range(0.0..std::f64::consts::TAU), amp)
            })
            .collect();
        let total: f64 = raw.iter().map(|w| w.3).sum();
        for w in &mut raw {
            w.3 *= 0.4 / total;
        }
        BandLimitedTexture { waves: raw }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.5;
        for (kx, ky, phase, amp) in &self.waves {
            acc += amp * (kx * x + ky * y + phase).sin();
        }
        acc
    }

    pub fn rasterize(&self, width: usize, height: usize) -> Image {
        Image::from_fn(width, height, |x, y| self.eval(x as f64, y as f64))
    }
}

/// Seeded band-limited noise image, useful as a generic solver test texture.
pub fn band_limited_noise(width: usize, height: usize, seed: u64) -> Image {
    BandLimitedTexture::new(seed).rasterize(width, height)
}

/// The smooth sinusoidal displacement field of the synthetic benchmark; the
/// maximum magnitude over the pixel grid equals `amplitude` exactly (the
/// peak lands on an integer pixel).
pub fn sinusoidal_displacement(width: usize, height: usize, amplitude: f64) -> FlowField {
    let quarter = (width.min(height) / 8).max(1) as f64;
    let wavelength = 4.0 * quarter;
    let k = std::f64::consts::TAU / wavelength;
    let a = amplitude / 2.0f64.sqrt();
    FlowField::from_fn(width, height, |x, y| {
        (a * (k * y as f64).sin(), a * (k * x as f64).sin())
    })
}

/// Synthetic benchmark: `frames` images, the last being the undeformed
/// reference texture, each earlier frame warped by a scaled copy of the
/// sinusoidal field. Ground-truth flow for frame j maps it onto the
/// reference frame and is exact by construction.
pub struct SynthSequence {
    pub frames: Vec<Image>,
    /// Ground-truth flow from frame j to the last (reference) frame, for
    /// j = 0..frames-1; the last entry is the zero field.
    pub gt_flows: Vec<FlowField>,
}

pub fn synth_sequence(
    width: usize,
    height: usize,
    amplitude: f64,
    frames: usize,
    seed: u64,
) -> Result<SynthSequence> {
    if width < 64 || height < 64 {
        return Err(Error::Config("synthetic frames must be at least 64x64".into()));
    }
    if frames < 2 {
        return Err(Error::Config("need at least 2 frames".into()));
    }
    if amplitude < 0.0 || amplitude >= width.min(height) as f64 / 4.0 {
        return Err(Error::Config(format!(
            "warp amplitude {amplitude} must be in [0, min(W,H)/4)"
        )));
    }
    let tex = BandLimitedTexture::new(seed);
    let base = sinusoidal_displacement(width, height, amplitude);
    let mut out = SynthSequence { frames: Vec::new(), gt_flows: Vec::new() };
    for j in 0..frames {
        let scale = 1.0 - j as f64 / (frames - 1) as f64;
        let frame = Image::from_fn(width, height, |x, y| {
            tex.eval(x as f64 + scale * base.u(x, y), y as f64 + scale * base.v(x, y))
        });
        let gt = FlowField::from_fn(width, height, |x, y| {
            (scale * base.u(x, y), scale * base.v(x, y))
        });
        out.frames.push(frame);
        out.gt_flows.push(gt);
    }
    Ok(out)
}
