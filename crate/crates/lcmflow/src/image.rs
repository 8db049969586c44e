//! Image representation, grayscale conversion, derivatives, resampling and
//! coarse-to-fine pyramid construction.

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Single-channel floating-point raster with intensities nominally in [0,1].
/// Also used as a plain scalar field container for derivative and warped
/// fields, which may leave the [0,1] range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension("image dimensions must be at least 1x1".into()));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("image contains non-finite intensities".into()));
        }
        Ok(Image { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Border-replicating access.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }
}

/// Multi-channel interleaved raster with values already scaled to [0,1].
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Convert a 1- or 3-channel raster to a grayscale [`Image`] using fixed luma
/// weights.
pub fn to_grayscale(raster: &Raster) -> Result<Image> {
    if raster.width == 0 || raster.height == 0 {
        return Err(Error::Dimension("empty raster".into()));
    }
    if raster.data.len() != raster.width * raster.height * raster.channels {
        return Err(Error::Dimension("raster data length mismatch".into()));
    }
    let n = raster.width * raster.height;
    let data = match raster.channels {
        1 => raster.data.clone(),
        3 => (0..n)
            .map(|i| {
                LUMA_WEIGHTS[0] * raster.data[3 * i]
                    + LUMA_WEIGHTS[1] * raster.data[3 * i + 1]
                    + LUMA_WEIGHTS[2] * raster.data[3 * i + 2]
            })
            .collect(),
        c => return Err(Error::Format(format!("unsupported channel count {c}"))),
    };
    Image::new(raster.width, raster.height, data)
}

#[inline]
fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    if t == 0.0 {
        return p[1];
    }
    0.5 * (2.0 * p[1]
        + t * ((p[2] - p[0])
            + t * ((2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3])
                + t * (3.0 * (p[1] - p[2]) + p[3] - p[0]))))
}

/// Catmull-Rom bicubic sampling. Coordinates outside the image are clamped to
/// the border, making this a total function. Exact at integer lattice points.
pub fn sample_bicubic(img: &Image, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let xi = x0 as isize;
    let yi = y0 as isize;
    let mut col = [0.0f64; 4];
    for (j, c) in col.iter_mut().enumerate() {
        let yy = yi - 1 + j as isize;
        let p = [
            img.get_clamped(xi - 1, yy),
            img.get_clamped(xi, yy),
            img.get_clamped(xi + 1, yy),
            img.get_clamped(xi + 2, yy),
        ];
        *c = catmull_rom(p, tx);
    }
    catmull_rom(col, ty)
}

/// First and second spatial derivatives of an image.
#[derive(Debug, Clone)]
pub struct SpatialDerivatives {
    pub ix: Image,
    pub iy: Image,
    pub ixx: Image,
    pub iyy: Image,
    pub ixy: Image,
}

fn diff_x(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, |x, y| {
        let x = x as isize;
        let y = y as isize;
        (img.get_clamped(x - 2, y) - 8.0 * img.get_clamped(x - 1, y)
            + 8.0 * img.get_clamped(x + 1, y)
            - img.get_clamped(x + 2, y))
            / 12.0
    })
}

fn diff_y(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, |x, y| {
        let x = x as isize;
        let y = y as isize;
        (img.get_clamped(x, y - 2) - 8.0 * img.get_clamped(x, y - 1)
            + 8.0 * img.get_clamped(x, y + 1)
            - img.get_clamped(x, y + 2))
            / 12.0
    })
}

/// Fourth-order central differences, stencil (1, -8, 0, 8, -1)/12, border
/// replicated. Second derivatives by repeated application.
pub fn derivatives(img: &Image) -> Result<SpatialDerivatives> {
    if img.width < 5 || img.height < 5 {
        return Err(Error::Dimension(format!(
            "image {}x{} too small for derivative stencil (need 5px)",
            img.width, img.height
        )));
    }
    let ix = diff_x(img);
    let iy = diff_y(img);
    let ixx = diff_x(&ix);
    let iyy = diff_y(&iy);
    let ixy = diff_y(&ix);
    Ok(SpatialDerivatives { ix, iy, ixx, iyy, ixy })
}

/// Separable Gaussian smoothing with border replication. `sigma <= 0` is a
/// no-op copy.
pub fn gaussian_smooth(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for k in -radius..=radius {
        let v = (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let (w, h) = (img.width, img.height);
    let horiz = Image::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (ki, kv) in kernel.iter().enumerate() {
            acc += kv * img.get_clamped(x as isize + ki as isize - radius, y as isize);
        }
        acc
    });
    Image::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (ki, kv) in kernel.iter().enumerate() {
            acc += kv * horiz.get_clamped(x as isize, y as isize + ki as isize - radius);
        }
        acc
    })
}

/// Coarse-to-fine image pyramid. Levels are stored finest first, so
/// `levels()[0]` is the input image bit-exactly; iterate with
/// [`ImagePyramid::coarse_to_fine`] for the solver schedule.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<Image>,
    scale_factor: f64,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn finest(&self) -> &Image {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &Image {
        self.levels.last().unwrap()
    }

    /// Iterate from the coarsest level to the finest, yielding the
    /// finest-first level index alongside the image.
    pub fn coarse_to_fine(&self) -> impl Iterator<Item = (usize, &Image)> {
        self.levels.iter().enumerate().rev()
    }
}

fn downsample_bicubic(img: &Image, nw: usize, nh: usize) -> Image {
    let sx = img.width as f64 / nw as f64;
    let sy = img.height as f64 / nh as f64;
    Image::from_fn(nw, nh, |x, y| {
        sample_bicubic(img, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

/// Build a down-sampling pyramid. Each level is Gaussian pre-smoothed with
/// sigma = 0.5*sqrt(1/factor^2 - 1) and bicubically resampled by `factor`;
/// levels stop before either dimension would drop below `min_dim`.
pub fn build_pyramid(img: &Image, factor: f64, min_dim: usize) -> Result<ImagePyramid> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::Config(format!("pyramid factor {factor} must be in (0,1)")));
    }
    if min_dim < 8 {
        return Err(Error::Config(format!("min_dim {min_dim} must be >= 8")));
    }
    let sigma = 0.5 * (1.0 / (factor * factor) - 1.0).sqrt();
    let mut levels = vec![img.clone()];
    loop {
        let cur = levels.last().unwrap();
        let nw = (cur.width as f64 * factor).round() as usize;
        let nh = (cur.height as f64 * factor).round() as usize;
        if nw < min_dim || nh < min_dim {
            break;
        }
        let smoothed = gaussian_smooth(cur, sigma);
        levels.push(downsample_bicubic(&smoothed, nw, nh));
    }
    Ok(ImagePyramid { levels, scale_factor: factor })
}

/// The warped-image abbreviation fields of the linearization: derivatives of
/// the second image sampled at X+w, plus the temporal residuals against the
/// first image.
#[derive(Debug, Clone)]
pub struct DerivativeSet {
    pub ix: Image,
    pub iy: Image,
    pub ixx: Image,
    pub iyy: Image,
    pub ixy: Image,
    pub iz: Image,
    pub ixz: Image,
    pub iyz: Image,
}

/// Sample the second image and its precomputed derivative fields at X+w via
/// bicubic interpolation and form the temporal residuals.
pub fn warped_derivatives(i1: &Image, i2: &Image, w: &FlowField) -> Result<DerivativeSet> {
    if i1.width != i2.width
        || i1.height != i2.height
        || w.width() != i1.width
        || w.height() != i1.height
    {
        return Err(Error::Dimension("image pair and flow dimensions must match".into()));
    }
    let d1 = derivatives(i1)?;
    let d2 = derivatives(i2)?;
    let (width, height) = (i1.width, i1.height);
    let mut out = DerivativeSet {
        ix: Image::zeros(width, height),
        iy: Image::zeros(width, height),
        ixx: Image::zeros(width, height),
        iyy: Image::zeros(width, height),
        ixy: Image::zeros(width, height),
        iz: Image::zeros(width, height),
        ixz: Image::zeros(width, height),
        iyz: Image::zeros(width, height),
    };
    for y in 0..height {
        for x in 0..width {
            let sx = x as f64 + w.u(x, y);
            let sy = y as f64 + w.v(x, y);
            // a warped position outside the image has no constancy evidence;
            // clamped extrapolation would exert a constant spurious force, so
            // drop the data term there entirely (all derivatives stay zero)
            if sx < 0.0 || sy < 0.0 || sx > (width - 1) as f64 || sy > (height - 1) as f64 {
                continue;
            }
            let ix = sample_bicubic(&d2.ix, sx, sy);
            let iy = sample_bicubic(&d2.iy, sx, sy);
            out.ix.set(x, y, ix);
            out.iy.set(x, y, iy);
            out.ixx.set(x, y, sample_bicubic(&d2.ixx, sx, sy));
            out.iyy.set(x, y, sample_bicubic(&d2.iyy, sx, sy));
            out.ixy.set(x, y, sample_bicubic(&d2.ixy, sx, sy));
            out.iz.set(x, y, sample_bicubic(i2, sx, sy) - i1.get(x, y));
            out.ixz.set(x, y, ix - d1.ix.get(x, y));
            out.iyz.set(x, y, iy - d1.iy.get(x, y));
        }
    }
    Ok(out)
}
