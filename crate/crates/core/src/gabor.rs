//! Gabor filter bank and grid-pooled region features.
//!
//! A group of parts is drawn into a binary raster inside its bounding square,
//! convolved with one real Gabor kernel per orientation, and the magnitude of
//! each response is averaged over a coarse grid. Convolution runs in the
//! frequency domain with zero padding large enough to avoid wrap-around.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Rect};
use crate::sketch_model::SemanticPart;

#[derive(Debug, Error)]
pub enum GaborError {
    #[error("empty group")]
    EmptyGroup,
    #[error("raster side {0} is below the minimum of 16")]
    RasterTooSmall(usize),
    #[error("image side {image} does not match filter bank side {bank}")]
    SideMismatch { image: usize, bank: usize },
    #[error("invalid gabor parameters: {0}")]
    InvalidParams(String),
    #[error("kernel file: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    /// Peak response frequency, cycles per pixel.
    pub omega0: f64,
    /// Envelope width across the stripes, pixels.
    pub sigma_x: f64,
    /// Envelope width along the stripes, pixels.
    pub sigma_y: f64,
    /// Kernel orientations, radians.
    pub orientations: Vec<f64>,
}

impl Default for GaborParams {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            omega0: 0.1,
            sigma_x: 3.0,
            sigma_y: 9.0,
            orientations: (0..6).map(|k| k as f64 * PI / 6.0).collect(),
        }
    }
}

impl GaborParams {
    pub fn validate(&self) -> Result<(), GaborError> {
        if self.orientations.is_empty() {
            return Err(GaborError::InvalidParams("no orientations".into()));
        }
        if !(self.omega0 > 0.0 && self.sigma_x > 0.0 && self.sigma_y > 0.0) {
            return Err(GaborError::InvalidParams("frequency and bandwidths must be positive".into()));
        }
        Ok(())
    }

    /// Kernel half-width: `ceil(4 * max(sigma_x, sigma_y))`.
    pub fn half_width(&self) -> usize {
        (4.0 * self.sigma_x.max(self.sigma_y)).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    pub raster_side: usize,
    pub stroke_width: f64,
    pub margin: f64,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            raster_side: 128,
            stroke_width: 2.0,
            margin: 4.0,
        }
    }
}

/// Square binary raster of a group of parts.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupImage {
    side: usize,
    pixels: Vec<u8>,
    /// Bounding square of the rendered content, in canvas units.
    pub bbox: Rect,
}

impl GroupImage {
    pub fn blank(side: usize, bbox: Rect) -> Self {
        Self {
            side,
            pixels: vec![0; side * side],
            bbox,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.side + x]
    }

    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0).count()
    }

    /// Draws a polyline already in raster coordinates. Pixels whose centers
    /// lie within half the stroke width of a segment are lit, restricted to
    /// `clip` (raster coordinates).
    pub fn draw_polyline(&mut self, points: &[Point], width: f64, clip: &Rect) {
        let half = 0.5 * width;
        let n = self.side as i64;
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let x0 = ((a.x.min(b.x) - half).floor() as i64).max(0);
            let x1 = ((a.x.max(b.x) + half).ceil() as i64).min(n - 1);
            let y0 = ((a.y.min(b.y) - half).floor() as i64).max(0);
            let y1 = ((a.y.max(b.y) + half).ceil() as i64).min(n - 1);
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let c = Point::new(px as f64 + 0.5, py as f64 + 0.5);
                    if clip.contains(c) && point_segment_distance(c, a, b) < half {
                        self.pixels[py as usize * self.side + px as usize] = 1;
                    }
                }
            }
        }
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Square of side `longer_side(rect)` sharing `rect`'s center.
pub fn bounding_square(rect: &Rect) -> Rect {
    let c = rect.center();
    let h = 0.5 * rect.longer_side();
    Rect::new(c.x - h, c.y - h, c.x + h, c.y + h)
}

/// Renders every stroke of `parts` with `window` (a square in canvas units)
/// mapped onto the raster inside the margin. Only content inside `visible`
/// (canvas units) is drawn.
pub fn rasterize_window<'a>(
    strokes: impl IntoIterator<Item = &'a [Point]>,
    window: &Rect,
    visible: &Rect,
    opts: &RasterOptions,
) -> Result<GroupImage, GaborError> {
    if opts.raster_side < 16 {
        return Err(GaborError::RasterTooSmall(opts.raster_side));
    }
    let side = opts.raster_side;
    let inner = side as f64 - 2.0 * opts.margin;
    let scale = inner / window.longer_side();
    let to_raster = |p: Point| {
        Point::new(
            (p.x - window.x0) * scale + opts.margin,
            (p.y - window.y0) * scale + opts.margin,
        )
    };
    let clip_lo = to_raster(Point::new(visible.x0, visible.y0));
    let clip_hi = to_raster(Point::new(visible.x1, visible.y1));
    let clip = Rect::new(clip_lo.x, clip_lo.y, clip_hi.x, clip_hi.y);
    let mut img = GroupImage::blank(side, *window);
    let mut buf = Vec::new();
    for pts in strokes {
        buf.clear();
        buf.extend(pts.iter().map(|&p| to_raster(p)));
        img.draw_polyline(&buf, opts.stroke_width, &clip);
    }
    Ok(img)
}

/// Renders a group of parts inside its bounding square.
pub fn rasterize_group(parts: &[&SemanticPart], opts: &RasterOptions) -> Result<GroupImage, GaborError> {
    let bbox = parts
        .iter()
        .map(|p| p.bbox())
        .reduce(|a, b| a.union(&b))
        .ok_or(GaborError::EmptyGroup)?;
    let square = bounding_square(&bbox);
    let strokes = parts.iter().flat_map(|p| p.strokes().iter().map(|s| s.points()));
    let unbounded = Rect::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    rasterize_window(strokes, &square, &unbounded, opts)
}

/// Spatial kernel, `(2h+1)²` row-major with the center at `(h, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub theta: f64,
    pub half: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn at(&self, dx: i64, dy: i64) -> f64 {
        let h = self.half as i64;
        self.values[((dy + h) * self.side() as i64 + dx + h) as usize]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Real Gabor kernel at orientation `theta`, truncated and made zero-mean.
pub fn gabor_kernel(params: &GaborParams, theta: f64) -> Kernel {
    let half = params.half_width();
    let h = half as i64;
    let (s, c) = theta.sin_cos();
    let two_pi_w = 2.0 * std::f64::consts::PI * params.omega0;
    let mut values = Vec::with_capacity((2 * half + 1).pow(2));
    for y in -h..=h {
        for x in -h..=h {
            let (x, y) = (x as f64, y as f64);
            let xr = x * c + y * s;
            let yr = -x * s + y * c;
            let env = (-(xr * xr / (2.0 * params.sigma_x.powi(2)) + yr * yr / (2.0 * params.sigma_y.powi(2)))).exp();
            values.push(env * (two_pi_w * xr).cos());
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in &mut values {
        *v -= mean;
    }
    Kernel { theta, half, values }
}

/// Smallest `n >= min` whose only prime factors are 2, 3 and 5.
fn smooth_len(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, buf: &mut [Complex<f64>]) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    /// Row transform, transpose, row transform: the spectrum is left in
    /// transposed layout, which `inverse` expects.
    fn forward(&self, buf: &mut [Complex<f64>]) {
        self.fwd.process(buf);
        self.transpose(buf);
        self.fwd.process(buf);
    }

    fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.inv.process(buf);
        self.transpose(buf);
        self.inv.process(buf);
    }
}

/// Filter bank bound to one raster side, with kernel spectra precomputed.
pub struct FilterBank {
    params: GaborParams,
    raster_side: usize,
    kernels: Vec<Kernel>,
    fft: Fft2,
    spectra: Vec<Vec<Complex<f64>>>,
}

impl std::fmt::Debug for FilterBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilterBank")
            .field("params", &self.params)
            .field("raster_side", &self.raster_side)
            .field("fft_len", &self.fft.n)
            .finish()
    }
}

impl FilterBank {
    pub fn new(params: &GaborParams, raster_side: usize) -> Result<Self, GaborError> {
        params.validate()?;
        if raster_side < 16 {
            return Err(GaborError::RasterTooSmall(raster_side));
        }
        let kernels: Vec<Kernel> = params.orientations.iter().map(|&t| gabor_kernel(params, t)).collect();
        let half = params.half_width();
        let n = smooth_len(raster_side + half);
        let fft = Fft2::new(n);
        let spectra = kernels
            .iter()
            .map(|k| {
                let mut buf = vec![Complex::new(0.0, 0.0); n * n];
                let h = k.half as i64;
                for dy in -h..=h {
                    for dx in -h..=h {
                        let x = dx.rem_euclid(n as i64) as usize;
                        let y = dy.rem_euclid(n as i64) as usize;
                        buf[y * n + x].re = k.at(dx, dy);
                    }
                }
                fft.forward(&mut buf);
                buf
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            raster_side,
            kernels,
            fft,
            spectra,
        })
    }

    pub fn params(&self) -> &GaborParams {
        &self.params
    }

    pub fn raster_side(&self) -> usize {
        self.raster_side
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn orientations(&self) -> usize {
        self.kernels.len()
    }

    /// Magnitude of the zero-padded convolution with each kernel, one
    /// `side × side` row-major map per orientation.
    pub fn responses(&self, values: &[f64], side: usize) -> Result<Vec<Vec<f64>>, GaborError> {
        if side != self.raster_side || values.len() != side * side {
            return Err(GaborError::SideMismatch {
                image: side,
                bank: self.raster_side,
            });
        }
        let n = self.fft.n;
        let mut image = vec![Complex::new(0.0, 0.0); n * n];
        for y in 0..side {
            for x in 0..side {
                image[y * n + x].re = values[y * side + x];
            }
        }
        self.fft.forward(&mut image);
        let norm = 1.0 / (n * n) as f64;
        let mut out = Vec::with_capacity(self.spectra.len());
        let mut buf = vec![Complex::new(0.0, 0.0); n * n];
        for spectrum in &self.spectra {
            for ((b, a), k) in buf.iter_mut().zip(&image).zip(spectrum) {
                *b = a * k;
            }
            self.fft.inverse(&mut buf);
            let mut map = Vec::with_capacity(side * side);
            for y in 0..side {
                for x in 0..side {
                    map.push((buf[y * n + x].re * norm).abs());
                }
            }
            out.push(map);
        }
        Ok(out)
    }

    pub fn image_responses(&self, image: &GroupImage) -> Result<Vec<Vec<f64>>, GaborError> {
        let values: Vec<f64> = image.pixels.iter().map(|&v| v as f64).collect();
        self.responses(&values, image.side)
    }

    /// Writes all kernels as little-endian `u32` count, rows, cols followed by
    /// row-major `f32` values.
    pub fn write_kernels<W: Write>(&self, mut w: W) -> Result<(), GaborError> {
        let side = self.kernels.first().map_or(0, Kernel::side) as u32;
        w.write_all(&(self.kernels.len() as u32).to_le_bytes())?;
        w.write_all(&side.to_le_bytes())?;
        w.write_all(&side.to_le_bytes())?;
        for k in &self.kernels {
            for &v in &k.values {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a kernel dump written by [`FilterBank::write_kernels`]; returns
/// `(rows, cols, kernels)`.
pub fn read_kernels<R: Read>(mut r: R) -> Result<(usize, usize, Vec<Vec<f32>>), GaborError> {
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> io::Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let count = next(&mut r)? as usize;
    let rows = next(&mut r)? as usize;
    let cols = next(&mut r)? as usize;
    let mut kernels = Vec::with_capacity(count);
    let mut bytes = vec![0u8; rows * cols * 4];
    for _ in 0..count {
        r.read_exact(&mut bytes)?;
        kernels.push(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
    }
    Ok((rows, cols, kernels))
}

/// Pooled Gabor magnitudes of one region: `grid² × orientations` values,
/// orientation-major, cells row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatureBlock {
    pub grid: usize,
    pub values: Vec<f32>,
}

impl RegionFeatureBlock {
    pub fn zeros(grid: usize, orientations: usize) -> Self {
        Self {
            grid,
            values: vec![0.0; grid * grid * orientations],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean distance to another block of the same length.
    pub fn distance(&self, other: &RegionFeatureBlock) -> f64 {
        l2_distance(&self.values, &other.values)
    }
}

pub fn l2_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Cell boundaries of a `grid`-way split of `side` pixels.
pub fn cell_bounds(side: usize, grid: usize) -> Vec<(usize, usize)> {
    (0..grid).map(|g| (g * side / grid, (g + 1) * side / grid)).collect()
}

/// Averages one response map over a `grid × grid` partition.
pub fn pool_grid(map: &[f64], side: usize, grid: usize) -> Vec<f64> {
    let bounds = cell_bounds(side, grid);
    let mut out = Vec::with_capacity(grid * grid);
    for &(y0, y1) in &bounds {
        for &(x0, x1) in &bounds {
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += map[y * side + x0..y * side + x1].iter().sum::<f64>();
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// L2-normalizes in place unless the vector is all zeros.
pub fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values {
            *v /= norm;
        }
    }
}

/// Feature block of one group image; `None` yields the zero block.
pub fn region_feature(
    image: Option<&GroupImage>,
    bank: &FilterBank,
    grid: usize,
    normalize: bool,
) -> Result<RegionFeatureBlock, GaborError> {
    let Some(image) = image else {
        return Ok(RegionFeatureBlock::zeros(grid, bank.orientations()));
    };
    if image.lit_count() == 0 {
        return Ok(RegionFeatureBlock::zeros(grid, bank.orientations()));
    }
    let maps = bank.image_responses(image)?;
    let mut values: Vec<f64> = maps.iter().flat_map(|m| pool_grid(m, image.side, grid)).collect();
    if normalize {
        l2_normalize(&mut values);
    }
    Ok(RegionFeatureBlock {
        grid,
        values: values.into_iter().map(|v| v as f32).collect(),
    })
}
