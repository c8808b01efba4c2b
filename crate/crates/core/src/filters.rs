//! Observation operator (box filter + coarsening), nearest upsampling, the
//! Gaussian filter used by the classical baselines and a periodic Laplacian.

use crate::error::{Error, Result};
use crate::grid::Field;

/// Mean of each `delta x delta` block, per channel.
///
/// The mean is accumulated as `x0 + sum(x_i - x0) / n`, which is exact for
/// constant blocks; `box_filter_coarsen(upsample_nearest(lr)) == lr` bitwise.
pub fn box_filter_coarsen(hr: &Field, delta: usize) -> Result<Field> {
    let (c, h, w) = hr.shape();
    if delta == 0 || h % delta != 0 || w % delta != 0 {
        return Err(Error::shape(format!("delta {delta} does not divide {h}x{w}")));
    }
    let (lh, lw) = (h / delta, w / delta);
    let inv = 1.0 / (delta * delta) as f64;
    Ok(Field::from_fn(c, lh, lw, |ch, by, bx| {
        let x0 = hr.get(ch, by * delta, bx * delta);
        let mut acc = 0.0;
        for y in by * delta..(by + 1) * delta {
            for x in bx * delta..(bx + 1) * delta {
                acc += hr.get(ch, y, x) - x0;
            }
        }
        x0 + acc * inv
    }))
}

/// Replicates each LR value over its `delta x delta` block.
pub fn upsample_nearest(lr: &Field, delta: usize) -> Field {
    let (c, h, w) = lr.shape();
    Field::from_fn(c, h * delta, w * delta, |ch, y, x| lr.get(ch, y / delta, x / delta))
}

/// Adjoint of [`box_filter_coarsen`]: spreads `g / delta^2` over each block.
pub fn box_filter_adjoint(g: &Field, delta: usize) -> Field {
    let inv = 1.0 / (delta * delta) as f64;
    upsample_nearest(g, delta).scale(inv)
}

/// Separable discrete Gaussian `exp(-6 d^2 / delta^2)` truncated at radius
/// `ceil(1.5 delta)` and normalized to unit sum per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    pub delta: f64,
    pub radius: usize,
    /// Weights for offsets `-radius..=radius`.
    pub weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 1.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("gaussian filter size {delta} must be >= 1")));
        }
        let radius = (1.5 * delta).ceil() as usize;
        let mut weights: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|d| (-6.0 * (d * d) as f64 / (delta * delta)).exp())
            .collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= s);
        Ok(GaussianKernel {
            delta,
            radius,
            weights,
        })
    }

    /// Discrete transfer value of the 1-D kernel at integer wavenumber `k` on
    /// a periodic axis of length `n`.
    pub fn transfer(&self, k: f64, n: usize) -> f64 {
        let r = self.radius as i64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = i as i64 - r;
                w * (2.0 * std::f64::consts::PI * k * d as f64 / n as f64).cos()
            })
            .sum()
    }

    /// 2-D weight at offset `(dy, dx)`.
    pub fn weight(&self, dy: i64, dx: i64) -> f64 {
        let r = self.radius as i64;
        if dy.abs() > r || dx.abs() > r {
            return 0.0;
        }
        self.weights[(dy + r) as usize] * self.weights[(dx + r) as usize]
    }

    fn convolve_axis(&self, src: &[f64], dst: &mut [f64], h: usize, w: usize, along_x: bool) {
        let r = self.radius as i64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, wt) in self.weights.iter().enumerate() {
                    let d = i as i64 - r;
                    let (yy, xx) = if along_x {
                        (y, (x as i64 + d).rem_euclid(w as i64) as usize)
                    } else {
                        ((y as i64 + d).rem_euclid(h as i64) as usize, x)
                    };
                    acc += wt * src[yy * w + xx];
                }
                dst[y * w + x] = acc;
            }
        }
    }
}

/// Periodic Gaussian filtering at the HR resolution (no coarsening).
pub fn gaussian_filter(hr: &Field, delta: f64) -> Result<Field> {
    let k = GaussianKernel::new(delta)?;
    Ok(apply_gaussian(&k, hr))
}

pub fn apply_gaussian(k: &GaussianKernel, hr: &Field) -> Field {
    let (c, h, w) = hr.shape();
    let mut out = Field::zeros(c, h, w);
    let mut tmp = vec![0.0; h * w];
    for ch in 0..c {
        k.convolve_axis(hr.channel(ch), &mut tmp, h, w, true);
        k.convolve_axis(&tmp, out.channel_mut(ch), h, w, false);
    }
    out
}

/// Five-point Laplacian with unit spacing and periodic wrap.
pub fn laplacian(f: &Field) -> Field {
    let (c, h, w) = f.shape();
    Field::from_fn(c, h, w, |ch, y, x| {
        let up = f.get(ch, (y + h - 1) % h, x);
        let dn = f.get(ch, (y + 1) % h, x);
        let lf = f.get(ch, y, (x + w - 1) % w);
        let rt = f.get(ch, y, (x + 1) % w);
        up + dn + lf + rt - 4.0 * f.get(ch, y, x)
    })
}

/// An HR -> HR filter, as consumed by approximate deconvolution.
pub trait FilterOp {
    fn apply(&self, f: &Field) -> Result<Field>;
}

/// Periodic Gaussian filter of size `delta`.
pub struct GaussianFilter {
    kernel: GaussianKernel,
}

impl GaussianFilter {
    pub fn new(delta: f64) -> Result<Self> {
        Ok(GaussianFilter {
            kernel: GaussianKernel::new(delta)?,
        })
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }
}

impl FilterOp for GaussianFilter {
    fn apply(&self, f: &Field) -> Result<Field> {
        Ok(apply_gaussian(&self.kernel, f))
    }
}

/// `upsample_nearest . box_filter_coarsen`, the observation operator viewed
/// as an HR -> HR map. It is idempotent.
pub struct BoxUpsample {
    pub delta: usize,
}

impl FilterOp for BoxUpsample {
    fn apply(&self, f: &Field) -> Result<Field> {
        Ok(upsample_nearest(&box_filter_coarsen(f, self.delta)?, self.delta))
    }
}
