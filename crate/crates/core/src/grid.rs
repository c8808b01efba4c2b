//! Field containers, the CGF1 dataset format, synthetic turbulence-like data
//! and the HR = upsampled LR + subfilter decomposition.

use crate::error::{Error, Result};
use crate::filters::{box_filter_coarsen, upsample_nearest};
use crate::io::{self, Reader, Writer, DATASET_MAGIC};
use crate::moments::MomentField;
use crate::spectrum::{fft2, signed_wavenumber};
use crate::CHANNELS;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Dense `[channels, height, width]` real tensor, channel-major and row-major
/// within a channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// High-resolution snapshot `[2, H, W]`.
pub type HrField = Field;
/// Box-filtered and coarsened snapshot `[2, H/delta, W/delta]`.
pub type LrField = Field;
/// Residual `HR - upsample(LR)`, shaped like the HR field.
pub type SubfilterField = Field;

impl Field {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values for shape [{channels}, {height}, {width}]",
                data.len()
            )));
        }
        Ok(Field {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a field by evaluating `f(channel, row, col)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Field {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &Field, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `f(self, other)`; shapes must agree.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_shape(other, "elementwise op")?;
        Ok(Field {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| v * s)
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spatial variance summed over channels.
    pub fn spatial_variance(&self) -> f64 {
        let n = (self.height * self.width) as f64;
        (0..self.channels)
            .map(|c| {
                let ch = self.channel(c);
                let m = ch.iter().sum::<f64>() / n;
                ch.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
            })
            .sum()
    }

    /// Copies channels `range` into a new field.
    pub fn select_channels(&self, start: usize, count: usize) -> Result<Field> {
        if start + count > self.channels {
            return Err(Error::shape("channel range out of bounds"));
        }
        let n = self.height * self.width;
        Ok(Field {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Stacks fields of equal spatial shape along the channel axis.
    pub fn concat_channels(parts: &[&Field]) -> Result<Field> {
        let first = parts.first().ok_or_else(|| Error::shape("no fields to stack"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::shape("spatial shapes differ in channel stack"));
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Field::from_vec(channels, h, w, data)
    }
}

/// Parameters of the synthetic generator; enough to rebuild its covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    /// Log-log slope of the radial energy spectrum `E(k) ~ k^slope`.
    pub slope: f64,
    /// Strength of the pointwise `tanh` warp in `[0, 1]`; zero keeps fields Gaussian.
    pub warp: f64,
    pub delta: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            height: 32,
            width: 32,
            slope: -5.0 / 3.0,
            warp: 0.0,
            delta: 4,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !self.height.is_power_of_two() || !self.width.is_power_of_two() {
            return Err(Error::invalid(format!(
                "grid dims must be powers of two, got {}x{}",
                self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.warp) {
            return Err(Error::invalid(format!("warp {} not in [0, 1]", self.warp)));
        }
        if !(self.slope < 0.0) {
            return Err(Error::invalid(format!("spectral slope {} must be negative", self.slope)));
        }
        if self.delta == 0 || self.height % self.delta != 0 || self.width % self.delta != 0 {
            return Err(Error::invalid(format!(
                "delta {} does not divide {}x{}",
                self.delta, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn spectral_model(&self) -> SpectralModel {
        SpectralModel {
            height: self.height,
            width: self.width,
            slope: self.slope,
        }
    }
}

/// Stationary periodic Gaussian random field with a power-law spectrum,
/// normalized to unit pointwise variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralModel {
    pub height: usize,
    pub width: usize,
    pub slope: f64,
}

impl SpectralModel {
    /// Fourier amplitudes `|A(k)| ~ |k|^((slope - 1) / 2)` with `A(0) = 0`,
    /// scaled so that `(1/N) sum |A|^2 = 1`.
    pub fn amplitudes(&self) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let expo = (self.slope - 1.0) / 2.0;
        let mut a = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let ky = signed_wavenumber(y, h);
                let kx = signed_wavenumber(x, w);
                let k = (ky * ky + kx * kx).sqrt();
                if k > 0.0 {
                    a[y * w + x] = k.powf(expo);
                }
            }
        }
        let n = (h * w) as f64;
        let power: f64 = a.iter().map(|v| v * v).sum::<f64>() / n;
        let s = power.sqrt().recip();
        a.iter_mut().for_each(|v| *v *= s);
        a
    }

    /// Covariance `c(dy, dx)` between points separated by `(dy, dx)`,
    /// row-major over `dy in 0..H`, `dx in 0..W` (periodic).
    pub fn covariance(&self) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let n = (h * w) as f64;
        let mut buf: Vec<Complex64> = self
            .amplitudes()
            .iter()
            .map(|a| Complex64::new(a * a, 0.0))
            .collect();
        fft2(&mut buf, h, w, true);
        buf.iter().map(|c| c.re / n).collect()
    }

    /// One channel of a Gaussian realization driven by `rng`.
    fn realize(&self, amplitudes: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut buf: Vec<Complex64> = (0..h * w)
            .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
            .collect();
        fft2(&mut buf, h, w, false);
        for (b, a) in buf.iter_mut().zip(amplitudes) {
            *b *= *a;
        }
        fft2(&mut buf, h, w, true);
        let n = (h * w) as f64;
        buf.iter().map(|c| c.re / n).collect()
    }
}

/// Pointwise warp `x -> (1 - warp) x + warp tanh(x)`.
pub fn warp_value(x: f64, warp: f64) -> f64 {
    (1.0 - warp) * x + warp * x.tanh()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub params: Option<SynthParams>,
    pub provenance: String,
}

/// Ordered HR snapshots sharing one shape and filter size, optionally with
/// attached conditional-moment fields (one per sample).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<HrField>,
    pub delta: usize,
    pub meta: DatasetMeta,
    pub moments: Option<Vec<MomentField>>,
}

impl Dataset {
    pub fn new(samples: Vec<HrField>, delta: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset needs at least one sample"))?;
        let shape = first.shape();
        if shape.0 != CHANNELS {
            return Err(Error::shape(format!("expected {CHANNELS} channels, got {}", shape.0)));
        }
        if samples.iter().any(|s| s.shape() != shape) {
            return Err(Error::shape("samples differ in shape"));
        }
        if delta == 0 || shape.1 % delta != 0 || shape.2 % delta != 0 {
            return Err(Error::shape(format!(
                "delta {delta} does not divide {}x{}",
                shape.1, shape.2
            )));
        }
        Ok(Dataset {
            samples,
            delta,
            meta: DatasetMeta::default(),
            moments: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn height(&self) -> usize {
        self.samples[0].height()
    }

    pub fn width(&self) -> usize {
        self.samples[0].width()
    }

    pub fn lr_height(&self) -> usize {
        self.height() / self.delta
    }

    pub fn lr_width(&self) -> usize {
        self.width() / self.delta
    }

    pub fn lr(&self, i: usize) -> LrField {
        box_filter_coarsen(&self.samples[i], self.delta).expect("dataset shapes validated")
    }

    pub fn decompose(&self, i: usize) -> (LrField, SubfilterField) {
        sf_decompose(&self.samples[i], self.delta).expect("dataset shapes validated")
    }

    /// LR and subfilter fields of every sample, computed in parallel.
    pub fn decompose_all(&self) -> (Vec<LrField>, Vec<SubfilterField>) {
        (0..self.len()).into_par_iter().map(|i| self.decompose(i)).unzip()
    }

    pub fn attach_moments(&mut self, moments: Vec<MomentField>) -> Result<()> {
        if moments.len() != self.len() {
            return Err(Error::shape(format!(
                "{} moment fields for {} samples",
                moments.len(),
                self.len()
            )));
        }
        let hr = &self.samples[0];
        if moments.iter().any(|m| !m.mean.same_shape(hr) || !m.variance.same_shape(hr)) {
            return Err(Error::shape("moment fields must match the HR shape"));
        }
        self.moments = Some(moments);
        Ok(())
    }

    /// New dataset holding `indices` in order (moment fields carried along).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            delta: self.delta,
            meta: self.meta.clone(),
            moments: self
                .moments
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
        }
    }
}

/// Generates `n` synthetic snapshots. Each channel is an independent periodic
/// Gaussian field with spectrum `E(k) ~ k^slope`, unit variance, warped
/// pointwise and rounded to `f32` precision so that CGF1 round trips are
/// bit-exact. Sample `i` draws from ChaCha stream `i` of `seed`.
pub fn synth_dataset(params: &SynthParams, n: usize, seed: u64) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let model = params.spectral_model();
    let amps = model.amplitudes();
    let (h, w) = (params.height, params.width);
    let samples: Vec<Field> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut data = Vec::with_capacity(CHANNELS * h * w);
            for _ in 0..CHANNELS {
                let g = model.realize(&amps, &mut rng);
                data.extend(g.into_iter().map(|v| warp_value(v, params.warp) as f32 as f64));
            }
            Field::from_vec(CHANNELS, h, w, data).expect("synth shape")
        })
        .collect();
    let mut ds = Dataset::new(samples, params.delta)?;
    ds.meta = DatasetMeta {
        seed,
        params: Some(*params),
        provenance: format!(
            "synthetic spectral GRF slope={} warp={} seed={}",
            params.slope, params.warp, seed
        ),
    };
    Ok(ds)
}

/// `hr -> (LR, SF)` with `LR = box_filter_coarsen(hr)` and
/// `SF = hr - upsample_nearest(LR)`.
pub fn sf_decompose(hr: &HrField, delta: usize) -> Result<(LrField, SubfilterField)> {
    let lr = box_filter_coarsen(hr, delta)?;
    let sf = hr.sub(&upsample_nearest(&lr, delta))?;
    Ok((lr, sf))
}

/// Serializes to CGF1. Attached moment fields, when present, follow the two
/// velocity channels as `[mean_u, mean_v, var_u, var_v]`.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let channels = if ds.moments.is_some() { 3 * CHANNELS } else { CHANNELS };
    let (h, w) = (ds.height(), ds.width());
    let mut wr = Writer::new(DATASET_MAGIC);
    wr.u32(1);
    wr.usize(ds.len())?.usize(channels)?.usize(h)?.usize(w)?.usize(ds.delta)?;
    for (i, s) in ds.samples.iter().enumerate() {
        for &v in s.data() {
            wr.f32(v as f32);
        }
        if let Some(m) = &ds.moments {
            for &v in m[i].mean.data().iter().chain(m[i].variance.data()) {
                wr.f32(v as f32);
            }
        }
    }
    Ok(wr.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut rd = Reader::open(bytes, DATASET_MAGIC)?;
    let version = rd.u32()?;
    if version != 1 {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = rd.usize()?;
    let channels = rd.usize()?;
    let h = rd.usize()?;
    let w = rd.usize()?;
    let delta = rd.usize()?;
    let per_sample = io::checked_product(&[channels, h, w])?;
    let payload = io::checked_product(&[n, per_sample, 4])?;
    rd.require(payload)?;
    if channels != CHANNELS && channels != 3 * CHANNELS {
        return Err(Error::Malformed(format!("unsupported channel count {channels}")));
    }
    let plane = CHANNELS * h * w;
    let mut samples = Vec::with_capacity(n);
    let mut moments = Vec::new();
    for _ in 0..n {
        let vals: Vec<f64> = (0..per_sample)
            .map(|_| rd.f32().map(f64::from))
            .collect::<Result<_>>()?;
        samples.push(Field::from_vec(CHANNELS, h, w, vals[..plane].to_vec())?);
        if channels == 3 * CHANNELS {
            moments.push(MomentField {
                mean: Field::from_vec(CHANNELS, h, w, vals[plane..2 * plane].to_vec())?,
                variance: Field::from_vec(CHANNELS, h, w, vals[2 * plane..].to_vec())?,
            });
        }
    }
    let mut ds = Dataset::new(samples, delta)?;
    if channels == 3 * CHANNELS {
        ds.moments = Some(moments);
    }
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    io::write_file(path, &encode_dataset(ds)?)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&io::read_file(path)?)
}

/// Deterministic shuffled split of sample indices; the first part holds
/// `round(fraction * n)` indices (at least one on each side).
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two samples to split"));
    }
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let valid = idx.split_off(k);
    Ok((idx, valid))
}

pub fn split_dataset(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(ds.len(), fraction, seed)?;
    Ok((ds.subset(&a), ds.subset(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{loglog_slope, radial_energy_spectrum};

    fn params(warp: f64) -> SynthParams {
        SynthParams {
            warp,
            ..SynthParams::default()
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synth_dataset(&params(0.3), 4, 11).unwrap();
        let b = synth_dataset(&params(0.3), 4, 11).unwrap();
        assert_eq!(encode_dataset(&a).unwrap(), encode_dataset(&b).unwrap());
        let c = synth_dataset(&params(0.3), 4, 12).unwrap();
        assert_ne!(a.samples[0], c.samples[0]);
    }

    #[test]
    fn synthesis_rejects_bad_params() {
        let mut p = params(0.0);
        p.height = 24;
        assert!(synth_dataset(&p, 1, 0).is_err());
        assert!(synth_dataset(&params(1.5), 1, 0).is_err());
        assert!(synth_dataset(&params(0.0), 0, 0).is_err());
    }

    #[test]
    fn spectral_slope_matches_target() {
        let ds = synth_dataset(&params(0.0), 512, 1).unwrap();
        let mut e = vec![0.0; crate::spectrum::max_bin(32, 32) + 1];
        for s in &ds.samples {
            for (acc, v) in e.iter_mut().zip(radial_energy_spectrum(s)) {
                *acc += v;
            }
        }
        let slope = loglog_slope(&e, 3, 10);
        assert!((slope + 5.0 / 3.0).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn gaussian_fields_have_zero_mean_and_small_kurtosis() {
        let n = 512;
        let ds = synth_dataset(&params(0.0), n, 5).unwrap();
        let vals: Vec<f64> = ds.samples.iter().flat_map(|s| s.data().to_vec()).collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        assert!(mean.abs() < 4.0 * var.sqrt() / m.sqrt(), "mean {mean}");
        let k4 = vals.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m / (var * var) - 3.0;
        assert!(k4.abs() < 0.1, "excess kurtosis {k4}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn parseval_holds_for_synthetic_fields() {
        let ds = synth_dataset(&params(0.5), 3, 2).unwrap();
        for s in &ds.samples {
            let e: f64 = radial_energy_spectrum(s).iter().sum();
            let v = s.spatial_variance();
            assert!(((e - v) / v).abs() < 1e-6);
        }
    }

    #[test]
    fn decomposition_of_constant_and_upsampled_fields() {
        let hr = Field::constant(2, 8, 8, 3.25);
        let (lr, sf) = sf_decompose(&hr, 4).unwrap();
        assert!(lr.data().iter().all(|&v| v == 3.25));
        assert!(sf.data().iter().all(|&v| v == 0.0));

        let lr = Field::from_fn(2, 2, 2, |c, y, x| (c * 7 + y * 3 + x) as f64 * 0.37);
        let hr = upsample_nearest(&lr, 4);
        let (lr2, sf) = sf_decompose(&hr, 4).unwrap();
        assert_eq!(lr2, lr);
        assert!(sf.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_reconstructs_within_two_ulp() {
        let ds = synth_dataset(&SynthParams { height: 8, width: 8, ..params(0.4) }, 6, 3).unwrap();
        for hr in &ds.samples {
            let (lr, sf) = sf_decompose(hr, 4).unwrap();
            let up = upsample_nearest(&lr, 4);
            let rec = up.add(&sf).unwrap();
            for ((a, b), u) in rec.data().iter().zip(hr.data()).zip(up.data()) {
                let ulp = f64::EPSILON * b.abs().max(u.abs());
                assert!((a - b).abs() <= 2.0 * ulp, "{a} vs {b}");
            }
        }
        assert!(sf_decompose(&Field::zeros(2, 6, 8), 4).is_err());
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let ds = synth_dataset(&params(0.2), 3, 9).unwrap();
        let bytes = encode_dataset(&ds).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(encode_dataset(&back).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        let err = decode_dataset(&bad).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");

        let mut more = bytes.clone();
        more[8..12].copy_from_slice(&10u32.to_le_bytes());
        let err = decode_dataset(&more).unwrap_err().to_string();
        assert!(err.contains("truncated payload"), "{err}");

        let mut huge = bytes[..28].to_vec();
        for off in [8, 16, 20] {
            huge[off..off + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode_dataset(&huge), Err(Error::DimensionOverflow) | Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn moments_ride_along_as_extra_channels() {
        let mut ds = synth_dataset(&SynthParams { height: 8, width: 8, ..params(0.0) }, 2, 4).unwrap();
        let mf: Vec<MomentField> = ds
            .samples
            .iter()
            .map(|s| MomentField {
                mean: s.scale(0.5),
                variance: s.map(|v| v * v),
            })
            .collect();
        ds.attach_moments(mf).unwrap();
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        let m = back.moments.as_ref().unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].mean.get(1, 3, 2), (ds.samples[1].get(1, 3, 2) * 0.5) as f32 as f64);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let (a, b) = split_indices(10, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.5, 3).unwrap(), (a, b));
        assert!(split_indices(10, 1.0, 3).is_err());
        assert!(split_indices(10, 0.0, 3).is_err());
    }
}
