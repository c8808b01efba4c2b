//! Exact conditional moments of a Gaussian field observed through the box
//! filter + coarsening operator.
//!
//! With HR covariance `C` and observation matrix `G`, the conditional law of
//! the HR field given `b = G x` is Gaussian with
//! mean `C G^T (G C G^T)^+ b` and covariance `C - C G^T (G C G^T)^+ G C`.
//! The pseudo-inverse handles the rank deficiency of zero-mean spectra
//! (the spatial mean of every LR field vanishes). Subfilter moments follow
//! by subtracting `upsample(b)` from the mean; the variance is unchanged.

use super::{MomentField, VAR_FLOOR};
use crate::error::{Error, Result};
use crate::filters::upsample_nearest;
use crate::grid::{Field, SpectralModel, SynthParams};
use crate::CHANNELS;
use nalgebra::DMatrix;

/// Largest HR plane handled by the dense construction.
pub const MAX_ORACLE_PIXELS: usize = 1024;

#[derive(Clone, Debug)]
pub struct GaussianOracle {
    height: usize,
    width: usize,
    delta: usize,
    /// `C G^T (G C G^T)^+`, `N x M` row-major.
    gain: Vec<f64>,
    cond_var: Vec<f64>,
}

impl GaussianOracle {
    /// Builds the oracle from a dense per-channel HR covariance (`N x N`,
    /// pixels row-major); both channels share it.
    pub fn from_covariance(cov: &DMatrix<f64>, height: usize, width: usize, delta: usize) -> Result<Self> {
        let n = height * width;
        if n > MAX_ORACLE_PIXELS {
            return Err(Error::invalid(format!(
                "oracle limited to {MAX_ORACLE_PIXELS} pixels per channel, got {n}"
            )));
        }
        if cov.shape() != (n, n) {
            return Err(Error::shape("covariance does not match the grid"));
        }
        if delta == 0 || height % delta != 0 || width % delta != 0 {
            return Err(Error::shape(format!("delta {delta} does not divide {height}x{width}")));
        }
        let (hl, wl) = (height / delta, width / delta);
        let m = hl * wl;
        let block = |i: usize| (i / width / delta) * wl + (i % width) / delta;
        let inv = 1.0 / (delta * delta) as f64;

        let mut cgt: DMatrix<f64> = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..n {
                cgt[(i, block(j))] += cov[(i, j)] * inv;
            }
        }
        let mut gcgt: DMatrix<f64> = DMatrix::zeros(m, m);
        for i in 0..n {
            for k in 0..m {
                gcgt[(block(i), k)] += cgt[(i, k)] * inv;
            }
        }
        let gcgt = (&gcgt + gcgt.transpose()) * 0.5;
        let eig = gcgt.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if !(lmax > 0.0) || !lmax.is_finite() {
            return Err(Error::IllConditioned(format!("largest eigenvalue {lmax}")));
        }
        let tol = 1e-10 * lmax;
        let mut scaled = eig.eigenvectors.clone();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            let f = if l > tol { 1.0 / l } else { 0.0 };
            scaled.column_mut(k).scale_mut(f);
        }
        let pinv: DMatrix<f64> = &scaled * eig.eigenvectors.transpose();
        let gain_m: DMatrix<f64> = &cgt * pinv;
        let mut gain = vec![0.0; n * m];
        let mut cond_var = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..m {
                gain[i * m + k] = gain_m[(i, k)];
                s += gain_m[(i, k)] * cgt[(i, k)];
            }
            cond_var[i] = (cov[(i, i)] - s).max(0.0);
        }
        Ok(GaussianOracle {
            height,
            width,
            delta,
            gain,
            cond_var,
        })
    }

    /// Stationary covariance of the spectral generator.
    pub fn from_spectrum(model: &SpectralModel, delta: usize) -> Result<Self> {
        let (h, w) = (model.height, model.width);
        if h * w > MAX_ORACLE_PIXELS {
            return Err(Error::invalid(format!(
                "oracle limited to {MAX_ORACLE_PIXELS} pixels per channel, got {}",
                h * w
            )));
        }
        let c = model.covariance();
        let n = h * w;
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let dy = (i / w + h - j / w) % h;
            let dx = (i % w + w - j % w) % w;
            c[dy * w + dx]
        });
        Self::from_covariance(&cov, h, w, model_delta_check(delta)?)
    }

    /// Oracle for unwarped generator output.
    pub fn from_synth(params: &SynthParams) -> Result<Self> {
        if params.warp != 0.0 {
            return Err(Error::invalid("the Gaussian oracle requires warp = 0"));
        }
        Self::from_spectrum(&params.spectral_model(), params.delta)
    }

    /// Conditional subfilter moments given one LR field.
    pub fn moments(&self, lr: &Field) -> Result<MomentField> {
        let (hl, wl) = (self.height / self.delta, self.width / self.delta);
        if lr.shape() != (CHANNELS, hl, wl) {
            return Err(Error::shape(format!("LR field {:?} does not match oracle grid", lr.shape())));
        }
        let n = self.height * self.width;
        let m = hl * wl;
        let up = upsample_nearest(lr, self.delta);
        let mut mean = Field::zeros(CHANNELS, self.height, self.width);
        for c in 0..CHANNELS {
            let b = lr.channel(c);
            let u = up.channel(c);
            for (i, out) in mean.channel_mut(c).iter_mut().enumerate() {
                let g = &self.gain[i * m..(i + 1) * m];
                *out = g.iter().zip(b).map(|(a, v)| a * v).sum::<f64>() - u[i];
            }
        }
        let mut variance = Field::zeros(CHANNELS, self.height, self.width);
        for c in 0..CHANNELS {
            variance.channel_mut(c).copy_from_slice(&self.cond_var[..n]);
            variance.channel_mut(c).iter_mut().for_each(|v| *v = v.max(VAR_FLOOR));
        }
        Ok(MomentField { mean, variance })
    }

    /// Conditional variance per HR pixel (identical for every LR field).
    pub fn conditional_variance(&self) -> &[f64] {
        &self.cond_var
    }
}

fn model_delta_check(delta: usize) -> Result<usize> {
    if delta == 0 {
        return Err(Error::invalid("delta must be positive"));
    }
    Ok(delta)
}

/// One-shot oracle evaluation for synthetic generator parameters.
pub fn gaussian_oracle(params: &SynthParams, lr: &Field) -> Result<MomentField> {
    GaussianOracle::from_synth(params)?.moments(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::box_filter_coarsen;
    use crate::grid::synth_dataset;

    #[test]
    fn identity_observation_pins_the_field() {
        let p = SynthParams { height: 8, width: 8, delta: 1, ..SynthParams::default() };
        let ds = synth_dataset(&p, 1, 3).unwrap();
        let o = GaussianOracle::from_synth(&p).unwrap();
        let mf = o.moments(&ds.samples[0]).unwrap();
        // samples are stored at f32 precision, so the observation sits just
        // off the range of C (which excludes the zero-mean mode)
        assert!(mf.mean.data().iter().all(|v| v.abs() < 1e-6));
        assert!(mf.variance.data().iter().all(|&v| v <= 1e-9));
    }

    #[test]
    fn white_covariance_block_conditioning() {
        let (h, w, d, s2) = (8, 8, 4, 2.5);
        let cov = DMatrix::identity(h * w, h * w) * s2;
        let o = GaussianOracle::from_covariance(&cov, h, w, d).unwrap();
        let lr = Field::from_fn(2, 2, 2, |c, y, x| (c + 2 * y + x) as f64 - 1.5);
        let mf = o.moments(&lr).unwrap();
        assert!(mf.mean.data().iter().all(|v| v.abs() < 1e-12));
        for &v in mf.variance.data() {
            assert!((v - s2 * (1.0 - 1.0 / 16.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_variance_is_uniform_up_to_block_offset() {
        let p = SynthParams { height: 16, width: 16, ..SynthParams::default() };
        let o = GaussianOracle::from_synth(&p).unwrap();
        let v = o.conditional_variance();
        // translation by whole LR cells is a symmetry of the periodic problem
        for y in 0..16 {
            for x in 0..16 {
                let a = v[y * 16 + x];
                let b = v[((y + 4) % 16) * 16 + (x + 8) % 16];
                assert!((a - b).abs() < 1e-9 * a.max(1e-12));
            }
        }
    }

    #[test]
    fn oracle_mean_is_consistent_with_observation() {
        // the conditional HR mean reproduces the observation exactly
        let p = SynthParams { height: 16, width: 16, ..SynthParams::default() };
        let ds = synth_dataset(&p, 2, 8).unwrap();
        let o = GaussianOracle::from_synth(&p).unwrap();
        for hr in &ds.samples {
            let lr = box_filter_coarsen(hr, 4).unwrap();
            let mf = o.moments(&lr).unwrap();
            let g = box_filter_coarsen(&mf.mean, 4).unwrap();
            assert!(g.data().iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn rejects_warped_or_large_inputs() {
        let p = SynthParams { warp: 0.2, ..SynthParams::default() };
        assert!(GaussianOracle::from_synth(&p).is_err());
        let p = SynthParams { height: 64, width: 64, ..SynthParams::default() };
        assert!(GaussianOracle::from_synth(&p).is_err());
    }
}
