//! Generator and discriminator losses with their gradients.
//!
//! Each `*_grad` function returns the loss together with its gradient with
//! respect to the generated fields; the plain variants only evaluate.

use crate::error::{Error, Result};
use crate::filters::{box_filter_coarsen, upsample_nearest};
use crate::grid::Field;
use crate::moments::MomentField;

/// Probability clamp used inside the log losses.
pub const EPS_LOG: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS_LOG, 1.0 - EPS_LOG)
}

/// `(L_D, L_adv_G)` from discriminator outputs on real and generated fields:
/// `L_D = -mean log(1 - D(fake)) - mean log D(real)`, `L_adv_G = -mean log D(fake)`.
pub fn adversarial_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::invalid("adversarial losses need nonempty real and fake batches"));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp_prob(p))).sum::<f64>() / v.len() as f64;
    let l_real = mean(d_real, &|p| -p.ln());
    let l_fake = mean(d_fake, &|p| -(1.0 - p).ln());
    let l_g = mean(d_fake, &|p| -p.ln());
    Ok((l_fake + l_real, l_g))
}

/// Gradients of `L_D` with respect to the real and fake probabilities.
pub fn discriminator_loss_grad(d_real: &[f64], d_fake: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::invalid("adversarial losses need nonempty real and fake batches"));
    }
    let inside = |p: f64| p > EPS_LOG && p < 1.0 - EPS_LOG;
    let nr = d_real.len() as f64;
    let nf = d_fake.len() as f64;
    let gr = d_real
        .iter()
        .map(|&p| if inside(p) { -1.0 / (p * nr) } else { 0.0 })
        .collect();
    let gf = d_fake
        .iter()
        .map(|&p| if inside(p) { 1.0 / ((1.0 - p) * nf) } else { 0.0 })
        .collect();
    Ok((gr, gf))
}

/// Gradient of `L_adv_G` with respect to the fake probabilities.
pub fn generator_adv_grad(d_fake: &[f64]) -> Vec<f64> {
    let n = d_fake.len() as f64;
    d_fake
        .iter()
        .map(|&p| if p > EPS_LOG && p < 1.0 - EPS_LOG { -1.0 / (p * n) } else { 0.0 })
        .collect()
}

fn check_pairs(sr: &[Field], lr: &[Field]) -> Result<()> {
    if sr.is_empty() || sr.len() != lr.len() {
        return Err(Error::shape(format!(
            "content loss needs one LR field per SR field, got {} and {}",
            sr.len(),
            lr.len()
        )));
    }
    Ok(())
}

/// `mean_i |coarsen(sr_i) - lr_i|_2`.
pub fn content_loss(sr: &[Field], lr: &[Field], delta: usize) -> Result<f64> {
    Ok(content_loss_grad(sr, lr, delta)?.0)
}

pub fn content_loss_grad(sr: &[Field], lr: &[Field], delta: usize) -> Result<(f64, Vec<Field>)> {
    check_pairs(sr, lr)?;
    let n = sr.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(sr.len());
    let inv_area = 1.0 / (delta * delta) as f64;
    for (s, l) in sr.iter().zip(lr) {
        let e = box_filter_coarsen(s, delta)?.sub(l)?;
        let norm = e.norm_l2();
        total += norm;
        grads.push(if norm > 0.0 {
            upsample_nearest(&e.scale(inv_area / (norm * n)), delta)
        } else {
            Field::zeros(s.channels(), s.height(), s.width())
        });
    }
    Ok((total / n, grads))
}

/// Per-pixel sample mean and population (1/r) standard deviation.
pub fn sample_moments(samples: &[Field]) -> Result<(Field, Field)> {
    let first = samples.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
    for s in samples {
        first.check_same_shape(s, "ensemble members differ in shape")?;
    }
    let r = samples.len() as f64;
    let (c, h, w) = first.shape();
    let mut mean = Field::zeros(c, h, w);
    for s in samples {
        for (m, v) in mean.data_mut().iter_mut().zip(s.data()) {
            *m += v;
        }
    }
    mean.data_mut().iter_mut().for_each(|m| *m /= r);
    let mut std = Field::zeros(c, h, w);
    for s in samples {
        for ((sd, v), m) in std.data_mut().iter_mut().zip(s.data()).zip(mean.data()) {
            *sd += (v - m) * (v - m);
        }
    }
    std.data_mut().iter_mut().for_each(|v| *v = (*v / r).sqrt());
    Ok((mean, std))
}

fn need_two(samples: &[Field]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!("need r >= 2 samples, got {}", samples.len())));
    }
    Ok(())
}

/// Diagonal-Gaussian Frechet distance between the ensemble of subfilter
/// samples and the moment field:
/// `sqrt(|mean_hat - mean|^2 + sum (std_hat - std)^2)`.
pub fn diversity_loss(sf_samples: &[Field], mf: &MomentField) -> Result<f64> {
    Ok(diversity_loss_grad(sf_samples, mf)?.0)
}

pub fn diversity_loss_grad(sf_samples: &[Field], mf: &MomentField) -> Result<(f64, Vec<Field>)> {
    need_two(sf_samples)?;
    let (mean, std) = sample_moments(sf_samples)?;
    mean.check_same_shape(&mf.mean, "moment field does not match the samples")?;
    mean.check_same_shape(&mf.variance, "moment field does not match the samples")?;
    let ref_std = mf.std();
    let dm = mean.sub(&mf.mean)?;
    let ds = std.sub(&ref_std)?;
    let loss = (dm.data().iter().map(|v| v * v).sum::<f64>() + ds.data().iter().map(|v| v * v).sum::<f64>()).sqrt();
    let r = sf_samples.len() as f64;
    let grads = sf_samples
        .iter()
        .map(|s| {
            let mut g = s.clone();
            if loss > 0.0 {
                for (i, v) in g.data_mut().iter_mut().enumerate() {
                    let sd = std.data()[i];
                    let through_std = if sd > 1e-12 {
                        ds.data()[i] * (*v - mean.data()[i]) / (r * sd)
                    } else {
                        0.0
                    };
                    *v = (dm.data()[i] / r + through_std) / loss;
                }
            } else {
                g.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            g
        })
        .collect();
    Ok((loss, grads))
}

/// `||std(mf)||_2 / ||std(z)||_2` for uniform[-1, 1] noise of `noise_len` entries.
pub fn dsgan_tau(mf: &MomentField, noise_len: usize) -> f64 {
    let sigma_z = (noise_len as f64 / 3.0).sqrt();
    mf.std().norm_l2() / sigma_z
}

/// `-min(|sr_a - sr_b| / |z_a - z_b|, tau)` for one pair.
pub fn dsgan_loss(sr_a: &Field, sr_b: &Field, z_a: &[f64], z_b: &[f64], tau: f64) -> Result<f64> {
    Ok(dsgan_loss_grad(sr_a, sr_b, z_a, z_b, tau)?.0)
}

/// Loss and gradients with respect to `sr_a` and `sr_b`.
pub fn dsgan_loss_grad(sr_a: &Field, sr_b: &Field, z_a: &[f64], z_b: &[f64], tau: f64) -> Result<(f64, Field, Field)> {
    if z_a.len() != z_b.len() {
        return Err(Error::shape("noise vectors differ in length"));
    }
    let dz = z_a.iter().zip(z_b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dz == 0.0 {
        return Err(Error::invalid("coincident noise vectors"));
    }
    let diff = sr_a.sub(sr_b)?;
    let dn = diff.norm_l2();
    let ratio = dn / dz;
    if ratio >= tau || dn == 0.0 {
        let zero = diff.map(|_| 0.0);
        return Ok((-ratio.min(tau), zero.clone(), zero));
    }
    let ga = diff.scale(-1.0 / (dn * dz));
    let gb = ga.scale(-1.0);
    Ok((-ratio, ga, gb))
}

/// Negative mean per-pixel ensemble standard deviation.
pub fn gensim_loss(samples: &[Field]) -> Result<f64> {
    Ok(gensim_loss_grad(samples)?.0)
}

pub fn gensim_loss_grad(samples: &[Field]) -> Result<(f64, Vec<Field>)> {
    need_two(samples)?;
    let (mean, std) = sample_moments(samples)?;
    let p = std.len() as f64;
    let r = samples.len() as f64;
    let loss = -std.data().iter().sum::<f64>() / p;
    let grads = samples
        .iter()
        .map(|s| {
            let mut g = s.clone();
            for (i, v) in g.data_mut().iter_mut().enumerate() {
                let sd = std.data()[i];
                *v = if sd > 1e-12 { -(*v - mean.data()[i]) / (r * sd * p) } else { 0.0 };
            }
            g
        })
        .collect();
    Ok((loss, grads))
}
