//! Conditional GAN with a moment-matching diversity loss.
//!
//! The generator maps an LR field plus uniform noise to a subfilter field;
//! super-resolved output is `upsample(lr) + G(lr, z)`. The discriminator sees
//! full HR-resolution fields.

mod losses;
mod train;

pub use losses::{
    adversarial_losses, content_loss, content_loss_grad, discriminator_loss_grad, diversity_loss,
    diversity_loss_grad, dsgan_loss, dsgan_loss_grad, dsgan_tau, generator_adv_grad, gensim_loss,
    gensim_loss_grad, sample_moments, EPS_LOG,
};
pub use train::{train, Action, StepRecord, TrainLog};

use crate::autonet::{load_networks, save_networks, AdamConfig, LayerSpec, Network, Tensor};
use crate::error::{Error, Result};
use crate::filters::upsample_nearest;
use crate::grid::Field;
use crate::CHANNELS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.01,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    /// Default weights with the diversity weight used for `variant`:
    /// 1 for the moment loss, 8 for DSGAN and 0.01 for Generator Similarity.
    pub fn for_variant(variant: Variant) -> Self {
        let gamma = match variant {
            Variant::Diversity => 1.0,
            Variant::Dsgan => 8.0,
            Variant::Gensim => 0.01,
            Variant::None => 0.0,
        };
        LossWeights {
            gamma,
            ..LossWeights::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Which diversity term enters the generator loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Diversity,
    Dsgan,
    Gensim,
    None,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Diversity => "diversity",
            Variant::Dsgan => "dsgan",
            Variant::Gensim => "gensim",
            Variant::None => "none",
        }
    }

    pub fn needs_moments(self) -> bool {
        matches!(self, Variant::Diversity | Variant::Dsgan)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diversity" => Ok(Variant::Diversity),
            "dsgan" => Ok(Variant::Dsgan),
            "gensim" => Ok(Variant::Gensim),
            "none" => Ok(Variant::None),
            _ => Err(Error::invalid(format!(
                "unknown variant {s:?} (expected diversity, dsgan, gensim or none)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// LR fields per step.
    pub m: usize,
    /// Generated samples per LR field.
    pub r: usize,
    pub steps: usize,
    pub seed: u64,
    pub variant: Variant,
    pub adam_g: AdamConfig,
    pub adam_d: AdamConfig,
    /// Below this generator adversarial loss only the discriminator trains.
    pub theta_lo: f64,
    /// Above this generator adversarial loss only the generator trains.
    pub theta_hi: f64,
    /// Maximum consecutive skipped updates for either network.
    pub k_max: usize,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig {
            lr: 1e-3,
            beta1: 0.5,
            ..AdamConfig::default()
        };
        TrainConfig {
            m: 4,
            r: 8,
            steps: 2000,
            seed: 0,
            variant: Variant::Diversity,
            adam_g: adam,
            adam_d: adam,
            theta_lo: 0.45 * std::f64::consts::LN_2,
            theta_hi: 2.0 * std::f64::consts::LN_2,
            k_max: 5,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.steps == 0 {
            return Err(Error::invalid("m and steps must be at least 1"));
        }
        if self.r < 2 && self.variant != Variant::None {
            return Err(Error::invalid("diversity terms need r >= 2"));
        }
        if self.r == 0 {
            return Err(Error::invalid("r must be at least 1"));
        }
        if !(self.theta_lo < self.theta_hi) {
            return Err(Error::invalid("balance thresholds must satisfy theta_lo < theta_hi"));
        }
        Ok(())
    }
}

/// Desk-scale network sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// Channels after the LR expansion layer.
    pub expand: usize,
    pub noise_channels: usize,
    pub res_blocks: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            expand: 12,
            noise_channels: 4,
            res_blocks: 4,
        }
    }
}

fn generator_specs(arch: &Architecture, delta: usize) -> Result<Vec<LayerSpec>> {
    let f = arch.expand + arch.noise_channels;
    let mut specs = vec![
        LayerSpec::Conv3x3 {
            cin: CHANNELS,
            cout: arch.expand,
        },
        LayerSpec::Relu,
        LayerSpec::AppendNoise {
            channels: arch.noise_channels,
        },
    ];
    specs.extend((0..arch.res_blocks).map(|_| LayerSpec::Residual { filters: f }));
    // one depth-to-space(2) stage per factor of two in delta
    let mut remaining = delta;
    let mut cin = f;
    while remaining > 1 {
        if remaining % 2 != 0 {
            return Err(Error::invalid(format!("generator needs a power-of-two delta, got {delta}")));
        }
        specs.push(LayerSpec::Conv3x3 { cin, cout: 16 });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::DepthToSpace(2));
        cin = 4;
        remaining /= 2;
    }
    specs.push(LayerSpec::Conv3x3 { cin, cout: CHANNELS });
    Ok(specs)
}

fn discriminator_specs(height: usize, width: usize) -> Result<Vec<LayerSpec>> {
    if height % 8 != 0 || width % 8 != 0 {
        return Err(Error::invalid(format!("discriminator needs HR dims divisible by 8, got {height}x{width}")));
    }
    let lrelu = LayerSpec::LeakyRelu(0.2);
    let features = 16 * (height / 8) * (width / 8);
    Ok(vec![
        LayerSpec::Conv3x3 { cin: CHANNELS, cout: 4 },
        lrelu.clone(),
        LayerSpec::SpaceToDepth(2),
        LayerSpec::Conv3x3 { cin: 16, cout: 8 },
        lrelu.clone(),
        LayerSpec::SpaceToDepth(2),
        LayerSpec::Conv3x3 { cin: 32, cout: 16 },
        lrelu.clone(),
        LayerSpec::SpaceToDepth(2),
        LayerSpec::Conv3x3 { cin: 64, cout: 16 },
        lrelu.clone(),
        LayerSpec::Dense { fin: features, fout: 32 },
        lrelu,
        LayerSpec::Dense { fin: 32, fout: 1 },
        LayerSpec::Sigmoid,
    ])
}

/// Uniform[-1, 1] noise tensor.
pub fn draw_noise(n: usize, channels: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..n * channels * h * w).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Tensor::from_vec(n, channels, h, w, data).expect("length matches")
}

const GAN_TAG: u32 = 0x4741;

/// Trained generator / discriminator pair and the grid it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub delta: usize,
    pub lr_height: usize,
    pub lr_width: usize,
}

impl GanModel {
    pub fn new(arch: &Architecture, delta: usize, lr_height: usize, lr_width: usize, seed: u64) -> Result<Self> {
        let mut g_rng = ChaCha8Rng::seed_from_u64(seed);
        g_rng.set_stream(1);
        let mut d_rng = ChaCha8Rng::seed_from_u64(seed);
        d_rng.set_stream(2);
        let generator = Network::new(generator_specs(arch, delta)?, CHANNELS, (lr_height, lr_width), &mut g_rng)?;
        let discriminator = Network::new(
            discriminator_specs(lr_height * delta, lr_width * delta)?,
            CHANNELS,
            (lr_height * delta, lr_width * delta),
            &mut d_rng,
        )?;
        Ok(GanModel {
            generator,
            discriminator,
            delta,
            lr_height,
            lr_width,
        })
    }

    pub fn noise_channels(&self) -> usize {
        self.generator.noise_channels().unwrap_or(0)
    }

    pub fn noise_len(&self) -> usize {
        self.noise_channels() * self.lr_height * self.lr_width
    }

    fn check_lr(&self, lr: &Field) -> Result<()> {
        if lr.shape() != (CHANNELS, self.lr_height, self.lr_width) {
            return Err(Error::shape(format!(
                "LR field {:?} does not match the checkpoint ({CHANNELS}, {}, {})",
                lr.shape(),
                self.lr_height,
                self.lr_width
            )));
        }
        Ok(())
    }

    /// Subfilter fields for each LR field and noise sample.
    pub fn generate_sf(&self, lrs: &[&Field], noise: &Tensor) -> Result<Vec<Field>> {
        for lr in lrs {
            self.check_lr(lr)?;
        }
        let x = Tensor::from_fields(lrs.iter().copied())?;
        Ok(self.generator.forward(&x, Some(noise))?.fields())
    }

    /// `count` super-resolved fields for one LR field; deterministic in `seed`.
    pub fn sample(&self, lr: &Field, count: usize, seed: u64) -> Result<Vec<Field>> {
        self.check_lr(lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let up = upsample_nearest(lr, self.delta);
        let mut out = Vec::with_capacity(count);
        // bounded batches keep memory flat for large ensembles
        let mut left = count;
        while left > 0 {
            let n = left.min(32);
            let z = draw_noise(n, self.noise_channels(), self.lr_height, self.lr_width, &mut rng);
            let lrs = vec![lr; n];
            for sf in self.generate_sf(&lrs, &z)? {
                out.push(up.add(&sf)?);
            }
            left -= n;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = [GAN_TAG, self.delta as u32, self.lr_height as u32, self.lr_width as u32];
        save_networks(path, &[&self.generator, &self.discriminator], &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (mut nets, meta) = load_networks(path)?;
        if meta.len() != 4 || meta[0] != GAN_TAG || nets.len() != 2 {
            return Err(Error::Malformed("not a GAN checkpoint".into()));
        }
        let discriminator = nets.pop().expect("two networks");
        let generator = nets.pop().expect("two networks");
        let model = GanModel {
            generator,
            discriminator,
            delta: meta[1] as usize,
            lr_height: meta[2] as usize,
            lr_width: meta[3] as usize,
        };
        model
            .generator
            .output_shape((model.lr_height, model.lr_width))
            .map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(model)
    }
}
