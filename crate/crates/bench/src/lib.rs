//! Deterministic inputs shared by the benchmarks.

use divgan_core::autonet::Tensor;
use divgan_core::gan::{draw_noise, Architecture, GanModel};
use divgan_core::grid::synth_dataset;
use divgan_core::{Dataset, Field, SynthParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn dataset(n: usize, size: usize, warp: f64, seed: u64) -> Dataset {
    let p = SynthParams {
        height: size,
        width: size,
        warp,
        ..SynthParams::default()
    };
    synth_dataset(&p, n, seed).expect("valid synthetic parameters")
}

/// Freshly initialized GAN for `size x size` HR fields at delta 4, with a
/// batch of `batch` LR inputs and matching noise.
pub struct GeneratorFixture {
    pub model: GanModel,
    pub lrs: Vec<Field>,
    pub input: Tensor,
    pub noise: Tensor,
}

pub fn generator(size: usize, batch: usize, seed: u64) -> GeneratorFixture {
    let ds = dataset(batch, size, 0.0, seed);
    let model = GanModel::new(&Architecture::default(), 4, size / 4, size / 4, seed).expect("valid architecture");
    let lrs: Vec<Field> = (0..batch).map(|i| ds.lr(i)).collect();
    let input = Tensor::from_fields(lrs.iter()).expect("uniform shapes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = draw_noise(batch, model.noise_channels(), size / 4, size / 4, &mut rng);
    GeneratorFixture { model, lrs, input, noise }
}
