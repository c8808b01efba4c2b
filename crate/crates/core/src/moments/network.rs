//! Network-assisted moment estimation: a fully convolutional residual
//! network maps the LR field to the per-pixel target of one moment order.

use super::{MomentEstimator, MomentOrder};
use crate::autonet::{
    adam_update, load_networks, save_networks, AdamConfig, AdamState, LayerSpec, Network, Tensor,
};
use crate::error::{Error, Result};
use crate::grid::{Dataset, Field};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

/// Tag stored in the first checkpoint meta slot.
const MOMENT_NET_TAG: u32 = 0x4d4e;

/// Desk-scale architecture ladder as `(residual blocks, filters)`.
pub const NETWORK_LADDER: [(usize, usize); 3] = [(2, 4), (4, 8), (8, 16)];

/// Relative validation window for picking the smallest adequate architecture.
pub const LADDER_PLATEAU: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFitConfig {
    pub blocks: usize,
    pub filters: usize,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for NetworkFitConfig {
    fn default() -> Self {
        NetworkFitConfig {
            blocks: 2,
            filters: 4,
            epochs: 20,
            batch: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkFitReport {
    pub blocks: usize,
    pub filters: usize,
    pub train_mse: Vec<f64>,
    pub valid_mse: Vec<f64>,
}

impl NetworkFitReport {
    pub fn final_valid_mse(&self) -> f64 {
        self.valid_mse.last().copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderReport {
    pub rows: Vec<NetworkFitReport>,
    /// Index of the smallest architecture within [`LADDER_PLATEAU`] of the best.
    pub selected: usize,
}

/// Trained LR -> moment network.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentNetwork {
    pub net: Network,
    pub order: MomentOrder,
    pub delta: usize,
    pub blocks: usize,
    pub filters: usize,
}

fn architecture(blocks: usize, filters: usize, delta: usize) -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec::Conv3x3 { cin: 2, cout: filters }, LayerSpec::Relu];
    specs.extend((0..blocks).map(|_| LayerSpec::Residual { filters }));
    specs.push(LayerSpec::Conv3x3 {
        cin: filters,
        cout: 2 * delta * delta,
    });
    specs.push(LayerSpec::DepthToSpace(delta));
    specs
}

impl MomentNetwork {
    pub fn new(order: MomentOrder, delta: usize, blocks: usize, filters: usize, seed: u64) -> Result<Self> {
        if delta == 0 || filters == 0 {
            return Err(Error::invalid("delta and filters must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(architecture(blocks, filters, delta), 2, (1, 1), &mut rng)?;
        Ok(MomentNetwork {
            net,
            order,
            delta,
            blocks,
            filters,
        })
    }

    pub fn predict_batch(&self, lrs: &[&Field]) -> Result<Vec<Field>> {
        let x = Tensor::from_fields(lrs.iter().copied())?;
        Ok(self.net.forward(&x, None)?.fields())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = [
            MOMENT_NET_TAG,
            self.order.p() as u32,
            self.delta as u32,
            self.blocks as u32,
            self.filters as u32,
        ];
        save_networks(path, &[&self.net], &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (mut nets, meta) = load_networks(path)?;
        if meta.len() != 5 || meta[0] != MOMENT_NET_TAG || nets.len() != 1 {
            return Err(Error::Malformed("not a moment-network checkpoint".into()));
        }
        Ok(MomentNetwork {
            net: nets.remove(0),
            order: MomentOrder::from_p(meta[1] as u8)?,
            delta: meta[2] as usize,
            blocks: meta[3] as usize,
            filters: meta[4] as usize,
        })
    }
}

impl MomentEstimator for MomentNetwork {
    fn predict(&self, lr: &Field) -> Result<Field> {
        Ok(self.predict_batch(&[lr])?.remove(0))
    }
}

struct Pairs {
    lrs: Vec<Field>,
    targets: Vec<Field>,
}

fn regression_pairs(ds: &Dataset, order: MomentOrder, center: Option<&dyn MomentEstimator>) -> Result<Pairs> {
    let (lrs, sfs) = ds.decompose_all();
    let targets = match order {
        MomentOrder::Mean => sfs,
        MomentOrder::Variance => {
            let c = center.ok_or_else(|| Error::invalid("second-moment fit needs a mean estimator for centering"))?;
            lrs.iter()
                .zip(sfs)
                .map(|(lr, sf)| sf.zip_map(&c.predict(lr)?, |a, b| (a - b) * (a - b)))
                .collect::<Result<_>>()?
        }
    };
    Ok(Pairs { lrs, targets })
}

fn pairs_mse(m: &MomentNetwork, pairs: &Pairs, batch: usize) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for chunk in (0..pairs.lrs.len()).collect::<Vec<_>>().chunks(batch.max(1)) {
        let lrs: Vec<&Field> = chunk.iter().map(|&i| &pairs.lrs[i]).collect();
        for (pred, &i) in m.predict_batch(&lrs)?.iter().zip(chunk) {
            let t = &pairs.targets[i];
            sse += pred.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            count += t.len();
        }
    }
    Ok(sse / count as f64)
}

/// Trains one architecture by minibatch MSE regression and records the
/// per-epoch train / validation error.
pub fn fit_moment_network(
    train: &Dataset,
    valid: &Dataset,
    order: MomentOrder,
    cfg: &NetworkFitConfig,
    center: Option<&dyn MomentEstimator>,
) -> Result<(MomentNetwork, NetworkFitReport)> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if train.delta != valid.delta {
        return Err(Error::shape("train and validation deltas differ"));
    }
    let tr = regression_pairs(train, order, center)?;
    let va = regression_pairs(valid, order, center)?;
    let mut model = MomentNetwork::new(order, train.delta, cfg.blocks, cfg.filters, cfg.seed)?;
    let mut state = AdamState::new(&model.net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order_idx: Vec<usize> = (0..tr.lrs.len()).collect();
    let mut report = NetworkFitReport {
        blocks: cfg.blocks,
        filters: cfg.filters,
        train_mse: Vec::with_capacity(cfg.epochs),
        valid_mse: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        order_idx.shuffle(&mut rng);
        let mut sse = 0.0;
        let mut count = 0usize;
        for chunk in order_idx.chunks(cfg.batch) {
            let x = Tensor::from_fields(chunk.iter().map(|&i| &tr.lrs[i]))?;
            let t = Tensor::from_fields(chunk.iter().map(|&i| &tr.targets[i]))?;
            let (out, tape) = model.net.forward_taped(&x, None)?;
            let n = out.data.len() as f64;
            let mut up = out.clone();
            for (u, v) in up.data.iter_mut().zip(&t.data) {
                let e = *u - v;
                sse += e * e;
                *u = 2.0 * e / n;
            }
            count += out.data.len();
            let grads = model.net.backward(tape, &up)?;
            adam_update(&mut model.net, &grads.params, &mut state, &cfg.adam)?;
        }
        let train_mse = sse / count as f64;
        if !train_mse.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        report.train_mse.push(train_mse);
        report.valid_mse.push(pairs_mse(&model, &va, cfg.batch)?);
    }
    Ok((model, report))
}

/// Index of the smallest architecture whose validation error is within
/// [`LADDER_PLATEAU`] of the best. Rows must be ordered by size.
pub fn select_architecture(rows: &[NetworkFitReport]) -> Option<usize> {
    let best = rows.iter().map(|r| r.final_valid_mse()).fold(f64::INFINITY, f64::min);
    rows.iter()
        .position(|r| r.final_valid_mse() <= best * (1.0 + LADDER_PLATEAU))
}

/// Trains every `(blocks, filters)` pair and keeps the selected network.
pub fn fit_network_ladder(
    train: &Dataset,
    valid: &Dataset,
    order: MomentOrder,
    ladder: &[(usize, usize)],
    cfg: &NetworkFitConfig,
    center: Option<&dyn MomentEstimator>,
) -> Result<(MomentNetwork, LadderReport)> {
    let mut nets = Vec::new();
    let mut rows = Vec::new();
    for &(blocks, filters) in ladder {
        let c = NetworkFitConfig {
            blocks,
            filters,
            ..cfg.clone()
        };
        let (m, r) = fit_moment_network(train, valid, order, &c, center)?;
        nets.push(m);
        rows.push(r);
    }
    let selected = select_architecture(&rows).ok_or_else(|| Error::invalid("architecture ladder is empty"))?;
    Ok((nets.swap_remove(selected), LadderReport { rows, selected }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// HR fields whose subfilter part is the same fixed zero-block-mean
    /// pattern in every sample while the LR part is random.
    fn constant_target_dataset(n: usize, seed: u64) -> Dataset {
        let d = 2;
        let pattern = [0.3, -0.1, -0.4, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| {
                let lr: Vec<f64> = (0..2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Field::from_fn(2, 8, 8, |c, y, x| {
                    let sign = if c == 0 { 1.0 } else { -1.0 };
                    lr[(c * 4 + y / d) * 4 + x / d] + sign * pattern[(y % d) * d + x % d]
                })
            })
            .collect();
        Dataset::new(samples, d).unwrap()
    }

    #[test]
    fn constant_target_is_learned() {
        let train = constant_target_dataset(64, 1);
        let valid = constant_target_dataset(16, 2);
        let cfg = NetworkFitConfig {
            epochs: 20,
            batch: 8,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            ..NetworkFitConfig::default()
        };
        let (_, report) = fit_moment_network(&train, &valid, MomentOrder::Mean, &cfg, None).unwrap();
        assert_eq!(report.valid_mse.len(), 20);
        assert!(report.final_valid_mse() < 1e-3, "{:?}", report.valid_mse);
    }

    #[test]
    fn ladder_selects_smallest_within_window() {
        let row = |v: f64| NetworkFitReport {
            blocks: 0,
            filters: 0,
            train_mse: vec![v],
            valid_mse: vec![v],
        };
        assert_eq!(select_architecture(&[row(1.005), row(1.0), row(0.99)]), Some(0));
        assert_eq!(select_architecture(&[row(1.1), row(1.0), row(1.01)]), Some(1));
        assert_eq!(select_architecture(&[]), None);
    }

    #[test]
    fn variance_needs_center_and_round_trips() {
        let ds = constant_target_dataset(4, 3);
        let cfg = NetworkFitConfig {
            epochs: 1,
            ..NetworkFitConfig::default()
        };
        assert!(fit_moment_network(&ds, &ds, MomentOrder::Variance, &cfg, None).is_err());
        let (mean, _) = fit_moment_network(&ds, &ds, MomentOrder::Mean, &cfg, None).unwrap();
        let (var, _) = fit_moment_network(&ds, &ds, MomentOrder::Variance, &cfg, Some(&mean)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("var.cgn");
        var.save(&path).unwrap();
        assert_eq!(MomentNetwork::load(&path).unwrap(), var);
    }
}
