use super::losses::{
    adversarial_losses, content_loss_grad, discriminator_loss_grad, diversity_loss_grad, dsgan_loss_grad,
    dsgan_tau, generator_adv_grad, gensim_loss_grad,
};
use super::{draw_noise, GanModel, LossWeights, TrainConfig, Variant};
use crate::autonet::{adam_update, AdamState, Network, Tape, Tensor};
use crate::error::{Error, Result};
use crate::filters::upsample_nearest;
use crate::grid::{Dataset, Field};
use crate::moments::MomentField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Which networks were updated in a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Both,
    GeneratorOnly,
    DiscriminatorOnly,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Both => "both",
            Action::GeneratorOnly => "g_only",
            Action::DiscriminatorOnly => "d_only",
        }
    }

    fn trains_g(self) -> bool {
        self != Action::DiscriminatorOnly
    }

    fn trains_d(self) -> bool {
        self != Action::GeneratorOnly
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub l_content: f64,
    pub l_adv_g: f64,
    pub l_adv_d: f64,
    pub l_div: f64,
    pub action: Action,
    /// `|alpha L_content|`, `|beta L_adv_G|`, `|gamma L_div|` over their sum.
    pub share_content: f64,
    pub share_adv: f64,
    pub share_div: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,l_content,l_adv_g,l_adv_d,l_div,action,share_content,share_adv,share_div\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}",
                r.step,
                r.l_content,
                r.l_adv_g,
                r.l_adv_d,
                r.l_div,
                r.action.name(),
                r.share_content,
                r.share_adv,
                r.share_div
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Mean `(content, adversarial, diversity)` shares over the trailing
    /// `fraction` of the steps.
    pub fn mean_shares(&self, fraction: f64) -> (f64, f64, f64) {
        let n = self.records.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(n.min(1), n);
        let tail = &self.records[n - k..];
        let div = tail.len().max(1) as f64;
        let sum = |f: fn(&StepRecord) -> f64| tail.iter().map(f).sum::<f64>() / div;
        (sum(|r| r.share_content), sum(|r| r.share_adv), sum(|r| r.share_div))
    }
}

struct Balancer {
    theta_lo: f64,
    theta_hi: f64,
    k_max: usize,
    d_skips: usize,
    g_skips: usize,
}

impl Balancer {
    fn decide(&mut self, last_adv_g: Option<f64>) -> Action {
        let action = match last_adv_g {
            Some(l) if l > self.theta_hi && self.d_skips < self.k_max => Action::GeneratorOnly,
            Some(l) if l < self.theta_lo && self.g_skips < self.k_max => Action::DiscriminatorOnly,
            _ => Action::Both,
        };
        match action {
            Action::GeneratorOnly => {
                self.d_skips += 1;
                self.g_skips = 0;
            }
            Action::DiscriminatorOnly => {
                self.g_skips += 1;
                self.d_skips = 0;
            }
            Action::Both => {
                self.d_skips = 0;
                self.g_skips = 0;
            }
        }
        action
    }
}

fn column(t: &Tensor) -> Vec<f64> {
    t.data.clone()
}

fn prob_tensor(g: Vec<f64>) -> Tensor {
    let n = g.len();
    Tensor::from_vec(n, 1, 1, 1, g).expect("length matches")
}

/// Gradient of the weighted diversity term with respect to every generated
/// SF field, plus the batch-mean diversity loss.
fn diversity_term(
    variant: Variant,
    sf: &[Field],
    sr: &[Field],
    noise: &Tensor,
    moments: &[&MomentField],
    r: usize,
) -> Result<(f64, Vec<Field>)> {
    let m = moments.len();
    let mut grads: Vec<Field> = sf.iter().map(|f| f.map(|_| 0.0)).collect();
    if variant == Variant::None {
        return Ok((0.0, grads));
    }
    let mut total = 0.0;
    let inv_m = 1.0 / m as f64;
    for g in 0..m {
        let range = g * r..(g + 1) * r;
        match variant {
            Variant::Diversity => {
                let (l, gs) = diversity_loss_grad(&sf[range.clone()], moments[g])?;
                total += l;
                for (dst, src) in grads[range].iter_mut().zip(gs) {
                    *dst = src.scale(inv_m);
                }
            }
            Variant::Gensim => {
                let (l, gs) = gensim_loss_grad(&sf[range.clone()])?;
                total += l;
                for (dst, src) in grads[range].iter_mut().zip(gs) {
                    *dst = src.scale(inv_m);
                }
            }
            Variant::Dsgan => {
                let tau = dsgan_tau(moments[g], noise.sample_len());
                let pairs = r / 2;
                let scale = inv_m / pairs as f64;
                let mut l_group = 0.0;
                for p in 0..pairs {
                    let (a, b) = (g * r + 2 * p, g * r + 2 * p + 1);
                    let (l, ga, gb) = dsgan_loss_grad(&sr[a], &sr[b], noise.sample(a), noise.sample(b), tau)?;
                    l_group += l / pairs as f64;
                    grads[a] = ga.scale(scale);
                    grads[b] = gb.scale(scale);
                }
                total += l_group;
            }
            Variant::None => unreachable!(),
        }
    }
    Ok((total * inv_m, grads))
}

fn add_param_grads(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
    for (x, y) in a.iter_mut().zip(b) {
        for (u, v) in x.iter_mut().zip(y) {
            *u += v;
        }
    }
}

fn d_backward(d: &Network, tape: Tape, grad: Vec<f64>) -> Result<Vec<Vec<f64>>> {
    Ok(d.backward(tape, &prob_tensor(grad))?.params)
}

/// Adversarial training with balancing. The dataset must carry moment
/// fields when the variant uses them.
pub fn train(cfg: &TrainConfig, ds: &Dataset, weights: &LossWeights) -> Result<(GanModel, TrainLog)> {
    cfg.validate()?;
    weights.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let moments = match (&ds.moments, cfg.variant.needs_moments()) {
        (Some(m), _) => Some(m),
        (None, true) => {
            return Err(Error::MissingMoments(format!(
                "variant {} needs moment fields attached to the dataset (run fit-moments first)",
                cfg.variant.name()
            )))
        }
        (None, false) => None,
    };
    let delta = ds.delta;
    let (hl, wl) = (ds.lr_height(), ds.lr_width());
    let mut model = GanModel::new(&cfg.arch, delta, hl, wl, cfg.seed)?;
    let nc = model.noise_channels();
    let mut adam_g = AdamState::new(&model.generator);
    let mut adam_d = AdamState::new(&model.discriminator);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let lrs: Vec<Field> = (0..ds.len()).map(|i| ds.lr(i)).collect();
    let ups: Vec<Field> = lrs.iter().map(|l| upsample_nearest(l, delta)).collect();
    let mut balancer = Balancer {
        theta_lo: cfg.theta_lo,
        theta_hi: cfg.theta_hi,
        k_max: cfg.k_max,
        d_skips: 0,
        g_skips: 0,
    };
    let mut last_adv_g = None;
    let mut log = TrainLog::default();
    let batch = cfg.m * cfg.r;

    for step in 0..cfg.steps {
        let picks: Vec<usize> = (0..cfg.m).map(|_| rng.gen_range(0..ds.len())).collect();
        let rep: Vec<usize> = picks.iter().flat_map(|&i| std::iter::repeat(i).take(cfg.r)).collect();
        let z = draw_noise(batch, nc, hl, wl, &mut rng);
        let real_idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..ds.len())).collect();
        let action = balancer.decide(last_adv_g);

        let x = Tensor::from_fields(rep.iter().map(|&i| &lrs[i]))?;
        let (sf_t, g_tape) = model.generator.forward_taped(&x, Some(&z))?;
        let sf = sf_t.fields();
        let sr: Vec<Field> = sf.iter().zip(&rep).map(|(f, &i)| ups[i].add(f)).collect::<Result<_>>()?;
        let sr_t = Tensor::from_fields(&sr)?;
        let real_t = Tensor::from_fields(real_idx.iter().map(|&i| &ds.samples[i]))?;

        let d = &model.discriminator;
        let (p_real, tape_real) = d.forward_taped(&real_t, None)?;
        let (p_fake, tape_fake) = d.forward_taped(&sr_t, None)?;
        let (l_adv_d, _) = adversarial_losses(&p_real.data, &p_fake.data)?;
        let (p_fake, tape_fake) = if action.trains_d() {
            let (gr, gf) = discriminator_loss_grad(&p_real.data, &p_fake.data)?;
            let mut gp = d_backward(d, tape_real, gr)?;
            add_param_grads(&mut gp, &d_backward(d, tape_fake, gf)?);
            adam_update(&mut model.discriminator, &gp, &mut adam_d, &cfg.adam_d)?;
            model.discriminator.forward_taped(&sr_t, None)?
        } else {
            (p_fake, tape_fake)
        };
        let fake_probs = column(&p_fake);
        let (_, l_adv_g) = adversarial_losses(&p_real.data, &fake_probs)?;

        let lr_rep: Vec<Field> = rep.iter().map(|&i| lrs[i].clone()).collect();
        let (l_content, g_content) = content_loss_grad(&sr, &lr_rep, delta)?;
        let mf: Vec<&MomentField> = match moments {
            Some(m) => picks.iter().map(|&i| &m[i]).collect(),
            None => Vec::new(),
        };
        let (l_div, g_div) = if cfg.variant == Variant::None {
            (0.0, Vec::new())
        } else {
            diversity_term(cfg.variant, &sf, &sr, &z, &mf_or_empty(&mf, cfg.m)?, cfg.r)?
        };
        for (name, v) in [("content", l_content), ("adv_g", l_adv_g), ("adv_d", l_adv_d), ("div", l_div)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} loss at step {step} (action {})", action.name())));
            }
        }

        if action.trains_g() {
            let g_adv = model
                .discriminator
                .backward_input(tape_fake, &prob_tensor(generator_adv_grad(&fake_probs)))?;
            let mut up = Tensor::zeros(sf_t.n, sf_t.c, sf_t.h, sf_t.w);
            for s in 0..batch {
                let dst = up.sample_mut(s);
                let gc = g_content[s].data();
                let ga = g_adv.sample(s);
                for i in 0..dst.len() {
                    dst[i] = weights.alpha * gc[i] + weights.beta * ga[i];
                }
                if let Some(gd) = g_div.get(s) {
                    for (o, v) in dst.iter_mut().zip(gd.data()) {
                        *o += weights.gamma * v;
                    }
                }
            }
            let grads = model.generator.backward(g_tape, &up)?;
            adam_update(&mut model.generator, &grads.params, &mut adam_g, &cfg.adam_g)?;
        }

        let parts = [
            (weights.alpha * l_content).abs(),
            (weights.beta * l_adv_g).abs(),
            (weights.gamma * l_div).abs(),
        ];
        let total: f64 = parts.iter().sum();
        let share = |v: f64| if total > 0.0 { v / total } else { 1.0 / 3.0 };
        log.records.push(StepRecord {
            step,
            l_content,
            l_adv_g,
            l_adv_d,
            l_div,
            action,
            share_content: share(parts[0]),
            share_adv: share(parts[1]),
            share_div: share(parts[2]),
        });
        last_adv_g = Some(l_adv_g);
    }
    Ok((model, log))
}

fn mf_or_empty<'a>(mf: &[&'a MomentField], m: usize) -> Result<Vec<&'a MomentField>> {
    if mf.len() == m {
        Ok(mf.to_vec())
    } else {
        Err(Error::MissingMoments("moment fields required by the diversity variant".into()))
    }
}
