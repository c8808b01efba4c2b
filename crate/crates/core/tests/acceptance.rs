//! Acceptance suite: one PASS/FAIL line per criterion on stdout, then a
//! single assertion over all of them. Run with `--nocapture` to see the
//! table while it is produced; the whole suite takes about twenty minutes on
//! one core, dominated by the three 2000-step GAN runs.

use divgan_core::autonet::{grad_check, LayerSpec, Network, Tensor};
use divgan_core::deconv::adm_deconvolve;
use divgan_core::eval::{consistency_metric, diversity_metric};
use divgan_core::filters::{upsample_nearest, BoxUpsample, GaussianFilter};
use divgan_core::gan::{
    adversarial_losses, content_loss, diversity_loss, sample_moments, train, GanModel, LossWeights, TrainConfig,
    TrainLog, Variant,
};
use divgan_core::grid::{encode_dataset, split_dataset, synth_dataset, Dataset};
use divgan_core::moments::{
    eval_moments, fit_stochastic, moment_mse, sweep_models, BasisSpec, FitOptions, GaussianOracle, MomentField,
    MomentOrder, TERM_COUNTS,
};
use divgan_core::{Field, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{LN_2, PI};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_l2(a: &Field, b: &Field) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.data().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

const ORACLE_TRAIN: usize = 20_000;
const ORACLE_FIELDS: usize = 50;

/// Criteria 1 and 2 share one fit.
fn oracle_equivalence() -> (Outcome, Outcome) {
    let t = Instant::now();
    let p = SynthParams::default();
    let train_set = synth_dataset(&p, ORACLE_TRAIN, 101).unwrap();
    let valid = synth_dataset(&p, ORACLE_FIELDS, 102).unwrap();
    let spec = BasisSpec::model(3).unwrap();
    let opts = FitOptions::default();
    let mean = fit_stochastic(&train_set, MomentOrder::Mean, &spec, &opts, None).unwrap();
    let var = fit_stochastic(&train_set, MomentOrder::Variance, &spec, &opts, Some(&mean)).unwrap();
    drop(train_set);
    let oracle = GaussianOracle::from_synth(&p).unwrap();
    let (mut em, mut ev) = (0.0, 0.0);
    for i in 0..ORACLE_FIELDS {
        let lr = valid.lr(i);
        let est = eval_moments(&mean, &var, &lr).unwrap();
        let exact = oracle.moments(&lr).unwrap();
        em += rel_l2(&est.mean, &exact.mean);
        ev += rel_l2(&est.variance, &exact.variance);
    }
    em /= ORACLE_FIELDS as f64;
    ev /= ORACLE_FIELDS as f64;
    let secs = t.elapsed().as_secs_f64();
    (
        outcome(
            em <= 0.03 && secs <= 600.0,
            format!("Model 3 mean vs oracle: rel L2 {:.2}% (limit 3%), {secs:.0} s (limit 600 s)", 100.0 * em),
        ),
        outcome(ev <= 0.05, format!("Model 3 centered variance vs oracle: rel L2 {:.2}% (limit 5%)", 100.0 * ev)),
    )
}

fn nested_monotonicity() -> Outcome {
    let p = SynthParams {
        height: 16,
        width: 16,
        warp: 0.5,
        ..SynthParams::default()
    };
    let ds = synth_dataset(&p, 1200, 103).unwrap();
    let opts = FitOptions::default();
    let ids: Vec<u8> = (0..15).collect();
    let counts: Vec<usize> = ids.iter().map(|&i| BasisSpec::model(i).unwrap().len()).collect();
    let expected = [2, 4, 5, 13, 21, 37, 53, 77, 85, 133, 149, 173, 197, 261, 293];
    let mut ok = counts == expected && TERM_COUNTS == expected;
    let mut worst = f64::NEG_INFINITY;
    let center = fit_stochastic(&ds, MomentOrder::Mean, &BasisSpec::model(3).unwrap(), &opts, None).unwrap();
    for order in [MomentOrder::Mean, MomentOrder::Variance] {
        let c = (order == MomentOrder::Variance).then_some(&center as &dyn divgan_core::moments::MomentEstimator);
        let rep = sweep_models(&ds, &ds, order, &ids, &opts, c).unwrap();
        for w in rep.rows.windows(2) {
            let tol = 10.0 * opts.ridge * w[0].train_mse;
            worst = worst.max((w[1].train_mse - w[0].train_mse) / w[0].train_mse);
            ok &= w[1].train_mse <= w[0].train_mse + tol;
        }
    }
    outcome(
        ok,
        format!("term counts {counts:?}; largest relative train-MSE increase {worst:.2e} (tolerance 10*ridge)"),
    )
}

fn quadratic_beats_linear() -> Outcome {
    let p = SynthParams {
        warp: 0.5,
        ..SynthParams::default()
    };
    let ds = synth_dataset(&p, 4000, 104).unwrap();
    let (tr, va) = split_dataset(&ds, 0.8, 105).unwrap();
    let opts = FitOptions::default();
    let quad = BasisSpec::model(6).unwrap();
    let lin = BasisSpec::linear_subset(6).unwrap();
    let center = fit_stochastic(&tr, MomentOrder::Mean, &quad, &opts, None).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for order in [MomentOrder::Mean, MomentOrder::Variance] {
        let c = (order == MomentOrder::Variance).then_some(&center as &dyn divgan_core::moments::MomentEstimator);
        let q = fit_stochastic(&tr, order, &quad, &opts, c).unwrap();
        let l = fit_stochastic(&tr, order, &lin, &opts, c).unwrap();
        let (vq, vl) = (moment_mse(&q, &va, order, c).unwrap(), moment_mse(&l, &va, order, c).unwrap());
        ok &= vq < vl;
        parts.push(format!("p={} quadratic {vq:.6e} vs linear {vl:.6e}", order.p()));
    }
    outcome(ok, parts.join("; "))
}

fn adm_degeneracy() -> Outcome {
    let p = SynthParams::default();
    let ds = synth_dataset(&p, 3, 106).unwrap();
    let boxed = BoxUpsample { delta: 4 };
    let mut bitwise = true;
    for i in 0..ds.len() {
        let filtered = upsample_nearest(&ds.lr(i), 4);
        for n in 1..=5 {
            let out = adm_deconvolve(&filtered, &boxed, n).unwrap();
            bitwise &= out.data().iter().zip(filtered.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    let g = GaussianFilter::new(4.0).unwrap();
    let (h, w, k, a) = (32, 32, 3.0, 1.3);
    let t = g.kernel().transfer(k, w);
    let mode = |amp: f64| Field::from_fn(2, h, w, |_, _, x| amp * (2.0 * PI * k * x as f64 / w as f64).cos());
    let out = adm_deconvolve(&mode(a * t), &g, 5).unwrap();
    let amp = a * t * (0..=5).map(|i| (1.0 - t).powi(i)).sum::<f64>();
    let err = out.max_abs_diff(&mode(amp)) / amp.abs();
    outcome(
        bitwise && err <= 1e-10,
        format!("box+upsample identity for n=1..5: {bitwise}; Gaussian single-mode relative error {err:.2e}"),
    )
}

fn random_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_fidelity() -> Outcome {
    let cases: Vec<(&str, Vec<LayerSpec>, usize, (usize, usize), Option<usize>)> = vec![
        ("conv3x3", vec![LayerSpec::Conv3x3 { cin: 2, cout: 3 }], 2, (5, 4), None),
        ("dense", vec![LayerSpec::Dense { fin: 12, fout: 4 }], 3, (2, 2), None),
        ("leaky_relu", vec![LayerSpec::Conv3x3 { cin: 2, cout: 2 }, LayerSpec::LeakyRelu(0.2)], 2, (4, 4), None),
        ("relu", vec![LayerSpec::Conv3x3 { cin: 2, cout: 2 }, LayerSpec::Relu], 2, (4, 4), None),
        ("sigmoid", vec![LayerSpec::Dense { fin: 8, fout: 2 }, LayerSpec::Sigmoid], 2, (2, 2), None),
        ("depth_to_space", vec![LayerSpec::Conv3x3 { cin: 2, cout: 8 }, LayerSpec::DepthToSpace(2)], 2, (3, 3), None),
        ("space_to_depth", vec![LayerSpec::SpaceToDepth(2), LayerSpec::Conv3x3 { cin: 8, cout: 2 }], 2, (4, 4), None),
        ("residual", vec![LayerSpec::Conv3x3 { cin: 2, cout: 3 }, LayerSpec::Residual { filters: 3 }], 2, (4, 4), None),
        ("append_noise", vec![LayerSpec::AppendNoise { channels: 2 }, LayerSpec::Conv3x3 { cin: 4, cout: 2 }], 2, (3, 3), Some(2)),
    ];
    let mut worst = 0.0f64;
    let mut worst_name = "";
    let mut ok = true;
    for (i, (name, specs, cin, hw, noise)) in cases.into_iter().enumerate() {
        let net = Network::new(specs, cin, hw, &mut ChaCha8Rng::seed_from_u64(200 + i as u64)).unwrap();
        let x = random_tensor(2, cin, hw.0, hw.1, 300 + i as u64);
        let z = noise.map(|k| random_tensor(2, k, hw.0, hw.1, 400 + i as u64));
        let r = grad_check(&net, &x, z.as_ref(), 1e-3).unwrap();
        ok &= r.max_rel_err <= 1e-4 && r.checked > 0;
        if r.max_rel_err > worst {
            worst = r.max_rel_err;
            worst_name = name;
        }
    }
    outcome(ok, format!("9 layer types; worst max relative error {worst:.2e} ({worst_name})"))
}

fn loss_identities() -> Outcome {
    let half = vec![0.5; 6];
    let (ld, lg) = adversarial_losses(&half, &half).unwrap();
    let adv_ok = (ld - 2.0 * LN_2).abs() <= 1e-12 && (lg - LN_2).abs() <= 1e-12;

    // samples built so that their mean / population std equal (mu, sigma)
    let (h, w) = (8, 8);
    let mu = Field::from_fn(2, h, w, |c, y, x| 0.1 * (c + y) as f64 - 0.05 * x as f64);
    let sigma = Field::from_fn(2, h, w, |c, y, x| 0.2 + 0.01 * (c * 7 + y * 3 + x) as f64);
    let samples = vec![
        mu.zip_map(&sigma, |m, s| m + s).unwrap(),
        mu.zip_map(&sigma, |m, s| m - s).unwrap(),
    ];
    let (sm, ss) = sample_moments(&samples).unwrap();
    let mf = MomentField {
        mean: sm.clone(),
        variance: ss.map(|s| s * s),
    };
    let zero = diversity_loss(&samples, &mf).unwrap();
    let shifted = MomentField {
        mean: mf.mean.map(|v| v + 1e-3),
        variance: mf.variance.clone(),
    };
    let wider = MomentField {
        mean: mf.mean.clone(),
        variance: mf.variance.map(|v| v * 1.01),
    };
    let pos_mean = diversity_loss(&samples, &shifted).unwrap();
    let pos_var = diversity_loss(&samples, &wider).unwrap();
    let div_ok = zero.abs() <= 1e-12 && pos_mean > 0.0 && pos_var > 0.0 && mu.max_abs_diff(&sm) < 1e-12;

    let lr = Field::from_fn(2, 2, 2, |c, y, x| (c as f64 - 0.5) * (1.0 + y as f64) + 0.3 * x as f64);
    let up = upsample_nearest(&lr, 4);
    let lc = content_loss(&[up.clone(), up], &[lr.clone(), lr], 4).unwrap();
    let content_ok = lc == 0.0;

    outcome(
        adv_ok && div_ok && content_ok,
        format!(
            "adversarial at D=0.5: ({:.3e}, {:.3e}) off; diversity matched {zero:.1e}, perturbed {pos_mean:.1e}/{pos_var:.1e}; content on upsampled LR {lc:.1e}",
            ld - 2.0 * LN_2,
            lg - LN_2
        ),
    )
}

struct GanRun {
    variant: Variant,
    diversity: f64,
    consistency: f64,
    secs: f64,
    log: TrainLog,
}

/// Training data with Model 3 moments attached, plus held-out LR fields
/// and their oracle moments as the diversity reference.
fn gan_setup() -> (Dataset, Vec<Field>, Vec<MomentField>) {
    let p = SynthParams::default();
    let mut ds = synth_dataset(&p, 2000, 1).unwrap();
    let spec = BasisSpec::model(3).unwrap();
    let opts = FitOptions::default();
    let mean = fit_stochastic(&ds, MomentOrder::Mean, &spec, &opts, None).unwrap();
    let var = fit_stochastic(&ds, MomentOrder::Variance, &spec, &opts, Some(&mean)).unwrap();
    let mfs = (0..ds.len()).map(|i| eval_moments(&mean, &var, &ds.lr(i)).unwrap()).collect();
    ds.attach_moments(mfs).unwrap();
    let valid = synth_dataset(&p, 50, 2).unwrap();
    let oracle = GaussianOracle::from_synth(&p).unwrap();
    let lrs: Vec<Field> = (0..valid.len()).map(|i| valid.lr(i)).collect();
    let refs = lrs.iter().map(|l| oracle.moments(l).unwrap()).collect();
    (ds, lrs, refs)
}

fn gan_runs() -> Vec<GanRun> {
    let (ds, lrs, refs) = gan_setup();
    [Variant::Diversity, Variant::None, Variant::Gensim]
        .into_iter()
        .map(|variant| {
            let cfg = TrainConfig {
                steps: 2000,
                variant,
                seed: 1,
                ..TrainConfig::default()
            };
            let t = Instant::now();
            let (model, log) = train(&cfg, &ds, &LossWeights::for_variant(variant)).unwrap();
            let secs = t.elapsed().as_secs_f64();
            let ens: Vec<Vec<Field>> =
                lrs.iter().enumerate().map(|(i, l)| model.sample(l, 16, i as u64).unwrap()).collect();
            let (diversity, _) = diversity_metric(&ens, &refs).unwrap();
            let (consistency, _) = consistency_metric(&ens, &lrs, ds.delta).unwrap();
            println!("    {:<9} diversity {diversity:6.2}%  consistency {consistency:5.2}%  {secs:5.0} s", variant.name());
            GanRun {
                variant,
                diversity,
                consistency,
                secs,
                log,
            }
        })
        .collect()
}

fn diversity_ordering(runs: &[GanRun]) -> Outcome {
    let get = |v: Variant| runs.iter().find(|r| r.variant == v).unwrap();
    let (d, n, g) = (get(Variant::Diversity), get(Variant::None), get(Variant::Gensim));
    let secs: f64 = runs.iter().map(|r| r.secs).sum();
    let ordered = d.diversity + 10.0 <= n.diversity && d.diversity + 10.0 <= g.diversity;
    let consistent = runs.iter().all(|r| r.consistency <= 10.0);
    outcome(
        ordered && consistent && secs <= 1800.0,
        format!(
            "diversity metric {:.2}% vs none {:.2}% / gensim {:.2}%; max consistency {:.2}%; {secs:.0} s (limit 1800 s)",
            d.diversity,
            n.diversity,
            g.diversity,
            runs.iter().map(|r| r.consistency).fold(0.0, f64::max)
        ),
    )
}

fn loss_balance(runs: &[GanRun]) -> Outcome {
    let d = runs.iter().find(|r| r.variant == Variant::Diversity).unwrap();
    let (c, a, v) = d.log.mean_shares(0.25);
    outcome(
        c >= 0.01 && a >= 0.01 && v >= 0.01,
        format!(
            "final-quarter shares: content {:.2}%, adversarial {:.2}%, diversity {:.2}% (each >= 1%)",
            100.0 * c,
            100.0 * a,
            100.0 * v
        ),
    )
}

/// Library-level reproduction of what `gen-data`, `fit-moments`, `train`
/// and `sample` persist; the CLI tests repeat this through the binary.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let p = SynthParams {
            height: 16,
            width: 16,
            ..SynthParams::default()
        };
        let mut ds = synth_dataset(&p, 64, 7).unwrap();
        let data = encode_dataset(&ds).unwrap();
        let spec = BasisSpec::model(1).unwrap();
        let opts = FitOptions::default();
        let mean = fit_stochastic(&ds, MomentOrder::Mean, &spec, &opts, None).unwrap();
        let var = fit_stochastic(&ds, MomentOrder::Variance, &spec, &opts, Some(&mean)).unwrap();
        let mfs = (0..ds.len()).map(|i| eval_moments(&mean, &var, &ds.lr(i)).unwrap()).collect();
        ds.attach_moments(mfs).unwrap();
        let cfg = TrainConfig {
            steps: 4,
            m: 2,
            r: 3,
            seed: 7,
            ..TrainConfig::default()
        };
        let (model, log) = train(&cfg, &ds, &LossWeights::default()).unwrap();
        let ck = dir.path().join(format!("{tag}.cgn"));
        model.save(&ck).unwrap();
        let loaded = GanModel::load(&ck).unwrap();
        let members: Vec<Field> = (0..4).flat_map(|i| loaded.sample(&ds.lr(i), 3, 11 + i as u64).unwrap()).collect();
        let ens = Dataset::new(members, ds.delta).unwrap();
        vec![
            data,
            mean.encode().unwrap(),
            var.encode().unwrap(),
            std::fs::read(&ck).unwrap(),
            log.to_csv().into_bytes(),
            encode_dataset(&ens).unwrap(),
        ]
    };
    let (a, b) = (run("a"), run("b"));
    let same: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x == y).collect();
    outcome(
        same.iter().all(|&s| s),
        format!("dataset / mean / variance / checkpoint / log / samples identical across runs: {same:?}"),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n:2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    let (c1, c2) = oracle_equivalence();
    report(1, "oracle mean equivalence", c1);
    report(2, "oracle variance equivalence", c2);
    report(3, "nested-model monotonicity", nested_monotonicity());
    report(4, "quadratic beats linear (warp 0.5)", quadratic_beats_linear());
    report(5, "ADM degeneracy", adm_degeneracy());
    report(6, "gradient fidelity", gradient_fidelity());
    report(7, "loss identities", loss_identities());
    let runs = gan_runs();
    report(8, "diversity ordering", diversity_ordering(&runs));
    report(9, "loss balance", loss_balance(&runs));
    report(10, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
