//! `divgan`: data generation, moment fitting, GAN training, deconvolution
//! baselines and evaluation from the command line.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on runtime failures.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use divgan_core::deconv::{adm_deconvolve, taylor_deconvolve};
use divgan_core::eval::{emit_report, evaluate, StatsConfig};
use divgan_core::filters::{upsample_nearest, BoxUpsample, FilterOp, GaussianFilter};
use divgan_core::gan::{train, GanModel, LossWeights, TrainConfig, Variant};
use divgan_core::grid::{read_dataset, split_dataset, synth_dataset, write_dataset, Dataset, DatasetMeta, SynthParams};
use divgan_core::moments::{
    eval_moments, fit_moment_network, fit_stochastic, sweep_bases, BasisSpec, FitOptions, GaussianOracle,
    MomentEstimator, MomentField, MomentModel, MomentOrder, NetworkFitConfig,
};
use divgan_core::autonet::AdamConfig;
use divgan_core::Field;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "divgan", version, about = "Conditional moment estimation and diversity-regularized GAN deconvolution")]
#[command(args_override_self = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key=value file of default flags; flags on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (CGF1)
    GenData(GenData),
    /// Fit conditional mean and variance estimators and attach moment fields
    FitMoments(FitMoments),
    /// Train/validation error table over stochastic-estimation models
    SweepBasis(SweepBasis),
    /// Train a GAN generator/discriminator pair
    Train(TrainCmd),
    /// Deconvolve LR fields with ADM, Taylor inversion or a trained GAN
    Deconv(Deconv),
    /// Draw GAN ensembles (same as `deconv --method gan`)
    Sample(SampleCmd),
    /// Diversity / consistency metrics and turbulence statistics
    Evaluate(EvaluateCmd),
    /// Exact Gaussian conditional moments for warp=0 synthetic data
    Oracle(OracleCmd),
}

#[derive(Args, Debug)]
struct GenData {
    /// Number of samples
    #[arg(long)]
    n: usize,
    /// Grid side length (power of two)
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Filter width / coarsening factor
    #[arg(long, default_value_t = 4)]
    delta: usize,
    /// Energy spectrum slope
    #[arg(long, default_value_t = -5.0 / 3.0, allow_negative_numbers = true)]
    slope: f64,
    /// tanh warp strength in [0, 1]
    #[arg(long, default_value_t = 0.0)]
    warp: f64,
    /// Output dataset path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitMethod {
    Stochastic,
    Network,
}

#[derive(Args, Debug)]
struct FitMoments {
    /// Input dataset
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FitMethod::Stochastic)]
    method: FitMethod,
    /// Stochastic-estimation model id (0-14)
    #[arg(long, default_value_t = 3)]
    model: u8,
    /// Use only the linear terms of the model
    #[arg(long)]
    linear_only: bool,
    /// Relative ridge added to the normal equations
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,
    /// Share coefficients across interior LR cells
    #[arg(long)]
    homogeneous: bool,
    /// Network: residual blocks
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    /// Network: filters per layer
    #[arg(long, default_value_t = 4)]
    filters: usize,
    /// Network: training epochs
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Network: minibatch size
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Network: Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Network: fraction of samples used for training (rest validates)
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    /// Output path of the mean estimator
    #[arg(long)]
    out_mean: PathBuf,
    /// Output path of the variance estimator
    #[arg(long)]
    out_var: PathBuf,
    /// Output dataset with moment fields attached
    #[arg(long)]
    out_data: PathBuf,
}

#[derive(Args, Debug)]
struct SweepBasis {
    #[arg(long)]
    data: PathBuf,
    /// Model ids: `a..b` (inclusive) or a comma list
    #[arg(long, default_value = "0..14")]
    models: String,
    /// Also sweep the linear subset of every listed model
    #[arg(long)]
    with_linear: bool,
    /// Moment order (1 = mean, 2 = centered variance)
    #[arg(long, default_value_t = 1)]
    p: u8,
    /// Model used to center the p=2 targets
    #[arg(long, default_value_t = 3)]
    center_model: u8,
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    /// Write the report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Diversity,
    Dsgan,
    Gensim,
    None,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Diversity => Variant::Diversity,
            VariantArg::Dsgan => Variant::Dsgan,
            VariantArg::Gensim => Variant::Gensim,
            VariantArg::None => Variant::None,
        }
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    /// Training dataset (with moment fields for diversity / dsgan)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Diversity)]
    variant: VariantArg,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// LR fields per step
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Generated samples per LR field
    #[arg(long, default_value_t = 8)]
    r: usize,
    /// Content-loss weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Adversarial-loss weight
    #[arg(long)]
    beta: Option<f64>,
    /// Diversity-loss weight (default depends on the variant)
    #[arg(long)]
    gamma: Option<f64>,
    /// Generator learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr_g: f64,
    /// Discriminator learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr_d: f64,
    /// Output checkpoint
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss log (CSV)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DeconvMethod {
    Adm,
    Taylor,
    Gan,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterKind {
    Box,
    Gaussian,
}

#[derive(Args, Debug)]
struct Deconv {
    #[arg(long, value_enum)]
    method: DeconvMethod,
    /// Dataset whose LR fields are deconvolved
    #[arg(long)]
    data: PathBuf,
    /// GAN checkpoint (method gan)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Samples per LR field (method gan)
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// ADM series terms
    #[arg(long, default_value_t = 5)]
    iterations: i64,
    /// Filter assumed by ADM
    #[arg(long, value_enum, default_value_t = FilterKind::Gaussian)]
    filter: FilterKind,
    /// Only the first N LR fields
    #[arg(long)]
    limit: Option<usize>,
    /// Output ensemble dataset
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Reference {
    Auto,
    Oracle,
    Moments,
    None,
}

#[derive(Args, Debug)]
struct EvaluateCmd {
    /// Dataset providing the LR fields (and reference moments)
    #[arg(long)]
    truth: PathBuf,
    /// Ensemble dataset written by `deconv` / `sample`
    #[arg(long)]
    ensembles: PathBuf,
    /// Members per LR field (default: from the ensemble metadata)
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Source of the reference standard deviation
    #[arg(long, value_enum, default_value_t = Reference::Auto)]
    reference: Reference,
    /// Output JSON report; CSVs are written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleCmd {
    #[arg(long)]
    data: PathBuf,
    /// Only the first N samples
    #[arg(long)]
    limit: Option<usize>,
    /// Spectrum slope (default: from the dataset metadata)
    #[arg(long, allow_negative_numbers = true)]
    slope: Option<f64>,
    /// Output dataset with the oracle moments attached
    #[arg(long)]
    out: PathBuf,
}

/// JSON written next to every dataset (`<path>.meta.json`).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    meta: DatasetMeta,
    #[serde(default)]
    ensemble_size: Option<usize>,
}

fn sidecar_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn load(path: &Path) -> Result<(Dataset, Sidecar)> {
    let mut ds = read_dataset(path).with_context(|| format!("cannot read dataset {}", path.display()))?;
    let side = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(s) => serde_json::from_str(&s).with_context(|| format!("bad metadata next to {}", path.display()))?,
        Err(_) => Sidecar::default(),
    };
    ds.meta = side.meta.clone();
    Ok((ds, side))
}

fn save(ds: &Dataset, side: &Sidecar, path: &Path) -> Result<()> {
    write_dataset(ds, path).with_context(|| format!("cannot write {}", path.display()))?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(side)? + "\n")?;
    Ok(())
}

fn limited(n: usize, limit: Option<usize>) -> usize {
    limit.map_or(n, |l| l.min(n))
}

fn gen_data(g: &Global, a: &GenData) -> Result<()> {
    let params = SynthParams {
        height: a.size,
        width: a.size,
        slope: a.slope,
        warp: a.warp,
        delta: a.delta,
    };
    let mut ds = synth_dataset(&params, a.n, g.seed)?;
    ds.meta.provenance = "gen-data".into();
    let side = Sidecar {
        meta: ds.meta.clone(),
        ensemble_size: None,
    };
    save(&ds, &side, &a.out)?;
    println!("wrote {} samples of {}x{} (delta {}) to {}", a.n, a.size, a.size, a.delta, a.out.display());
    Ok(())
}

fn attach_all(ds: &mut Dataset, mean: &dyn MomentEstimator, var: &dyn MomentEstimator) -> Result<()> {
    let mfs = (0..ds.len())
        .map(|i| eval_moments(mean, var, &ds.lr(i)))
        .collect::<divgan_core::Result<Vec<_>>>()?;
    ds.attach_moments(mfs)?;
    Ok(())
}

fn fit_moments(g: &Global, a: &FitMoments) -> Result<()> {
    let (mut ds, mut side) = load(&a.data)?;
    match a.method {
        FitMethod::Stochastic => {
            let spec = if a.linear_only { BasisSpec::linear_subset(a.model)? } else { BasisSpec::model(a.model)? };
            let opts = FitOptions {
                ridge: a.ridge,
                homogeneous: a.homogeneous,
            };
            let mean = fit_stochastic(&ds, MomentOrder::Mean, &spec, &opts, None)?;
            let var = fit_stochastic(&ds, MomentOrder::Variance, &spec, &opts, Some(&mean))?;
            mean.save(&a.out_mean)?;
            var.save(&a.out_var)?;
            println!("model {} ({} terms): train mse p=1 {:.6e}, p=2 {:.6e}", a.model, spec.len(), mean.train_mse, var.train_mse);
            attach_all(&mut ds, &mean, &var)?;
        }
        FitMethod::Network => {
            let (train_set, valid_set) = split_dataset(&ds, a.train_fraction, g.seed)?;
            let cfg = NetworkFitConfig {
                blocks: a.blocks,
                filters: a.filters,
                epochs: a.epochs,
                batch: a.batch,
                adam: AdamConfig {
                    lr: a.learning_rate,
                    ..AdamConfig::default()
                },
                seed: g.seed,
            };
            let (mean, rm) = fit_moment_network(&train_set, &valid_set, MomentOrder::Mean, &cfg, None)?;
            let (var, rv) = fit_moment_network(&train_set, &valid_set, MomentOrder::Variance, &cfg, Some(&mean))?;
            mean.save(&a.out_mean)?;
            var.save(&a.out_var)?;
            println!(
                "network ({} blocks, {} filters): valid mse p=1 {:.6e}, p=2 {:.6e}",
                a.blocks,
                a.filters,
                rm.final_valid_mse(),
                rv.final_valid_mse()
            );
            attach_all(&mut ds, &mean, &var)?;
        }
    }
    side.meta.provenance = format!("{} + fit-moments({:?})", side.meta.provenance, a.method).to_lowercase();
    ds.meta = side.meta.clone();
    save(&ds, &side, &a.out_data)?;
    Ok(())
}

fn parse_models(s: &str) -> Result<Vec<u8>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u8, u8) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty model range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse::<u8>().map_err(|e| anyhow!("bad model id {t:?}: {e}"))).collect()
}

fn sweep_basis(g: &Global, a: &SweepBasis) -> Result<()> {
    let (ds, _) = load(&a.data)?;
    let order = MomentOrder::from_p(a.p)?;
    let (tr, va) = split_dataset(&ds, a.train_fraction, g.seed)?;
    let mut specs = Vec::new();
    for id in parse_models(&a.models)? {
        specs.push(BasisSpec::model(id)?);
        if a.with_linear {
            specs.push(BasisSpec::linear_subset(id)?);
        }
    }
    let opts = FitOptions {
        ridge: a.ridge,
        homogeneous: false,
    };
    let center: Option<MomentModel> = match order {
        MomentOrder::Mean => None,
        MomentOrder::Variance => Some(fit_stochastic(&tr, MomentOrder::Mean, &BasisSpec::model(a.center_model)?, &opts, None)?),
    };
    let report = sweep_bases(&tr, &va, order, &specs, &opts, center.as_ref().map(|c| c as &dyn MomentEstimator))?;
    println!("{:>6} {:>7} {:>5} {:>14} {:>14}", "model", "linear", "q", "train_mse", "valid_mse");
    for (i, r) in report.rows.iter().enumerate() {
        let mark = if i == report.selected { " *" } else { "" };
        println!("{:>6} {:>7} {:>5} {:>14.6e} {:>14.6e}{mark}", r.model_id, r.linear_only, r.q, r.train_mse, r.valid_mse);
    }
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn train_cmd(g: &Global, a: &TrainCmd) -> Result<()> {
    let (ds, _) = load(&a.data)?;
    let variant: Variant = a.variant.into();
    let defaults = LossWeights::for_variant(variant);
    let weights = LossWeights {
        alpha: a.alpha.unwrap_or(defaults.alpha),
        beta: a.beta.unwrap_or(defaults.beta),
        gamma: a.gamma.unwrap_or(defaults.gamma),
    };
    let base = TrainConfig::default();
    let cfg = TrainConfig {
        m: a.m,
        r: a.r,
        steps: a.steps,
        seed: g.seed,
        variant,
        adam_g: AdamConfig { lr: a.lr_g, ..base.adam_g },
        adam_d: AdamConfig { lr: a.lr_d, ..base.adam_d },
        ..base
    };
    let (model, log) = train(&cfg, &ds, &weights)?;
    model.save(&a.out)?;
    if let Some(p) = &a.log {
        log.write_csv(p)?;
    }
    let (c, adv, d) = log.mean_shares(0.25);
    println!(
        "trained {} for {} steps; final-quarter shares content {:.3} adv {:.3} div {:.3}",
        variant.name(),
        a.steps,
        c,
        adv,
        d
    );
    Ok(())
}

fn write_ensembles(members: Vec<Field>, size: usize, delta: usize, method: &str, seed: u64, out: &Path) -> Result<()> {
    let mut ds = Dataset::new(members, delta)?;
    ds.meta = DatasetMeta {
        seed,
        params: None,
        provenance: method.into(),
    };
    let side = Sidecar {
        meta: ds.meta.clone(),
        ensemble_size: Some(size),
    };
    save(&ds, &side, out)
}

fn gan_ensembles(g: &Global, checkpoint: &Path, data: &Path, count: usize, limit: Option<usize>, out: &Path) -> Result<()> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let model = GanModel::load(checkpoint).with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let (ds, _) = load(data)?;
    if ds.delta != model.delta {
        bail!("dataset delta {} does not match checkpoint delta {}", ds.delta, model.delta);
    }
    let mut members = Vec::new();
    for i in 0..limited(ds.len(), limit) {
        // one noise stream per LR field keeps ensembles independent of --limit
        let seed = g.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64);
        members.extend(model.sample(&ds.lr(i), count, seed)?);
    }
    write_ensembles(members, count, ds.delta, "gan", g.seed, out)?;
    println!("wrote {count} samples per LR field to {}", out.display());
    Ok(())
}

fn deconv(g: &Global, a: &Deconv) -> Result<()> {
    if let DeconvMethod::Gan = a.method {
        let ck = a.checkpoint.as_ref().ok_or_else(|| anyhow!("--checkpoint is required for --method gan"))?;
        return gan_ensembles(g, ck, &a.data, a.count, a.limit, &a.out);
    }
    let (ds, _) = load(&a.data)?;
    let d = ds.delta;
    let mut out = Vec::new();
    for i in 0..limited(ds.len(), a.limit) {
        let filtered = upsample_nearest(&ds.lr(i), d);
        let f = match a.method {
            DeconvMethod::Adm => {
                let op: Box<dyn FilterOp> = match a.filter {
                    FilterKind::Box => Box::new(BoxUpsample { delta: d }),
                    FilterKind::Gaussian => Box::new(GaussianFilter::new(d as f64)?),
                };
                adm_deconvolve(&filtered, op.as_ref(), a.iterations)?
            }
            DeconvMethod::Taylor => taylor_deconvolve(&filtered, d as f64),
            DeconvMethod::Gan => unreachable!(),
        };
        out.push(f);
    }
    let name = format!("{:?}", a.method).to_lowercase();
    write_ensembles(out, 1, d, &name, g.seed, &a.out)?;
    println!("wrote {name} deconvolution to {}", a.out.display());
    Ok(())
}

fn oracle_for(side: &Sidecar, ds: &Dataset, slope: Option<f64>) -> Result<GaussianOracle> {
    let mut params = side.meta.params.unwrap_or(SynthParams {
        height: ds.height(),
        width: ds.width(),
        delta: ds.delta,
        ..SynthParams::default()
    });
    if let Some(s) = slope {
        params.slope = s;
    }
    if params.warp != 0.0 {
        bail!("the Gaussian oracle needs warp=0 data (dataset has warp {})", params.warp);
    }
    Ok(GaussianOracle::from_synth(&params)?)
}

fn evaluate_cmd(a: &EvaluateCmd) -> Result<()> {
    let (truth, tside) = load(&a.truth)?;
    let (ens, eside) = load(&a.ensembles)?;
    let size = a
        .ensemble_size
        .or(eside.ensemble_size)
        .ok_or_else(|| anyhow!("ensemble size unknown: pass --ensemble-size"))?;
    if size == 0 || ens.len() % size != 0 {
        bail!("{} ensemble fields are not a multiple of ensemble size {size}", ens.len());
    }
    let k = ens.len() / size;
    if k > truth.len() {
        bail!("{k} ensembles but only {} truth samples", truth.len());
    }
    if ens.delta != truth.delta || ens.height() != truth.height() || ens.width() != truth.width() {
        bail!("ensemble and truth grids differ");
    }
    let groups: Vec<Vec<Field>> = ens.samples.chunks(size).map(|c| c.to_vec()).collect();
    let lrs: Vec<Field> = (0..k).map(|i| truth.lr(i)).collect();
    let reference = match a.reference {
        Reference::Auto => {
            if tside.meta.params.map_or(false, |p| p.warp == 0.0) {
                Reference::Oracle
            } else if truth.moments.is_some() {
                Reference::Moments
            } else {
                Reference::None
            }
        }
        r => r,
    };
    let refs: Option<Vec<MomentField>> = match reference {
        Reference::Oracle => {
            let o = oracle_for(&tside, &truth, None)?;
            Some(lrs.iter().map(|l| o.moments(l)).collect::<divgan_core::Result<_>>()?)
        }
        Reference::Moments => {
            let m = truth.moments.as_ref().ok_or_else(|| anyhow!("truth dataset has no attached moment fields"))?;
            Some(m[..k].to_vec())
        }
        _ => None,
    };
    let report = evaluate(&groups, &lrs, refs.as_deref(), truth.delta, &StatsConfig::default())?;
    emit_report(&report, &a.out)?;
    match report.diversity_pct {
        Some(d) => println!(
            "diversity {:.3} +- {:.3} %, consistency {:.3} +- {:.3} %",
            d,
            report.diversity_stderr.unwrap_or(0.0),
            report.consistency_pct,
            report.consistency_stderr
        ),
        None => println!("consistency {:.3} +- {:.3} %", report.consistency_pct, report.consistency_stderr),
    }
    Ok(())
}

fn oracle_cmd(a: &OracleCmd) -> Result<()> {
    let (ds, side) = load(&a.data)?;
    let o = oracle_for(&side, &ds, a.slope)?;
    let n = limited(ds.len(), a.limit);
    let idx: Vec<usize> = (0..n).collect();
    let mut sub = ds.subset(&idx);
    let mfs = (0..n).map(|i| o.moments(&ds.lr(i))).collect::<divgan_core::Result<Vec<_>>>()?;
    sub.attach_moments(mfs)?;
    let mut side = side;
    side.meta.provenance = format!("{} + oracle", side.meta.provenance);
    save(&sub, &side, &a.out)?;
    let mean_var = o.conditional_variance().iter().sum::<f64>() / o.conditional_variance().len() as f64;
    println!("oracle moments for {n} samples written to {}; mean conditional variance {mean_var:.6e}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::GenData(a) => gen_data(g, a),
        Command::FitMoments(a) => fit_moments(g, a),
        Command::SweepBasis(a) => sweep_basis(g, a),
        Command::Train(a) => train_cmd(g, a),
        Command::Deconv(a) => deconv(g, a),
        Command::Sample(a) => gan_ensembles(g, &a.checkpoint, &a.data, a.count, a.limit, &a.out),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::merge_config::<Cli>(argv) {
        Ok(v) => v,
        Err(config::ConfigError::Usage(e)) => e.exit(),
        Err(config::ConfigError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
