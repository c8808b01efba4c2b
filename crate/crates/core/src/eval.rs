//! Sample-quality metrics: conditional diversity, LR consistency, energy
//! and dissipation spectra, and PDFs of the normalized longitudinal
//! gradient and of the subfilter easterly velocity.

use crate::error::{Error, Result};
use crate::filters::box_filter_coarsen;
use crate::gan::sample_moments;
use crate::grid::{sf_decompose, Field};
use crate::moments::MomentField;
use crate::spectrum::radial_energy_spectrum;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_ensembles(ensembles: &[Vec<Field>], min_members: usize) -> Result<()> {
    if ensembles.is_empty() {
        return Err(Error::invalid("no ensembles to evaluate"));
    }
    if let Some(i) = ensembles.iter().position(|e| e.len() < min_members) {
        return Err(Error::invalid(format!(
            "ensemble {i} has {} members, need at least {min_members}",
            ensembles[i].len()
        )));
    }
    Ok(())
}

/// `100 * mean_lr |sigma - sigma_hat|_2 / |sigma|_2` with `sigma_hat` the
/// population standard deviation of each ensemble.
pub fn diversity_metric(ensembles: &[Vec<Field>], refs: &[MomentField]) -> Result<(f64, f64)> {
    check_ensembles(ensembles, 2)?;
    if refs.len() != ensembles.len() {
        return Err(Error::shape(format!(
            "{} ensembles but {} reference moment fields",
            ensembles.len(),
            refs.len()
        )));
    }
    let mut ratios = Vec::with_capacity(ensembles.len());
    for (i, (e, mf)) in ensembles.iter().zip(refs).enumerate() {
        let (_, std_hat) = sample_moments(e)?;
        let sigma = mf.std();
        let norm = sigma.norm_l2();
        if norm == 0.0 {
            return Err(Error::Undefined(format!("reference standard deviation of LR field {i} is zero")));
        }
        ratios.push(100.0 * sigma.sub(&std_hat)?.norm_l2() / norm);
    }
    Ok(mean_stderr(&ratios))
}

/// `100 * mean_lr (1/|lr|) mean_members |coarsen(sr) - lr|_2`.
pub fn consistency_metric(ensembles: &[Vec<Field>], lrs: &[Field], delta: usize) -> Result<(f64, f64)> {
    check_ensembles(ensembles, 1)?;
    if lrs.len() != ensembles.len() {
        return Err(Error::shape(format!("{} ensembles but {} LR fields", ensembles.len(), lrs.len())));
    }
    let mut rel = Vec::with_capacity(lrs.len());
    for (i, (e, lr)) in ensembles.iter().zip(lrs).enumerate() {
        let norm = lr.norm_l2();
        if norm == 0.0 {
            return Err(Error::Undefined(format!("LR field {i} has zero norm")));
        }
        let mut acc = 0.0;
        for sr in e {
            acc += box_filter_coarsen(sr, delta)?.sub(lr)?.norm_l2();
        }
        rel.push(100.0 * acc / (e.len() as f64 * norm));
    }
    Ok(mean_stderr(&rel))
}

/// Fixed-range histogram; samples outside `[lo, hi]` are counted in the edge bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramRange {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramRange {
    fn centers(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..self.bins).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    fn masses(&self, values: &[f64]) -> Result<Vec<f64>> {
        if !(self.hi > self.lo) || self.bins == 0 {
            return Err(Error::invalid("histogram needs hi > lo and at least one bin"));
        }
        if values.is_empty() {
            return Err(Error::invalid("histogram of an empty sample"));
        }
        let mut counts = vec![0.0; self.bins];
        let w = (self.hi - self.lo) / self.bins as f64;
        for &v in values {
            let b = ((v - self.lo) / w).floor();
            let b = if b < 0.0 { 0 } else { (b as usize).min(self.bins - 1) };
            counts[b] += 1.0;
        }
        let n = values.len() as f64;
        Ok(counts.into_iter().map(|c| c / n).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatsConfig {
    pub zeta: HistogramRange,
    /// `None` picks a symmetric range of four standard deviations of the
    /// pooled subfilter velocity.
    pub sf: Option<HistogramRange>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            zeta: HistogramRange {
                lo: -5.0,
                hi: 5.0,
                bins: 50,
            },
            sf: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceStats {
    pub spectrum_k: Vec<f64>,
    #[serde(rename = "spectrum_E")]
    pub spectrum_e: Vec<f64>,
    #[serde(rename = "dissipation_E")]
    pub dissipation_e: Vec<f64>,
    pub zeta_bins: Vec<f64>,
    /// Probability mass per bin.
    pub zeta_pdf: Vec<f64>,
    pub sf_bins: Vec<f64>,
    pub sf_pdf: Vec<f64>,
}

/// Normalized longitudinal gradient `dU/dx / <(dU/dx)^2>^(1/2)` of the easterly
/// component (channel 0, periodic central differences along columns).
pub fn longitudinal_gradient(field: &Field) -> Result<Vec<f64>> {
    let (h, w) = (field.height(), field.width());
    let mut g = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            g.push(0.5 * (field.get(0, y, (x + 1) % w) - field.get(0, y, (x + w - 1) % w)));
        }
    }
    let rms = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::Undefined("longitudinal gradient vanishes identically".into()));
    }
    Ok(g.into_iter().map(|v| v / rms).collect())
}

/// Spectra averaged over `fields` plus pooled gradient and subfilter PDFs.
pub fn stats_report(fields: &[Field], delta: usize, cfg: &StatsConfig) -> Result<TurbulenceStats> {
    let first = fields.first().ok_or_else(|| Error::invalid("stats need at least one field"))?;
    let mut spectrum = vec![0.0; radial_energy_spectrum(first).len()];
    let mut zeta = Vec::new();
    let mut sf_u = Vec::new();
    for f in fields {
        first.check_same_shape(f, "fields differ in shape")?;
        for (a, b) in spectrum.iter_mut().zip(radial_energy_spectrum(f)) {
            *a += b;
        }
        zeta.extend(longitudinal_gradient(f)?);
        let (_, sf) = sf_decompose(f, delta)?;
        sf_u.extend_from_slice(sf.channel(0));
    }
    let n = fields.len() as f64;
    spectrum.iter_mut().for_each(|v| *v /= n);
    let spectrum_k: Vec<f64> = (0..spectrum.len()).map(|k| k as f64).collect();
    let dissipation_e = spectrum.iter().zip(&spectrum_k).map(|(e, k)| k * k * e).collect();
    let sf_range = match cfg.sf {
        Some(r) => r,
        None => {
            let m = sf_u.iter().sum::<f64>() / sf_u.len() as f64;
            let sd = (sf_u.iter().map(|v| (v - m).powi(2)).sum::<f64>() / sf_u.len() as f64).sqrt();
            let half = if sd > 0.0 { 4.0 * sd } else { 1.0 };
            HistogramRange {
                lo: -half,
                hi: half,
                bins: 50,
            }
        }
    };
    Ok(TurbulenceStats {
        spectrum_k,
        spectrum_e: spectrum,
        dissipation_e,
        zeta_bins: cfg.zeta.centers(),
        zeta_pdf: cfg.zeta.masses(&zeta)?,
        sf_bins: sf_range.centers(),
        sf_pdf: sf_range.masses(&sf_u)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` for single-output methods (nothing to measure).
    pub diversity_pct: Option<f64>,
    pub diversity_stderr: Option<f64>,
    pub consistency_pct: f64,
    pub consistency_stderr: f64,
    #[serde(flatten)]
    pub stats: TurbulenceStats,
}

/// Builds the full report for one method: one ensemble per LR field.
/// Diversity is computed when reference moments are given and every
/// ensemble has at least two members.
pub fn evaluate(
    ensembles: &[Vec<Field>],
    lrs: &[Field],
    refs: Option<&[MomentField]>,
    delta: usize,
    cfg: &StatsConfig,
) -> Result<MetricsReport> {
    check_ensembles(ensembles, 1)?;
    let (consistency_pct, consistency_stderr) = consistency_metric(ensembles, lrs, delta)?;
    let (diversity_pct, diversity_stderr) = match refs {
        Some(r) if ensembles.iter().all(|e| e.len() >= 2) => {
            let (p, s) = diversity_metric(ensembles, r)?;
            (Some(p), Some(s))
        }
        _ => (None, None),
    };
    let pooled: Vec<Field> = ensembles.iter().flatten().cloned().collect();
    Ok(MetricsReport {
        diversity_pct,
        diversity_stderr,
        consistency_pct,
        consistency_stderr,
        stats: stats_report(&pooled, delta, cfg)?,
    })
}

fn validate_report(r: &MetricsReport) -> Result<()> {
    let s = &r.stats;
    let k = s.spectrum_k.len();
    if k == 0 || s.spectrum_e.len() != k || s.dissipation_e.len() != k {
        return Err(Error::invalid("spectrum arrays are empty or of unequal length"));
    }
    if s.zeta_bins.is_empty() || s.zeta_bins.len() != s.zeta_pdf.len() {
        return Err(Error::invalid("zeta histogram arrays are empty or of unequal length"));
    }
    if s.sf_bins.is_empty() || s.sf_bins.len() != s.sf_pdf.len() {
        return Err(Error::invalid("subfilter histogram arrays are empty or of unequal length"));
    }
    Ok(())
}

fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn columns_csv(header: &str, cols: &[&[f64]]) -> String {
    let mut s = format!("{header}\n");
    for i in 0..cols[0].len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{:.16e}", c[i])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Writes the JSON report to `path` plus `<stem>_spectrum.csv`,
/// `<stem>_zeta.csv` and `<stem>_sf.csv` next to it. Returns all paths written.
pub fn emit_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    validate_report(report)?;
    let path = path.as_ref();
    let s = &report.stats;
    let json = serde_json::to_string_pretty(report)?;
    let files = vec![
        (path.to_path_buf(), json),
        (
            companion(path, "spectrum"),
            columns_csv("k,E,dissipation", &[&s.spectrum_k, &s.spectrum_e, &s.dissipation_e]),
        ),
        (companion(path, "zeta"), columns_csv("zeta,pdf", &[&s.zeta_bins, &s.zeta_pdf])),
        (companion(path, "sf"), columns_csv("sf,pdf", &[&s.sf_bins, &s.sf_pdf])),
    ];
    for (p, content) in &files {
        std::fs::write(p, content)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
