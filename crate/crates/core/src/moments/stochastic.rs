//! Per-pixel stochastic estimation of conditional moments.
//!
//! For every HR pixel and velocity component the target `t` (the subfilter
//! velocity for `p = 1`, its centered square for `p = 2`) is regressed on the
//! stencil basis `b` of the containing LR cell:
//!
//! ```text
//! f = A + sum_j B_j (b_j - mean(b_j)),   A = mean(t)
//! [E(z_j z_k) + lambda I] beta = [E(z_j (t - A))],   z = standardized b
//! ```
//!
//! All HR pixels of one LR cell share the same basis vectors, so the Gram
//! matrix is formed once per cell and solved for all `2 delta^2` targets.

use super::basis::BasisSpec;
use super::stencil::stencil_at_cell;
use super::{MomentEstimator, MomentOrder};
use crate::error::{Error, Result};
use crate::grid::{Dataset, Field};
use crate::io::{self, Reader, Writer, MOMENT_MAGIC};
use crate::linalg::gemm;
use crate::CHANNELS;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Diagonal regularization relative to the mean diagonal of the
    /// standardized Gram matrix.
    pub ridge: f64,
    /// Tie coefficients across LR cells whose stencil lies fully inside the
    /// domain (same within-block offset shares one fit).
    pub homogeneous: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 1e-8,
            homogeneous: false,
        }
    }
}

/// Fitted per-pixel estimator for one moment order.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentModel {
    pub spec: BasisSpec,
    pub order: MomentOrder,
    pub centered: bool,
    pub height: usize,
    pub width: usize,
    pub delta: usize,
    /// `[H, W, 2]`.
    pub intercept: Vec<f64>,
    /// `[H, W, 2, q]`, applied to basis terms centered by `basis_mean`.
    pub coefficients: Vec<f64>,
    /// `[H/delta, W/delta, q]` training means of the basis terms.
    pub basis_mean: Vec<f64>,
    /// Mean squared training residual over pixels, components and samples.
    pub train_mse: f64,
}

struct CellFit {
    mean: Vec<f64>,
    /// `[2 delta^2, q]`, target column major index `c * delta^2 + offset`.
    coef: Vec<f64>,
    intercept: Vec<f64>,
    sse: f64,
}

struct Targets<'a> {
    ds: &'a Dataset,
    lrs: Vec<Field>,
    centers: Option<Vec<Field>>,
    order: MomentOrder,
}

impl Targets<'_> {
    /// Targets of sample `s` in LR cell `(cy, cx)`, written as `[2 delta^2]`.
    fn fill(&self, s: usize, cy: usize, cx: usize, out: &mut [f64]) {
        let d = self.ds.delta;
        let hr = &self.ds.samples[s];
        let lr = &self.lrs[s];
        for c in 0..CHANNELS {
            let base = lr.get(c, cy, cx);
            for oy in 0..d {
                for ox in 0..d {
                    let (y, x) = (cy * d + oy, cx * d + ox);
                    let sf = hr.get(c, y, x) - base;
                    let t = match self.order {
                        MomentOrder::Mean => sf,
                        MomentOrder::Variance => {
                            let m = self.centers.as_ref().expect("checked")[s].get(c, y, x);
                            (sf - m) * (sf - m)
                        }
                    };
                    out[c * d * d + oy * d + ox] = t;
                }
            }
        }
    }
}

fn fit_cells(
    tg: &Targets<'_>,
    spec: &BasisSpec,
    cells: &[(usize, usize)],
    ridge: f64,
) -> Result<CellFit> {
    let d = tg.ds.delta;
    let nt = CHANNELS * d * d;
    let q = spec.len();
    let n = tg.ds.len();
    let rows = n * cells.len();
    let mut x = vec![0.0; rows * q];
    let mut y = vec![0.0; rows * nt];
    let mut r = 0;
    for s in 0..n {
        for &(cy, cx) in cells {
            let st = stencil_at_cell(&tg.lrs[s], cy, cx);
            spec.eval_into(&st, &mut x[r * q..(r + 1) * q]);
            tg.fill(s, cy, cx, &mut y[r * nt..(r + 1) * nt]);
            r += 1;
        }
    }
    let inv_rows = 1.0 / rows as f64;

    let mut mean = vec![0.0; q];
    for row in x.chunks(q) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_rows);
    let mut var = vec![0.0; q];
    for row in x.chunks(q) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .zip(&mean)
        .map(|(&s, &m)| {
            let sd = (s * inv_rows).sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    for row in x.chunks_mut(q) {
        for ((v, m), is) in row.iter_mut().zip(&mean).zip(&inv_std) {
            *v = (*v - m) * is;
        }
    }
    let mut ymean = vec![0.0; nt];
    for row in y.chunks(nt) {
        for (m, v) in ymean.iter_mut().zip(row) {
            *m += v;
        }
    }
    ymean.iter_mut().for_each(|m| *m *= inv_rows);
    for row in y.chunks_mut(nt) {
        for (v, m) in row.iter_mut().zip(&ymean) {
            *v -= m;
        }
    }

    let mut gram = vec![0.0; q * q];
    gemm(q, rows, q, inv_rows, &x, true, &x, false, 0.0, &mut gram);
    let mut rhs = vec![0.0; q * nt];
    gemm(q, rows, nt, inv_rows, &x, true, &y, false, 0.0, &mut rhs);
    let trace: f64 = (0..q).map(|i| gram[i * q + i]).sum();
    let lambda = if trace > 0.0 { ridge * trace / q as f64 } else { ridge.max(f64::MIN_POSITIVE) };
    for i in 0..q {
        gram[i * q + i] += lambda;
    }
    let (cy, cx) = cells[0];
    let chol = DMatrix::from_row_slice(q, q, &gram)
        .cholesky()
        .ok_or(Error::Singular { row: cy, col: cx })?;
    let beta = chol.solve(&DMatrix::from_row_slice(q, nt, &rhs));
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { row: cy, col: cx });
    }
    // beta is column-major q x nt
    let mut beta_rm = vec![0.0; q * nt];
    for j in 0..q {
        for t in 0..nt {
            beta_rm[j * nt + t] = beta[(j, t)];
        }
    }
    let mut resid = y;
    gemm(rows, q, nt, -1.0, &x, false, &beta_rm, false, 1.0, &mut resid);
    let sse = resid.iter().map(|v| v * v).sum::<f64>() / cells.len() as f64;

    let mut coef = vec![0.0; nt * q];
    for t in 0..nt {
        for j in 0..q {
            coef[t * q + j] = beta_rm[j * nt + t] * inv_std[j];
        }
    }
    Ok(CellFit {
        mean,
        coef,
        intercept: ymean,
        sse,
    })
}

/// Fits the order-`order` moment model on a training set. For the variance
/// order a mean estimator must be supplied; targets become
/// `(sf - E_est(sf | lr))^2`.
pub fn fit_stochastic(
    ds: &Dataset,
    order: MomentOrder,
    spec: &BasisSpec,
    opts: &FitOptions,
    center: Option<&dyn MomentEstimator>,
) -> Result<MomentModel> {
    if !(opts.ridge >= 0.0) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let (lrs, _): (Vec<Field>, Vec<Field>) = ds.decompose_all();
    let centers = match (order, center) {
        (MomentOrder::Variance, Some(c)) => Some(
            lrs.par_iter()
                .map(|lr| c.predict(lr))
                .collect::<Result<Vec<_>>>()?,
        ),
        (MomentOrder::Variance, None) => {
            return Err(Error::invalid("second-moment fit needs a mean estimator for centering"))
        }
        (MomentOrder::Mean, _) => None,
    };
    let tg = Targets {
        ds,
        lrs,
        centers,
        order,
    };
    let (hl, wl) = (ds.lr_height(), ds.lr_width());
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let interior = |a: usize, n: usize| a >= 2 && a + 2 < n;
    let mut shared = Vec::new();
    for cy in 0..hl {
        for cx in 0..wl {
            if opts.homogeneous && interior(cy, hl) && interior(cx, wl) {
                shared.push((cy, cx));
            } else {
                groups.push(vec![(cy, cx)]);
            }
        }
    }
    if !shared.is_empty() {
        groups.push(shared);
    }
    let fits: Vec<CellFit> = groups
        .par_iter()
        .map(|g| fit_cells(&tg, spec, g, opts.ridge))
        .collect::<Result<_>>()?;

    let d = ds.delta;
    let q = spec.len();
    let (h, w) = (ds.height(), ds.width());
    let mut model = MomentModel {
        spec: spec.clone(),
        order,
        centered: order == MomentOrder::Variance,
        height: h,
        width: w,
        delta: d,
        intercept: vec![0.0; h * w * CHANNELS],
        coefficients: vec![0.0; h * w * CHANNELS * q],
        basis_mean: vec![0.0; hl * wl * q],
        train_mse: 0.0,
    };
    let mut sse = 0.0;
    for (g, fit) in groups.iter().zip(&fits) {
        for &(cy, cx) in g {
            sse += fit.sse;
            let cell = cy * wl + cx;
            model.basis_mean[cell * q..(cell + 1) * q].copy_from_slice(&fit.mean);
            for c in 0..CHANNELS {
                for oy in 0..d {
                    for ox in 0..d {
                        let t = c * d * d + oy * d + ox;
                        let p = model.pixel(cy * d + oy, cx * d + ox, c);
                        model.intercept[p] = fit.intercept[t];
                        model.coefficients[p * q..(p + 1) * q]
                            .copy_from_slice(&fit.coef[t * q..(t + 1) * q]);
                    }
                }
            }
        }
    }
    model.train_mse = sse / (ds.len() * h * w * CHANNELS) as f64;
    Ok(model)
}

impl MomentModel {
    #[inline]
    fn pixel(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    pub fn q(&self) -> usize {
        self.spec.len()
    }

    /// Intercept of pixel `(y, x)`, component `c`.
    pub fn intercept_at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.intercept[self.pixel(y, x, c)]
    }

    /// Raw-unit coefficients of pixel `(y, x)`, component `c`.
    pub fn coefficients_at(&self, y: usize, x: usize, c: usize) -> &[f64] {
        let p = self.pixel(y, x, c);
        let q = self.q();
        &self.coefficients[p * q..(p + 1) * q]
    }

    fn check_lr(&self, lr: &Field) -> Result<()> {
        if lr.shape() != (CHANNELS, self.height / self.delta, self.width / self.delta) {
            return Err(Error::shape(format!(
                "LR field {:?} does not match model grid {}x{} at delta {}",
                lr.shape(),
                self.height,
                self.width,
                self.delta
            )));
        }
        Ok(())
    }

    fn predict_field(&self, lr: &Field) -> Result<Field> {
        self.check_lr(lr)?;
        let d = self.delta;
        let q = self.q();
        let wl = self.width / d;
        let mut out = Field::zeros(CHANNELS, self.height, self.width);
        let mut b = vec![0.0; q];
        for cy in 0..self.height / d {
            for cx in 0..wl {
                let st = stencil_at_cell(lr, cy, cx);
                self.spec.eval_into(&st, &mut b);
                let cell = cy * wl + cx;
                for (v, m) in b.iter_mut().zip(&self.basis_mean[cell * q..(cell + 1) * q]) {
                    *v -= m;
                }
                for c in 0..CHANNELS {
                    for oy in 0..d {
                        for ox in 0..d {
                            let (y, x) = (cy * d + oy, cx * d + ox);
                            let p = self.pixel(y, x, c);
                            let dot: f64 = self.coefficients[p * q..(p + 1) * q]
                                .iter()
                                .zip(&b)
                                .map(|(a, v)| a * v)
                                .sum();
                            out.set(c, y, x, self.intercept[p] + dot);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(MOMENT_MAGIC);
        w.u32(1)
            .u32(self.spec.wire_id())
            .u32(self.order.p() as u32)
            .usize(self.q())?
            .u32(self.centered as u32);
        w.usize(self.height)?.usize(self.width)?.usize(self.delta)?;
        w.f64s(&self.intercept).f64s(&self.coefficients).f64s(&self.basis_mean).f64(self.train_mse);
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MOMENT_MAGIC)?;
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::UnsupportedVersion(version));
        }
        let spec = BasisSpec::from_wire_id(r.u32()?)?;
        let order = MomentOrder::from_p(r.u32()? as u8)?;
        let q = r.usize()?;
        let centered = r.u32()? != 0;
        if q != spec.len() {
            return Err(Error::Malformed(format!("q {q} does not match basis size {}", spec.len())));
        }
        let height = r.usize()?;
        let width = r.usize()?;
        let delta = r.usize()?;
        if delta == 0 || height % delta != 0 || width % delta != 0 {
            return Err(Error::Malformed("grid not divisible by delta".into()));
        }
        let px = io::checked_product(&[height, width, CHANNELS])?;
        let cells = io::checked_product(&[height / delta, width / delta, q])?;
        let intercept = r.f64s(px)?;
        let coefficients = r.f64s(io::checked_product(&[px, q])?)?;
        let basis_mean = r.f64s(cells)?;
        let train_mse = r.f64()?;
        Ok(MomentModel {
            spec,
            order,
            centered,
            height,
            width,
            delta,
            intercept,
            coefficients,
            basis_mean,
            train_mse,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path, &self.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&io::read_file(path)?)
    }
}

impl MomentEstimator for MomentModel {
    fn predict(&self, lr: &Field) -> Result<Field> {
        self.predict_field(lr)
    }
}

/// Mean squared error of `est` against the order-`order` targets of `ds`.
pub fn moment_mse(
    est: &dyn MomentEstimator,
    ds: &Dataset,
    order: MomentOrder,
    center: Option<&dyn MomentEstimator>,
) -> Result<f64> {
    if order == MomentOrder::Variance && center.is_none() {
        return Err(Error::invalid("second-moment error needs a mean estimator"));
    }
    let sse: Vec<f64> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let (lr, sf) = ds.decompose(i);
            let pred = est.predict(&lr)?;
            let target = match order {
                MomentOrder::Mean => sf,
                MomentOrder::Variance => {
                    let m = center.expect("checked").predict(&lr)?;
                    sf.zip_map(&m, |a, b| (a - b) * (a - b))?
                }
            };
            Ok(pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect::<Result<_>>()?;
    let n = ds.len() * ds.samples[0].len();
    Ok(sse.iter().sum::<f64>() / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub model_id: u8,
    pub linear_only: bool,
    pub q: usize,
    pub train_mse: f64,
    pub valid_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSweepReport {
    pub p: u8,
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the smallest model within 0.5% of the best
    /// validation error.
    pub selected: usize,
}

/// Relative validation-error window for model selection.
pub const SWEEP_PLATEAU: f64 = 0.005;

/// Fits every basis in `specs` and tabulates train / validation error.
pub fn sweep_bases(
    train: &Dataset,
    valid: &Dataset,
    order: MomentOrder,
    specs: &[BasisSpec],
    opts: &FitOptions,
    center: Option<&dyn MomentEstimator>,
) -> Result<ModelSweepReport> {
    if specs.is_empty() {
        return Err(Error::invalid("model list is empty"));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let m = fit_stochastic(train, order, spec, opts, center)?;
        let valid_mse = moment_mse(&m, valid, order, center)?;
        rows.push(SweepRow {
            model_id: spec.model_id(),
            linear_only: spec.is_linear_subset(),
            q: spec.len(),
            train_mse: m.train_mse,
            valid_mse,
        });
    }
    let best = rows.iter().map(|r| r.valid_mse).fold(f64::INFINITY, f64::min);
    let selected = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.valid_mse <= best * (1.0 + SWEEP_PLATEAU))
        .min_by_key(|(_, r)| r.q)
        .map(|(i, _)| i)
        .expect("nonempty");
    Ok(ModelSweepReport {
        p: order.p(),
        rows,
        selected,
    })
}

/// [`sweep_bases`] over nested model ids.
pub fn sweep_models(
    train: &Dataset,
    valid: &Dataset,
    order: MomentOrder,
    model_ids: &[u8],
    opts: &FitOptions,
    center: Option<&dyn MomentEstimator>,
) -> Result<ModelSweepReport> {
    let specs = model_ids
        .iter()
        .map(|&id| BasisSpec::model(id))
        .collect::<Result<Vec<_>>>()?;
    sweep_bases(train, valid, order, &specs, opts, center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{synth_dataset, SynthParams};

    fn small(n: usize, warp: f64, seed: u64) -> Dataset {
        let p = SynthParams {
            height: 16,
            width: 16,
            warp,
            ..SynthParams::default()
        };
        synth_dataset(&p, n, seed).unwrap()
    }

    /// Fields that are constant on each `delta` block plus a fixed offset
    /// pattern, so every subfilter target is the same in all samples.
    fn blocky(n: usize, pattern: f64) -> Dataset {
        let ds = small(n, 0.0, 9);
        let samples = ds
            .samples
            .iter()
            .map(|s| {
                let lr = ds_lr(s);
                Field::from_fn(2, 16, 16, |c, y, x| {
                    let sign = if (y % 4 + x % 4) % 2 == 0 { 1.0 } else { -1.0 };
                    lr.get(c, y / 4, x / 4) + pattern * sign
                })
            })
            .collect();
        Dataset::new(samples, 4).unwrap()
    }

    fn ds_lr(s: &Field) -> Field {
        crate::filters::box_filter_coarsen(s, 4).unwrap()
    }

    #[test]
    fn zero_targets_give_zero_model() {
        let ds = blocky(40, 0.0);
        let m = fit_stochastic(&ds, MomentOrder::Mean, &BasisSpec::model(3).unwrap(), &FitOptions::default(), None)
            .unwrap();
        assert!(m.intercept.iter().all(|v| v.abs() < 1e-12));
        assert!(m.coefficients.iter().all(|v| v.abs() < 1e-9));
        assert!(m.train_mse < 1e-20);
    }

    #[test]
    fn constant_targets_give_intercept_only() {
        let ds = blocky(40, 0.25);
        let m = fit_stochastic(&ds, MomentOrder::Mean, &BasisSpec::model(3).unwrap(), &FitOptions::default(), None)
            .unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let sign = if (y % 4 + x % 4) % 2 == 0 { 1.0 } else { -1.0 };
                for c in 0..2 {
                    assert!((m.intercept_at(y, x, c) - 0.25 * sign).abs() < 1e-12);
                    assert!(m.coefficients_at(y, x, c).iter().all(|v| v.abs() < 1e-9));
                }
            }
        }
    }

    #[test]
    fn residual_is_orthogonal_to_basis() {
        let ds = small(300, 0.3, 1);
        let spec = BasisSpec::model(3).unwrap();
        let opts = FitOptions { ridge: 1e-6, homogeneous: false };
        let m = fit_stochastic(&ds, MomentOrder::Mean, &spec, &opts, None).unwrap();
        let (lrs, sfs) = ds.decompose_all();
        let (cy, cx, c) = (1, 2, 1);
        let q = spec.len();
        let n = ds.len() as f64;
        for (oy, ox) in [(0, 0), (3, 1)] {
            let (y, x) = (cy * 4 + oy, cx * 4 + ox);
            let mut basis = Vec::new();
            let mut resid = Vec::new();
            for (lr, sf) in lrs.iter().zip(&sfs) {
                basis.push(spec.eval(&stencil_at_cell(lr, cy, cx)));
                let pred = m.predict(lr).unwrap();
                resid.push(sf.get(c, y, x) - pred.get(c, y, x));
            }
            let rmean = resid.iter().sum::<f64>() / n;
            assert!(rmean.abs() < 1e-10, "residual mean {rmean}");
            // standardized gram trace equals q, so lambda = ridge
            let lambda = opts.ridge;
            for j in 0..q {
                let bm = basis.iter().map(|b| b[j]).sum::<f64>() / n;
                let var = basis.iter().map(|b| (b[j] - bm).powi(2)).sum::<f64>() / n;
                let cov = basis.iter().zip(&resid).map(|(b, r)| (b[j] - bm) * r).sum::<f64>() / n;
                let bj = m.coefficients_at(y, x, c)[j];
                let tol = lambda * var * bj.abs() * 1.01 + 1e-10;
                assert!(cov.abs() <= tol, "term {j}: cov {cov}, tol {tol}");
            }
        }
    }

    #[test]
    fn ridge_limit_is_cauchy() {
        let ds = small(200, 0.3, 2);
        let spec = BasisSpec::model(2).unwrap();
        let fit = |ridge| {
            fit_stochastic(&ds, MomentOrder::Mean, &spec, &FitOptions { ridge, homogeneous: false }, None)
                .unwrap()
                .coefficients
        };
        let (a, b, c) = (fit(1e-4), fit(1e-6), fit(1e-8));
        let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (d1, d2) = (dist(&a, &b), dist(&b, &c));
        assert!(d2 < d1, "{d1} {d2}");
    }

    #[test]
    fn nested_models_do_not_increase_train_error() {
        let ds = small(150, 0.3, 3);
        let mut prev = f64::INFINITY;
        for id in 0..5u8 {
            let m = fit_stochastic(&ds, MomentOrder::Mean, &BasisSpec::model(id).unwrap(), &FitOptions::default(), None)
                .unwrap();
            assert!(m.train_mse <= prev * (1.0 + 1e-7), "model {id}: {} > {prev}", m.train_mse);
            prev = m.train_mse;
        }
    }

    #[test]
    fn variance_fit_requires_center_and_is_centered() {
        let ds = small(100, 0.0, 4);
        let spec = BasisSpec::model(1).unwrap();
        let opts = FitOptions::default();
        assert!(fit_stochastic(&ds, MomentOrder::Variance, &spec, &opts, None).is_err());
        let mean = fit_stochastic(&ds, MomentOrder::Mean, &spec, &opts, None).unwrap();
        let var = fit_stochastic(&ds, MomentOrder::Variance, &spec, &opts, Some(&mean)).unwrap();
        assert!(var.centered);
        assert!(var.intercept.iter().all(|&v| v > 0.0));
        let mse = moment_mse(&var, &ds, MomentOrder::Variance, Some(&mean)).unwrap();
        assert!((mse - var.train_mse).abs() <= 1e-9 * mse.max(1.0));
    }

    #[test]
    fn encode_decode_round_trip() {
        let ds = small(30, 0.2, 5);
        let m = fit_stochastic(&ds, MomentOrder::Mean, &BasisSpec::linear_subset(6).unwrap(), &FitOptions::default(), None)
            .unwrap();
        let back = MomentModel::decode(&m.encode().unwrap()).unwrap();
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.coefficients, m.coefficients);
        assert_eq!(back.intercept, m.intercept);
        let lr = ds.lr(0);
        assert_eq!(back.predict(&lr).unwrap(), m.predict(&lr).unwrap());
        let mut bad = m.encode().unwrap();
        bad.truncate(bad.len() - 1);
        assert!(matches!(MomentModel::decode(&bad), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn homogeneous_mode_ties_interior_cells() {
        let p = SynthParams {
            height: 32,
            width: 32,
            ..SynthParams::default()
        };
        let ds = synth_dataset(&p, 60, 6).unwrap();
        let spec = BasisSpec::model(1).unwrap();
        let m = fit_stochastic(&ds, MomentOrder::Mean, &spec, &FitOptions { ridge: 1e-8, homogeneous: true }, None)
            .unwrap();
        // LR grid 8x8: cells 2..=5 are interior; both pixels sit at offset (1, 2)
        assert_eq!(m.coefficients_at(9, 10, 0), m.coefficients_at(13, 14, 0));
        assert_ne!(m.coefficients_at(1, 1, 0), m.coefficients_at(9, 9, 0));
    }

    #[test]
    fn sweep_selects_within_plateau() {
        let ds = small(120, 0.3, 7);
        let (tr, va) = crate::grid::split_dataset(&ds, 0.8, 1).unwrap();
        let r = sweep_models(&tr, &va, MomentOrder::Mean, &[2], &FitOptions::default(), None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.selected, 0);
        assert!(sweep_models(&tr, &va, MomentOrder::Mean, &[], &FitOptions::default(), None).is_err());
    }
}
