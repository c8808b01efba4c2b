//! Classical single-output deconvolution baselines.

use crate::error::{Error, Result};
use crate::filters::{laplacian, FilterOp};
use crate::grid::Field;

/// Approximate deconvolution by the truncated Neumann series
/// `sum_{i=0}^{n} (I - g)^i filtered`.
pub fn adm_deconvolve(filtered: &Field, filter: &dyn FilterOp, n: i64) -> Result<Field> {
    if n < 0 {
        return Err(Error::invalid(format!("ADM term count {n} must be >= 0")));
    }
    let mut term = filtered.clone();
    let mut acc = filtered.clone();
    for _ in 0..n {
        let g = filter.apply(&term)?;
        term = term.sub(&g)?;
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

/// First-order Taylor inversion of a Gaussian filter of size `delta`:
/// `filtered - delta^2 / 24 * laplacian(filtered)`.
pub fn taylor_deconvolve(filtered: &Field, delta: f64) -> Field {
    let c = delta * delta / 24.0;
    let lap = laplacian(filtered);
    filtered.zip_map(&lap, |f, l| f - c * l).expect("same shape")
}
