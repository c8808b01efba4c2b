//! Conditional-moment estimation of subfilter fields given LR fields.

pub mod basis;
pub mod network;
pub mod oracle;
pub mod stencil;
pub mod stochastic;

pub use basis::{basis_eval, BasisSpec, Term, TERM_COUNTS};
pub use network::{
    fit_moment_network, fit_network_ladder, select_architecture, LadderReport, MomentNetwork, NetworkFitConfig,
    NetworkFitReport, NETWORK_LADDER,
};
pub use oracle::{gaussian_oracle, GaussianOracle};
pub use stencil::{build_stencil, Stencil};
pub use stochastic::{
    fit_stochastic, moment_mse, sweep_bases, sweep_models, FitOptions, ModelSweepReport, MomentModel, SweepRow,
};

use crate::error::{Error, Result};
use crate::grid::Field;

/// Floor applied to every evaluated conditional variance.
pub const VAR_FLOOR: f64 = 1e-12;

/// Which conditional moment a model estimates. The second moment is always
/// centered (a conditional variance).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentOrder {
    Mean,
    Variance,
}

impl MomentOrder {
    pub fn p(self) -> u8 {
        match self {
            MomentOrder::Mean => 1,
            MomentOrder::Variance => 2,
        }
    }

    pub fn from_p(p: u8) -> Result<Self> {
        match p {
            1 => Ok(MomentOrder::Mean),
            2 => Ok(MomentOrder::Variance),
            _ => Err(Error::invalid(format!("moment order {p} not in {{1, 2}}"))),
        }
    }
}

/// Conditional mean and variance of the subfilter field, `[2, H, W]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    pub mean: Field,
    pub variance: Field,
}

impl MomentField {
    pub fn std(&self) -> Field {
        self.variance.map(|v| v.max(0.0).sqrt())
    }
}

/// Anything that maps an LR field to a per-pixel moment estimate.
pub trait MomentEstimator: Sync {
    fn predict(&self, lr: &Field) -> Result<Field>;
}

/// Mean from the first-order estimator, variance from the second clamped to
/// `[VAR_FLOOR, inf)`.
pub fn eval_moments(
    mean_model: &dyn MomentEstimator,
    var_model: &dyn MomentEstimator,
    lr: &Field,
) -> Result<MomentField> {
    let mean = mean_model.predict(lr)?;
    let variance = var_model.predict(lr)?.map(|v| v.max(VAR_FLOOR));
    mean.check_same_shape(&variance, "moment estimators disagree on shape")?;
    Ok(MomentField { mean, variance })
}
