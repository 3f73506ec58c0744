//! Plant-copy observers with output-error injection.
//!
//! The observer integrates the plant model driven by the applied input `u`
//! and corrects it with `k g (y_bar - y_bar_hat)` in the momentum equation.
//! The error `x - x_hat` then obeys the unforced plant with injection
//! `-k g (y_bar - y_bar_hat)`, so its energy decays at rate
//! `-k (y_bar - y_bar_hat)^2`.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{JetBundleState, PlantState, StokesDiracState, StringModel};

/// Injection profiles for the two state fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    /// Injection into `w_hat` (or `q_hat`).
    pub first: Field,
    /// Injection into `p_hat`.
    pub momentum: Field,
}

impl ObserverGain {
    /// Injection on the momentum only, shaped like the actuator.
    pub fn string(k: f64, model: &StringModel) -> Self {
        ObserverGain {
            first: model.grid.zeros(),
            momentum: model.patch.input_density().scaled(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub estimate: PlantState,
    pub gain: ObserverGain,
    pub k: f64,
}

impl ObserverState {
    pub fn new(estimate: PlantState, k: f64, model: &StringModel) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("k >= 0 (got {k})")));
        }
        Ok(ObserverState {
            estimate,
            gain: ObserverGain::string(k, model),
            k,
        })
    }

    /// `y_bar_hat = int g p_hat / rho dz`
    pub fn output(&self, model: &StringModel) -> f64 {
        self.estimate.output(model)
    }

    pub fn rhs(&self, u: f64, y_bar_meas: f64, model: &StringModel) -> Result<PlantState> {
        estimate_rhs(&self.estimate, &self.gain, u, y_bar_meas, model)
    }
}

/// Observer dynamics for an estimate given separately from its gain.
pub fn estimate_rhs(
    estimate: &PlantState,
    gain: &ObserverGain,
    u: f64,
    y_bar_meas: f64,
    model: &StringModel,
) -> Result<PlantState> {
    Ok(match estimate {
        PlantState::Jb(s) => PlantState::Jb(observer_rhs_jb(s, gain, u, y_bar_meas, model)?),
        PlantState::Sd(s) => PlantState::Sd(observer_rhs_sd(s, gain, u, y_bar_meas, model)),
    })
}

pub fn observer_rhs_jb(
    est: &JetBundleState,
    gain: &ObserverGain,
    u: f64,
    y_bar_meas: f64,
    model: &StringModel,
) -> Result<JetBundleState> {
    let innovation = y_bar_meas - model.integrated_output(&est.p);
    let mut d = model.jb_rhs(est, u)?;
    d.w = d.w.axpy(innovation, &gain.first);
    d.p = d.p.axpy(innovation, &gain.momentum);
    d.w[0] = 0.0;
    d.p[0] = 0.0;
    Ok(d)
}

pub fn observer_rhs_sd(
    est: &StokesDiracState,
    gain: &ObserverGain,
    u: f64,
    y_bar_meas: f64,
    model: &StringModel,
) -> StokesDiracState {
    let innovation = y_bar_meas - model.integrated_output(&est.p);
    let mut d = model.sd_rhs(est, u);
    d.q = d.q.axpy(innovation, &gain.first);
    d.p = d.p.axpy(innovation, &gain.momentum);
    d.apply_bcs();
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDiagnostics {
    /// Energy of the estimation error.
    pub h_tilde: f64,
    /// `-k (y_bar - y_bar_hat)^2`
    pub dissipation_rate: f64,
    /// `y_bar - y_bar_hat`
    pub innovation: f64,
}

/// Error energy `H(x - x_hat)`. This is not `H(x) + H(x_hat)`.
pub fn error_energy(
    plant: &PlantState,
    obs: &ObserverState,
    model: &StringModel,
) -> Result<ErrorDiagnostics> {
    if plant.framework() != obs.estimate.framework() {
        return Err(Error::FrameworkMismatch);
    }
    let err = plant.sub(&obs.estimate)?;
    let innovation = plant.output(model) - obs.output(model);
    Ok(ErrorDiagnostics {
        h_tilde: err.hamiltonian(model),
        dissipation_rate: -obs.k * innovation * innovation,
        innovation,
    })
}
