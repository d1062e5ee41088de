//! Analytic plant flow, the Hill output map, and dose/concentration units.
//!
//! The plant is scalar linear, so every flow is evaluated in closed form;
//! there is no integrator and no solver tolerance anywhere downstream.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// First-order elimination kinetics and the dose-to-concentration bridge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Elimination rate, 1/h. Strictly negative.
    pub a: f64,
    /// Volume of distribution, L. Converts a dose in mg to a concentration
    /// increment in mg/L. Not a literature constant for the paracetamol
    /// example; 42 L is back-solved from the reproduced ultimate bounds.
    pub vd: f64,
}

impl PlantParams {
    pub fn new(a: f64, vd: f64) -> Result<Self> {
        if !(a < 0.0) {
            return Err(Error::Domain(format!("elimination rate must be < 0, got {a}")));
        }
        if !(vd > 0.0) {
            return Err(Error::Domain(format!("volume of distribution must be > 0, got {vd}")));
        }
        Ok(Self { a, vd })
    }

    /// Unchecked decay, for internal call sites that already hold x >= 0, dt >= 0.
    #[inline]
    pub(crate) fn decay(&self, x: f64, dt: f64) -> f64 {
        x * (self.a * dt).exp()
    }
}

/// Hill-type static output nonlinearity: effect = e0 - emax*x/(ec50 + x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillPD {
    pub e0: f64,
    pub emax: f64,
    pub ec50: f64,
}

impl HillPD {
    pub fn new(e0: f64, emax: f64, ec50: f64) -> Result<Self> {
        if !(emax > 0.0) {
            return Err(Error::Domain(format!("emax must be > 0, got {emax}")));
        }
        if !(ec50 > 0.0) {
            return Err(Error::Domain(format!("ec50 must be > 0, got {ec50}")));
        }
        if !(emax <= e0) {
            return Err(Error::Domain(format!(
                "emax ({emax}) must not exceed e0 ({e0}); output would go negative"
            )));
        }
        Ok(Self { e0, emax, ec50 })
    }

    /// Infimum of the map over x >= 0, reached as x -> infinity.
    #[inline]
    pub fn floor(&self) -> f64 {
        self.e0 - self.emax
    }
}

/// Closed-form flow of the plant: `x0 * exp(a*dt)`.
pub fn flow(x0: f64, dt: f64, plant: &PlantParams) -> Result<f64> {
    if x0 < 0.0 {
        return Err(Error::Domain(format!("flow: x0 must be >= 0, got {x0}")));
    }
    if dt < 0.0 {
        return Err(Error::Domain(format!("flow: dt must be >= 0, got {dt}")));
    }
    Ok(plant.decay(x0, dt))
}

/// Effect score at concentration `x`.
pub fn hill(x: f64, pd: &HillPD) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("hill: x must be >= 0, got {x}")));
    }
    Ok(hill_unchecked(x, pd))
}

#[inline]
pub(crate) fn hill_unchecked(x: f64, pd: &HillPD) -> f64 {
    pd.e0 - pd.emax * x / (pd.ec50 + x)
}

/// Concentration producing effect `y`; inverse of [`hill`] on its range.
pub fn hill_inverse(y: f64, pd: &HillPD) -> Result<f64> {
    let drop = pd.e0 - y;
    if !(drop >= 0.0 && drop < pd.emax) {
        return Err(Error::Domain(format!(
            "hill_inverse: y = {y} outside range ({}, {}]",
            pd.floor(),
            pd.e0
        )));
    }
    Ok(pd.ec50 * drop / (pd.emax - drop))
}

/// Derivative of the Hill map: always negative for x >= 0.
pub fn hill_slope(x: f64, pd: &HillPD) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("hill_slope: x must be >= 0, got {x}")));
    }
    Ok(hill_slope_unchecked(x, pd))
}

#[inline]
pub(crate) fn hill_slope_unchecked(x: f64, pd: &HillPD) -> f64 {
    let d = pd.ec50 + x;
    -pd.emax * pd.ec50 / (d * d)
}

/// Second derivative of the Hill map, used for scan safety margins.
#[inline]
pub(crate) fn hill_curvature(x: f64, pd: &HillPD) -> f64 {
    let d = pd.ec50 + x;
    2.0 * pd.emax * pd.ec50 / (d * d * d)
}

/// Concentration increment from an administered dose: `dose / vd`.
pub fn dose_to_conc(dose_mg: f64, plant: &PlantParams) -> Result<f64> {
    if dose_mg < 0.0 {
        return Err(Error::Domain(format!("dose_to_conc: dose must be >= 0, got {dose_mg}")));
    }
    Ok(dose_mg / plant.vd)
}
