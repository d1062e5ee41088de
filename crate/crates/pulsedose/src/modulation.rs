//! Saturated-affine modulation functions in effect space and their
//! composition with the Hill map into the state-space modulation pair
//! `Φ(x) = Φ̄(φ(x))` (next inter-impulse interval, h) and
//! `F(x) = F̄(φ(x))` (impulse weight, mg/L).
//!
//! Both composed functions are piecewise smooth with at most two kinks
//! each (the clamp boundaries); derivative queries return one-sided pairs
//! so downstream certificates can take the worst case.

use serde::{Deserialize, Serialize};

use crate::kinetics::{
    hill_inverse, hill_slope_unchecked, hill_unchecked, HillPD, PlantParams,
};
use crate::{Error, Result};

/// `clamp(slope*ξ + intercept, lo, hi)`. Clamps must satisfy 0 < lo <= hi;
/// lo == hi degenerates to a constant function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatAffineFn {
    pub slope: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
}

/// One-sided derivative pair at a point; `left == right` away from kinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSided {
    pub left: f64,
    pub right: f64,
}

impl OneSided {
    fn uniform(v: f64) -> Self {
        Self { left: v, right: v }
    }

    /// The two-sided value if the point is smooth.
    pub fn smooth(&self) -> Option<f64> {
        (self.left == self.right).then_some(self.left)
    }

    pub fn worst_abs(&self) -> f64 {
        self.left.abs().max(self.right.abs())
    }
}

impl SatAffineFn {
    pub fn new(slope: f64, intercept: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::Domain(format!(
                "saturation bounds must satisfy 0 < lo <= hi, got lo = {lo}, hi = {hi}"
            )));
        }
        Ok(Self { slope, intercept, lo, hi })
    }

    /// Constant function pinned at `v` (degenerate clamps).
    pub fn constant(v: f64) -> Result<Self> {
        Self::new(0.0, v, v, v)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        (self.slope * xi + self.intercept).clamp(self.lo, self.hi)
    }

    /// Effective one-sided slopes in ξ: `slope` on the affine piece, 0 inside
    /// saturation, a differing pair exactly at a clamp boundary.
    pub fn slope_sides(&self, xi: f64) -> OneSided {
        let v = self.slope * xi + self.intercept;
        let eps = 1e-9 * (1.0 + v.abs());
        let at_lo = (v - self.lo).abs() <= eps;
        let at_hi = (v - self.hi).abs() <= eps;
        if self.lo == self.hi || self.slope == 0.0 {
            return OneSided::uniform(0.0);
        }
        if at_lo || at_hi {
            // The affine side is the one where v moves into the interior.
            let interior_up = at_lo; // v > lo is interior; for hi, v < hi is.
            let affine_on_plus = (self.slope > 0.0) == interior_up;
            return if affine_on_plus {
                OneSided { left: 0.0, right: self.slope }
            } else {
                OneSided { left: self.slope, right: 0.0 }
            };
        }
        if v < self.lo || v > self.hi {
            OneSided::uniform(0.0)
        } else {
            OneSided::uniform(self.slope)
        }
    }
}

/// Feedback-sign classification of the composed modulation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackClass {
    /// `F∘φ` non-increasing and `Φ∘φ` non-decreasing in the state.
    NegativeFeedback,
    Mixed,
}

/// Pulse-modulated feedback law: saturated affine functions of the measured
/// effect, composed with the Hill map. The amplitude path is stored in
/// concentration units (mg/L); dose conversion happens at the simulator
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    /// Frequency modulation `Φ̄`, hours over effect score.
    pub phi_bar: SatAffineFn,
    /// Amplitude modulation `F̄`, mg/L over effect score.
    pub f_bar: SatAffineFn,
    pub pd: HillPD,
}

/// One-sided state-space slopes of the modulation pair at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    pub f: OneSided,
    pub phi: OneSided,
}

impl Controller {
    pub fn new(phi_bar: SatAffineFn, f_bar: SatAffineFn, pd: HillPD) -> Self {
        Self { phi_bar, f_bar, pd }
    }

    /// Next inter-impulse interval `Φ(x)`, h.
    pub fn phi_of_x(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("phi_of_x: x must be >= 0, got {x}")));
        }
        Ok(self.phi_bar.eval(hill_unchecked(x, &self.pd)))
    }

    /// Impulse weight `F(x)`, mg/L.
    pub fn f_of_x(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("f_of_x: x must be >= 0, got {x}")));
        }
        Ok(self.f_bar.eval(hill_unchecked(x, &self.pd)))
    }

    /// State-space slopes `F'(x)`, `Φ'(x)` via the chain rule. At a clamp
    /// boundary both one-sided values are reported.
    pub fn slopes_at(&self, x: f64) -> Result<Slopes> {
        if x < 0.0 {
            return Err(Error::Domain(format!("slopes_at: x must be >= 0, got {x}")));
        }
        let xi = hill_unchecked(x, &self.pd);
        let dphi_dx = hill_slope_unchecked(x, &self.pd);
        // φ is decreasing, so approaching x from the left means approaching
        // ξ from the right: the in-ξ sides swap.
        let map = |s: OneSided| OneSided { left: s.right * dphi_dx, right: s.left * dphi_dx };
        Ok(Slopes {
            f: map(self.f_bar.slope_sides(xi)),
            phi: map(self.phi_bar.slope_sides(xi)),
        })
    }

    /// Classify the feedback sign by scanning the composed functions on a
    /// uniform grid over `[lo, hi]`.
    pub fn classify_feedback(&self, lo: f64, hi: f64, n: usize) -> FeedbackClass {
        assert!(hi > lo && lo >= 0.0 && n >= 2, "nonempty interval required");
        let tol = 1e-12;
        let mut prev_f = f64::INFINITY;
        let mut prev_phi = f64::NEG_INFINITY;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let f = self.f_of_x(x).expect("x >= 0");
            let phi = self.phi_of_x(x).expect("x >= 0");
            if f > prev_f + tol || phi < prev_phi - tol {
                return FeedbackClass::Mixed;
            }
            prev_f = f;
            prev_phi = phi;
        }
        FeedbackClass::NegativeFeedback
    }

    /// Abscissae where either composed function crosses a clamp boundary,
    /// sorted ascending. These are the only non-smooth points of the
    /// closed-loop return map.
    pub fn kink_points(&self) -> Vec<f64> {
        let mut xs = Vec::new();
        for sat in [&self.phi_bar, &self.f_bar] {
            if sat.slope == 0.0 || sat.lo == sat.hi {
                continue;
            }
            for bound in [sat.lo, sat.hi] {
                let xi = (bound - sat.intercept) / sat.slope;
                if let Ok(x) = hill_inverse(xi, &self.pd) {
                    if x.is_finite() && x > 0.0 {
                        xs.push(x);
                    }
                }
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        xs
    }
}

/// Controller wire format. Coefficients follow the effect-space
/// parameterization `Φ̄(ξ) = k2 ξ + k1`, `F̄(ξ) = k4 ξ + k3`; amplitude
/// clamps are exchanged in mg and converted through `vd_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerWire {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub phi_lo_h: f64,
    pub phi_hi_h: f64,
    pub f_lo_mg: f64,
    pub f_hi_mg: f64,
    pub pd: HillPD,
    pub vd_l: f64,
}

impl ControllerWire {
    pub fn from_controller(c: &Controller, plant: &PlantParams) -> Self {
        Self {
            k1: c.phi_bar.intercept,
            k2: c.phi_bar.slope,
            k3: c.f_bar.intercept,
            k4: c.f_bar.slope,
            phi_lo_h: c.phi_bar.lo,
            phi_hi_h: c.phi_bar.hi,
            f_lo_mg: c.f_bar.lo * plant.vd,
            f_hi_mg: c.f_bar.hi * plant.vd,
            pd: c.pd,
            vd_l: plant.vd,
        }
    }

    pub fn into_controller(self) -> Result<Controller> {
        if !(self.vd_l > 0.0) {
            return Err(Error::Domain(format!("vd_l must be > 0, got {}", self.vd_l)));
        }
        let pd = HillPD::new(self.pd.e0, self.pd.emax, self.pd.ec50)?;
        Ok(Controller::new(
            SatAffineFn::new(self.k2, self.k1, self.phi_lo_h, self.phi_hi_h)?,
            SatAffineFn::new(self.k4, self.k3, self.f_lo_mg / self.vd_l, self.f_hi_mg / self.vd_l)?,
            pd,
        ))
    }
}
