//! Ultimate bounds on the closed-loop pre-impulse state: coarse bounds
//! that hold for any admissible controller, and the tightened bounds
//! obtained for negative-feedback controllers from the monotone `Ψ∘Ψ`
//! iteration.

use serde::{Deserialize, Serialize};

use crate::design::Clamps;
use crate::kinetics::PlantParams;
use crate::modulation::{Controller, FeedbackClass};
use crate::{Error, Result};

/// Ultimate bounds valid for every controller respecting the clamps:
/// `lo = F1 / (e^{-a Φ2} - 1)`, `hi = F2 / (1 - e^{a Φ1})` (clamps in
/// mg/L).
pub fn coarse_bounds(clamps: &Clamps, plant: &PlantParams) -> (f64, f64) {
    let (f_lo, f_hi) = clamps.f_bounds_conc(plant);
    let lo = f_lo / ((-plant.a * clamps.phi_hi_h).exp() - 1.0);
    let hi = f_hi / (1.0 - (plant.a * clamps.phi_lo_h).exp());
    (lo, hi)
}

fn coarse_hi_from_controller(c: &Controller, plant: &PlantParams) -> f64 {
    c.f_bar.hi / (1.0 - (plant.a * c.phi_bar.lo).exp())
}

fn require_negative_feedback(c: &Controller, plant: &PlantParams) -> Result<()> {
    let hi = coarse_hi_from_controller(c, plant);
    match c.classify_feedback(0.0, hi, 2001) {
        FeedbackClass::NegativeFeedback => Ok(()),
        FeedbackClass::Mixed => Err(Error::MixedFeedback(
            "Ψ-based bounds need a negative-feedback controller (Φ nondecreasing, \
             F nonincreasing in x); this controller is mixed"
                .into(),
        )),
    }
}

fn psi_unchecked(c: &Controller, plant: &PlantParams, x: f64) -> Result<f64> {
    let phi = c.phi_of_x(x)?;
    let f = c.f_of_x(x)?;
    let e = (plant.a * phi).exp();
    Ok(f * e / (1.0 - e))
}

/// The steady-state operator `Ψ(x) = F(x) e^{a Φ(x)} / (1 - e^{a Φ(x)})`:
/// the fixed point a constant-input cycle would settle to if the
/// controller kept responding as it does at `x`. Non-increasing in `x`
/// for negative-feedback controllers, which is a prerequisite (mixed
/// controllers are refused).
pub fn psi(c: &Controller, plant: &PlantParams, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("psi: x must be >= 0, got {x}")));
    }
    require_negative_feedback(c, plant)?;
    psi_unchecked(c, plant, x)
}

/// Output of the monotone bounding iteration (`m0 = 0`,
/// `m_n = (Ψ∘Ψ)(m_{n-1})`, `M_n = Ψ(m_n)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub coarse_lo: f64,
    pub coarse_hi: f64,
    /// Minimal fixed point `m*` of `Ψ∘Ψ`: asymptotic lower bound.
    pub m_star: f64,
    /// Maximal fixed point `M* = Ψ(m*)`.
    pub m_star_upper: f64,
    /// Asymptotic upper bound on the whole trajectory (not just the
    /// pre-impulse samples): `e^{-a Φ(M*)} M*`.
    pub tightened_hi: f64,
    /// Number of `Ψ∘Ψ` applications performed.
    pub iterations: usize,
    /// False when `max_iter` was hit before the gap stalled; `m_star`
    /// and `m_star_upper` are then outer bounds, still valid.
    pub converged: bool,
    /// `(m_n, M_n)` for n = 0, 1, ..., starting at `(0, Ψ(0))`.
    pub sequences: Vec<(f64, f64)>,
}

impl BoundsReport {
    /// First n with `M_n - m_n <= eps`, if reached.
    pub fn steps_to_gap(&self, eps: f64) -> Option<usize> {
        self.sequences.iter().position(|(m, em)| em - m <= eps)
    }
}

/// Runs the Lemma-style monotone sequences until the bracket
/// `[m_n, M_n]` stops shrinking by more than `tol` (or `max_iter` is
/// reached) and reports the tightened ultimate bounds. Negative-feedback
/// controllers only.
pub fn iterate_bounds(
    c: &Controller,
    plant: &PlantParams,
    tol: f64,
    max_iter: usize,
) -> Result<BoundsReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    require_negative_feedback(c, plant)?;
    let coarse_lo = c.f_bar.lo / ((-plant.a * c.phi_bar.hi).exp() - 1.0);
    let coarse_hi = coarse_hi_from_controller(c, plant);

    let mut m = 0.0;
    let mut big_m = psi_unchecked(c, plant, m)?;
    let mut sequences = vec![(m, big_m)];
    let mut gap = big_m - m;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let m_next = psi_unchecked(c, plant, big_m)?;
        let big_m_next = psi_unchecked(c, plant, m_next)?;
        iterations += 1;
        m = m_next;
        big_m = big_m_next;
        sequences.push((m, big_m));
        let gap_next = big_m - m;
        if gap_next <= tol || gap - gap_next < tol {
            converged = true;
            break;
        }
        gap = gap_next;
    }
    // Duality at the limit: M* = Ψ(m*) holds by construction; check
    // m* = Ψ(M*) as well, which fails only on non-convergence.
    if converged && (psi_unchecked(c, plant, big_m)? - m).abs() > 100.0 * tol.max(1e-12) {
        converged = false;
    }
    let tightened_hi = (-plant.a * c.phi_of_x(big_m)?).exp() * big_m;
    Ok(BoundsReport {
        coarse_lo,
        coarse_hi,
        m_star: m,
        m_star_upper: big_m,
        tightened_hi,
        iterations,
        converged,
        sequences,
    })
}
