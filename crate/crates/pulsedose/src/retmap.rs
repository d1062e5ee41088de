//! The discrete return map `Q(x) = e^{a Φ(x)} (x + F(x))` sending one
//! pre-impulse state to the next, with fixed-point solving and stability
//! certificates.
//!
//! `Q` is piecewise smooth with at most four kinks (two clamp boundaries
//! per modulation function), located exactly through the Hill inverse.
//! Certificates scan each smooth piece on a grid and add a margin of
//! (grid spacing) x (analytic bound on `|Q''|` over the piece), turning
//! the almost-everywhere derivative conditions into finite checks.

use serde::{Deserialize, Serialize};

use crate::kinetics::{hill_curvature, hill_slope_unchecked, PlantParams};
use crate::modulation::{Controller, FeedbackClass, OneSided};
use crate::{Error, Result};

/// Fixed points closer than this are merged in the non-monotone search.
const ROOT_MERGE_TOL: f64 = 1e-6;
/// Bisection width tolerance for fixed points, mg/L.
const ROOT_TOL: f64 = 1e-10;
/// `|Q'(x*)|` threshold for the super-exponential certificate.
pub const DEADBEAT_TOL: f64 = 1e-8;

/// One application of the return map.
pub fn q_map(c: &Controller, plant: &PlantParams, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("q_map: x must be >= 0, got {x}")));
    }
    let phi = c.phi_of_x(x)?;
    let f = c.f_of_x(x)?;
    Ok((plant.a * phi).exp() * (x + f))
}

/// Closed-form derivative of the return map,
/// `Q'(x) = e^{a Φ(x)} (1 + F'(x) + a (x + F(x)) Φ'(x))`,
/// reported as a one-sided pair (equal away from kinks).
pub fn q_prime(c: &Controller, plant: &PlantParams, x: f64) -> Result<OneSided> {
    if x < 0.0 {
        return Err(Error::Domain(format!("q_prime: x must be >= 0, got {x}")));
    }
    let phi = c.phi_of_x(x)?;
    let f = c.f_of_x(x)?;
    let slopes = c.slopes_at(x)?;
    let e = (plant.a * phi).exp();
    let side = |fp: f64, pp: f64| e * (1.0 + fp + plant.a * (x + f) * pp);
    Ok(OneSided {
        left: side(slopes.f.left, slopes.phi.left),
        right: side(slopes.f.right, slopes.phi.right),
    })
}

fn bisect_root(
    c: &Controller,
    plant: &PlantParams,
    mut lo: f64,
    mut hi: f64,
    g_lo: f64,
) -> Result<f64> {
    let mut sign_lo = g_lo;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let g_mid = mid - q_map(c, plant, mid)?;
        if sign_lo * g_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            sign_lo = g_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All fixed points of `Q` on `[0, search_hi]`.
///
/// For a negative-feedback controller `x - Q(x)` is strictly increasing,
/// so a single bisection suffices; otherwise a 10^4-point grid locates the
/// sign changes and each bracket is refined by bisection. Roots closer
/// than 1e-6 mg/L are merged.
pub fn find_fixed_points(
    c: &Controller,
    plant: &PlantParams,
    search_hi: f64,
) -> Result<Vec<f64>> {
    if !(search_hi > 0.0) {
        return Err(Error::Domain(format!("search_hi must be > 0, got {search_hi}")));
    }
    let g = |x: f64| -> Result<f64> { Ok(x - q_map(c, plant, x)?) };
    let g0 = g(0.0)?;
    let g_hi = g(search_hi)?;
    if g0 >= 0.0 || g_hi <= 0.0 {
        return Err(Error::Internal(format!(
            "no bracket on [0, {search_hi}]: g(0) = {g0}, g(hi) = {g_hi}; \
             search_hi must exceed the coarse upper bound"
        )));
    }
    if c.classify_feedback(0.0, search_hi, 2001) == FeedbackClass::NegativeFeedback {
        return Ok(vec![bisect_root(c, plant, 0.0, search_hi, g0)?]);
    }
    let n = 10_000;
    let mut roots: Vec<f64> = Vec::new();
    let mut x_prev = 0.0;
    let mut g_prev = g0;
    for i in 1..=n {
        let x = search_hi * i as f64 / n as f64;
        let g_x = g(x)?;
        if g_prev == 0.0 {
            roots.push(x_prev);
        } else if g_prev * g_x < 0.0 {
            roots.push(bisect_root(c, plant, x_prev, x, g_prev)?);
        }
        x_prev = x;
        g_prev = g_x;
    }
    if g_prev == 0.0 {
        roots.push(x_prev);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < ROOT_MERGE_TOL);
    if roots.is_empty() {
        return Err(Error::Internal(
            "sign change lost during refinement; Q(0) > 0 and Q(x) < x at search_hi".into(),
        ));
    }
    Ok(roots)
}

/// Splits `[lo, hi]` into smooth pieces of `Q` (cut at clamp kinks).
fn smooth_pieces(c: &Controller, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = c
        .kink_points()
        .into_iter()
        .filter(|k| *k > lo + 1e-12 && *k < hi - 1e-12)
        .collect();
    cuts.push(hi);
    let mut pieces = Vec::with_capacity(cuts.len());
    let mut start = lo;
    for cut in cuts {
        pieces.push((start, cut));
        start = cut;
    }
    pieces
}

/// Analytic bound on `|Q''|` over one smooth piece, used to convert the
/// grid maximum of `|Q'|` into a bound over the continuum.
fn q_second_derivative_bound(c: &Controller, plant: &PlantParams, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let xi_mid = crate::kinetics::hill_unchecked(mid, &c.pd);
    // Effective affine slopes on this piece (0 inside saturation).
    let k2 = c.phi_bar.slope_sides(xi_mid).left;
    let k4 = c.f_bar.slope_sides(xi_mid).left;
    // |φ'| and |φ''| both decrease in x: the piece maximum is at the left end.
    let s1 = hill_slope_unchecked(lo, &c.pd).abs();
    let s2 = hill_curvature(lo, &c.pd);
    let p1 = k2.abs() * s1;
    let p2 = k2.abs() * s2;
    let g1 = k4.abs() * s1;
    let g2 = k4.abs() * s2;
    let abs_a = plant.a.abs();
    let x_cap = hi + c.f_bar.hi;
    // Φ is monotone on a smooth piece, so its minimum is at an endpoint.
    let phi_min = c
        .phi_of_x(lo)
        .unwrap_or(c.phi_bar.lo)
        .min(c.phi_of_x(hi).unwrap_or(c.phi_bar.lo));
    let e = (plant.a * phi_min).exp();
    e * (abs_a * p1 * (1.0 + g1 + abs_a * x_cap * p1)
        + g2
        + abs_a * (1.0 + g1) * p1
        + abs_a * x_cap * p2)
}

/// Result of a global contraction scan. A refusal is a value, not an
/// error: it carries the witness abscissa where `|Q'|` (plus margin)
/// reaches 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum ContractionOutcome {
    Certified { q: f64 },
    Refused { witness_x: f64, q_prime_abs: f64 },
}

impl ContractionOutcome {
    pub fn q(&self) -> Option<f64> {
        match self {
            ContractionOutcome::Certified { q } => Some(*q),
            ContractionOutcome::Refused { .. } => None,
        }
    }
}

/// Certifies `|Q'(x)| <= q < 1` almost everywhere on `[lo, hi]`.
///
/// Each smooth piece is scanned on a uniform grid (at least `grid_n`
/// points across the interval, never fewer than 1000) and the grid
/// maximum is inflated by (spacing) x (piece bound on `|Q''|`).
pub fn contraction_certificate(
    c: &Controller,
    plant: &PlantParams,
    lo: f64,
    hi: f64,
    grid_n: usize,
) -> ContractionOutcome {
    assert!(hi > lo && lo >= 0.0, "invalid scan interval [{lo}, {hi}]");
    let grid_n = grid_n.max(1000);
    let span = hi - lo;
    // Cap the grid margin at 0.005: the piece bound on |Q''| is worst-case
    // over the whole piece, so long pieces need proportionally finer grids.
    const MARGIN_BUDGET: f64 = 5e-3;
    const MAX_PIECE_N: usize = 5_000_000;
    let mut q_cert: f64 = 0.0;
    let mut worst_x = lo;
    let mut worst_val = 0.0;
    for (p0, p1) in smooth_pieces(c, lo, hi) {
        let bound = q_second_derivative_bound(c, plant, p0, p1);
        let n_prop = ((p1 - p0) / span * grid_n as f64).ceil() as usize;
        let n_margin = (bound * (p1 - p0) / MARGIN_BUDGET).ceil() as usize;
        let n = n_prop.max(n_margin).clamp(50, MAX_PIECE_N);
        let h = (p1 - p0) / n as f64;
        let margin = h * bound;
        let mut piece_max: f64 = 0.0;
        let mut piece_argmax = p0;
        for i in 0..=n {
            let x = p0 + h * i as f64;
            let qp = q_prime(c, plant, x).expect("x >= 0");
            // At a piece endpoint only the side facing the interior counts.
            let v = if i == 0 {
                qp.right.abs()
            } else if i == n {
                qp.left.abs()
            } else {
                qp.worst_abs()
            };
            if v > piece_max {
                piece_max = v;
                piece_argmax = x;
            }
        }
        let bounded = piece_max + margin;
        if bounded > q_cert {
            q_cert = bounded;
            worst_x = piece_argmax;
            worst_val = piece_max;
        }
    }
    if q_cert < 1.0 {
        ContractionOutcome::Certified { q: q_cert }
    } else {
        ContractionOutcome::Refused { witness_x: worst_x, q_prime_abs: worst_val }
    }
}

/// Largest radius `δ <= delta_max` such that `Q` contracts on
/// `[max(0, x* - δ), x* + δ]`, found by bisection on the monotone
/// predicate. `None` when no radius above 1e-6 contracts.
pub fn basin_estimate(
    c: &Controller,
    plant: &PlantParams,
    x_star: f64,
    delta_max: f64,
) -> Option<f64> {
    const DELTA_MIN: f64 = 1e-6;
    let contracts = |delta: f64| {
        let lo = (x_star - delta).max(0.0);
        matches!(
            contraction_certificate(c, plant, lo, x_star + delta, 2000),
            ContractionOutcome::Certified { .. }
        )
    };
    if contracts(delta_max) {
        return Some(delta_max);
    }
    if !contracts(DELTA_MIN) {
        return None;
    }
    let (mut good, mut bad) = (DELTA_MIN, delta_max);
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if contracts(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Grid supremum of `|q(x) - q(x*)| / (x - x*)^2` over `[lo, hi]`; the raw
/// quadratic envelope constant of an arbitrary scalar map around a fixed
/// point. Exposed for use as an independent oracle in tests.
pub fn quadratic_envelope_sup(
    q: impl Fn(f64) -> f64,
    x_star: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> f64 {
    let q_star = q(x_star);
    let mut sup: f64 = 0.0;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let d = x - x_star;
        if d.abs() < 1e-9 {
            continue;
        }
        sup = sup.max((q(x) - q_star).abs() / (d * d));
    }
    sup
}

/// Super-exponential convergence certificate (deadbeat-rate designs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperExpCert {
    /// Grid supremum of the quadratic envelope, before inflation.
    pub alpha_raw: f64,
    /// Certified constant: `alpha_raw` inflated by 5%.
    pub alpha: f64,
    /// Invariant radius `r = min(δ, 1/α)`; from `|x0 - x*| <= r` the error
    /// obeys `|x_n - x*| <= α^{-1} (α |x0 - x*|)^{2^n}`.
    pub r: f64,
}

/// Computes the quadratic-envelope constant `α` on
/// `I = [x* - δ, x* + δ]` for a deadbeat design (`|Q'(x*)| <= 1e-8`).
///
/// Refuses when the derivative at the fixed point is not flat, or when the
/// fixed point sits on a clamp kink (the local Taylor argument needs a
/// smooth piece around `x*`).
pub fn superexp_alpha(
    c: &Controller,
    plant: &PlantParams,
    x_star: f64,
    delta: f64,
) -> Result<SuperExpCert> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be > 0, got {delta}")));
    }
    if let Some(k) = c
        .kink_points()
        .iter()
        .map(|k| (k - x_star).abs())
        .fold(None::<f64>, |m, d| Some(m.map_or(d, |m| m.min(d))))
    {
        if k < 1e-9 {
            return Err(Error::Design(format!(
                "fixed point x* = {x_star} sits on a clamp kink; no smooth neighborhood"
            )));
        }
    }
    let qp = q_prime(c, plant, x_star)?;
    if qp.worst_abs() > DEADBEAT_TOL {
        return Err(Error::Design(format!(
            "super-exponential certificate requires Q'(x*) = 0 within {DEADBEAT_TOL:e}; \
             got Q'(x*) = {}",
            qp.left
        )));
    }
    let lo = (x_star - delta).max(0.0);
    let alpha_raw = quadratic_envelope_sup(
        |x| q_map(c, plant, x).expect("x >= 0"),
        x_star,
        lo,
        x_star + delta,
        4000,
    );
    let alpha = 1.05 * alpha_raw;
    Ok(SuperExpCert { alpha_raw, alpha, r: delta.min(1.0 / alpha) })
}

/// Headline classification of a certified controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    GloballyAttracting,
    LocallyExponential,
    LocallySuperExponential,
    Uncertified,
}

/// Aggregated stability analysis of a closed-loop design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub x_star: f64,
    pub q_prime_at_star: f64,
    /// Global contraction constant on the scan interval, when granted.
    pub contraction_q: Option<f64>,
    /// Witness where the global scan failed, when refused.
    pub refusal_witness_x: Option<f64>,
    pub basin_radius: Option<f64>,
    pub alpha: Option<f64>,
    /// Super-exponential invariant radius `min(δ, 1/α)`.
    pub superexp_radius: Option<f64>,
    pub classification: Classification,
}

/// Runs the full certificate pipeline: fixed point, derivative at the
/// fixed point, global contraction scan on `[0, scan_hi]`, basin radius,
/// and (for deadbeat designs) the quadratic envelope.
pub fn certify(
    c: &Controller,
    plant: &PlantParams,
    scan_hi: f64,
    grid_n: usize,
) -> Result<StabilityReport> {
    let roots = find_fixed_points(c, plant, scan_hi)?;
    let x_star = roots[0];
    let qp = q_prime(c, plant, x_star)?;
    let q_prime_at_star = qp.smooth().unwrap_or_else(|| {
        // On a kink, report the worse side.
        if qp.left.abs() >= qp.right.abs() {
            qp.left
        } else {
            qp.right
        }
    });
    let (contraction_q, refusal_witness_x) =
        match contraction_certificate(c, plant, 0.0, scan_hi, grid_n) {
            ContractionOutcome::Certified { q } => (Some(q), None),
            ContractionOutcome::Refused { witness_x, .. } => (None, Some(witness_x)),
        };
    let basin_radius = basin_estimate(c, plant, x_star, x_star);
    let superexp = if qp.worst_abs() <= DEADBEAT_TOL {
        basin_radius.and_then(|d| superexp_alpha(c, plant, x_star, d).ok())
    } else {
        None
    };
    let classification = if contraction_q.is_some() {
        Classification::GloballyAttracting
    } else if superexp.is_some() {
        Classification::LocallySuperExponential
    } else if basin_radius.is_some() && q_prime_at_star.abs() < 1.0 {
        Classification::LocallyExponential
    } else {
        Classification::Uncertified
    };
    Ok(StabilityReport {
        x_star,
        q_prime_at_star,
        contraction_q,
        refusal_witness_x,
        basin_radius,
        alpha: superexp.map(|s| s.alpha),
        superexp_radius: superexp.map(|s| s.r),
        classification,
    })
}
