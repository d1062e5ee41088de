//! Pulse-modulated corridor control for scalar first-order kinetics.
//!
//! The plant is `x'(t) = a x(t)` with `a < 0`, driven by an impulsive
//! feedback that fires doses at discrete instants. Both the impulse weight
//! and the next inter-impulse interval are modulated by the pre-impulse
//! state through saturated affine functions of the measured effect (a Hill
//! map of concentration). The crate covers the full design pipeline:
//!
//! - [`design`]: corridor-spanning 1-cycle parameters and coefficient
//!   synthesis for a prescribed return-map slope (including deadbeat).
//! - [`retmap`]: the return map `Q(x) = e^{a Φ(x)} (x + F(x))`, fixed-point
//!   solving and contraction / basin / super-exponential certificates.
//! - [`bounds`]: coarse ultimate bounds and the tightened monotone
//!   `Ψ∘Ψ` bracketing iteration for negative-feedback controllers.
//! - [`sim`]: exact event-to-event hybrid simulation (no ODE solver; the
//!   flow is closed form) plus open-loop schedules and corridor audits.
//!
//! The numeric running example throughout the tests is intravenous
//! paracetamol dosing (elimination rate 0.28 1/h, Hill PD with
//! E0 = 10, Emax = 5.17, EC50 = 9.98 mg/L, corridor 10..20 mg/L).

pub mod bounds;
pub mod config;
pub mod design;
pub mod kinetics;
pub mod modulation;
pub mod retmap;
pub mod sim;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A controller synthesis request cannot be satisfied.
    #[error("design error: {0}")]
    Design(String),
    /// Operation requires a negative-feedback controller.
    #[error("negative-feedback prerequisite failed: {0}")]
    MixedFeedback(String),
    /// A structural assumption of the theory was violated at runtime.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
