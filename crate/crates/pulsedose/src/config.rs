//! JSON run configuration for the command-line front end.
//!
//! Field names carry explicit unit suffixes so a config file can never be
//! ambiguous about hours vs. days or mg vs. mg/L. Every field has a
//! default taken from the paracetamol example, so `{}` is a valid config.

use serde::{Deserialize, Serialize};

use crate::design::{
    paper_table_controller, solve_corridor, synthesize_coeffs, synthesized_case_controller,
    Clamps, CoeffMode, Corridor, PaperCase,
};
use crate::kinetics::{HillPD, PlantParams};
use crate::modulation::Controller;
use crate::sim::StartMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Solve the deadbeat equations for `phi_slope_target_h_per_score`.
    Synthesized,
    PaperCase1,
    PaperCase2,
    PaperCase3,
    /// Open-loop programmed intermittent boluses from `schedule_mg`.
    OpenLoopPib,
    /// Explicit coefficients `k1_h`, `k2_h_per_score`, `k3_mg_per_l`,
    /// `k4_mg_per_l_per_score`; no design equations are solved.
    Custom,
}

impl Mode {
    pub fn paper_case(self) -> Option<PaperCase> {
        match self {
            Mode::PaperCase1 => Some(PaperCase::One),
            Mode::PaperCase2 => Some(PaperCase::Two),
            Mode::PaperCase3 => Some(PaperCase::Three),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub elimination_rate_per_h: f64,
    pub volume_of_distribution_l: f64,
    pub e0_score: f64,
    pub emax_score: f64,
    pub ec50_mg_per_l: f64,
    pub corridor_min_mg_per_l: f64,
    pub corridor_max_mg_per_l: f64,
    pub phi_lo_h: f64,
    pub phi_hi_h: f64,
    pub f_lo_mg: f64,
    pub f_hi_mg: f64,
    pub mode: Mode,
    /// `Φ'(x*)` target for `synthesized` mode; when absent, the pure
    /// frequency-modulation value `-1/(a (x* + λ))` is used.
    pub phi_slope_target_h_per_score: Option<f64>,
    /// Whether synthesized coefficients should re-derive a paper case's
    /// slope target instead of `phi_slope_target_h_per_score`.
    pub synthesized_case: Option<u8>,
    /// Explicit coefficients for `custom` mode.
    pub k1_h: Option<f64>,
    pub k2_h_per_score: Option<f64>,
    pub k3_mg_per_l: Option<f64>,
    pub k4_mg_per_l_per_score: Option<f64>,
    pub initial_x_mg_per_l: f64,
    pub initial_dose_mg: f64,
    pub horizon_h: f64,
    pub sample_step_h: f64,
    pub start_mode: StartMode,
    /// `(t_h, dose_mg)` pairs for open-loop mode; defaults to the
    /// 2000 mg + 5 x 1000 mg / 6 h program.
    pub schedule_mg: Option<Vec<(f64, f64)>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            elimination_rate_per_h: -0.28,
            volume_of_distribution_l: 42.0,
            e0_score: 10.0,
            emax_score: 5.17,
            ec50_mg_per_l: 9.98,
            corridor_min_mg_per_l: 10.0,
            corridor_max_mg_per_l: 20.0,
            phi_lo_h: 1.0,
            phi_hi_h: 8.0,
            f_lo_mg: 200.0,
            f_hi_mg: 2000.0,
            mode: Mode::PaperCase2,
            phi_slope_target_h_per_score: None,
            synthesized_case: None,
            k1_h: None,
            k2_h_per_score: None,
            k3_mg_per_l: None,
            k4_mg_per_l_per_score: None,
            initial_x_mg_per_l: 0.0,
            initial_dose_mg: 2000.0,
            horizon_h: 48.0,
            sample_step_h: 0.005,
            start_mode: StartMode::EventTriggered,
            schedule_mg: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::Domain(format!("config parse error: {e}")))
    }

    pub fn plant(&self) -> Result<PlantParams> {
        PlantParams::new(self.elimination_rate_per_h, self.volume_of_distribution_l)
    }

    pub fn pd(&self) -> Result<HillPD> {
        HillPD::new(self.e0_score, self.emax_score, self.ec50_mg_per_l)
    }

    pub fn corridor(&self) -> Result<Corridor> {
        Corridor::new(self.corridor_min_mg_per_l, self.corridor_max_mg_per_l)
    }

    pub fn clamps(&self) -> Result<Clamps> {
        Clamps::new(self.phi_lo_h, self.phi_hi_h, self.f_lo_mg, self.f_hi_mg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant()?;
        self.pd()?;
        self.corridor()?;
        self.clamps()?;
        if !(self.horizon_h > 0.0) {
            return Err(Error::Domain(format!(
                "horizon_h must be > 0, got {}",
                self.horizon_h
            )));
        }
        if !(self.sample_step_h > 0.0) {
            return Err(Error::Domain(format!(
                "sample_step_h must be > 0, got {}",
                self.sample_step_h
            )));
        }
        if self.mode == Mode::Synthesized {
            if let Some(case) = self.synthesized_case {
                if !(1..=3).contains(&case) {
                    return Err(Error::Domain(format!(
                        "synthesized_case must be 1, 2, or 3, got {case}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn coeff_mode(&self) -> CoeffMode {
        match self.mode {
            Mode::Synthesized => CoeffMode::Synthesized,
            Mode::Custom => CoeffMode::Custom,
            _ => CoeffMode::PaperTable,
        }
    }

    /// Builds the feedback controller; `None` in open-loop mode.
    pub fn controller(&self) -> Result<Option<Controller>> {
        self.validate()?;
        let plant = self.plant()?;
        let pd = self.pd()?;
        let corridor = self.corridor()?;
        let clamps = self.clamps()?;
        let c = match self.mode {
            Mode::OpenLoopPib => return Ok(None),
            Mode::Custom => {
                let (k1, k2, k3, k4) = match (
                    self.k1_h,
                    self.k2_h_per_score,
                    self.k3_mg_per_l,
                    self.k4_mg_per_l_per_score,
                ) {
                    (Some(k1), Some(k2), Some(k3), Some(k4)) => (k1, k2, k3, k4),
                    _ => {
                        return Err(Error::Domain(
                            "custom mode needs k1_h, k2_h_per_score, k3_mg_per_l, and \
                             k4_mg_per_l_per_score"
                                .into(),
                        ))
                    }
                };
                let (f_lo, f_hi) = clamps.f_bounds_conc(&plant);
                Controller::new(
                    crate::modulation::SatAffineFn::new(k2, k1, clamps.phi_lo_h, clamps.phi_hi_h)?,
                    crate::modulation::SatAffineFn::new(k4, k3, f_lo, f_hi)?,
                    pd,
                )
            }
            Mode::PaperCase1 | Mode::PaperCase2 | Mode::PaperCase3 => paper_table_controller(
                self.mode.paper_case().expect("paper mode"),
                &corridor,
                &plant,
                &pd,
                &clamps,
            )?,
            Mode::Synthesized => match (self.synthesized_case, self.phi_slope_target_h_per_score)
            {
                (Some(case), _) => {
                    let case = match case {
                        1 => PaperCase::One,
                        2 => PaperCase::Two,
                        _ => PaperCase::Three,
                    };
                    synthesized_case_controller(case, &corridor, &plant, &pd, &clamps)?
                }
                (None, target) => {
                    let cycle = solve_corridor(&corridor, &plant)?;
                    let target = target
                        .unwrap_or_else(|| crate::design::phi_star_slope(&cycle, &plant));
                    synthesize_coeffs(&cycle, &plant, &pd, target, &clamps)?
                }
            },
        };
        Ok(Some(c))
    }

    /// Effective open-loop schedule (explicit or the published program).
    pub fn schedule(&self) -> Vec<(f64, f64)> {
        self.schedule_mg.clone().unwrap_or_else(default_pib_schedule)
    }
}

/// The published programmed-intermittent-bolus comparison scenario:
/// 2000 mg at t = 0, then 1000 mg every 6 h (5 maintenance doses).
pub fn default_pib_schedule() -> Vec<(f64, f64)> {
    let mut s = vec![(0.0, 2000.0)];
    for k in 1..=5 {
        s.push((6.0 * k as f64, 1000.0));
    }
    s
}
