//! Exact hybrid simulation of the impulsive closed loop, an open-loop
//! programmed-bolus mode, and corridor audits.
//!
//! There is no numerical integrator anywhere: between impulses the state
//! is propagated by the closed-form exponential flow, so every sample is
//! exact to rounding.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::design::Corridor;
use crate::kinetics::{hill_unchecked, HillPD, PlantParams};
use crate::modulation::Controller;
use crate::{Error, Result};

/// Time comparisons tolerance, hours (grid alignment, impulse collisions).
const T_EPS: f64 = 1e-9;

/// How the first feedback impulse after the initial bolus is placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "t0_h")]
pub enum StartMode {
    /// Wait for the post-bolus decay to reach the designed fixed point,
    /// but never longer than the controller itself would wait:
    /// `t_first = min(τ_hit, Φ(x(0+)), Φ2)`, firing immediately when
    /// `x(0+) <= x*`.
    EventTriggered,
    /// Fire the first feedback impulse at t = 0, acting on the
    /// post-bolus state.
    Immediate,
    /// Fire the first feedback impulse at an explicit time.
    Scheduled(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub plant: PlantParams,
    pub controller: Controller,
    /// State just before the initial bolus, mg/L.
    pub initial_x: f64,
    pub initial_dose_mg: f64,
    pub horizon_h: f64,
    pub sample_step_h: f64,
    pub start_mode: StartMode,
}

impl SimConfig {
    pub const DEFAULT_SAMPLE_STEP_H: f64 = 0.005;

    fn validate(&self) -> Result<()> {
        if !(self.horizon_h > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be > 0 h, got {}",
                self.horizon_h
            )));
        }
        if !(self.sample_step_h > 0.0) {
            return Err(Error::Domain(format!(
                "sample step must be > 0 h, got {}",
                self.sample_step_h
            )));
        }
        if self.initial_x < 0.0 || !self.initial_x.is_finite() {
            return Err(Error::Domain(format!(
                "initial state must be >= 0 mg/L, got {}",
                self.initial_x
            )));
        }
        if self.initial_dose_mg < 0.0 || !self.initial_dose_mg.is_finite() {
            return Err(Error::Domain(format!(
                "initial dose must be >= 0 mg, got {}",
                self.initial_dose_mg
            )));
        }
        if let StartMode::Scheduled(t0) = self.start_mode {
            if !(t0 >= 0.0) {
                return Err(Error::Domain(format!("scheduled t0 must be >= 0 h, got {t0}")));
            }
        }
        Ok(())
    }
}

/// One impulse instant: both one-sided states, the administered dose, and
/// the inter-impulse interval decided at this instant (for the last
/// open-loop impulse, the time remaining to the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub n: usize,
    pub t_h: f64,
    pub x_pre: f64,
    pub x_post: f64,
    pub dose_mg: f64,
    pub t_next_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleEvent {
    Sample,
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_h: f64,
    pub x_mg_per_l: f64,
    pub y_score: f64,
    pub event: SampleEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub impulses: Vec<Impulse>,
    pub samples: Vec<Sample>,
}

/// Dense samples on the `j * step` grid plus both one-sided values at
/// every impulse; grid points colliding with an impulse instant are
/// dropped in favor of the pre/post pair.
fn emit_samples(
    plant: &PlantParams,
    pd: &HillPD,
    x0: f64,
    impulses: &[Impulse],
    horizon: f64,
    step: f64,
) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut j: u64 = 0;
    let mut anchor_t = 0.0;
    let mut anchor_x = x0;
    // Before any impulse the anchor instant itself is a plain sample.
    let mut anchor_emitted = false;
    let grid = |out: &mut Vec<Sample>, j: &mut u64, end: f64, at: f64, ax: f64, open: bool| {
        loop {
            let t = *j as f64 * step;
            if t > end - T_EPS || t > horizon + T_EPS {
                break;
            }
            if t > at + T_EPS || (!open && t >= at - T_EPS) {
                let x = ax * (plant.a * (t - at)).exp();
                out.push(Sample {
                    t_h: t,
                    x_mg_per_l: x,
                    y_score: hill_unchecked(x, pd),
                    event: SampleEvent::Sample,
                });
            }
            *j += 1;
        }
    };
    for imp in impulses {
        grid(&mut out, &mut j, imp.t_h, anchor_t, anchor_x, anchor_emitted);
        if imp.t_h <= horizon + T_EPS {
            out.push(Sample {
                t_h: imp.t_h,
                x_mg_per_l: imp.x_pre,
                y_score: hill_unchecked(imp.x_pre, pd),
                event: SampleEvent::Pre,
            });
            out.push(Sample {
                t_h: imp.t_h,
                x_mg_per_l: imp.x_post,
                y_score: hill_unchecked(imp.x_post, pd),
                event: SampleEvent::Post,
            });
        }
        while (j as f64) * step <= imp.t_h + T_EPS {
            j += 1;
        }
        anchor_t = imp.t_h;
        anchor_x = imp.x_post;
        anchor_emitted = true;
    }
    grid(&mut out, &mut j, horizon + 2.0 * T_EPS, anchor_t, anchor_x, anchor_emitted);
    out
}

/// Runs the closed loop exactly, impulse to impulse. The initial bolus
/// (when nonzero) is recorded as impulse n = 0 with `t_next_h` equal to
/// the start-rule waiting time.
pub fn simulate_closed(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let plant = &cfg.plant;
    let c = &cfg.controller;
    let bolus_conc = cfg.initial_dose_mg / plant.vd;
    let x0_post = cfg.initial_x + bolus_conc;

    let t_first = match cfg.start_mode {
        StartMode::Immediate => 0.0,
        StartMode::Scheduled(t0) => t0,
        StartMode::EventTriggered => {
            let search_hi =
                2.0 * c.f_bar.hi / (1.0 - (plant.a * c.phi_bar.lo).exp()) + x0_post;
            let x_star = crate::retmap::find_fixed_points(c, plant, search_hi)?[0];
            let tau_hit = if x0_post > x_star {
                (x0_post / x_star).ln() / (-plant.a)
            } else {
                0.0
            };
            tau_hit.min(c.phi_of_x(x0_post)?).min(c.phi_bar.hi)
        }
    };

    let mut impulses = Vec::new();
    let mut n = 0;
    if cfg.initial_dose_mg > 0.0 {
        impulses.push(Impulse {
            n,
            t_h: 0.0,
            x_pre: cfg.initial_x,
            x_post: x0_post,
            dose_mg: cfg.initial_dose_mg,
            t_next_h: t_first,
        });
        n += 1;
    }
    let mut t = t_first;
    let mut x_pre = x0_post * (plant.a * t_first).exp();
    while t <= cfg.horizon_h + T_EPS {
        let period = c.phi_of_x(x_pre)?;
        let dose_conc = c.f_of_x(x_pre)?;
        let x_post = x_pre + dose_conc;
        impulses.push(Impulse {
            n,
            t_h: t,
            x_pre,
            x_post,
            dose_mg: dose_conc * plant.vd,
            t_next_h: period,
        });
        n += 1;
        x_pre = x_post * (plant.a * period).exp();
        t += period;
    }
    let samples =
        emit_samples(plant, &c.pd, cfg.initial_x, &impulses, cfg.horizon_h, cfg.sample_step_h);
    Ok(SimTrace { impulses, samples })
}

/// Simulates a fixed dosing program `(t_h, dose_mg)`. For the last
/// impulse `t_next_h` is the time remaining to the horizon.
pub fn simulate_openloop(
    plant: &PlantParams,
    pd: &HillPD,
    x0: f64,
    schedule: &[(f64, f64)],
    horizon_h: f64,
    sample_step_h: f64,
) -> Result<SimTrace> {
    if !(horizon_h > 0.0) || !(sample_step_h > 0.0) {
        return Err(Error::Domain(format!(
            "horizon and sample step must be > 0, got {horizon_h} h / {sample_step_h} h"
        )));
    }
    if x0 < 0.0 {
        return Err(Error::Domain(format!("x0 must be >= 0 mg/L, got {x0}")));
    }
    let mut impulses = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut x = x0;
    let mut prev_t = 0.0;
    for (n, &(t, dose)) in schedule.iter().enumerate() {
        if t < 0.0 || t <= last_t {
            return Err(Error::Domain(format!(
                "schedule times must be >= 0 and strictly increasing; offending entry ({t} h, {dose} mg)"
            )));
        }
        if dose < 0.0 {
            return Err(Error::Domain(format!("doses must be >= 0 mg, got {dose}")));
        }
        last_t = t;
        if t > horizon_h + T_EPS {
            break;
        }
        let x_pre = x * (plant.a * (t - prev_t)).exp();
        let x_post = x_pre + dose / plant.vd;
        impulses.push(Impulse { n, t_h: t, x_pre, x_post, dose_mg: dose, t_next_h: 0.0 });
        x = x_post;
        prev_t = t;
    }
    // Fill in the inter-impulse intervals.
    let times: Vec<f64> = impulses.iter().map(|i| i.t_h).collect();
    for (i, imp) in impulses.iter_mut().enumerate() {
        imp.t_next_h = if i + 1 < times.len() {
            times[i + 1] - imp.t_h
        } else {
            horizon_h - imp.t_h
        };
    }
    let samples = emit_samples(plant, pd, x0, &impulses, horizon_h, sample_step_h);
    Ok(SimTrace { impulses, samples })
}

/// Corridor compliance summary of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorAudit {
    /// First sampled instant with x inside the corridor.
    pub first_entry_time: Option<f64>,
    /// Number of excursions (maximal runs of out-of-corridor samples)
    /// after first entry.
    pub violations_after_entry: usize,
    /// Fraction of grid samples outside the corridor after first entry.
    pub fraction_outside: f64,
    /// (inf, sup) of x over the last three inter-impulse intervals;
    /// absent when the trace is too short.
    pub steady_span: Option<(f64, f64)>,
    /// True when fewer than three complete intervals were available.
    pub partial: bool,
}

pub fn audit_corridor(trace: &SimTrace, corridor: &Corridor) -> Result<CorridorAudit> {
    if trace.samples.is_empty() {
        return Err(Error::Domain("cannot audit an empty trace".into()));
    }
    let inside = |x: f64| x >= corridor.x_min - T_EPS && x <= corridor.x_max + T_EPS;
    let mut first_entry_time = None;
    let mut violations = 0usize;
    let mut was_outside = false;
    let mut grid_total = 0usize;
    let mut grid_outside = 0usize;
    for s in &trace.samples {
        let is_in = inside(s.x_mg_per_l);
        if first_entry_time.is_none() {
            if is_in {
                first_entry_time = Some(s.t_h);
                was_outside = false;
            }
            continue;
        }
        if !is_in && !was_outside {
            violations += 1;
        }
        was_outside = !is_in;
        if s.event == SampleEvent::Sample {
            grid_total += 1;
            if !is_in {
                grid_outside += 1;
            }
        }
    }
    let fraction_outside = if grid_total > 0 {
        grid_outside as f64 / grid_total as f64
    } else {
        0.0
    };
    let (steady_span, partial) = if trace.impulses.len() >= 4 {
        let t_end = trace.impulses[trace.impulses.len() - 1].t_h;
        let t_start = trace.impulses[trace.impulses.len() - 4].t_h;
        let mut inf = f64::INFINITY;
        let mut sup = f64::NEG_INFINITY;
        for s in &trace.samples {
            if s.t_h >= t_start - T_EPS && s.t_h <= t_end + T_EPS {
                inf = inf.min(s.x_mg_per_l);
                sup = sup.max(s.x_mg_per_l);
            }
        }
        (Some((inf, sup)), false)
    } else {
        (None, true)
    };
    Ok(CorridorAudit {
        first_entry_time,
        violations_after_entry: violations,
        fraction_outside,
        steady_span,
        partial,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

/// Writes the dense trace as CSV: `t_h,x_mg_per_l,y_score,event`.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, w: &mut W) -> io::Result<()> {
    writeln!(w, "t_h,x_mg_per_l,y_score,event")?;
    for s in &trace.samples {
        let event = match s.event {
            SampleEvent::Sample => "sample",
            SampleEvent::Pre => "pre",
            SampleEvent::Post => "post",
        };
        writeln!(w, "{},{},{},{event}", fmt(s.t_h), fmt(s.x_mg_per_l), fmt(s.y_score))?;
    }
    Ok(())
}

/// Writes the impulse log as CSV: `n,t_h,x_pre,x_post,dose_mg,T_next_h`.
pub fn write_impulses_csv<W: Write>(trace: &SimTrace, w: &mut W) -> io::Result<()> {
    writeln!(w, "n,t_h,x_pre,x_post,dose_mg,T_next_h")?;
    for i in &trace.impulses {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            i.n,
            fmt(i.t_h),
            fmt(i.x_pre),
            fmt(i.x_post),
            fmt(i.dose_mg),
            fmt(i.t_next_h)
        )?;
    }
    Ok(())
}
