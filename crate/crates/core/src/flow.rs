//! Event-driven integration of the piecewise system.
//!
//! Each smooth zone is integrated with an adaptive Dormand–Prince pair until
//! the trajectory reaches `x = 0`; the crossing is located on the dense output
//! and polished on the actual step to `|x| < x_tol`. The bracket integral
//! `∫{H0, H1} dt` rides along as a third state component.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PerturbationKind, PhaseState, TwoZoneSystem, Zone};
use crate::numeric;
use crate::ode::{self, Tolerance};

/// Integrator and event-location settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Crossings are polished until `|x|` falls below this.
    pub x_tol: f64,
    /// A crossing with `|y|` at or below this is reported as grazing.
    pub graze_tol: f64,
    /// Longest time a single zone transit may take.
    pub max_transit_time: f64,
    /// Transit aborts when it comes this close to the unperturbed saddle; `0` disables.
    pub stall_radius: f64,
    /// Transit aborts when `|x|` exceeds this.
    pub escape_radius: f64,
    pub max_steps: usize,
    pub initial_step: f64,
    /// Total time budget for an impact sequence; exceeding it truncates the sequence.
    pub max_time: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            x_tol: 1e-12,
            graze_tol: 1e-8,
            max_transit_time: 50.0,
            stall_radius: 1e-4,
            escape_radius: 1e3,
            max_steps: 1_000_000,
            initial_step: 1e-2,
            max_time: None,
        }
    }
}

impl FlowOptions {
    /// Tighter tolerances used by the Melnikov and orbit solvers.
    pub fn precise() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-12, ..Self::default() }
    }

    pub fn with_tolerance(self, tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: tol, ..self }
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance { abs: self.abs_tol, rel: self.rel_tol }
    }
}

/// Time direction of an integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Outcome of integrating inside one zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Transit {
    /// Final state: on `x = 0` when `crossed`, otherwise at the stop time.
    pub end: PhaseState,
    pub crossed: bool,
    /// `|t_end - t_start|`.
    pub duration: f64,
    /// `∫ {H0, H1} dt` from the start time to the end time (oriented).
    pub integral: f64,
    /// Accepted step end points, when recording was requested.
    pub samples: Vec<PhaseState>,
}

/// Integrate inside `zone` from `start` until the trajectory returns to `x = 0`
/// or, if given, until `t_stop` is reached.
pub fn transit(
    sys: &TwoZoneSystem,
    start: PhaseState,
    zone: Zone,
    direction: Direction,
    t_stop: Option<f64>,
    opts: &FlowOptions,
    record: bool,
) -> Result<Transit> {
    transit_observed(sys, start, zone, direction, t_stop, opts, record, &mut |_| {})
}

/// As [`transit`], handing every accepted step (the final one shortened to the
/// crossing) to `observer`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn transit_observed(
    sys: &TwoZoneSystem,
    start: PhaseState,
    zone: Zone,
    direction: Direction,
    t_stop: Option<f64>,
    opts: &FlowOptions,
    record: bool,
    observer: &mut dyn FnMut(&ode::Step<3>),
) -> Result<Transit> {
    let side = zone.sign();
    let dir = direction.sign();
    let no_crossing = |t: f64, reason: String| Error::NoCrossing { t, index: 0, reason };
    if !start.is_finite() {
        return Err(Error::Domain("non-finite start state".into()));
    }
    let g0 = side * start.x;
    if g0 < -opts.x_tol {
        return Err(Error::Domain(format!("start x = {} lies outside zone {zone}", start.x)));
    }
    let on_line = g0 <= opts.x_tol;
    if on_line {
        let (dx, _) = sys.zone_field(zone, 0.0, start.y, start.t);
        if side * dx * dir <= 0.0 {
            return Err(Error::Domain(format!(
                "start (0, {}) does not move into zone {zone}",
                start.y
            )));
        }
    }
    if let Some(ts) = t_stop {
        if (ts - start.t) * dir < 0.0 {
            return Err(Error::Domain("stop time lies behind the start time".into()));
        }
    }

    let rhs = |t: f64, s: &[f64; 3]| {
        let (dx, dy) = sys.zone_field(zone, s[0], s[1], t);
        [dx, dy, sys.zone_bracket(zone, s[0], s[1], t)]
    };
    let tol = opts.tolerance();
    let saddle = sys.saddle(zone);

    let mut t = start.t;
    let mut s = [if on_line { 0.0 } else { start.x }, start.y, 0.0];
    let mut k1 = rhs(t, &s);
    let mut h = dir * opts.initial_step;
    let mut samples = Vec::new();
    if record {
        samples.push(PhaseState::new(s[0], s[1], t));
    }
    let mut fresh = on_line;

    for _ in 0..opts.max_steps {
        let mut landing = false;
        if let Some(ts) = t_stop {
            let left = ts - t;
            if left * dir <= 0.0 {
                return Ok(Transit {
                    end: PhaseState::new(s[0], s[1], t),
                    crossed: false,
                    duration: (t - start.t).abs(),
                    integral: s[2],
                    samples,
                });
            }
            if h.abs() >= left.abs() {
                h = left;
                landing = true;
            }
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(no_crossing(t, "step size underflow".into()));
        }
        let st = ode::step(&rhs, t, &s, &k1, h, tol);
        if !(st.error <= 1.0) {
            h *= if st.error.is_finite() { st.factor() } else { 0.1 };
            continue;
        }

        // Scan the dense output for the first sign change of side·x.
        const PROBES: usize = 8;
        let mut prev = (0.0, if fresh { f64::INFINITY } else { side * s[0] });
        let mut bracket = None;
        for j in 1..=PROBES {
            let th = j as f64 / PROBES as f64;
            let g = side * st.interpolate(th)[0];
            if g <= 0.0 {
                bracket = Some((prev.0, th));
                break;
            }
            prev = (th, g);
        }
        if let Some((lo, hi)) = bracket {
            if fresh && lo == 0.0 {
                // Left and re-entered the line inside one probe interval.
                h /= 4.0;
                continue;
            }
            let theta = numeric::brent(|th| Ok(side * st.interpolate(th)[0]), lo, hi, 1e-14)?;
            let last = polish_crossing(&rhs, t, &s, &k1, theta * h, tol, opts.x_tol);
            let end_t = t + last.h;
            let y_end = last.y1[1];
            let integral = last.y1[2];
            if y_end.abs() <= opts.graze_tol {
                return Err(Error::GrazingImpact { t: end_t, y: y_end, index: 0 });
            }
            observer(&last);
            if record {
                samples.push(PhaseState::new(0.0, y_end, end_t));
            }
            return Ok(Transit {
                end: PhaseState::new(0.0, y_end, end_t),
                crossed: true,
                duration: (end_t - start.t).abs(),
                integral,
                samples,
            });
        }

        observer(&st);
        t = if landing { t_stop.unwrap_or(t + h) } else { t + h };
        s = st.y1;
        k1 = st.k7;
        fresh = false;
        if record {
            samples.push(PhaseState::new(s[0], s[1], t));
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(no_crossing(t, "state became non-finite".into()));
        }
        if t_stop.is_none() && (t - start.t).abs() > opts.max_transit_time {
            return Err(no_crossing(t, format!("transit exceeded {} time units", opts.max_transit_time)));
        }
        if opts.stall_radius > 0.0 && (s[0] - saddle.x).hypot(s[1]) < opts.stall_radius {
            return Err(no_crossing(t, format!("trajectory stalled at the saddle of zone {zone}")));
        }
        if s[0].abs() > opts.escape_radius {
            return Err(no_crossing(t, "trajectory escaped".into()));
        }
        h *= st.factor();
    }
    Err(no_crossing(t, format!("exceeded {} steps", opts.max_steps)))
}

/// Newton iteration on the step length so the step ends on `x = 0`.
fn polish_crossing(
    rhs: &ode::Rhs<'_, 3>,
    t: f64,
    s: &[f64; 3],
    k1: &[f64; 3],
    tau0: f64,
    tol: Tolerance,
    x_tol: f64,
) -> ode::Step<3> {
    let mut tau = tau0;
    let mut best = ode::step(rhs, t, s, k1, tau, tol);
    for _ in 0..20 {
        if best.y1[0].abs() < x_tol {
            break;
        }
        let slope = rhs(t + tau, &best.y1)[0];
        if slope == 0.0 {
            break;
        }
        tau -= best.y1[0] / slope;
        best = ode::step(rhs, t, s, k1, tau, tol);
    }
    best
}

/// Integrate from `start` inside `zone` to the next crossing of `x = 0`.
/// Returns the crossing state and the transit time.
pub fn integrate_zone(
    sys: &TwoZoneSystem,
    start: PhaseState,
    zone: Zone,
    opts: &FlowOptions,
) -> Result<(PhaseState, f64)> {
    let tr = transit(sys, start, zone, Direction::Forward, None, opts, false)?;
    Ok((tr.end, tr.duration))
}

/// Flow of the linear block inside `zone`, in closed form, for `H1 = x cos(ωt)`.
///
/// `x = a e^s + b e^{-s} ± 1 + k cos(ωt)`, `y = a e^s - b e^{-s} - kω sin(ωt)` with
/// `s = t - t0` and `k = ε / (1 + ω²)`.
pub fn closed_form_flow_linear(sys: &TwoZoneSystem, start: PhaseState, zone: Zone, t: f64) -> Result<PhaseState> {
    if !sys.is_linear_block() {
        return Err(Error::Unsupported("closed-form flow exists only for the linear block".into()));
    }
    let forced = sys.epsilon() != 0.0;
    if forced && sys.perturbation().kind != PerturbationKind::CosForcing {
        return Err(Error::Unsupported("closed-form forced flow needs the x cos(ωt) perturbation".into()));
    }
    let w = sys.omega();
    let k = if forced { sys.epsilon() / (1.0 + w * w) } else { 0.0 };
    let forcing = |t: f64| (k * (w * t).cos(), -k * w * (w * t).sin());
    let (fx0, fy0) = forcing(start.t);
    let (a, b) = linear_constants(start.x - fx0, start.y - fy0, zone);
    let s = t - start.t;
    let (ep, em) = (s.exp(), (-s).exp());
    let (fx, fy) = forcing(t);
    Ok(PhaseState::new(a * ep + b * em + zone.sign() + fx, a * ep - b * em + fy, t))
}

/// Coefficients `(a, b)` of the linear-block solution through `(x0, y0)` at `s = 0`.
pub fn linear_constants(x0: f64, y0: f64, zone: Zone) -> (f64, f64) {
    let c = zone.sign();
    (0.5 * (x0 + y0 - c), 0.5 * (x0 - y0 - c))
}

/// Instantaneous velocity reset `y ← r y` at an impact.
pub fn apply_restitution(r: f64, state: PhaseState) -> PhaseState {
    PhaseState { y: r * state.y, ..state }
}

/// One crossing of `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactRecord {
    pub index: usize,
    /// Velocity after restitution.
    pub y: f64,
    pub t: f64,
    /// Velocity before restitution (equal to `y` for the initial record).
    pub y_pre: f64,
    /// `∫ {H0, H1} dt` over the segment that ends at this impact.
    pub segment_integral: f64,
}

/// Ordered impacts `(y^i, t^i)`, starting with the initial point as record 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSequence {
    pub records: Vec<ImpactRecord>,
    /// Set when the time budget ran out before the requested count.
    pub truncated: bool,
}

impl ImpactSequence {
    pub fn last(&self) -> &ImpactRecord {
        self.records.last().expect("sequence holds the initial record")
    }

    /// Number of impacts after the initial point.
    pub fn impacts(&self) -> usize {
        self.records.len() - 1
    }

    pub fn total_integral(&self) -> f64 {
        self.records.iter().map(|r| r.segment_integral).sum()
    }
}

fn with_index(err: Error, index: usize) -> Error {
    match err {
        Error::GrazingImpact { t, y, .. } => Error::GrazingImpact { t, y, index },
        Error::NoCrossing { t, reason, .. } => Error::NoCrossing { t, index, reason },
        other => other,
    }
}

/// Follow `count` crossings of `x = 0` from `(0, y0, t0)`, applying restitution at each.
pub fn impact_sequence(
    sys: &TwoZoneSystem,
    y0: f64,
    t0: f64,
    count: usize,
    opts: &FlowOptions,
) -> Result<ImpactSequence> {
    let zone = Zone::of(0.0, y0)?;
    let mut records = vec![ImpactRecord { index: 0, y: y0, t: t0, y_pre: y0, segment_integral: 0.0 }];
    let mut state = PhaseState::on_switching_line(y0, t0);
    let mut zone = zone;
    let r = sys.restitution();
    for i in 1..=count {
        if let Some(limit) = opts.max_time {
            if state.t - t0 > limit {
                return Ok(ImpactSequence { records, truncated: true });
            }
        }
        let tr = transit(sys, state, zone, Direction::Forward, None, opts, false).map_err(|e| with_index(e, i - 1))?;
        let after = apply_restitution(r, tr.end);
        records.push(ImpactRecord {
            index: i,
            y: after.y,
            t: after.t,
            y_pre: tr.end.y,
            segment_integral: tr.integral,
        });
        zone = zone.opposite();
        state = after;
    }
    Ok(ImpactSequence { records, truncated: false })
}

/// A sampled trajectory row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub state: PhaseState,
    pub zone: Zone,
    pub impact: bool,
}

/// The concatenated flow: samples of every zone segment plus the impacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub impacts: ImpactSequence,
}

impl Trajectory {
    /// CSV with columns `t,x,y,zone,impact_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,zone,impact_flag\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                numeric::format_float(s.state.t),
                numeric::format_float(s.state.x),
                numeric::format_float(s.state.y),
                s.zone,
                u8::from(s.impact)
            );
        }
        out
    }
}

/// Integrate the impacting system from an arbitrary start until `t_end`.
pub fn simulate(sys: &TwoZoneSystem, start: PhaseState, t_end: f64, opts: &FlowOptions) -> Result<Trajectory> {
    if t_end < start.t {
        return Err(Error::Domain("end time precedes the start time".into()));
    }
    let mut zone = Zone::of(start.x, start.y)?;
    let opts = FlowOptions { stall_radius: 0.0, max_transit_time: f64::INFINITY, ..*opts };
    let r = sys.restitution();
    let mut state = start;
    let mut samples = vec![TrajectorySample { state, zone, impact: start.x == 0.0 }];
    let mut records = vec![ImpactRecord { index: 0, y: start.y, t: start.t, y_pre: start.y, segment_integral: 0.0 }];
    loop {
        let tr = transit(sys, state, zone, Direction::Forward, Some(t_end), &opts, true)
            .map_err(|e| with_index(e, records.len() - 1))?;
        let body = &tr.samples[1..];
        let keep = if tr.crossed { body.len().saturating_sub(1) } else { body.len() };
        samples.extend(body[..keep].iter().map(|&st| TrajectorySample { state: st, zone, impact: false }));
        if !tr.crossed {
            break;
        }
        let after = apply_restitution(r, tr.end);
        zone = zone.opposite();
        records.push(ImpactRecord {
            index: records.len(),
            y: after.y,
            t: after.t,
            y_pre: tr.end.y,
            segment_integral: tr.integral,
        });
        samples.push(TrajectorySample { state: after, zone, impact: true });
        state = after;
        if state.t >= t_end {
            break;
        }
    }
    Ok(Trajectory { samples, impacts: ImpactSequence { records, truncated: true } })
}
