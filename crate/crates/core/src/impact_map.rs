//! Impact maps on the switching line and the unperturbed period functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, FlowOptions};
use crate::model::{PhaseState, TwoZoneSystem, Zone};
use crate::numeric;

/// Fraction of the separatrix velocity bounding the compact working set.
pub const COMPACT_FRACTION: f64 = 0.995;

/// A point `(y, t)` of the switching line with `0 < |y| < √(2 c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub y: f64,
    pub t: f64,
    pub side: Zone,
}

impl SectionPoint {
    pub fn new(sys: &TwoZoneSystem, y: f64, t: f64) -> Result<Self> {
        let side = Zone::of(0.0, y)?;
        check_velocity(sys, y)?;
        if !t.is_finite() {
            return Err(Error::Domain("section time must be finite".into()));
        }
        Ok(Self { y, t, side })
    }

    pub fn state(&self) -> PhaseState {
        PhaseState::on_switching_line(self.y, self.t)
    }
}

fn check_velocity(sys: &TwoZoneSystem, y: f64) -> Result<()> {
    let limit = sys.separatrix_velocity();
    if !(y.is_finite() && y != 0.0 && y.abs() < limit) {
        return Err(Error::Domain(format!("|y| = {} must lie in (0, {limit})", y.abs())));
    }
    Ok(())
}

/// Largest velocity of the compact set `Σ̃_c̃`.
pub fn compact_limit(sys: &TwoZoneSystem) -> f64 {
    COMPACT_FRACTION * sys.separatrix_velocity()
}

/// Solve `W(u) = target` on `[0, u_max]` for increasing `W` by safeguarded Newton.
fn invert_monotone(w: impl Fn(f64) -> (f64, f64), target: f64, u_max: f64, guess: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, u_max);
    let mut u = guess.clamp(0.0, u_max);
    for _ in 0..100 {
        let (value, slope) = w(u);
        let f = value - target;
        if f == 0.0 {
            return u;
        }
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = if slope > 0.0 { u - f / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * u.max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        u = next;
    }
    u
}

/// Time the unperturbed orbit starting at `(0, y)` spends in `side` before
/// returning to `x = 0`. `y` must point into the zone (`y > 0` for plus).
///
/// Uses `W(u) = h sin²θ` with `W(u) = V(±u)` so the turning-point singularity
/// disappears: `2 ∫_0^{π/2} √(2h) sinθ / W'(u(θ)) dθ`.
pub fn alpha_half(sys: &TwoZoneSystem, side: Zone, y: f64) -> Result<f64> {
    check_velocity(sys, y)?;
    if Zone::of(0.0, y)? != side {
        return Err(Error::Domain(format!("velocity {y} does not enter zone {side}")));
    }
    let sign = side.sign();
    let potential = sys.potential(side);
    let h = 0.5 * y * y;
    let u_max = sys.saddle(side).x.abs();
    let w = |u: f64| (potential.value(sign * u), sign * potential.derivative(sign * u));
    let slope0 = w(0.0).1;
    let root2h = (2.0 * h).sqrt();
    let integrand = |theta: f64| {
        let s = theta.sin();
        let target = h * s * s;
        let u = invert_monotone(w, target, u_max, target / slope0);
        root2h * s / w(u).1
    };
    let half = numeric::integrate(integrand, 0.0, std::f64::consts::FRAC_PI_2, 1e-13, 1e-13)?;
    Ok(2.0 * half)
}

/// Period of the unperturbed orbit through `(0, y)`, `y > 0`.
pub fn alpha(sys: &TwoZoneSystem, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Err(Error::Domain(format!("alpha needs y > 0, got {y}")));
    }
    Ok(alpha_half(sys, Zone::Plus, y)? + alpha_half(sys, Zone::Minus, -y)?)
}

/// The velocity `y` in the compact set with `alpha(y) = period`, by bisection to machine precision.
pub fn alpha_inverse(sys: &TwoZoneSystem, period: f64) -> Result<f64> {
    let hi = compact_limit(sys);
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::Domain(format!("target period {period} must be positive")));
    }
    let top = alpha(sys, hi)?;
    if period >= top {
        return Err(Error::Domain(format!(
            "target period {period} exceeds alpha({hi}) = {top} on the compact set"
        )));
    }
    let mut failure = None;
    let y = numeric::bisect(
        |y| match alpha(sys, y) {
            Ok(a) => Ok(a < period),
            Err(e) => {
                failure = Some(e);
                Ok(false)
            }
        },
        0.0,
        hi,
        0.0,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(y),
    }
}

/// One half map `P^±`: flow from the section point to the next crossing, without restitution.
pub fn half_map(sys: &TwoZoneSystem, point: SectionPoint, opts: &FlowOptions) -> Result<SectionPoint> {
    let (end, _) = flow::integrate_zone(sys, point.state(), point.side, opts)?;
    Ok(SectionPoint { y: end.y, t: end.t, side: point.side.opposite() })
}

/// `m` iterates of `R_r ∘ P⁻ ∘ R_r ∘ P⁺` starting on the positive half of the line.
pub fn impact_map_p(sys: &TwoZoneSystem, point: SectionPoint, m: usize, opts: &FlowOptions) -> Result<SectionPoint> {
    if point.side != Zone::Plus {
        return Err(Error::Domain("the impact map starts from y > 0".into()));
    }
    let seq = flow::impact_sequence(sys, point.y, point.t, 2 * m, opts)?;
    let last = seq.last();
    Ok(SectionPoint { y: last.y, t: last.t, side: Zone::Plus })
}

/// `m` iterates of the unperturbed map with restitution, from the period functions:
/// `(y, t) ↦ (r² y, t + α⁺(y) + α⁻(-r y))`.
pub fn unperturbed_map(sys: &TwoZoneSystem, point: SectionPoint, m: usize) -> Result<SectionPoint> {
    let r = sys.restitution();
    let (mut y, mut t) = (point.y, point.t);
    for _ in 0..m {
        t += alpha_half(sys, Zone::Plus, y)?;
        t += alpha_half(sys, Zone::Minus, -r * y)?;
        y *= r * r;
    }
    Ok(SectionPoint { y, t, side: Zone::Plus })
}
