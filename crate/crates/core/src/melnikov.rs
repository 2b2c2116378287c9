//! Subharmonic and heteroclinic Melnikov functions and their zeros.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, Direction, FlowOptions};
use crate::impact_map;
use crate::model::{PhaseState, TwoZoneSystem, Zone};
use crate::numeric;
use crate::ode::Step;

/// Profiles whose samples all stay below this are reported as identically zero.
pub const IDENTICALLY_ZERO_TOL: f64 = 1e-9;
/// Zeros with a smaller slope magnitude are not flagged simple.
pub const SIMPLE_SLOPE_TOL: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 256;

/// `samples` equally spaced times covering `[0, period)`.
pub fn uniform_grid(period: f64, samples: usize) -> Vec<f64> {
    (0..samples).map(|i| period * i as f64 / samples as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Subharmonic { n: u32, m: u32, y0: f64 },
    Heteroclinic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelnikovZero {
    pub t0: f64,
    pub slope: f64,
    pub simple: bool,
}

/// Sampled `t0 ↦ M(t0)` over one forcing period with its located zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelnikovProfile {
    pub kind: ProfileKind,
    pub samples: Vec<(f64, f64)>,
    pub zeros: Vec<MelnikovZero>,
    pub period: f64,
    pub identically_zero: bool,
}

impl MelnikovProfile {
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, &(_, v)| acc.max(v.abs()))
    }

    pub fn simple_zeros(&self) -> impl Iterator<Item = &MelnikovZero> {
        self.zeros.iter().filter(|z| z.simple)
    }
}

/// Mean of a profile over its period, by the periodic trapezoid rule.
pub fn mean_m(profile: &MelnikovProfile) -> f64 {
    let mut pts = profile.samples.clone();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let period = profile.period;
    let mut total = 0.0;
    for i in 0..pts.len() {
        let (ta, va) = pts[i];
        let (tb, vb) = if i + 1 < pts.len() { pts[i + 1] } else { (pts[0].0 + period, pts[0].1) };
        total += 0.5 * (va + vb) * (tb - ta);
    }
    total / period
}

/// Energy-increment kernel: `∫_0^{m α(y0)} {H0, H1}(φ(t), t + t0) dt` along the
/// unperturbed orbit through `(0, y0)`, split at its impacts.
pub fn g_m(sys: &TwoZoneSystem, y0: f64, t0: f64, m: usize, opts: &FlowOptions) -> Result<f64> {
    impact_map::SectionPoint::new(sys, y0, t0)?;
    if y0 <= 0.0 {
        return Err(Error::Domain("G^m starts on the positive half of the line".into()));
    }
    let free = sys.unperturbed();
    let seq = flow::impact_sequence(&free, y0, t0, 2 * m, opts)?;
    Ok(seq.total_integral())
}

/// `M^{n,m}(t0) = G^m(ȳ0, t0)` with `α(ȳ0) = nT/m`.
#[derive(Debug, Clone)]
pub struct SubharmonicMelnikov {
    sys: TwoZoneSystem,
    n: u32,
    m: u32,
    y0: f64,
    opts: FlowOptions,
}

impl SubharmonicMelnikov {
    pub fn new(sys: &TwoZoneSystem, n: u32, m: u32, opts: &FlowOptions) -> Result<Self> {
        if n == 0 || m == 0 || numeric::gcd(n, m) != 1 {
            return Err(Error::Domain(format!("(n, m) = ({n}, {m}) must be coprime positive integers")));
        }
        let y0 = impact_map::alpha_inverse(sys, n as f64 * sys.period() / m as f64)?;
        Ok(Self { sys: sys.unperturbed(), n, m, y0, opts: *opts })
    }

    /// The resonant velocity `ȳ0`.
    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn period(&self) -> f64 {
        self.sys.period()
    }

    pub fn value(&self, t0: f64) -> Result<f64> {
        g_m(&self.sys, self.y0, t0, self.m as usize, &self.opts)
    }

    pub fn profile(&self, grid: &[f64]) -> Result<MelnikovProfile> {
        let eval = |t: f64| self.value(t);
        let kind = ProfileKind::Subharmonic { n: self.n, m: self.m, y0: self.y0 };
        build_profile(kind, self.period(), grid, &eval)
    }
}

/// Sample `M^{n,m}` on `grid` and locate its zeros.
pub fn subharmonic_m(sys: &TwoZoneSystem, n: u32, m: u32, grid: &[f64], opts: &FlowOptions) -> Result<MelnikovProfile> {
    SubharmonicMelnikov::new(sys, n, m, opts)?.profile(grid)
}

/// One zone piece of the unperturbed heteroclinic orbit, with times shifted so
/// the orbit crosses `x = 0` at `t = 0`.
#[derive(Debug, Clone)]
struct OrbitPiece {
    zone: Zone,
    steps: Vec<Step<3>>,
    shift: f64,
}

/// `M(t0) = ∫ {H0, H1}(γ(t), t + t0) dt` along the unperturbed heteroclinic
/// orbit `γ` joining the two saddles through `(0, √(2 c1))`.
///
/// The orbit is computed once from points `η` away from the saddles along the
/// stable and unstable eigenvectors; each `M(t0)` is then a quadrature over the
/// dense output. The neglected tails are bounded by `|bracket|/λ` at those points.
#[derive(Debug, Clone)]
pub struct HeteroclinicMelnikov {
    sys: TwoZoneSystem,
    pieces: [OrbitPiece; 2],
    tail_bound: f64,
    landing: [f64; 2],
}

/// Distance from the saddles at which the heteroclinic orbit is cut.
const SADDLE_OFFSET: f64 = 1e-11;
const TAIL_TOL: f64 = 1e-10;

impl HeteroclinicMelnikov {
    pub fn new(sys: &TwoZoneSystem, opts: &FlowOptions) -> Result<Self> {
        let free = sys.unperturbed();
        let opts = FlowOptions {
            abs_tol: opts.abs_tol.min(1e-14),
            stall_radius: 0.0,
            max_transit_time: 400.0,
            ..*opts
        };
        let mut tail = 0.0;
        let mut make = |zone: Zone| -> Result<(OrbitPiece, f64)> {
            let saddle = free.saddle(zone);
            let lam = saddle.eigenvalue;
            let norm = (1.0 + lam * lam).sqrt();
            // Eigen-direction pointing at the switching line with y > 0.
            let (dx, dy) = (-zone.sign() / norm, lam / norm);
            let start = PhaseState::new(saddle.x + SADDLE_OFFSET * dx, SADDLE_OFFSET * dy, 0.0);
            let direction = match zone {
                Zone::Plus => Direction::Backward,
                Zone::Minus => Direction::Forward,
            };
            let mut steps = Vec::new();
            let tr = flow::transit_observed(&free, start, zone, direction, None, &opts, false, &mut |st| {
                steps.push(st.clone())
            })?;
            let worst = (0..64)
                .map(|k| {
                    let t = free.period() * k as f64 / 64.0;
                    free.zone_bracket(zone, start.x, start.y, t).abs()
                })
                .fold(0.0, f64::max);
            tail += worst / lam;
            Ok((OrbitPiece { zone, steps, shift: -tr.end.t }, tr.end.y))
        };
        let (plus, y_plus) = make(Zone::Plus)?;
        let (minus, y_minus) = make(Zone::Minus)?;
        if tail > TAIL_TOL {
            return Err(Error::Truncation { tail });
        }
        Ok(Self { sys: free, pieces: [plus, minus], tail_bound: tail, landing: [y_plus, y_minus] })
    }

    /// Bound on the integral beyond the truncation points.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Crossing velocities of the stable and unstable pieces (both `√(2 c1)` ideally).
    pub fn landing_velocities(&self) -> [f64; 2] {
        self.landing
    }

    pub fn period(&self) -> f64 {
        self.sys.period()
    }

    pub fn value(&self, t0: f64) -> f64 {
        let mut total = 0.0;
        for piece in &self.pieces {
            let mut sum = 0.0;
            for st in &piece.steps {
                let start = st.t + piece.shift;
                let mut f = |th: f64| {
                    let s = st.interpolate(th);
                    self.sys.zone_bracket(piece.zone, s[0], s[1], start + th * st.h + t0)
                };
                sum += numeric::kronrod15(&mut f, 0.0, 1.0).0 * st.h;
            }
            // The backward piece accumulates the integral with reversed orientation.
            total += match piece.zone {
                Zone::Plus => -sum,
                Zone::Minus => sum,
            };
        }
        total
    }

    pub fn profile(&self, grid: &[f64]) -> Result<MelnikovProfile> {
        let eval = |t: f64| Ok(self.value(t));
        build_profile(ProfileKind::Heteroclinic, self.period(), grid, &eval)
    }
}

/// Sample the heteroclinic Melnikov function on `grid` and locate its zeros.
pub fn heteroclinic_m(sys: &TwoZoneSystem, grid: &[f64], opts: &FlowOptions) -> Result<MelnikovProfile> {
    HeteroclinicMelnikov::new(sys, opts)?.profile(grid)
}

type Eval<'a> = dyn Fn(f64) -> Result<f64> + Sync + 'a;

fn build_profile(kind: ProfileKind, period: f64, grid: &[f64], eval: &Eval<'_>) -> Result<MelnikovProfile> {
    let values: Vec<f64> = grid.par_iter().map(|&t| eval(t)).collect::<Result<_>>()?;
    let samples: Vec<(f64, f64)> = grid.iter().copied().zip(values).collect();
    let identically_zero = samples.iter().all(|&(_, v)| v.abs() < IDENTICALLY_ZERO_TOL);
    let zeros = if identically_zero { Vec::new() } else { locate_zeros(&samples, period, eval)? };
    Ok(MelnikovProfile { kind, samples, zeros, period, identically_zero })
}

/// Consecutive sample pairs around the circle, including the wrap-around pair.
fn periodic_pairs(samples: &[(f64, f64)], period: f64) -> Vec<((f64, f64), (f64, f64))> {
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pairs: Vec<_> = pts.windows(2).map(|w| (w[0], w[1])).collect();
    if let (Some(&first), Some(&last)) = (pts.first(), pts.last()) {
        if pts.len() > 1 && last.0 < first.0 + period {
            pairs.push((last, (first.0 + period, first.1)));
        }
    }
    pairs
}

fn wrap(t: f64, period: f64) -> f64 {
    let w = t.rem_euclid(period);
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Zeros of a sampled periodic function: sign changes refined by Brent's method
/// to 1e-12, slopes by central differences.
pub fn locate_zeros(samples: &[(f64, f64)], period: f64, eval: &Eval<'_>) -> Result<Vec<MelnikovZero>> {
    let h = 1e-4 * period;
    let mut zeros: Vec<MelnikovZero> = Vec::new();
    for ((ta, fa), (tb, fb)) in periodic_pairs(samples, period) {
        if fa == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        let t = numeric::brent_with_values(eval, ta, tb, fa, fb, 1e-12)?;
        let slope = (eval(t + h)? - eval(t - h)?) / (2.0 * h);
        let t0 = wrap(t, period);
        if zeros.iter().any(|z| (z.t0 - t0).abs() < 1e-9) {
            continue;
        }
        zeros.push(MelnikovZero { t0, slope, simple: slope.abs() > SIMPLE_SLOPE_TOL });
    }
    zeros.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    Ok(zeros)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Max,
    Min,
}

/// A critical point `M'(t) = 0` of a sampled periodic function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub t: f64,
    pub value: f64,
    pub kind: CriticalKind,
}

/// Critical points located from the discrete slope of the samples and refined on
/// a central-difference derivative.
pub fn critical_points(samples: &[(f64, f64)], period: f64, eval: &Eval<'_>) -> Result<Vec<CriticalPoint>> {
    let pairs = periodic_pairs(samples, period);
    let k = pairs.len();
    if k < 3 {
        return Ok(Vec::new());
    }
    let slopes: Vec<(f64, f64, f64)> = pairs
        .iter()
        .map(|&((ta, fa), (tb, fb))| (ta, tb, (fb - fa) / (tb - ta)))
        .collect();
    let h = 1e-4 * period;
    let derivative = |t: f64| -> Result<f64> { Ok((eval(t + h)? - eval(t - h)?) / (2.0 * h)) };
    let mut out: Vec<CriticalPoint> = Vec::new();
    for i in 0..k {
        let (a0, _, s0) = slopes[i];
        let (_, b1, s1) = slopes[(i + 1) % k];
        if s0 == 0.0 || s0.signum() == s1.signum() {
            continue;
        }
        let kind = if s0 > 0.0 { CriticalKind::Max } else { CriticalKind::Min };
        // Midpoints of the two chords bracket the derivative's sign change.
        let lo = 0.5 * (a0 + pairs[i].1 .0);
        let mut hi = 0.5 * (pairs[(i + 1) % k].0 .0 + b1);
        if hi < lo {
            hi += period;
        }
        let (dlo, dhi) = (derivative(lo)?, derivative(hi)?);
        let t = if dlo.signum() != dhi.signum() {
            numeric::brent_with_values(&derivative, lo, hi, dlo, dhi, 1e-10)?
        } else {
            pairs[i].1 .0
        };
        let t = wrap(t, period);
        if out.iter().any(|c| (c.t - t).abs() < 1e-9) {
            continue;
        }
        out.push(CriticalPoint { t, value: eval(t)?, kind });
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// The critical point used for the dissipative threshold of a zero at `t_bar`:
/// the nearest local maximum, or the nearest critical point if one lies between.
pub fn threshold_point(critical: &[CriticalPoint], t_bar: f64, period: f64) -> Option<CriticalPoint> {
    let offset = |t: f64| {
        let d = (t - t_bar).rem_euclid(period);
        if d > 0.5 * period {
            d - period
        } else {
            d
        }
    };
    let best_max = critical
        .iter()
        .filter(|c| c.kind == CriticalKind::Max)
        .min_by(|a, b| offset(a.t).abs().total_cmp(&offset(b.t).abs()))?;
    let d_max = offset(best_max.t);
    let between = critical.iter().any(|c| {
        let d = offset(c.t);
        d.signum() == d_max.signum() && d.abs() < d_max.abs()
    });
    if between {
        critical.iter().min_by(|a, b| offset(a.t).abs().total_cmp(&offset(b.t).abs())).copied()
    } else {
        Some(*best_max)
    }
}
