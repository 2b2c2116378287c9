//! Periodic orbits by Newton shooting on the impact map, their continuation,
//! the dissipative seed equation, existence curves, and the heteroclinic
//! splitting distance between the saddle manifolds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, Direction, FlowOptions};
use crate::melnikov::{self, CriticalPoint, HeteroclinicMelnikov, MelnikovZero, SubharmonicMelnikov};
use crate::model::{PhaseState, TwoZoneSystem, Zone};
use crate::numeric;

/// An `(n, m)` orbit request: period `nT`, `2m` impacts, and a Newton seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub n: u32,
    pub m: u32,
    pub y0: f64,
    pub t0: f64,
}

impl OrbitSpec {
    pub fn new(n: u32, m: u32, y0: f64, t0: f64) -> Result<Self> {
        if n == 0 || m == 0 || numeric::gcd(n, m) != 1 {
            return Err(Error::Domain(format!("(n, m) = ({n}, {m}) must be coprime positive integers")));
        }
        Ok(Self { n, m, y0, t0 })
    }

    fn with_seed(self, y0: f64, t0: f64) -> Self {
        Self { y0, t0, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Relative central-difference step; the absolute floor is the same value.
    pub fd_step: f64,
    /// Residual accepted when the line search stalls on integration noise.
    pub floor_tol: f64,
    /// Closure gap accepted by the forward re-integration check.
    pub verify_tol: f64,
    pub flow: FlowOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-10, fd_step: 1e-6, floor_tol: 1e-8, verify_tol: 1e-8, flow: FlowOptions::precise() }
    }
}

/// A converged `(n, m)` periodic orbit through `(0, y0, t0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSolution {
    pub n: u32,
    pub m: u32,
    pub y0: f64,
    pub t0: f64,
    pub epsilon: f64,
    pub r: f64,
    pub residual_norm: f64,
    pub impacts_per_period: usize,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Largest of the velocity and time gaps after one period of forward integration.
    pub closure_gap: f64,
}

/// `(H0(0, y^{2m}) - H0(0, y0), t^{2m} - t0 - nT)` for the impact map of `sys`.
pub fn residual(sys: &TwoZoneSystem, y0: f64, t0: f64, n: u32, m: u32, opts: &FlowOptions) -> Result<[f64; 2]> {
    let span = n as f64 * sys.period();
    let opts = FlowOptions { max_time: Some(20.0 * span), ..*opts };
    let wrap = |e: Error| Error::ResidualUnavailable(Box::new(e));
    if !(y0 > 0.0 && y0 < sys.separatrix_velocity()) {
        return Err(wrap(Error::Domain(format!("y0 = {y0} is off the section"))));
    }
    let seq = flow::impact_sequence(sys, y0, t0, 2 * m as usize, &opts).map_err(wrap)?;
    if seq.truncated {
        return Err(wrap(Error::NoCrossing { t: seq.last().t, index: seq.impacts(), reason: "time budget exhausted".into() }));
    }
    let last = seq.last();
    Ok([sys.h0(0.0, last.y) - sys.h0(0.0, y0), last.t - t0 - span])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Closure check: integrate one period forward, count impacts and measure the gap.
pub fn verify_orbit(sys: &TwoZoneSystem, n: u32, m: u32, y0: f64, t0: f64, opts: &FlowOptions) -> Result<(f64, usize)> {
    let span = n as f64 * sys.period();
    let count = 2 * m as usize;
    let seq = flow::impact_sequence(sys, y0, t0, count + 1, opts)?;
    let rec = &seq.records;
    let end = t0 + span;
    let slack = 1e-6;
    let impacts = rec[1..].iter().filter(|r| r.t <= end + slack).count();
    let gap = (rec[count].y - y0).abs().max((rec[count].t - end).abs());
    Ok((gap, impacts))
}

/// Damped Newton on the periodic-orbit residual with a central-difference Jacobian.
///
/// With `ε = 0` and `r = 1` every orbit of the resonant level is periodic, so
/// `t0` is pinned to the seed and only the period equation is solved.
pub fn find_periodic(sys: &TwoZoneSystem, spec: &OrbitSpec, opts: &NewtonOptions) -> Result<OrbitSolution> {
    let OrbitSpec { n, m, .. } = OrbitSpec::new(spec.n, spec.m, spec.y0, spec.t0)?;
    let f = |y: f64, t: f64| residual(sys, y, t, n, m, &opts.flow);
    let pinned = sys.epsilon() == 0.0 && sys.restitution() == 1.0;
    let mut v = [spec.y0, spec.t0];
    let mut fv = f(v[0], v[1])?;
    let mut history = vec![norm(fv)];
    let mut iterations = 0;
    while norm(fv) >= opts.tol {
        if iterations >= opts.max_iter {
            if norm(fv) < opts.floor_tol {
                break;
            }
            return Err(Error::NoConvergence { iterations, residual: norm(fv) });
        }
        iterations += 1;
        let hy = opts.fd_step.max(opts.fd_step * v[0].abs());
        let (fy_hi, fy_lo) = (f(v[0] + hy, v[1])?, f(v[0] - hy, v[1])?);
        let dy = [(fy_hi[0] - fy_lo[0]) / (2.0 * hy), (fy_hi[1] - fy_lo[1]) / (2.0 * hy)];
        let dv = if pinned {
            let d = dy[1];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularJacobian { determinant: d });
            }
            [-fv[1] / d, 0.0]
        } else {
            let ht = opts.fd_step.max(opts.fd_step * v[1].abs());
            let (ft_hi, ft_lo) = (f(v[0], v[1] + ht)?, f(v[0], v[1] - ht)?);
            let j = [
                [dy[0], (ft_hi[0] - ft_lo[0]) / (2.0 * ht)],
                [dy[1], (ft_hi[1] - ft_lo[1]) / (2.0 * ht)],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let scale = (j[0][0].abs() + j[0][1].abs()) * (j[1][0].abs() + j[1][1].abs());
            if !(det.abs() > 1e-14 * scale) {
                return Err(Error::SingularJacobian { determinant: det });
            }
            [
                -(j[1][1] * fv[0] - j[0][1] * fv[1]) / det,
                -(-j[1][0] * fv[0] + j[0][0] * fv[1]) / det,
            ]
        };
        let measure = |r: [f64; 2]| if pinned { r[1].abs() } else { norm(r) };
        let current = measure(fv);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = [v[0] + lambda * dv[0], v[1] + lambda * dv[1]];
            if let Ok(ft) = f(trial[0], trial[1]) {
                if measure(ft) < current {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                v = trial;
                fv = ft;
            }
            None if current < opts.floor_tol => break,
            None => return Err(Error::NoConvergence { iterations, residual: norm(fv) }),
        }
        let now = if pinned { fv[1].abs() } else { norm(fv) };
        history.push(now);
        if pinned && now < opts.tol {
            break;
        }
        // Slow progress below the floor means the residual is integration noise.
        if now < opts.floor_tol && now > 0.5 * current {
            break;
        }
    }
    let (closure_gap, impacts) = verify_orbit(sys, n, m, v[0], v[1], &opts.flow)?;
    if impacts != 2 * m as usize || closure_gap > opts.verify_tol {
        return Err(Error::NoConvergence { iterations, residual: closure_gap });
    }
    Ok(OrbitSolution {
        n,
        m,
        y0: v[0],
        t0: v[1].rem_euclid(sys.period() * n as f64),
        epsilon: sys.epsilon(),
        r: sys.restitution(),
        residual_norm: *history.last().expect("history is non-empty"),
        impacts_per_period: impacts,
        iterations,
        residual_history: history,
        closure_gap,
    })
}

/// Amplitude and restitution scaling `ε = ε̃ δ`, `r = 1 - r̃ δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub eps_tilde: f64,
    pub r_tilde: f64,
}

impl Scaling {
    pub fn from_ratio(eps_tilde: f64, ratio: f64) -> Self {
        Self { eps_tilde, r_tilde: ratio * eps_tilde }
    }

    pub fn ratio(&self) -> f64 {
        self.r_tilde / self.eps_tilde
    }

    pub fn system(&self, base: &TwoZoneSystem, delta: f64) -> Result<TwoZoneSystem> {
        base.with_epsilon(self.eps_tilde * delta)?.with_restitution(1.0 - self.r_tilde * delta)
    }
}

/// Newton on the dissipative map residual at `ε = ε̃ δ`, `r = 1 - r̃ δ`.
pub fn find_periodic_dissipative(
    sys: &TwoZoneSystem,
    spec: &OrbitSpec,
    scaling: Scaling,
    delta: f64,
    opts: &NewtonOptions,
) -> Result<OrbitSolution> {
    find_periodic(&scaling.system(sys, delta)?, spec, opts)
}

/// A Melnikov zero with the critical point that bounds its dissipative threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdData {
    pub zero: MelnikovZero,
    pub critical: CriticalPoint,
    pub rho: f64,
}

/// Resonant orbit data shared by the seed and threshold computations.
struct Resonance {
    mel: SubharmonicMelnikov,
    thresholds: Vec<ThresholdData>,
}

fn resonance(sys: &TwoZoneSystem, n: u32, m: u32, opts: &FlowOptions) -> Result<Resonance> {
    let mel = SubharmonicMelnikov::new(sys, n, m, opts)?;
    let period = mel.period();
    let grid = melnikov::uniform_grid(period, melnikov::DEFAULT_SAMPLES);
    let profile = mel.profile(&grid)?;
    if profile.identically_zero {
        return Err(Error::DegenerateMelnikov);
    }
    let eval = |t: f64| mel.value(t);
    let critical = melnikov::critical_points(&profile.samples, period, &eval)?;
    let denom = 2.0 * m as f64 * mel.y0() * mel.y0();
    let thresholds = profile
        .simple_zeros()
        .filter_map(|z| {
            melnikov::threshold_point(&critical, z.t0, period)
                .map(|c| ThresholdData { zero: *z, critical: c, rho: c.value / denom })
        })
        .collect();
    Ok(Resonance { mel, thresholds })
}

/// Dissipative thresholds `ρ = M(t_M) / (2 m ȳ0²)`, one per simple Melnikov zero.
pub fn rho_per_zero(sys: &TwoZoneSystem, n: u32, m: u32, opts: &FlowOptions) -> Result<Vec<ThresholdData>> {
    Ok(resonance(sys, n, m, opts)?.thresholds)
}

/// The smallest per-zero threshold: below it every simple zero yields a seed.
pub fn rho(sys: &TwoZoneSystem, n: u32, m: u32, opts: &FlowOptions) -> Result<f64> {
    rho_per_zero(sys, n, m, opts)?
        .iter()
        .map(|d| d.rho)
        .min_by(f64::total_cmp)
        .ok_or(Error::DegenerateMelnikov)
}

/// A zero `t̂0` of `f(t0) = -2 m ratio ȳ0² + M^{n,m}(t0)` continuing a Melnikov zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipativeSeed {
    pub y0: f64,
    pub t0: f64,
    pub threshold: ThresholdData,
}

/// Seeds of the dissipative orbit problem, ordered like the Melnikov zeros they continue.
pub fn dissipative_seed(sys: &TwoZoneSystem, n: u32, m: u32, ratio: f64, opts: &FlowOptions) -> Result<Vec<DissipativeSeed>> {
    let res = resonance(sys, n, m, opts)?;
    let y0 = res.mel.y0();
    let period = res.mel.period();
    let level = 2.0 * m as f64 * ratio * y0 * y0;
    let f = |t: f64| Ok(res.mel.value(t)? - level);
    let mut seeds = Vec::new();
    for th in &res.thresholds {
        if !(ratio >= 0.0 && ratio < th.rho) {
            continue;
        }
        let t_bar = th.zero.t0;
        let mut d = (th.critical.t - t_bar).rem_euclid(period);
        if d > 0.5 * period {
            d -= period;
        }
        let t = numeric::brent_with_values(f, t_bar, t_bar + d, -level, th.critical.value - level, 1e-12)?;
        seeds.push(DissipativeSeed { y0, t0: t.rem_euclid(period), threshold: *th });
    }
    if seeds.is_empty() {
        let rho = res.thresholds.iter().map(|d| d.rho).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::NoSeed { ratio, rho });
    }
    Ok(seeds)
}

/// Natural-parameter continuation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub growth: f64,
    /// Failures at the minimum step that declare a fold.
    pub fold_failures: usize,
    pub max_points: usize,
    /// Largest accepted distance between predictor and corrector, as a fraction of `nT` in `t0`
    /// and absolute in `y0`.
    pub max_jump: f64,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            min_step: 1e-6,
            max_step: 0.05,
            growth: 1.3,
            fold_failures: 3,
            max_points: 10_000,
            max_jump: 0.05,
            newton: NewtonOptions { max_iter: 12, ..NewtonOptions::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub parameter: f64,
    pub y0: f64,
    pub t0: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Set when three corrector failures at the minimum step ended the branch.
    pub folded: bool,
    pub reached_target: bool,
}

impl Branch {
    pub fn last(&self) -> &BranchPoint {
        self.points.last().expect("a branch holds its starting point")
    }
}

/// Track a periodic orbit while `parameter` moves from `start` towards `target`.
///
/// Steps shrink by half on failure and grow by `growth` on success; a secant
/// predictor is tried first and a constant one as a fallback.
pub fn continue_branch(
    system_at: &(dyn Fn(f64) -> Result<TwoZoneSystem> + Sync),
    spec: &OrbitSpec,
    start: f64,
    target: Option<f64>,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let first = find_periodic(&system_at(start)?, spec, &opts.newton)?;
    let span = spec.n as f64 * system_at(start)?.period();
    let mut points = vec![BranchPoint { parameter: start, y0: first.y0, t0: first.t0, residual: first.residual_norm }];
    let dir = match target {
        Some(t) if t < start => -1.0,
        _ => 1.0,
    };
    let mut h = opts.initial_step;
    let mut failures = 0;
    let mut folded = false;
    let mut reached_target = target == Some(start);
    while !reached_target && points.len() < opts.max_points {
        let last = *points.last().expect("non-empty");
        let mut p = last.parameter + dir * h;
        if let Some(t) = target {
            if (p - t) * dir >= 0.0 {
                p = t;
            }
        }
        let mut predictors = Vec::with_capacity(2);
        if points.len() >= 2 {
            let prev = points[points.len() - 2];
            let s = (p - last.parameter) / (last.parameter - prev.parameter);
            let mut dt = last.t0 - prev.t0;
            dt -= span * (dt / span).round();
            predictors.push((last.y0 + s * (last.y0 - prev.y0), last.t0 + s * dt));
        }
        predictors.push((last.y0, last.t0));
        let mut found = None;
        if let Ok(sys) = system_at(p) {
            for (py, pt) in predictors {
                let res = find_periodic(&sys, &spec.with_seed(py, pt), &opts.newton);
                if let Ok(sol) = res {
                    let mut dt = sol.t0 - pt;
                    dt -= span * (dt / span).round();
                    if (sol.y0 - py).abs() <= opts.max_jump && dt.abs() <= opts.max_jump * span {
                        found = Some(BranchPoint { parameter: p, y0: sol.y0, t0: pt + dt, residual: sol.residual_norm });
                        break;
                    }
                }
            }
        }
        match found {
            Some(bp) => {
                points.push(bp);
                failures = 0;
                reached_target = target == Some(p);
                h = (h * opts.growth).min(opts.max_step);
            }
            None => {
                if h <= opts.min_step {
                    failures += 1;
                    if failures >= opts.fold_failures {
                        folded = true;
                        break;
                    }
                } else {
                    h = (0.5 * h).max(opts.min_step);
                }
            }
        }
    }
    for pt in &mut points {
        pt.t0 = pt.t0.rem_euclid(span);
    }
    Ok(Branch { points, folded, reached_target })
}

/// Continue a conservative orbit in `ε` from `eps_start` to `eps_target`.
pub fn continue_in_epsilon(
    sys: &TwoZoneSystem,
    spec: &OrbitSpec,
    eps_start: f64,
    eps_target: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let base = sys.with_restitution(1.0)?;
    continue_branch(&|eps| base.with_epsilon(eps), spec, eps_start, Some(eps_target), opts)
}

/// Continue a dissipative orbit in `δ` from `delta_start` until it folds (or `delta_max`).
pub fn continue_in_delta(
    sys: &TwoZoneSystem,
    spec: &OrbitSpec,
    scaling: Scaling,
    delta_start: f64,
    delta_max: Option<f64>,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    continue_branch(&|d| scaling.system(sys, d), spec, delta_start, delta_max, opts)
}

/// Lower existence boundary of symmetric `(n, 1)` orbits of the linear block:
/// `(1+ω²) R (1 - cosh(nT/2)) / √(ω² sinh²(nT/2) R² + (2-R)² (1+cosh(nT/2))²)`
/// with `R = 1 - r`. The expression is negative for `R > 0`; callers compare magnitudes.
pub fn linear_block_min_forcing(n: u32, omega: f64, big_r: f64) -> f64 {
    let half = n as f64 * std::f64::consts::PI / omega;
    let (c, s) = (half.cosh(), half.sinh());
    let num = (1.0 + omega * omega) * big_r * (1.0 - c);
    let den = (omega * omega * s * s * big_r * big_r + (2.0 - big_r).powi(2) * (1.0 + c).powi(2)).sqrt();
    num / den
}

/// One continuation run of an existence-curve sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceRun {
    pub ratio: f64,
    pub seed_t0: f64,
    pub delta_end: f64,
    pub r: f64,
    pub epsilon: f64,
    pub folded: bool,
    /// `(δ, r, ε)` along the branch.
    pub path: Vec<(f64, f64, f64)>,
}

/// Fold points of the dissipative orbits in the `(r, ε)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCurve {
    pub n: u32,
    pub m: u32,
    pub eps_tilde: f64,
    pub rho: f64,
    /// `(r, ε)` boundary points, starting at `(1, 0)`.
    pub boundary: Vec<(f64, f64)>,
    pub runs: Vec<ExistenceRun>,
}

impl ExistenceCurve {
    /// `ε` on the tangent line `1 - r = ρ ε`.
    pub fn tangent_epsilon(&self, r: f64) -> f64 {
        (1.0 - r) / self.rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceOptions {
    pub eps_tilde: f64,
    /// Index of the Melnikov zero whose seed is continued.
    pub seed_index: usize,
    pub delta_start: f64,
    pub delta_max: Option<f64>,
    pub continuation: ContinuationOptions,
}

impl Default for ExistenceOptions {
    fn default() -> Self {
        Self {
            eps_tilde: 0.1,
            seed_index: 0,
            delta_start: 0.01,
            delta_max: None,
            continuation: ContinuationOptions { initial_step: 0.01, max_step: 0.1, ..ContinuationOptions::default() },
        }
    }
}

/// For each ratio `r̃/ε̃` below `ρ`, continue the seeded orbit in `δ` until it
/// folds and record where in the `(r, ε)` plane that happens.
pub fn existence_curve(sys: &TwoZoneSystem, n: u32, m: u32, ratios: &[f64], opts: &ExistenceOptions) -> Result<ExistenceCurve> {
    let flow_opts = opts.continuation.newton.flow;
    let rho = rho(sys, n, m, &flow_opts)?;
    let runs: Vec<Option<ExistenceRun>> = ratios
        .par_iter()
        .map(|&ratio| {
            let seeds = dissipative_seed(sys, n, m, ratio, &flow_opts).ok()?;
            let seed = seeds.get(opts.seed_index)?;
            let scaling = Scaling::from_ratio(opts.eps_tilde, ratio);
            let spec = OrbitSpec::new(n, m, seed.y0, seed.t0).ok()?;
            let branch = continue_in_delta(sys, &spec, scaling, opts.delta_start, opts.delta_max, &opts.continuation).ok()?;
            let path: Vec<_> = branch
                .points
                .iter()
                .map(|p| (p.parameter, 1.0 - scaling.r_tilde * p.parameter, scaling.eps_tilde * p.parameter))
                .collect();
            let &(delta_end, r, epsilon) = path.last()?;
            Some(ExistenceRun { ratio, seed_t0: seed.t0, delta_end, r, epsilon, folded: branch.folded, path })
        })
        .collect();
    let runs: Vec<ExistenceRun> = runs.into_iter().flatten().collect();
    let mut boundary = vec![(1.0, 0.0)];
    let mut ends: Vec<(f64, f64)> = runs.iter().filter(|r| r.folded).map(|r| (r.r, r.epsilon)).collect();
    ends.sort_by(|a, b| b.0.total_cmp(&a.0));
    boundary.extend(ends);
    Ok(ExistenceCurve { n, m, eps_tilde: opts.eps_tilde, rho, boundary, runs })
}

/// A hyperbolic `T`-periodic orbit near a saddle, seen at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleOrbit {
    pub zone: Zone,
    pub point: PhaseState,
    /// Jacobian of the time-`T` map at the fixed point.
    pub jacobian: [[f64; 2]; 2],
    pub unstable_multiplier: f64,
    pub unstable_vector: (f64, f64),
    pub stable_multiplier: f64,
    pub stable_vector: (f64, f64),
    pub residual: f64,
}

fn saddle_flow_options(opts: &FlowOptions) -> FlowOptions {
    FlowOptions {
        abs_tol: opts.abs_tol.min(1e-15),
        rel_tol: opts.rel_tol.min(1e-14),
        stall_radius: 0.0,
        max_transit_time: f64::INFINITY,
        ..*opts
    }
}

/// Time-`T` map of one zone's vector field, without impacts.
fn stroboscopic(sys: &TwoZoneSystem, zone: Zone, x: f64, y: f64, t0: f64, opts: &FlowOptions) -> Result<(f64, f64)> {
    let tr = flow::transit(sys, PhaseState::new(x, y, t0), zone, Direction::Forward, Some(t0 + sys.period()), opts, false)?;
    if tr.crossed {
        return Err(Error::NoCrossing { t: tr.end.t, index: 0, reason: "saddle orbit left its zone".into() });
    }
    Ok((tr.end.x, tr.end.y))
}

fn eigenpair(j: &[[f64; 2]; 2], mu: f64) -> (f64, f64) {
    let a = (j[0][1], mu - j[0][0]);
    let b = (mu - j[1][1], j[1][0]);
    let v = if a.0.hypot(a.1) >= b.0.hypot(b.1) { a } else { b };
    let len = v.0.hypot(v.1);
    (v.0 / len, v.1 / len)
}

/// Fixed point `z±_ε(t0)` of the zone-restricted time-`T` map, by Newton from the saddle.
pub fn saddle_periodic_orbit(sys: &TwoZoneSystem, zone: Zone, t0: f64, opts: &FlowOptions) -> Result<SaddleOrbit> {
    let saddle = sys.saddle(zone);
    let period = sys.period();
    if sys.epsilon() == 0.0 {
        let lam = saddle.eigenvalue;
        let (mu_u, mu_s) = ((lam * period).exp(), (-lam * period).exp());
        let (ch, sh) = ((lam * period).cosh(), (lam * period).sinh());
        let norm = (1.0 + lam * lam).sqrt();
        return Ok(SaddleOrbit {
            zone,
            point: PhaseState::new(saddle.x, 0.0, t0),
            jacobian: [[ch, sh / lam], [lam * sh, ch]],
            unstable_multiplier: mu_u,
            unstable_vector: (1.0 / norm, lam / norm),
            stable_multiplier: mu_s,
            stable_vector: (1.0 / norm, -lam / norm),
            residual: 0.0,
        });
    }
    let fopts = saddle_flow_options(opts);
    let map = |x: f64, y: f64| stroboscopic(sys, zone, x, y, t0, &fopts);
    let (mut x, mut y) = (saddle.x, 0.0);
    let h = 1e-7;
    let mut jac = [[0.0; 2]; 2];
    let mut res = f64::INFINITY;
    for iteration in 0..30 {
        let (px, py) = map(x, y)?;
        let g = [px - x, py - y];
        res = g[0].hypot(g[1]);
        let (ax, ay) = map(x + h, y)?;
        let (bx, by) = map(x, y + h)?;
        jac = [[(ax - px) / h, (bx - px) / h], [(ay - py) / h, (by - py) / h]];
        if res < 1e-12 {
            break;
        }
        let a = [[jac[0][0] - 1.0, jac[0][1]], [jac[1][0], jac[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::SingularJacobian { determinant: det });
        }
        x -= (a[1][1] * g[0] - a[0][1] * g[1]) / det;
        y -= (-a[1][0] * g[0] + a[0][0] * g[1]) / det;
        if iteration == 29 {
            return Err(Error::NoConvergence { iterations: 30, residual: res });
        }
    }
    let tr = jac[0][0] + jac[1][1];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (mu_u, mu_s) = (0.5 * tr + disc, 0.5 * tr - disc);
    Ok(SaddleOrbit {
        zone,
        point: PhaseState::new(x, y, t0),
        jacobian: jac,
        unstable_multiplier: mu_u,
        unstable_vector: eigenpair(&jac, mu_u),
        stable_multiplier: mu_s,
        stable_vector: eigenpair(&jac, mu_s),
        residual: res,
    })
}

/// Which invariant manifold is followed to the switching line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    /// Unstable manifold of the orbit near the minus saddle (`z^u`).
    UnstableMinus,
    /// Stable manifold of the orbit near the plus saddle (`z^s`).
    StablePlus,
}

/// First intersection of a saddle manifold with `x = 0` at time `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub state: PhaseState,
    /// Offset from the saddle orbit along the eigenvector.
    pub eta: f64,
    /// Whole forcing periods between leaving the saddle orbit and reaching the line.
    pub periods: u32,
    /// Velocity difference against a shot one period longer, when requested.
    pub linearization_gap: Option<f64>,
}

const MANIFOLD_OFFSET: f64 = 1e-4;
const ARRIVAL_TOL: f64 = 1e-9;

/// Shoot along the stable or unstable eigenvector of the saddle orbit so the
/// trajectory meets `x = 0` exactly at `t0`.
pub fn manifold_section_point(sys: &TwoZoneSystem, which: Manifold, t0: f64, check: bool, opts: &FlowOptions) -> Result<ManifoldPoint> {
    let (zone, direction) = match which {
        Manifold::UnstableMinus => (Zone::Minus, Direction::Forward),
        Manifold::StablePlus => (Zone::Plus, Direction::Backward),
    };
    let period = sys.period();
    let orbit = saddle_periodic_orbit(sys, zone, t0.rem_euclid(period), opts)?;
    let (vx, vy) = match which {
        Manifold::UnstableMinus => orbit.unstable_vector,
        Manifold::StablePlus => orbit.stable_vector,
    };
    // Point the offset at the switching line.
    let flip = if vx * -zone.sign() > 0.0 { 1.0 } else { -1.0 };
    let (vx, vy) = (flip * vx, flip * vy);
    let fopts = saddle_flow_options(opts);
    let lam = sys.saddle(zone).eigenvalue;
    let tsign = match direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };

    // Signed arrival-time error for an offset `ln η` with `k` periods.
    let shoot = |log_eta: f64, k: u32| -> Result<(f64, PhaseState)> {
        let eta = log_eta.exp();
        let t_start = t0 + tsign * k as f64 * period;
        let start = PhaseState::new(orbit.point.x + eta * vx, orbit.point.y + eta * vy, t_start);
        let tr = flow::transit(sys, start, zone, direction, None, &fopts, false)?;
        Ok((tr.end.t - t0, tr.end))
    };
    let solve = |k: u32| -> Result<(f64, PhaseState)> {
        // Arrival time moves by about -ln(η)/λ; start from the nominal offset.
        let mut a = MANIFOLD_OFFSET.ln();
        let (mut fa, _) = shoot(a, k)?;
        let mut b = a + tsign * fa * lam;
        let (mut fb, mut end) = shoot(b, k)?;
        let mut best = (fb.abs(), b, end);
        for _ in 0..60 {
            if fb.abs() < 1e-12 {
                break;
            }
            let denom = fb - fa;
            let next = if denom != 0.0 { b - fb * (b - a) / denom } else { b + tsign * fb * lam };
            if (next - b).abs() < 1e-14 {
                break;
            }
            a = b;
            fa = fb;
            b = next;
            let shot = shoot(b, k)?;
            fb = shot.0;
            end = shot.1;
            if fb.abs() < best.0 {
                best = (fb.abs(), b, end);
            }
        }
        // Arrival times carry integration noise near 1e-10 after long transits.
        if best.0 < ARRIVAL_TOL {
            Ok((best.1.exp(), best.2))
        } else {
            Err(Error::NoConvergence { iterations: 60, residual: best.0 })
        }
    };
    // Whole periods needed so that the offset lands near the nominal value.
    let (lead, _) = shoot(MANIFOLD_OFFSET.ln(), 0)?;
    let periods = (lead.abs() / period).ceil().max(1.0) as u32;
    let (eta, end) = solve(periods)?;
    let linearization_gap = if check {
        let (_, other) = solve(periods + 1)?;
        Some((other.y - end.y).abs())
    } else {
        None
    };
    Ok(ManifoldPoint { state: PhaseState::new(0.0, end.y, t0), eta, periods, linearization_gap })
}

/// Splitting distance `Δ(t0) = r² H0(z^u(t0)) - H0(z^s(t0))`.
pub fn delta_distance(sys: &TwoZoneSystem, t0: f64, opts: &FlowOptions) -> Result<f64> {
    let zu = manifold_section_point(sys, Manifold::UnstableMinus, t0, false, opts)?;
    let zs = manifold_section_point(sys, Manifold::StablePlus, t0, false, opts)?;
    let r = sys.restitution();
    Ok(r * r * sys.h0(0.0, zu.state.y) - sys.h0(0.0, zs.state.y))
}

/// Heteroclinic threshold `ρ = M(t_M) / (2 c1)`, minimised over the simple zeros.
pub fn heteroclinic_rho(sys: &TwoZoneSystem, opts: &FlowOptions) -> Result<f64> {
    let het = HeteroclinicMelnikov::new(sys, opts)?;
    let period = het.period();
    let profile = het.profile(&melnikov::uniform_grid(period, melnikov::DEFAULT_SAMPLES))?;
    if profile.identically_zero {
        return Err(Error::DegenerateMelnikov);
    }
    let eval = |t: f64| Ok(het.value(t));
    let critical = melnikov::critical_points(&profile.samples, period, &eval)?;
    profile
        .simple_zeros()
        .filter_map(|z| melnikov::threshold_point(&critical, z.t0, period))
        .map(|c| c.value / (2.0 * sys.c1()))
        .min_by(f64::total_cmp)
        .ok_or(Error::DegenerateMelnikov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HeteroclinicMode {
    /// Use `ε` and `r` of the system as given.
    Conservative,
    Scaled { eps_tilde: f64, r_tilde: f64, delta: f64 },
}

/// A transversal intersection of the manifolds, seen on the switching line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroclinicIntersection {
    pub t0: f64,
    pub slope: f64,
    pub simple: bool,
    /// Point on the stable manifold of the plus saddle orbit (after the impact).
    pub z_plus: PhaseState,
    /// Point on the unstable manifold of the minus saddle orbit (before the impact).
    pub z_minus: PhaseState,
}

/// Number of `t0` samples used to bracket zeros of `Δ`.
pub const SPLITTING_SAMPLES: usize = 64;

/// Splitting distances below this are indistinguishable from manifold shooting error.
pub const SPLITTING_FLOOR: f64 = 1e-12;

/// Zeros of the splitting distance on one forcing period.
pub fn find_heteroclinic(sys: &TwoZoneSystem, mode: HeteroclinicMode, opts: &FlowOptions) -> Result<Vec<HeteroclinicIntersection>> {
    let sys = match mode {
        HeteroclinicMode::Conservative => sys.clone(),
        HeteroclinicMode::Scaled { eps_tilde, r_tilde, delta } => {
            if r_tilde > 0.0 {
                let rho = heteroclinic_rho(sys, opts)?;
                let ratio = r_tilde / eps_tilde;
                if !(ratio < rho) {
                    return Err(Error::NoSeed { ratio, rho });
                }
            }
            Scaling { eps_tilde, r_tilde }.system(sys, delta)?
        }
    };
    let period = sys.period();
    let grid = melnikov::uniform_grid(period, SPLITTING_SAMPLES);
    let values: Vec<f64> = grid.par_iter().map(|&t| delta_distance(&sys, t, opts)).collect::<Result<_>>()?;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale < SPLITTING_FLOOR {
        return Err(Error::NoZero { degenerate: true });
    }
    let samples: Vec<(f64, f64)> = grid.into_iter().zip(values).collect();
    let eval = |t: f64| delta_distance(&sys, t, opts);
    let zeros = melnikov::locate_zeros(&samples, period, &eval)?;
    if zeros.is_empty() {
        return Err(Error::NoZero { degenerate: false });
    }
    zeros
        .into_iter()
        .map(|z| {
            let zu = manifold_section_point(&sys, Manifold::UnstableMinus, z.t0, false, opts)?;
            let zs = manifold_section_point(&sys, Manifold::StablePlus, z.t0, false, opts)?;
            Ok(HeteroclinicIntersection {
                t0: z.t0,
                slope: z.slope,
                simple: z.slope.abs() > 1e-3 * scale,
                z_plus: zs.state,
                z_minus: zu.state,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fig_system() -> TwoZoneSystem {
        TwoZoneSystem::linear_block(5.0)
    }

    fn y_bar() -> f64 {
        let e = PI.exp();
        (e - 1.0) / (e + 1.0)
    }

    #[test]
    fn unperturbed_residual_values() {
        let sys = fig_system();
        let opts = FlowOptions::precise();
        let r = residual(&sys, y_bar(), 0.3, 5, 1, &opts).unwrap();
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-10, "{r:?}");
        let y: f64 = 0.8;
        let r = residual(&sys, y, 0.3, 5, 1, &opts).unwrap();
        let alpha = 2.0 * ((1.0 + y) / (1.0 - y)).ln();
        assert!((r[1] - (alpha - 2.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn pinned_solve_at_zero_amplitude() {
        let sys = fig_system();
        let spec = OrbitSpec::new(5, 1, 0.9, 0.4).unwrap();
        let sol = find_periodic(&sys, &spec, &NewtonOptions::default()).unwrap();
        assert!((sol.y0 - y_bar()).abs() < 1e-10);
        assert_eq!(sol.t0, 0.4);
        assert_eq!(sol.impacts_per_period, 2);
    }

    #[test]
    fn conservative_orbit_converges_and_closes() {
        let sys = fig_system().with_epsilon(1e-3).unwrap();
        let period = sys.period();
        let spec = OrbitSpec::new(5, 1, y_bar(), period / 4.0).unwrap();
        let sol = find_periodic(&sys, &spec, &NewtonOptions::default()).unwrap();
        assert!(sol.residual_norm < 1e-10);
        assert!(sol.closure_gap < 1e-8);
        assert_eq!(sol.impacts_per_period, 2);
        assert!((sol.y0 - y_bar()).abs() < 0.05);
    }

    #[test]
    fn linear_rho_and_seeds() {
        let sys = fig_system();
        let opts = FlowOptions::precise();
        let w: f64 = 5.0;
        let yb = y_bar();
        let expected = 0.5 / (yb * yb) * 4.0 / (w * w + 1.0);
        let r = rho(&sys, 5, 1, &opts).unwrap();
        assert!((r - expected).abs() < 1e-8, "{r} vs {expected}");
        let seeds = dissipative_seed(&sys, 5, 1, 0.07, &opts).unwrap();
        assert_eq!(seeds.len(), 2);
        let first = (-(w * w + 1.0) / 2.0 * yb * yb * 0.07).acos() / w;
        assert!((seeds[0].t0 - first).abs() < 1e-10);
        assert!((seeds[1].t0 - (2.0 * PI / w - first)).abs() < 1e-10);
        assert!(matches!(dissipative_seed(&sys, 5, 1, expected * 1.0001, &opts), Err(Error::NoSeed { .. })));
    }

    #[test]
    fn degenerate_rho() {
        let sys = fig_system();
        assert!(matches!(rho(&sys, 5, 2, &FlowOptions::default()), Err(Error::DegenerateMelnikov)));
    }

    #[test]
    fn min_forcing_slope_at_origin() {
        let w: f64 = 5.0;
        let yb = y_bar();
        let rho = 2.0 / ((w * w + 1.0) * yb * yb);
        let h = 1e-7;
        let slope = linear_block_min_forcing(5, w, h) / h;
        assert!((slope + 1.0 / rho).abs() < 1e-5 / rho);
        assert_eq!(linear_block_min_forcing(5, w, 0.0), 0.0);
    }

    #[test]
    fn saddle_orbit_at_zero_and_small_amplitude() {
        let sys = fig_system();
        let opts = FlowOptions::precise();
        let z = saddle_periodic_orbit(&sys, Zone::Plus, 0.3, &opts).unwrap();
        assert_eq!((z.point.x, z.point.y), (1.0, 0.0));
        let pert = sys.with_epsilon(1e-3).unwrap();
        let z = saddle_periodic_orbit(&pert, Zone::Plus, 0.0, &opts).unwrap();
        assert!(z.residual < 1e-12);
        assert!((z.point.x - 1.0).hypot(z.point.y) < 5e-3);
        // Linear block: the orbit is x = 1 + ε cos(ωt)/(1 + ω²), y = -εω sin(ωt)/(1 + ω²).
        assert!((z.point.x - (1.0 + 1e-3 / 26.0)).abs() < 1e-10);
        assert!(z.unstable_multiplier > 1.0 && z.stable_multiplier < 1.0);
    }

    #[test]
    fn unperturbed_manifolds_meet_on_the_separatrix() {
        let sys = fig_system();
        let opts = FlowOptions::precise();
        for which in [Manifold::UnstableMinus, Manifold::StablePlus] {
            let p = manifold_section_point(&sys, which, 0.2, false, &opts).unwrap();
            assert!((p.state.y - 1.0).abs() < 1e-8, "{which:?}: {}", p.state.y);
            assert_eq!(p.state.t, 0.2);
        }
        assert!(delta_distance(&sys, 0.2, &opts).unwrap().abs() < 1e-8);
    }

    #[test]
    fn zero_perturbation_has_no_splitting_zero() {
        let sys = fig_system()
            .with_perturbation(crate::model::Perturbation::zero(5.0))
            .unwrap()
            .with_epsilon(1e-3)
            .unwrap();
        let err = find_heteroclinic(&sys, HeteroclinicMode::Conservative, &FlowOptions::precise()).unwrap_err();
        assert_eq!(err, Error::NoZero { degenerate: true });
    }
}
