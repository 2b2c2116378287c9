//! Two-zone piecewise Hamiltonian systems.
//!
//! The plane is split by the switching line `x = 0` into the zones `x > 0`
//! ("plus") and `x < 0` ("minus"). In each zone the motion is generated by
//! `H = y²/2 + V±(x) + ε H1±(x, y, t)` and at every crossing the velocity is
//! multiplied by the restitution coefficient `r`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two smooth zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Plus,
    Minus,
}

impl Zone {
    pub fn sign(self) -> f64 {
        match self {
            Zone::Plus => 1.0,
            Zone::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Zone {
        match self {
            Zone::Plus => Zone::Minus,
            Zone::Minus => Zone::Plus,
        }
    }

    /// Zone that owns `(x, y)`. On the switching line the sign of `y` decides,
    /// since orbits turn clockwise around the origin.
    pub fn of(x: f64, y: f64) -> Result<Zone> {
        if x > 0.0 {
            Ok(Zone::Plus)
        } else if x < 0.0 {
            Ok(Zone::Minus)
        } else if y > 0.0 {
            Ok(Zone::Plus)
        } else if y < 0.0 {
            Ok(Zone::Minus)
        } else {
            Err(Error::FoldPoint)
        }
    }
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Zone::Plus => write!(f, "+"),
            Zone::Minus => write!(f, "-"),
        }
    }
}

/// A point `(x, y, t)` of the extended phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    pub fn on_switching_line(y: f64, t: f64) -> Self {
        Self { x: 0.0, y, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.t.is_finite()
    }
}

/// Potential energy of one zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `x - x²/2`, the slender rocking block rocking about its right corner.
    LinearBlockPlus,
    /// `-x - x²/2`.
    LinearBlockMinus,
    /// `(cos(a(1 - x)) - cos a) / a²` for slenderness `a`.
    NonlinearBlockPlus { slenderness: f64 },
    /// `(cos(a(1 + x)) - cos a) / a²`.
    NonlinearBlockMinus { slenderness: f64 },
    /// `Σ c_k x^k`.
    Polynomial { coefficients: Vec<f64> },
}

impl Potential {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::LinearBlockPlus => x - 0.5 * x * x,
            Potential::LinearBlockMinus => -x - 0.5 * x * x,
            Potential::NonlinearBlockPlus { slenderness: a } => {
                ((a * (1.0 - x)).cos() - a.cos()) / (a * a)
            }
            Potential::NonlinearBlockMinus { slenderness: a } => {
                ((a * (1.0 + x)).cos() - a.cos()) / (a * a)
            }
            Potential::Polynomial { coefficients } => horner(coefficients, x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::LinearBlockPlus => 1.0 - x,
            Potential::LinearBlockMinus => -1.0 - x,
            Potential::NonlinearBlockPlus { slenderness: a } => (a * (1.0 - x)).sin() / a,
            Potential::NonlinearBlockMinus { slenderness: a } => -(a * (1.0 + x)).sin() / a,
            Potential::Polynomial { coefficients } => {
                let d: Vec<f64> = polynomial_derivative(coefficients);
                horner(&d, x)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Potential::LinearBlockPlus | Potential::LinearBlockMinus => -1.0,
            Potential::NonlinearBlockPlus { slenderness: a } => -(a * (1.0 - x)).cos(),
            Potential::NonlinearBlockMinus { slenderness: a } => -(a * (1.0 + x)).cos(),
            Potential::Polynomial { coefficients } => {
                let d2 = polynomial_derivative(&polynomial_derivative(coefficients));
                horner(&d2, x)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Potential::NonlinearBlockPlus { slenderness } | Potential::NonlinearBlockMinus { slenderness } => {
                if !(slenderness.is_finite() && *slenderness > 0.0 && *slenderness < PI / 2.0) {
                    return Err(Error::InvalidSystem(format!(
                        "block slenderness must lie in (0, π/2), got {slenderness}"
                    )));
                }
            }
            Potential::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidSystem(
                        "polynomial potential needs finite coefficients".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn polynomial_derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Position-dependent factor of a parametric perturbation in one zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialProfile {
    Polynomial { coefficients: Vec<f64> },
    /// `(sin a - sin(a(1 - x))) / a`, the forcing term of the nonlinear block for `x > 0`.
    BlockSinePlus { slenderness: f64 },
    /// `(sin(a(1 + x)) - sin a) / a`.
    BlockSineMinus { slenderness: f64 },
}

impl SpatialProfile {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            SpatialProfile::Polynomial { coefficients } => horner(coefficients, x),
            SpatialProfile::BlockSinePlus { slenderness: a } => (a.sin() - (a * (1.0 - x)).sin()) / a,
            SpatialProfile::BlockSineMinus { slenderness: a } => ((a * (1.0 + x)).sin() - a.sin()) / a,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            SpatialProfile::Polynomial { coefficients } => horner(&polynomial_derivative(coefficients), x),
            SpatialProfile::BlockSinePlus { slenderness: a } => (a * (1.0 - x)).cos(),
            SpatialProfile::BlockSineMinus { slenderness: a } => (a * (1.0 + x)).cos(),
        }
    }
}

/// `cos·cos(order·ωt) + sin·sin(order·ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `H1±(x, y, t) = (S±(x) + c·y)·Σ harmonics(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricPerturbation {
    pub plus: SpatialProfile,
    pub minus: SpatialProfile,
    #[serde(default)]
    pub velocity_coefficient: f64,
    pub harmonics: Vec<Harmonic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `H1 = x cos(ωt)`.
    CosForcing,
    /// `H1 = x (cos(ωt) + cos(kωt))`.
    MultiHarmonic { k: u32 },
    Custom(ParametricPerturbation),
}

/// T-periodic Hamiltonian perturbation with base frequency `omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub omega: f64,
    pub kind: PerturbationKind,
}

impl Perturbation {
    pub fn cos_forcing(omega: f64) -> Self {
        Self { omega, kind: PerturbationKind::CosForcing }
    }

    pub fn multi_harmonic(omega: f64, k: u32) -> Self {
        Self { omega, kind: PerturbationKind::MultiHarmonic { k } }
    }

    pub fn custom(omega: f64, p: ParametricPerturbation) -> Self {
        Self { omega, kind: PerturbationKind::Custom(p) }
    }

    /// The identically vanishing perturbation.
    pub fn zero(omega: f64) -> Self {
        Self::custom(
            omega,
            ParametricPerturbation {
                plus: SpatialProfile::Polynomial { coefficients: vec![0.0] },
                minus: SpatialProfile::Polynomial { coefficients: vec![0.0] },
                velocity_coefficient: 0.0,
                harmonics: vec![],
            },
        )
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    fn temporal(&self, t: f64) -> f64 {
        let w = self.omega;
        match &self.kind {
            PerturbationKind::CosForcing => (w * t).cos(),
            PerturbationKind::MultiHarmonic { k } => (w * t).cos() + (*k as f64 * w * t).cos(),
            PerturbationKind::Custom(p) => p
                .harmonics
                .iter()
                .map(|h| {
                    let arg = h.order as f64 * w * t;
                    h.cos * arg.cos() + h.sin * arg.sin()
                })
                .sum(),
        }
    }

    pub fn value(&self, zone: Zone, x: f64, y: f64, t: f64) -> f64 {
        match &self.kind {
            PerturbationKind::CosForcing | PerturbationKind::MultiHarmonic { .. } => x * self.temporal(t),
            PerturbationKind::Custom(p) => {
                let s = match zone {
                    Zone::Plus => p.plus.value(x),
                    Zone::Minus => p.minus.value(x),
                };
                (s + p.velocity_coefficient * y) * self.temporal(t)
            }
        }
    }

    pub fn dx(&self, zone: Zone, x: f64, t: f64) -> f64 {
        match &self.kind {
            PerturbationKind::CosForcing | PerturbationKind::MultiHarmonic { .. } => self.temporal(t),
            PerturbationKind::Custom(p) => {
                let ds = match zone {
                    Zone::Plus => p.plus.derivative(x),
                    Zone::Minus => p.minus.derivative(x),
                };
                ds * self.temporal(t)
            }
        }
    }

    pub fn dy(&self, t: f64) -> f64 {
        match &self.kind {
            PerturbationKind::Custom(p) if p.velocity_coefficient != 0.0 => {
                p.velocity_coefficient * self.temporal(t)
            }
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidSystem(format!("omega must be positive, got {}", self.omega)));
        }
        match &self.kind {
            PerturbationKind::MultiHarmonic { k } if *k == 0 => {
                Err(Error::InvalidSystem("harmonic order k must be positive".into()))
            }
            PerturbationKind::Custom(p) => {
                let gap = (p.plus.value(0.0) - p.minus.value(0.0)).abs();
                if gap > 1e-12 {
                    return Err(Error::InvalidSystem(format!(
                        "perturbation is discontinuous across x = 0 (jump {gap:.3e})"
                    )));
                }
                if !p.velocity_coefficient.is_finite()
                    || p.harmonics.iter().any(|h| !h.cos.is_finite() || !h.sin.is_finite())
                {
                    return Err(Error::InvalidSystem("non-finite perturbation coefficient".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Saddle data of one zone: location on the x-axis and unstable eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub x: f64,
    pub eigenvalue: f64,
}

/// A two-zone piecewise Hamiltonian system with impacts. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoZoneSystem {
    v_plus: Potential,
    v_minus: Potential,
    perturbation: Perturbation,
    epsilon: f64,
    restitution: f64,
    saddle_plus: Saddle,
    saddle_minus: Saddle,
    c1: f64,
}

impl TwoZoneSystem {
    pub fn new(
        v_plus: Potential,
        v_minus: Potential,
        perturbation: Perturbation,
        epsilon: f64,
        restitution: f64,
    ) -> Result<Self> {
        v_plus.validate()?;
        v_minus.validate()?;
        perturbation.validate()?;
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidSystem(format!("epsilon must be finite and non-negative, got {epsilon}")));
        }
        if !(restitution > 0.0 && restitution <= 1.0) {
            return Err(Error::InvalidSystem(format!("restitution must lie in (0, 1], got {restitution}")));
        }
        let gap = (v_plus.value(0.0) - v_minus.value(0.0)).abs();
        if gap > 1e-12 {
            return Err(Error::InvalidSystem(format!("H0 is discontinuous across x = 0 (jump {gap:.3e})")));
        }
        if v_plus.value(0.0).abs() > 1e-12 {
            return Err(Error::InvalidSystem("the potentials must vanish at x = 0".into()));
        }
        // Invisible fold-fold at the origin: both flows bend back towards x = 0.
        if v_plus.derivative(0.0) <= 0.0 || v_minus.derivative(0.0) >= 0.0 {
            return Err(Error::InvalidSystem(
                "the origin is not an invisible fold-fold (need V+'(0) > 0 > V-'(0))".into(),
            ));
        }
        let saddle_plus = find_saddle(&v_plus, Zone::Plus)?;
        let saddle_minus = find_saddle(&v_minus, Zone::Minus)?;
        let c_plus = v_plus.value(saddle_plus.x);
        let c_minus = v_minus.value(saddle_minus.x);
        if (c_plus - c_minus).abs() > 1e-10 * c_plus.abs().max(1.0) {
            return Err(Error::InvalidSystem(format!(
                "saddles lie on different energy levels ({c_plus} vs {c_minus})"
            )));
        }
        if c_plus <= 0.0 {
            return Err(Error::InvalidSystem("saddle energy level must be positive".into()));
        }
        Ok(Self {
            v_plus,
            v_minus,
            perturbation,
            epsilon,
            restitution,
            saddle_plus,
            saddle_minus,
            c1: c_plus,
        })
    }

    /// Linearised (slender) rocking block forced by `x cos(ωt)`.
    pub fn linear_block(omega: f64) -> Self {
        Self::new(
            Potential::LinearBlockPlus,
            Potential::LinearBlockMinus,
            Perturbation::cos_forcing(omega),
            0.0,
            1.0,
        )
        .expect("built-in linear block is valid")
    }

    /// Full rocking block with slenderness `a`, forced horizontally.
    pub fn nonlinear_block(slenderness: f64, omega: f64) -> Result<Self> {
        Self::new(
            Potential::NonlinearBlockPlus { slenderness },
            Potential::NonlinearBlockMinus { slenderness },
            Perturbation::custom(
                omega,
                ParametricPerturbation {
                    plus: SpatialProfile::BlockSinePlus { slenderness },
                    minus: SpatialProfile::BlockSineMinus { slenderness },
                    velocity_coefficient: 0.0,
                    harmonics: vec![Harmonic { order: 1, cos: 1.0, sin: 0.0 }],
                },
            ),
            0.0,
            1.0,
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidSystem(format!("epsilon must be finite and non-negative, got {epsilon}")));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn with_restitution(&self, restitution: f64) -> Result<Self> {
        if !(restitution > 0.0 && restitution <= 1.0) {
            return Err(Error::InvalidSystem(format!("restitution must lie in (0, 1], got {restitution}")));
        }
        Ok(Self { restitution, ..self.clone() })
    }

    pub fn with_perturbation(&self, perturbation: Perturbation) -> Result<Self> {
        perturbation.validate()?;
        Ok(Self { perturbation, ..self.clone() })
    }

    /// The same system with `ε = 0` and `r = 1`.
    pub fn unperturbed(&self) -> Self {
        Self { epsilon: 0.0, restitution: 1.0, ..self.clone() }
    }

    pub fn potential(&self, zone: Zone) -> &Potential {
        match zone {
            Zone::Plus => &self.v_plus,
            Zone::Minus => &self.v_minus,
        }
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn restitution(&self) -> f64 {
        self.restitution
    }

    pub fn omega(&self) -> f64 {
        self.perturbation.omega
    }

    pub fn period(&self) -> f64 {
        self.perturbation.period()
    }

    /// Energy of the saddle level carrying the heteroclinic connections.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Velocity at which the unperturbed heteroclinic orbit crosses `x = 0`.
    pub fn separatrix_velocity(&self) -> f64 {
        (2.0 * self.c1).sqrt()
    }

    pub fn saddle(&self, zone: Zone) -> Saddle {
        match zone {
            Zone::Plus => self.saddle_plus,
            Zone::Minus => self.saddle_minus,
        }
    }

    pub fn is_linear_block(&self) -> bool {
        self.v_plus == Potential::LinearBlockPlus && self.v_minus == Potential::LinearBlockMinus
    }

    pub fn zone_h0(&self, zone: Zone, x: f64, y: f64) -> f64 {
        0.5 * y * y + self.potential(zone).value(x)
    }

    /// Unperturbed Hamiltonian, continuous across `x = 0`.
    pub fn h0(&self, x: f64, y: f64) -> f64 {
        let zone = if x >= 0.0 { Zone::Plus } else { Zone::Minus };
        self.zone_h0(zone, x, y)
    }

    pub fn h1(&self, zone: Zone, x: f64, y: f64, t: f64) -> f64 {
        self.perturbation.value(zone, x, y, t)
    }

    /// `J∇(H0 + εH1)` of the given zone, evaluated at any `(x, y)`.
    pub fn zone_field(&self, zone: Zone, x: f64, y: f64, t: f64) -> (f64, f64) {
        let eps = self.epsilon;
        let dx = y + eps * self.perturbation.dy(t);
        let dy = -self.potential(zone).derivative(x) - eps * self.perturbation.dx(zone, x, t);
        (dx, dy)
    }

    pub fn vector_field(&self, state: &PhaseState) -> Result<(f64, f64)> {
        let zone = Zone::of(state.x, state.y)?;
        Ok(self.zone_field(zone, state.x, state.y, state.t))
    }

    /// `{H0, H1} = ∂xH0 ∂yH1 - ∂yH0 ∂xH1` of the given zone.
    pub fn zone_bracket(&self, zone: Zone, x: f64, y: f64, t: f64) -> f64 {
        self.potential(zone).derivative(x) * self.perturbation.dy(t) - y * self.perturbation.dx(zone, x, t)
    }

    pub fn poisson_bracket(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let zone = Zone::of(x, y)?;
        Ok(self.zone_bracket(zone, x, y, t))
    }

    pub fn to_config(&self) -> SystemConfig {
        SystemConfig {
            potential_plus: self.v_plus.clone(),
            potential_minus: self.v_minus.clone(),
            perturbation: self.perturbation.kind.clone(),
            epsilon: self.epsilon,
            r: self.restitution,
            omega: self.perturbation.omega,
        }
    }
}

/// First hyperbolic saddle `(x±, 0)` of the zone, searched outward from the origin.
fn find_saddle(potential: &Potential, zone: Zone) -> Result<Saddle> {
    let s = zone.sign();
    let slope = |u: f64| s * potential.derivative(s * u);
    let mut lo = 0.0;
    let mut hi = None;
    let mut u: f64 = 0.0;
    while u < 1e4 {
        let step = 1e-3 * u.max(1.0);
        let next = u + step;
        if slope(next) <= 0.0 {
            lo = u;
            hi = Some(next);
            break;
        }
        u = next;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::InvalidSystem(format!("no saddle found in zone {zone} (potential never turns over)"))
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = s * 0.5 * (lo + hi);
    let curvature = potential.second_derivative(x);
    if curvature >= 0.0 {
        return Err(Error::InvalidSystem(format!("critical point at x = {x} in zone {zone} is not a saddle")));
    }
    Ok(Saddle { x, eigenvalue: (-curvature).sqrt() })
}

/// Serializable system description: `{ potential_plus, potential_minus, perturbation, epsilon, r, omega }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub potential_plus: Potential,
    pub potential_minus: Potential,
    pub perturbation: PerturbationKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_restitution")]
    pub r: f64,
    pub omega: f64,
}

fn default_restitution() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn linear_block(omega: f64) -> Self {
        TwoZoneSystem::linear_block(omega).to_config()
    }

    pub fn build(&self) -> Result<TwoZoneSystem> {
        TwoZoneSystem::new(
            self.potential_plus.clone(),
            self.potential_minus.clone(),
            Perturbation { omega: self.omega, kind: self.perturbation.clone() },
            self.epsilon,
            self.r,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSystem(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl TryFrom<&SystemConfig> for TwoZoneSystem {
    type Error = Error;

    fn try_from(config: &SystemConfig) -> Result<Self> {
        config.build()
    }
}
