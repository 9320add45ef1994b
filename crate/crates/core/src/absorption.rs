//! Absorption functions `B(s)` and diffusivities `B'(s)` for the two
//! supported parameterisations.
//!
//! Both families are compactly supported on the saturation interval `[a, b]`:
//! `B'` vanishes outside it and `B` is flat above `b`.
//!
//! * **NN**: parabolic diffusivity with peak `c` at the midpoint of the support,
//!   `B'(s) = max(0, -4c(a - s)(b - s) / (a - b)²)`, and its cubic antiderivative.
//! * **BkP**: diffusivity assembled from Darcy's law with a power-law relative
//!   permeability `k(s) = K_s ((s - a)/(b - a))^γ` and capillary pressure
//!   `P_c(s) = d (s - b)² / (s - a)^α`, so that `B' = -(k/μ) P_c'`. Only the
//!   product `d̃ = K_s d` is identifiable and `μ` enters as `d̃/μ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Saturation excursions outside `[0, 1]` up to this size are clipped.
pub const SATURATION_CLIP_TOLERANCE: f64 = 1e-12;

/// Floor on `s - a` when evaluating `(s - a)^p` near the residual saturation.
const MIN_LOG_ARGUMENT: f64 = 1e-300;

/// Safety inflation applied to the numerically located BkP maximum before it
/// enters a CFL bound.
pub const BKP_MAX_INFLATION: f64 = 1.001;

const MAX_SEARCH_GRID: usize = 2048;
const GOLDEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbsorptionError {
    #[error("saturation {0} is outside [0, 1]")]
    SaturationOutOfRange(f64),
    #[error("invalid {model} parameters: {reason}")]
    InvalidParameters { model: &'static str, reason: String },
}

/// Natalini–Nitsch parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnParams {
    /// Residual saturation.
    pub a: f64,
    /// Maximal saturation.
    pub b: f64,
    /// Maximum diffusivity, attained at `(a + b) / 2`.
    pub c: f64,
}

impl NnParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, AbsorptionError> {
        let p = Self { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AbsorptionError> {
        check_support("NN", self.a, self.b)?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("NN", format!("c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// `B'(s)` without range checks; `s` must already lie in `[0, 1]`.
    #[inline]
    pub fn b_prime_unchecked(&self, s: f64) -> f64 {
        let Self { a, b, c } = *self;
        let v = -4.0 * c * (a - s) * (b - s) / ((a - b) * (a - b));
        v.max(0.0)
    }

    /// `B(s)` without range checks; `s` must already lie in `[0, 1]`.
    #[inline]
    pub fn b_unchecked(&self, s: f64) -> f64 {
        let Self { a, b, c } = *self;
        if s < a {
            0.0
        } else if s <= b {
            let d = a - s;
            -(2.0 * c * d * d * (a - 3.0 * b + 2.0 * s)) / (3.0 * (a - b) * (a - b))
        } else {
            self.plateau()
        }
    }

    /// `B(b) = (2/3) c (b - a)`.
    pub fn plateau(&self) -> f64 {
        2.0 / 3.0 * self.c * (self.b - self.a)
    }
}

/// BkP parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkpParams {
    /// Residual saturation.
    pub a: f64,
    /// Maximal saturation.
    pub b: f64,
    /// Effective capillary-permeability coefficient `K_s · d`.
    pub d_tilde: f64,
    /// Capillary-pressure exponent, in `(0, 1)`.
    pub alpha: f64,
    /// Permeability exponent, `> alpha + 1`.
    pub gamma: f64,
    /// Fluid viscosity; only `d_tilde / mu` matters.
    #[serde(default = "default_viscosity")]
    pub mu: f64,
}

fn default_viscosity() -> f64 {
    1.0
}

impl BkpParams {
    pub fn new(
        a: f64,
        b: f64,
        d_tilde: f64,
        alpha: f64,
        gamma: f64,
        mu: f64,
    ) -> Result<Self, AbsorptionError> {
        let p = Self {
            a,
            b,
            d_tilde,
            alpha,
            gamma,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AbsorptionError> {
        check_support("BkP", self.a, self.b)?;
        if !(self.d_tilde > 0.0 && self.d_tilde.is_finite()) {
            return Err(invalid(
                "BkP",
                format!("d_tilde must be positive, got {}", self.d_tilde),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(
                "BkP",
                format!("alpha must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if !(self.gamma - self.alpha - 1.0 > 0.0) || !self.gamma.is_finite() {
            return Err(invalid(
                "BkP",
                format!(
                    "gamma must exceed alpha + 1, got gamma = {} with alpha = {}",
                    self.gamma, self.alpha
                ),
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid(
                "BkP",
                format!("mu must be positive, got {}", self.mu),
            ));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.d_tilde / self.mu / (self.b - self.a).powf(self.gamma)
    }

    /// `B'_kP(s)` without range checks.
    #[inline]
    pub fn b_prime_unchecked(&self, s: f64) -> f64 {
        let Self {
            a, b, alpha, gamma, ..
        } = *self;
        if s <= a || s >= b {
            return 0.0;
        }
        let v = self.scale()
            * pow_above(s - a, gamma - alpha - 1.0)
            * (s - b)
            * (2.0 * a + s * (alpha - 2.0) - alpha * b);
        v.max(0.0)
    }

    /// `B_kP(s)` without range checks.
    #[inline]
    pub fn b_unchecked(&self, s: f64) -> f64 {
        if s <= self.a {
            0.0
        } else if s < self.b {
            self.antiderivative(s - self.a)
        } else {
            self.plateau()
        }
    }

    /// Plateau value `B_kP(b)`.
    pub fn plateau(&self) -> f64 {
        let Self {
            a,
            b,
            d_tilde,
            alpha,
            gamma,
            mu,
        } = *self;
        let g = gamma - alpha;
        let denominator = g * (g + 1.0) * (g + 2.0);
        2.0 * d_tilde * gamma * (b - a).powf(2.0 - alpha) / (mu * denominator)
    }

    /// Exact antiderivative of `B'_kP` from `a`, in the shifted variable `y = s - a`.
    ///
    /// With `δ = b - a` the integrand is
    /// `(d̃/μ) δ^-γ y^(γ-α-1) [(α-2) y² - 2(α-1) δ y + α δ²]`,
    /// integrated term by term.
    fn antiderivative(&self, y: f64) -> f64 {
        let Self {
            a, b, alpha, gamma, ..
        } = *self;
        let delta = b - a;
        let g = gamma - alpha;
        let bracket = (alpha - 2.0) * y * y / (g + 2.0)
            - 2.0 * (alpha - 1.0) * delta * y / (g + 1.0)
            + alpha * delta * delta / g;
        self.scale() * pow_above(y, g) * bracket
    }

    /// Relative permeability `k(s)` for a given saturated permeability `K_s`.
    pub fn permeability(&self, k_sat: f64, s: f64) -> f64 {
        if s <= self.a {
            0.0
        } else if s < self.b {
            k_sat * ((s - self.a) / (self.b - self.a)).powf(self.gamma)
        } else {
            k_sat
        }
    }

    /// Capillary pressure `P_c(s)` on `(a, b]` for a given coefficient `d`.
    pub fn capillary_pressure(&self, d: f64, s: f64) -> f64 {
        d * (s - self.b).powi(2) / (s - self.a).powf(self.alpha)
    }

    /// `P_c'(s)` on `(a, b]` for a given coefficient `d`.
    pub fn capillary_pressure_derivative(&self, d: f64, s: f64) -> f64 {
        let Self { a, b, alpha, .. } = *self;
        -d * (s - b) * (2.0 * a - 2.0 * s - alpha * b + alpha * s) / (s - a).powf(alpha + 1.0)
    }
}

/// `x^p` for `x > 0` computed in the log domain with a floor on `x`.
#[inline]
fn pow_above(x: f64, p: f64) -> f64 {
    (p * x.max(MIN_LOG_ARGUMENT).ln()).exp()
}

fn check_support(model: &'static str, a: f64, b: f64) -> Result<(), AbsorptionError> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(invalid(
            model,
            format!("need 0 <= a < b <= 1, got a = {a}, b = {b}"),
        ));
    }
    Ok(())
}

fn invalid(model: &'static str, reason: String) -> AbsorptionError {
    AbsorptionError::InvalidParameters { model, reason }
}

/// Clips small floating-point drift back into `[0, 1]`.
pub fn clip_saturation(s: f64) -> Result<f64, AbsorptionError> {
    let clipped = s.clamp(0.0, 1.0);
    if (s - clipped).abs() <= SATURATION_CLIP_TOLERANCE {
        Ok(clipped)
    } else {
        Err(AbsorptionError::SaturationOutOfRange(s))
    }
}

pub fn nn_b_prime(p: &NnParams, s: f64) -> Result<f64, AbsorptionError> {
    Ok(p.b_prime_unchecked(clip_saturation(s)?))
}

pub fn nn_b(p: &NnParams, s: f64) -> Result<f64, AbsorptionError> {
    Ok(p.b_unchecked(clip_saturation(s)?))
}

pub fn bkp_b_prime(p: &BkpParams, s: f64) -> Result<f64, AbsorptionError> {
    p.validate()?;
    Ok(p.b_prime_unchecked(clip_saturation(s)?))
}

pub fn bkp_b(p: &BkpParams, s: f64) -> Result<f64, AbsorptionError> {
    p.validate()?;
    Ok(p.b_unchecked(clip_saturation(s)?))
}

/// Diffusivity parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AbsorptionModel {
    Nn(NnParams),
    Bkp(BkpParams),
}

impl AbsorptionModel {
    pub fn validate(&self) -> Result<(), AbsorptionError> {
        match self {
            Self::Nn(p) => p.validate(),
            Self::Bkp(p) => p.validate(),
        }
    }

    pub fn b(&self, s: f64) -> Result<f64, AbsorptionError> {
        let s = clip_saturation(s)?;
        Ok(self.b_unchecked(s))
    }

    pub fn b_prime(&self, s: f64) -> Result<f64, AbsorptionError> {
        let s = clip_saturation(s)?;
        Ok(self.b_prime_unchecked(s))
    }

    #[inline]
    pub fn b_unchecked(&self, s: f64) -> f64 {
        match self {
            Self::Nn(p) => p.b_unchecked(s),
            Self::Bkp(p) => p.b_unchecked(s),
        }
    }

    #[inline]
    pub fn b_prime_unchecked(&self, s: f64) -> f64 {
        match self {
            Self::Nn(p) => p.b_prime_unchecked(s),
            Self::Bkp(p) => p.b_prime_unchecked(s),
        }
    }

    /// Support `[a, b]` of the diffusivity.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Nn(p) => (p.a, p.b),
            Self::Bkp(p) => (p.a, p.b),
        }
    }

    /// Upper bound on `B'` suitable for a CFL restriction.
    pub fn cfl_diffusivity(&self) -> f64 {
        match self {
            Self::Nn(p) => p.c,
            Self::Bkp(_) => max_diffusivity(self) * BKP_MAX_INFLATION,
        }
    }
}

/// Maximum of `B'` over `[a, b]`.
///
/// Exact for NN. For BkP the maximum is located on a uniform grid and polished
/// by golden-section search on the two cells around the grid argmax.
pub fn max_diffusivity(model: &AbsorptionModel) -> f64 {
    match model {
        AbsorptionModel::Nn(p) => p.c,
        AbsorptionModel::Bkp(p) => {
            let f = |s: f64| p.b_prime_unchecked(s);
            let (a, b) = (p.a, p.b);
            let h = (b - a) / MAX_SEARCH_GRID as f64;
            let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
            for i in 0..=MAX_SEARCH_GRID {
                let v = f(a + h * i as f64);
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            let lo = a + h * best_i.saturating_sub(1) as f64;
            let hi = (a + h * (best_i + 1) as f64).min(b);
            let (_, refined) = golden_section_max(f, lo, hi, GOLDEN_TOLERANCE);
            refined.max(best)
        }
    }
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x).max(f1).max(f2))
}
