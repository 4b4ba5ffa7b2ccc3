//! Problem parameters, regime validation, and derived exponents.
//!
//! The tuple `(d, a, alpha, mu)` is validated against the admissible regimes
//! of the underlying theory, and every exponent used by the other modules is
//! derived here.  The regime gates are sharp inequalities, so they are
//! evaluated in exact rational arithmetic: every finite `f64` is a dyadic
//! rational and converts losslessly, which means float drift can never flip
//! a gate.  Scaling-line membership checks (`is_admissible`) are the one
//! place a 1e-12 tolerance is needed, because derived exponents are
//! generally not dyadic.

use num::rational::BigRational;
use num::{BigInt, FromPrimitive};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParamsError {
    #[error("unsupported dimension d={0}; this build covers 3 <= d <= 6")]
    UnsupportedDimension(u32),
    #[error("nonlinearity power must be positive, got alpha={0}")]
    NonPositiveAlpha(f64),
    #[error("parameter {0} is not finite")]
    NonFinite(&'static str),
    #[error("regime invalid: {0}")]
    RegimeInvalid(String),
}

/// Sign of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "defocusing", alias = "+1")]
    Defocusing,
    #[serde(rename = "focusing", alias = "-1")]
    Focusing,
}

impl Sign {
    pub fn mu(self) -> f64 {
        match self {
            Sign::Defocusing => 1.0,
            Sign::Focusing => -1.0,
        }
    }

    pub fn from_mu(mu: i32) -> Option<Self> {
        match mu {
            1 => Some(Sign::Defocusing),
            -1 => Some(Sign::Focusing),
            _ => None,
        }
    }
}

/// The problem tuple `(d, a, alpha, mu)`; the single source of truth for all
/// derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Spatial dimension, 3..=6.
    pub d: u32,
    /// Inverse-square potential coupling.
    pub a: f64,
    /// Nonlinearity power.
    pub alpha: f64,
    /// Focusing / defocusing sign.
    pub mu: Sign,
}

impl ProblemSpec {
    /// Builds a spec, enforcing only the hard preconditions (dimension range
    /// and positivity of alpha).  Regime membership is reported separately by
    /// [`validate_regime`].
    pub fn new(d: u32, a: f64, alpha: f64, mu: Sign) -> Result<Self, ParamsError> {
        if !(3..=6).contains(&d) {
            return Err(ParamsError::UnsupportedDimension(d));
        }
        if !a.is_finite() {
            return Err(ParamsError::NonFinite("a"));
        }
        if !alpha.is_finite() {
            return Err(ParamsError::NonFinite("alpha"));
        }
        if alpha <= 0.0 {
            return Err(ParamsError::NonPositiveAlpha(alpha));
        }
        Ok(ProblemSpec { d, a, alpha, mu })
    }

    /// Hardy constant ((d-2)/2)^2.
    pub fn hardy(&self) -> f64 {
        let x = (self.d as f64 - 2.0) / 2.0;
        x * x
    }

    /// Heat-kernel parameter rho = (d-2)/2 - sqrt(((d-2)/2)^2 + a).
    pub fn rho_heat(&self) -> f64 {
        let nu = (self.d as f64 - 2.0) / 2.0;
        nu - (nu * nu + self.a).sqrt()
    }

    /// Critical regularity s_c = d/2 - 2/alpha.
    pub fn s_c(&self) -> f64 {
        self.d as f64 / 2.0 - 2.0 / self.alpha
    }

    /// sigma = 1/s_c - 1.
    pub fn sigma(&self) -> f64 {
        1.0 / self.s_c() - 1.0
    }

    /// Effective reduced-coordinate coupling a + (d-1)(d-3)/4.
    pub fn a_eff(&self) -> f64 {
        let d = self.d as f64;
        self.a + (d - 1.0) * (d - 3.0) / 4.0
    }
}

/// Flags for the admissible regimes, with one message per violated
/// constraint.  `main_theorem_ok` is the gate for the dichotomy/scattering
/// theorems; `critical_lwp_ok` is the weaker gate sufficient for the critical
/// local theory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    pub hardy_ok: bool,
    pub intercritical_ok: bool,
    pub main_theorem_ok: bool,
    pub critical_lwp_ok: bool,
    pub messages: Vec<String>,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite f64 converts to a rational")
}

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn frac(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Validates `(d, a, alpha)` against the admissible ranges by exact rational
/// arithmetic.  Equality in any strict gate counts as a violation and is
/// reported with an explicit "boundary" message.
pub fn validate_regime(spec: &ProblemSpec) -> Result<RegimeReport, ParamsError> {
    if !(3..=6).contains(&spec.d) {
        return Err(ParamsError::UnsupportedDimension(spec.d));
    }
    if spec.alpha <= 0.0 {
        return Err(ParamsError::NonPositiveAlpha(spec.alpha));
    }
    let d = spec.d as i64;
    let a = rat(spec.a);
    let alpha = rat(spec.alpha);
    let mut messages = Vec::new();

    // Hardy gate: a > -((d-2)/2)^2.
    let hardy = frac((d - 2) * (d - 2), 4);
    let hardy_bound = -hardy.clone();
    let hardy_ok = a > hardy_bound;
    if !hardy_ok {
        if a == hardy_bound {
            messages.push(format!(
                "a = -((d-2)/2)^2 = {} is a boundary case; the Hardy gate is strict",
                spec.a
            ));
        } else {
            messages.push(format!("a = {} violates a > -((d-2)/2)^2", spec.a));
        }
    }

    // Intercriticality: 4/d < alpha < 4/(d-2).
    let lo = frac(4, d);
    let hi = frac(4, d - 2);
    let intercritical_ok = alpha > lo && alpha < hi;
    if !intercritical_ok {
        if alpha == lo || alpha == hi {
            messages.push(format!(
                "alpha = {} sits on the boundary of the intercritical range (4/d, 4/(d-2))",
                spec.alpha
            ));
        } else {
            messages.push(format!(
                "alpha = {} is outside the intercritical range (4/d, 4/(d-2))",
                spec.alpha
            ));
        }
    }

    // Main-theorem gate, both branches.
    // Branch 1: d = 3 and 4/3 < alpha <= 2, with a > -((d-2)/2)^2.
    let branch1 = d == 3 && alpha > frac(4, 3) && alpha <= rat_int(2) && hardy_ok;
    // Branch 2: 3 <= d <= 6 and max(2/(d-2), 4/d) < alpha < 4/(d-2), with
    // a > -((d-2)/2)^2 + ((d-2)/2 - 1/alpha)^2.
    let alpha_lo2 = frac(2, d - 2).max(frac(4, d));
    let in_range2 = alpha > alpha_lo2 && alpha < hi;
    let branch2 = if in_range2 {
        let gap = frac(d - 2, 2) - alpha.recip();
        let bound2 = -hardy.clone() + gap.clone() * gap;
        a > bound2
    } else {
        false
    };
    let main_theorem_ok = branch1 || branch2;
    if !main_theorem_ok {
        messages.push(format!(
            "(d, a, alpha) = ({}, {}, {}) satisfies neither branch of the main-theorem range",
            spec.d, spec.a, spec.alpha
        ));
    }

    // Critical local-theory gate.
    // Branch A: 4/d < alpha < (d/(d+2)) * 4/(d-2): only the Hardy gate.
    // Branch B: (d/(d+2)) * 4/(d-2) <= alpha < 4/(d-2):
    //   a > -((d-2)/2)^2 + ((d-2)/2 - (1/alpha) * 2d/(d+2))^2.
    let split = frac(4 * d, (d + 2) * (d - 2));
    let critical_lwp_ok = if alpha > lo && alpha < split {
        hardy_ok
    } else if alpha >= split && alpha < hi {
        let gap = frac(d - 2, 2) - alpha.recip() * frac(2 * d, d + 2);
        let bound = -hardy + gap.clone() * gap;
        a > bound
    } else {
        false
    };
    if !critical_lwp_ok {
        messages.push(format!(
            "(d, a, alpha) = ({}, {}, {}) is outside the critical local-theory range",
            spec.d, spec.a, spec.alpha
        ));
    }

    Ok(RegimeReport {
        hardy_ok,
        intercritical_ok,
        main_theorem_ok,
        critical_lwp_ok,
        messages,
    })
}

/// Every derived exponent used by the rest of the crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exponents {
    pub s_c: f64,
    pub sigma: f64,
    pub hardy: f64,
    pub rho_heat: f64,
    pub q_0: f64,
    pub r_0: f64,
    /// Dual admissible pair (rho_dual, gamma).
    pub dual_pair: (f64, f64),
    /// Auxiliary exponents (q, r, q_1, r_1, r_2) from the persistence
    /// argument.
    pub aux: AuxExponents,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxExponents {
    pub q: f64,
    pub r: f64,
    pub q_1: f64,
    pub r_1: f64,
    pub r_2: f64,
}

/// Computes all derived exponents.  Requires the Hardy and intercriticality
/// gates to hold.
pub fn exponents(spec: &ProblemSpec) -> Result<Exponents, ParamsError> {
    let report = validate_regime(spec)?;
    if !(report.hardy_ok && report.intercritical_ok) {
        return Err(ParamsError::RegimeInvalid(report.messages.join("; ")));
    }
    let d = spec.d as f64;
    let alpha = spec.alpha;
    let q_0 = alpha * (d + 2.0) / 2.0;
    let r_0 = 2.0 * d * alpha * (d + 2.0) / (d * alpha * (d + 2.0) - 8.0);
    let rho_dual = alpha * (d + 2.0) / (2.0 * (alpha + 1.0));
    let gamma = 2.0 * alpha * d * (d + 2.0) / (alpha * d * (d + 6.0) - 8.0);
    let aux = AuxExponents {
        q: 4.0 * alpha / (alpha * (d - 2.0) - 2.0),
        r: d * alpha / (alpha + 1.0),
        q_1: 4.0 * alpha * alpha / (2.0 - alpha * (d - 4.0)),
        r_1: 2.0 * d * alpha * alpha / (d * alpha * alpha - 2.0 + alpha * (d - 4.0)),
        r_2: 2.0 * d * alpha * alpha / (d * alpha - 2.0),
    };
    Ok(Exponents {
        s_c: spec.s_c(),
        sigma: spec.sigma(),
        hardy: spec.hardy(),
        rho_heat: spec.rho_heat(),
        q_0,
        r_0,
        dual_pair: (rho_dual, gamma),
        aux,
    })
}

/// Strichartz admissibility: 2/q + d/r = d/2 with q, r >= 2 and
/// (q, r) != (2, 2).  Unlike the regime gates, this cannot be exact: derived
/// exponents like r_0 = 30/11 are not dyadic, so their f64 samples sit a
/// rounding error off the scaling line.  A 1e-12 tolerance absorbs that.
pub fn is_admissible(q: f64, r: f64, d: u32) -> bool {
    if q < 2.0 || r < 2.0 {
        return false;
    }
    if q == 2.0 && r == 2.0 {
        return false;
    }
    let q_term = if q.is_infinite() { 0.0 } else { 2.0 / q };
    let r_term = if r.is_infinite() { 0.0 } else { d as f64 / r };
    (q_term + r_term - d as f64 / 2.0).abs() < 1e-12
}

/// Checks that (rho_dual, gamma) is a dual admissible pair: the Hölder
/// conjugates satisfy 2/rho' + d/gamma' = d/2.
pub fn is_dual_admissible(rho_dual: f64, gamma: f64, d: u32) -> bool {
    let conj = |x: f64| x / (x - 1.0);
    is_admissible(conj(rho_dual), conj(gamma), d)
}

/// Direction of the Sobolev-space equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivDirection {
    /// |nabla|^s f controlled by L^{s/2} f.
    Forward,
    /// L^{s/2} f controlled by |nabla|^s f.
    Reverse,
}

/// Open interval of admissible 1/p; may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

/// Range of 1/p for which the Sobolev spaces defined by L_a and by -Delta are
/// equivalent at regularity s.
pub fn sobolev_equiv_range(s: f64, spec: &ProblemSpec, direction: EquivDirection) -> OpenInterval {
    assert!(s > 0.0 && s < 2.0, "equivalence range requires 0 < s < 2");
    let d = spec.d as f64;
    let rho = spec.rho_heat();
    let hi = (1.0f64).min((d - rho) / d);
    let lo = match direction {
        EquivDirection::Forward => (s + rho) / d,
        EquivDirection::Reverse => (s / d).max(rho / d),
    };
    OpenInterval { lo, hi }
}
