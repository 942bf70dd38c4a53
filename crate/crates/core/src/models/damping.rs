use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{c, C64, I, ONE, ZERO};

type CoeffFn = dyn Fn(C64) -> C64 + Send + Sync;

/// User-supplied coefficient functions of the generalized proportional model
/// `D(s) = f(s) M + g(s) K`.
pub struct GeneralizedDamping {
    pub f: Box<CoeffFn>,
    pub g: Box<CoeffFn>,
    pub f_prime: Box<CoeffFn>,
    pub g_prime: Box<CoeffFn>,
    /// `Some((f, g))` when both coefficients are constant.
    pub constant: Option<(C64, C64)>,
    /// Whether `f(conj s) = conj f(s)` and likewise for `g`.
    pub conjugate_symmetric: bool,
}

impl GeneralizedDamping {
    pub fn constant(f0: C64, g0: C64) -> Self {
        GeneralizedDamping {
            f: Box::new(move |_| f0),
            g: Box::new(move |_| g0),
            f_prime: Box::new(|_| ZERO),
            g_prime: Box::new(|_| ZERO),
            constant: Some((f0, g0)),
            conjugate_symmetric: f0.im == 0.0 && g0.im == 0.0,
        }
    }
}

/// Damping model of a second-order system.
#[derive(Clone)]
pub enum DampingSpec {
    /// `D = αM + βK`.
    Rayleigh { alpha: f64, beta: f64 },
    /// `D(s) = (iη/s) K`.
    Structural { eta: f64 },
    Generalized(Arc<GeneralizedDamping>),
}

impl fmt::Debug for DampingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DampingSpec::Rayleigh { alpha, beta } => {
                write!(f, "Rayleigh {{ alpha: {alpha:e}, beta: {beta:e} }}")
            }
            DampingSpec::Structural { eta } => write!(f, "Structural {{ eta: {eta:e} }}"),
            DampingSpec::Generalized(g) => write!(
                f,
                "Generalized {{ constant: {:?}, conjugate_symmetric: {} }}",
                g.constant, g.conjugate_symmetric
            ),
        }
    }
}

impl PartialEq for DampingSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                DampingSpec::Rayleigh { alpha: a, beta: b },
                DampingSpec::Rayleigh { alpha: a2, beta: b2 },
            ) => a == a2 && b == b2,
            (DampingSpec::Structural { eta }, DampingSpec::Structural { eta: e2 }) => eta == e2,
            (DampingSpec::Generalized(a), DampingSpec::Generalized(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl DampingSpec {
    pub fn rayleigh(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "Rayleigh coefficients must be finite and nonnegative, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(DampingSpec::Rayleigh { alpha, beta })
    }

    pub fn structural(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "structural loss factor must be finite and nonnegative, got {eta}"
            )));
        }
        Ok(DampingSpec::Structural { eta })
    }

    pub fn undamped() -> Self {
        DampingSpec::Rayleigh {
            alpha: 0.0,
            beta: 0.0,
        }
    }

    /// Constant `(f, g)` when the coefficients do not depend on `s`.
    pub fn constant_coefficients(&self) -> Option<(C64, C64)> {
        match self {
            DampingSpec::Rayleigh { alpha, beta } => Some((c(*alpha, 0.0), c(*beta, 0.0))),
            DampingSpec::Structural { .. } => None,
            DampingSpec::Generalized(g) => g.constant,
        }
    }

    /// Whether samples at mirrored nodes are complex conjugates for real
    /// system matrices.
    pub fn is_conjugate_symmetric(&self) -> bool {
        match self {
            DampingSpec::Rayleigh { .. } => true,
            DampingSpec::Structural { eta } => *eta == 0.0,
            DampingSpec::Generalized(g) => g.conjugate_symmetric,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DampingSpec::Rayleigh { .. } => "rayleigh",
            DampingSpec::Structural { .. } => "structural",
            DampingSpec::Generalized(_) => "generalized",
        }
    }

    /// Coefficient values `(f(s), g(s))`.
    pub fn fg(&self, s: C64) -> Result<(C64, C64)> {
        match self {
            DampingSpec::Rayleigh { alpha, beta } => Ok((c(*alpha, 0.0), c(*beta, 0.0))),
            DampingSpec::Structural { eta } => {
                if s == ZERO {
                    return Err(Error::DomainError(s));
                }
                Ok((ZERO, I * *eta / s))
            }
            DampingSpec::Generalized(g) => Ok(((g.f)(s), (g.g)(s))),
        }
    }

    fn fg_prime(&self, s: C64) -> Result<(C64, C64)> {
        match self {
            DampingSpec::Rayleigh { .. } => Ok((ZERO, ZERO)),
            DampingSpec::Structural { eta } => {
                if s == ZERO {
                    return Err(Error::DomainError(s));
                }
                Ok((ZERO, -I * *eta / (s * s)))
            }
            DampingSpec::Generalized(g) => Ok(((g.f_prime)(s), (g.g_prime)(s))),
        }
    }
}

/// Scalar coefficient functions `d = 1 + s g`, `n = s² + s f`, `h = n/d` and
/// optionally their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEval {
    pub s: C64,
    pub f: C64,
    pub g: C64,
    pub n: C64,
    pub d: C64,
    pub h: C64,
    pub n_prime: Option<C64>,
    pub d_prime: Option<C64>,
    pub h_prime: Option<C64>,
}

pub fn eval_coefficients(damping: &DampingSpec, s: C64, with_derivatives: bool) -> Result<CoefficientEval> {
    let (f, g) = damping.fg(s)?;
    let (n, d) = match damping {
        // Exact forms avoid the rounding of s·(iη/s).
        DampingSpec::Structural { eta } => (s * s, c(1.0, *eta)),
        _ => (s * s + s * f, ONE + s * g),
    };
    if d == ZERO || !d.is_finite() {
        return Err(Error::DivisionByZero(s));
    }
    let h = n / d;
    let (n_prime, d_prime, h_prime) = if with_derivatives {
        let (fp, gp) = damping.fg_prime(s)?;
        let (np, dp) = match damping {
            DampingSpec::Structural { .. } => (s * 2.0, ZERO),
            _ => (s * 2.0 + f + s * fp, g + s * gp),
        };
        let hp = (np * d - n * dp) / (d * d);
        (Some(np), Some(dp), Some(hp))
    } else {
        (None, None, None)
    };
    Ok(CoefficientEval {
        s,
        f,
        g,
        n,
        d,
        h,
        n_prime,
        d_prime,
        h_prime,
    })
}
