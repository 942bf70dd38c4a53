//! Quadrature rules on the imaginary axis.
//!
//! A rule stores real frequencies `ω` (the nodes are `iω`) and the square
//! roots `ρ` of the quadrature weights. Symmetric rules list each frequency
//! next to its negative, `[−ω₁, ω₁, −ω₂, ω₂, …]`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::models::{eval_coefficients, DampingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleSide {
    Left,
    Right,
}

impl RuleSide {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleSide::Left => "left",
            RuleSide::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    freqs: Vec<f64>,
    weights: Vec<f64>,
    side: RuleSide,
}

impl QuadratureRule {
    pub fn new(freqs: Vec<f64>, weights: Vec<f64>, side: RuleSide) -> Result<Self> {
        if freqs.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies but {} weights",
                freqs.len(),
                weights.len()
            )));
        }
        if freqs.is_empty() {
            return Err(Error::InvalidParams("quadrature rule has no nodes".into()));
        }
        if let Some(i) = freqs.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidParams(format!("frequency {i} is not finite")));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::ZeroWeight(i));
        }
        Ok(QuadratureRule {
            freqs,
            weights,
            side,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn side(&self) -> RuleSide {
        self.side
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Node `iω_j`.
    pub fn node(&self, j: usize) -> C64 {
        c(0.0, self.freqs[j])
    }

    pub fn nodes(&self) -> Vec<C64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Whether consecutive entries form mirrored pairs with equal weights.
    pub fn is_pair_ordered(&self) -> bool {
        self.len() % 2 == 0
            && self.freqs.chunks(2).zip(self.weights.chunks(2)).all(|(f, w)| {
                f[0] == -f[1] && f[0] != 0.0 && w[0] == w[1]
            })
    }

    /// Same weights with negated frequencies, on the other side.
    pub fn negated(&self) -> Self {
        QuadratureRule {
            freqs: self.freqs.iter().map(|w| -w).collect(),
            weights: self.weights.clone(),
            side: match self.side {
                RuleSide::Left => RuleSide::Right,
                RuleSide::Right => RuleSide::Left,
            },
        }
    }

    pub fn with_side(mut self, side: RuleSide) -> Self {
        self.side = side;
        self
    }

    /// Index of the node at frequency `−ω_j`, if present.
    pub fn mirror_index(&self, j: usize) -> Option<usize> {
        let target = -self.freqs[j];
        self.freqs.iter().position(|&w| w == target)
    }
}

fn check_range(omega_min: f64, omega_max: f64) -> Result<()> {
    if !(omega_min.is_finite() && omega_max.is_finite() && omega_min > 0.0 && omega_min < omega_max) {
        return Err(Error::InvalidRange(format!(
            "need 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
        )));
    }
    Ok(())
}

/// `count` logarithmically spaced points spanning `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == count - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Trapezoid weights `Δ_j/(2π)` for abscissae `pos` (half-gaps at the
/// endpoints); a single abscissa receives the full span `hi − lo`.
fn trapezoid_sq_weights(pos: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let k = pos.len();
    let two_pi = 2.0 * std::f64::consts::PI;
    if k == 1 {
        return vec![(hi - lo) / two_pi];
    }
    (0..k)
        .map(|j| {
            let left = if j == 0 { pos[j] } else { pos[j - 1] };
            let right = if j + 1 == k { pos[j] } else { pos[j + 1] };
            0.5 * (right - left) / two_pi
        })
        .collect()
}

fn mirrored(pos: &[f64], sq_weights: &[f64], side: RuleSide) -> Result<QuadratureRule> {
    let mut freqs = Vec::with_capacity(2 * pos.len());
    let mut weights = Vec::with_capacity(2 * pos.len());
    for (&w, &q) in pos.iter().zip(sq_weights) {
        let rho = q.sqrt();
        freqs.extend([-w, w]);
        weights.extend([rho, rho]);
    }
    QuadratureRule::new(freqs, weights, side)
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "node count must be even and at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Exponential trapezoidal rule with `n` nodes: `n/2` log-spaced positive
/// frequencies in `[omega_min, omega_max]`, mirrored and pair ordered.
pub fn exp_trapezoid(omega_min: f64, omega_max: f64, n: usize, side: RuleSide) -> Result<QuadratureRule> {
    check_range(omega_min, omega_max)?;
    check_even(n)?;
    let pos = logspace(omega_min, omega_max, n / 2);
    let q = trapezoid_sq_weights(&pos, omega_min, omega_max);
    mirrored(&pos, &q, side)
}

/// Interleaved left and right rules with `n` nodes each.
///
/// `n` log-spaced positive frequencies cover `[omega_min, omega_max]`; the
/// first, third, … go to the right rule and the second, fourth, … to the left
/// rule. Each rule is weighted by the trapezoid rule on its own abscissae and
/// then mirrored, so the two node sets are disjoint.
pub fn interleave(omega_min: f64, omega_max: f64, n: usize) -> Result<(QuadratureRule, QuadratureRule)> {
    check_range(omega_min, omega_max)?;
    check_even(n)?;
    let all = logspace(omega_min, omega_max, n);
    let right: Vec<f64> = all.iter().step_by(2).copied().collect();
    let left: Vec<f64> = all.iter().skip(1).step_by(2).copied().collect();
    let qr = trapezoid_sq_weights(&right, omega_min, omega_max);
    let ql = trapezoid_sq_weights(&left, omega_min, omega_max);
    Ok((mirrored(&left, &ql, RuleSide::Left)?, mirrored(&right, &qr, RuleSide::Right)?))
}

/// One violated hypothesis of the general data formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroRightNode { j: usize },
    LeftCoefficient { k: usize, reason: String },
    RightCoefficient { j: usize, reason: String },
    DZeroLeft { k: usize },
    DZeroRight { j: usize },
    HCollision { k: usize, j: usize, gap: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroRightNode { j } => write!(f, "right node {j} is zero (zeta_j != 0 required)"),
            Violation::LeftCoefficient { k, reason } => write!(f, "left node {k}: {reason}"),
            Violation::RightCoefficient { j, reason } => write!(f, "right node {j}: {reason}"),
            Violation::DZeroLeft { k } => write!(f, "d(i theta_{k}) = 0"),
            Violation::DZeroRight { j } => write!(f, "d(i zeta_{j}) = 0"),
            Violation::HCollision { k, j, gap } => write!(
                f,
                "h(i theta_{k}) = h(i zeta_{j}) (relative gap {gap:.3e})"
            ),
        }
    }
}

/// Relative threshold below which `h(iθ_k)` and `h(iζ_j)` count as equal.
pub const H_COLLISION_TOL: f64 = 1e-12;

/// Relative distance used in the collision test.
pub fn h_gap(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

/// Checks the hypotheses of the general data formulas; an empty list means
/// assembly is well posed.
pub fn validate_for_general_assembly(
    left: &QuadratureRule,
    right: &QuadratureRule,
    damping: &DampingSpec,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let eval = |s: C64| eval_coefficients(damping, s, false);
    let mut hl = Vec::with_capacity(left.len());
    for k in 0..left.len() {
        match eval(left.node(k)) {
            Ok(co) => hl.push(Some(co.h)),
            Err(Error::DivisionByZero(_)) => {
                out.push(Violation::DZeroLeft { k });
                hl.push(None);
            }
            Err(e) => {
                out.push(Violation::LeftCoefficient {
                    k,
                    reason: e.to_string(),
                });
                hl.push(None);
            }
        }
    }
    let mut hr = Vec::with_capacity(right.len());
    for j in 0..right.len() {
        if right.freqs()[j] == 0.0 {
            out.push(Violation::ZeroRightNode { j });
        }
        match eval(right.node(j)) {
            Ok(co) => hr.push(Some(co.h)),
            Err(Error::DivisionByZero(_)) => {
                out.push(Violation::DZeroRight { j });
                hr.push(None);
            }
            Err(e) => {
                if right.freqs()[j] != 0.0 {
                    out.push(Violation::RightCoefficient {
                        j,
                        reason: e.to_string(),
                    });
                }
                hr.push(None);
            }
        }
    }
    for (k, a) in hl.iter().enumerate() {
        let Some(a) = a else { continue };
        for (j, b) in hr.iter().enumerate() {
            let Some(b) = b else { continue };
            let gap = h_gap(*a, *b);
            if gap < H_COLLISION_TOL {
                out.push(Violation::HCollision { k, j, gap });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_node_rule_on_decade() {
        let r = exp_trapezoid(1.0, 10.0, 4, RuleSide::Right).unwrap();
        assert_eq!(r.freqs(), &[-1.0, 1.0, -10.0, 10.0]);
        assert!(r.is_pair_ordered());
        let q = 4.5 / (2.0 * std::f64::consts::PI);
        for &w in r.weights() {
            assert!((w * w - q).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_positive_and_paired() {
        let r = exp_trapezoid(1e-3, 1e1, 50, RuleSide::Left).unwrap();
        assert_eq!(r.len(), 50);
        assert!(r.weights().iter().all(|&w| w > 0.0));
        assert!(r.is_pair_ordered());
    }

    #[test]
    fn single_pair_rule() {
        let r = exp_trapezoid(2.0, 5.0, 2, RuleSide::Right).unwrap();
        assert_eq!(r.freqs(), &[-2.0, 2.0]);
        let q = 3.0 / (2.0 * std::f64::consts::PI);
        assert!((r.weights()[0].powi(2) - q).abs() < 1e-15);
    }

    #[test]
    fn refinement_of_weight_mass() {
        let mut prev: Option<f64> = None;
        for n in [8, 16, 32, 64] {
            let r = exp_trapezoid(1.0, 100.0, n, RuleSide::Right).unwrap();
            let total: f64 = r.weights().iter().map(|w| w * w).sum();
            // Mirrored trapezoid integrates 1 over [−100,−1] ∪ [1,100].
            let exact = 2.0 * 99.0 / (2.0 * std::f64::consts::PI);
            assert!((total - exact).abs() < 1e-12 * exact);
            if let Some(p) = prev {
                assert!((total - p).abs() < 1e-12);
            }
            prev = Some(total);
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(exp_trapezoid(0.0, 1.0, 4, RuleSide::Left), Err(Error::InvalidRange(_))));
        assert!(matches!(exp_trapezoid(2.0, 1.0, 4, RuleSide::Left), Err(Error::InvalidRange(_))));
        assert!(exp_trapezoid(1.0, 2.0, 3, RuleSide::Left).is_err());
        assert!(interleave(1.0, 2.0, 0).is_err());
        assert!(matches!(
            QuadratureRule::new(vec![1.0], vec![0.0], RuleSide::Left),
            Err(Error::ZeroWeight(0))
        ));
    }

    #[test]
    fn interleaved_rules_are_disjoint() {
        let (l, r) = interleave(1.0, 1000.0, 2).unwrap();
        assert_eq!(r.freqs(), &[-1.0, 1.0]);
        assert_eq!(l.freqs(), &[-1000.0, 1000.0]);
        let (l, r) = interleave(1e-3, 1e1, 20).unwrap();
        assert_eq!((l.len(), r.len()), (20, 20));
        assert!(l.is_pair_ordered() && r.is_pair_ordered());
        for a in l.freqs() {
            assert!(!r.freqs().contains(a));
        }
        let mut union: Vec<f64> = l.freqs().iter().chain(r.freqs()).copied().filter(|w| *w > 0.0).collect();
        union.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(union, logspace(1e-3, 1e1, 20));
    }

    #[test]
    fn undamped_even_h_collision() {
        let left = QuadratureRule::new(vec![2.0], vec![1.0], RuleSide::Left).unwrap();
        let right = QuadratureRule::new(vec![-2.0, 2.0], vec![1.0, 1.0], RuleSide::Right).unwrap();
        let v = validate_for_general_assembly(&left, &right, &DampingSpec::undamped());
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| matches!(x, Violation::HCollision { k: 0, .. })));
    }

    #[test]
    fn zero_right_node_flagged() {
        let left = QuadratureRule::new(vec![3.0], vec![1.0], RuleSide::Left).unwrap();
        let right = QuadratureRule::new(vec![0.0], vec![1.0], RuleSide::Right).unwrap();
        let v = validate_for_general_assembly(&left, &right, &DampingSpec::undamped());
        assert!(v.contains(&Violation::ZeroRightNode { j: 0 }));
    }

    #[test]
    fn interleaved_rayleigh_is_well_posed() {
        let (l, r) = interleave(1e-3, 1e1, 40).unwrap();
        let d = DampingSpec::rayleigh(0.002, 0.002).unwrap();
        assert!(validate_for_general_assembly(&l, &r, &d).is_empty());
    }

    #[test]
    fn negation_and_mirror() {
        let r = exp_trapezoid(1.0, 4.0, 6, RuleSide::Right).unwrap();
        let l = r.negated();
        assert_eq!(l.side(), RuleSide::Left);
        assert_eq!(l.freqs()[1], -r.freqs()[1]);
        for j in 0..r.len() {
            let m = r.mirror_index(j).unwrap();
            assert_eq!(r.freqs()[m], -r.freqs()[j]);
        }
    }
}
