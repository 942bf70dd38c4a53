//! Relative error measures between sampled transfer functions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::models::{eval_transfer, SecondOrderSystem};
use crate::quadrature::logspace;

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Linear,
}

/// Strictly increasing positive frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    spacing: Spacing,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::InvalidParams("frequency grid is empty".into()));
        }
        if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidRange("grid frequencies must be positive and finite".into()));
        }
        if omegas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidRange("grid frequencies must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { omegas, spacing })
    }

    pub fn log(lo: f64, hi: f64, count: usize) -> Result<Self> {
        check(lo, hi, count)?;
        FrequencyGrid::new(logspace(lo, hi, count), Spacing::Log)
    }

    pub fn linear(lo: f64, hi: f64, count: usize) -> Result<Self> {
        check(lo, hi, count)?;
        let omegas = if count == 1 {
            vec![lo]
        } else {
            (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
        };
        FrequencyGrid::new(omegas, Spacing::Linear)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

fn check(lo: f64, hi: f64, count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidParams("grid needs at least one point".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::InvalidRange(format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// `G(iω)` of the full model at every grid frequency.
pub fn sample_system(sys: &SecondOrderSystem, grid: &FrequencyGrid) -> Result<Vec<CMat>> {
    grid.omegas().par_iter().map(|&w| eval_transfer(sys, c(0.0, w))).collect()
}

fn check_lengths(reference: &[CMat], test: &[CMat]) -> Result<()> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} reference samples against {} test samples",
            reference.len(),
            test.len()
        )));
    }
    for (k, (a, b)) in reference.iter().zip(test).enumerate() {
        if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!("sample {k} shapes differ")));
        }
    }
    Ok(())
}

/// Spectral norms `(‖G(iω_k)‖₂, ‖G̃(iω_k)‖₂, ‖G(iω_k) − G̃(iω_k)‖₂)`.
pub fn pointwise_norms(reference: &[CMat], test: &[CMat]) -> Result<Vec<(f64, f64, f64)>> {
    check_lengths(reference, test)?;
    reference
        .par_iter()
        .zip(test)
        .map(|(a, b)| {
            let diff = a - b;
            Ok((
                linalg::norm2(a.as_ref())?,
                linalg::norm2(b.as_ref())?,
                linalg::norm2(diff.as_ref())?,
            ))
        })
        .collect()
}

/// `‖G − G̃‖₂ / ‖G‖₂` at every point.
pub fn pointwise_relerr(reference: &[CMat], test: &[CMat]) -> Result<Vec<f64>> {
    pointwise_norms(reference, test)?
        .into_iter()
        .enumerate()
        .map(|(k, (r, _, d))| if r > 0.0 { Ok(d / r) } else { Err(Error::ZeroReference(k)) })
        .collect()
}

/// `max_k ‖G − G̃‖₂ / max_k ‖G‖₂`.
pub fn relerr_hinf(reference: &[CMat], test: &[CMat]) -> Result<f64> {
    let norms = pointwise_norms(reference, test)?;
    let num = norms.iter().map(|t| t.2).fold(0.0, f64::max);
    let den = norms.iter().map(|t| t.0).fold(0.0, f64::max);
    if den == 0.0 {
        return Err(Error::ZeroReference(0));
    }
    Ok(num / den)
}

/// `sqrt(Σ_k ‖G − G̃‖_F² / Σ_k ‖G‖_F²)`.
pub fn relerr_h2(reference: &[CMat], test: &[CMat]) -> Result<f64> {
    check_lengths(reference, test)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in reference.iter().zip(test) {
        num += linalg::frob((a - b).as_ref()).powi(2);
        den += linalg::frob(a.as_ref()).powi(2);
    }
    if den == 0.0 {
        return Err(Error::ZeroReference(0));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, C64};
    use faer::Mat;

    fn scalar(v: C64) -> CMat {
        Mat::from_fn(1, 1, |_, _| v)
    }

    fn g(s: C64, k: f64) -> CMat {
        scalar(1.0 / (s * s + k))
    }

    #[test]
    fn identical_maps_give_zero() {
        let a: Vec<CMat> = (1..6).map(|k| g(c(0.0, k as f64 * 0.7), 1.0)).collect();
        assert!(pointwise_relerr(&a, &a).unwrap().iter().all(|&e| e == 0.0));
        assert_eq!(relerr_hinf(&a, &a).unwrap(), 0.0);
        assert_eq!(relerr_h2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn zero_test_map_gives_one() {
        let a: Vec<CMat> = (1..6).map(|k| from_real_rows(2, 1, &[k as f64, -1.0])).collect();
        let z: Vec<CMat> = a.iter().map(|_| Mat::zeros(2, 1)).collect();
        assert!(pointwise_relerr(&a, &z).unwrap().iter().all(|&e| (e - 1.0).abs() < 1e-15));
        assert!((relerr_h2(&a, &z).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_pointwise_value() {
        let s = c(0.0, 2.0);
        let e = pointwise_relerr(&[g(s, 1.0)], &[g(s, 1.1)]).unwrap()[0];
        let want = ((-1.0 / 3.0) + 1.0 / 2.9f64).abs() * 3.0;
        assert!((e - want).abs() < 1e-14);
    }

    #[test]
    fn scaled_map_gives_epsilon() {
        let a: Vec<CMat> = (1..9).map(|k| g(c(0.0, k as f64 * 0.3), 1.0)).collect();
        let b: Vec<CMat> = a.iter().map(|m| linalg::scaled(m.as_ref(), c(1.01, 0.0))).collect();
        assert!((relerr_hinf(&a, &b).unwrap() - 0.01).abs() < 1e-14);
    }

    #[test]
    fn single_point_h2_is_frobenius_ratio() {
        let a = from_real_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = from_real_rows(2, 2, &[1.0, 2.5, 3.0, 3.0]);
        let want = linalg::frob((&a - &b).as_ref()) / linalg::frob(a.as_ref());
        assert!((relerr_h2(&[a], &[b]).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zero_reference_is_reported() {
        let a = vec![scalar(c(1.0, 0.0)), Mat::zeros(1, 1)];
        let b = vec![scalar(c(1.0, 0.0)), scalar(c(1.0, 0.0))];
        assert!(matches!(pointwise_relerr(&a, &b), Err(Error::ZeroReference(1))));
    }

    #[test]
    fn grid_construction() {
        let g = FrequencyGrid::log(1e-3, 1e1, DEFAULT_GRID_POINTS).unwrap();
        assert_eq!(g.len(), 500);
        assert!((g.omegas()[0] - 1e-3).abs() < 1e-18);
        assert!((g.omegas()[499] - 10.0).abs() < 1e-12);
        let l = FrequencyGrid::linear(1.0, 2.0, 3).unwrap();
        assert_eq!(l.omegas(), &[1.0, 1.5, 2.0]);
        assert!(FrequencyGrid::new(vec![1.0, 1.0], Spacing::Linear).is_err());
        assert!(FrequencyGrid::log(2.0, 1.0, 4).is_err());
    }
}
