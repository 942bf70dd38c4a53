//! Reduced second-order models from data (soQuadpvBT) and from the system
//! matrices (sopvBT).

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gramians::exact_gramians;
use crate::linalg::{self, axpby, c, svd, CMat, Lu, C64, ONE};
use crate::loewner::LoewnerDataSet;
use crate::models::{eval_coefficients, DampingSpec, SecondOrderSystem};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-13;

/// Damping of a reduced model.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedDamping {
    /// `D̃(s) = f(s) I + g(s) K̃` with the coefficient functions of the damping model.
    Proportional(DampingSpec),
    /// A constant matrix `D̃`.
    Explicit(CMat),
}

/// `s² I + s D̃(s) + K̃` with input `B̃` and outputs `C̃p`, `C̃v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSecondOrderModel {
    kt: CMat,
    damping: ReducedDamping,
    bt: CMat,
    cpt: CMat,
    cvt: CMat,
}

impl ReducedSecondOrderModel {
    pub fn new(kt: CMat, damping: ReducedDamping, bt: CMat, cpt: CMat, cvt: CMat) -> Result<Self> {
        let r = kt.nrows();
        if r == 0 || kt.ncols() != r {
            return Err(Error::DimensionMismatch(format!("K̃ is {}x{}", kt.nrows(), kt.ncols())));
        }
        if let ReducedDamping::Explicit(d) = &damping {
            if d.nrows() != r || d.ncols() != r {
                return Err(Error::DimensionMismatch(format!("D̃ is {}x{}, expected {r}x{r}", d.nrows(), d.ncols())));
            }
        }
        if bt.nrows() != r || cpt.ncols() != r || cvt.ncols() != r || cpt.nrows() != cvt.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B̃ {}x{}, C̃p {}x{}, C̃v {}x{} do not fit order {r}",
                bt.nrows(),
                bt.ncols(),
                cpt.nrows(),
                cpt.ncols(),
                cvt.nrows(),
                cvt.ncols()
            )));
        }
        Ok(ReducedSecondOrderModel {
            kt,
            damping,
            bt,
            cpt,
            cvt,
        })
    }

    pub fn order(&self) -> usize {
        self.kt.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.bt.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cpt.nrows()
    }

    pub fn kt(&self) -> &CMat {
        &self.kt
    }

    pub fn damping(&self) -> &ReducedDamping {
        &self.damping
    }

    pub fn bt(&self) -> &CMat {
        &self.bt
    }

    pub fn cpt(&self) -> &CMat {
        &self.cpt
    }

    pub fn cvt(&self) -> &CMat {
        &self.cvt
    }

    /// Same matrices with a different damping model.
    pub fn with_damping(&self, damping: ReducedDamping) -> Result<Self> {
        ReducedSecondOrderModel::new(self.kt.clone(), damping, self.bt.clone(), self.cpt.clone(), self.cvt.clone())
    }

    /// Whether all matrices are real.
    pub fn is_real(&self) -> bool {
        let d_real = match &self.damping {
            ReducedDamping::Explicit(d) => linalg::is_real(d.as_ref()),
            ReducedDamping::Proportional(_) => true,
        };
        d_real && [&self.kt, &self.bt, &self.cpt, &self.cvt].iter().all(|a| linalg::is_real(a.as_ref()))
    }

    /// `s² I + s D̃(s) + K̃`.
    pub fn pencil(&self, s: C64) -> Result<CMat> {
        let r = self.order();
        match &self.damping {
            ReducedDamping::Proportional(spec) => {
                let co = eval_coefficients(spec, s, false)?;
                Ok(axpby(co.n, linalg::identity(r).as_ref(), co.d, self.kt.as_ref()))
            }
            ReducedDamping::Explicit(d) => {
                let mut p = axpby(s, d.as_ref(), ONE, self.kt.as_ref());
                for i in 0..r {
                    p[(i, i)] += s * s;
                }
                Ok(p)
            }
        }
    }

    /// Constant damping matrix, if the damping does not depend on `s`.
    pub fn constant_damping_matrix(&self) -> Result<CMat> {
        match &self.damping {
            ReducedDamping::Explicit(d) => Ok(d.clone()),
            ReducedDamping::Proportional(spec) => match spec.constant_coefficients() {
                Some((f, g)) => {
                    let mut d = linalg::scaled(self.kt.as_ref(), g);
                    for i in 0..self.order() {
                        d[(i, i)] += f;
                    }
                    Ok(d)
                }
                None => Err(Error::UnsupportedDamping(format!(
                    "{} damping is frequency dependent",
                    spec.name()
                ))),
            },
        }
    }
}

/// Singular values of `𝕄` (or `Lvᴴ M Rp`) and the truncation they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub singular_values: Vec<f64>,
    pub r_used: usize,
    /// `σ_{r+1}/σ_1`, zero when nothing is discarded.
    pub discarded_mass: f64,
}

impl TruncationReport {
    fn new(singular_values: Vec<f64>, r: usize) -> Self {
        let s1 = singular_values.first().copied().unwrap_or(0.0);
        let discarded_mass = match singular_values.get(r) {
            Some(&next) if s1 > 0.0 => next / s1,
            _ => 0.0,
        };
        TruncationReport {
            singular_values,
            r_used: r,
            discarded_mass,
        }
    }

    /// Number of singular values above `RANK_TOL·σ_1`.
    pub fn numerical_rank(&self) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s1 > 0.0 && s >= RANK_TOL * s1).count()
    }
}

fn check_rank(s: &[f64], r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidParams("reduced order must be at least 1".into()));
    }
    if r > s.len() {
        return Err(Error::DimensionMismatch(format!(
            "order {r} exceeds the {} available singular values",
            s.len()
        )));
    }
    let ratio = if s[0] > 0.0 { s[r - 1] / s[0] } else { 0.0 };
    if !(ratio >= RANK_TOL) {
        return Err(Error::RankDeficient { r, ratio });
    }
    Ok(())
}

/// `U1`, `V1` and `Σ1^{-1/2}` of a rank-`r` truncated SVD.
struct Truncated {
    u1: CMat,
    v1: CMat,
    isq: Vec<f64>,
    report: TruncationReport,
}

fn truncate(a: &CMat, r: usize) -> Result<Truncated> {
    let dec = svd(a.as_ref())?;
    check_rank(&dec.s, r)?;
    let u1 = dec.u.subcols(0, r).to_owned();
    let v1 = dec.v.subcols(0, r).to_owned();
    let isq = dec.s[..r].iter().map(|s| 1.0 / s.sqrt()).collect();
    Ok(Truncated {
        u1,
        v1,
        isq,
        report: TruncationReport::new(dec.s, r),
    })
}

/// `diag(d) · a`.
fn scale_rows(d: &[f64], a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i])
}

/// `a · diag(d)`.
fn scale_cols(a: &CMat, d: &[f64]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// Data-driven position-velocity balanced truncation to order `r`.
pub fn soquadpvbt(ds: &LoewnerDataSet, r: usize) -> Result<(ReducedSecondOrderModel, TruncationReport)> {
    let t = truncate(&ds.mq, r)?;
    let uh = t.u1.adjoint();
    let kt = scale_cols(&scale_rows(&t.isq, &(uh * &ds.kq * &t.v1)), &t.isq);
    let bt = scale_rows(&t.isq, &(uh * &ds.bq));
    let cpt = scale_cols(&(&ds.cpq * &t.v1), &t.isq);
    let cvt = scale_cols(&(&ds.cvq * &t.v1), &t.isq);
    let rom = ReducedSecondOrderModel::new(kt, ReducedDamping::Proportional(ds.damping.clone()), bt, cpt, cvt)?;
    Ok((rom, t.report))
}

/// Full singular spectrum of `𝕄`, with `r_used` set to the numerical rank.
pub fn singular_value_profile(ds: &LoewnerDataSet) -> Result<TruncationReport> {
    let s = linalg::singular_values(ds.mq.as_ref())?;
    let probe = TruncationReport::new(s, 0);
    let r = probe.numerical_rank();
    Ok(TruncationReport::new(probe.singular_values, r))
}

/// Projection matrices of position-velocity balancing, `W = Lv U1 S1^{-1/2}`
/// and `T = Rp V1 S1^{-1/2}` from the SVD of `Lvᴴ M Rp`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub w: CMat,
    pub t: CMat,
    pub report: TruncationReport,
}

pub fn pv_projection(sys: &SecondOrderSystem, rp: &CMat, lv: &CMat, r: usize) -> Result<Projection> {
    let core = lv.adjoint() * sys.m() * rp;
    let t = truncate(&core, r)?;
    Ok(Projection {
        w: scale_cols(&(lv * &t.u1), &t.isq),
        t: scale_cols(&(rp * &t.v1), &t.isq),
        report: t.report,
    })
}

/// Projects the system onto order `r` with given Gramian factors.
///
/// With `proportional` the reduced damping keeps the coefficient functions of
/// the system (`D̃ = f I + g K̃`); otherwise `D̃ = Wᴴ D T` is formed, which
/// requires constant damping.
pub fn sopvbt_from_factors(
    sys: &SecondOrderSystem,
    rp: &CMat,
    lv: &CMat,
    r: usize,
    proportional: bool,
) -> Result<(ReducedSecondOrderModel, TruncationReport)> {
    let pr = pv_projection(sys, rp, lv, r)?;
    let wh = pr.w.adjoint();
    let kt = wh * sys.k() * &pr.t;
    let damping = if proportional {
        ReducedDamping::Proportional(sys.damping().clone())
    } else {
        let (f, g) = sys.damping().constant_coefficients().ok_or_else(|| {
            Error::UnsupportedDamping(format!("{} damping has no constant matrix", sys.damping().name()))
        })?;
        let d = axpby(f, sys.m().as_ref(), g, sys.k().as_ref());
        ReducedDamping::Explicit(wh * &d * &pr.t)
    };
    let bt = wh * sys.bu();
    let cpt = sys.cp() * &pr.t;
    let cvt = sys.cv() * &pr.t;
    let rom = ReducedSecondOrderModel::new(kt, damping, bt, cpt, cvt)?;
    Ok((rom, pr.report))
}

/// Intrusive position-velocity balanced truncation with exact Gramians.
pub fn sopvbt(sys: &SecondOrderSystem, r: usize, proportional: bool) -> Result<(ReducedSecondOrderModel, TruncationReport)> {
    let g = exact_gramians(sys)?;
    sopvbt_from_factors(sys, &g.rp, &g.lv, r, proportional)
}

/// `(s C̃v + C̃p)(s² I + s D̃(s) + K̃)⁻¹ B̃`.
pub fn rom_transfer(rom: &ReducedSecondOrderModel, s: C64) -> Result<CMat> {
    let lu = Lu::new(rom.pencil(s)?.as_ref());
    if !lu.is_well_conditioned() {
        return Err(Error::SingularPencil {
            s,
            node: None,
            rcond: lu.rcond,
        });
    }
    let x = lu.solve(rom.bt.as_ref());
    Ok(axpby(s, rom.cvt.as_ref(), ONE, rom.cpt.as_ref()) * x)
}

/// [`rom_transfer`] at `iω` for every `ω`, in order.
pub fn rom_transfer_on(rom: &ReducedSecondOrderModel, omegas: &[f64]) -> Result<Vec<CMat>> {
    omegas
        .par_iter()
        .enumerate()
        .map(|(k, &w)| {
            rom_transfer(rom, c(0.0, w)).map_err(|e| match e {
                Error::SingularPencil { s, rcond, .. } => Error::SingularPencil { s, node: Some(k), rcond },
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    pub max_real_part: f64,
}

/// Eigenvalues of the linearization `[[0, I], [−K̃, −D̃]]` of the reduced
/// pencil. Stable means every eigenvalue has real part below
/// `−64ε·max|λ|`.
pub fn check_stability(rom: &ReducedSecondOrderModel) -> Result<StabilityReport> {
    let r = rom.order();
    let d = rom.constant_damping_matrix()?;
    let mut a = Mat::<C64>::zeros(2 * r, 2 * r);
    for i in 0..r {
        a[(i, r + i)] = ONE;
        for j in 0..r {
            a[(r + i, j)] = -rom.kt[(i, j)];
            a[(r + i, r + j)] = -d[(i, j)];
        }
    }
    let lam = linalg::eigvals(a.as_ref())?;
    let max_real_part = lam.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let scale = lam.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(StabilityReport {
        stable: max_real_part < -64.0 * f64::EPSILON * scale,
        max_real_part,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramians::quad_factors;
    use crate::linalg::{from_real_rows, rel_frob_err};
    use crate::loewner::{assemble_general, assemble_hermite, realify, SampleSet};
    use crate::models::{eval_transfer, generate_random_spd_system, RandomSpdOptions};
    use crate::quadrature::{exp_trapezoid, interleave, RuleSide};

    fn rel(a: &CMat, b: &CMat) -> f64 {
        rel_frob_err(a.as_ref(), b.as_ref())
    }

    fn data(sys: &SecondOrderSystem, lo: f64, hi: f64, n: usize) -> LoewnerDataSet {
        let (l, r) = interleave(lo, hi, n).unwrap();
        let ls = SampleSet::from_system(sys, &l, false, false).unwrap();
        let rs = SampleSet::from_system(sys, &r, true, false).unwrap();
        assemble_general(&ls, &rs, sys.damping()).unwrap()
    }

    #[test]
    fn scalar_rom_transfer() {
        let one = from_real_rows(1, 1, &[1.0]);
        let b = from_real_rows(1, 1, &[2.0]);
        let cp = from_real_rows(1, 1, &[3.0]);
        let rom = ReducedSecondOrderModel::new(
            one,
            ReducedDamping::Proportional(DampingSpec::undamped()),
            b,
            cp,
            Mat::zeros(1, 1),
        )
        .unwrap();
        let g = rom_transfer(&rom, c(0.0, 2.0)).unwrap();
        assert!((g[(0, 0)] - c(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_response() {
        let sys = generate_random_spd_system(4, 2, 1, 1, &RandomSpdOptions::default()).unwrap();
        let rom = ReducedSecondOrderModel::new(
            sys.k().clone(),
            ReducedDamping::Proportional(sys.damping().clone()),
            Mat::zeros(4, 2),
            sys.cp().clone(),
            sys.cv().clone(),
        )
        .unwrap();
        let g = rom_transfer(&rom, c(0.0, 1.3)).unwrap();
        assert_eq!(linalg::max_abs(g.as_ref()), 0.0);
    }

    #[test]
    fn self_reduction_recovers_transfer() {
        let opts = RandomSpdOptions {
            velocity_output: true,
            ..RandomSpdOptions::default()
        };
        let sys = generate_random_spd_system(3, 1, 1, 21, &opts).unwrap();
        let ds = data(&sys, 0.05, 20.0, 12);
        let (rom, rep) = soquadpvbt(&ds, 3).unwrap();
        assert!(rep.discarded_mass <= RANK_TOL);
        for w in [0.01, 0.3, 2.7, 55.0] {
            let s = c(0.0, w);
            let g = eval_transfer(&sys, s).unwrap();
            assert!(rel(&rom_transfer(&rom, s).unwrap(), &g) < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let sys = generate_random_spd_system(3, 1, 1, 21, &RandomSpdOptions::default()).unwrap();
        let ds = data(&sys, 0.05, 20.0, 12);
        let prof = singular_value_profile(&ds).unwrap();
        assert_eq!(prof.numerical_rank(), 3);
        assert!(matches!(soquadpvbt(&ds, 4), Err(Error::RankDeficient { r: 4, .. })));
        assert!(matches!(soquadpvbt(&ds, 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn sopvbt_projection_gives_identity_mass() {
        let sys = generate_random_spd_system(10, 2, 2, 8, &RandomSpdOptions::default()).unwrap();
        let g = exact_gramians(&sys).unwrap();
        let pr = pv_projection(&sys, &g.rp, &g.lv, 6).unwrap();
        let mt = pr.w.adjoint() * sys.m() * &pr.t;
        assert!(rel(&mt, &linalg::identity(6)) < 1e-10);
    }

    #[test]
    fn scalar_sopvbt_is_exact() {
        let sys = SecondOrderSystem::new(
            from_real_rows(1, 1, &[2.0]),
            from_real_rows(1, 1, &[3.0]),
            DampingSpec::rayleigh(0.1, 0.2).unwrap(),
            from_real_rows(1, 1, &[1.0]),
            from_real_rows(1, 1, &[1.0]),
            from_real_rows(1, 1, &[0.5]),
        )
        .unwrap();
        for prop in [false, true] {
            let (rom, _) = sopvbt(&sys, 1, prop).unwrap();
            for w in [0.1, 1.0, 7.0] {
                let s = c(0.0, w);
                assert!(rel(&rom_transfer(&rom, s).unwrap(), &eval_transfer(&sys, s).unwrap()) < 1e-10);
            }
        }
    }

    #[test]
    fn data_rom_equals_factor_rom() {
        let opts = RandomSpdOptions {
            velocity_output: true,
            ..RandomSpdOptions::default()
        };
        let sys = generate_random_spd_system(12, 2, 2, 4, &opts).unwrap();
        let (l, r) = interleave(0.05, 20.0, 16).unwrap();
        let ds = data(&sys, 0.05, 20.0, 16);
        let f = quad_factors(&sys, &l, &r).unwrap();
        let (a, _) = soquadpvbt(&ds, 6).unwrap();
        let (b, _) = sopvbt_from_factors(&sys, &f.rp, &f.lv, 6, true).unwrap();
        for k in 0..50 {
            let s = c(0.0, 0.01 * 1.2f64.powi(k));
            assert!(rel(&rom_transfer(&a, s).unwrap(), &rom_transfer(&b, s).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn realified_rom_matches_complex_rom() {
        let sys = generate_random_spd_system(10, 2, 2, 6, &RandomSpdOptions::default()).unwrap();
        let ds = data(&sys, 0.05, 20.0, 12);
        let re = realify(&ds).unwrap();
        let (a, _) = soquadpvbt(&ds, 5).unwrap();
        let (b, _) = soquadpvbt(&re, 5).unwrap();
        assert!(b.is_real());
        for k in 0..20 {
            let s = c(0.0, 0.03 * 1.4f64.powi(k));
            assert!(rel(&rom_transfer(&a, s).unwrap(), &rom_transfer(&b, s).unwrap()) < 1e-8);
        }
        let pa = singular_value_profile(&ds).unwrap().singular_values;
        let pb = singular_value_profile(&re).unwrap().singular_values;
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() <= 1e-12 * pa[0]);
        }
    }

    #[test]
    fn stability_classification() {
        let k = from_real_rows(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let b = from_real_rows(2, 1, &[1.0, 0.0]);
        let cp = from_real_rows(1, 2, &[0.0, 1.0]);
        let damped = ReducedSecondOrderModel::new(
            k.clone(),
            ReducedDamping::Proportional(DampingSpec::rayleigh(0.1, 0.1).unwrap()),
            b.clone(),
            cp.clone(),
            Mat::zeros(1, 2),
        )
        .unwrap();
        assert!(check_stability(&damped).unwrap().stable);
        let undamped = damped.with_damping(ReducedDamping::Explicit(Mat::zeros(2, 2))).unwrap();
        let rep = check_stability(&undamped).unwrap();
        assert!(!rep.stable);
        assert!(rep.max_real_part.abs() < 1e-12);
        let structural = damped
            .with_damping(ReducedDamping::Proportional(DampingSpec::structural(0.1).unwrap()))
            .unwrap();
        assert!(matches!(check_stability(&structural), Err(Error::UnsupportedDamping(_))));
    }

    #[test]
    fn hermite_roms_are_stable() {
        let opts = RandomSpdOptions {
            symmetric: true,
            ..RandomSpdOptions::default()
        };
        let sys = generate_random_spd_system(15, 1, 1, 2, &opts).unwrap();
        let rule = exp_trapezoid(0.05, 20.0, 20, RuleSide::Right).unwrap();
        let smp = SampleSet::from_system(&sys, &rule, false, true).unwrap();
        let ds = assemble_hermite(&smp, sys.damping()).unwrap();
        for r in 2..=8 {
            let (rom, _) = soquadpvbt(&ds, r).unwrap();
            assert!(check_stability(&rom).unwrap().stable, "r = {r}");
        }
    }
}
