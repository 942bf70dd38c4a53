//! Intrusive Gramian computations used as the reference for the data-driven
//! construction.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, axpby, psd_factor, set_block, CMat, Lu, C64, ONE};
use crate::models::system::factor_pencil;
use crate::models::{companion_form, SecondOrderSystem};
use crate::quadrature::{exp_trapezoid, QuadratureRule, RuleSide};

/// Quadrature-based factors `Ř` (n × mJ) and `Ľ` (n × pK).
///
/// Block column `j` of `rp` is `ρ_j φ(iζ_j)⁻¹ Bu`; block column `k` of `lv`
/// is `(w_k (Cp + iθ_k Cv) φ(iθ_k)⁻¹)ᴴ`.
#[derive(Debug, Clone)]
pub struct QuadFactors {
    pub rp: CMat,
    pub lv: CMat,
}

pub fn quad_factors(sys: &SecondOrderSystem, left: &QuadratureRule, right: &QuadratureRule) -> Result<QuadFactors> {
    let n = sys.n();
    let (m, p) = (sys.inputs(), sys.outputs());
    let right_blocks: Vec<CMat> = (0..right.len())
        .into_par_iter()
        .map(|j| {
            let res = factor_pencil(sys, right.node(j), false, Some(j))?;
            Ok(linalg::scaled(res.lu.solve(sys.bu().as_ref()).as_ref(), linalg::c(right.weights()[j], 0.0)))
        })
        .collect::<Result<_>>()?;
    let left_blocks: Vec<CMat> = (0..left.len())
        .into_par_iter()
        .map(|k| {
            let s = left.node(k);
            let res = factor_pencil(sys, s, false, Some(k))?;
            let cmix = axpby(ONE, sys.cp().as_ref(), s, sys.cv().as_ref());
            let rhs = cmix.adjoint().to_owned();
            Ok(linalg::scaled(res.lu.solve_adjoint(rhs.as_ref()).as_ref(), linalg::c(left.weights()[k], 0.0)))
        })
        .collect::<Result<_>>()?;
    let mut rp = Mat::zeros(n, m * right.len());
    for (j, b) in right_blocks.iter().enumerate() {
        set_block(&mut rp, 0, j * m, b.as_ref());
    }
    let mut lv = Mat::zeros(n, p * left.len());
    for (k, b) in left_blocks.iter().enumerate() {
        set_block(&mut lv, 0, k * p, b.as_ref());
    }
    Ok(QuadFactors { rp, lv })
}

/// Factors built from one fine exponential trapezoid rule on both sides.
/// Serves as the Gramian reference when the eigenvalue route is unavailable.
pub fn fine_quadrature_factors(sys: &SecondOrderSystem, omega_min: f64, omega_max: f64, nodes: usize) -> Result<QuadFactors> {
    let right = exp_trapezoid(omega_min, omega_max, nodes, RuleSide::Right)?;
    let left = right.clone().with_side(RuleSide::Left);
    quad_factors(sys, &left, &right)
}

/// Exact Gramians of the companion realization and their square-root factors.
///
/// `p` and `q` are the controllability and observability Gramians
/// `(1/2π)∫ (izE − A)⁻¹ B Bᴴ (izE − A)⁻ᴴ dz` and
/// `(1/2π)∫ (izE − A)⁻ᴴ Cᴴ C (izE − A)⁻¹ dz`. Factors satisfy `p = r rᴴ` and
/// `q = l lᴴ`; `rp` holds the first `n` rows of `r` and `lv` the last `n`
/// rows of `l`, so `rp rpᴴ = Pp` and `lv lvᴴ = Qv`.
#[derive(Debug, Clone)]
pub struct GramianFactors {
    pub p: CMat,
    pub q: CMat,
    pub r: CMat,
    pub l: CMat,
    pub rp: CMat,
    pub lv: CMat,
}

/// Largest eigenvector condition number accepted by [`exact_gramians`].
pub const MAX_EIGVEC_COND: f64 = 1e12;

pub fn exact_gramians(sys: &SecondOrderSystem) -> Result<GramianFactors> {
    let cf = companion_form(sys)?;
    let n = sys.n();
    let n2 = 2 * n;
    let elu = Lu::new(cf.e.as_ref());
    let at = elu.solve(cf.a.as_ref());
    let bt = elu.solve(cf.b.as_ref());
    let (lam, x) = linalg::eig(at.as_ref())?;
    let max_real = lam.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::UnstablePencil { max_real });
    }
    let cond = linalg::cond2(x.as_ref())?;
    if !(cond <= MAX_EIGVEC_COND) {
        return Err(Error::IllConditionedEigenvectors { cond });
    }
    let xlu = Lu::new(x.as_ref());
    let bh = xlu.solve(bt.as_ref());
    let ch = &cf.c * &x;
    let bbh = &bh * bh.adjoint();
    let chc = ch.adjoint() * &ch;
    let ph = Mat::from_fn(n2, n2, |i, j| -bbh[(i, j)] / (lam[i] + lam[j].conj()));
    let qh = Mat::from_fn(n2, n2, |i, j| -chc[(i, j)] / (lam[i].conj() + lam[j]));
    let p = hermitize(&(&x * &ph * x.adjoint()));
    let xinv = xlu.solve(linalg::identity(n2).as_ref());
    let qt = xinv.adjoint() * &qh * &xinv;
    // Q̃ solves the equation of (Ã, C); the integral form is E⁻ᴴ Q̃ E⁻¹.
    let einv = elu.solve(linalg::identity(n2).as_ref());
    let q = hermitize(&(einv.adjoint() * &qt * &einv));
    let r = psd_factor(p.as_ref())?;
    let l = psd_factor(q.as_ref())?;
    let rp = r.subrows(0, n).to_owned();
    let lv = l.subrows(n, n).to_owned();
    Ok(GramianFactors { p, q, r, l, rp, lv })
}

fn hermitize(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// `(Pp, Mᴴ Qv M)` from the leading block of `P` and the trailing block `Qv`
/// of `Q`.
pub fn pv_blocks(g: &GramianFactors, sys: &SecondOrderSystem) -> (CMat, CMat) {
    let n = sys.n();
    let pp = g.p.submatrix(0, 0, n, n).to_owned();
    let qv = g.q.submatrix(n, n, n, n);
    let mqm = sys.m().adjoint() * qv * sys.m();
    (pp, mqm)
}

/// Trailing block `Qv` of `Q`.
pub fn velocity_block(g: &GramianFactors, n: usize) -> CMat {
    g.q.submatrix(n, n, n, n).to_owned()
}

/// Relative residuals of the two generalized Lyapunov equations
/// `A P Eᴴ + E P Aᴴ + B Bᴴ = 0` and `Aᴴ Q E + Eᴴ Q A + Cᴴ C = 0`.
pub fn lyapunov_residuals(sys: &SecondOrderSystem, g: &GramianFactors) -> Result<(f64, f64)> {
    let cf = companion_form(sys)?;
    let ape = &cf.a * &g.p * cf.e.adjoint();
    let bb = &cf.b * cf.b.adjoint();
    let res_p = &ape + ape.adjoint() + &bb;
    let aqe = cf.a.adjoint() * &g.q * &cf.e;
    let cc = cf.c.adjoint() * &cf.c;
    let res_q = &aqe + aqe.adjoint() + &cc;
    let scale_p = linalg::frob(ape.as_ref()).max(linalg::frob(bb.as_ref()));
    let scale_q = linalg::frob(aqe.as_ref()).max(linalg::frob(cc.as_ref()));
    Ok((linalg::frob(res_p.as_ref()) / scale_p, linalg::frob(res_q.as_ref()) / scale_q))
}

/// Residuals of the two resolvent identities for `(sX + Y)` and `(zX + Y)`:
///
/// `(sX+Y)⁻¹ X (zX+Y)⁻¹ = ((zX+Y)⁻¹ − (sX+Y)⁻¹)/(s − z)` and
/// `(sX+Y)⁻¹ Y (zX+Y)⁻¹ = (z(zX+Y)⁻¹ − s(sX+Y)⁻¹)/(z − s)`.
pub fn resolvent_identity_residuals(x: &CMat, y: &CMat, s: C64, z: C64) -> Result<(f64, f64)> {
    let n = x.nrows();
    let id = linalg::identity(n);
    let ls = Lu::new(axpby(s, x.as_ref(), ONE, y.as_ref()).as_ref());
    let lz = Lu::new(axpby(z, x.as_ref(), ONE, y.as_ref()).as_ref());
    if !ls.is_well_conditioned() || !lz.is_well_conditioned() {
        return Err(Error::SingularPencil {
            s: if ls.is_well_conditioned() { z } else { s },
            node: None,
            rcond: ls.rcond.min(lz.rcond),
        });
    }
    let rs = ls.solve(id.as_ref());
    let rz = lz.solve(id.as_ref());
    let lhs1 = &rs * x * &rz;
    let rhs1 = axpby(ONE / (s - z), rz.as_ref(), -ONE / (s - z), rs.as_ref());
    let lhs2 = &rs * y * &rz;
    let rhs2 = axpby(z / (z - s), rz.as_ref(), -s / (z - s), rs.as_ref());
    Ok((
        linalg::rel_frob_err(lhs1.as_ref(), rhs1.as_ref()),
        linalg::rel_frob_err(lhs2.as_ref(), rhs2.as_ref()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows, rel_frob_err};
    use crate::models::{generate_msd_chain, generate_random_spd_system, DampingSpec, MsdParams, RandomSpdOptions};
    use crate::quadrature::interleave;

    fn scalar_system(damping: DampingSpec) -> SecondOrderSystem {
        SecondOrderSystem::new(
            from_real_rows(1, 1, &[1.0]),
            from_real_rows(1, 1, &[1.0]),
            damping,
            from_real_rows(1, 1, &[1.0]),
            from_real_rows(1, 1, &[1.0]),
            from_real_rows(1, 1, &[0.0]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_quad_factor() {
        let sys = scalar_system(DampingSpec::undamped());
        let right = QuadratureRule::new(vec![3.0], vec![1.0], RuleSide::Right).unwrap();
        let left = QuadratureRule::new(vec![2.0], vec![1.0], RuleSide::Left).unwrap();
        let f = quad_factors(&sys, &left, &right).unwrap();
        assert!((f.rp[(0, 0)] - c(-1.0 / 8.0, 0.0)).norm() < 1e-16);
        assert!((f.lv[(0, 0)] - c(-1.0 / 3.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn singular_node_reports_index() {
        let sys = scalar_system(DampingSpec::undamped());
        let right = QuadratureRule::new(vec![3.0, 1.0], vec![1.0, 1.0], RuleSide::Right).unwrap();
        let left = QuadratureRule::new(vec![2.0], vec![1.0], RuleSide::Left).unwrap();
        match quad_factors(&sys, &left, &right) {
            Err(Error::SingularPencil { node: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn damped_oscillator_lyapunov_residual() {
        let sys = scalar_system(DampingSpec::rayleigh(0.5, 0.0).unwrap());
        let g = exact_gramians(&sys).unwrap();
        let (rp, rq) = lyapunov_residuals(&sys, &g).unwrap();
        assert!(rp < 1e-10 && rq < 1e-10, "{rp} {rq}");
        // P for M=1, D=0.5, K=1, B=[0;1]: diag(1/(2·0.5·1), 1/(2·0.5)) = diag(1, 1).
        assert!(rel_frob_err(g.p.as_ref(), linalg::identity(2).as_ref()) < 1e-12);
    }

    #[test]
    fn gramians_psd_and_factored() {
        let opts = RandomSpdOptions {
            velocity_output: true,
            ..RandomSpdOptions::default()
        };
        let sys = generate_random_spd_system(6, 2, 2, 9, &opts).unwrap();
        let g = exact_gramians(&sys).unwrap();
        for a in [&g.p, &g.q] {
            let e = a.self_adjoint_eigen(faer::Side::Lower).unwrap();
            let s = e.S().column_vector();
            let lmax = s[a.nrows() - 1].re;
            for i in 0..a.nrows() {
                assert!(s[i].re >= -1e-12 * lmax);
            }
        }
        let rr = &g.r * g.r.adjoint();
        let ll = &g.l * g.l.adjoint();
        assert!(rel_frob_err(rr.as_ref(), g.p.as_ref()) < 1e-10);
        assert!(rel_frob_err(ll.as_ref(), g.q.as_ref()) < 1e-10);
        let (rp, rq) = lyapunov_residuals(&sys, &g).unwrap();
        assert!(rp < 1e-10 && rq < 1e-10, "{rp} {rq}");
    }

    #[test]
    fn unstable_pencil_rejected() {
        let sys = scalar_system(DampingSpec::undamped());
        assert!(matches!(exact_gramians(&sys), Err(Error::UnstablePencil { .. })));
    }

    #[test]
    fn symmetric_system_position_equals_velocity_gramian() {
        let opts = RandomSpdOptions {
            symmetric: true,
            ..RandomSpdOptions::default()
        };
        let sys = generate_random_spd_system(8, 2, 2, 4, &opts).unwrap();
        let g = exact_gramians(&sys).unwrap();
        let (pp, _) = pv_blocks(&g, &sys);
        let qv = velocity_block(&g, sys.n());
        let e = rel_frob_err(pp.as_ref(), qv.as_ref());
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn scalar_position_gramian_matches_fine_quadrature() {
        let sys = scalar_system(DampingSpec::rayleigh(0.3, 0.1).unwrap());
        let g = exact_gramians(&sys).unwrap();
        let (pp, _) = pv_blocks(&g, &sys);
        // Trapezoid in ω with 10⁵ points over a wide symmetric range.
        let npts = 100_000usize;
        let wmax = 2000.0;
        let h = 2.0 * wmax / npts as f64;
        let mut acc = 0.0;
        for i in 0..=npts {
            let w = -wmax + i as f64 * h;
            let s = c(0.0, w);
            let phi = s * s + s * (0.3 + 0.1) + 1.0;
            let wt = if i == 0 || i == npts { 0.5 } else { 1.0 };
            acc += wt * (1.0 / phi).norm_sqr() * h;
        }
        acc /= 2.0 * std::f64::consts::PI;
        assert!((pp[(0, 0)].re - acc).abs() < 1e-6 * acc, "{} {acc}", pp[(0, 0)].re);
    }

    #[test]
    fn quadrature_gramian_converges() {
        let sys = generate_msd_chain(6, &MsdParams {
            alpha: 0.05,
            beta: 0.05,
            ..MsdParams::default()
        })
        .unwrap();
        let g = exact_gramians(&sys).unwrap();
        let (pp, _) = pv_blocks(&g, &sys);
        let qv = velocity_block(&g, sys.n());
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for n in [100, 200, 400, 800] {
            let f = fine_quadrature_factors(&sys, 1e-4, 1e3, n).unwrap();
            let ep = rel_frob_err((&f.rp * f.rp.adjoint()).as_ref(), pp.as_ref());
            let eq = rel_frob_err((&f.lv * f.lv.adjoint()).as_ref(), qv.as_ref());
            assert!(ep <= prev.0 * 1.1 && eq <= prev.1 * 1.1, "{n}: {ep} {eq}");
            prev = (ep, eq);
        }
        assert!(prev.0 < 1e-2 && prev.1 < 1e-2, "{prev:?}");
    }

    #[test]
    fn interleaved_factors_have_expected_shape() {
        let opts = RandomSpdOptions::default();
        let sys = generate_random_spd_system(12, 2, 3, 1, &opts).unwrap();
        let (l, r) = interleave(0.1, 10.0, 8).unwrap();
        let f = quad_factors(&sys, &l, &r).unwrap();
        assert_eq!((f.rp.nrows(), f.rp.ncols()), (12, 16));
        assert_eq!((f.lv.nrows(), f.lv.ncols()), (12, 24));
    }

    #[test]
    fn resolvent_identities_hold() {
        let x = Mat::from_fn(6, 6, |i, j| c(((i * 5 + j * 3) % 7) as f64 - 3.0 + if i == j { 4.0 } else { 0.0 }, 0.1 * j as f64));
        let y = Mat::from_fn(6, 6, |i, j| c(((i * 2 + j * 7) % 5) as f64 - 2.0, -0.2 * i as f64));
        let (r1, r2) = resolvent_identity_residuals(&x, &y, c(0.3, 1.1), c(-0.7, 0.4)).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12, "{r1} {r2}");
    }
}
