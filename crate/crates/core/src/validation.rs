//! Seeded invariant battery: data formulas against explicit factor
//! products, resolvent identities, fit gradients, stability of Hermite
//! reductions and realification.

use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dampingfit::{DampingFitProblem, FitModel};
use crate::error::Result;
use crate::gramians::{quad_factors, resolvent_identity_residuals};
use crate::linalg::{self, c, rel_frob_err, CMat};
use crate::loewner::{assemble_general, assemble_hermite, realify_with_residual, LoewnerDataSet, SampleSet};
use crate::metrics::relerr_hinf;
use crate::models::{generate_random_spd_system, DampingSpec, RandomSpdOptions, SecondOrderSystem};
use crate::quadrature::{exp_trapezoid, interleave, logspace, RuleSide};
use crate::reduction::{check_stability, rom_transfer_on, soquadpvbt};

/// Signature of the general data assembly, injectable for negative controls.
pub type GeneralAssembler = fn(&SampleSet, &SampleSet, &DampingSpec) -> Result<LoewnerDataSet>;

pub const GENERAL_TOL: f64 = 1e-10;
pub const HERMITE_TOL: f64 = 1e-9;
pub const RESOLVENT_TOL: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const REALIFY_RESIDUAL_TOL: f64 = 1e-10;
pub const REALIFY_TRANSFER_TOL: f64 = 1e-8;

/// One row of the pass/fail table. `value` is the worst observed measure and
/// passes when it does not exceed `tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    pub description: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

fn outcome(id: &str, description: &str, value: f64, tolerance: f64, start: Instant, detail: String) -> CheckOutcome {
    CheckOutcome {
        id: id.into(),
        description: description.into(),
        value,
        tolerance,
        passed: value.is_finite() && value <= tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

fn failed(id: &str, description: &str, tolerance: f64, start: Instant, err: impl std::fmt::Display) -> CheckOutcome {
    CheckOutcome {
        id: id.into(),
        description: description.into(),
        value: f64::INFINITY,
        tolerance,
        passed: false,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!("error: {err}"),
    }
}

/// Worst relative Frobenius error of the data matrices against the factor
/// products `Ľᴴ M Ř`, `Ľᴴ K Ř`, `Ľᴴ B`, `Cp Ř`, `Cv Ř`.
pub fn factor_product_error(sys: &SecondOrderSystem, ds: &LoewnerDataSet) -> Result<f64> {
    let f = quad_factors(sys, &ds.left, &ds.right)?;
    let lh = f.lv.adjoint();
    let pairs = [
        (&ds.mq, lh * sys.m() * &f.rp),
        (&ds.kq, lh * sys.k() * &f.rp),
        (&ds.bq, lh * sys.bu()),
        (&ds.cpq, sys.cp() * &f.rp),
        (&ds.cvq, sys.cv() * &f.rp),
    ];
    Ok(pairs
        .iter()
        .map(|(got, want)| {
            if linalg::frob(want.as_ref()) == 0.0 {
                linalg::frob(got.as_ref())
            } else {
                rel_frob_err(got.as_ref(), want.as_ref())
            }
        })
        .fold(0.0, f64::max))
}

fn general_fixture() -> Result<SecondOrderSystem> {
    let opts = RandomSpdOptions {
        velocity_output: true,
        ..RandomSpdOptions::default()
    };
    generate_random_spd_system(12, 2, 2, 2024, &opts)
}

/// General data matrices against explicit factor products on a seeded
/// system with velocity output (n = 12, m = p = 2, 8 + 8 nodes).
pub fn check_general_equivalence(assemble: GeneralAssembler) -> CheckOutcome {
    const ID: &str = "general-data";
    const DESC: &str = "general data matrices equal quadrature factor products";
    let start = Instant::now();
    let run = || -> Result<f64> {
        let sys = general_fixture()?;
        let (left, right) = interleave(0.1, 10.0, 8)?;
        let ls = SampleSet::from_system(&sys, &left, false, false)?;
        let rs = SampleSet::from_system(&sys, &right, true, false)?;
        let ds = assemble(&ls, &rs, sys.damping())?;
        factor_product_error(&sys, &ds)
    };
    match run() {
        Ok(v) => outcome(ID, DESC, v, GENERAL_TOL, start, "n=12 m=2 p=2 nodes=8+8".into()),
        Err(e) => failed(ID, DESC, GENERAL_TOL, start, e),
    }
}

/// Hermite data matrices, including the derivative blocks, against factor
/// products on a conjugate-pair rule with 8 nodes.
pub fn check_hermite_equivalence() -> CheckOutcome {
    const ID: &str = "hermite-data";
    const DESC: &str = "Hermite data matrices equal quadrature factor products";
    let start = Instant::now();
    let run = || -> Result<f64> {
        let sys = generate_random_spd_system(12, 2, 2, 2024, &RandomSpdOptions::default())?;
        let rule = exp_trapezoid(0.1, 10.0, 8, RuleSide::Right)?;
        let smp = SampleSet::from_system(&sys, &rule, false, true)?;
        let ds = assemble_hermite(&smp, sys.damping())?;
        factor_product_error(&sys, &ds)
    };
    match run() {
        Ok(v) => outcome(ID, DESC, v, HERMITE_TOL, start, "n=12 m=2 p=2 nodes=8".into()),
        Err(e) => failed(ID, DESC, HERMITE_TOL, start, e),
    }
}

fn random_complex(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    Mat::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Both resolvent identities on 50 random instances of size 6.
pub fn check_resolvent_identities() -> CheckOutcome {
    const ID: &str = "resolvent";
    const DESC: &str = "resolvent identities on random pencils";
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = random_complex(&mut rng, 6, 6);
        let y = random_complex(&mut rng, 6, 6);
        let s = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let z = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        match resolvent_identity_residuals(&x, &y, s, z) {
            Ok((a, b)) => worst = worst.max(a).max(b),
            Err(e) => return failed(ID, DESC, RESOLVENT_TOL, start, e),
        }
    }
    outcome(ID, DESC, worst, RESOLVENT_TOL, start, "instances=50 size=6".into())
}

/// Random fit problem with reduced order 4, two inputs and outputs and six
/// data points, plus a random parameter point.
pub fn random_fit_problem(seed: u64, model: FitModel) -> Result<(DampingFitProblem, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = |rng: &mut ChaCha8Rng, r: usize, k: usize| -> CMat {
        Mat::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), 0.0))
    };
    let r = 4;
    let x = real(&mut rng, r, r);
    let kt = x.adjoint() * &x + linalg::identity(r);
    let data = (0..6)
        .map(|_| (c(0.0, rng.random_range(0.2..3.0)), real(&mut rng, 2, 2)))
        .collect();
    let bt = real(&mut rng, r, 2);
    let cpt = real(&mut rng, 2, r);
    let cvt = real(&mut rng, 2, r);
    let problem = DampingFitProblem::new(data, linalg::identity(r), kt, bt, cpt, cvt, model)?;
    let params = (0..model.dim()).map(|_| rng.random_range(0.01..0.5)).collect();
    Ok((problem, params))
}

/// Largest relative gap between analytic and central-difference gradients.
pub fn gradient_error(problem: &DampingFitProblem, x: &[f64]) -> Result<f64> {
    let g = problem.gradient(x)?;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let fd = (problem.cost(&xp)? - problem.cost(&xm)?) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1e-8));
    }
    Ok(worst)
}

/// Analytic fit gradients against central differences, 20 problems per
/// damping model.
pub fn check_fit_gradients() -> CheckOutcome {
    const ID: &str = "fit-gradient";
    const DESC: &str = "damping-fit gradients match central differences";
    let start = Instant::now();
    let run = || -> Result<f64> {
        let mut worst = 0.0f64;
        for model in [FitModel::Rayleigh, FitModel::Structural] {
            for seed in 0..20 {
                let (p, x) = random_fit_problem(1000 + seed, model)?;
                worst = worst.max(gradient_error(&p, &x)?);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => outcome(ID, DESC, v, GRADIENT_TOL, start, "problems=20 per model".into()),
        Err(e) => failed(ID, DESC, GRADIENT_TOL, start, e),
    }
}

/// Hermite reductions of 20 symmetric SPD systems (n = 30, `Bu = Cpᵀ`,
/// `Cv = 0`) at orders 2 through 10. The value is the fraction of unstable
/// reduced models.
pub fn check_stability_sweep() -> CheckOutcome {
    const ID: &str = "stability";
    const DESC: &str = "Hermite reductions of symmetric systems are stable";
    let start = Instant::now();
    let opts = RandomSpdOptions {
        symmetric: true,
        ..RandomSpdOptions::default()
    };
    let run = || -> Result<(usize, usize, f64)> {
        let rule = exp_trapezoid(1e-2, 1e2, 80, RuleSide::Right)?;
        let mut unstable = 0;
        let mut total = 0;
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..20 {
            let sys = generate_random_spd_system(30, 2, 2, 500 + seed, &opts)?;
            let smp = SampleSet::from_system(&sys, &rule, false, true)?;
            let ds = assemble_hermite(&smp, sys.damping())?;
            for r in 2..=10 {
                let (rom, _) = soquadpvbt(&ds, r)?;
                let rep = check_stability(&rom)?;
                total += 1;
                worst = worst.max(rep.max_real_part);
                if !rep.stable {
                    unstable += 1;
                }
            }
        }
        Ok((unstable, total, worst))
    };
    match run() {
        Ok((unstable, total, worst)) => outcome(
            ID,
            DESC,
            unstable as f64 / total as f64,
            0.0,
            start,
            format!("stable {}/{total}, max real part {worst:.3e}", total - unstable),
        ),
        Err(e) => failed(ID, DESC, 0.0, start, e),
    }
}

/// Realified data are real up to a small residual, and the realified
/// pipeline reproduces the complex pipeline at 50 held-out frequencies.
/// Returns two rows.
pub fn check_realification() -> Vec<CheckOutcome> {
    const ID_R: &str = "realify-residual";
    const DESC_R: &str = "realified data matrices have negligible imaginary parts";
    const ID_T: &str = "realify-transfer";
    const DESC_T: &str = "realified and complex reduced models agree off the nodes";
    let start = Instant::now();
    let run = || -> Result<(f64, f64)> {
        let sys = generate_random_spd_system(12, 2, 2, 77, &RandomSpdOptions::default())?;
        let (left, right) = interleave(0.1, 10.0, 16)?;
        let ls = SampleSet::from_system(&sys, &left, false, false)?;
        let rs = SampleSet::from_system(&sys, &right, true, false)?;
        let ds = assemble_general(&ls, &rs, sys.damping())?;
        let (real, residual) = realify_with_residual(&ds)?;
        let (rom_c, _) = soquadpvbt(&ds, 8)?;
        let (rom_r, _) = soquadpvbt(&real, 8)?;
        // Geometric midpoints between consecutive points of a 51-point grid.
        let grid = logspace(0.1, 10.0, 51);
        let held_out: Vec<f64> = grid.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let gc = rom_transfer_on(&rom_c, &held_out)?;
        let gr = rom_transfer_on(&rom_r, &held_out)?;
        Ok((residual, relerr_hinf(&gc, &gr)?))
    };
    match run() {
        Ok((residual, transfer)) => vec![
            outcome(ID_R, DESC_R, residual, REALIFY_RESIDUAL_TOL, start, "n=12 m=2 p=2 nodes=16+16".into()),
            outcome(ID_T, DESC_T, transfer, REALIFY_TRANSFER_TOL, start, "r=8 held-out=50".into()),
        ],
        Err(e) => vec![
            failed(ID_R, DESC_R, REALIFY_RESIDUAL_TOL, start, &e),
            failed(ID_T, DESC_T, REALIFY_TRANSFER_TOL, start, &e),
        ],
    }
}

/// The full battery in a fixed order.
pub fn run_battery() -> Vec<CheckOutcome> {
    let mut out = vec![
        check_general_equivalence(assemble_general),
        check_hermite_equivalence(),
        check_resolvent_identities(),
        check_fit_gradients(),
        check_stability_sweep(),
    ];
    out.extend(check_realification());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped_mass(left: &SampleSet, right: &SampleSet, damping: &DampingSpec) -> Result<LoewnerDataSet> {
        let mut ds = assemble_general(left, right, damping)?;
        ds.mq = -&ds.mq;
        Ok(ds)
    }

    #[test]
    fn general_equivalence_passes() {
        let o = check_general_equivalence(assemble_general);
        assert!(o.passed, "{o:?}");
    }

    #[test]
    fn sign_error_is_caught() {
        let o = check_general_equivalence(flipped_mass);
        assert!(!o.passed);
        assert!(o.value > 1.0);
    }

    #[test]
    fn hermite_and_resolvent_pass() {
        for o in [check_hermite_equivalence(), check_resolvent_identities()] {
            assert!(o.passed, "{o:?}");
        }
    }

    #[test]
    fn gradients_pass() {
        let o = check_fit_gradients();
        assert!(o.passed, "{o:?}");
    }

    #[test]
    fn realification_passes() {
        for o in check_realification() {
            assert!(o.passed, "{o:?}");
        }
    }
}
