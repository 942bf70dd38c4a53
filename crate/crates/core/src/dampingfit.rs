//! Least-squares inference of Rayleigh or structural damping parameters for a
//! reduced model with fixed mass, stiffness, input and output matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, axpby, c, CMat, Lu, C64, I, ONE};
use crate::models::DampingSpec;
use crate::reduction::{ReducedDamping, ReducedSecondOrderModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// Parameters `(α, β)`, `φ = (s² + sα) M̃ + (1 + sβ) K̃`.
    Rayleigh,
    /// Parameter `η`, `φ = s² M̃ + (1 + iη) K̃`.
    Structural,
}

impl FitModel {
    pub fn dim(self) -> usize {
        match self {
            FitModel::Rayleigh => 2,
            FitModel::Structural => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitModel::Rayleigh => "rayleigh",
            FitModel::Structural => "structural",
        }
    }

    /// Damping model for the given parameters.
    pub fn spec(self, params: &[f64]) -> Result<DampingSpec> {
        match self {
            FitModel::Rayleigh => DampingSpec::rayleigh(params[0], params[1]),
            FitModel::Structural => DampingSpec::structural(params[0]),
        }
    }
}

/// Samples `g_k = G(s_k)` and the fixed reduced matrices.
///
/// The cost is `scale · Σ_k ‖g_k − 𝒞(s_k) φ(s_k)⁻¹ B̃‖_F²` with
/// `scale = 1 / Σ_k ‖g_k‖_F²` by default, which leaves the minimizer unchanged
/// and makes the tolerances independent of the magnitude of the data.
#[derive(Debug, Clone)]
pub struct DampingFitProblem {
    pub data: Vec<(C64, CMat)>,
    pub scale: f64,
    pub mt: CMat,
    pub kt: CMat,
    pub bt: CMat,
    pub cpt: CMat,
    pub cvt: CMat,
    pub model: FitModel,
}

impl DampingFitProblem {
    pub fn new(data: Vec<(C64, CMat)>, mt: CMat, kt: CMat, bt: CMat, cpt: CMat, cvt: CMat, model: FitModel) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParams("damping fit needs at least one sample".into()));
        }
        let r = kt.nrows();
        let (p, m) = (cpt.nrows(), bt.ncols());
        let square = |a: &CMat| a.nrows() == r && a.ncols() == r;
        if !square(&mt) || !square(&kt) || bt.nrows() != r || cpt.ncols() != r || cvt.ncols() != r || cvt.nrows() != p {
            return Err(Error::DimensionMismatch("reduced matrices have inconsistent shapes".into()));
        }
        if let Some(k) = data.iter().position(|(_, g)| g.nrows() != p || g.ncols() != m) {
            return Err(Error::DimensionMismatch(format!("sample {k} is not {p}x{m}")));
        }
        let total: f64 = data.iter().map(|(_, g)| linalg::frob(g.as_ref()).powi(2)).sum();
        let scale = if total > 0.0 { 1.0 / total } else { 1.0 };
        Ok(DampingFitProblem {
            data,
            scale,
            mt,
            kt,
            bt,
            cpt,
            cvt,
            model,
        })
    }

    /// Same problem with an explicit cost scale; `1.0` gives the plain sum of
    /// squared residuals.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Problem for a reduced model with identity mass.
    pub fn from_rom(rom: &ReducedSecondOrderModel, data: Vec<(C64, CMat)>, model: FitModel) -> Result<Self> {
        DampingFitProblem::new(
            data,
            linalg::identity(rom.order()),
            rom.kt().clone(),
            rom.bt().clone(),
            rom.cpt().clone(),
            rom.cvt().clone(),
            model,
        )
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.model.dim() {
            return Err(Error::InvalidParams(format!(
                "{} damping has {} parameters, got {}",
                self.model.as_str(),
                self.model.dim(),
                params.len()
            )));
        }
        Ok(())
    }

    /// `φ(s_k)` and `∂φ/∂p` for each parameter.
    fn pencil(&self, s: C64, params: &[f64]) -> (CMat, Vec<CMat>) {
        match self.model {
            FitModel::Rayleigh => {
                let (a, b) = (params[0], params[1]);
                let phi = axpby(s * s + s * a, self.mt.as_ref(), ONE + s * b, self.kt.as_ref());
                let da = linalg::scaled(self.mt.as_ref(), s);
                let db = linalg::scaled(self.kt.as_ref(), s);
                (phi, vec![da, db])
            }
            FitModel::Structural => {
                let phi = axpby(s * s, self.mt.as_ref(), c(1.0, params[0]), self.kt.as_ref());
                (phi, vec![linalg::scaled(self.kt.as_ref(), I)])
            }
        }
    }

    /// Residual `E_k`, `X = φ⁻¹ B̃` and `Y = φ⁻ᴴ 𝒞ᴴ E_k` at sample `k`.
    fn residual(&self, k: usize, params: &[f64], with_adjoint: bool) -> Result<(CMat, Vec<CMat>, CMat, Option<CMat>)> {
        let (s, g) = &self.data[k];
        let (phi, dphi) = self.pencil(*s, params);
        let lu = Lu::new(phi.as_ref());
        if !lu.is_well_conditioned() {
            return Err(Error::SingularReducedPencil { k, s: *s });
        }
        let x = lu.solve(self.bt.as_ref());
        let cs = axpby(ONE, self.cpt.as_ref(), *s, self.cvt.as_ref());
        let e = g - &cs * &x;
        let y = if with_adjoint {
            Some(lu.solve_adjoint((cs.adjoint() * &e).as_ref()))
        } else {
            None
        };
        Ok((e, dphi, x, y))
    }

    /// `scale · Σ_k ‖g_k − 𝒞(s_k) φ(s_k)⁻¹ B̃‖_F²`.
    pub fn cost(&self, params: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        let parts: Vec<f64> = (0..self.data.len())
            .into_par_iter()
            .map(|k| {
                let (e, ..) = self.residual(k, params, false)?;
                Ok(linalg::frob(e.as_ref()).powi(2))
            })
            .collect::<Result<_>>()?;
        Ok(self.scale * parts.iter().sum::<f64>())
    }

    /// Cost and its gradient. Each entry is
    /// `scale · Σ_k 2 Re tr(∂φ/∂p · φ⁻¹ B̃ E_kᴴ 𝒞(s_k) φ⁻¹)`.
    pub fn cost_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        let d = self.model.dim();
        let parts: Vec<(f64, Vec<f64>)> = (0..self.data.len())
            .into_par_iter()
            .map(|k| {
                let (e, dphi, x, y) = self.residual(k, params, true)?;
                let y = y.unwrap();
                let grad = dphi
                    .iter()
                    .map(|dp| {
                        let z = dp * &x;
                        let mut tr = C64::new(0.0, 0.0);
                        for j in 0..z.ncols() {
                            for i in 0..z.nrows() {
                                tr += z[(i, j)] * y[(i, j)].conj();
                            }
                        }
                        2.0 * tr.re
                    })
                    .collect();
                Ok((linalg::frob(e.as_ref()).powi(2), grad))
            })
            .collect::<Result<_>>()?;
        let mut cost = 0.0;
        let mut grad = vec![0.0; d];
        for (ck, gk) in parts {
            cost += ck;
            for (a, b) in grad.iter_mut().zip(gk) {
                *a += b;
            }
        }
        Ok((self.scale * cost, grad.into_iter().map(|v| self.scale * v).collect()))
    }

    pub fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost_and_gradient(params)?.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub grad_tol: f64,
    /// Relative step tolerance, `‖Δx‖ ≤ step_tol·‖x‖`.
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-8,
            step_tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gradient_tolerance",
            Termination::StepTolerance => "step_tolerance",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchFailure => "line_search_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub final_cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Accepted iterates with their costs, starting at the initial point.
    pub trace: Vec<(Vec<f64>, f64)>,
}

impl FitResult {
    pub fn damping(&self) -> Result<DampingSpec> {
        self.model.spec(&self.params)
    }

    /// The reduced model with the fitted damping; the matrices are unchanged.
    pub fn apply(&self, rom: &ReducedSecondOrderModel) -> Result<ReducedSecondOrderModel> {
        rom.with_damping(ReducedDamping::Proportional(self.damping()?))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cost and gradient, with a singular pencil mapped to an infinite cost.
fn probe(problem: &DampingFitProblem, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    match problem.cost_and_gradient(x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Ok(Some((f, g))),
        Ok(_) | Err(Error::SingularReducedPencil { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Magnitude below which a fitted parameter is set to zero.
pub const CLAMP_TOL: f64 = 1e-12;

/// BFGS with Armijo backtracking on the cost.
pub fn fit(problem: &DampingFitProblem, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    problem.check_params(init)?;
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("initial parameters must be finite".into()));
    }
    let d = init.len();
    let (mut f, mut g) = probe(problem, init)?
        .ok_or_else(|| Error::Optimizer("cost is not finite at the initial parameters".into()))?;
    let mut x = init.to_vec();
    let mut trace = vec![(x.clone(), f)];
    let mut h = vec![0.0; d * d];
    let mut scaled = false;
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            h[i * d + i] = scale;
        }
    };
    // First trial step has length max(‖x0‖, 1e-3) along the steepest descent.
    let gn0 = norm(&g);
    reset(&mut h, if gn0 > 0.0 { norm(&x).max(1e-3) / gn0 } else { 1.0 });
    let mut iterations = 0;
    let termination = loop {
        if norm(&g) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        let mut dir: Vec<f64> = (0..d).map(|i| -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>()).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            let gn = norm(&g);
            reset(&mut h, norm(&x).max(1e-3) / gn);
            dir = g.iter().map(|v| -v * norm(&x).max(1e-3) / gn).collect();
            slope = dot(&g, &dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Some((fn_, gn_)) = probe(problem, &xn)? {
                if fn_ <= f + 1e-4 * t * slope {
                    accepted = Some((xn, fn_, gn_));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn_)) = accepted else {
            break Termination::LineSearchFailure;
        };
        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step_small = norm(&s) <= opts.step_tol * norm(&x);
        x = xn;
        f = fn_;
        g = gn_;
        trace.push((x.clone(), f));
        if step_small {
            break if norm(&g) <= opts.grad_tol {
                Termination::GradientTolerance
            } else {
                Termination::StepTolerance
            };
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if !scaled {
                reset(&mut h, sy / dot(&y, &y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    };
    for v in &mut x {
        if *v != 0.0 && v.abs() < CLAMP_TOL {
            log::warn!("fitted damping parameter {v:e} clamped to zero");
            *v = 0.0;
        }
    }
    let grad_norm = norm(&g);
    Ok(FitResult {
        model: problem.model,
        params: x,
        final_cost: f,
        grad_norm,
        iterations,
        termination,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real_rows;
    use crate::reduction::rom_transfer;
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_problem(model: FitModel, s: C64, g: C64) -> DampingFitProblem {
        let one = from_real_rows(1, 1, &[1.0]);
        DampingFitProblem::new(
            vec![(s, Mat::from_fn(1, 1, |_, _| g))],
            one.clone(),
            one.clone(),
            one.clone(),
            one,
            Mat::zeros(1, 1),
            model,
        )
        .unwrap()
        .with_scale(1.0)
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c_: usize) -> CMat {
        Mat::from_fn(r, c_, |_, _| c(rng.random_range(-1.0..1.0), 0.0))
    }

    fn random_problem(seed: u64, model: FitModel) -> (DampingFitProblem, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 4;
        let x = random_mat(&mut rng, r, r);
        let kt = x.adjoint() * &x + linalg::identity(r);
        let data = (0..6)
            .map(|_| (c(0.0, rng.random_range(0.2..3.0)), random_mat(&mut rng, 2, 2)))
            .collect();
        let p = DampingFitProblem::new(
            data,
            linalg::identity(r),
            kt,
            random_mat(&mut rng, r, 2),
            random_mat(&mut rng, 2, r),
            random_mat(&mut rng, 2, r),
            model,
        )
        .unwrap();
        let params = (0..model.dim()).map(|_| rng.random_range(0.01..0.5)).collect();
        (p, params)
    }

    #[test]
    fn scalar_cost_value() {
        let p = scalar_problem(FitModel::Rayleigh, c(0.0, 2.0), c(1.0, 0.0));
        assert!((p.cost(&[0.0, 0.0]).unwrap() - 16.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn structural_scalar_gradient_matches_closed_form() {
        // J(η) = |g − 1/(−ω² + 1 + iη)|².
        let (w, g) = (2.0, c(0.3, -0.1));
        let p = scalar_problem(FitModel::Structural, c(0.0, w), g);
        let j = |eta: f64| (g - ONE / c(1.0 - w * w, eta)).norm_sqr();
        let dj = |eta: f64| {
            let z = c(1.0 - w * w, eta);
            let e = g - ONE / z;
            // dE/dη = i / z².
            2.0 * (e.conj() * (I / (z * z))).re
        };
        for eta in [0.0, 0.05, 0.7] {
            assert!((p.cost(&[eta]).unwrap() - j(eta)).abs() < 1e-14);
            let got = p.gradient(&[eta]).unwrap()[0];
            assert!((got - dj(eta)).abs() <= 1e-12 * dj(eta).abs().max(1e-12));
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        for model in [FitModel::Rayleigh, FitModel::Structural] {
            for seed in 0..20 {
                let (p, x) = random_problem(seed, model);
                let g = p.gradient(&x).unwrap();
                for i in 0..x.len() {
                    let h = 1e-6 * x[i].abs().max(1.0);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (p.cost(&xp).unwrap() - p.cost(&xm).unwrap()) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-8), "{model:?} {seed} {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    fn self_generated(model: FitModel, truth: &[f64]) -> (DampingFitProblem, ReducedSecondOrderModel) {
        let (p, _) = random_problem(99, model);
        let rom = ReducedSecondOrderModel::new(
            p.kt.clone(),
            ReducedDamping::Proportional(model.spec(truth).unwrap()),
            p.bt.clone(),
            p.cpt.clone(),
            p.cvt.clone(),
        )
        .unwrap();
        let data = (1..15)
            .map(|k| {
                let s = c(0.0, 0.25 * k as f64);
                (s, rom_transfer(&rom, s).unwrap())
            })
            .collect();
        (DampingFitProblem::from_rom(&rom, data, model).unwrap(), rom)
    }

    #[test]
    fn zero_residual_at_generating_parameters() {
        let truth = [0.02, 0.03];
        let (p, _) = self_generated(FitModel::Rayleigh, &truth);
        assert!(p.cost(&truth).unwrap() < 1e-20);
        assert!(norm(&p.gradient(&truth).unwrap()) < 1e-12);
        let res = fit(&p, &truth, &FitOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.termination, Termination::GradientTolerance);
    }

    #[test]
    fn recovers_rayleigh_parameters() {
        let truth = [0.02, 0.03];
        let (p, rom) = self_generated(FitModel::Rayleigh, &truth);
        for init in [[1e-4, 1e-4], [0.0, 0.0], [0.1, 0.1]] {
            let res = fit(&p, &init, &FitOptions::default()).unwrap();
            assert!((res.params[0] - truth[0]).abs() < 1e-6 * truth[0], "{res:?}");
            assert!((res.params[1] - truth[1]).abs() < 1e-6 * truth[1], "{res:?}");
            assert!(res.trace.windows(2).all(|w| w[1].1 <= w[0].1));
            assert!(res.final_cost <= p.cost(&init).unwrap());
            let fitted = res.apply(&rom).unwrap();
            assert_eq!(fitted.kt(), rom.kt());
            assert_eq!(fitted.bt(), rom.bt());
        }
    }

    #[test]
    fn recovers_structural_parameter() {
        let truth = [1e-3];
        let (p, _) = self_generated(FitModel::Structural, &truth);
        let res = fit(&p, &[0.0], &FitOptions::default()).unwrap();
        assert!((res.params[0] - truth[0]).abs() < 1e-6 * truth[0], "{res:?}");
    }

    #[test]
    fn singular_pencil_is_reported() {
        let p = scalar_problem(FitModel::Rayleigh, c(0.0, 1.0), ONE);
        assert!(matches!(p.cost(&[0.0, 0.0]), Err(Error::SingularReducedPencil { k: 0, .. })));
        assert!(matches!(fit(&p, &[0.0, 0.0], &FitOptions::default()), Err(Error::Optimizer(_))));
    }

    #[test]
    fn wrong_parameter_count_is_rejected() {
        let p = scalar_problem(FitModel::Structural, c(0.0, 2.0), ONE);
        assert!(matches!(p.cost(&[0.0, 0.0]), Err(Error::InvalidParams(_))));
    }
}
