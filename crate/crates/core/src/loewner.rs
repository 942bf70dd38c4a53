//! Data matrices built from transfer-function samples.
//!
//! For left nodes `iθ_k` with weights `w_k` and right nodes `iζ_j` with
//! weights `ρ_j`, the matrices equal `Ľᴴ M Ř`, `Ľᴴ K Ř`, `Ľᴴ Bu`, `Cp Ř` and
//! `Cv Ř` for the quadrature factors of the Gramians, but only samples of
//! `G`, `Gp`, `Gv` (and `G′` in Hermite mode) enter the computation.

use std::f64::consts::FRAC_1_SQRT_2;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, set_block, CMat, C64, I, ZERO};
use crate::models::{eval_coefficients, sample_at, CoefficientEval, DampingSpec, SecondOrderSystem, TransferSample};
use crate::quadrature::{h_gap, validate_for_general_assembly, QuadratureRule, H_COLLISION_TOL};

/// Transfer samples aligned with the nodes of a rule.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub rule: QuadratureRule,
    pub samples: Vec<TransferSample>,
    pub coeffs: Vec<CoefficientEval>,
    pub has_derivatives: bool,
}

impl SampleSet {
    /// Validates alignment and shapes.
    pub fn from_parts(rule: QuadratureRule, samples: Vec<TransferSample>, coeffs: Vec<CoefficientEval>) -> Result<Self> {
        if samples.len() != rule.len() || coeffs.len() != rule.len() {
            return Err(Error::DimensionMismatch(format!(
                "rule has {} nodes, got {} samples and {} coefficient sets",
                rule.len(),
                samples.len(),
                coeffs.len()
            )));
        }
        let (p, m) = (samples[0].g.nrows(), samples[0].g.ncols());
        for (j, smp) in samples.iter().enumerate() {
            if smp.node != rule.node(j) || coeffs[j].s != rule.node(j) {
                return Err(Error::DimensionMismatch(format!("sample {j} is not at node i*{}", rule.freqs()[j])));
            }
            let shapes = [Some(&smp.g), smp.gp.as_ref(), smp.gv.as_ref(), smp.g_prime.as_ref()];
            if shapes.iter().flatten().any(|g| g.nrows() != p || g.ncols() != m) {
                return Err(Error::DimensionMismatch(format!("sample {j} is not {p}x{m}")));
            }
        }
        let has_derivatives = samples.iter().all(|s| s.g_prime.is_some()) && coeffs.iter().all(|c| c.h_prime.is_some());
        Ok(SampleSet {
            rule,
            samples,
            coeffs,
            has_derivatives,
        })
    }

    /// Samples `sys` at every node of `rule`. Nodes are evaluated in parallel
    /// and returned in rule order.
    pub fn from_system(sys: &SecondOrderSystem, rule: &QuadratureRule, split: bool, derivative: bool) -> Result<Self> {
        let pairs: Vec<(TransferSample, CoefficientEval)> = (0..rule.len())
            .into_par_iter()
            .map(|j| {
                let s = rule.node(j);
                let smp = sample_at(sys, s, split, derivative, Some(j))?;
                let co = eval_coefficients(sys.damping(), s, derivative)?;
                Ok((smp, co))
            })
            .collect::<Result<_>>()?;
        let (samples, coeffs) = pairs.into_iter().unzip();
        SampleSet::from_parts(rule.clone(), samples, coeffs)
    }

    pub fn outputs(&self) -> usize {
        self.samples[0].g.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.samples[0].g.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fills a missing split with `Gp = G`, `Gv = 0`, for data known to come
    /// from a position output.
    pub fn assume_position_output(mut self) -> Self {
        for s in &mut self.samples {
            if s.gp.is_none() || s.gv.is_none() {
                s.gp = Some(s.g.clone());
                s.gv = Some(Mat::zeros(s.g.nrows(), s.g.ncols()));
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMode {
    General,
    Hermite,
}

impl AssemblyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AssemblyMode::General => "general",
            AssemblyMode::Hermite => "hermite",
        }
    }
}

/// The data matrices `𝕄`, `𝕂` ((pK) × (mJ)), `𝔹` ((pK) × m), `ℂp`, `ℂv`
/// (p × (mJ)) with the rules and damping they were built from.
#[derive(Debug, Clone)]
pub struct LoewnerDataSet {
    pub mq: CMat,
    pub kq: CMat,
    pub bq: CMat,
    pub cpq: CMat,
    pub cvq: CMat,
    pub realified: bool,
    pub mode: AssemblyMode,
    pub left: QuadratureRule,
    pub right: QuadratureRule,
    pub damping: DampingSpec,
}

impl LoewnerDataSet {
    pub fn inputs(&self) -> usize {
        self.bq.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cpq.nrows()
    }
}

/// Block entries of `𝕄` and `𝕂` for one `(k, j)` pair.
type BlockPair = (CMat, CMat);

fn assemble_blocks<F>(kk: usize, jj: usize, p: usize, m: usize, block: F) -> Result<(CMat, CMat)>
where
    F: Fn(usize, usize) -> Result<BlockPair> + Sync,
{
    let rows: Vec<Vec<BlockPair>> = (0..kk)
        .into_par_iter()
        .map(|k| (0..jj).map(|j| block(k, j)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut mq = Mat::zeros(p * kk, m * jj);
    let mut kq = Mat::zeros(p * kk, m * jj);
    for (k, row) in rows.iter().enumerate() {
        for (j, (mb, kb)) in row.iter().enumerate() {
            set_block(&mut mq, k * p, j * m, mb.as_ref());
            set_block(&mut kq, k * p, j * m, kb.as_ref());
        }
    }
    Ok((mq, kq))
}

fn stack_rows(blocks: &[CMat], p: usize, m: usize) -> CMat {
    let mut out = Mat::zeros(p * blocks.len(), m);
    for (k, b) in blocks.iter().enumerate() {
        set_block(&mut out, k * p, 0, b.as_ref());
    }
    out
}

fn stack_cols(blocks: &[CMat], p: usize, m: usize) -> CMat {
    let mut out = Mat::zeros(p, m * blocks.len());
    for (j, b) in blocks.iter().enumerate() {
        set_block(&mut out, 0, j * m, b.as_ref());
    }
    out
}

/// `(a·X − b·Y) · scale`.
fn divided(a: C64, x: &CMat, b: C64, y: &CMat, scale: C64) -> CMat {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| (a * x[(i, j)] - b * y[(i, j)]) * scale)
}

/// General data formulas from left samples of `G` and right samples of the
/// split `Gp`, `Gv`.
pub fn assemble_general(left: &SampleSet, right: &SampleSet, damping: &DampingSpec) -> Result<LoewnerDataSet> {
    let violations = validate_for_general_assembly(&left.rule, &right.rule, damping);
    if !violations.is_empty() {
        return Err(Error::HypothesisViolation(violations.iter().map(|v| v.to_string()).collect()));
    }
    let (p, m) = (left.outputs(), left.inputs());
    if right.outputs() != p || right.inputs() != m {
        return Err(Error::DimensionMismatch(format!(
            "left samples are {p}x{m}, right samples are {}x{}",
            right.outputs(),
            right.inputs()
        )));
    }
    let mut split = Vec::with_capacity(right.len());
    for s in &right.samples {
        match (&s.gp, &s.gv) {
            (Some(gp), Some(gv)) => split.push((gp, gv)),
            _ => return Err(Error::MissingSplitSamples),
        }
    }
    let (kk, jj) = (left.len(), right.len());
    let w = left.rule.weights();
    let rho = right.rule.weights();
    let (mq, kq) = assemble_blocks(kk, jj, p, m, |k, j| {
        let (theta, zeta) = (left.rule.freqs()[k], right.rule.freqs()[j]);
        let (cl, cr) = (&left.coeffs[k], &right.coeffs[j]);
        let (gp, gv) = split[j];
        let t = Mat::from_fn(p, m, |a, b| gp[(a, b)] + gv[(a, b)] * (theta / zeta));
        let gl = &left.samples[k].g;
        let scale = c(w[k] * rho[j], 0.0) / (cl.d * cr.d * (cl.h - cr.h));
        Ok((divided(cl.d, gl, cr.d, &t, -scale), divided(cl.n, gl, cr.n, &t, scale)))
    })?;
    let bq = stack_rows(
        &(0..kk).map(|k| linalg::scaled(left.samples[k].g.as_ref(), c(w[k], 0.0))).collect::<Vec<_>>(),
        p,
        m,
    );
    let cpq = stack_cols(
        &(0..jj).map(|j| linalg::scaled(split[j].0.as_ref(), c(rho[j], 0.0))).collect::<Vec<_>>(),
        p,
        m,
    );
    let cvq = stack_cols(
        &(0..jj)
            .map(|j| linalg::scaled(split[j].1.as_ref(), c(rho[j], 0.0) / (I * right.rule.freqs()[j])))
            .collect::<Vec<_>>(),
        p,
        m,
    );
    Ok(LoewnerDataSet {
        mq,
        kq,
        bq,
        cpq,
        cvq,
        realified: false,
        mode: AssemblyMode::General,
        left: left.rule.clone(),
        right: right.rule.clone(),
        damping: damping.clone(),
    })
}

/// Hermite data formulas for position-output data.
///
/// The right nodes are the rule nodes `i s_j` and the left nodes are their
/// negatives, both with the rule weights. Samples at `−i s_k` are taken from
/// the mirrored entries of the same set. Blocks with `s_j = −s_k` use
/// derivatives at the common node.
pub fn assemble_hermite(samples: &SampleSet, damping: &DampingSpec) -> Result<LoewnerDataSet> {
    let rule = &samples.rule;
    let nn = rule.len();
    let (p, m) = (samples.outputs(), samples.inputs());
    if let Some(j) = samples
        .samples
        .iter()
        .position(|s| s.gv.as_ref().is_some_and(|gv| linalg::max_abs(gv.as_ref()) > 0.0))
    {
        return Err(Error::InvalidParams(format!(
            "Hermite assembly needs position-output data, sample {j} has a velocity part"
        )));
    }
    let mut problems = Vec::new();
    let mut mirror = Vec::with_capacity(nn);
    for k in 0..nn {
        match rule.mirror_index(k) {
            Some(i) => mirror.push(i),
            None => {
                problems.push(format!("node {k}: no sample at the mirrored frequency {}", -rule.freqs()[k]));
                mirror.push(usize::MAX);
            }
        }
        if rule.freqs()[k] == 0.0 {
            problems.push(format!("right node {k} is zero (zeta_j != 0 required)"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::HypothesisViolation(problems));
    }
    for j in 0..nn {
        if samples.samples[j].g_prime.is_none() || samples.coeffs[j].h_prime.is_none() {
            return Err(Error::MissingDerivative(j));
        }
    }
    // Left node k is -s_k, whose coefficients and sample sit at mirror[k].
    for k in 0..nn {
        for j in 0..nn {
            if j == mirror[k] {
                continue;
            }
            let gap = h_gap(samples.coeffs[mirror[k]].h, samples.coeffs[j].h);
            if gap < H_COLLISION_TOL {
                problems.push(format!("h(i theta_{k}) = h(i zeta_{j}) (relative gap {gap:.3e})"));
            }
        }
        let hp = samples.coeffs[k].h_prime.unwrap_or(ZERO);
        if hp == ZERO {
            problems.push(format!("h'(i s_{k}) = 0"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::HypothesisViolation(problems));
    }
    let eta = rule.weights();
    let (mq, kq) = assemble_blocks(nn, nn, p, m, |k, j| {
        let wt = c(eta[k] * eta[j], 0.0);
        if j == mirror[k] {
            let co = &samples.coeffs[j];
            let g = &samples.samples[j].g;
            let gd = samples.samples[j].g_prime.as_ref().unwrap();
            let (np, dp, hp) = (co.n_prime.unwrap(), co.d_prime.unwrap(), co.h_prime.unwrap());
            let scale = wt / (co.d * co.d * hp);
            let mb = Mat::from_fn(p, m, |a, b| -(dp * g[(a, b)] + co.d * gd[(a, b)]) * scale);
            let kb = Mat::from_fn(p, m, |a, b| (np * g[(a, b)] + co.n * gd[(a, b)]) * scale);
            Ok((mb, kb))
        } else {
            let (cl, cr) = (&samples.coeffs[mirror[k]], &samples.coeffs[j]);
            let gl = &samples.samples[mirror[k]].g;
            let gr = &samples.samples[j].g;
            let scale = wt / (cl.d * cr.d * (cl.h - cr.h));
            Ok((divided(cl.d, gl, cr.d, gr, -scale), divided(cl.n, gl, cr.n, gr, scale)))
        }
    })?;
    let bq = stack_rows(
        &(0..nn)
            .map(|k| linalg::scaled(samples.samples[mirror[k]].g.as_ref(), c(eta[k], 0.0)))
            .collect::<Vec<_>>(),
        p,
        m,
    );
    let cpq = stack_cols(
        &(0..nn)
            .map(|j| linalg::scaled(samples.samples[j].g.as_ref(), c(eta[j], 0.0)))
            .collect::<Vec<_>>(),
        p,
        m,
    );
    Ok(LoewnerDataSet {
        mq,
        kq,
        bq,
        cpq,
        cvq: Mat::zeros(p, m * nn),
        realified: false,
        mode: AssemblyMode::Hermite,
        left: rule.negated(),
        right: rule.clone(),
        damping: damping.clone(),
    })
}

/// Block-diagonal `I ⊗ J_ℓ` with `J_ℓ = (1/√2)[[I, −iI], [I, iI]]` acting on
/// `pairs` node pairs of block size `l`.
pub fn realification_transform(l: usize, pairs: usize) -> CMat {
    let s = FRAC_1_SQRT_2;
    let mut t = Mat::zeros(2 * l * pairs, 2 * l * pairs);
    for q in 0..pairs {
        let o = 2 * l * q;
        for i in 0..l {
            t[(o + i, o + i)] = c(s, 0.0);
            t[(o + i, o + l + i)] = c(0.0, -s);
            t[(o + l + i, o + i)] = c(s, 0.0);
            t[(o + l + i, o + l + i)] = c(0.0, s);
        }
    }
    t
}

/// Largest imaginary part relative to the Frobenius norm.
fn imag_residual(a: &CMat) -> f64 {
    let f = linalg::frob(a.as_ref());
    if f == 0.0 {
        0.0
    } else {
        linalg::max_abs_imag(a.as_ref()) / f
    }
}

/// Tolerance on the relative imaginary residual after realification.
pub const REALIFY_TOL: f64 = 1e-10;

/// Maps conjugate-symmetric data to real matrices by the per-pair unitary
/// transforms. Both rules must be pair ordered.
pub fn realify(ds: &LoewnerDataSet) -> Result<LoewnerDataSet> {
    realify_with_residual(ds).map(|(out, _)| out)
}

/// [`realify`] plus the largest relative imaginary residual that was dropped.
pub fn realify_with_residual(ds: &LoewnerDataSet) -> Result<(LoewnerDataSet, f64)> {
    if ds.realified {
        return Ok((ds.clone(), 0.0));
    }
    if !ds.damping.is_conjugate_symmetric() {
        return Err(Error::UnsupportedDamping(format!(
            "{} damping does not satisfy conj(f(s)) = f(conj(s))",
            ds.damping.name()
        )));
    }
    for rule in [&ds.left, &ds.right] {
        if !rule.is_pair_ordered() {
            return Err(Error::InvalidParams(format!(
                "{} rule is not ordered in mirrored pairs",
                rule.side().as_str()
            )));
        }
    }
    let (p, m) = (ds.outputs(), ds.inputs());
    let tl = realification_transform(p, ds.left.len() / 2);
    let tr = realification_transform(m, ds.right.len() / 2);
    let tla = tl.adjoint();
    let mq = tla * &ds.mq * &tr;
    let kq = tla * &ds.kq * &tr;
    let bq = tla * &ds.bq;
    let cpq = &ds.cpq * &tr;
    let cvq = &ds.cvq * &tr;
    let worst = [&mq, &kq, &bq, &cpq, &cvq].iter().map(|a| imag_residual(a)).fold(0.0, f64::max);
    if worst > REALIFY_TOL {
        return Err(Error::NotConjugateSymmetric { max_violation: worst });
    }
    let out = LoewnerDataSet {
        mq: linalg::real_part(mq.as_ref()),
        kq: linalg::real_part(kq.as_ref()),
        bq: linalg::real_part(bq.as_ref()),
        cpq: linalg::real_part(cpq.as_ref()),
        cvq: linalg::real_part(cvq.as_ref()),
        realified: true,
        ..ds.clone()
    };
    Ok((out, worst))
}

/// Undoes the diagonal scalings that relate the data matrices to the
/// second-order Loewner pair: `𝕄 = −Dl 𝕃 Dr`, `𝕂 = Dl 𝕃s Dr` with
/// `Dl = diag(w_k / d(iθ_k))` and `Dr = diag(ρ_j / d(iζ_j))`.
pub fn to_so_loewner(ds: &LoewnerDataSet) -> Result<(CMat, CMat)> {
    if !matches!(ds.damping, DampingSpec::Rayleigh { .. }) {
        return Err(Error::UnsupportedDamping(format!(
            "second-order Loewner form needs Rayleigh damping, got {}",
            ds.damping.name()
        )));
    }
    if ds.realified {
        return Err(Error::InvalidParams("second-order Loewner form needs complex data".into()));
    }
    if linalg::max_abs(ds.cvq.as_ref()) > 0.0 {
        return Err(Error::InvalidParams("second-order Loewner form needs Cv = 0".into()));
    }
    let (dl, dr) = loewner_scalings(ds)?;
    let (p, m) = (ds.outputs(), ds.inputs());
    let l = Mat::from_fn(ds.mq.nrows(), ds.mq.ncols(), |a, b| -ds.mq[(a, b)] / (dl[a / p] * dr[b / m]));
    let ls = Mat::from_fn(ds.kq.nrows(), ds.kq.ncols(), |a, b| ds.kq[(a, b)] / (dl[a / p] * dr[b / m]));
    Ok((l, ls))
}

/// Inverse of [`to_so_loewner`].
pub fn from_so_loewner(ds: &LoewnerDataSet, l: &CMat, ls: &CMat) -> Result<(CMat, CMat)> {
    let (dl, dr) = loewner_scalings(ds)?;
    let (p, m) = (ds.outputs(), ds.inputs());
    let mq = Mat::from_fn(l.nrows(), l.ncols(), |a, b| -l[(a, b)] * dl[a / p] * dr[b / m]);
    let kq = Mat::from_fn(ls.nrows(), ls.ncols(), |a, b| ls[(a, b)] * dl[a / p] * dr[b / m]);
    Ok((mq, kq))
}

fn loewner_scalings(ds: &LoewnerDataSet) -> Result<(Vec<C64>, Vec<C64>)> {
    let scal = |rule: &QuadratureRule| -> Result<Vec<C64>> {
        (0..rule.len())
            .map(|k| {
                let co = eval_coefficients(&ds.damping, rule.node(k), false)?;
                Ok(c(rule.weights()[k], 0.0) / co.d)
            })
            .collect()
    };
    Ok((scal(&ds.left)?, scal(&ds.right)?))
}
