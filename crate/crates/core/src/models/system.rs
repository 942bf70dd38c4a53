use faer::Mat;

use super::damping::{eval_coefficients, CoefficientEval, DampingSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, axpby, is_real, set_block, CMat, Lu, C64, ONE};

/// Full-order model `M q'' + D(s) q' + K q = Bu u`, `y = Cp q + Cv q'`.
#[derive(Debug, Clone)]
pub struct SecondOrderSystem {
    m: CMat,
    k: CMat,
    damping: DampingSpec,
    bu: CMat,
    cp: CMat,
    cv: CMat,
}

impl SecondOrderSystem {
    pub fn new(m: CMat, k: CMat, damping: DampingSpec, bu: CMat, cp: CMat, cv: CMat) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::DimensionMismatch("system order must be positive".into()));
        }
        let check = |name: &str, r: usize, c: usize, er: usize, ec: usize| {
            if (r, c) != (er, ec) {
                Err(Error::DimensionMismatch(format!(
                    "{name} is {r}x{c}, expected {er}x{ec}"
                )))
            } else {
                Ok(())
            }
        };
        check("M", m.nrows(), m.ncols(), n, n)?;
        check("K", k.nrows(), k.ncols(), n, n)?;
        let nin = bu.ncols();
        let nout = cp.nrows();
        if nin == 0 || nout == 0 {
            return Err(Error::DimensionMismatch("input and output counts must be positive".into()));
        }
        check("Bu", bu.nrows(), bu.ncols(), n, nin)?;
        check("Cp", cp.nrows(), cp.ncols(), nout, n)?;
        check("Cv", cv.nrows(), cv.ncols(), nout, n)?;
        let lu = Lu::new(m.as_ref());
        if !lu.is_well_conditioned() {
            return Err(Error::SingularMass { rcond: lu.rcond });
        }
        Ok(SecondOrderSystem {
            m,
            k,
            damping,
            bu,
            cp,
            cv,
        })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.bu.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.cp.nrows()
    }
    pub fn m(&self) -> &CMat {
        &self.m
    }
    pub fn k(&self) -> &CMat {
        &self.k
    }
    pub fn damping(&self) -> &DampingSpec {
        &self.damping
    }
    pub fn bu(&self) -> &CMat {
        &self.bu
    }
    pub fn cp(&self) -> &CMat {
        &self.cp
    }
    pub fn cv(&self) -> &CMat {
        &self.cv
    }

    pub fn with_damping(&self, damping: DampingSpec) -> Self {
        SecondOrderSystem {
            damping,
            ..self.clone()
        }
    }

    /// True when all system matrices have zero imaginary parts.
    pub fn is_real(&self) -> bool {
        [&self.m, &self.k, &self.bu, &self.cp, &self.cv]
            .iter()
            .all(|a| is_real(a.as_ref()))
    }

    pub fn has_velocity_output(&self) -> bool {
        linalg::max_abs(self.cv.as_ref()) > 0.0
    }

    pub fn has_position_output(&self) -> bool {
        linalg::max_abs(self.cp.as_ref()) > 0.0
    }
}

/// A transfer-function sample at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSample {
    pub node: C64,
    pub g: CMat,
    pub gp: Option<CMat>,
    pub gv: Option<CMat>,
    pub g_prime: Option<CMat>,
}

impl TransferSample {
    /// Max deviation of `Gp + Gv` from `G` relative to `‖G‖_F`.
    pub fn split_consistency(&self) -> Option<f64> {
        let (gp, gv) = (self.gp.as_ref()?, self.gv.as_ref()?);
        let sum = gp + gv;
        Some(linalg::rel_frob_err(sum.as_ref(), self.g.as_ref()))
    }
}

/// `φ(s) = n(s) M + d(s) K`.
pub fn eval_pencil(sys: &SecondOrderSystem, s: C64) -> Result<CMat> {
    let co = eval_coefficients(&sys.damping, s, false)?;
    Ok(pencil_from(sys, &co))
}

pub(crate) fn pencil_from(sys: &SecondOrderSystem, co: &CoefficientEval) -> CMat {
    axpby(co.n, sys.m.as_ref(), co.d, sys.k.as_ref())
}

pub(crate) struct Resolvent {
    pub co: CoefficientEval,
    pub lu: Lu,
}

pub(crate) fn factor_pencil(
    sys: &SecondOrderSystem,
    s: C64,
    with_derivatives: bool,
    node: Option<usize>,
) -> Result<Resolvent> {
    let co = eval_coefficients(&sys.damping, s, with_derivatives)?;
    let phi = pencil_from(sys, &co);
    let lu = Lu::new(phi.as_ref());
    if !lu.is_well_conditioned() {
        return Err(Error::SingularPencil {
            s,
            node,
            rcond: lu.rcond,
        });
    }
    Ok(Resolvent { co, lu })
}

/// `G(s) = (s Cv + Cp) φ(s)⁻¹ Bu`.
pub fn eval_transfer(sys: &SecondOrderSystem, s: C64) -> Result<CMat> {
    Ok(sample_at(sys, s, false, false, None)?.g)
}

/// `(Gp, Gv)` with `Gp = Cp φ⁻¹ Bu` and `Gv = s Cv φ⁻¹ Bu`.
pub fn eval_transfer_split(sys: &SecondOrderSystem, s: C64) -> Result<(CMat, CMat)> {
    let smp = sample_at(sys, s, true, false, None)?;
    Ok((smp.gp.unwrap(), smp.gv.unwrap()))
}

/// `G'(s) = Cv φ⁻¹ Bu − (s Cv + Cp) φ⁻¹ φ'(s) φ⁻¹ Bu`.
pub fn eval_transfer_derivative(sys: &SecondOrderSystem, s: C64) -> Result<CMat> {
    Ok(sample_at(sys, s, false, true, None)?.g_prime.unwrap())
}

/// Evaluates `G` and optionally the split and the derivative from a single
/// factorization of `φ(s)`.
pub fn sample_at(
    sys: &SecondOrderSystem,
    s: C64,
    split: bool,
    derivative: bool,
    node: Option<usize>,
) -> Result<TransferSample> {
    let res = factor_pencil(sys, s, derivative, node)?;
    let x = res.lu.solve(sys.bu.as_ref());
    let px = &sys.cp * &x;
    let vx = &sys.cv * &x;
    let gv = linalg::scaled(vx.as_ref(), s);
    let g = &px + &gv;
    let g_prime = if derivative {
        let np = res.co.n_prime.unwrap();
        let dp = res.co.d_prime.unwrap();
        let dphi = axpby(np, sys.m.as_ref(), dp, sys.k.as_ref());
        let y = res.lu.solve((&dphi * &x).as_ref());
        let cmix = axpby(s, sys.cv.as_ref(), ONE, sys.cp.as_ref());
        Some(&vx - &cmix * &y)
    } else {
        None
    };
    let (gp, gv) = if split { (Some(px), Some(gv)) } else { (None, None) };
    Ok(TransferSample {
        node: s,
        g,
        gp,
        gv,
        g_prime,
    })
}

/// First companion realization `(E, A, B, C)` with `E x' = A x + B u`.
#[derive(Debug, Clone)]
pub struct CompanionForm {
    pub e: CMat,
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
}

pub fn companion_form(sys: &SecondOrderSystem) -> Result<CompanionForm> {
    let (f, g) = sys.damping.constant_coefficients().ok_or_else(|| {
        Error::UnsupportedDamping(format!(
            "companion form needs constant damping coefficients, got {}",
            sys.damping.name()
        ))
    })?;
    let n = sys.n();
    let d = axpby(f, sys.m.as_ref(), g, sys.k.as_ref());
    let mut e = linalg::identity(2 * n);
    set_block(&mut e, n, n, sys.m.as_ref());
    let mut a = Mat::zeros(2 * n, 2 * n);
    set_block(&mut a, 0, n, linalg::identity(n).as_ref());
    set_block(&mut a, n, 0, (-&sys.k).as_ref());
    set_block(&mut a, n, n, (-&d).as_ref());
    let mut b = Mat::zeros(2 * n, sys.inputs());
    set_block(&mut b, n, 0, sys.bu.as_ref());
    let mut cm = Mat::zeros(sys.outputs(), 2 * n);
    set_block(&mut cm, 0, 0, sys.cp.as_ref());
    set_block(&mut cm, 0, n, sys.cv.as_ref());
    Ok(CompanionForm { e, a, b, c: cm })
}

impl CompanionForm {
    /// `C (sE − A)⁻¹ B`.
    pub fn transfer(&self, s: C64) -> Result<CMat> {
        let pencil = axpby(s, self.e.as_ref(), -ONE, self.a.as_ref());
        let lu = Lu::new(pencil.as_ref());
        if !lu.is_well_conditioned() {
            return Err(Error::SingularPencil {
                s,
                node: None,
                rcond: lu.rcond,
            });
        }
        Ok(&self.c * lu.solve(self.b.as_ref()))
    }
}
