//! Synthetic benchmark systems.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::damping::DampingSpec;
use super::system::SecondOrderSystem;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, ONE, ZERO};

/// Parameters of the three-row mass-spring-damper network.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdParams {
    pub mass: f64,
    pub m0: f64,
    pub k_row: f64,
    pub k_couple: f64,
    pub k_anchor: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        MsdParams {
            mass: 1.0,
            m0: 1.0,
            k_row: 2.0,
            k_couple: 1.0,
            k_anchor: 1.0,
            alpha: 0.002,
            beta: 0.002,
        }
    }
}

/// Three rows of `d` masses coupled to a mass `m0` that is anchored to the
/// ground.
///
/// Index 0 is `m0`; mass `j` of row `r` has index `1 + r·d + j`. The first
/// mass of each row is attached to `m0`, consecutive masses are joined by
/// springs, and the last mass of each row is free. Input and velocity output
/// act on all masses; the position output is zero.
pub fn generate_msd_chain(d: usize, params: &MsdParams) -> Result<SecondOrderSystem> {
    if d == 0 {
        return Err(Error::InvalidParams("d must be at least 1".into()));
    }
    let positive = [
        ("mass", params.mass),
        ("m0", params.m0),
        ("k_row", params.k_row),
        ("k_couple", params.k_couple),
        ("k_anchor", params.k_anchor),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
        }
    }
    let damping = DampingSpec::rayleigh(params.alpha, params.beta)?;
    let n = 3 * d + 1;
    let mut m = Mat::<crate::linalg::C64>::zeros(n, n);
    m[(0, 0)] = c(params.m0, 0.0);
    for i in 1..n {
        m[(i, i)] = c(params.mass, 0.0);
    }
    let mut kr = vec![0.0; n * n];
    let mut spring = |a: usize, b: Option<usize>, k: f64| {
        kr[a * n + a] += k;
        if let Some(b) = b {
            kr[b * n + b] += k;
            kr[a * n + b] -= k;
            kr[b * n + a] -= k;
        }
    };
    spring(0, None, params.k_anchor);
    for r in 0..3 {
        let first = 1 + r * d;
        spring(0, Some(first), params.k_couple);
        for j in 0..d - 1 {
            spring(first + j, Some(first + j + 1), params.k_row);
        }
    }
    let k = Mat::from_fn(n, n, |i, j| c(kr[i * n + j], 0.0));
    let bu = Mat::from_fn(n, 1, |_, _| ONE);
    let cp = Mat::zeros(1, n);
    let cv = Mat::from_fn(1, n, |_, _| ONE);
    SecondOrderSystem::new(m, k, damping, bu, cp, cv)
}

/// Options for [`generate_random_spd_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpdOptions {
    pub alpha: f64,
    pub beta: f64,
    /// Use `Bu = Cpᵀ` and `Cv = 0` (requires `m = p`).
    pub symmetric: bool,
    /// Draw a random velocity output instead of `Cv = 0`.
    pub velocity_output: bool,
}

impl Default for RandomSpdOptions {
    fn default() -> Self {
        RandomSpdOptions {
            alpha: 0.05,
            beta: 0.02,
            symmetric: false,
            velocity_output: false,
        }
    }
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn spd_from(x: &[f64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        let mut acc = if i == j { n as f64 } else { 0.0 };
        for l in 0..n {
            acc += x[l * n + i] * x[l * n + j];
        }
        c(acc, 0.0)
    })
}

/// Random system with `M = XᵀX + nI`, `K = YᵀY + nI` and Rayleigh damping,
/// deterministic in `seed`.
pub fn generate_random_spd_system(
    n: usize,
    m: usize,
    p: usize,
    seed: u64,
    opts: &RandomSpdOptions,
) -> Result<SecondOrderSystem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidParams("n, m, p must be positive".into()));
    }
    if opts.symmetric && m != p {
        return Err(Error::InvalidParams(format!(
            "symmetric configuration needs m = p, got m={m}, p={p}"
        )));
    }
    if opts.alpha <= 0.0 || opts.beta <= 0.0 {
        return Err(Error::InvalidParams("alpha and beta must be positive".into()));
    }
    let damping = DampingSpec::rayleigh(opts.alpha, opts.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xm = random_mat(&mut rng, n, n);
    let xk = random_mat(&mut rng, n, n);
    let mass = spd_from(&xm, n);
    let stiff = spd_from(&xk, n);
    let b = random_mat(&mut rng, n, m);
    let bu = Mat::from_fn(n, m, |i, j| c(b[i * m + j], 0.0));
    let (cp, cv) = if opts.symmetric {
        (Mat::from_fn(p, n, |i, j| bu[(j, i)]), Mat::zeros(p, n))
    } else {
        let cpd = random_mat(&mut rng, p, n);
        let cp = Mat::from_fn(p, n, |i, j| c(cpd[i * n + j], 0.0));
        let cv = if opts.velocity_output {
            let cvd = random_mat(&mut rng, p, n);
            Mat::from_fn(p, n, |i, j| c(cvd[i * n + j], 0.0))
        } else {
            Mat::zeros(p, n)
        };
        (cp, cv)
    };
    SecondOrderSystem::new(mass, stiff, damping, bu, cp, cv)
}

/// `M = I`, `K = tridiag(−1, 2, −1)`, structural damping, input at the first
/// degree of freedom and position output at the last.
pub fn generate_structural_chain(n: usize, eta: f64) -> Result<SecondOrderSystem> {
    if n < 2 {
        return Err(Error::InvalidParams("structural chain needs n >= 2".into()));
    }
    let damping = DampingSpec::structural(eta)?;
    let k = Mat::from_fn(n, n, |i, j| {
        if i == j {
            c(2.0, 0.0)
        } else if i.abs_diff(j) == 1 {
            c(-1.0, 0.0)
        } else {
            ZERO
        }
    });
    let mut bu = Mat::zeros(n, 1);
    bu[(0, 0)] = ONE;
    let mut cp = Mat::zeros(1, n);
    cp[(0, n - 1)] = ONE;
    SecondOrderSystem::new(Mat::identity(n, n), k, damping, bu, cp, Mat::zeros(1, n))
}
