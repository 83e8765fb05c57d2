//! w' discretization of a frozen LPV model.
//!
//! With `Phi(p) = (I - A(p) Ts/2)^-1`, the loop-free subsystem is
//!
//! ```text
//! [xi(k+1)]   [I + Phi A Ts   2 Phi     ] [xi(k)]
//! [ x(k)  ] = [Phi Ts/2       Phi Ts/2  ] [ubar(k)],     ubar(k) = B(p(k)) u(k)
//! ```
//!
//! and the full discrete system reads `y = C x + D u` on top of it. The same
//! per-step matrices are compared against classical Tustin blocks here.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{matrix_to_rows, LpvStateSpace};

/// Relative singularity threshold for `det(I - A Ts/2)`.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationConfig {
    ts: f64,
}

impl DiscretizationConfig {
    pub fn new(ts: f64) -> Result<Self> {
        if ts.is_finite() && ts > 0.0 {
            Ok(Self { ts })
        } else {
            Err(Error::Config(format!(
                "sampling time must be positive and finite, got {ts}"
            )))
        }
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }
}

/// Loop-free realization of the w' subsystem at one scheduling point.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRealization {
    pub m11: DMatrix<f64>,
    pub m12: DMatrix<f64>,
    pub m21: DMatrix<f64>,
    pub m22: DMatrix<f64>,
}

/// The `r^-1` block: `[xi(k+1); x(k)] = [I 2I; Ts/2 I  Ts/2 I] [xi(k); rx(k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RinvBlock {
    pub m11: DMatrix<f64>,
    pub m12: DMatrix<f64>,
    pub m21: DMatrix<f64>,
    pub m22: DMatrix<f64>,
}

impl RinvBlock {
    /// The full `2n x 2n` matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.m11.nrows();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&self.m11);
        out.view_mut((0, n), (n, n)).copy_from(&self.m12);
        out.view_mut((n, 0), (n, n)).copy_from(&self.m21);
        out.view_mut((n, n), (n, n)).copy_from(&self.m22);
        out
    }
}

/// Per-step update matrices shared by both discretizations.
///
/// ```text
/// s(k+1) = axi s(k) + bxi u(k)
///   y(k) = cxi s(k) + dxi u(k)
///   x(k) = xxi s(k) + xu  u(k)
/// ```
///
/// For the w' form `s` is `xi`; for Tustin blocks `s` is the classical
/// Tustin state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices {
    pub axi: DMatrix<f64>,
    pub bxi: DMatrix<f64>,
    pub cxi: DMatrix<f64>,
    pub dxi: DMatrix<f64>,
    pub xxi: DMatrix<f64>,
    pub xu: DMatrix<f64>,
}

impl StepMatrices {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Axi": matrix_to_rows(&self.axi),
            "Bxi": matrix_to_rows(&self.bxi),
            "Cxi": matrix_to_rows(&self.cxi),
            "Dxi": matrix_to_rows(&self.dxi),
            "Xxi": matrix_to_rows(&self.xxi),
            "Xu": matrix_to_rows(&self.xu),
        })
    }
}

/// `max(1, |A|_max * Ts/2)`, the scale applied to [`SINGULAR_REL_TOL`].
pub fn singularity_scale(a: &DMatrix<f64>, cfg: &DiscretizationConfig) -> f64 {
    (a.amax() * cfg.ts / 2.0).max(1.0)
}

/// `I - A Ts/2`.
pub fn loop_matrix(a: &DMatrix<f64>, cfg: &DiscretizationConfig) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::identity(n, n) - a * (cfg.ts / 2.0)
}

fn wellposedness_error(a: &DMatrix<f64>, cfg: &DiscretizationConfig, det: f64) -> Error {
    Error::Wellposedness {
        a: matrix_to_rows(a),
        ts: cfg.ts,
        det,
        step: None,
        p: None,
    }
}

/// `Phi = (I - A Ts/2)^-1`, by LU solve against the identity.
pub fn phi(a: &DMatrix<f64>, cfg: &DiscretizationConfig) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let lu = loop_matrix(a, cfg).lu();
    let det = lu.determinant();
    if !(det.abs() >= SINGULAR_REL_TOL * singularity_scale(a, cfg)) {
        return Err(wellposedness_error(a, cfg, det));
    }
    lu.solve(&DMatrix::identity(n, n))
        .ok_or_else(|| wellposedness_error(a, cfg, det))
}

/// Sigma blocks from a frozen `A`.
pub fn sigma_from_a(a: &DMatrix<f64>, cfg: &DiscretizationConfig) -> Result<SigmaRealization> {
    let ts = cfg.ts;
    let n = a.nrows();
    let phi = phi(a, cfg)?;
    let out = &phi * (ts / 2.0);
    Ok(SigmaRealization {
        m11: DMatrix::identity(n, n) + &phi * a * ts,
        m12: &phi * 2.0,
        m21: out.clone(),
        m22: out,
    })
}

pub fn sigma_step(
    model: &LpvStateSpace,
    p: &[f64],
    cfg: &DiscretizationConfig,
) -> Result<SigmaRealization> {
    model.domain().require(p)?;
    sigma_from_a(&model.a().eval(p)?, cfg)
}

/// Assembles the w' step matrices at `p`.
pub fn dt_step_matrices(
    model: &LpvStateSpace,
    p: &[f64],
    cfg: &DiscretizationConfig,
) -> Result<StepMatrices> {
    let m = model.frozen(p)?;
    let sigma = sigma_from_a(&m.a, cfg)?;
    Ok(assemble(&sigma, &m.b, &m.c, &m.d))
}

fn assemble(
    sigma: &SigmaRealization,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> StepMatrices {
    let xu = &sigma.m22 * b;
    StepMatrices {
        axi: sigma.m11.clone(),
        bxi: &sigma.m12 * b,
        cxi: c * &sigma.m21,
        dxi: c * &xu + d,
        xxi: sigma.m21.clone(),
        xu,
    }
}

/// Classical Tustin blocks at frozen `p`.
///
/// The Tustin state `x_d` equals `(Ts/2) xi`; the physical state is
/// recovered as `x = Phi x_d + Phi B Ts/2 u`, stored in `xxi` and `xu`.
pub fn tustin_frozen(
    model: &LpvStateSpace,
    p: &[f64],
    cfg: &DiscretizationConfig,
) -> Result<StepMatrices> {
    let m = model.frozen(p)?;
    let ts = cfg.ts;
    let n = model.n_x();
    let phi = phi(&m.a, cfg)?;
    let ad = &phi * (DMatrix::identity(n, n) + &m.a * (ts / 2.0));
    let bd = &phi * &m.b * ts;
    let cd = &m.c * &phi;
    let dd = &m.d + &cd * &m.b * (ts / 2.0);
    let xu = &phi * &m.b * (ts / 2.0);
    Ok(StepMatrices {
        axi: ad,
        bxi: bd,
        cxi: cd,
        dxi: dd,
        xxi: phi,
        xu,
    })
}

pub fn rinv_matrices(n_x: usize, cfg: &DiscretizationConfig) -> Result<RinvBlock> {
    if n_x == 0 {
        return Err(Error::Dimension("n_x must be at least 1".into()));
    }
    let eye = DMatrix::<f64>::identity(n_x, n_x);
    let half = &eye * (cfg.ts / 2.0);
    Ok(RinvBlock {
        m11: eye.clone(),
        m12: eye * 2.0,
        m21: half.clone(),
        m22: half,
    })
}

/// Largest entrywise deviation of the similarity relation between the w' and
/// Tustin blocks, each normalized by `max(1, |reference|_max)`:
/// `Axi = Ad`, `Bxi = (2/Ts) Bd`, `Cxi = (Ts/2) Cd`, `Dxi = Dd`.
pub fn similarity_residual(wprime: &StepMatrices, tustin: &StepMatrices, ts: f64) -> f64 {
    let rel = |lhs: &DMatrix<f64>, rhs: DMatrix<f64>| (lhs - &rhs).amax() / rhs.amax().max(1.0);
    [
        rel(&wprime.axi, tustin.axi.clone()),
        rel(&wprime.bxi, &tustin.bxi * (2.0 / ts)),
        rel(&wprime.cxi, &tustin.cxi * (ts / 2.0)),
        rel(&wprime.dxi, tustin.dxi.clone()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Sampled evidence for `det(I - A(p) Ts/2) != 0` over the scheduling box.
///
/// This is a sampled check, not a certificate: a singular point between
/// samples goes unnoticed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellposednessReport {
    #[serde(rename = "Ts")]
    pub ts: f64,
    pub samples_checked: usize,
    pub min_abs_det: f64,
    pub argmin_p: Vec<f64>,
    /// 2-norm condition number of `I - A(p) Ts/2`; infinite at exact singularity.
    pub max_condition_number: f64,
    pub singular_points: Vec<Vec<f64>>,
    pub passed: bool,
}

/// Evaluates the determinant condition at all box vertices, then an
/// endpoint-inclusive grid (row-major), then `random_samples` uniform draws
/// from a ChaCha8 stream seeded with `seed`.
pub fn wellposedness_check(
    model: &LpvStateSpace,
    cfg: &DiscretizationConfig,
    grid_per_dim: usize,
    random_samples: usize,
    seed: u64,
) -> Result<WellposednessReport> {
    if grid_per_dim < 2 {
        return Err(Error::Config(format!(
            "grid_per_dim must be at least 2, got {grid_per_dim}"
        )));
    }
    let domain = model.domain();
    let mut points = domain.vertices();
    points.extend(domain.grid(grid_per_dim));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_samples {
        points.push(
            domain
                .lower()
                .iter()
                .zip(domain.upper())
                .map(|(&lo, &hi)| if lo < hi { rng.random_range(lo..=hi) } else { lo })
                .collect(),
        );
    }

    let mut min_abs_det = f64::INFINITY;
    let mut argmin_p = Vec::new();
    let mut max_cond: f64 = 0.0;
    let mut singular_points = Vec::new();
    for p in &points {
        let a = model.a().eval(p)?;
        let m = loop_matrix(&a, cfg);
        let det = m.clone().lu().determinant().abs();
        if det < min_abs_det {
            min_abs_det = det;
            argmin_p = p.clone();
        }
        max_cond = max_cond.max(condition_number(m));
        if det < SINGULAR_REL_TOL * singularity_scale(&a, cfg) {
            singular_points.push(p.clone());
        }
    }
    Ok(WellposednessReport {
        ts: cfg.ts,
        samples_checked: points.len(),
        min_abs_det,
        argmin_p,
        max_condition_number: max_cond,
        passed: singular_points.is_empty(),
        singular_points,
    })
}

fn condition_number(m: DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
