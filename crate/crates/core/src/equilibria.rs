//! Equilibria, reproduction numbers, Jacobian classification and the
//! transcritical sweep in `beta`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EquilibriumError, ModelError};
use crate::linalg::{self, Mat2};
use crate::model::{full_field, Params, State};
use crate::regimes::{classify_regime, X0Role};

/// Real parts below this magnitude are reported non-hyperbolic.
pub const TOL_HYP: f64 = 1e-12;
/// Residual accepted by [`classify_equilibrium`].
pub const TOL_EQUILIBRIUM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReproductionNumbers {
    pub r0: f64,
    pub rd: f64,
    pub alpha_star: f64,
}

pub fn reproduction_numbers(p: &Params) -> Result<ReproductionNumbers, ModelError> {
    Ok(ReproductionNumbers {
        r0: p.beta / (p.d + p.eps),
        rd: p.alpha - 1.0,
        alpha_star: alpha_star(p)?,
    })
}

/// Upper end of the `k`-window of the endemic equilibrium.
pub fn alpha_star(p: &Params) -> Result<f64, ModelError> {
    let q = p.eps * p.theta / (p.d + p.eps);
    let den = 1.0 - p.alpha * q;
    if den <= 0.0 {
        return Err(ModelError::OutOfModel(
            "alpha*eps*theta/(d+eps) >= 1: the endemic window is unbounded",
        ));
    }
    Ok(p.alpha * (1.0 - q) / den)
}

/// `alpha_star`, or infinity when the window is unbounded.
pub(crate) fn alpha_star_or_inf(p: &Params) -> f64 {
    alpha_star(p).unwrap_or(f64::INFINITY)
}

pub fn dfe(p: &Params) -> Option<State> {
    (p.alpha > 1.0).then(|| State::new(1.0 - 1.0 / p.alpha, 0.0))
}

/// Closed-form endemic point, evaluated without the existence check.
pub fn ee_formula(p: &Params) -> State {
    let r0 = p.beta / (p.d + p.eps);
    let bracket = 1.0 - p.theta + p.theta * p.beta / (p.d + p.eps);
    let u2 = (1.0 - (p.beta - p.d) / (p.eps * p.alpha) / bracket) / r0;
    State::new(u2, u2 * (r0 - 1.0))
}

pub fn ee_exact(p: &Params) -> Option<State> {
    let k = p.k();
    if p.alpha > 1.0 && k > 1.0 && k < alpha_star_or_inf(p) {
        let s = ee_formula(p);
        (s.u > 0.0 && s.v > 0.0).then_some(s)
    } else {
        None
    }
}

/// First-order expansion of the endemic point in `eps`.
pub fn ee_expansion(p: &Params) -> State {
    let (a, k, d, e, th) = (p.alpha, p.k(), p.d, p.eps, p.theta);
    State::new(
        1.0 - k / a + e * (k - 1.0) * (k + th * k - a) / (a * d),
        e * (1.0 - k / a) * (k - 1.0) / d,
    )
}

pub fn jacobian(p: &Params, s: &State) -> Result<Mat2, ModelError> {
    let (u, v) = (s.u, s.v);
    let sum = u + v;
    if sum == 0.0 {
        return Err(ModelError::SingularOrigin { u, v });
    }
    let (a, th, b, d, e) = (p.alpha, p.theta, p.beta, p.d, p.eps);
    let s2 = sum * sum;
    let logistic = 1.0 - u - v;
    Ok([
        [
            e * a * logistic - e * a * (u + th * v) - e - b * v * v / s2,
            e * a * th * logistic - e * a * (u + th * v) - b * u * u / s2,
        ],
        [b * v * v / s2, b * u * u / s2 - d - e],
    ])
}

/// Central-difference Jacobian of the full field, step `1e-6*max(1, |s|)`.
pub fn fd_jacobian(p: &Params, s: &State) -> Result<Mat2, ModelError> {
    full_field(p, s)?;
    let h = 1e-6 * s.norm().max(1.0);
    let f = |u: f64, v: f64| full_field(p, &State::new(u, v));
    let (up, um) = (f(s.u + h, s.v)?, f(s.u - h, s.v)?);
    let (vp, vm) = (f(s.u, s.v + h)?, f(s.u, s.v - h)?);
    Ok([
        [(up.du - um.du) / (2.0 * h), (vp.du - vm.du) / (2.0 * h)],
        [(up.dv - um.dv) / (2.0 * h), (vp.dv - vm.dv) / (2.0 * h)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    SinkNode,
    SinkFocus,
    SourceNode,
    SourceFocus,
    Saddle,
    NonHyperbolic,
}

impl EquilibriumKind {
    pub fn from_eigenvalues(ls: &[Complex64; 2], tol: f64) -> Self {
        if ls.iter().any(|l| l.re.abs() < tol) {
            return EquilibriumKind::NonHyperbolic;
        }
        let complex = ls[0].im != 0.0;
        match (ls[0].re < 0.0, ls[1].re < 0.0) {
            (true, true) if complex => EquilibriumKind::SinkFocus,
            (true, true) => EquilibriumKind::SinkNode,
            (false, false) if complex => EquilibriumKind::SourceFocus,
            (false, false) => EquilibriumKind::SourceNode,
            _ => EquilibriumKind::Saddle,
        }
    }

    pub fn is_sink(&self) -> bool {
        matches!(self, EquilibriumKind::SinkNode | EquilibriumKind::SinkFocus)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumKind::SinkNode => "sink-node",
            EquilibriumKind::SinkFocus => "sink-focus",
            EquilibriumKind::SourceNode => "source-node",
            EquilibriumKind::SourceFocus => "source-focus",
            EquilibriumKind::Saddle => "saddle",
            EquilibriumKind::NonHyperbolic => "non-hyperbolic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub location: State,
    pub jacobian: Mat2,
    pub eigenvalues: [Complex64; 2],
    pub eigenvectors: [[Complex64; 2]; 2],
    pub kind: EquilibriumKind,
    pub exists_in_delta: bool,
}

pub fn classify_equilibrium(p: &Params, s: &State) -> Result<EquilibriumReport, EquilibriumError> {
    if s.u + s.v == 0.0 {
        return Err(EquilibriumError::OriginInput);
    }
    let f = full_field(p, s)?;
    let residual = f.du.abs().max(f.dv.abs());
    if residual > TOL_EQUILIBRIUM {
        return Err(EquilibriumError::NotEquilibrium {
            u: s.u,
            v: s.v,
            residual,
        });
    }
    let j = jacobian(p, s)?;
    let ls = linalg::eigenvalues(&j);
    Ok(EquilibriumReport {
        location: *s,
        jacobian: j,
        eigenvalues: ls,
        eigenvectors: [
            linalg::eigenvector(&j, ls[0]),
            linalg::eigenvector(&j, ls[1]),
        ],
        kind: EquilibriumKind::from_eigenvalues(&ls, TOL_HYP),
        exists_in_delta: s.in_delta(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRecord {
    pub beta: f64,
    pub x0: X0Role,
    pub dfe: Option<EquilibriumReport>,
    pub ee: Option<EquilibriumReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationBranch {
    pub betas: Vec<f64>,
    pub records: Vec<BranchRecord>,
    /// Refined `beta` where the endemic point leaves the DFE (`k = 1`).
    pub lower: Option<f64>,
    /// Refined `beta` where it collapses on the origin (`k = alpha*`).
    pub upper: Option<f64>,
}

impl BifurcationBranch {
    pub fn window_width(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }
}

const BISECT_TOL: f64 = 1e-10;

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bracket_and_refine<F: Fn(f64) -> f64 + Copy>(g: F, betas: &[f64]) -> Option<f64> {
    let vals: Vec<f64> = betas.iter().map(|&b| g(b)).collect();
    for i in 0..betas.len() - 1 {
        if vals[i] == 0.0 {
            return Some(betas[i]);
        }
        if (vals[i] > 0.0) != (vals[i + 1] > 0.0) {
            return Some(bisect(g, betas[i], betas[i + 1]));
        }
    }
    None
}

pub fn bifurcation_sweep(
    p: &Params,
    beta_lo: f64,
    beta_hi: f64,
    n: usize,
) -> Result<BifurcationBranch, EquilibriumError> {
    if n < 3 {
        return Err(EquilibriumError::InvalidRange("n must be at least 3"));
    }
    if !(beta_lo > 0.0 && beta_hi > beta_lo && beta_hi.is_finite()) {
        return Err(EquilibriumError::InvalidRange("need 0 < beta_lo < beta_hi"));
    }
    let betas: Vec<f64> = (0..n)
        .map(|i| beta_lo + (beta_hi - beta_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let records = betas
        .par_iter()
        .map(|&beta| {
            let q = p.with_beta(beta);
            let dfe = dfe(&q).and_then(|s| classify_equilibrium(&q, &s).ok());
            let ee = ee_exact(&q).and_then(|s| classify_equilibrium(&q, &s).ok());
            BranchRecord {
                beta,
                x0: classify_regime(&q).x0_role(),
                dfe,
                ee,
            }
        })
        .collect();
    let (lower, upper) = if p.alpha > 1.0 {
        let astar = alpha_star_or_inf(p);
        let k_of = move |b: f64| (b - p.d) / p.eps;
        (
            bracket_and_refine(move |b| k_of(b) - 1.0, &betas),
            bracket_and_refine(move |b| astar - k_of(b), &betas),
        )
    } else {
        (None, None)
    };
    Ok(BifurcationBranch {
        betas,
        records,
        lower,
        upper,
    })
}
