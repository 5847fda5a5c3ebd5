//! Blow-up of the extinction singularity at the origin.
//!
//! Two parameter regimes are covered. In `O1` (`beta - d` of order one) the
//! auxiliary field is blown up with charts `K1: u = r1 u1, v = r1` and
//! `K2: u = r2, v = r2 v2`. In `Oeps` (`beta = d + eps k`) the model is first
//! rescaled with `v = eps x` (the `Pre` chart), then `(u, x, eps)` is blown
//! up with `K1: (r1 u1, r1, r1 e1)`, `K2: (r2 u2, r2 x2, r2)` and
//! `K3: (r3, r3 x3, r3 e3)`. Every chart field is the exact desingularized
//! field: the pushforward times the radial coordinate equals the field
//! being blown up.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::BlowupError;
use crate::integrator::{integrate_system, Direction, SystemEvent};
use crate::linalg::{self, Mat2};
use crate::model::{aux_field, Params, State};

/// Tolerance on eigenvalue real parts for the hyperbolicity flag.
pub const TOL_HYPERBOLIC: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    O1,
    Oeps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Chart {
    Pre,
    K1,
    K2,
    K3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ChartId {
    pub regime: Regime,
    pub chart: Chart,
}

impl ChartId {
    pub const O1_K1: ChartId = ChartId {
        regime: Regime::O1,
        chart: Chart::K1,
    };
    pub const O1_K2: ChartId = ChartId {
        regime: Regime::O1,
        chart: Chart::K2,
    };
    pub const OEPS_PRE: ChartId = ChartId {
        regime: Regime::Oeps,
        chart: Chart::Pre,
    };
    pub const OEPS_K1: ChartId = ChartId {
        regime: Regime::Oeps,
        chart: Chart::K1,
    };
    pub const OEPS_K2: ChartId = ChartId {
        regime: Regime::Oeps,
        chart: Chart::K2,
    };
    pub const OEPS_K3: ChartId = ChartId {
        regime: Regime::Oeps,
        chart: Chart::K3,
    };

    pub const ALL: [ChartId; 6] = [
        ChartId::O1_K1,
        ChartId::O1_K2,
        ChartId::OEPS_PRE,
        ChartId::OEPS_K1,
        ChartId::OEPS_K2,
        ChartId::OEPS_K3,
    ];

    pub fn new(regime: Regime, chart: Chart) -> Result<Self, BlowupError> {
        match (regime, chart) {
            (Regime::O1, Chart::K1 | Chart::K2) | (Regime::Oeps, _) => {
                Ok(ChartId { regime, chart })
            }
            _ => Err(BlowupError::InvalidChart { regime, chart }),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        ChartId::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }

    pub fn name(&self) -> &'static str {
        match (self.regime, self.chart) {
            (Regime::O1, Chart::K1) => "O1-K1",
            (Regime::O1, Chart::K2) => "O1-K2",
            (Regime::Oeps, Chart::Pre) => "Oeps-pre",
            (Regime::Oeps, Chart::K1) => "Oeps-K1",
            (Regime::Oeps, Chart::K2) => "Oeps-K2",
            (Regime::Oeps, Chart::K3) => "Oeps-K3",
            _ => "invalid",
        }
    }

    pub fn dim(&self) -> usize {
        match (self.regime, self.chart) {
            (Regime::O1, _) | (_, Chart::Pre) => 2,
            _ => 3,
        }
    }

    /// Index of the radial coordinate (for `Pre`, none: `eps` plays that role).
    pub fn radial_index(&self) -> Option<usize> {
        match self.chart {
            Chart::Pre => None,
            _ => Some(0),
        }
    }

    /// Coordinate indices of the invariant-plane block used for eigen-data,
    /// and the transverse coordinate in 3D charts.
    pub fn block(&self) -> ([usize; 2], Option<usize>) {
        match (self.regime, self.chart) {
            (Regime::Oeps, Chart::K1 | Chart::K3) => ([0, 1], Some(2)),
            (Regime::Oeps, Chart::K2) => ([1, 2], Some(0)),
            _ => ([0, 1], None),
        }
    }

    pub fn coord_names(&self) -> &'static [&'static str] {
        match (self.regime, self.chart) {
            (Regime::O1, Chart::K1) => &["r1", "u1"],
            (Regime::O1, _) => &["r2", "v2"],
            (_, Chart::Pre) => &["u", "x"],
            (_, Chart::K1) => &["r1", "u1", "e1"],
            (_, Chart::K2) => &["r2", "u2", "x2"],
            (_, Chart::K3) => &["r3", "x3", "e3"],
        }
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_dim(id: ChartId, pt: &[f64]) -> Result<(), BlowupError> {
    if pt.len() != id.dim() {
        return Err(BlowupError::Dimension {
            expected: id.dim(),
            got: pt.len(),
        });
    }
    Ok(())
}

pub fn o1_k1_field(p: &Params, r1: f64, u1: f64) -> [f64; 2] {
    let Params {
        alpha: a,
        theta: th,
        beta: b,
        d,
        eps: e,
    } = *p;
    [
        -r1 * (d + e + (d - b + e) * u1),
        (1.0 + u1) * (a * e * th + (d - b + a * e) * u1 - a * e * r1 * (1.0 + u1) * (th + u1)),
    ]
}

pub fn o1_k2_field(p: &Params, r2: f64, v2: f64) -> [f64; 2] {
    let Params {
        alpha: a,
        theta: th,
        beta: b,
        d,
        eps: e,
    } = *p;
    let m = a * e * (1.0 + v2) * (1.0 + th * v2) * (r2 * (1.0 + v2) - 1.0);
    [
        r2 * (-m - b * v2 - e * (1.0 + v2)),
        v2 * (m + b * (1.0 + v2) - d * (1.0 + v2)),
    ]
}

/// Rescaled field in `(u, x)` with `v = eps x`, `beta = d + eps k`; `eps` is
/// passed explicitly so the blow-up charts can vary it.
pub fn pre_field(p: &Params, eps: f64, u: f64, x: f64) -> [f64; 2] {
    let (a, th, d, k) = (p.alpha, p.theta, p.d, p.k());
    let ex = eps * x;
    [
        -d * u * x + a * (u + th * ex) * (1.0 - u - ex) * (u + ex) - u * (u + ex) - k * u * ex,
        -d * x * x + k * u * x - x * (u + ex),
    ]
}

pub fn oeps_k1_field(p: &Params, y: &[f64; 3]) -> [f64; 3] {
    let (a, th, d, k) = (p.alpha, p.theta, p.d, p.k());
    let [r, u1, e1] = *y;
    let g = d + e1 * r - (k - 1.0) * u1;
    [
        -r * g,
        -((e1 * r + u1) * (a * (r * (e1 * r + u1) - 1.0) * (e1 * th * r + u1) + k * u1)),
        e1 * g,
    ]
}

pub fn oeps_k2_field(p: &Params, y: &[f64; 3]) -> [f64; 3] {
    let (a, th, d, k) = (p.alpha, p.theta, p.d, p.k());
    let [r, u2, x2] = *y;
    [
        0.0,
        -d * u2 * x2 + a * (u2 + th * r * x2) * (1.0 - r * u2 - r * r * x2) * (u2 + r * x2)
            - u2 * (u2 + r * x2)
            - k * r * u2 * x2,
        -x2 * (d * x2 - k * u2 + r * x2 + u2),
    ]
}

pub fn oeps_k3_field(p: &Params, y: &[f64; 3]) -> [f64; 3] {
    let (a, th, d, k) = (p.alpha, p.theta, p.d, p.k());
    let [r, x3, e3] = *y;
    let rex = r * e3 * x3;
    let m =
        -d * x3 + a * (1.0 + th * rex) * (1.0 - r - r * rex) * (1.0 + rex) - (1.0 + rex) - k * rex;
    [r * m, x3 * (-d * x3 + k - 1.0 - rex) - x3 * m, -e3 * m]
}

/// Evaluates the desingularized field of chart `id` at `pt`.
pub fn chart_field(id: ChartId, p: &Params, pt: &[f64]) -> Result<Vec<f64>, BlowupError> {
    ChartId::new(id.regime, id.chart)?;
    check_dim(id, pt)?;
    Ok(match (id.regime, id.chart) {
        (Regime::O1, Chart::K1) => o1_k1_field(p, pt[0], pt[1]).to_vec(),
        (Regime::O1, _) => o1_k2_field(p, pt[0], pt[1]).to_vec(),
        (_, Chart::Pre) => pre_field(p, p.eps, pt[0], pt[1]).to_vec(),
        (_, Chart::K1) => oeps_k1_field(p, &[pt[0], pt[1], pt[2]]).to_vec(),
        (_, Chart::K2) => oeps_k2_field(p, &[pt[0], pt[1], pt[2]]).to_vec(),
        (_, Chart::K3) => oeps_k3_field(p, &[pt[0], pt[1], pt[2]]).to_vec(),
    })
}

/// A point in a chart together with its blow-down image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub coords: Vec<f64>,
    /// Image in the original `(u, v)` plane.
    pub image: State,
    /// `eps` at the image (a coordinate in the `Oeps` blow-up charts).
    pub eps: f64,
}

impl ChartPoint {
    pub fn new(chart: ChartId, p: &Params, coords: &[f64]) -> Result<Self, BlowupError> {
        check_dim(chart, coords)?;
        if let Some(i) = chart.radial_index() {
            if coords[i] < 0.0 {
                return Err(BlowupError::RadialZero(coords[i]));
            }
        }
        let (u, x_or_v, eps) = blow_down(chart, p, coords);
        let v = match chart.regime {
            Regime::O1 => x_or_v,
            Regime::Oeps => eps * x_or_v,
        };
        Ok(ChartPoint {
            chart,
            coords: coords.to_vec(),
            image: State::new(u, v),
            eps,
        })
    }
}

/// `(u, v, eps)` for `O1`, `(u, x, eps)` for `Oeps`.
fn blow_down(id: ChartId, p: &Params, c: &[f64]) -> (f64, f64, f64) {
    match (id.regime, id.chart) {
        (Regime::O1, Chart::K1) => (c[0] * c[1], c[0], p.eps),
        (Regime::O1, _) => (c[0], c[0] * c[1], p.eps),
        (_, Chart::Pre) => (c[0], c[1], p.eps),
        (_, Chart::K1) => (c[0] * c[1], c[0], c[0] * c[2]),
        (_, Chart::K2) => (c[0] * c[1], c[0] * c[2], c[0]),
        (_, Chart::K3) => (c[0], c[0] * c[1], c[0] * c[2]),
    }
}

/// Pushforward of a chart vector `f` at `c` under the blow-down map.
fn pushforward(id: ChartId, p: &Params, c: &[f64], f: &[f64]) -> Vec<f64> {
    match (id.regime, id.chart) {
        (Regime::O1, Chart::K1) => vec![c[1] * f[0] + c[0] * f[1], f[0]],
        (Regime::O1, _) => vec![f[0], c[1] * f[0] + c[0] * f[1]],
        (_, Chart::Pre) => vec![f[0], p.eps * f[1]],
        (_, Chart::K1) => vec![c[1] * f[0] + c[0] * f[1], f[0], c[2] * f[0] + c[0] * f[2]],
        (_, Chart::K2) => vec![c[1] * f[0] + c[0] * f[1], c[2] * f[0] + c[0] * f[2], f[0]],
        (_, Chart::K3) => vec![f[0], c[1] * f[0] + c[0] * f[1], c[2] * f[0] + c[0] * f[2]],
    }
}

/// Max relative deviation between the rescaled pushforward of the chart
/// field and the field it desingularizes.
pub fn blowdown_consistency(id: ChartId, p: &Params, pt: &[f64]) -> Result<f64, BlowupError> {
    blowdown_consistency_with(id, p, pt, |c| {
        chart_field(id, p, c).expect("dimension checked by the caller")
    })
}

/// As [`blowdown_consistency`] with a caller-supplied chart field.
pub fn blowdown_consistency_with<F>(
    id: ChartId,
    p: &Params,
    pt: &[f64],
    field: F,
) -> Result<f64, BlowupError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    ChartId::new(id.regime, id.chart)?;
    check_dim(id, pt)?;
    let radial = match id.radial_index() {
        Some(i) => pt[i],
        None => p.eps,
    };
    if !(radial > 0.0) {
        return Err(BlowupError::RadialZero(radial));
    }
    let f = field(pt);
    if f.len() != id.dim() {
        return Err(BlowupError::Dimension {
            expected: id.dim(),
            got: f.len(),
        });
    }
    let push: Vec<f64> = pushforward(id, p, pt, &f)
        .iter()
        .map(|x| x * radial)
        .collect();
    let (u, y, eps) = blow_down(id, p, pt);
    let target: Vec<f64> = match (id.regime, id.chart) {
        (Regime::O1, _) => {
            let g = aux_field(p, &State::new(u, y));
            vec![g.du, g.dv]
        }
        (_, Chart::Pre) => {
            // the pre chart itself blows down to the auxiliary field
            let g = aux_field(p, &State::new(u, eps * y));
            vec![g.du, g.dv]
        }
        _ => {
            let g = pre_field(p, eps, u, y);
            vec![g[0], g[1], 0.0]
        }
    };
    let scale = target
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let dev = push
        .iter()
        .zip(&target)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(dev / scale)
}

/// Exact coordinate change between overlapping charts of one regime.
pub fn transition_map(from: ChartId, to: ChartId, pt: &[f64]) -> Result<Vec<f64>, BlowupError> {
    check_dim(from, pt)?;
    if from.regime != to.regime {
        return Err(BlowupError::RegimeMismatch(
            "transition maps stay within one regime",
        ));
    }
    let nz = |x: f64, what: &'static str| {
        if x == 0.0 || !x.is_finite() {
            Err(BlowupError::Overlap(what))
        } else {
            Ok(x)
        }
    };
    use Chart::*;
    Ok(match (from.regime, from.chart, to.chart) {
        (_, a, b) if a == b => pt.to_vec(),
        (Regime::O1, K1, K2) => {
            let u1 = nz(pt[1], "u1 must be nonzero")?;
            vec![pt[0] * u1, 1.0 / u1]
        }
        (Regime::O1, K2, K1) => {
            let v2 = nz(pt[1], "v2 must be nonzero")?;
            vec![pt[0] * v2, 1.0 / v2]
        }
        (Regime::Oeps, K1, K2) => {
            let e1 = nz(pt[2], "e1 must be nonzero")?;
            vec![pt[0] * e1, pt[1] / e1, 1.0 / e1]
        }
        (Regime::Oeps, K2, K1) => {
            let x2 = nz(pt[2], "x2 must be nonzero")?;
            vec![pt[0] * x2, pt[1] / x2, 1.0 / x2]
        }
        (Regime::Oeps, K1, K3) => {
            let u1 = nz(pt[1], "u1 must be nonzero")?;
            vec![pt[0] * u1, 1.0 / u1, pt[2] / u1]
        }
        (Regime::Oeps, K3, K1) => {
            let x3 = nz(pt[1], "x3 must be nonzero")?;
            vec![pt[0] * x3, 1.0 / x3, pt[2] / x3]
        }
        (Regime::Oeps, K2, K3) => {
            let u2 = nz(pt[1], "u2 must be nonzero")?;
            vec![pt[0] * u2, pt[2] / u2, 1.0 / u2]
        }
        (Regime::Oeps, K3, K2) => {
            let e3 = nz(pt[2], "e3 must be nonzero")?;
            vec![pt[0] * e3, 1.0 / e3, pt[1] / e3]
        }
        _ => return Err(BlowupError::NoTransition(from, to)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartEquilibrium {
    pub chart: ChartId,
    pub label: &'static str,
    pub location: Vec<f64>,
    /// Closed-form eigenvalues of the invariant-plane block.
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Vec<[Complex64; 2]>,
    /// Analytic Jacobian of the block.
    pub block_jacobian: Mat2,
    /// Eigenvalue in the transverse direction (3D charts).
    pub transverse: Option<f64>,
    pub hyperbolic: bool,
}

fn make_eq(
    chart: ChartId,
    label: &'static str,
    location: Vec<f64>,
    eigenvalues: [Complex64; 2],
    jac: Mat2,
    transverse: Option<f64>,
) -> ChartEquilibrium {
    let eigenvectors = eigenvalues
        .iter()
        .map(|l| linalg::eigenvector(&jac, *l))
        .collect();
    let hyperbolic = eigenvalues
        .iter()
        .map(|l| l.re)
        .chain(transverse)
        .all(|re| re.abs() > TOL_HYPERBOLIC);
    ChartEquilibrium {
        chart,
        label,
        location,
        eigenvalues: eigenvalues.to_vec(),
        eigenvectors,
        block_jacobian: jac,
        transverse,
        hyperbolic,
    }
}

fn real(a: f64, b: f64) -> [Complex64; 2] {
    [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
}

/// Roots of `l^2 - tr l + det`.
fn from_trace_det(tr: f64, det: f64) -> [Complex64; 2] {
    linalg::eigenvalues(&[[tr, -det], [1.0, 0.0]])
}

/// `u1^(0) = alpha eps theta / (beta - d - alpha eps)`.
pub fn u1_p1(p: &Params) -> f64 {
    p.alpha * p.eps * p.theta / (p.beta - p.d - p.alpha * p.eps)
}

/// `v2^(2) = (beta - d - alpha eps) / (alpha eps theta)`.
pub fn v2_p2(p: &Params) -> f64 {
    (p.beta - p.d - p.alpha * p.eps) / (p.alpha * p.eps * p.theta)
}

/// Equilibria of chart `id` with closed-form eigen-data. `Oeps` listings are
/// taken on the invariant plane where the `eps` coordinate vanishes.
pub fn chart_equilibria(id: ChartId, p: &Params) -> Result<Vec<ChartEquilibrium>, BlowupError> {
    ChartId::new(id.regime, id.chart)?;
    let (a, th, b, d, e) = (p.alpha, p.theta, p.beta, p.d, p.eps);
    let mut out = Vec::new();
    match (id.regime, id.chart) {
        (Regime::O1, Chart::K1) => {
            let gap = b - d - a * e;
            if gap <= 0.0 {
                return Err(BlowupError::RegimeMismatch("p1 needs beta > d + alpha eps"));
            }
            let u0 = u1_p1(p);
            let lr = -(d + e + (d + e - b) * u0);
            let lu = (1.0 + u0) * (d + a * e - b);
            let c = -a * e * (1.0 + u0).powi(2) * (th + u0);
            out.push(make_eq(
                id,
                "p1",
                vec![0.0, u0],
                real(lr, lu),
                [[lr, 0.0], [c, lu]],
                None,
            ));
        }
        (Regime::O1, _) => {
            let gap = b - d - a * e;
            out.push(make_eq(
                id,
                "p2",
                vec![0.0, 0.0],
                real(e * (a - 1.0), gap),
                [[e * (a - 1.0), 0.0], [0.0, gap]],
                None,
            ));
            if th > 0.0 && gap > 0.0 {
                let v = v2_p2(p);
                let lr = a * e * (1.0 + v) * (1.0 + th * v) - b * v - e * (1.0 + v);
                let lv = -(1.0 + v) * gap;
                let c = v * a * e * (1.0 + v).powi(2) * (1.0 + th * v);
                out.push(make_eq(
                    id,
                    "p1",
                    vec![0.0, v],
                    real(lr, lv),
                    [[lr, 0.0], [c, lv]],
                    None,
                ));
            }
        }
        (Regime::Oeps, chart) => {
            let k = p.k();
            if a <= 1.0 || k < 1.0 {
                return Err(BlowupError::RegimeMismatch(
                    "Oeps listings need alpha > 1 and k >= 1",
                ));
            }
            let u1 = (a - 1.0) / a;
            let us = (a - k) / a;
            let xs = (k - 1.0) * us / d;
            let window = k <= a;
            match chart {
                Chart::Pre => {
                    out.push(make_eq(
                        id,
                        "E0",
                        vec![0.0, 0.0],
                        real(0.0, 0.0),
                        [[0.0; 2]; 2],
                        None,
                    ));
                    out.push(make_eq(
                        id,
                        "E1",
                        vec![u1, 0.0],
                        real(2.0 - a - 1.0 / a, (a - 1.0) * (k - 1.0) / a),
                        [
                            [2.0 - a - 1.0 / a, -d * u1],
                            [0.0, (a - 1.0) * (k - 1.0) / a],
                        ],
                        None,
                    ));
                    if window {
                        let tr = -(a - k).powi(2) / a;
                        let det = (a - k).powi(3) * (k - 1.0) / (a * a);
                        let jac = [
                            [-us * (a - 2.0 * k + 1.0), -d * us],
                            [(k - 1.0) * xs, -(k - 1.0) * us],
                        ];
                        out.push(make_eq(
                            id,
                            "E2",
                            vec![us, xs],
                            from_trace_det(tr, det),
                            jac,
                            None,
                        ));
                    }
                }
                Chart::K1 => {
                    out.push(make_eq(
                        id,
                        "origin",
                        vec![0.0, 0.0, 0.0],
                        real(-d, 0.0),
                        [[-d, 0.0], [0.0, 0.0]],
                        Some(d),
                    ));
                    if window && k > 1.0 {
                        let r = (a - k) * (k - 1.0) / (a * d);
                        let u = d / (k - 1.0);
                        let tr = -(a - k) * d / (k - 1.0);
                        let det = (a - k) * d * d / (k - 1.0);
                        let jac = [[0.0, r * (k - 1.0)], [-a * u.powi(3), -a * r * u * u]];
                        out.push(make_eq(
                            id,
                            "E2",
                            vec![r, u, 0.0],
                            from_trace_det(tr, det),
                            jac,
                            Some(0.0),
                        ));
                    }
                }
                Chart::K2 => {
                    out.push(make_eq(
                        id,
                        "origin",
                        vec![0.0, 0.0, 0.0],
                        real(0.0, 0.0),
                        [[0.0; 2]; 2],
                        Some(0.0),
                    ));
                }
                Chart::K3 => {
                    out.push(make_eq(
                        id,
                        "E0",
                        vec![0.0, 0.0, 0.0],
                        real(a - 1.0, k - a),
                        [[a - 1.0, 0.0], [0.0, k - a]],
                        Some(-(a - 1.0)),
                    ));
                    out.push(make_eq(
                        id,
                        "E1",
                        vec![u1, 0.0, 0.0],
                        real(1.0 - a, k - 1.0),
                        [[1.0 - a, -d * u1], [0.0, k - 1.0]],
                        Some(0.0),
                    ));
                    if window {
                        let x3 = (k - 1.0) / d;
                        let jac = [[-(a - k), -d * us], [a * (k - 1.0) / d, 0.0]];
                        let ls = from_trace_det(-(a - k), (a - k) * (k - 1.0));
                        out.push(make_eq(id, "E2", vec![us, x3, 0.0], ls, jac, Some(0.0)));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Numeric Jacobian of a chart field, for checking the closed forms.
pub fn numeric_chart_jacobian(
    id: ChartId,
    p: &Params,
    pt: &[f64],
) -> Result<Vec<Vec<f64>>, BlowupError> {
    check_dim(id, pt)?;
    let p = *p;
    Ok(linalg::richardson_jacobian(
        |c: &[f64]| {
            if id.chart == Chart::Pre {
                // equilibria of the pre chart are listed at eps = 0
                pre_field(&p, 0.0, c[0], c[1]).to_vec()
            } else {
                chart_field(id, &p, c).expect("dimension checked")
            }
        },
        pt,
    ))
}

/// Residuals of one listed equilibrium against the numeric Jacobian. Entry
/// and eigenvalue errors are relative to `max(1, |value|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCheck {
    pub chart: ChartId,
    pub label: &'static str,
    pub field_residual: f64,
    pub jacobian_error: f64,
    pub eigenvalue_error: f64,
}

pub fn check_equilibrium(p: &Params, eq: &ChartEquilibrium) -> Result<EigenCheck, BlowupError> {
    let id = eq.chart;
    let f = if id.chart == Chart::Pre {
        pre_field(p, 0.0, eq.location[0], eq.location[1]).to_vec()
    } else {
        chart_field(id, p, &eq.location)?
    };
    let field_residual = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let j = numeric_chart_jacobian(id, p, &eq.location)?;
    let ([i0, i1], tr) = id.block();
    let block = [[j[i0][i0], j[i0][i1]], [j[i1][i0], j[i1][i1]]];
    let mut jacobian_error = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            let want = eq.block_jacobian[r][c];
            jacobian_error = jacobian_error.max((block[r][c] - want).abs() / want.abs().max(1.0));
        }
    }
    if let (Some(t), Some(lt)) = (tr, eq.transverse) {
        // the transverse row decouples on the invariant plane
        jacobian_error = jacobian_error
            .max(j[t][i0].abs())
            .max(j[t][i1].abs())
            .max((j[t][t] - lt).abs());
    }
    let numeric = linalg::eigenvalues(&block);
    let eigenvalue_error = eq
        .eigenvalues
        .iter()
        .map(|l| {
            numeric
                .iter()
                .map(|n| (l - n).norm() / l.norm().max(1.0))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    Ok(EigenCheck {
        chart: id,
        label: eq.label,
        field_residual,
        jacobian_error,
        eigenvalue_error,
    })
}

/// First integral of the `Oeps-K1` field on the sphere `{r1 = 0}`:
/// `e1 = A u1^(-(k-1)/(alpha-k)) exp(-d/((alpha-k) u1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereProfile {
    pub alpha: f64,
    pub k: f64,
    pub d: f64,
    pub scale: f64,
}

impl SphereProfile {
    fn shape(&self, u1: f64) -> f64 {
        let ak = self.alpha - self.k;
        u1.powf(-(self.k - 1.0) / ak) * (-self.d / (ak * u1)).exp()
    }

    pub fn eval(&self, u1: f64) -> f64 {
        if u1 <= 0.0 {
            return 0.0;
        }
        self.scale * self.shape(u1)
    }

    /// Location of the unique maximum, `d/(k-1)`.
    pub fn argmax(&self) -> f64 {
        self.d / (self.k - 1.0)
    }
}

/// Profile through the reference point `(u1_ref, e1_ref)`.
pub fn sphere_profile(p: &Params, u1_ref: f64, e1_ref: f64) -> Result<SphereProfile, BlowupError> {
    let k = p.k();
    if !(k > 1.0 && k < p.alpha) {
        return Err(BlowupError::RegimeMismatch(
            "sphere profile needs 1 < k < alpha",
        ));
    }
    if !(u1_ref > 0.0) {
        return Err(BlowupError::Overlap("u1 must be positive"));
    }
    let mut sp = SphereProfile {
        alpha: p.alpha,
        k,
        d: p.d,
        scale: 1.0,
    };
    sp.scale = e1_ref / sp.shape(u1_ref);
    Ok(sp)
}

/// Section constants; all configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionConfig {
    pub delta: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    /// Entry radius `{r1 = rho}` for the `Oeps` itinerary.
    pub rho: f64,
    pub rho3: f64,
    /// Radius of the capture ball around `p1` for the `O1` itinerary.
    pub capture: f64,
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig {
            delta: 0.1,
            delta2: 0.1,
            delta3: 0.1,
            delta4: 0.1,
            rho: 1e-4,
            rho3: 0.01,
            capture: 1e-3,
            t_max: 1e4,
            rel_tol: 1e-10,
            abs_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitSample {
    pub start: Vec<f64>,
    pub itinerary: Vec<ChartId>,
    /// Coordinates at the final section, in the last chart of the itinerary.
    pub exit: Option<Vec<f64>>,
    pub time: f64,
    pub success: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitReport {
    pub regime: Regime,
    pub samples: Vec<TransitSample>,
    pub successes: usize,
}

/// Default samples: `(r2, v2)` on `{v2 = 0.01}` for `O1`, `(u1, e1)` on
/// `{r1 = rho}` for `Oeps`.
pub fn default_transit_samples(regime: Regime) -> Vec<Vec<f64>> {
    match regime {
        Regime::O1 => (1..=5).map(|i| vec![0.002 * i as f64, 0.01]).collect(),
        Regime::Oeps => {
            let mut s = Vec::new();
            for u1 in [0.01, 0.05, 0.1, 0.3, 1.0] {
                for e1 in [0.01, 0.1, 0.5, 1.0, 2.0] {
                    s.push(vec![u1, e1]);
                }
            }
            s
        }
    }
}

fn o1_transit(p: &Params, cfg: &SectionConfig, s: &[f64]) -> Result<TransitSample, BlowupError> {
    let f2 = |y: &[f64; 2]| o1_k2_field(p, y[0], y[1]);
    let ev = [SystemEvent::coordinate(
        1,
        cfg.delta,
        Direction::Rising,
        true,
    )];
    let sol = integrate_system(
        f2,
        [s[0], s[1]],
        cfg.t_max,
        cfg.rel_tol,
        cfg.abs_tol,
        2_000_000,
        &ev,
    )?;
    let mut sample = TransitSample {
        start: s.to_vec(),
        itinerary: vec![ChartId::O1_K2],
        exit: None,
        time: sol.last_time(),
        success: false,
        error: None,
    };
    if sol.stopped_by.is_none() {
        return Ok(sample);
    }
    let y1 = transition_map(ChartId::O1_K2, ChartId::O1_K1, &sol.last())?;
    sample.itinerary.push(ChartId::O1_K1);
    let u0 = u1_p1(p);
    let cap = cfg.capture;
    let f1 = |y: &[f64; 2]| o1_k1_field(p, y[0], y[1]);
    let ev = [SystemEvent::new(
        move |y: &[f64; 2]| (y[0] * y[0] + (y[1] - u0).powi(2)).sqrt() - cap,
        Direction::Falling,
        true,
    )];
    let sol1 = integrate_system(
        f1,
        [y1[0], y1[1]],
        cfg.t_max,
        cfg.rel_tol,
        cfg.abs_tol,
        2_000_000,
        &ev,
    )?;
    sample.time += sol1.last_time();
    sample.success = sol1.stopped_by.is_some();
    sample.exit = Some(sol1.last().to_vec());
    Ok(sample)
}

fn oeps_transit(p: &Params, cfg: &SectionConfig, s: &[f64]) -> Result<TransitSample, BlowupError> {
    let run = |f: &dyn Fn(&[f64; 3]) -> [f64; 3], y0: [f64; 3], ev: &[SystemEvent<'_, 3>]| {
        integrate_system(f, y0, cfg.t_max, cfg.rel_tol, cfg.abs_tol, 2_000_000, ev)
    };
    let k1 = |y: &[f64; 3]| oeps_k1_field(p, y);
    let k2 = |y: &[f64; 3]| oeps_k2_field(p, y);
    let k3 = |y: &[f64; 3]| oeps_k3_field(p, y);
    let mut sample = TransitSample {
        start: s.to_vec(),
        itinerary: vec![ChartId::OEPS_K1],
        exit: None,
        time: 0.0,
        success: false,
        error: None,
    };
    let ev1 = [
        SystemEvent::coordinate(1, 1.0 / cfg.delta3, Direction::Rising, true),
        SystemEvent::coordinate(2, 1.0 / cfg.delta2, Direction::Rising, true),
    ];
    let sol = run(&k1, [cfg.rho, s[0], s[1]], &ev1)?;
    sample.time += sol.last_time();
    let y3 = match sol.stopped_by {
        Some(0) => transition_map(ChartId::OEPS_K1, ChartId::OEPS_K3, &sol.last())?,
        Some(_) => {
            let y2 = transition_map(ChartId::OEPS_K1, ChartId::OEPS_K2, &sol.last())?;
            sample.itinerary.push(ChartId::OEPS_K2);
            let ev2 = [SystemEvent::coordinate(
                1,
                1.0 / cfg.delta4,
                Direction::Rising,
                true,
            )];
            let sol2 = run(&k2, [y2[0], y2[1], y2[2]], &ev2)?;
            sample.time += sol2.last_time();
            if sol2.stopped_by.is_none() {
                return Ok(sample);
            }
            transition_map(ChartId::OEPS_K2, ChartId::OEPS_K3, &sol2.last())?
        }
        None => return Ok(sample),
    };
    sample.itinerary.push(ChartId::OEPS_K3);
    let ev3 = [SystemEvent::coordinate(
        0,
        cfg.rho3,
        Direction::Rising,
        true,
    )];
    let sol3 = run(&k3, [y3[0], y3[1], y3[2]], &ev3)?;
    sample.time += sol3.last_time();
    sample.success = sol3.stopped_by.is_some();
    sample.exit = Some(sol3.last().to_vec());
    Ok(sample)
}

/// Follows each sample through the chart itinerary of its regime.
///
/// `O1`: from `(r2, v2)` in `K2` to `{v2 = delta}`, then in `K1` into the
/// capture ball around `p1`. `Oeps`: from `(u1, e1)` on `{r1 = rho}` in `K1`,
/// through `K2` if `{e1 = 1/delta2}` is hit first, into `K3` and out through
/// `{r3 = rho3}`.
pub fn section_transit(
    regime: Regime,
    p: &Params,
    cfg: &SectionConfig,
    samples: &[Vec<f64>],
) -> Result<TransitReport, BlowupError> {
    match regime {
        Regime::O1 if p.beta - p.d - p.alpha * p.eps <= 0.0 => {
            return Err(BlowupError::RegimeMismatch(
                "O1 transit needs beta > d + alpha eps",
            ))
        }
        Regime::Oeps if !(p.k() > 1.0 && p.k() < p.alpha) => {
            return Err(BlowupError::RegimeMismatch(
                "Oeps transit needs 1 < k < alpha",
            ))
        }
        _ => {}
    }
    if let Some(s) = samples.iter().find(|s| s.len() != 2) {
        return Err(BlowupError::Dimension {
            expected: 2,
            got: s.len(),
        });
    }
    let out: Vec<TransitSample> = samples
        .par_iter()
        .map(|s| {
            let r = match regime {
                Regime::O1 => o1_transit(p, cfg, s),
                Regime::Oeps => oeps_transit(p, cfg, s),
            };
            r.unwrap_or_else(|e| TransitSample {
                start: s.clone(),
                itinerary: Vec::new(),
                exit: None,
                time: f64::NAN,
                success: false,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let successes = out.iter().filter(|s| s.success).count();
    Ok(TransitReport {
        regime,
        samples: out,
        successes,
    })
}
