//! Nullclines: the v-nullcline line and the u-nullcline branches `L1`, `L2`.
//!
//! Multiplying `u' = 0` by `u + v` gives the cubic
//! `eps*alpha*(u + theta*v)*(u + v)^2 = eps*alpha*theta*(v - k1*u)*(v - k2*u)`,
//! which in polar coordinates is solved explicitly for the radius.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::equilibria::jacobian;
use crate::error::NullclineError;
use crate::model::{full_field, Params, State};

/// Residual tolerance on emitted branch points.
pub const TOL_NULL: f64 = 1e-9;
/// Offset from arc endpoints, in radians.
pub const ARC_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullclineSlopes {
    pub k1: f64,
    pub k2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Set when `alpha = 1`, where `k2 = 0` and `L2` shrinks to the origin.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchId {
    L1,
    L2,
    Theta0Parabola,
    VLine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchCurve {
    pub branch: BranchId,
    pub points: Vec<State>,
    /// Polar angle for `L1`/`L2`, abscissa `u` otherwise.
    pub params: Vec<f64>,
    /// Largest field residual over the points (`|u'|`, or `|v'|` for the line).
    pub max_residual: f64,
    /// For the parabola: `max |cubic residual| / eps^2`.
    pub residual_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VNullcline {
    /// The u-axis is always a v-nullcline.
    pub u_axis: bool,
    /// Slope `R0 - 1` of the line `v = (R0 - 1) u`, present iff `R0 > 1`.
    pub line_slope: Option<f64>,
}

pub fn v_nullcline(p: &Params) -> VNullcline {
    let r0 = p.beta / (p.d + p.eps);
    VNullcline {
        u_axis: true,
        line_slope: (r0 > 1.0).then_some(r0 - 1.0),
    }
}

/// Samples `n` points of the v-nullcline line inside the simplex.
pub fn v_line(p: &Params, n: usize) -> Result<BranchCurve, NullclineError> {
    let m = v_nullcline(p)
        .line_slope
        .ok_or(NullclineError::EmptyBranch("R0 <= 1: no v-nullcline line"))?;
    let u_end = 1.0 / (1.0 + m);
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut max_residual: f64 = 0.0;
    for i in 1..=n {
        let u = u_end * i as f64 / (n + 1) as f64;
        let s = State::new(u, m * u);
        max_residual = max_residual.max(full_field(p, &s)?.dv.abs());
        points.push(s);
        params.push(u);
    }
    Ok(BranchCurve {
        branch: BranchId::VLine,
        points,
        params,
        max_residual,
        residual_constant: None,
    })
}

pub fn nullcline_slopes(p: &Params) -> Result<NullclineSlopes, NullclineError> {
    if p.theta == 0.0 {
        return Err(NullclineError::ThetaZero);
    }
    let eat = p.eps * p.alpha * p.theta;
    let c1 = (p.alpha - 1.0) / (p.alpha * p.theta);
    let c2 = (p.beta + p.eps - p.eps * p.alpha - eat) / eat;
    let disc = c2 * c2 - 4.0 * c1;
    if disc < 0.0 {
        return Err(NullclineError::NegativeDiscriminant(disc));
    }
    let q = 0.5 * (c2 + c2.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, c1 / q) };
    let (k1, k2) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    Ok(NullclineSlopes {
        k1,
        k2,
        c1,
        c2,
        degenerate: c1 == 0.0,
    })
}

/// Radius of the u-nullcline along the ray of angle `phi`.
pub fn polar_radius(p: &Params, sl: &NullclineSlopes, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    (s - sl.k2 * c) * (s - sl.k1 * c) / ((c / p.theta + s) * (c + s) * (c + s))
}

/// Left side minus right side of the cubic form of `u' = 0`.
pub fn u_cubic_residual(p: &Params, s: &State) -> f64 {
    let (u, v, e, a, th) = (s.u, s.v, p.eps, p.alpha, p.theta);
    let lhs = e * a * (u + th * v) * (u + v) * (u + v);
    let rhs =
        e * u * u * (a - 1.0) + u * v * (-p.beta + e * a + e * a * th - e) + e * a * th * v * v;
    lhs - rhs
}

fn radial_newton(p: &Params, phi: f64, rho: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let pt = State::new(rho * c, rho * s);
    let (Ok(f), Ok(j)) = (full_field(p, &pt), jacobian(p, &pt)) else {
        return rho;
    };
    let slope = j[0][0] * c + j[0][1] * s;
    if slope == 0.0 {
        return rho;
    }
    let cand = rho - f.du / slope;
    let better = full_field(p, &State::new(cand * c, cand * s))
        .map(|g| g.du.abs() < f.du.abs())
        .unwrap_or(false);
    if better {
        cand
    } else {
        rho
    }
}

pub fn u_nullcline_branch(
    p: &Params,
    branch: BranchId,
    n: usize,
) -> Result<BranchCurve, NullclineError> {
    let sl = nullcline_slopes(p)?;
    let (lo, hi) = match branch {
        BranchId::L1 => (sl.k1.atan(), FRAC_PI_2),
        BranchId::L2 => {
            if p.alpha <= 1.0 || sl.k2 <= 0.0 {
                return Err(NullclineError::EmptyBranch("L2 requires alpha > 1"));
            }
            (0.0, sl.k2.atan())
        }
        _ => return Err(NullclineError::EmptyBranch("not a u-nullcline branch")),
    };
    let (lo, hi) = (lo + ARC_OFFSET, hi - ARC_OFFSET);
    let n = n.max(2);
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut max_residual: f64 = 0.0;
    for i in 0..n {
        let phi = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let rho = radial_newton(p, phi, polar_radius(p, &sl, phi));
        let (s, c) = phi.sin_cos();
        let pt = State::new(rho * c, rho * s);
        if !(rho > 0.0 && pt.in_delta()) {
            continue;
        }
        max_residual = max_residual.max(full_field(p, &pt)?.du.abs());
        points.push(pt);
        params.push(phi);
    }
    if points.is_empty() {
        return Err(NullclineError::EmptyBranch("no samples inside the simplex"));
    }
    Ok(BranchCurve {
        branch,
        points,
        params,
        max_residual,
        residual_constant: None,
    })
}

/// Newton iteration in `v` on `u' = 0` at fixed `u`.
pub fn refine_v(p: &Params, s: &State) -> State {
    let mut cur = *s;
    for _ in 0..20 {
        let (Ok(f), Ok(j)) = (full_field(p, &cur), jacobian(p, &cur)) else {
            break;
        };
        if j[0][1] == 0.0 || f.du.abs() < 1e-15 {
            break;
        }
        cur = State::new(cur.u, cur.v - f.du / j[0][1]);
    }
    cur
}

/// The `theta = 0` u-nullcline `v = -(eps/beta) u (alpha u + 1 - alpha)`,
/// correct up to `O(eps^2)`.
pub fn theta0_parabola(p: &Params, n: usize) -> Result<BranchCurve, NullclineError> {
    if p.theta != 0.0 {
        return Err(NullclineError::ThetaNonZero);
    }
    if p.alpha <= 1.0 {
        return Err(NullclineError::EmptyBranch(
            "parabola leaves the simplex for alpha <= 1",
        ));
    }
    let cap = 1.0 - 1.0 / p.alpha;
    let n = n.max(2);
    let mut points = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut max_residual: f64 = 0.0;
    let mut max_cubic: f64 = 0.0;
    for i in 0..n {
        let u = cap * i as f64 / (n - 1) as f64;
        let s = State::new(u, parabola_v(p, u));
        max_cubic = max_cubic.max(u_cubic_residual(p, &s).abs());
        if let Ok(f) = full_field(p, &s) {
            max_residual = max_residual.max(f.du.abs());
        }
        points.push(s);
        params.push(u);
    }
    Ok(BranchCurve {
        branch: BranchId::Theta0Parabola,
        points,
        params,
        max_residual,
        residual_constant: Some(max_cubic / (p.eps * p.eps)),
    })
}

pub fn parabola_v(p: &Params, u: f64) -> f64 {
    -(p.eps / p.beta) * u * (p.alpha * u + 1.0 - p.alpha)
}

/// Intersection of the line `v = (R0 - 1) u` with the u-nullcline, found by
/// bisection along the line. Present iff the endemic point exists.
pub fn line_l2_intersection(p: &Params) -> Option<State> {
    let m = v_nullcline(p).line_slope?;
    // u' restricted to the line, divided by u
    let h = |u: f64| {
        p.eps * p.alpha * (1.0 + p.theta * m) * (1.0 - (1.0 + m) * u)
            - p.eps
            - p.beta * m / (1.0 + m)
    };
    let (mut lo, mut hi) = (0.0, 1.0 / (1.0 + m));
    if !(h(lo) > 0.0 && h(hi) < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    Some(State::new(u, m * u))
}

/// Whether the v-nullcline line enters the region `D1 = {v > k1 u}` of `L1`.
pub fn line_meets_l1(p: &Params) -> Result<bool, NullclineError> {
    let sl = nullcline_slopes(p)?;
    Ok(matches!(v_nullcline(p).line_slope, Some(m) if m > sl.k1))
}

/// Second differences of `v` along a curve; reported, not asserted.
pub fn curvature_samples(curve: &BranchCurve) -> Vec<f64> {
    curve
        .points
        .windows(3)
        .map(|w| w[0].v - 2.0 * w[1].v + w[2].v)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::ee_exact;

    fn fig4() -> Params {
        Params::preset("fig4").unwrap()
    }

    #[test]
    fn v_nullcline_cases() {
        assert_eq!(v_nullcline(&fig4()).line_slope, None);
        let p = Params::preset("fig7").unwrap();
        let m = v_nullcline(&p).line_slope.unwrap();
        assert!((m - 0.047619).abs() < 1e-6);
        let line = v_line(&p, 100).unwrap();
        assert!(line.max_residual < 1e-13);
        assert!(v_line(&fig4(), 10).is_err());
    }

    #[test]
    fn slopes_fig4() {
        let sl = nullcline_slopes(&fig4()).unwrap();
        assert!((sl.c1 - 1.5).abs() < 1e-12);
        assert!((sl.c2 - 35.0).abs() < 1e-9);
        assert!((sl.k1 - 34.95709).abs() < 1e-5);
        assert!((sl.k2 - 0.0429097).abs() < 1e-7);
        assert!((sl.k1 * sl.k2 - 1.5).abs() < 1e-12);
        assert!(!sl.degenerate);
    }

    #[test]
    fn slopes_negative_rd() {
        let p = Params {
            alpha: 0.5,
            ..fig4()
        };
        let sl = nullcline_slopes(&p).unwrap();
        assert!(sl.c1 < 0.0 && sl.k2 < 0.0 && sl.k1 > 0.0 && sl.k2.abs() < sl.k1.abs());
    }

    #[test]
    fn slopes_scale_like_inverse_eps() {
        let p = fig4();
        let a = nullcline_slopes(&p).unwrap().k1;
        let b = nullcline_slopes(&p.with_eps(0.002)).unwrap().k1;
        assert!((a / b - 2.0).abs() < 0.2);
    }

    #[test]
    fn slopes_degenerate_and_theta_zero() {
        let p = Params {
            alpha: 1.0,
            ..fig4()
        };
        let sl = nullcline_slopes(&p).unwrap();
        assert!(sl.degenerate && sl.k2 == 0.0);
        assert!(matches!(
            nullcline_slopes(&Params {
                theta: 0.0,
                ..fig4()
            }),
            Err(NullclineError::ThetaZero)
        ));
    }

    #[test]
    fn branch_endpoints() {
        let p = fig4();
        let sl0 = nullcline_slopes(&p).unwrap();
        let l1 = u_nullcline_branch(&p, BranchId::L1, 400).unwrap();
        let last = l1.points.last().unwrap();
        assert!(last.u.abs() < 1e-5 && (last.v - 1.0).abs() < 1e-4);
        assert!((polar_radius(&p, &sl0, FRAC_PI_2) - 1.0).abs() < 1e-12);
        let l2 = u_nullcline_branch(&p, BranchId::L2, 400).unwrap();
        let first = l2.points[0];
        assert!((first.u - 0.75).abs() < 1e-4 && first.v.abs() < 1e-5);
        assert!(l1.max_residual < TOL_NULL && l2.max_residual < TOL_NULL);
        let sl = nullcline_slopes(&p).unwrap();
        assert!(l1.points.iter().all(|s| s.v > sl.k1 * s.u));
        assert!(l2.points.iter().all(|s| s.v < sl.k2 * s.u));
        assert!(u_nullcline_branch(&Params { alpha: 0.5, ..p }, BranchId::L2, 10).is_err());
    }

    #[test]
    fn parabola_properties() {
        let p = Params {
            theta: 0.0,
            ..fig4()
        };
        let c = theta0_parabola(&p, 201).unwrap();
        assert_eq!(c.points[0].v, 0.0);
        assert!(c.points.last().unwrap().v.abs() < 1e-15);
        let vertex = parabola_v(&p, 0.375);
        assert!((vertex - 0.0075).abs() < 1e-12);
        assert!(c.residual_constant.unwrap() < 10.0);
        for s in &c.points[1..c.points.len() - 1] {
            let r = refine_v(&p, s);
            assert!(full_field(&p, &r).unwrap().du.abs() < 1e-10);
        }
        assert!(theta0_parabola(&fig4(), 10).is_err());
        assert!(theta0_parabola(&Params { alpha: 0.9, ..p }, 10).is_err());
    }

    #[test]
    fn line_intersection_is_the_endemic_point() {
        let p = Params::preset("fig7").unwrap();
        let x = line_l2_intersection(&p).unwrap();
        assert!(x.dist(&ee_exact(&p).unwrap()) < 1e-8);
        assert!(!line_meets_l1(&p).unwrap());
        let q = Params::preset("fig5a").unwrap();
        assert!(line_l2_intersection(&q).is_none());
        assert!(!line_meets_l1(&q).unwrap());
    }
}
