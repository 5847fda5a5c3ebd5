//! Fast-flow constant of motion and the curves built from it.
//!
//! Along the fast subsystem `Gamma(u, v) = (u + v) u^(-d/beta)` is conserved,
//! so fast fibers are its level sets. The separatrix `gamma` is the level set
//! through the DFE and `gamma_E` the one through an exit point `(u_E, 0)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{IntegrationError, ModelError};
use crate::integrator::{integrate, Direction, Event, IntegrationOptions};
use crate::model::{Params, PlanarField, State};

/// Relative tolerance for the `OnCurve` tie in [`predict_side`].
pub const ON_CURVE_TOL: f64 = 1e-12;

pub fn gamma_invariant(p: &Params, s: &State) -> Result<f64, ModelError> {
    if s.u <= 0.0 {
        return Err(ModelError::BoundaryState { u: s.u, v: s.v });
    }
    Ok((s.u + s.v) * s.u.powf(-p.d / p.beta))
}

/// Limit of `u` along the fast fiber through `s0`.
pub fn u_infinity(p: &Params, s0: &State) -> f64 {
    if p.beta < p.d {
        s0.u * (1.0 + s0.v / s0.u).powf(p.beta / (p.beta - p.d))
    } else {
        0.0
    }
}

/// `gamma(u) = u^(d/beta) (1 - 1/alpha)^(1 - d/beta) - u`.
pub fn separatrix_gamma(p: &Params, u: f64) -> f64 {
    exit_curve(p, 1.0 - 1.0 / p.alpha, u)
}

/// `gamma_E(u) = u^(d/beta) u_E^(1 - d/beta) - u`.
pub fn exit_curve(p: &Params, u_e: f64, u: f64) -> f64 {
    let r = p.d / p.beta;
    u.powf(r) * u_e.powf(1.0 - r) - u
}

/// `d gamma / du`.
pub fn separatrix_slope(p: &Params, u: f64) -> f64 {
    let r = p.d / p.beta;
    let cap = 1.0 - 1.0 / p.alpha;
    r * u.powf(r - 1.0) * cap.powf(1.0 - r) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    ApproachFromLeft,
    ApproachFromRight,
    OnCurve,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::ApproachFromLeft => "left",
            Side::ApproachFromRight => "right",
            Side::OnCurve => "on-curve",
        }
    }
}

/// Predicts from which side the orbit through `s0` reaches the DFE in the
/// slow flow, by comparing `Gamma(s0)` with `Gamma(DFE)`.
pub fn predict_side(p: &Params, s0: &State) -> Result<Side, ModelError> {
    if p.beta >= p.d {
        return Err(ModelError::Regime("side prediction needs beta < d"));
    }
    if p.alpha <= 1.0 {
        return Err(ModelError::Regime("side prediction needs alpha > 1"));
    }
    let g0 = gamma_invariant(p, s0)?;
    let gd = gamma_invariant(p, &State::new(1.0 - 1.0 / p.alpha, 0.0))?;
    // Gamma(u, 0) decreases in u when beta < d
    Ok(if (g0 - gd).abs() <= ON_CURVE_TOL * gd {
        Side::OnCurve
    } else if g0 < gd {
        Side::ApproachFromRight
    } else {
        Side::ApproachFromLeft
    })
}

pub const ENTRY_LABEL: &str = "slow-entry";

/// Options used to locate slow-flow entry: first downward crossing of
/// `v = eps^2`.
pub fn entry_options(p: &Params, t_max: f64) -> IntegrationOptions {
    IntegrationOptions::default()
        .with_tols(1e-10, 1e-12)
        .with_t_max(t_max)
        .with_event(
            Event::hyperplane(ENTRY_LABEL, 0.0, 1.0, p.eps * p.eps, Direction::Falling).terminal(),
        )
}

/// Simulated side: sign of `u - (1 - 1/alpha)` at slow-flow entry. `None` if
/// the orbit does not enter within the horizon.
pub fn simulate_side(
    p: &Params,
    s0: &State,
    opts: &IntegrationOptions,
) -> Result<Option<Side>, IntegrationError> {
    let tr = integrate(PlanarField::Full, p, *s0, opts)?;
    let cap = 1.0 - 1.0 / p.alpha;
    Ok(tr.first_hit(ENTRY_LABEL).map(|h| {
        if h.state.u > cap {
            Side::ApproachFromRight
        } else if h.state.u < cap {
            Side::ApproachFromLeft
        } else {
            Side::OnCurve
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideRecord {
    pub u0: f64,
    pub v0: f64,
    pub predicted: Side,
    pub simulated: Option<Side>,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideScore {
    pub records: Vec<SideRecord>,
    pub agreement: f64,
}

/// `n x n` initial conditions in the simplex: `u0` evenly spaced in
/// `[0.025, 0.975]`, `v0` at cell centres of `[0, 1 - u0]`.
pub fn side_grid(n: usize) -> Vec<State> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let u0 = if n > 1 {
            0.025 + 0.95 * i as f64 / (n - 1) as f64
        } else {
            0.5
        };
        for j in 0..n {
            out.push(State::new(u0, (1.0 - u0) * (j as f64 + 0.5) / n as f64));
        }
    }
    out
}

pub fn score_side_predictions(
    p: &Params,
    ics: &[State],
    opts: &IntegrationOptions,
) -> Result<SideScore, IntegrationError> {
    let records: Result<Vec<SideRecord>, IntegrationError> = ics
        .par_iter()
        .map(|s0| {
            let predicted = predict_side(p, s0)?;
            let simulated = simulate_side(p, s0, opts)?;
            Ok(SideRecord {
                u0: s0.u,
                v0: s0.v,
                predicted,
                simulated,
                agree: simulated == Some(predicted),
            })
        })
        .collect();
    let records = records?;
    let hits = records.iter().filter(|r| r.agree).count();
    let agreement = if records.is_empty() {
        0.0
    } else {
        hits as f64 / records.len() as f64
    };
    Ok(SideScore { records, agreement })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> Params {
        Params::preset("fig4").unwrap()
    }

    #[test]
    fn gamma_values() {
        let p = fig4();
        let g = gamma_invariant(&p, &State::new(0.3, 0.3)).unwrap();
        assert!((g - 2.98762).abs() < 1e-4);
        let g = gamma_invariant(&p, &State::new(0.4, 0.0)).unwrap();
        assert!((g - 0.4f64.powf(1.0 - 0.1 / 0.075)).abs() < 1e-15);
        assert!(gamma_invariant(&p, &State::new(0.0, 0.3)).is_err());
    }

    #[test]
    fn u_infinity_values() {
        let p = fig4();
        let s = State::new(0.3, 0.3);
        let ui = u_infinity(&p, &s);
        assert!((ui - 0.0375).abs() < 1e-15);
        let g0 = gamma_invariant(&p, &s).unwrap();
        let g1 = gamma_invariant(&p, &State::new(ui, 0.0)).unwrap();
        assert!((g0 - g1).abs() < 1e-10 * g0);
        assert_eq!(u_infinity(&p, &State::new(0.4, 0.0)), 0.4);
        assert_eq!(u_infinity(&Params::preset("fig5a").unwrap(), &s), 0.0);
    }

    #[test]
    fn separatrix_values() {
        let p = fig4();
        assert!(separatrix_gamma(&p, 0.75).abs() < 1e-15);
        assert!((separatrix_gamma(&p, 0.9) - 0.056386).abs() < 1e-5);
        let gd = gamma_invariant(&p, &State::new(0.75, 0.0)).unwrap();
        for i in 1..=100 {
            let u = 0.75 + 0.25 * i as f64 / 101.0;
            let v = separatrix_gamma(&p, u);
            if v >= 0.0 {
                let g = gamma_invariant(&p, &State::new(u, v)).unwrap();
                assert!((g - gd).abs() < 1e-12 * gd);
            }
        }
    }

    #[test]
    fn exit_curve_values() {
        let q = Params::preset("fig5a").unwrap();
        assert!(exit_curve(&q, 0.5, 0.5).abs() < 1e-15);
        assert!((exit_curve(&q, 0.5, 0.25) - 0.1852753).abs() < 1e-7);
        for u in [0.1, 0.3, 0.6] {
            assert_eq!(exit_curve(&q, 0.75, u), separatrix_gamma(&q, u));
        }
    }

    #[test]
    fn separatrix_tangent_at_origin() {
        // d/beta < 1: vertical tangent
        let q = Params::preset("fig5a").unwrap();
        assert!(separatrix_slope(&q, 1e-8) > 1e3);
        // d/beta > 1: slope tends to -1 and gamma < 0 near 0
        let p = fig4();
        assert!((separatrix_slope(&p, 1e-8) + 1.0).abs() < 1e-2);
        assert!(separatrix_gamma(&p, 1e-4) < 0.0);
    }

    #[test]
    fn predict_side_examples() {
        let p = fig4();
        assert_eq!(
            predict_side(&p, &State::new(0.9, 0.02)).unwrap(),
            Side::ApproachFromRight
        );
        assert!((u_infinity(&p, &State::new(0.9, 0.02)) - 0.8425711).abs() < 1e-7);
        assert_eq!(
            predict_side(&p, &State::new(0.3, 0.3)).unwrap(),
            Side::ApproachFromLeft
        );
        let u = 0.85;
        let on = State::new(u, separatrix_gamma(&p, u));
        assert_eq!(predict_side(&p, &on).unwrap(), Side::OnCurve);
        assert!(predict_side(&Params::preset("fig5a").unwrap(), &on).is_err());
    }

    #[test]
    fn simulated_side_matches_for_clear_cases() {
        let p = fig4();
        let o = entry_options(&p, 5000.0);
        assert_eq!(
            simulate_side(&p, &State::new(0.9, 0.02), &o).unwrap(),
            Some(Side::ApproachFromRight)
        );
        assert_eq!(
            simulate_side(&p, &State::new(0.3, 0.3), &o).unwrap(),
            Some(Side::ApproachFromLeft)
        );
    }

    #[test]
    fn fast_ratio_grows_exponentially() {
        // beta > d: ln(v/u) is linear in t with slope beta - d
        let p = Params::preset("fig5a").unwrap();
        let o = IntegrationOptions::default()
            .with_tols(1e-10, 1e-12)
            .with_t_max(10.0);
        let s0 = State::new(0.5, 0.01);
        let tr = integrate(PlanarField::Fast, &p, s0, &o).unwrap();
        let n = tr.len() as f64;
        let xs: Vec<f64> = tr.times.clone();
        let ys: Vec<f64> = tr.states.iter().map(|s| (s.v / s.u).ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        assert!((slope - (p.beta - p.d)).abs() < 0.01 * (p.beta - p.d));
    }

    #[test]
    fn grid_shape() {
        let g = side_grid(20);
        assert_eq!(g.len(), 400);
        assert!(g.iter().all(|s| s.in_delta_interior()));
    }
}
