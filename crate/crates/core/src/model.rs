//! Parameters and vector fields of the slow-fast parasite-host system.
//!
//! State variables are the susceptible fraction `u` and the infected fraction
//! `v`. The full field on the fast time `t` is
//!
//! ```text
//! u' = eps*alpha*(u + theta*v)*(1 - u - v) - eps*u - beta*u*v/(u + v)
//! v' = beta*u*v/(u + v) - d*v - eps*v
//! ```
//!
//! and is singular at the origin. The auxiliary field multiplies it by `u + v`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Largest slow death rate accepted by [`Params::new`].
pub const EPS_MAX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub d: f64,
    pub eps: f64,
}

impl Params {
    pub fn new(alpha: f64, theta: f64, beta: f64, d: f64, eps: f64) -> Result<Self, ModelError> {
        let p = Params {
            alpha,
            theta,
            beta,
            d,
            eps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("d", self.d),
            ("eps", self.eps),
        ];
        for (name, value) in positive {
            if !value.is_finite() {
                return Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
            if value <= 0.0 {
                return Err(ModelError::InvalidParam {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        if !(self.theta.is_finite() && (0.0..=1.0).contains(&self.theta)) {
            return Err(ModelError::InvalidParam {
                name: "theta",
                value: self.theta,
                reason: "must lie in [0, 1]",
            });
        }
        if self.eps > EPS_MAX {
            return Err(ModelError::InvalidParam {
                name: "eps",
                value: self.eps,
                reason: "must not exceed EPS_MAX = 0.1",
            });
        }
        Ok(())
    }

    /// Rescaled excess infection rate `k = (beta - d)/eps`.
    pub fn k(&self) -> f64 {
        (self.beta - self.d) / self.eps
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Params { eps, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Params { beta, ..self }
    }

    pub fn with_d(self, d: f64) -> Self {
        Params { d, ..self }
    }

    /// Named parameter sets used by the experiments.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Params {
            alpha: 4.0,
            theta: 0.5,
            beta: 0.11,
            d: 0.1,
            eps: 0.005,
        };
        match name {
            "fig4" => Some(Params {
                beta: 0.075,
                eps: 0.001,
                ..base
            }),
            "fig5a" => Some(Params { beta: 0.5, ..base }),
            "fig5b" => Some(Params {
                beta: 0.5,
                d: 0.3,
                ..base
            }),
            "fig6" | "fig7" => Some(base),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 5] = ["fig4", "fig5a", "fig5b", "fig6", "fig7"];
}

/// Unnormalized constants; `alpha = a*M` after the change of variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub a: f64,
    pub m: f64,
    pub theta: f64,
    pub beta: f64,
    pub d: f64,
    pub eps: f64,
}

pub fn normalize(phys: &PhysicalParams) -> Result<Params, ModelError> {
    if !(phys.a > 0.0 && phys.a.is_finite()) {
        return Err(ModelError::InvalidParam {
            name: "a",
            value: phys.a,
            reason: "must be positive",
        });
    }
    if !(phys.m > 0.0 && phys.m.is_finite()) {
        return Err(ModelError::InvalidParam {
            name: "M",
            value: phys.m,
            reason: "must be positive",
        });
    }
    Params::new(phys.a * phys.m, phys.theta, phys.beta, phys.d, phys.eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub v: f64,
}

impl State {
    pub const ORIGIN: State = State { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        State { u, v }
    }

    pub fn in_delta(&self) -> bool {
        self.u >= 0.0 && self.v >= 0.0 && self.u + self.v <= 1.0
    }

    pub fn in_delta_interior(&self) -> bool {
        self.u > 0.0 && self.v > 0.0 && self.u + self.v < 1.0
    }

    pub fn dist(&self, other: &State) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn to_log(&self) -> LogState {
        LogState {
            u: self.u,
            w: self.v.ln(),
        }
    }
}

/// Point in the chart `(u, w)` with `w = ln v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogState {
    pub u: f64,
    pub w: f64,
}

impl LogState {
    pub fn to_state(&self) -> State {
        State {
            u: self.u,
            v: self.w.exp(),
        }
    }
}

/// Time derivative of a planar state. In the log chart `dv` holds `w'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deriv {
    pub du: f64,
    pub dv: f64,
}

impl Deriv {
    pub fn norm(&self) -> f64 {
        self.du.hypot(self.dv)
    }
}

fn check_nonsingular(s: &State) -> Result<(), ModelError> {
    if s.u + s.v == 0.0 {
        Err(ModelError::SingularOrigin { u: s.u, v: s.v })
    } else {
        Ok(())
    }
}

pub fn full_field(p: &Params, s: &State) -> Result<Deriv, ModelError> {
    check_nonsingular(s)?;
    let (u, v) = (s.u, s.v);
    let inc = p.beta * u * v / (u + v);
    Ok(Deriv {
        du: p.eps * p.alpha * (u + p.theta * v) * (1.0 - u - v) - p.eps * u - inc,
        dv: inc - p.d * v - p.eps * v,
    })
}

/// The `eps -> 0` limit of [`full_field`], i.e. `F1`.
pub fn fast_field(p: &Params, s: &State) -> Result<Deriv, ModelError> {
    check_nonsingular(s)?;
    let inc = p.beta * s.u * s.v / (s.u + s.v);
    Ok(Deriv {
        du: -inc,
        dv: inc - p.d * s.v,
    })
}

/// The `O(eps)` part `F2`; the full field is `F1 + eps*F2`.
pub fn slow_part(p: &Params, s: &State) -> Deriv {
    let (u, v) = (s.u, s.v);
    Deriv {
        du: p.alpha * (u + p.theta * v) * (1.0 - u - v) - u,
        dv: -v,
    }
}

/// Slow-time system in `(u, x)` with `v = eps*x` and `tau = eps*t`.
pub fn slow_field(p: &Params, u: f64, x: f64) -> Result<Deriv, ModelError> {
    let e = p.eps;
    let den = u + e * x;
    if den == 0.0 {
        return Err(ModelError::SingularDenominator { u, x });
    }
    Ok(Deriv {
        du: p.alpha * (u + e * p.theta * x) * (1.0 - u - e * x) - u - p.beta * u * x / den,
        dv: (p.beta * u * x / den - p.d * x - e * x) / e,
    })
}

/// Closed-form solution of the critical-manifold flow `u' = alpha*u*(1-u) - u`.
pub fn reduced_slow_flow(p: &Params, u0: f64, tau: f64) -> f64 {
    let r = p.alpha - 1.0;
    if r == 0.0 {
        return u0 / (1.0 + u0 * tau);
    }
    let cap = 1.0 - 1.0 / p.alpha;
    let g = (r * tau).exp();
    cap * u0 * g / (cap + u0 * (g - 1.0))
}

/// Full field in the chart `(u, w)`, `w = ln v`.
pub fn log_field(p: &Params, ls: &LogState) -> Result<Deriv, ModelError> {
    let v = ls.w.exp();
    let s = State { u: ls.u, v };
    check_nonsingular(&s)?;
    let u = ls.u;
    Ok(Deriv {
        du: p.eps * p.alpha * (u + p.theta * v) * (1.0 - u - v)
            - p.eps * u
            - p.beta * u * v / (u + v),
        dv: p.beta * u / (u + v) - p.d - p.eps,
    })
}

/// Full field multiplied by `u + v`; polynomial and regular at the origin.
pub fn aux_field(p: &Params, s: &State) -> Deriv {
    let (u, v) = (s.u, s.v);
    let e = p.eps;
    let sum = u + v;
    Deriv {
        du: e * p.alpha * (u + p.theta * v) * (1.0 - u - v) * sum - e * u * sum - p.beta * u * v,
        dv: (p.beta - p.d) * u * v - p.d * v * v - e * v * sum,
    }
}

/// Divergence of `F/(u v)`: `-eps alpha (u^2 + theta v (1 - v)) / (u^2 v)`,
/// negative on the open simplex.
pub fn dulac_divergence(p: &Params, s: &State) -> Result<f64, ModelError> {
    if !(s.u > 0.0 && s.v > 0.0) {
        return Err(ModelError::BoundaryState { u: s.u, v: s.v });
    }
    let (u, v) = (s.u, s.v);
    Ok(-p.eps * p.alpha * (u * u + p.theta * v * (1.0 - v)) / (u * u * v))
}

/// The alternative closed form `eps alpha ((1-theta) v/(u+v)^2 - 1)`.
///
/// It is not the divergence of `F/(u v)` and turns positive near the
/// v-axis when `theta < 1`; kept for comparison only.
pub fn dulac_divergence_stated(p: &Params, s: &State) -> Result<f64, ModelError> {
    if !(s.u > 0.0 && s.v > 0.0) {
        return Err(ModelError::BoundaryState { u: s.u, v: s.v });
    }
    let sum = s.u + s.v;
    Ok(p.eps * p.alpha * ((1.0 - p.theta) * s.v / (sum * sum) - 1.0))
}

/// Planar fields the integrator can run.
///
/// For `Slow` the second state slot carries `x = v/eps` and time is `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanarField {
    Full,
    Fast,
    Slow,
    Aux,
}

impl PlanarField {
    pub fn eval(&self, p: &Params, s: &State) -> Result<Deriv, ModelError> {
        match self {
            PlanarField::Full => full_field(p, s),
            PlanarField::Fast => fast_field(p, s),
            PlanarField::Slow => slow_field(p, s.u, s.v),
            PlanarField::Aux => Ok(aux_field(p, s)),
        }
    }

    /// Field in the `(u, w)` chart with `w = ln` of the second coordinate.
    /// The `w` rate is computed without dividing by `v`.
    pub fn eval_log(&self, p: &Params, u: f64, w: f64) -> Result<Deriv, ModelError> {
        let v = w.exp();
        match self {
            PlanarField::Full => log_field(p, &LogState { u, w }),
            PlanarField::Fast => {
                check_nonsingular(&State { u, v })?;
                Ok(Deriv {
                    du: -p.beta * u * v / (u + v),
                    dv: p.beta * u / (u + v) - p.d,
                })
            }
            PlanarField::Slow => {
                let e = p.eps;
                let den = u + e * v;
                if den == 0.0 {
                    return Err(ModelError::SingularDenominator { u, x: v });
                }
                Ok(Deriv {
                    du: p.alpha * (u + e * p.theta * v) * (1.0 - u - e * v)
                        - u
                        - p.beta * u * v / den,
                    dv: (p.beta * u / den - p.d - e) / e,
                })
            }
            PlanarField::Aux => {
                let a = aux_field(p, &State { u, v });
                Ok(Deriv {
                    du: a.du,
                    dv: (p.beta - p.d) * u - p.d * v - p.eps * (u + v),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig7() -> Params {
        Params::preset("fig7").unwrap()
    }

    #[test]
    fn normalize_multiplies_a_and_m() {
        let phys = PhysicalParams {
            a: 8.0,
            m: 0.5,
            theta: 0.5,
            beta: 0.1,
            d: 0.1,
            eps: 0.01,
        };
        assert_eq!(normalize(&phys).unwrap().alpha, 4.0);
        let phys = PhysicalParams {
            a: 2.0,
            m: 3.0,
            ..phys
        };
        assert_eq!(normalize(&phys).unwrap().alpha, 6.0);
        let phys = PhysicalParams {
            a: 1.0,
            m: 1.0,
            ..phys
        };
        assert_eq!(normalize(&phys).unwrap().alpha, 1.0);
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(4.0, 0.5, 0.1, 0.1, 0.0).is_err());
        assert!(Params::new(4.0, 1.5, 0.1, 0.1, 0.01).is_err());
        assert!(Params::new(4.0, 0.5, 0.1, 0.1, 0.2).is_err());
        assert!(Params::new(f64::NAN, 0.5, 0.1, 0.1, 0.01).is_err());
        assert!(Params::new(4.0, 0.0, 0.1, 0.1, 0.1).is_ok());
    }

    #[test]
    fn full_field_values() {
        let p = fig7();
        let z = full_field(&p, &State::new(0.75, 0.0)).unwrap();
        assert!(z.du.abs() < 1e-15 && z.dv == 0.0);
        let f = full_field(&p, &State::new(0.5, 0.0)).unwrap();
        assert!((f.du - 0.0025).abs() < 1e-15);
        assert_eq!(f.dv, 0.0);
        assert!(matches!(
            full_field(&p, &State::ORIGIN),
            Err(ModelError::SingularOrigin { .. })
        ));
    }

    #[test]
    fn fast_field_values() {
        let p = Params::preset("fig4").unwrap();
        let f = fast_field(&p, &State::new(0.3, 0.3)).unwrap();
        assert!((f.du + 0.01125).abs() < 1e-15);
        assert!((f.dv + 0.01875).abs() < 1e-15);
        let f = fast_field(&p, &State::new(0.4, 0.0)).unwrap();
        assert_eq!((f.du, f.dv), (0.0, 0.0));
        let f = fast_field(&p, &State::new(0.0, 0.2)).unwrap();
        assert_eq!(f.du, 0.0);
        assert!((f.dv + 0.1 * 0.2).abs() < 1e-16);
    }

    #[test]
    fn slow_field_values() {
        let p = fig7();
        let f = slow_field(&p, 0.5, 0.0).unwrap();
        assert!((f.du - 0.5).abs() < 1e-15 && f.dv == 0.0);
        let f = slow_field(&p, 0.75, 0.0).unwrap();
        assert!(f.du.abs() < 1e-15);
        let f = slow_field(&p, 0.3, 0.0).unwrap();
        assert!((f.du - (4.0 * 0.3 * 0.7 - 0.3)).abs() < 1e-15);
        assert!(slow_field(&p, 0.0, 0.0).is_err());
    }

    #[test]
    fn reduced_flow_closed_form() {
        let p = fig7();
        assert!((reduced_slow_flow(&p, 0.75, 3.0) - 0.75).abs() < 1e-15);
        assert!((reduced_slow_flow(&p, 0.1, 1.0) - 0.56663).abs() < 1e-5);
        let q = Params { alpha: 0.5, ..p };
        assert!(reduced_slow_flow(&q, 0.2, 200.0) < 1e-20);
        let q = Params { alpha: 1.0, ..p };
        assert!((reduced_slow_flow(&q, 0.5, 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn log_field_values() {
        let p = fig7();
        let f = log_field(&p, &State::new(0.5, 0.01).to_log()).unwrap();
        assert!((f.dv - (0.11 * 0.5 / 0.51 - 0.105)).abs() < 1e-15);
        assert!((f.dv - 0.0028431).abs() < 1e-7);
        // on the v-nullcline line the w-rate vanishes
        let r0 = p.beta / (p.d + p.eps);
        let f = log_field(&p, &State::new(0.3, (r0 - 1.0) * 0.3).to_log()).unwrap();
        assert!(f.dv.abs() < 1e-15);
    }

    #[test]
    fn aux_field_values() {
        let p = fig7();
        let a = aux_field(&p, &State::ORIGIN);
        assert_eq!((a.du, a.dv), (0.0, 0.0));
        let v = 0.3;
        let a = aux_field(&p, &State::new(0.0, v));
        let expect = p.eps * p.alpha * p.theta * v * v * (1.0 - v);
        assert!((a.du - expect).abs() < 1e-16);
    }

    #[test]
    fn dulac_stated_values() {
        let p = fig7();
        let q = Params { theta: 1.0, ..p };
        let s = State::new(0.2, 0.4);
        assert!((dulac_divergence_stated(&q, &s).unwrap() + q.eps * q.alpha).abs() < 1e-16);
        let dv = dulac_divergence_stated(&p, &State::new(0.3, 0.3)).unwrap();
        assert!((dv + 0.0116667).abs() < 1e-7);
        // sign change inside the simplex
        assert!(dulac_divergence_stated(&p, &State::new(0.1, 0.1)).unwrap() > 0.0);
    }

    #[test]
    fn dulac_matches_finite_differences() {
        let p = fig7();
        let weighted = |u: f64, v: f64| {
            let f = full_field(&p, &State::new(u, v)).unwrap();
            (f.du / (u * v), f.dv / (u * v))
        };
        for (u, v) in [
            (0.3f64, 0.3f64),
            (0.1, 0.1),
            (0.01, 0.5),
            (0.7, 0.02),
            (0.002, 0.003),
        ] {
            let h = 1e-6 * u.min(v);
            let div = (weighted(u + h, v).0 - weighted(u - h, v).0) / (2.0 * h)
                + (weighted(u, v + h).1 - weighted(u, v - h).1) / (2.0 * h);
            let exact = dulac_divergence(&p, &State::new(u, v)).unwrap();
            assert!(exact < 0.0);
            assert!(
                (div - exact).abs() < 1e-6 * exact.abs(),
                "{u} {v}: {div} vs {exact}"
            );
        }
        assert!(dulac_divergence(&p, &State::new(0.0, 0.3)).is_err());
    }

    #[test]
    fn delta_boundary_flow() {
        for name in Params::PRESETS {
            let p = Params::preset(name).unwrap();
            for i in 1..20 {
                let s = i as f64 / 20.0;
                let f = full_field(&p, &State::new(s, 0.0)).unwrap();
                assert_eq!(f.dv, 0.0);
                let f = full_field(&p, &State::new(0.0, s)).unwrap();
                let expect = p.eps * p.alpha * p.theta * s * (1.0 - s);
                assert!((f.du - expect).abs() < 1e-16 && f.du >= 0.0);
                let f = full_field(&p, &State::new(1.0 - s, s)).unwrap();
                let sum = f.du + f.dv;
                assert!((sum - (-p.eps - p.d * s)).abs() < 1e-15);
                assert!(sum < 0.0);
            }
        }
    }

    #[test]
    fn presets_match_named_sets() {
        let p = Params::preset("fig4").unwrap();
        assert_eq!(
            (p.alpha, p.theta, p.beta, p.d, p.eps),
            (4.0, 0.5, 0.075, 0.1, 0.001)
        );
        let p = Params::preset("fig5b").unwrap();
        assert_eq!((p.beta, p.d, p.eps), (0.5, 0.3, 0.005));
        assert!(Params::preset("nope").is_none());
    }
}
