//! The five asymptotic regimes and the experiments that probe them.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{alpha_star_or_inf, dfe, ee_exact};
use crate::error::{IntegrationError, ModelError};
use crate::geometry::{exit_curve, separatrix_gamma};
use crate::integrator::{integrate, Direction, Event, IntegrationOptions, Trajectory};
use crate::model::{Params, PlanarField, State};

/// Equalities within this tolerance are reported as boundaries.
pub const BOUNDARY_TOL: f64 = 1e-12;
pub const DEFAULT_TOL_ATTRACT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeCase {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Attractor {
    X0,
    X1,
    X2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `alpha = 1` (`R_d = 0`).
    AlphaOne,
    /// `R0 = 1`, i.e. `beta = d + eps`.
    R0One,
    /// `beta = d + eps*alpha*`.
    WindowTop,
}

/// What the origin does in a regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum X0Role {
    Sink,
    SinkWithHomoclinicSector,
    Saddle,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub case: Option<RegimeCase>,
    pub boundaries: Vec<Boundary>,
    pub rd: f64,
    pub r0: f64,
    /// `d + eps`.
    pub beta_lower: f64,
    /// `d + eps*alpha*`; infinite when the window is unbounded.
    pub beta_upper: f64,
}

impl RegimeReport {
    pub fn attractor(&self) -> Option<Attractor> {
        self.case.map(|c| match c {
            RegimeCase::Case1 | RegimeCase::Case3 | RegimeCase::Case4 => Attractor::X0,
            RegimeCase::Case2 => Attractor::X1,
            RegimeCase::Case5 => Attractor::X2,
        })
    }

    pub fn x0_role(&self) -> X0Role {
        match self.case {
            Some(RegimeCase::Case1 | RegimeCase::Case3) => X0Role::Sink,
            Some(RegimeCase::Case4) => X0Role::SinkWithHomoclinicSector,
            Some(RegimeCase::Case2 | RegimeCase::Case5) => X0Role::Saddle,
            None => X0Role::Undetermined,
        }
    }

    pub fn is_boundary(&self) -> bool {
        self.case.is_none()
    }
}

pub fn classify_regime(p: &Params) -> RegimeReport {
    let rd = p.alpha - 1.0;
    let r0 = p.beta / (p.d + p.eps);
    let beta_lower = p.d + p.eps;
    let beta_upper = p.d + p.eps * alpha_star_or_inf(p);
    let mut boundaries = Vec::new();
    if rd.abs() <= BOUNDARY_TOL {
        boundaries.push(Boundary::AlphaOne);
    }
    if (r0 - 1.0).abs() <= BOUNDARY_TOL {
        boundaries.push(Boundary::R0One);
    }
    if rd > 0.0 && (p.beta - beta_upper).abs() <= BOUNDARY_TOL {
        boundaries.push(Boundary::WindowTop);
    }
    let case = if !boundaries.is_empty() {
        None
    } else if r0 < 1.0 {
        Some(if rd < 0.0 {
            RegimeCase::Case1
        } else {
            RegimeCase::Case2
        })
    } else if rd < 0.0 {
        Some(RegimeCase::Case3)
    } else if p.beta > beta_upper {
        Some(RegimeCase::Case4)
    } else {
        Some(RegimeCase::Case5)
    };
    RegimeReport {
        case,
        boundaries,
        rd,
        r0,
        beta_lower,
        beta_upper,
    }
}

pub fn attractor_location(p: &Params, a: Attractor) -> Option<State> {
    match a {
        Attractor::X0 => Some(State::ORIGIN),
        Attractor::X1 => dfe(p),
        Attractor::X2 => ee_exact(p),
    }
}

/// The standard 5x5 interior grid: `u0 in {0.1, ..., 0.9}`, `v0` at fractions
/// `{0.1, ..., 0.9}` of `1 - u0`.
pub fn standard_grid() -> Vec<State> {
    let mut out = Vec::with_capacity(25);
    for i in 0..5 {
        let u = 0.1 + 0.2 * i as f64;
        for j in 0..5 {
            out.push(State::new(u, (1.0 - u) * (0.1 + 0.2 * j as f64)));
        }
    }
    out
}

/// Horizon long enough for the slow flow to settle: `40/eps`.
pub fn default_horizon(p: &Params) -> f64 {
    40.0 / p.eps
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcOutcome {
    pub s0: State,
    pub final_state: Option<State>,
    pub distance: Option<f64>,
    pub lyapunov_monotone: bool,
    pub success: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub case: RegimeCase,
    pub attractor: Attractor,
    pub target: State,
    pub outcomes: Vec<IcOutcome>,
    pub fraction: f64,
}

/// Whether `v` never increases along the sampled trajectory.
pub fn v_nonincreasing(tr: &Trajectory) -> bool {
    tr.log_v.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

pub fn verify_asymptotics(
    p: &Params,
    ics: &[State],
    horizon: f64,
    tol_attract: f64,
) -> Result<AsymptoticsReport, ModelError> {
    let reg = classify_regime(p);
    let (case, attractor) = match (reg.case, reg.attractor()) {
        (Some(c), Some(a)) => (c, a),
        _ => return Err(ModelError::Regime("parameters lie on a regime boundary")),
    };
    let target = attractor_location(p, attractor)
        .ok_or(ModelError::Regime("predicted attractor does not exist"))?;
    let opts = IntegrationOptions::default().with_t_max(horizon);
    let outcomes: Vec<IcOutcome> = ics
        .par_iter()
        .map(|s0| match integrate(PlanarField::Full, p, *s0, &opts) {
            Ok(tr) => {
                let fin = tr.last_state();
                let dist = fin.dist(&target);
                let mono = v_nonincreasing(&tr);
                let lyapunov_ok = attractor == Attractor::X0 && reg.r0 < 1.0 && mono;
                IcOutcome {
                    s0: *s0,
                    final_state: Some(fin),
                    distance: Some(dist),
                    lyapunov_monotone: mono,
                    success: dist < tol_attract || lyapunov_ok,
                    error: None,
                }
            }
            Err(e) => IcOutcome {
                s0: *s0,
                final_state: None,
                distance: None,
                lyapunov_monotone: false,
                success: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let ok = outcomes.iter().filter(|o| o.success).count();
    let fraction = if outcomes.is_empty() {
        0.0
    } else {
        ok as f64 / outcomes.len() as f64
    };
    Ok(AsymptoticsReport {
        case,
        attractor,
        target,
        outcomes,
        fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomoclinicConfig {
    /// Return radius around the origin.
    pub r_home: f64,
    /// Inner radius; the approach statistic uses distances in `[r_deep, r_home]`.
    pub r_deep: f64,
    pub t_max: f64,
    /// Dense samples per accepted step.
    pub per_step: usize,
}

impl Default for HomoclinicConfig {
    fn default() -> Self {
        HomoclinicConfig {
            r_home: 0.02,
            r_deep: 0.002,
            t_max: 5000.0,
            per_step: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomoclinicDiagnostics {
    pub s0: State,
    /// `u` at the first crossing of `v = eps` (leaving the slow flow).
    pub u_exit: Option<f64>,
    pub max_v: f64,
    pub closest_approach: f64,
    pub t_home: Option<f64>,
    /// Mean of `u/v` over the final approach, distances in `[r_deep, r_home]`.
    pub approach_ratio: Option<f64>,
    /// Max Euclidean distance from the fast segment to `gamma_E(u_exit)`.
    pub fast_segment_distance: Option<f64>,
    pub returned: bool,
}

/// Launch points on `v = eps^2` spread over `(0, 1 - 1/alpha)`.
pub fn default_homoclinic_launches(p: &Params, n: usize) -> Vec<State> {
    let cap = 1.0 - 1.0 / p.alpha;
    (0..n)
        .map(|i| State::new(cap * (i + 1) as f64 / (n + 1) as f64, p.eps * p.eps))
        .collect()
}

/// Euclidean distance from `pt` to the curve `v = gamma_E(u)`, `0 < u <= u_e`.
pub fn distance_to_exit_curve(p: &Params, u_e: f64, pt: &State) -> f64 {
    let d2 = |u: f64| {
        let dv = exit_curve(p, u_e, u) - pt.v;
        (u - pt.u) * (u - pt.u) + dv * dv
    };
    let mut cands: Vec<f64> = (0..=200).map(|i| u_e * i as f64 / 200.0).collect();
    cands.extend((0..=120).map(|i| u_e * 10f64.powf(-12.0 + 0.1 * i as f64)));
    cands.sort_by(f64::total_cmp);
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for (i, &u) in cands.iter().enumerate() {
        let v = d2(u);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = cands[best_i.saturating_sub(1)];
    let mut hi = cands[(best_i + 1).min(cands.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if d2(a) < d2(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.min(d2(0.5 * (lo + hi))).sqrt()
}

/// Integration options of one homoclinic run: events `exit` (v = eps),
/// `home` and the terminal `deep`.
pub fn homoclinic_options(p: &Params, cfg: &HomoclinicConfig) -> IntegrationOptions {
    IntegrationOptions::default()
        .with_tols(1e-10, 1e-12)
        .with_t_max(cfg.t_max)
        .with_event(Event::hyperplane(
            "exit",
            0.0,
            1.0,
            p.eps,
            Direction::Rising,
        ))
        .with_event(Event::ball_entry("home", State::ORIGIN, cfg.r_home))
        .with_event(Event::ball_entry("deep", State::ORIGIN, cfg.r_deep).terminal())
}

fn homoclinic_run(p: &Params, s0: &State, cfg: &HomoclinicConfig) -> HomoclinicDiagnostics {
    let opts = homoclinic_options(p, cfg);
    let tr = match integrate(PlanarField::Full, p, *s0, &opts) {
        Ok(tr) => tr,
        Err(_) => {
            return HomoclinicDiagnostics {
                s0: *s0,
                u_exit: None,
                max_v: f64::NAN,
                closest_approach: f64::NAN,
                t_home: None,
                approach_ratio: None,
                fast_segment_distance: None,
                returned: false,
            }
        }
    };
    let exit = tr.first_hit("exit").map(|h| (h.t, h.state));
    let home = tr.first_hit("home").map(|h| h.t);
    let dense = tr.dense_samples(cfg.per_step);
    let max_v = dense.iter().map(|(_, s)| s.v).fold(0.0, f64::max);
    let closest = dense
        .iter()
        .filter(|(t, _)| exit.is_none_or(|(te, _)| *t >= te))
        .map(|(_, s)| s.norm())
        .fold(f64::INFINITY, f64::min);
    let approach_ratio = exit.and_then(|(te, _)| {
        let ratios: Vec<f64> = dense
            .iter()
            .filter(|(t, s)| *t > te && s.norm() <= cfg.r_home && s.norm() >= cfg.r_deep)
            .map(|(_, s)| s.u / s.v)
            .collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    });
    let fast_segment_distance = match (exit, home) {
        (Some((te, se)), Some(th)) => Some(
            dense
                .iter()
                .filter(|(t, _)| *t >= te && *t <= th)
                .map(|(_, s)| distance_to_exit_curve(p, se.u, s))
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    HomoclinicDiagnostics {
        s0: *s0,
        u_exit: exit.map(|(_, s)| s.u),
        max_v,
        closest_approach: closest,
        t_home: home,
        approach_ratio,
        fast_segment_distance,
        returned: home.is_some(),
    }
}

pub fn homoclinic_experiment(
    p: &Params,
    launches: &[State],
    cfg: &HomoclinicConfig,
) -> Result<Vec<HomoclinicDiagnostics>, ModelError> {
    if classify_regime(p).case != Some(RegimeCase::Case4) {
        return Err(ModelError::Regime("homoclinic experiment needs Case4"));
    }
    let cap = 1.0 - 1.0 / p.alpha;
    if launches
        .iter()
        .any(|s| !(s.u > 0.0 && s.u < cap && s.v > 0.0 && s.v <= p.eps * p.eps))
    {
        return Err(ModelError::Regime(
            "launch points need 0 < u0 < 1 - 1/alpha and 0 < v0 <= eps^2",
        ));
    }
    Ok(launches
        .par_iter()
        .map(|s| homoclinic_run(p, s, cfg))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeteroclinicRecord {
    pub eps: f64,
    pub distance: f64,
    pub samples: usize,
}

/// Max vertical distance from the near-cycle orbit to `gamma`, per `eps`.
pub fn heteroclinic_cycle_distance(
    p: &Params,
    eps_list: &[f64],
    cfg: &HomoclinicConfig,
) -> Result<Vec<HeteroclinicRecord>, IntegrationError> {
    eps_list
        .par_iter()
        .map(|&e| {
            let q = p.with_eps(e);
            if classify_regime(&q).case != Some(RegimeCase::Case4) {
                return Err(IntegrationError::Model(ModelError::Regime(
                    "heteroclinic distance needs Case4 for every eps",
                )));
            }
            let cap = 1.0 - 1.0 / q.alpha;
            let opts = IntegrationOptions::default()
                .with_tols(1e-10, 1e-12)
                .with_t_max(cfg.t_max)
                .with_event(Event::hyperplane("exit", 0.0, 1.0, e, Direction::Rising))
                .with_event(Event::ball_entry("home", State::ORIGIN, cfg.r_home).terminal());
            let tr = integrate(PlanarField::Full, &q, State::new(cap - e, e * e), &opts)?;
            let te = tr.first_hit("exit").map(|h| h.t).unwrap_or(f64::INFINITY);
            let mut distance: f64 = 0.0;
            let mut samples = 0;
            for (t, s) in tr.dense_samples(cfg.per_step) {
                if t >= te && s.u >= 0.2 && s.u <= cap {
                    distance = distance.max((s.v - separatrix_gamma(&q, s.u)).abs());
                    samples += 1;
                }
            }
            Ok(HeteroclinicRecord {
                eps: e,
                distance,
                samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanardMetrics {
    /// Longest u-distance covered during one stretch with `v < eps`.
    pub slow_excursion: f64,
    /// Entries into `v < eps` before capture.
    pub alternations: usize,
    pub capture_time: Option<f64>,
    pub final_distance: f64,
}

pub fn canard_metrics(
    p: &Params,
    s0: &State,
    t_max: f64,
) -> Result<CanardMetrics, IntegrationError> {
    if classify_regime(p).case != Some(RegimeCase::Case5) {
        return Err(IntegrationError::Model(ModelError::Regime(
            "canard metrics need Case5",
        )));
    }
    let ee = ee_exact(p).expect("Case5 has an endemic point");
    let opts = IntegrationOptions::default()
        .with_tols(1e-10, 1e-12)
        .with_t_max(t_max);
    let tr = integrate(PlanarField::Full, p, *s0, &opts)?;
    let dense = tr.dense_samples(8);
    let capture_time = dense
        .iter()
        .find(|(_, s)| s.dist(&ee) < DEFAULT_TOL_ATTRACT)
        .map(|(t, _)| *t);
    let t_cap = capture_time.unwrap_or(f64::INFINITY);
    let mut slow_excursion: f64 = 0.0;
    let mut alternations = 0;
    let mut stretch: Option<(f64, f64)> = None;
    for (t, s) in &dense {
        if s.v < p.eps {
            stretch = Some(match stretch {
                None => {
                    if *t < t_cap {
                        alternations += 1;
                    }
                    (s.u, s.u)
                }
                Some((lo, hi)) => (lo.min(s.u), hi.max(s.u)),
            });
        } else if let Some((lo, hi)) = stretch.take() {
            slow_excursion = slow_excursion.max(hi - lo);
        }
    }
    if let Some((lo, hi)) = stretch {
        slow_excursion = slow_excursion.max(hi - lo);
    }
    Ok(CanardMetrics {
        slow_excursion,
        alternations,
        capture_time,
        final_distance: tr.last_state().dist(&ee),
    })
}

/// Smallest distance between two crossings of the section `a*u + b*v = level`
/// (rising direction), ignoring crossings within `exclude` of an equilibrium.
pub fn min_return_distance(
    p: &Params,
    s0: &State,
    t_max: f64,
    section: (f64, f64, f64),
    exclude: f64,
) -> Result<Option<f64>, IntegrationError> {
    let (a, b, level) = section;
    let opts = IntegrationOptions::default()
        .with_t_max(t_max)
        .with_event(Event::hyperplane("section", a, b, level, Direction::Rising));
    let tr = integrate(PlanarField::Full, p, *s0, &opts)?;
    let eqs: Vec<State> = [Some(State::ORIGIN), dfe(p), ee_exact(p)]
        .into_iter()
        .flatten()
        .collect();
    let pts: Vec<State> = tr
        .events
        .iter()
        .map(|h| h.state)
        .filter(|s| eqs.iter().all(|e| s.dist(e) > exclude))
        .collect();
    let mut best: Option<f64> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[i].dist(&pts[j]);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    Ok(best)
}
