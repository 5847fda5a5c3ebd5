//! Invariant suite behind `selfcheck`, and the parameter grids it sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blowup::{
    blowdown_consistency_with, chart_equilibria, chart_field, check_equilibrium, transition_map,
    u1_p1, v2_p2, ChartId, Regime,
};
use crate::equilibria::{ee_exact, fd_jacobian, jacobian};
use crate::error::{BlowupError, ModelError};
use crate::geometry::gamma_invariant;
use crate::integrator::{integrate, IntegrationOptions};
use crate::model::{dulac_divergence, Params, PlanarField, State};
use crate::nullclines::{u_nullcline_branch, v_line, BranchId};
use crate::regimes::{
    default_horizon, standard_grid, verify_asymptotics, RegimeCase, DEFAULT_TOL_ATTRACT,
};

/// Deliberate corruptions used to confirm the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    None,
    /// Perturbs the `O1-K1` chart field by `1e-6` in its second component.
    ChartField,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfcheckReport {
    pub items: Vec<CheckItem>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// One parameter set per regime case.
pub fn regime_representatives() -> Vec<(RegimeCase, Params)> {
    vec![
        (
            RegimeCase::Case1,
            Params {
                alpha: 0.5,
                theta: 0.5,
                beta: 0.075,
                d: 0.1,
                eps: 0.001,
            },
        ),
        (RegimeCase::Case2, Params::preset("fig4").expect("preset")),
        (
            RegimeCase::Case3,
            Params {
                alpha: 0.5,
                theta: 0.5,
                beta: 0.5,
                d: 0.1,
                eps: 0.005,
            },
        ),
        (RegimeCase::Case4, Params::preset("fig5a").expect("preset")),
        (RegimeCase::Case5, Params::preset("fig7").expect("preset")),
    ]
}

/// 5x5 grid in `(alpha, beta)` with `beta - d` of order one.
pub fn o1_parameter_grid() -> Vec<Params> {
    let mut out = Vec::new();
    for alpha in [1.5, 2.0, 3.0, 4.0, 5.0] {
        for beta in [0.3, 0.4, 0.5, 0.6, 0.7] {
            out.push(Params {
                alpha,
                theta: 0.5,
                beta,
                d: 0.1,
                eps: 0.005,
            });
        }
    }
    out
}

/// 5x5 grid in `(alpha, k)` with `1 < k < alpha`. The values avoid
/// `alpha - k = 4(k - 1)`, where the `E2` block has a double eigenvalue.
pub fn oeps_parameter_grid() -> Vec<Params> {
    let (d, eps) = (0.1, 0.005);
    let mut out = Vec::new();
    for alpha in [2.5, 3.5, 4.5, 5.5, 6.5] {
        for k in [1.15, 1.35, 1.65, 1.85, 2.15] {
            out.push(Params {
                alpha,
                theta: 0.5,
                beta: d + eps * k,
                d,
                eps,
            });
        }
    }
    out
}

/// Largest Dulac divergence over the cell centres of an `n x n` grid inside
/// the simplex.
pub fn dulac_grid_max(p: &Params, n: usize) -> Result<f64, ModelError> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let s = State::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            if s.u + s.v < 1.0 {
                worst = worst.max(dulac_divergence(p, &s)?);
            }
        }
    }
    Ok(worst)
}

/// Sampling box per chart coordinate; radial coordinates stay positive.
fn chart_box(id: ChartId) -> Vec<(f64, f64)> {
    match id.dim() {
        2 if id == ChartId::OEPS_PRE => vec![(0.01, 1.0), (0.01, 10.0)],
        2 => vec![(1e-3, 0.3), (0.01, 5.0)],
        _ if id == ChartId::OEPS_K3 => vec![(1e-3, 0.9), (0.01, 5.0), (0.01, 2.0)],
        _ => vec![(1e-3, 0.3), (0.01, 5.0), (0.01, 2.0)],
    }
}

pub fn random_chart_points(id: ChartId, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = chart_box(id);
    (0..n)
        .map(|_| bx.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect())
        .collect()
}

/// Parameters each chart family is checked at.
pub fn chart_reference(id: ChartId) -> Params {
    match id.regime {
        Regime::O1 => Params::preset("fig5a").expect("preset"),
        Regime::Oeps => Params::preset("fig7").expect("preset"),
    }
}

/// Max blow-down residual over `n` random points of chart `id`.
pub fn blowdown_sweep(
    id: ChartId,
    p: &Params,
    n: usize,
    seed: u64,
    fault: Fault,
) -> Result<f64, BlowupError> {
    let mut worst: f64 = 0.0;
    for pt in random_chart_points(id, n, seed) {
        let r = blowdown_consistency_with(id, p, &pt, |c| {
            let mut f = chart_field(id, p, c).expect("dimension matches");
            if fault == Fault::ChartField && id == ChartId::O1_K1 {
                f[1] += 1e-6;
            }
            f
        })?;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Worst errors over all listed chart equilibria of a regime on its grid:
/// `(field residual, Jacobian error, eigenvalue error)`.
pub fn eigen_sweep(regime: Regime) -> Result<(f64, f64, f64), BlowupError> {
    let (grid, charts): (Vec<Params>, Vec<ChartId>) = match regime {
        Regime::O1 => (o1_parameter_grid(), vec![ChartId::O1_K1, ChartId::O1_K2]),
        Regime::Oeps => (
            oeps_parameter_grid(),
            vec![
                ChartId::OEPS_PRE,
                ChartId::OEPS_K1,
                ChartId::OEPS_K2,
                ChartId::OEPS_K3,
            ],
        ),
    };
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for p in &grid {
        for id in &charts {
            for eq in chart_equilibria(*id, p)? {
                let c = check_equilibrium(p, &eq)?;
                worst.0 = worst.0.max(c.field_residual);
                worst.1 = worst.1.max(c.jacobian_error);
                worst.2 = worst.2.max(c.eigenvalue_error);
            }
        }
    }
    Ok(worst)
}

/// Max deviation of `u1^(0) v2^(2)` from 1 over the `O1` grid.
pub fn p1_p2_product_error() -> f64 {
    o1_parameter_grid()
        .iter()
        .map(|p| (u1_p1(p) * v2_p2(p) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Max round-trip error of all transition maps at random overlap points.
pub fn transition_round_trip_error(n: usize, seed: u64) -> Result<f64, BlowupError> {
    let pairs = [
        (ChartId::O1_K1, ChartId::O1_K2),
        (ChartId::O1_K2, ChartId::O1_K1),
        (ChartId::OEPS_K1, ChartId::OEPS_K2),
        (ChartId::OEPS_K2, ChartId::OEPS_K1),
        (ChartId::OEPS_K1, ChartId::OEPS_K3),
        (ChartId::OEPS_K3, ChartId::OEPS_K1),
        (ChartId::OEPS_K2, ChartId::OEPS_K3),
        (ChartId::OEPS_K3, ChartId::OEPS_K2),
    ];
    let mut worst: f64 = 0.0;
    for (i, (a, b)) in pairs.iter().enumerate() {
        for pt in random_chart_points(*a, n, seed.wrapping_add(i as u64)) {
            let back = transition_map(*b, *a, &transition_map(*a, *b, &pt)?)?;
            for (x, y) in pt.iter().zip(&back) {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

/// Max relative gap between the analytic and finite-difference Jacobians at
/// the endemic point and random interior states.
pub fn jacobian_crosscheck(p: &Params, n: usize, seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<State> = ee_exact(p).into_iter().collect();
    while states.len() < n + 1 {
        let s = State::new(rng.gen_range(0.01..0.98), rng.gen_range(0.01..0.98));
        if s.u + s.v < 0.99 {
            states.push(s);
        }
    }
    let mut worst: f64 = 0.0;
    for s in &states {
        let a = jacobian(p, s)?;
        let f = fd_jacobian(p, s)?;
        let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((a[r][c] - f[r][c]).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Relative drift of `Gamma` along the fast flow from `(0.3, 0.3)`.
pub fn gamma_drift(
    p: &Params,
    t_max: f64,
    rel_tol: f64,
) -> Result<f64, crate::error::IntegrationError> {
    let s0 = State::new(0.3, 0.3);
    let g0 = gamma_invariant(p, &s0)?;
    let opts = IntegrationOptions::default()
        .with_tols(rel_tol, rel_tol * 1e-2)
        .with_t_max(t_max);
    let tr = integrate(PlanarField::Fast, p, s0, &opts)?;
    let mut worst: f64 = 0.0;
    for s in &tr.states {
        worst = worst.max((gamma_invariant(p, s)? - g0).abs() / g0);
    }
    Ok(worst)
}

/// Max `|u'|` over the exact nullcline branches emitted for `p`.
pub fn nullcline_residual(p: &Params, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for b in [BranchId::L1, BranchId::L2] {
        if let Ok(c) = u_nullcline_branch(p, b, n) {
            worst = worst.max(c.max_residual);
        }
    }
    if let Ok(c) = v_line(p, n) {
        worst = worst.max(c.max_residual);
    }
    worst
}

fn item(name: &'static str, passed: bool, detail: String) -> CheckItem {
    CheckItem {
        name,
        passed,
        detail,
    }
}

fn err_item(name: &'static str, e: impl std::fmt::Display) -> CheckItem {
    item(name, false, format!("error: {e}"))
}

/// Runs the invariant suite. `seed` drives the random sample points.
pub fn selfcheck(fault: Fault, seed: u64) -> SelfcheckReport {
    let mut items = Vec::new();

    let mut worst = f64::NEG_INFINITY;
    let mut failed = None;
    for (_, p) in regime_representatives() {
        match dulac_grid_max(&p, 200) {
            Ok(m) => worst = worst.max(m),
            Err(e) => failed = Some(e),
        }
    }
    items.push(match failed {
        Some(e) => err_item("dulac-negative", e),
        None => item(
            "dulac-negative",
            worst < 0.0,
            format!("max divergence {worst:.3e}"),
        ),
    });

    let fig4 = Params::preset("fig4").expect("preset");
    items.push(match gamma_drift(&fig4, 200.0, 1e-10) {
        Ok(d) => item(
            "gamma-conservation",
            d < 1e-7,
            format!("relative drift {d:.3e}"),
        ),
        Err(e) => err_item("gamma-conservation", e),
    });

    let mut bd_worst: f64 = 0.0;
    let mut bd_err = None;
    for (i, id) in ChartId::ALL.iter().enumerate() {
        match blowdown_sweep(
            *id,
            &chart_reference(*id),
            100,
            seed.wrapping_add(i as u64),
            fault,
        ) {
            Ok(r) => bd_worst = bd_worst.max(r),
            Err(e) => bd_err = Some(e),
        }
    }
    items.push(match bd_err {
        Some(e) => err_item("blowdown-residual", e),
        None => item(
            "blowdown-residual",
            bd_worst < 1e-10,
            format!("max residual {bd_worst:.3e}"),
        ),
    });

    items.push(match transition_round_trip_error(100, seed) {
        Ok(r) => item(
            "transition-round-trip",
            r < 1e-14,
            format!("max error {r:.3e}"),
        ),
        Err(e) => err_item("transition-round-trip", e),
    });

    for (name, regime) in [
        ("chart-eigen-O1", Regime::O1),
        ("chart-eigen-Oeps", Regime::Oeps),
    ] {
        items.push(match eigen_sweep(regime) {
            Ok((f, j, l)) => item(
                name,
                f < 1e-12 && j < 1e-10 && l < 1e-10,
                format!("field {f:.1e}, jacobian {j:.1e}, eigenvalues {l:.1e}"),
            ),
            Err(e) => err_item(name, e),
        });
    }
    let prod = p1_p2_product_error();
    items.push(item(
        "p1-p2-product",
        prod < 1e-12,
        format!("max |u1 v2 - 1| {prod:.1e}"),
    ));

    let fig7 = Params::preset("fig7").expect("preset");
    items.push(match jacobian_crosscheck(&fig7, 50, seed) {
        Ok(r) => item(
            "jacobian-crosscheck",
            r < 1e-6,
            format!("max relative gap {r:.3e}"),
        ),
        Err(e) => err_item("jacobian-crosscheck", e),
    });

    let nres = regime_representatives()
        .iter()
        .map(|(_, p)| nullcline_residual(p, 400))
        .fold(0.0, f64::max);
    items.push(item(
        "nullcline-residual",
        nres < 1e-9,
        format!("max |u'| {nres:.3e}"),
    ));

    for (name, preset) in [
        ("classifier-vs-simulation-fig4", "fig4"),
        ("classifier-vs-simulation-fig7", "fig7"),
    ] {
        let p = Params::preset(preset).expect("preset");
        items.push(
            match verify_asymptotics(
                &p,
                &standard_grid(),
                default_horizon(&p),
                DEFAULT_TOL_ATTRACT,
            ) {
                Ok(r) => item(
                    name,
                    r.fraction == 1.0,
                    format!(
                        "{:?}: {:.0}% of the grid reach {:?}",
                        r.case,
                        100.0 * r.fraction,
                        r.attractor
                    ),
                ),
                Err(e) => err_item(name, e),
            },
        );
    }

    SelfcheckReport { items }
}
