use std::time::Instant;

use gspt_core::blowup::{
    chart_equilibria, default_transit_samples, section_transit, ChartEquilibrium, SectionConfig,
    TransitReport,
};
use gspt_core::equilibria::{
    alpha_star, bifurcation_sweep, classify_equilibrium, dfe, ee_exact, ee_expansion,
    reproduction_numbers, BifurcationBranch,
};
use gspt_core::geometry::{entry_options, score_side_predictions, separatrix_gamma, side_grid};
use gspt_core::integrator::{integrate_partial, Termination};
use gspt_core::nullclines::{
    nullcline_slopes, theta0_parabola, u_nullcline_branch, v_line, v_nullcline,
};
use gspt_core::regimes::{
    canard_metrics, classify_regime, default_homoclinic_launches, default_horizon,
    heteroclinic_cycle_distance, homoclinic_experiment, homoclinic_options, standard_grid,
    verify_asymptotics, HomoclinicConfig, HomoclinicDiagnostics, DEFAULT_TOL_ATTRACT,
};
use gspt_core::verify::{
    blowdown_sweep, chart_reference, eigen_sweep, p1_p2_product_error, selfcheck, Fault,
};
use gspt_core::{
    BranchCurve, BranchId, ChartId, IntegrationOptions, Params, PlanarField, Regime, State,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{
    failure_row, num, summary, trajectory_rows, Output, BRANCH_HEADER, CURVE_HEADER,
    DISTANCE_HEADER, FIG4_HEADER, TRAJECTORY_HEADER,
};

/// Figure names accepted by `figure`.
pub const FIGURES: [&str; 4] = ["fig4", "fig5", "fig6", "fig7"];

#[derive(Debug, Serialize)]
struct RunRecord {
    file: String,
    s0: State,
    t_end: f64,
    final_state: State,
    termination: Termination,
    accepted_steps: usize,
    error: Option<String>,
}

/// Integrates each IC and writes one trajectory CSV per IC. A failed run keeps
/// its rows and ends with a marker row.
fn write_trajectories(
    out: &Output,
    prefix: &str,
    p: &Params,
    ics: &[State],
    opts: &IntegrationOptions,
) -> Result<Vec<RunRecord>> {
    let mut recs = Vec::with_capacity(ics.len());
    for (i, s0) in ics.iter().enumerate() {
        let run = integrate_partial(PlanarField::Full, p, *s0, opts).map_err(|e| {
            CliError::Config(format!("initial condition ({}, {}): {e}", s0.u, s0.v))
        })?;
        let tr = &run.trajectory;
        let mut rows = trajectory_rows(tr);
        if run.error.is_some() {
            rows.push(failure_row(tr));
        }
        let file = if ics.len() == 1 {
            format!("{prefix}.csv")
        } else {
            format!("{prefix}_{i:03}.csv")
        };
        out.csv(&file, &TRAJECTORY_HEADER, &rows)?;
        recs.push(RunRecord {
            file,
            s0: *s0,
            t_end: if tr.is_empty() { 0.0 } else { tr.last_time() },
            final_state: if tr.is_empty() { *s0 } else { tr.last_state() },
            termination: tr.termination,
            accepted_steps: tr.stats.accepted,
            error: run.error.map(|e| e.to_string()),
        });
    }
    Ok(recs)
}

fn failed_runs(recs: &[RunRecord]) -> Result<()> {
    let bad: Vec<String> = recs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.file)))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(bad.join("; ")))
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let ics = cfg.initial_conditions();
    if ics.is_empty() {
        return Err(CliError::Config(
            "no initial conditions: give --u0/--v0, `ics` or a non-empty `grid`".into(),
        ));
    }
    let opts = cfg.integration(default_horizon(&p))?;
    let out = Output::create(cfg.out_dir())?;
    let recs = write_trajectories(&out, "trajectory", &p, &ics, &opts)?;
    for r in &recs {
        println!(
            "{}: t = {:.6e}, final ({:.7}, {:.7}){}",
            r.file,
            r.t_end,
            r.final_state.u,
            r.final_state.v,
            r.error
                .as_deref()
                .map(|e| format!(" [failed: {e}]"))
                .unwrap_or_default()
        );
    }
    out.json(
        "simulate.json",
        &summary("simulate", Some(p), cfg, started, &recs),
    )?;
    failed_runs(&recs)
}

pub fn classify(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let r = classify_regime(&p);
    match r.case {
        Some(c) => println!("{c:?}: attractor {:?}, x0 {:?}", r.attractor(), r.x0_role()),
        None => println!("boundary: {:?}", r.boundaries),
    }
    println!(
        "R0 = {:.6}, Rd = {:.6}, beta window ({:.6}, {:.6})",
        r.r0, r.rd, r.beta_lower, r.beta_upper
    );
    let out = Output::create(cfg.out_dir())?;
    out.json(
        "classify.json",
        &summary("classify", Some(p), cfg, started, &r),
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EquilibriaResult {
    reproduction: Option<gspt_core::ReproductionNumbers>,
    alpha_star: Option<f64>,
    dfe: Option<gspt_core::EquilibriumReport>,
    ee: Option<gspt_core::EquilibriumReport>,
    ee_expansion: State,
    notes: Vec<String>,
}

fn keep<T, E: std::fmt::Display>(
    notes: &mut Vec<String>,
    r: std::result::Result<T, E>,
) -> Option<T> {
    r.map_err(|e| notes.push(e.to_string())).ok()
}

pub fn equilibria(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let mut notes = Vec::new();
    let reproduction = keep(&mut notes, reproduction_numbers(&p));
    let astar = keep(&mut notes, alpha_star(&p));
    let dfe_r = dfe(&p).and_then(|s| keep(&mut notes, classify_equilibrium(&p, &s)));
    let ee_r = ee_exact(&p).and_then(|s| keep(&mut notes, classify_equilibrium(&p, &s)));
    for (name, rep) in [("DFE", &dfe_r), ("EE", &ee_r)] {
        match rep {
            Some(r) => println!(
                "{name}: ({:.10}, {:.10}) {}",
                r.location.u,
                r.location.v,
                r.kind.as_str()
            ),
            None => println!("{name}: absent"),
        }
    }
    let res = EquilibriaResult {
        reproduction,
        alpha_star: astar,
        dfe: dfe_r,
        ee: ee_r,
        ee_expansion: ee_expansion(&p),
        notes,
    };
    let out = Output::create(cfg.out_dir())?;
    out.json(
        "equilibria.json",
        &summary("equilibria", Some(p), cfg, started, &res),
    )?;
    Ok(())
}

fn curve_rows(c: &BranchCurve) -> Vec<Vec<String>> {
    c.params
        .iter()
        .zip(&c.points)
        .map(|(t, s)| vec![num(*t), num(s.u), num(s.v)])
        .collect()
}

fn branch_name(b: BranchId) -> &'static str {
    match b {
        BranchId::L1 => "L1",
        BranchId::L2 => "L2",
        BranchId::Theta0Parabola => "parabola",
        BranchId::VLine => "vline",
    }
}

#[derive(Debug, Serialize)]
struct CurveRecord {
    branch: &'static str,
    file: Option<String>,
    points: usize,
    max_residual: Option<f64>,
    residual_constant: Option<f64>,
    note: Option<String>,
}

/// Writes every nullcline branch that exists for `p` as `<prefix>_<branch>.csv`.
fn write_nullclines(out: &Output, prefix: &str, p: &Params, n: usize) -> Result<Vec<CurveRecord>> {
    let curves = [
        (BranchId::L1, u_nullcline_branch(p, BranchId::L1, n)),
        (BranchId::L2, u_nullcline_branch(p, BranchId::L2, n)),
        (BranchId::Theta0Parabola, theta0_parabola(p, n)),
        (BranchId::VLine, v_line(p, n)),
    ];
    let mut recs = Vec::new();
    for (id, c) in curves {
        let name = branch_name(id);
        recs.push(match c {
            Ok(c) => {
                let file = format!("{prefix}_{name}.csv");
                out.csv(&file, &CURVE_HEADER, &curve_rows(&c))?;
                CurveRecord {
                    branch: name,
                    file: Some(file),
                    points: c.points.len(),
                    max_residual: Some(c.max_residual),
                    residual_constant: c.residual_constant,
                    note: None,
                }
            }
            Err(e) => CurveRecord {
                branch: name,
                file: None,
                points: 0,
                max_residual: None,
                residual_constant: None,
                note: Some(e.to_string()),
            },
        });
    }
    Ok(recs)
}

pub fn nullclines(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let n = cfg.n.unwrap_or(400);
    if n < 2 {
        return Err(CliError::Config("--n must be at least 2".into()));
    }
    let out = Output::create(cfg.out_dir())?;
    let recs = write_nullclines(&out, "nullcline", &p, n)?;
    for r in &recs {
        match (&r.file, &r.note) {
            (Some(f), _) => println!("{}: {} points -> {f}", r.branch, r.points),
            (None, Some(e)) => println!("{}: skipped ({e})", r.branch),
            _ => {}
        }
    }
    #[derive(Serialize)]
    struct Res {
        slopes: Option<gspt_core::nullclines::NullclineSlopes>,
        v_nullcline: gspt_core::nullclines::VNullcline,
        branches: Vec<CurveRecord>,
    }
    let res = Res {
        slopes: nullcline_slopes(&p).ok(),
        v_nullcline: v_nullcline(&p),
        branches: recs,
    };
    out.json(
        "nullclines.json",
        &summary("nullclines", Some(p), cfg, started, &res),
    )?;
    Ok(())
}

fn branch_rows(br: &BifurcationBranch) -> Vec<Vec<String>> {
    br.records
        .iter()
        .map(|r| {
            let (u, v, ok) = match &r.ee {
                Some(e) => (e.location.u, e.location.v, e.exists_in_delta),
                None => (f64::NAN, f64::NAN, false),
            };
            vec![num(r.beta), num(u), num(v), ok.to_string()]
        })
        .collect()
}

/// Default range: the existence window padded by 10% of its width.
fn window_range(p: &Params) -> (f64, f64) {
    let lo = p.d + p.eps;
    let hi = match alpha_star(p) {
        Ok(a) if a.is_finite() && a > 1.0 => p.d + p.eps * a,
        _ => p.d + 10.0 * p.eps,
    };
    let pad = 0.1 * (hi - lo);
    ((lo - pad).max(1e-9), hi + pad)
}

#[derive(Debug, Serialize)]
struct WindowSummary {
    eps: f64,
    file: String,
    lower: Option<f64>,
    upper: Option<f64>,
    lower_exact: f64,
    upper_exact: Option<f64>,
    width: Option<f64>,
}

fn sweep_to(
    out: &Output,
    file: &str,
    p: &Params,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<WindowSummary> {
    let br = bifurcation_sweep(p, lo, hi, n).map_err(|e| CliError::Config(e.to_string()))?;
    out.csv(file, &BRANCH_HEADER, &branch_rows(&br))?;
    Ok(WindowSummary {
        eps: p.eps,
        file: file.to_string(),
        lower: br.lower,
        upper: br.upper,
        lower_exact: p.d + p.eps,
        upper_exact: alpha_star(p).ok().map(|a| p.d + p.eps * a),
        width: br.window_width(),
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig6")?;
    let (lo, hi) = window_range(&p);
    let (lo, hi) = (cfg.beta_min.unwrap_or(lo), cfg.beta_max.unwrap_or(hi));
    let out = Output::create(cfg.out_dir())?;
    let s = sweep_to(&out, "sweep.csv", &p, lo, hi, cfg.n.unwrap_or(201))?;
    println!(
        "beta window: lower {:?}, upper {:?}, width {:?}",
        s.lower, s.upper, s.width
    );
    out.json("sweep.json", &summary("sweep", Some(p), cfg, started, &s))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CheckLine {
    name: String,
    passed: bool,
    detail: String,
}

fn line(name: impl Into<String>, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

pub fn blowup_verify(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let mut lines = Vec::new();
    for (regime, name) in [(Regime::O1, "eigen-O1"), (Regime::Oeps, "eigen-Oeps")] {
        lines.push(match eigen_sweep(regime) {
            Ok((r, j, e)) => line(
                name,
                r < 1e-10 && j < 1e-10 && e < 1e-10,
                format!("residual {r:.1e}, jacobian {j:.1e}, eigenvalues {e:.1e}"),
            ),
            Err(e) => line(name, false, e.to_string()),
        });
    }
    let prod = p1_p2_product_error();
    lines.push(line("p1-p2-product", prod < 1e-12, format!("{prod:.1e}")));
    for (i, id) in ChartId::ALL.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        lines.push(
            match blowdown_sweep(*id, &chart_reference(*id), 100, seed, Fault::None) {
                Ok(r) => line(
                    format!("blowdown-{}", id.name()),
                    r < 1e-10,
                    format!("{r:.1e}"),
                ),
                Err(e) => line(format!("blowdown-{}", id.name()), false, e.to_string()),
            },
        );
    }
    let scfg = SectionConfig::default();
    let mut transits: Vec<TransitReport> = Vec::new();
    for (regime, q) in [
        (Regime::O1, chart_reference(ChartId::O1_K1)),
        (Regime::Oeps, chart_reference(ChartId::OEPS_K1)),
    ] {
        let name = format!("transit-{regime:?}");
        match section_transit(regime, &q, &scfg, &default_transit_samples(regime)) {
            Ok(r) => {
                lines.push(line(
                    &name,
                    r.successes == r.samples.len(),
                    format!("{}/{}", r.successes, r.samples.len()),
                ));
                transits.push(r);
            }
            Err(e) => lines.push(line(&name, false, e.to_string())),
        }
    }
    for l in &lines {
        println!(
            "{} {}: {}",
            if l.passed { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        );
    }
    // chart equilibria for the requested parameters, where the charts apply
    let mut equilibria: Vec<ChartEquilibrium> = Vec::new();
    let mut notes = Vec::new();
    for id in ChartId::ALL {
        match chart_equilibria(id, &p) {
            Ok(v) => equilibria.extend(v),
            Err(e) => notes.push(format!("{}: {e}", id.name())),
        }
    }
    #[derive(Serialize)]
    struct Res {
        checks: Vec<CheckLine>,
        transits: Vec<TransitReport>,
        chart_equilibria: Vec<ChartEquilibrium>,
        notes: Vec<String>,
    }
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.passed)
        .map(|l| l.name.clone())
        .collect();
    let res = Res {
        checks: lines,
        transits,
        chart_equilibria: equilibria,
        notes,
    };
    let out = Output::create(cfg.out_dir())?;
    out.json(
        "blowup.json",
        &summary("blowup-verify", Some(p), cfg, started, &res),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "blow-up checks failed: {}",
            failed.join(", ")
        )))
    }
}

pub fn selfcheck_cmd(cfg: &RunConfig, fault: Fault) -> Result<()> {
    let started = Instant::now();
    let report = selfcheck(fault, cfg.seed);
    for i in &report.items {
        println!(
            "{} {}: {}",
            if i.passed { "PASS" } else { "FAIL" },
            i.name,
            i.detail
        );
    }
    let out = Output::create(cfg.out_dir())?;
    out.json(
        "selfcheck.json",
        &summary("selfcheck", None, cfg, started, &report),
    )?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Selfcheck(
            report
                .items
                .iter()
                .filter(|i| !i.passed)
                .map(|i| i.name.to_string())
                .collect(),
        ))
    }
}

pub fn figure(name: &str, cfg: &RunConfig) -> Result<()> {
    match name {
        "fig4" => fig4(cfg),
        "fig5" => fig5(cfg),
        "fig6" => fig6(cfg),
        "fig7" => fig7(cfg),
        _ => Err(CliError::Config(format!(
            "unknown figure '{name}' (expected one of {})",
            FIGURES.join(", ")
        ))),
    }
}

fn fig4(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig4")?;
    let n = cfg.n.unwrap_or(20);
    if n == 0 {
        return Err(CliError::Config("empty grid".into()));
    }
    let mut opts = entry_options(&p, cfg.t_max.unwrap_or(1e5));
    opts = opts.with_tols(cfg.rel_tol.unwrap_or(1e-10), cfg.abs_tol.unwrap_or(1e-12));
    let score = score_side_predictions(&p, &side_grid(n), &opts).map_err(|e| match e {
        gspt_core::IntegrationError::Model(m) => CliError::Config(m.to_string()),
        e => CliError::numeric(e),
    })?;
    let rows: Vec<Vec<String>> = score
        .records
        .iter()
        .map(|r| {
            vec![
                num(r.u0),
                num(r.v0),
                r.predicted.as_str().to_string(),
                r.simulated.map_or("none", |s| s.as_str()).to_string(),
                r.agree.to_string(),
            ]
        })
        .collect();
    let out = Output::create(cfg.out_dir())?;
    out.csv("fig4.csv", &FIG4_HEADER, &rows)?;
    println!(
        "fig4: agreement {:.4} on {n}x{n} grid at eps = {}",
        score.agreement, p.eps
    );
    #[derive(Serialize)]
    struct Res {
        n: usize,
        agreement: f64,
        unresolved: usize,
    }
    let res = Res {
        n,
        agreement: score.agreement,
        unresolved: score
            .records
            .iter()
            .filter(|r| r.simulated.is_none())
            .count(),
    };
    out.json(
        "fig4.json",
        &summary("figure fig4", Some(p), cfg, started, &res),
    )?;
    Ok(())
}

fn fig5(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let base = cfg.params("fig5a")?;
    let ds: Vec<f64> = match cfg.d {
        Some(d) => vec![d],
        None => vec![0.1, 0.3],
    };
    let hcfg = HomoclinicConfig {
        t_max: cfg.t_max.unwrap_or(HomoclinicConfig::default().t_max),
        ..HomoclinicConfig::default()
    };
    let eps_list = [0.025, 0.01, 0.005];
    let out = Output::create(cfg.out_dir())?;
    let mut dist_rows = Vec::new();
    #[derive(Serialize)]
    struct PerD {
        d: f64,
        orbits: Vec<HomoclinicDiagnostics>,
        returned: usize,
        heteroclinic: Vec<gspt_core::regimes::HeteroclinicRecord>,
    }
    let mut per_d = Vec::new();
    let mut failures = Vec::new();
    for d in ds {
        let p = base.with_d(d);
        let tag = format!("d{d}");
        let launches = default_homoclinic_launches(&p, cfg.n.unwrap_or(12));
        let diags = homoclinic_experiment(&p, &launches, &hcfg)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let opts = homoclinic_options(&p, &hcfg);
        let recs = write_trajectories(&out, &format!("fig5_{tag}_orbit"), &p, &launches, &opts)?;
        failures.extend(recs.iter().filter_map(|r| r.error.clone()));
        let cap = 1.0 - 1.0 / p.alpha;
        let gamma_rows: Vec<Vec<String>> = (1..=400)
            .map(|i| {
                let u = cap * i as f64 / 400.0;
                vec![num(u), num(u), num(separatrix_gamma(&p, u))]
            })
            .collect();
        out.csv(&format!("fig5_{tag}_gamma.csv"), &CURVE_HEADER, &gamma_rows)?;
        let het = heteroclinic_cycle_distance(&p, &eps_list, &hcfg).map_err(CliError::numeric)?;
        for h in &het {
            dist_rows.push(vec![num(d), num(h.eps), num(h.distance)]);
            println!(
                "fig5: d = {d}, eps = {}: distance to gamma {:.6e}",
                h.eps, h.distance
            );
        }
        let returned = diags.iter().filter(|r| r.returned).count();
        println!("fig5: d = {d}: {returned}/{} orbits returned", diags.len());
        per_d.push(PerD {
            d,
            orbits: diags,
            returned,
            heteroclinic: het,
        });
    }
    out.csv("fig5_distance.csv", &DISTANCE_HEADER, &dist_rows)?;
    out.json(
        "fig5.json",
        &summary("figure fig5", Some(base), cfg, started, &per_d),
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(failures.join("; ")))
    }
}

fn fig6(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let base = cfg.params("fig6")?;
    let eps_list: Vec<f64> = match cfg.eps {
        Some(e) => vec![e],
        None => vec![0.005, 0.0025, 0.001, 0.0005],
    };
    let out = Output::create(cfg.out_dir())?;
    let mut sums = Vec::new();
    for e in eps_list {
        let p = base.with_eps(e);
        let (lo, hi) = window_range(&p);
        let s = sweep_to(
            &out,
            &format!("fig6_eps{e}.csv"),
            &p,
            lo,
            hi,
            cfg.n.unwrap_or(201),
        )?;
        println!("fig6: eps = {e}: window [{:?}, {:?}]", s.lower, s.upper);
        sums.push(s);
    }
    out.json(
        "fig6.json",
        &summary("figure fig6", Some(base), cfg, started, &sums),
    )?;
    Ok(())
}

fn fig7(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = cfg.params("fig7")?;
    let ics = match cfg.initial_conditions() {
        v if v.is_empty() => standard_grid(),
        v => v,
    };
    let horizon = cfg.t_max.unwrap_or(default_horizon(&p));
    let out = Output::create(cfg.out_dir())?;
    let opts = cfg.integration(horizon)?;
    let recs = write_trajectories(&out, "fig7_orbit", &p, &ics, &opts)?;
    let curves = write_nullclines(&out, "fig7_nullcline", &p, cfg.n.unwrap_or(400))?;
    let asym = verify_asymptotics(&p, &ics, horizon, DEFAULT_TOL_ATTRACT)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let canard: Vec<_> = ics
        .iter()
        .map(|s| canard_metrics(&p, s, horizon).ok())
        .collect();
    let best = canard
        .iter()
        .flatten()
        .map(|m| m.slow_excursion)
        .fold(0.0f64, f64::max);
    let ok = asym.outcomes.iter().filter(|o| o.success).count();
    println!("fig7: {ok}/{} orbits within {DEFAULT_TOL_ATTRACT:e} of the attractor; max slow excursion {best:.4}", ics.len());
    #[derive(Serialize)]
    struct Res {
        runs: Vec<RunRecord>,
        nullclines: Vec<CurveRecord>,
        asymptotics: gspt_core::regimes::AsymptoticsReport,
        canard: Vec<Option<gspt_core::regimes::CanardMetrics>>,
    }
    let res = Res {
        runs: recs,
        nullclines: curves,
        asymptotics: asym,
        canard,
    };
    out.json(
        "fig7.json",
        &summary("figure fig7", Some(p), cfg, started, &res),
    )?;
    failed_runs(&res.runs)
}
