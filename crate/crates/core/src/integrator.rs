//! Adaptive Dormand-Prince 5(4) integration with event location.
//!
//! Planar runs may switch between the linear chart `(u, v)` and the log chart
//! `(u, w = ln v)`; reported states are always `(u, v)`. Dense output between
//! accepted steps is the cubic Hermite interpolant in the chart the step was
//! taken in.

use serde::Serialize;

use crate::error::IntegrationError;
use crate::model::{Params, PlanarField, State};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.04;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_V_SWITCH_LOW: f64 = 1e-6;
pub const DEFAULT_V_SWITCH_HIGH: f64 = 1e-5;

type Rhs<'a, const N: usize> = dyn Fn(&[f64; N]) -> Result<[f64; N], IntegrationError> + 'a;

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

struct StepResult<const N: usize> {
    y: [f64; N],
    f: [f64; N],
    err: [f64; N],
}

fn dopri_step<const N: usize>(
    f: &Rhs<'_, N>,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<StepResult<N>, IntegrationError> {
    let k2 = f(&lin(y, h, &[(A21, k1)]))?;
    let k3 = f(&lin(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(&lin(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(&lin(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(&lin(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y_new = lin(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f(&y_new)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(StepResult {
        y: y_new,
        f: k7,
        err,
    })
}

/// Max-norm of the error scaled by `abs_tol + rel_tol*max(|y0_i|, |y1_i|)`.
fn error_norm<const N: usize>(
    err: &[f64; N],
    y0: &[f64; N],
    y1: &[f64; N],
    rtol: f64,
    atol: f64,
) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..N {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        m = m.max((err[i] / sc).abs());
    }
    if m.is_nan() {
        f64::INFINITY
    } else {
        m
    }
}

fn initial_step<const N: usize>(
    f: &Rhs<'_, N>,
    y: &[f64; N],
    f0: &[f64; N],
    rtol: f64,
    atol: f64,
    span: f64,
) -> Result<f64, IntegrationError> {
    let norm = |v: &[f64; N], w: &[f64; N]| {
        let mut s: f64 = 0.0;
        for i in 0..N {
            s = s.max((v[i] / (atol + rtol * w[i].abs())).abs());
        }
        s
    };
    let d0 = norm(y, y);
    let d1 = norm(f0, y);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = lin(y, h0, &[(1.0, f0)]);
    let f1 = f(&y1)?;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff, y) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Cubic Hermite interpolant between two step endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub f0: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Segment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] =
                h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
        out
    }
}

/// Illinois-modified regula falsi on a bracketed sign change of `g`.
///
/// Returns the bracket end with the smaller residual, once the bracket is
/// below `t_tol` and the residual stops improving.
pub fn refine_root<G: Fn(f64) -> f64>(
    g: G,
    mut ta: f64,
    mut ga: f64,
    mut tb: f64,
    mut gb: f64,
    t_tol: f64,
) -> (f64, f64) {
    let mut side = 0i8;
    for _ in 0..200 {
        if ga == 0.0 {
            return (ta, 0.0);
        }
        if gb == 0.0 {
            return (tb, 0.0);
        }
        let width = tb - ta;
        let floor = 4.0 * f64::EPSILON * ta.abs().max(tb.abs()).max(1.0);
        if width <= floor {
            break;
        }
        let mut tc = (ta * gb - tb * ga) / (gb - ga);
        if !(tc > ta && tc < tb) {
            tc = 0.5 * (ta + tb);
        }
        let gc = g(tc);
        if (gc > 0.0) == (ga > 0.0) {
            ta = tc;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = if side >= 1 { side + 1 } else { 1 };
        } else {
            tb = tc;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = if side <= -1 { side - 1 } else { -1 };
        }
        if tb - ta < t_tol * 1e-6 {
            break;
        }
    }
    // halving in the Illinois step changes stored residuals; re-evaluate
    let (fa, fb) = (g(ta), g(tb));
    if fa.abs() <= fb.abs() {
        (ta, fa)
    } else {
        (tb, fb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Rising,
    Falling,
    Both,
}

impl Direction {
    fn triggers(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Both => rising || falling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EventKind {
    /// `a*u + b*v - level`.
    Hyperplane { a: f64, b: f64, level: f64 },
    /// `|s - center| - radius`; entry is a falling crossing.
    BallEntry { center: State, radius: f64 },
    /// Leaving the simplex `u, v >= 0, u + v <= 1`, relaxed by `tol`.
    RegionExit { tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub label: String,
    pub kind: EventKind,
    pub direction: Direction,
    pub terminal: bool,
}

impl Event {
    pub fn hyperplane(label: &str, a: f64, b: f64, level: f64, direction: Direction) -> Self {
        Event {
            label: label.to_string(),
            kind: EventKind::Hyperplane { a, b, level },
            direction,
            terminal: false,
        }
    }

    pub fn ball_entry(label: &str, center: State, radius: f64) -> Self {
        Event {
            label: label.to_string(),
            kind: EventKind::BallEntry { center, radius },
            direction: Direction::Falling,
            terminal: false,
        }
    }

    pub fn region_exit(label: &str, tol: f64) -> Self {
        Event {
            label: label.to_string(),
            kind: EventKind::RegionExit { tol },
            direction: Direction::Falling,
            terminal: false,
        }
    }

    pub fn terminal(mut self) -> Self {
        self.terminal = true;
        self
    }

    pub fn value(&self, s: &State) -> f64 {
        match self.kind {
            EventKind::Hyperplane { a, b, level } => a * s.u + b * s.v - level,
            EventKind::BallEntry { center, radius } => s.dist(&center) - radius,
            EventKind::RegionExit { tol } => (s.u + tol).min(s.v + tol).min(1.0 + tol - s.u - s.v),
        }
    }

    /// Entry/exit events whose condition already holds at the start fire at `t0`.
    fn fires_at_start(&self, s: &State) -> bool {
        match self.kind {
            EventKind::Hyperplane { .. } => false,
            EventKind::BallEntry { .. } | EventKind::RegionExit { .. } => self.value(s) < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum ChartPolicy {
    LinearOnly,
    LogOnly,
    Auto {
        v_switch_low: f64,
        v_switch_high: f64,
    },
}

impl Default for ChartPolicy {
    fn default() -> Self {
        ChartPolicy::Auto {
            v_switch_low: DEFAULT_V_SWITCH_LOW,
            v_switch_high: DEFAULT_V_SWITCH_HIGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    pub max_steps: usize,
    pub chart: ChartPolicy,
    pub events: Vec<Event>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            t_max: 100.0,
            max_steps: 2_000_000,
            chart: ChartPolicy::default(),
            events: Vec::new(),
        }
    }
}

impl IntegrationOptions {
    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_tols(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_chart(mut self, chart: ChartPolicy) -> Self {
        self.chart = chart;
        self
    }

    pub fn with_event(mut self, ev: Event) -> Self {
        self.events.push(ev);
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let tol_ok = |t: f64| t > 0.0 && t <= 1e-3;
        if !tol_ok(self.rel_tol) || !tol_ok(self.abs_tol) {
            return Err(IntegrationError::InvalidOptions(
                "tolerances must lie in (0, 1e-3]",
            ));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(IntegrationError::InvalidOptions(
                "t_max must be positive and finite",
            ));
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidOptions(
                "max_steps must be positive",
            ));
        }
        if let ChartPolicy::Auto {
            v_switch_low,
            v_switch_high,
        } = self.chart
        {
            if !(v_switch_low > 0.0 && v_switch_low < v_switch_high) {
                return Err(IntegrationError::InvalidOptions(
                    "need 0 < v_switch_low < v_switch_high",
                ));
            }
        }
        Ok(())
    }

    fn time_tol(&self) -> f64 {
        1e-10 * self.t_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    Linear,
    Log,
}

impl Chart {
    pub fn as_str(&self) -> &'static str {
        match self {
            Chart::Linear => "lin",
            Chart::Log => "log",
        }
    }

    fn to_state(self, y: &[f64; 2]) -> State {
        match self {
            Chart::Linear => State::new(y[0], y[1]),
            Chart::Log => State::new(y[0], y[1].exp()),
        }
    }

    fn ln_v(self, y: &[f64; 2]) -> f64 {
        match self {
            Chart::Linear => y[1].ln(),
            Chart::Log => y[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventHit {
    pub event: usize,
    pub label: String,
    pub t: f64,
    pub state: State,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub chart_switches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    Event,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarSegment {
    pub chart: Chart,
    pub seg: Segment<2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// `ln v` per sample; finite whenever the orbit stays off the u-axis,
    /// even after `v` itself underflows.
    pub log_v: Vec<f64>,
    /// Chart each sample was computed in.
    pub charts: Vec<Chart>,
    /// Index into `events` for samples that are event hits.
    pub sample_events: Vec<Option<usize>>,
    pub events: Vec<EventHit>,
    pub segments: Vec<PlanarSegment>,
    pub stats: StepStats,
    pub termination: Termination,
}

impl Trajectory {
    fn new() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            log_v: Vec::new(),
            charts: Vec::new(),
            sample_events: Vec::new(),
            events: Vec::new(),
            segments: Vec::new(),
            stats: StepStats::default(),
            termination: Termination::Horizon,
        }
    }

    fn push(&mut self, t: f64, s: State, lnv: f64, chart: Chart, ev: Option<usize>) {
        self.times.push(t);
        self.states.push(s);
        self.log_v.push(lnv);
        self.charts.push(chart);
        self.sample_events.push(ev);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> State {
        *self
            .states
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn last_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn first_hit(&self, label: &str) -> Option<&EventHit> {
        self.events.iter().find(|h| h.label == label)
    }

    /// Dense state at time `t` within the integrated span.
    pub fn state_at(&self, t: f64) -> Option<State> {
        if self.segments.is_empty() || t < self.times[0] || t > self.last_time() {
            return None;
        }
        let i = self
            .segments
            .partition_point(|s| s.seg.t1 < t)
            .min(self.segments.len() - 1);
        let s = &self.segments[i];
        Some(s.chart.to_state(&s.seg.eval(t)))
    }

    /// Samples `per_step` interior points of every step plus the endpoints.
    pub fn dense_samples(&self, per_step: usize) -> Vec<(f64, State)> {
        let end = self.last_time();
        let mut out = Vec::new();
        for s in &self.segments {
            let t1 = s.seg.t1.min(end);
            for j in 0..=per_step {
                let t = s.seg.t0 + (t1 - s.seg.t0) * j as f64 / (per_step + 1) as f64;
                out.push((t, s.chart.to_state(&s.seg.eval(t))));
            }
            if t1 >= end {
                break;
            }
        }
        out.push((end, self.last_state()));
        out
    }
}

/// A run that stopped on an error, with everything computed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub trajectory: Trajectory,
    pub error: Option<IntegrationError>,
}

pub fn integrate(
    field: PlanarField,
    p: &Params,
    s0: State,
    opts: &IntegrationOptions,
) -> Result<Trajectory, IntegrationError> {
    let run = integrate_partial(field, p, s0, opts)?;
    match run.error {
        Some(e) => Err(e),
        None => Ok(run.trajectory),
    }
}

fn rhs_for<'a>(
    field: PlanarField,
    p: &'a Params,
    chart: Chart,
) -> impl Fn(&[f64; 2]) -> Result<[f64; 2], IntegrationError> + 'a {
    move |y: &[f64; 2]| {
        let d = match chart {
            Chart::Linear => field.eval(p, &State::new(y[0], y[1]))?,
            Chart::Log => field.eval_log(p, y[0], y[1])?,
        };
        Ok([d.du, d.dv])
    }
}

/// Integrates and returns the partial trajectory together with any error.
///
/// Only invalid input is reported through the outer `Result`.
pub fn integrate_partial(
    field: PlanarField,
    p: &Params,
    s0: State,
    opts: &IntegrationOptions,
) -> Result<PartialRun, IntegrationError> {
    opts.validate()?;
    if !(s0.u.is_finite() && s0.v.is_finite()) {
        return Err(IntegrationError::NonFinite(0.0));
    }
    let mut chart = match opts.chart {
        ChartPolicy::LinearOnly => Chart::Linear,
        ChartPolicy::LogOnly => {
            if s0.v <= 0.0 {
                return Err(IntegrationError::InvalidOptions("log chart needs v0 > 0"));
            }
            Chart::Log
        }
        ChartPolicy::Auto { v_switch_low, .. } => {
            if s0.v > 0.0 && s0.v < v_switch_low {
                Chart::Log
            } else {
                Chart::Linear
            }
        }
    };
    let to_chart = |c: Chart, s: &State| match c {
        Chart::Linear => [s.u, s.v],
        Chart::Log => [s.u, s.v.ln()],
    };
    field.eval(p, &s0)?;

    let mut traj = Trajectory::new();
    let mut t = 0.0;
    let mut y = to_chart(chart, &s0);
    traj.push(t, s0, chart.ln_v(&y), chart, None);

    let mut g_prev: Vec<f64> = opts.events.iter().map(|e| e.value(&s0)).collect();
    for (i, ev) in opts.events.iter().enumerate() {
        if ev.fires_at_start(&s0) {
            traj.events.push(EventHit {
                event: i,
                label: ev.label.clone(),
                t,
                state: s0,
                terminal: ev.terminal,
            });
            traj.sample_events[0] = Some(traj.events.len() - 1);
            if ev.terminal {
                traj.termination = Termination::Event;
                return Ok(PartialRun {
                    trajectory: traj,
                    error: None,
                });
            }
        }
    }

    let fail = |mut traj: Trajectory, e: IntegrationError| {
        traj.termination = Termination::Failed;
        Ok(PartialRun {
            trajectory: traj,
            error: Some(e),
        })
    };

    let mut f_cur = {
        let rhs = rhs_for(field, p, chart);
        rhs(&y)?
    };
    traj.stats.evaluations += 1;
    let mut h = {
        let rhs = rhs_for(field, p, chart);
        initial_step(&rhs, &y, &f_cur, opts.rel_tol, opts.abs_tol, opts.t_max)?
    };
    traj.stats.evaluations += 1;
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let t_tol = opts.time_tol();

    loop {
        if t >= opts.t_max {
            break;
        }
        if traj.stats.accepted + traj.stats.rejected >= opts.max_steps {
            return fail(traj, IntegrationError::MaxSteps(opts.max_steps));
        }
        let remaining = opts.t_max - t;
        if h >= remaining || remaining - h < 1e-12 * opts.t_max {
            h = remaining;
        }
        let floor = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < floor {
            let s = chart.to_state(&y);
            return fail(
                traj,
                IntegrationError::StepUnderflow {
                    t,
                    h,
                    u: s.u,
                    v: s.v,
                },
            );
        }
        let rhs = rhs_for(field, p, chart);
        let step = dopri_step(&rhs, &y, &f_cur, h);
        traj.stats.evaluations += 6;
        let step = match step {
            Ok(st) => st,
            Err(IntegrationError::Model(_)) => {
                // a stage left the field's domain; retry smaller
                traj.stats.rejected += 1;
                h *= FAC_MIN;
                last_rejected = true;
                continue;
            }
            Err(e) => return fail(traj, e),
        };
        let err = error_norm(&step.err, &y, &step.y, opts.rel_tol, opts.abs_tol);
        let finite = step.y.iter().chain(&step.f).all(|x| x.is_finite());
        if !finite || err > 1.0 {
            traj.stats.rejected += 1;
            let fac = if finite {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h *= fac.min(1.0);
            last_rejected = true;
            if !finite && h < floor {
                return fail(traj, IntegrationError::NonFinite(t));
            }
            continue;
        }

        // accepted
        traj.stats.accepted += 1;
        let t_new = if h == remaining { opts.t_max } else { t + h };
        let seg = Segment {
            t0: t,
            t1: t_new,
            y0: y,
            y1: step.y,
            f0: f_cur,
            f1: step.f,
        };
        traj.segments.push(PlanarSegment { chart, seg });
        let s_new = chart.to_state(&step.y);

        // events on this step
        let mut hits: Vec<(f64, usize, State)> = Vec::new();
        let g_new: Vec<f64> = opts.events.iter().map(|e| e.value(&s_new)).collect();
        for (i, ev) in opts.events.iter().enumerate() {
            if ev.direction.triggers(g_prev[i], g_new[i]) {
                let g = |tt: f64| ev.value(&chart.to_state(&seg.eval(tt)));
                let (th, _) = refine_root(g, t, g_prev[i], t_new, g_new[i], t_tol);
                hits.push((th, i, chart.to_state(&seg.eval(th))));
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut end_event: Option<usize> = None;
        let mut stopped = false;
        for (th, i, sh) in hits {
            let ev = &opts.events[i];
            traj.events.push(EventHit {
                event: i,
                label: ev.label.clone(),
                t: th,
                state: sh,
                terminal: ev.terminal,
            });
            let idx = traj.events.len() - 1;
            let lnv = match chart {
                Chart::Log => seg.eval(th)[1],
                Chart::Linear => sh.v.ln(),
            };
            if th >= t_new {
                end_event = Some(idx);
            } else if th > traj.last_time() {
                traj.push(th, sh, lnv, chart, Some(idx));
            } else {
                let last = traj.sample_events.len() - 1;
                traj.sample_events[last] = Some(idx);
            }
            if ev.terminal {
                stopped = true;
                break;
            }
        }
        if !stopped || end_event.is_some() {
            traj.push(t_new, s_new, chart.ln_v(&step.y), chart, end_event);
        }
        if stopped {
            traj.termination = Termination::Event;
            return Ok(PartialRun {
                trajectory: traj,
                error: None,
            });
        }
        g_prev = g_new;

        // step size update (PI control)
        let mut fac = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_old.powf(PI_BETA);
        fac = fac.clamp(FAC_MIN, FAC_MAX);
        if last_rejected {
            fac = fac.min(1.0);
        }
        err_old = err.max(1e-4);
        last_rejected = false;
        t = t_new;
        y = step.y;
        f_cur = step.f;
        h *= fac;

        // chart hysteresis
        if let ChartPolicy::Auto {
            v_switch_low,
            v_switch_high,
        } = opts.chart
        {
            let next = match chart {
                Chart::Linear if y[1] > 0.0 && y[1] < v_switch_low => Some(Chart::Log),
                Chart::Log if y[1].exp() > v_switch_high => Some(Chart::Linear),
                _ => None,
            };
            if let Some(c) = next {
                let s = chart.to_state(&y);
                chart = c;
                y = to_chart(chart, &s);
                let rhs = rhs_for(field, p, chart);
                f_cur = match rhs(&y) {
                    Ok(f) => f,
                    Err(e) => return fail(traj, e),
                };
                traj.stats.evaluations += 1;
                traj.stats.chart_switches += 1;
            }
        }
        if !y.iter().all(|x| x.is_finite()) {
            return fail(traj, IntegrationError::NonFinite(t));
        }
    }
    traj.termination = Termination::Horizon;
    Ok(PartialRun {
        trajectory: traj,
        error: None,
    })
}

/// Event on a generic `N`-dimensional system.
pub struct SystemEvent<'a, const N: usize> {
    pub g: Box<dyn Fn(&[f64; N]) -> f64 + Send + Sync + 'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl<'a, const N: usize> SystemEvent<'a, N> {
    pub fn new<G>(g: G, direction: Direction, terminal: bool) -> Self
    where
        G: Fn(&[f64; N]) -> f64 + Send + Sync + 'a,
    {
        SystemEvent {
            g: Box::new(g),
            direction,
            terminal,
        }
    }

    /// Crossing of coordinate `i` through `level`.
    pub fn coordinate(i: usize, level: f64, direction: Direction, terminal: bool) -> Self {
        Self::new(move |y: &[f64; N]| y[i] - level, direction, terminal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemHit<const N: usize> {
    pub event: usize,
    pub t: f64,
    pub y: [f64; N],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSolution<const N: usize> {
    pub times: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub hits: Vec<SystemHit<N>>,
    pub stopped_by: Option<usize>,
    pub stats: StepStats,
}

impl<const N: usize> SystemSolution<N> {
    pub fn last(&self) -> [f64; N] {
        *self.ys.last().expect("solution has the initial sample")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("solution has the initial sample")
    }
}

/// Integrates `y' = f(y)` on `[0, t_max]` with the same stepper and event
/// logic as the planar driver, without chart switching.
pub fn integrate_system<const N: usize, F>(
    f: F,
    y0: [f64; N],
    t_max: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_steps: usize,
    events: &[SystemEvent<'_, N>],
) -> Result<SystemSolution<N>, IntegrationError>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(IntegrationError::InvalidOptions(
            "t_max must be positive and finite",
        ));
    }
    if !(rel_tol > 0.0 && abs_tol > 0.0) {
        return Err(IntegrationError::InvalidOptions(
            "tolerances must be positive",
        ));
    }
    let rhs = |y: &[f64; N]| -> Result<[f64; N], IntegrationError> { Ok(f(y)) };
    let mut sol = SystemSolution {
        times: vec![0.0],
        ys: vec![y0],
        hits: Vec::new(),
        stopped_by: None,
        stats: StepStats::default(),
    };
    let mut t = 0.0;
    let mut y = y0;
    let mut f_cur = rhs(&y)?;
    let mut h = initial_step(&rhs, &y, &f_cur, rel_tol, abs_tol, t_max)?;
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(&y)).collect();
    let t_tol = 1e-10 * t_max;
    while t < t_max {
        if sol.stats.accepted + sol.stats.rejected >= max_steps {
            return Err(IntegrationError::MaxSteps(max_steps));
        }
        let remaining = t_max - t;
        if h >= remaining {
            h = remaining;
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow {
                t,
                h,
                u: y[0],
                v: if N > 1 { y[1] } else { 0.0 },
            });
        }
        let step = dopri_step(&rhs, &y, &f_cur, h)?;
        sol.stats.evaluations += 6;
        let err = error_norm(&step.err, &y, &step.y, rel_tol, abs_tol);
        let finite = step.y.iter().chain(&step.f).all(|x| x.is_finite());
        if !finite || err > 1.0 {
            sol.stats.rejected += 1;
            let fac = if finite {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h *= fac.min(1.0);
            last_rejected = true;
            continue;
        }
        sol.stats.accepted += 1;
        let t_new = if h == remaining { t_max } else { t + h };
        let seg = Segment {
            t0: t,
            t1: t_new,
            y0: y,
            y1: step.y,
            f0: f_cur,
            f1: step.f,
        };
        let g_new: Vec<f64> = events.iter().map(|e| (e.g)(&step.y)).collect();
        let mut hits: Vec<SystemHit<N>> = Vec::new();
        for (i, ev) in events.iter().enumerate() {
            if ev.direction.triggers(g_prev[i], g_new[i]) {
                let g = |tt: f64| (ev.g)(&seg.eval(tt));
                let (th, _) = refine_root(g, t, g_prev[i], t_new, g_new[i], t_tol);
                hits.push(SystemHit {
                    event: i,
                    t: th,
                    y: seg.eval(th),
                });
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t));
        for hit in hits {
            sol.hits.push(hit);
            if events[hit.event].terminal {
                sol.times.push(hit.t);
                sol.ys.push(hit.y);
                sol.stopped_by = Some(hit.event);
                return Ok(sol);
            }
        }
        g_prev = g_new;
        let mut fac = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_old.powf(PI_BETA);
        fac = fac.clamp(FAC_MIN, FAC_MAX);
        if last_rejected {
            fac = fac.min(1.0);
        }
        err_old = err.max(1e-4);
        last_rejected = false;
        t = t_new;
        y = step.y;
        f_cur = step.f;
        h *= fac;
        sol.times.push(t);
        sol.ys.push(y);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gamma_invariant;
    use crate::model::reduced_slow_flow;

    fn tight() -> IntegrationOptions {
        IntegrationOptions::default().with_tols(1e-10, 1e-12)
    }

    #[test]
    fn reduced_flow_matches_logistic() {
        let p = Params::preset("fig7").unwrap();
        let opts = tight().with_t_max(1.0).with_chart(ChartPolicy::LinearOnly);
        let tr = integrate(PlanarField::Slow, &p, State::new(0.1, 0.0), &opts).unwrap();
        let exact = reduced_slow_flow(&p, 0.1, 1.0);
        assert!((tr.last_state().u - exact).abs() < 1e-8);
        assert!((exact - 0.56663).abs() < 1e-5);
        assert_eq!(tr.last_time(), 1.0);
    }

    #[test]
    fn fast_flow_conserves_gamma() {
        let p = Params::preset("fig4").unwrap();
        let s0 = State::new(0.3, 0.3);
        let g0 = gamma_invariant(&p, &s0).unwrap();
        // long enough for v to drop into the log chart
        let opts = tight().with_t_max(700.0);
        let tr = integrate(PlanarField::Fast, &p, s0, &opts).unwrap();
        let drift = tr
            .states
            .iter()
            .map(|s| (gamma_invariant(&p, s).unwrap() - g0).abs() / g0)
            .fold(0.0, f64::max);
        assert!(drift < 1e-7, "drift {drift:e}");
        assert!(tr.stats.chart_switches >= 1);
    }

    #[test]
    fn self_convergence_is_monotone() {
        let p = Params::preset("fig7").unwrap();
        let s0 = State::new(0.95, 0.02);
        let reference = integrate(
            PlanarField::Full,
            &p,
            s0,
            &IntegrationOptions::default()
                .with_tols(1e-12, 1e-14)
                .with_t_max(300.0),
        )
        .unwrap()
        .last_state();
        let err = |rtol: f64| {
            let o = IntegrationOptions::default()
                .with_tols(rtol, rtol * 1e-2)
                .with_t_max(300.0);
            integrate(PlanarField::Full, &p, s0, &o)
                .unwrap()
                .last_state()
                .dist(&reference)
        };
        let e1 = err(1e-6);
        let e2 = err(5e-7);
        assert!(e2 < e1, "{e2:e} vs {e1:e}");
    }

    #[test]
    fn hyperplane_event_refined() {
        let p = Params::preset("fig4").unwrap();
        let level = p.eps * p.eps;
        let opts = IntegrationOptions::default()
            .with_t_max(5000.0)
            .with_event(Event::hyperplane("entry", 0.0, 1.0, level, Direction::Falling).terminal());
        let tr = integrate(PlanarField::Full, &p, State::new(0.3, 0.3), &opts).unwrap();
        let hit = tr.first_hit("entry").unwrap();
        assert!(
            (hit.state.v - level).abs() < 1e-14,
            "{:e}",
            hit.state.v - level
        );
        assert_eq!(tr.termination, Termination::Event);
        assert_eq!(tr.last_time(), hit.t);
    }

    #[test]
    fn region_exit_fires_immediately() {
        let p = Params::preset("fig7").unwrap();
        let opts =
            IntegrationOptions::default().with_event(Event::region_exit("exit", 1e-8).terminal());
        let tr = integrate(PlanarField::Full, &p, State::new(0.6, 0.6), &opts).unwrap();
        assert_eq!(tr.events.len(), 1);
        assert_eq!(tr.events[0].t, 0.0);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn ball_entry_near_origin() {
        let p = Params::preset("fig5a").unwrap();
        let opts = IntegrationOptions::default()
            .with_t_max(2000.0)
            .with_event(Event::ball_entry("home", State::ORIGIN, 0.05).terminal());
        let tr = integrate(PlanarField::Full, &p, State::new(0.5, p.eps * p.eps), &opts).unwrap();
        let hit = tr.first_hit("home").unwrap();
        assert!((hit.state.norm() - 0.05).abs() < 1e-10);
    }

    #[test]
    fn charts_agree() {
        let p = Params::preset("fig7").unwrap();
        let s0 = State::new(0.5, 0.1);
        let o = IntegrationOptions::default().with_t_max(200.0);
        let a = integrate(
            PlanarField::Full,
            &p,
            s0,
            &o.clone().with_chart(ChartPolicy::LinearOnly),
        )
        .unwrap()
        .last_state();
        let b = integrate(PlanarField::Full, &p, s0, &o)
            .unwrap()
            .last_state();
        let tol = 10.0 * (o.abs_tol + o.rel_tol * a.norm());
        assert!(a.dist(&b) < tol, "{:e}", a.dist(&b));
    }

    #[test]
    fn deterministic() {
        let p = Params::preset("fig7").unwrap();
        let o = IntegrationOptions::default().with_t_max(500.0);
        let a = integrate(PlanarField::Full, &p, State::new(0.2, 0.5), &o).unwrap();
        let b = integrate(PlanarField::Full, &p, State::new(0.2, 0.5), &o).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn options_validated() {
        let p = Params::preset("fig7").unwrap();
        let s = State::new(0.5, 0.1);
        let bad = IntegrationOptions::default().with_tols(1e-2, 1e-10);
        assert!(integrate(PlanarField::Full, &p, s, &bad).is_err());
        let bad = IntegrationOptions::default().with_chart(ChartPolicy::Auto {
            v_switch_low: 1e-4,
            v_switch_high: 1e-5,
        });
        assert!(integrate(PlanarField::Full, &p, s, &bad).is_err());
        let few = IntegrationOptions {
            max_steps: 3,
            ..IntegrationOptions::default().with_t_max(1000.0)
        };
        assert!(matches!(
            integrate(PlanarField::Full, &p, s, &few),
            Err(IntegrationError::MaxSteps(3))
        ));
        let part = integrate_partial(PlanarField::Full, &p, s, &few).unwrap();
        assert!(part.error.is_some() && part.trajectory.len() >= 2);
    }

    #[test]
    fn system_driver_harmonic() {
        let sol = integrate_system(
            |y: &[f64; 2]| [y[1], -y[0]],
            [1.0, 0.0],
            10.0,
            1e-10,
            1e-12,
            100_000,
            &[SystemEvent::coordinate(0, 0.0, Direction::Falling, false)],
        )
        .unwrap();
        let y = sol.last();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        let first = sol.hits[0].t;
        assert!((first - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}
