//! CSV tables and JSON summaries.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gspt_core::integrator::Trajectory;
use gspt_core::Params;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "u", "v", "chart", "event"];
pub const FIG4_HEADER: [&str; 5] = ["u0", "v0", "predicted_side", "simulated_side", "agree"];
pub const BRANCH_HEADER: [&str; 4] = ["beta", "u2", "v2", "exists"];
pub const CURVE_HEADER: [&str; 3] = ["param", "u", "v"];
pub const DISTANCE_HEADER: [&str; 3] = ["d", "eps", "distance"];

/// Event column value of the marker row closing a failed run.
pub const FAILURE_MARKER: &str = "FAILED";

/// 17 significant digits, so values round-trip through text.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Output { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(name);
        write_csv(&path, header, rows)?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(CliError::numeric)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        k => CliError::Numeric(format!("{k:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One row per stored sample; event hits carry their label.
pub fn trajectory_rows(tr: &Trajectory) -> Vec<Vec<String>> {
    (0..tr.len())
        .map(|i| {
            let s = tr.states[i];
            let ev = tr.sample_events[i]
                .map(|k| tr.events[k].label.clone())
                .unwrap_or_default();
            vec![
                num(tr.times[i]),
                num(s.u),
                num(s.v),
                tr.charts[i].as_str().to_string(),
                ev,
            ]
        })
        .collect()
}

pub fn failure_row(tr: &Trajectory) -> Vec<String> {
    let (t, s, chart) = if tr.is_empty() {
        (f64::NAN, gspt_core::State::new(f64::NAN, f64::NAN), "")
    } else {
        (
            tr.last_time(),
            tr.last_state(),
            tr.charts[tr.len() - 1].as_str(),
        )
    };
    vec![
        num(t),
        num(s.u),
        num(s.v),
        chart.to_string(),
        FAILURE_MARKER.to_string(),
    ]
}

#[derive(Debug, Serialize)]
pub struct Meta<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub params: Option<Params>,
    pub config: &'a RunConfig,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a, T: Serialize> {
    pub meta: Meta<'a>,
    pub result: T,
}

pub fn summary<'a, T: Serialize>(
    command: &'a str,
    params: Option<Params>,
    config: &'a RunConfig,
    started: Instant,
    result: T,
) -> Summary<'a, T> {
    Summary {
        meta: Meta {
            tool: "gspt",
            version: env!("CARGO_PKG_VERSION"),
            command,
            params,
            config,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        result,
    }
}
