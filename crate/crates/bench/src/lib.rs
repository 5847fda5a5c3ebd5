//! Criterion benchmarks for `gspt-core`; see `benches/`.

use gspt_core::{Params, State};

/// Parameter set and initial condition shared by the benchmarks.
pub fn reference() -> (Params, State) {
    (
        Params::preset("fig7").expect("preset exists"),
        State::new(0.95, 0.02),
    )
}
