use fragstorm_core::asymptotics::Regime;

use super::{profile, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{ConfigError, Result};
use crate::table::ResultTable;

/// Largest admissible `|f⁻¹(t) - g(t)| · log t / log log t`.
pub const BRIDGE_LIMIT: f64 = 5.0;
/// The bridge is only judged from here on.
pub const BRIDGE_FROM: f64 = 1e3;

/// `g(t)` next to the exact inverse of the matching nice function.
pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.grid.t.is_empty() {
        return Err(ConfigError::field("grid.t", "asymptotics needs at least one time").into());
    }
    let prof = profile(cfg)?;
    let inverse = |t: f64| -> fragstorm_core::Result<_> {
        match prof.regime() {
            Regime::Finite { .. } => prof.f0_nice()?.inverse(t),
            Regime::Infinite { .. } => prof.f_theta_nice()?.inverse(t),
        }
    };
    let mut table = ResultTable::new(["t", "g", "inverse_exact", "inverse_asymptotic", "bridge"]);
    let mut deviations = 0;
    for &t in &cfg.grid.t {
        let g = prof.g(t)?;
        let inv = inverse(t)?;
        let lt = t.ln();
        let bridge = (inv.exact - g).abs() * lt / lt.ln();
        if t >= BRIDGE_FROM && !(bridge <= BRIDGE_LIMIT) {
            deviations += 1;
        }
        table.push(vec![t, g, inv.exact, inv.asymptotic, bridge]);
    }
    table.set_meta(
        "law",
        match prof.regime() {
            Regime::Finite { .. } => "finite activity",
            Regime::Infinite { .. } => "infinite activity",
        },
    );
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}
