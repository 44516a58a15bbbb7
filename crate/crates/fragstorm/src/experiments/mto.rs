use fragstorm_core::fragsim::{count_large, spine_weight};

use super::{flag, Outcome};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pool::{stream, Pool};
use crate::table::ResultTable;

/// Combined standard errors allowed between the two sides.
pub const OVERLAP_SE: f64 = 3.0;

/// `E(t, h)` from whole-population runs and from the weighted spine, on paired `(t, h)` grids.
pub(super) fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    cfg.require_simulable()?;
    let points = cfg.paired("grid.h")?;
    let (m, alpha, a) = (&cfg.measure, cfg.alpha, cfg.jump_floor);
    let mut table = ResultTable::new(["t", "h", "population", "population_se", "spine", "spine_se", "overlap"]);
    let mut deviations = 0;
    for (i, &(t, h)) in points.iter().enumerate() {
        let i = i as u64;
        let pop = pool.estimate(stream(cfg.seed, 2 * i), cfg.replicas, |rng| {
            Ok(count_large(m, alpha, t, h, a, rng)? as f64)
        })?;
        let spine = pool.estimate(stream(cfg.seed, 2 * i + 1), cfg.replicas, |rng| {
            spine_weight(m, alpha, t, h, a, rng)
        })?;
        let overlap = pop.overlaps(&spine, OVERLAP_SE);
        if !overlap {
            deviations += 1;
        }
        table.push(vec![t, h, pop.mean, pop.std_error, spine.mean, spine.std_error, flag(overlap)]);
    }
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}
