use fragstorm_core::partitions::MeasureKind;
use fragstorm_core::rng::replica_rng;
use fragstorm_core::spine::{jp_bounds, jp_bounds_truncated, level_at, simulate_path, solve_qx, solve_qx_truncated, theorem_f};

use super::{create, flag, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{ConfigError, Result};
use crate::pool::{stream, Pool};
use crate::table::{write_pairs, ResultTable};

/// Monte Carlo estimates below this are too noisy to test against the bounds.
pub const VISIBLE: f64 = 1e-4;

/// `P(ξ_t ≤ w)` by plain Monte Carlo next to the Jain–Pruitt bounds, on paired `(t, w)` grids.
pub(super) fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    let points = cfg.paired("grid.w")?;
    let a = cfg.jump_floor;
    let truncated = !cfg.measure.is_finite();
    if truncated && a <= 0.0 {
        return Err(ConfigError::field("sim.jump_floor", "the spine of an infinite measure needs a jump floor").into());
    }
    let mut table = ResultTable::new([
        "t",
        "w",
        "x",
        "q_x",
        "rate",
        "mc",
        "se",
        "lower",
        "upper",
        "checked",
        "in_sandwich",
        "theorem_f",
    ]);
    let mut deviations = 0;
    for (i, &(t, w)) in points.iter().enumerate() {
        let x = w / t;
        let (point, (lower, upper)) = if truncated {
            (solve_qx_truncated(&cfg.measure, x, a)?, jp_bounds_truncated(&cfg.measure, t, w, cfg.jp_c, a)?)
        } else {
            (solve_qx(&cfg.measure, x)?, jp_bounds(&cfg.measure, t, w, cfg.jp_c)?)
        };
        let est = pool.estimate(stream(cfg.seed, i as u64), cfg.replicas, |rng| {
            Ok(flag(level_at(&cfg.measure, a, t, w, rng)? <= w))
        })?;
        let checked = est.mean >= VISIBLE;
        let inside = est.mean >= 0.5 * lower && est.mean <= 1.05 * upper;
        if checked && !inside {
            deviations += 1;
        }
        let f = match cfg.measure.kind() {
            MeasureKind::CrumbleBinary { theta, ell } => theorem_f(*theta, ell, w, t)?,
            _ => f64::NAN,
        };
        table.push(vec![
            t,
            w,
            x,
            point.q_x,
            point.rate,
            est.mean,
            est.std_error,
            lower,
            upper,
            flag(checked),
            flag(inside),
            f,
        ]);
    }
    if let Some(path) = &cfg.dumps.path {
        let horizon = points.iter().map(|p| p.0).fold(0.0, f64::max);
        let p = simulate_path(
            &cfg.measure,
            a,
            horizon,
            &mut replica_rng(stream(cfg.seed, points.len() as u64), 0),
        )?;
        write_pairs(create(path)?, ["time", "level"], &p.breakpoints())?;
    }
    table.set_meta_real("jp_c", cfg.jp_c);
    table.set_meta("bounds", if truncated { "truncated spine" } else { "exact spine" });
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}
