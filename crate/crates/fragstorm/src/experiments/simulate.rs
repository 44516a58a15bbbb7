use fragstorm_core::asymptotics::AsymptoticProfile;
use fragstorm_core::fragsim::{simulate, FragmentPopulation, SimulationSpec};
use fragstorm_core::rng::ReplicaRng;
use fragstorm_core::stats::{median, ols_slope, quantile};

use super::{create, flag, partition_results, profile, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{ConfigError, Result};
use crate::pool::Pool;
use crate::table::{write_pairs, ResultTable};

/// Extra floor added when the record escapes the valid window.
const FLOOR_STEP: f64 = 2.0;
const FLOOR_RETRIES: usize = 3;

pub(super) fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    cfg.require_simulable()?;
    if cfg.grid.t.is_empty() {
        summary(cfg, pool)
    } else {
        compare_m_vs_g(cfg, pool)
    }
}

fn spec(cfg: &ExperimentConfig, t_end: f64, floor_h: f64) -> SimulationSpec {
    let mut s = SimulationSpec::new(cfg.alpha, t_end, floor_h).with_jump_floor(cfg.jump_floor);
    s.max_events = cfg.max_events;
    s
}

/// Runs to `t` with a floor above `g(t)`, raising it until `m_t` is exact.
///
/// Fragments draw from genealogical streams, so raising the floor replays
/// the same history with more detail.
fn run_to(
    cfg: &ExperimentConfig,
    prof: &AsymptoticProfile,
    t: f64,
    rng: &ReplicaRng,
) -> fragstorm_core::Result<FragmentPopulation> {
    let mut floor = match cfg.floor_h {
        Some(h) => h,
        None => prof.g(t)?.max(0.0) + cfg.floor_margin,
    };
    let mut pop = simulate(&cfg.measure, &spec(cfg, t, floor), &mut rng.clone())?;
    if cfg.floor_h.is_none() {
        for _ in 0..FLOOR_RETRIES {
            if pop.is_valid_at(t) {
                break;
            }
            floor += FLOOR_STEP;
            pop = simulate(&cfg.measure, &spec(cfg, t, floor), &mut rng.clone())?;
        }
    }
    Ok(pop)
}

fn summary(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    let t_end = cfg
        .t_end
        .ok_or_else(|| ConfigError::field("t_end", "required by simulate without grid.t"))?;
    let prof = profile(cfg)?;
    let results = pool.replicas(cfg.seed, cfg.replicas, |r, rng| {
        run_to(cfg, &prof, t_end, rng).map(|pop| {
            let lineage = pop.truncation.map_or(0.0, |b| b.lineage);
            let row = vec![
                r as f64,
                pop.event_count as f64,
                pop.m_at(t_end),
                flag(pop.is_valid_at(t_end)),
                pop.live.len() as f64,
                pop.pruned_mass,
                (pop.total_mass() - 1.0).abs(),
                lineage,
            ];
            (row, (r == 0).then(|| pop.record().to_vec()))
        })
    });
    let (rows, failed) = partition_results(results)?;
    let mut table = ResultTable::new([
        "replica",
        "events",
        "m_end",
        "valid",
        "live",
        "pruned_mass",
        "mass_residual",
        "lineage_bias",
    ]);
    let mut out_dev = 0;
    for (row, record) in rows {
        if row[6] > 1e-9 {
            out_dev += 1;
        }
        if let (Some(path), Some(rec)) = (&cfg.dumps.trajectory, record) {
            write_pairs(create(path)?, ["t", "m_t"], &rec)?;
        }
        table.push(row);
    }
    table.set_meta_real("t_end", t_end);
    let mut out = Outcome::new(table);
    out.deviations = out_dev;
    out.failures = failed;
    Ok(out)
}

/// Per grid time: spread of `m_t - g(t)` over replicas and its trend.
pub fn compare_m_vs_g(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    cfg.require_simulable()?;
    if cfg.measure.is_lattice() {
        return Err(ConfigError::field(
            "measure.kind",
            "lattice dislocation measure: m_t - g(t) does not converge, compare_m_vs_g is undefined",
        )
        .into());
    }
    let ts = &cfg.grid.t;
    if ts.windows(2).any(|w| w[1] <= w[0]) || ts[0] <= 0.0 {
        return Err(ConfigError::field("grid.t", "must be positive and increasing").into());
    }
    let prof = profile(cfg)?;
    let gs = ts.iter().map(|&t| prof.g(t)).collect::<fragstorm_core::Result<Vec<_>>>()?;

    // Each replica: (m_t, valid, lineage bias) at every grid time, or an error.
    let results = pool.replicas(cfg.seed, cfg.replicas, |_, rng| {
        ts.iter()
            .map(|&t| {
                run_to(cfg, &prof, t, rng)
                    .map(|pop| (pop.m_at(t), pop.is_valid_at(t), pop.truncation.map_or(0.0, |b| b.lineage)))
            })
            .collect::<fragstorm_core::Result<Vec<_>>>()
    });
    let (runs, failed) = partition_results(results)?;

    let mut table = ResultTable::new([
        "t",
        "g",
        "m_median",
        "diff_median",
        "diff_q25",
        "diff_q75",
        "abs_median",
        "valid_fraction",
        "lineage_bias",
        "replicas_ok",
        "failures",
    ]);
    let mut m_medians = Vec::new();
    let mut abs_medians = Vec::new();
    for (i, (&t, &g)) in ts.iter().zip(&gs).enumerate() {
        let ms: Vec<f64> = runs.iter().map(|r| r[i].0).collect();
        let diffs: Vec<f64> = ms.iter().map(|m| m - g).collect();
        let valid = runs.iter().filter(|r| r[i].1).count();
        let lineage: Vec<f64> = runs.iter().map(|r| r[i].2).collect();
        let (mm, dm) = if runs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (median(&ms), median(&diffs))
        };
        m_medians.push(mm);
        abs_medians.push(dm.abs());
        table.push(vec![
            t,
            g,
            mm,
            dm,
            if runs.is_empty() { f64::NAN } else { quantile(&diffs, 0.25) },
            if runs.is_empty() { f64::NAN } else { quantile(&diffs, 0.75) },
            dm.abs(),
            valid as f64 / runs.len().max(1) as f64,
            if runs.is_empty() { f64::NAN } else { median(&lineage) },
            runs.len() as f64,
            failed as f64,
        ]);
    }

    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let loglog_t: Vec<f64> = log_t.iter().map(|l| l.ln()).collect();
    let nonincreasing = abs_medians.windows(2).all(|w| w[1] <= w[0]);
    if ts.len() >= 2 {
        table.set_meta_real("trend.slope_abs_median_vs_loglog_t", ols_slope(&loglog_t, &abs_medians));
        table.set_meta_real("trend.slope_m_vs_log_t", ols_slope(&log_t, &m_medians));
    }
    table.set_meta("trend.abs_median_nonincreasing", nonincreasing.to_string());

    if let Some(path) = &cfg.dumps.trajectory {
        let t = ts[ts.len() - 1];
        let pop = run_to(cfg, &prof, t, &fragstorm_core::rng::replica_rng(cfg.seed, 0))?;
        write_pairs(create(path)?, ["t", "m_t"], pop.record())?;
    }

    let mut out = Outcome::new(table);
    out.deviations = usize::from(!nonincreasing);
    out.failures = failed;
    Ok(out)
}
