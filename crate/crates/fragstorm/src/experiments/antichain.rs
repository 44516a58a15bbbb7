use fragstorm_core::fragsim::{
    cmj_project, count_heights, extract_antichain, is_prefix_free, malthusian_root, CmjOptions, CmjTree,
};
use fragstorm_core::stats::median;

use super::{create, flag, partition_results, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{ConfigError, HarnessError, Result};
use crate::pool::Pool;
use crate::table::{fmt_real, ResultTable};

/// Per-node conservation tolerance for untruncated trees.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

const DEFAULT_H: [f64; 3] = [8.0, 10.0, 12.0];

/// Largest `|Σ e^{-ΔH} - 1|` over expanded nodes; with truncation only the excess over 1 counts.
fn conservation(tree: &CmjTree, truncated: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..tree.len() {
        if !tree.nodes()[i].expanded {
            continue;
        }
        let h = tree.nodes()[i].height;
        let s: f64 = tree.children(i).map(|c| (-(tree.nodes()[c].height - h)).exp()).sum();
        worst = worst.max(if truncated { (s - 1.0).max(0.0) } else { (s - 1.0).abs() });
    }
    worst
}

fn dump(path: &std::path::Path, tree: &CmjTree) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["word", "height", "obs_time"])?;
    for (i, n) in tree.nodes().iter().enumerate() {
        w.write_record([tree.word_string(i), fmt_real(n.height), fmt_real(n.obs_time)])?;
    }
    w.flush().map_err(|source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Crump–Mode–Jagers projections: growth of `Z_h` and first-entry antichains.
pub(super) fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<Outcome> {
    cfg.require_simulable()?;
    let hs = if cfg.grid.h.is_empty() { DEFAULT_H.to_vec() } else { cfg.grid.h.clone() };
    let a = cfg.cmj.a;
    if !(a > 0.0 && a < std::f64::consts::LN_2) {
        return Err(ConfigError::field("cmj.a", "must lie in (0, log 2)").into());
    }
    let h_max = hs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let opts = CmjOptions {
        mode: cfg.cmj.mode,
        height_cap: cfg.cmj.height_cap.unwrap_or(h_max),
        max_children: cfg.cmj.max_children,
        jump_floor: cfg.jump_floor,
        ..CmjOptions::default()
    };
    let truncated = cfg.cmj.truncation_m.is_some();

    let results = pool.replicas(cfg.seed, cfg.replicas, |r, rng| {
        let tree = cmj_project(&cfg.measure, cfg.alpha, cfg.cmj.generations, cfg.cmj.truncation_m, &opts, rng)?;
        let cons = conservation(&tree, truncated);
        let kappa = malthusian_root(&tree).unwrap_or(f64::NAN);
        let mut rows = Vec::with_capacity(hs.len());
        for &h in &hs {
            let z = count_heights(tree.nodes(), h, None) as f64;
            let q = extract_antichain(&tree, h, a)?;
            rows.push(vec![
                r as f64,
                h,
                tree.len() as f64,
                z,
                z * (-h).exp(),
                q.len() as f64,
                (q.len() as f64).ln() / h,
                flag(is_prefix_free(&tree, &q)),
                cons,
                kappa,
            ]);
        }
        Ok((rows, (r == 0).then_some(tree)))
    });
    let (runs, failed) = partition_results(results)?;

    let mut table = ResultTable::new([
        "replica",
        "h",
        "nodes",
        "z",
        "z_scaled",
        "antichain",
        "log_ratio",
        "prefix_free",
        "conservation_max",
        "kappa",
    ]);
    let mut deviations = 0;
    let mut spreads = Vec::new();
    for (rows, tree) in runs.iter() {
        let zs: Vec<f64> = rows.iter().map(|r| r[4]).collect();
        let (lo, hi) = zs.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &z| (l.min(z), h.max(z)));
        spreads.push(hi / lo);
        for row in rows {
            if row[7] != 1.0 || (!truncated && row[8] > CONSERVATION_TOLERANCE) {
                deviations += 1;
            }
            table.push(row.clone());
        }
        if let (Some(path), Some(tree)) = (&cfg.dumps.cmj, tree) {
            dump(path, tree)?;
        }
    }
    if !runs.is_empty() {
        table.set_meta_real("summary.median_z_spread", median(&spreads));
        for (j, &h) in hs.iter().enumerate() {
            let ratios: Vec<f64> = runs.iter().map(|(rows, _)| rows[j][6]).collect();
            table.set_meta_real(&format!("summary.median_log_ratio.h={h}"), median(&ratios));
        }
    }
    table.set_meta_real("cmj.a", a);
    table.set_meta_real("cmj.height_cap", opts.height_cap);
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    out.failures = failed;
    Ok(out)
}
