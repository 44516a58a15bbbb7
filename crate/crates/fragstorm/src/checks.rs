//! The acceptance criteria, each runnable on its own and bounded in time.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fragstorm_core::stats::median;
use fragstorm_core::{DislocationMeasure, SlowlyVaryingHandle};

use crate::config::{Experiment, ExperimentConfig, Format, RawConfig};
use crate::error::Result;
use crate::experiments::{self, Outcome};
use crate::pool::Pool;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    /// The headline number the criterion is judged on.
    pub statistic: f64,
    pub detail: String,
}

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub budget: Duration,
    pub run: fn() -> Result<Verdict>,
}

/// Outcome of one criterion, including its time budget.
#[derive(Debug, Clone)]
pub struct Report {
    pub id: u32,
    pub title: &'static str,
    pub verdict: Result<Verdict, String>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.elapsed <= self.budget && self.verdict.as_ref().is_ok_and(|v| v.passed)
    }

    /// One line: status, id, title, statistic, detail and timing.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let body = match &self.verdict {
            Ok(v) => format!("statistic={:.6} {}", v.statistic, v.detail),
            Err(e) => format!("error: {e}"),
        };
        format!(
            "{status} [{:>2}] {} | {body} | {:.1}s of {}s",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

pub fn evaluate(c: &Criterion) -> Report {
    let start = Instant::now();
    let verdict = (c.run)().map_err(|e| e.to_string());
    Report {
        id: c.id,
        title: c.title,
        verdict,
        elapsed: start.elapsed(),
        budget: c.budget,
    }
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "Laplace exponent quadrature vs closed forms", budget: secs(1), run: laplace_oracle },
        Criterion { id: 2, title: "Phi asymptotics for a crumbling measure", budget: secs(10), run: phi_window },
        Criterion { id: 3, title: "variational closed form vs optimizer", budget: secs(5), run: variational_oracle },
        Criterion { id: 4, title: "many-to-one: population vs spine", budget: secs(120), run: many_to_one },
        Criterion { id: 5, title: "Jain-Pruitt sandwich", budget: secs(300), run: jp_sandwich },
        Criterion { id: 6, title: "finite activity: m_t - g(t) shrinks", budget: secs(600), run: finite_limit },
        Criterion { id: 7, title: "infinite activity: growth of m_t", budget: secs(1800), run: infinite_growth },
        Criterion { id: 8, title: "CMJ conservation and Z_h e^-h stability", budget: secs(300), run: cmj_conservation },
        Criterion { id: 9, title: "antichains: prefix-free and e^h growth", budget: secs(300), run: antichain_growth },
        Criterion { id: 10, title: "nice-function inverse vs g", budget: secs(1), run: inversion_bridge },
        Criterion { id: 11, title: "byte-identical reruns", budget: secs(60), run: determinism },
    ]
}

/// Criteria that finish in seconds; the `report` experiment runs these.
pub const QUICK: [u32; 5] = [1, 2, 3, 10, 11];

fn config(experiment: Experiment, text: &str) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::from_raw(experiment, RawConfig::parse(text)?)?)
}

fn run(experiment: Experiment, text: &str) -> Result<Outcome> {
    experiments::run(&config(experiment, text)?, &Pool::from_env()?)
}

fn column(out: &Outcome, name: &str) -> Vec<f64> {
    out.table.column(name).unwrap_or_default()
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn laplace_oracle() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    let mut deviations = 0;
    for measure in ["kind = uniform_binary", "kind = k_split\nmeasure.k = 2", "kind = k_split\nmeasure.k = 3"] {
        let out = run(Experiment::VerifyPhi, &format!("measure.{measure}\ngrid.q = 0.5, 1, 2, 5\n"))?;
        deviations += out.deviations;
        worst = worst.max(max(&column(&out, "rel_err")));
    }
    Ok(Verdict {
        passed: deviations == 0 && worst <= 1e-8,
        statistic: worst,
        detail: "max relative error, tolerance 1e-8".into(),
    })
}

fn phi_window() -> Result<Verdict> {
    let m = DislocationMeasure::crumble_binary(0.5, SlowlyVaryingHandle::constant(1.0)?)?;
    let mut worst: f64 = 0.0;
    for q in [1e4, 1e5] {
        let (a, d) = experiments::phi_asymptotic_ratios(&m, q)?.expect("crumbling measure");
        worst = worst.max((a - 1.0).abs()).max((d - 1.0).abs());
    }
    Ok(Verdict {
        passed: worst <= 0.1,
        statistic: worst,
        detail: "max |ratio - 1| at q = 1e4, 1e5, window 0.1".into(),
    })
}

fn variational_oracle() -> Result<Verdict> {
    let out = run(Experiment::Variational, "variational.n_trunc = 500\n")?;
    let gap = max(&column(&out, "rel_gap"));
    let z = max(&column(&out, "minimizer_max_err"));
    Ok(Verdict {
        passed: out.deviations == 0 && out.failures == 0 && out.table.rows().len() == 27,
        statistic: gap,
        detail: format!("max relative gap over 27 points, max minimizer error {z:.3e}"),
    })
}

fn many_to_one() -> Result<Verdict> {
    let out = run(
        Experiment::Mto,
        "seed = 4\nreplicas = 100000\nmeasure.kind = uniform_binary\ngrid.t = 0.5, 1, 2\ngrid.h = 1, 2, 3\n",
    )?;
    let z: Vec<f64> = out
        .table
        .rows()
        .iter()
        .map(|r| (r[2] - r[4]).abs() / (r[3] * r[3] + r[5] * r[5]).sqrt())
        .collect();
    Ok(Verdict {
        passed: out.deviations == 0,
        statistic: max(&z),
        detail: "max |difference| in combined standard errors, limit 3".into(),
    })
}

/// `(t, w)` grid shared by both measures.
const JP_GRID: &str = "grid.t = 2, 4, 8, 8, 16, 24\ngrid.w = 0.5, 1, 1, 2, 4, 8\n";

fn jp_sandwich() -> Result<Verdict> {
    let uniform = run(
        Experiment::Spine,
        &format!("seed = 5\nreplicas = 1000000\nmeasure.kind = uniform_binary\n{JP_GRID}"),
    )?;
    let crumble = run(
        Experiment::Spine,
        &format!(
            "seed = 5\nreplicas = 1000000\nmeasure.kind = crumble_binary\nmeasure.theta = 0.5\nsim.jump_floor = 1e-3\n{JP_GRID}"
        ),
    )?;
    let checked: f64 = [&uniform, &crumble].iter().map(|o| column(o, "checked").iter().sum::<f64>()).sum();
    Ok(Verdict {
        passed: uniform.deviations + crumble.deviations == 0 && checked > 0.0,
        statistic: (uniform.deviations + crumble.deviations) as f64,
        detail: format!("violations among {checked} visible points"),
    })
}

fn finite_limit() -> Result<Verdict> {
    let out = run(
        Experiment::Simulate,
        "seed = 6\nreplicas = 50\nmeasure.kind = uniform_binary\nalpha = 1\ngrid.t = 1e3, 1e4, 1e5\n",
    )?;
    let abs = column(&out, "abs_median");
    let last = abs[abs.len() - 1];
    let monotone = abs.windows(2).all(|w| w[1] <= w[0]);
    Ok(Verdict {
        passed: out.failures == 0 && last <= 0.75 && monotone,
        statistic: last,
        detail: format!("|median(m_t - g)| at 1e5 (limit 0.75); sequence {abs:.4?}"),
    })
}

fn infinite_growth() -> Result<Verdict> {
    let out = run(
        Experiment::Simulate,
        "seed = 7\nreplicas = 20\nmeasure.kind = crumble_binary\nmeasure.theta = 0.5\nalpha = 1\n\
         sim.jump_floor = 1e-4\nsim.floor_margin = 1.5\ngrid.t = 1e3, 1e4, 1e5, 1e6\n",
    )?;
    let slope: f64 = out
        .table
        .meta("trend.slope_m_vs_log_t")
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN);
    let diff = column(&out, "diff_median")[2];
    let bias = column(&out, "lineage_bias")[2];
    let slope_ok = (slope - 1.0).abs() <= 0.05;
    let window_ok = diff.abs() <= 1.5 + bias;
    Ok(Verdict {
        passed: out.failures == 0 && slope_ok && window_ok,
        statistic: slope,
        detail: format!(
            "slope of median m_t vs log t (window [0.95, 1.05]); |median(m_t - g)| at 1e5 = {:.4} vs 1.5 + bias {bias:.4}",
            diff.abs()
        ),
    })
}

fn cmj_run() -> &'static std::result::Result<Outcome, String> {
    static RUN: OnceLock<std::result::Result<Outcome, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        run(
            Experiment::Antichain,
            "seed = 8\nreplicas = 20\nmeasure.kind = uniform_binary\nalpha = 1\ngrid.h = 8, 10, 12\ncmj.a = 0.5\n",
        )
        .map_err(|e| e.to_string())
    })
}

fn failed_run(e: &str) -> Verdict {
    Verdict {
        passed: false,
        statistic: f64::NAN,
        detail: format!("shared run failed: {e}"),
    }
}

fn cmj_conservation() -> Result<Verdict> {
    let out = match cmj_run() {
        Ok(out) => out,
        Err(e) => return Ok(failed_run(e)),
    };
    let worst = max(&column(out, "conservation_max"));
    let spread: f64 = out
        .table
        .meta("summary.median_z_spread")
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN);
    Ok(Verdict {
        passed: out.failures == 0 && worst <= 1e-9 && spread <= 3.0,
        statistic: spread,
        detail: format!("median max/min of Z_h e^-h over h = 8, 10, 12 (limit 3); worst conservation residual {worst:.2e}"),
    })
}

fn antichain_growth() -> Result<Verdict> {
    let out = match cmj_run() {
        Ok(out) => out,
        Err(e) => return Ok(failed_run(e)),
    };
    let prefix_free = column(out, "prefix_free").iter().all(|&f| f == 1.0);
    let at12: Vec<f64> = out
        .table
        .rows()
        .iter()
        .filter(|r| r[1] == 12.0)
        .map(|r| r[6])
        .collect();
    let m = median(&at12);
    Ok(Verdict {
        passed: out.failures == 0 && prefix_free && (0.8..=1.05).contains(&m),
        statistic: m,
        detail: format!("median log(#Q')/h at h = 12 (window [0.8, 1.05]); all prefix-free: {prefix_free}"),
    })
}

fn inversion_bridge() -> Result<Verdict> {
    let grid = "grid.t = 1e3, 1e6, 1e9, 1e12\nalpha = 1\n";
    let finite = run(Experiment::Asymptotics, &format!("measure.kind = uniform_binary\n{grid}"))?;
    let infinite = run(
        Experiment::Asymptotics,
        &format!("measure.kind = crumble_binary\nmeasure.theta = 0.5\n{grid}"),
    )?;
    let worst = max(&column(&finite, "bridge")).max(max(&column(&infinite, "bridge")));
    Ok(Verdict {
        passed: worst <= 5.0,
        statistic: worst,
        detail: "max |f^-1(t) - g(t)| log t / log log t, limit 5".into(),
    })
}

fn determinism() -> Result<Verdict> {
    let configs = [
        (Experiment::Mto, "seed = 11\nreplicas = 5000\ngrid.t = 1\ngrid.h = 2\n"),
        (Experiment::Simulate, "seed = 11\nreplicas = 4\ngrid.t = 10, 100\n"),
        (
            Experiment::Simulate,
            "seed = 11\nreplicas = 3\nmeasure.kind = crumble_binary\nmeasure.theta = 0.5\nsim.jump_floor = 0.01\ngrid.t = 10, 50\n",
        ),
        (Experiment::Antichain, "seed = 11\nreplicas = 3\ngrid.h = 3, 4\n"),
        (Experiment::Spine, "seed = 11\nreplicas = 20000\ngrid.t = 4\ngrid.w = 1\n"),
    ];
    let mut identical = 0;
    for (experiment, text) in configs {
        let cfg = config(experiment, text)?;
        let mut renders = Vec::new();
        for threads in [1, 1, 2] {
            let out = experiments::run(&cfg, &Pool::new(threads)?)?;
            renders.push((out.table.render(Format::Csv)?, out.table.render(Format::Json)?));
        }
        if renders.windows(2).all(|w| w[0] == w[1]) {
            identical += 1;
        }
    }
    Ok(Verdict {
        passed: identical == configs.len(),
        statistic: identical as f64,
        detail: format!("experiments with identical CSV and JSON over 3 runs (of {})", configs.len()),
    })
}
