use super::{flag, Outcome};
use crate::checks::{criteria, QUICK};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::table::ResultTable;

/// The fast acceptance criteria as a table; the slow ones run in the test suite.
pub(super) fn run(_cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut table = ResultTable::new(["criterion", "passed", "statistic"]);
    let mut deviations = 0;
    for c in criteria().iter().filter(|c| QUICK.contains(&c.id)) {
        let v = (c.run)()?;
        if !v.passed {
            deviations += 1;
        }
        table.push(vec![c.id as f64, flag(v.passed), v.statistic]);
        table.set_meta(&format!("criterion.{}", c.id), format!("{}: {}", c.title, v.detail));
    }
    let mut out = Outcome::new(table);
    out.deviations = deviations;
    Ok(out)
}
