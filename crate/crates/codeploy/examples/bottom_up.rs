//! Scores every partition of the three-subsystem case and solves each one
//! bottom-up.

use codeploy::bundled;
use codeploy::coupling::approach1_plan;
use codeploy::partition::{bottom_up_solve, score_all};
use codeploy::solver::SolverConfig;
use codeploy::stochprog::CrossBlockPolicy;

fn main() -> codeploy::Result<()> {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    for ranked in score_all(&spec, &plan, 70)? {
        let report = bottom_up_solve(&spec, &plan, &ranked.partition, Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default())?;
        let x: Vec<String> = report.stage1.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "{:6} cs={:2} ss={:?} feasible={} x1=({})",
            ranked.name,
            ranked.score.cs,
            ranked.score.ss,
            ranked.feasible,
            x.join(", ")
        );
    }
    Ok(())
}
