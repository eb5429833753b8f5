//! Coupling-aware partitioning and bottom-up block solves.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::coupling::CouplingPlan;
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scenario::build_local_grid;
use crate::solver::{SolveResult, SolverConfig};
use crate::stochprog::{build_standalone, restrict, variable_count, ConsistencyEncoding, CrossBlockPolicy};

/// Largest problem enumerated exhaustively.
pub const MAX_ENUMERATED: usize = 12;

/// Disjoint blocks of subsystem indices covering the problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Sorts members and blocks so equal partitions compare equal.
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        Partition { blocks }
    }

    pub fn single_block(n: usize) -> Self {
        Partition::new(vec![(0..n).collect()])
    }

    pub fn singletons(n: usize) -> Self {
        Partition::new((0..n).map(|k| vec![k]).collect())
    }

    /// Parses `"A,B|C"`.
    pub fn parse(spec: &ProblemSpec, text: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in text.split('|') {
            let mut block = Vec::new();
            for id in part.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                block.push(spec.index_of(id)?);
            }
            blocks.push(block);
        }
        let p = Partition::new(blocks);
        p.check(spec.len())?;
        Ok(p)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for b in &self.blocks {
            if b.is_empty() {
                return Err(Error::Partition("empty block".into()));
            }
            for &k in b {
                if k >= n || seen[k] {
                    return Err(Error::Partition(format!("subsystem {k} repeated or out of range")));
                }
                seen[k] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Partition("blocks do not cover every subsystem".into()));
        }
        Ok(())
    }

    /// Block label of every subsystem.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let mut p = vec![0; n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &k in block {
                p[k] = b;
            }
        }
        p
    }

    /// `"AB-C"` style name.
    pub fn name(&self, spec: &ProblemSpec) -> String {
        let ids = spec.ids();
        let mut blocks: Vec<String> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&k| ids[k]).collect::<Vec<_>>().join(""))
            .collect();
        // larger blocks first, as in "AB-C"
        blocks.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        blocks.join("-")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "{}", parts.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionScore {
    /// Coordination size: `sum (1 + S_ij)` over couplings crossing blocks.
    pub cs: usize,
    /// Variable count of each block's standalone program.
    pub ss: Vec<usize>,
    pub ss_max: usize,
}

/// Variable count of a block's standalone program without assembling it.
pub fn block_size(spec: &ProblemSpec, plan: &CouplingPlan, members: &[usize]) -> Result<usize> {
    let (sub, sub_plan) = restrict(spec, plan, members, CrossBlockPolicy::Drop)?;
    let local = build_local_grid(&sub, &sub_plan)?;
    let totals: Vec<usize> = local.grids.iter().map(|g| g.total).collect();
    Ok(variable_count(&totals))
}

pub fn score_partition(spec: &ProblemSpec, plan: &CouplingPlan, partition: &Partition) -> Result<PartitionScore> {
    partition.check(spec.len())?;
    let labels = partition.labels(spec.len());
    let m = spec.coupling_matrix();
    let mut cs = 0;
    for i in 0..spec.len() {
        for j in 0..spec.len() {
            if i != j && m[i][j] > 0.0 && labels[i] != labels[j] {
                cs += 1 + plan.s_coupling[i][j];
            }
        }
    }
    let ss = partition
        .blocks
        .iter()
        .map(|b| block_size(spec, plan, b))
        .collect::<Result<Vec<_>>>()?;
    let ss_max = ss.iter().copied().max().unwrap_or(0);
    Ok(PartitionScore { cs, ss, ss_max })
}

/// Every set partition of `0..n` in restricted-growth order.
pub fn set_partitions(n: usize) -> Vec<Partition> {
    fn rec(k: usize, n: usize, labels: &mut Vec<usize>, max: usize, out: &mut Vec<Partition>) {
        if k == n {
            let mut blocks = vec![Vec::new(); max];
            for (i, &l) in labels.iter().enumerate() {
                blocks[l].push(i);
            }
            out.push(Partition::new(blocks));
            return;
        }
        for l in 0..=max {
            labels.push(l);
            rec(k + 1, n, labels, max.max(l + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(0, n, &mut Vec::with_capacity(n), 0, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPartition {
    pub name: String,
    pub partition: Partition,
    pub score: PartitionScore,
    pub feasible: bool,
    /// No other feasible partition is at least as good on both CS and SS_max
    /// and better on one.
    pub pareto: bool,
}

/// Scores every partition, drops those with `ss_max > ss_ub`, sorts by CS
/// then SS_max then name.
pub fn enumerate_partitions(spec: &ProblemSpec, plan: &CouplingPlan, ss_ub: usize) -> Result<Vec<RankedPartition>> {
    let mut all = score_all(spec, plan, ss_ub)?;
    all.retain(|r| r.feasible);
    Ok(all)
}

/// Like [`enumerate_partitions`] but keeps infeasible entries, flagged.
pub fn score_all(spec: &ProblemSpec, plan: &CouplingPlan, ss_ub: usize) -> Result<Vec<RankedPartition>> {
    let n = spec.len();
    if n > MAX_ENUMERATED {
        return Err(Error::Partition(format!(
            "{n} subsystems exceed the exhaustive limit of {MAX_ENUMERATED}; heuristic partitioning is not supported"
        )));
    }
    let mut out = Vec::new();
    for partition in set_partitions(n) {
        let score = score_partition(spec, plan, &partition)?;
        out.push(RankedPartition {
            name: partition.name(spec),
            feasible: score.ss_max <= ss_ub,
            partition,
            score,
            pareto: false,
        });
    }
    let snapshot: Vec<(bool, usize, usize)> = out.iter().map(|r| (r.feasible, r.score.cs, r.score.ss_max)).collect();
    for r in &mut out {
        r.pareto = r.feasible
            && !snapshot.iter().any(|&(f, cs, ss)| {
                f && cs <= r.score.cs && ss <= r.score.ss_max && (cs < r.score.cs || ss < r.score.ss_max)
            });
    }
    out.sort_by(|a, b| {
        b.feasible
            .cmp(&a.feasible)
            .then(a.score.cs.cmp(&b.score.cs))
            .then(a.score.ss_max.cmp(&b.score.ss_max))
            .then(a.name.cmp(&b.name))
    });
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockResult {
    pub members: Vec<String>,
    pub n_var: usize,
    pub result: SolveResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct BottomUpReport {
    pub partition: String,
    pub blocks: Vec<BlockResult>,
    /// Stage-1 capacity per subsystem in declaration order.
    pub stage1: Vec<f64>,
    /// Sum of block objectives; cross-block coupling costs are missing.
    pub objective_sum: f64,
    pub all_converged: bool,
}

/// Solves each block independently.
pub fn bottom_up_solve(
    spec: &ProblemSpec,
    plan: &CouplingPlan,
    partition: &Partition,
    enc: ConsistencyEncoding,
    policy: CrossBlockPolicy,
    config: &SolverConfig,
) -> Result<BottomUpReport> {
    partition.check(spec.len())?;
    let ids = spec.ids();
    let mut stage1 = vec![0.0; spec.len()];
    let mut blocks = Vec::new();
    for members in &partition.blocks {
        let program = build_standalone(spec, members, plan, enc, policy)?;
        let result = program.solve(config)?;
        for (pos, &k) in members.iter().enumerate() {
            stage1[k] = result.stage1[pos];
        }
        blocks.push(BlockResult {
            members: members.iter().map(|&k| ids[k].to_string()).collect(),
            n_var: program.n_var(),
            result,
        });
    }
    Ok(BottomUpReport {
        partition: partition.name(spec),
        objective_sum: blocks.iter().map(|b| b.result.objective).sum(),
        all_converged: blocks.iter().all(|b| b.result.converged),
        stage1,
        blocks,
    })
}

/// Writes `partition,<id>...,objective_sum,converged` rows.
pub fn write_bottom_up_csv<W: Write>(spec: &ProblemSpec, reports: &[BottomUpReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["partition".to_string()];
    header.extend(spec.ids().iter().map(|id| format!("x1_{id}")));
    header.push("objective_sum".into());
    header.push("converged".into());
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.partition.clone()];
        row.extend(r.stage1.iter().map(|v| format!("{v:.4}")));
        row.push(format!("{:.4}", r.objective_sum));
        row.push(r.all_converged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
