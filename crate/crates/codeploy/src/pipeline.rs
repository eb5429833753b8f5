//! End-to-end method pipelines and their reports.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coupling::{approach1_plan, approach2_preprocess, run_rng, CouplingPlan};
use crate::error::{Error, Result};
use crate::model::{validate, ProblemSpec};
use crate::partition::{bottom_up_solve, enumerate_partitions, set_partitions, Partition};
use crate::solver::{SolveResult, SolverConfig};
use crate::stochprog::{build_deterministic, fully_flexible, locally_discretized, ConsistencyEncoding, CrossBlockPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Deterministic,
    Full,
    Approach1,
    Approach2,
    Partition,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Deterministic => "deterministic",
            Method::Full => "full",
            Method::Approach1 => "approach1",
            Method::Approach2 => "approach2",
            Method::Partition => "partition",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "deterministic" => Method::Deterministic,
            "full" => Method::Full,
            "approach1" => Method::Approach1,
            "approach2" => Method::Approach2,
            "partition" => Method::Partition,
            other => return Err(Error::Invalid(format!("unknown method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides every subsystem's `s_own`.
    pub scenarios: Option<usize>,
    pub runs: usize,
    /// Overrides the problem seed.
    pub seed: Option<u64>,
    /// Explicit partition, `"A,B|C"`; otherwise the best feasible one.
    pub partition: Option<String>,
    pub ss_ub: Option<usize>,
    pub encoding: ConsistencyEncoding,
    pub policy: CrossBlockPolicy,
    pub solver: SolverConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            scenarios: None,
            runs: 10,
            seed: None,
            partition: None,
            ss_ub: None,
            encoding: ConsistencyEncoding::default(),
            policy: CrossBlockPolicy::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// One row of a comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: Method,
    /// Partition name for bottom-up runs.
    pub label: Option<String>,
    pub scenarios: Vec<usize>,
    pub ids: Vec<String>,
    pub objective: f64,
    pub stage1: Vec<f64>,
    pub n_var_main: usize,
    /// `None` when no SAA ran.
    pub n_var_saa: Option<usize>,
    pub wall_time: f64,
    pub seed: u64,
    pub runs: usize,
    pub converged: bool,
    pub plan: Option<CouplingPlan>,
    /// Per-run main variable counts for Approach 2.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub run_n_var: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<SolveResult>,
}

fn prepared(spec: &ProblemSpec, opts: &RunOptions) -> Result<ProblemSpec> {
    let mut spec = match opts.scenarios {
        Some(s) => spec.with_scenarios(s),
        None => spec.clone(),
    };
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    validate(&spec).into_result()?;
    Ok(spec)
}

fn base(spec: &ProblemSpec, method: Method) -> RunReport {
    RunReport {
        method,
        label: None,
        scenarios: spec.subsystems.iter().map(|s| s.s_own).collect(),
        ids: spec.ids().iter().map(|s| s.to_string()).collect(),
        objective: f64::NAN,
        stage1: Vec::new(),
        n_var_main: 0,
        n_var_saa: None,
        wall_time: 0.0,
        seed: spec.seed,
        runs: 1,
        converged: true,
        plan: None,
        run_n_var: Vec::new(),
        traces: Vec::new(),
    }
}

fn keep_trace(opts: &RunOptions, res: &SolveResult, report: &mut RunReport) {
    if opts.solver.trace {
        report.traces.push(res.clone());
    }
}

/// Runs one method. Partition runs without an explicit partition use the
/// best feasible one.
pub fn run(spec: &ProblemSpec, method: Method, opts: &RunOptions) -> Result<RunReport> {
    let spec = prepared(spec, opts)?;
    let mut report = base(&spec, method);
    match method {
        Method::Deterministic => {
            let (program, _) = build_deterministic(&spec)?;
            let res = program.solve(&opts.solver)?;
            fill(&mut report, &res, program.n_var());
            keep_trace(opts, &res, &mut report);
        }
        Method::Full => {
            let program = fully_flexible(&spec)?;
            let res = program.solve(&opts.solver)?;
            fill(&mut report, &res, program.n_var());
            keep_trace(opts, &res, &mut report);
        }
        Method::Approach1 => {
            let plan = approach1_plan(&spec);
            let program = locally_discretized(&spec, &plan, opts.encoding)?;
            let res = program.solve(&opts.solver)?;
            fill(&mut report, &res, program.n_var());
            keep_trace(opts, &res, &mut report);
            report.plan = Some(plan);
        }
        Method::Approach2 => return approach2(&spec, opts),
        Method::Partition => {
            let plan = approach1_plan(&spec);
            let partition = match &opts.partition {
                Some(text) => Partition::parse(&spec, text)?,
                None => {
                    let ranked = enumerate_partitions(&spec, &plan, opts.ss_ub.unwrap_or(usize::MAX))?;
                    ranked
                        .into_iter()
                        .next()
                        .ok_or_else(|| Error::Partition("no partition satisfies the size bound".into()))?
                        .partition
                }
            };
            return partition_report(&spec, &plan, &partition, opts);
        }
    }
    Ok(report)
}

fn fill(report: &mut RunReport, res: &SolveResult, n_var: usize) {
    report.objective = res.objective;
    report.stage1 = res.stage1.clone();
    report.n_var_main = n_var;
    report.wall_time = res.wall_time.as_secs_f64();
    report.converged = res.converged;
}

/// Bottom-up report for one partition, Approach-1 plan.
pub fn partition_report(spec: &ProblemSpec, plan: &CouplingPlan, partition: &Partition, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let bu = bottom_up_solve(spec, plan, partition, opts.encoding, opts.policy, &opts.solver)?;
    let mut report = base(spec, Method::Partition);
    report.label = Some(bu.partition.clone());
    report.objective = bu.objective_sum;
    report.stage1 = bu.stage1.clone();
    report.n_var_main = bu.blocks.iter().map(|b| b.n_var).max().unwrap_or(0);
    report.wall_time = start.elapsed().as_secs_f64();
    report.converged = bu.all_converged;
    report.plan = Some(plan.clone());
    if opts.solver.trace {
        report.traces = bu.blocks.into_iter().map(|b| b.result).collect();
    }
    Ok(report)
}

fn approach2(spec: &ProblemSpec, opts: &RunOptions) -> Result<RunReport> {
    let runs = opts.runs.max(1);
    let mut report = base(spec, Method::Approach2);
    report.runs = runs;
    let n = spec.len();
    let mut objective = 0.0;
    let mut stage1 = vec![0.0; n];
    let mut time = 0.0;
    let mut saa_vars = None;
    for r in 0..runs {
        let mut rng = run_rng(spec.seed, r as u64);
        let pre = approach2_preprocess(spec, &mut rng, &opts.solver)?;
        let pre_time = match &pre.saa {
            Some(saa) => {
                saa_vars = Some(saa.program.n_var());
                report.converged &= saa.result.converged;
                saa.result.wall_time.as_secs_f64()
            }
            None => 0.0,
        };
        let program = locally_discretized(spec, &pre.plan, opts.encoding)?;
        let res = program.solve(&opts.solver)?;
        keep_trace(opts, &res, &mut report);
        objective += res.objective;
        for (acc, v) in stage1.iter_mut().zip(&res.stage1) {
            *acc += v;
        }
        time += pre_time + res.wall_time.as_secs_f64();
        report.converged &= res.converged;
        report.run_n_var.push(program.n_var());
        if r == 0 {
            report.plan = Some(pre.plan);
        }
    }
    let k = runs as f64;
    report.objective = objective / k;
    report.stage1 = stage1.iter().map(|v| v / k).collect();
    report.wall_time = time / k;
    report.n_var_saa = saa_vars;
    report.n_var_main = (report.run_n_var.iter().sum::<usize>() as f64 / k).round() as usize;
    Ok(report)
}

/// Every method in `methods` at every S. Partition expands to every
/// partition with at least two blocks.
pub fn table(spec: &ProblemSpec, scenarios: &[usize], methods: &[Method], opts: &RunOptions) -> Result<Vec<RunReport>> {
    if scenarios.is_empty() {
        return Err(Error::Invalid("empty scenario list".into()));
    }
    let mut out = Vec::new();
    for &s in scenarios {
        let local = RunOptions {
            scenarios: Some(s),
            ..opts.clone()
        };
        for &method in methods {
            if method == Method::Partition && opts.partition.is_none() {
                let sized = prepared(spec, &local)?;
                let plan = approach1_plan(&sized);
                for partition in set_partitions(sized.len()) {
                    if partition.blocks.len() >= 2 {
                        out.push(partition_report(&sized, &plan, &partition, &local)?);
                    }
                }
            } else {
                out.push(run(spec, method, &local)?);
            }
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "--".to_string(), |v| v.to_string())
}

fn column_names(reports: &[RunReport]) -> Vec<String> {
    let ids = reports.first().map(|r| r.ids.clone()).unwrap_or_default();
    let mut h: Vec<String> = ["method", "label", "scenarios", "objective"].iter().map(|s| s.to_string()).collect();
    h.extend(ids.iter().map(|id| format!("x1_{id}")));
    h.extend(["n_var_main", "n_var_saa", "runs", "seed", "converged", "wall_time"].iter().map(|s| s.to_string()));
    h
}

fn row(r: &RunReport) -> Vec<String> {
    let mut row = vec![
        r.method.name().to_string(),
        r.label.clone().unwrap_or_else(|| "--".into()),
        r.scenarios.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("x"),
        format!("{:.4}", r.objective),
    ];
    row.extend(r.stage1.iter().map(|v| format!("{v:.4}")));
    row.extend([
        r.n_var_main.to_string(),
        fmt_opt(r.n_var_saa),
        r.runs.to_string(),
        r.seed.to_string(),
        r.converged.to_string(),
        format!("{:.4}", r.wall_time),
    ]);
    row
}

/// Fixed columns: method, label, scenarios, objective, one `x1_<id>` per
/// subsystem, n_var_main, n_var_saa, runs, seed, converged, wall_time.
pub fn write_csv<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names(reports))?;
    for r in reports {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Same columns as [`write_csv`], padded for reading.
pub fn write_text<W: Write>(reports: &[RunReport], mut out: W) -> Result<()> {
    let header = column_names(reports);
    let rows: Vec<Vec<String>> = reports.iter().map(row).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(&header))?;
    for r in &rows {
        writeln!(out, "{}", line(r))?;
    }
    Ok(())
}
