//! Coupling-strength pre-processing: analytic plans, SAA sampling and
//! standardized regression.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scenario::{build_full_grid, demand_grids};
use crate::solver::{SolveResult, SolverConfig};
use crate::stochprog::{build_sample_average, AssembledProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    Analytic,
    SaaRegression,
    Default,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub dest: String,
    /// Input names, own demand first.
    pub inputs: Vec<String>,
    /// `None` where the input was dropped as degenerate.
    pub beta: Vec<Option<f64>>,
    pub intercept: f64,
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub subset_size: Option<usize>,
    pub saa_skipped: bool,
    pub saa_converged: Option<bool>,
    pub regressions: Vec<RegressionDiagnostics>,
    /// `(dest, origin)` pairs that fell back to one scenario.
    pub defaulted: Vec<(String, String)>,
}

/// Per-coupling scenario counts. Matrices are indexed `[dest][origin]`;
/// absent couplings carry `S_ij = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub method: PlanMethod,
    pub delta_rel: Vec<Vec<f64>>,
    pub s_coupling: Vec<Vec<usize>>,
    pub diagnostics: PlanDiagnostics,
}

/// `prod_{k != i} S_k`.
pub fn coupling_cap(spec: &ProblemSpec, i: usize) -> usize {
    spec.subsystems
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, s)| s.s_own)
        .product()
}

/// `min(max(1, ceil(S_i * delta)), cap)`.
fn scenario_count(s_own: usize, delta: f64, cap: usize) -> usize {
    let raw = (s_own as f64 * delta - 1e-12).ceil();
    let raw = if raw.is_finite() && raw > 1.0 { raw } else { 1.0 };
    (raw.min(cap as f64) as usize).max(1)
}

impl CouplingPlan {
    fn from_delta(spec: &ProblemSpec, delta_rel: Vec<Vec<f64>>, method: PlanMethod) -> Self {
        let n = spec.len();
        let m = spec.coupling_matrix();
        let s_coupling = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j || m[i][j] <= 0.0 {
                            1
                        } else {
                            scenario_count(spec.subsystems[i].s_own, delta_rel[i][j], coupling_cap(spec, i))
                        }
                    })
                    .collect()
            })
            .collect();
        CouplingPlan {
            method,
            delta_rel,
            s_coupling,
            diagnostics: PlanDiagnostics::default(),
        }
    }

    /// One scenario per coupling.
    pub fn default_plan(spec: &ProblemSpec) -> Self {
        let n = spec.len();
        CouplingPlan {
            method: PlanMethod::Default,
            delta_rel: vec![vec![0.0; n]; n],
            s_coupling: vec![vec![1; n]; n],
            diagnostics: PlanDiagnostics::default(),
        }
    }

    /// Every coupling at its cap `prod_{k != i} S_k`.
    pub fn fully_coupled(spec: &ProblemSpec) -> Self {
        let n = spec.len();
        let m = spec.coupling_matrix();
        let s_coupling = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i != j && m[i][j] > 0.0 { coupling_cap(spec, i) } else { 1 })
                    .collect()
            })
            .collect();
        CouplingPlan {
            method: PlanMethod::Custom,
            delta_rel: vec![vec![0.0; n]; n],
            s_coupling,
            diagnostics: PlanDiagnostics::default(),
        }
    }

    /// Plan from explicit counts, clamped to `[1, cap]`.
    pub fn custom(spec: &ProblemSpec, s_coupling: Vec<Vec<usize>>) -> Self {
        let n = spec.len();
        let s_coupling = s_coupling
            .into_iter()
            .enumerate()
            .map(|(i, row)| row.into_iter().map(|s| s.clamp(1, coupling_cap(spec, i).max(1))).collect())
            .collect();
        CouplingPlan {
            method: PlanMethod::Custom,
            delta_rel: vec![vec![0.0; n]; n],
            s_coupling,
            diagnostics: PlanDiagnostics::default(),
        }
    }

    /// Plan over the subsystems in `members`, in that order.
    pub fn restrict(&self, members: &[usize]) -> Self {
        let pick = |m: &Vec<Vec<f64>>| members.iter().map(|&i| members.iter().map(|&j| m[i][j]).collect()).collect();
        CouplingPlan {
            method: self.method,
            delta_rel: pick(&self.delta_rel),
            s_coupling: members
                .iter()
                .map(|&i| members.iter().map(|&j| self.s_coupling[i][j]).collect())
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Analytic plan: `delta_ij = d_ij` for the power-law family.
pub fn approach1_plan(spec: &ProblemSpec) -> CouplingPlan {
    approach1_plan_with(spec, &spec.coupling_matrix())
}

/// Analytic plan with user-supplied coupling strengths.
pub fn approach1_plan_with(spec: &ProblemSpec, delta_rel: &[Vec<f64>]) -> CouplingPlan {
    CouplingPlan::from_delta(spec, delta_rel.to_vec(), PlanMethod::Analytic)
}

/// SAA subset size, or `None` when `fraction * total < 1`.
pub fn saa_subset_size(fraction: f64, full_total: usize) -> Option<usize> {
    let raw = fraction * full_total as f64;
    if raw < 1.0 {
        None
    } else {
        Some((raw - 1e-9).ceil().max(1.0).min(full_total as f64) as usize)
    }
}

/// Uniform sample without replacement of joint scenario indices, sorted.
pub fn saa_subset(spec: &ProblemSpec, full_total: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let size = saa_subset_size(spec.saa_fraction, full_total)?;
    let mut picked = sample(rng, full_total, size).into_vec();
    picked.sort_unstable();
    Some(picked)
}

/// Seeded stream for run `run` of a problem.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(run))
}

/// Regression rows of one destination subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaaSample {
    pub subsystem: usize,
    pub own_demand: Vec<f64>,
    /// `(origin, origin Stage-2 capacity per row)`.
    pub inflow: Vec<(usize, Vec<f64>)>,
    /// Per-scenario subsystem cost.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SaaOutcome {
    pub program: AssembledProgram,
    pub result: SolveResult,
    pub samples: Vec<SaaSample>,
}

/// Solves the fully flexible program on `subset` and extracts regression rows.
pub fn run_saa(spec: &ProblemSpec, subset: &[usize], config: &SolverConfig) -> Result<SaaOutcome> {
    let grids = build_full_grid(spec, &demand_grids(spec)?);
    let program = build_sample_average(spec, &grids, subset)?;
    let result = program.solve(config)?;
    let x = &result.point;
    let l = &program.layout;
    let m = spec.coupling_matrix();
    let eps = spec.smoothing_eps;
    let samples = spec
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, sub)| {
            let phi = |v: f64| (v.max(0.0) + eps).powf(sub.alpha) - eps.powf(sub.alpha);
            let stage1 = sub.c1 * x[i].max(0.0).powf(sub.alpha);
            SaaSample {
                subsystem: i,
                own_demand: subset.iter().map(|&t| grids[i].demand[t]).collect(),
                inflow: (0..spec.len())
                    .filter(|&j| j != i && m[i][j] > 0.0)
                    .map(|j| (j, (0..subset.len()).map(|t| x[l.stage2(j, t)]).collect()))
                    .collect(),
                output: (0..subset.len())
                    .map(|t| stage1 + sub.c2 * phi(x[l.expansion(i, t)]))
                    .collect(),
            }
        })
        .collect();
    Ok(SaaOutcome {
        program,
        result,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regression {
    /// Coefficient per input on the standardized scale; `None` if dropped.
    pub beta: Vec<Option<f64>>,
    pub intercept: f64,
    pub degenerate: Vec<bool>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Regression {
    /// Prediction for raw inputs.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .enumerate()
                .filter_map(|(k, &v)| self.beta[k].map(|b| b * (v - self.mean[k]) / self.std[k]))
                .sum::<f64>()
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// OLS of the raw output on standardized inputs with intercept. Constant
/// inputs are dropped; rank deficiency resolves to the minimum-norm fit.
pub fn src_regression(inputs: &[Vec<f64>], output: &[f64]) -> Result<Regression> {
    let rows = output.len();
    if rows < 2 {
        return Err(Error::Regression("need at least two rows".into()));
    }
    if inputs.is_empty() {
        return Err(Error::Regression("no input columns".into()));
    }
    if inputs.iter().any(|c| c.len() != rows) {
        return Err(Error::Regression("column length differs from output".into()));
    }
    let stats: Vec<(f64, f64)> = inputs.iter().map(|c| mean_std(c)).collect();
    let degenerate: Vec<bool> = inputs
        .iter()
        .zip(&stats)
        .map(|(c, &(mean, std))| std.is_nan() || std <= 1e-12 * mean.abs().max(1.0) || c.iter().any(|v| !v.is_finite()))
        .collect();
    let kept: Vec<usize> = (0..inputs.len()).filter(|&k| !degenerate[k]).collect();
    if kept.is_empty() {
        return Err(Error::Regression("every input is degenerate".into()));
    }
    let x = DMatrix::from_fn(rows, kept.len(), |r, c| {
        let k = kept[c];
        (inputs[k][r] - stats[k].0) / stats[k].1
    });
    let (zmean, _) = mean_std(output);
    // centered columns decouple the intercept
    let zc = DVector::from_iterator(rows, output.iter().map(|z| z - zmean));
    let xtx = x.transpose() * &x;
    let xtz = x.transpose() * zc;
    let eig = xtx.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = top * 1e-12 * kept.len() as f64;
    let mut b = DVector::zeros(kept.len());
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let v = eig.eigenvectors.column(k);
            b += v * (v.dot(&xtz) / ev);
        }
    }
    let mut beta = vec![None; inputs.len()];
    for (c, &k) in kept.iter().enumerate() {
        beta[k] = Some(b[c]);
    }
    Ok(Regression {
        beta,
        intercept: zmean,
        degenerate,
        mean: stats.iter().map(|s| s.0).collect(),
        std: stats.iter().map(|s| s.1).collect(),
    })
}

/// Regression-based plan; `samples = None` means SAA was skipped.
pub fn approach2_plan(spec: &ProblemSpec, samples: Option<&[SaaSample]>) -> CouplingPlan {
    let n = spec.len();
    let ids = spec.ids();
    let m = spec.coupling_matrix();
    let Some(samples) = samples else {
        let mut plan = CouplingPlan::default_plan(spec);
        plan.diagnostics.saa_skipped = true;
        plan.diagnostics.defaulted = coupled_pairs(&m, &ids);
        return plan;
    };
    let mut delta = vec![vec![0.0; n]; n];
    let mut defaulted = vec![false; n];
    let mut diags = Vec::new();
    for sample in samples {
        let i = sample.subsystem;
        if sample.inflow.is_empty() {
            continue;
        }
        let mut inputs = vec![sample.own_demand.clone()];
        let mut names = vec![format!("demand_{}", ids[i])];
        for (j, col) in &sample.inflow {
            inputs.push(col.clone());
            names.push(format!("x_{}{}", ids[i], ids[*j]));
        }
        let fit = src_regression(&inputs, &sample.output);
        let (beta, intercept, ok) = match &fit {
            Ok(r) => {
                let own = r.beta[0].unwrap_or(0.0);
                let ok = own.abs() >= 1e-12 && !r.degenerate.iter().any(|&d| d);
                (r.beta.clone(), r.intercept, ok)
            }
            Err(_) => (vec![None; inputs.len()], f64::NAN, false),
        };
        if ok {
            let own = beta[0].unwrap();
            for (c, (j, _)) in sample.inflow.iter().enumerate() {
                delta[i][*j] = (beta[c + 1].unwrap() / own).abs();
            }
        } else {
            defaulted[i] = true;
        }
        diags.push(RegressionDiagnostics {
            dest: ids[i].to_string(),
            inputs: names,
            beta,
            intercept,
            defaulted: !ok,
        });
    }
    let mut plan = CouplingPlan::from_delta(spec, delta, PlanMethod::SaaRegression);
    let mut fallback = Vec::new();
    for i in 0..n {
        if defaulted[i] {
            for j in 0..n {
                plan.s_coupling[i][j] = 1;
                if i != j && m[i][j] > 0.0 {
                    fallback.push((ids[i].to_string(), ids[j].to_string()));
                }
            }
        }
    }
    plan.diagnostics.regressions = diags;
    plan.diagnostics.defaulted = fallback;
    plan.diagnostics.subset_size = samples.first().map(|s| s.output.len());
    plan
}

fn coupled_pairs(m: &[Vec<f64>], ids: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for i in 0..m.len() {
        for j in 0..m.len() {
            if i != j && m[i][j] > 0.0 {
                out.push((ids[i].to_string(), ids[j].to_string()));
            }
        }
    }
    out
}

/// Result of a full Approach-2 pre-processing run.
#[derive(Debug, Clone)]
pub struct Approach2Run {
    pub plan: CouplingPlan,
    pub saa: Option<SaaOutcome>,
}

/// Subset selection, SAA solve and regression. Nonconvergence or a solver
/// error falls back to the default plan.
pub fn approach2_preprocess(spec: &ProblemSpec, rng: &mut ChaCha8Rng, config: &SolverConfig) -> Result<Approach2Run> {
    let full_total: usize = spec.subsystems.iter().map(|s| s.s_own).product();
    let Some(subset) = saa_subset(spec, full_total, rng) else {
        return Ok(Approach2Run {
            plan: approach2_plan(spec, None),
            saa: None,
        });
    };
    let outcome = run_saa(spec, &subset, config)?;
    let mut plan = if outcome.result.converged {
        approach2_plan(spec, Some(&outcome.samples))
    } else {
        let mut p = approach2_plan(spec, None);
        p.diagnostics.saa_skipped = false;
        p
    };
    plan.diagnostics.subset_size = Some(subset.len());
    plan.diagnostics.saa_converged = Some(outcome.result.converged);
    Ok(Approach2Run {
        plan,
        saa: Some(outcome),
    })
}
