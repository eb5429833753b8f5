//! Assembly of the deterministic, fully flexible, locally discretized and
//! standalone programs.
//!
//! Every program has the same shape: per subsystem one Stage-1 capacity,
//! then per local scenario a Stage-2 capacity and an expansion. Coupling
//! variables are substituted by the origin's Stage-2 capacity of a chosen
//! scenario, so they never appear as variables.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingPlan;
use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SubsystemSpec};
use crate::scenario::{build_full_grid, build_local_grid, demand_grids, group_map, LocalGrids, ScenarioGrid};
use crate::solver::{self, SolveResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    Deterministic,
    FullyFlexible,
    SampleAverage,
    LocallyDiscretized,
    Standalone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableLayout {
    pub subsystems: Vec<String>,
    /// Local scenario count per subsystem.
    pub totals: Vec<usize>,
    pub stage2_offset: Vec<usize>,
    pub expansion_offset: Vec<usize>,
    pub n_var: usize,
}

impl VariableLayout {
    fn new(subsystems: Vec<String>, totals: Vec<usize>) -> Self {
        let n = subsystems.len();
        let mut stage2_offset = Vec::with_capacity(n);
        let mut expansion_offset = Vec::with_capacity(n);
        let mut next = n;
        for &t in &totals {
            stage2_offset.push(next);
            next += t;
            expansion_offset.push(next);
            next += t;
        }
        VariableLayout {
            subsystems,
            totals,
            stage2_offset,
            expansion_offset,
            n_var: next,
        }
    }

    pub fn stage1(&self, i: usize) -> usize {
        i
    }

    pub fn stage2(&self, i: usize, t: usize) -> usize {
        self.stage2_offset[i] + t
    }

    pub fn expansion(&self, i: usize, t: usize) -> usize {
        self.expansion_offset[i] + t
    }
}

/// Variable count of a program with the given local totals.
pub fn variable_count(totals: &[usize]) -> usize {
    totals.len() + 2 * totals.iter().sum::<usize>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(k, a)| a * x[k]).sum()
    }

    /// Violation after scaling the row to unit max coefficient.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let scale = self
            .terms
            .iter()
            .fold(0.0f64, |m, &(_, a)| m.max(a.abs()))
            .max(f64::MIN_POSITIVE);
        let r = (self.activity(x) - self.rhs) / scale;
        match self.relation {
            Relation::Ge => (-r).max(0.0),
            Relation::Eq => r.abs(),
        }
    }
}

/// `weight * coef * phi(x[var])` with `phi(v) = (v + eps)^alpha - eps^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerm {
    pub var: usize,
    pub coef: f64,
    pub alpha: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembledProgram {
    pub kind: ProgramKind,
    pub layout: VariableLayout,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<ObjectiveTerm>,
    /// Upper bound per variable; every lower bound is 0.
    pub upper: Vec<f64>,
    pub initial_point: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: Vec<f64>,
    /// Some component was negative and got clamped to 0.
    pub clamped: bool,
}

impl AssembledProgram {
    pub fn n_var(&self) -> usize {
        self.layout.n_var
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Evaluation> {
        evaluate_objective(self, point)
    }

    /// Largest violation of any row or bound.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(&self.upper)
            .map(|(&v, &u)| (-v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Stage-1 capacities of a point.
    pub fn stage1(&self, x: &[f64]) -> Vec<f64> {
        (0..self.layout.subsystems.len()).map(|i| x[i]).collect()
    }

    /// Lowers every expansion to `max(x2 - x1, 0)`. Feasibility is kept and
    /// the objective can only drop.
    pub fn tighten_expansions(&self, x: &mut [f64]) {
        let l = &self.layout;
        for i in 0..l.subsystems.len() {
            for t in 0..l.totals[i] {
                let need = (x[l.stage2(i, t)] - x[i]).max(0.0);
                let e = l.expansion(i, t);
                if x[e] > need {
                    x[e] = need;
                }
            }
        }
    }

    /// Solves, then tightens the expansions of the returned point.
    pub fn solve(&self, config: &SolverConfig) -> Result<SolveResult> {
        let mut res = solver::solve(self, config)?;
        let mut x = res.point.clone();
        self.tighten_expansions(&mut x);
        let cost = evaluate_objective(self, &x)?.cost;
        if cost <= res.objective && self.max_violation(&x) <= res.feasibility.max(config.feasibility_tol) {
            res.objective = cost;
            res.feasibility = self.max_violation(&x);
            res.point = x;
        }
        Ok(res)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn evaluate_objective(program: &AssembledProgram, point: &[f64]) -> Result<Evaluation> {
    if point.len() != program.n_var() {
        return Err(Error::DimensionMismatch {
            expected: program.n_var(),
            got: point.len(),
        });
    }
    let eps = program.eps;
    let mut gradient = vec![0.0; point.len()];
    let mut cost = 0.0;
    let mut clamped = false;
    for term in &program.objective {
        let mut v = point[term.var];
        if v < 0.0 {
            v = 0.0;
            clamped = true;
        }
        let scale = term.weight * term.coef;
        cost += scale * ((v + eps).powf(term.alpha) - eps.powf(term.alpha));
        gradient[term.var] += scale * term.alpha * (v + eps).powf(term.alpha - 1.0);
    }
    Ok(Evaluation {
        cost,
        gradient,
        clamped,
    })
}

/// Conservative capacities `(I - M)^-1 max(D1, b)`.
pub fn conservative_capacity(subsystems: &[SubsystemSpec], m: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = subsystems.len();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - m[i][j]);
    let b = DVector::from_iterator(n, subsystems.iter().map(|s| s.d1.max(s.d2_high)));
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Invalid("I - M is singular".into()))?;
    Ok(x.iter().copied().collect())
}

/// Closed-form conservative solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicSolution {
    pub capacity: Vec<f64>,
    /// `sum c1 * x^alpha`, unsmoothed.
    pub cost: f64,
}

/// Which origin scenario stands in for a coupling band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representative {
    Lowest,
    #[default]
    LowerMedian,
    UpperMedian,
    Highest,
}

impl Representative {
    fn pick(self, members: &[usize]) -> usize {
        let n = members.len();
        match self {
            Representative::Lowest => members[0],
            Representative::LowerMedian => members[(n - 1) / 2],
            Representative::UpperMedian => members[n / 2],
            Representative::Highest => members[n - 1],
        }
    }
}

/// Encoding of the consistency between coupling bands and origin scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyEncoding {
    pub representative: Representative,
    /// Match the origin's other coordinates to the destination scenario
    /// instead of pinning them at index 0.
    pub align: bool,
    /// Force every origin capacity in a band equal to the representative.
    pub force_equal: bool,
}

impl Default for ConsistencyEncoding {
    fn default() -> Self {
        ConsistencyEncoding {
            representative: Representative::LowerMedian,
            align: true,
            force_equal: false,
        }
    }
}

impl ConsistencyEncoding {
    /// Lowest representative at the origin corner, with equality forcing.
    pub fn literal() -> Self {
        ConsistencyEncoding {
            representative: Representative::Lowest,
            align: false,
            force_equal: true,
        }
    }
}

struct Blueprint<'a> {
    kind: ProgramKind,
    subsystems: &'a [SubsystemSpec],
    m: &'a [Vec<f64>],
    /// Own demand per subsystem per local scenario.
    demand: Vec<Vec<f64>>,
    equalities: Vec<(usize, usize, usize)>,
    eps: f64,
}

fn assemble(bp: Blueprint<'_>, origin_scenario: impl Fn(usize, usize, usize) -> usize) -> Result<AssembledProgram> {
    let n = bp.subsystems.len();
    let ids = bp.subsystems.iter().map(|s| s.id.clone()).collect();
    let totals: Vec<usize> = bp.demand.iter().map(Vec::len).collect();
    let layout = VariableLayout::new(ids, totals);
    let cap = conservative_capacity(bp.subsystems, bp.m)?;

    let mut constraints = Vec::new();
    for i in 0..n {
        let mut terms = vec![(layout.stage1(i), 1.0)];
        for j in 0..n {
            if j != i && bp.m[i][j] > 0.0 {
                terms.push((layout.stage1(j), -bp.m[i][j]));
            }
        }
        constraints.push(Constraint {
            terms,
            relation: Relation::Ge,
            rhs: bp.subsystems[i].d1,
        });
    }
    for i in 0..n {
        for t in 0..layout.totals[i] {
            let mut terms = vec![(layout.stage2(i, t), 1.0)];
            for j in 0..n {
                if j != i && bp.m[i][j] > 0.0 {
                    terms.push((layout.stage2(j, origin_scenario(i, t, j)), -bp.m[i][j]));
                }
            }
            constraints.push(Constraint {
                terms,
                relation: Relation::Ge,
                rhs: bp.demand[i][t],
            });
            constraints.push(Constraint {
                terms: vec![
                    (layout.expansion(i, t), 1.0),
                    (layout.stage2(i, t), -1.0),
                    (layout.stage1(i), 1.0),
                ],
                relation: Relation::Ge,
                rhs: 0.0,
            });
        }
    }
    for &(j, u, anchor) in &bp.equalities {
        constraints.push(Constraint {
            terms: vec![(layout.stage2(j, u), 1.0), (layout.stage2(j, anchor), -1.0)],
            relation: Relation::Eq,
            rhs: 0.0,
        });
    }

    let mut objective = Vec::new();
    let mut upper = vec![0.0; layout.n_var];
    let mut initial_point = vec![0.0; layout.n_var];
    for (i, sub) in bp.subsystems.iter().enumerate() {
        objective.push(ObjectiveTerm {
            var: layout.stage1(i),
            coef: sub.c1,
            alpha: sub.alpha,
            weight: 1.0,
        });
        let total = layout.totals[i];
        let ub = 10.0 * cap[i];
        upper[layout.stage1(i)] = ub;
        initial_point[layout.stage1(i)] = cap[i];
        for t in 0..total {
            objective.push(ObjectiveTerm {
                var: layout.expansion(i, t),
                coef: sub.c2,
                alpha: sub.alpha,
                weight: 1.0 / total as f64,
            });
            upper[layout.stage2(i, t)] = ub;
            upper[layout.expansion(i, t)] = ub;
            initial_point[layout.stage2(i, t)] = cap[i];
        }
    }
    Ok(AssembledProgram {
        kind: bp.kind,
        layout,
        constraints,
        objective,
        upper,
        initial_point,
        eps: bp.eps,
    })
}

/// Worst-case single-scenario program and its closed-form solution.
pub fn build_deterministic(spec: &ProblemSpec) -> Result<(AssembledProgram, DeterministicSolution)> {
    let m = spec.coupling_matrix();
    let demand = spec.subsystems.iter().map(|s| vec![s.d2_high]).collect();
    let program = assemble(
        Blueprint {
            kind: ProgramKind::Deterministic,
            subsystems: &spec.subsystems,
            m: &m,
            demand,
            equalities: Vec::new(),
            eps: spec.smoothing_eps,
        },
        |_, _, _| 0,
    )?;
    let capacity = conservative_capacity(&spec.subsystems, &m)?;
    let cost = spec
        .subsystems
        .iter()
        .zip(&capacity)
        .map(|(s, &x)| s.c1 * x.powf(s.alpha))
        .sum();
    Ok((program, DeterministicSolution { capacity, cost }))
}

/// Every subsystem carries the whole joint scenario tensor.
pub fn build_fully_flexible(spec: &ProblemSpec, grids: &[ScenarioGrid]) -> Result<AssembledProgram> {
    let m = spec.coupling_matrix();
    assemble(
        Blueprint {
            kind: ProgramKind::FullyFlexible,
            subsystems: &spec.subsystems,
            m: &m,
            demand: grids.iter().map(|g| g.demand.clone()).collect(),
            equalities: Vec::new(),
            eps: spec.smoothing_eps,
        },
        |_, t, _| t,
    )
}

/// Fully flexible program from the spec's own scenario counts.
pub fn fully_flexible(spec: &ProblemSpec) -> Result<AssembledProgram> {
    let grids = build_full_grid(spec, &demand_grids(spec)?);
    build_fully_flexible(spec, &grids)
}

/// Fully flexible program restricted to a subset of joint scenarios, each
/// with equal weight.
pub fn build_sample_average(spec: &ProblemSpec, grids: &[ScenarioGrid], subset: &[usize]) -> Result<AssembledProgram> {
    if subset.is_empty() {
        return Err(Error::Invalid("empty scenario subset".into()));
    }
    let m = spec.coupling_matrix();
    assemble(
        Blueprint {
            kind: ProgramKind::SampleAverage,
            subsystems: &spec.subsystems,
            m: &m,
            demand: grids
                .iter()
                .map(|g| subset.iter().map(|&t| g.demand[t]).collect())
                .collect(),
            equalities: Vec::new(),
            eps: spec.smoothing_eps,
        },
        |_, t, _| t,
    )
}

/// Representative own-demand level of band `g` when `levels` are split
/// into `bands`.
fn band_rep(levels: usize, bands: usize, g: usize, rep: Representative) -> usize {
    let map = group_map(levels, bands);
    let members: Vec<usize> = (0..levels).filter(|&s| map[s] == g).collect();
    rep.pick(&members)
}

/// Origin local scenario that stands in for coupling band `m[j]` of
/// destination `i`'s scenario `m`.
fn representative_scenario(local: &LocalGrids, enc: ConsistencyEncoding, i: usize, m: &[usize], j: usize) -> usize {
    let origin = &local.grids[j];
    let levels: Vec<usize> = local.demand.iter().map(|d| d.values.len()).collect();
    let dest_dims = &local.grids[i].dim_sizes;
    let mut um = vec![0; m.len()];
    um[j] = band_rep(levels[j], dest_dims[j], m[j], enc.representative);
    if enc.align {
        for k in 0..m.len() {
            if k == j || origin.dim_sizes[k] == 1 {
                continue;
            }
            let own_k = if k == i {
                m[i]
            } else {
                band_rep(levels[k], dest_dims[k], m[k], enc.representative)
            };
            um[k] = group_map(levels[k], origin.dim_sizes[k])[own_k];
        }
    }
    origin.flat_index(&um)
}

/// Program on locally discretized grids.
pub fn build_locally_discretized(spec: &ProblemSpec, local: &LocalGrids, enc: ConsistencyEncoding) -> Result<AssembledProgram> {
    build_local(spec, local, enc, ProgramKind::LocallyDiscretized)
}

fn build_local(spec: &ProblemSpec, local: &LocalGrids, enc: ConsistencyEncoding, kind: ProgramKind) -> Result<AssembledProgram> {
    let m = spec.coupling_matrix();
    let mut equalities = BTreeSet::new();
    if enc.force_equal {
        let corner = ConsistencyEncoding { align: false, ..enc };
        for link in &local.links {
            let (i, j) = (link.dest, link.origin);
            let origin = &local.grids[j];
            for g in 0..link.s_coupling {
                let mut probe = vec![0; spec.len()];
                probe[j] = g;
                let anchor = representative_scenario(local, corner, i, &probe, j);
                let members = link.members(g);
                for u in 0..origin.total {
                    if u != anchor && members.contains(&origin.multi_index(u)[j]) {
                        equalities.insert((j, u, anchor));
                    }
                }
            }
        }
    }
    let multis: Vec<Vec<Vec<usize>>> = local
        .grids
        .iter()
        .map(|g| (0..g.total).map(|t| g.multi_index(t)).collect())
        .collect();
    assemble(
        Blueprint {
            kind,
            subsystems: &spec.subsystems,
            m: &m,
            demand: local.grids.iter().map(|g| g.demand.clone()).collect(),
            equalities: equalities.into_iter().collect(),
            eps: spec.smoothing_eps,
        },
        |i, t, j| representative_scenario(local, enc, i, &multis[i][t], j),
    )
}

/// Locally discretized program from a plan.
pub fn locally_discretized(spec: &ProblemSpec, plan: &CouplingPlan, enc: ConsistencyEncoding) -> Result<AssembledProgram> {
    let local = build_local_grid(spec, plan)?;
    build_locally_discretized(spec, &local, enc)
}

/// Treatment of couplings that cross a block boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossBlockPolicy {
    /// Coefficient treated as zero.
    #[default]
    Drop,
    /// Origin capacity frozen at its conservative value and added to the
    /// destination's demand.
    FreezeDeterministic,
}

/// Sub-problem over `members` (indices into `spec.subsystems`) with its
/// restricted plan.
pub fn restrict(spec: &ProblemSpec, plan: &CouplingPlan, members: &[usize], policy: CrossBlockPolicy) -> Result<(ProblemSpec, CouplingPlan)> {
    let cap = conservative_capacity(&spec.subsystems, &spec.coupling_matrix())?;
    let inside = |k: usize| members.contains(&k);
    let mut subsystems: Vec<SubsystemSpec> = members.iter().map(|&k| spec.subsystems[k].clone()).collect();
    let mut couplings = Vec::new();
    for c in &spec.couplings {
        let (i, j) = (spec.index_of(&c.dest)?, spec.index_of(&c.origin)?);
        match (inside(i), inside(j)) {
            (true, true) => couplings.push(c.clone()),
            (true, false) if policy == CrossBlockPolicy::FreezeDeterministic => {
                let pos = members.iter().position(|&k| k == i).unwrap();
                let extra = c.d_coef * cap[j];
                let s = &mut subsystems[pos];
                s.d1 += extra;
                s.d2_low += extra;
                s.d2_high += extra;
            }
            _ => {}
        }
    }
    let sub = ProblemSpec {
        subsystems,
        couplings,
        ..spec.clone()
    };
    Ok((sub, plan.restrict(members)))
}

/// Locally discretized program of one block with cross-block couplings
/// removed per `policy`.
pub fn build_standalone(
    spec: &ProblemSpec,
    members: &[usize],
    plan: &CouplingPlan,
    enc: ConsistencyEncoding,
    policy: CrossBlockPolicy,
) -> Result<AssembledProgram> {
    if members.is_empty() {
        return Err(Error::Partition("empty block".into()));
    }
    let (sub, sub_plan) = restrict(spec, plan, members, policy)?;
    let local = build_local_grid(&sub, &sub_plan)?;
    build_local(&sub, &local, enc, ProgramKind::Standalone)
}
