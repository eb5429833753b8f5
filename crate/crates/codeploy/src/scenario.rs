//! Demand discretization, scenario tensors and the consistency mapping.
//!
//! All indices are 0-based. Flat indices put the first subsystem's
//! dimension fastest.

use std::io::Write;

use serde::Serialize;

use crate::coupling::CouplingPlan;
use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Equal-increment demand levels of one subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandGrid {
    pub subsystem: String,
    pub values: Vec<f64>,
}

/// Discretizes `[a, b]` into `s` levels, endpoints included. A single level
/// sits at the midpoint.
pub fn discretize_demand(subsystem: &str, a: f64, b: f64, s: usize) -> Result<DemandGrid> {
    if s == 0 || a.is_nan() || b.is_nan() || a > b {
        return Err(Error::Invalid(format!(
            "cannot discretize [{a}, {b}] into {s} levels"
        )));
    }
    let values = if s == 1 {
        vec![0.5 * (a + b)]
    } else {
        let step = (b - a) / (s - 1) as f64;
        (0..s)
            .map(|k| if k == s - 1 { b } else { a + k as f64 * step })
            .collect()
    };
    Ok(DemandGrid {
        subsystem: subsystem.to_string(),
        values,
    })
}

/// Demand grids for every subsystem at its own `s_own`.
pub fn demand_grids(spec: &ProblemSpec) -> Result<Vec<DemandGrid>> {
    spec.subsystems
        .iter()
        .map(|s| discretize_demand(&s.id, s.d2_low, s.d2_high, s.s_own))
        .collect()
}

pub fn flat_index(multi: &[usize], dims: &[usize]) -> Result<usize> {
    if multi.len() != dims.len() {
        return Err(Error::Invalid(format!(
            "multi-index has {} entries for {} dimensions",
            multi.len(),
            dims.len()
        )));
    }
    let mut flat = 0;
    let mut stride = 1;
    for (dim, (&m, &size)) in multi.iter().zip(dims).enumerate() {
        if m >= size {
            return Err(Error::IndexOutOfRange { index: m, dim, size });
        }
        flat += m * stride;
        stride *= size;
    }
    Ok(flat)
}

pub fn multi_index(flat: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if flat >= total {
        return Err(Error::IndexOutOfRange {
            index: flat,
            dim: 0,
            size: total,
        });
    }
    let mut rest = flat;
    Ok(dims
        .iter()
        .map(|&d| {
            let m = rest % d;
            rest /= d;
            m
        })
        .collect())
}

/// A subsystem's local scenario tensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioGrid {
    pub owner: usize,
    pub dim_sizes: Vec<usize>,
    pub total: usize,
    /// Own Stage-2 demand per flat scenario.
    pub demand: Vec<f64>,
}

impl ScenarioGrid {
    fn new(owner: usize, dim_sizes: Vec<usize>, grid: &DemandGrid) -> Self {
        let total: usize = dim_sizes.iter().product();
        let stride: usize = dim_sizes[..owner].iter().product();
        let own = dim_sizes[owner];
        let demand = (0..total)
            .map(|t| grid.values[(t / stride) % own])
            .collect();
        ScenarioGrid {
            owner,
            dim_sizes,
            total,
            demand,
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        self.dim_sizes
            .iter()
            .map(|&d| {
                let m = rest % d;
                rest /= d;
                m
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        let mut stride = 1;
        for (&m, &d) in multi.iter().zip(&self.dim_sizes) {
            flat += m * stride;
            stride *= d;
        }
        flat
    }

    /// Writes `flat,i_<dim>...,demand` rows.
    pub fn write_csv<W: Write>(&self, ids: &[&str], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["flat".to_string()];
        header.extend(ids.iter().map(|id| format!("i_{id}")));
        header.push("demand".into());
        w.write_record(&header)?;
        for t in 0..self.total {
            let mut row = vec![t.to_string()];
            row.extend(self.multi_index(t).iter().map(|m| m.to_string()));
            row.push(self.demand[t].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every subsystem sees the shared global tensor.
pub fn build_full_grid(spec: &ProblemSpec, grids: &[DemandGrid]) -> Vec<ScenarioGrid> {
    let dims: Vec<usize> = grids.iter().map(|g| g.values.len()).collect();
    (0..spec.len())
        .map(|i| ScenarioGrid::new(i, dims.clone(), &grids[i]))
        .collect()
}

/// Maps origin own-demand levels onto coupling bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingLink {
    pub dest: usize,
    pub origin: usize,
    pub s_coupling: usize,
    /// Band of each origin own-demand index.
    pub group_of: Vec<usize>,
}

impl CouplingLink {
    pub fn new(dest: usize, origin: usize, s_coupling: usize, s_origin: usize) -> Self {
        CouplingLink {
            dest,
            origin,
            s_coupling,
            group_of: group_map(s_origin, s_coupling),
        }
    }

    /// Origin own-demand indices in band `g`, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group_of.len())
            .filter(|&s| self.group_of[s] == g)
            .collect()
    }
}

/// `group(s) = ceil((s+1) * bands / levels) - 1`.
pub fn group_map(levels: usize, bands: usize) -> Vec<usize> {
    (0..levels)
        .map(|s| ((s + 1) * bands).div_ceil(levels) - 1)
        .collect()
}

/// Locally discretized tensors plus one link per ordered pair with a
/// coupling dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalGrids {
    pub demand: Vec<DemandGrid>,
    pub grids: Vec<ScenarioGrid>,
    pub links: Vec<CouplingLink>,
}

impl LocalGrids {
    pub fn link(&self, dest: usize, origin: usize) -> Option<&CouplingLink> {
        self.links
            .iter()
            .find(|l| l.dest == dest && l.origin == origin)
    }
}

/// Owner `i` gets `S_i` on its own axis and `min(S_ij, S_j)` on axis `j`.
pub fn build_local_grid(spec: &ProblemSpec, plan: &CouplingPlan) -> Result<LocalGrids> {
    let demand = demand_grids(spec)?;
    let n = spec.len();
    let m = spec.coupling_matrix();
    let mut grids = Vec::with_capacity(n);
    let mut links = Vec::new();
    for i in 0..n {
        let mut dims = vec![1; n];
        for j in 0..n {
            if j == i {
                dims[j] = demand[i].values.len();
            } else if m[i][j] > 0.0 {
                // bands group the origin's own levels, so extra bands would be empty
                dims[j] = plan.s_coupling[i][j].clamp(1, demand[j].values.len());
                links.push(CouplingLink::new(i, j, dims[j], demand[j].values.len()));
            }
        }
        grids.push(ScenarioGrid::new(i, dims, &demand[i]));
    }
    Ok(LocalGrids {
        demand,
        grids,
        links,
    })
}
