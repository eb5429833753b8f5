//! Primal-dual interior-point solver for linearly constrained programs with
//! separable smoothed power-law objectives.
//!
//! Rows are scaled to unit max coefficient. Concave curvature is dropped
//! from the Hessian, so each Newton system is `G'ΣG + Σ_bounds` plus the
//! equality rows in quasidefinite form. Steps are globalized with an l1
//! merit function. The returned point never costs more than the start.

mod ldl;

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stochprog::{evaluate_objective, AssembledProgram, Relation};
use ldl::SymbolicLdl;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// `None` means `100 * n_var`.
    pub max_iterations: Option<usize>,
    pub feasibility_tol: f64,
    pub stationarity_tol: f64,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: None,
            feasibility_tol: 1e-6,
            stationarity_tol: 1e-6,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub point: Vec<f64>,
    pub objective: f64,
    pub stage1: Vec<f64>,
    /// Max violation on normalized rows and bounds.
    pub feasibility: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The interior-point result was worse than the start, which was kept.
    pub kept_start: bool,
    #[serde(serialize_with = "secs")]
    pub wall_time: Duration,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SolveResult {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "objective", "feasibility", "barrier"])?;
        for r in &self.trace {
            w.write_record(&[
                r.iteration.to_string(),
                r.objective.to_string(),
                r.feasibility.to_string(),
                r.barrier.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compressed sparse rows.
struct Rows {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            ptr: vec![0],
            col: Vec::new(),
            val: Vec::new(),
            rhs: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn push(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let scale = terms.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs())).max(f64::MIN_POSITIVE);
        for &(k, a) in terms {
            self.col.push(k);
            self.val.push(a / scale);
        }
        self.rhs.push(rhs / scale);
        self.ptr.push(self.col.len());
    }

    fn row(&self, r: usize) -> std::ops::Range<usize> {
        self.ptr[r]..self.ptr[r + 1]
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|r| self.row(r).map(|p| self.val[p] * x[self.col[p]]).sum())
            .collect()
    }

    /// `out += A' y`.
    fn add_tmul(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for p in self.row(r) {
                    out[self.col[p]] += self.val[p] * yr;
                }
            }
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Largest step in (0, 1] keeping `v + a*dv >= (1 - tau) v`.
fn max_step(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -tau * v / d)
        .fold(1.0, f64::min)
}

pub fn solve(program: &AssembledProgram, config: &SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let n = program.n_var();
    let x0 = &program.initial_point;
    let v0 = program.max_violation(x0);
    if v0 > config.feasibility_tol {
        return Err(Error::InfeasibleStart { violation: v0 });
    }
    let f0 = evaluate_objective(program, x0)?.cost;
    let max_iter = config.max_iterations.unwrap_or(100 * n.max(1));

    let mut g = Rows::new();
    let mut e = Rows::new();
    for c in &program.constraints {
        match c.relation {
            Relation::Ge => g.push(&c.terms, c.rhs),
            Relation::Eq => e.push(&c.terms, c.rhs),
        }
    }
    let (mg, me) = (g.len(), e.len());
    let ub = &program.upper;

    // pattern: G'G pairs, equality rows in the border, diagonal everywhere
    let mut edges = Vec::new();
    for r in 0..mg {
        let rr = g.row(r);
        for p in rr.clone() {
            for q in rr.start..p {
                edges.push((g.col[p], g.col[q]));
            }
        }
    }
    for r in 0..me {
        for p in e.row(r) {
            edges.push((n + r, e.col[p]));
        }
    }
    let dim = n + me;
    let sym = SymbolicLdl::analyse(dim, &edges);
    let mut g_slots = Vec::new();
    for r in 0..mg {
        let rr = g.row(r);
        for p in rr.clone() {
            for q in rr.start..=p {
                g_slots.push(sym.slot(g.col[p], g.col[q]));
            }
        }
    }
    let diag_slots: Vec<usize> = (0..dim).map(|k| sym.slot(k, k)).collect();
    let mut e_slots = Vec::new();
    for r in 0..me {
        for p in e.row(r) {
            e_slots.push(sym.slot(n + r, e.col[p]));
        }
    }
    let sign: Vec<f64> = (0..dim).map(|k| if k < n { 1.0 } else { -1.0 }).collect();
    let mut kvals = vec![0.0; sym.value_len()];

    let tol = config.stationarity_tol;
    let push = 1e-2;
    let mut x: Vec<f64> = x0
        .iter()
        .zip(ub)
        .map(|(&v, &u)| v.max(push).min(u - push * u.max(1.0)))
        .collect();
    let mut s: Vec<f64> = g.mul(&x).iter().zip(&g.rhs).map(|(a, h)| (a - h).max(push)).collect();
    let mut mu = 0.1;
    let mut lam: Vec<f64> = s.iter().map(|&v| mu / v).collect();
    let mut zl: Vec<f64> = x.iter().map(|&v| mu / v).collect();
    let mut zu: Vec<f64> = x.iter().zip(ub).map(|(&v, &u)| mu / (u - v)).collect();
    let mut nu = vec![0.0; me];
    let mut rho: f64 = 1.0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let merit = |x: &[f64], s: &[f64], mu: f64, rho: f64| -> f64 {
        let f = evaluate_objective(program, x).map(|ev| ev.cost).unwrap_or(f64::INFINITY);
        let mut barrier = 0.0;
        for &v in s {
            barrier += v.ln();
        }
        for (&v, &u) in x.iter().zip(ub) {
            barrier += v.ln() + (u - v).ln();
        }
        let gx = g.mul(x);
        let ex = e.mul(x);
        let infeas: f64 = (0..mg).map(|r| (gx[r] - s[r] - g.rhs[r]).abs()).sum::<f64>()
            + (0..me).map(|r| (ex[r] - e.rhs[r]).abs()).sum::<f64>();
        f - mu * barrier + rho * infeas
    };

    loop {
        let ev = evaluate_objective(program, &x)?;
        let grad = ev.gradient;
        let gx = g.mul(&x);
        let rp: Vec<f64> = (0..mg).map(|r| gx[r] - s[r] - g.rhs[r]).collect();
        let ex = e.mul(&x);
        let re: Vec<f64> = (0..me).map(|r| ex[r] - e.rhs[r]).collect();
        let mut rd = grad.clone();
        for k in 0..n {
            rd[k] += -zl[k] + zu[k];
        }
        let neg_lam: Vec<f64> = lam.iter().map(|v| -v).collect();
        g.add_tmul(&neg_lam, &mut rd);
        let neg_nu: Vec<f64> = nu.iter().map(|v| -v).collect();
        e.add_tmul(&neg_nu, &mut rd);

        let sc = (1.0f64).max((one_norm(&lam) + one_norm(&zl) + one_norm(&zu)) / (mg + 2 * n) as f64 / 100.0);
        let primal = inf_norm(&rp).max(inf_norm(&re));
        let comp = |m: f64| {
            let mut c = 0.0f64;
            for r in 0..mg {
                c = c.max((lam[r] * s[r] - m).abs());
            }
            for k in 0..n {
                c = c.max((zl[k] * x[k] - m).abs());
                c = c.max((zu[k] * (ub[k] - x[k]) - m).abs());
            }
            c
        };
        let err = |m: f64| (inf_norm(&rd) / sc).max(primal).max(comp(m) / sc);
        if config.trace {
            trace.push(TraceRow {
                iteration: iterations,
                objective: ev.cost,
                feasibility: primal,
                barrier: mu,
            });
        }
        if err(0.0) <= tol && primal <= config.feasibility_tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        if mu > tol / 10.0 * (1.0 + 1e-12) && err(mu) <= 10.0 * mu {
            mu = (tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)));
            continue;
        }
        iterations += 1;

        let sg: Vec<f64> = (0..mg).map(|r| lam[r] / s[r]).collect();
        let sl: Vec<f64> = (0..n).map(|k| zl[k] / x[k]).collect();
        let su: Vec<f64> = (0..n).map(|k| zu[k] / (ub[k] - x[k])).collect();

        kvals.iter_mut().for_each(|v| *v = 0.0);
        let mut slot = 0;
        for r in 0..mg {
            let rr = g.row(r);
            for p in rr.clone() {
                for q in rr.start..=p {
                    kvals[g_slots[slot]] += sg[r] * g.val[p] * g.val[q];
                    slot += 1;
                }
            }
        }
        for k in 0..n {
            kvals[diag_slots[k]] += sl[k] + su[k] + 1e-8;
        }
        for r in 0..me {
            kvals[diag_slots[n + r]] -= 1e-10;
        }
        for (p, &sl) in e_slots.iter().enumerate() {
            kvals[sl] += e.val[p];
        }
        let fact = sym.factor(&kvals, &sign, 1e-14);

        let mut rhs = vec![0.0; dim];
        for k in 0..n {
            rhs[k] = -grad[k] + mu / x[k] - mu / (ub[k] - x[k]);
        }
        e.add_tmul(&nu, &mut rhs[..n]);
        let gy: Vec<f64> = (0..mg).map(|r| mu / s[r] - sg[r] * rp[r]).collect();
        g.add_tmul(&gy, &mut rhs[..n]);
        for r in 0..me {
            rhs[n + r] = -re[r];
        }
        let sol = sym.solve(&fact, &rhs);
        let dx = &sol[..n];
        let dnu: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
        let gdx = g.mul(dx);
        let ds: Vec<f64> = (0..mg).map(|r| gdx[r] + rp[r]).collect();
        let dlam: Vec<f64> = (0..mg).map(|r| mu / s[r] - lam[r] - sg[r] * ds[r]).collect();
        let dzl: Vec<f64> = (0..n).map(|k| mu / x[k] - zl[k] - sl[k] * dx[k]).collect();
        let dzu: Vec<f64> = (0..n).map(|k| mu / (ub[k] - x[k]) - zu[k] + su[k] * dx[k]).collect();

        let tau = (1.0 - mu).max(0.99);
        let gap_u: Vec<f64> = (0..n).map(|k| ub[k] - x[k]).collect();
        let neg_dx: Vec<f64> = dx.iter().map(|v| -v).collect();
        let ap = max_step(&s, &ds, tau)
            .min(max_step(&x, dx, tau))
            .min(max_step(&gap_u, &neg_dx, tau));
        let ad = max_step(&lam, &dlam, tau)
            .min(max_step(&zl, &dzl, tau))
            .min(max_step(&zu, &dzu, tau));

        let mut dphi = 0.0;
        for k in 0..n {
            dphi += (grad[k] - mu / x[k] + mu / (ub[k] - x[k])) * dx[k];
        }
        for r in 0..mg {
            dphi -= mu * ds[r] / s[r];
        }
        let infeas = one_norm(&rp) + one_norm(&re);
        if infeas > 1e-12 && dphi > 0.0 {
            rho = rho.max(dphi / (0.5 * infeas) + 1.0);
        }
        let slope = dphi - rho * infeas;
        let m0 = merit(&x, &s, mu, rho);
        let mut a = ap;
        let trial = |a: f64| -> (Vec<f64>, Vec<f64>) {
            (
                x.iter().zip(dx).map(|(v, d)| v + a * d).collect(),
                s.iter().zip(&ds).map(|(v, d)| v + a * d).collect(),
            )
        };
        let (mut xn, mut sn) = trial(a);
        while a > 1e-12 {
            if merit(&xn, &sn, mu, rho) <= m0 + 1e-4 * a * slope {
                break;
            }
            a *= 0.5;
            (xn, sn) = trial(a);
        }
        x = xn;
        s = sn;
        for r in 0..mg {
            lam[r] = (lam[r] + ad * dlam[r]).clamp(mu / (1e10 * s[r]), 1e10 * mu / s[r]);
        }
        for k in 0..n {
            zl[k] = (zl[k] + ad * dzl[k]).clamp(mu / (1e10 * x[k]), 1e10 * mu / x[k]);
            let gap = ub[k] - x[k];
            zu[k] = (zu[k] + ad * dzu[k]).clamp(mu / (1e10 * gap), 1e10 * mu / gap);
        }
        for r in 0..me {
            nu[r] += ad * dnu[r];
        }
    }

    let fx = evaluate_objective(program, &x)?.cost;
    let vx = program.max_violation(&x);
    let usable = fx.is_finite() && vx <= config.feasibility_tol && fx <= f0 + 1e-9;
    let (point, objective, feasibility, kept_start) = if usable {
        (x, fx, vx, false)
    } else {
        (x0.clone(), f0, v0, true)
    };
    Ok(SolveResult {
        stage1: program.stage1(&point),
        point,
        objective,
        feasibility,
        iterations,
        converged,
        kept_start,
        wall_time: start.elapsed(),
        trace,
    })
}
