//! Declarative problem description and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subsystem with its cost curve and demand interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSpec {
    pub id: String,
    /// Stage-1 unit cost.
    pub c1: f64,
    /// Stage-2 unit cost.
    pub c2: f64,
    /// Cost exponent, `0 < alpha <= 1`.
    pub alpha: f64,
    /// Known Stage-1 demand.
    pub d1: f64,
    /// Lower end of the uniform Stage-2 demand interval.
    pub d2_low: f64,
    /// Upper end of the uniform Stage-2 demand interval.
    pub d2_high: f64,
    /// Number of own-demand scenarios.
    pub s_own: usize,
}

/// Demand added to `dest` per unit of `origin` capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub dest: String,
    pub origin: String,
    pub d_coef: f64,
}

fn default_saa_fraction() -> f64 {
    0.05
}

fn default_eps() -> f64 {
    1e-8
}

/// Full problem: subsystems in tensor-dimension order plus couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub subsystems: Vec<SubsystemSpec>,
    #[serde(default)]
    pub couplings: Vec<CouplingSpec>,
    #[serde(default = "default_saa_fraction")]
    pub saa_fraction: f64,
    #[serde(default = "default_eps")]
    pub smoothing_eps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(subsystems: Vec<SubsystemSpec>, couplings: Vec<CouplingSpec>) -> Self {
        ProblemSpec {
            subsystems,
            couplings,
            saa_fraction: default_saa_fraction(),
            smoothing_eps: default_eps(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of subsystems.
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::UnknownSubsystem(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.subsystems.iter().map(|s| s.id.as_str()).collect()
    }

    /// Dense `N x N` matrix with `m[i][j] = d_ij`. Unknown ids are skipped;
    /// call [`validate`] first.
    pub fn coupling_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for c in &self.couplings {
            if let (Ok(i), Ok(j)) = (self.index_of(&c.dest), self.index_of(&c.origin)) {
                if i != j {
                    m[i][j] += c.d_coef;
                }
            }
        }
        m
    }

    /// Same problem with every subsystem's `s_own` replaced.
    pub fn with_scenarios(&self, s: usize) -> Self {
        let mut out = self.clone();
        for sub in &mut out.subsystems {
            sub.s_own = s;
        }
        out
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    /// Converts a failing report into an error listing every issue.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            return Ok(());
        }
        let msg = self
            .issues
            .iter()
            .map(|i| format!("{}: {}", i.location, i.message))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Invalid(msg))
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            location: location.into(),
            message: message.into(),
        });
    }
}

/// Checks every invariant of the problem description.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    if spec.subsystems.is_empty() {
        report.push("subsystems", "at least one subsystem is required");
    }
    for (k, s) in spec.subsystems.iter().enumerate() {
        let loc = format!("subsystems[{k}] ({})", s.id);
        if spec.subsystems[..k].iter().any(|o| o.id == s.id) {
            report.push(&loc, "duplicate id");
        }
        if !(s.c1 > 0.0 && s.c1.is_finite()) {
            report.push(&loc, format!("c1 must be positive, got {}", s.c1));
        }
        if !(s.c2 > 0.0 && s.c2.is_finite()) {
            report.push(&loc, format!("c2 must be positive, got {}", s.c2));
        }
        if !(s.alpha > 0.0 && s.alpha <= 1.0) {
            report.push(&loc, format!("alpha must lie in (0, 1], got {}", s.alpha));
        }
        if !(s.d1 >= 0.0 && s.d1.is_finite()) {
            report.push(&loc, format!("d1 must be nonnegative, got {}", s.d1));
        }
        if !(s.d2_low >= 0.0 && s.d2_low <= s.d2_high && s.d2_high.is_finite()) {
            report.push(
                &loc,
                format!("need 0 <= d2_low <= d2_high, got [{}, {}]", s.d2_low, s.d2_high),
            );
        }
        if s.s_own == 0 {
            report.push(&loc, "s_own must be at least 1");
        }
    }
    let mut seen = Vec::new();
    let mut refs_ok = true;
    for (k, c) in spec.couplings.iter().enumerate() {
        let loc = format!("couplings[{k}] ({} <- {})", c.dest, c.origin);
        let i = spec.index_of(&c.dest);
        let j = spec.index_of(&c.origin);
        if i.is_err() {
            report.push(&loc, format!("unknown dest `{}`", c.dest));
        }
        if j.is_err() {
            report.push(&loc, format!("unknown origin `{}`", c.origin));
        }
        if c.dest == c.origin {
            report.push(&loc, "dest and origin must differ");
        }
        if !(c.d_coef >= 0.0 && c.d_coef.is_finite()) {
            report.push(&loc, format!("d_coef must be nonnegative, got {}", c.d_coef));
        }
        if let (Ok(i), Ok(j)) = (i, j) {
            if seen.contains(&(i, j)) {
                report.push(&loc, "duplicate coupling for this ordered pair");
            }
            seen.push((i, j));
        } else {
            refs_ok = false;
        }
    }
    if !(spec.saa_fraction > 0.0 && spec.saa_fraction <= 1.0) {
        report.push("saa_fraction", format!("must lie in (0, 1], got {}", spec.saa_fraction));
    }
    if !(spec.smoothing_eps > 0.0 && spec.smoothing_eps.is_finite()) {
        report.push("smoothing_eps", format!("must be positive, got {}", spec.smoothing_eps));
    }
    if refs_ok && !spec.subsystems.is_empty() {
        let rho = spectral_radius(&spec.coupling_matrix());
        if rho.is_nan() || rho >= 1.0 {
            report.push(
                "couplings",
                format!("spectral radius of the coupling matrix is {rho:.6}, must be below 1"),
            );
        }
    }
    report
}

/// Spectral radius of a square matrix via the Gelfand limit
/// `rho = lim ||A^m||^(1/m)`, evaluated by repeated squaring.
pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 0.0;
    }
    let norm = |a: &[Vec<f64>]| {
        a.iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut a = m.to_vec();
    let s = norm(&a);
    if s == 0.0 {
        return 0.0;
    }
    for row in &mut a {
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    // a = A^p / exp(log_scale)
    let mut log_scale = s.ln();
    let mut p = 1.0f64;
    for _ in 0..60 {
        let mut b = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i][k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    b[i][j] += aik * a[k][j];
                }
            }
        }
        log_scale *= 2.0;
        p *= 2.0;
        let s = norm(&b);
        if s == 0.0 {
            return 0.0;
        }
        for row in &mut b {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        log_scale += s.ln();
        a = b;
    }
    (log_scale / p).exp()
}
