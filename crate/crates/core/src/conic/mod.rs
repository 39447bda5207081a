//! Primal-dual interior-point solver for linear objectives over linear
//! equalities, ranged rows, variable bounds and rotated second-order cones.
//!
//! ```text
//! minimize    c'x
//! subject to  A x = b
//!             lo_r <= a_r'x <= hi_r
//!             lo <= x <= hi
//!             2 u(x) v(x) >= |w(x)|^2,  u(x), v(x) >= 0
//! ```
//!
//! Cone entries are affine expressions of the variables, so a variable may
//! feed several cones without auxiliary copies. The solver runs a
//! homogeneous self-dual embedding with Mehrotra predictor-corrector steps and
//! Nesterov-Todd scaling, so infeasible and unbounded programs come back with
//! a ray certificate instead of an iteration-limit failure.

mod cones;
mod dump;
mod ipm;
mod kkt;
mod ldl;
mod standard;

pub use dump::dump_program;

use thiserror::Error;

/// Sparse affine function `constant + sum(coef * x[index])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn var(index: usize) -> Self {
        Self::scaled(index, 1.0)
    }

    pub fn scaled(index: usize, coef: f64) -> Self {
        Self {
            terms: vec![(index, coef)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

impl From<usize> for AffineExpr {
    fn from(index: usize) -> Self {
        AffineExpr::var(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `lo <= terms'x <= hi`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// `2 u v >= sum(w_k^2)` with `u, v >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCone {
    pub u: AffineExpr,
    pub v: AffineExpr,
    pub w: Vec<AffineExpr>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    /// Constant added to the reported objective value.
    pub objective_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<Equality>,
    pub rows: Vec<RangeRow>,
    pub cones: Vec<RotatedCone>,
    /// Optional variable names, used by the text dump only.
    pub names: Vec<String>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.add_named_var(lo, hi, cost, String::new())
    }

    pub fn add_named_var(&mut self, lo: f64, hi: f64, cost: f64, name: impl Into<String>) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.equalities.push(Equality { terms, rhs });
        self.equalities.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, lo: f64, hi: f64) -> usize {
        self.rows.push(RangeRow { terms, lo, hi });
        self.rows.len() - 1
    }

    pub fn add_cone(&mut self, u: AffineExpr, v: AffineExpr, w: Vec<AffineExpr>) -> usize {
        self.cones.push(RotatedCone { u, v, w });
        self.cones.len() - 1
    }

    /// Checks dimensions, finiteness and bound ordering.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(ConicError::InvalidProgram(format!(
                "{} objective entries but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(ConicError::InvalidProgram(format!(
                "objective coefficient {j} is not finite"
            )));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(ConicError::InvalidProgram(format!(
                    "variable {j} has bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        let check_terms = |what: &str, terms: &[(usize, f64)]| -> Result<(), ConicError> {
            for &(j, c) in terms {
                if j >= n {
                    return Err(ConicError::InvalidProgram(format!(
                        "{what} references variable {j} of {n}"
                    )));
                }
                if !c.is_finite() {
                    return Err(ConicError::InvalidProgram(format!(
                        "{what} has a non-finite coefficient"
                    )));
                }
            }
            Ok(())
        };
        for (i, e) in self.equalities.iter().enumerate() {
            check_terms(&format!("equality {i}"), &e.terms)?;
            if !e.rhs.is_finite() {
                return Err(ConicError::InvalidProgram(format!(
                    "equality {i} has a non-finite rhs"
                )));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            check_terms(&format!("row {i}"), &r.terms)?;
            if r.lo.is_nan() || r.hi.is_nan() || r.lo > r.hi {
                return Err(ConicError::InvalidProgram(format!(
                    "row {i} has range [{}, {}]",
                    r.lo, r.hi
                )));
            }
        }
        for (i, k) in self.cones.iter().enumerate() {
            let what = format!("cone {i}");
            check_terms(&what, &k.u.terms)?;
            check_terms(&what, &k.v.terms)?;
            for w in &k.w {
                check_terms(&what, &w.terms)?;
            }
            let consts = std::iter::once(k.u.constant)
                .chain(std::iter::once(k.v.constant))
                .chain(k.w.iter().map(|w| w.constant));
            if consts.into_iter().any(|c| !c.is_finite()) {
                return Err(ConicError::InvalidProgram(format!(
                    "{what} has a non-finite constant"
                )));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The constraints admit no point; the dual fields hold a Farkas ray.
    Infeasible,
    /// The objective is unbounded below; `x` holds a primal ray.
    Unbounded,
    /// `max_iter` reached; the best iterate seen is attached.
    IterationLimit,
}

/// Stopping tolerances, relative to the problem data norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub infeas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-8,
            gap_abs: 1e-8,
            gap_rel: 1e-8,
            infeas: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: Tolerances,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            max_iter: 200,
        }
    }
}

/// Internal convergence measures at the returned iterate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Solver output. Duals follow the Lagrangian
/// `c'x + y'(Ax - b) - zl'(x - lo) - zu'(hi - x) - ... - sum(zeta_k' cone_k(x))`
/// so bound, row and cone multipliers are all nonnegative / dual-cone members.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub eq_dual: Vec<f64>,
    pub lower_dual: Vec<f64>,
    pub upper_dual: Vec<f64>,
    pub row_lower_dual: Vec<f64>,
    pub row_upper_dual: Vec<f64>,
    /// Per cone: `(zeta_u, zeta_v, zeta_w...)`, a member of the rotated cone.
    pub cone_dual: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub iterations: usize,
    pub residuals: Residuals,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("invalid conic program: {0}")]
    InvalidProgram(String),
    #[error("numerical breakdown at iteration {iteration}: {reason}")]
    NumericalBreakdown { iteration: usize, reason: String },
}

/// Solves `program` with the given settings.
pub fn solve(
    program: &ConicProgram,
    settings: &SolverSettings,
) -> Result<ConicSolution, ConicError> {
    program.validate()?;
    let std_form = standard::StandardForm::from_program(program);
    let raw = ipm::solve_standard(&std_form, settings)?;
    Ok(std_form.recover(program, raw))
}

/// Solves with default settings.
pub fn solve_default(program: &ConicProgram) -> Result<ConicSolution, ConicError> {
    solve(program, &SolverSettings::default())
}

#[cfg(test)]
mod tests;
