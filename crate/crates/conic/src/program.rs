//! Problem description layer: linear objective over variables with optional
//! box bounds, subject to linear equalities, linear inequalities, and
//! second-order cone blocks ‖tail(x)‖₂ ≤ head(x).

use std::fmt;

use crate::cone::ConeDims;
use crate::dense::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Affine expression Σ coefᵢ·x(colᵢ) + constant.
#[derive(Clone, Debug, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(col: usize) -> LinExpr {
        LinExpr {
            terms: vec![(col, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> LinExpr {
        LinExpr {
            terms: Vec::new(),
            constant: value,
        }
    }
}

/// ‖tail(x)‖₂ ≤ head(x)
#[derive(Clone, Debug)]
pub struct SocBlock {
    pub head: LinExpr,
    pub tail: Vec<LinExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgramError {
    ColumnOutOfRange { col: usize, n: usize },
    EmptySocTail,
    EmptyBoundInterval { col: usize },
    NoConeConstraints,
    NonFinite(&'static str),
}

impl fmt::Display for ProgramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramError::ColumnOutOfRange { col, n } => {
                write!(f, "column index {col} out of range for {n} variables")
            }
            ProgramError::EmptySocTail => write!(f, "second-order cone block with empty tail"),
            ProgramError::EmptyBoundInterval { col } => {
                write!(f, "variable {col} has lower bound above upper bound")
            }
            ProgramError::NoConeConstraints => {
                write!(f, "program has no inequality, bound, or cone constraints")
            }
            ProgramError::NonFinite(what) => write!(f, "non-finite coefficient in {what}"),
        }
    }
}

impl std::error::Error for ProgramError {}

#[derive(Clone, Debug)]
pub struct ConicProgram {
    n: usize,
    sense: Sense,
    objective: Vec<f64>,
    objective_constant: f64,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    ineq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    soc_blocks: Vec<SocBlock>,
}

impl ConicProgram {
    pub fn new(n_vars: usize, sense: Sense) -> ConicProgram {
        ConicProgram {
            n: n_vars,
            sense,
            objective: vec![0.0; n_vars],
            objective_constant: 0.0,
            lower: vec![None; n_vars],
            upper: vec![None; n_vars],
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            soc_blocks: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn set_objective_term(&mut self, col: usize, coef: f64) {
        self.objective[col] = coef;
    }

    pub fn add_objective_constant(&mut self, value: f64) {
        self.objective_constant += value;
    }

    pub fn set_lower(&mut self, col: usize, bound: f64) {
        self.lower[col] = Some(bound);
    }

    pub fn set_upper(&mut self, col: usize, bound: f64) {
        self.upper[col] = Some(bound);
    }

    /// Σ terms = rhs
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.eq_rows.push((terms, rhs));
    }

    /// Σ terms ≤ rhs
    pub fn add_ineq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.ineq_rows.push((terms, rhs));
    }

    pub fn add_soc(&mut self, head: LinExpr, tail: Vec<LinExpr>) {
        self.soc_blocks.push(SocBlock { head, tail });
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let check_col = |col: usize| {
            if col >= self.n {
                Err(ProgramError::ColumnOutOfRange { col, n: self.n })
            } else {
                Ok(())
            }
        };
        for v in &self.objective {
            if !v.is_finite() {
                return Err(ProgramError::NonFinite("objective"));
            }
        }
        for (terms, rhs) in self.eq_rows.iter().chain(self.ineq_rows.iter()) {
            if !rhs.is_finite() {
                return Err(ProgramError::NonFinite("constraint rhs"));
            }
            for &(col, coef) in terms {
                check_col(col)?;
                if !coef.is_finite() {
                    return Err(ProgramError::NonFinite("constraint coefficient"));
                }
            }
        }
        for col in 0..self.n {
            if let (Some(lo), Some(up)) = (self.lower[col], self.upper[col]) {
                if lo > up {
                    return Err(ProgramError::EmptyBoundInterval { col });
                }
            }
        }
        for block in &self.soc_blocks {
            if block.tail.is_empty() {
                return Err(ProgramError::EmptySocTail);
            }
            for expr in std::iter::once(&block.head).chain(block.tail.iter()) {
                if !expr.constant.is_finite() {
                    return Err(ProgramError::NonFinite("soc constant"));
                }
                for &(col, coef) in &expr.terms {
                    check_col(col)?;
                    if !coef.is_finite() {
                        return Err(ProgramError::NonFinite("soc coefficient"));
                    }
                }
            }
        }
        let n_bound_rows = self.lower.iter().flatten().count() + self.upper.iter().flatten().count();
        if self.ineq_rows.is_empty() && n_bound_rows == 0 && self.soc_blocks.is_empty() {
            return Err(ProgramError::NoConeConstraints);
        }
        Ok(())
    }

    /// Lower the program to the standard form
    ///   min cᵀx  s.t.  A x = b,  G x + s = h,  s ∈ R₊ˡ × Q(q₁) × …
    /// Cone rows are ordered: inequalities, lower bounds, upper bounds, then
    /// one contiguous block per second-order cone (head row first).
    pub fn to_standard(&self) -> StandardForm {
        let n = self.n;
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let c: Vec<f64> = self.objective.iter().map(|v| v * sign).collect();

        let p = self.eq_rows.len();
        let mut a = Mat::zeros(p, n);
        let mut b = vec![0.0; p];
        for (r, (terms, rhs)) in self.eq_rows.iter().enumerate() {
            for &(col, coef) in terms {
                a.add_to(r, col, coef);
            }
            b[r] = *rhs;
        }

        let n_lower = self.lower.iter().flatten().count();
        let n_upper = self.upper.iter().flatten().count();
        let nonneg = self.ineq_rows.len() + n_lower + n_upper;
        let soc_sizes: Vec<usize> = self.soc_blocks.iter().map(|bl| 1 + bl.tail.len()).collect();
        let m = nonneg + soc_sizes.iter().sum::<usize>();

        let mut g = Mat::zeros(m, n);
        let mut h = vec![0.0; m];
        let mut r = 0;
        for (terms, rhs) in &self.ineq_rows {
            for &(col, coef) in terms {
                g.add_to(r, col, coef);
            }
            h[r] = *rhs;
            r += 1;
        }
        for col in 0..n {
            if let Some(lo) = self.lower[col] {
                g.add_to(r, col, -1.0);
                h[r] = -lo;
                r += 1;
            }
        }
        for col in 0..n {
            if let Some(up) = self.upper[col] {
                g.add_to(r, col, 1.0);
                h[r] = up;
                r += 1;
            }
        }
        // s = h − Gx must equal the affine expression, so each row carries the
        // negated coefficients and the constant on h.
        for block in &self.soc_blocks {
            for expr in std::iter::once(&block.head).chain(block.tail.iter()) {
                for &(col, coef) in &expr.terms {
                    g.add_to(r, col, -coef);
                }
                h[r] = expr.constant;
                r += 1;
            }
        }
        debug_assert_eq!(r, m);

        StandardForm {
            c,
            a,
            b,
            g,
            h,
            dims: ConeDims {
                nonneg,
                soc: soc_sizes,
            },
        }
    }

    pub fn solve(&self, options: &SolveOptions) -> Result<ConicSolution, ProgramError> {
        self.validate()?;
        let sf = self.to_standard();
        let raw = crate::ipm::solve_standard(&sf, options);
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let pcost: f64 = sf.c.iter().zip(raw.x.iter()).map(|(c, x)| c * x).sum();
        Ok(ConicSolution {
            status: raw.status,
            objective: sign * pcost + self.objective_constant,
            x: raw.x,
            eq_duals: raw.y,
            cone_duals: raw.z,
            slacks: raw.s,
            residuals: raw.residuals,
            iterations: raw.iterations,
            trace: raw.trace,
        })
    }

    /// Plain-text dump of the standard form for cross-checking against
    /// external solvers. One line per row; full f64 precision.
    pub fn dump_standard_form(&self) -> String {
        let sf = self.to_standard();
        let mut out = String::new();
        out.push_str("# standard form: min c'x  s.t.  A x = b, G x + s = h, s in K\n");
        out.push_str(&format!(
            "dims n={} p={} m={} nonneg={} soc={:?}\n",
            sf.c.len(),
            sf.a.rows,
            sf.g.rows,
            sf.dims.nonneg,
            sf.dims.soc
        ));
        let fmt_vec = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.17e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("c {}\n", fmt_vec(&sf.c)));
        for r in 0..sf.a.rows {
            out.push_str(&format!("A {} | b {:.17e}\n", fmt_vec(sf.a.row(r)), sf.b[r]));
        }
        for r in 0..sf.g.rows {
            out.push_str(&format!("G {} | h {:.17e}\n", fmt_vec(sf.g.row(r)), sf.h[r]));
        }
        out
    }
}

/// Standard-form data consumed by the interior-point core.
pub struct StandardForm {
    pub c: Vec<f64>,
    pub a: Mat,
    pub b: Vec<f64>,
    pub g: Mat,
    pub h: Vec<f64>,
    pub dims: ConeDims,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// target for relative primal/dual residuals and relative gap
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iters: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

/// Per-iteration log entry (objectives are for the scaled candidate x/τ).
#[derive(Clone, Copy, Debug)]
pub struct IterStat {
    pub pcost: f64,
    pub dcost: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub rel_gap: f64,
    pub mu: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// objective in the user's sense, including the constant term
    pub objective: f64,
    pub x: Vec<f64>,
    pub eq_duals: Vec<f64>,
    /// duals of the cone rows, in standard-form row order
    pub cone_duals: Vec<f64>,
    pub slacks: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub trace: Vec<IterStat>,
}
