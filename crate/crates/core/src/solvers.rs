//! Jacobi, restarted preconditioned CG and restarted GMRES(k) as resumable
//! step machines.
//!
//! Every method can be rebuilt from an approximate solution `x` alone: the
//! residual `r = b - A x` and all auxiliary vectors are recomputed and a new
//! restart cycle begins. Steady-state restarts use the same path, so a state
//! recovered from a lossless checkpoint taken at a restart boundary continues
//! bit-for-bit like the uninterrupted run.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sparse::{axpy, dot, generate_poisson2d, jacobi_preconditioner, norm2};
use crate::sparse::{CsrMatrix, DenseVector, DiagonalPreconditioner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jacobi,
    Cg,
    Gmres,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jacobi => "jacobi",
            Method::Cg => "cg",
            Method::Gmres => "gmres",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(Method::Jacobi),
            "cg" | "pcg" => Ok(Method::Cg),
            "gmres" => Ok(Method::Gmres),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Convergence and restart controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Relative residual target: converged when `‖r‖₂ ≤ tolerance·‖b‖₂`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// GMRES(k) cycle length and restarted-CG period.
    pub restart_len: usize,
    /// Checkpoint every `ckpt_intvl` iterations.
    pub ckpt_intvl: usize,
}

impl SolveConfig {
    /// Restart period defaults to the checkpoint interval.
    pub fn new(tolerance: f64, max_iterations: usize, ckpt_intvl: usize) -> Self {
        Self {
            tolerance,
            max_iterations,
            restart_len: ckpt_intvl,
            ckpt_intvl,
        }
    }

    pub fn with_restart_len(mut self, restart_len: usize) -> Self {
        self.restart_len = restart_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.restart_len == 0 {
            return Err(invalid("restart_len must be >= 1"));
        }
        if self.ckpt_intvl == 0 {
            return Err(invalid("ckpt_intvl must be >= 1"));
        }
        Ok(())
    }
}

/// `A x = b` together with its preconditioner `M`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    a: CsrMatrix,
    precond: DiagonalPreconditioner,
    b: DenseVector,
    b_norm: f64,
}

impl LinearSystem {
    pub fn new(a: CsrMatrix, precond: DiagonalPreconditioner, b: DenseVector) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::DimensionMismatch {
                what: "system matrix must be square",
                expected: a.n_rows(),
                actual: a.n_cols(),
            });
        }
        if b.len() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side length",
                expected: a.n_rows(),
                actual: b.len(),
            });
        }
        if precond.len() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                what: "preconditioner length",
                expected: a.n_rows(),
                actual: precond.len(),
            });
        }
        let b_norm = b.norm2();
        Ok(Self {
            a,
            precond,
            b,
            b_norm,
        })
    }

    /// `A` with the Jacobi preconditioner built from its diagonal.
    pub fn with_jacobi(a: CsrMatrix, b: DenseVector) -> Result<Self> {
        let m = jacobi_preconditioner(&a)?;
        Self::new(a, m, b)
    }

    /// The `m x m` five-point Poisson problem with `b = 1` and Jacobi preconditioning.
    pub fn poisson2d(m: usize) -> Result<Self> {
        let (a, b) = generate_poisson2d(m)?;
        Self::with_jacobi(a, b)
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn preconditioner(&self) -> &DiagonalPreconditioner {
        &self.precond
    }

    pub fn b(&self) -> &DenseVector {
        &self.b
    }

    pub fn b_norm(&self) -> f64 {
        self.b_norm
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `‖b - A x‖₂`.
    pub fn residual_norm(&self, x: &[f64]) -> Result<f64> {
        let mut r = vec![0.0; self.n()];
        self.a.residual_into(&self.b, x, &mut r)?;
        Ok(norm2(&r))
    }
}

#[derive(Clone, Debug)]
enum Workspace {
    Jacobi {
        r: Vec<f64>,
    },
    Cg {
        r: Vec<f64>,
        z: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
        rho: f64,
    },
    Gmres(Box<GmresCycle>),
}

/// One GMRES cycle: Arnoldi basis, Givens-reduced Hessenberg columns and the
/// rotated right-hand side whose last entry is the residual norm.
#[derive(Clone, Debug)]
struct GmresCycle {
    basis: Vec<Vec<f64>>,
    /// Column `j` holds the `j + 1` entries of the triangular factor.
    columns: Vec<Vec<f64>>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    g: Vec<f64>,
    scratch: Vec<f64>,
    precond: DiagonalPreconditioner,
}

impl GmresCycle {
    /// Least-squares coefficients from back substitution on the triangular factor.
    fn coefficients(&self) -> Vec<f64> {
        let m = self.columns.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = self.g[i];
            for (j, yj) in y.iter().enumerate().take(m).skip(i + 1) {
                acc -= self.columns[j][i] * yj;
            }
            y[i] = acc / self.columns[i][i];
        }
        y
    }

    /// `x + M⁻¹ V y`.
    fn update(&self, x: &[f64]) -> Vec<f64> {
        let y = self.coefficients();
        let mut correction = vec![0.0; x.len()];
        for (v, yi) in self.basis.iter().zip(&y) {
            axpy(*yi, v, &mut correction);
        }
        let mut out = x.to_vec();
        for ((o, c), d) in out.iter_mut().zip(&correction).zip(self.precond.inverse_diagonal()) {
            *o += c * d;
        }
        out
    }
}

/// The dynamic variables of a running solver.
#[derive(Clone, Debug)]
pub struct SolverState {
    method: Method,
    config: SolveConfig,
    iteration: usize,
    /// For GMRES this is the start of the current cycle; see [`SolverState::solution`].
    x: Vec<f64>,
    residual_norm: f64,
    converged: bool,
    residual_history: Vec<f64>,
    workspace: Workspace,
}

impl SolverState {
    /// Starts from `x₀ = 0`.
    pub fn init(method: Method, sys: &LinearSystem, config: SolveConfig) -> Result<Self> {
        Self::rebuild_from_solution(method, sys, config, vec![0.0; sys.n()], 0)
    }

    /// Treats `x` as a fresh initial guess at `iteration`, recomputing
    /// `r = b - A x`, `z = M⁻¹ r`, `p = z`, `ρ = rᵀz` (or the method's analogue).
    pub fn rebuild_from_solution(
        method: Method,
        sys: &LinearSystem,
        config: SolveConfig,
        x: Vec<f64>,
        iteration: usize,
    ) -> Result<Self> {
        config.validate()?;
        if x.len() != sys.n() {
            return Err(Error::DimensionMismatch {
                what: "solution length vs system size",
                expected: sys.n(),
                actual: x.len(),
            });
        }
        let mut state = Self {
            method,
            config,
            iteration,
            x,
            residual_norm: f64::NAN,
            converged: false,
            residual_history: Vec::new(),
            workspace: Workspace::Jacobi { r: Vec::new() },
        };
        state.rebuild_workspace(sys)?;
        state.residual_history.push(state.residual_norm);
        Ok(state)
    }

    fn rebuild_workspace(&mut self, sys: &LinearSystem) -> Result<()> {
        let n = sys.n();
        let mut r = vec![0.0; n];
        sys.a.residual_into(&sys.b, &self.x, &mut r)?;
        self.residual_norm = norm2(&r);
        self.workspace = match self.method {
            Method::Jacobi => Workspace::Jacobi { r },
            Method::Cg => {
                let mut z = vec![0.0; n];
                sys.precond.apply_into(&r, &mut z);
                let p = z.clone();
                let rho = dot(&r, &z);
                Workspace::Cg {
                    r,
                    z,
                    p,
                    q: vec![0.0; n],
                    rho,
                }
            }
            Method::Gmres => {
                let beta = self.residual_norm;
                let v0 = if beta > 0.0 {
                    r.iter().map(|ri| ri / beta).collect()
                } else {
                    r
                };
                Workspace::Gmres(Box::new(GmresCycle {
                    basis: vec![v0],
                    columns: Vec::new(),
                    cos: Vec::new(),
                    sin: Vec::new(),
                    g: vec![beta],
                    scratch: vec![0.0; n],
                    precond: sys.precond.clone(),
                }))
            }
        };
        self.converged = self.residual_norm <= self.config.tolerance * sys.b_norm;
        Ok(())
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Residual norms after init/rebuild and after each step since then.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// The current approximate solution. GMRES assembles it from the
    /// partial cycle without disturbing the state.
    pub fn solution(&self) -> Cow<'_, [f64]> {
        match &self.workspace {
            Workspace::Gmres(cycle) if !cycle.columns.is_empty() => {
                Cow::Owned(cycle.update(&self.x))
            }
            _ => Cow::Borrowed(&self.x),
        }
    }

    /// Current residual vector for methods that keep one (CG/Jacobi).
    pub fn residual_vector(&self) -> Option<&[f64]> {
        match &self.workspace {
            Workspace::Jacobi { r } | Workspace::Cg { r, .. } => Some(r),
            Workspace::Gmres(_) => None,
        }
    }

    /// Number of Krylov basis vectors currently held (GMRES only).
    pub fn krylov_dim(&self) -> Option<usize> {
        match &self.workspace {
            Workspace::Gmres(c) => Some(c.basis.len()),
            _ => None,
        }
    }

    /// Krylov basis vectors (GMRES only).
    pub fn krylov_basis(&self) -> Option<&[Vec<f64>]> {
        match &self.workspace {
            Workspace::Gmres(c) => Some(&c.basis),
            _ => None,
        }
    }

    /// Advances one iteration.
    pub fn step(&mut self, sys: &LinearSystem) -> Result<()> {
        if self.converged {
            return Err(Error::InvalidState("solver already converged"));
        }
        if self.iteration >= self.config.max_iterations {
            return Err(Error::InvalidState("iteration cap reached"));
        }
        if sys.n() != self.x.len() {
            return Err(Error::DimensionMismatch {
                what: "system size vs solver state",
                expected: self.x.len(),
                actual: sys.n(),
            });
        }
        match self.method {
            Method::Jacobi => self.step_jacobi(sys)?,
            Method::Cg => self.step_cg(sys)?,
            Method::Gmres => self.step_gmres(sys)?,
        }
        if !self.residual_norm.is_finite() {
            return Err(Error::Breakdown {
                method: self.method.name(),
                iteration: self.iteration,
                reason: "non-finite residual",
            });
        }
        self.residual_history.push(self.residual_norm);
        Ok(())
    }

    fn step_jacobi(&mut self, sys: &LinearSystem) -> Result<()> {
        let Workspace::Jacobi { r } = &mut self.workspace else {
            unreachable!("workspace matches method")
        };
        for ((xi, ri), di) in self.x.iter_mut().zip(r.iter()).zip(sys.precond.inverse_diagonal()) {
            *xi += ri * di;
        }
        sys.a.residual_into(&sys.b, &self.x, r)?;
        self.residual_norm = norm2(r);
        self.iteration += 1;
        self.converged = self.residual_norm <= self.config.tolerance * sys.b_norm;
        Ok(())
    }

    fn step_cg(&mut self, sys: &LinearSystem) -> Result<()> {
        let Workspace::Cg { r, z, p, q, rho } = &mut self.workspace else {
            unreachable!("workspace matches method")
        };
        sys.a.spmv_into(p, q)?;
        let pq = dot(p, q);
        if pq == 0.0 || !pq.is_finite() {
            return Err(Error::Breakdown {
                method: "cg",
                iteration: self.iteration,
                reason: "search direction has zero A-norm",
            });
        }
        let alpha = *rho / pq;
        axpy(alpha, p, &mut self.x);
        axpy(-alpha, q, r);
        sys.precond.apply_into(r, z);
        let rho_next = dot(r, z);
        self.residual_norm = norm2(r);
        self.iteration += 1;
        self.converged = self.residual_norm <= self.config.tolerance * sys.b_norm;
        if self.converged {
            return Ok(());
        }
        if rho_next == 0.0 {
            return Err(Error::Breakdown {
                method: "cg",
                iteration: self.iteration,
                reason: "rho vanished with a nonzero residual",
            });
        }
        let beta = rho_next / *rho;
        for (pi, zi) in p.iter_mut().zip(z.iter()) {
            *pi = zi + beta * *pi;
        }
        *rho = rho_next;

        if self.iteration % self.config.restart_len == 0 {
            self.rebuild_workspace(sys)?;
        }
        Ok(())
    }

    fn step_gmres(&mut self, sys: &LinearSystem) -> Result<()> {
        let Workspace::Gmres(cycle) = &mut self.workspace else {
            unreachable!("workspace matches method")
        };
        let j = cycle.basis.len() - 1;

        // w = A M⁻¹ v_j, orthogonalized by modified Gram-Schmidt.
        let mut u = vec![0.0; sys.n()];
        sys.precond.apply_into(&cycle.basis[j], &mut u);
        sys.a.spmv_into(&u, &mut cycle.scratch)?;
        let w = &mut cycle.scratch;
        let mut h = Vec::with_capacity(j + 2);
        for v in &cycle.basis {
            let hij = dot(w, v);
            axpy(-hij, v, w);
            h.push(hij);
        }
        let h_next = norm2(w);
        let column_norm = (dot(&h, &h) + h_next * h_next).sqrt();
        let happy = h_next <= f64::EPSILON * column_norm;

        for i in 0..j {
            let (c, s) = (cycle.cos[i], cycle.sin[i]);
            let t = c * h[i] + s * h[i + 1];
            h[i + 1] = -s * h[i] + c * h[i + 1];
            h[i] = t;
        }
        let denom = h[j].hypot(h_next);
        if denom == 0.0 {
            return Err(Error::Breakdown {
                method: "gmres",
                iteration: self.iteration,
                reason: "singular Hessenberg column",
            });
        }
        let (c, s) = (h[j] / denom, h_next / denom);
        h[j] = denom;
        cycle.cos.push(c);
        cycle.sin.push(s);
        let gj = cycle.g[j];
        cycle.g[j] = c * gj;
        cycle.g.push(-s * gj);
        cycle.columns.push(h);
        if !happy {
            let v_next = w.iter().map(|wi| wi / h_next).collect();
            cycle.basis.push(v_next);
        }

        self.residual_norm = cycle.g[j + 1].abs();
        self.iteration += 1;
        let estimate_converged = self.residual_norm <= self.config.tolerance * sys.b_norm;
        let boundary = self.iteration % self.config.restart_len == 0;
        if estimate_converged || happy || boundary {
            self.x = cycle.update(&self.x);
            self.rebuild_workspace(sys)?;
            if happy && !self.converged {
                return Err(Error::Breakdown {
                    method: "gmres",
                    iteration: self.iteration,
                    reason: "Arnoldi breakdown with nonzero true residual",
                });
            }
        }
        Ok(())
    }

    /// Steps until convergence or the iteration cap.
    pub fn solve(&mut self, sys: &LinearSystem) -> Result<SolveSummary> {
        while !self.converged && self.iteration < self.config.max_iterations {
            self.step(sys)?;
        }
        Ok(SolveSummary {
            method: self.method,
            iterations: self.iteration,
            converged: self.converged,
            residual_norm: self.residual_norm,
            relative_residual: if sys.b_norm > 0.0 {
                self.residual_norm / sys.b_norm
            } else {
                0.0
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
    pub relative_residual: f64,
}
