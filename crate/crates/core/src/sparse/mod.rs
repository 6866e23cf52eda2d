//! Sparse matrices, restarted GMRES and the preconditioner menu.
//!
//! Work is counted in multiply-add units alongside wall time so that runs
//! can be timed deterministically: a GMRES iteration costs the matvec nnz,
//! one preconditioner application and `2 n j` for orthogonalization at
//! Krylov step `j`. Setup costs are counted flops of each construction.

mod amg;
mod csr;
mod gmres;
mod ilu;
mod mm;
mod precond;

pub use amg::{SmootherKind, Strength, TwoLevel, TwoLevelParams};
pub use csr::{CsrMatrix, RectCsr};
pub use gmres::{gmres, norm, FailureReason, GmresParams, SolveOutcome};
pub use ilu::LuFactors;
pub use mm::{read_matrix_market, write_matrix_market};
pub use precond::{
    setup, BlockRelax, Cpr, CprParams, Identity, Ilu, PrecondKind, Preconditioner, SecondStage,
    TemperatureSmoother,
};

use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Seconds charged per work unit in cost-proxy timing.
pub const COST_UNIT_SECONDS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("malformed matrix: {0}")]
    Structure(String),
    #[error("block size {block} does not divide n = {n}")]
    BlockSize { n: usize, block: usize },
    #[error("zero diagonal in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("zero pivot at row {row}")]
    ZeroPivot { row: usize },
    #[error("factorization produced non-finite values")]
    NonFinite,
    #[error("matrix market line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Exact block LU without cross-block pivoting.
    Direct { block: usize },
    Gmres { restart: usize },
}

/// Everything needed to attempt one linear solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub method: Method,
    pub precond: PrecondKind,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverSpec {
    pub fn gmres(restart: usize, precond: PrecondKind) -> Self {
        let d = GmresParams::default();
        Self {
            method: Method::Gmres { restart },
            precond,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }

    pub fn direct(block: usize) -> Self {
        let d = GmresParams::default();
        Self {
            method: Method::Direct { block },
            precond: PrecondKind::Identity,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl SolveOutcome {
    pub fn total_units(&self) -> u64 {
        self.setup_units + self.iteration_units
    }

    /// Deterministic stand-in for the wall time.
    pub fn cost_seconds(&self) -> f64 {
        self.total_units() as f64 * COST_UNIT_SECONDS
    }

    /// A setup failure is charged as if the iteration cap had been spent.
    fn setup_failure(a: &CsrMatrix, max_iter: usize, err: &SparseError, wall: f64) -> Self {
        SolveOutcome {
            converged: false,
            iterations: 0,
            residual: 1.0,
            history: Vec::new(),
            setup_units: 0,
            iteration_units: max_iter as u64 * (a.nnz() + 2 * a.n()) as u64,
            wall_time: wall,
            failure: Some(FailureReason::Setup(err.to_string())),
            x: vec![0.0; a.n()],
        }
    }
}

/// Set up the preconditioner (or factorization) and solve.
pub fn solve(spec: &SolverSpec, a: &CsrMatrix, b: &[f64]) -> SolveOutcome {
    let start = Instant::now();
    let mut out = match spec.method {
        Method::Gmres { restart } => match setup(&spec.precond, a) {
            Ok(m) => gmres(
                a,
                b,
                m.as_ref(),
                &GmresParams {
                    restart,
                    tol: spec.tol,
                    max_iter: spec.max_iter,
                },
            ),
            Err(e) => SolveOutcome::setup_failure(a, spec.max_iter, &e, 0.0),
        },
        Method::Direct { block } => match LuFactors::factor(a, block, None) {
            Ok(lu) => {
                let mut x = vec![0.0; a.n()];
                lu.solve(b, &mut x);
                let mut r = vec![0.0; a.n()];
                a.residual(b, &x, &mut r);
                let bn = norm(b);
                let residual = if bn == 0.0 { norm(&r) } else { norm(&r) / bn };
                let converged = residual <= spec.tol;
                SolveOutcome {
                    converged,
                    iterations: 1,
                    residual,
                    history: vec![residual],
                    setup_units: lu.setup_units(),
                    iteration_units: lu.apply_units() + a.nnz() as u64,
                    wall_time: 0.0,
                    failure: (!converged).then(|| {
                        if residual.is_finite() {
                            FailureReason::MaxIterations
                        } else {
                            FailureReason::NonFinite
                        }
                    }),
                    x,
                }
            }
            Err(e) => SolveOutcome::setup_failure(a, spec.max_iter, &e, 0.0),
        },
    };
    out.wall_time = start.elapsed().as_secs_f64();
    out
}
