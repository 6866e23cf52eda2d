use super::csr::CsrMatrix;
use super::precond::Preconditioner;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresParams {
    pub restart: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresParams {
    fn default() -> Self {
        Self {
            restart: 30,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    MaxIterations,
    Breakdown,
    NonFinite,
    Setup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Final true relative residual ‖b − A x‖ / ‖b‖.
    pub residual: f64,
    /// Estimated relative residual after every iteration.
    pub history: Vec<f64>,
    pub setup_units: u64,
    pub iteration_units: u64,
    pub wall_time: f64,
    pub failure: Option<FailureReason>,
    pub x: Vec<f64>,
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt, zero
/// initial guess. Convergence is judged on the true residual at the end of
/// each cycle.
pub fn gmres(a: &CsrMatrix, b: &[f64], m: &dyn Preconditioner, p: &GmresParams) -> SolveOutcome {
    let start = Instant::now();
    let n = a.n();
    assert_eq!(b.len(), n, "right-hand side length");
    let restart = p.restart.max(1);
    let mut out = SolveOutcome {
        converged: false,
        iterations: 0,
        residual: 0.0,
        history: Vec::new(),
        setup_units: m.setup_units(),
        iteration_units: 0,
        wall_time: 0.0,
        failure: None,
        x: vec![0.0; n],
    };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        out.converged = true;
        out.wall_time = start.elapsed().as_secs_f64();
        return out;
    }
    if !bnorm.is_finite() {
        out.failure = Some(FailureReason::NonFinite);
        out.residual = f64::NAN;
        return out;
    }
    out.residual = 1.0;

    let nnz = a.nnz() as u64;
    let apply = m.apply_units();
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(restart);
    let mut h = vec![vec![0.0; restart]; restart + 1];
    let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
    let mut g = vec![0.0; restart + 1];

    loop {
        v.clear();
        z.clear();
        v.push(r.iter().map(|x| x / beta).collect());
        g.iter_mut().for_each(|x| *x = 0.0);
        g[0] = beta;
        let mut k = 0;
        let mut breakdown = false;
        while k < restart && out.iterations < p.max_iter {
            let mut zk = vec![0.0; n];
            m.apply(&v[k], &mut zk);
            let mut w = a.mul_vec(&zk);
            z.push(zk);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= h[i][k] * vj;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 || !d.is_finite() {
                out.failure = Some(if d == 0.0 {
                    FailureReason::Breakdown
                } else {
                    FailureReason::NonFinite
                });
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];

            out.iterations += 1;
            k += 1;
            out.iteration_units += nnz + apply + 2 * (n * k) as u64;
            let est = g[k].abs() / bnorm;
            out.history.push(est);
            if !est.is_finite() {
                out.failure = Some(FailureReason::NonFinite);
                break;
            }
            if est <= p.tol {
                break;
            }
            if hn == 0.0 {
                breakdown = true;
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        if out.failure.is_some() {
            break;
        }

        // y = H⁻¹ g on the leading k-by-k triangle, then x += Z y.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xj, zj) in out.x.iter_mut().zip(zi) {
                *xj += yi * zj;
            }
        }
        a.residual(b, &out.x, &mut r);
        beta = norm(&r);
        out.residual = beta / bnorm;
        if !out.residual.is_finite() {
            out.failure = Some(FailureReason::NonFinite);
            break;
        }
        if out.residual <= p.tol {
            out.converged = true;
            break;
        }
        if breakdown {
            out.failure = Some(FailureReason::Breakdown);
            break;
        }
        if out.iterations >= p.max_iter {
            out.failure = Some(FailureReason::MaxIterations);
            break;
        }
    }
    if out.failure == Some(FailureReason::NonFinite) {
        out.residual = f64::NAN;
    }
    out.wall_time = start.elapsed().as_secs_f64();
    out
}
