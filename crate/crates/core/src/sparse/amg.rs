//! Two-level aggregation multigrid used as a preconditioner.
//!
//! Setup: strength-of-connection graph, greedy aggregation (optionally
//! repeated on the aggregate graph), piecewise-constant tentative
//! prolongator, optional damped-Jacobi prolongator smoothing, Galerkin coarse
//! operator factored exactly. One application is a V-cycle over the two
//! levels started from a zero guess, so it is a fixed linear operator.

use super::csr::{CsrMatrix, RectCsr};
use super::ilu::LuFactors;
use super::precond::Preconditioner;
use super::SparseError;
use serde::{Deserialize, Serialize};

const JACOBI_DAMPING: f64 = 2.0 / 3.0;
const PROLONGATOR_DAMPING: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    /// |a_ij| >= θ max_{k≠i} |a_ik|
    Classical,
    /// |a_ij| >= θ sqrt(|a_ii a_jj|)
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    Jacobi,
    L1Jacobi,
    Sor,
    Ssor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelParams {
    pub strength: Strength,
    pub theta: f64,
    pub max_agg_size: usize,
    /// Extra aggregation passes applied to the aggregate graph.
    pub aggressive_levels: usize,
    pub prolongator_smoothing: bool,
    pub smoother: SmootherKind,
    pub sweeps: usize,
    /// Unknowns per cell; aggregation never mixes unknown types. 1 = scalar.
    pub dof_stride: usize,
}

impl Default for TwoLevelParams {
    fn default() -> Self {
        Self {
            strength: Strength::Classical,
            theta: 0.25,
            max_agg_size: 8,
            aggressive_levels: 0,
            prolongator_smoothing: false,
            smoother: SmootherKind::Jacobi,
            sweeps: 1,
            dof_stride: 1,
        }
    }
}

/// Point smoother acting on the full matrix.
#[derive(Debug, Clone)]
pub(crate) struct PointSmoother {
    kind: SmootherKind,
    inv: Vec<f64>,
}

impl PointSmoother {
    pub fn new(a: &CsrMatrix, kind: SmootherKind) -> Result<Self, SparseError> {
        let mut inv = Vec::with_capacity(a.n());
        for i in 0..a.n() {
            let (cols, vals) = a.row(i);
            let d = match kind {
                SmootherKind::L1Jacobi => cols
                    .iter()
                    .zip(vals)
                    .map(|(&c, v)| if c == i { *v } else { v.abs() })
                    .sum::<f64>(),
                _ => a.get(i, i),
            };
            if d == 0.0 || !d.is_finite() {
                return Err(SparseError::ZeroDiagonal { row: i });
            }
            inv.push(1.0 / d);
        }
        Ok(Self { kind, inv })
    }

    pub fn units(&self, a: &CsrMatrix) -> u64 {
        let sweep = (a.nnz() + a.n()) as u64;
        if self.kind == SmootherKind::Ssor {
            2 * sweep
        } else {
            sweep
        }
    }

    fn forward(&self, a: &CsrMatrix, x: &mut [f64], r: &[f64]) {
        for i in 0..a.n() {
            let (cols, vals) = a.row(i);
            let ax: f64 = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
            x[i] += (r[i] - ax) * self.inv[i];
        }
    }

    fn backward(&self, a: &CsrMatrix, x: &mut [f64], r: &[f64]) {
        for i in (0..a.n()).rev() {
            let (cols, vals) = a.row(i);
            let ax: f64 = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
            x[i] += (r[i] - ax) * self.inv[i];
        }
    }

    /// One sweep on A x = r, updating x in place.
    pub fn sweep(&self, a: &CsrMatrix, x: &mut [f64], r: &[f64], tmp: &mut [f64]) {
        match self.kind {
            SmootherKind::Jacobi | SmootherKind::L1Jacobi => {
                let w = if self.kind == SmootherKind::Jacobi {
                    JACOBI_DAMPING
                } else {
                    1.0
                };
                a.residual(r, x, tmp);
                for i in 0..a.n() {
                    x[i] += w * tmp[i] * self.inv[i];
                }
            }
            SmootherKind::Sor => self.forward(a, x, r),
            SmootherKind::Ssor => {
                self.forward(a, x, r);
                self.backward(a, x, r);
            }
        }
    }
}

fn strong_neighbors(a: &CsrMatrix, comp: &[usize], params: &TwoLevelParams) -> Vec<Vec<usize>> {
    let diag = a.diag();
    (0..a.n())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let cand = || {
                cols.iter()
                    .zip(vals)
                    .filter(move |(&c, &v)| c != i && v != 0.0 && comp[c] == comp[i])
            };
            match params.strength {
                Strength::Classical => {
                    let m = cand().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
                    cand()
                        .filter(|(_, v)| v.abs() >= params.theta * m)
                        .map(|(&c, _)| c)
                        .collect()
                }
                Strength::Symmetric => cand()
                    .filter(|(&c, v)| v.abs() >= params.theta * (diag[i] * diag[c]).abs().sqrt())
                    .map(|(&c, _)| c)
                    .collect(),
            }
        })
        .collect()
}

/// Greedy aggregation. Returns the aggregate of every node and the count.
fn aggregate(a: &CsrMatrix, comp: &[usize], params: &TwoLevelParams) -> (Vec<usize>, usize) {
    const NONE: usize = usize::MAX;
    let n = a.n();
    let strong = strong_neighbors(a, comp, params);
    let cap = params.max_agg_size.max(1);
    let mut agg = vec![NONE; n];
    let mut sizes: Vec<usize> = Vec::new();

    // Roots whose strong neighbourhood is still free.
    for i in 0..n {
        if agg[i] != NONE || strong[i].iter().any(|&j| agg[j] != NONE) {
            continue;
        }
        let id = sizes.len();
        agg[i] = id;
        let mut size = 1;
        for &j in &strong[i] {
            if size == cap {
                break;
            }
            agg[j] = id;
            size += 1;
        }
        sizes.push(size);
    }
    // Attach leftovers to the aggregate of their strongest aggregated neighbour.
    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        let best = strong[i]
            .iter()
            .filter(|&&j| snapshot[j] != NONE)
            .max_by(|&&x, &&y| a.get(i, x).abs().total_cmp(&a.get(i, y).abs()).then(y.cmp(&x)));
        if let Some(&j) = best {
            agg[i] = snapshot[j];
            sizes[snapshot[j]] += 1;
        }
    }
    // Whatever is left forms its own aggregates with free strong neighbours.
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        let id = sizes.len();
        agg[i] = id;
        let mut size = 1;
        for &j in &strong[i] {
            if size == cap {
                break;
            }
            if agg[j] == NONE {
                agg[j] = id;
                size += 1;
            }
        }
        sizes.push(size);
    }
    (agg, sizes.len())
}

fn tentative(agg: &[usize], nc: usize) -> RectCsr {
    RectCsr {
        rows: agg.len(),
        cols: nc,
        row_ptr: (0..=agg.len()).collect(),
        col_idx: agg.to_vec(),
        values: vec![1.0; agg.len()],
    }
}

#[derive(Debug, Clone)]
pub struct TwoLevel {
    a: CsrMatrix,
    p: RectCsr,
    r: RectCsr,
    coarse: LuFactors,
    smoother: PointSmoother,
    sweeps: usize,
    setup_units: u64,
    apply_units: u64,
}

impl TwoLevel {
    pub fn new(a: &CsrMatrix, params: &TwoLevelParams) -> Result<Self, SparseError> {
        let n = a.n();
        let stride = params.dof_stride.max(1);
        let smoother = PointSmoother::new(a, params.smoother)?;
        let mut units = (a.nnz() + n) as u64;

        let fine_comp: Vec<usize> = (0..n).map(|i| i % stride).collect();
        let (mut agg, mut nc) = aggregate(a, &fine_comp, params);
        let mut level_a = a.clone();
        for _ in 0..params.aggressive_levels {
            if nc <= 1 {
                break;
            }
            let p = tentative(&agg, nc);
            let (ap, f1) = RectCsr::from_square(a).matmul(&p);
            let (ac, f2) = p.transpose().matmul(&ap);
            units += f1 + f2;
            // A coarse node keeps the unknown type of its members.
            let mut ccomp = vec![0; nc];
            for i in 0..n {
                ccomp[agg[i]] = fine_comp[i];
            }
            level_a = ac.into_square();
            let (agg2, nc2) = aggregate(&level_a, &ccomp, params);
            units += (level_a.nnz() + nc) as u64;
            agg = agg.iter().map(|&g| agg2[g]).collect();
            nc = nc2;
        }
        drop(level_a);

        let mut p = tentative(&agg, nc);
        if params.prolongator_smoothing {
            // P = (I - ω D⁻¹ A) P_tent
            let mut s = RectCsr::from_square(a);
            for i in 0..n {
                let d = a.get(i, i);
                if d == 0.0 {
                    return Err(SparseError::ZeroDiagonal { row: i });
                }
                for k in s.row_ptr[i]..s.row_ptr[i + 1] {
                    let v = -PROLONGATOR_DAMPING * s.values[k] / d;
                    s.values[k] = if s.col_idx[k] == i { 1.0 + v } else { v };
                }
            }
            let (sp, f) = s.matmul(&p);
            units += f + a.nnz() as u64;
            p = sp;
        }
        let r = p.transpose();
        let (ap, f1) = RectCsr::from_square(a).matmul(&p);
        let (ac, f2) = r.matmul(&ap);
        units += f1 + f2;
        let coarse = LuFactors::factor(&ac.into_square(), 1, None)?;
        units += coarse.setup_units();

        let apply_units = 2 * params.sweeps as u64 * smoother.units(a)
            + a.nnz() as u64
            + 2 * p.nnz() as u64
            + coarse.apply_units();
        Ok(Self {
            a: a.clone(),
            p,
            r,
            coarse,
            smoother,
            sweeps: params.sweeps,
            setup_units: units,
            apply_units,
        })
    }

    pub fn coarse_size(&self) -> usize {
        self.r.rows
    }
}

impl Preconditioner for TwoLevel {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.a.n();
        let mut tmp = vec![0.0; n];
        z.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sweeps {
            self.smoother.sweep(&self.a, z, r, &mut tmp);
        }
        self.a.residual(r, z, &mut tmp);
        let mut rc = vec![0.0; self.r.rows];
        self.r.matvec(&tmp, &mut rc);
        let mut ec = vec![0.0; rc.len()];
        self.coarse.solve(&rc, &mut ec);
        self.p.matvec(&ec, &mut tmp);
        for (zi, t) in z.iter_mut().zip(&tmp) {
            *zi += t;
        }
        for _ in 0..self.sweeps {
            self.smoother.sweep(&self.a, z, r, &mut tmp);
        }
    }

    fn setup_units(&self) -> u64 {
        self.setup_units
    }

    fn apply_units(&self) -> u64 {
        self.apply_units
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_aggregation_on_a_line() {
        let a = CsrMatrix::laplacian_1d(8);
        let params = TwoLevelParams {
            max_agg_size: 2,
            ..Default::default()
        };
        let (agg, nc) = aggregate(&a, &[0; 8], &params);
        assert_eq!(nc, 4);
        assert_eq!(agg, [0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn aggregation_respects_unknown_types() {
        let a = CsrMatrix::laplacian_1d(10);
        let comp: Vec<usize> = (0..10).map(|i| i % 2).collect();
        // The 1D stencil never couples equal parities, so every node is alone.
        let (agg, nc) = aggregate(&a, &comp, &TwoLevelParams::default());
        assert_eq!(nc, 10);
        let mut seen = agg.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn aggressive_pass_shrinks_coarse_grid() {
        let a = CsrMatrix::laplacian_2d(12, 12);
        let one = TwoLevel::new(&a, &TwoLevelParams::default()).unwrap();
        let two = TwoLevel::new(
            &a,
            &TwoLevelParams {
                aggressive_levels: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(two.coarse_size() < one.coarse_size());
    }

    #[test]
    fn repeated_aggressive_passes_with_stride() {
        let a = CsrMatrix::laplacian_2d(16, 16);
        let mut prev = usize::MAX;
        for levels in 0..3 {
            let p = TwoLevelParams {
                aggressive_levels: levels,
                dof_stride: 2,
                ..Default::default()
            };
            let m = TwoLevel::new(&a, &p).unwrap();
            assert!(m.coarse_size() <= prev);
            prev = m.coarse_size();
        }
    }
}
