//! Preconditioner menu.
//!
//! Every preconditioner is a fixed linear operator z = M⁻¹ r once set up.
//! Block variants work on contiguous cell blocks: unknowns of one cell are
//! stored next to each other.

use super::amg::{PointSmoother, SmootherKind, TwoLevel, TwoLevelParams};
use super::csr::CsrMatrix;
use super::ilu::{block_gemv, block_gemv_sub, block_rows, invert_block, LuFactors};
use super::SparseError;
use serde::{Deserialize, Serialize};

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
    /// Multiply-add count of the setup.
    fn setup_units(&self) -> u64;
    /// Multiply-add count of one application.
    fn apply_units(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureSmoother {
    Jacobi,
    Sor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondStage {
    BlockIlu0,
    BlockSor,
}

/// Two-stage constrained-pressure-residual preconditioner for systems with
/// two unknowns per cell, pressure first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CprParams {
    pub pressure: TwoLevelParams,
    pub temperature: Option<TemperatureSmoother>,
    pub stage2: SecondStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrecondKind {
    Identity,
    Jacobi,
    BlockJacobi { block: usize },
    Sor { omega: f64 },
    BlockSor { block: usize, omega: f64 },
    Ilu { level: usize },
    BlockIlu { block: usize, level: usize },
    TwoLevel(TwoLevelParams),
    CprTwoStage(CprParams),
}

impl PrecondKind {
    pub fn label(&self) -> String {
        match self {
            PrecondKind::Identity => "identity".into(),
            PrecondKind::Jacobi => "jacobi".into(),
            PrecondKind::BlockJacobi { block } => format!("block_jacobi({block})"),
            PrecondKind::Sor { omega } => format!("sor({omega})"),
            PrecondKind::BlockSor { block, omega } => format!("block_sor({block}, {omega})"),
            PrecondKind::Ilu { level } => format!("ilu({level})"),
            PrecondKind::BlockIlu { block, level } => format!("block_ilu({block}, {level})"),
            PrecondKind::TwoLevel(p) => format!("two_level({:?}, θ={})", p.strength, p.theta),
            PrecondKind::CprTwoStage(c) => format!("cpr({:?})", c.stage2),
        }
    }
}

pub fn setup(kind: &PrecondKind, a: &CsrMatrix) -> Result<Box<dyn Preconditioner>, SparseError> {
    Ok(match kind {
        PrecondKind::Identity => Box::new(Identity),
        PrecondKind::Jacobi => Box::new(BlockRelax::jacobi(a, 1)?),
        PrecondKind::BlockJacobi { block } => Box::new(BlockRelax::jacobi(a, *block)?),
        PrecondKind::Sor { omega } => Box::new(BlockRelax::sor(a, 1, *omega)?),
        PrecondKind::BlockSor { block, omega } => Box::new(BlockRelax::sor(a, *block, *omega)?),
        PrecondKind::Ilu { level } => Box::new(Ilu::new(a, 1, *level)?),
        PrecondKind::BlockIlu { block, level } => Box::new(Ilu::new(a, *block, *level)?),
        PrecondKind::TwoLevel(p) => Box::new(TwoLevel::new(a, p)?),
        PrecondKind::CprTwoStage(p) => Box::new(Cpr::new(a, p)?),
    })
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
    fn setup_units(&self) -> u64 {
        0
    }
    fn apply_units(&self) -> u64 {
        0
    }
}

/// Block Jacobi, or one forward block SOR sweep from a zero guess when the
/// strictly lower block part is kept. Block size 1 gives the point methods.
pub struct BlockRelax {
    b: usize,
    omega: f64,
    dinv: Vec<f64>,
    lower: Option<(Vec<usize>, Vec<usize>, Vec<f64>)>,
    setup_units: u64,
    apply_units: u64,
}

impl BlockRelax {
    fn diag_inverses(a: &CsrMatrix, b: usize) -> Result<Vec<f64>, SparseError> {
        if b == 1 {
            return a
                .diag()
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    if d == 0.0 || !d.is_finite() {
                        Err(SparseError::ZeroDiagonal { row: i })
                    } else {
                        Ok(1.0 / d)
                    }
                })
                .collect();
        }
        let rows = block_rows(a, b)?;
        let mut dinv = Vec::with_capacity(a.n() * b);
        for (i, row) in rows.iter().enumerate() {
            let d = row.get(&i).ok_or(SparseError::ZeroDiagonal { row: i * b })?;
            dinv.extend(invert_block(b, d).ok_or(SparseError::ZeroPivot { row: i * b })?);
        }
        Ok(dinv)
    }

    pub fn jacobi(a: &CsrMatrix, b: usize) -> Result<Self, SparseError> {
        if b == 0 || a.n() % b != 0 {
            return Err(SparseError::BlockSize { n: a.n(), block: b });
        }
        let dinv = Self::diag_inverses(a, b)?;
        let nb = (a.n() / b) as u64;
        let b3 = (b * b * b) as u64;
        Ok(Self {
            b,
            omega: 1.0,
            dinv,
            lower: None,
            setup_units: nb * b3,
            apply_units: nb * (b * b) as u64,
        })
    }

    pub fn sor(a: &CsrMatrix, b: usize, omega: f64) -> Result<Self, SparseError> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(SparseError::Structure(format!("SOR weight {omega} outside (0, 2)")));
        }
        let mut m = Self::jacobi(a, b)?;
        m.omega = omega;
        let bb = b * b;
        let rows = block_rows(a, b)?;
        let mut ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (&j, blk) in row.range(..i) {
                col.push(j);
                val.extend_from_slice(blk);
            }
            ptr.push(col.len());
        }
        m.apply_units += (col.len() * bb) as u64;
        m.lower = Some((ptr, col, val));
        Ok(m)
    }
}

impl Preconditioner for BlockRelax {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let b = self.b;
        let bb = b * b;
        let nb = r.len() / b;
        let mut t = vec![0.0; b];
        for i in 0..nb {
            t.copy_from_slice(&r[i * b..(i + 1) * b]);
            if let Some((ptr, col, val)) = &self.lower {
                for q in ptr[i]..ptr[i + 1] {
                    let j = col[q];
                    block_gemv_sub(b, &val[q * bb..(q + 1) * bb], &z[j * b..(j + 1) * b], &mut t);
                }
            }
            block_gemv(b, &self.dinv[i * bb..(i + 1) * bb], &t, &mut z[i * b..(i + 1) * b]);
            if self.omega != 1.0 {
                z[i * b..(i + 1) * b].iter_mut().for_each(|v| *v *= self.omega);
            }
        }
    }
    fn setup_units(&self) -> u64 {
        self.setup_units
    }
    fn apply_units(&self) -> u64 {
        self.apply_units
    }
}

pub struct Ilu {
    lu: LuFactors,
}

impl Ilu {
    pub fn new(a: &CsrMatrix, b: usize, level: usize) -> Result<Self, SparseError> {
        if level > 2 {
            return Err(SparseError::Structure(format!("ILU fill level {level} above 2")));
        }
        Ok(Self {
            lu: LuFactors::factor(a, b, Some(level))?,
        })
    }

    pub fn factors(&self) -> &LuFactors {
        &self.lu
    }
}

impl Preconditioner for Ilu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.lu.solve(r, z);
    }
    fn setup_units(&self) -> u64 {
        self.lu.setup_units()
    }
    fn apply_units(&self) -> u64 {
        self.lu.apply_units()
    }
}

/// Stage one solves the pressure block approximately (and optionally relaxes
/// the temperature block); stage two smooths the remaining residual of the
/// coupled system.
pub struct Cpr {
    a: CsrMatrix,
    pressure: TwoLevel,
    temperature: Option<PointSmoother>,
    tt: Option<CsrMatrix>,
    stage2: Box<dyn Preconditioner>,
    setup_units: u64,
    apply_units: u64,
}

impl Cpr {
    pub fn new(a: &CsrMatrix, params: &CprParams) -> Result<Self, SparseError> {
        let n = a.n();
        if n % 2 != 0 {
            return Err(SparseError::BlockSize { n, block: 2 });
        }
        let p_idx: Vec<usize> = (0..n).step_by(2).collect();
        let t_idx: Vec<usize> = (1..n).step_by(2).collect();
        let app = a.submatrix(&p_idx);
        let mut pp = params.pressure.clone();
        pp.dof_stride = 1;
        let pressure = TwoLevel::new(&app, &pp)?;
        let mut setup_units = a.nnz() as u64 + pressure.setup_units();
        let mut apply_units = pressure.apply_units() + a.nnz() as u64 + n as u64;

        let (temperature, tt) = match params.temperature {
            Some(kind) => {
                let att = a.submatrix(&t_idx);
                let sk = match kind {
                    TemperatureSmoother::Jacobi => SmootherKind::L1Jacobi,
                    TemperatureSmoother::Sor => SmootherKind::Sor,
                };
                let s = PointSmoother::new(&att, sk)?;
                setup_units += att.n() as u64;
                apply_units += s.units(&att);
                (Some(s), Some(att))
            }
            None => (None, None),
        };
        let stage2: Box<dyn Preconditioner> = match params.stage2 {
            SecondStage::BlockIlu0 => Box::new(Ilu::new(a, 2, 0)?),
            SecondStage::BlockSor => Box::new(BlockRelax::sor(a, 2, 1.0)?),
        };
        setup_units += stage2.setup_units();
        apply_units += stage2.apply_units();
        Ok(Self {
            a: a.clone(),
            pressure,
            temperature,
            tt,
            stage2,
            setup_units,
            apply_units,
        })
    }
}

impl Preconditioner for Cpr {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let m = n / 2;
        let rp: Vec<f64> = r.iter().step_by(2).copied().collect();
        let mut zp = vec![0.0; m];
        self.pressure.apply(&rp, &mut zp);
        let mut z1 = vec![0.0; n];
        for k in 0..m {
            z1[2 * k] = zp[k];
        }
        if let (Some(s), Some(att)) = (&self.temperature, &self.tt) {
            let rt: Vec<f64> = r.iter().skip(1).step_by(2).copied().collect();
            let mut zt = vec![0.0; m];
            let mut tmp = vec![0.0; m];
            s.sweep(att, &mut zt, &rt, &mut tmp);
            for k in 0..m {
                z1[2 * k + 1] = zt[k];
            }
        }
        let mut res = vec![0.0; n];
        self.a.residual(r, &z1, &mut res);
        self.stage2.apply(&res, z);
        for (zi, v) in z.iter_mut().zip(&z1) {
            *zi += v;
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
    fn jacobi_on_diagonal() {
        let a = CsrMatrix::diagonal(&[2.0, 4.0]);
        let m = setup(&PrecondKind::Jacobi, &a).unwrap();
        let mut z = [0.0; 2];
        m.apply(&[2.0, 4.0], &mut z);
        assert_eq!(z, [1.0, 1.0]);
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        for k in [PrecondKind::Jacobi, PrecondKind::Sor { omega: 1.0 }] {
            assert!(matches!(setup(&k, &a), Err(SparseError::ZeroDiagonal { row: 1 })));
        }
    }

    #[test]
    fn sor_sweep_by_hand() {
        // [[2,0],[1,4]] with omega 1: z0 = 1, z1 = (5 - 1)/4 = 1.
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 4.0)]).unwrap();
        let m = setup(&PrecondKind::Sor { omega: 1.0 }, &a).unwrap();
        let mut z = [0.0; 2];
        m.apply(&[2.0, 5.0], &mut z);
        assert_eq!(z, [1.0, 1.0]);
    }

    #[test]
    fn block_size_must_divide() {
        let a = CsrMatrix::laplacian_1d(5);
        assert!(matches!(
            setup(&PrecondKind::BlockJacobi { block: 2 }, &a),
            Err(SparseError::BlockSize { .. })
        ));
    }

    #[test]
    fn setup_cost_ordering() {
        let a = CsrMatrix::laplacian_2d(10, 10);
        let j = setup(&PrecondKind::Jacobi, &a).unwrap();
        let i2 = setup(&PrecondKind::Ilu { level: 2 }, &a).unwrap();
        assert!(j.setup_units() < i2.setup_units());
    }
}
