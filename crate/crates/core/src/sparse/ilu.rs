//! Block incomplete LU with level-of-fill control.
//!
//! Point ILU is the block size 1 case. An unlimited fill level gives the
//! exact LU factorization without pivoting across blocks, which backs the
//! direct solver.

use super::csr::CsrMatrix;
use super::SparseError;
use std::collections::BTreeMap;

/// Invert a row-major b-by-b block with partial pivoting.
pub(crate) fn invert_block(b: usize, a: &[f64]) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let mut m = a.to_vec();
    let mut inv = vec![0.0; b * b];
    for i in 0..b {
        inv[i * b + i] = 1.0;
    }
    for c in 0..b {
        let p = (c..b)
            .max_by(|&x, &y| m[x * b + c].abs().total_cmp(&m[y * b + c].abs()))
            .unwrap();
        let piv = m[p * b + c];
        if piv.abs() <= f64::EPSILON * scale || !piv.is_finite() {
            return None;
        }
        if p != c {
            for k in 0..b {
                m.swap(p * b + k, c * b + k);
                inv.swap(p * b + k, c * b + k);
            }
        }
        for k in 0..b {
            m[c * b + k] /= piv;
            inv[c * b + k] /= piv;
        }
        for r in 0..b {
            if r != c {
                let f = m[r * b + c];
                if f != 0.0 {
                    for k in 0..b {
                        m[r * b + k] -= f * m[c * b + k];
                        inv[r * b + k] -= f * inv[c * b + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// out = x * y for row-major b-by-b blocks.
#[inline]
pub(crate) fn block_mul(b: usize, x: &[f64], y: &[f64], out: &mut [f64]) {
    for i in 0..b {
        for j in 0..b {
            out[i * b + j] = (0..b).map(|k| x[i * b + k] * y[k * b + j]).sum();
        }
    }
}

/// y -= M x
#[inline]
pub(crate) fn block_gemv_sub(b: usize, m: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..b {
        y[i] -= (0..b).map(|k| m[i * b + k] * x[k]).sum::<f64>();
    }
}

/// y = M x
#[inline]
pub(crate) fn block_gemv(b: usize, m: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..b {
        y[i] = (0..b).map(|k| m[i * b + k] * x[k]).sum();
    }
}

/// Group the entries of A into dense b-by-b blocks per block row.
pub(crate) fn block_rows(a: &CsrMatrix, b: usize) -> Result<Vec<BTreeMap<usize, Vec<f64>>>, SparseError> {
    let n = a.n();
    if b == 0 || n % b != 0 {
        return Err(SparseError::BlockSize { n, block: b });
    }
    let nb = n / b;
    let mut rows = vec![BTreeMap::new(); nb];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let bi = i / b;
        for (&c, &v) in cols.iter().zip(vals) {
            let blk = rows[bi]
                .entry(c / b)
                .or_insert_with(|| vec![0.0; b * b]);
            blk[(i % b) * b + c % b] = v;
        }
    }
    Ok(rows)
}

/// Factors of A ≈ L U with unit block-lower L and block-upper U.
#[derive(Debug, Clone)]
pub struct LuFactors {
    b: usize,
    nb: usize,
    l_ptr: Vec<usize>,
    l_col: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_col: Vec<usize>,
    u_val: Vec<f64>,
    dinv: Vec<f64>,
    setup_units: u64,
}

impl LuFactors {
    /// `level = None` keeps all fill.
    pub fn factor(a: &CsrMatrix, b: usize, level: Option<usize>) -> Result<Self, SparseError> {
        let rows = block_rows(a, b)?;
        let nb = rows.len();
        let bb = b * b;
        let max_level = level.unwrap_or(usize::MAX);
        let mut f = Self {
            b,
            nb,
            l_ptr: vec![0],
            l_col: Vec::new(),
            l_val: Vec::new(),
            u_ptr: vec![0],
            u_col: Vec::new(),
            u_val: Vec::new(),
            dinv: Vec::with_capacity(nb * bb),
            setup_units: 0,
        };
        // Fill levels of stored U entries, needed while later rows are factored.
        let mut u_lev: Vec<usize> = Vec::new();
        let mut tmp = vec![0.0; bb];
        let mut flops = 0u64;

        for (i, row) in rows.into_iter().enumerate() {
            let mut work: BTreeMap<usize, (usize, Vec<f64>)> =
                row.into_iter().map(|(j, v)| (j, (0, v))).collect();
            let mut cursor = 0;
            while let Some((&k, _)) = work.range(cursor..i).next() {
                cursor = k + 1;
                let (lev_ik, a_ik) = work.get(&k).cloned().unwrap();
                let mut l_ik = vec![0.0; bb];
                block_mul(b, &a_ik, &f.dinv[k * bb..(k + 1) * bb], &mut l_ik);
                flops += (bb * b) as u64;
                for q in f.u_ptr[k]..f.u_ptr[k + 1] {
                    let j = f.u_col[q];
                    let lev = lev_ik.saturating_add(u_lev[q]).saturating_add(1);
                    let u_kj = &f.u_val[q * bb..(q + 1) * bb];
                    match work.get_mut(&j) {
                        Some((l, blk)) => {
                            block_mul(b, &l_ik, u_kj, &mut tmp);
                            for (x, t) in blk.iter_mut().zip(&tmp) {
                                *x -= t;
                            }
                            *l = (*l).min(lev);
                            flops += (bb * b) as u64;
                        }
                        None if lev <= max_level => {
                            block_mul(b, &l_ik, u_kj, &mut tmp);
                            work.insert(j, (lev, tmp.iter().map(|t| -t).collect()));
                            flops += (bb * b) as u64;
                        }
                        None => {}
                    }
                }
                work.insert(k, (lev_ik, l_ik));
            }
            let diag = work
                .get(&i)
                .ok_or(SparseError::ZeroPivot { row: i * b })?;
            let inv = invert_block(b, &diag.1).ok_or(SparseError::ZeroPivot { row: i * b })?;
            flops += (bb * b) as u64;
            f.dinv.extend_from_slice(&inv);
            for (j, (lev, blk)) in work {
                if j < i {
                    f.l_col.push(j);
                    f.l_val.extend_from_slice(&blk);
                } else if j > i {
                    f.u_col.push(j);
                    f.u_val.extend_from_slice(&blk);
                    u_lev.push(lev);
                }
            }
            f.l_ptr.push(f.l_col.len());
            f.u_ptr.push(f.u_col.len());
        }
        if f.l_val.iter().chain(&f.u_val).any(|v| !v.is_finite()) {
            return Err(SparseError::NonFinite);
        }
        f.setup_units = flops;
        Ok(f)
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn setup_units(&self) -> u64 {
        self.setup_units
    }

    /// Multiply-adds of one solve.
    pub fn apply_units(&self) -> u64 {
        ((self.l_col.len() + self.u_col.len() + self.nb) * self.b * self.b) as u64
    }

    /// Number of stored L and U blocks, diagonal included.
    pub fn stored_blocks(&self) -> usize {
        self.l_col.len() + self.u_col.len() + self.nb
    }

    /// Scalar (row, col) pattern of L + U.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        let b = self.b;
        let mut p = Vec::new();
        for i in 0..self.nb {
            let cols = self.l_col[self.l_ptr[i]..self.l_ptr[i + 1]]
                .iter()
                .chain(std::iter::once(&i))
                .chain(&self.u_col[self.u_ptr[i]..self.u_ptr[i + 1]]);
            for &j in cols {
                for r in 0..b {
                    for c in 0..b {
                        p.push((i * b + r, j * b + c));
                    }
                }
            }
        }
        p.sort_unstable();
        p
    }

    /// z = U⁻¹ L⁻¹ r
    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let b = self.b;
        let bb = b * b;
        z.copy_from_slice(r);
        for i in 0..self.nb {
            let (head, tail) = z.split_at_mut(i * b);
            let zi = &mut tail[..b];
            for q in self.l_ptr[i]..self.l_ptr[i + 1] {
                let k = self.l_col[q];
                block_gemv_sub(b, &self.l_val[q * bb..(q + 1) * bb], &head[k * b..(k + 1) * b], zi);
            }
        }
        let mut t = vec![0.0; b];
        for i in (0..self.nb).rev() {
            let (head, tail) = z.split_at_mut((i + 1) * b);
            t.copy_from_slice(&head[i * b..]);
            for q in self.u_ptr[i]..self.u_ptr[i + 1] {
                let j = self.u_col[q] - i - 1;
                block_gemv_sub(b, &self.u_val[q * bb..(q + 1) * bb], &tail[j * b..(j + 1) * b], &mut t);
            }
            block_gemv(b, &self.dinv[i * bb..(i + 1) * bb], &t, &mut head[i * b..]);
        }
    }
}
