use super::SparseError;

/// Square compressed-sparse-row matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_raw(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let bad = |m: String| Err(SparseError::Structure(m));
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return bad(format!("row_ptr must have {} entries starting at 0", n + 1));
        }
        if col_idx.len() != values.len() || row_ptr[n] != col_idx.len() {
            return bad("row_ptr, col_idx and values disagree on nnz".into());
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.iter().any(|&c| c >= n) {
                return bad(format!("row {i} has a column index out of range"));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {i} columns are not strictly increasing"));
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let mut t = triplets.to_vec();
        if let Some(&(i, j, _)) = t.iter().find(|&&(i, j, _)| i >= n || j >= n) {
            return Err(SparseError::Structure(format!(
                "entry ({i}, {j}) outside a {n}x{n} matrix"
            )));
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Tridiagonal \[-1, 2, -1\].
    pub fn laplacian_1d(n: usize) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Self::from_triplets(n, &t).expect("valid stencil")
    }

    /// Five-point Laplacian on an nx-by-ny grid with Dirichlet boundaries,
    /// lexicographic ordering with x fastest.
    pub fn laplacian_2d(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        let mut t = Vec::with_capacity(5 * n);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if j > 0 {
                    t.push((k, k - nx, -1.0));
                }
                if i > 0 {
                    t.push((k, k - 1, -1.0));
                }
                t.push((k, k, 4.0));
                if i + 1 < nx {
                    t.push((k, k + 1, -1.0));
                }
                if j + 1 < ny {
                    t.push((k, k + nx, -1.0));
                }
            }
        }
        Self::from_triplets(n, &t).expect("valid stencil")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// r = b - A x
    pub fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let ax: f64 = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
            r[i] = b[i] - ax;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
            })
            .collect()
    }

    /// Principal submatrix on `idx` (ascending), renumbered 0..idx.len().
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in idx {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if map[c] != usize::MAX {
                    col_idx.push(map[c]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n: idx.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scale(&mut self, rows: &[f64], cols: &[f64]) {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= rows[i] * cols[self.col_idx[k]];
            }
        }
    }

    /// Largest |i - j| over stored entries below and above the diagonal.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut lo, mut hi) = (0, 0);
        for i in 0..self.n {
            let (cols, _) = self.row(i);
            if let (Some(&a), Some(&b)) = (cols.first(), cols.last()) {
                lo = lo.max(i.saturating_sub(a));
                hi = hi.max(b.saturating_sub(i));
            }
        }
        (lo, hi)
    }
}

/// Rectangular CSR used for transfer operators.
#[derive(Debug, Clone, PartialEq)]
pub struct RectCsr {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl RectCsr {
    pub fn from_square(a: &CsrMatrix) -> Self {
        Self {
            rows: a.n,
            cols: a.n,
            row_ptr: a.row_ptr.clone(),
            col_idx: a.col_idx.clone(),
            values: a.values.clone(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn transpose(&self) -> Self {
        let mut count = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            count[c + 1] += 1;
        }
        for c in 0..self.cols {
            count[c + 1] += count[c];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                col_idx[next[c]] = i;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product; the second value is the multiply-add count.
    pub fn matmul(&self, other: &RectCsr) -> (RectCsr, u64) {
        assert_eq!(self.cols, other.rows);
        let mut acc = vec![0.0; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut flops = 0u64;
        let mut touched = Vec::new();
        for i in 0..self.rows {
            touched.clear();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (m, a) = (self.col_idx[k], self.values[k]);
                for q in other.row_ptr[m]..other.row_ptr[m + 1] {
                    let j = other.col_idx[q];
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * other.values[q];
                    flops += 1;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        (
            RectCsr {
                rows: self.rows,
                cols: other.cols,
                row_ptr,
                col_idx,
                values,
            },
            flops,
        )
    }

    /// y = M x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.rows) {
            *yi = (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|k| self.values[k] * x[self.col_idx[k]])
                .sum();
        }
    }

    pub fn into_square(self) -> CsrMatrix {
        assert_eq!(self.rows, self.cols);
        CsrMatrix {
            n: self.rows,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, &[(1, 1, 1.0), (0, 1, 2.0), (1, 1, 3.0), (0, 0, 5.0)])
            .unwrap();
        assert_eq!(a.to_dense(), vec![vec![5.0, 2.0], vec![0.0, 4.0]]);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn raw_validation() {
        assert!(CsrMatrix::from_raw(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_raw(2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_raw(2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn galerkin_product_by_hand() {
        // P aggregates 4 points pairwise; P^T L P of the 1D Laplacian.
        let a = RectCsr::from_square(&CsrMatrix::laplacian_1d(4));
        let p = RectCsr {
            rows: 4,
            cols: 2,
            row_ptr: vec![0, 1, 2, 3, 4],
            col_idx: vec![0, 0, 1, 1],
            values: vec![1.0; 4],
        };
        let (ap, _) = a.matmul(&p);
        let (c, _) = p.transpose().matmul(&ap);
        let c = c.into_square();
        assert_eq!(c.to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 2.0]]);
    }

    #[test]
    fn submatrix_keeps_principal_block() {
        let a = CsrMatrix::laplacian_1d(5);
        let s = a.submatrix(&[0, 2, 4]);
        assert_eq!(s.to_dense(), vec![vec![2.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.0]]);
        let s = a.submatrix(&[1, 2]);
        assert_eq!(s.to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 2.0]]);
    }
}
