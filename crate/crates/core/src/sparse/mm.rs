//! Matrix Market coordinate format, real general/symmetric.

use super::csr::CsrMatrix;
use super::SparseError;
use std::io::{BufRead, Write};

pub fn read_matrix_market(reader: impl BufRead) -> Result<CsrMatrix, SparseError> {
    let err = |line: usize, message: &str| SparseError::Parse {
        line,
        message: message.to_string(),
    };
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err(1, "expected `%%MatrixMarket matrix coordinate ...`"));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(err(1, "only real or integer fields are supported"));
    }
    let symmetric = match h[4] {
        "general" => false,
        "symmetric" => true,
        _ => return Err(err(1, "only general or symmetric matrices are supported")),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let ln = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(err(ln, "expected `rows cols nnz`"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad size"));
                let (r, c, nnz) = (p(f[0])?, p(f[1])?, p(f[2])?);
                if r != c {
                    return Err(err(ln, "matrix is not square"));
                }
                triplets.reserve(nnz);
                size = Some((r, nnz));
            }
            Some((n, _)) => {
                if f.len() != 3 {
                    return Err(err(ln, "expected `row col value`"));
                }
                let i: usize = f[0].parse().map_err(|_| err(ln, "bad row index"))?;
                let j: usize = f[1].parse().map_err(|_| err(ln, "bad column index"))?;
                let v: f64 = f[2].parse().map_err(|_| err(ln, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(err(ln, "index out of range"));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, _) = size.ok_or_else(|| err(1, "missing size line"))?;
    CsrMatrix::from_triplets(n, &triplets)
}

pub fn write_matrix_market(a: &CsrMatrix, mut w: impl Write) -> Result<(), SparseError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}
