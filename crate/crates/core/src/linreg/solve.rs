//! Dense symmetric solves for the normal equations.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }
}

/// The factorization hit a pivot below `tol · max|diag|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    /// Column at which the symmetric factorization broke down.
    pub column: usize,
}

/// Relative pivot threshold below which a Gram matrix counts as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Solves `a x = b` for symmetric positive (semi)definite `a`. Tries a
/// Cholesky factorization first and falls back to LU with partial pivoting;
/// both reject pivots smaller than `SINGULAR_TOLERANCE · max|diag(a)|`.
pub fn solve_symmetric(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>, Singular> {
    let max_diag = a.max_abs_diagonal();
    if max_diag == 0.0 || !max_diag.is_finite() {
        return Err(Singular { column: 0 });
    }
    let tol = SINGULAR_TOLERANCE * max_diag;
    match cholesky_solve(a, b, tol) {
        Ok(x) => Ok(x),
        Err(chol) => lu_solve(a, b, tol).map_err(|_| chol),
    }
}

fn cholesky_solve(a: &SquareMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, Singular> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tol) {
            return Err(Singular { column: j });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    // L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // Lᵀ x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Ok(x)
}

fn lu_solve(a: &SquareMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, Singular> {
    let n = a.dim();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, m.get(r, col).abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > tol) {
            return Err(Singular { column: col });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        let p = m.get(col, col);
        for r in (col + 1)..n {
            let factor = m.get(r, col) / p;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m.add(r, c, -factor * m.get(col, c));
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..n {
            s -= m.get(i, k) * x[k];
        }
        x[i] = s / m.get(i, i);
    }
    Ok(x)
}
