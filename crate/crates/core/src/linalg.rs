//! Small complex linear-algebra helpers shared by the simulator modules.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVec = Array1<C64>;
pub type CMat = Array2<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `a ⊗ b` for column vectors.
pub fn kron_vec(a: ArrayView1<'_, C64>, b: ArrayView1<'_, C64>) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        let base = i * b.len();
        for (j, &bj) in b.iter().enumerate() {
            out[base + j] = ai * bj;
        }
    }
    out
}

/// `a ⊗ b` for matrices.
pub fn kron(a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(&b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

/// Column-major vectorisation, `vec(X)`.
pub fn vec_col_major(x: ArrayView2<'_, C64>) -> CVec {
    x.t().iter().copied().collect()
}

/// Inverse of [`vec_col_major`].
pub fn unvec_col_major(v: ArrayView1<'_, C64>, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols);
    CMat::from_shape_fn((rows, cols), |(r, c)| v[r + rows * c])
}

pub fn norm_sq(v: ArrayView1<'_, C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob_sq(m: ArrayView2<'_, C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `aᴴ b`.
pub fn dot_h(a: ArrayView1<'_, C64>, b: ArrayView1<'_, C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn conj_mat(m: ArrayView2<'_, C64>) -> CMat {
    m.mapv(|z| z.conj())
}

/// Conjugate transpose.
pub fn herm(m: ArrayView2<'_, C64>) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Solves the Hermitian positive-definite system `A X = B` by Cholesky.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky_solve(a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> Option<CMat> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let mut l = CMat::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / d;
        }
    }
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        // forward: L z = b
        for i in 0..n {
            let mut acc = col[i];
            for k in 0..i {
                acc -= l[[i, k]] * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
        // backward: Lᴴ x = z
        for i in (0..n).rev() {
            let mut acc = col[i];
            for k in i + 1..n {
                acc -= l[[k, i]].conj() * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
    }
    Some(x)
}

/// Reason a column could not be appended to an [`IncrementalQr`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDeficient {
    /// Norm of the orthogonal remainder relative to the column norm.
    pub relative_remainder: f64,
}

/// Least squares over a growing set of columns, kept as a thin QR
/// factorisation built with twice-iterated classical Gram-Schmidt.
///
/// The right-hand side may hold several columns; every column shares the
/// same basis. The residual is updated as each basis vector is added.
#[derive(Debug, Clone)]
pub struct IncrementalQr {
    rows: usize,
    /// Orthonormal basis vectors, one per accepted column.
    basis: Vec<CVec>,
    /// Upper-triangular factor, stored by column: `r[j][i]` for `i <= j`.
    r: Vec<Vec<C64>>,
    /// `Qᴴ Y`, one row per basis vector.
    projections: Vec<Vec<C64>>,
    residual: CMat,
    rhs_norm_sq: f64,
    /// Columns whose orthogonal remainder falls below this fraction of their
    /// norm are rejected (reciprocal condition-number proxy).
    pub rcond_floor: f64,
}

impl IncrementalQr {
    pub fn new(rhs: ArrayView2<'_, C64>) -> Self {
        Self {
            rows: rhs.nrows(),
            basis: Vec::new(),
            r: Vec::new(),
            projections: Vec::new(),
            residual: rhs.to_owned(),
            rhs_norm_sq: frob_sq(rhs),
            rcond_floor: 1e-10,
        }
    }

    pub fn from_vector(rhs: ArrayView1<'_, C64>) -> Self {
        let n = rhs.len();
        let m = rhs.to_owned().into_shape_with_order((n, 1)).expect("column shape");
        Self::new(m.view())
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn residual(&self) -> &CMat {
        &self.residual
    }

    pub fn residual_column(&self) -> ArrayView1<'_, C64> {
        self.residual.column(0)
    }

    pub fn residual_norm_sq(&self) -> f64 {
        frob_sq(self.residual.view())
    }

    pub fn rhs_norm_sq(&self) -> f64 {
        self.rhs_norm_sq
    }

    /// Appends a column. On rank deficiency the factorisation is unchanged.
    pub fn push(&mut self, column: ArrayView1<'_, C64>) -> Result<(), RankDeficient> {
        assert_eq!(column.len(), self.rows);
        let col_norm = norm_sq(column).sqrt();
        if col_norm == 0.0 {
            return Err(RankDeficient { relative_remainder: 0.0 });
        }
        let mut v = column.to_owned();
        let mut coeffs = vec![ZERO; self.basis.len()];
        for _pass in 0..2 {
            for (k, q) in self.basis.iter().enumerate() {
                let c = dot_h(q.view(), v.view());
                coeffs[k] += c;
                v.zip_mut_with(q, |vi, &qi| *vi -= c * qi);
            }
        }
        let rem = norm_sq(v.view()).sqrt();
        if rem <= self.rcond_floor * col_norm {
            return Err(RankDeficient { relative_remainder: rem / col_norm });
        }
        v.mapv_inplace(|z| z / rem);
        coeffs.push(C64::new(rem, 0.0));
        // project residual onto the new direction; Qᴴ Y for the new row equals qᴴ r
        // because r is already orthogonal to the earlier basis vectors.
        let mut proj_row = Vec::with_capacity(self.residual.ncols());
        for mut rc in self.residual.axis_iter_mut(Axis(1)) {
            let c = dot_h(v.view(), rc.view());
            rc.zip_mut_with(&v, |ri, &qi| *ri -= c * qi);
            proj_row.push(c);
        }
        self.projections.push(proj_row);
        self.basis.push(v);
        self.r.push(coeffs);
        Ok(())
    }

    /// Least-squares coefficients, one column per right-hand side.
    pub fn solve(&self) -> CMat {
        let k = self.basis.len();
        let ncols = self.residual.ncols();
        let mut x = CMat::zeros((k, ncols));
        for c in 0..ncols {
            for i in (0..k).rev() {
                let mut acc = self.projections[i][c];
                for j in i + 1..k {
                    acc -= self.r[j][i] * x[[j, c]];
                }
                x[[i, c]] = acc / self.r[i][i];
            }
        }
        x
    }

    /// Coefficients for a single right-hand side.
    pub fn solve_vector(&self) -> CVec {
        self.solve().column(0).to_owned()
    }

    /// Orthogonal projection of `y` onto the current span, `Q Qᴴ y`.
    pub fn fitted(&self) -> CMat {
        let mut out = CMat::zeros((self.rows, self.residual.ncols()));
        for (q, proj) in self.basis.iter().zip(&self.projections) {
            for (c, &p) in proj.iter().enumerate() {
                let mut col = out.column_mut(c);
                col.zip_mut_with(q, |o, &qi| *o += p * qi);
            }
        }
        out
    }

    /// `max |r_ii| / min |r_ii|`, a cheap lower bound on the condition number.
    pub fn diagonal_condition(&self) -> f64 {
        let diag: Vec<f64> = self.r.iter().enumerate().map(|(i, c)| c[i].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if diag.is_empty() {
            1.0
        } else {
            max / min
        }
    }
}
