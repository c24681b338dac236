//! Dense symmetric linear algebra: eigensolvers and Cholesky.
//!
//! Matrices here are small-to-medium (d up to a few thousand) and always
//! symmetric, so self-contained solvers are used instead of LAPACK.
//! Cyclic Jacobi is the reference algorithm; above [`JACOBI_MAX_DIM`] the
//! Householder tridiagonalization + implicit QL path is used because Jacobi's
//! column updates scale badly (about 30 s at d = 768). Both produce the same
//! ordering and sign conventions.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Relative off-diagonal tolerance: stop once `off(A) <= tol * ||A||_F`.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Largest dimension [`symmetric_eigen`] hands to the Jacobi solver.
pub const JACOBI_MAX_DIM: usize = 64;
const QL_MAX_ITERATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolver {
    Jacobi,
    TridiagonalQl,
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

/// Largest absolute asymmetry `max |A - A^T|`.
pub fn max_asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix, picking the solver by size.
///
/// Eigenvalues come back in descending order (ties keep the solver's
/// order) and each eigenvector is sign-normalized so that its
/// largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<SymmetricEigen> {
    let solver = if a.nrows() <= JACOBI_MAX_DIM {
        EigenSolver::Jacobi
    } else {
        EigenSolver::TridiagonalQl
    };
    symmetric_eigen_with(a, solver)
}

pub fn symmetric_eigen_with(a: &Array2<f64>, solver: EigenSolver) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::arg(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "matrix passed to eigensolver has non-finite entries".into(),
        ));
    }
    let (diag, vectors, sweeps) = match solver {
        EigenSolver::Jacobi => jacobi(a)?,
        EigenSolver::TridiagonalQl => tridiagonal_ql(a)?,
    };
    Ok(sorted_pairs(n, diag, &vectors, sweeps))
}

/// Returns (eigenvalues, eigenvectors stored one per contiguous row, sweeps).
fn jacobi(a: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = a.nrows();

    // Row-major working copy of A, and V^T so that rotations touch contiguous rows.
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    if frob > 0.0 {
        let target = JACOBI_TOLERANCE * frob;
        loop {
            if off_diagonal_norm(&m, n) <= target {
                break;
            }
            if sweeps == JACOBI_MAX_SWEEPS {
                return Err(Error::Numerical(format!(
                    "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (n = {n}, off = {:.3e}, target = {:.3e})",
                    off_diagonal_norm(&m, n),
                    target
                )));
            }
            sweeps += 1;
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut m, &mut vt, n, p, q);
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    Ok((diag, vt, sweeps))
}

fn sorted_pairs(n: usize, diag: Vec<f64>, rows: &[f64], sweeps: usize) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        values.push(diag[src]);
        let row = &rows[src * n..(src + 1) * n];
        let mut pivot = 0;
        for k in 1..n {
            if row[k].abs() > row[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, col]] = sign * row[k];
        }
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut [f64], vt: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let g = 100.0 * apq.abs();
    if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        m[p * n + q] = 0.0;
        m[q * n + p] = 0.0;
        return;
    }
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[p * n + k];
        let akq = m[q * n + k];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        m[p * n + k] = new_p;
        m[k * n + p] = new_p;
        m[q * n + k] = new_q;
        m[k * n + q] = new_q;
    }
    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    let (head, tail) = vt.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let a = *vp;
        let b = *vq;
        *vp = c * a - s * b;
        *vq = s * a + c * b;
    }
}

/// Householder reduction to tridiagonal form followed by implicit QL
/// (the EISPACK tred2/tql2 pair). `V` is kept column-major so that both the
/// reduction and the QL rotations walk contiguous memory.
fn tridiagonal_ql(a: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Vec::new(), 0));
    }
    // vc[c * n + r] holds V[r][c]; A is symmetric so copying it row-major is the same.
    let mut vc: Vec<f64> = a.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    macro_rules! v {
        ($r:expr, $c:expr) => {
            vc[($c) * n + ($r)]
        };
    }

    for j in 0..n {
        d[j] = v!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
                v!(j, i) = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v!(j, i) = f;
                g = e[j] + v!(j, j) * f;
                for k in (j + 1)..i {
                    let vkj = v!(k, j);
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut vc[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v!(n - 1, i) = v!(i, i);
        v!(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v!(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v!(k, i + 1) * v!(k, j);
                }
                for k in 0..=i {
                    v!(k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v!(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
        v!(n - 1, j) = 0.0;
    }
    v!(n - 1, n - 1) = 1.0;
    e[0] = 0.0;

    // implicit QL on the tridiagonal (d, e)
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    let mut total_iter = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                total_iter += 1;
                if iter > QL_MAX_ITERATIONS {
                    return Err(Error::Numerical(format!(
                        "tridiagonal QL did not converge for eigenvalue {l} (n = {n})"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vc.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..];
                    let col_next = &mut hi[..n];
                    for (vi, vnext) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let hk = *vnext;
                        *vnext = s * *vi + c * hk;
                        *vi = c * *vi - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("tridiagonal QL produced non-finite eigenvalues".into()));
    }
    Ok((d, vc, total_iter))
}

/// Lower-triangular Cholesky factor `L` with `L L^T = A`, or `None` when `A`
/// is not numerically positive definite.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if diag.is_nan() || diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    Some(l)
}

/// Solve `L z = b` in place for lower-triangular `L`; returns `||z||^2`.
pub fn forward_solve_sq_norm(l: &Array2<f64>, b: &mut [f64]) -> f64 {
    let n = l.nrows();
    let mut sq = 0.0;
    for i in 0..n {
        let row = l.row(i);
        let mut v = b[i];
        for k in 0..i {
            v -= row[k] * b[k];
        }
        v /= row[i];
        b[i] = v;
        sq += v * v;
    }
    sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let e = symmetric_eigen(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[[1, 0]], 1.0);
        assert_eq!(e.vectors[[2, 1]], 1.0);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_known_pairs() {
        // [[2,1],[1,2]] has eigenpairs 3 -> (1,1)/sqrt2, 1 -> (1,-1)/sqrt2.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[[0, 0]] - h).abs() < 1e-14);
        assert!((e.vectors[[1, 0]] - h).abs() < 1e-14);
        // largest-magnitude entry made positive; tie goes to the first index
        assert!(e.vectors[[0, 1]] > 0.0);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let n = 9;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 0.5 } else { 0.0 };
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        let e = symmetric_eigen(&a).unwrap();
        let lam = Array2::from_diag(&ndarray::Array1::from(e.values.clone()));
        let back = e.vectors.dot(&lam).dot(&e.vectors.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let gram = e.vectors.t().dot(&e.vectors);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-12);
            }
        }
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn solvers_agree() {
        for n in [1usize, 2, 5, 17, 40] {
            let mut a = Array2::<f64>::zeros((n, n));
            let mut state = 0x9e3779b97f4a7c15u64 ^ n as u64;
            for i in 0..n {
                for j in 0..=i {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    let v = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                    a[[i, j]] = v;
                    a[[j, i]] = v;
                }
            }
            let jac = symmetric_eigen_with(&a, EigenSolver::Jacobi).unwrap();
            let ql = symmetric_eigen_with(&a, EigenSolver::TridiagonalQl).unwrap();
            for (x, y) in jac.values.iter().zip(&ql.values) {
                assert!((x - y).abs() < 1e-12, "n={n}: {x} vs {y}");
            }
            for (x, y) in jac.vectors.iter().zip(ql.vectors.iter()) {
                assert!((x - y).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn ql_handles_rank_deficient_and_zero() {
        let x = Array2::from_shape_fn((3, 70), |(i, j)| ((j * (i + 2) + i * i) % 11) as f64 - 5.0);
        let c = x.t().dot(&x);
        let e = symmetric_eigen(&c).unwrap();
        assert!(e.values[2] > 1.0);
        assert!(e.values[3..].iter().all(|v| v.abs() < 1e-9 * e.values[0]));
        let z = symmetric_eigen_with(&Array2::zeros((3, 3)), EigenSolver::TridiagonalQl).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let e = symmetric_eigen(&Array2::zeros((4, 4))).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        assert_eq!(e.vectors, Array2::<f64>::eye(4));
    }

    #[test]
    fn rejects_non_finite() {
        let a = array![[1.0, f64::NAN], [f64::NAN, 1.0]];
        assert!(matches!(symmetric_eigen(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn cholesky_roundtrip_and_failure() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let mut b = vec![2.0, 1.0];
        let sq = forward_solve_sq_norm(&l, &mut b);
        // b^T A^{-1} b with A^{-1} = [[3,-2],[-2,4]]/8
        let want = (3.0 * 4.0 - 2.0 * 2.0 * 2.0 * 1.0 + 4.0 * 1.0) / 8.0;
        assert!((sq - want).abs() < 1e-14);
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_none());
    }
}
