//! Dense least squares on column-major data: Householder QR with column
//! pivoting, enough for a handful of regressors over many rows.

use num_traits::Float;

/// Least-squares fit of `y` on the given columns.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    /// Coefficient per input column; `None` for columns dropped as collinear.
    pub coefficients: Vec<Option<T>>,
    /// Indices of kept columns, in pivot order (the order of `xtx_inverse`).
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// `(X'X)^{-1}` over kept columns in pivot order.
    pub xtx_inverse: Vec<Vec<T>>,
    pub residuals: Vec<T>,
}

impl<T: Float> LeastSquares<T> {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Solves `min ||y - X b||` with `X` given as columns. A column is dropped
/// when its pivoted diagonal falls below `rel_tol` times the largest one.
pub fn least_squares<T: Float>(columns: &[Vec<T>], y: &[T], rel_tol: T) -> LeastSquares<T> {
    let k = columns.len();
    let n = y.len();
    assert!(columns.iter().all(|c| c.len() == n), "column lengths must match y");
    let mut work: Vec<Vec<T>> = columns.to_vec();
    let mut qty: Vec<T> = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut r = vec![vec![T::zero(); k]; k];
    let mut rank = 0;
    let mut first_diag = T::zero();

    for p in 0..k.min(n) {
        // pivot on the largest remaining norm below row p
        let (best, best_norm) = (p..k)
            .map(|j| (j, dot(&work[j][p..], &work[j][p..]).sqrt()))
            .fold((p, T::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if p == 0 {
            first_diag = best_norm;
        }
        if best_norm <= rel_tol * first_diag || best_norm == T::zero() {
            break;
        }
        work.swap(p, best);
        perm.swap(p, best);
        for row in r.iter_mut() {
            row.swap(p, best);
        }

        let x0 = work[p][p];
        let alpha = if x0 >= T::zero() { -best_norm } else { best_norm };
        let mut v: Vec<T> = work[p][p..].to_vec();
        v[0] = v[0] - alpha;
        let vv = dot(&v, &v);
        if vv > T::zero() {
            let beta = (T::one() + T::one()) / vv;
            for col in work.iter_mut().skip(p + 1) {
                let s = beta * dot(&v, &col[p..]);
                for (c, vi) in col[p..].iter_mut().zip(&v) {
                    *c = *c - s * *vi;
                }
            }
            let s = beta * dot(&v, &qty[p..]);
            for (c, vi) in qty[p..].iter_mut().zip(&v) {
                *c = *c - s * *vi;
            }
        }
        work[p][p] = alpha;
        for i in (p + 1)..n {
            work[p][i] = T::zero();
        }
        for j in p..k {
            r[p][j] = work[j][p];
        }
        rank = p + 1;
    }

    // back substitution on the leading rank x rank block
    let mut b = vec![T::zero(); rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for j in (i + 1)..rank {
            s = s - r[i][j] * b[j];
        }
        b[i] = s / r[i][i];
    }

    // R^{-1} (upper triangular), then (X'X)^{-1} = R^{-1} R^{-T}
    let mut rinv = vec![vec![T::zero(); rank]; rank];
    for j in 0..rank {
        rinv[j][j] = T::one() / r[j][j];
        for i in (0..j).rev() {
            let mut s = T::zero();
            for m in (i + 1)..=j {
                s = s + r[i][m] * rinv[m][j];
            }
            rinv[i][j] = -s / r[i][i];
        }
    }
    let mut xtx_inverse = vec![vec![T::zero(); rank]; rank];
    for i in 0..rank {
        for j in 0..rank {
            let from = i.max(j);
            let mut s = T::zero();
            for m in from..rank {
                s = s + rinv[i][m] * rinv[j][m];
            }
            xtx_inverse[i][j] = s;
        }
    }

    let kept: Vec<usize> = perm[..rank].to_vec();
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();
    let mut coefficients = vec![None; k];
    for (pos, &col) in kept.iter().enumerate() {
        coefficients[col] = Some(b[pos]);
    }
    let mut residuals = y.to_vec();
    for (pos, &col) in kept.iter().enumerate() {
        let c = b[pos];
        for (e, x) in residuals.iter_mut().zip(&columns[col]) {
            *e = *e - c * *x;
        }
    }
    LeastSquares { coefficients, kept, dropped, xtx_inverse, residuals }
}
