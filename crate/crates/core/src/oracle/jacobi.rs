//! Cyclic Jacobi eigensolver for real symmetric matrices.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (unsorted) and orthonormal eigenvectors as columns.
pub(crate) fn eigh(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// `V f(Λ) Vᵀ`.
pub(crate) fn apply_fn(vals: &[f64], vecs: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let w = f(l);
        for i in 0..n {
            scaled[(i, j)] *= w;
        }
    }
    &scaled * vecs.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let (vals, vecs) = eigh(&a);
        let back = apply_fn(&vals, &vecs, |x| x);
        assert!((back - &a).abs().max() < 1e-12);
        let id = vecs.transpose() * &vecs;
        assert!((id - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn diagonal_and_zero() {
        let (vals, _) = eigh(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0])));
        assert_eq!(vals, vec![3.0, -1.0]);
        let (vals, _) = eigh(&DMatrix::zeros(2, 2));
        assert_eq!(vals, vec![0.0, 0.0]);
    }
}
