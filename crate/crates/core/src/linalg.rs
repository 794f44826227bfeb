//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, RealField};

/// Orthonormalizes `vectors` in order, dropping any whose residual after
/// projection is below `tol`. Two passes of classical Gram–Schmidt.
pub fn gram_schmidt<T: RealField + Copy>(vectors: &[DVector<T>], tol: T) -> Vec<DVector<T>> {
    let mut basis: Vec<DVector<T>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, T::one());
            }
        }
        let n = w.norm();
        if n > tol {
            basis.push(w / n);
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of `span(rows)` in `T^d`,
/// built by projecting `e_0, e_1, ...` in index order. Deterministic for a
/// given input.
pub fn complement<T: RealField + Copy>(rows: &[DVector<T>], d: usize) -> Vec<DVector<T>> {
    let tol = T::from_f64(1e-9).unwrap();
    let q = gram_schmidt(rows, tol);
    let target = d.saturating_sub(q.len());
    let mut out: Vec<DVector<T>> = Vec::with_capacity(target);
    for i in 0..d {
        if out.len() == target {
            break;
        }
        let mut w = DVector::<T>::zeros(d);
        w[i] = T::one();
        for _ in 0..2 {
            for b in q.iter().chain(out.iter()) {
                let c = b.dot(&w);
                w.axpy(-c, b, T::one());
            }
        }
        let n = w.norm();
        // Projected coordinate vectors have norm >= 1/sqrt(d) for at least
        // `target` of them; a loose threshold keeps well-conditioned picks.
        if n > T::from_f64(0.5).unwrap() / T::from_usize(d).unwrap().sqrt() {
            out.push(w / n);
        }
    }
    if out.len() < target {
        // Fall back to accepting any nonzero remainder.
        for i in 0..d {
            if out.len() == target {
                break;
            }
            let mut w = DVector::<T>::zeros(d);
            w[i] = T::one();
            for _ in 0..2 {
                for b in q.iter().chain(out.iter()) {
                    let c = b.dot(&w);
                    w.axpy(-c, b, T::one());
                }
            }
            let n = w.norm();
            if n > tol {
                out.push(w / n);
            }
        }
    }
    out
}

/// Singular values of `a` in decreasing order.
pub fn singular_values<T: RealField + Copy>(a: &DMatrix<T>) -> Vec<T> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<T> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Orthonormal basis of the row space of `a` spanned by its `rank` largest
/// singular directions, from the eigenvectors of `a^T a`.
///
/// The SVD route is avoided on purpose: nalgebra's SVD can return right
/// singular vectors that are off by several percent for wide matrices with
/// an exactly rank-deficient tail.
pub fn row_space<T: RealField + Copy>(a: &DMatrix<T>, rank: usize) -> Vec<DVector<T>> {
    if a.is_empty() || rank == 0 {
        return Vec::new();
    }
    let eig = (a.transpose() * a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let top: Vec<DVector<T>> = idx
        .into_iter()
        .take(rank)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    gram_schmidt(&top, T::from_f64(1e-12).unwrap())
}

/// Orthonormal basis of the null space of `a` assuming it has rank `rank`.
pub fn null_space<T: RealField + Copy>(a: &DMatrix<T>, rank: usize) -> Vec<DVector<T>> {
    complement(&row_space(a, rank), a.ncols())
}

/// Columns as a matrix (`d x k`).
pub fn columns<T: RealField + Copy>(vs: &[DVector<T>], d: usize) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(d, vs.len());
    for (j, v) in vs.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inertia<T> {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
    /// Smallest |eigenvalue| divided by `max(1, largest |eigenvalue|)`.
    pub min_rel: T,
}

/// Inertia with a scale-free zero threshold: `|l| < zero_rel * max(1, max|l|)`.
pub fn inertia<T: RealField + Copy>(sym: &DMatrix<T>, zero_rel: T) -> Inertia<T> {
    if sym.is_empty() {
        return Inertia {
            n_plus: 0,
            n_minus: 0,
            n_zero: 0,
            min_rel: T::one(),
        };
    }
    let sym = (sym + sym.transpose()) * T::from_f64(0.5).unwrap();
    let eig = sym.symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::one(), |m, &l| if l.abs() > m { l.abs() } else { m });
    let mut out = Inertia {
        n_plus: 0,
        n_minus: 0,
        n_zero: 0,
        min_rel: T::max_value().unwrap_or(T::one()),
    };
    for &l in eig.eigenvalues.iter() {
        let rel = l.abs() / scale;
        if rel < out.min_rel {
            out.min_rel = rel;
        }
        if rel < zero_rel {
            out.n_zero += 1;
        } else if l > T::zero() {
            out.n_plus += 1;
        } else {
            out.n_minus += 1;
        }
    }
    out
}

/// Eigenpairs of a symmetric matrix sorted by increasing |eigenvalue|.
pub fn eigen_by_magnitude<T: RealField + Copy>(sym: &DMatrix<T>) -> Vec<(T, DVector<T>)> {
    let sym = (sym + sym.transpose()) * T::from_f64(0.5).unwrap();
    let eig = sym.symmetric_eigen();
    let mut pairs: Vec<(T, DVector<T>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| {
        a.0.abs()
            .partial_cmp(&b.0.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pairs
}

/// Sign of the determinant (`0` for a numerically singular matrix, `1` for
/// the empty matrix).
pub fn det_sign<T: RealField + Copy>(m: &DMatrix<T>) -> i32 {
    if m.is_empty() {
        return 1;
    }
    let d = m.clone().lu().determinant();
    if d > T::zero() {
        1
    } else if d < T::zero() {
        -1
    } else {
        0
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Full-row-rank systems go through the normal equations of `a a^T`;
/// everything else falls back to the SVD.
pub fn lstsq<T: RealField + Copy>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    if a.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    if a.nrows() <= a.ncols() {
        let gram = a * a.transpose();
        let scale = gram
            .diagonal()
            .iter()
            .fold(T::zero(), |m, &d| if d > m { d } else { m });
        if let Some(ch) = gram.clone().cholesky() {
            let dmin = ch
                .l_dirty()
                .diagonal()
                .iter()
                .fold(T::max_value().unwrap(), |m, &d| if d < m { d } else { m });
            if dmin * dmin > scale * T::from_f64(1e-20).unwrap() {
                return Some(a.transpose() * ch.solve(b));
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(T::zero(), |m, &s| if s > m { s } else { m });
    let eps = smax * T::from_f64(1e-13).unwrap() * T::from_usize(a.nrows().max(a.ncols())).unwrap();
    svd.solve(b, eps).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn row_space_of_wide_matrix_with_tiny_column() {
        // rows are parallel to e_0 up to 1e-15; the SVD route returned a
        // direction about 0.06 off here
        let j = DMatrix::<f64>::from_row_slice(
            2,
            3,
            &[
                0.6700034599816351,
                3.76e-17,
                -1.2e-48,
                -0.8194758365312235,
                -2.5535e-15,
                -1.9e-31,
            ],
        );
        let r = row_space(&j, 1);
        assert!(r[0][0].abs() > 1.0 - 1e-12);
        let k = null_space(&j, 1);
        for v in &k {
            assert!((&j * v).norm() < 1e-14);
        }
    }

    #[test]
    fn complement_of_a_plane_normal() {
        let n = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let c = complement(&[n], 3);
        assert_eq!(c.len(), 2);
        assert_relative_eq!(c[0], DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_relative_eq!(c[1], DVector::from_vec(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn null_space_of_rank_one_matrix() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let ns = null_space(&a, 1);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!((&a * v).norm() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_signs() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0, 1e-9, 5.0]));
        let i = inertia(&m, 1e-6);
        assert_eq!((i.n_plus, i.n_minus, i.n_zero), (2, 1, 1));
        assert!(i.min_rel < 1e-9);
    }

    #[test]
    fn inertia_is_generic_over_f32() {
        let m = DMatrix::<f32>::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let i = inertia(&m, 1e-4);
        assert_eq!((i.n_plus, i.n_minus, i.n_zero), (1, 1, 0));
    }

    #[test]
    fn det_sign_and_lstsq() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(det_sign(&m), -1);
        assert_eq!(det_sign(&DMatrix::<f64>::zeros(0, 0)), 1);
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let x = lstsq(&a, &DVector::from_vec(vec![5.0])).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![0.6, 0.8]), epsilon = 1e-12);
    }
}
