//! Dense complex linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// `(M + M†)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `M − M†`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `|a⟩⟨b|`.
pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// `⟨a|b⟩`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// `⟨a|M|b⟩`.
pub fn sandwich(a: &CVector, m: &CMatrix, b: &CVector) -> C64 {
    a.dotc(&(m * b))
}

/// Eigenvalues of a general complex matrix from the diagonal of its complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Vec<C64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let (_, t) = m.clone().schur().unpack();
    (0..n).map(|k| t[(k, k)]).collect()
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Smallest eigenvalue of the Hermitian part of `m` (closed form for 2×2).
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 2 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
        let half = 0.5 * (a - d);
        0.5 * (a + d) - (half * half + b.norm_sqr()).sqrt()
    } else {
        hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
    }
}

/// Singular value decomposition with singular values sorted descending.
fn sorted_svd(a: &CMatrix) -> (Vec<f64>, CMatrix, CMatrix) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u = CMatrix::from_columns(&order.iter().map(|&k| u.column(k).into_owned()).collect::<Vec<_>>());
    let v = CMatrix::from_columns(&order.iter().map(|&k| v.column(k).into_owned()).collect::<Vec<_>>());
    (s, u, v)
}

/// Orthonormal basis (as columns) of the null space of `a`, keeping singular values `≤ tol`.
pub fn nullspace(a: &CMatrix, tol: f64) -> CMatrix {
    let cols = a.ncols();
    if cols == 0 {
        return zeros(0, 0);
    }
    let padded = if a.nrows() < cols { a.clone().resize_vertically(cols, ZERO) } else { a.clone() };
    let (s, _, v) = sorted_svd(&padded);
    let rank = s.iter().filter(|&&x| x > tol).count();
    v.columns(rank, cols - rank).into_owned()
}

/// Smallest singular value of `a`, zero for empty matrices.
pub fn min_singular_value(a: &CMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let (s, _, _) = sorted_svd(a);
    if a.nrows() < a.ncols() {
        0.0
    } else {
        s.last().copied().unwrap_or(0.0)
    }
}

/// Modified Gram–Schmidt with one reorthogonalisation pass against `against` and the accepted columns.
/// Columns whose residual norm falls below `drop_tol` are discarded.
pub fn gram_schmidt(vectors: &[CVector], against: &[CVector], drop_tol: f64) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in against.iter().chain(basis.iter()) {
                let proj = q.dotc(&w);
                w -= q * proj;
            }
        }
        let norm = w.norm();
        if norm > drop_tol {
            basis.push(w / C64::from(norm));
        }
    }
    basis
}

pub fn columns(m: &CMatrix) -> Vec<CVector> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

pub fn from_columns(dim: usize, cols: &[CVector]) -> CMatrix {
    if cols.is_empty() {
        zeros(dim, 0)
    } else {
        CMatrix::from_columns(cols)
    }
}

/// Orthonormal completion: columns spanning the orthogonal complement of `basis`, seeded by `seeds`
/// and then the canonical basis vectors.
pub fn orthogonal_completion(dim: usize, basis: &[CVector], seeds: &[CVector]) -> Vec<CVector> {
    let target = dim - basis.len();
    let mut comp = gram_schmidt(seeds, basis, 1e-8);
    comp.truncate(target);
    if comp.len() < target {
        let against: Vec<CVector> = basis.iter().chain(comp.iter()).cloned().collect();
        let canon: Vec<CVector> = (0..dim)
            .map(|k| {
                let mut e = CVector::zeros(dim);
                e[k] = ONE;
                e
            })
            .collect();
        let extra = gram_schmidt(&canon, &against, 1e-8);
        comp.extend(extra.into_iter().take(target - comp.len()));
    }
    comp
}

/// Unitary factor of the polar decomposition `W = U·H`.
pub fn polar_unitary(w: &CMatrix) -> CMatrix {
    let svd = w.clone().svd(true, true);
    svd.u.expect("requested U") * svd.v_t.expect("requested V^T")
}

/// Index of the largest-modulus component.
pub fn argmax_abs(v: &CVector) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].norm() > v[best].norm() {
            best = k;
        }
    }
    best
}

/// Rotates `v` so that its largest-modulus component is real and positive.
pub fn phase_fix_largest(v: &CVector) -> CVector {
    let k = argmax_abs(v);
    let z = v[k];
    if z.norm() == 0.0 {
        return v.clone();
    }
    v * (z.conj() / z.norm())
}

/// Projector onto the span of orthonormal columns.
pub fn projector(basis: &CMatrix) -> CMatrix {
    basis * basis.adjoint()
}

/// Cosine of the largest principal angle between two column spaces of equal dimension.
pub fn subspace_overlap(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.ncols() == 0 {
        return 1.0;
    }
    min_singular_value(&(a.adjoint() * b))
}

/// Operator 2-norm bound used to set step sizes: the Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_triangular_matrix() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(2.0, 0.0), ZERO, c(-0.5, 0.0)]);
        let mut ev = eigenvalues(&m);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(-0.5, 0.0)).norm() < 1e-14);
        assert!((ev[1] - c(1.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn nullspace_of_rank_one() {
        let m = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let ns = nullspace(&m, 1e-12);
        assert_eq!(ns.ncols(), 1);
        assert!((ns[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nullspace_of_wide_matrix_uses_full_v() {
        let m = CMatrix::from_row_slice(1, 3, &[ONE, ONE, ZERO]);
        let ns = nullspace(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&m * &ns)) < 1e-14);
    }

    #[test]
    fn min_eigenvalue_closed_form_matches_general() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.2, -0.3), c(0.2, 0.3), c(0.3, 0.0)]);
        let general = hermitian_eigenvalues(&m)[0];
        assert!((min_hermitian_eigenvalue(&m) - general).abs() < 1e-14);
    }

    #[test]
    fn polar_factor_is_unitary() {
        let w = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.2), c(0.1, 0.0), c(-0.3, 0.4), c(0.9, -0.1)]);
        let u = polar_unitary(&w);
        assert!(max_abs(&(u.adjoint() * &u - identity(2))) < 1e-14);
    }

    #[test]
    fn completion_spans_complement() {
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0), ZERO]).normalize();
        let comp = orthogonal_completion(3, std::slice::from_ref(&v), &[]);
        assert_eq!(comp.len(), 2);
        for q in &comp {
            assert!(inner(&v, q).norm() < 1e-14);
        }
        assert!(inner(&comp[0], &comp[1]).norm() < 1e-14);
    }
}
