//! Symmetric 3×3 tensors and the eigenspace machinery of Reynolds stresses.
//!
//! A Reynolds stress is stored per unit density. Its eigenspace form is
//! `R = 2k (V Λ Vᵀ + I/3)` where `k` is the turbulent kinetic energy and
//! `Λ` holds the eigenvalues of the normalized anisotropy tensor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest TKE that can be normalized into an anisotropy tensor.
pub const K_FLOOR: f64 = 1e-12;
/// Round-off allowance for positive semi-definiteness checks.
pub const TOL_PSD: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 50;
const DEGENERATE_GAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("turbulent kinetic energy {k:e} is at or below the floor {K_FLOOR:e}")]
    DegenerateTke { k: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("anisotropy eigenvalue {value} lies outside [-1/3, 2/3]")]
    NonRealizableEigenvalues { value: f64 },
    #[error("turbulent kinetic energy must be non-negative, got {k}")]
    NegativeTke { k: f64 },
    #[error("invalid barycentric weights ({c1}, {c2}, {c3})")]
    InvalidBarycentric { c1: f64, c2: f64, c3: f64 },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3 {
        xx: 0.0,
        yy: 0.0,
        zz: 0.0,
        xy: 0.0,
        xz: 0.0,
        yz: 0.0,
    };

    pub fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        Self { xx, yy, zz, xy, xz, yz }
    }

    pub fn diag(xx: f64, yy: f64, zz: f64) -> Self {
        Self::new(xx, yy, zz, 0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    /// Components in `xx, yy, zz, xy, xz, yz` order.
    pub fn components(&self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        Self::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    /// Symmetric part of a full matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        Self::new(
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        )
    }

    pub fn to_matrix(&self) -> Mat3 {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|c| alpha * c)
    }

    pub fn add(&self, other: &SymTensor3) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymTensor3) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_components(self.components().map(f))
    }

    pub fn zip(&self, other: &SymTensor3, f: impl Fn(f64, f64) -> f64) -> Self {
        let a = self.components();
        let b = other.components();
        Self::from_components(std::array::from_fn(|i| f(a[i], b[i])))
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn max_abs_diff(&self, other: &SymTensor3) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }

    /// Frobenius norm of the full (symmetric) matrix.
    pub fn frobenius(&self) -> f64 {
        let [xx, yy, zz, xy, xz, yz] = self.components();
        (xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz)).sqrt()
    }
}

/// Turbulent kinetic energy, half the trace.
pub fn tke(r: &SymTensor3) -> f64 {
    0.5 * r.trace()
}

/// Normalized, traceless anisotropy `b = R/(2k) − I/3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyTensor(pub SymTensor3);

impl AnisotropyTensor {
    pub fn isotropic() -> Self {
        AnisotropyTensor(SymTensor3::ZERO)
    }

    pub fn tensor(&self) -> &SymTensor3 {
        &self.0
    }
}

pub fn anisotropy(r: &SymTensor3) -> Result<AnisotropyTensor> {
    let k = tke(r);
    // also rejects NaN
    if !(k > K_FLOOR) {
        return Err(TensorError::DegenerateTke { k });
    }
    let third = 1.0 / 3.0;
    let s = 1.0 / (2.0 * k);
    Ok(AnisotropyTensor(SymTensor3::new(
        r.xx * s - third,
        r.yy * s - third,
        r.zz * s - third,
        r.xy * s,
        r.xz * s,
        r.yz * s,
    )))
}

/// Eigenvalues in descending order with a right-handed orthonormal frame.
///
/// `eigenvectors[i][j]` is component `i` of eigenvector `j` (columns are
/// eigenvectors).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomp {
    pub eigenvalues: [f64; 3],
    pub eigenvectors: Mat3,
}

impl EigenDecomp {
    pub fn column(&self, j: usize) -> [f64; 3] {
        column(&self.eigenvectors, j)
    }

    /// `V diag(λ) Vᵀ`.
    pub fn compose(&self) -> SymTensor3 {
        let v = &self.eigenvectors;
        let l = &self.eigenvalues;
        let entry = |i: usize, j: usize| (0..3).map(|n| v[i][n] * l[n] * v[j][n]).sum::<f64>();
        SymTensor3::new(
            entry(0, 0),
            entry(1, 1),
            entry(2, 2),
            entry(0, 1),
            entry(0, 2),
            entry(1, 2),
        )
    }
}

pub fn column(m: &Mat3, j: usize) -> [f64; 3] {
    [m[0][j], m[1][j], m[2][j]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|n| a[i][n] * b[n][j]).sum()))
}

pub fn transpose(a: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

pub fn determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Eigendecomposition of a symmetric 3×3 tensor by cyclic Jacobi rotations.
///
/// Output columns are ordered by descending eigenvalue. Within a degenerate
/// cluster (gap below 1e-12) columns are ordered lexicographically, largest
/// first, after each column has been sign-normalized so its largest-magnitude
/// component is positive. The last column is flipped when needed to make the
/// frame right-handed.
pub fn eig_sym3(a: &SymTensor3) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(TensorError::NoConvergence { sweeps: 0 });
    }
    let mut m = a.to_matrix();
    let mut v = IDENTITY;
    let tol = JACOBI_TOL * a.frobenius();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (2.0 * (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2])).sqrt();
        if off <= tol {
            converged = true;
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = IDENTITY;
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            m = mat_mul(&transpose(&rot), &mat_mul(&m, &rot));
            m[p][q] = 0.0;
            m[q][p] = 0.0;
            v = mat_mul(&v, &rot);
        }
    }
    if !converged {
        return Err(TensorError::NoConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }

    let mut pairs: Vec<(f64, [f64; 3])> = (0..3)
        .map(|j| (m[j][j], normalize_sign(column(&v, j))))
        .collect();
    // insertion sort; the tolerance-based comparison is not a total order
    for i in 1..pairs.len() {
        let mut j = i;
        while j > 0 && precedes(&pairs[j], &pairs[j - 1]) {
            pairs.swap(j, j - 1);
            j -= 1;
        }
    }

    let mut vectors = [[0.0; 3]; 3];
    for (j, (_, col)) in pairs.iter().enumerate() {
        for i in 0..3 {
            vectors[i][j] = col[i];
        }
    }
    if determinant(&vectors) < 0.0 {
        for row in vectors.iter_mut() {
            row[2] = -row[2];
        }
    }
    Ok(EigenDecomp {
        eigenvalues: [pairs[0].0, pairs[1].0, pairs[2].0],
        eigenvectors: vectors,
    })
}

fn normalize_sign(mut col: [f64; 3]) -> [f64; 3] {
    let mut imax = 0;
    for i in 1..3 {
        if col[i].abs() > col[imax].abs() {
            imax = i;
        }
    }
    if col[imax] < 0.0 {
        col.iter_mut().for_each(|c| *c = -*c);
    }
    col
}

fn precedes(a: &(f64, [f64; 3]), b: &(f64, [f64; 3])) -> bool {
    if (a.0 - b.0).abs() < DEGENERATE_GAP {
        a.1.partial_cmp(&b.1) == Some(std::cmp::Ordering::Greater)
    } else {
        a.0 > b.0
    }
}

/// `R = 2k (V Λ Vᵀ + I/3)` from a TKE and anisotropy eigenpairs.
pub fn reconstruct(k: f64, d: &EigenDecomp) -> Result<SymTensor3> {
    if !(k >= 0.0) {
        return Err(TensorError::NegativeTke { k });
    }
    for &value in &d.eigenvalues {
        if !(-1.0 / 3.0 - TOL_PSD..=2.0 / 3.0 + TOL_PSD).contains(&value) {
            return Err(TensorError::NonRealizableEigenvalues { value });
        }
    }
    let third = 1.0 / 3.0;
    let b = d.compose();
    Ok(SymTensor3::new(
        2.0 * k * (b.xx + third),
        2.0 * k * (b.yy + third),
        2.0 * k * (b.zz + third),
        2.0 * k * b.xy,
        2.0 * k * b.xz,
        2.0 * k * b.yz,
    ))
}

/// Weights of the one-, two- and three-component limiting states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarycentricPoint {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl BarycentricPoint {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Self {
        Self { c1, c2, c3 }
    }

    pub fn sum(&self) -> f64 {
        self.c1 + self.c2 + self.c3
    }

    pub fn max_abs_diff(&self, other: &BarycentricPoint) -> f64 {
        (self.c1 - other.c1)
            .abs()
            .max((self.c2 - other.c2).abs())
            .max((self.c3 - other.c3).abs())
    }
}

/// Maps descending anisotropy eigenvalues onto the barycentric triangle.
pub fn barycentric(lambda: &[f64; 3]) -> BarycentricPoint {
    let [l1, l2, l3] = *lambda;
    BarycentricPoint {
        c1: l1 - l2,
        c2: 2.0 * (l2 - l3),
        c3: 3.0 * l3 + 1.0,
    }
}

pub fn from_barycentric(p: &BarycentricPoint) -> Result<[f64; 3]> {
    let valid = [p.c1, p.c2, p.c3].iter().all(|c| *c >= -1e-12) && (p.sum() - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(TensorError::InvalidBarycentric {
            c1: p.c1,
            c2: p.c2,
            c3: p.c3,
        });
    }
    let l3 = (p.c3 - 1.0) / 3.0;
    let l2 = l3 + 0.5 * p.c2;
    let l1 = l2 + p.c1;
    Ok([l1, l2, l3])
}

/// True iff the smallest eigenvalue is at least `-tol`.
pub fn is_realizable(r: &SymTensor3, tol: f64) -> bool {
    match eig_sym3(r) {
        Ok(d) => d.eigenvalues[2] >= -tol,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn psd_from(a: [f64; 9]) -> SymTensor3 {
        let m: Mat3 = [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]];
        SymTensor3::from_matrix(&mat_mul(&m, &transpose(&m)))
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn tke_examples() {
        let third = 2.0 / 3.0;
        assert_eq!(tke(&SymTensor3::diag(third, third, third)), 1.0);
        assert_eq!(tke(&SymTensor3::ZERO), 0.0);
        assert_close(tke(&SymTensor3::diag(1.0, 0.6, 0.4)), 1.0, 1e-15);
    }

    #[test]
    fn anisotropy_examples() {
        let t = 2.0 / 3.0;
        let b = anisotropy(&SymTensor3::diag(t, t, t)).unwrap();
        assert!(b.0.max_abs() < 1e-15);

        let b = anisotropy(&SymTensor3::diag(2.0, 0.0, 0.0)).unwrap();
        assert!(b.0.max_abs_diff(&SymTensor3::diag(2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0)) < 1e-15);

        let b = anisotropy(&SymTensor3::diag(1.0, 0.6, 0.4)).unwrap();
        let expected = SymTensor3::diag(1.0 / 6.0, -1.0 / 30.0, -2.0 / 15.0);
        assert!(b.0.max_abs_diff(&expected) < 1e-15);
        assert!(b.0.trace().abs() < 1e-12);
    }

    #[test]
    fn anisotropy_rejects_zero_energy() {
        assert!(matches!(
            anisotropy(&SymTensor3::ZERO),
            Err(TensorError::DegenerateTke { .. })
        ));
        assert!(anisotropy(&SymTensor3::diag(1e-13, 0.0, 0.0)).is_err());
    }

    #[test]
    fn eig_of_diagonal_is_signed_permutation() {
        let d = eig_sym3(&SymTensor3::diag(3.0, 1.0, 2.0)).unwrap();
        assert_eq!(d.eigenvalues, [3.0, 2.0, 1.0]);
        assert_eq!(d.column(0), [1.0, 0.0, 0.0]);
        assert_eq!(d.column(1), [0.0, 0.0, 1.0]);
        assert_eq!(d.column(2), [0.0, -1.0, 0.0]);
        assert_eq!(determinant(&d.eigenvectors), 1.0);
    }

    #[test]
    fn eig_of_zero_is_identity_frame() {
        let d = eig_sym3(&SymTensor3::ZERO).unwrap();
        assert_eq!(d.eigenvalues, [0.0; 3]);
        assert_eq!(d.eigenvectors, IDENTITY);
    }

    #[test]
    fn eig_of_isotropic_is_identity_frame() {
        let d = eig_sym3(&SymTensor3::identity().scale(0.7)).unwrap();
        assert_eq!(d.eigenvectors, IDENTITY);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let bad = SymTensor3::diag(f64::NAN, 0.0, 1.0);
        assert!(matches!(eig_sym3(&bad), Err(TensorError::NoConvergence { .. })));
        assert!(!is_realizable(&bad, TOL_PSD));
    }

    #[test]
    fn eig_handles_large_scale() {
        let r = SymTensor3::new(3e6, 1e6, 2e6, 5e5, -2e5, 1e5);
        let d = eig_sym3(&r).unwrap();
        assert!(d.compose().max_abs_diff(&r) < 1e-9 * r.max_abs());
    }

    #[test]
    fn reconstruct_examples() {
        let iso = EigenDecomp {
            eigenvalues: [0.0; 3],
            eigenvectors: IDENTITY,
        };
        let r = reconstruct(1.0, &iso).unwrap();
        let t = 2.0 / 3.0;
        assert!(r.max_abs_diff(&SymTensor3::diag(t, t, t)) < 1e-15);

        let one_c = EigenDecomp {
            eigenvalues: [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
            eigenvectors: IDENTITY,
        };
        let r = reconstruct(1.0, &one_c).unwrap();
        assert!(r.max_abs_diff(&SymTensor3::diag(2.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn reconstruct_rejects_bad_input() {
        let bad = EigenDecomp {
            eigenvalues: [0.8, -0.4, -0.4],
            eigenvectors: IDENTITY,
        };
        assert!(matches!(
            reconstruct(1.0, &bad),
            Err(TensorError::NonRealizableEigenvalues { .. })
        ));
        let iso = EigenDecomp {
            eigenvalues: [0.0; 3],
            eigenvectors: IDENTITY,
        };
        assert!(matches!(reconstruct(-1.0, &iso), Err(TensorError::NegativeTke { .. })));
    }

    #[test]
    fn barycentric_corners() {
        let corner = |l: [f64; 3]| barycentric(&l);
        assert_eq!(corner([0.0, 0.0, 0.0]), BarycentricPoint::new(0.0, 0.0, 1.0));
        assert!(corner([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]).max_abs_diff(&BarycentricPoint::new(1.0, 0.0, 0.0)) < 1e-15);
        assert!(corner([1.0 / 6.0, 1.0 / 6.0, -1.0 / 3.0]).max_abs_diff(&BarycentricPoint::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn from_barycentric_examples() {
        let l = from_barycentric(&BarycentricPoint::new(1.0, 0.0, 0.0)).unwrap();
        assert_close(l[0], 2.0 / 3.0, 1e-15);
        assert_close(l[1], -1.0 / 3.0, 1e-15);
        assert_close(l[2], -1.0 / 3.0, 1e-15);
        assert_eq!(from_barycentric(&BarycentricPoint::new(0.0, 0.0, 1.0)).unwrap(), [0.0; 3]);

        let p = BarycentricPoint::new(0.2, 0.3, 0.5);
        let l = from_barycentric(&p).unwrap();
        assert!(barycentric(&l).max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn from_barycentric_rejects_invalid() {
        assert!(from_barycentric(&BarycentricPoint::new(-0.1, 0.6, 0.5)).is_err());
        assert!(from_barycentric(&BarycentricPoint::new(0.2, 0.3, 0.6)).is_err());
    }

    #[test]
    fn realizability_examples() {
        assert!(is_realizable(&SymTensor3::identity(), TOL_PSD));
        assert!(!is_realizable(&SymTensor3::diag(1.0, 1.0, -0.5), TOL_PSD));
    }

    fn entries() -> impl Strategy<Value = [f64; 9]> {
        prop::array::uniform9(-1.0f64..1.0)
    }

    proptest! {
        #[test]
        fn eigen_residual_is_small(a in prop::array::uniform6(-1.0f64..1.0)) {
            let t = SymTensor3::from_components(a);
            let d = eig_sym3(&t).unwrap();
            let m = t.to_matrix();
            for j in 0..3 {
                let v = d.column(j);
                for i in 0..3 {
                    let av: f64 = (0..3).map(|n| m[i][n] * v[n]).sum();
                    prop_assert!((av - d.eigenvalues[j] * v[i]).abs() <= 1e-9);
                }
            }
            prop_assert!(d.eigenvalues[0] >= d.eigenvalues[1] && d.eigenvalues[1] >= d.eigenvalues[2]);
            let vtv = mat_mul(&transpose(&d.eigenvectors), &d.eigenvectors);
            for i in 0..3 {
                for j in 0..3 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((vtv[i][j] - expected).abs() <= 1e-10);
                }
            }
            prop_assert!((determinant(&d.eigenvectors) - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn round_trip_through_eigenspace(a in entries()) {
            let r = psd_from(a);
            prop_assume!(tke(&r) > K_FLOOR);
            let d = eig_sym3(&anisotropy(&r).unwrap().0).unwrap();
            let back = reconstruct(tke(&r), &d).unwrap();
            prop_assert!(back.max_abs_diff(&r) <= 1e-10);
            prop_assert!((tke(&back) - tke(&r)).abs() <= 1e-12);
        }

        #[test]
        fn anisotropy_eigenvalues_are_bounded(a in entries()) {
            let r = psd_from(a);
            prop_assume!(tke(&r) > K_FLOOR);
            let b = anisotropy(&r).unwrap();
            prop_assert!(b.0.trace().abs() <= 1e-12);
            let d = eig_sym3(&b.0).unwrap();
            prop_assert!(d.eigenvalues[0] <= 2.0 / 3.0 + 1e-12);
            prop_assert!(d.eigenvalues[2] >= -1.0 / 3.0 - 1e-12);
            let p = barycentric(&d.eigenvalues);
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(p.c1 >= -1e-12 && p.c2 >= -1e-12 && p.c3 >= -1e-12);
        }

        #[test]
        fn barycentric_is_bijective(c1 in 0.0f64..1.0, frac in 0.0f64..1.0) {
            let c2 = (1.0 - c1) * frac;
            let p = BarycentricPoint::new(c1, c2, 1.0 - c1 - c2);
            let l = from_barycentric(&p).unwrap();
            prop_assert!(barycentric(&l).max_abs_diff(&p) <= 1e-12);
            let again = from_barycentric(&barycentric(&l)).unwrap();
            for i in 0..3 {
                prop_assert!((again[i] - l[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn tke_is_linear(a in prop::array::uniform6(-10.0f64..10.0), alpha in -5.0f64..5.0) {
            let r = SymTensor3::from_components(a);
            prop_assert!((tke(&r.scale(alpha)) - alpha * tke(&r)).abs() <= 1e-12 * (1.0 + r.max_abs() * alpha.abs()));
        }
    }
}
