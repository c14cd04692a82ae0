//! Dense complex linear algebra for small Hermitian systems.
//!
//! Everything here operates on row-major [`ComplexMatrix`] values a few
//! entries wide (4x4 for the two-spin system). The eigensolver is a cyclic
//! complex Jacobi sweep: for these sizes it is as accurate as anything
//! fancier, branch-free, and bitwise deterministic for identical input,
//! which the phase-tracking code relies on.

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Tolerance for self-adjointness checks (max entrywise |A - A†|).
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance for unitarity checks (max entrywise |U†U - 1|).
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |A - A†| = {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not unitary (max |U†U - 1| = {residual:e})")]
    NotUnitary { residual: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Build from a row-major slice of length dim*dim.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self { dim, data: entries.to_vec() }
    }

    /// Build from real row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self { dim, data: entries.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let z = self[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(LinalgError::NonFinite(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// A·B - B·A.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut r = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.adjoint().matmul(self).sub(&Self::identity(self.dim)).max_abs()
    }

    /// Apply to a state vector: y = A x.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        let n = self.dim;
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        let d = self.dim;
        &mut self.data[i * d + j]
    }
}

/// Self-adjoint operator. Hamiltonians carry rad/s, gauge potentials are
/// dimensionless; the wrapper does not track units.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        mat.check_finite()?;
        let residual = mat.hermiticity_residual();
        if residual > HERMITICITY_TOL * (1.0 + mat.max_abs()) {
            return Err(LinalgError::NotHermitian { residual });
        }
        Ok(Self { mat })
    }

    /// Symmetrize (A + A†)/2 and wrap. For operators assembled from real
    /// arithmetic this is exact; it also scrubs rounding left by products.
    pub fn symmetrized(mat: ComplexMatrix) -> Self {
        let sym = mat.add(&mat.adjoint()).scale_re(0.5);
        Self { mat: sym }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: ComplexMatrix::zeros(dim) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { mat: self.mat.add(&other.mat) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { mat: self.mat.sub(&other.mat) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: self.mat.scale_re(s) }
    }
}

/// Unitary operator (checked at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    mat: ComplexMatrix,
}

impl Unitary {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        mat.check_finite()?;
        let residual = mat.unitarity_residual();
        if residual > UNITARITY_TOL {
            return Err(LinalgError::NotUnitary { residual });
        }
        Ok(Self { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: ComplexMatrix::identity(dim) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    /// Unchecked composition; both factors were checked at construction.
    pub fn compose(&self, first: &Self) -> Self {
        Self { mat: self.mat.matmul(&first.mat) }
    }

    /// Conjugate a Hermitian operator: U A U†.
    pub fn conjugate(&self, a: &HermitianOperator) -> HermitianOperator {
        let m = self.mat.matmul(a.matrix()).matmul(&self.mat.adjoint());
        HermitianOperator::symmetrized(m)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.mat.apply(x)
    }
}

/// Eigendecomposition of a Hermitian operator.
///
/// Eigenvalues ascend; column k of `eigenvectors` pairs with eigenvalue k.
/// Each column is gauge-fixed: its largest-magnitude component is real and
/// positive (ties broken toward the lowest index), so repeated calls on the
/// same matrix are bitwise identical.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Unitary,
}

impl SpectralDecomposition {
    /// Reconstruction residual ||H - V Λ V†||_max.
    pub fn reconstruction_residual(&self, h: &HermitianOperator) -> f64 {
        let n = self.eigenvalues.len();
        let v = self.eigenvectors.matrix();
        let mut lam = ComplexMatrix::zeros(n);
        for k in 0..n {
            lam[(k, k)] = C64::new(self.eigenvalues[k], 0.0);
        }
        v.matmul(&lam).matmul(&v.adjoint()).sub(h.matrix()).max_abs()
    }

    /// Eigenvector k as a state vector.
    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let n = self.eigenvalues.len();
        (0..n).map(|i| self.eigenvectors.matrix()[(i, k)]).collect()
    }

    /// exp(-i H t) assembled from this decomposition.
    pub fn propagator(&self, t: f64) -> Unitary {
        let n = self.eigenvalues.len();
        let v = self.eigenvectors.matrix();
        let mut d = ComplexMatrix::zeros(n);
        for k in 0..n {
            let phi = -self.eigenvalues[k] * t;
            d[(k, k)] = C64::new(phi.cos(), phi.sin());
        }
        Unitary { mat: v.matmul(&d).matmul(&v.adjoint()) }
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn herm_eig(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = ComplexMatrix::identity(n);

    let scale = a.max_abs().max(1.0);
    let stop = 1e-15 * scale;
    // 4x4 converges in a handful of sweeps; the cap only guards degenerate
    // floating-point corner cases.
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() <= stop * 1e-2 {
                    continue;
                }
                // Unitary 2x2 rotation zeroing a[p][q]: diagonalize the
                // Hermitian block [[app, apq], [apq*, aqq]].
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let abs_apq = apq.norm();
                let phase = apq / C64::new(abs_apq, 0.0);
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: |p'> = c|p> - s·conj(phase)|q>, |q'> = s·phase|p> + c|q>
                let sp = C64::new(s, 0.0) * phase;
                let spc = C64::new(s, 0.0) * phase.conj();
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * spc;
                    a[(i, q)] = aip * sp + aiq * c;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * sp;
                    a[(q, j)] = apj * spc + aqj * c;
                }
                // Scrub the rotated pair to exact Hermitian form.
                a[(q, p)] = a[(p, q)].conj();
                let dpp = a[(p, p)].re;
                let dqq = a[(q, q)].re;
                a[(p, p)] = C64::new(dpp, 0.0);
                a[(q, q)] = C64::new(dqq, 0.0);
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * spc;
                    v[(i, q)] = vip * sp + viq * c;
                }
            }
        }
    }

    // Sort ascending, stable in the original column order for degenerate
    // clusters (the Jacobi output is deterministic, so so is this).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap().then(i.cmp(&j)));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vecs = ComplexMatrix::zeros(n);
    for (k, &src) in order.iter().enumerate() {
        eigenvalues.push(a[(src, src)].re);
        for i in 0..n {
            vecs[(i, k)] = v[(i, src)];
        }
    }
    gauge_fix_columns(&mut vecs);

    Ok(SpectralDecomposition { eigenvalues, eigenvectors: Unitary::new(vecs)? })
}

/// Rotate each column so its largest-magnitude component is real positive
/// (tie-break: lowest index).
pub fn gauge_fix_columns(v: &mut ComplexMatrix) {
    let n = v.dim();
    for k in 0..n {
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for i in 0..n {
            let mag = v[(i, k)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag > 0.0 {
            let phase = v[(best, k)] / C64::new(best_mag, 0.0);
            let correction = phase.conj();
            for i in 0..n {
                v[(i, k)] *= correction;
            }
            // Force the anchor entry exactly real.
            let anchor = v[(best, k)];
            v[(best, k)] = C64::new(anchor.norm(), 0.0);
        }
    }
}

/// exp(-i H t) via spectral decomposition.
pub fn expm_i(h: &HermitianOperator, t: f64) -> Result<Unitary> {
    assert!(t.is_finite(), "propagation time must be finite");
    let dec = herm_eig(h)?;
    let n = h.dim();
    let v = dec.eigenvectors.matrix();
    let mut d = ComplexMatrix::zeros(n);
    for k in 0..n {
        let phi = -dec.eigenvalues[k] * t;
        d[(k, k)] = C64::new(phi.cos(), phi.sin());
    }
    Unitary::new(v.matmul(&d).matmul(&v.adjoint()))
}

/// Principal matrix logarithm of a unitary: the Hermitian G with
/// U = exp(-i G) and eigenphases of G in (-π, π].
///
/// A unitary is normal, so G is found by simultaneous diagonalization of
/// the commuting Hermitian pair (U + U†)/2 and (U - U†)/(2i); degenerate
/// clusters of the first are resolved against the second.
pub fn logm_u(u: &Unitary) -> Result<HermitianOperator> {
    let n = u.dim();
    let um = u.matrix();
    let h_cos = HermitianOperator::symmetrized(um.clone());
    let h_sin = HermitianOperator::symmetrized(um.scale(C64::new(0.0, 1.0)));
    // h_cos = (U+U†)/2, h_sin = i(U-U†)/2... sign worked out below.
    let dec = herm_eig(&h_cos)?;
    let v = dec.eigenvectors.matrix();

    // Group eigenvalue clusters of h_cos.
    let tol = 1e-8 * (1.0 + dec.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e.abs())));
    let mut basis = v.clone();
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && (dec.eigenvalues[end] - dec.eigenvalues[end - 1]).abs() < tol {
            end += 1;
        }
        if end - start > 1 {
            // Diagonalize h_sin projected onto the cluster.
            let k = end - start;
            let mut block = ComplexMatrix::zeros(k);
            for a in 0..k {
                for b in 0..k {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            acc += basis[(i, start + a)].conj()
                                * h_sin.matrix()[(i, j)]
                                * basis[(j, start + b)];
                        }
                    }
                    block[(a, b)] = acc;
                }
            }
            let sub = herm_eig(&HermitianOperator::symmetrized(block))?;
            let w = sub.eigenvectors.matrix();
            let mut rotated = vec![C64::new(0.0, 0.0); n * k];
            for i in 0..n {
                for b in 0..k {
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..k {
                        acc += basis[(i, start + a)] * w[(a, b)];
                    }
                    rotated[i * k + b] = acc;
                }
            }
            for i in 0..n {
                for b in 0..k {
                    basis[(i, start + b)] = rotated[i * k + b];
                }
            }
        }
        start = end;
    }
    gauge_fix_columns(&mut basis);

    // Per-eigenvector phase: U v = e^{iψ} v, G eigenvalue is -ψ mapped to (-π, π].
    let mut g = ComplexMatrix::zeros(n);
    for k in 0..n {
        let col: Vec<C64> = (0..n).map(|i| basis[(i, k)]).collect();
        let uv = um.apply(&col);
        let mut lam = C64::new(0.0, 0.0);
        for i in 0..n {
            lam += col[i].conj() * uv[i];
        }
        let mut phase = -lam.im.atan2(lam.re);
        if phase <= -std::f64::consts::PI {
            phase = std::f64::consts::PI;
        }
        g[(k, k)] = C64::new(phase, 0.0);
    }
    let gm = basis.matmul(&g).matmul(&basis.adjoint());
    Ok(HermitianOperator::symmetrized(gm))
}

/// Tensor product; the first operand is the qubit-1 (leftmost) factor.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim(), b.dim());
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for ia in 0..na {
        for ja in 0..na {
            let aij = a[(ia, ja)];
            for ib in 0..nb {
                for jb in 0..nb {
                    out[(ia * nb + ib, ja * nb + jb)] = aij * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Hilbert-Schmidt inner product Tr[A B]; real for Hermitian inputs, the
/// imaginary rounding residue is discarded.
pub fn hs_inner(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.matrix().matmul(b.matrix()).trace().re)
}
