//! Dense complex-matrix substrate: operators, states, effects, tensor
//! products, partial traces, and spectral tools.
//!
//! All values are immutable after construction and every operation is a pure
//! function, so the whole module is safe for concurrent reads and parallel
//! parameter sweeps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Absolute tolerance for Hermiticity / positivity checks, normalized by the
/// operator norm: eigen-solver noise floor in double precision.
pub const HERM_TOL: f64 = 1e-10;

/// Which tensor factor `partial_trace` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// A dense linear operator on a finite-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: CMatrix,
}

impl Operator {
    pub fn new(mat: CMatrix) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operator matrix must be square");
        assert!(
            mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "operator entries must be finite"
        );
        Operator { mat }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Operator::new(CMatrix::from_fn(dim, dim, f))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator::new(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator::new(CMatrix::identity(dim, dim))
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let dim = entries.len();
        Operator::new(CMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                entries[i]
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn diagonal_real(entries: &[f64]) -> Self {
        let ce: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Operator::diagonal(&ce)
    }

    /// Rank-one operator |u⟩⟨v|.
    pub fn outer(u: &CVector, v: &CVector) -> Self {
        Operator::new(u * v.adjoint())
    }

    pub fn projector(v: &CVector) -> Self {
        Operator::outer(v, v)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn adjoint(&self) -> Operator {
        Operator::new(self.mat.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator::new(&self.mat * c)
    }

    pub fn scale_re(&self, c: f64) -> Operator {
        self.scale(C64::new(c, 0.0))
    }

    pub fn add(&self, other: &Operator) -> Operator {
        Operator::new(&self.mat + &other.mat)
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        Operator::new(&self.mat - &other.mat)
    }

    pub fn mul(&self, other: &Operator) -> Operator {
        Operator::new(&self.mat * &other.mat)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.mat * v
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator::new(&self.mat * &other.mat - &other.mat * &self.mat)
    }

    /// ⟨v|A|v⟩.
    pub fn expectation(&self, v: &CVector) -> C64 {
        (v.adjoint() * &self.mat * v)[(0, 0)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator (spectral) norm, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        // A†A is Hermitian PSD; its largest eigenvalue is ‖A‖².
        let gram = Operator::new(self.mat.adjoint() * &self.mat);
        let (vals, _) = gram.eig_hermitian_unchecked();
        vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Deviation from Hermiticity: ‖A − A†‖_F / max(1, ‖A‖_F).
    pub fn hermiticity_defect(&self) -> f64 {
        let diff = self.sub(&self.adjoint()).frobenius_norm();
        diff / self.frobenius_norm().max(1.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Eigendecomposition of a Hermitian operator: ascending eigenvalues and
    /// the matching orthonormal eigenvector columns.
    pub fn eig_hermitian(&self) -> Result<(Vec<f64>, Operator)> {
        let defect = self.hermiticity_defect();
        if defect > 1e-8 {
            return Err(Error::NonHermitian(defect));
        }
        Ok(self.eig_hermitian_unchecked())
    }

    fn eig_hermitian_unchecked(&self) -> (Vec<f64>, Operator) {
        let dim = self.dim();
        // Symmetrize and normalize: the QL iteration is scale-sensitive and
        // can emit NaNs on badly scaled input.
        let sym = (self.mat.adjoint() + &self.mat) * C64::new(0.5, 0.0);
        let fro = sym.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if fro == 0.0 {
            return (vec![0.0; dim], Operator::identity(dim));
        }
        let scaled = &sym / C64::new(fro, 0.0);
        let eig = nalgebra::SymmetricEigen::new(scaled);
        let (raw_vals, raw_vecs) = if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
            jacobi_hermitian(&sym)
        } else {
            let vals: Vec<f64> = eig.eigenvalues.iter().map(|&x| x * fro).collect();
            (vals, eig.eigenvectors)
        };
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| raw_vals[a].partial_cmp(&raw_vals[b]).unwrap());
        let vals: Vec<f64> = idx.iter().map(|&i| raw_vals[i]).collect();
        let mut vecs = CMatrix::zeros(dim, dim);
        for (col, &i) in idx.iter().enumerate() {
            vecs.set_column(col, &raw_vecs.column(i));
        }
        (vals, Operator::new(vecs))
    }

    /// f(A) for Hermitian A, applied on the spectrum.
    pub fn hermitian_fn(&self, f: impl Fn(f64) -> C64) -> Result<Operator> {
        let (vals, vecs) = self.eig_hermitian()?;
        let fvals: Vec<C64> = vals.iter().map(|&x| f(x)).collect();
        let d = Operator::diagonal(&fvals);
        Ok(vecs.mul(&d).mul(&vecs.adjoint()))
    }

    /// exp(iθ·A) for Hermitian A (θ real); the only matrix exponentials the
    /// toolkit needs are of this unitary form.
    pub fn exp_i_hermitian(&self, theta: f64) -> Result<Operator> {
        self.hermitian_fn(|x| C64::new(0.0, theta * x).exp())
    }

    /// PSD square root with eigenvalue clamping at 0 to absorb numerical
    /// negativity.
    pub fn sqrt_psd(&self) -> Result<Operator> {
        self.hermitian_fn(|x| C64::new(x.max(0.0).sqrt(), 0.0))
    }

    /// Trace norm ‖A‖₁ = Σ|λᵢ| for Hermitian A.
    pub fn trace_norm_hermitian(&self) -> Result<f64> {
        let (vals, _) = self.eig_hermitian()?;
        Ok(vals.iter().map(|x| x.abs()).sum())
    }

    /// Smallest eigenvalue of a Hermitian operator.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig_hermitian()?.0[0])
    }

    /// Largest eigenvalue of a Hermitian operator.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*self.eig_hermitian()?.0.last().unwrap())
    }
}

/// Cyclic-Jacobi eigensolver for Hermitian matrices: slower than the QL
/// path but unconditionally convergent; used as a fallback when the QL
/// iteration fails.
fn jacobi_hermitian(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = CMatrix::identity(n, n);
    let fro = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..60 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).map(move |q| (p, q)))
            .filter(|&(p, q)| p != q)
            .map(|(p, q)| m[(p, q)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                // Complex Jacobi rotation zeroing m[p][q].
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let phase = apq / C64::new(apq.norm(), 0.0);
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                let cc = C64::new(cth, 0.0);
                let ss = phase * C64::new(sth, 0.0);
                // Columns p, q of m and v: right-multiply by the rotation.
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = mip * cc - miq * ss.conj();
                    m[(i, q)] = mip * ss + miq * cc;
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * cc - viq * ss.conj();
                    v[(i, q)] = vip * ss + viq * cc;
                }
                // Rows p, q: left-multiply by the adjoint rotation.
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = mpj * cc - mqj * ss;
                    m[(q, j)] = mpj * ss.conj() + mqj * cc;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    (vals, v)
}

/// Kronecker product a ⊗ b on the compound space, row index i_a·dim(b)+i_b.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator::new(a.matrix().kronecker(b.matrix()))
}

pub fn tensor_vec(a: &CVector, b: &CVector) -> CVector {
    let (da, db) = (a.len(), b.len());
    CVector::from_fn(da * db, |i, _| a[i / db] * b[i % db])
}

/// Partial trace of an operator on H₁⊗H₂ with dim(H₁)=d1, dim(H₂)=d2.
pub fn partial_trace(t: &Operator, dims: (usize, usize), keep: Keep) -> Result<Operator> {
    let (d1, d2) = dims;
    if t.dim() != d1 * d2 {
        return Err(Error::DimensionMismatch(format!(
            "partial_trace: operator dim {} != {}·{}",
            t.dim(),
            d1,
            d2
        )));
    }
    let m = t.matrix();
    let out = match keep {
        Keep::First => CMatrix::from_fn(d1, d1, |i, j| {
            (0..d2).map(|a| m[(i * d2 + a, j * d2 + a)]).sum()
        }),
        Keep::Second => CMatrix::from_fn(d2, d2, |a, b| {
            (0..d1).map(|i| m[(i * d2 + a, i * d2 + b)]).sum()
        }),
    };
    Ok(Operator::new(out))
}

/// A density operator: Hermitian, positive semidefinite, trace one.
#[derive(Debug, Clone)]
pub struct State {
    op: Operator,
}

impl State {
    pub fn new(op: Operator) -> Result<Self> {
        let norm = op.operator_norm().max(1.0);
        if op.hermiticity_defect() > HERM_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (defect {:.3e})",
                op.hermiticity_defect()
            )));
        }
        let (vals, _) = op.eig_hermitian()?;
        if vals[0] < -HERM_TOL * norm {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:.3e}",
                vals[0]
            )));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {} ≠ 1", tr)));
        }
        Ok(State { op })
    }

    pub fn pure(v: &CVector) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("vector norm {} ≠ 1", n)));
        }
        Ok(State {
            op: Operator::projector(v),
        })
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        State {
            op: Operator::identity(dim).scale_re(1.0 / dim as f64),
        }
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        State {
            op: Operator::from_fn(dim, |i, j| {
                if i == k && j == k {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// An effect: Hermitian with spectrum in [0, 1]; yields outcome probability
/// tr{TE}.
#[derive(Debug, Clone)]
pub struct Effect {
    op: Operator,
}

impl Effect {
    pub fn new(op: Operator) -> Result<Self> {
        if op.hermiticity_defect() > HERM_TOL {
            return Err(Error::InvalidEffect(format!(
                "not Hermitian (defect {:.3e})",
                op.hermiticity_defect()
            )));
        }
        let (vals, _) = op.eig_hermitian()?;
        if vals[0] < -HERM_TOL || *vals.last().unwrap() > 1.0 + HERM_TOL {
            return Err(Error::InvalidEffect(format!(
                "spectrum [{:.3e}, {:.3e}] outside [0, 1]",
                vals[0],
                vals.last().unwrap()
            )));
        }
        Ok(Effect { op })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Outcome probability tr{TE}.
    pub fn probability(&self, t: &State) -> f64 {
        t.op().mul(&self.op).trace().re
    }
}

/// Von Neumann entropy (nats) of the reduced state of a unit vector on
/// H₁⊗H₂; zero exactly for product vectors.
pub fn schmidt_entropy(psi: &CVector, dims: (usize, usize)) -> Result<f64> {
    let (d1, d2) = dims;
    if psi.len() != d1 * d2 {
        return Err(Error::DimensionMismatch(format!(
            "schmidt_entropy: vector len {} != {}·{}",
            psi.len(),
            d1,
            d2
        )));
    }
    let n = psi.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("vector norm {} ≠ 1", n)));
    }
    // Coefficient matrix ψ_{ij}; its singular values are the Schmidt weights.
    let coeff = CMatrix::from_fn(d1, d2, |i, j| psi[i * d2 + j]);
    let svd = coeff.svd(false, false);
    let mut s = 0.0;
    for sv in svd.singular_values.iter() {
        let p = sv * sv;
        if p > 1e-15 {
            s -= p * p.ln();
        }
    }
    Ok(s.max(0.0))
}
