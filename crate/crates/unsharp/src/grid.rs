//! Uniform periodic 1-D outcome lattices and the discretized canonical
//! position/momentum pair they carry.
//!
//! Conventions: n points, physical length L, spacing Δx = L/n, points
//! x_j = (j − n/2)·Δx. Momentum lives on the dual lattice p_k = (k − n/2)·2πħ/L
//! and is diagonalized by the centered discrete Fourier transform, which makes
//! Q and P exactly unitarily equivalent on the grid.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::hilbert::{CMatrix, CVector, Operator};
use crate::{Error, Result};

/// A uniform periodic grid of outcome cells, with cell values attached.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeGrid {
    n_points: usize,
    length: f64,
    hbar: f64,
}

impl OutcomeGrid {
    /// Grid with ħ = 1 (the toolkit-wide default unit system).
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        Self::with_hbar(n_points, length, 1.0)
    }

    pub fn with_hbar(n_points: usize, length: f64, hbar: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument("grid needs ≥ 2 points".into()));
        }
        if length <= 0.0 || hbar <= 0.0 {
            return Err(Error::InvalidArgument(
                "grid length and ħ must be positive".into(),
            ));
        }
        Ok(OutcomeGrid {
            n_points,
            length,
            hbar,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_points as f64
    }

    /// x_j = (j − n/2)·Δx.
    pub fn point(&self, j: usize) -> f64 {
        (j as f64 - self.n_points as f64 / 2.0) * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.point(j)).collect()
    }

    /// Momentum spacing Δp = 2πħ/L.
    pub fn momentum_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar / self.length
    }

    /// p_k = (k − n/2)·2πħ/L.
    pub fn momentum_point(&self, k: usize) -> f64 {
        (k as f64 - self.n_points as f64 / 2.0) * self.momentum_spacing()
    }

    pub fn momentum_points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.momentum_point(k)).collect()
    }

    /// The dual grid: momentum outcomes as an `OutcomeGrid` in their own
    /// right, so distribution/POVM machinery applies to momentum verbatim.
    pub fn momentum_grid(&self) -> OutcomeGrid {
        OutcomeGrid {
            n_points: self.n_points,
            length: self.momentum_spacing() * self.n_points as f64,
            hbar: self.hbar,
        }
    }

    /// Index of the cell whose center is nearest to x (periodic snap).
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.n_points as f64;
        let raw = x / self.spacing() + n / 2.0;
        let wrapped = raw.rem_euclid(n);
        (wrapped.round() as usize) % self.n_points
    }

    /// Signed minimal-image displacement value for cell offset d:
    /// ((d + n/2) mod n − n/2)·Δx ∈ [−L/2, L/2).
    pub fn displacement(&self, d: isize) -> f64 {
        let n = self.n_points as isize;
        let c = (d + n / 2).rem_euclid(n) - n / 2;
        c as f64 * self.spacing()
    }

    /// Cell indices of the periodic interval of `width_cells` (odd) cells
    /// centered on `center`.
    pub fn interval_cells(&self, center: usize, width_cells: usize) -> Vec<usize> {
        assert!(width_cells % 2 == 1, "interval width must be an odd cell count");
        let half = (width_cells / 2) as isize;
        let n = self.n_points as isize;
        (-half..=half)
            .map(|d| ((center as isize + d).rem_euclid(n)) as usize)
            .collect()
    }

    /// Central window of the given fraction of cells: the torus approximates
    /// the line only away from the wrap cut, so state-supremum quantities are
    /// taken over states supported here.
    pub fn central_cells(&self, fraction: f64) -> Vec<usize> {
        let keep = ((self.n_points as f64 * fraction).round() as usize)
            .clamp(1, self.n_points);
        let lo = (self.n_points - keep) / 2;
        (lo..lo + keep).collect()
    }

    /// Centered DFT matrix F with F[k][j] = exp(−i p_k x_j / ħ)/√n; maps the
    /// position basis to the momentum basis.
    pub fn dft(&self) -> Operator {
        let n = self.n_points;
        let scale = 1.0 / (n as f64).sqrt();
        Operator::new(CMatrix::from_fn(n, n, |k, j| {
            let phase = -self.momentum_point(k) * self.point(j) / self.hbar;
            Complex64::from_polar(scale, phase)
        }))
    }

    pub fn same_grid(&self, other: &OutcomeGrid) -> bool {
        self.n_points == other.n_points
            && (self.length - other.length).abs() <= 1e-12 * self.length.abs()
            && (self.hbar - other.hbar).abs() <= 1e-12 * self.hbar.abs()
    }
}

/// Position operator: diagonal in the grid basis with entries x_j.
pub fn position_operator(g: &OutcomeGrid) -> Operator {
    Operator::diagonal_real(&g.points())
}

/// |Q|: diagonal with |x_j|.
pub fn abs_position_operator(g: &OutcomeGrid) -> Operator {
    let pts: Vec<f64> = g.points().iter().map(|x| x.abs()).collect();
    Operator::diagonal_real(&pts)
}

/// Momentum operator P = F† diag(p_k) F.
pub fn momentum_operator(g: &OutcomeGrid) -> Operator {
    let f = g.dft();
    let d = Operator::diagonal_real(&g.momentum_points());
    f.adjoint().mul(&d).mul(&f)
}

/// |P| = F† diag(|p_k|) F.
pub fn abs_momentum_operator(g: &OutcomeGrid) -> Operator {
    let f = g.dft();
    let pts: Vec<f64> = g.momentum_points().iter().map(|p| p.abs()).collect();
    f.adjoint().mul(&Operator::diagonal_real(&pts)).mul(&f)
}

/// Unitary cyclic shift by `cells` grid cells: |x_j⟩ ↦ |x_{j+cells}⟩.
pub fn shift_operator(n: usize, cells: isize) -> Operator {
    Operator::from_fn(n, |i, j| {
        let target = ((j as isize + cells).rem_euclid(n as isize)) as usize;
        if i == target {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Normalized plane-wave grid vector with momentum p_k (eigenvector of P).
pub fn plane_wave(g: &OutcomeGrid, k: usize) -> CVector {
    let n = g.n_points();
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |j, _| {
        Complex64::from_polar(scale, g.momentum_point(k) * g.point(j) / g.hbar())
    })
}

/// Probe wavefunction shapes used by the measurement models. Values are
/// continuum amplitudes; grid vectors are sampled and renormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeShape {
    /// exp(−x²/(4σ²)) up to normalization: position std σ.
    Gaussian { sigma: f64 },
    /// Flat on [−width/2, width/2].
    Uniform { width: f64 },
    /// Two Gaussian humps of std σ centered at ±separation/2.
    TwoPeak { sigma: f64, separation: f64 },
}

impl ProbeShape {
    /// Unnormalized amplitude at x.
    pub fn amplitude(&self, x: f64) -> f64 {
        match *self {
            ProbeShape::Gaussian { sigma } => (-x * x / (4.0 * sigma * sigma)).exp(),
            ProbeShape::Uniform { width } => {
                if x.abs() <= width / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ProbeShape::TwoPeak { sigma, separation } => {
                let a = separation / 2.0;
                (-(x - a).powi(2) / (4.0 * sigma * sigma)).exp()
                    + (-(x + a).powi(2) / (4.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Unnormalized momentum-space amplitude (Fourier transform of the
    /// shape, convention φ̃(p) ∝ ∫e^{−ipx/ħ}φ(x)dx).
    pub fn momentum_amplitude(&self, p: f64, hbar: f64) -> f64 {
        match *self {
            ProbeShape::Gaussian { sigma } => (-sigma * sigma * p * p / (hbar * hbar)).exp(),
            ProbeShape::Uniform { width } => {
                let u = p * width / (2.0 * hbar);
                if u.abs() < 1e-12 {
                    1.0
                } else {
                    u.sin() / u
                }
            }
            ProbeShape::TwoPeak { sigma, separation } => {
                let a = separation / 2.0;
                (-sigma * sigma * p * p / (hbar * hbar)).exp() * (p * a / hbar).cos() * 2.0
            }
        }
    }

    /// Normalized grid vector of samples (ℓ²-normalized).
    pub fn sample(&self, g: &OutcomeGrid) -> CVector {
        let mut v = DVector::from_fn(g.n_points(), |j, _| {
            Complex64::new(self.amplitude(g.point(j)), 0.0)
        });
        let norm = v.norm();
        assert!(norm > 0.0, "probe has no support on the grid");
        v /= Complex64::new(norm, 0.0);
        v
    }
}

/// Gaussian grid state centered at x0 with position std σ (ℓ²-normalized).
pub fn gaussian_vector(g: &OutcomeGrid, x0: f64, sigma: f64) -> CVector {
    let mut v = DVector::from_fn(g.n_points(), |j, _| {
        let x = g.point(j) - x0;
        Complex64::new((-x * x / (4.0 * sigma * sigma)).exp(), 0.0)
    });
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_points_basics() {
        let g = OutcomeGrid::new(2, 2.0).unwrap();
        assert_eq!(g.points(), vec![-1.0, 0.0]);
        assert_relative_eq!(g.spacing() * g.n_points() as f64, g.length(), epsilon = 1e-12);

        let g = OutcomeGrid::new(256, 20.0).unwrap();
        let pts = g.points();
        for w in pts.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Symmetric about 0 up to the one-cell offset of the even grid.
        assert_relative_eq!(pts[0], -10.0, epsilon = 1e-12);
        assert_relative_eq!(pts[128], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn position_operator_is_diagonal_grid() {
        let g = OutcomeGrid::new(2, 2.0).unwrap();
        let q = position_operator(&g);
        assert_relative_eq!(q.matrix()[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_relative_eq!(q.matrix()[(1, 1)].re, 0.0, epsilon = 1e-15);

        let g = OutcomeGrid::new(32, 8.0).unwrap();
        let (vals, _) = position_operator(&g).eig_hermitian().unwrap();
        let mut pts = g.points();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, p) in vals.iter().zip(pts.iter()) {
            assert_relative_eq!(v, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_state_position_expectation() {
        // Oracle: direct sum of grid points.
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let n = g.n_points();
        let v = CVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
        let q = position_operator(&g);
        let expect = q.expectation(&v).re;
        let mean: f64 = g.points().iter().sum::<f64>() / n as f64;
        assert_relative_eq!(expect, mean, epsilon = 1e-12);
    }

    #[test]
    fn dft_unitary() {
        let g = OutcomeGrid::new(64, 10.0).unwrap();
        let f = g.dft();
        let defect = f
            .adjoint()
            .mul(&f)
            .sub(&Operator::identity(64))
            .frobenius_norm();
        assert!(defect < 1e-12, "DFT unitarity defect {}", defect);
    }

    #[test]
    fn momentum_unitarily_equivalent_to_diagonal() {
        let g = OutcomeGrid::new(32, 7.0).unwrap();
        let f = g.dft();
        let d = Operator::diagonal_real(&g.momentum_points());
        let p = momentum_operator(&g);
        let rebuilt = f.adjoint().mul(&d).mul(&f);
        assert!(p.sub(&rebuilt).frobenius_norm() < 1e-10);
        assert!(p.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn momentum_eigenvalues_are_momentum_grid() {
        let g = OutcomeGrid::new(16, 5.0).unwrap();
        let (vals, _) = momentum_operator(&g).eig_hermitian().unwrap();
        let mut expected = g.momentum_points();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, e) in vals.iter().zip(expected.iter()) {
            assert_relative_eq!(v, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn plane_wave_is_momentum_eigenvector() {
        let g = OutcomeGrid::new(32, 6.0).unwrap();
        let p = momentum_operator(&g);
        for k in [0usize, 7, 16, 31] {
            let v = plane_wave(&g, k);
            let pv = p.apply(&v);
            let diff = (&pv - &v * Complex64::new(g.momentum_point(k), 0.0)).norm();
            assert!(diff < 1e-10, "k={}: residual {}", k, diff);
        }
    }

    #[test]
    fn ccr_on_interior_gaussian() {
        // Finite-grid CCR check: ⟨ψ|[Q,P]|ψ⟩ ≈ iħ for interior states
        // (Gaussian of full width L/10, i.e. σ = L/20, n = 256).
        let g = OutcomeGrid::new(256, 20.0).unwrap();
        let q = position_operator(&g);
        let p = momentum_operator(&g);
        let comm = q.commutator(&p);
        let psi = gaussian_vector(&g, 0.0, g.length() / 20.0);
        let val = comm.expectation(&psi);
        assert!(
            (val.im - g.hbar()).abs() < 1e-6 && val.re.abs() < 1e-6,
            "⟨[Q,P]⟩ = {} + {}i",
            val.re,
            val.im
        );
    }

    #[test]
    fn shift_operator_translates() {
        let g = OutcomeGrid::new(8, 8.0).unwrap();
        let s = shift_operator(8, 3);
        let v = CVector::from_fn(8, |j, _| Complex64::new(j as f64, 0.0));
        let sv = s.apply(&v);
        assert_relative_eq!(sv[3].re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(sv[0].re, 5.0, epsilon = 1e-15);
        // Unitary.
        let defect = s
            .adjoint()
            .mul(&s)
            .sub(&Operator::identity(8))
            .frobenius_norm();
        assert!(defect < 1e-15);
        let _ = g;
    }

    #[test]
    fn probe_shapes_normalized() {
        let g = OutcomeGrid::new(128, 20.0).unwrap();
        for shape in [
            ProbeShape::Gaussian { sigma: 1.0 },
            ProbeShape::Uniform { width: 2.0 },
            ProbeShape::TwoPeak {
                sigma: 0.5,
                separation: 4.0,
            },
        ] {
            let v = shape.sample(&g);
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_minimal_image() {
        let g = OutcomeGrid::new(8, 8.0).unwrap();
        assert_relative_eq!(g.displacement(0), 0.0);
        assert_relative_eq!(g.displacement(1), 1.0);
        assert_relative_eq!(g.displacement(7), -1.0);
        assert_relative_eq!(g.displacement(4), -4.0);
        assert_relative_eq!(g.displacement(-3), -3.0);
    }

    #[test]
    fn interval_cells_periodic() {
        let g = OutcomeGrid::new(8, 8.0).unwrap();
        assert_eq!(g.interval_cells(0, 3), vec![7, 0, 1]);
        assert_eq!(g.interval_cells(4, 1), vec![4]);
    }
}
