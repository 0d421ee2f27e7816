//! POVMs over grids or discrete label sets: spectral measures, smeared
//! observables, moment and noise operators, triviality and complementarity
//! checks, mutually unbiased bases.
//!
//! Grid POVMs that are diagonal in the position or momentum basis are stored
//! as per-outcome weight vectors instead of dense matrices; this is what keeps
//! 256-cell grids (256 effects of 256×256 entries each) affordable. The dense
//! representation remains the general case.

use num_complex::Complex64;

use crate::grid::OutcomeGrid;
use crate::hilbert::{CMatrix, CVector, Effect, Operator, State};
use crate::{Error, Result};

/// Σ effects = identity must hold to this tolerance.
pub const POVM_NORM_TOL: f64 = 1e-9;

/// Outcome index sets: grid cells carrying real values, or discrete labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes {
    Grid(OutcomeGrid),
    Labels(Vec<String>),
}

impl Outcomes {
    pub fn len(&self) -> usize {
        match self {
            Outcomes::Grid(g) => g.n_points(),
            Outcomes::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric outcome values; grid outcomes only.
    pub fn values(&self) -> Option<Vec<f64>> {
        match self {
            Outcomes::Grid(g) => Some(g.points()),
            Outcomes::Labels(_) => None,
        }
    }

    pub fn grid(&self) -> Option<&OutcomeGrid> {
        match self {
            Outcomes::Grid(g) => Some(g),
            Outcomes::Labels(_) => None,
        }
    }

    pub fn label(&self, i: usize) -> String {
        match self {
            Outcomes::Grid(g) => format!("{:.6}", g.point(i)),
            Outcomes::Labels(l) => l[i].clone(),
        }
    }
}

/// Basis in which structured effects are diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagBasis {
    /// The grid (position) basis of the space itself.
    Position,
    /// Momentum basis of the given space grid, reached by its centered DFT.
    Momentum(OutcomeGrid),
}

#[derive(Debug, Clone)]
enum EffectStore {
    Dense(Vec<Operator>),
    Diagonal {
        basis: DiagBasis,
        weights: Vec<Vec<f64>>,
    },
}

/// A normalized positive-operator-valued measure: one effect per outcome,
/// effects summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    outcomes: Outcomes,
    dim: usize,
    store: EffectStore,
}

impl Povm {
    /// General constructor from dense effects; validates the POVM axioms.
    pub fn from_effects(outcomes: Outcomes, effects: Vec<Operator>) -> Result<Self> {
        if effects.is_empty() || effects.len() != outcomes.len() {
            return Err(Error::InvalidArgument(
                "POVM needs one effect per outcome".into(),
            ));
        }
        let dim = effects[0].dim();
        let mut sum = Operator::zeros(dim);
        for e in &effects {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch("effect dims differ".into()));
            }
            Effect::new(e.clone())?;
            sum = sum.add(e);
        }
        let defect = sum.sub(&Operator::identity(dim)).operator_norm();
        if defect > POVM_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "effects sum to identity only within {:.3e}",
                defect
            )));
        }
        Ok(Povm {
            outcomes,
            dim,
            store: EffectStore::Dense(effects),
        })
    }

    /// Constructor for effects diagonal in `basis`; weights[i][j] is the j-th
    /// diagonal entry of effect i.
    pub fn from_diagonal(
        outcomes: Outcomes,
        basis: DiagBasis,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != outcomes.len() {
            return Err(Error::InvalidArgument(
                "POVM needs one weight vector per outcome".into(),
            ));
        }
        let dim = weights[0].len();
        let mut col_sums = vec![0.0; dim];
        for w in &weights {
            if w.len() != dim {
                return Err(Error::DimensionMismatch("weight vector dims differ".into()));
            }
            for (j, &x) in w.iter().enumerate() {
                if !(-POVM_NORM_TOL..=1.0 + POVM_NORM_TOL).contains(&x) {
                    return Err(Error::InvalidEffect(format!(
                        "diagonal weight {} outside [0, 1]",
                        x
                    )));
                }
                col_sums[j] += x;
            }
        }
        for &s in &col_sums {
            if (s - 1.0).abs() > POVM_NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "effects sum to identity only within {:.3e}",
                    (s - 1.0).abs()
                )));
            }
        }
        Ok(Povm {
            outcomes,
            dim,
            store: EffectStore::Diagonal { basis, weights },
        })
    }

    pub fn outcomes(&self) -> &Outcomes {
        &self.outcomes
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Weight vectors if the effects are stored diagonally.
    pub fn diagonal_weights(&self) -> Option<(&DiagBasis, &[Vec<f64>])> {
        match &self.store {
            EffectStore::Diagonal { basis, weights } => Some((basis, weights)),
            EffectStore::Dense(_) => None,
        }
    }

    /// Materialize effect i as a dense operator.
    pub fn effect_operator(&self, i: usize) -> Operator {
        match &self.store {
            EffectStore::Dense(effs) => effs[i].clone(),
            EffectStore::Diagonal { basis, weights } => match basis {
                DiagBasis::Position => Operator::diagonal_real(&weights[i]),
                DiagBasis::Momentum(g) => {
                    let f = g.dft();
                    f.adjoint()
                        .mul(&Operator::diagonal_real(&weights[i]))
                        .mul(&f)
                }
            },
        }
    }

    pub fn effect(&self, i: usize) -> Effect {
        Effect::new(self.effect_operator(i)).expect("stored effect violates effect bounds")
    }

    /// Effect of a set of outcome cells, E(X) = Σ_{i∈X} E_i.
    pub fn effect_of_cells(&self, cells: &[usize]) -> Operator {
        match &self.store {
            EffectStore::Dense(effs) => {
                let mut sum = Operator::zeros(self.dim);
                for &i in cells {
                    sum = sum.add(&effs[i]);
                }
                sum
            }
            EffectStore::Diagonal { basis, weights } => {
                let mut w = vec![0.0; self.dim];
                for &i in cells {
                    for (j, &x) in weights[i].iter().enumerate() {
                        w[j] += x;
                    }
                }
                match basis {
                    DiagBasis::Position => Operator::diagonal_real(&w),
                    DiagBasis::Momentum(g) => {
                        let f = g.dft();
                        f.adjoint().mul(&Operator::diagonal_real(&w)).mul(&f)
                    }
                }
            }
        }
    }

    /// Summed diagonal weights over a set of outcome cells (diagonal stores).
    pub fn cell_weights_sum(&self, cells: &[usize]) -> Option<Vec<f64>> {
        let (_, weights) = self.diagonal_weights()?;
        let mut w = vec![0.0; self.dim];
        for &i in cells {
            for (j, &x) in weights[i].iter().enumerate() {
                w[j] += x;
            }
        }
        Some(w)
    }

    /// Outcome distribution tr{T·E_i} for each outcome.
    pub fn probability_distribution(&self, t: &State) -> Result<Distribution> {
        if t.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state dim {} vs POVM dim {}",
                t.dim(),
                self.dim
            )));
        }
        let weights = match &self.store {
            EffectStore::Dense(effs) => effs
                .iter()
                .map(|e| t.op().mul(e).trace().re)
                .collect::<Vec<f64>>(),
            EffectStore::Diagonal { basis, weights } => {
                let diag: Vec<f64> = match basis {
                    DiagBasis::Position => t.op().matrix().diagonal().iter().map(|z| z.re).collect(),
                    DiagBasis::Momentum(g) => {
                        let f = g.dft();
                        let rho_hat = f.mul(t.op()).mul(&f.adjoint());
                        rho_hat.matrix().diagonal().iter().map(|z| z.re).collect()
                    }
                };
                weights
                    .iter()
                    .map(|w| w.iter().zip(diag.iter()).map(|(a, b)| a * b).sum())
                    .collect()
            }
        };
        Distribution::new(self.outcomes.clone(), weights)
    }

    /// Same for a pure state given as a unit vector.
    pub fn distribution_of_vector(&self, psi: &CVector) -> Result<Distribution> {
        let weights = match &self.store {
            EffectStore::Dense(effs) => effs
                .iter()
                .map(|e| e.expectation(psi).re)
                .collect::<Vec<f64>>(),
            EffectStore::Diagonal { basis, weights } => {
                let diag: Vec<f64> = match basis {
                    DiagBasis::Position => psi.iter().map(|z| z.norm_sqr()).collect(),
                    DiagBasis::Momentum(g) => {
                        let psi_hat = g.dft().apply(psi);
                        psi_hat.iter().map(|z| z.norm_sqr()).collect()
                    }
                };
                weights
                    .iter()
                    .map(|w| w.iter().zip(diag.iter()).map(|(a, b)| a * b).sum())
                    .collect()
            }
        };
        Distribution::new(self.outcomes.clone(), weights)
    }

    /// True when every effect is a projection (sharp observable).
    pub fn is_sharp(&self, tol: f64) -> bool {
        match &self.store {
            EffectStore::Dense(effs) => effs
                .iter()
                .all(|e| e.mul(e).sub(e).operator_norm() <= tol),
            EffectStore::Diagonal { weights, .. } => weights
                .iter()
                .all(|w| w.iter().all(|&x| (x * x - x).abs() <= tol)),
        }
    }

    /// k-th moment operator E[k] = Σ_j v_j^k E_j over grid outcome values.
    pub fn moment_operator(&self, k: u32) -> Result<Operator> {
        let values = self
            .outcomes
            .values()
            .ok_or_else(|| Error::InvalidArgument("moment operator needs grid outcomes".into()))?;
        match &self.store {
            EffectStore::Dense(effs) => {
                let mut sum = Operator::zeros(self.dim);
                for (v, e) in values.iter().zip(effs.iter()) {
                    sum = sum.add(&e.scale_re(v.powi(k as i32)));
                }
                Ok(sum)
            }
            EffectStore::Diagonal { basis, weights } => {
                let mut diag = vec![0.0; self.dim];
                for (v, w) in values.iter().zip(weights.iter()) {
                    let vk = v.powi(k as i32);
                    for (j, &x) in w.iter().enumerate() {
                        diag[j] += vk * x;
                    }
                }
                let d = Operator::diagonal_real(&diag);
                Ok(match basis {
                    DiagBasis::Position => d,
                    DiagBasis::Momentum(g) => {
                        let f = g.dft();
                        f.adjoint().mul(&d).mul(&f)
                    }
                })
            }
        }
    }

    /// Diagonal entries of the k-th moment operator in the store's own basis
    /// (diagonal stores only).
    pub fn moment_diagonal(&self, k: u32) -> Option<Vec<f64>> {
        let values = self.outcomes.values()?;
        let (_, weights) = self.diagonal_weights()?;
        let mut diag = vec![0.0; self.dim];
        for (v, w) in values.iter().zip(weights.iter()) {
            let vk = v.powi(k as i32);
            for (j, &x) in w.iter().enumerate() {
                diag[j] += vk * x;
            }
        }
        Some(diag)
    }
}

/// Noise operator N(E) = E[2] − E[1]²; positive semidefinite for every POVM.
pub fn noise_operator(e: &Povm) -> Result<Operator> {
    let m1 = e.moment_operator(1)?;
    let m2 = e.moment_operator(2)?;
    Ok(m2.sub(&m1.mul(&m1)))
}

/// Intrinsic noise 𝒩(E) = sup_T tr{T·N(E)}: the largest eigenvalue of N(E),
/// since the supremum of a linear functional over states is attained at an
/// eigenstate.
pub fn intrinsic_noise(e: &Povm) -> Result<f64> {
    intrinsic_noise_windowed(e, None)
}

/// Intrinsic noise with the state supremum restricted to states supported on
/// the given cells of the diagonal basis. The torus wraps outcome values at
/// the cut, so continuum comparisons use an interior window.
pub fn intrinsic_noise_windowed(e: &Povm, window: Option<&[usize]>) -> Result<f64> {
    if let (Some((_, _)), Some(d1), Some(d2)) =
        (e.diagonal_weights(), e.moment_diagonal(1), e.moment_diagonal(2))
    {
        let noise: Vec<f64> = d1
            .iter()
            .zip(d2.iter())
            .map(|(m1, m2)| m2 - m1 * m1)
            .collect();
        let max = match window {
            Some(cells) => cells
                .iter()
                .map(|&j| noise[j])
                .fold(f64::NEG_INFINITY, f64::max),
            None => noise.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        return Ok(max.max(0.0));
    }
    let n = noise_operator(e)?;
    let compressed = match window {
        Some(cells) => compress(&n, cells),
        None => n,
    };
    Ok(compressed.max_eigenvalue()?.max(0.0))
}

/// Compression P_W A P_W of an operator onto the span of basis cells W,
/// returned on the |W|-dimensional subspace.
pub fn compress(a: &Operator, cells: &[usize]) -> Operator {
    let m = a.matrix();
    Operator::new(CMatrix::from_fn(cells.len(), cells.len(), |r, c| {
        m[(cells[r], cells[c])]
    }))
}

/// True iff every effect is within `tol` (operator norm) of a scalar multiple
/// of the identity.
pub fn is_trivial(e: &Povm, tol: f64) -> bool {
    trivial_constants(e, tol).is_some()
}

/// When trivial, the constants λ_i with E_i ≈ λ_i·1.
pub fn trivial_constants(e: &Povm, tol: f64) -> Option<Vec<f64>> {
    let mut consts = Vec::with_capacity(e.n_outcomes());
    match &e.store {
        EffectStore::Diagonal { weights, .. } => {
            for w in weights {
                let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = w.iter().copied().fold(f64::INFINITY, f64::min);
                if (max - min) / 2.0 > tol {
                    return None;
                }
                consts.push((max + min) / 2.0);
            }
        }
        EffectStore::Dense(effs) => {
            for eff in effs {
                let lambda = eff.trace().re / eff.dim() as f64;
                let dev = eff
                    .sub(&Operator::identity(eff.dim()).scale_re(lambda))
                    .operator_norm();
                if dev > tol {
                    return None;
                }
                consts.push(lambda);
            }
        }
    }
    Some(consts)
}

/// Sharp position observable on the grid: one rank-1 projection per cell.
pub fn position_pvm(g: &OutcomeGrid) -> Povm {
    let n = g.n_points();
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut w = vec![0.0; n];
            w[i] = 1.0;
            w
        })
        .collect();
    Povm::from_diagonal(Outcomes::Grid(g.clone()), DiagBasis::Position, weights)
        .expect("position PVM is always valid")
}

/// Sharp momentum observable on the dual grid, diagonal in the Fourier basis.
pub fn momentum_pvm(g: &OutcomeGrid) -> Povm {
    let n = g.n_points();
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut w = vec![0.0; n];
            w[i] = 1.0;
            w
        })
        .collect();
    Povm::from_diagonal(
        Outcomes::Grid(g.momentum_grid()),
        DiagBasis::Momentum(g.clone()),
        weights,
    )
    .expect("momentum PVM is always valid")
}

/// Spectral measure of a Hermitian operator, binned by outcome.
///
/// Grid outcomes: eigenvalues snap to the nearest cell. Label outcomes: one
/// label per distinct eigenvalue, ascending; degenerate eigenvalues keep
/// their full eigenprojections.
pub fn pvm_from_hermitian(a: &Operator, outcomes: Outcomes) -> Result<Povm> {
    if a.hermiticity_defect() > 1e-8 {
        return Err(Error::NonHermitian(a.hermiticity_defect()));
    }
    // Exactly diagonal matrices keep the cheap diagonal representation.
    let offdiag: f64 = {
        let m = a.matrix();
        (0..a.dim())
            .flat_map(|i| (0..a.dim()).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    match &outcomes {
        Outcomes::Grid(g) => {
            let n_out = g.n_points();
            if offdiag < 1e-14 {
                let mut weights = vec![vec![0.0; a.dim()]; n_out];
                for j in 0..a.dim() {
                    let cell = g.cell_of(a.matrix()[(j, j)].re);
                    weights[cell][j] = 1.0;
                }
                return Povm::from_diagonal(outcomes, DiagBasis::Position, weights);
            }
            let (vals, vecs) = a.eig_hermitian()?;
            let mut effects = vec![Operator::zeros(a.dim()); n_out];
            for (i, &lam) in vals.iter().enumerate() {
                let cell = g.cell_of(lam);
                let col = CVector::from_column_slice(vecs.matrix().column(i).as_slice());
                effects[cell] = effects[cell].add(&Operator::projector(&col));
            }
            Povm::from_effects(outcomes, effects)
        }
        Outcomes::Labels(labels) => {
            let (vals, vecs) = a.eig_hermitian()?;
            let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
            for (i, &lam) in vals.iter().enumerate() {
                match groups.last_mut() {
                    Some((rep, idx)) if (lam - *rep).abs() <= 1e-8 => idx.push(i),
                    _ => groups.push((lam, vec![i])),
                }
            }
            if groups.len() != labels.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} distinct eigenvalues",
                    labels.len(),
                    groups.len()
                )));
            }
            let effects: Vec<Operator> = groups
                .iter()
                .map(|(_, idx)| {
                    let mut p = Operator::zeros(a.dim());
                    for &i in idx {
                        let col = CVector::from_column_slice(vecs.matrix().column(i).as_slice());
                        p = p.add(&Operator::projector(&col));
                    }
                    p
                })
                .collect();
            Povm::from_effects(outcomes, effects)
        }
    }
}

/// Smeared observable: effect for outcome cell j places weight
/// kernel(x_k − x_j) on sharp cell k (periodic displacement). A point-mass
/// kernel at 0 returns the sharp observable unchanged.
pub fn smear(kernel: &Distribution, sharp: &Povm) -> Result<Povm> {
    let kg = kernel
        .outcomes()
        .grid()
        .ok_or_else(|| Error::GridMismatch("kernel must live on a grid".into()))?;
    let sg = sharp
        .outcomes()
        .grid()
        .ok_or_else(|| Error::GridMismatch("smear needs grid outcomes".into()))?;
    if !kg.same_grid(sg) {
        return Err(Error::GridMismatch(
            "kernel and sharp observable live on different grids".into(),
        ));
    }
    let n = sg.n_points();
    let half = n / 2;
    let kw = kernel.weights();
    match &sharp.store {
        EffectStore::Diagonal { basis, weights } => {
            let mut out = vec![vec![0.0; sharp.dim]; n];
            for j in 0..n {
                for (k, wk) in weights.iter().enumerate() {
                    // displacement index for x_k − x_j
                    let d = (k + n - j + half) % n;
                    let kv = kw[d];
                    if kv != 0.0 {
                        for (m, &x) in wk.iter().enumerate() {
                            out[j][m] += kv * x;
                        }
                    }
                }
            }
            Povm::from_diagonal(sharp.outcomes.clone(), basis.clone(), out)
        }
        EffectStore::Dense(effs) => {
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let mut e = Operator::zeros(sharp.dim);
                for (k, ek) in effs.iter().enumerate() {
                    let d = (k + n - j + half) % n;
                    if kw[d] != 0.0 {
                        e = e.add(&ek.scale_re(kw[d]));
                    }
                }
                out.push(e);
            }
            Povm::from_effects(sharp.outcomes.clone(), out)
        }
    }
}

/// A probability distribution over an outcome set (cell masses on grids).
#[derive(Debug, Clone)]
pub struct Distribution {
    outcomes: Outcomes,
    weights: Vec<f64>,
}

impl Distribution {
    pub fn new(outcomes: Outcomes, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != outcomes.len() {
            return Err(Error::DimensionMismatch(
                "one weight per outcome required".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > POVM_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {} ≠ 1",
                total
            )));
        }
        if weights.iter().any(|&w| w < -POVM_NORM_TOL) {
            return Err(Error::InvalidArgument("negative weight".into()));
        }
        Ok(Distribution { outcomes, weights })
    }

    /// Point mass on one outcome.
    pub fn point_mass(outcomes: Outcomes, at: usize) -> Self {
        let mut weights = vec![0.0; outcomes.len()];
        weights[at] = 1.0;
        Distribution { outcomes, weights }
    }

    /// Grid distribution from sampled density values (renormalized masses).
    pub fn from_density(g: &OutcomeGrid, density: impl Fn(f64) -> f64) -> Result<Self> {
        let mut weights: Vec<f64> = g.points().iter().map(|&x| density(x).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "density has no mass on the grid".into(),
            ));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Distribution {
            outcomes: Outcomes::Grid(g.clone()),
            weights,
        })
    }

    pub fn outcomes(&self) -> &Outcomes {
        &self.outcomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let vals = self.outcomes.values().expect("mean needs grid outcomes");
        vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let vals = self.outcomes.values().expect("variance needs grid outcomes");
        let m = self.mean();
        vals.iter()
            .zip(&self.weights)
            .map(|(v, w)| (v - m) * (v - m) * w)
            .sum()
    }

    pub fn std(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }

    /// Mean absolute outcome Σ|v_j|·w_j; for displacement kernels this is the
    /// mean absolute deviation that the Werner-distance shortcut returns.
    pub fn mean_abs(&self) -> f64 {
        let vals = self.outcomes.values().expect("mean_abs needs grid outcomes");
        vals.iter()
            .zip(&self.weights)
            .map(|(v, w)| v.abs() * w)
            .sum()
    }

    /// Cumulative masses in index (= value) order.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    /// Mix of two distributions over the same outcome set.
    pub fn mix(&self, other: &Distribution, lambda: f64) -> Result<Distribution> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch("distribution lengths differ".into()));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Distribution::new(self.outcomes.clone(), weights)
    }

    /// CSV serialization: `outcome,weight` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("outcome,weight\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{:.12e}\n",
                self.outcomes.label(i),
                self.weights[i]
            ));
        }
        s
    }
}

/// Pair of rank-1 PVMs whose bases are mutually unbiased: the computational
/// basis and its discrete Fourier partner, |⟨φ_k|ψ_ℓ⟩|² = 1/n.
pub fn mub_pair(n: usize) -> Result<(Povm, Povm)> {
    if n < 2 {
        return Err(Error::InvalidArgument("MUB pair needs n ≥ 2".into()));
    }
    let labels_a: Vec<String> = (0..n).map(|k| format!("a{}", k)).collect();
    let labels_b: Vec<String> = (0..n).map(|k| format!("b{}", k)).collect();
    let comp: Vec<Operator> = (0..n)
        .map(|k| {
            let mut v = CVector::zeros(n);
            v[k] = Complex64::new(1.0, 0.0);
            Operator::projector(&v)
        })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    let fourier: Vec<Operator> = (0..n)
        .map(|l| {
            let v = CVector::from_fn(n, |k, _| {
                Complex64::from_polar(
                    scale,
                    2.0 * std::f64::consts::PI * (k as f64) * (l as f64) / n as f64,
                )
            });
            Operator::projector(&v)
        })
        .collect();
    Ok((
        Povm::from_effects(Outcomes::Labels(labels_a), comp)?,
        Povm::from_effects(Outcomes::Labels(labels_b), fourier)?,
    ))
}

/// Largest per-effect operator-norm deviation between two POVMs on the same
/// outcome set; diagonal stores compare weight vectors directly.
pub fn max_effect_deviation(a: &Povm, b: &Povm) -> Result<f64> {
    if a.n_outcomes() != b.n_outcomes() || a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(
            "POVMs on different outcome sets".into(),
        ));
    }
    if let (Some((ba, wa)), Some((bb, wb))) = (a.diagonal_weights(), b.diagonal_weights()) {
        if ba == bb {
            let mut worst = 0.0_f64;
            for (x, y) in wa.iter().zip(wb.iter()) {
                for (p, q) in x.iter().zip(y.iter()) {
                    worst = worst.max((p - q).abs());
                }
            }
            return Ok(worst);
        }
    }
    let mut worst = 0.0_f64;
    for i in 0..a.n_outcomes() {
        worst = worst.max(
            a.effect_operator(i)
                .sub(&b.effect_operator(i))
                .operator_norm(),
        );
    }
    Ok(worst)
}

/// ‖P₁P₂‖ for two projections: the largest cosine of their principal angles.
/// A value < 1 certifies that the ranges intersect trivially, P₁∧P₂ = 0.
pub fn complementarity_overlap(p1: &Operator, p2: &Operator) -> Result<f64> {
    for p in [p1, p2] {
        let idem = p.mul(p).sub(p).operator_norm();
        if p.hermiticity_defect() > 1e-9 || idem > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "argument is not a projection (idempotency defect {:.3e})",
                idem
            )));
        }
    }
    Ok(p1.mul(p2).operator_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_vector, position_operator};
    use crate::hilbert::tensor;
    use approx::assert_relative_eq;

    fn gaussian_kernel(g: &OutcomeGrid, sigma: f64) -> Distribution {
        Distribution::from_density(g, |x| (-x * x / (2.0 * sigma * sigma)).exp()).unwrap()
    }

    fn random_state(dim: usize, seed: u64) -> State {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Operator::from_fn(dim, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let psd = g.mul(&g.adjoint());
        let tr = psd.trace().re;
        State::new(psd.scale_re(1.0 / tr)).unwrap()
    }

    #[test]
    fn position_pvm_is_sharp_rank1() {
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let pvm = position_pvm(&g);
        assert!(pvm.is_sharp(1e-12));
        for i in 0..16 {
            assert_relative_eq!(pvm.effect_operator(i).trace().re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pvm_from_diagonal_position_operator() {
        let g = OutcomeGrid::new(8, 4.0).unwrap();
        let pvm = pvm_from_hermitian(&position_operator(&g), Outcomes::Grid(g.clone())).unwrap();
        assert!(pvm.is_sharp(1e-12));
        // Matches the dedicated constructor cell for cell.
        let direct = position_pvm(&g);
        for i in 0..8 {
            assert!(
                pvm.effect_operator(i)
                    .sub(&direct.effect_operator(i))
                    .frobenius_norm()
                    < 1e-12
            );
        }
    }

    #[test]
    fn pvm_sigma_z_labels() {
        let sz = Operator::diagonal_real(&[1.0, -1.0]);
        let pvm = pvm_from_hermitian(
            &sz,
            Outcomes::Labels(vec!["-".into(), "+".into()]),
        )
        .unwrap();
        // Ascending eigenvalue order: first effect is |1⟩⟨1|.
        assert_relative_eq!(pvm.effect_operator(0).matrix()[(1, 1)].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(pvm.effect_operator(1).matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pvm_degenerate_eigenvalue_rank2() {
        let a = Operator::diagonal_real(&[1.0, 1.0, 2.0]);
        let pvm = pvm_from_hermitian(
            &a,
            Outcomes::Labels(vec!["one".into(), "two".into()]),
        )
        .unwrap();
        assert_relative_eq!(pvm.effect_operator(0).trace().re, 2.0, epsilon = 1e-10);
        assert_relative_eq!(pvm.effect_operator(1).trace().re, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn maximally_mixed_distribution() {
        let g = OutcomeGrid::new(8, 4.0).unwrap();
        let pvm = position_pvm(&g);
        let t = State::maximally_mixed(8);
        let d = pvm.probability_distribution(&t).unwrap();
        for w in d.weights() {
            assert_relative_eq!(*w, 1.0 / 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenstate_gives_point_mass() {
        let g = OutcomeGrid::new(8, 4.0).unwrap();
        let pvm = position_pvm(&g);
        let t = State::basis(8, 3);
        let d = pvm.probability_distribution(&t).unwrap();
        assert_relative_eq!(d.weights()[3], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_distribution_matches_sampled_density() {
        // Oracle: direct summation of |ψ(x_j)|² cell masses.
        let g = OutcomeGrid::new(256, 20.0).unwrap();
        let pvm = position_pvm(&g);
        let psi = gaussian_vector(&g, 0.0, 1.0);
        let d = pvm.distribution_of_vector(&psi).unwrap();
        let total: f64 = d.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (j, w) in d.weights().iter().enumerate() {
            assert_relative_eq!(*w, psi[j].norm_sqr(), epsilon = 1e-12);
        }
    }

    #[test]
    fn momentum_distribution_of_plane_wave() {
        let g = OutcomeGrid::new(32, 8.0).unwrap();
        let pvm = momentum_pvm(&g);
        let psi = crate::grid::plane_wave(&g, 20);
        let d = pvm.distribution_of_vector(&psi).unwrap();
        assert_relative_eq!(d.weights()[20], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn smear_point_mass_is_identity() {
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let sharp = position_pvm(&g);
        let kernel = Distribution::point_mass(Outcomes::Grid(g.clone()), 8);
        let sm = smear(&kernel, &sharp).unwrap();
        for i in 0..16 {
            assert!(
                sm.effect_operator(i)
                    .sub(&sharp.effect_operator(i))
                    .frobenius_norm()
                    < 1e-14
            );
        }
    }

    #[test]
    fn smear_variance_law() {
        // Eq-style additive variance law Var(p^{Q_e}) = Var(p^Q) + Var(e);
        // interior-supported state so the periodic wrap is negligible.
        let g = OutcomeGrid::new(256, 20.0).unwrap();
        let sharp = position_pvm(&g);
        let kernel = gaussian_kernel(&g, 1.0);
        let smeared = smear(&kernel, &sharp).unwrap();

        let small = random_state(16, 5);
        // Embed the random state on the central 16 cells.
        let mut m = CMatrix::zeros(256, 256);
        for a in 0..16 {
            for b in 0..16 {
                m[(120 + a, 120 + b)] = small.op().matrix()[(a, b)];
            }
        }
        let t = State::new(Operator::new(m)).unwrap();

        let d_sharp = sharp.probability_distribution(&t).unwrap();
        let d_smeared = smeared.probability_distribution(&t).unwrap();
        assert_relative_eq!(
            d_smeared.variance(),
            d_sharp.variance() + kernel.variance(),
            epsilon = 1e-8
        );
        assert_relative_eq!(d_smeared.mean(), d_sharp.mean(), epsilon = 1e-8);
    }

    #[test]
    fn smear_composition_is_kernel_convolution() {
        let g = OutcomeGrid::new(64, 16.0).unwrap();
        let sharp = position_pvm(&g);
        let k1 = gaussian_kernel(&g, 0.7);
        let k2 = gaussian_kernel(&g, 0.4);
        let twice = smear(&k2, &smear(&k1, &sharp).unwrap()).unwrap();

        // Periodic convolution of the kernels.
        let n = 64;
        let half = n / 2;
        let mut conv = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                // displacement indices add around the center
                let d = (a + b + n - half) % n;
                conv[d] += k1.weights()[a] * k2.weights()[b];
            }
        }
        let kconv = Distribution::new(Outcomes::Grid(g.clone()), conv).unwrap();
        let direct = smear(&kconv, &sharp).unwrap();
        for i in 0..n {
            assert!(
                twice
                    .effect_operator(i)
                    .sub(&direct.effect_operator(i))
                    .frobenius_norm()
                    < 1e-9
            );
        }
    }

    #[test]
    fn moment_operators_of_sharp_position() {
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let pvm = position_pvm(&g);
        let m0 = pvm.moment_operator(0).unwrap();
        assert!(m0.sub(&Operator::identity(16)).frobenius_norm() < 1e-12);
        let m1 = pvm.moment_operator(1).unwrap();
        assert!(m1.sub(&position_operator(&g)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn smeared_moment_identities_interior() {
        // E[1] = Q and E[2] = Q² + Var(e)·1 on the interior window.
        let g = OutcomeGrid::new(128, 20.0).unwrap();
        let pvm = position_pvm(&g);
        let kernel = gaussian_kernel(&g, 0.8);
        let smeared = smear(&kernel, &pvm).unwrap();
        let m1 = smeared.moment_diagonal(1).unwrap();
        let m2 = smeared.moment_diagonal(2).unwrap();
        let var_e = kernel.variance();
        for j in g.central_cells(0.3) {
            let x = g.point(j);
            assert_relative_eq!(m1[j], x, epsilon = 1e-8);
            assert_relative_eq!(m2[j], x * x + var_e, epsilon = 1e-8);
        }
    }

    #[test]
    fn noise_of_sharp_pvm_is_zero() {
        let g = OutcomeGrid::new(32, 8.0).unwrap();
        let pvm = position_pvm(&g);
        assert!(noise_operator(&pvm).unwrap().frobenius_norm() < 1e-10);
        assert!(intrinsic_noise(&pvm).unwrap() < 1e-12);
    }

    #[test]
    fn noise_of_smeared_is_kernel_variance() {
        let g = OutcomeGrid::new(128, 20.0).unwrap();
        let pvm = position_pvm(&g);
        let kernel = gaussian_kernel(&g, 0.8);
        let smeared = smear(&kernel, &pvm).unwrap();
        let window = g.central_cells(0.3);
        let noise = intrinsic_noise_windowed(&smeared, Some(&window)).unwrap();
        assert_relative_eq!(noise, kernel.variance(), epsilon = 1e-8);
    }

    #[test]
    fn random_qubit_povm_noise_nonnegative() {
        let e1 = Operator::diagonal_real(&[0.7, 0.4]);
        let e2 = Operator::identity(2).sub(&e1);
        let g = OutcomeGrid::new(2, 2.0).unwrap();
        let povm = Povm::from_effects(Outcomes::Grid(g), vec![e1, e2]).unwrap();
        assert!(intrinsic_noise(&povm).unwrap() >= 0.0);
    }

    #[test]
    fn trivial_povm_detected() {
        let g = OutcomeGrid::new(2, 2.0).unwrap();
        let half = Operator::identity(2).scale_re(0.5);
        let povm =
            Povm::from_effects(Outcomes::Grid(g), vec![half.clone(), half]).unwrap();
        let consts = trivial_constants(&povm, 1e-10).unwrap();
        assert_relative_eq!(consts[0], 0.5, epsilon = 1e-12);

        let sz = pvm_from_hermitian(
            &Operator::diagonal_real(&[1.0, -1.0]),
            Outcomes::Labels(vec!["-".into(), "+".into()]),
        )
        .unwrap();
        assert!(!is_trivial(&sz, 1e-6));
    }

    #[test]
    fn mub_overlaps_are_uniform() {
        for n in [2usize, 5] {
            let (a, b) = mub_pair(n).unwrap();
            assert!(a.is_sharp(1e-10) && b.is_sharp(1e-10));
            for k in 0..n {
                for l in 0..n {
                    let overlap = a
                        .effect_operator(k)
                        .mul(&b.effect_operator(l))
                        .trace()
                        .re;
                    assert_relative_eq!(overlap, 1.0 / n as f64, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mub_value_complementarity_qubit() {
        // Eigenstate of the first basis is uniform under the second, exactly.
        let (a, b) = mub_pair(2).unwrap();
        let t = State::new(a.effect_operator(0)).unwrap();
        let d = b.probability_distribution(&t).unwrap();
        assert_relative_eq!(d.weights()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.weights()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn overlap_orthogonal_and_equal() {
        let p1 = Operator::diagonal_real(&[1.0, 0.0]);
        let p2 = Operator::diagonal_real(&[0.0, 1.0]);
        assert!(complementarity_overlap(&p1, &p2).unwrap() < 1e-12);
        assert_relative_eq!(
            complementarity_overlap(&p1, &p1).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Non-projection input rejected.
        let not_proj = Operator::diagonal_real(&[0.5, 0.0]);
        assert!(complementarity_overlap(&not_proj, &p1).is_err());
    }

    #[test]
    fn position_momentum_interval_overlap_below_one() {
        let g = OutcomeGrid::new(64, 10.0).unwrap();
        let qpvm = position_pvm(&g);
        let ppvm = momentum_pvm(&g);
        let qcells: Vec<usize> = (0..64).filter(|&j| g.point(j).abs() <= 1.0).collect();
        let mg = g.momentum_grid();
        let pcells: Vec<usize> = (0..64).filter(|&k| mg.point(k).abs() <= 1.0).collect();
        let qx = qpvm.effect_of_cells(&qcells);
        let py = ppvm.effect_of_cells(&pcells);
        let overlap = complementarity_overlap(&qx, &py).unwrap();
        assert!(overlap < 1.0, "overlap {}", overlap);
        assert!(overlap > 0.0);
    }

    #[test]
    fn distribution_affine_in_state() {
        let g = OutcomeGrid::new(8, 4.0).unwrap();
        let pvm = position_pvm(&g);
        let t1 = random_state(8, 1);
        let t2 = random_state(8, 2);
        let lam = 0.3;
        let mixed = State::new(t1.op().scale_re(lam).add(&t2.op().scale_re(1.0 - lam))).unwrap();
        let d_mixed = pvm.probability_distribution(&mixed).unwrap();
        let d_direct = pvm
            .probability_distribution(&t1)
            .unwrap()
            .mix(&pvm.probability_distribution(&t2).unwrap(), lam)
            .unwrap();
        for (a, b) in d_mixed.weights().iter().zip(d_direct.weights()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn dense_and_diagonal_smear_agree() {
        let g = OutcomeGrid::new(12, 6.0).unwrap();
        let kernel = gaussian_kernel(&g, 0.5);
        let diag_pvm = position_pvm(&g);
        let dense_effects: Vec<Operator> =
            (0..12).map(|i| diag_pvm.effect_operator(i)).collect();
        let dense_pvm =
            Povm::from_effects(Outcomes::Grid(g.clone()), dense_effects).unwrap();
        let sm_diag = smear(&kernel, &diag_pvm).unwrap();
        let sm_dense = smear(&kernel, &dense_pvm).unwrap();
        for i in 0..12 {
            assert!(
                sm_diag
                    .effect_operator(i)
                    .sub(&sm_dense.effect_operator(i))
                    .frobenius_norm()
                    < 1e-12
            );
        }
    }

    #[test]
    fn moment_operator_momentum_store() {
        let g = OutcomeGrid::new(16, 8.0).unwrap();
        let ppvm = momentum_pvm(&g);
        let m1 = ppvm.moment_operator(1).unwrap();
        let p = crate::grid::momentum_operator(&g);
        assert!(m1.sub(&p).frobenius_norm() < 1e-9);
    }

    #[test]
    fn csv_round_trip_shape() {
        let g = OutcomeGrid::new(4, 4.0).unwrap();
        let d = Distribution::point_mass(Outcomes::Grid(g), 1);
        let csv = d.to_csv();
        assert!(csv.starts_with("outcome,weight\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn tensor_effect_identity() {
        let a = Operator::identity(2);
        let b = Operator::identity(3);
        assert_eq!(tensor(&a, &b).dim(), 6);
    }
}
