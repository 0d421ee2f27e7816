//! Quantum operations and instruments in Kraus form: the named measurement
//! instruments (Lüders, von Neumann, Ozawa, trivial), and the repeatability,
//! ideality, disturbance, and Lüders-compatibility predicates.
//!
//! Kraus operators come in three shapes. Dense is the general case; Diagonal
//! (a multiplication operator in the grid basis) and RankOne (|u⟩⟨v|) keep
//! the grid-sized instruments at n = 256 from materializing hundreds of dense
//! matrices.

use num_complex::Complex64;

use crate::grid::{shift_operator, OutcomeGrid};
use crate::hilbert::{CMatrix, CVector, Operator, State};
use crate::observables::{trivial_constants, DiagBasis, Outcomes, Povm};
use crate::{Error, Result};

/// Instrument-level trace-preservation tolerance.
pub const INSTRUMENT_TP_TOL: f64 = 1e-9;

/// One Kraus operator.
#[derive(Debug, Clone)]
pub enum KrausOp {
    Dense(Operator),
    /// Multiplication operator diag(d) in the grid basis.
    Diagonal(CVector),
    /// |out⟩⟨inp| (scalar factors folded into the vectors).
    RankOne { out: CVector, inp: CVector },
}

impl KrausOp {
    pub fn dim(&self) -> usize {
        match self {
            KrausOp::Dense(k) => k.dim(),
            KrausOp::Diagonal(d) => d.len(),
            KrausOp::RankOne { out, .. } => out.len(),
        }
    }

    pub fn to_dense(&self) -> Operator {
        match self {
            KrausOp::Dense(k) => k.clone(),
            KrausOp::Diagonal(d) => {
                Operator::diagonal(&d.iter().copied().collect::<Vec<Complex64>>())
            }
            KrausOp::RankOne { out, inp } => Operator::outer(out, inp),
        }
    }

    /// K ρ K† (linear in ρ, no Hermiticity assumed).
    pub fn sandwich(&self, rho: &Operator) -> Operator {
        match self {
            KrausOp::Dense(k) => k.mul(rho).mul(&k.adjoint()),
            KrausOp::Diagonal(d) => {
                let m = rho.matrix();
                Operator::new(CMatrix::from_fn(d.len(), d.len(), |i, j| {
                    d[i] * m[(i, j)] * d[j].conj()
                }))
            }
            KrausOp::RankOne { out, inp } => {
                let amp = (inp.adjoint() * rho.matrix() * inp)[(0, 0)];
                Operator::new(out * out.adjoint() * amp)
            }
        }
    }

    /// K† B K (Heisenberg picture).
    pub fn adjoint_sandwich(&self, b: &Operator) -> Operator {
        match self {
            KrausOp::Dense(k) => k.adjoint().mul(b).mul(k),
            KrausOp::Diagonal(d) => {
                let m = b.matrix();
                Operator::new(CMatrix::from_fn(d.len(), d.len(), |i, j| {
                    d[i].conj() * m[(i, j)] * d[j]
                }))
            }
            KrausOp::RankOne { out, inp } => {
                let amp = (out.adjoint() * b.matrix() * out)[(0, 0)];
                Operator::new(inp * inp.adjoint() * amp)
            }
        }
    }

    /// Diagonal of K†K when cheaply available.
    fn effect_diagonal(&self) -> Option<Vec<f64>> {
        match self {
            KrausOp::Dense(_) => None,
            KrausOp::Diagonal(d) => Some(d.iter().map(|z| z.norm_sqr()).collect()),
            KrausOp::RankOne { out, inp } => {
                // K†K = ‖out‖²·inp inp†, diagonal iff inp is a basis vector.
                let nnz: Vec<usize> = (0..inp.len()).filter(|&i| inp[i].norm_sqr() > 0.0).collect();
                if nnz.len() == 1 {
                    let mut d = vec![0.0; inp.len()];
                    d[nnz[0]] = out.norm_squared() * inp[nnz[0]].norm_sqr();
                    Some(d)
                } else {
                    None
                }
            }
        }
    }
}

/// A completely positive trace-nonincreasing map in Kraus form.
#[derive(Debug, Clone)]
pub struct Operation {
    kraus: Vec<KrausOp>,
    dim: usize,
}

impl Operation {
    pub fn new(kraus: Vec<KrausOp>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("operation needs ≥ 1 Kraus operator".into()));
        }
        let dim = kraus[0].dim();
        if kraus.iter().any(|k| k.dim() != dim) {
            return Err(Error::DimensionMismatch("Kraus dims differ".into()));
        }
        let op = Operation { kraus, dim };
        let bound = match op.effect_diagonal() {
            Some(d) => d.iter().copied().fold(0.0, f64::max),
            None => op.effect().max_eigenvalue()?,
        };
        if bound > 1.0 + INSTRUMENT_TP_TOL {
            return Err(Error::InvalidArgument(format!(
                "trace-increasing operation: ‖ΣK†K‖ = {}",
                bound
            )));
        }
        Ok(op)
    }

    pub fn from_dense(kraus: Vec<Operator>) -> Result<Self> {
        Operation::new(kraus.into_iter().map(KrausOp::Dense).collect())
    }

    pub fn identity(dim: usize) -> Self {
        Operation {
            kraus: vec![KrausOp::Diagonal(CVector::from_element(
                dim,
                Complex64::new(1.0, 0.0),
            ))],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[KrausOp] {
        &self.kraus
    }

    /// Linear action Σ K ρ K† on an arbitrary matrix.
    pub fn apply_matrix(&self, rho: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim);
        for k in &self.kraus {
            out = out.add(&k.sandwich(rho));
        }
        out
    }

    /// Heisenberg action Σ K† B K.
    pub fn heisenberg(&self, b: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim);
        for k in &self.kraus {
            out = out.add(&k.adjoint_sandwich(b));
        }
        out
    }

    /// Effect Σ K†K of the operation.
    pub fn effect(&self) -> Operator {
        self.heisenberg(&Operator::identity(self.dim))
    }

    fn effect_diagonal(&self) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        for k in &self.kraus {
            let d = k.effect_diagonal()?;
            for (a, b) in acc.iter_mut().zip(d) {
                *a += b;
            }
        }
        Some(acc)
    }
}

/// Σ K T K† of a state together with its weight tr{I(T)} = tr{T·E}.
pub fn apply(op: &Operation, t: &State) -> Result<(Operator, f64)> {
    if op.dim() != t.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operation dim {} vs state dim {}",
            op.dim(),
            t.dim()
        )));
    }
    let out = op.apply_matrix(t.op());
    let w = out.trace().re;
    Ok((out, w))
}

/// Choi matrix of an operation: apply it to one half of the unnormalized
/// maximally entangled matrix. Complete positivity ⟺ the result is PSD.
pub fn choi_matrix(op: &Operation) -> Operator {
    let d = op.dim();
    let mut choi = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let mut eij = CMatrix::zeros(d, d);
            eij[(i, j)] = Complex64::new(1.0, 0.0);
            let block = op.apply_matrix(&Operator::new(eij));
            for a in 0..d {
                for b in 0..d {
                    choi[(i * d + a, j * d + b)] = block.matrix()[(a, b)];
                }
            }
        }
    }
    Operator::new(choi)
}

/// An outcome-indexed family of operations whose total map preserves trace.
#[derive(Debug, Clone)]
pub struct Instrument {
    outcomes: Outcomes,
    ops: Vec<Operation>,
}

impl Instrument {
    pub fn new(outcomes: Outcomes, ops: Vec<Operation>) -> Result<Self> {
        if ops.is_empty() || ops.len() != outcomes.len() {
            return Err(Error::InvalidArgument(
                "instrument needs one operation per outcome".into(),
            ));
        }
        let dim = ops[0].dim();
        if ops.iter().any(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch("operation dims differ".into()));
        }
        let inst = Instrument { outcomes, ops };
        // Total trace preservation: Σ_X Σ K†K = 1.
        match inst.total_effect_diagonal() {
            Some(d) => {
                let worst = d
                    .iter()
                    .map(|x| (x - 1.0).abs())
                    .fold(0.0, f64::max);
                if worst > INSTRUMENT_TP_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "total map not trace-preserving (defect {:.3e})",
                        worst
                    )));
                }
            }
            None => {
                let mut sum = Operator::zeros(dim);
                for o in &inst.ops {
                    sum = sum.add(&o.effect());
                }
                let defect = sum.sub(&Operator::identity(dim)).operator_norm();
                if defect > INSTRUMENT_TP_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "total map not trace-preserving (defect {:.3e})",
                        defect
                    )));
                }
            }
        }
        Ok(inst)
    }

    pub fn outcomes(&self) -> &Outcomes {
        &self.outcomes
    }

    pub fn n_outcomes(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn operation(&self, i: usize) -> &Operation {
        &self.ops[i]
    }

    fn total_effect_diagonal(&self) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim()];
        for o in &self.ops {
            let d = o.effect_diagonal()?;
            for (a, b) in acc.iter_mut().zip(d) {
                *a += b;
            }
        }
        Some(acc)
    }

    /// Selective application: unnormalized post-measurement state and weight.
    pub fn apply(&self, i: usize, t: &State) -> Result<(Operator, f64)> {
        apply(&self.ops[i], t)
    }

    /// Nonselective map I_Ω(T) = Σ_X I_X(T).
    pub fn total_apply(&self, t: &State) -> Operator {
        let mut out = Operator::zeros(self.dim());
        for o in &self.ops {
            out = out.add(&o.apply_matrix(t.op()));
        }
        out
    }

    /// The unique POVM with tr{I_X(T)} = tr{T·E(X)}.
    pub fn induced_povm(&self) -> Result<Povm> {
        if let Some(_d) = self.total_effect_diagonal() {
            let weights: Vec<Vec<f64>> = self
                .ops
                .iter()
                .map(|o| o.effect_diagonal().unwrap())
                .collect();
            return Povm::from_diagonal(self.outcomes.clone(), DiagBasis::Position, weights);
        }
        let effects: Vec<Operator> = self.ops.iter().map(|o| o.effect()).collect();
        Povm::from_effects(self.outcomes.clone(), effects)
    }
}

/// Generalized Lüders instrument T ↦ E_i^{1/2} T E_i^{1/2}; for sharp
/// observables this is the unique ideal measurement.
pub fn luders_instrument(e: &Povm) -> Result<Instrument> {
    let ops: Vec<Operation> = match e.diagonal_weights() {
        Some((DiagBasis::Position, weights)) => weights
            .iter()
            .map(|w| {
                let d = CVector::from_fn(w.len(), |j, _| {
                    Complex64::new(w[j].max(0.0).sqrt(), 0.0)
                });
                Operation::new(vec![KrausOp::Diagonal(d)])
            })
            .collect::<Result<_>>()?,
        _ => (0..e.n_outcomes())
            .map(|i| {
                let root = e.effect_operator(i).sqrt_psd()?;
                Operation::new(vec![KrausOp::Dense(root)])
            })
            .collect::<Result<_>>()?,
    };
    Instrument::new(e.outcomes().clone(), ops)
}

/// Von Neumann measurement of a discrete Hermitian observable: the Kraus
/// family of each eigenvalue is its full set of rank-1 eigenprojections, so
/// degenerate eigenvalues decohere inside their eigenspaces.
pub fn vn_discrete_instrument(a: &Operator, labels: Vec<String>) -> Result<Instrument> {
    if a.hermiticity_defect() > 1e-8 {
        return Err(Error::NonHermitian(a.hermiticity_defect()));
    }
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
    let ops: Vec<Operation> = groups
        .iter()
        .map(|(_, idx)| {
            let kraus: Vec<KrausOp> = idx
                .iter()
                .map(|&i| {
                    let v = CVector::from_column_slice(vecs.matrix().column(i).as_slice());
                    KrausOp::RankOne {
                        out: v.clone(),
                        inp: v,
                    }
                })
                .collect();
            Operation::new(kraus)
        })
        .collect::<Result<_>>()?;
    Instrument::new(Outcomes::Labels(labels), ops)
}

/// Von Neumann unsharp position instrument: one diagonal Kraus operator per
/// outcome cell, with entries drawn from the probe profile. `probe` is the
/// ℓ²-normalized probe vector on the apparatus grid (which has length λ·L, so
/// pointer cells calibrate one-to-one onto system cells).
pub fn vn_position_instrument(
    g: &OutcomeGrid,
    lambda: f64,
    probe: &CVector,
) -> Result<Instrument> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("λ must be positive".into()));
    }
    let n = g.n_points();
    if probe.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "probe length {} vs grid {}",
            probe.len(),
            n
        )));
    }
    if (probe.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "probe not normalized (‖φ‖ = {})",
            probe.norm()
        )));
    }
    let half = n / 2;
    let ops: Vec<Operation> = (0..n)
        .map(|c| {
            let d = CVector::from_fn(n, |j, _| probe[(c + n + half - j) % n]);
            Operation::new(vec![KrausOp::Diagonal(d)])
        })
        .collect::<Result<_>>()?;
    Instrument::new(Outcomes::Grid(g.clone()), ops)
}

/// The smearing kernel this instrument measures: cell d carries the probe
/// mass at the mirrored displacement, e(q) = λ|φ(−λq)|² in grid form.
pub fn vn_kernel(g: &OutcomeGrid, probe: &CVector) -> crate::observables::Distribution {
    let n = g.n_points();
    let weights: Vec<f64> = (0..n).map(|d| probe[(n - d) % n].norm_sqr()).collect();
    crate::observables::Distribution::new(Outcomes::Grid(g.clone()), weights)
        .expect("probe masses form a distribution")
}

/// Ozawa's sharp position instrument: I_q(T) = tr{T·Q(q)} × (probe state
/// translated to the recorded cell). Measures sharp position exactly,
/// independently of the probe.
pub fn ozawa_instrument(g: &OutcomeGrid, probe_state: &State) -> Result<Instrument> {
    let n = g.n_points();
    if probe_state.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "probe dim {} vs grid {}",
            probe_state.dim(),
            n
        )));
    }
    let (vals, vecs) = probe_state.op().eig_hermitian()?;
    let comps: Vec<(f64, CVector)> = vals
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-14)
        .map(|(i, &s)| {
            (
                s,
                CVector::from_column_slice(vecs.matrix().column(i).as_slice()),
            )
        })
        .collect();
    let ops: Vec<Operation> = (0..n)
        .map(|q| {
            let cells = q as isize - (n / 2) as isize;
            let shift = shift_operator(n, cells);
            let kraus: Vec<KrausOp> = comps
                .iter()
                .map(|(s, u)| {
                    let translated = shift.apply(u) * Complex64::new(s.sqrt(), 0.0);
                    let mut inp = CVector::zeros(n);
                    inp[q] = Complex64::new(1.0, 0.0);
                    KrausOp::RankOne {
                        out: translated,
                        inp,
                    }
                })
                .collect();
            Operation::new(kraus)
        })
        .collect::<Result<_>>()?;
    Instrument::new(Outcomes::Grid(g.clone()), ops)
}

/// Trivial instrument I_X(T) = λ_X·T: nondisturbing, information-free.
pub fn trivial_instrument(outcomes: Outcomes, constants: &[f64], dim: usize) -> Result<Instrument> {
    if constants.len() != outcomes.len() {
        return Err(Error::InvalidArgument(
            "one constant per outcome required".into(),
        ));
    }
    let total: f64 = constants.iter().sum();
    if (total - 1.0).abs() > 1e-12 || constants.iter().any(|&c| c < 0.0) {
        return Err(Error::InvalidArgument(
            "constants must be a probability vector".into(),
        ));
    }
    let ops: Vec<Operation> = constants
        .iter()
        .map(|&c| {
            Operation::new(vec![KrausOp::Diagonal(CVector::from_element(
                dim,
                Complex64::new(c.sqrt(), 0.0),
            ))])
        })
        .collect::<Result<_>>()?;
    Instrument::new(outcomes, ops)
}

/// The deterministic probe-state family the predicates quantify over:
/// computational basis states, adjacent-pair superpositions (real and
/// imaginary phase), and seeded random pure states. These span the Hermitian
/// matrix space, so affine identities verified on them hold globally.
pub fn spanning_states(dim: usize, n_random: usize, seed: u64) -> Vec<State> {
    use rand::{Rng, SeedableRng};
    let mut states = Vec::new();
    for k in 0..dim {
        states.push(State::basis(dim, k));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..dim.saturating_sub(1) {
        let mut v = CVector::zeros(dim);
        v[k] = Complex64::new(s, 0.0);
        v[k + 1] = Complex64::new(s, 0.0);
        states.push(State::pure(&v).unwrap());
        let mut w = CVector::zeros(dim);
        w[k] = Complex64::new(s, 0.0);
        w[k + 1] = Complex64::new(0.0, s);
        states.push(State::pure(&w).unwrap());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        let mut v = CVector::from_fn(dim, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        v /= Complex64::new(v.norm(), 0.0);
        states.push(State::pure(&v).unwrap());
    }
    states
}

/// Result of a repeatability or ideality sweep.
#[derive(Debug, Clone, Copy)]
pub struct PredicateReport {
    pub holds: bool,
    /// Worst-case margin found; nonnegative within tolerance when the
    /// predicate holds.
    pub margin: f64,
}

/// (d, 1−ε)-repeatability: tr{I_{X_d}(I_X(T))} ≥ (1−ε)·tr{I_X(T)} for every
/// outcome cell X over the probe-state family; d = ε = 0 recovers strict
/// repeatability. Returns the minimal margin found.
pub fn is_repeatable(instr: &Instrument, d: f64, eps: f64) -> Result<PredicateReport> {
    let dim = instr.dim();
    let n_random = if dim > 64 { 8 } else { 50 };
    let states = spanning_states(dim, n_random, 0x5eed);
    let grid = instr.outcomes().grid().cloned();
    if d > 0.0 && grid.is_none() {
        return Err(Error::InvalidArgument(
            "d > 0 needs grid outcomes".into(),
        ));
    }

    // Cells within distance d of outcome cell i (periodic).
    let widen = |i: usize| -> Vec<usize> {
        match &grid {
            Some(g) => {
                let h = (d / g.spacing() + 1e-9).floor() as usize;
                g.interval_cells(i, 2 * h + 1)
            }
            None => vec![i],
        }
    };
    let povm = instr.induced_povm()?;

    let mut margin = f64::INFINITY;
    for t in &states {
        for i in 0..instr.n_outcomes() {
            let (post, w) = instr.apply(i, t)?;
            if w < 1e-12 {
                continue;
            }
            let cells = widen(i);
            let exd = povm.effect_of_cells(&cells);
            let repeat = exd.mul(&post).trace().re;
            let m = repeat - (1.0 - eps) * w;
            if m < margin {
                margin = m;
            }
        }
    }
    Ok(PredicateReport {
        holds: margin >= -INSTRUMENT_TP_TOL,
        margin,
    })
}

/// Ideality: whenever an outcome is certain, the state is unchanged (ε = 0);
/// the ε > 0 relaxation checks that the outcome probability does not decrease,
/// tr{I_i(T)E_i} ≥ (1−ε)·tr{TE_i} whenever tr{TE_i} ≥ 1−ε.
pub fn is_ideal(instr: &Instrument, eps: f64) -> Result<PredicateReport> {
    let povm = instr.induced_povm()?;
    let dim = instr.dim();
    if eps == 0.0 {
        // Certainty subspace of each outcome: eigenvectors of E_i at 1.
        let mut worst = 0.0_f64;
        for i in 0..instr.n_outcomes() {
            let e = povm.effect_operator(i);
            let (vals, vecs) = e.eig_hermitian()?;
            let certain: Vec<CVector> = vals
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= 1.0 - 1e-10)
                .map(|(k, _)| CVector::from_column_slice(vecs.matrix().column(k).as_slice()))
                .collect();
            if certain.is_empty() {
                continue;
            }
            // Basis of the certainty space plus mixtures within it.
            let mut probes: Vec<State> = certain.iter().map(|v| State::pure(v).unwrap()).collect();
            if certain.len() > 1 {
                let mut mix = Operator::zeros(dim);
                for v in &certain {
                    mix = mix.add(&Operator::projector(v).scale_re(1.0 / certain.len() as f64));
                }
                probes.push(State::new(mix)?);
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let sup = (&certain[0] * Complex64::new(s, 0.0))
                    + (&certain[1] * Complex64::new(s, 0.0));
                let norm = sup.norm();
                probes.push(State::pure(&(&sup / Complex64::new(norm, 0.0)))?);
            }
            for t in &probes {
                let (post, _) = instr.apply(i, t)?;
                let dev = post.sub(t.op()).trace_norm_hermitian()?;
                if dev > worst {
                    worst = dev;
                }
            }
        }
        return Ok(PredicateReport {
            holds: worst <= 1e-9,
            margin: 1e-9 - worst,
        });
    }

    // ε > 0: Eq.-(19)-style check over states concentrated on each effect.
    let mut margin = f64::INFINITY;
    let states = spanning_states(dim, 50, 0xa11ce);
    for i in 0..instr.n_outcomes() {
        let e = povm.effect_operator(i);
        let (vals, vecs) = e.eig_hermitian()?;
        let top = CVector::from_column_slice(
            vecs.matrix().column(vals.len() - 1).as_slice(),
        );
        let top_state = State::pure(&top)?;
        let mut candidates: Vec<State> = vec![top_state.clone()];
        for t in states.iter().take(12) {
            // Pull random states toward the top eigenvector to reach the
            // confidence region.
            for lam in [0.5, 0.9] {
                let mixed = State::new(
                    top_state
                        .op()
                        .scale_re(lam)
                        .add(&t.op().scale_re(1.0 - lam)),
                )?;
                candidates.push(mixed);
            }
        }
        for t in candidates {
            let p = e.mul(t.op()).trace().re;
            if p < 1.0 - eps {
                continue;
            }
            let (post, _) = instr.apply(i, &t)?;
            let repeat = e.mul(&post).trace().re;
            let m = repeat - (1.0 - eps) * p;
            if m < margin {
                margin = m;
            }
        }
    }
    if margin == f64::INFINITY {
        return Err(Error::InvalidArgument(
            "no states reach the (1−ε) confidence region".into(),
        ));
    }
    Ok(PredicateReport {
        holds: margin >= -INSTRUMENT_TP_TOL,
        margin,
    })
}

/// Outcome of the no-information-without-disturbance check.
#[derive(Debug, Clone)]
pub enum DisturbanceVerdict {
    /// The nonselective map is the identity; the induced POVM is then trivial
    /// with these constants.
    Nondisturbing { constants: Vec<f64> },
    /// A state the nonselective map visibly changes.
    Disturbing { witness: State, change: f64 },
}

/// Tests I_Ω(T) = T on the probe-state family. Nondisturbing instruments must
/// have a trivial induced POVM (no information without disturbance); a
/// disturbing instrument yields the first witness state found.
pub fn nondisturbance_is_trivial(instr: &Instrument, tol: f64) -> Result<DisturbanceVerdict> {
    let dim = instr.dim();
    let n_random = if dim > 64 { 8 } else { 50 };
    let states = spanning_states(dim, n_random, 0xd15);
    for t in &states {
        let out = instr.total_apply(t);
        let change = out.sub(t.op()).trace_norm_hermitian()?;
        if change > tol {
            return Ok(DisturbanceVerdict::Disturbing {
                witness: t.clone(),
                change,
            });
        }
    }
    let povm = instr.induced_povm()?;
    let constants = trivial_constants(&povm, (10.0 * tol).max(1e-9)).ok_or_else(|| {
        Error::InvalidArgument(
            "nondisturbing instrument with nontrivial POVM: spanning set too sparse".into(),
        )
    })?;
    Ok(DisturbanceVerdict::Nondisturbing { constants })
}

/// Verdict of the two Lüders-theorem conditions, computed independently.
#[derive(Debug, Clone, Copy)]
pub struct CompatibilityVerdict {
    /// (a) Σ_k P_k B P_k = B as operators.
    pub invariant: bool,
    /// (b) B commutes with every effect.
    pub commutes: bool,
    pub invariant_defect: f64,
    pub commutation_defect: f64,
}

impl CompatibilityVerdict {
    pub fn consistent(&self) -> bool {
        self.invariant == self.commutes
    }
}

/// Lüders theorem check for a sharp discrete observable: the nonselective
/// Lüders measurement leaves B invariant iff B commutes with the observable.
pub fn luders_compatibility(a_pvm: &Povm, b: &Operator, tol: f64) -> Result<CompatibilityVerdict> {
    if !a_pvm.is_sharp(1e-9) {
        return Err(Error::InvalidArgument(
            "first argument must be a sharp observable".into(),
        ));
    }
    let mut sandwich = Operator::zeros(b.dim());
    let mut comm_defect = 0.0_f64;
    for i in 0..a_pvm.n_outcomes() {
        let p = a_pvm.effect_operator(i);
        sandwich = sandwich.add(&p.mul(b).mul(&p));
        comm_defect = comm_defect.max(p.commutator(b).operator_norm());
    }
    let inv_defect = sandwich.sub(b).operator_norm();
    Ok(CompatibilityVerdict {
        invariant: inv_defect <= tol,
        commutes: comm_defect <= tol,
        invariant_defect: inv_defect,
        commutation_defect: comm_defect,
    })
}

/// Generalized Lüders theorem check, restricted to simple observables with
/// exactly two effects (the unconditional case of the theorem).
pub fn gen_luders_compatibility(
    e: &Povm,
    b: &Operator,
    tol: f64,
) -> Result<CompatibilityVerdict> {
    if e.n_outcomes() != 2 {
        return Err(Error::InvalidArgument(
            "generalized Lüders check covers two-effect observables only".into(),
        ));
    }
    let mut sandwich = Operator::zeros(b.dim());
    let mut comm_defect = 0.0_f64;
    for i in 0..2 {
        let ei = e.effect_operator(i);
        let root = ei.sqrt_psd()?;
        sandwich = sandwich.add(&root.mul(b).mul(&root));
        comm_defect = comm_defect.max(ei.commutator(b).operator_norm());
    }
    let inv_defect = sandwich.sub(b).operator_norm();
    Ok(CompatibilityVerdict {
        invariant: inv_defect <= tol,
        commutes: comm_defect <= tol,
        invariant_defect: inv_defect,
        commutation_defect: comm_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ProbeShape;
    use crate::observables::{is_trivial, position_pvm, smear};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn qubit_plus() -> State {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        State::pure(&CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)])).unwrap()
    }

    fn sigma_z_pvm() -> Povm {
        crate::observables::pvm_from_hermitian(
            &Operator::diagonal_real(&[1.0, -1.0]),
            Outcomes::Labels(vec!["-".into(), "+".into()]),
        )
        .unwrap()
    }

    #[test]
    fn identity_operation_preserves() {
        let t = qubit_plus();
        let (out, w) = apply(&Operation::identity(2), &t).unwrap();
        assert!(out.sub(t.op()).frobenius_norm() < 1e-14);
        assert_relative_eq!(w, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn luders_on_supported_state() {
        // P T P = T when T is supported in ran P.
        let p = Operator::diagonal_real(&[1.0, 1.0, 0.0]);
        let op = Operation::from_dense(vec![p]).unwrap();
        let mut v = CVector::zeros(3);
        v[0] = c(0.6, 0.0);
        v[1] = c(0.8, 0.0);
        let t = State::pure(&v).unwrap();
        let (out, w) = apply(&op, &t).unwrap();
        assert!(out.sub(t.op()).frobenius_norm() < 1e-14);
        assert_relative_eq!(w, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn qubit_luders_on_plus_state() {
        // σz-up Lüders operation on |+⟩⟨+|: hand-computed 2×2 case.
        let up = Operation::from_dense(vec![Operator::diagonal_real(&[1.0, 0.0])]).unwrap();
        let (out, w) = apply(&up, &qubit_plus()).unwrap();
        assert_relative_eq!(w, 0.5, epsilon = 1e-14);
        assert_relative_eq!(out.matrix()[(0, 0)].re, 0.5, epsilon = 1e-14);
        assert!(out.matrix()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn luders_of_pvm_reproduces_povm() {
        let pvm = sigma_z_pvm();
        let inst = luders_instrument(&pvm).unwrap();
        let induced = inst.induced_povm().unwrap();
        for i in 0..2 {
            assert!(
                induced
                    .effect_operator(i)
                    .sub(&pvm.effect_operator(i))
                    .operator_norm()
                    < 1e-10
            );
        }
    }

    #[test]
    fn luders_induced_matches_sqrt_identity() {
        // induced_povm(luders(E)) = E since √E·√E = E.
        let e1 = Operator::from_fn(2, |i, j| match (i, j) {
            (0, 0) => c(0.7, 0.0),
            (1, 1) => c(0.4, 0.0),
            (0, 1) => c(0.1, 0.05),
            (1, 0) => c(0.1, -0.05),
            _ => c(0.0, 0.0),
        });
        let e2 = Operator::identity(2).sub(&e1);
        let povm = Povm::from_effects(
            Outcomes::Labels(vec!["0".into(), "1".into()]),
            vec![e1, e2],
        )
        .unwrap();
        let induced = luders_instrument(&povm).unwrap().induced_povm().unwrap();
        for i in 0..2 {
            assert!(
                induced
                    .effect_operator(i)
                    .sub(&povm.effect_operator(i))
                    .operator_norm()
                    < 1e-10
            );
        }
    }

    #[test]
    fn luders_is_repeatable_and_ideal() {
        let inst = luders_instrument(&sigma_z_pvm()).unwrap();
        let rep = is_repeatable(&inst, 0.0, 0.0).unwrap();
        assert!(rep.holds, "margin {}", rep.margin);
        let ideal = is_ideal(&inst, 0.0).unwrap();
        assert!(ideal.holds, "margin {}", ideal.margin);
    }

    #[test]
    fn degenerate_vn_repeatable_not_ideal() {
        let a = Operator::diagonal_real(&[1.0, 1.0, 2.0]);
        let inst = vn_discrete_instrument(&a, vec!["one".into(), "two".into()]).unwrap();
        assert!(is_repeatable(&inst, 0.0, 0.0).unwrap().holds);
        let ideal = is_ideal(&inst, 0.0).unwrap();
        assert!(!ideal.holds, "degenerate von Neumann must not be ideal");

        // Exhibit the witness: a superposition inside the degenerate
        // eigenspace is decohered even though its outcome is certain.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = CVector::zeros(3);
        v[0] = c(s, 0.0);
        v[1] = c(s, 0.0);
        let t = State::pure(&v).unwrap();
        let (post, w) = inst.apply(0, &t).unwrap();
        assert_relative_eq!(w, 1.0, epsilon = 1e-10);
        assert!(post.sub(t.op()).trace_norm_hermitian().unwrap() > 0.5);
    }

    #[test]
    fn nondegenerate_vn_equals_luders() {
        let a = Operator::diagonal_real(&[1.0, 2.0, 3.0]);
        let labels: Vec<String> = vec!["1".into(), "2".into(), "3".into()];
        let vn = vn_discrete_instrument(&a, labels.clone()).unwrap();
        let pvm = crate::observables::pvm_from_hermitian(&a, Outcomes::Labels(labels)).unwrap();
        let lud = luders_instrument(&pvm).unwrap();
        let t = spanning_states(3, 5, 3)[4].clone();
        for i in 0..3 {
            let (a_out, _) = vn.apply(i, &t).unwrap();
            let (b_out, _) = lud.apply(i, &t).unwrap();
            assert!(a_out.sub(&b_out).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn vn_position_instrument_trace_preserving_and_smeared() {
        let g = OutcomeGrid::new(64, 16.0).unwrap();
        let probe = ProbeShape::Gaussian { sigma: 0.5 }.sample(&g);
        let inst = vn_position_instrument(&g, 1.0, &probe).unwrap();
        let induced = inst.induced_povm().unwrap();
        let kernel = vn_kernel(&g, &probe);
        let smeared = smear(&kernel, &position_pvm(&g)).unwrap();
        for i in 0..64 {
            assert!(
                induced
                    .effect_operator(i)
                    .sub(&smeared.effect_operator(i))
                    .operator_norm()
                    < 1e-8,
                "effect {} differs",
                i
            );
        }
    }

    #[test]
    fn vn_position_post_state_localized() {
        // Direct-simulation oracle: position variance of the conditional
        // output state stays within kernel variance + O(Δx).
        let g = OutcomeGrid::new(64, 16.0).unwrap();
        let probe = ProbeShape::Gaussian { sigma: 0.5 }.sample(&g);
        let inst = vn_position_instrument(&g, 1.0, &probe).unwrap();
        let kernel = vn_kernel(&g, &probe);
        let t = State::maximally_mixed(64);
        let qpvm = position_pvm(&g);
        let c0 = 32usize; // central outcome cell
        let (post, w) = inst.apply(c0, &t).unwrap();
        let normalized = State::new(post.scale_re(1.0 / w)).unwrap();
        let d = qpvm.probability_distribution(&normalized).unwrap();
        assert!(d.variance() <= kernel.variance() + 2.0 * g.spacing());
    }

    #[test]
    fn vn_position_approximately_repeatable() {
        let g = OutcomeGrid::new(64, 16.0).unwrap();
        let sigma = 2.0 * g.spacing();
        let probe = ProbeShape::Gaussian { sigma }.sample(&g);
        let inst = vn_position_instrument(&g, 1.0, &probe).unwrap();
        // Not strictly repeatable.
        let strict = is_repeatable(&inst, 0.0, 0.0).unwrap();
        assert!(!strict.holds);
        // (d, 1−ε)-repeatable at d a few kernel widths, ε = 0.05.
        let relaxed = is_repeatable(&inst, 8.0 * sigma, 0.05).unwrap();
        assert!(relaxed.holds, "margin {}", relaxed.margin);
    }

    #[test]
    fn ozawa_reproduces_sharp_position_statistics() {
        let g = OutcomeGrid::new(32, 8.0).unwrap();
        let probe = State::maximally_mixed(32);
        let inst = ozawa_instrument(&g, &probe).unwrap();
        let qpvm = position_pvm(&g);
        for t in spanning_states(32, 6, 9).iter().skip(60) {
            let d = qpvm.probability_distribution(t).unwrap();
            for i in 0..32 {
                let (_, w) = inst.apply(i, t).unwrap();
                assert_relative_eq!(w, d.weights()[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ozawa_delta_repeatable_with_concentrated_probe() {
        let g = OutcomeGrid::new(32, 8.0).unwrap();
        // Probe concentrated within one cell of the origin.
        let probe = State::basis(32, 16);
        let inst = ozawa_instrument(&g, &probe).unwrap();
        let delta = g.spacing();
        let rep = is_repeatable(&inst, delta, 0.0).unwrap();
        assert!(rep.holds, "margin {}", rep.margin);
    }

    #[test]
    fn ozawa_output_independent_of_input() {
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let probe = State::basis(16, 8);
        let inst = ozawa_instrument(&g, &probe).unwrap();
        let states = spanning_states(16, 2, 4);
        let (a, wa) = inst.apply(3, &states[40]).unwrap();
        let (b, wb) = inst.apply(3, &states[41]).unwrap();
        if wa > 1e-9 && wb > 1e-9 {
            assert!(
                a.scale_re(1.0 / wa).sub(&b.scale_re(1.0 / wb)).frobenius_norm() < 1e-9,
                "output state depends on input beyond its weight"
            );
        }
    }

    #[test]
    fn trivial_instrument_nondisturbing_constants_recovered() {
        let inst = trivial_instrument(
            Outcomes::Labels(vec!["x".into(), "y".into()]),
            &[1.0 / 3.0, 2.0 / 3.0],
            4,
        )
        .unwrap();
        match nondisturbance_is_trivial(&inst, 1e-9).unwrap() {
            DisturbanceVerdict::Nondisturbing { constants } => {
                assert_relative_eq!(constants[0], 1.0 / 3.0, epsilon = 1e-10);
                assert_relative_eq!(constants[1], 2.0 / 3.0, epsilon = 1e-10);
            }
            DisturbanceVerdict::Disturbing { .. } => panic!("trivial instrument disturbed"),
        }
        assert!(!is_repeatable(&inst, 0.0, 0.0).unwrap().holds);
    }

    #[test]
    fn luders_sigma_z_disturbs_plus() {
        let inst = luders_instrument(&sigma_z_pvm()).unwrap();
        match nondisturbance_is_trivial(&inst, 1e-9).unwrap() {
            DisturbanceVerdict::Disturbing { witness, change } => {
                // I_Ω(|+⟩⟨+|) = ½·1, trace distance 1.
                assert!(change >= 0.5, "change {}", change);
                let _ = witness;
            }
            DisturbanceVerdict::Nondisturbing { .. } => panic!("Lüders must disturb"),
        }
    }

    #[test]
    fn generalized_luders_approximately_ideal_not_repeatable() {
        let e1 = Operator::diagonal_real(&[0.8, 0.2]);
        let e2 = Operator::identity(2).sub(&e1);
        let g = Outcomes::Labels(vec!["1".into(), "2".into()]);
        let povm = Povm::from_effects(g, vec![e1, e2]).unwrap();
        let inst = luders_instrument(&povm).unwrap();
        let approx_ideal = is_ideal(&inst, 0.25).unwrap();
        assert!(approx_ideal.holds, "margin {}", approx_ideal.margin);
        assert!(!is_repeatable(&inst, 0.0, 0.0).unwrap().holds);
    }

    #[test]
    fn approximate_ideality_rate() {
        // ‖T − I_i(T)/tr‖₁ for states with tr{TE₁} = 1−ε shrinks like √ε:
        // log-log slope over the ε ladder must exceed 0.4.
        let e1 = Operator::diagonal_real(&[1.0, 0.5, 0.2]);
        let e2 = Operator::identity(3).sub(&e1);
        let povm = Povm::from_effects(
            Outcomes::Labels(vec!["1".into(), "2".into()]),
            vec![e1.clone(), e2],
        )
        .unwrap();
        let inst = luders_instrument(&povm).unwrap();
        let mut points = Vec::new();
        for eps in [0.1_f64, 0.01, 0.001] {
            // State with tr{TE₁} = 1−ε: tilt |0⟩ toward |1⟩.
            let s2 = 2.0 * eps; // sin²θ with eigenvalue gap 0.5
            let v = CVector::from_vec(vec![
                c((1.0 - s2).sqrt(), 0.0),
                c(s2.sqrt(), 0.0),
                c(0.0, 0.0),
            ]);
            let t = State::pure(&v).unwrap();
            let p = e1.mul(t.op()).trace().re;
            assert!((p - (1.0 - eps)).abs() < 1e-12);
            let (post, w) = inst.apply(0, &t).unwrap();
            let diff = post
                .scale_re(1.0 / w)
                .sub(t.op())
                .trace_norm_hermitian()
                .unwrap();
            points.push((eps, diff));
        }
        let slope = ((points[0].1.ln() - points[2].1.ln())
            / (points[0].0.ln() - points[2].0.ln()))
        .abs();
        assert!(slope >= 0.4, "slope {}", slope);
    }

    #[test]
    fn luders_theorem_qubit_case() {
        let pvm = sigma_z_pvm();
        let commuting = Operator::diagonal_real(&[0.3, 0.9]);
        let v = luders_compatibility(&pvm, &commuting, 1e-9).unwrap();
        assert!(v.invariant && v.commutes && v.consistent());

        // B = ½(1 + σx): both fail, with invariant defect exactly ½.
        let b = Operator::from_fn(2, |i, j| if i == j { c(0.5, 0.0) } else { c(0.5, 0.0) });
        let v = luders_compatibility(&pvm, &b, 1e-9).unwrap();
        assert!(!v.invariant && !v.commutes && v.consistent());
        assert_relative_eq!(v.invariant_defect, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn luders_theorem_random_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for trial in 0..50 {
            let dim = 3;
            let a = {
                let gm = Operator::from_fn(dim, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                gm.add(&gm.adjoint()).scale_re(0.5)
            };
            let labels: Vec<String> = (0..dim).map(|k| k.to_string()).collect();
            let pvm = match crate::observables::pvm_from_hermitian(&a, Outcomes::Labels(labels)) {
                Ok(p) => p,
                Err(_) => continue, // degenerate draw
            };
            let b = {
                let gm = Operator::from_fn(dim, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let h = gm.add(&gm.adjoint()).scale_re(0.5);
                // Compress into an effect.
                let norm = h.operator_norm();
                h.scale_re(0.25 / norm.max(1e-12))
                    .add(&Operator::identity(dim).scale_re(0.5))
            };
            let v = luders_compatibility(&pvm, &b, 1e-8).unwrap();
            assert!(v.consistent(), "trial {}: (a)⇎(b)", trial);
        }
    }

    #[test]
    fn gen_luders_two_effect_cases() {
        // E₁ = ½·1: both conditions hold trivially.
        let half = Operator::identity(2).scale_re(0.5);
        let povm = Povm::from_effects(
            Outcomes::Labels(vec!["1".into(), "2".into()]),
            vec![half.clone(), half],
        )
        .unwrap();
        let b = Operator::from_fn(2, |i, j| if i == j { c(0.5, 0.0) } else { c(0.3, 0.0) });
        let v = gen_luders_compatibility(&povm, &b, 1e-9).unwrap();
        assert!(v.invariant && v.commutes);

        // Three outcomes rejected (theorem case I only).
        let third = Operator::identity(2).scale_re(1.0 / 3.0);
        let povm3 = Povm::from_effects(
            Outcomes::Labels(vec!["1".into(), "2".into(), "3".into()]),
            vec![third.clone(), third.clone(), third],
        )
        .unwrap();
        assert!(gen_luders_compatibility(&povm3, &b, 1e-9).is_err());
    }

    #[test]
    fn gen_luders_random_equivalence_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
        let dim = 3;
        for trial in 0..100 {
            let h = {
                let gm = Operator::from_fn(dim, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                gm.add(&gm.adjoint()).scale_re(0.5)
            };
            let e1 = {
                let norm = h.operator_norm();
                h.scale_re(0.4 / norm.max(1e-12))
                    .add(&Operator::identity(dim).scale_re(0.5))
            };
            let e2 = Operator::identity(dim).sub(&e1);
            let povm = Povm::from_effects(
                Outcomes::Labels(vec!["1".into(), "2".into()]),
                vec![e1.clone(), e2],
            )
            .unwrap();
            let commuting = trial % 2 == 0;
            let b = if commuting {
                // Function of E₁ commutes with both effects.
                e1.mul(&e1).scale_re(0.5)
            } else {
                let gm = Operator::from_fn(dim, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let hh = gm.add(&gm.adjoint()).scale_re(0.5);
                let norm = hh.operator_norm();
                hh.scale_re(0.3 / norm.max(1e-12))
                    .add(&Operator::identity(dim).scale_re(0.5))
            };
            let v = gen_luders_compatibility(&povm, &b, 1e-8).unwrap();
            assert!(v.consistent(), "trial {}: (a')⇎(b')", trial);
            if commuting {
                assert!(v.commutes, "trial {}: constructed commuting pair", trial);
            }
        }
    }

    #[test]
    fn choi_matrix_psd() {
        let g = OutcomeGrid::new(8, 4.0).unwrap();
        let probe = ProbeShape::Gaussian { sigma: 0.5 }.sample(&g);
        let inst = vn_position_instrument(&g, 1.0, &probe).unwrap();
        for i in [0usize, 4] {
            let choi = choi_matrix(inst.operation(i));
            let min = choi.min_eigenvalue().unwrap();
            assert!(min > -1e-9, "Choi eigenvalue {}", min);
        }
    }

    #[test]
    fn induced_weights_match_apply_weights() {
        let g = OutcomeGrid::new(16, 4.0).unwrap();
        let probe = ProbeShape::Uniform { width: 1.0 }.sample(&g);
        let inst = vn_position_instrument(&g, 1.0, &probe).unwrap();
        let povm = inst.induced_povm().unwrap();
        for t in spanning_states(16, 5, 21).iter().rev().take(5) {
            let d = povm.probability_distribution(t).unwrap();
            for i in 0..16 {
                let (_, w) = inst.apply(i, t).unwrap();
                assert_relative_eq!(w, d.weights()[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn trivial_instrument_fails_repeatability_unless_degenerate() {
        let inst = trivial_instrument(
            Outcomes::Labels(vec!["x".into(), "y".into()]),
            &[0.5, 0.5],
            3,
        )
        .unwrap();
        let rep = is_repeatable(&inst, 0.0, 0.0).unwrap();
        assert!(!rep.holds);
        // Degenerate POVM (single outcome) is trivially repeatable.
        let single = trivial_instrument(Outcomes::Labels(vec!["only".into()]), &[1.0], 3).unwrap();
        assert!(is_repeatable(&single, 0.0, 0.0).unwrap().holds);
        assert!(is_trivial(&single.induced_povm().unwrap(), 1e-10));
    }
}
