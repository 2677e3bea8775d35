//! Pure states split into populations and phases, and the equilibrium
//! quantities built from them.
//!
//! A pure state in the energy eigenbasis is `c_n = sqrt(P_n) e^{-i alpha_n}`.
//! Populations are constants of motion; the dephasing (infinite-time) average
//! of the projector keeps only the diagonal `diag(P)` when the spectrum is
//! non-degenerate, and intra-block coherences otherwise.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{assert_hermitian, hermitian_eigen, CMatrix, CVector};
use crate::spectra::{BipartiteModel, Spectrum};
use crate::{tol, Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Normalized, non-negative populations over N levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSet {
    p: Vec<f64>,
}

impl PopulationSet {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::TooFewLevels { needed: 2, found: p.len() });
        }
        if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidPopulations(format!("entry {bad} is negative or non-finite")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > tol::POPULATION_SUM {
            return Err(Error::InvalidPopulations(format!(
                "sum {sum} deviates from 1 by more than {:.1e}",
                tol::POPULATION_SUM
            )));
        }
        Ok(PopulationSet { p })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewLevels { needed: 2, found: n });
        }
        Ok(PopulationSet { p: vec![1.0 / n as f64; n] })
    }

    /// Single level fully populated.
    pub fn eigenstate(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidArgument(format!("index {index} out of {n} levels")));
        }
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        PopulationSet::new(p)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor enforces N >= 2
    }

    pub fn get(&self, n: usize) -> f64 {
        self.p[n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.p.iter()
    }
}

/// Shannon entropy of a probability vector, with 0 log 0 := 0. Dimensionless
/// (natural log, unit Boltzmann constant).
pub fn entropy_of(p: &[f64]) -> f64 {
    p.iter().map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 }).sum()
}

/// Entropy of a population set.
pub fn entropy(p: &PopulationSet) -> f64 {
    entropy_of(p.as_slice())
}

/// Expectation energy `sum P_n E_n`.
pub fn expectation_energy(p: &PopulationSet, spectrum: &Spectrum) -> Result<f64> {
    if p.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} populations vs {} levels",
            p.len(),
            spectrum.len()
        )));
    }
    Ok(p.iter().zip(spectrum.energies()).map(|(x, e)| x * e).sum())
}

/// Populations plus phases; `c_n = sqrt(P_n) e^{-i alpha_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    populations: PopulationSet,
    phases: Vec<f64>,
}

impl PureState {
    /// Phases are reduced modulo 2 pi on construction.
    pub fn new(populations: PopulationSet, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != populations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} phases vs {} populations",
                phases.len(),
                populations.len()
            )));
        }
        if phases.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite phase".into()));
        }
        let phases = phases.into_iter().map(|a| a.rem_euclid(TAU)).collect();
        Ok(PureState { populations, phases })
    }

    /// Zero-phase state over the given populations.
    pub fn aligned(populations: PopulationSet) -> Self {
        let n = populations.len();
        PureState { populations, phases: vec![0.0; n] }
    }

    /// Random phases, uniform on the torus.
    pub fn with_random_phases<R: Rng + ?Sized>(populations: PopulationSet, rng: &mut R) -> Self {
        let phases = (0..populations.len()).map(|_| rng.gen_range(0.0..TAU)).collect();
        PureState { populations, phases }
    }

    pub fn from_coefficients(c: &CVector) -> Result<Self> {
        let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector norm^2 = {norm2} is not 1"
            )));
        }
        let mut p = Vec::with_capacity(c.len());
        let mut phases = Vec::with_capacity(c.len());
        for z in c.iter() {
            p.push(z.norm_sqr());
            phases.push((-z.arg()).rem_euclid(TAU));
        }
        // re-normalize the roundoff so the PopulationSet invariant holds
        let sum: f64 = p.iter().sum();
        for x in &mut p {
            *x /= sum;
        }
        Ok(PureState { populations: PopulationSet::new(p)?, phases })
    }

    pub fn populations(&self) -> &PopulationSet {
        &self.populations
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.populations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coefficients(&self) -> CVector {
        CVector::from_iterator(
            self.len(),
            self.populations
                .iter()
                .zip(&self.phases)
                .map(|(&p, &a)| Complex64::from_polar(p.sqrt(), -a)),
        )
    }
}

/// Hermitian, unit-trace matrix, optionally tagged with bipartite dims.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    dims: Option<(usize, usize)>,
}

impl DensityMatrix {
    /// Full validation: Hermiticity, unit trace, and spectrum bounded below
    /// by the eigenvalue floor. The last check diagonalizes, so this
    /// constructor costs O(d^3); internal builders that preserve positivity
    /// by construction skip it.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::validate(&matrix)?;
        let (vals, _) = hermitian_eigen(&matrix);
        if vals[0] < tol::EIGENVALUE_FLOOR {
            return Err(Error::InvalidDensity(format!(
                "smallest eigenvalue {:.3e} below floor {:.1e}",
                vals[0],
                tol::EIGENVALUE_FLOOR
            )));
        }
        Ok(DensityMatrix { matrix, dims: None })
    }

    pub fn with_dims(mut self, dim_s: usize, dim_e: usize) -> Result<Self> {
        if dim_s * dim_e != self.matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "dims {}x{} do not factorize {}",
                dim_s,
                dim_e,
                self.matrix.nrows()
            )));
        }
        self.dims = Some((dim_s, dim_e));
        Ok(self)
    }

    fn validate(matrix: &CMatrix) -> Result<()> {
        assert_hermitian(matrix, tol::HERMITICITY)?;
        let tr = crate::linalg::trace(matrix);
        if (tr.re - 1.0).abs() > tol::TRACE || tr.im.abs() > tol::TRACE {
            return Err(Error::InvalidDensity(format!("trace {tr} deviates from 1")));
        }
        Ok(())
    }

    /// For matrices positive by construction (rank-1 projectors, convex
    /// mixtures, partial traces of such); checks the cheap invariants only.
    pub(crate) fn from_valid_parts(matrix: CMatrix, dims: Option<(usize, usize)>) -> Self {
        debug_assert!(Self::validate(&matrix).is_ok());
        DensityMatrix { matrix, dims }
    }

    pub fn from_populations(p: &PopulationSet) -> Self {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            p.len(),
            p.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        DensityMatrix { matrix: d, dims: None }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.matrix).0
    }

    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// Hermitian observable in the energy basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        assert_hermitian(&matrix, tol::HERMITICITY)?;
        Ok(Observable { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Observable { matrix: CMatrix::identity(n, n) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Observable {
            matrix: CMatrix::from_diagonal(&CVector::from_iterator(
                d.len(),
                d.iter().map(|&x| Complex64::new(x, 0.0)),
            )),
        }
    }

    /// Hermitian matrix with entries of unit scale, deterministic under the
    /// caller's generator.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Observable { matrix: crate::linalg::random_hermitian(n, rng) }
    }

    /// 2x2 off-diagonal flip operator.
    pub fn pauli_x() -> Self {
        let z = Complex64::new(1.0, 0.0);
        let o = Complex64::new(0.0, 0.0);
        Observable { matrix: CMatrix::from_row_slice(2, 2, &[o, z, z, o]) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    /// Max eigenvalue minus min eigenvalue.
    pub fn spectral_width(&self) -> f64 {
        let (vals, _) = hermitian_eigen(&self.matrix);
        vals.last().unwrap() - vals.first().unwrap()
    }
}

/// Rank-1 projector of a pure state: elements
/// `sqrt(P_n P_m) e^{-i(alpha_n - alpha_m)}`.
pub fn density_from_state(state: &PureState) -> DensityMatrix {
    let c = state.coefficients();
    let m = &c * c.adjoint();
    DensityMatrix::from_valid_parts(m, None)
}

/// Which dephasing rule produced a time-averaged density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Non-degenerate spectrum: all coherences decay, result is diag(P).
    Diagonal,
    /// Degenerate spectrum: coherences inside each degeneracy group survive.
    DegenerateBlocks,
}

/// Infinite-time average of the projector for a non-degenerate spectrum:
/// `diag(P)` in the energy basis. Degenerate spectra need the phases, so this
/// population-only form refuses them.
pub fn time_averaged_density(p: &PopulationSet, spectrum: &Spectrum) -> Result<DensityMatrix> {
    if p.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} populations vs {} levels",
            p.len(),
            spectrum.len()
        )));
    }
    if spectrum.is_degenerate() {
        return Err(Error::InvalidArgument(
            "phases required for degenerate blocks: use the pure-state form".into(),
        ));
    }
    Ok(DensityMatrix::from_populations(p))
}

/// Infinite-time average of the projector, keeping intra-block coherences
/// when the spectrum has degeneracy groups. Reports which rule applied.
pub fn time_averaged_density_from_state(
    state: &PureState,
    spectrum: &Spectrum,
) -> Result<(DensityMatrix, AveragingMode)> {
    if state.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes vs {} levels",
            state.len(),
            spectrum.len()
        )));
    }
    if !spectrum.is_degenerate() {
        return Ok((
            DensityMatrix::from_populations(state.populations()),
            AveragingMode::Diagonal,
        ));
    }
    let groups = spectrum.degeneracy_groups();
    let c = state.coefficients();
    let n = state.len();
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if groups[i] == groups[j] {
                m[(i, j)] = c[i] * c[j].conj();
            }
        }
    }
    Ok((
        DensityMatrix::from_valid_parts(m, None),
        AveragingMode::DegenerateBlocks,
    ))
}

/// Instantaneous expectation value `<psi| A |psi>`.
pub fn expectation(a: &Observable, state: &PureState) -> Result<f64> {
    if a.dim() != state.len() {
        return Err(Error::DimensionMismatch(format!(
            "observable dim {} vs state dim {}",
            a.dim(),
            state.len()
        )));
    }
    let c = state.coefficients();
    let v = (c.adjoint() * a.matrix() * &c)[(0, 0)];
    if v.im.abs() > tol::IMAG_RESIDUE {
        return Err(Error::InvalidArgument(format!(
            "expectation has imaginary residue {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// Dephased equilibrium average `sum_n A_nn P_n`.
pub fn equilibrium_average(a: &Observable, p: &PopulationSet) -> Result<f64> {
    if a.dim() != p.len() {
        return Err(Error::DimensionMismatch(format!(
            "observable dim {} vs {} populations",
            a.dim(),
            p.len()
        )));
    }
    Ok((0..p.len()).map(|n| a.element(n, n).re * p.get(n)).sum())
}

/// Equilibrium fluctuation `sum_{n != m} |A_nm|^2 P_n P_m`; valid when the
/// transition frequencies are non-degenerate (caller certifies via the
/// resonance scan).
pub fn equilibrium_fluctuation(a: &Observable, p: &PopulationSet) -> Result<f64> {
    if a.dim() != p.len() {
        return Err(Error::DimensionMismatch(format!(
            "observable dim {} vs {} populations",
            a.dim(),
            p.len()
        )));
    }
    let n = p.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.element(i, j).norm_sqr() * p.get(i) * p.get(j);
            }
        }
    }
    Ok(sum)
}

/// Traces out the environment of a state on a `dim_s * dim_e` product space
/// with subsystem-major index ordering (`g = s * dim_e + e`).
pub fn partial_trace(rho: &DensityMatrix, dim_s: usize, dim_e: usize) -> Result<DensityMatrix> {
    if dim_s * dim_e != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dims {}x{} do not factorize {}",
            dim_s,
            dim_e,
            rho.dim()
        )));
    }
    let full = rho.matrix();
    let mut out = CMatrix::zeros(dim_s, dim_s);
    for s in 0..dim_s {
        for sp in 0..dim_s {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..dim_e {
                acc += full[(s * dim_e + e, sp * dim_e + e)];
            }
            out[(s, sp)] = acc;
        }
    }
    Ok(DensityMatrix::from_valid_parts(out, None))
}

fn rotate_to_product_basis(rho_energy: &CMatrix, model: &BipartiteModel) -> CMatrix {
    let v = model.eigen().vectors();
    v * rho_energy * v.adjoint()
}

/// Equilibrium reduced density of the subsystem: the dephased density in the
/// energy basis, rotated to the product basis, then traced over the
/// environment.
pub fn equilibrium_reduced_density(
    p: &PopulationSet,
    model: &BipartiteModel,
) -> Result<DensityMatrix> {
    let rho_bar = time_averaged_density(p, model.spectrum())?;
    let product = rotate_to_product_basis(rho_bar.matrix(), model);
    let full = DensityMatrix::from_valid_parts(product, Some((model.dim_s(), model.dim_e())));
    partial_trace(&full, model.dim_s(), model.dim_e())
}

/// Pure-state form of [`equilibrium_reduced_density`], usable on degenerate
/// spectra; reports the dephasing rule applied.
pub fn equilibrium_reduced_density_from_state(
    state: &PureState,
    model: &BipartiteModel,
) -> Result<(DensityMatrix, AveragingMode)> {
    let (rho_bar, mode) = time_averaged_density_from_state(state, model.spectrum())?;
    let product = rotate_to_product_basis(rho_bar.matrix(), model);
    let full = DensityMatrix::from_valid_parts(product, Some((model.dim_s(), model.dim_e())));
    Ok((partial_trace(&full, model.dim_s(), model.dim_e())?, mode))
}

/// Precomputed per-eigenstate reduced blocks
/// `m_n[s, s'] = sum_e V[(s,e), n] conj(V[(s',e), n])`, so the equilibrium
/// reduced density of any population set is the O(N * dim_s^2) mixture
/// `sum_n P_n m_n` instead of an O(N^3) rotation per call. Intended for
/// ensemble sweeps over many population sets on one model.
pub struct ReducedEigenProjectors {
    blocks: Vec<CMatrix>,
    dim_s: usize,
}

impl ReducedEigenProjectors {
    pub fn new(model: &BipartiteModel) -> Self {
        let v = model.eigen().vectors();
        let (dim_s, dim_e) = (model.dim_s(), model.dim_e());
        let n = model.dim();
        let blocks = crate::par::map_indexed(n, |k| {
            let mut b = CMatrix::zeros(dim_s, dim_s);
            for s in 0..dim_s {
                for sp in 0..dim_s {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for e in 0..dim_e {
                        acc += v[(s * dim_e + e, k)] * v[(sp * dim_e + e, k)].conj();
                    }
                    b[(s, sp)] = acc;
                }
            }
            b
        });
        ReducedEigenProjectors { blocks, dim_s }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `sum_n P_n m_n`; equals [`equilibrium_reduced_density`] on the same
    /// model up to roundoff.
    pub fn reduce(&self, p: &PopulationSet) -> Result<DensityMatrix> {
        if p.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} populations vs {} eigenstates",
                p.len(),
                self.blocks.len()
            )));
        }
        let mut out = CMatrix::zeros(self.dim_s, self.dim_s);
        for (x, b) in p.iter().zip(&self.blocks) {
            if *x != 0.0 {
                out += b * Complex64::new(*x, 0.0);
            }
        }
        Ok(DensityMatrix::from_valid_parts(out, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::rng::stream_rng;
    use crate::spectra::{build_spin_model, CouplingForm, SpinCoupling};
    use approx::assert_abs_diff_eq;

    #[test]
    fn population_invariants_enforced() {
        assert!(PopulationSet::new(vec![0.5, 0.6]).is_err());
        assert!(PopulationSet::new(vec![-0.1, 1.1]).is_err());
        assert!(PopulationSet::new(vec![1.0]).is_err());
        let p = PopulationSet::new(vec![0.25; 4]).unwrap();
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let uniform = PopulationSet::uniform(4).unwrap();
        assert_abs_diff_eq!(entropy(&uniform), 4.0_f64.ln(), epsilon = 1e-12);
        let pure = PopulationSet::eigenstate(3, 0).unwrap();
        assert_abs_diff_eq!(entropy(&pure), 0.0, epsilon = 1e-15);
        let p = PopulationSet::new(vec![0.5, 0.25, 0.25]).unwrap();
        let expected = 0.5 * 2.0_f64.ln() + 0.5 * 4.0_f64.ln();
        assert_abs_diff_eq!(entropy(&p), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.039721, epsilon = 1e-6);
    }

    #[test]
    fn expectation_energy_examples() {
        let s = Spectrum::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let u = PopulationSet::uniform(4).unwrap();
        assert_abs_diff_eq!(expectation_energy(&u, &s).unwrap(), 1.5, epsilon = 1e-14);
        let ground = PopulationSet::eigenstate(4, 0).unwrap();
        assert_abs_diff_eq!(expectation_energy(&ground, &s).unwrap(), 0.0, epsilon = 1e-15);
        let s2 = Spectrum::new(vec![0.0, 1.0]).unwrap();
        let p2 = PopulationSet::new(vec![0.2, 0.8]).unwrap();
        assert_abs_diff_eq!(expectation_energy(&p2, &s2).unwrap(), 0.8, epsilon = 1e-14);
    }

    #[test]
    fn density_from_state_is_idempotent_projector() {
        let p = PopulationSet::new(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        let mut rng = stream_rng(5, 0);
        let state = PureState::with_random_phases(p, &mut rng);
        let rho = density_from_state(&state);
        let sq = rho.matrix() * rho.matrix();
        assert!(max_abs_diff(&sq, rho.matrix()) < 1e-10);

        let pure = PureState::aligned(PopulationSet::eigenstate(2, 0).unwrap());
        let rho = density_from_state(&pure);
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, 0.0, epsilon = 1e-14);

        let half = PureState::aligned(PopulationSet::uniform(2).unwrap());
        let rho = density_from_state(&half);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(rho.matrix()[(i, j)].re, 0.5, epsilon = 1e-14);
                assert_abs_diff_eq!(rho.matrix()[(i, j)].im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn coefficients_round_trip() {
        let p = PopulationSet::new(vec![0.4, 0.35, 0.25]).unwrap();
        let state = PureState::new(p, vec![0.3, 5.9, 2.2]).unwrap();
        let back = PureState::from_coefficients(&state.coefficients()).unwrap();
        for (a, b) in state.phases().iter().zip(back.phases()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in state.populations().iter().zip(back.populations().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn time_average_diagonal_for_nondegenerate() {
        let s = Spectrum::new(vec![0.1, 0.9, 2.3]).unwrap();
        let p = PopulationSet::new(vec![0.2, 0.3, 0.5]).unwrap();
        let rho = time_averaged_density(&p, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { p.get(i) } else { 0.0 };
                assert_abs_diff_eq!(rho.matrix()[(i, j)].re, expected, epsilon = 1e-14);
                assert_abs_diff_eq!(rho.matrix()[(i, j)].im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn time_average_requires_phases_on_degenerate_spectrum() {
        let s = Spectrum::new(vec![1.0, 1.0]).unwrap();
        let p = PopulationSet::new(vec![0.7, 0.3]).unwrap();
        let err = time_averaged_density(&p, &s);
        assert!(err.is_err());
        let state = PureState::new(p, vec![0.4, 1.1]).unwrap();
        let (rho, mode) = time_averaged_density_from_state(&state, &s).unwrap();
        assert_eq!(mode, AveragingMode::DegenerateBlocks);
        // fully degenerate two-level: the average is the unchanged projector
        let rho0 = density_from_state(&state);
        assert!(max_abs_diff(rho.matrix(), rho0.matrix()) < 1e-14);
    }

    #[test]
    fn expectation_examples() {
        let state = PureState::aligned(PopulationSet::uniform(2).unwrap());
        let x = Observable::pauli_x();
        assert_abs_diff_eq!(expectation(&x, &state).unwrap(), 1.0, epsilon = 1e-12);
        let id = Observable::identity(2);
        assert_abs_diff_eq!(expectation(&id, &state).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_of_diagonal_matches_energy() {
        let s = Spectrum::new(vec![0.3, 1.7, 2.2]).unwrap();
        let p = PopulationSet::new(vec![0.5, 0.3, 0.2]).unwrap();
        let a = Observable::from_diagonal(s.energies());
        let mut rng = stream_rng(8, 0);
        let state = PureState::with_random_phases(p.clone(), &mut rng);
        let via_obs = expectation(&a, &state).unwrap();
        let via_energy = expectation_energy(&p, &s).unwrap();
        assert_abs_diff_eq!(via_obs, via_energy, epsilon = 1e-12);
    }

    #[test]
    fn equilibrium_average_ignores_off_diagonal() {
        let p = PopulationSet::new(vec![0.8, 0.2]).unwrap();
        assert_abs_diff_eq!(
            equilibrium_average(&Observable::pauli_x(), &p).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            equilibrium_average(&Observable::identity(2), &p).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn equilibrium_average_is_linear() {
        let mut rng = stream_rng(9, 0);
        let a = Observable::random(4, &mut rng);
        let b = Observable::random(4, &mut rng);
        let p = PopulationSet::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let combo = Observable::new(a.matrix() * Complex64::new(2.5, 0.0)
            + b.matrix() * Complex64::new(-0.75, 0.0))
        .unwrap();
        let lhs = equilibrium_average(&combo, &p).unwrap();
        let rhs = 2.5 * equilibrium_average(&a, &p).unwrap()
            - 0.75 * equilibrium_average(&b, &p).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn fluctuation_examples() {
        let p = PopulationSet::uniform(2).unwrap();
        let x = Observable::pauli_x();
        assert_abs_diff_eq!(equilibrium_fluctuation(&x, &p).unwrap(), 0.5, epsilon = 1e-14);
        let d = Observable::from_diagonal(&[1.0, -2.0]);
        assert_abs_diff_eq!(equilibrium_fluctuation(&d, &p).unwrap(), 0.0, epsilon = 1e-15);
        let mut rng = stream_rng(10, 0);
        let a = Observable::random(5, &mut rng);
        let q = PopulationSet::new(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        assert!(equilibrium_fluctuation(&a, &q).unwrap() >= 0.0);
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factor() {
        // build mu (x) nu from two pure states
        let mu_state = PureState::new(
            PopulationSet::new(vec![0.7, 0.3]).unwrap(),
            vec![0.0, 1.0],
        )
        .unwrap();
        let nu_state = PureState::new(
            PopulationSet::new(vec![0.6, 0.4]).unwrap(),
            vec![0.5, 2.0],
        )
        .unwrap();
        let mu = density_from_state(&mu_state);
        let nu = density_from_state(&nu_state);
        let joint = mu.matrix().kronecker(nu.matrix());
        let rho = DensityMatrix::new(joint).unwrap().with_dims(2, 2).unwrap();
        let traced = partial_trace(&rho, 2, 2).unwrap();
        assert!(max_abs_diff(traced.matrix(), mu.matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let mut c = CVector::zeros(4);
        c[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c[3] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = DensityMatrix::new(&c * c.adjoint()).unwrap();
        let traced = partial_trace(&rho, 2, 2).unwrap();
        let half = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        assert!(max_abs_diff(traced.matrix(), &half) < 1e-12);
    }

    #[test]
    fn schmidt_spectra_of_complementary_reductions_match() {
        let mut rng = stream_rng(11, 0);
        let dim_s = 4;
        let dim_e = 3;
        let raw: Vec<Complex64> = (0..dim_s * dim_e)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let c = CVector::from_iterator(dim_s * dim_e, raw.into_iter().map(|z| z / norm));
        let rho = DensityMatrix::new(&c * c.adjoint()).unwrap();
        let mu_s = partial_trace(&rho, dim_s, dim_e).unwrap();
        // complementary reduction: swap the roles by re-indexing
        let mut swapped = CMatrix::zeros(dim_e * dim_s, dim_e * dim_s);
        for s in 0..dim_s {
            for e in 0..dim_e {
                for sp in 0..dim_s {
                    for ep in 0..dim_e {
                        swapped[(e * dim_s + s, ep * dim_s + sp)] =
                            rho.matrix()[(s * dim_e + e, sp * dim_e + ep)];
                    }
                }
            }
        }
        let swapped = DensityMatrix::new(swapped).unwrap();
        let mu_e = partial_trace(&swapped, dim_e, dim_s).unwrap();
        let tr: f64 = mu_s.diagonal_real().iter().sum();
        assert_abs_diff_eq!(tr, 1.0, epsilon = 1e-12);
        let mut ev_s = mu_s.eigenvalues();
        let mut ev_e = mu_e.eigenvalues();
        ev_s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev_e.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..dim_e.min(dim_s) {
            assert_abs_diff_eq!(ev_s[k], ev_e[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn reduced_density_uniform_populations_give_maximally_mixed_subsystem() {
        let model = build_spin_model(
            3,
            &[1.0, 0.7, 1.9],
            &[SpinCoupling { i: 0, j: 2, strength: 0.2 }],
            CouplingForm::Heisenberg,
            1,
        )
        .unwrap();
        let p = PopulationSet::uniform(8).unwrap();
        let mu = equilibrium_reduced_density(&p, &model).unwrap();
        let expected = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        assert!(max_abs_diff(mu.matrix(), &expected) < 1e-10);
    }

    #[test]
    fn reduced_density_of_uncoupled_eigenstate_is_pure_projector() {
        let model = build_spin_model(2, &[1.0, 0.4], &[], CouplingForm::Zz, 1).unwrap();
        let p = PopulationSet::eigenstate(4, 0).unwrap();
        let mu = equilibrium_reduced_density(&p, &model).unwrap();
        let sq = mu.matrix() * mu.matrix();
        assert!(max_abs_diff(&sq, mu.matrix()) < 1e-10);
    }

    #[test]
    fn projector_fast_path_matches_rotation_route() {
        let model = build_spin_model(
            4,
            &[0.9, 1.3, 0.5, 1.1],
            &[
                SpinCoupling { i: 0, j: 1, strength: 0.15 },
                SpinCoupling { i: 1, j: 2, strength: 0.1 },
                SpinCoupling { i: 2, j: 3, strength: 0.12 },
            ],
            CouplingForm::Xx,
            2,
        )
        .unwrap();
        let projectors = ReducedEigenProjectors::new(&model);
        let mut rng = stream_rng(13, 0);
        for _ in 0..5 {
            let raw: Vec<f64> = (0..16).map(|_| -f64::ln(rng.gen_range(1e-12..1.0))).collect();
            let sum: f64 = raw.iter().sum();
            let p = PopulationSet::new(raw.into_iter().map(|x| x / sum).collect()).unwrap();
            let slow = equilibrium_reduced_density(&p, &model).unwrap();
            let fast = projectors.reduce(&p).unwrap();
            assert!(max_abs_diff(slow.matrix(), fast.matrix()) < 1e-11);
        }
    }

    #[test]
    fn density_validation_rejects_bad_inputs() {
        let m = CMatrix::identity(2, 2); // trace 2
        assert!(DensityMatrix::new(m).is_err());
        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 0)] = Complex64::new(1.5, 0.0);
        bad[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(bad).is_err()); // negative eigenvalue
    }
}
