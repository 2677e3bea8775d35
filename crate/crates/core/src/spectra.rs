//! Model Hamiltonians, their spectra, and resonance structure.
//!
//! Spin chains are assembled from spin-1/2 operators `S = sigma/2` on up to
//! [`MAX_SPINS`] sites and diagonalized densely. A [`Spectrum`] is just the
//! sorted eigenvalue list plus a degeneracy tolerance; [`check_nonresonance`]
//! certifies (at a given integer bound) that no nontrivial integer combination
//! of eigenvalues vanishes, which is the hypothesis behind phase-space
//! uniformity and the fluctuation formula.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{assert_hermitian, hermitian_eigen, CMatrix};
use crate::rng::stream_rng;
use crate::{tol, Error, Result};

/// Dense diagonalization bound for the spin builder.
pub const MAX_SPINS: usize = 14;

/// Largest dimension for which the resonance scan is exhaustive.
pub const EXHAUSTIVE_SCAN_MAX_LEVELS: usize = 6;

/// Sorted eigenvalues of a Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    energies: Vec<f64>,
    degeneracy_tolerance: f64,
}

impl Spectrum {
    /// Builds a spectrum from eigenvalues in any order; sorts ascending.
    pub fn new(mut energies: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::TooFewLevels { needed: 2, found: energies.len() });
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("non-finite eigenvalue".into()));
        }
        energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Spectrum {
            energies,
            degeneracy_tolerance: tol::Tolerances::default().degeneracy,
        })
    }

    pub fn with_degeneracy_tolerance(mut self, tolerance: f64) -> Self {
        self.degeneracy_tolerance = tolerance;
        self
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor enforces N >= 2
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.energies[n]
    }

    pub fn min_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn max_energy(&self) -> f64 {
        *self.energies.last().unwrap()
    }

    pub fn width(&self) -> f64 {
        self.max_energy() - self.min_energy()
    }

    pub fn degeneracy_tolerance(&self) -> f64 {
        self.degeneracy_tolerance
    }

    /// Degeneracy group id per level: adjacent eigenvalues within the
    /// tolerance chain into the same group.
    pub fn degeneracy_groups(&self) -> Vec<usize> {
        let mut groups = Vec::with_capacity(self.len());
        let mut g = 0usize;
        groups.push(0);
        for w in self.energies.windows(2) {
            if (w[1] - w[0]).abs() > self.degeneracy_tolerance {
                g += 1;
            }
            groups.push(g);
        }
        groups
    }

    pub fn is_degenerate(&self) -> bool {
        self.energies
            .windows(2)
            .any(|w| (w[1] - w[0]).abs() <= self.degeneracy_tolerance)
    }

    /// Minimum gap between adjacent distinct levels, `None` if every level
    /// sits in one degeneracy group.
    pub fn min_gap(&self) -> Option<f64> {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > self.degeneracy_tolerance)
            .fold(None, |acc, g| Some(acc.map_or(g, |m: f64| m.min(g))))
    }

    /// Copy shifted so the ground energy is zero; returns the shift applied
    /// (the original ground energy).
    pub fn shifted_to_zero(&self) -> (Spectrum, f64) {
        let shift = self.min_energy();
        let energies = self.energies.iter().map(|e| e - shift).collect();
        (
            Spectrum { energies, degeneracy_tolerance: self.degeneracy_tolerance },
            shift,
        )
    }
}

/// Eigenvalues plus eigenvectors (columns, in the source basis).
#[derive(Debug, Clone)]
pub struct EigenBasis {
    vectors: CMatrix,
    spectrum: Spectrum,
}

impl EigenBasis {
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Residual checks against the source Hamiltonian: orthonormality of the
    /// columns and the eigenvalue equation, both to the documented slack.
    pub fn verify(&self, h: &CMatrix) -> Result<()> {
        let n = self.dim();
        let gram = self.vectors.adjoint() * &self.vectors;
        let eye = CMatrix::identity(n, n);
        let ortho_dev = crate::linalg::max_abs_diff(&gram, &eye);
        if ortho_dev > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "eigenvector columns not orthonormal: deviation {ortho_dev:.3e}"
            )));
        }
        let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let hv = h * &self.vectors;
        for (k, e) in self.spectrum.energies().iter().enumerate() {
            let mut worst = 0.0f64;
            for i in 0..n {
                let r = (hv[(i, k)] - self.vectors[(i, k)] * Complex64::new(*e, 0.0)).norm();
                worst = worst.max(r);
            }
            if worst > 1e-8 * scale {
                return Err(Error::InvalidArgument(format!(
                    "eigenpair {k} residual {worst:.3e} exceeds 1e-8 relative"
                )));
            }
        }
        Ok(())
    }
}

/// Diagonalizes a Hermitian matrix, eigenvalues ascending.
pub fn diagonalize(h: &CMatrix) -> Result<EigenBasis> {
    assert_hermitian(h, tol::INPUT_HERMITICITY)?;
    let (values, vectors) = hermitian_eigen(h);
    let spectrum = Spectrum::new(values)?;
    let basis = EigenBasis { vectors, spectrum };
    basis.verify(h)?;
    Ok(basis)
}

/// Spin-pair coupling form. `Xx` couples both in-plane components
/// (`SxSx + SySy`); `Heisenberg` adds the `SzSz` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingForm {
    Zz,
    Xx,
    Heisenberg,
}

/// One coupling term between sites `i` and `j` with the given strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinCoupling {
    pub i: usize,
    pub j: usize,
    pub strength: f64,
}

/// Bipartite system: full Hamiltonian on `dim_s * dim_e` product space, the
/// subsystem Hamiltonian, and the diagonalized eigenbasis.
///
/// Product-basis ordering is subsystem-major throughout the crate: global
/// index `g = s * dim_e + e`.
#[derive(Debug, Clone)]
pub struct BipartiteModel {
    dim_s: usize,
    dim_e: usize,
    h: CMatrix,
    h_s: CMatrix,
    eigen: EigenBasis,
}

impl BipartiteModel {
    /// General constructor from explicit matrices. `h` lives on the product
    /// space, `h_s` on the subsystem alone.
    pub fn new(h: CMatrix, h_s: CMatrix, dim_s: usize, dim_e: usize) -> Result<Self> {
        if dim_s * dim_e != h.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "dim_s * dim_e = {} does not match H dimension {}",
                dim_s * dim_e,
                h.nrows()
            )));
        }
        if h_s.nrows() != dim_s {
            return Err(Error::DimensionMismatch(format!(
                "H_S dimension {} does not match dim_s {}",
                h_s.nrows(),
                dim_s
            )));
        }
        assert_hermitian(&h, tol::HERMITICITY)?;
        assert_hermitian(&h_s, tol::HERMITICITY)?;
        let eigen = diagonalize(&h)?;
        Ok(BipartiteModel { dim_s, dim_e, h, h_s, eigen })
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn dim(&self) -> usize {
        self.dim_s * self.dim_e
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    pub fn subsystem_hamiltonian(&self) -> &CMatrix {
        &self.h_s
    }

    pub fn eigen(&self) -> &EigenBasis {
        &self.eigen
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.eigen.spectrum()
    }
}

fn spin_half_matrices() -> [CMatrix; 3] {
    let z = |re: f64, im: f64| Complex64::new(re, im);
    let sx = CMatrix::from_row_slice(2, 2, &[z(0.0, 0.0), z(0.5, 0.0), z(0.5, 0.0), z(0.0, 0.0)]);
    let sy = CMatrix::from_row_slice(2, 2, &[z(0.0, 0.0), z(0.0, -0.5), z(0.0, 0.5), z(0.0, 0.0)]);
    let sz = CMatrix::from_row_slice(2, 2, &[z(0.5, 0.0), z(0.0, 0.0), z(0.0, 0.0), z(-0.5, 0.0)]);
    [sx, sy, sz]
}

/// Embeds a single-site operator at `site` in an `n_sites` chain
/// (site 0 is the leftmost factor, i.e. the most significant index).
fn embed_site_operator(op: &CMatrix, site: usize, n_sites: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for s in 0..n_sites {
        let factor = if s == site { op.clone() } else { CMatrix::identity(2, 2) };
        out = out.kronecker(&factor);
    }
    out
}

fn embed_pair_operator(
    op_a: &CMatrix,
    op_b: &CMatrix,
    site_a: usize,
    site_b: usize,
    n_sites: usize,
) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for s in 0..n_sites {
        let factor = if s == site_a {
            op_a.clone()
        } else if s == site_b {
            op_b.clone()
        } else {
            CMatrix::identity(2, 2)
        };
        out = out.kronecker(&factor);
    }
    out
}

fn coupling_term(
    form: CouplingForm,
    i: usize,
    j: usize,
    strength: f64,
    n_sites: usize,
) -> CMatrix {
    let [sx, sy, sz] = spin_half_matrices();
    let dim = 1usize << n_sites;
    let mut term = CMatrix::zeros(dim, dim);
    let s = Complex64::new(strength, 0.0);
    match form {
        CouplingForm::Zz => {
            term += embed_pair_operator(&sz, &sz, i, j, n_sites) * s;
        }
        CouplingForm::Xx => {
            term += embed_pair_operator(&sx, &sx, i, j, n_sites) * s;
            term += embed_pair_operator(&sy, &sy, i, j, n_sites) * s;
        }
        CouplingForm::Heisenberg => {
            term += embed_pair_operator(&sx, &sx, i, j, n_sites) * s;
            term += embed_pair_operator(&sy, &sy, i, j, n_sites) * s;
            term += embed_pair_operator(&sz, &sz, i, j, n_sites) * s;
        }
    }
    term
}

/// Assembles the chain Hamiltonian `sum_i h_i S_z(i) + sum couplings` without
/// any bipartition. Useful on its own for single-spin checks and for building
/// reference environment Hamiltonians.
pub fn build_spin_hamiltonian(
    n_spins: usize,
    fields: &[f64],
    couplings: &[SpinCoupling],
    form: CouplingForm,
) -> Result<CMatrix> {
    if n_spins == 0 {
        return Err(Error::InvalidArgument("need at least one spin".into()));
    }
    if n_spins > MAX_SPINS {
        return Err(Error::ModelTooLarge { n_spins, max: MAX_SPINS });
    }
    if fields.len() != n_spins {
        return Err(Error::DimensionMismatch(format!(
            "{} fields for {} spins",
            fields.len(),
            n_spins
        )));
    }
    for c in couplings {
        if c.i >= n_spins || c.j >= n_spins {
            return Err(Error::InvalidArgument(format!(
                "coupling ({}, {}) references a site beyond {} spins",
                c.i, c.j, n_spins
            )));
        }
        if c.i == c.j {
            return Err(Error::InvalidArgument(format!("coupling ({0}, {0}) is a self-loop", c.i)));
        }
    }
    let [_, _, sz] = spin_half_matrices();
    let dim = 1usize << n_spins;
    let mut h = CMatrix::zeros(dim, dim);
    for (site, field) in fields.iter().enumerate() {
        if *field != 0.0 {
            h += embed_site_operator(&sz, site, n_spins) * Complex64::new(*field, 0.0);
        }
    }
    for c in couplings {
        h += coupling_term(form, c.i, c.j, c.strength, n_spins);
    }
    debug_assert!(crate::linalg::hermiticity_deviation(&h) <= tol::HERMITICITY);
    Ok(h)
}

/// Builds and diagonalizes a spin chain split after the first `partition`
/// spins (those form the subsystem).
pub fn build_spin_model(
    n_spins: usize,
    fields: &[f64],
    couplings: &[SpinCoupling],
    form: CouplingForm,
    partition: usize,
) -> Result<BipartiteModel> {
    if partition == 0 || partition >= n_spins {
        return Err(Error::InvalidArgument(format!(
            "partition {partition} must satisfy 1 <= partition < n_spins = {n_spins}"
        )));
    }
    let h = build_spin_hamiltonian(n_spins, fields, couplings, form)?;
    let intra_s: Vec<SpinCoupling> = couplings
        .iter()
        .copied()
        .filter(|c| c.i < partition && c.j < partition)
        .collect();
    let h_s = build_spin_hamiltonian(partition, &fields[..partition], &intra_s, form)?;
    BipartiteModel::new(h, h_s, 1 << partition, 1 << (n_spins - partition))
}

/// How the resonance search covered the space of integer vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// All integer vectors with |n_j| <= bound were enumerated.
    Exhaustive,
    /// Only pairwise gap coincidences were scanned (large spectra).
    PairwiseGaps,
}

/// Outcome of a resonance scan over a spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    /// Integer vectors n with |sum n_j E_j| <= tolerance, never all-zero.
    pub resonant_combinations: Vec<Vec<i64>>,
    /// Index quadruples (n, m, p, q) with E_n - E_m = E_p - E_q within
    /// tolerance, for distinct pairs (n > m, p > q).
    pub gap_degeneracies: Vec<[usize; 4]>,
    pub coefficient_bound: i64,
    pub tolerance: f64,
    pub search_mode: SearchMode,
}

impl ResonanceReport {
    pub fn is_nonresonant(&self) -> bool {
        self.resonant_combinations.is_empty() && self.gap_degeneracies.is_empty()
    }
}

const MAX_RESONANCE_WITNESSES: usize = 64;

fn scan_combinations(
    energies: &[f64],
    bound: i64,
    tolerance: f64,
    out: &mut Vec<Vec<i64>>,
) {
    // depth-first odometer with a running partial sum; the first nonzero
    // coefficient is forced positive to skip the -n mirror of each vector
    let n = energies.len();
    let mut coeffs = vec![0i64; n];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        energies: &[f64],
        bound: i64,
        tolerance: f64,
        pos: usize,
        any_nonzero: bool,
        partial: f64,
        coeffs: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if out.len() >= MAX_RESONANCE_WITNESSES {
            return;
        }
        if pos == energies.len() {
            if any_nonzero && partial.abs() <= tolerance {
                out.push(coeffs.clone());
            }
            return;
        }
        let lo = if any_nonzero { -bound } else { 0 };
        for c in lo..=bound {
            coeffs[pos] = c;
            rec(
                energies,
                bound,
                tolerance,
                pos + 1,
                any_nonzero || c != 0,
                partial + c as f64 * energies[pos],
                coeffs,
                out,
            );
        }
        coeffs[pos] = 0;
    }
    rec(energies, bound, tolerance, 0, false, 0.0, &mut coeffs, out);
}

fn scan_gap_degeneracies(energies: &[f64], tolerance: f64) -> Vec<[usize; 4]> {
    let n = energies.len();
    let mut gaps: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        for j in 0..i {
            gaps.push((energies[i] - energies[j], i, j));
        }
    }
    gaps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = Vec::new();
    for w in 0..gaps.len() {
        let mut v = w + 1;
        while v < gaps.len() && gaps[v].0 - gaps[w].0 <= tolerance {
            out.push([gaps[w].1, gaps[w].2, gaps[v].1, gaps[v].2]);
            if out.len() >= MAX_RESONANCE_WITNESSES {
                return out;
            }
            v += 1;
        }
    }
    out
}

/// Scans for integer relations among eigenvalues.
///
/// Spectra up to [`EXHAUSTIVE_SCAN_MAX_LEVELS`] levels get the full
/// enumeration of coefficient vectors with `|n_j| <= coefficient_bound`;
/// larger spectra get the pairwise gap-coincidence scan only. Witness lists
/// are truncated at a fixed cap; an empty report certifies non-resonance at
/// this bound and tolerance.
pub fn check_nonresonance(
    spectrum: &Spectrum,
    coefficient_bound: i64,
    tolerance: f64,
) -> ResonanceReport {
    let energies = spectrum.energies();
    let exhaustive = energies.len() <= EXHAUSTIVE_SCAN_MAX_LEVELS;
    let mut resonant_combinations = Vec::new();
    if exhaustive && coefficient_bound > 0 {
        scan_combinations(energies, coefficient_bound, tolerance, &mut resonant_combinations);
    }
    let gap_degeneracies = scan_gap_degeneracies(energies, tolerance);
    ResonanceReport {
        resonant_combinations,
        gap_degeneracies,
        coefficient_bound,
        tolerance,
        search_mode: if exhaustive { SearchMode::Exhaustive } else { SearchMode::PairwiseGaps },
    }
}

/// Shifts every eigenvalue by an independent uniform draw in
/// `[-epsilon, epsilon]` and re-sorts. Deterministic under `seed`.
pub fn perturb_spectrum(spectrum: &Spectrum, epsilon: f64, seed: u64) -> Spectrum {
    if epsilon == 0.0 {
        return spectrum.clone();
    }
    let mut rng = stream_rng(seed, 0);
    let mut energies: Vec<f64> = spectrum
        .energies()
        .iter()
        .map(|e| e + rng.gen_range(-epsilon..=epsilon))
        .collect();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Spectrum {
        energies,
        degeneracy_tolerance: spectrum.degeneracy_tolerance(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, random_hermitian, CVector};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_spin_field_gives_half_splitting() {
        let h = build_spin_hamiltonian(1, &[1.0], &[], CouplingForm::Zz).unwrap();
        let basis = diagonalize(&h).unwrap();
        assert_abs_diff_eq!(basis.spectrum().energy(0), -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(basis.spectrum().energy(1), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn two_uncoupled_spins_sum_their_spectra() {
        let model = build_spin_model(2, &[1.0, 1.0], &[], CouplingForm::Zz, 1).unwrap();
        let e = model.spectrum().energies();
        let expected = [-1.0, 0.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_coupling_spectrum_is_sum_of_parts() {
        let fields = [0.9, -0.4, 1.3, 0.2];
        let intra = [
            SpinCoupling { i: 0, j: 1, strength: 0.3 },
            SpinCoupling { i: 2, j: 3, strength: -0.2 },
        ];
        let model =
            build_spin_model(4, &fields, &intra, CouplingForm::Heisenberg, 2).unwrap();
        let h_e = build_spin_hamiltonian(
            2,
            &fields[2..],
            &[SpinCoupling { i: 0, j: 1, strength: -0.2 }],
            CouplingForm::Heisenberg,
        )
        .unwrap();
        let es = diagonalize(model.subsystem_hamiltonian()).unwrap();
        let ee = diagonalize(&h_e).unwrap();
        let mut sums = Vec::new();
        for a in es.spectrum().energies() {
            for b in ee.spectrum().energies() {
                sums.push(a + b);
            }
        }
        sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in model.spectrum().energies().iter().zip(sums.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn coupled_pair_matches_dense_oracle() {
        // 2 spins, ZZ with J = 0.3, fields (1, 0.7): H is diagonal in the
        // product basis, so eigenvalues follow by direct evaluation
        let model = build_spin_model(
            2,
            &[1.0, 0.7],
            &[SpinCoupling { i: 0, j: 1, strength: 0.3 }],
            CouplingForm::Zz,
            1,
        )
        .unwrap();
        let mut expected = vec![
            0.5 * 1.0 + 0.5 * 0.7 + 0.3 * 0.25,
            0.5 * 1.0 - 0.5 * 0.7 - 0.3 * 0.25,
            -0.5 * 1.0 + 0.5 * 0.7 - 0.3 * 0.25,
            -0.5 * 1.0 - 0.5 * 0.7 + 0.3 * 0.25,
        ];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in model.spectrum().energies().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn xx_chain_matches_manual_4x4() {
        // 2 spins, XX coupling J: off-diagonal block couples |01> and |10>
        // with J/2; eigenvalues of the middle block are +-J/2 at zero field
        let j = 0.8;
        let model = build_spin_model(
            2,
            &[0.0, 0.0],
            &[SpinCoupling { i: 0, j: 1, strength: j }],
            CouplingForm::Xx,
            1,
        )
        .unwrap();
        let e = model.spectrum().energies();
        let expected = [-j / 2.0, 0.0, 0.0, j / 2.0];
        for (a, b) in e.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonalize_sorts_and_reconstructs() {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            3,
            [3.0, 1.0, 2.0].iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let basis = diagonalize(&d).unwrap();
        assert_eq!(basis.spectrum().energies(), &[1.0, 2.0, 3.0]);

        let mut rng = stream_rng(3, 0);
        let h = random_hermitian(6, &mut rng);
        let basis = diagonalize(&h).unwrap();
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(
            6,
            basis.spectrum().energies().iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let rec = basis.vectors() * lam * basis.vectors().adjoint();
        assert!(max_abs_diff(&rec, &h) < 1e-9);
    }

    #[test]
    fn diagonalize_rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(diagonalize(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn identity_spectrum_is_flat() {
        let basis = diagonalize(&CMatrix::identity(3, 3)).unwrap();
        for e in basis.spectrum().energies() {
            assert_abs_diff_eq!(e, &1.0, epsilon = 1e-12);
        }
        assert!(basis.spectrum().is_degenerate());
        assert_eq!(basis.spectrum().min_gap(), None);
    }

    #[test]
    fn resonance_scan_finds_integer_relation() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        let report = check_nonresonance(&s, 3, 1e-9);
        assert_eq!(report.search_mode, SearchMode::Exhaustive);
        assert!(report
            .resonant_combinations
            .iter()
            .any(|v| v == &vec![1, 1, -1] || v == &vec![-1, -1, 1]));
        assert!(!report.is_nonresonant());
        assert!(report.resonant_combinations.iter().all(|v| v.iter().any(|&c| c != 0)));
    }

    #[test]
    fn gap_degeneracy_flagged_for_equally_spaced_levels() {
        let s = Spectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        let report = check_nonresonance(&s, 1, 1e-9);
        assert!(report
            .gap_degeneracies
            .iter()
            .any(|q| (q[0] == 2 && q[1] == 1 && q[2] == 1 && q[3] == 0)
                || (q[0] == 1 && q[1] == 0 && q[2] == 2 && q[3] == 1)));
    }

    #[test]
    fn surd_spectrum_certifies_nonresonant_at_bound_ten() {
        let s = Spectrum::new(vec![1.0, 2.0_f64.sqrt(), 3.0_f64.sqrt()]).unwrap();
        let report = check_nonresonance(&s, 10, 1e-9);
        assert!(report.is_nonresonant());
    }

    #[test]
    fn rationally_dependent_triple_always_witnessed_within_bound() {
        // sorted spectrum (1.5, 2.0, 3.0) satisfies 2*E_1 - 3*E_2 + E_3 = 0
        let s = Spectrum::new(vec![1.5, 3.0, 2.0]).unwrap();
        let report = check_nonresonance(&s, 3, 1e-9);
        assert!(!report.resonant_combinations.is_empty());
        for v in &report.resonant_combinations {
            assert!(v.iter().any(|&c| c != 0));
            let sum: f64 = v
                .iter()
                .zip(s.energies())
                .map(|(&c, &e)| c as f64 * e)
                .sum();
            assert!(sum.abs() <= 1e-9);
        }
    }

    #[test]
    fn perturbation_breaks_gap_degeneracy_and_is_deterministic() {
        let s = Spectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        let p1 = perturb_spectrum(&s, 1e-6, 42);
        let p2 = perturb_spectrum(&s, 1e-6, 42);
        assert_eq!(p1.energies(), p2.energies());
        let report = check_nonresonance(&p1, 1, 1e-9);
        assert!(report.gap_degeneracies.is_empty());
        let unperturbed = perturb_spectrum(&s, 0.0, 42);
        assert_eq!(unperturbed.energies(), s.energies());
    }

    #[test]
    fn perturbation_below_half_gap_preserves_order() {
        let s = Spectrum::new(vec![0.0, 1.0, 3.0]).unwrap();
        let eps = 0.49;
        let p = perturb_spectrum(&s, eps, 7);
        // sorted output, and each perturbed level stays within eps of source
        for (a, b) in p.energies().iter().zip(s.energies().iter()) {
            assert!((a - b).abs() <= eps + 1e-12);
        }
    }

    #[test]
    fn degeneracy_groups_chain_within_tolerance() {
        let s = Spectrum::new(vec![0.0, 1.0, 1.0 + 5e-10, 2.0]).unwrap();
        assert_eq!(s.degeneracy_groups(), vec![0, 1, 1, 2]);
        assert!(s.is_degenerate());
        assert_abs_diff_eq!(s.min_gap().unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn model_too_large_rejected() {
        let fields = vec![1.0; MAX_SPINS + 1];
        let err = build_spin_hamiltonian(MAX_SPINS + 1, &fields, &[], CouplingForm::Zz);
        assert!(matches!(err, Err(Error::ModelTooLarge { .. })));
    }

    #[test]
    fn shifted_to_zero_moves_ground_state() {
        let s = Spectrum::new(vec![-1.5, 0.5, 2.0]).unwrap();
        let (shifted, shift) = s.shifted_to_zero();
        assert_abs_diff_eq!(shift, -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted.min_energy(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted.max_energy(), 3.5, epsilon = 1e-15);
    }
}
