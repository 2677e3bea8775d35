//! Thermodynamic verdicts over ensembles.
//!
//! The logic splits into: Monte Carlo typicality statistics (is the spread of
//! a property small against its possible range), the entropy-energy state
//! function and the temperature read off its derivative, the canonical
//! reference state for a subsystem with a fitted local temperature, and a
//! five-entry scorecard that bundles the verdicts for one model + ensemble.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    feee_factorized_sample, feee_sample_mcmc, rpse_sample_batch, ChainConfig, EnsembleKind,
    EnsembleSpec, McmcDiagnostics,
};
use crate::interp::MonotoneCubic;
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::rng::{stage_seed, stream_rng};
use crate::spectra::{BipartiteModel, Spectrum};
use crate::states::{entropy_of, DensityMatrix, PopulationSet, ReducedEigenProjectors};
use crate::{tol, Error, Result};

/// Where a typicality denominator came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeKind {
    /// Known bounds of the property itself (entropy, energy).
    Analytic,
    /// Observed min-to-max over the drawn samples.
    Observed,
}

type PopulationFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named scalar property of a population vector.
pub struct PopulationFunction {
    name: String,
    analytic_range: Option<(f64, f64)>,
    f: PopulationFn,
}

impl PopulationFunction {
    pub fn new<F>(name: impl Into<String>, analytic_range: Option<(f64, f64)>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        PopulationFunction { name: name.into(), analytic_range, f: Box::new(f) }
    }

    /// Entropy, with its exact bounds [0, ln m] over the ensemble's active
    /// levels.
    pub fn entropy_for(spec: &EnsembleSpec) -> Self {
        let m = spec.active_count() as f64;
        PopulationFunction::new("entropy", Some((0.0, m.ln())), entropy_of)
    }

    /// Expectation energy, bounded by the active part of the spectrum.
    pub fn energy_for(spec: &EnsembleSpec) -> Self {
        let energies: Vec<f64> = spec.spectrum().energies().to_vec();
        let range = spec.active_energy_range();
        PopulationFunction::new("energy", Some(range), move |p: &[f64]| {
            p.iter().zip(&energies).map(|(x, e)| x * e).sum()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.f)(p)
    }
}

impl std::fmt::Debug for PopulationFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PopulationFunction")
            .field("name", &self.name)
            .field("analytic_range", &self.analytic_range)
            .finish()
    }
}

/// Spread of a property against its possible range, the operational reading
/// of "typical".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypicalityReport {
    pub f_name: String,
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    /// The denominator: property range.
    pub range: f64,
    pub range_kind: RangeKind,
    pub ratio: f64,
    pub n_samples: usize,
}

/// Draws from the ensemble's exact sampler plus chain diagnostics when the
/// sampler is a Markov chain.
pub fn ensemble_samples(
    spec: &EnsembleSpec,
    n_samples: usize,
    seed: u64,
    chain_cfg: &ChainConfig,
) -> Result<(Vec<PopulationSet>, Option<McmcDiagnostics>)> {
    match spec.kind() {
        EnsembleKind::Cutoff { .. } => Ok((rpse_sample_batch(spec, n_samples, seed)?, None)),
        EnsembleKind::FixedEnergy { .. } => {
            let chain = feee_sample_mcmc(spec, n_samples, seed, chain_cfg)?;
            Ok((chain.samples, Some(chain.diagnostics)))
        }
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if vmin == vmax {
        return (vmin, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var.sqrt())
}

fn typicality_from_values(f: &PopulationFunction, values: &[f64]) -> TypicalityReport {
    let (mean, std) = mean_and_std(values);
    let (range, range_kind) = match f.analytic_range {
        Some((lo, hi)) => (hi - lo, RangeKind::Analytic),
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo, RangeKind::Observed)
        }
    };
    // spread at rounding noise counts as zero so that exactly conserved
    // quantities report a clean 0 instead of a ratio of two epsilons
    let zero_floor = 1e-12 * (1.0 + mean.abs());
    let ratio = if std <= zero_floor {
        0.0
    } else if range > zero_floor {
        std / range
    } else {
        f64::INFINITY
    };
    TypicalityReport {
        f_name: f.name.clone(),
        mean,
        std,
        std_error: std / (values.len() as f64).sqrt(),
        range,
        range_kind,
        ratio,
        n_samples: values.len(),
    }
}

/// Monte Carlo typicality of `f` over the ensemble.
pub fn ensemble_statistics(
    f: &PopulationFunction,
    spec: &EnsembleSpec,
    n_samples: usize,
    seed: u64,
) -> Result<TypicalityReport> {
    ensemble_statistics_with(f, spec, n_samples, seed, &ChainConfig::default())
}

/// [`ensemble_statistics`] with explicit chain controls for fixed-energy
/// ensembles.
pub fn ensemble_statistics_with(
    f: &PopulationFunction,
    spec: &EnsembleSpec,
    n_samples: usize,
    seed: u64,
    chain_cfg: &ChainConfig,
) -> Result<TypicalityReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "typicality needs at least 2 samples, got {n_samples}"
        )));
    }
    let (samples, _) = ensemble_samples(spec, n_samples, seed, chain_cfg)?;
    let values = crate::par::map_indexed(samples.len(), |i| f.eval(samples[i].as_slice()));
    Ok(typicality_from_values(f, &values))
}

/// One system size in a scaling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub mean: f64,
    pub sigma: f64,
    pub range: f64,
    pub ratio: f64,
}

/// Least-squares slope on a log-log plot, with a 2-standard-error half
/// width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub half_width: f64,
}

/// Ratio-versus-size table with fitted decay exponents. Both the ratio slope
/// and the bare sigma slope are reported: the range grows with size too, so
/// the two exponents answer different questions and both get printed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub ratio_slope: Option<SlopeFit>,
    pub sigma_slope: Option<SlopeFit>,
    /// Set when a slope is meaningless (some ratio vanished or blew up).
    pub degenerate: bool,
}

fn fit_log_slope(sizes: &[usize], values: &[f64]) -> Option<SlopeFit> {
    if sizes.len() < 3 || values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = m - 2.0;
    let half_width = if dof > 0.0 {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        2.0 * (ss_res / dof).sqrt() / sxx.sqrt()
    } else {
        f64::INFINITY
    };
    Some(SlopeFit { slope, half_width })
}

/// Typicality ratios across a family of ensemble sizes, with fitted decay
/// slopes. `make_f` builds the property for each member (ranges depend on
/// the size).
pub fn typicality_scaling<F>(
    make_f: F,
    family: &[EnsembleSpec],
    n_samples: usize,
    seed: u64,
) -> Result<ScalingTable>
where
    F: Fn(&EnsembleSpec) -> PopulationFunction,
{
    if family.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "scaling needs at least 3 sizes, got {}",
            family.len()
        )));
    }
    for w in family.windows(2) {
        if w[1].active_count() <= w[0].active_count() {
            return Err(Error::InvalidArgument("sizes must strictly increase".into()));
        }
    }
    let mut rows = Vec::with_capacity(family.len());
    for spec in family {
        let f = make_f(spec);
        let member_seed = stage_seed(seed, &format!("scaling:{}", spec.active_count()));
        let report = ensemble_statistics(&f, spec, n_samples, member_seed)?;
        rows.push(ScalingRow {
            n: spec.active_count(),
            mean: report.mean,
            sigma: report.std,
            range: report.range,
            ratio: report.ratio,
        });
    }
    let sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let sigmas: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let ratio_slope = fit_log_slope(&sizes, &ratios);
    let sigma_slope = fit_log_slope(&sizes, &sigmas);
    let degenerate = ratio_slope.is_none();
    Ok(ScalingTable { rows, ratio_slope, sigma_slope, degenerate })
}

/// One point of an entropy-energy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFunctionPoint {
    /// The knob that was varied (target energy, or energy cutoff).
    pub parameter: f64,
    pub u: f64,
    pub s_mean: f64,
    pub s_std: f64,
}

/// Mean entropy against internal energy, sorted by U.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFunction {
    points: Vec<StateFunctionPoint>,
    label: String,
}

impl StateFunction {
    pub fn new(mut points: Vec<StateFunctionPoint>, label: impl Into<String>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidStateFunction(format!(
                "need at least 3 points for differentiation, got {}",
                points.len()
            )));
        }
        points.sort_by(|a, b| a.u.partial_cmp(&b.u).unwrap());
        if points.windows(2).any(|w| w[1].u <= w[0].u) {
            return Err(Error::InvalidStateFunction(
                "internal energies must be strictly increasing".into(),
            ));
        }
        if points.iter().any(|p| !p.u.is_finite() || !p.s_mean.is_finite()) {
            return Err(Error::InvalidStateFunction("non-finite point".into()));
        }
        Ok(StateFunction { points, label: label.into() })
    }

    pub fn points(&self) -> &[StateFunctionPoint] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn u_range(&self) -> (f64, f64) {
        (self.points[0].u, self.points.last().unwrap().u)
    }

    pub fn interpolant(&self) -> Result<MonotoneCubic> {
        MonotoneCubic::new(
            self.points.iter().map(|p| p.u).collect(),
            self.points.iter().map(|p| p.s_mean).collect(),
        )
    }
}

/// Which fixed-energy sampler backs a state function.
#[derive(Debug, Clone)]
pub enum FeeeStateSampler {
    Mcmc(ChainConfig),
    /// Product-law approximation; cheaper, biased, and labeled as such.
    Factorized,
}

/// Entropy-energy curve for the fixed-energy ensemble: U is the constraint
/// energy itself. Chain sampler by default.
pub fn state_function_feee(
    spectrum: &Spectrum,
    e_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<StateFunction> {
    state_function_feee_with(
        spectrum,
        e_grid,
        n_samples,
        seed,
        &FeeeStateSampler::Mcmc(ChainConfig::default()),
    )
}

/// [`state_function_feee`] with an explicit sampler choice; the label
/// records which one produced the curve.
pub fn state_function_feee_with(
    spectrum: &Spectrum,
    e_grid: &[f64],
    n_samples: usize,
    seed: u64,
    sampler: &FeeeStateSampler,
) -> Result<StateFunction> {
    let points = crate::par::try_map_indexed(e_grid.len(), |i| {
        let e = e_grid[i];
        let spec = EnsembleSpec::fixed_energy(spectrum.clone(), e)?;
        let point_seed = stage_seed(seed, &format!("feee-point:{i}"));
        let entropies: Vec<f64> = match sampler {
            FeeeStateSampler::Mcmc(cfg) => {
                let chain = feee_sample_mcmc(&spec, n_samples, point_seed, cfg)?;
                chain.samples.iter().map(|p| entropy_of(p.as_slice())).collect()
            }
            FeeeStateSampler::Factorized => {
                let mut rng = stream_rng(point_seed, 0);
                (0..n_samples)
                    .map(|_| {
                        feee_factorized_sample(&spec, &mut rng)
                            .map(|s| entropy_of(&s.populations))
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
        };
        let (s_mean, s_std) = mean_and_std(&entropies);
        Ok(StateFunctionPoint { parameter: e, u: e, s_mean, s_std })
    })?;
    let label = match sampler {
        FeeeStateSampler::Mcmc(_) => "feee-mcmc",
        FeeeStateSampler::Factorized => "feee-factorized",
    };
    StateFunction::new(points, label)
}

/// Entropy-energy curve for the cutoff ensemble: each cutoff gives one
/// point, with U the ensemble-mean energy (the cutoff itself is kept as the
/// parameter, so the curve is the parametric elimination of the knob).
pub fn state_function_rpse(
    spectrum: &Spectrum,
    e_max_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<StateFunction> {
    let energies: Vec<f64> = spectrum.energies().to_vec();
    let points = crate::par::try_map_indexed(e_max_grid.len(), |i| {
        let e_max = e_max_grid[i];
        let spec = EnsembleSpec::cutoff(spectrum.clone(), e_max)?;
        let point_seed = stage_seed(seed, &format!("rpse-point:{i}"));
        let samples = rpse_sample_batch(&spec, n_samples, point_seed)?;
        let mut us = Vec::with_capacity(samples.len());
        let mut ss = Vec::with_capacity(samples.len());
        for p in &samples {
            us.push(p.iter().zip(&energies).map(|(x, e)| x * e).sum());
            ss.push(entropy_of(p.as_slice()));
        }
        let (u_mean, _) = mean_and_std(&us);
        let (s_mean, s_std) = mean_and_std(&ss);
        Ok(StateFunctionPoint { parameter: e_max, u: u_mean, s_mean, s_std })
    })?;
    StateFunction::new(points, "rpse")
}

/// Temperature from the state-function derivative.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    /// `1 / (dS/dU)`; an infinite sentinel when the derivative underflows.
    pub temperature: f64,
    pub ds_du: f64,
    /// First-order error bar propagated from the Monte Carlo entropy noise
    /// of the bracketing grid points.
    pub t_std: f64,
    /// Entropy was locally decreasing: a negative-temperature branch.
    pub negative: bool,
}

/// Reads `1/T = dS/dU` off a shape-preserving interpolant of the curve.
pub fn temperature(sf: &StateFunction, u_query: f64) -> Result<TemperatureEstimate> {
    let interp = sf.interpolant()?;
    let d = interp.derivative(u_query)?;
    let t = 1.0 / d;
    let pts = sf.points();
    let k = pts
        .windows(2)
        .position(|w| u_query >= w[0].u && u_query <= w[1].u)
        .unwrap_or(pts.len() - 2);
    let du = pts[k + 1].u - pts[k].u;
    let dd = (pts[k].s_std.powi(2) + pts[k + 1].s_std.powi(2)).sqrt() / du;
    let t_std = if t.is_finite() { (t * t * dd).abs() } else { f64::INFINITY };
    Ok(TemperatureEstimate { temperature: t, ds_du: d, t_std, negative: d < 0.0 })
}

/// Verdict grade used throughout the scorecard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementStatus {
    Pass,
    Fail,
    Indeterminate,
}

/// Curvature verdict of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Convex,
    Concave,
    /// All second differences inside the noise floor (straight line).
    Boundary,
    Mixed,
}

/// Shape report for one entropy-energy curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub label: String,
    pub second_differences: Vec<f64>,
    pub curvature: CurvatureKind,
    pub monotone_increasing: bool,
    /// Largest noise-significant violation of monotonicity, if any.
    pub worst_dip: f64,
}

/// Second-difference curvature with a Monte Carlo noise floor: only
/// differences larger than twice their propagated standard error count
/// toward a verdict.
pub fn curvature_report(sf: &StateFunction) -> CurvatureReport {
    let pts = sf.points();
    let mut d2 = Vec::new();
    let mut convex = 0usize;
    let mut concave = 0usize;
    for k in 1..pts.len() - 1 {
        let left = (pts[k].s_mean - pts[k - 1].s_mean) / (pts[k].u - pts[k - 1].u);
        let right = (pts[k + 1].s_mean - pts[k].s_mean) / (pts[k + 1].u - pts[k].u);
        let val = right - left;
        // first-order noise on the two slopes
        let nl = (pts[k].s_std.powi(2) + pts[k - 1].s_std.powi(2)).sqrt()
            / (pts[k].u - pts[k - 1].u);
        let nr = (pts[k + 1].s_std.powi(2) + pts[k].s_std.powi(2)).sqrt()
            / (pts[k + 1].u - pts[k].u);
        let noise = (nl * nl + nr * nr).sqrt();
        // rounding floor keeps exactly linear data out of the counts
        let floor = 2.0 * noise + 1e-10 * (left.abs() + right.abs() + 1.0);
        d2.push(val);
        if val > floor {
            convex += 1;
        } else if val < -floor {
            concave += 1;
        }
    }
    let curvature = match (convex, concave) {
        (0, 0) => CurvatureKind::Boundary,
        (_, 0) => CurvatureKind::Convex,
        (0, _) => CurvatureKind::Concave,
        _ => CurvatureKind::Mixed,
    };
    let mut monotone = true;
    let mut worst_dip = 0.0f64;
    for w in pts.windows(2) {
        let ds = w[1].s_mean - w[0].s_mean;
        let noise = (w[0].s_std.powi(2) + w[1].s_std.powi(2)).sqrt();
        if ds < -(2.0 * noise + 1e-12 * (1.0 + w[0].s_mean.abs())) {
            monotone = false;
            worst_dip = worst_dip.max(-ds);
        }
    }
    CurvatureReport {
        label: sf.label().to_string(),
        second_differences: d2,
        curvature,
        monotone_increasing: monotone,
        worst_dip,
    }
}

/// Cross-size collapse of entropy and energy per unit of system size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtensivityReport {
    pub status: RequirementStatus,
    /// Worst relative spread of S/size at matched U/size.
    pub max_rel_spread: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Combined convexity + extensivity verdict for a family of sizes. Sizes
/// are given explicitly (spin count, or any measure proportional to it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityExtensivityReport {
    pub per_size: Vec<CurvatureReport>,
    pub extensivity: ExtensivityReport,
}

/// Report-only check of §-style requirements 2 and 3 on explicit curves.
pub fn convexity_extensivity_check(
    curves: &[(f64, StateFunction)],
    tolerance: f64,
) -> ConvexityExtensivityReport {
    let per_size = curves.iter().map(|(_, sf)| curvature_report(sf)).collect();
    let extensivity = if curves.len() < 2 {
        ExtensivityReport {
            status: RequirementStatus::Indeterminate,
            max_rel_spread: f64::NAN,
            tolerance,
            detail: "single system size provided; collapse needs at least two".into(),
        }
    } else {
        extensivity_spread(curves, tolerance)
    };
    ConvexityExtensivityReport { per_size, extensivity }
}

fn extensivity_spread(curves: &[(f64, StateFunction)], tolerance: f64) -> ExtensivityReport {
    // overlap of the per-size U/size windows
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (size, sf) in curves {
        let (a, b) = sf.u_range();
        lo = lo.max(a / size);
        hi = hi.min(b / size);
    }
    if !(hi > lo) {
        return ExtensivityReport {
            status: RequirementStatus::Indeterminate,
            max_rel_spread: f64::NAN,
            tolerance,
            detail: "per-size energy windows do not overlap".into(),
        };
    }
    let interps: Vec<(f64, MonotoneCubic)> = match curves
        .iter()
        .map(|(size, sf)| sf.interpolant().map(|i| (*size, i)))
        .collect::<Result<Vec<_>>>()
    {
        Ok(v) => v,
        Err(e) => {
            return ExtensivityReport {
                status: RequirementStatus::Indeterminate,
                max_rel_spread: f64::NAN,
                tolerance,
                detail: format!("interpolation failed: {e}"),
            }
        }
    };
    let n_query = 9;
    let mut max_rel_spread = 0.0f64;
    for j in 0..n_query {
        let q = lo + (hi - lo) * (j as f64 + 0.5) / n_query as f64;
        let mut values = Vec::with_capacity(interps.len());
        for (size, interp) in &interps {
            if let Ok(s) = interp.value(q * size) {
                values.push(s / size);
            }
        }
        if values.len() < 2 {
            continue;
        }
        let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mid = 0.5 * (vmax + vmin);
        if mid.abs() > 0.0 {
            max_rel_spread = max_rel_spread.max((vmax - vmin) / mid.abs());
        }
    }
    let status = if max_rel_spread <= tolerance {
        RequirementStatus::Pass
    } else {
        RequirementStatus::Fail
    };
    ExtensivityReport {
        status,
        max_rel_spread,
        tolerance,
        detail: format!(
            "S/size compared at {n_query} matched U/size points over [{lo:.4}, {hi:.4}]"
        ),
    }
}

/// Gibbs state of a subsystem Hamiltonian at temperature `t` (k_B = 1),
/// computed in the Hamiltonian's eigenbasis with the usual max-shift
/// stabilization. A positive-infinite `t` is the infinite-temperature
/// sentinel and yields the maximally mixed state.
pub fn canonical_reference(h_s: &CMatrix, t: f64) -> Result<DensityMatrix> {
    let d = h_s.nrows();
    if t.is_infinite() && t > 0.0 {
        let m = CMatrix::identity(d, d) / Complex64::new(d as f64, 0.0);
        return Ok(DensityMatrix::from_valid_parts(m, None));
    }
    if !(t > 0.0) || t.is_nan() {
        return Err(Error::NonPositiveTemperature(t));
    }
    crate::linalg::assert_hermitian(h_s, tol::INPUT_HERMITICITY)?;
    let (evals, vecs) = hermitian_eigen(h_s);
    let m = evals.iter().map(|e| -e / t).fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = evals.iter().map(|e| (-e / t - m).exp()).collect();
    let z: f64 = w.iter().sum();
    for x in &mut w {
        *x /= z;
    }
    let mut rho = CMatrix::zeros(d, d);
    for (k, wk) in w.iter().enumerate() {
        let col = vecs.column(k);
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] += Complex64::new(*wk, 0.0) * col[i] * col[j].conj();
            }
        }
    }
    Ok(DensityMatrix::from_valid_parts(rho, None))
}

/// Half the absolute-eigenvalue sum of the difference: the standard state
/// metric in [0, 1].
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between {}x{} and {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    let diff = a.matrix() - b.matrix();
    let (evals, _) = hermitian_eigen(&diff);
    Ok(0.5 * evals.iter().map(|e| e.abs()).sum::<f64>())
}

/// Best canonical match to a subsystem state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LocalTemperatureFit {
    pub temperature: f64,
    /// Trace distance at the fitted temperature.
    pub residual: f64,
    /// The optimum sits at the edge of the search window (an effectively
    /// infinite or vanishing temperature).
    pub at_search_bound: bool,
    /// False when the coarse scan saw multiple minima; the returned value
    /// then refines the global grid minimum and should be read with care.
    pub unimodal: bool,
}

const LOCAL_T_GRID: usize = 33;
const LOCAL_T_SPAN: f64 = 1e3;

/// Fits the temperature of the closest Gibbs state of `h_s` by trace
/// distance: coarse log-spaced scan over `[1e-3, 1e3] * spectral width`,
/// then golden-section refinement in log T.
pub fn local_temperature_fit(mu: &DensityMatrix, h_s: &CMatrix) -> Result<LocalTemperatureFit> {
    crate::linalg::assert_hermitian(h_s, tol::INPUT_HERMITICITY)?;
    let d = h_s.nrows();
    if mu.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "state is {}x{}, Hamiltonian {}x{}",
            mu.dim(),
            mu.dim(),
            d,
            d
        )));
    }
    let (evals, vecs) = hermitian_eigen(h_s);
    let width = evals.last().unwrap() - evals.first().unwrap();
    if !(width > 0.0) {
        // fully degenerate subsystem Hamiltonian: every temperature gives
        // the same maximally mixed reference
        let reference = canonical_reference(h_s, f64::INFINITY)?;
        let residual = trace_distance(mu, &reference)?;
        return Ok(LocalTemperatureFit {
            temperature: f64::INFINITY,
            residual,
            at_search_bound: true,
            unimodal: true,
        });
    }
    // express mu in the eigenbasis once; each candidate is then a diagonal
    let mu_eig = vecs.adjoint() * mu.matrix() * &vecs;
    let distance_at = |log_t: f64| -> f64 {
        let t = log_t.exp();
        let m = evals.iter().map(|e| -e / t).fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = evals.iter().map(|e| (-e / t - m).exp()).collect();
        let z: f64 = w.iter().sum();
        for x in &mut w {
            *x /= z;
        }
        let mut diff = mu_eig.clone();
        for (k, wk) in w.iter().enumerate() {
            diff[(k, k)] -= Complex64::new(*wk, 0.0);
        }
        let (dev, _) = hermitian_eigen(&diff);
        0.5 * dev.iter().map(|e| e.abs()).sum::<f64>()
    };

    let lo = (width / LOCAL_T_SPAN).ln();
    let hi = (width * LOCAL_T_SPAN).ln();
    let grid: Vec<f64> =
        (0..LOCAL_T_GRID).map(|k| lo + (hi - lo) * k as f64 / (LOCAL_T_GRID - 1) as f64).collect();
    let values: Vec<f64> = crate::par::map_indexed(grid.len(), |k| distance_at(grid[k]));
    let mut best = 0usize;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    // count strict interior minima beyond a flatness allowance
    let slack = 1e-9 + 1e-6 * values[best];
    let mut minima = 0;
    for k in 1..values.len() - 1 {
        if values[k] + slack < values[k - 1] && values[k] + slack < values[k + 1] {
            minima += 1;
        }
    }
    let unimodal = minima <= 1;

    let mut a = if best == 0 { grid[0] } else { grid[best - 1] };
    let mut b = if best == LOCAL_T_GRID - 1 { grid[LOCAL_T_GRID - 1] } else { grid[best + 1] };
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = distance_at(x1);
    let mut f2 = distance_at(x2);
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = distance_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = distance_at(x2);
        }
    }
    let log_t = 0.5 * (a + b);
    let temperature = log_t.exp();
    let residual = distance_at(log_t);
    let at_search_bound = best == 0
        || best == LOCAL_T_GRID - 1
        || temperature >= width * LOCAL_T_SPAN * 0.9
        || temperature <= width / LOCAL_T_SPAN * 1.1;
    Ok(LocalTemperatureFit { temperature, residual, at_search_bound, unimodal })
}

/// Budgets and thresholds for one scorecard run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorecardBudgets {
    /// Draws for scalar typicality statistics.
    pub n_samples: usize,
    /// Draws for the reduced-state ensemble (each costs a basis reduction).
    pub mu_samples: usize,
    /// Grid size of each state function.
    pub state_function_points: usize,
    /// Draws per state-function grid point.
    pub state_function_samples: usize,
    /// Chain controls for fixed-energy sampling.
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub typicality_threshold: f64,
    /// Acceptable trace-distance residual of the canonical fit.
    pub canonical_fit_tolerance: f64,
    /// Acceptable |T_global - T_local| / T_global.
    pub temperature_match_tolerance: f64,
    pub extensivity_tolerance: f64,
}

impl Default for ScorecardBudgets {
    fn default() -> Self {
        ScorecardBudgets {
            n_samples: 4000,
            mu_samples: 1500,
            state_function_points: 9,
            state_function_samples: 1500,
            burn_in: None,
            thinning: None,
            typicality_threshold: tol::Tolerances::default().typicality,
            canonical_fit_tolerance: 0.1,
            temperature_match_tolerance: 0.1,
            extensivity_tolerance: 0.1,
        }
    }
}

impl ScorecardBudgets {
    fn chain_config(&self) -> ChainConfig {
        ChainConfig { burn_in: self.burn_in, thinning: self.thinning, ..ChainConfig::default() }
    }
}

/// One requirement verdict with its numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequirementEntry {
    pub requirement: String,
    pub status: RequirementStatus,
    pub evidence: Vec<(String, f64)>,
    /// Which computation produced the verdict.
    pub detail: String,
}

/// The five-entry verdict sheet for one model and ensemble choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequirementScorecard {
    pub ensemble_label: String,
    pub seed: u64,
    pub entries: Vec<RequirementEntry>,
}

fn ensemble_label(spec: &EnsembleSpec) -> String {
    match spec.kind() {
        EnsembleKind::Cutoff { e_max } => format!("cutoff(e_max={e_max})"),
        EnsembleKind::FixedEnergy { e } => format!("fixed_energy(e={e})"),
    }
}

fn indeterminate(requirement: &str, cause: &str) -> RequirementEntry {
    RequirementEntry {
        requirement: requirement.into(),
        status: RequirementStatus::Indeterminate,
        evidence: Vec::new(),
        detail: format!("not computed: {cause}"),
    }
}

fn state_function_for(
    spec: &EnsembleSpec,
    budgets: &ScorecardBudgets,
    seed: u64,
) -> Result<StateFunction> {
    let spectrum = spec.spectrum();
    match spec.kind() {
        EnsembleKind::FixedEnergy { e } => {
            // grid centered on the target, strictly inside the spectrum
            let half = 0.4 * (e - spectrum.min_energy()).min(spectrum.max_energy() - e);
            let k = budgets.state_function_points.max(3);
            let grid: Vec<f64> = (0..k)
                .map(|j| e - half + 2.0 * half * j as f64 / (k - 1) as f64)
                .collect();
            state_function_feee_with(
                spectrum,
                &grid,
                budgets.state_function_samples,
                seed,
                &FeeeStateSampler::Mcmc(budgets.chain_config()),
            )
        }
        EnsembleKind::Cutoff { .. } => {
            let n = spectrum.len();
            let m_head = spec.active_count();
            let k = budgets.state_function_points.max(3);
            // distinct active counts from 3 levels up to the full spectrum,
            // always including the headline cutoff
            let mut counts: Vec<usize> =
                (0..k).map(|j| 3 + (n - 3) * j / (k - 1).max(1)).collect();
            counts.push(m_head.max(3));
            counts.sort_unstable();
            counts.dedup();
            let grid: Vec<f64> = counts
                .iter()
                .map(|&m| {
                    if m >= n {
                        spectrum.max_energy()
                    } else {
                        0.5 * (spectrum.energy(m - 1) + spectrum.energy(m))
                    }
                })
                .collect();
            state_function_rpse(spectrum, &grid, budgets.state_function_samples, seed)
        }
    }
}

/// Runs the five requirement checks for `model` under the given ensembles.
/// The first ensemble whose spectrum matches the model is the headline one
/// (statistics, subsystem fit); additional matching ensembles contribute
/// their own state functions and global temperatures; ensembles over other
/// spectrum sizes only feed the cross-size collapse check, with size taken
/// as ln(dimension).
pub fn requirement_scorecard(
    model: &BipartiteModel,
    ensembles: &[EnsembleSpec],
    budgets: &ScorecardBudgets,
    seed: u64,
) -> Result<RequirementScorecard> {
    if ensembles.is_empty() {
        return Err(Error::InvalidArgument("scorecard needs at least one ensemble".into()));
    }
    let model_spectrum = model.eigen().spectrum();
    let matches_model = |spec: &EnsembleSpec| {
        spec.spectrum().len() == model_spectrum.len()
            && spec
                .spectrum()
                .energies()
                .iter()
                .zip(model_spectrum.energies())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
    };
    let headline = ensembles
        .iter()
        .find(|s| matches_model(s))
        .ok_or_else(|| {
            Error::InvalidArgument("no ensemble matches the model spectrum".into())
        })?;
    let mut entries = Vec::with_capacity(5);

    // 1: scalar typicality of entropy and energy
    let chain_cfg = budgets.chain_config();
    let entry1 = (|| -> Result<RequirementEntry> {
        let f_s = PopulationFunction::entropy_for(headline);
        let f_e = PopulationFunction::energy_for(headline);
        let rs = ensemble_statistics_with(
            &f_s,
            headline,
            budgets.n_samples,
            stage_seed(seed, "typicality-entropy"),
            &chain_cfg,
        )?;
        let re = ensemble_statistics_with(
            &f_e,
            headline,
            budgets.n_samples,
            stage_seed(seed, "typicality-energy"),
            &chain_cfg,
        )?;
        let ok = rs.ratio <= budgets.typicality_threshold
            && re.ratio <= budgets.typicality_threshold;
        Ok(RequirementEntry {
            requirement: "scalar typicality".into(),
            status: if ok { RequirementStatus::Pass } else { RequirementStatus::Fail },
            evidence: vec![
                ("entropy_mean".into(), rs.mean),
                ("entropy_ratio".into(), rs.ratio),
                ("energy_mean".into(), re.mean),
                ("energy_ratio".into(), re.ratio),
                ("threshold".into(), budgets.typicality_threshold),
            ],
            detail: format!(
                "spread/range of entropy and energy over {} draws of {}",
                budgets.n_samples,
                ensemble_label(headline)
            ),
        })
    })();
    entries.push(entry1.unwrap_or_else(|e| indeterminate("scalar typicality", &e.to_string())));

    // state functions for every ensemble on the model spectrum
    let mut state_functions: Vec<(String, StateFunction)> = Vec::new();
    let mut sf_error: Option<String> = None;
    for (i, spec) in ensembles.iter().filter(|s| matches_model(s)).enumerate() {
        match state_function_for(spec, budgets, stage_seed(seed, &format!("sf:{i}"))) {
            Ok(sf) => state_functions.push((ensemble_label(spec), sf)),
            Err(e) => sf_error = Some(e.to_string()),
        }
    }

    // 2: monotone increasing S(U) with a consistent curvature sign
    let entry2 = if let Some((label, sf)) = state_functions.first() {
        let report = curvature_report(sf);
        let ok = report.monotone_increasing && report.curvature != CurvatureKind::Mixed;
        let curvature_code = match report.curvature {
            CurvatureKind::Convex => 1.0,
            CurvatureKind::Concave => -1.0,
            CurvatureKind::Boundary => 0.0,
            CurvatureKind::Mixed => f64::NAN,
        };
        RequirementEntry {
            requirement: "state function shape".into(),
            status: if ok { RequirementStatus::Pass } else { RequirementStatus::Fail },
            evidence: vec![
                ("monotone_increasing".into(), if report.monotone_increasing { 1.0 } else { 0.0 }),
                ("curvature_sign".into(), curvature_code),
                ("worst_dip".into(), report.worst_dip),
                ("points".into(), sf.points().len() as f64),
            ],
            detail: format!(
                "noise-aware second differences of the {label} entropy-energy curve \
                 (curvature sign reported, not prescribed)"
            ),
        }
    } else {
        indeterminate(
            "state function shape",
            sf_error.as_deref().unwrap_or("no state function available"),
        )
    };
    entries.push(entry2);

    // 3: extensivity across provided sizes
    let mut size_groups: Vec<(f64, &EnsembleSpec)> = Vec::new();
    for spec in ensembles {
        let size = (spec.spectrum().len() as f64).ln();
        if size_groups.iter().all(|(s, _)| (*s - size).abs() > 1e-12) {
            size_groups.push((size, spec));
        }
    }
    let entry3 = if size_groups.len() < 2 {
        indeterminate("extensivity", "single system size provided")
    } else {
        let curves: Result<Vec<(f64, StateFunction)>> = size_groups
            .iter()
            .enumerate()
            .map(|(i, (size, spec))| {
                state_function_for(spec, budgets, stage_seed(seed, &format!("ext:{i}")))
                    .map(|sf| (*size, sf))
            })
            .collect();
        match curves {
            Ok(curves) => {
                let report = extensivity_spread(&curves, budgets.extensivity_tolerance);
                RequirementEntry {
                    requirement: "extensivity".into(),
                    status: report.status,
                    evidence: vec![
                        ("max_rel_spread".into(), report.max_rel_spread),
                        ("tolerance".into(), report.tolerance),
                        ("sizes".into(), curves.len() as f64),
                    ],
                    detail: report.detail,
                }
            }
            Err(e) => indeterminate("extensivity", &e.to_string()),
        }
    };
    entries.push(entry3);

    // 4: typicality of the averaged subsystem state + canonical fit
    let mu_result = (|| -> Result<(RequirementEntry, Option<DensityMatrix>)> {
        let projectors = ReducedEigenProjectors::new(model);
        let (samples, _) = ensemble_samples(
            headline,
            budgets.mu_samples,
            stage_seed(seed, "mu-ensemble"),
            &chain_cfg,
        )?;
        let ds = model.dim_s();
        let mut mean_re = DMatrix::<f64>::zeros(ds, ds);
        let mut mean_im = DMatrix::<f64>::zeros(ds, ds);
        let mut m2 = DMatrix::<f64>::zeros(ds, ds);
        let chunk = 256;
        let mut count = 0.0f64;
        for block in samples.chunks(chunk) {
            let mus =
                crate::par::try_map_indexed(block.len(), |i| projectors.reduce(&block[i]))?;
            for mu in &mus {
                count += 1.0;
                let m = mu.matrix();
                for i in 0..ds {
                    for j in 0..ds {
                        let x = m[(i, j)];
                        let dr = x.re - mean_re[(i, j)];
                        let di = x.im - mean_im[(i, j)];
                        mean_re[(i, j)] += dr / count;
                        mean_im[(i, j)] += di / count;
                        m2[(i, j)] +=
                            dr * (x.re - mean_re[(i, j)]) + di * (x.im - mean_im[(i, j)]);
                    }
                }
            }
        }
        let mut max_std = 0.0f64;
        for i in 0..ds {
            for j in 0..ds {
                max_std = max_std.max((m2[(i, j)] / (count - 1.0)).sqrt());
            }
        }
        let mean_mu = CMatrix::from_fn(ds, ds, |i, j| {
            Complex64::new(mean_re[(i, j)], mean_im[(i, j)])
        });
        let mean_state = DensityMatrix::from_valid_parts(mean_mu, None);
        // element-wise a-priori ranges: populations span [0, 1] and
        // coherence components span [-1/2, 1/2]; both have width 1
        let fit = local_temperature_fit(&mean_state, model.subsystem_hamiltonian())?;
        let ok = max_std <= budgets.typicality_threshold
            && fit.residual <= budgets.canonical_fit_tolerance;
        let entry = RequirementEntry {
            requirement: "subsystem state typicality".into(),
            status: if ok { RequirementStatus::Pass } else { RequirementStatus::Fail },
            evidence: vec![
                ("max_element_std".into(), max_std),
                ("element_range".into(), 1.0),
                ("canonical_fit_residual".into(), fit.residual),
                ("fitted_temperature".into(), fit.temperature),
                ("samples".into(), count),
            ],
            detail: format!(
                "element-wise spread of the averaged subsystem state over {} of {}, \
                 plus its best canonical fit",
                budgets.mu_samples,
                ensemble_label(headline)
            ),
        };
        Ok((entry, Some(mean_state)))
    })();
    let (entry4, mean_mu_state) = match mu_result {
        Ok((e, m)) => (e, m),
        Err(e) => (indeterminate("subsystem state typicality", &e.to_string()), None),
    };
    entries.push(entry4);

    // 5: global vs local temperature (one global per available curve)
    let entry5 = (|| -> Result<RequirementEntry> {
        let mean_state = mean_mu_state
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("subsystem state unavailable".into()))?;
        if state_functions.is_empty() {
            return Err(Error::InvalidArgument(
                sf_error.clone().unwrap_or_else(|| "no state function available".into()),
            ));
        }
        let f_e = PopulationFunction::energy_for(headline);
        let re = ensemble_statistics_with(
            &f_e,
            headline,
            budgets.n_samples,
            stage_seed(seed, "typicality-energy"),
            &chain_cfg,
        )?;
        let local = local_temperature_fit(mean_state, model.subsystem_hamiltonian())?;
        let mut evidence = vec![("t_local".into(), local.temperature)];
        let mut headline_rel: Option<f64> = None;
        for (label, sf) in &state_functions {
            let (lo, hi) = sf.u_range();
            let eps = 1e-9 * (hi - lo);
            let q = re.mean.clamp(lo + eps, hi - eps);
            let est = temperature(sf, q)?;
            let rel = if est.temperature.is_finite() && est.temperature != 0.0 {
                (est.temperature - local.temperature).abs() / est.temperature.abs()
            } else {
                f64::INFINITY
            };
            evidence.push((format!("t_global[{label}]"), est.temperature));
            evidence.push((format!("rel_diff[{label}]"), rel));
            if headline_rel.is_none() {
                headline_rel = Some(rel);
            }
        }
        let rel = headline_rel.unwrap();
        evidence.push(("tolerance".into(), budgets.temperature_match_tolerance));
        Ok(RequirementEntry {
            requirement: "temperature equivalence".into(),
            status: if rel <= budgets.temperature_match_tolerance {
                RequirementStatus::Pass
            } else {
                RequirementStatus::Fail
            },
            evidence,
            detail: "derivative of each entropy-energy curve at the ensemble-mean energy, \
                     against the fitted subsystem temperature"
                .into(),
        })
    })();
    entries.push(entry5.unwrap_or_else(|e| indeterminate("temperature equivalence", &e.to_string())));

    Ok(RequirementScorecard { ensemble_label: ensemble_label(headline), seed, entries })
}
