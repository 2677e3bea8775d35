//! Time evolution as phase translation.
//!
//! In the energy eigenbasis the dynamics is diagonal: populations are frozen
//! and each stored phase advances linearly, alpha_n(t) = alpha_n(0) + E_n t
//! (hbar = 1). Everything here is evaluated analytically on a time grid; no
//! integrator, no integrator error. Grids come in two flavors: uniform (with
//! trapezoid prefix averaging) and random times (plain-mean averaging, immune
//! to aliasing when gaps land near the grid frequency).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;
use crate::par::{map_indexed, try_map_indexed};
use crate::rng::stream_rng;
use crate::spectra::{BipartiteModel, Spectrum};
use crate::states::{DensityMatrix, Observable, PureState};
use crate::{tol, Error, Result};
use rand::Rng;

/// How trajectory sample times are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TimeSampling {
    /// Evenly spaced, endpoints included.
    Uniform,
    /// Independent uniform draws over the window, sorted. Trades quadrature
    /// order for freedom from aliasing.
    Random { seed: u64 },
}

/// Sampling window and resolution for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    t_start: f64,
    t_end: f64,
    n_samples: usize,
    sampling: TimeSampling,
}

impl TrajectoryConfig {
    pub fn new(t_start: f64, t_end: f64, n_samples: usize, sampling: TimeSampling) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time window [{t_start}, {t_end}] must be finite and increasing"
            )));
        }
        if n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 time samples, got {n_samples}"
            )));
        }
        Ok(TrajectoryConfig { t_start, t_end, n_samples, sampling })
    }

    pub fn uniform(t_start: f64, t_end: f64, n_samples: usize) -> Result<Self> {
        Self::new(t_start, t_end, n_samples, TimeSampling::Uniform)
    }

    /// Default window for a spectrum: 1e4 slowest beat periods, i.e.
    /// `t_end = 1e4 / min_gap`, 1e4 uniform samples starting at zero. Falls
    /// back to the spectral width (then to 1) when every gap is degenerate.
    pub fn default_for(spectrum: &Spectrum) -> Self {
        let scale = spectrum
            .min_gap()
            .or_else(|| (spectrum.width() > 0.0).then(|| spectrum.width()))
            .unwrap_or(1.0);
        TrajectoryConfig {
            t_start: 0.0,
            t_end: 1e4 / scale,
            n_samples: 10_000,
            sampling: TimeSampling::Uniform,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sampling(&self) -> TimeSampling {
        self.sampling
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.sampling, TimeSampling::Uniform)
    }

    /// Materializes the grid, sorted ascending.
    pub fn times(&self) -> Vec<f64> {
        match self.sampling {
            TimeSampling::Uniform => {
                let h = (self.t_end - self.t_start) / (self.n_samples - 1) as f64;
                (0..self.n_samples).map(|k| self.t_start + k as f64 * h).collect()
            }
            TimeSampling::Random { seed } => {
                let mut rng = stream_rng(seed, 0);
                let mut t: Vec<f64> = (0..self.n_samples)
                    .map(|_| rng.gen_range(self.t_start..self.t_end))
                    .collect();
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                t
            }
        }
    }
}

/// A scalar signal on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Whether the grid is evenly spaced (selects the prefix-average rule).
    pub uniform: bool,
}

/// Integer Fourier index vector over the N phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierProbe {
    pub index_vector: Vec<i64>,
}

impl FourierProbe {
    pub fn new(index_vector: Vec<i64>) -> Self {
        FourierProbe { index_vector }
    }

    pub fn is_zero(&self) -> bool {
        self.index_vector.iter().all(|&n| n == 0)
    }
}

/// Advances each stored phase by `E_n * t` (one multiplication per level, so
/// long times do not accumulate roundoff), reduced mod 2 pi.
pub fn propagate_phases(alpha0: &[f64], spectrum: &Spectrum, t: f64) -> Result<Vec<f64>> {
    if alpha0.len() != spectrum.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for {} levels",
            alpha0.len(),
            spectrum.len()
        )));
    }
    Ok(alpha0
        .iter()
        .zip(spectrum.energies())
        .map(|(a, e)| (a + e * t).rem_euclid(std::f64::consts::TAU))
        .collect())
}

/// The state at time `t`: same populations, propagated phases.
pub fn state_at(state0: &PureState, spectrum: &Spectrum, t: f64) -> Result<PureState> {
    let phases = propagate_phases(state0.phases(), spectrum, t)?;
    PureState::new(state0.populations().clone(), phases)
}

/// Expectation of `a` along the trajectory, one exact evaluation per grid
/// point, parallel over the grid.
pub fn observable_timeseries(
    a: &Observable,
    state0: &PureState,
    spectrum: &Spectrum,
    cfg: &TrajectoryConfig,
) -> Result<TimeSeries> {
    let n = spectrum.len();
    if state0.populations().len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {} levels, spectrum {}",
            state0.populations().len(),
            n
        )));
    }
    if a.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "observable is {}x{}, spectrum has {} levels",
            a.dim(),
            a.dim(),
            n
        )));
    }
    let times = cfg.times();
    let values = try_map_indexed(times.len(), |k| {
        let st = state_at(state0, spectrum, times[k])?;
        crate::states::expectation(a, &st)
    })?;
    Ok(TimeSeries { times, values, uniform: cfg.is_uniform() })
}

fn trapezoid_weights(n: usize) -> impl Fn(usize) -> f64 {
    move |k| if k == 0 || k == n - 1 { 0.5 } else { 1.0 }
}

/// Prefix estimates of the window average. Uniform grids use cumulative
/// trapezoid quadrature normalized by elapsed time; random grids use the
/// prefix sample mean (the Monte Carlo estimator of the same integral).
pub fn running_time_average(series: &TimeSeries) -> TimeSeries {
    let n = series.values.len();
    if n == 0 {
        return series.clone();
    }
    let mut out = Vec::with_capacity(n);
    if series.uniform {
        // cumulative trapezoid: I_k = I_{k-1} + h (a_{k-1} + a_k)/2
        let mut integral = 0.0;
        out.push(series.values[0]);
        for k in 1..n {
            let h = series.times[k] - series.times[k - 1];
            integral += 0.5 * h * (series.values[k] + series.values[k - 1]);
            out.push(integral / (series.times[k] - series.times[0]));
        }
    } else {
        let mut acc = 0.0;
        for (k, v) in series.values.iter().enumerate() {
            acc += v;
            out.push(acc / (k + 1) as f64);
        }
    }
    TimeSeries { times: series.times.clone(), values: out, uniform: series.uniform }
}

/// Window average of the whole series (the final running-average entry).
pub fn time_mean(series: &TimeSeries) -> f64 {
    let n = series.values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return series.values[0];
    }
    if series.uniform {
        let w = trapezoid_weights(n);
        let acc: f64 = series.values.iter().enumerate().map(|(k, v)| w(k) * v).sum();
        acc / (n - 1) as f64
    } else {
        series.values.iter().sum::<f64>() / n as f64
    }
}

/// Variance of the signal over the window, same quadrature rule as
/// [`time_mean`].
pub fn time_variance(series: &TimeSeries) -> f64 {
    let n = series.values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = time_mean(series);
    if series.uniform {
        let w = trapezoid_weights(n);
        let acc: f64 = series
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| w(k) * (v - mean) * (v - mean))
            .sum();
        acc / (n - 1) as f64
    } else {
        series.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
    }
}

/// Window average of `exp(-i sum_j n_j alpha_j(t))` along the trajectory.
/// The phase is linear in time, `sum_j n_j alpha_j(0) + t sum_j n_j E_j`, so
/// each grid point costs O(1) after an O(N) setup. Magnitude is at most 1;
/// it stays near 1 exactly when the probe's frequency `sum_j n_j E_j`
/// vanishes (a resonant integer combination).
pub fn empirical_phase_fourier(
    state0: &PureState,
    spectrum: &Spectrum,
    cfg: &TrajectoryConfig,
    probe: &FourierProbe,
) -> Result<Complex64> {
    let n = spectrum.len();
    if probe.index_vector.len() != n || state0.populations().len() != n {
        return Err(Error::DimensionMismatch(format!(
            "probe length {}, state {}, spectrum {}",
            probe.index_vector.len(),
            state0.populations().len(),
            n
        )));
    }
    let k0: f64 = probe
        .index_vector
        .iter()
        .zip(state0.phases())
        .map(|(&nj, &a)| nj as f64 * a)
        .sum();
    let omega: f64 = probe
        .index_vector
        .iter()
        .zip(spectrum.energies())
        .map(|(&nj, &e)| nj as f64 * e)
        .sum();
    let times = cfg.times();
    let len = times.len();
    let mut acc = Complex64::new(0.0, 0.0);
    if cfg.is_uniform() {
        let w = trapezoid_weights(len);
        for (k, t) in times.iter().enumerate() {
            acc += w(k) * Complex64::from_polar(1.0, -(k0 + omega * t));
        }
        acc /= (len - 1) as f64;
    } else {
        for t in &times {
            acc += Complex64::from_polar(1.0, -(k0 + omega * t));
        }
        acc /= len as f64;
    }
    Ok(acc)
}

/// Uniformity audit of the phase distribution: empirical Fourier
/// coefficients at random nonzero integer probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdUniformityReport {
    pub probes: Vec<Vec<i64>>,
    pub magnitudes: Vec<f64>,
    pub max_magnitude: f64,
    pub mean_magnitude: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Probes whose magnitude exceeded the threshold.
    pub witnesses: Vec<Vec<i64>>,
}

/// Probe entries are drawn from this symmetric range.
pub const PROBE_ENTRY_BOUND: i64 = 3;

/// Draws `probe_budget` random nonzero probes (entries in [-3, 3]) and
/// measures their empirical Fourier magnitudes along the trajectory; passes
/// when the largest stays at or below the default uniformity threshold.
/// Report-only: a failure is data, not an error.
pub fn psd_uniformity_report(
    state0: &PureState,
    spectrum: &Spectrum,
    cfg: &TrajectoryConfig,
    probe_budget: usize,
    seed: u64,
) -> Result<PsdUniformityReport> {
    psd_uniformity_report_with(
        state0,
        spectrum,
        cfg,
        probe_budget,
        seed,
        tol::Tolerances::default().phase_uniformity,
    )
}

/// [`psd_uniformity_report`] with an explicit threshold.
pub fn psd_uniformity_report_with(
    state0: &PureState,
    spectrum: &Spectrum,
    cfg: &TrajectoryConfig,
    probe_budget: usize,
    seed: u64,
    threshold: f64,
) -> Result<PsdUniformityReport> {
    let n = spectrum.len();
    let mut rng = stream_rng(seed, 0);
    let mut probes = Vec::with_capacity(probe_budget);
    while probes.len() < probe_budget {
        let candidate: Vec<i64> =
            (0..n).map(|_| rng.gen_range(-PROBE_ENTRY_BOUND..=PROBE_ENTRY_BOUND)).collect();
        if candidate.iter().any(|&x| x != 0) {
            probes.push(candidate);
        }
    }
    let magnitudes = try_map_indexed(probes.len(), |i| {
        let probe = FourierProbe::new(probes[i].clone());
        empirical_phase_fourier(state0, spectrum, cfg, &probe).map(|z| z.norm())
    })?;
    let max_magnitude = magnitudes.iter().copied().fold(0.0f64, f64::max);
    let mean_magnitude = if magnitudes.is_empty() {
        0.0
    } else {
        magnitudes.iter().sum::<f64>() / magnitudes.len() as f64
    };
    let witnesses = probes
        .iter()
        .zip(&magnitudes)
        .filter(|(_, &m)| m > threshold)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(PsdUniformityReport {
        pass: max_magnitude <= threshold,
        probes,
        magnitudes,
        max_magnitude,
        mean_magnitude,
        threshold,
        witnesses,
    })
}

/// Subsystem states along a trajectory.
#[derive(Debug, Clone)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub uniform: bool,
}

/// The subsystem state at each grid point: rotate the evolved coefficients
/// to the product basis, fold into a (system x environment) matrix M, and
/// take M M-adjoint. Parallel over the grid.
pub fn reduced_density_timeseries(
    state0: &PureState,
    model: &BipartiteModel,
    cfg: &TrajectoryConfig,
) -> Result<DensitySeries> {
    let n = model.dim();
    if state0.populations().len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {} levels, model dimension {}",
            state0.populations().len(),
            n
        )));
    }
    let (dim_s, dim_e) = (model.dim_s(), model.dim_e());
    let spectrum = model.eigen().spectrum();
    let vectors = model.eigen().vectors();
    let times = cfg.times();
    let states = try_map_indexed(times.len(), |k| {
        let st = state_at(state0, spectrum, times[k])?;
        let psi = vectors * st.coefficients();
        let folded = CMatrix::from_fn(dim_s, dim_e, |s, e| psi[s * dim_e + e]);
        let mu = &folded * folded.adjoint();
        Ok(DensityMatrix::from_valid_parts(mu, None))
    })?;
    Ok(DensitySeries { times, states, uniform: cfg.is_uniform() })
}

/// Window average of a density series (trapezoid weights on uniform grids,
/// plain mean otherwise); the result is a convex mixture, so it is a valid
/// state by construction.
pub fn average_density(series: &DensitySeries) -> Result<DensityMatrix> {
    if series.states.is_empty() {
        return Err(Error::InvalidArgument("empty density series".into()));
    }
    let n = series.states.len();
    let dim = series.states[0].dim();
    let mut acc = CMatrix::zeros(dim, dim);
    let mut total = 0.0;
    for (k, st) in series.states.iter().enumerate() {
        let w = if series.uniform && n > 1 { trapezoid_weights(n)(k) } else { 1.0 };
        acc += st.matrix() * Complex64::new(w, 0.0);
        total += w;
    }
    acc /= Complex64::new(total, 0.0);
    Ok(DensityMatrix::from_valid_parts(acc, None))
}

/// Mean of scalar traces tr(A mu(t_k)) for a fixed observable, same
/// weighting as [`time_mean`].
pub fn density_series_observable(series: &DensitySeries, a: &Observable) -> Result<TimeSeries> {
    if series.states.is_empty() {
        return Err(Error::InvalidArgument("empty density series".into()));
    }
    if a.dim() != series.states[0].dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable is {}x{}, states are {}x{}",
            a.dim(),
            a.dim(),
            series.states[0].dim(),
            series.states[0].dim()
        )));
    }
    let values = map_indexed(series.states.len(), |k| {
        let prod = a.matrix() * series.states[k].matrix();
        let mut tr = Complex64::new(0.0, 0.0);
        for i in 0..prod.nrows() {
            tr += prod[(i, i)];
        }
        tr.re
    });
    Ok(TimeSeries { times: series.times.clone(), values, uniform: series.uniform })
}
