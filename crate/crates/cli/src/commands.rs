//! The five experiment commands. Each writes its result files through
//! [`OutputDir`] so every artifact carries the config hash and lands in the
//! manifest.

use serde::Serialize;

use purestate::dynamics::{
    observable_timeseries, psd_uniformity_report_with, running_time_average, time_mean,
    time_variance,
};
use purestate::ensembles::{rpse_factorized_sample, ChainConfig, EnsembleKind, EnsembleSpec};
use purestate::export;
use purestate::rng::{stage_seed, stream_rng};
use purestate::spectra::check_nonresonance;
use purestate::states::{equilibrium_average, equilibrium_fluctuation, PopulationSet};
use purestate::thermo::{
    canonical_reference, ensemble_samples, ensemble_statistics_with, local_temperature_fit,
    requirement_scorecard, state_function_feee_with, state_function_rpse, temperature,
    trace_distance, FeeeStateSampler, PopulationFunction, RequirementStatus, ScorecardBudgets,
    StateFunction,
};

use crate::config::{ConfigError, ResolvedExperiment};
use crate::manifest::Timings;
use crate::output::OutputDir;
use crate::plot::{line_plot, Series};

pub enum CommandError {
    Config(ConfigError),
    Numeric(String),
    Refused(String),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<purestate::Error> for CommandError {
    fn from(e: purestate::Error) -> Self {
        CommandError::Numeric(e.to_string())
    }
}

pub type CmdResult = Result<(), CommandError>;

const RESONANCE_SCAN_BOUND: i64 = 3;

fn ensemble_tag(kind: &EnsembleKind) -> String {
    match kind {
        EnsembleKind::Cutoff { .. } => "cutoff".into(),
        EnsembleKind::FixedEnergy { .. } => "fixed_energy".into(),
    }
}

pub fn cmd_spectrum(exp: &ResolvedExperiment, out: &mut OutputDir, timings: &mut Timings) -> CmdResult {
    let spectrum = &exp.spectrum;
    out.write_csv("spectrum.csv", |w| export::write_spectrum_csv(w, spectrum))?;
    timings.mark("diagonalize+write");
    let report = check_nonresonance(
        spectrum,
        RESONANCE_SCAN_BOUND,
        exp.config.tolerances.resonance,
    );
    out.write_json("resonance.json", &report)?;
    timings.mark("resonance-scan");
    println!(
        "spectrum: {} levels, width {:.6}, min gap {}, resonant combinations {}",
        spectrum.len(),
        spectrum.width(),
        spectrum
            .min_gap()
            .map_or_else(|| "none (degenerate)".into(), |g| format!("{g:.6}")),
        report.resonant_combinations.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ComparisonReport {
    time_mean: f64,
    dephased_average: f64,
    mean_abs_diff: f64,
    observable_scale: f64,
    mean_within_tolerance: bool,
    time_variance: f64,
    offdiagonal_fluctuation: f64,
    variance_rel_diff: f64,
}

pub fn cmd_evolve(
    exp: &ResolvedExperiment,
    out: &mut OutputDir,
    timings: &mut Timings,
    require_nonresonant: bool,
) -> CmdResult {
    let spectrum = &exp.spectrum;
    if require_nonresonant {
        let report =
            check_nonresonance(spectrum, RESONANCE_SCAN_BOUND, exp.config.tolerances.resonance);
        if !report.is_nonresonant() {
            let witness = report
                .resonant_combinations
                .first()
                .map(|v| format!("{v:?}"))
                .or_else(|| report.gap_degeneracies.first().map(|q| format!("gap pair {q:?}")))
                .unwrap_or_else(|| "unknown".into());
            return Err(CommandError::Refused(format!(
                "spectrum fails the non-resonance scan; witness {witness}"
            )));
        }
        timings.mark("resonance-scan");
    }
    let observable = exp.observable()?;
    let state = exp.initial_state()?;
    let cfg = exp.trajectory()?;
    let series = observable_timeseries(&observable, &state, spectrum, &cfg)?;
    let running = running_time_average(&series);
    timings.mark("trajectory");

    out.write_csv("timeseries.csv", |w| {
        export::write_multi_timeseries_csv(
            w,
            &series.times,
            &[("value", &series.values), ("running_average", &running.values)],
        )
    })?;

    let threshold = exp
        .config
        .probes
        .threshold
        .unwrap_or(exp.config.tolerances.phase_uniformity);
    let psd = psd_uniformity_report_with(
        &state,
        spectrum,
        &cfg,
        exp.config.probes.count,
        stage_seed(exp.config.run.seed, "probes"),
        threshold,
    )?;
    out.write_json("psd_report.json", &psd)?;
    timings.mark("psd-probes");

    let predicted = equilibrium_average(&observable, state.populations())?;
    let fluctuation = equilibrium_fluctuation(&observable, state.populations())?;
    let observed_mean = time_mean(&series);
    let observed_var = time_variance(&series);
    let scale = observable.spectral_width();
    let comparison = ComparisonReport {
        time_mean: observed_mean,
        dephased_average: predicted,
        mean_abs_diff: (observed_mean - predicted).abs(),
        observable_scale: scale,
        mean_within_tolerance: (observed_mean - predicted).abs() <= 1e-2 * scale.max(1e-300),
        time_variance: observed_var,
        offdiagonal_fluctuation: fluctuation,
        variance_rel_diff: if fluctuation > 0.0 {
            (observed_var - fluctuation).abs() / fluctuation
        } else {
            f64::NAN
        },
    };
    out.write_json("comparison.json", &comparison)?;
    timings.mark("comparison");

    if exp.config.plots.enable {
        let step = (series.times.len() / 2000).max(1);
        let pick = |vals: &[f64]| -> Vec<(f64, f64)> {
            series
                .times
                .iter()
                .zip(vals)
                .step_by(step)
                .map(|(&t, &v)| (t, v))
                .collect()
        };
        let svg = line_plot(
            "observable trajectory",
            "t",
            "<A>(t)",
            &[
                Series { name: "value", points: pick(&series.values) },
                Series { name: "running avg", points: pick(&running.values) },
            ],
        );
        out.write_svg("timeseries.svg", &svg)?;
        timings.mark("plots");
    }
    println!(
        "evolve: mean diff {:.3e} (scale {:.3e}), variance rel diff {:.3e}, psd max {:.4} ({})",
        comparison.mean_abs_diff,
        scale,
        comparison.variance_rel_diff,
        psd.max_magnitude,
        if psd.pass { "uniform" } else { "non-uniform" }
    );
    Ok(())
}

#[derive(Serialize)]
struct FactorizedDiagnostics {
    kind: String,
    sampler: &'static str,
    n_samples: usize,
    norm_residual_rms: f64,
    energy_residual_rms: Option<f64>,
}

#[derive(Serialize)]
struct ExactDiagnostics<'a> {
    kind: String,
    sampler: &'static str,
    n_samples: usize,
    chain: Option<&'a purestate::ensembles::McmcDiagnostics>,
}

fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    let width = span / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / span) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let total = values.len() as f64;
    let centers = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    (centers, density)
}

pub fn cmd_ensemble(exp: &ResolvedExperiment, out: &mut OutputDir, timings: &mut Timings) -> CmdResult {
    let specs = exp.ensemble_specs()?;
    if specs.is_empty() {
        return Err(CommandError::Config(ConfigError::Invalid(
            "ensemble command needs at least one [[ensemble]] block".into(),
        )));
    }
    let budgets = &exp.config.budgets;
    let chain_cfg = ChainConfig {
        burn_in: budgets.burn_in,
        thinning: budgets.thinning,
        ..ChainConfig::default()
    };
    for (k, (spec, factorized)) in specs.iter().enumerate() {
        let tag = format!("{}_{k}", ensemble_tag(spec.kind()));
        let seed = stage_seed(exp.config.run.seed, &format!("ensemble:{k}"));
        let populations_for_hist: Vec<PopulationSet>;
        if *factorized {
            let mut rng = stream_rng(seed, 0);
            let samples: Vec<_> = (0..budgets.n_samples)
                .map(|_| match spec.kind() {
                    EnsembleKind::Cutoff { .. } => rpse_factorized_sample(spec, &mut rng),
                    EnsembleKind::FixedEnergy { .. } => {
                        purestate::ensembles::feee_factorized_sample(spec, &mut rng)
                    }
                })
                .collect::<purestate::Result<_>>()?;
            out.write_csv(&format!("samples_{tag}.csv"), |w| {
                export::write_factorized_samples_csv(w, &samples)
            })?;
            let n = samples.len() as f64;
            let norm_rms =
                (samples.iter().map(|s| s.norm_residual.powi(2)).sum::<f64>() / n).sqrt();
            let energy_rms = samples
                .first()
                .and_then(|s| s.energy_residual)
                .map(|_| {
                    (samples
                        .iter()
                        .filter_map(|s| s.energy_residual)
                        .map(|r| r * r)
                        .sum::<f64>()
                        / n)
                        .sqrt()
                });
            out.write_json(
                &format!("diagnostics_{tag}.json"),
                &FactorizedDiagnostics {
                    kind: ensemble_tag(spec.kind()),
                    sampler: "factorized",
                    n_samples: samples.len(),
                    norm_residual_rms: norm_rms,
                    energy_residual_rms: energy_rms,
                },
            )?;
            populations_for_hist = samples
                .iter()
                .map(|s| {
                    let total: f64 = s.populations.iter().sum();
                    PopulationSet::new(s.populations.iter().map(|p| p / total).collect())
                })
                .collect::<purestate::Result<_>>()?;
        } else {
            let (samples, diag) = ensemble_samples(spec, budgets.n_samples, seed, &chain_cfg)?;
            out.write_csv(&format!("samples_{tag}.csv"), |w| {
                export::write_samples_csv(w, &samples)
            })?;
            out.write_json(
                &format!("diagnostics_{tag}.json"),
                &ExactDiagnostics {
                    kind: ensemble_tag(spec.kind()),
                    sampler: "exact",
                    n_samples: samples.len(),
                    chain: diag.as_ref(),
                },
            )?;
            populations_for_hist = samples;
        }
        timings.mark(&format!("sample-{tag}"));

        // per-index means, the first thing anyone checks against the law
        let n_levels = exp.spectrum.len();
        let mut means = vec![0.0f64; n_levels];
        for p in &populations_for_hist {
            for (m, v) in means.iter_mut().zip(p.iter()) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= populations_for_hist.len() as f64;
        }
        out.write_csv(&format!("means_{tag}.csv"), |w| {
            use std::io::Write;
            writeln!(w, "index,mean_population")?;
            for (i, m) in means.iter().enumerate() {
                writeln!(w, "{i},{m:.17e}")?;
            }
            Ok(())
        })?;

        for &coord in &budgets.histogram_coordinates {
            if coord >= n_levels {
                return Err(CommandError::Config(ConfigError::Invalid(format!(
                    "histogram coordinate {coord} out of range for {n_levels} levels"
                ))));
            }
            let values: Vec<f64> =
                populations_for_hist.iter().map(|p| p.get(coord)).collect();
            let (centers, density) = histogram(&values, budgets.histogram_bins);
            let name = format!("histogram_{tag}_p{}.csv", coord + 1);
            out.write_csv(&name, |w| export::write_histogram_csv(w, &centers, &density))?;
            if exp.config.plots.enable {
                let svg = line_plot(
                    &format!("marginal of P_{}", coord + 1),
                    &format!("P_{}", coord + 1),
                    "density",
                    &[Series {
                        name: "empirical",
                        points: centers.iter().copied().zip(density.iter().copied()).collect(),
                    }],
                );
                out.write_svg(&format!("histogram_{tag}_p{}.svg", coord + 1), &svg)?;
            }
        }
        timings.mark(&format!("reduce-{tag}"));
        println!(
            "ensemble {tag}: {} samples, mean P_1 = {:.6}",
            populations_for_hist.len(),
            means[0]
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CanonicalComparison {
    fitted_temperature: f64,
    fit_residual: f64,
    at_search_bound: bool,
    unimodal: bool,
    trace_distance_to_fit: f64,
    spectrum_degenerate: bool,
}

fn state_function_for_spec(
    exp: &ResolvedExperiment,
    spec: &EnsembleSpec,
    seed: u64,
) -> Result<StateFunction, purestate::Error> {
    let budgets = &exp.config.budgets;
    let chain_cfg = ChainConfig {
        burn_in: budgets.burn_in,
        thinning: budgets.thinning,
        ..ChainConfig::default()
    };
    let spectrum = spec.spectrum();
    let k = budgets.state_function_points.max(3);
    match spec.kind() {
        EnsembleKind::FixedEnergy { e } => {
            let half = 0.4 * (e - spectrum.min_energy()).min(spectrum.max_energy() - e);
            let grid: Vec<f64> =
                (0..k).map(|j| e - half + 2.0 * half * j as f64 / (k - 1) as f64).collect();
            state_function_feee_with(
                spectrum,
                &grid,
                budgets.state_function_samples,
                seed,
                &FeeeStateSampler::Mcmc(chain_cfg),
            )
        }
        EnsembleKind::Cutoff { .. } => {
            let n = spectrum.len();
            let mut counts: Vec<usize> =
                (0..k).map(|j| 3 + (n - 3) * j / (k - 1).max(1)).collect();
            counts.push(spec.active_count().max(3));
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

pub fn cmd_thermo(exp: &ResolvedExperiment, out: &mut OutputDir, timings: &mut Timings) -> CmdResult {
    let specs = exp.ensemble_specs()?;
    let budgets = &exp.config.budgets;
    let chain_cfg = ChainConfig {
        burn_in: budgets.burn_in,
        thinning: budgets.thinning,
        ..ChainConfig::default()
    };
    let mut failures: Vec<String> = Vec::new();

    for (k, (spec, _)) in specs.iter().enumerate() {
        let tag = format!("{}_{k}", ensemble_tag(spec.kind()));
        let seed = stage_seed(exp.config.run.seed, &format!("thermo:{k}"));

        let stage = (|| -> Result<(), purestate::Error> {
            let f_s = PopulationFunction::entropy_for(spec);
            let f_e = PopulationFunction::energy_for(spec);
            let rs = ensemble_statistics_with(
                &f_s,
                spec,
                budgets.n_samples,
                stage_seed(seed, "entropy"),
                &chain_cfg,
            )?;
            let re = ensemble_statistics_with(
                &f_e,
                spec,
                budgets.n_samples,
                stage_seed(seed, "energy"),
                &chain_cfg,
            )?;
            out.write_json(&format!("typicality_{tag}.json"), &vec![rs, re])
                .map_err(config_to_core)?;
            Ok(())
        })();
        if let Err(e) = stage {
            failures.push(format!("typicality {tag}: {e}"));
        }
        timings.mark(&format!("typicality-{tag}"));

        let stage = (|| -> Result<(), purestate::Error> {
            let sf = state_function_for_spec(exp, spec, stage_seed(seed, "state-function"))?;
            out.write_csv(&format!("state_function_{tag}.csv"), |w| {
                export::write_state_function_csv(w, &sf)
            })
            .map_err(config_to_core)?;
            // temperature along the interior of the curve
            let (lo, hi) = sf.u_range();
            let m = 33;
            let mut rows = Vec::with_capacity(m);
            for j in 0..m {
                let u = lo + (hi - lo) * (j as f64 + 0.5) / m as f64;
                let est = temperature(&sf, u)?;
                rows.push((u, est));
            }
            out.write_csv(&format!("temperature_{tag}.csv"), |w| {
                use std::io::Write;
                writeln!(w, "u,temperature,t_std,ds_du,negative_branch")?;
                for (u, est) in &rows {
                    writeln!(
                        w,
                        "{u:.17e},{:.17e},{:.17e},{:.17e},{}",
                        est.temperature,
                        est.t_std,
                        est.ds_du,
                        u8::from(est.negative)
                    )?;
                }
                Ok(())
            })
            .map_err(config_to_core)?;
            if exp.config.plots.enable {
                let svg = line_plot(
                    &format!("entropy vs energy ({tag})"),
                    "U",
                    "S",
                    &[Series {
                        name: sf.label(),
                        points: sf.points().iter().map(|p| (p.u, p.s_mean)).collect(),
                    }],
                );
                out.write_svg(&format!("state_function_{tag}.svg"), &svg)
                    .map_err(config_to_core)?;
            }
            Ok(())
        })();
        if let Err(e) = stage {
            failures.push(format!("state function {tag}: {e}"));
        }
        timings.mark(&format!("state-function-{tag}"));
    }

    if let Some(scaling) = &exp.config.scaling {
        let stage = (|| -> Result<(), purestate::Error> {
            let family: Vec<EnsembleSpec> = scaling
                .sizes
                .iter()
                .map(|&n| {
                    let s = purestate::spectra::Spectrum::new(
                        (0..n).map(|j| j as f64).collect(),
                    )?;
                    EnsembleSpec::cutoff(s, f64::INFINITY)
                })
                .collect::<purestate::Result<_>>()?;
            let table = purestate::thermo::typicality_scaling(
                PopulationFunction::entropy_for,
                &family,
                scaling.n_samples,
                stage_seed(exp.config.run.seed, "scaling"),
            )?;
            out.write_json("scaling.json", &table).map_err(config_to_core)?;
            out.write_csv("scaling.csv", |w| {
                use std::io::Write;
                writeln!(w, "n,mean,sigma,range,ratio")?;
                for r in &table.rows {
                    writeln!(
                        w,
                        "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                        r.n, r.mean, r.sigma, r.range, r.ratio
                    )?;
                }
                Ok(())
            })
            .map_err(config_to_core)?;
            if exp.config.plots.enable {
                let svg = line_plot(
                    "entropy typicality vs size (log-log)",
                    "ln N",
                    "ln ratio",
                    &[Series {
                        name: "sigma/range",
                        points: table
                            .rows
                            .iter()
                            .filter(|r| r.ratio > 0.0)
                            .map(|r| ((r.n as f64).ln(), r.ratio.ln()))
                            .collect(),
                    }],
                );
                out.write_svg("scaling.svg", &svg).map_err(config_to_core)?;
            }
            Ok(())
        })();
        if let Err(e) = stage {
            failures.push(format!("scaling: {e}"));
        }
        timings.mark("scaling");
    }

    if let Some(model) = &exp.model {
        let stage = (|| -> Result<(), purestate::Error> {
            let Some((spec, _)) = specs.first() else {
                return Ok(());
            };
            let projectors = purestate::states::ReducedEigenProjectors::new(model);
            let (samples, _) = ensemble_samples(
                spec,
                budgets.mu_samples,
                stage_seed(exp.config.run.seed, "thermo:mu"),
                &chain_cfg,
            )?;
            let ds = model.dim_s();
            let mut acc = purestate::linalg::CMatrix::zeros(ds, ds);
            for p in &samples {
                acc += projectors.reduce(p)?.matrix();
            }
            acc /= num_complex::Complex64::new(samples.len() as f64, 0.0);
            let mean_mu = purestate::states::DensityMatrix::new(acc)?;
            let fit = local_temperature_fit(&mean_mu, model.subsystem_hamiltonian())?;
            let reference = if fit.temperature.is_finite() {
                canonical_reference(model.subsystem_hamiltonian(), fit.temperature)?
            } else {
                canonical_reference(model.subsystem_hamiltonian(), f64::INFINITY)?
            };
            let d = trace_distance(&mean_mu, &reference)?;
            out.write_json(
                "canonical.json",
                &CanonicalComparison {
                    fitted_temperature: fit.temperature,
                    fit_residual: fit.residual,
                    at_search_bound: fit.at_search_bound,
                    unimodal: fit.unimodal,
                    trace_distance_to_fit: d,
                    spectrum_degenerate: exp.spectrum.is_degenerate(),
                },
            )
            .map_err(config_to_core)?;
            out.write_csv("mean_reduced_state.csv", |w| {
                export::write_density_csv(w, &mean_mu)
            })
            .map_err(config_to_core)?;
            Ok(())
        })();
        if let Err(e) = stage {
            failures.push(format!("canonical comparison: {e}"));
        }
        timings.mark("canonical");
    }

    if failures.is_empty() {
        println!("thermo: all stages complete");
        Ok(())
    } else {
        let text = failures.join("\n");
        out.write_marker("INCOMPLETE", &text)?;
        eprintln!("thermo: {} stage(s) failed:\n{text}", failures.len());
        Err(CommandError::Numeric(format!("{} thermo stage(s) failed", failures.len())))
    }
}

fn config_to_core(e: ConfigError) -> purestate::Error {
    purestate::Error::InvalidArgument(e.to_string())
}

pub fn cmd_scorecard(exp: &ResolvedExperiment, out: &mut OutputDir, timings: &mut Timings) -> CmdResult {
    let Some(model) = &exp.model else {
        return Err(CommandError::Config(ConfigError::Invalid(
            "scorecard needs an inline spin model (subsystem structure required)".into(),
        )));
    };
    let specs: Vec<EnsembleSpec> =
        exp.ensemble_specs()?.into_iter().map(|(s, _)| s).collect();
    let b = &exp.config.budgets;
    let sc = &exp.config.scorecard;
    let defaults = ScorecardBudgets::default();
    let budgets = ScorecardBudgets {
        n_samples: b.n_samples,
        mu_samples: b.mu_samples,
        state_function_points: b.state_function_points,
        state_function_samples: b.state_function_samples,
        burn_in: b.burn_in,
        thinning: b.thinning,
        typicality_threshold: sc
            .typicality_threshold
            .unwrap_or(exp.config.tolerances.typicality),
        canonical_fit_tolerance: sc
            .canonical_fit_tolerance
            .unwrap_or(defaults.canonical_fit_tolerance),
        temperature_match_tolerance: sc
            .temperature_match_tolerance
            .unwrap_or(defaults.temperature_match_tolerance),
        extensivity_tolerance: sc
            .extensivity_tolerance
            .unwrap_or(defaults.extensivity_tolerance),
    };
    let card = requirement_scorecard(model, &specs, &budgets, exp.config.run.seed)?;
    timings.mark("scorecard");
    out.write_json("scorecard.json", &card)?;
    for (i, entry) in card.entries.iter().enumerate() {
        let status = match entry.status {
            RequirementStatus::Pass => "pass",
            RequirementStatus::Fail => "FAIL",
            RequirementStatus::Indeterminate => "indeterminate",
        };
        println!("requirement {} ({}): {status}", i + 1, entry.requirement);
        for (name, value) in &entry.evidence {
            println!("    {name} = {value:.6}");
        }
    }
    Ok(())
}
