//! Long-window trajectory statistics against their dephasing predictions.

use purestate::dynamics::{
    average_density, observable_timeseries, reduced_density_timeseries, running_time_average,
    time_mean, time_variance, TimeSampling, TrajectoryConfig,
};
use purestate::rng::stream_rng;
use purestate::spectra::{build_spin_model, CouplingForm, SpinCoupling, Spectrum};
use purestate::states::{
    equilibrium_average, equilibrium_fluctuation, equilibrium_reduced_density, Observable,
    PopulationSet, PureState,
};
use purestate::thermo::trace_distance;

// pairwise-irrational level spacings: no integer combination of gaps wipes
// out a phase, so every off-diagonal term dephases
fn surd_spectrum() -> Spectrum {
    Spectrum::new(vec![
        1.0,
        2f64.sqrt(),
        3f64.sqrt(),
        5f64.sqrt(),
        7f64.sqrt(),
        11f64.sqrt(),
    ])
    .unwrap()
}

fn probe_setup() -> (Spectrum, PureState, Observable) {
    let s = surd_spectrum();
    let mut rng = stream_rng(402, 0);
    let p = PopulationSet::new(vec![0.25, 0.2, 0.18, 0.15, 0.12, 0.1]).unwrap();
    let state = PureState::with_random_phases(p, &mut rng);
    let a = Observable::random(6, &mut rng);
    (s, state, a)
}

#[test]
fn long_time_average_matches_dephased_prediction() {
    let (s, state, a) = probe_setup();
    let cfg = TrajectoryConfig::uniform(0.0, 1.0e4, 20_001).unwrap();
    let series = observable_timeseries(&a, &state, &s, &cfg).unwrap();
    let observed = time_mean(&series);
    let predicted = equilibrium_average(&a, state.populations()).unwrap();
    let scale = a.spectral_width();
    assert!(
        (observed - predicted).abs() <= 1e-2 * scale,
        "time mean {observed} vs dephased {predicted} (scale {scale})"
    );
}

#[test]
fn long_time_variance_matches_offdiagonal_sum() {
    let (s, state, a) = probe_setup();
    // random sampling is alias-free, so no uniform-grid beat can fake a
    // vanishing variance
    let cfg =
        TrajectoryConfig::new(0.0, 1.0e4, 40_000, TimeSampling::Random { seed: 17 }).unwrap();
    let series = observable_timeseries(&a, &state, &s, &cfg).unwrap();
    let observed = time_variance(&series);
    let predicted = equilibrium_fluctuation(&a, state.populations()).unwrap();
    assert!(predicted > 0.0);
    assert!(
        (observed - predicted).abs() <= 0.05 * predicted,
        "time variance {observed} vs off-diagonal sum {predicted}"
    );
}

#[test]
fn finite_window_bias_decays_like_one_over_t() {
    let (s, state, a) = probe_setup();
    let predicted = equilibrium_average(&a, state.populations()).unwrap();
    // one fixed-step grid long enough for both windows, far below any
    // sampling beat (h * max gap << 2 pi)
    let h = 0.01;
    let t_hi = 2200.0;
    let n = (t_hi / h) as usize + 1;
    let cfg = TrajectoryConfig::uniform(0.0, t_hi, n).unwrap();
    let series = observable_timeseries(&a, &state, &s, &cfg).unwrap();
    let running = running_time_average(&series);
    // envelope of |bias| around each window, to step over accidental zeros
    // of the oscillatory error
    let band_error = |t_center: f64| -> f64 {
        let half = 0.1 * t_center;
        let lo = ((t_center - half) / h) as usize;
        let hi = ((t_center + half) / h) as usize;
        let m = 32;
        (0..m)
            .map(|j| {
                let k = lo + (hi - lo) * j / (m - 1);
                (running.values[k] - predicted).abs()
            })
            .sum::<f64>()
            / m as f64
    };
    let err_short = band_error(200.0);
    let err_long = band_error(2000.0);
    let slope = (err_long / err_short).ln() / 10f64.ln();
    assert!(
        (-1.3..=-0.7).contains(&slope),
        "bias slope {slope} (errors {err_short} -> {err_long})"
    );
}

#[test]
fn reduced_trajectory_average_matches_equilibrium_projection() {
    let fields = [0.93, 1.21, 0.78, 1.07, 0.64, 1.33];
    let couplings = vec![
        SpinCoupling { i: 0, j: 1, strength: 0.061 },
        SpinCoupling { i: 1, j: 2, strength: 0.043 },
        SpinCoupling { i: 2, j: 3, strength: 0.057 },
        SpinCoupling { i: 3, j: 4, strength: 0.049 },
        SpinCoupling { i: 4, j: 5, strength: 0.066 },
        SpinCoupling { i: 0, j: 3, strength: 0.021 },
    ];
    let model =
        build_spin_model(6, &fields, &couplings, CouplingForm::Heisenberg, 3).unwrap();
    let spectrum = model.spectrum();
    assert!(!spectrum.is_degenerate(), "test needs a non-degenerate spectrum");
    let min_gap = spectrum.min_gap().expect("non-degenerate spectrum has a gap");

    let mut rng = stream_rng(404, 0);
    let raw: Vec<f64> = (0..spectrum.len()).map(|_| rng.gen_range(0.05..1.0f64)).collect();
    let total: f64 = raw.iter().sum();
    let p = PopulationSet::new(raw.into_iter().map(|x| x / total).collect()).unwrap();
    let state = PureState::with_random_phases(p.clone(), &mut rng);

    let t_end = 1000.0 / min_gap;
    let cfg =
        TrajectoryConfig::new(0.0, t_end, 4000, TimeSampling::Random { seed: 5 }).unwrap();
    let series = reduced_density_timeseries(&state, &model, &cfg).unwrap();
    let averaged = average_density(&series).unwrap();
    let predicted = equilibrium_reduced_density(&p, &model).unwrap();
    let d = trace_distance(&averaged, &predicted).unwrap();
    assert!(d <= 1e-2, "trace distance {d} between trajectory average and projection");
}

use rand::Rng;
