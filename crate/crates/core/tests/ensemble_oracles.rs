//! Distributional checks of the samplers against closed-form laws.

use purestate::ensembles::{
    feee_sample_mcmc, rpse_factorized_sample, rpse_sample_batch, ChainConfig, EnsembleSpec,
};
use purestate::rng::stream_rng;
use purestate::spectra::Spectrum;
use purestate::states::entropy_of;

fn linear_spectrum(n: usize) -> Spectrum {
    Spectrum::new((0..n).map(|k| k as f64).collect()).unwrap()
}

/// Kolmogorov-Smirnov distance between samples and a reference CDF.
fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[test]
fn flat_simplex_marginal_follows_the_beta_law() {
    // one coordinate of a uniform point on the (n-1)-simplex has
    // CDF 1 - (1-x)^(n-1)
    let n_levels = 64usize;
    let spec = EnsembleSpec::cutoff(linear_spectrum(n_levels), f64::INFINITY).unwrap();
    let samples = rpse_sample_batch(&spec, 20_000, 71).unwrap();
    for coord in [0usize, 17, 63] {
        let mut values: Vec<f64> = samples.iter().map(|p| p.get(coord)).collect();
        let d = ks_distance(&mut values, |x| 1.0 - (1.0 - x).powi(n_levels as i32 - 1));
        assert!(d <= 0.02, "KS distance {d} for coordinate {coord}");
    }
}

#[test]
fn factorized_marginal_follows_the_exponential_law() {
    let n_levels = 64usize;
    let spec = EnsembleSpec::cutoff(linear_spectrum(n_levels), f64::INFINITY).unwrap();
    let mut rng = stream_rng(73, 0);
    let mut values = Vec::with_capacity(20_000);
    let mut residual_rms = 0.0f64;
    for _ in 0..20_000 {
        let s = rpse_factorized_sample(&spec, &mut rng).unwrap();
        values.push(s.populations[3]);
        residual_rms += s.norm_residual * s.norm_residual;
    }
    residual_rms = (residual_rms / 20_000.0).sqrt();
    let rate = n_levels as f64;
    let d = ks_distance(&mut values, |x| 1.0 - (-rate * x).exp());
    assert!(d <= 0.02, "KS distance {d} against the exponential law");
    // norm residual spread shrinks like 1/sqrt(n)
    let expected = 1.0 / rate.sqrt();
    assert!(
        (residual_rms - expected).abs() <= 0.1 * expected,
        "residual rms {residual_rms} vs {expected}"
    );
}

#[test]
fn chain_statistics_are_seed_stable() {
    let s = Spectrum::new(vec![0.0, 0.41, 1.03, 1.62, 2.3]).unwrap();
    let spec = EnsembleSpec::fixed_energy(s, 0.9).unwrap();
    let cfg = ChainConfig::default();
    let mut stats = Vec::new();
    for seed in [101u64, 909] {
        let chain = feee_sample_mcmc(&spec, 6000, seed, &cfg).unwrap();
        assert!(chain.diagnostics.mixing_ok, "seed {seed} failed to mix");
        let entropies: Vec<f64> =
            chain.samples.iter().map(|p| entropy_of(p.as_slice())).collect();
        let n = entropies.len() as f64;
        let mean = entropies.iter().sum::<f64>() / n;
        let var =
            entropies.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        // the chain is correlated: scale the error bar by the effective
        // sample count, not the raw draw count
        let se = (var / chain.diagnostics.effective_sample_size).sqrt();
        stats.push((mean, se));
    }
    let gap = (stats[0].0 - stats[1].0).abs();
    let bound = 6.0 * (stats[0].1.powi(2) + stats[1].1.powi(2)).sqrt();
    assert!(gap <= bound, "seed disagreement {gap} exceeds {bound}");
}
