use kphf::threshold_opt::gamma::GammaDensity;
use kphf::threshold_opt::{
    asymptotic_density, asymptotic_thresholds, expected_empty_slots, expected_empty_slots_closed_form,
    optimal_thresholds, order_stat_density, recurrence_residuals, ThresholdVector,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

/// Composite Simpson rule with n (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// P(a, x) by the plain positive-term series x^a e^{−x}/Γ(a+1) Σ x^n/((a+1)…(a+n)).
fn series_cdf(a: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    while term > sum * 1e-17 {
        term *= x / (a + n);
        sum += term;
        n += 1.0;
    }
    (a * x.ln() - x - ln_gamma(a + 1.0)).exp() * sum
}

/// Expected empty slots by direct simulation of bins: Poisson(γk) uniform
/// fingerprints; the bin keeps all keys ≤ the largest threshold below x_{k+1}.
/// Returns (mean, standard error).
fn monte_carlo_empty(tv: &ThresholdVector, bins: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = tv.k as usize;
    let pois = Poisson::new(tv.gamma * k as f64).unwrap();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut fps = Vec::new();
    for _ in 0..bins {
        let size = pois.sample(&mut rng) as usize;
        fps.clear();
        fps.extend((0..size).map(|_| 1.0 - rng.random::<f64>()));
        let kept = if size <= k {
            size
        } else {
            fps.select_nth_unstable_by(k, f64::total_cmp);
            let x = fps[k];
            let th = tv.thresholds.iter().copied().filter(|&t| t < x).fold(0.0, f64::max);
            fps.iter().filter(|&&f| f <= th).count()
        };
        let empty = (k - kept) as f64;
        sum += empty;
        sum_sq += empty * empty;
    }
    let mean = sum / bins as f64;
    let var = sum_sq / bins as f64 - mean * mean;
    (mean, (var / bins as f64).sqrt())
}

#[test]
fn gamma_special_cases() {
    let exp = GammaDensity::new(1.0, 1.0);
    assert!((exp.pdf(0.0) - 1.0).abs() < 1e-15);
    for x in [0.1, 1.0, 3.0, 10.0] {
        assert!((exp.cdf(x) - (1.0 - (-x as f64).exp())).abs() < 1e-14);
    }
    assert!((exp.cdf(1.0) - 0.63212).abs() < 1e-5);
    let g2 = GammaDensity::new(2.0, 1.0);
    for x in [0.5, 1.0, 2.0, 7.0] {
        assert!((g2.pdf(x) - x * (-x as f64).exp()).abs() < 1e-14);
    }
    assert!(g2.pdf(1.0) > g2.pdf(0.99) && g2.pdf(1.0) > g2.pdf(1.01));
}

#[test]
fn gamma_mean_and_mass_by_quadrature() {
    let d = GammaDensity::new(101.0, 120.0);
    let mass = simpson(|x| d.pdf(x), 0.0, 3.0, 20_000);
    assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    let mean = simpson(|x| x * d.pdf(x), 0.0, 3.0, 20_000);
    assert!((mean - 101.0 / 120.0).abs() < 1e-9, "mean {mean}");
    for (shape, rate) in [(1.0, 1.0), (11.0, 20.0), (1001.0, 1200.0)] {
        let d = GammaDensity::new(shape, rate);
        let hi = (shape + 40.0 * shape.sqrt() + 40.0) / rate;
        let mass = simpson(|x| d.pdf(x), 0.0, hi, 200_000);
        assert!((mass - 1.0).abs() < 1e-9, "shape {shape}: mass {mass}");
    }
}

#[test]
fn gamma_cdf_matches_series_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let a = rng.random_range(0.5..60.0);
        let x = rng.random_range(0.01..(2.0 * a + 10.0));
        let reference = series_cdf(a, x);
        let d = GammaDensity::new(a, 1.0);
        let got = d.cdf(x);
        assert!((got - reference).abs() <= 1e-10 * reference, "a={a} x={x}: {got} vs {reference}");
        let pdf_ref = ((a - 1.0) * x.ln() - x - ln_gamma(a)).exp();
        assert!((d.pdf(x) - pdf_ref).abs() <= 1e-10 * pdf_ref);
    }
}

#[test]
fn trivial_and_invalid_arguments() {
    assert_eq!(optimal_thresholds(7, 1.5, 2).unwrap().thresholds, vec![0.0, 1.0]);
    assert_eq!(asymptotic_thresholds(7, 1.5, 2).unwrap().thresholds, vec![0.0, 1.0]);
    assert!(optimal_thresholds(0, 2.0, 8).is_err());
    assert!(optimal_thresholds(10, 1.0, 8).is_err());
    assert!(optimal_thresholds(10, 2.0, 1).is_err());
}

#[test]
fn vectors_are_valid_with_small_residuals() {
    for (k, g, t) in [(1, 2.0, 8), (10, 2.0, 32), (10, 2.0, 16), (100, 1.2, 64), (100, 1.2, 128), (1000, 1.2, 512)] {
        let tv = optimal_thresholds(k, g, t).unwrap();
        assert!(tv.is_valid(), "k={k} γ={g} t={t}");
        assert_eq!(tv.t(), t);
        let worst = recurrence_residuals(&tv).into_iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst <= 1e-6, "k={k} γ={g} t={t}: residual {worst:e}");
        let asym = asymptotic_thresholds(k, g, t).unwrap();
        assert!(asym.is_valid());
    }
}

#[test]
fn deterministic() {
    let a = optimal_thresholds(100, 1.2, 64).unwrap();
    let b = optimal_thresholds(100, 1.2, 64).unwrap();
    assert!(a.thresholds.iter().zip(&b.thresholds).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn two_thresholds_objective() {
    // T = [0, 1]: a bin with x_{k+1} ≤ 1 keeps nothing (k empty slots), one with
    // x_{k+1} > 1 keeps everything; so k·Φ(1) plus the under-full tail.
    for (k, g) in [(10u32, 2.0), (100, 1.2)] {
        let tv = optimal_thresholds(k, g, 2).unwrap();
        let phi = order_stat_density(k, g);
        let kf = k as f64;
        let tail = simpson(|s| kf * (s - 1.0) / s * phi.pdf(s), 1.0, 10.0, 200_000);
        let expect = kf * phi.cdf(1.0) + tail;
        let e = expected_empty_slots(&tv);
        assert!((e - expect).abs() < 1e-8, "k={k}: {e} vs {expect}");
    }
}

#[test]
fn objective_quadrature_matches_closed_form() {
    for (k, g, t) in [(10, 2.0, 32), (100, 1.2, 64), (1000, 1.2, 64)] {
        let tv = optimal_thresholds(k, g, t).unwrap();
        let a = expected_empty_slots(&tv);
        let b = expected_empty_slots_closed_form(&tv);
        assert!((a - b).abs() < 1e-8, "k={k}: {a} vs {b}");
    }
}

#[test]
fn objective_non_increasing_in_t() {
    for (k, g) in [(10u32, 2.0), (100, 1.2)] {
        let es: Vec<f64> = (1..=9).map(|p| expected_empty_slots(&optimal_thresholds(k, g, 1 << p).unwrap())).collect();
        assert!(es.windows(2).all(|w| w[1] <= w[0] + 1e-12), "k={k}: {es:?}");
    }
}

#[test]
fn objective_matches_monte_carlo() {
    let tv = optimal_thresholds(10, 2.0, 32).unwrap();
    let e = expected_empty_slots(&tv);
    let (mean, se) = monte_carlo_empty(&tv, 1_000_000, 12);
    assert!((mean - e).abs() <= 3.0 * se, "MC {mean} ± {se} vs {e}");
}

#[test]
fn asymptotic_histogram_matches_density() {
    let (k, g, t) = (10u32, 2.0, 4096usize);
    let tv = asymptotic_thresholds(k, g, t).unwrap();
    let d = asymptotic_density(k, g);
    let norm = d.cdf(1.0);
    let cells = 64;
    let width = 1.0 / cells as f64;
    let mut hist = vec![0usize; cells];
    for &x in &tv.thresholds[1..t - 1] {
        hist[((x / width) as usize).min(cells - 1)] += 1;
    }
    let peak = (0..1000).map(|i| d.pdf(i as f64 / 1000.0) / norm).fold(0.0, f64::max);
    for (c, &count) in hist.iter().enumerate() {
        let empirical = count as f64 / ((t - 1) as f64 * width);
        let lo = c as f64 * width;
        let expected = (d.cdf(lo + width) - d.cdf(lo)) / norm / width;
        assert!((empirical - expected).abs() <= 0.02 * peak, "cell {c}: {empirical} vs {expected}");
    }
}
