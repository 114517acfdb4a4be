use kphf::bucket_opt::{beta_curve, curves, model_point, pk_curve, pk_integro_check, CurveTable, DEFAULT_GRID};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The insertion model run literally: bins are sampled uniformly, every sample
/// increments the bin's counter, and a sample succeeds while the counter was
/// below k. Returns the empirical success probability when the inserted
/// fraction first reaches each target.
fn simulate(k: u32, bins: usize, targets: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = vec![0u32; bins];
    let mut below = bins; // bins with counter < k
    let mut inserted = 0u64;
    let total = k as u64 * bins as u64;
    let mut out = Vec::new();
    for &x in targets {
        let goal = (x * total as f64).round() as u64;
        while inserted < goal {
            let c = &mut counters[rng.random_range(0..bins)];
            if *c < k {
                inserted += 1;
                if *c + 1 == k {
                    below -= 1;
                }
            }
            *c += 1;
        }
        out.push(below as f64 / bins as f64);
    }
    out
}

fn poisson_min_mean(k: u32, mu: f64) -> f64 {
    // E[min(X, k)] by summing the pmf
    let mut pmf = (-mu).exp();
    let mut below = 0.0;
    let mut mass = 0.0;
    for j in 0..k {
        below += j as f64 * pmf;
        mass += pmf;
        pmf *= mu / (j + 1) as f64;
    }
    below + k as f64 * (1.0 - mass)
}

fn sup_norm(a: &CurveTable, b: &CurveTable, upto: f64) -> f64 {
    a.xs().zip(a.ys()).filter(|(x, _)| *x <= upto).map(|(x, y)| (y - b.eval(x)).abs()).fold(0.0, f64::max)
}

#[test]
fn model_point_matches_direct_sums() {
    assert_eq!(model_point(3, 0.0), (0.0, 1.0, 0.0));
    for k in [1u32, 2, 5, 10, 40] {
        for mu in [0.01, 0.5, 1.0, 3.0, k as f64, 2.0 * k as f64 + 5.0] {
            let (x, gap, ln_p) = model_point(k, mu);
            let expect = poisson_min_mean(k, mu) / k as f64;
            assert!((x - expect).abs() < 1e-12, "k={k} μ={mu}: {x} vs {expect}");
            assert!((x + gap - 1.0).abs() < 1e-12);
            // p = P[X ≤ k−1]
            let mut pmf = (-mu).exp();
            let mut p = 0.0;
            for j in 0..k {
                p += pmf;
                pmf *= mu / (j + 1) as f64;
            }
            assert!((ln_p.exp() - p).abs() < 1e-12);
        }
    }
}

#[test]
fn k_one_closed_forms() {
    let (pk, beta) = curves(1, DEFAULT_GRID).unwrap();
    for (x, p) in pk.xs().zip(pk.ys()) {
        assert!((p - (1.0 - x)).abs() <= 1e-6, "p_1({x}) = {p}");
    }
    for i in 0..=999 {
        let x = i as f64 / 1000.0;
        let exact = x + (1.0 - x) * (1.0 - x).ln();
        assert!((beta.eval(x) - exact).abs() <= 1e-4, "β_1({x})");
    }
}

#[test]
fn pk_matches_simulation() {
    let bins = 1_000_000;
    let xs = [0.25, 0.5, 0.75, 0.95];
    for k in [1u32, 2, 4, 10] {
        let pk = pk_curve(k, DEFAULT_GRID).unwrap();
        let sim = simulate(k, bins, &xs, k as u64);
        for (&x, &p_sim) in xs.iter().zip(&sim) {
            let p = pk.eval(x);
            let sigma = (p * (1.0 - p) / bins as f64).sqrt();
            assert!((p - p_sim).abs() <= 3.0 * sigma, "k={k} x={x}: model {p} vs sim {p_sim} (σ {sigma:e})");
        }
    }
}

#[test]
fn curves_have_the_required_shape() {
    for k in [1u32, 3, 10, 100, 1000] {
        let (pk, beta) = curves(k, 1024).unwrap();
        let p = pk.ys();
        let b = beta.ys();
        assert_eq!(p[0], 1.0);
        assert!(p.windows(2).all(|w| w[1] <= w[0]), "p_{k} increasing somewhere");
        assert!(*p.last().unwrap() > 0.0 && *p.last().unwrap() < 1.0);
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 1.0);
        assert!(b.windows(2).all(|w| w[1] >= w[0]));
        // β' ∝ ln p grows in magnitude as p falls: forward differences non-decreasing
        let d: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-12), "β_{k} not convex");
    }
}

#[test]
fn larger_k_is_more_aggressive() {
    let b1 = beta_curve(1, 1024).unwrap();
    let b10 = beta_curve(10, 1024).unwrap();
    let b100 = beta_curve(100, 1024).unwrap();
    for i in 1..1024 {
        let (x, y1, y10, y100) = (i as f64 / 1024.0, b1.ys()[i], b10.ys()[i], b100.ys()[i]);
        assert!(y1 >= y10 && y10 >= y100, "x={x}: {y1} {y10} {y100}");
    }
}

#[test]
fn most_keys_go_to_few_buckets_at_k_100() {
    let beta = beta_curve(100, DEFAULT_GRID).unwrap();
    // smallest x with β_100(x) ≥ 0.01
    let x = beta.xs().zip(beta.ys()).find(|(_, &y)| y >= 0.01).unwrap().0;
    assert!(x >= 0.80, "β_100 reaches 1% of buckets at x = {x}");
}

#[test]
fn euler_check_agrees_for_small_k() {
    let euler = pk_integro_check(1, 100_000).unwrap();
    for (x, p) in euler.xs().zip(euler.ys()).filter(|(x, _)| *x <= 0.9) {
        assert!((p - (1.0 - x)).abs() <= 1e-4, "x={x}");
    }
    for k in [2u32, 3, 4] {
        let euler = pk_integro_check(k, 100_000).unwrap();
        let stable = pk_curve(k, DEFAULT_GRID).unwrap();
        let d = sup_norm(&euler, &stable, 0.9);
        assert!(d <= 1e-3, "k={k}: sup-norm {d}");
    }
}

#[test]
fn stable_method_holds_at_large_k() {
    // The Euler iteration is the method known to degrade for large k; the
    // μ-parametrized curve must stay valid there and match the simulation.
    let k = 64;
    let stable = pk_curve(k, DEFAULT_GRID).unwrap();
    assert!(stable.ys().windows(2).all(|w| w[1] <= w[0]));
    let bins = 200_000;
    let xs = [0.5, 0.9];
    let sim = simulate(k, bins, &xs, 64);
    for (&x, &p_sim) in xs.iter().zip(&sim) {
        let p = stable.eval(x);
        let sigma = (p * (1.0 - p) / bins as f64).sqrt();
        assert!((p - p_sim).abs() <= 3.0 * sigma, "x={x}: {p} vs {p_sim}");
    }
    match pk_integro_check(k, 100_000) {
        Err(e) => println!("Euler iteration at k={k}: {e}"),
        Ok(euler) => println!("Euler iteration at k={k}: sup-norm {:e} on [0, 0.9]", sup_norm(&euler, &stable, 0.9)),
    }
}

#[test]
fn invalid_arguments() {
    assert!(pk_curve(0, 16).is_err());
    assert!(beta_curve(3, 1).is_err());
}
