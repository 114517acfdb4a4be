use kphf::codec::Persist;
use kphf::hash_key;
use kphf::hashing::{tag, Deriver, Key128};
use kphf::phf::{bin_capacity, MkPhf};
use kphf::recsplit::{find_split_seed, leaf_sizes, split_tree_shape, RecSplitConfig, RecSplitMkPhf};

fn keys(n: usize, seed: u64) -> Vec<Key128> {
    (0..n as u64).map(|i| hash_key(&i.to_le_bytes(), seed)).collect()
}

fn histogram(f: &dyn MkPhf, keys: &[Key128]) -> Vec<u32> {
    let mut h = vec![0u32; f.num_bins() as usize];
    for &x in keys {
        h[f.query(x) as usize] += 1;
    }
    h
}

fn assert_minimal(f: &dyn MkPhf, keys: &[Key128]) {
    for (b, &c) in histogram(f, keys).iter().enumerate() {
        assert_eq!(c, bin_capacity(keys.len(), f.k(), b as u64), "bin {b}");
    }
}

/// Binomial pmf P[Bin(n, 1/2) = j], exact in f64 for small n.
fn half_binomial(n: u32, j: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..j {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c / 2f64.powi(n as i32)
}

#[test]
fn tree_shapes() {
    assert!(split_tree_shape(8, 8, 3).is_empty());
    assert_eq!(leaf_sizes(8, 8, 3), vec![8]);
    assert_eq!(split_tree_shape(24, 8, 3), vec![8, 8, 8]);
    assert_eq!(leaf_sizes(25, 8, 3), vec![8, 8, 8, 1]);
    assert!(split_tree_shape(0, 8, 3).is_empty());
    // complete left subtrees: sizes ℓk·2^j
    for s in 0..2000 {
        let leaves = leaf_sizes(s, 10, 2);
        assert_eq!(leaves.iter().sum::<usize>(), s);
        assert!(leaves[..leaves.len() - 1].iter().all(|&l| l == 10), "s={s}: {leaves:?}");
        if s % 10 != 0 {
            assert_eq!(*leaves.last().unwrap(), s % 10);
        }
        if let [l, _] = split_tree_shape(s, 10, 2)[..] {
            if s > 20 {
                assert!((l / 20).is_power_of_two() && l % 20 == 0 && l < s && 2 * l >= s, "s={s} left {l}");
            }
        }
    }
}

#[test]
fn one_child_needs_no_search() {
    let ks = keys(7, 1);
    assert_eq!(find_split_seed(&ks, &[7], &|s| Deriver::new(tag::SPLIT, s), 1), Some(0));
}

#[test]
fn two_key_split_matches_brute_force() {
    let mut total = 0u64;
    let sets = 2000;
    for set in 0..sets {
        let ks = keys(2, 1000 + set);
        let make = |s: u64| Deriver::new(tag::SPLIT, s ^ (set << 32));
        let got = find_split_seed(&ks, &[1, 1], &make, 1 << 20).unwrap();
        let expect = (0..).find(|&s| {
            let d = make(s);
            d.range(ks[0], 2) != d.range(ks[1], 2)
        });
        assert_eq!(Some(got), expect);
        total += got + 1;
    }
    // geometric with p = 1/2: mean 2, sd √2
    let mean = total as f64 / sets as f64;
    assert!((mean - 2.0).abs() <= 3.0 * 2f64.sqrt() / (sets as f64).sqrt(), "mean trials {mean}");
}

#[test]
fn balanced_split_trials_match_binomial() {
    let k = 10u32;
    let p = half_binomial(2 * k, k);
    let expect = 1.0 / p;
    let sd = (1.0 - p).sqrt() / p;
    let sets = 20_000u64;
    let mut total = 0u64;
    for set in 0..sets {
        let ks = keys(2 * k as usize, 50_000 + set);
        let s =
            find_split_seed(&ks, &[k as usize, k as usize], &|s| Deriver::new(tag::SPLIT, s ^ (set << 40)), 1 << 20)
                .unwrap();
        total += s + 1;
    }
    let mean = total as f64 / sets as f64;
    let se = sd / (sets as f64).sqrt();
    println!("(10, 10) split: mean trials {mean:.3}, expected {expect:.3} ± {se:.3}");
    assert!((mean - expect).abs() <= 3.0 * se);
}

#[test]
fn two_bucket_merge_fixture() {
    // n = 20, b = 10 → two buckets; 13 keys in bucket 0, 7 in bucket 1
    let d = Deriver::new(tag::BUCKET, 0);
    let mut zero = Vec::new();
    let mut one = Vec::new();
    for i in 0u64.. {
        let h = hash_key(&i.to_le_bytes(), 31);
        match d.range(h, 2) {
            0 if zero.len() < 13 => zero.push(h),
            1 if one.len() < 7 => one.push(h),
            _ => {}
        }
        if zero.len() == 13 && one.len() == 7 {
            break;
        }
    }
    let ks: Vec<Key128> = zero.iter().chain(&one).copied().collect();
    let f = RecSplitMkPhf::build(&ks, &RecSplitConfig::new(10, 2, 10)).unwrap();
    assert_eq!(f.num_buckets(), 2);
    assert_eq!(histogram(&f, &ks), vec![10, 10]);
    assert!(one.iter().all(|&h| f.query(h) == 1));
    // bucket 0's short leaf of 3 keys joins bin 1
    assert_eq!(zero.iter().filter(|&&h| f.query(h) == 1).count(), 3);
}

#[test]
fn divisible_buckets_have_full_leaves() {
    // n = k: one bucket, one leaf, nothing to store
    let ks = keys(10, 2);
    let f = RecSplitMkPhf::build(&ks, &RecSplitConfig::new(10, 2, 2000)).unwrap();
    assert_eq!(f.stream_bits(), 0);
    assert!(ks.iter().all(|&h| f.query(h) == 0));
}

#[test]
fn million_keys_k10() {
    let ks = keys(1_000_000, 3);
    let f = RecSplitMkPhf::build(&ks, &RecSplitConfig::new(10, 2, 2000)).unwrap();
    assert_minimal(&f, &ks);
    let bpk = f.bits_per_key();
    println!("k=10 b=2000: {bpk:.4} bits/key");
    assert!((bpk - 0.445).abs() <= 0.1 * 0.445, "{bpk}");
    // forward scans for short-leaf keys
    let scans: Vec<u64> = ks.iter().filter_map(|&h| f.scan_length(h)).collect();
    let mean = scans.iter().sum::<u64>() as f64 / scans.len() as f64;
    println!("mean buckets scanned {mean:.3} over {} short-leaf keys", scans.len());
    assert!(mean <= 3.0);
}

#[test]
fn million_keys_k1000() {
    let ks = keys(1_000_000, 4);
    let f = RecSplitMkPhf::build(&ks, &RecSplitConfig::new(1000, 2, 6000)).unwrap();
    assert_minimal(&f, &ks);
    let bpk = f.bits_per_key();
    println!("k=1000 b=6000: {bpk:.4} bits/key");
    assert!((bpk - 0.010).abs() <= 0.004, "{bpk}");
}

#[test]
fn round_trip_and_determinism() {
    let ks = keys(50_000, 5);
    let config = RecSplitConfig::new(10, 2, 2000).seed(8);
    let f = RecSplitMkPhf::build(&ks, &config).unwrap();
    let bytes = f.to_bytes();
    assert_eq!(bytes.len() as u64 * 8, MkPhf::size_bits(&f));
    let g = RecSplitMkPhf::from_bytes(&bytes).unwrap();
    assert!(ks.iter().all(|&h| f.query(h) == g.query(h)));
    assert_eq!(RecSplitMkPhf::build(&ks, &config).unwrap().to_bytes(), bytes);
    for h in keys(1000, 99) {
        assert!(g.query(h) < g.num_bins());
    }
    assert!(RecSplitMkPhf::from_bytes(&bytes[..bytes.len() - 8]).is_err());
}

#[test]
fn minimal_across_parameters() {
    for (n, k, ell, b) in [
        (1usize, 1u32, 2u32, 10usize),
        (99, 1, 4, 8),
        (10_001, 3, 3, 500),
        (20_000, 10, 5, 2000),
        (30_000, 100, 2, 2000),
        (7_777, 7, 2, 13),
    ] {
        let ks = keys(n, 6 + n as u64);
        let f = RecSplitMkPhf::build(&ks, &RecSplitConfig::new(k, ell, b)).unwrap();
        assert_minimal(&f, &ks);
    }
}
