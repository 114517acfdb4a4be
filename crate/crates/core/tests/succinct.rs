use kphf::codec::{Reader, Writer};
use kphf::succinct::elias_fano::lower_width;
use kphf::succinct::golomb_rice::rice_cost;
use kphf::succinct::{BitVec, EliasFanoSeq, GolombRiceSeq, Widths};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

fn serialized_bits(f: impl FnOnce(&mut Writer)) -> u64 {
    let mut w = Writer::new();
    f(&mut w);
    w.into_bytes().len() as u64 * 8
}

fn naive_rank(bits: &[bool], pos: usize) -> usize {
    bits[..pos].iter().filter(|&&b| b).count()
}

fn naive_select(bits: &[bool], rank: usize, value: bool) -> Option<usize> {
    bits.iter().enumerate().filter(|(_, &b)| b == value).nth(rank).map(|(i, _)| i)
}

#[test]
fn bitvec_hand_example() {
    let bv = BitVec::from_bools(&[true, false, true, true, false]);
    assert_eq!(bv.rank1(3), 2);
    assert_eq!(bv.select1(2).unwrap(), 3);
    assert_eq!(bv.rank1(5), 3);
    assert!(bv.select1(3).is_err());
    let zeros = BitVec::from_bools(&[false; 100]);
    assert!(zeros.select1(0).is_err());
}

#[test]
fn bitvec_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for density in [0.01, 0.5, 0.97] {
        let bits: Vec<bool> = (0..100_000).map(|_| rng.random_bool(density)).collect();
        let bv = BitVec::from_bools(&bits);
        let ones: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
        let zeros: Vec<usize> = (0..bits.len()).filter(|&i| !bits[i]).collect();
        assert_eq!(bv.count_ones(), ones.len());
        assert_eq!(bv.rank1(bits.len()), ones.len());
        for _ in 0..10_000 {
            let pos = rng.random_range(0..=bits.len());
            assert_eq!(bv.rank1(pos), ones.partition_point(|&o| o < pos));
            if !ones.is_empty() {
                let r = rng.random_range(0..ones.len());
                assert_eq!(bv.select1(r).unwrap(), ones[r]);
            }
            if !zeros.is_empty() {
                let r = rng.random_range(0..zeros.len());
                assert_eq!(bv.select0(r).unwrap(), zeros[r]);
            }
        }
    }
}

#[test]
fn bitvec_directory_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for len in [1usize << 16, 1 << 18, 1 << 20] {
        for density in [0.001, 0.5, 0.999] {
            let bits: Vec<bool> = (0..len).map(|_| rng.random_bool(density)).collect();
            let bv = BitVec::from_bools(&bits);
            assert!(
                bv.directory_bits() * 4 <= len,
                "len {len} density {density}: {} directory bits",
                bv.directory_bits()
            );
        }
    }
}

#[test]
fn ef_hand_examples() {
    let ef = EliasFanoSeq::new(&[0, 0, 0]).unwrap();
    assert_eq!(ef.low_bits(), 0);
    assert!((0..3).all(|i| ef.access(i).unwrap() == 0));

    let v = [2, 3, 5, 7, 11, 13];
    let ef = EliasFanoSeq::new(&v).unwrap();
    // ⌈log2(13/6)⌉ = 2
    assert_eq!(ef.low_bits(), (13f64 / 6.0).log2().ceil() as u32);
    assert_eq!(ef.iter().collect::<Vec<_>>(), v);

    let ef = EliasFanoSeq::new(&[2, 3, 5, 7]).unwrap();
    assert_eq!(ef.predecessor(6), Ok((2, 5)));
    assert_eq!(ef.predecessor(7), Ok((3, 7)));
    assert_eq!(ef.successor_index(7), 4);
    assert!(ef.predecessor(1).is_err());
    assert!(ef.access(4).is_err());

    assert!(EliasFanoSeq::new(&[3, 2]).is_err());
}

#[test]
fn ef_large_round_trip_and_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000usize;
    let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..1u64 << 40)).collect();
    v.sort_unstable();
    let ef = EliasFanoSeq::new(&v).unwrap();
    assert!(v.iter().enumerate().all(|(i, &x)| ef.get(i) == x));
    let l = lower_width(n, *v.last().unwrap()) as u64;
    assert_eq!(ef.low_bits() as u64, l);
    // header words and word padding of both arrays
    let overhead = 8 * 64;
    assert!(ef.size_bits() <= n as u64 * (2 + l) + overhead, "{} bits", ef.size_bits());
    assert_eq!(ef.size_bits(), serialized_bits(|w| ef.write(w)));
    let bytes = {
        let mut w = Writer::new();
        ef.write(&mut w);
        w.into_bytes()
    };
    let back = EliasFanoSeq::read(&mut Reader::new(&bytes)).unwrap();
    assert_eq!(back, ef);
}

#[test]
fn ef_predecessor_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, universe) in [(1000usize, 1u64 << 30), (5000, 6000), (3000, 100)] {
        let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..universe)).collect();
        v.sort_unstable();
        let ef = EliasFanoSeq::new(&v).unwrap();
        for _ in 0..100_000 / 3 {
            let x = rng.random_range(0..universe + 10);
            let expect = v.iter().rposition(|&a| a <= x);
            assert_eq!(ef.predecessor_index(x), expect, "x = {x}");
            let succ = v.iter().position(|&a| a > x).unwrap_or(n);
            assert_eq!(ef.successor_index(x), succ);
            let lb = v.iter().position(|&a| a >= x).unwrap_or(n);
            assert_eq!(ef.lower_bound(x), lb);
        }
    }
}

#[test]
fn gr_hand_examples() {
    // 5 = 0b101, L = 2: low part "01" (2 bits), high part 1 in unary "01"
    assert_eq!(rice_cost(5, 2), 4);
    assert_eq!(rice_cost(0, 0), 1);
    let gr = GolombRiceSeq::new(&[5], Widths::Uniform(2)).unwrap();
    assert_eq!(gr.payload_bits(), 4);
    let gr = GolombRiceSeq::new(&[0], Widths::Uniform(0)).unwrap();
    assert_eq!(gr.payload_bits(), 1);
}

#[test]
fn gr_mean_cost_near_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for l in [1u32, 3, 6, 10] {
        let p = 2f64.powi(-(l as i32));
        let geo = Geometric::new(p).unwrap();
        let xs: Vec<u64> = (0..10_000).map(|_| geo.sample(&mut rng)).collect();
        let gr = GolombRiceSeq::new(&xs, Widths::Uniform(l)).unwrap();
        let mean = gr.payload_bits() as f64 / xs.len() as f64;
        let h = (-(1.0 - p) * (1.0 - p).log2() - p * p.log2()) / p;
        assert!((mean - h).abs() <= 0.02 * h + 0.5, "L={l}: {mean} bits vs entropy {h}");
        assert!(xs.iter().enumerate().all(|(j, &x)| gr.get(j) == x));
    }
}

#[test]
fn gr_per_entry_cost_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<u64> = (0..5000).map(|_| rng.random_range(0..5000)).collect();
    let ws: Vec<u8> = (0..5000).map(|_| rng.random_range(0..12)).collect();
    let gr = GolombRiceSeq::new(&xs, Widths::PerEntry(ws.clone())).unwrap();
    let expect: u64 = xs.iter().zip(&ws).map(|(&x, &l)| l as u64 + (x >> l) + 1).sum();
    assert_eq!(gr.payload_bits() as u64, expect);
    assert_eq!(gr.size_bits(), serialized_bits(|w| gr.write(w)));
    let mut w = Writer::new();
    gr.write(&mut w);
    let bytes = w.into_bytes();
    let back = GolombRiceSeq::read(&mut Reader::new(&bytes), Some(ws)).unwrap();
    assert_eq!(back.iter().collect::<Vec<_>>(), xs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn ef_round_trips(mut v in prop::collection::vec(0u64..1 << 50, 0..64), small in any::<bool>()) {
        if small {
            v.iter_mut().for_each(|x| *x %= 16);
        }
        v.sort_unstable();
        let ef = EliasFanoSeq::new(&v).unwrap();
        prop_assert_eq!(ef.len(), v.len());
        prop_assert_eq!(ef.iter().collect::<Vec<_>>(), v.clone());
        let mut w = Writer::new();
        ef.write(&mut w);
        let bytes = w.into_bytes();
        prop_assert_eq!(bytes.len() as u64 * 8, ef.size_bits());
        let back = EliasFanoSeq::read(&mut Reader::new(&bytes)).unwrap();
        prop_assert_eq!(back, ef);
    }

    #[test]
    fn gr_round_trips(entries in prop::collection::vec((0u64..1 << 20, 0u8..24), 0..64)) {
        let xs: Vec<u64> = entries.iter().map(|e| e.0).collect();
        let ws: Vec<u8> = entries.iter().map(|e| e.1).collect();
        let gr = GolombRiceSeq::new(&xs, Widths::PerEntry(ws.clone())).unwrap();
        prop_assert_eq!(gr.iter().collect::<Vec<_>>(), xs.clone());
        let mut w = Writer::new();
        gr.write(&mut w);
        let bytes = w.into_bytes();
        let back = GolombRiceSeq::read(&mut Reader::new(&bytes), Some(ws)).unwrap();
        prop_assert_eq!(back.iter().collect::<Vec<_>>(), xs);
    }

    #[test]
    fn bitvec_rank_select(bits in prop::collection::vec(any::<bool>(), 0..2000)) {
        let bv = BitVec::from_bools(&bits);
        for pos in (0..=bits.len()).step_by(7) {
            prop_assert_eq!(bv.rank1(pos), naive_rank(&bits, pos));
        }
        for r in 0..bv.count_ones() {
            prop_assert_eq!(bv.select1(r).ok(), naive_select(&bits, r, true));
        }
        for r in 0..bv.count_zeros() {
            prop_assert_eq!(bv.select0(r).ok(), naive_select(&bits, r, false));
        }
    }
}
