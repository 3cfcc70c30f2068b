use ngb_core::bench::stats::{compute_stats, percentile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nearest rank by the textbook definition: the smallest value whose
/// cumulative share of the sample is at least p percent.
fn oracle(values: &[i64], p: u32) -> i64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    for (i, x) in v.iter().enumerate() {
        if (i + 1) as f64 * 100.0 >= f64::from(p) * n as f64 {
            return *x;
        }
    }
    v[n - 1]
}

#[test]
fn percentiles_match_sort_and_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let values: Vec<i64> = (0..10_000).map(|_| rng.gen_range(50_000..5_000_000)).collect();
    let mut sorted = values.clone();
    sorted.sort_unstable();
    for p in 0..=100 {
        assert_eq!(percentile(&sorted, p).unwrap(), oracle(&values, p), "p{p}");
    }
    let s = compute_stats(&values).unwrap();
    assert_eq!(s.min, sorted[0]);
    assert_eq!(s.max, sorted[9999]);
    assert_eq!(s.p5, oracle(&values, 5));
    assert_eq!(s.p25, oracle(&values, 25));
    assert_eq!(s.median, oracle(&values, 50));
    assert_eq!(s.p75, oracle(&values, 75));
    assert_eq!(s.p95, oracle(&values, 95));
    assert_eq!(s.p99, oracle(&values, 99));
    assert_eq!(s.iqr(), oracle(&values, 75) - oracle(&values, 25));
    let mean = values.iter().map(|&x| x as f64).sum::<f64>() / 1e4;
    assert!((s.mean - mean).abs() < 1e-6 * mean);
}

#[test]
fn odd_sizes_and_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1usize, 2, 3, 7, 99, 101, 1001] {
        let values: Vec<i64> = (0..n).map(|_| rng.gen_range(-5..5)).collect();
        let s = compute_stats(&values).unwrap();
        assert_eq!(s.median, oracle(&values, 50), "n={n}");
        assert_eq!(s.p99, oracle(&values, 99), "n={n}");
    }
}

#[test]
fn empty_input_is_an_error() {
    assert!(compute_stats(&[]).is_err());
    assert!(percentile(&[], 50).is_err());
}
