use divlab::arith::{build_factor_table, sieve_primes, PrimeWindow};
use divlab::divgraph::{assemble_dense, delta_a2_delta, plant_multiple, OperatorSpec, SupportMask};
use divlab::spectral::*;
use nalgebra::DMatrix;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_primes() -> PrimeWindow {
    PrimeWindow::from_primes(7, 13, vec![7, 11, 13]).unwrap()
}

fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = rng.random::<f64>() * 2.0 - 1.0;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

#[test]
fn two_by_two_swap() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let r = extreme_eigenvalues(&m, 2, 1).unwrap();
    let mut v = r.eigenvalues.clone();
    v.sort_by(f64::total_cmp);
    assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    assert!(r.complete);
}

#[test]
fn count_zero_is_rejected() {
    let m = DMatrix::<f64>::identity(3, 3);
    assert!(extreme_eigenvalues(&m, 0, 1).is_err());
}

#[test]
fn lanczos_matches_dense_spectrum() {
    let pw = sieve_primes(5, 60).unwrap();
    for (start, len) in [(10_000u64, 600u64), (2_000_000, 1000)] {
        let t = build_factor_table(start, len, &pw).unwrap();
        let spec = OperatorSpec::full(t, pw.clone());
        let dense = dense_spectrum(&assemble_dense(&spec).unwrap()).unwrap();
        let r = extreme_eigenvalues(&spec, 4, 7).unwrap();
        let mut by_mag = dense.clone();
        by_mag.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        for (i, lam) in r.eigenvalues.iter().enumerate() {
            if r.converged[i] {
                assert!(dense.iter().any(|d| (d - lam).abs() <= 1e-8 * d.abs().max(1.0)));
            }
        }
        assert!(r.converged[0]);
        assert!((r.eigenvalues[0].abs() - by_mag[0].abs()).abs() <= 1e-8 * by_mag[0].abs().max(1.0));
        for (res, lam) in r.residuals.iter().zip(&r.eigenvalues) {
            if res <= &(1e-8 * lam.abs().max(1.0)) {
                continue;
            }
            assert!(!r.complete);
        }
    }
}

#[test]
fn lanczos_is_deterministic() {
    let pw = sieve_primes(11, 101).unwrap();
    let t = build_factor_table(1_000_000, 3000, &pw).unwrap();
    let spec = OperatorSpec::full(t, pw);
    let a = extreme_eigenvalues(&spec, 3, 42).unwrap();
    let b = extreme_eigenvalues(&spec, 3, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn planted_heavy_vertex_forces_a_large_eigenvalue() {
    let pw = sieve_primes(11, 101).unwrap();
    let n0 = plant_multiple(&[11, 13, 17, 19, 23], 1_000_000, 2_000_000).unwrap();
    let t = build_factor_table(n0 - 400, 800, &pw).unwrap();
    let i0 = t.index_of(n0).unwrap();
    let spec = OperatorSpec::full(t, pw.clone());
    let q = delta_a2_delta(&spec, i0).to_f64().unwrap();
    let k = 4.0;
    let r = extreme_eigenvalues(&spec, 1, 3).unwrap();
    assert!(r.spectral_radius() >= q.sqrt() - 1e-9);
    assert!(q.sqrt() > ((k - 2.0) * pw.mertens_f64()).sqrt());
}

#[test]
fn dense_spectrum_examples() {
    let id = DMatrix::<f64>::identity(3, 3);
    assert_eq!(dense_spectrum(&id).unwrap(), vec![1.0, 1.0, 1.0]);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
    let v = dense_spectrum(&d).unwrap();
    for (a, b) in v.iter().zip([1.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    let m = random_symmetric(200, 5);
    let s: f64 = dense_spectrum(&m).unwrap().iter().sum();
    assert!(close_rel(s, m.trace(), 1e-9));
    let big = DMatrix::<f64>::zeros(4097, 4097);
    assert!(dense_spectrum(&big).is_err());
}

#[test]
fn dense_power_examples() {
    let z = DMatrix::<f64>::zeros(5, 5);
    assert_eq!(trace_dense_power(&z, 3).unwrap().value, 0.0);
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(trace_dense_power(&m, 1).unwrap().value, 2.0);
    assert_eq!(trace_dense_power(&m, 5).unwrap().value, 2.0);
}

#[test]
fn walk_sum_single_prime() {
    let pw = PrimeWindow::from_primes(7, 7, vec![7]).unwrap();
    let t = build_factor_table(100, 60, &pw).unwrap();
    let spec = OperatorSpec::full(t.clone(), pw);
    let mut hand = 0.0;
    for i in 0..60usize {
        let n = t.n_at(i);
        let w: f64 = if n % 7 == 0 { 6.0 / 7.0 } else { -1.0 / 7.0 };
        if i >= 7 {
            hand += w * w;
        }
        if i + 7 < 60 {
            hand += w * w;
        }
    }
    let got = trace_walk_sum(&spec, 1).unwrap().value;
    assert!(close_rel(got, hand, 1e-12));
}

#[test]
fn walk_sum_empty_support() {
    let pw = three_primes();
    let t = build_factor_table(1000, 100, &pw).unwrap();
    let spec = OperatorSpec::new(t, pw, SupportMask::empty(1000, 100)).unwrap();
    assert_eq!(trace_walk_sum(&spec, 2).unwrap().value, 0.0);
}

#[test]
fn walk_sum_budget() {
    let pw = sieve_primes(11, 101).unwrap();
    let t = build_factor_table(1000, 100, &pw).unwrap();
    let spec = OperatorSpec::full(t, pw);
    assert!(matches!(trace_walk_sum(&spec, 3), Err(divlab::DivlabError::Capacity(_))));
}

#[test]
fn three_trace_routes_agree() {
    let pw = three_primes();
    let t = build_factor_table(10_000, 400, &pw).unwrap();
    let mask = SupportMask::from_fn(10_000, 400, |i| i % 11 != 4);
    let spec = OperatorSpec::new(t, pw, mask).unwrap();
    let m = assemble_dense(&spec).unwrap();
    for k in 1..=3 {
        let d = trace_dense_power(&m, k).unwrap().value;
        let w = trace_walk_sum(&spec, k).unwrap().value;
        assert!(close_rel(d, w, 1e-9), "k = {k}: {d} vs {w}");
        let s = trace_stochastic(&spec, k, 400, 9).unwrap();
        assert!((s.value - d).abs() <= 5.0 * s.std_error.unwrap());
    }
}

#[test]
fn stochastic_closed_forms() {
    let d = DiagonalOp(vec![1.0, -2.0, 0.5, 3.0]);
    let r = trace_stochastic(&d, 2, 64, 1).unwrap();
    // Rademacher probes are exact on diagonal operators.
    assert!((r.value - (1.0 + 16.0 + 0.0625 + 81.0)).abs() < 1e-12);
    let z = DiagonalOp(vec![0.0; 10]);
    let r = trace_stochastic(&z, 3, 8, 1).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(trace_stochastic(&z, 3, 7, 1).is_err());
}

#[test]
fn restriction_does_not_increase_norm() {
    let pw = sieve_primes(5, 40).unwrap();
    let t = build_factor_table(50_000, 500, &pw).unwrap();
    let spec = OperatorSpec::full(t, pw);
    let m = assemble_dense(&spec).unwrap();
    let full = spectral_radius_dense(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut prev = SupportMask::full(0, 500);
    let mut prev_norm = full;
    for _ in 0..10 {
        let mut next = prev.clone();
        for _ in 0..30 {
            next.set(rng.random_range(0..500), false);
        }
        let r = spectral_radius_dense(&restrict_dense(&m, &next).unwrap());
        assert!(r <= prev_norm + 1e-9);
        prev = next;
        prev_norm = r;
    }
}

#[test]
fn extraction_alpha_above_row_sum() {
    let m = random_symmetric(50, 1);
    let (l, _) = row_sum_and_bandwidth(&m);
    let mask = extract_exceptional_intervals(&m, l * 1.01, 50, l).unwrap();
    assert_eq!(mask.count(), 50);
}

#[test]
fn extraction_catches_planted_block() {
    let mut m = DMatrix::<f64>::zeros(200, 200);
    m[(100, 101)] = 0.8;
    m[(101, 100)] = 0.8;
    let mask = extract_exceptional_intervals(&m, 1.0, 1, 0.8).unwrap();
    // alpha > L: nothing needs removing.
    assert_eq!(mask.count(), 200);
    let mask = extract_exceptional_intervals(&m, 0.5, 1, 0.8).unwrap();
    assert!(!mask.get(100) && !mask.get(101));
    assert!(mask.count() > 150);
}

#[test]
fn extraction_rejects_violated_preconditions() {
    let m = random_symmetric(20, 2);
    assert!(extract_exceptional_intervals(&m, 0.5, 3, 100.0).is_err());
    assert!(extract_exceptional_intervals(&m, 0.5, 20, 0.1).is_err());
    assert!(extract_exceptional_intervals(&m, 0.0, 20, 100.0).is_err());
}

#[test]
fn extraction_removes_heavy_vertex() {
    // Multiples of a single p already form a path of weight ≈ 1 edges, so
    // ordinary intervals have radius close to 2. A vertex divisible by all
    // five primes of [101, 113] stands out above that.
    let pw = sieve_primes(101, 113).unwrap();
    let n0 = plant_multiple(pw.primes(), 1, u64::MAX / 4).unwrap();
    let t = build_factor_table(n0 - 1200, 2400, &pw).unwrap();
    let i0 = t.index_of(n0).unwrap();
    let spec = OperatorSpec::full(t, pw);
    let m = assemble_dense(&spec).unwrap();
    let (l, _) = row_sum_and_bandwidth(&m);
    let before = spectral_radius_dense(&m);
    let alpha = 5.0;
    assert!(before > alpha / 2.0);
    let mask = extract_exceptional_intervals(&m, alpha, 113, l).unwrap();
    assert!(!mask.get(i0));
    assert!(mask.count() > 400, "only {} kept", mask.count());
    let after = spectral_radius_dense(&restrict_dense(&m, &mask).unwrap());
    assert!(after < before);
    assert!(after <= alpha / 2.0 + 1e-6 || after <= alpha + 1e-6);
}

#[test]
fn tsv_headers() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let r = extreme_eigenvalues(&m, 1, 1).unwrap();
    assert!(r.to_tsv().starts_with("index\teigenvalue\tresidual\tconverged\n"));
    let rows = vec![trace_dense_power(&m, 1).unwrap()];
    let tsv = traces_to_tsv(&rows);
    assert_eq!(tsv.lines().count(), 2);
    assert!(tsv.contains("dense-power"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hoelder_trace_inequality(seed in any::<u64>(), k in 1usize..=4) {
        let pw = sieve_primes(5, 30).unwrap();
        let t = build_factor_table(100_000 + seed % 5000, 300, &pw).unwrap();
        let spec = OperatorSpec::full(t, pw);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..300).map(|_| rng.random::<f64>() - 0.5).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        let lhs = quadratic_power(&spec, &v, 2 * k);
        let rhs = quadratic_power(&spec, &v, 1).abs().powi(2 * k as i32);
        prop_assert!(lhs >= rhs - 1e-12);
    }

    #[test]
    fn even_traces_are_nonnegative(seed in any::<u64>(), k in 1usize..=3) {
        let m = random_symmetric(30, seed);
        prop_assert!(trace_dense_power(&m, k).unwrap().value >= 0.0);
    }
}
