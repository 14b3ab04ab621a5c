use wiener_coding::simulator::independence_test_sequences;
use wiener_coding::{
    event_probabilities, integer_oracle, length_independence_test, mse_exact, run, run_benchmark,
    Codebook, Error, RateConstraint, Scheme, SimConfig, ThresholdConfig,
};

fn sim(a: f64, mu: f64, lengths: [u32; 4]) -> SimConfig {
    SimConfig::new(
        ThresholdConfig::symmetric(a, mu).unwrap(),
        Codebook::integer(lengths).unwrap(),
    )
}

#[test]
fn unit_threshold_matches_exact_analytics() {
    let mut s = sim(1.0, 10.0, [2; 4]);
    s.seed = 1;
    let rep = run(&s).unwrap();
    let exact = mse_exact(&s.cfg, &s.cb).unwrap().mse;
    assert!((rep.mse_hat - exact).abs() <= 0.05 * exact);
    assert!(rep.mse_hat > 0.0);
    assert_eq!(rep.cycles, rep.event_counts.iter().sum::<u64>());
    assert_eq!(rep.length_sequence.len(), 20);
}

#[test]
fn zero_threshold_samples_once_per_unit_time() {
    let mut s = sim(0.0, 100.0, [1, 8, 8, 1]);
    s.eps = 1e-4;
    s.horizon = 1e3;
    s.replications = 4;
    let rep = run(&s).unwrap();
    assert!((rep.sr_hat - 1.0).abs() <= 0.03, "{}", rep.sr_hat);
    assert_eq!(rep.event_counts[1] + rep.event_counts[2], 0);
}

#[test]
fn ideal_and_monotone_coincide_at_zero_threshold() {
    let mut mono = sim(0.0, 1e3, [1, 2, 2, 1]);
    mono.eps = 1e-5;
    mono.horizon = 200.0;
    mono.replications = 10;
    mono.seed = 3;
    let mut ideal = mono;
    ideal.scheme = Scheme::IdealBenchmark;
    ideal.seed = 4;
    let m = run(&mono).unwrap();
    let i = run_benchmark(&ideal).unwrap();
    let joint = (m.mse_ci.unwrap().powi(2) + i.mse_ci.unwrap().powi(2)).sqrt();
    assert!(
        (m.mse_hat - i.mse_hat).abs() <= joint,
        "{} vs {}",
        m.mse_hat,
        i.mse_hat
    );
    assert!((i.mse_hat - 1.5).abs() <= i.mse_ci.unwrap() + 0.01);
}

#[test]
fn uniform_benchmark_at_zero_threshold() {
    let mut s = sim(0.0, 100.0, [1, 8, 8, 1]);
    s.scheme = Scheme::UniformBenchmark;
    s.eps = 1e-4;
    s.horizon = 2e3;
    s.replications = 4;
    let rep = run_benchmark(&s).unwrap();
    assert!((rep.mse_hat - 3.0).abs() <= 0.15, "{}", rep.mse_hat);
    assert!(rep.length_sequence.iter().flatten().all(|&l| l == 2));
}

#[test]
fn optimized_code_beats_uniform_code() {
    let rc = RateConstraint::unconstrained();
    // Common random numbers: both schemes see the same noise.
    for a in [0.0, 0.5, 1.5] {
        let cfg = ThresholdConfig::symmetric(a, 10.0).unwrap();
        let code = integer_oracle(
            &ThresholdConfig::symmetric(a, f64::INFINITY).unwrap(),
            &rc,
            8,
        )
        .unwrap()
        .lengths;
        let mut best = SimConfig::new(cfg, code);
        best.horizon = 2e4;
        best.replications = 5;
        best.seed = 10;
        let mut uniform = best;
        uniform.scheme = Scheme::UniformBenchmark;
        let b = run(&best).unwrap();
        let u = run_benchmark(&uniform).unwrap();
        let joint = (b.mse_ci.unwrap().powi(2) + u.mse_ci.unwrap().powi(2)).sqrt();
        assert!(
            u.mse_hat >= b.mse_hat - joint,
            "a = {a}: {} vs {}",
            u.mse_hat,
            b.mse_hat
        );
    }
}

#[test]
fn scaled_variance_is_exactly_four_times_on_common_noise() {
    let mut one = sim(1.0, 10.0, [2; 4]);
    one.horizon = 5e3;
    one.replications = 2;
    let mut two = one;
    two.cfg = one.cfg.with_sigma2(4.0).unwrap();
    let (r1, r2) = (run(&one).unwrap(), run(&two).unwrap());
    assert_eq!(r1.event_counts, r2.event_counts);
    assert!((r2.mse_hat / r1.mse_hat - 4.0).abs() <= 1e-12);
}

#[test]
fn renewal_and_decoder_ledgers_agree() {
    let mut s = sim(0.7, 5.0, [1, 3, 2, 4]);
    s.cfg = ThresholdConfig::new(0.7, 1.1, 5.0).unwrap();
    s.horizon = 1e4;
    s.replications = 3;
    s.record_cycles = true;
    let rep = run(&s).unwrap();
    for r in &rep.replications {
        assert!((r.renewal_mse - r.mse).abs() <= 1e-9 * r.mse);
        assert_eq!(r.decoder_residual, 0.0);
    }
    let sa = (0.7f64, 1.1f64);
    for pair in rep.records.windows(2) {
        let (rec, root) = (pair[1], f64::from(pair[0].length).sqrt());
        match rec.event {
            2 => assert_eq!(rec.z_n, sa.0 * root),
            3 => assert_eq!(rec.z_n, -(sa.1 * root)),
            1 => assert!(rec.z_n >= sa.0 * root),
            4 => assert!(rec.z_n <= -(sa.1 * root)),
            _ => unreachable!(),
        }
        assert_eq!(
            rec.d_n,
            rec.s_n + (f64::from(rec.length) / s.eps).round() * s.eps
        );
    }
}

#[test]
fn lengths_are_independent_with_expected_marginals() {
    let cfg = ThresholdConfig::symmetric(1.0, 10.0).unwrap();
    let mut s = SimConfig::new(cfg, Codebook::integer([1, 2, 3, 4]).unwrap());
    s.eps = 1e-3;
    s.horizon = 2e4;
    s.replications = 4;
    s.seed = 21;
    let rep = run(&s).unwrap();
    let t = length_independence_test(&rep).unwrap();
    assert!(t.p_value > 0.01, "{t:?}");
    assert_eq!(t.categories, vec![1, 2, 3, 4]);
    let p = event_probabilities(&cfg).unwrap().as_array();
    let n = rep.cycles as f64;
    for (k, pi) in rep.event_counts.iter().zip(p) {
        assert!((*k as f64 - n * pi).abs() <= 3.0 * (n * pi * (1.0 - pi)).sqrt());
    }
}

#[test]
fn dependent_lengths_are_detected() {
    // Lengths that repeat the previous one with probability 0.6.
    let mut x = 12345u64;
    let mut next = || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut state = 1u32;
    let seq: Vec<u32> = (0..20_000)
        .map(|_| {
            if next() > 0.6 {
                state = 1 + (next() * 4.0) as u32;
            }
            state
        })
        .collect();
    assert!(independence_test_sequences(&[seq]).unwrap().p_value < 0.01);
}

#[test]
fn short_runs_and_bad_inputs() {
    let mut s = sim(1.0, 10.0, [2; 4]);
    s.horizon = 300.0;
    s.replications = 1;
    let rep = run(&s).unwrap();
    assert!(rep.mse_ci.is_none());
    assert!(matches!(
        length_independence_test(&rep),
        Err(Error::SampleSize { .. }) | Err(Error::Domain(_))
    ));
    s.eps = 0.0;
    assert!(run(&s).is_err());
    let mut s = sim(1.0, f64::INFINITY, [2; 4]);
    s.horizon = 1e3;
    assert!(run(&s).is_err());
}
