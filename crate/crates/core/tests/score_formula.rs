//! `T = N · a_til / A_TAS · 100` against exact rational arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tils_core::{tils_score, Error};
use tils_testkit::oracle::score_rational;

fn next_up(v: f64) -> f64 {
    f64::from_bits(v.to_bits() + 1)
}

fn next_down(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

/// Random triples, a third of them exactly or one ulp away from a half.
fn triple(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    match rng.gen_range(0..3) {
        0 => (
            rng.gen_range(0..3000),
            rng.gen_range(1e3..1e8),
            rng.gen_range(1.0..500.0),
        ),
        1 => {
            // raw = q / 2 with q odd
            let n = rng.gen_range(1..5000usize);
            let q = (2 * rng.gen_range(0..150) + 1) as f64;
            let a_tas = 200.0 * n as f64;
            let a_tas = match rng.gen_range(0..3) {
                0 => a_tas,
                1 => next_up(a_tas),
                _ => next_down(a_tas),
            };
            (n, a_tas, q)
        }
        _ => {
            let n = rng.gen_range(0..100_000usize);
            (n, rng.gen_range(1.0..1e9), 201.06192982974676)
        }
    }
}

#[test]
fn random_triples_match_rational_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE41);
    for i in 0..1000 {
        let (n, a_tas, a_til) = triple(&mut rng);
        let want = score_rational(n, a_tas, a_til).unwrap();
        let got = tils_score(n, a_tas, a_til).unwrap();
        assert_eq!(got, want, "case {i}: n={n} a_tas={a_tas:e} a_til={a_til}");
    }
}

#[test]
fn boundary_cases() {
    let a_til = std::f64::consts::PI * 64.0;
    assert_eq!(tils_score(0, 1e6, a_til).unwrap(), 0);
    assert_eq!(tils_score(0, 0.0, a_til).unwrap(), 0);
    assert!(matches!(tils_score(3, 0.0, a_til), Err(Error::Degenerate(_))));
    assert_eq!(tils_score(2000, 201_061.9, 201.0619).unwrap(), 100);
    assert_eq!(tils_score(usize::MAX >> 12, 1.0, a_til).unwrap(), 100);
    assert_eq!(tils_score(500, 201_061.9, 201.0619).unwrap(), 50);
    assert_eq!(score_rational(500, 201_061.9, 201.0619), Some(50));
    // exactly 0.5 rounds away from zero, exactly 100.5 clamps
    assert_eq!(tils_score(1, 200.0, 1.0).unwrap(), 1);
    assert_eq!(tils_score(201, 200.0, 1.0).unwrap(), 100);
    assert!(matches!(tils_score(1, -1.0, a_til), Err(Error::InvalidInput(_))));
    assert!(matches!(tils_score(1, 1e6, 0.0), Err(Error::InvalidInput(_))));
    assert!(matches!(tils_score(1, f64::NAN, a_til), Err(Error::InvalidInput(_))));
}

#[test]
fn monotone_and_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a_til = 201.06192982974676;
    for _ in 0..300 {
        let n = rng.gen_range(0..3000usize);
        let a = rng.gen_range(1e4..1e7f64).round();
        let t = tils_score(n, a, a_til).unwrap();
        assert!(tils_score(n + 1, a, a_til).unwrap() >= t);
        assert!(tils_score(n, a * 1.5, a_til).unwrap() <= t);
        let k = rng.gen_range(1..20usize);
        assert_eq!(tils_score(k * n, k as f64 * a, a_til).unwrap(), t);
    }
}

#[test]
fn single_precision_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let n = rng.gen_range(0..3000usize);
        let a_tas = rng.gen_range(1e3..1e7f32);
        let a_til = rng.gen_range(1.0..500.0f32);
        let want = score_rational(n, f64::from(a_tas), f64::from(a_til)).unwrap();
        assert_eq!(tils_score(n, a_tas, a_til).unwrap(), want);
    }
}
