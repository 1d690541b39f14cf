mod support;

use gdn_core::eval::{emd, emd_1d, EmpiricalDistribution};
use proptest::prelude::*;
use rand::SeedableRng;

#[test]
fn lp_solves_a_hand_worked_transport() {
    // Move half a unit from 0 to 2 and half from 1 to 3: cost 2.
    let c = support::transport_lp(&[0.0, 1.0], &[0.5, 0.5], &[2.0, 3.0], &[0.5, 0.5]);
    assert!((c - 2.0).abs() < 1e-12);
    assert!(support::transport_lp(&[1.0], &[1.0], &[1.0], &[1.0]).abs() < 1e-12);
}

#[test]
fn line_emd_matches_the_transport_lp() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let (xa, pa) = support::random_distribution(&mut rng);
        let (xb, pb) = support::random_distribution(&mut rng);
        let a = EmpiricalDistribution::weighted(&xa, &pa).unwrap();
        let b = EmpiricalDistribution::weighted(&xb, &pb).unwrap();
        let lp = support::transport_lp(&xa, &pa, &xb, &pb);
        let fast = emd_1d(&a, &b).unwrap();
        assert!((fast - lp).abs() < 1e-9, "{fast} vs {lp}");
    }
}

proptest! {
    #[test]
    fn categorical_emd_is_half_l1(p in proptest::collection::vec(0.01f64..1.0, 2..7), seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = p.iter().map(|_| rand::Rng::random_range(&mut rng, 0.01..1.0)).collect();
        let (a, b) = (
            EmpiricalDistribution::categorical(&p).unwrap(),
            EmpiricalDistribution::categorical(&q).unwrap(),
        );
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        let half_l1 = 0.5 * p.iter().zip(&q).map(|(x, y)| (x / sp - y / sq).abs()).sum::<f64>();
        prop_assert!((emd(&a, &b).unwrap() - half_l1).abs() < 1e-15);
    }
}
