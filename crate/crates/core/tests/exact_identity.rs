use coulomb_core::polyspace::verify_exact_identity;
use coulomb_core::Potential;
use std::time::Instant;

#[test]
fn tilted_estimator_recovers_disc_area() {
    for (n, beta) in [(2usize, 1.0), (2, 2.0), (4, 1.0), (4, 2.0)] {
        let t = Instant::now();
        let r = verify_exact_identity(&Potential::ginibre(), n, beta, 32, 2000, 2.0, 11).unwrap();
        eprintln!(
            "n={n} beta={beta}: {:.4} ± {:.4} (acc {:.2}) in {:?}",
            r.estimate,
            r.std_error,
            r.acceptance_rate,
            t.elapsed()
        );
        assert!(!r.inconclusive);
        assert!(r.z_score() < 4.0);
    }
}
