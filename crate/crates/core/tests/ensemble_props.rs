use coulomb_core::ensemble::*;
use coulomb_core::stats::{bulk_mask, psi6};
use coulomb_core::{Potential, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn points(raw: &[(f64, f64)]) -> Vec<C64> {
    raw.iter().map(|&(x, y)| C64::new(x, y)).collect()
}

fn pot(k: usize) -> Potential {
    match k {
        0 => Potential::ginibre(),
        1 => Potential::radial_monomial(2).unwrap(),
        _ => Potential::harmonic(2, 2.0 / 2f64.sqrt(), 2).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn delta_matches_recomputation(
        raw in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 2..24),
        j in 0usize..24, dx in -0.3f64..0.3, dy in -0.3f64..0.3, k in 0usize..3,
    ) {
        let pts = points(&raw);
        let j = j % pts.len();
        let q = pot(k);
        let new = pts[j] + C64::new(dx, dy);
        let before = energy(&pts, &q);
        let mut moved = pts.clone();
        moved[j] = new;
        let after = energy(&moved, &q);
        prop_assume!(before.is_finite() && after.is_finite());
        let d = energy_delta(&pts, &q, j, new);
        prop_assert!((d - (after - before)).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences(
        raw in prop::collection::vec((-1.2f64..1.2, -1.2f64..1.2), 2..16), k in 0usize..3,
    ) {
        let pts = points(&raw);
        let q = pot(k);
        let mut g = vec![[0.0; 2]; pts.len()];
        prop_assume!(energy_gradient(&pts, &q, &mut g).is_ok());
        let min_gap = (0..pts.len())
            .flat_map(|a| (0..a).map(move |b| (a, b)))
            .map(|(a, b)| (pts[a] - pts[b]).norm())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(min_gap > 1e-3);
        let h = 1e-6 * min_gap.min(1.0);
        for j in 0..pts.len() {
            for (c, dir) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
                let fd = (energy_delta(&pts, &q, j, pts[j] + dir * h) - energy_delta(&pts, &q, j, pts[j] - dir * h)) / (2.0 * h);
                let scale = g[j][0].hypot(g[j][1]).max(1.0);
                prop_assert!((fd - g[j][c]).abs() <= 1e-4 * scale, "j={} c={} fd={} g={}", j, c, fd, g[j][c]);
            }
        }
    }
}

#[test]
fn metropolis_two_state_frequencies() {
    // states with energies 0 and 1; flip proposals; thinned to decorrelate
    let beta = 1.3;
    let e = [0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x = 0usize;
    let mut counts = [0usize; 2];
    for step in 0..400_000 {
        let y = 1 - x;
        if metropolis_accept(e[y] - e[x], beta, rng.random()) {
            x = y;
        }
        if step % 20 == 0 {
            counts[x] += 1;
        }
    }
    let total = (counts[0] + counts[1]) as f64;
    let p1 = (-beta).exp() / (1.0 + (-beta).exp());
    let expect = [total * (1.0 - p1), total * p1];
    let chi: f64 = (0..2).map(|i| (counts[i] as f64 - expect[i]).powi(2) / expect[i]).sum();
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi);
    assert!(p > 0.01, "chi2 = {chi}, p = {p}");
}

#[test]
fn radial_distribution_approaches_equilibrium() {
    let g = Potential::ginibre();
    let mut radii = Vec::new();
    for seed in 0..10 {
        let (c, _) = sample_gibbs(&g, 64, 1.0, 300, seed).unwrap();
        radii.extend(c.points.iter().map(|z| z.norm()));
    }
    radii.sort_by(|a, b| a.total_cmp(b));
    // W1 = ∫|F_emp(r) − min(r², 1)| dr
    let n = radii.len() as f64;
    let top = radii.last().unwrap().max(1.0);
    let steps = 20_000;
    let h = top / steps as f64;
    let mut w1 = 0.0;
    let mut idx = 0;
    for i in 0..steps {
        let r = (i as f64 + 0.5) * h;
        while idx < radii.len() && radii[idx] <= r {
            idx += 1;
        }
        w1 += h * (idx as f64 / n - (r * r).min(1.0)).abs();
    }
    assert!(w1 < 0.1, "W1 = {w1}");
}

#[test]
fn fekete_beats_cold_gibbs_samples() {
    let g = Potential::ginibre();
    let n = 16;
    let (f, report) = fekete(&g, n, 5).unwrap();
    assert!(report.converged);
    let ef = hamiltonian(&f, &g);
    for seed in 0..20 {
        let (c, _) = sample_gibbs(&g, n, 2f64.powi(14), 200, 100 + seed).unwrap();
        assert!(ef <= hamiltonian(&c, &g) + 1e-9, "seed {seed}");
    }
}

#[test]
fn fekete_bulk_is_hexatic() {
    let g = Potential::ginibre();
    let (f, _) = fekete(&g, 200, 1).unwrap();
    let d = g.droplet().unwrap();
    let v = psi6(&f, &bulk_mask(&f, &d, 2.0)).unwrap();
    assert!(v > 0.5, "psi6 = {v}");
}
