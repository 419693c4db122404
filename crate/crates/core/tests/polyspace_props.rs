use coulomb_core::ensemble::{fekete, Configuration};
use coulomb_core::polyspace::*;
use coulomb_core::{Potential, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn ginibre_closed_form(m: usize, z: C64) -> f64 {
    let x = m as f64 * z.norm_sqr();
    if x == 0.0 {
        return m as f64;
    }
    (0..m)
        .map(|k| (k as f64 * x.ln() - x - ln_gamma(k as f64 + 1.0)).exp())
        .sum::<f64>()
        * m as f64
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> C64 {
    C64::from_polar(
        radius * rng.random::<f64>().sqrt(),
        std::f64::consts::TAU * rng.random::<f64>(),
    )
}

#[test]
fn ginibre_one_point_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [8usize, 64, 256] {
        let s = build_space(&Potential::ginibre(), m).unwrap();
        for _ in 0..100 {
            let z = random_point(&mut rng, 1.3);
            let exact = ginibre_closed_form(m, z);
            let got = s.one_point(z);
            assert!((got - exact).abs() <= 1e-10 * exact, "m={m} z={z}: {got} vs {exact}");
        }
    }
}

#[test]
fn monomial_norms_follow_factorials() {
    let m = 40;
    let s = build_space(&Potential::ginibre(), m).unwrap();
    for (k, lh) in s.log_norms().unwrap().iter().enumerate() {
        let exact = ln_gamma(k as f64 + 1.0) - (k as f64 + 1.0) * (m as f64).ln();
        assert!((lh - exact).abs() < 1e-12 * exact.abs().max(1.0));
    }
}

fn spaces() -> Vec<WeightedPolySpace> {
    let mut v = Vec::new();
    for pot in [Potential::ginibre(), Potential::radial_monomial(2).unwrap()] {
        for m in [8usize, 32, 128] {
            v.push(build_space(&pot, m).unwrap());
        }
    }
    v.push(build_space(&Potential::harmonic(2, 2.0 / 2f64.sqrt(), 2).unwrap(), 32).unwrap());
    v
}

/// `⟨f, φ_k⟩` on the space quadrature, for each `f = Σ c_j φ_j`.
fn quad_coefficients(s: &WeightedPolySpace, cs: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut out = vec![vec![C64::new(0.0, 0.0); s.m]; cs.len()];
    s.for_each_node(|_, w, v| {
        for (c, o) in cs.iter().zip(out.iter_mut()) {
            let f: C64 = c.iter().zip(v).map(|(a, b)| a * b).sum::<C64>() * w;
            for (o, p) in o.iter_mut().zip(v) {
                *o += f * p.conj();
            }
        }
    });
    out
}

#[test]
fn reproducing_property_and_berezin_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in spaces() {
        assert!(s.gram_error < 1e-8);
        let r = s.potential.droplet().map(|d| d.bounding_radius()).unwrap_or(1.0);
        let cs: Vec<Vec<C64>> = (0..50).map(|_| random_element(&s, &mut rng)).collect();
        // ∫K(ζ,η)f(η)dA(η) = Σ_k φ_k(ζ)⟨f,φ_k⟩
        let projs = quad_coefficients(&s, &cs);
        for (c, proj) in cs.iter().zip(&projs) {
            for _ in 0..20 {
                let z = random_point(&mut rng, r);
                let lhs: C64 = s.basis_vec(z).iter().zip(proj).map(|(a, b)| a * b).sum();
                let f = s.eval(c, z);
                let scale = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() * s.one_point(z).sqrt();
                assert!(
                    (lhs - f).norm() <= 1e-7 * scale.max(1e-300),
                    "m={} {}",
                    s.m,
                    s.potential.name()
                );
            }
        }
        for _ in 0..5 {
            let z = random_point(&mut rng, r);
            let mut mass = 0.0;
            let rz = s.one_point(z);
            let bz = s.basis_vec(z);
            s.for_each_node(|_, w, v| {
                let k: C64 = v.iter().zip(&bz).map(|(a, b)| b * a.conj()).sum();
                mass += w * k.norm_sqr() / rz;
            });
            assert!((mass - 1.0).abs() < 1e-8, "Berezin mass {mass}");
        }
    }
}

#[test]
fn kernel_gram_is_hermitian_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in spaces() {
        let pts: Vec<C64> = (0..12).map(|_| random_point(&mut rng, 1.0)).collect();
        let g = nalgebra::DMatrix::from_fn(12, 12, |i, j| s.kernel(pts[i], pts[j]));
        assert!((&g - g.adjoint()).norm() < 1e-10 * g.norm());
        let min = nalgebra::SymmetricEigen::new(g).eigenvalues.min();
        assert!(min >= -1e-10, "{min}");
    }
}

#[test]
fn one_point_grows_linearly() {
    let mut ratios = Vec::new();
    for m in [8usize, 16, 32, 64] {
        let s = build_space(&Potential::ginibre(), m).unwrap();
        let sup = (0..=300)
            .map(|i| s.one_point(C64::new(1.5 * i as f64 / 300.0, 0.0)))
            .fold(0.0, f64::max);
        ratios.push(sup / m as f64);
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi <= 1.0 + 1e-9 && hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn maximum_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = build_space(&Potential::ginibre(), 16).unwrap();
    let grid = |radius: f64| -> Vec<C64> {
        let k = 60;
        let mut v = Vec::new();
        for i in -k..=k {
            for j in -k..=k {
                let z = C64::new(i as f64, j as f64) * (radius / k as f64);
                if z.norm() <= radius {
                    v.push(z);
                }
            }
        }
        v
    };
    let inner = grid(1.0);
    let outer = grid(2.0);
    for _ in 0..1000 {
        let c = random_element(&s, &mut rng);
        let a = inner.iter().map(|&z| s.eval(&c, z).norm()).fold(0.0, f64::max);
        let b = outer.iter().map(|&z| s.eval(&c, z).norm()).fold(0.0, f64::max);
        assert!(b <= a * 1.02, "{a} {b}");
    }
}

#[test]
fn lagrange_reproduces_weighted_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Potential::ginibre();
    let s = build_space(&g, 8).unwrap();
    let pts: Vec<C64> = (0..8).map(|_| random_point(&mut rng, 1.0)).collect();
    let cfg = Configuration::synthetic(pts.clone()).unwrap();
    let basis = LagrangeBasis::new(&cfg, &g).unwrap();
    let c = random_element(&s, &mut rng);
    let vals: Vec<C64> = pts.iter().map(|&z| s.eval(&c, z)).collect();
    for _ in 0..100 {
        let z = random_point(&mut rng, 1.2);
        let interp: C64 = basis.eval_vec(z).iter().zip(&vals).map(|(l, f)| l * f).sum();
        let f = s.eval(&c, z);
        assert!((interp - f).norm() <= 1e-8 * f.norm().max(1.0));
    }
    for (j, &p) in pts.iter().enumerate() {
        let e = basis.eval_vec(p);
        assert!(e
            .iter()
            .enumerate()
            .all(|(k, v)| *v == if k == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }));
    }
}

#[test]
fn kernel_interpolation_agrees_with_lagrange() {
    // with m nodes the minimal-norm interpolant in 𝒲_m is the unique one
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = Potential::ginibre();
    let m = 10;
    let s = build_space(&g, m).unwrap();
    let pts: Vec<C64> = (0..m).map(|_| random_point(&mut rng, 0.9)).collect();
    let cfg = Configuration::synthetic(pts.clone()).unwrap();
    let basis = LagrangeBasis::new(&cfg, &g).unwrap();
    let c = random_element(&s, &mut rng);
    let a: Vec<C64> = pts.iter().map(|&z| s.eval(&c, z)).collect();
    let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| s.kernel(pts[i], pts[j]));
    let coef = gram.lu().solve(&nalgebra::DVector::from_vec(a.clone())).unwrap();
    for _ in 0..30 {
        let z = random_point(&mut rng, 1.0);
        let via_k: C64 = (0..m).map(|j| s.kernel(z, pts[j]) * coef[j]).sum();
        let via_l: C64 = basis.eval_vec(z).iter().zip(&a).map(|(l, f)| l * f).sum();
        assert!((via_k - via_l).norm() <= 1e-7 * via_l.norm().max(1.0));
    }
}

#[test]
fn lagrange_sup_norms() {
    let g = Potential::ginibre();
    let d = g.droplet().unwrap();
    let mut maxima = Vec::new();
    for n in [50usize, 100, 200] {
        let (f, _) = fekete(&g, n, 2).unwrap();
        let sup = sup_norms_lagrange(&f, &g, &d).unwrap();
        assert!(sup.iter().all(|&x| x >= 1.0));
        maxima.push(sup.iter().cloned().fold(0.0, f64::max));
        if n == 100 {
            let fine = sup_norms_lagrange_with(&f, &g, &d, 0.05).unwrap();
            let a = maxima[1];
            let b = fine.iter().cloned().fold(0.0, f64::max);
            assert!((a - b).abs() < 0.05 * b, "{a} {b}");
        }
    }
    let (lo, hi) = maxima
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo < 1.5, "{maxima:?}");
}

#[test]
fn pointwise_lp_estimate() {
    for (m, p) in [(16usize, 2.0), (32, 1.0), (32, 2.0)] {
        let s = build_space(&Potential::ginibre(), m).unwrap();
        let r = verify_pointwise_lp(&s, p, 1.0, 1000, 7).unwrap();
        assert!(r.passed, "{r:?}");
    }
    // a smaller disc pushes the implied constant towards 1
    let s = build_space(&Potential::ginibre(), 32).unwrap();
    let big = verify_pointwise_lp(&s, 2.0, 2.0, 200, 8).unwrap().max_implied;
    let small = verify_pointwise_lp(&s, 2.0, 0.1, 200, 8).unwrap().max_implied;
    assert!(small < big && small < 1.05, "{small} {big}");
}

#[test]
fn bernstein_estimate() {
    let mut implied = Vec::new();
    for m in [16usize, 32, 64] {
        let s = build_space(&Potential::ginibre(), m).unwrap();
        let r = verify_bernstein(&s, if m == 32 { 1000 } else { 300 }, 9).unwrap();
        assert!(r.passed, "{r:?}");
        implied.push(r.max_implied);
    }
    let (lo, hi) = implied
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo <= 2.0, "{implied:?}");
}

#[test]
fn harmonic_space_kernel_is_consistent() {
    let pot = Potential::harmonic(2, 2.0 / 2f64.sqrt(), 2).unwrap();
    let s = build_space(&pot, 64).unwrap();
    assert!(s.condition_estimate < 1e12);
    let mut total = 0.0;
    s.for_each_node(|_, w, v| total += w * v.iter().map(|x| x.norm_sqr()).sum::<f64>());
    assert!((total - 64.0).abs() < 1e-7, "{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kernel_hermitian(a in -1.2f64..1.2, b in -1.2f64..1.2, c in -1.2f64..1.2, d in -1.2f64..1.2) {
        let s = build_space(&Potential::radial_monomial(2).unwrap(), 24).unwrap();
        let z = C64::new(a, b);
        let w = C64::new(c, d);
        let k1 = s.kernel(z, w);
        let k2 = s.kernel(w, z).conj();
        prop_assert!((k1 - k2).norm() <= 1e-12 * (s.one_point(z) * s.one_point(w)).sqrt().max(1e-300));
        prop_assert!(k1.norm_sqr() <= s.one_point(z) * s.one_point(w) * (1.0 + 1e-12));
    }
}
