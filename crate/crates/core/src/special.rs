//! Faddeeva function, the complementary error function `F` and Dawson's
//! integral.
//!
//! `w(z) = e^{−z²} erfc(−iz)` is evaluated with Weideman's rational
//! expansion in the upper half plane (40 terms, about 1e−15 absolute
//! accuracy). Everything else is expressed through `w`.

use crate::C64;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

const TERMS: usize = 40;

struct Weideman {
    l: f64,
    coeffs: [f64; TERMS],
}

fn weideman() -> &'static Weideman {
    static W: OnceLock<Weideman> = OnceLock::new();
    W.get_or_init(|| {
        let n = TERMS;
        let m = 2 * n;
        let m2 = 2 * m;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        // f sampled at t_k = L tan(θ_k/2), θ_k = kπ/M, k = −M+1..M−1, with a
        // leading zero; the coefficients are its discrete Fourier transform.
        let mut f = vec![0.0; m2];
        for (i, slot) in f.iter_mut().enumerate().skip(1) {
            let k = i as f64 - m as f64;
            let t = l * (k * PI / m as f64 / 2.0).tan();
            *slot = (-t * t).exp() * (l * l + t * t);
        }
        let mut coeffs = [0.0; TERMS];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let freq = (j + 1) as f64;
            let mut s = 0.0;
            for (i, _) in f.iter().enumerate() {
                let x = f[(i + m) % m2];
                s += x * (2.0 * PI * freq * i as f64 / m2 as f64).cos();
            }
            *c = s / m2 as f64;
        }
        Weideman { l, coeffs }
    })
}

/// Faddeeva function `w(z)`.
pub fn faddeeva(z: C64) -> C64 {
    if z.im < 0.0 {
        // w(z) = 2e^{−z²} − w(−z)
        return (-z * z).exp() * 2.0 - faddeeva(-z);
    }
    let w = weideman();
    let i = C64::new(0.0, 1.0);
    let den = C64::new(w.l, 0.0) - i * z;
    let zz = (C64::new(w.l, 0.0) + i * z) / den;
    let mut p = C64::new(0.0, 0.0);
    for c in w.coeffs.iter().rev() {
        p = p * zz + c;
    }
    p * 2.0 / (den * den) + 1.0 / (PI.sqrt() * den)
}

/// `erfc(z)` for complex `z`.
pub fn erfc(z: C64) -> C64 {
    if z.re >= 0.0 {
        (-z * z).exp() * faddeeva(C64::new(-z.im, z.re))
    } else {
        C64::new(2.0, 0.0) - erfc(-z)
    }
}

/// `F(z) = ½·erfc(z/√2)`.
pub fn f_erfc(z: C64) -> C64 {
    if z.re == 0.0 && z.im == 0.0 {
        return C64::new(0.5, 0.0);
    }
    ln_f_erfc(z).exp()
}

/// `ln F(z)` on the principal branch of the logarithm up to multiples
/// of `2πi`; finite even where `F` itself over- or underflows.
pub fn ln_f_erfc(z: C64) -> C64 {
    let u = z * FRAC_1_SQRT_2;
    if u.re >= 0.0 {
        let w = faddeeva(C64::new(-u.im, u.re));
        C64::new(0.5f64.ln(), 0.0) - u * u + w.ln()
    } else {
        let lx = ln_f_erfc(-z);
        if lx.re > 0.0 {
            lx + ((-lx).exp() - 1.0).ln()
        } else {
            (C64::new(1.0, 0.0) - lx.exp()).ln()
        }
    }
}

/// `F(x)` for real `x`.
pub fn f_real(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - f_real(-x);
    }
    f_erfc(C64::new(x, 0.0)).re
}

/// Dawson's integral `D(x) = e^{−x²}∫₀ˣ e^{t²} dt = (√π/2)·Im w(x)`.
pub fn dawson(x: f64) -> f64 {
    if x < 0.0 {
        return -dawson(-x);
    }
    0.5 * PI.sqrt() * faddeeva(C64::new(x, 0.0)).im
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    // 30-digit reference values of ½ erfc(z/√2)
    const REFERENCE: [(f64, f64, f64, f64); 9] = [
        (0.3, 0.4, 0.37257075811087304405, -0.15633884689184075221),
        (-1.2, 2.5, 2.1018914610958961066, 1.2558947049913729292),
        (3.0, -4.0, 2.5258390419823613417, 0.83998746724155295528),
        (10.0, 7.0, 2.2315290945920216995e-14, -2.7373835435304524703e-13),
        (-6.5, -0.25, 1.0000000000037635035, 4.1236471690433119338e-11),
        (0.01, 15.0, -2.8668319505793200268e+46, -1.9055403404469301114e+47),
        (2.0, 0.0, 0.0227501319481792072, 0.0),
        (-3.0, 0.0, 0.99865010196836990547, 0.0),
        (12.0, -12.0, 0.022663900813024891514, 0.0062398423347722695435),
    ];

    #[test]
    fn f_matches_reference_values() {
        for (x, y, re, im) in REFERENCE {
            let v = f_erfc(C64::new(x, y));
            let exact = C64::new(re, im);
            let err = (v - exact).norm();
            let tol = 1e-12 * exact.norm().max(1.0);
            assert!(err <= tol, "F({x}+{y}i) = {v}, expected {exact}, err {err:e}");
        }
    }

    #[test]
    fn f_at_zero_is_one_half() {
        assert_eq!(f_erfc(C64::new(0.0, 0.0)), C64::new(0.5, 0.0));
        assert_eq!(f_real(0.0), 0.5);
    }

    #[test]
    fn real_reflection() {
        for i in 0..400 {
            let x = -20.0 + 0.1 * i as f64;
            let s = f_erfc(C64::new(x, 0.0)).re + f_erfc(C64::new(-x, 0.0)).re;
            assert!((s - 1.0).abs() <= 1e-12, "x={x}");
        }
    }

    #[test]
    fn real_values_against_statrs() {
        for i in 0..200 {
            let x = -10.0 + 0.1 * i as f64;
            let want = 0.5 * statrs::function::erf::erfc(x * FRAC_1_SQRT_2);
            // statrs' erfc is itself only good to about 1e-11
            assert!((f_real(x) - want).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn log_form_survives_overflow() {
        let z = C64::new(1.0, 60.0);
        let l = ln_f_erfc(z);
        assert!(l.re.is_finite() && l.re > 1000.0);
        let z = C64::new(-40.0, 50.0);
        assert!(ln_f_erfc(z).re.is_finite());
    }

    #[test]
    fn dawson_against_quadrature_oracle() {
        for x in [0.1, 0.5, 1.0, 2.5, 5.0, 10.0] {
            let oracle = adaptive_simpson(&|t: f64| (t * t - x * x).exp(), 0.0, x, 1e-15);
            assert!((dawson(x) - oracle).abs() <= 1e-12, "x={x}");
        }
        assert!((dawson(10.0) - 0.05).abs() <= 6e-4);
        assert!((dawson(1.0) - 0.53807950691276841914).abs() < 1e-14);
        assert_eq!(dawson(-2.0), -dawson(2.0));
    }
}
