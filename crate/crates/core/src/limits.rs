//! Microscopic rescaling about a zoom point, the limiting kernels `G` and
//! `K_l`, and the decay, area-law and edge-profile checks built on them.

use crate::error::{Error, Result};
use crate::polyspace::WeightedPolySpace;
use crate::potential::{Droplet, Potential};
use crate::quad;
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use crate::special::{dawson, erfc, f_erfc, f_real, faddeeva, ln_f_erfc};

/// Affine blow-up `z = √(nρΔQ(p))·(ζ−p)·e^{−iθ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub p: C64,
    pub n: usize,
    pub rho: f64,
    pub delta_q: f64,
    /// Outward normal angle; the outward direction maps to `+Re z`.
    pub theta: f64,
}

impl RescaleMap {
    pub fn new(potential: &Potential, p: C64, n: usize, rho: f64, theta: f64) -> Result<Self> {
        let delta_q = potential.laplacian(p)?;
        Self::with_laplacian(p, n, rho, delta_q, theta)
    }

    pub fn with_laplacian(p: C64, n: usize, rho: f64, delta_q: f64, theta: f64) -> Result<Self> {
        if !(delta_q > 0.0) {
            return Err(Error::Unsupported(format!("zoom at {p} where ΔQ = {delta_q}")));
        }
        if n == 0 || !(rho > 0.0) {
            return Err(Error::Config("rescaling needs n >= 1 and rho > 0".into()));
        }
        Ok(RescaleMap {
            p,
            n,
            rho,
            delta_q,
            theta,
        })
    }

    pub fn scale(&self) -> f64 {
        (self.n as f64 * self.rho * self.delta_q).sqrt()
    }

    pub fn forward(&self, zeta: C64) -> C64 {
        (zeta - self.p) * C64::from_polar(self.scale(), -self.theta)
    }

    pub fn inverse(&self, z: C64) -> C64 {
        self.p + z * C64::from_polar(1.0 / self.scale(), self.theta)
    }
}

pub fn rescale_points(map: &RescaleMap, points: &[C64]) -> Vec<C64> {
    points.iter().map(|&z| map.forward(z)).collect()
}

/// Rescaled kernel `K_n(z,w) = 𝐊(ζ,η)/(nρΔQ(p))`.
pub struct RescaledKernel<'a> {
    pub map: RescaleMap,
    pub space: &'a WeightedPolySpace,
}

impl RescaledKernel<'_> {
    fn factor(&self) -> f64 {
        1.0 / (self.map.n as f64 * self.map.rho * self.map.delta_q)
    }

    pub fn kernel(&self, z: C64, w: C64) -> C64 {
        self.space.kernel(self.map.inverse(z), self.map.inverse(w)) * self.factor()
    }

    pub fn one_point(&self, z: C64) -> f64 {
        self.space.one_point(self.map.inverse(z)) * self.factor()
    }
}

pub fn rescale_kernel<'a>(map: &RescaleMap, space: &'a WeightedPolySpace) -> RescaledKernel<'a> {
    RescaledKernel { map: *map, space }
}

/// `G(z,w) = e^{z·w̄ − |z|²/2 − |w|²/2}`.
pub fn ginibre_g(z: C64, w: C64) -> C64 {
    (z * w.conj() - 0.5 * z.norm_sqr() - 0.5 * w.norm_sqr()).exp()
}

/// `K_l(z,w) = G(z,w)·F(z + w̄ + 2l)`.
pub fn boundary_k(l: f64, z: C64, w: C64) -> C64 {
    (z * w.conj() - 0.5 * z.norm_sqr() - 0.5 * w.norm_sqr() + ln_f_erfc(z + w.conj() + 2.0 * l)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LimitKernel {
    Ginibre,
    Boundary { l: f64 },
}

impl LimitKernel {
    pub fn kernel(&self, z: C64, w: C64) -> C64 {
        match self {
            LimitKernel::Ginibre => ginibre_g(z, w),
            LimitKernel::Boundary { l } => boundary_k(*l, z, w),
        }
    }

    /// `ln|K(z,w)|`, finite where `|K|` underflows.
    pub fn ln_abs(&self, z: C64, w: C64) -> f64 {
        let g = -0.5 * (z - w).norm_sqr();
        match self {
            LimitKernel::Ginibre => g,
            LimitKernel::Boundary { l } => g + ln_f_erfc(z + w.conj() + 2.0 * l).re,
        }
    }

    pub fn one_point(&self, z: C64) -> f64 {
        match self {
            LimitKernel::Ginibre => 1.0,
            LimitKernel::Boundary { l } => f_real(2.0 * z.re + 2.0 * l),
        }
    }
}

/// Largest implied constant of the decay envelope
/// `|K_l(z,w)| ≤ C·e^{−|Re(z−w)|²/2}/(1+|Im(z−w)|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub max_implied: f64,
    pub samples: usize,
    pub worst: (C64, C64, f64),
}

/// Samples `|z|,|w| ≤ 30` uniformly and `l` uniformly in `l_range`.
pub fn verify_decay(l_range: (f64, f64), samples: usize, seed: u64) -> DecayCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disc = || C64::from_polar(30.0 * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
    let mut pts = Vec::with_capacity(samples);
    for _ in 0..samples {
        pts.push((disc(), disc()));
    }
    let mut best = (0.0, (C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0));
    for (i, (z, w)) in pts.into_iter().enumerate() {
        // a deterministic low-discrepancy l keeps the sampler simple
        let frac = (i as f64 * 0.618_033_988_749_895).fract();
        let l = l_range.0 + (l_range.1 - l_range.0) * frac;
        let c = implied_decay(l, z, w);
        if c > best.0 {
            best = (c, (z, w, l));
        }
    }
    DecayCheck {
        max_implied: best.0,
        samples,
        worst: best.1,
    }
}

pub fn implied_decay(l: f64, z: C64, w: C64) -> f64 {
    let d = z - w;
    let ln = LimitKernel::Boundary { l }.ln_abs(z, w) + 0.5 * d.re * d.re + (1.0 + d.im.abs()).ln();
    ln.exp()
}

/// Region `E` of an area-law computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disc { center: C64, radius: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Shape {
    pub fn disc(radius: f64) -> Self {
        Shape::Disc {
            center: C64::new(0.0, 0.0),
            radius,
        }
    }

    pub fn square(side: f64) -> Self {
        Shape::Rect {
            x0: -side / 2.0,
            x1: side / 2.0,
            y0: -side / 2.0,
            y1: side / 2.0,
        }
    }

    /// Rectangle `[−depth, 0] × [−height/2, height/2]` against the line `Re z = 0`.
    pub fn strip(depth: f64, height: f64) -> Self {
        Shape::Rect {
            x0: -depth,
            x1: 0.0,
            y0: -height / 2.0,
            y1: height / 2.0,
        }
    }

    /// Normalised area.
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => radius * radius,
            Shape::Rect { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0) / PI,
        }
    }

    /// Arclength over `π`.
    pub fn perimeter(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => 2.0 * radius,
            Shape::Rect { x0, x1, y0, y1 } => 2.0 * ((x1 - x0) + (y1 - y0)) / PI,
        }
    }

    /// Nodes with `dA` weights; panels of unit width with `order` points.
    fn rule(&self, order: usize) -> Vec<(C64, f64)> {
        match *self {
            Shape::Disc { center, radius } => {
                let panels = radius.ceil().max(1.0) as usize;
                let angular = ((order as f64 * 2.0 * PI * radius).ceil() as usize).max(16);
                let dt = 2.0 * PI / angular as f64;
                let mut out = Vec::new();
                for (r, wr) in quad::composite(0.0, radius, panels, order) {
                    for j in 0..angular {
                        out.push((center + C64::from_polar(r, dt * j as f64), wr * r * dt / PI));
                    }
                }
                out
            }
            Shape::Rect { x0, x1, y0, y1 } => {
                let xs = quad::composite(x0, x1, (x1 - x0).ceil().max(1.0) as usize, order);
                let ys = quad::composite(y0, y1, (y1 - y0).ceil().max(1.0) as usize, order);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &(x, wx) in &xs {
                    for &(y, wy) in &ys {
                        out.push((C64::new(x, y), wx * wy / PI));
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaLaw {
    pub flux: f64,
    pub perim: f64,
    pub ratio: f64,
    /// `flux/(perim·(1 + log⁺(|E|/perim)))`.
    pub log_ratio: f64,
}

impl AreaLaw {
    fn new(flux: f64, shape: &Shape) -> Self {
        let perim = shape.perimeter();
        let lg = (shape.area() / perim).ln().max(0.0);
        AreaLaw {
            flux,
            perim,
            ratio: flux / perim,
            log_ratio: flux / (perim * (1.0 + lg)),
        }
    }
}

/// `∫_E ∫_{ℂ∖E} |K(z,w)|² dA(w) dA(z)`.
///
/// Both kernels reproduce, `∫_ℂ|K(z,w)|² dA(w) = K(z,z)`, so the flux is
/// `∫_E K(z,z) − ∬_{E×E}|K|²` and needs no truncation of the outer
/// integral. For `G` the double integral reduces to the overlap area of `E`
/// and its translates; for `K_l` it is done by quadrature at two orders
/// which must agree.
pub fn area_law(kernel: &LimitKernel, shape: &Shape) -> Result<AreaLaw> {
    let flux = match (kernel, shape) {
        (LimitKernel::Ginibre, Shape::Disc { radius, .. }) => ginibre_disc_flux(*radius),
        (LimitKernel::Ginibre, Shape::Rect { x0, x1, y0, y1 }) => ginibre_rect_flux(x1 - x0, y1 - y0),
        (LimitKernel::Boundary { l }, _) => {
            let (lo, hi) = match shape {
                Shape::Disc { .. } => (5, 7),
                Shape::Rect { .. } => (6, 9),
            };
            let coarse = boundary_flux(*l, shape, lo);
            let fine = boundary_flux(*l, shape, hi);
            if (fine - coarse).abs() > 1e-6 * fine.abs().max(1e-3) {
                return Err(Error::NonConvergent(format!(
                    "area law for K_{l} on {shape:?}: {coarse} vs {fine}"
                )));
            }
            fine
        }
    };
    Ok(AreaLaw::new(flux, shape))
}

/// `∫ e^{−d²}(|E| − |E ∩ (E+u)|) dA(u)` with the lens overlap of two discs.
pub fn ginibre_disc_flux(radius: f64) -> f64 {
    let r = radius;
    let lens = |d: f64| {
        if d >= 2.0 * r {
            0.0
        } else {
            (2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()) / PI
        }
    };
    let hi = 9.0f64.min(2.0 * r);
    let mut s: f64 = quad::composite(0.0, hi, 36, 12)
        .into_iter()
        .map(|(d, w)| w * 2.0 * d * (-d * d).exp() * (r * r - lens(d)))
        .sum();
    if hi < 9.0 {
        // beyond 2R the overlap vanishes
        s += r * r * (-hi * hi).exp();
    }
    s
}

/// Same for a `w × h` rectangle, where the overlap factorises.
pub fn ginibre_rect_flux(w: f64, h: f64) -> f64 {
    // ∫ e^{−u²}(a − |u|)_+ du over ℝ, Lebesgue
    let one = |a: f64| -> f64 {
        quad::composite(0.0, a.min(9.0), 36, 12)
            .into_iter()
            .map(|(u, wt)| 2.0 * wt * (-u * u).exp() * (a - u))
            .sum()
    };
    (w * h - one(w) * one(h) / PI) / PI
}

fn boundary_flux(l: f64, shape: &Shape, order: usize) -> f64 {
    let k = LimitKernel::Boundary { l };
    match *shape {
        Shape::Rect { x0, x1, y0, y1 } => {
            // |K_l|² is invariant under common vertical shifts
            let hgt = y1 - y0;
            let xs = quad::composite(x0, x1, (x1 - x0).ceil().max(1.0) as usize, order);
            // only the real separation is Gaussian; |K_l| decays like
            // 1/|Im(z−w)| so the vertical offsets are not truncated
            let us = quad::composite(0.0, hgt, hgt.ceil().max(1.0) as usize, order);
            let diag: f64 = xs.iter().map(|&(x, w)| w * f_real(2.0 * x + 2.0 * l)).sum::<f64>() * hgt / PI;
            let mut dbl = 0.0;
            for &(x, wx) in &xs {
                for &(xp, wxp) in &xs {
                    let dx = x - xp;
                    if dx.abs() > 9.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for &(u, wu) in &us {
                        let v = (2.0 * k.ln_abs(C64::new(x, u), C64::new(xp, 0.0))).exp()
                            + (2.0 * k.ln_abs(C64::new(x, -u), C64::new(xp, 0.0))).exp();
                        s += wu * (hgt - u) * v;
                    }
                    dbl += wx * wxp * s;
                }
            }
            diag - dbl / (PI * PI)
        }
        Shape::Disc { .. } => {
            let nodes = shape.rule(order);
            let diag: f64 = nodes.iter().map(|&(z, w)| w * k.one_point(z)).sum();
            let mut dbl = 0.0;
            for (i, &(z, wz)) in nodes.iter().enumerate() {
                let mut s = 0.0;
                for &(w, ww) in &nodes[i + 1..] {
                    if (z.re - w.re).abs() > 9.0 {
                        continue;
                    }
                    s += ww * (2.0 * k.ln_abs(z, w)).exp();
                }
                dbl += wz * (2.0 * s + wz * k.one_point(z).powi(2));
            }
            diag - dbl
        }
    }
}

/// One row of an edge profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub x: f64,
    pub rescaled: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    pub l: f64,
    pub n: usize,
    pub rows: Vec<ProfileRow>,
    pub max_deviation: f64,
}

/// Rescaled one-point function along the outward normal at the boundary
/// point in direction `theta`, on `window` equispaced `x ∈ [−4, 4]`,
/// against `F(2x+2l)`. The zoom point sits at `q + l·ν/√(nΔQ)`.
pub fn boundary_profile(
    space: &WeightedPolySpace,
    potential: &Potential,
    droplet: &Droplet,
    l: f64,
    window: usize,
    theta: f64,
) -> Result<BoundaryProfile> {
    if matches!(droplet.kind, crate::potential::DropletKind::Empirical { .. }) {
        return Err(Error::Unsupported("edge profile needs an analytic droplet".into()));
    }
    if window < 2 {
        return Err(Error::Config("profile window needs at least 2 points".into()));
    }
    let n = space.m;
    let (q, nu) = droplet.boundary(theta);
    let lap_q = potential.laplacian(q)?;
    let p = q + nu * (l / (n as f64 * lap_q).sqrt());
    let map = RescaleMap::new(potential, p, n, 1.0, nu.arg())?;
    let rk = rescale_kernel(&map, space);
    let mut rows = Vec::with_capacity(window);
    let mut worst: f64 = 0.0;
    for i in 0..window {
        let x = -4.0 + 8.0 * i as f64 / (window - 1) as f64;
        let rescaled = rk.one_point(C64::new(x, 0.0));
        let limit = f_real(2.0 * x + 2.0 * l);
        worst = worst.max((rescaled - limit).abs());
        rows.push(ProfileRow { x, rescaled, limit });
    }
    Ok(BoundaryProfile {
        l,
        n,
        rows,
        max_deviation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::build_space;
    use approx::assert_relative_eq;

    #[test]
    fn rescale_round_trip() {
        let m = RescaleMap::with_laplacian(C64::new(0.3, -0.1), 100, 1.3, 2.0, 0.7).unwrap();
        assert_eq!(m.forward(m.p), C64::new(0.0, 0.0));
        for z in [C64::new(0.5, 0.2), C64::new(-1.0, 3.0)] {
            assert!((m.inverse(m.forward(z)) - z).norm() < 1e-14);
        }
        assert!(RescaleMap::with_laplacian(C64::new(0.0, 0.0), 4, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rescaled_bulk_density_is_one() {
        let s = build_space(&Potential::ginibre(), 64).unwrap();
        let m = RescaleMap::new(&Potential::ginibre(), C64::new(0.0, 0.0), 64, 1.0, 0.0).unwrap();
        assert!((rescale_kernel(&m, &s).one_point(C64::new(0.0, 0.0)) - 1.0).abs() < 0.01);
    }

    #[test]
    fn ginibre_modulus_is_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let w = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let a = ginibre_g(z, w).norm_sqr();
            assert!((a - (-(z - w).norm_sqr()).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_kernel_tends_to_ginibre() {
        let mut worst: f64 = 0.0;
        for i in -4..=4 {
            for j in -4..=4 {
                let z = C64::new(i as f64 * 0.5, j as f64 * 0.5);
                let w = C64::new(j as f64 * 0.5, -i as f64 * 0.3);
                worst = worst.max((boundary_k(-10.0, z, w) - ginibre_g(z, w)).norm());
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn boundary_diagonal_is_f() {
        for x in [-3.0, -0.5, 0.0, 1.2] {
            let z = C64::new(x, 0.7);
            assert_relative_eq!(boundary_k(0.4, z, z).re, f_real(2.0 * x + 0.8), max_relative = 1e-12);
        }
    }

    #[test]
    fn decay_on_diagonal_is_bounded_by_one() {
        for x in [-5.0, 0.0, 5.0] {
            assert!(implied_decay(0.0, C64::new(x, 1.0), C64::new(x, 1.0)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn disc_flux_matches_direct_quadrature() {
        // oracle: brute-force ∫_E∫_{|w|<R+8, w∉E} e^{−|z−w|²}
        let r = 1.5;
        let inner = Shape::disc(r).rule(8);
        let mut outer = Vec::new();
        for (rr, wr) in quad::composite(r, r + 8.0, 16, 8) {
            let nt = 160;
            for j in 0..nt {
                let t = 2.0 * PI * j as f64 / nt as f64;
                outer.push((C64::from_polar(rr, t), wr * rr * 2.0 / nt as f64));
            }
        }
        let mut brute = 0.0;
        for &(z, wz) in &inner {
            for &(w, ww) in &outer {
                brute += wz * ww * (-(z - w).norm_sqr()).exp();
            }
        }
        assert_relative_eq!(ginibre_disc_flux(r), brute, max_relative = 1e-7);
        // K_l far inside the bulk behaves as G
        let k = area_law(&LimitKernel::Boundary { l: -30.0 }, &Shape::disc(r)).unwrap();
        assert_relative_eq!(k.flux, brute, max_relative = 1e-6);
    }

    #[test]
    fn rect_flux_matches_rect_quadrature() {
        let g = ginibre_rect_flux(3.0, 2.0);
        let k = area_law(
            &LimitKernel::Boundary { l: -30.0 },
            &Shape::Rect {
                x0: 0.0,
                x1: 3.0,
                y0: 0.0,
                y1: 2.0,
            },
        )
        .unwrap();
        assert_relative_eq!(g, k.flux, max_relative = 1e-6);
    }

    #[test]
    fn boundary_kernel_reproduces_its_diagonal() {
        // ∫|K_l(z,w)|² dA(w) = F(2 Re z + 2l)
        let l = 0.3;
        let z = C64::new(-0.4, 0.2);
        // the vertical tail is only quadratic, hence the graded panels
        let xs = quad::composite(-12.0, 12.0, 48, 8);
        let mut ys = quad::composite(-16.0, 16.0, 32, 8);
        for k in 0..14 {
            let a = 16.0 * 2f64.powi(k);
            for (y, w) in quad::composite(a, 2.0 * a, 4, 8) {
                ys.push((y, w));
                ys.push((-y, w));
            }
        }
        let mut s = 0.0;
        for &(x, wx) in &xs {
            for &(y, wy) in &ys {
                s += wx * wy / PI * boundary_k(l, z, C64::new(x, y)).norm_sqr();
            }
        }
        assert_relative_eq!(s, f_real(2.0 * z.re + 2.0 * l), max_relative = 1e-5);
    }

    #[test]
    fn ginibre_edge_profile() {
        let s = build_space(&Potential::ginibre(), 256).unwrap();
        let d = Potential::ginibre().droplet().unwrap();
        let prof = boundary_profile(&s, &Potential::ginibre(), &d, 0.0, 81, 0.3).unwrap();
        assert!(prof.max_deviation < 0.0084, "{}", prof.max_deviation);
        assert!((prof.rows[0].rescaled - 1.0).abs() < 0.01);
        assert!(prof.rows[80].rescaled < 0.01);
    }
}
