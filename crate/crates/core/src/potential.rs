//! External potentials `Q`, their derivatives and equilibrium droplets.

use crate::error::{Error, Result};
use crate::quad;
use crate::C64;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(C64) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(C64) -> [f64; 2] + Send + Sync>;

/// A user supplied potential. Only `q` is mandatory; evaluating
/// derivatives requires `grad` and `lap`.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub q: ScalarFn,
    pub grad: Option<GradFn>,
    pub lap: Option<ScalarFn>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("name", &self.name)
            .field("grad", &self.grad.is_some())
            .field("lap", &self.lap.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `Q(ζ) = |ζ|^{2p}`
    RadialMonomial {
        p: u32,
    },
    /// `Q(ζ) = |ζ|^{2p} − t·Re(ζ^d)`
    RadialMonomialPlusHarmonic {
        p: u32,
        t: f64,
        d: u32,
    },
    Custom(CustomPotential),
}

/// Smoothness facts that the numerics rely on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub radial: bool,
    pub real_analytic: bool,
    pub subharmonic: bool,
}

/// A configuration of points, with a dilation margin `M`, used to describe
/// droplets that have no closed form.
#[derive(Debug, Clone)]
pub struct Reference {
    pub points: Vec<C64>,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub kind: PotentialKind,
    pub smoothness: Smoothness,
    reference: Option<Arc<Reference>>,
}

/// `(Q, ∇Q, ΔQ)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEval {
    pub q: f64,
    pub grad: [f64; 2],
    pub lap: f64,
}

impl Potential {
    pub fn ginibre() -> Self {
        Self::radial_monomial(1).expect("p = 1 is valid")
    }

    pub fn radial_monomial(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("radial monomial needs p >= 1".into()));
        }
        Ok(Potential {
            kind: PotentialKind::RadialMonomial { p },
            smoothness: Smoothness {
                radial: true,
                real_analytic: true,
                subharmonic: true,
            },
            reference: None,
        })
    }

    /// `|ζ|^{2p} − t·Re(ζ^d)`. The growth condition requires `d < 2p`, or
    /// `d = 2p` with `|t| < 1`.
    pub fn harmonic(p: u32, t: f64, d: u32) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(Error::Config("harmonic potential needs p, d >= 1".into()));
        }
        if !t.is_finite() {
            return Err(Error::Config("harmonic coefficient t must be finite".into()));
        }
        if d > 2 * p || (d == 2 * p && t.abs() >= 1.0) {
            return Err(Error::Config(format!(
                "|z|^{} - {t} Re z^{d} violates the growth condition",
                2 * p
            )));
        }
        Ok(Potential {
            kind: PotentialKind::RadialMonomialPlusHarmonic { p, t, d },
            smoothness: Smoothness {
                radial: t == 0.0,
                real_analytic: true,
                subharmonic: true,
            },
            reference: None,
        })
    }

    pub fn custom(custom: CustomPotential) -> Self {
        Potential {
            kind: PotentialKind::Custom(custom),
            smoothness: Smoothness {
                radial: false,
                real_analytic: false,
                subharmonic: false,
            },
            reference: None,
        }
    }

    /// Attaches a reference configuration (typically Fekete points) from
    /// which an empirical droplet is derived.
    pub fn with_reference(mut self, points: Vec<C64>, margin: f64) -> Self {
        self.reference = Some(Arc::new(Reference { points, margin }));
        self
    }

    pub fn reference(&self) -> Option<&Reference> {
        self.reference.as_deref()
    }

    pub fn name(&self) -> String {
        match &self.kind {
            PotentialKind::RadialMonomial { p } => format!("|z|^{}", 2 * p),
            PotentialKind::RadialMonomialPlusHarmonic { p, t, d } => {
                format!("|z|^{} - {t} Re z^{d}", 2 * p)
            }
            PotentialKind::Custom(c) => c.name.clone(),
        }
    }

    /// `Some(p)` when `Q = |ζ|^{2p}` exactly.
    pub fn radial_exponent(&self) -> Option<u32> {
        match self.kind {
            PotentialKind::RadialMonomial { p } => Some(p),
            PotentialKind::RadialMonomialPlusHarmonic { p, t: 0.0, .. } => Some(p),
            _ => None,
        }
    }

    /// The value `Q(ζ)` alone; the hot path of all samplers.
    #[inline]
    pub fn q(&self, z: C64) -> f64 {
        match &self.kind {
            PotentialKind::RadialMonomial { p } => z.norm_sqr().powi(*p as i32),
            PotentialKind::RadialMonomialPlusHarmonic { p, t, d } => z.norm_sqr().powi(*p as i32) - t * z.powu(*d).re,
            PotentialKind::Custom(c) => (c.q)(z),
        }
    }

    /// `Q`, its gradient and its (quarter) Laplacian.
    pub fn eval(&self, z: C64) -> Result<PotentialEval> {
        match &self.kind {
            PotentialKind::RadialMonomial { p } => Ok(radial_eval(*p, z)),
            PotentialKind::RadialMonomialPlusHarmonic { p, t, d } => {
                let mut e = radial_eval(*p, z);
                let zd = z.powu(*d);
                let dz = z.powu(d - 1) * (*d as f64);
                e.q -= t * zd.re;
                e.grad[0] -= t * dz.re;
                e.grad[1] += t * dz.im;
                Ok(e)
            }
            PotentialKind::Custom(c) => {
                let grad = c
                    .grad
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("custom potential '{}' has no gradient", c.name)))?;
                let lap = c
                    .lap
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("custom potential '{}' has no Laplacian", c.name)))?;
                Ok(PotentialEval {
                    q: (c.q)(z),
                    grad: grad(z),
                    lap: lap(z),
                })
            }
        }
    }

    /// `ΔQ(ζ)`; fails for custom kinds without a Laplacian.
    pub fn laplacian(&self, z: C64) -> Result<f64> {
        match &self.kind {
            PotentialKind::RadialMonomial { p } | PotentialKind::RadialMonomialPlusHarmonic { p, .. } => {
                let pf = *p as f64;
                Ok(pf * pf * z.norm_sqr().powi(*p as i32 - 1))
            }
            PotentialKind::Custom(_) => self.eval(z).map(|e| e.lap),
        }
    }

    /// The droplet: analytic for radial monomials, otherwise the dilated
    /// hull of the attached reference configuration.
    pub fn droplet(&self) -> Result<Droplet> {
        if let Some(p) = self.radial_exponent() {
            return Ok(Droplet {
                kind: DropletKind::Disc {
                    radius: radial_droplet_radius(p),
                },
            });
        }
        match &self.reference {
            Some(r) => Droplet::empirical(&r.points, r.margin),
            None => Err(Error::Unsupported(format!(
                "droplet of '{}' needs a reference configuration",
                self.name()
            ))),
        }
    }

    /// Largest `ΔQ` over a droplet, sampled on a polar grid.
    pub fn max_laplacian_on(&self, droplet: &Droplet) -> Result<f64> {
        if let Some(p) = self.radial_exponent() {
            let r = droplet.bounding_radius();
            let pf = p as f64;
            return Ok(pf * pf * r.powi(2 * p as i32 - 2));
        }
        let r = droplet.bounding_radius();
        let mut best: f64 = 0.0;
        for i in 0..=32 {
            for j in 0..64 {
                let z = C64::from_polar(r * i as f64 / 32.0, 2.0 * PI * j as f64 / 64.0);
                if droplet.contains(z) {
                    best = best.max(self.laplacian(z)?);
                }
            }
        }
        Ok(best)
    }
}

fn radial_eval(p: u32, z: C64) -> PotentialEval {
    let pf = p as f64;
    let s = z.norm_sqr();
    let s1 = s.powi(p as i32 - 1);
    PotentialEval {
        q: s1 * s,
        grad: [2.0 * pf * s1 * z.re, 2.0 * pf * s1 * z.im],
        lap: pf * pf * s1,
    }
}

/// Radius of the droplet of `|ζ|^{2p}`, from `∫_{|ζ|<R} p²|ζ|^{2p−2} dA = pR^{2p} = 1`.
pub fn radial_droplet_radius(p: u32) -> f64 {
    (p as f64).powf(-1.0 / (2.0 * p as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropletKind {
    Disc {
        radius: f64,
    },
    Annulus {
        r_in: f64,
        r_out: f64,
    },
    /// Convex hull (counter-clockwise) dilated by `margin`.
    Empirical {
        hull: Vec<C64>,
        margin: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Droplet {
    pub kind: DropletKind,
}

impl Droplet {
    pub fn disc(radius: f64) -> Self {
        Droplet {
            kind: DropletKind::Disc { radius },
        }
    }

    /// Hull of `points` dilated by `margin·/√n`.
    pub fn empirical(points: &[C64], margin: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Config("empirical droplet needs at least 3 points".into()));
        }
        let hull = convex_hull(points);
        Ok(Droplet {
            kind: DropletKind::Empirical {
                hull,
                margin: margin / (points.len() as f64).sqrt(),
            },
        })
    }

    /// Distance `δ(ζ)` from `ζ` to the droplet.
    pub fn delta(&self, z: C64) -> f64 {
        match &self.kind {
            DropletKind::Disc { radius } => (z.norm() - radius).max(0.0),
            DropletKind::Annulus { r_in, r_out } => {
                let r = z.norm();
                (r - r_out).max(r_in - r).max(0.0)
            }
            DropletKind::Empirical { hull, margin } => (polygon_distance(hull, z) - margin).max(0.0),
        }
    }

    /// Distance from `ζ` to the complement of the droplet, 0 outside.
    pub fn depth(&self, z: C64) -> f64 {
        match &self.kind {
            DropletKind::Disc { radius } => (radius - z.norm()).max(0.0),
            DropletKind::Annulus { r_in, r_out } => {
                let r = z.norm();
                (r_out - r).min(r - r_in).max(0.0)
            }
            DropletKind::Empirical { hull, margin } => {
                let k = hull.len();
                let edge = (0..k)
                    .map(|i| segment_distance(hull[i], hull[(i + 1) % k], z))
                    .fold(f64::INFINITY, f64::min);
                if polygon_distance(hull, z) == 0.0 {
                    edge + margin
                } else {
                    (margin - edge).max(0.0)
                }
            }
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        self.delta(z) == 0.0
    }

    /// Boundary point hit by the ray from the origin at angle `theta`,
    /// together with the outward unit normal there.
    pub fn boundary(&self, theta: f64) -> (C64, C64) {
        let e = C64::from_polar(1.0, theta);
        match &self.kind {
            DropletKind::Disc { radius } => (e * radius, e),
            DropletKind::Annulus { r_out, .. } => (e * r_out, e),
            DropletKind::Empirical { .. } => {
                let (mut lo, mut hi) = (0.0, 2.0 * self.bounding_radius() + 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.contains(e * mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let q = e * lo;
                let h = 1e-6 * (1.0 + lo);
                let dx = self.delta(q + C64::new(h, 0.0) + e * h) - self.delta(q - C64::new(h, 0.0) + e * h);
                let dy = self.delta(q + C64::new(0.0, h) + e * h) - self.delta(q - C64::new(0.0, h) + e * h);
                let g = C64::new(dx, dy);
                let normal = if g.norm() > 0.0 { g / g.norm() } else { e };
                (q, normal)
            }
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match &self.kind {
            DropletKind::Disc { radius } => *radius,
            DropletKind::Annulus { r_out, .. } => *r_out,
            DropletKind::Empirical { hull, margin } => hull.iter().map(|z| z.norm()).fold(0.0, f64::max) + margin,
        }
    }

    /// `M`-vicinity test `δ(ζ) < M/√n`, returning `δ(ζ)` as well.
    pub fn vicinity(&self, z: C64, m: f64, n: usize) -> (bool, f64) {
        let d = self.delta(z);
        (d < m / (n as f64).sqrt(), d)
    }

    /// Normalised area `|S|`.
    pub fn area(&self) -> f64 {
        match &self.kind {
            DropletKind::Disc { radius } => radius * radius,
            DropletKind::Annulus { r_in, r_out } => r_out * r_out - r_in * r_in,
            DropletKind::Empirical { hull, margin } => {
                let mut a = 0.0;
                let mut per = 0.0;
                for i in 0..hull.len() {
                    let p = hull[i];
                    let q = hull[(i + 1) % hull.len()];
                    a += 0.5 * (p.re * q.im - q.re * p.im);
                    per += (q - p).norm();
                }
                (a + per * margin + PI * margin * margin) / PI
            }
        }
    }
}

/// `M`-vicinity of the droplet, as a free function.
pub fn vicinity(droplet: &Droplet, z: C64, m: f64, n: usize) -> (bool, f64) {
    droplet.vicinity(z, m, n)
}

/// Density of the equilibrium measure, `1_S·ΔQ`.
pub fn equilibrium_density(potential: &Potential, droplet: &Droplet, z: C64) -> Result<f64> {
    if !droplet.contains(z) {
        return Ok(0.0);
    }
    let lap = potential.laplacian(z)?;
    if lap < 0.0 {
        return Err(Error::Model(format!("ΔQ = {lap} < 0 inside the droplet at {z}")));
    }
    Ok(lap)
}

/// `∫_S ΔQ dA` by composite radial Gauss–Legendre times an angular
/// trapezoid rule; equals one for a correct droplet.
pub fn equilibrium_mass(potential: &Potential, droplet: &Droplet) -> Result<f64> {
    let (r0, r1) = match droplet.kind {
        DropletKind::Disc { radius } => (0.0, radius),
        DropletKind::Annulus { r_in, r_out } => (r_in, r_out),
        DropletKind::Empirical { .. } => (0.0, droplet.bounding_radius()),
    };
    let angular = 128;
    let dt = 2.0 * PI / angular as f64;
    let mut total = 0.0;
    for (r, wr) in quad::composite(r0, r1, 16, 20) {
        let mut ring = 0.0;
        for j in 0..angular {
            let z = C64::from_polar(r, dt * j as f64);
            ring += equilibrium_density(potential, droplet, z)?;
        }
        total += wr * r * ring * dt / PI;
    }
    Ok(total)
}

fn cross(o: C64, a: C64, b: C64) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
pub fn convex_hull(points: &[C64]) -> Vec<C64> {
    let mut pts: Vec<C64> = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<C64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Distance to a convex counter-clockwise polygon, zero inside.
fn polygon_distance(hull: &[C64], z: C64) -> f64 {
    let k = hull.len();
    let inside = (0..k).all(|i| cross(hull[i], hull[(i + 1) % k], z) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..k)
        .map(|i| segment_distance(hull[i], hull[(i + 1) % k], z))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(a: C64, b: C64, z: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let g = Potential::ginibre();
        let e = g.eval(C64::new(0.0, 0.0)).unwrap();
        assert_eq!((e.q, e.grad, e.lap), (0.0, [0.0, 0.0], 1.0));
        let q4 = Potential::radial_monomial(2).unwrap();
        let e = q4.eval(C64::new(1.0, 0.0)).unwrap();
        assert_eq!((e.q, e.grad, e.lap), (1.0, [4.0, 0.0], 4.0));
    }

    #[test]
    fn harmonic_at_i_against_finite_differences() {
        let t = 2.0 / 2f64.sqrt();
        let pot = Potential::harmonic(2, t, 2).unwrap();
        let z = C64::new(0.0, 1.0);
        let e = pot.eval(z).unwrap();
        assert_relative_eq!(e.q, 1.0 + t, epsilon = 1e-15);
        let h = 1e-5;
        let fx = (pot.q(z + h) - pot.q(z - h)) / (2.0 * h);
        let ih = C64::new(0.0, h);
        let fy = (pot.q(z + ih) - pot.q(z - ih)) / (2.0 * h);
        let lap = (pot.q(z + h) + pot.q(z - h) + pot.q(z + ih) + pot.q(z - ih) - 4.0 * pot.q(z)) / (4.0 * h * h);
        assert_relative_eq!(e.grad[0], fx, max_relative = 1e-8, epsilon = 1e-9);
        assert_relative_eq!(e.grad[1], fy, max_relative = 1e-8);
        assert_relative_eq!(e.lap, lap, max_relative = 1e-5);
        assert_relative_eq!(e.lap, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn custom_without_derivatives_is_a_config_error() {
        let pot = Potential::custom(CustomPotential {
            name: "flat".into(),
            q: Arc::new(|_| 0.0),
            grad: None,
            lap: None,
        });
        assert!(matches!(pot.eval(C64::new(0.0, 0.0)), Err(Error::Config(_))));
        assert!(matches!(pot.droplet(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn droplet_examples() {
        let d1 = Potential::ginibre().droplet().unwrap();
        assert_eq!(d1, Droplet::disc(1.0));
        assert_eq!(d1.delta(C64::new(2.0, 0.0)), 1.0);
        let d2 = Potential::radial_monomial(2).unwrap().droplet().unwrap();
        assert_relative_eq!(d2.bounding_radius(), 2f64.powf(-0.25), epsilon = 1e-15);
        assert_relative_eq!(d2.bounding_radius(), 0.8409, epsilon = 1e-4);
    }

    #[test]
    fn vicinity_examples() {
        let d = Droplet::disc(1.0);
        assert_eq!(d.vicinity(C64::new(0.0, 0.0), 3.0, 10), (true, 0.0));
        let n = 64;
        let z = C64::new(1.0 + 1.0 / (n as f64).sqrt(), 0.0);
        assert_eq!(d.vicinity(z, 1.0, n), (false, 0.125));
        let (inside, delta) = d.vicinity(C64::new(1.5, 0.0), 2.0, 100);
        assert!(!inside);
        assert_relative_eq!(delta, 0.5);
    }

    #[test]
    fn density_examples() {
        let g = Potential::ginibre();
        let d = g.droplet().unwrap();
        assert_eq!(equilibrium_density(&g, &d, C64::new(0.5, 0.0)).unwrap(), 1.0);
        assert_eq!(equilibrium_density(&g, &d, C64::new(2.0, 0.0)).unwrap(), 0.0);
        let q4 = Potential::radial_monomial(2).unwrap();
        let d4 = q4.droplet().unwrap();
        assert_eq!(equilibrium_density(&q4, &d4, C64::new(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn negative_laplacian_is_a_model_violation() {
        let pot = Potential::custom(CustomPotential {
            name: "saddle".into(),
            q: Arc::new(|z: C64| -z.norm_sqr()),
            grad: Some(Arc::new(|z: C64| [-2.0 * z.re, -2.0 * z.im])),
            lap: Some(Arc::new(|_| -1.0)),
        });
        let d = Droplet::disc(1.0);
        assert!(matches!(
            equilibrium_density(&pot, &d, C64::new(0.1, 0.0)),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn radial_masses_are_one() {
        for p in 1..=4 {
            let pot = Potential::radial_monomial(p).unwrap();
            let d = pot.droplet().unwrap();
            assert_relative_eq!(equilibrium_mass(&pot, &d).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn growth_condition_is_enforced() {
        assert!(Potential::harmonic(1, 1.5, 2).is_err());
        assert!(Potential::harmonic(1, 0.5, 3).is_err());
        assert!(Potential::harmonic(3, 2.0 / 5f64.sqrt(), 3).is_ok());
    }

    #[test]
    fn empirical_droplet_of_a_square() {
        let pts = [
            C64::new(-1.0, -1.0),
            C64::new(1.0, -1.0),
            C64::new(1.0, 1.0),
            C64::new(-1.0, 1.0),
            C64::new(0.0, 0.0),
        ];
        let d = Droplet::empirical(&pts, 0.0).unwrap();
        assert_eq!(d.delta(C64::new(0.5, 0.5)), 0.0);
        assert_relative_eq!(d.delta(C64::new(3.0, 0.0)), 2.0);
        assert_relative_eq!(d.area(), 4.0 / PI, epsilon = 1e-14);
        let (q, nrm) = d.boundary(0.0);
        assert_relative_eq!(q.re, 1.0, epsilon = 1e-9);
        assert_relative_eq!(nrm.re, 1.0, epsilon = 1e-6);
    }
}
