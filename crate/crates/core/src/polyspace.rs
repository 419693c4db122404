//! Weighted polynomial spaces `𝒲_m = {q·e^{−mQ/2} : deg q < m}`, their
//! reproducing kernels and weighted Lagrange polynomials.
//!
//! Radial potentials `|ζ|^{2p}` have orthogonal monomials, so only the
//! norms `h_k = ∫|ζ|^{2k}e^{−m|ζ|^{2p}} dA` are needed; they come from a
//! one dimensional log-domain quadrature. All other potentials are
//! orthonormalised by an Arnoldi process on polar quadrature nodes, one
//! block per residue class of the degree modulo the rotational symmetry
//! order.

use crate::ensemble::{energy_delta, equilibrium_draw, metropolis_accept, Configuration};
use crate::error::{Error, Result};
use crate::potential::{Droplet, Potential, PotentialKind};
use crate::quad;
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

const TAIL: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;
const RADIAL_ORDER: usize = 10;

/// Polar product rule on `D(0, r_cut)`: composite Gauss–Legendre in the
/// radius, `angular` equispaced angles per turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarQuadrature {
    pub r_cut: f64,
    pub radial: Vec<(f64, f64)>,
    pub angular: usize,
}

impl PolarQuadrature {
    fn new(r_cut: f64, panel_width: f64, angular: usize) -> Self {
        let panels = ((r_cut / panel_width).ceil() as usize).max(4);
        PolarQuadrature {
            r_cut,
            radial: quad::composite(0.0, r_cut, panels, RADIAL_ORDER),
            angular,
        }
    }

    pub fn len(&self) -> usize {
        self.radial.len() * self.angular
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes with weights that include the `1/π` of `dA`.
    pub fn nodes(&self) -> impl Iterator<Item = (C64, f64)> + '_ {
        self.sector_nodes(1)
    }

    /// Nodes in the sector `0 ≤ arg < 2π/sectors`, weights scaled by
    /// `sectors`. Exact for integrands invariant under that rotation.
    pub fn sector_nodes(&self, sectors: usize) -> impl Iterator<Item = (C64, f64)> + '_ {
        let dt = 2.0 * PI / self.angular as f64;
        let per = self.angular / sectors;
        self.radial.iter().flat_map(move |&(r, wr)| {
            (0..per).map(move |j| {
                let t = dt * (j as f64 + 0.5);
                (C64::from_polar(r, t), wr * r * dt / PI * sectors as f64)
            })
        })
    }
}

#[derive(Debug, Clone)]
struct Block {
    residue: usize,
    norm0: f64,
    /// Column `i` holds `h_{0..=i+1, i}` of the Hessenberg recurrence.
    hess: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
enum Basis {
    Radial { log_h: Vec<f64> },
    Arnoldi { d: usize, blocks: Vec<Block> },
}

/// Summary written to run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub m: usize,
    pub potential: String,
    pub condition_estimate: f64,
    pub gram_error: f64,
    pub quadrature_nodes: usize,
    pub r_cut: f64,
}

/// Order-`m` weighted polynomial space with an orthonormal basis.
#[derive(Debug, Clone)]
pub struct WeightedPolySpace {
    pub m: usize,
    pub potential: Potential,
    pub quadrature: PolarQuadrature,
    pub condition_estimate: f64,
    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub gram_error: f64,
    basis: Basis,
}

/// `ln ∫|ζ|^{2k} e^{−m|ζ|^{2p}} dA = ln ∫₀^∞ 2r^{2k+1} e^{−m r^{2p}} dr`,
/// by composite Gauss–Legendre around the peak of the integrand.
pub fn radial_log_norm(k: usize, m: usize, p: u32) -> f64 {
    let a = 2.0 * k as f64 + 1.0;
    let pf = p as f64;
    let mf = m as f64;
    let peak = (a / (2.0 * pf * mf)).powf(1.0 / (2.0 * pf));
    let sigma = peak / (2.0 * pf * a).sqrt();
    let lo = (peak - 20.0 * sigma).max(0.0);
    let hi = peak + 20.0 * sigma;
    let f = |r: f64| 2f64.ln() + a * r.ln() - mf * r.powf(2.0 * pf);
    let top = f(peak);
    let s: f64 = quad::composite(lo, hi, 40, 20)
        .into_iter()
        .map(|(r, w)| w * (f(r) - top).exp())
        .sum();
    top + s.ln()
}

fn symmetry_order(potential: &Potential) -> usize {
    match potential.kind {
        PotentialKind::RadialMonomialPlusHarmonic { d, .. } => d as usize,
        _ => 1,
    }
}

/// Radius beyond which the basis is negligible, first guess.
fn cut_radius_guess(potential: &Potential, m: usize) -> f64 {
    let (base, lap) = match &potential.kind {
        PotentialKind::RadialMonomial { p } => {
            let r = crate::potential::radial_droplet_radius(*p);
            (r, (*p as f64).powi(2) * r.powi(2 * *p as i32 - 2))
        }
        PotentialKind::RadialMonomialPlusHarmonic { p, t, d } => {
            // largest root of r^{2p} − |t|r^d = 1
            let g = |r: f64| r.powi(2 * *p as i32) - t.abs() * r.powi(*d as i32) - 1.0;
            let (mut lo, mut hi) = (0.0, 1.0);
            while g(hi) < 0.0 {
                hi *= 2.0;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (hi, (*p as f64).powi(2) * hi.powi(2 * *p as i32 - 2))
        }
        PotentialKind::Custom(_) => match potential.droplet() {
            Ok(d) => (d.bounding_radius(), 1.0),
            Err(_) => (1.0, 1.0),
        },
    };
    base + 7.0 / (m as f64 * lap.max(1.0)).sqrt()
}

/// Builds the order-`m` space of `potential`.
pub fn build_space(potential: &Potential, m: usize) -> Result<WeightedPolySpace> {
    if m == 0 {
        return Err(Error::Config("space order m must be at least 1".into()));
    }
    match potential.radial_exponent() {
        Some(p) => build_radial(potential, m, p),
        None => build_arnoldi(potential, m),
    }
}

fn build_radial(potential: &Potential, m: usize, p: u32) -> Result<WeightedPolySpace> {
    let log_h: Vec<f64> = (0..m).map(|k| radial_log_norm(k, m, p)).collect();
    if log_h.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("non-finite monomial norm for m={m}")));
    }
    let mf = m as f64;
    let r_drop = crate::potential::radial_droplet_radius(p);
    let log_abs = |k: usize, r: f64| k as f64 * r.ln() - 0.5 * mf * r.powi(2 * p as i32) - 0.5 * log_h[k];
    let step = 0.02 / mf.sqrt();
    let mut r_cut = r_drop;
    let mut guard = 0;
    while (0..m).any(|k| log_abs(k, r_cut) > TAIL.ln()) {
        r_cut += step;
        guard += 1;
        if guard > 100_000 {
            return Err(Error::TailCapture(format!("radial space m={m}, p={p}")));
        }
    }
    let lap_edge = (p as f64).powi(2) * r_cut.powi(2 * p as i32 - 2);
    let width = 0.5 / (mf * lap_edge.max(1.0)).sqrt();
    let quadrature = PolarQuadrature::new(r_cut, width, 4 * m + 16);
    // off-diagonal Gram entries vanish exactly under the angular rule, the
    // diagonal is checked with the two dimensional radial nodes
    let mut gram_error: f64 = 0.0;
    for (k, lh) in log_h.iter().enumerate() {
        let s: f64 = quadrature
            .radial
            .iter()
            .filter(|(r, _)| *r > 0.0)
            .map(|&(r, w)| {
                let e = 2.0 * k as f64 * r.ln() - mf * r.powi(2 * p as i32) - lh;
                2.0 * r * w * e.exp()
            })
            .sum();
        gram_error = gram_error.max((s - 1.0).abs());
    }
    if gram_error > 1e-8 {
        return Err(Error::Numerical(format!(
            "radial Gram deviates from identity by {gram_error:e} (m={m})"
        )));
    }
    Ok(WeightedPolySpace {
        m,
        potential: potential.clone(),
        quadrature,
        condition_estimate: 1.0,
        gram_error,
        basis: Basis::Radial { log_h },
    })
}

/// About 1 GiB of complex Krylov vectors per residue block.
const MAX_KRYLOV_ENTRIES: f64 = 6.0e7;

fn build_arnoldi(potential: &Potential, m: usize) -> Result<WeightedPolySpace> {
    let d = symmetry_order(potential);
    let mf = m as f64;
    let mut r_cut = cut_radius_guess(potential, m);
    let extra = match potential.kind {
        PotentialKind::RadialMonomialPlusHarmonic { t, d, .. } => (mf * t.abs() * r_cut.powi(d as i32)).ceil() as usize,
        _ => m,
    };
    for _attempt in 0..8 {
        // products φ_jφ̄_k have degree < 2m in θ, the weight adds a band of about `extra`
        let mut angular = 2 * m + 2 * extra + 64;
        angular = angular.div_ceil(d) * d;
        let lap = match potential.kind {
            PotentialKind::RadialMonomial { p } | PotentialKind::RadialMonomialPlusHarmonic { p, .. } => {
                (p as f64).powi(2) * r_cut.powi(2 * p as i32 - 2)
            }
            _ => 1.0,
        };
        let width = 1.0 / (mf * lap.max(1.0)).sqrt();
        let quadrature = PolarQuadrature::new(r_cut, width, angular);
        let entries = quadrature.radial.len() as f64 * (angular / d) as f64 * m.div_ceil(d) as f64;
        if entries > MAX_KRYLOV_ENTRIES {
            return Err(Error::Numerical(format!(
                "Krylov basis for '{}' (m={m}) needs {entries:.2e} entries on {} x {angular} nodes",
                potential.name(),
                quadrature.radial.len()
            )));
        }
        let space = arnoldi(potential, m, d, quadrature)?;
        // tail capture on the cut circle
        let mut vals = vec![C64::new(0.0, 0.0); m];
        let mut worst: f64 = 0.0;
        for j in 0..(4 * m + 16) {
            let z = C64::from_polar(r_cut, 2.0 * PI * j as f64 / (4 * m + 16) as f64);
            space.basis_values(z, &mut vals);
            worst = vals.iter().fold(worst, |a, v| a.max(v.norm()));
        }
        if worst < TAIL {
            return Ok(space);
        }
        r_cut *= 1.15;
    }
    Err(Error::TailCapture(format!(
        "basis of '{}' (m={m}) not negligible on the largest tried cut radius {r_cut:.3}",
        potential.name()
    )))
}

fn arnoldi(potential: &Potential, m: usize, d: usize, quadrature: PolarQuadrature) -> Result<WeightedPolySpace> {
    let mf = m as f64;
    let nodes: Vec<(C64, f64)> = quadrature.sector_nodes(d).collect();
    let weight: Vec<f64> = nodes.iter().map(|&(z, _)| (-0.5 * mf * potential.q(z)).exp()).collect();
    let zd: Vec<C64> = nodes.iter().map(|&(z, _)| z.powu(d as u32)).collect();
    let inner = |a: &[C64], b: &[C64]| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for ((x, y), (_, w)) in a.iter().zip(b).zip(&nodes) {
            s += x * y.conj() * w;
        }
        s
    };
    let mut blocks = Vec::new();
    let mut condition: f64 = 1.0;
    let mut gram_error: f64 = 0.0;
    for residue in 0..d.min(m) {
        let size = (m - residue).div_ceil(d);
        let mut v0: Vec<C64> = nodes
            .iter()
            .zip(&weight)
            .map(|(&(z, _), &w)| z.powu(residue as u32) * w)
            .collect();
        let norm0 = inner(&v0, &v0).re.sqrt();
        if !(norm0 > 0.0 && norm0.is_finite()) {
            return Err(Error::Numerical(format!("degenerate start vector in block {residue}")));
        }
        v0.iter_mut().for_each(|x| *x /= norm0);
        let mut vs = vec![v0];
        let mut hess = Vec::with_capacity(size.saturating_sub(1));
        for i in 0..size.saturating_sub(1) {
            let mut w: Vec<C64> = vs[i].iter().zip(&zd).map(|(v, z)| v * z).collect();
            let raw = inner(&w, &w).re.sqrt();
            let mut col = vec![C64::new(0.0, 0.0); i + 2];
            for _pass in 0..2 {
                for (j, v) in vs.iter().enumerate() {
                    let c = inner(&w, v);
                    col[j] += c;
                    for (x, y) in w.iter_mut().zip(v) {
                        *x -= c * y;
                    }
                }
            }
            let hn = inner(&w, &w).re.sqrt();
            let ratio = raw / hn;
            if !(hn > 0.0 && ratio.is_finite()) || ratio > MAX_CONDITION {
                return Err(Error::Conditioning {
                    m,
                    potential: potential.name(),
                    estimate: if ratio.is_finite() { ratio } else { f64::INFINITY },
                });
            }
            condition = condition.max(ratio);
            col[i + 1] = C64::new(hn, 0.0);
            w.iter_mut().for_each(|x| *x /= hn);
            vs.push(w);
            hess.push(col);
        }
        for a in 0..vs.len() {
            for b in a..vs.len() {
                let g = inner(&vs[a], &vs[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                gram_error = gram_error.max((g - target).norm());
            }
        }
        blocks.push(Block { residue, norm0, hess });
    }
    if gram_error > 1e-8 {
        return Err(Error::Numerical(format!(
            "Arnoldi Gram deviates from identity by {gram_error:e} (m={m})"
        )));
    }
    Ok(WeightedPolySpace {
        m,
        potential: potential.clone(),
        quadrature,
        condition_estimate: condition,
        gram_error,
        basis: Basis::Arnoldi { d, blocks },
    })
}

impl WeightedPolySpace {
    pub fn summary(&self) -> SpaceSummary {
        SpaceSummary {
            m: self.m,
            potential: self.potential.name(),
            condition_estimate: self.condition_estimate,
            gram_error: self.gram_error,
            quadrature_nodes: self.quadrature.len(),
            r_cut: self.quadrature.r_cut,
        }
    }

    /// `ln h_k` for radial spaces.
    pub fn log_norms(&self) -> Option<&[f64]> {
        match &self.basis {
            Basis::Radial { log_h, .. } => Some(log_h),
            Basis::Arnoldi { .. } => None,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.basis, Basis::Radial { .. })
    }

    /// Writes `φ_0(ζ), …, φ_{m−1}(ζ)` into `out`; `φ_k` has degree `k`.
    pub fn basis_values(&self, z: C64, out: &mut [C64]) {
        let mf = self.m as f64;
        let half_q = 0.5 * mf * self.potential.q(z);
        match &self.basis {
            Basis::Radial { log_h, .. } => {
                let r = z.norm();
                if r == 0.0 {
                    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                    out[0] = C64::new((-half_q - 0.5 * log_h[0]).exp(), 0.0);
                    return;
                }
                let lr = r.ln();
                let u = z / r;
                let mut ph = C64::new(1.0, 0.0);
                for (k, (o, lh)) in out.iter_mut().zip(log_h).enumerate() {
                    let e = k as f64 * lr - half_q - 0.5 * lh;
                    *o = ph * e.exp();
                    ph *= u;
                    if k % 64 == 63 {
                        ph /= ph.norm();
                    }
                }
            }
            Basis::Arnoldi { d, blocks } => {
                let w = (-half_q).exp();
                let zd = z.powu(*d as u32);
                let mut vs: Vec<C64> = Vec::new();
                for b in blocks {
                    vs.clear();
                    vs.push(z.powu(b.residue as u32) * w / b.norm0);
                    for (i, col) in b.hess.iter().enumerate() {
                        let mut next = zd * vs[i];
                        for (j, h) in col.iter().take(i + 1).enumerate() {
                            next -= h * vs[j];
                        }
                        vs.push(next / col[i + 1]);
                    }
                    for (i, v) in vs.iter().enumerate() {
                        out[b.residue + i * d] = *v;
                    }
                }
            }
        }
    }

    pub fn basis_vec(&self, z: C64) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.m];
        self.basis_values(z, &mut v);
        v
    }

    /// `Σ c_k φ_k(ζ)`.
    pub fn eval(&self, coeffs: &[C64], z: C64) -> C64 {
        let v = self.basis_vec(z);
        coeffs.iter().zip(&v).map(|(c, p)| c * p).sum()
    }

    /// Reproducing kernel `K(ζ,η) = Σ φ_k(ζ)·conj φ_k(η)`.
    pub fn kernel(&self, z: C64, w: C64) -> C64 {
        match &self.basis {
            Basis::Radial { log_h, .. } => {
                let mf = self.m as f64;
                let base = -0.5 * mf * (self.potential.q(z) + self.potential.q(w));
                let r = z.norm() * w.norm();
                if r == 0.0 {
                    return C64::new((base - log_h[0]).exp(), 0.0);
                }
                let lr = r.ln();
                let exps: Vec<f64> = log_h.iter().enumerate().map(|(k, lh)| k as f64 * lr - lh).collect();
                let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let u = z * w.conj() / r;
                let mut ph = C64::new(1.0, 0.0);
                let mut s = C64::new(0.0, 0.0);
                for (k, e) in exps.iter().enumerate() {
                    s += ph * (e - top).exp();
                    ph *= u;
                    if k % 64 == 63 {
                        ph /= ph.norm();
                    }
                }
                s * (top + base).exp()
            }
            Basis::Arnoldi { .. } => {
                let a = self.basis_vec(z);
                let b = self.basis_vec(w);
                a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum()
            }
        }
    }

    /// One-point function `R(ζ) = K(ζ,ζ)`.
    pub fn one_point(&self, z: C64) -> f64 {
        match &self.basis {
            Basis::Radial { log_h, .. } => {
                let mf = self.m as f64;
                let base = -mf * self.potential.q(z);
                let r2 = z.norm_sqr();
                if r2 == 0.0 {
                    return (base - log_h[0]).exp();
                }
                let lr = r2.ln();
                let exps: Vec<f64> = log_h.iter().enumerate().map(|(k, lh)| k as f64 * lr - lh).collect();
                let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = exps.iter().map(|e| (e - top).exp()).sum();
                s * (top + base).exp()
            }
            Basis::Arnoldi { .. } => self.basis_vec(z).iter().map(|v| v.norm_sqr()).sum(),
        }
    }

    /// Berezin kernel `|K(ζ,η)|²/K(ζ,ζ)`, a probability density in `η`.
    pub fn berezin(&self, z: C64, w: C64) -> Result<f64> {
        let r = self.one_point(z);
        if !(r > 1e-300) {
            return Err(Error::Numerical(format!("Berezin kernel at {z}: R(ζ) = {r:e}")));
        }
        Ok(self.kernel(z, w).norm_sqr() / r)
    }

    /// Streams every quadrature node with its weight and basis values.
    pub fn for_each_node<F: FnMut(C64, f64, &[C64])>(&self, mut f: F) {
        let mut vals = vec![C64::new(0.0, 0.0); self.m];
        for (z, w) in self.quadrature.nodes() {
            self.basis_values(z, &mut vals);
            f(z, w, &vals);
        }
    }
}

pub fn kernel(space: &WeightedPolySpace, z: C64, w: C64) -> C64 {
    space.kernel(z, w)
}

pub fn one_point(space: &WeightedPolySpace, z: C64) -> f64 {
    space.one_point(z)
}

pub fn berezin(space: &WeightedPolySpace, z: C64, w: C64) -> Result<f64> {
    space.berezin(z, w)
}

/// Whether a [`KernelEval`] memoises basis vectors of second arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePolicy {
    None,
    Memoize,
}

/// Kernel evaluator bound to a space; with [`CachePolicy::Memoize`] the
/// basis vector of each `η` is computed once.
pub struct KernelEval<'a> {
    pub space: &'a WeightedPolySpace,
    pub policy: CachePolicy,
    cache: Mutex<HashMap<(u64, u64), Vec<C64>>>,
}

impl<'a> KernelEval<'a> {
    pub fn new(space: &'a WeightedPolySpace, policy: CachePolicy) -> Self {
        KernelEval {
            space,
            policy,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn kernel(&self, z: C64, w: C64) -> C64 {
        if self.policy == CachePolicy::None {
            return self.space.kernel(z, w);
        }
        let key = (w.re.to_bits(), w.im.to_bits());
        let a = self.space.basis_vec(z);
        let mut cache = self.cache.lock().expect("kernel cache poisoned");
        let b = cache.entry(key).or_insert_with(|| self.space.basis_vec(w));
        a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
    }

    pub fn one_point(&self, z: C64) -> f64 {
        self.space.one_point(z)
    }

    pub fn berezin(&self, z: C64, w: C64) -> Result<f64> {
        let r = self.one_point(z);
        if !(r > 1e-300) {
            return Err(Error::Numerical(format!("Berezin kernel at {z}: R(ζ) = {r:e}")));
        }
        Ok(self.kernel(z, w).norm_sqr() / r)
    }
}

/// Weighted Lagrange polynomials
/// `ℓ_j(ζ) = Π_{k≠j}(ζ−ζ_k)/(ζ_j−ζ_k)·e^{−n(Q(ζ)−Q(ζ_j))/2}` of a
/// configuration, evaluated as log-modulus plus phase.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    points: Vec<C64>,
    potential: Potential,
    log_den: Vec<f64>,
    phase_den: Vec<C64>,
    half_nq: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(config: &Configuration, potential: &Potential) -> Result<Self> {
        Self::from_points(&config.points, potential)
    }

    pub fn from_points(points: &[C64], potential: &Potential) -> Result<Self> {
        let n = points.len();
        let nf = n as f64;
        let mut log_den = vec![0.0; n];
        let mut phase_den = vec![C64::new(1.0, 0.0); n];
        for j in 0..n {
            let mut ph = C64::new(1.0, 0.0);
            let mut l = 0.0;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let d = points[j] - points[k];
                let a = d.norm();
                if a == 0.0 {
                    return Err(Error::Coincident(j.min(k), j.max(k)));
                }
                l += a.ln();
                ph *= d / a;
            }
            log_den[j] = l;
            phase_den[j] = ph / ph.norm();
        }
        let half_nq = points.iter().map(|&z| 0.5 * nf * potential.q(z)).collect();
        Ok(LagrangeBasis {
            points: points.to_vec(),
            potential: potential.clone(),
            log_den,
            phase_den,
            half_nq,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    fn node_hit(&self, z: C64) -> Option<usize> {
        self.points.iter().position(|&p| p == z)
    }

    /// All `ℓ_j(ζ)`.
    pub fn eval(&self, z: C64, out: &mut [C64]) {
        if let Some(j) = self.node_hit(z) {
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            out[j] = C64::new(1.0, 0.0);
            return;
        }
        let hq = 0.5 * self.points.len() as f64 * self.potential.q(z);
        let mut s = 0.0;
        let mut ph = C64::new(1.0, 0.0);
        for &p in &self.points {
            let d = z - p;
            let a = d.norm();
            s += a.ln();
            ph *= d / a;
        }
        ph /= ph.norm();
        for (j, o) in out.iter_mut().enumerate() {
            let d = z - self.points[j];
            let a = d.norm();
            let e = s - a.ln() - self.log_den[j] - hq + self.half_nq[j];
            *o = ph * (d.conj() / a) * self.phase_den[j].conj() * e.exp();
        }
    }

    pub fn eval_vec(&self, z: C64) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.points.len()];
        self.eval(z, &mut v);
        v
    }

    /// All `|ℓ_j(ζ)|`, cheaper than [`Self::eval`].
    pub fn abs_values(&self, z: C64, out: &mut [f64]) {
        if let Some(j) = self.node_hit(z) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j] = 1.0;
            return;
        }
        let hq = 0.5 * self.points.len() as f64 * self.potential.q(z);
        let logs: Vec<f64> = self.points.iter().map(|&p| (z - p).norm().ln()).collect();
        let s: f64 = logs.iter().sum();
        for (j, o) in out.iter_mut().enumerate() {
            *o = (s - logs[j] - self.log_den[j] - hq + self.half_nq[j]).exp();
        }
    }
}

/// `ℓ_1(ζ), …, ℓ_n(ζ)` for a configuration.
pub fn lagrange(config: &Configuration, potential: &Potential, z: C64) -> Result<Vec<C64>> {
    Ok(LagrangeBasis::new(config, potential)?.eval_vec(z))
}

/// `sup_S |ℓ_j|` on a square grid of pitch `0.2/√n` over the droplet,
/// plus the nodes themselves.
pub fn sup_norms_lagrange(config: &Configuration, potential: &Potential, droplet: &Droplet) -> Result<Vec<f64>> {
    sup_norms_lagrange_with(config, potential, droplet, 0.2)
}

pub fn sup_norms_lagrange_with(
    config: &Configuration,
    potential: &Potential,
    droplet: &Droplet,
    pitch_factor: f64,
) -> Result<Vec<f64>> {
    let basis = LagrangeBasis::new(config, potential)?;
    let n = config.n;
    let h = pitch_factor / (n as f64).sqrt();
    let r = droplet.bounding_radius();
    let steps = (r / h).ceil() as i64;
    let mut sup = vec![1.0f64; n];
    let mut vals = vec![0.0; n];
    for i in -steps..=steps {
        for j in -steps..=steps {
            let z = C64::new(i as f64 * h, j as f64 * h);
            if !droplet.contains(z) {
                continue;
            }
            basis.abs_values(z, &mut vals);
            for (s, v) in sup.iter_mut().zip(&vals) {
                *s = s.max(*v);
            }
        }
    }
    Ok(sup)
}

fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random element of the space with standard complex normal coordinates.
pub fn random_element<R: Rng>(space: &WeightedPolySpace, rng: &mut R) -> Vec<C64> {
    (0..space.m).map(|_| complex_normal(rng)).collect()
}

/// Largest implied constant of a sampled inequality and the bound it is
/// compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantCheck {
    pub max_implied: f64,
    pub bound: f64,
    pub trials: usize,
    pub passed: bool,
}

fn max_laplacian_on_disc(potential: &Potential, c: C64, radius: f64) -> Result<f64> {
    if let Some(p) = potential.radial_exponent() {
        let pf = p as f64;
        return Ok(pf * pf * (c.norm() + radius).powi(2 * p as i32 - 2));
    }
    let mut best: f64 = 0.0;
    for (z, _) in quad::disc_rule(c, radius, 6, 12) {
        best = best.max(potential.laplacian(z)?);
    }
    Ok(best.max(potential.laplacian(c)?))
}

fn disc_integral<F: Fn(C64) -> f64>(c: C64, radius: f64, f: F) -> f64 {
    quad::disc_rule(c, radius, 16, 32)
        .into_iter()
        .map(|(z, w)| w * f(z))
        .sum()
}

fn sample_in_disc<R: Rng>(rng: &mut R, radius: f64) -> C64 {
    let r = radius * rng.random::<f64>().sqrt();
    C64::from_polar(r, 2.0 * PI * rng.random::<f64>())
}

fn test_radius(space: &WeightedPolySpace) -> f64 {
    space
        .potential
        .droplet()
        .map(|d| d.bounding_radius())
        .unwrap_or(0.5 * space.quadrature.r_cut)
}

/// Pointwise-`L^p` estimate `|f(ζ₀)|^p ≤ m·(C^p/s²)∫_{D(ζ₀,s/√m)}|f|^p`
/// with `C = e^{Ms²/2}`, over random `f` and random `ζ₀` in the droplet.
/// Passes when every implied `C` is at most `1.1·e^{Ms²/2}`.
pub fn verify_pointwise_lp(
    space: &WeightedPolySpace,
    p: f64,
    s: f64,
    trials: usize,
    seed: u64,
) -> Result<ConstantCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mf = space.m as f64;
    let rad = s / mf.sqrt();
    let r_test = test_radius(space);
    let mut worst: f64 = 0.0;
    let mut bound = f64::INFINITY;
    let mut passed = true;
    for _ in 0..trials {
        let c = random_element(space, &mut rng);
        let z0 = sample_in_disc(&mut rng, r_test);
        let m_lap = max_laplacian_on_disc(&space.potential, z0, rad)?;
        let b = 1.1 * (m_lap * s * s / 2.0).exp();
        let c_imp = implied_lp(space, &c, z0, p, s);
        if c_imp > b {
            passed = false;
        }
        worst = worst.max(c_imp);
        bound = bound.min(b);
    }
    Ok(ConstantCheck {
        max_implied: worst,
        bound,
        trials,
        passed,
    })
}

/// Implied constant of the pointwise-`L^p` estimate for one `(f, ζ₀)`.
pub fn implied_lp(space: &WeightedPolySpace, coeffs: &[C64], z0: C64, p: f64, s: f64) -> f64 {
    let mf = space.m as f64;
    let rad = s / mf.sqrt();
    let f0 = space.eval(coeffs, z0).norm().powf(p);
    let integral = disc_integral(z0, rad, |z| space.eval(coeffs, z).norm().powf(p));
    (f0 * s * s / (mf * integral)).powf(1.0 / p)
}

/// Bernstein-type estimate `|∇|f|(ζ)| ≤ C√m·avg_{D(ζ,1/√m)}|f|`; the
/// bound is the proof constant `4e^{M/2}` with 10% slack.
pub fn verify_bernstein(space: &WeightedPolySpace, trials: usize, seed: u64) -> Result<ConstantCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mf = space.m as f64;
    let r_test = test_radius(space);
    let mut worst: f64 = 0.0;
    let mut bound = f64::INFINITY;
    let mut passed = true;
    let mut done = 0;
    while done < trials {
        let c = random_element(space, &mut rng);
        let z0 = sample_in_disc(&mut rng, r_test);
        let Some(c_imp) = implied_bernstein(space, &c, z0) else {
            continue;
        };
        done += 1;
        let m_lap = max_laplacian_on_disc(&space.potential, z0, 1.0 / mf.sqrt())?;
        let b = 1.1 * 4.0 * (m_lap / 2.0).exp();
        if c_imp > b || !c_imp.is_finite() {
            passed = false;
        }
        worst = worst.max(c_imp);
        bound = bound.min(b);
    }
    Ok(ConstantCheck {
        max_implied: worst,
        bound,
        trials,
        passed,
    })
}

/// Implied Bernstein constant at `ζ₀`; `None` where `|f(ζ₀)| ≤ 1e−10`.
pub fn implied_bernstein(space: &WeightedPolySpace, coeffs: &[C64], z0: C64) -> Option<f64> {
    let mf = space.m as f64;
    let f0 = space.eval(coeffs, z0).norm();
    if f0 <= 1e-10 {
        return None;
    }
    let h = 1e-3 / mf.sqrt();
    let abs_at = |z: C64| space.eval(coeffs, z).norm();
    let gx = (abs_at(z0 + h) - abs_at(z0 - h)) / (2.0 * h);
    let ih = C64::new(0.0, h);
    let gy = (abs_at(z0 + ih) - abs_at(z0 - ih)) / (2.0 * h);
    let grad = (gx * gx + gy * gy).sqrt();
    // |D(ζ₀, 1/√m)| = 1/m under dA
    let avg = mf * disc_integral(z0, 1.0 / mf.sqrt(), abs_at);
    Some(grad / (mf.sqrt() * avg))
}

/// Monte Carlo check of the exact identity: for `X = 1_U(ζ_1)·∫|ℓ_1|^{2β} dA`
/// one has `E X = |U|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactIdentityReport {
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub chains: usize,
    pub acceptance_rate: f64,
    /// Relative standard error above 25%.
    pub inconclusive: bool,
}

impl ExactIdentityReport {
    /// Distance from the target in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.target).abs() / self.std_error
    }
}

/// Estimates `E[1_U(ζ_1)∫_ℂ|ℓ_1|^{2β} dA]` for `U = D(0, u_radius)`.
///
/// The variable has infinite variance for `β ≥ 1` (near collisions of
/// `ζ_1` with another point), so the chains target the tilted density
/// `∝ e^{−βH}(1+X)` and the estimate is the self-normalised ratio
/// `E'[X/(1+X)] / E'[1/(1+X)]`, whose terms are bounded.
pub fn verify_exact_identity(
    potential: &Potential,
    n: usize,
    beta: f64,
    chains: usize,
    sweeps: usize,
    u_radius: f64,
    seed: u64,
) -> Result<ExactIdentityReport> {
    if n < 2 || chains < 2 || sweeps < 5 {
        return Err(Error::Config("need n >= 2, chains >= 2 and sweeps >= 5".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    let droplet = potential.droplet()?;
    let r_int = droplet.bounding_radius().max(u_radius) + 6.0 / (beta * n as f64).sqrt();
    let angular = 32usize.max((8.0 * beta * n as f64).ceil() as usize);
    let mut nodes = Vec::new();
    let dt = 2.0 * PI / angular as f64;
    for (r, wr) in quad::composite(0.0, r_int, 5, 8) {
        for j in 0..angular {
            nodes.push((C64::from_polar(r, dt * (j as f64 + 0.5)), wr * r * dt / PI));
        }
    }
    let bnq: Vec<f64> = nodes.iter().map(|&(z, _)| beta * n as f64 * potential.q(z)).collect();
    let log_w: Vec<f64> = nodes.iter().map(|&(_, w)| w.ln()).collect();
    let mut sums = Vec::with_capacity(chains);
    let mut acc_total = 0.0;
    for c in 0..chains {
        let chain_seed = seed.wrapping_add((c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (a, b, acc) = tilted_chain(potential, n, beta, sweeps, u_radius, &nodes, &bnq, &log_w, chain_seed)?;
        sums.push((a, b));
        acc_total += acc;
    }
    let cf = chains as f64;
    let abar = sums.iter().map(|s| s.0).sum::<f64>() / cf;
    let bbar = sums.iter().map(|s| s.1).sum::<f64>() / cf;
    let est = abar / bbar;
    let dev: Vec<f64> = sums.iter().map(|(a, b)| (a - est * b) / bbar).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / (cf - 1.0);
    let se = (var / cf).sqrt();
    let target = u_radius * u_radius;
    Ok(ExactIdentityReport {
        estimate: est,
        std_error: se,
        target,
        chains,
        acceptance_rate: acc_total / cf,
        inconclusive: se > 0.25 * est.abs(),
    })
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[allow(clippy::too_many_arguments)]
fn tilted_chain(
    potential: &Potential,
    n: usize,
    beta: f64,
    sweeps: usize,
    u_radius: f64,
    nodes: &[(C64, f64)],
    bnq: &[f64],
    log_w: &[f64],
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = equilibrium_draw(potential, n, &mut rng);
    let nf = n as f64;
    // s_i = Σ_{k≥1} ln|η_i − ζ_k|
    let mut s: Vec<f64> = nodes
        .iter()
        .map(|&(z, _)| pts[1..].iter().map(|&p| (z - p).norm().ln()).sum())
        .collect();
    let ln_j = |s: &[f64]| {
        log_sum_exp(
            s.iter()
                .zip(bnq)
                .zip(log_w)
                .map(|((si, q), lw)| 2.0 * beta * si - q + lw),
        )
    };
    let ln_x = |pts: &[C64], lnj: f64| -> f64 {
        if pts[0].norm() >= u_radius {
            return f64::NEG_INFINITY;
        }
        let d: f64 = pts[1..].iter().map(|&p| (pts[0] - p).norm().ln()).sum();
        lnj - 2.0 * beta * d + beta * nf * potential.q(pts[0])
    };
    let mut lnj = ln_j(&s);
    let mut lx = ln_x(&pts, lnj);
    let lap = potential.max_laplacian_on(&potential.droplet()?)?.max(1e-3);
    let mut log_step = (1.0 / (nf * beta * lap).sqrt()).ln();
    let burn = sweeps / 5;
    let (mut a, mut b) = (0.0, 0.0);
    let mut acc_prod = 0usize;
    let mut scratch = vec![0.0; nodes.len()];
    for sweep in 0..sweeps {
        let step = log_step.exp();
        let mut acc = 0;
        for j in 0..n {
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            let new = pts[j] + C64::new(gx, gy) * step;
            let dh = energy_delta(&pts, potential, j, new);
            let u: f64 = rng.random();
            if !dh.is_finite() {
                continue;
            }
            let old = pts[j];
            pts[j] = new;
            let (new_lnj, new_lx) = if j == 0 {
                (lnj, ln_x(&pts, lnj))
            } else {
                for ((sc, si), &(z, _)) in scratch.iter_mut().zip(&s).zip(nodes) {
                    *sc = si + ((z - new).norm() / (z - old).norm()).ln();
                }
                let l = ln_j(&scratch);
                (l, ln_x(&pts, l))
            };
            let tilt = softplus(new_lx) - softplus(lx);
            if metropolis_accept(dh - tilt / beta, beta, u) {
                acc += 1;
                lnj = new_lnj;
                lx = new_lx;
                if j != 0 {
                    std::mem::swap(&mut s, &mut scratch);
                }
            } else {
                pts[j] = old;
            }
        }
        if sweep < burn {
            let rate = acc as f64 / nf;
            log_step += (rate - 0.3) / (sweep as f64 + 1.0).powf(0.6);
        } else {
            acc_prod += acc;
            a += sigmoid(lx);
            b += sigmoid(-lx);
        }
    }
    let kept = (sweeps - burn) as f64;
    Ok((a / kept, b / kept, acc_prod as f64 / (kept * nf)))
}
