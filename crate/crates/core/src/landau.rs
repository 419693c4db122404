//! Concentration operators `T_Ω f = P(f·1_Ω)` on weighted polynomial
//! spaces, the eigenvalue-counting inequality, trace asymptotics and the
//! empirical sampling and interpolation constants of a configuration.

use crate::ensemble::Configuration;
use crate::error::{Error, Result};
use crate::polyspace::{build_space, LagrangeBasis, WeightedPolySpace};
use crate::potential::{Droplet, DropletKind, Potential};
use crate::{quad, C64};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Region `Ω` of a concentration operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// The whole truncation domain of the space.
    Whole,
    Empty,
    Disc {
        center: C64,
        radius: f64,
    },
    /// `D(center, radius) ∩ D(outer_center, outer_radius)`.
    Lens {
        center: C64,
        radius: f64,
        outer_center: C64,
        outer_radius: f64,
    },
}

impl Region {
    pub fn disc(center: C64, radius: f64) -> Self {
        Region::Disc { center, radius }
    }

    /// `D(center, radius) ∩ S_M` with `S_M` the `M/√n` dilation of a disc
    /// droplet.
    pub fn disc_in_vicinity(center: C64, radius: f64, droplet: &Droplet, m_margin: f64, n: usize) -> Result<Self> {
        let big = match droplet.kind {
            DropletKind::Disc { radius } => radius + m_margin / (n as f64).sqrt(),
            _ => {
                return Err(Error::Unsupported(
                    "disc ∩ S_M is only available for disc droplets".into(),
                ))
            }
        };
        if center.norm() + radius <= big {
            return Ok(Region::Disc { center, radius });
        }
        if center.norm() >= big + radius {
            return Ok(Region::Empty);
        }
        Ok(Region::Lens {
            center,
            radius,
            outer_center: C64::new(0.0, 0.0),
            outer_radius: big,
        })
    }

    pub fn contains(&self, z: C64) -> bool {
        match *self {
            Region::Whole => true,
            Region::Empty => false,
            Region::Disc { center, radius } => (z - center).norm() < radius,
            Region::Lens {
                center,
                radius,
                outer_center,
                outer_radius,
            } => (z - center).norm() < radius && (z - outer_center).norm() < outer_radius,
        }
    }

    /// Polar rule about the disc centre. Arcs are split where the ray
    /// structure changes, so every arc carries a smooth integrand.
    fn rule(&self, angular: usize, radial: usize) -> Vec<(C64, f64)> {
        let (c, a, outer) = match *self {
            Region::Disc { center, radius } => (center, radius, None),
            Region::Lens {
                center,
                radius,
                outer_center,
                outer_radius,
            } => (center, radius, Some((outer_center, outer_radius))),
            _ => return Vec::new(),
        };
        let mut out = Vec::new();
        let Some((o, b)) = outer else {
            // full circle: periodic trapezoid in the angle
            let dt = 2.0 * PI / angular as f64;
            let rs = quad::gl(radial);
            for j in 0..angular {
                let e = C64::from_polar(1.0, dt * j as f64);
                for (s, ws) in rs.on(0.0, a) {
                    out.push((c + e * s, ws * s * dt / PI));
                }
            }
            return out;
        };
        let d = c - o;
        let dn = d.norm();
        let phi = d.arg();
        let mut cuts = Vec::new();
        if dn > 0.0 {
            let kappa = (b * b - a * a - dn * dn) / (2.0 * a);
            if (kappa / dn).abs() <= 1.0 {
                let g = (kappa / dn).acos();
                cuts.push(phi + g);
                cuts.push(phi - g);
            }
            if dn > b {
                let g = ((dn * dn - b * b).sqrt() / dn).acos();
                for v in [phi + g, phi - g, phi + PI + g, phi + PI - g] {
                    cuts.push(v);
                }
            }
        }
        let mut cuts: Vec<f64> = cuts.into_iter().map(|t| t.rem_euclid(2.0 * PI)).collect();
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        if cuts.is_empty() {
            cuts.push(0.0);
        }
        let rs = quad::gl(radial);
        for i in 0..cuts.len() {
            let t0 = cuts[i];
            let t1 = if i + 1 < cuts.len() {
                cuts[i + 1]
            } else {
                cuts[0] + 2.0 * PI
            };
            let span = t1 - t0;
            if span <= 0.0 {
                continue;
            }
            let count = ((angular as f64 * span / (2.0 * PI)).ceil() as usize).max(8);
            for (t, wt) in quad::gl(count).on(t0, t1) {
                let e = C64::from_polar(1.0, t);
                // |d + s e|² < b²  ⇔  s ∈ (s₋, s₊)
                let h = (d * e.conj()).re;
                let disc = h * h - dn * dn + b * b;
                if disc <= 0.0 {
                    continue;
                }
                let lo = (-h - disc.sqrt()).max(0.0);
                let hi = (-h + disc.sqrt()).min(a);
                if hi <= lo {
                    continue;
                }
                for (s, ws) in rs.on(lo, hi) {
                    out.push((c + e * s, wt * ws * s / PI));
                }
            }
        }
        out
    }

    fn extent(&self) -> (C64, f64) {
        match *self {
            Region::Disc { center, radius } | Region::Lens { center, radius, .. } => (center, radius),
            _ => (C64::new(0.0, 0.0), 0.0),
        }
    }
}

/// Spectrum of a concentration operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSpectrum {
    pub m: usize,
    pub region: Region,
    /// Non-increasing, clamped to `[0, 1]` after validation.
    pub eigenvalues: Vec<f64>,
    /// `∫_Ω R(ζ) dA`.
    pub trace: f64,
    /// `∬_{Ω²} |K|²`, the squared Frobenius norm of the matrix.
    pub trace_sq: f64,
    pub quadrature_nodes: usize,
}

impl ConcentrationSpectrum {
    pub fn eigen_sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn eigen_sum_sq(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x * x).sum()
    }
}

fn split_rows(rows: &[Vec<C64>], scale: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = rows.first().map_or(0, |r| r.len());
    let a = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j].re * scale[i]);
    let b = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j].im * scale[i]);
    (a, b)
}

/// `Φ^H Φ` from the real and imaginary parts of `Φ`.
fn gram_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<C64> {
    let (at, bt) = (a.transpose(), b.transpose());
    let re = &at * a + &bt * b;
    let im = &at * b - &bt * a;
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// `Φ Φ^H`.
fn gram_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<C64> {
    let re = a * a.transpose() + b * b.transpose();
    let im = b * a.transpose() - a * b.transpose();
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// Eigenvalues of a Hermitian matrix, non-increasing.
pub fn hermitian_eigenvalues(m: DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

fn quadrature_for(space: &WeightedPolySpace, region: &Region, resolution: f64) -> Vec<(C64, f64)> {
    let (c, a) = region.extent();
    let m = space.m as f64;
    let grad = space
        .potential
        .eval(c)
        .map(|e| (e.grad[0] * e.grad[0] + e.grad[1] * e.grad[1]).sqrt())
        .unwrap_or(2.0 * c.norm());
    let band = resolution * m * a * (1.0 + grad);
    let angular = 2 * band.ceil() as usize + 64;
    let radial = (band / 4.0).ceil() as usize + 24;
    region.rule(angular, radial)
}

/// Whether the concentration matrix of `region` is diagonal in the basis.
fn diagonal_case(space: &WeightedPolySpace, region: &Region) -> Option<f64> {
    match *region {
        Region::Disc { center, radius } if space.is_radial() && center == C64::new(0.0, 0.0) => Some(radius),
        _ => None,
    }
}

fn radial_masses(space: &WeightedPolySpace, radius: f64) -> Vec<f64> {
    // ∫_{|ζ|<a}|φ_k|² = ∫_0^a 2r|φ_k(r)|² dr; panels of width ≤ 0.25/√m
    let panels = ((radius * 4.0 * (space.m as f64).sqrt()).ceil() as usize).max(2);
    let mut mass = vec![0.0; space.m];
    let mut vals = vec![C64::new(0.0, 0.0); space.m];
    for (r, w) in quad::composite(0.0, radius, panels, 12) {
        space.basis_values(C64::new(r, 0.0), &mut vals);
        for (acc, v) in mass.iter_mut().zip(&vals) {
            *acc += 2.0 * r * w * v.norm_sqr();
        }
    }
    mass
}

const PRUNE: f64 = 1e-15;

/// Spectrum of `T_Ω` on `space`.
pub fn concentration(space: &WeightedPolySpace, region: &Region) -> Result<ConcentrationSpectrum> {
    concentration_with(space, region, 0.5)
}

/// As [`concentration`] with the node counts scaled by `resolution`.
pub fn concentration_with(
    space: &WeightedPolySpace,
    region: &Region,
    resolution: f64,
) -> Result<ConcentrationSpectrum> {
    let m = space.m;
    match region {
        Region::Empty => {
            return Ok(ConcentrationSpectrum {
                m,
                region: *region,
                eigenvalues: vec![0.0; m],
                trace: 0.0,
                trace_sq: 0.0,
                quadrature_nodes: 0,
            })
        }
        Region::Whole => {
            let mut rows = Vec::new();
            let mut w = Vec::new();
            let mut trace = 0.0;
            space.for_each_node(|_, wt, v| {
                rows.push(v.to_vec());
                w.push(wt.sqrt());
                trace += wt * v.iter().map(|x| x.norm_sqr()).sum::<f64>();
            });
            let (a, b) = split_rows(&rows, &w);
            return finish(m, region, gram_cols(&a, &b), Vec::new(), trace, rows.len());
        }
        _ => {}
    }
    if let Some(radius) = diagonal_case(space, region) {
        let mass = radial_masses(space, radius);
        let trace = mass.iter().sum();
        let trace_sq = mass.iter().map(|x| x * x).sum();
        let eig = mass.clone();
        return validate(m, region, eig, trace, trace_sq, 0);
    }
    let nodes = quadrature_for(space, region, resolution);
    let mut rows = Vec::with_capacity(nodes.len());
    let mut scale = Vec::with_capacity(nodes.len());
    let mut trace = 0.0;
    let mut diag = vec![0.0; m];
    let mut vals = vec![C64::new(0.0, 0.0); m];
    for &(z, w) in &nodes {
        space.basis_values(z, &mut vals);
        for (d, v) in diag.iter_mut().zip(&vals) {
            *d += w * v.norm_sqr();
        }
        trace += w * space.one_point(z);
        rows.push(vals.clone());
        scale.push(w.sqrt());
    }
    let keep: Vec<usize> = (0..m).filter(|&k| diag[k] >= PRUNE).collect();
    let dropped: Vec<f64> = (0..m).filter(|&k| diag[k] < PRUNE).map(|k| diag[k]).collect();
    let pruned: Vec<Vec<C64>> = rows.iter().map(|r| keep.iter().map(|&k| r[k]).collect()).collect();
    let (a, b) = split_rows(&pruned, &scale);
    finish(m, region, gram_cols(&a, &b), dropped, trace, nodes.len())
}

fn finish(
    m: usize,
    region: &Region,
    t: DMatrix<C64>,
    dropped: Vec<f64>,
    trace: f64,
    nodes: usize,
) -> Result<ConcentrationSpectrum> {
    let trace_sq = t.iter().map(|x| x.norm_sqr()).sum::<f64>() + dropped.iter().map(|x| x * x).sum::<f64>();
    let mut eig = hermitian_eigenvalues(t);
    eig.extend(dropped);
    validate(m, region, eig, trace, trace_sq, nodes)
}

fn validate(
    m: usize,
    region: &Region,
    mut eig: Vec<f64>,
    trace: f64,
    trace_sq: f64,
    nodes: usize,
) -> Result<ConcentrationSpectrum> {
    if let Some(bad) = eig.iter().find(|&&x| !(-1e-10..=1.0 + 1e-10).contains(&x)) {
        return Err(Error::Numerical(format!(
            "concentration eigenvalue {bad} outside [0, 1]: quadrature failure on {region:?}"
        )));
    }
    eig.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(ConcentrationSpectrum {
        m,
        region: *region,
        eigenvalues: eig,
        trace,
        trace_sq,
        quadrature_nodes: nodes,
    })
}

/// One evaluation of the eigenvalue-counting inequality
/// `|#{λ ≥ θ} − Σλ| ≤ max(1/θ, 1/(1−θ))·Σ(λ − λ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCheck {
    pub theta: f64,
    pub count: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

pub fn eig_count_check(spectrum: &ConcentrationSpectrum, theta: f64) -> Result<CountCheck> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Config(format!("theta = {theta} not in (0, 1)")));
    }
    Ok(count_check(&spectrum.eigenvalues, theta))
}

pub fn count_check(eigenvalues: &[f64], theta: f64) -> CountCheck {
    let count = eigenvalues.iter().filter(|&&x| x >= theta).count();
    let s: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|x| x * x).sum();
    let lhs = (count as f64 - s).abs();
    let rhs = (1.0 / theta).max(1.0 / (1.0 - theta)) * (s - s2);
    // the sums carry rounding of order ε per term
    let slack = 64.0 * f64::EPSILON * eigenvalues.len().max(1) as f64;
    CountCheck {
        theta,
        count,
        lhs,
        rhs,
        passed: lhs <= rhs + slack,
    }
}

/// `θ ∈ {0.05, 0.10, …, 0.95}`.
pub fn theta_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

pub fn eig_count_grid(spectrum: &ConcentrationSpectrum) -> Vec<CountCheck> {
    theta_grid()
        .into_iter()
        .map(|t| count_check(&spectrum.eigenvalues, t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Bulk,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub order: usize,
    pub l: f64,
    pub rho: f64,
    pub trace: f64,
    pub trace_sq: f64,
    /// `trace/(ρΔQL²)` in the bulk, `trace/(½ρΔQL²)` at the boundary.
    pub ratio: f64,
    pub var_per_l: f64,
    pub var_per_l_log_l: f64,
    /// Largest `lhs − rhs` of the counting inequality over the θ-grid.
    pub bound_residual: f64,
    /// Set when `m·ρ` was rounded.
    pub note: Option<String>,
}

/// Trace of `T_Ω` on the space of order `round(mρ)`, with
/// `Ω = D(p, L/√m) ∩ S_M`, for each `m`.
pub fn trace_asymptotics(
    potential: &Potential,
    p: C64,
    regime: Regime,
    l: f64,
    rho: f64,
    m_margin: f64,
    m_list: &[usize],
) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for &m in m_list {
        let (order, note) = rounded_order(m, rho);
        let space = build_space(potential, order)?;
        rows.push(trace_point(&space, potential, p, regime, l, rho, m, m_margin, note)?.0);
    }
    Ok(rows)
}

/// `round(mρ)` and a note when rounding changed it.
pub fn rounded_order(m: usize, rho: f64) -> (usize, Option<String>) {
    let exact = m as f64 * rho;
    let order = exact.round().max(1.0) as usize;
    let note = ((exact - order as f64).abs() > 1e-9).then(|| format!("m·rho = {exact} rounded to {order}"));
    (order, note)
}

/// One row of [`trace_asymptotics`] on a prebuilt space of order
/// `round(mρ)`, together with its spectrum.
#[allow(clippy::too_many_arguments)]
pub fn trace_point(
    space: &WeightedPolySpace,
    potential: &Potential,
    p: C64,
    regime: Regime,
    l: f64,
    rho: f64,
    m: usize,
    m_margin: f64,
    note: Option<String>,
) -> Result<(TraceRow, ConcentrationSpectrum)> {
    let droplet = potential.droplet()?;
    let lap = potential.laplacian(p)?;
    let region = Region::disc_in_vicinity(p, l / (m as f64).sqrt(), &droplet, m_margin, m)?;
    let spec = concentration(space, &region)?;
    let base = rho * lap * l * l;
    let ratio = match regime {
        Regime::Bulk => spec.trace / base,
        Regime::Boundary => spec.trace / (0.5 * base),
    };
    let var = spec.trace - spec.trace_sq;
    let bound_residual = eig_count_grid(&spec)
        .iter()
        .map(|c| c.lhs - c.rhs)
        .fold(f64::NEG_INFINITY, f64::max);
    let row = TraceRow {
        m,
        order: space.m,
        l,
        rho,
        trace: spec.trace,
        trace_sq: spec.trace_sq,
        ratio,
        var_per_l: var / l,
        var_per_l_log_l: var / (l * l.ln().max(1.0)),
        bound_residual,
        note,
    };
    Ok((row, spec))
}

fn space_of_order(potential: &Potential, n: usize, rho: f64) -> Result<(WeightedPolySpace, usize)> {
    let order = (n as f64 * rho).round().max(1.0) as usize;
    Ok((build_space(potential, order)?, order))
}

fn basis_rows(space: &WeightedPolySpace, points: &[C64]) -> Vec<Vec<C64>> {
    points.iter().map(|&z| space.basis_vec(z)).collect()
}

/// Result of a sampling or interpolation computation. A failed family has
/// `constant = None` and a reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub rho: f64,
    pub order: usize,
    /// Smallest (generalised) eigenvalue.
    pub min_eigenvalue: f64,
    pub constant: Option<f64>,
    pub failure: Option<String>,
}

/// Empirical sampling constant: with `μ` the smallest eigenvalue of the node
/// Gram `(1/n)Σ_j φ_a(ζ_j)conj φ_b(ζ_j)` relative to the Gram on
/// `S_{2M}`, `A = (1−ρ)²/μ`.
pub fn mz_constant(config: &Configuration, potential: &Potential, rho: f64, m_margin: f64) -> Result<ConstantReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!("sampling needs 0 < rho < 1, got {rho}")));
    }
    let n = config.n;
    let (space, order) = space_of_order(potential, n, rho)?;
    let droplet = potential.droplet()?;
    let outer = 2.0 * m_margin / (n as f64).sqrt();
    let scale = vec![1.0 / (n as f64).sqrt(); n];
    let (a, b) = split_rows(&basis_rows(&space, &config.points), &scale);
    let node = gram_cols(&a, &b);
    let restricted = restricted_gram(&space, &droplet, outer)?;
    let chol =
        Cholesky::new(restricted).ok_or_else(|| Error::Numerical("restricted Gram is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&node)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    let mu = *hermitian_eigenvalues(c).last().unwrap_or(&0.0);
    Ok(if mu > 1e-12 {
        ConstantReport {
            rho,
            order,
            min_eigenvalue: mu,
            constant: Some((1.0 - rho).powi(2) / mu),
            failure: None,
        }
    } else {
        ConstantReport {
            rho,
            order,
            min_eigenvalue: mu,
            constant: None,
            failure: Some(format!("sampling fails: smallest eigenvalue {mu:e}")),
        }
    })
}

/// Gram of the basis over the droplet dilated by `extra`.
fn restricted_gram(space: &WeightedPolySpace, droplet: &Droplet, extra: f64) -> Result<DMatrix<C64>> {
    let m = space.m;
    if let (true, DropletKind::Disc { radius }) = (space.is_radial(), &droplet.kind) {
        let mass = radial_masses(space, radius + extra);
        return Ok(DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(mass[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }));
    }
    let mut rows = Vec::new();
    let mut w = Vec::new();
    space.for_each_node(|z, wt, v| {
        if droplet.delta(z) < extra {
            rows.push(v.to_vec());
            w.push(wt.sqrt());
        }
    });
    let (a, b) = split_rows(&rows, &w);
    Ok(gram_cols(&a, &b))
}

/// Empirical interpolation constant `A = n(ρ−1)²/λ_min(G)` with
/// `G_jk = K(ζ_j, ζ_k)` of the space of order `round(nρ)`.
pub fn interpolation_constant(config: &Configuration, potential: &Potential, rho: f64) -> Result<ConstantReport> {
    if !(rho > 1.0) {
        return Err(Error::Config(format!("interpolation needs rho > 1, got {rho}")));
    }
    let n = config.n;
    let (space, order) = space_of_order(potential, n, rho)?;
    let (a, b) = split_rows(&basis_rows(&space, &config.points), &vec![1.0; n]);
    let g = gram_rows(&a, &b);
    let eig = hermitian_eigenvalues(g);
    let top = eig.first().cloned().unwrap_or(0.0);
    let low = eig.last().cloned().unwrap_or(0.0);
    Ok(if low > 1e-12 * top.max(1.0) {
        ConstantReport {
            rho,
            order,
            min_eigenvalue: low,
            constant: Some(n as f64 * (rho - 1.0).powi(2) / low),
            failure: None,
        }
    } else {
        ConstantReport {
            rho,
            order,
            min_eigenvalue: low,
            constant: None,
            failure: Some(format!("interpolation fails: kernel Gram singular (λ_min = {low:e})")),
        }
    })
}

/// Localised Lagrange polynomials `L_j = (K(ζ,ζ_j)/K(ζ_j,ζ_j))²·ℓ_j` with
/// the kernel of order `round(nε)`.
pub struct LocalizedLagrange {
    pub space: WeightedPolySpace,
    lagrange: LagrangeBasis,
    node_basis: Vec<Vec<C64>>,
    diag: Vec<f64>,
}

impl LocalizedLagrange {
    pub fn new(config: &Configuration, potential: &Potential, epsilon: f64) -> Result<Self> {
        let order = (config.n as f64 * epsilon).round() as usize;
        if order < 2 {
            return Err(Error::Config(format!(
                "n·epsilon = {} must be at least 2",
                config.n as f64 * epsilon
            )));
        }
        let space = build_space(potential, order)?;
        let lagrange = LagrangeBasis::new(config, potential)?;
        let node_basis = basis_rows(&space, &config.points);
        let diag: Vec<f64> = node_basis
            .iter()
            .map(|v| v.iter().map(|x| x.norm_sqr()).sum())
            .collect();
        if let Some(j) = diag.iter().position(|&d| d < 1e-12 * order as f64) {
            return Err(Error::Numerical(format!(
                "kernel lower bound violated at node {j}: K(ζ_j,ζ_j) = {:e}",
                diag[j]
            )));
        }
        Ok(LocalizedLagrange {
            space,
            lagrange,
            node_basis,
            diag,
        })
    }

    /// All `L_j(ζ)`.
    pub fn eval(&self, z: C64) -> Vec<C64> {
        let phi = self.space.basis_vec(z);
        let ell = self.lagrange.eval_vec(z);
        ell.iter()
            .enumerate()
            .map(|(j, l)| {
                let k: C64 = phi.iter().zip(&self.node_basis[j]).map(|(a, b)| a * b.conj()).sum();
                let r = k / self.diag[j];
                r * r * l
            })
            .collect()
    }

    pub fn sum_abs(&self, z: C64) -> f64 {
        self.eval(z).iter().map(|x| x.norm()).sum()
    }
}

pub fn localized_lagrange(
    config: &Configuration,
    potential: &Potential,
    j: usize,
    epsilon: f64,
    z: C64,
) -> Result<C64> {
    if j >= config.n {
        return Err(Error::Config(format!("index {j} out of range")));
    }
    Ok(LocalizedLagrange::new(config, potential, epsilon)?.eval(z)[j])
}

/// Sampling and interpolation summary of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MZReport {
    pub rho_sampling: f64,
    pub rho_interpolation: f64,
    pub gamma: f64,
    pub m_margin: f64,
    pub mz_constant: Option<f64>,
    pub interp_constant: Option<f64>,
    pub lagrange_sup: f64,
    pub failures: Vec<String>,
}

pub fn mz_report(
    config: &Configuration,
    potential: &Potential,
    rho_sampling: f64,
    rho_interpolation: f64,
    m_margin: f64,
) -> Result<MZReport> {
    let mz = mz_constant(config, potential, rho_sampling, m_margin)?;
    let ip = interpolation_constant(config, potential, rho_interpolation)?;
    let droplet = potential.droplet()?;
    let sup = crate::polyspace::sup_norms_lagrange(config, potential, &droplet)?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(MZReport {
        rho_sampling,
        rho_interpolation,
        gamma: (1.0 - rho_sampling).min(rho_interpolation - 1.0),
        m_margin,
        mz_constant: mz.constant,
        interp_constant: ip.constant,
        lagrange_sup: sup,
        failures: mz.failure.into_iter().chain(ip.failure).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_example() {
        let c = count_check(&[0.9, 0.5, 0.1], 0.5);
        assert_eq!(c.count, 2);
        assert!((c.lhs - 0.5).abs() < 1e-15);
        assert!((c.rhs - 0.86).abs() < 1e-12);
        assert!(c.passed);
        let p = count_check(&[1.0, 1.0, 0.0], 0.3);
        assert_eq!((p.lhs, p.rhs), (0.0, 0.0));
        assert!(p.passed);
    }

    #[test]
    fn lens_rule_measures_area() {
        // oracle: lens area of two unit-radius-scale discs
        let (a, b, dist) = (0.5f64, 1.0f64, 1.2f64);
        let r = Region::Lens {
            center: C64::new(dist, 0.0),
            radius: a,
            outer_center: C64::new(0.0, 0.0),
            outer_radius: b,
        };
        let got: f64 = r.rule(128, 32).iter().map(|x| x.1).sum();
        let lens = a * a * ((dist * dist + a * a - b * b) / (2.0 * dist * a)).acos()
            + b * b * ((dist * dist + b * b - a * a) / (2.0 * dist * b)).acos()
            - 0.5 * ((-dist + a + b) * (dist + a - b) * (dist - a + b) * (dist + a + b)).sqrt();
        assert!((got - lens / PI).abs() < 1e-12, "{got} {}", lens / PI);
        // centre outside the outer disc
        let r2 = Region::Lens {
            center: C64::new(1.3, 0.0),
            radius: 0.5,
            outer_center: C64::new(0.0, 0.0),
            outer_radius: 1.0,
        };
        let got: f64 = r2.rule(256, 32).iter().map(|x| x.1).sum();
        let (a, b, d) = (0.5f64, 1.0f64, 1.3f64);
        let lens = a * a * ((d * d + a * a - b * b) / (2.0 * d * a)).acos()
            + b * b * ((d * d + b * b - a * a) / (2.0 * d * b)).acos()
            - 0.5 * ((-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b)).sqrt();
        assert!((got - lens / PI).abs() < 1e-10, "{got} {}", lens / PI);
    }

    #[test]
    fn whole_and_empty() {
        let s = build_space(&Potential::ginibre(), 12).unwrap();
        let w = concentration(&s, &Region::Whole).unwrap();
        assert!(w.eigenvalues.iter().all(|x| (x - 1.0).abs() < 1e-8));
        let e = concentration(&s, &Region::Empty).unwrap();
        assert!(e.eigenvalues.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bulk_disc_trace() {
        let s = build_space(&Potential::ginibre(), 64).unwrap();
        let spec = concentration(&s, &Region::disc(C64::new(0.0, 0.0), 3.0 / 8.0)).unwrap();
        assert!((spec.trace / 9.0 - 1.0).abs() < 0.05, "{}", spec.trace);
        // the general path agrees with the diagonal one
        let shifted = concentration(&s, &Region::disc(C64::new(1e-300, 0.0), 3.0 / 8.0)).unwrap();
        assert!((shifted.trace - spec.trace).abs() < 1e-8);
        assert!((shifted.eigen_sum() - spec.eigen_sum()).abs() < 1e-8);
    }

    #[test]
    fn trace_identities_off_centre() {
        let s = build_space(&Potential::ginibre(), 48).unwrap();
        let d = Potential::ginibre().droplet().unwrap();
        let r = Region::disc_in_vicinity(C64::new(1.0, 0.0), 4.0 / 48f64.sqrt(), &d, 2.0, 48).unwrap();
        assert!(matches!(r, Region::Lens { .. }));
        let spec = concentration(&s, &r).unwrap();
        assert!((spec.trace - spec.eigen_sum()).abs() < 1e-8);
        assert!((spec.trace_sq - spec.eigen_sum_sq()).abs() < 1e-8);
        assert!(eig_count_grid(&spec).iter().all(|c| c.passed));
    }

    #[test]
    fn interpolation_failure_on_duplicates() {
        let pts = vec![C64::new(0.1, 0.0), C64::new(0.1, 0.0), C64::new(-0.3, 0.2)];
        let c = Configuration::synthetic(pts).unwrap();
        let r = interpolation_constant(&c, &Potential::ginibre(), 1.5).unwrap();
        assert!(r.constant.is_none());
        let two = Configuration::synthetic(vec![C64::new(-0.5, 0.0), C64::new(0.5, 0.0)]).unwrap();
        assert!(interpolation_constant(&two, &Potential::ginibre(), 1.5)
            .unwrap()
            .constant
            .is_some());
    }

    #[test]
    fn sampling_failure_on_clustered_nodes() {
        let pts: Vec<C64> = (0..20).map(|k| C64::from_polar(1e-3, k as f64)).collect();
        let c = Configuration::synthetic(pts).unwrap();
        let r = mz_constant(&c, &Potential::ginibre(), 0.5, 1.0).unwrap();
        assert!(r.constant.is_none(), "{r:?}");
    }

    #[test]
    fn localized_lagrange_interpolates() {
        let pts: Vec<C64> = (0..16)
            .map(|k| C64::from_polar(0.3 + 0.04 * k as f64, 2.4 * k as f64))
            .collect();
        let c = Configuration::synthetic(pts.clone()).unwrap();
        let ll = LocalizedLagrange::new(&c, &Potential::ginibre(), 0.25).unwrap();
        let v = ll.eval(pts[3]);
        assert!((v[3] - 1.0).norm() < 1e-12);
        assert!(v.iter().enumerate().all(|(j, x)| j == 3 || x.norm() < 1e-12));
    }
}
