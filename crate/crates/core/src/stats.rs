//! Statistics of configurations: spacing, disc counts, Beurling–Landau
//! densities, discrepancy, distance to the vacuum and hexatic order.

use crate::ensemble::Configuration;
use crate::error::{Error, Result};
use crate::potential::{Droplet, Potential};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

pub use crate::landau::Regime;

fn cell_of(z: C64, h: f64) -> (i64, i64) {
    ((z.re / h).floor() as i64, (z.im / h).floor() as i64)
}

/// Smallest pairwise distance, by uniform-grid hashing.
pub fn min_distance(points: &[C64]) -> f64 {
    let n = points.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for z in points {
        lo = C64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = C64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let extent = (hi.re - lo.re).max(hi.im - lo.im);
    if extent == 0.0 {
        return 0.0;
    }
    let mut h = extent / (n as f64).sqrt();
    loop {
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::with_capacity(n);
        for (i, &z) in points.iter().enumerate() {
            grid.entry(cell_of(z, h)).or_default().push(i);
        }
        let mut best = f64::INFINITY;
        for (i, &z) in points.iter().enumerate() {
            let (cx, cy) = cell_of(z, h);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(v) = grid.get(&(cx + dx, cy + dy)) {
                        for &j in v {
                            if j > i {
                                best = best.min((z - points[j]).norm());
                            }
                        }
                    }
                }
            }
        }
        // pairs closer than h always share or touch a cell
        if best < h || h > 2.0 * extent {
            return best;
        }
        h *= 2.0;
    }
}

/// Scaled spacing `√n·min_{j≠k}|ζ_j − ζ_k|`.
pub fn spacing(config: &Configuration) -> f64 {
    (config.n as f64).sqrt() * min_distance(&config.points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscCount {
    pub n: usize,
    pub n_minus: usize,
    pub n_plus: usize,
}

/// Points in `D(p, L/√n)` and in the discs of radii `(L∓s)/√n`.
pub fn count_disc(config: &Configuration, p: C64, l: f64, s: f64) -> Result<DiscCount> {
    if !(l > s && s >= 0.0) {
        return Err(Error::Config(format!("count_disc needs L > s >= 0, got L={l}, s={s}")));
    }
    let sq = (config.n as f64).sqrt();
    let (r, rm, rp) = (l / sq, (l - s) / sq, (l + s) / sq);
    let mut c = DiscCount {
        n: 0,
        n_minus: 0,
        n_plus: 0,
    };
    for &z in &config.points {
        let d = (z - p).norm();
        c.n += (d < r) as usize;
        c.n_minus += (d < rm) as usize;
        c.n_plus += (d < rp) as usize;
    }
    Ok(c)
}

fn count_in(points: &[C64], p: C64, radius: f64) -> usize {
    points.iter().filter(|&&z| (z - p).norm() < radius).count()
}

/// How zoom points `p_n` are chosen for a configuration of size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ZoomRule {
    Fixed {
        p: C64,
    },
    /// `q + l·ν/√(nΔQ(q))` at the boundary point in direction `theta`.
    BoundaryNormal {
        theta: f64,
        l: f64,
    },
    /// Densest and emptiest discs found by a search with pitch `0.5/√n`:
    /// over centres whose disc stays inside the droplet (bulk), or over
    /// boundary points (boundary).
    Adversarial {
        regime: Regime,
    },
}

impl ZoomRule {
    pub fn regime(&self, droplet: &Droplet, n: usize, l: f64) -> Regime {
        match *self {
            ZoomRule::Fixed { p } => {
                if droplet.depth(p) >= l / (n as f64).sqrt() {
                    Regime::Bulk
                } else {
                    Regime::Boundary
                }
            }
            ZoomRule::BoundaryNormal { .. } => Regime::Boundary,
            ZoomRule::Adversarial { regime } => regime,
        }
    }
}

/// Candidate centres and their `ΔQ` for a zoom rule.
fn zoom_points(rule: &ZoomRule, potential: &Potential, droplet: &Droplet, n: usize, l: f64) -> Result<Vec<C64>> {
    let sq = (n as f64).sqrt();
    match *rule {
        ZoomRule::Fixed { p } => Ok(vec![p]),
        ZoomRule::BoundaryNormal { theta, l: off } => {
            let (q, nu) = droplet.boundary(theta);
            let lap = potential.laplacian(q)?;
            Ok(vec![q + nu * (off / (n as f64 * lap).sqrt())])
        }
        ZoomRule::Adversarial { regime } => {
            let pitch = 0.5 / sq;
            let radius = l / sq;
            let r = droplet.bounding_radius();
            match regime {
                Regime::Bulk => {
                    let k = (r / pitch).ceil() as i64;
                    let mut v = Vec::new();
                    for i in -k..=k {
                        for j in -k..=k {
                            let z = C64::new(i as f64 * pitch, j as f64 * pitch);
                            if droplet.depth(z) >= radius {
                                v.push(z);
                            }
                        }
                    }
                    Ok(v)
                }
                Regime::Boundary => {
                    // equal angular steps give arc pitch ≤ 0.5/√n on the boundary
                    let steps = ((2.0 * PI * r / pitch).ceil() as usize).max(8);
                    Ok((0..steps)
                        .map(|i| droplet.boundary(2.0 * PI * i as f64 / steps as f64).0)
                        .collect())
                }
            }
        }
    }
}

type Extremes = ((usize, f64), (usize, f64));

/// Smallest and largest count of `D(p, L/√n)` over the zoom points, with
/// `ΔQ` at the corresponding centres.
fn extreme_counts(
    config: &Configuration,
    rule: &ZoomRule,
    potential: &Potential,
    droplet: &Droplet,
    l: f64,
) -> Result<Option<Extremes>> {
    let centres = zoom_points(rule, potential, droplet, config.n, l)?;
    let radius = l / (config.n as f64).sqrt();
    let mut best: Option<Extremes> = None;
    for p in centres {
        let c = count_in(&config.points, p, radius);
        let lap = potential.laplacian(p)?;
        best = Some(match best {
            None => ((c, lap), (c, lap)),
            Some((lo, hi)) => (
                if c < lo.0 { (c, lap) } else { lo },
                if c > hi.0 { (c, lap) } else { hi },
            ),
        });
    }
    Ok(best)
}

/// The configurations whose `n` is in the upper half of the family's
/// distinct sizes.
pub fn family_tail(family: &[Configuration]) -> Vec<&Configuration> {
    let mut sizes: Vec<usize> = family.iter().map(|c| c.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let cut = sizes.get(sizes.len() / 2).cloned().unwrap_or(0);
    family.iter().filter(|c| c.n >= cut).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub l: f64,
    /// Smallest `N/L²` over the family tail.
    pub lower: f64,
    /// Largest `N/L²` over the family tail.
    pub upper: f64,
    pub configs: usize,
}

/// Tail proxies of the Beurling–Landau density `#D(p_n, L/√n)/L²`.
pub fn bl_density(
    family: &[Configuration],
    rule: &ZoomRule,
    potential: &Potential,
    droplet: &Droplet,
    l_grid: &[f64],
) -> Result<Vec<DensityRow>> {
    let tail = family_tail(family);
    let mut rows = Vec::new();
    for &l in l_grid {
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        for c in &tail {
            if let Some(((lo, _), (hi, _))) = extreme_counts(c, rule, potential, droplet, l)? {
                lower = lower.min(lo as f64 / (l * l));
                upper = upper.max(hi as f64 / (l * l));
            }
        }
        rows.push(DensityRow {
            l,
            lower,
            upper,
            configs: tail.len(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub l: f64,
    pub regime: Regime,
    /// Largest `|N − κΔQL²|` over the family tail; `κ` is 1 or ½.
    pub residual: f64,
    /// `residual/L^{5/3}` (bulk) or `residual/(L^{5/3}·log L)` (boundary).
    pub normalized: f64,
}

pub fn discrepancy(
    family: &[Configuration],
    rule: &ZoomRule,
    potential: &Potential,
    droplet: &Droplet,
    l: f64,
    regime: Regime,
) -> Result<DiscrepancyRow> {
    if l < 2.0 {
        return Err(Error::Config(format!("discrepancy needs L >= 2, got {l}")));
    }
    let kappa = match regime {
        Regime::Bulk => 1.0,
        Regime::Boundary => 0.5,
    };
    let mut worst: f64 = 0.0;
    for c in family_tail(family) {
        if let Some((lo, hi)) = extreme_counts(c, rule, potential, droplet, l)? {
            for (count, lap) in [lo, hi] {
                worst = worst.max((count as f64 - kappa * lap * l * l).abs());
            }
        }
    }
    let norm = match regime {
        Regime::Bulk => l.powf(5.0 / 3.0),
        Regime::Boundary => l.powf(5.0 / 3.0) * l.ln(),
    };
    Ok(DiscrepancyRow {
        l,
        regime,
        residual: worst,
        normalized: worst / norm,
    })
}

/// `max_j δ(ζ_j)`.
pub fn vacuum_distance(config: &Configuration, droplet: &Droplet) -> f64 {
    config.points.iter().map(|&z| droplet.delta(z)).fold(0.0, f64::max)
}

/// Mean over masked points of `|(1/6)Σ e^{6iθ}|` over the six nearest
/// neighbours.
pub fn psi6(config: &Configuration, bulk_mask: &[bool]) -> Result<f64> {
    let pts = &config.points;
    if bulk_mask.len() != pts.len() {
        return Err(Error::Config("bulk mask length differs from the configuration".into()));
    }
    let chosen: Vec<usize> = (0..pts.len()).filter(|&i| bulk_mask[i]).collect();
    if chosen.len() < 7 || pts.len() < 7 {
        return Err(Error::Config(format!(
            "psi6 needs at least 7 bulk points, got {}",
            chosen.len()
        )));
    }
    let mut total = 0.0;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(pts.len());
    for &i in &chosen {
        dist.clear();
        dist.extend(
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &z)| ((z - pts[i]).norm_sqr(), j)),
        );
        dist.select_nth_unstable_by(5, |a, b| a.0.total_cmp(&b.0));
        let s: C64 = dist[..6]
            .iter()
            .map(|&(_, j)| {
                let d = pts[j] - pts[i];
                C64::from_polar(1.0, 6.0 * d.arg())
            })
            .sum();
        total += s.norm() / 6.0;
    }
    Ok(total / chosen.len() as f64)
}

/// Points at depth at least `margin/√n` inside the droplet.
pub fn bulk_mask(config: &Configuration, droplet: &Droplet, margin: f64) -> Vec<bool> {
    let d = margin / (config.n as f64).sqrt();
    config.points.iter().map(|&z| droplet.depth(z) >= d).collect()
}

/// Least-squares fit of `s₀(c) = a·e^{−3/(2c)}` on log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S0Fit {
    pub a: f64,
    pub rms_log_residual: f64,
}

pub fn fit_s0(cs: &[f64], spacings: &[f64]) -> Result<S0Fit> {
    let pairs: Vec<(f64, f64)> = cs
        .iter()
        .zip(spacings)
        .filter(|(c, s)| **c > 0.0 && **s > 0.0)
        .map(|(&c, &s)| (c, s))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config("no positive (c, spacing) pairs to fit".into()));
    }
    let ln_a = pairs.iter().map(|(c, s)| s.ln() + 1.5 / c).sum::<f64>() / pairs.len() as f64;
    let rms = (pairs
        .iter()
        .map(|(c, s)| (s.ln() - ln_a + 1.5 / c).powi(2))
        .sum::<f64>()
        / pairs.len() as f64)
        .sqrt();
    Ok(S0Fit {
        a: ln_a.exp(),
        rms_log_residual: rms,
    })
}

/// Linear-interpolated empirical quantile, `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub p: C64,
    pub l: f64,
    pub regime: Regime,
    pub n: usize,
    pub n_minus: usize,
    pub n_plus: usize,
}

/// Per-configuration measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub n: usize,
    pub seed: u64,
    pub spacing: f64,
    pub counts: Vec<CountRow>,
    pub vacuum_distance: f64,
    pub psi6: Option<f64>,
}

/// Spacing, counts at each zoom point and `L`, vacuum distance and `ψ₆`
/// over points at depth `≥ 2/√n`.
pub fn stat_report(
    config: &Configuration,
    droplet: &Droplet,
    zoom: &[C64],
    l_grid: &[f64],
    s: f64,
) -> Result<StatReport> {
    let mut counts = Vec::new();
    for &p in zoom {
        for &l in l_grid {
            let c = count_disc(config, p, l, s)?;
            let regime = ZoomRule::Fixed { p }.regime(droplet, config.n, l);
            counts.push(CountRow {
                p,
                l,
                regime,
                n: c.n,
                n_minus: c.n_minus,
                n_plus: c.n_plus,
            });
        }
    }
    let mask = bulk_mask(config, droplet, 2.0);
    Ok(StatReport {
        n: config.n,
        seed: config.seed,
        spacing: spacing(config),
        counts,
        vacuum_distance: vacuum_distance(config, droplet),
        psi6: psi6(config, &mask).ok(),
    })
}
