//! Hamiltonian, Metropolis sampling of the Gibbs measure and Fekete
//! (minimum energy) configurations.

use crate::error::{Error, Result};
use crate::potential::{Potential, PotentialKind};
use crate::C64;
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gibbs,
    Fekete,
    Synthetic,
}

/// An `n`-point configuration together with how it was produced.
///
/// `beta` is `+∞` for Fekete configurations; it serializes as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub n: usize,
    #[serde(with = "beta_serde")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub seed: u64,
    pub provenance: Provenance,
    #[serde(with = "point_pairs")]
    pub points: Vec<C64>,
}

impl Configuration {
    pub fn new(points: Vec<C64>, beta: f64, seed: u64, provenance: Provenance) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("a configuration needs at least 2 points".into()));
        }
        if let Some(i) = points.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Config(format!("point {i} is not finite")));
        }
        Ok(Configuration {
            n: points.len(),
            beta,
            c: None,
            seed,
            provenance,
            points,
        })
    }

    /// Synthetic configuration, e.g. a lattice or uniform draws.
    pub fn synthetic(points: Vec<C64>) -> Result<Self> {
        Self::new(points, 0.0, 0, Provenance::Synthetic)
    }
}

mod beta_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &f64, s: S) -> Result<S::Ok, S::Error> {
        if b.is_finite() {
            s.serialize_f64(*b)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

mod point_pairs {
    use crate::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(pts: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = pts.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[x, y]| C64::new(x, y)).collect())
    }
}

/// Per-chain bookkeeping returned by the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub energy_trace: Vec<f64>,
    pub step_scale: f64,
    pub restarts: usize,
}

/// `H_n = Σ_{j≠k} log 1/|ζ_j−ζ_k| + n·Σ Q(ζ_j)` over ordered pairs.
pub fn hamiltonian(config: &Configuration, potential: &Potential) -> f64 {
    energy(&config.points, potential)
}

/// Hamiltonian of a bare point slice; `+∞` when two points coincide.
pub fn energy(points: &[C64], potential: &Potential) -> f64 {
    let n = points.len();
    let mut pair = 0.0;
    for j in 0..n {
        let zj = points[j];
        for zk in &points[j + 1..] {
            let d2 = (zj - zk).norm_sqr();
            if d2 == 0.0 {
                warn!("coincident points in energy evaluation");
                return f64::INFINITY;
            }
            // two ordered pairs: 2·log(1/|z|) = −ln |z|²
            pair -= d2.ln();
        }
    }
    let field: f64 = points.iter().map(|&z| potential.q(z)).sum();
    pair + n as f64 * field
}

/// `H(moved) − H(current)` for the single move `ζ_j → new`, in `O(n)`.
pub fn hamiltonian_delta(config: &Configuration, potential: &Potential, j: usize, new: C64) -> f64 {
    energy_delta(&config.points, potential, j, new)
}

pub fn energy_delta(points: &[C64], potential: &Potential, j: usize, new: C64) -> f64 {
    let old = points[j];
    if new == old {
        return 0.0;
    }
    let mut s = 0.0;
    for (k, &zk) in points.iter().enumerate() {
        if k == j {
            continue;
        }
        let dn = (new - zk).norm_sqr();
        if dn == 0.0 {
            return f64::INFINITY;
        }
        s += ((old - zk).norm_sqr() / dn).ln();
    }
    s + points.len() as f64 * (potential.q(new) - potential.q(old))
}

/// Gradient of the Hamiltonian with respect to each point, as real
/// 2-vectors `(∂/∂x_j, ∂/∂y_j)`.
pub fn grad_hamiltonian(config: &Configuration, potential: &Potential) -> Result<Vec<[f64; 2]>> {
    let mut g = vec![[0.0; 2]; config.n];
    energy_gradient(&config.points, potential, &mut g)?;
    Ok(g)
}

pub fn energy_gradient(points: &[C64], potential: &Potential, out: &mut [[f64; 2]]) -> Result<()> {
    let n = points.len();
    let nf = n as f64;
    for (j, &zj) in points.iter().enumerate() {
        let e = potential.eval(zj)?;
        out[j] = [nf * e.grad[0], nf * e.grad[1]];
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let d = points[j] - points[k];
            let d2 = d.norm_sqr();
            if d2 == 0.0 {
                return Err(Error::Coincident(j, k));
            }
            let f = d * (2.0 / d2);
            out[j][0] -= f.re;
            out[j][1] -= f.im;
            out[k][0] += f.re;
            out[k][1] += f.im;
        }
    }
    Ok(())
}

/// The Metropolis rule `u < min(1, e^{−βΔH})` for `u` uniform on `[0,1)`.
#[inline]
pub fn metropolis_accept(delta: f64, beta: f64, u: f64) -> bool {
    if delta.is_nan() {
        return false;
    }
    delta <= 0.0 || u < (-beta * delta).exp()
}

/// Stratified draw from the equilibrium measure. For `|ζ|^{2p}` (and its
/// harmonic perturbations) the radial mass below `r` is `p·r^{2p}`, so
/// `r = (u/p)^{1/(2p)}` with `u` stratified over `(0,1)`.
pub fn equilibrium_draw<R: Rng>(potential: &Potential, n: usize, rng: &mut R) -> Vec<C64> {
    let p = match potential.kind {
        PotentialKind::RadialMonomial { p } | PotentialKind::RadialMonomialPlusHarmonic { p, .. } => p,
        PotentialKind::Custom(_) => {
            if let Some(r) = potential.reference() {
                if r.points.len() == n {
                    return r
                        .points
                        .iter()
                        .map(|&z| z + C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1e-3)
                        .collect();
                }
            }
            1
        }
    };
    let pf = p as f64;
    (0..n)
        .map(|k| {
            let u = (k as f64 + rng.random::<f64>()) / n as f64;
            let r = (u / pf).powf(1.0 / (2.0 * pf));
            C64::from_polar(r, 2.0 * PI * rng.random::<f64>())
        })
        .collect()
}

fn initial_step(potential: &Potential, points: &[C64], n: usize, beta: f64) -> f64 {
    let lap_max = match potential.droplet() {
        Ok(d) => potential.max_laplacian_on(&d).unwrap_or(1.0),
        Err(_) => points
            .iter()
            .filter_map(|&z| potential.laplacian(z).ok())
            .fold(0.0, f64::max),
    };
    let lap_max = if lap_max.is_finite() && lap_max > 1e-3 {
        lap_max
    } else {
        1.0
    };
    1.0 / (n as f64 * beta.max(1e-12) * lap_max).sqrt()
}

/// Tuning knobs of the Metropolis chain.
#[derive(Debug, Clone, Copy)]
pub struct GibbsOptions {
    pub target_acceptance: f64,
    pub burn_in_fraction: f64,
    pub max_restarts: usize,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions {
            target_acceptance: 0.3,
            burn_in_fraction: 0.2,
            max_restarts: 5,
        }
    }
}

/// Metropolis sampler for `e^{−βH_n}` with single-particle Gaussian
/// proposals. Deterministic given `seed`.
pub fn sample_gibbs(
    potential: &Potential,
    n: usize,
    beta: f64,
    sweeps: usize,
    seed: u64,
) -> Result<(Configuration, ChainDiagnostics)> {
    sample_gibbs_with(potential, n, beta, sweeps, seed, GibbsOptions::default())
}

/// Sampler in the regime `β = c·ln n`; records `c` on the result.
pub fn sample_gibbs_regime(
    potential: &Potential,
    n: usize,
    c: f64,
    sweeps: usize,
    seed: u64,
) -> Result<(Configuration, ChainDiagnostics)> {
    let beta = crate::beta_from_c(c, n);
    let (mut cfg, diag) = sample_gibbs(potential, n, beta, sweeps, seed)?;
    cfg.c = Some(c);
    Ok((cfg, diag))
}

pub fn sample_gibbs_with(
    potential: &Potential,
    n: usize,
    beta: f64,
    sweeps: usize,
    seed: u64,
    opts: GibbsOptions,
) -> Result<(Configuration, ChainDiagnostics)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive and finite, got {beta}")));
    }
    if sweeps == 0 {
        return Err(Error::Config("at least one sweep is required".into()));
    }
    if n < 2 {
        return Err(Error::Config("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = None;
    for restart in 0..=opts.max_restarts {
        let mut points = equilibrium_draw(potential, n, &mut rng);
        let s0 = step.unwrap_or_else(|| initial_step(potential, &points, n, beta));
        match run_chain(potential, &mut points, beta, sweeps, s0, &opts, &mut rng) {
            Ok((acc, trace, s)) => {
                let mut cfg = Configuration::new(points, beta, seed, Provenance::Gibbs)?;
                cfg.c = None;
                return Ok((
                    cfg,
                    ChainDiagnostics {
                        acceptance_rate: acc,
                        energy_trace: trace,
                        step_scale: s,
                        restarts: restart,
                    },
                ));
            }
            Err(ChainFailure::BurnIn) => {
                debug!("non-finite energy during burn-in, restarting with a smaller step");
                step = Some(0.5 * s0);
            }
            Err(ChainFailure::Production) => {
                return Err(Error::Numerical("non-finite energy after burn-in".into()));
            }
        }
    }
    Err(Error::Numerical(format!(
        "non-finite energy persisted after {} restarts",
        opts.max_restarts
    )))
}

enum ChainFailure {
    BurnIn,
    Production,
}

fn run_chain(
    potential: &Potential,
    points: &mut [C64],
    beta: f64,
    sweeps: usize,
    step0: f64,
    opts: &GibbsOptions,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(f64, Vec<f64>, f64), ChainFailure> {
    let n = points.len();
    let burn = ((sweeps as f64) * opts.burn_in_fraction).floor() as usize;
    let mut log_step = step0.ln();
    let mut h = energy(points, potential);
    if !h.is_finite() {
        return Err(ChainFailure::BurnIn);
    }
    let mut trace = Vec::with_capacity(sweeps);
    let (mut acc_prod, mut tried_prod) = (0usize, 0usize);
    for sweep in 0..sweeps {
        let s = log_step.exp();
        let mut acc = 0usize;
        for j in 0..n {
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            let new = points[j] + C64::new(gx, gy) * s;
            let d = energy_delta(points, potential, j, new);
            let u: f64 = rng.random();
            if d.is_nan() {
                return Err(if sweep < burn {
                    ChainFailure::BurnIn
                } else {
                    ChainFailure::Production
                });
            }
            if metropolis_accept(d, beta, u) {
                points[j] = new;
                h += d;
                acc += 1;
            }
        }
        if sweep < burn {
            let rate = acc as f64 / n as f64;
            log_step += (rate - opts.target_acceptance) / (sweep as f64 + 1.0).powf(0.6);
        } else {
            acc_prod += acc;
            tried_prod += n;
        }
        if sweep + 1 == burn {
            h = energy(points, potential);
        }
        if !h.is_finite() {
            return Err(if sweep < burn {
                ChainFailure::BurnIn
            } else {
                ChainFailure::Production
            });
        }
        trace.push(h);
    }
    if let Some(last) = trace.last_mut() {
        *last = energy(points, potential);
    }
    let rate = if tried_prod > 0 {
        acc_prod as f64 / tried_prod as f64
    } else {
        0.0
    };
    Ok((rate, trace, log_step.exp()))
}

/// Outcome of the Fekete optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeketeReport {
    pub energy: f64,
    pub grad_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct FeketeOptions {
    /// Metropolis sweeps at each temperature of the annealing ladder.
    pub sweeps_per_stage: usize,
    /// Annealing runs over `β = 1, 2, 4, …, 2^{max_doubling}`.
    pub max_doubling: u32,
    pub max_iter: usize,
    /// Stop once `max |∇H| ≤ tol_factor · n`.
    pub tol_factor: f64,
    pub memory: usize,
}

impl Default for FeketeOptions {
    fn default() -> Self {
        FeketeOptions {
            sweeps_per_stage: 20,
            max_doubling: 14,
            max_iter: 20_000,
            tol_factor: 1e-8,
            memory: 10,
        }
    }
}

/// Approximate minimiser of `H_n` by annealing and then L-BFGS descent.
pub fn fekete(potential: &Potential, n: usize, seed: u64) -> Result<(Configuration, FeketeReport)> {
    fekete_with(potential, n, seed, FeketeOptions::default())
}

pub fn fekete_with(
    potential: &Potential,
    n: usize,
    seed: u64,
    opts: FeketeOptions,
) -> Result<(Configuration, FeketeReport)> {
    if n < 2 {
        return Err(Error::Config("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = equilibrium_draw(potential, n, &mut rng);
    let mut best = points.clone();
    let mut best_h = energy(&points, potential);
    let gibbs = GibbsOptions {
        burn_in_fraction: 0.5,
        ..GibbsOptions::default()
    };
    for k in 0..=opts.max_doubling {
        let beta = 2f64.powi(k as i32);
        let s0 = initial_step(potential, &points, n, beta);
        if run_chain(
            potential,
            &mut points,
            beta,
            opts.sweeps_per_stage,
            s0,
            &gibbs,
            &mut rng,
        )
        .is_err()
        {
            points.clone_from(&best);
            continue;
        }
        let h = energy(&points, potential);
        if h < best_h {
            best_h = h;
            best.clone_from(&points);
        }
    }
    let report = lbfgs(potential, &mut best, &opts)?;
    if let Some(w) = &report.warning {
        warn!("fekete n={n}: {w}");
    }
    let cfg = Configuration::new(best, f64::INFINITY, seed, Provenance::Fekete)?;
    Ok((cfg, report))
}

fn flatten(g: &[[f64; 2]]) -> Vec<f64> {
    g.iter().flat_map(|v| [v[0], v[1]]).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. Near the optimum energy
/// differences drop below round-off, so a step that raises the energy by
/// less than a round-off allowance is still taken when it reduces the
/// gradient.
fn lbfgs(potential: &Potential, points: &mut Vec<C64>, opts: &FeketeOptions) -> Result<FeketeReport> {
    let n = points.len();
    let tol = opts.tol_factor * n as f64;
    let max_move = 0.5 / (n as f64).sqrt();
    let mut gbuf = vec![[0.0; 2]; n];
    let mut f = energy(points, potential);
    energy_gradient(points, potential, &mut gbuf)?;
    let mut g = flatten(&gbuf);
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iterations = 0;
    let mut warning = None;
    let mut trial = points.clone();
    let mut resets = 0;
    while iterations < opts.max_iter {
        let gmax = max_abs(&g);
        if gmax <= tol {
            break;
        }
        iterations += 1;
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => max_move / gmax.max(1e-300),
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            d = g.iter().map(|x| -x * max_move / gmax).collect();
            slope = dot(&g, &d);
        }
        let longest = d
            .chunks(2)
            .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
            .fold(0.0, f64::max);
        let mut alpha = if longest > max_move { max_move / longest } else { 1.0 };
        let slack = 1e-13 * f.abs().max(1.0);
        let mut accepted = false;
        let mut gnew = vec![0.0; 2 * n];
        let mut fnew = f;
        for _ in 0..60 {
            for (i, t) in trial.iter_mut().enumerate() {
                *t = points[i] + C64::new(d[2 * i], d[2 * i + 1]) * alpha;
            }
            fnew = energy(&trial, potential);
            if fnew.is_finite() && fnew <= f + 1e-4 * alpha * slope {
                accepted = true;
            } else if fnew.is_finite() && fnew <= f + slack && energy_gradient(&trial, potential, &mut gbuf).is_ok() {
                accepted = max_abs(&flatten(&gbuf)) < gmax;
            }
            if accepted {
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if resets < 3 && !hist.is_empty() {
                resets += 1;
                hist.clear();
                continue;
            }
            warning = Some(format!(
                "line search failed after {iterations} iterations with max gradient {gmax:.3e}"
            ));
            break;
        }
        energy_gradient(&trial, potential, &mut gbuf)?;
        for (i, v) in gbuf.iter().enumerate() {
            gnew[2 * i] = v[0];
            gnew[2 * i + 1] = v[1];
        }
        let s: Vec<f64> = d.iter().map(|x| x * alpha).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        std::mem::swap(points, &mut trial);
        f = fnew;
        g = gnew;
    }
    let grad_max = max_abs(&g);
    let converged = grad_max <= tol;
    if !converged && warning.is_none() {
        warning = Some(format!("iteration limit reached with max gradient {grad_max:.3e}"));
    }
    Ok(FeketeReport {
        energy: energy(points, potential),
        grad_max,
        iterations,
        converged,
        warning,
    })
}
