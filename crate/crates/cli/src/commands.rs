//! One function per command. Each writes its artifacts through [`RunDir`].

use crate::config::{Family, PotentialSpec, RunConfig, Suite};
use crate::error::{CliError, Result};
use crate::manifest::{RunDir, RunManifest};
use crate::svg::{self, Series};
use coulomb_core::ensemble::{energy, energy_delta, fekete, sample_gibbs, Configuration};
use coulomb_core::landau::{self, Regime};
use coulomb_core::limits::{self, LimitKernel, Shape};
use coulomb_core::par::parallel_map;
use coulomb_core::polyspace::build_space;
use coulomb_core::potential::{equilibrium_density, Droplet, DropletKind};
use coulomb_core::stats::{self, ZoomRule};
use coulomb_core::{Potential, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub threads: usize,
    pub seed_offset: u64,
}

pub fn config_name(n: usize, seed: u64) -> String {
    format!("configs/n{n:05}_s{seed}.json")
}

fn jobs(cfg: &RunConfig, ctx: &Ctx) -> Vec<(usize, u64)> {
    let mut v = Vec::new();
    for n in cfg.n_values() {
        for k in 0..cfg.seeds as u64 {
            v.push((n, cfg.seed + ctx.seed_offset + k));
        }
    }
    v
}

fn plot_points(c: &Configuration) -> Vec<(f64, f64)> {
    c.points.iter().map(|z| (z.re, z.im)).collect()
}

#[derive(Serialize)]
struct ChainRow {
    n: usize,
    seed: u64,
    beta: f64,
    acceptance_rate: f64,
    step_scale: f64,
    restarts: usize,
    final_energy: f64,
    spacing: f64,
}

pub fn sample(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let pot = cfg.potential.build()?;
    let results = parallel_map(jobs(cfg, ctx), ctx.threads, |(n, seed)| {
        let beta = cfg.beta_for(n).expect("validated");
        sample_gibbs(&pot, n, beta, cfg.sweeps(), seed).map(|(mut c, d)| {
            c.c = cfg.c;
            (c, d)
        })
    });
    let mut rows = Vec::new();
    let mut last = None;
    for r in results {
        let (c, d) = r?;
        dir.write_json(&config_name(c.n, c.seed), &c)?;
        dir.write_json(&format!("diagnostics/n{:05}_s{}.json", c.n, c.seed), &d)?;
        rows.push(ChainRow {
            n: c.n,
            seed: c.seed,
            beta: c.beta,
            acceptance_rate: d.acceptance_rate,
            step_scale: d.step_scale,
            restarts: d.restarts,
            final_energy: d.energy_trace.last().copied().unwrap_or(f64::NAN),
            spacing: stats::spacing(&c),
        });
        last = Some(c);
    }
    dir.write_csv("diagnostics.csv", &rows)?;
    if let (true, Some(c)) = (cfg.plots, last) {
        let title = format!("Gibbs sample, Q = {}, n = {}, beta = {:.3}", pot.name(), c.n, c.beta);
        dir.write("scatter.svg", svg::scatter(&title, &plot_points(&c)).as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FeketeRow {
    n: usize,
    seed: u64,
    energy: f64,
    grad_max: f64,
    iterations: usize,
    converged: bool,
    spacing: f64,
    psi6: Option<f64>,
}

fn bulk_psi6(c: &Configuration, droplet: Option<&Droplet>) -> Option<f64> {
    let d = droplet?;
    stats::psi6(c, &stats::bulk_mask(c, d, 2.0)).ok()
}

pub fn fekete_cmd(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let pot = cfg.potential.build()?;
    let droplet = pot.droplet().ok();
    let results = parallel_map(jobs(cfg, ctx), ctx.threads, |(n, seed)| fekete(&pot, n, seed));
    let mut rows = Vec::new();
    let mut plotted = Vec::new();
    for r in results {
        let (c, rep) = r?;
        if let Some(w) = &rep.warning {
            dir.warn(format!("fekete n={} seed={}: {w}", c.n, c.seed));
        }
        dir.write_json(&config_name(c.n, c.seed), &c)?;
        rows.push(FeketeRow {
            n: c.n,
            seed: c.seed,
            energy: rep.energy,
            grad_max: rep.grad_max,
            iterations: rep.iterations,
            converged: rep.converged,
            spacing: stats::spacing(&c),
            psi6: bulk_psi6(&c, droplet.as_ref()),
        });
        if cfg.plots && !plotted.contains(&c.n) {
            plotted.push(c.n);
            let title = format!("Fekete points, Q = {}, n = {}", pot.name(), c.n);
            dir.write(
                &format!("scatter_n{:05}.svg", c.n),
                svg::scatter(&title, &plot_points(&c)).as_bytes(),
            )?;
        }
    }
    dir.write_csv("fekete.csv", &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct OnePointRow {
    m: usize,
    r: f64,
    one_point_over_m: f64,
    equilibrium_density: Option<f64>,
}

#[derive(Serialize)]
struct ProfileCsvRow {
    m: usize,
    l: f64,
    x: f64,
    rescaled: f64,
    limit: f64,
}

#[derive(Serialize)]
struct ProfileSummary {
    m: usize,
    l: f64,
    theta: f64,
    max_deviation: f64,
}

pub fn kernel(cfg: &RunConfig, _ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let pot = cfg.potential.build()?;
    let droplet = pot.droplet().ok();
    let theta = cfg.theta.unwrap_or(0.0);
    let ms = cfg.n_values();
    let mut summaries = Vec::new();
    let mut last_profiles: Vec<Series> = Vec::new();
    let mut last_ray: Vec<Series> = Vec::new();
    if droplet.is_none() {
        dir.warn(format!(
            "no closed-form droplet for {}; edge profiles skipped",
            pot.name()
        ));
    }
    for &m in &ms {
        let space = build_space(&pot, m)?;
        dir.manifest.spaces.push(space.summary());
        let r_max = space.quadrature.r_cut;
        let mut ray = Vec::new();
        for i in 0..=200 {
            let r = r_max * i as f64 / 200.0;
            let z = C64::from_polar(r, theta);
            let dens = match &droplet {
                Some(d) => Some(equilibrium_density(&pot, d, z)?),
                None => None,
            };
            ray.push(OnePointRow {
                m,
                r,
                one_point_over_m: space.one_point(z) / m as f64,
                equilibrium_density: dens,
            });
        }
        last_ray = vec![Series {
            label: format!("R/m, m={m}"),
            points: ray.iter().map(|r| (r.r, r.one_point_over_m)).collect(),
            line: true,
        }];
        if droplet.is_some() {
            last_ray.push(Series {
                label: "equilibrium".into(),
                points: ray
                    .iter()
                    .map(|r| (r.r, r.equilibrium_density.unwrap_or(f64::NAN)))
                    .collect(),
                line: true,
            });
        }
        dir.write_csv(&format!("one_point_m{m:05}.csv", m = m), &ray)?;
        if let Some(d) = &droplet {
            let mut rows = Vec::new();
            last_profiles.clear();
            for l in cfg.l_values() {
                let prof = limits::boundary_profile(&space, &pot, d, l, 161, theta)?;
                summaries.push(ProfileSummary {
                    m,
                    l,
                    theta,
                    max_deviation: prof.max_deviation,
                });
                last_profiles.push(Series {
                    label: format!("l={l}"),
                    points: prof.rows.iter().map(|r| (r.x, r.rescaled)).collect(),
                    line: true,
                });
                last_profiles.push(Series {
                    label: format!("F(2x+2l), l={l}"),
                    points: prof.rows.iter().map(|r| (r.x, r.limit)).collect(),
                    line: false,
                });
                rows.extend(prof.rows.iter().map(|r| ProfileCsvRow {
                    m,
                    l,
                    x: r.x,
                    rescaled: r.rescaled,
                    limit: r.limit,
                }));
            }
            dir.write_csv(&format!("profile_m{m:05}.csv"), &rows)?;
        }
    }
    dir.write_json("profiles.json", &summaries)?;
    if cfg.plots {
        let m = ms.last().copied().unwrap_or(0);
        let t = format!("One-point function along the ray, Q = {}, m = {m}", pot.name());
        dir.write("one_point.svg", svg::lines(&t, "r", "R/m", &last_ray).as_bytes())?;
        if !last_profiles.is_empty() {
            let t = format!("Rescaled edge profiles, m = {m}");
            dir.write(
                "profiles.svg",
                svg::lines(&t, "x", "density", &last_profiles).as_bytes(),
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumArtifact<'a> {
    m: usize,
    l: f64,
    zoom: C64,
    regime: Regime,
    spectrum: &'a landau::ConcentrationSpectrum,
    count_checks: Vec<landau::CountCheck>,
}

pub fn concentrate(cfg: &RunConfig, _ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let pot = cfg.potential.build()?;
    let droplet = pot.droplet()?;
    let regime = cfg.regime.unwrap_or(Regime::Bulk);
    let theta = cfg.theta.unwrap_or(0.0);
    let zoom = match (cfg.zoom, regime) {
        (Some([x, y]), _) => C64::new(x, y),
        (None, Regime::Bulk) => C64::new(0.0, 0.0),
        (None, Regime::Boundary) => droplet.boundary(theta).0,
    };
    let margin = cfg.margin.unwrap_or(match regime {
        Regime::Bulk => 0.0,
        Regime::Boundary => 2.0,
    });
    let rho = cfg.rho.unwrap_or(1.0);
    let mut rows = Vec::new();
    let mut plunge = Vec::new();
    let ms = cfg.n_values();
    for &m in &ms {
        let (order, note) = landau::rounded_order(m, rho);
        if let Some(n) = &note {
            dir.warn(n.clone());
        }
        let space = build_space(&pot, order)?;
        dir.manifest.spaces.push(space.summary());
        for l in cfg.l_grid() {
            let (row, spec) = landau::trace_point(&space, &pot, zoom, regime, l, rho, m, margin, note.clone())?;
            let checks = landau::eig_count_grid(&spec);
            if let Some(bad) = checks.iter().find(|c| !c.passed) {
                dir.warn(format!(
                    "counting inequality fails at m={m}, L={l}, theta={}",
                    bad.theta
                ));
            }
            dir.write_json(
                &format!("spectra/m{m:05}_L{l}.json"),
                &SpectrumArtifact {
                    m,
                    l,
                    zoom,
                    regime,
                    spectrum: &spec,
                    count_checks: checks,
                },
            )?;
            if Some(&m) == ms.last() {
                let shown = spec.eigenvalues.iter().take_while(|&&x| x > 1e-6).count().max(1) + 5;
                plunge.push(Series {
                    label: format!("L={l}"),
                    points: spec
                        .eigenvalues
                        .iter()
                        .take(shown)
                        .enumerate()
                        .map(|(k, &v)| (k as f64, v))
                        .collect(),
                    line: true,
                });
            }
            rows.push(row);
        }
    }
    dir.write_csv("traces.csv", &rows)?;
    dir.write_json("traces.json", &rows)?;
    if cfg.plots {
        let t = format!(
            "Concentration eigenvalues, Q = {}, m = {}",
            pot.name(),
            ms.last().copied().unwrap_or(0)
        );
        dir.write("plunge.svg", svg::lines(&t, "index", "eigenvalue", &plunge).as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

fn ginibre_closed_form(m: usize, z: C64) -> f64 {
    // m e^{-x} Σ_{k<m} x^k/k!, summed with running terms
    let x = m as f64 * z.norm_sqr();
    let mut term = (-x).exp();
    let mut sum = term;
    for k in 1..m {
        term *= x / k as f64;
        sum += term;
    }
    m as f64 * sum
}

fn suite_special() -> Vec<Check> {
    let refl = (0..=2000)
        .map(|i| {
            let x = i as f64 / 100.0;
            (limits::f_real(x) + limits::f_real(-x) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    vec![
        Check::at_most("F(0) - 1/2", (limits::f_real(0.0) - 0.5).abs(), 0.0),
        Check::at_most("F(x)+F(-x)-1 on [0,20]", refl, 1e-12),
        Check::at_most("|D(10) - 0.05|", (limits::dawson(10.0) - 0.05).abs(), 6e-4),
    ]
}

fn suite_ensemble(pot: &Potential, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<C64> = (0..32)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..32 {
        let new = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let d = energy_delta(&pts, pot, j, new);
        let mut moved = pts.clone();
        moved[j] = new;
        let full = energy(&moved, pot) - energy(&pts, pot);
        worst = worst.max((d - full).abs() / full.abs().max(1.0));
    }
    let (_, rep) = fekete(pot, 16, seed)?;
    Ok(vec![
        Check::at_most("energy delta vs recompute", worst, 1e-10),
        Check::at_most("Fekete n=16 gradient / n", rep.grad_max / 16.0, 1e-6),
    ])
}

fn suite_polyspace(pot: &Potential, m: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = build_space(&Potential::ginibre(), 64)?;
    let mut rel: f64 = 0.0;
    for _ in 0..50 {
        let z = C64::from_polar(1.3 * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
        let exact = ginibre_closed_form(64, z);
        rel = rel.max((g.one_point(z) - exact).abs() / exact);
    }
    let s = build_space(pot, m)?;
    let r = s.quadrature.r_cut * 0.8;
    let mut mass_err: f64 = 0.0;
    for _ in 0..3 {
        let z = C64::from_polar(r * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
        let bz = s.basis_vec(z);
        let rz: f64 = bz.iter().map(|x| x.norm_sqr()).sum();
        let mut mass = 0.0;
        s.for_each_node(|_, w, v| {
            let k: C64 = v.iter().zip(&bz).map(|(a, b)| b * a.conj()).sum();
            mass += w * k.norm_sqr() / rz;
        });
        mass_err = mass_err.max((mass - 1.0).abs());
    }
    Ok(vec![
        Check::at_most("Ginibre one-point vs closed form (m=64)", rel, 1e-10),
        Check::at_most(&format!("Gram error (m={m})"), s.gram_error, 1e-8),
        Check::at_most(&format!("Berezin mass - 1 (m={m})"), mass_err, 1e-8),
    ])
}

fn suite_limits(seed: u64) -> Result<Vec<Check>> {
    let decay = limits::verify_decay((-6.0, 6.0), 10_000, seed);
    let ratios = [2.0, 4.0, 8.0]
        .iter()
        .map(|&r| limits::area_law(&LimitKernel::Ginibre, &Shape::disc(r)).map(|a| a.ratio))
        .collect::<coulomb_core::Result<Vec<f64>>>()?;
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let mut kg: f64 = 0.0;
    for i in 0..=8 {
        for j in 0..=8 {
            let z = C64::new(-2.0 + 0.5 * i as f64, -1.0 + 0.25 * j as f64);
            let w = C64::new(1.0 - 0.4 * j as f64, 2.0 - 0.5 * i as f64);
            kg = kg.max((limits::boundary_k(-10.0, z, w) - limits::ginibre_g(z, w)).norm());
        }
    }
    Ok(vec![
        Check::at_most("decay constant", decay.max_implied, 10.0),
        Check::at_most("Ginibre disc area-law spread", hi / lo - 1.0, 0.2),
        Check::at_most("|K_-10 - G|", kg, 1e-6),
    ])
}

fn suite_landau() -> Result<Vec<Check>> {
    let s = build_space(&Potential::ginibre(), 64)?;
    let spec = landau::concentration(&s, &landau::Region::disc(C64::new(0.0, 0.0), 3.0 / 8.0))?;
    let fails = landau::eig_count_grid(&spec).iter().filter(|c| !c.passed).count();
    Ok(vec![
        Check::at_most("bulk trace / 9 - 1", (spec.trace / 9.0 - 1.0).abs(), 0.05),
        Check::at_most("trace identity", (spec.trace - spec.eigen_sum()).abs(), 1e-8),
        Check::at_most(
            "trace-square identity",
            (spec.trace_sq - spec.eigen_sum_sq()).abs(),
            1e-8,
        ),
        Check::at_most("counting inequality violations", fails as f64, 0.0),
    ])
}

fn suite_stats(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for k in 0..100 {
        let pts: Vec<C64> = (0..(2 + k)).map(|_| C64::new(rng.random(), rng.random())).collect();
        let mut brute = f64::INFINITY;
        for i in 0..pts.len() {
            for j in 0..i {
                brute = brute.min((pts[i] - pts[j]).norm());
            }
        }
        mismatches += (stats::min_distance(&pts) != brute) as usize;
    }
    let mut lattice = Vec::new();
    for i in -8i32..=8 {
        for j in -8i32..=8 {
            lattice.push(C64::new(i as f64 + 0.5 * j as f64, j as f64 * 3f64.sqrt() / 2.0));
        }
    }
    let cfg = Configuration::synthetic(lattice)?;
    let mask: Vec<bool> = cfg.points.iter().map(|z| z.norm() < 4.0).collect();
    let psi = stats::psi6(&cfg, &mask)?;
    Ok(vec![
        Check::at_most("grid hash vs brute force mismatches", mismatches as f64, 0.0),
        Check::at_most("1 - psi6(triangular lattice)", (1.0 - psi).abs(), 1e-12),
    ])
}

pub fn verify(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let pot = cfg.potential.build()?;
    let seed = cfg.seed + ctx.seed_offset;
    let m = cfg.n.unwrap_or(32);
    let wanted: Vec<Suite> = match cfg.suite() {
        Suite::All => vec![
            Suite::Special,
            Suite::Ensemble,
            Suite::Polyspace,
            Suite::Limits,
            Suite::Landau,
            Suite::Stats,
        ],
        s => vec![s],
    };
    let results = parallel_map(wanted, ctx.threads, |s| -> Result<SuiteResult> {
        let checks = match s {
            Suite::Special => suite_special(),
            Suite::Ensemble => suite_ensemble(&pot, seed)?,
            Suite::Polyspace => suite_polyspace(&pot, m, seed)?,
            Suite::Limits => suite_limits(seed)?,
            Suite::Landau => suite_landau()?,
            Suite::Stats => suite_stats(seed)?,
            Suite::All => unreachable!(),
        };
        Ok(SuiteResult {
            suite: s,
            passed: checks.iter().all(|c| c.passed),
            checks,
        })
    });
    let suites = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = VerifySummary {
        passed: suites.iter().all(|s| s.passed),
        suites,
    };
    dir.write_json("verify.json", &summary)?;
    if !summary.passed {
        let failed: Vec<String> = summary
            .suites
            .iter()
            .flat_map(|s| {
                s.checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(move |c| format!("{:?}: {}", s.suite, c.name))
            })
            .collect();
        return Err(CliError::Numerical(format!(
            "verification failed: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

/// Configurations listed in the manifest of a run directory.
pub fn load_configs(run: &Path) -> Result<(RunManifest, Vec<Configuration>)> {
    let manifest = RunManifest::load(run)?;
    let mut out = Vec::new();
    for a in &manifest.files {
        if a.path.starts_with("configs/") && a.path.ends_with(".json") {
            let p = run.join(&a.path);
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            let c: Configuration =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            out.push(c);
        }
    }
    Ok((manifest, out))
}

/// The droplet of `pot`, or an empirical one from the largest
/// configuration when there is no closed form.
pub fn droplet_for(pot: &Potential, family: &[Configuration]) -> Result<(Droplet, Option<String>)> {
    match pot.droplet() {
        Ok(d) => Ok((d, None)),
        Err(_) => {
            let big = family
                .iter()
                .max_by_key(|c| c.n)
                .ok_or_else(|| CliError::Validation("empty family".into()))?;
            let d = Droplet::empirical(&big.points, 0.0)?;
            Ok((
                d,
                Some(format!(
                    "droplet of {} taken as the hull of an n={} configuration",
                    pot.name(),
                    big.n
                )),
            ))
        }
    }
}

#[derive(Serialize)]
struct SpacingRow {
    n: usize,
    seed: u64,
    beta: Option<f64>,
    c: Option<f64>,
    spacing: f64,
    vacuum_distance: f64,
    scaled_vacuum_distance: f64,
    psi6: Option<f64>,
}

#[derive(Serialize)]
struct DensityCsvRow {
    rule: &'static str,
    l: f64,
    lower: f64,
    upper: f64,
    configs: usize,
}

#[derive(Serialize)]
struct DiscrepancyCsvRow {
    l: f64,
    regime: Regime,
    residual: f64,
    normalized: f64,
}

#[derive(Serialize)]
struct SeparationRow {
    n: usize,
    runs: usize,
    min_spacing: f64,
    median_spacing: f64,
}

#[derive(Serialize)]
struct MzRow {
    n: usize,
    seed: u64,
    mz_constant: Option<f64>,
    interp_constant: Option<f64>,
    lagrange_sup: f64,
    failures: String,
}

fn generate_family(cfg: &RunConfig, ctx: &Ctx, pot: &Potential) -> Result<Vec<Configuration>> {
    let fam = cfg.family.unwrap_or(Family::Gibbs);
    parallel_map(jobs(cfg, ctx), ctx.threads, |(n, seed)| match fam {
        Family::Gibbs => {
            let beta = cfg.beta_for(n).expect("validated");
            sample_gibbs(pot, n, beta, cfg.sweeps(), seed).map(|(mut c, _)| {
                c.c = cfg.c;
                c
            })
        }
        Family::Fekete => fekete(pot, n, seed).map(|(c, _)| c),
    })
    .into_iter()
    .map(|r| r.map_err(CliError::from))
    .collect()
}

/// Family of a `stats` run and the potential it belongs to.
fn stats_family(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<(PotentialSpec, Vec<Configuration>)> {
    let Some(inputs) = &cfg.inputs else {
        let pot = cfg.potential.build()?;
        let family = generate_family(cfg, ctx, &pot)?;
        for c in &family {
            dir.write_json(&config_name(c.n, c.seed), c)?;
        }
        return Ok((cfg.potential, family));
    };
    let mut spec = None;
    let mut family = Vec::new();
    for run in inputs {
        let (m, cs) = load_configs(run)?;
        if !m.complete {
            dir.warn(format!("{} is an incomplete run", run.display()));
        }
        match spec {
            None => spec = Some(m.config.potential),
            Some(s) if s != m.config.potential => {
                return Err(CliError::Validation(format!(
                    "{} uses a different potential than the other inputs",
                    run.display()
                )))
            }
            _ => {}
        }
        family.extend(cs);
    }
    if family.is_empty() {
        return Err(CliError::Validation("no configurations found in the inputs".into()));
    }
    family.sort_by_key(|c| (c.n, c.seed));
    Ok((spec.expect("non-empty inputs"), family))
}

pub fn stats_cmd(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let (spec, family) = stats_family(cfg, ctx, dir)?;
    let pot = spec.build()?;
    let (droplet, note) = droplet_for(&pot, &family)?;
    if let Some(n) = note {
        dir.warn(n);
    }
    let zoom = cfg.zoom.map(|[x, y]| C64::new(x, y)).unwrap_or(C64::new(0.0, 0.0));
    let l_grid = cfg.l_grid();
    let s = cfg.s.unwrap_or(0.5);
    let reports = parallel_map(family.iter().collect(), ctx.threads, |c: &Configuration| {
        stats::stat_report(c, &droplet, &[zoom], &l_grid, s)
    });
    let mut rows = Vec::new();
    for (c, r) in family.iter().zip(reports) {
        let r = r?;
        dir.write_json(&format!("stats/n{:05}_s{}.json", c.n, c.seed), &r)?;
        rows.push(SpacingRow {
            n: c.n,
            seed: c.seed,
            beta: c.beta.is_finite().then_some(c.beta),
            c: c.c,
            spacing: r.spacing,
            vacuum_distance: r.vacuum_distance,
            scaled_vacuum_distance: (c.n as f64).sqrt() * r.vacuum_distance,
            psi6: r.psi6,
        });
    }
    dir.write_csv("spacing.csv", &rows)?;

    let mut sizes: Vec<usize> = family.iter().map(|c| c.n).collect();
    sizes.dedup();
    let sep: Vec<SeparationRow> = sizes
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.spacing).collect();
            SeparationRow {
                n,
                runs: v.len(),
                min_spacing: v.iter().cloned().fold(f64::INFINITY, f64::min),
                median_spacing: stats::quantile(&v, 0.5),
            }
        })
        .collect();
    dir.write_csv("separation.csv", &sep)?;

    let analytic = !matches!(droplet.kind, DropletKind::Empirical { .. });
    let mut rules: Vec<(&'static str, ZoomRule)> = vec![
        ("fixed", ZoomRule::Fixed { p: zoom }),
        ("adversarial_bulk", ZoomRule::Adversarial { regime: Regime::Bulk }),
        (
            "adversarial_boundary",
            ZoomRule::Adversarial {
                regime: Regime::Boundary,
            },
        ),
    ];
    if analytic {
        rules.insert(
            1,
            (
                "boundary_normal",
                ZoomRule::BoundaryNormal {
                    theta: cfg.theta.unwrap_or(0.0),
                    l: 0.0,
                },
            ),
        );
    }
    let dens = parallel_map(rules, ctx.threads, |(name, rule)| {
        stats::bl_density(&family, &rule, &pot, &droplet, &l_grid).map(|rows| (name, rows))
    });
    let mut density_rows = Vec::new();
    for d in dens {
        let (name, rows) = d?;
        density_rows.extend(rows.into_iter().map(|r| DensityCsvRow {
            rule: name,
            l: r.l,
            lower: r.lower,
            upper: r.upper,
            configs: r.configs,
        }));
    }
    dir.write_csv("density.csv", &density_rows)?;

    let disc_jobs: Vec<(f64, Regime)> = l_grid
        .iter()
        .filter(|&&l| l >= 2.0)
        .flat_map(|&l| [(l, Regime::Bulk), (l, Regime::Boundary)])
        .collect();
    let disc = parallel_map(disc_jobs, ctx.threads, |(l, regime)| {
        stats::discrepancy(&family, &ZoomRule::Adversarial { regime }, &pot, &droplet, l, regime)
    });
    let disc_rows = disc
        .into_iter()
        .map(|r| {
            r.map(|d| DiscrepancyCsvRow {
                l: d.l,
                regime: d.regime,
                residual: d.residual,
                normalized: d.normalized,
            })
        })
        .collect::<coulomb_core::Result<Vec<_>>>()?;
    dir.write_csv("discrepancy.csv", &disc_rows)?;

    if let Some(gamma) = cfg.gamma {
        let margin = cfg.margin.unwrap_or(1.0);
        let mz = parallel_map(family.iter().collect(), ctx.threads, |c: &Configuration| {
            landau::mz_report(c, &pot, 1.0 - gamma, 1.0 + gamma, margin)
        });
        let mut mz_rows = Vec::new();
        for (c, r) in family.iter().zip(mz) {
            let r = r?;
            mz_rows.push(MzRow {
                n: c.n,
                seed: c.seed,
                mz_constant: r.mz_constant,
                interp_constant: r.interp_constant,
                lagrange_sup: r.lagrange_sup,
                failures: r.failures.join("; "),
            });
        }
        dir.write_csv("mz.csv", &mz_rows)?;
    }

    if cfg.plots {
        let mut series = Vec::new();
        for name in ["fixed", "boundary_normal"] {
            for (side, pick) in [("lower", 0), ("upper", 1)] {
                let pts: Vec<(f64, f64)> = density_rows
                    .iter()
                    .filter(|r| r.rule == name)
                    .map(|r| (r.l, if pick == 0 { r.lower } else { r.upper }))
                    .collect();
                if !pts.is_empty() {
                    series.push(Series {
                        label: format!("{name} {side}"),
                        points: pts,
                        line: true,
                    });
                }
            }
        }
        let t = format!("N/L^2 over the family tail, Q = {}", pot.name());
        dir.write("density.svg", svg::lines(&t, "L", "N/L^2", &series).as_bytes())?;
    }
    Ok(())
}

/// Output directory of a run when neither `--out` nor `output` is given.
pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    let root = std::env::var_os("COULOMB_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-{}", cfg.command.name(), &cfg.hash()[..12]))
}
