//! Aggregation of finished runs into one markdown document with plots.

use crate::commands::{droplet_for, load_configs, Ctx};
use crate::config::{PotentialSpec, RunConfig};
use crate::error::Result;
use crate::manifest::RunDir;
use crate::svg;
use coulomb_core::ensemble::{Configuration, Provenance};
use coulomb_core::landau::Regime;
use coulomb_core::par::parallel_map;
use coulomb_core::potential::DropletKind;
use coulomb_core::stats::{self, ZoomRule};
use coulomb_core::C64;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

struct Group {
    potential: PotentialSpec,
    label: String,
    configs: Vec<Configuration>,
    expected: BTreeSet<usize>,
}

#[derive(Serialize)]
struct SeparationEntry {
    group: String,
    n: usize,
    runs: usize,
    min_spacing: f64,
    median_spacing: f64,
}

#[derive(Serialize)]
struct DensityEntry {
    group: String,
    l: f64,
    bulk_lower: f64,
    bulk_upper: f64,
    boundary_lower: f64,
    boundary_upper: f64,
}

#[derive(Serialize)]
struct DiscrepancyEntry {
    group: String,
    regime: Regime,
    max_normalized: f64,
    worst_l: f64,
}

#[derive(Serialize)]
struct FitEntry {
    potential: String,
    cs: Vec<f64>,
    medians: Vec<f64>,
    a: f64,
    rms_log_residual: f64,
}

#[derive(Serialize, Default)]
struct ReportData {
    warnings: Vec<String>,
    separation: Vec<SeparationEntry>,
    density: Vec<DensityEntry>,
    discrepancy: Vec<DiscrepancyEntry>,
    s0_fits: Vec<FitEntry>,
}

fn temperature_label(c: &Configuration) -> String {
    match (c.provenance, c.c) {
        (Provenance::Fekete, _) => "fekete".into(),
        (_, Some(cv)) => format!("c={cv}"),
        (Provenance::Synthetic, None) => "synthetic".into(),
        (_, None) => format!("beta={}", c.beta),
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' {
            out.push(ch);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "n/a".into()
    }
}

pub fn report(cfg: &RunConfig, ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let inputs = cfg.inputs.clone().unwrap_or_default();
    let mut data = ReportData::default();
    let mut md = String::from("# Coulomb gas run report\n\n");
    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    if inputs.is_empty() {
        data.warnings
            .push("no run directories were given; the report is empty".into());
    }
    let mut runs_table = String::from("| run | command | complete | configurations |\n|---|---|---|---|\n");
    for run in &inputs {
        let (manifest, configs) = match load_configs(run) {
            Ok(x) => x,
            Err(e) => {
                data.warnings.push(format!("skipped {}: {e}", run.display()));
                continue;
            }
        };
        if !manifest.complete {
            data.warnings.push(format!("{} did not complete", run.display()));
        }
        let _ = writeln!(
            runs_table,
            "| `{}` | {} | {} | {} |",
            run.display(),
            manifest.command,
            manifest.complete,
            configs.len()
        );
        let pot = manifest.config.potential.build()?;
        let expected: BTreeSet<usize> = manifest.config.n_values().into_iter().collect();
        for c in configs {
            let key = (pot.name(), temperature_label(&c));
            let g = groups.entry(key.clone()).or_insert_with(|| Group {
                potential: manifest.config.potential,
                label: format!("{} / {}", key.0, key.1),
                configs: Vec::new(),
                expected: BTreeSet::new(),
            });
            g.expected.extend(expected.iter().copied());
            g.configs.push(c);
        }
    }
    for g in groups.values_mut() {
        g.configs.sort_by_key(|c| (c.n, c.seed));
        let present: BTreeSet<usize> = g.configs.iter().map(|c| c.n).collect();
        let missing: Vec<String> = g.expected.difference(&present).map(|n| n.to_string()).collect();
        if !missing.is_empty() {
            data.warnings.push(format!(
                "{}: gap in the n-grid, missing n = {}",
                g.label,
                missing.join(", ")
            ));
        }
    }

    md.push_str("## Runs\n\n");
    md.push_str(&runs_table);
    md.push('\n');

    // scatter plots, preferring Fekete families
    let mut plotted = BTreeSet::new();
    let mut plots = String::new();
    let mut order: Vec<&Group> = groups.values().collect();
    order.sort_by_key(|g| (g.configs[0].provenance != Provenance::Fekete, g.label.clone()));
    for g in order {
        let pot = g.potential.build()?;
        if !plotted.insert(pot.name()) || !cfg.plots {
            continue;
        }
        let c = g.configs.iter().max_by_key(|c| c.n).expect("non-empty group");
        let file = format!("scatter_{}.svg", slug(&pot.name()));
        let title = format!("{}, n = {}", g.label, c.n);
        let pts: Vec<(f64, f64)> = c.points.iter().map(|z| (z.re, z.im)).collect();
        dir.write(&file, svg::scatter(&title, &pts).as_bytes())?;
        let _ = writeln!(plots, "![{}]({file})\n", g.label);
    }
    if !plots.is_empty() {
        md.push_str("## Configurations\n\n");
        md.push_str(&plots);
    }

    for g in groups.values() {
        let sizes: BTreeSet<usize> = g.configs.iter().map(|c| c.n).collect();
        for n in sizes {
            let v: Vec<f64> = g.configs.iter().filter(|c| c.n == n).map(stats::spacing).collect();
            data.separation.push(SeparationEntry {
                group: g.label.clone(),
                n,
                runs: v.len(),
                min_spacing: v.iter().cloned().fold(f64::INFINITY, f64::min),
                median_spacing: stats::quantile(&v, 0.5),
            });
        }
    }

    // separation against c on the tail of each Gibbs family
    let mut by_pot: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for g in groups.values() {
        if let Some(c) = g.configs[0].c {
            let tail = stats::family_tail(&g.configs);
            let v: Vec<f64> = tail.iter().map(|c| stats::spacing(c)).collect();
            by_pot
                .entry(g.potential.build()?.name())
                .or_default()
                .push((c, stats::quantile(&v, 0.5)));
        }
    }
    for (name, mut pts) in by_pot {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.len() < 2 {
            continue;
        }
        let cs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let meds: Vec<f64> = pts.iter().map(|p| p.1).collect();
        match stats::fit_s0(&cs, &meds) {
            Ok(f) => data.s0_fits.push(FitEntry {
                potential: name,
                cs,
                medians: meds,
                a: f.a,
                rms_log_residual: f.rms_log_residual,
            }),
            Err(e) => data.warnings.push(format!("s0 fit for {name}: {e}")),
        }
    }

    let ls = [2.0, 4.0, 6.0, 8.0];
    let jobs: Vec<&Group> = groups.values().collect();
    let computed = parallel_map(
        jobs,
        ctx.threads,
        |g| -> Result<(Vec<DensityEntry>, Vec<DiscrepancyEntry>)> {
            let pot = g.potential.build()?;
            let (droplet, _) = droplet_for(&pot, &g.configs)?;
            let mut dens = Vec::new();
            if !matches!(droplet.kind, DropletKind::Empirical { .. }) {
                let bulk = stats::bl_density(
                    &g.configs,
                    &ZoomRule::Fixed { p: C64::new(0.0, 0.0) },
                    &pot,
                    &droplet,
                    &ls,
                )?;
                let edge = stats::bl_density(
                    &g.configs,
                    &ZoomRule::BoundaryNormal { theta: 0.0, l: 0.0 },
                    &pot,
                    &droplet,
                    &ls,
                )?;
                for (b, e) in bulk.iter().zip(&edge) {
                    dens.push(DensityEntry {
                        group: g.label.clone(),
                        l: b.l,
                        bulk_lower: b.lower,
                        bulk_upper: b.upper,
                        boundary_lower: e.lower,
                        boundary_upper: e.upper,
                    });
                }
            }
            let mut disc = Vec::new();
            for regime in [Regime::Bulk, Regime::Boundary] {
                let mut worst = (f64::NEG_INFINITY, f64::NAN);
                for l in [2.0, 4.0, 6.0, 8.0, 10.0] {
                    let d =
                        stats::discrepancy(&g.configs, &ZoomRule::Adversarial { regime }, &pot, &droplet, l, regime)?;
                    if d.normalized > worst.0 {
                        worst = (d.normalized, l);
                    }
                }
                disc.push(DiscrepancyEntry {
                    group: g.label.clone(),
                    regime,
                    max_normalized: worst.0,
                    worst_l: worst.1,
                });
            }
            Ok((dens, disc))
        },
    );
    for r in computed {
        let (d, q) = r?;
        data.density.extend(d);
        data.discrepancy.extend(q);
    }

    if !data.separation.is_empty() {
        md.push_str("## Separation\n\nScaled spacing `√n·min|ζ_j − ζ_k|` per family and size.\n\n");
        md.push_str("| family | n | runs | min | median |\n|---|---|---|---|---|\n");
        for r in &data.separation {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                cell(&r.group),
                r.n,
                r.runs,
                fmt(r.min_spacing),
                fmt(r.median_spacing)
            );
        }
        md.push('\n');
    }
    if !data.s0_fits.is_empty() {
        md.push_str("Fit of the tail median spacing to `a·exp(−3/(2c))`:\n\n| potential | c | a | rms log residual |\n|---|---|---|---|\n");
        for f in &data.s0_fits {
            let cs: Vec<String> = f.cs.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} |",
                cell(&f.potential),
                cs.join(", "),
                fmt(f.a),
                fmt(f.rms_log_residual)
            );
        }
        md.push('\n');
    }
    if !data.density.is_empty() {
        md.push_str("## Density\n\n`N/L²` for discs of radius `L/√n` over the family tail. ");
        md.push_str("Bulk discs are centred at 0 and should approach 1; boundary discs sit on the edge point at angle 0 and should approach 1/2.\n\n");
        md.push_str("| family | L | bulk min | bulk max | boundary min | boundary max |\n|---|---|---|---|---|---|\n");
        for r in &data.density {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                cell(&r.group),
                r.l,
                fmt(r.bulk_lower),
                fmt(r.bulk_upper),
                fmt(r.boundary_lower),
                fmt(r.boundary_upper)
            );
        }
        md.push('\n');
    }
    if !data.discrepancy.is_empty() {
        md.push_str("## Discrepancy\n\nLargest adversarial `|N − κΔQL²|` over L ∈ {2,…,10}, divided by `L^{5/3}` (bulk) or `L^{5/3}·log L` (boundary).\n\n");
        md.push_str("| family | regime | max normalized | at L |\n|---|---|---|---|\n");
        for r in &data.discrepancy {
            let _ = writeln!(
                md,
                "| {} | {:?} | {} | {} |",
                cell(&r.group),
                r.regime,
                fmt(r.max_normalized),
                r.worst_l
            );
        }
        md.push('\n');
    }
    if !data.warnings.is_empty() {
        md.push_str("## Warnings\n\n");
        for w in &data.warnings {
            let _ = writeln!(md, "- {w}");
        }
    }
    for w in data.warnings.clone() {
        dir.warn(w);
    }
    dir.write("report.md", md.as_bytes())?;
    dir.write_json("report.json", &data)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::slug;

    #[test]
    fn slugs() {
        assert_eq!(slug("|z|^4 - 1.4142 Re z^2"), "z_4_1.4142_Re_z_2");
    }
}
