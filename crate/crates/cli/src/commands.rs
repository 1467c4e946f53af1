use std::fs;
use std::path::Path;
use std::sync::Arc;

use amlmc::adapt::MeshHierarchy;
use amlmc::analysis::loglog_slope;
use amlmc::experiments::{self, closed_form_mean, unit_reference};
use amlmc::field::Coefficient;
use amlmc::io::{self, ScatterRow};
use amlmc::mlmc::Scheme;
use anyhow::{Context, Result};

use crate::config::RunConfig;

const HIERARCHY_DIR: &str = "hierarchy";

fn prepare(c: &RunConfig) -> Result<()> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let text = serde_json::to_string_pretty(c)? + "\n";
    fs::write(c.out.join("config.json"), text).with_context(|| format!("writing {}", c.out.join("config.json").display()))?;
    Ok(())
}

fn field_value(c: &RunConfig) -> f64 {
    c.setup.hierarchy_field().as_constant().expect("hierarchy field is constant")
}

fn save(c: &RunConfig, h: &MeshHierarchy) -> Result<io::HierarchyManifest> {
    let basis = match c.setup.coefficient()? {
        Coefficient::Matern(b) => Some(b.modes.clone()),
        _ => None,
    };
    let dir = c.out.join(HIERARCHY_DIR);
    io::save_hierarchy(&dir, h, field_value(c), basis).with_context(|| format!("saving hierarchy to {}", dir.display()))
}

/// Loads the saved hierarchy when it was built with the same settings.
fn load_or_new(c: &RunConfig) -> Result<Arc<MeshHierarchy>> {
    let dir = c.out.join(HIERARCHY_DIR);
    if dir.join("manifest.json").exists() {
        let (h, m) = io::load_hierarchy(&dir, c.setup.problem()).with_context(|| format!("loading {}", dir.display()))?;
        if m.config == c.setup.hierarchy_config() && m.field == field_value(c) {
            return Ok(Arc::new(h));
        }
    }
    Ok(Arc::new(c.setup.hierarchy()?))
}

pub fn hierarchy(c: &RunConfig) -> Result<()> {
    prepare(c)?;
    let h = c.setup.hierarchy()?;
    let depth = c.hierarchy_depth();
    h.level(depth - 1)?;
    let m = save(c, &h)?;
    for (k, e) in m.meshes.iter().enumerate() {
        println!("mesh {k:2}  tol {:.3e}  cells {:7}  smallest {:.3e}  rounds {}", e.tol, e.cells, e.smallest_cell, e.rounds);
    }
    Ok(())
}

pub fn run(c: &RunConfig) -> Result<()> {
    prepare(c)?;
    let hash = c.hash();
    let h = load_or_new(c)?;
    let template = c.setup.sampler(c.scheme, c.seed, Some(h.clone()))?;
    let unit = match c.setup.coefficient()? {
        Coefficient::Matern(_) => None,
        _ => Some(unit_reference(&h, c.reference_mesh, c.setup.adapt.upper_bound)?),
    };
    let reference = c.reference.or_else(|| unit.and_then(|u| closed_form_mean(&c.setup, u)));
    let base = c.estimator_config(c.tols[0], c.seed);
    let mut scatter = Vec::new();
    let mut write_err = Ok(());
    let rows = experiments::sweep(&c.setup, &template, &base, &c.tols, c.realizations, reference, |i, r, res| {
        if r != 0 || write_err.is_err() {
            return;
        }
        write_err = (|| {
            io::write_csv(&c.out.join(format!("levels_{i}.csv")), &hash, &io::level_rows(&res.levels))?;
            if c.estimator.sample_log > 0 {
                let samples: Vec<_> = res.levels.iter().flat_map(|l| l.log.iter().cloned()).collect();
                io::write_csv(&c.out.join(format!("samples_{i}.csv")), &hash, &io::sample_rows(c.seed, &samples))?;
                if let Some(u) = unit {
                    scatter.extend(samples.iter().filter_map(|s| {
                        s.constant.map(|a| ScatterRow { level: s.level, k_fine: s.k_fine, e_est: s.e_est, error: u / a - s.q_fine })
                    }));
                }
            }
            Ok::<_, amlmc::Error>(())
        })();
    })?;
    write_err?;
    io::write_csv(&c.out.join("work_vs_tol.csv"), &hash, &rows)?;
    if !scatter.is_empty() {
        io::write_csv(&c.out.join("scatter.csv"), &hash, &scatter)?;
    }
    if c.scheme == Scheme::Amlmc {
        save(c, &h)?;
    }
    for &tol in &c.tols {
        let group: Vec<_> = rows.iter().filter(|r| r.tol == tol).collect();
        let mean = group.iter().map(|r| r.estimate).sum::<f64>() / group.len() as f64;
        let work = group.iter().map(|r| r.total_work).sum::<f64>() / group.len() as f64;
        let miss = group.iter().filter(|r| r.error.abs() > tol).count();
        let miss = if reference.is_some() { format!("  |error| > tol in {miss}/{}", group.len()) } else { String::new() };
        println!("tol {tol:.3e}  estimate {mean:.6}  work {work:.3e}{miss}");
    }
    if let Some(q) = reference {
        println!("reference {q:.6}");
    }
    Ok(())
}

pub fn convergence(c: &RunConfig) -> Result<()> {
    prepare(c)?;
    let h = load_or_new(c)?;
    let p = &c.convergence;
    let rows = experiments::convergence_table(&c.setup, &h, p.adaptive_meshes, p.uniform_meshes)?;
    io::write_csv(&c.out.join("convergence.csv"), &c.hash(), &rows)?;
    for name in ["adaptive", "uniform"] {
        let (dofs, err): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.ladder == name && r.dofs >= 1000).map(|r| (r.dofs as f64, r.e_est.abs())).unzip();
        if dofs.len() >= 2 {
            println!("{name:8}  slope of |e_est| vs DoF {:.3}", loglog_slope(&dofs, &err));
        }
    }
    save(c, &h)?;
    Ok(())
}

pub fn report(c: &RunConfig) -> Result<()> {
    prepare(c)?;
    let h = load_or_new(c)?;
    let r = experiments::model_report(&c.setup, h, &c.report)?;
    write_json(&c.out.join("report.json"), &r)?;
    io::write_csv(&c.out.join("variance.csv"), &c.hash(), &r.variance)?;
    let w = &r.work_models;
    println!("work models  stochastic {:.4e}  uniform-stochastic {:.4e}", w.stochastic, w.uniform_stochastic);
    println!("             deterministic {:.4e}  uniform-deterministic {:.4e}", w.deterministic, w.uniform_deterministic);
    println!("K3 {:.4e}  K4 {:.4e}  K5 {:.4e}  regime {:?}", r.constants.k3, r.constants.k4, r.constants.k5, r.constants.regime);
    for v in &r.variance {
        println!("level {}  measured {:.3e}  model {:.3e}  ratio {:.2}", v.level, v.measured, v.predicted, v.ratio);
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}
