//! Building problems, running the solver and writing run directories.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use aspdhg::diag::{
    epochs_to_threshold, ratio_stabilization, reference_solution, relative_suboptimality, write_summary,
    ReferenceConfig, RunSummary,
};
use aspdhg::io::write_pgm;
use aspdhg::problem::{build_tv_ct, CtInstance};
use aspdhg::solver::run;
use aspdhg::Mode;
use rayon::prelude::*;

use crate::spec::RunSpec;

/// A problem instance shared by every run of one command.
pub struct Prepared {
    pub inst: CtInstance,
    pub f_star: Option<f64>,
}

pub fn prepare(spec: &RunSpec) -> Result<Prepared, String> {
    let inst = build_tv_ct(&spec.ct_config()).map_err(|e| e.to_string())?;
    Ok(Prepared { inst, f_star: None })
}

/// Builds the controller and initial step sizes without iterating, so
/// infeasible specs are rejected before anything runs or is written.
pub fn check_feasible(spec: &RunSpec, prep: &Prepared) -> Result<(), String> {
    let cfg = spec.solver_config();
    let ctl = cfg.controller(&prep.inst.problem).map_err(|e| e.to_string())?;
    cfg.initial_state(&ctl).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn compute_reference(spec: &RunSpec, prep: &mut Prepared) -> Result<(), String> {
    if spec.reference_iters == 0 {
        return Ok(());
    }
    let mono = prep.inst.monolithic().map_err(|e| e.to_string())?;
    let cfg = ReferenceConfig {
        iters: spec.reference_iters,
        ..ReferenceConfig::default()
    };
    prep.f_star = Some(reference_solution(&mono, &cfg).map_err(|e| e.to_string())?.f_star);
    Ok(())
}

/// Unfiltered backprojection `A*b`, rescaled to `[0, 1]`.
pub fn bp_warm_start(inst: &CtInstance) -> Vec<f64> {
    let bp = inst
        .projector
        .adjoint(&inst.sinogram)
        .expect("sinogram matches projector");
    let lo = bp.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        bp.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; bp.len()]
    }
}

pub fn default_name(spec: &RunSpec) -> String {
    format!(
        "{}_{}_{:e}_s{}",
        spec.preset.map_or("custom", |p| p.name()),
        spec.rule.as_str(),
        spec.ratio0,
        spec.seed
    )
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Paper => "paper",
        Mode::Strict => "strict",
    }
}

/// Runs one spec and writes `trace.csv` and `recon.pgm` into `dir`.
pub fn run_one(spec: &RunSpec, prep: &Prepared, label: &str, dir: &Path) -> RunSummary {
    let mut summary = RunSummary {
        run: if spec.warm_start {
            format!("{label}+bp-warm-start")
        } else {
            label.to_string()
        },
        rule: spec.rule.as_str().into(),
        mode: mode_name(spec.mode).into(),
        ratio0: spec.ratio0,
        seed: spec.seed,
        status: "ok".into(),
        final_subopt: f64::NAN,
        epochs_to_threshold: None,
        final_ratio: f64::NAN,
        stabilization: f64::NAN,
    };
    if let Err(e) = run_and_write(spec, prep, dir, &mut summary) {
        summary.status = format!("error: {}", e.replace(',', ";"));
    }
    summary
}

fn run_and_write(
    spec: &RunSpec,
    prep: &Prepared,
    dir: &Path,
    summary: &mut RunSummary,
) -> Result<(), String> {
    let warm = spec.warm_start.then(|| bp_warm_start(&prep.inst));
    let out = run(&prep.inst.problem, &spec.solver_config(), warm.as_deref()).map_err(|e| e.to_string())?;
    summary.final_ratio = out.final_state.ratio();
    summary.stabilization = ratio_stabilization(&out.trace, out.trace.n_blocks).map_err(|e| e.to_string())?;
    if let Some(f_star) = prep.f_star {
        let series = relative_suboptimality(&out.trace, f_star);
        summary.final_subopt = series.last().map_or(f64::NAN, |s| s.1);
        summary.epochs_to_threshold = epochs_to_threshold(&series, spec.threshold);
    }

    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let io = |p: PathBuf, e: std::io::Error| format!("{}: {e}", p.display());
    let path = dir.join("trace.csv");
    let f = fs::File::create(&path).map_err(|e| io(path.clone(), e))?;
    out.trace
        .write_csv(BufWriter::new(f))
        .map_err(|e| io(path.clone(), e))?;
    let path = dir.join("recon.pgm");
    let f = fs::File::create(&path).map_err(|e| io(path.clone(), e))?;
    write_pgm(
        BufWriter::new(f),
        prep.inst.config.geometry.side,
        &out.x,
        0.0,
        1.0,
    )
    .map_err(|e| e.to_string())?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[RunSummary]) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    let f = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    write_summary(BufWriter::new(f), rows).map_err(|e| format!("{}: {e}", path.display()))
}

/// One child run of a sweep or sensitivity study.
pub struct Child {
    pub spec: RunSpec,
    pub label: String,
}

/// Validates and checks every child, then runs them concurrently into
/// `root/<label>/` and writes the combined `root/summary.csv`.
pub fn run_children(base: &RunSpec, children: &[Child], root: &Path) -> Result<Vec<RunSummary>, String> {
    for c in children {
        c.spec.validate().map_err(|e| format!("{}: {e}", c.label))?;
    }
    let mut prep = prepare(base)?;
    for c in children {
        check_feasible(&c.spec, &prep).map_err(|e| format!("{}: {e}", c.label))?;
    }
    compute_reference(base, &mut prep)?;
    let rows: Vec<RunSummary> = children
        .par_iter()
        .map(|c| run_one(&c.spec, &prep, &c.label, &root.join(&c.label)))
        .collect();
    write_summary_file(&root.join("summary.csv"), &rows)?;
    Ok(rows)
}
