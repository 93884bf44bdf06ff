//! `aspdhg` experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod exec;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exec::{
    check_feasible, compute_reference, default_name, prepare, run_children, run_one, write_summary_file,
    Child,
};
use spec::{applies, RuleName, RunSpec, SENSITIVITY_PARAMS};

#[derive(Parser)]
#[command(
    name = "aspdhg",
    version,
    about = "Adaptive stochastic primal-dual runs on toy tomography problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem and write trace.csv, recon.pgm and summary.csv.
    Run(Common),
    /// Cross product of starting ratios and rules.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated starting ratios.
        #[arg(long, default_value = "1e-3,1e-5,1e-7,1e-9")]
        ratios: String,
        /// Comma-separated rules (fixed, a, b).
        #[arg(long, default_value = "fixed,a,b")]
        rules: String,
    },
    /// One run per value of a controller hyperparameter.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// alpha0, eta, delta, c or s_scale.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

#[derive(Args)]
struct Common {
    /// INI file of `key = value` settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the flags below.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// sparse_view, low_dose, limited_angle or custom.
    #[arg(long, allow_hyphen_values = true)]
    preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    side: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    detectors: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    n_batches: Option<String>,
    /// TV weight, or `none` to drop the TV block.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// none, gaussian:<rel> or poisson:<dose>.
    #[arg(long, allow_hyphen_values = true)]
    noise: Option<String>,
    /// fixed, a or b.
    #[arg(long, allow_hyphen_values = true)]
    rule: Option<String>,
    /// paper or strict.
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    ratio0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s_scale: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epochs: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Start from the rescaled backprojection instead of zero.
    #[arg(long)]
    warm_start: bool,
    /// Iterations of the deterministic reference run (0 skips it).
    #[arg(long, allow_hyphen_values = true)]
    reference_iters: Option<String>,
    /// Output root; defaults to the config file, then $ASPDHG_OUT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Name of the run directory under the output root.
    #[arg(long, allow_hyphen_values = true)]
    name: Option<String>,
}

impl Common {
    fn spec(&self) -> Result<RunSpec, String> {
        let mut s = RunSpec::default();
        if let Some(path) = &self.config {
            s.load_ini(path)?;
        }
        let flags = [
            ("preset", &self.preset),
            ("side", &self.side),
            ("angles", &self.angles),
            ("detectors", &self.detectors),
            ("n_batches", &self.n_batches),
            ("lambda", &self.lambda),
            ("noise", &self.noise),
            ("rule", &self.rule),
            ("mode", &self.mode),
            ("eps0", &self.eps0),
            ("ratio0", &self.ratio0),
            ("tau0", &self.tau0),
            ("sigma0", &self.sigma0),
            ("beta", &self.beta),
            ("alpha0", &self.alpha0),
            ("eta", &self.eta),
            ("delta", &self.delta),
            ("c", &self.c),
            ("s_scale", &self.s_scale),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("reference_iters", &self.reference_iters),
            ("name", &self.name),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v)?;
            }
        }
        if self.warm_start {
            s.warm_start = true;
        }
        if let Some(out) = &self.out {
            s.out = Some(out.clone());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
            s.set(k.trim(), v)?;
        }
        Ok(s)
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let spec = common.spec().map_err(Failure::Invalid)?;
    spec.validate().map_err(Failure::Invalid)?;
    let mut prep = prepare(&spec).map_err(Failure::Invalid)?;
    check_feasible(&spec, &prep).map_err(Failure::Invalid)?;
    compute_reference(&spec, &mut prep).map_err(Failure::Runtime)?;
    let name = spec.name.clone().unwrap_or_else(|| default_name(&spec));
    let dir = spec.out_root().join(&name);
    let row = run_one(&spec, &prep, &name, &dir);
    write_summary_file(&dir.join("summary.csv"), std::slice::from_ref(&row)).map_err(Failure::Runtime)?;
    println!("{}", dir.display());
    if row.status != "ok" {
        return Err(Failure::Runtime(row.status));
    }
    Ok(())
}

fn finish_children(base: &RunSpec, children: Vec<Child>, kind: &str) -> Result<(), Failure> {
    let name = base
        .name
        .clone()
        .unwrap_or_else(|| format!("{kind}_s{}", base.seed));
    let root = base.out_root().join(name);
    let rows = run_children(base, &children, &root).map_err(|e| {
        if root.exists() {
            Failure::Runtime(e)
        } else {
            Failure::Invalid(e)
        }
    })?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} ({} runs, {failed} failed)", root.display(), rows.len());
    if failed == rows.len() {
        return Err(Failure::Runtime("every run failed".into()));
    }
    Ok(())
}

fn cmd_sweep(common: &Common, ratios: &str, rules: &str) -> Result<(), Failure> {
    let base = common.spec().map_err(Failure::Invalid)?;
    base.validate().map_err(Failure::Invalid)?;
    let ratios = split_list(ratios);
    let rules = split_list(rules)
        .into_iter()
        .map(RuleName::parse)
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::Invalid)?;
    if ratios.is_empty() || rules.is_empty() {
        eprintln!("warning: empty sweep, nothing to do");
        return Ok(());
    }
    let mut children = Vec::new();
    for rule in &rules {
        for r in &ratios {
            let idx = children.len();
            let mut s = base.clone();
            s.rule = *rule;
            s.set("ratio0", r).map_err(Failure::Invalid)?;
            s.seed = base.seed + idx as u64;
            let label = format!("run_{idx:03}_{}_{:e}", rule.as_str(), s.ratio0);
            children.push(Child { spec: s, label });
        }
    }
    finish_children(&base, children, "sweep")
}

fn cmd_sensitivity(common: &Common, param: &str, values: &str) -> Result<(), Failure> {
    let base = common.spec().map_err(Failure::Invalid)?;
    base.validate().map_err(Failure::Invalid)?;
    if !SENSITIVITY_PARAMS.contains(&param) {
        return Err(Failure::Invalid(format!(
            "unknown parameter {param:?} (expected one of {})",
            SENSITIVITY_PARAMS.join(", ")
        )));
    }
    if !applies(param, base.rule) {
        return Err(Failure::Invalid(format!(
            "{param} does not apply to rule {}",
            base.rule.as_str()
        )));
    }
    let values = split_list(values);
    if values.is_empty() {
        eprintln!("warning: no values given, nothing to do");
        return Ok(());
    }
    let mut children = Vec::new();
    for (idx, v) in values.iter().enumerate() {
        let mut s = base.clone();
        s.set(param, v).map_err(Failure::Invalid)?;
        s.seed = base.seed + idx as u64;
        children.push(Child {
            spec: s,
            label: format!("run_{idx:03}_{param}_{v}"),
        });
    }
    finish_children(&base, children, &format!("sensitivity_{param}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(c) => cmd_run(c),
        Cmd::Sweep {
            common,
            ratios,
            rules,
        } => cmd_sweep(common, ratios, rules),
        Cmd::Sensitivity {
            common,
            param,
            values,
        } => cmd_sensitivity(common, param, values),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: invalid run spec: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
