//! The stochastic primal-dual iteration with serial sampling.
//!
//! Each iteration: update the step sizes from the previous iteration's
//! residuals, take a primal prox step against the extrapolated dual aggregate,
//! sample one dual block, take a dual prox step on it and extrapolate.
//!
//! The primal step needs `A*ȳ`. Only the sampled block changes per iteration,
//! so the solver keeps `z = A*y = Σ_i A_i* y_i` and forms
//! `A*ȳ = z + A_i*(y_i⁺ − y_i)/p_i` from the one adjoint it already computed.
//! `z` is rebuilt from scratch every `refresh_epochs` epochs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlSchedule, Controller, Feasibility, Feedback, Rule, StepSizeState};
use crate::error::{check_len, Error, Result};
use crate::linop::LinearMap;
use crate::linop::{DEFAULT_NORM_MAX_ITERS, DEFAULT_NORM_SEED, DEFAULT_NORM_TOL, NORM_SAFETY};
use crate::problem::SaddleProblem;
use crate::vecops::{all_finite, axpy, dot, norm2};

/// Vectors below this norm count as zero when forming the cosine `w`.
pub const COSINE_ZERO: f64 = 1e-14;

/// Draws a block index by inverse CDF over `probs` in order.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Differences produced by one iteration on block `i`.
struct Step<'a> {
    /// `x^k − x^{k+1}`
    dx: &'a [f64],
    /// `y_i^k − y_i^{k+1}`
    dy: &'a [f64],
    /// `A_i*(y_i^k − y_i^{k+1})`
    adj_dy: &'a [f64],
    prob: f64,
}

impl Step<'_> {
    /// `q = dx/τ − A_i* dy / p_i`
    fn q(&self, tau: f64) -> Vec<f64> {
        self.dx
            .iter()
            .zip(self.adj_dy)
            .map(|(a, b)| a / tau - b / self.prob)
            .collect()
    }

    fn v(&self, tau: f64) -> f64 {
        self.dx
            .iter()
            .zip(self.adj_dy)
            .map(|(a, b)| (a / tau - b / self.prob).abs())
            .sum()
    }

    fn w(&self, tau: f64) -> f64 {
        let q = self.q(tau);
        let (nx, nq) = (norm2(self.dx), norm2(&q));
        if nx < COSINE_ZERO || nq < COSINE_ZERO {
            return 0.0;
        }
        (dot(self.dx, &q) / (nx * nq)).clamp(-1.0, 1.0)
    }

    /// `(1/p_i) Σ_{r ∈ rows} |dy_r/σ − (A_i dx)_r|`, with rows sliced.
    fn d_rows(&self, op: &LinearMap, sigma: f64, rows: impl Iterator<Item = usize>) -> f64 {
        rows.map(|r| (self.dy[r] / sigma - op.apply_row(r, self.dx)).abs())
            .sum::<f64>()
            / self.prob
    }

    fn d(&self, op: &LinearMap, sigma: f64) -> f64 {
        self.d_rows(op, sigma, 0..self.dy.len())
    }

    fn d_subsampled<R: Rng + ?Sized>(&self, op: &LinearMap, sigma: f64, rho: f64, rng: &mut R) -> f64 {
        if rho == 1.0 {
            return self.d(op, sigma);
        }
        let keep = 1.0 / rho;
        let mask: Vec<usize> = (0..self.dy.len())
            .filter(|_| rng.random::<f64>() < keep)
            .collect();
        rho * self.d_rows(op, sigma, mask.into_iter())
    }
}

fn diffs(
    x_old: &[f64],
    x_new: &[f64],
    y_old: &[f64],
    y_new: &[f64],
    op: &LinearMap,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_len("residual x", op.domain_dim(), x_old.len())?;
    check_len("residual x", op.domain_dim(), x_new.len())?;
    check_len("residual y", op.range_dim(), y_old.len())?;
    check_len("residual y", op.range_dim(), y_new.len())?;
    let dx: Vec<f64> = x_old.iter().zip(x_new).map(|(a, b)| a - b).collect();
    let dy: Vec<f64> = y_old.iter().zip(y_new).map(|(a, b)| a - b).collect();
    let adj = op.adjoint(&dy)?;
    Ok((dx, dy, adj))
}

/// Primal and dual residual lengths of one block update:
/// `v = ‖(x^k − x^{k+1})/τ − A_i*(y_i^k − y_i^{k+1})/p_i‖₁`,
/// `d = ‖(y_i^k − y_i^{k+1})/σ − A_i(x^k − x^{k+1})‖₁ / p_i`.
#[allow(clippy::too_many_arguments)]
pub fn compute_vd(
    x_old: &[f64],
    x_new: &[f64],
    y_old: &[f64],
    y_new: &[f64],
    tau: f64,
    sigma: f64,
    op: &LinearMap,
    prob: f64,
) -> Result<(f64, f64)> {
    let (dx, dy, adj_dy) = diffs(x_old, x_new, y_old, y_new, op)?;
    let step = Step {
        dx: &dx,
        dy: &dy,
        adj_dy: &adj_dy,
        prob,
    };
    Ok((step.v(tau), step.d(op, sigma)))
}

/// Unbiased subsampled estimate of `d`: each row is kept with probability
/// `1/ρ` and the kept sum is scaled by `ρ`.
#[allow(clippy::too_many_arguments)]
pub fn compute_d_subsampled<R: Rng + ?Sized>(
    x_old: &[f64],
    x_new: &[f64],
    y_old: &[f64],
    y_new: &[f64],
    sigma: f64,
    op: &LinearMap,
    prob: f64,
    rho: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(rho >= 1.0) {
        return Err(Error::InvalidParameter("rho must be >= 1".into()));
    }
    let (dx, dy, adj_dy) = diffs(x_old, x_new, y_old, y_new, op)?;
    let step = Step {
        dx: &dx,
        dy: &dy,
        adj_dy: &adj_dy,
        prob,
    };
    Ok(step.d_subsampled(op, sigma, rho, rng))
}

/// Cosine between `x^k − x^{k+1}` and `q = (x^k − x^{k+1})/τ − A_i*(y_i^k − y_i^{k+1})/p_i`.
/// Returns 0 when either vector is numerically zero.
pub fn compute_w(
    x_old: &[f64],
    x_new: &[f64],
    y_old: &[f64],
    y_new: &[f64],
    tau: f64,
    op: &LinearMap,
    prob: f64,
) -> Result<f64> {
    let (dx, dy, adj_dy) = diffs(x_old, x_new, y_old, y_new, op)?;
    let step = Step {
        dx: &dx,
        dy: &dy,
        adj_dy: &adj_dy,
        prob,
    };
    Ok(step.w(tau))
}

/// `‖A‖` for the operator stacking all blocks, by power iteration on `Σ A_i* A_i`.
pub fn stacked_norm(problem: &SaddleProblem, tol: f64, max_iters: usize, seed: u64) -> f64 {
    let n = problem.primal_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut w = vec![0.0; n];
    let mut buf = Vec::new();
    let mut est = 0.0;
    for _ in 0..max_iters.max(1) {
        w.iter_mut().for_each(|e| *e = 0.0);
        let mut sq = 0.0;
        for b in problem.blocks() {
            buf.resize(b.op.range_dim(), 0.0);
            b.op.apply_into(&v, &mut buf);
            sq += dot(&buf, &buf);
            b.op.adjoint_acc(&buf, 1.0, &mut w);
        }
        let sigma = sq.sqrt();
        if sigma == 0.0 {
            return 0.0;
        }
        let nw = norm2(&w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let done = (sigma - est).abs() <= tol * sigma;
        est = sigma;
        if done {
            break;
        }
    }
    est
}

/// Everything a solver run needs besides the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub rule: Rule,
    pub schedule: ControlSchedule,
    /// Cap on `τσ‖A_i‖²/p_i`.
    pub beta: f64,
    /// Requested initial ratio `τ/σ`.
    pub ratio0: f64,
    /// Explicit `(τ_0, σ_0)`; overrides `ratio0` when set.
    pub steps: Option<(f64, f64)>,
    pub epochs: usize,
    pub seed: u64,
    /// Rebuild the dual aggregate every this many epochs (0 = never).
    pub refresh_epochs: usize,
    /// Evaluate the objective at every epoch boundary.
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rule: Rule::Fixed,
            schedule: ControlSchedule::paper(),
            beta: 0.999,
            ratio0: 1.0,
            steps: None,
            epochs: 10,
            seed: 0,
            refresh_epochs: 1,
            track_objective: true,
        }
    }
}

impl SolverConfig {
    pub fn with_rule(rule: Rule) -> Self {
        let mut cfg = Self {
            rule,
            ..Self::default()
        };
        if let Some(eta) = rule.eta() {
            cfg.schedule.eta = eta;
        }
        cfg
    }

    /// Builds the controller for `problem`: block norms (inflated by the
    /// safety margin), the feasibility constants and `s = s_scale·‖A‖`.
    pub fn controller(&self, problem: &SaddleProblem) -> Result<Controller> {
        let norms: Vec<f64> = problem.block_norms().iter().map(|n| n * NORM_SAFETY).collect();
        let feas = Feasibility::new(&norms, &problem.probs(), self.beta)?;
        let s = match self.rule {
            Rule::A { s_scale, .. } => {
                s_scale
                    * stacked_norm(
                        problem,
                        DEFAULT_NORM_TOL,
                        DEFAULT_NORM_MAX_ITERS,
                        DEFAULT_NORM_SEED,
                    )
            }
            _ => 1.0,
        };
        Controller::new(self.rule, self.schedule, feas, s)
    }

    pub fn initial_state(&self, controller: &Controller) -> Result<StepSizeState> {
        match self.steps {
            Some((tau, sigma)) => controller.state_from_steps(tau, sigma),
            None => controller.initial_state(self.ratio0),
        }
    }
}

/// One row of the iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    /// Completed epochs after this iteration.
    pub epoch: usize,
    pub i: usize,
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Largest relative shrink the controller was allowed at this step.
    pub control: f64,
    pub v: f64,
    pub d: f64,
    pub w: f64,
    pub dx_norm: f64,
    /// Objective at `x^{k+1}`, only at epoch boundaries.
    pub objective: Option<f64>,
}

impl IterRecord {
    pub fn ratio(&self) -> f64 {
        self.tau / self.sigma
    }
}

pub const TRACE_HEADER: &str = "k,epoch,i,tau,sigma,ratio,v,d,w,dx_norm,objective";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub n_blocks: usize,
    pub tau0: f64,
    pub sigma0: f64,
    pub objective0: Option<f64>,
    pub records: Vec<IterRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `τ^0, τ^1, …`
    pub fn tau_series(&self) -> Vec<f64> {
        std::iter::once(self.tau0)
            .chain(self.records.iter().map(|r| r.tau))
            .collect()
    }

    pub fn sigma_series(&self) -> Vec<f64> {
        std::iter::once(self.sigma0)
            .chain(self.records.iter().map(|r| r.sigma))
            .collect()
    }

    pub fn controls(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.control).collect()
    }

    /// `(epoch, objective)` at every epoch boundary, starting with epoch 0
    /// when the initial objective was recorded.
    pub fn epoch_objectives(&self) -> Vec<(usize, f64)> {
        self.objective0
            .map(|f| (0, f))
            .into_iter()
            .chain(
                self.records
                    .iter()
                    .filter_map(|r| r.objective.map(|f| (r.epoch, f))),
            )
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            write!(
                out,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},",
                r.k,
                r.epoch,
                r.i,
                r.tau,
                r.sigma,
                r.ratio(),
                r.v,
                r.d,
                r.w,
                r.dx_norm
            )?;
            if let Some(f) = r.objective {
                write!(out, "{f:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Starting point of a run; `None` means zero.
#[derive(Clone, Debug, Default)]
pub struct Start {
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<Vec<f64>>>,
}

impl Start {
    pub fn warm(x: Vec<f64>) -> Self {
        Self { x: Some(x), y: None }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub trace: IterationTrace,
    pub final_state: StepSizeState,
    /// Largest relative gap seen between the maintained `A*y` and a rebuild.
    pub max_aggregate_drift: f64,
    /// `max_k τ^k σ^k max_i ‖A_i‖²/p_i` over the run (bound norms).
    pub max_feasibility: f64,
    pub s: f64,
}

/// Runs `cfg.epochs` epochs from zero, or from `warm_start` if given.
pub fn run(problem: &SaddleProblem, cfg: &SolverConfig, warm_start: Option<&[f64]>) -> Result<RunOutput> {
    let controller = cfg.controller(problem)?;
    let state = cfg.initial_state(&controller)?;
    let start = Start {
        x: warm_start.map(<[f64]>::to_vec),
        y: None,
    };
    run_with(problem, &controller, state, start, cfg)
}

/// Runs with an explicit controller, initial step sizes and starting point.
pub fn run_with(
    problem: &SaddleProblem,
    controller: &Controller,
    init: StepSizeState,
    start: Start,
    cfg: &SolverConfig,
) -> Result<RunOutput> {
    let n = problem.n_blocks();
    let dim = problem.primal_dim();
    let blocks = problem.blocks();
    let probs = problem.probs();

    controller
        .feasibility
        .check(init.tau, init.sigma)
        .map_err(Error::Infeasible)?;

    let mut x = start.x.unwrap_or_else(|| vec![0.0; dim]);
    check_len("warm start", dim, x.len())?;
    let mut y: Vec<Vec<f64>> = match start.y {
        Some(y) => {
            check_len("dual start blocks", n, y.len())?;
            for (yi, b) in y.iter().zip(blocks) {
                check_len("dual start", b.op.range_dim(), yi.len())?;
            }
            y
        }
        None => blocks.iter().map(|b| vec![0.0; b.op.range_dim()]).collect(),
    };

    let mut z = vec![0.0; dim];
    for (yi, b) in y.iter().zip(blocks) {
        b.op.adjoint_acc(yi, 1.0, &mut z);
    }
    let mut zbar = z.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);

    let total = cfg.epochs * n;
    let mut trace = IterationTrace {
        n_blocks: n,
        tau0: init.tau,
        sigma0: init.sigma,
        objective0: if cfg.track_objective {
            Some(problem.objective(&x)?)
        } else {
            None
        },
        records: Vec::with_capacity(total),
    };

    let mut state = init;
    let mut fb = Feedback::default();
    let mut x_new = vec![0.0; dim];
    let mut dx = vec![0.0; dim];
    let mut adj_dy = vec![0.0; dim];
    let mut ax = Vec::new();
    let mut y_new = Vec::new();
    let mut dy = Vec::new();
    let mut max_drift: f64 = 0.0;
    let mut max_feas = controller.feasibility.product(state.tau, state.sigma);

    for k in 0..total {
        let control = controller.control_at(&state);
        state = controller.next(&state, &fb);
        let (tau, sigma) = (state.tau, state.sigma);
        max_feas = max_feas.max(controller.feasibility.product(tau, sigma));

        // primal step
        for ((xn, xo), zb) in x_new.iter_mut().zip(&x).zip(&zbar) {
            *xn = xo - tau * zb;
        }
        problem.primal_prox().prox_in_place(&mut x_new, tau);
        if !all_finite(&x_new) {
            return Err(Error::NonFinite {
                k,
                what: "primal iterate",
            });
        }

        // dual step on one block
        let i = sample_index(&mut rng, &probs);
        let blk = &blocks[i];
        let p = blk.prob;
        let m = blk.op.range_dim();
        ax.resize(m, 0.0);
        blk.op.apply_into(&x_new, &mut ax);
        y_new.clear();
        y_new.extend(y[i].iter().zip(&ax).map(|(yo, a)| yo + sigma * a));
        blk.conj.prox_in_place(&mut y_new, sigma);
        if !all_finite(&y_new) {
            return Err(Error::NonFinite {
                k,
                what: "dual iterate",
            });
        }

        // y_i^k − y_i^{k+1} and its adjoint image
        dy.clear();
        dy.extend(y[i].iter().zip(&y_new).map(|(a, b)| a - b));
        adj_dy.iter_mut().for_each(|e| *e = 0.0);
        blk.op.adjoint_acc(&dy, 1.0, &mut adj_dy);

        // z ← z + A_i*(y⁺ − y), z̄ = z + A_i*(y⁺ − y)/p_i
        axpy(-1.0, &adj_dy, &mut z);
        for ((zb, zi), a) in zbar.iter_mut().zip(&z).zip(&adj_dy) {
            *zb = zi - a / p;
        }

        for ((d, xo), xn) in dx.iter_mut().zip(&x).zip(&x_new) {
            *d = xo - xn;
        }
        let step = Step {
            dx: &dx,
            dy: &dy,
            adj_dy: &adj_dy,
            prob: p,
        };
        let v = step.v(tau);
        let w = step.w(tau);
        let d = match controller.rule {
            Rule::A { rho, .. } => step.d_subsampled(&blk.op, sigma, rho, &mut mask_rng),
            _ => f64::NAN,
        };
        fb = Feedback { v, d, w };
        let dx_norm = norm2(&dx);

        std::mem::swap(&mut y[i], &mut y_new);
        std::mem::swap(&mut x, &mut x_new);

        let epoch = (k + 1) / n;
        let boundary = (k + 1) % n == 0;
        if boundary && cfg.refresh_epochs > 0 && epoch.is_multiple_of(cfg.refresh_epochs) {
            let mut fresh = vec![0.0; dim];
            for (yi, b) in y.iter().zip(blocks) {
                b.op.adjoint_acc(yi, 1.0, &mut fresh);
            }
            let scale = norm2(&fresh).max(1e-300);
            let gap = z
                .iter()
                .zip(&fresh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            max_drift = max_drift.max(gap / scale);
            z = fresh;
            for ((zb, zi), a) in zbar.iter_mut().zip(&z).zip(&adj_dy) {
                *zb = zi - a / p;
            }
        }
        let objective = if boundary && cfg.track_objective {
            Some(problem.objective(&x)?)
        } else {
            None
        };

        trace.records.push(IterRecord {
            k,
            epoch,
            i,
            tau,
            sigma,
            alpha: state.alpha,
            control,
            v,
            d,
            w,
            dx_norm,
            objective,
        });
    }

    Ok(RunOutput {
        x,
        y,
        trace,
        final_state: state,
        max_aggregate_drift: max_drift,
        max_feasibility: max_feas,
        s: controller.s,
    })
}
