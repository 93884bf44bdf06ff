//! Convergence diagnostics: reference solutions, suboptimality curves,
//! step-size ratio stabilization and the metric positivity checks.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linop::{DenseMatrix, DEFAULT_NORM_MAX_ITERS, DEFAULT_NORM_SEED, DEFAULT_NORM_TOL};
use crate::problem::SaddleProblem;
use crate::solver::{stacked_norm, IterationTrace};
use crate::vecops::all_finite;

/// Largest assembled metric dimension accepted by [`metric_min_eig`].
pub const METRIC_MAX_DIM: usize = 200;

/// `[[a I, Pᵀ], [P, b I]]` with `a = 1/τ`, `b = 1/(p σ)` and `P = A/p`.
#[derive(Clone, Debug)]
pub struct MetricBlock {
    pub a: f64,
    pub b: f64,
    pub p: DenseMatrix,
}

impl MetricBlock {
    pub fn new(a: f64, b: f64, p: DenseMatrix) -> Self {
        Self { a, b, p }
    }

    /// Metric of one sampled block for step sizes `(τ, σ)` and probability `p_i`.
    pub fn from_steps(tau: f64, sigma: f64, prob: f64, a_i: &DenseMatrix) -> Self {
        let scaled = (0..a_i.rows())
            .flat_map(|r| a_i.row(r).iter().map(move |v| v / prob))
            .collect();
        Self {
            a: 1.0 / tau,
            b: 1.0 / (prob * sigma),
            p: DenseMatrix::new(a_i.rows(), a_i.cols(), scaled).expect("same shape"),
        }
    }

    pub fn dim(&self) -> usize {
        self.p.rows() + self.p.cols()
    }

    /// Shifted block `[[s·a I, Pᵀ], [P, s·b I]]`.
    pub fn scaled_diagonal(&self, s: f64) -> Self {
        Self {
            a: s * self.a,
            b: s * self.b,
            p: self.p.clone(),
        }
    }

    /// Row-major dense symmetric matrix.
    pub fn assemble(&self) -> Vec<Vec<f64>> {
        let (m, n) = (self.p.rows(), self.p.cols());
        let dim = m + n;
        let mut out = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            out[i][i] = self.a;
        }
        for r in 0..m {
            out[n + r][n + r] = self.b;
            for c in 0..n {
                let v = self.p.get(r, c);
                out[n + r][c] = v;
                out[c][n + r] = v;
            }
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let scale: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Smallest eigenvalue of the assembled metric block.
pub fn metric_min_eig(block: &MetricBlock) -> Result<f64> {
    let dim = block.dim();
    if dim > METRIC_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "metric of dimension {dim} exceeds the dense cap of {METRIC_MAX_DIM}"
        )));
    }
    Ok(jacobi_eigenvalues(block.assemble())[0])
}

/// Spectral norm of a small dense matrix, via the Gram-matrix eigenvalues.
pub fn dense_spectral_norm(p: &DenseMatrix) -> f64 {
    let pt = p.transpose();
    let n = p.cols();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| crate::vecops::dot(pt.row(i), pt.row(j))).collect())
        .collect();
    jacobi_eigenvalues(gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

/// Settings for the long deterministic run that supplies `F*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceConfig {
    pub iters: usize,
    /// `τσ‖A‖²`
    pub product: f64,
    /// `τ/σ`
    pub ratio: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            iters: 50_000,
            product: 0.95,
            ratio: DEFAULT_REFERENCE_RATIO,
        }
    }
}

/// Primal-dual ratio used by the reference run on the desk-scale presets.
pub const DEFAULT_REFERENCE_RATIO: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Reference {
    pub x: Vec<f64>,
    /// Smallest objective seen over the run.
    pub f_star: f64,
    /// Iteration at which `f_star` was attained.
    pub best_iter: usize,
}

/// Deterministic full-operator primal-dual iteration (all blocks updated every
/// step, extrapolation 1). `F*` is the lowest objective encountered, so it is an
/// upper bound on the true optimum.
pub fn reference_solution(problem: &SaddleProblem, cfg: &ReferenceConfig) -> Result<Reference> {
    if !(cfg.product > 0.0 && cfg.product < 1.0) || !(cfg.ratio > 0.0) {
        return Err(Error::InvalidParameter(
            "reference run needs product in (0, 1) and a positive ratio".into(),
        ));
    }
    let norm = stacked_norm(
        problem,
        DEFAULT_NORM_TOL * 1e-3,
        DEFAULT_NORM_MAX_ITERS * 10,
        DEFAULT_NORM_SEED,
    ) * crate::linop::NORM_SAFETY;
    let tau = (cfg.product * cfg.ratio).sqrt() / norm;
    let sigma = tau / cfg.ratio;

    let dim = problem.primal_dim();
    let blocks = problem.blocks();
    let mut x = vec![0.0; dim];
    let mut best_x = x.clone();
    let mut f_star = problem.objective(&x)?;
    let mut best_iter = 0;
    let mut y: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.op.range_dim()]).collect();
    let mut ybar = y.clone();
    let mut grad = vec![0.0; dim];
    let mut ax: Vec<Vec<f64>> = y.clone();

    for it in 1..=cfg.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (b, yb) in blocks.iter().zip(&ybar) {
            b.op.adjoint_acc(yb, 1.0, &mut grad);
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= tau * gi;
        }
        problem.primal_prox().prox_in_place(&mut x, tau);

        let mut f = problem.primal_prox().value(&x);
        for (j, b) in blocks.iter().enumerate() {
            b.op.apply_into(&x, &mut ax[j]);
            f += b.func.value(&ax[j]);
            let yj = &mut y[j];
            let old: Vec<f64> = yj.clone();
            for (v, a) in yj.iter_mut().zip(&ax[j]) {
                *v += sigma * a;
            }
            b.conj.prox_in_place(yj, sigma);
            for ((yb, yn), yo) in ybar[j].iter_mut().zip(yj.iter()).zip(&old) {
                *yb = 2.0 * yn - yo;
            }
        }
        if !f.is_finite() || !all_finite(&x) {
            return Err(Error::NonFinite {
                k: it,
                what: "reference iterate",
            });
        }
        if f < f_star {
            f_star = f;
            best_x.copy_from_slice(&x);
            best_iter = it;
        }
    }
    Ok(Reference {
        x: best_x,
        f_star,
        best_iter,
    })
}

pub const SUBOPT_EPS: f64 = 1e-12;

/// `(epoch, (F − F*)/max(F*, ε))` at every epoch boundary in the trace.
pub fn relative_suboptimality(trace: &IterationTrace, f_star: f64) -> Vec<(usize, f64)> {
    let denom = f_star.max(SUBOPT_EPS);
    trace
        .records
        .iter()
        .filter_map(|r| r.objective.map(|f| (r.epoch, (f - f_star) / denom)))
        .collect()
}

/// Largest `|log₁₀(ratio_{k+1}/ratio_k)|` over the last `window` iterations.
pub fn ratio_stabilization(trace: &IterationTrace, window: usize) -> Result<f64> {
    let n = trace.records.len();
    if window == 0 || n < window {
        return Err(Error::InvalidParameter(format!(
            "trace of length {n} is shorter than window {window}"
        )));
    }
    let mut ratios: Vec<f64> = Vec::with_capacity(window + 1);
    if n == window {
        ratios.push(trace.tau0 / trace.sigma0);
    } else {
        ratios.push(trace.records[n - window - 1].ratio());
    }
    ratios.extend(trace.records[n - window..].iter().map(|r| r.ratio()));
    Ok(ratios
        .windows(2)
        .map(|w| (w[1] / w[0]).log10().abs())
        .fold(0.0, f64::max))
}

/// First epoch at which the relative suboptimality drops to `threshold`.
pub fn epochs_to_threshold(series: &[(usize, f64)], threshold: f64) -> Option<usize> {
    series.iter().find(|(_, s)| *s <= threshold).map(|(e, _)| *e)
}

/// Median of `‖x^{k+1} − x^k‖` over the first and last `frac` of iterations.
pub fn iterate_difference_medians(trace: &IterationTrace, frac: f64) -> (f64, f64) {
    let n = trace.records.len();
    let w = ((n as f64 * frac).ceil() as usize).clamp(1, n.max(1));
    let mut head: Vec<f64> = trace.records[..w].iter().map(|r| r.dx_norm).collect();
    let mut tail: Vec<f64> = trace.records[n - w..].iter().map(|r| r.dx_norm).collect();
    (median(&mut head), median(&mut tail))
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// One summary line per run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run: String,
    pub rule: String,
    pub mode: String,
    pub ratio0: f64,
    pub seed: u64,
    pub status: String,
    pub final_subopt: f64,
    pub epochs_to_threshold: Option<usize>,
    pub final_ratio: f64,
    pub stabilization: f64,
}

pub const SUMMARY_HEADER: &str =
    "run,rule,mode,ratio0,seed,status,final_subopt,epochs_to_threshold,final_ratio,stabilization";

impl RunSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{},{},{:e},{},{:e},{:e}",
            self.run,
            self.rule,
            self.mode,
            self.ratio0,
            self.seed,
            self.status,
            self.final_subopt,
            self.epochs_to_threshold
                .map_or_else(String::new, |e| e.to_string()),
            self.final_ratio,
            self.stabilization
        )
    }
}

pub fn write_summary<W: Write>(mut out: W, rows: &[RunSummary]) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::IterRecord;

    fn record(k: usize, tau: f64, sigma: f64, objective: Option<f64>) -> IterRecord {
        IterRecord {
            k,
            epoch: k + 1,
            i: 0,
            tau,
            sigma,
            alpha: 0.0,
            control: 0.0,
            v: 0.0,
            d: 0.0,
            w: 0.0,
            dx_norm: 1.0,
            objective,
        }
    }

    fn trace(records: Vec<IterRecord>) -> IterationTrace {
        IterationTrace {
            n_blocks: 1,
            tau0: records[0].tau,
            sigma0: records[0].sigma,
            objective0: None,
            records,
        }
    }

    #[test]
    fn metric_examples() {
        let zero = MetricBlock::new(1.0, 1.0, DenseMatrix::new(2, 2, vec![0.0; 4]).unwrap());
        assert!((metric_min_eig(&zero).unwrap() - 1.0).abs() < 1e-14);
        let one = MetricBlock::new(1.0, 1.0, DenseMatrix::new(1, 1, vec![1.0]).unwrap());
        assert!(metric_min_eig(&one).unwrap().abs() < 1e-14);
    }

    #[test]
    fn metric_dimension_cap() {
        let big = MetricBlock::new(1.0, 1.0, DenseMatrix::new(150, 60, vec![0.0; 9000]).unwrap());
        assert!(metric_min_eig(&big).is_err());
    }

    #[test]
    fn jacobi_on_known_matrix() {
        let eig = jacobi_eigenvalues(vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let s = 2f64.sqrt();
        for (got, want) in eig.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn subopt_examples() {
        let t = trace(vec![
            record(0, 1.0, 1.0, Some(4.0)),
            record(1, 1.0, 1.0, Some(2.0)),
            record(2, 1.0, 1.0, None),
        ]);
        let s = relative_suboptimality(&t, 2.0);
        assert_eq!(s, vec![(1, 1.0), (2, 0.0)]);
        assert_eq!(epochs_to_threshold(&s, 0.5), Some(2));
        assert_eq!(epochs_to_threshold(&s, -1.0), None);
    }

    #[test]
    fn stabilization_examples() {
        let fixed = trace((0..10).map(|k| record(k, 0.1, 2.0, None)).collect());
        assert_eq!(ratio_stabilization(&fixed, 5).unwrap(), 0.0);
        assert!(ratio_stabilization(&fixed, 11).is_err());

        // α = 1e-6 updates: ratio factor (1 − α)² per change
        let a: f64 = 1e-6;
        let mut recs = Vec::new();
        let (mut tau, mut sigma) = (1.0, 1.0);
        for k in 0..20 {
            if k % 2 == 0 {
                tau /= 1.0 - a;
                sigma *= 1.0 - a;
            } else {
                tau *= 1.0 - a;
                sigma /= 1.0 - a;
            }
            recs.push(record(k, tau, sigma, None));
        }
        let st = ratio_stabilization(&trace(recs), 10).unwrap();
        assert!(st <= 2.0 * (1.0 - a).log10().abs() * (1.0 + 1e-6));
        assert!(st <= 8.7e-7);
    }

    #[test]
    fn summary_row_format() {
        let row = RunSummary {
            run: "r0".into(),
            rule: "a".into(),
            mode: "paper".into(),
            ratio0: 1e-5,
            seed: 3,
            status: "ok".into(),
            final_subopt: 0.25,
            epochs_to_threshold: None,
            final_ratio: 2e-6,
            stabilization: 0.0,
        };
        assert_eq!(row.csv_row(), "r0,a,paper,1e-5,3,ok,2.5e-1,,2e-6,0e0");
    }

    #[test]
    fn median_basics() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
