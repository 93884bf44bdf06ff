//! Library routines checked against independent reimplementations.

use aspdhg::diag::{metric_min_eig, reference_solution, MetricBlock, ReferenceConfig};
use aspdhg::linop::{toy_projector, DenseMatrix, ParallelBeam};
use aspdhg::problem::{build_tv_ct, CtConfig, DualBlock, SaddleProblem};
use aspdhg::prox::ProxFn;
use aspdhg::solver::{compute_vd, compute_w, run, SolverConfig};
use aspdhg::{LinearMap, Rule};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn to_dense(m: &DMatrix<f64>) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect();
    DenseMatrix::from_rows(&rows).unwrap()
}

fn from_dense(d: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(d.rows(), d.cols(), |r, c| d.get(r, c))
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Chord of the line `p0 + s·dir` through the box `[x0, x1] × [y0, y1]`.
fn chord(p0: (f64, f64), dir: (f64, f64), x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, d, a, b) in [(p0.0, dir.0, x0, x1), (p0.1, dir.1, y0, y1)] {
        if d == 0.0 {
            if p < a || p > b {
                return 0.0;
            }
            continue;
        }
        let (t0, t1) = ((a - p) / d, (b - p) / d);
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    (hi - lo).max(0.0)
}

#[test]
fn projector_matches_ray_clipping() {
    let (side, n_angles, n_det) = (7, 9, 11);
    let geom = ParallelBeam::new(side, n_angles, n_det);
    let a = toy_projector(side, n_angles, n_det).unwrap().to_dense();
    let half = side as f64 / 2.0;
    for ang in 0..n_angles {
        let theta = geom.angle(ang);
        for j in 0..n_det {
            let t = geom.offset(j);
            let p0 = (t * theta.cos(), t * theta.sin());
            let dir = (-theta.sin(), theta.cos());
            let row = geom.ray_index(ang, j);
            for r in 0..side {
                for c in 0..side {
                    let x0 = -half + c as f64;
                    let y1 = half - r as f64;
                    let want = chord(p0, dir, x0, x0 + 1.0, y1 - 1.0, y1);
                    let got = a.get(row, r * side + c);
                    assert!(
                        (got - want).abs() < 1e-9,
                        "ray ({ang},{j}) pixel ({r},{c}): {got} vs {want}"
                    );
                    assert_eq!(got > 1e-9, want > 1e-9);
                }
            }
        }
    }
}

#[test]
fn pixel_size_scales_projector() {
    let base = ParallelBeam::new(6, 5, 9).operator().unwrap().to_dense();
    let big = ParallelBeam::new(6, 5, 9)
        .with_pixel_size(2.5)
        .operator()
        .unwrap()
        .to_dense();
    for r in 0..base.rows() {
        for c in 0..base.cols() {
            assert!((big.get(r, c) - 2.5 * base.get(r, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn sparse_adjoint_matches_explicit_transpose() {
    let op = toy_projector(8, 6, 11).unwrap();
    let at = from_dense(&op.to_dense()).transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let y = random_vector(&mut rng, op.range_dim());
        let want = &at * &y;
        let got = op.adjoint(y.as_slice()).unwrap();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12 * (1.0 + w.abs()));
        }
    }
}

#[test]
fn gradient_matches_explicit_stencil() {
    let side = 5;
    let op = LinearMap::gradient_2d(side).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = op.apply(&x).unwrap();
    assert_eq!(g.len(), 2 * side * side);
    // the two components together contain every forward difference once
    let mut want: Vec<f64> = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let v = x[r * side + c];
            if r + 1 < side {
                want.push(x[(r + 1) * side + c] - v);
            }
            if c + 1 < side {
                want.push(x[r * side + c + 1] - v);
            }
        }
    }
    let mut got: Vec<f64> = g.iter().copied().filter(|v| *v != 0.0).collect();
    want.retain(|v| *v != 0.0);
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn power_iteration_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let m = random_matrix(&mut rng, 6, 5);
        let op = LinearMap::dense(to_dense(&m));
        let est = op.estimate_norm(1e-14, 100_000, 11);
        let want = spectral_norm(&m);
        assert!((est - want).abs() <= 1e-6 * want, "{est} vs {want}");
    }
}

/// Textbook primal-dual iteration with dual extrapolation, written directly
/// with nalgebra.
fn reference_pdhg(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tau: f64,
    sigma: f64,
    iters: usize,
) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut x = DVector::zeros(a.ncols());
    let mut y = DVector::zeros(a.nrows());
    let mut ybar = y.clone();
    let mut xs = Vec::new();
    let mut dx = Vec::new();
    for _ in 0..iters {
        let x_new = (&x - tau * a.transpose() * &ybar).map(|v| v.max(0.0));
        let y_new = (&y + sigma * a * &x_new - sigma * b) / (1.0 + sigma);
        ybar = 2.0 * &y_new - &y;
        dx.push((&x - &x_new).norm());
        x = x_new;
        y = y_new;
        xs.push(x.clone());
    }
    (xs, dx)
}

#[test]
fn single_block_fixed_run_is_pdhg() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_matrix(&mut rng, 16, 16);
    let b = random_vector(&mut rng, 16);
    let norm = spectral_norm(&a);
    let (tau, sigma) = (0.5 / norm, 1.5 / norm);
    let blk = DualBlock::data_fit(LinearMap::dense(to_dense(&a)), b.as_slice().to_vec(), 1.0).unwrap();
    let problem = SaddleProblem::new(16, vec![blk], ProxFn::NonNegIndicator).unwrap();

    let (xs, dx) = reference_pdhg(&a, &b, tau, sigma, 200);
    for &epochs in &[1, 7, 50, 200] {
        let cfg = SolverConfig {
            steps: Some((tau, sigma)),
            epochs,
            ..SolverConfig::with_rule(Rule::Fixed)
        };
        let out = run(&problem, &cfg, None).unwrap();
        for (g, w) in out.x.iter().zip(xs[epochs - 1].iter()) {
            assert!((g - w).abs() <= 1e-12, "epoch {epochs}: {g} vs {w}");
        }
        for (r, w) in out.trace.records.iter().zip(&dx) {
            assert!((r.dx_norm - w).abs() <= 1e-12);
        }
    }
}

#[test]
fn residuals_match_dense_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (m, n) = (rng.random_range(1..8), rng.random_range(1..8));
        let a = random_matrix(&mut rng, m, n);
        let op = LinearMap::dense(to_dense(&a));
        let (x0, x1) = (random_vector(&mut rng, n), random_vector(&mut rng, n));
        let (y0, y1) = (random_vector(&mut rng, m), random_vector(&mut rng, m));
        let tau = rng.random_range(0.01..2.0);
        let sigma = rng.random_range(0.01..2.0);
        let p = rng.random_range(0.05..1.0);

        let dx = &x0 - &x1;
        let dy = &y0 - &y1;
        let q = &dx / tau - a.transpose() * &dy / p;
        let v = q.lp_norm(1);
        let d = (&dy / sigma - &a * &dx).lp_norm(1) / p;
        let w = if dx.norm() == 0.0 || q.norm() == 0.0 {
            0.0
        } else {
            dx.dot(&q) / (dx.norm() * q.norm())
        };

        let (gv, gd) = compute_vd(
            x0.as_slice(),
            x1.as_slice(),
            y0.as_slice(),
            y1.as_slice(),
            tau,
            sigma,
            &op,
            p,
        )
        .unwrap();
        let gw = compute_w(
            x0.as_slice(),
            x1.as_slice(),
            y0.as_slice(),
            y1.as_slice(),
            tau,
            &op,
            p,
        )
        .unwrap();
        assert!((gv - v).abs() <= 1e-12 * v.max(1.0), "{gv} vs {v}");
        assert!((gd - d).abs() <= 1e-12 * d.max(1.0), "{gd} vs {d}");
        assert!((gw - w).abs() <= 1e-12, "{gw} vs {w}");
    }
}

#[test]
fn metric_min_eig_matches_symmetric_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (m, n) = (rng.random_range(1..4), rng.random_range(1..4));
        let p = random_matrix(&mut rng, m, n);
        let a = rng.random_range(0.1..3.0);
        let b = rng.random_range(0.1..3.0);
        let mut full = DMatrix::zeros(m + n, m + n);
        full.view_mut((0, 0), (n, n)).fill_diagonal(a);
        full.view_mut((n, n), (m, m)).fill_diagonal(b);
        full.view_mut((n, 0), (m, n)).copy_from(&p);
        full.view_mut((0, n), (n, m)).copy_from(&p.transpose());
        let want = full.symmetric_eigenvalues().min();
        let got = metric_min_eig(&MetricBlock::new(a, b, to_dense(&p))).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn reference_run_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_matrix(&mut rng, 12, 8);
    let b = random_vector(&mut rng, 12);
    let x_ls = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
    let f_ls = 0.5 * (&a * &x_ls - &b).norm_squared();

    let blk = DualBlock::data_fit(LinearMap::dense(to_dense(&a)), b.as_slice().to_vec(), 1.0).unwrap();
    let problem = SaddleProblem::new(8, vec![blk], ProxFn::Zero).unwrap();
    let cfg = ReferenceConfig {
        iters: 20_000,
        product: 0.95,
        ratio: 1.0,
    };
    let r = reference_solution(&problem, &cfg).unwrap();
    assert!((r.f_star - f_ls).abs() <= 1e-10 * f_ls, "{} vs {f_ls}", r.f_star);
    for (g, w) in r.x.iter().zip(x_ls.iter()) {
        assert!((g - w).abs() < 1e-6);
    }
}

#[test]
fn dual_aggregate_stays_consistent() {
    let mut cfg = CtConfig::new(16, 8, 23);
    cfg.geometry = cfg.geometry.with_pixel_size(24.0);
    let inst = build_tv_ct(&cfg).unwrap();
    for rule in [Rule::Fixed, Rule::rule_a()] {
        let sc = SolverConfig {
            ratio0: 1e-4,
            epochs: 30,
            seed: 2,
            ..SolverConfig::with_rule(rule)
        };
        let out = run(&inst.problem, &sc, None).unwrap();
        assert!(out.max_aggregate_drift <= 1e-8, "{}", out.max_aggregate_drift);
    }
}

#[test]
fn fixed_run_objective_trends_down() {
    let mut cfg = CtConfig::new(32, 12, 47);
    cfg.geometry = cfg.geometry.with_pixel_size(48.0);
    let inst = build_tv_ct(&cfg).unwrap();
    let sc = SolverConfig {
        ratio0: 1e-5,
        epochs: 60,
        seed: 1,
        ..SolverConfig::with_rule(Rule::Fixed)
    };
    let out = run(&inst.problem, &sc, None).unwrap();
    let f: Vec<f64> = out.trace.epoch_objectives().iter().map(|e| e.1).collect();
    // means over consecutive 5-epoch windows
    let means: Vec<f64> = f[1..]
        .chunks(5)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
    assert!(f.last().unwrap() < &(0.1 * f[0]));
}
