//! Saddle-point problem instances and the tomography test-problem generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{check_len, Error, Result};
use crate::linop::{partition_interleaved, LinearMap, ParallelBeam};
use crate::prox::{PrimalKind, ProxFn};
use crate::vecops::norm_inf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Data,
    Tv,
    Other,
}

/// One dual block `(A_i, f_i, p_i)`.
#[derive(Clone, Debug)]
pub struct DualBlock {
    pub op: LinearMap,
    /// `f_i`, evaluated in the objective.
    pub func: ProxFn,
    /// `f_i*`, whose prox drives the dual update.
    pub conj: ProxFn,
    pub prob: f64,
    pub kind: BlockKind,
}

impl DualBlock {
    pub fn new(op: LinearMap, func: ProxFn, prob: f64, kind: BlockKind) -> Result<Self> {
        let conj = func
            .conjugate()
            .ok_or_else(|| Error::InvalidParameter(format!("{func:?} has no closed-form conjugate prox")))?;
        if let Some(len) = func.data_len() {
            check_len("DualBlock data", op.range_dim(), len)?;
        }
        Ok(Self {
            op,
            func,
            conj,
            prob,
            kind,
        })
    }

    /// `½‖A_i x − b_i‖²` block.
    pub fn data_fit(op: LinearMap, b: Vec<f64>, prob: f64) -> Result<Self> {
        Self::new(op, ProxFn::SqL2DataFit(b), prob, BlockKind::Data)
    }

    /// `λ‖D x‖₁` block.
    pub fn tv(op: LinearMap, lambda: f64, prob: f64) -> Result<Self> {
        Self::new(op, ProxFn::L1Scaled(lambda), prob, BlockKind::Tv)
    }

    pub fn data(&self) -> Option<&[f64]> {
        match &self.func {
            ProxFn::SqL2DataFit(b) => Some(b),
            _ => None,
        }
    }

    pub fn norm(&self) -> f64 {
        self.op.norm_estimate()
    }
}

/// `min_x Σ f_i(A_i x) + g(x)` in saddle-point form.
#[derive(Clone, Debug)]
pub struct SaddleProblem {
    primal_dim: usize,
    blocks: Vec<DualBlock>,
    primal_prox: ProxFn,
}

impl SaddleProblem {
    pub fn new(primal_dim: usize, blocks: Vec<DualBlock>, primal_prox: ProxFn) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter("problem has no dual blocks".into()));
        }
        for b in &blocks {
            check_len("SaddleProblem block domain", primal_dim, b.op.domain_dim())?;
            if !(b.prob > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sampling probability must be positive, got {}",
                    b.prob
                )));
            }
        }
        let total: f64 = blocks.iter().map(|b| b.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sampling probabilities sum to {total}, expected 1"
            )));
        }
        if !matches!(primal_prox, ProxFn::Zero | ProxFn::NonNegIndicator) {
            return Err(Error::InvalidParameter(
                "primal term must be zero or the nonnegativity indicator".into(),
            ));
        }
        Ok(Self {
            primal_dim,
            blocks,
            primal_prox,
        })
    }

    pub fn primal_dim(&self) -> usize {
        self.primal_dim
    }

    pub fn blocks(&self) -> &[DualBlock] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn primal_prox(&self) -> &ProxFn {
        &self.primal_prox
    }

    pub fn probs(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.prob).collect()
    }

    /// Spectral-norm estimates `‖A_i‖` (computed on first use, then cached).
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(DualBlock::norm).collect()
    }

    /// `Σ f_i(A_i x) + g(x)`.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        check_len("objective", self.primal_dim, x.len())?;
        let mut total = self.primal_prox.value(x);
        let mut buf = Vec::new();
        for b in &self.blocks {
            buf.resize(b.op.range_dim(), 0.0);
            b.op.apply_into(x, &mut buf);
            total += b.func.value(&buf);
        }
        Ok(total)
    }

    /// The same problem with block probabilities replaced.
    pub fn with_probs(&self, probs: &[f64]) -> Result<Self> {
        check_len("with_probs", self.blocks.len(), probs.len())?;
        let blocks = self
            .blocks
            .iter()
            .zip(probs)
            .map(|(b, &p)| DualBlock { prob: p, ..b.clone() })
            .collect();
        Self::new(self.primal_dim, blocks, self.primal_prox.clone())
    }
}

/// Square image with values in `[0, 1]`, row-major, row 0 on top.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub side: usize,
    pub pixels: Vec<f64>,
}

impl Phantom {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        check_len("Phantom", side * side, pixels.len())?;
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "phantom values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { side, pixels })
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }
}

/// Disks of the phantom as `(centre_u, centre_v, radius, value)` in
/// normalized coordinates `[-1, 1]²`; later disks overwrite earlier ones.
pub const PHANTOM_DISKS: [(f64, f64, f64, f64); 3] =
    [(0.0, 0.0, 0.8, 0.8), (0.4, 0.2, 0.15, 0.4), (0.0, 0.0, 0.25, 1.0)];

pub fn phantom_disks(side: usize) -> Result<Phantom> {
    if side < 8 {
        return Err(Error::InvalidParameter("phantom side must be >= 8".into()));
    }
    let mut pixels = vec![0.0; side * side];
    let s = side as f64;
    for r in 0..side {
        let v = 1.0 - 2.0 * (r as f64 + 0.5) / s;
        for c in 0..side {
            let u = 2.0 * (c as f64 + 0.5) / s - 1.0;
            let mut val = 0.0;
            for (cu, cv, rad, level) in PHANTOM_DISKS {
                if (u - cu).powi(2) + (v - cv).powi(2) <= rad * rad {
                    val = level;
                }
            }
            pixels[r * side + c] = f64::clamp(val, 0.0, 1.0);
        }
    }
    Phantom::new(side, pixels)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    None,
    /// i.i.d. `N(0, (σ_rel · mean|s|)²)`
    Gaussian {
        sigma_rel: f64,
    },
    /// `Poisson(dose · s / max s) · max s / dose`
    ScaledPoisson {
        dose: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            seed: 0,
        }
    }
}

pub fn add_noise(sino: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        NoiseKind::None => Ok(sino.to_vec()),
        NoiseKind::Gaussian { sigma_rel } => {
            if !(sigma_rel >= 0.0) {
                return Err(Error::InvalidParameter("sigma_rel must be >= 0".into()));
            }
            let mean_abs = sino.iter().map(|v| v.abs()).sum::<f64>() / sino.len().max(1) as f64;
            let sd = sigma_rel * mean_abs;
            if sd == 0.0 {
                return Ok(sino.to_vec());
            }
            let normal =
                Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(format!("gaussian noise: {e}")))?;
            Ok(sino.iter().map(|v| v + normal.sample(&mut rng)).collect())
        }
        NoiseKind::ScaledPoisson { dose } => {
            if !(dose > 0.0) {
                return Err(Error::InvalidParameter("dose must be positive".into()));
            }
            if sino.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(
                    "scaled Poisson noise needs a nonnegative sinogram".into(),
                ));
            }
            let peak = norm_inf(sino);
            if peak == 0.0 {
                return Ok(sino.to_vec());
            }
            sino.iter()
                .map(|&v| {
                    let mean = dose * v / peak;
                    if mean == 0.0 {
                        return Ok(0.0);
                    }
                    let dist = Poisson::new(mean)
                        .map_err(|e| Error::InvalidParameter(format!("poisson noise: {e}")))?;
                    Ok(dist.sample(&mut rng) * peak / dose)
                })
                .collect()
        }
    }
}

/// How the TV block is weighted in the sampling distribution.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum TvSampling {
    /// All `n + 1` blocks equally likely.
    #[default]
    Uniform,
    /// TV block drawn with the given probability, data blocks share the rest.
    Fixed(f64),
}

/// Parameters of a tomography test problem.
#[derive(Clone, Debug, PartialEq)]
pub struct CtConfig {
    pub geometry: ParallelBeam,
    /// TV weight; `None` drops the TV block entirely.
    pub lambda: Option<f64>,
    pub n_batches: usize,
    pub noise: NoiseSpec,
    pub primal: PrimalKind,
    pub tv_sampling: TvSampling,
}

impl CtConfig {
    pub fn new(side: usize, n_angles: usize, n_detectors: usize) -> Self {
        Self {
            geometry: ParallelBeam::new(side, n_angles, n_detectors),
            lambda: Some(DEFAULT_LAMBDA),
            n_batches: 5,
            noise: NoiseSpec::none(),
            primal: PrimalKind::Zero,
            tv_sampling: TvSampling::Uniform,
        }
    }
}

/// Default TV weight for the desk-scale presets.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Physical pixel width per grid cell, as a multiple of the grid side.
pub const PIXEL_SIZE_PER_SIDE: f64 = 1.5;

/// Named acquisition scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 20 angles over `[0, π)`, noiseless.
    SparseView,
    /// 60 angles, scaled Poisson noise at dose 50.
    LowDose,
    /// 60 angles over `[0°, 150°)`, noiseless.
    LimitedAngle,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::SparseView => "sparse_view",
            Preset::LowDose => "low_dose",
            Preset::LimitedAngle => "limited_angle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sparse_view" => Some(Preset::SparseView),
            "low_dose" => Some(Preset::LowDose),
            "limited_angle" => Some(Preset::LimitedAngle),
            _ => None,
        }
    }
}

/// Detector count used by the presets for a `side × side` grid.
pub fn preset_detectors(side: usize) -> usize {
    (3 * side / 2).saturating_sub(1).max(1)
}

impl CtConfig {
    pub fn preset(preset: Preset, side: usize) -> Self {
        let n_angles = match preset {
            Preset::SparseView => 20,
            Preset::LowDose | Preset::LimitedAngle => 60,
        };
        let mut cfg = Self::new(side, n_angles, preset_detectors(side));
        cfg.geometry = cfg.geometry.with_pixel_size(PIXEL_SIZE_PER_SIDE * side as f64);
        match preset {
            Preset::SparseView => {}
            Preset::LowDose => {
                cfg.noise = NoiseSpec {
                    kind: NoiseKind::ScaledPoisson { dose: 50.0 },
                    seed: 0,
                }
            }
            Preset::LimitedAngle => {
                cfg.geometry = cfg.geometry.with_arc(0.0, 150f64.to_radians());
            }
        }
        cfg
    }
}

/// A generated tomography problem together with its ground truth.
#[derive(Clone, Debug)]
pub struct CtInstance {
    pub problem: SaddleProblem,
    pub ground_truth: Phantom,
    /// Full (possibly noisy) sinogram in parent row order.
    pub sinogram: Vec<f64>,
    /// Unpartitioned projector.
    pub projector: LinearMap,
    pub config: CtConfig,
}

impl CtInstance {
    /// Same objective as `problem`, but with the projector kept as one block.
    pub fn monolithic(&self) -> Result<SaddleProblem> {
        let mut blocks = vec![DualBlock::data_fit(
            self.projector.clone(),
            self.sinogram.clone(),
            1.0,
        )?];
        if let Some(tv) = self.problem.blocks().iter().find(|b| b.kind == BlockKind::Tv) {
            let n = 2.0;
            blocks[0].prob = 1.0 / n;
            blocks.push(DualBlock {
                prob: 1.0 / n,
                ..tv.clone()
            });
        }
        SaddleProblem::new(
            self.problem.primal_dim(),
            blocks,
            self.problem.primal_prox().clone(),
        )
    }
}

pub fn build_tv_ct(config: &CtConfig) -> Result<CtInstance> {
    let geom = config.geometry;
    geom.validate()?;
    if config.n_batches == 0 {
        return Err(Error::InvalidParameter("n_batches must be >= 1".into()));
    }
    if let Some(l) = config.lambda {
        if !(l > 0.0) {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
    }
    let truth = phantom_disks(geom.side)?;
    let projector = geom.operator()?;
    let clean = projector.apply(&truth.pixels)?;
    let sinogram = add_noise(&clean, &config.noise)?;

    let part = partition_interleaved(&projector, &sinogram, config.n_batches)?;
    let n_data = part.len();
    let has_tv = config.lambda.is_some();
    let (p_data, p_tv) = match (has_tv, config.tv_sampling) {
        (false, _) => (1.0 / n_data as f64, 0.0),
        (true, TvSampling::Uniform) => {
            let p = 1.0 / (n_data + 1) as f64;
            (p, p)
        }
        (true, TvSampling::Fixed(p)) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(
                    "TV sampling probability must lie in (0, 1)".into(),
                ));
            }
            ((1.0 - p) / n_data as f64, p)
        }
    };

    let mut blocks = Vec::with_capacity(n_data + 1);
    for (op, b) in part.blocks.into_iter().zip(part.data_blocks) {
        blocks.push(DualBlock::data_fit(op, b, p_data)?);
    }
    if let Some(lambda) = config.lambda {
        let d = LinearMap::gradient_2d(geom.side)?;
        blocks.push(DualBlock::tv(d, lambda, p_tv)?);
    }
    // normalize away rounding in the last place
    let total: f64 = blocks.iter().map(|b| b.prob).sum();
    for b in &mut blocks {
        b.prob /= total;
    }
    let problem = SaddleProblem::new(
        geom.side * geom.side,
        blocks,
        ProxFn::from_primal_kind(config.primal),
    )?;
    // fill the norm caches up front
    let _ = problem.block_norms();
    let _ = projector.norm_estimate();

    Ok(CtInstance {
        problem,
        ground_truth: truth,
        sinogram,
        projector,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::{norm1, norm2};
    use rand::Rng;

    fn small(n_batches: usize, lambda: Option<f64>) -> CtConfig {
        let mut cfg = CtConfig::new(8, 6, 13);
        cfg.n_batches = n_batches;
        cfg.lambda = lambda;
        cfg
    }

    #[test]
    fn single_batch_without_tv() {
        let inst = build_tv_ct(&small(1, None)).unwrap();
        assert_eq!(inst.problem.n_blocks(), 1);
        assert_eq!(inst.problem.blocks()[0].data().unwrap(), &inst.sinogram[..]);
        assert_eq!(inst.problem.blocks()[0].prob, 1.0);
    }

    #[test]
    fn ten_batches_plus_tv() {
        let inst = build_tv_ct(&small(10, Some(0.5))).unwrap();
        assert_eq!(inst.problem.n_blocks(), 11);
        let total: f64 = inst.problem.probs().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(inst.problem.probs().iter().all(|&p| p > 0.0));
        assert_eq!(inst.problem.blocks()[10].kind, BlockKind::Tv);
    }

    #[test]
    fn fixed_tv_probability() {
        let mut cfg = small(4, Some(0.5));
        cfg.tv_sampling = TvSampling::Fixed(0.2);
        let inst = build_tv_ct(&cfg).unwrap();
        let p = inst.problem.probs();
        assert!((p[4] - 0.2).abs() < 1e-15);
        assert!((p[0] - 0.2).abs() < 1e-15);
        cfg.tv_sampling = TvSampling::Fixed(1.0);
        assert!(build_tv_ct(&cfg).is_err());
    }

    #[test]
    fn noiseless_data_is_exact_projection() {
        let inst = build_tv_ct(&small(3, Some(0.1))).unwrap();
        let b = inst.projector.apply(&inst.ground_truth.pixels).unwrap();
        assert_eq!(inst.sinogram, b);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(build_tv_ct(&small(0, None)).is_err());
        assert!(build_tv_ct(&small(1, Some(-1.0))).is_err());
        assert!(build_tv_ct(&small(1000, None)).is_err());
        let mut cfg = small(1, None);
        cfg.geometry.side = 4;
        assert!(build_tv_ct(&cfg).is_err());
    }

    #[test]
    fn probabilities_validated() {
        let op = LinearMap::identity(2).unwrap();
        let blk = |p| DualBlock::data_fit(op.clone(), vec![0.0, 0.0], p).unwrap();
        assert!(SaddleProblem::new(2, vec![blk(0.5), blk(0.4)], ProxFn::Zero).is_err());
        assert!(SaddleProblem::new(2, vec![blk(1.0), blk(0.0)], ProxFn::Zero).is_err());
        assert!(SaddleProblem::new(2, vec![blk(0.5), blk(0.5)], ProxFn::Zero).is_ok());
        assert!(SaddleProblem::new(3, vec![blk(1.0)], ProxFn::Zero).is_err());
    }

    #[test]
    fn phantom_examples() {
        let p = phantom_disks(64).unwrap();
        assert_eq!(p.pixel(0, 0), 0.0);
        assert_eq!(p.pixel(63, 63), 0.0);
        assert_eq!(p.pixel(32, 32), 1.0);
        assert!(phantom_disks(7).is_err());
    }

    #[test]
    fn phantom_mean_matches_disk_areas() {
        use std::f64::consts::PI;
        let [(_, _, r0, v0), (_, _, r1, v1), (_, _, r2, v2)] = PHANTOM_DISKS;
        let (a0, a1, a2) = (PI * r0 * r0, PI * r1 * r1, PI * r2 * r2);
        let mean = (v0 * (a0 - a1 - a2) + v1 * a1 + v2 * a2) / 4.0;
        for side in [8, 16, 32, 64, 128] {
            let p = phantom_disks(side).unwrap();
            let m = p.pixels.iter().sum::<f64>() / (side * side) as f64;
            assert!(
                (m - mean).abs() <= 3.0 / side as f64,
                "side {side}: {m} vs {mean}"
            );
        }
    }

    #[test]
    fn noise_identity_cases() {
        let s = vec![1.0, 2.0, 3.0];
        assert_eq!(add_noise(&s, &NoiseSpec::none()).unwrap(), s);
        let g = NoiseSpec {
            kind: NoiseKind::Gaussian { sigma_rel: 0.0 },
            seed: 3,
        };
        assert_eq!(add_noise(&s, &g).unwrap(), s);
    }

    #[test]
    fn poisson_rejects_negative_sinogram() {
        let spec = NoiseSpec {
            kind: NoiseKind::ScaledPoisson { dose: 10.0 },
            seed: 1,
        };
        assert!(add_noise(&[1.0, -0.1], &spec).is_err());
        let bad = NoiseSpec {
            kind: NoiseKind::ScaledPoisson { dose: 0.0 },
            seed: 1,
        };
        assert!(add_noise(&[1.0], &bad).is_err());
    }

    #[test]
    fn poisson_concentrates_at_high_dose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.2..1.0)).collect();
        for dose in [1e3, 1e4, 1e5] {
            let spec = NoiseSpec {
                kind: NoiseKind::ScaledPoisson { dose },
                seed: 4,
            };
            let noisy = add_noise(&s, &spec).unwrap();
            let rel: f64 = noisy.iter().zip(&s).map(|(n, v)| (n - v).abs() / v).sum::<f64>() / s.len() as f64;
            assert!(rel <= 3.0 / dose.sqrt(), "dose {dose}: {rel}");
        }
    }

    #[test]
    fn gaussian_noise_has_requested_scale() {
        let s = vec![2.0; 20_000];
        let spec = NoiseSpec {
            kind: NoiseKind::Gaussian { sigma_rel: 0.1 },
            seed: 5,
        };
        let noisy = add_noise(&s, &spec).unwrap();
        let var = noisy.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>() / s.len() as f64;
        assert!((var.sqrt() - 0.2).abs() < 0.01);
    }

    #[test]
    fn noise_is_deterministic() {
        let inst = |seed| {
            let mut cfg = small(2, Some(0.1));
            cfg.noise = NoiseSpec {
                kind: NoiseKind::ScaledPoisson { dose: 50.0 },
                seed,
            };
            build_tv_ct(&cfg).unwrap().sinogram
        };
        let a = inst(11);
        assert_eq!(a, inst(11));
        assert_ne!(a, inst(12));
    }

    #[test]
    fn objective_examples() {
        let lambda = 0.3;
        let inst = build_tv_ct(&small(3, Some(lambda))).unwrap();
        let zero = vec![0.0; 64];
        let f0 = inst.problem.objective(&zero).unwrap();
        assert!((f0 - 0.5 * norm2(&inst.sinogram).powi(2)).abs() < 1e-10 * f0);

        let truth = &inst.ground_truth.pixels;
        let d = LinearMap::gradient_2d(8).unwrap();
        let tv = lambda * norm1(&d.apply(truth).unwrap());
        let ft = inst.problem.objective(truth).unwrap();
        assert!((ft - tv).abs() < 1e-10 * (1.0 + tv));
    }

    #[test]
    fn objective_matches_monolithic() {
        let lambda = 0.7;
        let inst = build_tv_ct(&small(4, Some(lambda))).unwrap();
        let d = LinearMap::gradient_2d(8).unwrap();
        let mono = inst.monolithic().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..2.0)).collect();
            let r: Vec<f64> = inst
                .projector
                .apply(&x)
                .unwrap()
                .iter()
                .zip(&inst.sinogram)
                .map(|(a, b)| a - b)
                .collect();
            let expect = 0.5 * norm2(&r).powi(2) + lambda * norm1(&d.apply(&x).unwrap());
            let got = inst.problem.objective(&x).unwrap();
            assert!((got - expect).abs() <= 1e-10 * (1.0 + expect));
            let got_mono = mono.objective(&x).unwrap();
            assert!((got_mono - expect).abs() <= 1e-10 * (1.0 + expect));
        }
    }

    #[test]
    fn nonneg_primal_objective_infinite_outside() {
        let mut cfg = small(2, Some(0.1));
        cfg.primal = PrimalKind::NonNegative;
        let inst = build_tv_ct(&cfg).unwrap();
        let mut x = vec![0.0; 64];
        x[3] = -1.0;
        assert_eq!(inst.problem.objective(&x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn preset_geometries() {
        let sv = CtConfig::preset(Preset::SparseView, 64);
        assert_eq!((sv.geometry.n_angles, sv.geometry.n_detectors), (20, 95));
        assert_eq!(sv.geometry.pixel_size, 96.0);
        assert_eq!(sv.noise.kind, NoiseKind::None);
        let ld = CtConfig::preset(Preset::LowDose, 64);
        assert_eq!(ld.geometry.n_angles, 60);
        assert_eq!(ld.noise.kind, NoiseKind::ScaledPoisson { dose: 50.0 });
        let la = CtConfig::preset(Preset::LimitedAngle, 64);
        assert!((la.geometry.arc_end - 150f64.to_radians()).abs() < 1e-15);
        for p in [Preset::SparseView, Preset::LowDose, Preset::LimitedAngle] {
            assert_eq!(Preset::parse(p.name()), Some(p));
        }
        assert_eq!(Preset::parse("custom"), None);
    }
}
