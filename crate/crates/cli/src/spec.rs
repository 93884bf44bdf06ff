//! Run specification: defaults, config-file and flag overrides, validation.

use std::path::{Path, PathBuf};

use aspdhg::control::{ControlSchedule, Mode};
use aspdhg::linop::ParallelBeam;
use aspdhg::problem::{
    preset_detectors, CtConfig, NoiseKind, NoiseSpec, Preset, TvSampling, PIXEL_SIZE_PER_SIDE,
};
use aspdhg::prox::PrimalKind;
use aspdhg::solver::SolverConfig;
use aspdhg::Rule;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ASPDHG_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleName {
    Fixed,
    A,
    B,
}

impl RuleName {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "a" | "rule_a" => Ok(Self::A),
            "b" | "rule_b" => Ok(Self::B),
            _ => Err(format!("unknown rule {s:?} (expected fixed, a or b)")),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::A => "a",
            Self::B => "b",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    Gaussian(f64),
    Poisson(f64),
}

/// Everything one solver run needs. Unset optional fields fall back to the
/// preset or rule defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    /// `None` is the custom geometry.
    pub preset: Option<Preset>,
    pub side: usize,
    pub angles: Option<usize>,
    pub detectors: Option<usize>,
    pub pixel_size: Option<f64>,
    pub arc_deg: Option<f64>,
    pub n_batches: usize,
    pub lambda: Option<f64>,
    pub noise: Option<Noise>,
    pub noise_seed: u64,
    pub nonneg: bool,
    pub tv_prob: Option<f64>,

    pub rule: RuleName,
    pub mode: Mode,
    pub eps0: f64,
    pub ratio0: f64,
    pub tau0: Option<f64>,
    pub sigma0: Option<f64>,
    pub beta: f64,
    pub alpha0: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub c: Option<f64>,
    pub s_scale: Option<f64>,
    pub rho: Option<f64>,

    pub epochs: usize,
    pub seed: u64,
    pub warm_start: bool,
    pub reference_iters: usize,
    pub threshold: f64,

    pub out: Option<PathBuf>,
    pub name: Option<String>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            preset: Some(Preset::SparseView),
            side: 64,
            angles: None,
            detectors: None,
            pixel_size: None,
            arc_deg: None,
            n_batches: 5,
            lambda: Some(aspdhg::problem::DEFAULT_LAMBDA),
            noise: None,
            noise_seed: 0,
            nonneg: false,
            tv_prob: None,
            rule: RuleName::A,
            mode: Mode::Paper,
            eps0: 0.5,
            ratio0: 1e-5,
            tau0: None,
            sigma0: None,
            beta: 0.999,
            alpha0: None,
            eta: None,
            delta: None,
            c: None,
            s_scale: None,
            rho: None,
            epochs: 50,
            seed: 0,
            warm_start: false,
            reference_iters: 50_000,
            threshold: 1e-2,
            out: None,
            name: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| format!("{key} = {v:?}: {e}"))
}

fn boolean(key: &str, v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key} = {v:?}: expected true or false")),
    }
}

/// Keys accepted in config files (under any section) and by `--set`.
pub const KEYS: &[&str] = &[
    "preset",
    "side",
    "angles",
    "detectors",
    "pixel_size",
    "arc_deg",
    "n_batches",
    "lambda",
    "noise",
    "noise_seed",
    "nonneg",
    "tv_prob",
    "rule",
    "mode",
    "eps0",
    "ratio0",
    "tau0",
    "sigma0",
    "beta",
    "alpha0",
    "eta",
    "delta",
    "c",
    "s_scale",
    "rho",
    "epochs",
    "seed",
    "warm_start",
    "reference_iters",
    "threshold",
    "out",
    "name",
];

impl RunSpec {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        match key {
            "preset" => {
                self.preset = match v {
                    "custom" => None,
                    _ => Some(Preset::parse(v).ok_or_else(|| {
                        format!(
                            "unknown preset {v:?} (expected sparse_view, low_dose, limited_angle or custom)"
                        )
                    })?),
                }
            }
            "side" => self.side = num(key, v)?,
            "angles" => self.angles = Some(num(key, v)?),
            "detectors" => self.detectors = Some(num(key, v)?),
            "pixel_size" => self.pixel_size = Some(num(key, v)?),
            "arc_deg" => self.arc_deg = Some(num(key, v)?),
            "n_batches" => self.n_batches = num(key, v)?,
            "lambda" => self.lambda = if v == "none" { None } else { Some(num(key, v)?) },
            "noise" => {
                self.noise = Some(match v.split_once(':') {
                    None if v == "none" => Noise::None,
                    Some(("gaussian", l)) => Noise::Gaussian(num(key, l)?),
                    Some(("poisson", d)) => Noise::Poisson(num(key, d)?),
                    _ => {
                        return Err(format!(
                            "noise = {v:?}: expected none, gaussian:<rel> or poisson:<dose>"
                        ))
                    }
                })
            }
            "noise_seed" => self.noise_seed = num(key, v)?,
            "nonneg" => self.nonneg = boolean(key, v)?,
            "tv_prob" => self.tv_prob = Some(num(key, v)?),
            "rule" => self.rule = RuleName::parse(v)?,
            "mode" => {
                self.mode = match v {
                    "paper" => Mode::Paper,
                    "strict" => Mode::Strict,
                    _ => return Err(format!("mode = {v:?}: expected paper or strict")),
                }
            }
            "eps0" => self.eps0 = num(key, v)?,
            "ratio0" => self.ratio0 = num(key, v)?,
            "tau0" => self.tau0 = Some(num(key, v)?),
            "sigma0" => self.sigma0 = Some(num(key, v)?),
            "beta" => self.beta = num(key, v)?,
            "alpha0" => self.alpha0 = Some(num(key, v)?),
            "eta" => self.eta = Some(num(key, v)?),
            "delta" => self.delta = Some(num(key, v)?),
            "c" => self.c = Some(num(key, v)?),
            "s_scale" => self.s_scale = Some(num(key, v)?),
            "rho" => self.rho = Some(num(key, v)?),
            "epochs" => self.epochs = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "warm_start" => self.warm_start = boolean(key, v)?,
            "reference_iters" => self.reference_iters = num(key, v)?,
            "threshold" => self.threshold = num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "name" => self.name = Some(v.to_string()),
            _ => return Err(format!("unknown key {key:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies every `key = value` of an INI file; section names are ignored
    /// apart from grouping.
    pub fn load_ini(&mut self, path: &Path) -> Result<(), String> {
        let ini = ini::Ini::load_from_file(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (_, props) in ini.iter() {
            for (k, v) in props.iter() {
                self.set(k, v).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
        Ok(())
    }

    pub fn rule(&self) -> Rule {
        match self.rule {
            RuleName::Fixed => Rule::Fixed,
            RuleName::A => {
                let Rule::A {
                    alpha0,
                    eta,
                    delta,
                    s_scale,
                    rho,
                } = Rule::rule_a()
                else {
                    unreachable!()
                };
                Rule::A {
                    alpha0: self.alpha0.unwrap_or(alpha0),
                    eta: self.eta.unwrap_or(eta),
                    delta: self.delta.unwrap_or(delta),
                    s_scale: self.s_scale.unwrap_or(s_scale),
                    rho: self.rho.unwrap_or(rho),
                }
            }
            RuleName::B => {
                let Rule::B { alpha0, eta, c } = Rule::rule_b() else {
                    unreachable!()
                };
                Rule::B {
                    alpha0: self.alpha0.unwrap_or(alpha0),
                    eta: self.eta.unwrap_or(eta),
                    c: self.c.unwrap_or(c),
                }
            }
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let rule = self.rule();
        let mut cfg = SolverConfig::with_rule(rule);
        if self.mode == Mode::Strict {
            cfg.schedule = ControlSchedule::strict(self.eps0, cfg.schedule.eta);
        }
        cfg.beta = self.beta;
        cfg.ratio0 = self.ratio0;
        cfg.steps = self.tau0.zip(self.sigma0);
        cfg.epochs = self.epochs;
        cfg.seed = self.seed;
        cfg
    }

    pub fn ct_config(&self) -> CtConfig {
        let mut cfg = match self.preset {
            Some(p) => CtConfig::preset(p, self.side),
            None => {
                let mut c = CtConfig::new(self.side, 60, preset_detectors(self.side));
                c.geometry = c.geometry.with_pixel_size(PIXEL_SIZE_PER_SIDE * self.side as f64);
                c
            }
        };
        let g = &mut cfg.geometry;
        let arc = g.arc_end - g.arc_start;
        *g = ParallelBeam {
            n_angles: self.angles.unwrap_or(g.n_angles),
            n_detectors: self.detectors.unwrap_or(g.n_detectors),
            pixel_size: self.pixel_size.unwrap_or(g.pixel_size),
            ..*g
        }
        .with_arc(0.0, self.arc_deg.map_or(arc, f64::to_radians));
        cfg.n_batches = self.n_batches;
        cfg.lambda = self.lambda;
        if let Some(noise) = self.noise {
            cfg.noise.kind = match noise {
                Noise::None => NoiseKind::None,
                Noise::Gaussian(sigma_rel) => NoiseKind::Gaussian { sigma_rel },
                Noise::Poisson(dose) => NoiseKind::ScaledPoisson { dose },
            };
        }
        cfg.noise = NoiseSpec {
            seed: self.noise_seed,
            ..cfg.noise
        };
        if self.nonneg {
            cfg.primal = PrimalKind::NonNegative;
        }
        if let Some(p) = self.tv_prob {
            cfg.tv_sampling = TvSampling::Fixed(p);
        }
        cfg
    }

    /// Checks every numeric field; nothing is built or written before this passes.
    pub fn validate(&self) -> Result<(), String> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        if self.side < 2 {
            return Err("side must be at least 2".into());
        }
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.n_batches == 0 {
            return Err("n_batches must be at least 1".into());
        }
        pos("ratio0", self.ratio0)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        match (self.tau0, self.sigma0) {
            (Some(t), Some(s)) => {
                pos("tau0", t)?;
                pos("sigma0", s)?;
            }
            (None, None) => {}
            _ => return Err("tau0 and sigma0 must be given together".into()),
        }
        if let Some(l) = self.lambda {
            pos("lambda", l)?;
        }
        if let Some(h) = self.pixel_size {
            pos("pixel_size", h)?;
        }
        if let Some(a) = self.arc_deg {
            if !(a > 0.0 && a <= 360.0) {
                return Err(format!("arc_deg must lie in (0, 360], got {a}"));
            }
        }
        if self.angles == Some(0) || self.detectors == Some(0) {
            return Err("angles and detectors must be at least 1".into());
        }
        match self.noise {
            Some(Noise::Gaussian(s)) if !(s >= 0.0 && s.is_finite()) => {
                return Err(format!("gaussian noise level must be >= 0, got {s}"))
            }
            Some(Noise::Poisson(d)) => pos("poisson dose", d)?,
            _ => {}
        }
        if let Some(p) = self.tv_prob {
            if self.lambda.is_none() || !(p > 0.0 && p < 1.0) {
                return Err("tv_prob needs a TV block and must lie in (0, 1)".into());
            }
        }
        if self.mode == Mode::Strict && !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(format!("eps0 must lie in (0, 1), got {}", self.eps0));
        }
        if !(self.threshold > 0.0) {
            return Err("threshold must be positive".into());
        }
        let inapplicable: &[(&str, bool)] = match self.rule {
            RuleName::Fixed => &[
                ("alpha0", self.alpha0.is_some()),
                ("eta", self.eta.is_some()),
                ("delta", self.delta.is_some()),
                ("c", self.c.is_some()),
                ("s_scale", self.s_scale.is_some()),
                ("rho", self.rho.is_some()),
            ],
            RuleName::A => &[("c", self.c.is_some())],
            RuleName::B => &[
                ("delta", self.delta.is_some()),
                ("s_scale", self.s_scale.is_some()),
                ("rho", self.rho.is_some()),
            ],
        };
        if let Some((k, _)) = inapplicable.iter().find(|(_, set)| *set) {
            return Err(format!("{k} does not apply to rule {}", self.rule.as_str()));
        }
        self.rule().validate().map_err(|e| e.to_string())?;
        let geom = self.ct_config().geometry;
        geom.validate().map_err(|e| e.to_string())?;
        let rays = geom.n_angles * geom.n_detectors;
        if self.n_batches > rays {
            return Err(format!("n_batches {} exceeds the {rays} rays", self.n_batches));
        }
        Ok(())
    }

    /// Output root: explicit setting, then the environment, then `runs`.
    pub fn out_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

/// Parameters `sensitivity` can vary.
pub const SENSITIVITY_PARAMS: &[&str] = &["alpha0", "eta", "delta", "c", "s_scale"];

/// Whether `param` is a hyperparameter of `rule`.
pub fn applies(param: &str, rule: RuleName) -> bool {
    matches!(
        (param, rule),
        ("alpha0" | "eta", RuleName::A | RuleName::B)
            | ("delta" | "s_scale", RuleName::A)
            | ("c", RuleName::B)
    )
}
