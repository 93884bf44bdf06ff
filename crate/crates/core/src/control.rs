//! Step-size state and the adaptive step-size controllers.
//!
//! All controllers act through the primal-dual balancing update
//! `τ ← τ/γ`, `σ ← γσ`, so the product `τσ` (and with it the convergence
//! bound `τσ‖A_i‖²/p_i ≤ β`) is preserved. Paper mode applies the residual
//! (rule a) and angle (rule b) rules as stated; strict mode additionally
//! clamps every factor `γ` into `[1 − ε_k, 1/(1 − ε_k)]` for the summable
//! deterministic sequence `ε_k = ε_0 η^k`.

use std::fmt;

use crate::error::{Error, Result};

/// Current step sizes and adaptivity level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizeState {
    pub tau: f64,
    /// Dual step shared by every block.
    pub sigma: f64,
    pub alpha: f64,
    pub k: usize,
    pub change_count: usize,
}

impl StepSizeState {
    pub fn new(tau: f64, sigma: f64, alpha: f64) -> Self {
        Self {
            tau,
            sigma,
            alpha,
            k: 0,
            change_count: 0,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.tau / self.sigma
    }

    /// Applies `τ ← τ/γ`, `σ ← γσ`, `α ← αη` and bumps the change counter.
    fn balance(&self, gamma: f64, eta: f64) -> Self {
        Self {
            tau: self.tau / gamma,
            sigma: self.sigma * gamma,
            alpha: self.alpha * eta,
            k: self.k + 1,
            change_count: self.change_count + 1,
        }
    }

    fn hold(&self) -> Self {
        Self {
            k: self.k + 1,
            ..*self
        }
    }
}

/// Residual-balancing rule: compares the primal residual `v` against the
/// scaled dual residual `s·d` with dead band `δ`.
pub fn rule_a_step(state: &StepSizeState, v: f64, d: f64, s: f64, delta: f64, eta: f64) -> StepSizeState {
    let a = state.alpha;
    if v > s * d * delta {
        state.balance(1.0 - a, eta)
    } else if v < s * d / delta {
        state.balance(1.0 / (1.0 - a), eta)
    } else {
        state.hold()
    }
}

/// Angle rule: shrinks the primal step when the cosine `w` is negative,
/// grows it when `w ≥ c`.
pub fn rule_b_step(state: &StepSizeState, w: f64, c: f64, eta: f64) -> StepSizeState {
    let a = state.alpha;
    if w < 0.0 {
        state.balance(1.0 + a, eta)
    } else if w >= c {
        state.balance(1.0 / (1.0 + a), eta)
    } else {
        state.hold()
    }
}

/// Clamps `γ` into `[1 − ε, 1/(1 − ε)]`.
pub fn gamma_clamp(gamma: f64, eps: f64) -> f64 {
    let lo = 1.0 - eps;
    gamma.clamp(lo, 1.0 / lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Paper,
    Strict,
}

/// Deterministic control sequence `ε_k = ε_0 η^k` used in strict mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSchedule {
    pub mode: Mode,
    pub eps0: f64,
    pub eta: f64,
}

impl ControlSchedule {
    pub fn paper() -> Self {
        Self {
            mode: Mode::Paper,
            eps0: 0.5,
            eta: 0.995,
        }
    }

    pub fn strict(eps0: f64, eta: f64) -> Self {
        Self {
            mode: Mode::Strict,
            eps0,
            eta,
        }
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.eps0 * self.eta.powi(k.min(i32::MAX as usize) as i32)
    }

    /// `ε_0 / (1 − η)`
    pub fn total(&self) -> f64 {
        self.eps0 / (1.0 - self.eta)
    }
}

/// Step-size rule and its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rule {
    Fixed,
    /// Residual balancing. `s = s_scale·‖A‖`; `rho ≥ 1` is the inverse
    /// subsampling rate used to estimate `d` (1 = exact).
    A {
        alpha0: f64,
        eta: f64,
        delta: f64,
        s_scale: f64,
        rho: f64,
    },
    /// Angle alignment.
    B {
        alpha0: f64,
        eta: f64,
        c: f64,
    },
}

impl Rule {
    pub fn rule_a() -> Self {
        Rule::A {
            alpha0: 0.5,
            eta: 0.995,
            delta: 1.5,
            s_scale: 1.0,
            rho: 10.0,
        }
    }

    pub fn rule_b() -> Self {
        Rule::B {
            alpha0: 1.0,
            eta: 0.99,
            c: 0.999,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Fixed => "fixed",
            Rule::A { .. } => "a",
            Rule::B { .. } => "b",
        }
    }

    pub fn alpha0(&self) -> f64 {
        match *self {
            Rule::Fixed => 0.0,
            Rule::A { alpha0, .. } | Rule::B { alpha0, .. } => alpha0,
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match *self {
            Rule::Fixed => None,
            Rule::A { eta, .. } | Rule::B { eta, .. } => Some(eta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let in_open01 = |v: f64| v > 0.0 && v < 1.0;
        match *self {
            Rule::Fixed => Ok(()),
            Rule::A {
                alpha0,
                eta,
                delta,
                s_scale,
                rho,
            } => {
                if !in_open01(alpha0) {
                    return bad("rule a: alpha0 must lie in (0, 1)");
                }
                if !in_open01(eta) {
                    return bad("rule a: eta must lie in (0, 1)");
                }
                if !(delta > 1.0) {
                    return bad("rule a: delta must exceed 1");
                }
                if !(s_scale > 0.0) {
                    return bad("rule a: s_scale must be positive");
                }
                if !(rho >= 1.0) || !rho.is_finite() {
                    return bad("rule a: rho must be >= 1");
                }
                Ok(())
            }
            Rule::B { alpha0, eta, c } => {
                if !(alpha0 > 0.0) || !alpha0.is_finite() {
                    return bad("rule b: alpha0 must be positive");
                }
                if !in_open01(eta) {
                    return bad("rule b: eta must lie in (0, 1)");
                }
                if !in_open01(c) {
                    return bad("rule b: c must lie in (0, 1)");
                }
                Ok(())
            }
        }
    }
}

/// Why a pair of initial step sizes was rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub worst_block: usize,
    pub product: f64,
    pub beta: f64,
    pub tau: f64,
    /// Largest σ admissible for the given τ.
    pub max_sigma: f64,
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "block {} has tau*sigma*|A_i|^2/p_i = {:.6e} > beta = {}; \
             with tau = {:.6e} the largest feasible sigma is {:.6e}",
            self.worst_block, self.product, self.beta, self.tau, self.max_sigma
        )
    }
}

/// Block constants entering the bound `τσ‖A_i‖²/p_i ≤ β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    /// `‖A_i‖²/p_i` per block.
    weights: Vec<f64>,
    pub beta: f64,
}

impl Feasibility {
    pub fn new(block_norms: &[f64], probs: &[f64], beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        if block_norms.len() != probs.len() || block_norms.is_empty() {
            return Err(Error::InvalidParameter(
                "need one norm and one probability per block".into(),
            ));
        }
        if probs.iter().any(|&p| !(p > 0.0)) || block_norms.iter().any(|&n| !(n >= 0.0)) {
            return Err(Error::InvalidParameter(
                "probabilities must be positive and norms nonnegative".into(),
            ));
        }
        let weights = block_norms.iter().zip(probs).map(|(n, p)| n * n / p).collect();
        Ok(Self { weights, beta })
    }

    /// `max_i ‖A_i‖²/p_i`
    pub fn kappa(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    fn worst(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc },
            )
            .0
    }

    /// `max_i τσ‖A_i‖²/p_i`
    pub fn product(&self, tau: f64, sigma: f64) -> f64 {
        tau * sigma * self.kappa()
    }

    pub fn check(&self, tau: f64, sigma: f64) -> std::result::Result<(), FeasibilityReport> {
        let product = self.product(tau, sigma);
        if product <= self.beta * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(());
        }
        Err(FeasibilityReport {
            worst_block: self.worst(),
            product,
            beta: self.beta,
            tau,
            max_sigma: self.beta / (tau * self.kappa()),
        })
    }

    /// Shrinks `σ` (never grows it) until the bound holds exactly in floating
    /// point. Only rounding-level corrections are expected here.
    pub fn enforce(&self, state: &mut StepSizeState) {
        let kappa = self.kappa();
        if self.product(state.tau, state.sigma) > self.beta {
            state.sigma = self.beta / (state.tau * kappa);
        }
        while self.product(state.tau, state.sigma) > self.beta {
            state.sigma = next_down(state.sigma);
        }
    }

    /// `τ_0 = √(β r / κ)`, `σ_0 = τ_0 / r`, adjusted so that the bound holds.
    pub fn initial_steps(&self, ratio: f64) -> Result<(f64, f64)> {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step-size ratio must be positive and finite, got {ratio}"
            )));
        }
        let kappa = self.kappa();
        if kappa == 0.0 {
            return Err(Error::InvalidParameter("all operators are zero".into()));
        }
        let tau = (self.beta * ratio / kappa).sqrt();
        let mut state = StepSizeState::new(tau, tau / ratio, 0.0);
        self.enforce(&mut state);
        Ok((state.tau, state.sigma))
    }
}

fn next_down(v: f64) -> f64 {
    if v > 0.0 {
        f64::from_bits(v.to_bits() - 1)
    } else {
        v
    }
}

/// Checks `τ_0 σ_0 ‖A_i‖²/p_i ≤ β` for every block.
pub fn validate_init(
    tau0: f64,
    sigma0: f64,
    block_norms: &[f64],
    probs: &[f64],
    beta: f64,
) -> Result<std::result::Result<(), FeasibilityReport>> {
    if !(tau0 > 0.0) || !(sigma0 > 0.0) {
        return Err(Error::InvalidParameter("step sizes must be positive".into()));
    }
    Ok(Feasibility::new(block_norms, probs, beta)?.check(tau0, sigma0))
}

/// Residual feedback produced by the previous iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Feedback {
    pub v: f64,
    pub d: f64,
    pub w: f64,
}

/// A configured step-size rule bound to one problem's feasibility constants.
#[derive(Clone, Debug)]
pub struct Controller {
    pub rule: Rule,
    pub schedule: ControlSchedule,
    pub feasibility: Feasibility,
    /// Scale `s` of rule (a), already multiplied by `‖A‖`.
    pub s: f64,
}

impl Controller {
    pub fn new(rule: Rule, schedule: ControlSchedule, feasibility: Feasibility, s: f64) -> Result<Self> {
        rule.validate()?;
        if schedule.mode == Mode::Strict {
            let ControlSchedule { eps0, eta, .. } = schedule;
            if !(eps0 > 0.0 && eps0 < 1.0 && eta > 0.0 && eta < 1.0) {
                return Err(Error::InvalidParameter(
                    "strict schedule needs eps0 and eta in (0, 1)".into(),
                ));
            }
        }
        Ok(Self {
            rule,
            schedule,
            feasibility,
            s,
        })
    }

    /// Initial state for a requested ratio `τ/σ`, validated against the bound.
    pub fn initial_state(&self, ratio: f64) -> Result<StepSizeState> {
        let (tau, sigma) = self.feasibility.initial_steps(ratio)?;
        self.feasibility.check(tau, sigma).map_err(Error::Infeasible)?;
        Ok(StepSizeState::new(tau, sigma, self.rule.alpha0()))
    }

    /// Validates user-supplied initial step sizes.
    pub fn state_from_steps(&self, tau: f64, sigma: f64) -> Result<StepSizeState> {
        if !(tau > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidParameter("step sizes must be positive".into()));
        }
        self.feasibility.check(tau, sigma).map_err(Error::Infeasible)?;
        let mut state = StepSizeState::new(tau, sigma, self.rule.alpha0());
        self.feasibility.enforce(&mut state);
        Ok(state)
    }

    /// Step sizes for the next iteration.
    pub fn next(&self, state: &StepSizeState, fb: &Feedback) -> StepSizeState {
        let proposed = match self.rule {
            Rule::Fixed => state.hold(),
            Rule::A { eta, delta, .. } => rule_a_step(state, fb.v, fb.d, self.s, delta, eta),
            Rule::B { eta, c, .. } => rule_b_step(state, fb.w, c, eta),
        };
        let mut next = match self.schedule.mode {
            Mode::Paper => proposed,
            Mode::Strict if proposed.change_count > state.change_count => {
                let gamma = gamma_clamp(state.tau / proposed.tau, self.schedule.eps(state.k));
                StepSizeState {
                    tau: state.tau / gamma,
                    sigma: state.sigma * gamma,
                    ..proposed
                }
            }
            Mode::Strict => proposed,
        };
        self.feasibility.enforce(&mut next);
        next
    }

    /// Shrink bound in force at step `k`: the largest relative decrease of
    /// `τ` or `σ` the controller may apply going from `state` to the next one.
    pub fn control_at(&self, state: &StepSizeState) -> f64 {
        match (self.rule, self.schedule.mode) {
            (Rule::Fixed, _) => 0.0,
            (_, Mode::Strict) => self.schedule.eps(state.k),
            (Rule::A { .. }, Mode::Paper) => state.alpha,
            (Rule::B { .. }, Mode::Paper) => state.alpha / (1.0 + state.alpha),
        }
    }
}

/// Relative slack for the quasi-increase audit, absorbing rounding in the
/// step-size updates.
pub const AUDIT_SLACK: f64 = 8.0 * f64::EPSILON;

/// Verifies `u_{k+1} ≥ (1 − η_k) u_k`; returns the first violating `k`.
pub fn audit_quasi_increase(trace: &[f64], controls: &[f64]) -> std::result::Result<(), usize> {
    for (k, w) in trace.windows(2).enumerate() {
        let eta = controls.get(k).copied().unwrap_or(0.0);
        if w[1] < (1.0 - eta) * w[0] * (1.0 - AUDIT_SLACK) {
            return Err(k);
        }
    }
    Ok(())
}
