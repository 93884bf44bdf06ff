//! Closed-form proximal operators.
//!
//! `prox_{t f}(y) = argmin_z ½‖z − y‖² + t·f(z)`.

/// Soft threshold with threshold `t·λ`.
pub fn prox_l1(y: &[f64], t: f64, lambda: f64) -> Vec<f64> {
    let mut out = y.to_vec();
    soft_threshold(&mut out, t * lambda);
    out
}

/// Prox of the conjugate of `½‖z − b‖²`: `(y − σ b)/(1 + σ)`.
pub fn prox_conj_sq_l2(y: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let mut out = y.to_vec();
    conj_sq_l2_in_place(&mut out, sigma, b);
    out
}

/// Prox of the conjugate of `λ‖·‖₁`, i.e. projection onto the ℓ∞ ball of
/// radius `λ`. Independent of the step.
pub fn prox_conj_l1(y: &[f64], _sigma: f64, lambda: f64) -> Vec<f64> {
    y.iter().map(|v| v.clamp(-lambda, lambda)).collect()
}

/// Primal-side regularizer choices for the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PrimalKind {
    #[default]
    Zero,
    NonNegative,
}

pub fn prox_primal(y: &[f64], _t: f64, kind: PrimalKind) -> Vec<f64> {
    match kind {
        PrimalKind::Zero => y.to_vec(),
        PrimalKind::NonNegative => y.iter().map(|v| v.max(0.0)).collect(),
    }
}

fn soft_threshold(y: &mut [f64], thr: f64) {
    for v in y {
        *v = v.signum() * (v.abs() - thr).max(0.0);
    }
}

fn conj_sq_l2_in_place(y: &mut [f64], sigma: f64, b: &[f64]) {
    debug_assert_eq!(y.len(), b.len());
    let scale = 1.0 / (1.0 + sigma);
    for (v, bi) in y.iter_mut().zip(b) {
        *v = (*v - sigma * bi) * scale;
    }
}

/// A convex function with a closed-form prox.
#[derive(Clone, Debug, PartialEq)]
pub enum ProxFn {
    Zero,
    NonNegIndicator,
    /// `λ‖z‖₁`
    L1Scaled(f64),
    /// `½‖z − b‖²`
    SqL2DataFit(Vec<f64>),
    /// Conjugate of `½‖z − b‖²`: `½‖y‖² + ⟨y, b⟩`
    ConjSqL2DataFit(Vec<f64>),
    /// Indicator of `{‖y‖∞ ≤ λ}` (conjugate of `λ‖·‖₁`)
    LinfBallProj(f64),
}

impl ProxFn {
    pub fn from_primal_kind(kind: PrimalKind) -> Self {
        match kind {
            PrimalKind::Zero => ProxFn::Zero,
            PrimalKind::NonNegative => ProxFn::NonNegIndicator,
        }
    }

    /// Evaluates `prox_{t f}` in place.
    pub fn prox_in_place(&self, y: &mut [f64], t: f64) {
        match self {
            ProxFn::Zero => {}
            ProxFn::NonNegIndicator => y.iter_mut().for_each(|v| *v = v.max(0.0)),
            ProxFn::L1Scaled(lambda) => soft_threshold(y, t * lambda),
            ProxFn::SqL2DataFit(b) => {
                let scale = 1.0 / (1.0 + t);
                for (v, bi) in y.iter_mut().zip(b) {
                    *v = (*v + t * bi) * scale;
                }
            }
            ProxFn::ConjSqL2DataFit(b) => conj_sq_l2_in_place(y, t, b),
            ProxFn::LinfBallProj(lambda) => y.iter_mut().for_each(|v| *v = v.clamp(-lambda, *lambda)),
        }
    }

    pub fn prox(&self, y: &[f64], t: f64) -> Vec<f64> {
        let mut out = y.to_vec();
        self.prox_in_place(&mut out, t);
        out
    }

    /// Function value; indicators return `+∞` outside their domain.
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            ProxFn::Zero => 0.0,
            ProxFn::NonNegIndicator => {
                if z.iter().all(|&v| v >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFn::L1Scaled(lambda) => lambda * z.iter().map(|v| v.abs()).sum::<f64>(),
            ProxFn::SqL2DataFit(b) => 0.5 * z.iter().zip(b).map(|(v, bi)| (v - bi).powi(2)).sum::<f64>(),
            ProxFn::ConjSqL2DataFit(b) => z.iter().zip(b).map(|(v, bi)| 0.5 * v * v + v * bi).sum(),
            ProxFn::LinfBallProj(lambda) => {
                if z.iter().all(|v| v.abs() <= *lambda) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Fenchel conjugate, for the pairs with a closed-form prox on both sides.
    pub fn conjugate(&self) -> Option<ProxFn> {
        match self {
            ProxFn::L1Scaled(l) => Some(ProxFn::LinfBallProj(*l)),
            ProxFn::LinfBallProj(l) => Some(ProxFn::L1Scaled(*l)),
            ProxFn::SqL2DataFit(b) => Some(ProxFn::ConjSqL2DataFit(b.clone())),
            ProxFn::ConjSqL2DataFit(b) => Some(ProxFn::SqL2DataFit(b.clone())),
            ProxFn::Zero | ProxFn::NonNegIndicator => None,
        }
    }

    /// Dimension constraint carried by data-dependent functions.
    pub fn data_len(&self) -> Option<usize> {
        match self {
            ProxFn::SqL2DataFit(b) | ProxFn::ConjSqL2DataFit(b) => Some(b.len()),
            _ => None,
        }
    }
}
