//! Model primitives: parameters, drifts, holding costs and the closed-form
//! building blocks (fundamental solutions, affine expected evolution,
//! perpetual uncontrolled holding costs) that the band solver pastes together.

mod fundamental;
mod perpetual;
mod quadrature;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fundamental::{fundamental_pair, FundamentalPair, PairKind};
pub use perpetual::{perpetual_cost, PerpetualCost};

/// Value together with its first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Derivs {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    /// `self + k * other`, derivative by derivative.
    pub fn add_scaled(self, k: f64, other: Derivs) -> Derivs {
        Derivs {
            value: self.value + k * other.value,
            d1: self.d1 + k * other.d1,
            d2: self.d2 + k * other.d2,
        }
    }
}

/// Reference dynamics of the uncontrolled cash process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Diffusion {
    /// Arithmetic Brownian motion `dX = alpha dt + sigma dB`.
    Abm { alpha: f64 },
    /// Mean-reverting Ornstein-Uhlenbeck `dX = -eta X dt + sigma dB`.
    Ou { eta: f64 },
}

impl Diffusion {
    /// Mean-reversion speed; zero for ABM.
    pub fn eta(&self) -> f64 {
        match *self {
            Diffusion::Abm { .. } => 0.0,
            Diffusion::Ou { eta } => eta,
        }
    }

    /// Drift under the reference prior.
    pub fn drift(&self, x: f64) -> f64 {
        match *self {
            Diffusion::Abm { alpha } => alpha,
            Diffusion::Ou { eta } => -eta * x,
        }
    }
}

/// Which constant density generator is active. `Minus` shifts the drift
/// by `-kappa * sigma`, `Plus` by `+kappa * sigma`.
///
/// The lower part of the inaction region `(x_L, x*)` is governed by `Minus`,
/// the upper part `[x*, x_U)` by `Plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftSign {
    Minus,
    Plus,
}

impl DriftSign {
    pub fn factor(self) -> f64 {
        match self {
            DriftSign::Minus => -1.0,
            DriftSign::Plus => 1.0,
        }
    }

    pub fn opposite(self) -> DriftSign {
        match self {
            DriftSign::Minus => DriftSign::Plus,
            DriftSign::Plus => DriftSign::Minus,
        }
    }
}

impl fmt::Display for DriftSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSign::Minus => f.write_str("minus"),
            DriftSign::Plus => f.write_str("plus"),
        }
    }
}

/// Scalar inputs of the cash management problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Discount rate.
    pub rho: f64,
    pub diffusion: Diffusion,
    pub sigma: f64,
    /// Ambiguity radius; generators are restricted to `[-kappa, kappa]`.
    pub kappa: f64,
    /// Holding cost slope for negative balances.
    pub c_neg: f64,
    /// Holding cost slope for positive balances.
    pub c_pos: f64,
    /// Proportional cost of raising cash (lower control).
    pub l_cost: f64,
    /// Proportional cost of paying out cash (upper control).
    pub u_cost: f64,
}

impl ModelParams {
    /// Arithmetic Brownian motion with the given drift; costs default to
    /// `c_neg = c_pos = 1`, `l_cost = u_cost = 2`, `rho = 0.1`.
    pub fn abm(alpha: f64, sigma: f64, kappa: f64) -> Self {
        Self {
            rho: 0.1,
            diffusion: Diffusion::Abm { alpha },
            sigma,
            kappa,
            c_neg: 1.0,
            c_pos: 1.0,
            l_cost: 2.0,
            u_cost: 2.0,
        }
    }

    /// The reference configuration used throughout the numerical examples:
    /// `rho = 0.1`, `alpha = 0`, unit holding costs, `l = 4`, `u = 2`,
    /// `kappa = 0.5`, `sigma = 5.4`.
    pub fn base_case() -> Self {
        Self {
            l_cost: 4.0,
            u_cost: 2.0,
            ..Self::abm(0.0, 5.4, 0.5)
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_costs(mut self, c_neg: f64, c_pos: f64, l_cost: f64, u_cost: f64) -> Self {
        self.c_neg = c_neg;
        self.c_pos = c_pos;
        self.l_cost = l_cost;
        self.u_cost = u_cost;
        self
    }

    /// ABM drift; `None` for OU.
    pub fn alpha(&self) -> Option<f64> {
        match self.diffusion {
            Diffusion::Abm { alpha } => Some(alpha),
            Diffusion::Ou { .. } => None,
        }
    }

    /// Reflected problem `x -> -x`: `(alpha, c_neg, c_pos, l, u)` becomes
    /// `(-alpha, c_pos, c_neg, u, l)`. OU dynamics are symmetric already.
    pub fn mirrored(&self) -> Self {
        let diffusion = match self.diffusion {
            Diffusion::Abm { alpha } => Diffusion::Abm { alpha: -alpha },
            ou => ou,
        };
        Self {
            diffusion,
            c_neg: self.c_pos,
            c_pos: self.c_neg,
            l_cost: self.u_cost,
            u_cost: self.l_cost,
            ..*self
        }
    }

    /// Drift shift `±kappa * sigma` induced by the constant generator.
    pub fn drift_shift(&self, sign: DriftSign) -> f64 {
        sign.factor() * self.kappa * self.sigma
    }

    /// Drift of the uncontrolled process under the constant generator `sign`.
    pub fn effective_drift(&self, sign: DriftSign, x: f64) -> f64 {
        self.diffusion.drift(x) + self.drift_shift(sign)
    }

    /// Range checks on every field. Feasibility of the cost structure is a
    /// separate diagnostic, see [`feasibility_check`].
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, value: f64) -> Result<()> {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
            if value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
            Ok(())
        }
        positive("rho", self.rho)?;
        positive("sigma", self.sigma)?;
        positive("c_neg", self.c_neg)?;
        positive("c_pos", self.c_pos)?;
        positive("l_cost", self.l_cost)?;
        positive("u_cost", self.u_cost)?;
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::InvalidParameter {
                name: "kappa",
                value: self.kappa,
                reason: "must be finite and non-negative",
            });
        }
        match self.diffusion {
            Diffusion::Abm { alpha } if !alpha.is_finite() => Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must be finite",
            }),
            Diffusion::Ou { eta } => positive("eta", eta),
            _ => Ok(()),
        }
    }
}

/// Instantaneous holding cost `c(x)`.
pub fn holding_cost(x: f64, params: &ModelParams) -> f64 {
    if x >= 0.0 {
        params.c_pos * x
    } else {
        -params.c_neg * x
    }
}

/// One violated cost inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated ({} < {})",
            self.inequality, self.lhs, self.rhs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Infeasible(self.violations))
        }
    }
}

/// Checks that controlling is never dominated by holding: `c_neg >= (rho+eta) l`
/// and `c_pos >= (rho+eta) u` (with `eta = 0` for ABM), together with the
/// equivalent slope form `l <= c_neg a_-`, `u <= c_pos a_+` where `a` is the
/// slope of the affine expected evolution.
pub fn feasibility_check(params: &ModelParams) -> Feasibility {
    let mut violations = Vec::new();
    let eta = params.diffusion.eta();
    let rate = params.rho + eta;
    let rate_label = match params.diffusion {
        Diffusion::Abm { .. } => "ρ",
        Diffusion::Ou { .. } => "(ρ+η)",
    };
    let mut check = |inequality: String, lhs: f64, rhs: f64| {
        if !(lhs >= rhs) {
            violations.push(Violation {
                inequality,
                lhs,
                rhs,
            });
        }
    };
    check(
        format!("č ≥ {rate_label}ℓ"),
        params.c_neg,
        rate * params.l_cost,
    );
    check(
        format!("ĉ ≥ {rate_label}u"),
        params.c_pos,
        rate * params.u_cost,
    );

    let a_minus = affine_coeffs(params, DriftSign::Minus).a;
    let a_plus = affine_coeffs(params, DriftSign::Plus).a;
    check(
        "č·a₋ ≥ ℓ".to_string(),
        params.c_neg * a_minus,
        params.l_cost,
    );
    check("ĉ·a₊ ≥ u".to_string(), params.c_pos * a_plus, params.u_cost);
    Feasibility { violations }
}

/// `f(x) = a x + b`, the discounted expected position of the uncontrolled
/// process under a constant generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCoeffs {
    pub a: f64,
    pub b: f64,
}

impl AffineCoeffs {
    pub fn value(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

pub fn affine_coeffs(params: &ModelParams, sign: DriftSign) -> AffineCoeffs {
    let rho = params.rho;
    match params.diffusion {
        Diffusion::Abm { alpha } => AffineCoeffs {
            a: 1.0 / rho,
            b: (alpha + params.drift_shift(sign)) / (rho * rho),
        },
        Diffusion::Ou { eta } => {
            // long-run mean under the shifted measure
            let mean = params.drift_shift(sign) / eta;
            AffineCoeffs {
                a: 1.0 / (rho + eta),
                b: mean / rho - mean / (rho + eta),
            }
        }
    }
}

/// Positive and negative roots `(beta, gamma)` of
/// `sigma^2 chi^2 / 2 + (alpha ± kappa sigma) chi - rho = 0`.
pub fn quadratic_roots(params: &ModelParams, sign: DriftSign) -> Result<(f64, f64)> {
    if params.alpha().is_none() {
        return Err(Error::UnsupportedDiffusion("quadratic_roots"));
    }
    params.validate()?;
    let mu = params.effective_drift(sign, 0.0);
    let s2 = params.sigma * params.sigma;
    let disc = (mu * mu + 2.0 * s2 * params.rho).sqrt();
    // Pick the cancellation-free form for each root.
    let (beta, gamma) = if mu >= 0.0 {
        (2.0 * params.rho / (mu + disc), -(mu + disc) / s2)
    } else {
        ((disc - mu) / s2, -2.0 * params.rho / (disc - mu))
    };
    Ok((beta, gamma))
}

/// Symmetric working interval used for grids and scans: wide enough to hold
/// any plausible barrier, narrow enough that exponentials stay finite.
pub fn working_interval(params: &ModelParams) -> (f64, f64) {
    let spread = params.sigma / (2.0 * params.rho).sqrt();
    let half = match params.diffusion {
        Diffusion::Abm { alpha } => {
            let drift = alpha.abs() + params.kappa * params.sigma;
            let reach = 20.0 * spread + 2.0 * drift / params.rho;
            let mut rate = 0.0f64;
            for sign in [DriftSign::Minus, DriftSign::Plus] {
                if let Ok((b, g)) = quadratic_roots(params, sign) {
                    rate = rate.max(b).max(-g);
                }
            }
            if rate > 0.0 {
                reach.min(300.0 / rate)
            } else {
                reach
            }
        }
        Diffusion::Ou { eta } => 5.0 * spread + params.kappa * params.sigma / eta,
    };
    (-half, half)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abm(alpha: f64, sigma: f64, kappa: f64) -> ModelParams {
        ModelParams::abm(alpha, sigma, kappa)
    }

    #[test]
    fn roots_zero_drift() {
        let (b, g) = quadratic_roots(&abm(0.0, 2.0, 0.0), DriftSign::Minus).unwrap();
        assert!((b - 0.223_606_797_749_979).abs() < 1e-12);
        assert!((g + 0.223_606_797_749_979).abs() < 1e-12);
    }

    #[test]
    fn roots_with_ambiguity() {
        let p = abm(0.0, 2.0, 0.5);
        let (b, g) = quadratic_roots(&p, DriftSign::Plus).unwrap();
        assert!((b - 0.085_410_196_624_968_46).abs() < 1e-12);
        assert!((g + 0.585_410_196_624_968_5).abs() < 1e-12);
        let (b, g) = quadratic_roots(&p, DriftSign::Minus).unwrap();
        assert!((b - 0.585_410_196_624_968_5).abs() < 1e-12);
        assert!((g + 0.085_410_196_624_968_46).abs() < 1e-12);
    }

    #[test]
    fn roots_reject_ou_and_nan() {
        let mut p = abm(0.0, 2.0, 0.5);
        p.diffusion = Diffusion::Ou { eta: 0.4 };
        assert_eq!(
            quadratic_roots(&p, DriftSign::Plus),
            Err(Error::UnsupportedDiffusion("quadratic_roots"))
        );
        let p = abm(f64::NAN, 2.0, 0.5);
        assert!(matches!(
            quadratic_roots(&p, DriftSign::Plus),
            Err(Error::InvalidParameter { name: "alpha", .. })
        ));
    }

    #[test]
    fn affine_examples() {
        let c = affine_coeffs(&abm(0.0, 2.0, 0.5), DriftSign::Plus);
        assert!((c.a - 10.0).abs() < 1e-12 && (c.b - 100.0).abs() < 1e-9);
        for sign in [DriftSign::Minus, DriftSign::Plus] {
            let c = affine_coeffs(&abm(0.0, 2.0, 0.0), sign);
            assert_eq!((c.a, c.b), (10.0, 0.0));
        }
        let mut ou = abm(0.0, 2.0, 0.5);
        ou.diffusion = Diffusion::Ou { eta: 0.4 };
        let c = affine_coeffs(&ou, DriftSign::Plus);
        assert!((c.a - 2.0).abs() < 1e-12);
        assert!((c.b - 20.0).abs() < 1e-9);
    }

    #[test]
    fn holding_cost_is_piecewise_linear() {
        let p = abm(0.0, 1.0, 0.0).with_costs(1.0, 2.0, 2.0, 2.0);
        assert_eq!(holding_cost(0.0, &p), 0.0);
        assert_eq!(holding_cost(3.0, &p), 6.0);
        assert_eq!(holding_cost(-3.0, &p), 3.0);
    }

    #[test]
    fn feasibility_examples() {
        let base = ModelParams::base_case();
        assert!(feasibility_check(&base).passed());

        let bad = base.with_costs(0.3, 1.0, 4.0, 2.0);
        let f = feasibility_check(&bad);
        assert!(!f.passed());
        assert!(f.violations.iter().any(|v| v.inequality == "č ≥ ρℓ"));

        let mut ou = base.with_costs(1.0, 1.0, 4.0, 2.0);
        ou.diffusion = Diffusion::Ou { eta: 0.4 };
        let f = feasibility_check(&ou);
        assert!(f.violations.iter().any(|v| v.inequality == "č ≥ (ρ+η)ℓ"));
    }

    #[test]
    fn mirror_is_an_involution() {
        let p = ModelParams::base_case();
        let mut q = p;
        q.diffusion = Diffusion::Abm { alpha: 1.5 };
        assert_eq!(q.mirrored().mirrored(), q);
        assert_eq!(q.mirrored().alpha(), Some(-1.5));
        assert_eq!(q.mirrored().l_cost, q.u_cost);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut p = ModelParams::base_case();
        p.rho = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::base_case();
        p.kappa = -0.1;
        assert!(p.validate().is_err());
        let mut p = ModelParams::base_case();
        p.diffusion = Diffusion::Ou { eta: -1.0 };
        assert!(p.validate().is_err());
    }
}
