use super::quadrature::ParabolicKernel;
use super::{quadratic_roots, Derivs, Diffusion, DriftSign, ModelParams};
use crate::error::{Error, Result};

/// Relative ODE residual accepted when a numerically evaluated pair is built.
pub const CONSTRUCTION_TOL: f64 = 1e-6;
const CHECK_POINTS: usize = 41;

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Exponential {
        beta: f64,
        gamma: f64,
    },
    MeanReverting {
        kernel: ParabolicKernel,
        center: f64,
        log_norm_inc: f64,
        log_norm_dec: f64,
    },
}

/// Public view of how a pair is represented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKind {
    /// `e^{beta x}` and `e^{gamma x}`.
    Exponential { beta: f64, gamma: f64 },
    /// Parabolic-cylinder type integrals centred at the shifted long-run mean.
    MeanReverting { center: f64 },
}

/// Increasing and decreasing solutions of
/// `σ²/2 φ'' + μ(x) φ' - ρ φ = 0`, normalised to `φ(0) = 1`, where `μ` is the
/// drift under a constant generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalPair {
    kind: Kind,
    sign: DriftSign,
    params: ModelParams,
    interval: (f64, f64),
}

pub fn fundamental_pair(
    params: &ModelParams,
    sign: DriftSign,
    interval: (f64, f64),
) -> Result<FundamentalPair> {
    params.validate()?;
    let (lo, hi) = interval;
    if !(lo <= 0.0 && 0.0 <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::IntervalExcludesZero { lo, hi });
    }
    let kind = match params.diffusion {
        Diffusion::Abm { .. } => {
            let (beta, gamma) = quadratic_roots(params, sign)?;
            Kind::Exponential { beta, gamma }
        }
        Diffusion::Ou { eta } => {
            let kernel =
                ParabolicKernel::new(params.rho / eta, params.sigma * params.sigma / (4.0 * eta));
            let center = params.drift_shift(sign) / eta;
            Kind::MeanReverting {
                kernel,
                center,
                log_norm_inc: kernel.log_moments(-center)[0],
                log_norm_dec: kernel.log_moments(center)[0],
            }
        }
    };
    let pair = FundamentalPair {
        kind,
        sign,
        params: *params,
        interval,
    };
    if matches!(pair.kind, Kind::MeanReverting { .. }) {
        pair.check_on_interval()?;
    }
    Ok(pair)
}

impl FundamentalPair {
    pub fn sign(&self) -> DriftSign {
        self.sign
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn kind(&self) -> PairKind {
        match self.kind {
            Kind::Exponential { beta, gamma } => PairKind::Exponential { beta, gamma },
            Kind::MeanReverting { center, .. } => PairKind::MeanReverting { center },
        }
    }

    /// Increasing solution φ̂ and its derivatives.
    pub fn increasing(&self, x: f64) -> Derivs {
        match &self.kind {
            Kind::Exponential { beta, .. } => {
                let v = (beta * x).exp();
                Derivs::new(v, beta * v, beta * beta * v)
            }
            Kind::MeanReverting {
                kernel,
                center,
                log_norm_inc,
                ..
            } => {
                let l = kernel.log_moments(x - center);
                Derivs::new(
                    (l[0] - log_norm_inc).exp(),
                    (l[1] - log_norm_inc).exp(),
                    (l[2] - log_norm_inc).exp(),
                )
            }
        }
    }

    /// Decreasing solution φ̌ and its derivatives.
    pub fn decreasing(&self, x: f64) -> Derivs {
        match &self.kind {
            Kind::Exponential { gamma, .. } => {
                let v = (gamma * x).exp();
                Derivs::new(v, gamma * v, gamma * gamma * v)
            }
            Kind::MeanReverting {
                kernel,
                center,
                log_norm_dec,
                ..
            } => {
                let l = kernel.log_moments(center - x);
                Derivs::new(
                    (l[0] - log_norm_dec).exp(),
                    -(l[1] - log_norm_dec).exp(),
                    (l[2] - log_norm_dec).exp(),
                )
            }
        }
    }

    /// `σ²/2 φ'' + μ(x) φ' - ρ φ` for the given derivatives at `x`.
    pub fn ode_residual(&self, phi: Derivs, x: f64) -> f64 {
        let s2 = self.params.sigma * self.params.sigma;
        0.5 * s2 * phi.d2 + self.params.effective_drift(self.sign, x) * phi.d1
            - self.params.rho * phi.value
    }

    /// Residual scaled by the magnitude of the three ODE terms.
    pub fn relative_residual(&self, phi: Derivs, x: f64) -> f64 {
        let s2 = self.params.sigma * self.params.sigma;
        let scale = (0.5 * s2 * phi.d2).abs()
            + (self.params.effective_drift(self.sign, x) * phi.d1).abs()
            + (self.params.rho * phi.value).abs();
        if scale == 0.0 {
            0.0
        } else {
            self.ode_residual(phi, x).abs() / scale
        }
    }

    fn check_on_interval(&self) -> Result<()> {
        let (lo, hi) = self.interval;
        for i in 0..CHECK_POINTS {
            let x = lo + (hi - lo) * i as f64 / (CHECK_POINTS - 1) as f64;
            let inc = self.increasing(x);
            let dec = self.decreasing(x);
            let fail = |detail: String| Err(Error::Construction { x, detail });
            for (name, d) in [("increasing", inc), ("decreasing", dec)] {
                if !(d.value.is_finite() && d.d1.is_finite() && d.d2.is_finite()) {
                    return fail(format!("{name} solution is not finite: {d:?}"));
                }
                if d.d2 < 0.0 {
                    return fail(format!("{name} solution is not convex: φ'' = {}", d.d2));
                }
                let r = self.relative_residual(d, x);
                if r > CONSTRUCTION_TOL {
                    return fail(format!("{name} solution ODE residual {r:e}"));
                }
            }
            if !(inc.d1 > 0.0) || !(dec.d1 < 0.0) {
                return fail(format!(
                    "monotonicity lost: φ̂' = {}, φ̌' = {}",
                    inc.d1, dec.d1
                ));
            }
        }
        Ok(())
    }
}
