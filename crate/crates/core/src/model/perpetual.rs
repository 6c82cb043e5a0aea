use super::{
    affine_coeffs, fundamental_pair, working_interval, AffineCoeffs, Derivs, DriftSign,
    FundamentalPair, ModelParams,
};
use crate::error::{Error, Result};

/// Expected discounted holding cost of the uncontrolled process under a
/// constant generator:
///
/// ```text
/// R(x) = -č f(x) + Ê φ̂(x)   for x < 0
/// R(x) =  ĉ f(x) + Ě φ̌(x)   for x ≥ 0
/// ```
///
/// with `Ê`, `Ě` fixed by continuity of `R` and `R'` at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PerpetualCost {
    pub e_hat: f64,
    pub e_check: f64,
    pub affine: AffineCoeffs,
    c_neg: f64,
    c_pos: f64,
    pair: FundamentalPair,
}

pub fn perpetual_cost(params: &ModelParams, sign: DriftSign) -> Result<PerpetualCost> {
    let pair = fundamental_pair(params, sign, working_interval(params))?;
    PerpetualCost::from_pair(params, pair)
}

impl PerpetualCost {
    pub fn from_pair(params: &ModelParams, pair: FundamentalPair) -> Result<Self> {
        let affine = affine_coeffs(params, pair.sign());
        let inc = pair.increasing(0.0);
        let dec = pair.decreasing(0.0);
        let det = inc.d1 - dec.d1;
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::SingularSystem { x: 0.0, det });
        }
        let total = params.c_pos + params.c_neg;
        let f0 = affine.value(0.0);
        Ok(Self {
            e_hat: total * (affine.a - f0 * dec.d1) / det,
            e_check: total * (affine.a - f0 * inc.d1) / det,
            affine,
            c_neg: params.c_neg,
            c_pos: params.c_pos,
            pair,
        })
    }

    pub fn sign(&self) -> DriftSign {
        self.pair.sign()
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.pair
    }

    pub fn eval(&self, x: f64) -> Derivs {
        let a = self.affine.a;
        if x < 0.0 {
            let lin = Derivs::new(-self.c_neg * self.affine.value(x), -self.c_neg * a, 0.0);
            lin.add_scaled(self.e_hat, self.pair.increasing(x))
        } else {
            let lin = Derivs::new(self.c_pos * self.affine.value(x), self.c_pos * a, 0.0);
            lin.add_scaled(self.e_check, self.pair.decreasing(x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{holding_cost, quadratic_roots, Diffusion};

    #[test]
    fn zero_drift_matches_closed_form() {
        // E ∫ e^{-ρt} |σ B_t| dt = σ / (√2 ρ^{3/2})
        let p = ModelParams::abm(0.0, 2.0, 0.0);
        let r = perpetual_cost(&p, DriftSign::Minus).unwrap();
        let expect = 2.0 / (2f64.sqrt() * 0.1f64.powf(1.5));
        assert!((r.e_hat - expect).abs() < 1e-9);
        assert!((r.e_check - expect).abs() < 1e-9);
        assert!((r.eval(0.0).value - expect).abs() < 1e-9);
        assert!((expect - 44.721_36).abs() < 1e-5);
    }

    #[test]
    fn abm_constants_match_root_form() {
        let p = ModelParams::base_case().with_costs(2.0, 3.0, 4.0, 2.0);
        for sign in [DriftSign::Minus, DriftSign::Plus] {
            let r = perpetual_cost(&p, sign).unwrap();
            let (b, g) = quadratic_roots(&p, sign).unwrap();
            let k = (p.c_pos + p.c_neg) * p.sigma * p.sigma / (2.0 * p.rho * p.rho * (b - g));
            assert!((r.e_hat / (k * g * g) - 1.0).abs() < 1e-12);
            assert!((r.e_check / (k * b * b) - 1.0).abs() < 1e-12);
            assert!(r.e_hat > 0.0 && r.e_check > 0.0);
        }
    }

    #[test]
    fn c1_at_zero() {
        for kappa in [0.0, 0.5] {
            let p = ModelParams::base_case().with_kappa(kappa);
            for sign in [DriftSign::Minus, DriftSign::Plus] {
                let r = perpetual_cost(&p, sign).unwrap();
                let left = r.eval(-1e-300);
                let right = r.eval(0.0);
                assert!((left.value - right.value).abs() < 1e-10);
                assert!((left.d1 - right.d1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solves_inhomogeneous_ode() {
        let mut ou = ModelParams::abm(0.0, 2.0, 0.5);
        ou.diffusion = Diffusion::Ou { eta: 0.4 };
        for p in [ModelParams::base_case(), ou] {
            for sign in [DriftSign::Minus, DriftSign::Plus] {
                let r = perpetual_cost(&p, sign).unwrap();
                for i in 0..41 {
                    let x = -4.0 + 0.2 * i as f64 + 0.013;
                    let d = r.eval(x);
                    let res = 0.5 * p.sigma * p.sigma * d.d2 + p.effective_drift(sign, x) * d.d1
                        - p.rho * d.value
                        + holding_cost(x, &p);
                    assert!(res.abs() < 1e-8, "x={x} res={res}");
                }
            }
        }
    }
}
