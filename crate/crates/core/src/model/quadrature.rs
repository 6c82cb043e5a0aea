//! Log-moments of the kernel
//!
//! ```text
//! I_j(y) = ∫_0^∞ t^(nu + j - 1) exp(-a t² + y t) dt,   j = 0, 1, 2
//! ```
//!
//! `I_0(x - m)` solves `σ²/2 φ'' - η (x - m) φ' - ρ φ = 0` when `nu = ρ/η` and
//! `a = σ²/(4η)`; `I_1`, `I_2` are its first two derivatives. The integral is
//! evaluated in `w = ln t` with composite Gauss-Legendre panels, plus a power
//! series for the slowly decaying left tail.

use std::f64::consts::PI;
use std::sync::OnceLock;

const ORDER: usize = 16;
/// Integrand is dropped once it falls this many e-folds below its peak.
const LOG_CUTOFF: f64 = 50.0;
const MAX_PANEL: f64 = 0.5;

fn gauss_legendre() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        let n = ORDER as f64;
        for i in 0..ORDER.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..ORDER {
                    let p3 = p2;
                    p2 = p1;
                    let j = j as f64;
                    p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
                }
                dp = n * (z * p1 - p2) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[ORDER - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[ORDER - 1 - i] = weights[i];
        }
        (nodes, weights)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ParabolicKernel {
    nu: f64,
    a: f64,
}

impl ParabolicKernel {
    pub(crate) fn new(nu: f64, a: f64) -> Self {
        debug_assert!(nu > 0.0 && a > 0.0);
        Self { nu, a }
    }

    /// `ln I_j(y)` for `j = 0, 1, 2`.
    pub(crate) fn log_moments(&self, y: f64) -> [f64; 3] {
        let (nu, a) = (self.nu, self.a);
        let p = [nu, nu + 1.0, nu + 2.0];
        let g0 = |w: f64| {
            let t = w.exp();
            nu * w - a * t * t + y * t
        };
        let curvature = |w: f64| {
            let t = w.exp();
            (4.0 * a * t * t - y * t).abs()
        };

        // Left tail [0, t_cut] by power series of exp(y t - a t^2).
        let t_cut = (0.5 / y.abs().max(1e-300)).min(0.5 / a.sqrt()).min(1.0);
        let w_lo = t_cut.ln();
        let mut tail = [0.0; 3];
        {
            let (mut c_prev, mut c) = (0.0, 1.0);
            let mut t_pow = 1.0;
            let mut quiet = 0;
            for k in 0..200 {
                let kf = k as f64;
                let mut small = true;
                for j in 0..3 {
                    let term = c * t_pow / (p[j] + kf);
                    tail[j] += term;
                    if term.abs() > 1e-18 * tail[j].abs() {
                        small = false;
                    }
                }
                // odd coefficients vanish at y = 0, so wait for two in a row
                quiet = if small { quiet + 1 } else { 0 };
                if quiet >= 2 {
                    break;
                }
                let c_next = (y * c - 2.0 * a * c_prev) / (kf + 1.0);
                c_prev = c;
                c = c_next;
                t_pow *= t_cut;
            }
            for j in 0..3 {
                tail[j] *= t_cut.powf(p[j]);
            }
        }

        // Peaks of g_j(w) = g0(w) + j w, each unimodal.
        let disc = |pj: f64| (y * y + 8.0 * a * pj).sqrt();
        let peak = |pj: f64| {
            let d = disc(pj);
            let t = if y >= 0.0 {
                (y + d) / (4.0 * a)
            } else {
                2.0 * pj / (d - y)
            };
            t.ln()
        };
        let peaks = [peak(p[0]), peak(p[1]), peak(p[2])];
        let mut scale = [0.0; 3];
        for j in 0..3 {
            let w = peaks[j].max(w_lo);
            let top = g0(w) + j as f64 * w;
            let lt = if tail[j] > 0.0 {
                tail[j].ln()
            } else {
                f64::NEG_INFINITY
            };
            scale[j] = top.max(lt);
        }

        let (nodes, weights) = gauss_legendre();
        let mut sums = [0.0; 3];
        let last_peak = peaks[2].max(w_lo);
        let mut w = w_lo;
        loop {
            let mut h = MAX_PANEL;
            while h > 1e-6 {
                let c = curvature(w + h).max(curvature(w)) + nu;
                if h * c.sqrt() <= 1.0 {
                    break;
                }
                h *= 0.5;
            }
            let mid = w + 0.5 * h;
            for (x, wt) in nodes.iter().zip(weights) {
                let s = mid + 0.5 * h * x;
                let base = g0(s);
                for j in 0..3 {
                    sums[j] += 0.5 * h * wt * (base + j as f64 * s - scale[j]).exp();
                }
            }
            w += h;
            if w > last_peak {
                let base = g0(w);
                let done = (0..3).all(|j| base + j as f64 * w < scale[j] - LOG_CUTOFF);
                if done {
                    break;
                }
            }
        }

        let mut out = [0.0; 3];
        for j in 0..3 {
            let tail_scaled = if tail[j] > 0.0 {
                (tail[j].ln() - scale[j]).exp()
            } else {
                0.0
            };
            out[j] = scale[j] + (sums[j] + tail_scaled).ln();
        }
        out
    }
}
