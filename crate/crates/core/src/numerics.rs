//! Small root-finding helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Step halvings tried before a Newton iteration is declared stuck.
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub fd_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome<const N: usize> {
    pub x: [f64; N],
    pub residual: [f64; N],
    pub norm: f64,
    pub iterations: usize,
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| {
        if x.is_nan() {
            f64::INFINITY
        } else {
            m.max(x.abs())
        }
    })
}

/// Damped Newton with a central-difference Jacobian. A trial point where `f`
/// fails (e.g. barrier ordering lost) counts as a non-decrease and triggers
/// step halving. Converges when the sup-norm residual is below `tol`.
pub fn damped_newton<const N: usize, F>(
    f: F,
    x0: [f64; N],
    settings: &NewtonSettings,
) -> Result<NewtonOutcome<N>>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut norm = inf_norm(&fx);
    for iter in 0..settings.max_iters {
        if norm <= settings.tol {
            return Ok(NewtonOutcome {
                x,
                residual: fx,
                norm,
                iterations: iter,
            });
        }
        let mut jac = DMatrix::<f64>::zeros(N, N);
        for j in 0..N {
            let h = settings.fd_step * (1.0 + x[j].abs());
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (col, width) = match (f(&xp), f(&xm)) {
                (Ok(p), Ok(m)) => (sub(&p, &m), 2.0 * h),
                (Ok(p), Err(_)) => (sub(&p, &fx), h),
                (Err(_), Ok(m)) => (sub(&fx, &m), h),
                (Err(e), Err(_)) => return Err(e),
            };
            for i in 0..N {
                jac[(i, j)] = col[i] / width;
            }
        }
        let rhs = -DVector::<f64>::from_column_slice(&fx);
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(Error::NotConverged {
                iterations: iter,
                residual: norm,
            });
        };
        let mut lambda = settings.damping;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = x;
            for i in 0..N {
                trial[i] += lambda * step[i];
            }
            if let Ok(ft) = f(&trial) {
                let nt = inf_norm(&ft);
                if nt < norm {
                    x = trial;
                    fx = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations: iter,
                residual: norm,
            });
        }
    }
    if norm <= settings.tol {
        Ok(NewtonOutcome {
            x,
            residual: fx,
            norm,
            iterations: settings.max_iters,
        })
    } else {
        Err(Error::NotConverged {
            iterations: settings.max_iters,
            residual: norm,
        })
    }
}

fn sub<const N: usize>(a: &[f64; N], b: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = a[i] - b[i];
    }
    out
}

/// Bisection on a sign change of `f` over `[a, b]`. Returns `None` if the
/// endpoints do not bracket a root or `f` fails inside the bracket.
pub fn bisect<F>(f: F, mut a: f64, mut b: f64) -> Option<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// Walks from `start` towards `limit` with steps that double from
/// `first_step` up to `max_step`, stopping at the first sign change of `f`
/// relative to `f(start)`, then bisects. `None` if no sign change before
/// `limit`.
pub fn first_crossing<F>(
    f: F,
    start: f64,
    limit: f64,
    first_step: f64,
    max_step: f64,
) -> Option<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let f0 = f(start)?;
    let dir = (limit - start).signum();
    let mut prev = start;
    let mut step = first_step.abs().min(max_step);
    loop {
        let mut x = prev + dir * step;
        if (x - limit) * dir > 0.0 {
            x = limit;
        }
        let fx = f(x)?;
        if fx.signum() != f0.signum() || fx == 0.0 {
            return if dir > 0.0 {
                bisect(&f, prev, x)
            } else {
                bisect(&f, x, prev)
            };
        }
        if x == limit {
            return None;
        }
        prev = x;
        step = (2.0 * step).min(max_step);
    }
}
