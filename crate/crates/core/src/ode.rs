//! Dormand–Prince 5(4) with embedded error control and the standard
//! fourth-order continuous extension for dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-10 }
    }
}

/// Step statistics for one call of [`integrate_dense`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Interpolant valid on one accepted step `[t0, t0 + h]`.
struct Dense<const N: usize> {
    t0: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        std::array::from_fn(|i| {
            let r = &self.r;
            r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
        })
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: Tolerances) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| {
            let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / N as f64).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, writing the state at every
/// time in `outputs` (ascending, inside `[t0, t1]`) into `sink`.
///
/// `h_init` seeds the first step; the last accepted step size is returned so
/// that a caller restarting at an event boundary can reuse it. Returns the
/// state at `t1`.
pub fn integrate_dense<const N: usize, F, S>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    outputs: &[f64],
    tol: Tolerances,
    h_init: Option<f64>,
    mut sink: S,
) -> Result<([f64; N], f64, StepStats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: FnMut(f64, &[f64; N]),
{
    let mut stats = StepStats::default();
    if t1 <= t0 {
        for &t in outputs {
            sink(t, &y0);
        }
        return Ok((y0, h_init.unwrap_or(0.0), stats));
    }
    let span = t1 - t0;
    let h_min = span * 1e-14;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    check_finite(t, &k1)?;
    let mut h = h_init.unwrap_or_else(|| initial_step(&y, &k1, tol)).min(span);
    let mut out_idx = 0;
    while out_idx < outputs.len() && outputs[out_idx] <= t0 {
        sink(outputs[out_idx], &y);
        out_idx += 1;
    }

    loop {
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t1 } else { t + h };
        let k7 = f(t_new, &y_new);
        let finite = k7.iter().chain(y_new.iter()).all(|v| v.is_finite());
        let err_vec: [f64; N] =
            std::array::from_fn(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]));
        let err = if finite { error_norm(&err_vec, &y, &y_new, tol) } else { f64::INFINITY };

        if err <= 1.0 {
            stats.accepted += 1;
            if out_idx < outputs.len() && outputs[out_idx] <= t_new {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y_new[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - h * k7[i] - bspl;
                    r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = Dense { t0: t, h, r };
                while out_idx < outputs.len() && outputs[out_idx] <= t_new {
                    let ts = outputs[out_idx];
                    if ts == t_new {
                        sink(ts, &y_new);
                    } else {
                        sink(ts, &dense.eval(ts));
                    }
                    out_idx += 1;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if last {
                return Ok((y, h * fac, stats));
            }
            h *= fac;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            if h < h_min {
                if !finite {
                    return Err(Error::Integration {
                        t_us: t,
                        reason: "non-finite derivative".into(),
                    });
                }
                return Err(Error::Integration {
                    t_us: t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
        }
    }
}

fn check_finite<const N: usize>(t: f64, v: &[f64; N]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration {
            t_us: t,
            reason: "non-finite derivative".into(),
        })
    }
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], tol: Tolerances) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}
