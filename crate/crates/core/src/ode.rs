//! Adaptive Dormand–Prince 5(4) for autonomous systems, with event location.

use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_max: 0.05,
            max_steps: 200_000,
        }
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeEnd<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// the event function crossed from positive to non-positive
    pub event: bool,
}

fn rk_step<const N: usize>(
    f: &impl Fn(&[f64; N]) -> Result<[f64; N]>,
    y: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N])> {
    let mut k = [[0.0; N]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(&ys)?;
    }
    let mut y5 = *y;
    let mut err = [0.0; N];
    for s in 0..7 {
        for i in 0..N {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    Ok((y5, err))
}

/// Integrates `y' = f(y)` from `t = 0` until `t_max` or until `event(y)`
/// crosses from positive to non-positive. The crossing is located by
/// bisection on the size of the final step. `observe(t, y)` sees every
/// accepted state and may abort with an error.
pub fn integrate<const N: usize>(
    f: impl Fn(&[f64; N]) -> Result<[f64; N]>,
    y0: [f64; N],
    t_max: f64,
    event: impl Fn(&[f64; N]) -> f64,
    mut observe: impl FnMut(f64, &[f64; N]) -> Result<()>,
    opts: &OdeOptions,
) -> Result<OdeEnd<N>> {
    let mut t = 0.0;
    let mut y = y0;
    let mut g = event(&y);
    let mut h = opts.h_init.min(opts.h_max);
    observe(t, &y)?;
    for _ in 0..opts.max_steps {
        if t >= t_max {
            return Ok(OdeEnd { t, y, event: false });
        }
        let step = h.min(t_max - t);
        let (y_new, err) = rk_step(&f, &y, step)?;
        let mut e = 0.0f64;
        for i in 0..N {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            e = e.max((err[i] / sc).abs());
        }
        if !e.is_finite() {
            h *= 0.25;
            continue;
        }
        if e <= 1.0 {
            let g_new = event(&y_new);
            if g > 0.0 && g_new <= 0.0 {
                let (mut lo, mut hi) = (0.0, step);
                let mut y_hi = y_new;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let (ym, _) = rk_step(&f, &y, mid)?;
                    if event(&ym) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                        y_hi = ym;
                    }
                    if hi - lo <= 1e-14 * (1.0 + t) {
                        break;
                    }
                }
                observe(t + hi, &y_hi)?;
                return Ok(OdeEnd {
                    t: t + hi,
                    y: y_hi,
                    event: true,
                });
            }
            t += step;
            y = y_new;
            g = g_new;
            observe(t, &y)?;
        }
        let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h = (step * fac).min(opts.h_max);
        if h < 1e-14 {
            return Err(Error::NotConverged {
                what: "ode step size",
                residual: e,
                iterations: 0,
            });
        }
    }
    Err(Error::NotConverged {
        what: "ode integration",
        residual: t,
        iterations: opts.max_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let end = integrate(
            |y: &[f64; 2]| Ok([y[1], -y[0]]),
            [1.0, 0.0],
            std::f64::consts::PI,
            |_| 1.0,
            |_, _| Ok(()),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((end.y[0] + 1.0).abs() < 1e-8);
        assert!(!end.event);
    }

    #[test]
    fn event_is_located() {
        // y = e^t crosses 2 at ln 2
        let end = integrate(
            |y: &[f64; 1]| Ok([y[0]]),
            [1.0],
            10.0,
            |y| 2.0 - y[0],
            |_, _| Ok(()),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(end.event);
        assert!((end.t - 2f64.ln()).abs() < 1e-10);
    }
}
