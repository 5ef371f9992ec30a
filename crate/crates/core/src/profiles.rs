//! Closed-form coefficient and source profiles.
//!
//! Profiles are parameterised in `f64` and evaluated in any [`Real`] type, so
//! the same description drives grid sampling and the pointwise geometry code.

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

/// `ψ(r) = exp(1 − 1/(1 − r²))` for `r < 1`, zero otherwise. `ψ(0) = 1`.
pub fn smooth_bump<T: Real>(r: T) -> T {
    let one = T::one();
    if r.abs() >= one {
        return T::zero();
    }
    (one - one / (one - r * r)).exp()
}

/// `dψ/dr`.
pub fn smooth_bump_derivative<T: Real>(r: T) -> T {
    let one = T::one();
    if r.abs() >= one {
        return T::zero();
    }
    let q = one - r * r;
    -smooth_bump(r) * lit::<T>(2.0) * r / (q * q)
}

fn radial_bump<T: Real>(x: T, y: T, cx: f64, cy: f64, radius: f64) -> (T, [T; 2]) {
    let dx = x - lit(cx);
    let dy = y - lit(cy);
    let rad: T = lit(radius);
    let d = (dx * dx + dy * dy).sqrt();
    let r = d / rad;
    let v = smooth_bump(r);
    if d == T::zero() {
        return (v, [T::zero(); 2]);
    }
    let dr = smooth_bump_derivative(r) / rad;
    (v, [dr * dx / d, dr * dy / d])
}

/// Sound speed `c(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpeedProfile {
    /// `c ≡ value`.
    Constant(f64),
    /// `c = 1 + amp·ψ(|x − center| / radius)`.
    Bump {
        amp: f64,
        cx: f64,
        cy: f64,
        radius: f64,
    },
    /// `c = 1 + k|x|²`.
    Radial { k: f64 },
    /// `c = 1 + gx·x + gy·y`.
    Linear { gx: f64, gy: f64 },
}

impl SpeedProfile {
    pub fn speed<T: Real>(&self, x: T, y: T) -> T {
        match *self {
            SpeedProfile::Constant(c) => lit(c),
            SpeedProfile::Bump {
                amp,
                cx,
                cy,
                radius,
            } => T::one() + lit::<T>(amp) * radial_bump(x, y, cx, cy, radius).0,
            SpeedProfile::Radial { k } => T::one() + lit::<T>(k) * (x * x + y * y),
            SpeedProfile::Linear { gx, gy } => T::one() + lit::<T>(gx) * x + lit::<T>(gy) * y,
        }
    }

    pub fn gradient<T: Real>(&self, x: T, y: T) -> [T; 2] {
        match *self {
            SpeedProfile::Constant(_) => [T::zero(); 2],
            SpeedProfile::Bump {
                amp,
                cx,
                cy,
                radius,
            } => {
                let g = radial_bump(x, y, cx, cy, radius).1;
                [lit::<T>(amp) * g[0], lit::<T>(amp) * g[1]]
            }
            SpeedProfile::Radial { k } => {
                let two_k: T = lit(2.0 * k);
                [two_k * x, two_k * y]
            }
            SpeedProfile::Linear { gx, gy } => [lit(gx), lit(gy)],
        }
    }

    /// Upper bound of `c` over the box `[x0,x1]×[y0,y1]`.
    pub fn max_over_box(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        match *self {
            SpeedProfile::Constant(c) => c,
            SpeedProfile::Bump { amp, .. } => 1.0 + amp.max(0.0),
            _ => {
                let n = 200;
                let mut m = f64::MIN;
                for i in 0..=n {
                    for j in 0..=n {
                        let x = x0 + (x1 - x0) * i as f64 / n as f64;
                        let y = y0 + (y1 - y0) * j as f64 / n as f64;
                        m = m.max(self.speed(x, y));
                    }
                }
                m
            }
        }
    }
}

/// Damping coefficient `a(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DampingProfile {
    None,
    /// `a = amp·ψ(|x − center| / radius)`.
    Bump {
        amp: f64,
        cx: f64,
        cy: f64,
        radius: f64,
    },
}

impl DampingProfile {
    pub fn damping<T: Real>(&self, x: T, y: T) -> T {
        match *self {
            DampingProfile::None => T::zero(),
            DampingProfile::Bump {
                amp,
                cx,
                cy,
                radius,
            } => lit::<T>(amp) * radial_bump(x, y, cx, cy, radius).0,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            DampingProfile::None => 0.0,
            DampingProfile::Bump { amp, .. } => amp.abs(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            DampingProfile::None => DampingProfile::None,
            DampingProfile::Bump {
                amp,
                cx,
                cy,
                radius,
            } => DampingProfile::Bump {
                amp: amp * factor,
                cx,
                cy,
                radius,
            },
        }
    }
}

/// Initial pressure `u₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceProfile {
    Zero,
    /// `amp·exp(−|x − center|²/σ²)`, truncated at `6σ` where it is below 3e-16.
    Gaussian {
        amp: f64,
        cx: f64,
        cy: f64,
        sigma: f64,
    },
    /// `amp·ψ(|x − center| / radius)`.
    Bump {
        amp: f64,
        cx: f64,
        cy: f64,
        radius: f64,
    },
    /// `amp·ψ(|x − center| / radius)·cos(k·(x − center) + phase)`.
    WavePacket {
        amp: f64,
        cx: f64,
        cy: f64,
        radius: f64,
        kx: f64,
        ky: f64,
        phase: f64,
    },
}

impl SourceProfile {
    pub fn center(&self) -> (f64, f64) {
        match *self {
            SourceProfile::Zero => (0.0, 0.0),
            SourceProfile::Gaussian { cx, cy, .. }
            | SourceProfile::Bump { cx, cy, .. }
            | SourceProfile::WavePacket { cx, cy, .. } => (cx, cy),
        }
    }

    /// Radius of the closed disk outside which the profile is exactly zero.
    pub fn support_radius(&self) -> f64 {
        match *self {
            SourceProfile::Zero => 0.0,
            SourceProfile::Gaussian { sigma, .. } => 6.0 * sigma,
            SourceProfile::Bump { radius, .. } | SourceProfile::WavePacket { radius, .. } => radius,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        let dx = x - cx;
        let dy = y - cy;
        let d = (dx * dx + dy * dy).sqrt();
        match *self {
            SourceProfile::Zero => 0.0,
            SourceProfile::Gaussian { amp, sigma, .. } => {
                if d >= 6.0 * sigma {
                    0.0
                } else {
                    amp * (-(d * d) / (sigma * sigma)).exp()
                }
            }
            SourceProfile::Bump { amp, radius, .. } => amp * smooth_bump(d / radius),
            SourceProfile::WavePacket {
                amp,
                radius,
                kx,
                ky,
                phase,
                ..
            } => amp * smooth_bump(d / radius) * (kx * dx + ky * dy + phase).cos(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_compact_and_peaks_at_one() {
        assert_eq!(smooth_bump(0.0f64), 1.0);
        assert_eq!(smooth_bump(1.0f64), 0.0);
        assert_eq!(smooth_bump(1.5f64), 0.0);
        assert!(smooth_bump(0.99f64) > 0.0);
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let profiles = [
            SpeedProfile::Bump {
                amp: 0.2,
                cx: 0.1,
                cy: -0.2,
                radius: 0.6,
            },
            SpeedProfile::Radial { k: 0.3 },
            SpeedProfile::Linear { gx: 0.2, gy: -0.1 },
        ];
        let eps = 1e-6;
        for p in profiles {
            for &(x, y) in &[(0.3, 0.1), (-0.2, 0.25), (0.0, -0.5)] {
                let g: [f64; 2] = p.gradient(x, y);
                let fx = (p.speed::<f64>(x + eps, y) - p.speed(x - eps, y)) / (2.0 * eps);
                let fy = (p.speed::<f64>(x, y + eps) - p.speed(x, y - eps)) / (2.0 * eps);
                assert!((g[0] - fx).abs() < 1e-7 && (g[1] - fy).abs() < 1e-7, "{p:?}");
            }
        }
    }

    #[test]
    fn gaussian_truncation_is_below_rounding() {
        let s = SourceProfile::Gaussian {
            amp: 1.0,
            cx: 0.0,
            cy: 0.0,
            sigma: 0.1,
        };
        assert!(s.value(0.5999, 0.0) < 1e-15);
        assert_eq!(s.value(0.6 + 1e-12, 0.0), 0.0);
    }
}
