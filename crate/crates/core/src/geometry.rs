//! Geometry of the sound-speed metric `g = c⁻²dx²`: foliations given as
//! level sets `Σ_s = {ρ = s}`, their unit normal field `ν`, the distance
//! `dist_ν` along its integral curves, leaf convexity, the region of
//! influence, and the times `T₀` and `T₁`.
//!
//! `ν = −c∇ρ/|∇ρ|`, so `ν` is `g`-unit and points towards decreasing `ρ`.
//! For `ρ = |x|` that is the inward normal of each circle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainShape, Field, Grid2D, Observation};
use crate::ode::{integrate, OdeOptions};
use crate::profiles::SpeedProfile;

const EPS_GRAD: f64 = 1e-9;

/// The conformal metric `c⁻²dx²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundMetric {
    speed: SpeedProfile,
}

impl SoundMetric {
    pub fn new(speed: SpeedProfile) -> Self {
        Self { speed }
    }

    pub fn speed_profile(&self) -> &SpeedProfile {
        &self.speed
    }

    pub fn c(&self, p: [f64; 2]) -> f64 {
        self.speed.speed(p[0], p[1])
    }

    pub fn grad_c(&self, p: [f64; 2]) -> [f64; 2] {
        self.speed.gradient(p[0], p[1])
    }

    /// `|v|_g = |v|/c`.
    pub fn norm(&self, p: [f64; 2], v: [f64; 2]) -> f64 {
        v[0].hypot(v[1]) / self.c(p)
    }
}

/// Level function `ρ` of a foliation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelFunction {
    /// `ρ = |x − center|`
    Radial { cx: f64, cy: f64 },
    /// `ρ = |((x − cx)/a, (y − cy)/b)|`
    Elliptic { cx: f64, cy: f64, a: f64, b: f64 },
    /// `ρ = x cos θ + y sin θ`. Leaves are sampled for `|t| ≤ half_length` along the line.
    Linear { angle: f64, half_length: f64 },
}

impl LevelFunction {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match *self {
            LevelFunction::Radial { cx, cy } => (p[0] - cx).hypot(p[1] - cy),
            LevelFunction::Elliptic { cx, cy, a, b } => ((p[0] - cx) / a).hypot((p[1] - cy) / b),
            LevelFunction::Linear { angle, .. } => p[0] * angle.cos() + p[1] * angle.sin(),
        }
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            LevelFunction::Radial { cx, cy } => {
                let (dx, dy) = (p[0] - cx, p[1] - cy);
                let r = dx.hypot(dy);
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [dx / r, dy / r]
                }
            }
            LevelFunction::Elliptic { cx, cy, a, b } => {
                let (u, v) = ((p[0] - cx) / a, (p[1] - cy) / b);
                let r = u.hypot(v);
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [u / (a * r), v / (b * r)]
                }
            }
            LevelFunction::Linear { angle, .. } => [angle.cos(), angle.sin()],
        }
    }

    pub fn is_closed(&self) -> bool {
        !matches!(self, LevelFunction::Linear { .. })
    }

    /// Point of `Σ_s` at parameter `u`, one period per unit `u` for closed leaves.
    pub fn leaf_point(&self, s: f64, u: f64) -> [f64; 2] {
        let th = std::f64::consts::TAU * u;
        match *self {
            LevelFunction::Radial { cx, cy } => [cx + s * th.cos(), cy + s * th.sin()],
            LevelFunction::Elliptic { cx, cy, a, b } => [cx + s * a * th.cos(), cy + s * b * th.sin()],
            LevelFunction::Linear { angle, half_length } => {
                let t = (2.0 * u - 1.0) * half_length;
                let (c, sn) = (angle.cos(), angle.sin());
                [s * c - t * sn, s * sn + t * c]
            }
        }
    }

    /// Sample parameters for `n` points of a leaf.
    fn sample_parameter(&self, i: usize, n: usize) -> f64 {
        if self.is_closed() {
            i as f64 / n as f64
        } else {
            (i as f64 + 0.5) / n as f64
        }
    }
}

/// Leaves `{ρ = s}` for `s ∈ [s_lo, s_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoliationSpec {
    pub rho: LevelFunction,
    pub s_lo: f64,
    pub s_hi: f64,
}

impl FoliationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_lo.is_finite() && self.s_hi.is_finite() && self.s_lo < self.s_hi) {
            return Err(Error::Unsupported(format!(
                "foliation range [{}, {}] is empty",
                self.s_lo, self.s_hi
            )));
        }
        Ok(())
    }

    pub fn in_band(&self, p: [f64; 2]) -> bool {
        let r = self.rho.value(p);
        r >= self.s_lo && r <= self.s_hi
    }
}

/// Axis-aligned box standing in for `Ω₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bounds {
    pub fn from_grid(grid: &Grid2D) -> Self {
        let (ox, oy) = grid.origin();
        let h = grid.h();
        Self {
            x0: ox,
            x1: ox + (grid.nx() - 1) as f64 * h,
            y0: oy,
            y1: oy + (grid.ny() - 1) as f64 * h,
        }
    }

    /// Distance to the box edge, negative outside.
    pub fn margin(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.x0).min(self.x1 - p[0]).min(p[1] - self.y0).min(self.y1 - p[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.margin(p) >= 0.0
    }
}

/// Geodesic equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GeodesicForm {
    /// `ẍ = −2(ẋ·∇φ)ẋ + |ẋ|²∇φ` with `φ = −log c`
    #[default]
    Lagrangian,
    /// `ẋ = c²ξ`, `ξ̇ = −c∇c|ξ|²`
    Hamiltonian,
}

/// End of an integral curve of `±ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveTrace {
    /// accumulated `∫|ẋ|_g dr`
    pub length: f64,
    pub end: [f64; 2],
    /// `ρ` was strictly monotone along the accepted steps
    pub monotone: bool,
}

/// Outcome of one geodesic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayEnd {
    /// `g`-length at the first exit from `Ω`, if any
    pub exit_time: Option<f64>,
    pub end: [f64; 2],
    /// cosine between the exit velocity and the outward normal
    pub exit_cos: f64,
    /// `max |(|ẋ|_g − 1)|` along the ray
    pub speed_drift: f64,
}

/// Curvature audit of one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafConvexity {
    pub s: f64,
    /// `κ̲`, the minimum over samples
    pub kappa: f64,
    /// `κ̄`
    pub kappa_max: f64,
    pub samples: Vec<f64>,
    pub pass: bool,
}

/// Widest collars around a leaf on which normal geodesics stay ordered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollarWidth {
    pub s: f64,
    pub inward: f64,
    pub outward: f64,
}

/// `τ(x) = T − dist_ν(x, Σ_{s₀})` and `D_{Σ,T} = {τ > 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRegion {
    /// zero off the band
    pub tau: Field<f64>,
    pub mask: Vec<bool>,
    /// nodes of `Ω` whose curves reach `Σ_{s₀}`
    pub band: Vec<bool>,
    pub s0: f64,
    /// innermost level inside the region
    pub s_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T0Report {
    pub t0: f64,
    pub argmax: Option<usize>,
    pub s0: f64,
    pub unreachable: Vec<usize>,
    /// largest number of `Γ` crossings of one traced curve
    pub max_gamma_crossings: usize,
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VisibilityMode {
    /// rays from `𝒦` must leave through `Γ`
    Partial,
    /// half the longest boundary-to-boundary geodesic
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T1Config {
    pub n_directions: usize,
    /// boundary start points, full mode
    pub n_boundary: usize,
    /// exits with `cos` below this are tangential
    pub tangency_cos: f64,
    pub length_cap: f64,
    pub form: GeodesicForm,
    /// every `stride`-th node of `𝒦`, partial mode
    pub stride: usize,
}

impl Default for T1Config {
    fn default() -> Self {
        Self {
            n_directions: 33,
            n_boundary: 64,
            tangency_cos: 0.05,
            length_cap: 20.0,
            form: GeodesicForm::Lagrangian,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayFailure {
    Tangential,
    OutsideGamma,
    /// length cap hit, possibly trapped
    NoExit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRecord {
    pub origin: [f64; 2],
    pub direction: f64,
    pub exit_time: Option<f64>,
    pub exit_cos: f64,
    pub failure: Option<RayFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T1Report {
    pub t1: f64,
    pub mode: VisibilityMode,
    pub rays: usize,
    pub failures: Vec<RayRecord>,
    pub max_speed_drift: f64,
    /// longest exit time or chord
    pub longest: f64,
}

/// Constants of `dist_ν ≤ C₁ dist_g` and `|dist_ν − dist_g| ≤ C₂ dist_ν²`
/// fitted on offsets `δ, δ/2, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct NearLeafFit {
    pub offsets: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub points: usize,
}

/// Metric, foliation and the box `Ω₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub metric: SoundMetric,
    pub foliation: FoliationSpec,
    pub bounds: Bounds,
    pub ode: OdeOptions,
    pub max_length: f64,
}

impl Geometry {
    pub fn new(metric: SoundMetric, foliation: FoliationSpec, bounds: Bounds) -> Result<Self> {
        foliation.validate()?;
        Ok(Self {
            metric,
            foliation,
            bounds,
            ode: OdeOptions::default(),
            max_length: 20.0,
        })
    }

    pub fn for_grid(metric: SoundMetric, foliation: FoliationSpec, grid: &Grid2D) -> Result<Self> {
        Self::new(metric, foliation, Bounds::from_grid(grid))
    }

    fn rho(&self, p: [f64; 2]) -> f64 {
        self.foliation.rho.value(p)
    }

    /// `ν(p) = −c∇ρ/|∇ρ|`.
    pub fn normal(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let g = self.foliation.rho.gradient(p);
        let n = g[0].hypot(g[1]);
        if !(n >= EPS_GRAD) {
            return Err(Error::DegenerateGradient { x: p[0], y: p[1] });
        }
        let c = self.metric.c(p);
        Ok([-c * g[0] / n, -c * g[1] / n])
    }

    /// `ν` on the nodes of `grid` inside the band, zero elsewhere.
    pub fn normal_field(&self, grid: &Grid2D) -> Result<(Vec<[f64; 2]>, Vec<bool>)> {
        let mut field = vec![[0.0; 2]; grid.len()];
        let mut band = vec![false; grid.len()];
        for k in 0..grid.len() {
            let (x, y) = grid.coords(k);
            if self.foliation.in_band([x, y]) {
                field[k] = self.normal([x, y])?;
                band[k] = true;
            }
        }
        Ok((field, band))
    }

    /// Follows `±ν` from `p` until `ρ = target`.
    pub fn trace_to_level(&self, p: [f64; 2], target: f64) -> Result<CurveTrace> {
        let r0 = self.rho(p);
        if r0 == target {
            return Ok(CurveTrace {
                length: 0.0,
                end: p,
                monotone: true,
            });
        }
        let sign = if r0 > target { 1.0 } else { -1.0 };
        let rhs = |y: &[f64; 3]| -> Result<[f64; 3]> {
            let q = [y[0], y[1]];
            let n = self.normal(q)?;
            let v = [sign * n[0], sign * n[1]];
            Ok([v[0], v[1], self.metric.norm(q, v)])
        };
        let mut prev = r0;
        let mut monotone = true;
        let observe = |t: f64, y: &[f64; 3]| -> Result<()> {
            let q = [y[0], y[1]];
            if !self.bounds.contains(q) {
                return Err(Error::CurveExit { x: q[0], y: q[1] });
            }
            let r = self.rho(q);
            if t > 0.0 && sign * (prev - r) <= 0.0 {
                monotone = false;
            }
            prev = r;
            Ok(())
        };
        let end = integrate(
            rhs,
            [p[0], p[1], 0.0],
            self.max_length,
            |y| sign * (self.rho([y[0], y[1]]) - target),
            observe,
            &self.ode,
        )?;
        if !end.event {
            return Err(Error::LengthCapExceeded { cap: self.max_length });
        }
        Ok(CurveTrace {
            length: end.y[2],
            end: [end.y[0], end.y[1]],
            monotone,
        })
    }

    /// `g`-length of the integral curve of `ν` from `p` to `Σ_target`.
    pub fn dist_nu(&self, p: [f64; 2], target: f64) -> Result<f64> {
        Ok(self.trace_to_level(p, target)?.length)
    }

    /// Point reached from `p` after `g`-length `len` along `ν` (`len < 0` follows `−ν`).
    pub fn flow(&self, p: [f64; 2], len: f64) -> Result<[f64; 2]> {
        let sign = len.signum();
        let end = integrate(
            |y: &[f64; 2]| {
                let n = self.normal(*y)?;
                Ok([sign * n[0], sign * n[1]])
            },
            p,
            len.abs(),
            |_| 1.0,
            |_, y| {
                if self.bounds.contains(*y) {
                    Ok(())
                } else {
                    Err(Error::CurveExit { x: y[0], y: y[1] })
                }
            },
            &self.ode,
        )?;
        Ok(end.y)
    }

    fn geodesic_rhs(&self, form: GeodesicForm, y: &[f64; 4]) -> [f64; 4] {
        let p = [y[0], y[1]];
        let c = self.metric.c(p);
        let gc = self.metric.grad_c(p);
        match form {
            GeodesicForm::Lagrangian => {
                let (vx, vy) = (y[2], y[3]);
                let gp = [-gc[0] / c, -gc[1] / c];
                let dot = vx * gp[0] + vy * gp[1];
                let v2 = vx * vx + vy * vy;
                [vx, vy, -2.0 * dot * vx + v2 * gp[0], -2.0 * dot * vy + v2 * gp[1]]
            }
            GeodesicForm::Hamiltonian => {
                let (kx, ky) = (y[2], y[3]);
                let k2 = kx * kx + ky * ky;
                [c * c * kx, c * c * ky, -c * gc[0] * k2, -c * gc[1] * k2]
            }
        }
    }

    fn geodesic_state(&self, form: GeodesicForm, p: [f64; 2], dir: [f64; 2]) -> [f64; 4] {
        let c = self.metric.c(p);
        let n = dir[0].hypot(dir[1]);
        let u = [dir[0] / n, dir[1] / n];
        match form {
            GeodesicForm::Lagrangian => [p[0], p[1], c * u[0], c * u[1]],
            GeodesicForm::Hamiltonian => [p[0], p[1], u[0] / c, u[1] / c],
        }
    }

    fn geodesic_velocity(&self, form: GeodesicForm, y: &[f64; 4]) -> [f64; 2] {
        match form {
            GeodesicForm::Lagrangian => [y[2], y[3]],
            GeodesicForm::Hamiltonian => {
                let c = self.metric.c([y[0], y[1]]);
                [c * c * y[2], c * c * y[3]]
            }
        }
    }

    /// Unit-speed geodesic from `p` in direction `dir`, run for `g`-length `len`.
    pub fn geodesic_point(&self, p: [f64; 2], dir: [f64; 2], len: f64, form: GeodesicForm) -> Result<[f64; 2]> {
        let end = integrate(
            |y: &[f64; 4]| Ok(self.geodesic_rhs(form, y)),
            self.geodesic_state(form, p, dir),
            len,
            |_| 1.0,
            |_, y| {
                if self.bounds.contains([y[0], y[1]]) {
                    Ok(())
                } else {
                    Err(Error::CurveExit { x: y[0], y: y[1] })
                }
            },
            &self.ode,
        )?;
        Ok([end.y[0], end.y[1]])
    }

    /// Shoots a unit-speed geodesic until it leaves `shape` or reaches `cap`.
    pub fn shoot(&self, shape: &DomainShape, p: [f64; 2], dir: [f64; 2], cap: f64, form: GeodesicForm) -> Result<RayEnd> {
        let mut drift = 0.0f64;
        let end = integrate(
            |y: &[f64; 4]| Ok(self.geodesic_rhs(form, y)),
            self.geodesic_state(form, p, dir),
            cap,
            |y| -shape.signed(y[0], y[1]),
            |_, y| {
                let v = self.geodesic_velocity(form, y);
                drift = drift.max((self.metric.norm([y[0], y[1]], v) - 1.0).abs());
                Ok(())
            },
            &self.ode,
        )?;
        let q = [end.y[0], end.y[1]];
        let v = self.geodesic_velocity(form, &end.y);
        let n = shape.outward_normal(q[0], q[1]);
        Ok(RayEnd {
            exit_time: end.event.then_some(end.t),
            end: q,
            exit_cos: (v[0] * n[0] + v[1] * n[1]) / v[0].hypot(v[1]),
            speed_drift: drift,
        })
    }

    /// Length of the geodesic from `p` in direction angle `phi` until it meets `Σ_s`.
    fn geodesic_length_to_leaf(&self, p: [f64; 2], phi: f64, s: f64) -> f64 {
        let sign = if self.rho(p) < s { 1.0 } else { -1.0 };
        let form = GeodesicForm::Lagrangian;
        let r = integrate(
            |y: &[f64; 4]| Ok(self.geodesic_rhs(form, y)),
            self.geodesic_state(form, p, [phi.cos(), phi.sin()]),
            self.max_length,
            |y| sign * (s - self.rho([y[0], y[1]])),
            |_, y| {
                if self.bounds.contains([y[0], y[1]]) {
                    Ok(())
                } else {
                    Err(Error::CurveExit { x: y[0], y: y[1] })
                }
            },
            &self.ode,
        );
        match r {
            Ok(end) if end.event => end.t,
            _ => f64::INFINITY,
        }
    }

    /// `dist_g(p, Σ_s)` by minimising the geodesic length over the launch angle.
    pub fn dist_g_to_leaf(&self, p: [f64; 2], s: f64) -> Result<f64> {
        let toward = {
            let n = self.normal(p)?;
            if self.rho(p) < s {
                [-n[0], -n[1]]
            } else {
                n
            }
        };
        let phi0 = toward[1].atan2(toward[0]);
        let f = |phi: f64| self.geodesic_length_to_leaf(p, phi, s);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (phi0 - 0.6, phi0 + 0.6);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while b - a > 1e-9 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        let d = f1.min(f2);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::LengthCapExceeded { cap: self.max_length })
        }
    }

    fn leaf_samples(&self, s: f64, n: usize, spacing: f64) -> Result<Vec<([f64; 2], [f64; 2], [f64; 2], f64)>> {
        let rho = self.foliation.rho;
        (0..n)
            .map(|i| {
                let u = rho.sample_parameter(i, n);
                let e = 1e-6;
                let a = rho.leaf_point(s, u - e);
                let b = rho.leaf_point(s, u + e);
                let speed = (b[0] - a[0]).hypot(b[1] - a[1]) / (2.0 * e);
                if speed == 0.0 {
                    return Err(Error::LeafNotFound {
                        level: s,
                        reason: "degenerate parametrisation".into(),
                    });
                }
                let du = spacing / speed;
                let p = rho.leaf_point(s, u);
                let pm = rho.leaf_point(s, u - du);
                let pp = rho.leaf_point(s, u + du);
                for q in [p, pm, pp] {
                    if !self.bounds.contains(q) {
                        return Err(Error::LeafNotFound {
                            level: s,
                            reason: format!("sample ({:.4}, {:.4}) outside the grid", q[0], q[1]),
                        });
                    }
                }
                Ok((p, pm, pp, du))
            })
            .collect()
    }

    /// Principal curvature of `Σ_s` in the metric `g`, with positive values
    /// for leaves curving towards `ν`.
    ///
    /// At each sample two neighbouring leaf points are pushed along normal
    /// geodesics by `±delta`; the induced inverse metric `g^{uu}(m)` of the
    /// leaf parameter then gives `κ = ½∂_m g^{uu}/g^{uu}` by central differences.
    /// In two dimensions the tangent covectors form a line, so the minimum
    /// over unit covectors is this single quotient.
    pub fn convexity(&self, s: f64, n_samples: usize, delta: f64) -> Result<LeafConvexity> {
        if n_samples < 64 {
            return Err(Error::Unsupported(format!("{n_samples} leaf samples, at least 64 needed")));
        }
        let samples = self.leaf_samples(s, n_samples, delta)?;
        let kappas: Vec<f64> = samples
            .par_iter()
            .map(|&(_, pm, pp, du)| {
                let ginv = |m: f64| -> Result<f64> {
                    let (qm, qp) = if m == 0.0 {
                        (pm, pp)
                    } else {
                        let dm = self.normal(pm)?;
                        let dp = self.normal(pp)?;
                        let sg = m.signum();
                        (
                            self.geodesic_point(pm, [sg * dm[0], sg * dm[1]], m.abs(), GeodesicForm::Lagrangian)?,
                            self.geodesic_point(pp, [sg * dp[0], sg * dp[1]], m.abs(), GeodesicForm::Lagrangian)?,
                        )
                    };
                    let mid = [0.5 * (qm[0] + qp[0]), 0.5 * (qm[1] + qp[1])];
                    let len = (qp[0] - qm[0]).hypot(qp[1] - qm[1]) / self.metric.c(mid);
                    Ok((2.0 * du / len).powi(2))
                };
                let (g_in, g0, g_out) = (ginv(delta)?, ginv(0.0)?, ginv(-delta)?);
                Ok(0.5 * (g_in - g_out) / (2.0 * delta) / g0)
            })
            .collect::<Result<_>>()?;
        let kappa = kappas.iter().copied().fold(f64::INFINITY, f64::min);
        let kappa_max = kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(LeafConvexity {
            s,
            kappa,
            kappa_max,
            samples: kappas,
            pass: kappa > 0.0,
        })
    }

    /// Largest collar widths (in `g`-length, up to `max_width`) over which
    /// the normal geodesics of `Σ_s` keep their order, sampled at 64 stations.
    pub fn collar_width(&self, s: f64, n_samples: usize, max_width: f64) -> Result<CollarWidth> {
        let rho = self.foliation.rho;
        let closed = rho.is_closed();
        let pts: Vec<[f64; 2]> = (0..n_samples)
            .map(|i| rho.leaf_point(s, rho.sample_parameter(i, n_samples)))
            .collect();
        let stations = 64;
        let dm = max_width / stations as f64;
        let width = |sign: f64| -> Result<f64> {
            let form = GeodesicForm::Lagrangian;
            let mut states: Vec<[f64; 4]> = pts
                .iter()
                .map(|&p| {
                    let n = self.normal(p)?;
                    Ok(self.geodesic_state(form, p, [sign * n[0], sign * n[1]]))
                })
                .collect::<Result<_>>()?;
            let orient = |st: &[[f64; 4]]| -> Vec<f64> {
                let m = st.len();
                let pairs = if closed { m } else { m - 1 };
                (0..pairs)
                    .map(|i| {
                        let a = &st[i];
                        let b = &st[(i + 1) % m];
                        let v = self.geodesic_velocity(form, a);
                        (b[0] - a[0]) * v[1] - (b[1] - a[1]) * v[0]
                    })
                    .collect()
            };
            let base = orient(&states);
            for k in 1..=stations {
                let next: Vec<Result<[f64; 4]>> = states
                    .par_iter()
                    .map(|st| {
                        let end = integrate(
                            |y: &[f64; 4]| Ok(self.geodesic_rhs(form, y)),
                            *st,
                            dm,
                            |_| 1.0,
                            |_, _| Ok(()),
                            &self.ode,
                        )?;
                        Ok(end.y)
                    })
                    .collect();
                let mut moved = Vec::with_capacity(states.len());
                for st in next {
                    let st = st?;
                    if !self.bounds.contains([st[0], st[1]]) {
                        return Ok((k - 1) as f64 * dm);
                    }
                    moved.push(st);
                }
                let now = orient(&moved);
                if now.iter().zip(&base).any(|(a, b)| a * b <= 0.0) {
                    return Ok((k - 1) as f64 * dm);
                }
                states = moved;
            }
            Ok(max_width)
        };
        Ok(CollarWidth {
            s,
            inward: width(1.0)?,
            outward: width(-1.0)?,
        })
    }

    /// `s₀`: the outermost leaf of the band meeting `Ω̄`.
    pub fn first_leaf(&self, shape: &DomainShape) -> f64 {
        let top = (0..4096)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / 4096.0;
                self.rho(boundary_point(shape, th))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        top.min(self.foliation.s_hi)
    }

    /// Number of times the integral curve of `−ν` through `p` leaves `Ω` through `Γ`.
    pub fn gamma_crossings(&self, p: [f64; 2], shape: &DomainShape, obs: &Observation) -> Result<usize> {
        let mut inside = shape.signed(p[0], p[1]) < 0.0;
        let mut count = 0;
        integrate(
            |y: &[f64; 2]| {
                let n = self.normal(*y)?;
                Ok([-n[0], -n[1]])
            },
            p,
            self.max_length,
            |y| self.bounds.margin(*y),
            |_, y| {
                let now = shape.signed(y[0], y[1]) < 0.0;
                if inside && !now && obs.contains_angle(shape.angle(y[0], y[1])) {
                    count += 1;
                }
                inside = now;
                Ok(())
            },
            &self.ode,
        )?;
        Ok(count)
    }

    /// Region of influence for observation time `t` on the nodes of `Ω`.
    pub fn influence_region(&self, grid: &Grid2D, t: f64) -> Result<InfluenceRegion> {
        let s0 = self.first_leaf(grid.shape());
        let omega = grid.omega_mask();
        let dists: Vec<Option<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.coords(k);
                let r = self.rho([x, y]);
                if !omega[k] || r < self.foliation.s_lo || r > s0 {
                    return None;
                }
                self.dist_nu([x, y], s0).ok()
            })
            .collect();
        let mut tau = vec![0.0; grid.len()];
        let mut mask = vec![false; grid.len()];
        let mut band = vec![false; grid.len()];
        let mut s_t = f64::INFINITY;
        for (k, d) in dists.iter().enumerate() {
            if let Some(d) = d {
                band[k] = true;
                tau[k] = t - d;
                if tau[k] > 0.0 {
                    mask[k] = true;
                    let (x, y) = grid.coords(k);
                    s_t = s_t.min(self.rho([x, y]));
                }
            }
        }
        Ok(InfluenceRegion {
            tau: Field::from_values(grid.nx(), grid.ny(), tau)?,
            mask,
            band,
            s0,
            s_t: if s_t.is_finite() { s_t } else { s0 },
        })
    }

    /// `T₀ = max_{x∈𝒦} dist_ν(x, Σ_{s₀})` over the nodes in `k_mask`.
    pub fn t0_report(&self, grid: &Grid2D, k_mask: &[bool]) -> Result<T0Report> {
        if k_mask.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: k_mask.len(),
            });
        }
        let s0 = self.first_leaf(grid.shape());
        let nodes: Vec<usize> = (0..grid.len()).filter(|&k| k_mask[k]).collect();
        let out: Vec<(usize, Option<(f64, bool, usize)>)> = nodes
            .par_iter()
            .map(|&k| {
                let (x, y) = grid.coords(k);
                let r = self.rho([x, y]);
                if r < self.foliation.s_lo || r > s0 {
                    return (k, None);
                }
                let res = self.trace_to_level([x, y], s0).and_then(|tr| {
                    let n = self.gamma_crossings([x, y], grid.shape(), grid.observation())?;
                    Ok((tr.length, tr.monotone, n))
                });
                (k, res.ok())
            })
            .collect();
        let mut rep = T0Report {
            t0: 0.0,
            argmax: None,
            s0,
            unreachable: Vec::new(),
            max_gamma_crossings: 0,
            monotone: true,
        };
        for (k, r) in out {
            match r {
                None => rep.unreachable.push(k),
                Some((d, mono, n)) => {
                    if rep.argmax.is_none() || d > rep.t0 {
                        rep.t0 = d;
                        rep.argmax = Some(k);
                    }
                    rep.monotone &= mono;
                    rep.max_gamma_crossings = rep.max_gamma_crossings.max(n);
                }
            }
        }
        Ok(rep)
    }

    /// Visibility time `T₁` by geodesic shooting.
    pub fn t1_report(&self, grid: &Grid2D, k_mask: Option<&[bool]>, mode: VisibilityMode, cfg: &T1Config) -> Result<T1Report> {
        let shape = grid.shape();
        let obs = grid.observation();
        let mut launches: Vec<([f64; 2], f64)> = Vec::new();
        match mode {
            VisibilityMode::Full => {
                for i in 0..cfg.n_boundary {
                    let th = std::f64::consts::TAU * i as f64 / cfg.n_boundary as f64;
                    let p = boundary_point(shape, th);
                    let n = shape.outward_normal(p[0], p[1]);
                    let inward = (-n[1]).atan2(-n[0]);
                    for j in 0..cfg.n_directions {
                        let psi = -std::f64::consts::FRAC_PI_2
                            + std::f64::consts::PI * (j + 1) as f64 / (cfg.n_directions + 1) as f64;
                        launches.push((p, inward + psi));
                    }
                }
            }
            VisibilityMode::Partial => {
                let mask = k_mask.ok_or_else(|| Error::Unsupported("partial mode needs a source set".into()))?;
                if mask.len() != grid.len() {
                    return Err(Error::LengthMismatch {
                        expected: grid.len(),
                        found: mask.len(),
                    });
                }
                let stride = cfg.stride.max(1);
                for k in (0..grid.len()).filter(|&k| mask[k]).step_by(stride) {
                    let (x, y) = grid.coords(k);
                    for j in 0..cfg.n_directions {
                        launches.push(([x, y], std::f64::consts::TAU * j as f64 / cfg.n_directions as f64));
                    }
                }
            }
        }
        let ends: Vec<RayEnd> = launches
            .par_iter()
            .map(|&(p, phi)| self.shoot(shape, p, [phi.cos(), phi.sin()], cfg.length_cap, cfg.form))
            .collect::<Result<_>>()?;
        let mut rep = T1Report {
            t1: 0.0,
            mode,
            rays: ends.len(),
            failures: Vec::new(),
            max_speed_drift: 0.0,
            longest: 0.0,
        };
        for (&(origin, direction), end) in launches.iter().zip(&ends) {
            rep.max_speed_drift = rep.max_speed_drift.max(end.speed_drift);
            let failure = match end.exit_time {
                None => Some(RayFailure::NoExit),
                Some(_) if mode == VisibilityMode::Partial && !obs.contains_angle(shape.angle(end.end[0], end.end[1])) => {
                    Some(RayFailure::OutsideGamma)
                }
                Some(_) if mode == VisibilityMode::Partial && end.exit_cos < cfg.tangency_cos => Some(RayFailure::Tangential),
                Some(t) => {
                    rep.longest = rep.longest.max(t);
                    None
                }
            };
            if failure.is_some() {
                rep.failures.push(RayRecord {
                    origin,
                    direction,
                    exit_time: end.exit_time,
                    exit_cos: end.exit_cos,
                    failure,
                });
            }
        }
        rep.t1 = match mode {
            VisibilityMode::Full => 0.5 * rep.longest,
            VisibilityMode::Partial => rep.longest,
        };
        Ok(rep)
    }

    /// Fitted constants of the `dist_ν`/`dist_g` comparison near `Σ_s`. Level `k` of the result
    /// uses offsets `δ, δ/2, …, δ/2^k`; points sit at `dist_ν = offset`
    /// inside the leaf and `dist_g` comes from [`Geometry::dist_g_to_leaf`].
    pub fn near_leaf_fits(&self, s: f64, delta: f64, levels: usize, n_points: usize) -> Result<Vec<NearLeafFit>> {
        let rho = self.foliation.rho;
        let mut fits: Vec<NearLeafFit> = Vec::new();
        let (mut c1, mut c2, mut points) = (0.0f64, 0.0f64, 0usize);
        let mut offsets = Vec::new();
        for lvl in 0..=levels {
            let off = delta / 2f64.powi(lvl as i32);
            offsets.push(off);
            let pairs: Vec<(f64, f64)> = (0..n_points)
                .into_par_iter()
                .map(|i| {
                    let p = rho.leaf_point(s, rho.sample_parameter(i, n_points));
                    let x = self.flow(p, off)?;
                    let dn = self.dist_nu(x, s)?;
                    let dg = self.dist_g_to_leaf(x, s)?;
                    Ok((dn, dg))
                })
                .collect::<Result<_>>()?;
            for (dn, dg) in pairs {
                c1 = c1.max(dn / dg);
                c2 = c2.max((dn - dg).abs() / (dn * dn));
                points += 1;
            }
            fits.push(NearLeafFit {
                offsets: offsets.clone(),
                c1,
                c2,
                points,
            });
        }
        Ok(fits)
    }

    /// First-order fast-marching `dist_g` to `Σ_s` on the nodes of `grid`.
    pub fn leaf_distance_fmm(&self, grid: &Grid2D, s: f64) -> Result<Field<f64>> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut seeds = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.index(i, j);
                let (x, y) = grid.coords(k);
                let d = self.rho([x, y]) - s;
                let straddles = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                        return false;
                    }
                    let (x2, y2) = grid.coords(grid.index(a as usize, b as usize));
                    (self.rho([x2, y2]) - s) * d <= 0.0
                });
                if straddles {
                    let g = self.foliation.rho.gradient([x, y]);
                    let gn = g[0].hypot(g[1]);
                    if gn < EPS_GRAD {
                        return Err(Error::DegenerateGradient { x, y });
                    }
                    seeds.push((k, d.abs() / gn / self.metric.c([x, y])));
                }
            }
        }
        if seeds.is_empty() {
            return Err(Error::LeafNotFound {
                level: s,
                reason: "leaf does not cross the grid".into(),
            });
        }
        let speed: Vec<f64> = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                self.metric.c([x, y])
            })
            .collect();
        let t = fast_marching(nx, ny, grid.h(), &speed, &seeds);
        Field::from_values(nx, ny, t)
    }
}

/// Point of `∂Ω` at polar angle `theta` about the shape center.
pub fn boundary_point(shape: &DomainShape, theta: f64) -> [f64; 2] {
    let (cx, cy) = shape.center();
    let (hx, hy) = shape.half_extent();
    let (c, s) = (theta.cos(), theta.sin());
    let (mut lo, mut hi) = (0.0, 2.0 * hx.hypot(hy));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if shape.signed(cx + mid * c, cy + mid * s) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    [cx + r * c, cy + r * s]
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Travel times `|∇T| = 1/c` on an `nx × ny` lattice from fixed seed values.
pub fn fast_marching(nx: usize, ny: usize, h: f64, speed: &[f64], seeds: &[(usize, f64)]) -> Vec<f64> {
    let n = nx * ny;
    let mut t = vec![f64::INFINITY; n];
    let mut known = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(k, v) in seeds {
        if v < t[k] {
            t[k] = v;
            heap.push(HeapItem(v, k));
        }
    }
    let nb = |k: usize| -> [Option<usize>; 4] {
        let (i, j) = (k % nx, k / nx);
        [
            (i > 0).then(|| k - 1),
            (i + 1 < nx).then(|| k + 1),
            (j > 0).then(|| k - nx),
            (j + 1 < ny).then(|| k + nx),
        ]
    };
    while let Some(HeapItem(v, k)) = heap.pop() {
        if known[k] || v > t[k] {
            continue;
        }
        known[k] = true;
        for m in nb(k).into_iter().flatten() {
            if known[m] {
                continue;
            }
            let adj = nb(m);
            let pick = |a: Option<usize>, b: Option<usize>| {
                let va = a.filter(|&q| known[q]).map_or(f64::INFINITY, |q| t[q]);
                let vb = b.filter(|&q| known[q]).map_or(f64::INFINITY, |q| t[q]);
                va.min(vb)
            };
            let a = pick(adj[0], adj[1]);
            let b = pick(adj[2], adj[3]);
            let f = h / speed[m];
            let cand = if (a - b).abs() >= f || !a.is_finite() || !b.is_finite() {
                a.min(b) + f
            } else {
                0.5 * (a + b + (2.0 * f * f - (a - b).powi(2)).sqrt())
            };
            if cand < t[m] {
                t[m] = cand;
                heap.push(HeapItem(cand, m));
            }
        }
    }
    t
}

/// `ν` on the band nodes of `grid`.
pub fn leaf_normal_field(geom: &Geometry, grid: &Grid2D) -> Result<(Vec<[f64; 2]>, Vec<bool>)> {
    geom.normal_field(grid)
}

pub fn convexity_check(geom: &Geometry, s: f64, n_samples: usize, delta: f64) -> Result<LeafConvexity> {
    geom.convexity(s, n_samples, delta)
}

pub fn dist_nu(geom: &Geometry, x: [f64; 2], target_s: f64) -> Result<f64> {
    geom.dist_nu(x, target_s)
}

pub fn influence_region(geom: &Geometry, grid: &Grid2D, t: f64) -> Result<InfluenceRegion> {
    geom.influence_region(grid, t)
}

/// Fails with [`Error::Unreachable`] when a node of `𝒦` has no curve to `Σ_{s₀}`.
pub fn time_t0(geom: &Geometry, grid: &Grid2D, k_mask: &[bool]) -> Result<f64> {
    let rep = geom.t0_report(grid, k_mask)?;
    if !rep.unreachable.is_empty() {
        return Err(Error::Unreachable {
            count: rep.unreachable.len(),
        });
    }
    Ok(rep.t0)
}

pub fn time_t1(geom: &Geometry, grid: &Grid2D, k_mask: Option<&[bool]>, mode: VisibilityMode, cfg: &T1Config) -> Result<T1Report> {
    geom.t1_report(grid, k_mask, mode, cfg)
}
