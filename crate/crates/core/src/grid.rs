//! Cartesian grid, masks for `Ω ⊂ Ω₁`, media, sources and the discrete
//! harmonic extension.
//!
//! `Ω` is staircase-approximated: a node belongs to `Ω̄` when the shape's
//! signed function is non-positive there, boundary nodes are the `Ω̄` nodes
//! with a 4-neighbour outside, and every boundary node must touch an interior
//! node (dangling corner nodes are dropped from `Ω̄`). The outer ring of the
//! box is the homogeneous Dirichlet boundary `∂Ω₁`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::profiles::{DampingProfile, SourceProfile, SpeedProfile};
use crate::scalar::{lit, to_f64, Real};

/// Shape of the reconstruction domain `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainShape {
    Disk { cx: f64, cy: f64, r: f64 },
    Ellipse { cx: f64, cy: f64, a: f64, b: f64 },
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
}

impl DomainShape {
    pub fn unit_disk() -> Self {
        DomainShape::Disk {
            cx: 0.0,
            cy: 0.0,
            r: 1.0,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        match *self {
            DomainShape::Disk { cx, cy, .. }
            | DomainShape::Ellipse { cx, cy, .. }
            | DomainShape::Rect { cx, cy, .. } => (cx, cy),
        }
    }

    /// Half extents of the bounding box.
    pub fn half_extent(&self) -> (f64, f64) {
        match *self {
            DomainShape::Disk { r, .. } => (r, r),
            DomainShape::Ellipse { a, b, .. } => (a, b),
            DomainShape::Rect { hx, hy, .. } => (hx, hy),
        }
    }

    /// Negative inside, zero on the boundary, positive outside.
    pub fn signed(&self, x: f64, y: f64) -> f64 {
        match *self {
            DomainShape::Disk { cx, cy, r } => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r,
            DomainShape::Ellipse { cx, cy, a, b } => {
                let q = (((x - cx) / a).powi(2) + ((y - cy) / b).powi(2)).sqrt();
                (q - 1.0) * a.min(b)
            }
            DomainShape::Rect { cx, cy, hx, hy } => {
                let dx = (x - cx).abs() - hx;
                let dy = (y - cy).abs() - hy;
                if dx > 0.0 || dy > 0.0 {
                    (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
                } else {
                    dx.max(dy)
                }
            }
        }
    }

    /// Outward unit normal of the level set of `signed` through `(x, y)`.
    pub fn outward_normal(&self, x: f64, y: f64) -> [f64; 2] {
        let e = 1e-7;
        let gx = (self.signed(x + e, y) - self.signed(x - e, y)) / (2.0 * e);
        let gy = (self.signed(x, y + e) - self.signed(x, y - e)) / (2.0 * e);
        let n = (gx * gx + gy * gy).sqrt().max(f64::MIN_POSITIVE);
        [gx / n, gy / n]
    }

    /// Polar angle of `(x, y)` about the shape center, in `[0, 2π)`.
    pub fn angle(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        (y - cy).atan2(x - cx).rem_euclid(std::f64::consts::TAU)
    }
}

/// The observed part `Γ ⊂ ∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Full,
    /// Counter-clockwise arc from `start` to `end` (radians, about the shape center).
    Arc { start: f64, end: f64 },
}

impl Observation {
    pub fn contains_angle(&self, theta: f64) -> bool {
        match *self {
            Observation::Full => true,
            Observation::Arc { start, end } => {
                let tau = std::f64::consts::TAU;
                let span = (end - start).rem_euclid(tau);
                let span = if span == 0.0 && end != start { tau } else { span };
                (theta - start).rem_euclid(tau) <= span
            }
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Observation::Full)
    }
}

/// Inputs of [`build_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub h: f64,
    pub shape: DomainShape,
    pub observation: Observation,
    /// Final time `T` used for the finite-speed margin.
    pub final_time: f64,
    /// Upper bound of the sound speed.
    pub c_max: f64,
    /// Half width of `Ω₁` measured from the shape center. Chosen automatically when absent.
    pub outer_half_width: Option<f64>,
}

impl GridConfig {
    /// Margin between `Ω` and `∂Ω₁` demanded by finite propagation speed.
    pub fn required_margin(&self) -> f64 {
        self.c_max * self.final_time + 2.0 * self.h
    }
}

/// Uniform node grid on `Ω₁` with the `Ω` masks.
#[derive(Debug, Clone)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    h: f64,
    origin: (f64, f64),
    shape: DomainShape,
    observation: Observation,
    omega_mask: Vec<bool>,
    boundary_mask: Vec<bool>,
    outer_mask: Vec<bool>,
    interior_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    gamma_nodes: Vec<usize>,
}

/// Builds the grid and checks the finite-speed margin.
pub fn build_grid(config: &GridConfig) -> Result<Grid2D> {
    check_positive("h", config.h)?;
    if config.final_time < 0.0 {
        return Err(Error::NonPositive {
            name: "T",
            value: config.final_time,
        });
    }
    check_positive("c_max", config.c_max)?;
    let h = config.h;
    let (hx, hy) = config.shape.half_extent();
    let required = config.required_margin();
    let (ox, oy) = match config.outer_half_width {
        Some(w) => {
            let available = (w - hx).min(w - hy) - h;
            if available < required {
                return Err(Error::MarginTooSmall {
                    required,
                    available,
                });
            }
            (w, w)
        }
        None => (hx + required + h, hy + required + h),
    };
    let mx = (ox / h - 1e-9).ceil() as usize;
    let my = (oy / h - 1e-9).ceil() as usize;
    let (cx, cy) = config.shape.center();
    Grid2D::from_parts(
        2 * mx + 1,
        2 * my + 1,
        h,
        (cx - mx as f64 * h, cy - my as f64 * h),
        config.shape,
        config.observation,
    )
}

impl Grid2D {
    /// Closed Dirichlet box `[0, n·h]²` with `Ω` equal to the open box.
    /// Has no observation margin; intended for eigenmode and conservation checks.
    pub fn dirichlet_box(n_cells: usize, h: f64) -> Result<Self> {
        check_positive("h", h)?;
        let half = n_cells as f64 * h / 2.0;
        Self::from_parts(
            n_cells + 1,
            n_cells + 1,
            h,
            (0.0, 0.0),
            DomainShape::Rect {
                cx: half,
                cy: half,
                hx: half,
                hy: half,
            },
            Observation::Full,
        )
    }

    fn from_parts(
        nx: usize,
        ny: usize,
        h: f64,
        origin: (f64, f64),
        shape: DomainShape,
        observation: Observation,
    ) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::Unsupported(format!("grid {nx}x{ny} is too small")));
        }
        let n = nx * ny;
        let mut outer_mask = vec![false; n];
        let mut omega_mask = vec![false; n];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                outer_mask[k] = true;
                let x = origin.0 + i as f64 * h;
                let y = origin.1 + j as f64 * h;
                omega_mask[k] = shape.signed(x, y) <= 1e-12 * h;
            }
        }
        // Ω̄ may not touch ∂Ω₁: the stencil of every boundary node must stay in the box.
        for j in 0..ny {
            for i in 0..nx {
                if i < 2 || j < 2 || i + 2 >= nx || j + 2 >= ny {
                    omega_mask[j * nx + i] = false;
                }
            }
        }
        let neighbours = |k: usize| [k - 1, k + 1, k - nx, k + nx];
        let mut boundary_mask = vec![false; n];
        loop {
            for k in 0..n {
                boundary_mask[k] = omega_mask[k] && neighbours(k).iter().any(|&m| !omega_mask[m]);
            }
            let dangling: Vec<usize> = (0..n)
                .filter(|&k| {
                    boundary_mask[k]
                        && !neighbours(k)
                            .iter()
                            .any(|&m| omega_mask[m] && !boundary_mask[m])
                })
                .collect();
            if dangling.is_empty() {
                break;
            }
            for k in dangling {
                omega_mask[k] = false;
            }
        }
        let interior_nodes: Vec<usize> = (0..n)
            .filter(|&k| omega_mask[k] && !boundary_mask[k])
            .collect();
        if interior_nodes.is_empty() {
            return Err(Error::Unsupported(
                "domain contains no interior nodes at this resolution".into(),
            ));
        }
        let coords = |k: usize| {
            (
                origin.0 + (k % nx) as f64 * h,
                origin.1 + (k / nx) as f64 * h,
            )
        };
        let mut boundary_nodes: Vec<usize> = (0..n).filter(|&k| boundary_mask[k]).collect();
        let (cx, cy) = shape.center();
        boundary_nodes.sort_by(|&a, &b| {
            let (xa, ya) = coords(a);
            let (xb, yb) = coords(b);
            let ta = shape.angle(xa, ya);
            let tb = shape.angle(xb, yb);
            ta.total_cmp(&tb).then_with(|| {
                let ra = (xa - cx).hypot(ya - cy);
                let rb = (xb - cx).hypot(yb - cy);
                ra.total_cmp(&rb)
            })
        });
        let gamma_nodes: Vec<usize> = boundary_nodes
            .iter()
            .copied()
            .filter(|&k| {
                let (x, y) = coords(k);
                observation.contains_angle(shape.angle(x, y))
            })
            .collect();
        if gamma_nodes.is_empty() {
            return Err(Error::EmptyObservation);
        }
        Ok(Self {
            nx,
            ny,
            h,
            origin,
            shape,
            observation,
            omega_mask,
            boundary_mask,
            outer_mask,
            interior_nodes,
            boundary_nodes,
            gamma_nodes,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (
            self.origin.0 + i as f64 * self.h,
            self.origin.1 + j as f64 * self.h,
        )
    }

    /// `Ω̄` node mask.
    pub fn omega_mask(&self) -> &[bool] {
        &self.omega_mask
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    /// Nodes of `Ω₁` (everything but the Dirichlet ring).
    pub fn outer_mask(&self) -> &[bool] {
        &self.outer_mask
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// `∂Ω` nodes ordered by polar angle about the shape center.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// `Γ` nodes, a subsequence of [`Self::boundary_nodes`].
    pub fn gamma_nodes(&self) -> &[usize] {
        &self.gamma_nodes
    }

    /// Distance from `Ω̄` to the Dirichlet ring `∂Ω₁`.
    pub fn margin(&self) -> f64 {
        let mut cells = usize::MAX;
        for k in 0..self.len() {
            if self.omega_mask[k] {
                let (i, j) = self.ij(k);
                cells = cells.min(i).min(j).min(self.nx - 1 - i).min(self.ny - 1 - j);
            }
        }
        cells as f64 * self.h
    }

    pub fn has_full_observation(&self) -> bool {
        self.gamma_nodes.len() == self.boundary_nodes.len()
    }

    /// Node indices of `Ω̄` at Chebyshev distance at least `cells + 1` from the
    /// complement of `Ω̄`; used to skip the staircase collar in error norms.
    pub fn collar_excluded_mask(&self, cells: usize) -> Vec<bool> {
        let c = cells as isize;
        let mut out = vec![false; self.len()];
        for k in 0..self.len() {
            if !self.omega_mask[k] {
                continue;
            }
            let (i, j) = self.ij(k);
            let mut ok = true;
            'outer: for dj in -c..=c {
                for di in -c..=c {
                    let ii = i as isize + di;
                    let jj = j as isize + dj;
                    if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
                        ok = false;
                        break 'outer;
                    }
                    let m = self.index(ii as usize, jj as usize);
                    if !self.omega_mask[m] || self.boundary_mask[m] {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            out[k] = ok;
        }
        out
    }

    /// Arc-length weights and consecutive spacings of an ordered node list.
    /// Returns `(weights, gaps)` where `gaps[i]` is the distance from node `i`
    /// to node `i+1` (wrapping around when `cyclic`).
    pub fn arclength(&self, nodes: &[usize], cyclic: bool) -> (Vec<f64>, Vec<f64>) {
        let m = nodes.len();
        let dist = |a: usize, b: usize| {
            let (xa, ya) = self.coords(a);
            let (xb, yb) = self.coords(b);
            (xa - xb).hypot(ya - yb)
        };
        let n_gaps = if cyclic { m } else { m.saturating_sub(1) };
        let gaps: Vec<f64> = (0..n_gaps).map(|i| dist(nodes[i], nodes[(i + 1) % m])).collect();
        let mut weights = vec![0.0; m];
        for (i, &g) in gaps.iter().enumerate() {
            weights[i] += 0.5 * g;
            weights[(i + 1) % m] += 0.5 * g;
        }
        (weights, gaps)
    }
}

/// Scalar field on the nodes of a grid, stored row by row (`x` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    nx: usize,
    ny: usize,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_values(nx: usize, ny: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::LengthMismatch {
                expected: nx * ny,
                found: values.len(),
            });
        }
        Ok(Self { nx, ny, values })
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: (0..grid.len())
                .map(|k| {
                    let (x, y) = grid.coords(k);
                    lit(f(x, y))
                })
                .collect(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn matches(&self, grid: &Grid2D) -> bool {
        self.nx == grid.nx && self.ny == grid.ny
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `Σ h² v²` over the nodes selected by `mask` (all nodes when `None`).
    pub fn l2_norm_sq(&self, h: f64, mask: Option<&[bool]>) -> T {
        let h2: T = lit(h * h);
        let s = match mask {
            Some(m) => self
                .values
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .fold(T::zero(), |acc, (&v, _)| acc + v * v),
            None => self.values.iter().fold(T::zero(), |acc, &v| acc + v * v),
        };
        h2 * s
    }

    /// `self − other`.
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    /// Zeroes every node where `mask` is false.
    pub fn restricted(&self, mask: &[bool]) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(mask)
                .map(|(&v, &keep)| if keep { v } else { T::zero() })
                .collect(),
        }
    }
}

/// Relative `ℓ²` error `‖a − b‖/‖b‖` over `mask`.
pub fn relative_l2_error<T: Real>(a: &Field<T>, b: &Field<T>, mask: &[bool]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for ((&x, &y), &keep) in a.values.iter().zip(&b.values).zip(mask) {
        if keep {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    if den == T::zero() {
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Sound speed and damping sampled on a grid.
#[derive(Debug, Clone)]
pub struct Medium<T> {
    pub c: Field<T>,
    pub a: Field<T>,
    pub c0: T,
}

impl<T: Real> Medium<T> {
    pub fn from_profiles(
        grid: &Grid2D,
        speed: &SpeedProfile,
        damping: &DampingProfile,
        c0: f64,
    ) -> Self {
        Self {
            c: Field::from_fn(grid, |x, y| speed.speed(x, y)),
            a: Field::from_fn(grid, |x, y| damping.damping(x, y)),
            c0: lit(c0),
        }
    }

    /// Homogeneous, undamped medium.
    pub fn uniform(grid: &Grid2D) -> Self {
        Self::from_profiles(grid, &SpeedProfile::Constant(1.0), &DampingProfile::None, 1.0)
    }

    pub fn c_max(&self) -> T {
        self.c.max_abs()
    }

    pub fn a_max(&self) -> T {
        self.a.max_abs()
    }

    pub fn with_damping(&self, a: Field<T>) -> Self {
        Self {
            c: self.c.clone(),
            a,
            c0: self.c0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    SpeedBelowBound,
    NegativeDamping,
    DampingOutsideDomain,
    SpeedNotUnitOutside,
    NonFinite,
    ShapeMismatch,
}

/// One node where the medium breaks a model hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumViolation {
    pub kind: ViolationKind,
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

impl fmt::Display for MediumViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at node ({}, {}) = ({:.4}, {:.4}), value {}",
            self.kind, self.i, self.j, self.x, self.y, self.value
        )
    }
}

/// Lists every node where `c ≥ c₀ > 0`, `a ≥ 0`, `supp a ⊂ Ω`, or `c ≡ 1` off `Ω` fails.
pub fn medium_violations<T: Real>(m: &Medium<T>, g: &Grid2D) -> Vec<MediumViolation> {
    let mut out = Vec::new();
    if !m.c.matches(g) || !m.a.matches(g) {
        out.push(MediumViolation {
            kind: ViolationKind::ShapeMismatch,
            i: m.c.nx,
            j: m.c.ny,
            x: f64::NAN,
            y: f64::NAN,
            value: f64::NAN,
        });
        return out;
    }
    let c0 = to_f64(m.c0);
    let mut push = |kind, k: usize, value: f64| {
        let (i, j) = g.ij(k);
        let (x, y) = g.coords(k);
        out.push(MediumViolation {
            kind,
            i,
            j,
            x,
            y,
            value,
        });
    };
    if c0 <= 0.0 {
        push(ViolationKind::SpeedBelowBound, 0, c0);
    }
    for k in 0..g.len() {
        let c = to_f64(m.c.values[k]);
        let a = to_f64(m.a.values[k]);
        if !c.is_finite() || !a.is_finite() {
            push(ViolationKind::NonFinite, k, if c.is_finite() { a } else { c });
            continue;
        }
        if c < c0 {
            push(ViolationKind::SpeedBelowBound, k, c);
        }
        if a < 0.0 {
            push(ViolationKind::NegativeDamping, k, a);
        }
        let inside = g.omega_mask[k] && !g.boundary_mask[k];
        if a != 0.0 && !inside {
            push(ViolationKind::DampingOutsideDomain, k, a);
        }
        if !g.omega_mask[k] && (c - 1.0).abs() > 1e-12 {
            push(ViolationKind::SpeedNotUnitOutside, k, c);
        }
    }
    out
}

/// Checks the medium hypotheses; see [`medium_violations`].
pub fn validate_medium<T: Real>(m: &Medium<T>, g: &Grid2D) -> Result<()> {
    let v = medium_violations(m, g);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidMedium(v))
    }
}

/// Initial pressure together with its declared support `𝒦`.
#[derive(Debug, Clone)]
pub struct SourceSpec<T> {
    pub u0: Field<T>,
    pub support_mask: Vec<bool>,
}

impl<T: Real> SourceSpec<T> {
    /// Samples a profile; the support is the closed disk of the profile's support radius.
    pub fn from_profile(grid: &Grid2D, profile: &SourceProfile) -> Result<Self> {
        let (cx, cy) = profile.center();
        let r = profile.support_radius();
        let support_mask: Vec<bool> = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                r > 0.0 && (x - cx).hypot(y - cy) < r
            })
            .collect();
        let u0 = Field::from_fn(grid, |x, y| profile.value(x, y));
        Self::new(grid, u0, support_mask)
    }

    pub fn new(grid: &Grid2D, u0: Field<T>, support_mask: Vec<bool>) -> Result<Self> {
        if !u0.matches(grid) || support_mask.len() != grid.len() {
            return Err(Error::InvalidSource("source does not match the grid".into()));
        }
        if let Some(k) = (0..grid.len()).find(|&k| !support_mask[k] && u0.values[k] != T::zero()) {
            let (x, y) = grid.coords(k);
            return Err(Error::InvalidSource(format!(
                "u0 is non-zero outside its support at ({x:.4}, {y:.4})"
            )));
        }
        if !u0.is_finite() {
            return Err(Error::InvalidSource("u0 has non-finite values".into()));
        }
        let (nx, ny) = (grid.nx as isize, grid.ny as isize);
        for k in (0..grid.len()).filter(|&k| support_mask[k]) {
            let (i, j) = grid.ij(k);
            for dj in -2isize..=2 {
                for di in -2isize..=2 {
                    let ii = i as isize + di;
                    let jj = j as isize + dj;
                    let inside = ii >= 0
                        && jj >= 0
                        && ii < nx
                        && jj < ny
                        && grid.omega_mask[grid.index(ii as usize, jj as usize)];
                    if !inside {
                        let (x, y) = grid.coords(k);
                        return Err(Error::InvalidSource(format!(
                            "support node ({x:.4}, {y:.4}) is closer than 2 cells to the boundary"
                        )));
                    }
                }
            }
        }
        Ok(Self { u0, support_mask })
    }
}

/// Preconditioner-free conjugate gradients for an SPD operator.
/// Returns `(iterations, final relative residual)`.
pub(crate) fn conjugate_gradient<T: Real>(
    apply: impl Fn(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
) -> (usize, T) {
    let n = b.len();
    let bnorm = b.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return (0, T::zero());
    }
    let mut ax = vec![T::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = r.iter().fold(T::zero(), |a, &v| a + v * v);
    let mut ap = vec![T::zero(); n];
    for it in 0..max_iter {
        let res = rr.sqrt() / bnorm;
        if res <= rel_tol {
            return (it, res);
        }
        apply(&p, &mut ap);
        let pap = p.iter().zip(&ap).fold(T::zero(), |a, (&u, &v)| a + u * v);
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new = r.iter().fold(T::zero(), |a, &v| a + v * v);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    (max_iter, rr.sqrt() / bnorm)
}

/// The 5-point Dirichlet Laplacian `4v_i − Σ v_j` restricted to interior nodes.
struct InteriorLaplacian<'a> {
    grid: &'a Grid2D,
    /// interior slot of every node, `usize::MAX` elsewhere
    slot: Vec<usize>,
}

impl<'a> InteriorLaplacian<'a> {
    fn new(grid: &'a Grid2D) -> Self {
        let mut slot = vec![usize::MAX; grid.len()];
        for (s, &k) in grid.interior_nodes.iter().enumerate() {
            slot[k] = s;
        }
        Self { grid, slot }
    }

    fn apply<T: Real>(&self, x: &[T], y: &mut [T]) {
        let nx = self.grid.nx;
        let four: T = lit(4.0);
        for (s, &k) in self.grid.interior_nodes.iter().enumerate() {
            let mut acc = four * x[s];
            for m in [k - 1, k + 1, k - nx, k + nx] {
                let t = self.slot[m];
                if t != usize::MAX {
                    acc -= x[t];
                }
            }
            y[s] = acc;
        }
    }
}

fn cg_tolerance<T: Real>() -> T {
    lit::<T>(1e-10).max(T::epsilon() * lit(100.0))
}

/// Discrete harmonic extension of boundary data.
///
/// `boundary_values[i]` is the value at `grid.boundary_nodes()[i]`. Solves the
/// 5-point Laplace equation on the interior nodes of `Ω` by conjugate
/// gradients to a relative residual of 1e-10. Nodes outside `Ω̄` are zero.
pub fn harmonic_extension<T: Real>(boundary_values: &[T], grid: &Grid2D) -> Result<Field<T>> {
    if boundary_values.len() != grid.boundary_nodes.len() {
        return Err(Error::LengthMismatch {
            expected: grid.boundary_nodes.len(),
            found: boundary_values.len(),
        });
    }
    let mut field = Field::zeros(grid);
    for (&k, &v) in grid.boundary_nodes.iter().zip(boundary_values) {
        field.values[k] = v;
    }
    let lap = InteriorLaplacian::new(grid);
    let nx = grid.nx;
    let b: Vec<T> = grid
        .interior_nodes
        .iter()
        .map(|&k| {
            [k - 1, k + 1, k - nx, k + nx]
                .iter()
                .filter(|&&m| grid.boundary_mask[m])
                .fold(T::zero(), |acc, &m| acc + field.values[m])
        })
        .collect();
    let mut x = vec![T::zero(); b.len()];
    let cap = 20 * (grid.nx + grid.ny) + 2000;
    let (iterations, residual) =
        conjugate_gradient(|v, out| lap.apply(v, out), &b, &mut x, cg_tolerance(), cap);
    if residual > cg_tolerance() {
        return Err(Error::NotConverged {
            what: "harmonic extension",
            residual: to_f64(residual),
            iterations,
        });
    }
    for (&k, &v) in grid.interior_nodes.iter().zip(&x) {
        field.values[k] = v;
    }
    Ok(field)
}

/// Discrete Dirichlet form `Σ (u_i − u_j)²` over grid edges with both ends in
/// `Ω̄`. For fields vanishing on `∂Ω` this is the squared `H¹₀(Ω)` norm
/// (`h²` from the cell area cancels the `1/h²` of the difference quotient in 2D).
pub fn dirichlet_form<T: Real>(field: &Field<T>, grid: &Grid2D) -> T {
    let nx = grid.nx;
    let m = &grid.omega_mask;
    let v = &field.values;
    let mut acc = T::zero();
    for k in 0..grid.len() {
        if !m[k] {
            continue;
        }
        if m[k + 1] {
            let d = v[k + 1] - v[k];
            acc += d * d;
        }
        if m[k + nx] {
            let d = v[k + nx] - v[k];
            acc += d * d;
        }
    }
    acc
}

/// Discrete `H¹₀(Ω)` norm, see [`dirichlet_form`].
pub fn h1_norm<T: Real>(field: &Field<T>, grid: &Grid2D) -> T {
    dirichlet_form(field, grid).sqrt()
}

/// Poincaré constant `C_P = λ_min^{-1/2}` of the discrete Dirichlet Laplacian
/// on `Ω`, by inverse iteration.
pub fn poincare_constant<T: Real>(grid: &Grid2D) -> Result<T> {
    let lap = InteriorLaplacian::new(grid);
    let n = grid.interior_nodes.len();
    let mut x = vec![T::one(); n];
    let mut lambda = T::zero();
    let cap = 20 * (grid.nx + grid.ny) + 2000;
    let mut ax = vec![T::zero(); n];
    for _ in 0..60 {
        let mut y = vec![T::zero(); n];
        let (it, res) = conjugate_gradient(|v, o| lap.apply(v, o), &x, &mut y, cg_tolerance(), cap);
        if res > cg_tolerance() {
            return Err(Error::NotConverged {
                what: "Poincaré inverse iteration",
                residual: to_f64(res),
                iterations: it,
            });
        }
        let norm = y.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        lap.apply(&y, &mut ax);
        let next = y.iter().zip(&ax).fold(T::zero(), |a, (&u, &v)| a + u * v);
        x = y;
        let done = (next - lambda).abs() <= lit::<T>(1e-12) * next;
        lambda = next;
        if done {
            break;
        }
    }
    // eigenvalue of −Δ_h is λ/h²
    Ok(lit::<T>(grid.h) / lambda.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk_grid(h: f64, observation: Observation) -> Grid2D {
        build_grid(&GridConfig {
            h,
            shape: DomainShape::unit_disk(),
            observation,
            final_time: 0.1,
            c_max: 1.0,
            outer_half_width: None,
        })
        .unwrap()
    }

    #[test]
    fn full_observation_covers_boundary() {
        let g = disk_grid(1.0 / 64.0, Observation::Full);
        assert_eq!(g.gamma_nodes().len(), g.boundary_nodes().len());
        assert!(g.has_full_observation());
    }

    #[test]
    fn upper_half_observation_is_half_the_boundary() {
        let g = disk_grid(
            1.0 / 64.0,
            Observation::Arc {
                start: 0.0,
                end: std::f64::consts::PI,
            },
        );
        let half = g.boundary_nodes().len() as f64 / 2.0;
        let got = g.gamma_nodes().len() as f64;
        assert!((got - half).abs() <= 2.0 + 1e-9, "{got} vs {half}");
    }

    #[test]
    fn gamma_nodes_touch_the_interior() {
        let g = disk_grid(1.0 / 37.0, Observation::Full);
        let nx = g.nx();
        for &k in g.gamma_nodes() {
            let ok = [k - 1, k + 1, k - nx, k + nx]
                .iter()
                .any(|&m| g.omega_mask()[m] && !g.boundary_mask()[m]);
            assert!(ok);
        }
    }

    #[test]
    fn margin_is_enforced() {
        let cfg = GridConfig {
            h: 1.0 / 64.0,
            shape: DomainShape::unit_disk(),
            observation: Observation::Full,
            final_time: 3.0,
            c_max: 1.2,
            outer_half_width: Some(1.0 + 3.0),
        };
        assert!(matches!(build_grid(&cfg), Err(Error::MarginTooSmall { .. })));
        let auto = build_grid(&GridConfig {
            outer_half_width: None,
            ..cfg.clone()
        })
        .unwrap();
        let (x0, _) = auto.origin();
        // Ω₁ extent ≥ Ω extent + c_max·T
        assert!(-x0 - 1.0 >= 3.6);
        assert!(build_grid(&GridConfig {
            outer_half_width: Some(1.0 + 3.6 + 4.0 / 64.0),
            ..cfg
        })
        .is_ok());
    }

    #[test]
    fn empty_observation_rejected() {
        let cfg = GridConfig {
            h: 0.1,
            shape: DomainShape::unit_disk(),
            observation: Observation::Arc {
                start: 0.001,
                end: 0.002,
            },
            final_time: 0.1,
            c_max: 1.0,
            outer_half_width: None,
        };
        assert!(matches!(build_grid(&cfg), Err(Error::EmptyObservation)));
    }

    #[test]
    fn medium_validation() {
        let g = disk_grid(1.0 / 32.0, Observation::Full);
        let ok: Medium<f64> = Medium::uniform(&g);
        assert!(validate_medium(&ok, &g).is_ok());

        let mut bad = ok.clone();
        let k = g.interior_nodes()[10];
        bad.a.values_mut()[k] = -0.1;
        let v = medium_violations(&bad, &g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NegativeDamping);
        assert_eq!(g.index(v[0].i, v[0].j), k);

        let mut slow = ok.clone();
        slow.c.values_mut()[k] = 0.9;
        let v = medium_violations(&slow, &g);
        assert_eq!(v[0].kind, ViolationKind::SpeedBelowBound);

        let mut leaky = ok.clone();
        leaky.a.values_mut()[0] = 0.1;
        assert_eq!(
            medium_violations(&leaky, &g)[0].kind,
            ViolationKind::DampingOutsideDomain
        );

        let mut fast_outside = ok;
        fast_outside.c.values_mut()[1] = 1.5;
        assert_eq!(
            medium_violations(&fast_outside, &g)[0].kind,
            ViolationKind::SpeedNotUnitOutside
        );
    }

    #[test]
    fn source_support_checks() {
        let g = disk_grid(1.0 / 32.0, Observation::Full);
        let s = SourceSpec::<f64>::from_profile(
            &g,
            &SourceProfile::Bump {
                amp: 1.0,
                cx: 0.0,
                cy: 0.0,
                radius: 0.5,
            },
        );
        assert!(s.is_ok());
        let near_edge = SourceSpec::<f64>::from_profile(
            &g,
            &SourceProfile::Bump {
                amp: 1.0,
                cx: 0.5,
                cy: 0.0,
                radius: 0.5,
            },
        );
        assert!(matches!(near_edge, Err(Error::InvalidSource(_))));
    }

    #[test]
    fn harmonic_extension_of_constants_and_linear_data() {
        let g = disk_grid(1.0 / 64.0, Observation::Full);
        let zero = harmonic_extension(&vec![0.0f64; g.boundary_nodes().len()], &g).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let c = harmonic_extension(&vec![3.7f64; g.boundary_nodes().len()], &g).unwrap();
        for &k in g.interior_nodes() {
            assert!((c.values()[k] - 3.7).abs() < 1e-8);
        }

        let xs: Vec<f64> = g.boundary_nodes().iter().map(|&k| g.coords(k).0).collect();
        let lin = harmonic_extension(&xs, &g).unwrap();
        for &k in g.interior_nodes() {
            let (x, _) = g.coords(k);
            assert!((lin.values()[k] - x).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_extension_maximum_principle_and_orthogonality() {
        let g = disk_grid(1.0 / 48.0, Observation::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = g.boundary_nodes().iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = harmonic_extension(&data, &g).unwrap();
        let lo = data.iter().cloned().fold(f64::MAX, f64::min);
        let hi = data.iter().cloned().fold(f64::MIN, f64::max);
        for &k in g.interior_nodes() {
            assert!(phi.values()[k] >= lo - 1e-9 && phi.values()[k] <= hi + 1e-9);
        }
        // f = f₀ + φ with f₀ vanishing on ∂Ω: ‖f − φ‖² = ‖f‖² − ‖φ‖²
        let mut f0 = Field::<f64>::zeros(&g);
        for &k in g.interior_nodes() {
            f0.values_mut()[k] = rng.gen_range(-1.0..1.0);
        }
        let f = f0.add(&phi);
        let lhs = dirichlet_form(&f.sub(&phi), &g);
        let rhs = dirichlet_form(&f, &g) - dirichlet_form(&phi, &g);
        assert!((lhs - rhs).abs() < 1e-8 * lhs, "{lhs} {rhs}");
    }

    #[test]
    fn poincare_constant_of_unit_disk() {
        // first Dirichlet eigenvalue of the unit disk is j₀₁² ≈ 5.7832
        let g = disk_grid(1.0 / 48.0, Observation::Full);
        let cp: f64 = poincare_constant(&g).unwrap();
        let exact = 1.0 / 2.404_825_557_695_773;
        assert!((cp - exact).abs() < 0.03 * exact, "{cp}");
    }

    proptest! {
        #[test]
        fn harmonic_extension_is_bounded_by_data(seed in 0u64..1000) {
            let g = disk_grid(1.0 / 16.0, Observation::Full);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = g.boundary_nodes().iter().map(|_| rng.gen_range(-5.0..5.0)).collect();
            let phi = harmonic_extension(&data, &g).unwrap();
            let lo = data.iter().cloned().fold(f64::MAX, f64::min);
            let hi = data.iter().cloned().fold(f64::MIN, f64::max);
            for &k in g.interior_nodes() {
                prop_assert!(phi.values()[k] >= lo - 1e-9 && phi.values()[k] <= hi + 1e-9);
            }
        }
    }
}
