//! Leapfrog integration of `∂ₜ²u − c²Δu + a∂ₜᵅu = 0` on `Ω₁` with
//! homogeneous Dirichlet data on the outer ring.
//!
//! The memory term is explicit: at step `n` the L1 Caputo derivative uses the
//! increments `u^{k+1} − u^k` for `k < n`, stored time-major for the damped
//! nodes only. The update region grows by one cell per step from the initial
//! support, which is exactly the stencil's domain of dependence.
//!
//! Energy bookkeeping uses the staggered leapfrog energy
//!
//! `E^{n+½} = h²Σ c⁻²((u^{n+1} − u^n)/dt)² + Σ_edges ∇u^{n+1}·∇u^n`,
//!
//! which satisfies `E^{n+½} − E^{n−½} = −P^n` with
//! `P^n = h²Σ a c⁻² D^n (u^{n+1} − u^{n−1})` to rounding. `D^n` is the
//! discrete damping derivative (L1 Caputo or centered first difference).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frac_calculus::FracWeights;
use crate::grid::{Field, Grid2D, Medium, SourceSpec};
use crate::scalar::{from_usize, gamma, lit, to_f64, Real};

/// Largest admissible `c_max·dt/h`.
pub const CFL_LIMIT: f64 = 0.636_396_103_067_892_8; // 0.9/√2

pub const DEFAULT_CFL: f64 = 0.45;

/// Damping law of the `a` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingModel {
    /// `a ∂ₜᵅu` by the L1 scheme.
    #[default]
    Fractional,
    /// `a ∂ₜu`, centered in time (classical damped wave equation).
    Classical,
}

/// Time discretization chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep {
    pub dt: f64,
    pub n_steps: usize,
    /// Realized `c_max·dt/h`.
    pub cfl: f64,
}

/// Admissible CFL bound: `0.9/√2`, reduced by 10% when the explicit memory
/// term is strong (`‖a‖∞·dt^{2−α} > 0.1`).
pub fn cfl_limit(a_max: f64, alpha: f64, dt: f64) -> f64 {
    if a_max * dt.powf(2.0 - alpha) > 0.1 {
        0.9 * CFL_LIMIT
    } else {
        CFL_LIMIT
    }
}

/// Picks `dt = T/N` with `c_max·dt/h ≤ cfl`.
pub fn choose_time_step(
    h: f64,
    c_max: f64,
    a_max: f64,
    alpha: f64,
    final_time: f64,
    cfl: f64,
) -> Result<TimeStep> {
    crate::error::check_positive("h", h)?;
    crate::error::check_positive("c_max", c_max)?;
    crate::error::check_positive("T", final_time)?;
    crate::error::check_positive("cfl", cfl)?;
    let dt0 = cfl * h / c_max;
    let limit = cfl_limit(a_max, alpha, dt0);
    if cfl > limit {
        return Err(Error::CflViolated { cfl, limit });
    }
    let n_steps = ((final_time / dt0) - 1e-9).ceil().max(2.0) as usize;
    let dt = final_time / n_steps as f64;
    Ok(TimeStep {
        dt,
        n_steps,
        cfl: c_max * dt / h,
    })
}

/// `(u₀, −a u₀/Γ(2−α))`.
pub fn initial_conditions<T: Real>(
    src: &SourceSpec<T>,
    m: &Medium<T>,
    alpha: T,
) -> Result<(Field<T>, Field<T>)> {
    crate::error::check_alpha(to_f64(alpha))?;
    Ok((src.u0.clone(), initial_velocity(&src.u0, m, alpha)))
}

/// `−a u₀/Γ(2−α)`.
pub fn initial_velocity<T: Real>(u0: &Field<T>, m: &Medium<T>, alpha: T) -> Field<T> {
    let g = gamma(lit::<T>(2.0) - alpha);
    let values = u0
        .values()
        .iter()
        .zip(m.a.values())
        .map(|(&u, &a)| -a * u / g)
        .collect();
    Field::from_values(u0.nx(), u0.ny(), values).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

impl Rect {
    fn grow(self, nx: usize, ny: usize) -> Self {
        Rect {
            i0: self.i0.saturating_sub(1).max(1),
            i1: (self.i1 + 1).min(nx - 2),
            j0: self.j0.saturating_sub(1).max(1),
            j1: (self.j1 + 1).min(ny - 2),
        }
    }

    fn bounding<T: Real>(nx: usize, values: &[&[T]]) -> Option<Self> {
        let mut r: Option<Rect> = None;
        for v in values {
            for (k, x) in v.iter().enumerate() {
                if *x != T::zero() {
                    let (i, j) = (k % nx, k / nx);
                    r = Some(match r {
                        None => Rect {
                            i0: i,
                            i1: i,
                            j0: j,
                            j1: j,
                        },
                        Some(r) => Rect {
                            i0: r.i0.min(i),
                            i1: r.i1.max(i),
                            j0: r.j0.min(j),
                            j1: r.j1.max(j),
                        },
                    });
                }
            }
        }
        r
    }
}

/// Wave field at two (three, mid-step) time levels plus the memory term history.
#[derive(Debug, Clone)]
pub struct WaveState<T> {
    pub u_prev: Vec<T>,
    pub u_curr: Vec<T>,
    u_next: Vec<T>,
    /// time-major increments `u^{k+1} − u^k` on the damped nodes
    history: Vec<T>,
    /// `D^n` at the damped nodes for the last computed step
    damping_values: Vec<T>,
    step: usize,
    dt: T,
    active: Option<Rect>,
}

impl<T: Real> WaveState<T> {
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `u^{n+1}` after [`Stepper::advance`], before [`WaveState::rotate`].
    pub fn u_next(&self) -> &[T] {
        &self.u_next
    }

    /// Makes the computed level current.
    pub fn rotate(&mut self) {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        std::mem::swap(&mut self.u_curr, &mut self.u_next);
        self.step += 1;
    }
}

/// Explicit scheme bound to a grid, medium and time step.
pub struct Stepper<'g, T> {
    grid: &'g Grid2D,
    dt: T,
    n_steps: usize,
    model: DampingModel,
    /// `dt²c²/h²`
    coef: Vec<T>,
    inv_c2: Vec<T>,
    /// per row `[i0, i1)` spans of updated nodes
    spans: Vec<Vec<(usize, usize)>>,
    damped: Vec<usize>,
    /// `a` at the damped nodes
    a_damped: Vec<T>,
    weights: Option<FracWeights<T>>,
    full_region: bool,
}

impl<'g, T: Real> Stepper<'g, T> {
    /// Scheme on all of `Ω₁` (every node but the outer ring).
    pub fn on_box(
        grid: &'g Grid2D,
        medium: &Medium<T>,
        alpha: T,
        dt: T,
        n_steps: usize,
        model: DampingModel,
    ) -> Result<Self> {
        let mask = grid.outer_mask().to_vec();
        Self::with_mask(grid, medium, alpha, dt, n_steps, model, &mask, false)
    }

    /// Scheme on the interior nodes of `Ω`; `∂Ω` nodes are left to the caller.
    pub fn on_domain(
        grid: &'g Grid2D,
        medium: &Medium<T>,
        alpha: T,
        dt: T,
        n_steps: usize,
        model: DampingModel,
    ) -> Result<Self> {
        let mut mask = vec![false; grid.len()];
        for &k in grid.interior_nodes() {
            mask[k] = true;
        }
        Self::with_mask(grid, medium, alpha, dt, n_steps, model, &mask, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_mask(
        grid: &'g Grid2D,
        medium: &Medium<T>,
        alpha: T,
        dt: T,
        n_steps: usize,
        model: DampingModel,
        mask: &[bool],
        full_region: bool,
    ) -> Result<Self> {
        crate::error::check_alpha(to_f64(alpha))?;
        if !medium.c.matches(grid) || !medium.a.matches(grid) {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: medium.c.values().len(),
            });
        }
        let nx = grid.nx();
        let h: T = lit(grid.h());
        let c = medium.c.values();
        let coef: Vec<T> = c.iter().map(|&c| dt * dt * c * c / (h * h)).collect();
        let inv_c2 = c.iter().map(|&c| T::one() / (c * c)).collect();
        let mut spans = vec![Vec::new(); grid.ny()];
        for (j, row) in spans.iter_mut().enumerate() {
            let mut i = 0;
            while i < nx {
                if mask[j * nx + i] {
                    let start = i;
                    while i < nx && mask[j * nx + i] {
                        i += 1;
                    }
                    row.push((start, i));
                } else {
                    i += 1;
                }
            }
        }
        let damped: Vec<usize> = (0..grid.len())
            .filter(|&k| mask[k] && medium.a.values()[k] != T::zero())
            .collect();
        let a_damped = damped.iter().map(|&k| medium.a.values()[k]).collect();
        let weights = match model {
            DampingModel::Fractional if !damped.is_empty() => {
                Some(FracWeights::new(alpha, dt, n_steps.max(1))?)
            }
            _ => None,
        };
        Ok(Self {
            grid,
            dt,
            n_steps,
            model,
            coef,
            inv_c2,
            spans,
            damped,
            a_damped,
            weights,
            full_region,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn damped_nodes(&self) -> &[usize] {
        &self.damped
    }

    fn laplacian_at(&self, u: &[T], k: usize) -> T {
        let nx = self.grid.nx();
        u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] - lit::<T>(4.0) * u[k]
    }

    /// State at step 1 from the Taylor start
    /// `u¹ = u⁰ + dt·v⁰ + ½dt²(c²Δ_h u⁰ − a·D⁰)` where `D⁰ = 0` for the
    /// fractional law and `D⁰ = v⁰` for the classical one.
    pub fn start(&self, u0: &Field<T>, v0: &Field<T>) -> Result<WaveState<T>> {
        self.start_with(u0, v0, |_, _| {})
    }

    /// [`Self::start`] with boundary data written into `u¹` by `inject`.
    pub fn start_with(
        &self,
        u0: &Field<T>,
        v0: &Field<T>,
        inject: impl FnOnce(usize, &mut [T]),
    ) -> Result<WaveState<T>> {
        let grid = self.grid;
        if !u0.matches(grid) || !v0.matches(grid) {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: u0.values().len(),
            });
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let u0v = u0.values();
        let v0v = v0.values();
        let half: T = lit(0.5);
        let mut u1 = vec![T::zero(); grid.len()];
        for (j, row) in self.spans.iter().enumerate() {
            for &(i0, i1) in row {
                for k in j * nx + i0..j * nx + i1 {
                    u1[k] = u0v[k] + self.dt * v0v[k] + half * self.coef[k] * self.laplacian_at(u0v, k);
                }
            }
        }
        if self.model == DampingModel::Classical {
            for (&k, &a) in self.damped.iter().zip(&self.a_damped) {
                u1[k] -= half * self.dt * self.dt * a * v0v[k];
            }
        }
        let mut u_prev = vec![T::zero(); grid.len()];
        for (j, row) in self.spans.iter().enumerate() {
            for &(i0, i1) in row {
                let r = j * nx + i0..j * nx + i1;
                u_prev[r.clone()].copy_from_slice(&u0v[r]);
            }
        }
        if self.full_region {
            // ∂Ω data is the caller's: carry u⁰ there
            u_prev.copy_from_slice(u0v);
            for &k in grid.boundary_nodes() {
                u1[k] = u0v[k];
            }
        }
        inject(1, &mut u1);
        let active = if self.full_region {
            Some(Rect {
                i0: 1,
                i1: nx - 2,
                j0: 1,
                j1: ny - 2,
            })
        } else {
            Rect::bounding(nx, &[&u_prev, &u1])
        };
        let mut history = Vec::with_capacity(self.damped.len() * (self.n_steps + 1));
        history.extend(self.damped.iter().map(|&k| u1[k] - u_prev[k]));
        if !u1.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: 1 });
        }
        Ok(WaveState {
            u_prev,
            u_curr: u1,
            u_next: vec![T::zero(); grid.len()],
            history,
            damping_values: vec![T::zero(); self.damped.len()],
            step: 1,
            dt: self.dt,
            active,
        })
    }

    fn fractional_memory(&self, state: &mut WaveState<T>) {
        let w = match &self.weights {
            Some(w) => w,
            None => return,
        };
        let n = state.step;
        let na = self.damped.len();
        let b = w.b();
        let hist = &state.history;
        let scale = w.scale();
        state
            .damping_values
            .par_chunks_mut(4096)
            .enumerate()
            .for_each(|(c, acc)| {
                let off = c * 4096;
                acc.iter_mut().for_each(|v| *v = T::zero());
                for (k, &bk) in b.iter().enumerate().take(n) {
                    let row = &hist[(n - 1 - k) * na + off..(n - 1 - k) * na + off + acc.len()];
                    for (a, &r) in acc.iter_mut().zip(row) {
                        *a += bk * r;
                    }
                }
                acc.iter_mut().for_each(|v| *v *= scale);
            });
    }

    /// Computes `u^{n+1}` into the state (see [`WaveState::u_next`]).
    /// `inject` may overwrite nodes outside the update region (boundary data).
    pub fn advance(&self, state: &mut WaveState<T>, inject: impl FnOnce(usize, &mut [T])) -> Result<()> {
        let n = state.step;
        if n >= self.n_steps {
            return Err(Error::Unsupported(format!(
                "stepper configured for {} steps",
                self.n_steps
            )));
        }
        let grid = self.grid;
        let (nx, ny) = (grid.nx(), grid.ny());
        if self.model == DampingModel::Fractional {
            self.fractional_memory(state);
        }
        let active = state.active.map(|r| r.grow(nx, ny));
        state.active = active;
        let two: T = lit(2.0);
        let four: T = lit(4.0);
        if let Some(r) = active {
            let u = &state.u_curr;
            let up = &state.u_prev;
            let coef = &self.coef;
            let spans = &self.spans;
            let finite = state.u_next[r.j0 * nx..(r.j1 + 1) * nx]
                .par_chunks_mut(nx)
                .enumerate()
                .map(|(dj, row)| {
                    let j = r.j0 + dj;
                    let base = j * nx;
                    let mut ok = true;
                    for &(s0, s1) in &spans[j] {
                        let i0 = s0.max(r.i0);
                        let i1 = s1.min(r.i1 + 1);
                        for i in i0..i1 {
                            let k = base + i;
                            let lap = u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] - four * u[k];
                            let v = two * u[k] - up[k] + coef[k] * lap;
                            ok &= v.is_finite();
                            row[i] = v;
                        }
                    }
                    ok
                })
                .reduce(|| true, |a, b| a && b);
            if !finite {
                return Err(Error::NonFinite { step: n + 1 });
            }
        }
        let dt = self.dt;
        match self.model {
            DampingModel::Fractional => {
                for ((&k, &a), &d) in self.damped.iter().zip(&self.a_damped).zip(&state.damping_values) {
                    state.u_next[k] -= dt * dt * a * d;
                }
            }
            DampingModel::Classical => {
                let half: T = lit(0.5);
                for (i, (&k, &a)) in self.damped.iter().zip(&self.a_damped).enumerate() {
                    let beta = half * a * dt;
                    let v = (state.u_next[k] + beta * state.u_prev[k]) / (T::one() + beta);
                    state.u_next[k] = v;
                    state.damping_values[i] = (v - state.u_prev[k]) / (two * dt);
                }
            }
        }
        inject(n + 1, &mut state.u_next);
        for &k in &self.damped {
            let inc = state.u_next[k] - state.u_curr[k];
            if !inc.is_finite() {
                return Err(Error::NonFinite { step: n + 1 });
            }
            state.history.push(inc);
        }
        Ok(())
    }

    /// One full step: [`Self::advance`] followed by [`WaveState::rotate`].
    pub fn step(&self, state: &mut WaveState<T>) -> Result<()> {
        self.advance(state, |_, _| {})?;
        state.rotate();
        Ok(())
    }

    /// `P^n = h²Σ a c⁻² D^n (u^{n+1} − u^{n−1})` for the step just advanced.
    pub fn pairing_increment(&self, state: &WaveState<T>) -> T {
        let h: T = lit(self.grid.h());
        let mut acc = T::zero();
        for ((&k, &a), &d) in self.damped.iter().zip(&self.a_damped).zip(&state.damping_values) {
            acc += a * self.inv_c2[k] * d * (state.u_next[k] - state.u_prev[k]);
        }
        h * h * acc
    }

    fn energy_window(&self, state: &WaveState<T>) -> Option<Rect> {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        state.active.map(|r| Rect {
            i0: r.i0 - 1,
            i1: (r.i1 + 1).min(nx - 1),
            j0: r.j0 - 1,
            j1: (r.j1 + 1).min(ny - 1),
        })
    }

    /// Staggered energy `E^{n+½}` from `u^n`, `u^{n+1}` of an advanced state.
    pub fn staggered_energy(&self, state: &WaveState<T>, region: Option<&[bool]>) -> T {
        match self.energy_window(state) {
            None => T::zero(),
            Some(r) => energy_sum(
                self.grid,
                &self.inv_c2,
                (&state.u_curr, &state.u_next),
                (&state.u_curr, &state.u_next),
                self.dt,
                T::one(),
                r,
                region,
            ),
        }
    }

    /// Centered energy `E^n` with `u_t ≈ (u^{n+1} − u^{n−1})/2dt`.
    pub fn centered_energy(&self, state: &WaveState<T>, region: Option<&[bool]>) -> T {
        match self.energy_window(state) {
            None => T::zero(),
            Some(r) => energy_sum(
                self.grid,
                &self.inv_c2,
                (&state.u_prev, &state.u_next),
                (&state.u_curr, &state.u_curr),
                self.dt,
                lit(2.0),
                r,
                region,
            ),
        }
    }
}

/// `h²Σ c⁻²((w1 − w0)/(s·dt))² + Σ_edges ∇g0·∇g1` over nodes in `r` and `region`.
#[allow(clippy::too_many_arguments)]
fn energy_sum<T: Real>(
    grid: &Grid2D,
    inv_c2: &[T],
    (w0, w1): (&[T], &[T]),
    (g0, g1): (&[T], &[T]),
    dt: T,
    s: T,
    r: Rect,
    region: Option<&[bool]>,
) -> T {
    let nx = grid.nx();
    let h: T = lit(grid.h());
    let inside = |k: usize| region.is_none_or(|m| m[k]);
    let mut kin = T::zero();
    let mut pot = T::zero();
    for j in r.j0..=r.j1 {
        for i in r.i0..=r.i1 {
            let k = j * nx + i;
            if !inside(k) {
                continue;
            }
            let d = (w1[k] - w0[k]) / (s * dt);
            kin += inv_c2[k] * d * d;
            if i < r.i1 && inside(k + 1) {
                pot += (g0[k + 1] - g0[k]) * (g1[k + 1] - g1[k]);
            }
            if j < r.j1 && inside(k + nx) {
                pot += (g0[k + nx] - g0[k]) * (g1[k + nx] - g1[k]);
            }
        }
    }
    h * h * kin + pot
}

/// `h²Σ c⁻² v² + Σ_edges |∇u|²` for an exact pair `(u, u_t)`.
pub fn energy<T: Real>(grid: &Grid2D, medium: &Medium<T>, u: &Field<T>, ut: &Field<T>, region: Option<&[bool]>) -> T {
    let inv_c2: Vec<T> = medium.c.values().iter().map(|&c| T::one() / (c * c)).collect();
    let r = Rect {
        i0: 0,
        i1: grid.nx() - 1,
        j0: 0,
        j1: grid.ny() - 1,
    };
    let zero = vec![T::zero(); grid.len()];
    energy_sum(
        grid,
        &inv_c2,
        (&zero, ut.values()),
        (u.values(), u.values()),
        T::one(),
        T::one(),
        r,
        region,
    )
}

/// Samples of `u` on an ordered node list, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace<T> {
    pub dt: f64,
    pub nodes: Vec<usize>,
    pub samples: Vec<Vec<T>>,
}

impl<T: Real> BoundaryTrace<T> {
    pub fn zeros(dt: f64, nodes: Vec<usize>, n_steps: usize) -> Self {
        let m = nodes.len();
        Self {
            dt,
            nodes,
            samples: vec![vec![T::zero(); m]; n_steps + 1],
        }
    }

    pub fn n_steps(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    /// `dt·Σ_n Σ_i s²` (no arc-length weights).
    pub fn l2_norm(&self) -> T {
        let dt: T = lit(self.dt);
        let s = self
            .samples
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |a, &v| a + v * v);
        (dt * s).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            dt: self.dt,
            nodes: self.nodes.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x - y).collect())
                .collect(),
        }
    }
}

/// Energy diagnostics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace<T> {
    /// `t_n`, `n = 0..=N`
    pub times: Vec<f64>,
    /// `E^n`: exact at `n = 0`, centered in between, one-sided at `n = N`
    pub energy: Vec<T>,
    /// `E^{n+½}`, `n = 0..N`
    pub staggered: Vec<T>,
    /// `P^n` (index `n`, zero at `n = 0`), the discrete `2dt⟨a∂ₜᵅu, c⁻²∂ₜu⟩`
    pub dissipation: Vec<T>,
}

impl<T: Real> EnergyTrace<T> {
    /// Cumulative `Σ_{m≤n} P^m`.
    pub fn cumulative_pairing(&self) -> Vec<T> {
        let mut acc = T::zero();
        self.dissipation
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect()
    }
}

/// Output of [`dissipation_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationReport {
    /// exact `E(0)` from `(u₀, u₁)`
    pub e0: f64,
    /// `E(T)` with a one-sided `u_t`
    pub e_final: f64,
    /// `E(0) − E(T)`
    pub energy_drop: f64,
    /// `2⟨a∂ₜᵅu, c⁻²∂ₜu⟩` over the run
    pub pairing: f64,
    /// `|drop − pairing| / E(0)`
    pub mismatch: f64,
    /// smallest cumulative pairing over all prefixes, relative to `E(0)`
    pub min_cumulative_pairing: f64,
    /// `max_n (E^{n+½} − E^{n−½}) / E(0)`
    pub max_step_increase: f64,
    /// same for the centered energy `E^n`
    pub max_step_increase_centered: f64,
    /// `max_n |E^{½} − E^{n+½} − Σ_{m≤n} P^m| / E(0)`
    pub balance_residual: f64,
    /// `|E(T) − E(0)| / E(0)`
    pub relative_drift: f64,
}

pub fn dissipation_audit<T: Real>(trace: &EnergyTrace<T>) -> DissipationReport {
    let e0 = to_f64(trace.energy[0]);
    let e_final = to_f64(*trace.energy.last().expect("non-empty"));
    let pairing: f64 = trace.dissipation.iter().map(|&p| to_f64(p)).sum();
    let norm = if e0 > 0.0 { e0 } else { 1.0 };
    let cumulative = trace.cumulative_pairing();
    let min_cum = cumulative.iter().map(|&p| to_f64(p)).fold(0.0, f64::min);
    let s0 = to_f64(trace.staggered[0]);
    let balance = trace
        .staggered
        .iter()
        .zip(&cumulative)
        .map(|(&s, &c)| (s0 - to_f64(s) - to_f64(c)).abs())
        .fold(0.0, f64::max);
    let max_increase = |v: &[T]| {
        v.windows(2)
            .map(|w| to_f64(w[1] - w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    DissipationReport {
        e0,
        e_final,
        energy_drop: e0 - e_final,
        pairing,
        mismatch: ((e0 - e_final) - pairing).abs() / norm,
        min_cumulative_pairing: min_cum / norm,
        max_step_increase: max_increase(&trace.staggered) / norm,
        max_step_increase_centered: max_increase(&trace.energy) / norm,
        balance_residual: balance / norm,
        relative_drift: (e_final - e0).abs() / norm,
    }
}

/// Recording and discretization options of [`simulate_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOptions {
    pub cfl: f64,
    pub model: DampingModel,
    /// Nodes to record; `Γ` when `None`.
    pub trace_nodes: Option<Vec<usize>>,
    pub snapshot_times: Vec<f64>,
    pub energy: bool,
    /// Overrides the CFL-derived time step (still checked against the limit).
    pub time_step: Option<TimeStep>,
    /// Requires `Ω₁` to contain the `c_max·T` neighbourhood of `Ω̄`.
    pub enforce_margin: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            cfl: DEFAULT_CFL,
            model: DampingModel::Fractional,
            trace_nodes: None,
            snapshot_times: Vec::new(),
            energy: false,
            time_step: None,
            enforce_margin: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub time: f64,
    pub step: usize,
    pub field: Field<T>,
}

/// Everything a forward run produces.
#[derive(Debug, Clone)]
pub struct ForwardRun<T> {
    pub time_step: TimeStep,
    pub trace: BoundaryTrace<T>,
    pub snapshots: Vec<Snapshot<T>>,
    pub energy: Option<EnergyTrace<T>>,
    /// `u^N`
    pub u_final: Field<T>,
    /// `u^{N−1}`
    pub u_penultimate: Field<T>,
    /// `(3u^N − 4u^{N−1} + u^{N−2}) / 2dt`
    pub ut_final: Field<T>,
}

/// Time step for a scenario, honouring an explicit override.
pub fn resolve_time_step<T: Real>(
    grid: &Grid2D,
    medium: &Medium<T>,
    alpha: T,
    final_time: f64,
    opts: &ForwardOptions,
) -> Result<TimeStep> {
    let c_max = to_f64(medium.c_max());
    let a_max = to_f64(medium.a_max());
    match opts.time_step {
        Some(ts) => {
            let cfl = c_max * ts.dt / grid.h();
            let limit = cfl_limit(a_max, to_f64(alpha), ts.dt);
            if cfl > limit * (1.0 + 1e-12) {
                return Err(Error::CflViolated { cfl, limit });
            }
            Ok(TimeStep { cfl, ..ts })
        }
        None => choose_time_step(grid.h(), c_max, a_max, to_f64(alpha), final_time, opts.cfl),
    }
}

/// Runs the forward model from `(u₀, −a u₀/Γ(2−α))` up to `T`.
pub fn simulate_forward<T: Real>(
    grid: &Grid2D,
    src: &SourceSpec<T>,
    medium: &Medium<T>,
    alpha: T,
    final_time: f64,
    opts: &ForwardOptions,
) -> Result<ForwardRun<T>> {
    let (u0, v0) = initial_conditions(src, medium, alpha)?;
    simulate_from_state(grid, &u0, &v0, medium, alpha, final_time, opts)
}

/// Runs the scheme from an arbitrary initial pair `(u(0), u_t(0))`.
pub fn simulate_from_state<T: Real>(
    grid: &Grid2D,
    u0: &Field<T>,
    v0: &Field<T>,
    medium: &Medium<T>,
    alpha: T,
    final_time: f64,
    opts: &ForwardOptions,
) -> Result<ForwardRun<T>> {
    crate::error::check_positive("T", final_time)?;
    let c_max = to_f64(medium.c_max());
    if opts.enforce_margin {
        let required = c_max * final_time + 2.0 * grid.h();
        let available = grid.margin();
        if available + 1e-9 < required {
            return Err(Error::MarginTooSmall {
                required,
                available,
            });
        }
    }
    let ts = resolve_time_step(grid, medium, alpha, final_time, opts)?;
    let n_steps = ts.n_steps;
    let dt: T = lit(ts.dt);
    let stepper = Stepper::on_box(grid, medium, alpha, dt, n_steps, opts.model)?;
    let nodes = opts
        .trace_nodes
        .clone()
        .unwrap_or_else(|| grid.gamma_nodes().to_vec());
    let mut trace = BoundaryTrace {
        dt: ts.dt,
        nodes,
        samples: Vec::with_capacity(n_steps + 1),
    };
    let record = |u: &[T], trace: &mut BoundaryTrace<T>| {
        let row = trace.nodes.iter().map(|&k| u[k]).collect();
        trace.samples.push(row);
    };
    let snap_steps: Vec<usize> = opts
        .snapshot_times
        .iter()
        .map(|&t| ((t / ts.dt).round().max(0.0) as usize).min(n_steps))
        .collect();
    let mut snapshots = Vec::new();
    let take_snapshots = |n: usize, u: &[T], out: &mut Vec<Snapshot<T>>| {
        for (&s, &t) in snap_steps.iter().zip(&opts.snapshot_times) {
            if s == n {
                out.push(Snapshot {
                    time: t,
                    step: n,
                    field: Field::from_values(grid.nx(), grid.ny(), u.to_vec()).expect("grid shape"),
                });
            }
        }
    };

    let mut state = stepper.start(u0, v0)?;
    record(&state.u_prev, &mut trace);
    take_snapshots(0, &state.u_prev, &mut snapshots);
    record(&state.u_curr, &mut trace);
    take_snapshots(1, &state.u_curr, &mut snapshots);

    let mut energy = opts.energy.then(|| EnergyTrace {
        times: (0..=n_steps).map(|n| n as f64 * ts.dt).collect(),
        energy: Vec::with_capacity(n_steps + 1),
        staggered: Vec::with_capacity(n_steps),
        dissipation: Vec::with_capacity(n_steps),
    });
    if let Some(e) = energy.as_mut() {
        e.energy.push(self::energy(grid, medium, u0, v0, None));
        // E^{1/2} from levels 0 and 1
        let mut probe = state.clone();
        probe.u_next.copy_from_slice(&state.u_curr);
        probe.u_curr.copy_from_slice(&state.u_prev);
        e.staggered.push(stepper.staggered_energy(&probe, None));
        e.dissipation.push(T::zero());
    }

    let mut ut_final = None;
    while state.step < n_steps {
        stepper.advance(&mut state, |_, _| {})?;
        if let Some(e) = energy.as_mut() {
            e.energy.push(stepper.centered_energy(&state, None));
            e.staggered.push(stepper.staggered_energy(&state, None));
            e.dissipation.push(stepper.pairing_increment(&state));
        }
        if state.step + 1 == n_steps {
            let three: T = lit(3.0);
            let four: T = lit(4.0);
            let two_dt = lit::<T>(2.0) * dt;
            let v: Vec<T> = (0..grid.len())
                .map(|k| (three * state.u_next[k] - four * state.u_curr[k] + state.u_prev[k]) / two_dt)
                .collect();
            ut_final = Some(Field::from_values(grid.nx(), grid.ny(), v)?);
        }
        state.rotate();
        record(&state.u_curr, &mut trace);
        take_snapshots(state.step, &state.u_curr, &mut snapshots);
    }
    let ut_final = ut_final.expect("at least two steps");
    if let Some(e) = energy.as_mut() {
        e.energy.push(self::energy(
            grid,
            medium,
            &Field::from_values(grid.nx(), grid.ny(), state.u_curr.clone())?,
            &ut_final,
            None,
        ));
    }
    Ok(ForwardRun {
        time_step: ts,
        trace,
        snapshots,
        energy,
        u_final: Field::from_values(grid.nx(), grid.ny(), state.u_curr)?,
        u_penultimate: Field::from_values(grid.nx(), grid.ny(), state.u_prev)?,
        ut_final,
    })
}

/// Runs the undamped leapfrog backwards from `(u^N, u^{N−1})` and returns `u⁰`.
pub fn backward_leapfrog<T: Real>(
    grid: &Grid2D,
    medium: &Medium<T>,
    u_last: &Field<T>,
    u_before_last: &Field<T>,
    dt: f64,
    n_steps: usize,
) -> Result<Field<T>> {
    if n_steps < 2 {
        return Err(Error::Unsupported("need at least two steps".into()));
    }
    let undamped = medium.with_damping(Field::zeros(grid));
    let stepper = Stepper::on_box(grid, &undamped, lit(0.5), lit(dt), n_steps, DampingModel::Fractional)?;
    let mut state = WaveState {
        u_prev: u_last.values().to_vec(),
        u_curr: u_before_last.values().to_vec(),
        u_next: vec![T::zero(); grid.len()],
        history: Vec::new(),
        damping_values: Vec::new(),
        step: 1,
        dt: lit(dt),
        active: Rect::bounding(grid.nx(), &[u_last.values(), u_before_last.values()]),
    };
    while state.step < n_steps {
        stepper.step(&mut state)?;
    }
    Field::from_values(grid.nx(), grid.ny(), state.u_curr)
}

/// `c·π·√(k² + l²)/L`, the angular frequency of the `(k, l)` Dirichlet mode of a square of side `L`.
pub fn box_mode_frequency(c: f64, k: usize, l: usize, side: f64) -> f64 {
    c * std::f64::consts::PI * ((k * k + l * l) as f64).sqrt() / side
}

/// Angular frequency of `u(t)` at one node estimated from its zero crossings.
pub fn zero_crossing_frequency<T: Real>(samples: &[T], dt: f64) -> Option<f64> {
    let mut crossings = Vec::new();
    for n in 1..samples.len() {
        let (a, b) = (to_f64(samples[n - 1]), to_f64(samples[n]));
        if a == 0.0 && n == 1 {
            continue;
        }
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let frac = a / (a - b);
            crossings.push((n as f64 - 1.0 + frac) * dt);
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    let half_periods = from_usize::<f64>(crossings.len() - 1);
    Some(std::f64::consts::PI * half_periods / span)
}
