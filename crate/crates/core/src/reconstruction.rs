//! Time reversal, the error operator `K = Id − Π₁A_αΛ_α` and the Neumann
//! series `u₀ = Σ_m K^m Π₁A_α h`.
//!
//! `A_α` solves `∂ₜ²v − c²Δv − a I_T^{1−α}∂ₜv = 0` backwards from
//! `(v, ∂ₜv)(T) = (φ, 0)` with `v = h` on `∂Ω`. In the reversed time
//! `τ = T − t` the memory term becomes `+a ∂_τ^α v̂`, so `v̂` obeys the forward
//! equation with data `(φ, 0)` and boundary values `h(T − τ)`, which the
//! forward stepper integrates on `Ω` with `∂Ω` nodes overwritten each step.
//! The result is `(v̂(T), −∂_τ v̂(T))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{
    energy, resolve_time_step, simulate_from_state, BoundaryTrace, DampingModel, ForwardOptions,
    Stepper, TimeStep,
};
use crate::frac_calculus::{
    caputo_apply, frac_integral_reversed, frac_integral_reversed_product_linear, FracWeights,
    TimeSeries,
};
use crate::grid::{
    h1_norm, harmonic_extension, poincare_constant, relative_l2_error, Field, Grid2D, Medium,
};
use crate::profiles::SourceProfile;
use crate::scalar::{gamma, lit, to_f64, Real};

/// Width of the boundary collar excluded from error norms, in cells.
pub const COLLAR_CELLS: usize = 2;

/// Series controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionConfig {
    pub m_max: usize,
    pub tol: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            m_max: 20,
            tol: 1e-4,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_max > 200 {
            return Err(Error::Unsupported(format!("m_max = {} exceeds 200", self.m_max)));
        }
        crate::error::check_positive("tol", self.tol)
    }
}

/// Grid, medium, `α`, `T` and the shared time step of an inversion.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a, T> {
    pub grid: &'a Grid2D,
    pub medium: &'a Medium<T>,
    pub alpha: T,
    pub final_time: f64,
    pub time_step: TimeStep,
}

impl<'a, T: Real> InverseProblem<'a, T> {
    /// Requires full boundary observation.
    pub fn new(grid: &'a Grid2D, medium: &'a Medium<T>, alpha: T, final_time: f64, cfl: f64) -> Result<Self> {
        if !grid.has_full_observation() {
            return Err(Error::PartialData);
        }
        crate::error::check_alpha(to_f64(alpha))?;
        let opts = ForwardOptions {
            cfl,
            ..Default::default()
        };
        let time_step = resolve_time_step(grid, medium, alpha, final_time, &opts)?;
        Ok(Self {
            grid,
            medium,
            alpha,
            final_time,
            time_step,
        })
    }

    fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            trace_nodes: Some(self.grid.boundary_nodes().to_vec()),
            time_step: Some(self.time_step),
            ..Default::default()
        }
    }

    /// `Λ_α u₀` on all of `∂Ω`. `u₀` may be non-zero up to `∂Ω`.
    pub fn observe(&self, u0: &Field<T>) -> Result<BoundaryTrace<T>> {
        let v0 = crate::forward::initial_velocity(u0, self.medium, self.alpha);
        let run = simulate_from_state(
            self.grid,
            u0,
            &v0,
            self.medium,
            self.alpha,
            self.final_time,
            &self.forward_options(),
        )?;
        Ok(run.trace)
    }

    /// `A_α h = (v(0), ∂ₜv(0))`.
    pub fn time_reversal(&self, h: &BoundaryTrace<T>) -> Result<(Field<T>, Field<T>)> {
        time_reversal_a(h, self.grid, self.medium, self.alpha, self.final_time)
    }

    /// `K u₀ = u₀ − Π₁A_αΛ_α u₀`.
    pub fn error_operator_apply(&self, u0: &Field<T>) -> Result<Field<T>> {
        let h = self.observe(u0)?;
        let (v0, _) = self.time_reversal(&h)?;
        Ok(u0.sub(&v0))
    }

    /// Neumann series for `h`. `truth`, when given, adds per-term errors to the report.
    pub fn neumann_reconstruct(
        &self,
        h: &BoundaryTrace<T>,
        cfg: &ReconstructionConfig,
        truth: Option<&Field<T>>,
    ) -> Result<(Field<T>, ReconstructionReport)> {
        cfg.validate()?;
        let grid = self.grid;
        let collar = grid.collar_excluded_mask(COLLAR_CELLS);
        let (mut term, _) = self.time_reversal(h)?;
        let mut sum = term.clone();
        let mut records: Vec<TermRecord> = Vec::new();
        let mut increases = 0usize;
        let mut status = SeriesStatus::MaxTerms;
        for m in 0..=cfg.m_max {
            if m > 0 {
                term = self.error_operator_apply(&term)?;
                sum = sum.add(&term);
            }
            let term_norm = to_f64(h1_norm(&term, grid));
            let sum_norm = to_f64(h1_norm(&sum, grid));
            let ratio = records.last().map(|r: &TermRecord| {
                if r.term_norm > 0.0 {
                    term_norm / r.term_norm
                } else {
                    f64::NAN
                }
            });
            let error = truth.map(|t| to_f64(relative_l2_error(&sum, t, &collar)));
            if ratio.is_some_and(|r| r > 1.0) {
                increases += 1;
            } else {
                increases = 0;
            }
            records.push(TermRecord {
                m,
                term_norm,
                sum_norm,
                ratio,
                error,
            });
            if increases >= 3 {
                status = SeriesStatus::Diverged;
                break;
            }
            if term_norm == 0.0 || term_norm <= cfg.tol * sum_norm {
                status = SeriesStatus::Converged;
                break;
            }
        }
        Ok((
            sum,
            ReconstructionReport {
                terms: records,
                status,
            },
        ))
    }
}

/// How a Neumann series ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStatus {
    Converged,
    MaxTerms,
    /// Term norms grew three times in a row.
    Diverged,
}

/// One line of the series report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermRecord {
    pub m: usize,
    /// `‖K^m A_α h‖` in the discrete `H¹₀(Ω)` norm
    pub term_norm: f64,
    pub sum_norm: f64,
    /// `‖K^m A h‖ / ‖K^{m−1} A h‖`
    pub ratio: Option<f64>,
    /// relative `ℓ²` error of the partial sum against the truth, collar excluded
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub terms: Vec<TermRecord>,
    pub status: SeriesStatus,
}

impl ReconstructionReport {
    pub fn diverged(&self) -> bool {
        self.status == SeriesStatus::Diverged
    }

    pub fn max_ratio(&self) -> f64 {
        self.terms
            .iter()
            .filter_map(|t| t.ratio)
            .fold(0.0, f64::max)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.terms.last().and_then(|t| t.error)
    }

    /// The term at which a run with tolerance `tol` would have stopped.
    pub fn stop_record(&self, tol: f64) -> Option<&TermRecord> {
        self.terms
            .iter()
            .find(|t| t.term_norm == 0.0 || t.term_norm <= tol * t.sum_norm)
    }
}

/// `A_α h` for a trace recorded on every `∂Ω` node at the forward time step.
pub fn time_reversal_a<T: Real>(
    h: &BoundaryTrace<T>,
    grid: &Grid2D,
    medium: &Medium<T>,
    alpha: T,
    final_time: f64,
) -> Result<(Field<T>, Field<T>)> {
    if h.nodes != grid.boundary_nodes() {
        return Err(Error::PartialData);
    }
    let n_steps = (final_time / h.dt).round() as usize;
    if (n_steps as f64 * h.dt - final_time).abs() > 1e-9 * final_time.max(1.0) || n_steps < 2 {
        return Err(Error::Unsupported(format!(
            "T = {final_time} is not a multiple of the trace step {}",
            h.dt
        )));
    }
    if h.samples.len() < n_steps + 1 {
        return Err(Error::TraceTooShort {
            needed: n_steps + 1,
            found: h.samples.len(),
        });
    }
    let opts = ForwardOptions {
        time_step: Some(TimeStep {
            dt: h.dt,
            n_steps,
            cfl: 0.0,
        }),
        ..Default::default()
    };
    let ts = resolve_time_step(grid, medium, alpha, final_time, &opts)?;
    let dt: T = lit(ts.dt);
    let phi = harmonic_extension(&h.samples[n_steps], grid)?;
    let stepper = Stepper::on_domain(grid, medium, alpha, dt, n_steps, DampingModel::Fractional)?;
    let nodes = grid.boundary_nodes();
    let inject = |step: usize, u: &mut [T]| {
        let row = &h.samples[n_steps - step];
        for (&k, &v) in nodes.iter().zip(row) {
            u[k] = v;
        }
    };
    let mut state = stepper.start_with(&phi, &Field::zeros(grid), inject)?;
    let mut ut = None;
    while state.step() < n_steps {
        stepper.advance(&mut state, inject)?;
        if state.step() + 1 == n_steps {
            let three: T = lit(3.0);
            let four: T = lit(4.0);
            let two_dt = lit::<T>(2.0) * dt;
            let next = state.u_next();
            let v: Vec<T> = (0..grid.len())
                .map(|k| -(three * next[k] - four * state.u_curr[k] + state.u_prev[k]) / two_dt)
                .collect();
            ut = Some(Field::from_values(grid.nx(), grid.ny(), v)?);
        }
        state.rotate();
    }
    let v0 = Field::from_values(grid.nx(), grid.ny(), state.u_curr)?;
    Ok((v0, ut.expect("at least two steps")))
}

/// `K u₀` for the scenario.
pub fn error_operator_apply<T: Real>(u0: &Field<T>, problem: &InverseProblem<'_, T>) -> Result<Field<T>> {
    problem.error_operator_apply(u0)
}

/// Neumann-series inversion of `h`.
pub fn neumann_reconstruct<T: Real>(
    h: &BoundaryTrace<T>,
    problem: &InverseProblem<'_, T>,
    cfg: &ReconstructionConfig,
    truth: Option<&Field<T>>,
) -> Result<(Field<T>, ReconstructionReport)> {
    problem.neumann_reconstruct(h, cfg, truth)
}

/// Quadrature used for `I_T^{1−α}` in [`adjoint_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReversedQuadrature {
    /// exact transpose of the forward integral
    Transpose,
    /// independent product-linear rule
    ProductLinear,
}

/// Both sides of `⟨a∂ₜᵅf, c⁻²∂ₜg⟩ = ⟨c⁻²∂ₜf, a I_T^{1−α}∂ₜg⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / (|lhs| + |rhs| + ε)`
    pub mismatch: f64,
}

/// Discrete adjoint identity over a set of nodes.
///
/// `f[i]`, `g[i]` are the time series at node `i` with coefficients `a[i]`,
/// `c[i]`; the space measure is `h²`. Both sides use the backward difference
/// for `∂ₜ` and the `ℓ²(dt)` pairing in time.
pub fn adjoint_identity_check<T: Real>(
    f: &[TimeSeries<T>],
    g: &[TimeSeries<T>],
    a: &[T],
    c: &[T],
    h: f64,
    alpha: T,
    quadrature: ReversedQuadrature,
) -> Result<AdjointCheck> {
    let n = f.len();
    for len in [g.len(), a.len(), c.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, found: len });
        }
    }
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    for i in 0..n {
        if a[i] == T::zero() {
            continue;
        }
        let w = FracWeights::new(alpha, f[i].dt(), f[i].n_steps())?;
        let df = f[i].backward_difference();
        let dg = g[i].backward_difference();
        let caputo = caputo_apply(&f[i], &w)?;
        let reversed = match quadrature {
            ReversedQuadrature::Transpose => frac_integral_reversed(&dg, alpha)?,
            ReversedQuadrature::ProductLinear => frac_integral_reversed_product_linear(&dg, alpha)?,
        };
        let weight = a[i] / (c[i] * c[i]);
        lhs += weight * caputo.inner(&dg)?;
        rhs += weight * df.inner(&reversed)?;
    }
    let h2: T = lit(h * h);
    let (lhs, rhs) = (to_f64(h2 * lhs), to_f64(h2 * rhs));
    Ok(AdjointCheck {
        lhs,
        rhs,
        mismatch: (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + f64::MIN_POSITIVE),
    })
}

/// Both sides of `‖Ku₀‖² ≤ (1 + (C_P‖a‖∞/Γ(2−α))²)‖u₀‖²` in `H¹₀(Ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct K1Check {
    pub ku0_sq: f64,
    pub bound: f64,
    pub poincare: f64,
    pub holds: bool,
}

pub fn k1_inequality_check<T: Real>(problem: &InverseProblem<'_, T>, u0: &Field<T>) -> Result<K1Check> {
    let grid = problem.grid;
    let cp: f64 = to_f64(poincare_constant::<T>(grid)?);
    let ku0 = problem.error_operator_apply(u0)?;
    let lhs = to_f64(crate::grid::dirichlet_form(&ku0, grid));
    let u_sq = to_f64(crate::grid::dirichlet_form(u0, grid));
    let g = to_f64(gamma(lit::<T>(2.0) - problem.alpha));
    let factor = 1.0 + (cp * to_f64(problem.medium.a_max()) / g).powi(2);
    Ok(K1Check {
        ku0_sq: lhs,
        bound: factor * u_sq,
        poincare: cp,
        holds: lhs <= factor * u_sq,
    })
}

/// Discrete `H¹((0,T)×Γ)` norm of a trace along its ordered node list:
/// `Σ_n Σ_i w_i dt (s² + (∂ₜs)² + (∂_σ s)²)` with arc-length weights `w_i`.
pub fn trace_h1_norm<T: Real>(trace: &BoundaryTrace<T>, grid: &Grid2D, cyclic: bool) -> f64 {
    let (weights, gaps) = grid.arclength(&trace.nodes, cyclic);
    let dt = trace.dt;
    let m = trace.nodes.len();
    let mut acc = 0.0;
    for (n, row) in trace.samples.iter().enumerate() {
        for i in 0..m {
            let v = to_f64(row[i]);
            acc += weights[i] * dt * v * v;
        }
        if n > 0 {
            let prev = &trace.samples[n - 1];
            for i in 0..m {
                let d = (to_f64(row[i]) - to_f64(prev[i])) / dt;
                acc += weights[i] * dt * d * d;
            }
        }
        for (i, &gap) in gaps.iter().enumerate() {
            if gap > 0.0 {
                let d = (to_f64(row[(i + 1) % m]) - to_f64(row[i])) / gap;
                acc += gap * dt * d * d;
            }
        }
    }
    acc.sqrt()
}

/// The compact set `𝒦` of random probes: a disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRegion {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Settings of [`stability_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub region: ProbeRegion,
    pub n_probes: usize,
    pub seed: u64,
    /// Wave number of the packets.
    pub wavenumber: f64,
}

/// One probe of [`stability_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub direction: f64,
    pub source: SourceProfile,
    /// `‖Λu₀‖_{H¹((0,T)×Γ)} / ‖u₀‖_{H¹}`
    pub ratio: f64,
    /// `E_{Ω₁∖Ω}(u, T) / ‖u₀‖²_{H¹}`
    pub exterior_energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub samples: Vec<ProbeSample>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Random wave packets supported in the probe region: stratified directions
/// over `[0, π)` (a packet splits into `±k`), jittered centers and phases.
pub fn probe_sources(cfg: &ProbeConfig) -> Vec<(f64, SourceProfile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.region;
    (0..cfg.n_probes)
        .map(|i| {
            let theta = std::f64::consts::PI * (i as f64 + rng.gen_range(0.0..1.0)) / cfg.n_probes as f64;
            let rad = 0.5 * r.radius;
            let off = rng.gen_range(0.0..0.5 * r.radius);
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let src = SourceProfile::WavePacket {
                amp: 1.0,
                cx: r.cx + off * ang.cos(),
                cy: r.cy + off * ang.sin(),
                radius: rad,
                kx: cfg.wavenumber * theta.cos(),
                ky: cfg.wavenumber * theta.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            };
            (theta, src)
        })
        .collect()
}

/// Empirical stability ratios `‖Λ_αu₀‖_{H¹((0,T)×Γ)}/‖u₀‖_{H¹}` over random probes.
pub fn stability_probe<T: Real>(
    grid: &Grid2D,
    medium: &Medium<T>,
    alpha: T,
    final_time: f64,
    cfg: &ProbeConfig,
) -> Result<StabilityReport> {
    let cyclic = grid.has_full_observation();
    let exterior: Vec<bool> = grid
        .omega_mask()
        .iter()
        .zip(grid.boundary_mask())
        .map(|(&o, &b)| !o || b)
        .collect();
    let mut samples = Vec::with_capacity(cfg.n_probes);
    for (direction, source) in probe_sources(cfg) {
        let spec = crate::grid::SourceSpec::<T>::from_profile(grid, &source)?;
        let run = crate::forward::simulate_forward(
            grid,
            &spec,
            medium,
            alpha,
            final_time,
            &ForwardOptions::default(),
        )?;
        let u_norm = to_f64(h1_norm(&spec.u0, grid));
        let ratio = trace_h1_norm(&run.trace, grid, cyclic) / u_norm;
        let e_ext = to_f64(energy(grid, medium, &run.u_final, &run.ut_final, Some(&exterior)));
        samples.push(ProbeSample {
            direction,
            source,
            ratio,
            exterior_energy_ratio: e_ext / (u_norm * u_norm),
        });
    }
    let min_ratio = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    Ok(StabilityReport {
        samples,
        min_ratio,
        max_ratio,
    })
}
