//! Discrete Caputo derivative and Riemann–Liouville integrals of order `1 − α`.
//!
//! The Caputo derivative uses the L1 scheme (piecewise-linear interpolation of
//! `f`), with weights `b[k] = (k+1)^{1−α} − k^{1−α}`. The fractional integral
//! `𝓘_{1−α}u(t) = Γ(1−α)^{-1} ∫_0^t u(s)(t−s)^{−α} ds` integrates the kernel
//! exactly against the piecewise-constant interpolant that takes the value
//! `u[k]` on `(t_{k−1}, t_k]`. With that choice
//!
//! * `caputo(f) = 𝓘_{1−α}(δf)` where `δf[k] = (f[k] − f[k−1])/dt`, exactly;
//! * the quadrature matrix is lower-triangular Toeplitz in `b`, whose symmetric
//!   part is positive semidefinite for every `α ∈ (0,1)`;
//! * the time-reversed integral `I_T^{1−α}` is defined as its transpose, so the
//!   pairing `⟨𝓘f, g⟩ = ⟨f, I_T g⟩` holds to rounding.
//!
//! [`frac_integral_reversed_product_linear`] is an independent quadrature of
//! the reversed kernel, kept as a cross-check.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_alpha, check_positive, Error, Result};
use crate::scalar::{from_usize, gamma, lit, to_f64, Real};

/// L1 weights for a fixed `(α, dt, n_steps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FracWeights<T> {
    alpha: T,
    dt: T,
    n_steps: usize,
    b: Vec<T>,
    scale: T,
    integral_scale: T,
}

/// `(k+1)^μ − k^μ` without cancellation for large `k`.
fn l1_weight<T: Real>(mu: T, k: usize) -> T {
    if k == 0 {
        return T::one();
    }
    let kf: T = from_usize(k);
    kf.powf(mu) * (mu * (T::one() / kf).ln_1p()).exp_m1()
}

/// Builds the L1 weight table.
pub fn make_l1_weights<T: Real>(alpha: T, dt: T, n_steps: usize) -> Result<FracWeights<T>> {
    FracWeights::new(alpha, dt, n_steps)
}

impl<T: Real> FracWeights<T> {
    pub fn new(alpha: T, dt: T, n_steps: usize) -> Result<Self> {
        check_alpha(to_f64(alpha))?;
        check_positive("dt", to_f64(dt))?;
        if n_steps == 0 {
            return Err(Error::NonPositive {
                name: "n_steps",
                value: 0.0,
            });
        }
        let mu = T::one() - alpha;
        let b = (0..n_steps).map(|k| l1_weight(mu, k)).collect();
        let g = gamma(T::one() + mu);
        Ok(Self {
            alpha,
            dt,
            n_steps,
            b,
            scale: dt.powf(-alpha) / g,
            integral_scale: dt.powf(mu) / g,
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `b[k]` for `k < n_steps`.
    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// `dt^{−α} / Γ(2−α)`, the prefactor of the Caputo sum.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// `dt^{1−α} / Γ(2−α)`, the prefactor of the fractional integral sum.
    pub fn integral_scale(&self) -> T {
        self.integral_scale
    }

    /// Caputo derivative at step `n` from the increments `d[j] = f[j+1] − f[j]`,
    /// `j < n`. Sums in ascending `k`.
    #[inline]
    pub fn caputo_from_increments(&self, increments: &[T], n: usize) -> T {
        debug_assert!(n <= increments.len());
        let mut acc = T::zero();
        for k in 0..n {
            acc += self.b[k] * increments[n - 1 - k];
        }
        self.scale * acc
    }
}

/// Uniformly sampled series on `[0, n_steps·dt]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    dt: T,
    values: Vec<T>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(dt: T, values: Vec<T>) -> Result<Self> {
        check_positive("dt", to_f64(dt))?;
        if values.len() < 2 {
            return Err(Error::LengthMismatch {
                expected: 2,
                found: values.len(),
            });
        }
        Ok(Self { dt, values })
    }

    /// Samples `f` at `t_k = k·dt`, `k = 0..=n_steps`.
    pub fn sample(dt: T, n_steps: usize, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(dt, (0..=n_steps).map(|k| f(from_usize::<T>(k) * dt)).collect())
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.values.len()).map(move |k| from_usize::<T>(k) * self.dt)
    }

    /// Backward difference `δf[k] = (f[k] − f[k−1])/dt`, with `δf[0] = 0`.
    pub fn backward_difference(&self) -> Self {
        let mut out = vec![T::zero(); self.values.len()];
        for k in 1..self.values.len() {
            out[k] = (self.values[k] - self.values[k - 1]) / self.dt;
        }
        Self {
            dt: self.dt,
            values: out,
        }
    }

    /// `ℓ²(dt)` inner product `dt Σ_k a[k] b[k]`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(self.dt * dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> T {
        (self.dt * dot(&self.values, &self.values)).sqrt()
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Which quadrature a [`QuadOperator`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    CaputoL1,
    FracIntegralForward,
    FracIntegralReversed,
}

/// A fractional operator stored as convolution weights.
#[derive(Debug, Clone)]
pub struct QuadOperator<T> {
    kind: QuadKind,
    weights: FracWeights<T>,
}

impl<T: Real> QuadOperator<T> {
    pub fn new(kind: QuadKind, alpha: T, dt: T, n_steps: usize) -> Result<Self> {
        Ok(Self {
            kind,
            weights: FracWeights::new(alpha, dt, n_steps)?,
        })
    }

    pub fn from_weights(kind: QuadKind, weights: FracWeights<T>) -> Self {
        Self { kind, weights }
    }

    pub fn kind(&self) -> QuadKind {
        self.kind
    }

    pub fn weights(&self) -> &FracWeights<T> {
        &self.weights
    }

    pub fn apply(&self, u: &[T]) -> Result<Vec<T>> {
        let n_steps = self.weights.n_steps;
        if u.len() != n_steps + 1 {
            return Err(Error::LengthMismatch {
                expected: n_steps + 1,
                found: u.len(),
            });
        }
        let b = &self.weights.b;
        let mut out = vec![T::zero(); n_steps + 1];
        match self.kind {
            QuadKind::CaputoL1 => {
                for n in 1..=n_steps {
                    let mut acc = T::zero();
                    for k in 0..n {
                        acc += b[k] * (u[n - k] - u[n - k - 1]);
                    }
                    out[n] = self.weights.scale * acc;
                }
            }
            QuadKind::FracIntegralForward => {
                for n in 1..=n_steps {
                    let mut acc = T::zero();
                    for k in 0..n {
                        acc += b[k] * u[n - k];
                    }
                    out[n] = self.weights.integral_scale * acc;
                }
            }
            QuadKind::FracIntegralReversed => {
                for k in 1..=n_steps {
                    let mut acc = T::zero();
                    for j in 0..=(n_steps - k) {
                        acc += b[j] * u[k + j];
                    }
                    out[k] = self.weights.integral_scale * acc;
                }
            }
        }
        Ok(out)
    }
}

fn apply_series<T: Real>(kind: QuadKind, u: &TimeSeries<T>, alpha: T) -> Result<TimeSeries<T>> {
    let op = QuadOperator::new(kind, alpha, u.dt, u.n_steps())?;
    Ok(TimeSeries {
        dt: u.dt,
        values: op.apply(&u.values)?,
    })
}

/// Caputo derivative by the L1 scheme; `output[0] = 0`.
pub fn caputo_apply<T: Real>(f: &TimeSeries<T>, w: &FracWeights<T>) -> Result<TimeSeries<T>> {
    if f.len() != w.n_steps + 1 {
        return Err(Error::LengthMismatch {
            expected: w.n_steps + 1,
            found: f.len(),
        });
    }
    let op = QuadOperator::from_weights(QuadKind::CaputoL1, w.clone());
    Ok(TimeSeries {
        dt: f.dt,
        values: op.apply(&f.values)?,
    })
}

/// `𝓘_{1−α}u(t_n)`.
pub fn frac_integral_forward<T: Real>(u: &TimeSeries<T>, alpha: T) -> Result<TimeSeries<T>> {
    apply_series(QuadKind::FracIntegralForward, u, alpha)
}

/// `I_T^{1−α}u(t_k)`, the exact transpose of [`frac_integral_forward`].
pub fn frac_integral_reversed<T: Real>(u: &TimeSeries<T>, alpha: T) -> Result<TimeSeries<T>> {
    apply_series(QuadKind::FracIntegralReversed, u, alpha)
}

/// Product-trapezoidal weights `a_{j,m}` for `Γ(μ)^{-1}∫_0^{t_m}(t_m−s)^{μ−1}v(s)ds`
/// with `v` piecewise linear; the common prefactor is `dt^μ/Γ(μ+2)`.
fn product_linear_weight<T: Real>(mu: T, j: usize, m: usize) -> T {
    let one = T::one();
    let p = mu + one;
    let mf: T = from_usize(m);
    if j == 0 {
        (mf - one).powf(p) - (mf - mu - one) * mf.powf(mu)
    } else if j == m {
        one
    } else {
        let k: T = from_usize(m - j);
        (k + one).powf(p) - lit::<T>(2.0) * k.powf(p) + (k - one).powf(p)
    }
}

/// Reversed fractional integral by exact integration of `(s−t)^{−α}` against
/// the piecewise-linear interpolant of `u`. Not a transpose of anything in
/// this module; used to cross-check the transpose construction.
pub fn frac_integral_reversed_product_linear<T: Real>(
    u: &TimeSeries<T>,
    alpha: T,
) -> Result<TimeSeries<T>> {
    check_alpha(to_f64(alpha))?;
    let n = u.n_steps();
    let mu = T::one() - alpha;
    let pref = u.dt.powf(mu) / gamma(mu + lit(2.0));
    let mut out = vec![T::zero(); n + 1];
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let m = n - k;
        let mut acc = T::zero();
        for j in 0..=m {
            acc += product_linear_weight(mu, j, m) * u.values[n - j];
        }
        *o = pref * acc;
    }
    Ok(TimeSeries {
        dt: u.dt,
        values: out,
    })
}

/// One frequency of the spectral comparison.
#[derive(Debug, Clone, Copy)]
pub struct SymbolSample<T> {
    pub omega: T,
    pub amplitude: T,
    pub phase: T,
    /// `|S − (iω)^α| / |ω|^α`, which bounds both the amplitude and phase error.
    pub rel_deviation: T,
}

#[derive(Debug, Clone)]
pub struct SpectralReport<T> {
    pub alpha: T,
    pub samples: Vec<SymbolSample<T>>,
    pub max_rel_deviation: T,
}

/// Caputo derivative of the complex series `e^{iωt} − 1` (real and imaginary
/// parts handled separately).
fn caputo_of_exponentials<T: Real>(
    w: &FracWeights<T>,
    omegas: &[T],
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    let n = w.n_steps;
    let mut re = vec![T::zero(); n + 1];
    let mut im = vec![T::zero(); n + 1];
    for k in 0..=n {
        let t = from_usize::<T>(k) * w.dt;
        for &om in omegas {
            re[k] += (om * t).cos() - T::one();
            im[k] += (om * t).sin();
        }
    }
    let op = QuadOperator::from_weights(QuadKind::CaputoL1, w.clone());
    let dre = op.apply(&re)?;
    let dim = op.apply(&im)?;
    let input = re.iter().zip(&im).map(|(&a, &b)| Complex::new(a, b)).collect();
    let output = dre.iter().zip(&dim).map(|(&a, &b)| Complex::new(a, b)).collect();
    Ok((input, output))
}

fn hann<T: Real>(j: usize, len: usize) -> T {
    let x = lit::<T>(2.0) * T::PI() * from_usize::<T>(j) / from_usize::<T>(len);
    lit::<T>(0.5) * (T::one() - x.cos())
}

fn reference_symbol<T: Real>(alpha: T, omega: T) -> Complex<T> {
    let amp = omega.abs().powf(alpha);
    let arg = alpha * T::FRAC_PI_2() * omega.signum();
    Complex::from_polar(amp, arg)
}

/// Estimates the symbol of the discrete Caputo operator at a single angular
/// frequency by a Hann-windowed projection over the second half of
/// `[0, n·dt]`. The estimate approaches `(iω)^α` once the start-up transient
/// has decayed and `ω·dt` is small.
pub fn symbol_at<T: Real>(alpha: T, n: usize, dt: T, omega: T) -> Result<Complex<T>> {
    let w = FracWeights::new(alpha, dt, n)?;
    let (_, out) = caputo_of_exponentials(&w, &[omega])?;
    let start = n / 2;
    let len = n + 1 - start;
    let mut num = Complex::new(T::zero(), T::zero());
    let mut den = T::zero();
    for j in 0..len {
        let k = start + j;
        let t = from_usize::<T>(k) * dt;
        let win: T = hann(j, len);
        num += out[k] * Complex::from_polar(win, -omega * t);
        den += win;
    }
    Ok(num / den)
}

/// Compares the discrete Caputo operator with the symbol `(iω)^α` over a
/// mid band of frequencies.
///
/// The signal has `n + 1` samples; the analysis window is the last `n/2`
/// samples (`n` must be a power of two). Tones sit on exact bins
/// `j = 8, 12, 16, …` of the window transform while `ω·dt ≤ 0.1`.
pub fn spectral_symbol_check<T: Real>(alpha: T, n: usize, dt: T) -> Result<SpectralReport<T>> {
    if !n.is_power_of_two() || n < 64 {
        return Err(Error::Unsupported(format!(
            "spectral check needs a power-of-two length of at least 64, got {n}"
        )));
    }
    let win_len = n / 2;
    let bin_omega = lit::<T>(2.0) * T::PI() / (from_usize::<T>(win_len) * dt);
    let mut bins = Vec::new();
    let mut j = 8;
    while from_usize::<T>(j) * bin_omega * dt <= lit(0.1) && j < win_len / 2 {
        bins.push(j);
        j += 4;
    }
    if bins.is_empty() {
        return Err(Error::Unsupported(format!(
            "no mid-band bins for n = {n}, dt = {dt}"
        )));
    }
    let omegas: Vec<T> = bins.iter().map(|&j| from_usize::<T>(j) * bin_omega).collect();
    let w = FracWeights::new(alpha, dt, n)?;
    let (input, output) = caputo_of_exponentials(&w, &omegas)?;

    let start = n - win_len;
    let window = |sig: &[Complex<T>]| -> Vec<Complex<f64>> {
        (0..win_len)
            .map(|j| {
                let z = sig[start + j] * hann::<T>(j, win_len);
                Complex::new(to_f64(z.re), to_f64(z.im))
            })
            .collect()
    };
    let mut a = window(&input);
    let mut b = window(&output);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(win_len);
    fft.process(&mut a);
    fft.process(&mut b);

    let mut samples = Vec::with_capacity(bins.len());
    let mut max_dev = T::zero();
    for (&j, &om) in bins.iter().zip(&omegas) {
        let r = b[j] / a[j];
        let s = Complex::new(lit::<T>(r.re), lit::<T>(r.im));
        let reference = reference_symbol(alpha, om);
        let dev = (s - reference).norm() / reference.norm();
        max_dev = max_dev.max(dev);
        samples.push(SymbolSample {
            omega: om,
            amplitude: s.norm(),
            phase: s.arg(),
            rel_deviation: dev,
        });
    }
    Ok(SpectralReport {
        alpha,
        samples,
        max_rel_deviation: max_dev,
    })
}
