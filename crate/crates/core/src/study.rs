//! Refinement studies: errors and observed orders over factor-2 levels.

use std::path::Path;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::forward::{
    box_mode_frequency, simulate_forward, simulate_from_state, zero_crossing_frequency, ForwardOptions,
};
use crate::frac_calculus::{caputo_apply, make_l1_weights, TimeSeries};
use crate::grid::{Field, Grid2D, Medium};
use crate::reconstruction::InverseProblem;
use crate::scalar::gamma;

/// Step sizes of the Caputo rows are `1/(CAPUTO_BASE·2^i)`.
pub const CAPUTO_BASE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// max error of the L1 Caputo derivative of `t²` on `[0, 1]`
    CaputoT2,
    /// relative error of the `(1,1)` mode frequency of the unit box
    StandingMode,
    /// `max_n |Eⁿ − E⁰| / E⁰` with `a ≡ 0`
    EnergyDrift,
    /// relative L² error of the Neumann-series reconstruction
    Reconstruction,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::CaputoT2 => "caputo_t2",
            Quantity::StandingMode => "standing_mode",
            Quantity::EnergyDrift => "energy_drift",
            Quantity::Reconstruction => "reconstruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub quantity: Quantity,
    pub level: usize,
    /// NaN for time-only quantities
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `log₂(previous error / error)`
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn errors(&self, q: Quantity) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == q).map(|r| r.error).collect()
    }

    pub fn orders(&self, q: Quantity) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == q).filter_map(|r| r.order).collect()
    }

    /// Smallest order observed between consecutive levels.
    pub fn min_order(&self, q: Quantity) -> Option<f64> {
        self.orders(q).into_iter().reduce(f64::min)
    }

    pub fn monotone_decreasing(&self, q: Quantity) -> bool {
        self.errors(q).windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,level,h,dt,error,order\n");
        for r in &self.rows {
            let order = r.order.map_or(String::new(), |o| format!("{o}"));
            let h = if r.h.is_nan() { String::new() } else { format!("{}", r.h) };
            out += &format!("{},{},{},{},{},{}\n", r.quantity.name(), r.level, h, r.dt, r.error, order);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn push_series(rows: &mut Vec<StudyRow>, quantity: Quantity, samples: Vec<(usize, f64, f64, f64)>) {
    let mut prev: Option<f64> = None;
    for (level, h, dt, error) in samples {
        let order = prev.map(|p| (p / error).log2());
        rows.push(StudyRow {
            quantity,
            level,
            h,
            dt,
            error,
            order,
        });
        prev = Some(error);
    }
}

/// Max error of the L1 Caputo derivative of `t²` against `2t^{2−α}/Γ(3−α)`.
pub fn caputo_t2_error(alpha: f64, n: usize) -> Result<f64> {
    let dt = 1.0 / n as f64;
    let f = TimeSeries::sample(dt, n, |t| t * t)?;
    let w = make_l1_weights(alpha, dt, n)?;
    let d = caputo_apply(&f, &w)?;
    let c = 2.0 / gamma(3.0 - alpha);
    Ok(d.times()
        .zip(d.values())
        .map(|(t, &v)| (v - c * t.powf(2.0 - alpha)).abs())
        .fold(0.0, f64::max))
}

/// Relative frequency error of the `(1,1)` mode on a unit box with `n` cells.
/// Returns `(error, dt)`.
pub fn standing_mode_error(n: usize, cfl: f64) -> Result<(f64, f64)> {
    let g = Grid2D::dirichlet_box(n, 1.0 / n as f64)?;
    let m: Medium<f64> = Medium::uniform(&g);
    let pi = std::f64::consts::PI;
    let u0 = Field::from_fn(&g, |x, y| (pi * x).sin() * (pi * y).sin());
    let probe = g.index(n / 2, n / 2);
    let opts = ForwardOptions {
        cfl,
        trace_nodes: Some(vec![probe]),
        enforce_margin: false,
        ..Default::default()
    };
    let run = simulate_from_state(&g, &u0, &Field::zeros(&g), &m, 0.5, 8.0, &opts)?;
    let series: Vec<f64> = run.trace.samples.iter().map(|r| r[0]).collect();
    let omega = zero_crossing_frequency(&series, run.trace.dt).ok_or(Error::NotConverged {
        what: "standing mode zero crossings",
        residual: f64::NAN,
        iterations: series.len(),
    })?;
    let exact = box_mode_frequency(1.0, 1, 1, 1.0);
    Ok(((omega - exact).abs() / exact, run.trace.dt))
}

/// Energy drift of the scenario with the damping removed, at spacing `h`.
pub fn undamped_drift(base: &ScenarioConfig, h: f64) -> Result<(f64, f64)> {
    let sc = base.build_at(h)?;
    let free = sc.medium.with_damping(Field::zeros(&sc.grid));
    let opts = ForwardOptions {
        cfl: base.cfl,
        energy: true,
        ..Default::default()
    };
    let run = simulate_forward(&sc.grid, &sc.source, &free, base.alpha, base.final_time, &opts)?;
    let e = run.energy.expect("energy was requested");
    let e0 = e.energy[0];
    if e0 <= 0.0 {
        return Err(Error::InvalidSource("source has zero energy".into()));
    }
    // the last entry uses a one-sided velocity
    let drift = e.energy[..e.energy.len() - 1]
        .iter()
        .map(|&en| (en - e0).abs() / e0)
        .fold(0.0, f64::max);
    Ok((drift, run.time_step.dt))
}

/// Reconstruction error of the scenario at spacing `h`, data simulated on the same grid.
pub fn reconstruction_error(base: &ScenarioConfig, h: f64) -> Result<(f64, f64)> {
    let sc = base.build_at(h)?;
    let p = InverseProblem::new(&sc.grid, &sc.medium, base.alpha, base.final_time, base.cfl)?;
    let data = p.observe(&sc.source.u0)?;
    let (_, report) = p.neumann_reconstruct(&data, &base.reconstruction, Some(&sc.source.u0))?;
    if report.diverged() {
        return Err(Error::NotConverged {
            what: "Neumann series",
            residual: report.max_ratio(),
            iterations: report.terms.len(),
        });
    }
    Ok((report.final_error().unwrap_or(f64::NAN), p.time_step.dt))
}

/// Runs every quantity at each level. `levels` are grid denominators `1/h`,
/// at least three, each twice the previous.
pub fn convergence_study(base: &ScenarioConfig, levels: &[usize]) -> Result<StudyTable> {
    if levels.len() < 3 || levels[0] == 0 || levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Unsupported(
            "refinement needs at least 3 levels, each twice the previous".into(),
        ));
    }
    let mut rows = Vec::new();

    let mut s = Vec::new();
    for i in 0..levels.len() {
        let n = CAPUTO_BASE << i;
        s.push((n, f64::NAN, 1.0 / n as f64, caputo_t2_error(base.alpha, n)?));
    }
    push_series(&mut rows, Quantity::CaputoT2, s);

    let mut s = Vec::new();
    for &n in levels {
        let h = 1.0 / n as f64;
        let (err, dt) = standing_mode_error(n, base.cfl)?;
        s.push((n, h, dt, err));
    }
    push_series(&mut rows, Quantity::StandingMode, s);

    let mut s = Vec::new();
    for &n in levels {
        let h = 1.0 / n as f64;
        let (drift, dt) = undamped_drift(base, h)?;
        s.push((n, h, dt, drift));
    }
    push_series(&mut rows, Quantity::EnergyDrift, s);

    let mut s = Vec::new();
    for &n in levels {
        let h = 1.0 / n as f64;
        let (err, dt) = reconstruction_error(base, h)?;
        s.push((n, h, dt, err));
    }
    push_series(&mut rows, Quantity::Reconstruction, s);

    Ok(StudyTable { rows })
}
