use fracpat_core::forward::*;
use fracpat_core::frac_calculus::TimeSeries;
use fracpat_core::grid::*;
use fracpat_core::profiles::{DampingProfile, SourceProfile, SpeedProfile};
use fracpat_core::reconstruction::*;
use fracpat_core::Error;

const T: f64 = 2.5;

fn disk(h: f64, c_max: f64) -> Grid2D {
    build_grid(&GridConfig {
        h,
        shape: DomainShape::unit_disk(),
        observation: Observation::Full,
        final_time: T,
        c_max,
        outer_half_width: None,
    })
    .unwrap()
}

fn medium(g: &Grid2D, a: f64) -> Medium<f64> {
    Medium::from_profiles(
        g,
        &SpeedProfile::Bump {
            amp: 0.2,
            cx: 0.3,
            cy: 0.1,
            radius: 0.5,
        },
        &DampingProfile::Bump {
            amp: a,
            cx: 0.0,
            cy: 0.0,
            radius: 0.3,
        },
        1.0,
    )
}

fn source(g: &Grid2D) -> SourceSpec<f64> {
    SourceSpec::from_profile(
        g,
        &SourceProfile::Bump {
            amp: 1.0,
            cx: 0.1,
            cy: -0.1,
            radius: 0.5,
        },
    )
    .unwrap()
}

fn trace_of(p: &InverseProblem<'_, f64>, src: &SourceSpec<f64>) -> BoundaryTrace<f64> {
    p.observe(&src.u0).unwrap()
}

#[test]
fn zero_data_reconstructs_zero() {
    let g = disk(1.0 / 32.0, 1.2);
    let m = medium(&g, 0.05);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let h = BoundaryTrace::zeros(p.time_step.dt, g.boundary_nodes().to_vec(), p.time_step.n_steps);
    let (u, rep) = p.neumann_reconstruct(&h, &ReconstructionConfig::default(), None).unwrap();
    assert_eq!(u.max_abs(), 0.0);
    assert_eq!(rep.status, SeriesStatus::Converged);
}

#[test]
fn undamped_time_reversal_and_series() {
    let g = disk(1.0 / 64.0, 1.2);
    let m = medium(&g, 0.0);
    let src = source(&g);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let h = trace_of(&p, &src);
    let collar = g.collar_excluded_mask(COLLAR_CELLS);
    let (v0, _) = p.time_reversal(&h).unwrap();
    let e0 = relative_l2_error(&v0, &src.u0, &collar);
    let cfg = ReconstructionConfig { m_max: 6, tol: 1e-6 };
    let (u, rep) = p.neumann_reconstruct(&h, &cfg, Some(&src.u0)).unwrap();
    let e = relative_l2_error(&u, &src.u0, &collar);
    println!("{e0} {e} {:?}", rep.terms);
    assert!(e0 < 0.1, "{e0}");
    assert!(e < e0);
    assert!(rep.max_ratio() < 1.0);
}

#[test]
fn damped_series_converges() {
    let g = disk(1.0 / 64.0, 1.2);
    let m = medium(&g, 0.05);
    let src = source(&g);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let h = trace_of(&p, &src);
    let cfg = ReconstructionConfig { m_max: 8, tol: 1e-5 };
    let (_, rep) = p.neumann_reconstruct(&h, &cfg, Some(&src.u0)).unwrap();
    println!("{:?}", rep);
    assert!(!rep.diverged());
    assert!(rep.max_ratio() < 1.0);
    let errs: Vec<f64> = rep.terms.iter().map(|t| t.error.unwrap()).collect();
    assert!(errs.last().unwrap() < &errs[0]);
    assert!(errs.last().unwrap() < &0.05);
}

#[test]
fn error_operator_is_linear() {
    let g = disk(1.0 / 32.0, 1.2);
    let m = medium(&g, 0.05);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let u = source(&g).u0;
    let w = Field::from_fn(&g, |x, y| if x * x + y * y < 0.5 { (3.0 * x).sin() * y * (0.5 - x * x - y * y) } else { 0.0 });
    let ku = p.error_operator_apply(&u).unwrap();
    let kw = p.error_operator_apply(&w).unwrap();
    let kc = p.error_operator_apply(&u.scale(2.0).add(&w.scale(-0.5))).unwrap();
    let diff = ku.scale(2.0).add(&kw.scale(-0.5)).sub(&kc).max_abs();
    assert!(diff < 1e-12 * kc.max_abs().max(1.0), "{diff}");
}

#[test]
fn k1_bound_holds() {
    let g = disk(1.0 / 32.0, 1.2);
    let m = medium(&g, 0.05);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let c = k1_inequality_check(&p, &source(&g).u0).unwrap();
    assert!(c.holds, "{c:?}");
    assert!((c.poincare - 1.0 / 2.404_825_557_695_773).abs() < 0.05);
}

#[test]
fn reversal_rejects_bad_traces() {
    let g = disk(1.0 / 32.0, 1.2);
    let m = medium(&g, 0.05);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let mut h = trace_of(&p, &source(&g));
    h.samples.truncate(10);
    assert!(matches!(p.time_reversal(&h), Err(Error::TraceTooShort { .. })));
    let part = BoundaryTrace::<f64>::zeros(p.time_step.dt, g.boundary_nodes()[..10].to_vec(), p.time_step.n_steps);
    assert!(matches!(p.time_reversal(&part), Err(Error::PartialData)));

    let half = build_grid(&GridConfig {
        h: 1.0 / 32.0,
        shape: DomainShape::unit_disk(),
        observation: Observation::Arc { start: 0.0, end: std::f64::consts::PI },
        final_time: T,
        c_max: 1.2,
        outer_half_width: None,
    })
    .unwrap();
    let mh = medium(&half, 0.05);
    assert!(matches!(InverseProblem::new(&half, &mh, 0.5, T, 0.45), Err(Error::PartialData)));
}

fn series(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> TimeSeries<f64> {
    TimeSeries::sample(dt, n, f).unwrap()
}

#[test]
fn adjoint_identity() {
    let n = 400;
    let dt = 1.0 / n as f64;
    let f: Vec<_> = (0..3).map(|i| series(n, dt, |t| (t * (1.0 + i as f64)).sin() + t * t)).collect();
    let g: Vec<_> = (0..3).map(|i| series(n, dt, |t| (2.0 * t + i as f64).cos() * t)).collect();
    let a = [0.1, 0.0, 0.3];
    let c = [1.0, 1.1, 0.9];
    let exact = adjoint_identity_check(&f, &g, &a, &c, 0.01, 0.5, ReversedQuadrature::Transpose).unwrap();
    assert!(exact.mismatch < 1e-12, "{exact:?}");
    let pl = adjoint_identity_check(&f, &g, &a, &c, 0.01, 0.5, ReversedQuadrature::ProductLinear).unwrap();
    assert!(pl.mismatch < 2e-2, "{pl:?}");
    let bad = adjoint_identity_check(&f, &g[..2], &a, &c, 0.01, 0.5, ReversedQuadrature::Transpose);
    assert!(matches!(bad, Err(Error::LengthMismatch { .. })));
}

#[test]
fn probe_sources_are_seeded() {
    let cfg = ProbeConfig {
        region: ProbeRegion { cx: 0.0, cy: 0.0, radius: 0.5 },
        n_probes: 8,
        seed: 7,
        wavenumber: 20.0,
    };
    let a = probe_sources(&cfg);
    assert_eq!(a, probe_sources(&cfg));
    for (theta, _) in &a {
        assert!((0.0..std::f64::consts::PI).contains(theta));
    }
    let other = probe_sources(&ProbeConfig { seed: 8, ..cfg });
    assert_ne!(a, other);
}

#[test]
fn heavy_damping_is_flagged_divergent() {
    let g = disk(1.0 / 32.0, 1.2);
    let m = Medium::from_profiles(
        &g,
        &SpeedProfile::Constant(1.0),
        &DampingProfile::Bump {
            amp: 200.0,
            cx: 0.0,
            cy: 0.0,
            radius: 0.9,
        },
        1.0,
    );
    let src = source(&g);
    let p = InverseProblem::new(&g, &m, 0.5, T, 0.45).unwrap();
    let h = trace_of(&p, &src);
    let (_, rep) = p.neumann_reconstruct(&h, &ReconstructionConfig::default(), None).unwrap();
    assert!(rep.diverged(), "{rep:?}");
    assert_eq!(rep.terms.len(), 4);
}
