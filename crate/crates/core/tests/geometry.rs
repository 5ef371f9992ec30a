use fracpat_core::geometry::*;
use fracpat_core::grid::*;
use fracpat_core::profiles::SpeedProfile;
use fracpat_core::Error;

fn disk_grid(h: f64, obs: Observation) -> Grid2D {
    build_grid(&GridConfig {
        h,
        shape: DomainShape::unit_disk(),
        observation: obs,
        final_time: 0.2,
        c_max: 1.0,
        outer_half_width: None,
    })
    .unwrap()
}

fn radial(speed: SpeedProfile, s_lo: f64, s_hi: f64, grid: &Grid2D) -> Geometry {
    let fol = FoliationSpec {
        rho: LevelFunction::Radial { cx: 0.0, cy: 0.0 },
        s_lo,
        s_hi,
    };
    Geometry::for_grid(SoundMetric::new(speed), fol, grid).unwrap()
}

fn bump() -> SpeedProfile {
    SpeedProfile::Bump {
        amp: 0.2,
        cx: 0.3,
        cy: 0.1,
        radius: 0.5,
    }
}

#[test]
fn normal_field_examples() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let n = geo.normal([0.3, -0.4]).unwrap();
    assert!((n[0] + 0.6).abs() < 1e-14 && (n[1] - 0.8).abs() < 1e-14);
    let geo2 = radial(SpeedProfile::Constant(2.0), 0.1, 1.0, &g);
    let n = geo2.normal([0.3, -0.4]).unwrap();
    assert!((n[0].hypot(n[1]) - 2.0).abs() < 1e-14);
    assert!(matches!(geo.normal([0.0, 0.0]), Err(Error::DegenerateGradient { .. })));

    let ell = Geometry::for_grid(
        SoundMetric::new(bump()),
        FoliationSpec {
            rho: LevelFunction::Elliptic { cx: 0.0, cy: 0.0, a: 1.0, b: 0.6 },
            s_lo: 0.2,
            s_hi: 1.0,
        },
        &g,
    )
    .unwrap();
    let (field, band) = leaf_normal_field(&ell, &g).unwrap();
    let mut count = 0;
    for k in 0..g.len() {
        if !band[k] {
            continue;
        }
        let (x, y) = g.coords(k);
        let grad = ell.foliation.rho.gradient([x, y]);
        let nu = field[k];
        // ν points to decreasing ρ
        assert!(nu[0] * grad[0] + nu[1] * grad[1] < 0.0);
        assert!((ell.metric.norm([x, y], nu) - 1.0).abs() < 1e-12);
        count += 1;
    }
    assert!(count > 100);
}

#[test]
fn circle_curvature() {
    let h = 1.0 / 128.0;
    let g = disk_grid(h, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    for r in [0.3, 0.5, 0.8] {
        let c = convexity_check(&geo, r, 64, h).unwrap();
        assert!((c.kappa * r - 1.0).abs() < 0.02, "r={r}: {}", c.kappa);
        assert!((c.kappa_max * r - 1.0).abs() < 0.02);
        assert!(c.pass);
    }
    assert!(geo.convexity(0.5, 32, h).is_err());
}

#[test]
fn flat_leaf_has_zero_curvature() {
    let h = 1.0 / 128.0;
    let g = disk_grid(h, Observation::Full);
    let geo = Geometry::for_grid(
        SoundMetric::new(SpeedProfile::Constant(1.0)),
        FoliationSpec {
            rho: LevelFunction::Linear { angle: 0.3, half_length: 0.8 },
            s_lo: -1.0,
            s_hi: 1.0,
        },
        &g,
    )
    .unwrap();
    let c = geo.convexity(0.2, 64, h).unwrap();
    assert!(c.kappa.abs() < 1e-3 && c.kappa_max.abs() < 1e-3, "{c:?}");
    assert!(!c.pass);
}

#[test]
fn radial_speed_curvature_sign() {
    let h = 1.0 / 128.0;
    let g = disk_grid(h, Observation::Full);
    for (k, r) in [(0.3, 0.5), (3.0, 0.8), (1.0, 0.6)] {
        let sp = SpeedProfile::Radial { k };
        let geo = radial(sp, 0.1, 1.0, &g);
        let c = geo.convexity(r, 64, h).unwrap();
        let x = [r, 0.0];
        let cc = sp.speed(x[0], x[1]);
        let dc = sp.gradient(x[0], x[1]);
        let crit = 1.0 - (x[0] * dc[0] + x[1] * dc[1]) / cc;
        assert_eq!(c.kappa > 0.0, crit > 0.0, "k={k} r={r}");
        // κ_g = c/r − ∂_r c for radial speeds
        let exact = cc / r - 2.0 * k * r;
        assert!((c.kappa - exact).abs() < 0.02 * exact.abs().max(1.0), "{} {exact}", c.kappa);
    }
}

#[test]
fn dist_nu_examples() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let d = dist_nu(&geo, [0.8 * 0.6, 0.8 * 0.8], 0.5).unwrap();
    assert!((d - 0.3).abs() < 1e-6);
    let tr = geo.trace_to_level([0.0, -0.8], 0.5).unwrap();
    assert!(tr.monotone);
    assert!((tr.end[1] + 0.5).abs() < 1e-6);
    let geo2 = radial(SpeedProfile::Constant(2.0), 0.1, 1.0, &g);
    assert!((geo2.dist_nu([0.8, 0.0], 0.5).unwrap() - 0.15).abs() < 1e-6);
    // outwards as well
    assert!((geo.dist_nu([0.6, 0.0], 1.0).unwrap() - 0.4).abs() < 1e-6);
    // through the degenerate center
    assert!(geo.dist_nu([0.3, 0.0], -0.5).is_err());
}

#[test]
fn influence_region_examples() {
    let h = 1.0 / 64.0;
    let g = disk_grid(h, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.5, 1.0, &g);
    let big = influence_region(&geo, &g, 10.0).unwrap();
    assert_eq!(big.mask, big.band);
    assert!((big.s0 - 1.0).abs() < 1e-12);
    let none = geo.influence_region(&g, 0.0).unwrap();
    assert!(none.mask.iter().all(|&m| !m));
    let reg = geo.influence_region(&g, 0.3).unwrap();
    for k in 0..g.len() {
        let (x, y) = g.coords(k);
        let r = x.hypot(y);
        if !g.omega_mask()[k] {
            assert!(!reg.mask[k]);
            continue;
        }
        if r > 0.7 + 2.0 * h {
            assert!(reg.mask[k], "r={r}");
        }
        if r < 0.7 - 2.0 * h {
            assert!(!reg.mask[k], "r={r}");
        }
        if reg.mask[k] {
            assert!(reg.tau.values()[k] > 0.0);
        }
    }
    assert!((reg.s_t - 0.7).abs() < 2.0 * h);
}

#[test]
fn t0_examples() {
    let h = 1.0 / 64.0;
    let g = disk_grid(h, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.5, 1.0, &g);
    let mut single = vec![false; g.len()];
    let k = (0..g.len())
        .min_by(|&a, &b| {
            let (xa, ya) = g.coords(a);
            let (xb, yb) = g.coords(b);
            ((xa - 0.6).hypot(ya)).total_cmp(&(xb - 0.6).hypot(yb))
        })
        .unwrap();
    single[k] = true;
    let r = g.coords(k).0.hypot(g.coords(k).1);
    assert!((time_t0(&geo, &g, &single).unwrap() - (1.0 - r)).abs() < 1e-6);

    let annulus: Vec<bool> = (0..g.len())
        .map(|k| {
            let (x, y) = g.coords(k);
            g.omega_mask()[k] && x.hypot(y) >= 0.5
        })
        .collect();
    let rep = geo.t0_report(&g, &annulus).unwrap();
    assert!((rep.t0 - 0.5).abs() <= 2.0 * h, "{}", rep.t0);
    assert!(rep.unreachable.is_empty());
    assert!(rep.monotone);
    assert_eq!(rep.max_gamma_crossings, 1);

    let disk: Vec<bool> = (0..g.len())
        .map(|k| {
            let (x, y) = g.coords(k);
            x.hypot(y) <= 0.5
        })
        .collect();
    let rep = geo.t0_report(&g, &disk).unwrap();
    assert!(!rep.unreachable.is_empty());
    assert!(matches!(time_t0(&geo, &g, &disk), Err(Error::Unreachable { .. })));
}

#[test]
fn full_data_t1_of_unit_disk() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let rep = time_t1(&geo, &g, None, VisibilityMode::Full, &T1Config::default()).unwrap();
    assert!((rep.t1 - 1.0).abs() < 0.02, "{}", rep.t1);
    assert!(rep.failures.is_empty());
    assert!(rep.max_speed_drift < 1e-8);
}

#[test]
fn center_rays_exit_at_unit_time() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let center = g.index(g.nx() / 2, g.ny() / 2);
    assert_eq!(g.coords(center), (0.0, 0.0));
    let mut k = vec![false; g.len()];
    k[center] = true;
    let rep = geo.t1_report(&g, Some(&k), VisibilityMode::Partial, &T1Config::default()).unwrap();
    assert!(rep.failures.is_empty());
    assert!((rep.t1 - 1.0).abs() < 1e-9);
    for phi in [0.0, 1.0, 2.5] {
        let end = geo
            .shoot(g.shape(), [0.0, 0.0], [f64::cos(phi), f64::sin(phi)], 5.0, GeodesicForm::Lagrangian)
            .unwrap();
        assert!((end.exit_time.unwrap() - 1.0).abs() < 1e-9);
        assert!((end.exit_cos - 1.0).abs() < 1e-9);
    }
}

#[test]
fn partial_data_reports_invisible_rays() {
    let g = disk_grid(1.0 / 32.0, Observation::Arc { start: 0.0, end: std::f64::consts::FRAC_PI_2 });
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let mut k = vec![false; g.len()];
    k[g.index(g.nx() / 2, g.ny() / 2)] = true;
    let cfg = T1Config {
        n_directions: 16,
        ..Default::default()
    };
    let rep = geo.t1_report(&g, Some(&k), VisibilityMode::Partial, &cfg).unwrap();
    let outside = rep.failures.iter().filter(|f| f.failure == Some(RayFailure::OutsideGamma)).count();
    assert_eq!(outside, 11);
}

#[test]
fn geodesic_forms_agree() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(bump(), 0.1, 1.0, &g);
    for (p, phi) in [([0.1, -0.2], 0.3), ([-0.5, 0.2], 2.0), ([0.0, 0.6], -1.2)] {
        let dir = [f64::cos(phi), f64::sin(phi)];
        let a = geo.shoot(g.shape(), p, dir, 5.0, GeodesicForm::Lagrangian).unwrap();
        let b = geo.shoot(g.shape(), p, dir, 5.0, GeodesicForm::Hamiltonian).unwrap();
        assert!((a.exit_time.unwrap() - b.exit_time.unwrap()).abs() < 1e-6);
        assert!(a.speed_drift < 1e-8 && b.speed_drift < 1e-8);
    }
}

#[test]
fn near_leaf_constants_are_stable() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(bump(), 0.1, 1.2, &g);
    let fits = geo.near_leaf_fits(0.9, 0.2, 2, 16).unwrap();
    assert_eq!(fits.len(), 3);
    println!("{fits:?}");
    for f in &fits {
        assert!(f.c1 >= 1.0 - 1e-9);
    }
    let (first, last) = (&fits[0], &fits[2]);
    assert!((last.c1 / first.c1 - 1.0).abs() < 0.2);
    assert!((last.c2 / first.c2 - 1.0).abs() < 0.2);
}

#[test]
fn fast_marching_matches_shooting() {
    let h = 1.0 / 64.0;
    let g = disk_grid(h, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.2, &g);
    let d = geo.leaf_distance_fmm(&g, 1.0).unwrap();
    let k = g.index(g.nx() / 2 + 32, g.ny() / 2);
    assert!((d.values()[k] - 0.5).abs() < 3.0 * h, "{}", d.values()[k]);

    let geo = radial(bump(), 0.1, 1.2, &g);
    let d = geo.leaf_distance_fmm(&g, 1.0).unwrap();
    for p in [[0.3, 0.1], [-0.2, 0.5], [0.0, -0.6]] {
        let (i, j) = (
            ((p[0] - g.origin().0) / h).round() as usize,
            ((p[1] - g.origin().1) / h).round() as usize,
        );
        let k = g.index(i, j);
        let (x, y) = g.coords(k);
        let exact = geo.dist_g_to_leaf([x, y], 1.0).unwrap();
        assert!((d.values()[k] - exact).abs() < 3.0 * h, "{} {exact}", d.values()[k]);
    }
}

#[test]
fn collar_width_of_a_circle() {
    let g = disk_grid(1.0 / 32.0, Observation::Full);
    let geo = radial(SpeedProfile::Constant(1.0), 0.1, 1.0, &g);
    let w = geo.collar_width(0.5, 64, 0.8).unwrap();
    assert!((w.inward - 0.5).abs() <= 0.8 / 64.0 + 1e-9, "{w:?}");
    assert!(w.outward > 0.5);
}
