use fracpat_core::config::*;
use fracpat_core::forward::DampingModel;
use fracpat_core::geometry::{FoliationSpec, LevelFunction, VisibilityMode};
use fracpat_core::grid::{DomainShape, Observation};
use fracpat_core::profiles::{DampingProfile, SourceProfile, SpeedProfile};
use fracpat_core::reconstruction::ReconstructionConfig;
use fracpat_core::Error;
use proptest::prelude::*;

const MINIMAL: &str = "grid.h = 0.03125\nalpha = 0.5\nT = 1.0\nsource.kind = gaussian\nsource.sigma = 0.1\n";

fn line_of(err: Error) -> (usize, String) {
    match err {
        Error::Config { line, message } => (line, message),
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn minimal_forward_config_echoes_defaults() {
    let p = parse_config_str(MINIMAL, Purpose::Forward).unwrap();
    assert_eq!(p.config.cfl, 0.45);
    assert!(p.config.record.energy);
    let echoed: Vec<&str> = p.defaulted.iter().map(|(k, _)| k.as_str()).collect();
    assert!(echoed.contains(&"cfl") && echoed.contains(&"record.energy"));
    assert!(p.defaulted.contains(&("cfl".to_string(), "0.45".to_string())));
    assert!(p.defaulted.contains(&("record.energy".to_string(), "true".to_string())));
    assert!(!echoed.contains(&"alpha"));
}

#[test]
fn alpha_must_be_open_interval() {
    for bad in ["1.0", "0", "-0.2"] {
        let text = MINIMAL.replace("alpha = 0.5", &format!("alpha = {bad}"));
        let (line, msg) = line_of(parse_config_str(&text, Purpose::Forward).unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("alpha must lie strictly in (0,1)"), "{msg}");
    }
}

#[test]
fn negative_h_is_rejected() {
    let text = MINIMAL.replace("0.03125", "-0.01");
    let (line, msg) = line_of(parse_config_str(&text, Purpose::Forward).unwrap_err());
    assert_eq!(line, 1);
    assert!(msg.contains("grid.h"));
}

#[test]
fn errors_carry_line_numbers() {
    let text = format!("{MINIMAL}# comment\n\nmedium.colour = red\n");
    let (line, msg) = line_of(parse_config_str(&text, Purpose::Forward).unwrap_err());
    assert_eq!(line, 8);
    assert!(msg.contains("unknown key"));

    let text = format!("{MINIMAL}cfl = fast\n");
    let (line, msg) = line_of(parse_config_str(&text, Purpose::Forward).unwrap_err());
    assert_eq!(line, 6);
    assert!(msg.contains("number"));

    let text = format!("{MINIMAL}record.energy = 1\n");
    assert_eq!(line_of(parse_config_str(&text, Purpose::Forward).unwrap_err()).0, 6);

    // missing keys point past the last line
    let text = "grid.h = 0.1\nalpha = 0.5\nT = 1\n";
    let (line, msg) = line_of(parse_config_str(text, Purpose::Forward).unwrap_err());
    assert_eq!(line, 4);
    assert!(msg.contains("source.kind"));

    let text = format!("{MINIMAL}source.radius = 0.3\n");
    let (line, msg) = line_of(parse_config_str(&text, Purpose::Forward).unwrap_err());
    assert_eq!(line, 6);
    assert!(msg.contains("does not apply"));

    let text = format!("{MINIMAL}alpha = 0.4\n");
    assert_eq!(line_of(parse_config_str(&text, Purpose::Forward).unwrap_err()).0, 6);

    let text = format!("{MINIMAL}not an assignment\n");
    assert_eq!(line_of(parse_config_str(&text, Purpose::Forward).unwrap_err()).0, 6);
}

#[test]
fn required_keys_depend_on_purpose() {
    assert!(parse_config_str("", Purpose::Check).is_ok());
    assert!(parse_config_str("grid.h = 0.1\nT = 1\n", Purpose::Geometry).is_ok());
    assert!(parse_config_str("grid.h = 0.1\nT = 1\n", Purpose::Reconstruct).is_err());
    assert!(parse_config_str("alpha = 0.5\nT = 1\nsource.kind = zero\n", Purpose::Study).is_ok());
}

#[test]
fn snapshot_times_and_levels_are_validated() {
    let text = format!("{MINIMAL}record.snapshots = 0, 0.5, 2.0\n");
    assert!(parse_config_str(&text, Purpose::Forward).is_err());
    let text = format!("{MINIMAL}study.levels = 16, 32, 48\n");
    assert!(parse_config_str(&text, Purpose::Forward).is_err());
    let text = format!("{MINIMAL}record.snapshots = 0, 0.5\nstudy.levels = 8,16,32,64\n");
    let p = parse_config_str(&text, Purpose::Forward).unwrap();
    assert_eq!(p.config.record.snapshots, vec![0.0, 0.5]);
    assert_eq!(p.config.study_levels, vec![8, 16, 32, 64]);
}

#[test]
fn builds_a_scenario() {
    let p = parse_config_str(MINIMAL, Purpose::Forward).unwrap();
    let sc = p.config.build().unwrap();
    assert_eq!(sc.grid.h(), 0.03125);
    assert!(sc.source.u0.max_abs() > 0.9);
}

#[test]
fn reads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, MINIMAL).unwrap();
    assert!(parse_config(&path, Purpose::Forward).is_ok());
    assert!(matches!(parse_config(&dir.path().join("nope"), Purpose::Forward), Err(Error::Io(_))));
}

fn finite() -> impl Strategy<Value = f64> {
    -10.0f64..10.0
}

fn pos() -> impl Strategy<Value = f64> {
    1e-3f64..5.0
}

fn shape() -> impl Strategy<Value = DomainShape> {
    prop_oneof![
        (finite(), finite(), pos()).prop_map(|(cx, cy, r)| DomainShape::Disk { cx, cy, r }),
        (finite(), finite(), pos(), pos()).prop_map(|(cx, cy, a, b)| DomainShape::Ellipse { cx, cy, a, b }),
        (finite(), finite(), pos(), pos()).prop_map(|(cx, cy, hx, hy)| DomainShape::Rect { cx, cy, hx, hy }),
    ]
}

fn speed() -> impl Strategy<Value = SpeedProfile> {
    prop_oneof![
        pos().prop_map(SpeedProfile::Constant),
        (finite(), finite(), finite(), pos()).prop_map(|(amp, cx, cy, radius)| SpeedProfile::Bump { amp, cx, cy, radius }),
        finite().prop_map(|k| SpeedProfile::Radial { k }),
        (finite(), finite()).prop_map(|(gx, gy)| SpeedProfile::Linear { gx, gy }),
    ]
}

fn damping() -> impl Strategy<Value = DampingProfile> {
    prop_oneof![
        Just(DampingProfile::None),
        (finite(), finite(), finite(), pos()).prop_map(|(amp, cx, cy, radius)| DampingProfile::Bump { amp, cx, cy, radius }),
    ]
}

fn source() -> impl Strategy<Value = SourceProfile> {
    prop_oneof![
        Just(SourceProfile::Zero),
        (finite(), finite(), finite(), pos()).prop_map(|(amp, cx, cy, sigma)| SourceProfile::Gaussian { amp, cx, cy, sigma }),
        (finite(), finite(), finite(), pos()).prop_map(|(amp, cx, cy, radius)| SourceProfile::Bump { amp, cx, cy, radius }),
        (finite(), finite(), finite(), pos(), finite(), finite(), finite()).prop_map(
            |(amp, cx, cy, radius, kx, ky, phase)| SourceProfile::WavePacket { amp, cx, cy, radius, kx, ky, phase }
        ),
    ]
}

fn level_function() -> impl Strategy<Value = LevelFunction> {
    prop_oneof![
        (finite(), finite()).prop_map(|(cx, cy)| LevelFunction::Radial { cx, cy }),
        (finite(), finite(), pos(), pos()).prop_map(|(cx, cy, a, b)| LevelFunction::Elliptic { cx, cy, a, b }),
        (finite(), pos()).prop_map(|(angle, half_length)| LevelFunction::Linear { angle, half_length }),
    ]
}

prop_compose! {
    fn scenario()(
        h in pos(),
        shape in shape(),
        arc in proptest::option::of((finite(), finite())),
        outer in proptest::option::of(pos()),
        speed in speed(),
        damping in damping(),
        c0 in pos(),
        source in source(),
        alpha in 0.001f64..0.999,
        final_time in pos(),
        cfl in 0.01f64..0.6,
        classical in any::<bool>(),
        energy in any::<bool>(),
        pgm in any::<bool>(),
        fractions in proptest::collection::vec(0.0f64..=1.0, 0..4),
        m_max in 0usize..=200,
        tol in 1e-12f64..1.0,
        rho in level_function(),
        s in (-5.0f64..5.0, 1e-3f64..5.0),
        leaves in 1usize..50,
        samples in 64usize..1000,
        partial in any::<bool>(),
        k_radius in pos(),
        directions in 1usize..200,
        first_level in 1usize..64,
        n_levels in 3usize..6,
    ) -> ScenarioConfig {
        ScenarioConfig {
            grid: GridSection {
                h,
                shape,
                observation: arc.map_or(Observation::Full, |(start, end)| Observation::Arc { start, end }),
                outer_half_width: outer,
            },
            medium: MediumSection { speed, damping, c0 },
            source,
            alpha,
            final_time,
            cfl,
            model: if classical { DampingModel::Classical } else { DampingModel::Fractional },
            record: RecordSection {
                energy,
                snapshots: fractions.iter().map(|f| f * final_time).collect(),
                pgm,
            },
            reconstruction: ReconstructionConfig { m_max, tol },
            geometry: GeometrySection {
                foliation: FoliationSpec { rho, s_lo: s.0, s_hi: s.0 + s.1 },
                leaves,
                samples,
                mode: if partial { VisibilityMode::Partial } else { VisibilityMode::Full },
                k_radius,
                directions,
            },
            study_levels: (0..n_levels).map(|i| first_level << i).collect(),
        }
    }
}

proptest! {
    #[test]
    fn parse_inverts_serialize(cfg in scenario()) {
        let text = serialize_config(&cfg);
        let back = parse_config_str(&text, Purpose::Forward).unwrap();
        prop_assert_eq!(back.config, cfg);
        // an empty snapshot list is written by omission
        prop_assert!(back.defaulted.iter().all(|(k, _)| k == "record.snapshots"));
    }
}
