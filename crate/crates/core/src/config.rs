//! Flat `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment. Every key is checked
//! against the selected variants: a key that does not apply (say
//! `source.sigma` with `source.kind = bump`) is rejected like an unknown one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{DampingModel, DEFAULT_CFL};
use crate::geometry::{FoliationSpec, LevelFunction, VisibilityMode};
use crate::grid::{build_grid, validate_medium, DomainShape, Grid2D, GridConfig, Medium, Observation, SourceSpec};
use crate::profiles::{DampingProfile, SourceProfile, SpeedProfile};
use crate::reconstruction::ReconstructionConfig;

/// Subcommand a file is read for; decides the required keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Forward,
    Reconstruct,
    Geometry,
    Study,
    Check,
}

impl Purpose {
    fn required(self) -> &'static [&'static str] {
        match self {
            Purpose::Forward | Purpose::Reconstruct => &["grid.h", "alpha", "T", "source.kind"],
            Purpose::Geometry => &["grid.h", "T"],
            Purpose::Study => &["alpha", "T", "source.kind"],
            Purpose::Check => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub h: f64,
    pub shape: DomainShape,
    pub observation: Observation,
    pub outer_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumSection {
    pub speed: SpeedProfile,
    pub damping: DampingProfile,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSection {
    pub energy: bool,
    pub snapshots: Vec<f64>,
    pub pgm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySection {
    pub foliation: FoliationSpec,
    pub leaves: usize,
    pub samples: usize,
    pub mode: VisibilityMode,
    /// radius of the disk `𝒦` about the domain center
    pub k_radius: f64,
    pub directions: usize,
}

/// A parsed scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridSection,
    pub medium: MediumSection,
    pub source: SourceProfile,
    pub alpha: f64,
    pub final_time: f64,
    pub cfl: f64,
    pub model: DampingModel,
    pub record: RecordSection,
    pub reconstruction: ReconstructionConfig,
    pub geometry: GeometrySection,
    /// grid denominators `1/h` of a convergence study
    pub study_levels: Vec<usize>,
}

/// Config plus the keys filled from defaults, as `(key, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ScenarioConfig,
    pub defaulted: Vec<(String, String)>,
}

const KNOWN: &[&str] = &[
    "grid.h",
    "grid.shape",
    "grid.cx",
    "grid.cy",
    "grid.r",
    "grid.a",
    "grid.b",
    "grid.hx",
    "grid.hy",
    "grid.observation",
    "grid.arc_start",
    "grid.arc_end",
    "grid.outer_half_width",
    "medium.speed",
    "medium.c",
    "medium.c_amp",
    "medium.c_cx",
    "medium.c_cy",
    "medium.c_radius",
    "medium.c_k",
    "medium.c_gx",
    "medium.c_gy",
    "medium.c0",
    "medium.damping",
    "medium.a_amp",
    "medium.a_cx",
    "medium.a_cy",
    "medium.a_radius",
    "source.kind",
    "source.amp",
    "source.cx",
    "source.cy",
    "source.sigma",
    "source.radius",
    "source.kx",
    "source.ky",
    "source.phase",
    "alpha",
    "T",
    "cfl",
    "model",
    "record.energy",
    "record.snapshots",
    "record.pgm",
    "reconstruction.m_max",
    "reconstruction.tol",
    "geometry.foliation",
    "geometry.rho_cx",
    "geometry.rho_cy",
    "geometry.rho_a",
    "geometry.rho_b",
    "geometry.rho_angle",
    "geometry.rho_half_length",
    "geometry.s_lo",
    "geometry.s_hi",
    "geometry.leaves",
    "geometry.samples",
    "geometry.mode",
    "geometry.k_radius",
    "geometry.directions",
    "study.levels",
];

struct Entries {
    map: BTreeMap<String, (String, usize)>,
    defaulted: Vec<(String, String)>,
    consumed: BTreeMap<String, usize>,
    eof: usize,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut eof = 1;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            eof = line + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected `key = value`, found `{content}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN.contains(&k) {
                return Err(config_err(line, format!("unknown key `{k}`")));
            }
            if v.is_empty() {
                return Err(config_err(line, format!("key `{k}` has no value")));
            }
            if let Some((_, first)) = map.insert(k.to_string(), (v.to_string(), line)) {
                return Err(config_err(line, format!("key `{k}` repeats line {first}")));
            }
        }
        Ok(Self {
            map,
            defaulted: Vec::new(),
            consumed: BTreeMap::new(),
            eof,
        })
    }

    fn raw(&mut self, key: &str, default: Option<String>) -> Result<Option<(String, usize)>> {
        match self.map.remove(key) {
            Some(e) => Ok(Some(e)),
            None => match default {
                Some(d) => {
                    self.defaulted.push((key.to_string(), d));
                    Ok(None)
                }
                None => Err(config_err(self.eof, format!("missing required key `{key}`"))),
            },
        }
    }

    fn num(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.raw(key, default.map(|d| format!("{d:?}")))? {
            Some((v, line)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| config_err(line, format!("`{key}` expects a finite number, found `{v}`"))),
            None => Ok(default.unwrap_or_default()),
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = self.num(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(config_err(self.line_of_last(key), format!("{key} must be positive, got {v}")))
        }
    }

    fn int(&mut self, key: &str, default: Option<usize>) -> Result<usize> {
        match self.raw(key, default.map(|d| d.to_string()))? {
            Some((v, line)) => v
                .parse::<usize>()
                .map_err(|_| config_err(line, format!("`{key}` expects a non-negative integer, found `{v}`"))),
            None => Ok(default.unwrap_or_default()),
        }
    }

    fn boolean(&mut self, key: &str, default: Option<bool>) -> Result<bool> {
        match self.raw(key, default.map(|d| d.to_string()))? {
            Some((v, line)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(config_err(line, format!("`{key}` expects true or false, found `{v}`"))),
            },
            None => Ok(default.unwrap_or_default()),
        }
    }

    fn word(&mut self, key: &str, default: Option<&str>, choices: &[&str]) -> Result<String> {
        match self.raw(key, default.map(str::to_string))? {
            Some((v, line)) => {
                if choices.contains(&v.as_str()) {
                    Ok(v)
                } else {
                    Err(config_err(
                        line,
                        format!("`{key}` must be one of {}, found `{v}`", choices.join("|")),
                    ))
                }
            }
            None => Ok(default.unwrap_or_default().to_string()),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, default: Option<Vec<T>>, show: impl Fn(&[T]) -> String) -> Result<Vec<T>> {
        let shown = default.as_deref().map(&show);
        match self.raw(key, shown)? {
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|_| config_err(line, format!("`{key}` has a malformed entry `{s}`")))
                })
                .collect(),
            None => Ok(default.unwrap_or_default()),
        }
    }

    /// Line of a key that was already consumed, for validation messages.
    fn line_of_last(&self, key: &str) -> usize {
        self.consumed.get(key).copied().unwrap_or(self.eof)
    }
}

fn show_f64s(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn show_usizes(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses and validates a scenario file.
pub fn parse_config(path: &Path, purpose: Purpose) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, purpose)
}

pub fn parse_config_str(text: &str, purpose: Purpose) -> Result<ParsedConfig> {
    let mut e = Entries::parse(text)?;
    for key in purpose.required() {
        if !e.map.contains_key(*key) {
            return Err(config_err(e.eof, format!("missing required key `{key}`")));
        }
    }
    e.consumed = e.map.iter().map(|(k, v)| (k.clone(), v.1)).collect();

    let h = e.positive("grid.h", Some(1.0 / 64.0))?;
    let shape = match e.word("grid.shape", Some("disk"), &["disk", "ellipse", "rect"])?.as_str() {
        "disk" => DomainShape::Disk {
            cx: e.num("grid.cx", Some(0.0))?,
            cy: e.num("grid.cy", Some(0.0))?,
            r: e.positive("grid.r", Some(1.0))?,
        },
        "ellipse" => DomainShape::Ellipse {
            cx: e.num("grid.cx", Some(0.0))?,
            cy: e.num("grid.cy", Some(0.0))?,
            a: e.positive("grid.a", None)?,
            b: e.positive("grid.b", None)?,
        },
        _ => DomainShape::Rect {
            cx: e.num("grid.cx", Some(0.0))?,
            cy: e.num("grid.cy", Some(0.0))?,
            hx: e.positive("grid.hx", None)?,
            hy: e.positive("grid.hy", None)?,
        },
    };
    let observation = match e.word("grid.observation", Some("full"), &["full", "arc"])?.as_str() {
        "full" => Observation::Full,
        _ => Observation::Arc {
            start: e.num("grid.arc_start", None)?,
            end: e.num("grid.arc_end", None)?,
        },
    };
    let outer_half_width = if e.map.contains_key("grid.outer_half_width") {
        Some(e.positive("grid.outer_half_width", None)?)
    } else {
        None
    };

    let speed = match e.word("medium.speed", Some("constant"), &["constant", "bump", "radial", "linear"])?.as_str() {
        "constant" => SpeedProfile::Constant(e.positive("medium.c", Some(1.0))?),
        "bump" => SpeedProfile::Bump {
            amp: e.num("medium.c_amp", None)?,
            cx: e.num("medium.c_cx", Some(0.0))?,
            cy: e.num("medium.c_cy", Some(0.0))?,
            radius: e.positive("medium.c_radius", None)?,
        },
        "radial" => SpeedProfile::Radial {
            k: e.num("medium.c_k", None)?,
        },
        _ => SpeedProfile::Linear {
            gx: e.num("medium.c_gx", None)?,
            gy: e.num("medium.c_gy", None)?,
        },
    };
    let c0 = e.positive("medium.c0", Some(0.5))?;
    let damping = match e.word("medium.damping", Some("none"), &["none", "bump"])?.as_str() {
        "none" => DampingProfile::None,
        _ => DampingProfile::Bump {
            amp: e.num("medium.a_amp", None)?,
            cx: e.num("medium.a_cx", Some(0.0))?,
            cy: e.num("medium.a_cy", Some(0.0))?,
            radius: e.positive("medium.a_radius", None)?,
        },
    };

    let source = match e.word("source.kind", Some("zero"), &["zero", "gaussian", "bump", "packet"])?.as_str() {
        "zero" => SourceProfile::Zero,
        "gaussian" => SourceProfile::Gaussian {
            amp: e.num("source.amp", Some(1.0))?,
            cx: e.num("source.cx", Some(0.0))?,
            cy: e.num("source.cy", Some(0.0))?,
            sigma: e.positive("source.sigma", None)?,
        },
        "bump" => SourceProfile::Bump {
            amp: e.num("source.amp", Some(1.0))?,
            cx: e.num("source.cx", Some(0.0))?,
            cy: e.num("source.cy", Some(0.0))?,
            radius: e.positive("source.radius", None)?,
        },
        _ => SourceProfile::WavePacket {
            amp: e.num("source.amp", Some(1.0))?,
            cx: e.num("source.cx", Some(0.0))?,
            cy: e.num("source.cy", Some(0.0))?,
            radius: e.positive("source.radius", None)?,
            kx: e.num("source.kx", None)?,
            ky: e.num("source.ky", None)?,
            phase: e.num("source.phase", Some(0.0))?,
        },
    };

    let alpha = e.num("alpha", Some(0.5))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config_err(e.line_of_last("alpha"), "alpha must lie strictly in (0,1)"));
    }
    let final_time = e.positive("T", Some(1.0))?;
    let cfl = e.positive("cfl", Some(DEFAULT_CFL))?;
    let model = match e.word("model", Some("fractional"), &["fractional", "classical"])?.as_str() {
        "fractional" => DampingModel::Fractional,
        _ => DampingModel::Classical,
    };

    let energy = e.boolean("record.energy", Some(true))?;
    let snapshots = e.list("record.snapshots", Some(Vec::new()), show_f64s)?;
    if let Some(bad) = snapshots.iter().find(|&&t| !(0.0..=final_time).contains(&t)) {
        return Err(config_err(
            e.line_of_last("record.snapshots"),
            format!("snapshot time {bad} lies outside [0, T]"),
        ));
    }
    let pgm = e.boolean("record.pgm", Some(true))?;

    let defaults = ReconstructionConfig::default();
    let reconstruction = ReconstructionConfig {
        m_max: e.int("reconstruction.m_max", Some(defaults.m_max))?,
        tol: e.positive("reconstruction.tol", Some(defaults.tol))?,
    };
    reconstruction
        .validate()
        .map_err(|err| config_err(e.line_of_last("reconstruction.m_max"), err.to_string()))?;

    let rho = match e.word("geometry.foliation", Some("radial"), &["radial", "elliptic", "linear"])?.as_str() {
        "radial" => LevelFunction::Radial {
            cx: e.num("geometry.rho_cx", Some(0.0))?,
            cy: e.num("geometry.rho_cy", Some(0.0))?,
        },
        "elliptic" => LevelFunction::Elliptic {
            cx: e.num("geometry.rho_cx", Some(0.0))?,
            cy: e.num("geometry.rho_cy", Some(0.0))?,
            a: e.positive("geometry.rho_a", None)?,
            b: e.positive("geometry.rho_b", None)?,
        },
        _ => LevelFunction::Linear {
            angle: e.num("geometry.rho_angle", None)?,
            half_length: e.positive("geometry.rho_half_length", Some(1.0))?,
        },
    };
    let foliation = FoliationSpec {
        rho,
        s_lo: e.num("geometry.s_lo", Some(0.5))?,
        s_hi: e.num("geometry.s_hi", Some(1.0))?,
    };
    foliation
        .validate()
        .map_err(|err| config_err(e.line_of_last("geometry.s_lo"), err.to_string()))?;
    let leaves = e.int("geometry.leaves", Some(6))?;
    if leaves == 0 {
        return Err(config_err(e.line_of_last("geometry.leaves"), "geometry.leaves must be positive"));
    }
    let samples = e.int("geometry.samples", Some(128))?;
    if samples < 64 {
        return Err(config_err(e.line_of_last("geometry.samples"), "geometry.samples must be at least 64"));
    }
    let mode = match e.word("geometry.mode", Some("full"), &["full", "partial"])?.as_str() {
        "full" => VisibilityMode::Full,
        _ => VisibilityMode::Partial,
    };
    let k_radius = e.positive("geometry.k_radius", Some(0.5))?;
    let directions = e.int("geometry.directions", Some(33))?;
    if directions == 0 {
        return Err(config_err(e.line_of_last("geometry.directions"), "geometry.directions must be positive"));
    }

    let study_levels = e.list("study.levels", Some(vec![16, 32, 64]), show_usizes)?;
    if study_levels.len() < 3 || study_levels.windows(2).any(|w| w[1] != 2 * w[0]) || study_levels[0] == 0 {
        return Err(config_err(
            e.line_of_last("study.levels"),
            "study.levels needs at least 3 entries, each twice the previous",
        ));
    }

    if let Some((k, (_, line))) = e.map.iter().next() {
        return Err(config_err(*line, format!("key `{k}` does not apply to the selected variants")));
    }
    Ok(ParsedConfig {
        config: ScenarioConfig {
            grid: GridSection {
                h,
                shape,
                observation,
                outer_half_width,
            },
            medium: MediumSection { speed, damping, c0 },
            source,
            alpha,
            final_time,
            cfl,
            model,
            record: RecordSection { energy, snapshots, pgm },
            reconstruction,
            geometry: GeometrySection {
                foliation,
                leaves,
                samples,
                mode,
                k_radius,
                directions,
            },
            study_levels,
        },
        defaulted: e.defaulted,
    })
}

/// Writes every key of `cfg`; `parse_config_str` inverts it exactly.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    let f = |x: f64| format!("{x:?}");
    put("grid.h", f(cfg.grid.h));
    match cfg.grid.shape {
        DomainShape::Disk { cx, cy, r } => {
            put("grid.shape", "disk".into());
            put("grid.cx", f(cx));
            put("grid.cy", f(cy));
            put("grid.r", f(r));
        }
        DomainShape::Ellipse { cx, cy, a, b } => {
            put("grid.shape", "ellipse".into());
            put("grid.cx", f(cx));
            put("grid.cy", f(cy));
            put("grid.a", f(a));
            put("grid.b", f(b));
        }
        DomainShape::Rect { cx, cy, hx, hy } => {
            put("grid.shape", "rect".into());
            put("grid.cx", f(cx));
            put("grid.cy", f(cy));
            put("grid.hx", f(hx));
            put("grid.hy", f(hy));
        }
    }
    match cfg.grid.observation {
        Observation::Full => put("grid.observation", "full".into()),
        Observation::Arc { start, end } => {
            put("grid.observation", "arc".into());
            put("grid.arc_start", f(start));
            put("grid.arc_end", f(end));
        }
    }
    if let Some(w) = cfg.grid.outer_half_width {
        put("grid.outer_half_width", f(w));
    }
    match cfg.medium.speed {
        SpeedProfile::Constant(c) => {
            put("medium.speed", "constant".into());
            put("medium.c", f(c));
        }
        SpeedProfile::Bump { amp, cx, cy, radius } => {
            put("medium.speed", "bump".into());
            put("medium.c_amp", f(amp));
            put("medium.c_cx", f(cx));
            put("medium.c_cy", f(cy));
            put("medium.c_radius", f(radius));
        }
        SpeedProfile::Radial { k } => {
            put("medium.speed", "radial".into());
            put("medium.c_k", f(k));
        }
        SpeedProfile::Linear { gx, gy } => {
            put("medium.speed", "linear".into());
            put("medium.c_gx", f(gx));
            put("medium.c_gy", f(gy));
        }
    }
    put("medium.c0", f(cfg.medium.c0));
    match cfg.medium.damping {
        DampingProfile::None => put("medium.damping", "none".into()),
        DampingProfile::Bump { amp, cx, cy, radius } => {
            put("medium.damping", "bump".into());
            put("medium.a_amp", f(amp));
            put("medium.a_cx", f(cx));
            put("medium.a_cy", f(cy));
            put("medium.a_radius", f(radius));
        }
    }
    match cfg.source {
        SourceProfile::Zero => put("source.kind", "zero".into()),
        SourceProfile::Gaussian { amp, cx, cy, sigma } => {
            put("source.kind", "gaussian".into());
            put("source.amp", f(amp));
            put("source.cx", f(cx));
            put("source.cy", f(cy));
            put("source.sigma", f(sigma));
        }
        SourceProfile::Bump { amp, cx, cy, radius } => {
            put("source.kind", "bump".into());
            put("source.amp", f(amp));
            put("source.cx", f(cx));
            put("source.cy", f(cy));
            put("source.radius", f(radius));
        }
        SourceProfile::WavePacket {
            amp,
            cx,
            cy,
            radius,
            kx,
            ky,
            phase,
        } => {
            put("source.kind", "packet".into());
            put("source.amp", f(amp));
            put("source.cx", f(cx));
            put("source.cy", f(cy));
            put("source.radius", f(radius));
            put("source.kx", f(kx));
            put("source.ky", f(ky));
            put("source.phase", f(phase));
        }
    }
    put("alpha", f(cfg.alpha));
    put("T", f(cfg.final_time));
    put("cfl", f(cfg.cfl));
    put(
        "model",
        match cfg.model {
            DampingModel::Fractional => "fractional",
            DampingModel::Classical => "classical",
        }
        .into(),
    );
    put("record.energy", cfg.record.energy.to_string());
    if !cfg.record.snapshots.is_empty() {
        put("record.snapshots", show_f64s(&cfg.record.snapshots));
    }
    put("record.pgm", cfg.record.pgm.to_string());
    put("reconstruction.m_max", cfg.reconstruction.m_max.to_string());
    put("reconstruction.tol", f(cfg.reconstruction.tol));
    let g = &cfg.geometry;
    match g.foliation.rho {
        LevelFunction::Radial { cx, cy } => {
            put("geometry.foliation", "radial".into());
            put("geometry.rho_cx", f(cx));
            put("geometry.rho_cy", f(cy));
        }
        LevelFunction::Elliptic { cx, cy, a, b } => {
            put("geometry.foliation", "elliptic".into());
            put("geometry.rho_cx", f(cx));
            put("geometry.rho_cy", f(cy));
            put("geometry.rho_a", f(a));
            put("geometry.rho_b", f(b));
        }
        LevelFunction::Linear { angle, half_length } => {
            put("geometry.foliation", "linear".into());
            put("geometry.rho_angle", f(angle));
            put("geometry.rho_half_length", f(half_length));
        }
    }
    put("geometry.s_lo", f(g.foliation.s_lo));
    put("geometry.s_hi", f(g.foliation.s_hi));
    put("geometry.leaves", g.leaves.to_string());
    put("geometry.samples", g.samples.to_string());
    put(
        "geometry.mode",
        match g.mode {
            VisibilityMode::Full => "full",
            VisibilityMode::Partial => "partial",
        }
        .into(),
    );
    put("geometry.k_radius", f(g.k_radius));
    put("geometry.directions", g.directions.to_string());
    put("study.levels", show_usizes(&cfg.study_levels));
    out
}

/// Grid, medium and source built from a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid2D,
    pub medium: Medium<f64>,
    pub source: SourceSpec<f64>,
}

impl ScenarioConfig {
    /// Upper bound of `c` over the bounding box of `Ω`.
    pub fn c_max(&self) -> f64 {
        let (cx, cy) = self.grid.shape.center();
        let (hx, hy) = self.grid.shape.half_extent();
        self.medium.speed.max_over_box(cx - hx, cx + hx, cy - hy, cy + hy).max(1.0)
    }

    pub fn grid_config(&self, h: f64) -> GridConfig {
        GridConfig {
            h,
            shape: self.grid.shape,
            observation: self.grid.observation,
            final_time: self.final_time,
            c_max: self.c_max(),
            outer_half_width: self.grid.outer_half_width,
        }
    }

    /// Builds and validates the scenario at spacing `h`.
    pub fn build_at(&self, h: f64) -> Result<Scenario> {
        let grid = build_grid(&self.grid_config(h))?;
        let medium = Medium::from_profiles(&grid, &self.medium.speed, &self.medium.damping, self.medium.c0);
        validate_medium(&medium, &grid)?;
        let source = SourceSpec::from_profile(&grid, &self.source)?;
        Ok(Scenario { grid, medium, source })
    }

    pub fn build(&self) -> Result<Scenario> {
        self.build_at(self.grid.h)
    }
}
