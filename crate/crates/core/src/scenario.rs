//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [grid]
//! width = 1.0
//! height = 1.0
//! h = 0.02
//!
//! [boundary]
//! doors = [[[1.0, 0.4], [1.0, 0.6]]]    # segments given by two end points, or a single point
//! obstacles = [[0.8, 0.9, 0.2, 0.7]]    # rectangles [x0, x1, y0, y1]
//!
//! [initial]
//! value = 1.0
//! regions = [[0.0, 0.5, 0.0, 1.0]]
//!
//! [speed]
//! f = "1"
//!
//! [weight]
//! k = 1.0
//!
//! [run]
//! T = 2.0
//! tau = 0.008
//! ```
//!
//! Every section except `[grid]` is optional. Rectangles select the cells
//! whose centers lie in the closed rectangle.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::beckmann::CostMode;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::ScalarField;
use crate::grid::{BoundarySpec, Edge, GridSpec};
use crate::pd::SolverSettings;
use crate::transport::CFL_LIMIT;

pub const DEFAULT_H: f64 = 0.01;
pub const DEFAULT_TAU: f64 = 0.004;
pub const DEFAULT_FINAL_TIME: f64 = 2.0;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 25;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`, written as a 4-array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

impl From<[f64; 4]> for Rect {
    fn from(a: [f64; 4]) -> Self {
        Rect::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.x1, r.y0, r.y1]
    }
}

/// A number or an expression in `x` and `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Expression(String),
}

impl FieldSpec {
    pub fn field(&self, grid: GridSpec) -> std::result::Result<ScalarField, String> {
        match self {
            FieldSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            FieldSpec::Expression(s) => {
                let e: Expr = s.parse().map_err(|e| format!("in '{s}': {e}"))?;
                Ok(ScalarField::from_fn(grid, |x, y| e.eval(x, y)))
            }
        }
    }
}

/// Points describing a boundary piece: one point, or the two end points of
/// a segment along one edge.
pub type PointList = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "unit")]
    pub width: f64,
    #[serde(default = "unit")]
    pub height: f64,
    #[serde(default = "default_h")]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub doors: Vec<Spanned<PointList>>,
    #[serde(default)]
    pub obstacles: Vec<Spanned<Rect>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Density inside `regions`.
    #[serde(default = "unit")]
    pub value: f64,
    #[serde(default)]
    pub regions: Vec<Spanned<Rect>>,
    /// Alternative to `regions`: a closed-form density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Spanned<FieldSpec>>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            value: 1.0,
            regions: Vec::new(),
            density: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSection {
    /// Defaults to `1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Spanned<FieldSpec>>,
    /// `c_p` in `f = f_base (1 + c_p pressure)`.
    #[serde(default)]
    pub coupling: f64,
    /// Recompute the velocity every this many steps (0: never).
    #[serde(default)]
    pub couple_every: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    /// Defaults to `1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Spanned<FieldSpec>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default)]
    pub segments: Vec<Spanned<PointList>>,
    /// Inflow per unit boundary length and unit time.
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub mode: CostMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eikonal: Option<SolverSettings>,
    /// Defaults depend on `mode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(rename = "T", default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            final_time: DEFAULT_FINAL_TIME,
            tau: DEFAULT_TAU,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

fn unit() -> f64 {
    1.0
}
fn default_h() -> f64 {
    DEFAULT_H
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_final_time() -> f64 {
    DEFAULT_FINAL_TIME
}
fn default_snapshot_every() -> usize {
    DEFAULT_SNAPSHOT_EVERY
}

/// The document as written, before geometry is resolved on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: GridSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub weight: WeightSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
}

/// A resolved, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub boundary: BoundarySpec,
    pub rho0: ScalarField,
    /// Base speed `f`.
    pub speed: ScalarField,
    pub coupling: f64,
    pub couple_every: usize,
    /// Congestion weight `k`.
    pub weight: ScalarField,
    pub source_rate: f64,
    pub final_time: f64,
    pub tau: f64,
    pub mode: CostMode,
    pub eikonal: SolverSettings,
    pub correction: SolverSettings,
    pub snapshot_every: usize,
}

impl Scenario {
    /// Unit speed and weight, no sources, default time stepping.
    pub fn new(boundary: BoundarySpec, rho0: ScalarField) -> Self {
        let g = *boundary.grid();
        Scenario {
            boundary,
            rho0,
            speed: ScalarField::constant(g, 1.0),
            coupling: 0.0,
            couple_every: 0,
            weight: ScalarField::constant(g, 1.0),
            source_rate: 0.0,
            final_time: DEFAULT_FINAL_TIME,
            tau: DEFAULT_TAU,
            mode: CostMode::Homogeneous,
            eikonal: SolverSettings::EIKONAL,
            correction: SolverSettings::CORRECTION,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }

    /// Switch the cost and reset the correction solver to its defaults.
    pub fn with_mode(mut self, mode: CostMode) -> Self {
        self.mode = mode;
        self.correction = mode.default_settings();
        self
    }

    pub fn grid(&self) -> &GridSpec {
        self.boundary.grid()
    }

    /// Number of steps needed to reach `final_time`.
    pub fn num_steps(&self) -> usize {
        ((self.final_time / self.tau) - 1e-9).ceil().max(0.0) as usize
    }

    /// Checks shared by every entry point: CFL for unit speeds, density in
    /// `[0, 1]`, positive fields, well-formed boundary.
    pub fn validate(&self) -> Result<()> {
        let g = *self.grid();
        self.rho0.check_grid(&g)?;
        self.speed.check_grid(&g)?;
        self.weight.check_grid(&g)?;
        if !(self.tau > 0.0 && self.final_time >= 0.0) {
            return Err(Error::config("tau must be positive and T nonnegative"));
        }
        let cfl = self.tau / g.h();
        if !(cfl < CFL_LIMIT) {
            return Err(Error::Cfl { cfl });
        }
        if !self.boundary.has_doors() {
            return Err(Error::config("no exit: the scenario needs at least one door"));
        }
        self.boundary.validate()?;
        if let Some(v) = self.rho0.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("initial density must lie in [0, 1], got {v}")));
        }
        let fluid = self.boundary.obstacle_mask().iter().map(|o| !o);
        for ((f, k), fl) in self.speed.as_slice().iter().zip(self.weight.as_slice()).zip(fluid) {
            if fl && !(*f > 0.0 && f.is_finite()) {
                return Err(Error::domain(format!("speed must be positive, got {f}")));
            }
            if fl && !(*k > 0.0 && k.is_finite()) && self.mode == CostMode::Homogeneous {
                return Err(Error::domain(format!("congestion weight must be positive, got {k}")));
            }
        }
        if !(self.source_rate >= 0.0) {
            return Err(Error::domain("source rate must be nonnegative"));
        }
        if self.source_rate > 0.0 && self.boundary.source_faces().is_empty() {
            return Err(Error::config("source rate given without source segments"));
        }
        Ok(())
    }
}

impl ScenarioFile {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Resolve geometry and fields; `text` is the source used for line numbers.
    pub fn build(&self, text: &str, path: &Path) -> Result<Scenario> {
        let err = |span: std::ops::Range<usize>, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_of(text, span.start),
            message,
        };
        let gs = &self.grid;
        let grid = GridSpec::from_extent(gs.width, gs.height, gs.h)
            .map_err(|e| err(0..0, format!("[grid]: {e}")))?;
        let inside = |r: &Rect| {
            let tol = 1e-12;
            r.x0 <= r.x1
                && r.y0 <= r.y1
                && r.x0 >= -tol
                && r.y0 >= -tol
                && r.x1 <= grid.width() + tol
                && r.y1 <= grid.height() + tol
        };

        let mut boundary = BoundarySpec::walled(grid);
        for seg in &self.boundary.doors {
            let (edge, lo, hi) = edge_interval(&grid, seg.get_ref()).map_err(|m| err(seg.span(), format!("door: {m}")))?;
            boundary
                .add_door_segment(edge, lo, hi)
                .map_err(|e| err(seg.span(), format!("door {:?}: {e}", seg.get_ref())))?;
        }
        for seg in &self.source.segments {
            let (edge, lo, hi) =
                edge_interval(&grid, seg.get_ref()).map_err(|m| err(seg.span(), format!("source: {m}")))?;
            boundary
                .add_source_segment(edge, lo, hi)
                .map_err(|e| err(seg.span(), format!("source {:?}: {e}", seg.get_ref())))?;
        }
        for r in &self.boundary.obstacles {
            let rect = *r.get_ref();
            if !inside(&rect) {
                return Err(err(r.span(), format!("obstacle {:?} is not a rectangle inside the domain", <[f64; 4]>::from(rect))));
            }
            boundary
                .add_obstacle_rect(rect.x0, rect.x1, rect.y0, rect.y1)
                .map_err(|e| err(r.span(), e.to_string()))?;
        }

        for r in &self.initial.regions {
            let rect = *r.get_ref();
            if !inside(&rect) {
                return Err(err(r.span(), format!("region {:?} is not a rectangle inside the domain", <[f64; 4]>::from(rect))));
            }
        }
        let mut rho0 = if let Some(d) = &self.initial.density {
            if !self.initial.regions.is_empty() {
                return Err(err(d.span(), "[initial]: give either regions or density, not both".into()));
            }
            d.get_ref().field(grid).map_err(|m| err(d.span(), m))?
        } else {
            let tol = 1e-9 * grid.h();
            ScalarField::from_fn(grid, |x, y| {
                let hit = self.initial.regions.iter().any(|r| {
                    let r = r.get_ref();
                    x >= r.x0 - tol && x <= r.x1 + tol && y >= r.y0 - tol && y <= r.y1 + tol
                });
                if hit {
                    self.initial.value
                } else {
                    0.0
                }
            })
        };
        rho0.mask_obstacles(&boundary);

        let field = |spec: &Option<Spanned<FieldSpec>>, what: &str| match spec {
            Some(s) => s.get_ref().field(grid).map_err(|m| err(s.span(), format!("{what} {m}"))),
            None => Ok(ScalarField::constant(grid, 1.0)),
        };
        let speed = field(&self.speed.f, "[speed] f")?;
        let weight = field(&self.weight.k, "[weight] k")?;

        let mode = self.solver.mode;
        let scenario = Scenario {
            boundary,
            rho0,
            speed,
            coupling: self.speed.coupling,
            couple_every: self.speed.couple_every,
            weight,
            source_rate: self.source.rate,
            final_time: self.run.final_time,
            tau: self.run.tau,
            mode,
            eikonal: self.solver.eikonal.unwrap_or(SolverSettings::EIKONAL),
            correction: self.solver.correction.unwrap_or(mode.default_settings()),
            snapshot_every: self.run.snapshot_every.max(1),
        };
        scenario.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(scenario)
    }
}

/// Parse and validate a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text, path)
}

/// Parse and validate scenario text; `path` is only used in diagnostics.
pub fn parse_scenario_str(text: &str, path: &Path) -> Result<Scenario> {
    ScenarioFile::from_toml(text, path)?.build(text, path)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Edges a point lies on.
fn edges_of(grid: &GridSpec, p: [f64; 2]) -> Vec<Edge> {
    let tol = 1e-9 * grid.h();
    let mut out = Vec::new();
    let on_x = (-tol..=grid.width() + tol).contains(&p[0]);
    let on_y = (-tol..=grid.height() + tol).contains(&p[1]);
    if on_y && p[0].abs() <= tol {
        out.push(Edge::Left);
    }
    if on_y && (p[0] - grid.width()).abs() <= tol {
        out.push(Edge::Right);
    }
    if on_x && p[1].abs() <= tol {
        out.push(Edge::Bottom);
    }
    if on_x && (p[1] - grid.height()).abs() <= tol {
        out.push(Edge::Top);
    }
    out
}

/// Edge and tangential interval of a point list. Corner points belong to
/// the vertical edge unless the other end point forces a horizontal one.
fn edge_interval(grid: &GridSpec, pts: &PointList) -> std::result::Result<(Edge, f64, f64), String> {
    let tangential = |e: Edge, p: [f64; 2]| match e {
        Edge::Left | Edge::Right => p[1],
        Edge::Bottom | Edge::Top => p[0],
    };
    match pts.as_slice() {
        [p] => {
            let e = *edges_of(grid, *p)
                .first()
                .ok_or_else(|| format!("point {p:?} is not on the boundary"))?;
            let t = tangential(e, *p);
            Ok((e, t, t))
        }
        [a, b] => {
            let ea = edges_of(grid, *a);
            let eb = edges_of(grid, *b);
            let e = *ea
                .iter()
                .find(|e| eb.contains(e))
                .ok_or_else(|| format!("points {a:?} and {b:?} do not lie on a common edge"))?;
            let (s, t) = (tangential(e, *a), tangential(e, *b));
            Ok((e, s.min(t), s.max(t)))
        }
        _ => Err(format!("expected one or two points, got {}", pts.len())),
    }
}
