//! Suite orchestration: which theorem runs on which surface, with what
//! parameters, and how radius grids collapse into one report.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vmono::catalog::{BuiltSurface, Catalog, SurfaceCatalogEntry};
use vmono::inequalities::{self, BallCache, ConstantFunction, Diagnostics, HypothesisCheck, RadialBump, RadiusData};
use vmono::{BallMode, InequalityReport, RefineOptions, Verdict};

use crate::CliError;

/// Curvature bound used when a theorem needs `b > 0` and the ambient space is
/// flat or hyperbolic (any positive number bounds the curvature there).
pub const POSITIVE_BOUND: f64 = 1e-6;

pub const DEFAULT_RESOLUTIONS: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    MonotonicityPosOpen,
    MonotonicityPosClosed,
    MonotonicityM,
    MonotonicityMRemark,
    MonotonicityNeg,
    LiYau,
    DiameterPinchingWillmore,
    DiameterPinchingUpper,
    DiameterPinchingLower,
    MinDiameterLemma,
    MinDiameter,
    AsymptoticBound,
    SobolevConstant,
    SobolevBump,
    Isoperimetric,
    GoodRadius,
}

impl TheoremId {
    pub const ALL: [TheoremId; 16] = [
        TheoremId::MonotonicityPosOpen,
        TheoremId::MonotonicityPosClosed,
        TheoremId::MonotonicityM,
        TheoremId::MonotonicityMRemark,
        TheoremId::MonotonicityNeg,
        TheoremId::LiYau,
        TheoremId::DiameterPinchingWillmore,
        TheoremId::DiameterPinchingUpper,
        TheoremId::DiameterPinchingLower,
        TheoremId::MinDiameterLemma,
        TheoremId::MinDiameter,
        TheoremId::AsymptoticBound,
        TheoremId::SobolevConstant,
        TheoremId::SobolevBump,
        TheoremId::Isoperimetric,
        TheoremId::GoodRadius,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::MonotonicityPosOpen => "monotonicity_pos_open",
            TheoremId::MonotonicityPosClosed => "monotonicity_pos_closed",
            TheoremId::MonotonicityM => "monotonicity_m",
            TheoremId::MonotonicityMRemark => "monotonicity_m_remark",
            TheoremId::MonotonicityNeg => "monotonicity_neg",
            TheoremId::LiYau => "li_yau",
            TheoremId::DiameterPinchingWillmore => "diameter_pinching_willmore",
            TheoremId::DiameterPinchingUpper => "diameter_pinching_upper",
            TheoremId::DiameterPinchingLower => "diameter_pinching_lower",
            TheoremId::MinDiameterLemma => "min_diameter_lemma",
            TheoremId::MinDiameter => "min_diameter",
            TheoremId::AsymptoticBound => "asymptotic_bound",
            TheoremId::SobolevConstant => "sobolev_constant",
            TheoremId::SobolevBump => "sobolev_bump",
            TheoremId::Isoperimetric => "isoperimetric",
            TheoremId::GoodRadius => "good_radius",
        }
    }

    fn is_grid(self) -> bool {
        matches!(
            self,
            TheoremId::MonotonicityPosOpen
                | TheoremId::MonotonicityPosClosed
                | TheoremId::MonotonicityM
                | TheoremId::MonotonicityMRemark
                | TheoremId::MonotonicityNeg
        )
    }

    /// Whether the surface can meet the theorem's structural hypotheses
    /// (dimension, curvature sign, closedness). The default suite runs only these.
    pub fn applies_to(self, e: &SurfaceCatalogEntry) -> bool {
        let surface = e.surface_dim() == 2;
        let closed = !matches!(e.kind, vmono::catalog::SurfaceKind::FlatDisk);
        let minimal = e.known.minimal.as_ref().is_some_and(|k| k.value);
        match self {
            TheoremId::MonotonicityPosOpen | TheoremId::MonotonicityPosClosed => surface,
            TheoremId::MonotonicityM => true,
            TheoremId::MonotonicityMRemark => e.b > 0.0,
            TheoremId::MonotonicityNeg => surface && e.b < 0.0,
            TheoremId::LiYau => surface,
            TheoremId::DiameterPinchingWillmore
            | TheoremId::DiameterPinchingUpper
            | TheoremId::DiameterPinchingLower => surface && closed && e.b >= 0.0,
            TheoremId::MinDiameterLemma => e.b > 0.0,
            TheoremId::MinDiameter => e.b > 0.0 && closed && minimal,
            TheoremId::AsymptoticBound => e.b == 0.0,
            TheoremId::SobolevConstant | TheoremId::SobolevBump | TheoremId::Isoperimetric => true,
            TheoremId::GoodRadius => true,
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        TheoremId::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = TheoremId::ALL.iter().map(|t| t.as_str()).collect();
            format!("unknown theorem {s}; available: {}", names.join(", "))
        })
    }
}

/// What to run. Surfaces and theorems are crossed; with `only_applicable`
/// combinations failing [`TheoremId::applies_to`] are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub surfaces: Vec<String>,
    pub theorems: Vec<TheoremId>,
    pub resolutions: Vec<usize>,
    pub only_applicable: bool,
    /// Multiplies every report tolerance.
    pub tol_scale: f64,
    /// `sigma` and `rho` values per monotonicity grid axis.
    pub grid: usize,
    pub refine: RefineOptions,
}

impl RunSpec {
    /// Every catalog surface with every applicable theorem on the default ladder.
    pub fn default_suite(catalog: &Catalog) -> Self {
        RunSpec {
            surfaces: catalog.names().into_iter().map(String::from).collect(),
            theorems: TheoremId::ALL.to_vec(),
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            only_applicable: true,
            tol_scale: 1.0,
            grid: 10,
            refine: suite_refine(),
        }
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<(), CliError> {
        if self.surfaces.is_empty() || self.theorems.is_empty() || self.resolutions.is_empty() {
            return Err(CliError::Usage("need at least one surface, theorem and resolution".into()));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Usage("resolutions must be strictly increasing".into()));
        }
        if self.resolutions[0] < 4 {
            return Err(CliError::Usage("resolutions must be at least 4".into()));
        }
        if !(self.tol_scale > 0.0 && self.tol_scale.is_finite()) {
            return Err(CliError::Usage("tolerance scale must be positive".into()));
        }
        if self.grid < 2 {
            return Err(CliError::Usage("grid needs at least 2 radii per axis".into()));
        }
        for s in &self.surfaces {
            catalog.get(s).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }
}

/// Ball refinement used by the suite: shallower than the library default; the
/// reports' tolerances carry the larger refinement error.
pub fn suite_refine() -> RefineOptions {
    RefineOptions { max_depth: 5, ..RefineOptions::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub surface: String,
    pub theorem: TheoremId,
    pub resolution: usize,
    pub report: InequalityReport,
}

impl ReportRow {
    /// Violated while the hypotheses were met (a failed gate is never a violation).
    pub fn is_violation(&self) -> bool {
        self.report.verdict == Verdict::ViolatedWithinTolerance && self.report.hypotheses_hold()
    }
}

/// Margin change between the two finest resolutions of one (surface, theorem).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderStep {
    pub surface: String,
    pub theorem: TheoremId,
    pub coarse: usize,
    pub fine: usize,
    pub drift: f64,
    /// Sum of the two reports' tolerances.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bundle {
    pub rows: Vec<ReportRow>,
    pub ladder: Vec<LadderStep>,
}

impl Bundle {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.is_violation()).count()
    }
}

/// Runs every (surface, resolution) cell in parallel and merges in
/// (surface, theorem, resolution) order.
pub fn run(spec: &RunSpec, catalog: &Catalog) -> Result<Bundle, CliError> {
    spec.validate(catalog)?;
    let mut theorems = spec.theorems.clone();
    theorems.sort();
    theorems.dedup();
    let cells: Vec<(&SurfaceCatalogEntry, usize)> = spec
        .surfaces
        .iter()
        .map(|s| catalog.get(s).expect("validated"))
        .flat_map(|e| spec.resolutions.iter().map(move |&n| (e, n)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(e, n)| {
            let wanted: Vec<TheoremId> =
                theorems.iter().copied().filter(|t| !spec.only_applicable || t.applies_to(e)).collect();
            run_cell(e, n, &wanted, spec).map(|r| (e.name.clone(), n, r))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows = Vec::new();
    for (surface, n, reports) in results {
        for (theorem, mut report) in reports {
            rescale(&mut report, spec.tol_scale);
            rows.push(ReportRow { surface: surface.clone(), theorem, resolution: n, report });
        }
    }
    let order: Vec<&str> = spec.surfaces.iter().map(String::as_str).collect();
    let rank = |s: &str| order.iter().position(|o| *o == s).unwrap_or(usize::MAX);
    rows.sort_by_key(|a| (rank(&a.surface), a.theorem, a.resolution));
    let ladder = ladder(&rows);
    Ok(Bundle { rows, ladder })
}

fn rescale(r: &mut InequalityReport, scale: f64) {
    if scale == 1.0 || r.verdict == Verdict::HypothesisFailed {
        return;
    }
    r.tol *= scale;
    r.verdict = if r.margin >= -r.tol { Verdict::Holds } else { Verdict::ViolatedWithinTolerance };
}

fn ladder(rows: &[ReportRow]) -> Vec<LadderStep> {
    let mut out = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let last = rows.iter().filter(|r| r.surface == b.surface && r.theorem == b.theorem).map(|r| r.resolution).max();
        if a.surface != b.surface || a.theorem != b.theorem || last != Some(b.resolution) {
            continue;
        }
        if a.report.verdict == Verdict::HypothesisFailed || b.report.verdict == Verdict::HypothesisFailed {
            continue;
        }
        out.push(LadderStep {
            surface: b.surface.clone(),
            theorem: b.theorem,
            coarse: a.resolution,
            fine: b.resolution,
            drift: (b.report.margin - a.report.margin).abs(),
            bound: a.report.tol + b.report.tol,
        });
    }
    out
}

/// Curvature bound passed to theorems needing `b > 0`.
fn positive_bound(e: &SurfaceCatalogEntry) -> f64 {
    if e.b > 0.0 {
        e.b
    } else {
        POSITIVE_BOUND
    }
}

/// The catalog's exact extrinsic diameter, else the sampled one. Radii chosen from it
/// are the same at every resolution, so ladder steps compare the same statement.
pub fn reference_diameter(s: &BuiltSurface) -> f64 {
    s.entry.known.d_ext.as_ref().map_or_else(|| s.varifold.extrinsic_diameter().value, |k| k.value)
}

/// Radius range for monotonicity grids about the distinguished point: balls stay
/// inside every curvature and injectivity limit the theorems impose.
pub fn grid_range(s: &BuiltSurface) -> (f64, f64) {
    let e = &s.entry;
    let reach = reference_diameter(s);
    let mut lim = s.varifold.space().injectivity_radius();
    if e.b > 0.0 {
        lim = lim.min(PI / (2.0 * e.b.sqrt()));
    }
    let r_max = (0.9 * lim).min(1.2 * reach);
    (r_max / 20.0, r_max)
}

fn run_cell(
    e: &SurfaceCatalogEntry,
    n: usize,
    theorems: &[TheoremId],
    spec: &RunSpec,
) -> Result<Vec<(TheoremId, InequalityReport)>, CliError> {
    let s = e.build(n)?;
    let v = &s.varifold;
    let sp = *v.space();
    let bp = positive_bound(e);
    let inj = sp.injectivity_radius();
    let mut cache = BallCache::with_options(v, s.point.clone(), spec.refine);
    let (r_min, r_max) = grid_range(&s);
    let pairs = inequalities::radius_grid(r_min, r_max, spec.grid);
    let diameter = reference_diameter(&s);
    let mut out = Vec::with_capacity(theorems.len());
    for &t in theorems {
        let report = if t.is_grid() {
            let mut per_pair = Vec::with_capacity(pairs.len());
            for &(sigma, rho) in &pairs {
                if let Some(r) = grid_report(&mut cache, t, sigma, rho, e.b)? {
                    per_pair.push((sigma, rho, r));
                }
            }
            aggregate(t, per_pair, n)
        } else {
            match t {
                TheoremId::LiYau => inequalities::check_li_yau(v, &s.point, e.b)?,
                TheoremId::DiameterPinchingWillmore => {
                    inequalities::check_diameter_pinching(v, inj, bp)?.swap_remove(0)
                }
                TheoremId::DiameterPinchingUpper => inequalities::check_diameter_pinching(v, inj, bp)?.swap_remove(1),
                TheoremId::DiameterPinchingLower => inequalities::check_diameter_pinching(v, inj, bp)?.swap_remove(2),
                TheoremId::MinDiameterLemma => inequalities::check_min_diameter(v, &s.point, bp, inj)?.swap_remove(0),
                TheoremId::MinDiameter => inequalities::check_min_diameter(v, &s.point, bp, inj)?.swap_remove(1),
                TheoremId::AsymptoticBound => {
                    // clears the support with room for the cell extents of coarse meshes
                    let rho = 1.25 * diameter;
                    inequalities::check_asymptotic_bound(v, &s.point, rho, POSITIVE_BOUND)?
                }
                TheoremId::SobolevConstant => {
                    renamed(inequalities::check_sobolev(v, &ConstantFunction(1.0), bp, inj)?, t)
                }
                TheoremId::SobolevBump => {
                    let bump = RadialBump { space: sp, center: s.point.clone(), radius: 0.5 * diameter };
                    renamed(inequalities::check_sobolev(v, &bump, bp, inj)?, t)
                }
                TheoremId::Isoperimetric => inequalities::check_isoperimetric(v, bp)?,
                TheoremId::GoodRadius => good_radius(&mut cache, e.b, diameter)?,
                _ => unreachable!("grid theorems handled above"),
            }
        };
        out.push((t, report));
    }
    Ok(out)
}

fn renamed(mut r: InequalityReport, t: TheoremId) -> InequalityReport {
    r.theorem = t.as_str().to_string();
    r
}

fn grid_report(
    cache: &mut BallCache<'_>,
    t: TheoremId,
    sigma: f64,
    rho: f64,
    b: f64,
) -> Result<Option<InequalityReport>, CliError> {
    Ok(match t {
        TheoremId::MonotonicityPosOpen => {
            Some(inequalities::check_monotonicity_pos(cache, sigma, rho, b.max(0.0))?.swap_remove(0))
        }
        TheoremId::MonotonicityPosClosed => {
            Some(inequalities::check_monotonicity_pos(cache, sigma, rho, b.max(0.0))?.swap_remove(1))
        }
        TheoremId::MonotonicityM => Some(inequalities::check_monotonicity_m(cache, sigma, rho, b)?.swap_remove(0)),
        TheoremId::MonotonicityMRemark => {
            let mut r = inequalities::check_monotonicity_m(cache, sigma, rho, b)?;
            (r.len() == 2).then(|| r.swap_remove(1))
        }
        TheoremId::MonotonicityNeg => Some(inequalities::check_monotonicity_neg(cache, sigma, rho, b)?),
        _ => unreachable!("not a grid theorem"),
    })
}

/// Collapses a grid to the pair closest to violation (smallest `margin + tol`)
/// among pairs whose hypotheses hold.
fn aggregate(t: TheoremId, reports: Vec<(f64, f64, InequalityReport)>, n: usize) -> InequalityReport {
    let total = reports.len();
    let gated = reports.iter().filter(|r| !r.2.hypotheses_hold()).count();
    let violations =
        reports.iter().filter(|r| r.2.hypotheses_hold() && r.2.verdict == Verdict::ViolatedWithinTolerance).count();
    let worst = reports
        .iter()
        .filter(|r| r.2.hypotheses_hold())
        .min_by(|a, b| (a.2.margin + a.2.tol).total_cmp(&(b.2.margin + b.2.tol)));
    let mut r = match worst.or(reports.first()) {
        Some((sigma, rho, r)) => {
            let mut r = r.clone();
            r.diagnostics.values.insert("grid_sigma".into(), *sigma);
            r.diagnostics.values.insert("grid_rho".into(), *rho);
            r
        }
        None => InequalityReport {
            theorem: t.as_str().to_string(),
            hypotheses: vec![HypothesisCheck {
                name: "some grid pair admissible".into(),
                satisfied: false,
                measured: 0.0,
            }],
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            tol: f64::NAN,
            verdict: Verdict::HypothesisFailed,
            diagnostics: Diagnostics { resolution: n, ..Diagnostics::default() },
        },
    };
    r.diagnostics.values.insert("grid_pairs".into(), total as f64);
    r.diagnostics.values.insert("grid_pairs_gated".into(), gated as f64);
    r.diagnostics.values.insert("grid_violations".into(), violations as f64);
    r
}

/// Ball-mass data about the cache centre on `count` geometric radii reaching past
/// `rho0 = (2^(m+1) f_limit)^(1/m)` and the diameter `reach`: `f(t) = ||V||(B_t) / alpha(m)`
/// and `g(t) = (||dV||(B_t) + m sqrt(b) ||V||(B_t)) / alpha(m)` with `b = max(b, 0)`.
/// Pass a resolution-independent `reach` so the grid is the same on every mesh.
/// Also returns a slack covering the ball errors in both `f` and `f / t^m`.
pub fn good_radius_data(
    cache: &mut BallCache<'_>,
    b: f64,
    reach: f64,
    count: usize,
) -> Result<(RadiusData, f64), CliError> {
    let v = cache.varifold();
    let sp = *v.space();
    let m = v.dim();
    let mi = m as i32;
    let alpha = vmono::comparison::unit_ball_volume(m);
    let root_b = b.max(0.0).sqrt();
    let f_limit = v.area() / alpha;
    let rho0 = (2f64.powi(mi + 1) * f_limit).powf(1.0 / m as f64);
    let r_max = rho0.max(reach).min(0.99 * sp.injectivity_radius());
    let r_min = reach.min(r_max) / 200.0;
    let radii: Vec<f64> = (0..count).map(|i| r_min * (r_max / r_min).powf(i as f64 / (count - 1) as f64)).collect();
    let mut data = RadiusData {
        radii: radii.clone(),
        f: Vec::with_capacity(count),
        g: Vec::with_capacity(count),
        f_limit,
        f_err: Vec::with_capacity(count),
        g_err: Vec::with_capacity(count),
    };
    let mut tol = 0.0f64;
    for &r in &radii {
        let ball = cache.ball(r, BallMode::Closed)?;
        let mass = ball.mass();
        let err = mass.err / alpha;
        tol = tol.max(2.0 * err).max(2.0 * err / r.powi(mi));
        let dv = ball.integrate(|a| sp.norm(&a.h)) + ball.integrate_boundary(|_| 1.0);
        data.f.push(mass.value / alpha);
        data.f_err.push(err);
        data.g.push((dv.value + m as f64 * root_b * mass.value) / alpha);
        data.g_err.push((dv.err + m as f64 * root_b * mass.err) / alpha);
    }
    Ok((data, tol.max(1e-9)))
}

fn good_radius(cache: &mut BallCache<'_>, b: f64, reach: f64) -> Result<InequalityReport, CliError> {
    let m = cache.varifold().dim();
    let (data, tol) = good_radius_data(cache, b, reach, 30)?;
    let out = inequalities::find_good_radius(&data, m, tol)?;
    let mut r = out.report;
    if let Some(w) = out.witness {
        r.diagnostics.values.insert("witness".into(), w);
    }
    Ok(r)
}
