//! One verifier per inequality. Each measures its hypotheses, evaluates both
//! sides on a [`SampledVarifold`] and returns an [`InequalityReport`].
//!
//! Every side carries an error bound built from the quadrature companion gap,
//! the unresolved mass of cut ball cells and, where a density enters, the
//! extrapolation error of the density fit. The report tolerance is three times
//! the combined bound plus a rounding floor relative to the size of the terms.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Debug;

use nalgebra::DVector;
use serde::Serialize;

use crate::comparison::{self, unit_ball_volume};
use crate::error::{GeomError, Result};
use crate::model_space::{ModelSpace, Point};
use crate::varifold::{Atom, BallMode, BallSample, BoundaryAtom, DensityEstimate, Est, RefineOptions, SampledVarifold};

/// Multiplier applied to the propagated error bound.
pub const TOL_FACTOR: f64 = 3.0;

/// Relative rounding floor added to every tolerance.
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// Largest accepted `|H^T| / max(|H|, 1)`.
pub const NORMALITY_TOL: f64 = 1e-6;

/// Refinement depth for the density fits feeding the multiplicity inequality.
pub const DENSITY_DEPTH: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    ViolatedWithinTolerance,
    HypothesisFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub satisfied: bool,
    pub measured: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Quadrature nodes per parameter axis.
    pub resolution: usize,
    /// Propagated error bound of `rhs - lhs` before the tolerance factor.
    pub quadrature_error: f64,
    /// Mass of ball cells left cut by refinement.
    pub boundary_cell_mass: f64,
    pub density_residual: Option<f64>,
    pub evaluations: usize,
    /// Individual terms and auxiliary measurements.
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub theorem: String,
    pub hypotheses: Vec<HypothesisCheck>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

impl InequalityReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|h| h.satisfied)
    }

    /// The difference to `other`'s margin is within this report's error bound.
    pub fn margin_error_bound(&self) -> f64 {
        self.tol
    }
}

/// Accumulates hypotheses and diagnostics for one report.
#[derive(Debug)]
struct Draft {
    theorem: String,
    hyps: Vec<HypothesisCheck>,
    diag: Diagnostics,
}

impl Draft {
    fn new(theorem: &str, v: &SampledVarifold) -> Self {
        Draft {
            theorem: theorem.to_string(),
            hyps: Vec::new(),
            diag: Diagnostics { resolution: v.provenance().nodes_per_axis, ..Diagnostics::default() },
        }
    }

    fn hyp(&mut self, name: &str, satisfied: bool, measured: f64) {
        self.hyps.push(HypothesisCheck { name: name.to_string(), satisfied, measured });
    }

    fn ok(&self) -> bool {
        self.hyps.iter().all(|h| h.satisfied)
    }

    fn value(&mut self, name: &str, e: Est) {
        self.diag.values.insert(name.to_string(), e.value);
    }

    fn note(&mut self, s: String) {
        self.diag.notes.push(s);
    }

    fn absorb(&mut self, ball: &BallSample<'_>) {
        self.diag.evaluations += ball.evaluations;
        self.diag.boundary_cell_mass = self.diag.boundary_cell_mass.max(ball.unresolved_mass);
    }

    fn failed(self) -> InequalityReport {
        debug_assert!(!self.ok());
        InequalityReport {
            theorem: self.theorem,
            hypotheses: self.hyps,
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            tol: f64::NAN,
            verdict: Verdict::HypothesisFailed,
            diagnostics: self.diag,
        }
    }

    /// `scale` is the sum of absolute values of all terms, for the rounding floor.
    fn finish(mut self, lhs: Est, rhs: Est, scale: f64) -> Result<InequalityReport> {
        if !lhs.value.is_finite() || !rhs.value.is_finite() {
            return Err(GeomError::NonFinite(format!("{}: lhs {} rhs {}", self.theorem, lhs.value, rhs.value)));
        }
        let err = lhs.err + rhs.err;
        let margin = rhs.value - lhs.value;
        let tol = TOL_FACTOR * err + ROUNDING_FLOOR * scale.max(lhs.value.abs() + rhs.value.abs());
        self.diag.quadrature_error = err;
        let verdict = if !self.ok() {
            Verdict::HypothesisFailed
        } else if margin >= -tol {
            Verdict::Holds
        } else {
            Verdict::ViolatedWithinTolerance
        };
        Ok(InequalityReport {
            theorem: self.theorem,
            hypotheses: self.hyps,
            lhs: lhs.value,
            rhs: rhs.value,
            margin,
            tol,
            verdict,
            diagnostics: self.diag,
        })
    }
}

fn sum_abs(terms: &[Est]) -> f64 {
    terms.iter().map(|t| t.value.abs()).sum()
}

fn total(terms: &[Est]) -> Est {
    terms.iter().fold(Est::exact(0.0), |a, &b| a + b)
}

/// Largest `|H^T| / max(|H|, 1)` over atoms.
pub fn normality_defect(v: &SampledVarifold) -> f64 {
    let sp = v.space();
    v.atoms()
        .iter()
        .map(|a| {
            let t: f64 = a.frame.iter().map(|e| sp.form(&a.h, e).powi(2)).sum();
            t.sqrt() / sp.norm(&a.h).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Smallest multiplicity carried by an atom.
pub fn min_atom_density(v: &SampledVarifold) -> f64 {
    v.atoms().iter().map(|a| a.density).fold(f64::INFINITY, f64::min)
}

/// Number of connected pieces of the support, joining sources whose samples
/// come within the sum of their cell extents.
pub fn support_components(v: &SampledVarifold) -> usize {
    let n = v.sources().len().max(1);
    if n == 1 {
        return 1;
    }
    let sp = v.space();
    let mut groups: Vec<Vec<&Atom>> = vec![Vec::new(); n];
    for a in v.atoms() {
        if let Some(c) = a.cell {
            groups[c.source].push(a);
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let touch = groups[i].iter().any(|a| {
                groups[j].iter().any(|b| sp.distance_coords(&a.point, &b.point).is_ok_and(|d| d <= a.extent + b.extent))
            });
            if touch {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    (0..n).filter(|&i| root(&mut parent, i) == i).count()
}

/// Error of the fitted intercept: propagated ratio errors plus the fit residual.
pub fn density_error(d: &DensityEstimate) -> f64 {
    d.value_error + d.residual
}

fn dist(sp: &ModelSpace, p: &DVector<f64>, x: &DVector<f64>) -> f64 {
    sp.distance_coords(p, x).unwrap_or(f64::NAN)
}

/// `r grad r` at `x` for `r = d(p, .)`, i.e. `-log_x(p)`.
fn r_grad_r(sp: &ModelSpace, p: &Point, x: &DVector<f64>) -> DVector<f64> {
    match sp.log(&Point::from_vec_unchecked(x.clone()), p) {
        Ok(v) => -v.components,
        Err(_) => DVector::from_element(x.len(), f64::NAN),
    }
}

/// `sinh(y) / y`, equal to 1 at 0.
fn sinhc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        1.0 + y * y / 6.0
    } else {
        y.sinh() / y
    }
}

/// Ball samples about a fixed centre, shared across verifier calls.
#[derive(Debug)]
pub struct BallCache<'a> {
    v: &'a SampledVarifold,
    p: Point,
    opts: RefineOptions,
    balls: HashMap<(u64, BallMode), BallSample<'a>>,
}

impl<'a> BallCache<'a> {
    pub fn new(v: &'a SampledVarifold, p: Point) -> Self {
        Self::with_options(v, p, RefineOptions::default())
    }

    pub fn with_options(v: &'a SampledVarifold, p: Point, opts: RefineOptions) -> Self {
        BallCache { v, p, opts, balls: HashMap::new() }
    }

    pub fn varifold(&self) -> &'a SampledVarifold {
        self.v
    }

    pub fn center(&self) -> &Point {
        &self.p
    }

    pub fn ball(&mut self, r: f64, mode: BallMode) -> Result<&BallSample<'a>> {
        let key = (r.to_bits(), mode);
        if !self.balls.contains_key(&key) {
            let b = self.v.ball(&self.p, r, mode, &self.opts)?;
            self.balls.insert(key, b);
        }
        Ok(&self.balls[&key])
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

/// Moves `r` off mass atoms of the distance distribution: open and closed ball
/// masses must agree to within their error bounds. Returns the radius used.
fn continuity_radius(cache: &mut BallCache<'_>, r: f64, draft: &mut Draft, label: &str) -> Result<f64> {
    let mut t = r;
    for k in 0..12 {
        let open = cache.ball(t, BallMode::Open)?.mass();
        let closed = cache.ball(t, BallMode::Closed)?.mass();
        let jump = closed.value - open.value;
        if jump <= open.err + closed.err + 1e-12 * closed.value.abs() {
            if k > 0 {
                draft.note(format!("{label} shifted from {r:e} to {t:e} to avoid a mass jump"));
            }
            return Ok(t);
        }
        let step = 1e-3 * f64::from(1 + k / 2);
        t = if k % 2 == 0 { r * (1.0 + step) } else { r * (1.0 - step) };
    }
    draft.note(format!("{label} = {r:e}: no continuity radius found nearby"));
    Ok(r)
}

/// Geometric `count x count` grid of pairs `sigma < rho` with all `sigma` in
/// `[r_min, r_split)` and all `rho` in `[r_split, r_max]`.
pub fn radius_grid(r_min: f64, r_max: f64, count: usize) -> Vec<(f64, f64)> {
    assert!(count >= 1 && 0.0 < r_min && r_min < r_max);
    let split = (r_min * r_max).sqrt();
    let geo = |a: f64, b: f64, i: usize| -> f64 {
        if count == 1 {
            a
        } else {
            a * (b / a).powf(i as f64 / (count - 1) as f64)
        }
    };
    let sig: Vec<f64> = (0..count).map(|i| geo(r_min, 0.95 * split, i)).collect();
    let rho: Vec<f64> = (0..count).map(|i| geo(split, r_max, i)).collect();
    sig.iter().flat_map(|&s| rho.iter().map(move |&r| (s, r))).collect()
}

fn curvature_bound_hyp(d: &mut Draft, sp: &ModelSpace, b: f64) {
    d.hyp("curvature bound b >= sectional curvature", b >= sp.curvature(), b - sp.curvature());
}

fn normality_hyp(d: &mut Draft, v: &SampledVarifold) {
    let n = normality_defect(v);
    d.hyp("mean curvature normal to tangent planes", n <= NORMALITY_TOL, n);
}

/// Monotonicity for surfaces under `K <= b`, `b >= 0`, on open and on closed balls
/// (two reports, in that order). `b = 0` uses the flat limits `a_b = 1`.
pub fn check_monotonicity_pos(
    cache: &mut BallCache<'_>,
    sigma: f64,
    rho: f64,
    b: f64,
) -> Result<Vec<InequalityReport>> {
    let v = cache.varifold();
    let sp = *v.space();
    let mut out = Vec::with_capacity(2);
    for mode in [BallMode::Open, BallMode::Closed] {
        let name = match mode {
            BallMode::Open => "monotonicity_pos_open",
            BallMode::Closed => "monotonicity_pos_closed",
        };
        let mut d = Draft::new(name, v);
        d.hyp("surface (m = 2)", v.dim() == 2, v.dim() as f64);
        d.hyp("0 < sigma < rho", 0.0 < sigma && sigma < rho, sigma / rho);
        d.hyp("b >= 0", b >= 0.0, b);
        curvature_bound_hyp(&mut d, &sp, b);
        let lim = if b > 0.0 { PI / b.sqrt() } else { f64::INFINITY };
        d.hyp("rho < pi / sqrt(b)", rho < lim, rho / lim);
        let inj = sp.injectivity_radius();
        d.hyp("ball inside the star-shaped injectivity domain", rho < inj, rho / inj);
        normality_hyp(&mut d, v);
        if !d.ok() {
            out.push(d.failed());
            continue;
        }
        out.push(monotonicity_pos_terms(cache, d, sigma, rho, b, mode)?);
    }
    Ok(out)
}

fn monotonicity_pos_terms(
    cache: &mut BallCache<'_>,
    mut d: Draft,
    sigma: f64,
    rho: f64,
    b: f64,
    mode: BallMode,
) -> Result<InequalityReport> {
    let sp = *cache.varifold().space();
    let p = cache.center().coords().clone();
    let h2 = |a: &Atom| sp.form(&a.h, &a.h);
    let hn = |a: &Atom| sp.norm(&a.h);
    let cq = |a: &Atom| comparison::c_quad(b, dist(&sp, &p, &a.point)).map_or(f64::NAN, |c| c.value);

    let small = cache.ball(sigma, mode)?;
    d.absorb(small);
    let m_sigma = small.mass();
    let h2_sigma = small.integrate(h2);
    let hn_sigma = small.integrate(hn);

    let big = cache.ball(rho, mode)?;
    d.absorb(big);
    let m_rho = big.mass();
    let h2_rho = big.integrate(h2);
    let hn_rho = big.integrate(hn);
    let curv = big.integrate(cq);

    let lhs = m_sigma.scale(1.0 / (sigma * sigma));
    let mut terms = vec![
        ("mass_ratio", m_rho.scale(1.0 / (rho * rho))),
        ("curvature", curv),
        ("mean_curvature_inner", hn_sigma.scale(0.5 / sigma)),
        ("mean_curvature_outer", hn_rho.scale(0.5 / rho)),
    ];
    match mode {
        BallMode::Open => {
            terms.push(("willmore_annulus", (h2_rho - h2_sigma).scale(1.0 / 16.0)));
            let inv = big.integrate_boundary(|a: &BoundaryAtom| 0.5 / dist(&sp, &p, &a.point));
            let lin = big.integrate_boundary(|a: &BoundaryAtom| dist(&sp, &p, &a.point) / (2.0 * rho * rho));
            terms.push(("boundary_inverse", inv));
            terms.push(("boundary_linear", lin));
        }
        BallMode::Closed => {
            terms.push(("willmore_ball", h2_rho.scale(1.0 / 16.0)));
            let inv = big.integrate_boundary(|a: &BoundaryAtom| 1.0 / dist(&sp, &p, &a.point));
            terms.push(("boundary_inverse", inv));
        }
    }
    d.value("lhs_mass", m_sigma);
    for (k, t) in &terms {
        d.value(k, *t);
    }
    let ests: Vec<Est> = terms.iter().map(|t| t.1).collect();
    let scale = sum_abs(&ests) + lhs.value.abs();
    d.finish(lhs, total(&ests), scale)
}

/// `int_{max(r, sigma)}^rho t^-m dt`.
fn tail_weight(r: f64, sigma: f64, rho: f64, m: usize) -> f64 {
    let lo = r.max(sigma);
    if lo >= rho {
        return 0.0;
    }
    if m == 1 {
        (rho / lo).ln()
    } else {
        let k = 1.0 - m as f64;
        (lo.powf(k) - rho.powf(k)) / (m as f64 - 1.0)
    }
}

/// Monotonicity for `m`-dimensional varifolds on closed balls with
/// `a = a_{max(b, 0)}`. The `t`-integral is exchanged with the ball integrals,
/// which turns it into the weight [`tail_weight`]. When `b > 0` and
/// `rho < pi / (2 sqrt b)` a second report uses the cruder `m sqrt(b)` curvature term.
pub fn check_monotonicity_m(cache: &mut BallCache<'_>, sigma: f64, rho: f64, b: f64) -> Result<Vec<InequalityReport>> {
    let v = cache.varifold();
    let sp = *v.space();
    let m = v.dim();
    let bv = b.max(0.0);
    let mut d = Draft::new("monotonicity_m", v);
    d.hyp("0 < sigma < rho", 0.0 < sigma && sigma < rho, sigma / rho);
    curvature_bound_hyp(&mut d, &sp, b);
    let lim = if bv > 0.0 { PI / bv.sqrt() } else { f64::INFINITY };
    d.hyp("rho < pi / sqrt(b)", rho < lim, rho / lim);
    let inj = sp.injectivity_radius();
    d.hyp("ball inside the injectivity domain", rho < inj, rho / inj);
    if !d.ok() {
        return Ok(vec![d.failed()]);
    }
    let p = cache.center().coords().clone();
    let small = cache.ball(sigma, BallMode::Closed)?;
    d.absorb(small);
    let m_sigma = small.mass();
    let big = cache.ball(rho, BallMode::Closed)?;
    d.absorb(big);
    let mf = m as f64;
    let m_rho = big.mass();
    let w = |x: &DVector<f64>| tail_weight(dist(&sp, &p, x), sigma, rho, m);
    let dv_abs = big.integrate(|a: &Atom| w(&a.point) * sp.norm(&a.h));
    let dv_sing = big.integrate_boundary(|a: &BoundaryAtom| w(&a.point));
    let curv = big.integrate(|a: &Atom| {
        let r = dist(&sp, &p, &a.point);
        w(&a.point) * comparison::c_lin(bv, r).map_or(f64::NAN, |c| c.value)
    });
    let plain = big.integrate(|a: &Atom| w(&a.point));
    let evals = d.diag.evaluations;
    let unresolved = d.diag.boundary_cell_mass;

    let lhs = m_sigma.scale(1.0 / sigma.powi(m as i32));
    let ratio = m_rho.scale(1.0 / rho.powi(m as i32));
    let terms = [ratio, dv_abs, dv_sing, curv.scale(mf)];
    d.value("mass_ratio", ratio);
    d.value("first_variation_absolute", dv_abs);
    d.value("first_variation_singular", dv_sing);
    d.value("curvature", curv.scale(mf));
    let scale = sum_abs(&terms) + lhs.value.abs();
    let mut out = vec![d.finish(lhs, total(&terms), scale)?];

    if bv > 0.0 && rho < PI / (2.0 * bv.sqrt()) {
        let mut r = Draft::new("monotonicity_m_remark", v);
        r.hyp("0 < sigma < rho", true, sigma / rho);
        curvature_bound_hyp(&mut r, &sp, b);
        let half = PI / (2.0 * bv.sqrt());
        r.hyp("rho < pi / (2 sqrt(b))", true, rho / half);
        r.diag.evaluations = evals;
        r.diag.boundary_cell_mass = unresolved;
        let crude = plain.scale(mf * bv.sqrt());
        r.value("curvature", crude);
        let terms = [ratio, dv_abs, dv_sing, crude];
        let scale = sum_abs(&terms) + lhs.value.abs();
        out.push(r.finish(lhs, total(&terms), scale)?);
    }
    Ok(out)
}

/// Monotonicity for surfaces under `K <= b < 0`, with `phi`, `s_b`, `c_b` weights.
/// Radii sitting on mass jumps are moved to nearby continuity radii.
pub fn check_monotonicity_neg(cache: &mut BallCache<'_>, sigma: f64, rho: f64, b: f64) -> Result<InequalityReport> {
    let v = cache.varifold();
    let sp = *v.space();
    let mut d = Draft::new("monotonicity_neg", v);
    d.hyp("surface (m = 2)", v.dim() == 2, v.dim() as f64);
    d.hyp("b < 0", b < 0.0, b);
    curvature_bound_hyp(&mut d, &sp, b);
    d.hyp("0 < sigma < rho", comparison::PHI_MIN_ARG <= sigma && sigma < rho, sigma / rho);
    let inj = sp.injectivity_radius();
    d.hyp("ball inside the star-shaped injectivity domain", rho < inj, rho / inj);
    normality_hyp(&mut d, v);
    if !d.ok() {
        return Ok(d.failed());
    }
    let sigma = continuity_radius(cache, sigma, &mut d, "sigma")?;
    let rho = continuity_radius(cache, rho, &mut d, "rho")?;
    d.diag.values.insert("sigma".into(), sigma);
    d.diag.values.insert("rho".into(), rho);
    if !(sigma < rho) {
        d.hyp("continuity radii ordered", false, sigma / rho);
        return Ok(d.failed());
    }
    let k = (-b).sqrt();
    let p = cache.center().clone();
    let pc = p.coords().clone();
    let cb = |a: &Atom| (k * dist(&sp, &pc, &a.point)).cosh();
    let h2 = |a: &Atom| sp.form(&a.h, &a.h);
    // s_b(r) g(grad r, X) = (s_b(r) / r) g(r grad r, X)
    let sg_h = |a: &Atom| {
        let r = dist(&sp, &pc, &a.point);
        sinhc(k * r) * sp.form(&r_grad_r(&sp, &p, &a.point), &a.h)
    };
    let sg_eta = |a: &BoundaryAtom| {
        let r = dist(&sp, &pc, &a.point);
        sinhc(k * r) * sp.form(&r_grad_r(&sp, &p, &a.point), &a.conormal)
    };
    let phi_sg_eta = |a: &BoundaryAtom| {
        let r = dist(&sp, &pc, &a.point);
        if r < comparison::PHI_MIN_ARG {
            return 0.0;
        }
        comparison::phi(b, r).unwrap_or(f64::NAN) * sg_eta(a)
    };
    let phi_s = comparison::phi(b, sigma)?;
    let phi_r = comparison::phi(b, rho)?;

    let small = cache.ball(sigma, BallMode::Closed)?;
    d.absorb(small);
    let (m_s, cb_s, h2_s, sgh_s, sge_s, psg_s) = (
        small.mass(),
        small.integrate(cb),
        small.integrate(h2),
        small.integrate(sg_h),
        small.integrate_boundary(sg_eta),
        small.integrate_boundary(phi_sg_eta),
    );
    let big = cache.ball(rho, BallMode::Closed)?;
    d.absorb(big);
    let (m_r, cb_r, h2_r, sgh_r, sge_r, psg_r) = (
        big.mass(),
        big.integrate(cb),
        big.integrate(h2),
        big.integrate(sg_h),
        big.integrate_boundary(sg_eta),
        big.integrate_boundary(phi_sg_eta),
    );

    let lhs_terms = [cb_s.scale(2.0 * phi_s), (m_r - m_s).scale(-b)];
    let rhs_terms = [
        cb_r.scale(2.0 * phi_r),
        (h2_r - h2_s).scale(0.25),
        sgh_s.scale(-phi_s),
        sgh_r.scale(phi_r),
        sge_s.scale(phi_s),
        sge_r.scale(-phi_r),
        psg_r - psg_s,
    ];
    let names = [
        "weighted_mass_outer",
        "willmore_annulus",
        "mean_curvature_inner",
        "mean_curvature_outer",
        "boundary_inner",
        "boundary_outer",
        "boundary_annulus",
    ];
    d.value("weighted_mass_inner", lhs_terms[0]);
    d.value("annulus_mass", lhs_terms[1]);
    for (n, t) in names.iter().zip(&rhs_terms) {
        d.value(n, *t);
    }
    let scale = sum_abs(&lhs_terms) + sum_abs(&rhs_terms);
    d.finish(total(&lhs_terms), total(&rhs_terms), scale)
}

/// The multiplicity inequality `4 pi Theta(p) <= W/... + b C |V| + int t_b d|dV|_sing`,
/// with `C = 16/pi^2` for `b > 0` and `C = 1` for `b <= 0`. The density is the
/// extrapolated closed-ball ratio at `p`. For `b > 0` the `C = 1` margin is
/// recorded as `margin_c1` without being asserted.
pub fn check_li_yau(v: &SampledVarifold, p: &Point, b: f64) -> Result<InequalityReport> {
    let sp = *v.space();
    let mut d = Draft::new("li_yau", v);
    d.hyp("surface (m = 2)", v.dim() == 2, v.dim() as f64);
    curvature_bound_hyp(&mut d, &sp, b);
    let reach = v.support_radius(p)?;
    let inj = sp.injectivity_radius();
    d.hyp("support inside the star-shaped injectivity domain", reach < inj, reach / inj);
    if b > 0.0 {
        let lim = PI / (2.0 * b.sqrt());
        d.hyp("support within pi / (2 sqrt(b)) of p", reach < lim, reach / lim);
    }
    let to_bdry = v.distance_to_boundary(p)?;
    d.hyp("p off the boundary", to_bdry > v.mesh_size(), to_bdry);
    normality_hyp(&mut d, v);
    if !d.ok() {
        return Ok(d.failed());
    }
    let opts = RefineOptions { max_depth: DENSITY_DEPTH, ..RefineOptions::default() };
    let dens = v.density_estimate(p, None, &opts)?;
    let mut theta = Est { value: dens.value, err: density_error(&dens) };
    d.diag.density_residual = Some(dens.residual);
    d.diag.values.insert("density".into(), dens.value);
    // a declared multiplicity at p is the exact density; the fit stays as a cross-check
    let hint = v.multiplicity_hints().iter().find(|(x, _)| dist(&sp, p.coords(), x) <= v.mesh_size());
    if let Some((_, k)) = hint {
        d.diag.values.insert("multiplicity_hint".into(), *k as f64);
        d.note(format!("density from multiplicity hint {k}; extrapolated {:.6}", dens.value));
        theta = Est::exact(*k as f64);
    }
    let c = if b > 0.0 { 16.0 / (PI * PI) } else { 1.0 };
    let pc = p.coords();
    let will = v.integrate_est(|a| sp.form(&a.h, &a.h)).scale(0.25);
    let area = v.integrate_est(|_| 1.0);
    let sing = v.integrate_boundary_est(|a| comparison::t_b(b, dist(&sp, pc, &a.point)).unwrap_or(f64::NAN));
    let lhs = theta.scale(4.0 * PI);
    let curv = area.scale(b * c);
    d.value("willmore", will);
    d.value("curvature", curv);
    d.value("singular", sing);
    if b > 0.0 {
        let rhs1 = will.value + b * area.value + sing.value;
        d.diag.values.insert("margin_c1".into(), rhs1 - lhs.value);
    }
    let terms = [will, curv, sing];
    let scale = sum_abs(&terms) + lhs.value.abs();
    d.finish(lhs, total(&terms), scale)
}

/// Connectedness, `Theta >= 1` and the area gate shared by the pinching claims.
fn pinching_common(d: &mut Draft, v: &SampledVarifold, i: f64, b: f64, area: f64) -> Result<()> {
    let sp = v.space();
    d.hyp("surface (m = 2)", v.dim() == 2, v.dim() as f64);
    d.hyp("b >= 0", b >= 0.0, b);
    curvature_bound_hyp(d, sp, b);
    let inj = sp.injectivity_radius();
    d.hyp("0 < i <= injectivity radius", i > 0.0 && i <= inj, i);
    normality_hyp(d, v);
    let dens = min_atom_density(v);
    d.hyp("density at least 1", dens >= 1.0, dens);
    let comps = support_components(v);
    d.hyp("support connected", comps == 1, comps as f64);
    d.hyp("closed support", v.is_closed(), v.boundary_length());
    if b >= 0.0 && i > 0.0 {
        let c = comparison::area_bound_c(i, b)?;
        d.hyp("area at most C(i, b)", area <= c, area / c);
    }
    Ok(())
}

/// Three reports: `pi <= int |H|^2`, the upper diameter bound, and the lower
/// diameter bound (which additionally needs `d_ext < min{i, pi / (3 sqrt b)}`).
pub fn check_diameter_pinching(v: &SampledVarifold, i: f64, b: f64) -> Result<Vec<InequalityReport>> {
    let sp = *v.space();
    let area = v.integrate_est(|_| 1.0);
    let w2 = v.integrate_est(|a| sp.form(&a.h, &a.h));
    let diam = v.extrinsic_diameter();
    let d_ext = Est { value: diam.value, err: diam.gap };

    let mut out = Vec::with_capacity(3);
    let mut d1 = Draft::new("diameter_pinching_willmore", v);
    pinching_common(&mut d1, v, i, b, area.value)?;
    if d1.ok() {
        d1.value("area", area);
        out.push(d1.finish(Est::exact(PI), w2, PI + w2.value)?);
    } else {
        out.push(d1.failed());
    }

    let upper = |a: f64, w: f64| 2.0 * a.max(0.0).sqrt() * (w.max(0.0).sqrt() + b * a);
    let mut d2 = Draft::new("diameter_pinching_upper", v);
    pinching_common(&mut d2, v, i, b, area.value)?;
    if d2.ok() {
        let r = upper(area.value, w2.value);
        let r_err = (upper(area.value + area.err, w2.value + w2.err) - r).abs();
        d2.value("area", area);
        d2.value("willmore_l2", w2);
        out.push(d2.finish(d_ext, Est { value: r, err: r_err }, r + d_ext.value)?);
    } else {
        out.push(d2.failed());
    }

    let lower = |a: f64, w: f64| (a / w).sqrt();
    let mut d3 = Draft::new("diameter_pinching_lower", v);
    pinching_common(&mut d3, v, i, b, area.value)?;
    let lim = if b > 0.0 { i.min(PI / (3.0 * b.sqrt())) } else { i };
    let reach = d_ext.value + d_ext.err;
    d3.hyp("d_ext < min{i, pi / (3 sqrt(b))}", reach < lim, reach / lim);
    if d3.ok() {
        let l = lower(area.value, w2.value);
        let l_err = (lower(area.value + area.err, (w2.value - w2.err).max(f64::MIN_POSITIVE)) - l).abs();
        out.push(d3.finish(Est { value: l, err: l_err }, d_ext, l + d_ext.value)?);
    } else {
        out.push(d3.failed());
    }
    Ok(out)
}

/// Two reports: the weighted lower bound `m int a_b(r) <= rho ||dV||(N)` with
/// `rho` the support radius about `p`, and the lower diameter bound
/// `d_ext >= min{i_p, pi / (2 sqrt b)}` for closed minimal inputs.
pub fn check_min_diameter(v: &SampledVarifold, p: &Point, b: f64, i_p: f64) -> Result<Vec<InequalityReport>> {
    let sp = *v.space();
    let m = v.dim() as f64;
    let bound = i_p.min(if b > 0.0 { PI / (2.0 * b.sqrt()) } else { f64::INFINITY });
    let mut out = Vec::with_capacity(2);

    let mut d = Draft::new("min_diameter_lemma", v);
    d.hyp("b > 0", b > 0.0, b);
    curvature_bound_hyp(&mut d, &sp, b);
    let inj = sp.injectivity_radius();
    d.hyp("0 < i_p <= injectivity radius", i_p > 0.0 && i_p <= inj, i_p);
    let rho = v.support_radius_estimate(p)?;
    let rho_hi = (rho.value + rho.err) * (1.0 + 1e-12);
    d.hyp("support inside B_rho(p), rho < min{i_p, pi / (2 sqrt(b))}", rho_hi < bound, rho_hi / bound);
    d.value("rho", rho);
    if d.ok() {
        let pc = p.coords();
        let lhs =
            v.integrate_est(|a| comparison::a_b(b, dist(&sp, pc, &a.point)).map_or(f64::NAN, |c| c.value)).scale(m);
        let dv = v.integrate_est(|a| sp.norm(&a.h)) + v.integrate_boundary_est(|_| 1.0);
        d.value("first_variation_total", dv);
        // rho is the true support radius, known to within its sampling error
        let rhs = Est { value: dv.value * rho.value, err: dv.err * rho_hi + dv.value * rho.err };
        out.push(d.finish(lhs, rhs, lhs.value.abs() + rhs.value.abs())?);
    } else {
        out.push(d.failed());
    }

    let mut t = Draft::new("min_diameter", v);
    t.hyp("b > 0", b > 0.0, b);
    curvature_bound_hyp(&mut t, &sp, b);
    t.hyp("0 < i_p <= injectivity radius", i_p > 0.0 && i_p <= inj, i_p);
    t.hyp("closed", v.is_closed(), v.boundary_length());
    let area = v.area();
    let hbar = v.total_mean_curvature() / area.max(f64::MIN_POSITIVE);
    t.hyp("minimal", hbar <= 1e-8, hbar);
    if t.ok() {
        let diam = v.extrinsic_diameter();
        t.diag.values.insert("mesh_gap".into(), diam.gap);
        let rhs = Est { value: diam.value, err: diam.gap };
        out.push(t.finish(Est::exact(bound), rhs, bound + diam.value)?);
    } else {
        out.push(t.failed());
    }
    Ok(out)
}

/// `||V||(N) <= 2 rho / (m (1 + sqrt(1 - 4b))) ||dV||(N)` under `K_r <= b / r^2`,
/// checked only in flat space where the radial hypothesis holds for every `b > 0`.
pub fn check_asymptotic_bound(v: &SampledVarifold, p: &Point, rho: f64, b: f64) -> Result<InequalityReport> {
    let sp = *v.space();
    let mut d = Draft::new("asymptotic_bound", v);
    d.hyp("0 < b <= 1/4", b > 0.0 && b <= 0.25, b);
    d.hyp("flat ambient space", sp.curvature() == 0.0, sp.curvature());
    let reach = v.support_radius(p)?;
    d.hyp("support inside B_rho(p)", reach < rho, reach / rho);
    if !d.ok() {
        return Ok(d.failed());
    }
    let m = v.dim() as f64;
    let lhs = v.integrate_est(|_| 1.0);
    let dv = v.integrate_est(|a| sp.norm(&a.h)) + v.integrate_boundary_est(|_| 1.0);
    let c = 2.0 * rho / (m * (1.0 + (1.0 - 4.0 * b).sqrt()));
    d.value("first_variation_total", dv);
    let rhs = dv.scale(c);
    d.finish(lhs, rhs, lhs.value + rhs.value)
}

/// A non-negative `C^1` test function with values at most 1.
pub trait TestFunction: Send + Sync + Debug {
    fn value(&self, x: &DVector<f64>) -> f64;
    /// Riemannian gradient as an ambient tangent vector at `x`.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `h = c` everywhere (the limit of bump functions equal to `c` on the support).
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunction(pub f64);

impl TestFunction for ConstantFunction {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        self.0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

/// `h = (1 - (r / R)^2)^2` inside the geodesic ball of radius `R`, zero outside.
#[derive(Debug, Clone)]
pub struct RadialBump {
    pub space: ModelSpace,
    pub center: Point,
    pub radius: f64,
}

impl TestFunction for RadialBump {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let s = dist(&self.space, self.center.coords(), x) / self.radius;
        if s < 1.0 {
            (1.0 - s * s).powi(2)
        } else {
            0.0
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = dist(&self.space, self.center.coords(), x);
        let s = r / self.radius;
        if !(s < 1.0) || r == 0.0 {
            return DVector::zeros(x.len());
        }
        // dh/dr = -4 s (1 - s^2) / R, grad r = r grad r / r
        let dh = -4.0 * s * (1.0 - s * s) / self.radius;
        r_grad_r(&self.space, &self.center, x) * (dh / r)
    }
}

fn sobolev_smallness(d: &mut Draft, v: &SampledVarifold, i: f64, b: f64, mass: f64) {
    let m = v.dim();
    let diam = v.extrinsic_diameter();
    let alpha = unit_ball_volume(m);
    let vol_scale = (2f64.powi(m as i32 + 1) * mass / alpha).powf(1.0 / m as f64);
    let small = (diam.value + diam.gap).min(vol_scale);
    let lim = i.min(PI / (2.0 * b.sqrt()));
    d.hyp("min{d_ext, (2^(m+1) |V| / alpha(m))^(1/m)} < min{i, pi / (2 sqrt(b))}", small < lim, small / lim);
}

/// Sobolev inequality for a test function `h` with the per-atom multiplicity as density.
pub fn check_sobolev(v: &SampledVarifold, h: &dyn TestFunction, b: f64, i: f64) -> Result<InequalityReport> {
    let sp = *v.space();
    let m = v.dim();
    let mut d = Draft::new("sobolev", v);
    d.hyp("b > 0", b > 0.0, b);
    curvature_bound_hyp(&mut d, &sp, b);
    let inj = sp.injectivity_radius();
    d.hyp("0 < i <= injectivity radius", i > 0.0 && i <= inj, i);
    let hv: Vec<f64> = v.atoms().iter().map(|a| h.value(&a.point)).collect();
    let (lo, hi) = hv.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &x| (l.min(x), u.max(x)));
    d.hyp("0 <= h <= 1", lo >= 0.0 && hi <= 1.0, hi);
    let mass = v.area();
    if b > 0.0 && i > 0.0 {
        sobolev_smallness(&mut d, v, i, b, mass);
    }
    if !d.ok() {
        return Ok(d.failed());
    }
    let lhs = v.integrate_est(|a| {
        let x = h.value(&a.point);
        if x * a.density >= 1.0 {
            x
        } else {
            0.0
        }
    });
    let ih = v.integrate_est(|a| h.value(&a.point));
    let ih_h = v.integrate_est(|a| h.value(&a.point) * sp.norm(&a.h));
    let ih_sing = v.integrate_boundary_est(|a| h.value(&a.point));
    let grad = v.integrate_est(|a| {
        let g = h.gradient(&a.point);
        a.frame.iter().map(|e| sp.form(&g, e).powi(2)).sum::<f64>().sqrt()
    });
    let c = comparison::sobolev_constant(m)?;
    let mf = m as f64;
    let rhs_of = |ih: f64, inner: f64| c * ih.max(0.0).powf(1.0 / mf) * inner;
    let inner = ih_h + ih_sing + ih.scale(mf * b.sqrt()) + grad;
    let r = rhs_of(ih.value, inner.value);
    let r_err = (rhs_of(ih.value + ih.err, inner.value + inner.err) - r).abs();
    d.value("integral_h", ih);
    d.value("first_variation_h", ih_h + ih_sing);
    d.value("gradient", grad);
    d.finish(lhs, Est { value: r, err: r_err }, lhs.value + r)
}

/// `|V|^((m-1)/m) <= 2 C(m) ||dV||(N)` under `2 C(m) m sqrt(b) |V|^(1/m) <= 1`.
pub fn check_isoperimetric(v: &SampledVarifold, b: f64) -> Result<InequalityReport> {
    let sp = *v.space();
    let m = v.dim();
    let mf = m as f64;
    let mut d = Draft::new("isoperimetric", v);
    d.hyp("b > 0", b > 0.0, b);
    curvature_bound_hyp(&mut d, &sp, b);
    let dens = min_atom_density(v);
    d.hyp("density at least 1", dens >= 1.0, dens);
    let c = comparison::sobolev_constant(m)?;
    let mass = v.integrate_est(|_| 1.0);
    let gate = 2.0 * c * mf * b.max(0.0).sqrt() * mass.value.powf(1.0 / mf);
    d.hyp("2 C(m) m sqrt(b) |V|^(1/m) <= 1", gate <= 1.0, gate);
    if b > 0.0 {
        sobolev_smallness(&mut d, v, sp.injectivity_radius(), b, mass.value);
    }
    if !d.ok() {
        return Ok(d.failed());
    }
    let e = (mf - 1.0) / mf;
    let l = mass.value.powf(e);
    let l_err = ((mass.value + mass.err).powf(e) - l).abs();
    let dv = v.integrate_est(|a| sp.norm(&a.h)) + v.integrate_boundary_est(|_| 1.0);
    d.value("first_variation_total", dv);
    let rhs = dv.scale(2.0 * c);
    d.finish(Est { value: l, err: l_err }, rhs, l + rhs.value)
}

/// Sampled data for the good-radius search: `f` non-decreasing with limit
/// `f_limit`, both `f` and `g` given on the ascending grid `radii`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusData {
    pub radii: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub f_limit: f64,
    /// Error bounds of `f` and `g` per radius; empty for exact data.
    pub f_err: Vec<f64>,
    pub g_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodRadius {
    pub witness: Option<f64>,
    pub rho0: f64,
    pub report: InequalityReport,
}

/// Searches the grid for `rho <= rho0` with `f(5 rho) < (5^m / 2) rho0 g(rho)`,
/// `rho0 = (2^(m+1) f_limit)^(1/m)`. `f(5 rho)` is bounded above by the value at
/// the next grid point (or `f_limit` past the grid), so a returned witness is
/// valid for every non-decreasing `f` matching the samples.
pub fn find_good_radius(data: &RadiusData, m: usize, tol: f64) -> Result<GoodRadius> {
    let n = data.radii.len();
    if n < 2 || data.f.len() != n || data.g.len() != n || m == 0 {
        return Err(GeomError::Input("radius data needs matching grids of length >= 2 and m >= 1".into()));
    }
    let errs_ok = |e: &[f64]| e.is_empty() || (e.len() == n && e.iter().all(|x| x.is_finite() && *x >= 0.0));
    if !errs_ok(&data.f_err) || !errs_ok(&data.g_err) {
        return Err(GeomError::Input("error bounds must be empty or one non-negative value per radius".into()));
    }
    let err_at = |e: &[f64], k: usize| e.get(k).copied().unwrap_or(0.0);
    let finite = data.radii.iter().chain(&data.f).chain(&data.g).all(|x| x.is_finite()) && data.f_limit.is_finite();
    if !finite {
        return Err(GeomError::Input("radius data contains non-finite samples".into()));
    }
    if data.radii[0] <= 0.0 || data.radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(GeomError::Input("radii must be positive and strictly increasing".into()));
    }
    let mi = m as i32;
    let mf = m as f64;
    let rho0 = (2f64.powi(mi + 1) * data.f_limit).powf(1.0 / mf);
    let mut d = Draft {
        theorem: "good_radius".into(),
        hyps: Vec::new(),
        diag: Diagnostics { resolution: n, ..Diagnostics::default() },
    };
    let fmax = data.f.iter().fold(0.0f64, |a, &b| a.max(b));
    let drop = data.f.windows(2).map(|w| w[0] - w[1]).fold(0.0f64, f64::max);
    d.hyp("f non-decreasing and bounded by its limit", drop <= tol && fmax <= data.f_limit + tol, drop);
    let small = data.f.iter().zip(&data.radii).take(3).map(|(f, r)| f / r.powi(mi)).fold(0.0f64, f64::max);
    d.hyp("limsup f(t)/t^m >= 1 at the smallest radii", small >= 1.0 - tol, small);
    // cumulative trapezoid of t^-m g(t)
    let mut cum = vec![0.0; n];
    for k in 1..n {
        let (a, b) = (data.radii[k - 1], data.radii[k]);
        cum[k] = cum[k - 1] + 0.5 * (b - a) * (data.g[k - 1] / a.powi(mi) + data.g[k] / b.powi(mi));
    }
    let mut worst = f64::INFINITY;
    for s in 0..n {
        for r in s + 1..n {
            if data.radii[r] > rho0 {
                break;
            }
            let lhs = data.f[s] / data.radii[s].powi(mi);
            let rhs = data.f[r] / data.radii[r].powi(mi) + (cum[r] - cum[s]);
            worst = worst.min((rhs - lhs) / lhs.abs().max(1.0));
        }
    }
    d.hyp("monotonicity inequality on the grid", worst >= -tol, worst);
    if !d.ok() {
        return Ok(GoodRadius { witness: None, rho0, report: d.failed() });
    }
    let f_up = |t: f64| -> Est {
        data.radii
            .iter()
            .position(|&r| r >= t)
            .map_or(Est::exact(data.f_limit), |k| Est { value: data.f[k], err: err_at(&data.f_err, k) })
    };
    let c = 0.5 * 5f64.powi(mi) * rho0;
    // the best margin moves by at most the sample errors, so it is stable under refinement
    let mut best: Option<(f64, Est, Est)> = None;
    for k in 0..n {
        let rho = data.radii[k];
        if rho > rho0 {
            break;
        }
        let l = f_up(5.0 * rho);
        let r = Est { value: c * data.g[k], err: c * err_at(&data.g_err, k) };
        if best.is_none_or(|(_, bl, br)| r.value - l.value > br.value - bl.value) {
            best = Some((rho, l, r));
        }
    }
    let (rho, l, r) = best.ok_or_else(|| GeomError::Input("no grid radius below rho0".into()))?;
    d.diag.values.insert("rho".into(), rho);
    d.diag.values.insert("rho0".into(), rho0);
    let witness = (l.value < r.value).then_some(rho);
    let mut report = d.finish(l, r, l.value + r.value)?;
    if witness.is_none() && report.verdict == Verdict::Holds {
        // the lemma asks for strict inequality
        report.verdict = Verdict::ViolatedWithinTolerance;
    }
    Ok(GoodRadius { witness, rho0, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{sample_union, sample_varifold, GeodesicDisk, GeodesicSphere, QuadratureSpec};
    use crate::quadrature::adaptive_simpson;
    use std::sync::Arc;

    fn sphere(b: f64, rho: f64, n: usize) -> SampledVarifold {
        let sp = ModelSpace::new(3, b).unwrap();
        sample_varifold(Arc::new(GeodesicSphere::new(sp, rho).unwrap()), &QuadratureSpec::new(n)).unwrap()
    }

    fn pole(v: &SampledVarifold) -> Point {
        // the surface point closest to the +x1 pole of the parametrisation
        let a = v.atoms().iter().max_by(|a, b| a.point[1].total_cmp(&b.point[1])).unwrap();
        a.point()
    }

    #[test]
    fn tail_weight_matches_direct_integral() {
        for m in [1, 2, 3] {
            for r in [0.05f64, 0.3, 0.7, 1.5] {
                let direct =
                    adaptive_simpson(|t: f64| t.powi(-(m as i32)), r.max(0.2), 1.0f64.max(r.max(0.2)), 1e-12, 50);
                assert!((tail_weight(r, 0.2, 1.0, m) - direct).abs() < 1e-10, "m={m} r={r}");
            }
        }
    }

    #[test]
    fn radius_grid_shape() {
        let g = radius_grid(0.01, 1.0, 10);
        assert_eq!(g.len(), 100);
        assert!(g.iter().all(|(s, r)| s < r && *s >= 0.01 && *r <= 1.0 + 1e-15));
    }

    #[test]
    fn flat_disk_monotonicity_is_equality() {
        let sp = ModelSpace::euclidean(3);
        let v = sample_varifold(Arc::new(GeodesicDisk::new(sp, 1.0).unwrap()), &QuadratureSpec::new(32)).unwrap();
        let mut cache = BallCache::new(&v, sp.origin());
        for r in check_monotonicity_pos(&mut cache, 0.3, 0.8, 0.0).unwrap() {
            assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
            assert!(r.margin.abs() <= r.tol.max(1e-3), "{r:?}");
        }
    }

    #[test]
    fn monotonicity_m_matches_simpson_in_t() {
        let v = sphere(1.0, 0.6, 32);
        let p = pole(&v);
        let mut cache = BallCache::new(&v, p);
        let (s, r) = (0.2, 0.9);
        let rep = &check_monotonicity_m(&mut cache, s, r, 1.0).unwrap()[0];
        let sp = *v.space();
        let pc = cache.center().coords().clone();
        let inner = |t: f64, c: &mut BallCache<'_>| -> f64 {
            let ball = c.ball(t, BallMode::Closed).unwrap();
            let dv = ball.integrate(|a| sp.norm(&a.h)).value + ball.integrate_boundary(|_| 1.0).value;
            let cl = ball.integrate(|a| comparison::c_lin(1.0, dist(&sp, &pc, &a.point)).unwrap().value).value;
            (dv + 2.0 * cl) / (t * t)
        };
        let integral = adaptive_simpson(|t| inner(t, &mut cache), s, r, 1e-6, 12);
        let big = cache.ball(r, BallMode::Closed).unwrap().mass().value / (r * r);
        assert!((rep.rhs - (big + integral)).abs() < 1e-3 * rep.rhs, "{} vs {}", rep.rhs, big + integral);
        assert_eq!(rep.verdict, Verdict::Holds);
    }

    #[test]
    fn li_yau_hyperbolic_sphere_is_equality() {
        let v = sphere(-1.0, 0.7, 64);
        let p = pole(&v);
        let r = check_li_yau(&v, &p, -1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
        assert!(r.margin.abs() < 5e-3, "{r:?}");
    }

    #[test]
    fn li_yau_gate_on_large_spheres() {
        let v = sphere(1.0, 1.0, 16);
        let p = pole(&v);
        let r = check_li_yau(&v, &p, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesisFailed);
        assert!(r.lhs.is_nan());
    }

    #[test]
    fn neg_monotonicity_holds() {
        let v = sphere(-1.0, 0.8, 32);
        let p = pole(&v);
        let mut cache = BallCache::new(&v, p);
        for (s, r) in radius_grid(0.05, 1.5, 3) {
            let rep = check_monotonicity_neg(&mut cache, s, r, -1.0).unwrap();
            assert_eq!(rep.verdict, Verdict::Holds, "{rep:?}");
        }
    }

    #[test]
    fn good_radius_on_quadratic_data() {
        let radii: Vec<f64> = (1..=400).map(|k| 0.01 * k as f64).collect();
        let f: Vec<f64> = radii.iter().map(|t| (t * t).min(4.0)).collect();
        let g = vec![4.0; radii.len()];
        let data = RadiusData { radii, f, g, f_limit: 4.0, f_err: Vec::new(), g_err: Vec::new() };
        let out = find_good_radius(&data, 2, 1e-9).unwrap();
        assert!(out.report.hypotheses_hold(), "{:?}", out.report);
        let w = out.witness.unwrap();
        assert!((w * 5.0).powi(2).min(4.0) < 12.5 * out.rho0 * 4.0);
    }

    #[test]
    fn good_radius_with_unit_g_fails_its_hypothesis() {
        let radii: Vec<f64> = (1..=400).map(|k| 0.01 * k as f64).collect();
        let f: Vec<f64> = radii.iter().map(|t| (t * t).min(4.0)).collect();
        let g = vec![1.0; radii.len()];
        let data = RadiusData { radii, f, g, f_limit: 4.0, f_err: Vec::new(), g_err: Vec::new() };
        let out = find_good_radius(&data, 2, 1e-9).unwrap();
        assert_eq!(out.report.verdict, Verdict::HypothesisFailed, "{:?}", out.report);
    }

    #[test]
    fn good_radius_rejects_adversarial_data() {
        let radii: Vec<f64> = (1..=50).map(|k| 0.02 * k as f64).collect();
        let f: Vec<f64> = radii.iter().map(|t| if *t < 0.5 { 0.5 * t * t } else { 1.0 }).collect();
        let data =
            RadiusData { g: vec![0.0; radii.len()], radii, f, f_limit: 1.0, f_err: Vec::new(), g_err: Vec::new() };
        let out = find_good_radius(&data, 2, 1e-9).unwrap();
        assert_eq!(out.report.verdict, Verdict::HypothesisFailed);
        assert!(out.witness.is_none());
        let bad = RadiusData {
            radii: vec![0.1, 0.2],
            f: vec![f64::NAN, 1.0],
            g: vec![1.0, 1.0],
            f_limit: 1.0,
            f_err: Vec::new(),
            g_err: Vec::new(),
        };
        assert!(find_good_radius(&bad, 2, 1e-9).is_err());
    }

    #[test]
    fn tangent_pair_components() {
        let sp = ModelSpace::euclidean(3);
        let a = GeodesicSphere::new(sp, 1.0).unwrap();
        let far = sp.point(DVector::from_vec(vec![5.0, 0.0, 0.0])).unwrap();
        let b = GeodesicSphere::at(sp, &far, sp.origin_tangent_basis(), 1.0).unwrap();
        let v = sample_union(vec![Arc::new(a), Arc::new(b)], &QuadratureSpec::new(8)).unwrap();
        assert_eq!(support_components(&v), 2);
    }
}
