//! Parametric immersions of 1- and 2-dimensional rectangles into a model space,
//! their local geometry, and sampling into varifold atoms.
//!
//! Every catalog surface is written as `f = C(s) c + S(s) w`, with `c` a base
//! point, `w` a unit tangent vector at `c` and `(C, S)` the solutions of
//! `y'' = -b y` with `C(0) = 1, S(0) = 0, C'(0) = 0, S'(0) = 1`. Fixing `s`
//! gives geodesic spheres and circles; letting `s` vary gives geodesic disks.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::model_space::{Isometry, ModelSpace, Point, TangentVector};
use crate::quadrature::{self, Rule1d};
use crate::varifold::{Atom, BoundaryAtom, BoundaryCell, Cell, Provenance, SampledVarifold};

/// Finite-difference step as a fraction of each axis extent.
pub const FD_REL_STEP: f64 = 1e-4;
/// Pullback metrics with `lambda_min <= DEGENERACY_TOL * trace` are rejected.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Safety factor on the first-order image radius of a parameter cell.
const EXTENT_SAFETY: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// A genuine boundary edge; it carries conormal atoms.
    Boundary,
    /// A removable coordinate singularity where the edge collapses to a point.
    Pole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisKind {
    Periodic,
    Bounded { lo: EdgeKind, hi: EdgeKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub kind: AxisKind,
}

impl Axis {
    pub fn periodic(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, kind: AxisKind::Periodic }
    }

    pub fn bounded(lo: f64, hi: f64, lo_edge: EdgeKind, hi_edge: EdgeKind) -> Self {
        Axis { lo, hi, kind: AxisKind::Bounded { lo: lo_edge, hi: hi_edge } }
    }

    pub fn extent(&self) -> f64 {
        self.hi - self.lo
    }

    fn rule(&self, n: usize) -> Rule1d {
        match self.kind {
            AxisKind::Periodic => quadrature::periodic(n, self.lo, self.hi),
            AxisKind::Bounded { .. } => quadrature::gauss_legendre(n, self.lo, self.hi),
        }
    }
}

/// One edge of the parameter rectangle: `axis` is held at its `lo` or `hi` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub axis: usize,
    pub hi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    axes: Vec<Axis>,
}

impl ParameterDomain {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GeomError::Input(format!("parameter domains have 1 or 2 axes, got {}", axes.len())));
        }
        for a in &axes {
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(GeomError::Input(format!("empty parameter interval [{}, {}]", a.lo, a.hi)));
            }
        }
        Ok(ParameterDomain { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edges().is_empty()
    }

    pub fn boundary_edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (i, a) in self.axes.iter().enumerate() {
            if let AxisKind::Bounded { lo, hi } = a.kind {
                if lo == EdgeKind::Boundary {
                    edges.push(Edge { axis: i, hi: false });
                }
                if hi == EdgeKind::Boundary {
                    edges.push(Edge { axis: i, hi: true });
                }
            }
        }
        edges
    }
}

/// Position with first and second parameter derivatives, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub x: DVector<f64>,
    pub d1: Vec<DVector<f64>>,
    /// Symmetric `m x m` table of second derivatives; empty when not requested.
    pub d2: Vec<Vec<DVector<f64>>>,
}

/// A smooth immersion of a parameter rectangle into a model space.
///
/// `eval` must land on the quadric and be safe to call concurrently.
pub trait Immersion: Send + Sync + Debug {
    fn space(&self) -> ModelSpace;
    fn domain(&self) -> &ParameterDomain;
    fn eval(&self, u: &[f64]) -> DVector<f64>;

    fn analytic_jet(&self, _u: &[f64]) -> Option<Jet> {
        None
    }

    /// A jet assembled from exact and finite-difference parts, preferred over
    /// plain finite differences of `eval`.
    fn composite_jet(&self, _u: &[f64], _second: bool) -> Option<Jet> {
        None
    }

    /// Points of known multiplicity greater than one.
    fn multiplicity_hints(&self) -> Vec<(DVector<f64>, usize)> {
        Vec::new()
    }

    fn label(&self) -> String;
}

/// An ambient vector field; values are projected onto the space's tangent space before use.
pub trait VectorField: Send + Sync + Debug {
    fn at(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Wraps a closure as a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F> Debug for FnField<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FnField")
    }
}

impl<F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync> VectorField for FnField<F> {
    fn at(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.0)(x)
    }
}

/// `X(x) = A x + c + amp * sin(B x)` (componentwise sine).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub bmat: DMatrix<f64>,
    pub amp: f64,
}

impl VectorField for SmoothField {
    fn at(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = (&self.bmat * x).map(f64::sin);
        &self.a * x + &self.c + s * self.amp
    }
}

/// Tangent value of a field at a point of `space`.
pub fn tangent_field_value(space: &ModelSpace, field: &dyn VectorField, x: &DVector<f64>) -> DVector<f64> {
    space.project_tangent_raw(x, &field.at(x))
}

/// `(C, S)` with `C' = -b S`, `S' = C`.
#[inline]
pub fn cs(b: f64, s: f64) -> (f64, f64) {
    if b > 0.0 {
        let k = b.sqrt();
        ((k * s).cos(), (k * s).sin() / k)
    } else if b < 0.0 {
        let k = (-b).sqrt();
        ((k * s).cosh(), (k * s).sinh() / k)
    } else {
        (1.0, s)
    }
}

fn check_frame(space: &ModelSpace, center: &Point, frame: &[DVector<f64>], needed: usize) -> Result<()> {
    if frame.len() != needed {
        return Err(GeomError::Input(format!("expected {needed} frame vectors, got {}", frame.len())));
    }
    space.tangent_plane(center, frame.to_vec()).map(|_| ())
}

fn default_frame(space: &ModelSpace, k: usize) -> Result<Vec<DVector<f64>>> {
    if space.dim() < k {
        return Err(GeomError::Input(format!("need ambient dimension >= {k}, got {}", space.dim())));
    }
    Ok(space.origin_tangent_basis().into_iter().take(k).collect())
}

/// Geodesic sphere `{exp_c(rho w) : |w| = 1, w in span(e_a, e_b, e_c)}`; a great
/// sphere when `rho = pi / (2 sqrt b)`, a round sphere of radius `rho` when `b = 0`.
#[derive(Debug, Clone)]
pub struct GeodesicSphere {
    space: ModelSpace,
    center: DVector<f64>,
    frame: [DVector<f64>; 3],
    rho: f64,
    domain: ParameterDomain,
}

impl GeodesicSphere {
    pub fn new(space: ModelSpace, rho: f64) -> Result<Self> {
        let f = default_frame(&space, 3)?;
        Self::at(space, &space.origin(), f, rho)
    }

    pub fn at(space: ModelSpace, center: &Point, frame: Vec<DVector<f64>>, rho: f64) -> Result<Self> {
        check_frame(&space, center, &frame, 3)?;
        check_radius(&space, rho)?;
        let domain = ParameterDomain::new(vec![
            Axis::bounded(0.0, PI, EdgeKind::Pole, EdgeKind::Pole),
            Axis::periodic(0.0, 2.0 * PI),
        ])?;
        let [a, b, c]: [DVector<f64>; 3] = frame.try_into().expect("length checked");
        Ok(GeodesicSphere { space, center: center.coords().clone(), frame: [a, b, c], rho, domain })
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    fn omega(&self, th: f64, ph: f64) -> [DVector<f64>; 6] {
        let [ea, eb, ec] = &self.frame;
        let (st, ct) = th.sin_cos();
        let (sp, cp) = ph.sin_cos();
        let comb = |a: f64, b: f64, c: f64| DVector::from_fn(ea.len(), |i, _| ea[i] * a + eb[i] * b + ec[i] * c);
        let w = comb(ct, st * cp, st * sp);
        let w_t = comb(-st, ct * cp, ct * sp);
        let w_p = comb(0.0, -st * sp, st * cp);
        let w_tt = -&w;
        let w_tp = comb(0.0, -ct * sp, ct * cp);
        let w_pp = comb(0.0, -st * cp, -st * sp);
        [w, w_t, w_p, w_tt, w_tp, w_pp]
    }
}

fn check_radius(space: &ModelSpace, rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(GeomError::Input(format!("radius must be positive, got {rho}")));
    }
    if space.curvature() > 0.0 && space.curvature().sqrt() * rho >= PI {
        return Err(GeomError::Input(format!("radius {rho} reaches the antipode")));
    }
    Ok(())
}

impl Immersion for GeodesicSphere {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        let (c, s) = cs(self.space.curvature(), self.rho);
        let [w, ..] = self.omega(u[0], u[1]);
        &self.center * c + w * s
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let (c, s) = cs(self.space.curvature(), self.rho);
        let [w, w_t, w_p, w_tt, w_tp, w_pp] = self.omega(u[0], u[1]);
        Some(Jet {
            x: &self.center * c + w * s,
            d1: vec![w_t * s, w_p * s],
            d2: vec![vec![&w_tt * s, &w_tp * s], vec![w_tp * s, w_pp * s]],
        })
    }

    fn label(&self) -> String {
        format!("geodesic sphere rho={} b={}", self.rho, self.space.curvature())
    }
}

/// Geodesic circle of radius `rho` about `c` in the plane spanned by `e1, e2`.
#[derive(Debug, Clone)]
pub struct GeodesicCircle {
    space: ModelSpace,
    center: DVector<f64>,
    frame: [DVector<f64>; 2],
    rho: f64,
    domain: ParameterDomain,
}

impl GeodesicCircle {
    pub fn new(space: ModelSpace, rho: f64) -> Result<Self> {
        let f = default_frame(&space, 2)?;
        Self::at(space, &space.origin(), f, rho)
    }

    pub fn at(space: ModelSpace, center: &Point, frame: Vec<DVector<f64>>, rho: f64) -> Result<Self> {
        check_frame(&space, center, &frame, 2)?;
        check_radius(&space, rho)?;
        let domain = ParameterDomain::new(vec![Axis::periodic(0.0, 2.0 * PI)])?;
        let [a, b]: [DVector<f64>; 2] = frame.try_into().expect("length checked");
        Ok(GeodesicCircle { space, center: center.coords().clone(), frame: [a, b], rho, domain })
    }
}

impl Immersion for GeodesicCircle {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.analytic_jet(u).expect("analytic").x
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let (c, s) = cs(self.space.curvature(), self.rho);
        let (sp, cp) = u[0].sin_cos();
        let [e1, e2] = &self.frame;
        let w = e1 * cp + e2 * sp;
        let w_p = e1 * (-sp) + e2 * cp;
        Some(Jet { x: &self.center * c + &w * s, d1: vec![w_p * s], d2: vec![vec![w * (-s)]] })
    }

    fn label(&self) -> String {
        format!("geodesic circle rho={} b={}", self.rho, self.space.curvature())
    }
}

/// Totally geodesic disk `{exp_c(s w) : 0 <= s <= rho}` (a flat disk when `b = 0`).
#[derive(Debug, Clone)]
pub struct GeodesicDisk {
    space: ModelSpace,
    center: DVector<f64>,
    frame: [DVector<f64>; 2],
    rho: f64,
    domain: ParameterDomain,
}

impl GeodesicDisk {
    pub fn new(space: ModelSpace, rho: f64) -> Result<Self> {
        let f = default_frame(&space, 2)?;
        Self::at(space, &space.origin(), f, rho)
    }

    pub fn at(space: ModelSpace, center: &Point, frame: Vec<DVector<f64>>, rho: f64) -> Result<Self> {
        check_frame(&space, center, &frame, 2)?;
        check_radius(&space, rho)?;
        let domain = ParameterDomain::new(vec![
            Axis::bounded(0.0, rho, EdgeKind::Pole, EdgeKind::Boundary),
            Axis::periodic(0.0, 2.0 * PI),
        ])?;
        let [a, b]: [DVector<f64>; 2] = frame.try_into().expect("length checked");
        Ok(GeodesicDisk { space, center: center.coords().clone(), frame: [a, b], rho, domain })
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }
}

impl Immersion for GeodesicDisk {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        let (c, s) = cs(self.space.curvature(), u[0]);
        let (sp, cp) = u[1].sin_cos();
        let [e1, e2] = &self.frame;
        &self.center * c + (e1 * cp + e2 * sp) * s
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let b = self.space.curvature();
        let (c, s) = cs(b, u[0]);
        let (sp, cp) = u[1].sin_cos();
        let [e1, e2] = &self.frame;
        let w = e1 * cp + e2 * sp;
        let w_p = e1 * (-sp) + e2 * cp;
        let x = &self.center * c + &w * s;
        let f_s = &self.center * (-b * s) + &w * c;
        let f_ss = &x * (-b);
        Some(Jet { d1: vec![f_s, &w_p * s], d2: vec![vec![f_ss, &w_p * c], vec![&w_p * c, &w * (-s)]], x })
    }

    fn label(&self) -> String {
        format!("geodesic disk rho={} b={}", self.rho, self.space.curvature())
    }
}

/// Product torus `(r1 cos u, r1 sin u, r2 cos v, r2 sin v)` in a sphere with
/// `r1^2 + r2^2 = 1/b`; minimal (Clifford) when `r1 = r2`.
#[derive(Debug, Clone)]
pub struct CliffordTorus {
    space: ModelSpace,
    r1: f64,
    r2: f64,
    domain: ParameterDomain,
}

impl CliffordTorus {
    pub fn new(space: ModelSpace) -> Result<Self> {
        Self::with_angle(space, PI / 4.0)
    }

    /// `r1 = cos(angle)/sqrt(b)`, `r2 = sin(angle)/sqrt(b)`.
    pub fn with_angle(space: ModelSpace, angle: f64) -> Result<Self> {
        if !(space.curvature() > 0.0) || space.dim() < 3 {
            return Err(GeomError::Input("product tori need a sphere of dimension >= 3".into()));
        }
        if !(angle > 0.0 && angle < PI / 2.0) {
            return Err(GeomError::Input(format!("torus angle {angle} outside (0, pi/2)")));
        }
        let k = space.curvature().sqrt();
        let domain = ParameterDomain::new(vec![Axis::periodic(0.0, 2.0 * PI), Axis::periodic(0.0, 2.0 * PI)])?;
        Ok(CliffordTorus { space, r1: angle.cos() / k, r2: angle.sin() / k, domain })
    }
}

impl Immersion for CliffordTorus {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.analytic_jet(u).expect("analytic").x
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let d = self.space.ambient_dim();
        let (su, cu) = u[0].sin_cos();
        let (sv, cv) = u[1].sin_cos();
        let vec4 = |a: f64, b: f64, c: f64, e: f64| {
            let mut v = DVector::zeros(d);
            v[0] = a;
            v[1] = b;
            v[2] = c;
            v[3] = e;
            v
        };
        let (r1, r2) = (self.r1, self.r2);
        let z = DVector::zeros(d);
        Some(Jet {
            x: vec4(r1 * cu, r1 * su, r2 * cv, r2 * sv),
            d1: vec![vec4(-r1 * su, r1 * cu, 0.0, 0.0), vec4(0.0, 0.0, -r2 * sv, r2 * cv)],
            d2: vec![vec![vec4(-r1 * cu, -r1 * su, 0.0, 0.0), z.clone()], vec![z, vec4(0.0, 0.0, -r2 * cv, -r2 * sv)]],
        })
    }

    fn label(&self) -> String {
        format!("product torus r1={} r2={}", self.r1, self.r2)
    }
}

/// Torus of revolution `((R + r cos v) cos u, (R + r cos v) sin u, r sin v)` in flat space.
#[derive(Debug, Clone)]
pub struct TorusOfRevolution {
    space: ModelSpace,
    big: f64,
    small: f64,
    domain: ParameterDomain,
}

impl TorusOfRevolution {
    pub fn new(space: ModelSpace, big: f64, small: f64) -> Result<Self> {
        if space.curvature() != 0.0 || space.dim() < 3 {
            return Err(GeomError::Input("torus of revolution needs flat space of dimension >= 3".into()));
        }
        if !(small > 0.0 && big > small) {
            return Err(GeomError::Input(format!("torus radii need 0 < r < R, got R={big} r={small}")));
        }
        let domain = ParameterDomain::new(vec![Axis::periodic(0.0, 2.0 * PI), Axis::periodic(0.0, 2.0 * PI)])?;
        Ok(TorusOfRevolution { space, big, small, domain })
    }
}

impl Immersion for TorusOfRevolution {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.analytic_jet(u).expect("analytic").x
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let d = self.space.ambient_dim();
        let (su, cu) = u[0].sin_cos();
        let (sv, cv) = u[1].sin_cos();
        let (rr, r) = (self.big, self.small);
        let w = rr + r * cv;
        let v3 = |a: f64, b: f64, c: f64| {
            let mut v = DVector::zeros(d);
            v[0] = a;
            v[1] = b;
            v[2] = c;
            v
        };
        let uv = v3(r * sv * su, -r * sv * cu, 0.0);
        Some(Jet {
            x: v3(w * cu, w * su, r * sv),
            d1: vec![v3(-w * su, w * cu, 0.0), v3(-r * sv * cu, -r * sv * su, r * cv)],
            d2: vec![vec![v3(-w * cu, -w * su, 0.0), uv.clone()], vec![uv, v3(-r * cv * cu, -r * cv * su, -r * sv)]],
        })
    }

    fn label(&self) -> String {
        format!("torus of revolution R={} r={}", self.big, self.small)
    }
}

/// Flat rectangle `(u, v) -> u e_0 + v e_1` in flat space, with all four edges as boundary.
#[derive(Debug, Clone)]
pub struct FlatPatch {
    space: ModelSpace,
    domain: ParameterDomain,
}

impl FlatPatch {
    pub fn unit_square(space: ModelSpace) -> Result<Self> {
        Self::new(space, [0.0, 1.0], [0.0, 1.0])
    }

    pub fn new(space: ModelSpace, u: [f64; 2], v: [f64; 2]) -> Result<Self> {
        if space.curvature() != 0.0 || space.dim() < 2 {
            return Err(GeomError::Input("flat patches live in flat space of dimension >= 2".into()));
        }
        let domain = ParameterDomain::new(vec![
            Axis::bounded(u[0], u[1], EdgeKind::Boundary, EdgeKind::Boundary),
            Axis::bounded(v[0], v[1], EdgeKind::Boundary, EdgeKind::Boundary),
        ])?;
        Ok(FlatPatch { space, domain })
    }
}

impl Immersion for FlatPatch {
    fn space(&self) -> ModelSpace {
        self.space
    }

    fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.space.ambient_dim());
        x[0] = u[0];
        x[1] = u[1];
        x
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let d = self.space.ambient_dim();
        let e = |i: usize| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 });
        let z = DVector::zeros(d);
        Some(Jet { x: self.eval(u), d1: vec![e(0), e(1)], d2: vec![vec![z.clone(), z.clone()], vec![z.clone(), z]] })
    }

    fn label(&self) -> String {
        "flat patch".into()
    }
}

/// `iso . f`.
#[derive(Debug, Clone)]
pub struct TransformedImmersion {
    inner: Arc<dyn Immersion>,
    iso: Isometry,
}

impl TransformedImmersion {
    pub fn new(inner: Arc<dyn Immersion>, iso: Isometry) -> Self {
        TransformedImmersion { inner, iso }
    }
}

impl Immersion for TransformedImmersion {
    fn space(&self) -> ModelSpace {
        self.inner.space()
    }

    fn domain(&self) -> &ParameterDomain {
        self.inner.domain()
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.iso.apply_coords(&self.inner.eval(u))
    }

    fn analytic_jet(&self, u: &[f64]) -> Option<Jet> {
        let j = self.inner.analytic_jet(u)?;
        Some(Jet {
            x: self.iso.apply_coords(&j.x),
            d1: j.d1.iter().map(|v| self.iso.apply_vector(v)).collect(),
            d2: j.d2.iter().map(|row| row.iter().map(|v| self.iso.apply_vector(v)).collect()).collect(),
        })
    }

    fn multiplicity_hints(&self) -> Vec<(DVector<f64>, usize)> {
        self.inner.multiplicity_hints().into_iter().map(|(x, k)| (self.iso.apply_coords(&x), k)).collect()
    }

    fn label(&self) -> String {
        format!("isometric image of {}", self.inner.label())
    }
}

/// `f_t(u) = exp_{f(u)}(t X(f(u)))`.
#[derive(Debug, Clone)]
pub struct DeformedImmersion {
    inner: Arc<dyn Immersion>,
    field: Arc<dyn VectorField>,
    t: f64,
}

impl DeformedImmersion {
    pub fn new(inner: Arc<dyn Immersion>, field: Arc<dyn VectorField>, t: f64) -> Self {
        DeformedImmersion { inner, field, t }
    }

    /// `exp_x(w) - x = (C(|w|) - 1) x + S(|w|) / |w| w`, with `C - 1` written as
    /// `-2 sin^2` or `2 sinh^2` of the half angle.
    fn displacement(&self, u: &[f64]) -> DVector<f64> {
        let space = self.inner.space();
        let x = self.inner.eval(u);
        let w = tangent_field_value(&space, self.field.as_ref(), &x) * self.t;
        let b = space.curvature();
        let len = space.norm(&w);
        if b == 0.0 || len == 0.0 {
            return w;
        }
        let k = b.abs().sqrt();
        let a = k * len;
        let (c_minus_one, s_over) = if b > 0.0 {
            (-2.0 * (0.5 * a).sin().powi(2), a.sin() / a)
        } else {
            (2.0 * (0.5 * a).sinh().powi(2), a.sinh() / a)
        };
        x * c_minus_one + w * s_over
    }
}

impl Immersion for DeformedImmersion {
    fn space(&self) -> ModelSpace {
        self.inner.space()
    }

    fn domain(&self) -> &ParameterDomain {
        self.inner.domain()
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        let space = self.inner.space();
        let x = self.inner.eval(u);
        let v = tangent_field_value(&space, self.field.as_ref(), &x) * self.t;
        let tv = TangentVector { base: Point::from_vec_unchecked(x), components: v };
        match space.exp(&tv) {
            Ok(p) => p.into_coords(),
            Err(_) => DVector::from_element(space.ambient_dim(), f64::NAN),
        }
    }

    /// Inner jet plus finite differences of the displacement alone, whose rounding
    /// error is proportional to `t` rather than to the size of the surface.
    fn composite_jet(&self, u: &[f64], second: bool) -> Option<Jet> {
        let inner = jet(self.inner.as_ref(), u, second);
        let disp = fd_jet_of(self.domain().axes(), u, second, FD_REL_STEP, |w| self.displacement(w));
        let add = |a: &DVector<f64>, b: &DVector<f64>| a + b;
        Some(Jet {
            x: add(&inner.x, &disp.x),
            d1: inner.d1.iter().zip(&disp.d1).map(|(a, b)| add(a, b)).collect(),
            d2: inner
                .d2
                .iter()
                .zip(&disp.d2)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| add(a, b)).collect())
                .collect(),
        })
    }

    fn label(&self) -> String {
        format!("deformation of {} at t={}", self.inner.label(), self.t)
    }
}

fn shifted(u: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut v = u.to_vec();
    v[i] += h;
    v
}

/// Central-difference jet with one Richardson step; `rel_step` is the step as a
/// fraction of each axis extent.
pub fn fd_jet(imm: &dyn Immersion, u: &[f64], second: bool, rel_step: f64) -> Jet {
    fd_jet_of(imm.domain().axes(), u, second, rel_step, |w| imm.eval(w))
}

fn fd_jet_of<F: Fn(&[f64]) -> DVector<f64>>(axes: &[Axis], u: &[f64], second: bool, rel_step: f64, eval: F) -> Jet {
    let m = axes.len();
    let x = eval(u);
    let h: Vec<f64> = axes.iter().map(|a| rel_step * a.extent()).collect();
    let f = |i: usize, s: f64| eval(&shifted(u, i, s));
    let rich = |a: DVector<f64>, b: DVector<f64>| (b * 4.0 - a) / 3.0;
    let d1 = (0..m)
        .map(|i| {
            let c = |s: f64| (f(i, s) - f(i, -s)) / (2.0 * s);
            rich(c(h[i]), c(0.5 * h[i]))
        })
        .collect();
    let mut d2 = Vec::new();
    if second {
        d2 = vec![vec![DVector::zeros(x.len()); m]; m];
        for i in 0..m {
            let c = |s: f64| (f(i, s) - &x * 2.0 + f(i, -s)) / (s * s);
            d2[i][i] = rich(c(h[i]), c(0.5 * h[i]));
            for j in (i + 1)..m {
                let mixed = |si: f64, sj: f64| {
                    let e = |a: f64, b: f64| eval(&shifted(&shifted(u, i, a), j, b));
                    (e(si, sj) - e(si, -sj) - e(-si, sj) + e(-si, -sj)) / (4.0 * si * sj)
                };
                let v = rich(mixed(h[i], h[j]), mixed(0.5 * h[i], 0.5 * h[j]));
                d2[i][j] = v.clone();
                d2[j][i] = v;
            }
        }
    }
    Jet { x, d1, d2 }
}

/// Analytic jet when available, finite differences otherwise.
pub fn jet(imm: &dyn Immersion, u: &[f64], second: bool) -> Jet {
    imm.analytic_jet(u).or_else(|| imm.composite_jet(u, second)).unwrap_or_else(|| fd_jet(imm, u, second, FD_REL_STEP))
}

/// Everything an atom needs at one parameter value.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub point: DVector<f64>,
    pub tangents: Vec<DVector<f64>>,
    pub frame: Vec<DVector<f64>>,
    pub metric: DMatrix<f64>,
    /// `sqrt(det g)`.
    pub jacobian: f64,
    pub h: Option<DVector<f64>>,
    pub d2: Vec<Vec<DVector<f64>>>,
}

fn symmetric_eig_range(g: &DMatrix<f64>) -> (f64, f64) {
    match g.nrows() {
        1 => (g[(0, 0)], g[(0, 0)]),
        2 => {
            let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            // product form for the small eigenvalue avoids cancellation
            let big = mean + rad;
            let det = a * d - b * b;
            (if big > 0.0 { det / big } else { mean - rad }, big)
        }
        _ => {
            let e = g.clone().symmetric_eigenvalues();
            (e.min(), e.max())
        }
    }
}

pub fn local_geometry(imm: &dyn Immersion, u: &[f64], with_h: bool) -> Result<LocalGeometry> {
    local_geometry_with(imm, u, with_h, DEGENERACY_TOL)
}

/// As [`local_geometry`] with an explicit degeneracy threshold; refinement near
/// chart poles uses a looser one since cell weights there are tiny anyway.
pub(crate) fn local_geometry_with(
    imm: &dyn Immersion,
    u: &[f64],
    with_h: bool,
    degeneracy: f64,
) -> Result<LocalGeometry> {
    let space = imm.space();
    let j = jet(imm, u, with_h);
    let finite = j.x.iter().chain(j.d1.iter().flat_map(|v| v.iter())).all(|c| c.is_finite());
    if !finite {
        return Err(GeomError::NonFinite(format!("immersion node {u:?}")));
    }
    let m = j.d1.len();
    let metric = DMatrix::from_fn(m, m, |a, b| space.form(&j.d1[a], &j.d1[b]));
    let (lo, _) = symmetric_eig_range(&metric);
    if !(lo > degeneracy * metric.trace()) {
        return Err(GeomError::DegenerateImmersion { params: u.to_vec(), min_eigenvalue: lo });
    }
    let det = if m == 1 { metric[(0, 0)] } else { metric.determinant() };
    let frame = space.gram_schmidt(&j.x, &j.d1)?;
    let h = if with_h {
        let inv = metric
            .clone()
            .try_inverse()
            .ok_or_else(|| GeomError::DegenerateImmersion { params: u.to_vec(), min_eigenvalue: lo })?;
        let mut w = DVector::zeros(j.x.len());
        for a in 0..m {
            for b in 0..m {
                w.axpy(inv[(a, b)], &j.d2[a][b], 1.0);
            }
        }
        let mut w = space.project_tangent_raw(&j.x, &w);
        for e in &frame {
            let c = space.form(&w, e);
            w.axpy(-c, e, 1.0);
        }
        if w.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::NonFinite(format!("mean curvature at node {u:?}")));
        }
        Some(w)
    } else {
        None
    };
    Ok(LocalGeometry { point: j.x, tangents: j.d1, frame, metric, jacobian: det.sqrt(), h, d2: j.d2 })
}

pub fn pullback_metric(imm: &dyn Immersion, u: &[f64]) -> Result<DMatrix<f64>> {
    Ok(local_geometry(imm, u, false)?.metric)
}

/// Mean-curvature vector: the surface Laplacian of the embedding, projected to
/// `T_x N` and stripped of its surface-tangential part.
pub fn mean_curvature(imm: &dyn Immersion, u: &[f64]) -> Result<TangentVector> {
    let g = local_geometry(imm, u, true)?;
    Ok(TangentVector { base: Point::from_vec_unchecked(g.point), components: g.h.expect("requested") })
}

/// Nodes per axis and refinement depth for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub n: usize,
    /// Also sample at `n / 2` so that integrals carry a refinement error estimate.
    pub companion: bool,
}

impl QuadratureSpec {
    pub fn new(n: usize) -> Self {
        QuadratureSpec { n, companion: true }
    }
}

/// Image radius of a parameter cell around the atom at its node, from the jet.
pub(crate) fn cell_extent(geo: &LocalGeometry, space: &ModelSpace, lo: &[f64; 2], hi: &[f64; 2], node: &[f64]) -> f64 {
    let m = geo.tangents.len();
    let reach = |i: usize| (node[i] - lo[i]).abs().max((hi[i] - node[i]).abs());
    let mut first = 0.0;
    for i in 0..m {
        first += (space.norm(&geo.tangents[i]) * reach(i)).powi(2);
    }
    // covariant second derivatives (tangent parts of d2) keep the bound isometry invariant
    let mut second = 0.0;
    if !geo.d2.is_empty() {
        for i in 0..m {
            for j in 0..m {
                let acc = space.project_tangent_raw(&geo.point, &geo.d2[i][j]);
                second += 0.5 * space.norm(&acc) * reach(i) * reach(j);
            }
        }
    }
    EXTENT_SAFETY * (first.sqrt() + second)
}

/// Evaluates the interior atom for the cell `[lo, hi]` at parameter `node`.
pub(crate) fn make_atom(
    imm: &dyn Immersion,
    source: usize,
    node: &[f64],
    lo: [f64; 2],
    hi: [f64; 2],
    quad_weight: f64,
    degeneracy: f64,
) -> Result<Atom> {
    let space = imm.space();
    let geo = local_geometry_with(imm, node, true, degeneracy)?;
    let extent = cell_extent(&geo, &space, &lo, &hi, node);
    let mut n2 = [0.0; 2];
    n2[..node.len()].copy_from_slice(node);
    Ok(Atom {
        weight: quad_weight * geo.jacobian,
        h: geo.h.expect("requested"),
        frame: geo.frame,
        point: geo.point,
        density: 1.0,
        extent,
        cell: Some(Cell { source, lo, hi, node: n2, jacobian: geo.jacobian }),
    })
}

/// Evaluates a boundary atom on `edge` at the free coordinate `t` with cell `[lo, hi]`.
pub(crate) fn make_boundary_atom(
    imm: &dyn Immersion,
    source: usize,
    edge: Edge,
    t: f64,
    lo: f64,
    hi: f64,
    quad_weight: f64,
) -> Result<BoundaryAtom> {
    let space = imm.space();
    let axes = imm.domain().axes();
    let fixed = if edge.hi { axes[edge.axis].hi } else { axes[edge.axis].lo };
    let sign = if edge.hi { 1.0 } else { -1.0 };
    let mut u = vec![0.0; axes.len()];
    u[edge.axis] = fixed;
    if axes.len() == 1 {
        let geo = local_geometry(imm, &u, false)?;
        let nu = &geo.frame[0] * sign;
        return Ok(BoundaryAtom { point: geo.point, conormal: nu, weight: 1.0, extent: 0.0, cell: None });
    }
    let free = 1 - edge.axis;
    u[free] = t;
    let geo = local_geometry(imm, &u, false)?;
    let along = &geo.tangents[free];
    let len = space.norm(along);
    let dir = along / len;
    let mut nu = geo.tangents[edge.axis].clone();
    let c = space.form(&nu, &dir);
    nu -= &dir * c;
    let nn = space.norm(&nu);
    if !(nn > 0.0) {
        return Err(GeomError::DegenerateImmersion { params: u.clone(), min_eigenvalue: 0.0 });
    }
    nu *= sign / nn;
    let extent = EXTENT_SAFETY * len * (t - lo).abs().max((hi - t).abs());
    Ok(BoundaryAtom {
        point: geo.point,
        conormal: nu,
        weight: quad_weight * len,
        extent,
        cell: Some(BoundaryCell { source, edge, lo, hi }),
    })
}

/// A quadrature node with its cell's lower and upper corners and its weight.
type NodeCell = (Vec<f64>, [f64; 2], [f64; 2], f64);

fn sample_atoms(imm: &dyn Immersion, source: usize, n: usize) -> Result<(Vec<Atom>, Vec<BoundaryAtom>)> {
    let axes = imm.domain().axes();
    let rules: Vec<Rule1d> = axes.iter().map(|a| a.rule(n)).collect();
    let mut nodes: Vec<NodeCell> = Vec::new();
    if rules.len() == 1 {
        for i in 0..rules[0].len() {
            let (l, h) = rules[0].cell(i);
            nodes.push((vec![rules[0].nodes[i]], [l, 0.0], [h, 0.0], rules[0].weights[i]));
        }
    } else {
        for i in 0..rules[0].len() {
            for j in 0..rules[1].len() {
                let (l0, h0) = rules[0].cell(i);
                let (l1, h1) = rules[1].cell(j);
                nodes.push((
                    vec![rules[0].nodes[i], rules[1].nodes[j]],
                    [l0, l1],
                    [h0, h1],
                    rules[0].weights[i] * rules[1].weights[j],
                ));
            }
        }
    }
    let atoms = nodes
        .par_iter()
        .map(|(u, lo, hi, w)| make_atom(imm, source, u, *lo, *hi, *w, DEGENERACY_TOL))
        .collect::<Result<Vec<_>>>()?;
    let mut boundary = Vec::new();
    for edge in imm.domain().boundary_edges() {
        if rules.len() == 1 {
            boundary.push(make_boundary_atom(imm, source, edge, 0.0, 0.0, 0.0, 1.0)?);
            continue;
        }
        let r = &rules[1 - edge.axis];
        let edge_atoms = (0..r.len())
            .into_par_iter()
            .map(|i| {
                let (l, h) = r.cell(i);
                make_boundary_atom(imm, source, edge, r.nodes[i], l, h, r.weights[i])
            })
            .collect::<Result<Vec<_>>>()?;
        boundary.extend(edge_atoms);
    }
    Ok((atoms, boundary))
}

fn sample_union_at(
    sources: &[Arc<dyn Immersion>],
    n: usize,
    hints: &[(DVector<f64>, usize)],
) -> Result<SampledVarifold> {
    let first = sources.first().ok_or_else(|| GeomError::Input("no immersions to sample".into()))?;
    let space = first.space();
    let m = first.domain().dim();
    let mut atoms = Vec::new();
    let mut boundary = Vec::new();
    for (k, s) in sources.iter().enumerate() {
        if s.space() != space || s.domain().dim() != m {
            return Err(GeomError::Input("union members must share the space and dimension".into()));
        }
        let (a, b) = sample_atoms(s.as_ref(), k, n)?;
        atoms.extend(a);
        boundary.extend(b);
    }
    let provenance =
        Provenance { sources: sources.iter().map(|s| s.label()).collect(), nodes_per_axis: n, dropped_atoms: 0 };
    SampledVarifold::from_parts(space, m, atoms, boundary, sources.to_vec(), hints.to_vec(), provenance)
}

/// Samples the union of `sources` (densities add) with a tensor rule of `spec.n` nodes per axis.
pub fn sample_union(sources: Vec<Arc<dyn Immersion>>, spec: &QuadratureSpec) -> Result<SampledVarifold> {
    if spec.n < 2 {
        return Err(GeomError::Input("need at least 2 nodes per axis".into()));
    }
    let hints: Vec<_> = sources.iter().flat_map(|s| s.multiplicity_hints()).collect();
    let mut v = sample_union_at(&sources, spec.n, &hints)?;
    if spec.companion {
        let c = sample_union_at(&sources, (spec.n / 2).max(2), &hints)?;
        v.set_companion(c);
    }
    Ok(v)
}

pub fn sample_varifold(imm: Arc<dyn Immersion>, spec: &QuadratureSpec) -> Result<SampledVarifold> {
    sample_union(vec![imm], spec)
}

/// Area of the image of the parameter cell `[lo, hi]` by a tensor Gauss rule on the
/// cell itself, so that it is accurate cell by cell (quadrature weights are only
/// accurate in aggregate).
pub(crate) fn cell_area(
    imm: &dyn Immersion,
    lo: &[f64; 2],
    hi: &[f64; 2],
    points: usize,
    degeneracy: f64,
) -> Result<f64> {
    let m = imm.domain().dim();
    let rules: Vec<Rule1d> = (0..m).map(|k| quadrature::gauss_legendre(points, lo[k], hi[k])).collect();
    let mut s = 0.0;
    if m == 1 {
        for (x, w) in rules[0].nodes.iter().zip(&rules[0].weights) {
            s += w * local_geometry_with(imm, &[*x], false, degeneracy)?.jacobian;
        }
    } else {
        for (x, wx) in rules[0].nodes.iter().zip(&rules[0].weights) {
            for (y, wy) in rules[1].nodes.iter().zip(&rules[1].weights) {
                s += wx * wy * local_geometry_with(imm, &[*x, *y], false, degeneracy)?.jacobian;
            }
        }
    }
    Ok(s)
}

fn quadrature_nodes(imm: &dyn Immersion, n: usize) -> Vec<(Vec<f64>, f64)> {
    let rules: Vec<Rule1d> = imm.domain().axes().iter().map(|a| a.rule(n)).collect();
    let mut jobs = Vec::new();
    if rules.len() == 1 {
        for i in 0..rules[0].len() {
            jobs.push((vec![rules[0].nodes[i]], rules[0].weights[i]));
        }
    } else {
        for i in 0..rules[0].len() {
            for j in 0..rules[1].len() {
                jobs.push((vec![rules[0].nodes[i], rules[1].nodes[j]], rules[0].weights[i] * rules[1].weights[j]));
            }
        }
    }
    jobs
}

/// `sum w sqrt(det g)` with first derivatives only.
pub fn quadrature_area(imm: &dyn Immersion, n: usize) -> Result<f64> {
    let parts = quadrature_nodes(imm, n)
        .par_iter()
        .map(|(u, w)| local_geometry(imm, u, false).map(|g| w * g.jacobian))
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// `area(a) - area(b)` for immersions of the same domain, differenced node by node
/// so the rounding scales with the difference rather than with the areas.
pub fn quadrature_area_difference(a: &dyn Immersion, b: &dyn Immersion, n: usize) -> Result<f64> {
    if a.domain() != b.domain() {
        return Err(GeomError::Input("area difference needs a common parameter domain".into()));
    }
    let parts = quadrature_nodes(a, n)
        .par_iter()
        .map(|(u, w)| Ok(w * (local_geometry(a, u, false)?.jacobian - local_geometry(b, u, false)?.jacobian)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Number of preimage clusters of `p` (within `tol`) across `sources`.
///
/// Candidates from a coarse grid are polished by Levenberg-Marquardt on the
/// ambient residual; two preimages are merged when the parameter segment
/// between them stays within `tol` of `p` (this folds chart poles).
pub fn multiplicity_at(sources: &[Arc<dyn Immersion>], p: &Point, tol: f64) -> Result<usize> {
    let mut total = 0;
    for s in sources {
        total += preimage_clusters(s.as_ref(), p, tol)?;
    }
    Ok(total)
}

fn wrap_delta(axis: &Axis, d: f64) -> f64 {
    match axis.kind {
        AxisKind::Periodic => {
            let l = axis.extent();
            d - l * (d / l).round()
        }
        AxisKind::Bounded { .. } => d,
    }
}

fn clamp_param(axes: &[Axis], u: &mut [f64]) {
    for (a, x) in axes.iter().zip(u.iter_mut()) {
        if let AxisKind::Bounded { .. } = a.kind {
            *x = x.clamp(a.lo, a.hi);
        }
    }
}

fn preimage_clusters(imm: &dyn Immersion, p: &Point, tol: f64) -> Result<usize> {
    let space = imm.space();
    let axes = imm.domain().axes().to_vec();
    let m = axes.len();
    let grid = 48usize;
    let coords = |i: usize, a: &Axis| a.lo + a.extent() * (i as f64 + 0.5) / grid as f64;
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    let mut dists: Vec<(f64, Vec<f64>)> = Vec::new();
    let count = grid.pow(m as u32);
    for idx in 0..count {
        let u: Vec<f64> = (0..m).map(|k| coords((idx / grid.pow(k as u32)) % grid, &axes[k])).collect();
        let d = space.distance_coords(p.coords(), &imm.eval(&u))?;
        dists.push((d, u));
    }
    // seeds: grid nodes closer than a coarse cell diameter
    let cell: f64 = {
        let mut c: f64 = 0.0;
        for (_, u) in dists.iter().step_by((count / 64).max(1)) {
            let g = local_geometry(imm, u, false);
            if let Ok(g) = g {
                let s: f64 =
                    (0..m).map(|k| (space.norm(&g.tangents[k]) * axes[k].extent() / grid as f64).powi(2)).sum();
                c = c.max(s.sqrt());
            }
        }
        c
    };
    for (d, u) in &dists {
        if *d <= tol + 2.0 * cell {
            seeds.push(u.clone());
        }
    }
    let mut found: Vec<Vec<f64>> = Vec::new();
    for seed in seeds {
        let u = polish(imm, p, seed);
        let d = space.distance_coords(p.coords(), &imm.eval(&u))?;
        if d <= tol {
            found.push(u);
        }
    }
    // union-find over found preimages
    let mut parent: Vec<usize> = (0..found.len()).collect();
    fn root(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..found.len() {
        for j in (i + 1)..found.len() {
            if root(&mut parent, i) == root(&mut parent, j) {
                continue;
            }
            let delta: Vec<f64> = (0..m).map(|k| wrap_delta(&axes[k], found[j][k] - found[i][k])).collect();
            let connected = (0..=16).all(|s| {
                let t = s as f64 / 16.0;
                let mut u: Vec<f64> = (0..m).map(|k| found[i][k] + t * delta[k]).collect();
                clamp_param(&axes, &mut u);
                space.distance_coords(p.coords(), &imm.eval(&u)).map(|d| d <= tol).unwrap_or(false)
            });
            if connected {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut roots: Vec<usize> = (0..found.len()).map(|i| root(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots.len())
}

fn polish(imm: &dyn Immersion, p: &Point, mut u: Vec<f64>) -> Vec<f64> {
    let axes = imm.domain().axes().to_vec();
    let m = u.len();
    let target = p.coords();
    let mut lambda = 1e-3;
    let residual = |u: &[f64]| (imm.eval(u) - target).norm_squared();
    let mut f = residual(&u);
    for _ in 0..60 {
        let j = jet(imm, &u, false);
        let r = &j.x - target;
        let jt_j = DMatrix::from_fn(m, m, |a, b| j.d1[a].dot(&j.d1[b]));
        let g = DVector::from_fn(m, |a, _| j.d1[a].dot(&r));
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jt_j.clone();
            for k in 0..m {
                a[(k, k)] += lambda * (1.0 + jt_j[(k, k)]);
            }
            let Some(step) = a.lu().solve(&g) else { break };
            let mut cand: Vec<f64> = (0..m).map(|k| u[k] - step[k]).collect();
            clamp_param(&axes, &mut cand);
            let fc = residual(&cand);
            if fc < f {
                u = cand;
                f = fc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || f < 1e-28 {
            break;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s3() -> ModelSpace {
        ModelSpace::new(3, 1.0).unwrap()
    }

    #[test]
    fn domains() {
        let s = GeodesicSphere::new(ModelSpace::euclidean(3), 1.0).unwrap();
        assert!(s.domain().is_closed());
        let d = GeodesicDisk::new(ModelSpace::euclidean(3), 1.0).unwrap();
        assert_eq!(d.domain().boundary_edges(), vec![Edge { axis: 0, hi: true }]);
        let f = FlatPatch::unit_square(ModelSpace::euclidean(3)).unwrap();
        assert_eq!(f.domain().boundary_edges().len(), 4);
        assert!(ParameterDomain::new(vec![]).is_err());
        assert!(ParameterDomain::new(vec![Axis::periodic(1.0, 1.0)]).is_err());
    }

    #[test]
    fn flat_patch_metric_is_identity() {
        let f = FlatPatch::unit_square(ModelSpace::euclidean(3)).unwrap();
        assert_eq!(pullback_metric(&f, &[0.3, 0.7]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn clifford_torus_metric_and_minimality() {
        let t = CliffordTorus::new(s3()).unwrap();
        let g = pullback_metric(&t, &[0.4, 1.9]).unwrap();
        assert!((g - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        let h = mean_curvature(&t, &[0.4, 1.9]).unwrap();
        assert!(h.components.norm() < 1e-12);
    }

    #[test]
    fn round_sphere_metric_and_curvature() {
        let r = 1.7;
        let s = GeodesicSphere::new(ModelSpace::euclidean(3), r).unwrap();
        let th = 0.8f64;
        let g = pullback_metric(&s, &[th, 2.0]).unwrap();
        assert!((g[(0, 0)] - r * r).abs() < 1e-13);
        assert!(g[(0, 1)].abs() < 1e-13);
        assert!((g[(1, 1)] - r * r * th.sin().powi(2)).abs() < 1e-13);
        let x = s.eval(&[th, 2.0]);
        let h = mean_curvature(&s, &[th, 2.0]).unwrap().components;
        assert!((h.norm() - 2.0 / r).abs() < 1e-12);
        assert!(h.dot(&x) < 0.0, "points inward");
    }

    #[test]
    fn geodesic_sphere_curvature_in_s3() {
        let rho = 0.6f64;
        let s = GeodesicSphere::new(s3(), rho).unwrap();
        let h = mean_curvature(&s, &[1.1, 0.3]).unwrap().components;
        assert!((h.norm() - 2.0 / rho.tan()).abs() < 1e-12);
        let hy = GeodesicSphere::new(ModelSpace::new(3, -1.0).unwrap(), rho).unwrap();
        let hh = mean_curvature(&hy, &[1.1, 0.3]).unwrap().components;
        let sp = ModelSpace::new(3, -1.0).unwrap();
        assert!((sp.norm(&hh) - 2.0 / rho.tanh()).abs() < 1e-12);
    }

    #[test]
    fn fd_jet_matches_analytic_at_second_order() {
        let s = GeodesicSphere::new(s3(), 0.9).unwrap();
        let u = [0.7, 2.2];
        let exact = s.analytic_jet(&u).unwrap();
        let err = |h: f64| {
            // plain central differences without Richardson to expose O(h^2)
            let d = (s.eval(&[u[0] + h, u[1]]) - s.eval(&[u[0] - h, u[1]])) / (2.0 * h);
            (d - &exact.d1[0]).norm()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
        let fd = fd_jet(&s, &u, true, FD_REL_STEP);
        assert!((&fd.d1[1] - &exact.d1[1]).amax() < 1e-10);
        assert!((&fd.d2[0][1] - &exact.d2[0][1]).amax() < 1e-6);
    }

    #[test]
    fn degenerate_immersion_detected() {
        #[derive(Debug)]
        struct Collapsed(ParameterDomain);
        impl Immersion for Collapsed {
            fn space(&self) -> ModelSpace {
                ModelSpace::euclidean(3)
            }
            fn domain(&self) -> &ParameterDomain {
                &self.0
            }
            fn eval(&self, u: &[f64]) -> DVector<f64> {
                DVector::from_vec(vec![u[0] + u[1], 0.0, 0.0])
            }
            fn label(&self) -> String {
                "collapsed".into()
            }
        }
        let c = Collapsed(ParameterDomain::new(vec![Axis::periodic(0.0, 1.0), Axis::periodic(0.0, 1.0)]).unwrap());
        assert!(matches!(pullback_metric(&c, &[0.2, 0.3]), Err(GeomError::DegenerateImmersion { .. })));
    }

    #[test]
    fn multiplicity_counts() {
        let e3 = ModelSpace::euclidean(3);
        let sphere: Arc<dyn Immersion> = Arc::new(GeodesicSphere::new(e3, 1.0).unwrap());
        let on = e3.point(DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(multiplicity_at(std::slice::from_ref(&sphere), &on, 1e-6).unwrap(), 1);
        let side = e3.point(DVector::from_vec(vec![0.6, 0.0, 0.8])).unwrap();
        assert_eq!(multiplicity_at(std::slice::from_ref(&sphere), &side, 1e-6).unwrap(), 1);
        let off = e3.point(DVector::from_vec(vec![0.0, 0.0, 1.5])).unwrap();
        assert_eq!(multiplicity_at(&[sphere], &off, 1e-6).unwrap(), 0);
    }
}
