//! Finite weighted point-plane measures.
//!
//! A [`SampledVarifold`] approximates `V` (atoms with tangent planes), `||V||`
//! (their weights) and the singular part of `||dV||` (boundary atoms with
//! conormals). Atoms that come from an immersion remember their parameter cell,
//! so ball masses can re-sample cells cut by the ball's boundary sphere.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::unit_ball_volume;
use crate::error::{GeomError, Result};
use crate::immersion::{self, Edge, Immersion, VectorField};
use crate::model_space::{Isometry, ModelSpace, Point, TangentPlane};

/// Parameter cell `[lo, hi]` of an interior atom and the node it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub source: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub node: [f64; 2],
    pub jacobian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCell {
    pub source: usize,
    pub edge: Edge,
    pub lo: f64,
    pub hi: f64,
}

/// One weighted point-plane sample of `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: DVector<f64>,
    /// Form-orthonormal frame of the tangent plane.
    pub frame: Vec<DVector<f64>>,
    pub weight: f64,
    /// Mean-curvature vector.
    pub h: DVector<f64>,
    /// Multiplicity carried by this atom.
    pub density: f64,
    /// Upper bound for the distance from `point` to any point of its cell's image.
    pub extent: f64,
    pub cell: Option<Cell>,
}

impl Atom {
    pub fn point(&self) -> Point {
        Point::from_vec_unchecked(self.point.clone())
    }

    pub fn plane(&self) -> TangentPlane {
        TangentPlane::from_parts_unchecked(self.point(), self.frame.clone())
    }
}

/// A sample of the singular part of the first variation: an outward conormal with a length element.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryAtom {
    pub point: DVector<f64>,
    pub conormal: DVector<f64>,
    pub weight: f64,
    pub extent: f64,
    pub cell: Option<BoundaryCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub nodes_per_axis: usize,
    pub dropped_atoms: usize,
}

#[derive(Debug, Clone)]
pub struct SampledVarifold {
    space: ModelSpace,
    m: usize,
    atoms: Vec<Atom>,
    boundary: Vec<BoundaryAtom>,
    sources: Vec<Arc<dyn Immersion>>,
    hints: Vec<(DVector<f64>, usize)>,
    provenance: Provenance,
    companion: Option<Box<SampledVarifold>>,
    /// Per-atom cell areas used by ball queries, computed on first use.
    cell_masses: OnceLock<Vec<f64>>,
    diameter: OnceLock<DiameterEstimate>,
}

/// A value with an error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Est {
    pub value: f64,
    pub err: f64,
}

impl Est {
    pub fn exact(value: f64) -> Self {
        Est { value, err: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Est { value: self.value * c, err: self.err * c.abs() }
    }
}

impl std::ops::Add for Est {
    type Output = Est;
    fn add(self, o: Est) -> Est {
        Est { value: self.value + o.value, err: self.err + o.err }
    }
}

impl std::ops::Sub for Est {
    type Output = Est;
    fn sub(self, o: Est) -> Est {
        Est { value: self.value - o.value, err: self.err + o.err }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BallMode {
    Open,
    Closed,
}

/// Boundary-cell refinement controls for ball queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_depth: u32,
    /// Stop once the mass of still-cut cells is below `eps` times the ball mass.
    pub eps: f64,
    pub max_evaluations: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { max_depth: 8, eps: 1e-4, max_evaluations: 4_000_000 }
    }
}

/// Gauss points per axis for the area of a base cell. Refined sub-cells use the
/// midpoint rule, which is exact for the linear vanishing of the area element at poles.
const BASE_CELL_RULE: usize = 4;

/// Degeneracy threshold for sub-cells; pole-adjacent sub-cells are legitimately thin.
const REFINE_DEGENERACY: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiameterEstimate {
    /// Largest pairwise distance between sample points (a lower bound).
    pub value: f64,
    /// The true support diameter is at most `value + gap`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    /// Ratio errors propagated through the weighted fit to the intercept.
    pub value_error: f64,
    pub radii: Vec<f64>,
    /// `||V||(closed B_r) / (alpha(m) r^m)` for each radius.
    pub ratios: Vec<f64>,
    pub ratio_errors: Vec<f64>,
    /// Unweighted RMS misfit of the quadratic model.
    pub residual: f64,
    pub slope: f64,
}

/// Atoms of `V` restricted to a ball, with re-sampled pieces of cut cells.
#[derive(Debug, Clone)]
pub struct BallSample<'a> {
    pub varifold: &'a SampledVarifold,
    weights: &'a [f64],
    pub center: DVector<f64>,
    pub radius: f64,
    pub mode: BallMode,
    base_inside: Vec<usize>,
    refined: Vec<Atom>,
    unresolved: Vec<Atom>,
    boundary_inside: Vec<usize>,
    boundary_refined: Vec<BoundaryAtom>,
    boundary_unresolved: Vec<BoundaryAtom>,
    pub evaluations: usize,
    pub unresolved_mass: f64,
    pub max_depth_reached: u32,
    companion: Option<Box<BallSample<'a>>>,
}

impl<'a> BallSample<'a> {
    fn raw_integral<K: Fn(&Atom) -> f64>(&self, k: &K) -> (f64, f64) {
        let mut v: f64 = self.base_inside.iter().map(|&i| k(&self.varifold.atoms[i]) * self.weights[i]).sum();
        v += self.refined.iter().map(|a| k(a) * a.weight).sum::<f64>();
        let e = self.unresolved.iter().map(|a| 0.5 * k(a).abs() * a.weight).sum();
        (v, e)
    }

    /// `sum k(atom) w` over the ball; the error adds the half-weight of
    /// unresolved cut cells and the gap to the companion (coarser) sample.
    pub fn integrate<K: Fn(&Atom) -> f64>(&self, k: K) -> Est {
        let (v, mut e) = self.raw_integral(&k);
        if let Some(c) = &self.companion {
            let (vc, _) = c.raw_integral(&k);
            e += (v - vc).abs();
        }
        Est { value: v, err: e }
    }

    fn raw_boundary<K: Fn(&BoundaryAtom) -> f64>(&self, k: &K) -> (f64, f64) {
        let mut v: f64 = self
            .boundary_inside
            .iter()
            .map(|&i| {
                let a = &self.varifold.boundary[i];
                k(a) * a.weight
            })
            .sum();
        v += self.boundary_refined.iter().map(|a| k(a) * a.weight).sum::<f64>();
        let e = self.boundary_unresolved.iter().map(|a| 0.5 * k(a).abs() * a.weight).sum();
        (v, e)
    }

    /// Integral against the singular part of the first variation restricted to the ball.
    pub fn integrate_boundary<K: Fn(&BoundaryAtom) -> f64>(&self, k: K) -> Est {
        let (v, mut e) = self.raw_boundary(&k);
        if let Some(c) = &self.companion {
            let (vc, _) = c.raw_boundary(&k);
            e += (v - vc).abs();
        }
        Est { value: v, err: e }
    }

    pub fn mass(&self) -> Est {
        self.integrate(|_| 1.0)
    }

    pub fn atom_count(&self) -> usize {
        self.base_inside.len() + self.refined.len()
    }
}

enum Side {
    Inside,
    Outside,
    Cut,
}

fn classify(d: f64, extent: f64, r: f64) -> Side {
    if d + extent < r {
        Side::Inside
    } else if d - extent > r {
        Side::Outside
    } else {
        Side::Cut
    }
}

fn centre_inside(d: f64, r: f64, mode: BallMode) -> bool {
    match mode {
        BallMode::Open => d < r,
        BallMode::Closed => d <= r,
    }
}

impl SampledVarifold {
    /// Builds a varifold from atoms; zero-weight atoms are dropped and counted.
    pub fn new(space: ModelSpace, m: usize, atoms: Vec<Atom>, boundary: Vec<BoundaryAtom>) -> Result<Self> {
        let prov = Provenance { sources: Vec::new(), nodes_per_axis: 0, dropped_atoms: 0 };
        let atoms = atoms
            .into_iter()
            .map(|mut a| {
                a.cell = None;
                a
            })
            .collect();
        let boundary = boundary
            .into_iter()
            .map(|mut b| {
                b.cell = None;
                b
            })
            .collect();
        Self::from_parts(space, m, atoms, boundary, Vec::new(), Vec::new(), prov)
    }

    pub(crate) fn from_parts(
        space: ModelSpace,
        m: usize,
        atoms: Vec<Atom>,
        boundary: Vec<BoundaryAtom>,
        sources: Vec<Arc<dyn Immersion>>,
        hints: Vec<(DVector<f64>, usize)>,
        mut provenance: Provenance,
    ) -> Result<Self> {
        if m == 0 || m > space.dim() {
            return Err(GeomError::Input(format!("varifold dimension {m} in a {}-dimensional space", space.dim())));
        }
        let d = space.ambient_dim();
        let before = atoms.len();
        let mut kept = Vec::with_capacity(before);
        for (i, a) in atoms.into_iter().enumerate() {
            if a.point.len() != d || a.h.len() != d || a.frame.len() != m || a.frame.iter().any(|e| e.len() != d) {
                return Err(GeomError::Input(format!("atom {i} has inconsistent dimensions")));
            }
            let finite = a.weight.is_finite()
                && a.point.iter().chain(a.h.iter()).all(|c| c.is_finite())
                && a.frame.iter().all(|e| e.iter().all(|c| c.is_finite()));
            if !finite {
                return Err(GeomError::NonFinite(format!("atom {i}")));
            }
            if a.weight < 0.0 {
                return Err(GeomError::Input(format!("atom {i} has negative weight {}", a.weight)));
            }
            if a.weight > 0.0 {
                kept.push(a);
            }
        }
        provenance.dropped_atoms += before - kept.len();
        for (i, b) in boundary.iter().enumerate() {
            if b.point.len() != d || b.conormal.len() != d {
                return Err(GeomError::Input(format!("boundary atom {i} has inconsistent dimensions")));
            }
            if !(b.weight.is_finite() && b.weight >= 0.0) {
                return Err(GeomError::Input(format!("boundary atom {i} has invalid weight")));
            }
        }
        Ok(SampledVarifold {
            space,
            m,
            atoms: kept,
            boundary,
            sources,
            hints,
            provenance,
            companion: None,
            cell_masses: OnceLock::new(),
            diameter: OnceLock::new(),
        })
    }

    pub(crate) fn set_companion(&mut self, c: SampledVarifold) {
        self.companion = Some(Box::new(c));
    }

    pub fn companion(&self) -> Option<&SampledVarifold> {
        self.companion.as_deref()
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn boundary(&self) -> &[BoundaryAtom] {
        &self.boundary
    }

    pub fn sources(&self) -> &[Arc<dyn Immersion>] {
        &self.sources
    }

    pub fn multiplicity_hints(&self) -> &[(DVector<f64>, usize)] {
        &self.hints
    }

    /// Records points of known multiplicity, e.g. the contact point of tangent sources.
    pub fn with_multiplicity_hints(mut self, hints: Vec<(DVector<f64>, usize)>) -> Self {
        if let Some(c) = self.companion.take() {
            self.companion = Some(Box::new((*c).with_multiplicity_hints(hints.clone())));
        }
        self.hints.extend(hints);
        self
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Sum over atoms with the companion gap as error.
    pub fn integrate_est<K: Fn(&Atom) -> f64 + Sync>(&self, k: K) -> Est {
        let v: f64 = self.atoms.iter().map(|a| k(a) * a.weight).sum();
        let err = self.companion.as_ref().map_or(0.0, |c| {
            let vc: f64 = c.atoms.iter().map(|a| k(a) * a.weight).sum();
            (v - vc).abs()
        });
        Est { value: v, err }
    }

    pub fn integrate_boundary_est<K: Fn(&BoundaryAtom) -> f64>(&self, k: K) -> Est {
        let v: f64 = self.boundary.iter().map(|a| k(a) * a.weight).sum();
        let err = self.companion.as_ref().map_or(0.0, |c| {
            let vc: f64 = c.boundary.iter().map(|a| k(a) * a.weight).sum();
            (v - vc).abs()
        });
        Est { value: v, err }
    }

    pub fn area(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary.iter().map(|a| a.weight).sum()
    }

    /// `(1/4) int |H|^2 d||V||`.
    pub fn willmore_energy(&self) -> f64 {
        0.25 * self.atoms.iter().map(|a| self.space.form(&a.h, &a.h) * a.weight).sum::<f64>()
    }

    /// `int |H| d||V||`.
    pub fn total_mean_curvature(&self) -> f64 {
        self.atoms.iter().map(|a| self.space.norm(&a.h) * a.weight).sum()
    }

    /// `int |H| d||V|| + ||dV||_sing(N)`, the bound used for `||dV||(N)`.
    pub fn total_variation_bound(&self) -> f64 {
        self.total_mean_curvature() + self.boundary_length()
    }

    /// `int phi d||V||`; fails on the first atom where `phi` is not finite.
    pub fn integrate_weight<F: Fn(&DVector<f64>) -> f64>(&self, phi: F) -> Result<f64> {
        let mut s = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            let v = phi(&a.point);
            if !v.is_finite() {
                return Err(GeomError::NonFinite(format!("integrand at atom {i}")));
            }
            s += v * a.weight;
        }
        Ok(s)
    }

    /// `int k(x, T) dV(x, T)` with `T` given by its frame.
    pub fn integrate_varifold<F: Fn(&DVector<f64>, &[DVector<f64>]) -> f64>(&self, k: F) -> Result<f64> {
        let mut s = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            let v = k(&a.point, &a.frame);
            if !v.is_finite() {
                return Err(GeomError::NonFinite(format!("integrand at atom {i}")));
            }
            s += v * a.weight;
        }
        Ok(s)
    }

    /// `-int g(X, H) d||V|| + int g(X, nu) d||dV||_sing`.
    pub fn first_variation_analytic(&self, field: &dyn VectorField) -> f64 {
        let sp = &self.space;
        // collected first so the summation order is fixed
        let parts: Vec<f64> = self
            .atoms
            .par_iter()
            .map(|a| sp.form(&immersion::tangent_field_value(sp, field, &a.point), &a.h) * a.weight)
            .collect();
        let interior: f64 = parts.iter().sum();
        let bdry: f64 = self
            .boundary
            .iter()
            .map(|b| sp.form(&immersion::tangent_field_value(sp, field, &b.point), &b.conormal) * b.weight)
            .sum();
        bdry - interior
    }

    /// Largest pairwise distance between sample points (computed once).
    pub fn extrinsic_diameter(&self) -> DiameterEstimate {
        *self.diameter.get_or_init(|| self.diameter_scan())
    }

    fn diameter_scan(&self) -> DiameterEstimate {
        let pts: Vec<&DVector<f64>> =
            self.atoms.iter().map(|a| &a.point).chain(self.boundary.iter().map(|b| &b.point)).collect();
        let gap = 2.0 * self.atoms.iter().map(|a| a.extent).fold(0.0, f64::max);
        if pts.len() < 2 {
            return DiameterEstimate { value: 0.0, gap };
        }
        let value = (0..pts.len())
            .into_par_iter()
            .map(|i| {
                let mut best: f64 = 0.0;
                for q in &pts[i + 1..] {
                    if let Ok(d) = self.space.distance_coords(pts[i], q) {
                        best = best.max(d);
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
        DiameterEstimate { value, gap }
    }

    /// Largest distance from `p` to a sample point, plus the mesh gap.
    pub fn support_radius(&self, p: &Point) -> Result<f64> {
        let mut r: f64 = 0.0;
        for a in &self.atoms {
            r = r.max(self.space.distance_coords(p.coords(), &a.point)? + a.extent);
        }
        for b in &self.boundary {
            r = r.max(self.space.distance_coords(p.coords(), &b.point)? + b.extent);
        }
        Ok(r)
    }

    /// The support radius about `p` as an estimate: the farthest sample point, with
    /// the cell extents as error (the true radius lies in `[value, value + err]`).
    pub fn support_radius_estimate(&self, p: &Point) -> Result<Est> {
        let mut lo: f64 = 0.0;
        for a in &self.atoms {
            lo = lo.max(self.space.distance_coords(p.coords(), &a.point)?);
        }
        for b in &self.boundary {
            lo = lo.max(self.space.distance_coords(p.coords(), &b.point)?);
        }
        let hi = self.support_radius(p)?;
        Ok(Est { value: lo, err: hi - lo })
    }

    /// Distance from `p` to the nearest boundary sample.
    pub fn distance_to_boundary(&self, p: &Point) -> Result<f64> {
        let mut r = f64::INFINITY;
        for b in &self.boundary {
            r = r.min(self.space.distance_coords(p.coords(), &b.point)?);
        }
        Ok(r)
    }

    /// Diameter of a typical cell image (largest over atoms).
    pub fn mesh_size(&self) -> f64 {
        self.atoms.iter().map(|a| a.extent).fold(0.0, f64::max)
    }

    pub fn mass_in_ball(&self, p: &Point, r: f64, mode: BallMode) -> Result<Est> {
        Ok(self.ball(p, r, mode, &RefineOptions::default())?.mass())
    }

    /// Restricts the sample to the ball of radius `r` about `p`, re-sampling cut cells.
    pub fn ball(&self, p: &Point, r: f64, mode: BallMode, opts: &RefineOptions) -> Result<BallSample<'_>> {
        if !(r > 0.0) {
            return Err(GeomError::Domain(format!("ball radius must be positive, got {r}")));
        }
        let mut s = self.ball_single(p, r, mode, opts)?;
        if let Some(c) = &self.companion {
            s.companion = Some(Box::new(c.ball_single(p, r, mode, opts)?));
        }
        Ok(s)
    }

    fn ball_single(&self, p: &Point, r: f64, mode: BallMode, opts: &RefineOptions) -> Result<BallSample<'_>> {
        let sp = self.space;
        let pc = p.coords();
        let weights = self.ball_weights()?;
        let dists: Vec<f64> = self.atoms.par_iter().map(|a| sp.distance_coords(pc, &a.point)).collect::<Result<_>>()?;
        let mut base_inside = Vec::new();
        let mut cut: Vec<Atom> = Vec::new();
        let mut unresolved = Vec::new();
        let mut refined = Vec::new();
        let mut inside_mass = 0.0;
        for (i, (a, &d)) in self.atoms.iter().zip(&dists).enumerate() {
            match classify(d, a.extent, r) {
                Side::Inside => {
                    base_inside.push(i);
                    inside_mass += weights[i];
                }
                Side::Outside => {}
                Side::Cut => {
                    if a.cell.is_some() {
                        cut.push(Atom { weight: weights[i], ..a.clone() });
                    } else {
                        if centre_inside(d, r, mode) {
                            base_inside.push(i);
                        }
                        unresolved.push(a.clone());
                    }
                }
            }
        }
        let mut evaluations = 0usize;
        let mut depth = 0;
        while !cut.is_empty() && depth < opts.max_depth {
            let cut_mass: f64 = cut.iter().map(|a| a.weight).sum();
            if cut_mass <= opts.eps * (inside_mass + cut_mass) {
                break;
            }
            let children_per = 1usize << self.m;
            if evaluations + cut.len() * children_per > opts.max_evaluations {
                break;
            }
            let children: Vec<Vec<Atom>> = cut.par_iter().map(|a| self.split(a)).collect::<Result<_>>()?;
            evaluations += cut.len() * children_per;
            depth += 1;
            let mut next = Vec::new();
            for c in children.into_iter().flatten() {
                let d = sp.distance_coords(pc, &c.point)?;
                match classify(d, c.extent, r) {
                    Side::Inside => {
                        inside_mass += c.weight;
                        refined.push(c);
                    }
                    Side::Outside => {}
                    Side::Cut => next.push(c),
                }
            }
            cut = next;
        }
        let mut unresolved_mass = unresolved.iter().map(|a| a.weight).sum::<f64>();
        for a in cut {
            let d = sp.distance_coords(pc, &a.point)?;
            unresolved_mass += a.weight;
            if centre_inside(d, r, mode) {
                refined.push(a.clone());
            }
            unresolved.push(a);
        }

        let mut boundary_inside = Vec::new();
        let mut bcut: Vec<BoundaryAtom> = Vec::new();
        let mut boundary_unresolved = Vec::new();
        let mut boundary_refined = Vec::new();
        for (i, b) in self.boundary.iter().enumerate() {
            let d = sp.distance_coords(pc, &b.point)?;
            match classify(d, b.extent, r) {
                Side::Inside => boundary_inside.push(i),
                Side::Outside => {}
                Side::Cut => {
                    if b.cell.is_some() {
                        bcut.push(b.clone());
                    } else {
                        if centre_inside(d, r, mode) {
                            boundary_inside.push(i);
                        }
                        boundary_unresolved.push(b.clone());
                    }
                }
            }
        }
        let mut bdepth = 0;
        while !bcut.is_empty() && bdepth < opts.max_depth.max(depth) {
            let children: Vec<Vec<BoundaryAtom>> =
                bcut.par_iter().map(|b| self.split_boundary(b)).collect::<Result<_>>()?;
            evaluations += 2 * bcut.len();
            bdepth += 1;
            let mut next = Vec::new();
            for c in children.into_iter().flatten() {
                let d = sp.distance_coords(pc, &c.point)?;
                match classify(d, c.extent, r) {
                    Side::Inside => boundary_refined.push(c),
                    Side::Outside => {}
                    Side::Cut => next.push(c),
                }
            }
            bcut = next;
        }
        for b in bcut {
            let d = sp.distance_coords(pc, &b.point)?;
            if centre_inside(d, r, mode) {
                boundary_refined.push(b.clone());
            }
            boundary_unresolved.push(b);
        }
        Ok(BallSample {
            varifold: self,
            weights,
            center: pc.clone(),
            radius: r,
            mode,
            base_inside,
            refined,
            unresolved,
            boundary_inside,
            boundary_refined,
            boundary_unresolved,
            evaluations,
            unresolved_mass,
            max_depth_reached: depth,
            companion: None,
        })
    }

    /// Cell areas for ball queries; atoms without a cell keep their weight.
    fn ball_weights(&self) -> Result<&[f64]> {
        if let Some(w) = self.cell_masses.get() {
            return Ok(w);
        }
        let w: Vec<f64> = self
            .atoms
            .par_iter()
            .map(|a| match a.cell {
                Some(c) => immersion::cell_area(
                    self.sources[c.source].as_ref(),
                    &c.lo,
                    &c.hi,
                    BASE_CELL_RULE,
                    REFINE_DEGENERACY,
                ),
                None => Ok(a.weight),
            })
            .collect::<Result<_>>()?;
        let _ = self.cell_masses.set(w);
        Ok(self.cell_masses.get().expect("initialised above"))
    }

    /// Splits an atom's cell in half along every parameter axis; each child
    /// carries the area of its own sub-cell.
    fn split(&self, a: &Atom) -> Result<Vec<Atom>> {
        let cell = a.cell.expect("only cells are split");
        let imm = self.sources[cell.source].as_ref();
        let m = self.m;
        let mid = [0.5 * (cell.lo[0] + cell.hi[0]), 0.5 * (cell.lo[1] + cell.hi[1])];
        let mut out = Vec::with_capacity(1 << m);
        for corner in 0..(1usize << m) {
            let mut lo = cell.lo;
            let mut hi = cell.hi;
            for k in 0..m {
                if corner >> k & 1 == 0 {
                    hi[k] = mid[k];
                } else {
                    lo[k] = mid[k];
                }
            }
            let node: Vec<f64> = (0..m).map(|k| 0.5 * (lo[k] + hi[k])).collect();
            let size: f64 = (0..m).map(|k| hi[k] - lo[k]).product();
            let mut c = immersion::make_atom(imm, cell.source, &node, lo, hi, size, REFINE_DEGENERACY)?;
            c.density = a.density;
            out.push(c);
        }
        Ok(out)
    }

    fn split_boundary(&self, b: &BoundaryAtom) -> Result<Vec<BoundaryAtom>> {
        let cell = b.cell.expect("only cells are split");
        let imm = self.sources[cell.source].as_ref();
        let mid = 0.5 * (cell.lo + cell.hi);
        let mut out = Vec::with_capacity(2);
        for (lo, hi) in [(cell.lo, mid), (mid, cell.hi)] {
            out.push(immersion::make_boundary_atom(imm, cell.source, cell.edge, 0.5 * (lo + hi), lo, hi, hi - lo)?);
        }
        let total: f64 = out.iter().map(|c| c.weight).sum();
        for c in &mut out {
            c.weight *= b.weight / total;
        }
        Ok(out)
    }

    /// Default density radii `r0 2^-k`, `k = 0..5`, with
    /// `r0 = min(0.2 * injectivity radius, 0.1 * diameter)`.
    pub fn default_density_radii(&self) -> Vec<f64> {
        let diam = self.extrinsic_diameter().value;
        let r0 = (0.2 * self.space.injectivity_radius()).min(0.1 * diam);
        (0..6).map(|k| r0 * 0.5f64.powi(k)).collect()
    }

    /// Quadratic extrapolation of closed-ball density ratios to `r = 0`, weighted
    /// by the inverse squared ratio errors.
    pub fn density_estimate(&self, p: &Point, radii: Option<&[f64]>, opts: &RefineOptions) -> Result<DensityEstimate> {
        let radii: Vec<f64> = match radii {
            Some(r) => r.to_vec(),
            None => self.default_density_radii(),
        };
        if radii.len() < 3 {
            return Err(GeomError::Input("density fit needs at least 3 radii".into()));
        }
        if radii.windows(2).any(|w| !(w[1] < w[0])) || !(radii[radii.len() - 1] > 0.0) {
            return Err(GeomError::Input("density radii must be positive and decreasing".into()));
        }
        if radii[0] >= self.space.injectivity_radius() {
            return Err(GeomError::Domain("density radii exceed the injectivity radius".into()));
        }
        let spacing = self.mesh_size() / f64::from(1u32 << opts.max_depth.min(30));
        let smallest = radii[radii.len() - 1];
        if smallest < 3.0 * spacing {
            return Err(GeomError::Resolution(format!(
                "smallest radius {smallest:e} is below 3x the refined atom spacing {spacing:e}"
            )));
        }
        let alpha = unit_ball_volume(self.m);
        let mut ratios = Vec::with_capacity(radii.len());
        let mut errs = Vec::with_capacity(radii.len());
        for &r in &radii {
            let mass = self.ball(p, r, BallMode::Closed, opts)?.mass();
            let norm = alpha * r.powi(self.m as i32);
            ratios.push(mass.value / norm);
            errs.push(mass.err / norm);
        }
        let n = radii.len();
        let top = ratios.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if top == 0.0 {
            let value_error = errs.iter().fold(0.0f64, |m, e| m.max(*e));
            return Ok(DensityEstimate {
                value: 0.0,
                value_error,
                radii,
                ratios,
                ratio_errors: errs,
                residual: 0.0,
                slope: 0.0,
            });
        }
        // weighted fit: noisy small-radius ratios count less; weights scaled to max 1
        let floor = 1e-9 * top;
        let least = errs.iter().fold(f64::INFINITY, |m, e| m.min(e.max(floor)));
        let sw: Vec<f64> = errs.iter().map(|e| least / e.max(floor)).collect();
        let a = DMatrix::from_fn(n, 3, |i, j| radii[i].powi(j as i32));
        let aw = DMatrix::from_fn(n, 3, |i, j| sw[i] * a[(i, j)]);
        let yw = DVector::from_fn(n, |i, _| sw[i] * ratios[i]);
        let pinv = aw.pseudo_inverse(1e-14).map_err(|e| GeomError::Resolution(e.to_string()))?;
        let coef = &pinv * &yw;
        // intercept = sum_i pinv[0, i] sw[i] y[i]
        let value_error = (0..n).map(|i| (pinv[(0, i)] * sw[i]).abs() * errs[i]).sum::<f64>();
        let y = DVector::from_vec(ratios.clone());
        let res = &a * &coef - &y;
        let residual = if n > 3 { (res.norm_squared() / (n - 3) as f64).sqrt() } else { 0.0 };
        Ok(DensityEstimate {
            value: coef[0].max(0.0),
            value_error,
            radii,
            ratios,
            ratio_errors: errs,
            residual,
            slope: coef[1],
        })
    }

    /// Image of the varifold under an ambient isometry.
    pub fn transformed(&self, iso: &Isometry) -> Result<SampledVarifold> {
        let sp = self.space;
        let point = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(iso.apply_point(&sp, &Point::from_vec_unchecked(x.clone()))?.into_coords())
        };
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            atoms.push(Atom {
                point: point(&a.point)?,
                frame: a.frame.iter().map(|e| iso.apply_vector(e)).collect(),
                h: iso.apply_vector(&a.h),
                ..a.clone()
            });
        }
        let mut boundary = Vec::with_capacity(self.boundary.len());
        for b in &self.boundary {
            boundary.push(BoundaryAtom {
                point: point(&b.point)?,
                conormal: iso.apply_vector(&b.conormal),
                ..b.clone()
            });
        }
        let sources: Vec<Arc<dyn Immersion>> = self
            .sources
            .iter()
            .map(|s| Arc::new(immersion::TransformedImmersion::new(s.clone(), iso.clone())) as Arc<dyn Immersion>)
            .collect();
        let hints = self.hints.iter().map(|(x, k)| (iso.apply_coords(x), *k)).collect();
        let mut out = SampledVarifold {
            space: sp,
            m: self.m,
            atoms,
            boundary,
            sources,
            hints,
            provenance: self.provenance.clone(),
            companion: None,
            cell_masses: OnceLock::new(),
            diameter: OnceLock::new(),
        };
        if let Some(c) = &self.companion {
            out.companion = Some(Box::new(c.transformed(iso)?));
        }
        Ok(out)
    }

    /// Writes the columnar form: a `#` metadata line, a header, then one row per
    /// interior atom (`kind = interior`) and per boundary atom (`kind = boundary`).
    /// Floats use shortest round-trip formatting, so reading back is bit-exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.space.ambient_dim();
        writeln!(out, "# vmono-varifold n={} b={:?} m={}", self.space.dim(), self.space.curvature(), self.m)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string(), "weight".into(), "density".into(), "extent".into()];
        header.extend((0..d).map(|j| format!("x{j}")));
        for a in 0..self.m {
            header.extend((0..d).map(|j| format!("t{a}_{j}")));
        }
        header.extend((0..d).map(|j| format!("h{j}")));
        header.extend((0..d).map(|j| format!("nu{j}")));
        w.write_record(&header)?;
        let f = |x: f64| format!("{x:?}");
        for a in &self.atoms {
            let mut row = vec!["interior".to_string(), f(a.weight), f(a.density), f(a.extent)];
            row.extend(a.point.iter().map(|&x| f(x)));
            for e in &a.frame {
                row.extend(e.iter().map(|&x| f(x)));
            }
            row.extend(a.h.iter().map(|&x| f(x)));
            row.extend((0..d).map(|_| String::new()));
            w.write_record(&row)?;
        }
        for b in &self.boundary {
            let mut row = vec!["boundary".to_string(), f(b.weight), String::new(), f(b.extent)];
            row.extend(b.point.iter().map(|&x| f(x)));
            row.extend((0..self.m * d).map(|_| String::new()));
            row.extend((0..d).map(|_| String::new()));
            row.extend(b.conormal.iter().map(|&x| f(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<SampledVarifold> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let (meta, body) = text.split_once('\n').ok_or_else(|| GeomError::Input("empty varifold file".into()))?;
        let meta = meta
            .strip_prefix("# vmono-varifold ")
            .ok_or_else(|| GeomError::Input("missing varifold metadata line".into()))?;
        let mut n = None;
        let mut b = None;
        let mut m = None;
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| GeomError::Input(format!("bad metadata field {kv}")))?;
            let bad = |_| GeomError::Input(format!("bad metadata value {kv}"));
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(bad)?),
                "b" => b = Some(v.parse::<f64>().map_err(|_| GeomError::Input(format!("bad metadata value {kv}")))?),
                "m" => m = Some(v.parse::<usize>().map_err(bad)?),
                _ => {}
            }
        }
        let missing = || GeomError::Input("metadata needs n, b and m".into());
        let space = ModelSpace::new(n.ok_or_else(missing)?, b.ok_or_else(missing)?)?;
        let m = m.ok_or_else(missing)?;
        let d = space.ambient_dim();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let mut atoms = Vec::new();
        let mut boundary = Vec::new();
        let expected = 4 + d * (m + 3);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != expected {
                return Err(GeomError::Input(format!("row {line}: expected {expected} columns, got {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|_| GeomError::Input(format!("row {line}, column {i}: not a number")))
            };
            let vec_at = |start: usize| -> Result<DVector<f64>> {
                let mut v = DVector::zeros(d);
                for j in 0..d {
                    v[j] = num(start + j)?;
                }
                Ok(v)
            };
            let point = vec_at(4)?;
            match &rec[0] {
                "interior" => {
                    let frame = (0..m).map(|a| vec_at(4 + d * (1 + a))).collect::<Result<Vec<_>>>()?;
                    atoms.push(Atom {
                        weight: num(1)?,
                        density: num(2)?,
                        extent: num(3)?,
                        point,
                        frame,
                        h: vec_at(4 + d * (1 + m))?,
                        cell: None,
                    });
                }
                "boundary" => boundary.push(BoundaryAtom {
                    weight: num(1)?,
                    extent: num(3)?,
                    point,
                    conormal: vec_at(4 + d * (2 + m))?,
                    cell: None,
                }),
                other => return Err(GeomError::Input(format!("row {line}: unknown kind {other}"))),
            }
        }
        SampledVarifold::new(space, m, atoms, boundary)
    }
}

/// Central difference `(A(f_t) - A(f_-t)) / 2t` of the area along `exp(t X)`.
pub fn first_variation_numeric(imm: Arc<dyn Immersion>, field: Arc<dyn VectorField>, t: f64, n: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(GeomError::Input(format!("step must be positive, got {t}")));
    }
    let plus = immersion::DeformedImmersion::new(imm.clone(), field.clone(), t);
    let minus = immersion::DeformedImmersion::new(imm, field, -t);
    Ok(immersion::quadrature_area_difference(&plus, &minus, n)? / (2.0 * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{sample_varifold, FlatPatch, GeodesicDisk, GeodesicSphere, QuadratureSpec};
    use std::f64::consts::PI;

    fn unit_sphere(n: usize) -> SampledVarifold {
        let s = GeodesicSphere::new(ModelSpace::euclidean(3), 1.0).unwrap();
        sample_varifold(Arc::new(s), &QuadratureSpec::new(n)).unwrap()
    }

    #[test]
    fn flat_square_area_and_boundary() {
        let f = FlatPatch::unit_square(ModelSpace::euclidean(3)).unwrap();
        let v = sample_varifold(Arc::new(f), &QuadratureSpec::new(5)).unwrap();
        assert!((v.area() - 1.0).abs() < 1e-14);
        assert!((v.boundary_length() - 4.0).abs() < 1e-14);
        assert_eq!(v.willmore_energy(), 0.0);
    }

    #[test]
    fn sphere_totals() {
        let v = unit_sphere(64);
        assert!((v.area() - 4.0 * PI).abs() < 1e-10);
        assert!((v.willmore_energy() - 4.0 * PI).abs() < 1e-8);
        assert!((v.total_variation_bound() - 8.0 * PI).abs() < 1e-8);
        let d = v.extrinsic_diameter();
        assert!(d.value <= 2.0 + 1e-12 && d.value > 2.0 - d.gap);
    }

    #[test]
    fn disk_first_variation_of_radial_field() {
        let disk = GeodesicDisk::new(ModelSpace::euclidean(3), 1.0).unwrap();
        let v = sample_varifold(Arc::new(disk), &QuadratureSpec::new(32)).unwrap();
        let radial = immersion::FnField(|x: &DVector<f64>| {
            let n = x.norm();
            if n > 0.0 {
                x / n
            } else {
                x.clone()
            }
        });
        assert!((v.first_variation_analytic(&radial) - 2.0 * PI).abs() < 1e-10);
        assert!((v.total_variation_bound() - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn ball_masses() {
        let v = unit_sphere(32);
        let sp = ModelSpace::euclidean(3);
        let p = sp.point(DVector::from_vec(vec![0.6, 0.0, 0.8])).unwrap();
        let r = 0.2;
        let m = v.mass_in_ball(&p, r, BallMode::Closed).unwrap();
        // chord balls about a point of the unit sphere cut caps of area exactly pi r^2
        let exact = PI * r * r;
        assert!((m.value - exact).abs() < 0.02 * exact, "{m:?}");
        assert!((m.value - exact).abs() <= m.err, "error estimate must cover the true error: {m:?}");
        let open = v.mass_in_ball(&p, r, BallMode::Open).unwrap();
        assert!(open.value <= m.value);
        let big = v.mass_in_ball(&p, 3.0, BallMode::Open).unwrap();
        assert!((big.value - 4.0 * PI).abs() < 1e-10);
        let far = sp.point(DVector::from_vec(vec![5.0, 0.0, 0.0])).unwrap();
        assert_eq!(v.mass_in_ball(&far, 0.5, BallMode::Closed).unwrap().value, 0.0);
    }

    #[test]
    fn density_of_sphere_is_one() {
        let v = unit_sphere(32);
        let sp = ModelSpace::euclidean(3);
        let p = sp.point(DVector::from_vec(vec![0.0, 0.6, 0.8])).unwrap();
        let d = v.density_estimate(&p, None, &RefineOptions::default()).unwrap();
        assert!((d.value - 1.0).abs() < 0.02, "{d:?}");
        let off = sp.point(DVector::from_vec(vec![0.0, 0.0, 3.0])).unwrap();
        assert_eq!(v.density_estimate(&off, None, &RefineOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let disk = GeodesicDisk::new(ModelSpace::new(3, -1.0).unwrap(), 0.7).unwrap();
        let v = sample_varifold(Arc::new(disk), &QuadratureSpec::new(8)).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = SampledVarifold::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.space(), v.space());
        assert_eq!(back.atoms().len(), v.atoms().len());
        for (a, b) in v.atoms().iter().zip(back.atoms()) {
            assert_eq!(a.point, b.point);
            assert_eq!(a.frame, b.frame);
            assert_eq!(a.h, b.h);
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        for (a, b) in v.boundary().iter().zip(back.boundary()) {
            assert_eq!(a.conormal, b.conormal);
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
    }

    #[test]
    fn zero_weight_atoms_dropped() {
        let sp = ModelSpace::euclidean(2);
        let atom = |w: f64| Atom {
            point: DVector::zeros(2),
            frame: vec![DVector::from_vec(vec![1.0, 0.0])],
            weight: w,
            h: DVector::zeros(2),
            density: 1.0,
            extent: 0.0,
            cell: None,
        };
        let v = SampledVarifold::new(sp, 1, vec![atom(1.0), atom(0.0)], vec![]).unwrap();
        assert_eq!(v.atoms().len(), 1);
        assert_eq!(v.provenance().dropped_atoms, 1);
        assert!(SampledVarifold::new(sp, 1, vec![atom(-1.0)], vec![]).is_err());
        assert_eq!(v.extrinsic_diameter().value, 0.0);
    }
}
