//! Constant-curvature model spaces through their flat quadric embeddings.
//!
//! * `b > 0`: the sphere `{x in R^(n+1) : <x,x> = 1/b}` with the Euclidean form.
//! * `b < 0`: the upper sheet `{x : <x,x>_L = 1/b, x_0 > 0}` with the form `(-,+,...,+)`.
//! * `b = 0`: flat `R^n`.
//!
//! Index 0 is the distinguished ambient axis for `b != 0`; [`ModelSpace::origin`]
//! sits on it. All geodesic quantities are closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comparison;
use crate::error::{GeomError, Result};

/// Scaled quadric residual accepted by [`ModelSpace::point`].
pub const QUADRIC_TOL: f64 = 1e-12;
/// `b <p,q>` at or below `-1 + ANTIPODAL_TOL` counts as the cut locus.
pub const ANTIPODAL_TOL: f64 = 1e-12;
/// Arguments of `asin`/`asinh` may exceed their domain by at most this much before clamping fails.
pub const CLAMP_TOL: f64 = 1e-12;
const TANGENCY_TOL: f64 = 1e-10;
const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    n: usize,
    b: f64,
}

/// A point of a model space, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(DVector<f64>);

impl Point {
    /// Wraps coordinates already known to lie on the quadric.
    pub(crate) fn from_vec_unchecked(v: DVector<f64>) -> Self {
        Point(v)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.0
    }
}

/// A tangent vector at `base`, stored in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

/// An `m`-plane at `base` with a form-orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPlane {
    base: Point,
    frame: Vec<DVector<f64>>,
}

impl TangentPlane {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn frame(&self) -> &[DVector<f64>] {
        &self.frame
    }

    pub(crate) fn from_parts_unchecked(base: Point, frame: Vec<DVector<f64>>) -> Self {
        TangentPlane { base, frame }
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }
}

impl ModelSpace {
    pub fn new(n: usize, b: f64) -> Result<Self> {
        if n < 1 {
            return Err(GeomError::Domain("model space dimension must be >= 1".into()));
        }
        if !b.is_finite() {
            return Err(GeomError::Domain(format!("curvature must be finite, got {b}")));
        }
        Ok(ModelSpace { n, b })
    }

    pub fn euclidean(n: usize) -> Self {
        ModelSpace { n, b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn curvature(&self) -> f64 {
        self.b
    }

    pub fn ambient_dim(&self) -> usize {
        if self.b == 0.0 {
            self.n
        } else {
            self.n + 1
        }
    }

    /// `pi / sqrt(b)` for `b > 0`, infinite otherwise.
    pub fn injectivity_radius(&self) -> f64 {
        if self.b > 0.0 {
            PI / self.b.sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// The ambient bilinear form: Lorentzian for `b < 0`, Euclidean otherwise.
    #[inline]
    pub fn form(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let e = x.dot(y);
        if self.b < 0.0 {
            e - 2.0 * x[0] * y[0]
        } else {
            e
        }
    }

    #[inline]
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.form(v, v).max(0.0).sqrt()
    }

    /// `|b <x,x> - 1| / (1 + |b| |x|_E^2)`; zero for flat space.
    pub fn quadric_residual(&self, x: &DVector<f64>) -> f64 {
        if self.b == 0.0 {
            return 0.0;
        }
        (self.b * self.form(x, x) - 1.0).abs() / (1.0 + self.b.abs() * x.norm_squared())
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(GeomError::Contract(format!(
                "expected {} ambient coordinates, got {}",
                self.ambient_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Validates `coords` and wraps it as a [`Point`].
    pub fn point(&self, coords: DVector<f64>) -> Result<Point> {
        self.check_dim(&coords)?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::NonFinite("point coordinates".into()));
        }
        let residual = self.quadric_residual(&coords);
        if residual > QUADRIC_TOL {
            return Err(GeomError::OffQuadric { residual });
        }
        if self.b < 0.0 && coords[0] <= 0.0 {
            return Err(GeomError::Domain("hyperboloid points need x_0 > 0".into()));
        }
        Ok(Point(coords))
    }

    /// Rescales `x` onto the quadric (radially for the sphere, along the ray for the hyperboloid).
    pub fn project_to_space(&self, mut x: DVector<f64>) -> Result<Point> {
        self.check_dim(&x)?;
        if self.b > 0.0 {
            let nx = x.norm();
            if nx == 0.0 {
                return Err(GeomError::Singularity("cannot project the zero vector to the sphere".into()));
            }
            x *= 1.0 / (self.b.sqrt() * nx);
        } else if self.b < 0.0 {
            let q = -self.form(&x, &x);
            if !(q > 0.0) || x[0] <= 0.0 {
                return Err(GeomError::Domain("vector is not future timelike".into()));
            }
            x *= 1.0 / ((-self.b) * q).sqrt();
        }
        Ok(Point(x))
    }

    /// The distinguished point `(1/sqrt|b|) e_0`, or the origin of `R^n`.
    pub fn origin(&self) -> Point {
        let mut x = DVector::zeros(self.ambient_dim());
        if self.b != 0.0 {
            x[0] = 1.0 / self.b.abs().sqrt();
        }
        Point(x)
    }

    /// An orthonormal basis of `T_origin` (ambient axes `1..=n`, or all axes when flat).
    pub fn origin_tangent_basis(&self) -> Vec<DVector<f64>> {
        let shift = usize::from(self.b != 0.0);
        (0..self.n)
            .map(|i| DVector::from_fn(self.ambient_dim(), |j, _| if j == i + shift { 1.0 } else { 0.0 }))
            .collect()
    }

    /// Form-orthogonal projection of an ambient vector onto `T_p`.
    pub fn project_tangent(&self, p: &Point, w: &DVector<f64>) -> DVector<f64> {
        self.project_tangent_raw(&p.0, w)
    }

    pub(crate) fn project_tangent_raw(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if self.b == 0.0 {
            return w.clone();
        }
        let mut out = w.clone();
        out.axpy(-self.b * self.form(w, x), x, 1.0);
        out
    }

    pub fn tangent(&self, p: &Point, components: DVector<f64>) -> Result<TangentVector> {
        self.check_dim(&components)?;
        if self.b != 0.0 {
            let scale = components.norm() * p.0.norm() * self.b.abs().sqrt();
            let off = (self.form(&p.0, &components) * self.b.abs().sqrt()).abs();
            if off > TANGENCY_TOL * scale.max(1.0) {
                return Err(GeomError::Contract(format!(
                    "vector is not tangent at its base (normal component {off:e})"
                )));
            }
        }
        Ok(TangentVector { base: p.clone(), components })
    }

    /// Builds a plane from a frame, checking orthonormality of the Gram matrix.
    pub fn tangent_plane(&self, p: &Point, frame: Vec<DVector<f64>>) -> Result<TangentPlane> {
        if frame.is_empty() || frame.len() > self.n {
            return Err(GeomError::Contract(format!("frame of size {} in dimension {}", frame.len(), self.n)));
        }
        for (i, e) in frame.iter().enumerate() {
            self.tangent(p, e.clone())?;
            for (j, f) in frame.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (self.form(e, f) - target).abs() > FRAME_TOL {
                    return Err(GeomError::Contract("frame is not orthonormal".into()));
                }
            }
        }
        Ok(TangentPlane { base: p.clone(), frame })
    }

    /// Gram-Schmidt of `vectors` (after projection to `T_p`) into a tangent plane.
    pub fn orthonormalize(&self, p: &Point, vectors: &[DVector<f64>]) -> Result<TangentPlane> {
        Ok(TangentPlane { base: p.clone(), frame: self.gram_schmidt(&p.0, vectors)? })
    }

    pub(crate) fn gram_schmidt(&self, x: &DVector<f64>, vectors: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut w = self.project_tangent_raw(x, v);
            for e in &frame {
                let c = self.form(&w, e);
                w.axpy(-c, e, 1.0);
            }
            let nw = self.norm(&w);
            if !(nw > 1e-14 * self.norm(v).max(1e-300)) {
                return Err(GeomError::Contract("degenerate frame".into()));
            }
            w /= nw;
            frame.push(w);
        }
        Ok(frame)
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_dim(&p.0)?;
        self.check_dim(&q.0)?;
        for x in [p, q] {
            let residual = self.quadric_residual(&x.0);
            if residual > 1e3 * QUADRIC_TOL {
                return Err(GeomError::OffQuadric { residual });
            }
        }
        self.distance_coords(&p.0, &q.0)
    }

    /// Distance on raw coordinates already known to lie on the quadric.
    pub(crate) fn distance_coords(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        let diff = q - p;
        if self.b == 0.0 {
            return Ok(diff.norm());
        }
        let k = self.b.abs().sqrt();
        let chord = self.form(&diff, &diff);
        if self.b > 0.0 {
            let s = k * chord.max(0.0).sqrt() / 2.0;
            if s > 1.0 + CLAMP_TOL {
                return Err(GeomError::Domain(format!("chord argument {s} exceeds 1")));
            }
            Ok(2.0 / k * s.min(1.0).asin())
        } else {
            if chord < -CLAMP_TOL * (1.0 + diff.norm_squared()) {
                return Err(GeomError::Domain(format!("timelike chord {chord:e} between hyperboloid points")));
            }
            Ok(2.0 / k * (k * chord.max(0.0).sqrt() / 2.0).asinh())
        }
    }

    fn same_base(&self, a: &Point, b: &Point) -> bool {
        let scale = 1.0 + a.0.amax();
        (&a.0 - &b.0).amax() <= 1e-12 * scale
    }

    /// Closed-form exponential map at `v.base`.
    pub fn exp(&self, v: &TangentVector) -> Result<Point> {
        self.check_dim(&v.components)?;
        let p = &v.base.0;
        if self.b == 0.0 {
            return Ok(Point(p + &v.components));
        }
        let t = self.norm(&v.components);
        if t == 0.0 {
            return Ok(v.base.clone());
        }
        let k = self.b.abs().sqrt();
        let x = k * t;
        let (c, s_over) = if self.b > 0.0 { (x.cos(), x.sin() / x) } else { (x.cosh(), x.sinh() / x) };
        self.project_to_space(p * c + &v.components * s_over)
    }

    /// Exponential map at `p`; `v` must be based at `p`.
    pub fn exp_at(&self, p: &Point, v: &TangentVector) -> Result<Point> {
        if !self.same_base(p, &v.base) {
            return Err(GeomError::Contract("tangent vector is based at a different point".into()));
        }
        self.exp(v)
    }

    /// Inverse of [`exp`](Self::exp) inside the injectivity radius.
    pub fn log(&self, p: &Point, q: &Point) -> Result<TangentVector> {
        let d = self.distance(p, q)?;
        let diff = &q.0 - &p.0;
        if self.b == 0.0 {
            return Ok(TangentVector { base: p.clone(), components: diff });
        }
        if self.b > 0.0 && self.b * p.0.dot(&q.0) <= -1.0 + ANTIPODAL_TOL {
            return Err(GeomError::Singularity("log at the antipode (cut locus)".into()));
        }
        // q - b<p,q> p, written via q - p for accuracy at short range
        let w = &diff - &p.0 * (self.b * self.form(&p.0, &diff));
        let nw = self.norm(&w);
        if nw == 0.0 || d == 0.0 {
            return Ok(TangentVector { base: p.clone(), components: DVector::zeros(diff.len()) });
        }
        Ok(TangentVector { base: p.clone(), components: w * (d / nw) })
    }

    /// `grad r` at `q` for `r = d(p, .)`: the unit vector `-log_q(p) / d(p,q)`.
    pub fn grad_dist(&self, p: &Point, q: &Point) -> Result<TangentVector> {
        let v = self.log(q, p)?;
        let d = self.norm(&v.components);
        if d == 0.0 {
            return Err(GeomError::Singularity("gradient of the distance at its base point".into()));
        }
        Ok(TangentVector { base: q.clone(), components: v.components * (-1.0 / d) })
    }

    /// `Div_T(r grad r)` at `q` for `r = d(p, .)`:
    /// `|grad^T r|^2 + r ct_b(r) (m - |grad^T r|^2)`.
    pub fn div_t_r_grad_r(&self, p: &Point, q: &Point, plane: &TangentPlane) -> Result<f64> {
        if !self.same_base(q, &plane.base) {
            return Err(GeomError::Contract("plane is not based at q".into()));
        }
        let r = self.distance(p, q)?;
        if self.b > 0.0 && r >= self.injectivity_radius() {
            return Err(GeomError::Singularity("q on the cut locus of p".into()));
        }
        let m = plane.dim() as f64;
        if r == 0.0 {
            return Ok(m);
        }
        let grad = self.grad_dist(p, q)?;
        let tangential: f64 = plane.frame.iter().map(|e| self.form(&grad.components, e).powi(2)).sum();
        let rct = comparison::radial_comparison(self.b, r)?;
        Ok(tangential + rct * (m - tangential))
    }
}

/// An isometry of a model space acting linearly (plus a translation in flat space)
/// on ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
}

impl Isometry {
    pub fn identity(space: &ModelSpace) -> Self {
        let d = space.ambient_dim();
        Isometry { linear: DMatrix::identity(d, d), translation: DVector::zeros(d) }
    }

    /// Builds an isometry from a matrix preserving the ambient form (and, for
    /// `b < 0`, the upper sheet) plus a translation that must vanish unless `b = 0`.
    pub fn new(space: &ModelSpace, linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = space.ambient_dim();
        if linear.nrows() != d || linear.ncols() != d || translation.len() != d {
            return Err(GeomError::Contract("isometry has the wrong ambient dimension".into()));
        }
        let mut j = DMatrix::identity(d, d);
        if space.curvature() < 0.0 {
            j[(0, 0)] = -1.0;
            if linear[(0, 0)] <= 0.0 {
                return Err(GeomError::Contract("Lorentz map swaps the hyperboloid sheets".into()));
            }
        }
        let defect = (linear.transpose() * &j * &linear - &j).amax();
        if defect > 1e-9 * (1.0 + linear.amax().powi(2)) {
            return Err(GeomError::Contract(format!("matrix does not preserve the form (defect {defect:e})")));
        }
        if space.curvature() != 0.0 && translation.amax() != 0.0 {
            return Err(GeomError::Contract("only flat space admits translations".into()));
        }
        Ok(Isometry { linear, translation })
    }

    pub fn apply_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.translation
    }

    pub fn apply_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.linear * v
    }

    pub fn apply_point(&self, space: &ModelSpace, p: &Point) -> Result<Point> {
        let y = self.apply_coords(&p.0);
        if space.curvature() == 0.0 {
            Ok(Point(y))
        } else {
            space.project_to_space(y)
        }
    }

    /// Rotation by `angle` in the coordinate plane `(i, j)`. For `b < 0` both
    /// indices must be spatial (non-zero).
    pub fn rotation(space: &ModelSpace, i: usize, j: usize, angle: f64) -> Result<Self> {
        let d = space.ambient_dim();
        if i == j || i >= d || j >= d || (space.curvature() < 0.0 && (i == 0 || j == 0)) {
            return Err(GeomError::Contract(format!("invalid rotation plane ({i}, {j})")));
        }
        let mut l = DMatrix::identity(d, d);
        let (s, c) = angle.sin_cos();
        l[(i, i)] = c;
        l[(j, j)] = c;
        l[(i, j)] = -s;
        l[(j, i)] = s;
        Ok(Isometry { linear: l, translation: DVector::zeros(d) })
    }

    /// Lorentz boost with the given rapidity in the plane `(0, j)`; hyperbolic space only.
    pub fn boost(space: &ModelSpace, j: usize, rapidity: f64) -> Result<Self> {
        let d = space.ambient_dim();
        if !(space.curvature() < 0.0) || j == 0 || j >= d {
            return Err(GeomError::Contract("boosts need b < 0 and a spatial axis".into()));
        }
        let mut l = DMatrix::identity(d, d);
        let (s, c) = (rapidity.sinh(), rapidity.cosh());
        l[(0, 0)] = c;
        l[(j, j)] = c;
        l[(0, j)] = s;
        l[(j, 0)] = s;
        Ok(Isometry { linear: l, translation: DVector::zeros(d) })
    }

    /// Translation by `t`; flat space only.
    pub fn translation(space: &ModelSpace, t: DVector<f64>) -> Result<Self> {
        Isometry::new(space, DMatrix::identity(space.ambient_dim(), space.ambient_dim()), t)
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry {
            linear: &self.linear * &other.linear,
            translation: &self.linear * &other.translation + &self.translation,
        }
    }

    /// A generic isometry built from `params`, consumed cyclically: rotations in every
    /// admissible coordinate plane, then boosts (`b < 0`) or a translation (`b = 0`).
    /// Entries of `params` are expected in `[-1, 1]`.
    pub fn from_params(space: &ModelSpace, params: &[f64]) -> Result<Self> {
        if params.is_empty() {
            return Ok(Isometry::identity(space));
        }
        let d = space.ambient_dim();
        let first = if space.curvature() < 0.0 { 1 } else { 0 };
        let mut k = 0;
        let mut next = || {
            let v = params[k % params.len()];
            k += 1;
            v
        };
        let mut iso = Isometry::identity(space);
        for i in first..d {
            for j in i + 1..d {
                iso = Isometry::rotation(space, i, j, std::f64::consts::PI * next())?.compose(&iso);
            }
        }
        if space.curvature() < 0.0 {
            for j in 1..d {
                iso = Isometry::boost(space, j, next())?.compose(&iso);
            }
        } else if space.curvature() == 0.0 {
            let t = DVector::from_fn(d, |_, _| next());
            iso = Isometry::translation(space, t)?.compose(&iso);
        }
        Ok(iso)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn euclidean_distance() {
        let s = ModelSpace::euclidean(3);
        let p = s.point(v(&[0.0, 0.0, 0.0])).unwrap();
        let q = s.point(v(&[3.0, 4.0, 0.0])).unwrap();
        assert_eq!(s.distance(&p, &q).unwrap(), 5.0);
        assert_eq!(s.distance(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_sphere_points() {
        let s = ModelSpace::new(3, 1.0).unwrap();
        let p = s.point(v(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let q = s.point(v(&[-1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((s.distance(&p, &q).unwrap() - PI).abs() < 1e-15);
        assert!(matches!(s.log(&p, &q), Err(GeomError::Singularity(_))));
    }

    #[test]
    fn off_quadric_rejected() {
        let s = ModelSpace::new(2, 1.0).unwrap();
        assert!(matches!(s.point(v(&[1.0, 1e-3, 0.0])), Err(GeomError::OffQuadric { .. })));
        let h = ModelSpace::new(2, -1.0).unwrap();
        assert!(h.point(v(&[-1.0, 0.0, 0.0])).is_err());
        assert!(s.point(v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn exp_quarter_turn_reaches_equator() {
        let s = ModelSpace::new(2, 1.0).unwrap();
        let north = s.origin();
        let t = s.tangent(&north, v(&[0.0, PI / 2.0, 0.0])).unwrap();
        let q = s.exp(&t).unwrap();
        assert!((q.coords() - v(&[0.0, 1.0, 0.0])).amax() < 1e-15);
        assert!((s.distance(&north, &q).unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exp_zero_and_flat() {
        let s = ModelSpace::new(3, -0.5).unwrap();
        let o = s.origin();
        let z = s.tangent(&o, DVector::zeros(4)).unwrap();
        assert_eq!(s.exp(&z).unwrap(), o);
        let e = ModelSpace::euclidean(2);
        let p = e.point(v(&[1.0, 2.0])).unwrap();
        let t = e.tangent(&p, v(&[0.5, -1.0])).unwrap();
        assert_eq!(e.exp(&t).unwrap().coords(), &v(&[1.5, 1.0]));
        let q = e.point(v(&[4.0, 6.0])).unwrap();
        assert_eq!(e.log(&p, &q).unwrap().components, v(&[3.0, 4.0]));
    }

    #[test]
    fn exp_rejects_mismatched_base() {
        let s = ModelSpace::new(2, 1.0).unwrap();
        let o = s.origin();
        let other = s.point(v(&[0.0, 1.0, 0.0])).unwrap();
        let t = s.tangent(&other, v(&[0.3, 0.0, 0.0])).unwrap();
        assert!(matches!(s.exp_at(&o, &t), Err(GeomError::Contract(_))));
        assert!(s.tangent(&o, v(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn grad_dist_flat_and_singular() {
        let s = ModelSpace::euclidean(3);
        let p = s.origin();
        let q = s.point(v(&[2.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.grad_dist(&p, &q).unwrap().components, v(&[1.0, 0.0, 0.0]));
        assert!(matches!(s.grad_dist(&p, &p), Err(GeomError::Singularity(_))));
    }

    #[test]
    fn div_t_flat_is_m() {
        let s = ModelSpace::euclidean(3);
        let p = s.point(v(&[0.3, -1.0, 2.0])).unwrap();
        let q = s.point(v(&[1.0, 1.0, 1.0])).unwrap();
        let plane = s.orthonormalize(&q, &[v(&[1.0, 2.0, 0.0]), v(&[0.0, 1.0, 1.0])]).unwrap();
        assert!((s.div_t_r_grad_r(&p, &q, &plane).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn div_t_sphere_orthogonal_plane() {
        // plane at q orthogonal to grad r, r = pi/4 on the unit 3-sphere
        let s = ModelSpace::new(3, 1.0).unwrap();
        let p = s.origin();
        let r = PI / 4.0;
        let q = s.point(v(&[r.cos(), r.sin(), 0.0, 0.0])).unwrap();
        let plane = s.tangent_plane(&q, vec![v(&[0.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])]).unwrap();
        assert!((s.div_t_r_grad_r(&p, &q, &plane).unwrap() - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_frame_rejected() {
        let s = ModelSpace::euclidean(3);
        let q = s.origin();
        assert!(s.orthonormalize(&q, &[v(&[1.0, 0.0, 0.0]), v(&[2.0, 0.0, 0.0])]).is_err());
        assert!(s.tangent_plane(&q, vec![v(&[1.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn hyperbolic_distance_along_axis() {
        let s = ModelSpace::new(2, -1.0).unwrap();
        let o = s.origin();
        let t = 1.3f64;
        let q = s.point(v(&[t.cosh(), t.sinh(), 0.0])).unwrap();
        assert!((s.distance(&o, &q).unwrap() - t).abs() < 1e-14);
        let l = s.log(&o, &q).unwrap();
        assert!((l.components - v(&[0.0, t, 0.0])).amax() < 1e-14);
    }
}
