//! Named analytic test surfaces with closed-form reference values.
//!
//! The bundled catalog is `catalog.toml` at the workspace root; [`Catalog::from_toml`]
//! accepts any file with the same layout.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::immersion::{
    sample_union, CliffordTorus, GeodesicCircle, GeodesicDisk, GeodesicSphere, Immersion, QuadratureSpec,
    TorusOfRevolution,
};
use crate::model_space::{ModelSpace, Point};
use crate::varifold::SampledVarifold;

const BUNDLED: &str = include_str!("../../../catalog.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    RoundSphere,
    GeodesicSphere,
    CliffordTorus,
    TorusOfRevolution,
    FlatDisk,
    GreatSphere,
    TangentSpherePair,
    GeodesicCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Known<T> {
    pub value: T,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityPoint {
    pub coords: Vec<f64>,
    pub multiplicity: usize,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownValues {
    pub area: Option<Known<f64>>,
    /// `1/4 int |H|^2 + b * area`.
    pub willmore: Option<Known<f64>>,
    pub d_ext: Option<Known<f64>>,
    pub minimal: Option<Known<bool>>,
    pub boundary_length: Option<Known<f64>>,
    #[serde(default)]
    pub multiplicity_points: Vec<MultiplicityPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceCatalogEntry {
    pub name: String,
    pub kind: SurfaceKind,
    /// Ambient sectional curvature.
    pub b: f64,
    /// Ambient dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub radii: Vec<f64>,
    /// Parameters on the first source of the distinguished point.
    pub point: Vec<f64>,
    #[serde(default)]
    pub known: KnownValues,
}

fn default_dim() -> usize {
    3
}

/// A sampled catalog surface with its distinguished point.
#[derive(Debug, Clone)]
pub struct BuiltSurface {
    pub entry: SurfaceCatalogEntry,
    pub varifold: SampledVarifold,
    pub point: Point,
}

impl SurfaceCatalogEntry {
    pub fn space(&self) -> Result<ModelSpace> {
        ModelSpace::new(self.dim, self.b)
    }

    /// Surface dimension `m`.
    pub fn surface_dim(&self) -> usize {
        if self.kind == SurfaceKind::GeodesicCircle {
            1
        } else {
            2
        }
    }

    fn radius(&self, k: usize, what: &str) -> Result<f64> {
        let r = self.radii.get(k).copied().ok_or_else(|| self.invalid(&format!("missing {what}")))?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(self.invalid(&format!("{what} must be positive, got {r}")));
        }
        Ok(r)
    }

    fn invalid(&self, msg: &str) -> GeomError {
        GeomError::Input(format!("catalog entry {}: {msg}", self.name))
    }

    fn expect_radii(&self, k: usize) -> Result<()> {
        if self.radii.len() != k {
            return Err(self.invalid(&format!("expected {k} radii, got {}", self.radii.len())));
        }
        Ok(())
    }

    /// Kind-specific parameter checks.
    pub fn validate(&self) -> Result<()> {
        let sp = self.space()?;
        let need_b = |ok: bool, what: &str| if ok { Ok(()) } else { Err(self.invalid(what)) };
        match self.kind {
            SurfaceKind::RoundSphere | SurfaceKind::FlatDisk | SurfaceKind::TangentSpherePair => {
                need_b(self.b == 0.0, "needs b = 0")?;
                need_b(self.dim == 3, "needs dim = 3")?;
                self.expect_radii(1)?;
                self.radius(0, "radius")?;
            }
            SurfaceKind::GeodesicSphere => {
                need_b(self.dim == 3, "needs dim = 3")?;
                self.expect_radii(1)?;
                let r = self.radius(0, "radius")?;
                if self.b > 0.0 && r * self.b.sqrt() >= PI {
                    return Err(self.invalid("radius reaches the antipode"));
                }
            }
            SurfaceKind::GreatSphere | SurfaceKind::CliffordTorus => {
                need_b(self.b > 0.0, "needs b > 0")?;
                need_b(self.dim == 3, "needs dim = 3")?;
                self.expect_radii(0)?;
            }
            SurfaceKind::TorusOfRevolution => {
                need_b(self.b == 0.0, "needs b = 0")?;
                need_b(self.dim == 3, "needs dim = 3")?;
                self.expect_radii(2)?;
                let (big, small) = (self.radius(0, "major radius")?, self.radius(1, "minor radius")?);
                need_b(small < big, "needs minor radius < major radius")?;
            }
            SurfaceKind::GeodesicCircle => {
                need_b(self.dim == 2, "needs dim = 2")?;
                self.expect_radii(1)?;
                let r = self.radius(0, "radius")?;
                if self.b > 0.0 && r * self.b.sqrt() >= PI {
                    return Err(self.invalid("radius reaches the antipode"));
                }
            }
        }
        if self.point.len() != self.surface_dim() {
            return Err(self.invalid(&format!("point needs {} parameters", self.surface_dim())));
        }
        for (field, k) in self.known_fields() {
            if k.trim().is_empty() {
                return Err(self.invalid(&format!("known {field} lacks a provenance note")));
            }
        }
        for mp in &self.known.multiplicity_points {
            sp.point(DVector::from_vec(mp.coords.clone())).map_err(|e| self.invalid(&e.to_string()))?;
        }
        Ok(())
    }

    fn known_fields(&self) -> Vec<(&'static str, &str)> {
        let k = &self.known;
        let notes = [
            ("area", k.area.as_ref().map(|x| x.provenance.as_str())),
            ("willmore", k.willmore.as_ref().map(|x| x.provenance.as_str())),
            ("d_ext", k.d_ext.as_ref().map(|x| x.provenance.as_str())),
            ("minimal", k.minimal.as_ref().map(|x| x.provenance.as_str())),
            ("boundary_length", k.boundary_length.as_ref().map(|x| x.provenance.as_str())),
        ];
        let mut out: Vec<_> = notes.into_iter().filter_map(|(n, p)| p.map(|p| (n, p))).collect();
        out.extend(k.multiplicity_points.iter().map(|mp| ("multiplicity_points", mp.provenance.as_str())));
        out
    }

    /// The immersions making up the surface.
    pub fn sources(&self) -> Result<Vec<Arc<dyn Immersion>>> {
        self.validate()?;
        let sp = self.space()?;
        let r0 = self.radii.first().copied().unwrap_or(0.0);
        Ok(match self.kind {
            SurfaceKind::RoundSphere | SurfaceKind::GeodesicSphere => vec![Arc::new(GeodesicSphere::new(sp, r0)?)],
            SurfaceKind::GreatSphere => vec![Arc::new(GeodesicSphere::new(sp, PI / (2.0 * self.b.sqrt()))?)],
            SurfaceKind::CliffordTorus => vec![Arc::new(CliffordTorus::new(sp)?)],
            SurfaceKind::TorusOfRevolution => vec![Arc::new(TorusOfRevolution::new(sp, self.radii[0], self.radii[1])?)],
            SurfaceKind::FlatDisk => vec![Arc::new(GeodesicDisk::new(sp, r0)?)],
            SurfaceKind::GeodesicCircle => vec![Arc::new(GeodesicCircle::new(sp, r0)?)],
            SurfaceKind::TangentSpherePair => {
                // poles along e3 keep the contact point on the equators
                let e = sp.origin_tangent_basis();
                let frame = vec![e[2].clone(), e[0].clone(), e[1].clone()];
                let far = sp.point(DVector::from_vec(vec![2.0 * r0, 0.0, 0.0]))?;
                vec![
                    Arc::new(GeodesicSphere::at(sp, &sp.origin(), frame.clone(), r0)?),
                    Arc::new(GeodesicSphere::at(sp, &far, frame, r0)?),
                ]
            }
        })
    }

    /// Deterministic sample at `n` nodes per axis (with the `n / 2` companion).
    pub fn build(&self, n: usize) -> Result<BuiltSurface> {
        let sources = self.sources()?;
        let sp = self.space()?;
        let x = sources[0].eval(&self.point);
        let point = sp.point(x)?;
        let hints = self
            .known
            .multiplicity_points
            .iter()
            .map(|mp| (DVector::from_vec(mp.coords.clone()), mp.multiplicity))
            .collect();
        let varifold = sample_union(sources, &QuadratureSpec::new(n))?.with_multiplicity_hints(hints);
        Ok(BuiltSurface { entry: self.clone(), varifold, point })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    surface: Vec<SurfaceCatalogEntry>,
}

/// Validated catalog, in file order.
#[derive(Debug, Clone)]
pub struct Catalog {
    entries: Vec<SurfaceCatalogEntry>,
}

impl Catalog {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled catalog is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| GeomError::Input(format!("catalog: {e}")))?;
        let mut seen = std::collections::BTreeSet::new();
        for e in &file.surface {
            if !seen.insert(e.name.clone()) {
                return Err(GeomError::Input(format!("catalog: duplicate surface {}", e.name)));
            }
            e.validate()?;
        }
        Ok(Catalog { entries: file.surface })
    }

    pub fn entries(&self) -> &[SurfaceCatalogEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&SurfaceCatalogEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| GeomError::Input(format!("unknown surface {name}; available: {}", self.names().join(", "))))
    }

    pub fn build(&self, name: &str, n: usize) -> Result<BuiltSurface> {
        self.get(name)?.build(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_has_every_kind() {
        let c = Catalog::bundled();
        let kinds: std::collections::BTreeSet<_> = c.entries().iter().map(|e| e.kind).collect();
        assert_eq!(kinds.len(), 8);
        assert!(c.entries().len() >= 9);
    }

    #[test]
    fn round_sphere_weight() {
        let s = Catalog::bundled().build("round_sphere", 64).unwrap();
        assert!((s.varifold.area() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn flat_disk_boundary_weight() {
        let s = Catalog::bundled().build("flat_disk", 32).unwrap();
        assert!((s.varifold.boundary_length() - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn unknown_name_lists_available() {
        let err = Catalog::bundled().build("klein_bottle", 16).unwrap_err().to_string();
        assert!(err.contains("round_sphere") && err.contains("geodesic_circle"), "{err}");
    }

    #[test]
    fn known_values_match_samples() {
        let c = Catalog::bundled();
        for e in c.entries() {
            let s = e.build(64).unwrap();
            let v = &s.varifold;
            let sp = v.space();
            if let Some(a) = &e.known.area {
                assert!((v.area() - a.value).abs() < 1e-8 * a.value, "{} area {}", e.name, v.area());
            }
            if let Some(w) = &e.known.willmore {
                let got = v.willmore_energy() + e.b * v.area();
                assert!((got - w.value).abs() < 1e-6 * w.value.max(1.0), "{} willmore {got}", e.name);
            }
            if let Some(d) = &e.known.d_ext {
                let est = v.extrinsic_diameter();
                assert!(est.value <= d.value + 1e-9 && d.value <= est.value + est.gap, "{} {est:?}", e.name);
            }
            if let Some(mp) = e.known.minimal.as_ref().filter(|m| m.value) {
                let worst = v.atoms().iter().map(|a| sp.norm(&a.h)).fold(0.0, f64::max);
                assert!(worst < 1e-8, "{} {} |H| = {worst}", e.name, mp.provenance);
            }
            if let Some(l) = &e.known.boundary_length {
                assert!((v.boundary_length() - l.value).abs() < 1e-10);
            }
            assert_eq!(v.multiplicity_hints().len(), e.known.multiplicity_points.len());
        }
    }

    #[test]
    fn builds_are_bit_identical() {
        let c = Catalog::bundled();
        let dump = |n| {
            let mut out = Vec::new();
            c.build("torus_of_revolution", n).unwrap().varifold.write_csv(&mut out).unwrap();
            out
        };
        assert_eq!(dump(16), dump(16));
    }

    #[test]
    fn rejects_bad_entries() {
        let base = r#"[[surface]]
name = "s"
kind = "round_sphere"
b = 0.0
radii = [1.0]
point = [1.0, 0.0]
"#;
        assert!(Catalog::from_toml(base).is_ok());
        assert!(Catalog::from_toml(&base.replace("b = 0.0", "b = 1.0")).is_err());
        assert!(Catalog::from_toml(&base.replace("[1.0]", "[-1.0]")).is_err());
        assert!(Catalog::from_toml(&base.replace("[1.0, 0.0]", "[1.0]")).is_err());
        let no_note = format!("{base}known.area = {{ value = 1.0, provenance = \"\" }}\n");
        assert!(Catalog::from_toml(&no_note).is_err());
        assert!(Catalog::from_toml(&format!("{base}{base}")).is_err());
    }
}
