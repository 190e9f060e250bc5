//! Shared fixtures for the criterion benches.

use vmono::catalog::{BuiltSurface, Catalog};
use vmono::{ModelSpace, Point, TangentVector};

/// A bundled catalog surface sampled at resolution `n`.
pub fn surface(name: &str, n: usize) -> BuiltSurface {
    Catalog::bundled().build(name, n).unwrap_or_else(|e| panic!("{name} at n = {n}: {e}"))
}

/// `count` points spread along a geodesic spiral from the origin, inside the injectivity radius.
pub fn points(space: &ModelSpace, count: usize) -> Vec<Point> {
    let basis = space.origin_tangent_basis();
    (0..count)
        .map(|k| {
            let t = k as f64 / count as f64;
            let mut v = &basis[0] * (0.9 * t * (7.0 * t).cos());
            v += &basis[1] * (0.9 * t * (7.0 * t).sin());
            if let Some(e) = basis.get(2) {
                v += e * (0.3 * t);
            }
            space.exp(&TangentVector { base: space.origin(), components: v }).expect("inside the injectivity radius")
        })
        .collect()
}
