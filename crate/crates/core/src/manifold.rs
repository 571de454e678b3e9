//! Base manifolds embedded in an ambient Euclidean space.
//!
//! Points and tangent vectors are stored in ambient coordinates. Flat space
//! is its own ambient space; the unit sphere S² sits in R³ with tangent
//! spaces `T_x S² = x^⊥`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Tolerance for manifold and tangent-space membership.
pub const POINT_TOL: f64 = 1e-9;
/// Angular distance from π below which two sphere points count as antipodal.
pub const ANGLE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    Flat { dim: usize },
    Sphere2,
}

impl Manifold {
    pub fn flat(dim: usize) -> Self {
        assert!(dim >= 1, "flat space needs dimension >= 1");
        Manifold::Flat { dim }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Flat { dim } => *dim,
            Manifold::Sphere2 => 3,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Flat { dim } => *dim,
            Manifold::Sphere2 => 2,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Manifold::Flat { .. })
    }

    fn check_dim(&self, w: &Vector) -> Result<()> {
        if w.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Constraint violation of `x`; zero for flat space.
    pub fn constraint_violation(&self, x: &Vector) -> f64 {
        match self {
            Manifold::Flat { .. } => 0.0,
            Manifold::Sphere2 => (x.norm() - 1.0).abs(),
        }
    }

    pub fn check_point(&self, x: &Vector) -> Result<()> {
        self.check_dim(x)?;
        let deviation = self.constraint_violation(x);
        if deviation > POINT_TOL || !deviation.is_finite() {
            return Err(Error::OffManifold { deviation });
        }
        Ok(())
    }

    pub fn check_tangent(&self, x: &Vector, v: &Vector) -> Result<()> {
        self.check_point(x)?;
        self.check_dim(v)?;
        if let Manifold::Sphere2 = self {
            let deviation = x.dot(v).abs();
            if deviation > POINT_TOL {
                return Err(Error::NotTangent { deviation });
            }
        }
        Ok(())
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent(&self, x: &Vector, w: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        self.check_dim(w)?;
        Ok(self.project_unchecked(x, w))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector, w: &Vector) -> Vector {
        match self {
            Manifold::Flat { .. } => w.clone(),
            Manifold::Sphere2 => w - x * x.dot(w),
        }
    }

    /// Matrix of the tangent projection at `x`.
    pub fn tangent_projector(&self, x: &Vector) -> Matrix {
        let n = self.ambient_dim();
        match self {
            Manifold::Flat { .. } => Matrix::identity(n, n),
            Manifold::Sphere2 => Matrix::identity(n, n) - x * x.transpose(),
        }
    }

    /// Orthonormal basis of `T_x M` as matrix columns.
    pub fn tangent_basis(&self, x: &Vector) -> Matrix {
        match self {
            Manifold::Flat { dim } => Matrix::identity(*dim, *dim),
            Manifold::Sphere2 => {
                // Pick the coordinate axis least aligned with x as a seed.
                let (axis, _) = x
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.abs()))
                    .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
                let mut seed = Vector::zeros(3);
                seed[axis] = 1.0;
                let e1 = (&seed - x * x.dot(&seed)).normalize();
                let e2 = x.cross(&e1);
                Matrix::from_columns(&[e1, e2])
            }
        }
    }

    pub fn retract(&self, x: &Vector, step: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        self.check_dim(step)?;
        self.retract_unchecked(x + step)
    }

    /// Maps an ambient point back onto the manifold.
    pub(crate) fn retract_unchecked(&self, y: Vector) -> Result<Vector> {
        match self {
            Manifold::Flat { .. } => Ok(y),
            Manifold::Sphere2 => {
                let norm = y.norm();
                if norm < POINT_TOL || !norm.is_finite() {
                    return Err(Error::DegenerateStep { norm });
                }
                Ok(y / norm)
            }
        }
    }

    /// Geodesic distance: Euclidean on flat space, great-circle on S².
    pub fn base_distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    pub(crate) fn distance_unchecked(&self, x: &Vector, y: &Vector) -> f64 {
        match self {
            Manifold::Flat { .. } => (y - x).norm(),
            Manifold::Sphere2 => {
                // atan2 form is accurate for nearby points where acos loses digits.
                let cross = x.cross(y);
                cross.norm().atan2(x.dot(y).clamp(-1.0, 1.0))
            }
        }
    }

    /// Parallel transport of `v ∈ T_x M` to `T_y M` along the minimizing geodesic.
    ///
    /// On S² this is the rotation in span{x, y} carrying x to y, which fixes
    /// the orthogonal complement of that plane.
    pub fn parallel_transport(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        self.check_tangent(x, v)?;
        self.check_point(y)?;
        self.transport_unchecked(x, y, v)
    }

    pub(crate) fn transport_unchecked(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        match self {
            Manifold::Flat { .. } => Ok(v.clone()),
            Manifold::Sphere2 => {
                let cos = x.dot(y);
                if self.distance_unchecked(x, y) > std::f64::consts::PI - ANGLE_TOL {
                    return Err(Error::NonUniqueGeodesic);
                }
                let sum = x + y;
                Ok(v - sum * (y.dot(v) / (1.0 + cos)))
            }
        }
    }
}

/// A point `(x, v)` of the tangent bundle, in ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TangentPointRepr", into = "TangentPointRepr")]
pub struct TangentPoint {
    pub x: Vector,
    pub v: Vector,
}

#[derive(Serialize, Deserialize)]
struct TangentPointRepr {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl From<TangentPointRepr> for TangentPoint {
    fn from(r: TangentPointRepr) -> Self {
        TangentPoint::from_slices(&r.x, &r.v)
    }
}

impl From<TangentPoint> for TangentPointRepr {
    fn from(p: TangentPoint) -> Self {
        TangentPointRepr { x: p.x.as_slice().to_vec(), v: p.v.as_slice().to_vec() }
    }
}

impl TangentPoint {
    pub fn new(x: Vector, v: Vector) -> Self {
        TangentPoint { x, v }
    }

    pub fn from_slices(x: &[f64], v: &[f64]) -> Self {
        TangentPoint {
            x: Vector::from_column_slice(x),
            v: Vector::from_column_slice(v),
        }
    }

    pub fn zero_section(x: Vector) -> Self {
        let n = x.len();
        TangentPoint { x, v: Vector::zeros(n) }
    }

    pub fn validate(&self, m: &Manifold) -> Result<()> {
        m.check_tangent(&self.x, &self.v)
    }

    /// Stacks `(x, v)` into one vector of length `2N`.
    pub fn stacked(&self) -> Vector {
        let n = self.x.len();
        Vector::from_fn(2 * n, |i, _| if i < n { self.x[i] } else { self.v[i - n] })
    }

    pub fn from_stacked(p: &Vector) -> Self {
        let n = p.len() / 2;
        TangentPoint {
            x: p.rows(0, n).into_owned(),
            v: p.rows(n, n).into_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn unit(a: f64, b: f64, c: f64) -> Vector {
        v(&[a, b, c]).normalize()
    }

    #[test]
    fn projection_examples() {
        let flat = Manifold::flat(2);
        assert_eq!(flat.project_tangent(&v(&[0., 0.]), &v(&[3., 4.])).unwrap(), v(&[3., 4.]));
        let s = Manifold::Sphere2;
        assert_eq!(
            s.project_tangent(&v(&[1., 0., 0.]), &v(&[5., 1., 2.])).unwrap(),
            v(&[0., 1., 2.])
        );
        assert_eq!(
            s.project_tangent(&v(&[0., 0., 1.]), &v(&[0., 0., 7.])).unwrap(),
            v(&[0., 0., 0.])
        );
    }

    #[test]
    fn projection_rejects_off_manifold() {
        let s = Manifold::Sphere2;
        let err = s.project_tangent(&v(&[1.1, 0., 0.]), &v(&[0., 1., 0.])).unwrap_err();
        assert!(matches!(err, Error::OffManifold { .. }));
    }

    #[test]
    fn retraction_examples() {
        let flat = Manifold::flat(3);
        assert_eq!(
            flat.retract(&v(&[1., 2., 3.]), &v(&[1., 0., 0.])).unwrap(),
            v(&[2., 2., 3.])
        );
        let s = Manifold::Sphere2;
        assert_eq!(s.retract(&v(&[1., 0., 0.]), &v(&[0., 0., 0.])).unwrap(), v(&[1., 0., 0.]));
        let r = s.retract(&v(&[1., 0., 0.]), &v(&[0., 1., 0.])).unwrap();
        assert_relative_eq!(r, v(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.]), epsilon = 1e-15);
        let err = s.retract(&v(&[1., 0., 0.]), &v(&[-1., 0., 0.])).unwrap_err();
        assert!(matches!(err, Error::DegenerateStep { .. }));
    }

    #[test]
    fn distance_examples() {
        let flat = Manifold::flat(2);
        assert_eq!(flat.base_distance(&v(&[0., 0.]), &v(&[3., 4.])).unwrap(), 5.0);
        let s = Manifold::Sphere2;
        assert_relative_eq!(
            s.base_distance(&v(&[1., 0., 0.]), &v(&[0., 1., 0.])).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let x = unit(0.3, -0.2, 0.9);
        assert_eq!(s.base_distance(&x, &x).unwrap(), 0.0);
        assert!(s.base_distance(&v(&[2., 0., 0.]), &x).is_err());
    }

    #[test]
    fn transport_examples() {
        let flat = Manifold::flat(2);
        assert_eq!(
            flat.parallel_transport(&v(&[0., 0.]), &v(&[5., -1.]), &v(&[1., 2.])).unwrap(),
            v(&[1., 2.])
        );
        let s = Manifold::Sphere2;
        let (x, y) = (v(&[1., 0., 0.]), v(&[0., 1., 0.]));
        assert_relative_eq!(
            s.parallel_transport(&x, &y, &v(&[0., 0., 1.])).unwrap(),
            v(&[0., 0., 1.]),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            s.parallel_transport(&x, &y, &v(&[0., 1., 0.])).unwrap(),
            v(&[-1., 0., 0.]),
            epsilon = 1e-15
        );
        let err = s.parallel_transport(&x, &(-&x), &v(&[0., 1., 0.])).unwrap_err();
        assert!(matches!(err, Error::NonUniqueGeodesic));
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let s = Manifold::Sphere2;
        for x in [unit(1., 0., 0.), unit(0.2, -0.7, 0.4), unit(0., 0., -1.)] {
            let b = s.tangent_basis(&x);
            assert_relative_eq!(b.transpose() * &b, Matrix::identity(2, 2), epsilon = 1e-14);
            assert!((x.transpose() * &b).norm() < 1e-14);
        }
    }

    fn sphere_point() -> impl Strategy<Value = Vector> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-2)
            .prop_map(|(a, b, c)| unit(a, b, c))
    }

    proptest! {
        #[test]
        fn projection_is_linear_idempotent_contraction(
            x in sphere_point(),
            a in prop::array::uniform3(-5.0..5.0f64),
            b in prop::array::uniform3(-5.0..5.0f64),
            s in -3.0..3.0f64,
        ) {
            let m = Manifold::Sphere2;
            let (wa, wb) = (v(&a), v(&b));
            let pa = m.project_tangent(&x, &wa).unwrap();
            let pb = m.project_tangent(&x, &wb).unwrap();
            let lin = m.project_tangent(&x, &(&wa * s + &wb)).unwrap();
            prop_assert!((lin - (&pa * s + &pb)).norm() <= 1e-12 * (1.0 + wa.norm() * s.abs() + wb.norm()));
            prop_assert!((m.project_tangent(&x, &pa).unwrap() - &pa).norm() <= 1e-12 * (1.0 + wa.norm()));
            prop_assert!(pa.norm() <= wa.norm() + 1e-12);
        }

        #[test]
        fn transport_round_trip_is_identity(
            x in sphere_point(), y in sphere_point(), w in prop::array::uniform3(-2.0..2.0f64)
        ) {
            let m = Manifold::Sphere2;
            prop_assume!(x.dot(&y) > -0.99);
            let tv = m.project_tangent(&x, &v(&w)).unwrap();
            let there = m.parallel_transport(&x, &y, &tv).unwrap();
            prop_assert!((there.norm() - tv.norm()).abs() <= 1e-9);
            prop_assert!(y.dot(&there).abs() <= 1e-9);
            let back = m.parallel_transport(&y, &x, &there).unwrap();
            prop_assert!((back - tv).norm() <= 1e-9);
        }
    }

    #[test]
    fn sphere_distance_is_a_metric_on_random_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = Manifold::Sphere2;
        let mut draw = || loop {
            let p = v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            if p.norm() > 0.1 {
                return p.normalize();
            }
        };
        for _ in 0..1000 {
            let (a, b, c) = (draw(), draw(), draw());
            let ab = m.base_distance(&a, &b).unwrap();
            let ba = m.base_distance(&b, &a).unwrap();
            let bc = m.base_distance(&b, &c).unwrap();
            let ac = m.base_distance(&a, &c).unwrap();
            assert!((ab - ba).abs() <= 1e-9);
            assert!(ac <= ab + bc + 1e-9);
        }
    }
}
