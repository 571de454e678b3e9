//! Distances on the tangent bundle.
//!
//! On flat space the Sasaki metric is the Euclidean metric of `R^{2n}`, so
//! the distance is exact. On S² the exact Sasaki geodesic distance has no
//! closed form; the transport surrogate combines the great-circle base
//! distance with the fiber gap after parallel transport. Both agree with
//! the Sasaki distance on single fibers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, TangentPoint};
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    FlatProduct,
    TransportSurrogate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TangentMetric {
    manifold: Manifold,
    mode: MetricMode,
}

impl TangentMetric {
    pub fn new(manifold: Manifold, mode: MetricMode) -> Result<Self> {
        if mode == MetricMode::FlatProduct && !manifold.is_flat() {
            return Err(Error::Domain("the flat product metric needs a flat base".into()));
        }
        Ok(TangentMetric { manifold, mode })
    }

    /// Flat product on flat bases, transport surrogate otherwise.
    pub fn default_for(manifold: Manifold) -> Self {
        let mode = if manifold.is_flat() { MetricMode::FlatProduct } else { MetricMode::TransportSurrogate };
        TangentMetric { manifold, mode }
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    pub fn distance(&self, p: &TangentPoint, q: &TangentPoint) -> Result<f64> {
        p.validate(&self.manifold)?;
        q.validate(&self.manifold)?;
        self.distance_unchecked(p, q)
    }

    /// Distance without tangent-space validation; used on integrator output,
    /// which can carry rounding-level constraint drift.
    pub(crate) fn distance_unchecked(&self, p: &TangentPoint, q: &TangentPoint) -> Result<f64> {
        if p.x == q.x {
            return Ok((&q.v - &p.v).norm());
        }
        match self.mode {
            MetricMode::FlatProduct => {
                let dx = (&q.x - &p.x).norm_squared();
                let dv = (&q.v - &p.v).norm_squared();
                Ok((dx + dv).sqrt())
            }
            MetricMode::TransportSurrogate => {
                let base = self.manifold.distance_unchecked(&p.x, &q.x);
                // Transport the vector of whichever endpoint sorts first so the
                // result is symmetric in (p, q) to rounding.
                let (a, b) = if p.x.as_slice() <= q.x.as_slice() { (p, q) } else { (q, p) };
                let moved = self.manifold.transport_unchecked(&a.x, &b.x, &a.v)?;
                let fiber = (&b.v - moved).norm();
                Ok(base.hypot(fiber))
            }
        }
    }

    /// Base point distance `d_g(π p, π q)`.
    pub fn base_distance(&self, p: &TangentPoint, q: &TangentPoint) -> f64 {
        self.manifold.distance_unchecked(&p.x, &q.x)
    }

    /// Carries `v ∈ T_x M` to `T_y M`: identity on flat space, parallel
    /// transport on S².
    pub fn carry(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        self.manifold.transport_unchecked(x, y, v)
    }
}

/// Moves `p.v` toward `target_v` along the straight fiber segment by at most
/// `step`, landing exactly on `target_v` when it is within reach.
pub fn fiber_segment_point(p: &TangentPoint, target_v: &Vector, step: f64) -> Result<TangentPoint> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("fiber step must be positive, got {step}")));
    }
    let gap = target_v - &p.v;
    let len = gap.norm();
    if len <= step {
        return Ok(TangentPoint::new(p.x.clone(), target_v.clone()));
    }
    Ok(TangentPoint::new(p.x.clone(), &p.v + gap * (step / len)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn flat_distance_examples() {
        let metric = TangentMetric::default_for(Manifold::flat(2));
        let p = TangentPoint::from_slices(&[0., 0.], &[1., 0.]);
        let q = TangentPoint::from_slices(&[3., 4.], &[1., 0.]);
        assert_eq!(metric.distance(&p, &q).unwrap(), 5.0);
        let r = TangentPoint::from_slices(&[0., 0.], &[4., -3.]);
        assert_eq!(metric.distance(&p, &r).unwrap(), (v(&[4., -3.]) - v(&[1., 0.])).norm());
        assert_eq!(metric.distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn sphere_same_fiber_is_vector_gap() {
        let metric = TangentMetric::default_for(Manifold::Sphere2);
        let p = TangentPoint::from_slices(&[0., 0., 1.], &[1., 0., 0.]);
        let q = TangentPoint::from_slices(&[0., 0., 1.], &[0., 2., 0.]);
        assert_eq!(metric.distance(&p, &q).unwrap(), 5f64.sqrt());
    }

    #[test]
    fn flat_product_rejects_sphere() {
        assert!(TangentMetric::new(Manifold::Sphere2, MetricMode::FlatProduct).is_err());
        assert!(TangentMetric::new(Manifold::flat(3), MetricMode::TransportSurrogate).is_ok());
    }

    #[test]
    fn surrogate_rejects_antipodes() {
        let metric = TangentMetric::default_for(Manifold::Sphere2);
        let p = TangentPoint::from_slices(&[0., 0., 1.], &[1., 0., 0.]);
        let q = TangentPoint::from_slices(&[0., 0., -1.], &[1., 0., 0.]);
        assert!(matches!(metric.distance(&p, &q), Err(Error::NonUniqueGeodesic)));
    }

    fn random_sphere_tangent(rng: &mut ChaCha8Rng) -> TangentPoint {
        let x = loop {
            let c = v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            if c.norm() > 0.1 {
                break c.normalize();
            }
        };
        let w = v(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let t = Manifold::Sphere2.project_tangent(&x, &w).unwrap();
        TangentPoint::new(x, t)
    }

    #[test]
    fn surrogate_is_symmetric_and_dominates_base_distance() {
        let metric = TangentMetric::default_for(Manifold::Sphere2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = random_sphere_tangent(&mut rng);
            let q = random_sphere_tangent(&mut rng);
            if p.x.dot(&q.x) < -0.999 {
                continue;
            }
            let d = metric.distance(&p, &q).unwrap();
            assert!((d - metric.distance(&q, &p).unwrap()).abs() <= 1e-12);
            assert!(metric.base_distance(&p, &q) <= d);
            assert_eq!(metric.distance(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn flat_product_is_a_metric() {
        let metric = TangentMetric::default_for(Manifold::flat(3));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = || {
            TangentPoint::new(
                Vector::from_fn(3, |_, _| rng.random_range(-5.0..5.0)),
                Vector::from_fn(3, |_, _| rng.random_range(-5.0..5.0)),
            )
        };
        for _ in 0..1000 {
            let (a, b, c) = (draw(), draw(), draw());
            let ab = metric.distance(&a, &b).unwrap();
            assert!((ab - metric.distance(&b, &a).unwrap()).abs() <= 1e-9);
            assert!(metric.distance(&a, &c).unwrap() <= ab + metric.distance(&b, &c).unwrap() + 1e-9);
            assert!(metric.base_distance(&a, &b) <= ab);
        }
    }

    #[test]
    fn fiber_segment_examples() {
        let p = TangentPoint::from_slices(&[0., 0.], &[0., 0.]);
        let q = fiber_segment_point(&p, &v(&[1., 0.]), 0.25).unwrap();
        assert_eq!(q, TangentPoint::from_slices(&[0., 0.], &[0.25, 0.]));
        let end = fiber_segment_point(&p, &v(&[1., 0.]), 3.0).unwrap();
        assert_eq!(end.v, v(&[1., 0.]));
        let target = v(&[3., 4.]);
        let mid = fiber_segment_point(&p, &target, 2.5).unwrap();
        assert_eq!(mid.v, v(&[1.5, 2.0]));
        assert!(fiber_segment_point(&p, &target, 0.0).is_err());
        assert!(fiber_segment_point(&p, &target, -1.0).is_err());
    }

    #[test]
    fn fiber_step_reduces_gap_by_step() {
        let metric = TangentMetric::default_for(Manifold::flat(2));
        let p = TangentPoint::from_slices(&[1., 2.], &[-1., 0.5]);
        let target = v(&[2., -3.]);
        let goal = TangentPoint::new(p.x.clone(), target.clone());
        let before = metric.distance(&p, &goal).unwrap();
        let q = fiber_segment_point(&p, &target, 0.3).unwrap();
        let after = metric.distance(&q, &goal).unwrap();
        assert!((before - after - 0.3).abs() <= 1e-12);
        assert!((metric.distance(&p, &q).unwrap() - 0.3).abs() <= 1e-12);
        assert_eq!(q.x, p.x);
    }
}
