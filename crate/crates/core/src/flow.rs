//! Affine control systems, piecewise-constant controls, and fixed-step
//! integration of the base flow and of its complete lift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::manifold::{Manifold, TangentPoint};
use crate::Vector;

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Pre-retraction constraint drift that aborts an integration on S².
pub const MAX_STEP_DRIFT: f64 = 1e-6;

/// Relative time tolerance below which a segment remnant counts as empty.
const TIME_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub value: Vec<f64>,
}

/// Piecewise-constant control `u: [0, T] -> R^m`, right-continuous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    channels: usize,
    segments: Vec<Segment>,
}

impl ControlSignal {
    pub fn new(channels: usize, segments: Vec<Segment>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::Domain(format!("segment {i} has non-positive duration {}", s.duration)));
            }
            if s.value.len() != channels {
                return Err(Error::DimensionMismatch { expected: channels, got: s.value.len() });
            }
            if s.value.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain(format!("segment {i} has a non-finite value")));
            }
        }
        Ok(ControlSignal { channels, segments })
    }

    pub fn empty(channels: usize) -> Self {
        ControlSignal { channels, segments: Vec::new() }
    }

    pub fn constant(value: &[f64], duration: f64) -> Self {
        let mut sig = Self::empty(value.len());
        sig.push(duration, value.to_vec());
        sig
    }

    pub fn zero(channels: usize, duration: f64) -> Self {
        Self::constant(&vec![0.0; channels], duration)
    }

    /// Appends a segment; non-positive durations are ignored.
    pub fn push(&mut self, duration: f64, value: Vec<f64>) {
        assert_eq!(value.len(), self.channels, "control value has wrong channel count");
        if duration > 0.0 {
            self.segments.push(Segment { duration, value });
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn eps(&self) -> f64 {
        TIME_EPS * self.total_duration().max(1.0)
    }

    /// `u(t)`. Times past the end return the final value; the empty signal is zero.
    pub fn eval(&self, t: f64) -> Vector {
        let mut start = 0.0;
        for s in &self.segments {
            if t < start + s.duration {
                return Vector::from_column_slice(&s.value);
            }
            start += s.duration;
        }
        match self.segments.last() {
            Some(s) => Vector::from_column_slice(&s.value),
            None => Vector::zeros(self.channels),
        }
    }

    /// Restriction to `[a, b]`, re-based to start at zero.
    pub fn slice(&self, a: f64, b: f64) -> Result<Self> {
        let total = self.total_duration();
        let eps = self.eps();
        if !(a >= -eps && b >= a && b <= total + eps) {
            return Err(Error::Domain(format!("slice [{a}, {b}] outside [0, {total}]")));
        }
        let mut out = Self::empty(self.channels);
        let mut start = 0.0;
        for s in &self.segments {
            let end = start + s.duration;
            let lo = start.max(a);
            let hi = end.min(b);
            if hi - lo > eps {
                // Keep whole segments bit-exact.
                let d = if lo == start && hi == end { s.duration } else { hi - lo };
                out.push(d, s.value.clone());
            }
            start = end;
        }
        Ok(out)
    }

    /// The concatenation `v ∧_s u`: follows `self` up to time `s`, then `u`.
    pub fn concat(&self, s: f64, u: &ControlSignal) -> Result<Self> {
        if self.channels != u.channels {
            return Err(Error::DimensionMismatch { expected: self.channels, got: u.channels });
        }
        let total = self.total_duration();
        if !(0.0..=total + self.eps()).contains(&s) {
            return Err(Error::Domain(format!("concatenation time {s} outside [0, {total}]")));
        }
        let mut out = self.slice(0.0, s.min(total))?;
        out.segments.extend(u.segments.iter().cloned());
        Ok(out)
    }

    /// The time shift `Θ_s`: `(Θ_s u)(a) = u(a + s)`.
    pub fn shift(&self, s: f64) -> Result<Self> {
        let total = self.total_duration();
        if !(0.0..=total + self.eps()).contains(&s) {
            return Err(Error::Domain(format!("shift {s} outside [0, {total}]")));
        }
        self.slice(s, total)
    }

    /// Value of `v ∧_s u` at time `a` taken literally from its definition,
    /// `v(a)` for `a ≤ s` and `u(a − s)` otherwise.
    pub fn concat_value_at(v: &ControlSignal, s: f64, u: &ControlSignal, a: f64) -> Vector {
        if a <= s {
            v.eval(a)
        } else {
            u.eval(a - s)
        }
    }

    pub fn check_bounds(&self, bounds: &[(f64, f64)]) -> Result<()> {
        if bounds.len() != self.channels {
            return Err(Error::DimensionMismatch { expected: bounds.len(), got: self.channels });
        }
        for (k, s) in self.segments.iter().enumerate() {
            for (i, (&c, &(lo, hi))) in s.value.iter().zip(bounds).enumerate() {
                if c < lo - 1e-12 || c > hi + 1e-12 {
                    return Err(Error::Domain(format!(
                        "segment {k} channel {i}: value {c} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `dx/dt = X_0(x) + Σ u_i X_i(x)` on a manifold.
#[derive(Clone, Debug)]
pub struct AffineSystem {
    manifold: Manifold,
    drift: VectorField,
    controlled: Vec<VectorField>,
    bounds: Vec<(f64, f64)>,
}

impl AffineSystem {
    pub fn new(
        manifold: Manifold,
        drift: VectorField,
        controlled: Vec<VectorField>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = manifold.ambient_dim();
        if controlled.is_empty() {
            return Err(Error::Domain("an affine system needs at least one controlled field".into()));
        }
        if bounds.len() != controlled.len() {
            return Err(Error::DimensionMismatch { expected: controlled.len(), got: bounds.len() });
        }
        for f in std::iter::once(&drift).chain(&controlled) {
            if f.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: f.dim() });
            }
        }
        if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo <= hi)) {
            return Err(Error::Domain(format!("control bounds for channel {i} are empty")));
        }
        Ok(AffineSystem { manifold, drift, controlled, bounds })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub fn controlled(&self) -> &[VectorField] {
        &self.controlled
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn channels(&self) -> usize {
        self.controlled.len()
    }

    /// `[X_0, X_1, ..., X_m]`.
    pub fn fields(&self) -> Vec<VectorField> {
        std::iter::once(self.drift.clone()).chain(self.controlled.iter().cloned()).collect()
    }

    /// `X_0(x) + Σ u_i X_i(x)`.
    pub fn field_at(&self, x: &Vector, u: &Vector) -> Vector {
        self.controlled
            .iter()
            .zip(u.iter())
            .fold(self.drift.value(x), |acc, (f, &ui)| if ui == 0.0 { acc } else { acc + f.value(x) * ui })
    }

    /// `(J_{X_0}(x) + Σ u_i J_{X_i}(x)) v`.
    pub fn jvp_at(&self, x: &Vector, u: &Vector, v: &Vector) -> Vector {
        self.controlled
            .iter()
            .zip(u.iter())
            .fold(self.drift.jvp(x, v), |acc, (f, &ui)| if ui == 0.0 { acc } else { acc + f.jvp(x, v) * ui })
    }

    /// Largest normal component `|x · X_i(x)|` over the sample points, for
    /// every field of the system. Always zero on flat space.
    pub fn tangency_defect(&self, points: &[Vector]) -> f64 {
        if self.manifold.is_flat() {
            return 0.0;
        }
        points
            .iter()
            .flat_map(|x| {
                std::iter::once(&self.drift)
                    .chain(&self.controlled)
                    .map(move |f| x.dot(&f.value(x)).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn is_driftless(&self) -> bool {
        match self.drift.descriptor() {
            crate::fields::Descriptor::Linear(a) => a.iter().all(|&c| c == 0.0),
            _ => false,
        }
    }
}

/// A sampled solution of the base or lifted system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Fiber components, present for lifted trajectories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fibers: Option<Vec<Vec<f64>>>,
    pub control: ControlSignal,
    /// Largest tangency violation of the fiber component seen before re-projection.
    pub max_constraint_drift: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> Vector {
        Vector::from_column_slice(self.states.last().expect("trajectory is never empty"))
    }

    pub fn final_tangent(&self) -> Option<TangentPoint> {
        let fibers = self.fibers.as_ref()?;
        Some(TangentPoint::from_slices(self.states.last()?, fibers.last()?))
    }

    pub fn state(&self, k: usize) -> Vector {
        Vector::from_column_slice(&self.states[k])
    }

    pub fn fiber(&self, k: usize) -> Option<Vector> {
        self.fibers.as_ref().map(|f| Vector::from_column_slice(&f[k]))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, x1..xN[, v1..vN]`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        if self.fibers.is_some() {
            header.extend((1..=n).map(|i| format!("v{i}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[k])];
            row.extend(self.states[k].iter().map(|c| format!("{c}")));
            if let Some(f) = &self.fibers {
                row.extend(f[k].iter().map(|c| format!("{c}")));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// One RK4 step of the base equation and, when `v` is given, of the
/// variational equation along the same stages. The base arithmetic does not
/// depend on `v`.
fn rk4_step(sys: &AffineSystem, x: &Vector, v: Option<&Vector>, u: &Vector, dt: f64) -> (Vector, Option<Vector>) {
    let half = 0.5 * dt;
    let k1 = sys.field_at(x, u);
    let x2 = x + &k1 * half;
    let k2 = sys.field_at(&x2, u);
    let x3 = x + &k2 * half;
    let k3 = sys.field_at(&x3, u);
    let x4 = x + &k3 * dt;
    let k4 = sys.field_at(&x4, u);
    let x_next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);

    let v_next = v.map(|v| {
        let l1 = sys.jvp_at(x, u, v);
        let l2 = sys.jvp_at(&x2, u, &(v + &l1 * half));
        let l3 = sys.jvp_at(&x3, u, &(v + &l2 * half));
        let l4 = sys.jvp_at(&x4, u, &(v + &l3 * dt));
        v + (l1 + (l2 + l3) * 2.0 + l4) * (dt / 6.0)
    });
    (x_next, v_next)
}

fn integrate(sys: &AffineSystem, x0: &Vector, v0: Option<&Vector>, u: &ControlSignal, h: f64) -> Result<Trajectory> {
    let m = sys.manifold();
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("integrator step must be positive, got {h}")));
    }
    if u.channels() != sys.channels() {
        return Err(Error::DimensionMismatch { expected: sys.channels(), got: u.channels() });
    }
    u.check_bounds(sys.bounds())?;
    match v0 {
        Some(v0) => m.check_tangent(x0, v0)?,
        None => m.check_point(x0)?,
    }

    let mut x = x0.clone();
    let mut v = v0.cloned();
    let mut times = vec![0.0];
    let mut states = vec![x.as_slice().to_vec()];
    let mut fibers = v.as_ref().map(|v| vec![v.as_slice().to_vec()]);
    let mut max_drift: f64 = 0.0;
    let mut t0 = 0.0;

    for seg in u.segments() {
        let steps = ((seg.duration / h) - 1e-9).ceil().max(1.0) as usize;
        let dt = seg.duration / steps as f64;
        let uval = Vector::from_column_slice(&seg.value);
        for k in 1..=steps {
            let t = t0 + dt * k as f64;
            let (xn, vn) = rk4_step(sys, &x, v.as_ref(), &uval, dt);
            if !xn.iter().all(|c| c.is_finite()) {
                return Err(Error::Integration { time: t, reason: "state became non-finite".into() });
            }
            let drift = m.constraint_violation(&xn);
            if drift > MAX_STEP_DRIFT {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("state left the manifold by {drift:.3e}; are the fields tangent?"),
                });
            }
            x = m
                .retract_unchecked(xn)
                .map_err(|e| Error::Integration { time: t, reason: e.to_string() })?;
            if let Some(vn) = vn {
                let normal = if m.is_flat() { 0.0 } else { x.dot(&vn).abs() };
                max_drift = max_drift.max(normal);
                let vp = m.project_unchecked(&x, &vn);
                if let Some(f) = fibers.as_mut() {
                    f.push(vp.as_slice().to_vec());
                }
                v = Some(vp);
            }
            times.push(t);
            states.push(x.as_slice().to_vec());
        }
        t0 += seg.duration;
        // Pin the grid node at the segment boundary to the exact boundary time.
        if let Some(last) = times.last_mut() {
            *last = t0;
        }
    }

    Ok(Trajectory {
        times,
        states,
        fibers,
        control: u.clone(),
        max_constraint_drift: max_drift,
    })
}

/// Integrates `dx/dt = X_0(x) + Σ u_i(t) X_i(x)` with classical RK4. Each
/// control segment is split into equal steps no longer than `h`.
pub fn integrate_base(sys: &AffineSystem, x0: &Vector, u: &ControlSignal, h: f64) -> Result<Trajectory> {
    integrate(sys, x0, None, u, h)
}

/// Integrates the complete lift: the base equation together with
/// `dv/dt = (J_{X_0}(x) + Σ u_i J_{X_i}(x)) v` on the same grid.
pub fn integrate_lifted(sys: &AffineSystem, p0: &TangentPoint, u: &ControlSignal, h: f64) -> Result<Trajectory> {
    integrate(sys, &p0.x, Some(&p0.v), u, h)
}

/// Compares the fiber of the lifted flow with a central difference of the
/// base flow in the direction `v0`. Returns the max deviation over the grid.
pub fn check_flow_formula(sys: &AffineSystem, x0: &Vector, v0: &Vector, u: &ControlSignal, h: f64) -> Result<f64> {
    let m = sys.manifold();
    let lifted = integrate_lifted(sys, &TangentPoint::new(x0.clone(), v0.clone()), u, h)?;
    let delta = 1e-5 * (1.0 + x0.norm()) / (1.0 + v0.norm());
    let xp = m.retract_unchecked(x0 + v0 * delta)?;
    let xm = m.retract_unchecked(x0 - v0 * delta)?;
    let plus = integrate_base(sys, &xp, u, h)?;
    let minus = integrate_base(sys, &xm, u, h)?;
    let fibers = lifted.fibers.as_ref().expect("lifted trajectory has fibers");
    let mut worst: f64 = 0.0;
    for k in 0..lifted.len() {
        let fd = (plus.state(k) - minus.state(k)) / (2.0 * delta);
        worst = worst.max((fd - Vector::from_column_slice(&fibers[k])).norm());
    }
    Ok(worst)
}

/// Deviations `(base, fiber)` between the two sides of
///
/// `φ^c_{t,u}(φ_{s,v}(x), F_{v(s)}(φ_{s,v}(x))) = (φ_{t+s,w}(x), F_{w(t+s)}(φ_{t+s,w}(x)))`
///
/// with `w = v ∧_s u` and `F_c = X_0 + Σ c_i X_i`. The left side is a lifted
/// integration, the right side a base integration under `w` followed by a
/// field evaluation.
///
/// The fiber identity holds when `u` is constant on `[0, t]` with the value
/// `v(s)`; for other controls the fiber deviation is generally nonzero.
#[allow(clippy::too_many_arguments)]
pub fn check_invariance(
    sys: &AffineSystem,
    x: &Vector,
    s: f64,
    v_sig: &ControlSignal,
    t: f64,
    u_sig: &ControlSignal,
    h: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=u_sig.total_duration() + TIME_EPS).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside the duration of u")));
    }
    let v_head = v_sig.slice(0.0, s)?;
    let u_head = u_sig.slice(0.0, t)?;

    let y = integrate_base(sys, x, &v_head, h)?.final_state();
    let start = TangentPoint::new(y.clone(), sys.field_at(&y, &v_sig.eval(s)));
    let lhs = integrate_lifted(sys, &start, &u_head, h)?
        .final_tangent()
        .expect("lifted trajectory has fibers");

    let w = v_sig.concat(s, &u_head)?;
    let z = integrate_base(sys, x, &w, h)?.final_state();
    let rhs_v = sys.field_at(&z, &ControlSignal::concat_value_at(v_sig, s, u_sig, t + s));
    Ok(((lhs.x - z).norm(), (lhs.v - rhs_v).norm()))
}
