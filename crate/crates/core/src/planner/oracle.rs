//! Steering oracles: constructive witnesses of base controllability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::Descriptor;
use crate::flow::{integrate_base, AffineSystem, ControlSignal};
use crate::manifold::Manifold;
use crate::{Matrix, Vector};

/// Number of piecewise-constant segments of a Gramian steering control.
pub const GRAMIAN_SEGMENTS: usize = 64;
pub const GRAMIAN_STEER_TOL: f64 = 1e-6;
pub const ROTATION_STEER_TOL: f64 = 1e-6;
pub const SEARCH_STEER_TOL: f64 = 1e-3;
const GRAMIAN_CONDITION_FLOOR: f64 = 1e-10;
/// How many times the Gramian horizon may double to respect control bounds.
const MAX_HORIZON_DOUBLINGS: usize = 6;

#[derive(Clone, Debug)]
pub struct SteeringPlan {
    pub duration: f64,
    pub control: ControlSignal,
}

impl SteeringPlan {
    pub fn empty(channels: usize) -> Self {
        SteeringPlan { duration: 0.0, control: ControlSignal::empty(channels) }
    }

    pub fn then(&self, next: &SteeringPlan) -> SteeringPlan {
        let control = self
            .control
            .concat(self.control.total_duration(), &next.control)
            .expect("concatenation at the end of a signal is always in range");
        SteeringPlan { duration: control.total_duration(), control }
    }
}

#[derive(Clone, Debug)]
struct RotationGenerator {
    channel: usize,
    axis: Vector,
    /// Angular speed per unit control.
    rate: f64,
}

#[derive(Clone, Debug)]
pub enum SteeringOracle {
    /// Minimum-energy steering of `dx/dt = A x + B u`.
    LinearGramian { a: Matrix, b: Matrix, horizon: f64 },
    /// Driftless S² system with two controlled rotations about orthogonal axes.
    SphereRotation { first: usize, second: usize, axes: [Vector; 2], rates: [f64; 2] },
    /// Coarse-to-fine search over piecewise-constant controls.
    Search { budget: usize, max_segments: usize, max_duration: f64, seed: u64 },
}

fn constant_vector(f: &crate::fields::VectorField) -> Option<Vector> {
    let p = f.as_polynomial()?;
    if p.components().iter().all(|c| c.degree() == 0) {
        Some(p.eval(&Vector::zeros(p.dim())))
    } else {
        None
    }
}

fn skew_axis(a: &Matrix) -> Option<Vector> {
    if a.nrows() != 3 || (a + a.transpose()).amax() > 1e-12 {
        return None;
    }
    let axis = Vector::from_column_slice(&[a[(2, 1)], a[(0, 2)], a[(1, 0)]]);
    (axis.norm() > 0.0).then_some(axis)
}

impl SteeringOracle {
    /// Gramian oracle for systems with linear drift and constant controlled fields.
    pub fn linear_gramian(sys: &AffineSystem, horizon: f64) -> Result<Self> {
        if !sys.manifold().is_flat() {
            return Err(Error::Domain("the Gramian oracle needs a flat base".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("steering horizon must be positive, got {horizon}")));
        }
        let a = match sys.drift().descriptor() {
            Descriptor::Linear(a) if sys.drift().as_polynomial().is_some() => a,
            _ => return Err(Error::Domain("the Gramian oracle needs a linear drift".into())),
        };
        let columns = sys
            .controlled()
            .iter()
            .map(constant_vector)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Domain("the Gramian oracle needs constant controlled fields".into()))?;
        Ok(SteeringOracle::LinearGramian { a, b: Matrix::from_columns(&columns), horizon })
    }

    /// Rotation oracle; picks the first two channels whose fields are
    /// rotations about orthogonal axes.
    pub fn sphere_rotation(sys: &AffineSystem) -> Result<Self> {
        if *sys.manifold() != Manifold::Sphere2 {
            return Err(Error::Domain("the rotation oracle needs the sphere".into()));
        }
        if !sys.is_driftless() {
            return Err(Error::Domain("the rotation oracle needs a driftless system".into()));
        }
        let gens: Vec<RotationGenerator> = sys
            .controlled()
            .iter()
            .enumerate()
            .filter_map(|(channel, f)| match f.descriptor() {
                Descriptor::Linear(a) => skew_axis(&a).map(|axis| {
                    let rate = axis.norm();
                    RotationGenerator { channel, axis: axis / rate, rate }
                }),
                _ => None,
            })
            .collect();
        for (i, g) in gens.iter().enumerate() {
            for h in &gens[i + 1..] {
                if g.axis.dot(&h.axis).abs() <= 1e-9 {
                    return Ok(SteeringOracle::SphereRotation {
                        first: g.channel,
                        second: h.channel,
                        axes: [g.axis.clone(), h.axis.clone()],
                        rates: [g.rate, h.rate],
                    });
                }
            }
        }
        Err(Error::Domain("no pair of controlled rotations about orthogonal axes".into()))
    }

    pub fn search(budget: usize, seed: u64) -> Self {
        SteeringOracle::Search { budget, max_segments: 2, max_duration: 4.0, seed }
    }

    /// Picks the closed-form oracle that fits the system, else search.
    pub fn for_system(sys: &AffineSystem, horizon: f64, seed: u64) -> Self {
        Self::linear_gramian(sys, horizon)
            .or_else(|_| Self::sphere_rotation(sys))
            .unwrap_or_else(|_| Self::search(4000, seed))
    }

    pub fn steer_tol(&self) -> f64 {
        match self {
            SteeringOracle::LinearGramian { .. } => GRAMIAN_STEER_TOL,
            SteeringOracle::SphereRotation { .. } => ROTATION_STEER_TOL,
            SteeringOracle::Search { .. } => SEARCH_STEER_TOL,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SteeringOracle::LinearGramian { .. } => "linear_gramian",
            SteeringOracle::SphereRotation { .. } => "sphere_rotation",
            SteeringOracle::Search { .. } => "search",
        }
    }

    /// A plan carrying `x` to `y`, checked by integrating it at step `h`.
    pub fn steer(&self, sys: &AffineSystem, x: &Vector, y: &Vector, h: f64) -> Result<SteeringPlan> {
        let m = sys.manifold();
        m.check_point(x)?;
        m.check_point(y)?;
        let plan = match self {
            SteeringOracle::LinearGramian { a, b, horizon } => gramian_plan(sys, a, b, *horizon, x, y)?,
            SteeringOracle::SphereRotation { first, second, axes, rates } => {
                rotation_plan(sys, [*first, *second], axes, rates, x, y)?
            }
            SteeringOracle::Search { budget, max_segments, max_duration, seed } => {
                return search_plan(sys, x, y, h, *budget, *max_segments, *max_duration, 0.0, *seed)
            }
        };
        self.confirm(sys, x, y, h, plan)
    }

    /// A plan of positive duration from `x` back to `x`.
    pub fn loop_at(&self, sys: &AffineSystem, x: &Vector, h: f64) -> Result<SteeringPlan> {
        match self {
            SteeringOracle::LinearGramian { a, b, horizon } => {
                let plan = gramian_plan(sys, a, b, *horizon, x, x)?;
                self.confirm(sys, x, x, h, plan)
            }
            SteeringOracle::SphereRotation { first, rates, .. } => {
                // A full turn about the first axis.
                let (value, _) = signed_value(sys.bounds()[*first], 1.0)?;
                let duration = 2.0 * std::f64::consts::PI / (value.abs() * rates[0]);
                let mut u = vec![0.0; sys.channels()];
                u[*first] = value;
                let plan = SteeringPlan { duration, control: ControlSignal::constant(&u, duration) };
                self.confirm(sys, x, x, h, plan)
            }
            SteeringOracle::Search { budget, max_segments, max_duration, seed } => {
                search_plan(sys, x, x, h, *budget, *max_segments, *max_duration, 0.5, *seed)
            }
        }
    }

    fn confirm(&self, sys: &AffineSystem, x: &Vector, y: &Vector, h: f64, plan: SteeringPlan) -> Result<SteeringPlan> {
        let end = integrate_base(sys, x, &plan.control, h)?.final_state();
        let miss = sys.manifold().distance_unchecked(&end, y);
        if miss > self.steer_tol() {
            return Err(Error::Steering(format!(
                "{} plan misses its target by {miss:.3e} (tolerance {:.1e})",
                self.name(),
                self.steer_tol()
            )));
        }
        Ok(plan)
    }
}

/// `∫_0^dt e^{Aσ} dσ · B` from the exponential of the block matrix `[[A, B], [0, 0]]`.
fn input_integral(a: &Matrix, b: &Matrix, dt: f64) -> Matrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    block.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    block.exp().view((0, n), (n, m)).into_owned()
}

/// Minimum-energy piecewise-constant control on `GRAMIAN_SEGMENTS` equal
/// segments: `u_k = Γ_kᵀ W⁻¹ (y − e^{AT} x)` with `Γ_k` the exact effect of
/// segment `k` on the final state and `W = Σ Γ_k Γ_kᵀ`. Each `Γ_kᵀ` is the
/// segment integral of `Bᵀ e^{Aᵀ(T − t)}`.
fn gramian_plan(sys: &AffineSystem, a: &Matrix, b: &Matrix, horizon: f64, x: &Vector, y: &Vector) -> Result<SteeringPlan> {
    let n = a.nrows();
    let m = b.ncols();
    let bounds = sys.bounds();
    let mut horizon = horizon;
    for _ in 0..=MAX_HORIZON_DOUBLINGS {
        let dt = horizon / GRAMIAN_SEGMENTS as f64;
        let g = input_integral(a, b, dt);
        let step_prop = (a * dt).exp();
        // Γ_k = e^{A (T - t_{k+1})} G; build from the last segment backward.
        let mut gammas = vec![Matrix::zeros(n, m); GRAMIAN_SEGMENTS];
        let mut prop = Matrix::identity(n, n);
        for k in (0..GRAMIAN_SEGMENTS).rev() {
            gammas[k] = &prop * &g;
            prop = &prop * &step_prop;
        }
        let gramian = gammas.iter().fold(Matrix::zeros(n, n), |acc, gk| acc + gk * gk.transpose());
        let sv = gramian.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if smax == 0.0 || smin < GRAMIAN_CONDITION_FLOOR * smax {
            return Err(Error::UncontrollablePair { ratio: if smax == 0.0 { 0.0 } else { smin / smax } });
        }
        let free = &prop * x;
        let weights = gramian
            .clone()
            .cholesky()
            .map(|c| c.solve(&(y - free)))
            .ok_or(Error::UncontrollablePair { ratio: smin / smax })?;
        let mut control = ControlSignal::empty(m);
        let mut within = true;
        for gk in &gammas {
            let uk = gk.transpose() * &weights;
            within &= uk.iter().zip(bounds).all(|(c, (lo, hi))| *c >= *lo && *c <= *hi);
            control.push(dt, uk.as_slice().to_vec());
        }
        if within {
            return Ok(SteeringPlan { duration: horizon, control });
        }
        horizon *= 2.0;
    }
    Err(Error::Steering("minimum-energy control exceeds the control bounds".into()))
}

/// Largest admissible control magnitude with the requested sign, or the
/// opposite sign if only that one is available. Returns the value and
/// whether the sign was flipped.
fn signed_value(bounds: (f64, f64), sign: f64) -> Result<(f64, bool)> {
    let (lo, hi) = bounds;
    let preferred = if sign >= 0.0 { hi } else { lo };
    if preferred * sign > 0.0 {
        return Ok((preferred, false));
    }
    let other = if sign >= 0.0 { lo } else { hi };
    if other * sign < 0.0 {
        return Ok((other, true));
    }
    Err(Error::Steering("control bounds admit no rotation".into()))
}

fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta.rem_euclid(two_pi);
    if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// Rotations about `a`, then `b`, then `a` again carrying `x` to `y`.
///
/// In the right-handed frame `(b, a × b, a)`, rotation about `a` turns the
/// first two coordinates and rotation about `b` turns the last two.
fn rotation_plan(
    sys: &AffineSystem,
    channels: [usize; 2],
    axes: &[Vector; 2],
    rates: &[f64; 2],
    x: &Vector,
    y: &Vector,
) -> Result<SteeringPlan> {
    let a = &axes[0];
    let b = &axes[1];
    let c = a.cross(b);
    let frame = |p: &Vector| (p.dot(b), p.dot(&c), p.dot(a));
    let (x1, x2, x3) = frame(x);
    let (y1, y2, y3) = frame(y);

    // Bring x into the plane orthogonal to b, then tilt to y's height along a,
    // then turn about a onto y.
    let alpha = if x1.hypot(x2) > 1e-12 { wrap_angle(std::f64::consts::FRAC_PI_2 - x2.atan2(x1)) } else { 0.0 };
    let r = x1.hypot(x2);
    let (p2, p3) = (r, x3);
    let q2 = (1.0 - y3 * y3).max(0.0).sqrt();
    let beta = wrap_angle(y3.atan2(q2) - p3.atan2(p2));
    let gamma = if y1.hypot(y2) > 1e-12 { wrap_angle(y2.atan2(y1) - q2.atan2(0.0)) } else { 0.0 };

    let mut control = ControlSignal::empty(sys.channels());
    for (angle, which) in [(alpha, 0usize), (beta, 1), (gamma, 0)] {
        if angle.abs() < 1e-15 {
            continue;
        }
        let (value, flipped) = signed_value(sys.bounds()[channels[which]], angle.signum())?;
        let turn = if flipped { angle - angle.signum() * 2.0 * std::f64::consts::PI } else { angle };
        let duration = turn.abs() / (value.abs() * rates[which]);
        let mut u = vec![0.0; sys.channels()];
        u[channels[which]] = value;
        control.push(duration, u);
    }
    Ok(SteeringPlan { duration: control.total_duration(), control })
}

#[derive(Clone)]
struct Candidate {
    durations: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Candidate {
    fn signal(&self, channels: usize) -> ControlSignal {
        let mut s = ControlSignal::empty(channels);
        for (d, v) in self.durations.iter().zip(&self.values) {
            s.push(*d, v.clone());
        }
        s
    }
}

/// Random coarse sampling followed by pattern search with step halving.
/// Loops (`x == y`) are asked for a total duration of at least `min_duration`.
#[allow(clippy::too_many_arguments)]
fn search_plan(
    sys: &AffineSystem,
    x: &Vector,
    y: &Vector,
    h: f64,
    budget: usize,
    max_segments: usize,
    max_duration: f64,
    min_duration: f64,
    seed: u64,
) -> Result<SteeringPlan> {
    let m = sys.manifold();
    let channels = sys.channels();
    if min_duration == 0.0 && m.distance_unchecked(x, y) <= SEARCH_STEER_TOL {
        return Ok(SteeringPlan::empty(channels));
    }
    let bounds = sys.bounds().to_vec();
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::Steering("search needs finite control bounds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evals = 0usize;
    let cost = |cand: &Candidate, evals: &mut usize| -> f64 {
        *evals += 1;
        let total: f64 = cand.durations.iter().sum();
        if total < min_duration || cand.durations.iter().any(|d| *d < 0.0) {
            return f64::INFINITY;
        }
        match integrate_base(sys, x, &cand.signal(channels), h) {
            Ok(t) => m.distance_unchecked(&t.final_state(), y),
            Err(_) => f64::INFINITY,
        }
    };

    let coarse = budget / 4;
    let mut best: Option<(f64, Candidate)> = None;
    for _ in 0..coarse.max(1) {
        let k = rng.random_range(1..=max_segments);
        let cand = Candidate {
            durations: (0..k).map(|_| rng.random_range(0.0..max_duration / k as f64).max(min_duration / k as f64)).collect(),
            values: (0..k)
                .map(|_| bounds.iter().map(|(lo, hi)| if lo == hi { *lo } else { rng.random_range(*lo..*hi) }).collect())
                .collect(),
        };
        let c = cost(&cand, &mut evals);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, cand));
        }
    }
    let (mut best_cost, mut cand) = best.expect("at least one coarse sample");

    let mut step = 0.25;
    while evals < budget && best_cost > 0.25 * SEARCH_STEER_TOL && step > 1e-9 {
        let mut improved = false;
        let n_params = cand.durations.len() * (1 + channels);
        for p in 0..n_params {
            for dir in [1.0, -1.0] {
                let mut trial = cand.clone();
                let seg = p / (1 + channels);
                let slot = p % (1 + channels);
                if slot == 0 {
                    trial.durations[seg] += dir * step * max_duration / cand.durations.len() as f64;
                } else {
                    let (lo, hi) = bounds[slot - 1];
                    let v = &mut trial.values[seg][slot - 1];
                    *v = (*v + dir * step * (hi - lo)).clamp(lo, hi);
                }
                let c = cost(&trial, &mut evals);
                if c < best_cost {
                    best_cost = c;
                    cand = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if best_cost > SEARCH_STEER_TOL {
        return Err(Error::Steering(format!(
            "search budget exhausted after {evals} integrations; best miss {best_cost:.3e}"
        )));
    }
    let control = cand.signal(channels);
    Ok(SteeringPlan { duration: control.total_duration(), control })
}
