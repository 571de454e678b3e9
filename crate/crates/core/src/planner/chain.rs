//! Constructive (ε, T)-chains for the lifted system and their verifier.
//!
//! The base is driven along a fixed schedule: an approach from `π(source)`
//! to `π(target)`, then loops through `π(target)`. Every leg ends with a
//! jump inside one fiber of length at most ε. Since the base path does not
//! depend on the fiber, the fiber component of each leg acts linearly, and
//! the jump references are the target vector pulled back through the maps
//! of the legs still to come. The number of loops is the smallest for which
//! the walk lands on the target.

use serde::{Deserialize, Serialize};

use super::oracle::{SteeringOracle, SteeringPlan};
use crate::error::{Error, Result};
use crate::flow::{integrate_base, integrate_lifted, AffineSystem, ControlSignal};
use crate::manifold::TangentPoint;
use crate::sasaki::TangentMetric;
use crate::{Matrix, Vector};

/// Relative margin by which leg durations exceed `T`.
pub const LEG_DURATION_MARGIN: f64 = 1e-3;
/// Relative rounding allowance on the jump inequality `d ≤ ε`.
const JUMP_SLACK: f64 = 1e-12;
/// Tolerance on continuity between consecutive legs.
const CONTINUITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLeg {
    pub start: TangentPoint,
    pub control: ControlSignal,
    pub duration: f64,
    pub jump_target: TangentPoint,
    /// Distance from the lifted flow endpoint to `jump_target` at planning time.
    pub verified_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub min_duration: f64,
    pub seed: u64,
    pub step: f64,
    pub source: TangentPoint,
    pub target: TangentPoint,
    pub legs: Vec<ChainLeg>,
}

#[derive(Clone, Debug)]
pub struct ChainOptions {
    pub epsilon: f64,
    pub min_duration: f64,
    /// Defaults to `10 ⌈gap / ε⌉ + 20` with `gap` the initial fiber gap.
    pub max_legs: Option<usize>,
    pub step: f64,
    pub seed: u64,
}

impl ChainOptions {
    pub fn new(epsilon: f64, min_duration: f64) -> Self {
        ChainOptions { epsilon, min_duration, max_legs: None, step: crate::flow::DEFAULT_STEP, seed: 0 }
    }
}

/// One leg of the base schedule with its linear fiber map.
struct Piece {
    start: Vector,
    control: ControlSignal,
    /// Base point of the jump target.
    jump_base: Vector,
    /// Base distance between the flow endpoint and `jump_base`.
    base_gap: f64,
    /// Fiber map from the start fiber to the jump fiber, and its pseudo-inverse.
    map: Matrix,
    pullback: Matrix,
}

fn pinv(m: &Matrix) -> Matrix {
    let svd = m.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(tol).expect("both factors were computed")
}

/// Splits `plan` at grid nodes into pieces no shorter than `min_piece`.
fn split(plan: &SteeringPlan, min_piece: f64, h: f64) -> Result<Vec<ControlSignal>> {
    let d = plan.duration;
    let n = ((d / (min_piece + h)).floor() as usize).max(1);
    let mut bounds = vec![0.0];
    for i in 1..n {
        bounds.push(((i as f64 * d / n as f64) / h).round() * h);
    }
    bounds.push(d);
    bounds.windows(2).map(|w| plan.control.slice(w[0], w[1])).collect()
}

/// Repeats `unit` after `head` until the total duration exceeds `min_total`.
fn pad(head: SteeringPlan, unit: &SteeringPlan, min_total: f64) -> Result<SteeringPlan> {
    if !(unit.duration > 0.0) {
        return Err(Error::Steering("padding plan has zero duration".into()));
    }
    let mut plan = head;
    while plan.duration <= min_total {
        plan = plan.then(unit);
    }
    Ok(plan)
}

fn build_pieces(
    sys: &AffineSystem,
    metric: &TangentMetric,
    start: &Vector,
    end: &Vector,
    controls: Vec<ControlSignal>,
    h: f64,
) -> Result<Vec<Piece>> {
    let m = sys.manifold();
    let n = m.ambient_dim();
    let count = controls.len();
    let mut pieces = Vec::with_capacity(count);
    let mut x = start.clone();
    for (i, control) in controls.into_iter().enumerate() {
        let flow_end = integrate_base(sys, &x, &control, h)?.final_state();
        let jump_base = if i + 1 == count { end.clone() } else { flow_end.clone() };
        let basis = m.tangent_basis(&x);
        let mut map = Matrix::zeros(n, n);
        for j in 0..basis.ncols() {
            let e = basis.column(j).into_owned();
            let lifted = integrate_lifted(sys, &TangentPoint::new(x.clone(), e.clone()), &control, h)?;
            let image = lifted.final_tangent().expect("lifted trajectory has fibers").v;
            let carried = metric.carry(&flow_end, &jump_base, &image)?;
            map += carried * e.transpose();
        }
        let pullback = pinv(&map);
        pieces.push(Piece {
            start: x,
            control,
            base_gap: m.distance_unchecked(&flow_end, &jump_base),
            jump_base: jump_base.clone(),
            map,
            pullback,
        });
        x = jump_base;
    }
    Ok(pieces)
}

/// Largest fiber step keeping `hypot(base_gap, step) ≤ ε`.
fn fiber_step(epsilon: f64, base_gap: f64) -> Result<f64> {
    let s2 = epsilon * epsilon - base_gap * base_gap;
    if !(s2 > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon {epsilon} does not exceed the steering base error {base_gap:.3e}"
        )));
    }
    Ok(s2.sqrt())
}

/// Moves `v` toward `reference` by at most `step`; lands on it when it is
/// within reach up to rounding. Returns the new vector and whether it landed.
fn jump(v: &Vector, reference: &Vector, step: f64) -> (Vector, bool) {
    let gap = reference - v;
    let len = gap.norm();
    if len <= step * (1.0 + JUMP_SLACK) {
        (reference.clone(), true)
    } else {
        (v + gap * (step / len), false)
    }
}

struct Schedule<'a> {
    approach: &'a [Piece],
    cycle: &'a [Piece],
    loops: usize,
}

impl Schedule<'_> {
    fn len(&self) -> usize {
        self.approach.len() + self.loops * self.cycle.len()
    }

    fn piece(&self, i: usize) -> &Piece {
        let p = self.approach.len();
        if i < p {
            &self.approach[i]
        } else {
            &self.cycle[(i - p) % self.cycle.len()]
        }
    }

    /// `references[i]` is the target pulled back through pieces `i+1..`.
    fn references(&self, vt: &Vector) -> Vec<Vector> {
        let n = self.len();
        let mut refs = vec![vt.clone(); n];
        for i in (0..n.saturating_sub(1)).rev() {
            refs[i] = &self.piece(i + 1).pullback * &refs[i + 1];
        }
        refs
    }

    /// Runs the walk with the linear fiber maps. True if it ends on `vt`.
    fn predict(&self, vs: &Vector, vt: &Vector, epsilon: f64) -> Result<bool> {
        let refs = self.references(vt);
        let mut v = vs.clone();
        let mut landed = false;
        for (i, r) in refs.iter().enumerate() {
            let piece = self.piece(i);
            let (next, hit) = jump(&(&piece.map * &v), r, fiber_step(epsilon, piece.base_gap)?);
            v = next;
            landed = hit;
        }
        Ok(landed)
    }
}

/// Plans an (ε, T)-chain from `source` to `target`.
pub fn plan_chain(
    sys: &AffineSystem,
    oracle: &SteeringOracle,
    metric: &TangentMetric,
    source: &TangentPoint,
    target: &TangentPoint,
    opts: &ChainOptions,
) -> Result<Chain> {
    let (eps, t_min, h) = (opts.epsilon, opts.min_duration, opts.step);
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    if !(t_min > 0.0 && t_min.is_finite()) {
        return Err(Error::Domain(format!("T must be positive, got {t_min}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("integrator step must be positive, got {h}")));
    }
    let m = sys.manifold();
    source.validate(m)?;
    target.validate(m)?;
    if *metric.manifold() != *m {
        return Err(Error::Domain("metric and system live on different manifolds".into()));
    }
    if source == target {
        return Ok(Chain {
            epsilon: eps,
            min_duration: t_min,
            seed: opts.seed,
            step: h,
            source: source.clone(),
            target: target.clone(),
            legs: Vec::new(),
        });
    }
    let (xs, xt) = (&source.x, &target.x);
    let leg_min = t_min * (1.0 + LEG_DURATION_MARGIN);
    let same_base = m.distance_unchecked(xs, xt) <= oracle.steer_tol();

    let round_trip = if same_base {
        oracle.loop_at(sys, xt, h)?
    } else {
        oracle.steer(sys, xt, xs, h)?.then(&oracle.steer(sys, xs, xt, h)?)
    };
    let approach_plan = if same_base { round_trip.clone() } else { oracle.steer(sys, xs, xt, h)? };
    let approach_plan = pad(approach_plan, &round_trip, leg_min)?;
    let cycle_plan = pad(round_trip.clone(), &round_trip, leg_min)?;

    let approach = build_pieces(sys, metric, xs, xt, split(&approach_plan, leg_min, h)?, h)?;
    let cycle = build_pieces(sys, metric, xt, xt, split(&cycle_plan, leg_min, h)?, h)?;

    let gap = (&target.v - metric.carry(xs, xt, &source.v)?).norm();
    let max_legs = opts.max_legs.unwrap_or(10 * (gap / eps).ceil() as usize + 20);
    if approach.len() > max_legs {
        let partial = realize(sys, metric, source, target, opts, &Schedule { approach: &approach, cycle: &cycle, loops: 0 })?;
        return Err(Error::PlanningBudget { max_legs, partial: Box::new(partial) });
    }
    let max_loops = (max_legs - approach.len()) / cycle.len();

    for loops in 0..=max_loops {
        let schedule = Schedule { approach: &approach, cycle: &cycle, loops };
        if !schedule.predict(&source.v, &target.v, eps)? {
            continue;
        }
        let chain = realize(sys, metric, source, target, opts, &schedule)?;
        if chain.legs.last().is_some_and(|l| l.jump_target == *target) {
            return Ok(chain);
        }
    }
    let schedule = Schedule { approach: &approach, cycle: &cycle, loops: max_loops };
    let partial = realize(sys, metric, source, target, opts, &schedule)?;
    Err(Error::PlanningBudget { max_legs, partial: Box::new(partial) })
}

/// Builds the chain for a schedule by integrating every leg.
fn realize(
    sys: &AffineSystem,
    metric: &TangentMetric,
    source: &TangentPoint,
    target: &TangentPoint,
    opts: &ChainOptions,
    schedule: &Schedule,
) -> Result<Chain> {
    let refs = schedule.references(&target.v);
    let mut legs = Vec::with_capacity(schedule.len());
    let mut start = source.clone();
    for (i, reference) in refs.iter().enumerate() {
        let piece = schedule.piece(i);
        debug_assert!(piece.start == start.x || i == 0);
        let end = integrate_lifted(sys, &start, &piece.control, opts.step)?
            .final_tangent()
            .expect("lifted trajectory has fibers");
        let carried = metric.carry(&end.x, &piece.jump_base, &end.v)?;
        let (v, _) = jump(&carried, reference, fiber_step(opts.epsilon, piece.base_gap)?);
        let jump_target = if i + 1 == refs.len() && v == target.v {
            target.clone()
        } else {
            TangentPoint::new(piece.jump_base.clone(), v)
        };
        let verified_distance = metric.distance_unchecked(&end, &jump_target)?;
        legs.push(ChainLeg {
            start: start.clone(),
            duration: piece.control.total_duration(),
            control: piece.control.clone(),
            jump_target: jump_target.clone(),
            verified_distance,
        });
        start = jump_target;
    }
    Ok(Chain {
        epsilon: opts.epsilon,
        min_duration: opts.min_duration,
        seed: opts.seed,
        step: opts.step,
        source: source.clone(),
        target: target.clone(),
        legs,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LegCheck {
    pub index: usize,
    pub duration: f64,
    pub distance: f64,
    pub base_gap: f64,
    pub duration_ok: bool,
    pub distance_ok: bool,
    pub connected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub passed: bool,
    pub source_ok: bool,
    pub target_ok: bool,
    pub legs: Vec<LegCheck>,
    pub failures: Vec<String>,
}

fn close(p: &TangentPoint, q: &TangentPoint) -> bool {
    p.x.len() == q.x.len()
        && p.v.len() == q.v.len()
        && (&p.x - &q.x).amax() <= CONTINUITY_TOL
        && (&p.v - &q.v).amax() <= CONTINUITY_TOL
}

/// Re-integrates every leg at half the recorded step and checks the two
/// defining inequalities, continuity, and the chain's end points.
pub fn verify_chain(sys: &AffineSystem, metric: &TangentMetric, chain: &Chain) -> ChainReport {
    let mut failures = Vec::new();
    let h = chain.step / 2.0;
    let eps = chain.epsilon;
    let mut legs = Vec::with_capacity(chain.legs.len());

    let source_ok = chain.legs.first().map_or(close(&chain.source, &chain.target), |l| close(&l.start, &chain.source));
    if !source_ok {
        failures.push("chain does not start at the source".into());
    }
    let target_ok = chain.legs.last().map_or(source_ok, |l| close(&l.jump_target, &chain.target));
    if !target_ok {
        failures.push("chain does not end at the target".into());
    }

    for (i, leg) in chain.legs.iter().enumerate() {
        let actual = leg.control.total_duration();
        let duration_ok = actual > chain.min_duration && (actual - leg.duration).abs() <= 1e-9 * (1.0 + actual);
        if !duration_ok {
            failures.push(format!("leg {i}: duration {actual} does not exceed T = {}", chain.min_duration));
        }
        let connected = chain.legs.get(i + 1).is_none_or(|next| close(&leg.jump_target, &next.start));
        if !connected {
            failures.push(format!("leg {i}: jump target differs from the start of leg {}", i + 1));
        }
        let measured = integrate_lifted(sys, &leg.start, &leg.control, h).and_then(|t| {
            let end = t.final_tangent().expect("lifted trajectory has fibers");
            leg.jump_target.validate(sys.manifold())?;
            Ok((metric.distance_unchecked(&end, &leg.jump_target)?, metric.base_distance(&end, &leg.jump_target)))
        });
        let (distance, base_gap) = match measured {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("leg {i}: {e}"));
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let distance_ok = distance <= eps * (1.0 + JUMP_SLACK);
        if !distance_ok && distance.is_finite() {
            failures.push(format!("leg {i}: jump distance {distance:.6e} exceeds epsilon {eps}"));
        }
        legs.push(LegCheck { index: i, duration: actual, distance, base_gap, duration_ok, distance_ok, connected });
    }
    let passed = source_ok && target_ok && legs.iter().all(|l| l.duration_ok && l.distance_ok && l.connected);
    ChainReport { passed, source_ok, target_ok, legs, failures }
}
