//! Steering, sampled reachable sets, and (ε, T)-chains on the tangent bundle.

mod chain;
mod oracle;

pub use chain::{plan_chain, verify_chain, Chain, ChainLeg, ChainOptions, ChainReport, LegCheck, LEG_DURATION_MARGIN};
pub use oracle::{
    SteeringOracle, SteeringPlan, GRAMIAN_SEGMENTS, GRAMIAN_STEER_TOL, ROTATION_STEER_TOL, SEARCH_STEER_TOL,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_lifted, AffineSystem, ControlSignal};
use crate::manifold::TangentPoint;
use crate::Vector;

/// Most segments in a sampled control.
pub const MAX_SAMPLE_SEGMENTS: usize = 8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachableSample {
    pub control: ControlSignal,
    pub endpoint: TangentPoint,
}

/// Endpoints of the lifted flow from `p0` under random piecewise-constant
/// controls with total duration uniform in `(0, horizon]`.
pub fn reachable_sample(
    sys: &AffineSystem,
    p0: &TangentPoint,
    horizon: f64,
    n_samples: usize,
    seed: u64,
    h: f64,
) -> Result<Vec<ReachableSample>> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if sys.bounds().iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::Domain("sampling needs finite control bounds".into()));
    }
    p0.validate(sys.manifold())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let control = random_control(sys, horizon, &mut rng);
        let endpoint = integrate_lifted(sys, p0, &control, h)?.final_tangent().expect("lifted trajectory has fibers");
        out.push(ReachableSample { control, endpoint });
    }
    Ok(out)
}

fn random_control(sys: &AffineSystem, horizon: f64, rng: &mut ChaCha8Rng) -> ControlSignal {
    let mut control = ControlSignal::empty(sys.channels());
    if horizon == 0.0 {
        return control;
    }
    // (0, horizon]: flip the half-open unit interval.
    let total = horizon * (1.0 - rng.random::<f64>());
    let k = rng.random_range(1..=MAX_SAMPLE_SEGMENTS);
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>() * total).collect();
    cuts.push(0.0);
    cuts.push(total);
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let value = sys
            .bounds()
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        if w[1] > w[0] {
            control.push(w[1] - w[0], value);
        }
    }
    control
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberWitness {
    pub duration: f64,
    pub control: ControlSignal,
    pub endpoint: TangentPoint,
}

/// Steers `π(p0)` to `y` and lifts the plan, producing a point of `T_y M`
/// reachable from `p0`.
pub fn check_fiber_reachability(
    sys: &AffineSystem,
    oracle: &SteeringOracle,
    p0: &TangentPoint,
    y: &Vector,
    h: f64,
) -> Result<FiberWitness> {
    let m = sys.manifold();
    p0.validate(m)?;
    m.check_point(y)?;
    if m.distance_unchecked(&p0.x, y) == 0.0 {
        return Ok(FiberWitness { duration: 0.0, control: ControlSignal::empty(sys.channels()), endpoint: p0.clone() });
    }
    let plan = oracle.steer(sys, &p0.x, y, h)?;
    let endpoint = integrate_lifted(sys, p0, &plan.control, h)?.final_tangent().expect("lifted trajectory has fibers");
    Ok(FiberWitness { duration: plan.duration, control: plan.control, endpoint })
}
