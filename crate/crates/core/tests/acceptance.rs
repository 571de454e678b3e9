//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use liftctl_core::fields::{check_bracket_identity, check_pi_related, Monomial, PolyField, Polynomial};
use liftctl_core::flow::check_flow_formula;
use liftctl_core::flow::check_invariance;
use liftctl_core::liealg::{check_lift_algebra_identity, lifted_rank_at, rank_at};
use liftctl_core::planner::{check_fiber_reachability, GRAMIAN_STEER_TOL};
use liftctl_core::systems;
use liftctl_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BRACKET_ANALYTIC_TOL: f64 = 1e-10;
const BRACKET_FD_TOL: f64 = 1e-4;
const BRACKET_BUDGET: Duration = Duration::from_secs(1);
const PI_RELATED_TOL: f64 = 1e-12;
const FLOW_LINEAR_TOL: f64 = 1e-6;
const FLOW_SPHERE_TOL: f64 = 1e-4;
const EXPM_ORACLE_TOL: f64 = 1e-8;
const FLOW_BUDGET: Duration = Duration::from_secs(5);
const INVARIANCE_LINEAR_TOL: f64 = 1e-6;
const INVARIANCE_SPHERE_TOL: f64 = 1e-4;
const RANK_BUDGET: Duration = Duration::from_secs(5);
const RANK_DEPTH: usize = 3;
const LIFT_ALGEBRA_TOL: f64 = 1e-8;
const WITNESS_FIBER_TOL: f64 = 1e-6;
const CHAIN_MAX_LEGS: usize = 200;
const CHAIN_BUDGET: Duration = Duration::from_secs(10);
const CHAIN_T: f64 = 0.5;
const DISTANCE_TOL: f64 = 1e-12;
const STEP: f64 = 1e-3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-r..r))
}

fn sphere_point(rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let c = uniform_vec(rng, 3, 1.0);
        if c.norm() > 0.2 && c.norm() < 1.0 {
            return c.normalize();
        }
    }
}

fn sphere_tangent(rng: &mut ChaCha8Rng) -> TangentPoint {
    let x = sphere_point(rng);
    let w = uniform_vec(rng, 3, 1.0);
    let t = Manifold::Sphere2.project_tangent(&x, &w).unwrap();
    TangentPoint::new(x, t)
}

fn flat_tangent(rng: &mut ChaCha8Rng, n: usize) -> TangentPoint {
    TangentPoint::new(uniform_vec(rng, n, 1.0), uniform_vec(rng, n, 1.0))
}

fn random_tangent(rng: &mut ChaCha8Rng, m: &Manifold) -> TangentPoint {
    match m {
        Manifold::Sphere2 => sphere_tangent(rng),
        Manifold::Flat { dim } => flat_tangent(rng, *dim),
    }
}

fn random_signal(rng: &mut ChaCha8Rng, sys: &AffineSystem, total: f64, max_segments: usize) -> ControlSignal {
    let k = rng.random_range(1..=max_segments);
    let mut sig = ControlSignal::empty(sys.channels());
    for _ in 0..k {
        let value = sys.bounds().iter().map(|&(lo, hi)| rng.random_range(lo.max(-1.0)..hi.min(1.0))).collect();
        sig.push(total / k as f64, value);
    }
    sig
}

/// Polynomial field on R³ with three terms of total degree at most two per component.
fn random_poly_field(rng: &mut ChaCha8Rng) -> VectorField {
    let comps = (0..3)
        .map(|_| {
            let monos: Vec<Monomial> = (0..3)
                .map(|_| {
                    let mut exponents = vec![0u32; 3];
                    for _ in 0..2 {
                        let k = rng.random_range(0..4);
                        if k < 3 {
                            exponents[k] += 1;
                        }
                    }
                    Monomial { coeff: rng.random_range(-1.0..1.0), exponents }
                })
                .collect();
            Polynomial::from_monomials(3, &monos).unwrap()
        })
        .collect();
    VectorField::polynomial(PolyField::new(comps))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let samples: Vec<TangentPoint> = (0..20).map(|_| flat_tangent(&mut rng, 3)).collect();
    let mut pairs = Vec::new();
    for _ in 0..5 {
        let a = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        pairs.push((VectorField::linear(a), VectorField::linear(b)));
    }
    for _ in 0..3 {
        pairs.push((random_poly_field(&mut rng), random_poly_field(&mut rng)));
    }
    let mut analytic: f64 = 0.0;
    let mut fd: f64 = 0.0;
    for (x, y) in &pairs {
        analytic = analytic.max(check_bracket_identity(x, y, &samples));
        fd = fd.max(check_bracket_identity(&x.clone().with_fd_jacobian(), &y.clone().with_fd_jacobian(), &samples));
    }
    let elapsed = start.elapsed();
    outcome(
        analytic <= BRACKET_ANALYTIC_TOL && fd <= BRACKET_FD_TOL && elapsed < BRACKET_BUDGET,
        format!("analytic {analytic:.2e} (tol {BRACKET_ANALYTIC_TOL:.0e}), fd {fd:.2e} (tol {BRACKET_FD_TOL:.0e}), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut bitwise = true;
    for sys in [systems::plane_rotation(), systems::sphere_bilinear()] {
        let m = *sys.manifold();
        let samples: Vec<TangentPoint> = (0..100).map(|_| random_tangent(&mut rng, &m)).collect();
        for f in sys.fields() {
            worst = worst.max(check_pi_related(&f, &samples));
        }
        for p in samples.iter().take(10) {
            let u = random_signal(&mut rng, &sys, 1.5, 4);
            let lifted = integrate_lifted(&sys, p, &u, STEP).unwrap();
            let base = integrate_base(&sys, &p.x, &u, STEP).unwrap();
            bitwise &= lifted.times == base.times && lifted.states == base.states;
        }
    }
    let poly_samples: Vec<TangentPoint> = (0..100).map(|_| flat_tangent(&mut rng, 3)).collect();
    worst = worst.max(check_pi_related(&random_poly_field(&mut rng), &poly_samples));
    outcome(
        worst <= PI_RELATED_TOL && bitwise,
        format!("max deviation {worst:.2e} (tol {PI_RELATED_TOL:.0e}), base trajectories bitwise equal: {bitwise}"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    let plane = systems::plane_rotation();
    let a = Matrix::from_row_slice(2, 2, &[0., -1., 1., 0.]);
    let mut linear: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for _ in 0..5 {
        let p = flat_tangent(&mut rng, 2);
        let u = random_signal(&mut rng, &plane, 2.0, 4);
        linear = linear.max(check_flow_formula(&plane, &p.x, &p.v, &u, STEP).unwrap());
        let end = integrate_lifted(&plane, &p, &u, STEP).unwrap().final_tangent().unwrap();
        oracle = oracle.max((end.v - (&a * u.total_duration()).exp() * &p.v).norm());
    }

    let sphere = systems::sphere_bilinear();
    let (az, bx) = (systems::axis_generator(2), systems::axis_generator(0));
    let mut curved: f64 = 0.0;
    for _ in 0..3 {
        let p = sphere_tangent(&mut rng);
        let u = random_signal(&mut rng, &sphere, 2.0, 4);
        curved = curved.max(check_flow_formula(&sphere, &p.x, &p.v, &u, STEP).unwrap());
        let c = rng.random_range(-1.0..1.0);
        let end = integrate_lifted(&sphere, &p, &ControlSignal::constant(&[c], 2.0), STEP)
            .unwrap()
            .final_tangent()
            .unwrap();
        oracle = oracle.max((end.v - ((&az + &bx * c) * 2.0).exp() * &p.v).norm());
    }
    let elapsed = start.elapsed();
    outcome(
        linear <= FLOW_LINEAR_TOL && curved <= FLOW_SPHERE_TOL && oracle <= EXPM_ORACLE_TOL && elapsed < FLOW_BUDGET,
        format!(
            "R² {linear:.2e} (tol {FLOW_LINEAR_TOL:.0e}), S² {curved:.2e} (tol {FLOW_SPHERE_TOL:.0e}), expm oracle {oracle:.2e}, {elapsed:.2?}"
        ),
    )
}

/// Max (base, fiber) deviations over tuples; `matching` restricts `u` to the
/// constant value `v(s)`.
fn invariance_run(sys: &AffineSystem, rng: &mut ChaCha8Rng, tuples: usize, matching: bool) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..tuples {
        let x = random_tangent(rng, sys.manifold()).x;
        let v_sig = random_signal(rng, sys, 1.0, 3);
        let s = if k == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
        let u_sig = if matching {
            ControlSignal::constant(v_sig.eval(s).as_slice(), 1.0)
        } else {
            random_signal(rng, sys, 1.0, 3)
        };
        let t = rng.random_range(0.0..1.0);
        let (b, f) = check_invariance(sys, &x, s, &v_sig, t, &u_sig, STEP).unwrap();
        worst = (worst.0.max(b), worst.1.max(f));
    }
    worst
}

fn criterion_4() -> (Outcome, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let plane = systems::plane_rotation();
    let sphere = systems::sphere_bilinear();
    let lin = invariance_run(&plane, &mut rng, 10, false);
    let sph = invariance_run(&sphere, &mut rng, 10, false);
    let lin_m = invariance_run(&plane, &mut rng, 10, true);
    let sph_m = invariance_run(&sphere, &mut rng, 10, true);
    let passed = lin.0.max(lin.1) <= INVARIANCE_LINEAR_TOL && sph.0.max(sph.1) <= INVARIANCE_SPHERE_TOL;
    let info = format!(
        "with u constant equal to v(s): R² base {:.2e} fiber {:.2e}, S² base {:.2e} fiber {:.2e}",
        lin_m.0, lin_m.1, sph_m.0, sph_m.1
    );
    (
        outcome(
            passed,
            format!(
                "random tuples: R² base {:.2e} fiber {:.2e} (tol {INVARIANCE_LINEAR_TOL:.0e}), S² base {:.2e} fiber {:.2e} (tol {INVARIANCE_SPHERE_TOL:.0e})",
                lin.0, lin.1, sph.0, sph.1
            ),
        ),
        info,
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let shipped = [
        ("line", systems::line_integrator()),
        ("plane_rotation", systems::plane_rotation()),
        ("sphere_bilinear", systems::sphere_bilinear()),
        ("sphere_rotations", systems::sphere_rotations()),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, sys) in &shipped {
        let m = *sys.manifold();
        let n = m.intrinsic_dim();
        let fields = sys.fields();
        let mut max_lifted = 0;
        let mut base_full = true;
        for _ in 0..100 {
            let p = random_tangent(&mut rng, &m);
            max_lifted = max_lifted.max(lifted_rank_at(&fields, &p, RANK_DEPTH, &m).unwrap().rank);
            base_full &= rank_at(&fields, &p.x, RANK_DEPTH, &m).unwrap().rank == n;
        }
        passed &= max_lifted <= n && base_full;
        parts.push(format!("{name}: max lifted rank {max_lifted} vs n = {n}, base rank n: {base_full}"));
    }
    let elapsed = start.elapsed();
    passed &= elapsed < RANK_BUDGET;
    outcome(passed, format!("{}; {elapsed:.2?}", parts.join("; ")))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for sys in [systems::plane_rotation(), systems::sphere_bilinear()] {
        let m = *sys.manifold();
        let samples: Vec<TangentPoint> = (0..20).map(|_| random_tangent(&mut rng, &m)).collect();
        worst = worst.max(check_lift_algebra_identity(&sys.fields(), &samples, 3));
    }
    outcome(worst <= LIFT_ALGEBRA_TOL, format!("max deviation {worst:.2e} (tol {LIFT_ALGEBRA_TOL:.0e})"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let sys = systems::plane_rotation();
    let oracle = SteeringOracle::linear_gramian(&sys, 1.0).unwrap();
    let a = Matrix::from_row_slice(2, 2, &[0., -1., 1., 0.]);
    let mut fiber: f64 = 0.0;
    let mut base: f64 = 0.0;
    for _ in 0..10 {
        let p0 = flat_tangent(&mut rng, 2);
        let y = uniform_vec(&mut rng, 2, 1.0);
        let w = check_fiber_reachability(&sys, &oracle, &p0, &y, STEP).unwrap();
        base = base.max((&w.endpoint.x - &y).norm());
        // The fiber map of dx/dt = A x + b u is e^{A t} for every control.
        fiber = fiber.max((&w.endpoint.v - (&a * w.duration).exp() * &p0.v).norm());
    }
    outcome(
        fiber <= WITNESS_FIBER_TOL && base <= GRAMIAN_STEER_TOL,
        format!("fiber error {fiber:.2e} (tol {WITNESS_FIBER_TOL:.0e}), base miss {base:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut passed = true;
    let mut parts = Vec::new();
    for eps in [0.25, 0.1] {
        // (a) frozen fibers on the line.
        let start = Instant::now();
        let sys = systems::line_integrator();
        let oracle = SteeringOracle::linear_gramian(&sys, 1.0).unwrap();
        let metric = TangentMetric::default_for(*sys.manifold());
        let s = TangentPoint::from_slices(&[0.], &[0.]);
        let t = TangentPoint::from_slices(&[0.], &[1.]);
        let bound = (1.0f64 / eps).ceil() as usize;
        let ok = match plan_chain(&sys, &oracle, &metric, &s, &t, &ChainOptions::new(eps, CHAIN_T)) {
            Ok(chain) => {
                let report = verify_chain(&sys, &metric, &chain);
                let elapsed = start.elapsed();
                parts.push(format!("line eps {eps}: {} legs (bound {bound}), verified {}, {elapsed:.2?}", chain.legs.len(), report.passed));
                report.passed && chain.legs.len() == bound && elapsed < CHAIN_BUDGET
            }
            Err(e) => {
                parts.push(format!("line eps {eps}: {e}"));
                false
            }
        };
        passed &= ok;

        // (b) rotation system, random endpoints.
        let start = Instant::now();
        let sys = systems::plane_rotation();
        let oracle = SteeringOracle::linear_gramian(&sys, 1.0).unwrap();
        let metric = TangentMetric::default_for(*sys.manifold());
        let s = flat_tangent(&mut rng, 2);
        let t = flat_tangent(&mut rng, 2);
        let opts = ChainOptions { max_legs: Some(CHAIN_MAX_LEGS), ..ChainOptions::new(eps, CHAIN_T) };
        let ok = match plan_chain(&sys, &oracle, &metric, &s, &t, &opts) {
            Ok(chain) => {
                let report = verify_chain(&sys, &metric, &chain);
                let elapsed = start.elapsed();
                parts.push(format!("rotation eps {eps}: {} legs, verified {}, {elapsed:.2?}", chain.legs.len(), report.passed));
                report.passed && chain.legs.len() <= CHAIN_MAX_LEGS && elapsed < CHAIN_BUDGET
            }
            Err(e) => {
                parts.push(format!("rotation eps {eps}: {e}"));
                false
            }
        };
        passed &= ok;
    }
    outcome(passed, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let flat = TangentMetric::default_for(Manifold::flat(3));
    let sphere = TangentMetric::default_for(Manifold::Sphere2);
    let mut closed_form: f64 = 0.0;
    let mut same_fiber_exact = true;
    let mut submersion = true;
    for _ in 0..1000 {
        let (p, q) = (flat_tangent(&mut rng, 3), flat_tangent(&mut rng, 3));
        let d = flat.distance(&p, &q).unwrap();
        let sq: f64 = p.x.iter().zip(q.x.iter()).chain(p.v.iter().zip(q.v.iter())).map(|(a, b)| (a - b) * (a - b)).sum();
        closed_form = closed_form.max((d - sq.sqrt()).abs());
        submersion &= flat.base_distance(&p, &q) <= d;
        let w = TangentPoint::new(p.x.clone(), q.v.clone());
        same_fiber_exact &= flat.distance(&p, &w).unwrap() == (&q.v - &p.v).norm();

        let (a, b) = (sphere_tangent(&mut rng), sphere_tangent(&mut rng));
        if a.x.dot(&b.x) > -0.999 {
            submersion &= sphere.base_distance(&a, &b) <= sphere.distance(&a, &b).unwrap();
        }
        let c = TangentPoint::new(a.x.clone(), Manifold::Sphere2.project_tangent(&a.x, &b.v).unwrap());
        same_fiber_exact &= sphere.distance(&a, &c).unwrap() == (&c.v - &a.v).norm();
    }
    outcome(
        closed_form <= DISTANCE_TOL && same_fiber_exact && submersion,
        format!("closed form {closed_form:.2e} (tol {DISTANCE_TOL:.0e}), same-fiber exact: {same_fiber_exact}, submersion bound: {submersion}"),
    )
}

fn main() -> ExitCode {
    let (c4, c4_info) = criterion_4();
    let results = [
        ("bracket identity", criterion_1()),
        ("pi-relatedness and projection", criterion_2()),
        ("flow formula", criterion_3()),
        ("invariance", c4),
        ("lifted rank obstruction", criterion_5()),
        ("lift-algebra identity", criterion_6()),
        ("fiber reachability witness", criterion_7()),
        ("chain controllability", criterion_8()),
        ("tangent bundle distances", criterion_9()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if i == 3 {
            println!("criterion 4 info: {c4_info}");
        }
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
