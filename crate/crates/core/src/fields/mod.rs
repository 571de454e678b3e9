//! Vector fields with Jacobian access, their complete lifts to the tangent
//! bundle, and Lie brackets.
//!
//! Linear and polynomial fields carry exact Jacobians and are closed under
//! bracket and lift, so derived fields stay exact. Everything else falls back
//! to central finite differences.

pub mod poly;

use std::fmt;
use std::sync::Arc;

use crate::manifold::TangentPoint;
use crate::{Matrix, Vector};

pub use poly::{Monomial, PolyField, Polynomial};

type ValueFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Central-difference step for a function of `x` whose values carry
/// `nesting` levels of finite-difference noise.
///
/// The base case is `eps^(1/3) (1 + |x|_inf)`; each nesting level widens the
/// exponent so the next difference quotient does not amplify the noise of
/// the previous one.
pub fn fd_step(x: &Vector, nesting: u32) -> f64 {
    let scale = 1.0 + x.amax();
    f64::EPSILON.powf(1.0 / (3.0 + nesting as f64)) * scale
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Descriptor {
    Linear(Matrix),
    Polynomial,
    Custom,
}

#[derive(Clone)]
enum Repr {
    Linear(Matrix),
    Poly(Arc<PolyField>),
    Custom {
        dim: usize,
        value: ValueFn,
        jacobian: Option<JacobianFn>,
    },
    Combination(Vec<(f64, VectorField)>),
    Bracket(Box<VectorField>, Box<VectorField>),
    Lift(Box<VectorField>),
}

/// A smooth vector field on an open subset of `R^N`.
#[derive(Clone)]
pub struct VectorField {
    repr: Repr,
    mode: JacobianMode,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Repr::Linear(a) => format!("Linear({a:?})"),
            Repr::Poly(p) => format!("Polynomial(dim={})", p.dim()),
            Repr::Custom { dim, .. } => format!("Custom(dim={dim})"),
            Repr::Combination(terms) => format!("Combination({} terms)", terms.len()),
            Repr::Bracket(a, b) => format!("[{a:?}, {b:?}]"),
            Repr::Lift(x) => format!("Lift({x:?})"),
        };
        write!(f, "VectorField {{ {kind}, {:?} }}", self.mode)
    }
}

impl VectorField {
    pub fn linear(a: Matrix) -> Self {
        assert!(a.is_square(), "linear field needs a square matrix");
        VectorField { repr: Repr::Linear(a), mode: JacobianMode::Analytic }
    }

    pub fn polynomial(p: PolyField) -> Self {
        VectorField { repr: Repr::Poly(Arc::new(p)), mode: JacobianMode::Analytic }
    }

    pub fn constant(c: Vector) -> Self {
        Self::polynomial(PolyField::constant(&c))
    }

    pub fn zero(dim: usize) -> Self {
        Self::linear(Matrix::zeros(dim, dim))
    }

    /// A field given by a closure. Without a Jacobian closure the Jacobian is
    /// computed by central differences.
    pub fn custom<F>(dim: usize, value: F) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        VectorField {
            repr: Repr::Custom { dim, value: Arc::new(value), jacobian: None },
            mode: JacobianMode::FiniteDifference,
        }
    }

    pub fn custom_with_jacobian<F, J>(dim: usize, value: F, jacobian: J) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        J: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        VectorField {
            repr: Repr::Custom { dim, value: Arc::new(value), jacobian: Some(Arc::new(jacobian)) },
            mode: JacobianMode::Analytic,
        }
    }

    /// Forces finite-difference Jacobians even where an exact one exists.
    pub fn with_fd_jacobian(mut self) -> Self {
        self.mode = JacobianMode::FiniteDifference;
        self
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Linear(a) => a.nrows(),
            Repr::Poly(p) => p.dim(),
            Repr::Custom { dim, .. } => *dim,
            Repr::Combination(terms) => terms[0].1.dim(),
            Repr::Bracket(a, _) => a.dim(),
            Repr::Lift(x) => 2 * x.dim(),
        }
    }

    pub fn descriptor(&self) -> Descriptor {
        match &self.repr {
            Repr::Linear(a) => Descriptor::Linear(a.clone()),
            Repr::Poly(_) => Descriptor::Polynomial,
            _ => Descriptor::Custom,
        }
    }

    /// Exact polynomial form, when one is available and the field is in
    /// analytic mode.
    pub fn as_polynomial(&self) -> Option<PolyField> {
        if self.mode != JacobianMode::Analytic {
            return None;
        }
        match &self.repr {
            Repr::Linear(a) => Some(PolyField::linear(a)),
            Repr::Poly(p) => Some((**p).clone()),
            _ => None,
        }
    }

    /// How many layers of finite differencing feed into `value`.
    fn value_nesting(&self) -> u32 {
        match &self.repr {
            Repr::Linear(_) | Repr::Poly(_) | Repr::Custom { .. } => 0,
            Repr::Combination(terms) => terms.iter().map(|(_, f)| f.value_nesting()).max().unwrap_or(0),
            Repr::Bracket(a, b) => a.jacobian_nesting().max(b.jacobian_nesting()),
            Repr::Lift(x) => x.jacobian_nesting(),
        }
    }

    /// Nesting level of the Jacobian: one more than the value when differenced.
    fn jacobian_nesting(&self) -> u32 {
        match self.mode {
            JacobianMode::Analytic => self.value_nesting(),
            JacobianMode::FiniteDifference => self.value_nesting() + 1,
        }
    }

    pub fn value(&self, x: &Vector) -> Vector {
        match &self.repr {
            Repr::Linear(a) => a * x,
            Repr::Poly(p) => p.eval(x),
            Repr::Custom { value, .. } => value(x),
            Repr::Combination(terms) => terms
                .iter()
                .fold(Vector::zeros(x.len()), |acc, (c, f)| acc + f.value(x) * *c),
            Repr::Bracket(a, b) => {
                let av = a.value(x);
                let bv = b.value(x);
                b.jvp(x, &av) - a.jvp(x, &bv)
            }
            Repr::Lift(inner) => {
                let tp = TangentPoint::from_stacked(x);
                let h = inner.value(&tp.x);
                let vert = inner.jvp(&tp.x, &tp.v);
                stack(&h, &vert)
            }
        }
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        if self.mode == JacobianMode::FiniteDifference {
            return self.fd_jacobian(x);
        }
        match &self.repr {
            Repr::Linear(a) => a.clone(),
            Repr::Poly(p) => p.jacobian(x),
            Repr::Custom { jacobian: Some(j), .. } => j(x),
            Repr::Combination(terms) => terms
                .iter()
                .fold(Matrix::zeros(x.len(), x.len()), |acc, (c, f)| acc + f.jacobian(x) * *c),
            _ => self.fd_jacobian(x),
        }
    }

    fn fd_jacobian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let h = fd_step(x, self.value_nesting());
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            xp[j] = x[j] + h;
            let fp = self.value(&xp);
            xp[j] = x[j] - h;
            let fm = self.value(&xp);
            xp[j] = x[j];
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        jac
    }

    /// Jacobian-vector product `J(x) w`.
    pub fn jvp(&self, x: &Vector, w: &Vector) -> Vector {
        let analytic = self.mode == JacobianMode::Analytic;
        match &self.repr {
            Repr::Linear(a) if analytic => a * w,
            Repr::Poly(p) if analytic => p.jacobian(x) * w,
            Repr::Custom { jacobian: Some(j), .. } if analytic => j(x) * w,
            Repr::Combination(terms) if analytic => terms
                .iter()
                .fold(Vector::zeros(x.len()), |acc, (c, f)| acc + f.jvp(x, w) * *c),
            _ => {
                let wmax = w.amax();
                if wmax == 0.0 {
                    return Vector::zeros(self.dim());
                }
                let s = fd_step(x, self.value_nesting()) / wmax;
                (self.value(&(x + w * s)) - self.value(&(x - w * s))) / (2.0 * s)
            }
        }
    }

    /// `Σ c_k X_k`, exact when every term has a polynomial form.
    pub fn linear_combination(terms: &[(f64, &VectorField)]) -> Self {
        assert!(!terms.is_empty(), "empty linear combination");
        let dim = terms[0].1.dim();
        assert!(terms.iter().all(|(_, f)| f.dim() == dim), "dimension mismatch in combination");
        if let Some(mats) = terms
            .iter()
            .map(|(c, f)| match (&f.repr, f.mode) {
                (Repr::Linear(a), JacobianMode::Analytic) => Some(a * *c),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
        {
            return Self::linear(mats.into_iter().fold(Matrix::zeros(dim, dim), |acc, m| acc + m));
        }
        if let Some(polys) = terms
            .iter()
            .map(|(c, f)| f.as_polynomial().map(|p| (*c, p)))
            .collect::<Option<Vec<_>>>()
        {
            let comps = (0..dim)
                .map(|i| {
                    polys.iter().fold(Polynomial::zero(dim), |acc, (c, p)| {
                        acc.add(&p.components()[i].scale(*c))
                    })
                })
                .collect();
            return Self::polynomial(PolyField::new(comps));
        }
        let mode = if terms.iter().all(|(_, f)| f.mode == JacobianMode::Analytic) {
            JacobianMode::Analytic
        } else {
            JacobianMode::FiniteDifference
        };
        VectorField {
            repr: Repr::Combination(terms.iter().map(|(c, f)| (*c, (*f).clone())).collect()),
            mode,
        }
    }
}

fn stack(a: &Vector, b: &Vector) -> Vector {
    let n = a.len();
    Vector::from_fn(n + b.len(), |i, _| if i < n { a[i] } else { b[i - n] })
}

/// Lie bracket `[X, Y](x) = J_Y(x) X(x) − J_X(x) Y(x)`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    assert_eq!(x.dim(), y.dim(), "bracket of fields with different dimensions");
    if x.mode == JacobianMode::Analytic && y.mode == JacobianMode::Analytic {
        if let (Repr::Linear(a), Repr::Linear(b)) = (&x.repr, &y.repr) {
            return VectorField::linear(b * a - a * b);
        }
        if let (Some(p), Some(q)) = (x.as_polynomial(), y.as_polynomial()) {
            return VectorField::polynomial(p.bracket(&q));
        }
    }
    VectorField {
        repr: Repr::Bracket(Box::new(x.clone()), Box::new(y.clone())),
        mode: JacobianMode::FiniteDifference,
    }
}

/// The complete lift `X^c` of a base field.
#[derive(Clone, Debug)]
pub struct LiftedVectorField {
    base: VectorField,
}

impl LiftedVectorField {
    pub fn base(&self) -> &VectorField {
        &self.base
    }

    /// `(X(x), J_X(x) v)`: horizontal and vertical parts at `(x, v)`.
    pub fn eval(&self, p: &TangentPoint) -> (Vector, Vector) {
        (self.base.value(&p.x), self.base.jvp(&p.x, &p.v))
    }

    pub fn eval_stacked(&self, p: &TangentPoint) -> Vector {
        let (h, v) = self.eval(p);
        stack(&h, &v)
    }

    /// The lift as a field on `R^{2N}` in coordinates `(x, v)`.
    pub fn as_field(&self) -> VectorField {
        let b = &self.base;
        if b.mode == JacobianMode::Analytic {
            if let Repr::Linear(a) = &b.repr {
                let n = a.nrows();
                let mut big = Matrix::zeros(2 * n, 2 * n);
                big.view_mut((0, 0), (n, n)).copy_from(a);
                big.view_mut((n, n), (n, n)).copy_from(a);
                return VectorField::linear(big);
            }
            if let Some(p) = b.as_polynomial() {
                return VectorField::polynomial(p.complete_lift());
            }
        }
        VectorField {
            repr: Repr::Lift(Box::new(b.clone())),
            mode: JacobianMode::FiniteDifference,
        }
    }
}

pub fn complete_lift(x: &VectorField) -> LiftedVectorField {
    LiftedVectorField { base: x.clone() }
}

/// A smooth function on `R^N`.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    gradient: Option<GradientFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField {{ analytic_gradient: {} }}", self.gradient.is_some())
    }
}

impl ScalarField {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        ScalarField { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        ScalarField { value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = fd_step(x, 0);
        let mut xp = x.clone();
        Vector::from_fn(x.len(), |j, _| {
            xp[j] = x[j] + h;
            let fp = self.value(&xp);
            xp[j] = x[j] - h;
            let fm = self.value(&xp);
            xp[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
    }

    /// Directional derivative `(X f)(x) = ∇f(x) · X(x)`.
    pub fn derivative_along(&self, field: &VectorField) -> ScalarField {
        let f = self.clone();
        let field = field.clone();
        ScalarField::new(move |x| f.gradient(x).dot(&field.value(x)))
    }
}

/// A function on the tangent bundle.
#[derive(Clone)]
pub struct TangentFunction(Arc<dyn Fn(&TangentPoint) -> f64 + Send + Sync>);

impl TangentFunction {
    pub fn eval(&self, p: &TangentPoint) -> f64 {
        (self.0)(p)
    }
}

/// `f^c(x, v) = ∇f(x) · v`.
pub fn complete_lift_function(f: &ScalarField) -> TangentFunction {
    let f = f.clone();
    TangentFunction(Arc::new(move |p| f.gradient(&p.x).dot(&p.v)))
}

/// `f^v = f ∘ π`.
pub fn vertical_lift_function(f: &ScalarField) -> TangentFunction {
    let f = f.clone();
    TangentFunction(Arc::new(move |p| f.value(&p.x)))
}

/// Max deviation of the horizontal part of `X^c` from `X ∘ π` over the samples.
pub fn check_pi_related(x: &VectorField, samples: &[TangentPoint]) -> f64 {
    let lift = complete_lift(x);
    samples
        .iter()
        .map(|p| (lift.eval(p).0 - x.value(&p.x)).norm())
        .fold(0.0, f64::max)
}

/// Max deviation between `[X^c, Y^c]` (bracket taken on the `2N`-dimensional
/// representation of the lifts) and `[X, Y]^c` over the samples.
pub fn check_bracket_identity(x: &VectorField, y: &VectorField, samples: &[TangentPoint]) -> f64 {
    let lhs = lie_bracket(&complete_lift(x).as_field(), &complete_lift(y).as_field());
    let rhs = complete_lift(&lie_bracket(x, y));
    samples
        .iter()
        .map(|p| (lhs.value(&p.stacked()) - rhs.eval_stacked(p)).norm())
        .fold(0.0, f64::max)
}
