//! Example systems.

use crate::fields::VectorField;
use crate::flow::AffineSystem;
use crate::manifold::Manifold;
use crate::{Matrix, Vector};

/// `dx/dt = u` on the line, `|u| ≤ 5`.
pub fn line_integrator() -> AffineSystem {
    AffineSystem::new(
        Manifold::flat(1),
        VectorField::zero(1),
        vec![VectorField::constant(Vector::from_element(1, 1.0))],
        vec![(-5.0, 5.0)],
    )
    .expect("valid system")
}

/// `dx/dt = A x + b u` on the plane with `A` the quarter-turn generator and
/// `b = (0, 1)`, `|u| ≤ 20`.
pub fn plane_rotation() -> AffineSystem {
    AffineSystem::new(
        Manifold::flat(2),
        VectorField::linear(Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])),
        vec![VectorField::constant(Vector::from_column_slice(&[0.0, 1.0]))],
        vec![(-20.0, 20.0)],
    )
    .expect("valid system")
}

/// Skew matrix of `ω ↦ ω × x` about coordinate axis `k`.
pub fn axis_generator(k: usize) -> Matrix {
    let mut a = Matrix::zeros(3, 3);
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    a[(j, i)] = 1.0;
    a[(i, j)] = -1.0;
    a
}

/// Bilinear system `dx/dt = A x + (B x) u` on S² with drift rotation about
/// `x₃` and a single control rotating about `x₁`, `|u| ≤ 1`.
pub fn sphere_bilinear() -> AffineSystem {
    AffineSystem::new(
        Manifold::Sphere2,
        VectorField::linear(axis_generator(2)),
        vec![VectorField::linear(axis_generator(0))],
        vec![(-1.0, 1.0)],
    )
    .expect("valid system")
}

/// Driftless S² system with controlled rotations about `x₃` and `x₁`.
pub fn sphere_rotations() -> AffineSystem {
    AffineSystem::new(
        Manifold::Sphere2,
        VectorField::zero(3),
        vec![VectorField::linear(axis_generator(2)), VectorField::linear(axis_generator(0))],
        vec![(-1.0, 1.0), (-1.0, 1.0)],
    )
    .expect("valid system")
}
