"""Tests for flows: ODE engines, Lie derivatives, the first-variation
identity for vector fields, and the interpolation pipeline."""

import numpy as np
import pytest
from scipy.linalg import expm

from gcflow import worked_example as we
from gcflow.fields import GridSpec
from gcflow.flows import (
    FlowEscapeError,
    dbar_identity_residual_grid,
    dbar_identity_residual_pointwise,
    hamiltonian_field,
    integrate_flow,
    interpolate_holomorphic,
    lie_derivative,
    pointwise_pullback_transport,
    transport_velocity,
)
from gcflow.gc_core import poisson_from_sigma_matrix, sigma_matrix_from_complex_frame

RNG = np.random.default_rng(515151)
PTS = we.random_ball_points(RNG, 30, radius=1.2)


def complex_step_jacobian(fn, pts, h=1e-30):
    """Machine-precision Jacobian of an analytic map via complex-step."""
    pts = np.asarray(pts, dtype=float)
    cols = []
    for b in range(pts.shape[-1]):
        p = pts.astype(complex)
        p[..., b] += 1j * h
        cols.append(np.imag(fn(p)) / h)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# Pointwise ODE engines against closed forms
# ---------------------------------------------------------------------------

def test_integrate_flow_matches_closed_form():
    s = 0.8
    got = integrate_flow(lambda t, p: we.transport_field(t, p), PTS, 0.0, s, steps=96)
    want = we.flow_map(s, PTS)
    assert np.abs(got - want).max() < 1e-10


def test_integrate_flow_escape_detection():
    v = lambda t, p: p  # radially expanding flow
    pts = np.array([[1.0, 0.0, 0.0, 0.0]])
    with pytest.raises(FlowEscapeError):
        integrate_flow(v, pts, 0.0, 2.0, steps=64, bound=2.0)
    # without a bound the same integration succeeds
    out = integrate_flow(v, pts, 0.0, 2.0, steps=64)
    assert np.isfinite(out).all()


def test_pullback_kinds_against_linear_flow():
    rng = np.random.default_rng(7)
    C = 0.3 * rng.standard_normal((4, 4))
    velocity = lambda t, p: np.einsum("ab,...b->...a", C, p)
    vjac = lambda t, p: np.broadcast_to(C, p.shape[:-1] + (4, 4)).copy()
    pts = rng.standard_normal((12, 4))
    t1 = 1.0
    A = expm(t1 * C)
    Ainv = np.linalg.inv(A)
    M = rng.standard_normal((4, 4))
    w = rng.standard_normal(4)

    cases = {
        "scalar": (lambda x: np.sin(x[..., 0]) * np.cos(x[..., 3]),
                   lambda x: np.sin(x[..., 0]) * np.cos(x[..., 3])),
        "vector": (lambda x: np.broadcast_to(w, x.shape[:-1] + (4,)).copy(),
                   lambda x: np.broadcast_to(Ainv @ w, x.shape[:-1] + (4,)).copy()),
        "covector": (lambda x: np.broadcast_to(w, x.shape[:-1] + (4,)).copy(),
                     lambda x: np.broadcast_to(A.T @ w, x.shape[:-1] + (4,)).copy()),
        "matrix": (lambda x: np.broadcast_to(M, x.shape[:-1] + (4, 4)).copy(),
                   lambda x: np.broadcast_to(Ainv @ M @ A, x.shape[:-1] + (4, 4)).copy()),
        "bivector": (lambda x: np.broadcast_to(M, x.shape[:-1] + (4, 4)).copy(),
                     lambda x: np.broadcast_to(Ainv @ M @ Ainv.T, x.shape[:-1] + (4, 4)).copy()),
        "twoform": (lambda x: np.broadcast_to(M, x.shape[:-1] + (4, 4)).copy(),
                    lambda x: np.broadcast_to(A.T @ M @ A, x.shape[:-1] + (4, 4)).copy()),
    }
    for kind, (tensor0, closed) in cases.items():
        got = pointwise_pullback_transport(
            velocity, vjac, tensor0, pts, kind, t1=t1, steps=96
        )
        if kind == "scalar":
            want = closed(np.einsum("ab,...b->...a", A, pts))
        else:
            want = closed(pts)
        assert np.abs(got - want).max() < 1e-9, kind


def test_pullback_reproduces_structure_family():
    t1 = 1.0
    vel = lambda t, p: we.transport_field(t, p)
    vjac = lambda t, p: we.transport_field_gradient(t, p)
    got = pointwise_pullback_transport(
        vel, vjac, lambda p: we.complex_structure(0.0, p), PTS, "matrix",
        t1=t1, steps=128,
    )
    want = we.complex_structure(t1, PTS)
    assert np.abs(got - want).max() < 1e-9


def test_pullback_reproduces_member_bivector_and_preserves_poisson():
    t1 = 0.7
    vel = lambda t, p: we.transport_field(t, p)
    vjac = lambda t, p: we.transport_field_gradient(t, p)
    sig = pointwise_pullback_transport(
        vel, vjac, we.sigma_matrix, PTS, "bivector", t1=t1, steps=128
    )
    assert np.abs(sig - we.sigma_t_matrix(t1, PTS)).max() < 1e-9
    # the real Poisson bivector is invariant under its own Hamiltonian flows
    Q = pointwise_pullback_transport(
        vel, vjac, we.poisson_matrix, PTS, "bivector", t1=t1, steps=128
    )
    assert np.abs(Q - we.poisson_matrix(PTS)).max() < 1e-9


# ---------------------------------------------------------------------------
# Grid Lie derivatives: semantics pinned to the pullback engine
# ---------------------------------------------------------------------------

def _trig_velocity(p):
    x1, y1, x2, y2 = (p[..., d] for d in range(4))
    return np.stack(
        [
            0.30 * np.sin(y1),
            0.20 * np.cos(x2),
            0.25 * np.sin(x1 + y2),
            0.15 * np.cos(x1),
        ],
        axis=-1,
    )


def _trig_matrix(p):
    x1, y1, x2, y2 = (p[..., d] for d in range(4))
    M = np.zeros(p.shape[:-1] + (4, 4), dtype=p.dtype)
    M[..., 0, 1] = np.sin(x2)
    M[..., 1, 2] = 0.5 * np.cos(y1)
    M[..., 2, 0] = 0.7 * np.sin(y2 + x1)
    M[..., 3, 3] = 0.4 * np.cos(x2)
    return M


def test_lie_derivative_matches_pullback_derivative():
    grid = GridSpec(2, 8)
    pts = grid.points
    eps = 1e-3
    vel = lambda t, p: _trig_velocity(p)
    vjac = lambda t, p: complex_step_jacobian(_trig_velocity, p)
    v_grid = _trig_velocity(pts)

    def tensors(kind):
        if kind == "scalar":
            fn = lambda p: np.sin(p[..., 0]) * np.cos(p[..., 3]) + 0.3 * np.cos(p[..., 2])
        elif kind in ("vector", "covector"):
            fn = lambda p: _trig_velocity(np.flip(p, axis=-1))
        elif kind == "matrix":
            fn = _trig_matrix
        else:  # bivector / twoform: antisymmetric
            fn = lambda p: _trig_matrix(p) - np.swapaxes(_trig_matrix(p), -1, -2)
        return fn

    for kind in ("scalar", "vector", "covector", "matrix", "bivector", "twoform"):
        fn = tensors(kind)
        got = lie_derivative(grid, v_grid, fn(pts), kind)
        plus = pointwise_pullback_transport(vel, vjac, fn, pts, kind, t1=eps, steps=4)
        minus = pointwise_pullback_transport(vel, vjac, fn, pts, kind, t1=-eps, steps=4)
        fd = (plus - minus) / (2 * eps)
        assert np.abs(got - fd).max() < 5e-6, kind


def test_hamiltonian_flow_preserves_constant_bivector():
    grid = GridSpec(2, 8)
    S = np.array([[0.0, 1.3], [-1.3, 0.0]], dtype=complex)
    Q = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, S))
    pts = grid.points
    f = 0.4 * np.sin(pts[..., 0]) * np.cos(pts[..., 3]) + 0.3 * np.cos(pts[..., 2])
    v = hamiltonian_field(grid, Q, f)
    Qf = np.broadcast_to(Q, grid.shape + (4, 4)).copy()
    LQ = lie_derivative(grid, v, Qf, "bivector")
    assert np.abs(LQ).max() < 1e-12
    assert np.abs(transport_velocity(grid, Q, f) + 0.5 * v).max() < 1e-15


# ---------------------------------------------------------------------------
# First-variation identity for vector fields
# ---------------------------------------------------------------------------

def test_identity_pointwise_on_integrable_family():
    X = we.PolynomialVectorField.random(RNG, degree=3, scale=0.8)
    for t in (0.0, 0.4, 1.0):
        I = we.complex_structure(t, PTS)
        gI = we.complex_structure_gradient(t, PTS)
        r = dbar_identity_residual_pointwise(I, gI, X.value(PTS), X.jacobian(PTS))
        assert r.max() < 1e-12, t


def test_identity_pointwise_detects_nonintegrable_structure():
    rng = np.random.default_rng(99)
    C1 = 0.4 * rng.standard_normal((4, 4))
    C2 = 0.4 * rng.standard_normal((4, 4))
    I0 = np.kron(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))

    def structure(p):
        A = (
            np.broadcast_to(np.eye(4), p.shape[:-1] + (4, 4))
            + p[..., 0, None, None] * C1
            + p[..., 3, None, None] * C2
        )
        return A @ I0 @ np.linalg.inv(A)

    pts = we.random_ball_points(rng, 25, radius=0.8)
    I = structure(pts)
    # complex-step gives (..., row, col, deriv); move the derivative axis first
    gI = np.moveaxis(complex_step_jacobian(structure, pts), -1, -3)
    X = we.PolynomialVectorField.random(rng, degree=2, scale=1.0)
    r = dbar_identity_residual_pointwise(I, gI, X.value(pts), X.jacobian(pts))
    assert r.max() > 1e-3


def test_identity_grid_flat_structure():
    grid = GridSpec(2, 8)
    pts = grid.points
    I0 = np.kron(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    I = np.broadcast_to(I0, grid.shape + (4, 4)).copy()
    X = _trig_velocity(pts)
    assert dbar_identity_residual_grid(grid, I, X) < 1e-12


# ---------------------------------------------------------------------------
# Interpolation pipeline on an exactly consistent analytic family
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline_result():
    grid = GridSpec(2, 16)
    S = np.array([[0.0, 0.9], [-0.9, 0.0]], dtype=complex)
    Q = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, S))
    pts = grid.points
    h = 0.22 * np.cos(pts[..., 0]) * np.sin(pts[..., 3]) + 0.18 * np.sin(pts[..., 2])
    solved = interpolate_holomorphic(grid, Q, h, nodes=16, solve_potential=True)
    direct = interpolate_holomorphic(grid, Q, h, nodes=16, solve_potential=False)
    return grid, Q, h, solved, direct


def test_interpolation_invariants(pipeline_result):
    _, _, _, solved, _ = pipeline_result
    gaps = solved.invariant_gaps()
    assert gaps["complex_structure"] < 1e-8
    assert gaps["sigma"] < 1e-8
    assert gaps["poisson"] < 1e-8


def test_interpolation_gauge_equations(pipeline_result):
    _, _, _, solved, _ = pipeline_result
    assert solved.gauge_residuals["first"] < 1e-12
    assert solved.gauge_residuals["second"] < 1e-9


def test_interpolation_recovers_reference_potential(pipeline_result):
    _, _, _, solved, _ = pipeline_result
    assert solved.potential_vs_reference < 1e-8
    assert solved.potential_solve_residual < 1e-9


def test_interpolation_direct_and_solved_agree(pipeline_result):
    _, _, _, solved, direct = pipeline_result
    assert np.abs(solved.B - direct.B).max() < 1e-10
    assert np.abs(solved.sigma_transported - direct.sigma_transported).max() < 1e-10
