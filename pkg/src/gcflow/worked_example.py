"""Closed-form reference model: a holomorphic Poisson plane with a rank drop.

The model lives on C^2 with holomorphic coordinates ``(w, z)`` (real
coordinates ``(x1, y1, x2, y2)``, ``w = x1 + i y1``, ``z = x2 + i y2``) and
carries the holomorphic Poisson bivector

    sigma = w d/dw ^ d/dz,

whose rank drops from two to zero along the complex line ``{w = 0}``: the
induced generalized complex structure is of symplectic type off that line
and of complex type on it.

The module provides every quantity of the associated deformation family in
closed form — structures, their spatial gradients, the interpolation
two-form path, the static potential, the transport vector field and its
flow — so numerical pipelines can be validated pointwise at machine
precision, with no grids or windows involved.

Family conventions (matching the rest of the package):

- ``B(t) = i t dz ^ dzbar`` (a real (1,1) form for every member structure).
- ``I(t) = I0 + Q M_B(t)`` exactly, where ``Q`` is the real Poisson
  bivector of ``sigma`` (the shear of the triangular block structure by
  ``B(t)`` is again triangular with this tangent block).
- The potential generating the path is static: ``dB/dt = i del dbar f``
  with ``f = z zbar``, with respect to every ``I(t)`` simultaneously.
- The transport field is ``Y(t) = -(1/2) Q # df`` = realification of
  ``i w zbar d/dw``; its flow fixes ``z`` and multiplies ``w`` by
  ``exp(i s zbar)``, so the time-one flow from ``(w, z) = (1, 1)`` lands at
  ``w = exp(i)``.
- ``u(t) = w exp(i t zbar)`` together with ``z`` are holomorphic
  coordinates for ``I(t)``, and in them the bivector takes the original
  normal form ``u d/du ^ d/dz``.

All functions are vectorised over leading axes of ``points`` (shape
``(..., 4)``, real coordinates).
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .fields import (
    frame_matrices,
    realified_vector,
    standard_complex_structure,
)
from .gc_core import (
    poisson_from_sigma_matrix,
    sigma_matrix_from_complex_frame,
    sigma_matrix_from_poisson,
)

__all__ = [
    "N_COMPLEX",
    "DIM",
    "w_of",
    "z_of",
    "points_from_complex",
    "sigma_frame_components",
    "sigma_matrix",
    "poisson_matrix",
    "poisson_matrix_gradient",
    "b_path_matrix",
    "b_path_rate",
    "complex_structure",
    "complex_structure_rate",
    "complex_structure_gradient",
    "sigma_t_matrix",
    "potential",
    "potential_gradient",
    "transport_field",
    "transport_field_gradient",
    "flow_map",
    "holomorphic_coordinate",
    "structure_coframe",
    "complex_locus_distance",
    "random_ball_points",
    "PolynomialVectorField",
]

N_COMPLEX = 2
DIM = 4


# ---------------------------------------------------------------------------
# Coordinates
# ---------------------------------------------------------------------------

def w_of(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return p[..., 0] + 1j * p[..., 1]


def z_of(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return p[..., 2] + 1j * p[..., 3]


def points_from_complex(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return np.stack([w.real, w.imag, z.real, z.imag], axis=-1)


def random_ball_points(rng: np.random.Generator, count: int, radius: float = 1.0) -> np.ndarray:
    """Uniform sample of ``count`` points from the real 4-ball of given radius."""
    out = np.empty((count, DIM))
    have = 0
    while have < count:
        cand = rng.uniform(-radius, radius, size=(2 * count, DIM))
        keep = cand[(cand ** 2).sum(axis=1) <= radius ** 2]
        take = min(count - have, keep.shape[0])
        out[have:have + take] = keep[:take]
        have += take
    return out


# ---------------------------------------------------------------------------
# The bivector and its matrices
# ---------------------------------------------------------------------------

def sigma_frame_components(points: np.ndarray) -> np.ndarray:
    """Antisymmetric complex frame matrix ``S`` with ``S[0, 1] = w``."""
    w = w_of(points)
    S = np.zeros(w.shape + (N_COMPLEX, N_COMPLEX), dtype=complex)
    S[..., 0, 1] = w
    S[..., 1, 0] = -w
    return S


def sigma_matrix(points: np.ndarray) -> np.ndarray:
    """Real-frame matrix of the holomorphic bivector (maps covectors to vectors)."""
    return sigma_matrix_from_complex_frame(N_COMPLEX, sigma_frame_components(points))


def poisson_matrix(points: np.ndarray) -> np.ndarray:
    """Real Poisson bivector matrix ``Q = -4 Im(sigma)``."""
    return poisson_from_sigma_matrix(sigma_matrix(points))


def poisson_matrix_gradient(points: np.ndarray) -> np.ndarray:
    """Spatial gradient ``G[..., b, :, :] = d(Q)/d(coordinate b)``.

    ``Q`` is (real-)linear in ``w``, so the gradient is constant: only the
    derivatives along the first two coordinates are nonzero.
    """
    p = np.asarray(points, dtype=float)
    base = p.shape[:-1]
    G = np.zeros(base + (DIM, DIM, DIM))
    for b, val in ((0, 1.0), (1, 1j)):
        S = np.zeros((N_COMPLEX, N_COMPLEX), dtype=complex)
        S[0, 1] = val
        S[1, 0] = -val
        dQ = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(N_COMPLEX, S))
        G[..., b, :, :] = dQ
    return G


# ---------------------------------------------------------------------------
# The interpolation family
# ---------------------------------------------------------------------------

def b_path_matrix(t: float, points: np.ndarray = None) -> np.ndarray:
    """Matrix of ``B(t) = i t dz ^ dzbar = 2 t dx2 ^ dy2`` (constant in space)."""
    B = np.zeros((DIM, DIM))
    B[2, 3] = -2.0 * t
    B[3, 2] = 2.0 * t
    if points is not None:
        base = np.asarray(points).shape[:-1]
        B = np.broadcast_to(B, base + (DIM, DIM)).copy()
    return B


def b_path_rate(points: np.ndarray = None) -> np.ndarray:
    """``dB/dt = i dz ^ dzbar`` (constant in space and time)."""
    return b_path_matrix(1.0, points)


def complex_structure(t: float, points: np.ndarray) -> np.ndarray:
    """``I(t) = I0 + Q M_B(t)`` — the tangent block of the sheared structure."""
    I0 = standard_complex_structure(N_COMPLEX)
    return I0 + poisson_matrix(points) @ b_path_matrix(t)


def complex_structure_rate(t: float, points: np.ndarray) -> np.ndarray:
    """``dI/dt = Q dM_B/dt`` (the shear rate of the tangent block)."""
    return poisson_matrix(points) @ b_path_rate()


def complex_structure_gradient(t: float, points: np.ndarray) -> np.ndarray:
    """Spatial gradient ``G[..., b, :, :] = d(I(t))/d(coordinate b)``."""
    return poisson_matrix_gradient(points) @ b_path_matrix(t)


def sigma_t_matrix(t: float, points: np.ndarray) -> np.ndarray:
    """The member bivector ``sigma(t) = -(1/4)(I(t) + i) Q``.

    Its imaginary part recovers the (t-independent) real bivector ``Q``; it
    is of type (2,0) with respect to ``I(t)``.
    """
    return sigma_matrix_from_poisson(complex_structure(t, points), poisson_matrix(points))


# ---------------------------------------------------------------------------
# Potential, transport field, flow
# ---------------------------------------------------------------------------

def potential(points: np.ndarray) -> np.ndarray:
    """The static potential ``f = z zbar`` generating the path."""
    z = z_of(points)
    return (z * np.conj(z)).real


def potential_gradient(points: np.ndarray) -> np.ndarray:
    """Real gradient ``df`` (covector components)."""
    p = np.asarray(points, dtype=float)
    g = np.zeros_like(p)
    g[..., 2] = 2.0 * p[..., 2]
    g[..., 3] = 2.0 * p[..., 3]
    return g


def transport_field(t: float, points: np.ndarray) -> np.ndarray:
    """``Y = -(1/2) Q # df``: realification of ``i w zbar d/dw`` (t-independent).

    Generates the family: ``dI/dt`` equals the Lie derivative of ``I(t)``
    along this field.
    """
    w = w_of(points)
    z = z_of(points)
    A = np.zeros(w.shape + (N_COMPLEX,), dtype=complex)
    A[..., 0] = 1j * w * np.conj(z)
    return realified_vector(N_COMPLEX, A)


def transport_field_gradient(t: float, points: np.ndarray) -> np.ndarray:
    """Jacobian ``(grad Y)[..., a, b] = d Y^a / d x^b`` in closed form."""
    p = np.asarray(points, dtype=float)
    base = p.shape[:-1]
    w = w_of(points)
    z = np.conj(z_of(points))
    # holomorphic component A = i w zbar: dA/dx1 = i zbar, dA/dy1 = -zbar,
    # dA/dx2 = i w, dA/dy2 = w  (zbar = x2 - i y2)
    dA = np.zeros(base + (DIM,), dtype=complex)
    dA[..., 0] = 1j * z
    dA[..., 1] = -z
    dA[..., 2] = 1j * w
    dA[..., 3] = w
    G = np.zeros(base + (DIM, DIM))
    G[..., 0, :] = dA.real
    G[..., 1, :] = dA.imag
    return G


def flow_map(s: float, points: np.ndarray) -> np.ndarray:
    """Closed-form time-``s`` flow of the transport field.

    ``z`` is fixed; ``w`` is multiplied by ``exp(i s zbar)``.
    """
    w = w_of(points)
    z = z_of(points)
    return points_from_complex(w * np.exp(1j * s * np.conj(z)), z)


def holomorphic_coordinate(t: float, points: np.ndarray) -> np.ndarray:
    """``u(t) = w exp(i t zbar)`` — holomorphic for ``I(t)``, with ``z``."""
    return w_of(points) * np.exp(1j * t * np.conj(z_of(points)))


def structure_coframe(t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(1,0)-coframe of ``I(t)``: real covector components of
    ``alpha = dw + i t w dzbar`` and ``beta = dz`` (complex arrays)."""
    p = np.asarray(points, dtype=float)
    base = p.shape[:-1]
    w = w_of(points)
    _, W = frame_matrices(N_COMPLEX)
    # columns of W: real components of (dz_1, dz_2, dzbar_1, dzbar_2)
    alpha = np.broadcast_to(W[:, 0], base + (DIM,)).astype(complex).copy()
    alpha += (1j * t * w)[..., None] * W[:, 3]
    beta = np.broadcast_to(W[:, 1], base + (DIM,)).astype(complex).copy()
    return alpha, beta


def complex_locus_distance(points: np.ndarray) -> np.ndarray:
    """Distance to the rank-drop locus ``{w = 0}`` (where the type jumps)."""
    return np.abs(w_of(points))


# ---------------------------------------------------------------------------
# Analytic test fields
# ---------------------------------------------------------------------------

class PolynomialVectorField:
    """Real polynomial vector field with exact values and Jacobians.

    ``coeffs`` maps a monomial exponent tuple (one entry per coordinate) to
    the real coefficient vector of that monomial.  Used wherever a check
    needs spatial derivatives free of any grid truncation error.
    """

    def __init__(self, coeffs: Dict[Tuple[int, ...], np.ndarray]):
        self.coeffs = {tuple(k): np.asarray(v, dtype=float) for k, v in coeffs.items()}

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int = 3, scale: float = 1.0,
               dim: int = DIM) -> "PolynomialVectorField":
        coeffs = {}
        def rec(prefix, remaining, axes_left):
            if axes_left == 0:
                yield tuple(prefix)
                return
            for o in range(remaining + 1):
                yield from rec(prefix + [o], remaining - o, axes_left - 1)
        for alpha in rec([], degree, dim):
            coeffs[alpha] = rng.standard_normal(dim) * scale / (1.0 + sum(alpha))
        return cls(coeffs)

    def value(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape)
        for alpha, c in self.coeffs.items():
            mono = np.ones(p.shape[:-1])
            for b, a in enumerate(alpha):
                if a:
                    mono = mono * p[..., b] ** a
            out += mono[..., None] * c
        return out

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        base = p.shape[:-1]
        dim = p.shape[-1]
        out = np.zeros(base + (dim, dim))
        for alpha, c in self.coeffs.items():
            for b, a in enumerate(alpha):
                if not a:
                    continue
                mono = np.full(base, float(a))
                for d, o in enumerate(alpha):
                    q = o - 1 if d == b else o
                    if q:
                        mono = mono * p[..., d] ** q
                out[..., b] += mono[..., None] * c
        return out
