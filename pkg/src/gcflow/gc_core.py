"""Pointwise linear algebra of generalized complex structures.

Everything here acts on plain arrays whose *last two axes* are matrix axes,
so a single structure (shape ``(2m, 2m)``) and a grid of structures (shape
``grid + (2m, 2m)``) go through the same code paths.

Conventions (shared with :mod:`gcflow.fields`):

- An element of the generalized tangent space is a column ``(X; xi)`` with
  the vector part first, so structures are ``2m x 2m`` real matrices acting
  on such columns, where ``m = 2n`` is the real dimension.
- A two-form ``B`` is stored as the matrix ``M_B`` mapping vectors to
  covectors, ``i_X B = M_B @ X`` (antisymmetric).
- A bivector ``Q`` is stored as the matrix ``M_Q`` mapping covectors to
  vectors, ``Q(xi, .) = M_Q @ xi`` (antisymmetric).
- The tautological pairing is ``<u, v> = (1/2) u^T [[0, 1], [1, 0]] v``.
- A complex structure ``I`` on the tangent space induces the generalized
  complex structure ``[[-I, 0], [0, I^T]]``; a symplectic form ``w`` induces
  ``[[0, -w^{-1}], [w, 0]]``; a holomorphic Poisson pair ``(I, Q)`` induces
  the upper-triangular ``[[-I, M_Q], [0, I^T]]``.

Only the *pointwise* (linear-algebra) conditions live here; differential
conditions such as integrability are checked by the calculus modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .fields import frame_matrices

__all__ = [
    "pairing_matrix",
    "blocks",
    "assemble_blocks",
    "complex_structure_block",
    "symplectic_block",
    "holomorphic_poisson_block",
    "b_field_exponential",
    "b_transform",
    "extract_poisson_block",
    "extract_tangent_block",
    "is_generalized_complex",
    "generalized_complex_residuals",
    "poisson_rank",
    "gc_type",
    "sigma_matrix_from_poisson",
    "poisson_from_sigma_matrix",
    "sigma_complex_frame_matrix",
    "sigma_matrix_from_complex_frame",
    "HoloPoissonPair",
    "gauge_equations_residual",
]


# ---------------------------------------------------------------------------
# Basic blocks
# ---------------------------------------------------------------------------

def pairing_matrix(m: int) -> np.ndarray:
    """Matrix ``P`` of the tautological pairing ``<u,v> = (1/2) u^T P v``."""
    P = np.zeros((2 * m, 2 * m))
    P[:m, m:] = np.eye(m)
    P[m:, :m] = np.eye(m)
    return P


def blocks(J: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split a ``(..., 2m, 2m)`` matrix into its four ``m x m`` blocks."""
    m = J.shape[-1] // 2
    return (
        J[..., :m, :m],
        J[..., :m, m:],
        J[..., m:, :m],
        J[..., m:, m:],
    )


def assemble_blocks(A: np.ndarray, B: np.ndarray, C: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Inverse of :func:`blocks`."""
    top = np.concatenate([A, B], axis=-1)
    bot = np.concatenate([C, D], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def complex_structure_block(I: np.ndarray) -> np.ndarray:
    """Generalized complex structure of an almost complex structure."""
    I = np.asarray(I, dtype=float)
    Z = np.zeros_like(I)
    return assemble_blocks(-I, Z, Z, np.swapaxes(I, -1, -2))


def symplectic_block(omega: np.ndarray) -> np.ndarray:
    """Generalized complex structure of a nondegenerate two-form.

    ``omega`` is the vector-to-covector matrix of the form.
    """
    omega = np.asarray(omega, dtype=float)
    winv = np.linalg.inv(omega)
    Z = np.zeros_like(omega)
    return assemble_blocks(Z, -winv, omega, Z)


def holomorphic_poisson_block(I: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Generalized complex structure of a complex structure plus a compatible
    real Poisson bivector (the imaginary part, up to scale, of a holomorphic
    Poisson bivector)."""
    I = np.asarray(I, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Z = np.zeros(np.broadcast_shapes(I.shape, Q.shape))
    return assemble_blocks(-I, Q + Z, Z, np.swapaxes(I, -1, -2) + Z)


def b_field_exponential(B: np.ndarray) -> np.ndarray:
    """The shear ``e^B = [[1, 0], [M_B, 1]]`` acting on ``(X; xi)`` columns."""
    B = np.asarray(B, dtype=float)
    m = B.shape[-1]
    eye = np.broadcast_to(np.eye(m), B.shape).copy()
    Z = np.zeros_like(B)
    return assemble_blocks(eye, Z, B, eye)


def b_transform(J: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Conjugate a structure by a B-field shear: ``e^B J e^{-B}``."""
    E = b_field_exponential(np.asarray(B))
    Einv = b_field_exponential(-np.asarray(B))
    return E @ J @ Einv


def extract_poisson_block(J: np.ndarray) -> np.ndarray:
    """Upper-right block: the Poisson bivector matrix carried by a structure.

    For any generalized complex structure this block is an (integrable, in
    the integrable case) real Poisson bivector; it is invariant under
    B-field transforms.
    """
    m = np.asarray(J).shape[-1] // 2
    return np.asarray(J)[..., :m, m:]


def extract_tangent_block(J: np.ndarray) -> np.ndarray:
    """Minus the upper-left block (the almost complex structure for
    triangular structures)."""
    m = np.asarray(J).shape[-1] // 2
    return -np.asarray(J)[..., :m, :m]


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

def generalized_complex_residuals(J: np.ndarray) -> Dict[str, float]:
    """Max-norm residuals of the pointwise generalized-complex conditions.

    Returns ``square`` (``||J^2 + 1||``), ``pairing`` (``||J^T P J - P||``)
    and ``real`` (size of any imaginary part).
    """
    J = np.asarray(J)
    m = J.shape[-1] // 2
    P = pairing_matrix(m)
    JT = np.swapaxes(J, -1, -2)
    sq = J @ J + np.eye(2 * m)
    pair = JT @ (P @ J) - P
    return {
        "square": float(np.abs(sq).max()),
        "pairing": float(np.abs(pair).max()),
        "real": float(np.abs(np.imag(J)).max()) if np.iscomplexobj(J) else 0.0,
    }


def is_generalized_complex(J: np.ndarray, tol: float = 1e-10) -> bool:
    """Whether ``J`` is pointwise generalized complex to tolerance."""
    res = generalized_complex_residuals(J)
    return max(res.values()) <= tol


def poisson_rank(Q: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Pointwise rank of an antisymmetric matrix via singular values.

    The cutoff is relative to the largest singular value over the whole
    batch, so a uniformly tiny bivector has rank zero everywhere.
    """
    Q = np.asarray(Q, dtype=float)
    s = np.linalg.svd(Q, compute_uv=False)
    top = float(s.max()) if s.size else 0.0
    if top == 0.0:
        return np.zeros(Q.shape[:-2], dtype=int)
    return (s > rel_tol * top).sum(axis=-1)


def gc_type(J: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Pointwise type: complex dimension count ``n - rank(Q)/2``.

    Equals ``n`` where the structure looks complex (bivector degenerates to
    zero) and ``0`` where it looks symplectic (bivector of full rank).
    """
    J = np.asarray(J)
    n = J.shape[-1] // 4
    r = poisson_rank(extract_poisson_block(J), rel_tol)
    return n - r // 2


# ---------------------------------------------------------------------------
# Holomorphic Poisson pairs
# ---------------------------------------------------------------------------

def sigma_matrix_from_poisson(I: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Complex bivector matrix ``-(1/4)(I @ Q + i Q)``.

    This is the (2,0)-part of the real bivector ``-(1/4) Q`` with respect to
    ``I``; its imaginary part recovers ``Q`` via
    :func:`poisson_from_sigma_matrix`.
    """
    I = np.asarray(I, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return -0.25 * (I @ Q + 1j * Q)


def poisson_from_sigma_matrix(sigma: np.ndarray) -> np.ndarray:
    """Real Poisson bivector matrix ``-4 Im(sigma)``."""
    return -4.0 * np.imag(np.asarray(sigma))


def sigma_complex_frame_matrix(n: int, sigma: np.ndarray) -> np.ndarray:
    """Components ``S[i, j] = sigma(dz_i, dz_j)`` of a (2,0) bivector matrix.

    ``sigma`` maps covectors to vectors in the real frame (evaluation uses
    the second-slot convention ``sigma(xi, eta) = eta^T sigma xi``); ``S`` is
    its antisymmetric ``n x n`` complex component matrix in the holomorphic
    coordinate frame, ``S = -Wh^T sigma Wh`` with ``Wh`` the holomorphic
    covector components.
    """
    _, W = frame_matrices(n)
    Wh = W[:, :n]
    return -np.einsum("ai,...ab,bj->...ij", Wh, np.asarray(sigma), Wh)


def sigma_matrix_from_complex_frame(n: int, S: np.ndarray) -> np.ndarray:
    """Real-frame bivector matrix of a (2,0) bivector with components ``S``.

    Inverse of :func:`sigma_complex_frame_matrix` on (2,0) bivectors:
    ``M = Zh S^T Zh^T`` with ``Zh`` the holomorphic frame-vector components.
    """
    Z, _ = frame_matrices(n)
    Zh = Z[:, :n]
    return np.einsum("ai,...ji,bj->...ab", Zh, np.asarray(S), Zh)


@dataclass
class HoloPoissonPair:
    """A complex structure and compatible real Poisson bivector, pointwise.

    ``I`` squares to minus one, ``Q`` is antisymmetric, and compatibility
    means ``I Q = Q I^T`` (equivalently the associated complex bivector is of
    type (2,0)).  Arrays may carry leading batch axes.
    """

    I: np.ndarray
    Q: np.ndarray

    def __post_init__(self) -> None:
        self.I = np.asarray(self.I, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        return sigma_matrix_from_poisson(self.I, self.Q)

    def block(self) -> np.ndarray:
        return holomorphic_poisson_block(self.I, self.Q)

    def residuals(self) -> Dict[str, float]:
        """Pointwise-condition residuals (max over any batch axes)."""
        I, Q = self.I, self.Q
        eye = np.eye(I.shape[-1])
        return {
            "almost_complex": float(np.abs(I @ I + eye).max()),
            "antisymmetric": float(np.abs(Q + np.swapaxes(Q, -1, -2)).max()),
            "compatible": float(np.abs(I @ Q - Q @ np.swapaxes(I, -1, -2)).max()),
        }

    def is_valid(self, tol: float = 1e-10) -> bool:
        return max(self.residuals().values()) <= tol


# ---------------------------------------------------------------------------
# Gauge-family pointwise equations
# ---------------------------------------------------------------------------

def gauge_equations_residual(
    I0: np.ndarray,
    Q: np.ndarray,
    B: np.ndarray,
    I: np.ndarray,
) -> Dict[str, float]:
    """Residuals of the two pointwise equations tying a family together.

    For a family obtained by shearing a triangular structure ``(I0, Q)`` by
    a two-form ``B``, the transformed structure is again triangular with
    tangent block ``I`` exactly when

    - ``first``:  ``I = I0 + Q B``  (how the tangent structure moves), and
    - ``second``: ``I0^T B + B I = 0``  (the shear stays off the lower-left).

    Returns the max-norm of both residuals, batched over leading axes.
    """
    I0 = np.asarray(I0, dtype=float)
    Q = np.asarray(Q, dtype=float)
    B = np.asarray(B, dtype=float)
    I = np.asarray(I, dtype=float)
    first = I0 + Q @ B - I
    second = np.swapaxes(I0, -1, -2) @ B + B @ I
    return {
        "first": float(np.abs(first).max()),
        "second": float(np.abs(second).max()),
    }
