"""Deformation complex: Schouten bracket, Maurer-Cartan residual, graph
converters between deformation fields and structure matrices, and the gauge
action by generalized flows.

A deformation is a degree-2 element of the exterior algebra over the
conjugate eigenbundle, stored as a ``"dolb"``-kind :class:`GridField` whose
generators are ``th_i`` (holomorphic coordinate vectors) and ``lam_j``
(antiholomorphic coordinate differentials).  Splitting by bidegree,

- the (2,0) part is a candidate holomorphic Poisson bivector,
- the (1,1) part mixes vectors with differentials,
- the (0,2) part is a two-form along the antiholomorphic directions.

Integrability of the deformed structure is the Maurer-Cartan equation
``dbar(eps) + (1/2)[eps, eps] = 0`` for the Schouten-type bracket below,
with the bracket treating the ``lam`` generators as central (they are
annihilated by contraction and carry no derivative action).

Conventions are frozen by the oracle tests: the bracket of two degree-1
elements reproduces the Lie bracket of vector fields; the graph of a pure
(2,0) constant deformation reproduces the triangular holomorphic Poisson
structure block; the graph read of a real two-form exponential keeps exactly
the (0,2) part of the form.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .fields import (
    DOLB,
    GridField,
    GridSpec,
    dbar,
    frame_matrices,
    homotopy_P,
    lder_sign,
    mask_bits,
    mul_sign,
    realified_covector,
    realified_vector,
)

__all__ = [
    "LostInvertibilityError",
    "holo_derivative",
    "schouten",
    "Deformation",
    "mc_residual",
    "correction_field",
    "generator_from_correction",
    "generator_to_field",
    "BFieldFactor",
    "DorfmanFactor",
    "GaugeElement",
    "frame_from_deformation",
    "deformation_from_frame",
    "deformation_to_structure",
    "structure_to_deformation",
    "gauge_act",
]


class LostInvertibilityError(RuntimeError):
    """The graph construction degenerated (structure left the chart)."""


# ---------------------------------------------------------------------------
# Bracket
# ---------------------------------------------------------------------------

def holo_derivative(F: GridField, j: int) -> GridField:
    """Holomorphic coordinate derivative ``d/dz_j``, componentwise."""
    grid = F.grid
    mult = 0.5j * np.conj(grid.kappa(j))
    out = GridField.zero(grid, F.kind)
    for m, a in F.comps.items():
        out.set(m, grid.ifftn(grid.fftn(a) * mult))
    return out


def schouten(A: GridField, B: GridField) -> GridField:
    """Schouten-type bracket on deformation-complex fields.

    For components of homogeneous total degree ``|A|``,

        [A, B] = sum_i [ (-1)^{|A|-1} (dA/dth_i) ^ (d_{z_i} B)
                         - (d_{z_i} A) ^ (dB/dth_i) ],

    where ``dA/dth_i`` is the left interior derivative on the ``th_i``
    generator and ``d_{z_i}`` the holomorphic coordinate derivative.  The
    ``lam`` generators are spectators.  Degree-1 elements recover the Lie
    bracket of vector fields with antiholomorphic-form corrections dropped.
    """
    if A.kind != DOLB or B.kind != DOLB:
        raise ValueError("schouten bracket requires dolb-kind fields")
    grid = A.grid
    n = grid.n
    out = GridField.zero(grid, DOLB)
    dzA = [holo_derivative(A, i) for i in range(n)]
    dzB = [holo_derivative(B, i) for i in range(n)]
    for i in range(n):
        bit = 1 << i
        for m, a in A.comps.items():
            if not (m & bit):
                continue
            deg_sign = 1 if (m.bit_count() - 1) % 2 == 0 else -1
            coeff = deg_sign * lder_sign(m, i)
            ml = m ^ bit
            for m2, b2 in dzB[i].comps.items():
                if ml & m2:
                    continue
                out.add_to(ml | m2, (coeff * mul_sign(ml, m2)) * (a * b2))
        for m2, b2 in B.comps.items():
            if not (m2 & bit):
                continue
            s2 = lder_sign(m2, i)
            mr = m2 ^ bit
            for m, a in dzA[i].comps.items():
                if m & mr:
                    continue
                out.add_to(m | mr, (-s2 * mul_sign(m, mr)) * (a * b2))
    return out.prune(0.0)


# ---------------------------------------------------------------------------
# Deformations
# ---------------------------------------------------------------------------

@dataclass
class Deformation:
    """A degree-2 deformation-complex field with bidegree accessors.

    Component conventions (frozen by the contraction tests): with ``e20``,
    ``e11``, ``e02`` the coefficient matrices,

        i_{dz_k}(eps)      =  e20[k, j] th_j + e11[k, j] lam_j,
        i_{dzbar_k#}(eps)  = -e11[i, k] th_i + e02[k, j] lam_j,

    where the contractions are left interior derivatives on ``th_k`` and
    ``lam_k`` respectively, and ``e20``/``e02`` are antisymmetric.
    """

    field: GridField

    def __post_init__(self):
        if self.field.kind != DOLB:
            raise ValueError("deformations are dolb-kind fields")
        for m in self.field.comps:
            if m.bit_count() != 2:
                raise ValueError("deformations are homogeneous of degree 2")

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, grid: GridSpec) -> "Deformation":
        return cls(GridField.zero(grid, DOLB))

    @classmethod
    def from_components(
        cls,
        grid: GridSpec,
        e20: Optional[np.ndarray] = None,
        e11: Optional[np.ndarray] = None,
        e02: Optional[np.ndarray] = None,
    ) -> "Deformation":
        """Assemble from coefficient matrices of shape ``(grid or 1,) + (n, n)``."""
        n = grid.n
        F = GridField.zero(grid, DOLB)

        def as_field(M):
            M = np.asarray(M, dtype=complex)
            return np.broadcast_to(M, grid.shape + (n, n))

        if e20 is not None:
            M = as_field(e20)
            for i in range(n):
                for j in range(i + 1, n):
                    F.add_to((1 << i) | (1 << j), M[..., i, j])
        if e11 is not None:
            M = as_field(e11)
            for i in range(n):
                for j in range(n):
                    F.add_to((1 << i) | (1 << (n + j)), M[..., i, j])
        if e02 is not None:
            M = as_field(e02)
            for i in range(n):
                for j in range(i + 1, n):
                    F.add_to((1 << (n + i)) | (1 << (n + j)), M[..., i, j])
        return cls(F.prune(0.0))

    # -- component views -----------------------------------------------------
    def _pair_matrix(self, lo_shift: int, hi_shift: int) -> np.ndarray:
        grid = self.field.grid
        n = grid.n
        out = np.zeros(grid.shape + (n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                bi, bj = 1 << (lo_shift + i), 1 << (hi_shift + j)
                if bi == bj:
                    continue
                m = bi | bj
                if m not in self.field.comps:
                    continue
                a = self.field.comps[m]
                if lo_shift == hi_shift:
                    if i < j:
                        out[..., i, j] = a
                        out[..., j, i] = -a
                else:
                    out[..., i, j] = a
        return out

    @property
    def e20(self) -> np.ndarray:
        """Antisymmetric (2,0) coefficients; ``eps^{20} = 1/2 e20[i,j] th_i th_j``."""
        return self._pair_matrix(0, 0)

    @property
    def e11(self) -> np.ndarray:
        """(1,1) coefficients; ``eps^{11} = e11[i,j] th_i lam_j``."""
        return self._pair_matrix(0, self.field.grid.n)

    @property
    def e02(self) -> np.ndarray:
        """Antisymmetric (0,2) coefficients; ``eps^{02} = 1/2 e02[i,j] lam_i lam_j``."""
        n = self.field.grid.n
        return self._pair_matrix(n, n)

    # -- algebra / measurement ----------------------------------------------
    def copy(self) -> "Deformation":
        return Deformation(self.field.copy())

    def __add__(self, other: "Deformation") -> "Deformation":
        return Deformation(self.field + other.field)

    def __sub__(self, other: "Deformation") -> "Deformation":
        return Deformation(self.field - other.field)

    def scale(self, c) -> "Deformation":
        return Deformation(self.field.scale(c))

    def bidegree_part(self, p: int, q: int) -> GridField:
        return self.field.bidegree_part(p, q)

    def size(self, region: Optional[np.ndarray] = None) -> float:
        return self.field.max_abs(region)

    def off_poisson_size(self, region: Optional[np.ndarray] = None) -> float:
        """Sup norm of the parts the normalization drives to zero."""
        return max(
            self.field.bidegree_part(1, 1).max_abs(region),
            self.field.bidegree_part(0, 2).max_abs(region),
        )

    def component_means(self) -> Dict[int, complex]:
        return {m: complex(a.mean()) for m, a in self.field.comps.items()}


def mc_residual(eps: Union[Deformation, GridField]) -> GridField:
    """Maurer-Cartan residual ``dbar(eps) + (1/2)[eps, eps]``.

    Vanishes exactly when the deformed structure is integrable.  Bidegree
    (2,1) collects ``dbar eps20 + [eps20, eps11]``; bidegree (1,2) collects
    ``dbar eps11 + [eps20, eps02] + (1/2)[eps11, eps11]`` (in two complex
    dimensions the remaining bidegrees vanish identically).
    """
    F = eps.field if isinstance(eps, Deformation) else eps
    return dbar(F) + schouten(F, F).scale(0.5)


def correction_field(eps: Deformation) -> GridField:
    """Degree-1 generator field steering the structure toward normal form.

    The homotopy applied to the parts to remove, with a second-order
    cross-term:  ``V = P( [eps20, P eps02] - eps11 - eps02 )``.
    """
    F = eps.field
    e20 = F.bidegree_part(2, 0)
    e11 = F.bidegree_part(1, 1)
    e02 = F.bidegree_part(0, 2)
    inner = schouten(e20, homotopy_P(e02)) - e11 - e02
    return homotopy_P(inner)


def generator_to_field(grid: GridSpec, v: np.ndarray, beta: np.ndarray) -> GridField:
    """Degree-1 dolb field from a real generator pair (vector, one-form)."""
    from .fields import complex_vector_components, complex_covector_components

    n = grid.n
    A = complex_vector_components(grid, v)[..., :n]
    b = complex_covector_components(grid, beta)[..., n:]
    out = GridField.zero(grid, DOLB)
    for j in range(n):
        out.add_to(1 << j, A[..., j])
        out.add_to(1 << (n + j), b[..., j])
    return out.prune(0.0)


def generator_from_correction(V: GridField) -> Tuple[np.ndarray, np.ndarray]:
    """Real (vector, one-form) generator pair from a degree-1 dolb field.

    The ``th`` components give the (1,0) part of a real vector field; the
    ``lam`` components give the (0,1) part of a real one-form.
    """
    grid = V.grid
    n = grid.n
    A = np.stack([V.get(1 << j) for j in range(n)], axis=-1)
    b = np.stack([V.get(1 << (n + j)) for j in range(n)], axis=-1)
    v = realified_vector(grid, A)
    beta = realified_covector(grid, np.conj(b))
    return v, beta


# ---------------------------------------------------------------------------
# Graph converters
# ---------------------------------------------------------------------------

def _l_basis(n: int) -> np.ndarray:
    """Columns embedding the undeformed eigenbundle basis into T + T*."""
    Z, W = frame_matrices(n)
    L = np.zeros((4 * n, 2 * n), dtype=complex)
    for k in range(n):
        L[: 2 * n, k] = Z[:, n + k]       # d/dzbar_k
        L[2 * n :, n + k] = W[:, k]       # dz_k
    return L


def frame_from_deformation(eps: Deformation) -> np.ndarray:
    """Complex frame spanning the deformed eigenbundle: columns ``l + eps(l)``.

    Shape ``grid + (2 dim, 2 n)``; rows split into vector then covector
    components in real coordinates.
    """
    grid = eps.field.grid
    n = grid.n
    m2 = 2 * grid.dim
    Z, W = grid.frames
    F = np.zeros(grid.shape + (m2, 2 * n), dtype=complex)
    F[...] = _l_basis(n)
    for k in range(n):
        cols = {k: eps.field.left_derivative(n + k), n + k: eps.field.left_derivative(k)}
        for col, contr in cols.items():
            for i in range(n):
                a = contr.comps.get(1 << i)
                if a is not None:
                    F[..., : grid.dim, col] += a[..., None] * Z[:, i]
                b = contr.comps.get(1 << (n + i))
                if b is not None:
                    F[..., grid.dim :, col] += b[..., None] * W[:, n + i]
    return F


def _pe_blocks(F: np.ndarray, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    n = grid.n
    Z, W = grid.frames
    X = F[..., : grid.dim, :]
    Xi = F[..., grid.dim :, :]
    P = np.empty(F.shape[:-2] + (2 * n, 2 * n), dtype=complex)
    E = np.empty_like(P)
    for k in range(n):
        P[..., k, :] = np.einsum("a,...ac->...c", W[:, n + k], X)    # dzbar_k(X)
        P[..., n + k, :] = np.einsum("a,...ac->...c", Z[:, k], Xi)   # Xi(d/dz_k)
        E[..., k, :] = np.einsum("a,...ac->...c", W[:, k], X)        # dz_k(X)
        E[..., n + k, :] = np.einsum("a,...ac->...c", Z[:, n + k], Xi)
    return P, E


def _checked_inv(M: np.ndarray, what: str) -> np.ndarray:
    scale = max(float(np.abs(M).max()), 1e-30)
    det = np.linalg.det(M)
    bad = np.abs(det) < 1e-10 * scale ** M.shape[-1]
    if bad.any():
        frac = float(np.mean(bad))
        raise LostInvertibilityError(
            f"{what} degenerated at {frac:.1%} of points "
            f"(min |det| = {np.abs(det).min():.3e})"
        )
    return np.linalg.inv(M)


def deformation_from_frame(
    F: np.ndarray, grid: GridSpec, consistency_tol: Optional[float] = 1e-8
) -> Deformation:
    """Read the deformation off a frame spanning a deformed eigenbundle.

    Solves for the map sending the undeformed eigenbundle into its
    conjugate whose graph the frame spans.  Raises
    :class:`LostInvertibilityError` when the frame is not a graph (type
    jump / chart boundary), and checks the algebraic symmetries of the
    result when ``consistency_tol`` is not None.
    """
    n = grid.n
    P, E = _pe_blocks(F, grid)
    eps_map = E @ _checked_inv(P, "graph projection")
    e20 = np.empty(eps_map.shape[:-2] + (n, n), dtype=complex)
    e11 = np.empty_like(e20)
    e11b = np.empty_like(e20)
    e02 = np.empty_like(e20)
    for k in range(n):
        for j in range(n):
            e20[..., k, j] = eps_map[..., j, n + k]
            e11[..., k, j] = eps_map[..., n + j, n + k]
            e11b[..., j, k] = -eps_map[..., j, k]
            e02[..., k, j] = eps_map[..., n + j, k]
    if consistency_tol is not None:
        scale = max(float(np.abs(eps_map).max()), 1.0)
        gaps = {
            "e20 antisymmetry": float(np.abs(e20 + np.swapaxes(e20, -1, -2)).max()),
            "e02 antisymmetry": float(np.abs(e02 + np.swapaxes(e02, -1, -2)).max()),
            "e11 double read": float(np.abs(e11 - e11b).max()),
        }
        for name, gap in gaps.items():
            if gap > consistency_tol * scale:
                raise LostInvertibilityError(
                    f"graph read failed the {name} check (gap {gap:.3e}); "
                    "the structure is not pairing-compatible on this chart"
                )
    return Deformation.from_components(grid, e20=e20, e11=e11, e02=e02)


def deformation_to_structure(eps: Deformation) -> np.ndarray:
    """Real structure matrix on T + T* whose eigenbundle is the graph."""
    grid = eps.field.grid
    F = frame_from_deformation(eps)
    FF = np.concatenate([F, np.conj(F)], axis=-1)
    m2 = FF.shape[-1]
    D = np.diag([1j] * (m2 // 2) + [-1j] * (m2 // 2))
    J = FF @ D @ _checked_inv(FF, "frame completion")
    return np.real(J)


def structure_to_deformation(
    J: np.ndarray, grid: GridSpec, consistency_tol: Optional[float] = 1e-8
) -> Deformation:
    """Graph read of a structure matrix against the standard background."""
    n = grid.n
    L = _l_basis(n)
    F = 0.5 * (np.broadcast_to(L, np.shape(J)[:-2] + L.shape) - 1j * (J @ L))
    return deformation_from_frame(F, grid, consistency_tol)


# ---------------------------------------------------------------------------
# Gauge elements
# ---------------------------------------------------------------------------

@dataclass
class BFieldFactor:
    """Exponential of a closed two-form: shears covectors by ``M @ X``."""

    M: np.ndarray

    def inverse(self) -> "BFieldFactor":
        return BFieldFactor(-np.asarray(self.M))


@dataclass
class DorfmanFactor:
    """Time-one generalized flow of the generator pair ``(v, beta)``.

    Acts on eigenframes by integrating ``dF/ds = -L_(v,beta) F`` where the
    generalized Lie derivative sends ``(X, xi)`` to ``([v, X], L_v xi -
    i_X d beta)``.  The two-form ``d beta`` is computed spectrally once.

    ``jac`` optionally supplies the jacobian of ``v`` in closed form
    (shape ``grid.shape + (dim, dim)``, entry ``[a, b] = d v_a / d x_b``);
    without it the jacobian is computed spectrally, which is accurate only
    for well-resolved periodic generators (a windowed cutoff is not).
    """

    v: np.ndarray
    beta: np.ndarray
    steps: int = 32
    jac: Optional[np.ndarray] = None

    def inverse(self) -> "DorfmanFactor":
        jac = None if self.jac is None else -np.asarray(self.jac)
        return DorfmanFactor(-np.asarray(self.v), -np.asarray(self.beta), self.steps, jac)


Factor = Union[BFieldFactor, DorfmanFactor]


@dataclass
class GaugeElement:
    """Ordered composition of gauge factors (applied first-to-last)."""

    factors: List[Factor] = dataclass_field(default_factory=list)

    def inverse(self) -> "GaugeElement":
        return GaugeElement([f.inverse() for f in reversed(self.factors)])

    def then(self, other: "GaugeElement") -> "GaugeElement":
        return GaugeElement(list(self.factors) + list(other.factors))


def _apply_bfield(F: np.ndarray, grid: GridSpec, M: np.ndarray) -> np.ndarray:
    out = F.copy()
    out[..., grid.dim :, :] += np.asarray(M, dtype=float) @ F[..., : grid.dim, :]
    return out


def _apply_dorfman(F: np.ndarray, grid: GridSpec, fac: DorfmanFactor) -> np.ndarray:
    v = np.asarray(fac.v, dtype=float)
    G = np.asarray(fac.jac, dtype=float) if fac.jac is not None else np.real(grid.jacobian(v))
    GT = np.swapaxes(G, -1, -2)
    Jb = np.real(grid.jacobian(np.asarray(fac.beta, dtype=float)))
    Mdb = Jb - np.swapaxes(Jb, -1, -2)  # d(beta) matrix: i_X dbeta = Mdb @ X

    d = grid.dim

    def rate(Fc):
        adv = grid.directional_derivative(v, Fc)
        out = np.empty_like(Fc)
        X = Fc[..., :d, :]
        Xi = Fc[..., d:, :]
        out[..., :d, :] = -adv[..., :d, :] + G @ X
        out[..., d:, :] = -adv[..., d:, :] - GT @ Xi + Mdb @ X
        return out

    dt = 1.0 / fac.steps
    for _ in range(fac.steps):
        k1 = rate(F)
        k2 = rate(F + 0.5 * dt * k1)
        k3 = rate(F + 0.5 * dt * k2)
        k4 = rate(F + dt * k3)
        F = F + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return F


def gauge_act(
    element: GaugeElement,
    eps: Deformation,
    grid: Optional[GridSpec] = None,
    consistency_tol: Optional[float] = 1e-8,
) -> Deformation:
    """Act on a deformation by a gauge element, through frame transport."""
    grid = grid or eps.field.grid
    F = frame_from_deformation(eps)
    for fac in element.factors:
        if isinstance(fac, BFieldFactor):
            F = _apply_bfield(F, grid, fac.M)
        elif isinstance(fac, DorfmanFactor):
            F = _apply_dorfman(F, grid, fac)
        else:
            raise TypeError(f"unknown gauge factor {type(fac).__name__}")
    return deformation_from_frame(F, grid, consistency_tol)
