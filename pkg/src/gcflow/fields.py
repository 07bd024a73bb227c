"""Windowed spectral calculus on a flat even-dimensional torus.

This module provides the discrete analysis layer everything else builds on:

* :class:`GridSpec` — a periodic grid on ``[-L/2, L/2)^(2n)`` with real
  coordinates ordered ``(x_1, y_1, ..., x_n, y_n)`` and complex coordinates
  ``z_j = x_j + i y_j``, together with cached wavenumbers, a smooth radial
  window, and batched FFT helpers.
* :class:`GridField` — a field with values in the exterior algebra generated
  by ``2n`` odd generators.  Two kinds are supported: ``"form"`` fields use
  generators ``(dz_1..dz_n, dzbar_1..dzbar_n)`` and ``"dolb"`` fields use
  ``(th_1..th_n, lam_1..lam_n)`` where ``th_i`` stands for the holomorphic
  coordinate vector ``d/dz_i`` and ``lam_j`` for ``dzbar_j``.
* Spectral operators: ``dbar``, ``del_holo``, ``exterior_d``, a
  degree-lowering homotopy ``homotopy_P`` with ``P dbar + dbar P = Id - mean``
  exactly on the grid, Fourier ``smoothing``, and a ``ddbar_potential`` solver
  (flat and curved almost-complex backgrounds).
* Conversions between real-index tensor data (matrices over the real
  coordinate frame) and complex-frame components, plus norm and Taylor
  utilities used by the acceptance checks.

Conventions
-----------
Vectors are columns of components in the real coordinate frame
``(d/dx_1, d/dy_1, ...)``.  A two-form ``B`` is stored as the matrix ``M_B``
mapping vectors to covectors via interior contraction, ``i_X B = M_B @ X``,
so ``B(X, Y) = Y^T M_B X`` and ``M_B`` is antisymmetric.  A bivector ``Q`` is
stored as the matrix ``M_Q`` mapping covectors to vectors by first-slot
contraction, ``Q(xi, .) = M_Q @ xi``.  Derivative multipliers follow
``d/dz_j -> (i/2) conj(kappa_j)`` and ``d/dzbar_j -> (i/2) kappa_j`` with
``kappa_j = k_{x_j} + i k_{y_j}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
import scipy.ndimage
from scipy import special


__all__ = [
    "GridSpec",
    "GridField",
    "FORM",
    "DOLB",
    "smoothstep",
    "erf_step",
    "window_profile",
    "frame_matrices",
    "standard_complex_structure",
    "dbar",
    "del_holo",
    "exterior_d",
    "homotopy_P",
    "smoothing",
    "smooth_array",
    "window_field",
    "complex_vector_components",
    "real_vector_from_complex_components",
    "realified_vector",
    "complex_covector_components",
    "real_covector_from_complex_components",
    "realified_covector",
    "oneform_field_from_real",
    "oneform_field_to_real",
    "twoform_field_from_matrix",
    "twoform_matrix_from_field",
    "bivector_complex_from_matrix",
    "bivector_matrix_from_complex",
    "complex_structure_projectors",
    "type_project_twoform",
    "twoform_type_component",
    "ck_norm",
    "complex_taylor",
    "resample_periodic",
    "PotentialPreconditionError",
    "PotentialSolveError",
    "ddbar_potential",
    "mask_bits",
    "mask_label",
    "mul_sign",
    "lder_sign",
]


FORM = "form"
DOLB = "dolb"

_TINY = 1e-300


# ---------------------------------------------------------------------------
# Smooth cutoff profiles
# ---------------------------------------------------------------------------

def _expbump(u: np.ndarray) -> np.ndarray:
    """exp(-1/u) for u > 0, zero otherwise; C-infinity at u = 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / u[pos])
    return out


def smoothstep(u) -> np.ndarray:
    """C-infinity monotone step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    a = _expbump(u)
    b = _expbump(1.0 - u)
    return a / (a + b + _TINY)


#: Steepness of the error-function window profile (see :func:`window_profile`).
WINDOW_STEEPNESS = 4.0


def erf_step(u, alpha: float = WINDOW_STEEPNESS) -> np.ndarray:
    """Monotone step from 0 at ``u <= 0`` to 1 at ``u >= 1`` with an erf profile.

    Exactly 0/1 outside the transition (values are clipped); the derivative
    jumps at the seams are of size ``~exp(-alpha**2)`` (``~1e-7`` for the
    default steepness), far below the accuracy class of any windowed
    computation (see :func:`window_profile`).
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    e = special.erf(alpha)
    return (special.erf(alpha * (2.0 * u - 1.0)) + e) / (2.0 * e)


def window_profile(rho, r: float) -> np.ndarray:
    """Radial cutoff equal to 1 for rho <= r, 0 for rho >= 2 r, smooth between.

    The transition uses an error-function profile.  Note the accuracy class
    this implies: a compactly supported cutoff is not band-limited, so
    *spectral derivatives of windowed non-periodic data* carry a relative
    error of roughly ``6e-2 / 2.5e-3 / 3e-5`` at 32 / 48 / 64 points per
    axis (measured on the windowed squared radius; no smooth compactly
    supported profile does much better at such resolutions).  Windowed
    fields are therefore used where only pointwise values matter, or in
    checks whose tolerances respect this class; tight-tolerance spectral
    work uses real-analytic periodic data instead.
    """
    return 1.0 - erf_step((np.asarray(rho, dtype=float) - r) / r)


# ---------------------------------------------------------------------------
# Complex frame constants
# ---------------------------------------------------------------------------

def frame_matrices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Constant change-of-frame matrices between real and complex components.

    Returns ``(Z, W)`` of shape ``(2n, 2n)``:

    * column ``j`` of ``Z`` holds the real components of ``d/dz_j`` for
      ``j < n`` and of ``d/dzbar_{j-n}`` for ``j >= n``;
    * column ``j`` of ``W`` holds the real components of ``dz_j`` resp.
      ``dzbar_{j-n}``.

    They satisfy ``W.T @ Z = Id``: a vector with complex components ``c``
    (holomorphic first) has real components ``Z @ c``; a covector with
    complex components ``a`` has real components ``W @ a``.
    """
    Z = np.zeros((2 * n, 2 * n), dtype=complex)
    W = np.zeros((2 * n, 2 * n), dtype=complex)
    for j in range(n):
        x, y = 2 * j, 2 * j + 1
        Z[x, j] = 0.5
        Z[y, j] = -0.5j
        Z[x, n + j] = 0.5
        Z[y, n + j] = 0.5j
        W[x, j] = 1.0
        W[y, j] = 1.0j
        W[x, n + j] = 1.0
        W[y, n + j] = -1.0j
    return Z, W


def standard_complex_structure(n: int) -> np.ndarray:
    """The block-diagonal complex structure sending d/dx_j to d/dy_j."""
    blocks = [np.array([[0.0, -1.0], [1.0, 0.0]]) for _ in range(n)]
    out = np.zeros((2 * n, 2 * n))
    for j, b in enumerate(blocks):
        out[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = b
    return out


# ---------------------------------------------------------------------------
# Grid specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on ``[-L/2, L/2)^(2n)`` with an inner analysis ball.

    Parameters
    ----------
    n_complex:
        Number of complex dimensions ``n``; the grid has ``2 n`` real axes.
    points_per_axis:
        Number of grid points per axis (must be even so that 0 is a node).
    length:
        Period ``L`` of every axis.  The inner analysis ball has radius
        ``L / 4`` and the smooth window vanishes outside radius ``L / 2``.
    """

    n_complex: int = 2
    points_per_axis: int = 24
    length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.points_per_axis % 2:
            raise ValueError("points_per_axis must be even")
        if self.n_complex < 1:
            raise ValueError("n_complex must be >= 1")

    # -- basic geometry -----------------------------------------------------
    @property
    def n(self) -> int:
        return self.n_complex

    @property
    def dim(self) -> int:
        return 2 * self.n_complex

    @property
    def N(self) -> int:
        return self.points_per_axis

    @property
    def L(self) -> float:
        return self.length

    @property
    def h(self) -> float:
        return self.length / self.points_per_axis

    @property
    def r(self) -> float:
        """Radius of the inner analysis ball (window is identically 1 there)."""
        return self.length / 4.0

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def npoints(self) -> int:
        return self.points_per_axis ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.length + self.h * np.arange(self.points_per_axis)

    @property
    def center_index(self) -> Tuple[int, ...]:
        return (self.points_per_axis // 2,) * self.dim

    def coord(self, d: int) -> np.ndarray:
        """Coordinate ``x_d`` broadcast to the grid shape (view, not copy)."""
        shp = [1] * self.dim
        shp[d] = self.points_per_axis
        return self.axis.reshape(shp)

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points, shape ``grid + (2n,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def z(self, j: int) -> np.ndarray:
        """Complex coordinate ``z_j`` on the grid (full array)."""
        return self.coord(2 * j) + 1j * self.coord(2 * j + 1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt((self.points ** 2).sum(axis=-1))

    @cached_property
    def window(self) -> np.ndarray:
        """Smooth cutoff: 1 on the inner ball, 0 outside twice its radius."""
        return window_profile(self.radius, self.r)

    @cached_property
    def inner_mask(self) -> np.ndarray:
        return self.radius <= self.r + 1e-12

    # -- spectral data ------------------------------------------------------
    @cached_property
    def k_axis(self) -> np.ndarray:
        """True wavenumbers along one axis (used for frequency *filtering*)."""
        return 2.0 * np.pi * sfft.fftfreq(self.points_per_axis, d=self.h)

    @cached_property
    def k_axis_deriv(self) -> np.ndarray:
        """Wavenumbers for *derivative* multipliers: the Nyquist entry is zeroed.

        An even-length real FFT carries an unpaired Nyquist mode; an odd
        derivative multiplier on it would break conjugate symmetry, so every
        derivative operator built here annihilates the Nyquist planes instead.
        Derivatives of real data then stay exactly real, at the price that
        fields must keep their energy below the Nyquist shell (all working
        data here is band-limited or analytic, so that energy is negligible).
        """
        k = self.k_axis.copy()
        k[self.points_per_axis // 2] = 0.0
        return k

    def wavenumber(self, d: int) -> np.ndarray:
        shp = [1] * self.dim
        shp[d] = self.points_per_axis
        return self.k_axis_deriv.reshape(shp)

    def kappa(self, j: int) -> np.ndarray:
        """``kappa_j = k_{x_j} + i k_{y_j}`` broadcast over mode space."""
        return self.wavenumber(2 * j) + 1j * self.wavenumber(2 * j + 1)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """Squared wavenumber built from the derivative axes (Nyquist zeroed).

        Used in homotopy/solver denominators so that they stay exactly
        adjoint to the derivative multipliers.
        """
        out = np.zeros(self.shape)
        for d in range(self.dim):
            out = out + self.wavenumber(d) ** 2
        return out

    @cached_property
    def k_abs(self) -> np.ndarray:
        """True |k| (Nyquist included) — used by frequency cutoffs/smoothing."""
        out = np.zeros(self.shape)
        for d in range(self.dim):
            shp = [1] * self.dim
            shp[d] = self.points_per_axis
            out = out + self.k_axis.reshape(shp) ** 2
        return np.sqrt(out)

    @cached_property
    def frames(self) -> Tuple[np.ndarray, np.ndarray]:
        return frame_matrices(self.n_complex)

    # -- FFT helpers (grid axes lead, component axes trail) -----------------
    def fftn(self, arr: np.ndarray) -> np.ndarray:
        return sfft.fftn(arr, axes=tuple(range(self.dim)), workers=-1)

    def ifftn(self, arr: np.ndarray) -> np.ndarray:
        return sfft.ifftn(arr, axes=tuple(range(self.dim)), workers=-1)

    def _bshape(self, arr: np.ndarray) -> Tuple[int, ...]:
        """Broadcast helper: append singleton axes for trailing components."""
        extra = arr.ndim - self.dim
        return self.shape + (1,) * extra

    def _mult(self, base: np.ndarray, arr_ndim: int) -> np.ndarray:
        extra = arr_ndim - self.dim
        return base.reshape(base.shape + (1,) * extra)

    def spectral_derivative(self, arr: np.ndarray, d: int) -> np.ndarray:
        """d/dx_d of a periodic field (trailing component axes allowed)."""
        hat = self.fftn(np.asarray(arr, dtype=complex))
        hat *= self._mult(1j * self.wavenumber(d) * np.ones(self.shape), arr.ndim)
        return self.ifftn(hat)

    def spectral_gradient(self, scalar: np.ndarray) -> np.ndarray:
        """All real partial derivatives of a scalar, shape ``grid + (2n,)``."""
        hat = self.fftn(np.asarray(scalar, dtype=complex))
        out = np.empty(self.shape + (self.dim,), dtype=complex)
        for d in range(self.dim):
            out[..., d] = self.ifftn(hat * (1j * self.wavenumber(d)))
        return out

    def jacobian(self, vec: np.ndarray) -> np.ndarray:
        """``(grad v)^a_b = d v^a / d x_b`` for ``vec`` of shape grid+(2n,)."""
        hat = self.fftn(np.asarray(vec, dtype=complex))
        out = np.empty(self.shape + (self.dim, self.dim), dtype=complex)
        for d in range(self.dim):
            out[..., d] = self.ifftn(hat * self._mult(1j * self.wavenumber(d) * np.ones(self.shape), vec.ndim))
        return out

    def directional_derivative(self, v: np.ndarray, tensor: np.ndarray) -> np.ndarray:
        """``sum_d v^d d(tensor)/dx_d`` with ``v`` of shape grid+(2n,)."""
        hat = self.fftn(np.asarray(tensor, dtype=complex))
        out = np.zeros(tensor.shape, dtype=complex)
        for d in range(self.dim):
            dT = self.ifftn(hat * self._mult(1j * self.wavenumber(d) * np.ones(self.shape), tensor.ndim))
            vd = v[..., d].reshape(self._bshape(tensor))
            out += vd * dT
        return out

    # -- region reductions --------------------------------------------------
    def max_inner(self, arr: np.ndarray) -> float:
        """Max absolute value over the inner ball (any trailing axes)."""
        sel = np.abs(np.asarray(arr))[self.inner_mask]
        return float(sel.max()) if sel.size else 0.0

    def mean_inner(self, arr: np.ndarray) -> np.ndarray:
        """Mean over the inner ball; returns an array over trailing axes."""
        sel = np.asarray(arr)[self.inner_mask]
        return sel.mean(axis=0)


# ---------------------------------------------------------------------------
# Exterior-algebra bitmask helpers
# ---------------------------------------------------------------------------

def mask_bits(mask: int) -> Tuple[int, ...]:
    """Indices of set bits in ascending order."""
    out = []
    b = 0
    while mask >> b:
        if (mask >> b) & 1:
            out.append(b)
        b += 1
    return tuple(out)


def mul_sign(m1: int, m2: int) -> int:
    """Reordering sign of ``e_{m1} ^ e_{m2}`` into normal order (disjoint)."""
    swaps = 0
    rest = m2
    while rest:
        low = rest & (-rest)
        swaps += (m1 >> low.bit_length()).bit_count()
        rest ^= low
    return -1 if swaps & 1 else 1


def lder_sign(mask: int, bit: int) -> int:
    """Sign picked up by the left derivative with respect to generator ``bit``."""
    below = mask & ((1 << bit) - 1)
    return -1 if below.bit_count() & 1 else 1


def mask_label(n: int, mask: int, kind: str) -> str:
    """Human-readable generator product, e.g. ``dz1^dzbar2`` or ``th1^lam2``."""
    low = ("dz", "th")[kind == DOLB]
    high = ("dzbar", "lam")[kind == DOLB]
    parts = []
    for b in mask_bits(mask):
        if b < n:
            parts.append(f"{low}{b + 1}")
        else:
            parts.append(f"{high}{b - n + 1}")
    return "^".join(parts) if parts else "1"


# ---------------------------------------------------------------------------
# GridField
# ---------------------------------------------------------------------------

class GridField:
    """Field of exterior-algebra values over a :class:`GridSpec`.

    Components are stored per bitmask: bit ``i < n`` is the i-th generator of
    the first group (``dz_i`` for ``"form"`` fields, ``th_i = d/dz_i`` for
    ``"dolb"`` fields), bit ``n + j`` is ``dzbar_j`` (written ``lam_j`` in the
    ``"dolb"`` case).  Monomials are normal-ordered by ascending bit index.
    """

    __slots__ = ("grid", "kind", "comps")

    def __init__(self, grid: GridSpec, kind: str, comps: Optional[Mapping[int, np.ndarray]] = None):
        if kind not in (FORM, DOLB):
            raise ValueError(f"unknown field kind {kind!r}")
        self.grid = grid
        self.kind = kind
        self.comps: Dict[int, np.ndarray] = {}
        if comps:
            for m, a in comps.items():
                self.set(m, a)

    # -- construction -------------------------------------------------------
    @classmethod
    def zero(cls, grid: GridSpec, kind: str) -> "GridField":
        return cls(grid, kind)

    @classmethod
    def from_scalar(cls, grid: GridSpec, arr, kind: str = FORM) -> "GridField":
        return cls(grid, kind, {0: np.broadcast_to(np.asarray(arr, dtype=complex), grid.shape).copy()})

    def copy(self) -> "GridField":
        return GridField(self.grid, self.kind, {m: a.copy() for m, a in self.comps.items()})

    # -- component access ---------------------------------------------------
    def set(self, mask: int, arr) -> None:
        if mask < 0 or mask >= 1 << (2 * self.grid.n):
            raise ValueError(f"mask {mask} out of range")
        a = np.asarray(arr, dtype=complex)
        if a.shape != self.grid.shape:
            a = np.broadcast_to(a, self.grid.shape).copy()
        self.comps[mask] = a

    def get(self, mask: int) -> np.ndarray:
        a = self.comps.get(mask)
        if a is None:
            return np.zeros(self.grid.shape, dtype=complex)
        return a

    def add_to(self, mask: int, arr) -> None:
        if mask in self.comps:
            self.comps[mask] = self.comps[mask] + np.asarray(arr, dtype=complex)
        else:
            self.set(mask, arr)

    def masks(self) -> Tuple[int, ...]:
        return tuple(sorted(self.comps))

    def prune(self, atol: float = 0.0) -> "GridField":
        self.comps = {m: a for m, a in self.comps.items() if np.abs(a).max() > atol}
        return self

    # -- degrees ------------------------------------------------------------
    def degrees(self, mask: int) -> Tuple[int, int]:
        n = self.grid.n
        low = mask & ((1 << n) - 1)
        return low.bit_count(), (mask >> n).bit_count()

    def bidegree_part(self, p: int, q: int) -> "GridField":
        out = {m: a.copy() for m, a in self.comps.items() if self.degrees(m) == (p, q)}
        return GridField(self.grid, self.kind, out)

    def degree_part(self, k: int) -> "GridField":
        out = {m: a.copy() for m, a in self.comps.items() if m.bit_count() == k}
        return GridField(self.grid, self.kind, out)

    def total_degrees(self) -> Tuple[int, ...]:
        return tuple(sorted({m.bit_count() for m in self.comps}))

    # -- algebra ------------------------------------------------------------
    def _check_compatible(self, other: "GridField") -> None:
        if self.grid is not other.grid and self.grid != other.grid:
            raise ValueError("fields live on different grids")
        if self.kind != other.kind:
            raise ValueError("cannot combine fields of different kinds")

    def __add__(self, other: "GridField") -> "GridField":
        self._check_compatible(other)
        out = {m: a.copy() for m, a in self.comps.items()}
        for m, a in other.comps.items():
            out[m] = out[m] + a if m in out else a.copy()
        return GridField(self.grid, self.kind, out)

    def __sub__(self, other: "GridField") -> "GridField":
        return self + (-other)

    def __neg__(self) -> "GridField":
        return GridField(self.grid, self.kind, {m: -a for m, a in self.comps.items()})

    def scale(self, factor) -> "GridField":
        """Multiply by a scalar or a grid-shaped array."""
        f = np.asarray(factor, dtype=complex)
        return GridField(self.grid, self.kind, {m: a * f for m, a in self.comps.items()})

    __mul__ = scale
    __rmul__ = scale

    def wedge(self, other: "GridField") -> "GridField":
        self._check_compatible(other)
        out = GridField(self.grid, self.kind)
        for m1, a1 in self.comps.items():
            for m2, a2 in other.comps.items():
                if m1 & m2:
                    continue
                out.add_to(m1 | m2, mul_sign(m1, m2) * (a1 * a2))
        return out

    def gen_mul(self, bit: int) -> "GridField":
        """Left exterior multiplication by a single generator."""
        out = GridField(self.grid, self.kind)
        b = 1 << bit
        for m, a in self.comps.items():
            if m & b:
                continue
            sign = lder_sign(m, bit)  # same count: bits below `bit`
            out.add_to(m | b, sign * a)
        return out

    def left_derivative(self, bit: int) -> "GridField":
        """Left interior derivative with respect to a single generator."""
        out = GridField(self.grid, self.kind)
        b = 1 << bit
        for m, a in self.comps.items():
            if not (m & b):
                continue
            out.add_to(m ^ b, lder_sign(m, bit) * a)
        return out

    def conjugate(self) -> "GridField":
        """Complex conjugate (``"form"`` fields only: swaps dz and dzbar)."""
        if self.kind != FORM:
            raise ValueError("conjugate is defined for form-kind fields only")
        n = self.grid.n
        lowmask = (1 << n) - 1
        out = GridField(self.grid, self.kind)
        for m, a in self.comps.items():
            bits = mask_bits(m)
            imgs = [b + n if b < n else b - n for b in bits]
            sign = 1
            for i in range(len(imgs)):
                for j in range(i + 1, len(imgs)):
                    if imgs[i] > imgs[j]:
                        sign = -sign
            out.add_to(((m & lowmask) << n) | (m >> n), sign * np.conj(a))
        return out

    # -- norms --------------------------------------------------------------
    def max_abs(self, region: Optional[np.ndarray] = None) -> float:
        best = 0.0
        for a in self.comps.values():
            sel = np.abs(a[region]) if region is not None else np.abs(a)
            if sel.size:
                best = max(best, float(sel.max()))
        return best

    def max_abs_inner(self) -> float:
        return self.max_abs(self.grid.inner_mask)

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{mask_label(self.grid.n, m, self.kind)}:{np.abs(a).max():.3e}" for m, a in sorted(self.comps.items())
        )
        return f"GridField(kind={self.kind}, {parts or '0'})"


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------

def _stacked(F: GridField) -> Tuple[Tuple[int, ...], np.ndarray]:
    masks = F.masks()
    if not masks:
        return masks, np.zeros(F.grid.shape + (0,), dtype=complex)
    return masks, np.stack([F.comps[m] for m in masks], axis=-1)


def dbar(F: GridField) -> GridField:
    """Antiholomorphic exterior differential ``sum_j lam_j d/dzbar_j``.

    For ``"form"`` fields this is the usual dbar; for ``"dolb"`` fields it is
    the differential of the deformation complex (the generators ``th_i`` are
    constant sections and are differentiated to zero).
    """
    grid = F.grid
    n = grid.n
    masks, stack = _stacked(F)
    if not masks:
        return GridField.zero(grid, F.kind)
    hat = grid.fftn(stack)
    out = GridField.zero(grid, F.kind)
    for j in range(n):
        mult = (0.5j * grid.kappa(j))[..., None]
        darr = grid.ifftn(hat * mult)
        bit = n + j
        for idx, m in enumerate(masks):
            if m & (1 << bit):
                continue
            out.add_to(m | (1 << bit), lder_sign(m, bit) * darr[..., idx])
    return out


def del_holo(F: GridField) -> GridField:
    """Holomorphic exterior differential ``sum_i dz_i d/dz_i`` (form kind)."""
    if F.kind != FORM:
        raise ValueError("del_holo acts on form-kind fields")
    grid = F.grid
    n = grid.n
    masks, stack = _stacked(F)
    if not masks:
        return GridField.zero(grid, F.kind)
    hat = grid.fftn(stack)
    out = GridField.zero(grid, F.kind)
    for i in range(n):
        mult = (0.5j * np.conj(grid.kappa(i)))[..., None]
        darr = grid.ifftn(hat * mult)
        for idx, m in enumerate(masks):
            if m & (1 << i):
                continue
            out.add_to(m | (1 << i), lder_sign(m, i) * darr[..., idx])
    return out


def exterior_d(F: GridField) -> GridField:
    """Full exterior differential ``d = del + dbar`` on form-kind fields."""
    return del_holo(F) + dbar(F)


def homotopy_P(F: GridField) -> GridField:
    """Degree-lowering homotopy for dbar.

    Acts mode-wise as ``-2i / |k|^2`` times interior contraction with the
    frequency vector on the ``lam`` generators, and as zero on the mean mode.
    Satisfies ``P dbar + dbar P = Id - Pi_0`` exactly on the grid, where
    ``Pi_0`` projects each component onto its mean.
    """
    grid = F.grid
    n = grid.n
    masks, stack = _stacked(F)
    if not masks:
        return GridField.zero(grid, F.kind)
    hat = grid.fftn(stack)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(grid.k_squared > 0, 1.0 / np.where(grid.k_squared > 0, grid.k_squared, 1.0), 0.0)
    out_hat: Dict[int, np.ndarray] = {}
    for j in range(n):
        bit = n + j
        mult = (-2.0j * np.conj(grid.kappa(j)) * inv)[..., None]
        carr = hat * mult
        for idx, m in enumerate(masks):
            if not (m & (1 << bit)):
                continue
            tgt = m ^ (1 << bit)
            contrib = lder_sign(m, bit) * carr[..., idx]
            out_hat[tgt] = out_hat.get(tgt, 0) + contrib
    out = GridField.zero(grid, F.kind)
    for m, h in out_hat.items():
        out.set(m, grid.ifftn(h))
    return out


def smooth_array(grid: GridSpec, arr: np.ndarray, theta: float) -> np.ndarray:
    """Fourier smoothing: keep modes ``|k| <= theta``, kill ``|k| >= 2 theta``."""
    if theta <= 0:
        return np.zeros_like(np.asarray(arr, dtype=complex))
    keep = 1.0 - smoothstep(grid.k_abs / theta - 1.0)
    hat = grid.fftn(np.asarray(arr, dtype=complex))
    return grid.ifftn(hat * grid._mult(keep, hat.ndim))


def smoothing(F: GridField, theta: float) -> GridField:
    """Apply :func:`smooth_array` to every component."""
    return GridField(F.grid, F.kind, {m: smooth_array(F.grid, a, theta) for m, a in F.comps.items()})


def window_field(F: GridField) -> GridField:
    """Multiply every component by the grid's smooth radial window."""
    return F.scale(F.grid.window)


# ---------------------------------------------------------------------------
# Real <-> complex component conversions
# ---------------------------------------------------------------------------

def complex_vector_components(grid_or_n, X: np.ndarray) -> np.ndarray:
    """Complex components ``(A; B)`` with ``X = sum A^i d/dz_i + B^i d/dzbar_i``."""
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    _, W = frame_matrices(n)
    return np.einsum("ab,...b->...a", W.T, np.asarray(X, dtype=complex))


def real_vector_from_complex_components(grid_or_n, AB: np.ndarray) -> np.ndarray:
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    Z, _ = frame_matrices(n)
    return np.einsum("ab,...b->...a", Z, np.asarray(AB, dtype=complex))


def realified_vector(grid_or_n, A: np.ndarray) -> np.ndarray:
    """Real vector ``A^i d/dz_i + conj``: components ``(Re A, Im A)`` interleaved."""
    A = np.asarray(A, dtype=complex)
    out = np.empty(A.shape[:-1] + (2 * A.shape[-1],), dtype=float)
    out[..., 0::2] = A.real
    out[..., 1::2] = A.imag
    return out


def complex_covector_components(grid_or_n, xi: np.ndarray) -> np.ndarray:
    """Complex components ``(a; b)`` with ``xi = sum a_i dz_i + b_i dzbar_i``."""
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    Z, _ = frame_matrices(n)
    return np.einsum("ab,...b->...a", Z.T, np.asarray(xi, dtype=complex))


def real_covector_from_complex_components(grid_or_n, ab: np.ndarray) -> np.ndarray:
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    _, W = frame_matrices(n)
    return np.einsum("ab,...b->...a", W, np.asarray(ab, dtype=complex))


def realified_covector(grid_or_n, a: np.ndarray) -> np.ndarray:
    """Real covector ``a_i dz_i + conj``: components ``(2 Re a, -2 Im a)``."""
    a = np.asarray(a, dtype=complex)
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],), dtype=float)
    out[..., 0::2] = 2.0 * a.real
    out[..., 1::2] = -2.0 * a.imag
    return out


def oneform_field_from_real(grid: GridSpec, xi: np.ndarray, kind: str = FORM) -> GridField:
    """Wrap a real-component covector field as a degree-1 form field."""
    ab = complex_covector_components(grid, xi)
    out = GridField.zero(grid, kind)
    n = grid.n
    for i in range(n):
        if kind == FORM:
            out.add_to(1 << i, ab[..., i])
        elif np.abs(ab[..., i]).max() > 0:
            raise ValueError("dolb-kind one-forms cannot carry dz components")
        out.add_to(1 << (n + i), ab[..., n + i])
    return out.prune()


def oneform_field_to_real(F: GridField) -> np.ndarray:
    """Real covector components of a degree-1 form-kind field."""
    grid = F.grid
    n = grid.n
    ab = np.zeros(grid.shape + (2 * n,), dtype=complex)
    for i in range(n):
        ab[..., i] = F.get(1 << i)
        ab[..., n + i] = F.get(1 << (n + i))
    return real_covector_from_complex_components(grid, ab)


def twoform_field_from_matrix(grid: GridSpec, M: np.ndarray) -> GridField:
    """Form-kind degree-2 field from the matrix rep ``i_X B = M @ X``.

    ``M`` has shape ``grid + (2n, 2n)`` (or broadcastable) and must be
    antisymmetric.  Components in the complex coframe follow from
    ``Ftil = Z^T M^T Z`` where ``F = M^T`` holds the pairing values.
    """
    Z, _ = grid.frames
    M = np.asarray(M, dtype=complex)
    Ft = np.einsum("ab,...bc,cd->...ad", Z.T, np.swapaxes(M, -1, -2), Z)
    n = grid.n
    out = GridField.zero(grid, FORM)
    for A in range(2 * n):
        for B in range(A + 1, 2 * n):
            comp = Ft[..., A, B]
            if np.abs(comp).max() == 0:
                continue
            out.add_to((1 << A) | (1 << B), np.broadcast_to(comp, grid.shape).copy())
    return out


def twoform_matrix_from_field(F: GridField) -> np.ndarray:
    """Inverse of :func:`twoform_field_from_matrix`."""
    grid = F.grid
    n2 = 2 * grid.n
    _, W = grid.frames
    Ft = np.zeros(grid.shape + (n2, n2), dtype=complex)
    for m, a in F.comps.items():
        bits = mask_bits(m)
        if len(bits) != 2:
            raise ValueError("twoform_matrix_from_field needs a pure degree-2 field")
        A, B = bits
        Ft[..., A, B] += a
        Ft[..., B, A] -= a
    return -np.einsum("ab,...bc,cd->...ad", W, Ft, W.T)


def bivector_complex_from_matrix(grid_or_n, M: np.ndarray) -> np.ndarray:
    """Complex-frame components ``Stil`` of a bivector matrix ``M`` (first-slot).

    ``Stil[A, B]`` multiplies ``e_A ^ e_B / 2`` over the complex frame
    ``(d/dz_1..d/dz_n, d/dzbar_1..d/dzbar_n)``; the inverse is
    :func:`bivector_matrix_from_complex`.
    """
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    _, W = frame_matrices(n)
    M = np.asarray(M, dtype=complex)
    return -np.einsum("ab,...bc,cd->...ad", W.T, M, W)


def bivector_matrix_from_complex(grid_or_n, S: np.ndarray) -> np.ndarray:
    """Matrix rep ``M`` (covectors to vectors) of complex bivector components."""
    n = grid_or_n.n_complex if isinstance(grid_or_n, GridSpec) else int(grid_or_n)
    Z, _ = frame_matrices(n)
    S = np.asarray(S, dtype=complex)
    return np.einsum("ab,...bc,cd->...ad", Z, np.swapaxes(S, -1, -2), Z.T)


# ---------------------------------------------------------------------------
# Type projections against a pointwise complex structure
# ---------------------------------------------------------------------------

def complex_structure_projectors(I: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Projectors onto the ``(1,0)`` and ``(0,1)`` parts of vectors."""
    I = np.asarray(I)
    ident = np.eye(I.shape[-1])
    P10 = 0.5 * (ident - 1j * I)
    P01 = 0.5 * (ident + 1j * I)
    return P10, P01


def twoform_type_component(M: np.ndarray, I: np.ndarray, p: int, q: int) -> np.ndarray:
    """The ``(p, q)``-part of a two-form matrix with respect to ``I``."""
    P10, P01 = complex_structure_projectors(I)
    tp = lambda A: np.swapaxes(A, -1, -2)
    M = np.asarray(M, dtype=complex)
    if (p, q) == (2, 0):
        return tp(P10) @ M @ P10
    if (p, q) == (0, 2):
        return tp(P01) @ M @ P01
    if (p, q) == (1, 1):
        return tp(P01) @ M @ P10 + tp(P10) @ M @ P01
    raise ValueError("(p, q) must be (2,0), (1,1) or (0,2)")


def type_project_twoform(M: np.ndarray, I: np.ndarray, parts: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Sum of the requested type components of a two-form matrix."""
    out = 0
    for p, q in parts:
        out = out + twoform_type_component(M, I, p, q)
    return out


# ---------------------------------------------------------------------------
# ddbar potential solves
# ---------------------------------------------------------------------------

class PotentialPreconditionError(ValueError):
    """Raised when ddbar_potential input is structurally unsolvable."""


class PotentialSolveError(RuntimeError):
    """Raised when the ddbar potential iteration fails to converge."""


def _ddbar_flat_lstsq(B: GridField) -> np.ndarray:
    """Least-squares solve of ``i del dbar f = B`` over the torus (mean-free f)."""
    grid = B.grid
    n = grid.n
    num = np.zeros(grid.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            mask = (1 << i) | (1 << (n + j))
            comp = B.comps.get(mask)
            if comp is None:
                continue
            num += grid.kappa(i) * np.conj(grid.kappa(j)) * grid.fftn(comp)
    denom = grid.k_squared ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        fhat = np.where(denom > 0, 4.0j * num / np.where(denom > 0, denom, 1.0), 0.0)
    return grid.ifftn(fhat)


def _matrix_on_covector_oneform(grid: GridSpec, Mt: np.ndarray, xi: np.ndarray) -> GridField:
    """Wrap ``Mt @ xi`` (pointwise matrix times real covector components) as a 1-form."""
    out = np.einsum("...ab,...b->...a", Mt, xi)
    return oneform_field_from_real(grid, out)


def ddbar_potential(
    B: GridField,
    I: Optional[np.ndarray] = None,
    rtol: float = 1e-12,
    max_iter: int = 80,
    check: bool = True,
    mean_tol: float = 1e-8,
    f0: Optional[np.ndarray] = None,
    diagnostics: bool = True,
) -> Tuple[np.ndarray, Dict[str, float]]:
    """Solve for a real potential generating a given real (1,1) two-form.

    Flat background (``I is None``): solves ``i del dbar f = B`` by a
    least-squares Fourier inversion.  Curved background: solves
    ``-(1/2) d(I^T df) = B`` by fixed-point iteration around the flat solve,
    which converges when ``I`` is a bounded perturbation of the standard
    structure.

    Returns ``(f, info)`` where ``f`` is a real grid scalar normalised to
    vanish at the origin and ``info`` reports iteration count and residuals.
    ``f0`` seeds the curved fixed-point iteration (warm start); it does not
    affect the flat solve.  ``diagnostics=False`` (with ``check=False``)
    skips the final residual computation for speed.

    Raises
    ------
    PotentialPreconditionError
        If ``B`` carries (2,0)/(0,2) components (flat case), is not real, or
        a component has a torus mean exceeding ``mean_tol`` — such data is
        outside the operator's range and no potential exists.
    PotentialSolveError
        If the iteration stalls or the final residual exceeds tolerance.
    """
    grid = B.grid
    n = grid.n
    scale = max(B.max_abs(), 1e-30)

    # Preconditions -----------------------------------------------------
    if check:
        conj_gap = (B.conjugate() - B).max_abs()
        if conj_gap > 1e-10 * scale:
            raise PotentialPreconditionError(
                f"two-form is not real: ||conj(B) - B|| = {conj_gap:.3e} (scale {scale:.3e})"
            )
        for m, a in B.comps.items():
            p, q = B.degrees(m)
            mean = abs(complex(a.mean()))
            if mean > mean_tol * max(scale, 1.0):
                raise PotentialPreconditionError(
                    f"component {mask_label(n, m, FORM)} has torus mean {mean:.3e}; "
                    "no periodic potential exists for data with nonzero mean"
                )
            if I is None and (p, q) != (1, 1):
                if np.abs(a).max() > 1e-10 * scale:
                    raise PotentialPreconditionError(
                        f"component {mask_label(n, m, FORM)} is type ({p},{q}); "
                        "flat solve requires a (1,1) form"
                    )

    # Flat solve ---------------------------------------------------------
    f = _ddbar_flat_lstsq(B)
    info: Dict[str, float] = {"iterations": 0.0}
    if I is not None:
        I = np.asarray(I, dtype=float)
        I0 = standard_complex_structure(n)
        dI_T = np.swapaxes(I - I0, -1, -2)
        prev = f if f0 is None else np.real(np.asarray(f0))
        it = 0
        for it in range(1, max_iter + 1):
            df = grid.spectral_gradient(np.real(prev))
            corr = exterior_d(_matrix_on_covector_oneform(grid, dI_T, df))
            rhs = B + corr.scale(0.5)
            f = _ddbar_flat_lstsq(rhs)
            delta = float(np.abs(f - prev).max())
            prev = f
            if delta <= rtol * max(1.0, float(np.abs(f).max())):
                break
        else:
            raise PotentialSolveError(f"fixed-point iteration did not converge in {max_iter} steps")
        info["iterations"] = float(it)

    f = f.real
    f = f - f[grid.center_index]

    # Residual bookkeeping (skippable for speed in inner loops) ------------
    if not (diagnostics or check):
        info["residual_inner"] = float("nan")
        info["residual_global"] = float("nan")
        return f, info
    df = grid.spectral_gradient(f)
    if I is None:
        IT = np.swapaxes(standard_complex_structure(n), -1, -2)
    else:
        IT = np.swapaxes(np.asarray(I, dtype=float), -1, -2)
    lhs = exterior_d(oneform_field_from_real(grid, np.einsum("...ab,...b->...a", IT * np.ones(grid.shape + (1, 1)), df))).scale(-0.5)
    resid = lhs - B
    info["residual_inner"] = resid.max_abs(grid.inner_mask)
    info["residual_global"] = resid.max_abs()
    if check and info["residual_inner"] > max(1e-9, 1e-7 * scale):
        raise PotentialSolveError(
            f"potential residual {info['residual_inner']:.3e} inside the analysis ball "
            f"exceeds tolerance (two-form scale {scale:.3e})"
        )
    return f, info


# ---------------------------------------------------------------------------
# Norms and Taylor data
# ---------------------------------------------------------------------------

def _iter_multi_indices(dim: int, max_order: int):
    """All derivative multi-indices with total order <= max_order."""
    def rec(prefix, remaining, axes_left):
        if axes_left == 0:
            yield tuple(prefix)
            return
        for o in range(remaining + 1):
            yield from rec(prefix + [o], remaining - o, axes_left - 1)
    seen = set()
    for total in range(max_order + 1):
        for idx in rec([], total, dim):
            if sum(idx) <= max_order and idx not in seen:
                seen.add(idx)
                yield idx


def ck_norm(
    grid: GridSpec, data, k: int = 1, region: str = "inner",
    radius: Optional[float] = None,
) -> float:
    """C^k norm: max over the region of all derivative components up to order k.

    ``data`` may be a :class:`GridField` (all exterior components measured)
    or an ndarray whose leading axes are the grid (trailing axes treated as
    components).  Derivatives are spectral; the region is the inner analysis
    ball by default (``region="all"`` uses the whole torus), and an explicit
    ``radius`` overrides it with the ball of that radius about the origin.
    """
    if isinstance(data, GridField):
        arrays = list(data.comps.values())
    else:
        arr = np.asarray(data)
        arrays = [arr.reshape(grid.shape + (-1,))] if arr.ndim > grid.dim else [arr]
    if radius is not None:
        mask = grid.radius <= radius + 1e-12
    else:
        mask = grid.inner_mask if region == "inner" else np.ones(grid.shape, bool)
    best = 0.0
    for a in arrays:
        hat = grid.fftn(np.asarray(a, dtype=complex))
        for alpha in _iter_multi_indices(grid.dim, k):
            mult = np.ones(grid.shape, dtype=complex)
            for d, o in enumerate(alpha):
                if o:
                    mult = mult * (1j * grid.wavenumber(d)) ** o
            der = grid.ifftn(hat * grid._mult(mult, hat.ndim))
            sel = np.abs(der[mask])
            if sel.size:
                best = max(best, float(sel.max()))
    return best


def complex_taylor(grid: GridSpec, arr: np.ndarray, max_degree: int) -> Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], complex]:
    """Taylor coefficients of a grid scalar at the origin in ``(z, zbar)``.

    Returns ``{(a, b): coeff}`` with ``a``/``b`` holomorphic and
    antiholomorphic multi-indices (length ``n``), where the jet is
    ``sum coeff * z^a * zbar^b``.  Derivatives are spectral and evaluated at
    the center grid point, so the result reflects the trigonometric
    interpolant of the data.
    """
    n = grid.n
    hat = grid.fftn(np.asarray(arr, dtype=complex))
    out: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], complex] = {}
    for alpha in _iter_multi_indices(2 * n, max_degree):
        a, b = alpha[:n], alpha[n:]
        mult = np.ones(grid.shape, dtype=complex)
        for j, o in enumerate(a):
            if o:
                mult = mult * (0.5j * np.conj(grid.kappa(j))) ** o
        for j, o in enumerate(b):
            if o:
                mult = mult * (0.5j * grid.kappa(j)) ** o
        der = grid.ifftn(hat * mult)
        fact = 1.0
        for o in alpha:
            fact *= math.factorial(o)
        out[(a, b)] = complex(der[grid.center_index]) / fact
    return out


def resample_periodic(grid: GridSpec, arr: np.ndarray, points: np.ndarray, order: int = 5) -> np.ndarray:
    """Evaluate a grid field at arbitrary points by periodic spline interpolation.

    ``points`` has shape ``(..., 2n)`` in torus coordinates; trailing component
    axes of ``arr`` are interpolated independently.  Accuracy is that of the
    spline order, not spectral.
    """
    pts = np.asarray(points, dtype=float)
    idx = (pts + 0.5 * grid.L) / grid.h  # fractional grid indices
    idx_flat = idx.reshape(-1, grid.dim).T
    arr = np.asarray(arr)
    extra = arr.shape[grid.dim:]
    flat = arr.reshape(grid.shape + (-1,))
    cols = []
    for c in range(flat.shape[-1]):
        comp = flat[..., c]
        if np.iscomplexobj(comp):
            re = scipy.ndimage.map_coordinates(comp.real, idx_flat, order=order, mode="grid-wrap")
            im = scipy.ndimage.map_coordinates(comp.imag, idx_flat, order=order, mode="grid-wrap")
            cols.append(re + 1j * im)
        else:
            cols.append(scipy.ndimage.map_coordinates(comp, idx_flat, order=order, mode="grid-wrap"))
    out = np.stack(cols, axis=-1).reshape(pts.shape[:-1] + extra if extra else pts.shape[:-1] + (1,))
    if not extra:
        out = out[..., 0]
    return out
