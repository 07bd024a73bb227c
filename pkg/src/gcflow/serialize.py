"""Disk containers and text specs for reproducible scenarios.

Field container (format ``gcflow-field/1``)
    A NumPy ``.npz`` archive.  ``meta`` holds a JSON document (UTF-8) with
    the format tag, the grid parameters (``n_complex``, ``points_per_axis``,
    ``length``), the field ``kind`` (exterior-algebra flavor), and the sorted
    list of component bitmasks.  Each component is stored row-major as
    ``comp_<mask>`` (complex128, shape = grid shape).

Deformation container (format ``gcflow-deformation/1``)
    Same archive layout with the three graph components stored as ``e20``,
    ``e11`` and ``e02`` (complex128, shape = grid shape + (n, n)).

Polynomial text spec
    One monomial per line: ``2 n`` integer exponents followed by one complex
    coefficient (any Python complex literal).  Exponent order is
    ``z_1  conj(z_1)  z_2  conj(z_2) ...``.  Blank lines and ``#`` comments
    are ignored.  Example (the bivector coefficient ``w`` on C^2 with
    ``w = z_1``): ``1 0 0 0  1+0j``.
"""

from __future__ import annotations

import json
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .fields import GridField, GridSpec
from .deformation import Deformation

__all__ = [
    "save_field",
    "load_field",
    "save_deformation",
    "load_deformation",
    "parse_poly_spec",
    "poly_to_text",
    "eval_poly_grid",
    "eval_poly_at",
    "poly_dz",
]

FIELD_FORMAT = "gcflow-field/1"
DEFORMATION_FORMAT = "gcflow-deformation/1"


def _grid_meta(grid: GridSpec) -> Dict:
    return {
        "n_complex": int(grid.n_complex),
        "points_per_axis": int(grid.points_per_axis),
        "length": float(grid.length),
    }


def _grid_from_meta(meta: Dict) -> GridSpec:
    return GridSpec(
        n_complex=int(meta["n_complex"]),
        points_per_axis=int(meta["points_per_axis"]),
        length=float(meta["length"]),
    )


def save_field(path, field: GridField) -> None:
    """Write a :class:`GridField` to the ``gcflow-field/1`` container."""
    meta = {
        "format": FIELD_FORMAT,
        "grid": _grid_meta(field.grid),
        "kind": field.kind,
        "masks": sorted(int(m) for m in field.comps),
    }
    arrays = {f"comp_{m}": np.ascontiguousarray(field.comps[m]) for m in field.comps}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_field(path) -> GridField:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != FIELD_FORMAT:
            raise ValueError(f"not a {FIELD_FORMAT} container: {meta.get('format')!r}")
        grid = _grid_from_meta(meta["grid"])
        comps = {int(m): np.array(data[f"comp_{m}"]) for m in meta["masks"]}
    return GridField(grid, meta["kind"], comps)


def save_deformation(path, eps: Deformation) -> None:
    """Write a :class:`Deformation` to the ``gcflow-deformation/1`` container."""
    meta = {"format": DEFORMATION_FORMAT, "grid": _grid_meta(eps.field.grid)}
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        e20=np.ascontiguousarray(eps.e20),
        e11=np.ascontiguousarray(eps.e11),
        e02=np.ascontiguousarray(eps.e02),
    )


def load_deformation(path) -> Deformation:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != DEFORMATION_FORMAT:
            raise ValueError(f"not a {DEFORMATION_FORMAT} container: {meta.get('format')!r}")
        grid = _grid_from_meta(meta["grid"])
        e20, e11, e02 = np.array(data["e20"]), np.array(data["e11"]), np.array(data["e02"])
    return Deformation.from_components(grid, e20=e20, e11=e11, e02=e02)


# ---------------------------------------------------------------------------
# polynomial text specs
# ---------------------------------------------------------------------------

PolyTerm = Tuple[Tuple[int, ...], complex]


def parse_poly_spec(text: str, n_complex: int) -> List[PolyTerm]:
    """Parse the monomial-per-line polynomial spec (module docstring).

    Returns ``[(exponents, coefficient), ...]`` with ``len(exponents) ==
    2 * n_complex`` ordered ``z_1, conj(z_1), z_2, conj(z_2), ...``.
    """
    terms: List[PolyTerm] = []
    want = 2 * n_complex
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != want + 1:
            raise ValueError(
                f"poly spec line {ln}: expected {want} exponents and one "
                f"coefficient, got {len(parts)} tokens"
            )
        try:
            exps = tuple(int(p) for p in parts[:want])
        except ValueError as exc:
            raise ValueError(f"poly spec line {ln}: bad exponent: {exc}") from None
        if any(e < 0 for e in exps):
            raise ValueError(f"poly spec line {ln}: negative exponent")
        try:
            coeff = complex(parts[want])
        except ValueError:
            raise ValueError(f"poly spec line {ln}: bad coefficient {parts[want]!r}") from None
        terms.append((exps, coeff))
    return terms


def poly_to_text(terms: Sequence[PolyTerm]) -> str:
    """Format terms back into the text spec (inverse of :func:`parse_poly_spec`)."""
    lines = []
    for exps, coeff in terms:
        lines.append(" ".join(str(e) for e in exps) + f"  {coeff!r}".replace("(", "").replace(")", ""))
    return "\n".join(lines) + ("\n" if lines else "")


def eval_poly_at(terms: Sequence[PolyTerm], z: np.ndarray) -> np.ndarray:
    """Evaluate a parsed polynomial at complex coordinate tuples.

    ``z`` has shape ``(..., n)``; the result has shape ``(...)``.
    """
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1]
    out = np.zeros(z.shape[:-1], dtype=complex)
    for exps, coeff in terms:
        if len(exps) != 2 * n:
            raise ValueError("exponent length does not match coordinate count")
        term = np.full(z.shape[:-1], coeff, dtype=complex)
        for j in range(n):
            if exps[2 * j]:
                term = term * z[..., j] ** exps[2 * j]
            if exps[2 * j + 1]:
                term = term * np.conj(z[..., j]) ** exps[2 * j + 1]
        out += term
    return out


def eval_poly_grid(grid: GridSpec, terms: Sequence[PolyTerm]) -> np.ndarray:
    """Evaluate a parsed polynomial on the grid's complex coordinates."""
    zs = np.stack([np.broadcast_to(grid.z(j), grid.shape) for j in range(grid.n)], axis=-1)
    return eval_poly_at(terms, zs)


def poly_dz(terms: Sequence[PolyTerm], j: int) -> List[PolyTerm]:
    """Formal derivative of a parsed polynomial in ``z_j`` (holomorphic slot)."""
    out: List[PolyTerm] = []
    for exps, coeff in terms:
        e = exps[2 * j]
        if e:
            new = list(exps)
            new[2 * j] = e - 1
            out.append((tuple(new), coeff * e))
    return out
