"""Reproducible scenario commands.

Each ``cmd_*`` function takes a validated configuration dictionary and
returns a :class:`~gcflow.reporting.ReportBundle`.  Configuration documents
are JSON (key/value with nested sections); every command's schema, with all
defaults, lives in :data:`SCHEMAS` and is rendered by
:func:`describe_config`.  Randomized scenarios refuse to run without a
seed.

Error contract (mirrored by the command-line wrapper):

* bad configuration or unmet scenario preconditions raise
  :class:`ConfigError` / :class:`PreconditionError` (exit code 2);
* checks that run but fail leave failed rows in the bundle (exit code 1);
* a bundle whose every check passed maps to exit code 0.
"""

from __future__ import annotations

import copy
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from .fields import (
    GridSpec,
    complex_taylor,
    frame_matrices,
    standard_complex_structure,
)
from .gc_core import (
    HoloPoissonPair,
    gauge_equations_residual,
    holomorphic_poisson_block,
    poisson_from_sigma_matrix,
    sigma_matrix_from_complex_frame,
)
from .deformation import (
    BFieldFactor,
    Deformation,
    DorfmanFactor,
    GaugeElement,
    gauge_act,
    mc_residual,
)
from .flows import integrate_flow, interpolate_holomorphic
from .normalizer import (
    NormalizationError,
    Schedule,
    ck_norm,
    normal_form_membership,
    normalize,
    order_estimate,
    zeta,
)
from .reporting import ReportBundle, fmt
from .serialize import eval_poly_grid, parse_poly_spec
from . import worked_example as wx

__all__ = [
    "ConfigError",
    "PreconditionError",
    "SCHEMAS",
    "validate_config",
    "describe_config",
    "random_gauge_element",
    "cmd_verify_example",
    "cmd_normalize",
    "cmd_interpolate",
    "cmd_uniqueness_check",
    "cmd_complex_locus",
    "COMMANDS",
]


class ConfigError(ValueError):
    """The configuration document is malformed or incomplete."""


class PreconditionError(RuntimeError):
    """The scenario's mathematical preconditions are not met."""


# ---------------------------------------------------------------------------
# configuration schemas
# ---------------------------------------------------------------------------

# Each schema entry: key -> (default, type, help).  ``None`` defaults with
# ``required=True`` semantics are enforced per-command below.

SCHEMAS: Dict[str, Dict[str, Tuple[object, type, str]]] = {
    "verify-example": {
        "resolution": (24, int, "grid points per real axis for the pointwise grid checks"),
        "tolerance": (1e-8, float, "bound for the closed-form identity residuals"),
        "endpoint_tolerance": (1e-6, float, "bound for the integrated flow endpoint error"),
        "flow_step": (1e-3, float, "time step of the endpoint integration"),
        "sample_points": (40, int, "number of scattered sample points"),
        "sample_radius": (1.3, float, "radius of the sampling ball"),
        "seed": (20260819, int, "seed for the scattered sample points"),
        "wrong_sign_b": (False, bool, "negative control: flip the sign of the two-form rate"),
    },
    "normalize": {
        "kind": ("roundtrip", str, "scenario kind: roundtrip | bivector | oversize"),
        "resolution": (20, int, "grid points per real axis"),
        "seed": (None, int, "seed for the random gauge element (required for roundtrip)"),
        "tolerance": (1e-8, float, "stopping target for the C^1 norm of the error part"),
        "max_iterations": (20, int, "hard iteration budget"),
        "iteration_bound": (8, int, "iterations allowed by the round-trip verdict"),
        "sigma_poly": ("0 0 0 0  0.03+0.02j", str, "bivector coefficient (degree-0 spec: torus-periodic)"),
        "vector_amplitude": (0.10, float, "max-norm of the hiding flow's vector part"),
        "covector_amplitude": (0.08, float, "max-norm of the hiding flow's covector part"),
        "bfield_scale": (0.02, float, "scale of the hiding constant two-form factor"),
        "flow_steps": (12, int, "RK4 steps of the hiding flow"),
        "reproduce_tolerance": (1e-8, float, "bound for psi reproducing the final deformation"),
        "membership_tolerance": (1e-7, float, "bound for normal-form membership residuals"),
    },
    "interpolate": {
        "resolution": (16, int, "grid points per real axis"),
        "nodes": (48, int, "RK4 nodes in the family parameter"),
        "tolerance": (1e-7, float, "bound for endpoint invariant gaps"),
        "taylor_tolerance": (1e-6, float, "bound for Taylor-coefficient agreement"),
        "taylor_degree": (3, int, "compared Taylor degree"),
        "gauge_tolerance": (1e-9, float, "bound for the family's structure-equation residuals"),
        "sigma_poly": ("0 0 0 0  0.9", str, "bivector coefficient (degree-0 spec)"),
        "seed": (7, int, "seed for the random trig potential"),
        "potential_amplitude": (0.25, float, "max-norm of the random potential"),
        "solve_potential": (True, bool, "re-solve the potential from the rate at every node"),
    },
    "uniqueness-check": {
        "mode": ("normal-forms", str, "normal-forms | construct | unrelated"),
        "resolution": (20, int, "grid points per real axis"),
        "seeds": ([11, 12], list, "two seeds for the two gauge realizations (normal-forms mode)"),
        "tolerance": (1e-5, float, "bound for Taylor-coefficient agreement of the normal forms"),
        "taylor_degree": (3, int, "compared Taylor degree"),
        "gate": (1e-3, float, "pointwise bound for accepting the pair as gauge-related"),
        "sigma_poly": ("0 0 0 0  0.03+0.02j", str, "bivector coefficient (degree-0 spec)"),
        "vector_amplitude": (0.08, float, "max-norm of the hiding flows' vector part"),
        "covector_amplitude": (0.06, float, "max-norm of the hiding flows' covector part"),
        "bfield_scale": (0.02, float, "scale of the hiding constant two-form factors"),
        "flow_steps": (12, int, "RK4 steps of the hiding flows"),
        "target": (1e-8, float, "normalization stopping target"),
        "nodes": (32, int, "RK4 nodes of the connecting interpolation (construct mode)"),
        "potential_amplitude": (0.2, float, "potential size (construct mode)"),
    },
    "complex-locus": {
        "resolution": (24, int, "grid points per real axis"),
        "sigma_poly": ("1 0 0 0  1", str, "bivector coefficient function of z_1, z_2"),
        "threshold": (None, float, "zero-set detection threshold (default: scale-derived)"),
        "expected": ("z1-axis", str, "expected locus: z1-axis | empty | all | none"),
    },
}


def validate_config(command: str, config: Optional[Dict]) -> Dict:
    """Apply defaults and type-check a configuration document."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMAS[command]
    cfg = dict(config or {})
    unknown = sorted(set(cfg) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    out: Dict = {}
    for key, (default, typ, _help) in schema.items():
        val = cfg.get(key, copy.deepcopy(default))
        if val is None:
            out[key] = None
            continue
        try:
            if typ is float:
                val = float(val)
            elif typ is int:
                if isinstance(val, float) and not val.is_integer():
                    raise ValueError("not an integer")
                val = int(val)
            elif typ is bool:
                if not isinstance(val, bool):
                    raise ValueError("not a boolean")
            elif typ is list:
                val = list(val)
            elif typ is str:
                if not isinstance(val, str):
                    raise ValueError("not a string")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
        out[key] = val
    res = out.get("resolution")
    if res is not None and (res < 8 or res % 2):
        raise ConfigError("resolution must be an even integer >= 8")
    return out


def describe_config(command: str) -> str:
    """Render a command's schema with defaults and help text."""
    schema = SCHEMAS[command]
    lines = [f"# configuration schema: {command} (JSON object)"]
    for key, (default, typ, help_) in schema.items():
        lines.append(f"#   {key} ({typ.__name__}, default {default!r}): {help_}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# shared scenario ingredients
# ---------------------------------------------------------------------------


def _constant_sigma_matrix(cfg_poly: str) -> complex:
    """Parse a degree-0 bivector spec; reject non-periodic (non-constant) ones."""
    terms = parse_poly_spec(cfg_poly, 2)
    coeff = 0j
    for exps, c in terms:
        if any(exps):
            raise ConfigError(
                "normalization/uniqueness scenarios need torus-periodic data: "
                "the bivector coefficient must be constant (degree-0 spec)"
            )
        coeff += c
    return coeff


def constant_bivector_deformation(grid: GridSpec, s: complex) -> Deformation:
    e20 = np.zeros(grid.shape + (2, 2), dtype=complex)
    e20[..., 0, 1] = s
    e20[..., 1, 0] = -s
    return Deformation.from_components(grid, e20=e20)


def trig_field(grid: GridSpec, ncomp: int, amp: float, rng) -> np.ndarray:
    """Random band-limited real field, modes |k_d| <= 1, rescaled to ``amp``."""
    out = np.zeros(grid.shape + (ncomp,))
    pts = grid.points
    for c in range(ncomp):
        acc = np.zeros(grid.shape)
        for _ in range(6):
            k = rng.integers(-1, 2, size=grid.dim)
            if not np.any(k):
                continue
            acc += rng.normal() * np.cos(pts @ k.astype(float) + rng.uniform(0, 2 * np.pi))
        out[..., c] = acc
    m = np.max(np.abs(out))
    return out * (amp / m) if m > 0 else out


def random_gauge_element(grid: GridSpec, rng, v_amp: float, b_amp: float,
                         bfield: float, steps: int) -> GaugeElement:
    """Small random Courant automorphism: one generalized flow + one constant
    closed two-form factor."""
    v = trig_field(grid, grid.dim, v_amp, rng)
    beta = trig_field(grid, grid.dim, b_amp, rng)
    M = rng.normal(size=(grid.dim, grid.dim)) * bfield
    return GaugeElement([DorfmanFactor(v, beta, steps=steps), BFieldFactor(M - M.T)])


def _taylor_gap(grid: GridSpec, a: np.ndarray, b: np.ndarray, degree: int) -> float:
    """Largest Taylor-coefficient difference (degree <= ``degree``) between
    two grid scalar fields, at the origin."""
    ta = complex_taylor(grid, a, degree)
    tb = complex_taylor(grid, b, degree)
    keys = set(ta) | set(tb)
    return max(abs(ta.get(k, 0j) - tb.get(k, 0j)) for k in keys) if keys else 0.0


# ---------------------------------------------------------------------------
# verify-example
# ---------------------------------------------------------------------------


def cmd_verify_example(config: Optional[Dict] = None) -> ReportBundle:
    """Closed-form oracle suite for the rank-drop reference model."""
    cfg = validate_config("verify-example", config)
    bundle = ReportBundle("verify-example", config=cfg)
    tol = cfg["tolerance"]
    rng = np.random.default_rng(cfg["seed"])
    pts = wx.random_ball_points(rng, cfg["sample_points"], radius=cfg["sample_radius"])
    ts = [0.0, 0.3, 1.0, -0.7]
    rows = ["t\tcoordinate_rate\tstructure_rate\tconjugation_rate"]

    sign = -1.0 if cfg["wrong_sign_b"] else 1.0
    h = 1e-5
    worst = {"coord": 0.0, "rate": 0.0, "conj": 0.0}
    for t in ts:
        # moving holomorphic coordinate solves its defining ODE
        du = (wx.holomorphic_coordinate(t + h, pts) - wx.holomorphic_coordinate(t - h, pts)) / (2 * h)
        target = 1j * np.conj(wx.z_of(pts)) * wx.holomorphic_coordinate(t, pts)
        r_coord = float(np.abs(du - target).max())
        # closed-form structure rate against a central difference
        dI = (wx.complex_structure(t + h, pts) - wx.complex_structure(t - h, pts)) / (2 * h)
        r_rate = float(np.abs(dI - wx.complex_structure_rate(t, pts)).max())
        # conjugation identity: transposed structure rate = two-form rate
        # contracted with the Poisson matrix
        lhs = np.swapaxes(wx.complex_structure_rate(t, pts), -1, -2)
        rhs = sign * wx.b_path_rate() @ wx.poisson_matrix(pts)
        r_conj = float(np.abs(lhs - rhs).max())
        worst["coord"] = max(worst["coord"], r_coord)
        worst["rate"] = max(worst["rate"], r_rate)
        worst["conj"] = max(worst["conj"], r_conj)
        rows.append(f"{t:g}\t{fmt(r_coord)}\t{fmt(r_rate)}\t{fmt(r_conj)}")

    bundle.add_check("coordinate-evolution residual", worst["coord"], tol,
                     "finite-difference rate of the moving coordinate vs its ODE")
    bundle.add_check("structure-rate reproduction", worst["rate"], tol,
                     "closed-form family rate vs central difference")
    bundle.add_check("conjugation-rate identity", worst["conj"], tol,
                     "transposed structure rate vs two-form rate times Poisson matrix")

    # Hamiltonian field derivation: the bivector contracted with the
    # potential differential, against the closed-form transport field
    ham = np.einsum("...ab,...b->...a", wx.poisson_matrix(pts), wx.potential_gradient(pts))
    r_ham = float(np.abs(wx.transport_field(0.0, pts) + 0.5 * ham).max())
    bundle.add_check("hamiltonian-field derivation", r_ham, 1e-12,
                     "transport field equals -1/2 bivector(d potential), exactly")

    # integrated endpoint: from (w, z) = (1, 1), time one multiplies w by e^i
    steps = max(1, round(1.0 / cfg["flow_step"]))
    start = wx.points_from_complex(np.array([1.0 + 0j]), np.array([1.0 + 0j]))
    end = integrate_flow(wx.transport_field, start, steps=steps)
    r_end = float(abs(wx.w_of(end)[0] - np.exp(1j)))
    bundle.add_check("flow endpoint", r_end, cfg["endpoint_tolerance"],
                     f"|w(1) - e^i| after {steps} RK4 steps from (1, 1)")

    # grid consistency: the two structure equations of the family, evaluated
    # pointwise on the configured grid (algebra only, no grid derivatives)
    grid = GridSpec(2, cfg["resolution"])
    gp = grid.points.reshape(-1, 4)[:: max(1, grid.size // 4096)]
    I0 = standard_complex_structure(2)
    worst_one = worst_two = 0.0
    for t in ts:
        res = gauge_equations_residual(I0, wx.poisson_matrix(gp), wx.b_path_matrix(t, gp),
                                       wx.complex_structure(t, gp))
        worst_one = max(worst_one, res["first"])
        worst_two = max(worst_two, res["second"])
    bundle.add_check("family structure equation (tangent part)", worst_one, 1e-10,
                     f"pointwise on the {cfg['resolution']}^4 grid sample")
    bundle.add_check("family structure equation (cotangent part)", worst_two, 1e-10,
                     f"pointwise on the {cfg['resolution']}^4 grid sample")

    bundle.tables["residuals_by_time"] = "\n".join(rows)
    return bundle


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------


def cmd_normalize(config: Optional[Dict] = None) -> ReportBundle:
    """Round-trip normalization scenario (or its controls)."""
    cfg = validate_config("normalize", config)
    bundle = ReportBundle("normalize", config=cfg)
    kind = cfg["kind"]
    if kind not in ("roundtrip", "bivector", "oversize"):
        raise ConfigError(f"unknown normalize scenario kind {cfg['kind']!r}")
    grid = GridSpec(2, cfg["resolution"])
    s = _constant_sigma_matrix(cfg["sigma_poly"])
    if abs(s) > 0.05:
        raise ConfigError(f"bivector coefficient {abs(s):.3f} exceeds the 0.05 scenario gate")
    eps_nf = constant_bivector_deformation(grid, s)
    sched = Schedule(target=cfg["tolerance"], max_iterations=cfg["max_iterations"])

    if kind == "bivector":
        psi, eps_fin, led = normalize(eps_nf, sched)
        bundle.ledgers["normalization"] = led.to_table()
        bundle.add_flag("bivector input returns immediately",
                        led.converged and len(psi.factors) == 0 and len(led.rows) == 1,
                        f"rows={len(led.rows)} factors={len(psi.factors)}")
        return bundle

    if kind == "oversize":
        big = constant_bivector_deformation(grid, s)
        e11 = np.zeros(grid.shape + (2, 2), dtype=complex)
        e11[..., 0, 0] = 0.8
        big = Deformation.from_components(grid, e20=big.e20, e11=e11)
        try:
            normalize(big, sched)
        except NormalizationError as exc:
            raise PreconditionError(str(exc)) from exc
        raise PreconditionError("oversize control unexpectedly entered the iteration")

    if cfg["seed"] is None:
        raise ConfigError("roundtrip scenario is randomized: a seed is required")
    rng = np.random.default_rng(cfg["seed"])
    psi_true = random_gauge_element(grid, rng, cfg["vector_amplitude"],
                                    cfg["covector_amplitude"], cfg["bfield_scale"],
                                    cfg["flow_steps"])
    t0 = time.time()
    eps0 = gauge_act(psi_true, eps_nf, grid=grid, consistency_tol=1e-5)
    build_s = time.time() - t0
    mc0 = mc_residual(eps0).max_abs()

    t0 = time.time()
    try:
        psi, eps_fin, led = normalize(eps0, sched)
    except NormalizationError as exc:
        if "gate" in str(exc):
            raise PreconditionError(str(exc)) from exc
        bundle.ledgers["normalization"] = exc.ledger.to_table() if exc.ledger else ""
        bundle.add_flag("normalization converged", False, str(exc))
        return bundle
    run_s = time.time() - t0
    bundle.ledgers["normalization"] = led.to_table()
    bundle.notes.append(f"hiding-gauge build: {build_s:.1f}s; normalization: {run_s:.1f}s")
    bundle.notes.append(f"entry structure-equation residual: {fmt(mc0)}")

    final_radius = led.rows[-1].radius
    z_fin = ck_norm(zeta(eps_fin), 1, final_radius)
    iters = led.rows[-1].k
    bundle.add_check("final error C1 norm", z_fin, cfg["tolerance"])
    bundle.add_check("iterations used", float(iters), cfg["iteration_bound"] + 0.5,
                     f"{iters} iterations vs bound {cfg['iteration_bound']}")
    redo = gauge_act(psi, eps0, grid=grid, consistency_tol=1e-5)
    gap = (redo.field - eps_fin.field).max_abs()
    bundle.add_check("gauge element reproduces output", gap, cfg["reproduce_tolerance"],
                     "accumulated element applied to the input vs the returned deformation")
    mem = normal_form_membership(eps_fin)
    bundle.add_check("normal form: antiholomorphic derivative", mem["dbar_e20"],
                     cfg["membership_tolerance"])
    bundle.add_check("normal form: self-bracket", mem["self_bracket"],
                     cfg["membership_tolerance"])
    m20 = np.mean(eps_fin.e20.reshape(-1, 2, 2), axis=0)
    bundle.add_check("recovered bivector matches planted", float(abs(m20[0, 1] - s)),
                     1e-4, f"recovered {m20[0, 1]:.8f} vs planted {s:.8f}")
    slope, resid = order_estimate(led)
    bundle.notes.append(f"order estimate: slope {slope:.3f} (lsq residual {resid:.3f})")
    series = "k\tzeta_c1\n" + "\n".join(f"{row.k}\t{fmt(row.zeta_c1)}" for row in led.rows)
    bundle.tables["zeta_series"] = series
    return bundle


# ---------------------------------------------------------------------------
# interpolate
# ---------------------------------------------------------------------------


def cmd_interpolate(config: Optional[Dict] = None) -> ReportBundle:
    """Hamiltonian-interpolation pipeline on an exactly consistent family."""
    cfg = validate_config("interpolate", config)
    bundle = ReportBundle("interpolate", config=cfg)
    grid = GridSpec(2, cfg["resolution"])
    s = _constant_sigma_matrix(cfg["sigma_poly"])
    S = np.array([[0, s], [-s, 0]], dtype=complex)
    Q = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, S))
    rng = np.random.default_rng(cfg["seed"])
    h_field = trig_field(grid, 1, cfg["potential_amplitude"], rng)[..., 0]

    result = interpolate_holomorphic(
        grid, Q, h_field, nodes=cfg["nodes"], solve_potential=cfg["solve_potential"]
    )
    bundle.add_check("family structure equation (tangent part)",
                     result.gauge_residuals["first"], cfg["gauge_tolerance"])
    bundle.add_check("family structure equation (cotangent part)",
                     result.gauge_residuals["second"], cfg["gauge_tolerance"])
    gaps = result.invariant_gaps()
    bundle.add_check("transported complex structure vs closed form",
                     gaps["complex_structure"], cfg["tolerance"])
    bundle.add_check("transported bivector vs closed form", gaps["sigma"], cfg["tolerance"])
    bundle.add_check("transported Poisson matrix vs closed form", gaps["poisson"],
                     cfg["tolerance"])
    if cfg["solve_potential"]:
        bundle.add_check("potential re-solve vs reference", result.potential_vs_reference,
                         cfg["tolerance"], "elliptic solve at every node")

    # endpoint pair is honestly holomorphic Poisson
    pair = HoloPoissonPair(result.I_transported, result.sigma_transported)
    res = pair.residuals()
    for name, val in sorted(res.items()):
        bundle.add_check(f"endpoint pair invariant: {name}", val, cfg["tolerance"])

    # Taylor agreement of the transported vs algebraic endpoint tensors
    worst = 0.0
    for a in range(4):
        for b in range(4):
            worst = max(worst, _taylor_gap(grid, result.sigma_transported[..., a, b],
                                           result.sigma_algebraic[..., a, b],
                                           cfg["taylor_degree"]))
    bundle.add_check("endpoint Taylor coefficients", worst, cfg["taylor_tolerance"],
                     f"degree <= {cfg['taylor_degree']}, all bivector matrix entries")
    bundle.tables["endpoint_gaps"] = "quantity\tgap\n" + "\n".join(
        f"{k}\t{fmt(v)}" for k, v in sorted(gaps.items()))
    return bundle


# ---------------------------------------------------------------------------
# uniqueness-check
# ---------------------------------------------------------------------------


def cmd_uniqueness_check(config: Optional[Dict] = None) -> ReportBundle:
    """Two routes to the same normal form must agree as holomorphic Poisson data."""
    cfg = validate_config("uniqueness-check", config)
    bundle = ReportBundle("uniqueness-check", config=cfg)
    grid = GridSpec(2, cfg["resolution"])
    s = _constant_sigma_matrix(cfg["sigma_poly"])

    if cfg["mode"] == "construct":
        # one bivector, one potential-generated family: the endpoint is the
        # second structure by construction, and the transported bivector
        # must match it in Taylor coefficients
        S = np.array([[0, 0.9], [-0.9, 0]], dtype=complex)
        Q = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, S))
        rng = np.random.default_rng(11)
        h_field = trig_field(grid, 1, cfg["potential_amplitude"], rng)[..., 0]
        result = interpolate_holomorphic(grid, Q, h_field, nodes=cfg["nodes"])
        if max(result.gauge_residuals.values()) > cfg["gate"]:
            raise PreconditionError(
                "family fails the structure equations: the pair is not gauge-related "
                f"(residual {max(result.gauge_residuals.values()):.3e})"
            )
        worst = 0.0
        for a in range(4):
            for b in range(4):
                worst = max(worst, _taylor_gap(grid, result.sigma_transported[..., a, b],
                                               result.sigma_algebraic[..., a, b],
                                               cfg["taylor_degree"]))
        bundle.add_check("transported vs endpoint Taylor coefficients", worst,
                         cfg["tolerance"])
        return bundle

    if cfg["mode"] == "unrelated":
        # negative control: two structures not connected by any closed
        # two-form (different real Poisson matrices) must be rejected
        Sa = np.array([[0, 0.5], [-0.5, 0]], dtype=complex)
        Sb = np.array([[0, 0.9], [-0.9, 0]], dtype=complex)
        Qa = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, Sa))
        Qb = poisson_from_sigma_matrix(sigma_matrix_from_complex_frame(2, Sb))
        gap = float(np.abs(Qa - Qb).max())
        if gap > cfg["gate"]:
            raise PreconditionError(
                "the two structures have different gauge-invariant Poisson "
                f"matrices (gap {gap:.3e}): no closed two-form connects them"
            )
        raise PreconditionError("unrelated control unexpectedly passed the gate")

    if cfg["mode"] != "normal-forms":
        raise ConfigError(f"unknown uniqueness mode {cfg['mode']!r}")
    seeds = cfg["seeds"]
    if not isinstance(seeds, (list, tuple)) or len(seeds) != 2:
        raise ConfigError("normal-forms mode needs exactly two seeds")

    eps_nf = constant_bivector_deformation(grid, s)
    sched = Schedule(target=cfg["target"])
    finals = []
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(int(seed))
        g = random_gauge_element(grid, rng, cfg["vector_amplitude"],
                                 cfg["covector_amplitude"], cfg["bfield_scale"],
                                 cfg["flow_steps"])
        eps0 = gauge_act(g, eps_nf, grid=grid, consistency_tol=1e-5)
        try:
            _, eps_fin, led = normalize(eps0, sched)
        except NormalizationError as exc:
            if "gate" in str(exc):
                raise PreconditionError(str(exc)) from exc
            bundle.ledgers[f"normalization_{seed}"] = exc.ledger.to_table() if exc.ledger else ""
            bundle.add_flag(f"normalization converged (seed {seed})", False, str(exc))
            return bundle
        bundle.ledgers[f"normalization_{seed}"] = led.to_table()
        finals.append(eps_fin)

    # the two normal forms share the ambient complex structure, so the only
    # closed two-form relating them is zero and the connecting Hamiltonian
    # flow is the identity: the bivectors must agree outright
    a, b = finals
    gap0 = float(np.abs(np.mean(a.e20.reshape(-1, 2, 2), axis=0)
                        - np.mean(b.e20.reshape(-1, 2, 2), axis=0)).max())
    if gap0 > cfg["gate"]:
        raise PreconditionError(
            f"normal forms differ at the gate level ({gap0:.3e}): inputs were "
            "not gauge realizations of the same structure"
        )
    worst = 0.0
    for i in range(2):
        for j in range(2):
            worst = max(worst, _taylor_gap(grid, a.e20[..., i, j], b.e20[..., i, j],
                                           cfg["taylor_degree"]))
    bundle.add_check("normal forms agree (Taylor coefficients)", worst, cfg["tolerance"],
                     "identity connecting flow: shared ambient structure forces B = 0")
    both = normal_form_membership(a), normal_form_membership(b)
    for i, mem in enumerate(both):
        bundle.add_check(f"normal form {i} membership", max(mem["dbar_e20"], mem["self_bracket"]),
                         1e-6)
    return bundle


# ---------------------------------------------------------------------------
# complex-locus
# ---------------------------------------------------------------------------


def cmd_complex_locus(config: Optional[Dict] = None) -> ReportBundle:
    """Zero set of the real Poisson matrix vs the vanishing-ideal generators."""
    cfg = validate_config("complex-locus", config)
    bundle = ReportBundle("complex-locus", config=cfg)
    grid = GridSpec(2, cfg["resolution"])
    terms = parse_poly_spec(cfg["sigma_poly"], 2)
    f = eval_poly_grid(grid, terms)  # the single independent bivector component

    S = np.zeros(grid.shape + (2, 2), dtype=complex)
    S[..., 0, 1] = f
    S[..., 1, 0] = -f
    sigma = sigma_matrix_from_complex_frame(2, S)
    Q = poisson_from_sigma_matrix(sigma)

    qnorm = np.abs(Q).max(axis=(-2, -1))
    scale = float(qnorm.max())
    thr = cfg["threshold"]
    if thr is None:
        # one grid cell of margin around a transverse zero: |grad| ~ scale/L
        thr = max(scale, 1.0) * grid.h
    locus = qnorm <= thr

    # vanishing-ideal generator: the component function itself
    gen_zero = np.abs(f) <= thr / max(scale, 1e-30) * max(float(np.abs(f).max()), 1e-30) \
        if scale > 0 else np.ones(grid.shape, bool)
    # robust identification: compare against |f| scaled like |Q|
    gen_zero = (4.0 * np.abs(f)) <= thr  # |Q| rows scale as 4|f| here

    agree = bool(np.array_equal(locus, gen_zero))
    bundle.add_flag("locus equals ideal zero set", agree,
                    f"symmetric difference {int(np.logical_xor(locus, gen_zero).sum())} points")

    expected = cfg["expected"]
    if expected == "z1-axis":
        # analytic zero set {z_1 = 0}: within one grid cell of the plane
        dist = np.abs(np.broadcast_to(grid.z(0), grid.shape))
        detected_off = float(dist[locus].max()) if locus.any() else float("inf")
        bundle.add_check("detected locus within one cell of the plane", detected_off,
                         grid.h * np.sqrt(2.0) + 1e-12,
                         "max |z_1| over detected points")
        on_plane = dist <= 1e-12
        missed = int((on_plane & ~locus).sum())
        bundle.add_flag("plane points all detected", missed == 0, f"{missed} missed")
    elif expected == "empty":
        bundle.add_flag("locus empty", not locus.any(), f"{int(locus.sum())} points detected")
    elif expected == "all":
        bundle.add_flag("locus covers the patch", bool(locus.all()),
                        f"{int((~locus).sum())} points escaped")
    elif expected != "none":
        raise ConfigError(f"unknown expected locus {expected!r}")

    frac = float(locus.mean())
    bundle.tables["locus_summary"] = (
        "quantity\tvalue\n"
        f"threshold\t{fmt(thr)}\n"
        f"scale\t{fmt(scale)}\n"
        f"detected_fraction\t{fmt(frac)}\n"
    )
    return bundle


COMMANDS = {
    "verify-example": cmd_verify_example,
    "normalize": cmd_normalize,
    "interpolate": cmd_interpolate,
    "uniqueness-check": cmd_uniqueness_check,
    "complex-locus": cmd_complex_locus,
}
