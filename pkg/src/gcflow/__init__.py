"""Spectral toolkit for the local geometry of generalized complex structures.

Layers
------
``fields``
    Windowed spectral calculus on a flat torus: exterior-algebra grid fields,
    Dolbeault-type operators, homotopy, smoothing, potential solves, norms.
``gc_core``
    Pointwise generalized complex linear algebra on ``T + T*``: structures of
    complex, symplectic and holomorphic-Poisson type, B-field transforms,
    compatibility residuals.
``worked_example``
    Closed-form reference data for the standard rank-jumping holomorphic
    Poisson structure on two complex dimensions, used as the oracle for most
    integration tests.
``deformation``
    Deformation complex of the standard structure: Schouten-type bracket,
    Maurer-Cartan residual, graph encoding/decoding, gauge actions.
``flows``
    Flow integration, Lie transport of tensors, the gauge-to-holomorphic
    interpolation pipeline.
``normalizer``
    Smoothed Newton-type normalization iteration driving small deformations
    to holomorphic Poisson normal form, with schedules and ledgers.
``scenarios``
    Seeded constructions for demonstrations and verification runs.
"""

from . import fields  # noqa: F401

__version__ = "0.1.0"
