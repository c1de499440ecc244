"""Weakly nonlinear geometric optics for boundary-reflected pulses.

The package is organized along the pipeline:

    hyperbolic  linear mode structure at the zero state: dispersion roots,
                phase table, stable subspace, uniform stability scan
    profiles    leading-order profile transport (Picard iteration on
                ray-aligned lattices) and windowed norms
    calculus    oscillatory calculus: moment-zero cutoffs, the averaging
                operator E, the ray integrator R_infinity, and the
                first-order corrector assembly
    exact       resolved reference solver for the quasilinear boundary
                value problem at fixed epsilon
    sweep       epsilon-sweep harness: errors, rate fits, reports
"""

from .hyperbolic import (
    SystemSpec,
    PhaseMode,
    PhaseTable,
    SpecError,
    GlancingError,
    dispersion_roots,
    phase_table,
    stable_subspace,
    uniform_stability_scan,
    hyperbolic_region_test,
    glancing_test,
    validate_system,
)
from .sweep import (
    SweepConfig,
    SweepReport,
    SweepRow,
    emit_report,
    fit_rate,
    p_exponent,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "SystemSpec",
    "PhaseMode",
    "PhaseTable",
    "SpecError",
    "GlancingError",
    "dispersion_roots",
    "phase_table",
    "stable_subspace",
    "uniform_stability_scan",
    "hyperbolic_region_test",
    "glancing_test",
    "validate_system",
    "SweepConfig",
    "SweepReport",
    "SweepRow",
    "emit_report",
    "fit_rate",
    "p_exponent",
    "run_sweep",
    "__version__",
]
