"""Wavelength sweep: exact solution vs. pulse-profile approximations.

For a list of wavelengths eps the harness solves the quasilinear problem on
an eps-resolving grid, evaluates the leading-order approximation and the
corrected approximation (leading + eps * first corrector) over a fixed
space-time window, and fits log-log rates to the recorded error norms.

Two grid-design facts shape the defaults and are worth keeping in mind when
editing configurations:

  * at a fixed number of points per wavelength the marcher's dispersive
    error accumulates like 1/eps (constant phase error per oscillation,
    1/eps oscillations), so the reference grid must densify faster than the
    wavelength shrinks.  The points-per-wavelength rule here is
    ppw(eps) = ppw0 * (eps0/eps)**ppw_growth with growth 1/2, which holds
    the accumulated dispersive error constant across rows instead of letting
    it swamp the quantity being measured;
  * the boundary pulse must be fully ingested by the final time at the
    LARGEST eps (the shape enters on the clock t = eps * theta), otherwise
    the first rows measure a truncated interaction and the error curve is
    not comparable across eps.  With the default horizon this caps the
    shape's theta-support near center + 3 width <= T / max(eps).

The corrected approximation is sampled on a uniform subset of time rows
(corr_rows of them) because the transversal quadrature piece dominates its
evaluation cost; the leading error is also recorded on those same rows so
the corrected-vs-leading comparison never mixes sampling meshes.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .hyperbolic import (
    SystemSpec,
    phase_table,
    uniform_stability_scan,
    validate_system,
)
from .profiles import (
    BoundaryPulse,
    GridSpec,
    interaction_coefficients,
    leading_order_eval,
    solve_profiles,
)
from .calculus import build_corrector
from .exact import FineGrid, solve_exact

__all__ = [
    "SweepConfig",
    "SweepReport",
    "SweepRow",
    "emit_report",
    "fit_rate",
    "p_exponent",
    "run_sweep",
]


def p_exponent(d: int) -> float:
    """Cutoff-coupling exponent b in p = eps**b for dimension d.

    b = 2 / (2 m + 5) where m is the smallest integer >= d/2 + 3; at d = 1
    this is 2/13.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    m = math.ceil(d / 2 + 3)
    return 2.0 / (2 * m + 5)


@dataclass(frozen=True)
class SweepWindow:
    """Space-time comparison rectangle [t_lo, t_hi] x [x_lo, x_hi]."""

    t_lo: float
    t_hi: float
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not (0.0 <= self.t_lo < self.t_hi and 0.0 <= self.x_lo < self.x_hi):
            raise ValueError("degenerate comparison window")


@dataclass
class SweepConfig:
    """Everything one sweep needs; validation happens at construction."""

    spec: SystemSpec
    pulse: BoundaryPulse
    beta: tuple
    eps_list: tuple = (1 / 10, 1 / 20, 1 / 40, 1 / 80)
    T: float = 0.32
    x_window: float = 0.2
    window: SweepWindow | None = None
    b: float | None = None
    ppw0: int = 24
    ppw_growth: float = 0.5
    cfl: float = 0.4
    max_speed: float = 2.2
    profile_grid: GridSpec | None = None
    profile_tol: float = 1e-10
    corr_rows: int = 128
    floor: float = 1e-6
    delta: float = 0.5

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if len(eps) < 1 or any(e <= 0 for e in eps):
            raise ValueError("eps_list must hold positive wavelengths")
        if any(b <= a for a, b in zip(eps[1:], eps[:-1])):
            raise ValueError("eps_list must be strictly decreasing")
        self.eps_list = eps
        if self.b is None:
            self.b = p_exponent(self.spec.d)
        if self.window is None:
            self.window = SweepWindow(0.0, self.T, 0.0, self.x_window)
        w = self.window
        if w.t_hi > self.T + 1e-12 or w.x_hi > self.x_window + 1e-12:
            raise ValueError("window exceeds the solver domain")
        if self.profile_grid is None:
            self.profile_grid = GridSpec(
                T=self.T,
                X=self.x_window * 1.25,
                nt=128,
                nx=128,
                ntheta=768,
                theta_max=8.0,
            )
        pg = self.profile_grid
        if pg.T < w.t_hi - 1e-12 or pg.X < w.x_hi - 1e-12:
            raise ValueError("window exceeds the profile lattice")

    def ppw_for(self, eps: float) -> int:
        eps0 = self.eps_list[0]
        return int(np.ceil(self.ppw0 * (eps0 / eps) ** self.ppw_growth))

    def p_for(self, eps: float) -> float:
        return float(eps**self.b)

    def summary(self) -> dict:
        pg = self.profile_grid
        return {
            "eps_list": list(self.eps_list),
            "b": self.b,
            "T": self.T,
            "x_window": self.x_window,
            "window": [self.window.t_lo, self.window.t_hi,
                       self.window.x_lo, self.window.x_hi],
            "ppw0": self.ppw0,
            "ppw_growth": self.ppw_growth,
            "cfl": self.cfl,
            "max_speed": self.max_speed,
            "corr_rows": self.corr_rows,
            "floor": self.floor,
            "profile_tol": self.profile_tol,
            "profile_grid": [pg.T, pg.X, pg.nt, pg.nx, pg.ntheta, pg.theta_max],
            "amplitude": list(np.asarray(self.pulse.amplitude, dtype=float)),
            "envelope": [self.pulse.env_kind, dict(self.pulse.env_params)],
            "shape": [self.pulse.shape_kind, dict(self.pulse.shape_params)],
            "beta": list(np.asarray(self.beta, dtype=float)),
        }


@dataclass
class SweepRow:
    eps: float
    p: float
    ppw: int = 0
    grid_nt: int = 0
    grid_nx: int = 0
    err_leading_sup: float = float("nan")
    err_leading_l2: float = float("nan")
    err_corrected_sup: float = float("nan")
    err_corrected_l2: float = float("nan")
    err_leading_rows_sup: float = float("nan")
    err_leading_rows_l2: float = float("nan")
    runtime: float = 0.0
    status: str = "ok"


@dataclass
class SweepReport:
    config: dict
    rows: list
    fits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def ok_rows(self) -> list:
        return [r for r in self.rows if r.status == "ok"]


def fit_rate(eps_vals, err_vals, floor: float = 1e-6) -> dict:
    """Least-squares slope of log(err) against log(eps).

    Rows at or below the floor are excluded and flagged; fewer than three
    usable rows is an error ("insufficient data").  The band is the standard
    error of the slope estimate.
    """
    eps_vals = np.asarray(eps_vals, dtype=float)
    err_vals = np.asarray(err_vals, dtype=float)
    if eps_vals.shape != err_vals.shape or eps_vals.ndim != 1:
        raise ValueError("eps and err must be matching 1-d sequences")
    good = np.isfinite(err_vals) & (err_vals > floor)
    excluded = [int(i) for i in np.nonzero(~good)[0]]
    if int(good.sum()) < 3:
        raise ValueError("insufficient data")
    x = np.log(eps_vals[good])
    y = np.log(err_vals[good])
    n = x.size
    A = np.vstack([x, np.ones_like(x)]).T
    coef, residuals, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    if n > 2:
        ss = float(residuals[0]) if residuals.size else float(
            np.sum((y - A @ coef) ** 2)
        )
        sxx = float(np.sum((x - x.mean()) ** 2))
        band = math.sqrt(ss / (n - 2) / sxx) if sxx > 0 else float("inf")
    else:
        band = float("inf")
    return {
        "slope": slope,
        "intercept": intercept,
        "band": band,
        "n_used": int(n),
        "excluded": excluded,
        "status": "ok",
    }


def _fit_or_flag(eps_vals, err_vals, floor: float) -> dict:
    try:
        return fit_rate(eps_vals, err_vals, floor)
    except ValueError as exc:
        finite = [e for e in err_vals if np.isfinite(e)]
        usable = [e for e in finite if e > floor]
        # distinguish "the data sat at the floor" from "too few rows ran"
        status = "floor" if len(finite) >= 3 > len(usable) else str(exc)
        return {
            "slope": float("nan"),
            "band": float("nan"),
            "n_used": 0,
            "excluded": list(range(len(eps_vals))),
            "status": status,
        }


def run_sweep(config: SweepConfig, log=None) -> SweepReport:
    """Solve every eps row, accumulate window norms, fit rates.

    A failing row is recorded with its reason and the sweep continues; the
    report carries whatever completed.
    """

    def say(msg):
        if log is not None:
            log(msg)

    t_start = time.time()
    spec = config.spec
    validate_system(spec)
    scan = uniform_stability_scan(spec)
    if not scan.uniformly_stable:
        raise ValueError(
            f"system is not uniformly stable (min sigma {scan.min_sigma:.3e})"
        )

    table = phase_table(spec, config.beta)
    coeffs = interaction_coefficients(spec, table)
    t0 = time.time()
    profiles = solve_profiles(
        table, coeffs, config.pulse, config.profile_grid, tol=config.profile_tol
    )
    say(f"profiles: {len(profiles.convergence)} iterations "
        f"({time.time() - t0:.1f}s)")

    tau = float(np.asarray(config.beta, dtype=float)[0])
    w = config.window
    rows = []
    for eps in config.eps_list:
        row = SweepRow(eps=eps, p=config.p_for(eps))
        rows.append(row)
        t_row = time.time()
        try:
            ppw = config.ppw_for(eps)
            grid = FineGrid.build(
                eps,
                T=config.T,
                x_window=config.x_window,
                max_speed=config.max_speed,
                ppw=ppw,
                cfl=config.cfl,
            )
            row.ppw = ppw
            row.grid_nt, row.grid_nx = grid.nt, grid.nx
            corr = build_corrector(
                profiles.previous, profiles, coeffs, table, row.p
            )

            xmask = (grid.x_nodes >= w.x_lo - 1e-12) & (
                grid.x_nodes <= w.x_hi + 1e-12
            )
            xs = grid.x_nodes[xmask][::2]
            stride = max(2, 2 * int(round(grid.nt / (2.0 * config.corr_rows))))
            acc = {
                "sup": 0.0, "l2": 0.0,
                "c_sup": 0.0, "c_l2": 0.0,
                "r_sup": 0.0, "r_l2": 0.0,
            }

            def on_step(n, t, u, row_weights=(2.0, float(stride))):
                if n % 2 or not (w.t_lo - 1e-12 <= t <= w.t_hi + 1e-12):
                    return
                ua = leading_order_eval(profiles, eps, np.full(xs.shape, t), xs)
                d = np.abs(u[xmask][::2] - ua)
                acc["sup"] = max(acc["sup"], float(np.max(d)))
                acc["l2"] += float(np.sum(d * d)) * row_weights[0]
                if n % stride:
                    return
                uc = ua + eps * corr.eval(
                    np.full(xs.shape, t), xs, tau * t / eps * np.ones_like(xs),
                    xs / eps
                )
                dc = np.abs(u[xmask][::2] - uc)
                acc["c_sup"] = max(acc["c_sup"], float(np.max(dc)))
                acc["c_l2"] += float(np.sum(dc * dc)) * row_weights[1]
                acc["r_sup"] = max(acc["r_sup"], float(np.max(d)))
                acc["r_l2"] += float(np.sum(d * d)) * row_weights[1]

            solve_exact(
                spec, config.pulse, config.beta, eps, grid,
                delta=config.delta, on_step=on_step,
            )
            cell = grid.dt * 2.0 * grid.dx
            row.err_leading_sup = acc["sup"]
            row.err_leading_l2 = math.sqrt(acc["l2"] * cell)
            row.err_corrected_sup = acc["c_sup"]
            row.err_corrected_l2 = math.sqrt(acc["c_l2"] * cell)
            row.err_leading_rows_sup = acc["r_sup"]
            row.err_leading_rows_l2 = math.sqrt(acc["r_l2"] * cell)
        except Exception as exc:  # noqa: BLE001 - row isolation is the contract
            row.status = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        row.runtime = time.time() - t_row
        say(f"eps {eps:.6g}: {row.status} "
            f"sup {row.err_leading_sup:.4e} corrected {row.err_corrected_sup:.4e} "
            f"({row.runtime:.1f}s)")

    ok = [r for r in rows if r.status == "ok"]
    eps_ok = [r.eps for r in ok]
    fits = {
        "leading_sup": _fit_or_flag(
            eps_ok, [r.err_leading_sup for r in ok], config.floor
        ),
        "leading_l2": _fit_or_flag(
            eps_ok, [r.err_leading_l2 for r in ok], config.floor
        ),
        "corrected_sup": _fit_or_flag(
            eps_ok, [r.err_corrected_sup for r in ok], config.floor
        ),
    }
    # deferred: the package __init__ imports this module
    from pulse_optics import __version__

    summary = config.summary()
    meta = {
        "runtime_total": time.time() - t_start,
        "profile_iterations": len(profiles.convergence),
        "stability_min_sigma": scan.min_sigma,
        "config_sha256": hashlib.sha256(
            json.dumps(summary, sort_keys=True, default=float).encode()
        ).hexdigest(),
        "versions": {"package": __version__, "numpy": np.__version__},
    }
    return SweepReport(config=summary, rows=rows, fits=fits, meta=meta)


CSV_HEADER = (
    "eps,p,ppw,err_leading_sup,err_corrected_sup,err_leading_rows_sup,"
    "err_leading_l2,err_corrected_l2,err_leading_rows_l2,floor_flag,status"
)


def _csv_float(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.12e}"


def report_csv(report: SweepReport) -> str:
    """Deterministic CSV body: identical reports give identical bytes.

    Timestamps live only in the JSON summary.
    """
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    floor = report.config.get("floor", 1e-6)
    for r in report.rows:
        flag = (
            "floor"
            if np.isfinite(r.err_leading_sup) and r.err_leading_sup <= floor
            else ""
        )
        out.write(
            ",".join(
                [
                    f"{r.eps:.12e}",
                    f"{r.p:.12e}",
                    str(r.ppw),
                    _csv_float(r.err_leading_sup),
                    _csv_float(r.err_corrected_sup),
                    _csv_float(r.err_leading_rows_sup),
                    _csv_float(r.err_leading_l2),
                    _csv_float(r.err_corrected_l2),
                    _csv_float(r.err_leading_rows_l2),
                    flag,
                    r.status.replace(",", ";"),
                ]
            )
            + "\n"
        )
    return out.getvalue()


def emit_report(report: SweepReport, out_dir, formats=("csv", "json", "svg")):
    """Write the report files; returns {format: path}."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if "csv" in formats:
        p = out / "sweep.csv"
        p.write_text(report_csv(report))
        paths["csv"] = p
    if "json" in formats:
        p = out / "sweep.json"
        payload = {
            "config": report.config,
            "rows": [vars(r) for r in report.rows],
            "fits": report.fits,
            "meta": dict(report.meta, timestamp=time.strftime("%Y-%m-%dT%H:%M:%S")),
        }
        p.write_text(json.dumps(payload, indent=2, default=float))
        paths["json"] = p
    if "svg" in formats:
        p = out / "sweep.svg"
        _plot_svg(report, p)
        paths["svg"] = p
    return paths


def _plot_svg(report: SweepReport, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = report.ok_rows()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if ok:
        eps = np.array([r.eps for r in ok])
        for key, attr, mark in (
            ("leading", "err_leading_sup", "o"),
            ("corrected", "err_corrected_sup", "s"),
        ):
            errs = np.array([getattr(r, attr) for r in ok])
            keep = np.isfinite(errs) & (errs > 0)
            if keep.any():
                ax.loglog(eps[keep], errs[keep], mark + "-", label=key)
        fit = report.fits.get("leading_sup", {})
        if fit.get("status") == "ok":
            xx = np.array([eps.min(), eps.max()])
            yy = np.exp(fit["intercept"]) * xx ** fit["slope"]
            ax.loglog(xx, yy, "k--", lw=0.8,
                      label=f"slope {fit['slope']:.3f}")
    ax.set_xlabel("eps")
    ax.set_ylabel("window error")
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
