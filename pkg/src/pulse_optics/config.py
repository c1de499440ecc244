"""YAML run configurations shared by every CLI subcommand.

Schema (keys actually read; everything else is rejected so typos fail loud):

    system:
      N: 3                  # state dimension
      d: 1                  # space dimension
      Ad0: [[...], ...]     # boundary-normal flux matrix at u = 0, row-major
      A: [Ad0-like, ...]    # all d flux matrices; optional when d = 1
      dA: [[[...]]]         # dA[j][k] = d A_j / d u_k at 0; zeros if absent
      B0: [[...], ...]      # (p, N) boundary matrix at u = 0
      F0: [[...], ...]      # (N, N) source matrix at u = 0; zeros if absent
      dB: [[[...]]]         # (N, p, N) boundary state dependence; optional
    frequency:
      beta: [1.0]           # tangential frequency, d components
    pulse:
      amplitude: [0.2, 0.1]
      envelope: {kind: plateau, t_on: 0.0, t_off: 0.5, rise: 0.002, fall: 0.05}
      shape: {kind: gaussian, width: 0.5, center: 1.7}
    profiles:
      grid: {T: 0.32, X: 0.25, nt: 128, nx: 128, ntheta: 768, theta_max: 8.0}
      tol: 1.0e-10
      max_iter: 40
    exact:
      T: 0.32
      x_window: 0.2
      max_speed: 2.2
      ppw: 24
      cfl: 0.4
      delta: 0.5
    sweep:
      eps_list: [0.1, 0.05, 0.025, 0.0125]
      ppw0: 24
      ppw_growth: 0.5
      corr_rows: 128
      floor: 1.0e-6

The `system`/`frequency` sections are mandatory; the rest default as above.
`sweep` inherits T/x_window/max_speed/cfl from `exact` and the profile grid
and tolerance from `profiles` unless overridden inline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .hyperbolic import SystemSpec
from .profiles import BoundaryPulse, GridSpec
from .sweep import SweepConfig, SweepWindow

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
]


class ConfigError(ValueError):
    pass


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing '{key}' in {where}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set, where: str):
    extra = set(mapping) - allowed
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)} in {where}")


def _system_from(cfg: dict) -> SystemSpec:
    _check_keys(cfg, {"N", "d", "Ad0", "A", "dA", "B0", "F0", "dB"}, "system")
    N = int(_require(cfg, "N", "system"))
    d = int(_require(cfg, "d", "system"))
    if "A" in cfg:
        A = np.asarray(cfg["A"], dtype=float)
    elif d == 1:
        A = np.asarray(_require(cfg, "Ad0", "system"), dtype=float)[None, ...]
    else:
        raise ConfigError("system.A (all d flux matrices) is required for d > 1")
    if A.shape != (d, N, N):
        raise ConfigError(f"flux matrices must form a ({d}, {N}, {N}) stack")
    if "Ad0" in cfg and "A" in cfg:
        if not np.array_equal(A[-1], np.asarray(cfg["Ad0"], dtype=float)):
            raise ConfigError("system.Ad0 disagrees with system.A[-1]")
    dA = (
        np.asarray(cfg["dA"], dtype=float)
        if "dA" in cfg
        else np.zeros((d, N, N, N))
    )
    S0 = (
        np.asarray(cfg["F0"], dtype=float)
        if "F0" in cfg
        else np.zeros((N, N))
    )
    dB = np.asarray(cfg["dB"], dtype=float) if cfg.get("dB") is not None else None
    return SystemSpec(A=A, dA=dA, B0=np.asarray(_require(cfg, "B0", "system"),
                                                dtype=float), S0=S0, dB=dB)


def _pulse_from(cfg: dict) -> BoundaryPulse:
    _check_keys(cfg, {"amplitude", "envelope", "shape"}, "pulse")
    env = dict(cfg.get("envelope", {"kind": "bump", "t_on": 0.0, "t_off": 0.5}))
    shp = dict(cfg.get("shape", {"kind": "gaussian", "width": 1.0, "center": 0.0}))
    env_kind = env.pop("kind", "bump")
    shape_kind = shp.pop("kind", "gaussian")
    return BoundaryPulse(
        amplitude=np.asarray(_require(cfg, "amplitude", "pulse"), dtype=float),
        env_kind=env_kind,
        env_params=env,
        shape_kind=shape_kind,
        shape_params=shp,
    )


def _grid_from(cfg: dict) -> GridSpec:
    _check_keys(cfg, {"T", "X", "nt", "nx", "ntheta", "theta_max"},
                "profiles.grid")
    return GridSpec(
        T=float(_require(cfg, "T", "profiles.grid")),
        X=float(_require(cfg, "X", "profiles.grid")),
        nt=int(_require(cfg, "nt", "profiles.grid")),
        nx=int(_require(cfg, "nx", "profiles.grid")),
        ntheta=int(_require(cfg, "ntheta", "profiles.grid")),
        theta_max=float(cfg.get("theta_max", 12.0)),
    )


class RunConfig:
    """Parsed configuration: system + pulse + per-stage solver settings."""

    def __init__(self, raw: dict, origin: str = "<dict>"):
        _check_keys(raw, {"system", "frequency", "pulse", "profiles",
                          "exact", "sweep"}, origin)
        self.spec = _system_from(dict(_require(raw, "system", origin)))
        freq = dict(_require(raw, "frequency", origin))
        _check_keys(freq, {"beta"}, "frequency")
        self.beta = np.asarray(_require(freq, "beta", "frequency"), dtype=float)
        if self.beta.shape != (self.spec.d,):
            raise ConfigError(
                f"frequency.beta must have {self.spec.d} component(s)"
            )
        self.pulse = _pulse_from(dict(raw.get("pulse", {"amplitude": [0.0]})))
        if self.pulse.amplitude.shape != (self.spec.p,):
            raise ConfigError(
                f"pulse.amplitude must have {self.spec.p} component(s) "
                f"(rows of B0)"
            )

        prof = dict(raw.get("profiles", {}))
        _check_keys(prof, {"grid", "tol", "max_iter"}, "profiles")
        self.profile_grid = _grid_from(dict(prof.get(
            "grid",
            {"T": 0.32, "X": 0.25, "nt": 128, "nx": 128, "ntheta": 768,
             "theta_max": 8.0},
        )))
        self.profile_tol = float(prof.get("tol", 1e-10))
        self.profile_max_iter = int(prof.get("max_iter", 40))

        ex = dict(raw.get("exact", {}))
        _check_keys(ex, {"T", "x_window", "max_speed", "ppw", "cfl", "delta"},
                    "exact")
        self.T = float(ex.get("T", 0.32))
        self.x_window = float(ex.get("x_window", 0.2))
        self.max_speed = float(ex.get("max_speed", 2.2))
        self.ppw = int(ex.get("ppw", 24))
        self.cfl = float(ex.get("cfl", 0.4))
        self.delta = float(ex.get("delta", 0.5))

        sw = dict(raw.get("sweep", {}))
        _check_keys(sw, {"eps_list", "ppw0", "ppw_growth", "corr_rows",
                         "floor", "b", "window"}, "sweep")
        self.sweep_raw = sw

    def sweep_config(self, eps_list=None) -> SweepConfig:
        sw = self.sweep_raw
        eps = eps_list if eps_list is not None else sw.get(
            "eps_list", (1 / 10, 1 / 20, 1 / 40, 1 / 80)
        )
        window = None
        if "window" in sw:
            window = SweepWindow(*[float(v) for v in sw["window"]])
        return SweepConfig(
            spec=self.spec,
            pulse=self.pulse,
            beta=self.beta,
            eps_list=tuple(float(e) for e in eps),
            T=self.T,
            x_window=self.x_window,
            window=window,
            b=sw.get("b"),
            ppw0=int(sw.get("ppw0", self.ppw)),
            ppw_growth=float(sw.get("ppw_growth", 0.5)),
            cfl=self.cfl,
            max_speed=self.max_speed,
            profile_grid=self.profile_grid,
            profile_tol=self.profile_tol,
            corr_rows=int(sw.get("corr_rows", 128)),
            floor=float(sw.get("floor", 1e-6)),
            delta=self.delta,
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return RunConfig(raw, origin=str(path))
