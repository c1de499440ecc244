"""Shared fixtures: the canonical 3x3 reflection system in linear and
weakly coupled nonlinear variants, plus cached expensive solves."""

from __future__ import annotations

import numpy as np
import pytest

from pulse_optics.hyperbolic import SystemSpec
from pulse_optics.profiles import BoundaryPulse, GridSpec


BETA = np.array([1.0])

AD0 = np.diag([2.0, -1.0, 1.0])
B0 = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])

# symmetric state derivatives: A_1(eps u) stays symmetric, so real
# diagonalizability can never be lost in the reference solver
DA_NONLINEAR = np.array(
    [
        [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]],
        [[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]],
    ]
)

S0_NONLINEAR = np.array(
    [
        [0.2, 0.1, 0.0],
        [0.1, 0.0, 0.2],
        [0.0, 0.2, 0.1],
    ]
)


def make_spec(dA=None, S0=None, B0_=None, dB=None) -> SystemSpec:
    N = 3
    dA_arr = np.zeros((1, N, N, N)) if dA is None else np.asarray(dA)[None, ...]
    return SystemSpec(
        A=AD0[None, ...],
        dA=dA_arr,
        B0=B0 if B0_ is None else np.asarray(B0_),
        S0=np.zeros((N, N)) if S0 is None else np.asarray(S0),
        dB=dB,
    )


@pytest.fixture(scope="session")
def spec_linear() -> SystemSpec:
    return make_spec()


@pytest.fixture(scope="session")
def spec_nonlinear() -> SystemSpec:
    return make_spec(dA=DA_NONLINEAR, S0=S0_NONLINEAR)


@pytest.fixture(scope="session")
def pulse_std() -> BoundaryPulse:
    return BoundaryPulse(
        amplitude=np.array([0.2, 0.1]),
        env_kind="bump",
        env_params={"t_on": 0.0, "t_off": 0.5},
        shape_kind="gaussian",
        shape_params={"width": 1.2, "center": 0.0},
    )


@pytest.fixture(scope="session")
def grid_small() -> GridSpec:
    return GridSpec(T=0.8, X=0.8, nt=64, nx=64, ntheta=256, theta_max=12.0)


@pytest.fixture(scope="session")
def grid_medium() -> GridSpec:
    return GridSpec(T=0.8, X=0.8, nt=128, nx=128, ntheta=256, theta_max=12.0)


@pytest.fixture(scope="session")
def profiles_nonlinear_small(spec_nonlinear, pulse_std, grid_small):
    from pulse_optics.hyperbolic import phase_table
    from pulse_optics.profiles import interaction_coefficients, solve_profiles

    table = phase_table(spec_nonlinear, BETA)
    coeffs = interaction_coefficients(spec_nonlinear, table)
    ps = solve_profiles(table, coeffs, pulse_std, grid_small, tol=1e-10, max_iter=40)
    return table, coeffs, ps
