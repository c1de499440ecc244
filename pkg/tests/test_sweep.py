"""Sweep harness tests.

Rate fitting is checked against synthetic power laws whose log-log slopes
are known in closed form; on exact powers the least-squares fit is
interpolation, so the slope must come back at machine precision.  The
end-to-end runs use the weakly coupled reflection system at two coarse
wavelengths and assert plumbing (row status, report shape, file
round-trips, failure isolation), not error magnitudes, which need the
production grids and live in the acceptance suite.  CSV determinism is
byte equality of repeated emissions; the timestamp is quarantined in the
JSON summary so it can never break that.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import BETA, DA_NONLINEAR, S0_NONLINEAR, make_spec
from pulse_optics.profiles import BoundaryPulse, GridSpec
from pulse_optics.sweep import (
    CSV_HEADER,
    SweepConfig,
    SweepReport,
    SweepRow,
    SweepWindow,
    emit_report,
    fit_rate,
    p_exponent,
    report_csv,
    run_sweep,
)


# ---------------------------------------------------------------------------
# exponent rule and rate fits


def test_p_exponent_closed_form():
    # smallest integer >= d/2 + 3, then 2/(2m+5)
    assert p_exponent(1) == pytest.approx(2.0 / 13.0, abs=1e-15)
    assert p_exponent(2) == pytest.approx(2.0 / 13.0, abs=1e-15)
    assert p_exponent(3) == pytest.approx(2.0 / 15.0, abs=1e-15)
    with pytest.raises(ValueError):
        p_exponent(0)


def test_fit_rate_recovers_linear_slope():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = fit_rate(eps, 3.7 * eps, floor=1e-12)
    assert abs(fit["slope"] - 1.0) < 1e-12
    assert fit["n_used"] == 4
    assert fit["excluded"] == []
    assert fit["band"] < 1e-10


def test_fit_rate_recovers_small_power():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = fit_rate(eps, eps ** (1.0 / 13.0), floor=1e-12)
    assert abs(fit["slope"] - 1.0 / 13.0) < 1e-12


def test_fit_rate_excludes_floor_rows():
    eps = [0.1, 0.05, 0.025, 0.0125]
    errs = [0.1, 0.05, 0.025, 3e-9]
    fit = fit_rate(eps, errs, floor=1e-6)
    assert fit["excluded"] == [3]
    assert fit["n_used"] == 3
    assert abs(fit["slope"] - 1.0) < 1e-12


def test_fit_rate_insufficient_data():
    with pytest.raises(ValueError, match="insufficient data"):
        fit_rate([0.1, 0.05], [0.1, 0.05])
    # enough rows, but the floor eats all of them
    with pytest.raises(ValueError, match="insufficient data"):
        fit_rate([0.1, 0.05, 0.025, 0.0125], [1e-9] * 4, floor=1e-6)


# ---------------------------------------------------------------------------
# configuration validation


def _pulse(a0=0.1, a1=0.05):
    return BoundaryPulse(
        amplitude=np.array([a0, a1]),
        env_kind="plateau",
        env_params={"t_on": 0.0, "t_off": 0.5, "rise": 0.01, "fall": 0.05},
        shape_kind="gaussian",
        shape_params={"width": 0.5, "center": 1.7},
    )


def _spec():
    return make_spec(dA=DA_NONLINEAR, S0=S0_NONLINEAR)


def _profile_grid(nt=48, nx=48, ntheta=256):
    return GridSpec(T=0.32, X=0.25, nt=nt, nx=nx, ntheta=ntheta, theta_max=8.0)


def test_config_rejects_unsorted_eps():
    with pytest.raises(ValueError, match="strictly decreasing"):
        SweepConfig(
            spec=_spec(), pulse=_pulse(), beta=BETA,
            eps_list=(0.1, 0.1), profile_grid=_profile_grid(),
        )


def test_config_rejects_window_outside_domain():
    with pytest.raises(ValueError, match="window"):
        SweepConfig(
            spec=_spec(), pulse=_pulse(), beta=BETA,
            T=0.32, x_window=0.2,
            window=SweepWindow(0.0, 0.32, 0.0, 0.4),
            profile_grid=_profile_grid(),
        )


def test_config_defaults_and_grid_rule():
    cfg = SweepConfig(
        spec=_spec(), pulse=_pulse(), beta=BETA, profile_grid=_profile_grid()
    )
    assert cfg.b == pytest.approx(2.0 / 13.0, abs=1e-15)
    assert cfg.eps_list == (1 / 10, 1 / 20, 1 / 40, 1 / 80)
    assert cfg.ppw_for(cfg.eps_list[0]) == cfg.ppw0
    # density grows like the square root of the wavelength ratio
    assert cfg.ppw_for(cfg.eps_list[0] / 4.0) == int(np.ceil(2 * cfg.ppw0))
    assert cfg.p_for(0.1) == pytest.approx(0.1 ** (2.0 / 13.0), rel=1e-14)
    w = cfg.window
    assert (w.t_lo, w.t_hi, w.x_lo, w.x_hi) == (0.0, cfg.T, 0.0, cfg.x_window)


# ---------------------------------------------------------------------------
# report emission


def _synthetic_report():
    rows = [
        SweepRow(
            eps=0.1, p=0.1 ** (2 / 13), ppw=24, grid_nt=100, grid_nx=50,
            err_leading_sup=7.2e-3, err_leading_l2=7.1e-4,
            err_corrected_sup=5.0e-3, err_corrected_l2=4.0e-4,
            err_leading_rows_sup=7.0e-3, err_leading_rows_l2=6.9e-4,
            runtime=1.5,
        ),
        SweepRow(
            eps=0.05, p=0.05 ** (2 / 13), ppw=34, grid_nt=300, grid_nx=160,
            err_leading_sup=5.5e-3, err_leading_l2=4.8e-4,
            err_corrected_sup=3.9e-3, err_corrected_l2=2.9e-4,
            err_leading_rows_sup=5.4e-3, err_leading_rows_l2=4.7e-4,
            runtime=4.5,
        ),
        SweepRow(eps=0.025, p=0.025 ** (2 / 13), status="CFLError: synthetic"),
    ]
    fits = {
        "leading_sup": {
            "slope": 0.25, "intercept": -4.0, "band": 0.05,
            "n_used": 2, "excluded": [], "status": "ok",
        }
    }
    return SweepReport(
        config={"eps_list": [0.1, 0.05, 0.025], "floor": 1e-6},
        rows=rows,
        fits=fits,
        meta={"runtime_total": 6.0},
    )


def test_csv_header_and_determinism():
    rep = _synthetic_report()
    text = report_csv(rep)
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 4
    # failed row keeps its reason, error fields are nan
    assert "CFLError: synthetic" in lines[3]
    assert ",nan," in lines[3]
    assert report_csv(rep) == text


def test_csv_empty_report_is_header_only():
    rep = SweepReport(config={}, rows=[])
    assert report_csv(rep) == CSV_HEADER + "\n"


def test_emit_report_round_trip(tmp_path):
    rep = _synthetic_report()
    paths = emit_report(rep, tmp_path / "a")
    assert set(paths) == {"csv", "json", "svg"}
    csv_a = paths["csv"].read_bytes()
    assert csv_a.startswith(CSV_HEADER.encode())

    payload = json.loads(paths["json"].read_text())
    assert set(payload) == {"config", "rows", "fits", "meta"}
    assert len(payload["rows"]) == 3
    assert payload["rows"][2]["status"].startswith("CFLError")
    assert "timestamp" in payload["meta"]
    assert payload["fits"]["leading_sup"]["slope"] == pytest.approx(0.25)

    svg = paths["svg"].read_text()
    assert "<svg" in svg

    # identical report, second emission: CSV bytes identical, JSON equal
    # once the timestamp is dropped
    paths_b = emit_report(rep, tmp_path / "b")
    assert paths_b["csv"].read_bytes() == csv_a
    pay_b = json.loads(paths_b["json"].read_text())
    payload["meta"].pop("timestamp")
    pay_b["meta"].pop("timestamp")
    assert pay_b == payload


def test_emit_report_empty(tmp_path):
    rep = SweepReport(config={}, rows=[])
    paths = emit_report(rep, tmp_path)
    assert paths["csv"].read_text() == CSV_HEADER + "\n"
    assert "<svg" in paths["svg"].read_text()


# ---------------------------------------------------------------------------
# end-to-end on coarse wavelengths


def test_run_sweep_end_to_end(tmp_path):
    cfg = SweepConfig(
        spec=_spec(),
        pulse=_pulse(),
        beta=BETA,
        eps_list=(1 / 4, 1 / 8),
        ppw0=12,
        profile_grid=_profile_grid(),
        profile_tol=1e-8,
        corr_rows=16,
    )
    rep = run_sweep(cfg)
    assert [r.status for r in rep.rows] == ["ok", "ok"]
    r0, r1 = rep.rows
    assert r0.ppw == 12 and r1.ppw == 17
    for r in rep.rows:
        assert np.isfinite(r.err_leading_sup) and r.err_leading_sup > 0
        assert np.isfinite(r.err_corrected_sup) and r.err_corrected_sup > 0
        assert np.isfinite(r.err_leading_l2) and r.err_leading_l2 > 0
        assert 0 < r.err_leading_rows_sup <= r.err_leading_sup + 1e-15
        assert r.runtime > 0
    # two usable rows cannot support a slope fit
    assert rep.fits["leading_sup"]["status"] == "insufficient data"
    assert rep.meta["profile_iterations"] >= 2
    assert len(rep.meta["config_sha256"]) == 64
    assert "numpy" in rep.meta["versions"]

    paths = emit_report(rep, tmp_path)
    payload = json.loads(paths["json"].read_text())
    assert payload["meta"]["config_sha256"] == rep.meta["config_sha256"]


def test_run_sweep_isolates_row_failures():
    # Courant number over the scheme limit: every row fails at grid
    # construction, but the report still carries the reasons
    cfg = SweepConfig(
        spec=_spec(),
        pulse=_pulse(),
        beta=BETA,
        eps_list=(1 / 4, 1 / 8, 1 / 16),
        cfl=0.46,
        profile_grid=_profile_grid(nt=32, nx=32, ntheta=128),
        profile_tol=1e-6,
    )
    rep = run_sweep(cfg)
    assert all(r.status.startswith("ValueError") for r in rep.rows)
    assert all(np.isnan(r.err_leading_sup) for r in rep.rows)
    assert rep.fits["leading_sup"]["status"] == "insufficient data"
    text = report_csv(rep)
    assert text.count("\n") == 4
