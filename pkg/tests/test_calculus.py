"""Oscillatory calculus tests.

Frozen oracle values:

  * Gaussian transversal integral: unit-width, unit-amplitude Gaussians on
    both factors, omega_i = 0, omega_a = 1, omega_b = -1, evaluated at
    theta0 = 0, xi_d = 0:
        int_infinity^0 e^{-s^2} e^{-s^2} ds = -int_0^infinity e^{-2 s^2} ds
                                            = -sqrt(pi/8) = -0.62665706865775.
  * Double-cut spectrum identity: applying the cut twice multiplies the
    spectrum by chi_p^2 (the transition band is attenuated twice; the cut is
    not a spectral projector).
  * Decaying primitive against direct cumulative quadrature: for a zero-mean
    cut signal the decaying primitive equals the running integral minus its
    own period mean (trapezoid reference on a fine grid).

Scaling bands (p in {1e-1, 3e-2, 1e-2, 3e-3}, checked within a factor 3 of
their geometric mean across the sweep; first-order Sobolev scale s = 1, so
the discrete norm is plain L2):

  * cut error        |sigma - sigma_p| / sqrt(p)      (flat, ~1.41)
  * primitive growth p * |primitive(sigma_p)|         (spread ~5x, inside band)
  * product cut      |raw - cut| / (sqrt(p))          (flat, ~0.20)
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from pulse_optics.calculus import (
    CorrectorRep,
    LatticePiece,
    LatticeQuadPiece,
    ProductPiece,
    QuadraturePiece,
    SinglePhasePiece,
    ThetaSignal,
    TypeFFunction,
    TypeFTerm,
    apply_E,
    apply_R_infinity,
    build_corrector,
    cutoff_curve,
    decaying_primitive,
    gaussian_signal,
    moment_zero,
    nontransversal_product,
    smoothstep5,
    transversal_integral,
)

GAUSSIAN_RAY_ORACLE = -float(np.sqrt(np.pi / 8.0))  # = -0.6266570686577501


# ---------------------------------------------------------------------------
# cutoff kernel


def test_smoothstep_endpoints_and_monotonicity():
    z = np.linspace(-1.0, 2.0, 301)
    v = smoothstep5(z)
    assert np.all(v[z <= 0.0] == 0.0)
    assert np.all(v[z >= 1.0] == 1.0)
    assert np.all(np.diff(v) >= -1e-15)
    # C^2 at the ends: first and second one-sided differences vanish
    h = 1e-4
    assert smoothstep5(np.array([h]))[0] < 1e-7
    assert 1.0 - smoothstep5(np.array([1.0 - h]))[0] < 1e-7


def test_cutoff_curve_bands():
    p = 0.3
    m = np.linspace(0.0, 1.2, 400)
    chi = cutoff_curve(m, p)
    assert np.all(chi[m <= p] == 0.0)
    assert np.all(chi[m >= 2 * p] == 1.0)
    mid = (m > p) & (m < 2 * p)
    assert np.all((chi[mid] > 0.0) & (chi[mid] < 1.0))


def test_cutoff_curve_rejects_unknown_kernel():
    with pytest.raises(ValueError):
        cutoff_curve(np.array([1.0]), 0.1, kernel="boxcar")


# ---------------------------------------------------------------------------
# theta signals


def test_signal_eval_matches_nodes_and_vanishes_outside():
    sig = gaussian_signal(half_width=10.0, n=512, width=1.3, center=0.7)
    th = sig.theta[5:-5]
    assert np.max(np.abs(sig.eval(th) - sig.values[5:-5])) < 1e-14
    assert sig.eval(np.array([-50.0, 50.0])).tolist() == [0.0, 0.0]


def test_signal_spectral_derivative():
    hw, n = 20.0, 2048
    th = -hw + (2 * hw / n) * np.arange(n)
    sig = ThetaSignal(np.exp(-(th**2)) * np.sin(2.0 * th), hw)
    want = np.exp(-(th**2)) * (2.0 * np.cos(2.0 * th) - 2.0 * th * np.sin(2.0 * th))
    assert np.max(np.abs(sig.derivative().values - want)) < 1e-10


def test_pad_preserves_values_and_alignment():
    sig = gaussian_signal(half_width=10.0, n=256, width=1.0)
    padded = sig.pad_to(35.0)
    assert padded.half_width == 40.0  # power-of-two factor
    assert abs(padded.dtheta - sig.dtheta) < 1e-15
    th = np.linspace(-8.0, 8.0, 101)
    assert np.max(np.abs(padded.eval(th) - sig.eval(th))) < 1e-13
    assert abs(padded.integral() - sig.integral()) < 1e-13


def test_pad_cap_limits_sample_count():
    sig = gaussian_signal(half_width=10.0, n=256, width=1.0)
    padded = sig.pad_to(1e9, max_n=4096)
    assert padded.n <= 4096


def test_support_brackets_gaussian_core():
    sig = gaussian_signal(half_width=30.0, n=1024, width=1.0)
    lo, hi = sig.support(1e-12)
    # e^{-theta^2} falls below 1e-12 at |theta| = sqrt(12 ln 10) = 5.257
    assert -7.0 < lo < -5.0
    assert 5.0 < hi < 7.0


# ---------------------------------------------------------------------------
# moment zero


def test_moment_zero_kills_mean_exactly():
    sig = gaussian_signal(n=2048, width=1.2)
    cut = moment_zero(sig, 0.05)
    assert abs(cut.integral()) < 1e-13
    assert abs(np.fft.rfft(cut.values)[0]) < 1e-10 * cut.sup() * cut.n


def test_moment_zero_preserves_high_band():
    sig = gaussian_signal(n=2048, width=1.2)
    p = 0.05
    cut = moment_zero(sig, p)
    raw = sig.pad_to(cut.half_width)
    sp_raw = np.fft.rfft(raw.values)
    sp_cut = np.fft.rfft(cut.values)
    high = raw.freqs >= 2.0 * p * (1.0 + 1e-9)
    assert np.max(np.abs(sp_cut[high] - sp_raw[high])) < 1e-9 * np.max(np.abs(sp_raw))


def test_moment_zero_double_application_is_chi_squared():
    # the cut is not a projector: twice = chi_p^2 on the spectrum
    sig = gaussian_signal(n=2048, width=1.2)
    p = 0.05
    once = moment_zero(sig, p)
    twice = moment_zero(once, p, pad=False)
    raw = sig.pad_to(once.half_width)
    chi = cutoff_curve(raw.freqs, p)
    chi[0] = 0.0
    want = np.fft.irfft(np.fft.rfft(raw.values) * chi * chi, n=raw.n)
    assert np.max(np.abs(twice.values - want)) < 1e-12
    assert abs(twice.integral()) < 1e-13


def test_moment_zero_rejects_bad_p():
    sig = gaussian_signal(n=256)
    with pytest.raises(ValueError):
        moment_zero(sig, 0.0)
    with pytest.raises(ValueError):
        moment_zero(sig, 1.5)


@settings(max_examples=20, deadline=None)
@given(
    a=st.floats(-3.0, 3.0, allow_nan=False),
    b=st.floats(-3.0, 3.0, allow_nan=False),
)
def test_moment_zero_is_linear(a, b):
    f = gaussian_signal(n=512, width=1.0, half_width=15.0)
    g = gaussian_signal(n=512, width=0.6, center=1.0, half_width=15.0)
    p = 0.1
    lhs = moment_zero(ThetaSignal(a * f.values + b * g.values, 15.0), p)
    rhs_f = moment_zero(f, p)
    rhs_g = moment_zero(g, p)
    err = np.max(np.abs(lhs.values - a * rhs_f.values - b * rhs_g.values))
    assert err < 1e-12 * (1.0 + abs(a) + abs(b))


# ---------------------------------------------------------------------------
# decaying primitive


def test_primitive_roundtrip_derivative():
    cut = moment_zero(gaussian_signal(n=2048, width=1.2), 0.05)
    prim = decaying_primitive(cut)
    assert np.max(np.abs(prim.derivative().values - cut.values)) < 1e-10


def test_primitive_matches_cumulative_trapezoid():
    # independent oracle: running trapezoid integral minus its period mean
    cut = moment_zero(gaussian_signal(n=65536, half_width=25.0, width=1.2), 0.2)
    prim = decaying_primitive(cut)
    running = scipy.integrate.cumulative_trapezoid(cut.values, dx=cut.dtheta, initial=0.0)
    running -= running.mean()
    assert np.max(np.abs(prim.values - running)) < 1e-6


def test_primitive_decays_into_tails():
    cut = moment_zero(gaussian_signal(n=2048, width=1.2), 0.05)
    prim = decaying_primitive(cut)
    edge = max(abs(prim.values[0]), abs(prim.values[-1]))
    assert edge < 1e-6 * prim.sup()


def test_primitive_rejects_nonzero_mean():
    with pytest.raises(ValueError):
        decaying_primitive(gaussian_signal(n=512))


# ---------------------------------------------------------------------------
# scaling bands across p decades


BAND_PS = (1e-1, 3e-2, 1e-2, 3e-3)


def _band_ok(vals):
    vals = np.asarray(vals)
    gm = float(np.exp(np.mean(np.log(vals))))
    return bool(np.all(vals <= 3.0 * gm) and np.all(vals >= gm / 3.0)), gm


def test_band_cut_error_sqrt_p():
    sig = gaussian_signal(half_width=25.0, n=4096, width=1.2)
    vals = []
    for p in BAND_PS:
        cut = moment_zero(sig, p)
        vals.append((sig.pad_to(cut.half_width) - cut).l2() / np.sqrt(p))
    ok, gm = _band_ok(vals)
    assert ok, (vals, gm)
    assert 0.5 < gm < 5.0


def test_band_primitive_inverse_p():
    sig = gaussian_signal(half_width=25.0, n=4096, width=1.2)
    vals = []
    for p in BAND_PS:
        prim = decaying_primitive(moment_zero(sig, p))
        vals.append(p * prim.l2())
    ok, gm = _band_ok(vals)
    assert ok, (vals, gm)


def test_band_product_cut_error_sqrt_p():
    sig = gaussian_signal(half_width=25.0, n=4096, width=1.2)
    tau = gaussian_signal(half_width=25.0, n=4096, width=0.8, center=0.4, amplitude=0.7)
    tder = tau.derivative()
    raw = sig * tder
    vals = []
    for p in BAND_PS:
        cut = nontransversal_product(sig, tder, p)
        vals.append((raw.pad_to(cut.half_width) - cut).l2() / np.sqrt(p))
    ok, gm = _band_ok(vals)
    assert ok, (vals, gm)


def test_nontransversal_product_zero_mean():
    sig = gaussian_signal(n=1024, width=1.2)
    tau = gaussian_signal(n=1024, width=0.8, center=0.4)
    cut = nontransversal_product(sig, tau.derivative(), 0.1)
    assert abs(cut.integral()) < 1e-12


# ---------------------------------------------------------------------------
# transversal ray integrals


def test_gaussian_ray_oracle():
    g = gaussian_signal(half_width=25.0, n=4096, width=1.0)
    val = transversal_integral(g, g, 0.0, 1.0, -1.0, 0.0, 0.0)
    assert abs(val - GAUSSIAN_RAY_ORACLE) < 1e-6


def test_transversal_empty_envelope_is_exact_zero():
    g = gaussian_signal(half_width=25.0, n=1024, width=1.0)
    # theta0 so far out that the factor envelopes cannot intersect [xi, inf)
    assert transversal_integral(g, g, 0.0, 1.0, -1.0, 500.0, 0.0) == 0.0
    assert transversal_integral(g, g, 0.0, 1.0, -1.0, 0.0, 100.0) == 0.0


def test_transversal_rejects_coinciding_speeds():
    g = gaussian_signal(n=512)
    with pytest.raises(ValueError):
        transversal_integral(g, g, 0.0, 1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        transversal_integral(g, g, 1.0, 1.0, -1.0, 0.0, 0.0)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_transversal_matches_scipy_reference():
    p = 0.05
    g = moment_zero(gaussian_signal(n=2048, width=1.2), p)
    h = moment_zero(gaussian_signal(n=2048, width=0.7, center=0.5), p)
    om_i, om_a, om_b = -1.0, -0.5, 1.0
    aa, bb = om_a - om_i, om_b - om_i
    sa = g.support(1e-12)
    sb = h.support(1e-12)
    for t0, xd in [(-1.0, 0.25), (0.5, 1.5), (2.0, 0.0)]:
        z = t0 + om_i * xd
        la, ha = sorted(((sa[0] - z) / aa, (sa[1] - z) / aa))
        lb, hb = sorted(((sb[0] - z) / bb, (sb[1] - z) / bb))
        lo, hi = max(la, lb, xd), min(ha, hb)
        ref, _ = scipy.integrate.quad(
            lambda s: float(g.eval(z + s * aa) * h.eval(z + s * bb)),
            lo,
            hi,
            epsabs=1e-11,
            epsrel=0.0,
            limit=2000,
        )
        mine = transversal_integral(g, h, om_i, om_a, om_b, t0, xd)
        assert abs(mine + ref) < 1e-6  # orientation flips the sign


def test_transversal_bounded_far_out():
    g = gaussian_signal(half_width=25.0, n=2048, width=1.0)
    xi = np.linspace(0.0, 100.0, 41)
    vals = transversal_integral(g, g, 0.0, 1.0, -1.0, 0.0, xi)
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals)) <= abs(GAUSSIAN_RAY_ORACLE) + 1e-9
    # the ray leaves both envelopes: far field is identically zero
    assert abs(vals[-1]) < 1e-12


# ---------------------------------------------------------------------------
# averaging operator


OMEGAS = (-0.5, 1.0, -1.0)
COMP_MODES = (0, 1, 2)


def _four_term_function(p=None):
    g = gaussian_signal(n=2048, width=1.2)
    h = gaussian_signal(n=2048, width=0.7, center=0.5)
    if p is not None:
        g = moment_zero(g, p)
        h = moment_zero(h, p)
    return (
        TypeFFunction(
            OMEGAS,
            COMP_MODES,
            [
                TypeFTerm(0, ((1, g),)),
                TypeFTerm(0, ((0, g), (2, h))),
                TypeFTerm(1, ((0, g), (0, h))),
                TypeFTerm(2, ((0, g), (1, h))),
            ],
        ),
        g,
        h,
    )


def test_apply_E_keeps_only_own_phase_terms():
    F, g, h = _four_term_function()
    resonant = TypeFTerm(1, ((1, g),))
    pair_resonant = TypeFTerm(2, ((2, g), (2, h)))
    F.terms.extend([resonant, pair_resonant])
    kept = apply_E(F)
    assert kept.terms == [resonant, pair_resonant]


def test_apply_E_is_projector():
    F, g, h = _four_term_function()
    F.terms.append(TypeFTerm(1, ((1, g),)))
    once = apply_E(F)
    twice = apply_E(once)
    assert twice.terms == once.terms


def test_apply_E_matches_ray_average():
    # brute-force resonant average along the component's ray:
    # (1/T) int_0^T F_i(theta0 - omega_i s, s + xi) ds keeps own-phase terms
    # and sends cross-phase terms to zero like 1/T
    g = gaussian_signal(n=2048, width=1.2)
    F = TypeFFunction(
        OMEGAS,
        COMP_MODES,
        [TypeFTerm(0, ((1, g),)), TypeFTerm(0, ((0, g),))],
    )
    kept = apply_E(F)
    T = 1e3
    s = np.linspace(0.0, T, 200001)
    th0 = np.array([0.4])
    for xi0 in (0.0, 2.0):
        vals = F.eval(th0 - OMEGAS[0] * s, s + xi0)[..., 0]
        avg = np.trapezoid(vals, s) / T
        want = kept.eval(th0, np.array([xi0]))[0, 0]
        assert abs(avg - want) < 1e-2


# ---------------------------------------------------------------------------
# ray integrator


def test_r_infinity_rejects_resonant_terms():
    F, g, h = _four_term_function()
    F.terms.append(TypeFTerm(1, ((1, g),)))
    with pytest.raises(ValueError):
        apply_R_infinity(F, p=0.05)


def test_r_infinity_piece_inventory():
    F, g, h = _four_term_function(p=0.05)
    rep = apply_R_infinity(F, p=0.05)
    kinds = sorted(type(piece).__name__ for piece in rep.pieces)
    assert kinds == [
        "ProductPiece",
        "QuadraturePiece",
        "SinglePhasePiece",
        "SinglePhasePiece",
    ]


def test_r_infinity_single_piece_matches_direct_quadrature():
    # raw (nonzero-mean) input: the integrator cuts at p, takes the decaying
    # primitive, evaluates on the term's own phase; reference integrates the
    # cut signal along the ray directly
    p = 0.05
    f = gaussian_signal(n=2048, width=1.2)
    F = TypeFFunction(OMEGAS, COMP_MODES, [TypeFTerm(0, ((1, f),))])
    rep = apply_R_infinity(F, p=p)
    fp = moment_zero(f, p)
    alpha = OMEGAS[1] - OMEGAS[0]
    lo_sup, hi_sup = fp.support(1e-12)
    for t0, xd in [(0.0, 0.0), (-1.5, 2.0), (1.0, 0.5)]:
        mine = rep.eval(np.array([t0]), np.array([xd]))[0, 0]
        z = t0 + OMEGAS[0] * xd
        lo, hi = sorted(((lo_sup - z) / alpha, (hi_sup - z) / alpha))
        lo = max(lo, xd)
        if hi <= lo:
            ref = 0.0
        else:
            val, _ = scipy.integrate.quad(
                lambda s: float(fp.eval(z + s * alpha)),
                lo,
                hi,
                epsabs=1e-11,
                epsrel=0.0,
                limit=2000,
            )
            ref = -val
        scale = max(abs(ref), fp.sup())
        assert abs(mine - ref) < 1e-4 * scale


def test_r_infinity_defining_identity_all_piece_types():
    # (d_xi - omega_i d_theta0) (R F)_i = F_mod_i, with the same-phase pair
    # replaced by its cut product (the integrator re-cuts resonant products)
    p = 0.05
    F, g, h = _four_term_function(p=p)
    rep = apply_R_infinity(F, p=p)
    Fmod = TypeFFunction(
        OMEGAS,
        COMP_MODES,
        [
            F.terms[0],
            F.terms[1],
            TypeFTerm(1, ((0, nontransversal_product(g, h, p)),)),
            F.terms[3],
        ],
    )
    th = np.linspace(-3.0, 3.0, 16)
    xi = np.linspace(0.25, 6.0, 16)
    TH, XI = np.meshgrid(th, xi, indexing="ij")
    step = 1e-4
    d_xi = (rep.eval(TH, XI + step) - rep.eval(TH, XI - step)) / (2 * step)
    d_th = (rep.eval(TH + step, XI) - rep.eval(TH - step, XI)) / (2 * step)
    om = np.array([OMEGAS[c] for c in COMP_MODES])
    lhs = d_xi - om[None, None, :] * d_th
    rhs = Fmod.eval(TH, XI)
    assert np.max(np.abs(rhs)) > 0.5  # the check is not vacuous
    assert np.max(np.abs(lhs - rhs)) < 1e-4


def test_r_infinity_output_has_no_resonant_part():
    F, g, h = _four_term_function(p=0.05)
    rep = apply_R_infinity(F, p=0.05)
    assert apply_E(rep).terms == []
    # and the closed-piece reconstruction is resonance-free term by term
    back = rep.as_type_f()
    assert apply_E(back).terms == []


def test_r_infinity_quadrature_piece_decays_along_resonant_ray():
    # the transversal piece carries no resonant content: its value along the
    # component's own ray dies out, so a long-window average vanishes
    F, g, h = _four_term_function(p=0.05)
    rep = apply_R_infinity(F, p=0.05)
    quad = [q for q in rep.pieces if isinstance(q, QuadraturePiece)][0]
    om_i = OMEGAS[COMP_MODES[quad.comp]]
    s = np.linspace(0.0, 400.0, 4001)
    vals = quad.eval(OMEGAS, 0.3 - om_i * s, s)
    avg = np.trapezoid(vals, s) / s[-1]
    assert abs(avg) < 5e-3 * np.max(np.abs(vals))


def test_pre_cut_inputs_pass_through_unchanged():
    # signals with an empty band under p are integrated without re-cutting,
    # so the closed form is exact on them: compare against a primitive built
    # by hand from the same spectrum
    p = 0.05
    g = moment_zero(gaussian_signal(n=2048, width=1.2), p)
    F = TypeFFunction(OMEGAS, COMP_MODES, [TypeFTerm(0, ((1, g),))])
    rep = apply_R_infinity(F, p=p)
    piece = rep.pieces[0]
    assert isinstance(piece, SinglePhasePiece)
    want = decaying_primitive(g)
    assert piece.signal.n == want.n
    assert np.max(np.abs(piece.signal.values - want.values)) == 0.0


# ---------------------------------------------------------------------------
# lattice corrector


@pytest.fixture(scope="module")
def corrector_setup(spec_nonlinear, pulse_std):
    from pulse_optics.hyperbolic import phase_table
    from pulse_optics.profiles import GridSpec, interaction_coefficients, solve_profiles

    from conftest import BETA

    table = phase_table(spec_nonlinear, BETA)
    coeffs = interaction_coefficients(spec_nonlinear, table)
    grid = GridSpec(T=0.8, X=0.8, nt=64, nx=64, ntheta=512, theta_max=12.0)
    ps = solve_profiles(table, coeffs, pulse_std, grid, tol=1e-10, max_iter=40)
    return table, coeffs, ps


def test_corrector_piece_inventory(corrector_setup):
    # for the canonical nonlinear system the active cross couplings are
    # frozen from the coefficient matrices:
    #   comp 0: one same-phase pair (m[0,2,2])
    #   comp 1: two source pieces (e[1,0], e[1,2]) and the transversal pair
    #           (m[1,0,2])
    #   comp 2: both one-factor-own-phase routings (m[2,0,2], m[2,2,0])
    table, coeffs, ps = corrector_setup
    cor = build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=4)
    inventory = {}
    for piece in cor.pieces:
        kind = piece.kind if isinstance(piece, LatticePiece) else "quad"
        inventory[(piece.comp, kind)] = inventory.get((piece.comp, kind), 0) + 1
    assert inventory == {
        (0, "single"): 1,
        (1, "single"): 2,
        (1, "quad"): 1,
        (2, "product"): 2,
    }
    assert len(cor.psi_terms) == len(cor.pieces)


def test_corrector_residual_identity(corrector_setup):
    # (d_xi - omega_i d_theta0) U1_i = -Psi_i at fixed slow variables
    table, coeffs, ps = corrector_setup
    cor = build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=2, dtype=np.float64)
    t, x = 0.55, 0.3
    th = np.linspace(-4.0, 4.0, 9)[:, None]
    xi = np.linspace(0.1, 5.0, 7)[None, :]
    h = 1e-3
    d_xi = (cor.eval_comps(t, x, th, xi + h) - cor.eval_comps(t, x, th, xi - h)) / (2 * h)
    d_th = (cor.eval_comps(t, x, th + h, xi) - cor.eval_comps(t, x, th - h, xi)) / (2 * h)
    om = np.array([table.omegas[m] for m in table.comp_mode])
    lhs = d_xi - om[None, None, :] * d_th
    rhs = -cor.psi_eval(t, x, th, xi)
    assert np.max(np.abs(rhs)) > 1e-3  # non-vacuous
    assert np.max(np.abs(lhs - rhs)) < 1e-5


def test_corrector_residual_identity_with_tangential_coupling(corrector_setup):
    # cross-mode tangential couplings vanish identically in one space
    # dimension (each mode basis vector is an eigenvector of the normal
    # matrix), so the slow-derivative routing is exercised with a synthetic
    # coupling table; the defining identity must hold regardless
    table, coeffs, ps = corrector_setup
    v = np.zeros_like(coeffs.v_coef)
    v[0, 0, 2] = 0.3
    v[0, 2, 0] = -0.2
    coeffs2 = dataclasses.replace(coeffs, v_coef=v)
    cor = build_corrector(ps.previous, ps, coeffs2, table, p=0.5, sub=2, dtype=np.float64)
    kinds = {
        (p.comp, p.kind if isinstance(p, LatticePiece) else "quad") for p in cor.pieces
    }
    assert (0, "single") in kinds and (2, "single") in kinds
    t, x = 0.5, 0.25
    th = np.linspace(-3.0, 3.0, 7)[:, None]
    xi = np.linspace(0.2, 4.0, 5)[None, :]
    h = 1e-3
    d_xi = (cor.eval_comps(t, x, th, xi + h) - cor.eval_comps(t, x, th, xi - h)) / (2 * h)
    d_th = (cor.eval_comps(t, x, th + h, xi) - cor.eval_comps(t, x, th - h, xi)) / (2 * h)
    om = np.array([table.omegas[m] for m in table.comp_mode])
    lhs = d_xi - om[None, None, :] * d_th
    rhs = -cor.psi_eval(t, x, th, xi)
    assert np.max(np.abs(lhs - rhs)) < 1e-5


def test_corrector_vanishes_for_linear_system(spec_linear, pulse_std):
    from pulse_optics.hyperbolic import phase_table
    from pulse_optics.profiles import GridSpec, interaction_coefficients, solve_profiles

    from conftest import BETA

    table = phase_table(spec_linear, BETA)
    coeffs = interaction_coefficients(spec_linear, table)
    grid = GridSpec(T=0.8, X=0.8, nt=32, nx=32, ntheta=256, theta_max=12.0)
    ps = solve_profiles(table, coeffs, pulse_std, grid, tol=1e-10, max_iter=40)
    cor = build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=1)
    assert cor.pieces == []
    val = cor.eval(0.4, 0.2, np.linspace(-2, 2, 5), 1.0)
    assert np.max(np.abs(val)) == 0.0


def test_corrector_causality(corrector_setup):
    # before the pulse reaches the boundary everything is quiet
    table, coeffs, ps = corrector_setup
    cor = build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=4)
    val = cor.eval_comps(-0.05, 0.3, np.linspace(-2, 2, 5), 0.5)
    assert np.max(np.abs(val)) == 0.0


def test_corrector_full_vector_assembly(corrector_setup):
    table, coeffs, ps = corrector_setup
    cor = build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=4)
    th = np.linspace(-2.0, 2.0, 5)
    comps = cor.eval_comps(0.5, 0.2, th, 1.0)
    full = cor.eval(0.5, 0.2, th, 1.0)
    assert full.shape == comps.shape
    assert np.max(np.abs(full - comps @ cor.r_flat.T)) < 1e-12


def test_corrector_p_sweep_bounded_by_inverse_p_envelope(corrector_setup):
    # resonance sharpening grows the corrector as p shrinks, but never
    # faster than the 1/p envelope of the primitive bound; for pulse data
    # with integrable tails the growth saturates well below that envelope
    table, coeffs, ps = corrector_setup
    t, x = 0.55, 0.3
    th = np.linspace(-6.0, 6.0, 25)[:, None]
    xi = np.linspace(0.0, 8.0, 17)[None, :]
    pvals = (0.5, 0.25, 0.125)
    sups = []
    for p in pvals:
        cor = build_corrector(ps.previous, ps, coeffs, table, p=p, sub=4)
        sups.append(float(np.max(np.abs(cor.eval_comps(t, x, th, xi)))))
    for k in range(len(pvals) - 1):
        ratio = sups[k + 1] / sups[k]
        assert 1.0 <= ratio <= 2.2  # monotone growth inside the 1/p envelope
    local_slopes = np.diff(np.log(sups)) / np.diff(np.log(pvals))
    assert np.all(local_slopes <= 0.0)
    assert np.all(local_slopes >= -1.3)


def test_corrector_rejects_nonzero_outgoing(corrector_setup):
    table, coeffs, ps = corrector_setup
    out_comp = table.outgoing_comps[0]
    hacked = ps.fields[out_comp]
    old = hacked.values
    hacked.values = np.ones_like(old)
    try:
        with pytest.raises(NotImplementedError):
            build_corrector(ps.previous, ps, coeffs, table, p=0.5, sub=4)
    finally:
        hacked.values = old
