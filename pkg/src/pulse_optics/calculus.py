"""Oscillatory calculus in the fast variables.

The first-order corrector of the reflected-pulse expansion lives in the fast
variables (theta0, xi_d) and is built from three ingredients:

  * a family of spectral cutoffs ("moment zero" maps) sigma -> sigma_p that
    remove the low-frequency band |m| <= p so that decaying primitives exist;
  * the averaging operator E that keeps, per component, exactly the terms
    oscillating with that component's own phase (the resonant part); and
  * the ray integrator R_infinity that inverts the fast operator
    d_xi_d + Atil(beta) d_theta0 on the complement of the range of E by
    integrating back along the fast characteristics from xi_d = +infinity.

Functions of type F are finite sums, per component i, of single-phase terms
f(theta0 + omega_m xi_d) and two-phase products
g(theta0 + omega_a xi_d) h(theta0 + omega_b xi_d).  On such terms E and
R_infinity act by term surgery and one-dimensional signal transforms:

    single, phase a != mode(i):
        integral closes to (omega_a - omega_i)^{-1} f*(theta0 + omega_a xi_d)
        with f* the decaying primitive of the cut signal;
    product with one factor on the component's own phase:
        that factor is constant along the ray and rides outside the integral,
        only the other factor is integrated (a derivative factor integrates
        back to the original signal, no cutting needed);
    product with both phases equal (but != mode(i)):
        the product is itself single-phase; it is re-cut and integrated;
    product with distinct phases, both != mode(i):
        genuinely transversal; evaluated by adaptive quadrature along the
        ray, truncated to the intersection of the factors' envelopes.

The same routing, with signals replaced by lattice fields derived from two
consecutive profile iterates, assembles the first-order corrector
U1 = -R_infinity( [(I-E) G_p]_mod - (I-E) F(0) U0n_p ); build_corrector
produces an object that evaluates U1 and the driving term at arbitrary
slow/fast points, so the defining identity
(d_xi_d - omega_i d_theta0) U1_i = -Psi_i can be checked by finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .profiles import ProfileField, ProfileSet, InteractionCoeffs
from .hyperbolic import PhaseTable


# ---------------------------------------------------------------------------
# cutoff kernels


def smoothstep5(z: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 monotone in between."""
    z = np.clip(z, 0.0, 1.0)
    return z * z * z * (z * (6.0 * z - 15.0) + 10.0)


def cutoff_curve(m: np.ndarray, p: float, kernel: str = "smoothstep5") -> np.ndarray:
    """chi_p(m): 0 on |m| <= p, 1 on |m| >= 2p, smooth transition between."""
    if kernel == "smoothstep5":
        return smoothstep5(np.abs(m) / p - 1.0)
    raise ValueError(f"unknown cutoff kernel {kernel!r}")


# ---------------------------------------------------------------------------
# theta signals


@dataclass
class ThetaSignal:
    """Real signal sampled on the uniform periodic grid
    theta_l = -half_width + l * dtheta, l = 0 .. n-1, dtheta = 2 half_width / n.

    The represented functions decay inside the grid, so the periodic wrap is
    harmless and evaluation outside the grid returns zero.
    """

    values: np.ndarray
    half_width: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("ThetaSignal holds one 1-D sample array")
        self._spectrum = None

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dtheta(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def theta(self) -> np.ndarray:
        return -self.half_width + self.dtheta * np.arange(self.n)

    @property
    def freqs(self) -> np.ndarray:
        """Angular frequencies of the rfft bins: m_k = pi k / half_width."""
        return np.pi / self.half_width * np.arange(self.n // 2 + 1)

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = np.fft.rfft(self.values)
        return self._spectrum

    def integral(self) -> float:
        return float(np.sum(self.values) * self.dtheta)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.dtheta))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.n else 0.0

    def derivative(self) -> "ThetaSignal":
        """Spectral theta-derivative."""
        sp = self.spectrum() * (1j * self.freqs)
        return ThetaSignal(np.fft.irfft(sp, n=self.n), self.half_width)

    def low_frequency_mass(self, p: float) -> float:
        """Relative spectral magnitude on the band |m| < p (plus the mean)."""
        sp = self.spectrum()
        scale = float(np.max(np.abs(sp)))
        if scale == 0.0:
            return 0.0
        band = self.freqs < p * (1.0 - 1e-9)
        return float(np.max(np.abs(sp[band])) / scale) if np.any(band) else 0.0

    def support(self, threshold: float = 1e-12) -> tuple[float, float]:
        """Smallest theta interval outside which |signal| < threshold * max."""
        v = np.abs(self.values)
        top = float(v.max())
        if top == 0.0:
            return (0.0, 0.0)
        idx = np.nonzero(v >= threshold * top)[0]
        th = self.theta
        return (float(th[idx[0]]) - self.dtheta, float(th[idx[-1]]) + self.dtheta)

    def pad_to(self, half_width: float, max_n: int = 1 << 22) -> "ThetaSignal":
        """Zero-pad symmetrically to at least the requested half width,
        preserving dtheta and grid alignment.  The sample count is capped at
        max_n (power-of-two padding factors only)."""
        if half_width <= self.half_width:
            return self
        factor = int(np.ceil(half_width / self.half_width))
        factor = 1 << (factor - 1).bit_length()
        while self.n * factor > max_n and factor > 1:
            factor >>= 1
        if factor == 1:
            return self
        n_new = self.n * factor
        if (n_new - self.n) % 2:
            n_new += 1
        pad_left = (n_new - self.n) // 2
        vals = np.zeros(n_new)
        vals[pad_left : pad_left + self.n] = self.values
        return ThetaSignal(vals, self.dtheta * n_new / 2.0)

    def eval(self, theta) -> np.ndarray:
        """Cubic (4-point Lagrange) interpolation; zero outside the grid."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape)
        inside = (theta >= self.theta[0]) & (theta <= self.theta[-1])
        if not np.any(inside):
            return out
        li = np.clip((theta - self.theta[0]) / self.dtheta, 1.0, self.n - 2.000001)
        l0 = li.astype(int)
        s = li - l0
        w0 = -s * (s - 1.0) * (s - 2.0) / 6.0
        w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
        w2 = -(s + 1.0) * s * (s - 2.0) / 2.0
        w3 = (s + 1.0) * s * (s - 1.0) / 6.0
        v = self.values
        acc = v[l0 - 1] * w0 + v[l0] * w1 + v[l0 + 1] * w2 + v[l0 + 2] * w3
        out[inside] = acc[inside]
        return out

    def __sub__(self, other: "ThetaSignal") -> "ThetaSignal":
        if other.n != self.n or abs(other.half_width - self.half_width) > 1e-12:
            raise ValueError("signals live on different grids")
        return ThetaSignal(self.values - other.values, self.half_width)

    def __mul__(self, other):
        if isinstance(other, ThetaSignal):
            if other.n != self.n or abs(other.half_width - self.half_width) > 1e-12:
                raise ValueError("signals live on different grids")
            return ThetaSignal(self.values * other.values, self.half_width)
        return ThetaSignal(self.values * float(other), self.half_width)

    __rmul__ = __mul__


def gaussian_signal(
    half_width: float = 25.0,
    n: int = 2048,
    width: float = 1.0,
    center: float = 0.0,
    amplitude: float = 1.0,
) -> ThetaSignal:
    th = -half_width + (2.0 * half_width / n) * np.arange(n)
    return ThetaSignal(amplitude * np.exp(-(((th - center) / width) ** 2)), half_width)


# ---------------------------------------------------------------------------
# moment zero, primitives, products (rows = batched variant used by the
# lattice corrector; the ThetaSignal wrappers are the public single-signal API)


def _pad_target(half_width: float, p: float) -> float:
    """Half width needed so the FFT bins resolve the cutoff transition."""
    return max(half_width, 8.0 * np.pi / p)


def _rows_cut(values: np.ndarray, half_width: float, p: float, kernel: str) -> np.ndarray:
    """Apply chi_p along the last axis (no padding; caller pads)."""
    n = values.shape[-1]
    freqs = np.pi / half_width * np.arange(n // 2 + 1)
    chi = cutoff_curve(freqs, p, kernel)
    chi[0] = 0.0
    sp = np.fft.rfft(values, axis=-1) * chi
    return np.fft.irfft(sp, n=n, axis=-1)


def _rows_primitive(values: np.ndarray, half_width: float) -> np.ndarray:
    """Spectral antiderivative along the last axis; DC bin dropped (input is
    expected to have an empty low-frequency band)."""
    n = values.shape[-1]
    freqs = np.pi / half_width * np.arange(n // 2 + 1)
    sp = np.fft.rfft(values, axis=-1)
    inv = np.zeros_like(freqs)
    inv[1:] = 1.0 / freqs[1:]
    sp = sp * (-1j) * inv
    return np.fft.irfft(sp, n=n, axis=-1)


def _rows_derivative(values: np.ndarray, half_width: float) -> np.ndarray:
    n = values.shape[-1]
    freqs = np.pi / half_width * np.arange(n // 2 + 1)
    sp = np.fft.rfft(values, axis=-1) * (1j * freqs)
    return np.fft.irfft(sp, n=n, axis=-1)


def moment_zero(
    sig: ThetaSignal,
    p: float,
    kernel: str = "smoothstep5",
    pad: bool = True,
) -> ThetaSignal:
    """Remove the low-frequency band: spectrum multiplied by chi_p (zero on
    |m| <= p, one on |m| >= 2p) with the mean bin zeroed exactly.

    The signal is zero-padded so the bin spacing pi / half_width resolves the
    transition band (target half width 8 pi / p); the output integral
    vanishes to machine precision.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if pad:
        sig = sig.pad_to(_pad_target(sig.half_width, p))
    vals = _rows_cut(sig.values, sig.half_width, p, kernel)
    return ThetaSignal(vals, sig.half_width)


def decaying_primitive(sig: ThetaSignal, p: float | None = None) -> ThetaSignal:
    """The unique primitive with decay: spectrum divided by (i m).

    Requires zero mean (raises otherwise); intended for signals whose
    spectrum vanishes on a neighborhood of m = 0, in which case the result
    decays and has zero mean itself.
    """
    scale = max(sig.sup(), 1e-30)
    if abs(sig.integral()) > 1e-10 * scale * max(1.0, 2.0 * sig.half_width):
        raise ValueError("decaying_primitive requires a zero-mean signal")
    vals = _rows_primitive(sig.values, sig.half_width)
    return ThetaSignal(vals, sig.half_width)


def nontransversal_product(sig: ThetaSignal, tau_deriv: ThetaSignal, p: float) -> ThetaSignal:
    """Cut pointwise product (sigma tau_theta)_p used for resonant pairs.

    Both inputs are aligned onto the wider grid before multiplying.
    """
    hw = max(sig.half_width, tau_deriv.half_width)
    a = sig.pad_to(hw)
    b = tau_deriv.pad_to(hw)
    if a.n != b.n:
        # same half width but different resolution: resample the coarser
        if a.n < b.n:
            a = ThetaSignal(a.eval(b.theta), b.half_width)
        else:
            b = ThetaSignal(b.eval(a.theta), a.half_width)
    return moment_zero(a * b, p)


def _maybe_cut(sig: ThetaSignal, p: float, kernel: str = "smoothstep5") -> ThetaSignal:
    """Cut unless the band |m| <= p is already (numerically) empty.

    An empty band under p is exactly what the decaying primitive needs (the
    spectral division by m stays bounded by 1/p), so signals already in the
    cut class pass through unchanged and the closed forms are exact on them.
    """
    if sig.low_frequency_mass(p) < 1e-12:
        return sig
    return moment_zero(sig, p, kernel)


# ---------------------------------------------------------------------------
# transversal ray integrals


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _support_interval(z, alpha, lo_sup, hi_sup):
    """s-interval where z + s alpha lies in [lo_sup, hi_sup]."""
    a = (lo_sup - z) / alpha
    b = (hi_sup - z) / alpha
    return np.minimum(a, b), np.maximum(a, b)


def _composite_gl(fvec, lo, hi, panels: int) -> np.ndarray:
    """Composite Gauss-Legendre integral, vectorized across points.

    fvec maps an s-array of shape (npts, panels * 8) to integrand values;
    lo, hi are (npts,) bounds.
    """
    npts = lo.size
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    # reference nodes in [0, 1]
    ref = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    wts = np.tile(_GL_WEIGHTS * half, panels)
    length = (hi - lo)[:, None]
    s = lo[:, None] + length * ref[None, :]
    vals = fvec(s)
    return (vals * wts[None, :]).sum(axis=1) * (hi - lo)


def _adaptive_ray_quadrature(fvec, lo, hi, tol: float) -> np.ndarray:
    """Panel-doubling adaptive quadrature, vectorized across points.

    Each doubling recomputes only the straggler points whose successive
    estimates still disagree beyond the tolerance (absolute, switching to
    relative for large values).
    """
    out = np.zeros(lo.shape)
    idx = np.nonzero(hi > lo)[0]
    if idx.size == 0:
        return out
    prev = _composite_gl(lambda s: fvec(s, idx), lo[idx], hi[idx], 4)
    panels = 8
    while panels <= 256 and idx.size:
        cur = _composite_gl(lambda s: fvec(s, idx), lo[idx], hi[idx], panels)
        done = np.abs(cur - prev) <= tol * (1.0 + np.abs(cur))
        out[idx] = cur
        keep = ~done
        idx = idx[keep]
        prev = cur[keep]
        panels *= 2
    return out


def _windowed_ray_quadrature(fvec, lo, hi, cuts, tol: float) -> np.ndarray:
    """Quadrature over [lo, hi] split at the given interior cut points.

    Cut signals carry faint, slowly varying tails across their whole padded
    grid, while their cores are a few wavelengths wide.  Splitting the window
    at each factor's core edges puts the sharp structure into short, finely
    panelled segments and leaves the long tail segments (smooth on the 1/p
    scale) to coarse panels; a single uniform rule over the full envelope
    window would need orders of magnitude more nodes.

    cuts has shape (npts, k); each row's cut points are clipped into the
    row's [lo, hi] and sorted, and the engine runs per segment.
    """
    edges = np.sort(np.clip(cuts, lo[:, None], hi[:, None]), axis=1)
    edges = np.concatenate([lo[:, None], edges, hi[:, None]], axis=1)
    out = np.zeros(lo.shape)
    for k in range(edges.shape[1] - 1):
        out += _adaptive_ray_quadrature(fvec, edges[:, k], edges[:, k + 1], tol)
    return out


def transversal_integral(
    sig_a: ThetaSignal,
    sig_b: ThetaSignal,
    omega_i: float,
    omega_a: float,
    omega_b: float,
    theta0,
    xi_d,
    tol: float = 1e-9,
    envelope_tol: float = 1e-12,
):
    """int_infinity^{xi_d} sig_a(z + s alpha_a) sig_b(z + s alpha_b) ds with
    z = theta0 + omega_i xi_d, alpha = omega_{a,b} - omega_i.

    Phase speeds must be pairwise distinct.  The integral is truncated to the
    s-interval where both factors' envelopes exceed envelope_tol relative to
    their peaks (empty intersection gives exactly zero); inside it a nested
    Gauss rule with panel-doubling refinement is driven to tolerance tol
    (absolute, relative for large values), vectorized across evaluation
    points.  Accepts scalars or broadcastable arrays for (theta0, xi_d).
    """
    alpha_a = omega_a - omega_i
    alpha_b = omega_b - omega_i
    if min(abs(alpha_a), abs(alpha_b), abs(omega_a - omega_b)) < 1e-12:
        raise ValueError("phase speeds must be pairwise distinct (nontransversal pair)")
    theta0 = np.asarray(theta0, dtype=float)
    xi_d = np.asarray(xi_d, dtype=float)
    z, xi = np.broadcast_arrays(theta0 + omega_i * xi_d, xi_d)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).ravel().astype(float)
    xi = np.atleast_1d(xi).ravel().astype(float)

    la, ha = _support_interval(z, alpha_a, *sig_a.support(envelope_tol))
    lb, hb = _support_interval(z, alpha_b, *sig_b.support(envelope_tol))
    lo = np.maximum(np.maximum(la, lb), xi)
    hi = np.minimum(ha, hb)
    lac, hac = _support_interval(z, alpha_a, *sig_a.support(1e-3))
    lbc, hbc = _support_interval(z, alpha_b, *sig_b.support(1e-3))
    cuts = np.stack([lac, hac, lbc, hbc], axis=1)

    def fvec(s, idx):
        return sig_a.eval(z[idx][:, None] + s * alpha_a) * sig_b.eval(
            z[idx][:, None] + s * alpha_b
        )

    # orientation: from +infinity down to xi_d
    out = -_windowed_ray_quadrature(fvec, lo, hi, cuts, tol)
    if scalar:
        return float(out[0])
    return out.reshape(np.broadcast_shapes(theta0.shape, xi_d.shape))


# ---------------------------------------------------------------------------
# type-F functions and the averaging operator


@dataclass(frozen=True)
class TypeFTerm:
    """One term of a type-F function: component index and one or two
    (mode index, signal) factors."""

    comp: int
    factors: tuple

    def __post_init__(self):
        if len(self.factors) not in (1, 2):
            raise ValueError("a type-F term has one or two factors")


@dataclass
class TypeFFunction:
    """Finite sum of phase-aligned terms, per component.

    omegas[m] is the phase speed of mode m; comp_modes[c] the owning mode of
    component c.  Evaluation broadcasts (theta0, xi_d) and returns values with
    a trailing component axis.
    """

    omegas: tuple
    comp_modes: tuple
    terms: list

    @property
    def n_comps(self) -> int:
        return len(self.comp_modes)

    def eval(self, theta0, xi_d) -> np.ndarray:
        theta0 = np.asarray(theta0, dtype=float)
        xi_d = np.asarray(xi_d, dtype=float)
        shape = np.broadcast_shapes(theta0.shape, xi_d.shape)
        out = np.zeros(shape + (self.n_comps,))
        for term in self.terms:
            val = np.ones(shape)
            for mode, sig in term.factors:
                val = val * sig.eval(theta0 + self.omegas[mode] * xi_d)
            out[..., term.comp] += val
        return out


def apply_E(obj):
    """The averaging (resonant-part) operator.

    On a TypeFFunction: keeps, for each component, exactly the terms all of
    whose factors carry the component's own phase; exact term surgery, hence
    a projector.  On a CorrectorRep: the ray integrator only produces pieces
    whose phase content differs from the owning component's phase (closed
    pieces by construction, transversal pieces because their support empties
    along the resonant ray), so the result is always empty; the empty
    TypeFFunction is returned after checking that structural fact.
    """
    if isinstance(obj, CorrectorRep):
        for piece in obj.pieces:
            mi = obj.comp_modes[piece.comp]
            if isinstance(piece, SinglePhasePiece) and piece.phase == mi:
                raise AssertionError("ray integrator produced a resonant single piece")
            if isinstance(piece, ProductPiece) and piece.phase1 == mi and piece.phase2 == mi:
                raise AssertionError("ray integrator produced a resonant product piece")
        return TypeFFunction(obj.omegas, obj.comp_modes, [])
    kept = []
    for term in obj.terms:
        mi = obj.comp_modes[term.comp]
        if all(mode == mi for mode, _ in term.factors):
            kept.append(term)
    return TypeFFunction(obj.omegas, obj.comp_modes, kept)


# ---------------------------------------------------------------------------
# ray integrator on type-F functions


@dataclass(frozen=True)
class SinglePhasePiece:
    comp: int
    coef: float
    phase: int
    signal: ThetaSignal

    def eval(self, omegas, theta0, xi_d):
        return self.coef * self.signal.eval(theta0 + omegas[self.phase] * xi_d)


@dataclass(frozen=True)
class ProductPiece:
    comp: int
    coef: float
    phase1: int
    signal1: ThetaSignal
    phase2: int
    signal2: ThetaSignal

    def eval(self, omegas, theta0, xi_d):
        return (
            self.coef
            * self.signal1.eval(theta0 + omegas[self.phase1] * xi_d)
            * self.signal2.eval(theta0 + omegas[self.phase2] * xi_d)
        )


@dataclass(frozen=True)
class QuadraturePiece:
    comp: int
    coef: float
    omega_i: float
    phase_a: int
    signal_a: ThetaSignal
    phase_b: int
    signal_b: ThetaSignal
    tol: float = 1e-9

    def eval(self, omegas, theta0, xi_d):
        return self.coef * transversal_integral(
            self.signal_a,
            self.signal_b,
            self.omega_i,
            omegas[self.phase_a],
            omegas[self.phase_b],
            theta0,
            xi_d,
            tol=self.tol,
        )


@dataclass
class CorrectorRep:
    """Evaluated form of R_infinity applied to a type-F function."""

    omegas: tuple
    comp_modes: tuple
    pieces: list

    @property
    def n_comps(self) -> int:
        return len(self.comp_modes)

    def eval(self, theta0, xi_d) -> np.ndarray:
        theta0 = np.asarray(theta0, dtype=float)
        xi_d = np.asarray(xi_d, dtype=float)
        shape = np.broadcast_shapes(theta0.shape, xi_d.shape)
        out = np.zeros(shape + (self.n_comps,))
        for piece in self.pieces:
            out[..., piece.comp] += piece.eval(self.omegas, theta0, xi_d)
        return out

    def as_type_f(self) -> TypeFFunction:
        """Type-F reconstruction of the closed (single-phase factor) pieces.

        Quadrature pieces are omitted: they decay along every ray (their
        s-support empties in the resonant direction), so they carry no
        resonant content; the numeric check lives in the tests.
        """
        terms = []
        for piece in self.pieces:
            if isinstance(piece, SinglePhasePiece):
                terms.append(
                    TypeFTerm(piece.comp, ((piece.phase, piece.coef * piece.signal),))
                )
            elif isinstance(piece, ProductPiece):
                terms.append(
                    TypeFTerm(
                        piece.comp,
                        (
                            (piece.phase1, piece.coef * piece.signal1),
                            (piece.phase2, piece.signal2),
                        ),
                    )
                )
        return TypeFFunction(self.omegas, self.comp_modes, terms)


def apply_R_infinity(
    F: TypeFFunction,
    p: float,
    quad_tol: float = 1e-9,
    kernel: str = "smoothstep5",
) -> CorrectorRep:
    """Invert the fast operator by integrating back along the rays.

    Requires apply_E(F) to be empty: any term whose phases all match its
    component's own phase admits no bounded primitive along the ray and
    raises ValueError.  Signals are cut at p before primitives are taken
    unless their low band is already empty (so inputs that live in the cut
    class are reproduced exactly).
    """
    pieces: list = []
    om = F.omegas
    for term in F.terms:
        i = term.comp
        mi = F.comp_modes[i]
        w_i = om[mi]
        if all(mode == mi for mode, _ in term.factors):
            raise ValueError(
                "term oscillates with its component's own phase: resonant part "
                "must be removed (apply_E(F) != 0)"
            )
        if len(term.factors) == 1:
            (a, f) = term.factors[0]
            alpha = om[a] - w_i
            prim = decaying_primitive(_maybe_cut(f, p, kernel))
            pieces.append(SinglePhasePiece(i, 1.0 / alpha, a, prim))
            continue
        (a, g), (b, h) = term.factors
        if a == mi:
            alpha = om[b] - w_i
            prim = decaying_primitive(_maybe_cut(h, p, kernel))
            pieces.append(ProductPiece(i, 1.0 / alpha, a, g, b, prim))
        elif b == mi:
            alpha = om[a] - w_i
            prim = decaying_primitive(_maybe_cut(g, p, kernel))
            pieces.append(ProductPiece(i, 1.0 / alpha, a, prim, b, h))
        elif a == b:
            alpha = om[a] - w_i
            prod = nontransversal_product(g, h, p)
            pieces.append(SinglePhasePiece(i, 1.0 / alpha, a, decaying_primitive(prod)))
        else:
            pieces.append(
                QuadraturePiece(i, 1.0, w_i, a, g, b, h, tol=quad_tol)
            )
    return CorrectorRep(F.omegas, F.comp_modes, pieces)


# ---------------------------------------------------------------------------
# lattice corrector: the same routing with profile-derived fields


@dataclass
class LatticePiece:
    """Closed-form corrector piece with lattice-valued signals.

    kind 'single': coef * F1(t, x, theta0 + omega_{phase1} xi_d)
    kind 'product': coef * F1(.., phase1) * F2(.., phase2)
    """

    comp: int
    coef: float
    kind: str
    field1: ProfileField
    phase1: int
    field2: ProfileField | None = None
    phase2: int = -1

    def eval(self, omegas, t, x, theta0, xi_d):
        v = self.coef * self.field1.eval(t, x, theta0 + omegas[self.phase1] * xi_d)
        if self.kind == "product":
            v = v * self.field2.eval(t, x, theta0 + omegas[self.phase2] * xi_d)
        return v


@dataclass
class LatticeQuadPiece:
    """Transversal corrector piece: coef times the ray integral (from
    +infinity down to xi_d) of the product of two lattice fields, truncated
    to the intersection of their envelopes.
    """

    comp: int
    coef: float
    omega_i: float
    field_a: ProfileField
    omega_a: float
    field_b: ProfileField
    omega_b: float
    support_a: tuple
    support_b: tuple
    core_a: tuple
    core_b: tuple
    tol: float = 1e-9

    def eval(self, omegas, t, x, theta0, xi_d):
        alpha_a = self.omega_a - self.omega_i
        alpha_b = self.omega_b - self.omega_i
        theta0 = np.asarray(theta0, dtype=float)
        xi_d = np.asarray(xi_d, dtype=float)
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        z, xi, tb, xb = np.broadcast_arrays(theta0 + self.omega_i * xi_d, xi_d, t, x)
        shape = z.shape
        z = z.ravel().astype(float)
        xi = xi.ravel().astype(float)
        tb = tb.ravel().astype(float)
        xb = xb.ravel().astype(float)
        la, ha = _support_interval(z, alpha_a, *self.support_a)
        lb, hb = _support_interval(z, alpha_b, *self.support_b)
        lo = np.maximum(np.maximum(la, lb), xi)
        hi = np.minimum(ha, hb)
        lac, hac = _support_interval(z, alpha_a, *self.core_a)
        lbc, hbc = _support_interval(z, alpha_b, *self.core_b)
        cuts = np.stack([lac, hac, lbc, hbc], axis=1)

        def fvec(s, idx):
            za = z[idx][:, None] + s * alpha_a
            zb = z[idx][:, None] + s * alpha_b
            fa = self.field_a.eval(tb[idx][:, None], xb[idx][:, None], za)
            fb = self.field_b.eval(tb[idx][:, None], xb[idx][:, None], zb)
            return fa * fb

        # orientation: integral from +infinity down to xi_d
        vals = self.coef * (
            -_windowed_ray_quadrature(fvec, lo, hi, cuts, self.tol)
        )
        return vals.reshape(shape)


def _field_like(src: ProfileField, values: np.ndarray, half_width: float) -> ProfileField:
    n = values.shape[-1]
    dth = 2.0 * half_width / n
    return ProfileField(
        comp=src.comp,
        slope=src.slope,
        incoming=src.incoming,
        t0=src.t0,
        x=src.x,
        theta=-half_width + dth * np.arange(n),
        values=values,
    )


def _field_support(fld: ProfileField, threshold: float = 1e-12) -> tuple[float, float]:
    prof = np.max(np.abs(fld.values), axis=(0, 1))
    top = float(prof.max())
    th = fld.theta
    if top == 0.0:
        return (0.0, 0.0)
    idx = np.nonzero(prof >= threshold * top)[0]
    dth = th[1] - th[0]
    return (float(th[idx[0]]) - dth, float(th[idx[-1]]) + dth)


@dataclass
class LatticeCorrector:
    """First-order corrector with slow-variable dependence.

    eval(t, x, theta0, xi_d) returns the N-vector corrector; psi_eval returns
    the component values of the driving term Psi, so the defining identity
    (d_xi_d - omega_i d_theta0) U1_i = -Psi_i can be verified by finite
    differences on sample points.
    """

    table: PhaseTable
    p: float
    pieces: list
    psi_terms: list
    r_flat: np.ndarray

    @property
    def omegas(self) -> np.ndarray:
        return self.table.omegas

    def eval_comps(self, t, x, theta0, xi_d) -> np.ndarray:
        om = self.omegas
        shape = np.broadcast_shapes(
            np.shape(t), np.shape(x), np.shape(theta0), np.shape(xi_d)
        )
        out = np.zeros(shape + (self.table.N,))
        for piece in self.pieces:
            out[..., piece.comp] += piece.eval(om, t, x, theta0, xi_d)
        return out

    def eval(self, t, x, theta0, xi_d) -> np.ndarray:
        comps = self.eval_comps(t, x, theta0, xi_d)
        return comps @ self.r_flat.T

    def psi_eval(self, t, x, theta0, xi_d) -> np.ndarray:
        om = self.omegas
        shape = np.broadcast_shapes(
            np.shape(t), np.shape(x), np.shape(theta0), np.shape(xi_d)
        )
        out = np.zeros(shape + (self.table.N,))
        for term in self.psi_terms:
            out[..., term.comp] += term.eval(om, t, x, theta0, xi_d)
        return out


def build_corrector(
    profiles_n: ProfileSet,
    profiles_np1: ProfileSet,
    coeffs: InteractionCoeffs,
    table: PhaseTable,
    p: float,
    sub: int | None = None,
    quad_tol: float = 1e-9,
    dtype=np.float32,
    kernel: str = "smoothstep5",
    keep_psi: bool = True,
) -> LatticeCorrector:
    """Assemble the first-order corrector from two consecutive profile
    iterates.

    Fields are built on a subsampled copy of the profile lattice (factor sub,
    default targets about 48 nodes per slow axis), zero-padded in theta so the
    cutoff transition band is resolved, and cut at p.  The routing per
    equation slot i follows the ray-integrator closed forms; x-derivative
    couplings use second-order central differences along the lattice time
    axis (the ray chart makes d_t exact there).  All couplings with the
    slot's own mode are resonant and excluded (they live in the profile
    equations); same-mode pairs among the remaining terms are re-cut before
    primitives are taken.
    """
    grid = profiles_np1.grid
    if table.beta.size != 1:
        raise NotImplementedError("corrector assembly supports d = 1 only")
    if sub is None:
        sub = max(1, int(np.ceil(grid.nt / 48)))

    inc = list(table.incoming_comps)
    for c in table.outgoing_comps:
        for ps in (profiles_n, profiles_np1):
            if c in ps.fields and not ps.fields[c].is_zero:
                raise NotImplementedError(
                    "corrector assembly assumes vanishing outgoing profiles"
                )
    omegas = table.omegas

    # subsampled lattice and padded theta grid
    half_target = _pad_target(grid.theta_max, p)
    factor = int(np.ceil(half_target / grid.theta_max))
    factor = 1 << (factor - 1).bit_length()
    while grid.ntheta * factor > (1 << 22) and factor > 1:
        factor >>= 1
    n_pad = grid.ntheta * factor
    pad_left = (n_pad - grid.ntheta) // 2
    half_pad = grid.theta_max * n_pad / grid.ntheta
    freqs = np.pi / half_pad * np.arange(n_pad // 2 + 1)
    chi = cutoff_curve(freqs, p, kernel)
    chi[0] = 0.0
    inv_m = np.zeros_like(freqs)
    inv_m[1:] = 1.0 / freqs[1:]

    def subsample(vals: np.ndarray) -> np.ndarray:
        return vals[::sub, ::sub, :]

    def pad_rows(vals: np.ndarray) -> np.ndarray:
        out = np.zeros(vals.shape[:-1] + (n_pad,))
        out[..., pad_left : pad_left + grid.ntheta] = vals
        return out

    def cut_rows(vals: np.ndarray) -> np.ndarray:
        sp = np.fft.rfft(vals, axis=-1) * chi
        return np.fft.irfft(sp, n=n_pad, axis=-1)

    def prim_rows(vals: np.ndarray) -> np.ndarray:
        sp = np.fft.rfft(vals, axis=-1) * (-1j) * inv_m
        return np.fft.irfft(sp, n=n_pad, axis=-1)

    def deriv_rows(vals: np.ndarray) -> np.ndarray:
        sp = np.fft.rfft(vals, axis=-1) * (1j * freqs)
        return np.fft.irfft(sp, n=n_pad, axis=-1)

    def ddt_rows(vals: np.ndarray, dt_sub: float) -> np.ndarray:
        out = np.empty_like(vals)
        out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * dt_sub)
        out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dt_sub)
        out[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * dt_sub)
        return out

    dt_sub = grid.dt * sub

    P0: dict[int, ProfileField] = {}
    P1: dict[int, ProfileField] = {}
    D1: dict[int, ProfileField] = {}
    Sprim: dict[int, ProfileField] = {}
    T1: dict[int, ProfileField] = {}
    T1prim: dict[int, ProfileField] = {}

    def make_field(src: ProfileField, vals: np.ndarray) -> ProfileField:
        f = _field_like(src, vals.astype(dtype, copy=False), half_pad)
        f.t0 = src.t0[::sub]
        f.x = src.x[::sub]
        return f

    for c in inc:
        src_n = profiles_n.fields[c]
        src_1 = profiles_np1.fields[c]
        raw0 = pad_rows(subsample(src_n.values))
        raw1 = pad_rows(subsample(src_1.values))
        cut0 = cut_rows(raw0)
        cut1 = cut_rows(raw1)
        P0[c] = make_field(src_n, cut0)
        P1[c] = make_field(src_1, cut1)
        D1[c] = make_field(src_1, deriv_rows(cut1))
        Sprim[c] = make_field(src_n, prim_rows(cut0))
        t1 = ddt_rows(cut1, dt_sub)
        T1[c] = make_field(src_1, t1)
        T1prim[c] = make_field(src_1, prim_rows(t1))

    # same-mode pair products (sigma^n_a d_theta sigma^{n+1}_b)_p and their
    # primitives
    PRODcut: dict[tuple, ProfileField] = {}
    PRODprim: dict[tuple, ProfileField] = {}
    for a in inc:
        for b in inc:
            if table.comp_mode[a] != table.comp_mode[b]:
                continue
            raw = P0[a].values.astype(float) * D1[b].values.astype(float)
            cut = cut_rows(raw)
            PRODcut[(a, b)] = make_field(profiles_n.fields[a], cut)
            PRODprim[(a, b)] = make_field(profiles_n.fields[a], prim_rows(cut))

    supports = {c: _field_support(P0[c]) for c in inc}
    supports_d = {c: _field_support(D1[c]) for c in inc}
    cores = {c: _field_support(P0[c], 1e-3) for c in inc}
    cores_d = {c: _field_support(D1[c], 1e-3) for c in inc}

    pieces: list = []
    psi_terms: list = []
    N = table.N
    mt = coeffs.m_tensor
    e_mat = coeffs.e_mat
    v_coef = coeffs.v_coef

    for i in range(N):
        mi = table.comp_mode[i]
        w_i = omegas[mi]
        for k in inc:
            mk = table.comp_mode[k]
            if mk == mi:
                continue
            alpha = omegas[mk] - w_i
            if abs(e_mat[i, k]) > 1e-15:
                pieces.append(
                    LatticePiece(i, e_mat[i, k] / alpha, "single", Sprim[k], mk)
                )
                psi_terms.append(LatticePiece(i, -e_mat[i, k], "single", P0[k], mk))
            if abs(v_coef[0, i, k]) > 1e-15:
                pieces.append(
                    LatticePiece(i, -v_coef[0, i, k] / alpha, "single", T1prim[k], mk)
                )
                psi_terms.append(LatticePiece(i, v_coef[0, i, k], "single", T1[k], mk))
        for a in inc:
            for b in inc:
                ma, mb = table.comp_mode[a], table.comp_mode[b]
                if ma == mi and mb == mi:
                    continue
                cm = mt[i, a, b]
                if abs(cm) < 1e-15:
                    continue
                if ma == mi:
                    pieces.append(
                        LatticePiece(
                            i, -cm / (omegas[mb] - w_i), "product", P0[a], ma, P1[b], mb
                        )
                    )
                    psi_terms.append(
                        LatticePiece(i, cm, "product", P0[a], ma, D1[b], mb)
                    )
                elif mb == mi:
                    pieces.append(
                        LatticePiece(
                            i, -cm / (omegas[ma] - w_i), "product", Sprim[a], ma, D1[b], mb
                        )
                    )
                    psi_terms.append(
                        LatticePiece(i, cm, "product", P0[a], ma, D1[b], mb)
                    )
                elif ma == mb:
                    pieces.append(
                        LatticePiece(
                            i, -cm / (omegas[ma] - w_i), "single", PRODprim[(a, b)], ma
                        )
                    )
                    psi_terms.append(
                        LatticePiece(i, cm, "single", PRODcut[(a, b)], ma)
                    )
                else:
                    pieces.append(
                        LatticeQuadPiece(
                            comp=i,
                            coef=-cm,
                            omega_i=w_i,
                            field_a=P0[a],
                            omega_a=omegas[ma],
                            field_b=D1[b],
                            omega_b=omegas[mb],
                            support_a=supports[a],
                            support_b=supports_d[b],
                            core_a=cores[a],
                            core_b=cores_d[b],
                            tol=quad_tol,
                        )
                    )
                    psi_terms.append(
                        LatticePiece(i, cm, "product", P0[a], ma, D1[b], mb)
                    )

    return LatticeCorrector(
        table=table,
        p=p,
        pieces=pieces,
        psi_terms=psi_terms if keep_psi else [],
        r_flat=table.r_flat.copy(),
    )
