"""Leading-order profile transport.

The leading term of the reflected-pulse expansion is a sum over incoming
modes of simple waves sigma_c(t, x_d, theta) r_c, where theta is the fast
phase variable.  Each profile satisfies a Burgers-type transport equation
along the straight characteristics of its mode,

    X_m sigma + q_m(sigma) d_theta sigma = sum_k e_ck sigma_k,
    X_m = d_{x_d} + (1 / v_m) d_t        (one space dimension),

with q_m a within-mode linear combination of the profiles (the Burgers flux
coefficient) and e the within-mode source couplings.  The boundary trace of
the incoming profiles is obtained by inverting the boundary matrix on the
incoming span against the pulse data minus the outgoing contribution, and
everything vanishes for t < 0.

Numerics: each component is stored on a ray-aligned lattice
sigma[i, j, l] = sigma(t0_i + x_j * slope, x_j, theta_l) where t0 is the time
at which the ray meets the boundary and slope = 1/v.  Along a ray the
tangential transport is exact, so one Picard iteration reduces to a 1-D
advection march in x_d per ray (first-order upwind in theta, forward Euler
along the ray, frozen previous-iterate coefficients, deterministic CFL
subcycling).  Causality is exact: rays with t0 < 0 are identically zero and
are not stored.  Outgoing modes are marched from zero inflow at the far edge
(their interior couplings are within-mode only, so they stay numerically
zero; this is a computed outcome, asserted in tests, not an assignment).

Only one space dimension is supported by the lattice solver; the coefficient
assembly is written for general d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hyperbolic import PhaseTable, SystemSpec, tangential_normalized


class CFLError(RuntimeError):
    """Theta advection would need more subcycling than the configured cap."""


class PreShockError(RuntimeError):
    """The profile gradient approaches the shock formation threshold."""


class HorizonError(RuntimeError):
    """The Picard iteration stopped contracting (existence horizon reached)."""


class ConvergenceError(RuntimeError):
    """The Picard iteration did not reach tolerance within max_iter."""


# ---------------------------------------------------------------------------
# grids and boundary data


def _cinf_ramp(z) -> np.ndarray:
    """Monotone C-infinity ramp: exactly 0 for z <= 0, exactly 1 for z >= 1."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    a = np.zeros_like(z)
    b = np.zeros_like(z)
    pos = z > 0.0
    a[pos] = np.exp(-1.0 / z[pos])
    neg = z < 1.0
    b[neg] = np.exp(-1.0 / (1.0 - z[neg]))
    return a / (a + b)


@dataclass(frozen=True)
class GridSpec:
    """Profile lattice: boundary times [0, T], depth [0, X], fast phase
    [-theta_max, theta_max) with ntheta periodic nodes."""

    T: float
    X: float
    nt: int
    nx: int
    ntheta: int
    theta_max: float = 12.0

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return self.X / self.nx

    @property
    def dtheta(self) -> float:
        return 2.0 * self.theta_max / self.ntheta

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.X, self.nx + 1)

    @property
    def theta_nodes(self) -> np.ndarray:
        return -self.theta_max + self.dtheta * np.arange(self.ntheta)


@dataclass(frozen=True)
class BoundaryPulse:
    """Separable boundary data G_c(t, theta) = amplitude_c * env(t) * shape(theta).

    env 'bump': C-infinity compactly supported bump on [t_on, t_off].
    shape 'gaussian': exp(-((theta - center)/width)^2).
    Either factor can be replaced by a custom callable.
    """

    amplitude: np.ndarray
    env_kind: str = "bump"
    env_params: dict = field(default_factory=lambda: {"t_on": 0.0, "t_off": 0.5})
    shape_kind: str = "gaussian"
    shape_params: dict = field(default_factory=lambda: {"width": 1.0, "center": 0.0})
    env_fn: object = None
    shape_fn: object = None

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.env_fn is not None:
            return np.asarray(self.env_fn(t), dtype=float)
        if self.env_kind == "bump":
            a, b = self.env_params["t_on"], self.env_params["t_off"]
            z = 2.0 * (t - a) / (b - a) - 1.0
            out = np.zeros_like(z)
            inside = np.abs(z) < 1.0
            zi = z[inside]
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi * zi))
            return out
        if self.env_kind == "plateau":
            # fast C-infinity ramp to 1, flat top, ramp down; the rise time
            # can sit well below the horizon so that a burst of duration
            # O(eps) entering right after t_on still sees an O(1) envelope
            a, b = self.env_params["t_on"], self.env_params["t_off"]
            rise = self.env_params.get("rise", 0.05)
            fall = self.env_params.get("fall", rise)
            return _cinf_ramp((t - a) / rise) * _cinf_ramp((b - t) / fall)
        raise ValueError(f"unknown envelope kind {self.env_kind!r}")

    def shape(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.shape_fn is not None:
            return np.asarray(self.shape_fn(theta), dtype=float)
        if self.shape_kind == "gaussian":
            w = self.shape_params.get("width", 1.0)
            c = self.shape_params.get("center", 0.0)
            return np.exp(-(((theta - c) / w) ** 2))
        raise ValueError(f"unknown shape kind {self.shape_kind!r}")

    def trace(self, t_nodes, theta_nodes) -> np.ndarray:
        """(nt, ntheta, p) boundary data on a tensor grid."""
        env = self.envelope(t_nodes)
        sh = self.shape(theta_nodes)
        return env[:, None, None] * sh[None, :, None] * self.amplitude[None, None, :]

    def values(self, t, theta) -> np.ndarray:
        """Pointwise boundary data, broadcasting t against theta; (..., p)."""
        base = self.envelope(t) * self.shape(theta)
        return np.asarray(base)[..., None] * self.amplitude


# ---------------------------------------------------------------------------
# interaction coefficients


@dataclass(frozen=True)
class InteractionCoeffs:
    """Quadratic/linear coupling coefficients of the profile hierarchy.

    m_tensor[i, a, b]: coefficient of sigma_a d_theta sigma_b in the slot of
        component i of the normalized quadratic interaction
        l_i (sum_l beta_l dAtil_l(0) . r_a) r_b.
    e_mat[i, k]: source couplings l_i A_d(0)^{-1} S(0) r_k.
    v_coef[l, i, k]: tangential transport couplings l_i A_d^{-1} A_l(0) r_k
        (slot l = 0 is time); only cross-mode entries act, the within-mode
        part is inside the ray derivative.
    burgers[m]: per-mode flux coefficients g_k with q_m = sum_k g_k sigma_mk;
        by the within-mode collapse the full tensor restricted to a mode is
        b[l, k, k'] = delta_{k' l} g_k, and g is also -(d omega_m)(r_mk).
    burgers_spread: worst deviation from that collapse (diagnostic).
    B0: zero-state boundary matrix, carried along for the reflection solve.
    """

    table: PhaseTable
    m_tensor: np.ndarray
    e_mat: np.ndarray
    v_coef: np.ndarray
    burgers: tuple
    burgers_spread: float
    B0: np.ndarray


def interaction_coefficients(spec: SystemSpec, table: PhaseTable) -> InteractionCoeffs:
    N, d = spec.N, spec.d
    Adinv = np.linalg.inv(spec.Ad)
    beta = table.beta

    def dA_dir(j: int, u: np.ndarray) -> np.ndarray:
        # derivative of A_{j+1} at 0 in direction u
        return np.tensordot(u, spec.dA[j], axes=([0], [0]))

    def dAtil_dir(l_slot: int, u: np.ndarray) -> np.ndarray:
        # derivative of A_d(v)^{-1} A_l(v) at v = 0 in direction u;
        # slot 0 is time with A_0 = I
        dAd = dA_dir(d - 1, u)
        if l_slot == 0:
            return -Adinv @ dAd @ Adinv
        return Adinv @ dA_dir(l_slot - 1, u) - Adinv @ dAd @ Adinv @ spec.A[l_slot - 1]

    R, L = table.r_flat, table.l_flat
    m_tensor = np.empty((N, N, N))
    for a in range(N):
        D = beta[0] * dAtil_dir(0, R[:, a])
        for j in range(1, d):
            D = D + beta[j] * dAtil_dir(j, R[:, a])
        m_tensor[:, a, :] = L @ D @ R

    e_mat = L @ Adinv @ spec.S0 @ R

    Atil = tangential_normalized(spec)
    v_coef = np.einsum("im,lmn,nk->lik", L, Atil, R)

    # within-mode collapse: restricted tensor must be diag in (k', l)
    burgers = []
    spread = 0.0
    for midx, mode in enumerate(table.modes):
        comps = [c for c, cm in enumerate(table.comp_mode) if cm == midx]
        sub = m_tensor[np.ix_(comps, comps, comps)]  # [l, k, k']
        nu = len(comps)
        g = np.array([np.mean([sub[l, k, l] for l in range(nu)]) for k in range(nu)])
        model = np.zeros_like(sub)
        for l in range(nu):
            model[l, :, l] = g
        spread = max(spread, float(np.max(np.abs(sub - model))))
        burgers.append(g)

    return InteractionCoeffs(
        table=table,
        m_tensor=m_tensor,
        e_mat=e_mat,
        v_coef=v_coef,
        burgers=tuple(burgers),
        burgers_spread=spread,
        B0=spec.B0.copy(),
    )


# ---------------------------------------------------------------------------
# profile lattice


def _cubic_weights(s: np.ndarray):
    """Uniform 4-point Lagrange weights at fraction s in [0, 1)."""
    w0 = -s * (s - 1.0) * (s - 2.0) / 6.0
    w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w2 = -(s + 1.0) * s * (s - 2.0) / 2.0
    w3 = (s + 1.0) * s * (s - 1.0) / 6.0
    return w0, w1, w2, w3


@dataclass
class ProfileField:
    """One component's profile on its ray-aligned lattice.

    values[i, j, l] = sigma(t = t0_i + slope * x_j, x_j, theta_l).
    """

    comp: int
    slope: float            # dt/dx along the ray = 1 / v_normal
    incoming: bool
    t0: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    values: np.ndarray

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def eval(self, t, x, theta) -> np.ndarray:
        """Profile at physical points; bilinear in (t0, x), cubic in theta.

        Zero for t0 = t - slope * x < 0 (causality) and for theta outside the
        lattice (decayed tails).  Inputs broadcast together.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        t0q = t - self.slope * x
        t0q, xq, thq = np.broadcast_arrays(t0q, x, theta)
        out = np.zeros(t0q.shape)
        if self.is_zero:
            return out

        dt0 = self.t0[1] - self.t0[0]
        dx = self.x[1] - self.x[0]
        dth = self.theta[1] - self.theta[0]
        nt0, nx, nth = self.values.shape

        alive = t0q >= -1e-12
        alive &= (thq >= self.theta[0]) & (thq <= self.theta[-1])
        if not np.any(alive):
            return out

        ti = np.clip((t0q - self.t0[0]) / dt0, 0.0, nt0 - 1.000001)
        xi = np.clip((xq - self.x[0]) / dx, 0.0, nx - 1.000001)
        li = np.clip((thq - self.theta[0]) / dth, 1.0, nth - 2.000001)
        i0 = ti.astype(int)
        j0 = xi.astype(int)
        l0 = li.astype(int)
        ft = ti - i0
        fx = xi - j0
        fl = li - l0
        w0, w1, w2, w3 = _cubic_weights(fl)

        v = self.values
        acc = np.zeros_like(out)
        for di, wt in ((0, 1.0 - ft), (1, ft)):
            for dj, wx in ((0, 1.0 - fx), (1, fx)):
                block = (
                    v[i0 + di, j0 + dj, l0 - 1] * w0
                    + v[i0 + di, j0 + dj, l0] * w1
                    + v[i0 + di, j0 + dj, l0 + 1] * w2
                    + v[i0 + di, j0 + dj, l0 + 2] * w3
                )
                acc += wt * wx * block
        out[alive] = acc[alive]
        return out


@dataclass
class ProfileSet:
    """All component profiles of one Picard iterate plus iteration metadata."""

    table: PhaseTable
    grid: GridSpec
    fields: dict
    previous: "ProfileSet | None" = None
    convergence: list = field(default_factory=list)
    converged: bool = False

    @classmethod
    def zero(cls, table: PhaseTable, grid: GridSpec) -> "ProfileSet":
        fields = {}
        th = grid.theta_nodes
        xs = grid.x_nodes
        ts = grid.t_nodes
        for c in range(table.N):
            mode = table.modes[table.comp_mode[c]]
            fields[c] = ProfileField(
                comp=c,
                slope=1.0 / mode.v_normal,
                incoming=mode.incoming,
                t0=ts.copy(),
                x=xs.copy(),
                theta=th.copy(),
                values=np.zeros((grid.nt + 1, grid.nx + 1, grid.ntheta)),
            )
        return cls(table=table, grid=grid, fields=fields)

    def eval_comp(self, c: int, t, x, theta) -> np.ndarray:
        return self.fields[c].eval(t, x, theta)

    def sup(self) -> float:
        return max(float(np.max(np.abs(f.values))) for f in self.fields.values())

    def sup_diff(self, other: "ProfileSet") -> float:
        return max(
            float(np.max(np.abs(self.fields[c].values - other.fields[c].values)))
            for c in self.fields
        )


# ---------------------------------------------------------------------------
# boundary reflection


def boundary_reflection_solve(
    table: PhaseTable,
    B0: np.ndarray,
    g: np.ndarray,
    outgoing: dict | None = None,
) -> np.ndarray:
    """Incoming boundary traces from pulse data and outgoing traces.

    g: (..., p) boundary data samples.  outgoing: {comp: (...) trace} for the
    outgoing components (same leading shape).  Returns (..., n_in) in the
    order of table.incoming_comps.  The p x p matrix [B0 r_c]_{c incoming}
    is invertible exactly when the boundary is uniformly stable at beta.
    """
    inc = list(table.incoming_comps)
    RM = B0 @ table.r_flat[:, inc]
    cond = np.linalg.cond(RM)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(
            f"boundary matrix is not invertible on the incoming span (cond {cond:.2e})"
        )
    rhs = np.array(g, dtype=float, copy=True)
    if outgoing:
        for c, tr in outgoing.items():
            rhs -= np.asarray(tr)[..., None] * (B0 @ table.r_flat[:, c])
    flat = rhs.reshape(-1, rhs.shape[-1])
    sol = np.linalg.solve(RM, flat.T).T
    return sol.reshape(rhs.shape[:-1] + (len(inc),))


# ---------------------------------------------------------------------------
# Picard iteration


def _advect_column(w, q, src, dx_step, dtheta, cfl, n_sub_cap):
    """March w (rows, ntheta) one lattice column along the rays.

    First-order upwind in theta with source, coefficient and source frozen at
    the departure column; deterministic subcycling keeps q dt / dtheta <= cfl.
    """
    qmax = float(np.max(np.abs(q))) if q.size else 0.0
    n_sub = max(1, int(np.ceil(qmax * abs(dx_step) / (cfl * dtheta))))
    if n_sub > n_sub_cap:
        raise CFLError(
            f"theta advection needs {n_sub} substeps (cap {n_sub_cap}); "
            "profile gradient too steep for this lattice"
        )
    h = dx_step / n_sub
    qp = np.maximum(q, 0.0)
    qm = np.minimum(q, 0.0)
    for _ in range(n_sub):
        wm = np.roll(w, 1, axis=-1)
        wp = np.roll(w, -1, axis=-1)
        w = w - (h / dtheta) * (qp * (w - wm) + qm * (wp - w)) + h * src
    return w


def picard_step(
    prev: ProfileSet,
    coeffs: InteractionCoeffs,
    pulse: BoundaryPulse,
    cfl: float = 0.8,
    shock_cap: float = 0.8,
    n_sub_cap: int = 64,
) -> tuple[ProfileSet, dict]:
    """One Picard update: freeze the Burgers coefficient and sources at the
    previous iterate, solve the boundary reflection, and march every
    component along its rays.  Deterministic: rays are vectorized, never
    raced."""
    table, grid = prev.table, prev.grid
    if table.beta.size != 1:
        raise NotImplementedError("the lattice profile solver supports d = 1 only")
    B0 = coeffs.B0
    nxt = ProfileSet.zero(table, grid)
    nxt.previous = None

    th = grid.theta_nodes
    ts = grid.t_nodes
    dth = grid.dtheta
    dx = grid.dx

    # boundary data and reflection
    g = pulse.trace(ts, th)  # (nt+1, ntheta, p)
    out_traces = {c: prev.fields[c].values[:, 0, :] for c in table.outgoing_comps}
    s_in = boundary_reflection_solve(table, B0, g, out_traces)

    mode_comps = {
        m: [c for c, cm in enumerate(table.comp_mode) if cm == m]
        for m in range(table.n_modes)
    }

    stats = {"n_sub_max": 1, "grad_max": 0.0}
    for midx, mode in enumerate(table.modes):
        comps = mode_comps[midx]
        gq = coeffs.burgers[midx]
        prev_vals = [prev.fields[c].values for c in comps]
        new_vals = [nxt.fields[c].values for c in comps]

        if mode.incoming:
            for kk, c in enumerate(comps):
                pos = list(table.incoming_comps).index(c)
                new_vals[kk][:, 0, :] = s_in[:, :, pos]
            j_range = range(grid.nx)
            direction = +1
        else:
            for kk in range(len(comps)):
                new_vals[kk][:, grid.nx, :] = 0.0
            j_range = range(grid.nx, 0, -1)
            direction = -1

        for j in j_range:
            q = sum(gq[kk] * prev_vals[kk][:, j, :] for kk in range(len(comps)))
            if direction < 0:
                q = -q
            jn = j + direction
            for kk, c in enumerate(comps):
                src = np.zeros_like(prev_vals[kk][:, j, :])
                for kk2, c2 in enumerate(comps):
                    src = src + coeffs.e_mat[c, c2] * prev_vals[kk2][:, j, :]
                if direction < 0:
                    src = -src
                w = _advect_column(
                    new_vals[kk][:, j, :], q, src, dx, dth, cfl, n_sub_cap
                )
                new_vals[kk][:, jn, :] = w
        # shock proximity: max |d_theta q| * T must stay under the cap
        qfield = sum(gq[kk] * new_vals[kk] for kk in range(len(comps)))
        if np.any(qfield):
            grad = np.max(np.abs(np.roll(qfield, -1, axis=-1) - np.roll(qfield, 1, axis=-1))) / (
                2.0 * dth
            )
            stats["grad_max"] = max(stats["grad_max"], float(grad))

    if stats["grad_max"] * grid.T >= shock_cap:
        raise PreShockError(
            f"max |d_theta q| * T = {stats['grad_max'] * grid.T:.3f} >= {shock_cap}: "
            "approaching shock formation, shrink T or the amplitude"
        )
    return nxt, stats


def solve_profiles(
    table: PhaseTable,
    coeffs: InteractionCoeffs,
    pulse: BoundaryPulse,
    grid: GridSpec,
    tol: float = 1e-10,
    max_iter: int = 40,
    cfl: float = 0.8,
    shock_cap: float = 0.8,
) -> ProfileSet:
    """Picard-iterate the profile system to the fixed point.

    Keeps the last two iterates (the corrector assembly consumes both).
    Raises HorizonError when three consecutive difference ratios fail to
    contract and ConvergenceError when max_iter is exhausted.
    """
    ps = ProfileSet.zero(table, grid)
    diffs: list[float] = []
    for it in range(1, max_iter + 1):
        nxt, stats = picard_step(ps, coeffs, pulse, cfl=cfl, shock_cap=shock_cap)
        diff = nxt.sup_diff(ps)
        diffs.append(diff)
        entry = {"iter": it, "diff": diff}
        if len(diffs) >= 2 and diffs[-2] > 0:
            entry["ratio"] = diffs[-1] / diffs[-2]
        nxt.convergence = ps.convergence + [entry]
        nxt.previous = ps
        ps.previous = None  # keep at most two iterates alive
        ps = nxt
        if diff <= tol:
            ps.converged = True
            return ps
        ratios = [e["ratio"] for e in ps.convergence if "ratio" in e]
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            raise HorizonError(
                "Picard iteration stopped contracting "
                f"(last ratios {[f'{r:.3f}' for r in ratios[-3:]]})"
            )
    raise ConvergenceError(f"no convergence to {tol:g} within {max_iter} iterations")


def profile_residual(ps: ProfileSet, coeffs: InteractionCoeffs) -> dict:
    """Sup residual of the transport equations at the converged iterate.

    Central differences along the rays and in theta on interior lattice
    nodes; the expected size is O(dx + dtheta) for the first-order march.
    """
    table, grid = ps.table, ps.grid
    out = {}
    dth = grid.dtheta
    for midx, mode in enumerate(table.modes):
        comps = [c for c, cm in enumerate(table.comp_mode) if cm == midx]
        vals = [ps.fields[c].values for c in comps]
        g = coeffs.burgers[midx]
        q = sum(g[kk] * vals[kk] for kk in range(len(comps)))
        for kk, c in enumerate(comps):
            v = vals[kk]
            ray = (v[:, 2:, :] - v[:, :-2, :]) / (2.0 * grid.dx)
            vth = (np.roll(v, -1, axis=-1) - np.roll(v, 1, axis=-1)) / (2.0 * dth)
            rhs = sum(coeffs.e_mat[c, c2] * vals[kk2] for kk2, c2 in enumerate(comps))
            res = ray + (q * vth - rhs)[:, 1:-1, :]
            out[c] = float(np.max(np.abs(res)))
    return out


# ---------------------------------------------------------------------------
# evaluation and norms


def leading_order_eval(ps: ProfileSet, eps: float, t, x) -> np.ndarray:
    """Leading-order approximate solution sum_c sigma_c(t, x, phi_c / eps) r_c.

    t, x broadcast together; returns shape broadcast(t, x) + (N,).
    """
    table = ps.table
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = np.broadcast_shapes(t.shape, x.shape)
    out = np.zeros(shape + (table.N,))
    tau = table.beta[0]
    for c in range(table.N):
        fld = ps.fields[c]
        if fld.is_zero:
            continue
        omega = table.comp_omega(c)
        theta = (tau * t + omega * x) / eps
        vals = fld.eval(t, x, theta)
        out += vals[..., None] * table.r_flat[:, c]
    return out


def _fd_axis(u: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """4th-order central first derivative; non-periodic edges fall back to
    2nd-order one-sided stencils."""
    u = np.moveaxis(u, axis, 0)
    n = u.shape[0]
    if periodic:
        d = (
            -np.roll(u, -2, axis=0)
            + 8.0 * np.roll(u, -1, axis=0)
            - 8.0 * np.roll(u, 1, axis=0)
            + np.roll(u, 2, axis=0)
        ) / (12.0 * h)
        return np.moveaxis(d, 0, axis)
    d = np.empty_like(u)
    if n < 5:
        d[:] = np.gradient(u, h, axis=0)
        return np.moveaxis(d, 0, axis)
    d[2:-2] = (-u[4:] + 8.0 * u[3:-1] - 8.0 * u[1:-3] + u[:-4]) / (12.0 * h)
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    d[1] = (u[2] - u[0]) / (2.0 * h)
    d[-2] = (u[-1] - u[-3]) / (2.0 * h)
    d[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return np.moveaxis(d, 0, axis)


def weighted_norm(u: np.ndarray, spacings, theta_grid: np.ndarray, s: int, kind: str = "gamma") -> float:
    """Weighted Sobolev-type norm of a profile sampled on a tensor grid.

    u has the fast variable on the last axis and slow axes in front;
    spacings are the slow-axis steps.  kind 'gamma' sums the squared L2
    norms of theta^{b1} d_slow^{bvec} d_theta^{b3} u over all multi-indices
    with b1 + |bvec| + b3 <= s; kind 'lambda' keeps only the pure powers
    (theta^k u, single-axis d^k u, d_theta^k u for k <= s).  By term-set
    inclusion the lambda value never exceeds the gamma value on the same
    grid.  Slow-axis derivatives use 4th-order interior stencils; theta is
    treated as periodic (profiles decay well inside the lattice).
    """
    u = np.asarray(u, dtype=float)
    n_slow = u.ndim - 1
    spacings = [float(h) for h in np.atleast_1d(spacings)]
    if len(spacings) != n_slow:
        raise ValueError(f"need {n_slow} slow spacings, got {len(spacings)}")
    dth = float(theta_grid[1] - theta_grid[0])
    theta = np.asarray(theta_grid, dtype=float)

    # integration weights: trapezoid on slow axes, plain sum in theta
    def sq_integral(v: np.ndarray) -> float:
        w = v * v
        for ax, h in enumerate(spacings):
            sl = [slice(None)] * w.ndim
            weights = np.ones(w.shape[ax])
            weights[0] = weights[-1] = 0.5
            shape = [1] * w.ndim
            shape[ax] = -1
            w = w * weights.reshape(shape) * h
        return float(np.sum(w) * dth)

    memo: dict = {}

    def deriv(bvec: tuple, b3: int) -> np.ndarray:
        key = (bvec, b3)
        if key in memo:
            return memo[key]
        if b3 > 0:
            base = deriv(bvec, b3 - 1)
            val = _fd_axis(base, dth, u.ndim - 1, periodic=True)
        else:
            ax = next((i for i, b in enumerate(bvec) if b > 0), None)
            if ax is None:
                val = u
            else:
                lower = list(bvec)
                lower[ax] -= 1
                base = deriv(tuple(lower), 0)
                val = _fd_axis(base, spacings[ax], ax, periodic=False)
        memo[key] = val
        return val

    def term(b1: int, bvec: tuple, b3: int) -> float:
        v = deriv(bvec, b3)
        if b1 > 0:
            v = v * theta**b1
        return sq_integral(v)

    total = 0.0
    if kind == "gamma":
        def all_bvecs(budget: int, n: int):
            if n == 0:
                yield ()
                return
            for first in range(budget + 1):
                for rest in all_bvecs(budget - first, n - 1):
                    yield (first,) + rest

        for b1 in range(s + 1):
            for b3 in range(s + 1 - b1):
                for bvec in all_bvecs(s - b1 - b3, n_slow):
                    total += term(b1, bvec, b3)
    elif kind == "lambda":
        total += term(0, (0,) * n_slow, 0)
        for k in range(1, s + 1):
            total += term(k, (0,) * n_slow, 0)
            total += term(0, (0,) * n_slow, k)
            for ax in range(n_slow):
                bvec = [0] * n_slow
                bvec[ax] = k
                total += term(0, tuple(bvec), 0)
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    return float(np.sqrt(total))
