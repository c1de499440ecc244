"""Fine-grid reference solver for the oscillatory boundary-value problem.

Solves the original quasilinear system

    d_t u + A_d(eps u) d_x u = S u,   B(eps u) u|_{x=0} = G(t, tau t / eps),
    u = 0 for t < 0

in one space dimension on a grid fine enough to resolve the eps-scale
oscillation carried by the boundary data (dx <= eps / points_per_wavelength).
The scheme is explicit flux-split second-order upwind with the characteristic
decomposition recomputed per cell from A_d(eps u), advanced by Heun's method
with the boundary condition enforced per stage.  At x = 0 the incoming
characteristic content is determined from the nonlinear boundary equation
(damped Newton; a single linear solve when the boundary matrix is constant)
while the outgoing content is taken from a one-sided interior update.  At the
right edge a pure outflow closure; the domain is built deep enough that
nothing reflected there can re-enter the comparison window.

Interior stencil amplification with Heun stays <= 1 exactly up to
max-speed dt/dx = 0.5; grids are built at 0.4 with a reserve factor for
state-dependent speeds, and every step checks the realized speeds against
the hard limit.

The Picard mode re-solves the same problem as a sequence of linear systems
with coefficients frozen at the previous iterate, mirroring the fixed-point
construction of the singular formulation; its contraction log is the
observable the sweep harness checks for eps-uniformity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hyperbolic import SystemSpec, phase_table
from .profiles import BoundaryPulse, CFLError, ConvergenceError

# the interior stencil pair is neutrally stable up to exactly this Courant
# number; exceeding it is a hard error, not a warning
CFL_HARD_LIMIT = 0.5


class NewtonError(RuntimeError):
    """Boundary Newton iteration failed to reach tolerance."""


class ValidityError(RuntimeError):
    """Solution left the validity ball |eps u| <= delta."""


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class FineGrid:
    """Space-time grid resolving the eps-oscillation.

    X includes the outflow margin: X >= x_window + max_speed * T so that the
    artificial right boundary cannot pollute [0, x_window] within [0, T].
    """

    T: float
    X: float
    nt: int
    nx: int
    eps: float
    ppw: int = 24

    def __post_init__(self):
        if min(self.T, self.X, self.eps) <= 0 or min(self.nt, self.nx) < 2:
            raise ValueError("grid extents and resolutions must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return self.X / self.nx

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.X, self.nx + 1)

    @classmethod
    def build(
        cls,
        eps: float,
        T: float,
        x_window: float,
        max_speed: float,
        ppw: int = 24,
        cfl: float = 0.4,
        speed_margin: float = 1.1,
    ) -> "FineGrid":
        if cfl * speed_margin > CFL_HARD_LIMIT + 1e-12:
            raise ValueError("requested Courant number exceeds the scheme limit")
        X = x_window + max_speed * T
        nx = int(math.ceil(X / (eps / ppw)))
        dx = X / nx
        dt_target = cfl * dx / (max_speed * speed_margin)
        nt = int(math.ceil(T / dt_target))
        grid = cls(T=T, X=X, nt=nt, nx=nx, eps=eps, ppw=ppw)
        if grid.dx * ppw > eps * (1.0 + 1e-9):
            raise ValueError("grid does not resolve eps at the requested density")
        return grid


@dataclass
class FineSolution:
    """Reference solution and solver metadata.

    u is the final-time snapshot (nx+1, N); history, when retained, is the
    full (nt+1, nx+1, N) grid function needed by residual_norms.
    """

    eps: float
    grid: FineGrid
    u: np.ndarray
    history: np.ndarray | None = None
    newton_stats: dict = field(default_factory=dict)
    convergence: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# per-cell characteristic algebra


def _batched_decompose(A_cells: np.ndarray, symmetric: bool):
    """Eigen-decomposition per cell; (lam, R, L) with A = R diag(lam) L."""
    if symmetric:
        lam, R = np.linalg.eigh(A_cells)
        return lam, R, np.swapaxes(R, -1, -2)
    lam, R = np.linalg.eig(A_cells)
    if np.max(np.abs(lam.imag)) > 1e-9 * max(1.0, np.max(np.abs(lam.real))):
        raise ValidityError("cell matrix lost real diagonalizability")
    return lam.real, R.real, np.linalg.inv(R.real)


def _one_sided_derivatives(u: np.ndarray, h: float):
    """Second-order D- and D+ columns with boundary-degenerate closures.

    Node 1 / node nx-1 fall back to the central difference on the missing
    side; node 0 uses pure D+ (its incoming part is overwritten by the
    boundary solve) and node nx pure D- (outflow).
    """
    Dm = np.empty_like(u)
    Dp = np.empty_like(u)
    Dm[2:] = (3.0 * u[2:] - 4.0 * u[1:-1] + u[:-2]) / (2.0 * h)
    Dm[1] = (u[2] - u[0]) / (2.0 * h)
    Dp[:-2] = (-3.0 * u[:-2] + 4.0 * u[1:-1] - u[2:]) / (2.0 * h)
    Dp[-2] = (u[-1] - u[-3]) / (2.0 * h)
    Dp[-1] = Dm[-1]
    Dm[0] = Dp[0]
    return Dm, Dp


# ---------------------------------------------------------------------------
# the time march (shared by the direct and Picard modes)


class _Stepper:
    def __init__(self, spec: SystemSpec, pulse: BoundaryPulse, beta, eps, grid,
                 delta, newton_tol, newton_max):
        if spec.d != 1:
            raise ValueError("the reference solver is restricted to d = 1")
        if pulse.amplitude.shape[0] != spec.p:
            raise ValueError("pulse amplitude count must match boundary rows")
        self.spec = spec
        self.pulse = pulse
        self.tau = float(np.asarray(beta, dtype=float)[0])
        self.eps = float(eps)
        self.grid = grid
        self.delta = float(delta)
        self.newton_tol = float(newton_tol)
        self.newton_max = int(newton_max)
        self.A0 = spec.A[0]
        self.dA0 = spec.dA[0]
        self.has_dA = bool(np.any(self.dA0))
        sym = np.allclose(self.A0, self.A0.T, atol=1e-13)
        if self.has_dA:
            sym = sym and all(
                np.allclose(self.dA0[k], self.dA0[k].T, atol=1e-13)
                for k in range(spec.N)
            )
        self.symmetric = sym
        self.S0T = spec.S0.T.copy()
        self.has_S = bool(np.any(spec.S0))
        self.max_newton_iters = 0
        self.max_bc_residual = 0.0
        self.max_courant = 0.0

    def boundary_data(self, t: float) -> np.ndarray:
        return self.pulse.values(t, self.tau * t / self.eps)

    def cell_matrices(self, v: np.ndarray) -> np.ndarray:
        # A_d at state eps*u, batched over cells; v = eps * u
        if not self.has_dA:
            return np.broadcast_to(self.A0, (v.shape[0],) + self.A0.shape)
        return self.A0[None, :, :] + np.einsum("ik,kab->iab", v, self.dA0)

    def rhs(self, u: np.ndarray, v_state: np.ndarray):
        """Semi-discrete right side and the realized maximal speed."""
        A_cells = self.cell_matrices(self.eps * v_state)
        lam, R, L = _batched_decompose(A_cells, self.symmetric)
        Dm, Dp = _one_sided_derivatives(u, self.grid.dx)
        Dc = 0.5 * (Dm + Dp)
        Dd = 0.5 * (Dm - Dp)
        flux = np.einsum("iab,ib->ia", A_cells, Dc)
        # |A| = R |lam| L adds the upwind dissipation
        flux += np.einsum("iab,ib,ibc,ic->ia", R, np.abs(lam), L, Dd, optimize=True)
        out = -flux
        if self.has_S:
            out += u @ self.S0T
        return out, float(np.max(np.abs(lam)))

    def boundary_rows(self, v0: np.ndarray):
        """Outgoing left rows of A_d(v0) at the boundary cell."""
        A0c = self.cell_matrices(v0[None, :])[0]
        lam, R, L = _batched_decompose(A0c[None], self.symmetric)
        lam, L = lam[0], L[0]
        out = L[lam < 0.0]
        if out.shape[0] != self.spec.N - self.spec.p:
            raise ValidityError(
                "characteristic signature changed at the boundary "
                f"(expected {self.spec.N - self.spec.p} outgoing, got {out.shape[0]})"
            )
        return out

    def apply_bc(self, u: np.ndarray, g: np.ndarray, frozen_v0: np.ndarray | None):
        """Overwrite node 0: B(eps w) w = g plus outgoing match to the
        interior prediction.  frozen_v0 (Picard mode) makes it linear."""
        u_pred = u[0].copy()
        spec = self.spec
        state0 = frozen_v0 if frozen_v0 is not None else self.eps * u_pred
        L_out = self.boundary_rows(state0)
        scale = max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(u_pred))))

        if spec.dB is None or frozen_v0 is not None:
            Bmat = spec.B_at(state0)
            M = np.vstack([Bmat, L_out])
            rhs = np.concatenate([g, L_out @ u_pred])
            w = np.linalg.solve(M, rhs)
            res = float(np.max(np.abs(Bmat @ w - g)))
            self.max_bc_residual = max(self.max_bc_residual, res)
            u[0] = w
            return

        # nonlinear boundary matrix: damped Newton from the prediction
        dB = spec.dB
        w = u_pred.copy()

        def residual(wv):
            Bw = spec.B_at(self.eps * wv)
            return np.concatenate([Bw @ wv - g, L_out @ (wv - u_pred)])

        F = residual(w)
        for it in range(1, self.newton_max + 1):
            if np.max(np.abs(F)) <= self.newton_tol * scale:
                break
            Bw = spec.B_at(self.eps * w)
            dtop = Bw + self.eps * np.einsum("kij,j->ki", dB, w).T
            J = np.vstack([dtop, L_out])
            step = np.linalg.solve(J, -F)
            lam_d = 1.0
            base = np.max(np.abs(F))
            for _ in range(8):
                Fn = residual(w + lam_d * step)
                if np.max(np.abs(Fn)) <= (1.0 - 0.25 * lam_d) * base:
                    break
                lam_d *= 0.5
            w = w + lam_d * step
            F = Fn
            self.max_newton_iters = max(self.max_newton_iters, it)
        else:
            raise NewtonError(
                f"boundary Newton stalled at |F| = {np.max(np.abs(F)):.3e}"
            )
        self.max_bc_residual = max(
            self.max_bc_residual, float(np.max(np.abs(F[: spec.p])))
        )
        u[0] = w

    def march(self, frozen=None, store_history=False, on_step=None) -> tuple:
        """Run the full time loop; returns (final u, history or None)."""
        grid = self.grid
        N = self.spec.N
        dt, dx = grid.dt, grid.dx
        u = np.zeros((grid.nx + 1, N))
        hist = np.zeros((grid.nt + 1, grid.nx + 1, N)) if store_history else None
        if on_step is not None:
            on_step(0, 0.0, u)
        for n in range(grid.nt):
            t0 = n * dt
            t1 = t0 + dt
            v1 = u if frozen is None else frozen[n]
            k1, speed = self.rhs(u, v1)
            courant = speed * dt / dx
            self.max_courant = max(self.max_courant, courant)
            if courant > CFL_HARD_LIMIT * (1.0 + 1e-12):
                raise CFLError(
                    f"realized Courant number {courant:.4f} exceeds "
                    f"{CFL_HARD_LIMIT} at step {n}"
                )
            us = u + dt * k1
            # the predictor is the Euler point, so its boundary data must be
            # Euler-consistent (g + dt g'); handing it g(t1) instead injects
            # an O(dt^2) stage mismatch that costs a full convergence order
            g1 = self.boundary_data(t1)
            g_pred = self.boundary_data(t0) + 0.5 * (g1 - self.boundary_data(t0 - dt))
            if frozen is None:
                self.apply_bc(us, g_pred, None)
                v2 = us
                fz_corr = None
            else:
                # rebuild the previous iterate's own stage states so the
                # frozen map and the direct map share their fixed point
                # exactly (otherwise they disagree at the scheme's O(h^2)
                # level and the cross-solver contract cannot hold)
                base = frozen[n]
                k1f, _ = self.rhs(base, base)
                v2 = base + dt * k1f
                fz_pred = self.eps * v2[0].copy()
                self.apply_bc(v2, g_pred, fz_pred)
                self.apply_bc(us, g_pred, fz_pred)
                k2f, _ = self.rhs(v2, v2)
                fz_corr = self.eps * (base[0] + 0.5 * dt * (k1f[0] + k2f[0]))
            k2, _ = self.rhs(us, v2)
            un = u + 0.5 * dt * (k1 + k2)
            self.apply_bc(un, g1, fz_corr)
            amax = float(np.max(np.abs(un)))
            if self.eps * amax > self.delta:
                raise ValidityError(
                    f"|eps u| = {self.eps * amax:.3e} left the validity ball "
                    f"delta = {self.delta} at t = {t1:.6f}"
                )
            u = un
            if store_history:
                hist[n + 1] = u
            if on_step is not None:
                on_step(n + 1, t1, u)
        return u, hist

    def stats(self) -> dict:
        return {
            "max_newton_iters": self.max_newton_iters,
            "max_bc_residual": self.max_bc_residual,
            "max_courant": self.max_courant,
        }


# ---------------------------------------------------------------------------
# public drivers


def solve_exact(
    spec: SystemSpec,
    pulse: BoundaryPulse,
    beta,
    eps: float,
    grid: FineGrid,
    delta: float = 0.5,
    newton_tol: float = 1e-12,
    newton_max: int = 20,
    store_history: bool = False,
    on_step=None,
) -> FineSolution:
    """March the quasilinear system to T on the fine grid.

    on_step(n, t, u_row) streams every accepted level (including n = 0) so
    callers can accumulate error norms without retaining the history.
    """
    st = _Stepper(spec, pulse, beta, eps, grid, delta, newton_tol, newton_max)
    u, hist = st.march(frozen=None, store_history=store_history, on_step=on_step)
    return FineSolution(
        eps=float(eps),
        grid=grid,
        u=u,
        history=hist,
        newton_stats=st.stats(),
        meta={"mode": "direct"},
    )


def picard_solve_singular(
    spec: SystemSpec,
    pulse: BoundaryPulse,
    beta,
    eps: float,
    grid: FineGrid,
    tol: float = 1e-10,
    max_iter: int = 25,
    delta: float = 0.5,
    newton_tol: float = 1e-12,
    newton_max: int = 20,
) -> FineSolution:
    """Fixed-point mode: linear solves with coefficients frozen at the
    previous iterate.  The contraction log is the sweep's uniformity probe."""
    st = _Stepper(spec, pulse, beta, eps, grid, delta, newton_tol, newton_max)
    prev = np.zeros((grid.nt + 1, grid.nx + 1, spec.N))
    log = []
    last_diff = None
    rising = 0
    for it in range(1, max_iter + 1):
        _, hist = st.march(frozen=prev, store_history=True)
        diff = float(np.max(np.abs(hist - prev)))
        entry = {"iter": it, "diff": diff}
        if last_diff is not None and last_diff > 0:
            entry["ratio"] = diff / last_diff
            rising = rising + 1 if entry["ratio"] >= 1.0 else 0
        log.append(entry)
        prev = hist
        if diff <= tol:
            return FineSolution(
                eps=float(eps),
                grid=grid,
                u=hist[-1].copy(),
                history=hist,
                newton_stats=st.stats(),
                convergence=log,
                meta={"mode": "picard", "iterations": it},
            )
        if rising >= 2:
            raise ConvergenceError("T too large for fixed-point regime")
        last_diff = diff
    raise ConvergenceError(
        f"Picard mode did not reach {tol:g} within {max_iter} iterations"
    )


def linear_oracle(
    spec: SystemSpec, pulse: BoundaryPulse, beta, eps: float, t, x
) -> np.ndarray:
    """Closed-form solution for the constant-coefficient decoupled case.

    u(t, x) = sum over incoming components of s_c(t - x/a_c) r_c with the
    trace s solved from the constant reflection system; a contract violation
    on any nonlinear input.
    """
    if np.any(spec.dA) or np.any(spec.S0) or spec.dB is not None:
        raise ValueError("linear oracle requires dA = 0, S = 0, constant B")
    table = phase_table(spec, beta)
    inc = list(table.incoming_comps)
    RM = spec.B0 @ table.r_flat[:, inc]
    RMinv = np.linalg.inv(RM)
    tau = float(np.asarray(beta, dtype=float)[0])
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = np.broadcast_shapes(t.shape, x.shape)
    out = np.zeros(shape + (spec.N,))
    for kk, c in enumerate(inc):
        a_c = table.modes[table.comp_mode[c]].v_normal
        t_ret = t - x / a_c
        g = pulse.values(t_ret, tau * t_ret / eps)
        s_c = np.einsum("b,...b->...", RMinv[kk], g)
        out += s_c[..., None] * table.r_flat[:, c]
    return out


def residual_norms(
    sol: FineSolution, spec: SystemSpec, pulse: BoundaryPulse, beta
) -> dict:
    """Centered finite-difference residuals of the interior equations and
    the boundary condition; requires a retained history."""
    if sol.history is None:
        raise ValueError("residual_norms needs store_history=True output")
    H = sol.history
    grid = sol.grid
    eps = sol.eps
    tau = float(np.asarray(beta, dtype=float)[0])
    dt, dx = grid.dt, grid.dx
    A0, dA0 = spec.A[0], spec.dA[0]
    pde_sup = 0.0
    for n in range(1, grid.nt):
        u = H[n]
        ut = (H[n + 1] - H[n - 1]) / (2.0 * dt)
        ux = np.empty_like(u)
        ux[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
        A_cells = A0[None, :, :] + np.einsum("ik,kab->iab", eps * u[1:-1], dA0)
        r = ut[1:-1] + np.einsum("iab,ib->ia", A_cells, ux[1:-1]) - u[1:-1] @ spec.S0.T
        pde_sup = max(pde_sup, float(np.max(np.abs(r))))
    bc_sup = 0.0
    for n in range(grid.nt + 1):
        t = n * dt
        w = H[n, 0]
        g = pulse.values(t, tau * t / eps)
        bc_sup = max(bc_sup, float(np.max(np.abs(spec.B_at(eps * w) @ w - g))))
    return {"pde_residual_sup": pde_sup, "bc_residual_sup": bc_sup}
