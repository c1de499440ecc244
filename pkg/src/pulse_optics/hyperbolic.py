"""Linear mode structure of the reflecting boundary value problem.

The systems treated here are quasilinear first-order hyperbolic operators on
the half space {x_d >= 0},

    d_t u + sum_{j=1}^{d} A_j(eps u) d_{x_j} u = S(eps u) u,
    B(eps u) u = G           on x_d = 0,
    u = 0                    for t < 0,

with affine coefficient dependence

    A_j(v) = A_j(0) + sum_k v_k dA_j[k],      B(v) = B(0) + sum_k v_k dB[k],

and a fixed planar boundary frequency beta = (tau, eta_1, .., eta_{d-1}).
This module owns everything determined by the linearization at u = 0:

  * the characteristic roots omega_m of det L(tau, eta, omega) = 0 where
    L(xi) = tau I + sum_{j<d} eta_j A_j(0) + omega A_d(0), together with the
    kernel bases, spectral projectors and group velocities (phase_table);
  * the boundary symbol -i A_d(0)^{-1} ((tau - i gamma) I + sum eta_j A_j(0))
    and its stable subspace (stable_subspace);
  * the uniform stability check: B(0) restricted to the stable subspace must
    be uniformly invertible over the boundary-frequency half sphere
    (uniform_stability_scan);
  * classification helpers for boundary frequencies (hyperbolic_region_test,
    glancing_test).

Conventions fixed here and relied on everywhere downstream:

  * modes are ordered by increasing |omega|, ties broken by descending signed
    omega.  This ordering is scale-covariant in beta and is what all stored
    reference values assume.
  * right kernel bases are orthonormal with the largest-magnitude entry of
    each column made positive; left bases are rows of the inverse of the
    assembled right matrix, so biorthogonality l_i r_k = delta_ik holds to
    machine precision and the projectors sum to the identity.
  * a mode is incoming when the normal component of its group velocity is
    positive (propagation into the half space).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SpecError(ValueError):
    """A system definition violates a structural assumption."""


class GlancingError(ValueError):
    """A characteristic mode has vanishing normal group velocity."""


class SubspaceError(ValueError):
    """The stable subspace is ill-defined at the requested frequency."""


# ---------------------------------------------------------------------------
# system definition


@dataclass(frozen=True)
class SystemSpec:
    """Affine quasilinear system, frozen at its zero-state linearization.

    A: (d, N, N) array, A[j-1] = A_j(0); A[-1] is the boundary-normal matrix.
    dA: (d, N, N, N) array, dA[j-1][k] = d A_j / d u_k at u = 0.
    B0: (p, N) boundary matrix at u = 0.
    S0: (N, N) zero-state source matrix (the equations carry S(eps u) u).
    dB: (N, p, N) state dependence of the boundary matrix, zero if omitted.
    """

    A: np.ndarray
    dA: np.ndarray
    B0: np.ndarray
    S0: np.ndarray
    dB: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise SpecError("A must be a (d, N, N) stack of square matrices")
        object.__setattr__(self, "A", A)
        d, N = A.shape[0], A.shape[1]
        dA = np.asarray(self.dA, dtype=float)
        if dA.shape != (d, N, N, N):
            raise SpecError(f"dA must have shape {(d, N, N, N)}, got {dA.shape}")
        object.__setattr__(self, "dA", dA)
        B0 = np.asarray(self.B0, dtype=float)
        if B0.ndim != 2 or B0.shape[1] != N:
            raise SpecError("B0 must be a (p, N) matrix")
        object.__setattr__(self, "B0", B0)
        S0 = np.asarray(self.S0, dtype=float)
        if S0.shape != (N, N):
            raise SpecError("S0 must be (N, N)")
        object.__setattr__(self, "S0", S0)
        if self.dB is not None:
            dB = np.asarray(self.dB, dtype=float)
            if dB.shape != (N, B0.shape[0], N):
                raise SpecError(f"dB must have shape {(N, B0.shape[0], N)}")
            object.__setattr__(self, "dB", dB)

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B0.shape[0]

    @property
    def Ad(self) -> np.ndarray:
        return self.A[-1]

    def A_at(self, v: np.ndarray) -> np.ndarray:
        """All spatial matrices at state v: (d, N, N)."""
        v = np.asarray(v, dtype=float)
        return self.A + np.tensordot(v, self.dA, axes=([-1], [1]))

    def B_at(self, v: np.ndarray) -> np.ndarray:
        if self.dB is None:
            return self.B0
        return self.B0 + np.tensordot(np.asarray(v, float), self.dB, axes=([-1], [0]))


def validate_system(spec: SystemSpec, tol: float = 1e-10) -> dict:
    """Check the standing structural assumptions; raise SpecError on failure.

    Returns a report dict with the quantities checked (normal matrix
    conditioning, signature, boundary rank).
    """
    Ad = spec.Ad
    sv = np.linalg.svd(Ad, compute_uv=False)
    if sv[-1] <= tol * sv[0]:
        raise SpecError("normal matrix A_d(0) is singular (boundary is characteristic)")
    lam = np.linalg.eigvals(Ad)
    if np.max(np.abs(lam.imag)) > tol * np.max(np.abs(lam)):
        raise SpecError("A_d(0) has non-real eigenvalues")
    lam = np.sort(lam.real)
    if np.min(np.abs(lam)) <= tol * np.max(np.abs(lam)):
        raise SpecError("A_d(0) has an eigenvalue at zero")
    n_pos = int(np.sum(lam > 0))
    rank_B = int(np.linalg.matrix_rank(spec.B0, tol=tol * max(1.0, np.abs(spec.B0).max())))
    if spec.p != n_pos:
        raise SpecError(
            f"boundary condition has {spec.p} rows but A_d(0) has {n_pos} positive eigenvalues"
        )
    if rank_B != spec.p:
        raise SpecError(f"boundary matrix rank {rank_B} < p = {spec.p}")
    return {
        "N": spec.N,
        "d": spec.d,
        "p": spec.p,
        "cond_Ad": float(sv[0] / sv[-1]),
        "n_positive": n_pos,
        "rank_B": rank_B,
    }


# ---------------------------------------------------------------------------
# characteristic roots and the phase table


def _tangential_symbol(spec: SystemSpec, tau: float, eta) -> np.ndarray:
    """tau I + sum_{j<d} eta_j A_j(0)."""
    N = spec.N
    M = tau * np.eye(N)
    eta = np.atleast_1d(np.asarray(eta, dtype=float)) if eta is not None else np.zeros(0)
    if eta.size != spec.d - 1:
        raise SpecError(f"eta must have {spec.d - 1} components, got {eta.size}")
    for j in range(spec.d - 1):
        M = M + eta[j] * spec.A[j]
    return M


def _split_beta(spec: SystemSpec, beta) -> tuple[float, np.ndarray]:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size != spec.d:
        raise SpecError(f"beta must have {spec.d} components (tau, eta)")
    return float(beta[0]), beta[1:]


def dispersion_roots(spec: SystemSpec, beta, tol: float = 1e-9):
    """Real characteristic roots omega of det L(beta, omega) = 0.

    Returns (roots, mults): the distinct roots in canonical order (ascending
    |omega|, ties by descending omega) and their multiplicities.  Raises
    SpecError when any root fails to be real to tolerance, i.e. when beta
    leaves the hyperbolic region of the boundary symbol.
    """
    tau, eta = _split_beta(spec, beta)
    if tau == 0.0 and not np.any(eta):
        raise SpecError("beta must be nonzero")
    T = _tangential_symbol(spec, tau, eta)
    W = -np.linalg.solve(spec.Ad, T)
    lam = np.linalg.eigvals(W)
    scale = max(1.0, np.max(np.abs(lam)))
    if np.max(np.abs(lam.imag)) > tol * scale:
        raise SpecError("complex characteristic roots: beta is not in the hyperbolic region")
    vals = np.sort(lam.real)
    # cluster nearly equal roots
    roots, mults = [], []
    for v in vals:
        if roots and abs(v - roots[-1]) <= tol * scale:
            roots[-1] = (roots[-1] * mults[-1] + v) / (mults[-1] + 1)
            mults[-1] += 1
        else:
            roots.append(v)
            mults.append(1)
    order = sorted(range(len(roots)), key=lambda i: (abs(roots[i]), -roots[i]))
    return np.array([roots[i] for i in order]), np.array([mults[i] for i in order], dtype=int)


@dataclass(frozen=True)
class PhaseMode:
    """One characteristic phase phi_m = beta . (t, y) + omega x_d."""

    omega: float
    mult: int
    right: np.ndarray      # (N, mult) kernel basis of L(d phi_m)
    left: np.ndarray       # (mult, N) biorthogonal rows
    proj: np.ndarray       # (N, N) spectral projector onto the kernel
    velocity: np.ndarray   # (d,) group velocity of the branch at (eta, omega)
    incoming: bool

    @property
    def v_normal(self) -> float:
        return float(self.velocity[-1])


@dataclass(frozen=True)
class PhaseTable:
    """Complete mode decomposition at a fixed boundary frequency beta.

    Flat component index c runs over (mode m, column k within the mode) in
    mode order; r_flat[:, c] and l_flat[c, :] are the matching bases and
    comp_mode[c] is the owning mode.
    """

    beta: np.ndarray
    modes: tuple[PhaseMode, ...]
    r_flat: np.ndarray
    l_flat: np.ndarray
    comp_mode: tuple[int, ...]

    @property
    def N(self) -> int:
        return self.r_flat.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes])

    @property
    def incoming_modes(self) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.modes) if m.incoming)

    @property
    def incoming_comps(self) -> tuple[int, ...]:
        return tuple(c for c, m in enumerate(self.comp_mode) if self.modes[m].incoming)

    @property
    def outgoing_comps(self) -> tuple[int, ...]:
        return tuple(c for c, m in enumerate(self.comp_mode) if not self.modes[m].incoming)

    def comp_omega(self, c: int) -> float:
        return self.modes[self.comp_mode[c]].omega

    def phase_at(self, c_or_mode: int, t, y=None, x=None, by_comp: bool = True):
        """phi_m(t, y, x_d) = tau t + eta . y + omega_m x_d."""
        m = self.comp_mode[c_or_mode] if by_comp else c_or_mode
        tau = self.beta[0]
        val = tau * np.asarray(t, dtype=float)
        if self.beta.size > 1 and y is not None:
            val = val + np.tensordot(np.asarray(y, float), self.beta[1:], axes=([-1], [0]))
        if x is not None:
            val = val + self.modes[m].omega * np.asarray(x, dtype=float)
        return val


def _kernel_basis(L: np.ndarray, mult: int, tol: float) -> np.ndarray:
    """Orthonormal kernel basis of L with dimension check and canonical signs."""
    U, s, Vh = np.linalg.svd(L)
    scale = max(s[0], 1.0)
    small = int(np.sum(s <= tol * scale))
    if small != mult:
        raise SpecError(
            f"kernel dimension {small} does not match root multiplicity {mult}: "
            "eigenvalue is not semisimple at this frequency"
        )
    K = Vh[-mult:].T.conj().real.copy()
    for k in range(mult):
        j = int(np.argmax(np.abs(K[:, k])))
        if K[j, k] < 0:
            K[:, k] = -K[:, k]
    return K


def _branch_value(Axi: np.ndarray, proj: np.ndarray, mult: int) -> float:
    """Eigenvalue branch of Axi tracked by maximal overlap with range(proj)."""
    lam, V = np.linalg.eig(Axi)
    if np.max(np.abs(lam.imag)) > 1e-8 * max(1.0, np.max(np.abs(lam))):
        raise SpecError("branch tracking left the hyperbolic region")
    lam = lam.real
    V = V.real if np.max(np.abs(V.imag)) < 1e-8 else V
    overlap = np.linalg.norm(proj @ V, axis=0) ** 2 / np.linalg.norm(V, axis=0) ** 2
    # group by eigenvalue, sum overlaps within each group
    order = np.argsort(lam)
    lam, overlap = lam[order], np.abs(overlap[order])
    best_val, best_ov = None, -1.0
    i = 0
    scale = max(1.0, np.max(np.abs(lam)))
    while i < len(lam):
        j = i
        tot = 0.0
        while j < len(lam) and abs(lam[j] - lam[i]) <= 1e-7 * scale:
            tot += overlap[j]
            j += 1
        if tot > best_ov:
            best_ov, best_val = tot, float(np.mean(lam[i:j]))
        i = j
    if best_ov < 0.5 * mult:
        raise SpecError("eigenvalue branch lost during group-velocity differencing")
    return best_val


def phase_table(
    spec: SystemSpec,
    beta,
    tol: float = 1e-9,
    fd_step: float = 1e-5,
    glance_tol: float = 1e-7,
) -> PhaseTable:
    """Mode decomposition C^N = (+) ker L(d phi_m) at the frequency beta.

    Builds, for each characteristic root, the kernel basis, the biorthogonal
    left rows, the spectral projector, and the group velocity of the owning
    eigenvalue branch (central differences with eigenvector-overlap branch
    tracking).  Raises GlancingError when a mode's normal velocity vanishes
    to tolerance and SpecError when the kernels fail to span C^N.
    """
    tau, eta = _split_beta(spec, beta)
    roots, mults = dispersion_roots(spec, beta, tol=tol)
    N, d = spec.N, spec.d

    kernels = []
    for om, mu in zip(roots, mults):
        L = _tangential_symbol(spec, tau, eta) + om * spec.Ad
        kernels.append(_kernel_basis(L, int(mu), tol))
    R = np.hstack(kernels)
    if R.shape[1] != N:
        raise SpecError("kernel dimensions do not sum to N (constant multiplicity fails)")
    cond = np.linalg.cond(R)
    if cond > 1e10:
        raise SpecError(f"mode basis nearly degenerate (cond = {cond:.2e})")
    Linv = np.linalg.inv(R)

    # group velocities: the branch lambda_k of A(xi) = sum xi_j A_j(0) with
    # lambda_k(eta, omega_m) = -tau; velocity = grad_xi lambda_k
    def A_of_xi(xi):
        M = np.zeros((N, N))
        for j in range(d):
            M = M + xi[j] * spec.A[j]
        return M

    modes = []
    col = 0
    comp_mode: list[int] = []
    vel_scale = max(1.0, float(np.max(np.abs(np.linalg.eigvals(spec.Ad)))))
    for midx, (om, mu) in enumerate(zip(roots, mults)):
        K = kernels[midx]
        Lrows = Linv[col : col + int(mu), :]
        P = K @ Lrows
        xi0 = np.concatenate([eta, [om]])
        h = fd_step * (1.0 + np.linalg.norm(xi0))
        vel = np.zeros(d)
        for q in range(d):
            dq = np.zeros(d)
            dq[q] = h
            lp = _branch_value(A_of_xi(xi0 + dq), P, int(mu))
            lm = _branch_value(A_of_xi(xi0 - dq), P, int(mu))
            vel[q] = (lp - lm) / (2.0 * h)
        if abs(vel[-1]) < glance_tol * vel_scale:
            raise GlancingError(
                f"mode omega = {om:.6g} is glancing (normal velocity {vel[-1]:.2e})"
            )
        modes.append(
            PhaseMode(
                omega=float(om),
                mult=int(mu),
                right=K,
                left=Lrows,
                proj=P,
                velocity=vel,
                incoming=bool(vel[-1] > 0),
            )
        )
        comp_mode.extend([midx] * int(mu))
        col += int(mu)

    table = PhaseTable(
        beta=np.concatenate([[tau], eta]),
        modes=tuple(modes),
        r_flat=R,
        l_flat=Linv,
        comp_mode=tuple(comp_mode),
    )
    n_in = sum(m.mult for m in modes if m.incoming)
    if n_in != spec.p:
        raise SpecError(
            f"{n_in} incoming components but boundary condition has {spec.p} rows"
        )
    return table


def scale_mode_basis(table: PhaseTable, factors) -> PhaseTable:
    """Rescale each mode's right basis by factors[m] (left by 1/factors[m]).

    The projectors and every physical output are invariant; this exists so
    tests can verify basis independence of the pipeline.
    """
    factors = np.asarray(factors, dtype=float)
    modes = []
    r_cols, l_rows = [], []
    for m, mode in enumerate(table.modes):
        f = factors[m]
        modes.append(
            PhaseMode(
                omega=mode.omega,
                mult=mode.mult,
                right=mode.right * f,
                left=mode.left / f,
                proj=mode.proj,
                velocity=mode.velocity,
                incoming=mode.incoming,
            )
        )
        r_cols.append(mode.right * f)
        l_rows.append(mode.left / f)
    return PhaseTable(
        beta=table.beta,
        modes=tuple(modes),
        r_flat=np.hstack(r_cols),
        l_flat=np.vstack(l_rows),
        comp_mode=table.comp_mode,
    )


# ---------------------------------------------------------------------------
# frequency classification


def hyperbolic_region_test(spec: SystemSpec, tau: float, eta=None, tol: float = 1e-8) -> bool:
    """True when the boundary symbol at (tau, eta) is hyperbolic:
    A_d^{-1}(tau I + sum eta_j A_j) has real spectrum and is diagonalizable."""
    M = np.linalg.solve(spec.Ad, _tangential_symbol(spec, tau, eta))
    lam = np.linalg.eigvals(M)
    scale = max(1.0, np.max(np.abs(lam)))
    if np.max(np.abs(lam.imag)) > tol * scale:
        return False
    vals = np.sort(lam.real)
    i = 0
    while i < len(vals):
        j = i
        while j < len(vals) and abs(vals[j] - vals[i]) <= 1e-7 * scale:
            j += 1
        mult = j - i
        if mult > 1:
            # geometric multiplicity must match
            s = np.linalg.svd(M - vals[i] * np.eye(spec.N), compute_uv=False)
            geo = int(np.sum(s <= 1e-7 * max(1.0, s[0])))
            if geo != mult:
                return False
        i = j
    return True


def glancing_test(
    spec: SystemSpec,
    tau: float,
    eta=None,
    ngrid: int = 1601,
    tol: float = 1e-7,
) -> bool:
    """True when some characteristic branch lambda_k(eta, .) satisfies
    tau + lambda_k = 0 with d lambda_k / d xi_d = 0 at the crossing.

    Branch values are scanned on a symmetric xi_d grid wide enough to contain
    every root, crossings are refined by bisection on the nearest-eigenvalue
    distance, and the branch derivative at each crossing is estimated by
    central differences on the matched eigenvalue.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float)) if eta is not None else np.zeros(spec.d - 1)
    N = spec.N

    def eigs_at(xid: float) -> np.ndarray:
        M = np.zeros((N, N))
        for j in range(spec.d - 1):
            M = M + eta[j] * spec.A[j]
        M = M + xid * spec.Ad
        lam = np.linalg.eigvals(M)
        return np.sort(lam.real)

    sv = np.linalg.svd(spec.Ad, compute_uv=False)
    tang_norm = abs(tau) + sum(
        abs(eta[j]) * np.linalg.norm(spec.A[j], 2) for j in range(spec.d - 1)
    )
    R = tang_norm / sv[-1] + 1.0
    grid = np.linspace(-R, R, ngrid)
    fvals = np.array([np.min(np.abs(tau + eigs_at(x))) for x in grid])

    vel_scale = max(1.0, sv[0])
    h = 1e-6 * (1.0 + R)

    def crossing_derivatives(xid: float) -> list[float]:
        lam0 = eigs_at(xid)
        near = np.abs(tau + lam0) <= 1e-6 * max(1.0, np.max(np.abs(lam0)))
        if not np.any(near):
            return []
        lp, lm = eigs_at(xid + h), eigs_at(xid - h)
        out = []
        for idx in np.nonzero(near)[0]:
            target = lam0[idx]
            dp = lp[np.argmin(np.abs(lp - target))]
            dm = lm[np.argmin(np.abs(lm - target))]
            out.append((dp - dm) / (2.0 * h))
        return out

    # localize minima of fvals that plausibly reach zero
    for i in range(1, ngrid - 1):
        if fvals[i] <= fvals[i - 1] and fvals[i] <= fvals[i + 1] and fvals[i] < 0.5:
            a, b = grid[i - 1], grid[i + 1]
            for _ in range(80):
                m1 = a + (b - a) / 3.0
                m2 = b - (b - a) / 3.0
                f1 = np.min(np.abs(tau + eigs_at(m1)))
                f2 = np.min(np.abs(tau + eigs_at(m2)))
                if f1 < f2:
                    b = m2
                else:
                    a = m1
            x_star = 0.5 * (a + b)
            if np.min(np.abs(tau + eigs_at(x_star))) <= 1e-8 * max(1.0, abs(tau)):
                for deriv in crossing_derivatives(x_star):
                    if abs(deriv) < tol * vel_scale:
                        return True
    return False


# ---------------------------------------------------------------------------
# stable subspace and uniform stability


def boundary_symbol(spec: SystemSpec, tau: float, gamma: float, eta=None) -> np.ndarray:
    """-i A_d(0)^{-1} ((tau - i gamma) I + sum_j eta_j A_j(0))."""
    T = _tangential_symbol(spec, tau, eta).astype(complex)
    T = T - 1j * gamma * np.eye(spec.N)
    return -1j * np.linalg.solve(spec.Ad, T)

def stable_subspace(
    spec: SystemSpec,
    tau: float,
    gamma: float,
    eta=None,
    tol: float = 1e-12,
) -> np.ndarray:
    """Orthonormal basis (N, p) of the stable subspace of the boundary symbol.

    For gamma > 0 the symbol has no purely imaginary spectrum and the basis is
    read off an ordered complex Schur form.  On the boundary gamma = 0 the
    subspace is the continuous extension: at hyperbolic frequencies it is the
    span of the incoming-mode kernels; elsewhere the Schur route is reused and
    SubspaceError is raised if an eigenvalue sits on the imaginary axis.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0.0:
        if hyperbolic_region_test(spec, tau, eta):
            beta = np.concatenate([[tau], np.atleast_1d(eta) if eta is not None else []])
            if not np.any(beta):
                raise SubspaceError("zeta = 0 has no stable subspace")
            table = phase_table(spec, beta)
            cols = [m.right for m in table.modes if m.incoming]
            if not cols:
                raise SubspaceError("no incoming modes at this hyperbolic frequency")
            Q, _ = np.linalg.qr(np.hstack(cols))
            if Q.shape[1] != spec.p:
                raise SubspaceError("incoming span has wrong dimension")
            return Q.astype(complex)
    M = boundary_symbol(spec, tau, gamma, eta)
    scale = max(1.0, float(np.max(np.abs(np.linalg.eigvals(M)))))
    T, Z, sdim = scipy.linalg.schur(M, output="complex", sort=lambda z: z.real < 0)
    ev = np.diag(T)
    if np.min(np.abs(ev.real)) < tol * scale:
        raise SubspaceError(
            "eigenvalue within tolerance of the imaginary axis: stable subspace ill-defined"
        )
    if sdim != spec.p:
        raise SubspaceError(f"stable dimension {sdim} != p = {spec.p}")
    return Z[:, :sdim]


@dataclass
class ScanResult:
    """Outcome of a uniform stability scan over the frequency half sphere."""

    min_sigma: float
    argmin: tuple
    n_samples: int
    skipped: list = field(default_factory=list)

    @property
    def uniformly_stable(self) -> bool:
        return self.min_sigma > 1e-8


def uniform_stability_scan(
    spec: SystemSpec,
    density: int = 64,
    rng: np.random.Generator | None = None,
) -> ScanResult:
    """Smallest singular value of B(0) restricted to the stable subspace,
    over the unit half sphere {|zeta| = 1, gamma >= 0} of boundary frequencies.

    For d = 1 the half sphere is the arc (tau, gamma) = (cos a, sin a),
    a in [0, pi], traversed on a uniform grid of `density` points plus both
    hyperbolic endpoints.  For d >= 2 the scan adds `density`^2 quasi-random
    points (seeded rng).  Frequencies where the subspace is ill-defined
    (glancing or axis-touching spectrum) are skipped and recorded.
    """
    samples = []
    if spec.d == 1:
        angles = np.linspace(0.0, np.pi, density + 2)
        for a in angles:
            gam = float(np.sin(a))
            samples.append((float(np.cos(a)), 0.0 if gam < 1e-14 else gam, None))
    else:
        rng = rng or np.random.default_rng(20260816)
        for a in np.linspace(0.05, np.pi - 0.05, density):
            for _ in range(max(1, density // 8)):
                direction = rng.normal(size=spec.d - 1)
                direction /= np.linalg.norm(direction)
                r = float(np.sin(a))
                samples.append((float(np.cos(a) * 1.0), 0.0, tuple(r * direction)))
        for k in range(density * density):
            v = rng.normal(size=spec.d + 1)
            v[-1] = abs(v[-1])
            v /= np.linalg.norm(v)
            samples.append((float(v[0]), float(v[-1]), tuple(v[1:-1])))

    best = np.inf
    arg = None
    skipped = []
    count = 0
    for tau, gamma, eta in samples:
        try:
            Q = stable_subspace(spec, tau, max(gamma, 0.0), eta)
        except (SubspaceError, GlancingError, SpecError) as err:
            skipped.append(((tau, gamma, eta), str(err)))
            continue
        count += 1
        sigma = np.linalg.svd(spec.B0 @ Q, compute_uv=False)[-1]
        if sigma < best:
            best = float(sigma)
            arg = (tau, gamma, eta)
    if skipped:
        warnings.warn(
            f"uniform stability scan skipped {len(skipped)} frequencies "
            "(glancing or axis-touching spectrum)",
            RuntimeWarning,
        )
    if count == 0:
        raise SubspaceError("stability scan found no admissible frequencies")
    return ScanResult(min_sigma=best, argmin=arg, n_samples=count, skipped=skipped)


# ---------------------------------------------------------------------------
# tangential normalized matrices (shared by the profile coefficients and the
# oscillatory operator)


def tangential_normalized(spec: SystemSpec) -> np.ndarray:
    """Atil[l] = A_d(0)^{-1} A_l(0) for the tangential slots l = 0 .. d-1
    (slot 0 is time, A_0 = I)."""
    N, d = spec.N, spec.d
    Adinv = np.linalg.inv(spec.Ad)
    out = np.empty((d, N, N))
    out[0] = Adinv
    for l in range(1, d):
        out[l] = Adinv @ spec.A[l - 1]
    return out


def oscillatory_symbol(spec: SystemSpec, beta) -> np.ndarray:
    """Atil(beta) = sum_l beta_l A_d^{-1} A_l(0); satisfies
    Atil(beta) r = -omega_m r on each mode kernel."""
    tau, eta = _split_beta(spec, beta)
    Atil = tangential_normalized(spec)
    M = tau * Atil[0]
    for j in range(spec.d - 1):
        M = M + eta[j] * Atil[j + 1]
    return M


def mode_speed_derivative(
    spec: SystemSpec,
    table: PhaseTable,
    m: int,
    w: np.ndarray,
    h: float = 1e-6,
) -> float:
    """Directional derivative of the root branch omega_m(v) at v = 0 along w.

    omega_m(v) is the eigenvalue branch of -A_d(v)^{-1}(tau I + sum eta A_j(v))
    that continues omega_m.  Central differences with projector-overlap branch
    tracking; used as an independent check of the within-mode coupling
    coefficients.
    """
    tau, eta = _split_beta(spec, table.beta)
    w = np.asarray(w, dtype=float)

    def omega_at(v):
        Av = spec.A_at(v)
        T = tau * np.eye(spec.N)
        for j in range(spec.d - 1):
            T = T + eta[j] * Av[j]
        W = -np.linalg.solve(Av[-1], T)
        return _branch_value(W, table.modes[m].proj, table.modes[m].mult)

    return (omega_at(h * w) - omega_at(-h * w)) / (2.0 * h)
