"""Riccati equations, H-infinity norm and two-Riccati H-infinity synthesis."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .lti import StateSpace, feedback, freq_response, is_hurwitz, lft_lower

log = logging.getLogger(__name__)

AXIS_TOL = 1e-8
REG_EPS = 1e-6


class RiccatiError(ArithmeticError):
    """No stabilizing Riccati solution exists."""


class UnstableSystemError(ArithmeticError):
    """The H-infinity norm of an unstable system is infinite."""


class InfeasibleError(ArithmeticError):
    """No H-infinity controller achieves any gamma in the requested range."""


@dataclass(frozen=True, eq=False)
class CareProblem:
    """``A'X + XA - (XB + S) R^-1 (B'X + S') + Q = 0``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        n = A.shape[0]
        B = np.asarray(self.B, float).reshape(n, -1)
        m = B.shape[1]
        Q = np.atleast_2d(np.asarray(self.Q, float))
        R = np.atleast_2d(np.asarray(self.R, float))
        S = np.zeros((n, m)) if self.S is None else np.asarray(self.S, float).reshape(n, m)
        if Q.shape != (n, n) or R.shape != (m, m):
            raise ValueError("CARE data dimensions are inconsistent")
        if np.abs(Q - Q.T).max(initial=0) > 1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be symmetric")
        if np.abs(R - R.T).max(initial=0) > 1e-12 * max(1.0, np.abs(R).max()):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        for name, val in zip("ABQRS", (A, B, Q, R, S)):
            object.__setattr__(self, name, val)


def _on_axis(ev: np.ndarray) -> np.ndarray:
    # relative to |lambda|: realizations mixing very slow and very fast modes
    # make any norm-relative threshold swallow genuine slow eigenvalues
    return np.abs(ev.real) <= AXIS_TOL * (1.0 + np.abs(ev))


def ric(H: np.ndarray) -> np.ndarray:
    """Stabilizing solution ``X = Ric(H)`` of a Hamiltonian matrix.

    Uses an ordered real Schur form to get the stable invariant subspace
    ``[X1; X2]`` and returns ``X2 X1^-1`` symmetrized.
    """
    n2 = H.shape[0]
    n = n2 // 2
    if n == 0:
        return np.zeros((0, 0))
    T, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    ev = np.linalg.eigvals(T)
    if np.any(_on_axis(ev)):
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis")
    if sdim != n:
        raise RiccatiError(f"Hamiltonian has {sdim} stable eigenvalues, expected {n}")
    X1, X2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(X1) > 1e14:
        raise RiccatiError("stable subspace is not complementary (X1 singular)")
    X = np.linalg.solve(X1.T, X2.T).T
    return (X + X.T) / 2


def solve_care(p: CareProblem) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation."""
    Ri = np.linalg.inv(p.R)
    Ar = p.A - p.B @ Ri @ p.S.T
    Qr = p.Q - p.S @ Ri @ p.S.T
    H = np.block([[Ar, -p.B @ Ri @ p.B.T], [-Qr, -Ar.T]])
    X = ric(H)
    K = Ri @ (p.B.T @ X + p.S.T)
    if not is_hurwitz(StateSpace(p.A - p.B @ K, p.B, np.zeros((0, p.A.shape[0])),
                                 np.zeros((0, p.B.shape[1]))))[0]:
        raise RiccatiError("Riccati solution is not stabilizing (pair not stabilizable?)")
    return X


def care_residual(p: CareProblem, X: np.ndarray) -> float:
    G = X @ p.B + p.S
    Res = p.A.T @ X + X @ p.A - G @ np.linalg.solve(p.R, G.T) + p.Q
    return float(np.linalg.norm(Res))


# ---------------------------------------------------------------------------
# H-infinity norm

def _sigma_max(sys: StateSpace, w: float) -> float:
    return float(np.linalg.norm(freq_response(sys, w), 2))


def _imag_axis_freqs(sys: StateSpace, gamma: float) -> np.ndarray:
    """Frequencies where ``gamma`` is a singular value of ``G(jw)``."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = gamma ** 2 * np.eye(D.shape[1]) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    H = np.block([[Ah, B @ Ri @ B.T],
                  [-C.T @ (np.eye(D.shape[0]) + D @ Ri @ D.T) @ C, -Ah.T]])
    ev = np.linalg.eigvals(H)
    axis = ev[_on_axis(ev)]
    return np.unique(np.round(np.abs(axis.imag), 12))


def hinf_norm(sys: StateSpace, tol: float = 1e-3) -> tuple[float, float]:
    """H-infinity norm of a stable system and the peak frequency.

    Bisection on ``gamma``; imaginary-axis eigenvalues of the gamma
    Hamiltonian locate frequencies whose singular values raise the lower
    bound, which usually ends the search in a few steps.
    """
    if not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")
    stable, absc = is_hurwitz(sys)
    if not stable:
        raise UnstableSystemError(f"system is not stable (spectral abscissa {absc:.3g})")
    dnorm = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if sys.nstates == 0 or sys.D.size == 0:
        return dnorm, np.inf
    # initial lower bound: DC, infinity and near the lightly damped poles
    cands = [0.0]
    for p in sys.poles():
        cands.append(abs(p.imag) if abs(p.imag) > 0 else abs(p))
    lo, wpk = dnorm, np.inf
    for w in cands:
        s = _sigma_max(sys, w)
        if s > lo:
            lo, wpk = s, w
    if lo == 0.0:
        return 0.0, 0.0
    rtol = tol / 10
    for _ in range(200):
        gam = lo * (1 + 2 * rtol)
        freqs = _imag_axis_freqs(sys, gam)
        if freqs.size == 0:
            return float((lo + gam) / 2), float(wpk)
        # lower bound update at the midpoints of crossing intervals
        pts = freqs if freqs.size == 1 else np.r_[freqs, (freqs[:-1] + freqs[1:]) / 2]
        improved = False
        for w in pts:
            s = _sigma_max(sys, w)
            if s > lo:
                lo, wpk, improved = s, w, True
        if not improved:
            # crossings found but no better sample: bisect upward
            lo_b, hi_b = gam, gam * 2
            while _imag_axis_freqs(sys, hi_b).size:
                hi_b *= 2
            while hi_b / lo_b > 1 + rtol:
                mid = np.sqrt(lo_b * hi_b)
                if _imag_axis_freqs(sys, mid).size:
                    lo_b = mid
                else:
                    hi_b = mid
            return float(np.sqrt(lo_b * hi_b)), float(wpk)
    return float(lo), float(wpk)


# ---------------------------------------------------------------------------
# H-infinity synthesis

@dataclass(frozen=True, eq=False)
class HinfResult:
    controller: StateSpace
    gamma: float
    iterations: int
    closed_loop_norm: float = float("nan")
    log: list = field(default_factory=list)


def _rank_ok(M: np.ndarray, full: str) -> bool:
    if M.size == 0:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    need = M.shape[1] if full == "col" else M.shape[0]
    return s.size >= need and s[need - 1] > 1e-8 * max(1.0, s[0])


@dataclass
class _Normalized:
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    R12i: np.ndarray
    R21i: np.ndarray


def _normalize(A, B1, B2, C1, C2, D11, D12, D21) -> _Normalized:
    """Rotate/scale so that ``D12 = [0; I]`` and ``D21 = [0, I]``."""
    m2 = D12.shape[1]
    p2 = D21.shape[0]
    U, s, Vt = np.linalg.svd(D12)
    theta12 = np.hstack([U[:, m2:], U[:, :m2]])
    R12 = np.diag(s[:m2]) @ Vt
    U, s, Vt = np.linalg.svd(D21)
    V = Vt.T
    theta21 = np.hstack([V[:, p2:], V[:, :p2]])
    R21 = U @ np.diag(s[:p2])
    R12i, R21i = np.linalg.inv(R12), np.linalg.inv(R21)
    return _Normalized(A, B1 @ theta21, B2 @ R12i, theta12.T @ C1, R21i @ C2,
                       theta12.T @ D11 @ theta21, R12i, R21i)


def _psd(X: np.ndarray) -> bool:
    if X.size == 0:
        return True
    return np.linalg.eigvalsh(X).min() >= -1e-9 * max(1.0, np.abs(X).max())


def _central_controller(nz: _Normalized, gamma: float):
    """Central controller at ``gamma`` or ``None`` if gamma is infeasible."""
    A, B1, B2, C1, C2, D11 = nz.A, nz.B1, nz.B2, nz.C1, nz.C2, nz.D11
    n = A.shape[0]
    p1, m1 = D11.shape
    m2, p2 = B2.shape[1], C2.shape[0]
    g2 = gamma ** 2
    D1111, D1112 = D11[:p1 - m2, :m1 - p2], D11[:p1 - m2, m1 - p2:]
    D1121, D1122 = D11[p1 - m2:, :m1 - p2], D11[p1 - m2:, m1 - p2:]
    row = np.hstack([D1111, D1112])
    col = np.vstack([D1111, D1121])
    bound = max(np.linalg.norm(row, 2) if row.size else 0.0,
                np.linalg.norm(col, 2) if col.size else 0.0)
    if gamma <= bound * (1 + 1e-9):
        return None
    D12 = np.vstack([np.zeros((p1 - m2, m2)), np.eye(m2)])
    D21 = np.hstack([np.zeros((p2, m1 - p2)), np.eye(p2)])
    B = np.hstack([B1, B2])
    C = np.vstack([C1, C2])
    D1d = np.hstack([D11, D12])
    Dd1 = np.vstack([D11, D21])
    R = D1d.T @ D1d - scipy.linalg.block_diag(g2 * np.eye(m1), np.zeros((m2, m2)))
    Rt = Dd1 @ Dd1.T - scipy.linalg.block_diag(g2 * np.eye(p1), np.zeros((p2, p2)))
    try:
        Ri = np.linalg.inv(R)
        Rti = np.linalg.inv(Rt)
        Hx = (np.block([[A, np.zeros((n, n))], [-C1.T @ C1, -A.T]])
              - np.vstack([B, -C1.T @ D1d]) @ Ri @ np.hstack([D1d.T @ C1, B.T]))
        Hy = (np.block([[A.T, np.zeros((n, n))], [-B1 @ B1.T, -A]])
              - np.vstack([C.T, -B1 @ Dd1.T]) @ Rti @ np.hstack([Dd1 @ B1.T, C]))
        X = ric(Hx)
        Y = ric(Hy)
    except (RiccatiError, np.linalg.LinAlgError):
        return None
    if not (_psd(X) and _psd(Y)):
        return None
    rho = np.max(np.abs(np.linalg.eigvals(X @ Y))) if n else 0.0
    if rho >= g2 * (1 - 1e-9):
        return None
    F = -Ri @ (D1d.T @ C1 + B.T @ X)
    L = -(B1 @ Dd1.T + Y @ C.T) @ Rti
    F12, F2 = F[m1 - p2:m1], F[m1:]
    L12, L2 = L[:, p1 - m2:p1], L[:, p1:]
    Z = np.linalg.inv(np.eye(n) - Y @ X / g2)

    Mi = np.linalg.inv(g2 * np.eye(p1 - m2) - D1111 @ D1111.T)
    Di11 = -D1121 @ D1111.T @ Mi @ D1112 - D1122
    Ni = np.linalg.inv(g2 * np.eye(m1 - p2) - D1111.T @ D1111)
    Di12 = np.linalg.cholesky(np.eye(m2) - D1121 @ Ni @ D1121.T)
    Di21 = np.linalg.cholesky(np.eye(p2) - D1112.T @ Mi @ D1112).T
    Bh2 = Z @ (B2 + L12) @ Di12
    Ch2 = -Di21 @ (C2 + F12)
    Bh1 = -Z @ L2 + Bh2 @ np.linalg.solve(Di12, Di11)
    Ch1 = F2 + Di11 @ np.linalg.solve(Di21, Ch2)
    Ah = A + B @ F + Bh1 @ np.linalg.solve(Di21, Ch2)
    return StateSpace(Ah, Bh1, Ch1, Di11), X, Y


def synthesize_hinf(p: StateSpace, n_meas: int, n_ctrl: int, gamma_range=None,
                    tol: float = 1e-3, max_iter: int = 60, certify: bool = True) -> HinfResult:
    """Full-order H-infinity controller by gamma bisection (central solution).

    ``p`` maps ``[w; u]`` to ``[z; y]`` with ``y`` the last ``n_meas`` outputs
    and ``u`` the last ``n_ctrl`` inputs. Rank-deficient ``D12``/``D21`` are
    padded with ``REG_EPS``-scaled channels.
    """
    ny, nu = p.shape
    p1, m1 = ny - n_meas, nu - n_ctrl
    A = p.A
    B1, B2 = p.B[:, :m1], p.B[:, m1:]
    C1, C2 = p.C[:p1], p.C[p1:]
    D11, D12 = p.D[:p1, :m1], p.D[:p1, m1:]
    D21, D22 = p.D[p1:, :m1], p.D[p1:, m1:]
    n = A.shape[0]
    if not _rank_ok(D12, "col"):
        log.debug("padding D12 with %g-scaled control penalty", REG_EPS)
        C1 = np.vstack([C1, np.zeros((n_ctrl, n))])
        D11 = np.vstack([D11, np.zeros((n_ctrl, D11.shape[1]))])
        D12 = np.vstack([D12, REG_EPS * np.eye(n_ctrl)])
    if not _rank_ok(D21, "row"):
        log.debug("padding D21 with %g-scaled sensor noise", REG_EPS)
        B1 = np.hstack([B1, np.zeros((n, n_meas))])
        D11 = np.hstack([D11, np.zeros((D11.shape[0], n_meas))])
        D21 = np.hstack([D21, REG_EPS * np.eye(n_meas)])
    if not (_rank_ok(D12, "col") and _rank_ok(D21, "row")):
        raise InfeasibleError("D12/D21 rank deficient beyond regularization")
    nz = _normalize(A, B1, B2, C1, C2, D11, D12, D21)
    p1n, m1n = nz.D11.shape
    m2, p2 = n_ctrl, n_meas
    D1111 = nz.D11[:p1n - m2, :m1n - p2]
    bound = max(np.linalg.norm(np.hstack([D1111, nz.D11[:p1n - m2, m1n - p2:]]), 2)
                if p1n > m2 else 0.0,
                np.linalg.norm(np.vstack([D1111, nz.D11[p1n - m2:, :m1n - p2]]), 2)
                if m1n > p2 else 0.0)

    def attempt(g):
        return _central_controller(nz, g)

    history = []
    if gamma_range is None:
        lo = max(bound * (1 + 1e-6), 1e-8)
        hi = max(2 * lo, 1.0)
        sol = attempt(hi)
        history.append((hi, sol is not None))
        while sol is None and hi < 1e12:
            lo, hi = hi, hi * 10
            sol = attempt(hi)
            history.append((hi, sol is not None))
    else:
        lo, hi = (float(g) for g in gamma_range)
        lo = max(lo, bound * (1 + 1e-9), 1e-12)
        sol = attempt(hi)
        history.append((hi, sol is not None))
    if sol is None:
        raise InfeasibleError(f"no stabilizing H-infinity controller with gamma <= {hi:g}")
    best, best_sol = hi, sol
    it = 0
    while best / lo > 1 + tol and it < max_iter:
        it += 1
        mid = np.sqrt(lo * best)
        s = attempt(mid)
        history.append((mid, s is not None))
        if s is None:
            lo = mid
        else:
            best, best_sol = mid, s
    Kt = best_sol[0]
    K = Kt.scaled(left=nz.R12i, right=nz.R21i)
    if np.any(D22):
        K = feedback(K, StateSpace.static(D22))
    cl_norm = float("nan")
    if certify:
        cl = lft_lower(p, K, n_meas, n_ctrl)
        stable, absc = is_hurwitz(cl)
        if not stable:
            raise InfeasibleError(
                f"controller at gamma={best:.6g} does not stabilize (abscissa {absc:.3g})")
        cl_norm = hinf_norm(cl, tol=min(tol, 1e-3))[0]
    return HinfResult(K, float(best), it, cl_norm, history)
