"""Continuous-time LTI algebra: realizations, interconnections and LFTs.

Every object here is an immutable value. Systems are dense ``(A, B, C, D)``
quadruples; transfer functions are coefficient lists in descending powers
of ``s``. Frequencies are in rad/s throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class LTIError(ValueError):
    """Invalid system data or incompatible dimensions."""


class PoleOnAxisError(LTIError):
    """``j*omega`` is (numerically) an eigenvalue of ``A``."""


class IllPosedError(LTIError):
    """A feedback interconnection has a singular algebraic loop."""


def _as_matrix(x, rows=None, cols=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Dense realization ``x' = Ax + Bu, y = Cx + Du``.

    A zero-state system is allowed and represents a static gain.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.array(self.D, dtype=float))
        ny, nu = D.shape
        A = np.array(self.A, dtype=float)
        nx = 0 if A.size == 0 else A.shape[0]
        A = A.reshape(nx, nx) if A.size == 0 else np.atleast_2d(A)
        B = np.array(self.B, dtype=float).reshape(nx, nu) if nx == 0 else np.atleast_2d(
            np.array(self.B, dtype=float))
        C = np.array(self.C, dtype=float).reshape(ny, nx) if nx == 0 else np.atleast_2d(
            np.array(self.C, dtype=float))
        if A.shape != (nx, nx):
            raise LTIError(f"A must be square, got {A.shape}")
        if B.shape != (nx, nu):
            raise LTIError(f"B must be {nx}x{nu}, got {B.shape}")
        if C.shape != (ny, nx):
            raise LTIError(f"C must be {ny}x{nx}, got {C.shape}")
        for name, arr in zip("ABCD", (A, B, C, D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def static(cls, gain) -> "StateSpace":
        D = np.atleast_2d(np.asarray(gain, dtype=float))
        ny, nu = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, nu)), np.zeros((ny, 0)), D)

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.D.shape[1]

    @property
    def noutputs(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.nstates else np.zeros(0, complex)

    def __call__(self, omega):
        return freq_response(self, omega)

    def __neg__(self) -> "StateSpace":
        return StateSpace(self.A, self.B, -self.C, -self.D)

    def scaled(self, left=None, right=None) -> "StateSpace":
        """Return ``left @ self @ right`` for constant matrices."""
        B, C, D = self.B, self.C, self.D
        if right is not None:
            right = _as_matrix(right)
            B, D = B @ right, D @ right
        if left is not None:
            left = _as_matrix(left)
            C, D = left @ C, left @ D
        return StateSpace(self.A, B, C, D)

    def select(self, outputs=None, inputs=None) -> "StateSpace":
        """Sub-system keeping the given output/input index lists."""
        outputs = np.arange(self.noutputs) if outputs is None else np.asarray(outputs, int)
        inputs = np.arange(self.ninputs) if inputs is None else np.asarray(inputs, int)
        return StateSpace(self.A, self.B[:, inputs], self.C[outputs, :],
                          self.D[np.ix_(outputs, inputs)])


@dataclass(frozen=True)
class RationalTF:
    """SISO proper rational function ``num(s)/den(s)``."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise LTIError("denominator is identically zero")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise LTIError(
                f"improper transfer function: deg(num)={num.size - 1} > deg(den)={den.size - 1}")
        object.__setattr__(self, "num", tuple(float(v) for v in num))
        object.__setattr__(self, "den", tuple(float(v) for v in den))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def dcgain(self) -> float:
        return self.num[-1] / self.den[-1] if self.den[-1] != 0 else np.inf

    def normalized(self) -> "RationalTF":
        """Same function with a monic denominator."""
        lead = self.den[0]
        return RationalTF(np.asarray(self.num) / lead, np.asarray(self.den) / lead)


@dataclass(frozen=True)
class TFMatrix:
    """Rectangular grid of :class:`RationalTF` entries."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(e if isinstance(e, RationalTF) else RationalTF(*_tf_args(e))
                           for e in row) for row in self.entries)
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise LTIError("TFMatrix entries must form a non-empty rectangle")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def diag(cls, tfs: Sequence[RationalTF]) -> "TFMatrix":
        n = len(tfs)
        zero = RationalTF([0.0], [1.0])
        return cls(tuple(tuple(tfs[i] if i == j else zero for j in range(n)) for i in range(n)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0])

    def __getitem__(self, ij) -> RationalTF:
        i, j = ij
        return self.entries[i][j]

    def __call__(self, s) -> np.ndarray:
        return np.array([[e(s) for e in row] for row in self.entries], dtype=complex)

    def to_ss(self) -> StateSpace:
        """Realize entrywise (non-minimal: order is the sum of entry orders)."""
        rows = [hstack([tf_to_ss(e) for e in row]) for row in self.entries]
        return vstack(rows)


def _tf_args(e):
    if np.isscalar(e):
        return ([float(e)], [1.0])
    return tuple(e)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing positive frequencies in rad/s."""

    points: np.ndarray = field(default_factory=lambda: np.logspace(-3, 4, 200))

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0 or np.any(pts <= 0) or np.any(np.diff(pts) <= 0):
            raise LTIError("frequency grid must be positive and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def logspace(cls, lo: float = 1e-3, hi: float = 1e4, n: int = 200) -> "FrequencyGrid":
        return cls(np.logspace(np.log10(lo), np.log10(hi), n))

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)


def default_grid() -> FrequencyGrid:
    return FrequencyGrid.logspace(1e-3, 1e4, 200)


# ---------------------------------------------------------------------------
# realizations

def tf_to_ss(g) -> StateSpace:
    """Controllable canonical realization of a proper SISO transfer function.

    >>> tf_to_ss(RationalTF([1], [1, 1])).A
    array([[-1.]])
    """
    if not isinstance(g, RationalTF):
        g = RationalTF(*_tf_args(g))
    g = g.normalized()
    den = np.asarray(g.den)
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - len(g.num)), g.num])
    d0 = num[0]
    if n == 0:
        return StateSpace.static([[d0]])
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (num[1:] - d0 * den[1:]).reshape(1, n)
    return StateSpace(A, B, C, [[d0]])


def ss_to_tf(sys: StateSpace, i: int = 0, j: int = 0) -> RationalTF:
    """Transfer function of one channel (via eigenvalues/invariant zeros)."""
    sub = sys.select([i], [j])
    if sub.nstates == 0:
        return RationalTF([sub.D[0, 0]], [1.0])
    den = np.real(np.poly(sub.A))
    # num(s) = det(sI - A + B C) - det(sI - A) + D det(sI - A)
    num = np.real(np.poly(sub.A - sub.B @ sub.C)) - den + sub.D[0, 0] * den
    return RationalTF(num, den)


def balanced(sys: StateSpace, sweeps: int = 20) -> StateSpace:
    """Diagonal state similarity equalizing row/column norms of ``[A B; C 0]``.

    Powers of two only, so the transformation is exact in floating point.
    """
    n = sys.nstates
    if n == 0:
        return sys
    A, B, C = sys.A.copy(), sys.B.copy(), sys.C.copy()
    t = np.ones(n)
    for _ in range(sweeps):
        done = True
        for i in range(n):
            r = np.linalg.norm(np.r_[np.delete(A[i], i), B[i]])
            c = np.linalg.norm(np.r_[np.delete(A[:, i], i), C[:, i]])
            if r == 0 or c == 0:
                continue
            f = 2.0 ** np.round(0.5 * np.log2(c / r))
            if f != 1.0:
                done = False
                A[i, :] *= f
                B[i, :] *= f
                A[:, i] /= f
                C[:, i] /= f
                t[i] *= f
        if done:
            break
    return StateSpace(A, B, C, sys.D)


def inverse(sys: StateSpace) -> StateSpace:
    """Inverse of a square system with invertible feedthrough."""
    if sys.noutputs != sys.ninputs:
        raise LTIError("only square systems can be inverted")
    try:
        Di = np.linalg.inv(sys.D)
    except np.linalg.LinAlgError as exc:
        raise LTIError("feedthrough is singular; system has no proper inverse") from exc
    return StateSpace(sys.A - sys.B @ Di @ sys.C, sys.B @ Di, -Di @ sys.C, Di)


# ---------------------------------------------------------------------------
# evaluation

def freq_response(sys: StateSpace, omega) -> np.ndarray:
    """``C (j omega I - A)^-1 B + D``.

    A scalar ``omega`` gives an ``(ny, nu)`` array; a vector gives
    ``(len(omega), ny, nu)``.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    if np.any(~np.isfinite(w)):
        raise LTIError("frequencies must be finite")
    out = np.empty((w.size,) + sys.shape, dtype=complex)
    n = sys.nstates
    if n == 0:
        out[:] = sys.D
        return out[0] if scalar else out
    eig = np.linalg.eigvals(sys.A)
    eye = np.eye(n)
    for k, wk in enumerate(w):
        if np.min(np.abs(eig - 1j * wk)) <= 1e-12 * (1.0 + abs(wk)):
            raise PoleOnAxisError(f"pole on the imaginary axis at omega={wk:g}")
        try:
            X = np.linalg.solve(1j * wk * eye - sys.A, sys.B)
        except np.linalg.LinAlgError as exc:
            raise PoleOnAxisError(f"singular (jwI - A) at omega={wk:g}") from exc
        out[k] = sys.C @ X + sys.D
    return out[0] if scalar else out


def spectral_abscissa(sys_or_A) -> float:
    A = sys_or_A.A if isinstance(sys_or_A, StateSpace) else np.atleast_2d(sys_or_A)
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(sys: StateSpace) -> tuple[bool, float]:
    """Return ``(stable, spectral abscissa)``."""
    a = spectral_abscissa(sys)
    return bool(a < 0), a


def dcgain(sys: StateSpace) -> np.ndarray:
    return freq_response(sys, 0.0).real


# ---------------------------------------------------------------------------
# interconnections

def blkdiag(systems: Iterable[StateSpace]) -> StateSpace:
    systems = list(systems)
    if not systems:
        raise LTIError("blkdiag needs at least one system")

    def bd(mats):
        rows = sum(m.shape[0] for m in mats)
        cols = sum(m.shape[1] for m in mats)
        out = np.zeros((rows, cols))
        r = c = 0
        for m in mats:
            out[r:r + m.shape[0], c:c + m.shape[1]] = m
            r, c = r + m.shape[0], c + m.shape[1]
        return out

    return StateSpace(bd([s.A for s in systems]), bd([s.B for s in systems]),
                      bd([s.C for s in systems]), bd([s.D for s in systems]))


def hstack(systems: Sequence[StateSpace]) -> StateSpace:
    """``y = G1 u1 + G2 u2 + ...`` (inputs concatenated, outputs summed)."""
    ny = systems[0].noutputs
    if any(s.noutputs != ny for s in systems):
        raise LTIError("hstack: output counts differ")
    d = blkdiag(systems)
    return StateSpace(d.A, d.B, np.hstack([s.C for s in systems]),
                      np.hstack([s.D for s in systems]))


def vstack(systems: Sequence[StateSpace]) -> StateSpace:
    """``[y1; y2; ...] = [G1; G2; ...] u`` (shared input)."""
    nu = systems[0].ninputs
    if any(s.ninputs != nu for s in systems):
        raise LTIError("vstack: input counts differ")
    d = blkdiag(systems)
    return StateSpace(d.A, np.vstack([s.B for s in systems]), d.C,
                      np.vstack([s.D for s in systems]))


def series(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """``g2 * g1``: the output of ``g1`` drives ``g2``."""
    if g1.noutputs != g2.ninputs:
        raise LTIError(f"series: g1 has {g1.noutputs} outputs, g2 has {g2.ninputs} inputs")
    n1, n2 = g1.nstates, g2.nstates
    A = np.block([[g1.A, np.zeros((n1, n2))], [g2.B @ g1.C, g2.A]])
    B = np.vstack([g1.B, g2.B @ g1.D])
    C = np.hstack([g2.D @ g1.C, g2.C])
    return StateSpace(A, B, C, g2.D @ g1.D)


def parallel(g1: StateSpace, g2: StateSpace) -> StateSpace:
    if g1.shape != g2.shape:
        raise LTIError(f"parallel: shapes {g1.shape} and {g2.shape} differ")
    d = blkdiag([g1, g2])
    return StateSpace(d.A, np.vstack([g1.B, g2.B]), np.hstack([g1.C, g2.C]), g1.D + g2.D)


def feedback(g1: StateSpace, g2: StateSpace | None = None) -> StateSpace:
    """Negative feedback ``g1 (I + g2 g1)^-1``; ``g2`` defaults to identity."""
    if g2 is None:
        g2 = StateSpace.static(np.eye(g1.noutputs))
    if g2.ninputs != g1.noutputs or g2.noutputs != g1.ninputs:
        raise LTIError("feedback: g2 must map g1's outputs back to its inputs")
    # plant with inputs [r; f], u1 = r - f, outputs [y1; y1]
    p = StateSpace(g1.A, np.hstack([g1.B, -g1.B]), np.vstack([g1.C, g1.C]),
                   np.block([[g1.D, -g1.D], [g1.D, -g1.D]]))
    return lft_lower(p, g2, g1.noutputs, g1.ninputs)


def interconnect(kind: str, g1: StateSpace, g2: StateSpace) -> StateSpace:
    ops = {"series": series, "parallel": parallel, "feedback": feedback}
    if kind not in ops:
        raise LTIError(f"unknown interconnection {kind!r}")
    return ops[kind](g1, g2)


def lft_lower(p: StateSpace, k: StateSpace, n_meas: int, n_ctrl: int) -> StateSpace:
    """Close ``u = K y`` around the last ``n_meas`` outputs / ``n_ctrl`` inputs."""
    ny, nu = p.shape
    if k.shape != (n_ctrl, n_meas):
        raise LTIError(f"controller must be {n_ctrl}x{n_meas}, got {k.shape}")
    if n_meas > ny or n_ctrl > nu:
        raise LTIError("controller channels exceed plant dimensions")
    p1 = ny - n_meas
    m1 = nu - n_ctrl
    B1, B2 = p.B[:, :m1], p.B[:, m1:]
    C1, C2 = p.C[:p1], p.C[p1:]
    D11, D12 = p.D[:p1, :m1], p.D[:p1, m1:]
    D21, D22 = p.D[p1:, :m1], p.D[p1:, m1:]
    E = np.eye(n_ctrl) - k.D @ D22
    if np.linalg.cond(E) > 1e12:
        raise IllPosedError("I - Dk D22 is singular; interconnection is ill-posed")
    R = np.linalg.inv(E)
    Ux, Uk, Uw = R @ k.D @ C2, R @ k.C, R @ k.D @ D21
    Yx, Yk, Yw = C2 + D22 @ Ux, D22 @ Uk, D21 + D22 @ Uw
    A = np.block([[p.A + B2 @ Ux, B2 @ Uk], [k.B @ Yx, k.A + k.B @ Yk]])
    B = np.vstack([B1 + B2 @ Uw, k.B @ Yw])
    C = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    return StateSpace(A, B, C, D11 + D12 @ Uw)


def lft_upper(p: StateSpace, delta, omega=None):
    """Close ``d = delta v`` around the first outputs ``v`` / inputs ``d``.

    ``delta`` is ``n_d x n_v``. With ``omega`` given, ``delta`` may be complex
    and the closed response ``M22 + M21 delta (I - M11 delta)^-1 M12`` is
    returned per frequency; otherwise ``delta`` must be real and a
    :class:`StateSpace` is returned. A singular loop raises
    :class:`IllPosedError`.
    """
    delta = np.atleast_2d(np.asarray(delta))
    n_d, n_v = delta.shape
    ny, nu = p.shape
    if n_v > ny or n_d > nu:
        raise LTIError("delta does not fit the plant's uncertainty channels")
    if omega is None:
        if np.iscomplexobj(delta) and np.any(delta.imag != 0):
            raise LTIError("state-space upper LFT requires a real delta")
        perm_out = np.r_[np.arange(n_v, ny), np.arange(n_v)]
        perm_in = np.r_[np.arange(n_d, nu), np.arange(n_d)]
        q = p.select(perm_out, perm_in)
        return lft_lower(q, StateSpace.static(delta.real), n_v, n_d)
    M = freq_response(p, omega)
    single = M.ndim == 2
    if single:
        M = M[None]
    out = np.empty((M.shape[0], ny - n_v, nu - n_d), dtype=complex)
    eye = np.eye(n_v)
    for k, Mk in enumerate(M):
        M11, M12 = Mk[:n_v, :n_d], Mk[:n_v, n_d:]
        M21, M22 = Mk[n_v:, :n_d], Mk[n_v:, n_d:]
        E = eye - M11 @ delta
        if np.linalg.cond(E) > 1e12:
            raise IllPosedError("det(I - M11 delta) = 0: delta destabilizes the loop")
        out[k] = M22 + M21 @ delta @ np.linalg.solve(E, M12)
    return out[0] if single else out
