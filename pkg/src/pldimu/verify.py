"""Robustness checks: vertex stability, Monte-Carlo envelopes, nonlinear simulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lti import FrequencyGrid, StateSpace, TFMatrix, default_grid, freq_response, is_hurwitz, \
    spectral_abscissa
from .robot import PLDI, RobotModel, UncertainPlant, dynamics_rhs

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class VerificationError(ValueError):
    pass


class SimulationDiverged(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# vertices

def _loop_matrix(A, B, C, k: StateSpace) -> np.ndarray:
    """State matrix of ``u = -K y`` around a strictly proper plant ``(A, B, C)``."""
    return np.block([[A - B @ k.D @ C, B @ k.C],
                     [-k.B @ C, k.A]])


@dataclass(frozen=True, eq=False)
class VertexReport:
    stable: np.ndarray
    abscissa: np.ndarray
    signs: np.ndarray

    @property
    def all_stable(self) -> bool:
        return bool(np.all(self.stable))

    @property
    def n_unstable(self) -> int:
        return int(np.sum(~self.stable))

    @property
    def worst(self) -> int:
        return int(np.argmax(self.abscissa))

    @property
    def worst_abscissa(self) -> float:
        return float(self.abscissa[self.worst])


def vertex_stability(k: StateSpace, pldi: PLDI) -> VertexReport:
    """Closed-loop Hurwitz test at every PLDI vertex (negative feedback)."""
    C = pldi.C
    if k.shape != (pldi.vertices[0][1].shape[1], C.shape[0]):
        raise VerificationError(f"controller is {k.shape}, plant needs "
                                f"{(pldi.vertices[0][1].shape[1], C.shape[0])}")
    absc = np.array([spectral_abscissa(_loop_matrix(A, B, C, k)) for A, B in pldi.vertices])
    signs = pldi.signs if pldi.signs is not None else np.zeros((len(pldi), 0))
    return VertexReport(absc < 0, absc, np.asarray(signs))


# ---------------------------------------------------------------------------
# Monte Carlo frequency envelopes

def _diag_mag(W: TFMatrix, w: np.ndarray) -> np.ndarray:
    n = W.shape[0]
    return np.column_stack([np.abs(W[i, i](1j * w)) for i in range(n)])


@dataclass(frozen=True, eq=False)
class EnvelopeReport:
    """Pointwise maxima of ``|S_ij|``, ``|T_ij|`` over the nominal loop and the samples.

    ``s_curves``/``t_curves`` hold every stable loop's magnitudes (nominal
    first) with shape ``(loops, freqs, ny, ny)``; the envelopes are their
    pointwise maxima. Templates are ``|1/W_S|`` and ``|1/W_T|`` per channel.
    """

    grid: FrequencyGrid
    s_curves: np.ndarray
    t_curves: np.ndarray
    s_template: np.ndarray
    t_template: np.ndarray
    deltas: np.ndarray
    seed: int
    unstable: tuple = ()

    @property
    def n_samples(self) -> int:
        return len(self.deltas)

    @property
    def s_envelope(self) -> np.ndarray:
        return self.s_curves.max(axis=0)

    @property
    def t_envelope(self) -> np.ndarray:
        return self.t_curves.max(axis=0)

    def channel_ratios(self) -> tuple[np.ndarray, np.ndarray]:
        """``envelope / template`` on the diagonal channels, shape ``(freqs, ny)``."""
        s = np.diagonal(self.s_envelope, axis1=1, axis2=2) / self.s_template
        t = np.diagonal(self.t_envelope, axis1=1, axis2=2) / self.t_template
        return s, t

    @property
    def margin_db(self) -> float:
        s, t = self.channel_ratios()
        return float(-20 * np.log10(max(s.max(), t.max())))


def monte_carlo_freq(k: StateSpace, up: UncertainPlant, n: int, seed: int, W_S: TFMatrix,
                     W_T: TFMatrix, grid: FrequencyGrid | None = None) -> EnvelopeReport:
    """Sample ``n`` deltas uniformly in ``[-1, 1]^p`` and collect ``S``, ``T``.

    The nominal loop is always included. Unstable sampled loops are not
    part of the envelopes; their deltas are listed in ``unstable``.
    """
    if n < 0:
        raise VerificationError("sample count must be nonnegative")
    grid = grid or default_grid()
    w = grid.points
    rng = np.random.default_rng(seed)
    deltas = rng.uniform(-1.0, 1.0, size=(n, up.n_delta))
    ny = up.nominal.noutputs
    eye = np.eye(ny)
    Kw = freq_response(k, w)
    s_curves, t_curves, unstable = [], [], []
    for idx, delta in enumerate([None] + list(deltas)):
        G = up.nominal if delta is None else up.at(delta)
        stable, absc = is_hurwitz(StateSpace(_loop_matrix(G.A, G.B, G.C, k),
                                             np.zeros((G.nstates + k.nstates, 1)),
                                             np.zeros((1, G.nstates + k.nstates)), [[0.0]]))
        if not stable:
            if delta is None:
                raise VerificationError(f"controller does not stabilize the nominal plant "
                                        f"(abscissa {absc:.3g})")
            unstable.append(delta)
            continue
        # open-loop plant poles may sit on the axis: evaluate G through its resolvent directly
        Gw = plant_response(G, w)
        S = np.linalg.inv(eye + Gw @ Kw)
        s_curves.append(np.abs(S))
        t_curves.append(np.abs(eye - S))
    return EnvelopeReport(grid, np.array(s_curves), np.array(t_curves),
                          1.0 / _diag_mag(W_S, w), 1.0 / _diag_mag(W_T, w), deltas, seed,
                          tuple(unstable))


def plant_response(G: StateSpace, w: np.ndarray) -> np.ndarray:
    n = G.nstates
    out = np.empty((w.size, G.noutputs, G.ninputs), complex)
    for i, wk in enumerate(w):
        out[i] = G.C @ np.linalg.solve(1j * wk * np.eye(n) - G.A, G.B) + G.D
    return out


@dataclass(frozen=True)
class WeightCheck:
    passed: bool
    worst_frequency: float
    worst_ratio: float
    worst_function: str
    worst_channel: int


def check_weight_bounds(report: EnvelopeReport, slack: float = 1.0) -> WeightCheck:
    """Pass iff every channel envelope sits below ``slack`` times its template.

    Unstable samples fail the check outright (ratio ``inf``).
    """
    s, t = report.channel_ratios()
    if report.unstable:
        return WeightCheck(False, float("nan"), float("inf"), "unstable", -1)
    both = np.stack([s, t])
    f, i, c = np.unravel_index(int(np.argmax(both)), both.shape)
    ratio = float(both[f, i, c])
    return WeightCheck(ratio <= slack, float(report.grid.points[i]), ratio, "ST"[f], int(c))


# ---------------------------------------------------------------------------
# time simulation

@dataclass(frozen=True, eq=False)
class SimTrace:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    xk: np.ndarray = field(default=None)

    @property
    def error(self) -> np.ndarray:
        return self.r - self.y


def step_reference(amplitude) -> Callable:
    amp = np.asarray(amplitude, float)
    return lambda t: amp


def simulate_closed_loop(model: RobotModel, k: StateSpace, r, t_end: float, dt: float = 1e-3,
                         x0=None) -> SimTrace:
    """Fixed-step RK4 of the nonlinear arm in feedback with an LTI controller.

    ``r`` is a constant reference vector or a callable ``t -> r(t)``. The
    controller sees ``e = r - q`` and its state is integrated with the arm.
    """
    if dt <= 0 or t_end <= 0:
        raise VerificationError("t_end and dt must be positive")
    if dt > 1e-3 * t_end * (1 + 1e-9):
        raise VerificationError(f"dt={dt} exceeds 1e-3 * t_end")
    m = model.m
    if k.shape != (m, m):
        raise VerificationError(f"controller is {k.shape}, arm needs {(m, m)}")
    ref = r if callable(r) else step_reference(r)
    nx, nk = model.nx, k.nstates
    x = np.zeros(nx) if x0 is None else np.asarray(x0, float).copy()
    z = np.concatenate([x, np.zeros(nk)])
    steps = int(round(t_end / dt))

    def torque(t, z):
        e = ref(t) - z[:m]
        return k.C @ z[nx:] + k.D @ e, e

    def rhs(t, z):
        u, e = torque(t, z)
        return np.concatenate([dynamics_rhs(model, z[:nx], u), k.A @ z[nx:] + k.B @ e])

    ts = dt * np.arange(steps + 1)
    Z = np.empty((steps + 1, nx + nk))
    U = np.empty((steps + 1, m))
    R = np.empty((steps + 1, m))
    Z[0] = z
    for i in range(steps):
        t = ts[i]
        k1 = rhs(t, z)
        k2 = rhs(t + dt / 2, z + dt / 2 * k1)
        k3 = rhs(t + dt / 2, z + dt / 2 * k2)
        k4 = rhs(t + dt, z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > DIVERGENCE_LIMIT:
            raise SimulationDiverged(f"state norm exceeded {DIVERGENCE_LIMIT:g} "
                                     f"at t={ts[i + 1]:.4g} s")
        Z[i + 1] = z
    for i, t in enumerate(ts):
        R[i] = ref(t)
        U[i] = torque(t, Z[i])[0]
    return SimTrace(ts, Z[:, :nx], U, Z[:, :m].copy(), R, Z[:, nx:])
