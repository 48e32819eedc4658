"""Serial-robot dynamics, Jacobian interval bounds, PLDI and LFT wrapping.

The pipeline is::

    RobotModel --jacobian_bounds--> IntervalMatrixBounds --build_pldi--> PLDI
                                              |
                                              +--build_uncertain_plant--> UncertainPlant
    UncertainPlant + weights --augment--> generalized plant P (v, z, e | d, w, u)
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lti import RationalTF, StateSpace, TFMatrix, balanced, lft_upper
from .mu import DeltaStructure

log = logging.getLogger(__name__)


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# models

@dataclass(frozen=True, eq=False)
class RobotModel:
    """``M(q) q'' + C(q, q') q' + D q' + g(q) = u``.

    ``inertia``, ``coriolis`` and ``gravity`` must broadcast over leading
    batch dimensions: ``inertia(q)`` maps ``(..., m)`` to ``(..., m, m)``.
    ``q_domain``/``qd_domain``/``u_domain`` are ``(m, 2)`` interval arrays.
    """

    m: int
    inertia: Callable
    coriolis: Callable
    damping: np.ndarray
    q_domain: np.ndarray
    qd_domain: np.ndarray
    u_domain: np.ndarray
    gravity: Callable | None = None

    def __post_init__(self):
        m = self.m
        for name in ("q_domain", "qd_domain", "u_domain"):
            dom = np.array(getattr(self, name), dtype=float).reshape(m, 2)
            if np.any(dom[:, 0] > dom[:, 1]):
                raise ModelError(f"{name} has an empty interval")
            object.__setattr__(self, name, dom)
        D = np.array(self.damping, dtype=float).reshape(m, m)
        if np.abs(D - D.T).max() > 1e-12 or np.linalg.eigvalsh(D).min() < -1e-12:
            raise ModelError("damping must be symmetric positive semidefinite")
        object.__setattr__(self, "damping", D)

    @property
    def nx(self) -> int:
        return 2 * self.m

    def g(self, q):
        if self.gravity is None:
            return np.zeros(np.shape(q))
        return self.gravity(q)


@dataclass(frozen=True)
class TwoLinkParams:
    a1: float = 48.125
    a2: float = 13.125
    a3: float = 6.25

    def __post_init__(self):
        a1, a2, a3 = self.a1, self.a2, self.a3
        if not (a1 > 0 and a2 > 0 and a1 * a2 - a2 ** 2 - a3 ** 2 > 0):
            raise ModelError("2R parameters must satisfy a1, a2 > 0 and a1*a2 - a2^2 - a3^2 > 0")


def two_link(params: TwoLinkParams = TwoLinkParams(), q_domain=((-np.pi, np.pi),) * 2,
             qd_domain=((-1.5, 1.5),) * 2, u_domain=((-60.0, 60.0),) * 2,
             damping=np.zeros((2, 2))) -> RobotModel:
    """Planar 2R arm with gravity normal to the plane (``g = 0``)."""
    a1, a2, a3 = params.a1, params.a2, params.a3

    def inertia(q):
        q = np.asarray(q, float)
        c = np.cos(q[..., 1])
        M = np.empty(q.shape[:-1] + (2, 2))
        M[..., 0, 0] = a1 + 2 * a3 * c
        M[..., 0, 1] = M[..., 1, 0] = a2 + a3 * c
        M[..., 1, 1] = a2
        return M

    def coriolis(q, qd):
        q, qd = np.asarray(q, float), np.asarray(qd, float)
        h = a3 * np.sin(q[..., 1])
        C = np.empty(np.broadcast_shapes(q.shape, qd.shape)[:-1] + (2, 2))
        C[..., 0, 0] = -h * qd[..., 1]
        C[..., 0, 1] = -h * (qd[..., 0] + qd[..., 1])
        C[..., 1, 0] = h * qd[..., 0]
        C[..., 1, 1] = 0.0
        return C

    return RobotModel(2, inertia, coriolis, damping, q_domain, qd_domain, u_domain)


# ---------------------------------------------------------------------------
# dynamics

def _solve_inertia(model: RobotModel, q, rhs):
    M = model.inertia(q)
    if np.any(np.abs(np.linalg.det(M)) < 1e-12):
        raise ModelError("inertia matrix is singular")
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def dynamics_rhs(model: RobotModel, x, u):
    """State derivative of ``x = (q, q')`` under torque ``u`` (batched)."""
    x, u = np.asarray(x, float), np.asarray(u, float)
    m = model.m
    q, qd = x[..., :m], x[..., m:]
    C = model.coriolis(q, qd)
    Cqd = np.einsum("...ij,...j->...i", C, qd) + qd @ model.damping.T
    qdd = _solve_inertia(model, q, u - Cqd - model.g(q))
    return np.concatenate([qd, np.broadcast_to(qdd, np.broadcast_shapes(qd.shape, qdd.shape))],
                          axis=-1)


def input_affine_decompose(model: RobotModel, x):
    """Drift ``f0(x)`` and input matrix ``f(x) = [0; M^-1]``."""
    x = np.asarray(x, float)
    m = model.m
    f0 = dynamics_rhs(model, x, np.zeros(x.shape[:-1] + (m,)))
    Minv = np.linalg.inv(model.inertia(x[..., :m]))
    f = np.concatenate([np.zeros(Minv.shape), Minv], axis=-2)
    return f0, f


def state_jacobian(model: RobotModel, x, u, h: float = 1e-6):
    """``(df/dx, df/du)`` by central differences (batched over leading axes)."""
    x, u = np.asarray(x, float), np.asarray(u, float)
    nx = model.nx
    cols = []
    for k in range(nx):
        e = np.zeros(nx)
        e[k] = h
        cols.append((dynamics_rhs(model, x + e, u) - dynamics_rhs(model, x - e, u)) / (2 * h))
    Jx = np.stack(cols, axis=-1)
    Minv = np.linalg.inv(model.inertia(x[..., :model.m]))
    Ju = np.concatenate([np.zeros(Minv.shape), Minv], axis=-2)
    return Jx, Ju


# ---------------------------------------------------------------------------
# interval bounds and PLDI

@dataclass(frozen=True, eq=False)
class IntervalMatrixBounds:
    a_lo: np.ndarray
    a_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray

    def __post_init__(self):
        arrs = [np.array(getattr(self, k), float) for k in ("a_lo", "a_hi", "b_lo", "b_hi")]
        a_lo, a_hi, b_lo, b_hi = arrs
        if a_lo.shape != a_hi.shape or b_lo.shape != b_hi.shape or a_lo.shape[0] != b_lo.shape[0]:
            raise ModelError("interval bound shapes are inconsistent")
        if np.any(a_lo > a_hi) or np.any(b_lo > b_hi):
            raise ModelError("interval lower bounds exceed upper bounds")
        for k, v in zip(("a_lo", "a_hi", "b_lo", "b_hi"), arrs):
            object.__setattr__(self, k, v)

    @property
    def nx(self) -> int:
        return self.a_lo.shape[0]

    @property
    def nu(self) -> int:
        return self.b_lo.shape[1]

    def uncertain_entries(self) -> list[tuple[str, int, int]]:
        """Non-degenerate entries, A entries first, row-major."""
        out = [("A", i, j) for i, j in zip(*np.nonzero(self.a_hi > self.a_lo))]
        out += [("B", i, j) for i, j in zip(*np.nonzero(self.b_hi > self.b_lo))]
        return out

    def midpoint(self):
        return (self.a_lo + self.a_hi) / 2, (self.b_lo + self.b_hi) / 2

    def contains(self, A, B, tol: float = 0.0) -> bool:
        return bool(np.all(A >= self.a_lo - tol) and np.all(A <= self.a_hi + tol)
                    and np.all(B >= self.b_lo - tol) and np.all(B <= self.b_hi + tol))


PAPER_2R_INTERVALS = {
    ("A", 2, 1): (-19.127, 19.6402),
    ("A", 2, 2): (-1.58, 1.58),
    ("A", 2, 3): (-3.56, 3.56),
    ("A", 3, 1): (-13.9637, 28.2362),
    ("A", 3, 2): (-5.42, 5.42),
    ("A", 3, 3): (-3.95, 3.95),
    ("B", 2, 0): (0.0286, 0.0312),
    ("B", 2, 1): (-0.0461, -0.0164),
    ("B", 3, 0): (-0.0461, -0.0164),
    ("B", 3, 1): (0.0848, 0.144),
}


def kinematic_bounds(m: int, intervals: dict) -> IntervalMatrixBounds:
    """Bounds with exact kinematic rows ``q' = q'`` plus the given entries."""
    nx = 2 * m
    a_lo = np.zeros((nx, nx))
    a_lo[:m, m:] = np.eye(m)
    a_hi = a_lo.copy()
    b_lo = np.zeros((nx, m))
    b_hi = b_lo.copy()
    for (mat, i, j), (lo, hi) in intervals.items():
        tgt_lo, tgt_hi = (a_lo, a_hi) if mat == "A" else (b_lo, b_hi)
        tgt_lo[i, j], tgt_hi[i, j] = lo, hi
    return IntervalMatrixBounds(a_lo, a_hi, b_lo, b_hi)


def paper_2r_bounds() -> IntervalMatrixBounds:
    return kinematic_bounds(2, PAPER_2R_INTERVALS)


def _axis(lo, hi, n):
    return np.array([lo]) if hi == lo else np.linspace(lo, hi, n)


def _relevant_coords(model: RobotModel, rng) -> list[bool]:
    """Which state coordinates the Jacobian actually depends on (random probes)."""
    m = model.m
    dom = np.vstack([model.q_domain, model.qd_domain])
    lo, hi = dom[:, 0], dom[:, 1]
    ulo, uhi = model.u_domain[:, 0], model.u_domain[:, 1]
    x = lo + (hi - lo) * rng.random((16, 2 * m))
    u = ulo + (uhi - ulo) * rng.random((16, m))
    J0x, J0u = state_jacobian(model, x, u)
    flags = []
    for k in range(2 * m):
        x2 = x.copy()
        x2[:, k] = lo[k] + (hi[k] - lo[k]) * rng.random(16)
        J1x, J1u = state_jacobian(model, x2, u)
        scale = 1e-7 * (1 + np.abs(J0x).max())
        flags.append(bool(np.abs(J1x - J0x).max() > scale or np.abs(J1u - J0u).max() > 1e-9))
    return flags


def jacobian_bounds(model: RobotModel, density: int = 50, margin: float = 0.01,
                    chunk: int = 200_000) -> IntervalMatrixBounds:
    """Entrywise bounds of ``(df/dx, df/du)`` over the model's domain.

    Samples a tensor grid with ``density`` points per relevant state
    coordinate (coordinates the Jacobian does not depend on are pinned)
    and the vertices of the torque box, where the Jacobian is affine in
    ``u``. Each endpoint is pushed outward by ``margin`` of its magnitude;
    the kinematic rows are set exactly.
    """
    if density < 2:
        raise ModelError("density must be at least 2")
    m, nx = model.m, model.nx
    dom = np.vstack([model.q_domain, model.qd_domain])
    rng = np.random.default_rng(0)
    relevant = _relevant_coords(model, rng)
    axes = [_axis(lo, hi, density) if rel else np.array([(lo + hi) / 2])
            for (lo, hi), rel in zip(dom, relevant)]
    u_vertices = np.array(list(itertools.product(*[sorted({lo, hi}) for lo, hi in model.u_domain])))
    grid_sizes = [a.size for a in axes]
    total = int(np.prod(grid_sizes))
    log.debug("jacobian_bounds: %d state points x %d torque vertices", total, len(u_vertices))
    a_lo = np.full((nx, nx), np.inf)
    a_hi = np.full((nx, nx), -np.inf)
    b_lo = np.full((nx, m), np.inf)
    b_hi = np.full((nx, m), -np.inf)
    per = max(1, chunk // len(u_vertices))
    for start in range(0, total, per):
        idx = np.unravel_index(np.arange(start, min(total, start + per)), grid_sizes)
        x = np.stack([axes[k][idx[k]] for k in range(nx)], axis=-1)
        X = np.repeat(x, len(u_vertices), axis=0)
        U = np.tile(u_vertices, (len(x), 1))
        Jx, Ju = state_jacobian(model, X, U)
        a_lo = np.minimum(a_lo, Jx.min(axis=0))
        a_hi = np.maximum(a_hi, Jx.max(axis=0))
        b_lo = np.minimum(b_lo, Ju.min(axis=0))
        b_hi = np.maximum(b_hi, Ju.max(axis=0))
    # kinematic rows are exact; tiny finite-difference noise is collapsed
    a_lo[:m], a_hi[:m] = 0.0, 0.0
    a_lo[:m, m:] = a_hi[:m, m:] = np.eye(m)
    for lo, hi in ((a_lo, a_hi), (b_lo, b_hi)):
        flat = (hi - lo) <= 1e-7 * (1 + np.abs(hi) + np.abs(lo))
        mid = (lo + hi) / 2
        lo[flat], hi[flat] = mid[flat], mid[flat]
        lo[~flat] -= margin * np.abs(lo[~flat])
        hi[~flat] += margin * np.abs(hi[~flat])
    return IntervalMatrixBounds(a_lo, a_hi, b_lo, b_hi)


@dataclass(frozen=True, eq=False)
class PLDI:
    vertices: list
    C: np.ndarray
    signs: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.vertices)


def _output_matrix(nx: int) -> np.ndarray:
    m = nx // 2
    return np.hstack([np.eye(m), np.zeros((m, nx - m))])


def vertex_matrices(bounds: IntervalMatrixBounds, signs) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` with every uncertain entry at ``mid + sign * half``."""
    A, B = (M.copy() for M in bounds.midpoint())
    for (mat, i, j), s in zip(bounds.uncertain_entries(), signs):
        lo, hi = ((bounds.a_lo, bounds.a_hi) if mat == "A" else (bounds.b_lo, bounds.b_hi))
        tgt = A if mat == "A" else B
        tgt[i, j] = (lo[i, j] + hi[i, j]) / 2 + s * (hi[i, j] - lo[i, j]) / 2
    return A, B


def build_pldi(bounds: IntervalMatrixBounds, mode: str = "full", k: int | None = None,
               seed: int = 0, max_full: int = 20) -> PLDI:
    """Vertex systems of the interval hull.

    ``mode='full'`` enumerates all ``2**p`` endpoint combinations of the
    ``p`` non-degenerate entries; ``mode='sampled'`` draws ``k`` sign
    patterns from a seeded generator.
    """
    p = len(bounds.uncertain_entries())
    if mode == "full":
        if p > max_full:
            raise ModelError(f"{p} uncertain entries: 2**{p} vertices exceeds the guard")
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=p))).reshape(-1, p)
    elif mode == "sampled":
        if k is None or k < 1:
            raise ModelError("sampled mode needs k >= 1")
        rng = np.random.default_rng(seed)
        signs = rng.choice([-1.0, 1.0], size=(k, p))
    else:
        raise ModelError(f"unknown PLDI mode {mode!r}")
    verts = [vertex_matrices(bounds, s) for s in signs]
    return PLDI(verts, _output_matrix(bounds.nx), signs)


# ---------------------------------------------------------------------------
# LFT wrapping

@dataclass(frozen=True, eq=False)
class UncertainParameter:
    matrix: str
    row: int
    col: int
    midpoint: float
    half_width: float


@dataclass(frozen=True, eq=False)
class UncertainPlant:
    """Nominal plant plus the ``(v, d)`` channels carrying normalized deltas.

    ``uncertainty_map`` has inputs ``[d; u]`` and outputs ``[v; y]``;
    closing ``d = diag(delta) v`` reproduces the plant at ``delta``.
    """

    nominal: StateSpace
    uncertainty_map: StateSpace
    ds: DeltaStructure
    parameters: tuple
    bounds: IntervalMatrixBounds

    @property
    def n_delta(self) -> int:
        return len(self.parameters)

    def at(self, delta) -> StateSpace:
        """Plant ``u -> y`` for a real normalized ``delta`` vector."""
        delta = np.asarray(delta, float).ravel()
        if delta.size != self.n_delta:
            raise ModelError(f"expected {self.n_delta} deltas, got {delta.size}")
        if self.n_delta == 0:
            return self.nominal
        return lft_upper(self.uncertainty_map, np.diag(delta))


def build_uncertain_plant(bounds: IntervalMatrixBounds) -> UncertainPlant:
    """One real scalar block per uncertain entry, wired additively.

    Each entry ``mid + delta * half`` gets a channel pair with gain
    ``sqrt(half)`` on each side, so the delta loop injects exactly
    ``delta * half`` into that entry.
    """
    A0, B0 = bounds.midpoint()
    nx, nu = bounds.nx, bounds.nu
    C = _output_matrix(nx)
    ny = C.shape[0]
    entries = bounds.uncertain_entries()
    p = len(entries)
    Bd = np.zeros((nx, p))
    Cv = np.zeros((p, nx))
    Dvu = np.zeros((p, nu))
    params = []
    for k, (mat, i, j) in enumerate(entries):
        lo, hi = ((bounds.a_lo, bounds.a_hi) if mat == "A" else (bounds.b_lo, bounds.b_hi))
        mid, half = (lo[i, j] + hi[i, j]) / 2, (hi[i, j] - lo[i, j]) / 2
        r = np.sqrt(half)
        Bd[i, k] = r
        if mat == "A":
            Cv[k, j] = r
        else:
            Dvu[k, j] = r
        params.append(UncertainParameter(mat, int(i), int(j), float(mid), float(half)))
    nominal = StateSpace(A0, B0, C, np.zeros((ny, nu)))
    umap = StateSpace(A0, np.hstack([Bd, B0]), np.vstack([Cv, C]),
                      np.block([[np.zeros((p, p)), Dvu], [np.zeros((ny, p + nu))]]))
    ds = DeltaStructure.scalars(p) if p else DeltaStructure(())
    return UncertainPlant(nominal, umap, ds, tuple(params), bounds)


# ---------------------------------------------------------------------------
# weights and augmentation

@dataclass(frozen=True)
class WeightSpec:
    """Per-output mixed-sensitivity shape parameters."""

    M_S: tuple
    A_S: tuple
    omega_B: tuple
    M_T: tuple
    A_T: tuple
    omega_BT: tuple

    def __post_init__(self):
        vals = [tuple(float(v) for v in np.atleast_1d(getattr(self, k)))
                for k in ("M_S", "A_S", "omega_B", "M_T", "A_T", "omega_BT")]
        if len({len(v) for v in vals}) != 1:
            raise ModelError("weight parameter lists must have equal length")
        for k, v in zip(("M_S", "A_S", "omega_B", "M_T", "A_T", "omega_BT"), vals):
            object.__setattr__(self, k, v)
        for M, A, w in zip(self.M_S + self.M_T, self.A_S + self.A_T,
                           self.omega_B + self.omega_BT):
            if not (M >= 1 and 0 < A <= 1 and w > 0):
                raise ModelError(f"weight parameters need M >= 1, 0 < A <= 1, w > 0 "
                                 f"(got M={M}, A={A}, w={w})")
        for wb, wbt in zip(self.omega_B, self.omega_BT):
            if not wbt > 10 * wb:
                raise ModelError(f"omega_BT={wbt} must exceed 10 * omega_B={10 * wb}")

    @property
    def n(self) -> int:
        return len(self.M_S)


PAPER_2R_WEIGHTS = WeightSpec(M_S=(2, 3), A_S=(1e-2, 2e-2), omega_B=(0.5, 0.1),
                              M_T=(2.1, 3), A_T=(1e-2, 1e-2), omega_BT=(10, 12))


def sensitivity_weight(M: float, A: float, omega_b: float) -> RationalTF:
    """``(s/M + wb) / (s + wb*A)``: |1/W| is A at DC and M at high frequency."""
    return RationalTF([1.0 / M, omega_b], [1.0, omega_b * A])


def complementary_weight(M: float, A: float, omega_bt: float) -> RationalTF:
    """``(s + wbt) / (A s + wbt*M)``."""
    return RationalTF([1.0, omega_bt], [A, omega_bt * M])


def make_weights(spec: WeightSpec) -> tuple[TFMatrix, TFMatrix]:
    ws = [sensitivity_weight(M, A, w) for M, A, w in zip(spec.M_S, spec.A_S, spec.omega_B)]
    wt = [complementary_weight(M, A, w) for M, A, w in zip(spec.M_T, spec.A_T, spec.omega_BT)]
    return TFMatrix.diag(ws), TFMatrix.diag(wt)


def augment(g: UncertainPlant, W_S, W_T) -> StateSpace:
    """Generalized plant with outputs ``(v, z, e)`` and inputs ``(d, w, u)``.

    ``e = w - y`` is the tracking error fed to the controller,
    ``z = [W_S e; W_T y]``. Closing ``u = K e`` gives ``S`` from ``w`` to
    ``e`` and ``T`` from ``w`` to ``y``.
    """
    Ws = balanced(W_S.to_ss() if isinstance(W_S, TFMatrix) else W_S)
    Wt = balanced(W_T.to_ss() if isinstance(W_T, TFMatrix) else W_T)
    G = g.uncertainty_map
    p = g.n_delta
    ny = g.nominal.noutputs
    nu = g.nominal.ninputs
    if Ws.shape != (ny, ny) or Wt.shape != (ny, ny):
        raise ModelError(f"weights must be {ny}x{ny}, got {Ws.shape} and {Wt.shape}")
    A, Bd, Bu = G.A, G.B[:, :p], G.B[:, p:]
    Cv, Cy = G.C[:p], G.C[p:]
    Dvu = G.D[:p, p:]
    n, ns, nt = A.shape[0], Ws.nstates, Wt.nstates
    Z = np.zeros
    Aa = np.block([
        [A, Z((n, ns)), Z((n, nt))],
        [-Ws.B @ Cy, Ws.A, Z((ns, nt))],
        [Wt.B @ Cy, Z((nt, ns)), Wt.A],
    ])
    Ba = np.block([
        [Bd, Z((n, ny)), Bu],
        [Z((ns, p)), Ws.B, Z((ns, nu))],
        [Z((nt, p)), Z((nt, ny)), Z((nt, nu))],
    ])
    Ca = np.block([
        [Cv, Z((p, ns)), Z((p, nt))],
        [-Ws.D @ Cy, Ws.C, Z((ny, nt))],
        [Wt.D @ Cy, Z((ny, ns)), Wt.C],
        [-Cy, Z((ny, ns)), Z((ny, nt))],
    ])
    Da = np.block([
        [Z((p, p)), Z((p, ny)), Dvu],
        [Z((ny, p)), Ws.D, Z((ny, nu))],
        [Z((ny, p)), Z((ny, ny)), Z((ny, nu))],
        [Z((ny, p)), np.eye(ny), Z((ny, nu))],
    ])
    return StateSpace(Aa, Ba, Ca, Da)


def channel_sizes(g: UncertainPlant) -> dict:
    ny = g.nominal.noutputs
    return {"n_v": g.n_delta, "n_d": g.n_delta, "n_z": 2 * ny, "n_w": ny,
            "n_y": ny, "n_u": g.nominal.ninputs}


def performance_structure(g: UncertainPlant) -> DeltaStructure:
    """Uncertainty blocks plus the full performance block ``w <- z``."""
    ny = g.nominal.noutputs
    return g.ds.with_performance(ny, 2 * ny)
