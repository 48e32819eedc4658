"""Structured singular value upper bounds, D-scale fitting and D-K iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .lti import FrequencyGrid, LTIError, RationalTF, StateSpace, TFMatrix, default_grid, \
    freq_response, is_hurwitz

log = logging.getLogger(__name__)


class MuError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    """One uncertainty block.

    ``rows x cols`` is the shape of the block itself (it maps ``cols``
    outputs of ``M`` back to ``rows`` inputs of ``M``). A repeated scalar
    block ``delta * I_n`` has ``rows == cols == n``.
    """

    kind: str
    rows: int
    cols: int
    real: bool = False

    def __post_init__(self):
        if self.kind not in ("scalar", "full"):
            raise MuError(f"unknown block kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise MuError("block dimensions must be positive")
        if self.kind == "scalar" and self.rows != self.cols:
            raise MuError("repeated scalar blocks are square")


@dataclass(frozen=True)
class DeltaStructure:
    blocks: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @classmethod
    def scalars(cls, n: int, real: bool = True) -> "DeltaStructure":
        return cls(tuple(Block("scalar", 1, 1, real) for _ in range(n)))

    def with_performance(self, rows: int, cols: int) -> "DeltaStructure":
        return DeltaStructure(self.blocks + (Block("full", rows, cols, False),))

    def __len__(self):
        return len(self.blocks)

    @property
    def n_in(self) -> int:
        """Number of ``M`` inputs (sum of block rows)."""
        return sum(b.rows for b in self.blocks)

    @property
    def n_out(self) -> int:
        """Number of ``M`` outputs (sum of block columns)."""
        return sum(b.cols for b in self.blocks)

    def index_maps(self):
        """Per-block output (row of M) and input (column of M) indices."""
        outs, ins = [], []
        r = c = 0
        for b in self.blocks:
            outs.append(np.arange(r, r + b.cols))
            ins.append(np.arange(c, c + b.rows))
            r += b.cols
            c += b.rows
        return outs, ins

    def expand(self, d):
        """Left/right diagonal scalings for per-block scalars ``d``."""
        d = np.asarray(d, float)
        left = np.concatenate([np.full(b.cols, dk) for b, dk in zip(self.blocks, d)])
        right = np.concatenate([np.full(b.rows, dk) for b, dk in zip(self.blocks, d)])
        return left, right

    def random_delta(self, rng, complex_: bool = True) -> np.ndarray:
        """Random member with unit-norm blocks (used by tests)."""
        out = np.zeros((self.n_in, self.n_out), complex)
        outs, ins = self.index_maps()
        for b, o, i in zip(self.blocks, outs, ins):
            if b.kind == "scalar":
                if complex_ and not b.real:
                    z = np.exp(2j * np.pi * rng.random())
                else:
                    z = rng.choice([-1, 1])
                out[np.ix_(i, o)] = z * np.eye(b.rows)
            else:
                X = rng.normal(size=(b.rows, b.cols)) + 1j * rng.normal(size=(b.rows, b.cols))
                out[np.ix_(i, o)] = X / np.linalg.norm(X, 2)
        return out


# ---------------------------------------------------------------------------
# per-frequency upper bound

def _scaled_sigma(M, x, outs, ins, nb):
    """sigma_max(D_L M D_R^-1) and its gradient w.r.t. log-scalings ``x``."""
    lx = np.empty(M.shape[0])
    rx = np.empty(M.shape[1])
    for k in range(nb):
        lx[outs[k]] = x[k]
        rx[ins[k]] = x[k]
    N = np.exp(lx)[:, None] * M * np.exp(-rx)[None, :]
    U, s, Vh = np.linalg.svd(N)
    u = np.abs(U[:, 0]) ** 2
    v = np.abs(Vh[0]) ** 2
    g = np.array([s[0] * (u[outs[k]].sum() - v[ins[k]].sum()) for k in range(nb)])
    return s[0], g


def _osborne_init(M, outs, ins, nb, sweeps=8):
    N = np.array([[np.linalg.norm(M[np.ix_(outs[k], ins[l])]) for l in range(nb)]
                  for k in range(nb)])
    np.fill_diagonal(N, 0.0)
    d = np.ones(nb)
    for _ in range(sweeps):
        for k in range(nb - 1):
            col = np.sum((N[:, k] * d) ** 2)      # into block k (scaled by 1/d_k)
            row = np.sum((N[k, :] / d) ** 2)      # out of block k (scaled by d_k)
            if col > 0 and row > 0:
                d[k] = (col / row) ** 0.25
        d /= d[-1]
    return np.log(d)


def mu_upper_at(m, ds: DeltaStructure, x0=None, tol: float = 1e-4):
    """D-scaled upper bound ``inf_D sigma_max(D M D^-1)`` for one matrix.

    Scalings are one positive scalar per block (times identity), the last
    block being the reference (``d = 1``). Returns ``(mu_bar, d)``.

    Real scalar blocks are bounded with the complex bound, which is valid
    but conservative.
    """
    M = np.atleast_2d(np.asarray(m, complex))
    if M.shape != (ds.n_out, ds.n_in):
        raise MuError(f"matrix is {M.shape}, structure needs {(ds.n_out, ds.n_in)}")
    nb = len(ds)
    smax = np.linalg.norm(M, 2) if M.size else 0.0
    if nb <= 1 or smax == 0.0:
        return float(smax), np.ones(nb)
    outs, ins = ds.index_maps()
    free = nb - 1

    def f(y):
        x = np.append(y, 0.0)
        s, g = _scaled_sigma(M, x, outs, ins, nb)
        return s, g[:free]

    starts = [np.zeros(free), _osborne_init(M, outs, ins, nb)[:free]]
    if x0 is not None:
        starts.append(np.log(np.asarray(x0, float)[:free] / np.asarray(x0, float)[-1]))
    best_y, best_f = None, np.inf
    for y0 in starts:
        val = f(y0)[0]
        if val < best_f:
            best_y, best_f = y0, val
    res = scipy.optimize.minimize(f, best_y, jac=True, method="BFGS",
                                  options={"gtol": 1e-7 * best_f, "maxiter": 100})
    if res.fun < best_f:
        best_y, best_f = res.x, res.fun
    if not res.success:
        # nonsmooth kink stalled the line search; finish derivative-free
        best_y, best_f = _coordinate_polish(f, best_y, best_f, tol)
    d = np.exp(np.append(best_y, 0.0))
    return float(min(best_f, smax)), d


def _coordinate_polish(f, y, fy, tol, step=1.0, sweeps=30):
    """Golden-section coordinate descent in log-scalings."""
    gr = (np.sqrt(5) - 1) / 2
    for _ in range(sweeps):
        start = fy
        for k in range(y.size):
            def fk(t):
                z = y.copy()
                z[k] = t
                return f(z)[0]
            a, b = y[k] - step, y[k] + step
            c, d = b - gr * (b - a), a + gr * (b - a)
            fc, fd = fk(c), fk(d)
            while b - a > 1e-6:
                if fc < fd:
                    b, d, fd = d, c, fc
                    c = b - gr * (b - a)
                    fc = fk(c)
                else:
                    a, c, fc = c, d, fd
                    d = a + gr * (b - a)
                    fd = fk(d)
            t = (a + b) / 2
            ft = fk(t)
            if ft < fy:
                y = y.copy()
                y[k] = t
                fy = ft
        step = max(step / 2, 1e-3)
        if start - fy <= tol * fy:
            break
    return y, fy


# ---------------------------------------------------------------------------
# frequency sweeps

@dataclass(frozen=True, eq=False)
class MuCurve:
    grid: FrequencyGrid
    upper: np.ndarray
    dscales: np.ndarray
    stable: bool = True
    abscissa: float = float("nan")

    @property
    def peak(self) -> float:
        return float(np.max(self.upper)) if self.upper.size else 0.0

    @property
    def peak_frequency(self) -> float:
        return float(self.grid.points[int(np.argmax(self.upper))])


def mu_upper_curve(closed: StateSpace, ds: DeltaStructure, grid: FrequencyGrid | None = None,
                   warm: np.ndarray | None = None) -> MuCurve:
    """Per-frequency upper bound of a stable closed loop.

    An unstable closed loop yields an infinite curve (``stable=False``)
    rather than an exception: the robustness verdict is simply negative.
    """
    grid = grid or default_grid()
    stable, absc = is_hurwitz(closed)
    nb = len(ds)
    if not stable:
        return MuCurve(grid, np.full(len(grid), np.inf), np.ones((len(grid), nb)), False, absc)
    Ms = freq_response(closed, grid.points)
    upper = np.empty(len(grid))
    dsc = np.empty((len(grid), nb))
    prev = None
    for k, M in enumerate(Ms):
        x0 = warm[k] if warm is not None else prev
        upper[k], dsc[k] = mu_upper_at(M, ds, x0)
        prev = dsc[k]
    return MuCurve(grid, upper, dsc, True, absc)


# ---------------------------------------------------------------------------
# rational D-scale fitting

def _logmag_real_pz(theta, w, order):
    logk = theta[0]
    z = np.exp(theta[1:1 + order])
    p = np.exp(theta[1 + order:])
    jw = 1j * w[:, None]
    return logk + np.sum(np.log(np.abs(jw + z)) - np.log(np.abs(jw + p)), axis=1)


def fit_dscale(samples, grid, order: int = 2, weights=None) -> RationalTF:
    """Stable, minimum-phase, biproper fit of positive magnitude samples.

    The fit has the form ``k * prod (s + z_i) / (s + p_i)`` with positive
    real ``z_i, p_i`` and minimizes the (weighted) squared log-magnitude
    error. ``order=0`` returns the weighted geometric mean.
    """
    d = np.asarray(samples, float).ravel()
    w = grid.points if isinstance(grid, FrequencyGrid) else np.asarray(grid, float).ravel()
    if d.shape != w.shape:
        raise MuError("samples and grid lengths differ")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise MuError("D-scale samples must be positive and finite")
    if not 0 <= order <= 4:
        raise MuError("D-scale fit order must be between 0 and 4")
    wt = np.ones_like(d) if weights is None else np.asarray(weights, float).ravel()
    logd = np.log(d)
    logk0 = float(np.sum(wt * logd) / np.sum(wt))
    if order == 0 or np.ptp(logd) < 1e-9:
        return RationalTF([np.exp(logk0)], [1.0])
    sw = np.sqrt(wt)
    lo, hi = np.log(w[0]), np.log(w[-1])
    best = None
    for spread in (0.25, 0.5, 0.75):
        c = lo + (hi - lo) * np.linspace(0.5 - spread / 2, 0.5 + spread / 2, order)
        for sgn in (1.0, -1.0):
            th0 = np.r_[logk0, c + sgn * 0.5, c - sgn * 0.5]
            res = scipy.optimize.least_squares(
                lambda th: sw * (_logmag_real_pz(th, w, order) - logd), th0,
                bounds=(np.r_[-np.inf, np.full(2 * order, lo - 6)],
                        np.r_[np.inf, np.full(2 * order, hi + 6)]))
            if best is None or res.cost < best.cost:
                best = res
    th = best.x
    k = np.exp(th[0])
    z = np.exp(th[1:1 + order])
    p = np.exp(th[1 + order:])
    return RationalTF(k * np.real(np.poly(-z)), np.real(np.poly(-p)))


def dscale_system(fits, ds: DeltaStructure, n_extra_out: int, n_extra_in: int,
                  inverse_side: bool) -> StateSpace:
    """Diagonal scaling system for the uncertainty channels.

    Output side (``inverse_side=False``) uses ``D_i(s) I`` on each block's
    ``M`` outputs; input side uses ``D_i(s)^-1 I`` on the block's inputs.
    The trailing performance block and the controller channels get
    identity.
    """
    from .lti import blkdiag, inverse, tf_to_ss

    parts = []
    for b, f in zip(ds.blocks, fits):
        s = tf_to_ss(f)
        if inverse_side:
            s = inverse(s)
        n = b.rows if inverse_side else b.cols
        parts.extend([s] * n)
    parts.append(StateSpace.static(np.eye(n_extra_in if inverse_side else n_extra_out)))
    return blkdiag(parts)


def scale_plant(p: StateSpace, ds: DeltaStructure, fits, n_meas: int, n_ctrl: int) -> StateSpace:
    """``diag(D, I) P diag(D^-1, I)`` with ``D`` from the fitted scalings.

    ``ds`` here lists only the uncertainty blocks that get dynamic scalings;
    the remaining outputs/inputs (performance and controller) pass through.
    """
    from .lti import balanced, series

    n_out_rest = p.noutputs - ds.n_out
    n_in_rest = p.ninputs - ds.n_in
    left = dscale_system(fits, ds, n_out_rest, 0, False)
    right = dscale_system(fits, ds, 0, n_in_rest, True)
    return balanced(series(series(right, p), left))


# ---------------------------------------------------------------------------
# synthesis drivers

@dataclass(frozen=True, eq=False)
class SynthesisReport:
    """Outcome of a mu-synthesis run.

    ``mu_history`` has one entry per iteration (``inf`` for unstable
    loops); ``accepted`` lists the iterations that improved the best peak.
    """

    controller: StateSpace
    mu_peak: float
    curve: MuCurve
    gamma_history: tuple = ()
    mu_history: tuple = ()
    accepted: tuple = ()
    iterations: int = 0
    log: tuple = ()
    structured: TFMatrix | None = None

    @property
    def verdict(self) -> str:
        return "robust" if self.curve.stable and self.mu_peak < 1.0 else "not robust"

    @property
    def accepted_peaks(self) -> tuple:
        return tuple(self.mu_history[i] for i in self.accepted)


@dataclass(frozen=True, eq=False)
class DKOptions:
    max_iter: int = 30
    tol: float = 1e-3
    patience: int = 5
    order: int = 2
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid.logspace(1e-3, 1e4, 120))
    gamma_tol: float = 1e-2
    floor: float = 1e-3
    seed: int = 0


def _uncertainty_part(ds: DeltaStructure) -> DeltaStructure:
    return DeltaStructure(ds.blocks[:-1])


def dk_iterate(p: StateSpace, ds: DeltaStructure, n_meas: int, n_ctrl: int,
               opts: DKOptions | None = None) -> SynthesisReport:
    """D-K iteration on an augmented plant.

    ``ds`` is the full structure: uncertainty blocks followed by the
    performance block, matching the first inputs/outputs of ``p``. Each
    round synthesizes a central H-infinity controller for the D-scaled
    plant, evaluates the upper bound of the unscaled closed loop and refits
    the D-scales (weighted towards frequencies near the peak).

    The loop stops after ``patience`` consecutive rounds that fail to lower
    the best peak by at least ``tol``; the best controller is returned.
    """
    from .lti import lft_lower
    from .riccati import InfeasibleError, RiccatiError, synthesize_hinf

    opts = opts or DKOptions()
    unc = _uncertainty_part(ds)
    fits = [RationalTF([1.0], [1.0])] * len(unc)
    best = None
    gammas, mus, accepted, notes = [], [], [], []
    stale = fails = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        pd = scale_plant(p, unc, fits, n_meas, n_ctrl) if len(unc) else p
        try:
            res = synthesize_hinf(pd, n_meas, n_ctrl, tol=opts.gamma_tol, certify=False)
        except (InfeasibleError, RiccatiError, LTIError) as exc:
            notes.append(f"iteration {it}: synthesis failed ({exc})")
            log.warning("D-K iteration %d: synthesis failed: %s", it, exc)
            res, curve = None, None
            gammas.append(np.nan)
            mus.append(np.inf)
        else:
            cl = lft_lower(p, res.controller, n_meas, n_ctrl)
            curve = mu_upper_curve(cl, ds, opts.grid)
            gammas.append(res.gamma)
            mus.append(curve.peak)
            log.info("D-K %d: gamma %.4g mu %.4g at %.3g rad/s", it, res.gamma, curve.peak,
                     curve.peak_frequency if curve.stable else float("nan"))
        prev = best[1].peak if best else np.inf
        if curve is not None and curve.peak < prev:
            best = (res.controller, curve)
            accepted.append(it - 1)
        stale = stale + 1 if mus[-1] > prev - opts.tol else 0
        if not len(unc) or stale >= opts.patience:
            break
        if curve is not None and curve.stable:
            src, order, fails = curve, opts.order, 0
        elif best is None:
            notes.append(f"iteration {it}: no stabilizing controller to start from")
            break
        else:
            # refit the best D-scales with a lower order; high-order fits can
            # make the scaled synthesis numerically fragile
            fails += 1
            src, order = best[1], max(opts.order - fails, 0)
            notes.append(f"iteration {it}: refitting the best D-scales with order {order}")
        wts = (src.upper / src.peak) ** 2 + opts.floor
        fits = [fit_dscale(src.dscales[:, k], opts.grid, order, wts) for k in range(len(unc))]
    if best is None:
        raise MuError("D-K iteration produced no controller")
    return SynthesisReport(best[0], best[1].peak, best[1], tuple(gammas), tuple(mus),
                           tuple(accepted), it, tuple(notes))


@dataclass(frozen=True, eq=False)
class TuneOptions:
    starts: int = 8
    seed: int = 0
    spread: float = 0.3
    step: float = 0.5
    min_step: float = 1e-3
    max_evals: int = 3000
    rounds: int = 3
    penalty: float = 1e3
    margin: float = 1e-4
    init_iter: int = 5
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid.logspace(1e-3, 1e4, 120))


def _levy_fit(h, w, nnum, nden, sweeps=6):
    """Sanathanan-Koerner fit of ``num/den`` (``den(0) = 1``) to samples ``h(jw)``."""
    s = 1j * w
    wt = np.ones_like(w)
    num = den = None
    for _ in range(sweeps):
        # unknowns: b_0..b_nnum, a_1..a_nden (ascending powers)
        cols = [s ** i for i in range(nnum + 1)] + [-h * s ** i for i in range(1, nden + 1)]
        A = np.column_stack(cols) / wt[:, None]
        rhs = h / wt
        x = np.linalg.lstsq(np.vstack([A.real, A.imag]), np.r_[rhs.real, rhs.imag], rcond=None)[0]
        num = x[:nnum + 1][::-1]
        den = np.r_[x[nnum + 1:][::-1], 1.0]
        wt = np.maximum(np.abs(np.polyval(den, s)), 1e-12)
    roots = np.roots(den)
    if roots.size and np.any(roots.real >= 0):
        roots = np.where(roots.real >= 0, -np.abs(roots.real) - 1e-3 + 1j * roots.imag, roots)
        den = np.real(np.poly(roots))
        den = den / den[-1]
    return num, den


def _template_degrees(template):
    if isinstance(template, TFMatrix):
        return tuple(tuple((len(e.num) - 1 if any(e.num) else 0, e.order) for e in row)
                     for row in template.entries)
    return tuple(tuple(tuple(d) for d in row) for row in template)


class _FixedStructure:
    """Coefficient vector <-> 2-D grid of rational entries with ``den(0) = 1``."""

    def __init__(self, degrees):
        self.degrees = degrees
        self.slices = []
        k = 0
        for row in degrees:
            out = []
            for nn, nd in row:
                out.append((slice(k, k + nn + 1), slice(k + nn + 1, k + nn + 1 + nd)))
                k += nn + 1 + nd
            self.slices.append(out)
        self.size = k

    def pack(self, K: TFMatrix) -> np.ndarray:
        x = np.zeros(self.size)
        for row, srow, drow in zip(K.entries, self.slices, self.degrees):
            for e, (sn, sd), (nn, nd) in zip(row, srow, drow):
                c = e.den[-1]
                if c == 0:
                    raise MuError("template entries need a nonzero denominator constant")
                num = np.asarray(e.num) / c
                den = np.asarray(e.den) / c
                if len(num) > nn + 1 or len(den) > nd + 1:
                    raise MuError("initial controller does not fit the template degrees")
                # lower-order entries are padded with zero leading coefficients
                x[sn] = np.r_[np.zeros(nn + 1 - len(num)), num]
                x[sd] = np.r_[np.zeros(nd + 1 - len(den)), den][:-1]
        return x

    def unpack(self, x) -> TFMatrix:
        return TFMatrix(tuple(tuple((x[sn], np.r_[x[sd], 1.0]) for sn, sd in srow)
                              for srow in self.slices))

    def response(self, x, s) -> np.ndarray:
        out = np.empty((s.size, len(self.slices), len(self.slices[0])), complex)
        for i, srow in enumerate(self.slices):
            for j, (sn, sd) in enumerate(srow):
                out[:, i, j] = np.polyval(x[sn], s) / np.polyval(np.r_[x[sd], 1.0], s)
        return out


def _closed_response(P, Kw, n_meas, n_ctrl):
    ny, nu = P.shape[1] - n_meas, P.shape[2] - n_ctrl
    P11, P12 = P[:, :ny, :nu], P[:, :ny, nu:]
    P21, P22 = P[:, ny:, :nu], P[:, ny:, nu:]
    eye = np.eye(n_meas)
    return P11 + P12 @ Kw @ np.linalg.solve(eye - P22 @ Kw, P21)


def _initial_from_full_order(p, ds, n_meas, n_ctrl, degrees, opts):
    """Fit each entry of a short D-K controller to the template degrees."""
    full = dk_iterate(p, ds, n_meas, n_ctrl,
                      DKOptions(max_iter=opts.init_iter, grid=opts.grid)).controller
    Kw = freq_response(full, opts.grid.points)
    rows = []
    for i, drow in enumerate(degrees):
        rows.append(tuple(_levy_fit(Kw[:, i, j], opts.grid.points, nn, nd)
                          for j, (nn, nd) in enumerate(drow)))
    return TFMatrix(tuple(rows))


def tune_fixed_structure(p: StateSpace, ds: DeltaStructure, template, n_meas: int, n_ctrl: int,
                         opts: TuneOptions | None = None,
                         initial: TFMatrix | None = None) -> SynthesisReport:
    """Fixed-structure controller minimizing the upper bound peak.

    ``template`` is either a :class:`TFMatrix` (its entry degrees define the
    structure and it doubles as the initial point) or a grid of
    ``(num_degree, den_degree)`` pairs. Without an initial point a
    full-order controller from ``opts.init_iter`` D-K rounds is fitted to
    the template entrywise.

    Local search is a coordinate pattern search on the log-magnitudes of
    the nonzero coefficients (signs are kept), with per-frequency D-scales
    frozen during a round and refreshed between rounds. Closed-loop
    instability enters as a hinge penalty on the spectral abscissa. The
    first start is the initial point itself, the others are seeded
    log-normal perturbations of it.
    """
    from .lti import lft_lower, spectral_abscissa

    opts = opts or TuneOptions()
    degrees = _template_degrees(template)
    if initial is None and isinstance(template, TFMatrix):
        initial = template
    if initial is None:
        initial = _initial_from_full_order(p, ds, n_meas, n_ctrl, degrees, opts)
    fs = _FixedStructure(degrees)
    x0 = fs.pack(initial)
    sign = np.sign(x0)
    live = sign != 0
    s = 1j * opts.grid.points
    Pw = freq_response(p, opts.grid.points)
    outs, ins = ds.index_maps()
    nb = len(ds)
    rng = np.random.default_rng(opts.seed)

    def coeffs(y):
        x = np.zeros_like(x0)
        x[live] = sign[live] * np.exp(y)
        return x

    def abscissa(x):
        try:
            return spectral_abscissa(lft_lower(p, fs.unpack(x).to_ss(), n_meas, n_ctrl))
        except LTIError:
            return np.inf

    def scaled_peak(x, logd):
        M = _closed_response(Pw, fs.response(x, s), n_meas, n_ctrl)
        lx = np.empty((len(s), M.shape[1]))
        rx = np.empty((len(s), M.shape[2]))
        for k in range(nb):
            lx[:, outs[k]] = logd[:, k:k + 1]
            rx[:, ins[k]] = logd[:, k:k + 1]
        N = np.exp(lx)[:, :, None] * M * np.exp(-rx)[:, None, :]
        return float(np.max(np.linalg.norm(N, 2, axis=(1, 2))))

    def objective(y, logd):
        x = coeffs(y)
        a = abscissa(x)
        if not np.isfinite(a):
            return np.inf
        try:
            val = scaled_peak(x, logd)
        except np.linalg.LinAlgError:
            return np.inf
        return val + opts.penalty * max(0.0, a + opts.margin)

    def pattern_search(y, logd):
        fy = objective(y, logd)
        if y.size == 0:
            return y, fy
        step = np.full(y.size, opts.step)
        evals = 1
        while step.max() >= opts.min_step and evals < opts.max_evals:
            for i in range(y.size):
                if step[i] < opts.min_step:
                    continue
                for sgn in (1.0, -1.0):
                    cand = y.copy()
                    cand[i] += sgn * step[i]
                    fc = objective(cand, logd)
                    evals += 1
                    if fc < fy:
                        y, fy = cand, fc
                        step[i] *= 2.0
                        break
                else:
                    step[i] /= 2.0
        return y, fy

    def true_curve(y):
        x = coeffs(y)
        return mu_upper_curve(lft_lower(p, fs.unpack(x).to_ss(), n_meas, n_ctrl), ds, opts.grid)

    def stable_curve(y):
        if abscissa(coeffs(y)) >= 0:
            return None
        try:
            return true_curve(y)
        except LTIError:
            # numerically on the axis despite a negative abscissa
            return None

    y_init = np.log(np.abs(x0[live]))
    init_curve = stable_curve(y_init)
    # the initial point's optimal D-scales seed every start, so round one already
    # minimizes a bound that equals the initial mu there
    logd0 = (np.log(init_curve.dscales) if init_curve is not None and init_curve.stable
             else np.zeros((len(s), nb)))
    best = None
    history, notes = [], []
    for start in range(opts.starts):
        y = y_init if start == 0 else y_init + opts.spread * rng.standard_normal(y_init.size)
        curve = init_curve if start == 0 else stable_curve(y)
        if curve is not None and not curve.stable:
            curve = None
        logd = np.log(curve.dscales) if curve is not None else logd0
        for rnd in range(opts.rounds):
            y_new, fy = pattern_search(y, logd)
            if not np.isfinite(fy):
                break
            new = stable_curve(y_new)
            # a round is kept only if the true bound improves (or first becomes finite)
            if new is None or not new.stable or (curve is not None and new.peak >= curve.peak):
                break
            y, curve = y_new, new
            logd = np.log(curve.dscales)
        if curve is None:
            notes.append(f"start {start}: no stabilizing point")
            history.append(np.inf)
            continue
        history.append(curve.peak)
        log.info("fixed-structure start %d: mu %.4g", start, curve.peak)
        if best is None or curve.peak < best[1].peak:
            best = (coeffs(y), curve)
    if best is None:
        raise MuError("no stabilizing fixed-structure controller found from any start")
    K = fs.unpack(best[0])
    accepted = tuple(i for i, v in enumerate(history) if v == best[1].peak)
    return SynthesisReport(K.to_ss(), best[1].peak, best[1], (), tuple(history), accepted,
                           opts.starts, tuple(notes), K)
