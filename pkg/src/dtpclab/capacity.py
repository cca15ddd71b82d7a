"""
Constrained capacity of Poisson-type channels.

The solver maximizes ``I(X;Y)`` over input laws on ``[0, p_max]`` with
``E[X] <= p_avg`` in four stages:

1. Blahut-Arimoto on a uniform input grid; the average constraint is
   enforced by choosing the tilt multiplier ``mu`` at every iteration so the
   updated law meets the mean exactly (alternating maximization over the
   constrained set, hence monotone).
2. Support extraction from the local maxima of the tilted divergence.
3. Refinement: locations and masses are improved jointly by a local
   constrained ascent; points where ``D(W(.|x) || P_Y) - mu x`` exceeds the
   current level are added back as new mass points until none remain.
4. Certification of the Lagrangian optimality conditions on a dense grid.

The same pipeline handles the secrecy objective ``I(X;Y) - I(X;Z)`` by
replacing the divergence with the difference of the two channels'
divergences and the Blahut-Arimoto step with backtracked exponentiated
gradient steps.

Internally everything is in nats; results are reported in bits.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special

from .channel import (
    LOG2E,
    GenericDmc,
    PoissonChannel,
    PowerConstraint,
    StateChannel,
)

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)

GRID_POINTS = 2000
VERIFY_POINTS = 10_000
MASS_TOL = 1e-9
BA_TOL = 1e-6
KKT_TOL = 1e-4
POSITIVITY_THRESHOLD = 1e-6
RESTARTS = 8
GRID_TOL = 1e-5
GRID_ITER = 5000


class CertificationError(RuntimeError):
    """Raised when a solution fails its optimality certificate in strict mode."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration budget."""


class RowChannel(Protocol):
    n_outputs: int

    def rows(self, xs: ArrayLike, y_max: int | None = None) -> NDArray[np.float64]: ...


@dataclass(frozen=True)
class DiscreteInputDistribution:
    """Finitely supported input law ``sum_j p_j delta(x - x_j)``."""

    points: NDArray[np.float64]
    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.points, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.probs, dtype=float)).copy()
        if x.shape != p.shape or x.ndim != 1 or x.size == 0:
            raise ValueError("points and probs must be matching nonempty 1-D arrays")
        if np.any(p <= 0):
            raise ValueError("all masses must be positive")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"masses sum to {p.sum()!r}")
        if np.any(np.diff(x) <= 0):
            raise ValueError("support points must be strictly increasing")
        if x[0] < 0:
            raise ValueError("support points must be nonnegative")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, x: float) -> "DiscreteInputDistribution":
        return cls(np.array([x]), np.array([1.0]))

    @classmethod
    def uniform(cls, points: ArrayLike) -> "DiscreteInputDistribution":
        x = np.asarray(points, dtype=float)
        return cls(x, np.full(x.size, 1.0 / x.size))

    @property
    def mean(self) -> float:
        return float(self.probs @ self.points)

    @property
    def second_moment(self) -> float:
        return float(self.probs @ self.points**2)

    def __len__(self) -> int:
        return self.points.size

    def sample(self, size, rng: np.random.Generator) -> NDArray[np.float64]:
        return self.points[rng.choice(self.points.size, size=size, p=self.probs)]

    def to_list(self) -> list[list[float]]:
        return [[float(x), float(p)] for x, p in zip(self.points, self.probs)]


@dataclass(frozen=True)
class CapacityResult:
    """Certified solution of a constrained capacity problem; all values in bits."""

    capacity_bits: float
    distribution: DiscreteInputDistribution
    mu: float
    kkt_max_violation: float
    kkt_support_residual: float
    ba_gap: float
    iterations: int
    certified: bool
    output_pmf: NDArray[np.float64] = field(repr=False)
    wallclock_ms: float = field(default=0.0, compare=False)

    @property
    def upper_bound_bits(self) -> float:
        return self.capacity_bits + max(self.kkt_max_violation, 0.0)

    def raise_if_uncertified(self) -> "CapacityResult":
        if not self.certified:
            raise CertificationError(
                f"KKT violation {self.kkt_max_violation:.3g}, support residual "
                f"{self.kkt_support_residual:.3g}, BA gap {self.ba_gap:.3g}"
            )
        return self

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "capacity_bits": self.capacity_bits,
            "support": self.distribution.to_list(),
            "mu": self.mu,
            "kkt_max_violation": self.kkt_max_violation,
            "kkt_support_residual": self.kkt_support_residual,
            "ba_gap": self.ba_gap,
            "iterations": self.iterations,
            "certified": self.certified,
        }
        if timing:
            d["wallclock_ms"] = self.wallclock_ms
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# information quantities on finite tables (nats)


def _divergences(rows: NDArray, py: NDArray) -> NDArray:
    """D(rows[i] || py) for each row, nats."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return special.rel_entr(rows, py[None, :]).sum(axis=1)


def _mutual_information(p: NDArray, rows: NDArray) -> float:
    py = p @ rows
    return float(p @ _divergences(rows, py))


def mutual_information(dist: DiscreteInputDistribution, ch: RowChannel) -> float:
    """``I(X;Y) = sum_j p_j D(W(.|x_j) || P_Y)`` in bits, on the truncated output alphabet."""
    return max(_mutual_information(dist.probs, ch.rows(dist.points)), 0.0) * LOG2E


def output_distribution(dist: DiscreteInputDistribution, ch: RowChannel) -> NDArray[np.float64]:
    """Output mixture ``P_Y(y) = sum_j p_j W(y|x_j)``."""
    return dist.probs @ ch.rows(dist.points)


def divergence_to_output(x: ArrayLike, dist: DiscreteInputDistribution, ch: RowChannel) -> NDArray[np.float64]:
    """``D(W(.|x) || P_Y)`` in bits for each ``x``."""
    py = output_distribution(dist, ch)
    return _divergences(ch.rows(x), py) * LOG2E


def lagrangian(
    mu: float, x: ArrayLike, dist: DiscreteInputDistribution, ch: RowChannel, p_avg: float
) -> NDArray[np.float64] | float:
    """
    ``L(mu, x, P_X) = I(X;Y) + mu (x - p_avg) - D(W(.|x) || P_Y)``, bits.

    ``mu`` is in bits per unit intensity. At a capacity-achieving law ``L``
    is nonnegative on ``[0, p_max]`` and vanishes on the support.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    rows = ch.rows(dist.points)
    py = dist.probs @ rows
    info = float(dist.probs @ _divergences(rows, py)) * LOG2E
    d = _divergences(ch.rows(xs), py) * LOG2E
    out = info + mu * (xs - p_avg) - d
    return float(out[0]) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# objectives: one channel (capacity) or a main/eavesdropper pair (secrecy)


@dataclass(frozen=True)
class _Table:
    """Rows of one channel on a set of inputs, with their negative entropies cached."""

    rows: NDArray
    neg_entropy: NDArray

    @classmethod
    def of(cls, rows: NDArray) -> "_Table":
        return cls(rows, special.xlogy(rows, rows).sum(axis=1))

    def divergences(self, py: NDArray) -> NDArray:
        """D(rows[i] || py) in nats; ``py`` must dominate every row."""
        with np.errstate(divide="ignore"):
            logq = np.log(py)
        logq = np.maximum(logq, -1e300)
        return self.neg_entropy - self.rows @ logq


@dataclass(frozen=True)
class _Objective:
    """``F(p) = sum_j p_j g_j(p)`` with ``g(x) = D(W_x||P_Y) - D(V_x||P_Z)`` (second term optional)."""

    main: RowChannel
    eve: RowChannel | None = None

    def tables(self, xs: NDArray) -> tuple[_Table, _Table | None]:
        w = _Table.of(self.main.rows(xs))
        return w, (None if self.eve is None else _Table.of(self.eve.rows(xs)))

    def gradient(self, p: NDArray, tab: tuple, cand: tuple | None = None) -> NDArray:
        """Per-point divergence score at input law ``p`` on ``tab``; evaluated on ``cand`` rows if given."""
        w, v = tab
        cw, cv = tab if cand is None else cand
        g = cw.divergences(p @ w.rows)
        if v is not None:
            g = g - cv.divergences(p @ v.rows)
        return g


def _tilt_mu(logw: NDArray, x: NDArray, p_avg: float | None) -> float:
    """Smallest ``mu >= 0`` so that ``softmax(logw - mu x)`` has mean ``<= p_avg``."""
    if p_avg is None:
        return 0.0

    def mean(mu: float) -> float:
        a = logw - mu * x
        a = a - a.max()
        w = np.exp(a)
        return float(w @ x / w.sum())

    if mean(0.0) <= p_avg:
        return 0.0
    if x.min() > p_avg:
        raise ValueError("average constraint infeasible on this support")
    hi = 1.0
    while mean(hi) > p_avg:
        hi *= 2.0
        if hi > 1e12:
            raise ConvergenceError("could not bracket the Lagrange multiplier")
    return optimize.brentq(lambda m: mean(m) - p_avg, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _normalize_log(a: NDArray) -> NDArray:
    a = a - a.max()
    w = np.exp(a)
    return w / w.sum()


@dataclass
class _MassSolution:
    p: NDArray
    mu: float  # nats per unit
    value: float  # nats
    upper: float  # nats
    iterations: int
    history: list[float]


def _solve_masses(
    obj: _Objective,
    xs: NDArray,
    p_avg: float | None,
    tol: float,
    max_iter: int,
    p0: NDArray | None = None,
    tab: tuple | None = None,
    check_monotone: bool = False,
) -> _MassSolution:
    """
    Optimize masses on fixed points ``xs``; ``tol`` is the certified gap in nats.

    For a single channel the step is exactly Blahut-Arimoto; for the secrecy
    difference it is an exponentiated-gradient step halved until the
    objective does not decrease.
    """
    tab = obj.tables(xs) if tab is None else tab
    n = xs.size
    p = np.full(n, 1.0 / n) if p0 is None else np.asarray(p0, dtype=float) / np.sum(p0)
    secrecy = obj.eve is not None
    eta = 1.0
    history: list[float] = []
    mu = 0.0
    value = -np.inf
    upper = np.inf
    cap = np.inf if p_avg is None else p_avg
    for it in range(1, max_iter + 1):
        g = obj.gradient(p, tab)
        value = float(p @ g)
        feasible = p @ xs <= cap + 1e-12
        # any mu >= 0 gives a valid dual bound; use the one that makes the next step feasible
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        mu = _tilt_mu(logp + eta * g, xs, p_avg) / eta
        upper = float(np.max(g - mu * xs)) + (mu * p_avg if p_avg is not None else 0.0)
        if feasible:
            history.append(value)
        if feasible and upper - value <= tol:
            break
        new = _normalize_log(logp + eta * (g - mu * xs))
        if secrecy:
            while True:
                new_val = float(new @ obj.gradient(new, tab))
                if new_val >= value - 1e-15 or eta < 1e-8:
                    break
                eta *= 0.5
                mu = _tilt_mu(logp + eta * g, xs, p_avg) / eta
                new = _normalize_log(logp + eta * (g - mu * xs))
            else:  # pragma: no cover
                pass
            if new_val >= value:
                eta = min(eta * 1.25, 4.0)
        p = new
        if check_monotone and len(history) >= 2 and history[-1] < history[-2] - 1e-13:
            raise AssertionError(f"objective decreased at iteration {it}: {history[-2]} -> {history[-1]}")
    else:
        it = max_iter
    return _MassSolution(p, mu, value, upper, it, history)


# ---------------------------------------------------------------------------
# public Blahut-Arimoto interfaces


def ba_step(
    dist: DiscreteInputDistribution, ch: RowChannel, mu: float = 0.0
) -> tuple[DiscreteInputDistribution, float, float]:
    """
    One cost-tilted Blahut-Arimoto update on a fixed support.

    Masses are multiplied by ``exp(D(W(.|x_j)||P_Y) - mu x_j)`` and
    renormalized. The returned bounds (bits) bracket
    ``max_p I(X;Y) - mu E[X]`` over laws on the same support:
    ``lower = log sum_j p_j c_j`` and ``upper = log max_j c_j``.
    ``mu`` is in bits per unit intensity.
    """
    rows = ch.rows(dist.points)
    d = _divergences(rows, dist.probs @ rows)
    a = d - mu * LN2 * dist.points
    lower = special.logsumexp(a, b=dist.probs) * LOG2E
    upper = float(a.max()) * LOG2E
    new = _normalize_log(np.log(dist.probs) + a)
    new = np.clip(new, np.finfo(float).tiny, None)
    return DiscreteInputDistribution(dist.points, new / new.sum()), float(lower), upper


@dataclass(frozen=True)
class BlahutArimotoResult:
    probs: NDArray[np.float64]
    capacity_bits: float
    upper_bits: float
    mu: float
    iterations: int
    history: tuple[float, ...]


def blahut_arimoto(
    matrix: NDArray,
    costs: ArrayLike | None = None,
    p_avg: float | None = None,
    tol: float = BA_TOL,
    max_iter: int = 200_000,
    check_monotone: bool = True,
) -> BlahutArimotoResult:
    """
    Capacity of a finite-input table with an optional average cost limit.

    Raises ``ConvergenceError`` if the certified gap (bits) is not reached.
    """
    matrix = np.asarray(matrix, dtype=float)
    xs = np.zeros(matrix.shape[0]) if costs is None else np.asarray(costs, dtype=float)
    tab = (_Table.of(matrix), None)
    obj = _Objective(_TableChannel(matrix, xs))
    sol = _solve_masses(obj, xs, p_avg, tol * LN2, max_iter, tab=tab, check_monotone=check_monotone)
    if sol.upper - sol.value > tol * LN2:
        raise ConvergenceError(f"gap {(sol.upper - sol.value) * LOG2E:.3g} bits after {max_iter} iterations")
    return BlahutArimotoResult(
        sol.p, sol.value * LOG2E, sol.upper * LOG2E, sol.mu * LOG2E, sol.iterations,
        tuple(h * LOG2E for h in sol.history),
    )


@dataclass(frozen=True)
class _TableChannel:
    matrix: NDArray
    inputs: NDArray

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    def rows(self, xs: ArrayLike, y_max: int | None = None) -> NDArray:
        idx = np.searchsorted(self.inputs, np.atleast_1d(xs))
        return self.matrix[idx]


def dmc_capacity(dmc: GenericDmc, p_avg: float | None = None, tol: float = BA_TOL) -> BlahutArimotoResult:
    """Capacity of a tabulated channel, input labels acting as costs."""
    return blahut_arimoto(dmc.matrix, dmc.inputs, p_avg, tol)


# ---------------------------------------------------------------------------
# continuous-input pipeline


def _local_maxima(f: NDArray) -> NDArray:
    left = np.r_[True, f[1:] >= f[:-1]]
    right = np.r_[f[:-1] >= f[1:], True]
    return np.flatnonzero(left & right)


def _merge(xs: NDArray, ps: NDArray, tol: float) -> tuple[NDArray, NDArray]:
    order = np.argsort(xs)
    xs, ps = xs[order], ps[order]
    out_x, out_p = [xs[0]], [ps[0]]
    for x, p in zip(xs[1:], ps[1:]):
        if x - out_x[-1] <= tol:
            tot = out_p[-1] + p
            out_x[-1] = (out_x[-1] * out_p[-1] + x * p) / tot if tot > 0 else x
            out_p[-1] = tot
        else:
            out_x.append(x)
            out_p.append(p)
    return np.array(out_x), np.array(out_p)


def _score(obj: _Objective, p: NDArray, tab: tuple, xs: NDArray) -> NDArray:
    return obj.gradient(p, tab, obj.tables(xs))


def _grid_stage(obj: _Objective, pc: PowerConstraint, n_grid: int, tol: float, max_iter: int, restarts: int, seed: int):
    grid = np.linspace(0.0, pc.p_max, n_grid)
    tab = obj.tables(grid)
    p_avg = pc.p_avg if pc.average_active else None
    if obj.eve is None:
        sol = _solve_masses(obj, grid, p_avg, tol, max_iter, tab=tab)
        return grid, tab, sol
    # short runs from each start, then the best one continues with the remaining budget
    rng = np.random.default_rng(seed)
    budget = max(max_iter // (2 * restarts), 1)
    best = None
    for r in range(restarts):
        p0 = np.full(n_grid, 1.0 / n_grid) if r == 0 else rng.dirichlet(np.full(n_grid, 0.5))
        p0 = np.clip(p0, 1e-300, None)
        sol = _solve_masses(obj, grid, p_avg, tol, budget, p0=p0, tab=tab)
        if best is None or sol.value > best.value:
            best = sol
    more = _solve_masses(obj, grid, p_avg, tol, max_iter - budget * restarts, p0=best.p, tab=tab)
    more.iterations += budget * restarts
    best = more
    return grid, tab, best


def _best_mu(g: NDArray, xs: NDArray, p_avg: float | None) -> tuple[float, float]:
    """
    Tightest dual bound ``min_{mu >= 0} max_j (g_j - mu x_j) + mu p_avg`` on a support.

    The objective is convex piecewise linear in ``mu``, so its minimum sits at
    zero or at a pairwise breakpoint. Returns ``(mu, bound)``.
    """
    if p_avg is None:
        return 0.0, float(g.max())
    dx = xs[:, None] - xs[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = (g[:, None] - g[None, :]) / dx
    cand = np.r_[0.0, cand[np.isfinite(cand) & (cand > 0)]]
    vals = np.max(g[None, :] - cand[:, None] * xs[None, :], axis=1) + cand * p_avg
    k = int(np.argmin(vals))
    return float(cand[k]), float(vals[k])


def _polish_masses(obj: _Objective, xs: NDArray, p_avg: float | None, p0: NDArray, tab: tuple) -> NDArray:
    """Masses on a small fixed support by SLSQP on the concave objective."""
    cons = [{"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones_like(p)}]
    if p_avg is not None:
        cons.append({"type": "ineq", "fun": lambda p: p_avg - p @ xs, "jac": lambda p: -xs})

    def f(p):
        q = np.clip(p, 0.0, None)
        g = obj.gradient(q, tab)
        # d/dp_j of sum_j p_j g_j is g_j up to a constant absorbed by the simplex constraint
        return -float(q @ g), -g

    res = optimize.minimize(
        f, p0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * xs.size, constraints=cons,
        options={"ftol": 1e-16, "maxiter": 1000},
    )
    p = np.clip(res.x, 0.0, None)
    p = p / p.sum()
    if p_avg is not None and p @ xs > p_avg:
        # nudge back inside the average constraint by shifting mass toward the smallest point
        excess = p @ xs - p_avg
        j = int(np.argmin(xs))
        for k in np.argsort(-xs):
            if k == j or excess <= 0:
                continue
            move = min(p[k], excess / (xs[k] - xs[j]))
            p[k] -= move
            p[j] += move
            excess -= move * (xs[k] - xs[j])
    return p


def _row_slopes(ch: RowChannel, xs: NDArray, y_max: int | None = None) -> NDArray:
    """``d W(y|x) / dx`` for each input; Poisson rows satisfy ``W' = gain (W(y-1) - W(y))``."""
    if isinstance(ch, StateChannel):
        return sum(p * _row_slopes(c, xs, ch.y_max) for p, c in ch.states)
    if isinstance(ch, PoissonChannel):
        rows = ch.rows(xs, y_max)
        shifted = np.zeros_like(rows)
        shifted[:, 1:] = rows[:, :-1]
        return ch.gain * (shifted - rows)
    h = 1e-6 * max(1.0, float(np.max(xs)))
    lo = np.maximum(xs - h, 0.0)
    return (ch.rows(xs + h) - ch.rows(lo)) / (xs + h - lo)[:, None]


def _location_gradient(ch: RowChannel, xs: NDArray, p: NDArray) -> NDArray:
    """``d/dx_j sum_k p_k D(W_k || P_Y) = p_j sum_y W_j'(y) log(W_j(y) / P_Y(y))``."""
    rows = ch.rows(xs)
    py = p @ rows
    with np.errstate(divide="ignore"):
        ratio = np.log(np.maximum(rows, 1e-320)) - np.log(np.maximum(py, 1e-320))[None, :]
    return p * np.sum(_row_slopes(ch, xs) * ratio, axis=1)


def _joint_ascent(obj: _Objective, xs: NDArray, p: NDArray, pc: PowerConstraint, p_avg: float | None):
    """Local maximization over locations and masses together (SLSQP, analytic gradients)."""
    n = xs.size

    def f(z):
        x, q = z[:n], np.clip(z[n:], 0.0, None)
        tab = obj.tables(x)
        g = obj.gradient(q, tab)
        gx = _location_gradient(obj.main, x, q)
        if obj.eve is not None:
            gx = gx - _location_gradient(obj.eve, x, q)
        return -float(q @ g), -np.r_[gx, g]

    cons = [{"type": "eq", "fun": lambda z: z[n:].sum() - 1.0, "jac": lambda z: np.r_[np.zeros(n), np.ones(n)]}]
    if p_avg is not None:
        cons.append({
            "type": "ineq", "fun": lambda z: p_avg - z[:n] @ z[n:], "jac": lambda z: -np.r_[z[n:], z[:n]],
        })
    bounds = [(0.0, pc.p_max)] * n + [(0.0, 1.0)] * n
    res = optimize.minimize(
        f, np.r_[xs, p], jac=True, method="SLSQP", bounds=bounds, constraints=cons,
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    x = np.clip(res.x[:n], 0.0, pc.p_max)
    # snap round-off at the ends of the interval
    x[x < 1e-12 * pc.p_max] = 0.0
    x[x > pc.p_max * (1 - 1e-12)] = pc.p_max
    q = np.clip(res.x[n:], 0.0, None)
    return x, q / q.sum()


def _candidates(f: NDArray, gap: float, limit: int = 40) -> NDArray:
    idx = _local_maxima(f)
    peak = f.max()
    span = peak - f.min()
    idx = idx[f[idx] >= peak - max(50 * gap, 1e-3 * span)]
    if idx.size > limit:
        idx = np.sort(idx[np.argsort(-f[idx])[:limit]])
    return idx


def _solve(
    obj: _Objective,
    pc: PowerConstraint,
    ba_tol: float = BA_TOL,
    kkt_tol: float = KKT_TOL,
    n_grid: int = GRID_POINTS,
    n_verify: int = VERIFY_POINTS,
    max_iter: int = GRID_ITER,
    restarts: int = 1,
    seed: int = 0,
    max_outer: int = 100,
) -> CapacityResult:
    t0 = time.perf_counter()
    p_avg = pc.p_avg if pc.average_active else None
    merge_tol = pc.p_max * 1e-4

    # stage 1: grid; the grid law only seeds the support, so a looser gap suffices
    grid, gtab, gsol = _grid_stage(obj, pc, n_grid, max(ba_tol, GRID_TOL) * LN2, max_iter, restarts, seed)
    iterations = gsol.iterations
    f = obj.gradient(gsol.p, gtab) - gsol.mu * grid

    # stage 2: candidate support from near-maximal local maxima of the tilted score
    idx = _candidates(f, gsol.upper - gsol.value)
    xs = grid[idx]
    p = np.array([gsol.p[max(i - 2, 0): i + 3].sum() for i in idx]) + 1e-6
    p /= p.sum()

    # stage 3: alternate mass optimization and location ascent, adding violators
    verify = np.linspace(0.0, pc.p_max, n_verify)
    vtab = obj.tables(verify)
    spacing = verify[1] - verify[0]
    for _ in range(max_outer):
        tab = obj.tables(xs)
        p = _polish_masses(obj, xs, p_avg, p, tab)
        keep = p > MASS_TOL
        xs, p = _joint_ascent(obj, xs[keep], p[keep] / p[keep].sum(), pc, p_avg)
        iterations += 1
        keep = p > MASS_TOL
        xs, p = _merge(xs[keep], p[keep] / p[keep].sum(), merge_tol)
        tab = obj.tables(xs)
        mu, _ = _best_mu(obj.gradient(p, tab), xs, p_avg)
        tab = obj.tables(xs)
        g = obj.gradient(p, tab)
        level = float(np.max(g - mu * xs))
        fv = obj.gradient(p, tab, vtab) - mu * verify
        viol = _local_maxima(fv)
        viol = viol[fv[viol] - level > 1e-12]
        viol = [j for j in viol if np.min(np.abs(xs - verify[j])) > 2 * spacing]
        if viol:
            xs = np.r_[xs, verify[viol]]
            p = np.r_[p * (1 - 1e-3), np.full(len(viol), 1e-3 / len(viol))]
            order = np.argsort(xs)
            xs, p = xs[order], p[order]
        logger.debug("outer: n=%d viol=%s xs=%s p=%s", xs.size, [float(verify[j]) for j in viol], np.round(xs, 4), np.round(p, 5))
        if not viol:
            break

    # final masses; polish with the first-order method to obtain a certified gap
    tab = obj.tables(xs)
    p = _polish_masses(obj, xs, p_avg, p, tab)
    keep = p > MASS_TOL
    xs, p = xs[keep], p[keep] / p[keep].sum()
    tab = obj.tables(xs)
    g = obj.gradient(p, tab)
    value = float(p @ g)
    mu, upper = _best_mu(g, xs, p_avg)
    if upper - value > ba_tol * LN2:
        sol = _solve_masses(obj, xs, p_avg, ba_tol * LN2, 200_000, p0=p, tab=tab)
        iterations += sol.iterations
        p = sol.p
        g = obj.gradient(p, tab)
        value = float(p @ g)
        mu, upper = _best_mu(g, xs, p_avg)
    ba_gap = max(upper - value, 0.0) * LOG2E
    dist = DiscreteInputDistribution(xs, p)

    # stage 4: certification on the dense grid plus the support itself
    avg = p_avg if p_avg is not None else pc.p_avg
    lag = lambda pts, rows: (value + mu * (pts - avg) - obj.gradient(p, tab, rows)) * LOG2E  # noqa: E731
    lv = lag(verify, vtab)
    ls = lag(xs, tab)
    kkt_violation = float(max(0.0, -lv.min(), -ls.min()))
    support_residual = float(np.abs(ls).max())
    certified = kkt_violation <= kkt_tol and support_residual <= kkt_tol and ba_gap <= ba_tol
    if not certified:
        logger.warning("certification failed: kkt %.3g support %.3g gap %.3g", kkt_violation, support_residual, ba_gap)
    return CapacityResult(
        capacity_bits=max(value * LOG2E, 0.0),
        distribution=dist,
        mu=mu * LOG2E,
        kkt_max_violation=kkt_violation,
        kkt_support_residual=support_residual,
        ba_gap=ba_gap,
        iterations=int(iterations),
        certified=bool(certified),
        output_pmf=p @ tab[0].rows,
        wallclock_ms=(time.perf_counter() - t0) * 1e3,
    )


def _check_cover(ch: RowChannel, p_max: float) -> None:
    parts = ch.states if isinstance(ch, StateChannel) else [(1.0, ch)]
    for _, c in parts:
        if isinstance(c, PoissonChannel) and not c.covers(p_max):
            raise ValueError(f"channel truncation y_max={c.y_max} does not cover p_max={p_max}")


def capacity(
    ch: RowChannel,
    pc: PowerConstraint,
    tol: float = BA_TOL,
    kkt_tol: float = KKT_TOL,
    n_grid: int = GRID_POINTS,
    strict: bool = False,
) -> CapacityResult:
    """
    ``C(W, p_max, p_avg)`` with a certified optimal input law.

    Parameters
    ----------
    ch : PoissonChannel or StateChannel
        Channel exposing ``rows(xs)``.
    pc : PowerConstraint
    tol : float
        Blahut-Arimoto gap tolerance, bits.
    kkt_tol : float
        Tolerance on the Lagrangian optimality conditions, bits.
    strict : bool
        Raise ``CertificationError`` instead of returning an uncertified result.
    """
    _check_cover(ch, pc.p_max)
    res = _solve(_Objective(ch), pc, tol, kkt_tol, n_grid)
    return res.raise_if_uncertified() if strict else res


@dataclass(frozen=True)
class WiretapPair:
    """Main channel ``W`` to the legitimate receiver and ``V`` to the eavesdropper."""

    main: PoissonChannel | StateChannel
    eve: PoissonChannel | StateChannel

    @classmethod
    def poisson(cls, lambda_b: float, lambda_e: float, p_max: float, gain_b: float = 1.0, gain_e: float = 1.0):
        return cls(PoissonChannel.for_peak(lambda_b, p_max, gain_b), PoissonChannel.for_peak(lambda_e, p_max, gain_e))

    def degraded(self) -> bool:
        """
        True when Eve's output is the main output passed through a fixed noisy map.

        Poisson pair: thin ``Y`` with ratio ``r = gain_e / gain_b <= 1`` and add
        independent ``Poisson(lambda_e - r lambda_b)``; needs that shift to be
        nonnegative. With equal gains this is ``lambda_e >= lambda_b``.
        Mixed pairs use sufficient conditions only (see module docs).
        """
        m, e = self.main, self.eve
        if isinstance(m, PoissonChannel) and isinstance(e, PoissonChannel):
            r = e.gain / m.gain
            return r <= 1.0 and e.dark_current - r * m.dark_current >= 0.0
        if isinstance(m, PoissonChannel) and isinstance(e, StateChannel):
            return all(c.gain == m.gain and c.dark_current >= m.dark_current for _, c in e.states)
        if isinstance(m, StateChannel) and isinstance(e, StateChannel) and len(m.states) == len(e.states):
            shifts = []
            for (pm, cm), (pe, ce) in zip(m.states, e.states):
                if abs(pm - pe) > 1e-12 or cm.gain != ce.gain:
                    return False
                shifts.append(ce.dark_current - cm.dark_current)
            return min(shifts) >= 0 and max(shifts) - min(shifts) <= 1e-12
        return False


def secrecy_capacity(
    wp: WiretapPair,
    pc: PowerConstraint,
    tol: float = BA_TOL,
    kkt_tol: float = KKT_TOL,
    n_grid: int = GRID_POINTS,
    restarts: int = RESTARTS,
    seed: int = 0,
    strict: bool = False,
) -> CapacityResult:
    """
    ``C_S = max [I(X;Y) - I(X;Z)]`` over the same constrained input class.

    Only degraded pairs are accepted; for them the objective is concave, so
    the Lagrangian certificate of the capacity problem carries over with the
    divergence replaced by the divergence difference.
    """
    if not wp.degraded():
        raise ValueError("wiretap pair is not degraded")
    _check_cover(wp.main, pc.p_max)
    _check_cover(wp.eve, pc.p_max)
    if wp.main == wp.eve:
        # identical channels: the objective vanishes identically
        zero = DiscreteInputDistribution.point_mass(0.0)
        return CapacityResult(0.0, zero, 0.0, 0.0, 0.0, 0.0, 0, True, wp.main.rows([0.0])[0])
    res = _solve(_Objective(wp.main, wp.eve), pc, tol, kkt_tol, n_grid, restarts=restarts, seed=seed)
    return res.raise_if_uncertified() if strict else res


@dataclass(frozen=True)
class SidReport:
    """Secure identification capacity together with the two values that decide it."""

    c_main: float
    c_secrecy: float
    c_sid: float
    main: CapacityResult
    secrecy: CapacityResult

    def to_dict(self) -> dict:
        return {"c_main": self.c_main, "c_secrecy": self.c_secrecy, "c_sid": self.c_sid}


def sid_capacity(
    wp: WiretapPair,
    pc: PowerConstraint,
    tol: float = BA_TOL,
    threshold: float = POSITIVITY_THRESHOLD,
    **kw,
) -> SidReport:
    """
    Secure identification capacity: the main-channel capacity when the
    secrecy capacity is positive (above ``threshold`` bits), else exactly 0.
    """
    main = capacity(wp.main, pc, tol)
    sec = secrecy_capacity(wp, pc, tol, **kw)
    c_sid = main.capacity_bits if sec.capacity_bits > threshold else 0.0
    return SidReport(main.capacity_bits, sec.capacity_bits, c_sid, main, sec)
