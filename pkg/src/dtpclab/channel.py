"""
Discrete-time Poisson channel primitives.

The output of one channel use is ``Y ~ Poisson(gain * x + dark_current)``.
Output alphabets are truncated at ``y_max`` so that every pmf table is
finite; the truncation is chosen so that the discarded upper tail is below
``TAIL_MASS`` for every admissible input.

Information quantities are computed in nats internally and returned in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special, stats

LOG2E = 1.0 / math.log(2.0)
TAIL_MASS = 1e-13


def poisson_row(mean: float, y_max: int) -> NDArray[np.float64]:
    """Poisson(mean) pmf on ``{0, ..., y_max}``, evaluated in the log domain."""
    ys = np.arange(y_max + 1)
    if mean == 0.0:
        row = np.zeros(y_max + 1)
        row[0] = 1.0
        return row
    return np.exp(ys * math.log(mean) - mean - special.gammaln(ys + 1))


def poisson_rows(means: ArrayLike, y_max: int) -> NDArray[np.float64]:
    """Stack of Poisson pmf rows, one per mean; shape ``(len(means), y_max + 1)``."""
    means = np.atleast_1d(np.asarray(means, dtype=float))
    ys = np.arange(y_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = special.xlogy(ys[None, :], means[:, None]) - means[:, None] - special.gammaln(ys + 1)[None, :]
    return np.exp(logp)


def truncation_point(mean: float, tail: float = TAIL_MASS) -> int:
    """Smallest ``y`` with ``Pr{Poisson(mean) > y} < tail``."""
    if mean < 0:
        raise ValueError("mean must be nonnegative")
    y = int(math.floor(mean))
    # sf is the regularized incomplete gamma, accurate far into the tail
    while stats.poisson.sf(y, mean) >= tail:
        y += 1
    while y > 0 and stats.poisson.sf(y - 1, mean) < tail:
        y -= 1
    return y


@dataclass(frozen=True)
class PoissonChannel:
    """
    Memoryless Poisson channel with dark current.

    Parameters
    ----------
    dark_current : float
        Expected background counts per slot.
    y_max : int
        Output truncation; outputs above it are outside the certified table.
    gain : float
        Multiplicative gain applied to the input before adding the dark current.
    """

    dark_current: float
    y_max: int
    gain: float = 1.0

    def __post_init__(self) -> None:
        if not self.dark_current >= 0:
            raise ValueError("dark_current must be >= 0")
        if self.y_max < 0 or int(self.y_max) != self.y_max:
            raise ValueError("y_max must be a nonnegative integer")
        if not self.gain > 0:
            raise ValueError("gain must be positive")

    @classmethod
    def for_peak(cls, dark_current: float, p_max: float, gain: float = 1.0) -> "PoissonChannel":
        """Channel whose truncation is certified for every input in ``[0, p_max]``."""
        y_max = truncation_point(gain * p_max + dark_current)
        return cls(float(dark_current), int(y_max), float(gain))

    @property
    def n_outputs(self) -> int:
        return self.y_max + 1

    def mean(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.gain * np.asarray(x, dtype=float) + self.dark_current

    def tail_mass(self, x: float) -> float:
        """Probability mass above ``y_max`` at input ``x``."""
        return float(stats.poisson.sf(self.y_max, float(self.mean(x))))

    def covers(self, p_max: float) -> bool:
        """True if the truncation certificate holds on ``[0, p_max]``."""
        # upper tail is increasing in the mean, so the largest input is the worst case
        return self.tail_mass(p_max) < 1e-12

    def pmf(self, x: float, y: int) -> float:
        """``W(y|x)`` computed as ``exp(y log m - m - log y!)``."""
        if x < 0:
            raise ValueError("input intensity must be nonnegative")
        if y < 0 or y > self.y_max:
            raise ValueError(f"output {y} outside truncated alphabet [0, {self.y_max}]")
        m = float(self.mean(x))
        if m == 0.0:
            return 1.0 if y == 0 else 0.0
        return math.exp(y * math.log(m) - m - math.lgamma(y + 1))

    def row(self, x: float) -> NDArray[np.float64]:
        if x < 0:
            raise ValueError("input intensity must be nonnegative")
        return poisson_row(float(self.mean(x)), self.y_max)

    def rows(self, xs: ArrayLike, y_max: int | None = None) -> NDArray[np.float64]:
        """Transition matrix with one row per input in ``xs``."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if np.any(xs < 0):
            raise ValueError("input intensity must be nonnegative")
        return poisson_rows(self.mean(xs), self.y_max if y_max is None else y_max)

    def sample(self, x: ArrayLike, rng: np.random.Generator) -> NDArray[np.int64] | int:
        """Draw outputs for input(s) ``x`` from the caller's generator."""
        xs = np.asarray(x, dtype=float)
        if np.any(xs < 0):
            raise ValueError("input intensity must be nonnegative")
        out = rng.poisson(self.mean(xs))
        return int(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"dark_current": self.dark_current, "y_max": self.y_max, "gain": self.gain}


def kl_poisson(mu1: float, mu2: float) -> float:
    """D(Poisson(mu1) || Poisson(mu2)) in bits."""
    if not (mu1 > 0 and mu2 > 0):
        raise ValueError("Poisson means must be positive")
    return (mu1 * math.log(mu1 / mu2) + mu2 - mu1) * LOG2E


def total_variation(p: ArrayLike, q: ArrayLike) -> float:
    """Normalized total variation ``0.5 * sum |p - q|`` (half the L1 distance)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """D(p || q) in nats for pmfs on a common support; inf if p is not << q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = special.rel_entr(p, q)
    return float(terms.sum())


@dataclass(frozen=True)
class PowerConstraint:
    """Peak and average intensity limits; ``p_avg >= p_max`` leaves the average inactive."""

    p_max: float
    p_avg: float

    def __post_init__(self) -> None:
        if not (self.p_max > 0 and self.p_avg > 0):
            raise ValueError("p_max and p_avg must be positive")

    @property
    def average_active(self) -> bool:
        return self.p_avg < self.p_max

    def admits(self, x: ArrayLike, slack: float = 0.0) -> bool:
        """Check peak and block-average limits for a sequence (average gets ``slack`` total)."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= 0) and np.all(x <= self.p_max) and x.sum() <= x.size * self.p_avg + slack)


@dataclass(frozen=True)
class StateChannel:
    """
    Poisson channel whose dark current is drawn i.i.d. from a finite state set.

    The state is unknown at both ends, so the effective channel is the
    probability-weighted average of the per-state Poisson laws.
    """

    states: tuple[tuple[float, PoissonChannel], ...]
    y_max: int = field(init=False)

    def __post_init__(self) -> None:
        if len(self.states) == 0:
            raise ValueError("state list is empty")
        probs = np.array([p for p, _ in self.states], dtype=float)
        if np.any(probs < 0):
            raise ValueError("state probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"state probabilities sum to {probs.sum()}, not 1")
        object.__setattr__(self, "states", tuple((float(p), ch) for p, ch in self.states))
        object.__setattr__(self, "y_max", max(ch.y_max for _, ch in self.states))

    @classmethod
    def from_dark_currents(
        cls, probs: Sequence[float], dark_currents: Sequence[float], p_max: float, gain: float = 1.0
    ) -> "StateChannel":
        chans = [PoissonChannel.for_peak(lam, p_max, gain) for lam in dark_currents]
        return cls(tuple(zip(probs, chans)))

    @property
    def n_outputs(self) -> int:
        return self.y_max + 1

    @property
    def probabilities(self) -> NDArray[np.float64]:
        return np.array([p for p, _ in self.states])

    def rows(self, xs: ArrayLike, y_max: int | None = None) -> NDArray[np.float64]:
        ymax = self.y_max if y_max is None else y_max
        if len(self.states) == 1:
            return self.states[0][1].rows(xs, ymax)
        out = None
        for p, ch in self.states:
            term = p * ch.rows(xs, ymax)
            out = term if out is None else out + term
        return out

    def row(self, x: float) -> NDArray[np.float64]:
        return self.rows([x])[0]

    def sample(self, x: ArrayLike, rng: np.random.Generator) -> NDArray[np.int64]:
        xs = np.asarray(x, dtype=float)
        idx = rng.choice(len(self.states), size=xs.shape, p=self.probabilities)
        lam = np.array([ch.dark_current for _, ch in self.states])[idx]
        gain = np.array([ch.gain for _, ch in self.states])[idx]
        return rng.poisson(gain * xs + lam)


@dataclass(frozen=True)
class GenericDmc:
    """
    Finite-input discrete memoryless channel given by a row-stochastic table.

    Parameters
    ----------
    matrix : ndarray, shape (n_inputs, n_outputs)
        ``matrix[i, y] = W(y | inputs[i])``.
    inputs : ndarray, shape (n_inputs,)
        Real input labels, also used as the per-letter cost.
    """

    matrix: NDArray[np.float64]
    inputs: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        x = np.asarray(self.inputs, dtype=float)
        if m.ndim != 2 or x.shape != (m.shape[0],):
            raise ValueError("matrix must be 2-D with one input label per row")
        if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows must be pmfs summing to 1 within 1e-12")
        m.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inputs", x)

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    @property
    def y_max(self) -> int:
        return self.matrix.shape[1] - 1


def averaged_channel(sc: StateChannel, grid: ArrayLike) -> GenericDmc:
    """Tabulate the state-averaged channel ``sum_s P_S(s) W_s(y|x)`` on an input grid."""
    grid = np.asarray(grid, dtype=float)
    return GenericDmc(sc.rows(grid), grid)


def rng_stream(root_seed: int, *index: int) -> np.random.Generator:
    """Independent generator derived from a root seed and a worker/trial index path."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), *map(int, index)]))
