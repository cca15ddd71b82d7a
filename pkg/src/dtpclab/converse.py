"""
Information-density sampling and the Chebyshev tail bound.

With a capacity-achieving input law the per-letter information density
``i(x, y) = log2 W(y|x) / P_Y(y)`` has mean ``C``, and its block average
concentrates. The closed-form ``gamma(lambda, p_max)`` bounds the per-letter
second moment, giving ``Pr{(1/n) sum_t i(X_t, Y_t) >= C + nu} <= gamma / n``
(``gamma / n`` is applied as given, with no ``nu**-2`` factor).
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .capacity import CapacityResult, DiscreteInputDistribution, capacity
from .channel import LOG2E, PoissonChannel, PowerConstraint, rng_stream

CHUNK_LETTERS = 2_000_000


@dataclass(frozen=True)
class GammaBound:
    """Closed-form variance proxy; every term in base 2."""

    lambda_: float
    p_max: float
    alpha: float
    beta: float
    gamma: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d


def gamma_bound(lam: float, p_max: float) -> GammaBound:
    """
    ``gamma = log2(e) (log2(e) (lam + P)^2 / lam + P + 1) + a^2 (lam + P)^2 + 2 a b (lam + P) + b^2``

    with ``a = log2(1 + P / lam)`` and ``b = P``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive; the 1/lambda term diverges at 0")
    if not p_max > 0:
        raise ValueError("p_max must be positive")
    s = lam + p_max
    a = math.log2(1.0 + p_max / lam)
    b = float(p_max)
    g = LOG2E * (LOG2E * s * s / lam + p_max + 1.0) + a * a * s * s + 2.0 * a * b * s + b * b
    return GammaBound(float(lam), float(p_max), a, b, g)


def _log_ratio_table(ch: PoissonChannel, dist: DiscreteInputDistribution, output_pmf: NDArray) -> NDArray:
    rows = ch.rows(dist.points)
    with np.errstate(divide="ignore"):
        return np.log2(rows) - np.log2(output_pmf)[None, :]


def info_density(
    x_seq: ArrayLike, y_seq: ArrayLike, output_pmf: ArrayLike, ch: PoissonChannel
) -> float:
    """``(1/n) sum_t log2 W(y_t | x_t) / P_Y(y_t)`` in bits."""
    x = np.atleast_1d(np.asarray(x_seq, dtype=float))
    y = np.atleast_1d(np.asarray(y_seq, dtype=np.int64))
    py = np.asarray(output_pmf, dtype=float)
    if x.shape != y.shape:
        raise ValueError("sequences must have equal length")
    if np.any(y < 0) or np.any(y >= py.size):
        raise ValueError("output outside the truncated alphabet; truncation too tight")
    q = py[y]
    if np.any(q <= 0):
        raise ValueError("zero output mass at an observed symbol; truncation too tight")
    w = np.array([ch.pmf(xi, int(yi)) for xi, yi in zip(x, y)])
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log2(w) - np.log2(q)))


def per_letter_moments(ch: PoissonChannel, res: CapacityResult) -> tuple[float, float]:
    """Exact mean and variance of ``i(X, Y)`` under the optimal input (bits, bits^2)."""
    dist = res.distribution
    t = _log_ratio_table(ch, dist, res.output_pmf)
    w = dist.probs[:, None] * ch.rows(dist.points)
    t = np.where(w > 0, t, 0.0)
    mean = float(np.sum(w * t))
    return mean, float(np.sum(w * t * t) - mean * mean)


def sample_info_density(
    ch: PoissonChannel,
    res: CapacityResult,
    n: int,
    samples: int,
    seed: int,
    pc: PowerConstraint | None = None,
) -> NDArray[np.float64]:
    """
    Block-averaged information densities for ``samples`` independent blocks.

    Inputs are i.i.d. from the optimal law; when the average constraint is
    active, blocks with ``sum x > n p_avg`` are redrawn. Work is split into
    chunks, each with its own stream derived from ``(seed, n, chunk)``.
    """
    dist = res.distribution
    table = _log_ratio_table(ch, dist, res.output_pmf)
    means = ch.mean(dist.points)
    limit = n * pc.p_avg if pc is not None and pc.average_active else math.inf
    per_chunk = max(1, CHUNK_LETTERS // n)
    out = np.empty(samples)
    for c, start in enumerate(range(0, samples, per_chunk)):
        rng = rng_stream(seed, n, c)
        size = min(per_chunk, samples - start)
        k = rng.choice(dist.probs.size, size=(size, n), p=dist.probs)
        bad = dist.points[k].sum(axis=1) > limit
        while np.any(bad):
            k[bad] = rng.choice(dist.probs.size, size=(int(bad.sum()), n), p=dist.probs)
            bad = dist.points[k].sum(axis=1) > limit
        y = rng.poisson(means[k])
        if np.any(y > ch.y_max):
            raise ValueError("sampled output beyond the truncation; truncation too tight")
        vals = table[k, y]
        if not np.all(np.isfinite(vals)):
            raise ValueError("zero output mass at an observed symbol")
        out[start: start + size] = vals.mean(axis=1)
    return out


@dataclass(frozen=True)
class ConverseRow:
    n: int
    nu: float
    empirical_tail: float
    chebyshev_bound: float
    samples: int
    seed: int
    mean: float
    quantile_999: float

    @property
    def holds(self) -> bool:
        return self.empirical_tail <= self.chebyshev_bound


@dataclass(frozen=True)
class ConverseTable:
    capacity_bits: float
    gamma: GammaBound
    per_letter_mean: float
    per_letter_variance: float
    rows: tuple[ConverseRow, ...]

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.rows)

    def check(self) -> "ConverseTable":
        bad = [r.n for r in self.rows if not r.holds]
        if bad:
            raise AssertionError(f"empirical tail exceeds gamma/n at n = {bad}")
        return self

    def to_dict(self) -> dict:
        return {
            "capacity_bits": self.capacity_bits,
            "gamma": self.gamma.to_dict(),
            "per_letter_mean": self.per_letter_mean,
            "per_letter_variance": self.per_letter_variance,
            "rows": [asdict(r) for r in self.rows],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "nu", "empirical_tail", "chebyshev_bound", "samples", "seed"])
            for r in self.rows:
                w.writerow([r.n, r.nu, r.empirical_tail, r.chebyshev_bound, r.samples, r.seed])


def converse_experiment(
    ch: PoissonChannel,
    pc: PowerConstraint,
    ns: Sequence[int],
    nu: float = 0.1,
    samples: int = 100_000,
    seed: int = 0,
    res: CapacityResult | None = None,
) -> ConverseTable:
    """Empirical ``Pr{info density >= C + nu}`` against ``gamma / n`` for each ``n``."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    if len(ns) == 0:
        raise ValueError("empty blocklength list")
    res = capacity(ch, pc, strict=True) if res is None else res
    c = res.capacity_bits
    g = gamma_bound(ch.dark_current, pc.p_max)
    mean, var = per_letter_moments(ch, res)
    rows = []
    for n in ns:
        v = sample_info_density(ch, res, int(n), samples, seed, pc)
        rows.append(ConverseRow(
            n=int(n), nu=float(nu), empirical_tail=float(np.mean(v >= c + nu)),
            chebyshev_bound=g.gamma / n, samples=int(samples), seed=int(seed),
            mean=float(v.mean()), quantile_999=float(np.quantile(v, 0.999)),
        ))
    return ConverseTable(c, g, mean, var, tuple(rows))
