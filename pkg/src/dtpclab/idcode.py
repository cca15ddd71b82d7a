"""
Randomized identification codes over the Poisson channel.

A message is a polynomial of degree at most ``d`` over the prime field
``GF(q)``; its coloring is the evaluation map ``j -> T_i(j)``. To send
message ``i`` the encoder draws an index ``j`` uniformly from the field,
sends ``j`` with an inner transmission code of length ``n`` and the color
``T_i(j)`` with a tag code of length ``ceil(sqrt(n))``. The receiver testing
candidate ``i'`` decodes ``(j, k)`` and accepts iff ``k == T_{i'}(j)``.

Two distinct polynomials agree on at most ``d`` field points, so a perfect
transport gives a second-kind error of at most ``d / q``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import special, stats

from .capacity import DiscreteInputDistribution, capacity
from .channel import PoissonChannel, PowerConstraint, StateChannel, rng_stream

MAX_RESAMPLE = 10_000
DEFAULT_PAIRS = 256


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    return all(q % k for k in range(3, math.isqrt(q) + 1, 2))


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


# ---------------------------------------------------------------------------
# transmission codes


@dataclass(frozen=True)
class InnerTransmissionCode:
    """
    Random block code with maximum-likelihood decoding over Poisson rows.

    Attributes
    ----------
    codewords : ndarray, shape (size, blocklength)
        Input intensities, one row per codeword.
    channel : PoissonChannel
        Channel assumed by the decoder.
    """

    codewords: NDArray[np.float64]
    channel: PoissonChannel

    def __post_init__(self) -> None:
        cw = np.array(self.codewords, dtype=float, ndmin=2)
        if np.any(cw < 0):
            raise ValueError("codeword intensities must be nonnegative")
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def blocklength(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate_bits(self) -> float:
        return math.log2(self.size) / self.blocklength

    def satisfies(self, pc: PowerConstraint) -> bool:
        """Per-letter peak and block sum ``<= len * p_avg + p_max`` for every codeword."""
        cw = self.codewords
        return bool(np.all(cw <= pc.p_max) and np.all(cw.sum(axis=1) <= self.blocklength * pc.p_avg + pc.p_max))

    def transmit(self, index: int | NDArray, rng: np.random.Generator) -> NDArray[np.int64]:
        return rng.poisson(self.channel.mean(self.codewords[index]))

    def log_likelihoods(self, y: NDArray) -> NDArray[np.float64]:
        """``log W^n(y | c)`` up to a codeword-independent term; shape ``(..., size)``."""
        means = self.channel.mean(self.codewords)
        y = np.asarray(y, dtype=float)
        if np.all(means > 0):
            return y @ np.log(means).T - means.sum(axis=1)
        # zero means (no dark current): xlogy keeps 0 log 0 = 0, in chunks to bound memory
        flat = y.reshape(-1, y.shape[-1])
        out = np.concatenate([
            special.xlogy(flat[s: s + 64, None, :], means).sum(axis=-1) for s in range(0, flat.shape[0], 64)
        ]) - means.sum(axis=1)
        return out.reshape(*y.shape[:-1], means.shape[0])

    def decode(self, y: NDArray) -> NDArray[np.int64] | int:
        """ML decision; ties go to the lowest index."""
        idx = np.argmax(self.log_likelihoods(y), axis=-1)
        return int(idx) if np.ndim(idx) == 0 else idx


def _draw_codeword(dist: DiscreteInputDistribution, length: int, pc: PowerConstraint, rng) -> NDArray:
    limit = length * pc.p_avg + pc.p_max
    for _ in range(MAX_RESAMPLE):
        cw = dist.sample(length, rng)
        if cw.sum() <= limit:
            return cw
    raise RuntimeError("could not draw a codeword meeting the block power limit")


def build_inner_code(
    ch: PoissonChannel,
    pc: PowerConstraint,
    blocklength: int,
    rate_bits: float | None = None,
    seed: int = 0,
    size: int | None = None,
    input_dist: DiscreteInputDistribution | None = None,
    capacity_bits: float | None = None,
) -> InnerTransmissionCode:
    """
    Random code with letters drawn i.i.d. from the capacity-achieving law.

    The codebook has ``ceil(2**(blocklength * rate_bits))`` codewords unless
    ``size`` is given, in which case ``rate_bits`` (if also given) acts as a
    ceiling on the realized rate. Codewords violating the block power limit
    are redrawn.
    """
    if blocklength < 1:
        raise ValueError("blocklength must be >= 1")
    if input_dist is None or (rate_bits is not None and capacity_bits is None):
        res = capacity(ch, pc)
        input_dist = input_dist or res.distribution
        capacity_bits = res.capacity_bits if capacity_bits is None else capacity_bits
    if rate_bits is not None and rate_bits >= capacity_bits:
        raise ValueError(f"rate {rate_bits:.4g} bits is not below capacity {capacity_bits:.4g} bits")
    if size is None:
        if rate_bits is None:
            raise ValueError("give rate_bits or size")
        size = math.ceil(2.0 ** (blocklength * rate_bits))
    elif rate_bits is not None and math.log2(size) / blocklength > rate_bits + 1e-12:
        raise ValueError(f"{size} codewords exceed rate {rate_bits:.4g} at blocklength {blocklength}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), blocklength, size]))
    cws = np.array([_draw_codeword(input_dist, blocklength, pc, rng) for _ in range(size)])
    return InnerTransmissionCode(cws.reshape(size, blocklength), ch)


# ---------------------------------------------------------------------------
# polynomial colorings


@dataclass(frozen=True)
class ColoringFamily:
    """
    Messages ``0 <= i < q**(d+1)`` read as base-``q`` coefficient vectors.

    ``T_i(j) = sum_k c_k j**k mod q``. ``n_messages`` can restrict the
    message set to a prefix (used for degenerate one-message families).
    """

    q: int
    degree: int
    n_messages: int | None = None

    def __post_init__(self) -> None:
        if not is_prime(self.q):
            raise ValueError(f"q={self.q} is not prime")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.n_messages is not None and not 1 <= self.n_messages <= self.q ** (self.degree + 1):
            raise ValueError("n_messages out of range")

    @property
    def size(self) -> int:
        return self.q ** (self.degree + 1) if self.n_messages is None else self.n_messages

    def coefficients(self, message: int) -> list[int]:
        if not 0 <= message < self.size:
            raise ValueError(f"message {message} outside [0, {self.size})")
        out = []
        for _ in range(self.degree + 1):
            message, c = divmod(message, self.q)
            out.append(c)
        return out

    def message_of(self, coeffs: Sequence[int]) -> int:
        m = 0
        for c in reversed(list(coeffs)):
            m = m * self.q + int(c) % self.q
        return m

    def color(self, message: int, j: int | NDArray) -> int | NDArray:
        """Horner evaluation of the message polynomial at ``j``."""
        j = np.asarray(j, dtype=np.int64)
        acc = np.zeros_like(j)
        for c in reversed(self.coefficients(message)):
            acc = (acc * j + c) % self.q
        return int(acc) if acc.ndim == 0 else acc

    def collisions(self, a: int, b: int) -> int:
        """Number of field points where the two colorings agree."""
        return int(np.sum(self.color(a, np.arange(self.q)) == self.color(b, np.arange(self.q))))

    def worst_partner(self, message: int, rng: np.random.Generator) -> int:
        """
        A message whose coloring agrees with ``message`` on exactly ``degree`` points.

        Adds ``a * prod_k (x - r_k)`` with distinct roots ``r_k`` and ``a != 0``.
        """
        q, d = self.q, self.degree
        poly = [1]
        for r in rng.choice(q, size=d, replace=False):
            # multiply by (x - r)
            poly = [((poly[k - 1] if k > 0 else 0) - r * (poly[k] if k < len(poly) else 0)) % q
                    for k in range(len(poly) + 1)]
        a = int(rng.integers(1, q))
        base = self.coefficients(message)
        return self.message_of([(c + a * p) % q for c, p in zip(base, poly)])


# ---------------------------------------------------------------------------
# the concatenated code


@dataclass(frozen=True)
class IdCodeSpec:
    """
    Concatenated identification code.

    ``inner`` carries the field index ``j`` (``q`` codewords of length ``n``);
    ``tag`` carries the color, optionally with random binning: codeword
    ``k * bin_size + u`` encodes color ``k`` with dummy ``u``.
    """

    inner: InnerTransmissionCode
    tag: InnerTransmissionCode
    coloring: ColoringFamily
    lambda1_target: float = 0.05
    lambda2_target: float = 0.05
    bin_size: int = 1

    def __post_init__(self) -> None:
        q = self.coloring.q
        if not self.lambda1_target + self.lambda2_target < 1:
            raise ValueError("lambda1_target + lambda2_target must be < 1")
        if self.inner.size != q:
            raise ValueError(f"inner code needs {q} codewords, has {self.inner.size}")
        if self.tag.size != q * self.bin_size:
            raise ValueError(f"tag code needs {q * self.bin_size} codewords, has {self.tag.size}")
        if self.tag.blocklength != math.ceil(math.sqrt(self.n)):
            raise ValueError("tag blocklength must be ceil(sqrt(n))")

    @property
    def n(self) -> int:
        return self.inner.blocklength

    @property
    def m(self) -> int:
        """Total blocklength ``n + ceil(sqrt(n))``."""
        return self.inner.blocklength + self.tag.blocklength

    @property
    def n_messages(self) -> int:
        return self.coloring.size

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "q": self.coloring.q,
            "degree": self.coloring.degree,
            "n_messages": self.n_messages,
            "bin_size": self.bin_size,
            "inner_rate_bits": self.inner.rate_bits,
            "tag_rate_bits": self.tag.rate_bits,
            "id_rate": rate_of(self) if self.n_messages >= 2 else None,
            "lambda1_target": self.lambda1_target,
            "lambda2_target": self.lambda2_target,
        }


def build_id_code(
    ch: PoissonChannel,
    pc: PowerConstraint,
    n: int,
    q: int,
    degree: int,
    inner_rate: float | None = None,
    bin_size: int = 1,
    seed: int = 0,
    lambda1_target: float = 0.05,
    lambda2_target: float = 0.05,
    n_messages: int | None = None,
) -> IdCodeSpec:
    """
    Build the concatenated code from one capacity solve.

    ``inner_rate`` (bits) is the design rate of the index code; the index
    only needs ``q`` codewords, so the realized rate ``log2(q) / n`` must not
    exceed it.
    """
    res = capacity(ch, pc)
    dist = res.distribution
    inner = build_inner_code(ch, pc, n, inner_rate, seed, size=q, input_dist=dist, capacity_bits=res.capacity_bits)
    tag_len = math.ceil(math.sqrt(n))
    tag_size = q * bin_size
    if math.log2(tag_size) / tag_len >= res.capacity_bits:
        raise ValueError(f"tag code rate {math.log2(tag_size) / tag_len:.3g} bits is not below capacity")
    tag = build_inner_code(ch, pc, tag_len, None, seed + 1, size=tag_size, input_dist=dist)
    return IdCodeSpec(inner, tag, ColoringFamily(q, degree, n_messages), lambda1_target, lambda2_target, bin_size)


def encode_id(spec: IdCodeSpec, message: int, rng: np.random.Generator) -> tuple[NDArray[np.float64], int]:
    """Input sequence of length ``m`` for ``message``, plus the drawn index ``j``."""
    if not 0 <= message < spec.n_messages:
        raise ValueError(f"message {message} outside [0, {spec.n_messages})")
    j = int(rng.integers(spec.coloring.q))
    k = spec.coloring.color(message, j)
    u = int(rng.integers(spec.bin_size)) if spec.bin_size > 1 else 0
    return np.concatenate([spec.inner.codewords[j], spec.tag.codewords[k * spec.bin_size + u]]), j


def decode_id(spec: IdCodeSpec, received: NDArray) -> tuple[NDArray | int, NDArray | int]:
    """ML index and color estimates; works on a single sequence or a batch."""
    received = np.asarray(received)
    if received.shape[-1] != spec.m:
        raise ValueError(f"received length {received.shape[-1]} != m = {spec.m}")
    j = spec.inner.decode(received[..., : spec.n])
    k = np.asarray(spec.tag.decode(received[..., spec.n:])) // spec.bin_size
    return j, (int(k) if k.ndim == 0 else k)


def identify(spec: IdCodeSpec, received: NDArray, candidate: int) -> bool:
    """Accept iff the decoded color equals the candidate's color at the decoded index."""
    j, k = decode_id(spec, received)
    return bool(k == spec.coloring.color(candidate, j))


def rate_of(spec: IdCodeSpec | None = None, n_messages: int | None = None, m: int | None = None) -> float:
    """``log2(log2 N) / m`` with ``N`` the number of messages."""
    if spec is not None:
        if spec.coloring.n_messages is None:
            # N = q**(d+1) exactly, without forming the integer
            return math.log2((spec.coloring.degree + 1) * math.log2(spec.coloring.q)) / spec.m
        n_messages, m = spec.n_messages, spec.m
    if n_messages is None or m is None:
        raise ValueError("give a spec or both n_messages and m")
    if n_messages < 2:
        raise ValueError("need at least 2 messages")
    return math.log2(math.log2(n_messages)) / m


def scaling_schedule(c_bits: float, eps: float, ns: Iterable[int]) -> list[dict]:
    """
    Code sizes along a blocklength schedule and the resulting ID rate.

    Index code with ``M' = ceil(2**(n (C - eps)))`` codewords, tag code
    with ``M'' = ceil(2**(sqrt(n) eps))`` colors; the number of colorings
    is ``N = M''**M'``. Rates are reported against ``C - 2 eps``.
    """
    rows = []
    target = c_bits - 2 * eps
    for n in ns:
        m = n + math.ceil(math.sqrt(n))
        m_prime = math.ceil(2.0 ** (n * (c_bits - eps)))
        m_dprime = math.ceil(2.0 ** (math.sqrt(n) * eps))
        # log2 log2 N = log2(M') + log2(log2 M'') computed from the integer sizes
        loglog = math.log2(m_prime) + math.log2(math.log2(m_dprime))
        rows.append({
            "n": n, "m": m, "log2_m_prime": math.log2(m_prime), "m_dprime": m_dprime,
            "loglog_n": loglog, "rate": loglog / m, "target": target,
            "rel_err": abs(loglog / m - target) / target,
        })
    return rows


# ---------------------------------------------------------------------------
# Monte-Carlo error measurement


@dataclass(frozen=True)
class TrialReport:
    """Identification error estimates with 95% Wilson intervals."""

    trials: int
    first_kind_errors: int
    second_kind_errors: int | None
    first_kind_rate: float
    second_kind_rate: float | None
    first_kind_ci: tuple[float, float]
    second_kind_ci: tuple[float, float] | None
    seed: int
    pair_mode: str
    n_pairs: int
    pair_collision_rate: float | None
    collision_bound: float
    rows: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "first_kind_errors": self.first_kind_errors,
            "second_kind_errors": self.second_kind_errors,
            "first_kind_rate": self.first_kind_rate,
            "second_kind_rate": self.second_kind_rate,
            "first_kind_ci": list(self.first_kind_ci),
            "second_kind_ci": None if self.second_kind_ci is None else list(self.second_kind_ci),
            "seed": self.seed,
            "pair_mode": self.pair_mode,
            "n_pairs": self.n_pairs,
            "pair_collision_rate": self.pair_collision_rate,
            "collision_bound": self.collision_bound,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "true_msg", "candidate", "accepted", "first_kind", "second_kind"])
            w.writerows(self.rows)


def sample_pairs(coloring: ColoringFamily, n_pairs: int, mode: str, rng: np.random.Generator) -> list[tuple[int, int]]:
    """
    Message pairs for second-kind testing.

    ``mode="worst"`` pairs every message with a partner that collides on
    exactly ``degree`` points, so the pooled rate estimates the maximum of
    the second-kind error over all pairs. ``mode="random"`` draws distinct
    pairs uniformly.
    """
    N = coloring.size
    if N < 2:
        return []
    pairs = []
    for _ in range(n_pairs):
        i = int(rng.integers(N))
        if mode == "worst" and coloring.n_messages is None:
            i2 = coloring.worst_partner(i, rng)
        elif mode in ("worst", "random"):
            i2 = int(rng.integers(N - 1))
            i2 += i2 >= i
        else:
            raise ValueError(f"unknown pair mode {mode!r}")
        pairs.append((i, i2))
    return pairs


def measure_errors(
    spec: IdCodeSpec,
    ch: PoissonChannel | StateChannel | None,
    trials: int,
    seed: int = 0,
    n_pairs: int = DEFAULT_PAIRS,
    pair_mode: str = "worst",
    keep_rows: bool = False,
) -> TrialReport:
    """
    Monte-Carlo first- and second-kind errors.

    Trial ``t`` uses pair ``(i, i') = pairs[t mod n_pairs]``: message ``i``
    is encoded and sent, then the receiver tests ``i`` (first kind) and
    ``i'`` (second kind) on the same output. Each trial draws from its own
    stream derived from ``(seed, t)``. ``ch=None`` transports codewords
    noiselessly, isolating coloring collisions.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    col = spec.coloring
    pairs = sample_pairs(col, n_pairs, pair_mode, np.random.default_rng([int(seed), 0xC0105]))
    if not pairs:
        pairs = [(0, None)]
    sent_i = np.empty(trials, dtype=np.int64)
    sent_j = np.empty(trials, dtype=np.int64)
    ys = np.empty((trials, spec.m), dtype=np.int64) if ch is not None else None
    tag_idx = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        rng = rng_stream(seed, 1, t)
        i = pairs[t % len(pairs)][0]
        x, j = encode_id(spec, i, rng)
        sent_i[t], sent_j[t] = i, j
        if ch is None:
            tag_idx[t] = col.color(i, j) * spec.bin_size
        else:
            ys[t] = ch.sample(x, rng)
    if ch is None:
        j_hat, k_hat = sent_j, tag_idx // spec.bin_size
    else:
        j_hat, k_hat = decode_id(spec, ys)
    first = np.array([k_hat[t] != col.color(int(sent_i[t]), int(j_hat[t])) for t in range(trials)])
    cand = [pairs[t % len(pairs)][1] for t in range(trials)]
    has_second = cand[0] is not None
    if has_second:
        second = np.array([k_hat[t] == col.color(cand[t], int(j_hat[t])) for t in range(trials)])
        n2 = int(second.sum())
        used = {pairs[t % len(pairs)] for t in range(min(trials, len(pairs)))}
        pair_rate = float(np.mean([col.collisions(a, b) for a, b in used])) / col.q
    else:
        second, n2, pair_rate = None, None, None
    n1 = int(first.sum())
    rows = ()
    if keep_rows:
        rows = tuple(
            (t, int(sent_i[t]), "" if cand[t] is None else int(cand[t]),
             int(not first[t]) if cand[t] is None else int(second[t]), int(first[t]),
             "" if cand[t] is None else int(second[t]))
            for t in range(trials)
        )
    return TrialReport(
        trials=trials,
        first_kind_errors=n1,
        second_kind_errors=n2,
        first_kind_rate=n1 / trials,
        second_kind_rate=None if n2 is None else n2 / trials,
        first_kind_ci=wilson_interval(n1, trials),
        second_kind_ci=None if n2 is None else wilson_interval(n2, trials),
        seed=int(seed),
        pair_mode=pair_mode,
        n_pairs=len(pairs) if has_second else 0,
        pair_collision_rate=pair_rate,
        collision_bound=col.degree / col.q,
        rows=rows,
    )
