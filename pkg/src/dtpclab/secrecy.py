"""
What the eavesdropper learns.

Exact quantities enumerate the truncated output space ``{0..y_max}^n`` and
are limited to short blocks; longer blocks fall back to Monte-Carlo with
exact likelihoods. Every result records which path produced it.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .channel import LOG2E, PoissonChannel, kl_divergence, rng_stream, total_variation
from .idcode import IdCodeSpec, encode_id

EXACT_MAX_N = 3
EXACT_MAX_MESSAGES = 8
MAX_STATES = 2_000_000


class BudgetError(RuntimeError):
    """Raised when exact enumeration would exceed its state budget."""


# ---------------------------------------------------------------------------
# per-message input ensembles and their output measures


@dataclass(frozen=True)
class MessageInput:
    """Distribution ``Q(.|i)`` over input sequences: rows of ``sequences`` with weights ``probs``."""

    sequences: NDArray[np.float64]
    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        s = np.array(self.sequences, dtype=float, ndmin=2)
        p = np.asarray(self.probs, dtype=float).ravel()
        if s.shape[0] != p.size:
            raise ValueError("one probability per sequence")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a pmf")
        if np.any(s < 0):
            raise ValueError("intensities must be nonnegative")
        object.__setattr__(self, "sequences", s)
        object.__setattr__(self, "probs", p / p.sum())

    @classmethod
    def deterministic(cls, seq: ArrayLike) -> "MessageInput":
        return cls(np.atleast_2d(np.asarray(seq, dtype=float)), np.array([1.0]))

    @property
    def n(self) -> int:
        return self.sequences.shape[1]

    def letter_moments(self) -> tuple[NDArray, NDArray]:
        """Per-letter ``E[X_l]`` and ``E[X_l^2]``."""
        return self.probs @ self.sequences, self.probs @ self.sequences**2


def _check_ensemble(ensemble: Sequence[MessageInput]) -> int:
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    n = ensemble[0].n
    if any(e.n != n for e in ensemble):
        raise ValueError("all messages need the same blocklength")
    return n


@dataclass(frozen=True)
class EveOutputMeasure:
    """
    Output law ``Q_i V^n`` of one message at the eavesdropper.

    Exactly one of ``pmf`` (flattened over ``{0..y_max}^n``, row-major) and
    ``samples`` is set.
    """

    message: int
    n: int
    y_max: int
    pmf: NDArray[np.float64] | None = None
    samples: NDArray[np.int64] | None = None

    @property
    def exact(self) -> bool:
        return self.pmf is not None

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.y_max + 1,) * self.n

    def mass(self, event: NDArray[np.bool_]) -> float:
        """Probability of an event given as a boolean mask over the output space."""
        if self.pmf is not None:
            return float(self.pmf[event.ravel()].sum())
        idx = np.ravel_multi_index(tuple(np.minimum(self.samples, self.y_max).T), self.shape)
        return float(np.mean(event.ravel()[idx]))


def _state_budget(n: int, y_max: int, limit: int = MAX_STATES) -> None:
    if (y_max + 1) ** n > limit:
        raise BudgetError(f"{y_max + 1}^{n} output sequences exceed the enumeration budget {limit}")


def output_measure(inp: MessageInput, eve: PoissonChannel, message: int = 0) -> EveOutputMeasure:
    """Exact ``sum_x Q(x|i) V^n(.|x)`` by tensor products of Poisson rows."""
    n = inp.n
    _state_budget(n, eve.y_max)
    pmf = np.zeros((eve.y_max + 1,) * n)
    for seq, p in zip(inp.sequences, inp.probs):
        rows = eve.rows(seq)
        t = rows[0]
        for r in rows[1:]:
            t = np.multiply.outer(t, r)
        pmf += p * t
    return EveOutputMeasure(message, n, eve.y_max, pmf=pmf.ravel())


def sampled_measure(
    inp: MessageInput, eve: PoissonChannel, size: int, seed: int, message: int = 0
) -> EveOutputMeasure:
    rng = rng_stream(seed, message)
    idx = rng.choice(inp.probs.size, size=size, p=inp.probs)
    z = rng.poisson(eve.mean(inp.sequences[idx]))
    return EveOutputMeasure(message, inp.n, eve.y_max, samples=z)


def exact_leakage(ensemble: Sequence[MessageInput], eve: PoissonChannel) -> float:
    """``I(M; Z^n)`` in bits for uniform ``M`` by full enumeration."""
    n = _check_ensemble(ensemble)
    if n > EXACT_MAX_N or len(ensemble) > EXACT_MAX_MESSAGES:
        raise BudgetError(f"exact leakage limited to n <= {EXACT_MAX_N}, |M| <= {EXACT_MAX_MESSAGES}")
    pmfs = np.array([output_measure(e, eve, i).pmf for i, e in enumerate(ensemble)])
    mix = pmfs.mean(axis=0)
    info = np.mean([kl_divergence(p, mix) for p in pmfs])
    return max(float(info), 0.0) * LOG2E


def per_letter_kl_bound(mean: float, second_moment: float, eve: PoissonChannel) -> float:
    """
    ``E[X^2] / (2 (lambda_E + E[X]))`` nats, returned in bits.

    Bounds ``I(X; Z)`` for one use of the Poisson channel with input
    statistics ``(E[X], E[X^2])`` and dark current ``lambda_E``.
    """
    if mean < 0 or second_moment < mean**2 - 1e-12 * max(1.0, mean**2):
        raise ValueError("need E[X] >= 0 and E[X^2] >= E[X]^2")
    denom = 2.0 * (eve.dark_current + eve.gain * mean)
    if denom == 0:
        return 0.0 if second_moment == 0 else math.inf
    return eve.gain**2 * second_moment / denom * LOG2E


def chain_rule_bound(ensemble: Sequence[MessageInput], eve: PoissonChannel) -> tuple[float, list[float]]:
    """``sum_l`` of per-letter bounds on the message-averaged letter statistics (bits)."""
    _check_ensemble(ensemble)
    means = np.mean([e.letter_moments()[0] for e in ensemble], axis=0)
    seconds = np.mean([e.letter_moments()[1] for e in ensemble], axis=0)
    per = [per_letter_kl_bound(float(m), float(s), eve) for m, s in zip(means, seconds)]
    return float(sum(per)), per


def pinsker_bound(kl: float, unit: str = "nats") -> float:
    """Total-variation bound ``sqrt(D_nats / 2)``, clamped to 1."""
    if kl < 0:
        raise ValueError("divergence must be nonnegative")
    d = kl / LOG2E if unit == "bits" else kl
    return min(1.0, math.sqrt(d / 2.0))


def half_sqrt_bound(kl: float, unit: str = "nats") -> float:
    """The variant ``0.5 sqrt(D)``, smaller than :func:`pinsker_bound` by ``sqrt(2)`` and not valid in general. Logged only."""
    if kl < 0:
        raise ValueError("divergence must be nonnegative")
    d = kl / LOG2E if unit == "bits" else kl
    return min(1.0, 0.5 * math.sqrt(d))


def leakage_scaling(c: float, lambda_e: float, ns: Sequence[int], p_on: float = 0.5) -> list[dict]:
    """
    Chain-rule bound for on-off letters with peak ``eps * lambda_e``, ``eps = c / n``.

    Each letter is ``eps * lambda_e`` with probability ``p_on`` and 0 otherwise.
    """
    eve = PoissonChannel(lambda_e, 0)
    rows = []
    for n in ns:
        eps = c / n
        a = eps * lambda_e
        per = per_letter_kl_bound(p_on * a, p_on * a * a, eve)
        rows.append({"n": n, "eps": eps, "per_letter_bits": per, "total_bits": n * per})
    return rows


@dataclass(frozen=True)
class LeakageReport:
    method: str
    exact_mi_bits: float | None
    chain_rule_bound_bits: float
    per_letter_kl_bounds: list[float]
    pinsker_tv_bound: float
    half_sqrt_tv_bound: float
    empirical_lrt_error_sum: float | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "exact_mi_bits": self.exact_mi_bits,
            "chain_rule_bound_bits": self.chain_rule_bound_bits,
            "per_letter_kl_bounds": list(self.per_letter_kl_bounds),
            "pinsker_tv_bound": self.pinsker_tv_bound,
            "half_sqrt_tv_bound": self.half_sqrt_tv_bound,
            "empirical_lrt_error_sum": self.empirical_lrt_error_sum,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def leakage_report(ensemble: Sequence[MessageInput], eve: PoissonChannel) -> LeakageReport:
    """
    Leakage summary; the exact value is present only on the enumeration path.

    The TV bounds apply to ``P_{M Z^n}`` versus ``P_M P_{Z^n}`` via
    ``I(M; Z^n)``, using the exact value when available and the chain-rule
    bound otherwise.
    """
    n = _check_ensemble(ensemble)
    bound, per = chain_rule_bound(ensemble, eve)
    exact = None
    method = "bound-only"
    if n <= EXACT_MAX_N and len(ensemble) <= EXACT_MAX_MESSAGES:
        try:
            exact = exact_leakage(ensemble, eve)
            method = "exact"
        except BudgetError:
            pass
    info = exact if exact is not None else bound
    return LeakageReport(method, exact, bound, per, pinsker_bound(info, "bits"), half_sqrt_bound(info, "bits"))


# ---------------------------------------------------------------------------
# eavesdropper hypothesis test on an identification code


def _log_rows(code, eve: PoissonChannel, z: NDArray) -> NDArray:
    """``log V^L(z | c)`` for every codeword ``c``; ``z`` has shape ``(T, L)``."""
    means = eve.mean(code.codewords)  # (K, L)
    z = np.asarray(z, dtype=float)
    if np.all(means > 0):
        cross = z @ np.log(means).T
    else:
        cross = special.xlogy(z[:, None, :], means[None, :, :]).sum(axis=2)
    return cross - means.sum(axis=1)[None, :] - special.gammaln(z + 1).sum(axis=1)[:, None]


def _id_tables(spec: IdCodeSpec, eve: PoissonChannel, z: NDArray) -> tuple[NDArray, NDArray]:
    """Per-index inner log-likelihoods and per-color bin log-likelihoods, each ``(T, q)``."""
    q, b = spec.coloring.q, spec.bin_size
    la = _log_rows(spec.inner, eve, z[:, : spec.n])
    lg = _log_rows(spec.tag, eve, z[:, spec.n:]).reshape(z.shape[0], q, b)
    return la, special.logsumexp(lg, axis=2) - math.log(b)


def _mixture(spec: IdCodeSpec, message: int, la: NDArray, lbin: NDArray) -> NDArray:
    colors = spec.coloring.color(message, np.arange(spec.coloring.q))
    return special.logsumexp(la + lbin[:, colors], axis=1) - math.log(spec.coloring.q)


def id_log_likelihoods(
    spec: IdCodeSpec, eve: PoissonChannel, messages: Sequence[int], z: NDArray, chunk: int = 256
) -> NDArray:
    """Exact ``log Q_i V^m(z)`` (natural log) for each message; shape ``(len(messages), T)``."""
    z = np.atleast_2d(z)
    out = np.empty((len(messages), z.shape[0]))
    for s in range(0, z.shape[0], chunk):
        la, lbin = _id_tables(spec, eve, z[s: s + chunk])
        for r, msg in enumerate(messages):
            out[r, s: s + chunk] = _mixture(spec, msg, la, lbin)
    return out


def id_log_likelihood(spec: IdCodeSpec, eve: PoissonChannel, message: int, z: NDArray) -> NDArray:
    return id_log_likelihoods(spec, eve, [message], z)[0]


@dataclass(frozen=True)
class IndistinguishabilityReport:
    """Eve's best test between two identities: ``type_i + type_ii = 1 - TV``."""

    method: str
    error_sum: float
    type_i: float
    type_ii: float
    tv: float
    sigma: float
    trials: int | None
    seed: int | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("method", "error_sum", "type_i", "type_ii", "tv", "sigma", "trials", "seed")}


def eve_indistinguishability(
    spec: IdCodeSpec,
    eve: PoissonChannel,
    i: int,
    j: int,
    trials: int = 10_000,
    seed: int = 0,
    exact: bool | None = None,
) -> IndistinguishabilityReport:
    """
    Minimum over tests of type-I plus type-II error for ``Q_i V^m`` against ``Q_j V^m``.

    The likelihood-ratio test with exact mixture likelihoods is optimal, so
    the minimum equals ``1 - TV``. Exhaustive for ``m <= 3`` (or
    ``exact=True``), Monte-Carlo with ``trials`` draws per hypothesis
    otherwise.
    """
    if i == j:
        raise ValueError("need two distinct messages")
    if exact is None:
        exact = spec.m <= EXACT_MAX_N
    if exact:
        _state_budget(spec.m, eve.y_max)
        grid = np.array(list(itertools.product(range(eve.y_max + 1), repeat=spec.m)))
        pi, pj = np.exp(id_log_likelihoods(spec, eve, [i, j], grid))
        tv = total_variation(pi, pj)
        decide_j = pj > pi
        t1 = float(pi[decide_j].sum())
        t2 = float(pj[~decide_j].sum())
        return IndistinguishabilityReport("exact", t1 + t2, t1, t2, tv, 0.0, None, None)

    def draw(msg: int, stream: int) -> NDArray:
        out = np.empty((trials, spec.m), dtype=np.int64)
        for t in range(trials):
            rng = rng_stream(seed, stream, t)
            x, _ = encode_id(spec, msg, rng)
            out[t] = eve.sample(x, rng)
        return out

    zi, zj = draw(i, 1), draw(j, 2)
    li_i, lj_i = id_log_likelihoods(spec, eve, [i, j], zi)
    li_j, lj_j = id_log_likelihoods(spec, eve, [i, j], zj)
    t1 = float(np.mean(lj_i > li_i))
    t2 = float(np.mean(lj_j <= li_j))
    sigma = math.sqrt((t1 * (1 - t1) + t2 * (1 - t2)) / trials)
    return IndistinguishabilityReport("monte-carlo", t1 + t2, t1, t2, 1.0 - (t1 + t2), sigma, trials, seed)


# ---------------------------------------------------------------------------
# quantized models and the event audit


def quantize_input(inp: MessageInput, grid: ArrayLike) -> MessageInput:
    """Move every letter to the nearest grid point (ties to the lower point) and merge duplicates."""
    g = np.sort(np.asarray(grid, dtype=float))
    if g.size > 1:
        pos = np.clip(np.searchsorted(g, inp.sequences), 1, g.size - 1)
        lower, upper = g[pos - 1], g[pos]
        q = np.where(inp.sequences - lower <= upper - inp.sequences, lower, upper)
    else:
        q = np.full_like(inp.sequences, g[0])
    uniq, inv = np.unique(q, axis=0, return_inverse=True)
    probs = np.bincount(inv.ravel(), weights=inp.probs, minlength=uniq.shape[0])
    return MessageInput(uniq, probs)


def _cap_outputs(pmf: NDArray, n: int, y_max: int, z0: int) -> NDArray:
    """Lump all mass with any coordinate above ``z0`` onto ``z0`` in that coordinate."""
    t = pmf.reshape((y_max + 1,) * n)
    for axis in range(n):
        head = np.take(t, np.arange(z0), axis=axis)
        tail = np.take(t, np.arange(z0, y_max + 1), axis=axis).sum(axis=axis, keepdims=True)
        rest = np.zeros_like(np.take(t, np.arange(z0 + 1, y_max + 1), axis=axis))
        t = np.concatenate([head, tail, rest], axis=axis)
    return t.ravel()


def quantized_measure(
    inp: MessageInput, eve: PoissonChannel, z0: int, grid: ArrayLike, message: int = 0
) -> tuple[EveOutputMeasure, float]:
    """
    Output law of the grid-quantized input with outputs capped at ``z0``,
    and the certificate ``delta' = TV(original, quantized)`` by enumeration.
    """
    if z0 < 0:
        raise ValueError("z0 must be nonnegative")
    g = np.asarray(grid, dtype=float)
    if g.min() > inp.sequences.min() + 1e-12 or g.max() < inp.sequences.max() - 1e-12:
        raise ValueError("grid does not cover the input range")
    orig = output_measure(inp, eve, message)
    qm = output_measure(quantize_input(inp, g), eve, message)
    pmf = qm.pmf if z0 >= eve.y_max else _cap_outputs(qm.pmf, inp.n, eve.y_max, z0)
    quant = EveOutputMeasure(message, inp.n, eve.y_max, pmf=pmf)
    return quant, total_variation(orig.pmf, pmf)


@dataclass(frozen=True)
class EventAudit:
    """``|Q_i(E) - Q_j(E)|`` over random events against ``TV(quantized pair) + 2 delta'``."""

    bound: float
    max_gap: float
    rows: tuple = field(repr=False)

    @property
    def holds(self) -> bool:
        return self.max_gap <= self.bound + 1e-12

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["event_id", "q_i_mass", "q_j_mass", "abs_diff"])
            w.writerows(self.rows)


def event_audit(
    qi: EveOutputMeasure,
    qj: EveOutputMeasure,
    qi_hat: EveOutputMeasure,
    qj_hat: EveOutputMeasure,
    delta: float,
    n_events: int = 1000,
    seed: int = 0,
) -> EventAudit:
    """
    Check ``|Q_i(E) - Q_j(E)| <= TV(Q^_i, Q^_j) + 2 delta'`` on random events.

    Events are random subsets of the output space, plus the two
    likelihood-ratio sets that attain the original TV.
    """
    rng = np.random.default_rng(seed)
    bound = total_variation(qi_hat.pmf, qj_hat.pmf) + 2 * delta
    size = qi.pmf.size
    events = [qi.pmf > qj.pmf, qj.pmf > qi.pmf]
    events += [rng.random(size) < rng.random() for _ in range(max(n_events - 2, 0))]
    rows = []
    for k, e in enumerate(events[:n_events]):
        a, b = qi.mass(e), qj.mass(e)
        rows.append((k, a, b, abs(a - b)))
    return EventAudit(bound, max(r[3] for r in rows), tuple(rows))
