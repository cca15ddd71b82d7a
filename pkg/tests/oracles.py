"""
Reference computations written independently of the package.

Nothing here imports ``dtpclab``; channel tables come straight from
``scipy.stats.poisson``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def poisson_table(lam: float, xs: np.ndarray, tail: float = 1e-15) -> np.ndarray:
    y_top = int(stats.poisson.isf(tail, lam + xs.max())) + 2
    t = stats.poisson.pmf(np.arange(y_top + 1)[None, :], lam + xs[:, None])
    return t / t.sum(axis=1, keepdims=True)


def _divergence(w: np.ndarray, p: np.ndarray) -> np.ndarray:
    q = p @ w
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, w * np.log(w / q), 0.0)
    return terms.sum(axis=1)


def _tilted_ba(w, xs, s, p, tol, max_iter):
    """Classic iteration for max_p I - s E[X] (nats)."""
    for _ in range(max_iter):
        c = np.exp(_divergence(w, p) - s * xs)
        lo = math.log(p @ c)
        hi = math.log(c.max())
        p = p * c
        p /= p.sum()
        if hi - lo < tol:
            break
    return p, lo, hi


def grid_ba_capacity(lam: float, p_max: float, p_avg: float, n_grid: int = 2000, tol_bits: float = 1e-5,
                     max_iter: int = 100_000) -> tuple[float, float]:
    """
    Lower and upper bounds (bits) on the grid-restricted capacity.

    Plain Blahut-Arimoto with a cost multiplier ``s`` found by bisection so the
    mean meets ``p_avg``. The lower bound is ``I(p)`` of a feasible law (mixed
    with a point mass at 0 if the mean overshoots), the upper bound is the
    dual value ``max_x [D(x) - s x] + s p_avg``.
    """
    xs = np.linspace(0.0, p_max, n_grid)
    w = poisson_table(lam, xs)
    tol = tol_bits * math.log(2)
    p = np.full(n_grid, 1.0 / n_grid)
    s = 0.0
    p, _, _ = _tilted_ba(w, xs, s, p, 10 * tol, max_iter)
    if p @ xs > p_avg:
        lo_s, hi_s = 0.0, 1.0
        while (_tilted_ba(w, xs, hi_s, p.copy(), 10 * tol, max_iter)[0] @ xs) > p_avg:
            hi_s *= 2
        for _ in range(30):
            mid = 0.5 * (lo_s + hi_s)
            p_mid, _, _ = _tilted_ba(w, xs, mid, p, 10 * tol, max_iter)
            p = p_mid
            if p_mid @ xs > p_avg:
                lo_s = mid
            else:
                hi_s = mid
        s = hi_s
    p, _, _ = _tilted_ba(w, xs, s, p, tol, max_iter)
    mean = p @ xs
    if mean > p_avg:
        t = 1.0 - p_avg / mean
        p = (1.0 - t) * p
        p[0] += t
    d = _divergence(w, p)
    lower = float(p @ d)
    upper = float(np.max(d - s * xs) + s * p_avg)
    return lower / math.log(2), upper / math.log(2)


def mutual_information_bits(lam: float, xs, ps) -> float:
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    w = poisson_table(lam, xs)
    return float(ps @ _divergence(w, ps)) / math.log(2)


def kl_poisson_series(mu1: float, mu2: float, terms: int = 4000) -> float:
    """D(Poi(mu1) || Poi(mu2)) in bits by direct summation of the pmf series."""
    k = np.arange(terms)
    logp = k * math.log(mu1) - mu1 - np.array([math.lgamma(i + 1) for i in k])
    logq = k * math.log(mu2) - mu2 - np.array([math.lgamma(i + 1) for i in k])
    p = np.exp(logp)
    return float(np.sum(p * (logp - logq))) / math.log(2)


def gamma_closed_form(lam: float, p: float) -> float:
    """
    Second-moment proxy re-derived by hand.

    With ``L = log2 e``, ``s = lam + p`` and ``a = log2(1 + p/lam)``:
    ``L^2 s^2 / lam + L (p + 1) + (a s + p)^2``.
    """
    L = 1.0 / math.log(2.0)
    s = lam + p
    a = math.log2(1.0 + p / lam)
    return L * L * s * s / lam + L * (p + 1.0) + (a * s + p) ** 2


def binary_chernoff_error(mu0: float, mu1: float, n: int) -> float:
    """Exact ML error for two constant codewords with Poisson means ``mu0 < mu1`` over ``n`` uses."""
    # sufficient statistic is the total count; ML threshold on the sum
    t = n * (mu1 - mu0) / math.log(mu1 / mu0)
    k = math.floor(t)
    e0 = stats.poisson.sf(k, n * mu0)  # decide 1 when sum > t
    e1 = stats.poisson.cdf(k, n * mu1)
    return 0.5 * (e0 + e1)


def grid_secrecy_capacity(lam_b: float, lam_e: float, p_max: float, n_grid: int = 501,
                          iters: int = 4000) -> tuple[float, float]:
    """
    Bounds (bits) on ``max_p I_W(p) - I_V(p)`` over laws on a uniform grid, peak only.

    Frank-Wolfe with exact line search by golden section; the objective is
    concave for a degraded pair, so the Frank-Wolfe gap is a valid upper bound.
    """
    from scipy.optimize import minimize_scalar

    xs = np.linspace(0.0, p_max, n_grid)
    wb = poisson_table(lam_b, xs)
    we = poisson_table(lam_e, xs)

    def value(p):
        return float(p @ _divergence(wb, p) - p @ _divergence(we, p))

    p = np.full(n_grid, 1.0 / n_grid)
    gap = math.inf
    for _ in range(iters):
        g = _divergence(wb, p) - _divergence(we, p)
        k = int(np.argmax(g))
        gap = float(g[k] - p @ g)
        if gap < 1e-7:
            break
        e = np.zeros(n_grid)
        e[k] = 1.0
        t = minimize_scalar(lambda t: -value((1 - t) * p + t * e), bounds=(0.0, 1.0), method="bounded",
                            options={"xatol": 1e-10}).x
        p = (1 - t) * p + t * e
    v = value(p)
    return v / math.log(2), (v + gap) / math.log(2)


def bhattacharyya_bound(mu0: float, mu1: float, n: int) -> float:
    """Chernoff (s = 1/2) bound on the ML error for two constant Poisson codewords, equal priors."""
    return 0.5 * math.exp(-n * (math.sqrt(mu1) - math.sqrt(mu0)) ** 2 / 2.0)


def wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    return centre - half, centre + half
