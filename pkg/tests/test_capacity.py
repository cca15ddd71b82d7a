import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dtpclab import capacity as cap
from dtpclab.channel import GenericDmc, PoissonChannel, PowerConstraint, StateChannel
from oracles import grid_secrecy_capacity, mutual_information_bits, poisson_table

# frozen from independent 2000-point grid Blahut-Arimoto runs (lower, upper bounds in bits)
GRID_ORACLE = {
    (1.0, 5.0, 5.0): (0.7397689584, 0.7397789537),
    (1.0, 5.0, 1.0): (0.5355944134, 0.5357035792),
    (0.1, 2.0, 2.0): (0.5700261215, 0.5700361175),
}
# frozen from a 501-point Frank-Wolfe run on the difference objective
SECRECY_ORACLE = {(1.0, 10.0, 5.0): (0.4480235572, 0.4481817492)}


def dist(points, probs):
    return cap.DiscreteInputDistribution(np.asarray(points, float), np.asarray(probs, float))


# ---------------------------------------------------------------------------
# mutual information and the Lagrangian


def test_mi_of_point_mass_is_zero():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    for x in (0.0, 2.5, 5.0):
        assert cap.mutual_information(cap.DiscreteInputDistribution.point_mass(x), ch) == 0.0


def test_mi_near_noiseless_binary():
    ch = PoissonChannel.for_peak(1e-6, 10.0)
    mi = cap.mutual_information(dist([0.0, 10.0], [0.5, 0.5]), ch)
    assert mi == pytest.approx(mutual_information_bits(1e-6, [0, 10], [0.5, 0.5]), abs=1e-12)
    # as the dark current vanishes only Y = 0 is ambiguous: I -> 1 - P(Y=0) h(P(X=10 | Y=0))
    e = math.exp(-10.0)
    post = e / (1.0 + e)
    h = -post * math.log2(post) - (1 - post) * math.log2(1 - post)
    assert mi == pytest.approx(1.0 - 0.5 * (1.0 + e) * h, abs=1e-5)
    assert 0.999 < mi < 1.0


def test_mi_matches_double_sum_oracle():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    d = dist([0.0, 5.0], [0.5, 0.5])
    assert cap.mutual_information(d, ch) == pytest.approx(mutual_information_bits(1.0, [0, 5], [0.5, 0.5]), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=5, unique=True), st.integers(0, 2**31))
def test_mi_bounds(points, seed):
    points = sorted(points)
    p = np.random.default_rng(seed).dirichlet(np.ones(len(points)))
    ch = PoissonChannel.for_peak(1.0, 5.0)
    mi = cap.mutual_information(dist(points, p), ch)
    entropy = -np.sum(p * np.log2(p))
    assert -1e-12 <= mi <= entropy + 1e-9


def test_lagrangian_point_mass_vanishes():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    assert cap.lagrangian(0.0, 3.0, cap.DiscreteInputDistribution.point_mass(3.0), ch, 5.0) == pytest.approx(0, abs=1e-15)


def test_lagrangian_matches_series_divergence():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    d = dist([0.0, 5.0], [0.5, 0.5])
    y = np.arange(200)
    py = 0.5 * stats.poisson.pmf(y, 1.0) + 0.5 * stats.poisson.pmf(y, 6.0)
    w = stats.poisson.pmf(y, 3.5)
    div = float(np.sum(w * np.log2(w / py)))
    info = mutual_information_bits(1.0, [0, 5], [0.5, 0.5])
    assert cap.lagrangian(0.0, 2.5, d, ch, 5.0) == pytest.approx(info - div, abs=1e-10)


def test_lagrangian_vanishes_on_support(solve):
    res = solve(1.0, 5.0, 1.0)
    ch = PoissonChannel.for_peak(1.0, 5.0)
    vals = cap.lagrangian(res.mu, res.distribution.points, res.distribution, ch, 1.0)
    assert np.max(np.abs(vals)) <= cap.KKT_TOL
    grid = np.linspace(0, 5, 2001)
    assert np.min(cap.lagrangian(res.mu, grid, res.distribution, ch, 1.0)) >= -cap.KKT_TOL


# ---------------------------------------------------------------------------
# Blahut-Arimoto on finite tables


def test_ba_uninformative_channel():
    m = np.array([[0.3, 0.7], [0.3, 0.7]])
    r = cap.blahut_arimoto(m)
    assert r.capacity_bits == pytest.approx(0.0, abs=1e-12)
    d, lo, hi = cap.ba_step(dist([0.0, 1.0], [0.9, 0.1]), cap._TableChannel(m, np.array([0.0, 1.0])))
    assert lo == pytest.approx(0.0, abs=1e-12) and hi == pytest.approx(0.0, abs=1e-12)


def test_ba_binary_symmetric_channel():
    eps = 0.11
    m = np.array([[1 - eps, eps], [eps, 1 - eps]])
    h = -eps * math.log2(eps) - (1 - eps) * math.log2(1 - eps)
    r = cap.dmc_capacity(GenericDmc(m, np.array([0.0, 1.0])))
    assert r.capacity_bits == pytest.approx(1 - h, abs=1e-6)
    np.testing.assert_allclose(r.probs, [0.5, 0.5], atol=1e-4)


def test_ba_monotone_history():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    xs = np.linspace(0, 5, 64)
    r = cap.blahut_arimoto(ch.rows(xs), xs, tol=1e-7)
    h = np.array(r.history)
    assert np.all(np.diff(h) >= -1e-12)
    assert r.upper_bits - r.capacity_bits <= 1e-7


def test_ba_64_grid_matches_subsupport_search():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    xs = np.linspace(0, 5, 64)
    rows = ch.rows(xs)
    r = cap.blahut_arimoto(rows, xs, tol=1e-8)
    # exhaustive search over 3-point sub-supports {0, x_k, 5} with masses on a simplex grid
    w = poisson_table(1.0, xs)
    step = np.linspace(0, 1, 201)
    a, b = np.meshgrid(step, step, indexing="ij")
    keep = a + b <= 1 + 1e-12
    a, b = a[keep], b[keep]
    best = 0.0
    for k in range(1, 63):
        trip = w[[0, k, 63]]
        p = np.stack([a, b, np.clip(1 - a - b, 0, None)], axis=1)
        q = p @ trip
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.where(trip[None] > 0, trip[None] * np.log2(trip[None] / q[:, None, :]), 0.0)
        best = max(best, float(np.max(np.einsum("nj,nj->n", p, lr.sum(axis=2)))))
    assert abs(r.capacity_bits - best) <= 1e-4


def test_ba_average_constraint_active():
    xs = np.linspace(0, 5, 101)
    ch = PoissonChannel.for_peak(1.0, 5.0)
    r = cap.blahut_arimoto(ch.rows(xs), xs, p_avg=1.0, tol=1e-7)
    assert r.probs @ xs <= 1.0 + 1e-9
    assert r.mu > 0


def test_ba_convergence_error():
    ch = PoissonChannel.for_peak(1.0, 5.0)
    xs = np.linspace(0, 5, 400)
    with pytest.raises(cap.ConvergenceError):
        cap.blahut_arimoto(ch.rows(xs), xs, tol=1e-12, max_iter=5)


# ---------------------------------------------------------------------------
# continuous-input solver


@pytest.mark.parametrize("key", list(GRID_ORACLE))
def test_capacity_matches_grid_oracle(solve, key):
    res = solve(*key)
    lo, hi = GRID_ORACLE[key]
    assert lo - 1e-6 <= res.capacity_bits <= hi + 1e-6
    assert abs(res.capacity_bits - lo) <= 1e-4
    assert res.certified and res.kkt_max_violation <= 1e-4


def test_capacity_frozen_values(solve):
    assert solve(1.0, 5.0, 5.0).capacity_bits == pytest.approx(0.7397739, abs=2e-6)
    assert solve(1.0, 5.0, 1.0).capacity_bits == pytest.approx(0.5355964, abs=2e-6)
    assert solve(0.1, 2.0, 2.0).capacity_bits == pytest.approx(0.5700308, abs=2e-6)


def test_capacity_average_inactive_equals_peak_only(solve):
    a = solve(1.0, 5.0, 5.0)
    b = solve(1.0, 5.0, 50.0)
    assert a.capacity_bits == pytest.approx(b.capacity_bits, abs=1e-9)
    assert a.mu == pytest.approx(0.0, abs=1e-9)


def test_capacity_average_active(solve):
    res = solve(1.0, 5.0, 1.0)
    assert res.capacity_bits < solve(1.0, 5.0, 5.0).capacity_bits
    assert res.distribution.mean == pytest.approx(1.0, abs=1e-6)
    assert res.mu > 0


def test_capacity_vanishing_range():
    res = cap.capacity(PoissonChannel.for_peak(1.0, 1e-6), PowerConstraint(1e-6, 1e-6))
    assert res.capacity_bits <= 1e-4


def test_capacity_output_pmf_consistent(solve):
    res = solve(0.1, 2.0, 2.0)
    ch = PoissonChannel.for_peak(0.1, 2.0)
    np.testing.assert_allclose(res.output_pmf, cap.output_distribution(res.distribution, ch), atol=1e-14)
    assert cap.mutual_information(res.distribution, ch) == pytest.approx(res.capacity_bits, abs=1e-12)


def test_capacity_rejects_short_truncation():
    with pytest.raises(ValueError):
        cap.capacity(PoissonChannel(1.0, 5), PowerConstraint(5.0, 5.0))


def test_capacity_state_channel_between_extremes():
    sc = StateChannel.from_dark_currents([0.5, 0.5], [0.5, 2.0], 5.0)
    pc = PowerConstraint(5.0, 5.0)
    mid = cap.capacity(sc, pc, strict=True).capacity_bits
    lo = cap.capacity(PoissonChannel.for_peak(2.0, 5.0), pc).capacity_bits
    hi = cap.capacity(PoissonChannel.for_peak(0.5, 5.0), pc).capacity_bits
    assert lo <= mid <= hi


def test_result_serialization(solve):
    d = solve(1.0, 5.0, 5.0).to_dict(timing=False)
    assert set(d) == {"capacity_bits", "support", "mu", "kkt_max_violation", "kkt_support_residual",
                      "ba_gap", "iterations", "certified"}
    assert "wallclock_ms" in solve(1.0, 5.0, 5.0).to_dict()


def test_uncertified_result_raises():
    bad = cap.CapacityResult(0.1, cap.DiscreteInputDistribution.point_mass(0.0), 0.0, 1.0, 0.0, 0.0, 1, False,
                             np.array([1.0]))
    with pytest.raises(cap.CertificationError):
        bad.raise_if_uncertified()


def test_distribution_validation():
    with pytest.raises(ValueError):
        dist([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ValueError):
        dist([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        dist([0.0, 1.0], [1.0, 0.0])


# ---------------------------------------------------------------------------
# secrecy and identification capacity


def test_secrecy_identical_channels_zero():
    res = cap.secrecy_capacity(cap.WiretapPair.poisson(1.0, 1.0, 5.0), PowerConstraint(5.0, 5.0))
    assert res.capacity_bits == 0.0 and res.certified


def test_secrecy_rejects_non_degraded():
    with pytest.raises(ValueError, match="not degraded"):
        cap.secrecy_capacity(cap.WiretapPair.poisson(1.0, 0.5, 5.0), PowerConstraint(5.0, 5.0))


def test_degradedness_predicate():
    assert cap.WiretapPair.poisson(1.0, 10.0, 5.0).degraded()
    assert cap.WiretapPair.poisson(1.0, 1.0, 5.0).degraded()
    assert not cap.WiretapPair.poisson(2.0, 1.0, 5.0).degraded()


def test_secrecy_matches_frank_wolfe_oracle(solve):
    res = cap.secrecy_capacity(cap.WiretapPair.poisson(1.0, 10.0, 5.0), PowerConstraint(5.0, 5.0), strict=True)
    lo, hi = SECRECY_ORACLE[(1.0, 10.0, 5.0)]
    assert lo - 1e-6 <= res.capacity_bits <= hi + 1e-6
    assert 0 < res.capacity_bits < solve(1.0, 5.0, 5.0).capacity_bits


def test_secrecy_oracle_live_small_grid():
    # coarse live run of the same oracle: a lower bound the solver must reach
    lo, hi = grid_secrecy_capacity(1.0, 10.0, 5.0, n_grid=51, iters=400)
    res = cap.secrecy_capacity(cap.WiretapPair.poisson(1.0, 10.0, 5.0), PowerConstraint(5.0, 5.0))
    assert res.capacity_bits >= lo - 1e-6


def test_secrecy_increases_with_eve_noise(solve):
    pc = PowerConstraint(5.0, 5.0)
    vals = [cap.secrecy_capacity(cap.WiretapPair.poisson(1.0, le, 5.0), pc, strict=True).capacity_bits
            for le in (2.0, 10.0, 100.0)]
    assert vals[0] < vals[1] < vals[2] < solve(1.0, 5.0, 5.0).capacity_bits


def test_sid_dichotomy(solve):
    pc = PowerConstraint(5.0, 2.0)
    same = cap.sid_capacity(cap.WiretapPair.poisson(1.0, 1.0, 5.0), pc)
    assert same.c_sid == 0.0
    diff = cap.sid_capacity(cap.WiretapPair.poisson(1.0, 10.0, 5.0), pc)
    assert diff.c_sid == diff.c_main
    assert diff.c_main == solve(1.0, 5.0, 2.0).capacity_bits
