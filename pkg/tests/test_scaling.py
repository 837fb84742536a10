import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncevo import scaling as S
from asyncevo.scaling import ObservationPoint, ScalingParams

# 50-digit evaluation of the law at the published fit, N=8, t=72
GOLDEN_N8_T72 = 94.954512842972194092354544335366635741960963038611

positive = st.floats(1e-2, 1e2)


def test_zero_time_or_agents_gives_zero():
    p = ScalingParams(1.3, 2.0, 0.7)
    assert S.predict(p, 5, 0.0) == 0.0
    assert S.predict(p, 0, 5.0) == 0.0


def test_golden_value():
    assert S.predict(S.REFERENCE_FIT, 8, 72) == pytest.approx(GOLDEN_N8_T72, rel=1e-14)
    assert float(S.predict_mp(S.REFERENCE_FIT, 8, 72)) == pytest.approx(GOLDEN_N8_T72, rel=1e-15)


def test_saturation():
    assert S.predict(ScalingParams(1e9, 1.0, 1.0), 1, 1) > 99.9


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        S.predict(S.REFERENCE_FIT, -1, 3)
    with pytest.raises(ValueError):
        ScalingParams(0.0, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(positive, positive, positive, st.integers(1, 64), st.floats(0.1, 100), st.floats(1.01, 3))
def test_strictly_increasing(alpha, beta, gamma, n, t, k):
    p = ScalingParams(alpha, beta, gamma)
    base = S.predict(p, n, t)
    if base > 99.999:  # at saturation doubles cannot resolve the increase
        return
    assert S.predict(p, n + 1, t) > base
    assert S.predict(p, n, t * k) > base
    assert S.predict(ScalingParams(alpha * k, beta, gamma), n, t) > base


def test_noiseless_round_trip():
    pts = S.synthetic_points(S.REFERENCE_FIT, [1, 2, 4, 8], [1, 3, 6, 12, 24, 48, 72])
    res = S.fit(pts)
    for name in ("alpha", "beta", "gamma"):
        assert getattr(res.params, name) == pytest.approx(getattr(S.REFERENCE_FIT, name), rel=1e-6)
    assert res.r_squared >= 0.9999


def test_fit_is_idempotent_on_random_generators():
    rng = np.random.default_rng(0)
    for _ in range(5):
        gen = ScalingParams(*np.exp(rng.uniform(np.log(0.1), np.log(10), 3)))
        res = S.fit(S.synthetic_points(gen, [1, 2, 4, 8], [1, 3, 6, 12, 24, 48, 72]))
        assert res.rmse < 1e-6


def test_transfer_with_frozen_beta():
    gen = S.REFERENCE_TRANSFER
    train = S.synthetic_points(gen, [1, 2], [1, 3, 6, 12, 24, 48, 72])
    res = S.fit(train, frozen={"beta": 4.854})
    assert res.params.beta == 4.854 and res.frozen == {"beta": 4.854}
    held = S.synthetic_points(gen, [8], [1, 3, 6, 12, 24, 48, 72])
    assert S.rmse(res.params, held) <= 1.0


def test_fit_errors():
    two = [ObservationPoint(1, 1.0, 50.0), ObservationPoint(2, 2.0, 60.0)]
    with pytest.raises(S.InsufficientDataError):
        S.fit(two)
    same_n = [ObservationPoint(4, t, 50.0 + t) for t in (1.0, 2.0, 3.0, 4.0)]
    with pytest.raises(S.DegenerateDataError):
        S.fit(same_n)
    with pytest.raises(ValueError):
        S.fit(same_n, frozen={"delta": 1.0})
    # two points suffice once beta is frozen
    S.fit(two, frozen={"beta": 4.854})


def test_observation_point_bounds():
    with pytest.raises(ValueError):
        ObservationPoint(1, 1.0, 100.0)
    with pytest.raises(ValueError):
        ObservationPoint(0, 1.0, 10.0)


def test_symmetric_allocation():
    p = ScalingParams(1.0, 3.0, 3.0)
    assert S.continuous_optimum(p, 1.0) == pytest.approx((1.0, 1.0))
    assert S.optimal_allocation(p, 1.0) == (1, 1.0)


def brute_force(params, budget):
    best_n, best_p = None, -1.0
    for n in range(1, math.ceil(budget) + 1):
        p = S.predict(params, n, budget / n)
        if p > best_p:
            best_n, best_p = n, p
    return best_n


def test_reference_params_c192():
    n, t = S.optimal_allocation(S.REFERENCE_FIT, 192.0)
    assert n == brute_force(S.REFERENCE_FIT, 192.0) == 10
    assert t == pytest.approx(19.2)


def random_allocation_cases(rng, k):
    """(params, C) draws whose real optimum and both integer neighbours lie in 1..ceil(C)."""
    cases = []
    while len(cases) < k:
        p = ScalingParams(*np.exp(rng.uniform(np.log(0.1), np.log(10), 3)))
        c = float(np.exp(rng.uniform(np.log(1), np.log(500))))
        if math.ceil(S.continuous_optimum(p, c)[0]) <= math.ceil(c):
            cases.append((p, c))
    return cases


def test_allocation_agrees_with_brute_force():
    for p, c in random_allocation_cases(np.random.default_rng(11), 50):
        assert S.optimal_allocation(p, c)[0] == brute_force(p, c)


def test_allocation_beyond_brute_force_range_still_beats_it():
    # optimum above ceil(C): the formula finds a better N than the truncated search
    p, c = ScalingParams(2.0, 0.25, 6.0), 3.9
    n, t = S.optimal_allocation(p, c)
    assert n > math.ceil(c)
    assert S.predict(p, n, t) > S.predict(p, brute_force(p, c), c / brute_force(p, c))


def test_non_positive_budget():
    with pytest.raises(ValueError):
        S.optimal_allocation(S.REFERENCE_FIT, 0.0)


def test_frontier_small_budget_and_monotone():
    assert S.compute_frontier(S.REFERENCE_FIT, [1e-9])[0][1] < 1e-3
    rows = S.compute_frontier(S.REFERENCE_FIT, [8, 24, 72, 192, 576])
    assert len(rows) == 5
    ps = [p for _, p in rows]
    assert ps == sorted(ps)


def test_frontier_dominates_fixed_n():
    for c in np.logspace(0, 3, 25):
        p_star = S.compute_frontier(S.REFERENCE_FIT, [c])[0][1]
        for n in range(1, 17):
            assert p_star >= S.predict(S.REFERENCE_FIT, n, c / n) - 1e-12


def test_continuous_frontier_matches_closed_form():
    for c in np.logspace(-2, 4, 40):
        assert abs(S.continuous_frontier(S.REFERENCE_FIT, c) - S.closed_form_frontier(S.REFERENCE_FIT, c)) <= 1e-9


def test_log_terms_equalize():
    for c in np.logspace(-2, 4, 40):
        n, t = S.continuous_optimum(S.REFERENCE_FIT, c)
        assert abs(math.log(S.REFERENCE_FIT.gamma * t + 1) - math.log(S.REFERENCE_FIT.beta * n + 1)) <= 1e-9


def test_stationarity_small_grid():
    rep = S.verify_stationarity([0.5, 1, 2, 4, 8])
    assert rep.ok and rep.n_points == 5


def test_f_values():
    assert float(S.stationarity_f(1.0)) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert abs(float(S.stationarity_f(1e-8)) - 1.0) <= 1e-6


def test_fprime_series_branch_matches_high_precision():
    for z in (1e-8, 1e-5, 5e-4, 9.99e-4, 1e-3, 2e-3):
        with mpmath.workdps(60):
            zz = mpmath.mpf(z)
            exact = float((zz - mpmath.log1p(zz)) / zz**2)
        assert float(S.stationarity_fprime(z)) == pytest.approx(exact, rel=1e-12)


def test_stationarity_reports_offender(monkeypatch):
    real = S.stationarity_fprime
    monkeypatch.setattr(S, "stationarity_fprime", lambda z: np.where(np.asarray(z) > 3, -1.0, real(z)))
    rep = S.verify_stationarity([1.0, 2.0, 4.0, 8.0])
    assert not rep.ok and rep.offending == 4.0
    with pytest.raises(ValueError):
        S.verify_stationarity([2.0, 1.0])


def test_points_csv_round_trip(tmp_path):
    pts = S.synthetic_points(S.REFERENCE_FIT, [1, 2], [3.0, 6.0])
    path = tmp_path / "p.csv"
    S.write_points_csv(pts, path)
    assert S.read_points_csv(path) == pts


def test_malformed_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("n_agents,time\n1,2\n")
    with pytest.raises(ValueError):
        S.read_points_csv(path)
    path.write_text("n_agents,time,performance\n1,x,3\n")
    with pytest.raises(ValueError):
        S.read_points_csv(path)
