import numpy as np
import pytest

from snkf.asymptotics import (
    ParamBounds,
    SymmetricParams,
    alternating_blocks_witness,
    asympt_mac_noscale,
    asympt_mac_scaled,
    asympt_orth_noscale,
    asympt_orth_scaled_limit,
    equal_power_alphas,
    equal_power_bounds,
    exact_general,
    exact_symmetric,
    general_bounds,
    ideal_rate_bound,
)
from snkf.core import SensorSet, SystemModel, transmit_power
from snkf.kalman import steady_state_from_snr

FIG1 = SymmetricParams(c=1.0, sigma_v2=1.0, h=0.8, model=SystemModel(0.8, 1.5), sigma_n2=1.0)
FIG2 = ParamBounds(0.5, 1.0, 0.5, 1.0, 0.5, 1.0)


def test_leading_order_examples():
    assert asympt_mac_noscale(20, FIG1) == pytest.approx(1.532, abs=1e-12)
    assert asympt_orth_noscale(20, FIG1) == pytest.approx(1.582, abs=1e-12)
    assert asympt_mac_scaled(20, FIG1) == pytest.approx(1.582, abs=1e-12)


def test_mac_noscale_gap_is_second_order():
    gaps = {M: abs(exact_symmetric(M, FIG1, "mac") - asympt_mac_noscale(M, FIG1)) for M in (25, 50, 100, 200)}
    # M^2 * gap rises towards its limit, so the halving ratio tends to 1/4 from above
    ratios = [gaps[2 * k] / gaps[k] for k in (25, 50, 100)]
    assert all(0.25 <= r <= 0.25 * 1.05 for r in ratios)
    assert ratios[0] > ratios[1] > ratios[2]


@pytest.mark.parametrize(
    "scheme,scaling,fn",
    [("mac", "none", asympt_mac_noscale), ("orth", "none", asympt_orth_noscale), ("mac", "inv_sqrt_M", asympt_mac_scaled)],
)
def test_rate_certification(scheme, scaling, fn):
    w = FIG1.model.sigma_w2
    coef = (fn(1.0, FIG1) - w)
    for M, tol in ((1e3, 0.05), (1e5, 0.005)):
        got = M * (exact_symmetric(M, FIG1, scheme, scaling) - w)
        assert abs(got / coef - 1) <= tol


def test_orth_scaled_limit():
    exp = asympt_orth_scaled_limit(np.inf, FIG1)
    assert exp.limit == pytest.approx(steady_state_from_snr(0.64, FIG1.model), rel=1e-12)
    assert exp.limit > FIG1.model.sigma_w2
    gap = lambda M: abs(exact_symmetric(M, FIG1, "orth", "inv_sqrt_M") - exp.limit)
    assert gap(1e4) <= 10 * gap(1e5) * 1.0001
    for M, tol in ((1e3, 0.05), (1e5, 0.005)):
        got = M * (exact_symmetric(M, FIG1, "orth", "inv_sqrt_M") - exp.limit)
        assert abs(got / exp.coefficient - 1) <= tol


def test_orth_scaled_coefficient_random(rng):
    for _ in range(50):
        p = SymmetricParams(rng.uniform(0.3, 2), rng.uniform(0.3, 2), rng.uniform(0.3, 2),
                            SystemModel(rng.uniform(-0.95, 0.95), rng.uniform(0.3, 2)), rng.uniform(0.3, 2))
        exp = asympt_orth_scaled_limit(np.inf, p)
        M = 1e6
        got = M * (exact_symmetric(M, p, "orth", "inv_sqrt_M") - exp.limit)
        assert got == pytest.approx(exp.coefficient, rel=1e-3, abs=1e-9)


def test_general_bounds_example():
    lo, hi = general_bounds(100, FIG2, SystemModel(0.9, 1.0), 1.0)
    # sigma_i^2 itself ranges over [0.5, 1], so h_min^2 sigma_min^2 = 0.25 * 0.5
    assert lo == pytest.approx(1 + 0.81 * (0.125 + 1) / 100, abs=1e-12)
    assert hi == pytest.approx(1 + 0.81 * 2 / (0.0625 * 100), abs=1e-12)
    assert round(float(hi), 4) == 1.2592


@pytest.mark.parametrize("scaling", ["inv_sqrt_M", "none"])
def test_general_bounds_sandwich(rng, scaling):
    model, M = SystemModel(0.9, 1.0), 200
    lo, hi = general_bounds(M, FIG2, model, 1.0, scaling)
    for _ in range(100):
        c = rng.uniform(0.5, 1.0, M) * rng.choice([-1, 1], M)
        sv, h = rng.uniform(0.5, 1.0, M), rng.uniform(0.5, 1.0, M)
        alpha = (1 / np.sqrt(M) if scaling == "inv_sqrt_M" else 1.0) * np.sign(c)
        P = exact_general(alpha, h, SensorSet(c, sv), model, 1.0, "mac")
        assert lo - 10 / M**2 <= P <= hi


def test_equal_power_example():
    s = SensorSet.symmetric(3, 1.0, 1.0)
    m = SystemModel(0.9, 1.0)
    al = equal_power_alphas(s, m, per_sensor=2.0)
    assert al**2 == pytest.approx(np.full(3, 2 * 0.19 / 1.19), abs=1e-6)
    al = equal_power_alphas(SensorSet([1.0, -2.0], [1.0, 0.2]), m, total=4.0)
    assert transmit_power(al, SensorSet([1.0, -2.0], [1.0, 0.2]), m) == pytest.approx([2.0, 2.0])
    assert al[1] < 0
    with pytest.raises(ValueError):
        equal_power_alphas(s, m)


@pytest.mark.parametrize("mode", ["per_sensor", "total"])
def test_equal_power_sandwich(rng, mode):
    model, sn2 = SystemModel(0.9, 1.0), 1.0
    for M in (50, 200):
        kw = {mode: 2.0}
        lo, hi = equal_power_bounds(M, FIG2, model, sn2, **kw)
        for _ in range(50):
            s = SensorSet(rng.uniform(0.5, 1.0, M), rng.uniform(0.5, 1.0, M))
            h = rng.uniform(0.5, 1.0, M)
            P = exact_general(equal_power_alphas(s, model, **kw), h, s, model, sn2, "mac")
            assert P <= hi
            assert P >= lo - 10 / M**2
            # P - sigma_w2 decays like 1/M with the constant of the upper bound
            assert (P - model.sigma_w2) * M <= (hi - model.sigma_w2) * M


def test_ideal_bound_example_and_dominance(rng):
    m = SystemModel(0.9, 1.0)
    # frozen from 1e5 iterations of the recursion at S = 10
    assert ideal_rate_bound(SensorSet.symmetric(10, 1.0, 1.0), m) == pytest.approx(1.0741011052080007, abs=1e-12)
    for _ in range(200):
        M = rng.integers(1, 20)
        s = SensorSet(rng.uniform(-2, 2, M), rng.uniform(0.1, 2, M))
        bound = ideal_rate_bound(s, m)
        al, h, sn = rng.normal(size=M) * 3, rng.uniform(0.01, 3, M), rng.uniform(1e-6, 2)
        for scheme in ("mac", "orth"):
            assert bound <= exact_general(al, h, s, m, sn, scheme) * (1 + 1e-12)


def test_alternating_blocks_do_not_converge():
    w = alternating_blocks_witness()
    assert len(w.P) == 5 and list(w.block_ends) == [10, 110, 1110, 11110, 111110]
    assert w.gap > 0.01
