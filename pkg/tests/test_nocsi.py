import numpy as np
import pytest

from snkf.alloc import build_problem, equal_power_solution, solve
from snkf.core import SensorSet, SystemModel, validate_scenario
from snkf.kalman import mac_snr, orth_snr, run_filter, steady_state_from_snr
from snkf.nocsi import (
    ChannelStatistics,
    CircularFadingError,
    allocate_nocsi,
    build_effective_model,
    covariance_iteration,
    derive_moments,
    mean_beamform_alphas,
    mmse_filter_step,
    printed_moments,
    simplified_snr,
    simulate_nocsi,
    steady_state_curve,
    steady_state_nocsi,
)

M9 = SystemModel(0.9, 1.0)
SENSORS = SensorSet([1.0, 0.8, 1.2], [0.5, 1.0, 0.3])
ALPHAS = np.array([0.6, 0.9, 0.4])


def random_stats(rng, M, identical=False):
    mr, mi = rng.uniform(-1, 1, M), rng.uniform(-1, 1, M)
    vr = rng.uniform(0.05, 1.0, M)
    return ChannelStatistics(mr, mi, vr, vr if identical else rng.uniform(0.05, 1.0, M))


def test_mean_beamforming_rotation():
    assert mean_beamform_alphas([0.5], ChannelStatistics.deterministic([1.0])) == pytest.approx([0.5 + 0j])
    rot = mean_beamform_alphas([0.5], ChannelStatistics.deterministic([2j]))
    assert rot == pytest.approx([-0.5j])
    assert abs(rot[0]) == pytest.approx(0.5)
    with pytest.raises(CircularFadingError, match="circularly symmetric fading unusable"):
        mean_beamform_alphas([1.0], ChannelStatistics.identical(0.0, 1.0))


def test_moment_examples():
    mo = derive_moments(ChannelStatistics.deterministic([1.0]), [0.7])
    assert mo.mean_re[0] == pytest.approx(0.7) and mo.var_re[0] == 0 and mo.e2_re[0] == pytest.approx(0.49)
    mo = derive_moments(ChannelStatistics.identical(1.0, 1.0), [1.0])
    assert mo.var_re[0] == pytest.approx(1.0) and mo.e2_re[0] == pytest.approx(3.0)
    mean, var, e2 = printed_moments(ChannelStatistics.identical(1.0, 1.0), [1.0])
    assert (mean[0], var[0], e2[0]) == pytest.approx((np.sqrt(2), 1.0, 3.0))


def test_identical_component_simplification(rng):
    for _ in range(100):
        mu, s2, a = rng.uniform(0.1, 2), rng.uniform(0.01, 2), rng.uniform(-2, 2)
        mo = derive_moments(ChannelStatistics.identical(mu, s2), [a])
        assert mo.var_re[0] == pytest.approx(a * a * s2, rel=1e-12)
        assert mo.e2_re[0] == pytest.approx(a * a * (s2 + 2 * mu * mu), rel=1e-12)
        assert mo.cov[0] == pytest.approx(0.0, abs=1e-15)


def test_moments_match_sampling():
    rng = np.random.default_rng(5)
    stats = ChannelStatistics([0.8], [-0.3], [0.4], [0.9])
    at = mean_beamform_alphas([1.3], stats)
    g = at[0] * stats.sample(1_000_000, rng)[:, 0]
    mo = derive_moments(stats, [1.3])
    emp = [g.real.mean(), g.imag.mean(), g.real.var(), g.imag.var(), np.cov(g.real, g.imag)[0, 1]]
    ref = [mo.mean_re[0], mo.mean_im[0], mo.var_re[0], mo.var_im[0], mo.cov[0]]
    scale = max(abs(v) for v in ref)
    for e, r in zip(emp, ref):
        assert abs(e - r) <= 0.01 * max(abs(r), 0.1 * scale)
    assert np.mean(g.real**2) == pytest.approx(mo.e2_re[0], rel=0.01)


def test_moment_consistency(rng):
    for _ in range(200):
        stats = random_stats(rng, 4)
        mo = derive_moments(stats, rng.uniform(-2, 2, 4))
        assert np.all(mo.e2_re >= mo.mean_re**2 - 1e-12)
        assert np.all(mo.e2_im >= mo.mean_im**2 - 1e-12)
        assert np.allclose(mo.e2_re - mo.mean_re**2, mo.var_re, atol=1e-12)
        assert np.all(mo.cov**2 <= mo.var_re * mo.var_im + 1e-12)


def test_printed_and_generic_moments_agree(rng):
    for _ in range(200):
        stats, al = random_stats(rng, 4), rng.uniform(-2, 2, 4)
        mo = derive_moments(stats, al)
        mean, var, e2 = printed_moments(stats, al)
        assert np.allclose(mo.mean_re, mean, rtol=1e-12)
        assert np.allclose(mo.var_re, var, rtol=1e-12)
        assert np.allclose(mo.e2_re, e2, rtol=1e-12)


@pytest.mark.parametrize("scheme,snr", [("mac", mac_snr), ("orth", orth_snr)])
def test_deterministic_channels_reduce_to_csi(scheme, snr):
    h = np.array([0.9, 1.1, 0.7])
    eff = build_effective_model(M9, SENSORS, ChannelStatistics.deterministic(h), ALPHAS, 0.5, scheme)
    S = snr(ALPHAS, h, SENSORS, 0.5).snr
    assert eff.S == pytest.approx(S, rel=1e-14)
    assert steady_state_nocsi(eff, M9) == pytest.approx(steady_state_from_snr(S, M9), rel=1e-14)


def test_zero_mean_channels_give_no_signal():
    stats = ChannelStatistics.identical(np.zeros(3), 1.0)
    eff = build_effective_model(M9, SENSORS, stats, ALPHAS + 0j, 0.5, "mac", beamform=False)
    assert np.all(eff.C == 0) and eff.S == 0
    assert steady_state_nocsi(eff, M9) == pytest.approx(M9.state_variance)
    st = mmse_filter_step(0.3, 2.0, 0.5 + 0.1j, eff, M9)
    assert st.P_prior == pytest.approx(0.81 * 2.0 + 1.0)


@pytest.mark.parametrize("scheme", ["mac", "orth"])
def test_simplified_snr_exact_for_identical_components(rng, scheme):
    for _ in range(100):
        stats = random_stats(rng, 4, identical=True)
        al = rng.uniform(0.1, 2, 4)
        s = SensorSet(rng.uniform(0.3, 2, 4), rng.uniform(0.1, 2, 4))
        eff = build_effective_model(M9, s, stats, al, 0.3, scheme)
        assert eff.S == pytest.approx(simplified_snr(M9, s, stats, al, 0.3, scheme), rel=1e-12)


def test_cross_term_matters_for_distinct_components(rng):
    gaps = []
    for _ in range(50):
        stats, al = random_stats(rng, 4), rng.uniform(0.1, 2, 4)
        eff = build_effective_model(M9, SENSORS.__class__(np.ones(4), np.ones(4)), stats, al, 0.3, "mac")
        gaps.append(abs(eff.S - simplified_snr(M9, SensorSet(np.ones(4), np.ones(4)), stats, al, 0.3, "mac")))
    assert max(gaps) > 1e-6


def test_effective_model_shapes():
    stats = ChannelStatistics.identical([0.5, 0.6, 0.7], 0.2)
    mac = build_effective_model(M9, SENSORS, stats, ALPHAS, 0.5, "mac")
    orth = build_effective_model(M9, SENSORS, stats, ALPHAS, 0.5, "orth")
    assert mac.C.shape == (2,) and mac.R.shape == (2, 2)
    assert orth.C.shape == (3, 2) and orth.R.shape == (3, 2, 2)
    dense = orth.R_dense
    assert dense.shape == (6, 6) and np.all(dense[0:2, 2:] == 0)
    assert np.all(np.linalg.eigvalsh(mac.R) > 0)
    S_dense = orth.C_stacked @ np.linalg.solve(dense, orth.C_stacked)
    assert orth.S == pytest.approx(S_dense, rel=1e-12)


@pytest.mark.parametrize("scheme", ["mac", "orth"])
def test_steady_state_matches_iteration(rng, scheme):
    for _ in range(20):
        stats, al = random_stats(rng, 3), rng.uniform(0.1, 2, 3)
        eff = build_effective_model(M9, SENSORS, stats, al, 0.5, scheme)
        assert covariance_iteration(eff, M9) == pytest.approx(steady_state_nocsi(eff, M9), rel=1e-9)


def test_filter_step_reaches_steady_state_by_500():
    eff = build_effective_model(M9, SENSORS, ChannelStatistics.identical(0.7, 0.3), ALPHAS, 0.5)
    P = M9.state_variance
    for _ in range(500):
        st = mmse_filter_step(0.0, P, 0j, eff, M9)
        assert 0 < st.P_post <= P
        P = st.P_prior
    assert abs(P - steady_state_nocsi(eff, M9)) <= 1e-9


@pytest.mark.parametrize("scheme", ["mac", "orth"])
def test_deterministic_filter_matches_csi_filter(scheme):
    h = np.array([0.9, 1.1, 0.7])
    sc = validate_scenario(M9, SENSORS, h, 0.5)
    stats = ChannelStatistics.deterministic(h)
    eff = build_effective_model(M9, SENSORS, stats, ALPHAS, 0.5, scheme)
    rng = np.random.default_rng(9)
    z = rng.standard_normal(30) if scheme == "mac" else rng.standard_normal((30, 3))
    tr = run_filter(sc, ALPHAS, 30, scheme=scheme, measurements=z)
    x, P = 0.0, M9.state_variance
    for k in range(30):
        assert x == pytest.approx(tr.x_hat[k], abs=1e-6)
        assert P == pytest.approx(tr.P[k], abs=1e-6)
        st = mmse_filter_step(x, P, z[k] + 0j, eff, M9)
        x, P = st.x_prior, st.P_prior


def test_monte_carlo_mse_and_gain_optimality():
    stats = ChannelStatistics.identical([0.8, 0.7, 0.9], 0.25)
    eff = build_effective_model(M9, SENSORS, stats, ALPHAS, 0.1)
    P_ss = steady_state_nocsi(eff, M9)
    seed = 2024
    run = simulate_nocsi(M9, SENSORS, stats, ALPHAS, 0.1, 100_000, rng=seed)
    err2 = run.errors[1000:] ** 2
    assert np.mean(err2) == pytest.approx(P_ss, rel=0.03)
    base = simulate_nocsi(M9, SENSORS, stats, ALPHAS, 0.1, 100_000, rng=seed, gain_scale=1.0).errors[1000:] ** 2
    for g in (0.8, 0.9, 1.1, 1.2):
        other = simulate_nocsi(M9, SENSORS, stats, ALPHAS, 0.1, 100_000, rng=seed, gain_scale=g).errors[1000:] ** 2
        d = other - base
        # paired test: a perturbed gain may not beat the optimal one beyond 3 sigma
        assert np.mean(d) >= -3 * np.std(d) / np.sqrt(len(d))


def test_degeneration_to_csi():
    h = np.array([0.9, 1.1, 0.7])
    stats = ChannelStatistics(h, np.zeros(3), np.full(3, 1e-12), np.full(3, 1e-12))
    exact = ChannelStatistics.deterministic(h)
    for scheme in ("mac", "orth"):
        a = build_effective_model(M9, SENSORS, stats, ALPHAS, 0.5, scheme)
        b = build_effective_model(M9, SENSORS, exact, ALPHAS, 0.5, scheme)
        assert a.S == pytest.approx(b.S, rel=1e-6)
        for kw in ({"D": 2.0}, {"gamma_total": 1.0}):
            sa = allocate_nocsi(M9, SENSORS, stats, 0.5, scheme=scheme, **kw)
            sb = solve(build_problem(M9, SENSORS, h, 0.5, scheme=scheme, **kw))
            assert sa.alphas == pytest.approx(sb.alphas, rel=1e-6, abs=1e-9)
    mo = derive_moments(stats, ALPHAS)
    assert mo.var_re == pytest.approx(np.zeros(3), abs=1e-6)


def test_allocate_nocsi_examples(rng):
    h = np.array([0.9, 1.1, 0.7])
    det = ChannelStatistics.deterministic(h)
    for kw in ({"D": 2.0}, {"gamma_total": 1.0}):
        for scheme in ("mac", "orth"):
            got = allocate_nocsi(M9, SENSORS, det, 0.5, scheme=scheme, **kw)
            ref = solve(build_problem(M9, SENSORS, h, 0.5, scheme=scheme, **kw))
            assert got.alphas == pytest.approx(ref.alphas, rel=1e-12)
    one = SensorSet([1.0], [1.0])
    sol = allocate_nocsi(M9, one, ChannelStatistics.identical(0.6, 0.3), 0.5, gamma_total=2.0)
    assert sol.total_power == pytest.approx(2.0)
    for _ in range(30):
        stats = random_stats(rng, 3, identical=True)
        for scheme in ("mac", "orth"):
            sol = allocate_nocsi(M9, SENSORS, stats, 0.5, gamma_total=1.0, scheme=scheme)
            eq_alphas = equal_power_solution(build_problem(M9, SENSORS, None, 0.5, gamma_total=1.0)).alphas
            P_opt = steady_state_nocsi(build_effective_model(M9, SENSORS, stats, sol.alphas, 0.5, scheme), M9)
            P_eq = steady_state_nocsi(build_effective_model(M9, SENSORS, stats, eq_alphas, 0.5, scheme), M9)
            assert P_opt <= P_eq * (1 + 1e-12)


def test_steady_state_curve_decreases():
    curve = steady_state_curve([2, 5, 10, 50], M9, 1.0, 1.0, 0.7 + 0.7j, 0.2, lambda M: 1 / np.sqrt(M), 0.5)
    assert np.all(np.diff(curve) < 0)


def test_statistics_document_roundtrip():
    stats = ChannelStatistics([0.5, 1.0], [0.1, 0.0], [1.0, 0.2], [0.5, 0.2])
    again = ChannelStatistics.from_dict(stats.to_dict())
    assert np.array_equal(again.var_im, stats.var_im)
    with pytest.raises(ValueError):
        ChannelStatistics.from_dict({"sensors": [{"mean_re": 1.0}]})
    with pytest.raises(ValueError):
        ChannelStatistics([0.0], [0.0], [-1.0], [1.0])
