from pathlib import Path

import numpy as np
import pytest

from snkf.experiments import (
    CHI2_FLOOR,
    ExperimentConfig,
    ExperimentError,
    draw_sensor_noise,
    parse_grid,
    reproduce,
    with_overrides,
)

GOLDEN = Path(__file__).parent / "golden"


def test_parse_grid():
    assert parse_grid("5:20:5") == [5, 10, 15, 20]
    assert parse_grid("3,7") == [3, 7]
    for bad in ("", "a:b:c", "5:1:1", "1:5:0", "0,3"):
        with pytest.raises(ExperimentError):
            parse_grid(bad)


def test_config_defaults_and_hash():
    cfg = ExperimentConfig("fig3")
    assert cfg.m_grid == tuple(range(5, 51, 5)) and cfg.realizations == 1000 and cfg.steps == 1000
    assert ExperimentConfig("fig5").realizations == 100
    assert cfg.config_hash() == ExperimentConfig("fig3", workers=4).config_hash()
    assert cfg.config_hash() != ExperimentConfig("fig3", seed=1).config_hash()
    assert with_overrides(cfg, realizations=5, seed=None).realizations == 5
    with pytest.raises(ExperimentError):
        ExperimentConfig("fig7")


def test_table_names_match_golden():
    expected = dict(line.split(": ") for line in (GOLDEN / "tables.txt").read_text().splitlines())
    for exp, names in expected.items():
        cfg = ExperimentConfig(exp, (5, 10), realizations=2, steps=5)
        res = reproduce(cfg)
        assert sorted(res.tables) == names.split()
        for name in res.tables:
            lines = res.csv(name).splitlines()
            body = [l for l in lines if not l.startswith("#")]
            assert body[0] + "\n" == (GOLDEN / "table.csv").read_text()


def test_chi2_floor_and_redraw_count():
    class Stub:
        def __init__(self):
            self.calls = 0

        def standard_normal(self, n):
            self.calls += 1
            return np.full(n, 1e-6) if self.calls == 1 else np.full(n, 0.5)

    vals, redraws = draw_sensor_noise(Stub(), 3)
    assert redraws == 3 and np.all(vals >= CHI2_FLOOR)


def test_fig1_matches_leading_term():
    res = reproduce(ExperimentConfig("fig1", (20, 30)))
    assert res.tables["fig1a"].series("exact")[30] == pytest.approx(1.554667, rel=0.05)


def test_fig2_inside_sandwich():
    res = reproduce(ExperimentConfig("fig2", (10, 50, 100, 200), realizations=5))
    t = res.tables["fig2"]
    lo, ex, hi = t.series("lower_bound"), t.series("exact"), t.series("upper_bound")
    for M in (10, 50, 100, 200):
        assert lo[M] <= ex[M] <= hi[M]


def test_determinism_across_runs_and_workers():
    cfg = ExperimentConfig("fig5", (5, 10), realizations=4, steps=20, seed=3)
    one = reproduce(cfg)
    again = reproduce(cfg)
    many = reproduce(with_overrides(cfg, workers=3))
    for name in one.tables:
        assert one.csv(name) == again.csv(name) == many.csv(name)
    fig3 = ExperimentConfig("fig3", (5, 10), realizations=6, seed=1)
    assert reproduce(fig3).csv("fig3a") == reproduce(with_overrides(fig3, workers=2)).csv("fig3a")


def test_realizations_are_prefix_stable():
    small = reproduce(ExperimentConfig("fig4", (5,), realizations=3, seed=2))
    big = reproduce(ExperimentConfig("fig4", (5,), realizations=6, seed=2))
    assert np.array_equal(small.samples[("fig4b", "optimal")][5], big.samples[("fig4b", "optimal")][5][:3])


def test_fading_average_covariance_decreases_with_M():
    res = reproduce(ExperimentConfig("fig5", (5, 20), realizations=200, steps=20, seed=11))
    s = res.samples[("fig5b", "full_csi")]
    d = s[5] - s[20]
    assert np.mean(d) > 3 * np.std(d, ddof=1) / np.sqrt(len(d))
