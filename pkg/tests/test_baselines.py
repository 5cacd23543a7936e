import csv

import numpy as np
import pytest

from pushcache.model.system import SystemConfig
from pushcache.tools.baselines import (
    Trace,
    infinite_buffer_cost,
    no_buffer_cost,
    taut_string_schedule,
)
from pushcache.tools.file_ops import SCHEDULE_HEADER, write_schedule_csv
from pushcache.tools.oracles import discretized_offline_cost


def test_no_buffer_cost_examples(two_point):
    assert no_buffer_cost(SystemConfig(B=2, eta=1.4, pmf=[1.0])) == 0.0
    assert no_buffer_cost(two_point) == pytest.approx(0.5)
    uniform = SystemConfig.uniform(B=8, X=20, eta=1.4)
    assert no_buffer_cost(uniform) == pytest.approx((1.4**21 - 1) / (0.4 * 21) - 1)
    assert no_buffer_cost(uniform) == pytest.approx(138.33, abs=0.01)


def test_infinite_buffer_cost_examples(two_point):
    assert infinite_buffer_cost(two_point) == pytest.approx(np.sqrt(2) - 1)
    uniform = SystemConfig.uniform(B=8, X=20, eta=1.4)
    assert infinite_buffer_cost(uniform) == pytest.approx(1.4**10 - 1)
    point = SystemConfig(B=3, eta=1.7, pmf=[0.0, 0.0, 1.0])
    assert infinite_buffer_cost(point) == pytest.approx(no_buffer_cost(point))


def test_infinite_buffer_never_exceeds_no_buffer(rng):
    for _ in range(50):
        X = int(rng.integers(0, 8))
        cfg = SystemConfig(B=1, eta=float(rng.uniform(1.05, 3.0)), pmf=rng.dirichlet(np.ones(X + 1)).tolist())
        assert infinite_buffer_cost(cfg) <= no_buffer_cost(cfg) + 1e-12


@pytest.mark.parametrize("B", [0, 2, 5])
def test_taut_constant_trace(B):
    schedule = taut_string_schedule(Trace([3, 3, 3]), B, 1.4)
    np.testing.assert_allclose(schedule.y, [3.0, 3.0, 3.0])


def test_taut_spreads_a_burst():
    schedule = taut_string_schedule(Trace([0, 4]), 2, 1.4)
    np.testing.assert_allclose(schedule.y, [2.0, 2.0])
    assert schedule.total_energy == pytest.approx(1.92)
    assert schedule.mean_energy == pytest.approx(0.96)


def test_taut_without_buffer_follows_demand():
    x = [2, 0, 5, 1, 3]
    schedule = taut_string_schedule(Trace(x), 0, 1.4)
    np.testing.assert_allclose(schedule.y, x)


def test_taut_respects_corridor_and_end_level(rng):
    for _ in range(50):
        B = int(rng.integers(0, 5))
        trace = Trace(rng.integers(0, 6, size=int(rng.integers(1, 60))))
        b_end = int(rng.integers(0, B + 1))
        schedule = taut_string_schedule(trace, B, 1.3, b_end=b_end)
        assert schedule.corridor_violation() <= 1e-9
        assert schedule.buffer[-1] == pytest.approx(b_end)
        assert np.all(np.diff(schedule.Y) >= -1e-12)
        assert np.all(schedule.y >= 0)


def test_taut_meets_jensen_bound(rng):
    trace = Trace(rng.integers(0, 10, size=500))
    schedule = taut_string_schedule(trace, 3, 1.4)
    assert schedule.mean_energy >= 1.4 ** trace.x.mean() - 1 - 1e-9


def test_taut_matches_discretized_dp(rng):
    for _ in range(10):
        B = int(rng.integers(1, 3))
        trace = Trace(rng.integers(0, 5, size=int(rng.integers(1, 9))))
        schedule = taut_string_schedule(trace, B, 1.4)
        oracle = discretized_offline_cost(trace, B, 1.4)
        assert schedule.total_energy <= oracle + 1e-9
        assert schedule.total_energy == pytest.approx(oracle, abs=1e-3)


def test_taut_bends_both_ways():
    trace = Trace([4, 0, 0, 4, 0, 6])
    schedule = taut_string_schedule(trace, 2, 1.5)
    oracle = discretized_offline_cost(trace, 2, 1.5)
    assert schedule.total_energy == pytest.approx(oracle, abs=1e-3)


def test_taut_initial_buffer_is_spent():
    schedule = taut_string_schedule(Trace([2, 2]), 2, 1.4, b0=2)
    np.testing.assert_allclose(schedule.y, [1.0, 1.0])


def test_taut_rejects_bad_input():
    with pytest.raises(ValueError):
        taut_string_schedule(Trace([]), 2, 1.4)
    with pytest.raises(ValueError):
        taut_string_schedule(Trace([1]), 2, 1.4, b0=3)
    with pytest.raises(ValueError):
        Trace([1, -1])


def test_taut_corridor_slack_controls_warning(caplog):
    with caplog.at_level("WARNING", logger="pushcache.tools.baselines"):
        taut_string_schedule(Trace([0, 4]), 2, 1.4)
        assert not caplog.records
        taut_string_schedule(Trace([0, 4]), 2, 1.4, tol=-1.0)
    assert "leaves the corridor" in caplog.text


def test_schedule_csv(tmp_path):
    schedule = taut_string_schedule(Trace([0, 4]), 2, 1.4)
    path = write_schedule_csv(schedule, tmp_path / "schedule.csv")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == SCHEDULE_HEADER
    assert len(rows) == 3
    assert rows[1][0] == "1"
    assert float(rows[2][3]) == pytest.approx(4.0)
