import numpy as np
import pytest
from pydantic import ValidationError

from pushcache.errors import InfeasibleDecisionError
from pushcache.model.system import (
    DegeneratedState,
    State,
    SystemConfig,
    action_bounds,
    average_cost,
    energy_cost,
    expected_state_cost,
    next_buffer,
)


@pytest.mark.parametrize(
    "y, eta, expected",
    [(0, 1.4, 0.0), (2, 1.4, 0.96), (3, 2.0, 7.0)],
)
def test_energy_cost_examples(y, eta, expected):
    assert energy_cost(y, eta) == pytest.approx(expected)


def test_energy_cost_vectorized_and_convex():
    costs = energy_cost(np.arange(8), 1.7)
    assert costs.shape == (8,)
    assert np.all(np.diff(costs, n=2) > 0)


def test_energy_cost_rejects_bad_input():
    with pytest.raises(ValueError):
        energy_cost(-1, 1.4)
    with pytest.raises(ValueError):
        energy_cost(1, 1.0)


def test_action_bounds_examples():
    assert action_bounds(0, 3, 4) == (3, 7)
    assert action_bounds(4, 0, 4) == (0, 0)
    assert action_bounds(2, 1, 4) == (0, 3)


def test_action_bounds_rejects_level_outside_buffer():
    with pytest.raises(ValueError):
        action_bounds(5, 0, 4)


def test_next_buffer():
    assert next_buffer(1, 2, 3) == 2
    assert next_buffer(0, 0, 0, B=0) == 0
    with pytest.raises(ValueError):
        next_buffer(0, 2, 1)
    with pytest.raises(ValueError):
        next_buffer(2, 0, 3, B=4)


def test_expected_state_cost_examples():
    assert expected_state_cost(State(b=1, x=1), [1.0, 0.0], 2.0) == pytest.approx(0.0)
    assert expected_state_cost(State(b=0, x=1), [0.5, 0.5], 2.0) == pytest.approx(2.0)
    assert expected_state_cost(State(b=0, x=0), [0.0, 1.0], 1.4) == pytest.approx(0.4)


def test_expected_state_cost_rejects_mass_below_floor():
    with pytest.raises(InfeasibleDecisionError):
        expected_state_cost(State(b=2, x=0), [1.0, 0.0, 0.0], 1.4)


def test_average_cost_example():
    omega = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert average_cost([1.0, 0.0], omega, [0.5, 0.5]) == pytest.approx(0.5)


def test_average_cost_shape_mismatch():
    with pytest.raises(ValueError):
        average_cost([1.0, 0.0], np.zeros((3, 2)), [0.5, 0.5])


def test_uniform_expansion():
    cfg = SystemConfig(B=2, eta=1.4, uniform_max=3)
    assert cfg.X == 3
    assert cfg.pmf == pytest.approx((0.25,) * 4)
    assert SystemConfig.uniform(B=2, X=3, eta=1.4) == cfg


def test_pmf_renormalized_within_tolerance():
    cfg = SystemConfig(B=1, eta=1.4, pmf=[0.5, 0.5 + 1e-11])
    assert sum(cfg.pmf) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "data",
    [
        {"B": 1, "eta": 1.4, "pmf": [1.2, -0.2]},
        {"B": 1, "eta": 1.4, "pmf": [0.5, 0.5 + 1e-6]},
        {"B": 1, "eta": 1.4, "pmf": []},
        {"B": 1, "eta": 1.0, "pmf": [1.0]},
        {"B": -1, "eta": 1.4, "pmf": [1.0]},
        {"B": 1, "eta": 1.4, "pmf": [1.0], "uniform_max": 2},
    ],
)
def test_invalid_configs_rejected(data):
    with pytest.raises(ValidationError):
        SystemConfig.model_validate(data)


def test_trailing_zero_probability_allowed():
    cfg = SystemConfig(B=1, eta=1.4, pmf=[0.5, 0.5, 0.0])
    assert cfg.X == 2
    assert cfg.tail_mass(2) == 0.0


def test_config_is_frozen(two_point):
    with pytest.raises(ValidationError):
        two_point.B = 3


def test_derived_quantities(two_point):
    assert two_point.mean_request == pytest.approx(0.5)
    np.testing.assert_allclose(two_point.phi_B, [1.0, 2.0])
    assert two_point.tail_mass(0) == 1.0
    assert two_point.tail_mass(1) == pytest.approx(0.5)


def test_degenerated_states_group_full_states(two_point):
    levels = two_point.degenerated_states()
    assert [s.b for s in levels] == [0, 1]
    assert DegeneratedState(b=1).states(two_point) == (State(1, 0), State(1, 1))
    with pytest.raises(ValueError):
        two_point.state(2, 0)
