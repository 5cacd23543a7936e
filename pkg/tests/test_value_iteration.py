import numpy as np
import pytest

from pushcache.errors import ConvergenceError
from pushcache.model.system import SystemConfig
from pushcache.solvers.bellman import SolverOptions
from pushcache.solvers.fast import DecisionMatrix
from pushcache.solvers.value_iteration import (
    Policy,
    ValueVector,
    build_transition_matrix,
    policy_average_cost,
    stationary_distribution,
    value_iterate_degenerated,
    value_iterate_full,
)
from pushcache.tools.baselines import infinite_buffer_cost, no_buffer_cost
from pushcache.tools.oracles import enumerate_deterministic_policies
from pushcache.validation import random_config


def test_two_point_instance_both_solvers(two_point):
    deg, report = value_iterate_degenerated(two_point, eps=1e-10)
    full, _ = value_iterate_full(two_point, eps=1e-10)
    assert deg.average_cost == pytest.approx(0.5, abs=1e-9)
    assert full.average_cost == pytest.approx(0.5, abs=1e-9)
    assert report.converged
    assert report.final_span < 1e-10
    assert report.gain_trace[-1] == pytest.approx(0.5, abs=1e-9)


def test_two_point_matches_enumeration(two_point):
    best, policy = enumerate_deterministic_policies(two_point)
    assert best == pytest.approx(0.5, abs=1e-12)
    assert policy.average_cost == best


def test_point_mass_request_stays_on_demand():
    cfg = SystemConfig(B=3, eta=1.5, pmf=[0.0, 0.0, 1.0])
    policy, _ = value_iterate_degenerated(cfg, eps=1e-10)
    assert policy.average_cost == pytest.approx(1.5**2 - 1, abs=1e-9)
    assert policy.stationary[0] == pytest.approx(1.0)
    best, _ = enumerate_deterministic_policies(cfg)
    assert best == pytest.approx(policy.average_cost, abs=1e-9)


def test_zero_buffer_is_on_demand():
    cfg = SystemConfig.uniform(B=0, X=3, eta=1.4)
    policy, _ = value_iterate_degenerated(cfg)
    assert policy.average_cost == pytest.approx(no_buffer_cost(cfg), abs=1e-9)


def test_cost_lies_between_baselines(uniform_small):
    policy, _ = value_iterate_degenerated(uniform_small, eps=1e-8)
    assert infinite_buffer_cost(uniform_small) <= policy.average_cost + 1e-9
    assert policy.average_cost <= no_buffer_cost(uniform_small) + 1e-9


def test_cost_non_increasing_in_buffer_size():
    costs = [
        value_iterate_degenerated(SystemConfig.uniform(B=B, X=6, eta=1.4), eps=1e-8)[0].average_cost
        for B in range(0, 7)
    ]
    assert all(later <= earlier + 1e-7 for earlier, later in zip(costs, costs[1:]))


def test_policy_cost_matches_gain(uniform_small):
    policy, _ = value_iterate_degenerated(uniform_small, eps=1e-9)
    assert policy_average_cost(policy) == pytest.approx(policy.average_cost, abs=1e-12)
    assert policy.gain == pytest.approx(policy.average_cost, abs=10 * policy.epsilon)


def test_degenerated_and_full_agree(rng):
    for _ in range(10):
        cfg = random_config(rng, 4, 4, eta_range=(1.1, 2.0))
        deg, _ = value_iterate_degenerated(cfg, eps=1e-8)
        full, _ = value_iterate_full(cfg, eps=1e-8)
        assert deg.average_cost == pytest.approx(full.average_cost, rel=1e-6, abs=1e-6)


@pytest.mark.slow
def test_degenerated_and_full_agree_many(rng):
    for _ in range(100):
        cfg = random_config(rng, 6, 6, eta_range=(1.1, 2.0))
        deg, _ = value_iterate_degenerated(cfg, eps=1e-8)
        full, _ = value_iterate_full(cfg, eps=1e-8)
        assert deg.average_cost == pytest.approx(full.average_cost, rel=1e-6, abs=1e-6)


def test_matches_enumeration_on_tiny_instances(rng):
    for _ in range(10):
        cfg = random_config(rng, 1, 2, eta_range=(1.1, 2.5))
        best, _ = enumerate_deterministic_policies(cfg)
        policy, _ = value_iterate_degenerated(cfg, eps=1e-10)
        assert policy.average_cost == pytest.approx(best, abs=1e-8)


def test_convex_marginal_method_matches_exact(uniform_small):
    exact, _ = value_iterate_degenerated(uniform_small, eps=1e-8)
    convex, report = value_iterate_degenerated(
        uniform_small, eps=1e-8, opts=SolverOptions(method="convex-marginal")
    )
    assert report.method == "convex-marginal"
    assert convex.average_cost == pytest.approx(exact.average_cost, abs=1e-6)


def test_worker_count_does_not_change_the_policy(uniform_small):
    serial, _ = value_iterate_degenerated(uniform_small, eps=1e-8)
    threaded, _ = value_iterate_degenerated(uniform_small, eps=1e-8, workers=3)
    for a, b in zip(serial.decisions, threaded.decisions):
        np.testing.assert_array_equal(a.entries, b.entries)


def test_damped_iteration_reaches_same_cost(uniform_small):
    plain, _ = value_iterate_degenerated(uniform_small, eps=1e-9)
    damped, _ = value_iterate_degenerated(uniform_small, eps=1e-9, alpha=0.5)
    assert damped.average_cost == pytest.approx(plain.average_cost, abs=1e-7)


def test_tighter_eps_does_not_raise_cost(uniform_small):
    loose, _ = value_iterate_degenerated(uniform_small, eps=1e-4)
    tight, _ = value_iterate_degenerated(uniform_small, eps=5e-5)
    assert tight.average_cost <= loose.average_cost + 1e-4


def test_iteration_cap_raises_with_best_values(two_point):
    with pytest.raises(ConvergenceError) as info:
        value_iterate_degenerated(two_point, eps=1e-10, max_iterations=1)
    assert info.value.iterations == 1
    assert isinstance(info.value.best, ValueVector)
    with pytest.raises(ConvergenceError):
        value_iterate_full(two_point, eps=1e-10, max_iterations=1)


@pytest.mark.parametrize("kwargs", [{"eps": 0.0}, {"alpha": 0.0}, {"alpha": 1.5}])
def test_bad_iteration_settings(two_point, kwargs):
    with pytest.raises(ValueError):
        value_iterate_degenerated(two_point, **kwargs)


def test_report_phases(two_point):
    _, report = value_iterate_degenerated(two_point)
    assert set(report.phase_seconds) == {"iterate", "assemble"}
    assert report.space == "degenerated"
    assert len(report.gain_trace) == report.iterations


def _pure(b, targets, n_levels):
    entries = np.zeros((len(targets), n_levels))
    entries[np.arange(len(targets)), targets] = 1.0
    return DecisionMatrix(b=b, entries=entries)


def test_build_transition_matrix():
    decisions = [_pure(0, [0, 1], 2), _pure(1, [1, 0], 2)]
    A = build_transition_matrix(decisions, [0.25, 0.75])
    np.testing.assert_allclose(A, [[0.25, 0.75], [0.75, 0.25]])
    A_dict = build_transition_matrix({d.b: d for d in decisions}, [0.25, 0.75])
    np.testing.assert_allclose(A_dict, A)


def test_build_transition_matrix_missing_level():
    with pytest.raises(ValueError):
        build_transition_matrix([_pure(0, [0, 1], 2)], [0.5, 0.5])


def test_identity_decisions_are_multichain():
    decisions = [_pure(b, [b, b], 3) for b in range(3)]
    A = build_transition_matrix(decisions, [0.5, 0.5])
    np.testing.assert_allclose(A, np.eye(3))
    r, multichain = stationary_distribution(A)
    assert multichain
    np.testing.assert_allclose(r, [1.0, 0.0, 0.0])


@pytest.mark.parametrize(
    "A, expected",
    [
        ([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5]),
        ([[0.5, 0.5], [0.25, 0.75]], [1 / 3, 2 / 3]),
        ([[0.0, 1.0], [0.0, 1.0]], [0.0, 1.0]),
    ],
)
def test_stationary_distribution(A, expected):
    r, multichain = stationary_distribution(np.array(A))
    assert not multichain
    np.testing.assert_allclose(r, expected, atol=1e-12)


def test_stationary_distribution_rejects_bad_matrix():
    with pytest.raises(ValueError):
        stationary_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_assemble_rejects_shape_mismatch(two_point):
    with pytest.raises(ValueError):
        Policy.assemble(two_point, [_pure(0, [0, 0, 0], 2), _pure(1, [1, 0, 0], 2)])


def test_policy_arrays_are_read_only(two_point):
    policy, _ = value_iterate_degenerated(two_point)
    for arr in (policy.transition, policy.stationary, policy.omega):
        assert not arr.flags.writeable
        with pytest.raises(ValueError):
            arr[0] = 0.0
