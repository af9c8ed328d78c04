import pytest

from broadcast_repair.capacity import (
    BoundSolution,
    adversarial_capacity,
    adversarial_collector,
    adversarial_instance,
    bound_B,
    bound_B_restricted,
    bound_B_widened,
    capacity_sequence,
    capacity_T,
    closed_form,
    objective,
    round_minima,
)
from broadcast_repair.errors import CapExceededError, DivisibilityError, InvalidParameters, TrivialCaseError
from broadcast_repair.flowgraph import build_graph, collector_max_flow, instance_capacity
from broadcast_repair.model import SystemParams, enumerate_instances, validate

EXAMPLE_SOLUTION = BoundSolution(5, (0, 1, 2, 0), frozenset({1, 3}))


def test_example_bound(example_params):
    sol = bound_B(example_params)
    assert sol.value == 5
    # several minimisers exist; all read alpha + 3*beta
    assert sol.symbolic(example_params.d) == (1, 3)
    assert objective(example_params, (0, 1, 2, 0), {1, 3}) == 5
    assert objective(example_params, sol.x, sol.T1) == 5


def test_zero_beta_bound_is_zero():
    assert bound_B(SystemParams(n=8, k=3, d=4, r=2, alpha=2, beta=0)).value == 0


def test_desk_bound(desk_params):
    sol = bound_B(desk_params)
    assert sol.value == 3
    assert sol.x == (0, 1, 1)
    assert sol.T1 == frozenset()


def test_trivial_case_rejected():
    with pytest.raises(TrivialCaseError):
        bound_B(SystemParams(n=4, k=2, d=2, r=2, alpha=2, beta=1))


def test_search_cap():
    with pytest.raises(CapExceededError):
        bound_B(SystemParams(n=14, k=11, d=12, r=1, alpha=1, beta=1))


def test_objective_rejects_infeasible_points(example_params):
    with pytest.raises(InvalidParameters):
        objective(example_params, (0, 3, 0, 0), set())
    with pytest.raises(InvalidParameters):
        objective(example_params, (1, 1, 0, 0), set())
    with pytest.raises(InvalidParameters):
        objective(example_params, (0, 1, 2, 0), {4})


def test_restricted_search():
    params = SystemParams(n=11, k=4, d=9, r=2, alpha=7, beta=2)
    assert bound_B_restricted(params).value == 28
    assert closed_form(params) == 28
    assert bound_B(params).value == 28


def test_closed_form_values():
    assert closed_form(SystemParams(n=4, k=2, d=2, r=1, alpha=2, beta=1)) == 3
    assert closed_form(SystemParams(n=4, k=2, d=2, r=1, alpha=0, beta=1)) == 0
    assert closed_form(SystemParams(n=4, k=2, d=3, r=1, alpha=2, beta=1)) == 4
    with pytest.raises(DivisibilityError):
        closed_form(SystemParams(n=8, k=3, d=4, r=2, alpha=2, beta=1))
    with pytest.raises(DivisibilityError):
        bound_B_restricted(SystemParams(n=8, k=3, d=4, r=2, alpha=2, beta=1))


def test_closed_form_is_achieved():
    params = SystemParams(n=4, k=2, d=3, r=1, alpha=2, beta=1)
    sol = bound_B(params)
    assert sol.value == 4
    assert adversarial_capacity(params, sol) == 4


@pytest.mark.parametrize("k", [2, 4, 6])
def test_bound_agrees_with_closed_form(k):
    for r in [r for r in range(1, k) if k % r == 0]:
        for d in range(k, k + 5):
            for alpha in range(4):
                for beta in range(4):
                    params = SystemParams(n=d + r, k=k, d=d, r=r, alpha=alpha, beta=beta)
                    expected = closed_form(params)
                    assert bound_B(params).value == expected, params
                    assert bound_B_restricted(params).value == expected, params


@pytest.mark.parametrize("k, r", [(2, 1), (3, 1), (3, 2)])
def test_widened_search_adds_nothing(k, r):
    for d in range(k, k + 3):
        for alpha in range(1, 4):
            for beta in range(0, 3):
                params = SystemParams(n=d + r, k=k, d=d, r=r, alpha=alpha, beta=beta)
                assert bound_B_widened(params).value == bound_B(params).value, params


def test_adversarial_instance_for_example(example_params):
    instance = adversarial_instance(example_params, EXAMPLE_SOLUTION)
    assert validate(instance).ok
    rounds = instance.to_json()["rounds"]
    assert [r["failed"] for r in rounds] == [[7, 8], [6, 10], [4, 5]]
    assert [r["helpers"] for r in rounds] == [[1, 2, 3, 4], [1, 2, 3, 9], [1, 9, 11, 12]]
    assert adversarial_collector(example_params, EXAMPLE_SOLUTION) == (3, (9, 11, 12))
    assert collector_max_flow(build_graph(instance), instance, 3, (9, 11, 12)) == 5
    assert adversarial_capacity(example_params, EXAMPLE_SOLUTION) == 5


def test_adversarial_instance_from_search(example_params):
    sol = bound_B(example_params)
    assert adversarial_capacity(example_params, sol) == sol.value
    # nothing below B anywhere in the instance
    assert instance_capacity(adversarial_instance(example_params, sol)) == sol.value


def test_adversarial_instance_reading_initial_nodes(example_params):
    sol = BoundSolution(6, (3, 0, 0, 0), frozenset())
    assert adversarial_collector(example_params, sol) == (3, (1, 2, 3))
    assert adversarial_capacity(example_params, sol) == 6


def test_desk_adversarial_instance(desk_params, desk_adversarial):
    sol = bound_B(desk_params)
    instance = adversarial_instance(desk_params, sol, T=3)
    assert instance.to_json() == desk_adversarial.to_json()
    assert adversarial_collector(desk_params, sol) == (2, (5, 6))
    assert adversarial_capacity(desk_params, sol) == 3


def test_adversarial_needs_k_rounds(example_params):
    with pytest.raises(InvalidParameters):
        adversarial_instance(example_params, EXAMPLE_SOLUTION, T=2)


@pytest.fixture(scope="module")
def desk_sequence():
    return capacity_sequence(SystemParams(n=4, k=2, d=2, r=1, alpha=2, beta=1), 3)


def test_capacity_sequence(desk_sequence):
    assert desk_sequence == [4, 3, 3, 3]


def test_capacity_T(desk_params):
    assert capacity_T(desk_params, 0) == 4
    assert capacity_T(desk_params, 1) == 3


@pytest.mark.parametrize("T", [0, 1, 2])
def test_capacity_T_matches_instance_enumeration(desk_params, T):
    expected = min(instance_capacity(i) for i in enumerate_instances(desk_params.with_rounds(T)))
    assert capacity_T(desk_params, T) == expected


def test_round_minima(desk_params):
    # from round k on the weakest collector sits exactly at B = 3
    assert round_minima(desk_params, 3) == [4, 3, 3, 3]


def test_capacity_sequence_cap(desk_params):
    with pytest.raises(CapExceededError):
        capacity_sequence(desk_params, 3, cap=100)


def test_solution_json(example_params):
    sol = bound_B(example_params)
    data = sol.to_json()
    assert data["B"] == 5
    assert BoundSolution.from_json(data) == sol
