import itertools
import time

import numpy as np
import pytest

from broadcast_repair.capacity import adversarial_instance, bound_B
from broadcast_repair.errors import FieldTooSmallError, InvalidInputError, InvalidParameters, RoundOutOfRange
from broadcast_repair.fields import FieldSpec, galois_field, rank
from broadcast_repair.flowgraph import in_vertex, stage_edges
from broadcast_repair.model import SystemParams, enumerate_collectors, make_instance
from broadcast_repair.netcode import (
    DEFAULT_SEARCH_BUDGET,
    KernelSearch,
    check_decodable,
    check_generic_property,
    decode_matrix,
    generic_property_report,
    generic_round,
    init_source,
    kernel_violations,
    read_trace,
    required_field_order,
    rlnc_trials,
    simulate,
    smallest_free,
    write_trace,
)

GF47 = FieldSpec.prime(47)
GF127 = FieldSpec.prime(127)


def test_required_field_order(desk_params):
    assert required_field_order(desk_params, 3) == 45
    assert required_field_order(desk_params, 4) == 120


def test_source_kernels_are_mds(desk_adversarial):
    state = init_source(desk_adversarial, 3, GF47)
    source = stage_edges(state.graph, -1)
    assert len(source) == 8
    for pair in itertools.combinations(source, 2):
        assert rank(state.matrix(pair)) == 2
    for triple in itertools.combinations(source, 3):
        assert rank(state.matrix(triple)) == 3


def test_one_dimensional_source(desk_adversarial):
    state = init_source(desk_adversarial, 1, GF47)
    assert all(np.any(np.asarray(state.kernels[e]) != 0) for e in stage_edges(state.graph, -1))


def test_field_size_checks(desk_adversarial):
    with pytest.raises(FieldTooSmallError):
        init_source(desk_adversarial, 3, FieldSpec.prime(7))
    with pytest.raises(FieldTooSmallError):
        init_source(desk_adversarial, 3, FieldSpec.prime(43))
    state = init_source(desk_adversarial, 3, FieldSpec.prime(43), allow_small_field=True)
    assert not state.guaranteed
    with pytest.raises(InvalidParameters):
        init_source(desk_adversarial, 5, GF47)


def test_generic_code_decodes_everywhere(desk_adversarial):
    result = simulate(desk_adversarial, 3, GF47)
    assert result.all_decodable
    assert sorted(result.decode) == [0, 1, 2, 3]
    assert kernel_violations(result.state) == []
    assert result.state.modes == {1: "deterministic", 2: "deterministic", 3: "deterministic"}
    # node 1 survives every round and keeps what it stored
    assert np.array_equal(result.state.stored(1, 0), result.state.stored(1, 3))


def test_generic_property_holds_at_every_stage(desk_adversarial):
    state = simulate(desk_adversarial, 3, GF47).state
    for s in range(-1, state.stage + 1):
        report = generic_property_report(state, s)
        assert report.ok, report
        assert report.path_independent > 0
    # every triple of source edges, and of initial storage edges, is path-independent
    assert generic_property_report(state, -1).path_independent == 56
    assert generic_property_report(state, 0).path_independent == 56
    assert check_generic_property(state, 3)


def test_file_above_capacity_is_not_decodable(desk_adversarial):
    state = simulate(desk_adversarial, 4, GF127).state
    for members in enumerate_collectors(desk_adversarial, 0):
        assert check_decodable(state, 0, members)
    assert not check_decodable(state, 2, (5, 6))

    at_capacity = simulate(desk_adversarial, 3, GF127).state
    assert check_decodable(at_capacity, 2, (5, 6))


def test_collector_must_be_active(desk_adversarial):
    state = simulate(desk_adversarial, 3, GF47).state
    with pytest.raises(InvalidInputError):
        check_decodable(state, 2, (4, 5))
    with pytest.raises(RoundOutOfRange):
        check_decodable(state, 4, (1, 5))


def test_rounds_apply_in_order(desk_adversarial):
    state = init_source(desk_adversarial, 3, GF47)
    with pytest.raises(RoundOutOfRange):
        generic_round(state, desk_adversarial.rounds[1])


def test_randomized_fallback_needs_seed(desk_adversarial):
    result = simulate(desk_adversarial, 3, GF47, seed=3, search_budget=1)
    assert set(result.state.modes.values()) == {"randomized"}
    assert result.metadata()["search"] == {"1": "randomized", "2": "randomized", "3": "randomized"}
    with pytest.raises(InvalidParameters):
        simulate(desk_adversarial, 3, GF47, search_budget=1)


def test_rlnc_needs_seed(desk_adversarial):
    with pytest.raises(InvalidParameters):
        simulate(desk_adversarial, 3, FieldSpec.binary(8), "rlnc")


def test_rlnc_is_deterministic(desk_adversarial, tmp_path):
    first = simulate(desk_adversarial, 3, FieldSpec.binary(8), "rlnc", 5)
    second = simulate(desk_adversarial, 3, FieldSpec.binary(8), "rlnc", 5)
    assert first.decode == second.decode
    a = write_trace(first, tmp_path / "a.jsonl")
    b = write_trace(second, tmp_path / "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    meta = first.metadata()
    assert meta["prng"] == "numpy.random.PCG64" and meta["seed"] == 5


def test_rlnc_without_broadcast_leaves_newcomers_empty():
    params = SystemParams(n=4, k=2, d=2, r=1, alpha=2, beta=0)
    instance = make_instance(params, [([4], [1, 2])])
    state = simulate(instance, 3, FieldSpec.binary(8), "rlnc", 1).state
    assert not np.any(np.asarray(state.stored(5, 1)))
    assert not check_decodable(state, 1, (1, 5))
    assert check_decodable(state, 1, (1, 2))


def test_rlnc_store_received(desk_adversarial):
    # alpha == d*beta, so the newcomer keeps exactly what it hears
    state = simulate(desk_adversarial, 3, FieldSpec.binary(8), "rlnc", 9, store_received=True).state
    assert np.array_equal(state.stored(5, 1), state.incoming(in_vertex(5)))


def test_rlnc_success_rate_large_field(desk_adversarial):
    summary = rlnc_trials(desk_adversarial, 3, FieldSpec.binary(16), 1000, base_seed=1000)
    assert summary.successes >= 999


def test_rlnc_success_rate_small_field(desk_adversarial):
    # each random choice goes bad with probability about 1/256
    summary = rlnc_trials(desk_adversarial, 3, FieldSpec.binary(8), 100, base_seed=2000)
    assert 94 <= summary.successes <= 97
    assert len(summary.failing_seeds) == 100 - summary.successes


def test_trace_round_trip(desk_adversarial, tmp_path):
    result = simulate(desk_adversarial, 3, GF47)
    records = read_trace(write_trace(result, tmp_path / "trace.jsonl"))
    assert [r.stage for r in records] == [0, 1, 2, 3]
    assert sorted(records[3].nodes) == [1, 5, 6, 7]
    assert all(len(rows) == 2 and len(rows[0]) == 3 for rows in records[3].nodes.values())
    assert records[2].search == "deterministic"


def test_decode_matrix_covers_all_collectors(desk_adversarial):
    state = simulate(desk_adversarial, 3, GF47).state
    matrix = decode_matrix(state)
    assert all(len(row) == 6 for row in matrix.values())


def test_smallest_free():
    assert smallest_free(np.array([0, 1, 3, 1]), 5) == 2
    assert smallest_free(np.array([], dtype=np.int64), 4) == 0
    assert smallest_free(np.array([2, 0, 1]), 3) is None


def test_kernel_search_scans_in_fixed_order():
    GF = galois_field(GF47)
    search = KernelSearch(GF, 3, DEFAULT_SEARCH_BUDGET, None)
    search.start([GF([1, 0, 0]), GF([0, 1, 0])])
    # the only hyperplane is x3 == 0; (1, 0, 0) lies in it, (1, 0, 1) does not
    assert np.array_equal(search.choose(GF.Identity(3)), GF([1, 0, 1]))
    assert search.mode == "deterministic"


def test_kernel_search_scan_budget_falls_back_to_sampling():
    GF = galois_field(GF47)
    search = KernelSearch(GF, 3, DEFAULT_SEARCH_BUDGET, np.random.default_rng(3), scan_budget=0)
    search.start([GF([1, 0, 0]), GF([0, 1, 0])])
    x = search.choose(GF.Identity(3))
    assert search.mode == "randomized"
    assert int(x[2]) != 0

    unseeded = KernelSearch(GF, 3, DEFAULT_SEARCH_BUDGET, None, scan_budget=0)
    unseeded.start([GF([1, 0, 0]), GF([0, 1, 0])])
    with pytest.raises(InvalidParameters):
        unseeded.choose(GF.Identity(3))


def test_generic_code_on_example_system(example_params):
    # C(8*2 + 4*1, 4) = 4845 < 4861
    instance = adversarial_instance(example_params, bound_B(example_params))
    started = time.perf_counter()
    result = simulate(instance, 5, FieldSpec.prime(4861))
    assert time.perf_counter() - started < 120
    assert result.all_decodable
    assert set(result.state.modes.values()) == {"deterministic"}
