import json
from fractions import Fraction

import pytest

from broadcast_repair.errors import DivisibilityError, InfeasibleTradeoffError, InvalidParameters
from broadcast_repair.model import SystemParams
from broadcast_repair.tradeoff import (
    alpha_at,
    baseline_curve,
    cooperative_transmission_bandwidth,
    dominance_report,
    ms_mt_points,
    render,
    repair_transmission_bandwidth,
    tradeoff_curve,
    write_csv,
    write_sidecar,
)


def test_repair_transmission_bandwidth(example_params):
    assert repair_transmission_bandwidth(example_params).value == 2
    assert not repair_transmission_bandwidth(example_params).trivial
    silent = example_params.model_copy(update={"beta": 0})
    assert repair_transmission_bandwidth(silent).value == 0


def test_bandwidth_when_newcomers_outnumber_k():
    params = SystemParams(n=4, k=2, d=2, r=2, alpha=2, beta=1)
    bw = repair_transmission_bandwidth(params)
    assert bw.trivial
    assert bw.value == 2
    assert repair_transmission_bandwidth(params, file_size=3).value == Fraction(3, 2)


def test_cooperative_bandwidth():
    assert cooperative_transmission_bandwidth(2, 2, 1, 1) == 3


def test_broadcast_endpoints():
    ms, mt = ms_mt_points(4, 9, 2)
    assert (ms.tau, ms.alpha) == (Fraction(9, 28), Fraction(1, 4))
    assert (mt.tau, mt.alpha) == (Fraction(9, 32), Fraction(9, 32))
    assert ms.rounded() == ("0.321", "0.250")
    assert mt.rounded() == ("0.281", "0.281")
    assert (ms.label, mt.label) == ("MSB", "MTB")


def test_cooperative_endpoints():
    ms, mt = ms_mt_points(4, 9, 2, "cooperative")
    assert ms.tau == Fraction(10, 28)
    assert render(ms.tau) == "0.357"
    assert mt.tau == mt.alpha == Fraction(19, 64)


def test_single_newcomer_schemes_coincide():
    assert [(p.tau, p.alpha) for p in ms_mt_points(4, 9, 1)] == [
        (p.tau, p.alpha) for p in ms_mt_points(4, 9, 1, "cooperative")
    ]


def test_endpoint_arguments():
    with pytest.raises(DivisibilityError):
        ms_mt_points(3, 4, 2)
    with pytest.raises(InvalidParameters):
        ms_mt_points(4, 9, 4)
    with pytest.raises(InvalidParameters):
        ms_mt_points(4, 3, 2)
    with pytest.raises(InvalidParameters):
        ms_mt_points(4, 9, 2, "multicast")


def test_alpha_at_endpoints():
    assert alpha_at(4, 9, 2, Fraction(9, 28)) == Fraction(1, 4)
    assert alpha_at(4, 9, 2, Fraction(9, 32)) == Fraction(9, 32)
    # past the MS point storage stays at 1/k
    assert alpha_at(4, 9, 2, Fraction(1, 2)) == Fraction(1, 4)
    with pytest.raises(InfeasibleTradeoffError):
        alpha_at(4, 9, 2, Fraction(1, 4))


def test_single_node_baseline_value():
    assert alpha_at(4, 9, 1, Fraction(9, 28)) == Fraction(15, 56)


def test_curve_shape():
    curve = tradeoff_curve(4, 9, 2, samples=11)
    assert len(curve) == 11
    assert curve[0].label == "MTB" and curve[-1].label == "MSB"
    assert {p.label for p in curve[1:-1]} == {"curve"}
    ms, mt = ms_mt_points(4, 9, 2)
    assert (curve[0].tau, curve[0].alpha) == (mt.tau, mt.alpha)
    assert (curve[-1].tau, curve[-1].alpha) == (ms.tau, ms.alpha)

    alphas = [p.alpha for p in curve]
    assert all(a >= b for a, b in zip(alphas, alphas[1:]))
    # even grid, so convexity shows as nonnegative second differences
    assert all(alphas[i - 1] - 2 * alphas[i] + alphas[i + 1] >= 0 for i in range(1, len(alphas) - 1))


def test_baseline_is_dominated():
    curve = tradeoff_curve(4, 9, 2)
    baseline = baseline_curve(4, 9, [p.tau for p in curve])
    assert not baseline[0].feasible and baseline[0].label == "infeasible"
    assert baseline[-1].feasible
    for ours, single in zip(curve, baseline):
        if single.feasible:
            assert single.alpha >= ours.alpha


def test_dominance_example():
    report = dominance_report(4, 9, 2)
    assert report.ms_gap == Fraction(1, 28)
    assert report.mt_gap == Fraction(1, 64)
    assert report.strict
    assert report.to_json()["ms_gap"] == "1/28"


def test_dominance_without_batching():
    report = dominance_report(4, 9, 1)
    assert report.ms_gap == report.mt_gap == 0
    assert not report.strict


@pytest.mark.parametrize("k", [2, 4, 6])
def test_dominance_grid(k):
    for r in [r for r in range(1, k) if k % r == 0]:
        for d in range(k, k + 5):
            report = dominance_report(k, d, r)
            assert report.ms_gap >= 0 and report.mt_gap >= 0
            assert report.strict == (r > 1)


def test_csv_and_sidecar(tmp_path):
    curve = tradeoff_curve(4, 9, 2, samples=3)
    points = curve + baseline_curve(4, 9, [p.tau for p in curve])
    csv_path = write_csv(points, tmp_path / "tradeoff.csv")
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "scheme,tau,alpha,label"
    assert lines[1] == "broadcast,0.281,0.281,MTB"
    assert lines[4] == "single,0.281,,infeasible"

    sidecar = write_sidecar(points, tmp_path / "tradeoff.json", {"note": "exact"})
    data = json.loads(sidecar.read_text(encoding="utf-8"))
    assert data["note"] == "exact"
    assert data["points"][0]["tau"] == "9/32"
    assert data["points"][3]["alpha"] is None
