from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import TOOL_NAME, __version__
from .capacity import (
    MAX_SEARCH_K,
    adversarial_collector,
    adversarial_instance,
    bound_B,
    bound_B_restricted,
    closed_form,
    round_minima,
    running_minimum,
)
from .config import RunConfig, load_config
from .errors import (
    BroadcastRepairError,
    CapExceededError,
    DecodeFailure,
    GenericCodeError,
    InvalidParameters,
    TrivialCaseError,
    VerificationError,
)
from .fields import FieldSpec
from .flowgraph import build_graph, collector_max_flow, collector_vertex, add_collector, write_graph, weakest_collector
from .model import Instance, Violation, load_instance, validate
from .netcode import (
    decode_matrix_json,
    generic_property_report,
    rlnc_trials,
    simulate,
    write_trace,
)
from .tradeoff import (
    baseline_curve,
    dominance_report,
    fraction_text,
    ms_mt_points,
    repair_transmission_bandwidth,
    tradeoff_curve,
    write_csv,
    write_sidecar,
)

logger = logging.getLogger(__name__)


class ReportWriter:
    """Writes every result file of a run; JSON is sorted and indented so reruns are byte-identical."""

    def __init__(self, out_dir: str | Path, config: RunConfig):
        self.out_dir = Path(out_dir)
        self.config = config
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def header(self, command: str) -> Dict[str, Any]:
        return {"tool": {"name": TOOL_NAME, "version": __version__}, "command": command, "config": self.config.resolved()}

    def json(self, name: str, document: Dict[str, Any]) -> Path:
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
        self.written.append(target)
        return target

    def report(self, command: str, body: Dict[str, Any], name: str = "report.json") -> Path:
        return self.json(name, {**self.header(command), **body})

    def record(self, target: Path) -> Path:
        self.written.append(target)
        return target


def _bound_summary(config: RunConfig) -> Dict[str, Any]:
    params = config.params()
    if params.k > MAX_SEARCH_K:
        raise CapExceededError("bound search (k)", params.k, MAX_SEARCH_K)
    if params.r >= params.k:
        tau = repair_transmission_bandwidth(params)
        raise TrivialCaseError(
            f"r={params.r} >= k={params.k}: helpers send the whole file, tau = C/r = {fraction_text(tau.value)} with C = k*alpha"
        )
    sol = bound_B(params)
    a, b = sol.symbolic(params.d)
    body: Dict[str, Any] = {
        "params": params.to_json(),
        "bound": sol.to_json(),
        "symbolic": {"alpha": a, "beta": b},
        "tau": fraction_text(repair_transmission_bandwidth(params).value),
    }
    if params.k % params.r == 0:
        body["closed_form"] = closed_form(params)
        body["restricted"] = bound_B_restricted(params).to_json()
        if body["closed_form"] != sol.value or body["restricted"]["B"] != sol.value:
            raise VerificationError(
                f"closed form {body['closed_form']} and restricted search {body['restricted']['B']} disagree with B={sol.value}"
            )
    return body


def cmd_capacity(config: RunConfig, writer: ReportWriter) -> int:
    body = _bound_summary(config)
    print(f"B = {body['bound']['B']}  x = {body['bound']['x']}  T1 = {body['bound']['T1']}")
    if "closed_form" in body:
        print(f"closed form = {body['closed_form']}  restricted = {body['restricted']['B']}")
    writer.report("capacity", body)
    return 0


def cmd_verify(config: RunConfig, writer: ReportWriter) -> int:
    params = config.params()
    B = _bound_summary(config)["bound"]["B"]
    body: Dict[str, Any] = {"params": params.to_json(), "B": B}
    problems: List[str] = []

    if config.adversarial_only:
        sol = bound_B(params)
        instance = adversarial_instance(params, sol, params.k)
        s, members = adversarial_collector(params, sol)
        designated = collector_max_flow(build_graph(instance), instance, s, members)
        weakest = weakest_collector(instance)
        body["adversarial"] = {
            "instance": instance.to_json(),
            "collector": {"round": s, "members": list(members), "max_flow": designated},
            "instance_capacity": weakest.value,
        }
        if designated != B:
            problems.append(f"designated collector max-flow {designated} != B={B}")
        if weakest.value != B:
            problems.append(f"adversarial instance capacity {weakest.value} != B={B}")
        print(f"adversarial instance: collector {list(members)} at round {s} has max-flow {designated}; B = {B}")
    else:
        t_max = config.t_max if config.t_max is not None else params.k + 1
        minima = round_minima(params, t_max, config.instance_cap)
        sequence = running_minimum(minima)
        body["round_minima"] = minima
        body["sequence"] = sequence
        below = [s for s, v in enumerate(minima) if v < B]
        if below:
            problems.append(f"collectors below B={B} after rounds {below}: round minima {minima}")
        tail = minima[params.k:]
        if any(v != B for v in tail):
            problems.append(f"weakest collector from round k on is {tail}, expected B={B}")
        print(f"capacity for T = 0..{t_max}: {sequence}; B = {B}")

    body["problems"] = problems
    writer.report("verify", body)
    if problems:
        raise VerificationError("; ".join(problems))
    return 0


def _instance_for(config: RunConfig) -> Instance:
    if config.instance:
        instance = load_instance(config.instance)
        validate(instance).raise_if_invalid()
        return instance
    params = config.params()
    T = params.T if params.T is not None else params.k + 1
    return adversarial_instance(params, bound_B(params), T)


def cmd_simulate(config: RunConfig, writer: ReportWriter) -> int:
    instance = _instance_for(config)
    params = instance.params
    B = bound_B(params).value
    omega = config.omega if config.omega is not None else B
    if config.mode == "rlnc" and config.seed is None:
        raise InvalidParameters([Violation("seed is mandatory for randomized commands")])
    spec: FieldSpec = config.field_spec()

    result = simulate(
        instance,
        omega,
        spec,
        config.mode,
        config.seed,
        store_received=config.store_received,
        allow_small_field=config.allow_small_field,
        search_budget=config.search_budget,
    )
    writer.record(write_trace(result, writer.path("trace.jsonl")))
    writer.json("decode_matrix.json", decode_matrix_json(result.decode))

    body: Dict[str, Any] = {
        "instance": instance.to_json(),
        "B": B,
        "simulation": result.metadata(),
        "undecodable": [{"stage": s, "members": list(m)} for s, m in result.failures],
    }
    if config.mode == "generic" and config.check_generic:
        reports = [generic_property_report(result.state, s, config.subset_cap) for s in range(-1, result.state.stage + 1)]
        body["generic_property"] = [r.to_json() for r in reports]
        if not all(r.ok for r in reports) and result.state.guaranteed:
            writer.report("simulate", body)
            raise GenericCodeError("a path-independent subset is not regular")
    if config.mode == "rlnc" and config.trials:
        summary = rlnc_trials(instance, omega, spec, config.trials, config.seed, store_received=config.store_received)
        body["trials"] = summary.to_json()
        print(f"rlnc trials: {summary.successes}/{summary.trials} fully decodable")
    writer.report("simulate", body)

    print(f"{config.mode} code, omega = {omega}, B = {B}: {len(result.failures)} undecodable collectors")
    if result.failures and config.mode == "generic" and omega <= B and result.state.guaranteed:
        raise DecodeFailure(f"generic code failed to decode at {result.failures[:3]} with omega={omega} <= B={B}")
    return 0


def cmd_tradeoff(config: RunConfig, writer: ReportWriter) -> int:
    missing = [key for key in ("k", "d", "r") if getattr(config, key) is None]
    if missing:
        raise InvalidParameters([Violation("parameter is required", key) for key in missing])
    k, d, r = config.k, config.d, config.r
    curve = tradeoff_curve(k, d, r, config.samples)
    baseline = baseline_curve(k, d, [p.tau for p in curve])
    cooperative = list(ms_mt_points(k, d, r, "cooperative"))
    report = dominance_report(k, d, r)
    points = curve + baseline + cooperative

    writer.record(write_csv(points, writer.path("tradeoff.csv")))
    writer.record(write_sidecar(points, writer.path("tradeoff.json"), {**writer.header("tradeoff"), "dominance": report.to_json()}))
    for p in curve[:1] + curve[-1:] + cooperative:
        tau, alpha = p.rounded()
        print(f"{p.label}: ({tau}, {alpha})")
    print(f"cooperative minus broadcast tau: MS {fraction_text(report.ms_gap)}, MT {fraction_text(report.mt_gap)}")
    return 0


def cmd_mincut(config: RunConfig, writer: ReportWriter) -> int:
    if not config.instance or config.collector_round is None or not config.collector:
        raise InvalidParameters([Violation("mincut needs instance, collector_round and collector")])
    instance = load_instance(config.instance)
    graph = add_collector(build_graph(instance), instance, config.collector_round, config.collector)
    value = collector_max_flow(graph, instance, config.collector_round, config.collector)
    edges_path, table_path = write_graph(graph, writer.out_dir)
    writer.record(edges_path)
    writer.record(table_path)
    dc = collector_vertex(config.collector_round, config.collector)
    writer.report("mincut", {"instance": instance.to_json(), "collector": dc.label, "max_flow": str(value)})
    print(f"max-flow to {dc.label} = {value}")
    return 0


HELP = {
    "capacity": "bound B, closed form and restricted search",
    "verify": "exhaustive capacity for T = 0..t_max, or the adversarial instance only",
    "simulate": "run a generic or RLNC code over repair rounds",
    "tradeoff": "storage vs transmission-bandwidth curve and endpoints",
    "mincut": "max-flow to one collector of a serialized instance",
}

COMMANDS: Dict[str, Callable[[RunConfig, ReportWriter], int]] = {
    "capacity": cmd_capacity,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "tradeoff": cmd_tradeoff,
    "mincut": cmd_mincut,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Capacity and repair analysis for broadcast-repair storage")
    parser.add_argument("--log-level", default="WARNING", help="Logging level for stderr (default WARNING)")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        cmd = sub.add_parser(name, help=HELP[name])
        cmd.add_argument("settings", nargs="*", help="key=value settings, e.g. n=8 k=3 d=4 r=2 alpha=2 beta=1")
        cmd.add_argument("--config", default=None, help="JSON config file; command-line settings win")
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.settings, args.config)
        writer = ReportWriter(config.out, config)
        return COMMANDS[args.command](config, writer)
    except BroadcastRepairError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


