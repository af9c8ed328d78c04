"""
Information flow graphs for broadcast repair.

Two shapes are built from one instance:

* the original graph, where infinite edges model the source, broadcast fan-out
  and collector reads, and
* the refined graph, stage-stamped, where every capacity-c link is c parallel
  unit edges; code construction works on this one.

Max-flow is delegated to networkx (Edmonds-Karp). Infinite capacity stays a
symbol everywhere except inside the flow computation.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

from .errors import CapExceededError, CutPreconditionError, InvalidInstance
from .model import Instance, SystemParams, active_nodes_after, check_round, enumerate_collectors, validate

logger = logging.getLogger(__name__)

MAX_CUT_VERTICES = 20


class Infinite(enum.Enum):
    INF = "INF"

    def __repr__(self) -> str:
        return "INF"

    def __str__(self) -> str:
        return "INF"


INF = Infinite.INF
Capacity = Union[int, Infinite]

Role = Literal["source", "in", "out", "aux", "collector"]
Term = Literal["alpha", "beta", "inf", "unit"]


@dataclass(frozen=True)
class Vertex:
    role: Role
    node: Optional[int] = None
    stage: Optional[int] = None
    members: Tuple[int, ...] = ()

    @property
    def label(self) -> str:
        if self.role == "source":
            return "S"
        if self.role == "in":
            return f"In{self.node}"
        if self.role == "out":
            return f"Out{self.node}" if self.stage is None else f"Out{self.node}^{self.stage}"
        if self.role == "aux":
            return f"Aux{self.node}^{self.stage}"
        return f"DC{self.stage}:{','.join(map(str, self.members))}"

    def to_json(self) -> Dict[str, object]:
        return {"label": self.label, "role": self.role, "node": self.node, "stage": self.stage, "members": list(self.members)}


SOURCE = Vertex("source")


def in_vertex(node: int) -> Vertex:
    return Vertex("in", node)


def out_vertex(node: int, stage: Optional[int] = None) -> Vertex:
    return Vertex("out", node, stage)


def aux_vertex(helper: int, s: int) -> Vertex:
    return Vertex("aux", helper, s)


def collector_vertex(s: int, members: Iterable[int]) -> Vertex:
    return Vertex("collector", None, s, tuple(sorted(members)))


@dataclass(frozen=True)
class CapEdge:
    tail: Vertex
    head: Vertex
    capacity: Capacity
    term: Term
    stage: Optional[int] = None
    index: int = 0


@dataclass(frozen=True)
class FlowGraph:
    kind: Literal["original", "refined"]
    params: SystemParams
    vertices: Tuple[Vertex, ...]
    edges: Tuple[CapEdge, ...]

    @cached_property
    def index(self) -> Dict[Vertex, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def collectors(self) -> Tuple[Vertex, ...]:
        return tuple(v for v in self.vertices if v.role == "collector")

    @cached_property
    def finite_total(self) -> int:
        return sum(e.capacity for e in self.edges if e.capacity is not INF)

    @property
    def sentinel(self) -> int:
        """Stand-in for infinite capacity inside max-flow; no finite cut reaches it."""
        return self.finite_total + 1

    def __contains__(self, vertex: Vertex) -> bool:
        return vertex in self.index

    def with_edges(self, vertices: Sequence[Vertex], edges: Sequence[CapEdge]) -> "FlowGraph":
        return FlowGraph(self.kind, self.params, self.vertices + tuple(vertices), self.edges + tuple(edges))

    def topological_order(self) -> List[Vertex]:
        return list(nx.topological_sort(self.to_networkx()))

    def to_networkx(self, sentinel: Optional[int] = None) -> nx.DiGraph:
        """Collapse parallel edges into one capacity per (tail, head)."""
        big = self.sentinel if sentinel is None else sentinel
        G = nx.DiGraph()
        G.add_nodes_from(self.vertices)
        for e in self.edges:
            cap = big if e.capacity is INF else e.capacity
            if G.has_edge(e.tail, e.head):
                G[e.tail][e.head]["capacity"] = min(big, G[e.tail][e.head]["capacity"] + cap)
            else:
                G.add_edge(e.tail, e.head, capacity=cap)
        return G


def _checked(instance: Instance, check: bool) -> None:
    if check:
        validate(instance).raise_if_invalid()


def build_graph(instance: Instance, collectors: Iterable[Tuple[int, Iterable[int]]] = (), *, check: bool = True) -> FlowGraph:
    """
    Build the original information flow graph of ``instance``.

    Collectors are optional ``(round, members)`` pairs; most callers attach
    them one at a time with :func:`add_collector`.
    """
    _checked(instance, check)
    params = instance.params
    vertices: List[Vertex] = [SOURCE]
    edges: List[CapEdge] = []

    def storage_node(i: int) -> None:
        vertices.extend((in_vertex(i), out_vertex(i)))
        edges.append(CapEdge(in_vertex(i), out_vertex(i), params.alpha, "alpha"))

    for i in range(1, params.n + 1):
        storage_node(i)
        edges.append(CapEdge(SOURCE, in_vertex(i), INF, "inf"))

    for rnd in instance.rounds:
        for h in sorted(rnd.helpers):
            aux = aux_vertex(h, rnd.index)
            vertices.append(aux)
            edges.append(CapEdge(out_vertex(h), aux, params.beta, "beta"))
        for t in rnd.newcomers:
            storage_node(t)
            for h in sorted(rnd.helpers):
                edges.append(CapEdge(aux_vertex(h, rnd.index), in_vertex(t), INF, "inf"))

    graph = FlowGraph("original", params, tuple(vertices), tuple(edges))
    for s, members in collectors:
        graph = add_collector(graph, instance, s, members)
    return graph


def add_collector(graph: FlowGraph, instance: Instance, s: int, members: Iterable[int]) -> FlowGraph:
    """Attach the collector reading ``members`` after round ``s``; returns a new graph."""
    members = tuple(sorted(members))
    check_round(instance, s)
    active = active_nodes_after(instance, s)
    if len(members) != instance.params.k or not set(members) <= active:
        raise InvalidInstance([f"collector {list(members)} is not a k-subset of the nodes active after round {s}"])
    dc = collector_vertex(s, members)
    if dc in graph:
        return graph
    if graph.kind == "original":
        new_edges = [CapEdge(out_vertex(i), dc, INF, "inf") for i in members]
    else:
        new_edges = [
            CapEdge(out_vertex(i, s), dc, 1, "unit", s, j) for i in members for j in range(graph.params.alpha)
        ]
    return graph.with_edges([dc], new_edges)


# --------------------------------------------------------------------- cuts


@dataclass(frozen=True)
class CutExpression:
    """A cut value kept as ``alpha*a + beta*b + unit`` plus a count of crossing infinite edges."""

    alpha: int = 0
    beta: int = 0
    unit: int = 0
    infinite: int = 0

    def evaluate(self, params: SystemParams) -> Capacity:
        if self.infinite:
            return INF
        return self.alpha * params.alpha + self.beta * params.beta + self.unit

    def __str__(self) -> str:
        if self.infinite:
            return "INF"
        parts = []
        for coeff, sym in ((self.alpha, "α"), (self.beta, "β")):
            if coeff:
                parts.append(sym if coeff == 1 else f"{coeff}{sym}")
        if self.unit:
            parts.append(str(self.unit))
        return " + ".join(parts) or "0"


@dataclass(frozen=True)
class CutResult:
    X: frozenset
    crossing: Tuple[CapEdge, ...]
    expression: CutExpression
    value: Capacity


def _sink_of(graph: FlowGraph, sink: Optional[Vertex]) -> Vertex:
    if sink is not None:
        return sink
    if len(graph.collectors) != 1:
        raise CutPreconditionError("name the sink: the graph has %d collectors" % len(graph.collectors))
    return graph.collectors[0]


def evaluate_cut(graph: FlowGraph, X: Iterable[Vertex], sink: Optional[Vertex] = None) -> CutResult:
    X = frozenset(X)
    sink = _sink_of(graph, sink)
    unknown = [v.label for v in X if v not in graph]
    if unknown:
        raise CutPreconditionError(f"vertices not in graph: {sorted(unknown)}")
    if SOURCE not in X:
        raise CutPreconditionError("the source must be on the source side of the cut")
    if sink in X:
        raise CutPreconditionError(f"the sink {sink.label} must not be in X")

    crossing = tuple(e for e in graph.edges if e.tail in X and e.head not in X)
    counts = {"alpha": 0, "beta": 0, "unit": 0, "inf": 0}
    for e in crossing:
        counts[e.term] += 1 if e.term != "unit" else e.capacity
    expression = CutExpression(counts["alpha"], counts["beta"], counts["unit"], counts["inf"])
    return CutResult(X, crossing, expression, expression.evaluate(graph.params))


def cut_value(graph: FlowGraph, X: Iterable[Vertex], sink: Optional[Vertex] = None) -> Capacity:
    return evaluate_cut(graph, X, sink).value


def cut_expression(graph: FlowGraph, X: Iterable[Vertex], sink: Optional[Vertex] = None) -> CutExpression:
    return evaluate_cut(graph, X, sink).expression


def complement(graph: FlowGraph, Xbar: Iterable[Vertex]) -> frozenset:
    Xbar = set(Xbar)
    return frozenset(v for v in graph.vertices if v not in Xbar)


# ---------------------------------------------------------------- max-flow


def max_flow(graph: FlowGraph, source: Vertex = SOURCE, sink: Optional[Vertex] = None) -> Capacity:
    """Exact integer max-flow; a flow reaching the infinity sentinel is reported as INF."""
    sink = _sink_of(graph, sink)
    if source == sink:
        raise CutPreconditionError("source and sink must differ")
    if source not in graph or sink not in graph:
        raise CutPreconditionError("source and sink must be graph vertices")
    big = graph.sentinel
    value = nx.maximum_flow_value(graph.to_networkx(big), source, sink, flow_func=edmonds_karp)
    return INF if value >= big else int(value)


def exhaustive_min_cut(graph: FlowGraph, source: Vertex = SOURCE, sink: Optional[Vertex] = None) -> Capacity:
    """Minimum cut by trying every vertex subset; only for graphs of at most MAX_CUT_VERTICES vertices."""
    sink = _sink_of(graph, sink)
    if len(graph.vertices) > MAX_CUT_VERTICES:
        raise CapExceededError("exhaustive cut enumeration (vertices)", len(graph.vertices), MAX_CUT_VERTICES)
    free = [v for v in graph.vertices if v not in (source, sink)]
    pos = {v: i for i, v in enumerate(free)}
    big = graph.sentinel
    # bit position of each endpoint; source is always inside, sink never
    arcs = []
    for e in graph.edges:
        cap = big if e.capacity is INF else e.capacity
        arcs.append((pos.get(e.tail, -1 if e.tail == source else -2), pos.get(e.head, -1 if e.head == source else -2), cap))

    def inside(p: int, mask: int) -> bool:
        return p == -1 or (p >= 0 and (mask >> p) & 1 == 1)

    best = None
    for mask in range(1 << len(free)):
        total = sum(cap for t, h, cap in arcs if inside(t, mask) and not inside(h, mask))
        if best is None or total < best:
            best = total
    return INF if best >= big else best


def collector_max_flow(graph: FlowGraph, instance: Instance, s: int, members: Iterable[int]) -> Capacity:
    members = tuple(sorted(members))
    with_dc = add_collector(graph, instance, s, members)
    return max_flow(with_dc, SOURCE, collector_vertex(s, members))


def _collector_arcs(graph: FlowGraph, s: int, members: Tuple[int, ...], big: int) -> List[Tuple[Vertex, int]]:
    if graph.kind == "original":
        return [(out_vertex(i), big) for i in members]
    return [(out_vertex(i, s), graph.params.alpha) for i in members]


def round_capacity(graph: FlowGraph, instance: Instance, s: int) -> Tuple[int, Tuple[int, ...]]:
    """Weakest collector after round ``s``: (max-flow, members), first in lexicographic order."""
    check_round(instance, s)
    big = graph.sentinel + instance.params.k * instance.params.alpha
    G = graph.to_networkx(big)
    best: Optional[Tuple[int, Tuple[int, ...]]] = None
    for members in enumerate_collectors(instance, s):
        dc = collector_vertex(s, members)
        G.add_edges_from((tail, dc, {"capacity": cap}) for tail, cap in _collector_arcs(graph, s, members, big))
        value = int(nx.maximum_flow_value(G, SOURCE, dc, flow_func=edmonds_karp))
        G.remove_node(dc)
        if best is None or value < best[0]:
            best = (value, members)
    assert best is not None
    return best


@dataclass(frozen=True)
class WeakestCollector:
    value: int
    round: int
    members: Tuple[int, ...]


def weakest_collector(instance: Instance, *, check: bool = True) -> WeakestCollector:
    graph = build_graph(instance, check=check)
    best: Optional[WeakestCollector] = None
    for s in range(instance.T + 1):
        value, members = round_capacity(graph, instance, s)
        if best is None or value < best.value:
            best = WeakestCollector(value, s, members)
    assert best is not None
    logger.debug("weakest collector %s", best)
    return best


def instance_capacity(instance: Instance, *, check: bool = True) -> int:
    """Minimum max-flow over every collector after every round 0..T."""
    return weakest_collector(instance, check=check).value


# ---------------------------------------------------------- refined graph


def build_refined_graph(
    instance: Instance, collectors: Iterable[Tuple[int, Iterable[int]]] = (), *, check: bool = True
) -> FlowGraph:
    """
    Stage-stamped graph with unit parallel edges.

    Stage -1 holds the source edges, stage 0 the initial storage edges, and
    stage s the survivors' forward edges, helper edges and the newcomers'
    broadcast and storage edges of round s.
    """
    _checked(instance, check)
    params = instance.params
    alpha, beta = params.alpha, params.beta
    vertices: List[Vertex] = [SOURCE]
    edges: List[CapEdge] = []

    def units(tail: Vertex, head: Vertex, count: int, stage: int) -> None:
        edges.extend(CapEdge(tail, head, 1, "unit", stage, j) for j in range(count))

    for i in range(1, params.n + 1):
        vertices.append(in_vertex(i))
        units(SOURCE, in_vertex(i), alpha, -1)
    for i in range(1, params.n + 1):
        vertices.append(out_vertex(i, 0))
        units(in_vertex(i), out_vertex(i, 0), alpha, 0)

    active = set(range(1, params.n + 1))
    for rnd in instance.rounds:
        s = rnd.index
        survivors = sorted(active - rnd.failed)
        for i in survivors:
            vertices.append(out_vertex(i, s))
            units(out_vertex(i, s - 1), out_vertex(i, s), alpha, s)
        for h in sorted(rnd.helpers):
            vertices.append(aux_vertex(h, s))
            units(out_vertex(h, s - 1), aux_vertex(h, s), beta, s)
        for t in rnd.newcomers:
            vertices.extend((in_vertex(t), out_vertex(t, s)))
            for h in sorted(rnd.helpers):
                units(aux_vertex(h, s), in_vertex(t), beta, s)
            units(in_vertex(t), out_vertex(t, s), alpha, s)
        active = set(survivors) | set(rnd.newcomers)

    graph = FlowGraph("refined", params, tuple(vertices), tuple(edges))
    for s, members in collectors:
        graph = add_collector(graph, instance, s, members)
    return graph


def stage_edges(graph: FlowGraph, s: int) -> List[int]:
    """
    Edge ids of E_s in a refined graph.

    Stage -1 is the source edges. Stage s >= 0 is the edges entering the
    stage-s out-vertices plus the helper edges entering stage-s auxiliary
    vertices; broadcast copies into newcomer in-vertices are not included.
    """
    if graph.kind != "refined":
        raise CutPreconditionError("stage edges exist only in refined graphs")
    picked = []
    for idx, e in enumerate(graph.edges):
        if e.stage != s or e.head.role == "collector":
            continue
        if s == -1 or e.head.role in ("out", "aux"):
            picked.append(idx)
    return picked


# ------------------------------------------------------------------ export


def export_edge_list(graph: FlowGraph) -> str:
    lines = [f"{e.tail.label} {e.head.label} {e.capacity}" for e in graph.edges]
    return "\n".join(lines) + ("\n" if lines else "")


def vertex_table(graph: FlowGraph) -> List[Dict[str, object]]:
    return [dict(v.to_json(), id=i) for i, v in enumerate(graph.vertices)]


def write_graph(graph: FlowGraph, directory: str | Path, stem: str = "graph") -> Tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges_path = directory / f"{stem}.edges"
    table_path = directory / f"{stem}.vertices.json"
    edges_path.write_text(export_edge_list(graph), encoding="utf-8")
    with open(table_path, "w", encoding="utf-8") as f:
        json.dump({"kind": graph.kind, "vertices": vertex_table(graph)}, f, indent=2, sort_keys=True)
        f.write("\n")
    return edges_path, table_path
