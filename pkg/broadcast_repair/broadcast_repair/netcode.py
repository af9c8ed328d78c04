"""
Functional-repair linear codes on the refined flow graph.

Every unit edge carries a global encoding kernel, an omega-dimensional vector
over GF(q). A node's stored symbols after stage s are the kernels on the
edges entering its stage-s out-vertex, and a collector decodes iff those
kernels span GF(q)^omega.

Two ways of filling in a repair round are provided: random linear network
coding (rlnc_round) and the deterministic generic code search
(generic_round), which keeps every path-independent omega-subset of a stage
linearly independent.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field as dc_field, replace
from math import comb
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import galois
import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp

from .errors import (
    CapExceededError,
    FieldTooSmallError,
    GenericCodeError,
    InvalidInstance,
    InvalidParameters,
    RoundOutOfRange,
)
from .fields import FieldSpec, galois_field, rank, stack_rows
from .flowgraph import SOURCE, FlowGraph, Vertex, aux_vertex, build_refined_graph, in_vertex, out_vertex, stage_edges
from .model import Instance, RepairRound, Violation, active_nodes_after, enumerate_collectors

logger = logging.getLogger(__name__)

PRNG_NAME = "numpy.random.PCG64"
DEFAULT_SUBSET_CAP = 200_000
DEFAULT_SEARCH_BUDGET = 50_000
DEFAULT_SCAN_BUDGET = 4096
RANDOM_RETRIES = 64

Mode = Literal["generic", "rlnc"]
SearchMode = Literal["deterministic", "randomized"]
Seed = Union[int, np.random.Generator, None]


def required_field_order(instance_or_params: Any, omega: int) -> int:
    """C(n*alpha + d*beta, omega - 1): a generic code exists for any q above this."""
    params = getattr(instance_or_params, "params", instance_or_params)
    return comb(params.n * params.alpha + params.d * params.beta, omega - 1)


@dataclass(frozen=True, eq=False)
class CodeState:
    field: FieldSpec
    omega: int
    instance: Instance
    graph: FlowGraph
    stage: int
    kernels: Dict[int, galois.FieldArray]
    into: Dict[Vertex, Tuple[int, ...]]
    modes: Dict[int, SearchMode] = dc_field(default_factory=dict)
    guaranteed: bool = True

    @property
    def GF(self) -> type[galois.FieldArray]:
        return galois_field(self.field)

    def matrix(self, edge_ids: Sequence[int]) -> galois.FieldArray:
        return stack_rows(self.GF, (self.kernels[e] for e in edge_ids), self.omega)

    def incoming(self, vertex: Vertex) -> galois.FieldArray:
        return self.matrix(self.into.get(vertex, ()))

    def stored(self, node: int, s: int) -> galois.FieldArray:
        """The alpha kernels node ``node`` holds after stage ``s``."""
        return self.incoming(out_vertex(node, s))


def _rng(seed: Seed) -> Optional[np.random.Generator]:
    if seed is None or isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _random(GF: type[galois.FieldArray], shape: Tuple[int, int], rng: np.random.Generator) -> galois.FieldArray:
    if 0 in shape:
        return GF.Zeros(shape)
    return GF.Random(shape, seed=rng)


def _combine(GF: type[galois.FieldArray], coeffs: galois.FieldArray, basis: galois.FieldArray, omega: int) -> galois.FieldArray:
    if coeffs.shape[1] == 0:
        return GF.Zeros((coeffs.shape[0], omega))
    return coeffs @ basis


def mds_kernels(GF: type[galois.FieldArray], count: int, omega: int) -> galois.FieldArray:
    """Rows (1, a, a^2, ..., a^(omega-1)) at the distinct points a = 0..count-1."""
    points = GF(np.arange(count))
    rows = GF.Ones((count, omega))
    for c in range(1, omega):
        rows[:, c] = rows[:, c - 1] * points
    return rows


def init_source(
    instance: Instance,
    omega: int,
    field_spec: FieldSpec,
    *,
    mode: Mode = "generic",
    allow_small_field: bool = False,
) -> CodeState:
    """
    Stage -1 and 0 of a code: an MDS assignment on the source edges, copied to
    the initial nodes.
    """
    params = instance.params
    if not 1 <= omega <= params.k * params.alpha:
        raise InvalidParameters([Violation("1 <= omega <= k*alpha", f"omega={omega}, k*alpha={params.k * params.alpha}")])
    q = field_spec.order
    if q < params.n * params.alpha:
        raise FieldTooSmallError(f"{field_spec.label} has fewer than n*alpha={params.n * params.alpha} elements")
    guaranteed = True
    if mode == "generic":
        bound = required_field_order(params, omega)
        if q <= bound:
            if not allow_small_field:
                raise FieldTooSmallError(
                    f"{field_spec.label} does not exceed C(n*alpha + d*beta, omega - 1) = {bound}"
                )
            logger.warning("field %s is below the generic bound %d; results are not guaranteed", field_spec.label, bound)
            guaranteed = False

    graph = build_refined_graph(instance)
    into: Dict[Vertex, List[int]] = {}
    for idx, e in enumerate(graph.edges):
        into.setdefault(e.head, []).append(idx)

    GF = galois_field(field_spec)
    source_edges = stage_edges(graph, -1)
    rows = mds_kernels(GF, len(source_edges), omega)
    kernels: Dict[int, galois.FieldArray] = {e: rows[j] for j, e in enumerate(source_edges)}
    for i in range(1, params.n + 1):
        for src, dst in zip(into[in_vertex(i)], into[out_vertex(i, 0)]):
            kernels[dst] = kernels[src]

    return CodeState(
        field=field_spec,
        omega=omega,
        instance=instance,
        graph=graph,
        stage=0,
        kernels=kernels,
        into={v: tuple(ids) for v, ids in into.items()},
        guaranteed=guaranteed,
    )


def _next_round(state: CodeState, rnd: RepairRound) -> None:
    if rnd.index != state.stage + 1:
        raise RoundOutOfRange(f"state is at stage {state.stage}, cannot apply round {rnd.index}")


def _carry_forward(state: CodeState, rnd: RepairRound, kernels: Dict[int, galois.FieldArray]) -> List[int]:
    """Copy each survivor's kernels onto its forward edges; returns the forward edge ids."""
    s = rnd.index
    active = active_nodes_after(state.instance, s - 1)
    forward: List[int] = []
    for i in sorted(active - rnd.failed):
        dst = state.into[out_vertex(i, s)]
        for src, e in zip(state.into[out_vertex(i, s - 1)], dst):
            kernels[e] = state.kernels[src]
        forward.extend(dst)
    return forward


def _helper_edges(state: CodeState, h: int, s: int) -> Tuple[int, ...]:
    return state.into.get(aux_vertex(h, s), ())


def _broadcast(state: CodeState, rnd: RepairRound, kernels: Dict[int, galois.FieldArray]) -> None:
    """Every newcomer receives each helper's kernels unchanged."""
    s = rnd.index
    sent = [e for h in sorted(rnd.helpers) for e in _helper_edges(state, h, s)]
    for t in rnd.newcomers:
        for src, dst in zip(sent, state.into.get(in_vertex(t), ())):
            kernels[dst] = kernels[src]


def rlnc_round(state: CodeState, rnd: RepairRound, seed: Seed, *, store_received: bool = False) -> CodeState:
    """
    One repair round of random linear network coding.

    Helpers broadcast beta random combinations of what they store; each
    newcomer stores alpha random combinations of the d*beta kernels it hears.
    With ``store_received`` and alpha >= d*beta the newcomer keeps the
    received kernels verbatim and fills the remaining slots randomly.
    """
    _next_round(state, rnd)
    rng = _rng(seed)
    if rng is None:
        raise InvalidParameters([Violation("a seed is required for random linear network coding")])
    GF, omega, s = state.GF, state.omega, rnd.index
    params = state.instance.params
    kernels = dict(state.kernels)
    _carry_forward(state, rnd, kernels)

    for h in sorted(rnd.helpers):
        stored = state.stored(h, s - 1)
        out = _combine(GF, _random(GF, (params.beta, stored.shape[0]), rng), stored, omega)
        for j, e in enumerate(_helper_edges(state, h, s)):
            kernels[e] = out[j]
    _broadcast(state, rnd, kernels)

    for t in rnd.newcomers:
        received = stack_rows(GF, (kernels[e] for e in state.into.get(in_vertex(t), ())), omega)
        slots = state.into[out_vertex(t, s)]
        if store_received and params.alpha >= received.shape[0]:
            extra = _combine(GF, _random(GF, (params.alpha - received.shape[0], received.shape[0]), rng), received, omega)
            chosen = stack_rows(GF, [received, extra], omega)
        else:
            chosen = _combine(GF, _random(GF, (params.alpha, received.shape[0]), rng), received, omega)
        for j, e in enumerate(slots):
            kernels[e] = chosen[j]

    return replace(state, stage=s, kernels=kernels)


# ------------------------------------------------------------ generic code


class KernelSearch:
    """
    Picks kernels that stay outside the span of every relevant regular
    (omega-1)-subset of the stage's edge set.

    The span of a regular (omega-1)-subset is a hyperplane, so it is kept as
    its normal vector n: x lies in the span iff x.n == 0.

    The deterministic scan walks coefficient prefixes in a fixed order and
    scores every value of the last coefficient at once. After ``scan_budget``
    prefixes, or once the subset count passes ``budget``, the search samples
    seeded random kernels instead.
    """

    def __init__(
        self,
        GF: type[galois.FieldArray],
        omega: int,
        budget: int,
        rng: Optional[np.random.Generator],
        scan_budget: int = DEFAULT_SCAN_BUDGET,
    ):
        self.GF = GF
        self.omega = omega
        self.budget = budget
        self.scan_budget = scan_budget
        self.rng = rng
        self.members: List[galois.FieldArray] = []
        self.normals: List[galois.FieldArray] = []
        self.mode: SearchMode = "deterministic"

    def start(self, kernels: Sequence[galois.FieldArray]) -> None:
        for v in kernels:
            self.add(v)

    def _fall_back(self, reason: str) -> None:
        logger.info("%s; sampling kernels at random", reason)
        if self.rng is None:
            raise InvalidParameters([Violation("a seed is required once the kernel search falls back to sampling")])
        self.mode = "randomized"

    def add(self, kernel: galois.FieldArray) -> None:
        self.members.append(kernel)
        if self.mode == "randomized":
            return
        if comb(len(self.members), self.omega - 1) > self.budget:
            self._fall_back(f"subset count exceeds the search budget {self.budget}")
            self.normals = []
            return
        if self.omega == 1:
            if not self.normals:
                self.normals.append(self.GF([1]))
            return
        new = len(self.members) - 1
        for rest in itertools.combinations(range(new), self.omega - 2):
            zeta = stack_rows(self.GF, [self.members[i] for i in rest] + [kernel], self.omega)
            if rank(zeta) == self.omega - 1:
                self.normals.append(zeta.null_space()[0])

    def choose(self, space: galois.FieldArray) -> galois.FieldArray:
        """A vector of ``space``'s row span avoiding every hyperplane that does not contain the span."""
        GF, omega = self.GF, self.omega
        basis = space.row_reduce() if space.shape[0] else space
        basis = basis[np.any(np.asarray(basis) != 0, axis=1)] if basis.shape[0] else basis
        if basis.shape[0] == 0:
            return GF.Zeros(omega)

        if self.mode == "randomized":
            return self._sample(basis)
        if not self.normals:
            return basis[0]
        products = basis @ stack_rows(GF, self.normals, omega).T
        relevant = np.any(np.asarray(products) != 0, axis=0)
        if not relevant.any():
            return basis[0]
        products = products[:, relevant]
        coeffs = self._scan(products)
        if coeffs is not None:
            return coeffs @ basis
        self._fall_back(f"no kernel among the first {self.scan_budget} candidate prefixes")
        self.normals = []
        return self._sample(basis, products)

    def _scan(self, products: galois.FieldArray) -> Optional[galois.FieldArray]:
        GF = self.GF
        dim = products.shape[0]
        last = products[-1]
        has_last = np.asarray(last) != 0
        if dim == 1:
            return GF([1]) if has_last.all() else None
        neg_inv = -(GF(1) / last[has_last])
        for count, prefix in enumerate(projective_points(GF, dim - 1)):
            if count >= self.scan_budget:
                return None
            partial = prefix @ products[:-1]
            if np.any(np.asarray(partial)[~has_last] == 0):
                continue
            t = smallest_free(np.asarray(partial[has_last] * neg_inv), GF.order)
            if t is not None:
                return GF(np.append(np.asarray(prefix), t))
        return GF([0] * (dim - 1) + [1]) if has_last.all() else None

    def _sample(self, basis: galois.FieldArray, products: Optional[galois.FieldArray] = None) -> galois.FieldArray:
        for _ in range(RANDOM_RETRIES):
            coeffs = self.GF.Random(basis.shape[0], seed=self.rng)
            if products is not None and not np.all(np.asarray(coeffs @ products) != 0):
                continue
            x = coeffs @ basis
            if np.any(np.asarray(x) != 0):
                return x
        raise GenericCodeError(f"random kernel sampling failed {RANDOM_RETRIES} times in GF({self.GF.order})")


def smallest_free(taken: np.ndarray, q: int) -> Optional[int]:
    """Smallest value in 0..q-1 missing from ``taken``, or None."""
    taken = np.unique(taken)
    gaps = np.nonzero(taken != np.arange(taken.size))[0]
    t = int(gaps[0]) if gaps.size else int(taken.size)
    return t if t < q else None


def projective_points(GF: type[galois.FieldArray], dim: int) -> Iterator[galois.FieldArray]:
    """Coefficient vectors with leading nonzero entry 1, in a fixed order."""
    q = GF.order
    for lead in range(dim):
        for tail in itertools.product(range(q), repeat=dim - lead - 1):
            yield GF([0] * lead + [1] + list(tail))


def generic_round(
    state: CodeState,
    rnd: RepairRound,
    *,
    search_budget: int = DEFAULT_SEARCH_BUDGET,
    scan_budget: int = DEFAULT_SCAN_BUDGET,
    seed: Seed = None,
) -> CodeState:
    """
    One repair round of the generic code.

    Helper edges are assigned first, then broadcast copies, then the
    newcomers' storage edges; each assignment joins the search set.
    """
    _next_round(state, rnd)
    GF, omega, s = state.GF, state.omega, rnd.index
    kernels = dict(state.kernels)
    forward = _carry_forward(state, rnd, kernels)

    search = KernelSearch(GF, omega, search_budget, _rng(seed), scan_budget)
    search.start([kernels[e] for e in forward])

    for h in sorted(rnd.helpers):
        space = state.stored(h, s - 1)
        for e in _helper_edges(state, h, s):
            kernels[e] = search.choose(space)
            search.add(kernels[e])
    _broadcast(state, rnd, kernels)

    for t in rnd.newcomers:
        space = stack_rows(GF, (kernels[e] for e in state.into.get(in_vertex(t), ())), omega)
        for e in state.into[out_vertex(t, s)]:
            kernels[e] = search.choose(space)
            search.add(kernels[e])

    logger.debug("stage %d assigned with %s search", s, search.mode)
    return replace(state, stage=s, kernels=kernels, modes={**state.modes, s: search.mode})


# ------------------------------------------------------------ verification


def _check_stage(state: CodeState, s: int) -> None:
    if not -1 <= s <= state.stage:
        raise RoundOutOfRange(f"stage {s} outside -1..{state.stage}")


def check_decodable(state: CodeState, s: int, members: Sequence[int]) -> bool:
    """True iff the k*alpha kernels stored by ``members`` after stage ``s`` have rank omega."""
    _check_stage(state, s)
    if s < 0:
        raise RoundOutOfRange("collectors read stages 0 and later")
    active = active_nodes_after(state.instance, s)
    if not set(members) <= active:
        raise InvalidInstance([f"nodes {sorted(set(members) - active)} are not active after stage {s}"])
    stacked = stack_rows(state.GF, [state.stored(i, s) for i in sorted(members)], state.omega)
    return rank(stacked) == state.omega


def decode_matrix(state: CodeState) -> Dict[int, Dict[Tuple[int, ...], bool]]:
    """stage -> collector -> decodable, for stages 0..state.stage."""
    return {
        s: {members: check_decodable(state, s, members) for members in enumerate_collectors(state.instance, s)}
        for s in range(state.stage + 1)
    }


def kernel_violations(state: CodeState) -> List[int]:
    """Edges whose kernel leaves the span of their tail's incoming kernels."""
    bad = []
    identity = state.GF.Identity(state.omega)
    for e, kernel in state.kernels.items():
        tail = state.graph.edges[e].tail
        basis = identity if tail == SOURCE else state.incoming(tail)
        if rank(stack_rows(state.GF, [basis, kernel], state.omega)) != rank(basis):
            bad.append(e)
    return bad


@dataclass(frozen=True)
class GenericReport:
    stage: int
    subsets: int
    path_independent: int
    irregular: Tuple[Tuple[int, ...], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.irregular

    def to_json(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "subsets": self.subsets,
            "path_independent": self.path_independent,
            "irregular": [list(p) for p in self.irregular],
        }


def _path_network(state: CodeState, s: int) -> nx.DiGraph:
    """Edges up to stage s aggregated by (tail, head), fed by omega imaginary edges."""
    G = nx.DiGraph()
    for e in state.graph.edges:
        if e.head.role == "collector" or e.stage is None or e.stage > s:
            continue
        if G.has_edge(e.tail, e.head):
            G[e.tail][e.head]["capacity"] += 1
        else:
            G.add_edge(e.tail, e.head, capacity=1)
    G.add_edge("imaginary", SOURCE, capacity=state.omega)
    return G


def is_path_independent(state: CodeState, network: nx.DiGraph, subset: Sequence[int]) -> bool:
    """Edge-disjoint paths from the imaginary edges end in every edge of ``subset``."""
    G = network.copy()
    for e in subset:
        edge = state.graph.edges[e]
        G[edge.tail][edge.head]["capacity"] -= 1
        G.add_edge(edge.tail, ("pick", e), capacity=1)
        G.add_edge(("pick", e), "sink", capacity=1)
    value = nx.maximum_flow_value(G, "imaginary", "sink", flow_func=edmonds_karp)
    return value == len(subset)


def generic_property_report(state: CodeState, s: int, cap: int = DEFAULT_SUBSET_CAP) -> GenericReport:
    """Check every omega-subset of the stage's edge set: path-independent subsets must be regular."""
    _check_stage(state, s)
    edges = stage_edges(state.graph, s)
    total = comb(len(edges), state.omega)
    if total > cap:
        raise CapExceededError(f"omega-subsets of stage {s}", total, cap)
    network = _path_network(state, s)
    independent = 0
    irregular: List[Tuple[int, ...]] = []
    for subset in itertools.combinations(edges, state.omega):
        if not is_path_independent(state, network, subset):
            continue
        independent += 1
        if rank(state.matrix(subset)) < state.omega:
            irregular.append(subset)
    if irregular:
        logger.warning("stage %d: %d path-independent subsets are not regular", s, len(irregular))
    return GenericReport(s, total, independent, tuple(irregular))


def check_generic_property(state: CodeState, s: int, cap: int = DEFAULT_SUBSET_CAP) -> bool:
    return generic_property_report(state, s, cap).ok


# -------------------------------------------------------------- simulation


@dataclass(frozen=True, eq=False)
class SimulationResult:
    state: CodeState
    history: Tuple[CodeState, ...]
    decode: Dict[int, Dict[Tuple[int, ...], bool]]
    mode: Mode
    seed: Optional[int]

    @property
    def all_decodable(self) -> bool:
        return all(all(row.values()) for row in self.decode.values())

    @property
    def failures(self) -> List[Tuple[int, Tuple[int, ...]]]:
        return [(s, members) for s, row in self.decode.items() for members, ok in row.items() if not ok]

    def metadata(self) -> Dict[str, Any]:
        meta: Dict[str, Any] = {
            "mode": self.mode,
            "omega": self.state.omega,
            "field": self.state.field.metadata(),
            "guaranteed": self.state.guaranteed,
            "search": {str(s): m for s, m in sorted(self.state.modes.items())},
        }
        if self.seed is not None:
            meta["prng"] = PRNG_NAME
            meta["seed"] = self.seed
        return meta


def simulate(
    instance: Instance,
    omega: int,
    field_spec: FieldSpec,
    mode: Mode = "generic",
    seed: Optional[int] = None,
    *,
    store_received: bool = False,
    allow_small_field: bool = False,
    search_budget: int = DEFAULT_SEARCH_BUDGET,
    scan_budget: int = DEFAULT_SCAN_BUDGET,
) -> SimulationResult:
    """Run every round of ``instance`` and record which collectors decode at each stage."""
    if mode == "rlnc" and seed is None:
        raise InvalidParameters([Violation("a seed is required for random linear network coding")])
    state = init_source(instance, omega, field_spec, mode=mode, allow_small_field=allow_small_field)
    rng = _rng(seed)
    history = [state]
    for rnd in instance.rounds:
        if mode == "rlnc":
            state = rlnc_round(state, rnd, rng, store_received=store_received)
        else:
            state = generic_round(state, rnd, search_budget=search_budget, scan_budget=scan_budget, seed=rng)
        history.append(state)
    result = SimulationResult(state, tuple(history), decode_matrix(state), mode, seed)
    logger.info("%s simulation over %d rounds: %d undecodable collectors", mode, instance.T, len(result.failures))
    return result


@dataclass(frozen=True)
class TrialSummary:
    trials: int
    successes: int
    failing_seeds: Tuple[int, ...]

    def to_json(self) -> Dict[str, Any]:
        return {"trials": self.trials, "successes": self.successes, "failing_seeds": list(self.failing_seeds)}


def rlnc_trials(
    instance: Instance, omega: int, field_spec: FieldSpec, trials: int, base_seed: int, *, store_received: bool = False
) -> TrialSummary:
    """Seeded RLNC runs; a trial succeeds when every collector at every stage decodes."""
    failing: List[int] = []
    for i in range(trials):
        seed = base_seed + i
        result = simulate(instance, omega, field_spec, "rlnc", seed, store_received=store_received)
        if not result.all_decodable:
            logger.warning("rlnc trial with seed %d failed at %s", seed, result.failures[:3])
            failing.append(seed)
    return TrialSummary(trials, trials - len(failing), tuple(failing))


# ------------------------------------------------------------------ traces


@dataclass(frozen=True)
class StageRecord:
    stage: int
    nodes: Dict[int, List[List[int]]]
    search: Optional[str] = None

    def to_json(self) -> Dict[str, Any]:
        return {"stage": self.stage, "search": self.search, "nodes": {str(i): rows for i, rows in sorted(self.nodes.items())}}


def stage_records(result: SimulationResult) -> List[StageRecord]:
    state = result.state
    records = []
    for s in range(state.stage + 1):
        nodes = {
            i: [[int(v) for v in row] for row in np.asarray(state.stored(i, s))]
            for i in sorted(active_nodes_after(state.instance, s))
        }
        records.append(StageRecord(s, nodes, state.modes.get(s)))
    return records


def write_trace(result: SimulationResult, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for record in stage_records(result):
            f.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    return path


def read_trace(path: str | Path) -> List[StageRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            nodes = {int(i): rows for i, rows in data["nodes"].items()}
            records.append(StageRecord(int(data["stage"]), nodes, data.get("search")))
    return records


def decode_matrix_json(decode: Dict[int, Dict[Tuple[int, ...], bool]]) -> Dict[str, Any]:
    return {
        "stages": [
            {"stage": s, "collectors": [{"members": list(m), "decodable": ok} for m, ok in row.items()]}
            for s, row in sorted(decode.items())
        ]
    }
