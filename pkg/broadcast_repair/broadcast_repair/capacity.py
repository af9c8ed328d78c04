from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from .errors import CapExceededError, DivisibilityError, InvalidParameters, TrivialCaseError
from .flowgraph import build_graph, collector_max_flow, round_capacity
from .model import (
    DEFAULT_INSTANCE_CAP,
    Instance,
    SystemParams,
    Violation,
    active_nodes_after,
    instance_count,
    newcomer_ids,
    round_choices,
    validate_params,
)

logger = logging.getLogger(__name__)

MAX_SEARCH_K = 10


@dataclass(frozen=True)
class BoundSolution:
    """A minimiser of the bound-B objective: value, x = (x0..xk) and the rounds in T1."""

    value: int
    x: Tuple[int, ...]
    T1: FrozenSet[int]

    @property
    def k(self) -> int:
        return len(self.x) - 1

    @property
    def T2(self) -> FrozenSet[int]:
        return frozenset(range(1, self.k + 1)) - self.T1

    def symbolic(self, d: int) -> Tuple[int, int]:
        """Coefficients (a, b) with value = a*alpha + b*beta."""
        a = self.x[0] + sum(self.x[s] for s in self.T1)
        b = sum(d - sum(self.x[:s]) for s in self.T2)
        return a, b

    def to_json(self) -> Dict[str, Any]:
        return {"B": self.value, "x": list(self.x), "T1": sorted(self.T1)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "BoundSolution":
        return cls(int(data["B"]), tuple(int(v) for v in data["x"]), frozenset(int(s) for s in data["T1"]))


def _check_search(params: SystemParams) -> None:
    validate_params(params, require_storage=False)
    if params.r >= params.k:
        raise TrivialCaseError(
            f"r={params.r} >= k={params.k}: the helpers must send the whole file, tau = C/r"
        )
    if params.k > MAX_SEARCH_K:
        raise CapExceededError("bound search (k)", params.k, MAX_SEARCH_K)


def _check_divides(params: SystemParams) -> int:
    if params.k % params.r:
        raise DivisibilityError(f"r={params.r} does not divide k={params.k}")
    return params.k // params.r


def objective(params: SystemParams, x: Sequence[int], T1: Iterable[int]) -> int:
    """The bound-B objective at one point; rejects x or T1 outside the feasible set."""
    x = tuple(x)
    T1 = frozenset(T1)
    found: List[Violation] = []
    if len(x) != params.k + 1:
        found.append(Violation("x has k+1 components", f"len={len(x)}"))
    elif not 0 <= x[0] <= params.n:
        found.append(Violation("0 <= x0 <= n", f"x0={x[0]}"))
    elif any(not 0 <= v <= params.r for v in x[1:]):
        found.append(Violation("0 <= x_s <= r", f"x={list(x)}"))
    elif sum(x) != params.k:
        found.append(Violation("components of x sum to k", f"sum={sum(x)}"))
    if not T1 <= set(range(1, params.k + 1)):
        found.append(Violation("T1 is a subset of 1..k", f"T1={sorted(T1)}"))
    if found:
        raise InvalidParameters(found)
    return _value(params, x, T1)


def _value(params: SystemParams, x: Sequence[int], T1: FrozenSet[int], clamp: bool = False) -> int:
    total = x[0] * params.alpha
    prefix = x[0]
    for s in range(1, len(x)):
        if s in T1:
            total += x[s] * params.alpha
        else:
            remaining = params.d - prefix
            total += (max(0, remaining) if clamp else remaining) * params.beta
        prefix += x[s]
    return total


def _best_for(params: SystemParams, x: Sequence[int], clamp: bool = False) -> Tuple[int, int, int]:
    """(value, strict mask, tie mask): per round pick T1 only where it is strictly cheaper."""
    total = x[0] * params.alpha
    prefix = x[0]
    strict = tie = 0
    for s in range(1, len(x)):
        remaining = params.d - prefix
        if clamp:
            remaining = max(0, remaining)
        in_t1 = x[s] * params.alpha
        in_t2 = remaining * params.beta
        if in_t1 < in_t2:
            strict |= 1 << (s - 1)
        elif in_t1 == in_t2:
            tie |= 1 << (s - 1)
        total += min(in_t1, in_t2)
        prefix += x[s]
    return total, strict, tie


def _minimise(params: SystemParams, candidates: Iterator[Tuple[int, ...]], clamp: bool = False) -> BoundSolution:
    """Global minimum with ties broken by the smallest (T1 bitmask, x)."""
    scored = [(x, *_best_for(params, x, clamp)) for x in candidates]
    if not scored:
        raise InvalidParameters([Violation("no feasible x", str(params))])
    best = min(v for _, v, _, _ in scored)
    optimal = [(x, strict, tie) for x, v, strict, tie in scored if v == best]
    mask = min(strict for _, strict, _ in optimal)
    x = min(x for x, strict, tie in optimal if strict & ~mask == 0 and mask & ~(strict | tie) == 0)
    T1 = frozenset(s for s in range(1, params.k + 1) if mask >> (s - 1) & 1)
    return BoundSolution(best, x, T1)


def _compositions(params: SystemParams, total_min: int, total_max: int) -> Iterator[Tuple[int, ...]]:
    for tail in itertools.product(range(params.r + 1), repeat=params.k):
        rest = sum(tail)
        for x0 in range(max(0, total_min - rest), min(params.n, total_max - rest) + 1):
            yield (x0,) + tail


def bound_B(params: SystemParams) -> BoundSolution:
    """Exhaustive minimum of the bound-B objective over every T1 and feasible x."""
    _check_search(params)
    sol = _minimise(params, _compositions(params, params.k, params.k))
    logger.debug("bound B for %s: %s", params, sol)
    return sol


def bound_B_widened(params: SystemParams) -> BoundSolution:
    """
    Same search with sum(x) >= k instead of == k.

    Remaining helper counts are clamped at zero once the prefix exceeds d.
    """
    _check_search(params)
    top = params.n + params.k * params.r
    return _minimise(params, _compositions(params, params.k, top), clamp=True)


def bound_B_restricted(params: SystemParams) -> BoundSolution:
    """Search only x with components in {0, r}, exactly k/r of them equal to r."""
    _check_search(params)
    u = _check_divides(params)

    def candidates() -> Iterator[Tuple[int, ...]]:
        for positions in itertools.combinations(range(params.k + 1), u):
            x = [0] * (params.k + 1)
            for p in positions:
                x[p] = params.r
            if x[0] <= params.n:
                yield tuple(x)

    return _minimise(params, candidates())


def closed_form(params: SystemParams) -> int:
    validate_params(params, require_storage=False)
    if params.r >= params.k:
        raise TrivialCaseError(f"r={params.r} >= k={params.k}")
    u = _check_divides(params)
    r, d = params.r, params.d
    return sum(min(r * params.alpha, (d - (j - 1) * r) * params.beta) for j in range(1, u + 1))


# ------------------------------------------------------- adversarial instance


def _survivor_sets(params: SystemParams, sol: BoundSolution) -> List[Tuple[int, ...]]:
    """M_0..M_k: the chosen initial nodes, then the first x_s newcomers of each round."""
    sets = [tuple(range(1, sol.x[0] + 1))]
    for s in range(1, params.k + 1):
        sets.append(newcomer_ids(params, s)[: sol.x[s]])
    return sets


def adversarial_instance(params: SystemParams, sol: BoundSolution, T: Optional[int] = None) -> Instance:
    """
    Build the failure pattern whose designated collector meets the bound.

    Initial nodes outside M_0 form the pool and fail from the largest id down.
    Before round s+1 (s <= k) the r - x_s newcomers of round s outside M_s fail
    along with x_s pool nodes; after round k every newcomer fails in the next
    round. Helpers come from M_0, M_1, ... in order, then the smallest pool ids.
    """
    validate_params(params)
    T = params.T if T is None else T
    if T is None:
        T = params.k
    if T < params.k:
        raise InvalidParameters([Violation("T >= k for the adversarial instance", f"T={T}, k={params.k}")])
    if len(sol.x) != params.k + 1 or sum(sol.x) != params.k:
        raise InvalidParameters([Violation("solution matches k", f"x={list(sol.x)}")])

    survivors = _survivor_sets(params, sol)
    m0 = set(survivors[0])
    pool = [i for i in range(1, params.n + 1) if i not in m0]
    instance = Instance(params.with_rounds(0))

    for s in range(1, T + 1):
        if s == 1:
            from_pool, from_newcomers = params.r, ()
        else:
            prev = instance.rounds[-1].newcomers
            kept = set(survivors[s - 1]) if s - 1 <= params.k else set()
            from_newcomers = tuple(t for t in prev if t not in kept)
            from_pool = params.r - len(from_newcomers)
        if from_pool > len(pool):
            raise InvalidParameters([Violation("enough initial nodes for the failure pattern", f"round {s}")])
        failed_pool = pool[len(pool) - from_pool:] if from_pool else []
        pool = pool[: len(pool) - from_pool]
        failed = list(failed_pool) + list(from_newcomers)

        preferred = [i for group in survivors[: min(s, params.k + 1)] for i in sorted(group)]
        helpers = preferred[: params.d]
        helpers += pool[: params.d - len(helpers)]
        if len(helpers) < params.d:
            raise InvalidParameters([Violation("enough survivors to act as helpers", f"round {s}")])
        instance = instance.extend(failed, helpers)

    logger.debug("adversarial instance for x=%s: %s", list(sol.x), instance.to_json()["rounds"])
    return instance


def adversarial_collector(params: SystemParams, sol: BoundSolution) -> Tuple[int, Tuple[int, ...]]:
    """The designated collector: round k, reading M_0 through M_k."""
    members = tuple(sorted(i for group in _survivor_sets(params, sol) for i in group))
    return params.k, members


def adversarial_capacity(params: SystemParams, sol: BoundSolution, T: Optional[int] = None) -> int:
    instance = adversarial_instance(params, sol, T)
    s, members = adversarial_collector(params, sol)
    return collector_max_flow(build_graph(instance), instance, s, members)


# ------------------------------------------------------ exhaustive capacity


def round_minima(params: SystemParams, T_max: int, cap: int = DEFAULT_INSTANCE_CAP) -> List[int]:
    """
    Smallest collector max-flow after round s, over every instance, for s = 0..T_max.

    A collector after round s sees only rounds 1..s, so each length-s prefix
    is visited once.
    """
    validate_params(params)
    total = instance_count(params, T_max)
    if total > cap:
        raise CapExceededError("instance enumeration", total, cap)
    best_at: List[Optional[int]] = [None] * (T_max + 1)

    def visit(prefix: Instance) -> None:
        s = prefix.T
        value, _ = round_capacity(build_graph(prefix, check=False), prefix, s)
        if best_at[s] is None or value < best_at[s]:
            best_at[s] = value
        if s == T_max:
            return
        for failed, helpers in round_choices(params, sorted(active_nodes_after(prefix, s))):
            visit(prefix.extend(failed, helpers))

    visit(Instance(params.with_rounds(0)))
    logger.debug("round minima for %s up to T=%d: %s", params, T_max, best_at)
    return best_at


def capacity_sequence(params: SystemParams, T_max: int, cap: int = DEFAULT_INSTANCE_CAP) -> List[int]:
    """
    Exhaustive capacity for every T = 0..T_max.

    An instance of length T holds collectors after rounds 0..T, so its
    capacity is the running minimum of the round minima.
    """
    return running_minimum(round_minima(params, T_max, cap))


def running_minimum(minima: Sequence[int]) -> List[int]:
    sequence = list(itertools.accumulate(minima, min))
    logger.info("capacity sequence: %s", sequence)
    return sequence


def capacity_T(params: SystemParams, T: int, cap: int = DEFAULT_INSTANCE_CAP) -> int:
    return capacity_sequence(params, T, cap)[T]
