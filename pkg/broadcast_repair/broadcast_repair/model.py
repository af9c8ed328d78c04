from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import CapExceededError, InvalidInstance, InvalidParameters, RoundOutOfRange

logger = logging.getLogger(__name__)

DEFAULT_INSTANCE_CAP = 10**6


class SystemParams(BaseModel):
    """The (n, k, d, r, alpha, beta, T) tuple of a storage system under broadcast repair."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Number of storage nodes")
    k: int = Field(..., ge=1, description="Nodes a data collector connects to")
    d: int = Field(..., ge=1, description="Helpers per repair round")
    r: int = Field(..., ge=1, description="Newcomers per repair round")
    alpha: int = Field(..., ge=0, description="Packets stored per node")
    beta: int = Field(..., ge=0, description="Packets broadcast by each helper")
    T: Optional[int] = Field(None, ge=0, description="Repair rounds; None means unbounded")

    def with_rounds(self, T: Optional[int]) -> "SystemParams":
        return self.model_copy(update={"T": T})

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "k": self.k, "d": self.d, "r": self.r, "alpha": self.alpha, "beta": self.beta, "T": self.T}


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str = ""
    round: Optional[int] = None

    def __str__(self) -> str:
        where = "params" if self.round is None else f"round {self.round}"
        return f"{where}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise InvalidInstance(self.violations)


def param_violations(params: SystemParams, *, require_storage: bool = True) -> List[Violation]:
    """
    Check the system-model rules on the parameters alone.

    ``require_storage=False`` admits alpha = 0, which the capacity oracles use as
    a degenerate boundary value.
    """
    found: List[Violation] = []
    if params.n - params.r < params.d:
        found.append(Violation("n - r >= d", f"n={params.n}, r={params.r}, d={params.d}"))
    if params.d < params.k:
        found.append(Violation("d >= k", f"d={params.d}, k={params.k}"))
    if params.k > params.n:
        found.append(Violation("k <= n", f"k={params.k}, n={params.n}"))
    if require_storage and params.alpha < 1:
        found.append(Violation("alpha >= 1", f"alpha={params.alpha}"))
    return found


def validate_params(params: SystemParams, *, require_storage: bool = True) -> None:
    found = param_violations(params, require_storage=require_storage)
    if found:
        raise InvalidParameters(found)


def newcomer_ids(params: SystemParams, s: int) -> Tuple[int, ...]:
    """Ids of the newcomers joining in round ``s`` (s >= 1)."""
    start = params.n + (s - 1) * params.r + 1
    return tuple(range(start, start + params.r))


@dataclass(frozen=True)
class RepairRound:
    index: int
    failed: frozenset
    helpers: frozenset
    newcomers: Tuple[int, ...]

    @classmethod
    def make(cls, params: SystemParams, index: int, failed: Sequence[int], helpers: Sequence[int]) -> "RepairRound":
        return cls(index, frozenset(failed), frozenset(helpers), newcomer_ids(params, index))

    def to_json(self) -> Dict[str, Any]:
        return {"failed": sorted(self.failed), "helpers": sorted(self.helpers)}


@dataclass(frozen=True)
class Instance:
    params: SystemParams
    rounds: Tuple[RepairRound, ...] = field(default=())

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def node_count(self) -> int:
        return self.params.n + self.T * self.params.r

    def prefix(self, s: int) -> "Instance":
        check_round(self, s)
        return Instance(self.params.with_rounds(s), self.rounds[:s])

    def extend(self, failed: Sequence[int], helpers: Sequence[int]) -> "Instance":
        new_round = RepairRound.make(self.params, self.T + 1, failed, helpers)
        return Instance(self.params.with_rounds(self.T + 1), self.rounds + (new_round,))

    def to_json(self) -> Dict[str, Any]:
        params = self.params.to_json()
        params["T"] = self.T
        return {"params": params, "rounds": [rnd.to_json() for rnd in self.rounds]}


def make_instance(params: SystemParams, rounds: Sequence[Tuple[Sequence[int], Sequence[int]]]) -> Instance:
    """Build an instance from (failed, helpers) pairs; newcomer ids follow the round index."""
    built = tuple(RepairRound.make(params, s, failed, helpers) for s, (failed, helpers) in enumerate(rounds, start=1))
    return Instance(params.with_rounds(len(built)), built)


def validate(instance: Instance) -> ValidationReport:
    """Check the instance round by round against the evolving active set."""
    params = instance.params
    found: List[Violation] = list(param_violations(params))
    if params.T is not None and params.T != instance.T:
        found.append(Violation("round count equals T", f"T={params.T}, rounds={instance.T}"))

    active = set(range(1, params.n + 1))
    for s, rnd in enumerate(instance.rounds, start=1):
        if rnd.index != s:
            found.append(Violation("rounds are numbered consecutively from 1", f"got {rnd.index}", s))
        if len(rnd.failed) != params.r:
            found.append(Violation("exactly r failures per round", f"{len(rnd.failed)} failed", s))
        if not rnd.failed <= active:
            found.append(Violation("failed nodes must be active", f"{sorted(rnd.failed - active)}", s))
        if len(rnd.helpers) != params.d:
            found.append(Violation("exactly d helpers per round", f"{len(rnd.helpers)} helpers", s))
        survivors = active - rnd.failed
        if not rnd.helpers <= survivors:
            found.append(Violation("helpers must be active survivors", f"{sorted(rnd.helpers - survivors)}", s))
        if rnd.newcomers != newcomer_ids(params, s):
            found.append(Violation("newcomer ids follow the round indexing", f"{list(rnd.newcomers)}", s))
        active = survivors | set(rnd.newcomers)
    return ValidationReport(tuple(found))


def check_round(instance: Instance, s: int) -> None:
    if not 0 <= s <= instance.T:
        raise RoundOutOfRange(f"round {s} outside 0..{instance.T}")


def active_nodes_after(instance: Instance, s: int) -> frozenset:
    check_round(instance, s)
    active = set(range(1, instance.params.n + 1))
    for rnd in instance.rounds[:s]:
        active -= rnd.failed
        active |= set(rnd.newcomers)
    return frozenset(active)


def enumerate_collectors(instance: Instance, s: int) -> Iterator[Tuple[int, ...]]:
    """All k-subsets of the nodes active after round ``s``, in lexicographic order."""
    active = sorted(active_nodes_after(instance, s))
    return itertools.combinations(active, instance.params.k)


def choices_per_round(params: SystemParams) -> int:
    return comb(params.n, params.r) * comb(params.n - params.r, params.d)


def instance_count(params: SystemParams, T: int) -> int:
    return choices_per_round(params) ** T


def round_choices(params: SystemParams, active: Sequence[int]) -> Iterator[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Every (failed, helpers) choice over an active set, failures first, both lexicographic."""
    ordered = sorted(active)
    for failed in itertools.combinations(ordered, params.r):
        gone = set(failed)
        survivors = [i for i in ordered if i not in gone]
        for helpers in itertools.combinations(survivors, params.d):
            yield failed, helpers


def enumerate_instances(params: SystemParams, cap: int = DEFAULT_INSTANCE_CAP) -> Iterator[Instance]:
    """
    Yield every instance with ``params.T`` rounds in a deterministic order.

    Raises CapExceededError up front when the count exceeds ``cap``; the stream
    is never silently truncated.
    """
    if params.T is None:
        raise InvalidParameters([Violation("T must be finite for enumeration")])
    total = instance_count(params, params.T)
    if total > cap:
        raise CapExceededError("instance enumeration", total, cap)
    logger.debug("enumerating %d instances for %s", total, params)
    return _extend_all(Instance(params.with_rounds(0)), params.T)


def _extend_all(prefix: Instance, T: int) -> Iterator[Instance]:
    if prefix.T == T:
        yield Instance(prefix.params.with_rounds(T), prefix.rounds)
        return
    active = active_nodes_after(prefix, prefix.T)
    for failed, helpers in round_choices(prefix.params, active):
        yield from _extend_all(prefix.extend(failed, helpers), T)


def instance_from_json(data: Dict[str, Any]) -> Instance:
    try:
        params = SystemParams(**data["params"])
        pairs = [(rnd["failed"], rnd["helpers"]) for rnd in data.get("rounds", [])]
        built = tuple(RepairRound.make(params, s, failed, helpers) for s, (failed, helpers) in enumerate(pairs, start=1))
    except (KeyError, TypeError) as e:
        raise InvalidInstance([Violation("malformed instance document", str(e))])
    except ValidationError as e:
        raise InvalidInstance([Violation("invalid parameter", ".".join(map(str, err["loc"])) + ": " + err["msg"]) for err in e.errors()])
    return Instance(params, built)


def load_instance(path: str | Path) -> Instance:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInstance([Violation("instance file is not valid JSON", f"{path}: {e}")])
    return instance_from_json(data)


def dump_instance(instance: Instance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
