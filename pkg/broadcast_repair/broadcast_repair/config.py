from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import InvalidParameters
from .fields import FieldSpec
from .model import DEFAULT_INSTANCE_CAP, SystemParams, Violation
from .netcode import DEFAULT_SEARCH_BUDGET, DEFAULT_SUBSET_CAP

logger = logging.getLogger(__name__)

PARAM_KEYS = ("n", "k", "d", "r", "alpha", "beta", "T")

ALIASES = {
    "a": "alpha",
    "b": "beta",
    "q": "field",
    "w": "omega",
    "t": "T",
    "tmax": "t_max",
}

ENV_KEYS = {
    "instance_cap": "BROADCAST_REPAIR_INSTANCE_CAP",
    "subset_cap": "BROADCAST_REPAIR_SUBSET_CAP",
    "search_budget": "BROADCAST_REPAIR_SEARCH_BUDGET",
    "out": "BROADCAST_REPAIR_OUT",
}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: Optional[int] = Field(None, description="Number of storage nodes")
    k: Optional[int] = Field(None, description="Nodes a data collector reads")
    d: Optional[int] = Field(None, description="Helpers per repair round")
    r: Optional[int] = Field(None, description="Newcomers per repair round")
    alpha: Optional[int] = Field(None, description="Packets stored per node")
    beta: Optional[int] = Field(None, description="Packets each helper broadcasts")
    T: Optional[int] = Field(None, description="Repair rounds to simulate (defaults to k + 1)")

    seed: Optional[int] = Field(None, description="PRNG seed; mandatory for randomized runs")
    field: str = Field("47", description="Finite field, e.g. '47' or '2^8'")
    omega: Optional[int] = Field(None, description="File dimension; defaults to the capacity B")
    mode: Literal["generic", "rlnc"] = Field("generic", description="Coding scheme for simulate")
    store_received: bool = Field(False, description="RLNC newcomers keep received kernels when alpha >= d*beta")
    allow_small_field: bool = Field(False, description="Run generic mode below the guaranteed field size")
    check_generic: bool = Field(True, description="Check the generic property at every stage after simulate")
    trials: int = Field(0, ge=0, description="Extra seeded RLNC trials to summarise")
    t_max: Optional[int] = Field(None, ge=0, description="Largest T for verify (defaults to k + 1)")
    samples: int = Field(11, ge=2, description="Grid size for the tradeoff curve")
    adversarial_only: bool = Field(False, description="verify: skip enumeration, check the adversarial instance")
    instance: Optional[str] = Field(None, description="Path to a serialized instance")
    collector_round: Optional[int] = Field(None, ge=0, description="mincut: round after which the collector joins")
    collector: Optional[List[int]] = Field(None, description="mincut: node ids read by the collector")

    instance_cap: int = Field(DEFAULT_INSTANCE_CAP, ge=1)
    subset_cap: int = Field(DEFAULT_SUBSET_CAP, ge=1)
    search_budget: int = Field(DEFAULT_SEARCH_BUDGET, ge=1)
    out: str = Field("out", description="Output directory")

    def params(self) -> SystemParams:
        missing = [key for key in PARAM_KEYS if key != "T" and getattr(self, key) is None]
        if missing:
            raise InvalidParameters([Violation("parameter is required", key) for key in missing])
        try:
            return SystemParams(**{key: getattr(self, key) for key in PARAM_KEYS})
        except ValidationError as e:
            raise InvalidParameters([Violation("invalid parameter", str(err["loc"][0]) + ": " + err["msg"]) for err in e.errors()])

    def field_spec(self) -> FieldSpec:
        return FieldSpec.parse(self.field)

    def resolved(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _canonical(key: str) -> str:
    key = key.strip().replace("-", "_")
    if key == "T":
        return key
    key = key.lower()
    return ALIASES.get(key, key)


def _value(key: str, raw: str) -> Any:
    raw = raw.strip()
    if key == "collector":
        return [int(float(v)) for v in raw.replace("{", "").replace("}", "").split(",") if v.strip()]
    if raw.lower() in {"none", "null", ""}:
        return None
    return raw


def parse_settings(tokens: Sequence[str]) -> Dict[str, Any]:
    """
    Parse settings like ``n=8 k=3 alpha=2`` or ``n: 8; k: 3``.

    Tokens may also be separated by semicolons or newlines. Unknown keys are
    rejected rather than ignored.
    """
    parts: List[str] = []
    for token in tokens:
        for line in str(token).splitlines():
            parts.extend(p.strip() for p in line.split(";") if p.strip())

    settings: Dict[str, Any] = {}
    unknown: List[str] = []
    for part in parts:
        sep = "=" if "=" in part else ":" if ":" in part else None
        if sep is None:
            unknown.append(part)
            continue
        key, val = part.split(sep, 1)
        key = _canonical(key)
        if key not in RunConfig.model_fields:
            unknown.append(part)
            continue
        try:
            settings[key] = _value(key, val)
        except ValueError:
            unknown.append(part)
    if unknown:
        raise InvalidParameters([Violation("unrecognised setting", part) for part in unknown])
    return settings


def env_settings() -> Dict[str, Any]:
    load_dotenv()
    found = {}
    for key, env in ENV_KEYS.items():
        value = os.getenv(env)
        if value:
            found[key] = value
    return found


def file_settings(path: str | Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidParameters([Violation("config file is not valid JSON", f"{path}: {e}")])
    if not isinstance(data, dict):
        raise InvalidParameters([Violation("config file holds a JSON object", str(path))])
    params = data.pop("params", None) or {}
    if not isinstance(params, dict):
        raise InvalidParameters([Violation("\"params\" holds a JSON object", str(path))])
    settings = {_canonical(k): v for k, v in params.items()}
    settings.update({_canonical(k): v for k, v in data.items()})
    return settings


def load_config(tokens: Sequence[str] = (), config_path: Optional[str | Path] = None) -> RunConfig:
    """Defaults, then environment, then the JSON file, then command-line settings."""
    merged: Dict[str, Any] = {}
    merged.update(env_settings())
    if config_path is not None:
        merged.update(file_settings(config_path))
    merged.update(parse_settings(tokens))
    try:
        config = RunConfig(**merged)
    except ValidationError as e:
        raise InvalidParameters([Violation("invalid setting", f"{'.'.join(map(str, err['loc']))}: {err['msg']}") for err in e.errors()])
    logger.debug("resolved config: %s", config.resolved())
    return config
