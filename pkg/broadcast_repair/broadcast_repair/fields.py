from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Iterable, Literal, Sequence, Tuple, Union

import galois
import numpy as np

from .errors import FieldError, FieldZeroDivisionError

logger = logging.getLogger(__name__)

PRIME_ORDER_CAP = 2**32
MAX_EXTENSION_DEGREE = 16

# Reduction polynomials for GF(2^m), integer form (bit i = coefficient of x^i).
# These are the primitive polynomials of the common erasure-coding tables,
# fixed here so results are bit-reproducible across galois releases.
REDUCTION_POLYNOMIALS: Dict[int, int] = {
    1: 0x3,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x89,
    8: 0x11D,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
}

FieldOp = Literal["add", "mul", "inv", "pow"]


@dataclass(frozen=True)
class FieldSpec:
    kind: Literal["prime", "binary"]
    characteristic: int
    degree: int = 1

    @classmethod
    def prime(cls, p: int) -> "FieldSpec":
        spec = cls("prime", int(p), 1)
        spec.validate()
        return spec

    @classmethod
    def binary(cls, m: int) -> "FieldSpec":
        spec = cls("binary", 2, int(m))
        spec.validate()
        return spec

    @classmethod
    def parse(cls, text: str | int) -> "FieldSpec":
        """
        Parse a field description.

        Accepts a prime order ("47", 47), a binary extension ("2^8", "2**8",
        "GF(2^8)") or an explicit prime "p=47".
        """
        if isinstance(text, int):
            return cls.prime(text)
        raw = str(text).strip().lower().replace(" ", "")
        if raw.startswith("gf(") and raw.endswith(")"):
            raw = raw[3:-1]
        if raw.startswith("p="):
            raw = raw[2:]
        match = re.fullmatch(r"2(?:\^|\*\*)(\d+)", raw)
        if match:
            return cls.binary(int(match.group(1)))
        if raw.isdigit():
            return cls.prime(int(raw))
        raise FieldError(f"cannot parse field description {text!r}")

    @property
    def order(self) -> int:
        return self.characteristic**self.degree

    @property
    def reduction_polynomial(self) -> int | None:
        if self.kind == "binary":
            return REDUCTION_POLYNOMIALS[self.degree]
        return None

    @property
    def label(self) -> str:
        if self.kind == "binary":
            return f"GF(2^{self.degree})"
        return f"GF({self.characteristic})"

    def validate(self) -> None:
        if self.kind == "prime":
            if self.degree != 1:
                raise FieldError("prime fields have degree 1")
            if self.characteristic > PRIME_ORDER_CAP:
                raise FieldError(f"prime order {self.characteristic} exceeds the cap 2^32")
            if not galois.is_prime(self.characteristic):
                raise FieldError(f"{self.characteristic} is not prime")
        elif self.kind == "binary":
            if self.characteristic != 2:
                raise FieldError("binary extension fields have characteristic 2")
            if not 1 <= self.degree <= MAX_EXTENSION_DEGREE:
                raise FieldError(f"extension degree must be in 1..{MAX_EXTENSION_DEGREE}, got {self.degree}")
        else:
            raise FieldError(f"unknown field kind {self.kind!r}")

    def metadata(self) -> Dict[str, Any]:
        poly = self.reduction_polynomial
        return {
            "kind": self.kind,
            "order": self.order,
            "characteristic": self.characteristic,
            "degree": self.degree,
            "reduction_polynomial": None if poly is None else hex(poly),
        }


@lru_cache(maxsize=None)
def galois_field(spec: FieldSpec) -> type[galois.FieldArray]:
    """Return the galois array class for ``spec`` (cached, one class per field)."""
    spec.validate()
    if spec.kind == "prime" or spec.degree == 1:
        return galois.GF(spec.characteristic)
    logger.debug("building %s with reduction polynomial %s", spec.label, hex(spec.reduction_polynomial))
    return galois.GF(2**spec.degree, irreducible_poly=spec.reduction_polynomial)


def _element(spec: FieldSpec, value: Any) -> galois.FieldArray:
    try:
        as_int = int(value)
    except (TypeError, ValueError):
        raise FieldError(f"operand {value!r} is not an integer field element")
    if not 0 <= as_int < spec.order:
        raise FieldError(f"operand {as_int} out of range for {spec.label}")
    return galois_field(spec)(as_int)


def field_arith(spec: FieldSpec, op: FieldOp, *operands: int) -> int:
    """
    Exact scalar arithmetic in GF(q).

    ``add`` and ``mul`` take two elements, ``inv`` one, and ``pow`` an element
    and an integer exponent (negative exponents need a nonzero base).
    """
    if op in ("add", "mul"):
        if len(operands) != 2:
            raise FieldError(f"{op} takes two operands")
        a, b = (_element(spec, x) for x in operands)
        return int(a + b) if op == "add" else int(a * b)
    if op == "inv":
        if len(operands) != 1:
            raise FieldError("inv takes one operand")
        a = _element(spec, operands[0])
        if a == 0:
            raise FieldZeroDivisionError(f"0 has no inverse in {spec.label}")
        return int(np.reciprocal(a))
    if op == "pow":
        if len(operands) != 2:
            raise FieldError("pow takes a base and an exponent")
        a = _element(spec, operands[0])
        exponent = int(operands[1])
        if a == 0 and exponent < 0:
            raise FieldZeroDivisionError(f"0 has no inverse in {spec.label}")
        if a == 0:
            return 1 if exponent == 0 else 0
        return int(a**exponent)
    raise FieldError(f"unknown field operation {op!r}")


@dataclass(frozen=True)
class FieldMatrix:
    """Row-major matrix over GF(q); the serializable twin of a galois array."""

    spec: FieldSpec
    rows: int
    cols: int
    entries: Tuple[int, ...]

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0 or len(self.entries) != self.rows * self.cols:
            raise FieldError(f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries")
        bad = [e for e in self.entries if not 0 <= e < self.spec.order]
        if bad:
            raise FieldError(f"entries {bad[:5]} out of range for {self.spec.label}")

    @classmethod
    def from_rows(cls, spec: FieldSpec, rows: Sequence[Sequence[int]], cols: int | None = None) -> "FieldMatrix":
        rows = [list(map(int, row)) for row in rows]
        width = cols if cols is not None else (len(rows[0]) if rows else 0)
        if any(len(row) != width for row in rows):
            raise FieldError("ragged rows")
        return cls(spec, len(rows), width, tuple(e for row in rows for e in row))

    @classmethod
    def from_array(cls, spec: FieldSpec, array: galois.FieldArray) -> "FieldMatrix":
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise FieldError("expected a 2-D array")
        return cls(spec, arr.shape[0], arr.shape[1], tuple(int(e) for e in arr.flatten()))

    def to_array(self) -> galois.FieldArray:
        GF = galois_field(self.spec)
        if not self.entries:
            return GF.Zeros((self.rows, self.cols))
        return GF(np.array(self.entries, dtype=object).reshape(self.rows, self.cols).tolist())

    def to_rows(self) -> list[list[int]]:
        return [list(self.entries[i * self.cols:(i + 1) * self.cols]) for i in range(self.rows)]


MatrixLike = Union[FieldMatrix, galois.FieldArray]


def _as_array(matrix: MatrixLike) -> galois.FieldArray:
    if isinstance(matrix, FieldMatrix):
        return matrix.to_array()
    if isinstance(matrix, galois.FieldArray):
        return matrix
    raise FieldError(f"expected a FieldMatrix or galois array, got {type(matrix).__name__}")


def stack_rows(field: type[galois.FieldArray], blocks: Iterable[galois.FieldArray], cols: int) -> galois.FieldArray:
    """Stack row blocks (1-D rows or 2-D blocks) into one matrix with ``cols`` columns."""
    rows: list[list[int]] = []
    for block in blocks:
        arr = np.asarray(block)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.size and arr.shape[1] != cols:
            raise FieldError(f"dimension mismatch: expected {cols} columns, got {arr.shape[1]}")
        rows.extend([int(e) for e in row] for row in arr)
    if not rows:
        return field.Zeros((0, cols))
    return field(rows)


def rank(matrix: MatrixLike) -> int:
    """Rank by Gaussian elimination over the matrix's field."""
    arr = _as_array(matrix)
    if arr.ndim != 2:
        raise FieldError("rank needs a 2-D matrix")
    if arr.size == 0:
        return 0
    return int(np.linalg.matrix_rank(arr))


def in_span(vector: MatrixLike, basis: MatrixLike) -> bool:
    """True iff ``vector`` lies in the row space of ``basis``."""
    v = _as_array(vector)
    b = _as_array(basis)
    if v.ndim == 2 and v.shape[0] == 1:
        v = v[0]
    if v.ndim != 1 or b.ndim != 2:
        raise FieldError("in_span needs a vector and a 2-D basis")
    if b.shape[1] != v.shape[0]:
        raise FieldError(f"dimension mismatch: vector has {v.shape[0]} entries, basis has {b.shape[1]} columns")
    if not np.any(np.asarray(v)):
        return True
    if b.shape[0] == 0:
        return False
    stacked = stack_rows(type(b), [b, v], b.shape[1])
    return rank(stacked) == rank(b)
