"""
Normalised storage vs repair-transmission bandwidth tradeoff.

The file size is 1 throughout and every quantity is an exact Fraction; only
the CSV writer rounds (three decimals).
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from .errors import DivisibilityError, DominanceViolation, InfeasibleTradeoffError, InvalidParameters
from .model import SystemParams, Violation

logger = logging.getLogger(__name__)

Scheme = Literal["broadcast", "cooperative", "single"]
Rational = Union[int, Fraction]

CSV_HEADER = ("scheme", "tau", "alpha", "label")


@dataclass(frozen=True)
class TradeoffPoint:
    scheme: str
    tau: Fraction
    alpha: Optional[Fraction]
    label: str

    @property
    def feasible(self) -> bool:
        return self.alpha is not None

    def rounded(self, places: int = 3) -> Tuple[str, str]:
        return render(self.tau, places), "" if self.alpha is None else render(self.alpha, places)

    def to_json(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "label": self.label,
            "tau": fraction_text(self.tau),
            "alpha": None if self.alpha is None else fraction_text(self.alpha),
        }


def render(value: Fraction, places: int = 3) -> str:
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return str(exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Bandwidth:
    value: Fraction
    trivial: bool = False


def repair_transmission_bandwidth(params: SystemParams, file_size: Optional[Rational] = None) -> Bandwidth:
    """
    Packets sent by helpers per newcomer, d*beta/r.

    When r >= k the helpers must send the whole file, so the result is C/r
    (C defaults to k*alpha) and is marked trivial.
    """
    if params.r >= params.k:
        C = Fraction(params.k * params.alpha) if file_size is None else Fraction(file_size)
        return Bandwidth(C / params.r, trivial=True)
    return Bandwidth(Fraction(params.d * params.beta, params.r))


def cooperative_transmission_bandwidth(d: int, r: int, beta: Rational, beta_prime: Rational) -> Fraction:
    """Per-newcomer transmissions when newcomers download individually and then exchange packets."""
    return d * Fraction(beta) + (r - 1) * Fraction(beta_prime)


def _check(k: int, d: int, r: int, *, divides: bool) -> int:
    found: List[Violation] = []
    if not 1 <= r < k:
        found.append(Violation("1 <= r < k", f"r={r}, k={k}"))
    if d < k:
        found.append(Violation("d >= k", f"d={d}, k={k}"))
    if found:
        raise InvalidParameters(found)
    if divides and k % r:
        raise DivisibilityError(f"r={r} does not divide k={k}")
    return k // r


def ms_mt_points(k: int, d: int, r: int, scheme: Scheme = "broadcast") -> Tuple[TradeoffPoint, TradeoffPoint]:
    """The minimum-storage and minimum-transmission extremes of a scheme."""
    if scheme == "broadcast":
        _check(k, d, r, divides=True)
        ms = TradeoffPoint(scheme, Fraction(d, k * (d + r - k)), Fraction(1, k), "MSB")
        mt_value = Fraction(2 * d, k * (2 * d + r - k))
        return ms, TradeoffPoint(scheme, mt_value, mt_value, "MTB")
    if scheme == "cooperative":
        _check(k, d, r, divides=False)
        ms = TradeoffPoint(scheme, Fraction(d + r - 1, k * (d + r - k)), Fraction(1, k), "MSC")
        mt_value = Fraction(2 * d + r - 1, k * (2 * d + r - k))
        return ms, TradeoffPoint(scheme, mt_value, mt_value, "MTC")
    raise InvalidParameters([Violation("scheme is broadcast or cooperative", str(scheme))])


def helper_weights(k: int, d: int, r: int) -> List[int]:
    """d - (j-1)r for j = 1..k/r: helpers still unread when the j-th batch is collected."""
    u = k // r
    return [d - (j - 1) * r for j in range(1, u + 1)]


def alpha_at(k: int, d: int, r: int, tau: Rational) -> Fraction:
    """
    Smallest alpha whose capacity reaches 1 at transmission bandwidth ``tau``.

    The capacity sum(min(r*alpha, c_j*beta)) with beta = r*tau/d is piecewise
    linear in alpha; each segment is solved exactly.
    """
    u = _check(k, d, r, divides=True)
    tau = Fraction(tau)
    beta = r * tau / d
    weights = sorted(helper_weights(k, d, r))
    if sum(weights) * beta < 1:
        raise InfeasibleTradeoffError(f"tau={tau} is below the minimum transmission point")
    saturated = Fraction(0)
    lower = Fraction(0)
    for i, c in enumerate(weights):
        upper = c * beta / r
        alpha = (1 - saturated) / (r * (u - i))
        if lower <= alpha <= upper:
            return alpha
        saturated += c * beta
        lower = upper
    raise InfeasibleTradeoffError(f"no segment reaches capacity 1 at tau={tau}")


def _grid(low: Fraction, high: Fraction, samples: int) -> List[Fraction]:
    if samples < 2:
        raise InvalidParameters([Violation("at least two samples", f"samples={samples}")])
    step = (high - low) / (samples - 1)
    return [low + i * step for i in range(samples)]


def tradeoff_curve(k: int, d: int, r: int, samples: int = 11) -> List[TradeoffPoint]:
    """Broadcast curve on an even grid from the MT point to the MS point."""
    ms, mt = ms_mt_points(k, d, r, "broadcast")
    points = []
    taus = _grid(mt.tau, ms.tau, samples)
    for i, tau in enumerate(taus):
        label = "MTB" if i == 0 else "MSB" if i == len(taus) - 1 else "curve"
        points.append(TradeoffPoint("broadcast", tau, alpha_at(k, d, r, tau), label))
    return points


def baseline_curve(k: int, d: int, taus: Sequence[Rational]) -> List[TradeoffPoint]:
    """Single-node repair (r = 1) on a given grid; points below its own MT point come back infeasible."""
    points = []
    for tau in taus:
        tau = Fraction(tau)
        try:
            points.append(TradeoffPoint("single", tau, alpha_at(k, d, 1, tau), "curve"))
        except InfeasibleTradeoffError:
            points.append(TradeoffPoint("single", tau, None, "infeasible"))
    return points


@dataclass(frozen=True)
class DominanceReport:
    k: int
    d: int
    r: int
    ms_gap: Fraction
    mt_gap: Fraction

    @property
    def strict(self) -> bool:
        return self.ms_gap > 0 and self.mt_gap > 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "d": self.d,
            "r": self.r,
            "ms_gap": fraction_text(self.ms_gap),
            "mt_gap": fraction_text(self.mt_gap),
            "strict": self.strict,
        }


def dominance_report(k: int, d: int, r: int) -> DominanceReport:
    """Cooperative minus broadcast tau at both extremes; broadcast must win strictly when r > 1."""
    msb, mtb = ms_mt_points(k, d, r, "broadcast")
    msc, mtc = ms_mt_points(k, d, r, "cooperative")
    report = DominanceReport(k, d, r, msc.tau - msb.tau, mtc.tau - mtb.tau)
    if report.ms_gap < 0 or report.mt_gap < 0 or (r > 1 and not report.strict):
        raise DominanceViolation(f"broadcast does not beat cooperative repair for k={k}, d={d}, r={r}: {report}")
    return report


def write_csv(points: Sequence[TradeoffPoint], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in points:
            tau, alpha = p.rounded()
            writer.writerow((p.scheme, tau, alpha, p.label))
    return path


def write_sidecar(points: Sequence[TradeoffPoint], path: str | Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    document = dict(extra or {})
    document["points"] = [p.to_json() for p in points]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
