"""Closed-form false-positive bounds for the multi-flow clear-interval attack.

An attacker confronted with per-flow offsets in [0, o_max] on a step-delta
grid must try ceil(o_max / delta) alignments per flow.  The chance that a
fixed window is clear by accident in all of k independent flows is p^k, so
the false-positive probability of the whole search is bounded by
(ceil(o_max / delta) * p)^k.  Everything here is elementary arithmetic on
that expression: evaluating it, inverting it for the smallest adequate k,
and locating the o_max beyond which no k suffices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import BadDelta, BadProbability

# Ratios that land within this relative distance of an integer are treated
# as exact before ceiling, so 0.9 / 0.3 = 3.0000000000000004 does not
# inflate a multiplier.
_SNAP_REL = 1e-9


def ceil_snapped(x: float) -> int:
    """Ceiling with a snap-to-integer guard against float division noise."""
    nearest = round(x)
    if abs(x - nearest) <= _SNAP_REL * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def offset_multiplier(o_max: float, delta: float) -> int:
    """Number of offset alignments an attacker must try per flow.

    o_max = 0 means a single fixed offset, reported as multiplier 1.
    """
    if delta <= 0 or not math.isfinite(delta):
        raise BadDelta(f"delta must be positive, got {delta}")
    if o_max < 0 or not math.isfinite(o_max):
        raise ValueError(f"o_max must be non-negative, got {o_max}")
    if o_max == 0:
        return 1
    return max(1, ceil_snapped(o_max / delta))


class FpBound(NamedTuple):
    """(multiplier * p)^k both as computed and clamped into [0, 1]."""

    raw: float
    clamped: float


@dataclass(frozen=True)
class BoundInputs:
    """Parameter bundle for the bound: k flows, offset grid, clear probability."""

    k: int
    o_max: float
    delta: float
    p: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        offset_multiplier(self.o_max, self.delta)  # validates o_max and delta

    @property
    def multiplier(self) -> int:
        return offset_multiplier(self.o_max, self.delta)


def fp_bound(k: int, p: float, multiplier: int = 1) -> FpBound:
    """Probability bound (multiplier * p)^k on a k-flow attack false positive.

    Evaluated in log space so large k cannot underflow stepwise; the raw
    value may exceed 1 when multiplier * p >= 1, the clamp never does.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if multiplier < 1:
        raise ValueError(f"multiplier must be at least 1, got {multiplier}")
    base = multiplier * p
    if base == 0.0:
        raw = 0.0
    else:
        raw = math.exp(k * math.log(base))
    return FpBound(raw=raw, clamped=min(raw, 1.0))


def fp_bound_for(inputs: BoundInputs) -> FpBound:
    return fp_bound(inputs.k, inputs.p, inputs.multiplier)


@dataclass(frozen=True)
class FeasibilityVerdict:
    """Smallest k pushing the bound below epsilon, or proof that none exists.

    base is multiplier * p.  When base >= 1 the bound never decays and
    min_k is None.  threshold_o_max is the offset span at which base
    reaches 1 (delta / p): keeping o_max above it defeats the attack.
    """

    feasible: bool
    base: float
    min_k: Optional[int]
    threshold_o_max: float


def min_flows(epsilon: float, o_max: float, delta: float, p: float) -> FeasibilityVerdict:
    """Smallest k with (multiplier * p)^k < epsilon, by logs with a power re-check."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    multiplier = offset_multiplier(o_max, delta)
    base = multiplier * p
    threshold = math.inf if p == 0.0 else delta / p
    if base >= 1.0:
        return FeasibilityVerdict(
            feasible=False, base=base, min_k=None, threshold_o_max=threshold
        )
    if base == 0.0:
        return FeasibilityVerdict(
            feasible=True, base=base, min_k=1, threshold_o_max=threshold
        )
    # log(base) < 0 flips the inequality: k > log(epsilon) / log(base).
    k = math.floor(math.log(epsilon) / math.log(base)) + 1
    k = max(1, k)
    while fp_bound(k, p, multiplier).raw >= epsilon:
        k += 1
    while k > 1 and fp_bound(k - 1, p, multiplier).raw < epsilon:
        k -= 1
    return FeasibilityVerdict(
        feasible=True, base=base, min_k=k, threshold_o_max=threshold
    )


def countermeasure_threshold(T: float, p_half: float) -> float:
    """Offset span above which varying offsets defeats the attack outright.

    With detector step delta = T/2 the attack is infeasible once
    ceil(o_max / (T/2)) * p_half >= 1; the smooth form of that boundary
    is o_max = T / (2 * p_half).
    """
    if T <= 0 or not math.isfinite(T):
        raise ValueError(f"interval length must be positive, got {T}")
    if not 0.0 < p_half <= 1.0:
        raise BadProbability(
            f"clear probability at T/2 must be in (0, 1], got {p_half}"
        )
    return T / (2.0 * p_half)


def countermeasure_is_effective(o_max: float, T: float, p_half: float) -> bool:
    """True when the discrete bound base ceil(o_max / (T/2)) * p_half is >= 1."""
    if T <= 0 or not math.isfinite(T):
        raise ValueError(f"interval length must be positive, got {T}")
    if not 0.0 < p_half <= 1.0:
        raise BadProbability(
            f"clear probability at T/2 must be in (0, 1], got {p_half}"
        )
    return offset_multiplier(o_max, T / 2.0) * p_half >= 1.0


SWEEP_COLUMNS = ("swept_value", "multiplier", "base", "min_k", "fp_bound_at_min_k")

_SWEEPABLE = ("T", "delta", "o_max", "epsilon", "p")


def sweep_table(
    param: str,
    values: Iterable[float],
    *,
    T: float,
    delta: float,
    o_max: float,
    epsilon: float,
    p: float,
) -> list[tuple[float, int, float, str, str]]:
    """Feasibility summary rows while one parameter sweeps, for CSV output.

    Each row is (swept value, multiplier, base, min_k or 'inf',
    fp_bound at min_k or '').  Sweeping T only matters through callers
    that recompute p(T - delta); here T is carried for interface parity.
    """
    if param not in _SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose one of {_SWEEPABLE}")
    fixed = {"T": T, "delta": delta, "o_max": o_max, "epsilon": epsilon, "p": p}
    rows: list[tuple[float, int, float, str, str]] = []
    for value in values:
        point = dict(fixed)
        point[param] = float(value)
        verdict = min_flows(point["epsilon"], point["o_max"], point["delta"], point["p"])
        multiplier = offset_multiplier(point["o_max"], point["delta"])
        if verdict.feasible:
            assert verdict.min_k is not None
            bound = fp_bound(verdict.min_k, point["p"], multiplier)
            min_k_text = str(verdict.min_k)
            bound_text = repr(bound.raw)
        else:
            min_k_text = "inf"
            bound_text = ""
        rows.append((float(value), multiplier, verdict.base, min_k_text, bound_text))
    return rows
