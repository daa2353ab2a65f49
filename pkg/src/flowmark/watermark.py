"""Interval watermark: clear a keyed subset of intervals, detect by re-sync.

The timeline [o, o + n*T) of a flow is split into n intervals of length T
starting at offset o.  Embedding delays every packet out of a keyed subset
of intervals, leaving them silent.  The detector does not know o; it sweeps
candidate offsets spaced delta apart and declares a match only when every
watermark interval is silent at some candidate.  To survive an offset
mismatch the detector inspects the centered sub-window of length T - delta
of each interval rather than the full interval.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional

from .analysis import ceil_snapped
from .errors import BadDelta, BadFraction, ConfigError, FlowmarkError, FlowTooShort
from .flow_model import Flow, FlowModel, generate_flow
from .seeds import check_seed, derive_seed


@dataclass(frozen=True)
class WatermarkParams:
    """Embedding parameters.

    T: interval length (seconds); o: embedding offset; o_max: largest offset
    the embedder may use (the detector sweeps [0, o_max]); delta: detector
    offset step; n: number of intervals; key: pattern key; clear_fraction:
    fraction of intervals to clear.
    """

    T: float
    o: float
    o_max: float
    delta: float
    n: int
    key: int
    clear_fraction: float

    def __post_init__(self) -> None:
        if self.T <= 0 or not math.isfinite(self.T):
            raise ValueError(f"interval length must be positive, got {self.T}")
        if self.o_max < 0 or not math.isfinite(self.o_max):
            raise ValueError(f"o_max must be non-negative, got {self.o_max}")
        if not 0 <= self.o <= self.o_max:
            raise ValueError(
                f"offset must lie in [0, o_max={self.o_max}], got {self.o}"
            )
        if not 0 < self.delta <= self.T or not math.isfinite(self.delta):
            raise BadDelta(f"delta must be in (0, T={self.T}], got {self.delta}")
        if self.n < 1:
            raise ValueError(f"interval count must be at least 1, got {self.n}")
        check_seed(self.key)
        if not 0.0 < self.clear_fraction < 1.0:
            raise BadFraction(
                f"clear_fraction must be in (0, 1), got {self.clear_fraction}"
            )

    def pattern(self) -> "ClearPattern":
        return derive_pattern(self.key, self.n, self.clear_fraction)


@dataclass(frozen=True)
class ClearPattern:
    """The keyed subset of interval indices the embedder silences."""

    n: int
    cleared: frozenset[int]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"interval count must be at least 1, got {self.n}")
        object.__setattr__(self, "cleared", frozenset(self.cleared))
        if not self.cleared:
            raise ValueError("pattern must clear at least one interval")
        if not all(0 <= i < self.n for i in self.cleared):
            raise ValueError("cleared indices must lie in [0, n)")


@dataclass(frozen=True)
class DetectionResult:
    detected: bool
    recovered_offset: Optional[float]
    match_score: float


def derive_pattern(key: int, n: int, clear_fraction: float) -> ClearPattern:
    """Pseudorandom size-ceil(clear_fraction * n) subset, deterministic in key."""
    check_seed(key)
    if n < 1:
        raise ValueError(f"interval count must be at least 1, got {n}")
    if not 0.0 < clear_fraction < 1.0:
        raise BadFraction(f"clear_fraction must be in (0, 1), got {clear_fraction}")
    size = max(1, ceil_snapped(clear_fraction * n))
    rng = random.Random(derive_seed(key, "pattern", n, clear_fraction))
    cleared = frozenset(rng.sample(range(n), size))
    return ClearPattern(n=n, cleared=cleared)


def _interval_index(t: float, o: float, T: float) -> int:
    """Index i with t in [o + i*T, o + (i+1)*T), snapping ulp-level boundary noise."""
    q = (t - o) / T
    nearest = round(q)
    if abs(q - nearest) <= 1e-9 * max(1.0, abs(q)):
        return int(nearest)
    return int(math.floor(q))


def embed(flow: Flow, params: WatermarkParams) -> Flow:
    """Delay every packet out of the cleared intervals of the keyed pattern.

    A delayed packet moves to the start of the next non-cleared region
    (possibly the end of the watermark window); relative order is kept and
    exact collisions are separated by the canonical tie step.
    """
    window_end = params.o + params.n * params.T
    if flow.duration < window_end:
        raise FlowTooShort(
            f"flow duration {flow.duration} is shorter than the watermark window "
            f"end {window_end}"
        )
    cleared = params.pattern().cleared
    out = flow.timestamps.tolist()
    for pos, t in enumerate(out):
        if t < params.o:
            continue
        i = _interval_index(t, params.o, params.T)
        if i < 0 or i >= params.n or i not in cleared:
            continue
        j = i + 1
        while j < params.n and j in cleared:
            j += 1
        out[pos] = params.o + j * params.T
    return Flow(timestamps=out, duration=flow.duration)


def offset_candidates(o_max: float, delta: float) -> list[float]:
    """Detector sweep grid {0, delta, 2*delta, ...} with o_max always included."""
    if delta <= 0 or not math.isfinite(delta):
        raise BadDelta(f"delta must be positive, got {delta}")
    if o_max < 0 or not math.isfinite(o_max):
        raise ValueError(f"o_max must be non-negative, got {o_max}")
    steps = ceil_snapped(o_max / delta) if o_max > 0 else 0
    candidates = [i * delta for i in range(steps)]
    candidates.append(o_max)
    return candidates


def detect(flow: Flow, params: WatermarkParams) -> DetectionResult:
    """Scan candidate offsets for a full pattern match; params.o is ignored.

    At each candidate the centered length-(T - delta) sub-window of every
    cleared interval must be silent; the first candidate matching all of
    them wins.  match_score is the best fraction of silent intervals seen.
    """
    needed = params.o_max + params.n * params.T
    if flow.duration < needed:
        raise FlowTooShort(
            f"flow duration {flow.duration} is shorter than the detector span {needed}"
        )
    cleared = sorted(params.pattern().cleared)
    margin = params.delta / 2.0
    ts = flow.timestamps
    best = 0.0
    for candidate in offset_candidates(params.o_max, params.delta):
        silent = 0
        for i in cleared:
            lo = candidate + i * params.T + margin
            hi = candidate + (i + 1) * params.T - margin
            if flow.count_in(lo, hi) == 0:
                silent += 1
        score = silent / len(cleared)
        if score == 1.0:
            return DetectionResult(detected=True, recovered_offset=candidate, match_score=1.0)
        best = max(best, score)
    return DetectionResult(detected=False, recovered_offset=None, match_score=best)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% (by default) Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def false_positive_rate(
    model: FlowModel, params: WatermarkParams, trials: int, seed: int
) -> tuple[float, float]:
    """Monte Carlo detection rate on unwatermarked flows, with Wilson half-width.

    Flows are generated just long enough for the detector sweep
    (o_max + n*T seconds).  Requires at least 100 trials for the interval
    to mean anything.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    check_seed(seed)
    duration = params.o_max + params.n * params.T
    hits = 0
    for trial in range(trials):
        flow = generate_flow(model, duration, derive_seed(seed, "fpr-trial", trial))
        if detect(flow, params).detected:
            hits += 1
    lo, hi = wilson_interval(hits, trials)
    return hits / trials, (hi - lo) / 2.0


# ---------------------------------------------------------------------------
# Flat config-section serialization ([watermark] in experiment configs).
# ---------------------------------------------------------------------------

_SECTION_FIELDS = ("T", "o", "o_max", "delta", "n", "key", "clear_fraction")


def params_to_section(params: WatermarkParams) -> dict[str, str]:
    """Render parameters as the flat key/value mapping of a [watermark] section."""
    return {
        "T": repr(params.T),
        "o": repr(params.o),
        "o_max": repr(params.o_max),
        "delta": repr(params.delta),
        "n": str(params.n),
        "key": str(params.key),
        "clear_fraction": repr(params.clear_fraction),
    }


def params_from_section(section: Mapping[str, str]) -> WatermarkParams:
    """Parse a [watermark] mapping; unknown or missing keys are rejected."""
    unknown = sorted(set(section) - set(_SECTION_FIELDS))
    if unknown:
        raise ConfigError(f"unknown [watermark] key: {unknown[0]}")
    missing = [k for k in _SECTION_FIELDS if k not in section]
    if missing:
        raise ConfigError(f"missing [watermark] key: {missing[0]}")
    try:
        return WatermarkParams(
            T=float(section["T"]),
            o=float(section["o"]),
            o_max=float(section["o_max"]),
            delta=float(section["delta"]),
            n=int(section["n"]),
            key=int(section["key"]),
            clear_fraction=float(section["clear_fraction"]),
        )
    except (TypeError, ValueError, FlowmarkError) as exc:
        raise ConfigError(f"bad [watermark] value: {exc}") from exc
