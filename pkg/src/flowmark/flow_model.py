"""Packet flows and the probability that a time window of a flow is clear.

A flow is a finite list of packet timestamps inside [0, duration].  The
quantity everything else builds on is the clear probability: the chance
that a window of given length contains no packet.  For a Poisson flow
with rate lam this is exp(-lam * t); measured traffic is described by a
small interpolation table instead.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Union

import numpy as np

from .errors import (
    InvalidDuration,
    InvalidProbability,
    InvalidWindow,
    NegativeWindow,
    NonGenerativeModel,
    WindowTooLong,
)
from .seeds import check_seed


def _canonical_timestamps(timestamps: Iterable[float]) -> np.ndarray:
    """Sort timestamps (stable) and break exact ties by the smallest float step.

    Ties are resolved in insertion order: the later duplicate is nudged just
    above the earlier one, so packet identity is preserved and the result is
    strictly increasing.
    """
    arr = np.asarray(list(timestamps), dtype=float)
    if arr.ndim != 1:
        raise ValueError("timestamps must be a one-dimensional sequence")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("timestamps must be finite")
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        arr = arr[np.argsort(arr, kind="stable")]
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        out = arr.copy()
        for i in range(1, out.size):
            if out[i] <= out[i - 1]:
                out[i] = math.nextafter(out[i - 1], math.inf)
        arr = out
    return arr


@dataclass(frozen=True, eq=False)
class Flow:
    """An ordered packet-timestamp trace observed over [0, duration] seconds."""

    timestamps: np.ndarray
    duration: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise InvalidDuration(f"duration must be positive, got {self.duration}")
        arr = _canonical_timestamps(self.timestamps)
        if arr.size:
            if arr[0] < 0.0:
                raise ValueError(f"timestamp {arr[0]} is negative")
            if arr[-1] > self.duration:
                # Tie perturbation can overshoot by a few ulps; genuine
                # out-of-range inputs are rejected, ulp overshoot extends
                # the duration instead.
                raw_max = float(np.max(np.asarray(self.timestamps, dtype=float)))
                if raw_max > self.duration:
                    raise ValueError(
                        f"timestamp {raw_max} exceeds duration {self.duration}"
                    )
                object.__setattr__(self, "duration", float(arr[-1]))
        arr.flags.writeable = False
        object.__setattr__(self, "timestamps", arr)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Flow):
            return NotImplemented
        return self.duration == other.duration and np.array_equal(
            self.timestamps, other.timestamps
        )

    def count_in(self, start: float, end: float) -> int:
        """Number of packets in the half-open window [start, end)."""
        ts = self.timestamps
        return int(np.searchsorted(ts, end, side="left") - np.searchsorted(ts, start, side="left"))


@dataclass(frozen=True)
class PoissonModel:
    """Memoryless flow: inter-packet gaps are i.i.d. exponential(rate)."""

    rate: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.rate) or self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


class TableLookup(NamedTuple):
    probability: float
    clamped: bool


@dataclass(frozen=True)
class EmpiricalModel:
    """Clear probability given by linear interpolation over measured points.

    The table maps window length (seconds) to clear probability and must be
    non-increasing: longer windows cannot be clear more often.
    """

    table: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(p)) for t, p in self.table)
        if not pts:
            raise ValueError("empirical table must not be empty")
        for t, p in pts:
            if t < 0:
                raise ValueError(f"window length {t} is negative")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        ts = [t for t, _ in pts]
        if sorted(set(ts)) != ts:
            raise ValueError("window lengths must be strictly increasing")
        ps = [p for _, p in pts]
        if any(b > a for a, b in zip(ps, ps[1:])):
            raise ValueError("clear probabilities must be non-increasing in t")
        object.__setattr__(self, "table", pts)

    def lookup(self, t: float) -> TableLookup:
        """Interpolated clear probability plus a flag when t fell off the table."""
        ts = [x for x, _ in self.table]
        ps = [p for _, p in self.table]
        if t <= ts[0]:
            return TableLookup(ps[0], clamped=t < ts[0])
        if t >= ts[-1]:
            return TableLookup(ps[-1], clamped=t > ts[-1])
        i = bisect_left(ts, t)
        if ts[i] == t:
            return TableLookup(ps[i], clamped=False)
        frac = (t - ts[i - 1]) / (ts[i] - ts[i - 1])
        return TableLookup(ps[i - 1] + frac * (ps[i] - ps[i - 1]), clamped=False)


FlowModel = Union[PoissonModel, EmpiricalModel]

# Measured clear probabilities used throughout the reference worked examples:
# a 175 ms window is clear with probability 0.525, 350 ms with 0.33,
# 450 ms with 0.276.
REFERENCE_CLEAR_TABLE = EmpiricalModel(
    table=((0.175, 0.525), (0.35, 0.33), (0.45, 0.276))
)


def generate_flow(model: FlowModel, duration: float, seed: int) -> Flow:
    """Synthesize a flow of the given duration from a generative model.

    Only Poisson models can generate; the draw is bit-identical for a
    given (model, duration, seed) triple.
    """
    if not isinstance(model, PoissonModel):
        raise NonGenerativeModel(
            f"{type(model).__name__} describes probabilities only and cannot generate flows"
        )
    if not math.isfinite(duration) or duration <= 0:
        raise InvalidDuration(f"duration must be positive, got {duration}")
    check_seed(seed)
    rng = np.random.default_rng(seed)
    scale = 1.0 / model.rate
    expected = model.rate * duration
    chunk = max(16, int(expected + 4.0 * math.sqrt(expected) + 16))
    times: list[np.ndarray] = []
    total = 0.0
    while True:
        gaps = rng.exponential(scale=scale, size=chunk)
        arrivals = total + np.cumsum(gaps)
        times.append(arrivals)
        total = float(arrivals[-1])
        if total > duration:
            break
        chunk = max(16, chunk // 4)
    ts = np.concatenate(times)
    ts = ts[ts < duration]
    return Flow(timestamps=ts, duration=duration)


def clear_probability(model: FlowModel, t: float) -> float:
    """Probability that a window of length t seconds contains no packet."""
    if t < 0 or not math.isfinite(t):
        raise NegativeWindow(f"window length must be non-negative, got {t}")
    if t == 0.0:
        return 1.0  # an empty window cannot contain a packet
    if isinstance(model, PoissonModel):
        return math.exp(-model.rate * t)
    return model.lookup(t).probability


def estimate_clear_probability(flow: Flow, t: float, stride: float) -> float:
    """Fraction of sampled windows [s, s+t) of the flow that are packet-free.

    Window starts step through {0, stride, 2*stride, ...} while s + t still
    fits inside the flow.  Overlapping strides are allowed and simply
    correlate neighbouring samples.
    """
    if t <= 0 or not math.isfinite(t):
        raise NegativeWindow(f"window length must be positive, got {t}")
    if t > flow.duration:
        raise WindowTooLong(
            f"window {t} exceeds flow duration {flow.duration}"
        )
    if not 0 < stride <= t:
        raise ValueError(f"stride must be in (0, t], got {stride}")
    # 1e-9 relative slack keeps the last on-grid start when (duration-t)/stride
    # is an exact multiple computed inexactly.
    span = flow.duration - t
    n_windows = int(math.floor(span / stride + 1e-9)) + 1
    starts = np.arange(n_windows, dtype=float) * stride
    ts = flow.timestamps
    lo = np.searchsorted(ts, starts, side="left")
    hi = np.searchsorted(ts, starts + t, side="left")
    return float(np.count_nonzero(hi == lo) / n_windows)


def poisson_rate_for_clear_probability(p: float, t: float) -> float:
    """Rate lam with exp(-lam * t) == p: calibrates Poisson to a measured point."""
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"clear probability must be in (0, 1), got {p}")
    if t <= 0 or not math.isfinite(t):
        raise InvalidWindow(f"window length must be positive, got {t}")
    return -math.log(p) / t


# ---------------------------------------------------------------------------
# Flow file format: a '# duration=<seconds>' header line, then one decimal
# timestamp per line in ascending order.
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "# duration="


def write_flow(flow: Flow, path: str | Path) -> None:
    """Write a flow to a text file, full float precision."""
    lines = [f"{_HEADER_PREFIX}{flow.duration!r}\n"]
    lines.extend(f"{t!r}\n" for t in flow.timestamps.tolist())
    Path(path).write_text("".join(lines), encoding="ascii")


def read_flow(path: str | Path) -> Flow:
    """Parse a flow file; malformed or unsorted input fails with the line number."""
    path = Path(path)
    text = path.read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError(f"{path}:1: expected header '{_HEADER_PREFIX}<seconds>'")
    try:
        duration = float(lines[0][len(_HEADER_PREFIX):])
    except ValueError:
        raise ValueError(f"{path}:1: malformed duration in header") from None
    timestamps: list[float] = []
    prev = -math.inf
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            value = float(stripped)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a timestamp: {stripped!r}") from None
        if value < prev:
            raise ValueError(
                f"{path}:{lineno}: timestamps out of order ({value} after {prev})"
            )
        if value < 0 or value > duration:
            raise ValueError(
                f"{path}:{lineno}: timestamp {value} outside [0, {duration}]"
            )
        timestamps.append(value)
        prev = value
    return Flow(timestamps=np.asarray(timestamps, dtype=float), duration=duration)
