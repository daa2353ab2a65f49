"""Multi-flow attack: find clear windows common to flows that may be offset.

If several flows carry the same interval watermark, their cleared intervals
line up once each flow's unknown offset is guessed.  The attack therefore
searches, over per-flow offset guesses from a step-delta grid, for a window
of length at least T - delta that is packet-free in every flow.  Windows are
snapped inward to a small time quantum, so the grid search can only shrink
what is really clear and never reports a window containing a packet.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .analysis import ceil_snapped, fp_bound, offset_multiplier
from .errors import BadDelta, NegativeWindow, SearchSpaceTooLarge
from .flow_model import Flow, estimate_clear_probability


@dataclass(frozen=True)
class AttackConfig:
    """Attack parameters: interval length T, detector step delta, offset span
    o_max, target false-positive epsilon, and the snapping quantum (defaults
    to delta / 8; must not exceed delta / 4 so snapping losses stay well
    below the detector's own tolerance)."""

    T: float
    delta: float
    o_max: float
    epsilon: float
    quantum: Optional[float] = None

    def __post_init__(self) -> None:
        if self.T <= 0 or not math.isfinite(self.T):
            raise ValueError(f"interval length must be positive, got {self.T}")
        if not 0 < self.delta <= self.T or not math.isfinite(self.delta):
            raise BadDelta(f"delta must be in (0, T={self.T}], got {self.delta}")
        if self.o_max < 0 or not math.isfinite(self.o_max):
            raise ValueError(f"o_max must be non-negative, got {self.o_max}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.quantum is None:
            object.__setattr__(self, "quantum", self.delta / 8.0)
        if not 0 < self.quantum <= self.delta / 4.0:
            raise ValueError(
                f"quantum must be in (0, delta/4={self.delta / 4.0}], got {self.quantum}"
            )

    @property
    def min_length(self) -> float:
        return self.T - self.delta


@dataclass(frozen=True)
class ClearWindow:
    """A packet-free open window (start, start + length) of one flow."""

    start: float
    length: float
    flow_index: int


@dataclass(frozen=True)
class AttackFinding:
    """Outcome of one attack run.

    matched_window is (start, length) on the common (offset-corrected) time
    axis, present only for positive verdicts.  configurations_searched counts
    complete assignments evaluated plus branches pruned, so it never exceeds
    multiplier ** k.  fp_bound_at_k is the analytic bound for the searched
    configuration.
    """

    present: bool
    matched_window: Optional[tuple[float, float]]
    offset_assignment: Optional[tuple[float, ...]]
    configurations_searched: int
    fp_bound_at_k: float


def _raw_gaps(flow: Flow) -> list[tuple[float, float]]:
    """Maximal packet-free spans (s, e), endpoints at packets or flow edges."""
    ts = flow.timestamps.tolist()
    edges = [0.0] + ts + [flow.duration]
    return [(s, e) for s, e in zip(edges[:-1], edges[1:]) if e > s]


def _quantize_gap(
    s: float, e: float, shift: float, quantum: float
) -> Optional[tuple[int, int]]:
    """Shift a gap by -shift and snap it inward onto the quantum grid.

    Returned bounds are grid indices.  The while guards re-check the final
    float expressions the soundness audit uses, so a unit of rounding noise
    can only shrink the window further.
    """
    lo = math.ceil((s - shift) / quantum)
    while lo * quantum + shift < s:
        lo += 1
    hi = math.floor((e - shift) / quantum)
    while hi * quantum + shift > e:
        hi -= 1
    if hi <= lo:
        return None
    return lo, hi


def _grid_windows(
    flow: Flow, shift: float, quantum: float, min_units: int
) -> list[tuple[int, int]]:
    out = []
    for s, e in _raw_gaps(flow):
        q = _quantize_gap(s, e, shift, quantum)
        if q is not None and q[1] - q[0] >= min_units:
            out.append(q)
    return out


def _exact_windows(flow: Flow, shift: float, min_length: float) -> list[tuple[float, float]]:
    return [
        (s - shift, e - shift)
        for s, e in _raw_gaps(flow)
        if (e - shift) - (s - shift) >= min_length
    ]


def _intersect(windows_a: list, windows_b: list, min_size) -> list:
    """Intersect two sorted window lists, keeping pieces of at least min_size."""
    out = []
    i = j = 0
    while i < len(windows_a) and j < len(windows_b):
        lo = max(windows_a[i][0], windows_b[j][0])
        hi = min(windows_a[i][1], windows_b[j][1])
        if hi - lo >= min_size:
            out.append((lo, hi))
        if windows_a[i][1] < windows_b[j][1]:
            i += 1
        else:
            j += 1
    return out


def find_clear_windows(flow: Flow, min_length: float, quantum: float) -> list[ClearWindow]:
    """Clear windows of the flow at least min_length long, snapped inward.

    Windows are open intervals: a packet exactly at a reported boundary is
    outside.  Results are sorted by start.
    """
    if min_length <= 0 or not math.isfinite(min_length):
        raise NegativeWindow(f"min_length must be positive, got {min_length}")
    if quantum <= 0 or not math.isfinite(quantum):
        raise ValueError(f"quantum must be positive, got {quantum}")
    min_units = ceil_snapped(min_length / quantum)
    grid = _grid_windows(flow, 0.0, quantum, min_units)
    return [
        ClearWindow(start=lo * quantum, length=(hi - lo) * quantum, flow_index=0)
        for lo, hi in grid
    ]


def _mean_clear_probability(flows: Sequence[Flow], cfg: AttackConfig) -> float:
    """Estimate of the per-flow clear probability at window T - delta."""
    total = 0.0
    for flow in flows:
        if flow.duration < cfg.min_length:
            continue  # too short to ever show a qualifying window
        stride = min(cfg.quantum, cfg.min_length)
        total += estimate_clear_probability(flow, cfg.min_length, stride)
    return total / len(flows)


def _finding(
    flows: Sequence[Flow],
    cfg: AttackConfig,
    multiplier: int,
    hit: Optional[tuple[tuple[float, float], tuple[float, ...]]],
    searched: int,
    clear_prob: Optional[float],
) -> AttackFinding:
    p = _mean_clear_probability(flows, cfg) if clear_prob is None else clear_prob
    bound = fp_bound(len(flows), p, multiplier).clamped
    if hit is None:
        return AttackFinding(
            present=False,
            matched_window=None,
            offset_assignment=None,
            configurations_searched=searched,
            fp_bound_at_k=bound,
        )
    window, assignment = hit
    return AttackFinding(
        present=True,
        matched_window=window,
        offset_assignment=assignment,
        configurations_searched=searched,
        fp_bound_at_k=bound,
    )


def _window_lists(
    flows: Sequence[Flow], cfg: AttackConfig, shifts: Sequence[float], exact: bool
) -> list[list[list]]:
    """windows[flow_index][shift_index], each sorted by window start."""
    if exact:
        return [
            [_exact_windows(flow, shift, cfg.min_length) for shift in shifts]
            for flow in flows
        ]
    min_units = ceil_snapped(cfg.min_length / cfg.quantum)
    return [
        [_grid_windows(flow, shift, cfg.quantum, min_units) for shift in shifts]
        for flow in flows
    ]


def _to_seconds(window: tuple, cfg: AttackConfig, exact: bool) -> tuple[float, float]:
    lo, hi = window
    if exact:
        return float(lo), float(hi - lo)
    return lo * cfg.quantum, (hi - lo) * cfg.quantum


def _check_flows(flows: Sequence[Flow]) -> None:
    if not flows:
        raise ValueError("attack needs at least one flow")


def mfa_fixed_offset(
    flows: Sequence[Flow],
    cfg: AttackConfig,
    *,
    exact: bool = False,
    clear_prob: Optional[float] = None,
) -> AttackFinding:
    """Common-offset attack: intersect all flows' clear windows directly.

    The earliest common window of length at least T - delta wins.  The
    reported bound uses multiplier 1 (no offset uncertainty).
    """
    _check_flows(flows)
    min_size = cfg.min_length if exact else ceil_snapped(cfg.min_length / cfg.quantum)
    lists = _window_lists(flows, cfg, [0.0], exact)
    common = lists[0][0]
    for fi in range(1, len(flows)):
        if not common:
            break
        common = _intersect(common, lists[fi][0], min_size)
    hit = None
    if common:
        hit = (_to_seconds(common[0], cfg, exact), (0.0,) * len(flows))
    return _finding(flows, cfg, 1, hit, 1, clear_prob)


def _offset_grid(cfg: AttackConfig) -> list[float]:
    count = offset_multiplier(cfg.o_max, cfg.delta)
    return [i * cfg.delta for i in range(count)]


EXHAUSTIVE_CAP = 10**6


def mfa_varied_offset_exhaustive(
    flows: Sequence[Flow],
    cfg: AttackConfig,
    *,
    cap: int = EXHAUSTIVE_CAP,
    exact: bool = False,
    clear_prob: Optional[float] = None,
) -> AttackFinding:
    """Try every per-flow offset assignment in lexicographic order.

    Stops at the first assignment exhibiting a common clear window; errors
    if the multiplier ** k space exceeds the cap.
    """
    _check_flows(flows)
    offsets = _offset_grid(cfg)
    k = len(flows)
    space = len(offsets) ** k
    if space > cap:
        raise SearchSpaceTooLarge(
            f"{len(offsets)}^{k} = {space} configurations exceed the cap {cap}"
        )
    min_size = cfg.min_length if exact else ceil_snapped(cfg.min_length / cfg.quantum)
    lists = _window_lists(flows, cfg, offsets, exact)
    multiplier = offset_multiplier(cfg.o_max, cfg.delta)
    searched = 0
    for assignment in itertools.product(range(len(offsets)), repeat=k):
        searched += 1
        common = lists[0][assignment[0]]
        for fi in range(1, k):
            if not common:
                break
            common = _intersect(common, lists[fi][assignment[fi]], min_size)
        if common:
            hit = (
                _to_seconds(common[0], cfg, exact),
                tuple(offsets[oi] for oi in assignment),
            )
            return _finding(flows, cfg, multiplier, hit, searched, clear_prob)
    return _finding(flows, cfg, multiplier, None, searched, clear_prob)


def mfa_varied_offset_bnb(
    flows: Sequence[Flow],
    cfg: AttackConfig,
    *,
    exact: bool = False,
    clear_prob: Optional[float] = None,
) -> AttackFinding:
    """Branch-and-bound over offset assignments, flow by flow.

    A branch dies as soon as the surviving common window set is empty, so
    whole sub-spaces vanish without enumeration.  Exploration order is the
    same lexicographic order as the exhaustive search, hence identical
    verdicts and, when present, identical assignments.
    configurations_searched counts pruned branches plus complete
    assignments reached.
    """
    _check_flows(flows)
    offsets = _offset_grid(cfg)
    k = len(flows)
    min_size = cfg.min_length if exact else ceil_snapped(cfg.min_length / cfg.quantum)
    lists = _window_lists(flows, cfg, offsets, exact)
    multiplier = offset_multiplier(cfg.o_max, cfg.delta)
    searched = 0
    prefix: list[int] = []

    def descend(level: int, common: list) -> Optional[tuple]:
        nonlocal searched
        for oi in range(len(offsets)):
            if level == 0:
                survived = lists[0][oi]
            else:
                survived = _intersect(common, lists[level][oi], min_size)
            if not survived:
                searched += 1  # pruned branch
                continue
            prefix.append(oi)
            if level == k - 1:
                searched += 1  # complete assignment
                hit = (
                    _to_seconds(survived[0], cfg, exact),
                    tuple(offsets[i] for i in prefix),
                )
                prefix.pop()
                return hit
            hit = descend(level + 1, survived)
            prefix.pop()
            if hit is not None:
                return hit
        return None

    hit = descend(0, [])
    return _finding(flows, cfg, multiplier, hit, searched, clear_prob)


def read_manifest(path: str | Path) -> list[Path]:
    """Flow-file paths from a manifest, one per line, relative to the manifest."""
    path = Path(path)
    base = path.parent
    entries: list[Path] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        candidate = Path(stripped)
        entries.append(candidate if candidate.is_absolute() else base / candidate)
    return entries
