"""Clear-window extraction and the multi-flow attack in all three modes."""

import math
import random

import numpy as np
import pytest

import flowmark as fm
from flowmark import (
    AttackConfig,
    Flow,
    PoissonModel,
    derive_seed,
    find_clear_windows,
    fp_bound,
    generate_flow,
    mfa_fixed_offset,
    mfa_varied_offset_bnb,
    mfa_varied_offset_exhaustive,
    offset_multiplier,
    poisson_rate_for_clear_probability,
    read_manifest,
)
from flowmark.errors import BadDelta, NegativeWindow, SearchSpaceTooLarge

REFERENCE_CFG = AttackConfig(T=0.9, delta=0.45, o_max=0.9, epsilon=1e-5)


def carved_flow(offset: float, duration: float = 3.6, spacing: float = 0.05,
                gap: tuple[float, float] = (0.9, 1.45)) -> Flow:
    """Dense packet train with a single packet-free gap, shifted by offset."""
    ts = np.arange(spacing, duration, spacing)
    lo, hi = gap[0] + offset, gap[1] + offset
    return Flow(timestamps=ts[(ts <= lo) | (ts >= hi)], duration=duration)


def raw_gaps(flow: Flow) -> list[tuple[float, float]]:
    """Packet-free spans recomputed independently of the library internals."""
    edges = [0.0, *flow.timestamps.tolist(), flow.duration]
    return [(s, e) for s, e in zip(edges[:-1], edges[1:]) if e > s]


def assert_window_sound(finding, flows, cfg) -> None:
    """A positive verdict must name a window that is clear in every flow."""
    assert finding.matched_window is not None
    assert finding.offset_assignment is not None
    start, length = finding.matched_window
    assert length >= cfg.min_length - 1e-9
    for flow, offset in zip(flows, finding.offset_assignment):
        lo, hi = start + offset, start + length + offset
        # open interval: boundary packets do not violate the window
        inside = np.count_nonzero((flow.timestamps > lo) & (flow.timestamps < hi))
        assert inside == 0


class TestAttackConfig:
    def test_default_quantum_is_delta_eighth(self):
        assert REFERENCE_CFG.quantum == pytest.approx(0.45 / 8, rel=1e-12)

    def test_min_length(self):
        assert REFERENCE_CFG.min_length == pytest.approx(0.45, rel=1e-12)

    def test_rejects_delta_above_interval(self):
        with pytest.raises(BadDelta):
            AttackConfig(T=0.9, delta=1.0, o_max=0.9, epsilon=1e-5)

    def test_rejects_coarse_quantum(self):
        with pytest.raises(ValueError):
            AttackConfig(T=0.9, delta=0.45, o_max=0.9, epsilon=1e-5, quantum=0.2)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            AttackConfig(T=0.9, delta=0.45, o_max=0.9, epsilon=0.0)


class TestFindClearWindows:
    def test_two_packet_example(self):
        flow = Flow(timestamps=[1.0, 5.0], duration=6.0)
        (window,) = find_clear_windows(flow, 2.0, 0.25)
        assert (window.start, window.length) == (1.0, 4.0)
        assert window.flow_index == 0

    def test_empty_flow_is_one_big_window(self):
        flow = Flow(timestamps=[], duration=3.0)
        (window,) = find_clear_windows(flow, 1.0, 0.25)
        assert (window.start, window.length) == (0.0, 3.0)

    def test_no_window_in_dense_flow(self):
        flow = Flow(timestamps=np.arange(0.1, 3.0, 0.1), duration=3.0)
        assert find_clear_windows(flow, 0.45, 0.05) == []

    def test_windows_sorted_by_start(self):
        flow = Flow(timestamps=[1.0, 1.1, 3.0, 3.05], duration=6.0)
        windows = find_clear_windows(flow, 0.5, 0.1)
        starts = [w.start for w in windows]
        assert starts == sorted(starts)
        assert len(windows) == 3

    def test_rejects_nonpositive_min_length(self):
        flow = Flow(timestamps=[1.0], duration=2.0)
        with pytest.raises(NegativeWindow):
            find_clear_windows(flow, 0.0, 0.1)

    def test_rejects_nonpositive_quantum(self):
        flow = Flow(timestamps=[1.0], duration=2.0)
        with pytest.raises(ValueError):
            find_clear_windows(flow, 0.5, 0.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_windows_are_conservative(self, seed):
        """Every reported window is packet-free and sits inside a raw gap."""
        flow = generate_flow(PoissonModel(4.0), 8.0, seed=700 + seed)
        quantum = 0.45 / 8
        for w in find_clear_windows(flow, 0.45, quantum):
            inside = np.count_nonzero(
                (flow.timestamps > w.start) & (flow.timestamps < w.start + w.length)
            )
            assert inside == 0
            assert any(
                s - 1e-9 <= w.start and w.start + w.length <= e + 1e-9
                for s, e in raw_gaps(flow)
            )
            assert w.length >= 0.45 - 1e-9

    @pytest.mark.parametrize("seed", range(8))
    def test_no_qualifying_gap_is_missed_badly(self, seed):
        """Any raw gap longer than min_length + 2 quanta must be reported."""
        flow = generate_flow(PoissonModel(4.0), 8.0, seed=800 + seed)
        quantum = 0.45 / 8
        windows = find_clear_windows(flow, 0.45, quantum)
        for s, e in raw_gaps(flow):
            if e - s >= 0.45 + 2 * quantum:
                assert any(
                    s - quantum <= w.start <= s + quantum + 1e-9 for w in windows
                ), (s, e)


class TestFixedOffset:
    def test_shared_gap_is_found(self):
        flows = [carved_flow(0.0) for _ in range(3)]
        finding = mfa_fixed_offset(flows, REFERENCE_CFG, clear_prob=0.276)
        assert finding.present
        assert finding.offset_assignment == (0.0, 0.0, 0.0)
        assert finding.configurations_searched == 1
        assert finding.fp_bound_at_k == pytest.approx(0.276**3, rel=1e-12)
        assert_window_sound(finding, flows, REFERENCE_CFG)

    def test_exact_mode_widens_the_window(self):
        flows = [carved_flow(0.0) for _ in range(3)]
        snapped = mfa_fixed_offset(flows, REFERENCE_CFG, clear_prob=0.276)
        exact = mfa_fixed_offset(flows, REFERENCE_CFG, exact=True, clear_prob=0.276)
        assert exact.present
        s_lo, s_len = snapped.matched_window
        e_lo, e_len = exact.matched_window
        assert e_lo <= s_lo + 1e-12
        assert e_lo + e_len >= s_lo + s_len - 1e-12
        assert_window_sound(exact, flows, REFERENCE_CFG)

    def test_misaligned_gaps_are_not_common(self):
        flows = [carved_flow(0.0), carved_flow(0.45), carved_flow(0.45)]
        finding = mfa_fixed_offset(flows, REFERENCE_CFG, clear_prob=0.276)
        assert not finding.present
        assert finding.matched_window is None
        assert finding.offset_assignment is None

    def test_single_flow_reduces_to_window_search(self):
        flow = carved_flow(0.0)
        finding = mfa_fixed_offset([flow], REFERENCE_CFG, clear_prob=0.276)
        windows = find_clear_windows(flow, REFERENCE_CFG.min_length, REFERENCE_CFG.quantum)
        assert finding.present
        assert finding.matched_window == (windows[0].start, windows[0].length)

    def test_estimated_clear_probability_feeds_the_bound(self):
        flows = [generate_flow(PoissonModel(3.0), 10.0, seed=900 + i) for i in range(4)]
        finding = mfa_fixed_offset(flows, REFERENCE_CFG)
        p_hat = sum(
            fm.estimate_clear_probability(f, 0.45, REFERENCE_CFG.quantum) for f in flows
        ) / len(flows)
        assert finding.fp_bound_at_k == pytest.approx(
            fp_bound(4, p_hat, 1).clamped, rel=1e-12
        )

    def test_rejects_empty_flow_list(self):
        with pytest.raises(ValueError):
            mfa_fixed_offset([], REFERENCE_CFG)

    def test_reference_false_positive_rate_stays_below_bound(self):
        """Unwatermarked traffic: measured hit rate vs the analytic ceiling.

        Ten flows calibrated to a 0.33 clear probability; each spans a
        single interval so one alignment is checked per trial.
        """
        lam = poisson_rate_for_clear_probability(0.33, 0.35)
        cfg = AttackConfig(T=0.35, delta=0.35 / 40, o_max=0.0, epsilon=1e-3)
        bound = fp_bound(10, 0.33, 1).clamped
        trials = 3000
        hits = 0
        for trial in range(trials):
            flows = [
                generate_flow(PoissonModel(lam), 0.35, derive_seed(2, "ref-mc", trial, i))
                for i in range(10)
            ]
            hits += mfa_fixed_offset(flows, cfg, clear_prob=0.33).present
        rate = hits / trials
        sigma = math.sqrt(bound * (1.0 - bound) / trials)
        assert rate <= bound + 3 * sigma


class TestVariedOffset:
    def test_recovers_planted_offsets(self):
        flows = [carved_flow(o) for o in (0.0, 0.45, 0.45)]
        finding = mfa_varied_offset_exhaustive(flows, REFERENCE_CFG, clear_prob=0.276)
        assert finding.present
        assert finding.offset_assignment == (0.0, 0.45, 0.45)
        # first hit is the 4th assignment in lexicographic order
        assert finding.configurations_searched == 4
        assert finding.fp_bound_at_k == pytest.approx(
            fp_bound(3, 0.276, 2).clamped, rel=1e-12
        )
        assert_window_sound(finding, flows, REFERENCE_CFG)

    def test_zero_offset_spread_equals_fixed_attack(self):
        cfg = AttackConfig(T=0.9, delta=0.45, o_max=0.0, epsilon=1e-5)
        flows = [carved_flow(0.0) for _ in range(3)]
        fixed = mfa_fixed_offset(flows, cfg, clear_prob=0.276)
        varied = mfa_varied_offset_exhaustive(flows, cfg, clear_prob=0.276)
        assert varied.present == fixed.present
        assert varied.matched_window == fixed.matched_window
        assert varied.offset_assignment == fixed.offset_assignment
        assert varied.fp_bound_at_k == fixed.fp_bound_at_k

    def test_search_space_cap(self):
        from flowmark.mfa import EXHAUSTIVE_CAP

        cfg = AttackConfig(T=0.9, delta=0.45, o_max=1.8, epsilon=1e-5)
        flows = [Flow(timestamps=[1.0], duration=2.8) for _ in range(10)]
        assert offset_multiplier(cfg.o_max, cfg.delta) ** 10 > EXHAUSTIVE_CAP
        with pytest.raises(SearchSpaceTooLarge):
            mfa_varied_offset_exhaustive(flows, cfg)

    def test_bnb_has_no_cap(self):
        cfg = AttackConfig(T=0.9, delta=0.45, o_max=1.8, epsilon=1e-5)
        flows = [Flow(timestamps=np.arange(0.1, 2.8, 0.1), duration=2.8) for _ in range(10)]
        finding = mfa_varied_offset_bnb(flows, cfg, clear_prob=0.276)
        assert not finding.present
        # dense flows die at the first flow: one probe per first-level offset
        assert finding.configurations_searched == 4

    def test_more_flows_never_create_a_hit(self):
        base = [carved_flow(0.0), carved_flow(0.45)]
        present_two = mfa_varied_offset_bnb(base, REFERENCE_CFG, clear_prob=0.276).present
        extended = base + [Flow(np.arange(0.05, 3.6, 0.05), duration=3.6)]
        present_three = mfa_varied_offset_bnb(extended, REFERENCE_CFG, clear_prob=0.276).present
        assert present_two or not present_three
        assert not present_three


class TestBranchAndBoundAgreesWithExhaustive:
    @pytest.mark.parametrize("idx", range(150))
    def test_identical_verdicts_on_random_instances(self, idx):
        seed = derive_seed(0, "bnb-oracle", idx)
        rng = random.Random(seed)
        k = rng.randint(1, 4)
        T = rng.uniform(0.3, 1.2)
        delta = T / rng.choice([2, 3, 4])
        mult = rng.randint(1, 4)
        o_max = mult * delta * rng.uniform(0.5, 1.0)
        cfg = AttackConfig(T=T, delta=delta, o_max=o_max, epsilon=1e-3)
        lam = rng.uniform(0.5, 6.0)
        dur = o_max + T * rng.uniform(1.0, 4.0)
        watermarked = rng.random() < 0.5
        key = rng.getrandbits(64)
        n = rng.randint(2, 6)
        flows = []
        for i in range(k):
            flow = generate_flow(
                PoissonModel(lam), max(dur, o_max + n * T), derive_seed(seed, "flow", i)
            )
            if watermarked:
                o = rng.uniform(0, o_max)
                params = fm.WatermarkParams(
                    T=T, o=o, o_max=o_max, delta=delta, n=n, key=key, clear_fraction=0.4
                )
                flow = fm.embed(flow, params)
            flows.append(flow)

        ex = mfa_varied_offset_exhaustive(flows, cfg, clear_prob=0.3)
        bb = mfa_varied_offset_bnb(flows, cfg, clear_prob=0.3)
        assert bb.present == ex.present
        assert bb.matched_window == ex.matched_window
        assert bb.offset_assignment == ex.offset_assignment
        assert bb.fp_bound_at_k == ex.fp_bound_at_k
        space = offset_multiplier(o_max, delta) ** k
        assert bb.configurations_searched <= space
        assert ex.configurations_searched <= space
        assert bb.configurations_searched <= ex.configurations_searched
        if ex.present:
            assert_window_sound(ex, flows, cfg)


class TestManifest:
    def test_round_trip_with_comments_and_relative_paths(self, tmp_path):
        flows = [generate_flow(PoissonModel(3.0), 4.0, seed=i) for i in range(3)]
        sub = tmp_path / "data"
        sub.mkdir()
        for i, flow in enumerate(flows):
            fm.write_flow(flow, sub / f"f{i}.txt")
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(
            "# reference ensemble\n"
            "data/f0.txt\n"
            "\n"
            "data/f1.txt\n"
            f"{sub / 'f2.txt'}\n"
        )
        paths = read_manifest(manifest)
        assert [fm.read_flow(p) for p in paths] == flows

    def test_missing_manifest_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_manifest(tmp_path / "none.txt")
