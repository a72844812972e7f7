"""Performance functions over channel timeline slices.

Medium access delay is the gap between the end of a node's successful
transmission and the start of its next one.  The smoothed delay averages the
last five samples, which damps the 8 ms quantization steps that low-priority
occupancies impose on the raw samples.  Fairness is Jain's index over the
successful airtime of the PC1 class versus the PC3 class, measured on a
trailing 50 ms window so it reacts within a few environment steps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .macsim import (COLLISION, IDLE, SUCCESS, ChannelTimeline, PriorityClass,
                     TransmitterSpec)

SMOOTH_WINDOW = 5
AIRTIME_WINDOW_US = 50_000
SHORT_HISTORY = 5


@dataclass
class DelayTracker:
    """Per-node medium access delay accumulator."""

    node_id: int
    delay_samples_us: list = field(default_factory=list)
    cumulative_delay_us: int = 0
    smooth_window: deque = field(default_factory=lambda: deque(maxlen=SMOOTH_WINDOW))
    smoothed_us: float = 0.0
    last_success_end_us: Optional[int] = None

    @property
    def avg_delay_us(self) -> float:
        n = len(self.delay_samples_us)
        return self.cumulative_delay_us / n if n else 0.0

    def _push(self, sample_us: int) -> None:
        self.delay_samples_us.append(sample_us)
        self.cumulative_delay_us += sample_us
        self.smooth_window.append(sample_us)
        self.smoothed_us = sum(self.smooth_window) / len(self.smooth_window)


def update_delays(tracker: DelayTracker, timeline: ChannelTimeline) -> list:
    """Scan a timeline slice for the node's successes and append the new
    delay samples.

    A success that begins exactly where the node's previous one ended and
    opens a slice marked ``continued_head`` is the same occupancy cut at a
    window boundary, so it extends the previous success instead of yielding
    a phantom zero-delay sample.  The very first success produces no sample.
    """
    new = []
    for pos, iv in enumerate(timeline.intervals):
        if iv.kind != SUCCESS or iv.tx_ids[0] != tracker.node_id:
            continue
        if (pos == 0 and timeline.continued_head
                and tracker.last_success_end_us == iv.start_us):
            tracker.last_success_end_us = iv.end_us
            continue
        if tracker.last_success_end_us is not None:
            sample = iv.start_us - tracker.last_success_end_us
            tracker._push(sample)
            new.append(sample)
        tracker.last_success_end_us = iv.end_us
    return new


def jain_fairness(airtime_pc1: float, airtime_pc3: float) -> float:
    """Jain's index over the two class airtimes, in [0.5, 1].

    Both-zero input returns 1 by convention: there is no inequity between
    two empty allocations.
    """
    if airtime_pc1 < 0 or airtime_pc3 < 0:
        raise ValueError("airtimes must be nonnegative")
    peak = max(airtime_pc1, airtime_pc3)
    if peak == 0:
        return 1.0
    # Scale-invariant, so normalize by the peak to dodge under/overflow of
    # the squares at extreme magnitudes.
    a = airtime_pc1 / peak
    b = airtime_pc3 / peak
    return (a + b) ** 2 / (2.0 * (a * a + b * b))


def violation_rate(flags: Sequence[bool]) -> float:
    """Fraction of true flags."""
    if len(flags) == 0:
        raise ValueError("flags must be nonempty")
    return sum(bool(f) for f in flags) / len(flags)


@dataclass
class StepMetrics:
    """Signals extracted from one environment step."""

    jfi: float
    d_bar_pc1_ms: float
    avg_delay_pc1_ms: float
    collision_rate: float
    busy_airtime_ratio: float
    airtime_pc1: float
    airtime_pc3: float
    violation: bool


STEP_METRICS_COLUMNS = ("jfi", "d_bar_pc1_ms", "avg_delay_pc1_ms",
                        "collision_rate", "busy_airtime_ratio", "violation")


def step_metrics_row(m: StepMetrics) -> tuple:
    return (m.jfi, m.d_bar_pc1_ms, m.avg_delay_pc1_ms, m.collision_rate,
            m.busy_airtime_ratio, int(m.violation))


class MetricsState:
    """Holds the per-node delay trackers and the trailing airtime window.

    One instance belongs to one environment; feed it the timeline slice of
    every step in order.
    """

    def __init__(self, specs: Iterable[TransmitterSpec],
                 airtime_window_us: int = AIRTIME_WINDOW_US):
        self.pclass = {s.id: s.pclass for s in specs}
        self.pc1_ids = sorted(i for i, c in self.pclass.items()
                              if c is PriorityClass.PC1)
        self.trackers = {i: DelayTracker(i) for i in self.pc1_ids}
        self.airtime_window_us = airtime_window_us
        self._spans = deque()   # (start, end, pclass) of success intervals
        self._origin: Optional[int] = None

    def _record_airtime(self, timeline: ChannelTimeline) -> None:
        # Adjacent cut pieces of one occupancy sum to the same overlap, so
        # no continuation merging is needed here.
        for iv in timeline.intervals:
            if iv.kind == SUCCESS:
                self._spans.append(
                    (iv.start_us, iv.end_us, self.pclass[iv.tx_ids[0]]))

    def windowed_airtime(self, at_us: int) -> tuple:
        """(pc1_fraction, pc3_fraction) of successful airtime over the
        trailing window ending at ``at_us``."""
        lo = max(self._origin or 0, at_us - self.airtime_window_us)
        while self._spans and self._spans[0][1] <= lo:
            self._spans.popleft()
        span = at_us - lo
        if span <= 0:
            return 0.0, 0.0
        acc = {PriorityClass.PC1: 0, PriorityClass.PC3: 0}
        for start, end, cls in self._spans:
            acc[cls] += max(0, min(end, at_us) - max(start, lo))
        return acc[PriorityClass.PC1] / span, acc[PriorityClass.PC3] / span


def step_metrics(timeline: ChannelTimeline, state: MetricsState,
                 d_th_ms: float) -> StepMetrics:
    """Fold one step's timeline into the running metrics state and report
    the step's signals."""
    if state._origin is None:
        state._origin = timeline.start_us

    for tracker in state.trackers.values():
        update_delays(tracker, timeline)
    state._record_airtime(timeline)

    step_len = timeline.duration_us()
    idle_us = sum(iv.length_us for iv in timeline.intervals if iv.kind == IDLE)
    busy_ratio = 1.0 - idle_us / step_len if step_len else 0.0

    # Attempt-based collision rate for the PC1 class; a transmission that
    # merely continues into this step is not a new attempt.
    attempts = 0
    collided = 0
    for pos, iv in enumerate(timeline.intervals):
        if pos == 0 and timeline.continued_head:
            continue
        if iv.kind == SUCCESS and state.pclass[iv.tx_ids[0]] is PriorityClass.PC1:
            attempts += 1
        elif iv.kind == COLLISION and any(
                state.pclass[t] is PriorityClass.PC1 for t in iv.tx_ids):
            attempts += 1
            collided += 1
    coll_rate = collided / attempts if attempts else 0.0

    a1, a3 = state.windowed_airtime(timeline.end_us)
    jfi = jain_fairness(a1, a3)

    if state.trackers:
        d_bar_ms = sum(t.smoothed_us for t in state.trackers.values()) \
            / len(state.trackers) / 1000.0
        avg_ms = sum(t.avg_delay_us for t in state.trackers.values()) \
            / len(state.trackers) / 1000.0
    else:
        d_bar_ms = avg_ms = 0.0

    return StepMetrics(
        jfi=jfi,
        d_bar_pc1_ms=d_bar_ms,
        avg_delay_pc1_ms=avg_ms,
        collision_rate=coll_rate,
        busy_airtime_ratio=busy_ratio,
        airtime_pc1=a1,
        airtime_pc3=a3,
        violation=d_bar_ms > d_th_ms,
    )
