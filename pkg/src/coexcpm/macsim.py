"""Deterministic discrete-event simulation of NR-U / Wi-Fi channel contention.

Saturated transmitters of two priority classes (PC1 high priority, PC3 low
priority) share a single unlicensed channel.  Wi-Fi nodes follow EDCA-style
CSMA/CA: after every busy period they defer for a class-specific duration and
then count down a random backoff in 9 us contention slots.  NR-U nodes follow
the equivalent listen-before-talk procedure, with one extra twist: their
transmissions may only begin on a synchronization-grid boundary, so a winning
NR-U node blocks the channel with a reservation signal until the next
boundary.

The clock is integer microseconds throughout; there is no floating-point
time, so a given seed and call sequence reproduces the channel timeline
bit for bit.  Backoff randomness comes from one RNG substream per
transmitter, derived by stable hashing of (master seed, transmitter id), so
adding transmitters never perturbs the streams of existing ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

SLOT_US = 9
NRU_SLOT_GRID_US = 500

IDLE = "idle"
RESERVATION = "reservation"
SUCCESS = "success"
COLLISION = "collision"


class Network(Enum):
    NRU = "nru"
    WIFI = "wifi"


class PriorityClass(Enum):
    PC1 = 1
    PC3 = 3


# Class timing conventions (the contention slot is 9 us; defer is
# 16 us + 1 slot for PC1 and 16 us + 3 slots for PC3; occupancy is the
# per-grant channel holding time).
DEFER_US = {PriorityClass.PC1: 25, PriorityClass.PC3: 43}
OCCUPANCY_US = {PriorityClass.PC1: 2000, PriorityClass.PC3: 8000}
CW_MIN = {PriorityClass.PC1: 3, PriorityClass.PC3: 15}
DEFAULT_CW_MAX = {PriorityClass.PC1: 7, PriorityClass.PC3: 127}
MAX_BACKOFF_STAGE = 6


@dataclass
class TransmitterSpec:
    """Static MAC configuration of one contending node.

    ``cw_max`` is the knob the learning controllers drive at run time;
    ``cw_min`` is clamped so 0 <= cw_min <= cw_max always holds.
    """

    id: int
    network: Network
    pclass: PriorityClass
    cw_min: int
    cw_max: int
    defer_us: int
    occupancy_us: int
    max_backoff_stage: int = MAX_BACKOFF_STAGE

    def __post_init__(self):
        if self.cw_min < 0 or self.cw_max < 0:
            raise ValueError("contention windows must be nonnegative")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        if self.occupancy_us <= 0:
            raise ValueError("occupancy_us must be positive")
        if self.defer_us < 0:
            raise ValueError("defer_us must be nonnegative")


def default_spec(tx_id: int, network: Network, pclass: PriorityClass,
                 cw_max: Optional[int] = None) -> TransmitterSpec:
    """Build a spec with the class-default timing and window parameters."""
    if cw_max is None:
        cw_max = DEFAULT_CW_MAX[pclass]
    return TransmitterSpec(
        id=tx_id,
        network=network,
        pclass=pclass,
        cw_min=min(CW_MIN[pclass], cw_max),
        cw_max=cw_max,
        defer_us=DEFER_US[pclass],
        occupancy_us=OCCUPANCY_US[pclass],
    )


@dataclass
class TransmitterState:
    """Live backoff state and per-node statistics."""

    backoff_counter: int = 0
    backoff_stage: int = 0
    successes: int = 0
    collisions: int = 0
    success_airtime_us: int = 0
    last_success_end_us: Optional[int] = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)


def draw_backoff(state: TransmitterState, spec: TransmitterSpec) -> int:
    """Draw a fresh backoff counter and store it on ``state``.

    The window doubles with the backoff stage and is clamped at cw_max:
    CW = min((cw_min + 1) * 2**stage - 1, cw_max).  The draw is uniform on
    {0, ..., CW}; cw_max = 0 legally yields 0.
    """
    cw = min((spec.cw_min + 1) * (1 << state.backoff_stage) - 1, spec.cw_max)
    value = int(state.rng.integers(0, cw + 1)) if cw > 0 else 0
    state.backoff_counter = value
    return value


def reservation_padding(now_us: int, grid_us: int) -> int:
    """Microseconds of reservation signal from ``now_us`` to the next grid
    boundary (0 when already on a boundary)."""
    if grid_us <= 0:
        raise ValueError("grid_us must be positive")
    return (grid_us - now_us % grid_us) % grid_us


@dataclass(frozen=True)
class Interval:
    start_us: int
    end_us: int
    kind: str
    tx_ids: tuple = ()

    @property
    def length_us(self) -> int:
        return self.end_us - self.start_us


@dataclass
class ChannelTimeline:
    """Contiguous labeled intervals covering one simulated span.

    ``continued_head`` is True when the first interval continues an
    occupancy that began in an earlier slice (the engine cuts ongoing
    transmissions at advance() boundaries so each slice partitions its own
    span exactly).
    """

    intervals: list
    continued_head: bool = False

    @property
    def start_us(self) -> int:
        return self.intervals[0].start_us

    @property
    def end_us(self) -> int:
        return self.intervals[-1].end_us

    def duration_us(self) -> int:
        return self.end_us - self.start_us if self.intervals else 0


def timeline_csv_rows(timeline: ChannelTimeline) -> list:
    """Debug dump: one (start_us, end_us, kind, tx_ids) row per interval."""
    return [(iv.start_us, iv.end_us, iv.kind, ";".join(str(t) for t in iv.tx_ids))
            for iv in timeline.intervals]


@dataclass
class SimClock:
    now_us: int = 0
    slot_us: int = SLOT_US
    nru_slot_grid_us: int = NRU_SLOT_GRID_US


class _Segment:
    """A scheduled busy interval awaiting emission (may be cut by windows)."""

    __slots__ = ("start", "end", "kind", "tx_ids")

    def __init__(self, start, end, kind, tx_ids):
        self.start = start
        self.end = end
        self.kind = kind
        self.tx_ids = tx_ids


class MacSimulator:
    """Single-channel contention engine over a set of saturated transmitters.

    One instance is single-threaded; independent instances are safe to run
    in parallel.  advance() may be called repeatedly; state (backoff
    counters, partially emitted occupancies, defer progress) carries over
    so the produced timeline is identical however the span is sliced.
    """

    def __init__(self, specs: Sequence[TransmitterSpec], seed=0,
                 slot_us: int = SLOT_US, nru_slot_grid_us: int = NRU_SLOT_GRID_US):
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise ValueError("transmitter ids must be unique")
        self.clock = SimClock(0, slot_us, nru_slot_grid_us)
        self.specs = {s.id: s for s in specs}
        self.states = {}
        self._base_cw_min = {s.id: s.cw_min for s in specs}
        self._seed = seed
        self._order = sorted(ids)
        for tx_id in self._order:
            rng = np.random.default_rng(np.random.SeedSequence(self._entropy(tx_id)))
            st = TransmitterState(rng=rng)
            self.states[tx_id] = st
            draw_backoff(st, self.specs[tx_id])

        # Cached per-transmitter arrays for the event search (kept in sync
        # with specs/states; _refresh rebuilds them from the dicts).
        self._ids = np.array(self._order, dtype=np.int64)
        self._idx = {tx_id: i for i, tx_id in enumerate(self._order)}
        self._refresh_static()

        self._idle_since = 0            # when the channel last went idle
        self._busy_until = 0            # end of the occupancy being emitted
        self._emit_queue: list = []     # scheduled _Segments, in time order
        self._pending: list = []        # (tx_id, won) outcomes awaiting redraw

    def _entropy(self, tx_id: int):
        seed = self._seed
        if isinstance(seed, (tuple, list)):
            return tuple(seed) + (tx_id,)
        return (int(seed), tx_id)

    def _refresh_static(self):
        specs = [self.specs[i] for i in self._order]
        self._defer = np.array([s.defer_us for s in specs], dtype=np.int64)
        self._occ = np.array([s.occupancy_us for s in specs], dtype=np.int64)
        self._is_nru = np.array([s.network is Network.NRU for s in specs], dtype=bool)

    @property
    def now_us(self) -> int:
        return self.clock.now_us

    def state(self, tx_id: int) -> TransmitterState:
        return self.states[tx_id]

    def set_cw_limits(self, pclass: PriorityClass, cw_max: int) -> None:
        """Apply a CPM decision: every transmitter of ``pclass`` adopts the
        new cw_max at its next backoff redraw.  In-flight counters are not
        touched.  cw_min is re-derived as min(original cw_min, cw_max) so a
        later larger cw_max restores the class default."""
        if cw_max < 0:
            raise ValueError("cw_max must be nonnegative")
        for tx_id, spec in self.specs.items():
            if spec.pclass is pclass:
                spec.cw_max = cw_max
                spec.cw_min = min(self._base_cw_min[tx_id], cw_max)

    def advance(self, duration_us: int) -> ChannelTimeline:
        """Simulate exactly ``duration_us`` of channel time and return the
        labeled timeline slice covering it."""
        if duration_us <= 0:
            raise ValueError("duration_us must be positive")
        now = self.clock.now_us
        t_end = now + duration_us
        continued = self._busy_until > now
        out: list = []

        counters = np.array([self.states[i].backoff_counter for i in self._order],
                            dtype=np.int64)

        while now < t_end:
            if self._emit_queue:
                seg = self._emit_queue[0]
                cut = min(seg.end, t_end)
                out.append(Interval(seg.start, cut, seg.kind, seg.tx_ids))
                if seg.kind == SUCCESS:
                    self.states[seg.tx_ids[0]].success_airtime_us += cut - seg.start
                now = cut
                if cut == seg.end:
                    self._emit_queue.pop(0)
                else:
                    seg.start = cut
                continue

            # Channel idle: settle outcomes of the occupancy that just ended.
            if self._pending:
                for tx_id, won in self._pending:
                    st = self.states[tx_id]
                    st.backoff_stage = 0 if won else min(
                        st.backoff_stage + 1, self.specs[tx_id].max_backoff_stage)
                    draw_backoff(st, self.specs[tx_id])
                    counters[self._idx[tx_id]] = st.backoff_counter
                self._pending = []

            if not self._order:
                out.append(Interval(now, t_end, IDLE))
                now = t_end
                break

            ready = self._idle_since + self._defer
            expiry = ready + counters * self.clock.slot_us
            next_tx = int(expiry.min())
            if next_tx >= t_end:
                out.append(Interval(now, t_end, IDLE))
                now = t_end
                break

            if next_tx > now:
                out.append(Interval(now, next_tx, IDLE))
                now = next_tx

            winners_mask = expiry == next_tx
            winner_ids = [self._order[i] for i in np.flatnonzero(winners_mask)]

            # Losers freeze: bank the whole slots they completed before the
            # channel went busy at next_tx.
            losers = ~winners_mask
            done = (next_tx - ready[losers]) // self.clock.slot_us
            np.clip(done, 0, counters[losers], out=done)
            counters[losers] -= done

            pad = 0
            if any(self.specs[w].network is Network.NRU for w in winner_ids):
                pad = reservation_padding(next_tx, self.clock.nru_slot_grid_us)
            tx_start = next_tx + pad
            occ = max(self.specs[w].occupancy_us for w in winner_ids)
            busy_end = tx_start + occ

            won = len(winner_ids) == 1
            for w in winner_ids:
                st = self.states[w]
                if won:
                    st.successes += 1
                    st.last_success_end_us = busy_end
                else:
                    st.collisions += 1
            self._pending = [(w, won) for w in winner_ids]

            if pad > 0:
                rs_owner = min(w for w in winner_ids
                               if self.specs[w].network is Network.NRU)
                self._emit_queue.append(
                    _Segment(next_tx, tx_start, RESERVATION, (rs_owner,)))
            kind = SUCCESS if won else COLLISION
            self._emit_queue.append(
                _Segment(tx_start, busy_end, kind, tuple(winner_ids)))
            self._idle_since = busy_end
            self._busy_until = busy_end

        for i, tx_id in enumerate(self._order):
            self.states[tx_id].backoff_counter = int(counters[i])
        self.clock.now_us = t_end
        return ChannelTimeline(out, continued_head=continued)
