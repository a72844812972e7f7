"""Discrete-time control environment over the contention simulator.

Each step applies one scalar decision a in {0..6} as contention-window caps
for both priority classes (CW_max = 2**(a+b) - 1 with b = 0 for PC1 and
b = 4 for PC3), advances the channel by 2.5 ms, and reports an
8-feature state plus the raw fairness / delay signals the controllers
optimize.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .macsim import MacSimulator, Network, PriorityClass, default_spec
from .metrics import MetricsState, StepMetrics, step_metrics

N_ACTIONS = 7
ACTION_BASE = {PriorityClass.PC1: 0, PriorityClass.PC3: 4}
STATE_DIM = 8
T0_WINDOW = 5
LAMBDA_MAX = 5.0
DEFAULT_ACTION = 3


def action_to_cw(a: int, pclass: PriorityClass) -> int:
    """CW_max = 2**(a + b) - 1 with b = 0 (PC1) or 4 (PC3)."""
    if not 0 <= a < N_ACTIONS:
        raise ValueError(f"action {a} outside {{0..{N_ACTIONS - 1}}}")
    return (1 << (a + ACTION_BASE[pclass])) - 1


@dataclass
class EnvConfig:
    """Scenario knobs.  Times suffixed _ms are milliseconds; the step
    length and the underlying clock are integer microseconds."""

    d_th_ms: float = 2.0
    d_max_ms: float = 10.0
    n_pc3_nru: int = 13
    n_pc3_wifi: int = 12
    n_pc1: int = 1
    step_us: int = 2500
    seed: int = 0

    def validate(self):
        if self.step_us <= 0:
            raise ValueError("step_us must be positive")
        if self.d_th_ms <= 0:
            raise ValueError("d_th_ms must be positive")
        if self.d_max_ms < self.d_th_ms:
            raise ValueError("d_max_ms must be >= d_th_ms")
        if min(self.n_pc3_nru, self.n_pc3_wifi, self.n_pc1) < 0:
            raise ValueError("transmitter counts must be nonnegative")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnvConfig":
        return cls(**json.loads(text)).validate()


@dataclass
class StepSignals:
    jfi: float
    d_bar_pc1_ms: float
    violation: bool
    metrics: StepMetrics


def featurize(history: Sequence[StepMetrics], d_max_ms: float,
              t0_window: int = T0_WINDOW, lam: Optional[float] = None,
              lam_max: float = LAMBDA_MAX) -> np.ndarray:
    """Build the state vector from the most recent step metrics.

    Features (all clamped to [0,1] except the trend, which lives in
    [-1,1]): normalized average delay, normalized smoothed delay, PC1
    collision rate, busy-airtime ratio, violation rate over the last
    ``t0_window`` steps, fairness, smoothed-delay trend, and short-horizon
    mean collision rate.  When ``lam`` is given, lam/lam_max is appended.
    """
    if not history:
        raise ValueError("featurize needs at least one completed step")
    m = history[-1]
    recent = history[-t0_window:]
    trend = 0.0
    if len(history) >= 2:
        trend = (m.d_bar_pc1_ms - history[-2].d_bar_pc1_ms) / d_max_ms
    feats = [
        min(1.0, max(0.0, m.avg_delay_pc1_ms / d_max_ms)),
        min(1.0, max(0.0, m.d_bar_pc1_ms / d_max_ms)),
        min(1.0, max(0.0, m.collision_rate)),
        min(1.0, max(0.0, m.busy_airtime_ratio)),
        sum(r.violation for r in recent) / len(recent),
        m.jfi,
        min(1.0, max(-1.0, trend)),
        sum(r.collision_rate for r in recent) / len(recent),
    ]
    if lam is not None:
        feats.append(min(1.0, max(0.0, lam / lam_max)))
    return np.asarray(feats, dtype=np.float64)


def augment_state(base: np.ndarray, lam: float,
                  lam_max: float = LAMBDA_MAX) -> np.ndarray:
    """Append the normalized dual variable to a base state vector."""
    return np.concatenate([base, [min(1.0, max(0.0, lam / lam_max))]])


class CoexEnv:
    """One PC1 transmitter plus a PC3 population contending on one channel.

    reset() builds a fresh simulator seeded from (config.seed, episode
    index), so repeated episodes differ deterministically and two
    environments with the same config produce identical trajectories.
    """

    def __init__(self, config: EnvConfig):
        self.config = config.validate()
        self._episode = 0
        self._sim: Optional[MacSimulator] = None
        self._mstate: Optional[MetricsState] = None
        self._history: deque = deque(maxlen=T0_WINDOW + 1)
        self.step_count = 0

    def _build_specs(self):
        specs = []
        tx_id = 0
        for _ in range(self.config.n_pc1):
            specs.append(default_spec(tx_id, Network.NRU, PriorityClass.PC1))
            tx_id += 1
        for _ in range(self.config.n_pc3_nru):
            specs.append(default_spec(tx_id, Network.NRU, PriorityClass.PC3))
            tx_id += 1
        for _ in range(self.config.n_pc3_wifi):
            specs.append(default_spec(tx_id, Network.WIFI, PriorityClass.PC3))
            tx_id += 1
        return specs

    def reset(self) -> np.ndarray:
        specs = self._build_specs()
        self._sim = MacSimulator(specs, seed=(self.config.seed, self._episode))
        self._mstate = MetricsState(specs)
        self._history.clear()
        self.step_count = 0
        self._episode += 1
        return self.initial_state()

    def initial_state(self) -> np.ndarray:
        # No traffic observed yet: zeros except the fairness convention
        # for two empty allocations.
        s = np.zeros(STATE_DIM, dtype=np.float64)
        s[5] = 1.0
        return s

    def step(self, action: int):
        """Apply the decision, advance one step, and return
        (state, StepSignals)."""
        if self._sim is None:
            raise RuntimeError("reset() must be called before step()")
        self._sim.set_cw_limits(PriorityClass.PC1,
                                action_to_cw(action, PriorityClass.PC1))
        self._sim.set_cw_limits(PriorityClass.PC3,
                                action_to_cw(action, PriorityClass.PC3))
        timeline = self._sim.advance(self.config.step_us)
        m = step_metrics(timeline, self._mstate, self.config.d_th_ms)
        self._history.append(m)
        self.step_count += 1
        state = featurize(list(self._history), self.config.d_max_ms)
        return state, StepSignals(jfi=m.jfi, d_bar_pc1_ms=m.d_bar_pc1_ms,
                                  violation=m.violation, metrics=m)

    @property
    def simulator(self) -> MacSimulator:
        if self._sim is None:
            raise RuntimeError("reset() must be called first")
        return self._sim
