"""Contention-window controllers over a shared DDQN learner.

Three trainers share one replay-buffer Q-learning loop and differ in what
they feed it:

* ``train_morl``       - linear scalarization of fairness and delay; no
                         constraint machinery.
* ``train_primal_dual``- Lagrangian reward baked into each stored
                         transition with the dual variable current at
                         storage time; the dual follows projected ascent on
                         the delay constraint every T0 steps.
* ``train_qasal``      - state augmentation: a dual variable sampled per
                         episode is appended to the state, the constraint
                         term is stored separately per transition, and both
                         enter the regression target as y + v.

At execution time the state-augmented policy runs greedily while the dual
variable is updated online from observed violations, which is what lets one
trained network track a moving constraint pressure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .env import (CoexEnv, LAMBDA_MAX, N_ACTIONS, T0_WINDOW, augment_state)
from .metrics import violation_rate

T0 = T0_WINDOW
ETA_MIN = 0.01
ETA_MAX = 0.2
REPLAY_CAPACITY = 100_000
TARGET_SYNC = 1000


@dataclass
class ReplayTransition:
    s: np.ndarray
    a: int
    r: float
    v: float
    s_next: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring with uniform sampling, stored as flat arrays."""

    def __init__(self, capacity: int = REPLAY_CAPACITY, state_dim: int = 9):
        self.capacity = capacity
        self._s = np.empty((capacity, state_dim), dtype=np.float64)
        self._a = np.empty(capacity, dtype=np.intp)
        self._r = np.empty(capacity, dtype=np.float64)
        self._v = np.empty(capacity, dtype=np.float64)
        self._s2 = np.empty((capacity, state_dim), dtype=np.float64)
        self._size = 0
        self._head = 0

    def __len__(self):
        return self._size

    def push(self, s, a, r, v, s_next):
        i = self._head
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._v[i] = v
        self._s2[i] = s_next
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, i: int) -> ReplayTransition:
        if not 0 <= i < self._size:
            raise IndexError(i)
        return ReplayTransition(self._s[i].copy(), int(self._a[i]),
                                float(self._r[i]), float(self._v[i]),
                                self._s2[i].copy())

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=batch)
        return (self._s[idx], self._a[idx], self._r[idx], self._v[idx],
                self._s2[idx])


@dataclass
class DualController:
    """Dual variables with projected-ascent updates on the delay constraint."""

    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(1))
    lambda_max: float = LAMBDA_MAX
    t0: int = T0
    eta_min: float = ETA_MIN
    eta_max: float = ETA_MAX
    window_d_bar_ms: list = field(default_factory=list)
    window_flags: list = field(default_factory=list)

    def observe(self, d_bar_ms: float, violated: bool):
        self.window_d_bar_ms.append(d_bar_ms)
        self.window_flags.append(bool(violated))

    def window_full(self) -> bool:
        return len(self.window_d_bar_ms) >= self.t0

    def clear_window(self):
        self.window_d_bar_ms.clear()
        self.window_flags.clear()


def adaptive_eta(ctrl: DualController, rho_violation: float) -> float:
    """Dual step size, linear in the epoch's violation rate."""
    if not 0.0 <= rho_violation <= 1.0:
        raise ValueError("violation rate must lie in [0,1]")
    return ctrl.eta_min + (ctrl.eta_max - ctrl.eta_min) * rho_violation


def dual_update(ctrl: DualController, window_d_bar_ms: Sequence[float],
                eta: float, d_th_ms: float) -> float:
    """Projected dual ascent over one epoch window.

    lambda' = clamp(lambda + (eta/T0) * sum((d_bar - D_th)/D_th), 0,
    lambda_max): the multiplier rises while the smoothed delay exceeds the
    threshold and decays under slack.  The per-sample terms are normalized
    by the threshold so step sizes transfer across thresholds.
    """
    if len(window_d_bar_ms) != ctrl.t0:
        raise ValueError(f"window must have exactly {ctrl.t0} samples")
    total = sum((d - d_th_ms) / d_th_ms for d in window_d_bar_ms)
    lam = ctrl.lambdas[0] + (eta / ctrl.t0) * total
    lam = min(max(lam, 0.0), ctrl.lambda_max)
    ctrl.lambdas[0] = lam
    return lam


def violation_term(lam: float, d_bar_ms: float, d_th_ms: float) -> float:
    """Constraint contribution to the training target:
    v = lambda * (D_th - d_bar)/D_th, negative while the delay constraint
    is violated so it drags the target down."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if d_th_ms <= 0:
        raise ValueError("d_th_ms must be positive")
    return lam * (d_th_ms - d_bar_ms) / d_th_ms


def shaped_reward(jfi: float, d_bar_ms: float, d_th_ms: float,
                  beta: float) -> float:
    """Fairness reward minus a penalty for leaving delay budget unused:
    r = JFI - beta * max(0, (D_th - d_bar)/D_th)."""
    if d_th_ms <= 0:
        raise ValueError("d_th_ms must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return jfi - beta * max(0.0, (d_th_ms - d_bar_ms) / d_th_ms)


def scalarized_reward(jfi: float, d_bar_ms: float, d_max_ms: float,
                      alpha: float) -> float:
    """Weighted sum of fairness and normalized delay headroom:
    (1 - alpha) * JFI + alpha * (1 - d_bar/D_max), with d_bar/D_max clamped
    to [0,1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0,1]")
    if d_max_ms <= 0:
        raise ValueError("d_max_ms must be positive")
    frac = min(1.0, max(0.0, d_bar_ms / d_max_ms))
    return (1.0 - alpha) * jfi + alpha * (1.0 - frac)


def default_beta(d_th_ms: float) -> float:
    """Penalty scale used in the shaped reward, proportional to the delay
    threshold (1.0, 1.5, 2.0 at thresholds of 1, 2, 3 ms)."""
    return 0.5 + 0.5 * d_th_ms


def epsilon_greedy(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """With probability eps a uniform action, otherwise the argmax with
    lowest-index tie-break."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0,1]")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(0, len(q)))
    return int(np.argmax(q))


def epsilon_schedule(episode: int, total_episodes: int, eps_start: float = 1.0,
                     eps_end: float = 0.01, decay_frac: float = 0.8) -> float:
    """Linear decay over the first ``decay_frac`` of episodes, then hold."""
    horizon = max(1.0, decay_frac * total_episodes)
    t = min(1.0, episode / horizon)
    return eps_start + (eps_end - eps_start) * t


def ddqn_target(r: float, s_next: np.ndarray, online: nn.MlpParams,
                target: nn.MlpParams, gamma: float,
                rule: str = "ddqn") -> float:
    """Bootstrap target for one transition.

    ``ddqn`` decouples selection from evaluation (argmax under the online
    network, value under the target network); ``dqn_max`` is the plain max
    over the target network, kept as an ablation flag.
    """
    q_t = nn.forward(target, s_next)
    if rule == "ddqn":
        q_o = nn.forward(online, s_next)
        return float(r + gamma * q_t[int(np.argmax(q_o))])
    if rule == "dqn_max":
        return float(r + gamma * np.max(q_t))
    raise ValueError(f"unknown target rule {rule!r}")


def _batch_targets(r, s_next, online, target, gamma, rule):
    q_t = nn.forward(target, s_next)
    if rule == "ddqn":
        q_o = nn.forward(online, s_next)
        sel = np.argmax(q_o, axis=1)
    elif rule == "dqn_max":
        sel = np.argmax(q_t, axis=1)
    else:
        raise ValueError(f"unknown target rule {rule!r}")
    return r + gamma * q_t[np.arange(len(r)), sel]


@dataclass
class TrainConfig:
    """Hyperparameters of the DDQN loop (defaults are the full-scale
    values; the harness passes desk-scale episode counts)."""

    episodes: int = 10_000
    steps: int = 500
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_frac: float = 0.8
    target_sync: int = TARGET_SYNC
    batch: int = 16
    lr: float = nn.DEFAULT_LR
    buffer_capacity: int = REPLAY_CAPACITY
    d_th_ms: float = 2.0
    d_max_ms: float = 10.0
    beta: Optional[float] = None
    alpha: float = 0.5
    seed: int = 0
    target_rule: str = "ddqn"

    def validate(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0,1]")
        if not 0.01 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("epsilon range must sit inside [0.01, 1.0]")
        if self.batch > self.buffer_capacity:
            raise ValueError("batch must not exceed buffer capacity")
        if self.target_rule not in ("ddqn", "dqn_max"):
            raise ValueError(f"unknown target rule {self.target_rule!r}")
        return self

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text)).validate()

    @property
    def beta_value(self) -> float:
        return default_beta(self.d_th_ms) if self.beta is None else self.beta


@dataclass
class EpisodeRecord:
    episode: int
    mean_loss: float
    mean_reward: float
    mean_v: float
    epsilon: float
    lambda_sample: float


@dataclass
class TrainResult:
    params: nn.MlpParams
    curves: list
    grad_steps: int
    input_dim: int
    replay: "ReplayBuffer" = None


def _train(env: CoexEnv, cfg: TrainConfig, mode: str) -> TrainResult:
    cfg.validate()
    if abs(env.config.d_th_ms - cfg.d_th_ms) > 1e-12:
        raise ValueError("env and training config disagree on d_th_ms")
    augmented = mode == "qasal"
    in_dim = (9 if augmented else 8)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 101)))
    params = nn.q_network_params(in_dim, N_ACTIONS, rng)
    target = nn.copy_params(params)
    opt = nn.adam_init(params, cfg.lr)
    buf = ReplayBuffer(cfg.buffer_capacity, state_dim=in_dim)
    ctrl = DualController() if mode == "primal_dual" else None
    beta = cfg.beta_value
    d_th = cfg.d_th_ms
    grad_steps = 0
    curves = []
    grads_buf = nn.grads_like(params)

    for ep in range(cfg.episodes):
        eps = epsilon_schedule(ep, cfg.episodes, cfg.eps_start, cfg.eps_end,
                               cfg.eps_decay_frac)
        lam = float(rng.uniform(0.0, LAMBDA_MAX)) if augmented else 0.0
        if ctrl is not None:
            ctrl.clear_window()
        s = env.reset()
        if augmented:
            s = augment_state(s, lam)
        losses = 0.0
        rewards = 0.0
        v_sum = 0.0
        n_losses = 0
        for _ in range(cfg.steps):
            a = epsilon_greedy(nn.forward(params, s), eps, rng)
            s2, sig = env.step(a)
            if mode == "qasal":
                r = shaped_reward(sig.jfi, sig.d_bar_pc1_ms, d_th, beta)
                v = violation_term(lam, sig.d_bar_pc1_ms, d_th)
                s2 = augment_state(s2, lam)
            elif mode == "morl":
                r = scalarized_reward(sig.jfi, sig.d_bar_pc1_ms,
                                      cfg.d_max_ms, cfg.alpha)
                v = 0.0
            else:  # primal_dual: penalty folded into the stored reward
                r = sig.jfi + violation_term(float(ctrl.lambdas[0]),
                                             sig.d_bar_pc1_ms, d_th)
                v = 0.0
            buf.push(s, a, r, v, s2)
            rewards += r
            v_sum += v
            if ctrl is not None:
                ctrl.observe(sig.d_bar_pc1_ms, sig.violation)
                if ctrl.window_full():
                    eta = adaptive_eta(ctrl, violation_rate(ctrl.window_flags))
                    dual_update(ctrl, ctrl.window_d_bar_ms, eta, d_th)
                    ctrl.clear_window()
            if len(buf) >= cfg.batch:
                bs, ba, br, bv, bs2 = buf.sample(cfg.batch, rng)
                y = _batch_targets(br, bs2, params, target, cfg.gamma,
                                   cfg.target_rule)
                grads = nn.grad_squared_loss(params, bs, ba, y + bv,
                                             out=grads_buf)
                if not np.isfinite(grads.loss):
                    raise nn.NonFiniteGradientError(
                        f"non-finite loss at episode {ep} (mode={mode})")
                nn.optimizer_step(params, grads, opt)
                grad_steps += 1
                losses += grads.loss
                n_losses += 1
                if grad_steps % cfg.target_sync == 0:
                    target = nn.copy_params(params)
            s = s2
        curves.append(EpisodeRecord(
            episode=ep,
            mean_loss=losses / n_losses if n_losses else 0.0,
            mean_reward=rewards / cfg.steps,
            mean_v=v_sum / cfg.steps,
            epsilon=eps,
            lambda_sample=lam if augmented else
            (float(ctrl.lambdas[0]) if ctrl is not None else 0.0),
        ))
    return TrainResult(params=params, curves=curves, grad_steps=grad_steps,
                       input_dim=in_dim, replay=buf)


def train_qasal(env: CoexEnv, cfg: TrainConfig) -> TrainResult:
    """State-augmented training: per episode a dual variable is sampled
    uniformly on [0, lambda_max], appended to every state, and priced into
    the targets through the stored v terms."""
    return _train(env, cfg, "qasal")


def train_morl(env: CoexEnv, cfg: TrainConfig) -> TrainResult:
    """Scalarized multi-objective training (no constraint machinery)."""
    return _train(env, cfg, "morl")


def train_primal_dual(env: CoexEnv, cfg: TrainConfig) -> TrainResult:
    """Lagrangian training with an online dual variable.

    The penalty is baked into each stored reward at storage time with the
    dual value then current; the dual ascends every T0 steps and carries
    across episodes.  The per-epoch maximization of the Lagrangian is
    approximated by the continuing gradient updates.
    """
    return _train(env, cfg, "primal_dual")


@dataclass
class ExecutionTrace:
    """Per-step evaluation record (arrays indexed by step).

    ``states`` holds the 8 base features observed before each decision
    (the dual variable, when one applies, is in ``lambdas``).
    """

    actions: np.ndarray
    states: np.ndarray
    jfi: np.ndarray
    d_bar_pc1_ms: np.ndarray
    avg_delay_pc1_ms: np.ndarray
    violations: np.ndarray
    lambdas: np.ndarray
    airtime_pc1: np.ndarray
    collision_rate: np.ndarray


def _empty_trace(steps):
    return ExecutionTrace(
        actions=np.zeros(steps, dtype=np.intp),
        states=np.zeros((steps, 8)),
        jfi=np.zeros(steps),
        d_bar_pc1_ms=np.zeros(steps),
        avg_delay_pc1_ms=np.zeros(steps),
        violations=np.zeros(steps, dtype=bool),
        lambdas=np.zeros(steps),
        airtime_pc1=np.zeros(steps),
        collision_rate=np.zeros(steps),
    )


def execute_qasal(env: CoexEnv, params: nn.MlpParams, ctrl: DualController,
                  steps: int, d_th_ms: Optional[float] = None) -> ExecutionTrace:
    """Greedy execution of a state-augmented policy with online dual
    updates.

    The dual variable is visible to the policy through the augmented state
    and every T0 steps takes a projected ascent step whose rate follows the
    epoch's violation rate.  Pass a fresh DualController (lambda = 0) at
    the start of an execution run; passing it back in continues the run
    across environment episodes with the dual state carried over.
    """
    d_th = env.config.d_th_ms if d_th_ms is None else d_th_ms
    ctrl.clear_window()
    trace = _empty_trace(steps)
    s = env.reset()
    for t in range(steps):
        lam = float(ctrl.lambdas[0])
        trace.states[t] = s
        q = nn.forward(params, augment_state(s, lam, ctrl.lambda_max))
        a = int(np.argmax(q))
        s, sig = env.step(a)
        ctrl.observe(sig.d_bar_pc1_ms, sig.violation)
        if (t + 1) % ctrl.t0 == 0:
            eta = adaptive_eta(ctrl, violation_rate(ctrl.window_flags))
            dual_update(ctrl, ctrl.window_d_bar_ms, eta, d_th)
            ctrl.clear_window()
        trace.actions[t] = a
        trace.lambdas[t] = lam
        trace.jfi[t] = sig.jfi
        trace.d_bar_pc1_ms[t] = sig.d_bar_pc1_ms
        trace.avg_delay_pc1_ms[t] = sig.metrics.avg_delay_pc1_ms
        trace.violations[t] = sig.violation
        trace.airtime_pc1[t] = sig.metrics.airtime_pc1
        trace.collision_rate[t] = sig.metrics.collision_rate
    return trace


def evaluate_policy(env: CoexEnv, steps: int,
                    policy: Callable[[np.ndarray], int]) -> ExecutionTrace:
    """Greedy rollout of an arbitrary state-to-action policy (used for the
    non-augmented controllers and the fixed baseline)."""
    trace = _empty_trace(steps)
    s = env.reset()
    for t in range(steps):
        trace.states[t] = s
        a = int(policy(s))
        s, sig = env.step(a)
        trace.actions[t] = a
        trace.jfi[t] = sig.jfi
        trace.d_bar_pc1_ms[t] = sig.d_bar_pc1_ms
        trace.avg_delay_pc1_ms[t] = sig.metrics.avg_delay_pc1_ms
        trace.violations[t] = sig.violation
        trace.airtime_pc1[t] = sig.metrics.airtime_pc1
        trace.collision_rate[t] = sig.metrics.collision_rate
    return trace


def greedy_policy(params: nn.MlpParams) -> Callable[[np.ndarray], int]:
    def act(s: np.ndarray) -> int:
        return int(np.argmax(nn.forward(params, s)))
    return act
