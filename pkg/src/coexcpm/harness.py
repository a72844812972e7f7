"""Experiment orchestration: scenario construction, training/evaluation
cells, seed derivation, summary statistics, and CSV/checkpoint output.

A job is a grid of cells, one per (PC3 sweep point x seed).  Every cell
derives its own master seed by stable hashing, trains a controller (or
loads its checkpoint when one exists), evaluates it over fresh episodes,
and contributes one results row.  Output files carry no timestamps, so a
rerun of the same configuration is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import agents, nn
from .env import CoexEnv, EnvConfig

ALGORITHMS = ("qasal", "primal_dual", "morl", "no_learning")
SCENARIOS = ("S1", "S2", "custom")
S2_DEFAULT_SWEEP = [0, 10, 20, 30, 40, 50]
S1_PC3_TOTAL = 25
NO_LEARNING_ACTION = 3

RESULTS_COLUMNS = ("version", "scenario", "algorithm", "d_th_ms", "alpha",
                   "pc3_total", "seed", "avg_delay_pc1_ms",
                   "p95_smoothed_delay_ms", "mean_jfi", "collision_rate",
                   "airtime_efficiency", "violation_rate")
CURVES_COLUMNS = ("version", "cell", "episode", "mean_loss", "mean_reward",
                  "mean_v", "epsilon", "lambda_sample")
RESULTS_VERSION = 1


class CellError(RuntimeError):
    """A failed cell, carrying enough identity to report it."""

    def __init__(self, cell: str, reason: str):
        super().__init__(f"cell {cell}: {reason}")
        self.cell = cell
        self.reason = reason


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if len(samples) == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < p <= 100.0:
        raise ValueError("p must lie in (0, 100]")
    ordered = sorted(samples)
    rank = int(np.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]


def no_learning_policy() -> int:
    """The fixed baseline decision: a = 3, i.e. CW_max 7 for PC1 and 127
    for PC3, never adapted."""
    return NO_LEARNING_ACTION


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary labels (platform and
    process independent, unlike hash())."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(b"coexcpm:" + text.encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2 ** 63 - 1)


def cell_seed(config_seed: int, sweep_index: int) -> int:
    return stable_seed("cell", config_seed, sweep_index)


def split_population(total: int) -> tuple:
    """Split a PC3 total across networks, NR-U taking the extra node."""
    return (total + 1) // 2, total // 2


@dataclass
class ExperimentConfig:
    """One job: scenario, algorithm, sweep, seeds, and scale knobs.

    Desk-scale defaults (2,000 training / 500 evaluation episodes) keep a
    cell in the minutes range; ``paper_scale`` restores the full-scale
    10,000 / 5,000 episode budgets.
    """

    scenario: str = "S1"
    algorithm: str = "qasal"
    d_th_ms: float = 2.0
    alpha: float = 0.5
    beta: Optional[float] = None
    pc3_totals: Optional[list] = None
    seeds: list = field(default_factory=lambda: [0])
    train_episodes: int = 2000
    eval_episodes: int = 500
    steps: int = 500
    d_max_ms: float = 10.0
    n_pc1: int = 1
    paper_scale: bool = False
    target_rule: str = "ddqn"
    out_dir: str = "runs"
    workers: int = 1

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.scenario == "S1" and self.pc3_totals not in (None, [S1_PC3_TOTAL]):
            raise ValueError("scenario S1 fixes pc3_totals to [25]")
        return self

    def resolved_sweep(self) -> list:
        if self.scenario == "S1":
            return [S1_PC3_TOTAL]
        if self.pc3_totals is not None:
            return list(self.pc3_totals)
        return list(S2_DEFAULT_SWEEP)

    def scale(self) -> tuple:
        if self.paper_scale:
            return 10_000, 5_000
        return self.train_episodes, self.eval_episodes

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text)).validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


@dataclass
class ResultsRow:
    scenario: str
    algorithm: str
    d_th_ms: float
    alpha: float
    pc3_total: int
    seed: int
    avg_delay_pc1_ms: float
    p95_smoothed_delay_ms: float
    mean_jfi: float
    collision_rate: float
    airtime_efficiency: float
    violation_rate: float


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def cell_name(cfg: ExperimentConfig, pc3_total: int, seed: int) -> str:
    if cfg.algorithm == "morl":
        knob = f"alpha{cfg.alpha:g}"
    else:
        knob = f"dth{cfg.d_th_ms:g}"
    return f"{cfg.scenario}_{cfg.algorithm}_{knob}_pc3-{pc3_total}_seed{seed}"


def _env_config(cfg: ExperimentConfig, pc3_total: int, master_seed: int,
                eval_side: bool) -> EnvConfig:
    n_nru, n_wifi = split_population(pc3_total)
    seed = stable_seed("eval-env", master_seed) if eval_side else master_seed
    return EnvConfig(d_th_ms=cfg.d_th_ms, d_max_ms=cfg.d_max_ms,
                     n_pc3_nru=n_nru, n_pc3_wifi=n_wifi, n_pc1=cfg.n_pc1,
                     seed=seed)


def _train_config(cfg: ExperimentConfig, master_seed: int,
                  episodes: int) -> agents.TrainConfig:
    return agents.TrainConfig(
        episodes=episodes, steps=cfg.steps, d_th_ms=cfg.d_th_ms,
        d_max_ms=cfg.d_max_ms, beta=cfg.beta, alpha=cfg.alpha,
        seed=master_seed, target_rule=cfg.target_rule,
    ).validate()


_TRAINERS = {
    "qasal": agents.train_qasal,
    "morl": agents.train_morl,
    "primal_dual": agents.train_primal_dual,
}


def train_cell(cfg: ExperimentConfig, pc3_total: int, sweep_index: int,
               seed: int, ckpt_path: Optional[Path] = None):
    """Train one cell (or load its checkpoint) and return (params, curves).

    ``no_learning`` cells have nothing to train and return (None, [])."""
    if cfg.algorithm == "no_learning":
        return None, []
    master = cell_seed(seed, sweep_index)
    if ckpt_path is not None and Path(ckpt_path).exists():
        params, _ = nn.load_checkpoint(ckpt_path)
        return params, []
    train_eps, _ = cfg.scale()
    env = CoexEnv(_env_config(cfg, pc3_total, master, eval_side=False))
    tcfg = _train_config(cfg, master, train_eps)
    result = _TRAINERS[cfg.algorithm](env, tcfg)
    if ckpt_path is not None:
        Path(ckpt_path).parent.mkdir(parents=True, exist_ok=True)
        nn.save_checkpoint(ckpt_path, result.params, result.grad_steps)
    return result.params, result.curves


def evaluate_cell(cfg: ExperimentConfig, pc3_total: int, sweep_index: int,
                  seed: int, params) -> ResultsRow:
    """Run the evaluation episodes for one cell and aggregate a row."""
    master = cell_seed(seed, sweep_index)
    _, eval_eps = cfg.scale()
    env = CoexEnv(_env_config(cfg, pc3_total, master, eval_side=True))
    traces = []
    if cfg.algorithm == "qasal":
        ctrl = agents.DualController()
        for _ in range(eval_eps):
            traces.append(agents.execute_qasal(env, params, ctrl, cfg.steps))
    elif cfg.algorithm == "no_learning":
        policy = lambda s: no_learning_policy()
        for _ in range(eval_eps):
            traces.append(agents.evaluate_policy(env, cfg.steps, policy))
    else:
        policy = agents.greedy_policy(params)
        for _ in range(eval_eps):
            traces.append(agents.evaluate_policy(env, cfg.steps, policy))

    d_bar = np.concatenate([t.d_bar_pc1_ms for t in traces])
    return ResultsRow(
        scenario=cfg.scenario,
        algorithm=cfg.algorithm,
        d_th_ms=cfg.d_th_ms,
        alpha=cfg.alpha,
        pc3_total=pc3_total,
        seed=master,
        avg_delay_pc1_ms=float(np.mean([t.avg_delay_pc1_ms[-1] for t in traces])),
        p95_smoothed_delay_ms=percentile(d_bar, 95.0),
        mean_jfi=float(np.mean(np.concatenate([t.jfi for t in traces]))),
        collision_rate=float(np.mean(np.concatenate(
            [t.collision_rate for t in traces]))),
        airtime_efficiency=float(np.mean(np.concatenate(
            [t.airtime_pc1 for t in traces]))),
        violation_rate=float(np.mean(np.concatenate(
            [t.violations for t in traces]).astype(float))),
    )


def _run_cell_task(payload):
    """Process-pool entry for one cell; returns (key, row, curves)."""
    (cfg_dict, pc3_total, sweep_index, seed, do_train, do_eval, ckpt) = payload
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    cfg = ExperimentConfig(**cfg_dict).validate()
    name = cell_name(cfg, pc3_total, seed)
    ckpt = Path(ckpt) if ckpt else None
    try:
        params, curves = None, []
        if cfg.algorithm != "no_learning":
            if do_train:
                params, curves = train_cell(cfg, pc3_total, sweep_index, seed, ckpt)
            elif do_eval:
                if ckpt is None or not ckpt.exists():
                    raise CellError(name, f"missing checkpoint {ckpt}")
                params, _ = nn.load_checkpoint(ckpt)
        row = None
        if do_eval:
            row = evaluate_cell(cfg, pc3_total, sweep_index, seed, params)
        return name, row, curves
    except CellError:
        raise
    except Exception as exc:  # surface the failing cell identity
        raise CellError(name, f"{type(exc).__name__}: {exc}") from exc


def run_job(cfg: ExperimentConfig, train: bool = True,
            evaluate: bool = True) -> list:
    """Run every (sweep point x seed) cell of a job.

    Writes config.echo.json up front, checkpoints per training cell,
    curves.csv for training curves, and results.csv when evaluating.
    Returns the results rows in deterministic (sweep, seed) order.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo.json").write_text(cfg.to_json() + "\n")
    ckpt_dir = out / "checkpoints"

    tasks = []
    for sweep_index, pc3_total in enumerate(cfg.resolved_sweep()):
        for seed in cfg.seeds:
            ckpt = None
            if cfg.algorithm != "no_learning":
                ckpt = ckpt_dir / f"{cell_name(cfg, pc3_total, seed)}.ckpt"
            tasks.append((asdict(cfg), pc3_total, sweep_index, seed,
                          train, evaluate, str(ckpt) if ckpt else None))

    if cfg.workers > 1 and len(tasks) > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(min(cfg.workers, len(tasks))) as pool:
            outcomes = pool.map(_run_cell_task, tasks)
    else:
        outcomes = [_run_cell_task(t) for t in tasks]

    rows = [row for _, row, _ in outcomes if row is not None]
    if evaluate:
        write_results_csv(out / "results.csv", rows)
    all_curves = [(name, curves) for name, _, curves in outcomes if curves]
    if train and all_curves:
        write_curves_csv(out / "curves.csv", all_curves)
    return rows


def write_results_csv(path, rows: Sequence[ResultsRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_COLUMNS)
        for r in rows:
            w.writerow([RESULTS_VERSION, r.scenario, r.algorithm,
                        _fmt(r.d_th_ms), _fmt(r.alpha), r.pc3_total, r.seed,
                        _fmt(r.avg_delay_pc1_ms), _fmt(r.p95_smoothed_delay_ms),
                        _fmt(r.mean_jfi), _fmt(r.collision_rate),
                        _fmt(r.airtime_efficiency), _fmt(r.violation_rate)])


def write_curves_csv(path, named_curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVES_COLUMNS)
        for name, curves in named_curves:
            for rec in curves:
                w.writerow([RESULTS_VERSION, name, rec.episode,
                            _fmt(rec.mean_loss), _fmt(rec.mean_reward),
                            _fmt(rec.mean_v), _fmt(rec.epsilon),
                            _fmt(rec.lambda_sample)])


TRAJECTORY_COLUMNS = ("step", "action", "f_avg_delay", "f_d_bar",
                      "f_collision", "f_busy", "f_violation_rate", "f_jfi",
                      "f_trend", "f_short_collision", "jfi", "d_bar_pc1_ms",
                      "violation")


def write_trajectory_csv(path, trace: agents.ExecutionTrace) -> None:
    """Dump one evaluated episode: per step the action, the 8 state
    features observed before the decision, and the raw signals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for t in range(len(trace.actions)):
            w.writerow([t, int(trace.actions[t]),
                        *[_fmt(float(x)) for x in trace.states[t]],
                        _fmt(float(trace.jfi[t])),
                        _fmt(float(trace.d_bar_pc1_ms[t])),
                        int(trace.violations[t])])
