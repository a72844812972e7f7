"""NR-U / Wi-Fi coexistence simulation and learned contention-window control.

Layers, bottom up:

* :mod:`coexcpm.macsim`  - deterministic discrete-event channel contention
* :mod:`coexcpm.metrics` - delay, fairness, and airtime statistics
* :mod:`coexcpm.env`     - the discrete-time control environment
* :mod:`coexcpm.nn`      - numpy Q-network, gradients, Adam, checkpoints
* :mod:`coexcpm.agents`  - scalarized, primal-dual, and state-augmented
                           controllers over a shared DDQN loop
* :mod:`coexcpm.harness` - experiment cells, sweeps, CSV results
"""

from .macsim import (MacSimulator, Network, PriorityClass, TransmitterSpec,
                     TransmitterState, ChannelTimeline, default_spec,
                     draw_backoff, reservation_padding)
from .metrics import (DelayTracker, MetricsState, StepMetrics, jain_fairness,
                      step_metrics, update_delays, violation_rate)
from .env import (CoexEnv, EnvConfig, action_to_cw, augment_state, featurize,
                  LAMBDA_MAX, N_ACTIONS)
from .agents import (DualController, ReplayBuffer, ReplayTransition,
                     TrainConfig, TrainResult, adaptive_eta, ddqn_target,
                     dual_update, epsilon_greedy, execute_qasal,
                     scalarized_reward, shaped_reward, train_morl,
                     train_primal_dual, train_qasal, violation_term)
from .harness import (ExperimentConfig, ResultsRow, cell_seed,
                      no_learning_policy, percentile, run_job)

__version__ = "0.1.0"
