"""Train a small state-augmented controller and watch the dual variable
steer it at execution time.

This is a toy budget (60 episodes vs the 2,000 the experiment harness
uses), enough to see the machinery move: the sampled dual variable enters
the state during training, and at execution it rises when the delay
constraint is violated and pushes the policy toward safer windows.
"""

import numpy as np

from coexcpm import CoexEnv, EnvConfig, TrainConfig, execute_qasal, train_qasal
from coexcpm.agents import DualController


def main():
    env = CoexEnv(EnvConfig(seed=42, n_pc3_nru=5, n_pc3_wifi=5, d_th_ms=2.0))
    cfg = TrainConfig(episodes=60, steps=250, d_th_ms=2.0, seed=42)
    print("training (60 episodes x 250 steps, toy budget)...")
    result = train_qasal(env, cfg)
    for rec in result.curves[::12]:
        print(f"  episode {rec.episode:>3}: loss={rec.mean_loss:8.3f} "
              f"reward={rec.mean_reward:+.3f} eps={rec.epsilon:.2f} "
              f"lambda={rec.lambda_sample:.2f}")

    print("\nexecuting greedily with online dual updates:")
    eval_env = CoexEnv(EnvConfig(seed=7, n_pc3_nru=5, n_pc3_wifi=5,
                                 d_th_ms=2.0))
    trace = execute_qasal(eval_env, result.params, DualController(), steps=200)
    print("  step  action  lambda  d_bar_ms  violation")
    for t in range(0, 200, 20):
        flag = "*" if trace.violations[t] else ""
        print(f"  {t:>4}    {trace.actions[t]}    {trace.lambdas[t]:5.2f}  "
              f"{trace.d_bar_pc1_ms[t]:7.3f}   {flag}")
    print(f"\n  mean jfi={trace.jfi.mean():.3f}  "
          f"violation rate={trace.violations.mean():.2f}  "
          f"lambda range=[{trace.lambdas.min():.2f}, {trace.lambdas.max():.2f}]")


if __name__ == "__main__":
    main()
