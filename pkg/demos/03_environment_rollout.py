"""Drive the control environment with fixed decisions and inspect the
state features and signals.

The single scalar action caps both contention windows
(CW_max = 2**a - 1 for PC1 and 2**(a+4) - 1 for PC3), so low actions hand
the channel to the high-priority node while high actions open it up.
"""

import numpy as np

from coexcpm import CoexEnv, EnvConfig, action_to_cw
from coexcpm.macsim import PriorityClass

FEATURES = ["avg_delay", "d_bar", "collision", "busy", "viol_rate", "jfi",
            "trend", "short_coll"]


def rollout(action, steps=300, seed=5):
    env = CoexEnv(EnvConfig(seed=seed, n_pc3_nru=13, n_pc3_wifi=12,
                            d_th_ms=2.0))
    env.reset()
    jfi, dbar, viol = [], [], []
    for _ in range(steps):
        s, sig = env.step(action)
        jfi.append(sig.jfi)
        dbar.append(sig.d_bar_pc1_ms)
        viol.append(sig.violation)
    return s, np.mean(jfi), np.mean(dbar), np.mean(viol)


def main():
    print("Window mapping per action:")
    for a in range(7):
        print(f"  a={a}: CW_max PC1={action_to_cw(a, PriorityClass.PC1):>3} "
              f"PC3={action_to_cw(a, PriorityClass.PC3):>4}")

    print("\nHolding each action for 300 steps "
          "(1 PC1 vs 25 PC3, threshold 2 ms):")
    print("  a   mean_jfi  mean_d_bar_ms  violation_rate")
    for a in range(7):
        _, jfi, dbar, viol = rollout(a)
        print(f"  {a}   {jfi:.3f}    {dbar:>8.3f}       {viol:.2f}")

    s, _, _, _ = rollout(3, steps=50)
    print("\nState features after 50 steps at a=3:")
    for name, value in zip(FEATURES, s):
        print(f"  {name:<11} {value:+.3f}")


if __name__ == "__main__":
    main()
