"""Walk through the contention engine on a handful of nodes.

Shows the labeled channel timeline: defer periods, backoff countdowns,
NR-U reservation padding to the slot grid, successes, and a forced
collision.
"""

import numpy as np

from coexcpm import (MacSimulator, Network, PriorityClass, TransmitterSpec,
                     default_spec)
from coexcpm.macsim import timeline_csv_rows


def show(title, timeline):
    print(f"\n{title}")
    for start, end, kind, ids in timeline_csv_rows(timeline):
        owner = f" tx={ids}" if ids else ""
        print(f"  [{start:>6} .. {end:>6}) {kind:<11}{owner}")


def main():
    # One Wi-Fi node with a degenerate window: it transmits as soon as its
    # 25 us defer elapses, every time.
    solo = TransmitterSpec(id=0, network=Network.WIFI,
                           pclass=PriorityClass.PC1, cw_min=0, cw_max=0,
                           defer_us=25, occupancy_us=2000)
    sim = MacSimulator([solo], seed=1)
    show("Solo Wi-Fi transmitter (defer 25 us, occupancy 2 ms):",
         sim.advance(5000))

    # The same node on the NR-U side must wait for the next 500 us slot
    # boundary, so a reservation signal precedes every transmission.
    nru = TransmitterSpec(id=0, network=Network.NRU,
                          pclass=PriorityClass.PC1, cw_min=0, cw_max=0,
                          defer_us=25, occupancy_us=2000)
    sim = MacSimulator([nru], seed=1)
    show("Same node as NR-U (note the reservation padding):",
         sim.advance(5000))

    # Two identical nodes that reach zero backoff in the same slot collide
    # and both escalate their backoff stage.
    twins = [TransmitterSpec(id=i, network=Network.WIFI,
                             pclass=PriorityClass.PC3, cw_min=0, cw_max=0,
                             defer_us=43, occupancy_us=8000)
             for i in range(2)]
    sim = MacSimulator(twins, seed=1)
    show("Two synchronized Wi-Fi nodes (guaranteed collision):",
         sim.advance(9000))
    print(f"  backoff stages after the collision: "
          f"{sim.state(0).backoff_stage}, {sim.state(1).backoff_stage}")

    # A realistic mix: one high-priority NR-U node against four saturated
    # low-priority contenders.
    mix = [default_spec(0, Network.NRU, PriorityClass.PC1)]
    mix += [default_spec(1 + i, Network.WIFI if i % 2 else Network.NRU,
                         PriorityClass.PC3) for i in range(4)]
    sim = MacSimulator(mix, seed=7)
    show("One PC1 vs four PC3 transmitters (first 30 ms):",
         sim.advance(30_000))
    for tx_id in sorted(sim.specs):
        st = sim.state(tx_id)
        print(f"  tx {tx_id}: {st.successes} successes, "
              f"{st.collisions} collisions, "
              f"{st.success_airtime_us} us of airtime")


if __name__ == "__main__":
    main()
