"""
Leaderless output synchronization with a rooted agent set
=========================================================

Three root agents share the same oscillator matrix and output map; two
followers learn both through the switching network and synchronize their
outputs with the roots.

Run with ``python3 demos/synchronization.py``.
"""
import numpy as np

from dimp import config, engine

traj, metrics = engine.run(config.load("sync_5agent"))
print(metrics.text())

y = traj.series["y"][:, :, 0]
for t in (0.0, 10.0, 30.0, traj.t[-1]):
    s = int(np.argmin(np.abs(traj.t - t)))
    print(f"t = {traj.t[s]:6.1f} s  outputs " + " ".join(f"{v:+.4f}" for v in y[s]))
