# %% [markdown]
# # Synchronous machine on an infinite bus
#
# The machine starts at its open-circuit equilibrium with the bus.  From
# 15 s to 20 s the prime mover torque ramps to a quarter of rated torque,
# and the machine settles at a new operating point.

# %%
import numpy as np

from liqss import Scenario, STATE_NAMES

scen = Scenario()
system = scen.system()
print("initial state:", dict(zip(STATE_NAMES, np.round(system.x0, 4))))

# %% [markdown]
# Forward Euler at 1e-4 s is the reference.

# %%
ref = scen.reference()
w = ref.state("omega_r")
print(f"speed: peak {w.max():.4f} rad/s, final {w[-1]:.6f} (100*pi = {100 * np.pi:.6f})")
p, q = system.power(ref.values[-1])
print(f"final operating point: P = {p / 1e6:.1f} MW, Q = {q / 1e6:.1f} MVAR")

eig = np.linalg.eigvals(system.jacobian(ref.values[-1], scen.t_end))
print("time constants (s):", np.round(np.sort(1 / -eig.real), 4))

# %% [markdown]
# The same model run by LIQSS1.  Nothing happens before the ramp, the
# ramp keeps every atom busy, and the atoms update at very different
# rates.

# %%
res = scen.liqss(1e-4, record=True)
traj = res.trajectory
for name, count in zip(res.names, res.update_counts):
    print(f"{name:8s} {count:8d} updates")
for t0, t1 in ((0, 15), (15, 35), (35, 50)):
    n = traj.counts_between(t0, t1).sum()
    print(f"[{t0:2d}, {t1:2d}] s: {n / (t1 - t0):10.1f} updates/s")
