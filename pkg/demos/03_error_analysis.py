# %% [markdown]
# # Error against the reference and the quantum-size tradeoff

# %%
from liqss import Scenario, error_report, quantum_sweep

scen = Scenario()
ref = scen.reference()

# %% [markdown]
# Time average normalized error (TANE) per state at the default quanta.
# It is the RMS of the pointwise error divided by the state's range.

# %%
res = scen.liqss(1e-4)
rep = error_report(scen.resampled(res), ref, res.update_counts)
for name, e, n in zip(rep.names, rep.tane, rep.update_counts):
    print(f"{name:8s} TANE {e:.2e}   updates {n}")
print(f"max error {rep.max_error:.2e}")

# %% [markdown]
# Sweep the flux quantum (speed quantum a tenth of it).  Below about 1e-4
# the error stops improving while the update count keeps growing.  The
# 1e-6 point takes a couple of minutes, so it is left out here.

# %%
for row in quantum_sweep(scen, [1e-5, 1e-4, 1e-3, 1e-2], reference=ref):
    print(f"dq={row.delta_q:g}: max error {row.max_error:.2e}, "
          f"updates {row.total_updates:9d}, {row.wall_time:.2f} s")
