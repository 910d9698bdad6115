# %% [markdown]
# # A much finer speed quantum
#
# Shrinking only the rotor speed quantum from 1e-5 to 1e-7 rad/s makes the
# speed atom fire about a hundred times more often.  Its error barely
# moves, because it is limited by the flux quanta it reads.

# %%
from liqss import Scenario, error_report
from liqss.machine import OMEGA_R

scen = Scenario()
ref = scen.reference()
for speed_dq in (1e-5, 1e-6, 1e-7):
    res = scen.liqss(1e-4, speed_dq=speed_dq)
    rep = error_report(scen.resampled(res), ref, res.update_counts)
    print(f"speed dq {speed_dq:g}: speed updates {res.update_counts[OMEGA_R]:8d}, "
          f"speed TANE {rep.tane[OMEGA_R]:.2e}, max error {rep.max_error:.2e}")
