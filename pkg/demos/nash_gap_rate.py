"""How fast does the N-player Nash control approach the mean field control?

Runs the default LQ game, prints the gap table, the global log-log slope and
the local slopes between consecutive N.  The local slopes drift towards -1
as N grows: the gap behaves like C1/N + C2/N^2 and the second term still
matters at small N.
"""
import numpy as np

from mfglab.experiments import default_config, run_study

report = run_study(default_config("nash_gap"), threads=4)
gap = report.tables["gap"]
Ns = np.asarray(gap["N"], dtype=float)
print(report.summary())

for label in ("gap[t=0]", "gap[t=0.5]", "gap[t=1]"):
    values = np.asarray(gap[label])
    local = np.diff(np.log(values)) / np.diff(np.log(Ns))
    fit = report.fits[label]
    print(f"{label}: global slope {fit.slope:.3f} (R^2 {fit.r2:.3f}); local slopes "
          + " ".join(f"{s:.2f}" for s in local))

# N * gap should level off if the leading term is C1/N
print("N * gap[t=0]:", " ".join(f"{v:.4f}" for v in Ns * np.asarray(gap["gap[t=0]"])))
