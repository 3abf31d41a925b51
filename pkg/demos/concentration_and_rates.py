"""Concentration of the Nash controls around the limiting law.

Tail probabilities of three observables shrink with N; the expected W2
distance to the limiting law is compared with the theoretical rate.
"""
from mfglab.experiments import default_config, run_study
from mfglab.metrics import theoretical_rate

cfg = default_config("concentration", N_list=(16, 32, 64, 128, 256), replications=400)
report = run_study(cfg, threads=4)
print(report.summary())

tails = report.tables["tails"]
for i in range(tails.n_rows):
    if tails["observable"][i] == "w2" and tails["N"][i] in (16, 256):
        print(f"N={tails['N'][i]:4d} t={tails['t'][i]:.2f} a={tails['threshold'][i]:.1f}: "
              f"P = {tails['estimate'][i]:.3f} [{tails['wilson_low'][i]:.3f}, {tails['wilson_high'][i]:.3f}]")

for N in cfg.N_list:
    print(f"r(N={N}, M=1, k=8, p=2) = {theoretical_rate(N=N, M=1, k=8, p=2):.4f}")
