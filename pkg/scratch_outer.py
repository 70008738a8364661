"""Diagnose outer-loop convergence rate."""
import time

import numpy as np

from scratch_smoke import random_channel
from cranopt.rates import SchemeConfig
from cranopt.sca import SolverOptions, wmmse_sca

ch2 = random_channel(3, 6, 2, 2, seed=7)
P2 = np.full(6, 100.0)
sch = SchemeConfig(receiver="mmse", compression="su",
                   weights=np.ones(6), fronthaul_bits=np.full(3, 6.0))

lines = []
opts = SolverOptions(max_iter=300, trace=lines.append)
t0 = time.time()
Vb, Qb, st = wmmse_sca(ch2, sch, power_mw=P2, opts=opts)
print("time", time.time() - t0)

tr = np.array(st.objective_trace)
rel = np.abs(np.diff(tr)) / np.maximum(1, np.abs(tr[1:]))
print("iters:", st.iteration, "final:", tr[-1], "kkt:", st.kkt_residual)
for i in list(range(0, len(rel), 25)) + [len(rel) - 1]:
    print(f"iter {i+1}: obj {tr[i+1]:.8f} rel {rel[i]:.2e}")
print("last 10 trace lines:")
for ln in lines[-10:]:
    print("  ", ln)
