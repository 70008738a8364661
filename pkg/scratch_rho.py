"""Probe outer convergence rate vs proximal weight and fronthaul budget."""
import time

import numpy as np

from scratch_smoke import random_channel
from cranopt.rates import SchemeConfig
from cranopt.sca import SolverOptions, wmmse_sca

ch2 = random_channel(3, 6, 2, 2, seed=7)
P2 = np.full(6, 100.0)

for cbits in (6.0,):
    for rho in (1e-4, 1e-3, 1e-2, 1e-1):
        sch = SchemeConfig(receiver="mmse", compression="su",
                           weights=np.ones(6), fronthaul_bits=np.full(3, cbits))
        opts = SolverOptions(max_iter=120, rho=rho)
        t0 = time.time()
        Vb, Qb, st = wmmse_sca(ch2, sch, power_mw=P2, opts=opts)
        tr = np.array(st.objective_trace)
        rel = np.abs(np.diff(tr)) / np.maximum(1, np.abs(tr[1:]))
        print(f"C={cbits} rho={rho:.0e}: obj {tr[-1]:.5f} iters {st.iteration} "
              f"rel_last {rel[-1]:.1e} conv {st.converged} "
              f"t {time.time()-t0:.1f}s")
