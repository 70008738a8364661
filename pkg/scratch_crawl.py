"""Watch the iterates: per-user power, Q eigenvalues, active constraints."""
import numpy as np

from scratch_smoke import random_channel
from cranopt.rates import SchemeConfig, BeamformerSet, QuantCovSet, user_rates
from cranopt.sca import (SolverOptions, _normalized, _nudge_interior,
                         build_subproblem, update_aux)
from cranopt.separate import separate_design
from cranopt.inner import barrier_solve

ch2 = random_channel(3, 6, 2, 2, seed=7)
P2 = np.full(6, 100.0)
sch = SchemeConfig(receiver="mmse", compression="su",
                   weights=np.ones(6), fronthaul_bits=np.full(3, 6.0))

chn, scale = _normalized(ch2)
V0, Q0 = separate_design(chn, sch, P2)
V, Q = _nudge_interior(chn, sch, V0.V.copy(), Q0.Q.copy(), None)

lam_prev = None
for it in range(400):
    aux = update_aux(chn, V, Q, sch)
    sub = build_subproblem(chn, aux, sch, rho=1e-3, power_mw=P2,
                           build_point=(V, Q))
    x, lam, info = barrier_solve(sub, sub.x_build, gap_tol=1e-9, lam0=lam_prev)
    if sub.f0_value(x) > sub.f0_value(sub.x_build):
        x = sub.x_build
    else:
        lam_prev = lam
    Vn, Qn = sub.unpack(x)
    if it % 25 == 0 or it == 399:
        pw = np.einsum("kmd,kmd->k", Vn, Vn.conj()).real
        qe = [np.linalg.eigvalsh(Qn[l]).round(4) for l in range(3)]
        dv = np.linalg.norm(Vn - V)
        dq = np.linalg.norm(Qn - Q)
        rates = user_rates(chn, BeamformerSet(Vn, P2), QuantCovSet(Qn), sch)
        print(f"it {it}: sum {rates.sum():.5f} pw {pw.round(1)} dV {dv:.2e} "
              f"dQ {dq:.2e}")
        print(f"   rates {rates.round(3)}  qeig {[list(q) for q in qe]}")
    V, Q = Vn, Qn
