"""Locate the slow KKT components along the iteration path."""
import numpy as np

from scratch_smoke import random_channel
from cranopt.rates import SchemeConfig
from cranopt.sca import _normalized, _nudge_interior, build_subproblem, update_aux
from cranopt.separate import separate_design
from cranopt.inner import barrier_solve, kkt_certificate

ch2 = random_channel(3, 6, 2, 2, seed=7)
P2 = np.full(6, 100.0)
sch = SchemeConfig(receiver="mmse", compression="su",
                   weights=np.ones(6), fronthaul_bits=np.full(3, 6.0))

chn, scale = _normalized(ch2)
V0, Q0 = separate_design(chn, sch, P2)
V, Q = _nudge_interior(chn, sch, V0.V.copy(), Q0.Q.copy(), None)
rho = 1e-6

lam_prev = None
for it in range(240):
    aux = update_aux(chn, V, Q, sch)
    sub = build_subproblem(chn, aux, sch, rho=rho, power_mw=P2,
                           build_point=(V, Q))
    x, lam, info = barrier_solve(sub, sub.x_build, gap_tol=1e-9, lam0=lam_prev)
    if sub.f0_value(x) > sub.f0_value(sub.x_build):
        x = sub.x_build
    else:
        lam_prev = lam
    V, Q = sub.unpack(x)
    if it % 30 == 0 or it == 239:
        aux2 = update_aux(chn, V, Q, sch)
        sub2 = build_subproblem(chn, aux2, sch, rho=rho, power_mw=P2,
                                build_point=(V, Q))
        res, lam2 = kkt_certificate(sub2, sub2.x_build)
        g = sub2.constraints(sub2.x_build)
        G = sub2.constraint_grads(sub2.x_build)
        fg = sub2.f0_grad(sub2.x_build)
        sv = fg + G.T @ lam2
        nv_total = sub2.K * sub2.nv
        v_part = np.max(np.abs(sv[:nv_total]))
        q_part = np.max(np.abs(sv[nv_total:]))
        worst_q = np.argmax(np.abs(sv[nv_total:]))
        print(f"it {it:3d}: res {res:.2e} |sv_V| {v_part:.2e} |sv_Q| {q_part:.2e} "
              f"worstq at {worst_q} lam {lam2.round(3)} g {g.round(4)}")
