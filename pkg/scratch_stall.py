"""Reproduce the centering stall with diagnostics."""
import numpy as np
import scipy.linalg

from scratch_smoke import random_channel
from cranopt.rates import SchemeConfig, BeamformerSet, QuantCovSet
from cranopt.sca import build_subproblem, update_aux, _normalized, _nudge_interior
from cranopt.separate import separate_design

ch2 = random_channel(3, 6, 2, 2, seed=7)
P2 = np.full(6, 100.0)
sch = SchemeConfig(receiver="mmse", compression="su",
                   weights=np.ones(6), fronthaul_bits=np.full(3, 6.0))

chn, scale = _normalized(ch2)
V0, Q0 = separate_design(chn, sch, P2)
Varr, Qarr = _nudge_interior(chn, sch, V0.V.copy(), Q0.Q.copy(), None)

aux = update_aux(chn, Varr, Qarr, sch)
sub = build_subproblem(chn, aux, sch, rho=0.01, power_mw=P2,
                       build_point=(Varr, Qarr))

x = sub.x_build.copy()
f_scale = max(1.0, abs(sub.f0_value(x)))
print("f_scale", f_scale, "m", sub.m)

t = 1.0
for stage in range(10):
    # manual Newton centering with diagnostics
    for step_i in range(300):
        g = sub.constraints(x)
        s = -g
        grad = t * sub.f0_grad(x) / f_scale + sub.constraint_grads(x).T @ (1.0 / s)
        H = sub.hess_base(x, t / f_scale, 1.0 / s)
        G = sub.constraint_grads(x)
        H += (G / s[:, None]).T @ (G / s[:, None])
        try:
            cf = scipy.linalg.cho_factor(H, lower=True)
        except scipy.linalg.LinAlgError:
            print(f"t={t:.2e} step {step_i}: chol failed, eigmin={np.linalg.eigvalsh(H).min():.3e}")
            break
        dx = -scipy.linalg.cho_solve(cf, grad)
        dec = -grad @ dx
        if dec / 2 <= 1e-10:
            break
        # backtrack
        alpha = 1.0
        psi0 = t * sub.f0_value(x) / f_scale - np.sum(np.log(s))
        n_bt = 0
        while alpha > 1e-14:
            xn = x + alpha * dx
            gn = sub.constraints(xn)
            if np.all(np.isfinite(gn)) and np.max(gn) < 0:
                sn = -gn
                psin = t * sub.f0_value(xn) / f_scale - np.sum(np.log(sn))
                if psin <= psi0 - 0.25 * alpha * dec:
                    break
            alpha *= 0.5
            n_bt += 1
        x = x + alpha * dx
        if step_i % 20 == 0 or step_i > 280:
            print(f"t={t:.2e} step {step_i}: dec/2={dec/2:.3e} alpha={alpha:.1e} "
                  f"bt={n_bt} minslack={s.min():.2e} cond~{np.linalg.cond(H):.1e}")
    print(f"stage t={t:.2e} done after {step_i} steps")
    if sub.m / t <= 1e-9:
        break
    t *= 20.0
