"""Check the barrier Hessian against finite differences of the gradient."""
import numpy as np

from scratch_smoke import random_channel
from cranopt.rates import BeamformerSet, QuantCovSet, SchemeConfig
from cranopt.sca import build_subproblem, update_aux

rng = np.random.default_rng(0)
L, K, N, M, d = 2, 3, 2, 2, 1
ch = random_channel(L, K, N, M, seed=1)
P = np.full(K, 10.0)
scheme = SchemeConfig(receiver="sic", compression="su",
                      weights=np.ones(K), fronthaul_bits=np.full(L, 5.0))
V = np.zeros((K, M, d), dtype=complex)
for k in range(K):
    v = rng.standard_normal((M, d)) + 1j * rng.standard_normal((M, d))
    V[k] = np.sqrt(0.5 * P[k]) * v / np.linalg.norm(v)
Q = np.stack([3.0 * np.eye(N, dtype=complex)] * L)
aux = update_aux(ch, V, Q, scheme)
sub = build_subproblem(ch, aux, scheme, rho=0.01, power_mw=P, build_point=(V, Q))

x0 = sub.x_build
t = 7.0
w = 1.0 / (-sub.constraints(x0))


def grad_psi(x):
    s = -sub.constraints(x)
    return t * sub.f0_grad(x) + sub.constraint_grads(x).T @ (1.0 / s)


H_analytic = sub.hess_base(x0, t, w)
g0 = sub.constraints(x0)
G = sub.constraint_grads(x0)
H_analytic += (G / (-g0)[:, None]).T @ (G / (-g0)[:, None])

n = len(x0)
H_fd = np.zeros((n, n))
eps = 1e-6
for i in range(n):
    xp, xm = x0.copy(), x0.copy()
    xp[i] += eps
    xm[i] -= eps
    H_fd[:, i] = (grad_psi(xp) - grad_psi(xm)) / (2 * eps)

err = np.abs(H_fd - H_analytic)
rel = err.max() / max(1.0, np.abs(H_analytic).max())
print("max abs err:", err.max(), "rel:", rel)
bad = np.argwhere(err > 1e-4 * max(1.0, np.abs(H_analytic).max()))
print("bad entries:", bad[:20])
print("n:", n, "nv block:", sub.K * sub.nv)
if len(bad):
    i, j = bad[0]
    print("example:", H_fd[i, j], H_analytic[i, j])
