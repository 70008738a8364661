"""Scratch smoke checks for the optimizer core (not part of the test suite)."""
import numpy as np

from cranopt.network import ChannelRealization
from cranopt.rates import (BeamformerSet, QuantCovSet, SchemeConfig,
                           fronthaul_usage_su, fronthaul_violation,
                           weighted_sum_rate)
from cranopt.sca import (SolverOptions, build_subproblem, update_aux, wmmse_sca,
                         heuristic_decompression_order)
from cranopt.inner import barrier_solve, kkt_certificate
from cranopt.hermitian import LN2


def random_channel(L, K, N, M, seed, gain_spread_db=15.0):
    rng = np.random.default_rng(seed)
    gains = 10 ** (-rng.uniform(0, gain_spread_db, size=(L, K)) / 10)
    H = (rng.standard_normal((L, K, N, M)) + 1j * rng.standard_normal((L, K, N, M)))
    H *= np.sqrt(gains / 2)[:, :, None, None]
    Lam = np.broadcast_to(np.eye(N, dtype=complex), (L, N, N)).copy()
    return ChannelRealization(L=L, K=K, N=N, M=M, H=H, Lam=Lam, bandwidth_hz=1e7)


def main():
    rng = np.random.default_rng(0)
    L, K, N, M, d = 2, 3, 2, 2, 1
    ch = random_channel(L, K, N, M, seed=1)
    P = np.full(K, 10.0)
    scheme = SchemeConfig(receiver="sic", compression="su",
                          weights=np.ones(K), fronthaul_bits=np.full(L, 5.0))

    # feasible start: scaled beamformers, generous Q
    V = np.zeros((K, M, d), dtype=complex)
    for k in range(K):
        v = rng.standard_normal((M, d)) + 1j * rng.standard_normal((M, d))
        V[k] = np.sqrt(0.5 * P[k]) * v / np.linalg.norm(v)
    Q = np.stack([3.0 * np.eye(N, dtype=complex)] * L)
    Vs = BeamformerSet(V, P)
    Qs = QuantCovSet(Q)
    print("init violation:", fronthaul_violation(ch, Vs, Qs, scheme))

    aux = update_aux(ch, V, Q, scheme)
    sub = build_subproblem(ch, aux, scheme, rho=0.01, power_mw=P,
                           build_point=(V, Q))

    # 1. quadratic objective == direct error-matrix objective at random points
    for trial in range(3):
        Vr = V + 0.1 * (rng.standard_normal(V.shape) + 1j * rng.standard_normal(V.shape))
        Qr = Q + 0.05 * np.stack([np.eye(N, dtype=complex)] * L)
        x = sub.pack(Vr, Qr)
        a, b = sub.f0_value(x), sub.f0_direct(Vr, Qr)
        print(f"quad vs direct: {a:.12f} {b:.12f} diff {abs(a-b):.2e}")

    # 2. constraint tightness at the build point: g_i == true usage - C (nats)
    g = sub.constraints(sub.x_build)
    for ell in range(L):
        true_gap = (fronthaul_usage_su(ch, Vs, Qs, ell) - scheme.fronthaul_bits[ell]) * LN2
        print(f"g[{ell}] {g[ell]:.10f} vs true {true_gap:.10f} diff {abs(g[ell]-true_gap):.2e}")

    # 3. finite-difference gradient check of f0 and constraints
    x0 = sub.pack(V, Q)
    gr = sub.f0_grad(x0)
    eps = 1e-6
    num = np.zeros_like(gr)
    for i in range(len(x0)):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += eps; xm[i] -= eps
        num[i] = (sub.f0_value(xp) - sub.f0_value(xm)) / (2 * eps)
    print("f0 grad err:", np.max(np.abs(num - gr)) / max(1, np.max(np.abs(gr))))

    G = sub.constraint_grads(x0)
    for ci in range(sub.m):
        numc = np.zeros(len(x0))
        for i in range(len(x0)):
            xp, xm = x0.copy(), x0.copy()
            xp[i] += eps; xm[i] -= eps
            numc[i] = (sub.constraints(xp)[ci] - sub.constraints(xm)[ci]) / (2 * eps)
        err = np.max(np.abs(numc - G[ci])) / max(1.0, np.max(np.abs(G[ci])))
        if err > 1e-5:
            print(f"constraint {ci} grad err {err:.2e}  <-- BAD")
    print("constraint grads checked")

    # 4. barrier solve improves the objective and stays feasible
    x, lam, info = barrier_solve(sub, sub.x_build, gap_tol=1e-9)
    print("barrier:", info, "f0:", sub.f0_value(sub.x_build), "->", sub.f0_value(x))
    res, _ = kkt_certificate(sub, x)
    print("inner kkt:", res, "max g:", np.max(sub.constraints(x)))

    # 5. full outer loop on the scalar closed-form instance: expect ~0.678 bits
    ch1 = ChannelRealization(L=1, K=1, N=1, M=1,
                             H=np.ones((1, 1, 1, 1), dtype=complex),
                             Lam=np.ones((1, 1, 1, 1))[0].reshape(1, 1, 1) + 0j,
                             bandwidth_hz=1e7)
    sch1 = SchemeConfig(receiver="sic", compression="su",
                        weights=np.ones(1), fronthaul_bits=np.array([2.0]))
    Vb, Qb, state = wmmse_sca(ch1, sch1, power_mw=np.array([1.0]))
    print("scalar sum rate:", state.objective_trace[-1], "target", np.log2(1.6))
    print("iterations:", state.iteration, "kkt:", state.kkt_residual,
          "converged:", state.converged)
    print("q:", Qb.Q[0].real, "v^2:", abs(Vb.V[0, 0, 0]) ** 2)

    # 6. desk-scale run, all four scheme combos, monotone trace
    ch2 = random_channel(3, 6, 2, 2, seed=7)
    P2 = np.full(6, 100.0)
    for comp in ("su", "wz"):
        for rec in ("mmse", "sic"):
            sch = SchemeConfig(receiver=rec, compression=comp,
                               weights=np.ones(6), fronthaul_bits=np.full(3, 6.0))
            import time
            t0 = time.time()
            Vb, Qb, st = wmmse_sca(ch2, sch, power_mw=P2)
            dt = time.time() - t0
            tr = np.array(st.objective_trace)
            mono = np.all(np.diff(tr) >= -1e-8)
            print(f"{comp}/{rec}: rate {tr[-1]:.4f} iters {st.iteration} "
                  f"kkt {st.kkt_residual:.2e} mono {mono} t {dt:.1f}s conv {st.converged}")


if __name__ == "__main__":
    main()
