import numpy as np
import pytest

from cranopt.errors import InfeasibleStartError
from cranopt.hermitian import LN2, logdet2
from cranopt.inner import barrier_solve, kkt_certificate
from cranopt.network import ChannelRealization
from cranopt.rates import (
    BeamformerSet,
    QuantCovSet,
    SchemeConfig,
    cutset_bound,
    fronthaul_usage_su,
    fronthaul_violation,
    user_rates,
)
from cranopt.sca import (
    SolverOptions,
    build_subproblem,
    heuristic_decompression_order,
    solve_inner,
    update_aux,
    wmmse_sca,
)

from conftest import random_channel, random_feasible_point


def scheme_for(ch, receiver="sic", compression="su", c=6.0, weights=None):
    w = np.ones(ch.K) if weights is None else np.asarray(weights, float)
    return SchemeConfig(receiver=receiver, compression=compression, weights=w,
                        fronthaul_bits=np.full(ch.L, float(c)))


def scalar_channel(h=1.0, lam=1.0):
    return ChannelRealization(
        L=1, K=1, N=1, M=1,
        H=np.full((1, 1, 1, 1), h, dtype=complex),
        Lam=np.full((1, 1, 1), lam, dtype=complex),
        bandwidth_hz=1e7,
    )


class TestHeuristicOrder:
    def test_larger_capacity_first(self):
        ch = random_channel(2, 2, 2, 2, seed=0)
        ch.H[1] = ch.H[0]          # statistically identical BSs
        order = heuristic_decompression_order(
            ch, np.array([10.0, 5.0]), np.ones(2)
        )
        assert order.pi == (0, 1)

    def test_weaker_signal_first(self):
        ch = random_channel(2, 2, 2, 2, seed=1)
        ch.H[1] = ch.H[0] * np.sqrt(10.0)    # BS 1 ten times stronger
        order = heuristic_decompression_order(
            ch, np.array([5.0, 5.0]), np.ones(2)
        )
        assert order.pi == (0, 1)

    def test_all_equal_identity_order(self):
        ch = random_channel(3, 2, 2, 2, seed=2)
        ch.H[1] = ch.H[0]
        ch.H[2] = ch.H[0]
        order = heuristic_decompression_order(
            ch, np.array([5.0, 5.0, 5.0]), np.ones(2)
        )
        assert order.pi == (0, 1, 2)


class TestUpdateAux:
    def _setup(self, seed=0):
        ch = random_channel(2, 3, 2, 2, seed=seed)
        P = np.full(3, 10.0)
        V, Q = random_feasible_point(ch, [6.0, 6.0], P, seed)
        return ch, P, V, Q

    def test_linearization_touches_true_usage(self):
        # the linearized fronthaul value at the update point equals the exact
        # usage (the lower bound's equality case)
        ch, P, V, Q = self._setup()
        sch = scheme_for(ch)
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=0.01, power_mw=P,
                               build_point=(V, Q))
        g = sub.constraints(sub.x_build)
        Vs, Qs = BeamformerSet(V, P), QuantCovSet(Q)
        for ell in range(ch.L):
            exact = (fronthaul_usage_su(ch, Vs, Qs, ell)
                     - sch.fronthaul_bits[ell]) * LN2
            assert g[ell] == pytest.approx(exact, abs=1e-9)

    def test_weight_matrices_bounded_below_by_identity(self):
        for seed in range(20):
            ch, P, V, Q = self._setup(seed)
            aux = update_aux(ch, V, Q, scheme_for(ch, receiver="mmse"))
            for W in aux.W:
                assert np.linalg.eigvalsh(W).min() >= 1.0 - 1e-9

    def test_zero_beamformers(self):
        ch, P, _, Q = self._setup()
        V = np.zeros((3, 2, 1), dtype=complex)
        aux = update_aux(ch, V, Q, scheme_for(ch))
        assert np.allclose(aux.U, 0.0)
        assert all(np.allclose(W, np.eye(1)) for W in aux.W)
        for ell in range(ch.L):
            assert np.allclose(aux.sigma[ell], ch.Lam[ell] + Q[ell])

    def test_quadratic_model_matches_direct(self):
        ch, P, V, Q = self._setup(3)
        sch = scheme_for(ch, receiver="mmse")
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=0.05, power_mw=P,
                               build_point=(V, Q))
        rng = np.random.default_rng(0)
        for _ in range(5):
            Vr = V + 0.2 * (rng.standard_normal(V.shape)
                            + 1j * rng.standard_normal(V.shape))
            Qr = Q + 0.1 * np.stack([np.eye(2, dtype=complex)] * 2)
            x = sub.pack(Vr, Qr)
            assert sub.f0_value(x) == pytest.approx(
                sub.f0_direct(Vr, Qr), rel=1e-10
            )


class TestSolveInner:
    def test_unconstrained_quadratic_closed_form(self):
        # slack constraints: the solution matches the quadratic minimizer
        ch = random_channel(2, 2, 2, 2, seed=4)
        P = np.full(2, 1e7)
        V, Q = random_feasible_point(ch, [500.0, 500.0], P, 4, power_frac=1e-6)
        sch = scheme_for(ch, receiver="mmse", c=500.0)
        aux = update_aux(ch, V, Q, sch)
        # rho large enough that the unconstrained optimum keeps Q inside the
        # PD cone (checked below)
        sub = build_subproblem(ch, aux, sch, rho=50.0, power_mw=P,
                               build_point=(V, Q))
        x_star = np.linalg.solve(sub._hobj, -sub._qobj)
        _, Q_star = sub.unpack(x_star)
        assert min(np.linalg.eigvalsh(Q_star[ell]).min() for ell in range(2)) > 0
        Vsol, Qsol, lam, res = solve_inner(sub, tol=1e-6)
        x_sol = sub.pack(Vsol, Qsol)
        assert np.linalg.norm(x_sol - x_star) <= 1e-4 * max(
            1.0, np.linalg.norm(x_star)
        )
        assert res <= 1e-6

    def test_scalar_grid_oracle(self):
        # two-pass 1000x1000 grid over (v, q): coarse sweep, then a zoom
        # around the incumbent; the solver objective matches to 1e-3
        ch = scalar_channel()
        P = np.array([2.0])
        V = np.full((1, 1, 1), 0.9, dtype=complex)
        Q = np.full((1, 1, 1), 1.2, dtype=complex)
        sch = scheme_for(ch, receiver="sic", c=2.0)
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=0.02, power_mw=P,
                               build_point=(V, Q))
        sig = aux.sigma[0][0, 0].real
        cprime = 2.0 * LN2 + 1.0
        u = aux.U[0][0, 0]
        w = aux.W[0][0, 0].real

        def grid_min(vlo, vhi, qlo, qhi):
            vg = np.linspace(vlo, vhi, 1000)
            qg = np.geomspace(qlo, qhi, 1000)
            VV, QQ = np.meshgrid(vg, qg, indexing="ij")
            gval = (np.log(sig) + (VV ** 2 + 1.0 + QQ) / sig
                    - np.log(QQ) - cprime)
            feasible = (gval < 0) & (VV ** 2 < 2.0)
            e = np.abs(1 - np.conj(u) * VV) ** 2 + np.abs(u) ** 2 * (1.0 + QQ)
            f = np.where(feasible, e.real * w + 0.02 * (QQ - 1.2) ** 2, np.inf)
            idx = np.unravel_index(np.argmin(f), f.shape)
            return f[idx], vg[idx[0]], qg[idx[1]]

        f1, v1, q1 = grid_min(-np.sqrt(2.0), np.sqrt(2.0), 1e-3, 12.0)
        f2, _, _ = grid_min(v1 - 0.01, v1 + 0.01, q1 * 0.97, q1 * 1.03)
        f_grid = min(f1, f2)
        Vsol, Qsol, lam, res = solve_inner(sub, tol=1e-7)
        f_sol = sub.f0_value(sub.pack(Vsol, Qsol))
        assert abs(f_sol - f_grid) <= 1e-3

    def test_proximal_dominance(self):
        # huge rho pins Q near the proximal center
        ch = random_channel(2, 2, 2, 2, seed=6)
        P = np.full(2, 10.0)
        V, Q = random_feasible_point(ch, [8.0, 8.0], P, 6)
        sch = scheme_for(ch, receiver="mmse", c=8.0)
        aux = update_aux(ch, V, Q, sch)
        rho = 1e6
        sub = build_subproblem(ch, aux, sch, rho=rho, power_mw=P,
                               build_point=(V, Q))
        _, Qsol, _, _ = solve_inner(sub, tol=1e-6)
        assert np.linalg.norm(Qsol - Q) <= 10.0 / rho ** 0.5

    def test_infeasible_start_raises(self):
        ch = random_channel(2, 2, 2, 2, seed=7)
        P = np.full(2, 10.0)
        V, Q = random_feasible_point(ch, [6.0, 6.0], P, 7)
        sch = scheme_for(ch, receiver="mmse", c=6.0)
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=0.01, power_mw=P,
                               build_point=(V, Q))
        bad = sub.pack(V * 100.0, Q)   # power constraint violated
        with pytest.raises(InfeasibleStartError):
            barrier_solve(sub, bad)


class TestStrongConvexity:
    def test_second_difference_in_q(self):
        # random-direction curvature of the surrogate objective is at least
        # 2 rho per unit squared step in the Q coordinates
        rho = 0.3
        ch = random_channel(2, 2, 2, 2, seed=8)
        P = np.full(2, 10.0)
        V, Q = random_feasible_point(ch, [6.0, 6.0], P, 8)
        sch = scheme_for(ch, receiver="mmse")
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=rho, power_mw=P,
                               build_point=(V, Q))
        rng = np.random.default_rng(0)
        x0 = sub.x_build
        nv = sub.K * sub.nv
        for _ in range(20):
            dq = rng.standard_normal(sub.n - nv)
            step = np.concatenate([np.zeros(nv), dq]) * 1e-3
            second = (sub.f0_value(x0 + step) - 2 * sub.f0_value(x0)
                      + sub.f0_value(x0 - step))
            assert second >= 2 * rho * np.sum(step[nv:] ** 2) - 1e-12


class TestWmmseSca:
    def test_scalar_closed_form(self):
        # C = 2, P = |h|^2 = noise = 1: optimum q = 2/3 at full power,
        # sum rate log2(1.6)
        ch = scalar_channel()
        sch = scheme_for(ch, receiver="sic", c=2.0)
        V, Q, state = wmmse_sca(ch, sch, power_mw=np.array([1.0]))
        assert state.objective_trace[-1] == pytest.approx(
            np.log2(1.6), abs=1e-3
        )
        assert Q.Q[0, 0, 0].real == pytest.approx(2.0 / 3.0, rel=1e-2)
        assert abs(V.V[0, 0, 0]) ** 2 == pytest.approx(1.0, rel=1e-3)
        assert state.converged

    def test_large_capacity_approaches_cutset(self):
        ch = random_channel(2, 3, 2, 2, seed=9)
        P = np.full(3, 31.6)
        sch = scheme_for(ch, receiver="sic", c=30.0 * ch.N)
        V, Q, state = wmmse_sca(ch, sch, power_mw=P)
        bound = cutset_bound(ch, V)
        assert state.objective_trace[-1] >= 0.97 * bound

    def test_fixed_point_terminates_quickly(self):
        # start at the known scalar optimum: at most two outer iterations and
        # an essentially unchanged objective
        ch = scalar_channel()
        sch = scheme_for(ch, receiver="sic", c=2.0)
        V0 = BeamformerSet(np.full((1, 1, 1), 1.0, dtype=complex), np.array([1.0]))
        Q0 = QuantCovSet(np.full((1, 1, 1), 2.0 / 3.0, dtype=complex))
        V, Q, state = wmmse_sca(ch, sch, init=(V0, Q0), power_mw=np.array([1.0]))
        assert state.iteration <= 2
        assert state.objective_trace[-1] == pytest.approx(
            np.log2(1.6), rel=1e-4
        )

    def test_monotone_feasible_certified(self):
        for seed in range(3):
            ch = random_channel(2, 4, 2, 2, seed=seed + 20)
            P = np.full(4, 31.6)
            for comp in ("su", "wz"):
                sch = scheme_for(ch, receiver="mmse", compression=comp, c=5.0)
                V, Q, state = wmmse_sca(ch, sch, power_mw=P)
                tr = np.array(state.objective_trace)
                assert np.all(np.diff(tr) >= -1e-8)
                assert state.fronthaul_gap_bits <= 1e-6
                assert state.converged
                assert state.kkt_residual <= 1e-4

    def test_infeasible_init_raises(self):
        ch = scalar_channel()
        sch = scheme_for(ch, receiver="sic", c=1.0)
        V0 = BeamformerSet(np.full((1, 1, 1), 1.0, dtype=complex), np.array([1.0]))
        Q0 = QuantCovSet(np.full((1, 1, 1), 1e-6, dtype=complex))
        with pytest.raises(InfeasibleStartError):
            wmmse_sca(ch, sch, init=(V0, Q0), power_mw=np.array([1.0]))

    def test_surrogate_gradient_matches_true_objective(self):
        # finite-difference check of the envelope property: the surrogate's
        # gradient at the update point equals the true weighted-sum-rate
        # gradient (both in nats)
        ch = random_channel(2, 2, 2, 2, seed=30)
        P = np.full(2, 10.0)
        V, Q = random_feasible_point(ch, [6.0, 6.0], P, 30)
        sch = scheme_for(ch, receiver="mmse")
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=0.01, power_mw=P,
                               build_point=(V, Q))
        x0 = sub.x_build
        grad_sur = sub.f0_grad(x0)

        def true_neg_wsr(x):
            Vx, Qx = sub.unpack(x)
            rates = user_rates(ch, BeamformerSet(Vx, P + 1e6), QuantCovSet(Qx),
                               sch)
            return -float(np.dot(sch.weights, rates)) * LN2

        scale = max(1.0, np.linalg.norm(x0))
        h = 1e-6 * scale
        idxs = np.linspace(0, sub.n - 1, 12).astype(int)
        for i in idxs:
            xp, xm = x0.copy(), x0.copy()
            xp[i] += h
            xm[i] -= h
            fd = (true_neg_wsr(xp) - true_neg_wsr(xm)) / (2 * h)
            ref = max(1.0, abs(grad_sur[i]), np.abs(grad_sur).max() * 1e-3)
            assert fd == pytest.approx(grad_sur[i], abs=1e-4 * ref)


class TestKktCertificate:
    def test_interior_minimum_has_zero_residual(self):
        ch = random_channel(2, 2, 2, 2, seed=4)
        P = np.full(2, 1e7)
        V, Q = random_feasible_point(ch, [500.0, 500.0], P, 4, power_frac=1e-6)
        sch = scheme_for(ch, receiver="mmse", c=500.0)
        aux = update_aux(ch, V, Q, sch)
        sub = build_subproblem(ch, aux, sch, rho=50.0, power_mw=P,
                               build_point=(V, Q))
        x_star = np.linalg.solve(sub._hobj, -sub._qobj)
        res, lam = kkt_certificate(sub, x_star)
        assert res <= 1e-8
        assert np.all(lam >= 0)
