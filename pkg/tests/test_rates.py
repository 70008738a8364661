import numpy as np
import pytest

from cranopt.hermitian import eigh, hermitize, logdet2
from cranopt.network import ChannelRealization
from cranopt.rates import (
    BeamformerSet,
    DecompressionOrder,
    QuantCovSet,
    SchemeConfig,
    cutset_bound,
    error_covariance,
    fronthaul_usage_su,
    fronthaul_usage_wz,
    fronthaul_violation,
    mmse_receiver,
    user_rates,
    weighted_sum_rate,
)

from conftest import random_channel


def scalar_channel(h=1.0, lam=1.0):
    return ChannelRealization(
        L=1, K=1, N=1, M=1,
        H=np.full((1, 1, 1, 1), h, dtype=complex),
        Lam=np.full((1, 1, 1), lam, dtype=complex),
        bandwidth_hz=1e7,
    )


def make_sets(ch, V, Q, P=None):
    P = np.einsum("kmd,kmd->k", V, V.conj()).real + 1e-9 if P is None else P
    return BeamformerSet(np.asarray(V, complex), P), QuantCovSet(np.asarray(Q, complex))


def scheme_for(ch, receiver="mmse", compression="su", c=10.0, weights=None):
    w = np.ones(ch.K) if weights is None else np.asarray(weights, float)
    return SchemeConfig(receiver=receiver, compression=compression, weights=w,
                        fronthaul_bits=np.full(ch.L, float(c)))


class TestUserRates:
    def test_scalar_link(self):
        # h = 1, P = 1, noise 1, quantization noise 1: log2(1 + 1/2)
        ch = scalar_channel()
        V, Q = make_sets(ch, np.ones((1, 1, 1)), np.ones((1, 1, 1)))
        r = user_rates(ch, V, Q, scheme_for(ch))
        assert r[0] == pytest.approx(np.log2(1.5), abs=1e-12)

    def test_sic_structure_two_users(self):
        # equal scalar channels; earlier-decoded user sees the other as
        # interference, the later-decoded one is interference-free
        ch = ChannelRealization(
            L=1, K=2, N=1, M=1, H=np.ones((1, 2, 1, 1), dtype=complex),
            Lam=np.ones((1, 1, 1), dtype=complex), bandwidth_hz=1e7,
        )
        V = np.ones((2, 1, 1), dtype=complex)
        Q = np.ones((1, 1, 1), dtype=complex)
        Vs, Qs = make_sets(ch, V, Q)
        sch = scheme_for(ch, receiver="sic", weights=[1.0, 2.0])
        r = user_rates(ch, Vs, Qs, sch)
        assert r[0] == pytest.approx(np.log2(1 + 1.0 / 3.0), abs=1e-12)
        assert r[1] == pytest.approx(np.log2(1 + 1.0 / 2.0), abs=1e-12)

    def test_sic_telescoping_identity(self):
        # equal weights: sum rate equals log2|HKH'+Lam+Q| - log2|Lam+Q|
        for seed in range(100):
            ch = random_channel(2, 3, 2, 2, seed=seed)
            rng = np.random.default_rng(seed + 999)
            V = rng.standard_normal((3, 2, 1)) + 1j * rng.standard_normal((3, 2, 1))
            Q = np.stack([np.eye(2, dtype=complex)] * 2) * 0.5
            Vs, Qs = make_sets(ch, V, Q)
            sch = scheme_for(ch, receiver="sic")
            total = user_rates(ch, Vs, Qs, sch).sum()
            Hs = ch.stacked()
            sig = np.einsum("knm,kmd->knd", Hs, V)
            cov = ch.noise_blockdiag()
            for ell in range(2):
                cov[ell * 2:(ell + 1) * 2, ell * 2:(ell + 1) * 2] += Q[ell]
            full = cov + np.einsum("knd,kjd->nj", sig, sig.conj())
            expected = logdet2(full) - logdet2(cov)
            assert total == pytest.approx(expected, abs=1e-9)

    def test_rates_nonincreasing_in_q(self):
        for seed in range(20):
            ch = random_channel(2, 2, 2, 2, seed=seed)
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
            Q = np.stack([np.eye(2, dtype=complex)] * 2)
            bump = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            bump = bump @ bump.conj().T / 4
            Q2 = Q + np.stack([bump, bump])
            Vs, _ = make_sets(ch, V, Q)
            sch = scheme_for(ch)
            r1 = user_rates(ch, Vs, QuantCovSet(Q), sch)
            r2 = user_rates(ch, Vs, QuantCovSet(Q2), sch)
            assert np.all(r2 <= r1 + 1e-12)
            assert np.all(r1 >= 0)

    def test_sic_dominates_mmse(self):
        for seed in range(20):
            ch = random_channel(2, 3, 2, 2, seed=seed)
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((3, 2, 1)) + 1j * rng.standard_normal((3, 2, 1))
            Q = np.stack([np.eye(2, dtype=complex)] * 2)
            Vs, Qs = make_sets(ch, V, Q)
            r_mmse = user_rates(ch, Vs, Qs, scheme_for(ch, receiver="mmse"))
            r_sic = user_rates(ch, Vs, Qs, scheme_for(ch, receiver="sic"))
            assert r_sic.sum() >= r_mmse.sum() - 1e-12
            last = scheme_for(ch, receiver="sic").sic_order()[-1]
            assert r_sic[last] >= r_mmse[last] - 1e-12


class TestMmseReceiver:
    def test_scalar_no_interference(self):
        # h = V = 1 and total noise Lam + Q = 1: the error-minimizing
        # receiver is h p / (p|h|^2 + noise) = 1/2
        ch = scalar_channel(lam=0.5)
        V, Q = make_sets(ch, np.ones((1, 1, 1)), np.full((1, 1, 1), 0.5))
        u = mmse_receiver(ch, V, Q, 0)
        assert u[0, 0] == pytest.approx(0.5, abs=1e-9)

    def test_zero_beamformer(self):
        ch = random_channel(2, 2, 2, 2, seed=0)
        V = np.zeros((2, 2, 1), dtype=complex)
        Vs = BeamformerSet(V, np.ones(2))
        Qs = QuantCovSet(np.stack([np.eye(2, dtype=complex)] * 2))
        assert np.allclose(mmse_receiver(ch, Vs, Qs, 0), 0.0)

    def test_minimizes_error_covariance(self):
        # perturbation oracle: E at the receiver is minimal over 100 random
        # local directions
        rng = np.random.default_rng(5)
        ch = random_channel(2, 2, 2, 2, seed=11)
        V = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
        Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2))
        u = mmse_receiver(ch, Vs, Qs, 0)
        e0 = error_covariance(ch, Vs, Qs, 0, u)[0, 0].real
        for _ in range(100):
            du = rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)
            e1 = error_covariance(ch, Vs, Qs, 0, u + 1e-4 * du)[0, 0].real
            assert e1 >= e0 - 1e-15


class TestFronthaulUsage:
    def test_scalar_single_user(self):
        # received power 1, noise 1, q 1: log2(3)
        ch = scalar_channel()
        V, Q = make_sets(ch, np.ones((1, 1, 1)), np.ones((1, 1, 1)))
        assert fronthaul_usage_su(ch, V, Q, 0) == pytest.approx(
            np.log2(3.0), abs=1e-12
        )

    def test_zero_beamformer_q_equals_lam(self):
        ch = random_channel(2, 2, 2, 2, seed=1)
        V = np.zeros((2, 2, 1), dtype=complex)
        Vs = BeamformerSet(V, np.ones(2))
        Qs = QuantCovSet(ch.Lam.copy())
        for ell in range(2):
            assert fronthaul_usage_su(ch, Vs, Qs, ell) == pytest.approx(
                ch.N, abs=1e-9
            )

    def test_large_q_limit(self):
        ch = scalar_channel()
        V, _ = make_sets(ch, np.ones((1, 1, 1)), np.ones((1, 1, 1)))
        usage = fronthaul_usage_su(ch, V, QuantCovSet(np.full((1, 1, 1), 1e9)), 0)
        assert usage < 1e-8

    def test_wz_first_position_equals_su(self):
        ch = random_channel(2, 2, 2, 2, seed=2)
        rng = np.random.default_rng(2)
        V = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
        Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2))
        order = DecompressionOrder(pi=(1, 0))
        assert fronthaul_usage_wz(ch, Vs, Qs, order, 0) == pytest.approx(
            fronthaul_usage_su(ch, Vs, Qs, 1), abs=1e-10
        )

    def test_wz_block_orthogonal_equals_su(self):
        # different users feed the two BSs, so the received signals are
        # independent and side information buys nothing
        ch = random_channel(2, 2, 2, 2, seed=3)
        ch.H[0, 1] = 0.0
        ch.H[1, 0] = 0.0
        rng = np.random.default_rng(3)
        V = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
        Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2))
        order = DecompressionOrder(pi=(0, 1))
        assert fronthaul_usage_wz(ch, Vs, Qs, order, 1) == pytest.approx(
            fronthaul_usage_su(ch, Vs, Qs, 1), abs=1e-9
        )

    def test_wz_chain_rule_identity(self):
        for seed in range(100):
            ch = random_channel(2, 2, 2, 1, seed=seed)
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((2, 1, 1)) + 1j * rng.standard_normal((2, 1, 1))
            Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2) * 0.7)
            order = DecompressionOrder(pi=(1, 0))
            total = sum(fronthaul_usage_wz(ch, Vs, Qs, order, p) for p in range(2))
            sig = np.einsum("knm,kmd->knd", ch.stacked(), V.astype(complex))
            cov = ch.noise_blockdiag()
            for ell in range(2):
                cov[ell * 2:(ell + 1) * 2, ell * 2:(ell + 1) * 2] += Qs.Q[ell]
            full = cov + np.einsum("knd,kjd->nj", sig, sig.conj())
            expected = logdet2(full) - sum(logdet2(Qs.Q[ell]) for ell in range(2))
            assert total == pytest.approx(expected, abs=1e-9)

    def test_wz_never_exceeds_su_total(self):
        for seed in range(100):
            ch = random_channel(2, 3, 2, 2, seed=seed)
            rng = np.random.default_rng(seed + 1)
            V = rng.standard_normal((3, 2, 1)) + 1j * rng.standard_normal((3, 2, 1))
            Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2))
            order = DecompressionOrder(pi=(0, 1))
            wz = sum(fronthaul_usage_wz(ch, Vs, Qs, order, p) for p in range(2))
            su = sum(fronthaul_usage_su(ch, Vs, Qs, ell) for ell in range(2))
            assert wz <= su + 1e-9

    def test_receive_beamforming_equivalence(self):
        # quantizing with covariance Q equals rotating by its eigenbasis and
        # quantizing with the diagonal spectrum (unitary invariance)
        for seed in range(100):
            ch = random_channel(1, 2, 2, 2, seed=seed)
            rng = np.random.default_rng(seed + 7)
            V = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
            A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            Q0 = A @ A.conj().T / 2 + 0.1 * np.eye(2)
            Vs, _ = make_sets(ch, V, Q0[None])
            phi, B = eigh(Q0)
            usage = fronthaul_usage_su(ch, Vs, QuantCovSet(Q0[None]), 0)
            ch_rot = ChannelRealization(
                L=1, K=2, N=2, M=2,
                H=np.einsum("ij,kjm->kim", B.conj().T, ch.H[0])[None],
                Lam=(B.conj().T @ ch.Lam[0] @ B)[None],
                bandwidth_hz=ch.bandwidth_hz,
            )
            usage_rot = fronthaul_usage_su(
                ch_rot, Vs, QuantCovSet(np.diag(phi)[None].astype(complex)), 0
            )
            assert usage == pytest.approx(usage_rot, abs=1e-9)


class TestCutset:
    def test_zero_beamformer(self):
        ch = random_channel(2, 2, 2, 2, seed=0)
        Vs = BeamformerSet(np.zeros((2, 2, 1), dtype=complex), np.ones(2))
        assert cutset_bound(ch, Vs) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_unit_snr(self):
        ch = scalar_channel()
        Vs, _ = make_sets(ch, np.ones((1, 1, 1)), np.ones((1, 1, 1)))
        assert cutset_bound(ch, Vs) == pytest.approx(1.0, abs=1e-12)

    def test_bounds_sic_sum_rate(self):
        for seed in range(20):
            ch = random_channel(2, 3, 2, 2, seed=seed)
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((3, 2, 1)) + 1j * rng.standard_normal((3, 2, 1))
            Vs, Qs = make_sets(ch, V, np.stack([np.eye(2, dtype=complex)] * 2) * 0.3)
            total = user_rates(ch, Vs, Qs, scheme_for(ch, receiver="sic")).sum()
            assert total <= cutset_bound(ch, Vs) + 1e-9


class TestSchemeConfig:
    def test_sic_order_ascending_weights_ties_by_index(self):
        sch = SchemeConfig(receiver="sic", compression="su",
                           weights=np.array([2.0, 1.0, 2.0, 0.5]),
                           fronthaul_bits=np.ones(1))
        assert sch.sic_order() == (3, 1, 0, 2)

    def test_order_override(self):
        sch = SchemeConfig(receiver="sic", compression="su",
                           weights=np.ones(3), fronthaul_bits=np.ones(1),
                           decode_order=(2, 0, 1))
        assert sch.sic_order() == (2, 0, 1)

    def test_rejects_bad_receiver(self):
        with pytest.raises(ValueError):
            SchemeConfig(receiver="zf", compression="su", weights=np.ones(1),
                         fronthaul_bits=np.ones(1))

    def test_beamformer_power_validation(self):
        with pytest.raises(ValueError):
            BeamformerSet(np.ones((1, 1, 1), dtype=complex) * 2.0, np.array([1.0]))

    def test_violation_helper(self):
        ch = scalar_channel()
        Vs, Qs = make_sets(ch, np.ones((1, 1, 1)), np.ones((1, 1, 1)))
        sch = scheme_for(ch, c=np.log2(3.0))
        assert fronthaul_violation(ch, Vs, Qs, sch) == pytest.approx(0.0, abs=1e-9)
        assert weighted_sum_rate(ch, Vs, Qs, sch) == pytest.approx(
            np.log2(1.5), abs=1e-12
        )
