import numpy as np
import pytest

from cranopt.network import ChannelRealization


def random_channel(L, K, N, M, seed, gain_spread_db=15.0, noise=1.0,
                   bandwidth_hz=1e7):
    """Random flat-fading instance with per-link gains spread over some dB."""
    rng = np.random.default_rng(seed)
    gains = 10 ** (-rng.uniform(0, gain_spread_db, size=(L, K)) / 10)
    H = rng.standard_normal((L, K, N, M)) + 1j * rng.standard_normal((L, K, N, M))
    H *= np.sqrt(gains / 2)[:, :, None, None]
    Lam = np.broadcast_to(noise * np.eye(N, dtype=complex), (L, N, N)).copy()
    return ChannelRealization(L=L, K=K, N=N, M=M, H=H, Lam=Lam,
                              bandwidth_hz=bandwidth_hz)


def random_psd(n, seed, scale=1.0, jitter=0.1):
    """Well-conditioned random Hermitian positive definite matrix."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (A @ A.conj().T / n + jitter * np.eye(n))


def random_feasible_point(ch, c_bits, power_mw, seed, power_frac=0.5):
    """A (V, Q) pair strictly inside the single-user fronthaul constraints."""
    rng = np.random.default_rng(seed)
    K, M = ch.K, ch.M
    V = np.zeros((K, M, 1), dtype=complex)
    for k in range(K):
        v = rng.standard_normal((M, 1)) + 1j * rng.standard_normal((M, 1))
        V[k] = np.sqrt(power_frac * power_mw[k]) * v / np.linalg.norm(v)
    # generous quantization noise keeps every usage far below the budget
    rx = np.zeros(ch.L)
    for ell in range(ch.L):
        sig = np.einsum("knm,kmd->knd", ch.H[ell], V)
        rx[ell] = np.einsum("knd,knd->", sig, sig.conj()).real
    lam0 = ch.Lam[0, 0, 0].real
    q0 = max(rx.max() + lam0, lam0) / (2 ** (min(c_bits) / ch.N / 2) - 1 + 1e-9)
    Q = np.stack([q0 * np.eye(ch.N, dtype=complex)] * ch.L)
    return V, Q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
